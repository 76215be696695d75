//! Seeded Monte Carlo simulation of the single-period Kyle economy.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). A run of `N` samples is
//! split into `min(100, N)` contiguous batches; batch `b` draws from the
//! generator seeded with the run seed and switched to stream `b`. Batches are
//! evaluated in parallel and merged in batch order, so results depend only on
//! the seed and never on the number of threads. The batches double as the
//! unit for standard errors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{Equilibrium, ModelParams, Utilities};
use crate::error::{Error, Result};
use crate::estimators::CovarianceTriple;
use crate::linalg::{self, SymMatrix};
use crate::parallel;

/// Name of the pseudo-random generator backing every simulation.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Number of batches used for parallel work and standard errors.
pub const BATCHES: usize = 100;

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn batch_ranges(n_samples: usize) -> Vec<(usize, usize)> {
    let batches = BATCHES.min(n_samples).max(1);
    (0..batches)
        .map(|b| (b * n_samples / batches, (b + 1) * n_samples / batches))
        .collect()
}

/// Row-major dense matrix-vector product `out = a · x`.
fn matvec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Draws from `N(mean, cov)` using the symmetric square root of `cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    transform: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(mean: &DVector<f64>, cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::dims(cov.dim(), mean.len()));
        }
        let root = linalg::spd_sqrt(cov)?;
        Ok(GaussianSampler {
            mean: mean.as_slice().to_vec(),
            transform: row_major(&root),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fills `out` with one draw, using `scratch` for the standard normals.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        for z in scratch.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        matvec(&self.transform, scratch, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }
}

/// `count` draws from `N(mean, cov)`, one per row.
pub fn gaussian_sampler(
    mean: &DVector<f64>,
    cov: &SymMatrix,
    seed: u64,
    count: usize,
) -> Result<DMatrix<f64>> {
    let sampler = GaussianSampler::new(mean, cov)?;
    let n = sampler.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = vec![0.0; n];
    let mut row = vec![0.0; n];
    let mut out = DMatrix::zeros(count, n);
    for t in 0..count {
        sampler.sample_into(&mut rng, &mut scratch, &mut row);
        for j in 0..n {
            out[(t, j)] = row[j];
        }
    }
    Ok(out)
}

/// One realisation of the economy.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomySample {
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub p: DVector<f64>,
    pub u_it: f64,
    pub u_nt: f64,
    pub u_mm: f64,
}

/// Pricing rule posted by the market maker and the informed trader's reply.
struct Rule {
    n: usize,
    p0: Vec<f64>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    /// `None` means the informed trader stays out (`x = 0`).
    it_gain: Option<Vec<f64>>,
    fundamental: GaussianSampler,
    noise: GaussianSampler,
}

/// Scratch space and the current draw.
struct Draw {
    z: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    u: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    utilities: [f64; 3],
}

impl Draw {
    fn new(n: usize) -> Self {
        Draw {
            z: vec![0.0; n],
            v: vec![0.0; n],
            dv: vec![0.0; n],
            u: vec![0.0; n],
            x: vec![0.0; n],
            y: vec![0.0; n],
            p: vec![0.0; n],
            dp: vec![0.0; n],
            utilities: [0.0; 3],
        }
    }
}

impl Rule {
    fn draw(&self, rng: &mut ChaCha8Rng, d: &mut Draw) {
        let n = self.n;
        self.fundamental.sample_into(rng, &mut d.z, &mut d.v);
        self.noise.sample_into(rng, &mut d.z, &mut d.u);
        match &self.it_gain {
            Some(gain) => {
                for i in 0..n {
                    d.dv[i] = d.v[i] - self.mu[i];
                }
                matvec(gain, &d.dv, &mut d.x);
            }
            None => d.x.iter_mut().for_each(|x| *x = 0.0),
        }
        for i in 0..n {
            d.y[i] = d.x[i] + d.u[i];
        }
        matvec(&self.lambda, &d.y, &mut d.p);
        let (mut it, mut nt, mut mm) = (0.0, 0.0, 0.0);
        for i in 0..n {
            d.p[i] += self.mu[i];
            d.dp[i] = d.p[i] - self.p0[i];
            d.dv[i] = d.v[i] - self.p0[i];
            let gap = d.v[i] - d.p[i];
            it += d.x[i] * gap;
            nt += d.u[i] * gap;
            mm -= d.y[i] * gap;
        }
        d.utilities = [it, nt, mm];
    }

    fn run_batch(&self, seed: u64, batch: usize, len: usize, mut visit: impl FnMut(&Draw)) {
        let mut rng = batch_rng(seed, batch);
        let mut d = Draw::new(self.n);
        for _ in 0..len {
            self.draw(&mut rng, &mut d);
            visit(&d);
        }
    }
}

/// Layout of the stacked observation vector `[Δv, x, y, Δp]`.
const BLOCKS: usize = 4;
const DV: usize = 0;
const X: usize = 1;
const Y: usize = 2;
const DP: usize = 3;

#[derive(Debug, Clone)]
struct Accumulator {
    n: usize,
    count: usize,
    sum: Vec<f64>,
    outer: Vec<f64>,
    utilities: [f64; 3],
    stacked: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        let m = BLOCKS * n;
        Accumulator {
            n,
            count: 0,
            sum: vec![0.0; m],
            outer: vec![0.0; m * m],
            utilities: [0.0; 3],
            stacked: vec![0.0; m],
        }
    }

    fn push(&mut self, d: &Draw) {
        let n = self.n;
        let m = BLOCKS * n;
        self.stacked[DV * n..(DV + 1) * n].copy_from_slice(&d.dv);
        self.stacked[X * n..(X + 1) * n].copy_from_slice(&d.x);
        self.stacked[Y * n..(Y + 1) * n].copy_from_slice(&d.y);
        self.stacked[DP * n..(DP + 1) * n].copy_from_slice(&d.dp);
        for i in 0..m {
            let zi = self.stacked[i];
            self.sum[i] += zi;
            let row = &mut self.outer[i * m..(i + 1) * m];
            for (o, zj) in row[i..].iter_mut().zip(&self.stacked[i..]) {
                *o += zi * zj;
            }
        }
        for k in 0..3 {
            self.utilities[k] += d.utilities[k];
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.outer.iter_mut().zip(&other.outer).for_each(|(a, b)| *a += b);
        for k in 0..3 {
            self.utilities[k] += other.utilities[k];
        }
    }

    fn mean(&self, block: usize) -> DVector<f64> {
        let n = self.n;
        let c = self.count as f64;
        DVector::from_fn(n, |i, _| self.sum[block * n + i] / c)
    }

    /// Covariance between two blocks with divisor `count`.
    fn cov(&self, a: usize, b: usize) -> DMatrix<f64> {
        let n = self.n;
        let m = BLOCKS * n;
        let c = self.count as f64;
        DMatrix::from_fn(n, n, |i, j| {
            let (r, s) = (a * n + i, b * n + j);
            let raw = if r <= s { self.outer[r * m + s] } else { self.outer[s * m + r] };
            raw / c - (self.sum[r] / c) * (self.sum[s] / c)
        })
    }

    fn mean_utilities(&self) -> [f64; 3] {
        let c = self.count as f64;
        self.utilities.map(|u| u / c)
    }
}

/// Entrywise batch standard errors of the moment estimates.
#[derive(Debug, Clone)]
pub struct MomentErrors {
    pub sigma_hat: DMatrix<f64>,
    pub omega_d_hat: DMatrix<f64>,
    pub response_hat: DMatrix<f64>,
    pub response_v_hat: DMatrix<f64>,
    pub bare_response_hat: DMatrix<f64>,
    pub bare_omega_hat: DMatrix<f64>,
}

/// Empirical moments of a simulated run. Covariances use divisor `N`.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub n_samples: usize,
    pub mean_dp: DVector<f64>,
    pub mean_y: DVector<f64>,
    /// `Σ̂ = C[p, p]`
    pub sigma_hat: SymMatrix,
    /// `Ω̂ᵈ = C[y, y]`
    pub omega_d_hat: SymMatrix,
    /// `R̂ᵈ = C[p, y]`
    pub response_hat: DMatrix<f64>,
    /// `R̂ᵈ_v = C[v, y]`
    pub response_v_hat: DMatrix<f64>,
    /// `R̂ = C[p, x]`
    pub bare_response_hat: DMatrix<f64>,
    /// `C[x, x]`
    pub bare_omega_hat: SymMatrix,
    pub standard_errors: MomentErrors,
}

impl EmpiricalMoments {
    /// The calibration input `(Σ̂, Ω̂ᵈ, R̂ᵈ)` seen by an outside observer.
    pub fn to_triple(&self, labels: Vec<String>) -> Result<CovarianceTriple> {
        CovarianceTriple::new(
            self.sigma_hat.clone(),
            self.omega_d_hat.clone(),
            self.response_hat.clone(),
            labels,
        )
    }
}

/// Sample means of the realised utilities with their batch standard errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UtilityEstimates {
    pub mean: Utilities,
    pub standard_error: Utilities,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub moments: EmpiricalMoments,
    pub utilities: UtilityEstimates,
}

fn entrywise_se(batches: &[DMatrix<f64>]) -> DMatrix<f64> {
    let b = batches.len() as f64;
    let (r, c) = batches[0].shape();
    if batches.len() < 2 {
        return DMatrix::zeros(r, c);
    }
    DMatrix::from_fn(r, c, |i, j| {
        let mean = batches.iter().map(|m| m[(i, j)]).sum::<f64>() / b;
        let var = batches.iter().map(|m| (m[(i, j)] - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (var / b).sqrt()
    })
}

fn scalar_se(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

fn summarize(batches: &[Accumulator]) -> SimulationReport {
    let n = batches[0].n;
    let mut total = Accumulator::new(n);
    for b in batches {
        total.merge(b);
    }
    let pick = |a: usize, b: usize| -> Vec<DMatrix<f64>> { batches.iter().map(|acc| acc.cov(a, b)).collect() };
    let standard_errors = MomentErrors {
        sigma_hat: entrywise_se(&pick(DP, DP)),
        omega_d_hat: entrywise_se(&pick(Y, Y)),
        response_hat: entrywise_se(&pick(DP, Y)),
        response_v_hat: entrywise_se(&pick(DV, Y)),
        bare_response_hat: entrywise_se(&pick(DP, X)),
        bare_omega_hat: entrywise_se(&pick(X, X)),
    };
    let moments = EmpiricalMoments {
        n_samples: total.count,
        mean_dp: total.mean(DP),
        mean_y: total.mean(Y),
        sigma_hat: SymMatrix::symmetrize(total.cov(DP, DP)),
        omega_d_hat: SymMatrix::symmetrize(total.cov(Y, Y)),
        response_hat: total.cov(DP, Y),
        response_v_hat: total.cov(DV, Y),
        bare_response_hat: total.cov(DP, X),
        bare_omega_hat: SymMatrix::symmetrize(total.cov(X, X)),
        standard_errors,
    };
    let means = total.mean_utilities();
    let per_batch: Vec<[f64; 3]> = batches.iter().map(|b| b.mean_utilities()).collect();
    let se = |k: usize| scalar_se(&per_batch.iter().map(|u| u[k]).collect::<Vec<_>>());
    let utilities = UtilityEstimates {
        mean: Utilities {
            informed: means[0],
            noise: means[1],
            market_maker: means[2],
        },
        standard_error: Utilities {
            informed: se(0),
            noise: se(1),
            market_maker: se(2),
        },
    };
    SimulationReport { moments, utilities }
}

fn build_rule(
    params: &ModelParams,
    lambda: &DMatrix<f64>,
    mu: &DVector<f64>,
    it_gain: Option<DMatrix<f64>>,
) -> Result<Rule> {
    let n = params.dim();
    if lambda.shape() != (n, n) {
        return Err(Error::dims(
            format!("{n}x{n} pricing matrix"),
            format!("{}x{}", lambda.nrows(), lambda.ncols()),
        ));
    }
    if mu.len() != n {
        return Err(Error::dims(n, mu.len()));
    }
    Ok(Rule {
        n,
        p0: params.p0().as_slice().to_vec(),
        mu: mu.as_slice().to_vec(),
        lambda: row_major(lambda),
        it_gain: it_gain.as_ref().map(row_major),
        fundamental: GaussianSampler::new(params.p0(), params.sigma0())?,
        noise: GaussianSampler::new(&DVector::zeros(n), params.omega())?,
    })
}

fn run(rule: &Rule, n_samples: usize, seed: u64) -> Result<SimulationReport> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            found: n_samples,
        });
    }
    let ranges = batch_ranges(n_samples);
    let batches: Vec<Accumulator> = parallel::install(|| {
        ranges
            .par_iter()
            .enumerate()
            .map(|(b, &(start, end))| {
                let mut acc = Accumulator::new(rule.n);
                rule.run_batch(seed, b, end - start, |d| acc.push(d));
                acc
            })
            .collect()
    });
    Ok(summarize(&batches))
}

fn equilibrium_rule(params: &ModelParams, eq: &Equilibrium) -> Result<Rule> {
    build_rule(params, eq.lambda.as_matrix(), &eq.mu, Some(eq.it_gain.as_matrix().clone()))
}

/// Simulates the economy at the given equilibrium and returns its moments.
pub fn simulate(params: &ModelParams, eq: &Equilibrium, n_samples: usize, seed: u64) -> Result<EmpiricalMoments> {
    Ok(simulate_report(params, eq, n_samples, seed)?.moments)
}

/// Like [`simulate`], also returning realised utility averages.
pub fn simulate_report(
    params: &ModelParams,
    eq: &Equilibrium,
    n_samples: usize,
    seed: u64,
) -> Result<SimulationReport> {
    run(&equilibrium_rule(params, eq)?, n_samples, seed)
}

/// Simulates with an arbitrary pricing rule `p = μ + Λ y`.
///
/// With `it_best_response` the informed trader plays `x = ½ Λ_S⁻¹ (v − μ)`,
/// where `Λ_S` is the symmetric part of `Λ`; otherwise `x = 0`.
pub fn simulate_with_mm_rule(
    params: &ModelParams,
    lambda_mm: &DMatrix<f64>,
    mu_mm: &DVector<f64>,
    it_best_response: bool,
    n_samples: usize,
    seed: u64,
) -> Result<SimulationReport> {
    let gain = if it_best_response {
        if !lambda_mm.is_square() {
            return Err(Error::dims("square pricing matrix", format!("{}x{}", lambda_mm.nrows(), lambda_mm.ncols())));
        }
        let sym_part = SymMatrix::new((lambda_mm + lambda_mm.transpose()) * 0.5)?;
        let eig = sym_part.eigen()?;
        if !(eig.min() > 0.0) {
            return Err(Error::NotPd {
                min_eigenvalue: eig.min(),
            });
        }
        Some(eig.map(|v| 0.5 / v).into_inner())
    } else {
        None
    };
    run(&build_rule(params, lambda_mm, mu_mm, gain)?, n_samples, seed)
}

/// The raw samples behind [`simulate`], in the same order and with the same
/// random draws.
pub fn simulate_samples(
    params: &ModelParams,
    eq: &Equilibrium,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<EconomySample>> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            found: n_samples,
        });
    }
    let rule = equilibrium_rule(params, eq)?;
    let mut out = Vec::with_capacity(n_samples);
    for (b, &(start, end)) in batch_ranges(n_samples).iter().enumerate() {
        rule.run_batch(seed, b, end - start, |d| {
            out.push(EconomySample {
                v: DVector::from_column_slice(&d.v),
                u: DVector::from_column_slice(&d.u),
                x: DVector::from_column_slice(&d.x),
                y: DVector::from_column_slice(&d.y),
                p: DVector::from_column_slice(&d.p),
                u_it: d.utilities[0],
                u_nt: d.utilities[1],
                u_mm: d.utilities[2],
            })
        });
    }
    Ok(out)
}
