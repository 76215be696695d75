//! Synthetic two-asset covariance triples and parameter sweeps.
//!
//! A base triple is first normalized into the unit-diagonal block covariance
//! of the stacked vector `(Δp, y)`:
//!
//! ```text
//! C = D⁻¹ [[Σ̂, R̂ᵈ], [R̂ᵈᵀ, Ω̂ᵈ]] D⁻¹,   D = diag(√⟨Δp₁²⟩, …, √⟨y_n²⟩)
//! ```
//!
//! Two congruence transforms then fabricate new pairs from it:
//!
//! - liquidity: `T = diag(1, 1, 1, √ε)` makes the second asset `ε` times as
//!   liquid while leaving the price covariance unchanged;
//! - correlation: `blockdiag(A, A)` with
//!   `A = ½ H diag(√((1+ρ)/(1+r)), √((1−ρ)/(1−r))) H`, `H = [[1, 1], [1, −1]]`,
//!   sets the return correlation from `r` to `ρ`.
//!
//! Both preserve positive semi-definiteness. A sweep fabricates one triple per
//! (grid point, base), fits every estimator and aggregates the diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::estimators::{self, CovarianceTriple, LossConfig, Method, Warning};
use crate::linalg::SymMatrix;
use crate::parallel;

/// Unit-diagonal block covariance `[[Σ̂, R̂ᵈ], [R̂ᵈᵀ, Ω̂ᵈ]]` of `n` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    c: SymMatrix,
    n: usize,
    scales: Vec<f64>,
    labels: Vec<String>,
}

impl BlockCovariance {
    /// Wraps an already normalized `2n × 2n` block matrix. The diagonal must
    /// be 1 within `1e-12`.
    pub fn new(c: SymMatrix, labels: Vec<String>) -> Result<Self> {
        let dim = c.dim();
        if !dim.is_multiple_of(2) {
            return Err(Error::dims("even block dimension", dim));
        }
        let n = dim / 2;
        if let Some(i) = (0..dim).find(|&i| (c[(i, i)] - 1.0).abs() > 1e-12) {
            return Err(Error::Domain(format!(
                "block diagonal entry {i} is {} (expected 1)",
                c[(i, i)]
            )));
        }
        let labels = if labels.is_empty() {
            (0..n).map(|i| format!("asset_{i}")).collect()
        } else if labels.len() == n {
            labels
        } else {
            return Err(Error::dims(format!("{n} labels"), labels.len()));
        };
        Ok(BlockCovariance {
            c,
            n,
            scales: vec![1.0; dim],
            labels,
        })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.c
    }

    /// Number of assets `n`; the block matrix is `2n × 2n`.
    pub fn assets(&self) -> usize {
        self.n
    }

    /// Diagonal of `D` used to normalize the raw triple.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Splits the block matrix back into `(Σ̂, Ω̂ᵈ, R̂ᵈ)`.
    pub fn to_triple(&self) -> CovarianceTriple {
        split_block(&self.c, self.n, self.labels.clone())
    }

    /// Warning if `C` has a negative eigenvalue beyond rounding.
    pub fn psd_warning(&self) -> Result<Option<Warning>> {
        let eig = self.c.eigen()?;
        Ok((eig.min() < -eig.psd_tolerance()).then(|| Warning::BlockNotPsd {
            min_eigenvalue: eig.min(),
        }))
    }

    fn require_pair(&self) -> Result<()> {
        if self.n != 2 {
            return Err(Error::dims("2 assets", self.n));
        }
        Ok(())
    }

    /// Return correlation `r = Σ̂₁₂` of a pair.
    pub fn return_correlation(&self) -> Result<f64> {
        self.require_pair()?;
        Ok(self.c[(0, 1)])
    }
}

fn split_block(c: &DMatrix<f64>, n: usize, labels: Vec<String>) -> CovarianceTriple {
    let sigma = SymMatrix::symmetrize(c.view((0, 0), (n, n)).into_owned());
    let omega = SymMatrix::symmetrize(c.view((n, n), (n, n)).into_owned());
    let response = c.view((0, n), (n, n)).into_owned();
    CovarianceTriple::new(sigma, omega, response, labels).expect("blocks of a valid matrix are consistent")
}

/// `C = D⁻¹ · block(triple) · D⁻¹`. The diagonal is set to exactly 1, which
/// makes normalization idempotent bit for bit.
pub fn normalize_to_block(triple: &CovarianceTriple) -> Result<BlockCovariance> {
    let raw = triple.block_matrix();
    let dim = raw.dim();
    let mut scales = Vec::with_capacity(dim);
    for i in 0..dim {
        let v = raw[(i, i)];
        if !(v > 0.0) {
            return Err(Error::ZeroVariance { index: i });
        }
        scales.push(v.sqrt());
    }
    let mut c = DMatrix::from_fn(dim, dim, |i, j| raw[(i, j)] / (scales[i] * scales[j]));
    for i in 0..dim {
        c[(i, i)] = 1.0;
    }
    Ok(BlockCovariance {
        c: SymMatrix::symmetrize(c),
        n: triple.dim(),
        scales,
        labels: triple.labels.clone(),
    })
}

fn fabricate(block: &BlockCovariance, t: &DMatrix<f64>) -> Result<CovarianceTriple> {
    let c = block.c.congruence(t)?;
    Ok(split_block(&c, block.n, block.labels.clone()))
}

/// Rescales the second asset's volume so that its volume variance becomes
/// `ε` (`T = diag(1, 1, 1, √ε)`).
pub fn fabricate_liquidity(block: &BlockCovariance, epsilon: f64) -> Result<CovarianceTriple> {
    block.require_pair()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("liquidity epsilon must be positive, got {epsilon}")));
    }
    let t = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, 1.0, 1.0, epsilon.sqrt()]));
    fabricate(block, &t)
}

/// The symmetric `A` mapping a unit-diagonal correlation `r` to `ρ`.
pub fn correlation_transform(r: f64, rho: f64) -> Result<DMatrix<f64>> {
    if !(r.abs() < 1.0) {
        return Err(Error::Domain(format!("base correlation must lie in (-1, 1), got {r}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("target correlation must lie in (-1, 1), got {rho}")));
    }
    let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[
        ((1.0 + rho) / (1.0 + r)).sqrt(),
        ((1.0 - rho) / (1.0 - r)).sqrt(),
    ]));
    Ok(0.5 * &h * d * h)
}

/// Applies `blockdiag(A, A)` so that the return correlation becomes `ρ`.
pub fn fabricate_correlation(block: &BlockCovariance, rho: f64) -> Result<CovarianceTriple> {
    let r = block.return_correlation()?;
    let a = correlation_transform(r, rho)?;
    let mut t = DMatrix::zeros(4, 4);
    t.view_mut((0, 0), (2, 2)).copy_from(&a);
    t.view_mut((2, 2), (2, 2)).copy_from(&a);
    fabricate(block, &t)
}

/// Smallest eigenvalue floor used when projecting random blocks onto the PSD cone.
const RANDOM_BASE_EIGEN_FLOOR: f64 = 1e-3;

/// Random two-asset base blocks: off-diagonal correlations uniform in
/// `[0.2, 0.9]`, projected onto the PSD cone by flooring eigenvalues and
/// renormalized to a unit diagonal.
pub fn random_bases(count: usize, seed: u64) -> Result<Vec<BlockCovariance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut m = DMatrix::identity(4, 4);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let v = rng.random_range(0.2..=0.9);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let projected = SymMatrix::symmetrize(m).eigen()?.map(|v| v.max(RANDOM_BASE_EIGEN_FLOOR));
            let triple = split_block(&projected, 2, Vec::new());
            normalize_to_block(&triple)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Liquidity,
    Correlation,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Liquidity => "liquidity",
            SweepKind::Correlation => "correlation",
        }
    }

    /// Evenly spaced grid over `[0.01, 1]` (liquidity) or `[0, 0.99]`
    /// (correlation); the singular endpoints are excluded.
    pub fn default_grid(self, points: usize) -> Vec<f64> {
        match self {
            SweepKind::Liquidity => linspace(0.01, 1.0, points),
            SweepKind::Correlation => linspace(0.0, 0.99, points),
        }
    }

    fn check(self, value: f64) -> Result<()> {
        let ok = match self {
            SweepKind::Liquidity => value > 0.0 && value <= 1.0,
            SweepKind::Correlation => value.abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{} grid value {value} is out of range", self.name())))
        }
    }

    fn fabricate(self, block: &BlockCovariance, value: f64) -> Result<CovarianceTriple> {
        match self {
            SweepKind::Liquidity => fabricate_liquidity(block, value),
            SweepKind::Correlation => fabricate_correlation(block, value),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liquidity" | "epsilon" => Ok(SweepKind::Liquidity),
            "correlation" | "rho" => Ok(SweepKind::Correlation),
            other => Err(Error::Domain(format!("unknown sweep kind '{other}'"))),
        }
    }
}

/// `count` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { end } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Parses `start:end:count` into an inclusive linear grid, or a
/// comma-separated list of values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: &str| Error::Domain(format!("invalid grid '{spec}': {msg}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, end, count] => {
            let count: usize = count.trim().parse().map_err(|_| bad("count must be a positive integer"))?;
            if count == 0 {
                return Err(bad("count must be positive"));
            }
            Ok(linspace(num(start)?, num(end)?, count))
        }
        [single] => single.split(',').map(num).collect(),
        _ => Err(bad("expected start:end:count")),
    }
}

/// The four diagnostics, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Chi2,
    Kappa,
    LambdaStar,
    Alpha,
}

impl Observable {
    pub const ALL: [Observable; 4] = [Observable::Chi2, Observable::Kappa, Observable::LambdaStar, Observable::Alpha];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Chi2 => "chi2",
            Observable::Kappa => "kappa",
            Observable::LambdaStar => "lambda_star",
            Observable::Alpha => "alpha",
        }
    }

    pub fn of(self, report: &DiagnosticsReport) -> f64 {
        match self {
            Observable::Chi2 => report.chi2,
            Observable::Kappa => report.commutator_kappa,
            Observable::LambdaStar => report.min_eig_lambda_star,
            Observable::Alpha => report.asymmetry_alpha,
        }
    }
}

/// Mean, min and max of one observable for one estimator along the grid.
/// Points where every base failed hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub method: Method,
    pub observable: Observable,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Number of bases contributing at each grid point.
    pub count: Vec<usize>,
}

/// A (grid point, base, estimator) combination that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGap {
    pub grid_index: usize,
    pub param: f64,
    pub base_index: usize,
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub n_bases: usize,
    /// Ordered by estimator (MLE, ELM, Kyle), then observable.
    pub curves: Vec<Curve>,
    pub gaps: Vec<SweepGap>,
}

impl SweepResult {
    pub fn curve(&self, method: Method, observable: Observable) -> Option<&Curve> {
        self.curves
            .iter()
            .find(|c| c.method == method && c.observable == observable)
    }

    /// Long-format CSV: `kind,param,method,observable,mean,min,max`, one row
    /// per grid point, estimator and observable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,param,method,observable,mean,min,max\n");
        for (g, param) in self.grid.iter().enumerate() {
            for c in &self.curves {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    self.kind,
                    crate::io::format_f64(*param),
                    c.method,
                    c.observable.name(),
                    crate::io::format_f64(c.mean[g]),
                    crate::io::format_f64(c.min[g]),
                    crate::io::format_f64(c.max[g]),
                ));
            }
        }
        out
    }
}

type PointOutcome = Vec<std::result::Result<DiagnosticsReport, String>>;

fn evaluate_point(kind: SweepKind, base: &BlockCovariance, value: f64, cfg: &LossConfig) -> Result<PointOutcome> {
    let triple = kind.fabricate(base, value)?;
    if let Some(Warning::BlockNotPsd { min_eigenvalue }) = triple.block_psd_warning()? {
        return Err(Error::NotPsd { min_eigenvalue });
    }
    Ok(Method::ALL
        .iter()
        .map(|&m| {
            estimators::fit(m, &triple, cfg, None)
                .and_then(|r| diagnostics::diagnose(&r, &triple, cfg))
                .map_err(|e| e.to_string())
        })
        .collect())
}

/// Runs a liquidity or correlation sweep over two-asset bases.
///
/// Estimator failures at individual points are recorded in
/// [`SweepResult::gaps`]. A fabricated block that is not PSD aborts the sweep,
/// since the transforms are congruences and that can only come from a
/// non-PSD base.
pub fn run_sweep(bases: &[BlockCovariance], kind: SweepKind, grid: &[f64], cfg: &LossConfig) -> Result<SweepResult> {
    if bases.is_empty() {
        return Err(Error::Domain("a sweep needs at least one base".into()));
    }
    if grid.is_empty() {
        return Err(Error::Domain("a sweep needs a non-empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("sweep grid must be strictly increasing".into()));
    }
    for &v in grid {
        kind.check(v)?;
    }
    for (i, b) in bases.iter().enumerate() {
        if b.assets() != 2 {
            return Err(Error::dims(format!("2-asset base at index {i}"), format!("{} assets", b.assets())));
        }
        if let Some(Warning::BlockNotPsd { min_eigenvalue }) = b.psd_warning()? {
            return Err(Error::NotPsd { min_eigenvalue });
        }
    }
    cfg.m_matrix
        .eigen()
        .and_then(|e| e.check_spd())
        .map_err(|e| Error::Domain(format!("loss matrix: {e}")))?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..bases.len()).map(move |b| (g, b)))
        .collect();
    let outcomes: Vec<Result<PointOutcome>> = parallel::install(|| {
        jobs.par_iter()
            .map(|&(g, b)| evaluate_point(kind, &bases[b], grid[g], cfg))
            .collect()
    });

    let mut curves: Vec<Curve> = Method::ALL
        .iter()
        .flat_map(|&method| {
            Observable::ALL.iter().map(move |&observable| Curve {
                method,
                observable,
                mean: vec![0.0; grid.len()],
                min: vec![f64::INFINITY; grid.len()],
                max: vec![f64::NEG_INFINITY; grid.len()],
                count: vec![0; grid.len()],
            })
        })
        .collect();
    let mut gaps = Vec::new();

    for (&(g, b), outcome) in jobs.iter().zip(outcomes) {
        let reports = outcome.map_err(|e| match e {
            Error::NotPsd { min_eigenvalue } => Error::SolverFailure(format!(
                "fabricated block for base {b} at {} = {} is not PSD (min eigenvalue {min_eigenvalue:e})",
                kind,
                grid[g]
            )),
            other => other,
        })?;
        for (mi, (method, report)) in Method::ALL.iter().zip(reports).enumerate() {
            match report {
                Ok(report) => {
                    for (oi, obs) in Observable::ALL.iter().enumerate() {
                        let c = &mut curves[mi * Observable::ALL.len() + oi];
                        let v = obs.of(&report);
                        c.mean[g] += v;
                        c.min[g] = c.min[g].min(v);
                        c.max[g] = c.max[g].max(v);
                        c.count[g] += 1;
                    }
                }
                Err(error) => gaps.push(SweepGap {
                    grid_index: g,
                    param: grid[g],
                    base_index: b,
                    method: *method,
                    error,
                }),
            }
        }
    }
    for c in &mut curves {
        for g in 0..grid.len() {
            if c.count[g] == 0 {
                c.mean[g] = f64::NAN;
                c.min[g] = f64::NAN;
                c.max[g] = f64::NAN;
            } else {
                c.mean[g] /= c.count[g] as f64;
            }
        }
    }

    Ok(SweepResult {
        kind,
        grid: grid.to_vec(),
        n_bases: bases.len(),
        curves,
        gaps,
    })
}
