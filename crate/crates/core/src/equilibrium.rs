//! Linear equilibrium of the single-period multivariate Kyle model.
//!
//! Given the fundamental price covariance `Σ₀` and the noise-trader volume
//! covariance `Ω`, the market maker's impact matrix is the unique symmetric
//! positive definite solution of `Λ Ω Λ = Σ₀ / 4`:
//!
//! ```text
//! Λ = ½ R⁻¹ √(R Σ₀ L) L⁻¹,   Ω = L R,  R = Lᵀ
//! ```
//!
//! The result does not depend on which factorization of `Ω` is used.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, factorize, FactorKind, SymMatrix};

/// Condition number of `Σ₀` above which the solver refuses to run.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest dimension accepted by [`verify_saddle_rejection`].
pub const MAX_SADDLE_DIM: usize = 12;

/// Ground-truth parameters of a Kyle economy.
#[derive(Debug, Clone)]
pub struct ModelParams {
    p0: DVector<f64>,
    sigma0: SymMatrix,
    omega: SymMatrix,
}

impl ModelParams {
    /// Validates dimensions and strict positive definiteness of `Σ₀` and `Ω`.
    pub fn new(p0: DVector<f64>, sigma0: SymMatrix, omega: SymMatrix) -> Result<Self> {
        let n = sigma0.dim();
        if omega.dim() != n {
            return Err(Error::dims(format!("omega {n}x{n}"), omega.dim()));
        }
        if p0.len() != n {
            return Err(Error::dims(format!("p0 of length {n}"), p0.len()));
        }
        if p0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("p0 has non-finite entries".into()));
        }
        linalg::check_spd(&sigma0)?;
        linalg::check_spd(&omega)?;
        Ok(ModelParams { p0, sigma0, omega })
    }

    /// Parameters with `p₀ = 0`.
    pub fn centered(sigma0: SymMatrix, omega: SymMatrix) -> Result<Self> {
        let n = sigma0.dim();
        Self::new(DVector::zeros(n), sigma0, omega)
    }

    pub fn dim(&self) -> usize {
        self.sigma0.dim()
    }

    pub fn p0(&self) -> &DVector<f64> {
        &self.p0
    }

    pub fn sigma0(&self) -> &SymMatrix {
        &self.sigma0
    }

    pub fn omega(&self) -> &SymMatrix {
        &self.omega
    }
}

/// Solved linear equilibrium.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// Impact matrix `Λ` (price per unit volume).
    pub lambda: SymMatrix,
    /// Pricing intercept `μ`, equal to `p₀`.
    pub mu: DVector<f64>,
    /// Informed-trader gain `B = ½ Λ⁻¹`, so that `x = B (v − p₀)`.
    pub it_gain: SymMatrix,
    /// `E[U_IT] = tr(Λ Ω)`.
    pub expected_utility_it: f64,
    pub factorization: FactorKind,
}

pub fn solve_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    solve_equilibrium_with(params, FactorKind::default())
}

/// Same as [`solve_equilibrium`] with an explicit factorization of `Ω`.
pub fn solve_equilibrium_with(params: &ModelParams, kind: FactorKind) -> Result<Equilibrium> {
    let cond = linalg::condition_number(params.sigma0())?;
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned { condition: cond });
    }
    let fac = factorize(params.omega(), kind)?;
    let inner = params.sigma0().congruence(&fac.right)?;
    let eig = inner.eigen()?;
    eig.check_spd()?;

    let l_inv = fac.left_inverse();
    let l_inv_t = l_inv.transpose();
    // Λ = ½ L⁻ᵀ √(R Σ₀ L) L⁻¹ and ½ Λ⁻¹ = L (R Σ₀ L)^{-1/2} Lᵀ share one eigenbasis.
    let root = eig.map(f64::sqrt);
    let inv_root = eig.map(|v| 1.0 / v.sqrt());
    let lambda = root.congruence(&l_inv_t)?.scaled(0.5);
    let it_gain = inv_root.congruence(&fac.left)?;

    let expected_utility_it = (lambda.as_matrix() * params.omega().as_matrix()).trace();
    Ok(Equilibrium {
        lambda,
        mu: params.p0().clone(),
        it_gain,
        expected_utility_it,
        factorization: kind,
    })
}

fn check_two_by_two(rho: f64, omega1: f64, omega2: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("|rho| must be < 1, got {rho}")));
    }
    if !(omega1 > 0.0 && omega2 > 0.0) {
        return Err(Error::Domain(format!(
            "volume variances must be positive, got ({omega1}, {omega2})"
        )));
    }
    Ok(())
}

/// Closed-form impact for `Σ₀ = [[1, ρ], [ρ, 1]]` and `Ω = diag(ω₁, ω₂)`.
pub fn equilibrium_2d_closed_form(rho: f64, omega1: f64, omega2: f64) -> Result<SymMatrix> {
    check_two_by_two(rho, omega1, omega2)?;
    let s = (1.0 - rho * rho).sqrt();
    let delta = (omega1 + omega2 + 2.0 * (omega1 * omega2).sqrt() * s).sqrt();
    let c = 1.0 / (2.0 * delta);
    SymMatrix::from_row_slice(
        2,
        &[
            c * (1.0 + (omega2 / omega1).sqrt() * s),
            c * rho,
            c * rho,
            c * (1.0 + (omega1 / omega2).sqrt() * s),
        ],
    )
}

/// Impact for a rank-one fundamental covariance `Σ₀ = s σ sᵀ`:
/// `Λ = ½ s (σ / sᵀΩs)^{1/2} sᵀ`.
pub fn equilibrium_rank_one(s: &DVector<f64>, sigma: f64, omega: &SymMatrix) -> Result<SymMatrix> {
    if s.len() != omega.dim() {
        return Err(Error::dims(omega.dim(), s.len()));
    }
    if (s.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("s must be a unit vector, |s| = {}", s.norm())));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    linalg::check_spd(omega)?;
    let projected = (s.transpose() * omega.as_matrix() * s)[(0, 0)];
    let scale = 0.5 * (sigma / projected).sqrt();
    SymMatrix::new(s * s.transpose() * scale)
}

/// Rotation `O = (R G)⁻¹ √((R G)(R G)ᵀ)` linking whitened volumes to whitened
/// fundamental prices, where `Σ₀ = G Gᵀ` and `Ω = L R`. With it,
/// `Λ = ½ G O L⁻¹`.
pub fn whitening_rotation(params: &ModelParams, kind: FactorKind) -> Result<DMatrix<f64>> {
    let g = factorize(params.sigma0(), kind)?;
    let l = factorize(params.omega(), kind)?;
    let rg = &l.right * &g.left;
    let overlap = SymMatrix::symmetrize(&rg * rg.transpose());
    let root = linalg::spd_sqrt(&overlap)?;
    // (R G)⁻¹ = G⁻¹ R⁻¹
    let rg_inv = g.left_inverse() * l.right_inverse();
    Ok(rg_inv * root.as_matrix())
}

/// Expected utilities of the informed trader, noise trader and market maker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Utilities {
    pub informed: f64,
    pub noise: f64,
    pub market_maker: f64,
}

impl Utilities {
    pub fn total(&self) -> f64 {
        self.informed + self.noise + self.market_maker
    }
}

/// `E[U_IT] = tr(Λ Ω)`, `E[U_NT] = −tr(Λ Ω)`, `E[U_MM] = 0`.
pub fn expected_utilities(eq: &Equilibrium, params: &ModelParams) -> Result<Utilities> {
    if eq.lambda.dim() != params.dim() {
        return Err(Error::dims(params.dim(), eq.lambda.dim()));
    }
    let informed = (eq.lambda.as_matrix() * params.omega().as_matrix()).trace();
    Ok(Utilities {
        informed,
        noise: -informed,
        market_maker: 0.0,
    })
}

/// One symmetric root of `Λ Ω Λ = Σ₀ / 4`.
#[derive(Debug, Clone)]
pub struct SaddleCandidate {
    /// `true` where the corresponding eigenvalue of the whitened root was negated.
    pub flipped: Vec<bool>,
    pub lambda: SymMatrix,
    /// Only positive definite roots are equilibria; the rest are saddle points
    /// of the informed trader's expected utility.
    pub is_equilibrium: bool,
}

/// Enumerates the `2ⁿ` symmetric solutions of the quadratic equation obtained
/// by negating eigenvalues of `√(R Σ₀ L)`. The first candidate is the
/// all-positive root.
pub fn verify_saddle_rejection(params: &ModelParams) -> Result<Vec<SaddleCandidate>> {
    verify_saddle_rejection_with(params, FactorKind::default())
}

pub fn verify_saddle_rejection_with(
    params: &ModelParams,
    kind: FactorKind,
) -> Result<Vec<SaddleCandidate>> {
    let n = params.dim();
    if n > MAX_SADDLE_DIM {
        return Err(Error::DimensionTooLarge {
            dim: n,
            limit: MAX_SADDLE_DIM,
        });
    }
    let fac = factorize(params.omega(), kind)?;
    let inner = params.sigma0().congruence(&fac.right)?;
    let eig = inner.eigen()?;
    eig.check_spd()?;
    let l_inv_t = fac.left_inverse().transpose();

    (0u32..(1u32 << n))
        .map(|mask| {
            let flipped: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let signed = DMatrix::from_fn(n, n, |i, j| {
                let sign = if flipped[j] { -1.0 } else { 1.0 };
                eig.vectors[(i, j)] * sign * eig.values[j].sqrt()
            });
            let root = SymMatrix::symmetrize(signed * eig.vectors.transpose());
            let lambda = root.congruence(&l_inv_t)?.scaled(0.5);
            let is_equilibrium = lambda.eigen()?.min() > 0.0;
            Ok(SaddleCandidate {
                flipped,
                lambda,
                is_equilibrium,
            })
        })
        .collect()
}

/// Leading-order behaviour when the second asset's noise variance is
/// `ε ω` with `ε → 0`, for `Σ₀ = [[1, ρ], [ρ, 1]]`, `Ω = diag(ω, ε ω)`.
#[derive(Debug, Clone)]
pub struct IlliquidLimit {
    /// Limit of `Λ · diag(1, √ε)`, the pricing rule acting on `(y₁, y₂/√ε)`.
    pub scaled_pricing: DMatrix<f64>,
    /// First-order informed-trader gain at the given `ε`, acting on `Δv`.
    pub it_gain: DMatrix<f64>,
}

pub fn illiquid_limit(rho: f64, omega: f64, epsilon: f64) -> Result<IlliquidLimit> {
    check_two_by_two(rho, omega, omega)?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let s = (1.0 - rho * rho).sqrt();
    let c = 1.0 / (2.0 * omega.sqrt());
    let scaled_pricing = DMatrix::from_row_slice(2, 2, &[c, 0.0, c * rho, c * s]);
    let w = omega.sqrt();
    let e = (epsilon / (1.0 - rho * rho)).sqrt();
    let it_gain = DMatrix::from_row_slice(2, 2, &[w, 0.0, -w * e * rho, w * e]);
    Ok(IlliquidLimit {
        scaled_pricing,
        it_gain,
    })
}
