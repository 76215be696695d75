//! Cross-impact estimators calibrated on the empirical triple `(Σ̂, Ω̂ᵈ, R̂ᵈ)`.
//!
//! All three minimise (possibly under constraints) the quadratic loss
//!
//! ```text
//! χ² = ½ ⟨(Λ̂ y − Δp)ᵀ M (Λ̂ y − Δp)⟩ = ½ tr[Λ̂ᵀ M Λ̂ Ω̂ᵈ − 2 Λ̂ᵀ M R̂ᵈ + M Σ̂]
//! ```
//!
//! - MLE: unconstrained, `Λ̂ = R̂ᵈ (Ω̂ᵈ)⁻¹`. Generally asymmetric.
//! - EigenLiquidity (ELM): `Λ̂` shares the eigenvectors of `Σ̂`.
//! - Kyle: `Λ̂` is SPD and reproduces the return covariance up to a scale,
//!   `Λ̂ Ω̂ᵈ Λ̂ = k² Σ̂`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, factorize, FactorKind, SymMatrix};

/// Relative eigenvalue gap of `Σ̂` below which the ELM eigenbasis is ambiguous.
pub const DEGENERATE_GAP: f64 = 1e-8;

/// Non-fatal conditions attached to results and reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The stacked covariance of `(Δp, y)` has a negative eigenvalue, so the
    /// triple cannot come from a single joint sample.
    BlockNotPsd { min_eigenvalue: f64 },
    /// `Σ̂` has (nearly) repeated eigenvalues; the ELM result depends on the
    /// chosen eigenbasis.
    DegenerateSpectrum { min_relative_gap: f64 },
    /// Free-form note, e.g. a sweep point that failed.
    Note { message: String },
}

/// Empirical calibration input.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTriple {
    /// `Σ̂ = ⟨Δp Δpᵀ⟩`
    pub sigma_hat: SymMatrix,
    /// `Ω̂ᵈ = ⟨y yᵀ⟩`
    pub omega_d_hat: SymMatrix,
    /// `R̂ᵈ = ⟨Δp yᵀ⟩`
    pub response_hat: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl CovarianceTriple {
    /// Checks shapes and finiteness only; definiteness is checked by
    /// [`CovarianceTriple::validate`] so that degenerate data can still be
    /// represented and written out. Empty `labels` default to `asset_<i>`.
    pub fn new(
        sigma_hat: SymMatrix,
        omega_d_hat: SymMatrix,
        response_hat: DMatrix<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = sigma_hat.dim();
        if omega_d_hat.dim() != n {
            return Err(Error::dims(format!("omega_d_hat {n}x{n}"), omega_d_hat.dim()));
        }
        if response_hat.shape() != (n, n) {
            return Err(Error::dims(
                format!("response_hat {n}x{n}"),
                format!("{}x{}", response_hat.nrows(), response_hat.ncols()),
            ));
        }
        if let Some(pos) = response_hat.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteData { row: pos % n });
        }
        let labels = if labels.is_empty() {
            (0..n).map(|i| format!("asset_{i}")).collect()
        } else if labels.len() == n {
            labels
        } else {
            return Err(Error::dims(format!("{n} labels"), labels.len()));
        };
        Ok(CovarianceTriple {
            sigma_hat,
            omega_d_hat,
            response_hat,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.dim()
    }

    /// `Ω̂ᵈ` strictly PD and `Σ̂` PSD.
    pub fn validate(&self) -> Result<()> {
        linalg::check_spd(&self.omega_d_hat)?;
        linalg::check_psd(&self.sigma_hat)
    }

    /// Stacked covariance of `(Δp, y)`: `[[Σ̂, R̂ᵈ], [R̂ᵈᵀ, Ω̂ᵈ]]`.
    pub fn block_matrix(&self) -> SymMatrix {
        let n = self.dim();
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(self.sigma_hat.as_matrix());
        c.view_mut((0, n), (n, n)).copy_from(&self.response_hat);
        c.view_mut((n, 0), (n, n)).copy_from(&self.response_hat.transpose());
        c.view_mut((n, n), (n, n)).copy_from(self.omega_d_hat.as_matrix());
        SymMatrix::symmetrize(c)
    }

    /// Warning if the stacked block covariance is not PSD.
    pub fn block_psd_warning(&self) -> Result<Option<Warning>> {
        let eig = self.block_matrix().eigen()?;
        Ok(if eig.min() < -eig.psd_tolerance() {
            Some(Warning::BlockNotPsd {
                min_eigenvalue: eig.min(),
            })
        } else {
            None
        })
    }
}

/// Positive definite weighting `M` of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub m_matrix: SymMatrix,
}

impl LossConfig {
    pub fn new(m_matrix: SymMatrix) -> Result<Self> {
        linalg::check_spd(&m_matrix)?;
        Ok(LossConfig { m_matrix })
    }

    pub fn identity(dim: usize) -> Self {
        LossConfig {
            m_matrix: SymMatrix::identity(dim),
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.m_matrix.dim() != n {
            return Err(Error::dims(format!("loss matrix {n}x{n}"), self.m_matrix.dim()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "ELM")]
    Elm,
    #[serde(rename = "Kyle")]
    Kyle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mle, Method::Elm, Method::Kyle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::Elm => "ELM",
            Method::Kyle => "Kyle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(Method::Mle),
            "elm" => Ok(Method::Elm),
            "kyle" => Ok(Method::Kyle),
            other => Err(Error::Domain(format!("unknown estimator '{other}'"))),
        }
    }
}

/// A fitted impact matrix.
#[derive(Debug, Clone)]
pub struct EstimatorResult {
    pub method: Method,
    pub lambda_hat: DMatrix<f64>,
    /// Scale actually used by the Kyle estimator.
    pub k: Option<f64>,
    /// Loss-optimal scale for the Kyle estimator, computed whether or not it
    /// was used.
    pub k_star: Option<f64>,
    /// ELM eigen-liquidities `g_a`, ordered like the eigenvalues of `Σ̂`.
    pub eigen_liquidities: Option<Vec<f64>>,
    /// ELM eigenvectors `ŝ_a` as columns.
    pub eigenvectors: Option<DMatrix<f64>>,
    /// `χ²` under the loss configuration used for fitting.
    pub loss: f64,
    pub warnings: Vec<Warning>,
}

impl EstimatorResult {
    fn new(method: Method, lambda_hat: DMatrix<f64>, triple: &CovarianceTriple, cfg: &LossConfig) -> Result<Self> {
        let loss = loss_chi2(&lambda_hat, triple, cfg)?;
        Ok(EstimatorResult {
            method,
            lambda_hat,
            k: None,
            k_star: None,
            eigen_liquidities: None,
            eigenvectors: None,
            loss,
            warnings: Vec::new(),
        })
    }
}

/// `χ² = ½ tr[Λ̂ᵀ M Λ̂ Ω̂ᵈ − 2 Λ̂ᵀ M R̂ᵈ + M Σ̂]`, clamped at zero.
pub fn loss_chi2(lambda_hat: &DMatrix<f64>, triple: &CovarianceTriple, cfg: &LossConfig) -> Result<f64> {
    let n = triple.dim();
    if lambda_hat.shape() != (n, n) {
        return Err(Error::dims(
            format!("{n}x{n}"),
            format!("{}x{}", lambda_hat.nrows(), lambda_hat.ncols()),
        ));
    }
    cfg.check_dim(n)?;
    let m = cfg.m_matrix.as_matrix();
    let lt_m = lambda_hat.transpose() * m;
    let fit = (&lt_m * lambda_hat * triple.omega_d_hat.as_matrix()).trace();
    let cross = (&lt_m * &triple.response_hat).trace();
    let base = (m * triple.sigma_hat.as_matrix()).trace();
    Ok((0.5 * (fit - 2.0 * cross + base)).max(0.0))
}

/// `Λ̂_MLE = R̂ᵈ (Ω̂ᵈ)⁻¹`, independent of `M`.
pub fn fit_mle(triple: &CovarianceTriple, cfg: &LossConfig) -> Result<EstimatorResult> {
    triple.validate()?;
    cfg.check_dim(triple.dim())?;
    let chol = triple
        .omega_d_hat
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("cholesky of omega_d_hat failed".into()))?;
    // Ω Λᵀ = Rᵀ
    let lambda = chol.solve(&triple.response_hat.transpose()).transpose();
    EstimatorResult::new(Method::Mle, lambda, triple, cfg)
}

/// `Λ̂_ELM = Σ_a ŝ_a g_a ŝ_aᵀ` with `g_a = ŝ_aᵀ R̂ᵈ ŝ_a / ŝ_aᵀ Ω̂ᵈ ŝ_a`, where
/// `ŝ_a` are the eigenvectors of `Σ̂`.
pub fn fit_elm(triple: &CovarianceTriple, cfg: &LossConfig) -> Result<EstimatorResult> {
    triple.validate()?;
    cfg.check_dim(triple.dim())?;
    let n = triple.dim();
    let eig = triple.sigma_hat.eigen()?;
    let s = &eig.vectors;

    let liquidities: Vec<f64> = (0..n)
        .map(|a| {
            let col = s.column(a);
            let num = (col.transpose() * &triple.response_hat * col)[(0, 0)];
            let den = (col.transpose() * triple.omega_d_hat.as_matrix() * col)[(0, 0)];
            num / den
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, a| s[(i, a)] * liquidities[a]);
    let lambda = SymMatrix::symmetrize(scaled * s.transpose()).into_inner();

    let mut result = EstimatorResult::new(Method::Elm, lambda, triple, cfg)?;
    let scale = eig.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if n > 1 && scale > 0.0 {
        let min_gap = (1..n)
            .map(|a| (eig.values[a - 1] - eig.values[a]) / scale)
            .fold(f64::INFINITY, f64::min);
        if min_gap < DEGENERATE_GAP {
            result.warnings.push(Warning::DegenerateSpectrum {
                min_relative_gap: min_gap,
            });
        }
    }
    result.eigen_liquidities = Some(liquidities);
    result.eigenvectors = Some(eig.vectors);
    Ok(result)
}

/// Unit-scale Kyle matrix `R⁻¹ √(R Σ̂ L) L⁻¹` for `Ω̂ᵈ = L R`.
fn kyle_unit(triple: &CovarianceTriple, kind: FactorKind) -> Result<SymMatrix> {
    let eig = triple.sigma_hat.eigen()?;
    eig.check_psd()?;
    let sigma = eig.map(|v| v.max(0.0));
    let fac = factorize(&triple.omega_d_hat, kind)?;
    let root = linalg::spd_sqrt(&sigma.congruence(&fac.right)?)?;
    root.congruence(&fac.left_inverse().transpose())
}

/// Kyle estimator `Λ̂ = k R⁻¹ √(R Σ̂ L) L⁻¹`. With `k = None` the loss-optimal
/// `k* = tr(M R̂ᵈ Λ̂₁) / tr(M Σ̂)` is used, `Λ̂₁` being the `k = 1` matrix.
pub fn fit_kyle(triple: &CovarianceTriple, cfg: &LossConfig, k: Option<f64>) -> Result<EstimatorResult> {
    fit_kyle_with(triple, cfg, k, FactorKind::default())
}

pub fn fit_kyle_with(
    triple: &CovarianceTriple,
    cfg: &LossConfig,
    k: Option<f64>,
    kind: FactorKind,
) -> Result<EstimatorResult> {
    linalg::check_spd(&triple.omega_d_hat)?;
    cfg.check_dim(triple.dim())?;
    let unit = kyle_unit(triple, kind)?;
    let m = cfg.m_matrix.as_matrix();
    let denom = (m * triple.sigma_hat.as_matrix()).trace();
    let numer = (m * &triple.response_hat * unit.as_matrix()).trace();
    let k_star = if denom > 0.0 { numer / denom } else { 0.0 };
    let k_used = k.unwrap_or(k_star);
    if !(k_used > 0.0) {
        return Err(Error::NonpositiveK { k: k_used });
    }
    let lambda = unit.scaled(k_used).into_inner();
    let mut result = EstimatorResult::new(Method::Kyle, lambda, triple, cfg)?;
    result.k = Some(k_used);
    result.k_star = Some(k_star);
    Ok(result)
}

/// Dispatches to the estimator named by `method`; `k` only affects Kyle.
pub fn fit(method: Method, triple: &CovarianceTriple, cfg: &LossConfig, k: Option<f64>) -> Result<EstimatorResult> {
    match method {
        Method::Mle => fit_mle(triple, cfg),
        Method::Elm => fit_elm(triple, cfg),
        Method::Kyle => fit_kyle(triple, cfg, k),
    }
}

/// Covariance of the predicted price changes, `Λ̂ Ω̂ᵈ Λ̂ᵀ`.
pub fn predicted_sigma(result: &EstimatorResult, triple: &CovarianceTriple) -> Result<SymMatrix> {
    let n = triple.dim();
    let l = &result.lambda_hat;
    if l.shape() != (n, n) {
        return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", l.nrows(), l.ncols())));
    }
    Ok(SymMatrix::symmetrize(l * triple.omega_d_hat.as_matrix() * l.transpose()))
}
