//! The four comparison observables of a fitted impact matrix.
//!
//! | observable | definition |
//! |---|---|
//! | loss `χ²` | quadratic prediction loss under `M` |
//! | commutator `κ` | `‖[Σ̂_est, Σ̂]‖ / (‖Σ̂‖ ‖Σ̂_est‖)` |
//! | PDness `λ*` | `min_i Re(λ_i(Λ̂))` |
//! | asymmetry `α` | `‖Λ̂ − Λ̂ᵀ‖ / (2 ‖Λ̂‖)` |
//!
//! All norms are Frobenius.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{self, predicted_sigma, CovarianceTriple, EstimatorResult, LossConfig, Method};
use crate::linalg::{commutator_norm, min_real_eigenvalue};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub method: Method,
    pub chi2: f64,
    /// `χ²` divided by the loss of the zero predictor, `½ tr(M Σ̂)`.
    pub chi2_normalized: f64,
    pub commutator_kappa: f64,
    pub min_eig_lambda_star: f64,
    pub asymmetry_alpha: f64,
}

/// `‖Λ − Λᵀ‖ / (2‖Λ‖)`; zero for the zero matrix.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    ((m - m.transpose()).norm() / (2.0 * norm)).min(1.0)
}

pub fn diagnose(result: &EstimatorResult, triple: &CovarianceTriple, cfg: &LossConfig) -> Result<DiagnosticsReport> {
    let chi2 = estimators::loss_chi2(&result.lambda_hat, triple, cfg)?;
    let baseline = 0.5 * (cfg.m_matrix.as_matrix() * triple.sigma_hat.as_matrix()).trace();
    let sigma_est = predicted_sigma(result, triple)?;
    Ok(DiagnosticsReport {
        method: result.method,
        chi2,
        chi2_normalized: if baseline > 0.0 { chi2 / baseline } else { f64::NAN },
        commutator_kappa: commutator_norm(sigma_est.as_matrix(), triple.sigma_hat.as_matrix())?,
        min_eig_lambda_star: min_real_eigenvalue(&result.lambda_hat)?,
        asymmetry_alpha: asymmetry(&result.lambda_hat),
    })
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub result: EstimatorResult,
    pub report: DiagnosticsReport,
}

/// Fits and diagnoses the requested estimators, in the order given.
/// The Kyle estimator uses `kyle_k`, or `k*` when `None`.
pub fn compare(
    methods: &[Method],
    triple: &CovarianceTriple,
    cfg: &LossConfig,
    kyle_k: Option<f64>,
) -> Result<Vec<ComparisonRow>> {
    methods
        .iter()
        .map(|&m| {
            let result = estimators::fit(m, triple, cfg, kyle_k)?;
            let report = diagnose(&result, triple, cfg)?;
            Ok(ComparisonRow { result, report })
        })
        .collect()
}

/// MLE, ELM and Kyle (at `k*`) rows, in that order.
pub fn compare_all(triple: &CovarianceTriple, cfg: &LossConfig) -> Result<Vec<ComparisonRow>> {
    compare(&Method::ALL, triple, cfg, None)
}
