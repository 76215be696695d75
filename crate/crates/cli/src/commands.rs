use std::path::Path;

use cross_impact::diagnostics::{compare, ComparisonRow};
use cross_impact::equilibrium::{
    expected_utilities, solve_equilibrium_with, verify_saddle_rejection_with, ModelParams,
};
use cross_impact::estimators::{CovarianceTriple, LossConfig, Method, Warning};
use cross_impact::io;
use cross_impact::linalg::relative_frobenius;
use cross_impact::monte_carlo::{self, simulate_report, simulate_samples};
use cross_impact::synthetic::{self, normalize_to_block, random_bases, run_sweep};
use cross_impact::{Error, Result, SymMatrix};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::report::{matrix, vector};
use crate::{EquilibriumArgs, FitArgs, GenBasesArgs, InputFormat, ModelArgs, Outcome, SimulateArgs, SweepArgs};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_sym(path: &Path) -> Result<SymMatrix> {
    SymMatrix::new(io::read_matrix_csv(&read(path)?)?)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("'{}' is not a number", f.trim())))
        })
        .collect()
}

fn load_model(args: &ModelArgs) -> Result<ModelParams> {
    let sigma0 = read_sym(&args.sigma0)?;
    let omega = read_sym(&args.omega)?;
    let p0 = match &args.p0 {
        Some(s) => DVector::from_vec(parse_list(s)?),
        None => DVector::zeros(sigma0.dim()),
    };
    ModelParams::new(p0, sigma0, omega)
}

fn quadratic_residual(lambda: &DMatrix<f64>, params: &ModelParams) -> f64 {
    relative_frobenius(
        &(lambda * params.omega().as_matrix() * lambda),
        &(params.sigma0().as_matrix() * 0.25),
    )
}

pub fn equilibrium(args: &EquilibriumArgs) -> Result<Outcome> {
    let params = load_model(&args.model)?;
    let eq = solve_equilibrium_with(&params, args.model.factor.into())?;
    let utilities = expected_utilities(&eq, &params)?;
    let mut results = json!({
        "lambda": matrix(&eq.lambda),
        "mu": vector(&eq.mu),
        "it_gain": matrix(&eq.it_gain),
        "expected_utilities": utilities,
        "quadratic_residual": quadratic_residual(&eq.lambda, &params),
        "factorization": eq.factorization,
    });
    if args.saddles {
        let candidates = verify_saddle_rejection_with(&params, args.model.factor.into())?;
        results["saddles"] = candidates
            .iter()
            .map(|c| {
                json!({
                    "flipped": c.flipped,
                    "lambda": matrix(&c.lambda),
                    "is_equilibrium": c.is_equilibrium,
                    "quadratic_residual": quadratic_residual(&c.lambda, &params),
                })
            })
            .collect();
    }
    if let Some(path) = &args.lambda_out {
        write(path, &io::write_matrix_csv(&eq.lambda, "lambda"))?;
    }
    Ok(Outcome {
        results,
        warnings: Vec::new(),
    })
}

fn labels_for(spec: &Option<String>, n: usize) -> Result<Vec<String>> {
    match spec {
        None => Ok((0..n).map(|i| format!("asset_{i}")).collect()),
        Some(s) => {
            let labels: Vec<String> = s.split(',').map(|l| l.trim().to_string()).collect();
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: format!("{n} labels"),
                    found: labels.len().to_string(),
                });
            }
            Ok(labels)
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let params = load_model(&args.model)?;
    let n = params.dim();
    let labels = labels_for(&args.labels, n)?;
    let eq = solve_equilibrium_with(&params, args.model.factor.into())?;
    let report = simulate_report(&params, &eq, args.samples, args.seed)?;
    let m = &report.moments;
    let sigma0 = params.sigma0().as_matrix();
    let omega = params.omega().as_matrix();
    let lambda_inv = eq
        .lambda
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("equilibrium impact matrix is singular".into()))?;
    let triple = m.to_triple(labels.clone())?;

    if let Some(path) = &args.moments_out {
        write(path, &io::write_moments_csv(&triple))?;
    }
    if let Some(path) = &args.series_out {
        let samples = simulate_samples(&params, &eq, args.samples, args.seed)?;
        let t = samples.len();
        let dp = DMatrix::from_fn(t, n, |r, c| samples[r].p[c] - params.p0()[c]);
        let y = DMatrix::from_fn(t, n, |r, c| samples[r].y[c]);
        let series = io::BinnedSeries::new((0..t).map(|i| i as f64).collect(), dp, y, labels)?;
        write(path, &io::write_series_csv(&series))?;
    }

    let results = json!({
        "rng": monte_carlo::RNG_ALGORITHM,
        "samples": m.n_samples,
        "lambda": matrix(&eq.lambda),
        "moments": {
            "sigma_hat": matrix(&m.sigma_hat),
            "omega_d_hat": matrix(&m.omega_d_hat),
            "response_hat": matrix(&m.response_hat),
            "response_v_hat": matrix(&m.response_v_hat),
            "bare_response_hat": matrix(&m.bare_response_hat),
            "bare_omega_hat": matrix(&m.bare_omega_hat),
            "mean_dp": vector(&m.mean_dp),
            "mean_y": vector(&m.mean_y),
        },
        "standard_errors": {
            "sigma_hat": matrix(&m.standard_errors.sigma_hat),
            "omega_d_hat": matrix(&m.standard_errors.omega_d_hat),
            "response_hat": matrix(&m.standard_errors.response_hat),
            "bare_omega_hat": matrix(&m.standard_errors.bare_omega_hat),
        },
        "relative_errors": {
            "sigma_hat_vs_half_sigma0": relative_frobenius(&m.sigma_hat, &(sigma0 * 0.5)),
            "omega_d_hat_vs_twice_omega": relative_frobenius(&m.omega_d_hat, &(omega * 2.0)),
            "bare_omega_hat_vs_omega": relative_frobenius(&m.bare_omega_hat, omega),
            "response_hat_vs_half_sigma0_lambda_inv": relative_frobenius(&m.response_hat, &(sigma0 * &lambda_inv * 0.5)),
            "response_v_hat_vs_half_sigma0_lambda_inv": relative_frobenius(&m.response_v_hat, &(sigma0 * &lambda_inv * 0.5)),
        },
        "utilities": {
            "mean": report.utilities.mean,
            "standard_error": report.utilities.standard_error,
            "expected": expected_utilities(&eq, &params)?,
        },
    });
    Ok(Outcome {
        results,
        warnings: Vec::new(),
    })
}

fn load_triple(args: &FitArgs) -> Result<CovarianceTriple> {
    let text = read(&args.input)?;
    let format = match args.format {
        InputFormat::Auto if text.lines().any(|l| l.trim_start().starts_with("# matrix")) => InputFormat::Moments,
        InputFormat::Auto => InputFormat::Series,
        other => other,
    };
    let triple = match format {
        InputFormat::Moments => io::read_moments_csv(&text)?,
        _ => io::estimate_moments(&io::read_series_csv(&text)?)?,
    };
    if args.normalize {
        Ok(normalize_to_block(&triple)?.to_triple())
    } else {
        Ok(triple)
    }
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut methods: Vec<Method> = spec.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?;
    methods.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));
    methods.dedup();
    Ok(methods)
}

fn parse_k(spec: &str) -> Result<Option<f64>> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let k: f64 = spec
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("kyle k must be 'auto' or a number, got '{spec}'")))?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("kyle k must be positive, got {k}")));
    }
    Ok(Some(k))
}

fn loss_config(path: &Option<std::path::PathBuf>, n: usize) -> Result<LossConfig> {
    match path {
        None => Ok(LossConfig::identity(n)),
        Some(p) => {
            let m = read_sym(p)?;
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: format!("loss matrix {n}x{n}"),
                    found: format!("{0}x{0}", m.dim()),
                });
            }
            LossConfig::new(m)
        }
    }
}

struct Fitted {
    triple: CovarianceTriple,
    rows: Vec<ComparisonRow>,
    warnings: Vec<Warning>,
}

fn run_fit(args: &FitArgs) -> Result<Fitted> {
    let triple = load_triple(args)?;
    let methods = parse_methods(&args.method)?;
    let k = parse_k(&args.kyle_k)?;
    let cfg = loss_config(&args.loss_m, triple.dim())?;
    let mut warnings: Vec<Warning> = triple.block_psd_warning()?.into_iter().collect();
    let rows = compare(&methods, &triple, &cfg, k)?;
    for r in &rows {
        warnings.extend(r.result.warnings.iter().cloned());
    }
    if let Some(path) = &args.table_csv {
        let reports: Vec<_> = rows.iter().map(|r| r.report.clone()).collect();
        write(path, &io::diagnostics_table_csv(&reports))?;
    }
    Ok(Fitted { triple, rows, warnings })
}

fn table(rows: &[ComparisonRow]) -> Value {
    json!({
        "columns": ["method", "chi2", "kappa", "lambda_star", "alpha"],
        "rows": rows
            .iter()
            .map(|r| json!([
                r.report.method,
                r.report.chi2,
                r.report.commutator_kappa,
                r.report.min_eig_lambda_star,
                r.report.asymmetry_alpha,
            ]))
            .collect::<Vec<_>>(),
    })
}

pub fn fit(args: &FitArgs) -> Result<Outcome> {
    let f = run_fit(args)?;
    let estimators: Vec<Value> = f
        .rows
        .iter()
        .map(|r| {
            let e = &r.result;
            json!({
                "method": e.method,
                "lambda_hat": matrix(&e.lambda_hat),
                "k": e.k,
                "k_star": e.k_star,
                "eigen_liquidities": e.eigen_liquidities,
                "eigenvectors": e.eigenvectors.as_ref().map(matrix),
                "loss_chi2": e.loss,
                "diagnostics": r.report,
            })
        })
        .collect();
    Ok(Outcome {
        results: json!({
            "labels": f.triple.labels,
            "estimators": estimators,
            "table": table(&f.rows),
        }),
        warnings: f.warnings,
    })
}

pub fn diagnose(args: &FitArgs) -> Result<Outcome> {
    let f = run_fit(args)?;
    let reports: Vec<_> = f.rows.iter().map(|r| &r.report).collect();
    Ok(Outcome {
        results: json!({
            "labels": f.triple.labels,
            "diagnostics": reports,
            "table": table(&f.rows),
        }),
        warnings: f.warnings,
    })
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome> {
    let bases = match args.bases.strip_prefix("random:") {
        Some(count) => {
            let count: usize = count
                .parse()
                .map_err(|_| Error::Domain(format!("invalid base count in '{}'", args.bases)))?;
            random_bases(count, args.seed)?
        }
        None => io::read_bases_csv(&read(Path::new(&args.bases))?)?,
    };
    let grid = match &args.grid {
        Some(spec) => synthetic::parse_grid(spec)?,
        None => args.kind.default_grid(50),
    };
    let cfg = loss_config(&args.loss_m, 2)?;
    let result = run_sweep(&bases, args.kind, &grid, &cfg)?;
    if let Some(path) = &args.csv {
        write(path, &result.to_csv())?;
    }
    let warnings = result
        .gaps
        .iter()
        .map(|g| Warning::Note {
            message: format!(
                "{} failed for base {} at {} = {}: {}",
                g.method, g.base_index, args.kind, g.param, g.error
            ),
        })
        .collect();
    Ok(Outcome {
        results: serde_json::to_value(&result).expect("sweep serializes"),
        warnings,
    })
}

pub fn gen_bases(args: &GenBasesArgs) -> Result<Outcome> {
    let bases = random_bases(args.count, args.seed)?;
    if let Some(path) = &args.bases_out {
        write(path, &io::write_bases_csv(&bases))?;
    }
    Ok(Outcome {
        results: json!({
            "bases": bases.iter().map(|b| matrix(b.matrix())).collect::<Vec<_>>(),
        }),
        warnings: Vec::new(),
    })
}
