//! CSV formats and empirical moment estimation.
//!
//! Files are UTF-8, comma separated, with `.` as the decimal point. Lines
//! starting with `#` are comments unless they are one of the directives below.
//!
//! **Series** (binned observations, one row per bin):
//!
//! ```text
//! timestamp,dp_<label>,…,y_<label>,…
//! ```
//!
//! **Matrix blocks** (moments, bases): each matrix is introduced by a header
//! `# matrix <name> <n>` followed by `n` rows of `n` numbers. A moments file
//! holds the blocks `sigma_hat`, `omega_d_hat` and `response_hat`, plus an
//! optional `# labels a,b,…` line.
//!
//! Numbers are written with 17 significant digits so that reading a written
//! file reproduces every `f64` exactly.

use nalgebra::DMatrix;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::estimators::CovarianceTriple;
use crate::linalg::SymMatrix;
use crate::synthetic::{normalize_to_block, BlockCovariance};

/// 17 significant digits in scientific notation.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `digits` significant digits, fixed notation for moderate magnitudes.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - exponent;
    if (-4..=(digits as i32 + 4)).contains(&exponent) && decimals >= 0 {
        format!("{x:.*}", decimals as usize)
    } else {
        format!("{x:.*e}", digits.saturating_sub(1))
    }
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("'{}' is not a number", field.trim()),
    })
}

/// Content lines with their 1-based line numbers; comments and blanks dropped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Binned price changes and signed volume imbalances.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    /// Bin timestamps, non-decreasing (e.g. epoch seconds or bin index).
    pub timestamps: Vec<f64>,
    /// `T × n` price changes.
    pub dp: DMatrix<f64>,
    /// `T × n` signed volume imbalances.
    pub y: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl BinnedSeries {
    pub fn new(timestamps: Vec<f64>, dp: DMatrix<f64>, y: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (t, n) = dp.shape();
        if y.shape() != (t, n) {
            return Err(Error::dims(format!("y {t}x{n}"), format!("{}x{}", y.nrows(), y.ncols())));
        }
        if timestamps.len() != t {
            return Err(Error::dims(format!("{t} timestamps"), timestamps.len()));
        }
        if labels.len() != n {
            return Err(Error::dims(format!("{n} labels"), labels.len()));
        }
        for (row, ts) in timestamps.iter().enumerate() {
            let finite = ts.is_finite()
                && dp.row(row).iter().all(|x| x.is_finite())
                && y.row(row).iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::NonFiniteData { row });
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Domain(format!("timestamps decrease at row {}", i + 1)));
        }
        Ok(BinnedSeries {
            timestamps,
            dp,
            y,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.dp.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn demeaned(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / t;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Demeaned second moments with divisor `T`:
/// `Σ̂ = ⟨Δp Δpᵀ⟩`, `Ω̂ᵈ = ⟨y yᵀ⟩`, `R̂ᵈ = ⟨Δp yᵀ⟩`.
pub fn estimate_moments(series: &BinnedSeries) -> Result<CovarianceTriple> {
    let t = series.len();
    if t < 2 {
        return Err(Error::TooFewSamples { required: 2, found: t });
    }
    let dp = demeaned(&series.dp);
    let y = demeaned(&series.y);
    let scale = 1.0 / t as f64;
    let sigma = dp.transpose() * &dp * scale;
    let omega = y.transpose() * &y * scale;
    let response = dp.transpose() * &y * scale;
    CovarianceTriple::new(
        SymMatrix::new(sigma)?,
        SymMatrix::new(omega)?,
        response,
        series.labels.clone(),
    )
}

pub fn read_series_csv(text: &str) -> Result<BinnedSeries> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let bad_header = |message: String| Error::Parse {
        line: header_line,
        message,
    };
    if cols.first() != Some(&"timestamp") {
        return Err(bad_header("first column must be 'timestamp'".into()));
    }
    let rest = &cols[1..];
    if rest.is_empty() || !rest.len().is_multiple_of(2) {
        return Err(bad_header("expected dp_<label> and y_<label> columns in equal numbers".into()));
    }
    let n = rest.len() / 2;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = rest[i]
            .strip_prefix("dp_")
            .ok_or_else(|| bad_header(format!("column '{}' should start with dp_", rest[i])))?;
        if rest[n + i] != format!("y_{label}") {
            return Err(bad_header(format!("expected column y_{label}, found '{}'", rest[n + i])));
        }
        labels.push(label.to_string());
    }

    let mut timestamps = Vec::new();
    let mut dp = Vec::new();
    let mut y = Vec::new();
    for (line, content) in lines {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != 2 * n + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", 2 * n + 1, fields.len()),
            });
        }
        timestamps.push(parse_number(fields[0], line)?);
        for f in &fields[1..=n] {
            dp.push(parse_number(f, line)?);
        }
        for f in &fields[n + 1..] {
            y.push(parse_number(f, line)?);
        }
    }
    let t = timestamps.len();
    BinnedSeries::new(
        timestamps,
        DMatrix::from_row_slice(t, n, &dp),
        DMatrix::from_row_slice(t, n, &y),
        labels,
    )
}

pub fn write_series_csv(series: &BinnedSeries) -> String {
    let mut out = String::from("timestamp");
    for l in &series.labels {
        out.push_str(&format!(",dp_{l}"));
    }
    for l in &series.labels {
        out.push_str(&format!(",y_{l}"));
    }
    out.push('\n');
    for t in 0..series.len() {
        out.push_str(&format_f64(series.timestamps[t]));
        for x in series.dp.row(t).iter().chain(series.y.row(t).iter()) {
            out.push(',');
            out.push_str(&format_f64(*x));
        }
        out.push('\n');
    }
    out
}

/// A named square matrix read from a block file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBlock {
    pub name: String,
    pub matrix: DMatrix<f64>,
}

/// Parses every `# matrix <name> <n>` block, plus the `# labels` directive
/// if present.
pub fn read_matrix_blocks(text: &str) -> Result<(Vec<MatrixBlock>, Option<Vec<String>>)> {
    let mut blocks = Vec::new();
    let mut labels = None;
    let mut current: Option<(String, usize, Vec<f64>, usize)> = None;

    let finish = |cur: Option<(String, usize, Vec<f64>, usize)>, blocks: &mut Vec<MatrixBlock>| -> Result<()> {
        if let Some((name, n, data, header_line)) = cur {
            if data.len() != n * n {
                return Err(Error::Parse {
                    line: header_line,
                    message: format!("matrix '{name}' has {} of {} rows", data.len() / n.max(1), n),
                });
            }
            blocks.push(MatrixBlock {
                name,
                matrix: DMatrix::from_row_slice(n, n, &data),
            });
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(directive) = content.strip_prefix('#') {
            let words: Vec<&str> = directive.split_whitespace().collect();
            match words.as_slice() {
                ["matrix", name, n] => {
                    finish(current.take(), &mut blocks)?;
                    let n: usize = n.parse().ok().filter(|&n| n > 0).ok_or(Error::Parse {
                        line,
                        message: format!("invalid matrix size '{n}'"),
                    })?;
                    current = Some((name.to_string(), n, Vec::with_capacity(n * n), line));
                }
                ["labels", list] => {
                    labels = Some(list.split(',').map(|s| s.trim().to_string()).collect());
                }
                _ => {}
            }
            continue;
        }
        let Some((name, n, data, _)) = current.as_mut() else {
            return Err(Error::Parse {
                line,
                message: "data outside a '# matrix <name> <n>' block".into(),
            });
        };
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != *n || data.len() >= *n * *n {
            return Err(Error::Parse {
                line,
                message: format!("matrix '{name}' expects {n} rows of {n} values"),
            });
        }
        for f in fields {
            data.push(parse_number(f, line)?);
        }
    }
    finish(current, &mut blocks)?;
    Ok((blocks, labels))
}

pub fn write_matrix_block(out: &mut String, name: &str, m: &DMatrix<f64>) {
    out.push_str(&format!("# matrix {name} {}\n", m.nrows()));
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|x| format_f64(*x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
}

/// A single square matrix: either one `# matrix` block or bare rows.
pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let (mut blocks, _) = match read_matrix_blocks(text) {
        Ok(parsed) if !parsed.0.is_empty() => parsed,
        _ => {
            let rows: Vec<(usize, Vec<f64>)> = content_lines(text)
                .map(|(line, l)| Ok((line, l.split(',').map(|f| parse_number(f, line)).collect::<Result<Vec<_>>>()?)))
                .collect::<Result<_>>()?;
            let n = rows.len();
            if n == 0 {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty matrix".into(),
                });
            }
            if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != n) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("expected {n} values, found {}", r.len()),
                });
            }
            let data: Vec<f64> = rows.into_iter().flat_map(|(_, r)| r).collect();
            return Ok(DMatrix::from_row_slice(n, n, &data));
        }
    };
    if blocks.len() != 1 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected one matrix, found {}", blocks.len()),
        });
    }
    Ok(blocks.remove(0).matrix)
}

pub fn write_matrix_csv(m: &DMatrix<f64>, name: &str) -> String {
    let mut out = String::new();
    write_matrix_block(&mut out, name, m);
    out
}

pub fn write_moments_csv(triple: &CovarianceTriple) -> String {
    let mut out = format!("# labels {}\n", triple.labels.join(","));
    write_matrix_block(&mut out, "sigma_hat", triple.sigma_hat.as_matrix());
    write_matrix_block(&mut out, "omega_d_hat", triple.omega_d_hat.as_matrix());
    write_matrix_block(&mut out, "response_hat", &triple.response_hat);
    out
}

pub fn read_moments_csv(text: &str) -> Result<CovarianceTriple> {
    let (blocks, labels) = read_matrix_blocks(text)?;
    let take = |name: &str| -> Result<DMatrix<f64>> {
        blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.matrix.clone())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing matrix block '{name}'"),
            })
    };
    CovarianceTriple::new(
        SymMatrix::new(take("sigma_hat")?)?,
        SymMatrix::new(take("omega_d_hat")?)?,
        take("response_hat")?,
        labels.unwrap_or_default(),
    )
}

/// Reads every matrix block as a raw `(Δp, y)` block covariance and
/// normalizes it to unit diagonal.
pub fn read_bases_csv(text: &str) -> Result<Vec<BlockCovariance>> {
    let (blocks, _) = read_matrix_blocks(text)?;
    if blocks.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no '# matrix' blocks found".into(),
        });
    }
    blocks
        .into_iter()
        .map(|b| {
            let dim = b.matrix.nrows();
            if dim % 2 != 0 {
                return Err(Error::dims(format!("even dimension for base '{}'", b.name), dim));
            }
            let n = dim / 2;
            let c = SymMatrix::new(b.matrix)?;
            let triple = CovarianceTriple::new(
                SymMatrix::new(c.view((0, 0), (n, n)).into_owned())?,
                SymMatrix::new(c.view((n, n), (n, n)).into_owned())?,
                c.view((0, n), (n, n)).into_owned(),
                Vec::new(),
            )?;
            normalize_to_block(&triple)
        })
        .collect()
}

pub fn write_bases_csv(bases: &[BlockCovariance]) -> String {
    let mut out = String::new();
    for (i, b) in bases.iter().enumerate() {
        write_matrix_block(&mut out, &format!("base_{i}"), b.matrix().as_matrix());
    }
    out
}

/// Comparison table `method,chi2,kappa,lambda_star,alpha` with 6 significant
/// digits.
pub fn diagnostics_table_csv(reports: &[DiagnosticsReport]) -> String {
    let mut out = String::from("method,chi2,kappa,lambda_star,alpha\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            format_sig(r.chi2, 6),
            format_sig(r.commutator_kappa, 6),
            format_sig(r.min_eig_lambda_star, 6),
            format_sig(r.asymmetry_alpha, 6),
        ));
    }
    out
}
