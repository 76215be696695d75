//! Dense symmetric linear algebra: SPD square roots, paired factorizations
//! `Ω = L·R` with `R = Lᵀ`, sorted eigendecompositions and commutator norms.
//!
//! Every routine is a pure function of its inputs. Eigendecompositions are
//! sorted by descending eigenvalue and each eigenvector is signed so that its
//! largest-magnitude entry is positive, which makes principal-component
//! factorizations reproducible bit for bit.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance below which a negative eigenvalue is treated as a
/// rounding artefact of a PSD matrix (scaled by the largest |eigenvalue|).
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Relative threshold for strict positive definiteness (scaled by `trace/dim`).
pub const SPD_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Commutator norms below this relative size are reported as exactly zero.
pub const COMMUTATOR_ZERO_TOLERANCE: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

/// A real symmetric matrix.
///
/// Symmetry is enforced on construction by averaging with the transpose, so
/// `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::dims("dim >= 1", "0"));
        }
        if !m.is_square() {
            return Err(Error::dims(
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteData {
                row: pos % m.nrows(),
            });
        }
        Ok(Self::symmetrize(m))
    }

    pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        SymMatrix(m)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::dims(dim * dim, data.len()));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    /// `T · self · Tᵀ`, symmetrized.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<SymMatrix> {
        if t.ncols() != self.dim() {
            return Err(Error::dims(self.dim(), t.ncols()));
        }
        Ok(Self::symmetrize(t * &self.0 * t.transpose()))
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        SymEigen::new(self)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigendecomposition of a [`SymMatrix`]: eigenvalues in descending order,
/// eigenvectors as columns with their largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        let n = m.dim();
        let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::SolverFailure("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut values = DVector::zeros(n);
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = eig.eigenvalues[src];
            let mut col = eig.eigenvectors.column(src).clone_owned();
            let pivot = col
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bi, bv), (i, &v)| {
                    if v.abs() > bv {
                        (i, v.abs())
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            vectors.set_column(dst, &col);
        }
        Ok(SymEigen { values, vectors })
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * f(self.values[j])
        });
        SymMatrix::symmetrize(scaled * self.vectors.transpose())
    }

    /// Threshold below which negative eigenvalues count as rounding noise.
    pub fn psd_tolerance(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        PSD_RELATIVE_TOLERANCE * scale
    }

    /// Fails with [`Error::NotPsd`] if an eigenvalue falls below `-ε_psd`.
    pub fn check_psd(&self) -> Result<()> {
        if self.min() < -self.psd_tolerance() {
            return Err(Error::NotPsd {
                min_eigenvalue: self.min(),
            });
        }
        Ok(())
    }

    pub fn check_spd(&self) -> Result<()> {
        let n = self.values.len() as f64;
        let threshold = SPD_RELATIVE_TOLERANCE * self.values.sum() / n;
        if !(self.min() > threshold) {
            return Err(Error::NotSpd {
                min_eigenvalue: self.min(),
                threshold,
            });
        }
        Ok(())
    }
}

/// The unique symmetric PSD square root.
///
/// Eigenvalues in `[-ε_psd, 0)` are clamped to zero.
pub fn spd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = m.eigen()?;
    eig.check_psd()?;
    Ok(eig.map(|v| v.max(0.0).sqrt()))
}

/// Inverse of a strictly positive definite matrix through its eigenbasis.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = m.eigen()?;
    eig.check_spd()?;
    Ok(eig.map(|v| 1.0 / v))
}

pub fn check_spd(m: &SymMatrix) -> Result<()> {
    m.eigen()?.check_spd()
}

pub fn check_psd(m: &SymMatrix) -> Result<()> {
    m.eigen()?.check_psd()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    #[default]
    Cholesky,
    PrincipalComponent,
}

/// A factorization `m = left · right` with `right = leftᵀ`.
///
/// The inverse of `left` is kept alongside so callers never go through a
/// generic matrix inversion.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub kind: FactorKind,
    left_inverse: DMatrix<f64>,
}

impl Factorization {
    pub fn left_inverse(&self) -> &DMatrix<f64> {
        &self.left_inverse
    }

    pub fn right_inverse(&self) -> DMatrix<f64> {
        self.left_inverse.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.left * &self.right
    }
}

pub fn factorize(m: &SymMatrix, kind: FactorKind) -> Result<Factorization> {
    let eig = m.eigen()?;
    eig.check_spd()?;
    let n = m.dim();
    let (left, left_inverse) = match kind {
        FactorKind::Cholesky => {
            let chol = m
                .as_matrix()
                .clone()
                .cholesky()
                .ok_or_else(|| Error::SolverFailure("cholesky factorization failed".into()))?;
            let l = chol.l();
            let l_inv = l
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| Error::SolverFailure("singular cholesky factor".into()))?;
            (l, l_inv)
        }
        FactorKind::PrincipalComponent => {
            let l = DMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.values[j].sqrt());
            let l_inv = DMatrix::from_fn(n, n, |i, j| eig.vectors[(j, i)] / eig.values[i].sqrt());
            (l, l_inv)
        }
    };
    Ok(Factorization {
        right: left.transpose(),
        left,
        kind,
        left_inverse,
    })
}

/// `‖ab − ba‖_F / (‖a‖_F ‖b‖_F)`, snapped to zero below
/// [`COMMUTATOR_ZERO_TOLERANCE`]. Zero if either matrix vanishes.
pub fn commutator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::dims(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    let scale = a.norm() * b.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let k = (a * b - b * a).norm() / scale;
    Ok(if k <= COMMUTATOR_ZERO_TOLERANCE { 0.0 } else { k })
}

/// Smallest real part over the spectrum of a (possibly asymmetric) square
/// matrix.
pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::dims(
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m == &m.transpose() {
        return Ok(SymMatrix(m.clone()).eigen()?.min());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::SolverFailure("schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min))
}

/// `‖a − b‖_F / ‖b‖_F` (absolute when `b` is zero).
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let denom = b.norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

pub fn condition_number(m: &SymMatrix) -> Result<f64> {
    let eig = m.eigen()?;
    if eig.min() <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(eig.max() / eig.min())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, data: &[f64]) -> SymMatrix {
        SymMatrix::from_row_slice(n, data).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0])).unwrap();
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
        assert!(SymMatrix::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let id = SymMatrix::identity(3);
        assert!(relative_frobenius(&spd_sqrt(&id).unwrap(), &id) < 1e-15);
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!(relative_frobenius(&spd_sqrt(&d).unwrap(), &expect) < 1e-15);
    }

    #[test]
    fn sqrt_of_two_by_two_squares_back() {
        let m = sym(2, &[2.0, 1.0, 1.0, 2.0]);
        let x = spd_sqrt(&m).unwrap();
        assert!(relative_frobenius(&(&*x * &*x), &m) < 1e-12);
        let eig = x.eigen().unwrap();
        assert!((eig.values[0] - 3f64.sqrt()).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((eig.vectors[(0, 0)] - s).abs() < 1e-12);
        assert!((eig.vectors[(1, 0)] - s).abs() < 1e-12);
        // repeated calls are bitwise identical
        assert_eq!(spd_sqrt(&m).unwrap(), x);
    }

    #[test]
    fn sqrt_clamps_rounding_negatives_and_rejects_real_ones() {
        let m = sym(2, &[1.0, 1.0, 1.0, 1.0 - 1e-14]);
        assert!(spd_sqrt(&m).is_ok());
        let bad = sym(2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(spd_sqrt(&bad), Err(Error::NotPsd { .. })));
        assert_eq!(spd_sqrt(&SymMatrix::zeros(2)).unwrap(), SymMatrix::zeros(2));
    }

    #[test]
    fn factorize_examples() {
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let f = factorize(&d, FactorKind::Cholesky).unwrap();
        assert!(relative_frobenius(&f.left, &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])) < 1e-15);
        for kind in [FactorKind::Cholesky, FactorKind::PrincipalComponent] {
            let f = factorize(&SymMatrix::identity(3), kind).unwrap();
            assert!(relative_frobenius(&f.left, &DMatrix::identity(3, 3)) < 1e-15);
        }
        let m = sym(2, &[2.0, 1.0, 1.0, 2.0]);
        let f = factorize(&m, FactorKind::PrincipalComponent).unwrap();
        assert!(relative_frobenius(&f.reconstruct(), &m) < 1e-12);
        assert_eq!(f.right, f.left.transpose());
        // first column is (1,1)/√2 scaled by √3
        let c = 3f64.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        assert!((f.left[(0, 0)] - c).abs() < 1e-12 && (f.left[(1, 0)] - c).abs() < 1e-12);
        let inv_check = f.left_inverse() * &f.left;
        assert!(relative_frobenius(&inv_check, &DMatrix::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn factorize_rejects_singular() {
        let m = sym(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            factorize(&m, FactorKind::Cholesky),
            Err(Error::NotSpd { .. })
        ));
    }

    #[test]
    fn commutator_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert_eq!(commutator_norm(&a, &b).unwrap(), 0.0);
        assert_eq!(commutator_norm(&DMatrix::identity(2, 2), &b).unwrap(), 0.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let expect = 2f64.sqrt() / (2.0 * 5f64.sqrt());
        assert!((commutator_norm(&a, &c).unwrap() - expect).abs() < 1e-15);
        assert_eq!(commutator_norm(&a, &c).unwrap(), commutator_norm(&c, &a).unwrap());
        assert!(commutator_norm(&a, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn min_real_eigenvalue_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!((min_real_eigenvalue(&d).unwrap() - 1.0).abs() < 1e-14);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(min_real_eigenvalue(&rot).unwrap().abs() < 1e-14);
        assert!((min_real_eigenvalue(&DMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-15);
        let upper = DMatrix::from_row_slice(2, 2, &[2.0, 5.0, 0.0, -1.0]);
        assert!((min_real_eigenvalue(&upper).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_sign_convention() {
        let m = sym(2, &[2.0, -1.0, -1.0, 2.0]);
        let eig = m.eigen().unwrap();
        assert!(eig.values[0] >= eig.values[1]);
        for j in 0..2 {
            let col = eig.vectors.column(j);
            let big = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }
}
