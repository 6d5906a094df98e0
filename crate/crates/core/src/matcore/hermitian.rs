//! Dense Hermitian matrices and the spectral operations the purifier is built on.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance on `|H - H^†|` accepted by [`HermitianMatrix::new`].
pub const HERMITICITY_TOL: f64 = 1e-13;

/// Relative threshold below which a negative eigenvalue is treated as zero.
pub const NEG_EIG_REL_EPS: f64 = 1e-14;

/// A square complex matrix equal to its conjugate transpose.
///
/// Construction symmetrizes the input, so every stored value is exactly
/// Hermitian even when the source carried rounding noise.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc: f64, z| acc.max(z.norm()))
}

pub fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn symmetrize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = C64::new(m[(j, j)].re, 0.0);
        for i in 0..j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

impl HermitianMatrix {
    /// Validates `m` against [`HERMITICITY_TOL`] and stores its Hermitian part.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        Self::with_tolerance(m, HERMITICITY_TOL)
    }

    pub fn with_tolerance(m: DMatrix<C64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let deviation = hermiticity_deviation(&m);
        if !(deviation <= tol) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::hermitian_part(m))
    }

    /// `(m + m^†) / 2` without any tolerance check.
    pub fn hermitian_part(mut m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Hermitian matrices are square");
        symmetrize(&mut m);
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Column-major vectorization.
    pub fn to_vec(&self) -> Vec<C64> {
        self.0.as_slice().to_vec()
    }

    /// Inverse of [`to_vec`](Self::to_vec); the result is symmetrized.
    pub fn from_vec(dim: usize, v: &[C64]) -> Self {
        assert_eq!(v.len(), dim * dim);
        Self::hermitian_part(DMatrix::from_column_slice(dim, dim, v))
    }

    /// `U H U^†`.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Self {
        Self::hermitian_part(u * &self.0 * u.adjoint())
    }
}

impl AsRef<DMatrix<C64>> for HermitianMatrix {
    fn as_ref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &rhs.0)
    }
}

impl Add for HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(self.0 + rhs.0)
    }
}

impl Sub for HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(self.0 - rhs.0)
    }
}

impl AddAssign<&HermitianMatrix> for HermitianMatrix {
    fn add_assign(&mut self, rhs: &HermitianMatrix) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&HermitianMatrix> for HermitianMatrix {
    fn sub_assign(&mut self, rhs: &HermitianMatrix) {
        self.0 -= &rhs.0;
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

/// Hilbert-Schmidt inner product `Tr(A^† B)`.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(hs_inner_raw(a.matrix(), b.matrix()))
}

pub(crate) fn hs_inner_raw(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Spectral decomposition with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, ordered like `values`.
    pub vectors: DMatrix<C64>,
}

pub fn eigh(h: &HermitianMatrix) -> Eigh {
    let n = h.dim();
    if n == 0 {
        return Eigh {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(h.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigh { values, vectors }
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(h: &HermitianMatrix) -> Vec<f64> {
    if h.dim() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = h.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Splits `H = H_def + H_pos` where `H_def` collects the strictly negative
/// eigenpairs (below `-1e-14 * max|λ|`).
pub fn negative_part(h: &HermitianMatrix) -> (HermitianMatrix, HermitianMatrix) {
    let n = h.dim();
    let eig = eigh(h);
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eps = NEG_EIG_REL_EPS * scale;
    let neg: Vec<usize> = (0..n).filter(|&k| eig.values[k] < -eps).collect();
    if neg.is_empty() {
        return (HermitianMatrix::zeros(n), h.clone());
    }
    let v = DMatrix::from_fn(n, neg.len(), |i, j| eig.vectors[(i, neg[j])]);
    let vg = DMatrix::from_fn(n, neg.len(), |i, j| eig.vectors[(i, neg[j])] * eig.values[neg[j]]);
    let def = HermitianMatrix::hermitian_part(super::matmul(&vg, &v.adjoint()));
    let pos = h - &def;
    (def, pos)
}

/// Orthonormal basis of the row space of `A`, one basis vector per row
/// (`rank x ncols`). Rank is decided relative to the largest singular value.
pub fn row_space_basis(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::zeros(0, n);
    }
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let cutoff = smax * 1e-12 * (a.nrows().max(n) as f64);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cutoff)
        .collect();
    DMatrix::from_fn(keep.len(), n, |r, c| v_t[(keep[r], c)])
}

/// `I - A^+ A`: orthogonal projector onto the null space of the linear map `A`.
pub fn kernel_projector(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.ncols();
    let r = row_space_basis(a);
    let p = DMatrix::<C64>::identity(n, n) - super::matmul(&r.adjoint(), &r);
    // exact self-adjointness
    let pa = p.adjoint();
    (p + pa) * C64::new(0.5, 0.0)
}

/// Random Hermitian matrix with independent standard-normal-ish entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    let m = DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    HermitianMatrix::hermitian_part(m)
}
