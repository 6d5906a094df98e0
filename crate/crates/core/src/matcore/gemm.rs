//! Complex matrix products through a packed GEMM kernel. The generic
//! nalgebra product is several times slower for complex scalars.

use nalgebra::DMatrix;

use super::C64;

/// `c ← alpha a b + beta c` for column-major complex matrices.
pub fn gemm_into(alpha: C64, a: &DMatrix<C64>, b: &DMatrix<C64>, beta: C64, c: &mut DMatrix<C64>) {
    let (m, k) = a.shape();
    let n = b.ncols();
    assert_eq!(b.nrows(), k, "inner dimensions differ");
    assert_eq!(c.shape(), (m, n), "output shape differs");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    // SAFETY: Complex<f64> is repr(C) with layout [re, im]; DMatrix storage is
    // contiguous column-major, so strides are (1, nrows).
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `a b`.
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    gemm_into(C64::new(1.0, 0.0), a, b, C64::new(0.0, 0.0), &mut c);
    c
}

/// `a b c`.
pub fn matmul3(a: &DMatrix<C64>, b: &DMatrix<C64>, c: &DMatrix<C64>) -> DMatrix<C64> {
    if a.nrows() * b.ncols() <= b.nrows() * c.ncols() {
        matmul(&matmul(a, b), c)
    } else {
        matmul(a, &matmul(b, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_generic_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, k, n) in [(1, 1, 1), (7, 3, 5), (36, 36, 36), (21, 36, 21), (4, 0, 3)] {
            let mut r = |r, c| DMatrix::from_fn(r, c, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let a = r(m, k);
            let b = r(k, n);
            let c0 = r(m, n);
            let mut c = c0.clone();
            let (al, be) = (C64::new(0.3, -1.2), C64::new(-0.5, 0.25));
            gemm_into(al, &a, &b, be, &mut c);
            let expected = &a * &b * al + c0 * be;
            assert!(max_abs(&(c - expected)) < 1e-12);
            let c3 = r(n, 2);
            assert!(max_abs(&(matmul3(&a, &b, &c3) - &a * &b * &c3)) < 1e-12);
        }
    }
}
