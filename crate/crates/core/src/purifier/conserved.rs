//! Conserved two-body operators, their contraction-free orthonormal forms and
//! the projection that keeps their expectation values fixed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore::{
    compress_block, expand_block, hs_inner_raw, kernel_projector, HermitianMatrix, SpinBlock, SpinBlock2RDM, C64,
};

/// Residual HS norm below which an operator counts as linearly dependent.
pub const GRAM_SCHMIDT_DROP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default)]
pub struct ConservedOperatorSet {
    /// The operators as given (`X_i`).
    pub raw: Vec<HermitianMatrix>,
    /// Kernel-projected, HS-orthonormal operators (`Y_i`).
    pub ortho: Vec<HermitianMatrix>,
}

impl ConservedOperatorSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ortho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ortho.is_empty()
    }
}

/// Applies a projector on `vec(B)` (column-major) and returns the Hermitian part.
pub fn apply_vec_projector(p: &DMatrix<C64>, b: &HermitianMatrix) -> HermitianMatrix {
    let n = b.dim();
    let v = DVector::from_column_slice(b.matrix().as_slice());
    let w = p * v;
    HermitianMatrix::hermitian_part(DMatrix::from_column_slice(n, n, w.as_slice()))
}

/// Projects every `X_i` onto the kernel of `contraction_map`, then runs
/// Gram-Schmidt with the HS inner product. Dependent operators are dropped.
pub fn build_conserved_set(xs: &[HermitianMatrix], contraction_map: &DMatrix<C64>) -> Result<ConservedOperatorSet> {
    let kernel = kernel_projector(contraction_map);
    build_conserved_set_with_kernel(xs, &kernel)
}

/// As [`build_conserved_set`] with a precomputed kernel projector.
pub fn build_conserved_set_with_kernel(xs: &[HermitianMatrix], kernel: &DMatrix<C64>) -> Result<ConservedOperatorSet> {
    let mut ortho: Vec<HermitianMatrix> = Vec::new();
    for x in xs {
        let n = x.dim();
        if n * n != kernel.ncols() {
            return Err(Error::DimensionMismatch {
                expected: kernel.ncols(),
                got: n * n,
            });
        }
        let mut r = apply_vec_projector(kernel, x).into_matrix();
        // two passes keep the result orthogonal to working precision
        for _ in 0..2 {
            for y in &ortho {
                let c = hs_inner_raw(y.matrix(), &r);
                r -= y.matrix() * c;
            }
        }
        let norm = r.norm();
        if norm < GRAM_SCHMIDT_DROP_TOL {
            continue;
        }
        ortho.push(HermitianMatrix::hermitian_part(r / C64::new(norm, 0.0)));
    }
    Ok(ConservedOperatorSet {
        raw: xs.to_vec(),
        ortho,
    })
}

/// `m - Σ_i ⟨Y_i, m⟩ Y_i` on a single block.
pub fn project_out(m: &HermitianMatrix, ys: &ConservedOperatorSet) -> HermitianMatrix {
    let mut out = m.matrix().clone();
    for y in &ys.ortho {
        let c = hs_inner_raw(y.matrix(), m.matrix());
        out -= y.matrix() * c;
    }
    HermitianMatrix::hermitian_part(out)
}

/// Removes the conserved components from the singlet block; the triplet block
/// carries no conserved operator and passes through.
pub fn project_conserved(m: &SpinBlock2RDM, ys: &ConservedOperatorSet) -> SpinBlock2RDM {
    SpinBlock2RDM {
        singlet: project_out(&m.singlet, ys),
        triplet: m.triplet.clone(),
        particles: m.particles,
        sites: m.sites,
    }
}

/// Closed-form removal of the interaction and η-pairing components from a
/// contraction-free singlet matrix, written on the full pair space.
pub fn closed_form_update(m_def_k: &HermitianMatrix, sites: usize) -> HermitianMatrix {
    let ms = sites;
    let mf = ms as f64;
    let mut f = expand_block(m_def_k.matrix(), ms, SpinBlock::Singlet);
    let idx = |i: usize, j: usize| i * ms + j;
    let diag_sum: C64 = (0..ms).map(|l| f[(idx(l, l), idx(l, l))]).sum();
    let mut pair_sum = C64::new(0.0, 0.0);
    for k in 0..ms {
        for l in 0..ms {
            if k != l {
                let sign = if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
                pair_sum += f[(idx(k, k), idx(l, l))] * sign;
            }
        }
    }
    let off = mf * (mf - 1.0);
    for i in 0..ms {
        f[(idx(i, i), idx(i, i))] -= diag_sum / mf;
        for j in 0..ms {
            if i == j {
                continue;
            }
            f[(idx(i, j), idx(i, j))] += diag_sum / off;
            f[(idx(i, j), idx(j, i))] += diag_sum / off;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            f[(idx(i, i), idx(j, j))] -= pair_sum * (sign / off);
        }
    }
    HermitianMatrix::hermitian_part(compress_block(&f, ms, SpinBlock::Singlet))
}

/// Printed index formula for `Y_1` on the full pair space (`M_s^2` square).
pub fn y1_index_formula(sites: usize) -> DMatrix<f64> {
    let m = sites;
    let norm = (((m - 1) * m * (m + 1)) as f64).sqrt();
    DMatrix::from_fn(m * m, m * m, |r, c| {
        let (i1, i2, j1, j2) = (r / m, r % m, c / m, c % m);
        let all = (i1 == j1 && i1 == j2 && i2 == j1) as u8 as f64;
        let direct = (i1 == j1 && i2 == j2) as u8 as f64;
        let exch = (i1 == j2 && i2 == j1) as u8 as f64;
        ((m as f64 + 1.0) * all - direct - exch) / norm
    })
}

/// Printed index formula for `Y_2` on the full pair space.
pub fn y2_index_formula(sites: usize) -> DMatrix<f64> {
    let m = sites;
    let norm = (((m - 1) * m) as f64).sqrt();
    DMatrix::from_fn(m * m, m * m, |r, c| {
        let (i1, i2, j1, j2) = (r / m, r % m, c / m, c % m);
        let sign = if (i1 + j1) % 2 == 0 { 1.0 } else { -1.0 };
        let pair = (i1 == i2 && j1 == j2) as u8 as f64;
        let all = (i1 == j1 && i1 == j2 && i2 == j1) as u8 as f64;
        (sign * pair - all) / norm
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hubbard::{conserved_ops, HubbardConfig};
    use crate::matcore::{build_contraction_map, max_abs, pair_dim, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hubbard_set(m: usize, u: f64) -> (ConservedOperatorSet, DMatrix<C64>) {
        let cfg = HubbardConfig::half_filled(m, u, 0.0);
        let (x1, x2) = conserved_ops(&cfg);
        let kernel = kernel_projector(&build_contraction_map(m, SpinBlock::Singlet));
        (build_conserved_set_with_kernel(&[x1, x2], &kernel).unwrap(), kernel)
    }

    #[test]
    fn reproduces_printed_y_formulas() {
        let (ys, _) = hubbard_set(6, 2.2);
        assert_eq!(ys.len(), 2);
        let y1 = expand_block(ys.ortho[0].matrix(), 6, SpinBlock::Singlet);
        let y2 = expand_block(ys.ortho[1].matrix(), 6, SpinBlock::Singlet);
        let e1 = max_abs(&(y1 - y1_index_formula(6).map(|x| C64::new(x, 0.0))));
        let e2 = max_abs(&(y2 - y2_index_formula(6).map(|x| C64::new(x, 0.0))));
        assert!(e1 < 1e-13, "{e1:e}");
        assert!(e2 < 1e-13, "{e2:e}");
        let y1h = HermitianMatrix::from_real(&y1_index_formula(6)).unwrap();
        assert!((crate::matcore::hs_inner(&y1h, &y1h).unwrap().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_and_contraction_free() {
        let (ys, _) = hubbard_set(4, 1.0);
        let a = build_contraction_map(4, SpinBlock::Singlet);
        for (i, yi) in ys.ortho.iter().enumerate() {
            for (j, yj) in ys.ortho.iter().enumerate() {
                let g = hs_inner_raw(yi.matrix(), yj.matrix());
                assert!((g.re - if i == j { 1.0 } else { 0.0 }).abs() < 1e-11);
            }
            let v = DVector::from_column_slice(yi.matrix().as_slice());
            assert!((&a * v).norm() < 1e-11);
        }
    }

    #[test]
    fn dependent_operators_are_dropped() {
        let cfg = HubbardConfig::half_filled(4, 1.0, 0.0);
        let (x1, _) = conserved_ops(&cfg);
        let a = build_contraction_map(4, SpinBlock::Singlet);
        let ys = build_conserved_set(&[x1.clone(), x1.scale(2.0)], &a).unwrap();
        assert_eq!(ys.len(), 1);
        assert_eq!(ys.raw.len(), 2);
        // zero interaction leaves nothing to conserve from X_1
        let zero = conserved_ops(&HubbardConfig::half_filled(4, 0.0, 0.0)).0;
        assert!(build_conserved_set(&[zero], &a).unwrap().is_empty());
    }

    #[test]
    fn projection_examples() {
        let (ys, _) = hubbard_set(6, 1.0);
        let mut d = SpinBlock2RDM::zeros(6, 6);
        d.singlet = ys.ortho[0].clone();
        let out = project_conserved(&d, &ys);
        assert!(out.singlet.frobenius_norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = random_hermitian(pair_dim(6, SpinBlock::Singlet), &mut rng);
        let once = project_out(&r, &ys);
        for y in &ys.ortho {
            assert!(hs_inner_raw(y.matrix(), once.matrix()).norm() < 1e-12);
        }
        let twice = project_out(&once, &ys);
        assert!(max_abs(&(twice.matrix() - once.matrix())) < 1e-14);
    }

    #[test]
    fn closed_form_matches_generic_projection() {
        let (ys, kernel) = hubbard_set(6, 2.2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = random_hermitian(pair_dim(6, SpinBlock::Singlet), &mut rng);
            let rk = apply_vec_projector(&kernel, &r);
            let fast = closed_form_update(&rk, 6);
            let generic = project_out(&rk, &ys);
            assert!(max_abs(&(fast.matrix() - generic.matrix())) < 1e-12);
        }
    }

    #[test]
    fn closed_form_fixed_points() {
        let (ys, kernel) = hubbard_set(6, 1.0);
        let y1 = &ys.ortho[0];
        assert!(closed_form_update(y1, 6).frobenius_norm() < 1e-13);
        // a kernel matrix with both correction sums zero is left alone
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = apply_vec_projector(&kernel, &random_hermitian(21, &mut rng));
        let clean = project_out(&r, &ys);
        assert!(max_abs(&(closed_form_update(&clean, 6).matrix() - clean.matrix())) < 1e-13);
    }
}
