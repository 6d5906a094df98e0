//! Generic alternating-projections engine over a list of affine constraints
//! `M_i = K_i + L_i[D]`, each required to be positive semidefinite.

use nalgebra::{DMatrix, DVector};

use super::conserved::{apply_vec_projector, project_conserved, ConservedOperatorSet};
use super::engine::{negative_part_and_min, PurificationConfig, PurificationReport};
use crate::error::{Error, Result};
use crate::matcore::{HermitianMatrix, OneRDM, SpinBlock, SpinBlock2RDM, C64};

/// Affine map from the vectorized 2RDM to a list of Hermitian blocks.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    pub offset: Vec<HermitianMatrix>,
    /// Acts on the concatenated column-major block vector of `D`.
    pub map: DMatrix<C64>,
}

impl AffineConstraint {
    pub fn new(offset: Vec<HermitianMatrix>, map: DMatrix<C64>) -> Result<Self> {
        let rows: usize = offset.iter().map(|b| b.dim() * b.dim()).sum();
        if map.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: map.nrows(),
            });
        }
        Ok(Self { offset, map })
    }

    /// The Q-condition: `Q = K + D` with the offset fixed by the 1RDM.
    pub fn hole_condition(d1: &OneRDM, particles: usize) -> Self {
        let k = super::hole::hole_offset(d1, particles);
        let n = k.singlet.dim().pow(2) + k.triplet.dim().pow(2);
        Self {
            offset: vec![k.singlet, k.triplet],
            map: DMatrix::identity(n, n),
        }
    }

    pub fn domain_dim(&self) -> usize {
        self.map.ncols()
    }

    /// `K + L x`, split into blocks.
    pub fn evaluate(&self, x: &DVector<C64>) -> Vec<HermitianMatrix> {
        let lx = &self.map * x;
        let mut out = Vec::with_capacity(self.offset.len());
        let mut at = 0;
        for k in &self.offset {
            let n = k.dim();
            let part = DMatrix::from_column_slice(n, n, &lx.as_slice()[at..at + n * n]);
            out.push(HermitianMatrix::hermitian_part(k.matrix() + part));
            at += n * n;
        }
        out
    }
}

fn stacked_map(constraints: &[AffineConstraint], dim: usize) -> Result<DMatrix<C64>> {
    let rows: usize = constraints.iter().map(|c| c.map.nrows()).sum();
    let mut l = DMatrix::<C64>::zeros(rows, dim);
    let mut at = 0;
    for c in constraints {
        if c.domain_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.domain_dim(),
            });
        }
        l.view_mut((at, 0), (c.map.nrows(), dim)).copy_from(&c.map);
        at += c.map.nrows();
    }
    Ok(l)
}

fn gram_inverse(l: &DMatrix<C64>, dim: usize) -> DMatrix<C64> {
    let c = DMatrix::<C64>::identity(dim, dim) + l.adjoint() * l;
    c.try_inverse().expect("I + L^H L is positive definite")
}

/// `P = [I; L] C^{-1} [I, L^H]` with `C = I + L^H L`, on the stacked space
/// `(vec D, vec M_1, ..., vec M_n)`.
pub fn assemble_projector(constraints: &[AffineConstraint], dim: usize) -> Result<DMatrix<C64>> {
    let l = stacked_map(constraints, dim)?;
    let cinv = gram_inverse(&l, dim);
    let mut left = DMatrix::<C64>::zeros(dim + l.nrows(), dim);
    left.view_mut((0, 0), (dim, dim)).fill_with_identity();
    left.view_mut((dim, 0), (l.nrows(), dim)).copy_from(&l);
    let right = left.adjoint();
    Ok(&left * cinv * right)
}

/// Engine state: the stacked map and `C^{-1}` are built once.
pub struct GenericPurifier {
    constraints: Vec<AffineConstraint>,
    cinv: DMatrix<C64>,
    kernels: Option<[DMatrix<C64>; 2]>,
    ys: ConservedOperatorSet,
    cfg: PurificationConfig,
}

impl GenericPurifier {
    /// `kernels` holds the singlet and triplet contraction-kernel projectors;
    /// `None` skips the contraction constraint.
    pub fn new(
        constraints: Vec<AffineConstraint>,
        dim: usize,
        kernels: Option<[DMatrix<C64>; 2]>,
        ys: ConservedOperatorSet,
        cfg: PurificationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let l = stacked_map(&constraints, dim)?;
        let cinv = gram_inverse(&l, dim);
        Ok(Self {
            constraints,
            cinv,
            kernels,
            ys,
            cfg,
        })
    }

    fn step_direction(&self, d: &SpinBlock2RDM) -> (DVector<C64>, f64) {
        let mut min = f64::INFINITY;
        let d_def = d.map_blocks(|_, h| {
            let (def, lo) = negative_part_and_min(h);
            if h.dim() > 0 {
                min = min.min(lo);
            }
            def
        });
        let x = DVector::from_vec(d.to_vec());
        let mut rhs = DVector::from_vec(d_def.to_vec());
        for c in &self.constraints {
            let blocks = c.evaluate(&x);
            let mut v: Vec<C64> = Vec::with_capacity(c.map.nrows());
            for b in &blocks {
                let (def, lo) = negative_part_and_min(b);
                if b.dim() > 0 {
                    min = min.min(lo);
                }
                v.extend(def.to_vec());
            }
            rhs += c.map.adjoint() * DVector::from_vec(v);
        }
        (&self.cinv * rhs, (-min).max(0.0))
    }

    fn project_perp(&self, m: SpinBlock2RDM) -> SpinBlock2RDM {
        let k = match &self.kernels {
            Some([ks, kt]) => m.map_blocks(|b, h| match b {
                SpinBlock::Singlet => apply_vec_projector(ks, h),
                SpinBlock::Triplet => apply_vec_projector(kt, h),
            }),
            None => m,
        };
        project_conserved(&k, &self.ys)
    }

    pub fn purify(&self, d0: &SpinBlock2RDM) -> Result<(SpinBlock2RDM, PurificationReport)> {
        let tol = self.cfg.tolerance_for(d0);
        let mut d = d0.clone();
        let (mut dir, mut dft) = self.step_direction(&d);
        let mut defects = vec![dft];
        let mut best = (dft, d.clone());
        let mut k = 0;
        while dft > tol && k < self.cfg.k_max {
            let m = SpinBlock2RDM::from_vec(d.sites, d.particles, dir.as_slice());
            let update = self.project_perp(m).scale(self.cfg.alpha);
            d = d.sub(&update);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("generic purification iterate {}", k + 1)));
            }
            k += 1;
            (dir, dft) = self.step_direction(&d);
            defects.push(dft);
            if dft <= best.0 {
                best = (dft, d.clone());
            }
        }
        let (final_defect, out) = best;
        Ok((out, PurificationReport::finish(defects, final_defect, tol)))
    }
}

/// One-shot generic purification.
pub fn generic_purify(
    d0: &SpinBlock2RDM,
    constraints: Vec<AffineConstraint>,
    kernels: Option<[DMatrix<C64>; 2]>,
    ys: &ConservedOperatorSet,
    cfg: &PurificationConfig,
) -> Result<(SpinBlock2RDM, PurificationReport)> {
    let dim = d0.to_vec().len();
    GenericPurifier::new(constraints, dim, kernels, ys.clone(), *cfg)?.purify(d0)
}
