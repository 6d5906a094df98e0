//! Specialized purification of the spin-adapted 2RDM under the D- and
//! Q-conditions, contraction consistency and conserved observables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::conserved::{closed_form_update, project_conserved, ConservedOperatorSet};
use super::hole::{hole_from_parts, hole_from_particle};
use crate::error::{Error, Result};
use crate::matcore::{
    build_contraction_map, contract_2rdm, eigh, kernel_projector, row_space_basis, HermitianMatrix, SpinBlock, SpinBlock2RDM,
    NEG_EIG_REL_EPS,
};

/// The pair `(D_12, Q_12)` iterated by the purification loop.
#[derive(Clone, Debug, PartialEq)]
pub struct MVector {
    pub d: SpinBlock2RDM,
    pub q: SpinBlock2RDM,
}

impl MVector {
    pub fn from_particle(d: SpinBlock2RDM) -> Result<Self> {
        let q = hole_from_particle(&d)?;
        Ok(Self { d, q })
    }

    /// Largest per-block Frobenius distance between `q` and the hole RDM of `d`.
    pub fn consistency_error(&self) -> Result<f64> {
        let q = hole_from_particle(&self.d)?;
        Ok(SpinBlock::ALL
            .iter()
            .map(|&b| (q.block(b) - self.q.block(b)).frobenius_norm())
            .fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurificationConfig {
    pub alpha: f64,
    pub k_max: usize,
    /// Stopping tolerance on the defect, relative to the total trace of `D_12`.
    pub defect_tol_rel: f64,
}

impl Default for PurificationConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            k_max: 100,
            defect_tol_rel: 1e-12,
        }
    }
}

impl PurificationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.defect_tol_rel > 0.0) {
            return Err(Error::InvalidConfig("defect tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Absolute defect tolerance for a given 2RDM.
    pub fn tolerance_for(&self, d: &SpinBlock2RDM) -> f64 {
        self.defect_tol_rel * d.total_trace().abs().max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurificationReport {
    pub iterations_used: usize,
    pub defect_initial: f64,
    pub defect_final: f64,
    pub per_iteration_defects: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

impl PurificationReport {
    pub(crate) fn finish(defects: Vec<f64>, defect_final: f64, tolerance: f64) -> Self {
        Self {
            iterations_used: defects.len() - 1,
            defect_initial: defects[0],
            defect_final,
            converged: defect_final <= tolerance,
            per_iteration_defects: defects,
            tolerance,
        }
    }
}

/// `½ (D_def + Q_def)` per block.
pub fn dq_couple(d_def: &SpinBlock2RDM, q_def: &SpinBlock2RDM) -> SpinBlock2RDM {
    d_def.zip_blocks(q_def, |_, a, b| (a + b).scale(0.5))
}

/// Negative part and smallest eigenvalue from one decomposition.
pub(crate) fn negative_part_and_min(h: &HermitianMatrix) -> (HermitianMatrix, f64) {
    let n = h.dim();
    if n == 0 {
        return (HermitianMatrix::zeros(0), 0.0);
    }
    let eig = eigh(h);
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eps = NEG_EIG_REL_EPS * scale;
    let neg: Vec<usize> = (0..n).filter(|&k| eig.values[k] < -eps).collect();
    let min = eig.values[0];
    if neg.is_empty() {
        return (HermitianMatrix::zeros(n), min);
    }
    let v = DMatrix::from_fn(n, neg.len(), |i, j| eig.vectors[(i, neg[j])]);
    let vg = DMatrix::from_fn(n, neg.len(), |i, j| eig.vectors[(i, neg[j])] * eig.values[neg[j]]);
    (HermitianMatrix::hermitian_part(crate::matcore::matmul(&vg, &v.adjoint())), min)
}

fn with_adjoint(r: DMatrix<crate::matcore::C64>) -> (DMatrix<crate::matcore::C64>, DMatrix<crate::matcore::C64>) {
    let ra = r.adjoint();
    (r, ra)
}

/// `v - R^† (R v)` on `vec(h)` for a row-orthonormal `R`.
fn project_kernel_factored(
    r: &(DMatrix<crate::matcore::C64>, DMatrix<crate::matcore::C64>),
    h: &HermitianMatrix,
) -> HermitianMatrix {
    use crate::matcore::{gemm_into, matmul, C64};
    let n = h.dim();
    let mut w = DMatrix::from_column_slice(n * n, 1, h.matrix().as_slice());
    let rv = matmul(&r.0, &w);
    gemm_into(C64::new(-1.0, 0.0), &r.1, &rv, C64::new(1.0, 0.0), &mut w);
    HermitianMatrix::hermitian_part(DMatrix::from_column_slice(n, n, w.as_slice()))
}

/// `-min` over the spectra of all four blocks, clamped at zero.
pub fn defect(m: &MVector) -> f64 {
    let mut min = f64::INFINITY;
    for x in [&m.d, &m.q] {
        for b in SpinBlock::ALL {
            let h = x.block(b);
            if h.dim() > 0 {
                min = min.min(crate::matcore::eigvalsh(h)[0]);
            }
        }
    }
    (-min).max(0.0)
}

/// Purification engine bound to one lattice size. Owns the kernel
/// projectors of both blocks and the conserved set.
#[derive(Clone, Debug)]
pub struct Purifier {
    sites: usize,
    kernel_singlet: DMatrix<crate::matcore::C64>,
    kernel_triplet: DMatrix<crate::matcore::C64>,
    /// Row-space bases of the contraction maps; `P_K v = v - R^† R v`.
    range_singlet: (DMatrix<crate::matcore::C64>, DMatrix<crate::matcore::C64>),
    range_triplet: (DMatrix<crate::matcore::C64>, DMatrix<crate::matcore::C64>),
    ys: ConservedOperatorSet,
    cfg: PurificationConfig,
    closed_form: bool,
}

struct Defective {
    d: SpinBlock2RDM,
    q: SpinBlock2RDM,
    defect: f64,
}

impl Purifier {
    pub fn new(sites: usize, ys: ConservedOperatorSet, cfg: PurificationConfig) -> Result<Self> {
        cfg.validate()?;
        let a_s = build_contraction_map(sites, SpinBlock::Singlet);
        let a_t = build_contraction_map(sites, SpinBlock::Triplet);
        Ok(Self {
            sites,
            kernel_singlet: kernel_projector(&a_s),
            kernel_triplet: kernel_projector(&a_t),
            range_singlet: with_adjoint(row_space_basis(&a_s)),
            range_triplet: with_adjoint(row_space_basis(&a_t)),
            ys,
            cfg,
            closed_form: false,
        })
    }

    /// Use the closed-form singlet update instead of the generic projection.
    /// Only valid when the conserved set is the Hubbard pair `(Y_1, Y_2)`.
    pub fn with_closed_form(mut self) -> Self {
        self.closed_form = self.ys.len() == 2;
        self
    }

    pub fn config(&self) -> &PurificationConfig {
        &self.cfg
    }

    pub fn conserved(&self) -> &ConservedOperatorSet {
        &self.ys
    }

    pub fn kernel(&self, block: SpinBlock) -> &DMatrix<crate::matcore::C64> {
        match block {
            SpinBlock::Singlet => &self.kernel_singlet,
            SpinBlock::Triplet => &self.kernel_triplet,
        }
    }

    fn defective(&self, m: &MVector) -> Defective {
        let mut min = f64::INFINITY;
        let mut split = |x: &SpinBlock2RDM| {
            x.map_blocks(|_, h| {
                let (def, lo) = negative_part_and_min(h);
                if h.dim() > 0 {
                    min = min.min(lo);
                }
                def
            })
        };
        let d = split(&m.d);
        let q = split(&m.q);
        Defective {
            d,
            q,
            defect: (-min).max(0.0),
        }
    }

    /// Kernel projection of each block, then removal of the conserved
    /// components from the singlet.
    pub fn project_update(&self, m_def: &SpinBlock2RDM) -> SpinBlock2RDM {
        let k = m_def.map_blocks(|b, h| {
            let r = match b {
                SpinBlock::Singlet => &self.range_singlet,
                SpinBlock::Triplet => &self.range_triplet,
            };
            project_kernel_factored(r, h)
        });
        if self.closed_form {
            SpinBlock2RDM {
                singlet: closed_form_update(&k.singlet, self.sites),
                ..k
            }
        } else {
            project_conserved(&k, &self.ys)
        }
    }

    /// Random direction that changes neither the contraction nor any
    /// conserved expectation value, scaled to HS norm `norm`.
    pub fn admissible_direction<R: rand::Rng + ?Sized>(&self, rng: &mut R, particles: usize, norm: f64) -> SpinBlock2RDM {
        let raw = SpinBlock2RDM::zeros(self.sites, particles)
            .map_blocks(|_, h| crate::matcore::random_hermitian(h.dim(), rng));
        let dir = self.project_update(&raw);
        let n = dir.frobenius_norm();
        dir.scale(norm / n)
    }

    pub fn purify(&self, m0: &MVector) -> Result<(MVector, PurificationReport)> {
        if m0.d.sites != self.sites {
            return Err(Error::DimensionMismatch {
                expected: self.sites,
                got: m0.d.sites,
            });
        }
        let tol = self.cfg.tolerance_for(&m0.d);
        let mut m = m0.clone();
        let mut parts = self.defective(&m);
        let mut defects = vec![parts.defect];
        let mut best = (parts.defect, m.clone());
        let mut k = 0;
        while parts.defect > tol && k < self.cfg.k_max {
            let update = self.project_update(&dq_couple(&parts.d, &parts.q)).scale(self.cfg.alpha);
            m.d = m.d.sub(&update);
            m.q = m.q.sub(&update);
            if !m.d.is_finite() || !m.q.is_finite() {
                return Err(Error::NonFinite(format!("purification iterate {}", k + 1)));
            }
            k += 1;
            parts = self.defective(&m);
            defects.push(parts.defect);
            if parts.defect <= best.0 {
                best = (parts.defect, m.clone());
            }
        }
        let (final_defect, out) = best;
        Ok((out, PurificationReport::finish(defects, final_defect, tol)))
    }

    /// Purifies a particle RDM; the hole RDM is built from it.
    pub fn purify_2rdm(&self, d: &SpinBlock2RDM) -> Result<(SpinBlock2RDM, PurificationReport)> {
        let d1 = contract_2rdm(d)?;
        let m0 = MVector {
            q: hole_from_parts(d, &d1),
            d: d.clone(),
        };
        let (m, report) = self.purify(&m0)?;
        Ok((m.d, report))
    }
}

/// One-shot purification; builds the kernel projectors on every call.
pub fn purify(m0: &MVector, ys: &ConservedOperatorSet, cfg: &PurificationConfig) -> Result<(MVector, PurificationReport)> {
    Purifier::new(m0.d.sites, ys.clone(), *cfg)?.purify(m0)
}
