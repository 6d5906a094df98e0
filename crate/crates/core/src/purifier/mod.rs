//! Projective purification: alternating projections onto the D/Q cones, the
//! contraction kernel and the complement of the conserved operators.

mod conserved;
mod engine;
mod generic;
mod hole;

pub use conserved::{
    closed_form_update, apply_vec_projector, build_conserved_set, build_conserved_set_with_kernel, project_conserved,
    project_out, y1_index_formula, y2_index_formula, ConservedOperatorSet, GRAM_SCHMIDT_DROP_TOL,
};
pub use engine::{defect, dq_couple, purify, MVector, PurificationConfig, PurificationReport, Purifier};
pub use generic::{assemble_projector, generic_purify, AffineConstraint, GenericPurifier};
pub use hole::{hole_from_parts, hole_from_particle, hole_offset, hole_offset_block};

use crate::error::Result;
use crate::hubbard::{conserved_ops, HubbardConfig};
use crate::matcore::{build_contraction_map, kernel_projector, SpinBlock};

/// Conserved set `{Y_1, Y_2}` of the Hubbard chain (interaction and η-pairing).
pub fn hubbard_conserved_set(cfg: &HubbardConfig) -> Result<ConservedOperatorSet> {
    let (x1, x2) = conserved_ops(cfg);
    let kernel = kernel_projector(&build_contraction_map(cfg.sites, SpinBlock::Singlet));
    build_conserved_set_with_kernel(&[x1, x2], &kernel)
}

/// Purifier for the Hubbard chain with its conserved set.
pub fn hubbard_purifier(cfg: &HubbardConfig, pcfg: PurificationConfig) -> Result<Purifier> {
    Purifier::new(cfg.sites, hubbard_conserved_set(cfg)?, pcfg)
}
