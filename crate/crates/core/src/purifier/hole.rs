//! Hole RDM from the particle RDM for the spin-adapted two-particle blocks.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::matcore::{compress_block, contract_2rdm, HermitianMatrix, OneRDM, SpinBlock, SpinBlock2RDM, C64};

/// Affine offset `K_c = 2 V^T [(1 - d)⊗(1 - d) - d⊗d] V` of one block, so that
/// `Q_c = D_c + K_c`.
pub fn hole_offset_block(d1: &HermitianMatrix, sites: usize, block: SpinBlock) -> HermitianMatrix {
    let d = d1.matrix();
    let a = DMatrix::<C64>::identity(sites, sites) - d;
    let e = a.kronecker(&a) - d.kronecker(d);
    HermitianMatrix::hermitian_part(compress_block(&e, sites, block) * C64::new(2.0, 0.0))
}

/// Offsets of both blocks, in [`SpinBlock2RDM`] layout.
pub fn hole_offset(d1: &OneRDM, particles: usize) -> SpinBlock2RDM {
    let m = d1.sites();
    SpinBlock2RDM {
        singlet: hole_offset_block(&d1.matrix, m, SpinBlock::Singlet),
        triplet: hole_offset_block(&d1.matrix, m, SpinBlock::Triplet),
        particles,
        sites: m,
    }
}

/// `Q_12` from `D_12` and an explicitly given one-particle RDM.
pub fn hole_from_parts(d: &SpinBlock2RDM, d1: &OneRDM) -> SpinBlock2RDM {
    d.add(&hole_offset(d1, d.particles))
}

/// `Q_12` with the one-particle RDM taken from the contraction of `d`.
/// With no particles the one-particle RDM is zero.
pub fn hole_from_particle(d: &SpinBlock2RDM) -> Result<SpinBlock2RDM> {
    let d1 = if d.particles == 0 {
        OneRDM {
            matrix: HermitianMatrix::zeros(d.sites),
            particles: 0,
        }
    } else {
        contract_2rdm(d)?
    };
    Ok(hole_from_parts(d, &d1))
}
