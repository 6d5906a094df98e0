//! Spin-adapted storage of the two-particle RDM and its contraction to the
//! one-particle level.
//!
//! A full spin-free pair index `(i, j)` runs over `M_s^2` ordered site pairs
//! (flattened as `i * M_s + j`). The singlet block lives on the symmetric
//! combinations and the triplet block on the antisymmetric ones; both are
//! stored in the orthonormal bases
//!
//! * singlet: `|ii>` and `(|ij> + |ji>)/√2` for `i < j`,
//! * triplet: `(|ij> - |ji>)/√2` for `i < j`,
//!
//! so Hilbert-Schmidt products, spectra and traces coincide with those of
//! the redundant `M_s^2 x M_s^2` matrices.

use std::fmt;

use nalgebra::DMatrix;

use super::hermitian::{HermitianMatrix, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpinBlock {
    Singlet,
    Triplet,
}

impl SpinBlock {
    pub const ALL: [SpinBlock; 2] = [SpinBlock::Singlet, SpinBlock::Triplet];

    pub fn name(self) -> &'static str {
        match self {
            SpinBlock::Singlet => "singlet",
            SpinBlock::Triplet => "triplet",
        }
    }

    /// Number of spin components carried by the block (1 or 3).
    pub fn multiplicity(self) -> f64 {
        match self {
            SpinBlock::Singlet => 1.0,
            SpinBlock::Triplet => 3.0,
        }
    }
}

impl fmt::Display for SpinBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn pair_dim(sites: usize, block: SpinBlock) -> usize {
    match block {
        SpinBlock::Singlet => sites * (sites + 1) / 2,
        SpinBlock::Triplet => sites * sites.saturating_sub(1) / 2,
    }
}

/// Site pairs spanning a block, in storage order (`i <= j` resp. `i < j`, row-major).
pub fn pair_list(sites: usize, block: SpinBlock) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_dim(sites, block));
    for i in 0..sites {
        let start = match block {
            SpinBlock::Singlet => i,
            SpinBlock::Triplet => i + 1,
        };
        for j in start..sites {
            out.push((i, j));
        }
    }
    out
}

/// Position of the unordered pair `{i, j}` inside a block, with the sign of the
/// basis vector component on the ordered pair `(i, j)`.
pub fn pair_index(sites: usize, block: SpinBlock, i: usize, j: usize) -> Option<(usize, f64)> {
    let (a, b, sign) = if i <= j { (i, j, 1.0) } else { (j, i, -1.0) };
    match block {
        SpinBlock::Singlet => {
            // row r holds sites - r entries
            let idx = a * sites - a * a.saturating_sub(1) / 2 + (b - a);
            Some((idx, 1.0))
        }
        SpinBlock::Triplet => {
            if a == b {
                return None;
            }
            let idx = a * (2 * sites - a - 1) / 2 + (b - a - 1);
            Some((idx, sign))
        }
    }
}

/// Isometry `V` (`M_s^2 x n`) from the block basis into the full ordered-pair space.
pub fn isometry(sites: usize, block: SpinBlock) -> DMatrix<f64> {
    let pairs = pair_list(sites, block);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = DMatrix::zeros(sites * sites, pairs.len());
    for (col, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            v[(i * sites + i, col)] = 1.0;
        } else {
            v[(i * sites + j, col)] = s;
            v[(j * sites + i, col)] = match block {
                SpinBlock::Singlet => s,
                SpinBlock::Triplet => -s,
            };
        }
    }
    v
}

/// Nonzero entry `(column, value)` of row `i * M_s + j` of the isometry.
fn isometry_entry(sites: usize, block: SpinBlock, i: usize, j: usize) -> Option<(usize, f64)> {
    let (k, sign) = pair_index(sites, block, i, j)?;
    Some((k, if i == j { 1.0 } else { sign * std::f64::consts::FRAC_1_SQRT_2 }))
}

fn isometry_rows(sites: usize, block: SpinBlock) -> Vec<Option<(usize, f64)>> {
    (0..sites * sites)
        .map(|a| isometry_entry(sites, block, a / sites, a % sites))
        .collect()
}

/// `V B V^T`: the block as a redundant `M_s^2 x M_s^2` matrix.
pub fn expand_block(b: &DMatrix<C64>, sites: usize, block: SpinBlock) -> DMatrix<C64> {
    let rows = isometry_rows(sites, block);
    let n = sites * sites;
    let mut out = DMatrix::zeros(n, n);
    for (c, rc) in rows.iter().enumerate() {
        let Some((kc, vc)) = *rc else { continue };
        for (r, rr) in rows.iter().enumerate() {
            if let Some((kr, vr)) = *rr {
                out[(r, c)] = b[(kr, kc)] * (vr * vc);
            }
        }
    }
    out
}

/// `V^T F V`: restriction of a full pair-space matrix onto the block.
pub fn compress_block(f: &DMatrix<C64>, sites: usize, block: SpinBlock) -> DMatrix<C64> {
    let rows = isometry_rows(sites, block);
    let dim = pair_dim(sites, block);
    let mut out = DMatrix::zeros(dim, dim);
    for (c, rc) in rows.iter().enumerate() {
        let Some((kc, vc)) = *rc else { continue };
        for (r, rr) in rows.iter().enumerate() {
            if let Some((kr, vr)) = *rr {
                out[(kr, kc)] += f[(r, c)] * (vr * vc);
            }
        }
    }
    out
}

/// `out[i][j] = Σ_k F[(i k), (j k)]` on the full ordered-pair space.
pub fn partial_trace_second(f: &DMatrix<C64>, sites: usize) -> DMatrix<C64> {
    DMatrix::from_fn(sites, sites, |i, j| {
        (0..sites).map(|k| f[(i * sites + k, j * sites + k)]).sum()
    })
}

/// Two-particle RDM of an `S^2 = 0`, `S_z = 0` state in spin-adapted form.
///
/// Normalization: `Tr(singlet) + 3 Tr(triplet) = N (N - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinBlock2RDM {
    pub singlet: HermitianMatrix,
    pub triplet: HermitianMatrix,
    pub particles: usize,
    pub sites: usize,
}

impl SpinBlock2RDM {
    pub fn new(sites: usize, particles: usize, singlet: HermitianMatrix, triplet: HermitianMatrix) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 sites, got {sites}")));
        }
        for (blk, m) in [(SpinBlock::Singlet, &singlet), (SpinBlock::Triplet, &triplet)] {
            let expected = pair_dim(sites, blk);
            if m.dim() != expected {
                return Err(Error::DimensionMismatch { expected, got: m.dim() });
            }
        }
        Ok(Self {
            singlet,
            triplet,
            particles,
            sites,
        })
    }

    pub fn zeros(sites: usize, particles: usize) -> Self {
        Self {
            singlet: HermitianMatrix::zeros(pair_dim(sites, SpinBlock::Singlet)),
            triplet: HermitianMatrix::zeros(pair_dim(sites, SpinBlock::Triplet)),
            particles,
            sites,
        }
    }

    pub fn block(&self, b: SpinBlock) -> &HermitianMatrix {
        match b {
            SpinBlock::Singlet => &self.singlet,
            SpinBlock::Triplet => &self.triplet,
        }
    }

    pub fn block_mut(&mut self, b: SpinBlock) -> &mut HermitianMatrix {
        match b {
            SpinBlock::Singlet => &mut self.singlet,
            SpinBlock::Triplet => &mut self.triplet,
        }
    }

    pub fn total_trace(&self) -> f64 {
        self.singlet.trace() + 3.0 * self.triplet.trace()
    }

    /// Plain HS norm of the pair `(singlet, triplet)`.
    pub fn frobenius_norm(&self) -> f64 {
        (self.singlet.frobenius_norm().powi(2) + self.triplet.frobenius_norm().powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.singlet.is_finite() && self.triplet.is_finite()
    }

    pub fn map_blocks(&self, mut f: impl FnMut(SpinBlock, &HermitianMatrix) -> HermitianMatrix) -> Self {
        Self {
            singlet: f(SpinBlock::Singlet, &self.singlet),
            triplet: f(SpinBlock::Triplet, &self.triplet),
            particles: self.particles,
            sites: self.sites,
        }
    }

    pub fn zip_blocks(
        &self,
        other: &Self,
        mut f: impl FnMut(SpinBlock, &HermitianMatrix, &HermitianMatrix) -> HermitianMatrix,
    ) -> Self {
        Self {
            singlet: f(SpinBlock::Singlet, &self.singlet, &other.singlet),
            triplet: f(SpinBlock::Triplet, &self.triplet, &other.triplet),
            particles: self.particles,
            sites: self.sites,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_blocks(other, |_, a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_blocks(other, |_, a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map_blocks(|_, a| a.scale(factor))
    }

    /// Concatenated column-major vectorization `(vec S, vec T)`.
    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = self.singlet.to_vec();
        v.extend(self.triplet.to_vec());
        v
    }

    pub fn from_vec(sites: usize, particles: usize, v: &[C64]) -> Self {
        let ns = pair_dim(sites, SpinBlock::Singlet);
        let nt = pair_dim(sites, SpinBlock::Triplet);
        assert_eq!(v.len(), ns * ns + nt * nt);
        Self {
            singlet: HermitianMatrix::from_vec(ns, &v[..ns * ns]),
            triplet: HermitianMatrix::from_vec(nt, &v[ns * ns..]),
            particles,
            sites,
        }
    }
}

/// One-particle RDM of a single spin channel (`spin-up = spin-down`).
#[derive(Clone, Debug, PartialEq)]
pub struct OneRDM {
    pub matrix: HermitianMatrix,
    pub particles: usize,
}

impl OneRDM {
    pub fn sites(&self) -> usize {
        self.matrix.dim()
    }

    /// Occupation of each site summed over both spins.
    pub fn site_densities(&self) -> Vec<f64> {
        (0..self.sites()).map(|i| 2.0 * self.matrix.matrix()[(i, i)].re).collect()
    }
}

/// Contraction of a block's expansion over the second site index
/// (`M_s^2 x n^2`, acting on column-major `vec(B)`).
pub fn build_contraction_map(sites: usize, block: SpinBlock) -> DMatrix<C64> {
    let v = isometry(sites, block);
    let n = v.ncols();
    let mut a = DMatrix::<C64>::zeros(sites * sites, n * n);
    for b in 0..n {
        for a_ in 0..n {
            let col = a_ + b * n;
            // Tr_2 (v_a v_b^T)
            for i in 0..sites {
                for j in 0..sites {
                    let s: f64 = (0..sites).map(|k| v[(i * sites + k, a_)] * v[(j * sites + k, b)]).sum();
                    if s != 0.0 {
                        a[(i + j * sites, col)] = C64::new(s, 0.0);
                    }
                }
            }
        }
    }
    a
}

/// Partial trace of one block (unnormalized, no multiplicity weight).
pub fn block_partial_trace(b: &HermitianMatrix, sites: usize, block: SpinBlock) -> DMatrix<C64> {
    partial_trace_second(&expand_block(b.matrix(), sites, block), sites)
}

/// `D_1 = Tr_2 D_12 / (N - 1)` for one spin channel:
/// `d = (½ Tr_2 S + 3/2 Tr_2 T) / (N - 1)` on the expanded blocks.
pub fn contract_2rdm(d: &SpinBlock2RDM) -> Result<OneRDM> {
    if d.particles <= 1 {
        return Err(Error::InvalidConfig(format!(
            "contraction needs at least two particles, got {}",
            d.particles
        )));
    }
    let ts = block_partial_trace(&d.singlet, d.sites, SpinBlock::Singlet);
    let tt = block_partial_trace(&d.triplet, d.sites, SpinBlock::Triplet);
    let norm = 1.0 / (d.particles as f64 - 1.0);
    let m = (ts * C64::new(0.5 * norm, 0.0)) + (tt * C64::new(1.5 * norm, 0.0));
    Ok(OneRDM {
        matrix: HermitianMatrix::hermitian_part(m),
        particles: d.particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::hermitian::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pair_index_matches_pair_list() {
        for m in 2..7 {
            for blk in SpinBlock::ALL {
                for (k, &(i, j)) in pair_list(m, blk).iter().enumerate() {
                    assert_eq!(pair_index(m, blk, i, j).unwrap().0, k);
                    assert_eq!(pair_index(m, blk, j, i).unwrap().0, k);
                }
            }
            assert!(pair_index(m, SpinBlock::Triplet, 1, 1).is_none());
        }
    }

    #[test]
    fn isometry_is_orthonormal() {
        for m in 2..6 {
            for blk in SpinBlock::ALL {
                let v = isometry(m, blk);
                let g = v.transpose() * &v;
                assert!((g - DMatrix::<f64>::identity(v.ncols(), v.ncols())).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn contraction_map_matches_direct_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [2, 3, 4, 6] {
            for blk in SpinBlock::ALL {
                let n = pair_dim(m, blk);
                if n == 0 {
                    continue;
                }
                let a = build_contraction_map(m, blk);
                assert_eq!(a.shape(), (m * m, n * n));
                let b = random_hermitian(n, &mut rng);
                let via_map = &a * nalgebra::DVector::from_vec(b.to_vec());
                let direct = block_partial_trace(&b, m, blk);
                let diff: f64 = via_map.iter().zip(direct.as_slice()).map(|(x, y)| (x - y).norm()).sum();
                assert!(diff < 1e-13, "m={m} {blk}: {diff}");
            }
        }
    }

    #[test]
    fn identity_block_contracts_to_multiple_of_identity() {
        for m in [2, 3, 5] {
            for blk in SpinBlock::ALL {
                let n = pair_dim(m, blk);
                let t = block_partial_trace(&HermitianMatrix::identity(n), m, blk);
                let c0 = t[(0, 0)];
                let expected = DMatrix::<C64>::identity(m, m) * c0;
                assert!((t - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn contraction_map_column_sums_follow_trace_identity() {
        // Tr(Tr_2 B) = Tr B for a block supported on its own pair subspace.
        let a = build_contraction_map(2, SpinBlock::Singlet);
        for col in 0..9 {
            let (ra, rb) = (col % 3, col / 3);
            let tr: C64 = (0..2).map(|i| a[(i + i * 2, col)]).sum();
            let expected = if ra == rb { 1.0 } else { 0.0 };
            assert!((tr.re - expected).abs() < 1e-15 && tr.im.abs() < 1e-15);
        }
    }

    #[test]
    fn contraction_rejects_small_particle_number() {
        let d = SpinBlock2RDM::zeros(2, 1);
        assert!(contract_2rdm(&d).is_err());
    }
}
