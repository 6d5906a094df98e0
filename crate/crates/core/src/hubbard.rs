//! One-dimensional Fermi-Hubbard chain with hard-wall boundaries and a
//! harmonic trap that is switched off at `t = 0`.
//!
//! Sites are labelled `1..=M_s` in formulas; arrays are indexed from zero.
//! Spin orbitals are flattened as `p = i + M_s * σ` with `σ = 0` (up) and
//! `σ = 1` (down).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    compress_block, contract_2rdm, expand_block, hermiticity_deviation, isometry, max_abs, pair_dim, pair_index, HermitianMatrix,
    SpinBlock, SpinBlock2RDM, C64,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubbardConfig {
    pub sites: usize,
    pub particles: usize,
    /// Hopping amplitude `J` (the energy unit).
    pub hopping: f64,
    /// On-site interaction `U`.
    pub interaction: f64,
    /// Trap strength `V`, active only for `t < 0`.
    pub trap: f64,
}

impl HubbardConfig {
    /// Half filling, `J = 1`.
    pub fn half_filled(sites: usize, interaction: f64, trap: f64) -> Self {
        Self {
            sites,
            particles: sites,
            hopping: 1.0,
            interaction,
            trap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidConfig(format!("M_s must be >= 2, got {}", self.sites)));
        }
        if self.particles % 2 != 0 {
            return Err(Error::InvalidConfig(format!("N must be even, got {}", self.particles)));
        }
        if self.particles / 2 > self.sites {
            return Err(Error::InvalidConfig("more particles per spin than sites".into()));
        }
        if !(self.hopping > 0.0) {
            return Err(Error::InvalidConfig(format!("J must be positive, got {}", self.hopping)));
        }
        if !self.interaction.is_finite() || !self.trap.is_finite() {
            return Err(Error::InvalidConfig("U and V must be finite".into()));
        }
        Ok(())
    }

    pub fn spin_orbitals(&self) -> usize {
        2 * self.sites
    }

    /// `V_i(t) = θ(-t) (V²/2) (i - (M_s+1)/2)²` for 1-based `i`, with `θ(0) = 0`.
    pub fn trap_potential(&self, site: usize, t: f64) -> f64 {
        if t < 0.0 {
            let x = (site + 1) as f64 - (self.sites as f64 + 1.0) / 2.0;
            0.5 * self.trap * self.trap * x * x
        } else {
            0.0
        }
    }
}

/// Single-particle Hamiltonian (one spin channel).
pub fn h1_matrix(cfg: &HubbardConfig, t: f64) -> HermitianMatrix {
    let m = cfg.sites;
    let h = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            C64::new(cfg.trap_potential(i, t), 0.0)
        } else if i.abs_diff(j) == 1 {
            C64::new(-cfg.hopping, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    HermitianMatrix::hermitian_part(h)
}

/// Interaction on the singlet block: `U` on same-site pairs. Vanishes on the triplet.
pub fn w12_singlet(cfg: &HubbardConfig) -> HermitianMatrix {
    let mut diag = vec![0.0; pair_dim(cfg.sites, SpinBlock::Singlet)];
    for i in 0..cfg.sites {
        diag[pair_index(cfg.sites, SpinBlock::Singlet, i, i).unwrap().0] = cfg.interaction;
    }
    HermitianMatrix::from_real_diagonal(&diag)
}

fn same_site_entry(ds: &HermitianMatrix, sites: usize, i: usize, j: usize) -> C64 {
    let a = pair_index(sites, SpinBlock::Singlet, i, i).unwrap().0;
    let b = pair_index(sites, SpinBlock::Singlet, j, j).unwrap().0;
    ds.matrix()[(a, b)]
}

/// `⟨W⟩ = (U/2) Σ_i [D^S]^{ii}_{ii}`.
pub fn interaction_energy(cfg: &HubbardConfig, ds: &HermitianMatrix) -> f64 {
    let s: f64 = (0..cfg.sites).map(|i| same_site_entry(ds, cfg.sites, i, i).re).sum();
    0.5 * cfg.interaction * s
}

/// `⟨η⁺η⁻⟩ = ½ Σ_ij (-1)^{i+j} [D^S]^{jj}_{ii}`.
pub fn eta_expectation(ds: &HermitianMatrix, sites: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..sites {
        for j in 0..sites {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * same_site_entry(ds, sites, j, i).re;
        }
    }
    0.5 * s
}

/// The interaction operator `X_1` and the η-pairing operator `X_2` as
/// singlet-block matrices, so that `Tr(X_1 D^S) = ⟨W⟩` and `Tr(X_2 D^S) = ⟨η⁺η⁻⟩`.
pub fn conserved_ops(cfg: &HubbardConfig) -> (HermitianMatrix, HermitianMatrix) {
    let m = cfg.sites;
    let n = pair_dim(m, SpinBlock::Singlet);
    let mut x1 = DMatrix::<C64>::zeros(n, n);
    let mut x2 = DMatrix::<C64>::zeros(n, n);
    for i in 0..m {
        let a = pair_index(m, SpinBlock::Singlet, i, i).unwrap().0;
        x1[(a, a)] = C64::new(0.5 * cfg.interaction, 0.0);
        for j in 0..m {
            let b = pair_index(m, SpinBlock::Singlet, j, j).unwrap().0;
            let sign = if (i + j) % 2 == 0 { 0.5 } else { -0.5 };
            x2[(a, b)] = C64::new(sign, 0.0);
        }
    }
    (HermitianMatrix::hermitian_part(x1), HermitianMatrix::hermitian_part(x2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub site_densities: Vec<f64>,
    pub interaction_energy: f64,
    pub eta: f64,
    pub total_energy: f64,
}

/// Densities and energies evaluated from the 2RDM alone.
pub fn observables(cfg: &HubbardConfig, d12: &SpinBlock2RDM, t: f64) -> Result<Observables> {
    let d1 = contract_2rdm(d12)?;
    let h = h1_matrix(cfg, t);
    // both spin channels
    let one_body: f64 = 2.0 * crate::matcore::hs_inner(&h, &d1.matrix)?.re;
    let e_int = interaction_energy(cfg, &d12.singlet);
    Ok(Observables {
        site_densities: d1.site_densities(),
        interaction_energy: e_int,
        eta: eta_expectation(&d12.singlet, cfg.sites),
        total_energy: one_body + e_int,
    })
}

#[inline]
pub fn spin_orbital(site: usize, spin: usize, sites: usize) -> usize {
    site + sites * spin
}

/// Mixed-spin block `D^{↑↓}[(i1 i2),(j1 j2)] = ⟨a†_{j1↑} a†_{j2↓} a_{i2↓} a_{i1↑}⟩`
/// reassembled from the singlet and triplet blocks.
pub fn updown_from_blocks(d: &SpinBlock2RDM) -> DMatrix<C64> {
    let s = expand_block(d.singlet.matrix(), d.sites, SpinBlock::Singlet);
    let t = expand_block(d.triplet.matrix(), d.sites, SpinBlock::Triplet);
    (s + t) * C64::new(0.5, 0.0)
}

/// Inverse of [`updown_from_blocks`] for an `S² = 0` mixed-spin block.
pub fn blocks_from_updown(ud: &DMatrix<C64>, sites: usize, particles: usize) -> SpinBlock2RDM {
    let s = compress_block(ud, sites, SpinBlock::Singlet) * C64::new(2.0, 0.0);
    let t = compress_block(ud, sites, SpinBlock::Triplet) * C64::new(2.0, 0.0);
    SpinBlock2RDM {
        singlet: HermitianMatrix::hermitian_part(s),
        triplet: HermitianMatrix::hermitian_part(t),
        particles,
        sites,
    }
}

/// Full spin-orbital 2RDM (`(2M_s)^2` square, pair index `p1 * 2M_s + p2`).
pub fn spinorbital_from_spin_blocks(d: &SpinBlock2RDM) -> DMatrix<C64> {
    let ud = updown_from_blocks(d);
    let uu = expand_block(d.triplet.matrix(), d.sites, SpinBlock::Triplet);
    spinorbital_from_pair_blocks(&ud, &uu, d.sites)
}

/// Element `X[(p1 p2),(q1 q2)]` of an `S_z`-conserving, spin-symmetric pair
/// operator given by its mixed-spin block `ud` and same-spin block `uu`.
#[inline]
pub fn pair_element(ud: &DMatrix<C64>, uu: &DMatrix<C64>, m: usize, p: [usize; 2], q: [usize; 2]) -> C64 {
    let (i1, s1) = (p[0] % m, p[0] / m);
    let (i2, s2) = (p[1] % m, p[1] / m);
    let (j1, u1) = (q[0] % m, q[0] / m);
    let (j2, u2) = (q[1] % m, q[1] / m);
    match (s1, s2, u1, u2) {
        (0, 0, 0, 0) | (1, 1, 1, 1) => uu[(i1 * m + i2, j1 * m + j2)],
        (0, 1, 0, 1) => ud[(i1 * m + i2, j1 * m + j2)],
        (1, 0, 1, 0) => ud[(i2 * m + i1, j2 * m + j1)],
        (0, 1, 1, 0) => -ud[(i1 * m + i2, j2 * m + j1)],
        (1, 0, 0, 1) => -ud[(i2 * m + i1, j1 * m + j2)],
        _ => C64::new(0.0, 0.0),
    }
}

/// Dense spin-orbital form of a pair operator given by its `ud` and `uu` blocks.
pub fn spinorbital_from_pair_blocks(ud: &DMatrix<C64>, uu: &DMatrix<C64>, m: usize) -> DMatrix<C64> {
    let r = 2 * m;
    let mut out = DMatrix::zeros(r * r, r * r);
    let so = |s: usize, i: usize| i + m * s;
    for j1 in 0..m {
        for j2 in 0..m {
            let c = j1 * m + j2;
            let cx = j2 * m + j1;
            for i1 in 0..m {
                for i2 in 0..m {
                    let a = i1 * m + i2;
                    let ax = i2 * m + i1;
                    let row = |s1, s2| so(s1, i1) * r + so(s2, i2);
                    let col = |u1, u2| so(u1, j1) * r + so(u2, j2);
                    out[(row(0, 0), col(0, 0))] = uu[(a, c)];
                    out[(row(1, 1), col(1, 1))] = uu[(a, c)];
                    out[(row(0, 1), col(0, 1))] = ud[(a, c)];
                    out[(row(1, 0), col(1, 0))] = ud[(ax, cx)];
                    out[(row(0, 1), col(1, 0))] = -ud[(a, cx)];
                    out[(row(1, 0), col(0, 1))] = -ud[(ax, c)];
                }
            }
        }
    }
    out
}

/// Tolerance on the equality of the three triplet `m`-components.
pub const SINGLET_SECTOR_TOL: f64 = 1e-8;

/// Spin-adapted blocks of a full spin-orbital 2RDM (or hole RDM) of an
/// `S² = 0` state. Rejects inputs whose triplet components disagree.
pub fn spin_blocks_from_spinorbital(d: &DMatrix<C64>, sites: usize, particles: usize) -> Result<SpinBlock2RDM> {
    let m = sites;
    let r = 2 * m;
    if d.nrows() != r * r || d.ncols() != r * r {
        return Err(Error::DimensionMismatch {
            expected: r * r,
            got: d.nrows(),
        });
    }
    let dev = hermiticity_deviation(d);
    if dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let sub = |s1: usize, s2: usize| {
        DMatrix::from_fn(m * m, m * m, |a, b| {
            let (i1, i2) = (a / m, a % m);
            let (j1, j2) = (b / m, b % m);
            d[(
                spin_orbital(i1, s1, m) * r + spin_orbital(i2, s2, m),
                spin_orbital(j1, s1, m) * r + spin_orbital(j2, s2, m),
            )]
        })
    };
    let ud = sub(0, 1);
    let uu = sub(0, 0);
    let dd = sub(1, 1);
    let blocks = blocks_from_updown(&ud, m, particles);
    let t_uu = compress_block(&uu, m, SpinBlock::Triplet);
    let t_dd = compress_block(&dd, m, SpinBlock::Triplet);
    let va = isometry(m, SpinBlock::Triplet).map(|x| C64::new(x, 0.0));
    let vs = isometry(m, SpinBlock::Singlet).map(|x| C64::new(x, 0.0));
    let cross = vs.transpose() * &ud * &va;
    let mut deviation = max_abs(&(&t_uu - blocks.triplet.matrix()));
    deviation = deviation.max(max_abs(&(&t_dd - blocks.triplet.matrix())));
    deviation = deviation.max(max_abs(&cross) * 2.0);
    if deviation > SINGLET_SECTOR_TOL {
        return Err(Error::NotSinglet { deviation });
    }
    Ok(blocks)
}
