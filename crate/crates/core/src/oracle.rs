//! Exact diagonalization of the Hubbard chain in a fixed `(N_up, N_down)`
//! sector, used as the reference for every approximate quantity.
//!
//! Fock states are bitmasks over the `2 M_s` spin orbitals (`p = i + M_s σ`);
//! fermionic signs follow the orbital order of the bits.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hubbard::{h1_matrix, HubbardConfig};
use crate::matcore::{eigh, HermitianMatrix, C64};

pub const DEFAULT_DIM_CAP: usize = 10_000;

/// Applies `a_p`; returns the sign and the new mask.
#[inline]
pub fn annihilate(mask: u64, p: usize) -> Option<(f64, u64)> {
    if mask >> p & 1 == 0 {
        return None;
    }
    let below = (mask & ((1u64 << p) - 1)).count_ones();
    let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, mask & !(1u64 << p)))
}

/// Applies `a†_p`.
#[inline]
pub fn create(mask: u64, p: usize) -> Option<(f64, u64)> {
    if mask >> p & 1 == 1 {
        return None;
    }
    let below = (mask & ((1u64 << p) - 1)).count_ones();
    let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, mask | (1u64 << p)))
}

fn combinations(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize == k {
            out.push(mask);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockBasis {
    pub sites: usize,
    pub n_up: usize,
    pub n_down: usize,
    /// Sorted, unique occupation masks.
    pub masks: Vec<u64>,
}

impl FockBasis {
    pub fn new(sites: usize, n_up: usize, n_down: usize) -> Self {
        let ups = combinations(sites, n_up);
        let downs = combinations(sites, n_down);
        let mut masks: Vec<u64> = ups
            .iter()
            .flat_map(|&u| downs.iter().map(move |&d| u | (d << sites)))
            .collect();
        masks.sort_unstable();
        Self {
            sites,
            n_up,
            n_down,
            masks,
        }
    }

    pub fn for_config(cfg: &HubbardConfig) -> Self {
        Self::new(cfg.sites, cfg.particles / 2, cfg.particles / 2)
    }

    pub fn dim(&self) -> usize {
        self.masks.len()
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.masks.binary_search(&mask).ok()
    }

    pub fn particles(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn spin_orbitals(&self) -> usize {
        2 * self.sites
    }
}

#[derive(Clone, Debug)]
pub struct ManyBodyState {
    pub basis: Arc<FockBasis>,
    pub amplitudes: DVector<C64>,
}

impl ManyBodyState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨n_iσ⟩` summed over spin, per site.
    pub fn site_densities(&self) -> Vec<f64> {
        let m = self.basis.sites;
        let mut n = vec![0.0; m];
        for (k, &mask) in self.basis.masks.iter().enumerate() {
            let w = self.amplitudes[k].norm_sqr();
            if w == 0.0 {
                continue;
            }
            for (i, ni) in n.iter_mut().enumerate() {
                *ni += w * ((mask >> i & 1) + (mask >> (i + m) & 1)) as f64;
            }
        }
        n
    }

    /// `⟨Σ_i n_i↑ n_i↓⟩`.
    pub fn double_occupancy(&self) -> f64 {
        let m = self.basis.sites;
        self.basis
            .masks
            .iter()
            .enumerate()
            .map(|(k, &mask)| {
                let d = (0..m).filter(|&i| mask >> i & 1 == 1 && mask >> (i + m) & 1 == 1).count();
                self.amplitudes[k].norm_sqr() * d as f64
            })
            .sum()
    }

    /// `⟨η⁺η⁻⟩ = ‖η⁻ψ‖²` with `η⁻ = Σ_j (-1)^j a_{j↑} a_{j↓}`.
    pub fn eta_pairing(&self) -> f64 {
        let m = self.basis.sites;
        let mut out: HashMap<u64, C64> = HashMap::new();
        for (k, &mask) in self.basis.masks.iter().enumerate() {
            let amp = self.amplitudes[k];
            for j in 0..m {
                let phase = if (j + 1) % 2 == 0 { 1.0 } else { -1.0 };
                if let Some((s1, m1)) = annihilate(mask, j + m) {
                    if let Some((s2, m2)) = annihilate(m1, j) {
                        *out.entry(m2).or_default() += amp * (phase * s1 * s2);
                    }
                }
            }
        }
        out.values().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨S²⟩ = S_z² + S_z + ‖S⁺ψ‖²`.
    pub fn total_spin_squared(&self) -> f64 {
        let m = self.basis.sites;
        let sz = 0.5 * (self.basis.n_up as f64 - self.basis.n_down as f64);
        let mut out: HashMap<u64, C64> = HashMap::new();
        for (k, &mask) in self.basis.masks.iter().enumerate() {
            let amp = self.amplitudes[k];
            for i in 0..m {
                if let Some((s1, m1)) = annihilate(mask, i + m) {
                    if let Some((s2, m2)) = create(m1, i) {
                        *out.entry(m2).or_default() += amp * (s1 * s2);
                    }
                }
            }
        }
        sz * sz + sz + out.values().map(|z| z.norm_sqr()).sum::<f64>()
    }
}

/// Dense many-body Hamiltonian. `trapped` selects the `t < 0` potential.
pub fn build_hamiltonian(basis: &FockBasis, cfg: &HubbardConfig, trapped: bool) -> Result<HermitianMatrix> {
    build_hamiltonian_capped(basis, cfg, trapped, DEFAULT_DIM_CAP)
}

pub fn build_hamiltonian_capped(
    basis: &FockBasis,
    cfg: &HubbardConfig,
    trapped: bool,
    cap: usize,
) -> Result<HermitianMatrix> {
    cfg.validate()?;
    let dim = basis.dim();
    if dim > cap {
        return Err(Error::BasisTooLarge { dim, cap });
    }
    let m = basis.sites;
    let h1 = h1_matrix(cfg, if trapped { -1.0 } else { 0.0 });
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for (col, &mask) in basis.masks.iter().enumerate() {
        let mut diag = 0.0;
        for i in 0..m {
            let up = mask >> i & 1;
            let dn = mask >> (i + m) & 1;
            diag += cfg.interaction * (up * dn) as f64 + h1.matrix()[(i, i)].re * (up + dn) as f64;
        }
        h[(col, col)] += C64::new(diag, 0.0);
        for spin in 0..2 {
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    let hij = h1.matrix()[(i, j)];
                    if hij.norm() == 0.0 {
                        continue;
                    }
                    // h_ij a†_i a_j
                    if let Some((s1, m1)) = annihilate(mask, j + m * spin) {
                        if let Some((s2, m2)) = create(m1, i + m * spin) {
                            let row = basis.index_of(m2).expect("hopping conserves the sector");
                            h[(row, col)] += hij * (s1 * s2);
                        }
                    }
                }
            }
        }
    }
    HermitianMatrix::new(h)
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: ManyBodyState,
    pub energy: f64,
    /// Distance to the first excited level; below `1e-10` the ground level is
    /// degenerate and the eigensolver's first vector is returned.
    pub gap: f64,
    pub residual: f64,
}

/// Lowest eigenvector of the trapped Hamiltonian. The global phase is fixed
/// so that the largest amplitude is real and positive.
pub fn ground_state(cfg: &HubbardConfig) -> Result<GroundState> {
    let basis = Arc::new(FockBasis::for_config(cfg));
    let h = build_hamiltonian(&basis, cfg, true)?;
    let eig = eigh(&h);
    let mut v: DVector<C64> = eig.vectors.column(0).into_owned();
    let (kmax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bk, bv), (k, z)| if z.norm() > bv + 1e-12 { (k, z.norm()) } else { (bk, bv) });
    let phase = v[kmax].conj() / v[kmax].norm();
    v *= phase;
    v /= C64::new(v.norm(), 0.0);
    let energy = eig.values[0];
    let gap = if eig.values.len() > 1 {
        eig.values[1] - eig.values[0]
    } else {
        f64::INFINITY
    };
    let residual = (h.matrix() * &v - &v * C64::new(energy, 0.0)).norm();
    Ok(GroundState {
        state: ManyBodyState { basis, amplitudes: v },
        energy,
        gap,
        residual,
    })
}

/// Unitary evolution under the untrapped Hamiltonian via its eigenbasis.
pub struct ExactPropagator {
    basis: Arc<FockBasis>,
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
    coeffs: DVector<C64>,
}

impl ExactPropagator {
    pub fn new(psi0: &ManyBodyState, cfg: &HubbardConfig) -> Result<Self> {
        let h = build_hamiltonian(&psi0.basis, cfg, false)?;
        let eig = eigh(&h);
        let coeffs = eig.vectors.adjoint() * &psi0.amplitudes;
        Ok(Self {
            basis: psi0.basis.clone(),
            energies: eig.values,
            vectors: eig.vectors,
            coeffs,
        })
    }

    pub fn state_at(&self, t: f64) -> ManyBodyState {
        let phased = DVector::from_fn(self.coeffs.len(), |k, _| {
            self.coeffs[k] * C64::from_polar(1.0, -self.energies[k] * t)
        });
        ManyBodyState {
            basis: self.basis.clone(),
            amplitudes: &self.vectors * phased,
        }
    }

    pub fn energy(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.energies)
            .map(|(c, e)| c.norm_sqr() * e)
            .sum()
    }
}

/// Exact states on the given time grid.
pub fn exact_propagate(psi: &ManyBodyState, times: &[f64], cfg: &HubbardConfig) -> Result<Vec<ManyBodyState>> {
    let prop = ExactPropagator::new(psi, cfg)?;
    Ok(times.iter().map(|&t| prop.state_at(t)).collect())
}

/// `n_i(t) = 2 [U d0 U†]_ii` with `U = exp(-i h t)`: non-interacting reference.
pub fn free_fermion_densities(d0: &HermitianMatrix, h: &HermitianMatrix, times: &[f64]) -> Vec<Vec<f64>> {
    let eig = eigh(h);
    let n = h.dim();
    times
        .iter()
        .map(|&t| {
            let phase = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    C64::from_polar(1.0, -eig.values[i] * t)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let u = &eig.vectors * phase * eig.vectors.adjoint();
            let d = &u * d0.matrix() * u.adjoint();
            (0..n).map(|i| 2.0 * d[(i, i)].re).collect()
        })
        .collect()
}

fn tuple_of(mut idx: usize, r: usize, p: usize) -> Vec<usize> {
    let mut t = vec![0; p];
    for k in (0..p).rev() {
        t[k] = idx % r;
        idx /= r;
    }
    t
}

/// Columns `φ_I = a_{i_p} ... a_{i_1} |ψ⟩` (or `a†_{i_p} ... a†_{i_1} |ψ⟩` when
/// `creation`), over a compact index of the reached masks.
fn string_images(psi: &ManyBodyState, p: usize, creation: bool) -> DMatrix<C64> {
    let r = psi.basis.spin_orbitals();
    let ntup = r.pow(p as u32);
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, C64)> = Vec::new();
    for col in 0..ntup {
        let tup = tuple_of(col, r, p);
        for (k, &mask) in psi.basis.masks.iter().enumerate() {
            let amp = psi.amplitudes[k];
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut cur = mask;
            let mut sign = 1.0;
            let mut ok = true;
            for &o in &tup {
                let res = if creation { create(cur, o) } else { annihilate(cur, o) };
                match res {
                    Some((s, m2)) => {
                        sign *= s;
                        cur = m2;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let len = index.len();
                let row = *index.entry(cur).or_insert(len);
                entries.push((row, col, amp * sign));
            }
        }
    }
    let mut phi = DMatrix::<C64>::zeros(index.len(), ntup);
    for (row, col, v) in entries {
        phi[(row, col)] += v;
    }
    phi
}

/// `D[I, J] = ⟨a†_{j_1} ... a†_{j_p} a_{i_p} ... a_{i_1}⟩`, with the ordered tuple
/// `I = (i_1, ..., i_p)` flattened as `i_1 r^{p-1} + ... + i_p`.
pub fn extract_rdm(psi: &ManyBodyState, p: usize) -> DMatrix<C64> {
    let phi = string_images(psi, p, false);
    // D[a, b] = ⟨φ_b | φ_a⟩
    (phi.adjoint() * &phi).transpose()
}

/// `Q[I, J] = ⟨a_{i_1} a_{i_2} a†_{j_2} a†_{j_1}⟩`.
pub fn extract_hole_rdm(psi: &ManyBodyState) -> DMatrix<C64> {
    let chi = string_images(psi, 2, true);
    chi.adjoint() * &chi
}

/// Spin-adapted 2RDM of an `S² = 0` state.
pub fn spin_block_2rdm(psi: &ManyBodyState) -> Result<crate::matcore::SpinBlock2RDM> {
    crate::hubbard::spin_blocks_from_spinorbital(&extract_rdm(psi, 2), psi.basis.sites, psi.basis.particles())
}

/// Spin-up block of the 1RDM, `d[i][j] = ⟨a†_{j↑} a_{i↑}⟩`.
pub fn spin_up_1rdm(psi: &ManyBodyState) -> HermitianMatrix {
    let d = extract_rdm(psi, 1);
    let m = psi.basis.sites;
    HermitianMatrix::hermitian_part(DMatrix::from_fn(m, m, |i, j| d[(i, j)]))
}
