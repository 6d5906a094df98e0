//! Closure of the equations of motion: cumulant of the 2RDM, Valdemoro
//! reconstruction of the 3RDM and its contraction-consistency correction.
//!
//! Pair operators are kept in spin-adapted form (`ud`: mixed-spin block,
//! `uu`: same-spin block, both `M_s^2` square). The 3RDM is never stored
//! densely; elements are generated on demand from `d`, the cumulant and the
//! correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hubbard::{blocks_from_updown, pair_element, spinorbital_from_pair_blocks, updown_from_blocks};
use crate::matcore::{expand_block, matmul, HermitianMatrix, OneRDM, SpinBlock, SpinBlock2RDM, C64};

/// Spin-adapted pair-space operator of an `S² = 0` state.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBlocks {
    pub ud: DMatrix<C64>,
    pub uu: DMatrix<C64>,
    pub sites: usize,
}

/// `out[(i1 i2),(j1 j2)] = x[(i1 i2),(j2 j1)]`.
fn swap_cols(x: &DMatrix<C64>, m: usize) -> DMatrix<C64> {
    DMatrix::from_fn(m * m, m * m, |r, c| x[(r, (c % m) * m + c / m)])
}

/// `a⊗b` on the mixed-spin block and `a⊗b - exchange` on the same-spin block.
fn wedge(a: &DMatrix<C64>, b: &DMatrix<C64>, m: usize) -> PairBlocks {
    let ud = a.kronecker(b);
    let uu = &ud - swap_cols(&ud, m);
    PairBlocks { ud, uu, sites: m }
}

impl PairBlocks {
    pub fn zeros(sites: usize) -> Self {
        let n = sites * sites;
        Self {
            ud: DMatrix::zeros(n, n),
            uu: DMatrix::zeros(n, n),
            sites,
        }
    }

    pub fn from_spin_blocks(d: &SpinBlock2RDM) -> Self {
        Self {
            ud: updown_from_blocks(d),
            uu: expand_block(d.triplet.matrix(), d.sites, SpinBlock::Triplet),
            sites: d.sites,
        }
    }

    pub fn to_spin_blocks(&self, particles: usize) -> SpinBlock2RDM {
        blocks_from_updown(&self.ud, self.sites, particles)
    }

    #[inline]
    pub fn element(&self, p: [usize; 2], q: [usize; 2]) -> C64 {
        pair_element(&self.ud, &self.uu, self.sites, p, q)
    }

    pub fn to_spinorbital(&self) -> DMatrix<C64> {
        spinorbital_from_pair_blocks(&self.ud, &self.uu, self.sites)
    }

    /// Spin-orbital `Tr_2` restricted to one spin channel.
    pub fn partial_trace(&self) -> DMatrix<C64> {
        let m = self.sites;
        DMatrix::from_fn(m, m, |i, j| {
            (0..m)
                .map(|k| self.uu[(i * m + k, j * m + k)] + self.ud[(i * m + k, j * m + k)])
                .sum()
        })
    }

    fn zip(&self, other: &Self, f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>) -> Self {
        Self {
            ud: f(&self.ud, &other.ud),
            uu: f(&self.uu, &other.uu),
            sites: self.sites,
        }
    }

    fn map(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Self {
        Self {
            ud: f(&self.ud),
            uu: f(&self.uu),
            sites: self.sites,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| a * C64::new(s, 0.0))
    }

    /// Largest entry modulus over both blocks.
    pub fn max_abs(&self) -> f64 {
        crate::matcore::max_abs(&self.ud).max(crate::matcore::max_abs(&self.uu))
    }
}

/// `Δ_12 = D_12 - d∧d`: zero for a single Slater determinant.
pub fn cumulant_delta12(d1: &OneRDM, d12: &SpinBlock2RDM) -> SpinBlock2RDM {
    let m = d12.sites;
    let d = d1.matrix.matrix();
    let pd = wedge(d, d, m);
    let delta = PairBlocks::from_spin_blocks(d12).sub(&pd);
    let mut out = delta.to_spin_blocks(d12.particles);
    // the same-spin block is carried by the triplet alone
    out.triplet = HermitianMatrix::hermitian_part(
        crate::matcore::compress_block(&delta.uu, m, SpinBlock::Triplet),
    );
    out
}

#[cfg(test)]
fn cumulant_blocks(d: &DMatrix<C64>, d12: &SpinBlock2RDM) -> PairBlocks {
    PairBlocks::from_spin_blocks(d12).sub(&wedge(d, d, d12.sites))
}

/// `((r - 4) B + W(Tr_2 B)) / 9`: contraction of the minimal lift of `B`.
fn gram_apply(b: &PairBlocks) -> PairBlocks {
    let m = b.sites;
    let r = (2 * m) as f64;
    let w = w_operator(&b.partial_trace(), m);
    b.scale(r - 4.0).add(&w).scale(1.0 / 9.0)
}

/// `W(b) = b⊗1 + 1⊗b - δ_{p2 q1} b[p1, q2] - δ_{p1 q2} b[p2, q1]`.
fn w_operator(b: &DMatrix<C64>, m: usize) -> PairBlocks {
    let id = DMatrix::<C64>::identity(m, m);
    let ud = b.kronecker(&id) + id.kronecker(b);
    let uu = &ud - swap_cols(&ud, m);
    PairBlocks { ud, uu, sites: m }
}

/// Solves `G(B) = R` on the antisymmetric pair space (`r > 4`).
fn gram_solve(rhs: &PairBlocks) -> PairBlocks {
    let m = rhs.sites;
    let r = (2 * m) as f64;
    let rho = rhs.partial_trace();
    // spin-orbital trace, both spin channels
    let tr_b = 6.0 * rho.trace() / (r - 2.0);
    let b = (rho * C64::new(9.0, 0.0) - DMatrix::identity(m, m) * tr_b) / C64::new(2.0 * r - 6.0, 0.0);
    rhs.scale(9.0).sub(&w_operator(&b, m)).scale(1.0 / (r - 4.0))
}

#[derive(Clone, Debug)]
enum Repr {
    /// No three-particle sector (`N < 3`).
    Zero,
    Reconstructed {
        d: DMatrix<C64>,
        delta: PairBlocks,
        fix: Option<PairBlocks>,
        d_so: DMatrix<C64>,
        delta_so: DMatrix<C64>,
        fix_so: Option<DMatrix<C64>>,
    },
    /// Full spin-orbital matrix, `r^3` square (reference data).
    Dense(DMatrix<C64>),
}

/// Three-particle RDM `D[(p1 p2 p3),(q1 q2 q3)] = ⟨a†_{q1} a†_{q2} a†_{q3} a_{p3} a_{p2} a_{p1}⟩`
/// over spin orbitals `p = i + M_s σ`.
#[derive(Clone, Debug)]
pub struct ThreeRDM {
    pub sites: usize,
    pub particles: usize,
    repr: Repr,
}

fn spin_orbital_1rdm(d: &DMatrix<C64>) -> DMatrix<C64> {
    let m = d.nrows();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(d);
    out.view_mut((m, m), (m, m)).copy_from(d);
    out
}

const ROW_PERMS: [([usize; 3], f64); 3] = [([0, 1, 2], 1.0), ([2, 1, 0], -1.0), ([0, 2, 1], -1.0)];

impl ThreeRDM {
    pub fn zero(sites: usize, particles: usize) -> Self {
        Self {
            sites,
            particles,
            repr: Repr::Zero,
        }
    }

    /// Wraps a dense spin-orbital 3RDM (`(2M_s)^3` square).
    pub fn from_dense(matrix: DMatrix<C64>, sites: usize, particles: usize) -> Result<Self> {
        let r = 2 * sites;
        if matrix.nrows() != r * r * r || matrix.ncols() != r * r * r {
            return Err(Error::DimensionMismatch {
                expected: r * r * r,
                got: matrix.nrows(),
            });
        }
        Ok(Self {
            sites,
            particles,
            repr: Repr::Dense(matrix),
        })
    }

    pub fn spin_orbitals(&self) -> usize {
        2 * self.sites
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.repr, Repr::Reconstructed { fix: Some(_), .. })
    }

    #[inline]
    pub fn element(&self, p: [usize; 3], q: [usize; 3]) -> C64 {
        match &self.repr {
            Repr::Zero => C64::new(0.0, 0.0),
            Repr::Dense(x) => {
                let r = self.spin_orbitals();
                x[((p[0] * r + p[1]) * r + p[2], (q[0] * r + q[1]) * r + q[2])]
            }
            Repr::Reconstructed {
                d_so,
                delta_so,
                fix_so,
                ..
            } => {
                let r = self.spin_orbitals();
                let mut v = valdemoro_element(d_so, delta_so, r, p, q);
                if let Some(b) = fix_so {
                    v += lift_element(b, r, p, q);
                }
                v
            }
        }
    }

    /// `Tr_3` by explicit summation over the third index (`r^2` square).
    pub fn contract_dense(&self) -> DMatrix<C64> {
        let r = self.spin_orbitals();
        DMatrix::from_fn(r * r, r * r, |row, col| {
            let p = [row / r, row % r];
            let q = [col / r, col % r];
            (0..r).map(|s| self.element([p[0], p[1], s], [q[0], q[1], s])).sum()
        })
    }

    /// `Tr_3` in spin-adapted form. Closed form for reconstructed matrices.
    pub fn contract(&self) -> PairBlocks {
        let m = self.sites;
        match &self.repr {
            Repr::Zero => PairBlocks::zeros(m),
            Repr::Dense(_) => {
                let full = self.contract_dense();
                let r = 2 * m;
                let n = m * m;
                PairBlocks {
                    ud: DMatrix::from_fn(n, n, |a, b| full[((a / m) * r + m + a % m, (b / m) * r + m + b % m)]),
                    uu: DMatrix::from_fn(n, n, |a, b| full[((a / m) * r + a % m, (b / m) * r + b % m)]),
                    sites: m,
                }
            }
            Repr::Reconstructed { d, delta, fix, .. } => {
                let mut c = valdemoro_contraction(d, delta, self.particles as f64);
                if let Some(b) = fix {
                    c = c.add(&gram_apply(b));
                }
                c
            }
        }
    }

    /// Dense spin-orbital matrix; `r^6` entries, small systems only.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let r = self.spin_orbitals();
        let n = r * r * r;
        DMatrix::from_fn(n, n, |row, col| {
            self.element([row / (r * r), (row / r) % r, row % r], [col / (r * r), (col / r) % r, col % r])
        })
    }
}

fn valdemoro_element(d: &DMatrix<C64>, delta: &DMatrix<C64>, r: usize, p: [usize; 3], q: [usize; 3]) -> C64 {
    let g = |a: usize, b: usize| d[(p[a], q[b])];
    let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
        + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
    const REST: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];
    let mut sum = det;
    for k in 0..3 {
        let rk = REST[k];
        let row = p[rk[0]] * r + p[rk[1]];
        for l in 0..3 {
            let x = g(k, l);
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            let rl = REST[l];
            let v = x * delta[(row, q[rl[0]] * r + q[rl[1]])];
            if (k + l) % 2 == 0 {
                sum += v;
            } else {
                sum -= v;
            }
        }
    }
    sum
}

/// Element of `(1/9)(1 - P13 - P23)(B⊗1)(1 - P13 - P23)`.
fn lift_element(b: &DMatrix<C64>, r: usize, p: [usize; 3], q: [usize; 3]) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    for (pa, sa) in ROW_PERMS {
        let pp = [p[pa[0]], p[pa[1]], p[pa[2]]];
        for (qb, sb) in ROW_PERMS {
            let qq = [q[qb[0]], q[qb[1]], q[qb[2]]];
            if pp[2] == qq[2] {
                sum += b[(pp[0] * r + pp[1], qq[0] * r + qq[1])] * (sa * sb);
            }
        }
    }
    sum / 9.0
}

/// Closed-form `Tr_3` of the Valdemoro functional:
/// `N d∧d - d²∧d - d∧d² + N Δ + d∧δ + δ∧d - {Δ, d⊗1 + 1⊗d}` with `δ = Tr_2 Δ`.
fn valdemoro_contraction(d: &DMatrix<C64>, delta: &PairBlocks, n: f64) -> PairBlocks {
    let m = delta.sites;
    let d2 = matmul(d, d);
    let dt = delta.partial_trace();
    let id = DMatrix::<C64>::identity(m, m);
    let k = d.kronecker(&id) + id.kronecker(d);
    let cn = C64::new(n, 0.0);
    let mut out = wedge(d, d, m).scale(n);
    out = out.sub(&wedge(&d2, d, m)).sub(&wedge(d, &d2, m));
    out = out.add(&delta.map(|x| x * cn));
    out = out.add(&wedge(d, &dt, m)).add(&wedge(&dt, d, m));
    out.sub(&delta.map(|x| matmul(x, &k) + matmul(&k, x)))
}

/// Valdemoro reconstruction (three-particle cumulant set to zero).
pub fn valdemoro_d123(d1: &OneRDM, d12: &SpinBlock2RDM) -> ThreeRDM {
    if d12.particles < 3 {
        return ThreeRDM::zero(d12.sites, d12.particles);
    }
    valdemoro_from_blocks(d1.matrix.matrix().clone(), &PairBlocks::from_spin_blocks(d12), d12.particles)
}

fn valdemoro_from_blocks(d: DMatrix<C64>, pairs: &PairBlocks, particles: usize) -> ThreeRDM {
    let m = pairs.sites;
    let delta = pairs.sub(&wedge(&d, &d, m));
    let delta_so = delta.to_spinorbital();
    ThreeRDM {
        sites: m,
        particles,
        repr: Repr::Reconstructed {
            d_so: spin_orbital_1rdm(&d),
            d,
            delta,
            fix: None,
            delta_so,
            fix_so: None,
        },
    }
}

/// Adds the unique correction from the orthogonal complement of the `Tr_3`
/// kernel so that `Tr_3 D_123 = (N - 2) D_12`.
pub fn fix_contraction_d123(raw: ThreeRDM, d12: &SpinBlock2RDM) -> Result<ThreeRDM> {
    if raw.sites != d12.sites {
        return Err(Error::DimensionMismatch {
            expected: raw.sites,
            got: d12.sites,
        });
    }
    if d12.particles < 3 {
        return Ok(ThreeRDM::zero(raw.sites, d12.particles));
    }
    Ok(fix_with_pairs(raw, &PairBlocks::from_spin_blocks(d12), d12.particles))
}

fn fix_with_pairs(raw: ThreeRDM, pairs: &PairBlocks, particles: usize) -> ThreeRDM {
    let target = pairs.scale(particles as f64 - 2.0);
    let residual = target.sub(&raw.contract());
    let correction = gram_solve(&residual);
    match raw.repr {
        Repr::Reconstructed { d, delta, fix, d_so, delta_so, .. } => {
            let fix = match fix {
                Some(b) => b.add(&correction),
                None => correction,
            };
            let fix_so = fix.to_spinorbital();
            ThreeRDM {
                sites: raw.sites,
                particles: raw.particles,
                repr: Repr::Reconstructed {
                    d,
                    delta,
                    fix: Some(fix),
                    d_so,
                    delta_so,
                    fix_so: Some(fix_so),
                },
            }
        }
        Repr::Zero => {
            let m = raw.sites;
            let d = DMatrix::zeros(m, m);
            let delta = PairBlocks::zeros(m);
            let fix_so = correction.to_spinorbital();
            ThreeRDM {
                sites: m,
                particles: raw.particles,
                repr: Repr::Reconstructed {
                    d_so: spin_orbital_1rdm(&d),
                    delta_so: delta.to_spinorbital(),
                    d,
                    delta,
                    fix: Some(correction),
                    fix_so: Some(fix_so),
                },
            }
        }
        Repr::Dense(x) => {
            // reference data: add the lift densely
            let r = 2 * raw.sites;
            let b = correction.to_spinorbital();
            let n = r * r * r;
            let lift = DMatrix::from_fn(n, n, |row, col| {
                lift_element(&b, r, [row / (r * r), (row / r) % r, row % r], [col / (r * r), (col / r) % r, col % r])
            });
            ThreeRDM {
                sites: raw.sites,
                particles: raw.particles,
                repr: Repr::Dense(x + lift),
            }
        }
    }
}

/// Valdemoro reconstruction followed by the contraction fix.
pub fn reconstruct_d123(d12: &SpinBlock2RDM) -> Result<ThreeRDM> {
    let n = d12.particles;
    if n < 3 {
        return Ok(ThreeRDM::zero(d12.sites, n));
    }
    let pairs = PairBlocks::from_spin_blocks(d12);
    let d = pairs.partial_trace() / C64::new(n as f64 - 1.0, 0.0);
    let d = (&d + d.adjoint()) * C64::new(0.5, 0.0);
    Ok(fix_with_pairs(valdemoro_from_blocks(d, &pairs, n), &pairs, n))
}
