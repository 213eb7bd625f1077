//! Slater–Condon matrix elements between determinants.
//!
//! Spin orbitals are ordered with the whole alpha block before the beta block,
//! so a same-spin move never crosses an electron of the other spin and the
//! alpha and beta phases factorize.

use crate::basis::{phase_u64, Determinant, SpinString};
use crate::integrals::IntegralTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Alpha,
    Beta,
}

/// `⟨D|H|D⟩`, including the core energy.
pub fn h_diag(det: Determinant, t: &IntegralTable) -> f64 {
    let mut e = t.e_core();
    for s in [det.alpha, det.beta] {
        for p in s.occupied() {
            e += t.h(p, p);
            for q in s.occupied().filter(|&q| q > p) {
                e += t.eri(p, p, q, q) - t.eri(p, q, q, p);
            }
        }
    }
    for p in det.alpha.occupied() {
        for q in det.beta.occupied() {
            e += t.eri(p, p, q, q);
        }
    }
    e
}

/// Element between `bra` and the determinant obtained by moving one electron
/// of `spin` from orbital `p` (occupied in `bra`) to `r`.
#[inline]
pub fn h_single(
    bra: Determinant,
    p: usize,
    r: usize,
    spin: Spin,
    phase: f64,
    t: &IntegralTable,
) -> f64 {
    let (same, other) = match spin {
        Spin::Alpha => (bra.alpha, bra.beta),
        Spin::Beta => (bra.beta, bra.alpha),
    };
    debug_assert!(same.is_occupied(p) && !same.is_occupied(r));
    let common = SpinString(same.0 & !(1u64 << p));
    let mut v = t.h(p, r);
    for q in common.occupied() {
        v += t.eri(p, r, q, q) - t.eri(p, q, q, r);
    }
    for q in other.occupied() {
        v += t.eri(p, r, q, q);
    }
    phase * v
}

/// Same-spin double `(p, q) -> (r, s)`.
#[inline(always)]
pub fn h_double_same_spin(
    p: usize,
    q: usize,
    r: usize,
    s: usize,
    phase: f64,
    t: &IntegralTable,
) -> f64 {
    phase * (t.eri(p, r, q, s) - t.eri(p, s, q, r))
}

/// Opposite-spin double: alpha `p -> r` together with beta `q -> s`.
#[inline(always)]
pub fn h_double_opposite_spin(
    p: usize,
    r: usize,
    q: usize,
    s: usize,
    phase_alpha: f64,
    phase_beta: f64,
    t: &IntegralTable,
) -> f64 {
    phase_alpha * phase_beta * t.eri(p, r, q, s)
}

#[inline(always)]
fn lowest_two(bits: u64) -> (usize, usize) {
    let a = bits.trailing_zeros() as usize;
    let b = (bits & (bits - 1)).trailing_zeros() as usize;
    (a, b)
}

#[inline(always)]
fn same_spin_double(bra: SpinString, ket: SpinString, t: &IntegralTable) -> f64 {
    let (p, q) = lowest_two(bra.0 & !ket.0);
    let (r, s) = lowest_two(ket.0 & !bra.0);
    let mid = bra.excite(p, r);
    let phase = phase_u64(bra.0, p, r) * phase_u64(mid.0, q, s);
    h_double_same_spin(p, q, r, s, phase, t)
}

/// General `⟨I|H|J⟩` for determinants with equal electron counts; zero beyond
/// double excitations.
#[inline]
pub fn hij(bra: Determinant, ket: Determinant, t: &IntegralTable) -> f64 {
    if bra.alpha.count() != ket.alpha.count() || bra.beta.count() != ket.beta.count() {
        debug_assert!(false, "hij called on determinants with different electron counts");
        return 0.0;
    }
    let xa = bra.alpha.0 ^ ket.alpha.0;
    let xb = bra.beta.0 ^ ket.beta.0;
    let (na, nb) = (xa.count_ones(), xb.count_ones());
    match (na + nb) / 2 {
        0 => h_diag(bra, t),
        1 => {
            let (spin, b, k) = if na == 2 {
                (Spin::Alpha, bra.alpha, ket.alpha)
            } else {
                (Spin::Beta, bra.beta, ket.beta)
            };
            let p = (b.0 & !k.0).trailing_zeros() as usize;
            let r = (k.0 & !b.0).trailing_zeros() as usize;
            h_single(bra, p, r, spin, phase_u64(b.0, p, r), t)
        }
        2 => match (na, nb) {
            (4, 0) => same_spin_double(bra.alpha, ket.alpha, t),
            (0, 4) => same_spin_double(bra.beta, ket.beta, t),
            _ => {
                let p = (bra.alpha.0 & !ket.alpha.0).trailing_zeros() as usize;
                let r = (ket.alpha.0 & !bra.alpha.0).trailing_zeros() as usize;
                let q = (bra.beta.0 & !ket.beta.0).trailing_zeros() as usize;
                let s = (ket.beta.0 & !bra.beta.0).trailing_zeros() as usize;
                h_double_opposite_spin(
                    p,
                    r,
                    q,
                    s,
                    phase_u64(bra.alpha.0, p, r),
                    phase_u64(bra.beta.0, q, s),
                    t,
                )
            }
        },
        _ => 0.0,
    }
}
