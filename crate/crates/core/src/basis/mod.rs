//! Occupation bitstrings, excitation enumeration, and selected bases.
//!
//! A spin sector is a 64-bit occupation mask ([`SpinString`]); a determinant is
//! an alpha/beta pair whose packed form places the alpha block in the low
//! `norb` bits and the beta block above it. Phases follow the canonical
//! ascending creation-operator order, so a single move `p -> r` picks up
//! `(-1)^k` with `k` the number of occupied orbitals strictly between `p` and
//! `r`. A double `(p, q) -> (r, s)` is evaluated as the sequence `p -> r`
//! followed by `q -> s` on the intermediate string.

mod selected;
mod table;

pub use selected::{
    ingest_samples, BasisError, BasisMode, ExplicitBasis, Ingested, ProductBasis, SelectedBasis,
    StringSet,
};
pub use table::{DoubleEntry, ExcitationList, ExcitationTable, SingleEntry};

/// Largest supported orbital count per spin sector.
pub const MAX_ORB: usize = 64;

/// Occupation mask of one spin sector: bit `p` set means orbital `p` is occupied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinString(pub u64);

/// Sign picked up by moving an electron between positions `a` and `b` of `bits`.
#[inline(always)]
pub fn phase_u64(bits: u64, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1 {
        return 1.0;
    }
    let mask = ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1);
    if (bits & mask).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// [`phase_u64`] for packed 2·norb-bit determinants.
#[inline(always)]
pub fn phase_u128(bits: u128, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1 {
        return 1.0;
    }
    let mask = ((1u128 << hi) - 1) & !((1u128 << (lo + 1)) - 1);
    if (bits & mask).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline(always)]
fn low_mask(norb: usize) -> u64 {
    if norb >= 64 {
        u64::MAX
    } else {
        (1u64 << norb) - 1
    }
}

/// Iterator over set bit positions, lowest first.
#[derive(Clone, Copy)]
pub struct Bits(u64);

impl Iterator for Bits {
    type Item = usize;

    #[inline(always)]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let p = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(p)
        }
    }
}

impl SpinString {
    #[inline(always)]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline(always)]
    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline(always)]
    pub fn is_occupied(self, p: usize) -> bool {
        self.0 >> p & 1 == 1
    }

    #[inline(always)]
    pub fn occupied(self) -> Bits {
        Bits(self.0)
    }

    #[inline(always)]
    pub fn virtuals(self, norb: usize) -> Bits {
        Bits(!self.0 & low_mask(norb))
    }

    /// The string with orbital `hole` emptied and `particle` filled.
    #[inline(always)]
    pub fn excite(self, hole: usize, particle: usize) -> SpinString {
        SpinString((self.0 & !(1u64 << hole)) | (1u64 << particle))
    }

    pub fn from_orbitals(orbs: &[usize]) -> SpinString {
        SpinString(orbs.iter().fold(0u64, |acc, &p| acc | 1u64 << p))
    }

    /// All strings with `nelec` electrons in `norb` orbitals, ascending.
    pub fn all(norb: usize, nelec: usize) -> Vec<SpinString> {
        assert!(norb <= MAX_ORB && nelec <= norb);
        if nelec == 0 {
            return vec![SpinString(0)];
        }
        let mut out = Vec::new();
        let limit = low_mask(norb);
        let mut v: u64 = low_mask(nelec);
        loop {
            out.push(SpinString(v));
            // next combination with the same popcount (Gosper)
            let t = v | (v - 1);
            let Some(next) = t.checked_add(1) else { break };
            let w = next | (((!t & next) - 1) >> (v.trailing_zeros() + 1));
            if w > limit || w <= v {
                break;
            }
            v = w;
        }
        out
    }
}

/// Slater determinant as an alpha/beta string pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    pub alpha: SpinString,
    pub beta: SpinString,
}

impl Determinant {
    #[inline(always)]
    pub fn new(alpha: SpinString, beta: SpinString) -> Self {
        Self { alpha, beta }
    }

    /// Packed spin-orbital string: alpha in bits `0..norb`, beta in `norb..2·norb`.
    #[inline(always)]
    pub fn packed(self, norb: usize) -> u128 {
        self.alpha.0 as u128 | (self.beta.0 as u128) << norb
    }

    #[inline(always)]
    pub fn from_packed(bits: u128, norb: usize) -> Self {
        let mask = low_mask(norb) as u128;
        Self {
            alpha: SpinString((bits & mask) as u64),
            beta: SpinString((bits >> norb & mask) as u64),
        }
    }

    /// Half the Hamming distance between the two occupation patterns.
    #[inline(always)]
    pub fn degree(self, other: Determinant) -> usize {
        (((self.alpha.0 ^ other.alpha.0).count_ones() + (self.beta.0 ^ other.beta.0).count_ones())
            / 2) as usize
    }

    pub fn n_electrons(self) -> usize {
        self.alpha.count() + self.beta.count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Single {
    pub target: SpinString,
    pub hole: usize,
    pub particle: usize,
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Double {
    pub target: SpinString,
    pub holes: [usize; 2],
    pub particles: [usize; 2],
    pub phase: f64,
}

/// Every single excitation of `s`: one entry per (occupied, virtual) pair.
pub fn enumerate_singles(s: SpinString, norb: usize) -> Vec<Single> {
    let mut out = Vec::with_capacity(s.count() * norb.saturating_sub(s.count()));
    for hole in s.occupied() {
        for particle in s.virtuals(norb) {
            out.push(Single {
                target: s.excite(hole, particle),
                hole,
                particle,
                phase: phase_u64(s.0, hole, particle),
            });
        }
    }
    out
}

/// Every double excitation of `s`, each unordered hole pair with each
/// unordered particle pair once.
pub fn enumerate_doubles(s: SpinString, norb: usize) -> Vec<Double> {
    let mut out = Vec::new();
    let occ: Vec<usize> = s.occupied().collect();
    let virt: Vec<usize> = s.virtuals(norb).collect();
    for (i, &p) in occ.iter().enumerate() {
        for &q in &occ[i + 1..] {
            for (j, &r) in virt.iter().enumerate() {
                let first = phase_u64(s.0, p, r);
                let mid = s.excite(p, r);
                for &t in &virt[j + 1..] {
                    out.push(Double {
                        target: mid.excite(q, t),
                        holes: [p, q],
                        particles: [r, t],
                        phase: first * phase_u64(mid.0, q, t),
                    });
                }
            }
        }
    }
    out
}
