use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use thiserror::Error;

use super::{Determinant, SpinString, MAX_ORB};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("line {line}: expected {expected} characters, found {found}")]
    LineLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid character {ch:?} (only '0' and '1' are allowed)")]
    BadChar { line: usize, ch: char },
    #[error("empty basis: no configuration passed the electron-count filter")]
    Empty,
    #[error("norb = {0} is outside the supported range 1..=64")]
    Norb(usize),
    #[error("string {bits:#b} is invalid for norb = {norb} with {nelec} electrons")]
    InvalidString { bits: u64, norb: usize, nelec: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisMode {
    /// Cartesian product of unique alpha and beta halves.
    Product,
    /// Explicit list of full determinants.
    Explicit,
}

/// Sorted list of unique spin strings with a reverse lookup.
#[derive(Clone, Debug, Default)]
pub struct StringSet {
    strings: Vec<SpinString>,
    index: HashMap<u64, u32>,
}

impl StringSet {
    /// Sorts and deduplicates `strings`.
    pub fn new(mut strings: Vec<SpinString>) -> Self {
        strings.sort_unstable();
        strings.dedup();
        let index = strings.iter().enumerate().map(|(i, s)| (s.0, i as u32)).collect();
        Self { strings, index }
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn strings(&self) -> &[SpinString] {
        &self.strings
    }

    #[inline(always)]
    pub fn get(&self, i: usize) -> SpinString {
        self.strings[i]
    }

    #[inline]
    pub fn index_of(&self, s: SpinString) -> Option<usize> {
        self.index.get(&s.0).map(|&i| i as usize)
    }
}

fn validate(strings: &[SpinString], norb: usize, nelec: usize) -> Result<(), BasisError> {
    let mask = if norb == 64 { u64::MAX } else { (1u64 << norb) - 1 };
    match strings.iter().find(|s| s.0 & !mask != 0 || s.count() != nelec) {
        Some(s) => Err(BasisError::InvalidString {
            bits: s.0,
            norb,
            nelec,
        }),
        None => Ok(()),
    }
}

fn check_norb(norb: usize) -> Result<(), BasisError> {
    if norb == 0 || norb > MAX_ORB {
        Err(BasisError::Norb(norb))
    } else {
        Ok(())
    }
}

/// Product basis: determinant `(ia, ib)` sits at global index `ia·|B| + ib`.
#[derive(Clone, Debug)]
pub struct ProductBasis {
    pub norb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha: StringSet,
    pub beta: StringSet,
}

impl ProductBasis {
    pub fn new(
        norb: usize,
        n_alpha: usize,
        n_beta: usize,
        alpha: Vec<SpinString>,
        beta: Vec<SpinString>,
    ) -> Result<Self, BasisError> {
        check_norb(norb)?;
        validate(&alpha, norb, n_alpha)?;
        validate(&beta, norb, n_beta)?;
        let alpha = StringSet::new(alpha);
        let beta = StringSet::new(beta);
        if alpha.is_empty() || beta.is_empty() {
            return Err(BasisError::Empty);
        }
        Ok(Self {
            norb,
            n_alpha,
            n_beta,
            alpha,
            beta,
        })
    }

    /// Full configuration space of `n_alpha` + `n_beta` electrons in `norb` orbitals.
    pub fn complete(norb: usize, n_alpha: usize, n_beta: usize) -> Result<Self, BasisError> {
        check_norb(norb)?;
        if n_alpha > norb || n_beta > norb {
            return Err(BasisError::Empty);
        }
        Self::new(
            norb,
            n_alpha,
            n_beta,
            SpinString::all(norb, n_alpha),
            SpinString::all(norb, n_beta),
        )
    }

    pub fn dim(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }

    #[inline(always)]
    pub fn index(&self, ia: usize, ib: usize) -> usize {
        ia * self.beta.len() + ib
    }

    #[inline(always)]
    pub fn determinant(&self, ia: usize, ib: usize) -> Determinant {
        Determinant::new(self.alpha.get(ia), self.beta.get(ib))
    }
}

/// Explicit determinant list, sorted by `(alpha, beta)`.
#[derive(Clone, Debug)]
pub struct ExplicitBasis {
    pub norb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    dets: Vec<Determinant>,
    index: HashMap<u128, u32>,
}

impl ExplicitBasis {
    pub fn new(
        norb: usize,
        n_alpha: usize,
        n_beta: usize,
        mut dets: Vec<Determinant>,
    ) -> Result<Self, BasisError> {
        check_norb(norb)?;
        let alphas: Vec<SpinString> = dets.iter().map(|d| d.alpha).collect();
        let betas: Vec<SpinString> = dets.iter().map(|d| d.beta).collect();
        validate(&alphas, norb, n_alpha)?;
        validate(&betas, norb, n_beta)?;
        dets.sort_unstable();
        dets.dedup();
        if dets.is_empty() {
            return Err(BasisError::Empty);
        }
        let index = dets
            .iter()
            .enumerate()
            .map(|(i, d)| (d.packed(norb), i as u32))
            .collect();
        Ok(Self {
            norb,
            n_alpha,
            n_beta,
            dets,
            index,
        })
    }

    /// Every `(alpha, beta)` pair of a product basis, in product order.
    pub fn from_product(basis: &ProductBasis) -> Self {
        let mut dets = Vec::with_capacity(basis.dim());
        for &a in basis.alpha.strings() {
            for &b in basis.beta.strings() {
                dets.push(Determinant::new(a, b));
            }
        }
        Self::new(basis.norb, basis.n_alpha, basis.n_beta, dets)
            .expect("product basis strings are already validated")
    }

    pub fn dim(&self) -> usize {
        self.dets.len()
    }

    pub fn dets(&self) -> &[Determinant] {
        &self.dets
    }

    #[inline]
    pub fn index_of_packed(&self, packed: u128) -> Option<usize> {
        self.index.get(&packed).map(|&i| i as usize)
    }

    #[inline]
    pub fn index_of(&self, det: Determinant) -> Option<usize> {
        self.index_of_packed(det.packed(self.norb))
    }
}

#[derive(Clone, Debug)]
pub enum SelectedBasis {
    Product(ProductBasis),
    Explicit(ExplicitBasis),
}

impl SelectedBasis {
    pub fn mode(&self) -> BasisMode {
        match self {
            SelectedBasis::Product(_) => BasisMode::Product,
            SelectedBasis::Explicit(_) => BasisMode::Explicit,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SelectedBasis::Product(b) => b.dim(),
            SelectedBasis::Explicit(b) => b.dim(),
        }
    }

    pub fn norb(&self) -> usize {
        match self {
            SelectedBasis::Product(b) => b.norb,
            SelectedBasis::Explicit(b) => b.norb,
        }
    }

    pub fn n_electrons(&self) -> (usize, usize) {
        match self {
            SelectedBasis::Product(b) => (b.n_alpha, b.n_beta),
            SelectedBasis::Explicit(b) => (b.n_alpha, b.n_beta),
        }
    }

    /// Determinant at global index `i`.
    pub fn determinant(&self, i: usize) -> Determinant {
        match self {
            SelectedBasis::Product(b) => {
                let nb = b.beta.len();
                b.determinant(i / nb, i % nb)
            }
            SelectedBasis::Explicit(b) => b.dets[i],
        }
    }

    pub fn index_of(&self, det: Determinant) -> Option<usize> {
        match self {
            SelectedBasis::Product(b) => {
                Some(b.index(b.alpha.index_of(det.alpha)?, b.beta.index_of(det.beta)?))
            }
            SelectedBasis::Explicit(b) => b.index_of(det),
        }
    }

    pub fn as_product(&self) -> Option<&ProductBasis> {
        match self {
            SelectedBasis::Product(b) => Some(b),
            SelectedBasis::Explicit(_) => None,
        }
    }

    pub fn as_explicit(&self) -> Option<&ExplicitBasis> {
        match self {
            SelectedBasis::Product(_) => None,
            SelectedBasis::Explicit(b) => Some(b),
        }
    }
}

/// A basis built from a sample file, with the filter report.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub basis: SelectedBasis,
    /// Non-comment configuration lines read.
    pub lines: usize,
    /// Lines dropped by the per-spin electron-count filter.
    pub dropped: usize,
    /// Lines repeating an earlier accepted configuration.
    pub duplicates: usize,
}

fn parse_half(chars: &[u8], line: usize) -> Result<u64, BasisError> {
    let mut bits = 0u64;
    for (p, &c) in chars.iter().enumerate() {
        match c {
            b'1' => bits |= 1u64 << p,
            b'0' => {}
            _ => {
                return Err(BasisError::BadChar {
                    line,
                    ch: c as char,
                })
            }
        }
    }
    Ok(bits)
}

/// Reads `'0'/'1'` configuration lines of length `2·norb` (alpha half first,
/// leftmost character = orbital 0), filters on per-spin electron counts,
/// deduplicates, and forms the requested basis.
pub fn ingest_samples<R: BufRead>(
    reader: R,
    norb: usize,
    n_alpha: usize,
    n_beta: usize,
    mode: BasisMode,
) -> Result<Ingested, BasisError> {
    check_norb(norb)?;
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let mut lines = 0;
    let mut dropped = 0;
    let mut duplicates = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let chars = text.as_bytes();
        if chars.len() != 2 * norb {
            // report characters, not bytes
            return Err(BasisError::LineLength {
                line: lineno,
                expected: 2 * norb,
                found: text.chars().count(),
            });
        }
        let alpha = parse_half(&chars[..norb], lineno)?;
        let beta = parse_half(&chars[norb..], lineno)?;
        lines += 1;
        if alpha.count_ones() as usize != n_alpha || beta.count_ones() as usize != n_beta {
            dropped += 1;
            continue;
        }
        if !seen.insert((alpha, beta)) {
            duplicates += 1;
        }
    }
    if seen.is_empty() {
        return Err(BasisError::Empty);
    }
    let basis = match mode {
        BasisMode::Product => {
            let mut alpha: Vec<SpinString> = seen.iter().map(|&(a, _)| SpinString(a)).collect();
            let mut beta: Vec<SpinString> = seen.iter().map(|&(_, b)| SpinString(b)).collect();
            alpha.sort_unstable();
            alpha.dedup();
            beta.sort_unstable();
            beta.dedup();
            SelectedBasis::Product(ProductBasis::new(norb, n_alpha, n_beta, alpha, beta)?)
        }
        BasisMode::Explicit => {
            let dets = seen
                .iter()
                .map(|&(a, b)| Determinant::new(SpinString(a), SpinString(b)))
                .collect();
            SelectedBasis::Explicit(ExplicitBasis::new(norb, n_alpha, n_beta, dets)?)
        }
    };
    Ok(Ingested {
        basis,
        lines,
        dropped,
        duplicates,
    })
}
