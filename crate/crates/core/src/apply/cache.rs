use std::ops::Range;

use crate::basis::{Determinant, ProductBasis};

use super::ApplyError;

/// Rectangular window of `(alpha, beta)` string indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetRange {
    pub alpha: Range<usize>,
    pub beta: Range<usize>,
}

impl DetRange {
    pub fn full(basis: &ProductBasis) -> Self {
        Self {
            alpha: 0..basis.alpha.len(),
            beta: 0..basis.beta.len(),
        }
    }

    pub fn area(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }

    fn check(&self, basis: &ProductBasis) -> Result<(), ApplyError> {
        if self.alpha.start > self.alpha.end
            || self.beta.start > self.beta.end
            || self.alpha.end > basis.alpha.len()
            || self.beta.end > basis.beta.len()
        {
            return Err(ApplyError::Range {
                range: self.clone(),
                n_alpha: basis.alpha.len(),
                n_beta: basis.beta.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct DetBlock {
    range: DetRange,
    dets: Vec<Determinant>,
}

impl DetBlock {
    fn build(basis: &ProductBasis, range: DetRange) -> Self {
        let mut dets = Vec::with_capacity(range.area());
        for ia in range.alpha.clone() {
            let a = basis.alpha.get(ia);
            for ib in range.beta.clone() {
                dets.push(Determinant::new(a, basis.beta.get(ib)));
            }
        }
        Self { range, dets }
    }

    #[inline(always)]
    fn get(&self, ia: usize, ib: usize) -> Determinant {
        debug_assert!(self.range.alpha.contains(&ia) && self.range.beta.contains(&ib));
        let nb = self.range.beta.len();
        self.dets[(ia - self.range.alpha.start) * nb + (ib - self.range.beta.start)]
    }
}

/// Precomposed determinants for a bra window and a ket window. Each side is
/// rebuilt only when a different window is requested.
#[derive(Clone, Debug, Default)]
pub struct DetCache {
    bra: Option<DetBlock>,
    ket: Option<DetBlock>,
    bra_builds: usize,
    ket_builds: usize,
}

impl DetCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(basis: &ProductBasis, bra: DetRange, ket: DetRange) -> Result<Self, ApplyError> {
        let mut cache = Self::new();
        cache.ensure(basis, bra, ket)?;
        Ok(cache)
    }

    /// Makes the cache cover `bra` and `ket`; returns how many sides were rebuilt.
    pub fn ensure(
        &mut self,
        basis: &ProductBasis,
        bra: DetRange,
        ket: DetRange,
    ) -> Result<usize, ApplyError> {
        Ok(self.ensure_bra(basis, bra)? as usize + self.ensure_ket(basis, ket)? as usize)
    }

    pub fn ensure_bra(&mut self, basis: &ProductBasis, bra: DetRange) -> Result<bool, ApplyError> {
        bra.check(basis)?;
        if self.bra.as_ref().is_some_and(|b| b.range == bra) {
            return Ok(false);
        }
        self.bra = Some(DetBlock::build(basis, bra));
        self.bra_builds += 1;
        Ok(true)
    }

    pub fn ensure_ket(&mut self, basis: &ProductBasis, ket: DetRange) -> Result<bool, ApplyError> {
        ket.check(basis)?;
        if self.ket.as_ref().is_some_and(|b| b.range == ket) {
            return Ok(false);
        }
        self.ket = Some(DetBlock::build(basis, ket));
        self.ket_builds += 1;
        Ok(true)
    }

    #[inline(always)]
    pub fn bra(&self, ia: usize, ib: usize) -> Determinant {
        self.bra.as_ref().expect("bra window not built").get(ia, ib)
    }

    #[inline(always)]
    pub fn ket(&self, ja: usize, jb: usize) -> Determinant {
        self.ket.as_ref().expect("ket window not built").get(ja, jb)
    }

    pub fn bra_range(&self) -> Option<&DetRange> {
        self.bra.as_ref().map(|b| &b.range)
    }

    pub fn ket_range(&self) -> Option<&DetRange> {
        self.ket.as_ref().map(|b| &b.range)
    }

    pub fn bra_builds(&self) -> usize {
        self.bra_builds
    }

    pub fn ket_builds(&self) -> usize {
        self.ket_builds
    }

    pub fn builds(&self) -> usize {
        self.bra_builds + self.ket_builds
    }

    /// Number of determinant records held (bra plus ket).
    pub fn records(&self) -> usize {
        self.bra.as_ref().map_or(0, |b| b.dets.len()) + self.ket.as_ref().map_or(0, |b| b.dets.len())
    }

    pub fn bytes(&self) -> usize {
        self.records() * std::mem::size_of::<Determinant>()
    }

    pub(crate) fn covers(&self, bra: &DetRange, ket: &DetRange) -> bool {
        self.bra_range() == Some(bra) && self.ket_range() == Some(ket)
    }
}
