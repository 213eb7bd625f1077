use std::ops::Range;

use rayon::prelude::*;

use super::{enumerate_doubles, enumerate_singles, StringSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SingleEntry {
    pub target: u32,
    pub hole: u8,
    pub particle: u8,
    pub phase: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DoubleEntry {
    pub target: u32,
    pub holes: [u8; 2],
    pub particles: [u8; 2],
    pub phase: i8,
}

/// Entry types that point at a target string index.
pub trait Targeted {
    fn target(&self) -> u32;
}

impl Targeted for SingleEntry {
    #[inline(always)]
    fn target(&self) -> u32 {
        self.target
    }
}

impl Targeted for DoubleEntry {
    #[inline(always)]
    fn target(&self) -> u32 {
        self.target
    }
}

/// Compressed per-source excitation lists. Entries of one source are sorted by
/// target index, and `sources[k]` names the source of flat entry `k`.
#[derive(Clone, Debug)]
pub struct ExcitationList<E> {
    offsets: Vec<usize>,
    sources: Vec<u32>,
    entries: Vec<E>,
}

impl<E: Targeted + Copy> ExcitationList<E> {
    fn from_rows(rows: Vec<Vec<E>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut sources = Vec::with_capacity(total);
        let mut entries = Vec::with_capacity(total);
        for (i, row) in rows.into_iter().enumerate() {
            sources.extend(std::iter::repeat_n(i as u32, row.len()));
            entries.extend(row);
            offsets.push(entries.len());
        }
        Self {
            offsets,
            sources,
            entries,
        }
    }

    /// Number of source strings.
    pub fn n_sources(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total number of entries across all sources.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline(always)]
    pub fn of(&self, source: usize) -> &[E] {
        &self.entries[self.offsets[source]..self.offsets[source + 1]]
    }

    /// Entries of `source` whose target lies in `targets`.
    #[inline]
    pub fn of_in_range(&self, source: usize, targets: &Range<usize>) -> &[E] {
        let row = self.of(source);
        let lo = row.partition_point(|e| (e.target() as usize) < targets.start);
        let hi = row.partition_point(|e| (e.target() as usize) < targets.end);
        &row[lo..hi]
    }

    /// Flat entry `k` with its source index.
    #[inline(always)]
    pub fn flat(&self, k: usize) -> (usize, E) {
        (self.sources[k] as usize, self.entries[k])
    }

    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Single and double excitations that stay inside one selected string set.
#[derive(Clone, Debug)]
pub struct ExcitationTable {
    pub singles: ExcitationList<SingleEntry>,
    pub doubles: ExcitationList<DoubleEntry>,
}

impl ExcitationTable {
    /// Enumerates all excitations of every string in `set` and keeps those
    /// landing back inside the set.
    pub fn build(set: &StringSet, norb: usize) -> Self {
        let rows: Vec<(Vec<SingleEntry>, Vec<DoubleEntry>)> = set
            .strings()
            .par_iter()
            .map(|&s| {
                let mut singles: Vec<SingleEntry> = enumerate_singles(s, norb)
                    .into_iter()
                    .filter_map(|e| {
                        set.index_of(e.target).map(|t| SingleEntry {
                            target: t as u32,
                            hole: e.hole as u8,
                            particle: e.particle as u8,
                            phase: e.phase as i8,
                        })
                    })
                    .collect();
                singles.sort_unstable_by_key(|e| e.target);
                let mut doubles: Vec<DoubleEntry> = enumerate_doubles(s, norb)
                    .into_iter()
                    .filter_map(|e| {
                        set.index_of(e.target).map(|t| DoubleEntry {
                            target: t as u32,
                            holes: [e.holes[0] as u8, e.holes[1] as u8],
                            particles: [e.particles[0] as u8, e.particles[1] as u8],
                            phase: e.phase as i8,
                        })
                    })
                    .collect();
                doubles.sort_unstable_by_key(|e| e.target);
                (singles, doubles)
            })
            .collect();
        let (singles, doubles): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Self {
            singles: ExcitationList::from_rows(singles),
            doubles: ExcitationList::from_rows(doubles),
        }
    }
}
