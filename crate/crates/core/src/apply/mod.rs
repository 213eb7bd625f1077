//! Matrix-free Hamiltonian application `y = H·x` over a selected basis.
//!
//! In the product basis the work splits into three task types on top of the
//! diagonal: task 0 pairs alpha singles with beta singles (opposite-spin
//! doubles), task 1 runs beta singles and doubles with alpha fixed, task 2 runs
//! alpha singles and doubles with beta fixed. Matrix elements are evaluated on
//! the fly from cached bra and ket determinants.
//!
//! Two execution policies exist. [`ExecPolicy::Parallel`] flattens every task
//! into one index space of (bra pair, excitation entry) items and accumulates
//! into `y` with atomic adds, so summation order varies between runs.
//! [`ExecPolicy::Deterministic`] gives each row to one work item that sums its
//! contributions in a fixed order, which makes the result independent of the
//! worker count.

mod cache;
mod full;

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{ExcitationTable, ProductBasis};
use crate::davidson::LinearOperator;
use crate::integrals::IntegralTable;
use crate::matelem::{h_diag, hij};

pub use cache::{DetCache, DetRange};
pub use full::{apply_h_full, ExplicitHamiltonian, ExplicitOperator};

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error("vector length {found} does not match basis dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("window {range:?} exceeds the basis ({n_alpha} alpha × {n_beta} beta strings)")]
    Range {
        range: DetRange,
        n_alpha: usize,
        n_beta: usize,
    },
    #[error("determinant cache does not cover the full basis")]
    CacheCoverage,
    #[error("integral table has {table} orbitals, basis has {basis}")]
    OrbitalMismatch { table: usize, basis: usize },
    #[error("worker count must be at least 1")]
    Workers,
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecPolicy {
    /// Fully collapsed index space with atomic accumulation.
    Parallel,
    /// Row-owned traversal in a fixed order.
    Deterministic,
}

/// Execution policy together with the worker pool that runs it.
pub struct Executor {
    policy: ExecPolicy,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("policy", &self.policy)
            .field("workers", &self.workers())
            .finish()
    }
}

impl Executor {
    pub fn new(policy: ExecPolicy, workers: usize) -> Result<Self, ApplyError> {
        if workers == 0 {
            return Err(ApplyError::Workers);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("sbd-apply-{i}"))
            .build()
            .map_err(|e| ApplyError::Pool(e.to_string()))?;
        Ok(Self { policy, pool })
    }

    pub fn policy(&self) -> ExecPolicy {
        self.policy
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

/// Immutable Hamiltonian data for a product basis: integrals, per-spin
/// excitation tables, and the diagonal.
#[derive(Clone, Debug)]
pub struct ProductHamiltonian<'a> {
    pub basis: &'a ProductBasis,
    pub ints: &'a IntegralTable,
    pub alpha: ExcitationTable,
    pub beta: ExcitationTable,
    pub diag: Vec<f64>,
}

impl<'a> ProductHamiltonian<'a> {
    /// Builds both excitation tables and the diagonal (through `cache`, which
    /// must cover the full basis on the bra side).
    pub fn new(
        basis: &'a ProductBasis,
        ints: &'a IntegralTable,
        cache: &DetCache,
    ) -> Result<Self, ApplyError> {
        if ints.norb() != basis.norb {
            return Err(ApplyError::OrbitalMismatch {
                table: ints.norb(),
                basis: basis.norb,
            });
        }
        let diag = compute_diagonal(basis, ints, cache)?;
        Ok(Self {
            basis,
            ints,
            alpha: ExcitationTable::build(&basis.alpha, basis.norb),
            beta: ExcitationTable::build(&basis.beta, basis.norb),
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Contribution to row `(ia, ib)` from ket columns whose alpha index lies
    /// in `ket_alpha`. `x_ket` holds those columns, alpha-major, all beta
    /// strings. Summation order: diagonal, task 0, task 1, task 2.
    #[inline]
    pub(crate) fn row_contribution(
        &self,
        cache: &DetCache,
        ia: usize,
        ib: usize,
        ket_alpha: &Range<usize>,
        x_ket: &[f64],
    ) -> f64 {
        let nb = self.basis.beta.len();
        let t = self.ints;
        let bra = cache.bra(ia, ib);
        let col = |ja: usize, jb: usize| (ja - ket_alpha.start) * nb + jb;
        let local = ket_alpha.contains(&ia);
        let mut acc = 0.0;
        if local {
            acc += self.diag[self.basis.index(ia, ib)] * x_ket[col(ia, ib)];
        }
        for ea in self.alpha.singles.of_in_range(ia, ket_alpha) {
            let ja = ea.target as usize;
            for eb in self.beta.singles.of(ib) {
                let jb = eb.target as usize;
                acc += hij(bra, cache.ket(ja, jb), t) * x_ket[col(ja, jb)];
            }
        }
        if local {
            for jb in self
                .beta
                .singles
                .of(ib)
                .iter()
                .map(|e| e.target)
                .chain(self.beta.doubles.of(ib).iter().map(|e| e.target))
            {
                let jb = jb as usize;
                acc += hij(bra, cache.ket(ia, jb), t) * x_ket[col(ia, jb)];
            }
        }
        for ja in self
            .alpha
            .singles
            .of_in_range(ia, ket_alpha)
            .iter()
            .map(|e| e.target)
            .chain(self.alpha.doubles.of_in_range(ia, ket_alpha).iter().map(|e| e.target))
        {
            let ja = ja as usize;
            acc += hij(bra, cache.ket(ja, ib), t) * x_ket[col(ja, ib)];
        }
        acc
    }
}

/// `d_i = ⟨i|H|i⟩` for every basis index, read from the bra side of `cache`.
pub fn compute_diagonal(
    basis: &ProductBasis,
    ints: &IntegralTable,
    cache: &DetCache,
) -> Result<Vec<f64>, ApplyError> {
    if cache.bra_range() != Some(&DetRange::full(basis)) {
        return Err(ApplyError::CacheCoverage);
    }
    let nb = basis.beta.len();
    Ok((0..basis.dim())
        .into_par_iter()
        .map(|i| h_diag(cache.bra(i / nb, i % nb), ints))
        .collect())
}

#[inline(always)]
fn atomic_add(cell: &AtomicU64, v: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let new = (f64::from_bits(cur) + v).to_bits();
        match cell.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}

/// Items per parallel chunk of the collapsed index space.
const CHUNK: usize = 2048;

/// Runs `item(k) -> (row, value)` over `0..total` in parallel chunks,
/// merging consecutive updates of the same row before the atomic add.
fn collapsed<F>(total: usize, y: &[AtomicU64], item: F)
where
    F: Fn(usize) -> (usize, f64) + Sync,
{
    let n_chunks = total.div_ceil(CHUNK);
    (0..n_chunks).into_par_iter().for_each(|c| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(total);
        let mut row = usize::MAX;
        let mut acc = 0.0;
        for k in start..end {
            let (r, v) = item(k);
            if r != row {
                if row != usize::MAX {
                    atomic_add(&y[row], acc);
                }
                row = r;
                acc = 0.0;
            }
            acc += v;
        }
        if row != usize::MAX {
            atomic_add(&y[row], acc);
        }
    });
}

fn apply_parallel(ham: &ProductHamiltonian<'_>, cache: &DetCache, x: &[f64], y: &mut [f64]) {
    let basis = ham.basis;
    let (na, nb) = (basis.alpha.len(), basis.beta.len());
    let t = ham.ints;
    let acc: Vec<AtomicU64> = ham
        .diag
        .par_iter()
        .zip(x.par_iter())
        .map(|(d, xi)| AtomicU64::new((d * xi).to_bits()))
        .collect();

    // task 0: alpha single × beta single
    let (sa, sb) = (ham.alpha.singles.len(), ham.beta.singles.len());
    collapsed(sa * sb, &acc, |k| {
        let (ia, ea) = ham.alpha.singles.flat(k / sb);
        let (ib, eb) = ham.beta.singles.flat(k % sb);
        let (ja, jb) = (ea.target as usize, eb.target as usize);
        let h = hij(cache.bra(ia, ib), cache.ket(ja, jb), t);
        (ia * nb + ib, h * x[ja * nb + jb])
    });

    // task 1: beta singles and doubles, alpha fixed
    let (b1, b2) = (ham.beta.singles.len(), ham.beta.doubles.len());
    let eb_total = b1 + b2;
    collapsed(na * eb_total, &acc, |k| {
        let ia = k / eb_total;
        let e = k % eb_total;
        let (ib, jb) = if e < b1 {
            let (ib, s) = ham.beta.singles.flat(e);
            (ib, s.target as usize)
        } else {
            let (ib, d) = ham.beta.doubles.flat(e - b1);
            (ib, d.target as usize)
        };
        let h = hij(cache.bra(ia, ib), cache.ket(ia, jb), t);
        (ia * nb + ib, h * x[ia * nb + jb])
    });

    // task 2: alpha singles and doubles, beta fixed
    let (a1, a2) = (ham.alpha.singles.len(), ham.alpha.doubles.len());
    let ea_total = a1 + a2;
    collapsed(nb * ea_total, &acc, |k| {
        let ib = k / ea_total;
        let e = k % ea_total;
        let (ia, ja) = if e < a1 {
            let (ia, s) = ham.alpha.singles.flat(e);
            (ia, s.target as usize)
        } else {
            let (ia, d) = ham.alpha.doubles.flat(e - a1);
            (ia, d.target as usize)
        };
        let h = hij(cache.bra(ia, ib), cache.ket(ja, ib), t);
        (ia * nb + ib, h * x[ja * nb + ib])
    });

    y.par_iter_mut()
        .zip(acc.par_iter())
        .for_each(|(yi, a)| *yi = f64::from_bits(a.load(Ordering::Relaxed)));
}

fn apply_deterministic(ham: &ProductHamiltonian<'_>, cache: &DetCache, x: &[f64], y: &mut [f64]) {
    let nb = ham.basis.beta.len();
    let all = 0..ham.basis.alpha.len();
    y.par_chunks_mut(nb).enumerate().for_each(|(ia, row)| {
        for (ib, yi) in row.iter_mut().enumerate() {
            *yi = ham.row_contribution(cache, ia, ib, &all, x);
        }
    });
}

/// `y = H·x` on a product basis. The cache must hold the full basis on both
/// the bra and the ket side.
pub fn apply_h_into(
    ham: &ProductHamiltonian<'_>,
    cache: &DetCache,
    exec: &Executor,
    x: &[f64],
    y: &mut [f64],
) -> Result<(), ApplyError> {
    let n = ham.dim();
    for len in [x.len(), y.len()] {
        if len != n {
            return Err(ApplyError::Dimension {
                expected: n,
                found: len,
            });
        }
    }
    let full = DetRange::full(ham.basis);
    if !cache.covers(&full, &full) {
        return Err(ApplyError::CacheCoverage);
    }
    exec.install(|| match exec.policy() {
        ExecPolicy::Parallel => apply_parallel(ham, cache, x, y),
        ExecPolicy::Deterministic => apply_deterministic(ham, cache, x, y),
    });
    Ok(())
}

pub fn apply_h(
    ham: &ProductHamiltonian<'_>,
    cache: &DetCache,
    exec: &Executor,
    x: &[f64],
) -> Result<Vec<f64>, ApplyError> {
    let mut y = vec![0.0; x.len()];
    apply_h_into(ham, cache, exec, x, &mut y)?;
    Ok(y)
}

/// Product-basis Hamiltonian packaged as a [`LinearOperator`]: owns its
/// determinant cache and worker pool.
pub struct ProductOperator<'a> {
    pub ham: ProductHamiltonian<'a>,
    cache: Mutex<DetCache>,
    exec: Executor,
}

impl<'a> ProductOperator<'a> {
    pub fn new(
        basis: &'a ProductBasis,
        ints: &'a IntegralTable,
        exec: Executor,
    ) -> Result<Self, ApplyError> {
        let full = DetRange::full(basis);
        let cache = DetCache::build(basis, full.clone(), full)?;
        let ham = ProductHamiltonian::new(basis, ints, &cache)?;
        Ok(Self {
            ham,
            cache: Mutex::new(cache),
            exec,
        })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.ham.diag
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    /// Total cache (re)builds so far, bra and ket sides together.
    pub fn cache_builds(&self) -> usize {
        self.cache.lock().unwrap().builds()
    }

    pub fn cache_records(&self) -> usize {
        self.cache.lock().unwrap().records()
    }

    pub fn try_apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), ApplyError> {
        let mut cache = self.cache.lock().unwrap();
        let full = DetRange::full(self.ham.basis);
        cache.ensure(self.ham.basis, full.clone(), full)?;
        apply_h_into(&self.ham, &cache, &self.exec, x, y)
    }
}

impl LinearOperator for ProductOperator<'_> {
    fn dim(&self) -> usize {
        self.ham.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.try_apply(x, y).expect("hamiltonian application failed");
    }
}
