//! In-process simulation of a distributed Hamiltonian application.
//!
//! The alpha strings are split into `P` contiguous blocks. Worker `w` owns the
//! bra rows of block `w` (all beta strings) and starts with the ket slab of
//! `x` for the same block. Slabs travel around a ring, worker `w` forwarding to
//! `w + 1`, for `P` steps, so every worker meets every slab once. Each worker
//! double-buffers: while it computes against the slab in the front buffer, a
//! copy of that slab is already on its way to the next worker and the previous
//! worker's slab arrives into the back buffer. A barrier closes every step.
//!
//! The transport is a pair of channels behind `send_async` / `wait_receive`
//! with an optional injected latency standing in for the interconnect.

use std::ops::Range;
use std::sync::mpsc::{self, Receiver, Sender, SyncSender};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::apply::{ApplyError, DetCache, DetRange, ProductHamiltonian};
use crate::basis::ProductBasis;
use crate::davidson::LinearOperator;
use crate::integrals::IntegralTable;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("cannot split {n_alpha} alpha strings over {workers} workers")]
    Partition { workers: usize, n_alpha: usize },
    #[error("vector length {found} does not match basis dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

/// Contiguous, balanced split of the alpha index range over the ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Range<usize>>,
}

impl Partition {
    pub fn new(n_alpha: usize, workers: usize) -> Result<Self, DistError> {
        if workers == 0 || workers > n_alpha {
            return Err(DistError::Partition { workers, n_alpha });
        }
        let base = n_alpha / workers;
        let extra = n_alpha % workers;
        let mut start = 0;
        let blocks = (0..workers)
            .map(|w| {
                let len = base + usize::from(w < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn workers(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block(&self, w: usize) -> Range<usize> {
        self.blocks[w].clone()
    }

    /// Ring successor of worker `w`.
    pub fn next(&self, w: usize) -> usize {
        (w + 1) % self.workers()
    }

    /// Block held by worker `w` during step `s`.
    pub fn held_block(&self, w: usize, s: usize) -> usize {
        let p = self.workers();
        (w + p - s % p) % p
    }

    /// Workers visited by block `b`, in step order.
    pub fn visit_sequence(&self, b: usize) -> Vec<usize> {
        let p = self.workers();
        (0..p).map(|s| (b + s) % p).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DistConfig {
    /// Forward the held slab while computing on it.
    pub overlap: bool,
    /// Simulated latency of one slab transfer.
    pub transfer_delay: Duration,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            overlap: true,
            transfer_delay: Duration::ZERO,
        }
    }
}

/// Timing of one worker in one ring step.
#[derive(Clone, Debug, Default)]
pub struct StepTiming {
    /// Block index computed against in this step.
    pub block: usize,
    pub compute: Duration,
    /// Simulated channel latency of the transfer belonging to this step
    /// (zero on the last step, which has nothing to receive).
    pub transfer: Duration,
    /// Wall time the worker spent blocked on communication.
    pub wait: Duration,
    pub cache_rebuilt: bool,
}

impl StepTiming {
    /// Blocked time attributable to the transfer.
    pub fn exposed(&self) -> Duration {
        self.wait.min(self.transfer)
    }
}

#[derive(Clone, Debug, Default)]
pub struct WorkerRun {
    pub steps: Vec<StepTiming>,
    pub cache_rebuilds: usize,
    /// Times a buffer was found in the wrong state; always zero unless the
    /// double-buffer protocol is broken.
    pub buffer_violations: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DistStats {
    pub overlap: bool,
    pub transfer_delay: Duration,
    pub workers: Vec<WorkerRun>,
}

#[derive(Clone, Debug)]
pub struct StepOverlap {
    pub compute: Duration,
    pub transfer: Duration,
    pub exposed: Duration,
    /// `1 − exposed / (compute + exposed)`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct OverlapReport {
    /// Per step, worst case over workers.
    pub steps: Vec<StepOverlap>,
    pub total_exposed: Duration,
    pub total_transfer: Duration,
    pub ratio: f64,
}

fn ratio(exposed: Duration, total: Duration) -> f64 {
    if exposed.is_zero() {
        1.0
    } else {
        1.0 - exposed.as_secs_f64() / total.as_secs_f64()
    }
}

/// Per-step compute, transfer, and exposed-transfer times of a run.
pub fn overlap_stats(run: &DistStats) -> OverlapReport {
    let n_steps = run.workers.first().map_or(0, |w| w.steps.len());
    let mut steps = Vec::with_capacity(n_steps);
    let (mut total_exposed, mut total_transfer, mut total_time) =
        (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    for s in 0..n_steps {
        let compute = run.workers.iter().map(|w| w.steps[s].compute).max().unwrap_or_default();
        let transfer = run.workers.iter().map(|w| w.steps[s].transfer).max().unwrap_or_default();
        let exposed = run.workers.iter().map(|w| w.steps[s].exposed()).max().unwrap_or_default();
        total_exposed += exposed;
        total_transfer += transfer;
        total_time += compute + exposed;
        steps.push(StepOverlap {
            compute,
            transfer,
            exposed,
            ratio: ratio(exposed, compute + exposed),
        });
    }
    OverlapReport {
        steps,
        total_exposed,
        total_transfer,
        ratio: ratio(total_exposed, total_time),
    }
}

struct Slab {
    block: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BufState {
    Free,
    Computing,
    Receiving,
    Ready,
}

/// Two slab buffers: the front one is read by compute, the back one is filled
/// by the receive.
struct DoubleBuffer {
    slots: [Option<Slab>; 2],
    state: [BufState; 2],
    front: usize,
    violations: usize,
}

impl DoubleBuffer {
    fn new(first: Slab) -> Self {
        Self {
            slots: [Some(first), None],
            state: [BufState::Ready, BufState::Free],
            front: 0,
            violations: 0,
        }
    }

    fn begin_compute(&mut self) -> &Slab {
        if self.state[self.front] != BufState::Ready {
            self.violations += 1;
        }
        self.state[self.front] = BufState::Computing;
        self.slots[self.front].as_ref().expect("front buffer is empty")
    }

    fn end_compute(&mut self) {
        self.state[self.front] = BufState::Free;
    }

    fn receive(&mut self, slab: Slab) {
        let back = 1 - self.front;
        if matches!(self.state[back], BufState::Computing | BufState::Receiving) {
            self.violations += 1;
        }
        self.state[back] = BufState::Receiving;
        self.slots[back] = Some(slab);
        self.state[back] = BufState::Ready;
    }

    fn swap(&mut self) {
        if self.state[self.front] == BufState::Computing {
            self.violations += 1;
        }
        self.front = 1 - self.front;
    }
}

struct Envelope {
    slab: Slab,
    ack: Option<Sender<()>>,
}

/// One worker's ring endpoint: asynchronous send towards the successor,
/// blocking receive from the predecessor.
struct Link {
    outgoing: Sender<Envelope>,
    incoming: Receiver<Slab>,
}

impl Link {
    fn send_async(&self, slab: Slab) {
        self.outgoing
            .send(Envelope { slab, ack: None })
            .expect("transport thread stopped");
    }

    /// Sends and blocks until the transfer has been delivered.
    fn send_blocking(&self, slab: Slab) {
        let (ack_tx, ack_rx) = mpsc::channel();
        self.outgoing
            .send(Envelope {
                slab,
                ack: Some(ack_tx),
            })
            .expect("transport thread stopped");
        ack_rx.recv().expect("transport thread stopped");
    }

    fn wait_receive(&self) -> Slab {
        self.incoming.recv().expect("ring predecessor stopped")
    }
}

/// Moves slabs to the successor after the injected latency.
fn transport(queue: Receiver<Envelope>, ring: SyncSender<Slab>, delay: Duration) {
    for env in queue {
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        // the receiver drains every slab it is owed, so this only fails on teardown
        let _ = ring.send(env.slab);
        if let Some(ack) = env.ack {
            let _ = ack.send(());
        }
    }
}

/// Product Hamiltonian applied by `P` simulated ring workers. Each worker
/// keeps its own determinant cache across applications.
pub struct DistributedOperator<'a> {
    pub ham: ProductHamiltonian<'a>,
    partition: Partition,
    config: DistConfig,
    caches: Vec<Mutex<DetCache>>,
    last: Mutex<DistStats>,
}

impl<'a> DistributedOperator<'a> {
    pub fn new(
        basis: &'a ProductBasis,
        ints: &'a IntegralTable,
        workers: usize,
        config: DistConfig,
    ) -> Result<Self, DistError> {
        let partition = Partition::new(basis.alpha.len(), workers)?;
        let full = DetRange::full(basis);
        let diag_cache = DetCache::build(basis, full.clone(), full)?;
        let ham = ProductHamiltonian::new(basis, ints, &diag_cache)?;
        drop(diag_cache);
        let nb = basis.beta.len();
        let caches = partition
            .blocks()
            .iter()
            .map(|b| {
                let mut c = DetCache::new();
                c.ensure_bra(basis, DetRange { alpha: b.clone(), beta: 0..nb })?;
                Ok(Mutex::new(c))
            })
            .collect::<Result<Vec<_>, ApplyError>>()?;
        Ok(Self {
            ham,
            partition,
            config,
            caches,
            last: Mutex::new(DistStats::default()),
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn config(&self) -> DistConfig {
        self.config
    }

    pub fn set_config(&mut self, config: DistConfig) {
        self.config = config;
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.ham.diag
    }

    /// Cache records held by worker `w` (bra plus ket windows).
    pub fn cache_records(&self, w: usize) -> usize {
        self.caches[w].lock().unwrap().records()
    }

    /// Statistics of the most recent application.
    pub fn last_stats(&self) -> DistStats {
        self.last.lock().unwrap().clone()
    }

    /// `y = H·x`, gathered from all workers, with per-step statistics.
    pub fn distributed_apply(&self, x: &[f64]) -> Result<(Vec<f64>, DistStats), DistError> {
        let n = self.ham.dim();
        if x.len() != n {
            return Err(DistError::Dimension {
                expected: n,
                found: x.len(),
            });
        }
        let p = self.partition.workers();
        let nb = self.ham.basis.beta.len();
        let barrier = Barrier::new(p);

        // ring channels: worker w sends into ring[w].0, worker w+1 reads ring[w].1
        let mut ring_tx = Vec::with_capacity(p);
        let mut ring_rx: Vec<Option<Receiver<Slab>>> = Vec::with_capacity(p);
        for _ in 0..p {
            let (tx, rx) = mpsc::sync_channel::<Slab>(2);
            ring_tx.push(tx);
            ring_rx.push(Some(rx));
        }

        let results: Vec<(Vec<f64>, WorkerRun)> = thread::scope(|scope| {
            let mut handles = Vec::with_capacity(p);
            for (w, tx) in ring_tx.iter().enumerate() {
                let (queue_tx, queue_rx) = mpsc::channel::<Envelope>();
                let ring = tx.clone();
                let delay = self.config.transfer_delay;
                scope.spawn(move || transport(queue_rx, ring, delay));
                let prev = (w + p - 1) % p;
                let link = Link {
                    outgoing: queue_tx,
                    incoming: ring_rx[prev].take().expect("receiver taken twice"),
                };
                let barrier = &barrier;
                handles.push(scope.spawn(move || self.worker(w, x, nb, link, barrier)));
            }
            drop(ring_tx);
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Result<Vec<_>, DistError>>()
        })?;

        let mut y = Vec::with_capacity(n);
        let mut runs = Vec::with_capacity(p);
        for (local, run) in results {
            y.extend(local);
            runs.push(run);
        }
        let stats = DistStats {
            overlap: self.config.overlap,
            transfer_delay: self.config.transfer_delay,
            workers: runs,
        };
        *self.last.lock().unwrap() = stats.clone();
        Ok((y, stats))
    }

    fn worker(
        &self,
        w: usize,
        x: &[f64],
        nb: usize,
        link: Link,
        barrier: &Barrier,
    ) -> Result<(Vec<f64>, WorkerRun), DistError> {
        let p = self.partition.workers();
        let own = self.partition.block(w);
        let basis = self.ham.basis;
        let mut cache = self.caches[w].lock().unwrap();
        let mut y = vec![0.0; own.len() * nb];
        let mut buffers = DoubleBuffer::new(Slab {
            block: w,
            data: x[own.start * nb..own.end * nb].to_vec(),
        });
        let mut run = WorkerRun::default();
        let delay = self.config.transfer_delay;

        for s in 0..p {
            let has_next = s + 1 < p;
            let slab = buffers.begin_compute();
            let block = slab.block;
            let ket_alpha = self.partition.block(block);
            let rebuilt = cache.ensure_ket(
                basis,
                DetRange {
                    alpha: ket_alpha.clone(),
                    beta: 0..nb,
                },
            )?;
            run.cache_rebuilds += usize::from(rebuilt);

            if self.config.overlap && has_next {
                link.send_async(Slab {
                    block,
                    data: slab.data.clone(),
                });
            }

            let start = Instant::now();
            for (k, ia) in own.clone().enumerate() {
                for ib in 0..nb {
                    y[k * nb + ib] +=
                        self.ham.row_contribution(&cache, ia, ib, &ket_alpha, &slab.data);
                }
            }
            let compute = start.elapsed();

            let mut wait = Duration::ZERO;
            if has_next {
                if !self.config.overlap {
                    let outgoing = Slab {
                        block,
                        data: slab.data.clone(),
                    };
                    let t0 = Instant::now();
                    link.send_blocking(outgoing);
                    wait += t0.elapsed();
                }
                buffers.end_compute();
                let t0 = Instant::now();
                let incoming = link.wait_receive();
                wait += t0.elapsed();
                debug_assert_eq!(incoming.block, self.partition.held_block(w, s + 1));
                buffers.receive(incoming);
                buffers.swap();
            } else {
                buffers.end_compute();
            }
            run.steps.push(StepTiming {
                block,
                compute,
                transfer: if has_next { delay } else { Duration::ZERO },
                wait,
                cache_rebuilt: rebuilt,
            });
            barrier.wait();
        }
        run.buffer_violations = buffers.violations;
        Ok((y, run))
    }
}

impl LinearOperator for DistributedOperator<'_> {
    fn dim(&self) -> usize {
        self.ham.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (out, _) = self.distributed_apply(x).expect("distributed application failed");
        y.copy_from_slice(&out);
    }
}
