//! Command-line front end: instance loading, `solve`, `verify` and `bench`.
//!
//! [`run`] returns the process exit code; input problems surface as errors
//! and map to exit code 1 in the binary.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sbd_core::apply::{ExecPolicy, Executor, ExplicitOperator, ProductOperator};
use sbd_core::basis::{ingest_samples, BasisMode, ProductBasis, SelectedBasis};
use sbd_core::davidson::{davidson_solve, DavidsonOptions, DavidsonResult, LinearOperator};
use sbd_core::distsim::{overlap_stats, DistConfig, DistributedOperator};
use sbd_core::instance::random_integrals;
use sbd_core::integrals::{parse_fcidump, IntegralTable};
use sbd_core::oracle::{assemble_dense_capped, dense_eigensolve, DEFAULT_CAP};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbd", version, about = "Selected-basis diagonalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowest eigenpairs of the Hamiltonian in the selected basis.
    Solve(SolveArgs),
    /// Compare the iterative solver with dense diagonalization.
    Verify(VerifyArgs),
    /// Time Hamiltonian applications for several worker counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Product,
    Explicit,
}

impl From<Mode> for BasisMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Product => BasisMode::Product,
            Mode::Explicit => BasisMode::Explicit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

/// `NORB,NA,NB,SEED`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomSpec {
    pub norb: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub seed: u64,
}

impl FromStr for RandomSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected NORB,NA,NB,SEED, got {s:?}"));
        }
        let num = |i: usize| parts[i].parse::<u64>().map_err(|e| format!("{:?}: {e}", parts[i]));
        Ok(Self {
            norb: num(0)? as usize,
            n_alpha: num(1)? as usize,
            n_beta: num(2)? as usize,
            seed: num(3)?,
        })
    }
}

#[derive(Clone, Debug, Args)]
pub struct InstanceArgs {
    /// Integral file in FCIDUMP format.
    #[arg(long, value_name = "PATH")]
    pub fcidump: Option<PathBuf>,
    /// Sampled configurations, one '0'/'1' string of length 2·norb per line.
    #[arg(long, value_name = "PATH")]
    pub samples: Option<PathBuf>,
    /// Synthetic instance: random integrals and the complete product basis
    /// (or the `--samples` basis when given).
    #[arg(long, value_name = "NORB,NA,NB,SEED", conflicts_with = "fcidump")]
    pub gen_random: Option<RandomSpec>,
    #[arg(long, value_enum, default_value = "product")]
    pub mode: Mode,
}

#[derive(Clone, Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1)]
    pub nroots: usize,
    /// Residual norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 32)]
    pub max_subspace: usize,
    /// Preconditioner denominator floor.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    /// Worker count; above 1 a product basis is solved over a simulated ring.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub overlap: Toggle,
    /// Injected per-step transfer latency of the simulated ring, in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    pub delay_ms: f64,
    /// Row-owned accumulation with a fixed summation order.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Clone, Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub json: bool,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Largest dimension the dense oracle will accept.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub oracle_cap: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub workers: Vec<usize>,
    /// Timed applications per worker count.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub deterministic: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Integrals plus selected basis, with the ingestion report.
pub struct Instance {
    pub ints: IntegralTable,
    pub basis: SelectedBasis,
    pub sample_lines: usize,
    pub dropped: usize,
    pub duplicates: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn load_instance(args: &InstanceArgs) -> Result<Instance> {
    let (ints, norb, na, nb) = match (&args.fcidump, args.gen_random) {
        (Some(path), None) => {
            let dump = parse_fcidump(open(path)?).with_context(|| format!("{}", path.display()))?;
            let h = dump.header;
            let ms2 = h.ms2;
            let ne = h.nelec as i64;
            ensure!(
                (ne + ms2) % 2 == 0 && ne >= ms2.abs(),
                "{}: NELEC={} and MS2={} do not give whole spin counts",
                path.display(),
                h.nelec,
                ms2
            );
            let na = ((ne + ms2) / 2) as usize;
            let nb = ((ne - ms2) / 2) as usize;
            ensure!(
                na <= h.norb && nb <= h.norb,
                "{}: {} electrons do not fit in {} orbitals",
                path.display(),
                h.nelec,
                h.norb
            );
            (dump.table, h.norb, na, nb)
        }
        (None, Some(spec)) => {
            ensure!(
                (1..=64).contains(&spec.norb) && spec.n_alpha <= spec.norb && spec.n_beta <= spec.norb,
                "--gen-random: need 1 <= NORB <= 64 and NA, NB <= NORB"
            );
            (random_integrals(spec.norb, spec.seed), spec.norb, spec.n_alpha, spec.n_beta)
        }
        (None, None) => bail!("an instance is required: give --fcidump with --samples, or --gen-random"),
        (Some(_), Some(_)) => bail!("--fcidump and --gen-random are mutually exclusive"),
    };

    match &args.samples {
        Some(path) => {
            let ing = ingest_samples(open(path)?, norb, na, nb, args.mode.into())
                .with_context(|| format!("{}", path.display()))?;
            Ok(Instance {
                ints,
                basis: ing.basis,
                sample_lines: ing.lines,
                dropped: ing.dropped,
                duplicates: ing.duplicates,
            })
        }
        None if args.gen_random.is_some() => {
            let product = ProductBasis::complete(norb, na, nb)?;
            let basis = match args.mode {
                Mode::Product => SelectedBasis::Product(product),
                Mode::Explicit => {
                    SelectedBasis::Explicit(sbd_core::basis::ExplicitBasis::from_product(&product))
                }
            };
            Ok(Instance {
                ints,
                basis,
                sample_lines: 0,
                dropped: 0,
                duplicates: 0,
            })
        }
        None => bail!("--fcidump needs --samples to define the basis"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub count: usize,
    pub min_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
}

impl TimeSummary {
    pub fn of(times: &[Duration]) -> Self {
        if times.is_empty() {
            return Self::default();
        }
        let s: Vec<f64> = times.iter().map(Duration::as_secs_f64).collect();
        Self {
            count: s.len(),
            min_s: s.iter().copied().fold(f64::INFINITY, f64::min),
            mean_s: s.iter().sum::<f64>() / s.len() as f64,
            max_s: s.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub mode: Mode,
    pub norb: usize,
    pub n_alpha_electrons: usize,
    pub n_beta_electrons: usize,
    /// Unique alpha strings; for an explicit basis, distinct alpha halves.
    pub n_alpha_strings: usize,
    pub n_beta_strings: usize,
    pub dim: usize,
    pub sample_lines: usize,
    pub dropped: usize,
    pub duplicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub basis: BasisReport,
    pub workers: usize,
    pub distributed: bool,
    pub deterministic: bool,
    pub energies: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub apply_time: TimeSummary,
    /// `1 − exposed/total` of the last ring application; absent without a ring.
    pub overlap_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub dim: usize,
    pub davidson_energy: f64,
    pub oracle_energy: f64,
    pub difference: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub efficiency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub dim: usize,
    pub repeats: usize,
    pub available_cores: usize,
    pub rows: Vec<BenchRow>,
}

fn basis_report(inst: &Instance, mode: Mode) -> BasisReport {
    let (na, nb) = inst.basis.n_electrons();
    let (sa, sb) = match &inst.basis {
        SelectedBasis::Product(p) => (p.alpha.len(), p.beta.len()),
        SelectedBasis::Explicit(e) => {
            let mut a: Vec<u64> = e.dets().iter().map(|d| d.alpha.0).collect();
            let mut b: Vec<u64> = e.dets().iter().map(|d| d.beta.0).collect();
            a.sort_unstable();
            a.dedup();
            b.sort_unstable();
            b.dedup();
            (a.len(), b.len())
        }
    };
    BasisReport {
        mode,
        norb: inst.basis.norb(),
        n_alpha_electrons: na,
        n_beta_electrons: nb,
        n_alpha_strings: sa,
        n_beta_strings: sb,
        dim: inst.basis.dim(),
        sample_lines: inst.sample_lines,
        dropped: inst.dropped,
        duplicates: inst.duplicates,
    }
}

fn davidson_options(s: &SolverArgs) -> DavidsonOptions {
    DavidsonOptions {
        n_roots: s.nroots,
        tol_residual: s.tol,
        max_iters: s.max_iter,
        max_subspace: s.max_subspace,
        restart_keep: DavidsonOptions::default().restart_keep.max(s.nroots + 1),
        precond_delta: s.delta,
        ..Default::default()
    }
}

fn policy(deterministic: bool) -> ExecPolicy {
    if deterministic {
        ExecPolicy::Deterministic
    } else {
        ExecPolicy::Parallel
    }
}

struct Solved {
    result: DavidsonResult,
    distributed: bool,
    workers: usize,
    overlap_ratio: Option<f64>,
}

fn run_davidson(inst: &Instance, s: &SolverArgs) -> Result<Solved> {
    ensure!(s.workers >= 1, "--workers must be at least 1");
    ensure!(s.delay_ms >= 0.0 && s.delay_ms.is_finite(), "--delay-ms must be a non-negative number");
    let opts = davidson_options(s);
    let solve = |op: &dyn DynOp, diag: &[f64]| -> Result<DavidsonResult> {
        Ok(davidson_solve(&op, diag, None, &opts)?)
    };
    match &inst.basis {
        SelectedBasis::Product(b) if s.workers > 1 => {
            let cfg = DistConfig {
                overlap: s.overlap == Toggle::On,
                transfer_delay: Duration::from_secs_f64(s.delay_ms / 1e3),
            };
            let workers = s.workers.min(b.alpha.len());
            let op = DistributedOperator::new(b, &inst.ints, workers, cfg)?;
            let result = solve(&op, op.diagonal())?;
            let ratio = overlap_stats(&op.last_stats()).ratio;
            Ok(Solved {
                result,
                distributed: true,
                workers,
                overlap_ratio: Some(ratio),
            })
        }
        SelectedBasis::Product(b) => {
            let op = ProductOperator::new(b, &inst.ints, Executor::new(policy(s.deterministic), 1)?)?;
            Ok(Solved {
                result: solve(&op, op.diagonal())?,
                distributed: false,
                workers: 1,
                overlap_ratio: None,
            })
        }
        SelectedBasis::Explicit(b) => {
            let exec = Executor::new(policy(s.deterministic), s.workers)?;
            let op = ExplicitOperator::new(b, &inst.ints, exec)?;
            Ok(Solved {
                result: solve(&op, op.diagonal())?,
                distributed: false,
                workers: s.workers,
                overlap_ratio: None,
            })
        }
    }
}

/// Object-safe view of a [`LinearOperator`].
trait DynOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator> DynOp for T {
    fn dim(&self) -> usize {
        LinearOperator::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        LinearOperator::apply(self, x, y)
    }
}

impl LinearOperator for &dyn DynOp {
    fn dim(&self) -> usize {
        DynOp::dim(*self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        DynOp::apply(*self, x, y)
    }
}

fn emit(out: &OutputArgs, text: String) -> Result<()> {
    match &out.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn solve_report(args: &SolveArgs) -> Result<SolveReport> {
    let inst = load_instance(&args.instance)?;
    let solved = run_davidson(&inst, &args.solver)?;
    let r = &solved.result;
    Ok(SolveReport {
        schema_version: SCHEMA_VERSION,
        basis: basis_report(&inst, args.instance.mode),
        workers: solved.workers,
        distributed: solved.distributed,
        deterministic: args.solver.deterministic || solved.distributed,
        energies: r.energies.clone(),
        residual_norms: r.residual_norms.clone(),
        iterations: r.iterations(),
        restarts: r.stats.restarts,
        converged: r.converged,
        apply_time: TimeSummary::of(&r.stats.apply_times),
        overlap_ratio: solved.overlap_ratio,
    })
}

pub fn render_solve(r: &SolveReport) -> String {
    let b = &r.basis;
    let mut s = String::new();
    s += &format!(
        "basis      {:?}  norb={}  electrons={}+{}\n",
        b.mode, b.norb, b.n_alpha_electrons, b.n_beta_electrons
    );
    s += &format!(
        "dims       |A|={}  |B|={}  N={}\n",
        b.n_alpha_strings, b.n_beta_strings, b.dim
    );
    s += &format!(
        "samples    lines={}  dropped={}  duplicates={}\n",
        b.sample_lines, b.dropped, b.duplicates
    );
    s += &format!(
        "workers    {}{}\n",
        r.workers,
        if r.distributed { " (ring)" } else { "" }
    );
    for (k, (e, res)) in r.energies.iter().zip(&r.residual_norms).enumerate() {
        s += &format!("root {k:<5} E = {e:.10}  |r| = {res:.3e}\n");
    }
    s += &format!("iterations {}  restarts {}\n", r.iterations, r.restarts);
    let t = &r.apply_time;
    s += &format!(
        "applyH     n={}  min={:.3e}s  mean={:.3e}s  max={:.3e}s\n",
        t.count, t.min_s, t.mean_s, t.max_s
    );
    if let Some(ratio) = r.overlap_ratio {
        s += &format!("overlap    {ratio:.3}\n");
    }
    s += &format!("converged  {}\n", r.converged);
    s
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let report = solve_report(args)?;
    let text = if args.output.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        render_solve(&report)
    };
    emit(&args.output, text)?;
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn verify_report(args: &VerifyArgs) -> Result<VerifyReport> {
    let inst = load_instance(&args.instance)?;
    let dim = inst.basis.dim();
    if dim > args.oracle_cap {
        bail!(
            "dimension {dim} exceeds the dense oracle cap of {}; reduce the instance or raise --oracle-cap",
            args.oracle_cap
        );
    }
    let solved = run_davidson(&inst, &args.solver)?;
    let dense = assemble_dense_capped(&inst.basis, &inst.ints, args.oracle_cap)?;
    let oracle = dense_eigensolve(&dense)?.values[0];
    let ours = solved.result.energies[0];
    let difference = ours - oracle;
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        dim,
        davidson_energy: ours,
        oracle_energy: oracle,
        difference,
        tol: args.solver.tol,
        passed: difference.abs() <= args.solver.tol,
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let r = verify_report(args)?;
    let text = if args.output.json {
        serde_json::to_string_pretty(&r)? + "\n"
    } else {
        format!(
            "N          {}\ndavidson   {:.12}\noracle     {:.12}\ndifference {:.3e}  (tol {:.1e})\n{}\n",
            r.dim,
            r.davidson_energy,
            r.oracle_energy,
            r.difference,
            r.tol,
            if r.passed { "PASS" } else { "FAIL" }
        )
    };
    emit(&args.output, text)?;
    Ok(if r.passed { EXIT_OK } else { EXIT_INPUT })
}

/// Mean wall time of `repeats` applications of `op` to a fixed vector.
pub fn time_applies<O: LinearOperator>(op: &O, repeats: usize) -> Vec<Duration> {
    let n = op.dim();
    let x: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + (i % 17) as f64)).collect();
    let mut y = vec![0.0; n];
    op.apply(&x, &mut y); // warm-up
    (0..repeats)
        .map(|_| {
            let t = Instant::now();
            op.apply(&x, &mut y);
            t.elapsed()
        })
        .collect()
}

/// `E_p = t_1 / (p·t_p)`, relative to the first row.
pub fn efficiencies(rows: &mut [BenchRow]) {
    let Some(base) = rows.first().map(|r| r.mean_s * r.workers as f64) else {
        return;
    };
    for r in rows {
        r.efficiency = base / (r.workers as f64 * r.mean_s);
    }
}

pub fn bench_report(args: &BenchArgs) -> Result<BenchReport> {
    ensure!(args.repeats >= 1, "--repeats must be at least 1");
    ensure!(
        !args.workers.is_empty() && args.workers.iter().all(|&p| p >= 1),
        "--workers needs a list of positive counts"
    );
    let inst = load_instance(&args.instance)?;
    let mut rows = Vec::new();
    for &p in &args.workers {
        let exec = Executor::new(policy(args.deterministic), p)?;
        let times = match &inst.basis {
            SelectedBasis::Product(b) => time_applies(&ProductOperator::new(b, &inst.ints, exec)?, args.repeats),
            SelectedBasis::Explicit(b) => time_applies(&ExplicitOperator::new(b, &inst.ints, exec)?, args.repeats),
        };
        let t = TimeSummary::of(&times);
        rows.push(BenchRow {
            workers: p,
            mean_s: t.mean_s,
            min_s: t.min_s,
            efficiency: 0.0,
        });
    }
    efficiencies(&mut rows);
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        dim: inst.basis.dim(),
        repeats: args.repeats,
        available_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
        rows,
    })
}

pub fn render_bench(r: &BenchReport) -> String {
    let mut s = format!("N = {}, {} repeats, {} cores\n", r.dim, r.repeats, r.available_cores);
    s += "workers   mean mult (s)   min (s)       E_p\n";
    for row in &r.rows {
        s += &format!(
            "{:<9} {:<15.6e} {:<13.6e} {:.3}\n",
            row.workers, row.mean_s, row.min_s, row.efficiency
        );
    }
    s
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let r = bench_report(args)?;
    let text = if args.output.json {
        serde_json::to_string_pretty(&r)? + "\n"
    } else {
        render_bench(&r)
    };
    emit(&args.output, text)?;
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
