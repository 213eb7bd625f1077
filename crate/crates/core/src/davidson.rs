//! Davidson iteration for the lowest eigenpairs of a symmetric operator that is
//! only available through matrix–vector products.
//!
//! One correction vector enters the subspace per iteration. Images `W = H·V`
//! are cached so each iteration costs a single operator application, and the
//! residual `r = W·y − θ·u` is formed from them. When the subspace reaches
//! `max_subspace` it is compressed onto the `restart_keep` lowest Ritz vectors;
//! `W` is rotated with the same coefficients, so restarts are free of extra
//! applications.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{axpy, dot, jacobi_eigh, norm, scale, LinalgError, SymmetricEigen};

/// A symmetric linear map `y = H·x` on vectors of length [`dim`](Self::dim).
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Overwrites `y` with `H·x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DavidsonError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("requested {n_roots} roots from a space of dimension {dim}")]
    TooManyRoots { n_roots: usize, dim: usize },
    #[error("diagonal has length {found}, operator dimension is {expected}")]
    DiagonalLength { expected: usize, found: usize },
    #[error("initial vector is zero or has the wrong length")]
    InitialVector,
    #[error("projected eigenproblem failed: {0}")]
    Projected(#[from] LinalgError),
}

#[derive(Clone, Debug)]
pub struct DavidsonOptions {
    pub n_roots: usize,
    pub tol_residual: f64,
    pub max_iters: usize,
    pub max_subspace: usize,
    pub restart_keep: usize,
    /// Smallest magnitude allowed for a preconditioner denominator.
    pub precond_delta: f64,
    pub reorthogonalize: bool,
    /// Seed for restart vectors injected after a breakdown.
    pub seed: u64,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self {
            n_roots: 1,
            tol_residual: 1e-8,
            max_iters: 200,
            max_subspace: 32,
            restart_keep: 4,
            precond_delta: 1e-6,
            reorthogonalize: true,
            seed: 0,
        }
    }
}

impl DavidsonOptions {
    pub fn validate(&self) -> Result<(), DavidsonError> {
        let bad = |m: &str| Err(DavidsonError::Options(m.to_string()));
        if self.n_roots < 1 {
            return bad("n_roots must be at least 1");
        }
        if self.n_roots > self.restart_keep {
            return bad("n_roots must not exceed restart_keep");
        }
        if self.restart_keep >= self.max_subspace {
            return bad("restart_keep must be smaller than max_subspace");
        }
        if self.tol_residual.is_nan() || self.tol_residual <= 0.0 {
            return bad("tol_residual must be positive");
        }
        if self.precond_delta.is_nan() || self.precond_delta <= 0.0 {
            return bad("precond_delta must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        Ok(())
    }
}

/// Per-iteration record.
#[derive(Clone, Debug, Default)]
pub struct IterationRecord {
    pub subspace: usize,
    /// Ritz values of the tracked roots.
    pub theta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `|θ₀^(k) − θ₀^(k−1)|`; infinite on the first iteration.
    pub delta_theta: f64,
    /// `‖VᵀV − I‖_F` of the subspace the Ritz pairs were extracted from.
    pub orthogonality: f64,
    /// `‖T − Tᵀ‖_F` before symmetrization.
    pub asymmetry: f64,
    /// Set when the subspace was compressed right after this iteration.
    pub restarted: bool,
    /// Lowest Ritz value of the compressed subspace, when `restarted`.
    pub theta_after_restart: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DavidsonStats {
    pub iterations: Vec<IterationRecord>,
    /// Wall time of each operator application.
    pub apply_times: Vec<Duration>,
    pub restarts: usize,
    pub breakdowns: usize,
}

impl DavidsonStats {
    pub fn n_applies(&self) -> usize {
        self.apply_times.len()
    }
}

#[derive(Clone, Debug)]
pub struct DavidsonResult {
    pub energies: Vec<f64>,
    /// Unit-norm Ritz vectors, one per root.
    pub vectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    pub converged: bool,
    pub stats: DavidsonStats,
}

impl DavidsonResult {
    pub fn iterations(&self) -> usize {
        self.stats.iterations.len()
    }
}

/// Damped diagonal preconditioner:
/// `t_i = r_i / (sign(d_i − θ)·max(|d_i − θ|, δ))` with `sign(0) = +1`.
pub fn precondition(r: &[f64], diag: &[f64], theta: f64, delta: f64) -> Vec<f64> {
    assert_eq!(r.len(), diag.len(), "residual and diagonal lengths differ");
    r.iter()
        .zip(diag)
        .map(|(&ri, &di)| {
            let gap = di - theta;
            let sign = if gap < 0.0 { -1.0 } else { 1.0 };
            ri / (sign * gap.abs().max(delta))
        })
        .collect()
}

/// Modified Gram–Schmidt of `t` against the orthonormal `basis`, with an
/// optional second pass. Returns `None` when the remainder is below
/// `1e-12·‖t‖`.
pub fn orthogonalize(t: &[f64], basis: &[Vec<f64>], reorth: bool) -> Option<Vec<f64>> {
    let initial = norm(t);
    if initial == 0.0 || !initial.is_finite() {
        return None;
    }
    let mut out = t.to_vec();
    let passes = if reorth { 2 } else { 1 };
    for _ in 0..passes {
        for v in basis {
            let c = dot(v, &out);
            axpy(-c, v, &mut out);
        }
    }
    let rest = norm(&out);
    if rest < 1e-12 * initial {
        return None;
    }
    scale(1.0 / rest, &mut out);
    Some(out)
}

/// Full eigen-decomposition of the small projected matrix (row-major `k×k`).
pub fn projected_eigensolve(t: &[f64], k: usize) -> Result<SymmetricEigen, LinalgError> {
    jacobi_eigh(t, k)
}

struct Subspace {
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    /// Row-major `k×k`, leading dimension `cap`.
    t: Vec<f64>,
    gram: Vec<f64>,
    cap: usize,
}

impl Subspace {
    fn new(cap: usize) -> Self {
        Self {
            v: Vec::with_capacity(cap),
            w: Vec::with_capacity(cap),
            t: vec![0.0; cap * cap],
            gram: vec![0.0; cap * cap],
            cap,
        }
    }

    fn k(&self) -> usize {
        self.v.len()
    }

    fn push(&mut self, v: Vec<f64>, w: Vec<f64>) {
        let k = self.k();
        let cap = self.cap;
        for j in 0..k {
            let tjk = dot(&self.v[j], &w);
            let tkj = dot(&v, &self.w[j]);
            self.t[j * cap + k] = tjk;
            self.t[k * cap + j] = tkj;
            let g = dot(&self.v[j], &v);
            self.gram[j * cap + k] = g;
            self.gram[k * cap + j] = g;
        }
        self.t[k * cap + k] = dot(&v, &w);
        self.gram[k * cap + k] = dot(&v, &v);
        self.v.push(v);
        self.w.push(w);
    }

    fn projected(&self) -> (Vec<f64>, f64) {
        let k = self.k();
        let mut m = vec![0.0; k * k];
        let mut asym = 0.0;
        for i in 0..k {
            for j in 0..k {
                m[i * k + j] = self.t[i * self.cap + j];
                let d = self.t[i * self.cap + j] - self.t[j * self.cap + i];
                asym += d * d;
            }
        }
        (m, asym.sqrt())
    }

    fn orthogonality(&self) -> f64 {
        let k = self.k();
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                let d = self.gram[i * self.cap + j] - want;
                s += d * d;
            }
        }
        s.sqrt()
    }

    fn combine(vs: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; vs[0].len()];
        for (v, &c) in vs.iter().zip(coeffs) {
            axpy(c, v, &mut out);
        }
        out
    }

    /// Keeps the first `keep` Ritz directions of `eig`.
    fn compress(&mut self, eig: &SymmetricEigen, keep: usize) {
        let k = self.k();
        let coeffs: Vec<Vec<f64>> = (0..keep).map(|j| eig.vector(j)).collect();
        let v: Vec<Vec<f64>> = coeffs.iter().map(|c| Self::combine(&self.v, c)).collect();
        let w: Vec<Vec<f64>> = coeffs.iter().map(|c| Self::combine(&self.w, c)).collect();
        debug_assert!(keep <= k);
        self.v.clear();
        self.w.clear();
        self.t.iter_mut().for_each(|x| *x = 0.0);
        self.gram.iter_mut().for_each(|x| *x = 0.0);
        for (vi, wi) in v.into_iter().zip(w) {
            self.push(vi, wi);
        }
    }
}

fn timed_apply<O: LinearOperator>(op: &O, x: &[f64], stats: &mut DavidsonStats) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    let start = Instant::now();
    op.apply(x, &mut y);
    stats.apply_times.push(start.elapsed());
    y
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn finish(
    energies: Vec<f64>,
    ritz: Vec<Vec<f64>>,
    residual_norms: Vec<f64>,
    converged: bool,
    stats: DavidsonStats,
) -> DavidsonResult {
    let vectors = ritz
        .into_iter()
        .map(|mut u| {
            let nu = norm(&u);
            scale(1.0 / nu, &mut u);
            u
        })
        .collect();
    DavidsonResult {
        energies,
        vectors,
        residual_norms,
        converged,
        stats,
    }
}

/// Lowest `opts.n_roots` eigenpairs of `op`.
///
/// Without `x0` the start vectors are unit vectors on the smallest diagonal
/// entries; with `x0` it replaces the first of them. Exhausting `max_iters`
/// is not an error: the result carries `converged = false`.
pub fn davidson_solve<O: LinearOperator>(
    op: &O,
    diag: &[f64],
    x0: Option<&[f64]>,
    opts: &DavidsonOptions,
) -> Result<DavidsonResult, DavidsonError> {
    opts.validate()?;
    let n = op.dim();
    if n < opts.n_roots || n == 0 {
        return Err(DavidsonError::TooManyRoots {
            n_roots: opts.n_roots,
            dim: n,
        });
    }
    if diag.len() != n {
        return Err(DavidsonError::DiagonalLength {
            expected: n,
            found: diag.len(),
        });
    }
    let cap = opts.max_subspace.min(n);
    let keep = opts.restart_keep.min(cap.saturating_sub(1)).max(opts.n_roots);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = DavidsonStats::default();
    let mut space = Subspace::new(cap);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(i.cmp(&j)));
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(x) = x0 {
        if x.len() != n || norm(x) == 0.0 {
            return Err(DavidsonError::InitialVector);
        }
        starts.push(x.to_vec());
    }
    for &i in &order {
        if starts.len() >= opts.n_roots {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        starts.push(e);
    }
    for s in starts {
        if let Some(v) = orthogonalize(&s, &space.v, opts.reorthogonalize) {
            let w = timed_apply(op, &v, &mut stats);
            space.push(v, w);
        }
    }
    while space.k() < opts.n_roots {
        let r = random_vector(n, &mut rng);
        if let Some(v) = orthogonalize(&r, &space.v, true) {
            stats.breakdowns += 1;
            let w = timed_apply(op, &v, &mut stats);
            space.push(v, w);
        }
    }

    let mut previous_theta = f64::INFINITY;
    loop {
        let k = space.k();
        let (tm, asymmetry) = space.projected();
        let eig = projected_eigensolve(&tm, k)?;
        let n_roots = opts.n_roots;
        let mut ritz = Vec::with_capacity(n_roots);
        let mut residuals = Vec::with_capacity(n_roots);
        let mut res_vecs = Vec::with_capacity(n_roots);
        for j in 0..n_roots {
            let y = eig.vector(j);
            let u = Subspace::combine(&space.v, &y);
            let mut r = Subspace::combine(&space.w, &y);
            axpy(-eig.values[j], &u, &mut r);
            residuals.push(norm(&r));
            ritz.push(u);
            res_vecs.push(r);
        }
        let theta: Vec<f64> = eig.values[..n_roots].to_vec();
        stats.iterations.push(IterationRecord {
            subspace: k,
            theta: theta.clone(),
            residuals: residuals.clone(),
            delta_theta: (theta[0] - previous_theta).abs(),
            orthogonality: space.orthogonality(),
            asymmetry,
            restarted: false,
            theta_after_restart: None,
        });
        previous_theta = theta[0];

        let converged = residuals.iter().all(|&r| r <= opts.tol_residual);
        if converged || stats.iterations.len() >= opts.max_iters {
            return Ok(finish(theta, ritz, residuals, converged, stats));
        }

        let target = residuals
            .iter()
            .position(|&r| r > opts.tol_residual)
            .unwrap_or(0);
        let correction = precondition(&res_vecs[target], diag, theta[target], opts.precond_delta);

        if k >= cap {
            if k == n {
                // complete space, no direction left to add
                return Ok(finish(theta, ritz, residuals, false, stats));
            }
            space.compress(&eig, keep);
            stats.restarts += 1;
            let (tm, _) = space.projected();
            let after = projected_eigensolve(&tm, space.k())?.values[0];
            if let Some(rec) = stats.iterations.last_mut() {
                rec.restarted = true;
                rec.theta_after_restart = Some(after);
            }
        }

        let v = match orthogonalize(&correction, &space.v, opts.reorthogonalize) {
            Some(v) => v,
            None => {
                stats.breakdowns += 1;
                let mut found = None;
                for _ in 0..8 {
                    let r = random_vector(n, &mut rng);
                    if let Some(v) = orthogonalize(&r, &space.v, true) {
                        found = Some(v);
                        break;
                    }
                }
                match found {
                    Some(v) => v,
                    None => return Ok(finish(theta, ritz, residuals, false, stats)),
                }
            }
        };
        let w = timed_apply(op, &v, &mut stats);
        space.push(v, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<f64>,
    }

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = dot(&self.a[i * self.n..(i + 1) * self.n], x);
            }
        }
    }

    impl Dense {
        fn diag(&self) -> Vec<f64> {
            (0..self.n).map(|i| self.a[i * self.n + i]).collect()
        }
    }

    #[test]
    fn preconditioner_examples() {
        assert_eq!(precondition(&[1.0], &[5.0], 3.0, 1e-6), vec![0.5]);
        assert_eq!(precondition(&[1.0], &[1.0], 3.0, 1e-6), vec![-0.5]);
        let t = precondition(&[1.0], &[3.0], 3.0, 1e-6);
        assert!(t[0].is_finite());
        assert!((t[0] - 1e6).abs() < 1e-6);
    }

    #[test]
    fn orthogonalize_examples() {
        let v1 = vec![1.0, 0.0, 0.0];
        let v2 = vec![0.0, 1.0, 0.0];
        let out = orthogonalize(&[0.0, 0.0, 3.0], &[v1.clone(), v2.clone()], true).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 1.0]);
        assert!(orthogonalize(&v1, std::slice::from_ref(&v1), true).is_none());
        assert!(orthogonalize(&[0.0; 3], &[], false).is_none());
    }

    #[test]
    fn sequential_orthogonalization_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for _ in 0..10 {
            let t = random_vector(40, &mut rng);
            basis.push(orthogonalize(&t, &basis, true).unwrap());
        }
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&basis[i], &basis[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_problem() {
        let op = Dense { n: 1, a: vec![-2.5] };
        let res = davidson_solve(&op, &op.diag(), None, &DavidsonOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations(), 1);
        assert_eq!(res.energies[0], -2.5);
    }

    #[test]
    fn option_validation() {
        let op = Dense { n: 2, a: vec![1.0, 0.0, 0.0, 2.0] };
        let d = op.diag();
        let mut o = DavidsonOptions { n_roots: 3, restart_keep: 4, ..Default::default() };
        assert_eq!(
            davidson_solve(&op, &d, None, &o).unwrap_err(),
            DavidsonError::TooManyRoots { n_roots: 3, dim: 2 }
        );
        o.n_roots = 5;
        assert!(matches!(davidson_solve(&op, &d, None, &o), Err(DavidsonError::Options(_))));
        let o = DavidsonOptions { precond_delta: 0.0, ..Default::default() };
        assert!(matches!(davidson_solve(&op, &d, None, &o), Err(DavidsonError::Options(_))));
        assert!(matches!(
            davidson_solve(&op, &[1.0], None, &DavidsonOptions::default()),
            Err(DavidsonError::DiagonalLength { .. })
        ));
        assert_eq!(
            davidson_solve(&op, &d, Some(&[0.0, 0.0]), &DavidsonOptions::default()).unwrap_err(),
            DavidsonError::InitialVector
        );
    }

    fn diag_dominant(n: usize, seed: u64) -> Dense {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = i as f64 + 1.0 + rng.gen_range(-0.3..0.3);
            for j in 0..i {
                let x = 0.05 * rng.gen_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        Dense { n, a }
    }

    #[test]
    fn multiple_roots_match_dense() {
        let op = diag_dominant(120, 9);
        let exact = jacobi_eigh(&op.a, op.n).unwrap().values;
        let opts = DavidsonOptions { n_roots: 3, max_subspace: 12, ..Default::default() };
        let res = davidson_solve(&op, &op.diag(), None, &opts).unwrap();
        assert!(res.converged);
        for j in 0..3 {
            assert!((res.energies[j] - exact[j]).abs() < 1e-8, "root {j}");
        }
        assert!(res.stats.restarts > 0);
    }

    #[test]
    fn max_iters_reports_not_converged() {
        let op = diag_dominant(60, 2);
        let opts = DavidsonOptions { max_iters: 2, tol_residual: 1e-14, ..Default::default() };
        let res = davidson_solve(&op, &op.diag(), None, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations(), 2);
        assert!(res.energies[0].is_finite());
    }

    #[test]
    fn breakdown_injects_random_vector() {
        // For a diagonal operator the preconditioned residual of any Ritz
        // vector lies inside the current subspace, so every expansion step
        // has to fall back to a random direction.
        let op = Dense { n: 3, a: vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0] };
        let x0 = [1.0, 1.0, 1.0];
        let res = davidson_solve(&op, &op.diag(), Some(&x0), &DavidsonOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.energies[0] - 1.0).abs() < 1e-12);
        assert!(res.stats.breakdowns > 0);
    }
}
