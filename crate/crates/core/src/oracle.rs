//! Brute-force reference: dense Hamiltonian assembly and exact
//! diagonalization, for verification only.
//!
//! [`assemble_dense`] evaluates every pair through [`hij`] with no excitation
//! tables. [`assemble_dense_fock`] goes further and applies the
//! second-quantized operator term by term to occupation-number states, which
//! checks the Slater–Condon formulas themselves.

use thiserror::Error;

use crate::basis::{Determinant, SelectedBasis};
use crate::davidson::LinearOperator;
use crate::integrals::IntegralTable;
use crate::linalg::{dot, jacobi_eigh, LinalgError, SymmetricEigen};
use crate::matelem::hij;

pub const DEFAULT_CAP: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dimension {dim} exceeds the dense oracle cap of {cap}; use fewer orbitals or electrons")]
    TooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }
}

fn check_cap(dim: usize, cap: usize) -> Result<(), OracleError> {
    if dim > cap {
        Err(OracleError::TooLarge { dim, cap })
    } else {
        Ok(())
    }
}

pub fn assemble_dense(basis: &SelectedBasis, ints: &IntegralTable) -> Result<DenseMatrix, OracleError> {
    assemble_dense_capped(basis, ints, DEFAULT_CAP)
}

/// `M[i][j] = hij(det_i, det_j)` for all pairs.
pub fn assemble_dense_capped(
    basis: &SelectedBasis,
    ints: &IntegralTable,
    cap: usize,
) -> Result<DenseMatrix, OracleError> {
    let n = basis.dim();
    check_cap(n, cap)?;
    let dets: Vec<Determinant> = (0..n).map(|i| basis.determinant(i)).collect();
    let mut m = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.data[i * n + j] = hij(dets[i], dets[j], ints);
        }
    }
    Ok(m)
}

#[derive(Clone, Copy)]
enum Op {
    Create(usize),
    Annihilate(usize),
}

/// Applies operators right to left (the last element acts first) to an
/// occupation-number state. Returns the new state and its sign, or `None`
/// when the state is annihilated.
fn act(ops: &[Op], mut state: u128) -> Option<(u128, f64)> {
    let mut sign = 1.0;
    for op in ops.iter().rev() {
        let (p, create) = match *op {
            Op::Create(p) => (p, true),
            Op::Annihilate(p) => (p, false),
        };
        let occupied = state >> p & 1 == 1;
        if occupied == create {
            return None;
        }
        let below = state & ((1u128 << p) - 1);
        if below.count_ones() % 2 == 1 {
            sign = -sign;
        }
        state ^= 1u128 << p;
    }
    Some((state, sign))
}

/// Dense matrix of
/// `Σ h_pq a†_pσ a_qσ + ½ Σ (pq|rs) a†_pσ a†_rτ a_sτ a_qσ + E_core`
/// built by acting with every term on every basis state.
pub fn assemble_dense_fock(
    basis: &SelectedBasis,
    ints: &IntegralTable,
    cap: usize,
) -> Result<DenseMatrix, OracleError> {
    let n = basis.dim();
    check_cap(n, cap)?;
    let norb = ints.norb();
    let so = |p: usize, spin: usize| p + spin * norb;
    let mut m = DenseMatrix::zeros(n);
    for j in 0..n {
        let ket = basis.determinant(j).packed(norb);
        let mut deposit = |state: u128, value: f64| {
            if let Some(i) = basis.index_of(Determinant::from_packed(state, norb)) {
                m.data[i * n + j] += value;
            }
        };
        deposit(ket, ints.e_core());
        for sigma in 0..2 {
            for p in 0..norb {
                for q in 0..norb {
                    let h = ints.h(p, q);
                    if h == 0.0 {
                        continue;
                    }
                    if let Some((s, sign)) = act(&[Op::Create(so(p, sigma)), Op::Annihilate(so(q, sigma))], ket) {
                        deposit(s, sign * h);
                    }
                }
            }
        }
        for sigma in 0..2 {
            for tau in 0..2 {
                for p in 0..norb {
                    for q in 0..norb {
                        for r in 0..norb {
                            for s in 0..norb {
                                let g = ints.eri(p, q, r, s);
                                if g == 0.0 {
                                    continue;
                                }
                                let ops = [
                                    Op::Create(so(p, sigma)),
                                    Op::Create(so(r, tau)),
                                    Op::Annihilate(so(s, tau)),
                                    Op::Annihilate(so(q, sigma)),
                                ];
                                if let Some((st, sign)) = act(&ops, ket) {
                                    deposit(st, 0.5 * sign * g);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Full spectrum of a symmetric dense matrix, ascending.
pub fn dense_eigensolve(m: &DenseMatrix) -> Result<SymmetricEigen, OracleError> {
    Ok(jacobi_eigh(&m.data, m.n)?)
}
