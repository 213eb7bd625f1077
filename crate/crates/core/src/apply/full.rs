//! Full-bitstring path: each determinant is one packed spin-orbital string and
//! its neighbours are generated with bit operations, then probed in the
//! determinant index.

use rayon::prelude::*;

use crate::basis::{Determinant, ExplicitBasis};
use crate::davidson::LinearOperator;
use crate::integrals::IntegralTable;
use crate::matelem::{h_diag, hij};

use super::{ApplyError, ExecPolicy, Executor};

#[derive(Clone, Debug)]
pub struct ExplicitHamiltonian<'a> {
    pub basis: &'a ExplicitBasis,
    pub ints: &'a IntegralTable,
    pub diag: Vec<f64>,
}

impl<'a> ExplicitHamiltonian<'a> {
    pub fn new(basis: &'a ExplicitBasis, ints: &'a IntegralTable) -> Result<Self, ApplyError> {
        if ints.norb() != basis.norb {
            return Err(ApplyError::OrbitalMismatch {
                table: ints.norb(),
                basis: basis.norb,
            });
        }
        let diag = basis.dets().par_iter().map(|&d| h_diag(d, ints)).collect();
        Ok(Self { basis, ints, diag })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Calls `visit(j)` for every basis index `j` one or two spin-conserving
    /// moves away from determinant `i`.
    #[inline]
    fn for_each_neighbour(&self, i: usize, mut visit: impl FnMut(usize)) {
        let norb = self.basis.norb;
        let bits = self.basis.dets()[i].packed(norb);
        let width = 2 * norb;
        let all: u128 = if width == 128 { u128::MAX } else { (1u128 << width) - 1 };
        let alpha_block: u128 = (1u128 << norb) - 1;
        let spin_of = |p: u32| (p as usize >= norb) as u8;
        let empty = !bits & all;

        let mut occ = bits;
        while occ != 0 {
            let p = occ.trailing_zeros();
            occ &= occ - 1;
            // particles of the same spin as p
            let block = if spin_of(p) == 0 { alpha_block } else { alpha_block << norb };
            let mut virt = empty & block;
            while virt != 0 {
                let r = virt.trailing_zeros();
                virt &= virt - 1;
                let target = bits ^ (1u128 << p) ^ (1u128 << r);
                if let Some(j) = self.basis.index_of_packed(target) {
                    visit(j);
                }
            }
            let mut occ2 = occ;
            while occ2 != 0 {
                let q = occ2.trailing_zeros();
                occ2 &= occ2 - 1;
                let holes = spin_of(p) + spin_of(q);
                let mut v1 = empty;
                while v1 != 0 {
                    let r = v1.trailing_zeros();
                    v1 &= v1 - 1;
                    let mut v2 = v1;
                    while v2 != 0 {
                        let s = v2.trailing_zeros();
                        v2 &= v2 - 1;
                        if spin_of(r) + spin_of(s) != holes {
                            continue;
                        }
                        let target = bits ^ (1u128 << p) ^ (1u128 << q) ^ (1u128 << r) ^ (1u128 << s);
                        if let Some(j) = self.basis.index_of_packed(target) {
                            visit(j);
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn row(&self, i: usize, x: &[f64]) -> f64 {
        let dets = self.basis.dets();
        let bra: Determinant = dets[i];
        let mut acc = self.diag[i] * x[i];
        self.for_each_neighbour(i, |j| {
            acc += hij(bra, dets[j], self.ints) * x[j];
        });
        acc
    }
}

/// `y = H·x` on an explicit determinant list. Rows are owned by one work item
/// each, so both policies produce identical results.
pub fn apply_h_full(
    ham: &ExplicitHamiltonian<'_>,
    exec: &Executor,
    x: &[f64],
) -> Result<Vec<f64>, ApplyError> {
    let n = ham.dim();
    if x.len() != n {
        return Err(ApplyError::Dimension {
            expected: n,
            found: x.len(),
        });
    }
    let mut y = vec![0.0; n];
    exec.install(|| match exec.policy() {
        ExecPolicy::Parallel => y
            .par_iter_mut()
            .enumerate()
            .with_min_len(64)
            .for_each(|(i, yi)| *yi = ham.row(i, x)),
        ExecPolicy::Deterministic => y
            .par_chunks_mut(256)
            .enumerate()
            .for_each(|(c, chunk)| {
                for (k, yi) in chunk.iter_mut().enumerate() {
                    *yi = ham.row(c * 256 + k, x);
                }
            }),
    });
    Ok(y)
}

pub struct ExplicitOperator<'a> {
    pub ham: ExplicitHamiltonian<'a>,
    exec: Executor,
}

impl<'a> ExplicitOperator<'a> {
    pub fn new(
        basis: &'a ExplicitBasis,
        ints: &'a IntegralTable,
        exec: Executor,
    ) -> Result<Self, ApplyError> {
        Ok(Self {
            ham: ExplicitHamiltonian::new(basis, ints)?,
            exec,
        })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.ham.diag
    }
}

impl LinearOperator for ExplicitOperator<'_> {
    fn dim(&self) -> usize {
        self.ham.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let out = apply_h_full(&self.ham, &self.exec, x).expect("hamiltonian application failed");
        y.copy_from_slice(&out);
    }
}
