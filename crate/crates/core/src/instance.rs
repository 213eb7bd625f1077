//! Seeded synthetic instances.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::SpinString;
use crate::integrals::IntegralTable;

/// Random integrals: `h` symmetric uniform(−1, 1), every unique `(pq|rs)`
/// uniform(0, 1) scaled by 0.1, zero core energy.
pub fn random_integrals(norb: usize, seed: u64) -> IntegralTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = IntegralTable::zeros(norb);
    for p in 0..norb {
        for q in 0..=p {
            t.set_h(p, q, rng.gen_range(-1.0..1.0));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..norb).flat_map(|p| (0..=p).map(move |q| (p, q))).collect();
    for (i, &(p, q)) in pairs.iter().enumerate() {
        for &(r, s) in &pairs[..=i] {
            t.set_eri(p, q, r, s, 0.1 * rng.gen_range(0.0..1.0));
        }
    }
    t
}

fn render(bits: u64, norb: usize, out: &mut String) {
    for p in 0..norb {
        out.push(if bits >> p & 1 == 1 { '1' } else { '0' });
    }
}

/// `count` sample lines of length `2·norb` whose alpha halves are pairwise
/// distinct and whose beta halves are pairwise distinct.
pub fn distinct_half_samples(
    count: usize,
    norb: usize,
    n_alpha: usize,
    n_beta: usize,
    seed: u64,
) -> Vec<String> {
    let binom = |k: usize| (0..k).fold(1u128, |acc, i| acc * (norb - i) as u128 / (i + 1) as u128);
    assert!(
        binom(n_alpha) >= count as u128 && binom(n_beta) >= count as u128,
        "not enough distinct strings for {count} samples"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |nelec: usize| -> Vec<u64> {
        let mut seen = HashSet::with_capacity(count);
        let mut orbs: Vec<usize> = (0..norb).collect();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            orbs.shuffle(&mut rng);
            let s = SpinString::from_orbitals(&orbs[..nelec]).0;
            if seen.insert(s) {
                out.push(s);
            }
        }
        out
    };
    let alpha = pick(n_alpha);
    let beta = pick(n_beta);
    alpha
        .iter()
        .zip(&beta)
        .map(|(&a, &b)| {
            let mut line = String::with_capacity(2 * norb);
            render(a, norb, &mut line);
            render(b, norb, &mut line);
            line
        })
        .collect()
}
