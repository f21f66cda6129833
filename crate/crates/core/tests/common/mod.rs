//! Shared helpers for the integration suites.

use hetero_topo_core::rng::substream;
use hetero_topo_core::{MixingMatrix, Permutation};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniformly random permutation by Fisher-Yates on the given stream.
pub fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Permutation {
    let mut mapping: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        mapping.swap(i, j);
    }
    Permutation::new(mapping).expect("shuffle yields a bijection")
}

/// Random doubly stochastic matrix: a convex combination of `parts` random
/// permutation matrices with random positive weights.
pub fn random_doubly_stochastic(n: usize, parts: usize, seed: u64) -> MixingMatrix {
    let mut rng = substream(seed, &[0xD5, n as u64, parts as u64]);
    let mut weights: Vec<f64> = (0..parts).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mut entries = Array2::zeros((n, n));
    for &w in &weights {
        let perm = random_permutation(n, &mut rng);
        for i in 0..n {
            entries[(i, perm.image(i))] += w;
        }
    }
    MixingMatrix::validate(entries, 1e-9).expect("permutation mixtures are doubly stochastic")
}

/// Exhaustive assignment minimum over all n! permutations.
#[allow(dead_code)] // each test target compiles its own copy of this module
pub fn brute_force_assignment_min(cost: &Array2<f64>) -> f64 {
    fn recurse(
        cost: &Array2<f64>,
        row: usize,
        used: &mut Vec<bool>,
        partial: f64,
        best: &mut f64,
    ) {
        let n = cost.nrows();
        if row == n {
            if partial < *best {
                *best = partial;
            }
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                recurse(cost, row + 1, used, partial + cost[(row, col)], best);
                used[col] = false;
            }
        }
    }
    let mut used = vec![false; cost.nrows()];
    let mut best = f64::INFINITY;
    recurse(cost, 0, &mut used, 0.0, &mut best);
    best
}
