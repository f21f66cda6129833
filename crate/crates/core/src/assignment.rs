//! Linear assignment: minimize <P, C> over permutation matrices.
//!
//! Shortest-augmenting-path Hungarian algorithm with row/column potentials,
//! O(n^3). Used by the Frank-Wolfe linear minimization step; always
//! minimizes (callers negate costs if they ever need a max).

use ndarray::Array2;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mixing::MixingMatrix;

/// A bijection on {0..n-1}; `mapping[i]` is the column assigned to row `i`.
/// Serializes as a 1-based index array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Build from a 0-based mapping, checking bijectivity.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &j in &mapping {
            if j >= n || seen[j] {
                return Err(Error::InvalidArgument(format!(
                    "mapping is not a bijection on 0..{n}"
                )));
            }
            seen[j] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.mapping.len()
    }

    /// Column assigned to row `i`.
    pub fn image(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.mapping.len()))?;
        for &j in &self.mapping {
            seq.serialize_element(&(j + 1))?;
        }
        seq.end()
    }
}

/// Optimal permutation with its cost, recomputed from the cost matrix so
/// that `cost` equals the sum over the returned assignment exactly.
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    pub permutation: Permutation,
    pub cost: f64,
}

/// Globally minimal assignment for a dense square cost matrix.
///
/// Ties between co-optimal permutations are broken by the augmenting-path
/// order; callers must not rely on which optimum is returned.
pub fn solve_assignment(cost: &Array2<f64>) -> Result<AssignmentResult> {
    let n = cost.nrows();
    if n == 0 || cost.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "cost matrix must be square and nonempty",
            expected: n.max(1),
            found: cost.ncols(),
        });
    }
    for ((i, j), &c) in cost.indexed_iter() {
        if !c.is_finite() {
            return Err(Error::NonFiniteCost {
                row: i,
                col: j,
                value: c,
            });
        }
    }

    // Column 0 is a sentinel; rows/columns are shifted by one.
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to each column
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[matched_row[j] - 1] = j - 1;
    }
    let permutation = Permutation::new(mapping)?;
    let cost_total: f64 = (0..n).map(|i| cost[(i, permutation.image(i))]).sum();
    Ok(AssignmentResult {
        permutation,
        cost: cost_total,
    })
}

/// 0/1 permutation matrix; validates as a mixing matrix exactly.
pub fn to_matrix(p: &Permutation) -> MixingMatrix {
    let n = p.n();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[(i, p.image(i))] = 1.0;
    }
    MixingMatrix::validate(m, 0.0).expect("permutation matrices are exactly doubly stochastic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Exhaustive minimum over all n! permutations (Heap's algorithm).
    fn brute_force_min(cost: &Array2<f64>) -> f64 {
        fn heap(perm: &mut Vec<usize>, k: usize, cost: &Array2<f64>, best: &mut f64) {
            if k == 1 {
                let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
                if c < *best {
                    *best = c;
                }
                return;
            }
            for i in 0..k {
                heap(perm, k - 1, cost, best);
                if k % 2 == 0 {
                    perm.swap(i, k - 1);
                } else {
                    perm.swap(0, k - 1);
                }
            }
        }
        let n = cost.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        heap(&mut perm, n, cost, &mut best);
        best
    }

    #[test]
    fn identity_cost_matrix_has_zero_optimum() {
        let c = Array2::eye(2);
        let r = solve_assignment(&c).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.permutation.mapping(), &[1, 0]);
    }

    #[test]
    fn dominant_negative_diagonal_selects_identity() {
        let c = array![
            [-1.0, 0.0, 0.0],
            [0.0, -2.0, 0.0],
            [0.0, 0.0, -3.0]
        ];
        let r = solve_assignment(&c).unwrap();
        assert_eq!(r.cost, -6.0);
        assert_eq!(r.permutation.mapping(), &[0, 1, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::substream(2024, &[6]);
        for _ in 0..100 {
            let c = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
            let r = solve_assignment(&c).unwrap();
            let expected = brute_force_min(&c);
            assert!(
                (r.cost - expected).abs() <= 1e-12,
                "hungarian {} vs brute force {expected}",
                r.cost
            );
        }
    }

    #[test]
    fn row_shift_moves_cost_by_the_constant() {
        use rand::Rng;
        let mut rng = crate::rng::substream(7, &[5]);
        for _ in 0..20 {
            let c = Array2::from_shape_fn((5, 5), |_| rng.random_range(-1.0..1.0));
            let base = solve_assignment(&c).unwrap();
            let shift = 0.75;
            let mut shifted = c.clone();
            for j in 0..5 {
                shifted[(2, j)] += shift;
            }
            let moved = solve_assignment(&shifted).unwrap();
            assert!((moved.cost - base.cost - shift).abs() <= 1e-12);
            assert!((moved.cost - brute_force_min(&shifted)).abs() <= 1e-12);
        }
    }

    #[test]
    fn non_finite_entries_are_reported() {
        let c = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(matches!(
            solve_assignment(&c),
            Err(Error::NonFiniteCost { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn to_matrix_builds_exact_permutation_matrices() {
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        let m = to_matrix(&p);
        assert_eq!(m.entries()[(0, 1)], 1.0);
        assert_eq!(m.entries()[(1, 2)], 1.0);
        assert_eq!(m.entries()[(2, 0)], 1.0);
        let id = to_matrix(&Permutation::identity(3));
        assert_eq!(id.entries(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn permutation_serializes_one_based() {
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[2,3,1]");
    }
}
