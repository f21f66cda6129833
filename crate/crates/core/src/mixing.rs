//! Doubly stochastic mixing matrices: validation, canonical topologies,
//! mixing parameter, degree counts, and distance to the uniform matrix.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration_sym, POWER_ITER_CAP};

/// Default absolute tolerance on row/column sums.
pub const DEFAULT_VALIDATE_TOL: f64 = 1e-9;

/// Absolute tolerance on the [0, 1] entry bounds.
pub const ENTRY_BOUND_TOL: f64 = 1e-12;

/// Default tolerance for [`mixing_parameter`].
pub const MIXING_PARAM_TOL: f64 = 1e-10;

/// A validated n-by-n doubly stochastic matrix: entries in [0, 1], every row
/// and every column summing to 1 within tolerance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    entries: Array2<f64>,
}

impl MixingMatrix {
    /// Validate a candidate matrix at the given row/column tolerance.
    pub fn validate(entries: Array2<f64>, tol: f64) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "mixing matrix must be square and nonempty",
                expected: n.max(1),
                found: entries.ncols(),
            });
        }
        for ((i, j), &w) in entries.indexed_iter() {
            if w < -ENTRY_BOUND_TOL {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: w,
                });
            }
            if w > 1.0 + ENTRY_BOUND_TOL {
                return Err(Error::EntryAboveOne {
                    row: i,
                    col: j,
                    value: w,
                });
            }
        }
        for (i, row) in entries.axis_iter(Axis(0)).enumerate() {
            let residual = row.sum() - 1.0;
            if residual.abs() > tol {
                return Err(Error::RowSumViolation { row: i, residual });
            }
        }
        for (j, col) in entries.axis_iter(Axis(1)).enumerate() {
            let residual = col.sum() - 1.0;
            if residual.abs() > tol {
                return Err(Error::ColSumViolation { col: j, residual });
            }
        }
        Ok(Self { n, entries })
    }

    /// Validate at [`DEFAULT_VALIDATE_TOL`].
    pub fn validate_default(entries: Array2<f64>) -> Result<Self> {
        Self::validate(entries, DEFAULT_VALIDATE_TOL)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    /// Relabel nodes: returns P^T W P for the permutation taking node `i`
    /// to position `sigma[i]`.
    pub fn permuted(&self, sigma: &[usize]) -> Result<Self> {
        if sigma.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "permutation length",
                expected: self.n,
                found: sigma.len(),
            });
        }
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for j in 0..self.n {
                out[(sigma[i], sigma[j])] = self.entries[(i, j)];
            }
        }
        // Row/column sums are a reshuffle of the originals; exact.
        Ok(Self {
            n: self.n,
            entries: out,
        })
    }
}

/// Maximum in/out degrees (self-loops included) and off-diagonal edge count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub d_in_max: usize,
    pub d_out_max: usize,
    pub edge_count: usize,
}

/// Canonical topology generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// All entries 1/n.
    Complete,
    /// Identity matrix; no communication.
    Identity,
    /// Ring in index order, diagonal 1/2 and both neighbors 1/4. Requires
    /// even n so that consecutive indices alternate between the two data
    /// clusters of the mean-estimation problem.
    AlternatingRing,
    /// Same weights as the alternating ring, any n >= 1.
    Ring,
}

/// Build a canonical topology on `n` nodes.
pub fn make_topology(kind: TopologyKind, n: usize) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("node count must be >= 1".into()));
    }
    let entries = match kind {
        TopologyKind::Complete => Array2::from_elem((n, n), 1.0 / n as f64),
        TopologyKind::Identity => Array2::eye(n),
        TopologyKind::AlternatingRing => {
            if n % 2 != 0 {
                return Err(Error::OddNForAlternatingRing { n });
            }
            ring_entries(n)
        }
        TopologyKind::Ring => ring_entries(n),
    };
    MixingMatrix::validate_default(entries)
}

fn ring_entries(n: usize) -> Array2<f64> {
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        w[(i, i)] += 0.5;
        w[(i, (i + 1) % n)] += 0.25;
        w[(i, (i + n - 1) % n)] += 0.25;
    }
    w
}

/// Ring with the same weights as [`TopologyKind::AlternatingRing`] but with
/// nodes reordered so that all even-indexed nodes (one data cluster) are
/// contiguous. Same spectrum as the alternating ring, different data
/// adjacency.
pub fn clustered_ring(n: usize) -> Result<MixingMatrix> {
    if n % 2 != 0 {
        return Err(Error::OddNForAlternatingRing { n });
    }
    let ring = make_topology(TopologyKind::Ring, n)?;
    // Ring position p hosts node tau[p]: all even nodes first, then all odd
    // nodes, so each cluster occupies a contiguous arc.
    let half = n / 2;
    let mut tau = vec![0usize; n];
    for p in 0..half {
        tau[p] = 2 * p;
    }
    for p in half..n {
        tau[p] = 2 * (p - half) + 1;
    }
    ring.permuted(&tau)
}

/// Mixing parameter p = 1 - lambda_2(W^T W), computed as
/// 1 - lambda_max(W^T W - (1/n) 1 1^T) by power iteration on the deflated
/// matrix (symmetric PSD; the top eigenpair (1, 1/sqrt(n) 1) of W^T W is
/// removed exactly by the rank-one subtraction).
pub fn mixing_parameter(w: &MixingMatrix, tol: f64) -> Result<f64> {
    let n = w.n();
    let gram = w.entries().t().dot(w.entries());
    let deflated = &gram - 1.0 / n as f64;
    let lambda2 = power_iteration_sym(&deflated, tol, POWER_ITER_CAP)?;
    Ok((1.0 - lambda2).clamp(0.0, 1.0))
}

/// Squared Frobenius distance to the uniform matrix (1/n) 1 1^T.
pub fn frob_dist_to_uniform(w: &MixingMatrix) -> f64 {
    let u = 1.0 / w.n() as f64;
    let mut acc = 0.0;
    for &x in w.entries().iter() {
        let d = x - u;
        acc += d * d;
    }
    acc
}

/// Degree counts with the strict-positivity threshold taken exactly on the
/// stored entries (Frank-Wolfe iterates carry exact zeros by construction).
pub fn degrees(w: &MixingMatrix) -> DegreeReport {
    let n = w.n();
    let e = w.entries();
    let mut d_in_max = 0;
    let mut d_out_max = 0;
    let mut edge_count = 0;
    for i in 0..n {
        let mut out_deg = 0;
        let mut in_deg = 0;
        for j in 0..n {
            if e[(i, j)] > 0.0 {
                out_deg += 1;
                if i != j {
                    edge_count += 1;
                }
            }
            if e[(j, i)] > 0.0 {
                in_deg += 1;
            }
        }
        d_in_max = d_in_max.max(in_deg);
        d_out_max = d_out_max.max(out_deg);
    }
    DegreeReport {
        d_in_max,
        d_out_max,
        edge_count,
    }
}

/// Repetition policy for a sequence of mixing matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    /// A single matrix used at every iteration.
    Fixed,
    /// The list replays cyclically.
    Cyclic,
}

/// An ordered sequence of mixing matrices with a repetition policy. All
/// matrices share the same node count.
#[derive(Debug, Clone)]
pub struct MixingSchedule {
    matrices: Vec<MixingMatrix>,
    policy: SchedulePolicy,
}

impl MixingSchedule {
    pub fn fixed(matrix: MixingMatrix) -> Self {
        Self {
            matrices: vec![matrix],
            policy: SchedulePolicy::Fixed,
        }
    }

    pub fn cyclic(matrices: Vec<MixingMatrix>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument(
                "cyclic schedule needs at least one matrix".into(),
            ));
        }
        let n = matrices[0].n();
        for m in &matrices {
            if m.n() != n {
                return Err(Error::DimensionMismatch {
                    context: "schedule matrices must share n",
                    expected: n,
                    found: m.n(),
                });
            }
        }
        Ok(Self {
            matrices,
            policy: SchedulePolicy::Cyclic,
        })
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn policy(&self) -> SchedulePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Matrix used at iteration `t`. Fixed and cyclic schedules never
    /// exhaust.
    pub fn matrix_at(&self, t: usize) -> &MixingMatrix {
        match self.policy {
            SchedulePolicy::Fixed => &self.matrices[0],
            SchedulePolicy::Cyclic => &self.matrices[t % self.matrices.len()],
        }
    }

    pub fn first(&self) -> &MixingMatrix {
        &self.matrices[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_and_uniform_validate() {
        let n = 5;
        MixingMatrix::validate_default(Array2::eye(n)).unwrap();
        MixingMatrix::validate_default(Array2::from_elem((n, n), 1.0 / n as f64)).unwrap();
    }

    #[test]
    fn short_row_sum_is_rejected() {
        let w = array![[0.5, 0.4], [0.5, 0.5]];
        match MixingMatrix::validate_default(w) {
            Err(Error::RowSumViolation { row: 0, residual }) => {
                assert_abs_diff_eq!(residual, -0.1, epsilon = 1e-12)
            }
            other => panic!("expected RowSumViolation, got {other:?}"),
        }
    }

    #[test]
    fn negative_entry_is_rejected() {
        let w = array![[-0.1, 1.1], [1.1, -0.1]];
        assert!(matches!(
            MixingMatrix::validate_default(w),
            Err(Error::NegativeEntry { row: 0, col: 0, .. })
        ));
        let w = array![[1.1, -0.05], [-0.05, 1.1]];
        assert!(matches!(
            MixingMatrix::validate_default(w),
            Err(Error::EntryAboveOne { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn column_violation_is_reported_with_index() {
        // Rows sum to 1 but columns do not.
        let w = array![[0.8, 0.2], [0.8, 0.2]];
        assert!(matches!(
            MixingMatrix::validate_default(w),
            Err(Error::ColSumViolation { col: 0, .. })
        ));
    }

    #[test]
    fn alternating_ring_weights() {
        let w = make_topology(TopologyKind::AlternatingRing, 4).unwrap();
        let e = w.entries();
        for i in 0..4 {
            assert_eq!(e[(i, i)], 0.5);
            assert_eq!(e[(i, (i + 1) % 4)], 0.25);
            assert_eq!(e[(i, (i + 3) % 4)], 0.25);
        }
        assert!(matches!(
            make_topology(TopologyKind::AlternatingRing, 5),
            Err(Error::OddNForAlternatingRing { n: 5 })
        ));
    }

    #[test]
    fn complete_and_identity_generators() {
        let c = make_topology(TopologyKind::Complete, 3).unwrap();
        assert!(c.entries().iter().all(|&x| x == 1.0 / 3.0));
        let i = make_topology(TopologyKind::Identity, 5).unwrap();
        assert_eq!(i.entries(), &Array2::<f64>::eye(5));
    }

    #[test]
    fn ring_handles_tiny_n() {
        let w1 = make_topology(TopologyKind::Ring, 1).unwrap();
        assert_eq!(w1.entries()[(0, 0)], 1.0);
        let w2 = make_topology(TopologyKind::Ring, 2).unwrap();
        assert_eq!(w2.entries()[(0, 1)], 0.5);
    }

    #[test]
    fn mixing_parameter_extremes() {
        let complete = make_topology(TopologyKind::Complete, 6).unwrap();
        let p = mixing_parameter(&complete, MIXING_PARAM_TOL).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-9);

        let identity = make_topology(TopologyKind::Identity, 6).unwrap();
        let p = mixing_parameter(&identity, MIXING_PARAM_TOL).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ring_mixing_parameter_matches_circulant_formula() {
        // W is a symmetric circulant; lambda_2(W^T W) = (1/2 + cos(2 pi / n) / 2)^2.
        for n in [8usize, 16, 32] {
            let w = make_topology(TopologyKind::AlternatingRing, n).unwrap();
            let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
            let mu = 0.5 + 0.5 * (2.0 * std::f64::consts::PI / n as f64).cos();
            assert_abs_diff_eq!(p, 1.0 - mu * mu, epsilon = 1e-8);
        }
    }

    #[test]
    fn frob_dist_closed_forms() {
        let n = 7;
        let uniform = make_topology(TopologyKind::Complete, n).unwrap();
        assert_abs_diff_eq!(frob_dist_to_uniform(&uniform), 0.0, epsilon = 1e-15);
        let identity = make_topology(TopologyKind::Identity, n).unwrap();
        assert_abs_diff_eq!(
            frob_dist_to_uniform(&identity),
            (n - 1) as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degree_reports() {
        let n = 6;
        let complete = make_topology(TopologyKind::Complete, n).unwrap();
        let d = degrees(&complete);
        assert_eq!((d.d_in_max, d.d_out_max), (n, n));
        assert_eq!(d.edge_count, n * (n - 1));

        let identity = make_topology(TopologyKind::Identity, n).unwrap();
        let d = degrees(&identity);
        assert_eq!((d.d_in_max, d.d_out_max), (1, 1));
        assert_eq!(d.edge_count, 0);

        let ring = make_topology(TopologyKind::AlternatingRing, n).unwrap();
        let d = degrees(&ring);
        assert_eq!((d.d_in_max, d.d_out_max), (3, 3));
    }

    #[test]
    fn clustered_ring_is_a_relabeled_ring() {
        let n = 8;
        let clustered = clustered_ring(n).unwrap();
        let d = degrees(&clustered);
        assert_eq!((d.d_in_max, d.d_out_max), (3, 3));
        // Same spectrum as the plain ring.
        let ring = make_topology(TopologyKind::Ring, n).unwrap();
        let p_ring = mixing_parameter(&ring, MIXING_PARAM_TOL).unwrap();
        let p_clu = mixing_parameter(&clustered, MIXING_PARAM_TOL).unwrap();
        assert_abs_diff_eq!(p_ring, p_clu, epsilon = 1e-8);
        // Even nodes occupy consecutive ring positions: node 0 and node 2
        // are neighbors in the clustered layout, not in the plain one.
        assert!(clustered.entries()[(0, 2)] > 0.0);
        assert_eq!(ring.entries()[(0, 2)], 0.0);
    }

    #[test]
    fn schedule_cycles() {
        let a = make_topology(TopologyKind::Identity, 4).unwrap();
        let b = make_topology(TopologyKind::Complete, 4).unwrap();
        let s = MixingSchedule::cyclic(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(s.matrix_at(0).entries(), a.entries());
        assert_eq!(s.matrix_at(3).entries(), b.entries());
        let f = MixingSchedule::fixed(b.clone());
        assert_eq!(f.matrix_at(17).entries(), b.entries());
    }
}
