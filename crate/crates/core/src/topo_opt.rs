//! Sparse mixing-matrix learning by Frank-Wolfe over the set of doubly
//! stochastic matrices.
//!
//! The objective couples a label-skew bias term with a distance-to-uniform
//! variance term:
//!
//! ```text
//! g(W) = (1/n) ||W Pi - (1/n) 1 1^T Pi||_F^2 + (lambda/n) ||W - (1/n) 1 1^T||_F^2
//! ```
//!
//! Each Frank-Wolfe step linearizes g, solves an assignment problem for the
//! best permutation matrix, and moves by an exact closed-form line search.
//! Starting from the identity, iterate l has at most l in- and out-neighbors
//! per node, so the iteration count doubles as a communication budget.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::assignment::{solve_assignment, Permutation};
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigenvalues;
use crate::mixing::{MixingMatrix, DEFAULT_VALIDATE_TOL};
use crate::problems::ClassProportions;

/// Line-search denominators below this are treated as degenerate (P = W).
const LINE_SEARCH_DEGENERATE: f64 = 1e-15;

/// Relative eigenvalue cutoff under which singular values are treated as
/// numerically zero in the nuclear norm.
const NUCLEAR_RANK_CUTOFF: f64 = 1e-8;

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// The learning objective: class proportions plus the bias-variance
/// trade-off weight lambda > 0.
#[derive(Debug, Clone)]
pub struct TopoObjective {
    proportions: ClassProportions,
    lambda: f64,
}

impl TopoObjective {
    pub fn new(proportions: ClassProportions, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            proportions,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.proportions.n()
    }

    pub fn num_classes(&self) -> usize {
        self.proportions.num_classes()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn proportions(&self) -> &ClassProportions {
        &self.proportions
    }

    /// g evaluated on an arbitrary dense matrix (the quadratic is defined on
    /// all of R^{n x n}, which the finite-difference and line-search oracles
    /// rely on).
    pub fn value_dense(&self, w: &Array2<f64>) -> f64 {
        bias_term(w, &self.proportions) + self.lambda * uniform_dist_term(w)
    }

    /// Gradient of g at an arbitrary dense matrix.
    pub fn gradient_dense(&self, w: &Array2<f64>) -> Array2<f64> {
        let n = self.n();
        let k = self.num_classes();
        let pi = self.proportions.matrix();
        let wpi = w.dot(pi);
        let means = self.proportions.column_means();
        let mut grad = Array2::zeros((n, n));
        let two_over_n = 2.0 / n as f64;
        for c in 0..k {
            for i in 0..n {
                let coeff = two_over_n * (wpi[(i, c)] - means[c]);
                for j in 0..n {
                    grad[(i, j)] += coeff * pi[(j, c)];
                }
            }
        }
        let lam = two_over_n * self.lambda;
        let u = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                grad[(i, j)] += lam * (w[(i, j)] - u);
            }
        }
        grad
    }
}

/// Label-skew bias term (1/n) ||W Pi - (1/n) 1 1^T Pi||_F^2, accumulated by
/// class then row. Shared verbatim with the label-skew bound so the two are
/// equal by construction.
pub fn bias_term(w: &Array2<f64>, proportions: &ClassProportions) -> f64 {
    let n = proportions.n();
    let k = proportions.num_classes();
    let wpi = w.dot(proportions.matrix());
    let means = proportions.column_means();
    let mut acc = 0.0;
    for c in 0..k {
        for i in 0..n {
            let d = wpi[(i, c)] - means[c];
            acc += d * d;
        }
    }
    acc / n as f64
}

/// (1/n) ||W - (1/n) 1 1^T||_F^2 on a dense matrix.
pub fn uniform_dist_term(w: &Array2<f64>) -> f64 {
    let n = w.nrows();
    let u = 1.0 / n as f64;
    let mut acc = 0.0;
    for &x in w.iter() {
        let d = x - u;
        acc += d * d;
    }
    acc / n as f64
}

fn check_dims(w: &MixingMatrix, obj: &TopoObjective) -> Result<()> {
    if w.n() != obj.n() {
        return Err(Error::DimensionMismatch {
            context: "mixing matrix vs class proportions",
            expected: obj.n(),
            found: w.n(),
        });
    }
    Ok(())
}

/// Objective value at a valid mixing matrix.
pub fn g_value(w: &MixingMatrix, obj: &TopoObjective) -> Result<f64> {
    check_dims(w, obj)?;
    Ok(obj.value_dense(w.entries()))
}

/// Objective gradient at a valid mixing matrix.
pub fn g_gradient(w: &MixingMatrix, obj: &TopoObjective) -> Result<Array2<f64>> {
    check_dims(w, obj)?;
    Ok(obj.gradient_dense(w.entries()))
}

/// Exact line search for the segment (1 - gamma) W + gamma P, clamped to
/// [0, 1]. Returns 0 when the denominator is degenerate (P = W).
pub fn line_search(w: &MixingMatrix, p: &MixingMatrix, obj: &TopoObjective) -> f64 {
    assert_eq!(w.n(), p.n(), "line search operands must share n");
    assert_eq!(w.n(), obj.n(), "line search operands must match proportions");
    line_search_dense(w.entries(), p.entries(), obj).0
}

/// (gamma, denominator-degenerate flag) on dense operands.
fn line_search_dense(w: &Array2<f64>, p: &Array2<f64>, obj: &TopoObjective) -> (f64, bool) {
    let n = obj.n();
    let k = obj.num_classes();
    let pi = obj.proportions.matrix();
    let means = obj.proportions.column_means();
    let diff = p - w;
    let wpi = w.dot(pi);
    let dpi = diff.dot(pi);

    // sum_k (mean_k 1 - W Pi_k)^T (P - W) Pi_k
    let mut numerator = 0.0;
    for c in 0..k {
        for i in 0..n {
            numerator += (means[c] - wpi[(i, c)]) * dpi[(i, c)];
        }
    }
    // - lambda tr((W - (1/n) 1 1^T)^T (P - W))
    let u = 1.0 / n as f64;
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += (w[(i, j)] - u) * diff[(i, j)];
        }
    }
    numerator -= obj.lambda * trace;

    let denominator = dpi.iter().map(|x| x * x).sum::<f64>()
        + obj.lambda * diff.iter().map(|x| x * x).sum::<f64>();
    if denominator < LINE_SEARCH_DEGENERATE {
        return (0.0, true);
    }
    ((numerator / denominator).clamp(0.0, 1.0), false)
}

/// One Frank-Wolfe iteration record. `l` counts iterates (the initial
/// identity is l = 0 and is not recorded); `duality_gap` is evaluated at the
/// previous iterate, everything else at the new one.
///
/// `d_in_max`/`d_out_max` count in/out neighbors excluding self-loops: the
/// per-iteration communication load, which the degree guarantee bounds by
/// `l`. (A surviving self-loop costs no communication; with self-loops
/// counted the bound would read l + 1.)
#[derive(Debug, Clone, Serialize)]
pub struct FwRecord {
    pub l: usize,
    pub g_value: f64,
    pub duality_gap: f64,
    pub gamma: f64,
    pub permutation: Permutation,
    pub d_in_max: usize,
    pub d_out_max: usize,
    pub bound_value: f64,
}

/// Per-iteration trace of a Frank-Wolfe run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FwTrace {
    pub records: Vec<FwRecord>,
}

/// Run Frank-Wolfe from the identity for at most `budget` iterations,
/// stopping early when the duality gap <W - P, grad g(W)> drops to
/// `gap_tol` (0 disables the gap stop; the budget is the communication
/// budget and stays the primary control).
pub fn frank_wolfe(
    obj: &TopoObjective,
    budget: usize,
    gap_tol: f64,
) -> Result<(MixingMatrix, FwTrace)> {
    if budget < 1 {
        return Err(Error::InvalidBudget);
    }
    if gap_tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gap tolerance must be nonnegative, got {gap_tol}"
        )));
    }
    let n = obj.n();
    let nuclear = centered_gram_nuclear_norm(&obj.proportions)?;
    let mut w: Array2<f64> = Array2::eye(n);
    let mut trace = FwTrace::default();

    for l in 1..=budget {
        let grad = obj.gradient_dense(&w);
        let solution = solve_assignment(&grad)?;
        let perm = solution.permutation;

        // <W - P, grad g(W)>: upper bound on the suboptimality of W.
        let mut gap = 0.0;
        for i in 0..n {
            for j in 0..n {
                gap += w[(i, j)] * grad[(i, j)];
            }
            gap -= grad[(i, perm.image(i))];
        }
        if gap_tol > 0.0 && gap <= gap_tol {
            break;
        }

        let mut p_mat = Array2::zeros((n, n));
        for i in 0..n {
            p_mat[(i, perm.image(i))] = 1.0;
        }
        let (gamma, degenerate) = line_search_dense(&w, &p_mat, obj);

        // Convex update, keeping untouched entries exactly zero so degree
        // counts stay structural.
        let keep = 1.0 - gamma;
        w.mapv_inplace(|x| x * keep);
        for i in 0..n {
            w[(i, perm.image(i))] += gamma;
        }

        let deg = neighbor_degrees_dense(&w);
        trace.records.push(FwRecord {
            l,
            g_value: obj.value_dense(&w),
            duality_gap: gap,
            gamma,
            permutation: perm,
            d_in_max: deg.0,
            d_out_max: deg.1,
            bound_value: bound_from_nuclear(obj.lambda, nuclear, n, l),
        });

        if degenerate && gap_tol > 0.0 {
            break;
        }
    }

    let matrix = MixingMatrix::validate(w, DEFAULT_VALIDATE_TOL)?;
    Ok((matrix, trace))
}

/// Neighbor counts with self-loops excluded.
fn neighbor_degrees_dense(w: &Array2<f64>) -> (usize, usize) {
    let n = w.nrows();
    let mut d_in = 0;
    let mut d_out = 0;
    for i in 0..n {
        let mut row = 0;
        let mut col = 0;
        for j in 0..n {
            if j == i {
                continue;
            }
            if w[(i, j)] > 0.0 {
                row += 1;
            }
            if w[(j, i)] > 0.0 {
                col += 1;
            }
        }
        d_out = d_out.max(row);
        d_in = d_in.max(col);
    }
    (d_in, d_out)
}

fn bound_from_nuclear(lambda: f64, nuclear: f64, n: usize, l: usize) -> f64 {
    16.0 / (l as f64 + 2.0) * (lambda + nuclear / n as f64)
}

/// Objective bound at iterate `l`:
/// (16 / (l + 2)) (lambda + (1/n) || sum_k (Pi_k - mean_k 1) Pi_k^T ||_*).
pub fn objective_bound(obj: &TopoObjective, l: usize) -> Result<f64> {
    if l < 1 {
        return Err(Error::InvalidArgument("bound needs l >= 1".into()));
    }
    let nuclear = centered_gram_nuclear_norm(&obj.proportions)?;
    Ok(bound_from_nuclear(obj.lambda, nuclear, obj.n(), l))
}

/// Nuclear norm of M = (I - (1/n) 1 1^T) Pi Pi^T: singular values taken as
/// square roots of the eigenvalues of M^T M (Jacobi sweeps), with
/// eigenvalues below a relative rank cutoff treated as exact zeros (M has
/// rank at most K by construction).
pub fn centered_gram_nuclear_norm(proportions: &ClassProportions) -> Result<f64> {
    let n = proportions.n();
    let pi = proportions.matrix();
    let gram = pi.dot(&pi.t());
    // Column means of the Gram matrix give the rank-one deflation rows.
    let col_means = Array1::from_shape_fn(n, |j| gram.column(j).sum() / n as f64);
    let mut m = gram;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] -= col_means[j];
        }
    }
    let mtm = m.t().dot(&m);
    let eigs = jacobi_eigenvalues(&mtm, JACOBI_TOL, JACOBI_MAX_SWEEPS)?;
    let top = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = NUCLEAR_RANK_CUTOFF * top;
    Ok(eigs
        .iter()
        .filter(|&&e| e > cutoff)
        .map(|&e| e.max(0.0).sqrt())
        .sum())
}
