//! Dense symmetric eigenvalue routines and fixed-order reductions.
//!
//! Everything here is deliberately dependency-free: matrices are desk-scale
//! (n up to a few hundred) and the downstream consumers are O(n^3) anyway.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Iteration cap for power iteration.
pub const POWER_ITER_CAP: usize = 100_000;

/// Convergence tolerance on successive Rayleigh quotients.
pub const POWER_ITER_TOL: f64 = 1e-10;

/// Internal seed for the deterministic power-iteration start vector.
const START_VECTOR_SEED: u64 = 0x504f_5745_5249;

/// Deterministic random unit vector orthogonal to the all-ones vector.
fn start_vector(n: usize) -> Array1<f64> {
    let mut rng = substream(START_VECTOR_SEED, &[n as u64]);
    let mut v = Array1::from_shape_fn(n, |_| {
        use rand::Rng;
        rng.random_range(-1.0..1.0)
    });
    let mean = v.sum() / n as f64;
    v.mapv_inplace(|x| x - mean);
    let norm = v.dot(&v).sqrt();
    if norm < 1e-12 {
        // Degenerate draw; fall back to a fixed vector orthogonal to 1.
        let mut e = Array1::zeros(n);
        e[0] = 1.0 - 1.0 / n as f64;
        for i in 1..n {
            e[i] = -1.0 / n as f64;
        }
        let norm = e.dot(&e).sqrt();
        return e / norm;
    }
    v / norm
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, declared converged once successive Rayleigh quotients differ
/// by less than `tol`.
pub fn power_iteration_sym(a: &Array2<f64>, tol: f64, max_iters: usize) -> Result<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "power iteration needs a square matrix");
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(a[(0, 0)].max(0.0));
    }
    let mut v = start_vector(n);
    let mut prev: Option<f64> = None;
    let mut last_diff = f64::INFINITY;
    for _ in 0..max_iters {
        let w = a.dot(&v);
        let rayleigh = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            // The matrix annihilates the iterate: top eigenvalue is 0.
            return Ok(0.0);
        }
        v = w / norm;
        if let Some(p) = prev {
            last_diff = (rayleigh - p).abs();
            if last_diff < tol {
                return Ok(rayleigh.max(0.0));
            }
        }
        prev = Some(rayleigh);
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_estimate: prev.unwrap_or(f64::NAN),
        residual: last_diff,
    })
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// returned in descending order. Converged when the off-diagonal Frobenius
/// norm drops below `tol` relative to the input scale.
pub fn jacobi_eigenvalues(a: &Array2<f64>, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Jacobi needs a square matrix");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.clone();
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    let off_norm = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += m[(p, q)] * m[(p, q)];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..max_sweeps {
        if off_norm(&m) <= tol * scale {
            let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
            return Ok(eigs);
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                if t == 0.0 {
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(p, k)] = m[(k, p)];
                    m[(k, q)] = s * akp + c * akq;
                    m[(q, k)] = m[(k, q)];
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        last_estimate: f64::NAN,
        residual: off_norm(&m),
    })
}

/// Average of `n` vectors, accumulated as sum of (1/n)-scaled terms in
/// index order. Every node-average in the crate goes through this so that
/// uniform-weight averaging and explicit mean computation agree bit for bit.
pub fn scaled_mean<'a, I>(vectors: I, n: usize, dim: usize) -> Array1<f64>
where
    I: IntoIterator<Item = ArrayView1<'a, f64>>,
{
    let w = 1.0 / n as f64;
    let mut acc = Array1::zeros(dim);
    for v in vectors {
        acc.scaled_add(w, &v);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn power_iteration_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let lambda = power_iteration_sym(&a, 1e-12, POWER_ITER_CAP).unwrap();
        assert_abs_diff_eq!(lambda, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn power_iteration_zero_matrix() {
        let a = Array2::zeros((4, 4));
        assert_eq!(power_iteration_sym(&a, 1e-12, 10).unwrap(), 0.0);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // Symmetric with eigenvalues 4 and 2: [[3,1],[1,3]].
        let a = array![[3.0, 1.0], [1.0, 3.0]];
        let eigs = jacobi_eigenvalues(&a, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(eigs[0], 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(eigs[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn jacobi_matches_power_iteration_on_random_psd() {
        let mut rng = substream(11, &[0]);
        for trial in 0..10u64 {
            let _ = trial;
            let n = 6;
            let b = Array2::from_shape_fn((n, n), |_| {
                use rand::Rng;
                rng.random_range(-1.0..1.0)
            });
            let g = b.t().dot(&b); // PSD
            let eigs = jacobi_eigenvalues(&g, 1e-12, 100).unwrap();
            let top = power_iteration_sym(&g, 1e-13, POWER_ITER_CAP).unwrap();
            assert_abs_diff_eq!(eigs[0], top, epsilon = 1e-7);
            // Trace check: sum of eigenvalues equals trace.
            let trace: f64 = (0..n).map(|i| g[(i, i)]).sum();
            let sum: f64 = eigs.iter().sum();
            assert_abs_diff_eq!(trace, sum, epsilon = 1e-9);
        }
    }

    #[test]
    fn scaled_mean_matches_manual_average() {
        let a = array![1.0, 2.0];
        let b = array![3.0, 4.0];
        let m = scaled_mean([a.view(), b.view()], 2, 2);
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 3.0, epsilon = 1e-15);
    }
}
