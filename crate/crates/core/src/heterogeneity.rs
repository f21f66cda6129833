//! Heterogeneity quantities: neighborhood heterogeneity H, local
//! heterogeneity, gradient-noise variances, and the bounds relating them.
//!
//! H quantifies how far W-weighted neighborhood aggregates of stochastic
//! gradients sit from the global average gradient. It is defined as a
//! supremum over parameter vectors; estimators here evaluate at caller
//! supplied probe points and report the worst probe.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::scaled_mean;
use crate::mixing::{frob_dist_to_uniform, mixing_parameter, MixingMatrix, MIXING_PARAM_TOL};
use crate::problems::{ClassProportions, LocalObjective};
use crate::rng::substream;
use crate::topo_opt::bias_term;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl McEstimate {
    fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

fn mean_and_stderr(samples: &[f64]) -> McEstimate {
    let s = samples.len();
    let mean = samples.iter().sum::<f64>() / s as f64;
    if s < 2 {
        return McEstimate::exact(mean);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
    McEstimate {
        value: mean,
        stderr: (var / s as f64).sqrt(),
    }
}

fn check_node_count<O: LocalObjective>(w: &MixingMatrix, objectives: &[O]) -> Result<()> {
    if w.n() != objectives.len() {
        return Err(Error::DimensionMismatch {
            context: "mixing matrix vs objective list",
            expected: w.n(),
            found: objectives.len(),
        });
    }
    Ok(())
}

/// Monte Carlo estimate of the neighborhood heterogeneity
/// (1/n) sum_i E || sum_j W_ij grad F_j(theta, Z_j) - (1/n) sum_j grad F_j(theta, Z_j) ||^2
/// at each probe, returning the worst probe (a conservative stand-in for
/// the supremum over all theta). Draw (node i, probe p, sample s) comes
/// from substream (seed, stream_id(i), p, s), so estimates follow nodes
/// under relabeling.
pub fn estimate_h<O: LocalObjective>(
    w: &MixingMatrix,
    objectives: &[O],
    probes: &[Array1<f64>],
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_node_count(w, objectives)?;
    if probes.is_empty() || samples == 0 {
        return Err(Error::InvalidArgument(
            "estimate_h needs at least one probe and one sample".into(),
        ));
    }
    let n = objectives.len();
    let d = objectives[0].dimension();
    let entries = w.entries();
    let inv_n = 1.0 / n as f64;

    let mut best: Option<McEstimate> = None;
    for (p_idx, theta) in probes.iter().enumerate() {
        let mut draws = Vec::with_capacity(samples);
        let mut grads: Vec<Array1<f64>> = vec![Array1::zeros(d); n];
        for s in 0..samples {
            for (j, obj) in objectives.iter().enumerate() {
                let mut rng = substream(seed, &[obj.stream_id(), p_idx as u64, s as u64]);
                let z = obj.sample(&mut rng)?;
                grads[j] = obj.stoch_grad(theta.view(), &z);
            }
            let global = scaled_mean(grads.iter().map(|g| g.view()), n, d);
            let mut acc = 0.0;
            for i in 0..n {
                let mut neighborhood = Array1::zeros(d);
                for (j, g) in grads.iter().enumerate() {
                    neighborhood.scaled_add(entries[(i, j)], g);
                }
                let diff = &neighborhood - &global;
                acc += inv_n * diff.dot(&diff);
            }
            draws.push(acc);
        }
        let estimate = mean_and_stderr(&draws);
        if best.map_or(true, |b| estimate.value > b.value) {
            best = Some(estimate);
        }
    }
    Ok(best.expect("probes nonempty"))
}

/// Local heterogeneity (1/n) sum_i || grad f_i(theta) - grad f(theta) ||^2,
/// maximized over probes. Exact up to the oracles' expected gradients.
pub fn estimate_zeta_bar_sq<O: LocalObjective>(objectives: &[O], probes: &[Array1<f64>]) -> f64 {
    let n = objectives.len();
    let d = objectives[0].dimension();
    let inv_n = 1.0 / n as f64;
    let mut best = f64::NEG_INFINITY;
    for theta in probes {
        let grads: Vec<Array1<f64>> = objectives
            .iter()
            .map(|o| o.expected_grad(theta.view()))
            .collect();
        let global = scaled_mean(grads.iter().map(|g| g.view()), n, d);
        let mut acc = 0.0;
        for g in &grads {
            let diff = g - &global;
            acc += inv_n * diff.dot(&diff);
        }
        best = best.max(acc);
    }
    best
}

/// The two terms of the bias-variance upper bound on H: the worst-probe
/// neighborhood bias (1/n) sum_i || sum_j W_ij grad f_j - grad f ||^2 and
/// the variance term (sigma_max^2 / n) || W - (1/n) 1 1^T ||_F^2.
pub fn bias_variance_bound<O: LocalObjective>(
    w: &MixingMatrix,
    objectives: &[O],
    probes: &[Array1<f64>],
    sigma_max_sq: f64,
) -> Result<(f64, f64)> {
    check_node_count(w, objectives)?;
    let n = objectives.len();
    let d = objectives[0].dimension();
    let entries = w.entries();
    let inv_n = 1.0 / n as f64;
    let mut bias = f64::NEG_INFINITY;
    for theta in probes {
        let grads: Vec<Array1<f64>> = objectives
            .iter()
            .map(|o| o.expected_grad(theta.view()))
            .collect();
        let global = scaled_mean(grads.iter().map(|g| g.view()), n, d);
        let mut acc = 0.0;
        for i in 0..n {
            let mut neighborhood = Array1::zeros(d);
            for (j, g) in grads.iter().enumerate() {
                neighborhood.scaled_add(entries[(i, j)], g);
            }
            let diff = &neighborhood - &global;
            acc += inv_n * diff.dot(&diff);
        }
        bias = bias.max(acc);
    }
    let variance = sigma_max_sq / n as f64 * frob_dist_to_uniform(w);
    Ok((bias, variance))
}

/// (1 - p) (zeta_bar^2 + sigma_bar^2): the neighborhood-heterogeneity bound
/// implied by bounded local heterogeneity plus the mixing parameter.
pub fn h_bound_from_local(p: f64, zeta_bar_sq: f64, sigma_bar_sq: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    assert!(
        zeta_bar_sq >= 0.0 && sigma_bar_sq >= 0.0,
        "heterogeneity and variance must be nonnegative"
    );
    (1.0 - p) * (zeta_bar_sq + sigma_bar_sq)
}

/// The label-skew upper bound on H.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LabelSkewBound {
    pub b: f64,
    pub k: usize,
    pub bias_bound: f64,
    pub variance_bound: f64,
    pub total: f64,
}

/// Under label skew with class-level heterogeneity constant B:
/// H <= (K B / n) sum_k sum_i (sum_j W_ij pi_jk - mean_k)^2
///      + (sigma_max^2 / n) || W - (1/n) 1 1^T ||_F^2.
/// The bias factor reuses the topology objective's bias term, so
/// bias_bound = K B g(W) at lambda = 0 holds by construction.
pub fn label_skew_bound(
    w: &MixingMatrix,
    proportions: &ClassProportions,
    b: f64,
    sigma_max_sq: f64,
) -> Result<LabelSkewBound> {
    if w.n() != proportions.n() {
        return Err(Error::DimensionMismatch {
            context: "mixing matrix vs class proportions",
            expected: proportions.n(),
            found: w.n(),
        });
    }
    if b <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "class heterogeneity constant B must be positive, got {b}"
        )));
    }
    let k = proportions.num_classes();
    let bias_bound = k as f64 * b * bias_term(w.entries(), proportions);
    let variance_bound = sigma_max_sq / w.n() as f64 * frob_dist_to_uniform(w);
    Ok(LabelSkewBound {
        b,
        k,
        bias_bound,
        variance_bound,
        total: bias_bound + variance_bound,
    })
}

/// Per-node gradient-noise variance estimates.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaEstimates {
    /// Per-node worst-probe estimates of sigma_i^2.
    pub per_node: Vec<McEstimate>,
    pub sigma_bar_sq: f64,
    pub sigma_max_sq: f64,
}

/// Unbiased sample-variance estimate of sigma_i^2 =
/// E || grad F_i(theta, Z) - grad f_i(theta) ||^2 per node, maximized over
/// probes.
pub fn estimate_sigma_sq<O: LocalObjective>(
    objectives: &[O],
    probes: &[Array1<f64>],
    samples: usize,
    seed: u64,
) -> Result<SigmaEstimates> {
    if probes.is_empty() || samples < 2 {
        return Err(Error::InvalidArgument(
            "sigma estimation needs a probe and at least two samples".into(),
        ));
    }
    let d = objectives[0].dimension();
    let mut per_node = Vec::with_capacity(objectives.len());
    for obj in objectives {
        let mut best = McEstimate::exact(f64::NEG_INFINITY);
        for (p_idx, theta) in probes.iter().enumerate() {
            let grads: Vec<Array1<f64>> = (0..samples)
                .map(|s| {
                    let mut rng =
                        substream(seed, &[obj.stream_id(), p_idx as u64, s as u64]);
                    let z = obj.sample(&mut rng)?;
                    Ok(obj.stoch_grad(theta.view(), &z))
                })
                .collect::<Result<_>>()?;
            let mean = scaled_mean(grads.iter().map(|g| g.view()), samples, d);
            // Unbiased estimator of tr Cov = E || g - E g ||^2.
            let sq_devs: Vec<f64> = grads
                .iter()
                .map(|g| {
                    let diff = g - &mean;
                    diff.dot(&diff) * samples as f64 / (samples - 1) as f64
                })
                .collect();
            let est = mean_and_stderr(&sq_devs);
            if est.value > best.value {
                best = est;
            }
        }
        per_node.push(best);
    }
    let n = per_node.len();
    let sigma_bar_sq = per_node.iter().map(|e| e.value).sum::<f64>() / n as f64;
    let sigma_max_sq = per_node.iter().map(|e| e.value).fold(0.0, f64::max);
    Ok(SigmaEstimates {
        per_node,
        sigma_bar_sq,
        sigma_max_sq,
    })
}

/// Full heterogeneity measurement at a set of probes.
#[derive(Debug, Clone, Serialize)]
pub struct HeterogeneityReport {
    pub h_hat: McEstimate,
    pub zeta_bar_sq_hat: f64,
    pub sigma_bar_sq_hat: f64,
    pub sigma_max_sq_hat: f64,
    pub bias_term: f64,
    pub variance_term: f64,
    pub mixing_parameter: f64,
    pub tau_bar_sq_from_local: f64,
    pub probe_points: Vec<Vec<f64>>,
    pub samples_per_node: usize,
}

/// Assemble a [`HeterogeneityReport`]: H and sigma estimates by Monte
/// Carlo, the bias-variance split of the H bound, and the two
/// operationalizations of the tau-bar constant. `sigma_max_sq_override`
/// substitutes an exact variance bound when the problem provides one.
pub fn measure<O: LocalObjective>(
    w: &MixingMatrix,
    objectives: &[O],
    probes: &[Array1<f64>],
    samples: usize,
    seed: u64,
    sigma_max_sq_override: Option<f64>,
) -> Result<HeterogeneityReport> {
    check_node_count(w, objectives)?;
    let h_hat = estimate_h(w, objectives, probes, samples, seed)?;
    let zeta = estimate_zeta_bar_sq(objectives, probes);
    let sigma = estimate_sigma_sq(objectives, probes, samples.max(2), seed ^ 0x5153)?;
    let sigma_max_sq = sigma_max_sq_override.unwrap_or(sigma.sigma_max_sq);
    let (bias, variance) = bias_variance_bound(w, objectives, probes, sigma_max_sq)?;
    let p = mixing_parameter(w, MIXING_PARAM_TOL)?;
    Ok(HeterogeneityReport {
        h_hat,
        zeta_bar_sq_hat: zeta,
        sigma_bar_sq_hat: sigma.sigma_bar_sq,
        sigma_max_sq_hat: sigma.sigma_max_sq,
        bias_term: bias,
        variance_term: variance,
        mixing_parameter: p,
        tau_bar_sq_from_local: h_bound_from_local(p, zeta, sigma.sigma_bar_sq),
        probe_points: probes.iter().map(|p| p.to_vec()).collect(),
        samples_per_node: samples,
    })
}

/// Scalar probes lifted into parameter vectors, for the common d = 1 case.
pub fn scalar_probes(values: &[f64]) -> Vec<Array1<f64>> {
    values
        .iter()
        .map(|&v| Array1::from_elem(1, v))
        .collect()
}

/// Check that one averaging step contracts toward the column mean at rate
/// (1 - p): || M W - M_bar ||_F^2 <= (1 - p + slack) || M - M_bar ||_F^2.
pub fn mixing_contraction_holds(w: &MixingMatrix, m: &Array2<f64>, p: f64, slack: f64) -> bool {
    let n = w.n();
    let mw = m.dot(w.entries());
    let row_means = Array1::from_shape_fn(m.nrows(), |i| m.row(i).sum() / n as f64);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..m.nrows() {
        for j in 0..n {
            lhs += (mw[(i, j)] - row_means[i]).powi(2);
            rhs += (m[(i, j)] - row_means[i]).powi(2);
        }
    }
    lhs <= (1.0 - p + slack) * rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{make_topology, TopologyKind};
    use crate::problems::{make_mean_estimation, ProblemSpec};
    use approx::assert_abs_diff_eq;

    fn mean_nodes(n: usize, m: f64, var: f64) -> Vec<crate::problems::MeanEstimationNode> {
        match make_mean_estimation(n, m, var).unwrap() {
            ProblemSpec::MeanEstimation(s) => s.nodes(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn h_is_exactly_zero_on_the_complete_graph() {
        let n = 6;
        let w = make_topology(TopologyKind::Complete, n).unwrap();
        let nodes = mean_nodes(n, 5.0, 2.0);
        let probes = scalar_probes(&[0.0, 1.5, -3.0]);
        let h = estimate_h(&w, &nodes, &probes, 64, 9).unwrap();
        assert_eq!(h.value, 0.0);
        assert_eq!(h.stderr, 0.0);
    }

    #[test]
    fn deterministic_identical_objectives_have_zero_h() {
        // m = 0 and sigma = 0: every node has the same deterministic
        // gradient, and unit row sums cancel it against the global average.
        let n = 4;
        let nodes = mean_nodes(n, 0.0, 0.0);
        let w = make_topology(TopologyKind::Ring, n).unwrap();
        let h = estimate_h(&w, &nodes, &scalar_probes(&[0.7]), 16, 3).unwrap();
        assert!(h.value <= 1e-12);
    }

    #[test]
    fn zeta_closed_forms() {
        // Identical distributions across nodes: zero local heterogeneity.
        let nodes = mean_nodes(4, 0.0, 1.0);
        assert_eq!(estimate_zeta_bar_sq(&nodes, &scalar_probes(&[0.7])), 0.0);

        // Two nodes with f_1 = (theta - 1)^2, f_2 = (theta + 1)^2:
        // gradients 2(theta -+ 1), mean 2 theta, deviations -+2, so 4.
        let nodes = mean_nodes(2, 1.0, 0.3);
        let z = estimate_zeta_bar_sq(&nodes, &scalar_probes(&[0.0, 2.0, -5.0]));
        assert_abs_diff_eq!(z, 4.0, epsilon = 1e-12);

        // Cluster separation scales the value as 4 m^2.
        for m in [1.0, 10.0, 100.0] {
            let nodes = mean_nodes(8, m, 1.0);
            let z = estimate_zeta_bar_sq(&nodes, &scalar_probes(&[0.3]));
            assert_abs_diff_eq!(z, 4.0 * m * m, epsilon = 1e-9 * 4.0 * m * m);
        }
    }

    #[test]
    fn ring_bias_term_vanishes_for_alternating_clusters() {
        let n = 8;
        let w = make_topology(TopologyKind::AlternatingRing, n).unwrap();
        let nodes = mean_nodes(n, 100.0, 1.0);
        let (bias, variance) =
            bias_variance_bound(&w, &nodes, &scalar_probes(&[0.3, -2.0]), 4.0).unwrap();
        assert!(bias.abs() < 1e-12, "bias {bias}");
        assert_abs_diff_eq!(
            variance,
            4.0 / n as f64 * frob_dist_to_uniform(&w),
            epsilon = 1e-12
        );
    }

    #[test]
    fn h_bound_from_local_closed_forms() {
        assert_eq!(h_bound_from_local(1.0, 5.0, 3.0), 0.0);
        assert_eq!(h_bound_from_local(0.0, 2.0, 3.0), 5.0);
    }

    #[test]
    fn complete_graph_collapses_the_bias_variance_bound() {
        let n = 6;
        let w = make_topology(TopologyKind::Complete, n).unwrap();
        let nodes = mean_nodes(n, 7.0, 2.0);
        let (bias, variance) =
            bias_variance_bound(&w, &nodes, &scalar_probes(&[0.4]), 8.0).unwrap();
        assert_eq!(bias, 0.0);
        assert_eq!(variance, 0.0);
    }

    #[test]
    fn homogeneous_proportions_zero_the_skew_bias_for_any_topology() {
        let pi = crate::problems::ClassProportions::homogeneous(8, &[0.4, 0.35, 0.25]).unwrap();
        for kind in [TopologyKind::Ring, TopologyKind::Identity] {
            let w = make_topology(kind, 8).unwrap();
            let bound = label_skew_bound(&w, &pi, 3.0, 1.0).unwrap();
            assert!(bound.bias_bound <= 1e-20, "bias {}", bound.bias_bound);
        }
    }

    #[test]
    fn label_skew_bias_matches_g_at_lambda_zero() {
        let pi = crate::problems::dirichlet_proportions(10, 4, 0.4, 21).unwrap();
        let w = make_topology(TopologyKind::Ring, 10).unwrap();
        let bound = label_skew_bound(&w, &pi, 2.5, 1.0).unwrap();
        let expected = 4.0 * 2.5 * bias_term(w.entries(), &pi);
        assert_eq!(bound.bias_bound, expected);
        assert_eq!(bound.total, bound.bias_bound + bound.variance_bound);
        // Uniform matrix: everything collapses to zero.
        let u = make_topology(TopologyKind::Complete, 10).unwrap();
        let zero = label_skew_bound(&u, &pi, 2.5, 1.0).unwrap();
        assert!(zero.total < 1e-25);
    }

    #[test]
    fn sigma_estimates_recover_4_sigma_tilde_sq() {
        let nodes = mean_nodes(4, 3.0, 1.5);
        let est = estimate_sigma_sq(&nodes, &scalar_probes(&[0.2]), 4000, 77).unwrap();
        // True value 6.0; 4000 samples keep the estimate within a few
        // standard errors.
        for e in &est.per_node {
            assert!((e.value - 6.0).abs() < 6.0 * e.stderr.max(0.05));
        }
        assert!((est.sigma_bar_sq - 6.0).abs() < 0.5);
    }

    #[test]
    fn assumption4_contraction_spot_check() {
        use rand::Rng;
        let w = make_topology(TopologyKind::AlternatingRing, 8).unwrap();
        let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
        let mut rng = substream(13, &[1]);
        for _ in 0..20 {
            let m = Array2::from_shape_fn((3, 8), |_| rng.random_range(-2.0..2.0));
            assert!(mixing_contraction_holds(&w, &m, p, 1e-6));
        }
    }
}
