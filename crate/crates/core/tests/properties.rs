//! Property suites for the invariants that hold on all valid inputs.

mod common;

use common::{random_doubly_stochastic, random_permutation};
use hetero_topo_core::heterogeneity::{estimate_h, mixing_contraction_holds, scalar_probes};
use hetero_topo_core::mixing::{MIXING_PARAM_TOL};
use hetero_topo_core::problems::{MeanEstimationSpec, ProblemSpec};
use hetero_topo_core::rng::substream;
use hetero_topo_core::topo_opt::{self, TopoObjective};
use hetero_topo_core::{
    dirichlet_proportions, frank_wolfe, frob_dist_to_uniform, make_mean_estimation,
    mixing_parameter, solve_assignment, to_matrix, MixingMatrix,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Products and convex combinations of doubly stochastic matrices stay
    /// doubly stochastic (validated at 1e-8).
    #[test]
    fn doubly_stochastic_closure(n in 2usize..9, seed_a in 0u64..1000, seed_b in 0u64..1000,
                                 mix in 0.0f64..1.0) {
        let a = random_doubly_stochastic(n, 3, seed_a);
        let b = random_doubly_stochastic(n, 4, seed_b ^ 0x9e37);
        let product = a.entries().dot(b.entries());
        prop_assert!(MixingMatrix::validate(product, 1e-8).is_ok());
        let convex = a.entries() * (1.0 - mix) + b.entries() * mix;
        prop_assert!(MixingMatrix::validate(convex, 1e-8).is_ok());
    }

    /// The assignment solver always returns a bijection whose cost matches
    /// the explicit sum over the mapping.
    #[test]
    fn assignment_output_is_a_consistent_bijection(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = substream(seed, &[1]);
        let cost = Array2::from_shape_fn((n, n), |_| rng.random_range(-5.0..5.0));
        let result = solve_assignment(&cost).unwrap();
        let mut seen = vec![false; n];
        for i in 0..n {
            let j = result.permutation.image(i);
            prop_assert!(!seen[j]);
            seen[j] = true;
        }
        let recomputed: f64 = (0..n).map(|i| cost[(i, result.permutation.image(i))]).sum();
        prop_assert_eq!(result.cost, recomputed);
    }

    /// Permutation matrices are exactly doubly stochastic.
    #[test]
    fn permutation_matrices_validate_exactly(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = substream(seed, &[2]);
        let p = random_permutation(n, &mut rng);
        let m = to_matrix(&p);
        for i in 0..n {
            prop_assert_eq!(m.entries().row(i).sum(), 1.0);
            prop_assert_eq!(m.entries().column(i).sum(), 1.0);
        }
    }
}

/// Relabeling nodes leaves the mixing parameter unchanged.
#[test]
fn mixing_parameter_is_permutation_invariant() {
    for seed in 0..8u64 {
        let n = 7;
        let w = random_doubly_stochastic(n, 4, seed);
        let mut rng = substream(seed, &[3]);
        let sigma = random_permutation(n, &mut rng);
        let relabeled = w.permuted(sigma.mapping()).unwrap();
        let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
        let p_rel = mixing_parameter(&relabeled, MIXING_PARAM_TOL).unwrap();
        assert!(
            (p - p_rel).abs() <= 1e-8,
            "p = {p} vs relabeled {p_rel} (seed {seed})"
        );
    }
}

/// One averaging step contracts arbitrary matrices toward their row mean at
/// rate (1 - p).
#[test]
fn mixing_parameter_satisfies_the_contraction_inequality() {
    for seed in 0..10u64 {
        let n = 6;
        let w = random_doubly_stochastic(n, 3, seed ^ 0xA4);
        let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
        let mut rng = substream(seed, &[4]);
        for _ in 0..10 {
            let d = rng.random_range(1..5);
            let m = Array2::from_shape_fn((d, n), |_| rng.random_range(-3.0..3.0));
            assert!(mixing_contraction_holds(&w, &m, p, 1e-6));
        }
    }
}

/// The Prop-3 sandwich between the mixing parameter and the Frobenius
/// distance to uniform.
#[test]
fn frobenius_distance_sandwich() {
    for seed in 0..20u64 {
        let n = 5 + (seed % 4) as usize;
        let w = random_doubly_stochastic(n, 2 + (seed % 3) as usize, seed ^ 0x77);
        let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
        let dist = frob_dist_to_uniform(&w);
        assert!(1.0 - p <= dist + 1e-6, "lower bound failed (seed {seed})");
        assert!(
            dist <= (n as f64 - 1.0) * (1.0 - p) + 1e-6,
            "upper bound failed (seed {seed})"
        );
    }
}

/// Every Frank-Wolfe iterate is feasible, descends monotonically, and the
/// recorded duality gap dominates the recorded objective value. Iterates
/// are reconstructed from the trace (gamma and permutation per step repeat
/// the exact update arithmetic).
#[test]
fn frank_wolfe_iterates_are_feasible_and_monotone() {
    for seed in 0..6u64 {
        let n = 10;
        let pi = dirichlet_proportions(n, 4, 0.2, seed).unwrap();
        let obj = TopoObjective::new(pi, 0.05 * (seed + 1) as f64).unwrap();
        let (final_w, trace) = frank_wolfe(&obj, 12, 0.0).unwrap();
        let mut w: Array2<f64> = Array2::eye(n);
        let mut prev_g = obj.value_dense(&w);
        for rec in &trace.records {
            let keep = 1.0 - rec.gamma;
            w.mapv_inplace(|x| x * keep);
            for i in 0..n {
                w[(i, rec.permutation.image(i))] += rec.gamma;
            }
            assert!(
                MixingMatrix::validate(w.clone(), 1e-9).is_ok(),
                "iterate {} infeasible",
                rec.l
            );
            assert!(rec.g_value <= prev_g + 1e-12);
            assert!(rec.duality_gap >= rec.g_value - 1e-10);
            prev_g = rec.g_value;
        }
        assert_eq!(final_w.entries(), &w);
    }
}

/// The g bias term ties the label-skew bound to the learning objective:
/// scaling lambda only moves the variance part.
#[test]
fn g_value_decomposes_into_bias_plus_lambda_variance() {
    for seed in 0..5u64 {
        let n = 8;
        let pi = dirichlet_proportions(n, 3, 0.5, seed).unwrap();
        let w = random_doubly_stochastic(n, 3, seed ^ 0x1234);
        let bias = topo_opt::bias_term(w.entries(), &pi);
        let var = topo_opt::uniform_dist_term(w.entries());
        for lambda in [0.01, 0.3, 2.0] {
            let obj = TopoObjective::new(pi.clone(), lambda).unwrap();
            let g = topo_opt::g_value(&w, &obj).unwrap();
            assert!((g - (bias + lambda * var)).abs() <= 1e-12);
        }
    }
}

/// Relabeling nodes (matrix rows/columns and the objective list together)
/// leaves heterogeneity estimates unchanged up to summation order, because
/// sample streams are keyed by node identity rather than list position.
#[test]
fn heterogeneity_estimates_are_permutation_equivariant() {
    let n = 8;
    let spec = MeanEstimationSpec {
        n,
        m: 4.0,
        sigma_tilde_sq: 1.5,
    };
    let nodes = spec.nodes();
    let w = random_doubly_stochastic(n, 3, 99);
    let probes = scalar_probes(&[0.4, -1.2]);
    let h = estimate_h(&w, &nodes, &probes, 400, 5).unwrap();

    let mut rng = substream(17, &[8]);
    let sigma = random_permutation(n, &mut rng);
    let w_rel = w.permuted(sigma.mapping()).unwrap();
    let mut nodes_rel: Vec<_> = nodes.iter().cloned().map(Some).collect();
    let mut relabeled = vec![None; n];
    for (i, node) in nodes_rel.iter_mut().enumerate() {
        relabeled[sigma.image(i)] = node.take();
    }
    let relabeled: Vec<_> = relabeled.into_iter().map(Option::unwrap).collect();
    let h_rel = estimate_h(&w_rel, &relabeled, &probes, 400, 5).unwrap();
    assert!(
        (h.value - h_rel.value).abs() <= 1e-10,
        "H changed under relabeling: {} vs {}",
        h.value,
        h_rel.value
    );
}

/// Empirical-mean sanity for the mean-estimation oracle: 1e5 draws match
/// the closed-form expected gradient within five standard errors.
#[test]
fn mean_estimation_stoch_grad_is_unbiased() {
    let spec = match make_mean_estimation(2, 3.0, 2.0).unwrap() {
        ProblemSpec::MeanEstimation(s) => s,
        _ => unreachable!(),
    };
    let node = &spec.nodes()[0];
    use hetero_topo_core::problems::LocalObjective;
    let theta = ndarray::array![0.7];
    let draws = 100_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in 0..draws {
        let mut rng = substream(123, &[0, s as u64]);
        let z = node.sample(&mut rng).unwrap();
        let g = node.stoch_grad(theta.view(), &z)[0];
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / draws as f64;
    let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
    let stderr = (var / draws as f64).sqrt();
    let exact = node.expected_grad(theta.view())[0];
    assert!(
        (mean - exact).abs() <= 5.0 * stderr,
        "MC mean {mean} vs exact {exact} (stderr {stderr})"
    );
}

/// The Jacobi-based nuclear norm agrees with an independently implemented
/// eigensolver (power iteration with projection deflation, written here)
/// on random proportion matrices, and with the closed forms checked in the
/// unit tests. Both routes apply the same relative rank cutoff: M has rank
/// at most K, and raw near-zero eigenvalues would otherwise pollute the
/// singular-value sum through the square root.
#[test]
fn nuclear_norm_matches_deflated_power_iteration_oracle() {
    use hetero_topo_core::topo_opt::centered_gram_nuclear_norm;
    use ndarray::Array1;

    fn oracle(pi: &ndarray::ArrayView2<f64>) -> f64 {
        let n = pi.nrows();
        // M = (I - (1/n) 1 1^T) Pi Pi^T, by plain loops.
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                gram[i][j] = (0..pi.ncols()).map(|c| pi[(i, c)] * pi[(j, c)]).sum();
            }
        }
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            let col_mean: f64 = (0..n).map(|i| gram[i][j]).sum::<f64>() / n as f64;
            for i in 0..n {
                m[i][j] = gram[i][j] - col_mean;
            }
        }
        // G = M^T M.
        let mut g = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = (0..n).map(|r| m[r][i] * m[r][j]).sum();
            }
        }
        // Power iteration with projection deflation.
        let mut eigenpairs: Vec<(f64, Array1<f64>)> = Vec::new();
        let mut top = 0.0f64;
        for _ in 0..n {
            let mut v = Array1::from_shape_fn(n, |i| 1.0 + ((i as f64) * 0.7).sin());
            let project = |v: &mut Array1<f64>, pairs: &[(f64, Array1<f64>)]| {
                for (_, u) in pairs {
                    let c = v.dot(u);
                    v.scaled_add(-c, u);
                }
            };
            project(&mut v, &eigenpairs);
            let norm = v.dot(&v).sqrt();
            if norm < 1e-12 {
                break;
            }
            v /= norm;
            let mut lambda = 0.0;
            for _ in 0..200_000 {
                let mut w = g.dot(&v);
                project(&mut w, &eigenpairs);
                let rayleigh = v.dot(&w);
                let norm = w.dot(&w).sqrt();
                if norm < 1e-280 {
                    lambda = 0.0;
                    break;
                }
                v = w / norm;
                if (rayleigh - lambda).abs() <= 1e-14 * rayleigh.abs().max(1e-10) {
                    lambda = rayleigh;
                    break;
                }
                lambda = rayleigh;
            }
            if lambda <= 0.0 {
                break;
            }
            top = top.max(lambda);
            if lambda <= 1e-8 * top {
                break;
            }
            eigenpairs.push((lambda, v.clone()));
        }
        eigenpairs.iter().map(|(l, _)| l.sqrt()).sum()
    }

    for seed in 0..10u64 {
        let pi = dirichlet_proportions(8, 3, 1.0, 4000 + seed).unwrap();
        let implemented = centered_gram_nuclear_norm(&pi).unwrap();
        let expected = oracle(&pi.matrix().view());
        let rel = (implemented - expected).abs() / expected.max(1e-12);
        assert!(
            rel < 1e-8,
            "seed {seed}: nuclear norm {implemented} vs oracle {expected} (rel {rel:.2e})"
        );
    }
}

/// Soft diagnostic from the consensus recursion: with the theoretical
/// tau^2 = 4 sigma_tilde^2 of the alternating ring and a 1.5x slack, the
/// running-average consensus stays within the bound on a typical run. A
/// violation here is flagged, not fatal (single-run averages fluctuate
/// around the expectation the bound controls).
#[test]
fn consensus_running_average_soft_check() {
    use hetero_topo_core::dsgd::{consensus_bound_check, run_dsgd, SimConfig};
    use hetero_topo_core::MixingSchedule;

    let n = 16;
    let sigma_tilde_sq = 1.0;
    let spec = make_mean_estimation(n, 10.0, sigma_tilde_sq).unwrap();
    let w = hetero_topo_core::make_topology(hetero_topo_core::TopologyKind::AlternatingRing, n)
        .unwrap();
    let p = mixing_parameter(&w, MIXING_PARAM_TOL).unwrap();
    let eta = p / (8.0 * spec.smoothness());
    let cfg = SimConfig::constant(4000, eta, 5);
    let trace = run_dsgd(&spec, &MixingSchedule::fixed(w), &cfg).unwrap();
    let check = consensus_bound_check(&trace, n, 4.0 * sigma_tilde_sq, p, 1.5);
    assert!(check.bound.is_finite() && check.mean_consensus.is_finite());
    if !check.ok {
        eprintln!(
            "consensus soft check flagged: running average {} vs bound {}",
            check.mean_consensus, check.bound
        );
    }
}

/// The two-node, one-feature label-skew instance: a long full-batch GD run
/// at stepsize 1/(2L) recovers the optimum of the surrogate risk, and the
/// derived values persist through the problem-spec JSON.
#[test]
fn softmax_two_class_optimum_is_derived_and_stored() {
    use hetero_topo_core::problems::{centralized_gd_optimum, make_label_skew_with};
    use ndarray::Array2;

    let pi = hetero_topo_core::ClassProportions::new(Array2::eye(2)).unwrap();
    let spec = make_label_skew_with(2, 2, 1, pi, 4.0, 9, 400).unwrap();
    let (theta_star, f_star, steps) = centralized_gd_optimum(&spec, 1_000_000, 1e-9);
    assert!(steps < 1_000_000, "GD hit the step cap");
    let grad = spec.global_grad(theta_star.view());
    assert!(grad.dot(&grad).sqrt() <= 1e-9);
    let f_init = spec.global_value(spec.theta_init().view());
    assert!(f_star < f_init, "optimum {f_star} not below start {f_init}");

    // Stored optimum round-trips through the JSON envelope.
    let stored = spec.with_optimum(theta_star.clone(), f_star);
    let parsed = ProblemSpec::from_json(&stored.to_json().unwrap()).unwrap();
    assert_eq!(parsed.f_star(), Some(f_star));
    assert_eq!(parsed.theta_star().unwrap(), theta_star);
}
