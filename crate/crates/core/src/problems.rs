//! Per-node stochastic objective oracles and data generators.
//!
//! Two problem families: scalar mean estimation with two alternating
//! Gaussian clusters, and softmax classification under label skew where
//! all nodes share the class-conditional feature distribution P(X|Y) and
//! differ only in their label marginals.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::scaled_mean;
use crate::rng::substream;

const DIRICHLET_STREAM: u64 = 0x4449_5249;
const CLASS_SAMPLE_STREAM: u64 = 0x434c_4153;

/// Default per-class sample count backing the surrogate expectations of the
/// label-skew objective.
pub const DEFAULT_SURROGATE_SAMPLES: usize = 4000;

/// Row-stochastic n-by-K matrix of per-node label proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProportions {
    pi: Array2<f64>,
}

impl ClassProportions {
    /// Validate entries in [0, 1] and unit row sums (tolerance 1e-9).
    pub fn new(pi: Array2<f64>) -> Result<Self> {
        if pi.nrows() == 0 || pi.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "class proportions need at least one row and one column".into(),
            ));
        }
        for ((i, j), &x) in pi.indexed_iter() {
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                return Err(Error::InvalidArgument(format!(
                    "proportion ({i}, {j}) = {x} outside [0, 1]"
                )));
            }
        }
        for (i, row) in pi.axis_iter(Axis(0)).enumerate() {
            let residual = row.sum() - 1.0;
            if residual.abs() > 1e-9 {
                return Err(Error::RowSumViolation { row: i, residual });
            }
        }
        Ok(Self { pi })
    }

    pub fn n(&self) -> usize {
        self.pi.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.pi.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.pi
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.pi.row(i)
    }

    /// Global class proportions: per-column mean, accumulated in node order.
    pub fn column_means(&self) -> Array1<f64> {
        scaled_mean(self.pi.rows(), self.n(), self.num_classes())
    }

    /// Homogeneous proportions: every node holds `weights`.
    pub fn homogeneous(n: usize, weights: &[f64]) -> Result<Self> {
        let k = weights.len();
        let pi = Array2::from_shape_fn((n, k), |(_, j)| weights[j]);
        Self::new(pi)
    }

    /// One-hot rows assigning node i to class i * K / n (equal shares when
    /// K divides n).
    pub fn one_class_per_node(n: usize, k: usize) -> Result<Self> {
        if n % k != 0 {
            return Err(Error::InvalidArgument(format!(
                "one-class-per-node needs K ({k}) to divide n ({n})"
            )));
        }
        let per = n / k;
        let mut pi = Array2::zeros((n, k));
        for i in 0..n {
            pi[(i, i / per)] = 1.0;
        }
        Self::new(pi)
    }
}

/// Each node's row drawn from Dirichlet(alpha * 1_K) on its own substream;
/// rows renormalized to unit sum.
pub fn dirichlet_proportions(n: usize, k: usize, alpha: f64, seed: u64) -> Result<ClassProportions> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentration must be positive, got {alpha}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("gamma parameter: {e}")))?;
    let mut pi = Array2::zeros((n, k));
    for i in 0..n {
        let mut rng = substream(seed, &[DIRICHLET_STREAM, i as u64]);
        loop {
            let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let sum: f64 = draws.iter().sum();
            if sum > 1e-300 {
                for (j, g) in draws.iter().enumerate() {
                    pi[(i, j)] = g / sum;
                }
                break;
            }
            // All-zero underflow draw; take the next block of the stream.
        }
    }
    ClassProportions::new(pi)
}

/// A per-node stochastic gradient oracle: sampling, pointwise loss and
/// gradient, and expected counterparts (exact in closed form where
/// available, otherwise a deterministic fixed-sample surrogate).
pub trait LocalObjective {
    type Point: Clone;

    fn dimension(&self) -> usize;

    /// Stable identity of this node's sample stream. Substreams are keyed by
    /// this id rather than by list position, so relabeling nodes carries
    /// their draws along.
    fn stream_id(&self) -> u64;

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Self::Point>;

    fn loss(&self, theta: ArrayView1<f64>, z: &Self::Point) -> f64;

    fn stoch_grad(&self, theta: ArrayView1<f64>, z: &Self::Point) -> Array1<f64>;

    fn expected_grad(&self, theta: ArrayView1<f64>) -> Array1<f64>;

    fn expected_value(&self, theta: ArrayView1<f64>) -> f64;

    /// Whether `expected_grad`/`expected_value` are exact closed forms
    /// rather than fixed-sample surrogates.
    fn expected_exact(&self) -> bool;
}

// ---------------------------------------------------------------------------
// Mean estimation (two alternating Gaussian clusters)
// ---------------------------------------------------------------------------

/// F(theta, Z) = (theta - Z)^2 with Z ~ N(mean, sigma_tilde^2).
#[derive(Debug, Clone)]
pub struct MeanEstimationNode {
    mean: f64,
    sigma_tilde: f64,
    sigma_tilde_sq: f64,
    stream_id: u64,
}

impl MeanEstimationNode {
    pub fn mean(&self) -> f64 {
        self.mean
    }
}

impl LocalObjective for MeanEstimationNode {
    type Point = f64;

    fn dimension(&self) -> usize {
        1
    }

    fn stream_id(&self) -> u64 {
        self.stream_id
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let xi: f64 = rng.sample(StandardNormal);
        Ok(self.mean + self.sigma_tilde * xi)
    }

    fn loss(&self, theta: ArrayView1<f64>, z: &f64) -> f64 {
        let d = theta[0] - z;
        d * d
    }

    fn stoch_grad(&self, theta: ArrayView1<f64>, z: &f64) -> Array1<f64> {
        Array1::from_elem(1, 2.0 * (theta[0] - z))
    }

    fn expected_grad(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_elem(1, 2.0 * (theta[0] - self.mean))
    }

    fn expected_value(&self, theta: ArrayView1<f64>) -> f64 {
        let d = theta[0] - self.mean;
        d * d + self.sigma_tilde_sq
    }

    fn expected_exact(&self) -> bool {
        true
    }
}

/// Mean estimation over an even number of nodes: node i draws from
/// N(+m, sigma_tilde^2) when i is even (0-based) and N(-m, sigma_tilde^2)
/// when i is odd, so consecutive indices alternate between the clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimationSpec {
    pub n: usize,
    pub m: f64,
    pub sigma_tilde_sq: f64,
}

impl MeanEstimationSpec {
    pub fn nodes(&self) -> Vec<MeanEstimationNode> {
        (0..self.n)
            .map(|i| MeanEstimationNode {
                mean: if i % 2 == 0 { self.m } else { -self.m },
                sigma_tilde: self.sigma_tilde_sq.sqrt(),
                sigma_tilde_sq: self.sigma_tilde_sq,
                stream_id: i as u64,
            })
            .collect()
    }

    /// Per-node gradient-noise variance, exact: 4 sigma_tilde^2.
    pub fn sigma_sq(&self) -> f64 {
        4.0 * self.sigma_tilde_sq
    }
}

/// Build the two-cluster mean estimation problem.
pub fn make_mean_estimation(n: usize, m: f64, sigma_tilde_sq: f64) -> Result<ProblemSpec> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddN { n });
    }
    if sigma_tilde_sq < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "variance must be nonnegative, got {sigma_tilde_sq}"
        )));
    }
    Ok(ProblemSpec::MeanEstimation(MeanEstimationSpec {
        n,
        m,
        sigma_tilde_sq,
    }))
}

// ---------------------------------------------------------------------------
// Softmax classification under label skew
// ---------------------------------------------------------------------------

/// A labeled data point (X, Y).
#[derive(Debug, Clone)]
pub struct LabeledPoint {
    pub x: Array1<f64>,
    pub y: usize,
}

/// State shared across all nodes of a label-skew problem: class centers on
/// a scaled simplex and the fixed per-class sample sets backing surrogate
/// expectations. Sharing the sets makes nodes with equal proportions have
/// bitwise-identical surrogate objectives.
#[derive(Debug)]
pub struct SoftmaxShared {
    k: usize,
    q: usize,
    centers: Vec<Array1<f64>>,
    class_samples: Vec<Vec<Array1<f64>>>,
    smoothness: f64,
}

/// Parameter layout: theta = [w_0 (q entries), b_0, w_1, b_1, ...],
/// d = K (q + 1).
fn logits(theta: ArrayView1<f64>, x: ArrayView1<f64>, k: usize, q: usize) -> Vec<f64> {
    let mut s = Vec::with_capacity(k);
    for c in 0..k {
        let base = c * (q + 1);
        let mut acc = theta[base + q]; // bias
        for j in 0..q {
            acc += theta[base + j] * x[j];
        }
        s.push(acc);
    }
    s
}

fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn ce_loss(theta: ArrayView1<f64>, x: ArrayView1<f64>, y: usize, k: usize, q: usize) -> f64 {
    let s = logits(theta, x, k, q);
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - s[y]
}

/// acc += weight * grad F(theta; x, y).
fn ce_grad_accum(
    theta: ArrayView1<f64>,
    x: ArrayView1<f64>,
    y: usize,
    k: usize,
    q: usize,
    weight: f64,
    acc: &mut Array1<f64>,
) {
    let probs = softmax_probs(&logits(theta, x, k, q));
    for c in 0..k {
        let coeff = weight * (probs[c] - if c == y { 1.0 } else { 0.0 });
        let base = c * (q + 1);
        for j in 0..q {
            acc[base + j] += coeff * x[j];
        }
        acc[base + q] += coeff;
    }
}

impl SoftmaxShared {
    fn build(
        k: usize,
        q: usize,
        class_sep: f64,
        seed: u64,
        surrogate_samples: usize,
    ) -> Result<Self> {
        let centers = simplex_centers(k, q, class_sep)?;
        let mut class_samples = Vec::with_capacity(k);
        let mut max_norm_sq: f64 = 0.0;
        for (c, center) in centers.iter().enumerate() {
            let mut rng = substream(seed, &[CLASS_SAMPLE_STREAM, c as u64]);
            let mut samples = Vec::with_capacity(surrogate_samples);
            for _ in 0..surrogate_samples {
                let mut x = center.clone();
                for j in 0..q {
                    let xi: f64 = rng.sample(StandardNormal);
                    x[j] += xi;
                }
                max_norm_sq = max_norm_sq.max(x.dot(&x));
                samples.push(x);
            }
            class_samples.push(samples);
        }
        Ok(Self {
            k,
            q,
            centers,
            class_samples,
            // Hessian of the cross-entropy at (x, 1) is bounded by
            // ||(x, 1)||^2 / 2; take the max over the stored sample sets.
            smoothness: 0.5 * (max_norm_sq + 1.0),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.q
    }

    pub fn centers(&self) -> &[Array1<f64>] {
        &self.centers
    }

    /// Surrogate E_X[grad F(theta; X, c) | Y = c]: average over the fixed
    /// class-c sample set, accumulated in sample order.
    pub fn class_avg_grad(&self, c: usize, theta: ArrayView1<f64>) -> Array1<f64> {
        let d = self.k * (self.q + 1);
        let s = self.class_samples[c].len();
        let w = 1.0 / s as f64;
        let mut acc = Array1::zeros(d);
        for x in &self.class_samples[c] {
            ce_grad_accum(theta, x.view(), c, self.k, self.q, w, &mut acc);
        }
        acc
    }

    /// Surrogate E_X[F(theta; X, c) | Y = c].
    pub fn class_avg_value(&self, c: usize, theta: ArrayView1<f64>) -> f64 {
        let s = self.class_samples[c].len();
        let w = 1.0 / s as f64;
        let mut acc = 0.0;
        for x in &self.class_samples[c] {
            acc += w * ce_loss(theta, x.view(), c, self.k, self.q);
        }
        acc
    }
}

/// K points in R^q with equal pairwise distance `sep`, obtained by mapping
/// the centered standard-simplex vertices through a Helmert basis of the
/// hyperplane orthogonal to 1. Needs q >= K - 1.
fn simplex_centers(k: usize, q: usize, sep: f64) -> Result<Vec<Array1<f64>>> {
    if q + 1 < k {
        return Err(Error::DimensionMismatch {
            context: "feature dimension must be at least K - 1",
            expected: k - 1,
            found: q,
        });
    }
    let scale = sep / std::f64::consts::SQRT_2;
    let mut centers = Vec::with_capacity(k);
    for c in 0..k {
        let mut x = Array1::zeros(q);
        // Coordinate j of vertex c in the Helmert basis h_1..h_{K-1}:
        // h_j has j entries 1/sqrt(j(j+1)) followed by -j/sqrt(j(j+1)).
        for j in 1..k {
            let denom = (j as f64 * (j as f64 + 1.0)).sqrt();
            let coord = if c < j {
                1.0 / denom
            } else if c == j {
                -(j as f64) / denom
            } else {
                0.0
            };
            x[j - 1] = scale * coord;
        }
        centers.push(x);
    }
    Ok(centers)
}

/// One node of the label-skew problem: shared loss/conditionals, private
/// label marginal.
#[derive(Debug, Clone)]
pub struct SoftmaxNode {
    pi_row: Array1<f64>,
    cumulative: Vec<f64>,
    shared: Arc<SoftmaxShared>,
    stream_id: u64,
}

impl LocalObjective for SoftmaxNode {
    type Point = LabeledPoint;

    fn dimension(&self) -> usize {
        self.shared.k * (self.shared.q + 1)
    }

    fn stream_id(&self) -> u64 {
        self.stream_id
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<LabeledPoint> {
        let u: f64 = rng.random();
        let y = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.shared.k - 1);
        let mut x = self.shared.centers[y].clone();
        for j in 0..self.shared.q {
            let xi: f64 = rng.sample(StandardNormal);
            x[j] += xi;
        }
        Ok(LabeledPoint { x, y })
    }

    fn loss(&self, theta: ArrayView1<f64>, z: &LabeledPoint) -> f64 {
        ce_loss(theta, z.x.view(), z.y, self.shared.k, self.shared.q)
    }

    fn stoch_grad(&self, theta: ArrayView1<f64>, z: &LabeledPoint) -> Array1<f64> {
        let mut g = Array1::zeros(self.dimension());
        ce_grad_accum(
            theta,
            z.x.view(),
            z.y,
            self.shared.k,
            self.shared.q,
            1.0,
            &mut g,
        );
        g
    }

    fn expected_grad(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let mut acc = Array1::zeros(self.dimension());
        for c in 0..self.shared.k {
            let w = self.pi_row[c];
            if w == 0.0 {
                continue;
            }
            acc.scaled_add(w, &self.shared.class_avg_grad(c, theta));
        }
        acc
    }

    fn expected_value(&self, theta: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.shared.k {
            let w = self.pi_row[c];
            if w == 0.0 {
                continue;
            }
            acc += w * self.shared.class_avg_value(c, theta);
        }
        acc
    }

    fn expected_exact(&self) -> bool {
        false
    }
}

/// Softmax label-skew problem derived from class proportions.
#[derive(Debug, Clone)]
pub struct LabelSkewSpec {
    pub n: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_sep: f64,
    pub seed: u64,
    pub surrogate_samples: usize,
    pub proportions: ClassProportions,
    /// Stored long-GD optimum of the surrogate risk, when derived.
    pub f_star: Option<f64>,
    pub theta_star: Option<Array1<f64>>,
    shared: Arc<SoftmaxShared>,
}

impl LabelSkewSpec {
    pub fn nodes(&self) -> Vec<SoftmaxNode> {
        (0..self.n)
            .map(|i| {
                let pi_row = self.proportions.row(i).to_owned();
                let mut cumulative = Vec::with_capacity(self.num_classes);
                let mut acc = 0.0;
                for &p in pi_row.iter() {
                    acc += p;
                    cumulative.push(acc);
                }
                SoftmaxNode {
                    pi_row,
                    cumulative,
                    shared: Arc::clone(&self.shared),
                    stream_id: i as u64,
                }
            })
            .collect()
    }

    pub fn shared(&self) -> &SoftmaxShared {
        &self.shared
    }

    /// Global value with the per-class surrogate averages computed once
    /// and mixed per node; bitwise identical to averaging the nodes'
    /// `expected_value` results (every node combines the same class
    /// averages with the same skip-zero loop).
    pub fn global_value(&self, theta: ArrayView1<f64>) -> f64 {
        let class_values: Vec<f64> = (0..self.num_classes)
            .map(|c| self.shared.class_avg_value(c, theta))
            .collect();
        let w = 1.0 / self.n as f64;
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut node = 0.0;
            for (c, &v) in class_values.iter().enumerate() {
                let p = self.proportions.matrix()[(i, c)];
                if p == 0.0 {
                    continue;
                }
                node += p * v;
            }
            acc += w * node;
        }
        acc
    }

    /// Global gradient, sharing the per-class averages across nodes.
    pub fn global_grad(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let d = self.num_classes * (self.feature_dim + 1);
        let class_grads: Vec<Array1<f64>> = (0..self.num_classes)
            .map(|c| self.shared.class_avg_grad(c, theta))
            .collect();
        let w = 1.0 / self.n as f64;
        let mut acc = Array1::zeros(d);
        for i in 0..self.n {
            let mut node = Array1::zeros(d);
            for (c, g) in class_grads.iter().enumerate() {
                let p = self.proportions.matrix()[(i, c)];
                if p == 0.0 {
                    continue;
                }
                node.scaled_add(p, g);
            }
            acc.scaled_add(w, &node);
        }
        acc
    }

    /// Largest squared distance between a per-class conditional expected
    /// gradient and the across-class average, maximized over the probe
    /// points: a probe-based estimate of the class-level heterogeneity
    /// constant B.
    pub fn estimate_class_gradient_bound(&self, probes: &[Array1<f64>]) -> f64 {
        let k = self.num_classes;
        let d = k * (self.feature_dim + 1);
        let mut best = 0.0f64;
        for theta in probes {
            let per_class: Vec<Array1<f64>> = (0..k)
                .map(|c| self.shared.class_avg_grad(c, theta.view()))
                .collect();
            let mean = scaled_mean(per_class.iter().map(|g| g.view()), k, d);
            for g in &per_class {
                let diff = g - &mean;
                best = best.max(diff.dot(&diff));
            }
        }
        best
    }
}

/// Build a label-skew classification problem with an explicit surrogate
/// sample budget.
pub fn make_label_skew_with(
    n: usize,
    num_classes: usize,
    feature_dim: usize,
    proportions: ClassProportions,
    class_sep: f64,
    seed: u64,
    surrogate_samples: usize,
) -> Result<ProblemSpec> {
    if proportions.n() != n {
        return Err(Error::DimensionMismatch {
            context: "proportion rows must match node count",
            expected: n,
            found: proportions.n(),
        });
    }
    if proportions.num_classes() != num_classes {
        return Err(Error::DimensionMismatch {
            context: "proportion columns must match class count",
            expected: num_classes,
            found: proportions.num_classes(),
        });
    }
    if class_sep <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "class separation must be positive, got {class_sep}"
        )));
    }
    if surrogate_samples == 0 {
        return Err(Error::InvalidArgument(
            "surrogate sample budget must be at least 1".into(),
        ));
    }
    let shared = SoftmaxShared::build(num_classes, feature_dim, class_sep, seed, surrogate_samples)?;
    Ok(ProblemSpec::SoftmaxLabelSkew(LabelSkewSpec {
        n,
        num_classes,
        feature_dim,
        class_sep,
        seed,
        surrogate_samples,
        proportions,
        f_star: None,
        theta_star: None,
        shared: Arc::new(shared),
    }))
}

/// Build a label-skew problem with the default surrogate budget.
pub fn make_label_skew(
    n: usize,
    num_classes: usize,
    feature_dim: usize,
    proportions: ClassProportions,
    class_sep: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    make_label_skew_with(
        n,
        num_classes,
        feature_dim,
        proportions,
        class_sep,
        seed,
        DEFAULT_SURROGATE_SAMPLES,
    )
}

// ---------------------------------------------------------------------------
// Problem spec
// ---------------------------------------------------------------------------

/// A fully specified experiment problem.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    MeanEstimation(MeanEstimationSpec),
    SoftmaxLabelSkew(LabelSkewSpec),
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        match self {
            Self::MeanEstimation(s) => s.n,
            Self::SoftmaxLabelSkew(s) => s.n,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::MeanEstimation(_) => 1,
            Self::SoftmaxLabelSkew(s) => s.num_classes * (s.feature_dim + 1),
        }
    }

    /// Smoothness constant L of the per-node objectives (exact 2 for mean
    /// estimation; surrogate-risk bound for softmax).
    pub fn smoothness(&self) -> f64 {
        match self {
            Self::MeanEstimation(_) => 2.0,
            Self::SoftmaxLabelSkew(s) => s.shared.smoothness,
        }
    }

    /// Deterministic start point: 1 for scalar mean estimation (away from
    /// the optimum at 0), the zero vector for softmax.
    pub fn theta_init(&self) -> Array1<f64> {
        match self {
            Self::MeanEstimation(_) => Array1::from_elem(1, 1.0),
            Self::SoftmaxLabelSkew(s) => Array1::zeros(s.num_classes * (s.feature_dim + 1)),
        }
    }

    pub fn theta_star(&self) -> Option<Array1<f64>> {
        match self {
            Self::MeanEstimation(_) => Some(Array1::zeros(1)),
            Self::SoftmaxLabelSkew(s) => s.theta_star.clone(),
        }
    }

    pub fn f_star(&self) -> Option<f64> {
        match self {
            Self::MeanEstimation(s) => Some(s.m * s.m + s.sigma_tilde_sq),
            Self::SoftmaxLabelSkew(s) => s.f_star,
        }
    }

    /// Exact per-node gradient-noise variance when available.
    pub fn sigma_sq_exact(&self) -> Option<f64> {
        match self {
            Self::MeanEstimation(s) => Some(s.sigma_sq()),
            Self::SoftmaxLabelSkew(_) => None,
        }
    }

    /// Global objective f(theta) = (1/n) sum_i f_i(theta), accumulated in
    /// node order.
    pub fn global_value(&self, theta: ArrayView1<f64>) -> f64 {
        match self {
            Self::MeanEstimation(s) => global_value_of(&s.nodes(), theta),
            Self::SoftmaxLabelSkew(s) => s.global_value(theta),
        }
    }

    /// Global gradient (1/n) sum_i grad f_i(theta).
    pub fn global_grad(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Self::MeanEstimation(s) => global_grad_of(&s.nodes(), theta),
            Self::SoftmaxLabelSkew(s) => s.global_grad(theta),
        }
    }

    /// Attach a derived optimum (long-GD output) to a softmax spec.
    pub fn with_optimum(mut self, theta_star: Array1<f64>, f_star: f64) -> Self {
        if let Self::SoftmaxLabelSkew(s) = &mut self {
            s.theta_star = Some(theta_star);
            s.f_star = Some(f_star);
        }
        self
    }
}

/// (1/n)-weighted node-order accumulation of expected values.
pub fn global_value_of<O: LocalObjective>(nodes: &[O], theta: ArrayView1<f64>) -> f64 {
    let w = 1.0 / nodes.len() as f64;
    let mut acc = 0.0;
    for node in nodes {
        acc += w * node.expected_value(theta);
    }
    acc
}

/// (1/n)-weighted node-order accumulation of expected gradients.
pub fn global_grad_of<O: LocalObjective>(nodes: &[O], theta: ArrayView1<f64>) -> Array1<f64> {
    let w = 1.0 / nodes.len() as f64;
    let mut acc = Array1::zeros(nodes[0].dimension());
    for node in nodes {
        acc.scaled_add(w, &node.expected_grad(theta));
    }
    acc
}

/// Full-batch gradient descent on the global (surrogate) risk at stepsize
/// 1/(2L), run until the gradient norm drops below `grad_tol` or
/// `max_steps` is hit. Returns (theta, f(theta), steps taken).
pub fn centralized_gd_optimum(
    spec: &ProblemSpec,
    max_steps: usize,
    grad_tol: f64,
) -> (Array1<f64>, f64, usize) {
    let eta = 1.0 / (2.0 * spec.smoothness());
    let mut theta = spec.theta_init();
    let mut steps = 0;
    for _ in 0..max_steps {
        let g = spec.global_grad(theta.view());
        if g.dot(&g).sqrt() <= grad_tol {
            break;
        }
        theta.scaled_add(-eta, &g);
        steps += 1;
    }
    let value = spec.global_value(theta.view());
    (theta, value, steps)
}

// scaled_mean over owned arrays; helper so global_grad_of can stay lazy.
impl ProblemSpec {
    /// Serialize to the on-disk JSON envelope.
    pub fn to_json(&self) -> Result<String> {
        let envelope = match self {
            Self::MeanEstimation(s) => ProblemJson {
                kind: "mean_estimation".into(),
                n: s.n,
                seed: 0,
                params: serde_json::to_value(MeanEstimationParams {
                    m: s.m,
                    sigma_tilde_sq: s.sigma_tilde_sq,
                })?,
            },
            Self::SoftmaxLabelSkew(s) => ProblemJson {
                kind: "softmax_label_skew".into(),
                n: s.n,
                seed: s.seed,
                params: serde_json::to_value(LabelSkewParams {
                    k: s.num_classes,
                    q: s.feature_dim,
                    class_sep: s.class_sep,
                    surrogate_samples: Some(s.surrogate_samples),
                    proportions: Some(
                        s.proportions
                            .matrix()
                            .rows()
                            .into_iter()
                            .map(|r| r.to_vec())
                            .collect(),
                    ),
                    dirichlet_alpha: None,
                    f_star: s.f_star,
                    theta_star: s.theta_star.as_ref().map(|t| t.to_vec()),
                })?,
            },
        };
        Ok(serde_json::to_string_pretty(&envelope)?)
    }

    /// Parse the on-disk JSON envelope.
    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: ProblemJson = serde_json::from_str(text)?;
        match envelope.kind.as_str() {
            "mean_estimation" => {
                let p: MeanEstimationParams = serde_json::from_value(envelope.params)?;
                make_mean_estimation(envelope.n, p.m, p.sigma_tilde_sq)
            }
            "softmax_label_skew" => {
                let p: LabelSkewParams = serde_json::from_value(envelope.params)?;
                let proportions = match (&p.proportions, p.dirichlet_alpha) {
                    (Some(rows), _) => {
                        let k = p.k;
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        let pi = Array2::from_shape_vec((envelope.n, k), flat).map_err(|e| {
                            Error::InvalidArgument(format!("proportions shape: {e}"))
                        })?;
                        ClassProportions::new(pi)?
                    }
                    (None, Some(alpha)) => {
                        dirichlet_proportions(envelope.n, p.k, alpha, envelope.seed)?
                    }
                    (None, None) => {
                        return Err(Error::InvalidArgument(
                            "label-skew params need either proportions or dirichlet_alpha".into(),
                        ))
                    }
                };
                let spec = make_label_skew_with(
                    envelope.n,
                    p.k,
                    p.q,
                    proportions,
                    p.class_sep,
                    envelope.seed,
                    p.surrogate_samples.unwrap_or(DEFAULT_SURROGATE_SAMPLES),
                )?;
                Ok(match (p.theta_star, p.f_star) {
                    (Some(t), Some(f)) => spec.with_optimum(Array1::from_vec(t), f),
                    _ => spec,
                })
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown problem kind {other:?}"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    kind: String,
    n: usize,
    #[serde(default)]
    seed: u64,
    params: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct MeanEstimationParams {
    m: f64,
    sigma_tilde_sq: f64,
}

#[derive(Serialize, Deserialize)]
struct LabelSkewParams {
    k: usize,
    q: usize,
    class_sep: f64,
    #[serde(default)]
    surrogate_samples: Option<usize>,
    #[serde(default)]
    proportions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    dirichlet_alpha: Option<f64>,
    #[serde(default)]
    f_star: Option<f64>,
    #[serde(default)]
    theta_star: Option<Vec<f64>>,
}
