//! Decentralized SGD simulation with synchronous semantics.
//!
//! Per iteration every node takes a local stochastic gradient step and then
//! averages with its neighbors through the scheduled mixing matrix, reading
//! only pre-averaging values. The centralized reference (C-PSGD) keeps one
//! parameter vector updated with the node-average of the per-node
//! stochastic gradients on the same sample streams; with the complete
//! uniform topology the two runs produce byte-identical traces because both
//! accumulate the same (1/n)-scaled terms in node order.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::scaled_mean;
use crate::mixing::{mixing_parameter, MixingSchedule, MIXING_PARAM_TOL};
use crate::problems::{LocalObjective, ProblemSpec};
use crate::rng::substream;

/// Stepsize policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stepsize {
    /// Fixed eta.
    Constant(f64),
    /// eta = min{ (r0/(b(T+1)))^(1/2), (r0/(e(T+1)))^(1/3), 1/d }.
    Tuned { r0: f64, b: f64, e: f64, d: f64 },
}

/// Simulation parameters.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Iteration count T.
    pub iterations: usize,
    pub stepsize: Stepsize,
    pub seed: u64,
    /// Record the trace every this many iterations (plus the final state).
    pub record_every: usize,
    /// Start point override; defaults to the problem's canonical start.
    pub theta_init: Option<Vec<f64>>,
    /// f* override for gap reporting when the problem has no stored value.
    pub f_star_override: Option<f64>,
}

impl SimConfig {
    pub fn constant(iterations: usize, eta: f64, seed: u64) -> Self {
        Self {
            iterations,
            stepsize: Stepsize::Constant(eta),
            seed,
            record_every: 10,
            theta_init: None,
            f_star_override: None,
        }
    }
}

/// One recorded simulation point.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    /// f(theta_bar) - f*.
    pub f_bar_gap: f64,
    /// || Theta - Theta_bar ||_F^2.
    pub consensus_sq: f64,
    pub mean_iterate: Vec<f64>,
    /// Wall clock since run start; excluded from serialized comparisons.
    pub wall_clock_ns: u128,
}

/// Simulation output: recorded points plus run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    pub eta: f64,
    /// Node count of the simulated system.
    pub n: usize,
    /// Set when eta exceeds the p/(8L) threshold of the schedule's first
    /// matrix (surfaced, not enforced).
    pub stepsize_warning: Option<String>,
    pub final_states: Vec<Vec<f64>>,
}

impl SimTrace {
    /// CSV with columns t, f_bar_gap, consensus_sq, then the mean-iterate
    /// components. Wall-clock time is deliberately omitted so that reruns
    /// and equivalent runs serialize identically.
    pub fn to_csv(&self) -> String {
        let dim = self
            .records
            .first()
            .map_or(0, |r| r.mean_iterate.len());
        let mut out = String::from("t,f_bar_gap,consensus_sq");
        for c in 0..dim {
            out.push_str(&format!(",theta_{c}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{}", r.t, r.f_bar_gap, r.consensus_sq));
            for v in &r.mean_iterate {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// First recorded t at which the running average of the recorded gaps
    /// drops to `epsilon`.
    pub fn iterations_to_epsilon(&self, epsilon: f64) -> Option<usize> {
        self.first_below(epsilon, |r| r.f_bar_gap)
    }

    /// Like [`iterations_to_epsilon`](Self::iterations_to_epsilon) but on
    /// the node-average gap f_bar_gap + consensus_sq / n. For quadratic
    /// objectives this equals (1/n) sum_i (f(theta_i) - f*) exactly: the
    /// per-node optimality gap, which unlike f(theta_bar) is sensitive to
    /// the topology when gradients are linear in theta.
    pub fn iterations_to_epsilon_node_avg(&self, epsilon: f64) -> Option<usize> {
        let n = self.n as f64;
        self.first_below(epsilon, |r| r.f_bar_gap + r.consensus_sq / n)
    }

    fn first_below(&self, epsilon: f64, gap: impl Fn(&TraceRecord) -> f64) -> Option<usize> {
        let mut sum = 0.0;
        for (idx, r) in self.records.iter().enumerate() {
            sum += gap(r);
            if sum / (idx + 1) as f64 <= epsilon {
                return Some(r.t);
            }
        }
        None
    }

    /// Mean of the recorded consensus values.
    pub fn mean_consensus(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.consensus_sq).sum::<f64>() / self.records.len() as f64
    }
}

/// eta = min{ (r0/(b(T+1)))^(1/2), (r0/(e(T+1)))^(1/3), 1/d }, skipping the
/// b and e terms when they vanish.
pub fn tuned_stepsize(r0: f64, b: f64, e: f64, d: f64, iterations: usize) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::NonPositiveD { d });
    }
    if r0 < 0.0 || b < 0.0 || e < 0.0 {
        return Err(Error::InvalidArgument(
            "stepsize tuning parameters must be nonnegative".into(),
        ));
    }
    let horizon = (iterations + 1) as f64;
    let mut eta = 1.0 / d;
    if b > 0.0 {
        eta = eta.min((r0 / (b * horizon)).sqrt());
    }
    if e > 0.0 {
        eta = eta.min((r0 / (e * horizon)).cbrt());
    }
    Ok(eta)
}

/// Iterations sufficient for average-gap accuracy epsilon:
/// ceil(36 sigma_bar^2 r0 / (n eps^2) + 89 sqrt(L) tau_bar r0 / (p eps^(3/2))
///      + 24 L r0 / (p eps)).
pub fn iteration_budget(
    epsilon: f64,
    r0: f64,
    sigma_bar_sq: f64,
    tau_bar_sq: f64,
    smoothness: f64,
    p: f64,
    n: usize,
) -> Result<u64> {
    if p <= 0.0 || p > 1.0 {
        return Err(Error::ZeroP { p });
    }
    if epsilon <= 0.0 || smoothness <= 0.0 || n == 0 {
        return Err(Error::InvalidArgument(
            "iteration budget needs positive epsilon, L and n".into(),
        ));
    }
    if r0 < 0.0 || sigma_bar_sq < 0.0 || tau_bar_sq < 0.0 {
        return Err(Error::InvalidArgument(
            "iteration budget needs nonnegative r0, sigma and tau".into(),
        ));
    }
    let tau = tau_bar_sq.sqrt();
    let total = 36.0 * sigma_bar_sq * r0 / (n as f64 * epsilon * epsilon)
        + 89.0 * smoothness.sqrt() * tau * r0 / (p * epsilon.powf(1.5))
        + 24.0 * smoothness * r0 / (p * epsilon);
    Ok(total.ceil() as u64)
}

fn resolve_eta(config: &SimConfig) -> Result<f64> {
    match config.stepsize {
        Stepsize::Constant(eta) => {
            if eta < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "stepsize must be nonnegative, got {eta}"
                )));
            }
            Ok(eta)
        }
        Stepsize::Tuned { r0, b, e, d } => tuned_stepsize(r0, b, e, d, config.iterations),
    }
}

fn resolve_start(spec: &ProblemSpec, config: &SimConfig) -> Result<Array1<f64>> {
    match &config.theta_init {
        Some(v) => {
            if v.len() != spec.dimension() {
                return Err(Error::DimensionMismatch {
                    context: "theta_init vs problem dimension",
                    expected: spec.dimension(),
                    found: v.len(),
                });
            }
            Ok(Array1::from_vec(v.clone()))
        }
        None => Ok(spec.theta_init()),
    }
}

fn resolve_f_star(spec: &ProblemSpec, config: &SimConfig) -> Result<f64> {
    config.f_star_override.or_else(|| spec.f_star()).ok_or_else(|| {
        Error::InvalidArgument(
            "f* is unknown for this problem; set f_star_override (e.g. from a \
             long centralized GD run)"
            .into(),
        )
    })
}

fn record_state<'a>(
    t: usize,
    states: impl Fn(usize) -> ArrayView1<'a, f64>,
    n: usize,
    dim: usize,
    spec: &ProblemSpec,
    f_star: f64,
    started: Instant,
) -> TraceRecord {
    let mean = scaled_mean((0..n).map(&states), n, dim);
    let mut consensus = 0.0;
    for i in 0..n {
        let diff = &states(i) - &mean;
        consensus += diff.dot(&diff);
    }
    let gap = spec.global_value(mean.view()) - f_star;
    TraceRecord {
        t,
        f_bar_gap: gap,
        consensus_sq: consensus,
        mean_iterate: mean.to_vec(),
        wall_clock_ns: started.elapsed().as_nanos(),
    }
}

/// Run D-SGD over the schedule, streaming records into `on_record`.
pub fn run_dsgd_with(
    spec: &ProblemSpec,
    schedule: &MixingSchedule,
    config: &SimConfig,
    mut on_record: impl FnMut(&TraceRecord),
) -> Result<SimTrace> {
    if schedule.n() != spec.n() {
        return Err(Error::DimensionMismatch {
            context: "schedule vs problem node count",
            expected: spec.n(),
            found: schedule.n(),
        });
    }
    match spec {
        ProblemSpec::MeanEstimation(s) => {
            run_dsgd_nodes(spec, &s.nodes(), schedule, config, &mut on_record)
        }
        ProblemSpec::SoftmaxLabelSkew(s) => {
            run_dsgd_nodes(spec, &s.nodes(), schedule, config, &mut on_record)
        }
    }
}

/// Run D-SGD, collecting the full trace in memory.
pub fn run_dsgd(
    spec: &ProblemSpec,
    schedule: &MixingSchedule,
    config: &SimConfig,
) -> Result<SimTrace> {
    run_dsgd_with(spec, schedule, config, |_| {})
}

fn stepsize_warning(spec: &ProblemSpec, schedule: &MixingSchedule, eta: f64) -> Option<String> {
    let p = mixing_parameter(schedule.first(), MIXING_PARAM_TOL).ok()?;
    let eta_max = p / (8.0 * spec.smoothness());
    (eta > eta_max).then(|| {
        format!(
            "eta = {eta} exceeds the p/(8L) threshold {eta_max} \
             (p = {p}, L = {})",
            spec.smoothness()
        )
    })
}

fn run_dsgd_nodes<O: LocalObjective>(
    spec: &ProblemSpec,
    nodes: &[O],
    schedule: &MixingSchedule,
    config: &SimConfig,
    on_record: &mut impl FnMut(&TraceRecord),
) -> Result<SimTrace> {
    let n = nodes.len();
    let dim = spec.dimension();
    let eta = resolve_eta(config)?;
    let f_star = resolve_f_star(spec, config)?;
    let theta0 = resolve_start(spec, config)?;
    let record_every = config.record_every.max(1);
    let started = Instant::now();

    let mut states: Vec<Array1<f64>> = vec![theta0; n];
    let mut half_steps: Vec<Array1<f64>> = vec![Array1::zeros(dim); n];
    let mut records = Vec::new();

    for t in 0..config.iterations {
        if t % record_every == 0 {
            let rec = record_state(t, |i| states[i].view(), n, dim, spec, f_star, started);
            on_record(&rec);
            records.push(rec);
        }
        // Local stochastic gradient steps on per-(node, iteration) streams.
        for (i, node) in nodes.iter().enumerate() {
            let mut rng = substream(config.seed, &[node.stream_id(), t as u64]);
            let z = node.sample(&mut rng)?;
            let grad = node.stoch_grad(states[i].view(), &z);
            half_steps[i].assign(&states[i]);
            half_steps[i].scaled_add(-eta, &grad);
        }
        // Neighborhood averaging on the pre-averaging values, accumulated
        // in node order.
        let w = schedule.matrix_at(t).entries();
        for i in 0..n {
            let mut acc = Array1::zeros(dim);
            for (j, h) in half_steps.iter().enumerate() {
                acc.scaled_add(w[(i, j)], h);
            }
            states[i] = acc;
        }
    }
    let rec = record_state(
        config.iterations,
        |i| states[i].view(),
        n,
        dim,
        spec,
        f_star,
        started,
    );
    on_record(&rec);
    records.push(rec);

    Ok(SimTrace {
        records,
        eta,
        n,
        stepsize_warning: stepsize_warning(spec, schedule, eta),
        final_states: states.iter().map(|s| s.to_vec()).collect(),
    })
}

/// Centralized (parallel) SGD reference: a single parameter vector updated
/// with the node-order average of the per-node half-steps, on the same
/// sample streams as [`run_dsgd`].
pub fn run_centralized(spec: &ProblemSpec, config: &SimConfig) -> Result<SimTrace> {
    match spec {
        ProblemSpec::MeanEstimation(s) => run_centralized_nodes(spec, &s.nodes(), config),
        ProblemSpec::SoftmaxLabelSkew(s) => run_centralized_nodes(spec, &s.nodes(), config),
    }
}

fn run_centralized_nodes<O: LocalObjective>(
    spec: &ProblemSpec,
    nodes: &[O],
    config: &SimConfig,
) -> Result<SimTrace> {
    let n = nodes.len();
    let dim = spec.dimension();
    let eta = resolve_eta(config)?;
    let f_star = resolve_f_star(spec, config)?;
    let mut theta = resolve_start(spec, config)?;
    let record_every = config.record_every.max(1);
    let started = Instant::now();
    let inv_n = 1.0 / n as f64;

    let mut half_steps: Vec<Array1<f64>> = vec![Array1::zeros(dim); n];
    let mut records = Vec::new();

    for t in 0..config.iterations {
        if t % record_every == 0 {
            // All virtual nodes hold theta; loop over views so the record
            // matches the decentralized code path bit for bit.
            let rec = record_state(t, |_| theta.view(), n, dim, spec, f_star, started);
            records.push(rec);
        }
        for (j, node) in nodes.iter().enumerate() {
            let mut rng = substream(config.seed, &[node.stream_id(), t as u64]);
            let z = node.sample(&mut rng)?;
            let grad = node.stoch_grad(theta.view(), &z);
            half_steps[j].assign(&theta);
            half_steps[j].scaled_add(-eta, &grad);
        }
        let mut acc = Array1::zeros(dim);
        for h in &half_steps {
            acc.scaled_add(inv_n, h);
        }
        theta = acc;
    }
    let rec = record_state(
        config.iterations,
        |_| theta.view(),
        n,
        dim,
        spec,
        f_star,
        started,
    );
    records.push(rec);

    Ok(SimTrace {
        records,
        eta,
        n,
        stepsize_warning: None,
        final_states: vec![theta.to_vec()],
    })
}

/// Mean iterates from a short D-SGD run, used as probe points on the
/// optimization trajectory.
pub fn trajectory_probes(
    spec: &ProblemSpec,
    schedule: &MixingSchedule,
    config: &SimConfig,
    count: usize,
) -> Result<Vec<Array1<f64>>> {
    let trace = run_dsgd(spec, schedule, config)?;
    let records = &trace.records;
    if records.is_empty() || count == 0 {
        return Ok(Vec::new());
    }
    let step = (records.len().max(count) / count).max(1);
    Ok(records
        .iter()
        .skip(1)
        .step_by(step)
        .take(count)
        .map(|r| Array1::from_vec(r.mean_iterate.clone()))
        .collect())
}

/// Soft diagnostic for the consensus recursion: under eta <= p/(8L) the
/// running average of the consensus distance is bounded by
/// 24 eta^2 n tau^2 / p^2 (up to Monte Carlo slack on tau^2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConsensusCheck {
    pub mean_consensus: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn consensus_bound_check(
    trace: &SimTrace,
    n: usize,
    tau_bar_sq: f64,
    p: f64,
    slack_factor: f64,
) -> ConsensusCheck {
    let mean = trace.mean_consensus();
    let bound = 24.0 * trace.eta * trace.eta * n as f64 * tau_bar_sq / (p * p) * slack_factor;
    ConsensusCheck {
        mean_consensus: mean,
        bound,
        ok: mean <= bound,
    }
}
