//! `simulate`: run D-SGD (or the centralized reference) and stream the
//! trace to disk.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use hetero_topo_core::dsgd::{self, SimConfig, Stepsize};
use hetero_topo_core::heterogeneity::{estimate_h, estimate_sigma_sq};
use hetero_topo_core::mixing::{MixingSchedule, MIXING_PARAM_TOL};
use hetero_topo_core::problems::centralized_gd_optimum;
use hetero_topo_core::{mixing_parameter, ProblemSpec};

use crate::manifest::RunManifest;

#[derive(Parser, Debug)]
pub struct Args {
    /// Problem spec JSON.
    #[arg(long)]
    pub problem: PathBuf,
    /// Topology CSV (fixed matrix).
    #[arg(long, conflicts_with = "schedule_dir")]
    pub topology: Option<PathBuf>,
    /// Directory of topology CSVs applied cyclically in filename order.
    #[arg(long)]
    pub schedule_dir: Option<PathBuf>,
    /// Iteration count T.
    #[arg(long = "t", default_value_t = 1000)]
    pub iterations: usize,
    /// Constant stepsize.
    #[arg(long, conflicts_with = "tuned")]
    pub eta: Option<f64>,
    /// Use the tuned stepsize min{ (r0/(b(T+1)))^1/2, (r0/(e(T+1)))^1/3, 1/d }
    /// with b = sigma_bar^2/n, e = 36 L tau_bar^2/p^2, d = 8L/p.
    #[arg(long, default_value_t = false)]
    pub tuned: bool,
    /// Initial squared distance r0 for --tuned; defaults to
    /// ||theta0 - theta*||^2 when the optimum is known.
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Run the centralized (C-PSGD) reference instead of D-SGD.
    #[arg(long, default_value_t = false)]
    pub centralized: bool,
    /// f* override for gap reporting (skips the derivation run).
    #[arg(long)]
    pub f_star: Option<f64>,
    /// Gradient-descent step cap when deriving f* for problems without a
    /// stored optimum.
    #[arg(long, default_value_t = 5000)]
    pub f_star_gd_steps: usize,
    /// Output directory for trace.csv and manifest.json.
    #[arg(long, default_value = "sim_out")]
    pub out_dir: PathBuf,
}

fn load_schedule(args: &Args) -> Result<(MixingSchedule, Vec<PathBuf>)> {
    if let Some(path) = &args.topology {
        let matrix = super::load_topology(path)?;
        return Ok((MixingSchedule::fixed(matrix), vec![path.clone()]));
    }
    let Some(dir) = &args.schedule_dir else {
        bail!("either --topology or --schedule-dir is required");
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading schedule dir {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("schedule dir {} contains no .csv files", dir.display());
    }
    let matrices = paths
        .iter()
        .map(|p| super::load_topology(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((MixingSchedule::cyclic(matrices)?, paths))
}

/// Resolve f*, deriving it by capped full-batch gradient descent when the
/// problem does not carry a stored optimum.
pub fn resolve_f_star(spec: &ProblemSpec, gd_steps: usize) -> (f64, bool) {
    match spec.f_star() {
        Some(f) => (f, false),
        None => {
            let (_, f, _) = centralized_gd_optimum(spec, gd_steps, 1e-9);
            (f, true)
        }
    }
}

fn tuned_parameters(
    spec: &ProblemSpec,
    schedule: &MixingSchedule,
    args: &Args,
) -> Result<Stepsize> {
    let p = mixing_parameter(schedule.first(), MIXING_PARAM_TOL)?;
    if p <= 0.0 {
        bail!("tuned stepsize needs p > 0 (topology never mixes)");
    }
    let smoothness = spec.smoothness();
    let theta0 = spec.theta_init();
    let r0 = match (args.r0, spec.theta_star()) {
        (Some(r0), _) => r0,
        (None, Some(star)) => {
            let diff = &theta0 - &star;
            diff.dot(&diff)
        }
        (None, None) => bail!("--tuned needs --r0 when the optimum is unknown"),
    };
    let probes = vec![theta0];
    let estimation_samples = 2000;
    let (sigma_bar_sq, tau_bar_sq) = match spec {
        ProblemSpec::MeanEstimation(s) => {
            let nodes = s.nodes();
            let h = estimate_h(schedule.first(), &nodes, &probes, estimation_samples, args.seed)?;
            (s.sigma_sq(), h.value)
        }
        ProblemSpec::SoftmaxLabelSkew(s) => {
            let nodes = s.nodes();
            let sigma = estimate_sigma_sq(&nodes, &probes, estimation_samples, args.seed)?;
            let h = estimate_h(schedule.first(), &nodes, &probes, estimation_samples, args.seed)?;
            (sigma.sigma_bar_sq, h.value)
        }
    };
    let n = spec.n() as f64;
    Ok(Stepsize::Tuned {
        r0,
        b: sigma_bar_sq / n,
        e: 36.0 * smoothness * tau_bar_sq / (p * p),
        d: 8.0 * smoothness / p,
    })
}

pub fn run(args: Args) -> Result<()> {
    let spec = super::load_problem(&args.problem)?;
    let (schedule, schedule_paths) = load_schedule(&args)?;
    let (f_star, f_star_derived) = match args.f_star {
        Some(f) => (f, false),
        None => resolve_f_star(&spec, args.f_star_gd_steps),
    };

    let stepsize = if args.tuned {
        tuned_parameters(&spec, &schedule, &args)?
    } else {
        match args.eta {
            Some(eta) => Stepsize::Constant(eta),
            None => bail!("either --eta or --tuned is required"),
        }
    };

    let config = SimConfig {
        iterations: args.iterations,
        stepsize,
        seed: args.seed,
        record_every: args.record_every,
        theta_init: None,
        f_star_override: Some(f_star),
    };

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let trace_path = args.out_dir.join("trace.csv");
    let manifest_path = args.out_dir.join("manifest.json");

    let trace = if args.centralized {
        let trace = dsgd::run_centralized(&spec, &config)?;
        std::fs::write(&trace_path, trace.to_csv())?;
        trace
    } else {
        // Stream records as they are produced.
        let file = std::fs::File::create(&trace_path)
            .with_context(|| format!("creating {}", trace_path.display()))?;
        let mut writer = std::io::BufWriter::new(file);
        let dim = spec.dimension();
        write!(writer, "t,f_bar_gap,consensus_sq")?;
        for c in 0..dim {
            write!(writer, ",theta_{c}")?;
        }
        writeln!(writer)?;
        let mut sink_err = None;
        let trace = dsgd::run_dsgd_with(&spec, &schedule, &config, |record| {
            if sink_err.is_some() {
                return;
            }
            let mut line = format!(
                "{},{},{}",
                record.t, record.f_bar_gap, record.consensus_sq
            );
            for v in &record.mean_iterate {
                line.push_str(&format!(",{v}"));
            }
            if let Err(e) = writeln!(writer, "{line}") {
                sink_err = Some(e);
            }
        })?;
        if let Some(e) = sink_err {
            return Err(e).context("streaming trace");
        }
        writer.flush()?;
        trace
    };

    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::json!({
            "problem": args.problem.display().to_string(),
            "iterations": args.iterations,
            "stepsize": trace.eta,
            "tuned": args.tuned,
            "seed": args.seed,
            "record_every": args.record_every,
            "centralized": args.centralized,
            "f_star_derived": f_star_derived,
        }),
    );
    manifest.record_input(&args.problem)?;
    for path in &schedule_paths {
        manifest.record_input(path)?;
    }
    manifest.record_output(&trace_path);
    manifest.eta_used = Some(trace.eta);
    manifest.f_star_used = Some(f_star);
    manifest.stepsize_warning = trace.stepsize_warning.clone();
    manifest.write(&manifest_path)?;

    if let Some(warning) = &trace.stepsize_warning {
        eprintln!("warning: {warning}");
    }
    let last = trace.records.last().expect("at least the final record");
    println!(
        "T = {}, eta = {:.6e}: final gap = {:.6e}, consensus = {:.6e} -> {}",
        args.iterations,
        trace.eta,
        last.f_bar_gap,
        last.consensus_sq,
        trace_path.display()
    );
    Ok(())
}
