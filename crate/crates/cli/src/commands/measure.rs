//! `measure`: heterogeneity quantities of a topology on a problem.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use hetero_topo_core::heterogeneity::{self, HeterogeneityReport, LabelSkewBound};
use hetero_topo_core::ProblemSpec;
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Parser, Debug)]
pub struct Args {
    /// Topology CSV.
    #[arg(long)]
    pub topology: PathBuf,
    /// Problem spec JSON.
    #[arg(long)]
    pub problem: PathBuf,
    /// Monte Carlo samples per (node, probe).
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Number of trajectory probe points (theta0 and theta*, when known,
    /// are always included).
    #[arg(long, default_value_t = 8)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class-level heterogeneity constant B for the label-skew bound;
    /// probe-estimated when omitted.
    #[arg(long)]
    pub b: Option<f64>,
    /// Override for sigma_max^2 in the bias-variance bound.
    #[arg(long)]
    pub sigma_max_sq: Option<f64>,
    /// Output JSON path.
    #[arg(long, default_value = "measure.json")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MeasureDocument {
    topology: String,
    problem: String,
    heterogeneity: HeterogeneityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_skew: Option<LabelSkewBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b_estimated: Option<f64>,
}

pub fn run(args: Args) -> Result<()> {
    let topology = super::load_topology(&args.topology)?;
    let spec = super::load_problem(&args.problem)?;
    let probes = super::build_probes(&spec, &topology, args.probes, args.seed)?;
    let sigma_override = args.sigma_max_sq.or_else(|| spec.sigma_sq_exact());

    let (report, label_skew, b_estimated) = match &spec {
        ProblemSpec::MeanEstimation(s) => {
            let report = heterogeneity::measure(
                &topology,
                &s.nodes(),
                &probes,
                args.samples,
                args.seed,
                sigma_override,
            )?;
            (report, None, None)
        }
        ProblemSpec::SoftmaxLabelSkew(s) => {
            let report = heterogeneity::measure(
                &topology,
                &s.nodes(),
                &probes,
                args.samples,
                args.seed,
                sigma_override,
            )?;
            let (b, b_estimated) = match args.b {
                Some(b) => (b, None),
                None => {
                    let est = s.estimate_class_gradient_bound(&probes);
                    (est, Some(est))
                }
            };
            let sigma_max_sq = sigma_override.unwrap_or(report.sigma_max_sq_hat);
            let bound = (b > 0.0)
                .then(|| {
                    heterogeneity::label_skew_bound(&topology, &s.proportions, b, sigma_max_sq)
                })
                .transpose()?;
            (report, bound, b_estimated)
        }
    };

    let document = MeasureDocument {
        topology: args.topology.display().to_string(),
        problem: args.problem.display().to_string(),
        heterogeneity: report,
        label_skew,
        b_estimated,
    };
    let text = serde_json::to_string_pretty(&document)?;
    std::fs::write(&args.out, &text)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let mut manifest = RunManifest::new(
        "measure",
        serde_json::json!({
            "topology": args.topology.display().to_string(),
            "problem": args.problem.display().to_string(),
            "samples": args.samples,
            "probes": args.probes,
            "seed": args.seed,
            "b": args.b,
            "sigma_max_sq": args.sigma_max_sq,
        }),
    );
    manifest.record_input(&args.topology)?;
    manifest.record_input(&args.problem)?;
    manifest.record_output(&args.out);
    manifest.write(&args.out.with_extension("manifest.json"))?;

    println!("{text}");
    Ok(())
}
