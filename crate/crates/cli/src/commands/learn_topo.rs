//! `learn-topo`: Frank-Wolfe topology learning from a proportions CSV.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use hetero_topo_core::matrix_io;
use hetero_topo_core::topo_opt::{frank_wolfe, FwTrace, TopoObjective};
use hetero_topo_core::ClassProportions;

use crate::manifest::RunManifest;

#[derive(Parser, Debug)]
pub struct Args {
    /// Class proportions CSV (n rows, K columns, no header).
    #[arg(long)]
    pub proportions: PathBuf,
    /// Bias-variance trade-off weight.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Iteration budget L (also the per-node communication budget).
    #[arg(long = "iters", default_value_t = 10)]
    pub iterations: usize,
    /// Duality-gap stopping tolerance; 0 disables the early stop.
    #[arg(long, default_value_t = 0.0)]
    pub gap_tol: f64,
    /// Experiment seed, echoed into the manifest (the algorithm itself is
    /// deterministic).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the learned matrix CSV.
    #[arg(long, default_value = "learned_topology.csv")]
    pub out_matrix: PathBuf,
    /// Output path for the per-iteration trace (JSON lines).
    #[arg(long, default_value = "fw_trace.jsonl")]
    pub out_trace: PathBuf,
}

/// Write one JSON object per Frank-Wolfe iteration.
pub fn write_trace_jsonl(trace: &FwTrace, mut writer: impl Write) -> Result<()> {
    for record in &trace.records {
        serde_json::to_writer(&mut writer, record)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let pi = matrix_io::read_csv_path(&args.proportions)
        .with_context(|| format!("reading proportions {}", args.proportions.display()))?;
    let proportions = ClassProportions::new(pi)?;
    let objective = TopoObjective::new(proportions, args.lambda)?;
    let (matrix, trace) = frank_wolfe(&objective, args.iterations, args.gap_tol)?;

    matrix_io::write_csv_path(matrix.entries(), &args.out_matrix)?;
    let file = std::fs::File::create(&args.out_trace)
        .with_context(|| format!("creating {}", args.out_trace.display()))?;
    write_trace_jsonl(&trace, std::io::BufWriter::new(file))?;

    let mut manifest = RunManifest::new(
        "learn-topo",
        serde_json::json!({
            "proportions": args.proportions.display().to_string(),
            "lambda": args.lambda,
            "iters": args.iterations,
            "gap_tol": args.gap_tol,
            "seed": args.seed,
        }),
    );
    manifest.record_input(&args.proportions)?;
    manifest.record_output(&args.out_matrix);
    manifest.record_output(&args.out_trace);
    manifest.write(&args.out_matrix.with_extension("manifest.json"))?;

    if let Some(last) = trace.records.last() {
        println!(
            "learned {}x{} topology in {} iterations: g = {:.6e}, gap = {:.6e}, \
             d_in_max = {}, d_out_max = {}",
            matrix.n(),
            matrix.n(),
            last.l,
            last.g_value,
            last.duality_gap,
            last.d_in_max,
            last.d_out_max
        );
    }
    Ok(())
}
