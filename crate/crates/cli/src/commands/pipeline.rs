//! `pipeline`: learn topologies, measure them, simulate D-SGD across seeds,
//! and emit a comparison table plus a manifest tying every cell to its
//! artifact.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use hetero_topo_core::dsgd::{self, SimConfig, SimTrace, Stepsize};
use hetero_topo_core::heterogeneity::{self, HeterogeneityReport};
use hetero_topo_core::matrix_io;
use hetero_topo_core::mixing::{MixingSchedule, MIXING_PARAM_TOL};
use hetero_topo_core::topo_opt::{frank_wolfe, g_value, TopoObjective};
use hetero_topo_core::{degrees, mixing_parameter, MixingMatrix, ProblemSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{preset, ExperimentConfig, ProblemSource, TopologySource};
use crate::manifest::RunManifest;
use crate::table::{Cell, ComparisonTable, TableRow};

#[derive(Parser, Debug)]
pub struct Args {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset: example1 | label_skew.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed override (flags win over the config file).
    #[arg(long)]
    pub seed: Option<u64>,
}

struct TopologyArtifacts {
    name: String,
    matrix: MixingMatrix,
    csv_path: PathBuf,
    fw_trace_path: Option<PathBuf>,
}

#[derive(Serialize)]
struct RowArtifacts {
    topology_csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    fw_trace: Option<String>,
    measure_json: String,
    traces: Vec<String>,
}

/// Worker-thread cap from HETERO_TOPO_THREADS (0 or unset = automatic).
fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("HETERO_TOPO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")
}

fn median_u64(values: &mut [u64]) -> u64 {
    values.sort_unstable();
    values[values.len() / 2]
}

fn median_f64(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

pub fn run(args: Args) -> Result<()> {
    let config = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let mut config = ExperimentConfig::load(path)?;
            if let Some(dir) = &args.out_dir {
                config.output_dir = dir.clone();
            }
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            config
        }
        (None, Some(name)) => {
            let dir = args
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("pipeline_{name}")));
            preset(name, &dir, args.seed.unwrap_or(42))?
        }
        _ => bail!("exactly one of --config or --preset is required"),
    };
    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut manifest = RunManifest::new("pipeline", serde_json::to_value(&config)?);

    // Problem: materialize, then store the echo as an artifact.
    let problem_text = config.problem_json()?;
    let spec = ProblemSpec::from_json(&problem_text).context("parsing problem spec")?;
    let problem_path = out_dir.join("problem.json");
    std::fs::write(&problem_path, spec.to_json()?)?;
    manifest.record_output(&problem_path);
    if let ProblemSource::Path { path } = &config.problem {
        manifest.record_input(path)?;
    }
    if let ProblemSpec::SoftmaxLabelSkew(s) = &spec {
        let pi_path = out_dir.join("proportions.csv");
        matrix_io::write_csv_path(s.proportions.matrix(), &pi_path)?;
        manifest.record_output(&pi_path);
    }
    let (f_star, f_star_derived) = super::simulate::resolve_f_star(&spec, 5000);
    manifest.f_star_used = Some(f_star);
    if f_star_derived {
        manifest.config["f_star_derived"] = serde_json::Value::Bool(true);
    }

    // Topologies.
    let mut artifacts: Vec<TopologyArtifacts> = Vec::new();
    for entry in &config.topologies {
        let csv_path = out_dir.join(format!("topo_{}.csv", entry.name));
        let mut fw_trace_path = None;
        let matrix = match &entry.source {
            TopologySource::Generator { generator } => {
                super::generator_by_name(generator, spec.n())?
            }
            TopologySource::File { path } => {
                manifest.record_input(path)?;
                super::load_topology(path)?
            }
            TopologySource::Learned {
                iters,
                lambda,
                gap_tol,
            } => {
                let ProblemSpec::SoftmaxLabelSkew(s) = &spec else {
                    bail!(
                        "topology {}: learned topologies need a label-skew problem \
                         with class proportions",
                        entry.name
                    );
                };
                let objective = TopoObjective::new(s.proportions.clone(), *lambda)?;
                let (matrix, trace) = frank_wolfe(&objective, *iters, *gap_tol)?;
                let path = out_dir.join(format!("fw_trace_{}.jsonl", entry.name));
                let file = std::fs::File::create(&path)?;
                super::learn_topo::write_trace_jsonl(&trace, std::io::BufWriter::new(file))?;
                manifest.record_output(&path);
                fw_trace_path = Some(path);
                matrix
            }
        };
        if matrix.n() != spec.n() {
            bail!(
                "topology {} has {} nodes but the problem has {}",
                entry.name,
                matrix.n(),
                spec.n()
            );
        }
        matrix_io::write_csv_path(matrix.entries(), &csv_path)?;
        manifest.record_output(&csv_path);
        artifacts.push(TopologyArtifacts {
            name: entry.name.clone(),
            matrix,
            csv_path,
            fw_trace_path,
        });
    }

    // Measurement per topology.
    let mut reports: Vec<(HeterogeneityReport, PathBuf)> = Vec::new();
    for topo in &artifacts {
        let probes = super::build_probes(&spec, &topo.matrix, config.measure.probes, config.seed)?;
        let sigma_override = config.measure.sigma_max_sq.or_else(|| spec.sigma_sq_exact());
        let report = match &spec {
            ProblemSpec::MeanEstimation(s) => heterogeneity::measure(
                &topo.matrix,
                &s.nodes(),
                &probes,
                config.measure.samples,
                config.seed,
                sigma_override,
            )?,
            ProblemSpec::SoftmaxLabelSkew(s) => heterogeneity::measure(
                &topo.matrix,
                &s.nodes(),
                &probes,
                config.measure.samples,
                config.seed,
                sigma_override,
            )?,
        };
        let path = out_dir.join(format!("measure_{}.json", topo.name));
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        manifest.record_output(&path);
        reports.push((report, path));
    }

    // Simulations: all (topology, seed) pairs, optionally in parallel.
    // Results land in a pre-indexed vector, so thread count cannot change
    // any output.
    let pairs: Vec<(usize, u64)> = (0..artifacts.len())
        .flat_map(|t| config.simulation.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let pool = thread_pool()?;
    let sim_results: Vec<Result<SimTrace>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(topo_idx, seed)| {
                let topo = &artifacts[topo_idx];
                let schedule = MixingSchedule::fixed(topo.matrix.clone());
                let stepsize = match config.simulation.eta {
                    Some(eta) => Stepsize::Constant(eta),
                    None => {
                        let p = mixing_parameter(&topo.matrix, MIXING_PARAM_TOL)?;
                        if p <= 0.0 {
                            // Never-mixing topology: fall back to the
                            // smoothness-limited stepsize of the complete
                            // graph so the run is still well defined.
                            Stepsize::Constant(1.0 / (8.0 * spec.smoothness()))
                        } else {
                            Stepsize::Constant(p / (8.0 * spec.smoothness()))
                        }
                    }
                };
                let sim = SimConfig {
                    iterations: config.simulation.iterations,
                    stepsize,
                    seed,
                    record_every: config.simulation.record_every,
                    theta_init: None,
                    f_star_override: Some(f_star),
                };
                dsgd::run_dsgd(&spec, &schedule, &sim).map_err(anyhow::Error::from)
            })
            .collect()
    });

    let mut traces: Vec<Vec<SimTrace>> = vec![Vec::new(); artifacts.len()];
    for (&(topo_idx, _), result) in pairs.iter().zip(sim_results) {
        traces[topo_idx].push(result?);
    }
    let mut trace_paths: Vec<Vec<PathBuf>> = vec![Vec::new(); artifacts.len()];
    for (topo_idx, topo) in artifacts.iter().enumerate() {
        for (trace, &seed) in traces[topo_idx].iter().zip(&config.simulation.seeds) {
            let path = out_dir.join(format!("trace_{}_s{}.csv", topo.name, seed));
            std::fs::write(&path, trace.to_csv())?;
            manifest.record_output(&path);
            trace_paths[topo_idx].push(path);
        }
    }

    // Comparison table. iterations-to-epsilon uses the node-average gap
    // (f_bar_gap + consensus/n): the per-node optimality gap, which stays
    // topology-sensitive even for quadratic problems.
    let mut table = ComparisonTable::default();
    let mut row_artifacts: BTreeMap<String, RowArtifacts> = BTreeMap::new();
    for (topo_idx, topo) in artifacts.iter().enumerate() {
        let report = &reports[topo_idx].0;
        let deg = degrees(&topo.matrix);
        let g_cell = match &spec {
            ProblemSpec::SoftmaxLabelSkew(s) => {
                let objective = TopoObjective::new(s.proportions.clone(), config.measure.g_lambda)?;
                Cell::Value(g_value(&topo.matrix, &objective)?)
            }
            ProblemSpec::MeanEstimation(_) => Cell::Na,
        };
        let mut hits: Vec<u64> = traces[topo_idx]
            .iter()
            .map(|t| {
                t.iterations_to_epsilon_node_avg(config.simulation.epsilon)
                    .map_or(u64::MAX, |v| v as u64)
            })
            .collect();
        let hit_median = median_u64(&mut hits);
        let mut finals: Vec<f64> = traces[topo_idx]
            .iter()
            .map(|t| t.records.last().map_or(f64::NAN, |r| r.f_bar_gap))
            .collect();
        table.rows.push(TableRow {
            topology: topo.name.clone(),
            p: Cell::Value(report.mixing_parameter),
            d_in_max: Cell::Int(deg.d_in_max as u64),
            d_out_max: Cell::Int(deg.d_out_max as u64),
            g_value: g_cell,
            h_hat: Cell::Value(report.h_hat.value),
            zeta_bar_sq_hat: Cell::Value(report.zeta_bar_sq_hat),
            iterations_to_epsilon: Cell::opt_int((hit_median != u64::MAX).then_some(hit_median)),
            final_gap: Cell::Value(median_f64(&mut finals)),
        });
        row_artifacts.insert(
            topo.name.clone(),
            RowArtifacts {
                topology_csv: topo.csv_path.display().to_string(),
                fw_trace: topo
                    .fw_trace_path
                    .as_ref()
                    .map(|p| p.display().to_string()),
                measure_json: reports[topo_idx].1.display().to_string(),
                traces: trace_paths[topo_idx]
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect(),
            },
        );
    }

    let table_csv_path = out_dir.join("table.csv");
    let table_txt_path = out_dir.join("table.txt");
    std::fs::write(&table_csv_path, table.to_csv())?;
    std::fs::write(&table_txt_path, table.to_text())?;
    manifest.record_output(&table_csv_path);
    manifest.record_output(&table_txt_path);
    manifest.config["rows"] = serde_json::to_value(&row_artifacts)?;
    manifest.write(&out_dir.join("manifest.json"))?;

    print!("{}", table.to_text());
    Ok(())
}
