//! Pipeline experiment configuration: JSON schema, validation, presets.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// A validation failure pointing at the offending config field.
#[derive(Debug)]
pub struct ConfigFieldError {
    pub path: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigFieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "config {}: field `{}`: {}",
            self.path, self.field, self.message
        )
    }
}

impl std::error::Error for ConfigFieldError {}

fn field_err(path: &Path, field: &str, message: impl Into<String>) -> anyhow::Error {
    ConfigFieldError {
        path: path.display().to_string(),
        field: field.to_string(),
        message: message.into(),
    }
    .into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory experiment seed; no wall-clock seeding anywhere.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub problem: ProblemSource,
    pub topologies: Vec<TopologyEntry>,
    pub simulation: SimulationParams,
    #[serde(default)]
    pub measure: MeasureParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path { path: PathBuf },
    Inline { inline: serde_json::Value },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyEntry {
    pub name: String,
    pub source: TopologySource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySource {
    /// One of the built-in generators.
    Generator { generator: String },
    /// A matrix CSV on disk (custom weights).
    File { path: PathBuf },
    /// Frank-Wolfe learned from the problem's class proportions.
    Learned {
        iters: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        gap_tol: f64,
    },
}

fn default_lambda() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationParams {
    pub iterations: usize,
    /// Constant stepsize; when absent, the tuned stepsize is
    /// computed per topology.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub seeds: Vec<u64>,
}

fn default_record_every() -> usize {
    10
}

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureParams {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Number of trajectory probe points (theta0 and theta*, when known,
    /// are always included).
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Class-level heterogeneity constant B; probe-estimated when absent.
    #[serde(default)]
    pub b: Option<f64>,
    /// Override for sigma_max^2; exact or Monte Carlo value otherwise.
    #[serde(default)]
    pub sigma_max_sq: Option<f64>,
    /// Lambda at which the comparison table reports g(W).
    #[serde(default = "default_lambda")]
    pub g_lambda: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            probes: default_probes(),
            b: None,
            sigma_max_sq: None,
            g_lambda: default_lambda(),
        }
    }
}

fn default_samples() -> usize {
    1000
}

fn default_probes() -> usize {
    8
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate(path)?;
        Ok(config)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        if self.topologies.is_empty() {
            bail!(field_err(path, "topologies", "at least one topology required"));
        }
        let mut names: Vec<&str> = self.topologies.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.topologies.len() {
            bail!(field_err(path, "topologies", "topology names must be unique"));
        }
        if self.simulation.seeds.is_empty() {
            bail!(field_err(path, "simulation.seeds", "at least one seed required"));
        }
        if self.simulation.iterations == 0 {
            bail!(field_err(path, "simulation.iterations", "must be positive"));
        }
        if let ProblemSource::Path { path: problem } = &self.problem {
            if !problem.exists() {
                bail!(field_err(
                    path,
                    "problem.path",
                    format!("{} does not exist", problem.display()),
                ));
            }
        }
        for topo in &self.topologies {
            if let TopologySource::File { path: file } = &topo.source {
                if !file.exists() {
                    bail!(field_err(
                        path,
                        &format!("topologies[{}].source.path", topo.name),
                        format!("{} does not exist", file.display()),
                    ));
                }
            }
            if let TopologySource::Learned { iters, lambda, gap_tol } = &topo.source {
                if *iters == 0 {
                    bail!(field_err(
                        path,
                        &format!("topologies[{}].source.iters", topo.name),
                        "must be at least 1",
                    ));
                }
                if *lambda <= 0.0 {
                    bail!(field_err(
                        path,
                        &format!("topologies[{}].source.lambda", topo.name),
                        "must be positive",
                    ));
                }
                if *gap_tol < 0.0 {
                    bail!(field_err(
                        path,
                        &format!("topologies[{}].source.gap_tol", topo.name),
                        "must be nonnegative",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn problem_json(&self) -> Result<String> {
        match &self.problem {
            ProblemSource::Path { path } => std::fs::read_to_string(path)
                .with_context(|| format!("reading problem {}", path.display())),
            ProblemSource::Inline { inline } => Ok(serde_json::to_string_pretty(inline)?),
        }
    }
}

/// Built-in preset configurations.
pub fn preset(name: &str, output_dir: &Path, seed: u64) -> Result<ExperimentConfig> {
    let config = match name {
        // Two-cluster mean estimation on matched-spectrum rings plus the
        // two extremes.
        "example1" => ExperimentConfig {
            seed,
            output_dir: output_dir.to_path_buf(),
            problem: ProblemSource::Inline {
                inline: serde_json::json!({
                    "kind": "mean_estimation",
                    "n": 16,
                    "seed": seed,
                    "params": {"m": 10.0, "sigma_tilde_sq": 1.0}
                }),
            },
            topologies: ["alternating_ring", "clustered_ring", "complete", "identity"]
                .iter()
                .map(|g| TopologyEntry {
                    name: g.to_string(),
                    source: TopologySource::Generator {
                        generator: g.to_string(),
                    },
                })
                .collect(),
            simulation: SimulationParams {
                iterations: 8000,
                eta: None,
                record_every: 10,
                epsilon: 1e-2,
                seeds: (0..5).collect(),
            },
            measure: MeasureParams {
                samples: 2000,
                probes: 4,
                ..MeasureParams::default()
            },
        },
        // Label skew with Dirichlet proportions and learned topologies at
        // increasing communication budgets.
        "label_skew" => ExperimentConfig {
            seed,
            output_dir: output_dir.to_path_buf(),
            problem: ProblemSource::Inline {
                inline: serde_json::json!({
                    "kind": "softmax_label_skew",
                    "n": 20,
                    "seed": seed,
                    "params": {
                        "k": 5, "q": 4, "class_sep": 4.0,
                        "dirichlet_alpha": 0.1,
                        "surrogate_samples": 1000
                    }
                }),
            },
            topologies: vec![
                TopologyEntry {
                    name: "complete".into(),
                    source: TopologySource::Generator {
                        generator: "complete".into(),
                    },
                },
                TopologyEntry {
                    name: "ring".into(),
                    source: TopologySource::Generator {
                        generator: "ring".into(),
                    },
                },
                TopologyEntry {
                    name: "learned_l2".into(),
                    source: TopologySource::Learned {
                        iters: 2,
                        lambda: 0.1,
                        gap_tol: 0.0,
                    },
                },
                TopologyEntry {
                    name: "learned_l4".into(),
                    source: TopologySource::Learned {
                        iters: 4,
                        lambda: 0.1,
                        gap_tol: 0.0,
                    },
                },
                TopologyEntry {
                    name: "learned_l8".into(),
                    source: TopologySource::Learned {
                        iters: 8,
                        lambda: 0.1,
                        gap_tol: 0.0,
                    },
                },
            ],
            simulation: SimulationParams {
                iterations: 1500,
                eta: Some(0.05),
                record_every: 10,
                epsilon: 1e-1,
                seeds: (0..3).collect(),
            },
            measure: MeasureParams {
                samples: 500,
                probes: 4,
                ..MeasureParams::default()
            },
        },
        other => bail!("unknown preset {other:?} (available: example1, label_skew)"),
    };
    Ok(config)
}
