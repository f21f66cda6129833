pub mod learn_topo;
pub mod measure;
pub mod pipeline;
pub mod simulate;

use std::path::Path;

use anyhow::{bail, Context, Result};
use hetero_topo_core::dsgd::{trajectory_probes, SimConfig};
use hetero_topo_core::matrix_io;
use hetero_topo_core::mixing::{MixingSchedule, MIXING_PARAM_TOL};
use hetero_topo_core::{
    clustered_ring, make_topology, mixing_parameter, MixingMatrix, ProblemSpec, TopologyKind,
};
use ndarray::Array1;

/// Load and parse a problem spec JSON file.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading problem {}", path.display()))?;
    ProblemSpec::from_json(&text).with_context(|| format!("parsing problem {}", path.display()))
}

/// Build a generator topology by name (`custom_weights` is served by the
/// file-based source instead).
pub fn generator_by_name(name: &str, n: usize) -> Result<MixingMatrix> {
    let matrix = match name {
        "complete" => make_topology(TopologyKind::Complete, n)?,
        "identity" => make_topology(TopologyKind::Identity, n)?,
        "alternating_ring" => make_topology(TopologyKind::AlternatingRing, n)?,
        "ring" => make_topology(TopologyKind::Ring, n)?,
        "clustered_ring" => clustered_ring(n)?,
        other => bail!(
            "unknown generator {other:?} (available: complete, identity, \
             alternating_ring, ring, clustered_ring)"
        ),
    };
    Ok(matrix)
}

/// Load a topology CSV and validate it.
pub fn load_topology(path: &Path) -> Result<MixingMatrix> {
    matrix_io::read_mixing_csv_path(path)
        .with_context(|| format!("loading topology {}", path.display()))
}

/// Probe points for the heterogeneity estimators: the start point, the
/// optimum when known, and points along a short D-SGD trajectory on the
/// given topology.
pub fn build_probes(
    spec: &ProblemSpec,
    topology: &MixingMatrix,
    trajectory_count: usize,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    let mut probes = vec![spec.theta_init()];
    if let Some(star) = spec.theta_star() {
        probes.push(star);
    }
    if trajectory_count > 0 {
        let p = mixing_parameter(topology, MIXING_PARAM_TOL)?;
        let eta = p / (8.0 * spec.smoothness());
        let steps = (trajectory_count * 25).max(50);
        let mut cfg = SimConfig::constant(steps, eta, seed ^ 0x5052_4f42);
        cfg.record_every = (steps / trajectory_count.max(1)).max(1);
        // Gap values are irrelevant for probing; any f* works.
        cfg.f_star_override = Some(spec.f_star().unwrap_or(0.0));
        let schedule = MixingSchedule::fixed(topology.clone());
        probes.extend(trajectory_probes(spec, &schedule, &cfg, trajectory_count)?);
    }
    Ok(probes)
}
