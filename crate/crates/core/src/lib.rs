//! Simulation and analysis toolkit for decentralized SGD over doubly
//! stochastic communication topologies: heterogeneity measurement,
//! convergence tracing, and sparse data-dependent topology learning via
//! Frank-Wolfe over the Birkhoff polytope.

pub mod assignment;
pub mod dsgd;
pub mod error;
pub mod heterogeneity;
pub mod linalg;
pub mod matrix_io;
pub mod mixing;
pub mod problems;
pub mod rng;
pub mod topo_opt;

pub use assignment::{solve_assignment, to_matrix, AssignmentResult, Permutation};
pub use dsgd::{
    iteration_budget, run_centralized, run_dsgd, trajectory_probes, tuned_stepsize, SimConfig,
    SimTrace, Stepsize, TraceRecord,
};
pub use error::{Error, Result};
pub use heterogeneity::{
    bias_variance_bound, estimate_h, estimate_sigma_sq, estimate_zeta_bar_sq, label_skew_bound,
    measure, h_bound_from_local, HeterogeneityReport, LabelSkewBound, McEstimate,
};
pub use mixing::{
    clustered_ring, degrees, frob_dist_to_uniform, make_topology, mixing_parameter, DegreeReport,
    MixingMatrix, MixingSchedule, TopologyKind,
};
pub use problems::{
    dirichlet_proportions, make_label_skew, make_mean_estimation, ClassProportions,
    LocalObjective, ProblemSpec,
};
pub use topo_opt::{
    frank_wolfe, g_gradient, g_value, line_search, objective_bound, FwRecord, FwTrace,
    TopoObjective,
};
