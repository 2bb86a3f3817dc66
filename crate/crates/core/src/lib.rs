//! Semi-Lagrangian solver for evolutive Hamilton-Jacobi equations on embedded
//! networks with flux-limited junction conditions.
//!
//! The crate is organized around the pipeline of a network solve:
//!
//! - [`network`]: embedded-network data model (arcs, vertices) and the
//!   space-time grid with vertex-identified node table.
//! - [`hamiltonian`]: Lagrangian/Hamiltonian calculus — numerical Legendre
//!   transform, truncated Hamiltonians, junction flux and flux-limiter
//!   validation.
//! - [`scheme`]: the semi-Lagrangian update operator (per-arc minimization,
//!   two-step vertex rule) and the time-marching driver.
//! - [`problems`]: bundling of a network with per-arc Lagrangians, flux
//!   limiters and initial data; ships the two built-in benchmark problems
//!   `test1` and `test2`.
//! - [`analysis`]: error norms, exact/reference solutions, consistency
//!   probes and convergence studies.
//! - [`export`]: CSV writers with reproducible 17-significant-digit floats.
//!
//! All solver state is immutable after construction; node updates within a
//! time step are independent and may run on any number of rayon workers with
//! bit-identical results.

pub mod analysis;
pub mod export;
pub mod hamiltonian;
pub mod minimize;
pub mod network;
pub mod problems;
pub mod scheme;

pub use analysis::{
    consistency_probe, convergence_study, error_norms, exact_t1, exact_t1_grid, restrict_to_grid,
    solution_error, stability_bound, AnalysisError, ConvergenceRow, ConvergenceTable, DtRule,
    ErrorReport, ProbeFunction, ProbeReport, ReferenceSpec, T1_MIN_TIME,
};
pub use hamiltonian::{
    h_minus, legendre_transform, mu_hat, validate_flux_limiter, vertex_flux, ArcLagrangian,
    FluxLimiter, FluxLimiterReport, HamiltonianError, VertexSlope,
};
pub use network::{
    build_grid, build_network, cfl_margin, min_effective_spacing, Arc, ArcEnd, ArcGeometry,
    ArcSpec, Grid, GridFunction, Network, NetworkError, NodeSite, Vertex,
};
pub use problems::{InitialDatum, Problem};
pub use scheme::{
    arc_update, interpolate, run, step, vertex_update, ControlSolver, SchemeConfig, SchemeError,
    Solution,
};
