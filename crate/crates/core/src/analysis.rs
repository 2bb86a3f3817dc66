//! Error norms, exact/reference solutions, consistency probes and
//! convergence studies.
//!
//! The error norms at the final time are the max norm and the dx-weighted
//! l1 norm over the node table. Convergence studies sweep a list of spatial
//! steps against one or more time-step rules, comparing either with a known
//! exact solution or with a fine-grid reference run restricted to the coarse
//! grid by the scheme's own degree-1 interpolant.

use crate::hamiltonian::{legendre_transform, VertexSlope};
use crate::network::{
    cfl_margin, min_effective_spacing, node_param, ArcEnd, Grid, GridFunction, Network,
    NetworkError, NodeSite,
};
use crate::problems::Problem;
use crate::scheme::{interpolate, run, step, SchemeConfig, SchemeError, Solution};
use thiserror::Error;

/// The test1 exact solution is valid from `t = 1/sqrt(10)` on.
pub const T1_MIN_TIME: f64 = 0.316_227_766_016_837_94;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("grid functions disagree: {got} vs {expected} values")]
    GridMismatch { got: usize, expected: usize },
    #[error("the exact test1 solution is only valid for t >= 1/sqrt(10) ~ 0.3162; got t={t}")]
    EarlyTime { t: f64 },
    #[error("convergence study needs a nonempty dx list")]
    EmptyStudy,
    #[error("convergence study needs at least one dt rule")]
    NoRules,
    #[error("unknown dt rule '{0}' (expected pow45 | half | cfl:<k> | explicit:<dt>)")]
    BadRule(String),
    #[error("probe function is discontinuous at vertex {vertex}: values differ by {gap:.3e}")]
    ProbeDiscontinuous { vertex: String, gap: f64 },
    #[error("ambient probe functions require affine arc geometry (arc {arc})")]
    NonAffineProbe { arc: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Hamiltonian(#[from] crate::hamiltonian::HamiltonianError),
}

/// Error norms of one slice against a reference on the same node table.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// Max norm over the node table.
    pub e_inf: f64,
    /// `sum over nodes of |u - v| * dx` with the nominal (global) `dx`.
    pub e_1: f64,
    /// Per-node absolute errors.
    pub abs_errors: GridFunction,
    pub dx: f64,
    /// Effective time step of the run this slice came from, when known.
    pub dt_eff: Option<f64>,
    /// Time horizon of the run, when known.
    pub horizon: Option<f64>,
}

/// Max-norm and dx-weighted l1 errors between two node-table functions.
///
/// The l1 weight is the nominal `dx`, not the per-arc effective spacing;
/// vertices are counted once. A per-arc weighted variant is available via
/// [`error_norms_arc_weighted`].
pub fn error_norms(
    reference: &GridFunction,
    computed: &GridFunction,
    dx: f64,
) -> Result<ErrorReport, AnalysisError> {
    if reference.len() != computed.len() {
        return Err(AnalysisError::GridMismatch {
            got: computed.len(),
            expected: reference.len(),
        });
    }
    let abs: Vec<f64> = reference
        .values
        .iter()
        .zip(&computed.values)
        .map(|(u, v)| (u - v).abs())
        .collect();
    let e_inf = abs.iter().fold(0.0f64, |m, &e| m.max(e));
    let e_1 = abs.iter().sum::<f64>() * dx;
    Ok(ErrorReport {
        e_inf,
        e_1,
        abs_errors: GridFunction { values: abs },
        dx,
        dt_eff: None,
        horizon: None,
    })
}

/// l1 norm weighted by the effective spacing of the arc owning each node;
/// vertex nodes carry the mean spacing of their incident arcs.
pub fn error_norms_arc_weighted(
    reference: &GridFunction,
    computed: &GridFunction,
    net: &Network,
    grid: &Grid,
) -> Result<ErrorReport, AnalysisError> {
    let mut report = error_norms(reference, computed, grid.dx)?;
    let mut weighted = 0.0;
    for node in 0..grid.node_count() {
        let w = match grid.site(node) {
            NodeSite::Interior { arc, .. } => grid.arc_spacing(arc),
            NodeSite::Vertex(v) => {
                let inc = net.incident(v);
                inc.iter().map(|&(a, _)| grid.arc_spacing(a)).sum::<f64>() / inc.len() as f64
            }
        };
        weighted += report.abs_errors[node] * w;
    }
    report.e_1 = weighted;
    Ok(report)
}

/// Exact solution of the test1 benchmark, valid for `t >= 1/sqrt(10)`.
///
/// On every arc the value is `sqrt(10) * (distance along the network to the
/// nearest vertex) - 5 t`; the three branches below spell this out in the
/// ambient coordinates of the triangle. `arc` selects the branch (0-based
/// triangle arc index).
pub fn exact_t1(arc: usize, point: &[f64], t: f64) -> Result<f64, AnalysisError> {
    if t < T1_MIN_TIME - 1e-12 {
        return Err(AnalysisError::EarlyTime { t });
    }
    let sqrt10 = 10.0f64.sqrt();
    let q = 1.0 / (2.0 * std::f64::consts::SQRT_2);
    let value = match arc {
        0 => (0.5 - (point[1] - 0.5).abs()) * sqrt10,
        1 => {
            let r = (point[0] * point[0] + point[1] * point[1]).sqrt();
            (q - (r - q).abs()) * sqrt10
        }
        _ => {
            let dx = point[0] - 0.5;
            let dy = point[1] - 0.5;
            let r = (dx * dx + dy * dy).sqrt();
            (q - (r - q).abs()) * sqrt10
        }
    };
    Ok(value - 5.0 * t)
}

/// Samples [`exact_t1`] on the whole node table; vertex nodes evaluate
/// through their first incident arc (all branches agree at vertices).
pub fn exact_t1_grid(net: &Network, grid: &Grid, t: f64) -> Result<GridFunction, AnalysisError> {
    let mut values = Vec::with_capacity(grid.node_count());
    for node in 0..grid.node_count() {
        let arc = match grid.site(node) {
            NodeSite::Interior { arc, .. } => arc,
            NodeSite::Vertex(v) => net.incident(v)[0].0,
        };
        values.push(exact_t1(arc, grid.node_coords(node), t)?);
    }
    Ok(GridFunction { values })
}

/// Stability constant of the scheme:
/// `max{ max |c_x|, max over arcs of (ell * beta0 + max |L|) }`,
/// the inner maximum sampled at grid nodes plus midpoints in `s` and 1001
/// points in the control.
pub fn stability_bound(problem: &Problem, grid: &Grid, ell: f64) -> f64 {
    let mut k = problem.flux_limiter.max_abs();
    for (idx, lag) in problem.lagrangians.iter().enumerate() {
        let n = grid.arc_cells(idx);
        let len = problem.network.arcs()[idx].length;
        let mut max_abs_cost = 0.0f64;
        let mut s_samples = Vec::with_capacity(2 * n + 1);
        for i in 0..=n {
            s_samples.push(node_param(len, n, i));
            if i < n {
                s_samples.push(node_param(len, n, i) + 0.5 * grid.arc_spacing(idx));
            }
        }
        for &s in &s_samples {
            for j in 0..=1000 {
                let lambda = -lag.beta0 + 2.0 * lag.beta0 * j as f64 / 1000.0;
                max_abs_cost = max_abs_cost.max(lag.eval(s, lambda).abs());
            }
        }
        k = k.max(ell * lag.beta0 + max_abs_cost);
    }
    k
}

/// Time-step rules of the convergence studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `dt = dx^(4/5) / 2`.
    Pow45,
    /// `dt = dx / 2`.
    Half,
    /// `dt = (min over arcs of the effective spacing) / k`.
    Cfl(f64),
    /// A fixed time step.
    Explicit(f64),
}

impl DtRule {
    /// The time step this rule produces for a given nominal `dx`.
    pub fn dt(&self, net: &Network, dx: f64) -> f64 {
        match self {
            DtRule::Pow45 => dx.powf(0.8) / 2.0,
            DtRule::Half => dx / 2.0,
            DtRule::Cfl(k) => min_effective_spacing(net, dx) / k,
            DtRule::Explicit(v) => *v,
        }
    }

    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let bad = || AnalysisError::BadRule(text.to_string());
        match text {
            "pow45" => Ok(DtRule::Pow45),
            "half" => Ok(DtRule::Half),
            _ => {
                if let Some(k) = text.strip_prefix("cfl:") {
                    let k: f64 = k.parse().map_err(|_| bad())?;
                    if k > 0.0 {
                        return Ok(DtRule::Cfl(k));
                    }
                } else if let Some(v) = text.strip_prefix("explicit:") {
                    let v: f64 = v.parse().map_err(|_| bad())?;
                    if v > 0.0 {
                        return Ok(DtRule::Explicit(v));
                    }
                }
                Err(bad())
            }
        }
    }
}

impl std::fmt::Display for DtRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DtRule::Pow45 => write!(f, "pow45"),
            DtRule::Half => write!(f, "half"),
            DtRule::Cfl(k) => write!(f, "cfl:{k}"),
            DtRule::Explicit(v) => write!(f, "explicit:{v}"),
        }
    }
}

/// Reference against which a convergence study measures its errors.
#[derive(Debug, Clone)]
pub enum ReferenceSpec {
    /// The closed-form test1 solution at the final time.
    ExactT1,
    /// A fine-grid run of the same scheme, restricted to each coarse grid.
    FineGrid { dx: f64, rule: DtRule },
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub rule: DtRule,
    pub dt_eff: f64,
    pub e_inf: f64,
    pub e_1: f64,
    /// `log(E(coarse)/E(fine)) / log(dx_coarse/dx_fine)` against the
    /// previous row of the same rule.
    pub order_inf: Option<f64>,
    pub order_1: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Rows of one rule, in study order.
    pub fn rows_for(&self, rule: DtRule) -> Vec<&ConvergenceRow> {
        self.rows.iter().filter(|r| r.rule == rule).collect()
    }
}

/// Restricts a fine-grid slice onto a coarse grid of the same network by
/// degree-1 interpolation along each arc.
pub fn restrict_to_grid(
    net: &Network,
    fine_grid: &Grid,
    fine: &GridFunction,
    coarse: &Grid,
) -> Result<GridFunction, AnalysisError> {
    let mut per_arc: Vec<Option<Vec<f64>>> = vec![None; net.arcs().len()];
    let mut values = Vec::with_capacity(coarse.node_count());
    for node in 0..coarse.node_count() {
        let v = match coarse.site(node) {
            NodeSite::Vertex(v) => fine[v],
            NodeSite::Interior { arc, index } => {
                let gathered = per_arc[arc].get_or_insert_with(|| {
                    let mut buf = Vec::new();
                    fine_grid.gather_arc(fine, arc, &mut buf);
                    buf
                });
                let s = coarse.arc_param(net, arc, index);
                interpolate(gathered, net.arcs()[arc].length, s)?
            }
        };
        values.push(v);
    }
    Ok(GridFunction { values })
}

/// Runs the scheme for every `(dx, rule)` combination and tabulates final-
/// time errors against the reference, with observed orders between
/// consecutive rows of the same rule.
pub fn convergence_study(
    problem: &Problem,
    dx_list: &[f64],
    rules: &[DtRule],
    horizon: f64,
    reference: &ReferenceSpec,
    cfg: &SchemeConfig,
) -> Result<ConvergenceTable, AnalysisError> {
    if dx_list.is_empty() {
        return Err(AnalysisError::EmptyStudy);
    }
    if rules.is_empty() {
        return Err(AnalysisError::NoRules);
    }
    let net = &problem.network;
    let fine = match reference {
        ReferenceSpec::ExactT1 => None,
        ReferenceSpec::FineGrid { dx, rule } => {
            let grid = Grid::build(net, *dx, rule.dt(net, *dx), horizon)?;
            let sol = run(problem, &grid, cfg)?;
            Some((grid, sol))
        }
    };

    let mut table = ConvergenceTable::default();
    for &dx in dx_list {
        for &rule in rules {
            let grid = Grid::build(net, dx, rule.dt(net, dx), horizon)?;
            let sol = run(problem, &grid, cfg)?;
            let reference_values = match (&fine, reference) {
                (Some((fine_grid, fine_sol)), _) => {
                    restrict_to_grid(net, fine_grid, fine_sol.final_slice(), &grid)?
                }
                (None, ReferenceSpec::ExactT1) => exact_t1_grid(net, &grid, horizon)?,
                (None, ReferenceSpec::FineGrid { .. }) => unreachable!(),
            };
            let report = error_norms(&reference_values, sol.final_slice(), dx)?;
            table.rows.push(ConvergenceRow {
                dx,
                rule,
                dt_eff: grid.dt_eff,
                e_inf: report.e_inf,
                e_1: report.e_1,
                order_inf: None,
                order_1: None,
            });
        }
    }

    // Observed orders between consecutive rows of the same rule.
    for i in 0..table.rows.len() {
        let (dx, rule, e_inf, e_1) = {
            let r = &table.rows[i];
            (r.dx, r.rule, r.e_inf, r.e_1)
        };
        let prev = table.rows[..i]
            .iter()
            .rev()
            .find(|r| r.rule == rule)
            .map(|r| (r.dx, r.e_inf, r.e_1));
        if let Some((dx_prev, inf_prev, one_prev)) = prev {
            let denom = (dx_prev / dx).ln();
            if denom.abs() > 0.0 {
                let row = &mut table.rows[i];
                row.order_inf = Some((inf_prev / e_inf).ln() / denom);
                row.order_1 = Some((one_prev / e_1).ln() / denom);
            }
        }
    }
    Ok(table)
}

/// Solution-level convenience: error report of a run against the reference.
pub fn solution_error(
    problem: &Problem,
    grid: &Grid,
    sol: &Solution,
    reference: &ReferenceSpec,
    cfg: &SchemeConfig,
) -> Result<ErrorReport, AnalysisError> {
    let net = &problem.network;
    let reference_values = match reference {
        ReferenceSpec::ExactT1 => exact_t1_grid(net, grid, sol.horizon)?,
        ReferenceSpec::FineGrid { dx, rule } => {
            let fine_grid = Grid::build(net, *dx, rule.dt(net, *dx), sol.horizon)?;
            let fine_sol = run(problem, &fine_grid, cfg)?;
            restrict_to_grid(net, &fine_grid, fine_sol.final_slice(), grid)?
        }
    };
    let mut report = error_norms(&reference_values, sol.final_slice(), grid.dx)?;
    report.dt_eff = Some(sol.dt_eff);
    report.horizon = Some(sol.horizon);
    Ok(report)
}

/// A `C^2` test function given per arc as `s -> (value, d1, d2)`.
pub struct ArcCurve {
    value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    d1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    d2: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ArcCurve {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), d1: Box::new(d1), d2: Box::new(d2) }
    }

    /// `a0 + a1 s + a2 s^2` with exact derivatives.
    pub fn quadratic(a0: f64, a1: f64, a2: f64) -> Self {
        Self::new(
            move |s| a0 + a1 * s + a2 * s * s,
            move |s| a1 + 2.0 * a2 * s,
            move |_| 2.0 * a2,
        )
    }
}

/// A test function on the whole network, one curve per arc, continuous at
/// vertices.
pub struct ProbeFunction {
    arcs: Vec<ArcCurve>,
}

impl ProbeFunction {
    pub fn from_arc_curves(arcs: Vec<ArcCurve>) -> Self {
        Self { arcs }
    }

    /// `phi(x) = <gradient, x> + quad * |x - center|^2`, composed with the
    /// affine geometry of every arc (exact derivatives).
    pub fn ambient_quadratic(
        net: &Network,
        gradient: &[f64],
        quad: f64,
        center: &[f64],
    ) -> Result<Self, AnalysisError> {
        let mut arcs = Vec::with_capacity(net.arcs().len());
        for arc in net.arcs() {
            let direction = arc
                .direction()
                .ok_or_else(|| AnalysisError::NonAffineProbe { arc: arc.id.clone() })?;
            let origin = arc.point(0.0);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let oc: Vec<f64> = origin.iter().zip(center).map(|(o, c)| o - c).collect();
            let a0 = dot(gradient, &origin) + quad * dot(&oc, &oc);
            let a1 = dot(gradient, direction) + 2.0 * quad * dot(&oc, direction);
            let a2 = quad;
            arcs.push(ArcCurve::quadratic(a0, a1, a2));
        }
        Ok(Self { arcs })
    }

    /// Affine ambient function `<gradient, x> + offset`.
    pub fn ambient_affine(
        net: &Network,
        gradient: &[f64],
        offset: f64,
    ) -> Result<Self, AnalysisError> {
        let mut arcs = Vec::with_capacity(net.arcs().len());
        for arc in net.arcs() {
            let direction = arc
                .direction()
                .ok_or_else(|| AnalysisError::NonAffineProbe { arc: arc.id.clone() })?;
            let origin = arc.point(0.0);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            arcs.push(ArcCurve::quadratic(
                dot(gradient, &origin) + offset,
                dot(gradient, direction),
                0.0,
            ));
        }
        Ok(Self { arcs })
    }

    pub fn value(&self, arc: usize, s: f64) -> f64 {
        (self.arcs[arc].value)(s)
    }

    pub fn d1(&self, arc: usize, s: f64) -> f64 {
        (self.arcs[arc].d1)(s)
    }

    pub fn d2(&self, arc: usize, s: f64) -> f64 {
        (self.arcs[arc].d2)(s)
    }

    /// Samples the probe on the node table, verifying continuity at
    /// vertices.
    pub fn value_on_grid(
        &self,
        net: &Network,
        grid: &Grid,
    ) -> Result<GridFunction, AnalysisError> {
        let mut values = Vec::with_capacity(grid.node_count());
        for node in 0..grid.node_count() {
            match grid.site(node) {
                NodeSite::Interior { arc, index } => {
                    values.push(self.value(arc, grid.arc_param(net, arc, index)));
                }
                NodeSite::Vertex(v) => {
                    let mut first = None;
                    for &(arc, end) in net.incident(v) {
                        let s = net.arcs()[arc].end_param(end);
                        let value = self.value(arc, s);
                        match first {
                            None => first = Some(value),
                            Some(f0) => {
                                if (value - f0).abs() > 1e-8 {
                                    return Err(AnalysisError::ProbeDiscontinuous {
                                        vertex: net.vertices()[v].id.clone(),
                                        gap: (value - f0).abs(),
                                    });
                                }
                            }
                        }
                    }
                    values.push(first.expect("vertices have incident arcs"));
                }
            }
        }
        Ok(GridFunction { values })
    }

    /// Slopes along the leaving orientation of every arc incident at a
    /// vertex.
    pub fn vertex_slopes(&self, net: &Network, vertex: usize) -> VertexSlope {
        let mut slopes = VertexSlope::new();
        for &(arc, end) in net.incident(vertex) {
            let slope = match end {
                ArcEnd::Start => self.d1(arc, 0.0),
                ArcEnd::End => -self.d1(arc, net.arcs()[arc].length),
            };
            slopes.set(arc, slope);
        }
        slopes
    }
}

/// Defect of one interior node in the consistency probe.
#[derive(Debug, Clone)]
pub struct InteriorDefect {
    pub arc: usize,
    pub index: usize,
    pub node: usize,
    pub s: f64,
    pub defect: f64,
}

/// Defect of one vertex in the consistency probe.
#[derive(Debug, Clone)]
pub struct VertexDefect {
    pub vertex: usize,
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub interior: Vec<InteriorDefect>,
    pub vertices: Vec<VertexDefect>,
    /// The probe ran although the consistency time-step condition failed.
    pub cfl_violated: bool,
    pub cfl_margin: f64,
}

impl ProbeReport {
    pub fn max_interior(&self) -> f64 {
        self.interior.iter().map(|d| d.defect).fold(0.0, f64::max)
    }

    pub fn max_vertex(&self) -> f64 {
        self.vertices.iter().map(|d| d.defect).fold(0.0, f64::max)
    }

    /// Max interior defect over nodes whose full control interval is
    /// untruncated (`beta0 * dt` away from both arc ends).
    pub fn max_deep_interior(&self, net: &Network, grid: &Grid, beta0: f64) -> f64 {
        let reach = beta0 * grid.dt_eff;
        self.interior
            .iter()
            .filter(|d| {
                let len = net.arcs()[d.arc].length;
                d.s >= reach && len - d.s >= reach
            })
            .map(|d| d.defect)
            .fold(0.0, f64::max)
    }
}

/// Applies one scheme step to the probe function and measures the defects
///
/// ```text
/// interior: |(phi - S[phi]) / dt - H(s, d(phi o gamma)/ds)|
/// vertex:   |(phi - S[phi]) / dt - F(x, leaving slopes)|
/// ```
///
/// A violated time-step condition is flagged, not raised: the probe still
/// runs and the caller decides what the defects mean.
pub fn consistency_probe(
    problem: &Problem,
    grid: &Grid,
    phi: &ProbeFunction,
    cfg: &SchemeConfig,
) -> Result<ProbeReport, AnalysisError> {
    let net = &problem.network;
    let margin = cfl_margin(grid, problem.beta0);
    let sampled = phi.value_on_grid(net, grid)?;
    let stepped = step(
        &sampled,
        net,
        grid,
        &problem.lagrangians,
        &problem.flux_limiter,
        cfg,
    )?;
    let dt = grid.dt_eff;

    let mut interior = Vec::new();
    let mut vertices = Vec::new();
    for node in 0..grid.node_count() {
        let rate = (sampled[node] - stepped[node]) / dt;
        match grid.site(node) {
            NodeSite::Interior { arc, index } => {
                let s = grid.arc_param(net, arc, index);
                let (h, _) = legendre_transform(&problem.lagrangians[arc], s, phi.d1(arc, s));
                interior.push(InteriorDefect {
                    arc,
                    index,
                    node,
                    s,
                    defect: (rate - h).abs(),
                });
            }
            NodeSite::Vertex(v) => {
                let slopes = phi.vertex_slopes(net, v);
                let flux = problem.vertex_flux(v, &slopes)?;
                vertices.push(VertexDefect { vertex: v, defect: (rate - flux).abs() });
            }
        }
    }
    Ok(ProbeReport { interior, vertices, cfl_violated: margin < 0.0, cfl_margin: margin })
}
