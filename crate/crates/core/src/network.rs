//! Embedded-network data model and space-time grid construction.
//!
//! A network is a finite set of simple oriented arcs in `R^N`, parameterized
//! by arc length, meeting only at vertices. Only one orientation of each arc
//! is stored; the solver admits both signs of the control speed, so inverse
//! arcs never need to be materialized.
//!
//! The grid partitions every arc uniformly with a spacing at most the
//! requested step and identifies all arc endpoints meeting at a vertex with
//! a single node, producing the global node table over which grid functions
//! are defined.

use thiserror::Error;

/// Arc endpoints are snapped to a declared vertex when within this distance.
pub const VERTEX_SNAP_TOL: f64 = 1e-9;
/// Relative step used for the sampled unit-speed check.
const UNIT_SPEED_H: f64 = 1e-4;
/// Allowed relative deviation of the sampled speed from 1.
const UNIT_SPEED_EPS: f64 = 1e-3;
/// Samples per arc for the optional interior-disjointness check.
const DISJOINT_SAMPLES: usize = 32;
/// Distance below which two interior samples count as an overlap.
const DISJOINT_TOL: f64 = 1e-9;
/// Relative guard when taking ceilings of step ratios, so that ratios that
/// are integers up to rounding do not gain a spurious extra cell.
const CEIL_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network must contain at least one arc")]
    Empty,
    #[error("arc {arc}: start and end vertex coincide ({vertex}); loops are not allowed")]
    LoopArc { arc: String, vertex: String },
    #[error("arc {arc} references unknown vertex {vertex}")]
    UnknownVertex { arc: String, vertex: String },
    #[error("vertex {vertex} has non-finite coordinates")]
    NonFiniteCoords { vertex: String },
    #[error("vertex {vertex} has dimension {got}, expected {expected}")]
    DimensionMismatch { vertex: String, got: usize, expected: usize },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("arc {arc}: endpoint vertices coincide in space; arcs must have positive length")]
    DegenerateArc { arc: String },
    #[error(
        "arc {arc}: geometry endpoint at s={s} is {dist:.3e} away from vertex {vertex} \
         (tolerance {VERTEX_SNAP_TOL:.0e})"
    )]
    EndpointMismatch { arc: String, vertex: String, s: f64, dist: f64 },
    #[error("arc {arc}: geometry is not arc-length parameterized: speed {speed:.6} at s={s:.6}")]
    NotUnitSpeed { arc: String, s: f64, speed: f64 },
    #[error("network is not connected: vertex {unreached} is unreachable from {root}")]
    Disconnected { root: String, unreached: String },
    #[error("arcs {a} and {b} overlap away from their endpoints (sample distance {dist:.3e})")]
    InteriorOverlap { a: String, b: String, dist: f64 },
    #[error("inadmissible step pair: {reason}")]
    InadmissiblePair { reason: String },
    #[error("grid function has {got} values, grid has {expected} nodes")]
    SizeMismatch { got: usize, expected: usize },
}

/// Which endpoint of an arc touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcEnd {
    /// The vertex is `gamma(0)`.
    Start,
    /// The vertex is `gamma(|gamma|)`.
    End,
}

/// Arc geometry as an arc-length evaluator `s -> point`.
pub enum ArcGeometry {
    /// Straight segment `origin + s * direction`, `|direction| = 1`.
    Affine { origin: Vec<f64>, direction: Vec<f64> },
    /// User-supplied evaluator together with the arc length it covers.
    Custom { length: f64, eval: Box<dyn Fn(f64) -> Vec<f64> + Send + Sync> },
}

/// An oriented arc of the network, parameterized by arc length on
/// `[0, length]`.
pub struct Arc {
    pub id: String,
    /// Index of the start vertex (`gamma(0)`).
    pub start: usize,
    /// Index of the end vertex (`gamma(length)`).
    pub end: usize,
    pub length: f64,
    geometry: ArcGeometry,
}

impl Arc {
    /// Point in ambient space at arc parameter `s`.
    pub fn point(&self, s: f64) -> Vec<f64> {
        match &self.geometry {
            ArcGeometry::Affine { origin, direction } => origin
                .iter()
                .zip(direction)
                .map(|(o, d)| o + s * d)
                .collect(),
            ArcGeometry::Custom { eval, .. } => eval(s),
        }
    }

    /// Unit direction for affine arcs; `None` for custom geometry.
    pub fn direction(&self) -> Option<&[f64]> {
        match &self.geometry {
            ArcGeometry::Affine { direction, .. } => Some(direction),
            ArcGeometry::Custom { .. } => None,
        }
    }

    /// Parameter of the endpoint touching the given end.
    pub fn end_param(&self, end: ArcEnd) -> f64 {
        match end {
            ArcEnd::Start => 0.0,
            ArcEnd::End => self.length,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: String,
    pub coords: Vec<f64>,
}

/// Specification of one arc for [`Network::build`].
pub struct ArcSpec {
    pub id: String,
    pub start: String,
    pub end: String,
    /// `None` builds the affine segment between the endpoint vertices.
    pub geometry: Option<ArcGeometry>,
}

impl ArcSpec {
    /// Affine arc between two declared vertices.
    pub fn affine(id: &str, start: &str, end: &str) -> Self {
        Self { id: id.into(), start: start.into(), end: end.into(), geometry: None }
    }
}

impl std::fmt::Debug for Arc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Arc")
            .field("id", &self.id)
            .field("start", &self.start)
            .field("end", &self.end)
            .field("length", &self.length)
            .finish_non_exhaustive()
    }
}

/// An embedded network: oriented arcs, vertices and their incidences.
pub struct Network {
    pub dim: usize,
    vertices: Vec<Vertex>,
    arcs: Vec<Arc>,
    /// Per-vertex list of `(arc index, end)` incidences.
    adjacency: Vec<Vec<(usize, ArcEnd)>>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("dim", &self.dim)
            .field("vertices", &self.vertices)
            .field("arcs", &self.arcs)
            .finish_non_exhaustive()
    }
}

impl Network {
    /// Validates and builds a network from vertex coordinates and arc specs.
    ///
    /// Affine arcs get length `|b - a|` and geometry `a + s (b - a)/|b - a|`.
    /// Custom geometry must match the declared endpoint vertices within
    /// [`VERTEX_SNAP_TOL`] and pass a sampled unit-speed check.
    pub fn build(
        vertices: Vec<(String, Vec<f64>)>,
        arc_specs: Vec<ArcSpec>,
    ) -> Result<Self, NetworkError> {
        if arc_specs.is_empty() {
            return Err(NetworkError::Empty);
        }
        let dim = vertices.first().map(|(_, c)| c.len()).unwrap_or(0);
        let mut verts = Vec::with_capacity(vertices.len());
        for (id, coords) in vertices {
            if coords.len() != dim {
                return Err(NetworkError::DimensionMismatch {
                    vertex: id,
                    got: coords.len(),
                    expected: dim,
                });
            }
            if !coords.iter().all(|c| c.is_finite()) {
                return Err(NetworkError::NonFiniteCoords { vertex: id });
            }
            if verts.iter().any(|v: &Vertex| v.id == id) {
                return Err(NetworkError::DuplicateId { kind: "vertex", id });
            }
            verts.push(Vertex { id, coords });
        }

        let vertex_index = |id: &str, arc: &str| -> Result<usize, NetworkError> {
            verts
                .iter()
                .position(|v| v.id == id)
                .ok_or_else(|| NetworkError::UnknownVertex { arc: arc.into(), vertex: id.into() })
        };

        let mut arcs = Vec::with_capacity(arc_specs.len());
        for spec in arc_specs {
            if arcs.iter().any(|a: &Arc| a.id == spec.id) {
                return Err(NetworkError::DuplicateId { kind: "arc", id: spec.id });
            }
            let start = vertex_index(&spec.start, &spec.id)?;
            let end = vertex_index(&spec.end, &spec.id)?;
            if start == end {
                return Err(NetworkError::LoopArc { arc: spec.id, vertex: spec.start });
            }
            let geometry = match spec.geometry {
                Some(g) => g,
                None => {
                    let a = &verts[start].coords;
                    let b = &verts[end].coords;
                    let len = dist(a, b);
                    if len <= 0.0 {
                        return Err(NetworkError::DegenerateArc { arc: spec.id });
                    }
                    let direction = a.iter().zip(b).map(|(x, y)| (y - x) / len).collect();
                    ArcGeometry::Affine { origin: a.clone(), direction }
                }
            };
            let length = match &geometry {
                ArcGeometry::Affine { origin, direction } => {
                    // Affine geometry is exact by construction; the length is
                    // the endpoint distance along the unit direction.
                    let _ = (origin, direction);
                    dist(&verts[start].coords, &verts[end].coords)
                }
                ArcGeometry::Custom { length, .. } => *length,
            };
            let arc = Arc { id: spec.id, start, end, length, geometry };
            check_arc_geometry(&arc, &verts)?;
            arcs.push(arc);
        }

        let mut adjacency = vec![Vec::new(); verts.len()];
        for (k, arc) in arcs.iter().enumerate() {
            adjacency[arc.start].push((k, ArcEnd::Start));
            adjacency[arc.end].push((k, ArcEnd::End));
        }

        let net = Network { dim, vertices: verts, arcs, adjacency };
        net.check_connected()?;
        Ok(net)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Incidences `(arc index, end)` at the given vertex.
    pub fn incident(&self, vertex: usize) -> &[(usize, ArcEnd)] {
        &self.adjacency[vertex]
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn arc_index(&self, id: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    pub fn min_arc_length(&self) -> f64 {
        self.arcs.iter().map(|a| a.length).fold(f64::INFINITY, f64::min)
    }

    fn check_connected(&self) -> Result<(), NetworkError> {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(arc, end) in &self.adjacency[v] {
                let other = match end {
                    ArcEnd::Start => self.arcs[arc].end,
                    ArcEnd::End => self.arcs[arc].start,
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            None => Ok(()),
            Some(v) => Err(NetworkError::Disconnected {
                root: self.vertices[0].id.clone(),
                unreached: self.vertices[v].id.clone(),
            }),
        }
    }

    /// Optional check that arc interiors do not overlap, by pairwise
    /// sampling at 32 interior points per arc.
    ///
    /// This is advisory: sampling cannot certify transversal crossings, but
    /// it catches collinear overlaps reliably.
    pub fn check_interior_disjoint(&self) -> Result<(), NetworkError> {
        let samples: Vec<Vec<Vec<f64>>> = self
            .arcs
            .iter()
            .map(|arc| {
                (1..=DISJOINT_SAMPLES)
                    .map(|i| arc.point(arc.length * i as f64 / (DISJOINT_SAMPLES + 1) as f64))
                    .collect()
            })
            .collect();
        for i in 0..self.arcs.len() {
            for j in (i + 1)..self.arcs.len() {
                for p in &samples[i] {
                    for q in &samples[j] {
                        let d = dist(p, q);
                        if d <= DISJOINT_TOL {
                            return Err(NetworkError::InteriorOverlap {
                                a: self.arcs[i].id.clone(),
                                b: self.arcs[j].id.clone(),
                                dist: d,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds a validated network; see [`Network::build`].
pub fn build_network(
    vertices: Vec<(String, Vec<f64>)>,
    arc_specs: Vec<ArcSpec>,
) -> Result<Network, NetworkError> {
    Network::build(vertices, arc_specs)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_arc_geometry(arc: &Arc, vertices: &[Vertex]) -> Result<(), NetworkError> {
    for (s, vertex) in [(0.0, arc.start), (arc.length, arc.end)] {
        let p = arc.point(s);
        let d = dist(&p, &vertices[vertex].coords);
        if d > VERTEX_SNAP_TOL {
            return Err(NetworkError::EndpointMismatch {
                arc: arc.id.clone(),
                vertex: vertices[vertex].id.clone(),
                s,
                dist: d,
            });
        }
    }
    if matches!(arc.geometry, ArcGeometry::Affine { .. }) {
        // Affine geometry is unit speed by construction.
        return Ok(());
    }
    let h = UNIT_SPEED_H * arc.length;
    let probes = 16;
    for i in 0..probes {
        let s = arc.length * (i as f64 + 0.5) / probes as f64;
        let speed = dist(&arc.point(s + h), &arc.point(s)) / h;
        if (speed - 1.0).abs() > UNIT_SPEED_EPS {
            return Err(NetworkError::NotUnitSpeed { arc: arc.id.clone(), s, speed });
        }
    }
    Ok(())
}

/// Ceiling of `num / den` with a relative guard against rounding just above
/// an integer.
fn guarded_ceil(num: f64, den: f64) -> usize {
    let r = num / den;
    let n = (r - CEIL_GUARD * r.max(1.0)).ceil();
    (n.max(1.0)) as usize
}

/// Where a grid node sits on the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSite {
    /// Identified vertex node (one per vertex, shared by all incident arcs).
    Vertex(usize),
    /// Interior node `i` of arc `arc` (so `0 < i < n_cells`).
    Interior { arc: usize, index: usize },
}

struct ArcGrid {
    /// Number of cells `N_gamma`; the arc carries `N_gamma + 1` nodes.
    n_cells: usize,
    /// Effective spacing `|gamma| / N_gamma`.
    spacing: f64,
    /// Global node ids of the arc's nodes, vertex-identified at both ends.
    nodes: Vec<usize>,
}

/// Space-time grid over a network: per-arc uniform partitions with
/// vertex-identified nodes, plus a uniform time partition.
pub struct Grid {
    /// Requested spatial step.
    pub dx: f64,
    /// Requested time step.
    pub dt: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Number of time cells `N_T`.
    pub n_time: usize,
    /// Effective time step `T / N_T`.
    pub dt_eff: f64,
    arcs: Vec<ArcGrid>,
    sites: Vec<NodeSite>,
    coords: Vec<Vec<f64>>,
}

impl Grid {
    /// Builds the grid for an admissible step pair.
    ///
    /// Admissibility requires `0 < dx < min |gamma|` and `0 < dt < T`. Cell
    /// counts are `ceil(|gamma| / dx)` and `ceil(T / dt)`, so the effective
    /// steps never exceed the requested ones.
    pub fn build(net: &Network, dx: f64, dt: f64, horizon: f64) -> Result<Self, NetworkError> {
        let min_len = net.min_arc_length();
        if dx.is_nan() || dx <= 0.0 || dx >= min_len {
            return Err(NetworkError::InadmissiblePair {
                reason: format!("dx={dx} must satisfy 0 < dx < min arc length {min_len}"),
            });
        }
        if dt.is_nan() || dt <= 0.0 || dt >= horizon {
            return Err(NetworkError::InadmissiblePair {
                reason: format!("dt={dt} must satisfy 0 < dt < T={horizon}"),
            });
        }

        let n_time = guarded_ceil(horizon, dt);
        let dt_eff = horizon / n_time as f64;

        let mut sites: Vec<NodeSite> =
            (0..net.vertices().len()).map(NodeSite::Vertex).collect();
        let mut coords: Vec<Vec<f64>> =
            net.vertices().iter().map(|v| v.coords.clone()).collect();
        let mut arc_grids = Vec::with_capacity(net.arcs().len());
        for (k, arc) in net.arcs().iter().enumerate() {
            let n_cells = guarded_ceil(arc.length, dx);
            let spacing = arc.length / n_cells as f64;
            let mut nodes = Vec::with_capacity(n_cells + 1);
            nodes.push(arc.start);
            for i in 1..n_cells {
                nodes.push(sites.len());
                sites.push(NodeSite::Interior { arc: k, index: i });
                coords.push(arc.point(node_param(arc.length, n_cells, i)));
            }
            nodes.push(arc.end);
            arc_grids.push(ArcGrid { n_cells, spacing, nodes });
        }

        Ok(Grid {
            dx,
            dt,
            horizon,
            n_time,
            dt_eff,
            arcs: arc_grids,
            sites,
            coords,
        })
    }

    /// Total number of nodes in the identified node table.
    pub fn node_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, node: usize) -> NodeSite {
        self.sites[node]
    }

    pub fn node_coords(&self, node: usize) -> &[f64] {
        &self.coords[node]
    }

    /// Number of cells of the given arc.
    pub fn arc_cells(&self, arc: usize) -> usize {
        self.arcs[arc].n_cells
    }

    /// Effective spacing of the given arc.
    pub fn arc_spacing(&self, arc: usize) -> f64 {
        self.arcs[arc].spacing
    }

    /// Global node ids along the given arc, from `s = 0` to `s = |gamma|`.
    pub fn arc_nodes(&self, arc: usize) -> &[usize] {
        &self.arcs[arc].nodes
    }

    /// Arc parameter of node `i` on the given arc.
    pub fn arc_param(&self, net: &Network, arc: usize, i: usize) -> f64 {
        node_param(net.arcs()[arc].length, self.arcs[arc].n_cells, i)
    }

    /// Smallest effective spacing over all arcs.
    pub fn min_spacing(&self) -> f64 {
        self.arcs.iter().map(|a| a.spacing).fold(f64::INFINITY, f64::min)
    }

    /// Time node `t_m`.
    pub fn time(&self, m: usize) -> f64 {
        self.dt_eff * m as f64
    }

    /// Copies the values of `f` along an arc into `out` (length
    /// `n_cells + 1`).
    pub fn gather_arc(&self, f: &GridFunction, arc: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.arcs[arc].nodes.iter().map(|&n| f.values[n]));
    }
}

/// Node parameter `s_i = |gamma| * i / n`, exact at both endpoints.
pub fn node_param(length: f64, n_cells: usize, i: usize) -> f64 {
    length * (i as f64 / n_cells as f64)
}

/// Builds a space-time grid; see [`Grid::build`].
pub fn build_grid(net: &Network, dx: f64, dt: f64, horizon: f64) -> Result<Grid, NetworkError> {
    Grid::build(net, dx, dt, horizon)
}

/// Smallest effective spacing `min over arcs of |gamma| / ceil(|gamma| / dx)`
/// a grid built with the given `dx` would have.
pub fn min_effective_spacing(net: &Network, dx: f64) -> f64 {
    net.arcs()
        .iter()
        .map(|a| a.length / guarded_ceil(a.length, dx) as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Slack of the consistency-estimate time step condition:
/// `min_gamma (spacing / beta0) - dt_eff`.
///
/// A nonnegative value certifies that the truncated control interval covers
/// `[-beta0, beta0]` at every interior node.
pub fn cfl_margin(grid: &Grid, beta0: f64) -> f64 {
    grid.min_spacing() / beta0 - grid.dt_eff
}

/// Real values on the identified node table, one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.node_count()] }
    }

    /// Checks the value count against the grid's node table.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, NetworkError> {
        if values.len() != grid.node_count() {
            return Err(NetworkError::SizeMismatch {
                got: values.len(),
                expected: grid.node_count(),
            });
        }
        Ok(Self { values })
    }

    /// Samples a function of the ambient point on every node.
    pub fn sample(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self { values: (0..grid.node_count()).map(|n| f(grid.node_coords(n))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
