//! JSON run configuration: schema types, strict deserialization with field
//! paths in errors, and conversion into solver inputs.

use anyhow::{anyhow, bail, Context, Result};
use hjnet_core::{
    problems::{quadratic_form_lagrangian, StateTerm},
    ArcSpec, ControlSolver, DtRule, FluxLimiter, InitialDatum, Network, Problem, SchemeConfig,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub dx: OneOrMany<f64>,
    pub dt_rule: OneOrMany<String>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub reference: Option<ReferenceSection>,
    #[serde(default)]
    pub probe: Option<ProbeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Builtin(String),
    Custom(Box<CustomProblemSpec>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblemSpec {
    pub name: String,
    pub vertices: Vec<VertexSpec>,
    pub arcs: Vec<ArcSpecJson>,
    pub beta0: f64,
    pub lagrangians: BTreeMap<String, LagrangianSpec>,
    pub flux_limiter: BTreeMap<String, f64>,
    pub initial: InitialSpec,
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub id: String,
    pub coords: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpecJson {
    pub id: String,
    pub start: String,
    pub end: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianSpec {
    /// Coefficient of `lambda^2`.
    pub kinetic: f64,
    #[serde(default)]
    pub state_terms: Vec<StateTermSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTermSpec {
    pub coeff: f64,
    pub kind: StateTermKind,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateTermKind {
    /// Squared distance from a fixed point.
    Dist2(Vec<f64>),
    /// Squared ambient coordinate (0-based index).
    Component2(usize),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Zero,
    OneMinusNorm,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub solver: Option<String>,
    pub lambda_samples: Option<usize>,
    pub golden_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub dx: f64,
    #[serde(default)]
    pub dt_rule: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub gradient: Option<Vec<f64>>,
    pub quad: Option<f64>,
    pub center: Option<Vec<f64>>,
}

/// Parses and schema-validates a config file; errors carry the JSON field
/// path that failed.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| anyhow!("config schema violation at `{}`: {}", e.path(), e.inner()))?;
    if cfg.horizon.is_nan() || cfg.horizon <= 0.0 {
        bail!("config schema violation at `T`: horizon must be positive");
    }
    if cfg.dx.to_vec().is_empty() {
        bail!("config schema violation at `dx`: list must not be empty");
    }
    if cfg.dt_rule.to_vec().is_empty() {
        bail!("config schema violation at `dt_rule`: list must not be empty");
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn dt_rules(&self) -> Result<Vec<DtRule>> {
        self.dt_rule
            .to_vec()
            .iter()
            .map(|s| DtRule::parse(s).map_err(|e| anyhow!(e)))
            .collect()
    }

    pub fn scheme_config(&self, workers_flag: Option<usize>) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::default();
        if let Some(solver) = &self.scheme.solver {
            cfg.solver = match solver.as_str() {
                "per_cell_golden" => ControlSolver::PerCellGolden,
                "uniform_sampling" => ControlSolver::UniformSampling,
                other => bail!(
                    "config schema violation at `scheme.solver`: unknown solver '{other}' \
                     (expected per_cell_golden | uniform_sampling)"
                ),
            };
        }
        if let Some(samples) = self.scheme.lambda_samples {
            cfg.lambda_samples = samples;
        }
        if let Some(tol) = self.scheme.golden_tol {
            cfg.golden_tol = tol;
        }
        cfg.workers = workers_flag.or(self.workers).unwrap_or(1).max(1);
        cfg.validate().map_err(|e| anyhow!(e))?;
        Ok(cfg)
    }

    pub fn build_problem(&self) -> Result<Problem> {
        match &self.problem {
            ProblemSpec::Builtin(name) => match name.as_str() {
                "test1" => Ok(Problem::test1()),
                "test2" => Ok(Problem::test2()),
                other => bail!(
                    "config schema violation at `problem`: unknown builtin '{other}' \
                     (expected test1 | test2, or a custom problem object)"
                ),
            },
            ProblemSpec::Custom(spec) => build_custom(spec),
        }
    }
}

fn build_custom(spec: &CustomProblemSpec) -> Result<Problem> {
    if spec.beta0.is_nan() || spec.beta0 <= 0.0 {
        bail!("config schema violation at `problem.beta0`: must be positive");
    }
    let vertices = spec
        .vertices
        .iter()
        .map(|v| (v.id.clone(), v.coords.clone()))
        .collect();
    let arcs = spec
        .arcs
        .iter()
        .map(|a| ArcSpec::affine(&a.id, &a.start, &a.end))
        .collect();
    let network = Network::build(vertices, arcs).map_err(|e| anyhow!("network: {e}"))?;

    for id in spec.lagrangians.keys() {
        if network.arc_index(id).is_none() {
            bail!("config schema violation at `problem.lagrangians.{id}`: unknown arc id");
        }
    }
    let mut lagrangians = Vec::with_capacity(network.arcs().len());
    for (k, arc) in network.arcs().iter().enumerate() {
        let lag_spec = spec.lagrangians.get(&arc.id).ok_or_else(|| {
            anyhow!("config schema violation at `problem.lagrangians`: arc {} missing", arc.id)
        })?;
        let terms = lag_spec
            .state_terms
            .iter()
            .map(|t| match &t.kind {
                StateTermKind::Dist2(center) => {
                    StateTerm::Dist2 { coeff: t.coeff, center: center.clone() }
                }
                StateTermKind::Component2(c) => {
                    StateTerm::Component2 { coeff: t.coeff, component: *c }
                }
            })
            .collect();
        let lag = quadratic_form_lagrangian(k, arc, spec.beta0, lag_spec.kinetic, terms)
            .ok_or_else(|| anyhow!("arc {} has non-affine geometry", arc.id))?;
        lagrangians.push(lag);
    }

    for id in spec.flux_limiter.keys() {
        if network.vertex_index(id).is_none() {
            bail!("config schema violation at `problem.flux_limiter.{id}`: unknown vertex id");
        }
    }
    let mut limiter_values = Vec::with_capacity(network.vertices().len());
    for v in network.vertices() {
        let c = spec.flux_limiter.get(&v.id).ok_or_else(|| {
            anyhow!("config schema violation at `problem.flux_limiter`: vertex {} missing", v.id)
        })?;
        limiter_values.push(*c);
    }
    let limiter = FluxLimiter::new(&network, limiter_values).map_err(|e| anyhow!(e))?;

    let initial = match spec.initial {
        InitialSpec::Zero => InitialDatum::Zero,
        InitialSpec::OneMinusNorm => InitialDatum::OneMinusNorm,
    };
    let lipschitz = spec
        .lipschitz
        .or_else(|| initial.default_lipschitz())
        .ok_or_else(|| anyhow!("config schema violation at `problem.lipschitz`: required"))?;

    Problem::new(spec.name.clone(), network, lagrangians, limiter, initial, lipschitz)
        .map_err(|e| anyhow!("problem validation: {e}"))
}
