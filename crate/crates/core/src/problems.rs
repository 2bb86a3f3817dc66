//! Problem bundles: a network with per-arc costs, a flux limiter, and an
//! initial datum, plus the built-in benchmark problems.
//!
//! `test1` is the triangle network with the state-independent cost
//! `lambda^2 / 2` on every arc, limiter -5 at every vertex and zero initial
//! datum. `test2` keeps the triangle but adds state costs that penalize the
//! distance from the third vertex and, on two arcs, the first coordinate;
//! the limiter is +1 and the initial datum is `1 - |x|`.

use crate::hamiltonian::{
    validate_flux_limiter, vertex_flux, ArcLagrangian, FluxLimiter, FluxLimiterReport,
    HamiltonianError, JunctionTruncations, VertexSlope,
};
use crate::network::{Arc, ArcSpec, Grid, Network};

type PointFn = std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Initial datum on the network, evaluated at ambient points.
#[derive(Clone)]
pub enum InitialDatum {
    Zero,
    /// `v0(x) = 1 - |x|` with the Euclidean norm.
    OneMinusNorm,
    Custom(PointFn),
}

impl InitialDatum {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            InitialDatum::Zero => 0.0,
            InitialDatum::OneMinusNorm => {
                1.0 - p.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            InitialDatum::Custom(f) => f(p),
        }
    }

    /// Lipschitz constant along unit-speed arcs, when known.
    pub fn default_lipschitz(&self) -> Option<f64> {
        match self {
            InitialDatum::Zero => Some(0.0),
            InitialDatum::OneMinusNorm => Some(1.0),
            InitialDatum::Custom(_) => None,
        }
    }
}

/// One state-cost term of a quadratic-form running cost.
#[derive(Debug, Clone)]
pub enum StateTerm {
    /// `coeff * |x - center|^2`.
    Dist2 { coeff: f64, center: Vec<f64> },
    /// `coeff * x_component^2`.
    Component2 { coeff: f64, component: usize },
}

/// Builds `L(s, lambda) = kinetic * lambda^2 + sum of state terms at
/// gamma(s)` for an affine arc. Returns `None` for custom geometry, where
/// the caller should supply a closure instead.
pub fn quadratic_form_lagrangian(
    arc_index: usize,
    arc: &Arc,
    beta0: f64,
    kinetic: f64,
    terms: Vec<StateTerm>,
) -> Option<ArcLagrangian> {
    let origin = arc.point(0.0);
    let direction: Vec<f64> = arc.direction()?.to_vec();
    let eval = move |s: f64, lambda: f64| {
        let mut cost = kinetic * lambda * lambda;
        for term in &terms {
            match term {
                StateTerm::Dist2 { coeff, center } => {
                    let d2: f64 = origin
                        .iter()
                        .zip(&direction)
                        .zip(center)
                        .map(|((o, d), c)| {
                            let diff = o + s * d - c;
                            diff * diff
                        })
                        .sum();
                    cost += coeff * d2;
                }
                StateTerm::Component2 { coeff, component } => {
                    let x = origin[*component] + s * direction[*component];
                    cost += coeff * x * x;
                }
            }
        }
        cost
    };
    Some(ArcLagrangian::new(arc_index, beta0, kinetic > 0.0, eval))
}

/// A complete solvable problem.
pub struct Problem {
    pub name: String,
    pub network: Network,
    pub lagrangians: Vec<ArcLagrangian>,
    /// Common control bound of all arcs.
    pub beta0: f64,
    pub flux_limiter: FluxLimiter,
    pub initial: InitialDatum,
    /// Declared Lipschitz constant of the initial datum along arcs.
    pub lipschitz: f64,
    junction: JunctionTruncations,
}

impl Problem {
    /// Validates the costs and caches the junction truncation points.
    pub fn new(
        name: impl Into<String>,
        network: Network,
        lagrangians: Vec<ArcLagrangian>,
        flux_limiter: FluxLimiter,
        initial: InitialDatum,
        lipschitz: f64,
    ) -> Result<Self, HamiltonianError> {
        if lagrangians.len() != network.arcs().len() {
            return Err(HamiltonianError::SizeMismatch {
                got: lagrangians.len(),
                expected: network.arcs().len(),
            });
        }
        let beta0 = lagrangians[0].beta0;
        for (lag, arc) in lagrangians.iter().zip(network.arcs()) {
            if lag.beta0 != beta0 {
                return Err(HamiltonianError::MixedControlBounds { a: beta0, b: lag.beta0 });
            }
            lag.validate(&arc.id, arc.length)?;
        }
        let junction = JunctionTruncations::compute(&network, &lagrangians)?;
        Ok(Self {
            name: name.into(),
            network,
            lagrangians,
            beta0,
            flux_limiter,
            initial,
            lipschitz,
            junction,
        })
    }

    /// The triangle network shared by both built-in problems.
    pub fn triangle_network() -> Network {
        Network::build(
            vec![
                ("z1".into(), vec![0.0, 0.0]),
                ("z2".into(), vec![0.0, 1.0]),
                ("z3".into(), vec![0.5, 0.5]),
            ],
            vec![
                ArcSpec::affine("gamma1", "z1", "z2"),
                ArcSpec::affine("gamma2", "z1", "z3"),
                ArcSpec::affine("gamma3", "z2", "z3"),
            ],
        )
        .expect("triangle network is valid")
    }

    /// State-independent benchmark: cost `lambda^2 / 2` on every arc,
    /// limiter -5 everywhere, zero initial datum, control bound 4.
    pub fn test1() -> Self {
        let network = Self::triangle_network();
        let beta0 = 4.0;
        let lagrangians = (0..3)
            .map(|k| ArcLagrangian::new(k, beta0, true, |_s, l| 0.5 * l * l))
            .collect();
        let limiter = FluxLimiter::constant(&network, -5.0);
        Problem::new("test1", network, lagrangians, limiter, InitialDatum::Zero, 0.0)
            .expect("test1 is valid")
    }

    /// State-dependent benchmark: quadratic kinetic cost plus state costs
    /// `5 |x - z3|^2` everywhere and `10 x_1^2` on the two arcs reaching z3,
    /// limiter +1, initial datum `1 - |x|`, control bound 3.
    pub fn test2() -> Self {
        let network = Self::triangle_network();
        let beta0 = 3.0;
        let z3 = vec![0.5, 0.5];
        let lagrangians: Vec<ArcLagrangian> = network
            .arcs()
            .iter()
            .enumerate()
            .map(|(k, arc)| {
                let mut terms = vec![StateTerm::Dist2 { coeff: 5.0, center: z3.clone() }];
                if k > 0 {
                    terms.push(StateTerm::Component2 { coeff: 10.0, component: 0 });
                }
                quadratic_form_lagrangian(k, arc, beta0, 0.5, terms)
                    .expect("triangle arcs are affine")
            })
            .collect();
        let limiter = FluxLimiter::constant(&network, 1.0);
        Problem::new(
            "test2",
            network,
            lagrangians,
            limiter,
            InitialDatum::OneMinusNorm,
            1.0,
        )
        .expect("test2 is valid")
    }

    pub fn initial_value(&self, p: &[f64]) -> f64 {
        self.initial.eval(p)
    }

    pub fn junction(&self) -> &JunctionTruncations {
        &self.junction
    }

    /// Junction flux at a vertex for the given leaving-direction slopes.
    pub fn vertex_flux(&self, vertex: usize, slopes: &VertexSlope) -> Result<f64, HamiltonianError> {
        vertex_flux(
            &self.network,
            &self.lagrangians,
            &self.junction,
            &self.flux_limiter,
            vertex,
            slopes,
        )
    }

    /// Flux-limiter admissibility report on the given grid.
    pub fn validate_limiter(&self, grid: &Grid) -> FluxLimiterReport {
        validate_flux_limiter(&self.flux_limiter, &self.network, &self.lagrangians, grid)
    }
}
