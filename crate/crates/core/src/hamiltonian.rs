//! Lagrangian/Hamiltonian calculus on network arcs.
//!
//! The solver works in Lagrangian (cost) form: each arc carries a running
//! cost `L(s, lambda)` finite on the control interval `[-beta0, beta0]`.
//! The analysis side works with the convex-conjugate Hamiltonian
//! `H(s, mu) = max_{|lambda| <= beta0} (lambda mu - L(s, lambda))`, its
//! truncation `H^-` past the minimizer `mu_hat` of `H(0, .)`, and the
//! junction flux `F(x, p) = max{-c_x, max over incident arcs of H^-}`.
//!
//! Every incident arc enters the junction in its leaving orientation: an arc
//! that ends at the vertex is viewed through the reversed parametrization,
//! which maps to `H(|gamma|, -mu)` without materializing inverse arcs.

use crate::minimize::{grow_bracket, leftmost_below, scan_then_golden};
use crate::network::{ArcEnd, Grid, Network};
use thiserror::Error;

/// Absolute tolerance of the inner one-dimensional searches.
pub const LAMBDA_TOL: f64 = 1e-10;
/// Coarse samples guarding the golden-section against undeclared
/// non-unimodality.
const COARSE_SAMPLES: usize = 65;
/// Bracket radius beyond which the conjugate is declared non-coercive.
const MU_BRACKET_MAX: f64 = 1e6;
/// Value slack used to resolve minimizer ties toward the smallest argument.
const TIE_EPS: f64 = 1e-12;
/// Samples per axis of the Lagrangian validation lattice.
const VALIDATE_S_SAMPLES: usize = 17;
const VALIDATE_LAMBDA_SAMPLES: usize = 33;
/// Sampled midpoint-convexity slack.
const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error(
        "no bracket for the conjugate minimizer of arc {arc} within |mu| <= {MU_BRACKET_MAX:e}; \
         the Lagrangian looks non-coercive"
    )]
    BracketFailure { arc: String },
    #[error("vertex flux at vertex {vertex}: no slope supplied for incident arc {arc}")]
    MissingSlope { vertex: String, arc: String },
    #[error("Lagrangian of arc {arc} is not finite at (s, lambda) = ({s}, {lambda})")]
    NonFinite { arc: String, s: f64, lambda: f64 },
    #[error(
        "Lagrangian of arc {arc} declared convex but violates midpoint convexity at s={s}: \
         L((l1+l2)/2) - (L(l1)+L(l2))/2 = {excess:.3e} for l1={l1}, l2={l2}"
    )]
    ConvexityViolated { arc: String, s: f64, l1: f64, l2: f64, excess: f64 },
    #[error("got {got} values, expected {expected} (one per vertex or per arc)")]
    SizeMismatch { got: usize, expected: usize },
    #[error("all arcs must share one control bound; found {a} and {b}")]
    MixedControlBounds { a: f64, b: f64 },
}

type LagFn = std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Running cost of one arc: evaluator `L(s, lambda)` together with the
/// control bound and a convexity declaration.
#[derive(Clone)]
pub struct ArcLagrangian {
    /// Index of the arc this cost belongs to.
    pub arc: usize,
    /// Control speeds are restricted to `[-beta0, beta0]`.
    pub beta0: f64,
    /// Declares `lambda -> L(s, lambda)` convex for every `s`. When false,
    /// the scheme falls back to sampled minimization.
    pub convex_in_lambda: bool,
    eval: LagFn,
}

impl ArcLagrangian {
    pub fn new(
        arc: usize,
        beta0: f64,
        convex_in_lambda: bool,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(beta0 > 0.0, "control bound must be positive");
        Self { arc, beta0, convex_in_lambda, eval: std::sync::Arc::new(eval) }
    }

    #[inline]
    pub fn eval(&self, s: f64, lambda: f64) -> f64 {
        (self.eval)(s, lambda)
    }

    /// Checks finiteness on a lattice of `[0, len] x [-beta0, beta0]` and,
    /// when convexity is declared, sampled midpoint convexity.
    pub fn validate(&self, arc_id: &str, len: f64) -> Result<(), HamiltonianError> {
        let s_at = |i: usize| len * i as f64 / (VALIDATE_S_SAMPLES - 1) as f64;
        let l_at =
            |j: usize| -self.beta0 + 2.0 * self.beta0 * j as f64 / (VALIDATE_LAMBDA_SAMPLES - 1) as f64;
        for i in 0..VALIDATE_S_SAMPLES {
            let s = s_at(i);
            let mut values = [0.0; VALIDATE_LAMBDA_SAMPLES];
            for (j, slot) in values.iter_mut().enumerate() {
                let v = self.eval(s, l_at(j));
                if !v.is_finite() {
                    return Err(HamiltonianError::NonFinite {
                        arc: arc_id.into(),
                        s,
                        lambda: l_at(j),
                    });
                }
                *slot = v;
            }
            if self.convex_in_lambda {
                for a in 0..VALIDATE_LAMBDA_SAMPLES {
                    for b in (a + 1)..VALIDATE_LAMBDA_SAMPLES {
                        let mid = 0.5 * (l_at(a) + l_at(b));
                        let excess = self.eval(s, mid) - 0.5 * (values[a] + values[b]);
                        if excess > CONVEXITY_TOL {
                            return Err(HamiltonianError::ConvexityViolated {
                                arc: arc_id.into(),
                                s,
                                l1: l_at(a),
                                l2: l_at(b),
                                excess,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Numerical Legendre transform `H(s, mu) = max_{|lambda| <= beta0}
/// (lambda mu - L(s, lambda))`.
///
/// Returns `(value, maximizing lambda)`. A coarse scan brackets the maximum
/// before golden-section refinement, so undeclared non-concavity of the
/// objective degrades accuracy instead of correctness.
pub fn legendre_transform(lag: &ArcLagrangian, s: f64, mu: f64) -> (f64, f64) {
    let obj = |lambda: f64| -(lambda * mu - lag.eval(s, lambda));
    let (lambda, neg) = scan_then_golden(obj, -lag.beta0, lag.beta0, COARSE_SAMPLES, LAMBDA_TOL);
    (-neg, lambda)
}

/// Legendre transform of the leaving-orientation view of an arc end.
///
/// For `ArcEnd::Start` this is `H(0, mu)`; for `ArcEnd::End` it is the
/// Hamiltonian of the reversed arc at its own parameter 0, which equals
/// `H(|gamma|, -mu)` with the maximizer negated.
pub fn legendre_at_end(lag: &ArcLagrangian, len: f64, end: ArcEnd, mu: f64) -> (f64, f64) {
    match end {
        ArcEnd::Start => legendre_transform(lag, 0.0, mu),
        ArcEnd::End => {
            let (h, lambda) = legendre_transform(lag, len, -mu);
            (h, -lambda)
        }
    }
}

fn minimize_conjugate(
    arc_id: &str,
    h: impl Fn(f64) -> f64,
) -> Result<f64, HamiltonianError> {
    let radius = grow_bracket(&h, MU_BRACKET_MAX)
        .ok_or_else(|| HamiltonianError::BracketFailure { arc: arc_id.into() })?;
    let (mu_star, v_star) = scan_then_golden(&h, -radius, radius, COARSE_SAMPLES, LAMBDA_TOL);
    // Smallest minimizer under ties: left edge of a barely-super-level set.
    let level = v_star + TIE_EPS * (1.0 + v_star.abs());
    Ok(leftmost_below(&h, -radius, mu_star, level, LAMBDA_TOL))
}

/// Global minimizer `mu_hat` of `mu -> H(s=0, mu)`, smallest under ties.
///
/// The bracket is grown until the conjugate is observed coercive; failure to
/// bracket within `|mu| <= 1e6` signals a non-coercive input.
pub fn mu_hat(lag: &ArcLagrangian) -> Result<f64, HamiltonianError> {
    let id = format!("#{}", lag.arc);
    minimize_conjugate(&id, |mu| legendre_transform(lag, 0.0, mu).0)
}

/// `mu_hat` of the leaving-orientation view of an arc end.
pub fn mu_hat_at_end(
    lag: &ArcLagrangian,
    arc_id: &str,
    len: f64,
    end: ArcEnd,
) -> Result<f64, HamiltonianError> {
    minimize_conjugate(arc_id, |mu| legendre_at_end(lag, len, end, mu).0)
}

/// Truncated Hamiltonian `H^-(s, mu)`: equals `H(s, mu)` for
/// `mu <= mu_hat` and stays frozen at `H(s, mu_hat)` past it.
pub fn h_minus(lag: &ArcLagrangian, mu_hat: f64, s: f64, mu: f64) -> f64 {
    let arg = if mu <= mu_hat { mu } else { mu_hat };
    legendre_transform(lag, s, arg).0
}

fn h_minus_at_end(lag: &ArcLagrangian, len: f64, end: ArcEnd, mu_hat: f64, mu: f64) -> f64 {
    let arg = if mu <= mu_hat { mu } else { mu_hat };
    legendre_at_end(lag, len, end, arg).0
}

/// Cached truncation points `mu_hat` for the leaving views of every arc end.
///
/// Computed once per problem; all junction-flux evaluations reuse them.
pub struct JunctionTruncations {
    start: Vec<f64>,
    end: Vec<f64>,
}

impl JunctionTruncations {
    pub fn compute(net: &Network, lags: &[ArcLagrangian]) -> Result<Self, HamiltonianError> {
        let mut start = Vec::with_capacity(lags.len());
        let mut end = Vec::with_capacity(lags.len());
        for (k, lag) in lags.iter().enumerate() {
            let arc = &net.arcs()[k];
            start.push(mu_hat_at_end(lag, &arc.id, arc.length, ArcEnd::Start)?);
            end.push(mu_hat_at_end(lag, &arc.id, arc.length, ArcEnd::End)?);
        }
        Ok(Self { start, end })
    }

    pub fn at(&self, arc: usize, end: ArcEnd) -> f64 {
        match end {
            ArcEnd::Start => self.start[arc],
            ArcEnd::End => self.end[arc],
        }
    }
}

/// Per-vertex flux limiter `c_x`.
#[derive(Debug, Clone)]
pub struct FluxLimiter {
    values: Vec<f64>,
}

impl FluxLimiter {
    /// One value per vertex, in vertex order.
    pub fn new(net: &Network, values: Vec<f64>) -> Result<Self, HamiltonianError> {
        if values.len() != net.vertices().len() {
            return Err(HamiltonianError::SizeMismatch {
                got: values.len(),
                expected: net.vertices().len(),
            });
        }
        Ok(Self { values })
    }

    /// The same limiter value at every vertex.
    pub fn constant(net: &Network, c: f64) -> Self {
        Self { values: vec![c; net.vertices().len()] }
    }

    pub fn value(&self, vertex: usize) -> f64 {
        self.values[vertex]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Directional slopes of a test function at a vertex, one per incident arc,
/// oriented along the arc leaving the vertex.
#[derive(Debug, Clone, Default)]
pub struct VertexSlope {
    slopes: std::collections::BTreeMap<usize, f64>,
}

impl VertexSlope {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, arc: usize, slope: f64) -> &mut Self {
        self.slopes.insert(arc, slope);
        self
    }

    pub fn get(&self, arc: usize) -> Option<f64> {
        self.slopes.get(&arc).copied()
    }
}

/// Junction flux `F(x, p) = max{-c_x, max over incident arcs of
/// H^-(vertex side, p_arc)}`.
pub fn vertex_flux(
    net: &Network,
    lags: &[ArcLagrangian],
    junction: &JunctionTruncations,
    limiter: &FluxLimiter,
    vertex: usize,
    slopes: &VertexSlope,
) -> Result<f64, HamiltonianError> {
    let mut best = -limiter.value(vertex);
    for &(arc, end) in net.incident(vertex) {
        let p = slopes.get(arc).ok_or_else(|| HamiltonianError::MissingSlope {
            vertex: net.vertices()[vertex].id.clone(),
            arc: net.arcs()[arc].id.clone(),
        })?;
        let len = net.arcs()[arc].length;
        let h = h_minus_at_end(&lags[arc], len, end, junction.at(arc, end), p);
        if h > best {
            best = h;
        }
    }
    Ok(best)
}

/// Outcome of the flux-limiter admissibility check at one vertex.
#[derive(Debug, Clone)]
pub struct VertexLimiterCheck {
    pub vertex: usize,
    /// Largest admissible limiter value `min over incident arcs and s of
    /// L(s, 0)`.
    pub bound: f64,
    /// `bound - c_x`; negative means the limiter is inadmissible.
    pub margin: f64,
}

impl VertexLimiterCheck {
    pub fn violation(&self) -> f64 {
        (-self.margin).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct FluxLimiterReport {
    pub per_vertex: Vec<VertexLimiterCheck>,
}

impl FluxLimiterReport {
    pub fn is_valid(&self) -> bool {
        self.per_vertex.iter().all(|v| v.margin >= 0.0)
    }

    pub fn worst_margin(&self) -> f64 {
        self.per_vertex.iter().map(|v| v.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `c_x <= -max over incident arcs and s of min_mu H(s, mu)` at every
/// vertex, reporting margins instead of raising.
///
/// The inner minimum over `mu` is evaluated through the conjugacy identity
/// `min_mu H(s, mu) = -L(s, 0)`, valid for costs convex in the control; the
/// maximum over `s` is sampled at the grid nodes and cell midpoints, so the
/// check is advisory for costs varying faster than the grid resolves.
pub fn validate_flux_limiter(
    limiter: &FluxLimiter,
    net: &Network,
    lags: &[ArcLagrangian],
    grid: &Grid,
) -> FluxLimiterReport {
    let arc_bound: Vec<f64> = net
        .arcs()
        .iter()
        .enumerate()
        .map(|(k, arc)| {
            let n = grid.arc_cells(k);
            let mut bound = f64::INFINITY;
            for i in 0..=n {
                let s = crate::network::node_param(arc.length, n, i);
                bound = bound.min(lags[k].eval(s, 0.0));
                if i < n {
                    let mid = crate::network::node_param(arc.length, n, i)
                        + 0.5 * grid.arc_spacing(k);
                    bound = bound.min(lags[k].eval(mid, 0.0));
                }
            }
            bound
        })
        .collect();
    let per_vertex = (0..net.vertices().len())
        .map(|v| {
            let bound = net
                .incident(v)
                .iter()
                .map(|&(arc, _)| arc_bound[arc])
                .fold(f64::INFINITY, f64::min);
            VertexLimiterCheck { vertex: v, bound, margin: bound - limiter.value(v) }
        })
        .collect();
    FluxLimiterReport { per_vertex }
}
