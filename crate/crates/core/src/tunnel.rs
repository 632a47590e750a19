//! Direct-sum tunnels between Lipschitz seminorms on a shared carrier.
//!
//! A tunnel compares two seminorms `L_left`, `L_right` on the same point set
//! through the seminorm on pairs
//! ```text
//!   T(a, b) = max{ L_left(a), L_right(b), (1/kappa) * ||a - b||_sup }
//! ```
//! `T` is exactly the Lipschitz seminorm of the shortest-path metric on two
//! copies of the carrier joined by rungs of length `kappa`: within-block
//! constraints are the factor seminorms and the rungs encode the sup-norm
//! term. That reduction lets every extent computation reuse the
//! Monge-Kantorovich machinery on an ordinary finite metric space.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{
    hausdorff_distance, mk_distance, validate_metric, FiniteMetricSpace, LipschitzSeminorm,
    MetricError, State,
};
use crate::sampling::StateSamplingPlan;

#[derive(Debug, Error)]
pub enum TunnelError {
    #[error("carrier mismatch: left space has {left} points, right space has {right}")]
    CarrierMismatch { left: usize, right: usize },
    #[error("mixing scale must be positive, got {kappa}")]
    NonpositiveKappa { kappa: f64 },
    #[error("empty sample list")]
    EmptySampleList,
    #[error("function pair has lengths {a} and {b}, carrier has {n} points")]
    PairLength { a: usize, b: usize, n: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Genuine two-sided tunnel with rung length `kappa`.
    Mixed { kappa: f64 },
    /// Degenerate diagonal tunnel: both quotients are the same seminorm and
    /// the extent is zero. Produced for the base tunnel at `t = 0`, where a
    /// rung length of zero would force `a = b` instead.
    Identity,
}

/// The direct-sum tunnel between two Lipschitz seminorms over one carrier.
#[derive(Debug, Clone)]
pub struct DirectSumTunnel {
    left: LipschitzSeminorm,
    right: LipschitzSeminorm,
    kind: Kind,
    union: OnceLock<FiniteMetricSpace>,
}

/// Build the tunnel `T(a,b) = max{left(a), right(b), (1/kappa)||a-b||}`.
///
/// The coefficient `2/epsilon` of the mixing term corresponds to
/// `kappa = epsilon / 2`.
pub fn build_direct_sum_tunnel(
    left: LipschitzSeminorm,
    right: LipschitzSeminorm,
    kappa: f64,
) -> Result<DirectSumTunnel, TunnelError> {
    if left.space().len() != right.space().len() {
        return Err(TunnelError::CarrierMismatch {
            left: left.space().len(),
            right: right.space().len(),
        });
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(TunnelError::NonpositiveKappa { kappa });
    }
    Ok(DirectSumTunnel {
        left,
        right,
        kind: Kind::Mixed { kappa },
        union: OnceLock::new(),
    })
}

/// Base tunnel between the seminorms at parameters `0` and `t`, with mixing
/// scale `K(t) = C * |t| * diam`. At `t = 0` (or `C = 0`) the rung length
/// degenerates, so a flagged identity tunnel with extent zero is returned.
pub fn build_base_tunnel(
    lip0: LipschitzSeminorm,
    lipt: LipschitzSeminorm,
    c: f64,
    t: f64,
) -> Result<DirectSumTunnel, TunnelError> {
    if lip0.space().len() != lipt.space().len() {
        return Err(TunnelError::CarrierMismatch {
            left: lip0.space().len(),
            right: lipt.space().len(),
        });
    }
    let kappa = c * t.abs() * lip0.diameter();
    if kappa == 0.0 {
        return Ok(DirectSumTunnel {
            left: lip0,
            right: lipt,
            kind: Kind::Identity,
            union: OnceLock::new(),
        });
    }
    build_direct_sum_tunnel(lip0, lipt, kappa)
}

impl DirectSumTunnel {
    pub fn left(&self) -> &LipschitzSeminorm {
        &self.left
    }

    pub fn right(&self) -> &LipschitzSeminorm {
        &self.right
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            Kind::Mixed { kappa } => Some(kappa),
            Kind::Identity => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == Kind::Identity
    }

    pub fn carrier_len(&self) -> usize {
        self.left.space().len()
    }

    /// Tunnel seminorm on a pair of real functions.
    pub fn seminorm(&self, a: &[f64], b: &[f64]) -> Result<f64, TunnelError> {
        let n = self.carrier_len();
        if a.len() != n || b.len() != n {
            return Err(TunnelError::PairLength {
                a: a.len(),
                b: b.len(),
                n,
            });
        }
        let la = self.left.eval(a)?;
        let lb = self.right.eval(b)?;
        match self.kind {
            Kind::Mixed { kappa } => {
                let sup = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
                Ok(la.max(lb).max(sup / kappa))
            }
            Kind::Identity => {
                let equal = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
                if equal {
                    Ok(la.max(lb))
                } else {
                    Ok(f64::INFINITY)
                }
            }
        }
    }

    /// The shortest-path metric on two copies of the carrier joined by rungs
    /// of length `kappa`, whose Lipschitz seminorm is the tunnel seminorm.
    pub fn union_space(&self) -> &FiniteMetricSpace {
        debug_assert!(!self.is_identity());
        self.union.get_or_init(|| {
            let n = self.carrier_len();
            let kappa = match self.kind {
                Kind::Mixed { kappa } => kappa,
                Kind::Identity => unreachable!("identity tunnels have no union space"),
            };
            let mut edges = Vec::new();
            for &(i, j, w) in self.left.space().generator_edges() {
                edges.push((i, j, w));
            }
            for &(i, j, w) in self.right.space().generator_edges() {
                edges.push((n + i, n + j, w));
            }
            for i in 0..n {
                edges.push((i, n + i, kappa));
            }
            FiniteMetricSpace::from_graph(2 * n, &edges)
        })
    }
}

/// How tunnel states are drawn for an extent estimate.
#[derive(Debug, Clone)]
pub enum ExtentSampling {
    /// Declared plan over the tunnel state simplex.
    Plan { plan: StateSamplingPlan, seed: u64 },
    /// Explicit tunnel states over the `2n` union points.
    Explicit { tunnel_states: Vec<State> },
}

/// Extent estimate of a tunnel, reported next to its certified bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtentReport {
    /// Sampled extent: max of the two directed Hausdorff estimates.
    pub sampled: f64,
    /// Certified analytic bound `2 * kappa`.
    pub analytic: f64,
    /// Directed component against the left pullbacks.
    #[serde(rename = "direction_A")]
    pub direction_a: f64,
    /// Directed component against the right pullbacks.
    #[serde(rename = "direction_B")]
    pub direction_b: f64,
}

/// Pull a factor state back onto one copy of the union carrier.
pub fn embed_state(weights: &[f64], n: usize, right: bool) -> State {
    let mut w = vec![0.0; 2 * n];
    let off = if right { n } else { 0 };
    w[off..off + weights.len()].copy_from_slice(weights);
    State::new(w).expect("embedded state")
}

/// Distance from a state to the whole set of states supported on one copy,
/// under the Monge-Kantorovich metric: each atom travels to the nearest
/// point of that copy, so the infimum is the mass-weighted sum of
/// point-to-copy distances. Exact, no optimization involved.
pub fn distance_to_copy(state: &State, dist_to_copy: &[f64]) -> f64 {
    state
        .weights()
        .iter()
        .zip(dist_to_copy)
        .map(|(w, d)| w * d)
        .sum()
}

/// Nearest state on one copy: push every atom along its cheapest route.
pub fn project_onto_copy(state: &State, union: &FiniteMetricSpace, n: usize, right: bool) -> State {
    let range = if right { n..2 * n } else { 0..n };
    let mut w = vec![0.0; 2 * n];
    for (x, &mass) in state.weights().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let target = range
            .clone()
            .min_by(|&a, &b| {
                union
                    .dist(x, a)
                    .partial_cmp(&union.dist(x, b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty copy");
        w[target] += mass;
    }
    State::new(w).expect("projected state")
}

/// Sampled extent of a direct-sum tunnel.
///
/// The extent is the larger of the two Hausdorff distances between the
/// tunnel state space and the pullbacks of the factor state spaces, under
/// the Monge-Kantorovich metric of the tunnel seminorm. Pullback states are
/// themselves tunnel states, so each directed distance is a sup over tunnel
/// states of the distance to the nearest pullback; that inner distance is
/// evaluated exactly by the atom-projection formula, and only the outer sup
/// is sampled. Every atom crosses at most one rung, which keeps the sup
/// under the certified bound `2 * kappa` for any sampling budget.
pub fn tunnel_extent(
    tunnel: &DirectSumTunnel,
    sampling: &ExtentSampling,
) -> Result<ExtentReport, TunnelError> {
    if tunnel.is_identity() {
        return Ok(ExtentReport {
            sampled: 0.0,
            analytic: 0.0,
            direction_a: 0.0,
            direction_b: 0.0,
        });
    }
    let n = tunnel.carrier_len();
    let kappa = tunnel.kappa().expect("mixed tunnel");
    let union = tunnel.union_space();

    let tunnel_states = match sampling {
        ExtentSampling::Plan { plan, seed } => {
            if plan.is_empty() {
                return Err(TunnelError::EmptySampleList);
            }
            plan.sample(2 * n, *seed)
        }
        ExtentSampling::Explicit { tunnel_states } => {
            if tunnel_states.is_empty() {
                return Err(TunnelError::EmptySampleList);
            }
            tunnel_states.clone()
        }
    };

    let dist_to_left: Vec<f64> = (0..2 * n)
        .map(|x| {
            (0..n)
                .map(|j| union.dist(x, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let dist_to_right: Vec<f64> = (0..2 * n)
        .map(|x| {
            (n..2 * n)
                .map(|j| union.dist(x, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let mut direction_a = 0.0f64;
    let mut direction_b = 0.0f64;
    for mu in &tunnel_states {
        direction_a = direction_a.max(distance_to_copy(mu, &dist_to_left));
        direction_b = direction_b.max(distance_to_copy(mu, &dist_to_right));
    }
    Ok(ExtentReport {
        sampled: direction_a.max(direction_b),
        analytic: 2.0 * kappa,
        direction_a,
        direction_b,
    })
}

/// Worst quotient-isometry defect over a list of sample functions.
///
/// For each self-adjoint sample `a` with `left(a) <= 1`, the quotient of the
/// tunnel seminorm along the first surjection is `min_b T(a, b) >= left(a)`;
/// the defect is their gap. The minimization runs over scaled copies
/// `b = c + (a - c) / (1 + s)` around the midrange `c` (for which the
/// objective is an explicit unimodal function of `s`), followed by a
/// coordinatewise polish on small carriers. The symmetric quotient is
/// handled the same way and the worse of the two is returned.
pub fn quotient_isometry_defect(
    tunnel: &DirectSumTunnel,
    samples: &[Vec<f64>],
) -> Result<f64, TunnelError> {
    if samples.is_empty() {
        return Err(TunnelError::EmptySampleList);
    }
    if tunnel.is_identity() {
        return Ok(0.0);
    }
    let kappa = tunnel.kappa().expect("mixed tunnel");
    let n = tunnel.carrier_len();

    let mut worst = 0.0f64;
    for a in samples {
        if a.len() != n {
            return Err(TunnelError::PairLength {
                a: a.len(),
                b: a.len(),
                n,
            });
        }
        for toward_right in [true, false] {
            let (from_lip, to_lip) = if toward_right {
                (&tunnel.left, &tunnel.right)
            } else {
                (&tunnel.right, &tunnel.left)
            };
            let la = from_lip.eval(a)?;
            let lb_full = to_lip.eval(a)?;
            let c = 0.5
                * (a.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    + a.iter().cloned().fold(f64::INFINITY, f64::min));
            let dev = a.iter().map(|x| (x - c).abs()).fold(0.0f64, f64::max);
            // T along the scaled-copy family, as a function of s
            let objective = |s: f64| -> f64 {
                la.max(lb_full / (1.0 + s))
                    .max(dev * s / ((1.0 + s) * kappa))
            };
            let mut lo = 0.0f64;
            let mut hi = 8.0f64;
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if objective(m1) <= objective(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let s_star = 0.5 * (lo + hi);
            let mut best = objective(0.0).min(objective(s_star));
            // coordinatewise polish on small carriers
            if n <= 64 {
                let mut b: Vec<f64> = a.iter().map(|x| c + (x - c) / (1.0 + s_star)).collect();
                let eval_pair = |b: &[f64]| -> f64 {
                    let lb = if toward_right {
                        tunnel.right.eval(b).unwrap_or(f64::INFINITY)
                    } else {
                        tunnel.left.eval(b).unwrap_or(f64::INFINITY)
                    };
                    let sup = a
                        .iter()
                        .zip(b)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0f64, f64::max);
                    la.max(lb).max(sup / kappa)
                };
                let mut cur = eval_pair(&b);
                for _ in 0..2 {
                    for i in 0..n {
                        let original = b[i];
                        for frac in [0.5, 0.25] {
                            let trial = original + frac * (a[i] - original);
                            b[i] = trial;
                            let v = eval_pair(&b);
                            if v < cur {
                                cur = v;
                            } else {
                                b[i] = original;
                            }
                        }
                    }
                }
                best = best.min(cur);
            }
            worst = worst.max((best - la).abs());
        }
    }
    Ok(worst)
}

/// Serialized tunnel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunnelDocument {
    pub kappa: f64,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

impl TunnelDocument {
    pub fn build(self) -> Result<DirectSumTunnel, TunnelError> {
        let left = LipschitzSeminorm::new(validate_metric(self.left)?);
        let right = LipschitzSeminorm::new(validate_metric(self.right)?);
        build_direct_sum_tunnel(left, right, self.kappa)
    }

    pub fn from_tunnel(tunnel: &DirectSumTunnel) -> Self {
        Self {
            kappa: tunnel.kappa().unwrap_or(0.0),
            left: tunnel.left.space().matrix().clone(),
            right: tunnel.right.space().matrix().clone(),
        }
    }
}

/// Directed Hausdorff gap between two explicit state families under the
/// union metric of a tunnel; exposed for experiment diagnostics.
pub fn state_family_gap(
    tunnel: &DirectSumTunnel,
    from: &[State],
    to: &[State],
) -> Result<f64, TunnelError> {
    let lip = LipschitzSeminorm::new(tunnel.union_space().clone());
    let metric = |a: &State, b: &State| mk_distance(a, b, &lip).map(|s| s.value).unwrap();
    Ok(hausdorff_distance(from, to, metric)?)
}
