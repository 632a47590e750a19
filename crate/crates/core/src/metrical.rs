//! The three-level metrical tunnel between two members of an operator
//! family: algebra tunnel, module seminorm, and scalar tunnel.
//!
//! On the module level the comparison seminorm is
//! ```text
//!   TN(xi, eta) = max{ DN_0(xi), DN_t(eta), (2/epsilon) ||xi - eta|| }
//! ```
//! with `DN` the graph norms of the operators at parameters `0` and `t`.
//! Partner vectors transport truncated eigen-coefficients between the two
//! frames; the covariant reach compares the two unitary evolutions on a
//! time horizon `[0, 1/epsilon]` against module elements of `TN <= 1`; the
//! delta schedule reports the grid prefixes on which each estimate of the
//! certification is in force.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Tolerances;
use crate::metric::{mk_distance, FiniteMetricSpace, LipschitzSeminorm, MetricError, State};
use crate::sampling::rng_for;
use crate::sampling::StateSamplingPlan;
use crate::spectral::{truncation_level, EigenFamily, SpectralError, TruncationLevel};
use crate::tunnel::{
    build_direct_sum_tunnel, quotient_isometry_defect, tunnel_extent, DirectSumTunnel,
    ExtentReport, ExtentSampling, TunnelError,
};
use crate::C64;

#[derive(Debug, Error)]
pub enum MetricalError {
    #[error("vector has graph norm {dn}, expected at most 1")]
    DnExceeded { dn: f64 },
    #[error("time grid point {x} exceeds the horizon [0, {horizon}]")]
    TimeGridOutOfRange { x: f64, horizon: f64 },
    #[error("empty sample list")]
    EmptySamples,
    #[error("algebra carrier has {carrier} points but the module dimension is {dim}")]
    CarrierDimMismatch { carrier: usize, dim: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Tunnel(#[from] TunnelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// When does the algebra-level tunnel hypothesis hold at parameter `t`?
#[derive(Clone, Copy)]
pub enum TunnelHypothesis {
    /// Both quotient seminorms coincide for all parameters.
    Always,
    /// Certified while `c * t * diam <= epsilon / 2`, the sufficient
    /// condition extracted from the Lipschitz sandwich.
    LipschitzSandwich { c: f64, diam: f64 },
}

impl TunnelHypothesis {
    pub fn certified_at(&self, t: f64, epsilon: f64) -> bool {
        match self {
            TunnelHypothesis::Always => true,
            TunnelHypothesis::LipschitzSandwich { c, diam } => c * t * diam <= 0.5 * epsilon,
        }
    }
}

/// Algebra-side data for one parameter cell.
pub struct AlgebraSide<'a> {
    pub lip_zero: &'a LipschitzSeminorm,
    pub lip_t: &'a LipschitzSeminorm,
    pub hypothesis: TunnelHypothesis,
}

/// The metrical tunnel between the triples at grid index `0` and `grid_index`.
pub struct MetricalTunnel<'f> {
    pub family: &'f EigenFamily,
    pub grid_index: usize,
    pub epsilon: f64,
    /// Kept branches are `0..=level`; the first tail index is `level + 1`.
    pub level: usize,
}

impl<'f> MetricalTunnel<'f> {
    /// Module seminorm `TN(xi, eta)`; `xi` lives on the parameter-0 side and
    /// `eta` on the parameter-t side. Extended-real valued in principle;
    /// finite on the discretized model.
    pub fn tn_seminorm(&self, xi: &DVector<C64>, eta: &DVector<C64>) -> f64 {
        let dn0 = self.family.graph_norm(0, xi);
        let dnt = self.family.graph_norm(self.grid_index, eta);
        let diff = (xi - eta).norm();
        dn0.max(dnt).max(2.0 * diff / self.epsilon)
    }

    /// Scalar-level tunnel extent: exactly `epsilon / 2`, computed through
    /// the Monge-Kantorovich machinery on the two-point union space.
    pub fn secondary_extent(&self) -> f64 {
        secondary_tunnel_extent(self.epsilon)
    }
}

/// Extent of the scalar tunnel with seminorm `(2/epsilon) |z - w|`.
pub fn secondary_tunnel_extent(epsilon: f64) -> f64 {
    let half = 0.5 * epsilon;
    let space = FiniteMetricSpace::trusted(vec![vec![0.0, half], vec![half, 0.0]]);
    let lip = LipschitzSeminorm::new(space);
    let vertices = [State::point_mass(2, 0), State::point_mass(2, 1)];
    let mid = State::new(vec![0.5, 0.5]).expect("midpoint state");
    let samples = [vertices[0].clone(), vertices[1].clone(), mid];
    let mut extent = 0.0f64;
    for target in &vertices {
        let mut sup = 0.0f64;
        for s in &samples {
            sup = sup.max(
                mk_distance(s, target, &lip)
                    .expect("two-point transport")
                    .value,
            );
        }
        extent = extent.max(sup);
    }
    extent
}

/// Partner vector: transport the kept coefficients of `xi` from the frame at
/// `src` to the frame at `dst`, contracted by `6 / (6 + epsilon)`.
pub fn partner_vector(
    family: &EigenFamily,
    src: usize,
    dst: usize,
    epsilon: f64,
    level: usize,
    xi: &DVector<C64>,
) -> Result<DVector<C64>, MetricalError> {
    let dn = family.graph_norm(src, xi);
    if dn > 1.0 + 1e-9 {
        return Err(MetricalError::DnExceeded { dn });
    }
    let coeffs = family.coefficients(src, xi);
    let factor = 6.0 / (6.0 + epsilon);
    let mut kept = DVector::from_element(family.branches(), C64::new(0.0, 0.0));
    for n in 0..=level.min(family.branches() - 1) {
        kept[n] = coeffs[n] * C64::new(factor, 0.0);
    }
    Ok(family.synthesize(dst, &kept))
}

/// One sample for the Leibniz checks.
#[derive(Debug, Clone)]
pub struct LeibnizSample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub xi: DVector<C64>,
    pub eta: DVector<C64>,
    pub xi2: DVector<C64>,
    pub eta2: DVector<C64>,
}

/// Seeded Leibniz samples: bounded random functions and random module
/// vectors of moderate norm.
pub fn leibniz_samples(dim: usize, count: usize, seed: u64) -> Vec<LeibnizSample> {
    let mut rng = rng_for(seed, 0x6c65_6962);
    let vec_sample = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(dim, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .scale(1.0 / (dim as f64).sqrt())
    };
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            LeibnizSample {
                a,
                b,
                xi: vec_sample(&mut rng),
                eta: vec_sample(&mut rng),
                xi2: vec_sample(&mut rng),
                eta2: vec_sample(&mut rng),
            }
        })
        .collect()
}

/// Worst modular and inner Leibniz defects over the samples; both are
/// nonpositive up to rounding when the inequalities hold.
///
/// The modular defect needs the algebra tunnel (the functions act on the
/// module by pointwise multiplication); when no algebra side is given only
/// the inner defect is evaluated and the modular defect is reported as 0.
pub fn leibniz_defects(
    tunnel: &MetricalTunnel,
    algebra: Option<&DirectSumTunnel>,
    samples: &[LeibnizSample],
) -> Result<(f64, f64), MetricalError> {
    if samples.is_empty() {
        return Err(MetricalError::EmptySamples);
    }
    let family = tunnel.family;
    let dim = family.dim();
    let eps = tunnel.epsilon;
    let count = samples.len();

    // batch the four vector groups into one frame change per side
    let mut stacked = nalgebra::DMatrix::<C64>::zeros(dim, 4 * count);
    for (k, s) in samples.iter().enumerate() {
        stacked.set_column(4 * k, &s.xi);
        stacked.set_column(4 * k + 1, &s.eta);
        stacked.set_column(4 * k + 2, &s.xi2);
        stacked.set_column(4 * k + 3, &s.eta2);
    }
    let coeff0 = family.coefficient_matrix(0, &stacked);
    let coeff_t = family.coefficient_matrix(tunnel.grid_index, &stacked);
    let alphas0 = family.alphas_at(0);
    let alphas_t = family.alphas_at(tunnel.grid_index);
    let tn_of = |k_xi: usize, k_eta: usize| -> f64 {
        let dn0 = crate::spectral::graph_norm_coeffs(&alphas0, coeff0.column(k_xi).as_slice());
        let dnt = crate::spectral::graph_norm_coeffs(&alphas_t, coeff_t.column(k_eta).as_slice());
        let diff = (stacked.column(k_xi) - stacked.column(k_eta)).norm();
        dn0.max(dnt).max(2.0 * diff / eps)
    };

    let mut modular = f64::NEG_INFINITY;
    let mut inner = f64::NEG_INFINITY;
    for (k, s) in samples.iter().enumerate() {
        let tn = tn_of(4 * k, 4 * k + 1);
        let tn2 = tn_of(4 * k + 2, 4 * k + 3);

        // inner: (2/eps) |<xi, xi'> - <eta, eta'>| <= 2 TN TN
        let ip_xi = s.xi2.dotc(&s.xi);
        let ip_eta = s.eta2.dotc(&s.eta);
        let lhs = 2.0 / eps * (ip_xi - ip_eta).norm();
        inner = inner.max(lhs - 2.0 * tn * tn2);

        if let Some(alg) = algebra {
            if alg.carrier_len() != dim {
                return Err(MetricalError::CarrierDimMismatch {
                    carrier: alg.carrier_len(),
                    dim,
                });
            }
            let axi = DVector::from_fn(dim, |i, _| s.xi[i] * C64::new(s.a[i], 0.0));
            let beta = DVector::from_fn(dim, |i, _| s.eta[i] * C64::new(s.b[i], 0.0));
            let lhs = 2.0 / eps * (axi - beta).norm();
            let sup_a = s.a.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let sup_b = s.b.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let t_ab = alg.seminorm(&s.a, &s.b)?;
            let rhs = (sup_a.max(sup_b) + t_ab) * tn;
            modular = modular.max(lhs - rhs);
        }
    }
    if algebra.is_none() {
        modular = 0.0;
    }
    Ok((modular, inner))
}

/// Sampling budgets for the covariant-reach estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachSamplingPlan {
    /// Axis vectors of the graph-norm ball, one per kept branch up to this cap.
    pub axis_vectors: usize,
    /// Random sparse-support ball vectors.
    pub sparse_samples: usize,
    pub sparse_support: usize,
    /// Random full-support ball vectors.
    pub dense_samples: usize,
    /// Test-element pairs: per-branch axis pairs up to this cap.
    pub omega_axis: usize,
    /// Random sparse test-element pairs.
    pub omega_random: usize,
    /// Saturating pairs that exhaust the `(2/eps)||omega - omega'||` slot.
    pub omega_saturating: usize,
    /// Hard cap on the number of evolution time points.
    pub time_points_cap: usize,
}

impl Default for ReachSamplingPlan {
    fn default() -> Self {
        Self {
            axis_vectors: 48,
            sparse_samples: 8,
            sparse_support: 24,
            dense_samples: 2,
            omega_axis: 24,
            omega_random: 4,
            omega_saturating: 8,
            time_points_cap: 200_000,
        }
    }
}

/// Covariant-reach estimate for one parameter cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachReport {
    /// Sampled Hausdorff gap between the two pulled-back graph-norm unit balls.
    pub sampled: f64,
    /// Certified bound `epsilon`.
    pub analytic: f64,
    pub direction_t_to_0: f64,
    pub direction_0_to_t: f64,
    pub time_points: usize,
}

/// Sparse coefficient vector in a branch basis.
type SparseCoeffs = Vec<(usize, C64)>;

fn dn_of_sparse(coeffs: &SparseCoeffs, lambdas: &[f64]) -> f64 {
    let l2: f64 = coeffs.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt();
    let d2: f64 = coeffs
        .iter()
        .map(|(n, a)| lambdas[*n].powi(2) * a.norm_sqr())
        .sum::<f64>()
        .sqrt();
    l2 + d2
}

fn normalize_dn(coeffs: &mut SparseCoeffs, lambdas: &[f64]) {
    let dn = dn_of_sparse(coeffs, lambdas);
    if dn > 0.0 {
        for (_, a) in coeffs.iter_mut() {
            *a /= C64::new(dn, 0.0);
        }
    }
}

/// Graph-norm unit-ball samples in coefficient space: axis extreme points
/// plus seeded random boundary points with complex phases.
fn sample_dn_ball(
    lambdas: &[f64],
    level: usize,
    plan: &ReachSamplingPlan,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<SparseCoeffs> {
    let branches = lambdas.len();
    let kept = level.min(branches - 1) + 1;
    let mut out = Vec::new();
    let axis_count = kept.min(plan.axis_vectors.max(1));
    for k in 0..axis_count {
        let j = k * kept / axis_count;
        let mut v: SparseCoeffs = vec![(j, C64::new(1.0, 0.0))];
        normalize_dn(&mut v, lambdas);
        out.push(v);
    }
    for _ in 0..plan.sparse_samples {
        let support = plan.sparse_support.min(branches);
        let mut v: SparseCoeffs = Vec::with_capacity(support);
        for s in 0..support {
            // two thirds of the support inside the kept range, the rest anywhere
            let j = if s % 3 < 2 {
                rng.gen_range(0..kept)
            } else {
                rng.gen_range(0..branches)
            };
            v.push((
                j,
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ));
        }
        v.sort_by_key(|(j, _)| *j);
        v.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        normalize_dn(&mut v, lambdas);
        out.push(v);
    }
    for _ in 0..plan.dense_samples {
        let mut v: SparseCoeffs = (0..branches)
            .map(|j| {
                (
                    j,
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        normalize_dn(&mut v, lambdas);
        out.push(v);
    }
    out
}

/// Sup over `x` in `[0, x_max]` of `|A e^{i x a} - B e^{i x b}|` for single
/// modes, in closed form.
fn sup_two_modes(a_amp: C64, a_freq: f64, b_amp: C64, b_freq: f64, x_max: f64) -> f64 {
    let ra = a_amp.norm();
    let rb = b_amp.norm();
    if ra == 0.0 && rb == 0.0 {
        return 0.0;
    }
    if ra == 0.0 || rb == 0.0 {
        return ra.max(rb);
    }
    // |f|^2 = ra^2 + rb^2 - 2 ra rb cos(psi + x delta)
    let cross = a_amp * b_amp.conj();
    let psi = cross.im.atan2(cross.re);
    let delta = a_freq - b_freq;
    let span = (x_max * delta).abs();
    let min_cos = if span >= 2.0 * std::f64::consts::PI {
        -1.0
    } else {
        let (lo, hi) = if delta >= 0.0 {
            (psi, psi + span)
        } else {
            (psi - span, psi)
        };
        // does an odd multiple of pi fall in [lo, hi]?
        let k = ((lo - std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).ceil();
        let odd_pi = std::f64::consts::PI + 2.0 * std::f64::consts::PI * k;
        if odd_pi <= hi {
            -1.0
        } else {
            lo.cos().min(hi.cos())
        }
    };
    (ra * ra + rb * rb - 2.0 * ra * rb * min_cos)
        .max(0.0)
        .sqrt()
}

/// Where the evolution parameter is sampled.
enum TimeSamples {
    /// Uniform grid on `[0, x_max]` including both endpoints.
    Uniform { x_max: f64, npts: usize },
    /// Explicit sample points inside the horizon.
    Explicit(Vec<f64>),
}

impl TimeSamples {
    fn len(&self) -> usize {
        match self {
            TimeSamples::Uniform { npts, .. } => *npts,
            TimeSamples::Explicit(xs) => xs.len(),
        }
    }
}

/// Sup over the time samples of
/// `|sum_k A_k e^{i x a_k} - sum_k B_k e^{i x b_k}|`.
fn sup_mode_sums(pos: &[(f64, C64)], neg: &[(f64, C64)], times: &TimeSamples) -> f64 {
    if let TimeSamples::Uniform { x_max, npts } = *times {
        if pos.len() + neg.len() <= 2 {
            // single or double modes: the sup over the continuous horizon
            // in closed form
            let (a_amp, a_freq) = pos
                .first()
                .map_or((C64::new(0.0, 0.0), 0.0), |&(f, a)| (a, f));
            return match (pos.len(), neg.len()) {
                (_, 0) if pos.len() <= 1 => a_amp.norm(),
                (0, _) if neg.len() == 1 => neg[0].1.norm(),
                (1, 1) => sup_two_modes(a_amp, a_freq, neg[0].1, neg[0].0, x_max),
                (2, 0) => sup_two_modes(pos[0].1, pos[0].0, -pos[1].1, pos[1].0, x_max),
                (0, 2) => sup_two_modes(neg[0].1, neg[0].0, -neg[1].1, neg[1].0, x_max),
                _ => 0.0,
            };
        }
        let npts = npts.max(2);
        let step = x_max / (npts - 1) as f64;
        let mut terms: Vec<(f64, C64, C64)> = Vec::with_capacity(pos.len() + neg.len());
        for &(f, a) in pos {
            terms.push((f, a, C64::new((step * f).cos(), (step * f).sin())));
        }
        for &(f, a) in neg {
            terms.push((f, -a, C64::new((step * f).cos(), (step * f).sin())));
        }
        let mut cur: Vec<C64> = terms.iter().map(|&(_, a, _)| a).collect();
        let mut sup = 0.0f64;
        for k in 0..npts {
            if k > 0 {
                if k % 8192 == 0 {
                    // refresh against phase drift of the recurrence
                    let x = step * k as f64;
                    for (c, &(f, a, _)) in cur.iter_mut().zip(&terms) {
                        *c = a * C64::new((x * f).cos(), (x * f).sin());
                    }
                } else {
                    for (c, &(_, _, w)) in cur.iter_mut().zip(&terms) {
                        *c *= w;
                    }
                }
            }
            let total: C64 = cur.iter().sum();
            sup = sup.max(total.norm());
        }
        sup
    } else {
        let TimeSamples::Explicit(xs) = times else {
            unreachable!()
        };
        let mut sup = 0.0f64;
        for &x in xs {
            let mut total = C64::new(0.0, 0.0);
            for &(f, a) in pos {
                total += a * C64::new((x * f).cos(), (x * f).sin());
            }
            for &(f, a) in neg {
                total -= a * C64::new((x * f).cos(), (x * f).sin());
            }
            sup = sup.max(total.norm());
        }
        sup
    }
}

struct ReachContext {
    lambdas_zero: Vec<f64>,
    lambdas_t: Vec<f64>,
    times: TimeSamples,
    factor: f64,
    level: usize,
}

impl ReachContext {
    /// Evaluate `K(xi_t, eta_0)` against the precomputed test pairs.
    /// `pairs` holds `(omega'_0-side, omega_t-side)` coefficient vectors.
    fn k_value(&self, xi_t: &[C64], eta_0: &[C64], pairs: &[(SparseCoeffs, SparseCoeffs)]) -> f64 {
        let mut worst = 0.0f64;
        for (omega0, omega_t) in pairs {
            let pos: Vec<(f64, C64)> = omega_t
                .iter()
                .filter_map(|&(n, w)| {
                    let amp = xi_t[n] * w.conj();
                    (amp.norm() > 1e-15).then_some((self.lambdas_t[n], amp))
                })
                .collect();
            let neg: Vec<(f64, C64)> = omega0
                .iter()
                .filter_map(|&(n, w)| {
                    let amp = eta_0[n] * w.conj();
                    (amp.norm() > 1e-15).then_some((self.lambdas_zero[n], amp))
                })
                .collect();
            worst = worst.max(sup_mode_sums(&pos, &neg, &self.times));
        }
        worst
    }

    fn densify(&self, sparse: &SparseCoeffs, branches: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); branches];
        for &(n, a) in sparse {
            out[n] = a;
        }
        out
    }

    /// Partner transport of sparse coefficients, contracted and truncated,
    /// then renormalized into the destination unit ball if needed.
    fn partner_sparse(&self, coeffs: &SparseCoeffs, dst_lambdas: &[f64]) -> SparseCoeffs {
        let mut out: SparseCoeffs = coeffs
            .iter()
            .filter(|(n, _)| *n <= self.level)
            .map(|&(n, a)| (n, a * C64::new(self.factor, 0.0)))
            .collect();
        let dn = dn_of_sparse(&out, dst_lambdas);
        if dn > 1.0 {
            for (_, a) in out.iter_mut() {
                *a /= C64::new(dn, 0.0);
            }
        }
        out
    }
}

/// Sampled covariant reach of the metrical tunnel, against the certified
/// bound `epsilon`.
///
/// Both directed gaps are estimated: each sampled unit vector on one side is
/// paired with its partner transport on the other, and the comparison metric
/// is the sampled sup over the time horizon `[0, 1/epsilon]` and over test
/// pairs of `TN`-norm at most one, evaluated in the eigenbasis. An explicit
/// `time_grid` must stay inside the horizon; by default the grid step is
/// `epsilon / (8 max|lambda|)` over the kept branches so that each mode
/// rotates by less than `epsilon / 8` between points.
pub fn covariant_reach(
    tunnel: &MetricalTunnel,
    plan: &ReachSamplingPlan,
    seed: u64,
    time_grid: Option<&[f64]>,
) -> Result<ReachReport, MetricalError> {
    let family = tunnel.family;
    let gi = tunnel.grid_index;
    let eps = tunnel.epsilon;
    if gi == 0 {
        // same triple on both sides: every vector pairs with itself
        return Ok(ReachReport {
            sampled: 0.0,
            analytic: eps,
            direction_t_to_0: 0.0,
            direction_0_to_t: 0.0,
            time_points: 0,
        });
    }
    let branches = family.branches();
    let level = tunnel.level.min(branches - 1);
    let lambdas_zero = family.lambdas_at(0);
    let lambdas_t = family.lambdas_at(gi);
    let x_max = 1.0 / eps;

    let times = match time_grid {
        Some(grid) => {
            for &x in grid {
                if !(0.0..=x_max + 1e-12).contains(&x) {
                    return Err(MetricalError::TimeGridOutOfRange { x, horizon: x_max });
                }
            }
            TimeSamples::Explicit(grid.to_vec())
        }
        None => {
            let max_lambda = (0..=level)
                .map(|n| lambdas_zero[n].abs().max(lambdas_t[n].abs()))
                .fold(0.0f64, f64::max)
                .max(1e-9);
            // each mode rotates by less than eps/8 between grid points
            let step = eps / (8.0 * max_lambda);
            let npts = ((x_max / step).ceil() as usize + 1)
                .min(plan.time_points_cap)
                .max(2);
            TimeSamples::Uniform { x_max, npts }
        }
    };
    let time_points = times.len();

    let ctx = ReachContext {
        lambdas_zero: lambdas_zero.clone(),
        lambdas_t: lambdas_t.clone(),
        times,
        factor: 6.0 / (6.0 + eps),
        level,
    };

    // test pairs (omega'_0, omega_t) with TN(omega', omega) <= 1, rescaled
    // onto the TN unit sphere
    let mut rng = rng_for(seed, 0x7265_6163 ^ gi as u64);
    let mut pairs: Vec<(SparseCoeffs, SparseCoeffs)> = Vec::new();
    let omega_plan = ReachSamplingPlan {
        axis_vectors: plan.omega_axis,
        sparse_samples: plan.omega_random,
        dense_samples: 0,
        ..*plan
    };
    for omega_t in sample_dn_ball(&lambdas_t, level, &omega_plan, &mut rng) {
        let omega0 = ctx.partner_sparse(&omega_t, &lambdas_zero);
        pairs.push((omega0, omega_t));
    }
    // saturating pairs: scaled axis vectors a distance eps/2 apart
    let sat_count = plan.omega_saturating.min(level + 1);
    for k in 0..sat_count {
        let j = k * (level + 1) / sat_count.max(1);
        let a = 1.0 / (1.0 + lambdas_t[j].abs());
        let b = (a - 0.5 * eps).clamp(-1.0 / (1.0 + lambdas_zero[j].abs()), a);
        pairs.push((vec![(j, C64::new(b, 0.0))], vec![(j, C64::new(a, 0.0))]));
    }
    // rescale each pair so TN(omega', omega) <= 1 exactly
    let frame_zero = family.vectors_at(0);
    let frame_t = family.vectors_at(gi);
    for (omega0, omega_t) in pairs.iter_mut() {
        let dn0 = dn_of_sparse(omega0, &lambdas_zero);
        let dnt = dn_of_sparse(omega_t, &lambdas_t);
        // model-space distance between the two module components
        let mut v0 = DVector::from_element(family.dim(), C64::new(0.0, 0.0));
        for &(n, a) in omega0.iter() {
            v0 += frame_zero.column(n) * a;
        }
        let mut vt = DVector::from_element(family.dim(), C64::new(0.0, 0.0));
        for &(n, a) in omega_t.iter() {
            vt += frame_t.column(n) * a;
        }
        let tn = dn0.max(dnt).max(2.0 * (&v0 - &vt).norm() / eps);
        if tn > 1.0 {
            for (_, a) in omega0.iter_mut() {
                *a /= C64::new(tn, 0.0);
            }
            for (_, a) in omega_t.iter_mut() {
                *a /= C64::new(tn, 0.0);
            }
        }
    }

    // direction t -> 0: sample the DN_t ball, partner into the DN_0 ball
    let mut dir_t = 0.0f64;
    for xi in sample_dn_ball(&lambdas_t, level, plan, &mut rng) {
        let eta = ctx.partner_sparse(&xi, &lambdas_zero);
        let k = ctx.k_value(
            &ctx.densify(&xi, branches),
            &ctx.densify(&eta, branches),
            &pairs,
        );
        dir_t = dir_t.max(k);
    }
    // direction 0 -> t
    let mut dir_0 = 0.0f64;
    for eta in sample_dn_ball(&lambdas_zero, level, plan, &mut rng) {
        let xi = ctx.partner_sparse(&eta, &lambdas_t);
        let k = ctx.k_value(
            &ctx.densify(&xi, branches),
            &ctx.densify(&eta, branches),
            &pairs,
        );
        dir_0 = dir_0.max(k);
    }

    Ok(ReachReport {
        sampled: dir_t.max(dir_0),
        analytic: eps,
        direction_t_to_0: dir_t,
        direction_0_to_t: dir_0,
        time_points,
    })
}

/// One entry of the delta schedule: the largest grid prefix on which the
/// entry's inequality holds, with the witnessing margin at the prefix end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub name: String,
    pub index: usize,
    pub t: f64,
    pub margin: f64,
}

/// Grid prefixes for the five estimates entering the certification, plus
/// the truncation data they share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSchedule {
    pub epsilon: f64,
    /// Kept branches are `0..=level` (the sixth-of-epsilon truncation).
    pub level: usize,
    pub lambda: f64,
    pub entries: Vec<DeltaEntry>,
    pub delta_index: usize,
    pub delta_t: f64,
}

impl DeltaSchedule {
    pub fn entry(&self, name: &str) -> &DeltaEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .expect("known schedule entry")
    }

    /// Does any estimate already fail at the first positive grid point?
    pub fn refine_needed(&self) -> Option<&DeltaEntry> {
        self.entries.iter().find(|e| e.index == 0)
    }
}

/// Largest prefix index such that `value(gi) < bound` for all `gi` up to it,
/// together with the worst margin `bound - value` over the prefix.
fn prefix_below(grid_len: usize, bound: f64, mut value: impl FnMut(usize) -> f64) -> (usize, f64) {
    let mut end = 0usize;
    let mut margin = f64::INFINITY;
    for gi in 0..grid_len {
        let v = value(gi);
        if v < bound {
            end = gi;
            margin = margin.min(bound - v);
        } else {
            break;
        }
    }
    (end, margin)
}

/// The delta schedule at tolerance `epsilon`.
///
/// * `delta0`: truncation prefix of the `epsilon/6` tail bound;
/// * `delta1`: uniform closeness of the truncated graph-norm fields;
/// * `delta2`: the algebra tunnel hypothesis;
/// * `delta3`: eigenvector drift below `epsilon / (12 (N + 1))`;
/// * `delta4`: phase drift of the evolutions over the horizon `[0, 1/eps]`
///   below `epsilon / 12`.
pub fn delta_schedule(
    family: &EigenFamily,
    epsilon: f64,
    hypothesis: &TunnelHypothesis,
    trusted_cap: Option<usize>,
    tol: &Tolerances,
) -> Result<DeltaSchedule, MetricalError> {
    let trunc: TruncationLevel = truncation_level(family, epsilon / 6.0, trusted_cap, tol)?;
    // kept branches 0..=level
    let level = trunc.level.min(family.branches() - 1);
    let grid = family.grid();
    let n_grid = grid.len();

    let delta0 = DeltaEntry {
        name: "delta0_truncation".to_string(),
        index: trunc.delta_index,
        t: trunc.delta_t,
        margin: trunc.margin_above,
    };

    let (i1, m1) = prefix_below(n_grid, epsilon / 6.0, |gi| {
        (0..=level)
            .map(|j| (family.lambda(j, gi).abs() - family.lambda(j, 0).abs()).abs())
            .fold(0.0f64, f64::max)
    });
    let delta1 = DeltaEntry {
        name: "delta1_dnorm_field".to_string(),
        index: i1,
        t: grid[i1],
        margin: m1,
    };

    let mut i2 = 0usize;
    for (gi, &t) in grid.iter().enumerate() {
        if hypothesis.certified_at(t, epsilon) {
            i2 = gi;
        } else {
            break;
        }
    }
    let delta2 = DeltaEntry {
        name: "delta2_tunnel_hypothesis".to_string(),
        index: i2,
        t: grid[i2],
        margin: 0.0,
    };

    let bound3 = epsilon / (12.0 * (level as f64 + 1.0));
    let (i3, m3) = prefix_below(n_grid, bound3, |gi| {
        let v0 = family.vectors_at(0);
        let vt = family.vectors_at(gi);
        (0..=level)
            .map(|n| (vt.column(n) - v0.column(n)).norm())
            .fold(0.0f64, f64::max)
    });
    let delta3 = DeltaEntry {
        name: "delta3_eigenvector_drift".to_string(),
        index: i3,
        t: grid[i3],
        margin: m3,
    };

    // sup over x in [0, 1/eps] of |e^{ix l(t)} - e^{ix l(0)}| in closed form
    let phase_envelope = |delta_lambda: f64| -> f64 {
        let arg = delta_lambda.abs() / epsilon;
        if arg >= std::f64::consts::PI {
            2.0
        } else {
            2.0 * (0.5 * arg).sin()
        }
    };
    let (i4, m4) = prefix_below(n_grid, epsilon / 12.0, |gi| {
        (0..=level)
            .map(|j| phase_envelope(family.lambda(j, gi) - family.lambda(j, 0)))
            .fold(0.0f64, f64::max)
    });
    let delta4 = DeltaEntry {
        name: "delta4_phase_drift".to_string(),
        index: i4,
        t: grid[i4],
        margin: m4,
    };

    let entries = vec![delta0, delta1, delta2, delta3, delta4];
    let delta_index = entries.iter().map(|e| e.index).min().unwrap();
    Ok(DeltaSchedule {
        epsilon,
        level,
        lambda: trunc.lambda,
        entries,
        delta_index,
        delta_t: grid[delta_index],
    })
}

/// Everything measured while certifying one `(epsilon, t)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub epsilon: f64,
    pub t: f64,
    pub extent_sampled: f64,
    pub extent_bound: f64,
    pub reach_sampled: f64,
    pub reach_bound: f64,
    pub secondary_extent: f64,
    pub modular_defect: f64,
    pub inner_defect: f64,
    pub quotient_defect: f64,
    pub schedule: DeltaSchedule,
    pub within_schedule: bool,
    pub certified: bool,
}

/// Sampling budgets for a certification cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CellSampling {
    pub reach: ReachSamplingPlan,
    pub extent_states: StateSamplingPlan,
    pub leibniz_samples: usize,
    pub quotient_samples: usize,
}

impl Default for CellSampling {
    fn default() -> Self {
        Self {
            reach: ReachSamplingPlan::default(),
            extent_states: StateSamplingPlan {
                vertex_cap: 64,
                midpoint_cap: 64,
                dirichlet_count: 128,
                dirichlet_support: 0,
            },
            leibniz_samples: 64,
            quotient_samples: 6,
        }
    }
}

/// Certify one `(epsilon, t)` cell: sampled tunnel extent at `kappa = eps/2`,
/// exact secondary extent, Leibniz defects, and sampled covariant reach, each
/// against its bound. The delta schedule is attached as the diagnostic
/// record of where the certified prefixes end.
pub fn certify_cell(
    family: &EigenFamily,
    grid_index: usize,
    epsilon: f64,
    algebra: Option<&AlgebraSide>,
    sampling: &CellSampling,
    seed: u64,
    tol: &Tolerances,
) -> Result<CellReport, MetricalError> {
    let hypothesis = algebra.map_or(TunnelHypothesis::Always, |a| a.hypothesis);
    let schedule = delta_schedule(family, epsilon, &hypothesis, None, tol)?;
    let t = family.grid()[grid_index];
    let tunnel = MetricalTunnel {
        family,
        grid_index,
        epsilon,
        level: schedule.level,
    };

    // algebra tunnel with kappa = eps/2
    let (extent, quotient_defect, algebra_tunnel) = match algebra {
        Some(side) => {
            let alg =
                build_direct_sum_tunnel(side.lip_zero.clone(), side.lip_t.clone(), 0.5 * epsilon)?;
            let report: ExtentReport = tunnel_extent(
                &alg,
                &ExtentSampling::Plan {
                    plan: sampling.extent_states,
                    seed,
                },
            )?;
            // distance functions are the extremal unit-Lipschitz samples
            let n = side.lip_zero.space().len();
            let mut q_samples = Vec::new();
            let count = sampling.quotient_samples.min(n).max(1);
            for k in 0..count {
                let base = k * n / count;
                let f: Vec<f64> = (0..n)
                    .map(|i| side.lip_zero.space().dist(base, i))
                    .collect();
                q_samples.push(f);
            }
            let defect = quotient_isometry_defect(&alg, &q_samples)?;
            (report, defect, Some(alg))
        }
        None => (
            ExtentReport {
                sampled: 0.0,
                analytic: epsilon,
                direction_a: 0.0,
                direction_b: 0.0,
            },
            0.0,
            None,
        ),
    };

    let secondary = tunnel.secondary_extent();
    let samples = leibniz_samples(family.dim(), sampling.leibniz_samples, seed);
    let (modular, inner) = leibniz_defects(&tunnel, algebra_tunnel.as_ref(), &samples)?;
    let reach = covariant_reach(&tunnel, &sampling.reach, seed, None)?;

    let within_schedule = grid_index <= schedule.delta_index;
    let certified = extent.sampled <= epsilon + tol.cert
        && (secondary - 0.5 * epsilon).abs() <= tol.cert
        && modular <= tol.cert
        && inner <= tol.cert
        && reach.sampled <= epsilon + tol.cert;
    Ok(CellReport {
        epsilon,
        t,
        extent_sampled: extent.sampled,
        extent_bound: epsilon,
        reach_sampled: reach.sampled,
        reach_bound: reach.analytic,
        secondary_extent: secondary,
        modular_defect: modular,
        inner_defect: inner,
        quotient_defect,
        schedule,
        within_schedule,
        certified,
    })
}

/// Options for the propinquity upper-bound search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct UbOptions {
    pub eps_max: f64,
    /// Absolute bisection resolution.
    pub resolution: f64,
    pub max_iterations: usize,
}

impl Default for UbOptions {
    fn default() -> Self {
        Self {
            eps_max: 1.0,
            resolution: 1e-3,
            max_iterations: 40,
        }
    }
}

/// Upper-bound search report for one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UbReport {
    pub t: f64,
    /// Smallest sampled epsilon certifying the cell; infinite when none
    /// below `eps_max` does.
    pub bound: f64,
    pub cells: Vec<CellReport>,
}

/// Bisection over epsilon for the smallest certified tolerance at one
/// parameter: the sampled spectral-propinquity upper bound.
///
/// `bracket` seeds the search with already-known results: `(lo, Some(hi))`
/// when a failing and a certified tolerance are known, `(lo, None)` when
/// only failures are known so far.
pub fn spectral_propinquity_ub(
    family: &EigenFamily,
    grid_index: usize,
    algebra: Option<&AlgebraSide>,
    sampling: &CellSampling,
    opts: &UbOptions,
    bracket: Option<(f64, Option<f64>)>,
    seed: u64,
    tol: &Tolerances,
) -> Result<UbReport, MetricalError> {
    let t = family.grid()[grid_index];
    if grid_index == 0 {
        return Ok(UbReport {
            t,
            bound: 0.0,
            cells: Vec::new(),
        });
    }
    let mut cells = Vec::new();
    let certify = |eps: f64, cells: &mut Vec<CellReport>| -> bool {
        let cell_seed = crate::sampling::mix_seed(seed, eps.to_bits());
        match certify_cell(family, grid_index, eps, algebra, sampling, cell_seed, tol) {
            Ok(cell) => {
                let ok = cell.certified;
                cells.push(cell);
                ok
            }
            Err(_) => false,
        }
    };

    let (lo_init, hi_init) = bracket.unwrap_or((0.0, None));
    let (mut lo, mut hi) = match hi_init {
        Some(hi) => (lo_init, hi),
        None => {
            if lo_init >= opts.eps_max || !certify(opts.eps_max, &mut cells) {
                return Ok(UbReport {
                    t,
                    bound: f64::INFINITY,
                    cells,
                });
            }
            (lo_init, opts.eps_max)
        }
    };
    for _ in 0..opts.max_iterations {
        if hi - lo <= opts.resolution {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if certify(mid, &mut cells) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(UbReport {
        t,
        bound: hi,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{track_eigenpairs, TrackingOptions};
    use nalgebra::DMatrix;

    fn constant_family(lams: &[f64], grid: &[f64]) -> EigenFamily {
        let lams = lams.to_vec();
        let op = move |_t: f64| {
            DMatrix::from_fn(lams.len(), lams.len(), |i, j| {
                if i == j {
                    C64::new(lams[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        track_eigenpairs(op, grid, &TrackingOptions::default()).unwrap()
    }

    fn unit_axis(dim: usize, at: usize) -> DVector<C64> {
        DVector::from_fn(dim, |i, _| C64::new(if i == at { 1.0 } else { 0.0 }, 0.0))
    }

    #[test]
    fn tn_seminorm_examples() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 0.5, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 2,
            epsilon: 0.5,
            level: 1,
        };
        let zero = DVector::from_element(2, C64::new(0.0, 0.0));
        assert_eq!(tunnel.tn_seminorm(&zero, &zero), 0.0);
        let e0 = unit_axis(2, 0);
        // xi = eta = e0: DN = 1 + 0.5 both sides, difference zero
        assert!((tunnel.tn_seminorm(&e0, &e0) - 1.5).abs() < 1e-12);
        // xi = e0, eta = 0: max(1.5, 0, 4 * 1)
        assert!((tunnel.tn_seminorm(&e0, &zero) - 4.0).abs() < 1e-12);
        // homogeneity
        let e0s = e0.scale(3.0);
        assert!((tunnel.tn_seminorm(&e0s, &zero) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn partner_vector_on_constant_family() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 0.5, 1.0]);
        let eps = 0.5;
        let e0 = unit_axis(2, 0);
        let xi = e0.scale(1.0 / 1.5); // DN = 1
        let eta = partner_vector(&family, 0, 2, eps, 1, &xi).unwrap();
        let factor = 6.0 / 6.5;
        assert!((family.graph_norm(2, &eta) - factor).abs() < 1e-12);
        // zero maps to zero
        let zero = DVector::from_element(2, C64::new(0.0, 0.0));
        let out = partner_vector(&family, 0, 2, eps, 1, &zero).unwrap();
        assert!(out.norm() < 1e-15);
        // graph-norm gate
        assert!(matches!(
            partner_vector(&family, 0, 2, eps, 1, &e0.scale(2.0)),
            Err(MetricalError::DnExceeded { .. })
        ));
    }

    #[test]
    fn partner_round_trip_contracts_twice() {
        let family = constant_family(&[0.5, 1.5, 2.5], &[0.0, 1.0]);
        let eps = 0.25;
        let xi = unit_axis(3, 0).scale(1.0 / 1.5);
        let once = partner_vector(&family, 1, 0, eps, 2, &xi).unwrap();
        let twice = partner_vector(&family, 0, 1, eps, 2, &once).unwrap();
        let factor = (6.0f64 / 6.25).powi(2);
        assert!((twice - xi.scale(factor)).norm() < 1e-12);
    }

    #[test]
    fn secondary_extent_is_half_epsilon_exactly() {
        assert_eq!(secondary_tunnel_extent(0.5), 0.25);
        assert_eq!(secondary_tunnel_extent(0.1), 0.05);
    }

    #[test]
    fn leibniz_defects_are_nonpositive() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 1,
            epsilon: 0.5,
            level: 1,
        };
        let space = crate::metric::validate_metric(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let lip = LipschitzSeminorm::new(space);
        let alg = build_direct_sum_tunnel(lip.clone(), lip, 0.25).unwrap();
        // trivial sample: a = b = 1, xi = eta
        let e0 = unit_axis(2, 0);
        let trivial = LeibnizSample {
            a: vec![1.0, 1.0],
            b: vec![1.0, 1.0],
            xi: e0.clone(),
            eta: e0.clone(),
            xi2: e0.clone(),
            eta2: e0,
        };
        let (m, i) = leibniz_defects(&tunnel, Some(&alg), &[trivial]).unwrap();
        assert!(m <= 1e-12, "modular {m}");
        assert!(i <= 1e-12, "inner {i}");
        // random seeded samples
        let samples = leibniz_samples(2, 500, 17);
        let (m, i) = leibniz_defects(&tunnel, Some(&alg), &samples).unwrap();
        assert!(m <= 1e-9, "modular {m}");
        assert!(i <= 1e-9, "inner {i}");
    }

    #[test]
    fn reach_is_zero_on_the_diagonal_cell() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 0,
            epsilon: 0.5,
            level: 1,
        };
        let r = covariant_reach(&tunnel, &ReachSamplingPlan::default(), 3, None).unwrap();
        assert_eq!(r.sampled, 0.0);
    }

    #[test]
    fn reach_of_constant_family_is_small() {
        let family = constant_family(&[0.5, 1.5, 2.5, 3.5], &[0.0, 0.5, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 2,
            epsilon: 0.5,
            level: 3,
        };
        let r = covariant_reach(&tunnel, &ReachSamplingPlan::default(), 3, None).unwrap();
        // identical evolutions: only the partner contraction and the
        // saturating test pairs contribute
        assert!(r.sampled <= 0.5 + 1e-9, "reach {}", r.sampled);
        assert_eq!(r.analytic, 0.5);
    }

    #[test]
    fn explicit_time_grid_is_honored() {
        let family = constant_family(&[0.5, 1.5, 2.5], &[0.0, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 1,
            epsilon: 0.5,
            level: 2,
        };
        let xs: Vec<f64> = (0..101).map(|k| 2.0 * k as f64 / 100.0).collect();
        let explicit =
            covariant_reach(&tunnel, &ReachSamplingPlan::default(), 3, Some(&xs)).unwrap();
        assert_eq!(explicit.time_points, 101);
        let uniform = covariant_reach(&tunnel, &ReachSamplingPlan::default(), 3, None).unwrap();
        // identical evolutions: both sampling modes see the same static gaps
        assert!((explicit.sampled - uniform.sampled).abs() < 1e-2);
        assert!(explicit.sampled <= explicit.analytic + 1e-9);
    }

    #[test]
    fn reach_rejects_time_grid_beyond_horizon() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 1.0]);
        let tunnel = MetricalTunnel {
            family: &family,
            grid_index: 1,
            epsilon: 0.5,
            level: 1,
        };
        let err = covariant_reach(&tunnel, &ReachSamplingPlan::default(), 3, Some(&[0.0, 3.0]))
            .unwrap_err();
        assert!(matches!(err, MetricalError::TimeGridOutOfRange { .. }));
    }

    #[test]
    fn delta_schedule_on_constant_family_is_full() {
        let family = constant_family(&[0.5, 1.5, 2.5, 3.5, 8.0, 9.0], &[0.0, 0.5, 1.0]);
        let sched = delta_schedule(
            &family,
            0.9,
            &TunnelHypothesis::Always,
            None,
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(sched.delta_index, 2);
        assert_eq!(sched.delta_t, 1.0);
        for entry in &sched.entries {
            assert_eq!(entry.index, 2, "{}", entry.name);
        }
        assert!(sched.refine_needed().is_none());
    }

    #[test]
    fn sup_two_modes_matches_dense_scan() {
        let a = C64::new(0.4, 0.3);
        let b = C64::new(-0.2, 0.5);
        for (fa, fb, xm) in [(1.0, 0.3, 5.0), (2.0, 2.0, 3.0), (0.1, -0.4, 10.0)] {
            let closed = sup_two_modes(a, fa, b, fb, xm);
            let mut dense = 0.0f64;
            for k in 0..20001 {
                let x = xm * k as f64 / 20000.0;
                let f = a * C64::new(0.0, x * fa).exp() - b * C64::new(0.0, x * fb).exp();
                dense = dense.max(f.norm());
            }
            assert!((closed - dense).abs() < 1e-6, "{closed} vs {dense}");
            assert!(closed >= dense - 1e-9);
        }
    }

    #[test]
    fn ub_is_zero_at_the_base_point() {
        let family = constant_family(&[0.5, 1.5], &[0.0, 1.0]);
        let report = spectral_propinquity_ub(
            &family,
            0,
            None,
            &CellSampling::default(),
            &UbOptions::default(),
            None,
            9,
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(report.bound, 0.0);
    }

    #[test]
    fn ub_certifies_constant_family_tightly() {
        let family = constant_family(&[0.5, 1.5, 6.0, 7.0], &[0.0, 0.5, 1.0]);
        let opts = UbOptions {
            eps_max: 1.0,
            resolution: 0.05,
            max_iterations: 12,
        };
        let report = spectral_propinquity_ub(
            &family,
            2,
            None,
            &CellSampling::default(),
            &opts,
            None,
            9,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(report.bound.is_finite());
        assert!(report.bound <= 1.0);
        // every certified cell satisfies the bounds it claims
        for cell in &report.cells {
            if cell.certified {
                assert!(cell.extent_sampled <= cell.epsilon + 1e-9);
                assert!(cell.reach_sampled <= cell.reach_bound + 1e-9);
                assert!((cell.secondary_extent - 0.5 * cell.epsilon).abs() < 1e-12);
            }
        }
    }
}
