//! Polynomial paths of Riemannian metrics on the circle and their
//! discretized Dirac operators.
//!
//! The circle is parametrized by `x in [0, 2*pi)` on a uniform grid. A path
//! is `g(t, x) = sum_j t^j h_j(x)` with positive base density `h_0`; the
//! geodesic distance at each `t` is the shorter-arc integral of
//! `sqrt(g(t, .))`. Dirac operators use the antiperiodic spin structure, so
//! the continuum spectrum is `2*pi*(n + 1/2) / L(t)` with `L(t)` the total
//! length. Two discretization backends are provided:
//!
//! * central finite differences (second-order eigenvalue convergence, the
//!   default for the discretization oracle);
//! * the exact antiperiodic Fourier differentiation matrix (spectrally
//!   accurate; the clean choice for truncation-level pipelines because it
//!   introduces no folded high-frequency branches).
//!
//! Both are conjugated by the metric quarter-density, which keeps them
//! exactly self-adjoint.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{FiniteMetricSpace, LipschitzSeminorm};
use crate::C64;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("grid size must be even and positive, got {0}")]
    OddGridSize(usize),
    #[error("a path needs at least the base coefficient h_0")]
    EmptyCoefficients,
    #[error("coefficient {index} has {len} samples, expected {expected}")]
    CoefficientLength {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("base density h_0 is not positive at grid point {x}")]
    NonpositiveBase { x: usize },
    #[error("metric density g(t, .) is not positive at t = {t}, grid point {x}")]
    NonpositiveDensity { t: f64, x: usize },
    #[error("grid index {index} out of range for {size} points")]
    InvalidIndex { index: usize, size: usize },
    #[error("path parameter t = {t} outside [0, 1]")]
    BadParameter { t: f64 },
    #[error("derivative bound violated at (t = {t}, t0 = {t0}, x = {x})")]
    DerivativeBound { t: f64, t0: f64, x: usize },
}

/// Dirac discretization backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiracBackend {
    /// Antiperiodic central differences; eigenvalues converge at second
    /// order in the grid spacing.
    #[default]
    FiniteDifference,
    /// Antiperiodic Fourier differentiation; eigenvalues of the flat circle
    /// are reproduced exactly and smooth metrics converge spectrally.
    Spectral,
}

/// A polynomial path of metric densities on the circle grid.
#[derive(Debug, Clone)]
pub struct PolyMetricPath {
    grid_size: usize,
    /// `coefficients[j][x] = h_j(x)`
    coefficients: Vec<Vec<f64>>,
}

impl PolyMetricPath {
    /// Validates positivity of `h_0` pointwise and of `g(t, .)` on a
    /// 101-point sample of `[0, 1]`.
    pub fn new(grid_size: usize, coefficients: Vec<Vec<f64>>) -> Result<Self, PathError> {
        if grid_size == 0 || grid_size % 2 != 0 {
            return Err(PathError::OddGridSize(grid_size));
        }
        if coefficients.is_empty() {
            return Err(PathError::EmptyCoefficients);
        }
        for (index, h) in coefficients.iter().enumerate() {
            if h.len() != grid_size {
                return Err(PathError::CoefficientLength {
                    index,
                    len: h.len(),
                    expected: grid_size,
                });
            }
        }
        for (x, &h0) in coefficients[0].iter().enumerate() {
            if h0 <= 0.0 {
                return Err(PathError::NonpositiveBase { x });
            }
        }
        let path = Self {
            grid_size,
            coefficients,
        };
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let g = path.density(t)?;
            if let Some(x) = g.iter().position(|&v| v <= 0.0) {
                return Err(PathError::NonpositiveDensity { t, x });
            }
        }
        Ok(path)
    }

    /// Conformal path `g(t) = base * (1 + factor * t)` with constant density.
    pub fn conformal(grid_size: usize, base: f64, factor: f64) -> Result<Self, PathError> {
        Self::new(
            grid_size,
            vec![vec![base; grid_size], vec![base * factor; grid_size]],
        )
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Metric density `g(t, .)` on the grid.
    pub fn density(&self, t: f64) -> Result<Vec<f64>, PathError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(PathError::BadParameter { t });
        }
        let mut g = vec![0.0; self.grid_size];
        let mut tj = 1.0;
        for h in &self.coefficients {
            for (gx, hx) in g.iter_mut().zip(h) {
                *gx += tj * hx;
            }
            tj *= t;
        }
        Ok(g)
    }

    /// Arc weights of the grid segments at parameter `t` (trapezoid rule on
    /// `sqrt(g)`), and the total circle length.
    fn segments(&self, t: f64) -> Result<(Vec<f64>, f64), PathError> {
        let g = self.density(t)?;
        let n = self.grid_size;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut segs = vec![0.0; n];
        let mut total = 0.0;
        for i in 0..n {
            let a = g[i].sqrt();
            let b = g[(i + 1) % n].sqrt();
            segs[i] = 0.5 * h * (a + b);
            total += segs[i];
        }
        Ok((segs, total))
    }

    /// Total circle length `L(t)`.
    pub fn length(&self, t: f64) -> Result<f64, PathError> {
        Ok(self.segments(t)?.1)
    }
}

/// Grid-certified constant `C` with
/// `|g(t,x) - g(t0,x)| <= C |t - t0| g(0,x)` for all grid `x` and
/// `t, t0 in [0,1]`; the inequality is checked on an 11x11 parameter grid.
pub fn metric_deriv_constant(path: &PolyMetricPath) -> Result<f64, PathError> {
    let degree = path.degree();
    if degree == 0 {
        return Ok(0.0);
    }
    let h0 = &path.coefficients[0];
    let mut max_ratio = 0.0f64;
    for h in path.coefficients.iter().skip(1) {
        for (hx, h0x) in h.iter().zip(h0) {
            max_ratio = max_ratio.max(hx.abs() / h0x);
        }
    }
    let weight: f64 = (0..degree).map(|j| (j + 1) as f64).sum();
    let c = max_ratio * weight;

    let g0 = path.density(0.0)?;
    for a in 0..=10 {
        let t = a as f64 / 10.0;
        let gt = path.density(t)?;
        for b in 0..=10 {
            let t0 = b as f64 / 10.0;
            let gt0 = path.density(t0)?;
            for x in 0..path.grid_size() {
                let lhs = (gt[x] - gt0[x]).abs();
                let rhs = c * (t - t0).abs() * g0[x];
                if lhs > rhs + 1e-9 {
                    return Err(PathError::DerivativeBound { t, t0, x });
                }
            }
        }
    }
    Ok(c)
}

/// Geodesic distance between two grid points at parameter `t`: the shorter
/// of the two arcs under the trapezoid quadrature of `sqrt(g(t, .))`.
pub fn geodesic_distance(
    path: &PolyMetricPath,
    t: f64,
    x: usize,
    y: usize,
) -> Result<f64, PathError> {
    let n = path.grid_size();
    if x >= n {
        return Err(PathError::InvalidIndex { index: x, size: n });
    }
    if y >= n {
        return Err(PathError::InvalidIndex { index: y, size: n });
    }
    let (segs, total) = path.segments(t)?;
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let forward: f64 = segs[lo..hi].iter().sum();
    Ok(forward.min(total - forward))
}

/// Full geodesic distance matrix at parameter `t`.
pub fn geodesic_space(path: &PolyMetricPath, t: f64) -> Result<FiniteMetricSpace, PathError> {
    let n = path.grid_size();
    let (segs, total) = path.segments(t)?;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + segs[i];
    }
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let forward = prefix[j] - prefix[i];
            let d = forward.min(total - forward);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    Ok(FiniteMetricSpace::trusted(dist))
}

/// Lipschitz seminorm of the geodesic metric at parameter `t`.
pub fn lip_seminorm(path: &PolyMetricPath, t: f64) -> Result<LipschitzSeminorm, PathError> {
    Ok(LipschitzSeminorm::new(geodesic_space(path, t)?))
}

/// Numeric Lipschitz distance between the geodesic metrics at `0` and `t`
/// (the log-dilation of the identity map, both directions), next to its
/// certified bound `ln(C t + 1)`.
pub fn lip_distance(path: &PolyMetricPath, t: f64, c: f64) -> Result<(f64, f64), PathError> {
    let d0 = geodesic_space(path, 0.0)?;
    let dt = geodesic_space(path, t)?;
    let n = path.grid_size();
    let mut sup_t_over_0 = 0.0f64;
    let mut sup_0_over_t = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = dt.dist(i, j) / d0.dist(i, j);
            sup_t_over_0 = sup_t_over_0.max(r);
            sup_0_over_t = sup_0_over_t.max(1.0 / r);
        }
    }
    let numeric = sup_t_over_0.ln().max(sup_0_over_t.ln()).max(0.0);
    let analytic = (c * t + 1.0).ln();
    Ok((numeric, analytic))
}

/// Propinquity bound from a Lipschitz distance:
/// `(exp(LipD) - 1) * max(diam0, diamT)`, which vanishes as `LipD -> 0`.
pub fn propinquity_from_lipd(lip_d: f64, diam0: f64, diam_t: f64) -> f64 {
    (lip_d.exp() - 1.0) * diam0.max(diam_t)
}

/// Discretized Dirac operator of the metric `g(t, .)` with the antiperiodic
/// spin structure: the flat derivative conjugated by the quarter-density,
/// `D = G K G` with `G = diag(g^{-1/4})`. Exactly self-adjoint by
/// construction; the spectrum converges to `2*pi*(n + 1/2) / L(t)`.
pub fn dirac_matrix(
    path: &PolyMetricPath,
    t: f64,
    backend: DiracBackend,
) -> Result<DMatrix<C64>, PathError> {
    let n = path.grid_size();
    let g = path.density(t)?;
    if let Some(x) = g.iter().position(|&v| v <= 0.0) {
        return Err(PathError::NonpositiveDensity { t, x });
    }
    let quarter: Vec<f64> = g.iter().map(|&v| v.powf(-0.25)).collect();
    let k = match backend {
        DiracBackend::FiniteDifference => fd_derivative(n),
        DiracBackend::Spectral => spectral_derivative(n),
    };
    let mut d = k;
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] *= quarter[i] * quarter[j];
        }
    }
    Ok(d)
}

/// Antiperiodic central-difference derivative `-i d/dx` on the flat circle.
fn fd_derivative(n: usize) -> DMatrix<C64> {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut k = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let up = (j + 1) % n;
        let down = (j + n - 1) % n;
        let up_sign = if j + 1 == n { -1.0 } else { 1.0 };
        let down_sign = if j == 0 { -1.0 } else { 1.0 };
        k[(j, up)] = C64::new(0.0, -up_sign / (2.0 * h));
        k[(j, down)] = C64::new(0.0, down_sign / (2.0 * h));
    }
    k
}

/// Antiperiodic Fourier differentiation matrix `-i d/dx` on the flat circle:
/// frequencies `m + 1/2` for `m = -n/2 .. n/2 - 1`, summed in closed form.
fn spectral_derivative(n: usize) -> DMatrix<C64> {
    let mut k = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            if j == l {
                continue;
            }
            let diff = j as isize - l as isize;
            let s = (std::f64::consts::PI * diff as f64 / n as f64).sin();
            let sign = if diff.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            k[(j, l)] = C64::new(0.0, -sign / (2.0 * s));
        }
    }
    k
}

/// Serialized path specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    Conformal {
        #[serde(rename = "gridSize")]
        grid_size: usize,
        conformal: ConformalSpec,
    },
    Coefficients {
        #[serde(rename = "gridSize")]
        grid_size: usize,
        coefficients: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalSpec {
    pub base: f64,
    pub factor: f64,
}

impl PathSpec {
    pub fn build(&self) -> Result<PolyMetricPath, PathError> {
        match self {
            PathSpec::Conformal {
                grid_size,
                conformal,
            } => PolyMetricPath::conformal(*grid_size, conformal.base, conformal.factor),
            PathSpec::Coefficients {
                grid_size,
                coefficients,
            } => PolyMetricPath::new(*grid_size, coefficients.clone()),
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            PathSpec::Conformal { grid_size, .. } => *grid_size,
            PathSpec::Coefficients { grid_size, .. } => *grid_size,
        }
    }

    pub fn with_grid_size(&self, grid_size: usize) -> Self {
        match self {
            PathSpec::Conformal { conformal, .. } => PathSpec::Conformal {
                grid_size,
                conformal: conformal.clone(),
            },
            PathSpec::Coefficients { coefficients, .. } => PathSpec::Coefficients {
                grid_size,
                coefficients: coefficients.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn conformal(n: usize) -> PolyMetricPath {
        PolyMetricPath::conformal(n, 1.0, 0.5).unwrap()
    }

    #[test]
    fn deriv_constant_single_term() {
        let path = conformal(16);
        let c = metric_deriv_constant(&path).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deriv_constant_vanishes_for_constant_path() {
        let path = PolyMetricPath::new(16, vec![vec![1.0; 16]]).unwrap();
        assert_eq!(metric_deriv_constant(&path).unwrap(), 0.0);
    }

    #[test]
    fn deriv_constant_two_term_path() {
        let h0 = vec![1.0; 16];
        let h1 = vec![0.3; 16];
        let h2 = vec![0.1; 16];
        let path = PolyMetricPath::new(16, vec![h0, h1, h2]).unwrap();
        let c = metric_deriv_constant(&path).unwrap();
        // max ratio 0.3, degree weight 1 + 2
        assert!((c - 0.9).abs() < 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let path = conformal(64);
        assert_eq!(geodesic_distance(&path, 0.2, 5, 5).unwrap(), 0.0);
        // flat circle, antipodal points
        let flat = PolyMetricPath::new(64, vec![vec![1.0; 64]]).unwrap();
        let d = geodesic_distance(&flat, 0.0, 0, 32).unwrap();
        assert!((d - PI).abs() < 1e-12);
        // conformal scaling at t = 0.2
        let d = geodesic_distance(&path, 0.2, 0, 32).unwrap();
        assert!((d - PI * 1.1f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            geodesic_distance(&path, 0.2, 64, 0),
            Err(PathError::InvalidIndex {
                index: 64,
                size: 64
            })
        ));
    }

    #[test]
    fn geodesic_space_agrees_with_pairwise_rule() {
        let path = conformal(32);
        let space = geodesic_space(&path, 0.3).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let d = geodesic_distance(&path, 0.3, i, j).unwrap();
                assert!((space.dist(i, j) - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lip_distance_examples() {
        let path = conformal(64);
        let c = metric_deriv_constant(&path).unwrap();
        let (numeric, analytic) = lip_distance(&path, 0.0, c).unwrap();
        assert_eq!(numeric, 0.0);
        assert_eq!(analytic, 0.0);

        let (numeric, analytic) = lip_distance(&path, 0.2, c).unwrap();
        assert!((numeric - 0.5 * 1.1f64.ln()).abs() < 1e-12);
        assert!((analytic - 1.1f64.ln()).abs() < 1e-12);
        assert!(numeric <= analytic + 1e-12);

        let (numeric, analytic) = lip_distance(&path, 1.0, c).unwrap();
        assert!((numeric - 0.5 * 1.5f64.ln()).abs() < 1e-12);
        assert!(numeric <= analytic + 1e-12);
    }

    #[test]
    fn propinquity_from_lipd_examples() {
        assert_eq!(propinquity_from_lipd(0.0, 1.0, 2.0), 0.0);
        let diam = PI * 1.1f64.sqrt();
        let v = propinquity_from_lipd(1.1f64.ln(), diam, diam);
        assert!((v - 0.1 * diam).abs() < 1e-12);
        let v = propinquity_from_lipd(2.0f64.ln(), PI, 2.0 * PI);
        assert!((v - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn dirac_is_exactly_self_adjoint() {
        let h0: Vec<f64> = (0..64)
            .map(|i| 1.0 + 0.2 * (2.0 * PI * i as f64 / 64.0).sin())
            .collect();
        let path = PolyMetricPath::new(64, vec![h0, vec![0.1; 64]]).unwrap();
        for backend in [DiracBackend::FiniteDifference, DiracBackend::Spectral] {
            let d = dirac_matrix(&path, 0.4, backend).unwrap();
            let defect = (&d - d.adjoint()).map(|z| z.norm()).max();
            assert!(defect < 1e-12, "{backend:?}: {defect}");
        }
    }

    #[test]
    fn flat_spectrum_matches_half_integers() {
        let flat = PolyMetricPath::new(128, vec![vec![1.0; 128]]).unwrap();
        // spectral backend is exact on the flat circle
        let d = dirac_matrix(&flat, 0.0, DiracBackend::Spectral).unwrap();
        let mut evs: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().cloned().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((evs[64] - 0.5).abs() < 1e-9);
        assert!((evs[63] + 0.5).abs() < 1e-9);
        // finite differences land within 1% on the lowest branch
        let d = dirac_matrix(&flat, 0.0, DiracBackend::FiniteDifference).unwrap();
        let mut evs: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().cloned().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((evs[64] - 0.5).abs() < 0.005);
        assert!((evs[63] + 0.5).abs() < 0.005);
    }

    #[test]
    fn conformal_spectrum_scales_by_length() {
        let path = conformal(128);
        let d = dirac_matrix(&path, 0.2, DiracBackend::Spectral).unwrap();
        let mut evs: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().cloned().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = 0.5 / 1.1f64.sqrt();
        assert!((evs[64] - expect).abs() < 1e-9);
    }

    #[test]
    fn spectrum_is_symmetric_for_curved_metrics() {
        let h0: Vec<f64> = (0..64)
            .map(|i| 1.0 + 0.3 * (2.0 * PI * i as f64 / 64.0).cos())
            .collect();
        let path = PolyMetricPath::new(64, vec![h0]).unwrap();
        let d = dirac_matrix(&path, 0.0, DiracBackend::FiniteDifference).unwrap();
        let mut evs: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().cloned().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..32 {
            assert!(
                (evs[i] + evs[63 - i]).abs() < 1e-9,
                "pair {i}: {} vs {}",
                evs[i],
                evs[63 - i]
            );
        }
    }

    #[test]
    fn backends_agree_on_low_branches() {
        let h0: Vec<f64> = (0..128)
            .map(|i| 1.0 + 0.2 * (2.0 * PI * i as f64 / 128.0).sin())
            .collect();
        let path = PolyMetricPath::new(128, vec![h0]).unwrap();
        let spectral = dirac_matrix(&path, 0.0, DiracBackend::Spectral).unwrap();
        let fd = dirac_matrix(&path, 0.0, DiracBackend::FiniteDifference).unwrap();
        let sort = |m: DMatrix<C64>| {
            let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            e
        };
        let es = sort(spectral);
        let ef = sort(fd);
        // the difference scheme folds high frequencies back onto low
        // eigenvalues, so compare each low spectral branch to the nearest
        // finite-difference eigenvalue instead of matching sorted positions;
        // the second-order error grows like (lambda h)^2
        let h = 2.0 * PI / 128.0;
        for k in 0..8 {
            let target = es[64 + k];
            let nearest = ef
                .iter()
                .map(|&v| (v - target).abs())
                .fold(f64::INFINITY, f64::min);
            let allowed = (target * h).powi(2) + 1e-6;
            assert!(
                nearest / target.abs() < allowed,
                "branch {k}: gap {nearest:.3e}, allowed {allowed:.3e}"
            );
        }
    }

    #[test]
    fn validation_rejects_bad_paths() {
        assert!(matches!(
            PolyMetricPath::new(15, vec![vec![1.0; 15]]),
            Err(PathError::OddGridSize(15))
        ));
        assert!(matches!(
            PolyMetricPath::new(16, vec![]),
            Err(PathError::EmptyCoefficients)
        ));
        let mut h0 = vec![1.0; 16];
        h0[3] = 0.0;
        assert!(matches!(
            PolyMetricPath::new(16, vec![h0]),
            Err(PathError::NonpositiveBase { x: 3 })
        ));
        // density goes negative inside the parameter interval
        assert!(matches!(
            PolyMetricPath::new(16, vec![vec![1.0; 16], vec![-2.0; 16]]),
            Err(PathError::NonpositiveDensity { .. })
        ));
    }

    #[test]
    fn path_spec_parses_both_forms() {
        let conformal_json = r#"{"gridSize": 64, "conformal": {"base": 1.0, "factor": 0.5}}"#;
        let spec: PathSpec = serde_json::from_str(conformal_json).unwrap();
        let path = spec.build().unwrap();
        assert_eq!(path.grid_size(), 64);
        let coeff_json = r#"{"gridSize": 4, "coefficients": [[1.0, 1.0, 1.0, 1.0]]}"#;
        let spec: PathSpec = serde_json::from_str(coeff_json).unwrap();
        assert_eq!(spec.build().unwrap().degree(), 0);
    }
}
