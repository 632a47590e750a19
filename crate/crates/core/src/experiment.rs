//! Manifest-driven experiment pipelines and machine-readable reports.
//!
//! A manifest describes one scenario: a metric path on the circle (or a raw
//! operator family), the parameter grid, the tolerance list, explicit seeds
//! and budgets. The runners build the tracked eigenfamily once, then verify
//! the quantitative lemma battery, certify every `(epsilon, t)` cell, and
//! search the per-parameter propinquity upper bound. All outputs are
//! deterministic functions of the manifest, byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{
    dirac_matrix, geodesic_space, lip_distance, lip_seminorm, metric_deriv_constant,
    propinquity_from_lipd, DiracBackend, PathError, PathSpec, PolyMetricPath,
};
use crate::config::{ContinuityModuli, Tolerances};
use crate::metric::{LipschitzSeminorm, MetricError};
use crate::metrical::{
    certify_cell, delta_schedule, spectral_propinquity_ub, AlgebraSide, CellReport, CellSampling,
    MetricalError, TunnelHypothesis, UbOptions,
};
use crate::sampling::{mix_seed, rng_for};
use crate::spectral::{
    dnorm_uniform_gap, track_eigenpairs, truncation_level, verify_hypothesis_a, EigenFamily,
    SpectralError, TailChainCertificate, TrackingOptions,
};
use crate::tunnel::TunnelError;
use crate::C64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("manifest field {field}: {message}")]
    Manifest { field: String, message: String },
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Metrical(#[from] MetricalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tunnel(#[from] TunnelError),
    #[error("lemma {lemma} failed: {witness}")]
    LemmaFailed { lemma: String, witness: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn field_err(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Manifest {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Explicit seeds; there is no ambient randomness.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
}

/// A raw operator family for desk-scale scenarios without a circle path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorFamilySpec {
    /// Constant diagonal operator.
    ConstantDiag { diag: Vec<f64> },
    /// Diagonal entries `start[i] + rate[i] * t`.
    LinearDiag { start: Vec<f64>, rate: Vec<f64> },
}

impl OperatorFamilySpec {
    pub fn dim(&self) -> usize {
        match self {
            OperatorFamilySpec::ConstantDiag { diag } => diag.len(),
            OperatorFamilySpec::LinearDiag { start, .. } => start.len(),
        }
    }

    pub fn operator(&self) -> impl Fn(f64) -> DMatrix<C64> + '_ {
        move |t: f64| match self {
            OperatorFamilySpec::ConstantDiag { diag } => {
                DMatrix::from_fn(diag.len(), diag.len(), |i, j| {
                    if i == j {
                        C64::new(diag[i], 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
            OperatorFamilySpec::LinearDiag { start, rate } => {
                DMatrix::from_fn(start.len(), start.len(), |i, j| {
                    if i == j {
                        C64::new(start[i] + rate[i] * t, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
        }
    }
}

/// The experiment manifest; see the crate README for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<OperatorFamilySpec>,
    #[serde(rename = "tGrid")]
    pub t_grid: Vec<f64>,
    #[serde(rename = "epsilonList")]
    pub epsilon_list: Vec<f64>,
    #[serde(rename = "gridSize", default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    pub seeds: Seeds,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub moduli: ContinuityModuli,
    /// Discretization used for the operator family of the pipeline. The
    /// spectral backend keeps the low spectrum free of folded branches.
    #[serde(default = "default_backend")]
    pub dirac_backend: DiracBackend,
    /// Extra small parameters prepended to the tracking grid so the
    /// schedule prefixes and truncation certificates resolve near zero.
    #[serde(default = "default_refinement")]
    pub tracking_refinement: Vec<f64>,
    #[serde(default)]
    pub sampling: CellSampling,
    #[serde(default)]
    pub ub: UbOptions,
    /// Vectors drawn per (epsilon, t) pair in the truncation lemma check.
    #[serde(default = "default_truncation_samples")]
    pub truncation_samples: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_backend() -> DiracBackend {
    DiracBackend::Spectral
}

fn default_refinement() -> Vec<f64> {
    vec![0.001, 0.002, 0.004, 0.008, 0.012, 0.016, 0.02]
}

fn default_truncation_samples() -> usize {
    1000
}

fn default_threads() -> usize {
    1
}

impl ExperimentManifest {
    pub fn from_json(json: &str) -> Result<Self, ExperimentError> {
        let manifest: ExperimentManifest =
            serde_json::from_str(json).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.scenario.is_empty() {
            return Err(field_err("scenario", "must be nonempty"));
        }
        match (&self.path, &self.family) {
            (None, None) => return Err(field_err("path", "either `path` or `family` is required")),
            (Some(_), Some(_)) => {
                return Err(field_err(
                    "path",
                    "`path` and `family` are mutually exclusive",
                ))
            }
            _ => {}
        }
        if self.t_grid.is_empty() {
            return Err(field_err("tGrid", "must be nonempty"));
        }
        for (i, &t) in self.t_grid.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(field_err(
                    &format!("tGrid[{i}]"),
                    format!("{t} outside (0, 1]"),
                ));
            }
            if i > 0 && t <= self.t_grid[i - 1] {
                return Err(field_err(
                    &format!("tGrid[{i}]"),
                    "grid must be strictly increasing",
                ));
            }
        }
        if self.epsilon_list.is_empty() {
            return Err(field_err("epsilonList", "must be nonempty"));
        }
        for (i, &e) in self.epsilon_list.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(field_err(
                    &format!("epsilonList[{i}]"),
                    format!("{e} outside (0, 1]"),
                ));
            }
        }
        if let Some(gs) = self.grid_size {
            if gs == 0 || gs % 2 != 0 {
                return Err(field_err(
                    "gridSize",
                    format!("{gs} must be even and positive"),
                ));
            }
        }
        for (i, &t) in self.tracking_refinement.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(field_err(
                    &format!("tracking_refinement[{i}]"),
                    format!("{t} outside (0, 1)"),
                ));
            }
        }
        if self.threads == 0 {
            return Err(field_err("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// Full tracking grid: `0`, the refinement points, and the parameter grid.
    pub fn tracking_grid(&self) -> Vec<f64> {
        let mut grid = vec![0.0];
        grid.extend_from_slice(&self.tracking_refinement);
        grid.extend_from_slice(&self.t_grid);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        grid
    }
}

/// Circle-side context shared by the pipelines.
pub struct CircleContext {
    pub path: PolyMetricPath,
    pub c_constant: f64,
    pub diam0: f64,
    /// Lipschitz seminorms of the geodesic metrics, by tracking-grid index.
    pub lips: BTreeMap<usize, LipschitzSeminorm>,
}

impl CircleContext {
    pub fn algebra_side(&self, grid_index: usize) -> AlgebraSide<'_> {
        AlgebraSide {
            lip_zero: &self.lips[&0],
            lip_t: &self.lips[&grid_index],
            hypothesis: TunnelHypothesis::LipschitzSandwich {
                c: self.c_constant,
                diam: self.diam0,
            },
        }
    }
}

/// The tracked family plus optional circle context.
pub struct Scenario {
    pub family: EigenFamily,
    pub circle: Option<CircleContext>,
    /// Tracking-grid indices of the manifest's parameter grid.
    pub cell_indices: Vec<usize>,
}

/// Build the operator family of a manifest and track its branches.
pub fn build_scenario(manifest: &ExperimentManifest) -> Result<Scenario, ExperimentError> {
    let grid = manifest.tracking_grid();
    let opts = TrackingOptions {
        tol: manifest.tolerances,
        moduli: manifest.moduli,
    };
    let (family, circle) = if let Some(spec) = &manifest.path {
        let spec = match manifest.grid_size {
            Some(gs) => spec.with_grid_size(gs),
            None => spec.clone(),
        };
        let path = spec.build()?;
        let backend = manifest.dirac_backend;
        let family = track_eigenpairs(
            |t| dirac_matrix(&path, t, backend).expect("valid path density"),
            &grid,
            &opts,
        )?;
        let c_constant = metric_deriv_constant(&path)?;
        let mut lips = BTreeMap::new();
        lips.insert(0usize, lip_seminorm(&path, 0.0)?);
        for &t in &manifest.t_grid {
            let gi = family.grid_index(t)?;
            lips.insert(gi, lip_seminorm(&path, t)?);
        }
        let diam0 = lips[&0].diameter();
        (
            family,
            Some(CircleContext {
                path,
                c_constant,
                diam0,
                lips,
            }),
        )
    } else {
        let spec = manifest.family.as_ref().expect("validated manifest");
        let family = track_eigenpairs(spec.operator(), &grid, &opts)?;
        (family, None)
    };
    let cell_indices = manifest
        .t_grid
        .iter()
        .map(|&t| family.grid_index(t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scenario {
        family,
        circle,
        cell_indices,
    })
}

/// One row of the lemma-check table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaRow {
    pub lemma: String,
    /// The lemma's own parameter (a tolerance, a threshold, or 0).
    pub param: f64,
    pub t: f64,
    pub sampled: f64,
    pub bound: f64,
    pub pass: bool,
    pub witness: String,
}

impl LemmaRow {
    fn new(
        lemma: &str,
        param: f64,
        t: f64,
        sampled: f64,
        bound: f64,
        witness: impl Into<String>,
    ) -> Self {
        Self {
            lemma: lemma.to_string(),
            param,
            t,
            sampled,
            bound,
            pass: sampled <= bound,
            witness: witness.into(),
        }
    }
}

/// Seeded unit graph-norm vectors, drawn directly in the branch-coefficient
/// frame at a grid point (the frame is unitary, so these are uniform-phase
/// random vectors of the model space with `DN_t = 1`).
fn unit_dn_coefficients(
    alphas: &[f64],
    count: usize,
    seed: u64,
    grid_index: usize,
) -> Vec<Vec<C64>> {
    let dim = alphas.len();
    let mut rng = rng_for(seed, 0x756e_6974 ^ grid_index as u64);
    (0..count)
        .map(|_| {
            let mut c: Vec<C64> = (0..dim)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let l2: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let d2: f64 = c
                .iter()
                .zip(alphas)
                .map(|(z, &a)| a * z.norm_sqr())
                .sum::<f64>()
                .sqrt();
            let dn = l2 + d2;
            for z in c.iter_mut() {
                *z /= C64::new(dn, 0.0);
            }
            c
        })
        .collect()
}

/// The lemma battery: truncation levels and defects, the tail-bound chain,
/// the graph-norm field gap, spectral-count stability, and (on circle
/// scenarios) the metric-derivative constant and the Lipschitz sandwich.
pub fn run_verify_lemmas(
    manifest: &ExperimentManifest,
    scenario: &Scenario,
) -> Result<Vec<LemmaRow>, ExperimentError> {
    let family = &scenario.family;
    let tol = &manifest.tolerances;
    let seed = manifest.seeds.master;
    let mut rows = Vec::new();

    for &eps in &manifest.epsilon_list {
        let trunc = truncation_level(family, eps, None, tol)?;
        rows.push(LemmaRow::new(
            "constant_N",
            eps,
            trunc.delta_t,
            0.0,
            if trunc.delta_index >= 1 { 1.0 } else { -1.0 },
            format!(
                "Lambda={}, N={}, margin_above={:.3e}",
                trunc.lambda, trunc.level, trunc.margin_above
            ),
        ));

        // uniform truncation and the tail chain at up to five certified points
        let mut checked = 0usize;
        for gi in 1..=trunc.delta_index {
            if checked >= 5 {
                break;
            }
            checked += 1;
            let t = family.grid()[gi];
            let alphas = family.alphas_at(gi);
            let vectors = unit_dn_coefficients(
                &alphas,
                manifest.truncation_samples,
                mix_seed(seed, gi as u64),
                gi,
            );
            let mut worst_defect = 0.0f64;
            let mut worst_chain = f64::NEG_INFINITY;
            for coeffs in &vectors {
                let defect: f64 = coeffs
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| *n > trunc.level)
                    .map(|(_, z)| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                worst_defect = worst_defect.max(defect);
                let cert = TailChainCertificate::evaluate_coeffs(&alphas, trunc.level, eps, coeffs);
                for (_, lhs, rhs) in cert.inequalities() {
                    worst_chain = worst_chain.max(lhs - rhs);
                }
            }
            rows.push(LemmaRow::new(
                "uniform_truncation",
                eps,
                t,
                worst_defect,
                eps + tol.cert,
                format!("{} unit vectors, N={}", vectors.len(), trunc.level),
            ));
            rows.push(LemmaRow::new(
                "abel_chain",
                eps,
                t,
                worst_chain,
                tol.cert,
                "worst intermediate inequality gap",
            ));
        }

        // graph-norm field convergence on the kept branches
        if trunc.level > 0 {
            let level = trunc.level.min(family.branches() - 1);
            let gaps = dnorm_uniform_gap(family, level, 1.0, mix_seed(seed, 0x6761_70), 64)?;
            let mut worst = f64::NEG_INFINITY;
            for row in &gaps {
                worst = worst.max(row.sampled - row.analytic);
            }
            rows.push(LemmaRow::new(
                "dnorm_field",
                eps,
                family.grid()[family.grid().len() - 1],
                worst,
                tol.cert,
                "sampled gap minus analytic bound, all grid t",
            ));
            let first_positive = &gaps[1.min(gaps.len() - 1)];
            rows.push(LemmaRow::new(
                "dnorm_field_limit",
                eps,
                first_positive.t,
                first_positive.sampled,
                gaps.last().unwrap().sampled + eps / 6.0 + tol.cert,
                "gap at the first positive grid point",
            ));
        }
    }

    // spectral-count stability for thresholds away from the spectrum
    let lambda_probe: Vec<f64> = manifest
        .epsilon_list
        .iter()
        .map(|&e| (8.0 / (e * e)).sqrt() * 1.001)
        .collect();
    match verify_hypothesis_a(family, &lambda_probe, tol) {
        Ok(checks) => {
            for check in checks {
                rows.push(LemmaRow::new(
                    "spectral_count",
                    check.lambda,
                    check.prefix_end_t,
                    0.0,
                    if check.prefix_end_index >= 1 {
                        1.0
                    } else {
                        -1.0
                    },
                    format!(
                        "count {} stable through index {}",
                        check.count_at_zero, check.prefix_end_index
                    ),
                ));
            }
        }
        Err(e) => {
            rows.push(LemmaRow::new(
                "spectral_count",
                0.0,
                0.0,
                1.0,
                0.0,
                format!("{e}"),
            ));
        }
    }

    if let Some(circle) = &scenario.circle {
        rows.push(LemmaRow::new(
            "diff_poly_path",
            circle.c_constant,
            1.0,
            0.0,
            1.0,
            format!(
                "C = {} certified on the 11x11 parameter grid",
                circle.c_constant
            ),
        ));
        for &t in &manifest.t_grid {
            let (numeric, analytic) = lip_distance(&circle.path, t, circle.c_constant)?;
            rows.push(LemmaRow::new(
                "lipschitz_distance",
                t,
                t,
                numeric,
                analytic + tol.cert,
                "log-dilation of the identity map",
            ));
            let sandwich = geodesic_sandwich_violation(&circle.path, t, circle.c_constant)?;
            rows.push(LemmaRow::new(
                "geodesic_sandwich",
                t,
                t,
                sandwich,
                tol.cert,
                "worst violation over all grid pairs",
            ));
            let gi = family.grid_index(t)?;
            let seminorm = seminorm_sandwich_violation(
                circle,
                gi,
                t,
                mix_seed(seed, 0x7361_6e64 ^ gi as u64),
            )?;
            rows.push(LemmaRow::new(
                "seminorm_sandwich",
                t,
                t,
                seminorm,
                tol.cert,
                "distance functions and seeded random samples",
            ));
        }
    }

    Ok(rows)
}

/// Worst violation of
/// `d0 / (C t + 1) <= d_t <= (C t + 1) d0` over all grid pairs.
fn geodesic_sandwich_violation(
    path: &PolyMetricPath,
    t: f64,
    c: f64,
) -> Result<f64, ExperimentError> {
    let d0 = geodesic_space(path, 0.0)?;
    let dt = geodesic_space(path, t)?;
    let factor = c * t + 1.0;
    let n = path.grid_size();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(dt.dist(i, j) - factor * d0.dist(i, j));
            worst = worst.max(d0.dist(i, j) / factor - dt.dist(i, j));
        }
    }
    Ok(worst.max(0.0).min(f64::INFINITY))
}

/// Worst violation of the seminorm sandwich on a declared function sample.
fn seminorm_sandwich_violation(
    circle: &CircleContext,
    grid_index: usize,
    t: f64,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let lip0 = &circle.lips[&0];
    let lip_t = &circle.lips[&grid_index];
    let factor = circle.c_constant * t + 1.0;
    let n = lip0.space().len();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for k in 0..4 {
        let base = k * n / 4;
        samples.push((0..n).map(|i| lip0.space().dist(base, i)).collect());
    }
    let mut rng = rng_for(seed, 0);
    for _ in 0..8 {
        samples.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let mut worst = f64::NEG_INFINITY;
    for f in &samples {
        let l0 = lip0.eval(f)?;
        let lt = lip_t.eval(f)?;
        worst = worst.max(lt - factor * l0);
        worst = worst.max(l0 / factor - lt);
    }
    Ok(worst.max(0.0))
}

/// Deterministic parallel map: the output order is the input order no matter
/// how many worker threads run.
pub fn parallel_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let n = items.len();
    let mut results: Vec<Option<R>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<R>>> =
        results.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let value = f(&items[i]);
                **slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("computed slot"))
        .collect()
}

/// Certification table over the manifest's `(epsilon, t)` cells.
pub fn run_propinquity_table(
    manifest: &ExperimentManifest,
    scenario: &Scenario,
) -> Result<Vec<CellReport>, ExperimentError> {
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for (ti, _) in manifest.t_grid.iter().enumerate() {
        for (ei, _) in manifest.epsilon_list.iter().enumerate() {
            cells.push((ti, ei));
        }
    }
    let family = &scenario.family;
    let results = parallel_map(cells, manifest.threads, |&(ti, ei)| {
        let gi = scenario.cell_indices[ti];
        let eps = manifest.epsilon_list[ei];
        let algebra = scenario.circle.as_ref().map(|c| c.algebra_side(gi));
        let cell_seed = mix_seed(manifest.seeds.master, ((ei as u64) << 32) | ti as u64);
        certify_cell(
            family,
            gi,
            eps,
            algebra.as_ref(),
            &manifest.sampling,
            cell_seed,
            &manifest.tolerances,
        )
    });
    results.into_iter().map(|r| r.map_err(Into::into)).collect()
}

/// Per-parameter summary of the demo pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub t: f64,
    /// Sampled spectral-propinquity upper bound (bisection result).
    pub propinquity_bound: f64,
    pub lip_d: f64,
    pub lip_d_bound: f64,
    pub lip_propinquity_bound: f64,
}

/// End-to-end report of the continuity experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoReport {
    pub scenario: String,
    pub seeds: Seeds,
    pub c_constant: Option<f64>,
    pub diameter_zero: Option<f64>,
    pub parameters: Vec<ParameterSummary>,
    pub lemma_rows: Vec<LemmaRow>,
    pub cells: Vec<CellReport>,
    /// For each epsilon in the list, some parameter certifies below it.
    pub limit_zero_holds: bool,
    /// Bounds are nonincreasing as the parameter decreases.
    pub monotone_holds: bool,
    pub certified_cells: usize,
    pub total_cells: usize,
    pub all_checks_pass: bool,
}

/// Full pipeline: track, verify lemmas, certify the cell table, bisect the
/// per-parameter upper bound, and evaluate the Lipschitz side.
pub fn run_circle_demo(manifest: &ExperimentManifest) -> Result<DemoReport, ExperimentError> {
    let scenario = build_scenario(manifest)?;
    let lemma_rows = run_verify_lemmas(manifest, &scenario)?;
    let cells = run_propinquity_table(manifest, &scenario)?;

    let family = &scenario.family;
    // seed each bisection with the bracket the cell table already resolved
    let brackets: Vec<(f64, Option<f64>)> = manifest
        .t_grid
        .iter()
        .map(|&t| {
            let mut lo = 0.0f64;
            let mut hi: Option<f64> = None;
            for cell in cells.iter().filter(|c| (c.t - t).abs() < 1e-12) {
                if cell.certified {
                    hi = Some(hi.map_or(cell.epsilon, |h: f64| h.min(cell.epsilon)));
                } else {
                    lo = lo.max(cell.epsilon);
                }
            }
            if let Some(h) = hi {
                if lo >= h {
                    lo = 0.0;
                }
            }
            (lo, hi)
        })
        .collect();
    let ub_items: Vec<usize> = (0..manifest.t_grid.len()).collect();
    let ub_reports = parallel_map(ub_items, manifest.threads, |&ti| {
        let gi = scenario.cell_indices[ti];
        let algebra = scenario.circle.as_ref().map(|c| c.algebra_side(gi));
        spectral_propinquity_ub(
            family,
            gi,
            algebra.as_ref(),
            &manifest.sampling,
            &manifest.ub,
            Some(brackets[ti]),
            mix_seed(manifest.seeds.master, 0x7562 ^ ti as u64),
            &manifest.tolerances,
        )
    });

    let mut parameters = Vec::new();
    for (ti, report) in ub_reports.into_iter().enumerate() {
        let report = report?;
        let t = manifest.t_grid[ti];
        let (lip_d, lip_d_bound, lip_prop) = match &scenario.circle {
            Some(circle) => {
                let (numeric, analytic) = lip_distance(&circle.path, t, circle.c_constant)?;
                let gi = scenario.cell_indices[ti];
                let diam_t = circle.lips[&gi].diameter();
                (
                    numeric,
                    analytic,
                    propinquity_from_lipd(numeric, circle.diam0, diam_t),
                )
            }
            None => (0.0, 0.0, 0.0),
        };
        parameters.push(ParameterSummary {
            t,
            propinquity_bound: report.bound,
            lip_d,
            lip_d_bound,
            lip_propinquity_bound: lip_prop,
        });
    }

    // limit-zero: each epsilon in the list is beaten somewhere on the grid
    let limit_zero_holds = manifest
        .epsilon_list
        .iter()
        .all(|&eps| parameters.iter().any(|p| p.propinquity_bound < eps));
    // bounds nonincreasing as t decreases
    let monotone_holds = parameters
        .windows(2)
        .all(|w| w[0].propinquity_bound <= w[1].propinquity_bound + 1e-12);

    let certified_cells = cells.iter().filter(|c| c.certified).count();
    let lemmas_pass = lemma_rows.iter().all(|r| r.pass);
    let cell_contracts = cells.iter().filter(|c| c.certified).all(|c| {
        c.extent_sampled <= c.epsilon + manifest.tolerances.cert
            && c.reach_sampled <= c.reach_bound + manifest.tolerances.cert
            && (c.secondary_extent - 0.5 * c.epsilon).abs() <= manifest.tolerances.cert
            && c.modular_defect <= manifest.tolerances.cert
            && c.inner_defect <= manifest.tolerances.cert
    });
    let all_checks_pass = limit_zero_holds && monotone_holds && lemmas_pass && cell_contracts;

    Ok(DemoReport {
        scenario: manifest.scenario.clone(),
        seeds: manifest.seeds,
        c_constant: scenario.circle.as_ref().map(|c| c.c_constant),
        diameter_zero: scenario.circle.as_ref().map(|c| c.diam0),
        parameters,
        lemma_rows,
        cells,
        limit_zero_holds,
        monotone_holds,
        certified_cells,
        total_cells: manifest.t_grid.len() * manifest.epsilon_list.len(),
        all_checks_pass,
    })
}

/// `verify-lemmas` entry: lemma rows only, plus the schedule diagnostics.
pub fn run_lemma_pipeline(
    manifest: &ExperimentManifest,
) -> Result<(Vec<LemmaRow>, bool), ExperimentError> {
    let scenario = build_scenario(manifest)?;
    let mut rows = run_verify_lemmas(manifest, &scenario)?;
    // schedule prefixes at each epsilon, reported as lemma rows
    for &eps in &manifest.epsilon_list {
        let hypothesis = scenario
            .circle
            .as_ref()
            .map(|c| TunnelHypothesis::LipschitzSandwich {
                c: c.c_constant,
                diam: c.diam0,
            })
            .unwrap_or(TunnelHypothesis::Always);
        match delta_schedule(
            &scenario.family,
            eps,
            &hypothesis,
            None,
            &manifest.tolerances,
        ) {
            Ok(sched) => {
                for entry in &sched.entries {
                    rows.push(LemmaRow::new(
                        &format!("schedule_{}", entry.name),
                        eps,
                        entry.t,
                        0.0,
                        if entry.index >= 1 { 1.0 } else { -1.0 },
                        format!("prefix index {}, margin {:.3e}", entry.index, entry.margin),
                    ));
                }
            }
            Err(e) => {
                rows.push(LemmaRow::new(
                    "schedule",
                    eps,
                    0.0,
                    1.0,
                    0.0,
                    format!("{e}"),
                ));
            }
        }
    }
    let ok = rows.iter().all(|r| r.pass);
    Ok((rows, ok))
}

// ---------------------------------------------------------------------------
// output files
// ---------------------------------------------------------------------------

pub fn table_csv(cells: &[CellReport]) -> String {
    let mut out =
        String::from("t,epsilon,extent_sampled,extent_bound,reach_sampled,reach_bound,certified\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.t,
            c.epsilon,
            c.extent_sampled,
            c.extent_bound,
            c.reach_sampled,
            c.reach_bound,
            c.certified
        );
    }
    out
}

pub fn lemma_csv(rows: &[LemmaRow]) -> String {
    let mut out = String::from("lemma,param,t,sampled,bound,pass,witness\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},\"{}\"",
            r.lemma, r.param, r.t, r.sampled, r.bound, r.pass, r.witness
        );
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write `summary.json`, `table.csv` and `lemma_checks.csv` into `dir`.
pub fn write_outputs(dir: &Path, report: &DemoReport) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let summary = serde_json::to_string_pretty(report).expect("serializable report");
    write_file(dir, "summary.json", &summary)?;
    write_file(dir, "table.csv", &table_csv(&report.cells))?;
    write_file(dir, "lemma_checks.csv", &lemma_csv(&report.lemma_rows))?;
    Ok(())
}

/// Which pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    VerifyLemmas,
    Propinquity,
    CircleDemo,
}

/// The three deliverable documents of a run, plus its verdict.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ok: bool,
    pub summary_json: String,
    pub table_csv: String,
    pub lemma_csv: String,
}

#[derive(Serialize)]
struct LemmaSummary<'a> {
    scenario: &'a str,
    seeds: Seeds,
    rows: &'a [LemmaRow],
    all_pass: bool,
}

#[derive(Serialize)]
struct TableSummary<'a> {
    scenario: &'a str,
    seeds: Seeds,
    cells: &'a [CellReport],
    certified_cells: usize,
    total_cells: usize,
    all_certified: bool,
}

/// Execute one pipeline on a validated manifest. The output documents are a
/// pure function of the manifest, byte for byte.
pub fn execute(kind: RunKind, manifest: &ExperimentManifest) -> Result<RunOutput, ExperimentError> {
    match kind {
        RunKind::VerifyLemmas => {
            let (rows, ok) = run_lemma_pipeline(manifest)?;
            let summary = LemmaSummary {
                scenario: &manifest.scenario,
                seeds: manifest.seeds,
                rows: &rows,
                all_pass: ok,
            };
            Ok(RunOutput {
                ok,
                summary_json: serde_json::to_string_pretty(&summary).expect("serializable"),
                table_csv: table_csv(&[]),
                lemma_csv: lemma_csv(&rows),
            })
        }
        RunKind::Propinquity => {
            let scenario = build_scenario(manifest)?;
            let cells = run_propinquity_table(manifest, &scenario)?;
            let certified = cells.iter().filter(|c| c.certified).count();
            let ok = certified == cells.len();
            let summary = TableSummary {
                scenario: &manifest.scenario,
                seeds: manifest.seeds,
                cells: &cells,
                certified_cells: certified,
                total_cells: cells.len(),
                all_certified: ok,
            };
            Ok(RunOutput {
                ok,
                summary_json: serde_json::to_string_pretty(&summary).expect("serializable"),
                table_csv: table_csv(&cells),
                lemma_csv: lemma_csv(&[]),
            })
        }
        RunKind::CircleDemo => {
            let report = run_circle_demo(manifest)?;
            Ok(RunOutput {
                ok: report.all_checks_pass,
                summary_json: serde_json::to_string_pretty(&report).expect("serializable"),
                table_csv: table_csv(&report.cells),
                lemma_csv: lemma_csv(&report.lemma_rows),
            })
        }
    }
}

/// Write the run documents into `dir`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(dir, "summary.json", &output.summary_json)?;
    write_file(dir, "table.csv", &output.table_csv)?;
    write_file(dir, "lemma_checks.csv", &output.lemma_csv)?;
    Ok(())
}

/// Aggregate previously written run directories for plotting: merged cell
/// table with a source column, plus a combined JSON summary.
pub fn run_report(dirs: &[String], out_dir: &Path) -> Result<(), ExperimentError> {
    let mut merged = String::from(
        "source,t,epsilon,extent_sampled,extent_bound,reach_sampled,reach_bound,certified\n",
    );
    let mut summaries = Vec::new();
    for dir in dirs {
        let table_path = Path::new(dir).join("table.csv");
        let table = std::fs::read_to_string(&table_path).map_err(|source| ExperimentError::Io {
            path: table_path.display().to_string(),
            source,
        })?;
        for line in table.lines().skip(1) {
            let _ = writeln!(merged, "{dir},{line}");
        }
        let summary_path = Path::new(dir).join("summary.json");
        let summary =
            std::fs::read_to_string(&summary_path).map_err(|source| ExperimentError::Io {
                path: summary_path.display().to_string(),
                source,
            })?;
        let value: serde_json::Value =
            serde_json::from_str(&summary).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        summaries.push(serde_json::json!({ "source": dir, "summary": value }));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_file(out_dir, "table.csv", &merged)?;
    let combined = serde_json::to_string_pretty(&serde_json::json!({ "runs": summaries }))
        .expect("serializable aggregate");
    write_file(out_dir, "summary.json", &combined)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_manifest() -> ExperimentManifest {
        ExperimentManifest {
            scenario: "toy".into(),
            path: None,
            family: Some(OperatorFamilySpec::ConstantDiag {
                diag: vec![0.5, 1.5, 6.0, 7.0],
            }),
            t_grid: vec![0.5, 1.0],
            epsilon_list: vec![1.0],
            grid_size: None,
            seeds: Seeds { master: 7 },
            tolerances: Tolerances::default(),
            moduli: ContinuityModuli::default(),
            dirac_backend: DiracBackend::Spectral,
            tracking_refinement: vec![0.1],
            sampling: CellSampling::default(),
            ub: UbOptions {
                eps_max: 1.0,
                resolution: 0.25,
                max_iterations: 4,
            },
            truncation_samples: 50,
            threads: 1,
        }
    }

    #[test]
    fn manifest_validation_names_the_field() {
        let mut m = toy_manifest();
        m.t_grid = vec![0.5, 1.5];
        let err = m.validate().unwrap_err();
        let text = format!("{err}");
        assert!(text.contains("tGrid[1]"), "{text}");
        assert!(text.contains("1.5"), "{text}");
    }

    #[test]
    fn manifest_requires_exactly_one_source() {
        let mut m = toy_manifest();
        m.family = None;
        assert!(m.validate().is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let json = r#"{
            "scenario": "demo",
            "path": {"gridSize": 16, "conformal": {"base": 1.0, "factor": 0.5}},
            "tGrid": [0.1, 0.2],
            "epsilonList": [0.5],
            "seeds": {"master": 11}
        }"#;
        let m = ExperimentManifest::from_json(json).unwrap();
        assert_eq!(m.scenario, "demo");
        assert_eq!(m.tracking_grid()[0], 0.0);
        assert!(m.tracking_grid().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_family_lemmas_pass() {
        let m = toy_manifest();
        let (rows, ok) = run_lemma_pipeline(&m).unwrap();
        assert!(
            ok,
            "failing rows: {:?}",
            rows.iter().filter(|r| !r.pass).collect::<Vec<_>>()
        );
    }

    #[test]
    fn parallel_map_is_order_stable() {
        let items: Vec<usize> = (0..50).collect();
        let seq = parallel_map(items.clone(), 1, |&x| x * x);
        let par = parallel_map(items, 4, |&x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn toy_demo_is_deterministic() {
        let m = toy_manifest();
        let a = run_circle_demo(&m).unwrap();
        let b = run_circle_demo(&m).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(table_csv(&a.cells), table_csv(&b.cells));
    }
}
