//! Finite metric spaces, Lipschitz seminorms, states and the
//! Monge-Kantorovich distance.
//!
//! This is the metric substrate every extent computation stands on. All
//! quantities are plain `f64`; the exact rational route for small oracle
//! instances lives in [`mk_distance_rational`].

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::{solve_transport, transport_cost, TransportError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("distance matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("distance matrix is empty")]
    Empty,
    #[error("non-finite distance at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("asymmetry at ({i}, {j}): {a} != {b}")]
    Asymmetry { i: usize, j: usize, a: f64, b: f64 },
    #[error("negative entry at ({i}, {j}): {value}")]
    NegativeEntry { i: usize, j: usize, value: f64 },
    #[error("nonzero diagonal at ({i}, {i}): {value}")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("zero distance between distinct points ({i}, {j})")]
    ZeroOffDiagonal { i: usize, j: usize },
    #[error("triangle violation: d({i},{j}) > d({i},{k}) + d({k},{j})")]
    TriangleViolation { i: usize, j: usize, k: usize },
    #[error("state has negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("state weights sum to {sum}, expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("dimension mismatch: state has {state} weights, space has {space} points")]
    DimensionMismatch { state: usize, space: usize },
    #[error("function has {len} values, space has {space} points")]
    FunctionLength { len: usize, space: usize },
    #[error("empty input set for Hausdorff distance")]
    EmptySet,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// A finite metric space: ordered point labels and a validated distance matrix.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    generators: OnceLock<Vec<(usize, usize, f64)>>,
}

/// Validate the metric axioms and wrap the matrix.
///
/// Violations are reported with the offending indices, first one found in
/// row-major scan order: squareness, finiteness, symmetry, nonnegativity,
/// zero diagonal, positivity off the diagonal, triangle inequality.
pub fn validate_metric(dist: Vec<Vec<f64>>) -> Result<FiniteMetricSpace, MetricError> {
    FiniteMetricSpace::new(dist)
}

impl FiniteMetricSpace {
    pub fn new(dist: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let n = dist.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        for (row, r) in dist.iter().enumerate() {
            if r.len() != n {
                return Err(MetricError::NotSquare {
                    row,
                    len: r.len(),
                    expected: n,
                });
            }
        }
        for (i, row) in dist.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() {
                    return Err(MetricError::NonFinite { i, j });
                }
                if (d - dist[j][i]).abs() > 1e-9 * (1.0 + d.abs()) {
                    return Err(MetricError::Asymmetry {
                        i,
                        j,
                        a: d,
                        b: dist[j][i],
                    });
                }
                if d < 0.0 {
                    return Err(MetricError::NegativeEntry { i, j, value: d });
                }
                if i == j && d != 0.0 {
                    return Err(MetricError::NonzeroDiagonal { i, value: d });
                }
                if i != j && d == 0.0 {
                    return Err(MetricError::ZeroOffDiagonal { i, j });
                }
            }
        }
        let scale: f64 = dist
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, &d| m.max(d));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i][j] > dist[i][k] + dist[k][j] + 1e-9 * (1.0 + scale) {
                        return Err(MetricError::TriangleViolation { i, j, k });
                    }
                }
            }
        }
        Ok(Self::trusted(dist))
    }

    /// Wrap a matrix that is a metric by construction (shortest-path closures,
    /// scaled copies of validated spaces). Skips the cubic triangle scan.
    pub fn trusted(dist: Vec<Vec<f64>>) -> Self {
        let labels = (0..dist.len()).map(|i| format!("p{i}")).collect();
        Self {
            labels,
            dist,
            generators: OnceLock::new(),
        }
    }

    /// Shortest-path metric of a positively weighted undirected graph.
    ///
    /// The graph must be connected; edges are `(i, j, w)` with `w > 0`.
    pub fn from_graph(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        for (src, row) in dist.iter_mut().enumerate() {
            dijkstra_into(&adj, src, row);
        }
        Self::trusted(dist)
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn matrix(&self) -> &Vec<Vec<f64>> {
        &self.dist
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<String>) {
        assert_eq!(labels.len(), self.dist.len());
        self.labels = labels;
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, &d| m.max(d))
    }

    /// Minimal generating edges: pairs whose distance is not realized through
    /// any intermediate point. The shortest-path closure of these edges
    /// reproduces the metric, which keeps union-graph constructions sparse.
    pub fn generator_edges(&self) -> &[(usize, usize, f64)] {
        self.generators.get_or_init(|| {
            let n = self.dist.len();
            let scale = self.diameter();
            let tol = 1e-12 * (1.0 + scale);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = self.dist[i][j];
                    let decomposable = (0..n)
                        .any(|k| k != i && k != j && self.dist[i][k] + self.dist[k][j] <= d + tol);
                    if !decomposable {
                        edges.push((i, j, d));
                    }
                }
            }
            edges
        })
    }
}

fn dijkstra_into(adj: &[Vec<(usize, f64)>], src: usize, out: &mut [f64]) {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // reversed for a min-heap; distances are finite and comparable
            other
                .0
                .partial_cmp(&self.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(other.1.cmp(&self.1))
        }
    }
    for d in out.iter_mut() {
        *d = f64::INFINITY;
    }
    out[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, src));
    while let Some(Item(d, v)) = heap.pop() {
        if d > out[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < out[w] {
                out[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
}

/// The Lipschitz seminorm of real-valued functions on a finite metric space:
/// `Lip(f) = max_{i != j} |f(i) - f(j)| / d(i, j)`.
#[derive(Debug, Clone)]
pub struct LipschitzSeminorm {
    space: FiniteMetricSpace,
}

impl LipschitzSeminorm {
    pub fn new(space: FiniteMetricSpace) -> Self {
        Self { space }
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.space
    }

    pub fn eval(&self, f: &[f64]) -> Result<f64, MetricError> {
        let n = self.space.len();
        if f.len() != n {
            return Err(MetricError::FunctionLength {
                len: f.len(),
                space: n,
            });
        }
        let mut lip = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                lip = lip.max((f[i] - f[j]).abs() / self.space.dist(i, j));
            }
        }
        Ok(lip)
    }

    /// `qdiam`: for a finite commutative space this is the metric diameter.
    pub fn diameter(&self) -> f64 {
        self.space.diameter()
    }
}

/// Quantum-metric diameter of the seminorm's underlying space.
pub fn diameter(lip: &LipschitzSeminorm) -> f64 {
    lip.diameter()
}

/// A state: a probability vector over the points of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    weights: Vec<f64>,
}

impl State {
    pub fn new(weights: Vec<f64>) -> Result<Self, MetricError> {
        for (index, &w) in weights.iter().enumerate() {
            if w < 0.0 {
                return Err(MetricError::NegativeWeight { index, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        let tol = 1e-12;
        if (sum - 1.0).abs() > tol {
            return Err(MetricError::NotNormalized { sum, tol });
        }
        Ok(Self { weights })
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Self { weights }
    }

    pub fn midpoint(a: &State, b: &State) -> Self {
        let weights = a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Monge-Kantorovich distance between two states, with its dual certificate.
#[derive(Debug, Clone)]
pub struct MkSolution {
    /// The optimal transport cost, equal to `sup { phi(f) - psi(f) : Lip(f) <= 1 }`.
    pub value: f64,
    /// A 1-Lipschitz potential realizing the optimum, defined on every point.
    pub potential: Vec<f64>,
}

/// Monge-Kantorovich (Wasserstein-1) distance under a Lipschitz seminorm,
/// by the linear-programming formulation on the transport polytope.
pub fn mk_distance(
    phi: &State,
    psi: &State,
    lip: &LipschitzSeminorm,
) -> Result<MkSolution, MetricError> {
    let n = lip.space().len();
    if phi.len() != n {
        return Err(MetricError::DimensionMismatch {
            state: phi.len(),
            space: n,
        });
    }
    if psi.len() != n {
        return Err(MetricError::DimensionMismatch {
            state: psi.len(),
            space: n,
        });
    }
    let supp_a = phi.support();
    let supp_b = psi.support();
    let a: Vec<f64> = supp_a.iter().map(|&i| phi.weights[i]).collect();
    let b: Vec<f64> = supp_b.iter().map(|&j| psi.weights[j]).collect();
    let cost: Vec<Vec<f64>> = supp_a
        .iter()
        .map(|&i| supp_b.iter().map(|&j| lip.space().dist(i, j)).collect())
        .collect();
    let sol = transport_cost(&cost, &a, &b)?;

    // Kantorovich potential: c-transform of the column multipliers, extended
    // to the whole space. It is 1-Lipschitz as a minimum of 1-Lipschitz maps.
    let mut potential = vec![0.0; n];
    for (x, p) in potential.iter_mut().enumerate() {
        *p = supp_b
            .iter()
            .zip(&sol.col_potential)
            .map(|(&s, v)| lip.space().dist(x, s) - v)
            .fold(f64::INFINITY, f64::min);
    }
    let shift = potential[0];
    for p in potential.iter_mut() {
        *p -= shift;
    }
    Ok(MkSolution {
        value: sol.cost,
        potential,
    })
}

/// Exact Monge-Kantorovich distance over rationals, for small oracle instances.
///
/// `dist` must be a rational metric matrix; marginals must be nonnegative
/// rationals of total mass one. No validation beyond shape is performed.
pub fn mk_distance_rational(
    dist: &[Vec<BigRational>],
    phi: &[BigRational],
    psi: &[BigRational],
) -> Result<BigRational, MetricError> {
    let supp_a: Vec<usize> = (0..phi.len()).filter(|&i| !phi[i].is_zero()).collect();
    let supp_b: Vec<usize> = (0..psi.len()).filter(|&j| !psi[j].is_zero()).collect();
    let a: Vec<BigRational> = supp_a.iter().map(|&i| phi[i].clone()).collect();
    let b: Vec<BigRational> = supp_b.iter().map(|&j| psi[j].clone()).collect();
    let cost: Vec<Vec<BigRational>> = supp_a
        .iter()
        .map(|&i| supp_b.iter().map(|&j| dist[i][j].clone()).collect())
        .collect();
    let sol = solve_transport(&cost, &a, &b)?;
    Ok(sol.cost)
}

/// Hausdorff distance between two nonempty finite sets under a pairwise
/// distance rule: the max of the two directed sup-inf distances.
pub fn hausdorff_distance<T>(
    a: &[T],
    b: &[T],
    mut metric: impl FnMut(&T, &T) -> f64,
) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let directed = |from: &[T], to: &[T], metric: &mut dyn FnMut(&T, &T) -> f64| -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| metric(x, y))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    let ab = directed(a, b, &mut metric);
    let ba = directed(b, a, &mut metric);
    Ok(ab.max(ba))
}

/// JSON ingestion document: a distance matrix plus optional states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricDocument {
    pub dist: Vec<Vec<f64>>,
    #[serde(default)]
    pub states: Vec<Vec<f64>>,
}

impl MetricDocument {
    pub fn parse(json: &str) -> Result<(FiniteMetricSpace, Vec<State>), MetricError> {
        let doc: MetricDocument = serde_json::from_str(json).map_err(|_| MetricError::Empty)?;
        doc.build()
    }

    pub fn build(self) -> Result<(FiniteMetricSpace, Vec<State>), MetricError> {
        let space = validate_metric(self.dist)?;
        let states = self
            .states
            .into_iter()
            .map(|w| {
                let s = State::new(w)?;
                if s.len() != space.len() {
                    return Err(MetricError::DimensionMismatch {
                        state: s.len(),
                        space: space.len(),
                    });
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((space, states))
    }
}

/// How a reported value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lp,
    Sampled,
}

/// Emission record for a single distance computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MkReport {
    pub value: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
}

impl MkReport {
    pub fn lp(sol: &MkSolution) -> Self {
        Self {
            value: sol.value,
            method: Method::Lp,
            certificate: Some(sol.potential.clone()),
        }
    }

    pub fn sampled(value: f64) -> Self {
        Self {
            value,
            method: Method::Sampled,
            certificate: None,
        }
    }
}

/// Arc-length circle grid: `n` equally spaced points, distances along the
/// shorter arc of a total circumference `2*pi*radius`.
pub fn circle_grid(n: usize, radius: f64) -> FiniteMetricSpace {
    let step = 2.0 * std::f64::consts::PI * radius / n as f64;
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let k = (i as isize - j as isize).unsigned_abs();
            let arc = k.min(n - k);
            dist[i][j] = arc as f64 * step;
        }
    }
    FiniteMetricSpace::trusted(dist)
}
