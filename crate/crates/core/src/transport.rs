//! Primal simplex on the transport polytope.
//!
//! Solves
//! ```text
//!   minimize    sum_ij c[i][j] x[i][j]
//!   subject to  sum_j x[i][j] = a[i],   sum_i x[i][j] = b[j],   x >= 0
//! ```
//! with a northwest-corner starting basis and Bland's rule for both the
//! entering and the leaving variable, so the pivot sequence is deterministic
//! and cannot cycle. The solver is generic over the scalar, which gives an
//! exact variant over arbitrary-precision rationals for small oracle
//! instances next to the fast `f64` path.

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

/// Scalar admissible for the simplex pivoting.
pub trait LpScalar: Clone + PartialOrd {
    fn lp_zero() -> Self;
    /// True when a reduced cost is negative enough to enter the basis.
    fn is_entering(&self) -> bool;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
}

impl LpScalar for f64 {
    fn lp_zero() -> Self {
        0.0
    }
    fn is_entering(&self) -> bool {
        // Strictly negative beyond rounding noise on O(1) metric costs.
        *self < -1e-12
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

impl LpScalar for BigRational {
    fn lp_zero() -> Self {
        BigRational::zero()
    }
    fn is_entering(&self) -> bool {
        *self < BigRational::zero()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("empty marginal: transport requires at least one source and one sink")]
    EmptyMarginal,
    #[error("cost matrix has {rows} rows, expected {expected}")]
    CostRows { rows: usize, expected: usize },
    #[error("cost row {row} has {cols} entries, expected {expected}")]
    CostCols {
        row: usize,
        cols: usize,
        expected: usize,
    },
    #[error("simplex exceeded {0} pivots without reaching optimality")]
    PivotLimit(usize),
}

/// Optimal transport plan together with the simplex dual multipliers.
#[derive(Debug, Clone)]
pub struct TransportSolution<S> {
    /// Optimal objective value.
    pub cost: S,
    /// Basic cells `(i, j, mass)` of the optimal plan (may contain zero masses).
    pub plan: Vec<(usize, usize, S)>,
    /// Row potentials, normalized so `u[0] = 0`.
    pub row_potential: Vec<S>,
    /// Column potentials.
    pub col_potential: Vec<S>,
}

struct Tableau<S> {
    m: usize,
    n: usize,
    // basic cells as parallel arrays
    cells: Vec<(usize, usize)>,
    mass: Vec<S>,
}

impl<S: LpScalar> Tableau<S> {
    /// Northwest-corner starting basis: exactly `m + n - 1` basic cells
    /// forming a spanning tree of the bipartite incidence graph.
    fn northwest(a: &[S], b: &[S]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut mass = Vec::with_capacity(m + n - 1);
        let mut rem_a = a.to_vec();
        let mut rem_b = b.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let take = if rem_a[i] < rem_b[j] {
                rem_a[i].clone()
            } else {
                rem_b[j].clone()
            };
            cells.push((i, j));
            mass.push(take.clone());
            rem_a[i] = rem_a[i].sub(&take);
            rem_b[j] = rem_b[j].sub(&take);
            if i + 1 == m && j + 1 == n {
                break;
            }
            // advance a single pointer; ties advance the row, which keeps the
            // basis a tree through degenerate (zero) allocations
            if rem_a[i] <= S::lp_zero() && i + 1 < m {
                i += 1;
            } else {
                j += 1;
            }
        }
        Tableau { m, n, cells, mass }
    }

    /// Potentials from the basis tree: `u[i] + v[j] = c[i][j]` on basic cells.
    fn potentials(&self, cost: &[Vec<S>]) -> (Vec<S>, Vec<S>) {
        let mut u: Vec<Option<S>> = vec![None; self.m];
        let mut v: Vec<Option<S>> = vec![None; self.n];
        // adjacency over tree nodes: rows 0..m, cols m..m+n
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push(k);
            adj[self.m + j].push(k);
        }
        u[0] = Some(S::lp_zero());
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &k in &adj[node] {
                let (i, j) = self.cells[k];
                match (u[i].clone(), v[j].clone()) {
                    (Some(ui), None) => {
                        v[j] = Some(cost[i][j].sub(&ui));
                        stack.push(self.m + j);
                    }
                    (None, Some(vj)) => {
                        u[i] = Some(cost[i][j].sub(&vj));
                        stack.push(i);
                    }
                    _ => {}
                }
            }
        }
        (
            u.into_iter()
                .map(|x| x.expect("basis spans rows"))
                .collect(),
            v.into_iter()
                .map(|x| x.expect("basis spans cols"))
                .collect(),
        )
    }

    /// Unique path in the basis tree from row `i0` to column `j0`, as basic
    /// cell indices. The entering cell closes this path into the pivot cycle.
    fn tree_path(&self, i0: usize, j0: usize) -> Vec<usize> {
        let nodes = self.m + self.n;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes]; // (cell, other node)
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((k, self.m + j));
            adj[self.m + j].push((k, i));
        }
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes]; // (node, via cell)
        let mut seen = vec![false; nodes];
        seen[i0] = true;
        let mut queue = std::collections::VecDeque::from([i0]);
        while let Some(node) = queue.pop_front() {
            if node == self.m + j0 {
                break;
            }
            for &(k, other) in &adj[node] {
                if !seen[other] {
                    seen[other] = true;
                    prev[other] = Some((node, k));
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = self.m + j0;
        while let Some((parent, k)) = prev[node] {
            path.push(k);
            node = parent;
        }
        path.reverse();
        path
    }
}

/// Solve the balanced transport problem. Marginals must be nonnegative with
/// equal total mass; the caller is responsible for that contract.
pub fn solve_transport<S: LpScalar>(
    cost: &[Vec<S>],
    a: &[S],
    b: &[S],
) -> Result<TransportSolution<S>, TransportError> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(TransportError::EmptyMarginal);
    }
    if cost.len() != m {
        return Err(TransportError::CostRows {
            rows: cost.len(),
            expected: m,
        });
    }
    for (row, r) in cost.iter().enumerate() {
        if r.len() != n {
            return Err(TransportError::CostCols {
                row,
                cols: r.len(),
                expected: n,
            });
        }
    }

    let mut tab = Tableau::northwest(a, b);
    let pivot_limit = 1000 * (m + 1) * (n + 1);
    for _ in 0..pivot_limit {
        let (u, v) = tab.potentials(cost);

        // Bland: first cell in row-major order with negative reduced cost.
        let mut entering = None;
        'outer: for i in 0..m {
            for j in 0..n {
                if tab.cells.contains(&(i, j)) {
                    continue;
                }
                let reduced = cost[i][j].sub(&u[i]).sub(&v[j]);
                if reduced.is_entering() {
                    entering = Some((i, j));
                    break 'outer;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let mut costval = S::lp_zero();
            for (k, &(i, j)) in tab.cells.iter().enumerate() {
                costval = costval.add(&tab.mass[k].mul(&cost[i][j]));
            }
            let plan = tab
                .cells
                .iter()
                .zip(tab.mass.iter())
                .map(|(&(i, j), x)| (i, j, x.clone()))
                .collect();
            return Ok(TransportSolution {
                cost: costval,
                plan,
                row_potential: u,
                col_potential: v,
            });
        };

        // Pivot cycle: entering cell (+), then alternate -,+ along the tree path.
        let path = tab.tree_path(ei, ej);
        let minus: Vec<usize> = path.iter().step_by(2).cloned().collect();
        let plus: Vec<usize> = path.iter().skip(1).step_by(2).cloned().collect();

        // theta = min mass over minus cells; leaving = Bland tie-break on cell index
        let mut theta: Option<S> = None;
        let mut leaving = usize::MAX;
        let mut leaving_key = usize::MAX;
        for &k in &minus {
            let key = {
                let (i, j) = tab.cells[k];
                i * n + j
            };
            let better = match &theta {
                None => true,
                Some(t) => tab.mass[k] < *t || (tab.mass[k] == *t && key < leaving_key),
            };
            if better {
                theta = Some(tab.mass[k].clone());
                leaving = k;
                leaving_key = key;
            }
        }
        let theta = theta.expect("pivot cycle has a leaving candidate");

        for &k in &minus {
            tab.mass[k] = tab.mass[k].sub(&theta);
        }
        for &k in &plus {
            tab.mass[k] = tab.mass[k].add(&theta);
        }
        tab.cells[leaving] = (ei, ej);
        tab.mass[leaving] = theta;
    }
    Err(TransportError::PivotLimit(pivot_limit))
}

/// Convenience alias for the `f64` path.
pub fn transport_cost(
    cost: &[Vec<f64>],
    a: &[f64],
    b: &[f64],
) -> Result<TransportSolution<f64>, TransportError> {
    solve_transport(cost, a, b)
}
