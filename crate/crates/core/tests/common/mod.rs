//! Shared test oracles, independent of the library's solver paths.

use num_rational::BigRational;
use num_traits::Zero;

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().expect("finite rational")
}

/// A rational transport instance: metric, source and sink marginals.
#[derive(Clone)]
pub struct TransportInstance {
    pub dist: Vec<Vec<BigRational>>,
    pub a: Vec<BigRational>,
    pub b: Vec<BigRational>,
}

impl TransportInstance {
    pub fn dist_f64(&self) -> Vec<Vec<f64>> {
        self.dist
            .iter()
            .map(|row| row.iter().map(to_f64).collect())
            .collect()
    }
    pub fn a_f64(&self) -> Vec<f64> {
        self.a.iter().map(to_f64).collect()
    }
    pub fn b_f64(&self) -> Vec<f64> {
        self.b.iter().map(to_f64).collect()
    }
}

/// Exact brute-force optimal transport by enumerating every forest-supported
/// basic solution of the transport polytope. Vertices of the polytope are
/// supported on forests of the bipartite incidence graph, so the minimum
/// over all feasible forest solutions is the exact optimum.
pub fn transport_oracle(
    cost: &[Vec<BigRational>],
    a: &[BigRational],
    b: &[BigRational],
) -> BigRational {
    let m = a.len();
    let n = b.len();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let max_cells = m + n - 1;
    assert!(cells.len() <= 20, "oracle is for tiny instances only");
    let mut best: Option<BigRational> = None;
    for mask in 0u32..(1 << cells.len()) {
        if (mask.count_ones() as usize) > max_cells {
            continue;
        }
        let subset: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &c)| c)
            .collect();
        if let Some(cost_val) = solve_forest(&subset, cost, a, b) {
            best = match best {
                None => Some(cost_val),
                Some(prev) => Some(prev.min(cost_val)),
            };
        }
    }
    best.expect("balanced instance has a feasible forest")
}

/// Solve the flow-conservation system on a candidate support by leaf
/// elimination; `None` when the support is cyclic, disconnected from demand,
/// or forces a negative mass.
fn solve_forest(
    subset: &[(usize, usize)],
    cost: &[Vec<BigRational>],
    a: &[BigRational],
    b: &[BigRational],
) -> Option<BigRational> {
    let m = a.len();
    let n = b.len();
    let mut rem: Vec<BigRational> = a.iter().chain(b.iter()).cloned().collect();
    let mut alive: Vec<bool> = vec![true; subset.len()];
    let mut degree = vec![0usize; m + n];
    for &(i, j) in subset {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut total = BigRational::zero();
    let mut remaining = subset.len();
    loop {
        let mut progressed = false;
        for k in 0..subset.len() {
            if !alive[k] {
                continue;
            }
            let (i, j) = subset[k];
            let leaf = if degree[i] == 1 {
                Some(i)
            } else if degree[m + j] == 1 {
                Some(m + j)
            } else {
                None
            };
            let Some(node) = leaf else { continue };
            let mass = rem[node].clone();
            if mass < BigRational::zero() {
                return None;
            }
            // the edge carries the leaf's whole remaining mass
            rem[i] -= &mass;
            rem[m + j] -= &mass;
            total += mass * &cost[i][j];
            alive[k] = false;
            degree[i] -= 1;
            degree[m + j] -= 1;
            remaining -= 1;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    if remaining > 0 {
        return None; // cyclic support
    }
    if rem.iter().any(|r| !r.is_zero()) {
        return None; // disconnected component with unmet demand
    }
    Some(total)
}

/// Exhaustive directed Hausdorff oracle.
pub fn hausdorff_oracle(pair: &[Vec<f64>]) -> f64 {
    // pair[x][y] = d(a_x, b_y); max of the two sup-inf directions
    let sup_inf_rows = pair
        .iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let cols = pair[0].len();
    let sup_inf_cols = (0..cols)
        .map(|j| pair.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    sup_inf_rows.max(sup_inf_cols)
}

/// The rational instance corpus: every hand-built case has at most four
/// points and rational data.
pub fn corpus() -> Vec<TransportInstance> {
    let mut out = Vec::new();
    // two points, point masses
    out.push(TransportInstance {
        dist: vec![vec![rat(0, 1), rat(1, 1)], vec![rat(1, 1), rat(0, 1)]],
        a: vec![rat(1, 1), rat(0, 1)],
        b: vec![rat(0, 1), rat(1, 1)],
    });
    // two points, mixed
    out.push(TransportInstance {
        dist: vec![vec![rat(0, 1), rat(3, 2)], vec![rat(3, 2), rat(0, 1)]],
        a: vec![rat(3, 4), rat(1, 4)],
        b: vec![rat(1, 8), rat(7, 8)],
    });
    // three-point path metric
    out.push(TransportInstance {
        dist: vec![
            vec![rat(0, 1), rat(1, 1), rat(2, 1)],
            vec![rat(1, 1), rat(0, 1), rat(1, 1)],
            vec![rat(2, 1), rat(1, 1), rat(0, 1)],
        ],
        a: vec![rat(1, 1), rat(0, 1), rat(0, 1)],
        b: vec![rat(1, 2), rat(0, 1), rat(1, 2)],
    });
    // three points, uneven metric, denominators up to 8
    out.push(TransportInstance {
        dist: vec![
            vec![rat(0, 1), rat(5, 8), rat(7, 8)],
            vec![rat(5, 8), rat(0, 1), rat(1, 2)],
            vec![rat(7, 8), rat(1, 2), rat(0, 1)],
        ],
        a: vec![rat(3, 8), rat(3, 8), rat(2, 8)],
        b: vec![rat(1, 8), rat(2, 8), rat(5, 8)],
    });
    // four points on a cycle
    out.push(TransportInstance {
        dist: vec![
            vec![rat(0, 1), rat(1, 1), rat(2, 1), rat(1, 1)],
            vec![rat(1, 1), rat(0, 1), rat(1, 1), rat(2, 1)],
            vec![rat(2, 1), rat(1, 1), rat(0, 1), rat(1, 1)],
            vec![rat(1, 1), rat(2, 1), rat(1, 1), rat(0, 1)],
        ],
        a: vec![rat(1, 4), rat(1, 4), rat(1, 4), rat(1, 4)],
        b: vec![rat(1, 2), rat(0, 1), rat(1, 2), rat(0, 1)],
    });
    // four points, lopsided masses
    out.push(TransportInstance {
        dist: vec![
            vec![rat(0, 1), rat(1, 4), rat(1, 2), rat(3, 4)],
            vec![rat(1, 4), rat(0, 1), rat(1, 4), rat(1, 2)],
            vec![rat(1, 2), rat(1, 4), rat(0, 1), rat(1, 4)],
            vec![rat(3, 4), rat(1, 2), rat(1, 4), rat(0, 1)],
        ],
        a: vec![rat(7, 8), rat(0, 1), rat(1, 8), rat(0, 1)],
        b: vec![rat(0, 1), rat(1, 8), rat(0, 1), rat(7, 8)],
    });
    out
}

/// Seeded random rational metric instances on up to four points: random
/// positive entries closed under shortest paths, weights with denominator 8.
pub fn random_instances(count: usize, seed: u64) -> Vec<TransportInstance> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = rng.gen_range(2..=4usize);
        let mut dist = vec![vec![rat(0, 1); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = rat(rng.gen_range(1..=16), 8);
                dist[i][j] = d.clone();
                dist[j][i] = d;
            }
        }
        // metric closure keeps entries rational and enforces the triangle
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i][k].clone() + dist[k][j].clone();
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        let mut draw_weights = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<BigRational> {
            let mut cuts: Vec<i64> = (0..n - 1).map(|_| rng.gen_range(0..=8)).collect();
            cuts.sort_unstable();
            let mut parts = Vec::with_capacity(n);
            let mut prev = 0i64;
            for &c in &cuts {
                parts.push(rat(c - prev, 8));
                prev = c;
            }
            parts.push(rat(8 - prev, 8));
            parts
        };
        let a = draw_weights(&mut rng);
        let b = draw_weights(&mut rng);
        out.push(TransportInstance { dist, a, b });
    }
    out
}
