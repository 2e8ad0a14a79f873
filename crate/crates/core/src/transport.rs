//! Optimal-transport transfer of per-spring parameters between meshes with
//! different cut topologies, plus the averaging baseline.
//!
//! The earth mover's distance between the two spring clouds (uniform
//! weights, squared Euclidean cost on the 2D cutting-interface coordinates)
//! is solved exactly with the transportation simplex. Supplies are scaled
//! to integers (`n` units per source, `m` units per sink), which keeps all
//! pivot flows integral and the marginals exact up to one final division.

use crate::error::{Result, SimError};
use crate::mesh::CutMesh;
use alloc::vec;
use alloc::vec::Vec;

/// Per-spring 2D coordinates on the cutting interface, uniform weights.
#[derive(Clone, Debug)]
pub struct SpringCloud {
    pub points: Vec<[f64; 2]>,
}

impl SpringCloud {
    pub fn from_cut_mesh(mesh: &CutMesh) -> Self {
        SpringCloud { points: mesh.spring_interface_points() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Optimal flow between two uniform clouds: row sums are `1/m`, column
/// sums `1/n`, total mass 1.
#[derive(Clone, Debug)]
pub struct FlowMatrix {
    pub m: usize,
    pub n: usize,
    /// Dense row-major flows.
    pub flow: Vec<f64>,
    /// Transport cost `sum f_ij d_ij` with `d_ij = |p_i - q_j|^2`.
    pub cost: f64,
}

impl FlowMatrix {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.n + j]
    }
}

fn sq_dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    dx * dx + dy * dy
}

/// Exact EMD between uniform clouds via the transportation simplex.
pub fn solve_emd(source: &SpringCloud, target: &SpringCloud) -> Result<FlowMatrix> {
    let (m, n) = (source.len(), target.len());
    if m == 0 || n == 0 {
        return Err(SimError::Config("EMD needs nonempty clouds".into()));
    }
    let cost: Vec<f64> = source
        .points
        .iter()
        .flat_map(|p| target.points.iter().map(|q| sq_dist(*p, *q)))
        .collect();

    // Integer supplies: every source ships n units, every sink takes m.
    let units = simplex_uniform(m, n, &cost);

    let scale = 1.0 / (m as f64 * n as f64);
    let mut flow = vec![0.0f64; m * n];
    let mut total_cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let u = units[i * n + j];
            if u > 0 {
                let f = u as f64 * scale;
                flow[i * n + j] = f;
                total_cost += f * cost[i * n + j];
            }
        }
    }
    Ok(FlowMatrix { m, n, flow, cost: total_cost })
}

/// Transportation simplex on integer-balanced uniform marginals. Returns
/// integral flows in units of `1/(m n)`.
fn simplex_uniform(m: usize, n: usize, cost: &[f64]) -> Vec<u64> {
    let mut flow = vec![0u64; m * n];
    // Basis arcs as a spanning tree over m + n nodes (sources then sinks).
    let mut basis = vec![false; m * n];

    // North-west corner initialization.
    {
        let mut supply = vec![n as u64; m];
        let mut demand = vec![m as u64; n];
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let send = supply[i].min(demand[j]);
            flow[i * n + j] = send;
            basis[i * n + j] = true;
            supply[i] -= send;
            demand[j] -= send;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // Keep the basis a tree even through degenerate (zero) sends.
            if supply[i] == 0 && i < m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let max_pivots = 200 * (m + n) * (m + n) + 10_000;
    for _pivot in 0..max_pivots {
        // Duals from the basis tree: u_i + v_j = c_ij on basic arcs.
        let (u, v) = solve_duals(m, n, cost, &basis);
        // Entering arc: most negative reduced cost (deterministic ties).
        let mut best = (0usize, 0usize);
        let mut best_red = -1e-12;
        for i in 0..m {
            for j in 0..n {
                if basis[i * n + j] {
                    continue;
                }
                let red = cost[i * n + j] - u[i] - v[j];
                if red < best_red {
                    best_red = red;
                    best = (i, j);
                }
            }
        }
        if best_red >= -1e-12 {
            break;
        }
        pivot(m, n, &mut flow, &mut basis, best.0, best.1);
    }
    flow
}

/// Computes dual potentials by walking the basis tree from source 0.
fn solve_duals(m: usize, n: usize, cost: &[f64], basis: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    // Fixed-point sweeps; the tree has m + n - 1 arcs so m + n sweeps
    // always suffice.
    for _ in 0..(m + n) {
        let mut changed = false;
        for i in 0..m {
            for j in 0..n {
                if !basis[i * n + j] {
                    continue;
                }
                match (u[i].is_nan(), v[j].is_nan()) {
                    (false, true) => {
                        v[j] = cost[i * n + j] - u[i];
                        changed = true;
                    }
                    (true, false) => {
                        u[i] = cost[i * n + j] - v[j];
                        changed = true;
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            break;
        }
    }
    (u, v)
}

/// Pivots the entering arc `(ei, ej)` into the basis: finds the unique
/// cycle it closes, shifts flow around it, removes the blocking arc.
fn pivot(m: usize, n: usize, flow: &mut [u64], basis: &mut [bool], ei: usize, ej: usize) {
    // The cycle alternates row/column moves through basic cells. Find a
    // path from source ei to sink ej through the basis tree.
    // Nodes: 0..m are sources, m..m+n sinks. Build adjacency over basic arcs.
    let total = m + n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for i in 0..m {
        for j in 0..n {
            if basis[i * n + j] {
                adj[i].push(m + j);
                adj[m + j].push(i);
            }
        }
    }
    // BFS path source ei -> sink m+ej through the tree.
    let mut parent = vec![usize::MAX; total];
    let mut queue = alloc::collections::VecDeque::new();
    parent[ei] = ei;
    queue.push_back(ei);
    while let Some(node) = queue.pop_front() {
        if node == m + ej {
            break;
        }
        for &next in &adj[node] {
            if parent[next] == usize::MAX {
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    debug_assert_ne!(parent[m + ej], usize::MAX, "basis must be connected");

    // Reconstruct the node path, then the alternating arc cycle.
    let mut path = vec![m + ej];
    while *path.last().unwrap() != ei {
        path.push(parent[*path.last().unwrap()]);
    }
    path.reverse(); // ei ... m+ej

    // Arcs along the path alternate direction; with the entering arc they
    // form the cycle. Odd arcs lose flow.
    let mut minus_arcs: Vec<(usize, usize)> = Vec::new();
    let mut plus_arcs: Vec<(usize, usize)> = vec![(ei, ej)];
    for (k, pair) in path.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let (i, j) = if a < m { (a, b - m) } else { (b, a - m) };
        if k % 2 == 0 {
            // Same orientation parity as the entering arc: loses flow.
            minus_arcs.push((i, j));
        } else {
            plus_arcs.push((i, j));
        }
    }
    let theta = minus_arcs.iter().map(|&(i, j)| flow[i * n + j]).min().unwrap_or(0);
    for &(i, j) in &plus_arcs {
        flow[i * n + j] += theta;
    }
    let mut removed = false;
    for &(i, j) in &minus_arcs {
        flow[i * n + j] -= theta;
        if !removed && flow[i * n + j] == 0 {
            basis[i * n + j] = false;
            removed = true;
        }
    }
    basis[ei * n + ej] = true;
}

/// Barycentric transfer: `target_j = sum_i f_ij s_i / sum_i f_ij`. An
/// identity matching copies values; any result is a convex combination of
/// source values, so bounds are preserved automatically.
pub fn transfer_params(flow: &FlowMatrix, source: &[f64]) -> Result<Vec<f64>> {
    if source.len() != flow.m {
        return Err(SimError::LengthMismatch {
            name: "transfer source".into(),
            expected: flow.m,
            got: source.len(),
        });
    }
    let mut out = Vec::with_capacity(flow.n);
    for j in 0..flow.n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..flow.m {
            let f = flow.at(i, j);
            num += f * source[i];
            den += f;
        }
        if den <= 0.0 {
            return Err(SimError::Config("zero column mass in flow matrix".into()));
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Baseline: broadcast the source mean to every target spring.
pub fn average_transfer(source: &[f64], target_count: usize) -> Result<Vec<f64>> {
    if source.is_empty() {
        return Err(SimError::Config("average transfer needs a nonempty source".into()));
    }
    let mean = source.iter().sum::<f64>() / source.len() as f64;
    Ok(vec![mean; target_count])
}

/// Exact assignment solver (Jonker-Volgenant style shortest augmenting
/// paths). Used as an independent cross-check of the simplex on
/// equal-size uniform clouds, where an optimal transport plan is a
/// permutation.
pub fn assignment_min_cost(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![n; n + 1]; // p[j] = row assigned to column j (n = none)
    let mut way = vec![0usize; n + 1];
    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 * n + j] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == n {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    let mut total = 0.0;
    for j in 0..n {
        assign[p[j]] = j;
        total += cost[p[j] * n + j];
    }
    (assign, total)
}
