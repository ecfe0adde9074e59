//! Attention maps on the scene grid and the exact earth mover's distance
//! between them, solved as a min-cost flow with Euclidean distances between
//! cell centers as ground costs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::ExplanationOutput;
use crate::toyworld::{Scene, GRID};

pub const CELLS: usize = GRID * GRID;
const MASS_TOL: f64 = 1e-9;

/// Nonnegative mass distribution over the grid cells, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    cells: Vec<f64>,
}

impl AttentionMap {
    pub fn new(cells: Vec<f64>) -> Result<Self> {
        if cells.len() != CELLS {
            return Err(Error::shape(
                "attention map",
                format!("{CELLS} cells"),
                format!("{}", cells.len()),
            ));
        }
        if cells.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::Invalid(
                "attention map mass must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = cells.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Invalid(format!(
                "attention map mass sums to {total}, expected 1"
            )));
        }
        Ok(Self { cells })
    }

    pub fn uniform() -> Self {
        Self {
            cells: vec![1.0 / CELLS as f64; CELLS],
        }
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.cells.clone()).map(|_| ())
    }
}

fn cell_index(r: u8, c: u8) -> usize {
    r as usize * GRID + c as usize
}

fn cell_distance(i: usize, j: usize) -> f64 {
    let (ri, ci) = ((i / GRID) as f64, (i % GRID) as f64);
    let (rj, cj) = ((j / GRID) as f64, (j % GRID) as f64);
    ((ri - rj).powi(2) + (ci - cj).powi(2)).sqrt()
}

/// Object-level attention from a decoded explanation painted onto the grid.
/// Each object collects sum_t alpha[i][t] * s1[t] over the decode steps and
/// spreads it uniformly over its footprint cells; the map is normalized.
/// Returns the uniform map and `true` when nothing accumulated.
pub fn rasterize_attention(output: &ExplanationOutput, scene: &Scene) -> Result<(AttentionMap, bool)> {
    let n = scene.objects.len();
    let mut weights = vec![0.0; n];
    for step in &output.steps {
        if step.alpha.len() != n {
            return Err(Error::shape(
                format!("attention at step {}", step.t),
                format!("{n} weights"),
                format!("{}", step.alpha.len()),
            ));
        }
        for (w, &a) in weights.iter_mut().zip(&step.alpha) {
            *w += a * step.s1;
        }
    }
    let mut cells = vec![0.0; CELLS];
    for (object, &w) in scene.objects.iter().zip(&weights) {
        if object.footprint.is_empty() {
            return Err(Error::Invalid(format!(
                "object {} has an empty footprint",
                object.object_id
            )));
        }
        let share = w / object.footprint.len() as f64;
        for &(r, c) in &object.footprint {
            cells[cell_index(r, c)] += share;
        }
    }
    let total: f64 = cells.iter().sum();
    if total <= 0.0 {
        return Ok((AttentionMap::uniform(), true));
    }
    for m in &mut cells {
        *m /= total;
    }
    Ok((AttentionMap::new(cells)?, false))
}

/// Reference map: uniform mass over the footprint cells of the causally
/// relevant objects, or over the whole grid if none are given.
pub fn oracle_map(scene: &Scene, causal_object_ids: &[u32]) -> Result<AttentionMap> {
    let mut marked = vec![false; CELLS];
    let mut count = 0usize;
    for object in &scene.objects {
        if !causal_object_ids.contains(&object.object_id) {
            continue;
        }
        for &(r, c) in &object.footprint {
            let idx = cell_index(r, c);
            if !marked[idx] {
                marked[idx] = true;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(AttentionMap::uniform());
    }
    let mass = 1.0 / count as f64;
    let cells = marked.iter().map(|&m| if m { mass } else { 0.0 }).collect();
    AttentionMap::new(cells)
}

/// Exact earth mover's distance between two attention maps. Shared mass
/// cancels first (the ground distance is a metric), then the remaining
/// surplus moves to the remaining deficit by successive shortest paths.
pub fn emd(a: &AttentionMap, b: &AttentionMap) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for i in 0..CELLS {
        let diff = a.cells[i] - b.cells[i];
        if diff > 0.0 {
            supply.push((i, diff));
        } else if diff < 0.0 {
            demand.push((i, -diff));
        }
    }
    if supply.is_empty() || demand.is_empty() {
        return Ok(0.0);
    }
    Ok(transport_cost(&supply, &demand))
}

/// Min-cost transport between point masses via successive shortest paths
/// with node potentials. Nodes 0..ns are supplies, ns..ns+nd demands; each
/// augmentation saturates a supply or a demand, so there are at most ns+nd
/// rounds of a dense Dijkstra over the bipartite residual graph.
fn transport_cost(supply: &[(usize, f64)], demand: &[(usize, f64)]) -> f64 {
    let ns = supply.len();
    let nd = demand.len();
    let total_nodes = ns + nd;
    let cost: Vec<Vec<f64>> = supply
        .iter()
        .map(|&(si, _)| demand.iter().map(|&(di, _)| cell_distance(si, di)).collect())
        .collect();
    let mut remaining_supply: Vec<f64> = supply.iter().map(|&(_, m)| m).collect();
    let mut remaining_demand: Vec<f64> = demand.iter().map(|&(_, m)| m).collect();
    let mut flow = vec![vec![0.0f64; nd]; ns];
    let mut potential = vec![0.0f64; total_nodes];
    let mut total_cost = 0.0;
    let mut rounds = 0usize;
    loop {
        if remaining_supply.iter().all(|&s| s <= MASS_TOL) {
            break;
        }
        rounds += 1;
        assert!(
            rounds <= 64 * total_nodes + 256,
            "transport did not converge in {rounds} rounds"
        );
        // Dijkstra over reduced costs from all unsaturated supplies.
        let mut dist = vec![f64::INFINITY; total_nodes];
        let mut prev = vec![usize::MAX; total_nodes];
        let mut done = vec![false; total_nodes];
        for (u, &s) in remaining_supply.iter().enumerate() {
            if s > MASS_TOL {
                dist[u] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            // Reduced costs are nonnegative up to rounding; clamp at zero and
            // never touch finalized nodes, so the predecessor chain follows
            // strictly decreasing finalization order and stays acyclic.
            if u < ns {
                for v in 0..nd {
                    if done[ns + v] {
                        continue;
                    }
                    let rc = (cost[u][v] + potential[u] - potential[ns + v]).max(0.0);
                    if dist[u] + rc < dist[ns + v] {
                        dist[ns + v] = dist[u] + rc;
                        prev[ns + v] = u;
                    }
                }
            } else {
                let v = u - ns;
                for s in 0..ns {
                    if done[s] || flow[s][v] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[s][v] + potential[u] - potential[s]).max(0.0);
                    if dist[u] + rc < dist[s] {
                        dist[s] = dist[u] + rc;
                        prev[s] = u;
                    }
                }
            }
        }
        // Closest unsaturated demand reached this round.
        let target = (0..nd)
            .filter(|&v| remaining_demand[v] > 0.0 && dist[ns + v].is_finite())
            .min_by(|&x, &y| dist[ns + x].total_cmp(&dist[ns + y]))
            .expect("reachable demand while supply remains");
        // Bottleneck along the alternating path.
        let mut amount = remaining_demand[target];
        let mut node = ns + target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node >= ns {
                // forward arc p -> node
            } else {
                amount = amount.min(flow[node][p - ns]);
            }
            node = p;
        }
        amount = amount.min(remaining_supply[node]);
        // Apply the augmentation.
        let mut node = ns + target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node >= ns {
                flow[p][node - ns] += amount;
                total_cost += amount * cost[p][node - ns];
            } else {
                flow[node][p - ns] -= amount;
                total_cost -= amount * cost[node][p - ns];
            }
            node = p;
        }
        remaining_supply[node] -= amount;
        remaining_demand[target] -= amount;
        for v in 0..total_nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
    }
    total_cost
}
