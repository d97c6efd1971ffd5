//! Discrete transport problem `max Σ π_ij <x_i, y_j>` solved by successive
//! shortest paths with Dijkstra on reduced costs.

use crate::error::{Error, Result};

use super::discrete::DiscreteMeasure;

/// Largest support size accepted on either side.
pub const LP_ATOM_LIMIT: usize = 512;

const MASS_EPS: f64 = 1e-15;

/// Optimal coupling as `(i, j, mass)` triples together with its value.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub value: f64,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Maximal-covariance coupling of two discrete measures of equal dimension.
pub fn max_covariance_plan(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<TransportPlan> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", p.dim(), q.dim())));
    }
    let (n, m) = (p.len(), q.len());
    if n > LP_ATOM_LIMIT || m > LP_ATOM_LIMIT {
        return Err(Error::LpSizeExceeded { rows: n, cols: m, limit: LP_ATOM_LIMIT });
    }
    let mut cost = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let dot: f64 = p.point(i).iter().zip(q.point(j)).map(|(a, b)| a * b).sum();
            cost[i * m + j] = -dot;
        }
    }
    let flow = min_cost_transport(&cost, p.weights(), q.weights());
    let mut entries = Vec::new();
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > 0.0 {
                value -= f * cost[i * m + j];
                entries.push((i, j, f));
            }
        }
    }
    Ok(TransportPlan { value, entries })
}

// Dense min-cost transportation by successive shortest paths.
fn min_cost_transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    let mut flow = vec![0.0; n * m];
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let mut pot_s = vec![0.0; n];
    let mut pot_d: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| cost[i * m + j]).fold(f64::INFINITY, f64::min))
        .collect();

    // Nodes 0..n are sources, n..n+m sinks.
    let total = n + m;
    let mut dist = vec![f64::INFINITY; total];
    let mut pred = vec![usize::MAX; total];
    let mut done = vec![false; total];
    loop {
        let left: f64 = rem_s.iter().sum();
        if left <= MASS_EPS * 4.0 || rem_d.iter().all(|&d| d <= MASS_EPS) {
            break;
        }
        dist.fill(f64::INFINITY);
        pred.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if rem_s[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && rem_d[u - n] > MASS_EPS {
                target = u;
                break;
            }
            if u < n {
                let i = u;
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[i * m + j] + pot_s[i] - pot_d[j]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        pred[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= MASS_EPS {
                        continue;
                    }
                    let rc = (-cost[i * m + j] - pot_s[i] + pot_d[j]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        pred[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let d_t = dist[target];
        for i in 0..n {
            pot_s[i] += dist[i].min(d_t);
        }
        for j in 0..m {
            pot_d[j] += dist[n + j].min(d_t);
        }
        // Bottleneck along the alternating path.
        let mut amount = rem_d[target - n];
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= n {
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        amount = amount.min(rem_s[v]);
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                let f = &mut flow[v * m + (u - n)];
                *f = (*f - amount).max(0.0);
            }
            v = u;
        }
        rem_s[v] -= amount;
        rem_d[target - n] -= amount;
    }
    flow
}
