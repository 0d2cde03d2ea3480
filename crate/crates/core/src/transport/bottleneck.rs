//! Bottleneck distance between atomic measures: the smallest pairwise
//! distance `t` for which the threshold graph `{|x_i - y_j| ≤ t}` carries all
//! the mass, decided by max-flow.

use std::collections::HashMap;

/// Uniform bucket grid over a point set for radius queries.
pub(crate) struct Grid<'a> {
    points: &'a [f64],
    dim: usize,
    cell: f64,
    origin: Vec<f64>,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> Grid<'a> {
    pub fn new(points: &'a [f64], dim: usize, cell: f64) -> Self {
        let n = points.len() / dim;
        let mut origin = vec![f64::INFINITY; dim];
        for i in 0..n {
            for k in 0..dim {
                origin[k] = origin[k].min(points[i * dim + k]);
            }
        }
        let mut g = Grid { points, dim, cell, origin, buckets: HashMap::new() };
        for i in 0..n {
            let key = g.key(&points[i * dim..(i + 1) * dim]);
            g.buckets.entry(key).or_default().push(i);
        }
        g
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        (0..self.dim).map(|k| ((x[k] - self.origin[k]) / self.cell).floor() as i64).collect()
    }

    /// Visit every indexed point within distance `r` of `x`.
    pub fn within<F: FnMut(usize, f64)>(&self, x: &[f64], r: f64, mut f: F) {
        let d = self.dim;
        let reach = (r / self.cell).ceil() as i64;
        let center = self.key(x);
        let span = (2 * reach + 1) as usize;
        let total = span.pow(d as u32);
        let r2 = r * r;
        let mut key = vec![0i64; d];
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..d {
                key[k] = center[k] - reach + (rem % span) as i64;
                rem /= span;
            }
            if let Some(ids) = self.buckets.get(&key) {
                for &j in ids {
                    let y = &self.points[j * d..(j + 1) * d];
                    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if s <= r2 {
                        f(j, s.sqrt());
                    }
                }
            }
        }
    }

    /// Distance from `x` to the nearest indexed point.
    pub fn nearest(&self, x: &[f64]) -> f64 {
        let mut r = self.cell;
        loop {
            let mut best = f64::INFINITY;
            self.within(x, r, |_, dist| best = best.min(dist));
            if best.is_finite() {
                return best;
            }
            r *= 2.0;
        }
    }
}

/// Dinic max-flow on a source, `n` left nodes, `m` right nodes and a sink.
pub(crate) struct FlowNetwork {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i64>,
    next: Vec<usize>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const NIL: usize = usize::MAX;
pub(crate) const INF_CAP: i64 = i64::MAX / 4;

impl FlowNetwork {
    pub fn new(nodes: usize, edge_hint: usize) -> Self {
        FlowNetwork {
            head: vec![NIL; nodes],
            to: Vec::with_capacity(2 * edge_hint),
            cap: Vec::with_capacity(2 * edge_hint),
            next: Vec::with_capacity(2 * edge_hint),
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Add `u → v` and its residual twin; returns the forward edge id.
    pub fn add_edge(&mut self, u: usize, v: usize, c: i64) -> usize {
        let id = self.to.len();
        self.to.push(v);
        self.cap.push(c);
        self.next.push(self.head[u]);
        self.head[u] = id;
        self.to.push(u);
        self.cap.push(0);
        self.next.push(self.head[v]);
        self.head[v] = id + 1;
        id
    }

    /// Flow currently carried by forward edge `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.cap[id + 1]
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
        self.level[t] >= 0
    }

    /// Iterative blocking-flow augmentation along the level graph.
    fn dfs(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let push = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                }
                total += push;
                // retreat to the tail of the first saturated edge
                let cut = path.iter().position(|&e| self.cap[e] == 0).unwrap_or(0);
                path.truncate(cut);
                u = if cut == 0 { s } else { self.to[path[cut - 1]] };
                continue;
            }
            let mut advanced = false;
            while self.iter[u] != NIL {
                let e = self.iter[u];
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.iter[u] = self.next[e];
            }
            if !advanced {
                if u == s {
                    return total;
                }
                // dead end: prune and back up
                self.level[u] = -1;
                let e = path.pop().expect("nonempty path below source");
                u = self.to[e ^ 1];
                self.iter[u] = self.next[self.iter[u]];
            }
        }
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        while self.bfs(s, t) {
            self.iter.copy_from_slice(&self.head);
            flow += self.dfs(s, t);
        }
        flow
    }
}

pub(crate) struct BottleneckSolution {
    pub value: f64,
    pub flows: Vec<(usize, usize, i64)>,
    pub checks: usize,
}

/// Feasibility of the threshold graph given by `edges` (sorted by distance),
/// returning the arc flows when the max-flow reaches `need`.
fn feasible(
    edges: &[(f64, usize, usize)],
    supply: &[i64],
    demand: &[i64],
    need: i64,
) -> Option<Vec<(usize, usize, i64)>> {
    let (n, m) = (supply.len(), demand.len());
    let s = n + m;
    let t = s + 1;
    let mut net = FlowNetwork::new(n + m + 2, edges.len() + n + m);
    for (i, a) in supply.iter().enumerate() {
        net.add_edge(s, i, *a);
    }
    for (j, b) in demand.iter().enumerate() {
        net.add_edge(n + j, t, *b);
    }
    let ids: Vec<usize> = edges.iter().map(|&(_, i, j)| net.add_edge(i, n + j, INF_CAP)).collect();
    if net.max_flow(s, t) < need {
        return None;
    }
    let mut flows: Vec<(usize, usize, i64)> = edges
        .iter()
        .zip(&ids)
        .filter_map(|(&(_, i, j), &id)| {
            let f = net.flow(id);
            (f > 0).then_some((i, j, f))
        })
        .collect();
    flows.sort_unstable();
    Some(flows)
}

/// Exact bottleneck value between two point sets with integer masses.
/// A transport carrying at least `need` units counts as feasible.
pub(crate) fn solve(
    x: &[f64],
    y: &[f64],
    dim: usize,
    supply: &[i64],
    demand: &[i64],
    need: i64,
) -> BottleneckSolution {
    let (n, m) = (supply.len(), demand.len());
    // every atom has to reach the other side: a lower bound that is attained
    let scale = {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in x.chunks(dim).chain(y.chunks(dim)) {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let typical = diam / ((n.max(m) as f64).powf(1.0 / dim as f64)).max(1.0);
        typical.max(diam * 1e-9).max(f64::MIN_POSITIVE)
    };
    let gx = Grid::new(x, dim, scale);
    let gy = Grid::new(y, dim, scale);
    let mut lower = 0.0f64;
    for p in x.chunks(dim) {
        lower = lower.max(gy.nearest(p));
    }
    for p in y.chunks(dim) {
        lower = lower.max(gx.nearest(p));
    }
    // the radius is widened slightly so that a distance computed as `√s`
    // still passes the `s ≤ r²` test after rounding
    let gather = |r: f64| -> Vec<(f64, usize, usize)> {
        let g = Grid::new(y, dim, r.max(scale));
        let mut edges = Vec::new();
        for (i, p) in x.chunks(dim).enumerate() {
            g.within(p, r * (1.0 + 1e-12), |j, dist| edges.push((dist, i, j)));
        }
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        edges
    };
    let mut checks = 0;
    let mut hi = lower;
    let mut below = 0.0f64; // largest radius known infeasible
    let (edges, mut best) = loop {
        let edges = gather(hi);
        checks += 1;
        if let Some(f) = feasible(&edges, supply, demand, need) {
            break (edges, f);
        }
        below = hi;
        hi = if hi > 0.0 { 2.0 * hi } else { scale };
    };
    if hi == lower {
        let dist = |i: usize, j: usize| -> f64 {
            let (a, b) = (&x[i * dim..(i + 1) * dim], &y[j * dim..(j + 1) * dim]);
            a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
        };
        let value = best.iter().map(|&(i, j, _)| dist(i, j)).fold(lower, f64::max);
        return BottleneckSolution { value, flows: best, checks };
    }
    // candidate thresholds: distinct distances in (below, hi]
    let start = edges.partition_point(|e| e.0 <= below);
    let mut cands: Vec<usize> = Vec::new(); // prefix lengths ending a distinct distance
    for k in start..edges.len() {
        if k + 1 == edges.len() || edges[k + 1].0 > edges[k].0 {
            cands.push(k + 1);
        }
    }
    let (mut lo_idx, mut hi_idx) = (0usize, cands.len() - 1);
    while lo_idx < hi_idx {
        let mid = (lo_idx + hi_idx) / 2;
        checks += 1;
        match feasible(&edges[..cands[mid]], supply, demand, need) {
            Some(f) => {
                hi_idx = mid;
                best = f;
            }
            None => lo_idx = mid + 1,
        }
    }
    // `best` always belongs to the prefix `cands[hi_idx]`
    let value = edges[cands[hi_idx] - 1].0;
    BottleneckSolution { value, flows: best, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_flow_small() {
        let mut net = FlowNetwork::new(4, 5);
        net.add_edge(0, 1, 3);
        net.add_edge(0, 2, 2);
        net.add_edge(1, 2, 1);
        net.add_edge(1, 3, 2);
        net.add_edge(2, 3, 3);
        assert_eq!(net.max_flow(0, 3), 5);
    }

    #[test]
    fn grid_queries() {
        let pts = [0.0, 0.0, 1.0, 0.0, 0.0, 2.0];
        let g = Grid::new(&pts, 2, 0.3);
        let mut hits = vec![];
        g.within(&[0.1, 0.0], 1.0, |j, _| hits.push(j));
        hits.sort();
        assert_eq!(hits, vec![0, 1]);
        assert!((g.nearest(&[0.0, 1.9]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn threshold_example() {
        let sol = solve(&[0.0, 1.0], &[0.1, 0.9], 1, &[1, 1], &[1, 1], 2);
        assert!((sol.value - 0.1).abs() < 1e-15);
        let sol = solve(&[0.0, 1.0], &[0.5], 1, &[1, 1], &[2], 2);
        assert_eq!(sol.value, 0.5);
    }

    #[test]
    fn nested_grids_attain_the_nearest_neighbor_bound() {
        // coarse cell centers against the 4 x 4 fine centers inside each cell
        let grid = |k: usize| -> Vec<f64> {
            (0..k * k).flat_map(|c| [((c % k) as f64 + 0.5) / k as f64, ((c / k) as f64 + 0.5) / k as f64]).collect()
        };
        for k in [4usize, 8, 16] {
            let (x, y) = (grid(k), grid(4 * k));
            let sol = solve(&x, &y, 2, &vec![16; k * k], &vec![1; 16 * k * k], 16 * (k * k) as i64);
            let expect = (0.5 / k as f64 - 0.125 / k as f64) * 2f64.sqrt();
            assert!((sol.value - expect).abs() < 1e-15, "{k}: {} vs {expect}", sol.value);
        }
    }
}
