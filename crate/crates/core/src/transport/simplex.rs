//! Primal network simplex for the transportation problem with integer
//! supplies and real costs.
//!
//! The spanning tree starts from the north-west corner rule, advancing the
//! column on degenerate steps so that every zero-flow tree arc points away
//! from the root. The leaving-arc rule keeps the tree strongly feasible.
//! Real arcs are uncapacitated, so non-tree arcs always sit at flow zero and
//! tree flows are stored per node, on the arc to the parent.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct Solution {
    /// `(i, j, flow)` for every arc with positive flow.
    pub flows: Vec<(usize, usize, i64)>,
    pub pivots: usize,
}

struct Tree<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// The arc to the parent leaves this node.
    up: Vec<bool>,
    flow: Vec<i64>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    child_pos: Vec<usize>,
    pi: Vec<f64>,
    next_arc: usize,
    block: usize,
    tol: f64,
}

impl<'a> Tree<'a> {
    fn arc_ends(&self, e: usize) -> (usize, usize) {
        (e / self.m, self.n + e % self.m)
    }

    fn add_child(&mut self, p: usize, c: usize) {
        self.child_pos[c] = self.children[p].len();
        self.children[p].push(c);
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let pos = self.child_pos[c];
        let last = self.children[p].pop().expect("child list not empty");
        if last != c {
            self.children[p][pos] = last;
            self.child_pos[last] = pos;
        }
    }

    fn new(n: usize, m: usize, cost: &'a [f64], supply: &[i64], demand: &[i64]) -> Self {
        let nodes = n + m;
        let max_cost = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mut t = Tree {
            n,
            m,
            cost,
            in_tree: vec![false; n * m],
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            up: vec![false; nodes],
            flow: vec![0; nodes],
            depth: vec![0; nodes],
            children: vec![Vec::new(); nodes],
            child_pos: vec![0; nodes],
            pi: vec![0.0; nodes],
            next_arc: 0,
            block: ((n * m) as f64).sqrt().ceil().max(10.0) as usize,
            tol: 1e-14 * max_cost.max(f64::MIN_POSITIVE) * ((nodes as f64).sqrt()),
        };
        // north-west corner staircase, rooted at source 0
        let (mut i, mut j) = (0usize, 0usize);
        let mut a = supply[0];
        let mut b = demand[0];
        let mut column_next = true;
        loop {
            let f = a.min(b);
            let e = i * m + j;
            t.in_tree[e] = true;
            // the arc links the node already on the path to the new one
            let (child, parent, up) = if column_next { (n + j, i, false) } else { (i, n + j, true) };
            t.parent[child] = parent;
            t.pred[child] = e;
            t.up[child] = up;
            t.flow[child] = f;
            t.depth[child] = t.depth[parent] + 1;
            t.add_child(parent, child);
            a -= f;
            b -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if b == 0 && j < m - 1 {
                j += 1;
                b = demand[j];
                column_next = true;
            } else {
                i += 1;
                a = supply[i];
                column_next = false;
            }
        }
        t.recompute_potentials();
        t
    }

    fn recompute_potentials(&mut self) {
        let mut stack = vec![0usize];
        self.pi[0] = 0.0;
        while let Some(u) = stack.pop() {
            for k in 0..self.children[u].len() {
                let c = self.children[u][k];
                let c_arc = self.cost[self.pred[c]];
                // reduced cost c + π_source - π_target vanishes on tree arcs
                self.pi[c] = if self.up[c] { self.pi[u] - c_arc } else { self.pi[u] + c_arc };
                stack.push(c);
            }
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        let (s, t) = self.arc_ends(e);
        self.cost[e] + self.pi[s] - self.pi[t]
    }

    /// Block search pricing: best violating arc in the first block that has one.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.n * self.m;
        let mut best = NONE;
        let mut min = -self.tol;
        let mut count = 0;
        let mut e = self.next_arc;
        let (mut i, mut j) = (e / self.m, e % self.m);
        for _ in 0..total {
            if !self.in_tree[e] {
                let rc = self.cost[e] + self.pi[i] - self.pi[self.n + j];
                if rc < min {
                    min = rc;
                    best = e;
                }
            }
            count += 1;
            e += 1;
            j += 1;
            if j == self.m {
                j = 0;
                i += 1;
                if i == self.n {
                    i = 0;
                    e = 0;
                }
            }
            if count == self.block {
                if best != NONE {
                    self.next_arc = e;
                    return Some(best);
                }
                count = 0;
            }
        }
        if best != NONE {
            self.next_arc = e;
            Some(best)
        } else {
            None
        }
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    fn pivot(&mut self, e: usize) {
        let (first, second) = self.arc_ends(e);
        let join = self.join(first, second);
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut out_first = true;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                out_first = true;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                out_first = false;
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != NONE, "transportation cycles are bounded");
        if delta > 0 {
            let mut u = first;
            while u != join {
                self.flow[u] += if self.up[u] { -delta } else { delta };
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let rc = self.reduced_cost(e);
        let (w_in, w_other) = if out_first { (first, second) } else { (second, first) };
        let leaving = self.pred[u_out];
        let old_parent = self.parent[u_out];
        self.remove_child(old_parent, u_out);
        let mut cur = w_in;
        let mut new_parent = w_other;
        let mut arc = e;
        let mut up = w_in == first;
        let mut fl = delta;
        loop {
            let (op, oa, oup, ofl) = (self.parent[cur], self.pred[cur], self.up[cur], self.flow[cur]);
            if cur != u_out {
                self.remove_child(op, cur);
            }
            self.parent[cur] = new_parent;
            self.pred[cur] = arc;
            self.up[cur] = up;
            self.flow[cur] = fl;
            self.add_child(new_parent, cur);
            if cur == u_out {
                break;
            }
            new_parent = cur;
            arc = oa;
            up = !oup;
            fl = ofl;
            cur = op;
        }
        self.in_tree[leaving] = false;
        self.in_tree[e] = true;

        let sigma = if w_in == first { -rc } else { rc };
        self.depth[w_in] = self.depth[w_other] + 1;
        self.pi[w_in] += sigma;
        let mut stack = vec![w_in];
        while let Some(u) = stack.pop() {
            for k in 0..self.children[u].len() {
                let c = self.children[u][k];
                self.depth[c] = self.depth[u] + 1;
                self.pi[c] += sigma;
                stack.push(c);
            }
        }
    }
}

/// Solve `min Σ c_ij f_ij` subject to row sums `supply`, column sums
/// `demand`, `f ≥ 0`. `cost` is row-major `n × m`.
pub(crate) fn solve(cost: &[f64], supply: &[i64], demand: &[i64]) -> Result<Solution> {
    let (n, m) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), n * m);
    debug_assert_eq!(supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
    let mut tree = Tree::new(n, m, cost, supply, demand);
    let limit = 50 * (n * m).max(1000) + 100 * (n + m) * (n + m);
    let mut pivots = 0usize;
    loop {
        match tree.find_entering() {
            Some(e) => {
                tree.pivot(e);
                pivots += 1;
                if pivots > limit {
                    return Err(Error::Unsupported("network simplex exceeded its pivot budget".into()));
                }
            }
            None => {
                // confirm against freshly summed potentials before stopping
                tree.recompute_potentials();
                if tree.find_entering().is_none() {
                    break;
                }
            }
        }
    }
    let mut flows: Vec<(usize, usize, i64)> = (1..n + m)
        .filter(|&u| tree.flow[u] > 0 && tree.pred[u] != NONE)
        .map(|u| {
            let e = tree.pred[u];
            (e / m, e % m, tree.flow[u])
        })
        .collect();
    flows.sort_unstable();
    Ok(Solution { flows, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(cost: &[f64], m: usize, s: &Solution) -> f64 {
        s.flows.iter().map(|&(i, j, f)| cost[i * m + j] * f as f64).sum()
    }

    #[test]
    fn assignment_small() {
        // optimal is the anti-diagonal
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let s = solve(&cost, &[1, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!(objective(&cost, 3, &s), 5.0);
    }

    #[test]
    fn marginals_hold_for_unbalanced_counts() {
        let cost: Vec<f64> = (0..15).map(|k| ((k * 7919) % 13) as f64).collect();
        let supply = [5, 7, 3];
        let demand = [2, 4, 6, 1, 2];
        let s = solve(&cost, &supply, &demand).unwrap();
        let mut rows = [0i64; 3];
        let mut cols = [0i64; 5];
        for &(i, j, f) in &s.flows {
            rows[i] += f;
            cols[j] += f;
        }
        assert_eq!(rows, supply);
        assert_eq!(cols, demand);
    }
}
