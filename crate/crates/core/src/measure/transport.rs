//! Primal network simplex for balanced, uncapacitated transportation problems.
//!
//! Nodes are the sources, the sinks and an artificial root. The starting
//! basis routes every supply through the root on big-M artificial arcs; that
//! tree is strongly feasible and the leaving-arc rule (last blocking arc met
//! when walking the cycle from its apex in the entering direction) keeps it
//! so, which rules out cycling on the heavily degenerate transport polytope.
//! The basis survives cost changes, so repeated solves on the same supports
//! are warm-started.

use crate::prelude::*;
use crate::{Error, Result};

pub(crate) struct Transport {
    ns: usize,
    nt: usize,
    flow: Vec<f64>,
    cost: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    tree: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    next_block: usize,
    eps: f64,
    total: f64,
}

const NONE: usize = usize::MAX;

impl Transport {
    /// `supply` and `demand` must be positive with equal sums.
    pub(crate) fn new(supply: &[f64], demand: &[f64]) -> Self {
        let (ns, nt) = (supply.len(), demand.len());
        let nodes = ns + nt + 1;
        let real = ns * nt;
        let mut flow = vec![0.0; real + ns + nt];
        flow[real..real + ns].copy_from_slice(supply);
        flow[real + ns..].copy_from_slice(demand);
        let tree = (real..real + ns + nt).collect();
        Transport {
            ns,
            nt,
            flow,
            cost: vec![0.0; real + ns + nt],
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            up: vec![false; nodes],
            depth: vec![0; nodes],
            pi: vec![0.0; nodes],
            tree,
            adjacency: vec![Vec::new(); nodes],
            next_block: 0,
            eps: 0.0,
            total: supply.iter().sum(),
        }
    }

    fn root(&self) -> usize {
        self.ns + self.nt
    }

    fn real_arcs(&self) -> usize {
        self.ns * self.nt
    }

    fn ends(&self, a: usize) -> (usize, usize) {
        let real = self.real_arcs();
        if a < real {
            (a / self.nt, self.ns + a % self.nt)
        } else {
            let node = a - real;
            if node < self.ns {
                (node, self.root())
            } else {
                (self.root(), node)
            }
        }
    }

    /// Flow on the arc from source `i` to sink `j`.
    pub(crate) fn flow(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.nt + j]
    }

    /// Solve with `cost[i * nt + j]` (nonnegative) from source `i` to sink
    /// `j`; returns the optimal cost.
    pub(crate) fn solve(&mut self, cost: &[f64]) -> Result<f64> {
        let real = self.real_arcs();
        debug_assert_eq!(cost.len(), real);
        let max_c = cost.iter().fold(0.0f64, |m, &c| m.max(c));
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::LpFailure("non-finite transport cost".to_string()));
        }
        let big_m = (max_c + 1.0) * (self.ns + self.nt + 1) as f64;
        self.cost[..real].copy_from_slice(cost);
        for c in &mut self.cost[real..] {
            *c = big_m;
        }
        self.rebuild();

        let block = ((real as f64).sqrt().ceil() as usize).max(16).min(real.max(1));
        let cap = 50 * (real + self.ns + self.nt) + 10_000;
        let mut iterations = 0usize;
        while let Some(e) = self.price(block) {
            iterations += 1;
            if iterations > cap {
                return Err(Error::LpFailure(format!("no convergence after {cap} pivots")));
            }
            self.pivot(e)?;
        }

        let stray: f64 = self.flow[real..].iter().sum();
        if stray > 1e-9 * self.total.max(1.0) {
            return Err(Error::LpFailure(format!("artificial flow {stray:e} remains")));
        }
        Ok(self.flow[..real].iter().zip(cost).map(|(f, c)| f * c).sum())
    }

    /// Block pricing over real arcs: most negative reduced cost within the
    /// first block (cyclically) that has an improving arc.
    fn price(&mut self, block: usize) -> Option<usize> {
        let real = self.real_arcs();
        if real == 0 {
            return None;
        }
        let mut scanned = 0;
        let mut a = self.next_block % real;
        while scanned < real {
            let end = (a + block).min(real);
            let mut best = NONE;
            let mut best_rc = -self.eps;
            for arc in a..end {
                let (i, j) = (arc / self.nt, self.ns + arc % self.nt);
                let rc = self.cost[arc] + self.pi[i] - self.pi[j];
                if rc < best_rc {
                    best_rc = rc;
                    best = arc;
                }
            }
            scanned += end - a;
            a = if end == real { 0 } else { end };
            if best != NONE {
                self.next_block = a;
                return Some(best);
            }
        }
        None
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let (u, v) = self.ends(entering);
        let (mut a, mut b) = (u, v);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        // cycle order from the apex: down to u, across the entering arc, up from v
        let mut u_side = Vec::new();
        let mut x = u;
        while x != join {
            u_side.push(x);
            x = self.parent[x];
        }
        u_side.reverse();
        let mut v_side = Vec::new();
        let mut x = v;
        while x != join {
            v_side.push(x);
            x = self.parent[x];
        }

        let mut delta = f64::INFINITY;
        let mut leaving = NONE;
        for &x in &u_side {
            // traversed parent -> x
            if self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leaving = x;
            }
        }
        for &x in &v_side {
            // traversed x -> parent
            if !self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leaving = x;
            }
        }
        if leaving == NONE {
            return Err(Error::LpFailure("unbounded transport cycle".to_string()));
        }

        for &x in &u_side {
            let arc = self.pred[x];
            if self.up[x] {
                self.flow[arc] -= delta;
            } else {
                self.flow[arc] += delta;
            }
        }
        for &x in &v_side {
            let arc = self.pred[x];
            if self.up[x] {
                self.flow[arc] += delta;
            } else {
                self.flow[arc] -= delta;
            }
        }
        self.flow[entering] = delta;
        let out = self.pred[leaving];
        self.flow[out] = 0.0;
        let slot = self.tree.iter().position(|&t| t == out).expect("leaving arc is a tree arc");
        self.tree[slot] = entering;
        self.rebuild();
        Ok(())
    }

    /// Parent pointers, depths and potentials from the current tree arcs.
    fn rebuild(&mut self) {
        for adj in &mut self.adjacency {
            adj.clear();
        }
        for &arc in &self.tree {
            let (p, q) = self.ends(arc);
            self.adjacency[p].push(arc);
            self.adjacency[q].push(arc);
        }
        let root = self.root();
        self.parent[root] = NONE;
        self.pred[root] = NONE;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut max_pi = 0.0f64;
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            for k in 0..self.adjacency[x].len() {
                let arc = self.adjacency[x][k];
                if arc == self.pred[x] {
                    continue;
                }
                let (p, q) = self.ends(arc);
                let (child, up) = if p == x { (q, false) } else { (p, true) };
                self.parent[child] = x;
                self.pred[child] = arc;
                self.up[child] = up;
                self.depth[child] = self.depth[x] + 1;
                // tree arcs have zero reduced cost: pi[to] = pi[from] + c
                self.pi[child] = if up { self.pi[x] - self.cost[arc] } else { self.pi[x] + self.cost[arc] };
                max_pi = max_pi.max(self.pi[child].abs());
                stack.push(child);
            }
        }
        let max_c = self.cost[..self.real_arcs()].iter().fold(0.0f64, |m, &c| m.max(c));
        self.eps = 64.0 * f64::EPSILON * (max_pi + max_c + 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over all transport vertices is not practical; for 2x2 the
    /// plan has one free parameter, so the optimum is at an endpoint.
    fn two_by_two(a: [f64; 2], b: [f64; 2], c: [f64; 4]) -> f64 {
        let lo = (a[0] - b[1]).max(0.0);
        let hi = a[0].min(b[0]);
        let cost = |x: f64| {
            let f = [x, a[0] - x, b[0] - x, a[1] - (b[0] - x)];
            f.iter().zip(&c).map(|(f, c)| f * c).sum::<f64>()
        };
        cost(lo).min(cost(hi))
    }

    #[test]
    fn matches_two_by_two() {
        let cases = [
            ([0.5, 0.5], [0.3, 0.7], [1.0, 2.0, 3.0, 1.0]),
            ([0.2, 0.8], [0.6, 0.4], [0.0, 5.0, 1.0, 0.5]),
            ([0.5, 0.5], [0.5, 0.5], [1.0, 1.0, 1.0, 1.0]),
        ];
        for (a, b, c) in cases {
            let mut t = Transport::new(&a, &b);
            let v = t.solve(&c).unwrap();
            assert!((v - two_by_two(a, b, c)).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn assignment_picks_permutation_minimum() {
        // 4x4 assignment: enumerate all 24 permutations
        let c = [
            4.0, 1.0, 3.0, 2.0, //
            2.0, 0.0, 5.0, 3.0, //
            3.0, 2.0, 2.0, 1.0, //
            1.0, 4.0, 2.0, 6.0,
        ];
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        fn heap(k: usize, p: &mut [usize; 4], c: &[f64; 16], best: &mut f64) {
            if k == 1 {
                let v: f64 = (0..4).map(|i| c[i * 4 + p[i]]).sum();
                *best = best.min(v);
                return;
            }
            for i in 0..k {
                heap(k - 1, p, c, best);
                if k.is_multiple_of(2) {
                    p.swap(i, k - 1);
                } else {
                    p.swap(0, k - 1);
                }
            }
        }
        heap(4, &mut perm, &c, &mut best);
        let mut t = Transport::new(&[0.25; 4], &[0.25; 4]);
        let v = t.solve(&c).unwrap();
        assert!((v - best / 4.0).abs() < 1e-12);
        // warm start with new costs
        let c2: Vec<f64> = c.iter().map(|x| (x - 2.0f64).abs()).collect();
        let v2 = t.solve(&c2).unwrap();
        let mut t2 = Transport::new(&[0.25; 4], &[0.25; 4]);
        assert!((v2 - t2.solve(&c2).unwrap()).abs() < 1e-12);
    }
}
