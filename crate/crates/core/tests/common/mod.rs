//! Independent oracles for the acceptance suite.
//!
//! These deliberately avoid the library's breadth-first machinery: components
//! are computed by union-find over the explicit edge list, and distances by
//! repeated edge relaxation.

use std::collections::BTreeMap;

use ends_core::exhaust::Compactum;
use ends_core::graph::{Ball, VertexId};

pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Number of components of `window - k` that touch the window boundary,
/// by union-find over the explicit edge list.
pub fn oracle_unbounded_count(window: &Ball, k: &Compactum) -> usize {
    let verts: Vec<VertexId> = window.vertices().filter(|v| !k.contains(*v)).collect();
    let index: BTreeMap<VertexId, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut dsu = DisjointSet::new(verts.len());
    for (u, v) in window.edges() {
        if let (Some(&a), Some(&b)) = (index.get(&u), index.get(&v)) {
            dsu.union(a, b);
        }
    }
    let mut touches: Vec<bool> = vec![false; verts.len()];
    for &s in window.boundary_sphere() {
        if let Some(&i) = index.get(&s) {
            let root = dsu.find(i);
            touches[root] = true;
        }
    }
    // count roots marked as touching
    (0..verts.len())
        .filter(|&i| dsu.find(i) == i && touches[i])
        .count()
}

/// Distances from the window center by repeated relaxation over the full
/// edge list (no queue, no neighbor order).
pub fn oracle_distances(window: &Ball) -> BTreeMap<VertexId, u32> {
    let mut dist: BTreeMap<VertexId, u32> = BTreeMap::new();
    dist.insert(window.center(), 0);
    let edges: Vec<(VertexId, VertexId)> = window.edges().collect();
    loop {
        let mut changed = false;
        for &(u, v) in &edges {
            let du = dist.get(&u).copied();
            let dv = dist.get(&v).copied();
            if let Some(d) = du {
                if dv.is_none_or(|x| x > d + 1) {
                    dist.insert(v, d + 1);
                    changed = true;
                }
            }
            if let Some(d) = dist.get(&v).copied() {
                if dist.get(&u).is_none_or(|x| *x > d + 1) {
                    dist.insert(u, d + 1);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}
