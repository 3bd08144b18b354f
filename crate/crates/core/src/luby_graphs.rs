//! One round of Luby's selection on explicit graphs, and the layered family
//! on which it leaves a logarithmic ruling radius.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mpc::stream_rng;

/// Largest layer count accepted by [`build_lower_bound_instance`].
pub const MAX_LAYERS: usize = 10;
/// Largest replication accepted by [`build_lower_bound_instance`].
pub const MAX_COPIES: usize = 4096;

/// An undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Normalises each edge to `(min, max)` and sorts; self-loops, duplicates
    /// and out-of-range endpoints are errors.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::usage(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::usage(format!("edge ({a}, {b}) outside {n} vertices")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::usage(format!("duplicate edge {:?}", w[0])));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &list {
            adj[a].push(b);
            adj[b].push(a);
        }
        Ok(Graph { n, edges: list, adj })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Independent 64-bit labels, one per vertex.
pub fn draw_labels(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = stream_rng(seed, 0x4c55_4259, 0);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Vertices whose `(label, index)` is smallest in their closed neighbourhood.
pub fn luby_select(g: &Graph, labels: &[u64]) -> Vec<usize> {
    assert_eq!(labels.len(), g.n);
    (0..g.n)
        .filter(|&v| g.adj[v].iter().all(|&u| (labels[v], v) < (labels[u], u)))
        .collect()
}

/// One round of Luby's algorithm with labels drawn from `seed`.
pub fn luby_one_round(g: &Graph, seed: u64) -> Vec<usize> {
    luby_select(g, &draw_labels(g.n, seed))
}

/// Largest hop distance from a vertex to `s`; `usize::MAX` if some vertex
/// cannot reach `s`.
pub fn ruling_radius(g: &Graph, s: &[usize]) -> Result<usize> {
    if s.is_empty() {
        return Err(Error::usage("ruling radius of an empty set"));
    }
    let mut hops = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    for &v in s {
        if v >= g.n {
            return Err(Error::usage(format!("vertex {v} outside the graph")));
        }
        hops[v] = 0;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        for &u in &g.adj[v] {
            if hops[u] == usize::MAX {
                hops[u] = hops[v] + 1;
                queue.push_back(u);
            }
        }
    }
    Ok(hops.into_iter().max().unwrap_or(0))
}

/// True when no two vertices of `s` are adjacent.
pub fn is_independent(g: &Graph, s: &[usize]) -> bool {
    let mut member = vec![false; g.n];
    for &v in s {
        member[v] = true;
    }
    g.edges.iter().all(|&(a, b)| !(member[a] && member[b]))
}

/// Layers `V_1..V_m` with `|V_i| = 2^i`, a clique on each layer and all edges
/// between consecutive layers, replicated `copies` times.
#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundInstance {
    pub m: usize,
    pub copies: usize,
    pub graph: Graph,
}

impl LowerBoundInstance {
    /// Vertices per copy, `2^(m+1) - 2`.
    pub fn copy_size(&self) -> usize {
        copy_size(self.m)
    }

    /// Vertex ids of layer `i` (1-based) in copy `c`.
    pub fn layer(&self, copy: usize, i: usize) -> std::ops::Range<usize> {
        layer_range(self.m, copy, i)
    }
}

fn copy_size(m: usize) -> usize {
    (1 << (m + 1)) - 2
}

fn layer_range(m: usize, copy: usize, i: usize) -> std::ops::Range<usize> {
    let start = copy * copy_size(m) + (1 << i) - 2;
    start..start + (1 << i)
}

pub fn build_lower_bound_instance(m: usize, copies: usize) -> Result<LowerBoundInstance> {
    if m < 2 || m > MAX_LAYERS {
        return Err(Error::usage(format!("layer count must lie in [2, {MAX_LAYERS}], got {m}")));
    }
    if copies == 0 || copies > MAX_COPIES {
        return Err(Error::usage(format!("copies must lie in [1, {MAX_COPIES}], got {copies}")));
    }
    let mut edges = Vec::new();
    for c in 0..copies {
        for i in 1..=m {
            let layer = layer_range(m, c, i);
            for a in layer.clone() {
                for b in a + 1..layer.end {
                    edges.push((a, b));
                }
            }
            if i < m {
                for a in layer.clone() {
                    for b in layer_range(m, c, i + 1) {
                        edges.push((a, b));
                    }
                }
            }
        }
    }
    Ok(LowerBoundInstance {
        m,
        copies,
        graph: Graph::new(copies * copy_size(m), edges)?,
    })
}

/// Whether, for every `i < m`, some vertex of layer `i + 1` has a smaller
/// label than all of layer `i`, in copy `copy`.
pub fn chain_event(inst: &LowerBoundInstance, labels: &[u64], copy: usize) -> bool {
    let min_of = |i: usize| inst.layer(copy, i).map(|v| labels[v]).min().expect("layer nonempty");
    (1..inst.m).all(|i| min_of(i + 1) < min_of(i))
}

/// Empirical frequency of the chain event over independent label draws on
/// a single copy with `m` layers. With `m <= 1` the event is empty and holds.
pub fn chain_event_frequency(m: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::usage("trials must be positive"));
    }
    if m <= 1 {
        return Ok(1.0);
    }
    if m > MAX_LAYERS {
        return Err(Error::usage(format!("layer count above {MAX_LAYERS}")));
    }
    let hits: usize = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = stream_rng(seed, 0x4348_4149, t as u64);
            let mins: Vec<u64> = (1..=m)
                .map(|i| (0..1usize << i).map(|_| rng.next_u64()).min().expect("layer nonempty"))
                .collect();
            (0..m - 1).all(|i| mins[i + 1] < mins[i])
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

/// The per-layer product `prod_{i=1}^{m-1} (1 - (1 - 1/(2^i + 1))^(2^(i+1)))`.
pub fn analytic_chain_probability(m: usize) -> f64 {
    (1..m)
        .map(|i| {
            let a = (1u64 << i) as f64;
            1.0 - (1.0 - 1.0 / (a + 1.0)).powf(2.0 * a)
        })
        .product()
}

/// Exact probability that the layer minima decrease from `V_1` to `V_m`:
/// the overall minimum must lie in `V_m`, then the minimum of the rest in
/// `V_(m-1)`, and so on, giving `prod_{j=2}^{m} 2^(j-1) / (2^j - 1)`.
pub fn exact_chain_probability(m: usize) -> f64 {
    (2..=m)
        .map(|j| (1u64 << (j - 1)) as f64 / ((1u64 << j) - 1) as f64)
        .product()
}

/// Outcome of one Luby round on a lower-bound instance.
#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundRun {
    pub radius: usize,
    /// Copies in which the chain event holds.
    pub event_copies: usize,
    /// Largest ruling radius inside a copy where the event holds.
    pub event_radius: Option<usize>,
}

/// Runs one Luby round on `inst` and measures the radius overall and in
/// copies where the chain event occurs.
pub fn lower_bound_run(inst: &LowerBoundInstance, seed: u64) -> Result<LowerBoundRun> {
    let labels = draw_labels(inst.graph.n, seed);
    let sel = luby_select(&inst.graph, &labels);
    let radius = ruling_radius(&inst.graph, &sel)?;
    let mut event_copies = 0;
    let mut event_radius: Option<usize> = None;
    let size = inst.copy_size();
    for c in 0..inst.copies {
        if chain_event(inst, &labels, c) {
            event_copies += 1;
            let local: Vec<usize> = sel.iter().copied().filter(|&v| v / size == c).collect();
            let r = copy_radius(inst, c, &local);
            event_radius = Some(event_radius.map_or(r, |e| e.max(r)));
        }
    }
    Ok(LowerBoundRun {
        radius,
        event_copies,
        event_radius,
    })
}

fn copy_radius(inst: &LowerBoundInstance, copy: usize, sel: &[usize]) -> usize {
    let size = inst.copy_size();
    let base = copy * size;
    let mut hops = vec![usize::MAX; size];
    let mut queue = VecDeque::new();
    for &v in sel {
        hops[v - base] = 0;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        for &u in inst.graph.neighbors(v) {
            if hops[u - base] == usize::MAX {
                hops[u - base] = hops[v - base] + 1;
                queue.push_back(u);
            }
        }
    }
    hops.into_iter().max().unwrap_or(0)
}

/// Copies needed so that the chain event appears in at least one copy with
/// probability `target`, given per-copy probability `p`.
pub fn copies_for_boost(p: f64, target: f64) -> usize {
    if p >= 1.0 {
        return 1;
    }
    ((1.0 - target).ln() / (1.0 - p).ln()).ceil().max(1.0) as usize
}

/// Random graph on `n` vertices in which every vertex has degree at most
/// `max_degree`: candidate edges are visited in random order and kept while
/// both endpoints have room.
pub fn random_bounded_degree_graph(n: usize, max_degree: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    let mut rng = stream_rng(seed, 0x4752_4150, 0);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(edge_prob.clamp(0.0, 1.0)) {
                pairs.push((a, b));
            }
        }
    }
    pairs.shuffle(&mut rng);
    let mut deg = vec![0usize; n];
    let mut edges = Vec::new();
    for (a, b) in pairs {
        if deg[a] < max_degree && deg[b] < max_degree {
            deg[a] += 1;
            deg[b] += 1;
            edges.push((a, b));
        }
    }
    Graph::new(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luby_examples() {
        let tri = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        for seed in 0..50 {
            let s = luby_one_round(&tri, seed);
            assert_eq!(s.len(), 1);
            assert_eq!(ruling_radius(&tri, &s).unwrap(), 1);
        }
        let empty = Graph::new(4, []).unwrap();
        assert_eq!(luby_one_round(&empty, 3), vec![0, 1, 2, 3]);
        let edge = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(luby_one_round(&edge, 9).len(), 1);
    }

    #[test]
    fn radius_examples() {
        let path = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(ruling_radius(&path, &[0, 1]).unwrap(), 0);
        assert_eq!(ruling_radius(&path, &[0]).unwrap(), 1);
        assert!(ruling_radius(&path, &[]).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(2, [(0, 0)]).is_err());
        assert!(Graph::new(2, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn lower_bound_counts() {
        let g = build_lower_bound_instance(3, 1).unwrap();
        assert_eq!(g.graph.vertex_count(), 14);
        let g = build_lower_bound_instance(2, 1).unwrap();
        assert_eq!(g.graph.vertex_count(), 6);
        assert_eq!(g.graph.edges().len(), 15);
        let g2 = build_lower_bound_instance(2, 2).unwrap();
        assert_eq!(g2.graph.vertex_count(), 12);
        assert_eq!(g2.graph.edges().len(), 30);
        assert!(build_lower_bound_instance(1, 1).is_err());
    }

    #[test]
    fn exact_chain_probability_matches_enumeration() {
        // m = 2: the smallest of the six labels must sit in the layer of four.
        assert!((exact_chain_probability(2) - 2.0 / 3.0).abs() < 1e-12);
        assert!((analytic_chain_probability(2) - 65.0 / 81.0).abs() < 1e-12);
        assert_eq!(chain_event_frequency(1, 5, 0).unwrap(), 1.0);
        let f = chain_event_frequency(3, 20_000, 1).unwrap();
        let p = exact_chain_probability(3);
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / 20_000.0).sqrt(), "{f} vs {p}");
    }

    #[test]
    fn event_forces_long_radius() {
        let inst = build_lower_bound_instance(4, 40).unwrap();
        for seed in 0..10 {
            let run = lower_bound_run(&inst, seed).unwrap();
            if let Some(r) = run.event_radius {
                assert!(r >= inst.m - 1);
            }
        }
    }
}
