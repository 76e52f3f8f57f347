//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use kinnet::graph::KinGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Modularity straight from the pairwise definition, summing over ordered node pairs.
pub fn modularity_pairwise(graph: &KinGraph, assignment: &[usize], gamma: f64) -> f64 {
    let n = graph.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for e in &graph.edges {
        a[e.u][e.v] += e.weight;
        a[e.v][e.u] += e.weight;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                q += a[i][j] - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur[i] = c;
            go(i + 1, max.max(c), cur, out);
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    go(1, 0, &mut cur, &mut out);
    out
}

/// Best modularity over all set partitions.
pub fn brute_force_modularity(graph: &KinGraph, gamma: f64) -> f64 {
    set_partitions(graph.node_count())
        .iter()
        .map(|p| modularity_pairwise(graph, p, gamma))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gini as mean absolute difference over all ordered pairs.
pub fn gini_mad(x: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let total: f64 = x.iter().sum();
    if x.is_empty() || total <= 0.0 {
        return None;
    }
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b).abs();
        }
    }
    Some(s / (2.0 * n * total))
}

/// Number of connected components by a plain union-find over an edge list.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    let mut count = n;
    for &(u, v) in edges {
        let (a, b) = (root(&mut parent, u), root(&mut parent, v));
        if a != b {
            parent[a] = b;
            count -= 1;
        }
    }
    count
}

fn connected_without(adj: &[Vec<usize>], removed: u32) -> bool {
    let n = adj.len();
    let Some(start) = (0..n).find(|&v| removed & (1 << v) == 0) else {
        return true;
    };
    let mut seen = removed | (1 << start);
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if seen & (1 << u) == 0 {
                seen |= 1 << u;
                stack.push(u);
            }
        }
    }
    seen.count_ones() as usize == n
}

/// Smallest vertex set whose removal disconnects the graph, found by trying every subset.
/// Complete graphs give `n - 1`.
pub fn vertex_connectivity_exhaustive(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    assert!(n <= 16);
    if n <= 1 {
        return 0;
    }
    let mut best = n - 1;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k < best && n - k >= 2 && !connected_without(adj, mask) {
            best = k;
        }
    }
    best
}

/// Gnp graph with `n` nodes, integer edge weights in 1..=15 and node weights in 1..=5.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> KinGraph {
    let node_weights: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5) as f64).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v, rng.random_range(1..=15) as f64));
            }
        }
    }
    KinGraph::from_parts(&node_weights, &edges)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// True when every community induces a connected subgraph.
pub fn communities_connected(graph: &KinGraph, assignment: &[usize]) -> bool {
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    (0..k).all(|c| {
        let members: Vec<usize> = (0..graph.node_count()).filter(|&v| assignment[v] == c).collect();
        let index = |v: usize| members.iter().position(|&m| m == v);
        let edges: Vec<(usize, usize)> = graph
            .edges
            .iter()
            .filter_map(|e| Some((index(e.u)?, index(e.v)?)))
            .collect();
        members.is_empty() || component_count(members.len(), &edges) == 1
    })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ra.values().map(|&v| choose2(v)).sum();
    let sb: f64 = rb.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(a.len() as f64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Counts of positive-rank sums over all 2^n sign patterns of ranks 1..=n.
pub fn signed_rank_enumeration(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    for mask in 0u32..(1 << n) {
        let s: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        counts[s] += 1;
    }
    counts
}
