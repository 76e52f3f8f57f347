//! The four dynastic indicators computed per (province, year).

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{build_graph, group_by_province_year, KinGraph};
use crate::ingest::ElectionRecord;

/// Political HHI: sum of squared community weight shares, scaled to (0, 10000].
pub fn political_hhi(graph: &KinGraph, partition: &Partition) -> Result<f64> {
    let mut shares = vec![0.0; partition.num_communities];
    for (v, &c) in partition.assignment.iter().enumerate() {
        shares[c] += graph.nodes[v].weight;
    }
    hhi_from_weights(&shares)
}

/// HHI of raw community weights (need not sum to 1).
pub fn hhi_from_weights(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || total <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(weights.iter().map(|w| (w / total * 100.0).powi(2)).sum())
}

/// Gini coefficient of weighted degrees. `None` when no node has any edge weight.
pub fn centrality_gini(graph: &KinGraph) -> Option<f64> {
    gini_sorted_form(&graph.weighted_degrees())
}

/// `sum((2i - n - 1) x_i) / (n sum x)` over ascending `x`.
pub fn gini_sorted_form(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return None;
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let num: f64 = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * xi)
        .sum();
    Some(num / (nf * total))
}

/// `1 - components / nodes`.
pub fn connected_component_density(graph: &KinGraph) -> Result<f64> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let (_, components) = graph.components();
    Ok(1.0 - components as f64 / n as f64)
}

/// Unweighted adjacency of the subgraph induced by `members` (local indices).
pub fn induced_subgraph(graph: &KinGraph, members: &[usize]) -> Vec<Vec<usize>> {
    let mut local = vec![usize::MAX; graph.node_count()];
    for (i, &v) in members.iter().enumerate() {
        local[v] = i;
    }
    let mut adj = vec![Vec::new(); members.len()];
    for e in &graph.edges {
        let (a, b) = (local[e.u], local[e.v]);
        if a != usize::MAX && b != usize::MAX && a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn is_connected(adj: &[Vec<usize>]) -> (bool, usize) {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    (components <= 1, components)
}

/// Residual network of the vertex-split graph: node `v` becomes `2v` (in) and
/// `2v + 1` (out) joined by a unit arc; graph edges become uncapacitated arcs.
struct SplitNetwork {
    /// (head, capacity, index of reverse arc)
    arcs: Vec<Vec<(usize, i64, usize)>>,
}

const UNBOUNDED: i64 = i64::MAX / 4;

impl SplitNetwork {
    fn new(adj: &[Vec<usize>], s: usize, t: usize) -> Self {
        let mut net = SplitNetwork {
            arcs: vec![Vec::new(); 2 * adj.len()],
        };
        for (v, neighbors) in adj.iter().enumerate() {
            let cap = if v == s || v == t { UNBOUNDED } else { 1 };
            net.add(2 * v, 2 * v + 1, cap);
            for &u in neighbors {
                net.add(2 * v + 1, 2 * u, UNBOUNDED);
            }
        }
        net
    }

    fn add(&mut self, from: usize, to: usize, cap: i64) {
        let rev_from = self.arcs[to].len();
        let rev_to = self.arcs[from].len();
        self.arcs[from].push((to, cap, rev_from));
        self.arcs[to].push((from, 0, rev_to));
    }

    /// Unit augmenting paths until `limit` is reached or no path remains.
    fn max_flow(&mut self, source: usize, sink: usize, limit: usize) -> usize {
        let mut flow = 0;
        let n = self.arcs.len();
        while flow < limit {
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut queue = VecDeque::from([source]);
            let mut reached = false;
            'bfs: while let Some(v) = queue.pop_front() {
                for (i, &(u, cap, _)) in self.arcs[v].iter().enumerate() {
                    if cap > 0 && u != source && prev[u].is_none() {
                        prev[u] = Some((v, i));
                        if u == sink {
                            reached = true;
                            break 'bfs;
                        }
                        queue.push_back(u);
                    }
                }
            }
            if !reached {
                break;
            }
            let mut v = sink;
            while let Some((p, i)) = prev[v] {
                let rev = self.arcs[p][i].2;
                self.arcs[p][i].1 -= 1;
                self.arcs[v][rev].1 += 1;
                v = p;
            }
            flow += 1;
        }
        flow
    }
}

/// Minimum number of vertices separating non-adjacent `s` and `t`, capped at `limit`.
pub fn local_vertex_connectivity(adj: &[Vec<usize>], s: usize, t: usize, limit: usize) -> usize {
    let mut net = SplitNetwork::new(adj, s, t);
    net.max_flow(2 * s + 1, 2 * t, limit)
}

/// Vertex connectivity of a connected simple graph given as adjacency lists.
///
/// A single vertex has connectivity 0 and a complete graph `n - 1`. Otherwise the
/// minimum local connectivity over non-adjacent pairs, where it suffices to take
/// sources among the first `kappa + 1` vertices.
pub fn vertex_connectivity(adj: &[Vec<usize>]) -> Result<usize> {
    let n = adj.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if n == 1 {
        return Ok(0);
    }
    let (connected, components) = is_connected(adj);
    if !connected {
        return Err(Error::Disconnected { components });
    }
    let mut best = n - 1;
    let mut adjacent = vec![false; n];
    let mut i = 0;
    while i <= best && i < n {
        adjacent.iter_mut().for_each(|a| *a = false);
        for &u in &adj[i] {
            adjacent[u] = true;
        }
        for (j, &adj_ij) in adjacent.iter().enumerate() {
            if j != i && !adj_ij {
                best = best.min(local_vertex_connectivity(adj, i, j, best));
            }
        }
        i += 1;
    }
    Ok(best)
}

/// Community connectivity terms `kappa(C) / |C|`, one per community.
pub fn community_connectivity_terms(graph: &KinGraph, partition: &Partition) -> Result<Vec<f64>> {
    partition
        .members()
        .iter()
        .map(|members| {
            if members.len() <= 1 {
                return Ok(0.0);
            }
            let adj = induced_subgraph(graph, members);
            Ok(vertex_connectivity(&adj)? as f64 / members.len() as f64)
        })
        .collect()
}

/// Sum over communities of vertex connectivity divided by community size.
pub fn average_community_connectivity(graph: &KinGraph, partition: &Partition) -> Result<f64> {
    Ok(community_connectivity_terms(graph, partition)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub province: String,
    pub year: i32,
    pub hhi: f64,
    /// Missing when the graph has no edges.
    pub cgc: Option<f64>,
    pub ccd: f64,
    pub acc: f64,
    /// ACC divided by the number of communities.
    pub acc_mean: f64,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_communities: usize,
    pub n_components: usize,
}

/// Indicators for one graph and its partition.
pub fn indicator_row(graph: &KinGraph, partition: &Partition) -> Result<IndicatorRow> {
    let acc = average_community_connectivity(graph, partition)?;
    let (_, n_components) = graph.components();
    Ok(IndicatorRow {
        province: graph.province.clone(),
        year: graph.year,
        hhi: political_hhi(graph, partition)?,
        cgc: centrality_gini(graph),
        ccd: connected_component_density(graph)?,
        acc,
        acc_mean: acc / partition.num_communities.max(1) as f64,
        n_nodes: graph.node_count(),
        n_edges: graph.edge_count(),
        n_communities: partition.num_communities,
        n_components,
    })
}

/// Partition implied by the records' stored community ids, aligned with `graph` nodes.
pub fn partition_from_records(graph: &KinGraph, records: &[ElectionRecord]) -> Result<Partition> {
    let mut ids = BTreeMap::new();
    let mut assignment = Vec::with_capacity(graph.node_count());
    for node in &graph.nodes {
        let c = records[node.record]
            .community_id
            .ok_or(Error::UnassignedCommunity { index: node.record })?;
        let next = ids.len();
        assignment.push(*ids.entry(c).or_insert(next));
    }
    Ok(Partition {
        num_communities: ids.len(),
        modularity: crate::community::modularity(graph, &assignment, 1.0),
        assignment,
    })
}

/// Indicator result for every (province, year), ordered by province then year.
/// A failing group does not stop the others.
pub fn compute_each(records: &[ElectionRecord]) -> Vec<((String, i32), Result<IndicatorRow>)> {
    let groups: Vec<((String, i32), Vec<usize>)> = group_by_province_year(records).into_iter().collect();
    let compute = |(key, idx): &((String, i32), Vec<usize>)| {
        let graph = build_graph(idx.iter().map(|&i| (i, &records[i])));
        let row = partition_from_records(&graph, records).and_then(|p| indicator_row(&graph, &p));
        (key.clone(), row)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        groups.par_iter().map(compute).collect()
    }
    #[cfg(not(feature = "parallel"))]
    groups.iter().map(compute).collect()
}

/// One indicator row per (province, year), ordered by province then year.
pub fn compute_all(records: &[ElectionRecord]) -> Result<Vec<IndicatorRow>> {
    compute_each(records).into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Hhi,
    Cgc,
    Ccd,
    Acc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Hhi, Metric::Cgc, Metric::Ccd, Metric::Acc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Hhi => "HHI",
            Metric::Cgc => "CGC",
            Metric::Ccd => "CCD",
            Metric::Acc => "ACC",
        }
    }

    pub fn value(self, row: &IndicatorRow) -> Option<f64> {
        match self {
            Metric::Hhi => Some(row.hhi),
            Metric::Cgc => row.cgc,
            Metric::Ccd => Some(row.ccd),
            Metric::Acc => Some(row.acc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub year: i32,
    pub rank: usize,
    pub province: String,
    pub value: f64,
}

/// Provinces ranked by descending metric value within each year. Missing values are left out.
pub fn rank_table(rows: &[IndicatorRow], metric: Metric) -> Vec<RankEntry> {
    let mut by_year: BTreeMap<i32, Vec<(&str, f64)>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = metric.value(r) {
            by_year.entry(r.year).or_default().push((&r.province, v));
        }
    }
    let mut out = Vec::new();
    for (year, mut entries) in by_year {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        out.extend(entries.into_iter().enumerate().map(|(i, (p, v))| RankEntry {
            year,
            rank: i + 1,
            province: p.to_string(),
            value: v,
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
    }

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect()
    }

    #[test]
    fn hhi_worked_examples() {
        assert_eq!(hhi_from_weights(&[5.0, 3.0, 2.0]).unwrap().round(), 3800.0);
        assert!((hhi_from_weights(&[0.5, 0.3, 0.2]).unwrap() - 3800.0).abs() < 1e-9);
        assert!((hhi_from_weights(&[0.8, 0.2]).unwrap() - 6800.0).abs() < 1e-9);
        assert_eq!(hhi_from_weights(&[7.0]).unwrap(), 10000.0);
        assert!(hhi_from_weights(&[]).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_sorted_form(&[4.0; 5]), Some(0.0));
        assert_eq!(gini_sorted_form(&[0.0, 10.0, 0.0, 0.0]), Some(0.75));
        assert_eq!(gini_sorted_form(&[0.0, 0.0]), None);
        let g = KinGraph::from_parts(&[1.0; 3], &[]);
        assert_eq!(centrality_gini(&g), None);
    }

    #[test]
    fn ccd_examples() {
        let g = KinGraph::from_parts(&[1.0; 5], &[]);
        assert_eq!(connected_component_density(&g).unwrap(), 0.0);
        let g = KinGraph::from_parts(&[1.0; 4], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        assert_eq!(connected_component_density(&g).unwrap(), 0.75);
        let g = KinGraph::from_parts(
            &[1.0; 10],
            &[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 6, 1.0), (7, 8, 1.0)],
        );
        // components {0,1,2} {3,4,5,6} {7,8} {9}
        assert!((connected_component_density(&g).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn connectivity_examples() {
        assert_eq!(vertex_connectivity(&complete(4)).unwrap(), 3);
        assert_eq!(vertex_connectivity(&path(5)).unwrap(), 1);
        let cycle4 = vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]];
        assert_eq!(vertex_connectivity(&cycle4).unwrap(), 2);
        assert_eq!(vertex_connectivity(&complete(1)).unwrap(), 0);
        assert_eq!(vertex_connectivity(&complete(2)).unwrap(), 1);
        let split = vec![vec![1], vec![0], vec![]];
        assert!(matches!(
            vertex_connectivity(&split),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn acc_sums_ratios() {
        // K4 on 0..4, P5 on 4..9
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((i, j, 1.0));
            }
        }
        for i in 4..8 {
            edges.push((i, i + 1, 1.0));
        }
        let g = KinGraph::from_parts(&[1.0; 9], &edges);
        let one = Partition {
            assignment: vec![0, 0, 0, 0, 1, 1, 1, 1, 1],
            num_communities: 2,
            modularity: 0.0,
        };
        assert!((average_community_connectivity(&g, &one).unwrap() - 0.95).abs() < 1e-15);
        let singles = Partition {
            assignment: (0..9).collect(),
            num_communities: 9,
            modularity: 0.0,
        };
        assert_eq!(average_community_connectivity(&g, &singles).unwrap(), 0.0);
    }

    #[test]
    fn ranks_descend_within_year() {
        let row = |p: &str, year, hhi| IndicatorRow {
            province: p.into(),
            year,
            hhi,
            cgc: None,
            ccd: 0.0,
            acc: 0.0,
            acc_mean: 0.0,
            n_nodes: 1,
            n_edges: 0,
            n_communities: 1,
            n_components: 1,
        };
        let rows = vec![row("A", 2004, 100.0), row("B", 2004, 300.0), row("A", 2007, 5.0)];
        let ranks = rank_table(&rows, Metric::Hhi);
        assert_eq!(ranks[0].province, "B");
        assert_eq!(ranks[0].rank, 1);
        assert_eq!(ranks[2].year, 2007);
        assert!(rank_table(&rows, Metric::Cgc).is_empty());
    }
}
