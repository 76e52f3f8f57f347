//! Modularity and Leiden community detection.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::KinGraph;

/// Absolute modularity gain below which the outer loop stops.
pub const CONVERGENCE_TOL: f64 = 1e-10;
const MAX_OUTER_ITERATIONS: usize = 100;
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community id per node, `0..num_communities`.
    pub assignment: Vec<usize>,
    pub num_communities: usize,
    pub modularity: f64,
}

impl Partition {
    /// Node lists per community.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_communities];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeidenConfig {
    pub gamma: f64,
    pub seed: u64,
    /// Use edge weights; when false every edge counts as 1.
    pub weighted: bool,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        LeidenConfig {
            gamma: 1.0,
            seed: 42,
            weighted: true,
        }
    }
}

/// Weighted modularity of `assignment` at resolution `gamma`.
///
/// `e_c` counts each intra-community edge twice and `K_c` is the summed weighted
/// degree of community `c`, so a single all-inclusive community scores `1 - gamma`.
/// A graph with no edge weight scores 0.
pub fn modularity(graph: &KinGraph, assignment: &[usize], gamma: f64) -> f64 {
    let m: f64 = graph.total_edge_weight();
    if m <= 0.0 {
        log::debug!("modularity of a graph with zero edge weight is defined as 0");
        return 0.0;
    }
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for e in &graph.edges {
        degree[assignment[e.u]] += e.weight;
        degree[assignment[e.v]] += e.weight;
        if assignment[e.u] == assignment[e.v] {
            internal[assignment[e.u]] += 2.0 * e.weight;
        }
    }
    let two_m = 2.0 * m;
    internal
        .iter()
        .zip(&degree)
        .map(|(&e_c, &k_c)| e_c - gamma * k_c * k_c / two_m)
        .sum::<f64>()
        / two_m
}

/// Working network for one Leiden level. Aggregate nodes keep their internal
/// weight in `self_weight` and never list themselves in `adj`.
#[derive(Debug, Clone)]
struct Network {
    adj: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    degree: Vec<f64>,
}

impl Network {
    fn from_graph(graph: &KinGraph, weighted: bool) -> Self {
        let n = graph.node_count();
        let mut adj = vec![Vec::new(); n];
        for e in &graph.edges {
            let w = if weighted { e.weight } else { 1.0 };
            if e.u != e.v {
                adj[e.u].push((e.v, w));
                adj[e.v].push((e.u, w));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(u, _)| u);
        }
        let degree = adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
        Network {
            adj,
            self_weight: vec![0.0; n],
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Collapses each group of `membership` into one node.
    fn aggregate(&self, membership: &[usize], groups: usize) -> Network {
        let mut self_weight = vec![0.0; groups];
        let mut degree = vec![0.0; groups];
        let mut acc: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); groups];
        for v in 0..self.len() {
            let cv = membership[v];
            self_weight[cv] += self.self_weight[v];
            degree[cv] += self.degree[v];
            for &(u, w) in &self.adj[v] {
                let cu = membership[u];
                if cu == cv {
                    // each internal edge is visited from both ends
                    self_weight[cv] += w / 2.0;
                } else {
                    *acc[cv].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        Network {
            adj: acc.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_weight,
            degree,
        }
    }
}

struct Leiden<'a> {
    gamma: f64,
    two_m: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Leiden<'_> {
    fn gain(&self, k_v_c: f64, k_v: f64, k_c: f64) -> f64 {
        k_v_c - self.gamma * k_v * k_c / self.two_m
    }

    /// Fast local moving: visit nodes from a queue, re-queue neighbors of moved nodes.
    /// Returns whether any node changed community.
    fn move_nodes(&mut self, net: &Network, part: &mut [usize]) -> bool {
        let n = net.len();
        let mut comm_degree = vec![0.0; n];
        let mut comm_size = vec![0usize; n];
        for v in 0..n {
            comm_degree[part[v]] += net.degree[v];
            comm_size[part[v]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).filter(|&c| comm_size[c] == 0).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(self.rng);
        let mut queue: VecDeque<usize> = order.into();
        let mut queued = vec![true; n];
        let mut neighbor_weight = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut changed = false;

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let old = part[v];
            let k_v = net.degree[v];

            for &(u, w) in &net.adj[v] {
                let c = part[u];
                if neighbor_weight[c] == 0.0 {
                    touched.push(c);
                }
                neighbor_weight[c] += w;
            }

            comm_degree[old] -= k_v;
            comm_size[old] -= 1;
            let mut best = old;
            let mut best_gain = self.gain(neighbor_weight[old], k_v, comm_degree[old]);
            for &c in &touched {
                let g = self.gain(neighbor_weight[c], k_v, comm_degree[c]);
                if g > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g;
                }
            }
            // an empty community always offers gain 0
            if best_gain < -GAIN_EPS && comm_size[old] > 0 {
                if let Some(&c) = empty.last() {
                    best = c;
                }
            }
            if comm_size[old] == 0 && best != old {
                empty.push(old);
            }
            if best != old && empty.last() == Some(&best) {
                empty.pop();
            }
            comm_degree[best] += k_v;
            comm_size[best] += 1;
            part[v] = best;

            for c in touched.drain(..) {
                neighbor_weight[c] = 0.0;
            }
            if best != old {
                changed = true;
                for &(u, _) in &net.adj[v] {
                    if !queued[u] && part[u] != best {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        changed
    }

    /// Splits each community of `part` into well-connected sub-communities.
    /// Returns the refined membership with ids `0..count`.
    fn refine(&mut self, net: &Network, part: &[usize]) -> (Vec<usize>, usize) {
        let n = net.len();
        let mut refined: Vec<usize> = (0..n).collect();
        let mut ref_degree = net.degree.clone();
        let mut ref_size = vec![1usize; n];
        // weight from a refined community to the rest of its parent community
        let mut ref_external = vec![0.0; n];
        let mut parent_degree = vec![0.0; n];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for v in 0..n {
            parent_degree[part[v]] += net.degree[v];
            members[part[v]].push(v);
            ref_external[v] = net.adj[v]
                .iter()
                .filter(|&&(u, _)| part[u] == part[v])
                .map(|&(_, w)| w)
                .sum();
        }

        let mut neighbor_weight = vec![0.0; n];
        let mut touched = Vec::new();
        for mut nodes in members.into_iter().filter(|m| m.len() > 1) {
            let c = part[nodes[0]];
            let k_c = parent_degree[c];
            nodes.shuffle(self.rng);
            for v in nodes {
                if ref_size[refined[v]] != 1 {
                    continue;
                }
                let k_v = net.degree[v];
                let to_parent = ref_external[v];
                if to_parent < self.gamma * k_v * (k_c - k_v) / self.two_m {
                    continue;
                }
                for &(u, w) in &net.adj[v] {
                    if part[u] != c {
                        continue;
                    }
                    let r = refined[u];
                    if neighbor_weight[r] == 0.0 {
                        touched.push(r);
                    }
                    neighbor_weight[r] += w;
                }
                let own = refined[v];
                let options: Vec<usize> = touched
                    .iter()
                    .copied()
                    .filter(|&r| r != own)
                    .filter(|&r| {
                        let k_r = ref_degree[r];
                        ref_external[r] >= self.gamma * k_r * (k_c - k_r) / self.two_m
                    })
                    .filter(|&r| self.gain(neighbor_weight[r], k_v, ref_degree[r]) > GAIN_EPS)
                    .collect();
                if let Some(&target) = options.choose(self.rng) {
                    ref_external[target] += ref_external[own] - 2.0 * neighbor_weight[target];
                    ref_degree[target] += k_v;
                    ref_size[target] += 1;
                    ref_degree[own] = 0.0;
                    ref_size[own] = 0;
                    ref_external[own] = 0.0;
                    refined[v] = target;
                }
                for r in touched.drain(..) {
                    neighbor_weight[r] = 0.0;
                }
            }
        }
        renumber_in_order(&mut refined)
    }
}

/// Relabels ids to `0..count` in order of first appearance.
fn renumber_in_order(labels: &mut [usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    (labels.to_vec(), map.len())
}

/// Splits communities whose induced subgraph is disconnected into their components.
fn split_disconnected(graph: &KinGraph, assignment: &mut [usize]) -> usize {
    let mut uf = crate::graph::UnionFind::new(graph.node_count());
    for e in &graph.edges {
        if assignment[e.u] == assignment[e.v] {
            uf.union(e.u, e.v);
        }
    }
    let (labels, count) = uf.labels();
    assignment.copy_from_slice(&labels);
    count
}

/// Relabels communities by descending total node weight; ties go to the
/// community holding the lowest node index.
fn renumber_by_weight(graph: &KinGraph, assignment: &mut [usize]) -> usize {
    let (_, count) = renumber_in_order(assignment);
    let mut weight = vec![0.0; count];
    let mut first = vec![usize::MAX; count];
    for (v, &c) in assignment.iter().enumerate() {
        weight[c] += graph.nodes[v].weight;
        first[c] = first[c].min(v);
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(first[a].cmp(&first[b])));
    let mut new_id = vec![0; count];
    for (rank, &c) in order.iter().enumerate() {
        new_id[c] = rank;
    }
    for c in assignment.iter_mut() {
        *c = new_id[*c];
    }
    count
}

/// Per-iteration trace of a Leiden run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeidenTrace {
    pub partition: Partition,
    /// Modularity after each outer iteration.
    pub history: Vec<f64>,
}

/// Leiden community detection. Deterministic for a fixed seed.
pub fn leiden(graph: &KinGraph, config: &LeidenConfig) -> Partition {
    leiden_traced(graph, config).partition
}

pub fn leiden_traced(graph: &KinGraph, config: &LeidenConfig) -> LeidenTrace {
    let n = graph.node_count();
    let base = Network::from_graph(graph, config.weighted);
    let m: f64 = base.degree.iter().sum::<f64>() / 2.0;
    let scoring_graph = if config.weighted {
        graph.clone()
    } else {
        graph.unweighted()
    };
    let score = |a: &[usize]| modularity(&scoring_graph, a, config.gamma);

    let mut membership: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    if n > 0 && m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut current = score(&membership);
        for _ in 0..MAX_OUTER_ITERATIONS {
            let mut algo = Leiden {
                gamma: config.gamma,
                two_m: 2.0 * m,
                rng: &mut rng,
            };
            let candidate = run_iteration(&mut algo, &base, &membership);
            let q = score(&candidate);
            if q > current + CONVERGENCE_TOL {
                membership = candidate;
                current = q;
                history.push(q);
            } else {
                history.push(current);
                break;
            }
        }
    }

    let mut assignment = membership;
    split_disconnected(&scoring_graph, &mut assignment);
    let num_communities = renumber_by_weight(graph, &mut assignment);
    let modularity = score(&assignment);
    LeidenTrace {
        partition: Partition {
            assignment,
            num_communities,
            modularity,
        },
        history,
    }
}

/// One full Leiden pass (move, refine, aggregate until stable) starting from `initial`.
fn run_iteration(algo: &mut Leiden, base: &Network, initial: &[usize]) -> Vec<usize> {
    let n = base.len();
    let mut net = base.clone();
    // community of each node of `net`
    let (mut part, _) = renumber_in_order(&mut initial.to_vec());
    // which `net` node each original node lives in
    let mut node_of: Vec<usize> = (0..n).collect();
    loop {
        algo.move_nodes(&net, &mut part);
        let (_, communities) = renumber_in_order(&mut part.clone());
        if communities == net.len() {
            break;
        }
        let (refined, groups) = algo.refine(&net, &part);
        if groups == net.len() {
            // refinement merged nothing; aggregation would not shrink the network
            break;
        }
        let aggregated = net.aggregate(&refined, groups);
        let mut next_part = vec![0; groups];
        for v in 0..net.len() {
            next_part[refined[v]] = part[v];
        }
        for x in node_of.iter_mut() {
            *x = refined[*x];
        }
        net = aggregated;
        part = renumber_in_order(&mut next_part).0;
    }
    node_of.iter().map(|&x| part[x]).collect()
}
