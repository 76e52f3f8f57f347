//! Weighted kinship graph for one (province, year).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ElectionRecord, Position};

/// Node weight of an elected position.
pub fn position_weight(position: Position) -> u32 {
    match position {
        Position::Councilor | Position::BoardMember => 2,
        Position::ViceMayor | Position::ViceGovernor => 3,
        Position::Mayor | Position::HouseRep | Position::Governor => 5,
    }
}

/// How two officials' names connect them, in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchKind {
    /// Same last name and same middle name.
    BothSame,
    LastOnly,
    /// One's last name is the other's middle name.
    CrossMatch,
    MiddleOnly,
}

impl MatchKind {
    pub fn scalar(self) -> f64 {
        match self {
            MatchKind::BothSame => 1.00,
            MatchKind::LastOnly => 0.75,
            MatchKind::CrossMatch => 0.50,
            MatchKind::MiddleOnly => 0.25,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchKind::BothSame => "both_same",
            MatchKind::LastOnly => "last_only",
            MatchKind::CrossMatch => "cross_match",
            MatchKind::MiddleOnly => "middle_only",
        }
    }

    pub fn parse(s: &str) -> Option<MatchKind> {
        [
            MatchKind::BothSame,
            MatchKind::LastOnly,
            MatchKind::CrossMatch,
            MatchKind::MiddleOnly,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

fn present(s: &Option<String>) -> Option<&str> {
    s.as_deref().filter(|m| !m.is_empty())
}

/// Classifies the name connection between two records, if any.
///
/// A record without a middle name can only take part in a `LastOnly` match.
pub fn classify_match(a: &ElectionRecord, b: &ElectionRecord) -> Option<MatchKind> {
    let same_last = !a.last_name.is_empty() && a.last_name == b.last_name;
    match (present(&a.middle_name), present(&b.middle_name)) {
        (Some(ma), Some(mb)) => {
            let same_middle = ma == mb;
            if same_last && same_middle {
                Some(MatchKind::BothSame)
            } else if same_last {
                Some(MatchKind::LastOnly)
            } else if a.last_name == mb || ma == b.last_name {
                Some(MatchKind::CrossMatch)
            } else if same_middle {
                Some(MatchKind::MiddleOnly)
            } else {
                None
            }
        }
        _ => same_last.then_some(MatchKind::LastOnly),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Index of the source record in the dataset.
    pub record: usize,
    pub label: String,
    pub position: Position,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinGraph {
    pub province: String,
    pub year: i32,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl KinGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency lists of `(neighbor, edge weight)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    /// Sum of incident edge weights per node.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.nodes.len()];
        for e in &self.edges {
            deg[e.u] += e.weight;
            deg[e.v] += e.weight;
        }
        deg
    }

    pub fn total_edge_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn total_node_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Component label per node; labels are `0..count` in order of first node.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            uf.union(e.u, e.v);
        }
        uf.labels()
    }

    /// Same graph with every edge weight set to 1.
    pub fn unweighted(&self) -> KinGraph {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight = 1.0;
        }
        g
    }

    /// Builds a graph directly from node weights and an edge list. Used by tests and the demo.
    pub fn from_parts(node_weights: &[f64], edges: &[(usize, usize, f64)]) -> KinGraph {
        KinGraph {
            province: String::new(),
            year: 0,
            nodes: node_weights
                .iter()
                .enumerate()
                .map(|(i, &w)| Node {
                    record: i,
                    label: format!("n{i}"),
                    position: Position::Councilor,
                    weight: w,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(u, v, w)| Edge {
                    u,
                    v,
                    weight: w,
                    kind: MatchKind::BothSame,
                })
                .collect(),
        }
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
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

    pub(crate) fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut count = 0;
        for (i, label) in labels.iter_mut().enumerate() {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            *label = map[r];
        }
        (labels, count)
    }
}

/// Builds the kinship graph for the records of one province-year.
///
/// `items` pairs each record with its dataset index. Nodes are ordered by a
/// stable sort on (last, first, middle, position) so the result does not depend
/// on input order beyond ties.
pub fn build_graph<'a, I>(items: I) -> KinGraph
where
    I: IntoIterator<Item = (usize, &'a ElectionRecord)>,
{
    let mut items: Vec<(usize, &ElectionRecord)> = items.into_iter().collect();
    items.sort_by(|(_, a), (_, b)| {
        (&a.last_name, &a.first_name, &a.middle_name, a.position).cmp(&(
            &b.last_name,
            &b.first_name,
            &b.middle_name,
            b.position,
        ))
    });
    let (province, year) = items
        .first()
        .map(|(_, r)| (r.province.clone(), r.year))
        .unwrap_or_default();

    let nodes: Vec<Node> = items
        .iter()
        .map(|&(i, r)| Node {
            record: i,
            label: r.label(),
            position: r.position,
            weight: f64::from(position_weight(r.position)),
        })
        .collect();

    let mut edges = Vec::new();
    for u in 0..items.len() {
        for v in (u + 1)..items.len() {
            if let Some(kind) = classify_match(items[u].1, items[v].1) {
                edges.push(Edge {
                    u,
                    v,
                    weight: nodes[u].weight * nodes[v].weight * kind.scalar(),
                    kind,
                });
            }
        }
    }
    KinGraph {
        province,
        year,
        nodes,
        edges,
    }
}

/// Convenience wrapper: every record of the slice becomes a node.
pub fn build_graph_from(records: &[ElectionRecord]) -> KinGraph {
    build_graph(records.iter().enumerate())
}

/// Record indices grouped by (province, year), ordered by key.
pub fn group_by_province_year(records: &[ElectionRecord]) -> BTreeMap<(String, i32), Vec<usize>> {
    let mut groups: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.province.clone(), r.year)).or_default().push(i);
    }
    groups
}

const GRAPHML_NS: &str = "http://graphml.graphdrawing.org/xmlns";

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes the graph as GraphML. `communities`, when given, is indexed by node.
pub fn to_graphml(graph: &KinGraph, communities: Option<&[usize]>, comment: Option<&str>) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if let Some(c) = comment {
        let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(
        s,
        "<graphml xmlns=\"{GRAPHML_NS}\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"{GRAPHML_NS} {GRAPHML_NS}/1.0/graphml.xsd\">"
    );
    s.push_str("  <key id=\"d0\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
    s.push_str("  <key id=\"d1\" for=\"node\" attr.name=\"position\" attr.type=\"string\"/>\n");
    s.push_str("  <key id=\"d2\" for=\"node\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    s.push_str("  <key id=\"d3\" for=\"node\" attr.name=\"record\" attr.type=\"long\"/>\n");
    if communities.is_some() {
        s.push_str("  <key id=\"d4\" for=\"node\" attr.name=\"community_id\" attr.type=\"long\"/>\n");
    }
    s.push_str("  <key id=\"d5\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    s.push_str("  <key id=\"d6\" for=\"edge\" attr.name=\"match_kind\" attr.type=\"string\"/>\n");
    s.push_str("  <key id=\"d7\" for=\"graph\" attr.name=\"province\" attr.type=\"string\"/>\n");
    s.push_str("  <key id=\"d8\" for=\"graph\" attr.name=\"year\" attr.type=\"int\"/>\n");
    s.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
    let _ = writeln!(s, "    <data key=\"d7\">{}</data>", xml_escape(&graph.province));
    let _ = writeln!(s, "    <data key=\"d8\">{}</data>", graph.year);
    for (i, n) in graph.nodes.iter().enumerate() {
        let _ = writeln!(s, "    <node id=\"n{i}\">");
        let _ = writeln!(s, "      <data key=\"d0\">{}</data>", xml_escape(&n.label));
        let _ = writeln!(s, "      <data key=\"d1\">{}</data>", xml_escape(n.position.label()));
        let _ = writeln!(s, "      <data key=\"d2\">{}</data>", n.weight);
        let _ = writeln!(s, "      <data key=\"d3\">{}</data>", n.record);
        if let Some(c) = communities {
            let _ = writeln!(s, "      <data key=\"d4\">{}</data>", c[i]);
        }
        s.push_str("    </node>\n");
    }
    for (i, e) in graph.edges.iter().enumerate() {
        let _ = writeln!(s, "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\">", e.u, e.v);
        let _ = writeln!(s, "      <data key=\"d5\">{}</data>", e.weight);
        let _ = writeln!(s, "      <data key=\"d6\">{}</data>", e.kind.as_str());
        s.push_str("    </edge>\n");
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

/// Result of reparsing a GraphML document written by [`to_graphml`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGraphMl {
    pub graph: KinGraph,
    pub communities: Option<Vec<usize>>,
}

const ATTR_TYPES: [&str; 6] = ["boolean", "int", "long", "float", "double", "string"];
const KEY_DOMAINS: [&str; 6] = ["graph", "node", "edge", "hyperedge", "port", "endpoint"];

/// Parses a GraphML document and checks it against the structural rules of the
/// GraphML schema: namespace, key declarations, element order, a single graph
/// with `edgedefault`, unique node ids and edges that reference declared nodes.
pub fn parse_graphml(text: &str) -> Result<ParsedGraphMl> {
    let bad = |m: String| Error::GraphMl(m);
    let doc = roxmltree::Document::parse(text).map_err(|e| bad(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "graphml" || root.tag_name().namespace() != Some(GRAPHML_NS) {
        return Err(bad("root element must be graphml in the GraphML namespace".into()));
    }

    // key -> (domain, attr.name, attr.type)
    let mut keys: BTreeMap<String, (String, String, String)> = BTreeMap::new();
    let mut graphs = Vec::new();
    for child in root.children().filter(|n| n.is_element()) {
        if child.tag_name().namespace() != Some(GRAPHML_NS) {
            return Err(bad(format!("foreign element {}", child.tag_name().name())));
        }
        match child.tag_name().name() {
            "desc" => {}
            "key" => {
                if !graphs.is_empty() {
                    return Err(bad("key declared after graph".into()));
                }
                let id = child.attribute("id").ok_or_else(|| bad("key without id".into()))?;
                let domain = child.attribute("for").unwrap_or("all");
                if domain != "all" && !KEY_DOMAINS.contains(&domain) {
                    return Err(bad(format!("key {id} has invalid for=\"{domain}\"")));
                }
                let ty = child.attribute("attr.type").unwrap_or("string");
                if !ATTR_TYPES.contains(&ty) {
                    return Err(bad(format!("key {id} has invalid attr.type \"{ty}\"")));
                }
                let name = child.attribute("attr.name").unwrap_or(id);
                if keys
                    .insert(id.to_string(), (domain.to_string(), name.to_string(), ty.to_string()))
                    .is_some()
                {
                    return Err(bad(format!("duplicate key id {id}")));
                }
            }
            "graph" => graphs.push(child),
            other => return Err(bad(format!("unexpected element {other} under graphml"))),
        }
    }
    let [graph_el] = graphs.as_slice() else {
        return Err(bad(format!("expected exactly one graph, found {}", graphs.len())));
    };
    match graph_el.attribute("edgedefault") {
        Some("undirected") => {}
        Some("directed") => return Err(bad("kinship graphs must be undirected".into())),
        _ => return Err(bad("graph lacks a valid edgedefault".into())),
    }

    let read_data = |el: roxmltree::Node, domain: &str| -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for d in el.children().filter(|n| n.is_element() && n.tag_name().name() == "data") {
            let key = d.attribute("key").ok_or_else(|| bad("data without key".into()))?;
            let (kd, name, ty) = keys
                .get(key)
                .ok_or_else(|| bad(format!("data references undeclared key {key}")))?;
            if kd != domain && kd != "all" {
                return Err(bad(format!("key {key} is for {kd}, used on {domain}")));
            }
            let value = d.text().unwrap_or("").to_string();
            let typed_ok = match ty.as_str() {
                "int" | "long" => value.trim().parse::<i64>().is_ok(),
                "float" | "double" => value.trim().parse::<f64>().is_ok(),
                "boolean" => matches!(value.trim(), "true" | "false"),
                _ => true,
            };
            if !typed_ok {
                return Err(bad(format!("value `{value}` is not a valid {ty} for key {key}")));
            }
            out.insert(name.clone(), value);
        }
        Ok(out)
    };

    let gdata = read_data(*graph_el, "graph")?;
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut communities = Vec::new();
    let mut edges = Vec::new();
    let mut pending_edges = Vec::new();
    for el in graph_el.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "data" | "desc" => {}
            "node" => {
                let id = el.attribute("id").ok_or_else(|| bad("node without id".into()))?;
                if ids.insert(id.to_string(), nodes.len()).is_some() {
                    return Err(bad(format!("duplicate node id {id}")));
                }
                let data = read_data(el, "node")?;
                let position = data
                    .get("position")
                    .and_then(|p| Position::from_alias(p))
                    .ok_or_else(|| bad(format!("node {id} lacks a valid position")))?;
                let weight = data
                    .get("weight")
                    .and_then(|w| w.trim().parse().ok())
                    .ok_or_else(|| bad(format!("node {id} lacks weight")))?;
                let record = data
                    .get("record")
                    .and_then(|w| w.trim().parse().ok())
                    .unwrap_or(nodes.len());
                if let Some(c) = data.get("community_id") {
                    communities.push(c.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?);
                }
                nodes.push(Node {
                    record,
                    label: data.get("label").cloned().unwrap_or_else(|| id.to_string()),
                    position,
                    weight,
                });
            }
            "edge" => pending_edges.push(el),
            other => return Err(bad(format!("unexpected element {other} in graph"))),
        }
    }
    for el in pending_edges {
        let endpoint = |attr: &str| -> Result<usize> {
            let id = el
                .attribute(attr)
                .ok_or_else(|| bad(format!("edge without {attr}")))?;
            ids.get(id)
                .copied()
                .ok_or_else(|| bad(format!("edge {attr} {id} is not a declared node")))
        };
        let (u, v) = (endpoint("source")?, endpoint("target")?);
        let data = read_data(el, "edge")?;
        let weight = data
            .get("weight")
            .and_then(|w| w.trim().parse().ok())
            .unwrap_or(1.0);
        let kind = data
            .get("match_kind")
            .and_then(|k| MatchKind::parse(k.trim()))
            .unwrap_or(MatchKind::BothSame);
        edges.push(Edge { u, v, weight, kind });
    }
    let communities = if communities.is_empty() {
        None
    } else if communities.len() == nodes.len() {
        Some(communities)
    } else {
        return Err(bad("community_id present on only some nodes".into()));
    };
    Ok(ParsedGraphMl {
        graph: KinGraph {
            province: gdata.get("province").cloned().unwrap_or_default(),
            year: gdata
                .get("year")
                .and_then(|y| y.trim().parse().ok())
                .unwrap_or(0),
            nodes,
            edges,
        },
        communities,
    })
}
