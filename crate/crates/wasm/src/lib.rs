//! Browser bindings: simulate a panel, analyse records, sweep the resolution.
//!
//! Every export takes and returns strings (CSV or JSON) so the page needs no
//! generated type glue beyond the `wasm-bindgen` shim.

use kinnet::community::{leiden, LeidenConfig};
use kinnet::graph::{build_graph, group_by_province_year, KinGraph};
use kinnet::indicators::{indicator_row, IndicatorRow};
use kinnet::ingest::{parse_records_from_reader, write_records, ElectionRecord, Schema};
use kinnet::synth::{generate, SynthConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct NodeView {
    pub label: String,
    pub position: &'static str,
    pub weight: f64,
    pub community: usize,
}

#[derive(Serialize)]
pub struct EdgeView {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub kind: &'static str,
}

#[derive(Serialize)]
pub struct GroupView {
    pub province: String,
    pub year: i32,
    pub modularity: f64,
    pub indicators: IndicatorRow,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
}

#[derive(Serialize)]
pub struct Analysis {
    pub records: usize,
    pub rejected_rows: usize,
    pub groups: Vec<GroupView>,
}

#[derive(Serialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub communities: usize,
    pub modularity: f64,
    pub hhi: f64,
}

fn read_records(csv: &str) -> Result<(Vec<ElectionRecord>, usize), String> {
    let outcome = parse_records_from_reader(csv.as_bytes(), &Schema::default()).map_err(|e| e.to_string())?;
    Ok((outcome.records, outcome.errors.len()))
}

fn view(graph: &KinGraph, gamma: f64, seed: u32) -> Result<GroupView, String> {
    let partition = leiden(
        graph,
        &LeidenConfig {
            gamma,
            seed: u64::from(seed),
            weighted: true,
        },
    );
    let indicators = indicator_row(graph, &partition).map_err(|e| e.to_string())?;
    Ok(GroupView {
        province: graph.province.clone(),
        year: graph.year,
        modularity: partition.modularity,
        indicators,
        nodes: graph
            .nodes
            .iter()
            .zip(&partition.assignment)
            .map(|(n, &c)| NodeView {
                label: n.label.clone(),
                position: n.position.label(),
                weight: n.weight,
                community: c,
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeView {
                u: e.u,
                v: e.v,
                weight: e.weight,
                kind: e.kind.as_str(),
            })
            .collect(),
    })
}

/// Synthetic panel as canonical CSV, from a JSON `SynthConfig` (missing fields take defaults).
pub fn simulate_csv(config_json: &str) -> Result<String, String> {
    let config: SynthConfig = if config_json.trim().is_empty() {
        SynthConfig::default()
    } else {
        serde_json::from_str(config_json).map_err(|e| e.to_string())?
    };
    let data = generate(&config).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_records(&mut buf, &data.records, &[]).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

/// Graphs, communities and indicators for every (province, year) in `csv`.
pub fn analyze_json(csv: &str, gamma: f64, seed: u32) -> Result<String, String> {
    let (records, rejected_rows) = read_records(csv)?;
    let groups = group_by_province_year(&records)
        .into_values()
        .map(|idx| view(&build_graph(idx.iter().map(|&i| (i, &records[i]))), gamma, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let analysis = Analysis {
        records: records.len(),
        rejected_rows,
        groups,
    };
    serde_json::to_string(&analysis).map_err(|e| e.to_string())
}

/// Community count, modularity and HHI of one province-year across resolutions.
pub fn sweep_json(csv: &str, province: &str, year: i32, gammas: &[f64], seed: u32) -> Result<String, String> {
    let (records, _) = read_records(csv)?;
    let key = (kinnet::ingest::normalize_name(province), year);
    let groups = group_by_province_year(&records);
    let idx = groups
        .get(&key)
        .ok_or_else(|| format!("no records for {} {}", key.0, year))?;
    let graph = build_graph(idx.iter().map(|&i| (i, &records[i])));
    let points = gammas
        .iter()
        .map(|&gamma| {
            let v = view(&graph, gamma, seed)?;
            Ok(SweepPoint {
                gamma,
                communities: v.indicators.n_communities,
                modularity: v.modularity,
                hhi: v.indicators.hhi,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(config_json: &str) -> Result<String, JsValue> {
    simulate_csv(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze(csv: &str, gamma: f64, seed: u32) -> Result<String, JsValue> {
    analyze_json(csv, gamma, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn resolution_sweep(csv: &str, province: &str, year: i32, gammas: Vec<f64>, seed: u32) -> Result<String, JsValue> {
    sweep_json(csv, province, year, &gammas, seed).map_err(|e| JsValue::from_str(&e))
}
