//! Stage-file pipeline driven by one TOML run configuration.
//!
//! Each stage reads the files written by earlier stages from the output
//! directory and writes its own. Every output begins with a metadata block
//! carrying the tool version and a hash of the analysis configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::community::{leiden, LeidenConfig};
use crate::graph::{build_graph, group_by_province_year, to_graphml};
use crate::indicators::{compute_each, rank_table, IndicatorRow, Metric};
use crate::ingest::{
    assign_hopper, link_auxiliary, parse_records, write_records, ElectionRecord, LinkFields, Schema,
    DEFAULT_LINK_THRESHOLD,
};
use crate::party::{
    assign_dynastic, bandwagon_rates, dynastic_share, dynasty_party_overlap, hopping_rates,
    paired_hopping_rates, party_membership_table, MajorPartyMap, OverlapWeighting,
};
use crate::regress::{
    build_panel, comparison_table, panel_design, parse_socio, qq_pairs, run_direction1, run_direction2, vif,
    Column, ComparisonRow, LmmOptions, PanelOptions,
};
use crate::stats::{
    linear_trend, shapiro_wilk, wilcoxon_signed_rank_with, yearly_means, Alternative, MethodChoice,
    TestResult, TrendResult, EXACT_WILCOXON_CUTOFF,
};
use crate::synth::{generate, SynthConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub elections: Option<PathBuf>,
    pub auxiliary: Option<PathBuf>,
    pub socio: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            elections: None,
            auxiliary: None,
            socio: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub schema: Schema,
    pub link_threshold: f64,
    pub link_middle_name: bool,
    pub link_party: bool,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            schema: Schema::default(),
            link_threshold: DEFAULT_LINK_THRESHOLD,
            link_middle_name: true,
            link_party: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeidenSection {
    pub gamma: f64,
    pub weighted: bool,
}

impl Default for LeidenSection {
    fn default() -> Self {
        LeidenSection {
            gamma: 1.0,
            weighted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartySection {
    pub major_parties: MajorPartyMap,
    /// Parties tabulated individually; the rest are pooled as OTHER.
    pub membership_parties: Vec<String>,
    pub overlap_weighting: OverlapWeighting,
}

impl Default for PartySection {
    fn default() -> Self {
        PartySection {
            major_parties: MajorPartyMap::default(),
            membership_parties: ["LP", "NP", "NPC", "NUP", "PDPLBN", "LKS-KAM", "LKS-CMD"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            overlap_weighting: OverlapWeighting::Unweighted,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every province-year is one observation.
    #[default]
    Pooled,
    YearlyMeans,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendSection {
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSection {
    /// Base of the HHI logarithm; unset means natural log.
    pub log_base: Option<f64>,
    pub reml: bool,
    pub exact_wilcoxon_cutoff: usize,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for RegressionSection {
    fn default() -> Self {
        let panel = PanelOptions::default();
        RegressionSection {
            log_base: None,
            reml: false,
            exact_wilcoxon_cutoff: EXACT_WILCOXON_CUTOFF,
            first_year: panel.first_year,
            last_year: panel.last_year,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Seeds Leiden and the synthetic generator.
    pub seed: u64,
    /// Worker threads for per-province parallelism; unset uses every core.
    pub workers: Option<usize>,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub leiden: LeidenSection,
    pub party: PartySection,
    pub trend: TrendSection,
    pub regression: RegressionSection,
    /// Synthetic generator settings; its `seed` is replaced by the top-level seed.
    pub simulate: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: None,
            paths: Paths::default(),
            ingest: IngestSection::default(),
            leiden: LeidenSection::default(),
            party: PartySection::default(),
            trend: TrendSection::default(),
            regression: RegressionSection::default(),
            simulate: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// SHA-256 of the analysis settings. Paths and worker count are excluded so
    /// relocating a run does not change its outputs.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("paths");
            map.remove("workers");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn leiden_config(&self) -> LeidenConfig {
        LeidenConfig {
            gamma: self.leiden.gamma,
            seed: self.seed,
            weighted: self.leiden.weighted,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.simulate.clone()
        }
    }

    fn stage_schema(&self) -> Schema {
        Schema {
            election_years: self.ingest.schema.election_years.clone(),
            ..Schema::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub stage: String,
}

impl Meta {
    fn line(&self) -> String {
        format!(
            "{} {} config_sha256={} stage={}",
            self.tool, self.version, self.config_sha256, self.stage
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    meta: Meta,
    data: T,
}

/// Output file names, relative to the output directory.
pub mod files {
    pub const RECORDS: &str = "records.csv";
    pub const INGEST_REPORT: &str = "ingest_report.json";
    pub const GRAPHS: &str = "graphs";
    pub const GRAPH_SUMMARY: &str = "graphs/summary.csv";
    pub const PARTITION: &str = "partition.csv";
    pub const COMMUNITY_GRAPHS: &str = "communities";
    pub const COMMUNITY_SUMMARY: &str = "communities/summary.csv";
    pub const INDICATORS: &str = "indicators.csv";
    pub const RANKINGS: &str = "rankings.csv";
    pub const METRIC_FAILURES: &str = "metric_failures.csv";
    pub const HOPPING: &str = "hopping_rates.csv";
    pub const HOPPING_TEST: &str = "hopping_test.json";
    pub const OVERLAP: &str = "overlap.csv";
    pub const BANDWAGON: &str = "bandwagon.csv";
    pub const MEMBERSHIP: &str = "party_membership.csv";
    pub const DYNASTIC_SHARE: &str = "dynastic_share.json";
    pub const TRENDS: &str = "trends.json";
    pub const PANEL: &str = "panel.csv";
    pub const DIRECTION1: &str = "direction1.json";
    pub const DIRECTION2: &str = "direction2.json";
    pub const COMPARISON: &str = "comparison.csv";
    pub const VIF: &str = "vif.csv";
    pub const QQ: &str = "qq";
    pub const SYNTH_ELECTIONS: &str = "synthetic/elections.csv";
    pub const SYNTH_SOCIO: &str = "synthetic/socio.csv";
    pub const SYNTH_TRUTH: &str = "synthetic/truth.json";
    pub const REPORT: &str = "report.json";
}

/// Which stage writes each prerequisite, for error messages.
fn producer(file: &str) -> &'static str {
    match file {
        files::RECORDS => "ingest",
        files::PARTITION => "detect",
        files::INDICATORS => "metrics",
        files::HOPPING_TEST | files::DYNASTIC_SHARE => "party",
        files::TRENDS => "trend",
        files::COMPARISON => "regress",
        _ => "an earlier stage",
    }
}

fn slug(province: &str, year: i32) -> String {
    let name: String = province
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{name}_{year}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub province: String,
    pub year: i32,
    pub nodes: usize,
    pub edges: usize,
    pub total_weight: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub province: String,
    pub year: i32,
    pub communities: usize,
    pub modularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub province: String,
    pub year: i32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub metric: String,
    pub year: i32,
    pub rank: usize,
    pub province: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoppingTest {
    pub pairs: usize,
    pub wilcoxon: Option<TestResult>,
    pub wilcoxon_error: Option<String>,
    /// Normality check on the paired differences.
    pub shapiro: Option<TestResult>,
    pub shapiro_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearMean {
    pub year: i32,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrend {
    pub metric: String,
    pub granularity: Granularity,
    pub yearly_means: Vec<YearMean>,
    pub fit: Option<TrendResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub theoretical: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMeans {
    pub year: i32,
    pub provinces: usize,
    pub hhi: Option<f64>,
    pub cgc: Option<f64>,
    pub ccd: Option<f64>,
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub indicator_means: Vec<IndicatorMeans>,
    pub trends: Value,
    pub hopping_test: Value,
    pub dynastic_share: Value,
    /// `None` when the regression stage has not been run.
    pub regression_comparison: Option<Vec<ComparisonRow>>,
    pub failures: Vec<Failure>,
}

/// A configured run rooted at its output directory.
pub struct Pipeline {
    pub config: RunConfig,
    pub out: PathBuf,
    hash: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Pipeline {
        Pipeline {
            out: config.paths.out.clone(),
            hash: config.hash(),
            config,
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn meta(&self, stage: &str) -> Meta {
        Meta {
            tool: "kinnet".into(),
            version: VERSION.into(),
            config_sha256: self.hash.clone(),
            stage: stage.into(),
        }
    }

    fn require(&self, rel: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if !path.is_file() {
            bail!(
                "missing {} (written by `kinnet {}`); run that stage first",
                path.display(),
                producer(rel)
            );
        }
        Ok(path)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    fn write_csv<T: Serialize>(&self, rel: &str, stage: &str, rows: &[T]) -> Result<()> {
        let mut buf = format!("# {}\n", self.meta(stage).line()).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(&mut buf);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        self.write(rel, &buf)
    }

    fn write_json<T: Serialize>(&self, rel: &str, stage: &str, data: &T) -> Result<()> {
        let env = Envelope {
            meta: self.meta(stage),
            data,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn write_records(&self, rel: &str, stage: &str, records: &[ElectionRecord]) -> Result<()> {
        let mut buf = Vec::new();
        write_records(&mut buf, records, &[self.meta(stage).line()])?;
        self.write(rel, &buf)
    }

    fn read_csv<T: DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>> {
        let path = self.require(rel)?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        rdr.deserialize()
            .collect::<std::result::Result<Vec<T>, _>>()
            .with_context(|| format!("reading {}", path.display()))
    }

    fn read_json_data(&self, rel: &str) -> Result<Value> {
        let path = self.require(rel)?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let env: Envelope<Value> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(env.data)
    }

    fn read_stage_records(&self, rel: &str) -> Result<Vec<ElectionRecord>> {
        let path = self.require(rel)?;
        let outcome = parse_records(&path, &self.config.stage_schema())?;
        if let Some(e) = outcome.errors.first() {
            bail!("{} is corrupt at line {}: {}", path.display(), e.line, e.message);
        }
        Ok(outcome.records)
    }

    /// Normalizes the election file, optionally links an auxiliary source, and
    /// assigns party-hopping flags.
    pub fn ingest(&self) -> Result<()> {
        let cfg = &self.config;
        let Some(elections) = &cfg.paths.elections else {
            bail!("no election file configured: set paths.elections or pass --elections");
        };
        let base = parse_records(elections, &cfg.ingest.schema)
            .with_context(|| format!("ingesting {}", elections.display()))?;
        for e in &base.errors {
            log::warn!("{}:{}: {}", elections.display(), e.line, e.message);
        }
        if base.records.is_empty() {
            bail!("{} contains no usable records", elections.display());
        }
        let (mut records, linkage) = match &cfg.paths.auxiliary {
            Some(aux_path) => {
                let aux = parse_records(aux_path, &cfg.ingest.schema)
                    .with_context(|| format!("ingesting {}", aux_path.display()))?;
                let fields = LinkFields {
                    middle_name: cfg.ingest.link_middle_name,
                    party: cfg.ingest.link_party,
                };
                let (linked, report) = link_auxiliary(&base.records, &aux.records, fields, cfg.ingest.link_threshold);
                (linked, Some(report))
            }
            None => (base.records, None),
        };
        let hopper = assign_hopper(&mut records);

        #[derive(Serialize)]
        struct IngestReport<'a> {
            records: usize,
            row_errors: &'a [crate::ingest::RowError],
            linkage: Option<crate::ingest::LinkageReport>,
            hopper: crate::ingest::HopperReport,
        }
        self.write_records(files::RECORDS, "ingest", &records)?;
        self.write_json(
            files::INGEST_REPORT,
            "ingest",
            &IngestReport {
                records: records.len(),
                row_errors: &base.errors,
                linkage,
                hopper,
            },
        )
    }

    /// Exports one GraphML file per (province, year).
    pub fn graph(&self) -> Result<()> {
        let records = self.read_stage_records(files::RECORDS)?;
        let comment = self.meta("graph").line();
        let mut summary = Vec::new();
        for ((province, year), idx) in group_by_province_year(&records) {
            let graph = build_graph(idx.iter().map(|&i| (i, &records[i])));
            let rel = format!("{}/{}.graphml", files::GRAPHS, slug(&province, year));
            self.write(&rel, to_graphml(&graph, None, Some(&comment)).as_bytes())?;
            summary.push(GraphSummary {
                province,
                year,
                nodes: graph.node_count(),
                edges: graph.edge_count(),
                total_weight: graph.total_edge_weight(),
                components: graph.components().1,
            });
        }
        self.write_csv(files::GRAPH_SUMMARY, "graph", &summary)
    }

    /// Runs Leiden on every graph, stores community ids and dynastic flags.
    pub fn detect(&self) -> Result<()> {
        let mut records = self.read_stage_records(files::RECORDS)?;
        let leiden_cfg = self.config.leiden_config();
        let groups: Vec<((String, i32), Vec<usize>)> = group_by_province_year(&records).into_iter().collect();
        let run = |((province, year), idx): &((String, i32), Vec<usize>)| {
            let graph = build_graph(idx.iter().map(|&i| (i, &records[i])));
            let partition = leiden(&graph, &leiden_cfg);
            let assigned: Vec<(usize, u32)> = graph
                .nodes
                .iter()
                .zip(&partition.assignment)
                .map(|(node, &c)| (node.record, c as u32))
                .collect();
            let summary = CommunitySummary {
                province: province.clone(),
                year: *year,
                communities: partition.num_communities,
                modularity: partition.modularity,
            };
            (slug(province, *year), assigned, summary, graph, partition.assignment)
        };
        #[cfg(feature = "parallel")]
        let results: Vec<_> = {
            use rayon::prelude::*;
            groups.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<_> = groups.iter().map(run).collect();

        let comment = self.meta("detect").line();
        let mut summary = Vec::with_capacity(results.len());
        for (name, assigned, s, graph, communities) in results {
            for (record, c) in assigned {
                records[record].community_id = Some(c);
            }
            let graphml = to_graphml(&graph, Some(&communities), Some(&comment));
            self.write(&format!("{}/{name}.graphml", files::COMMUNITY_GRAPHS), graphml.as_bytes())?;
            summary.push(s);
        }
        assign_dynastic(&mut records)?;
        self.write_records(files::PARTITION, "detect", &records)?;
        self.write_csv(files::COMMUNITY_SUMMARY, "detect", &summary)
    }

    /// Computes the four indicators per (province, year) and yearly rankings.
    pub fn metrics(&self) -> Result<()> {
        let records = self.read_stage_records(files::PARTITION)?;
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for ((province, year), res) in compute_each(&records) {
            match res {
                Ok(row) => rows.push(row),
                Err(e) => {
                    log::warn!("indicators for {province} {year} failed: {e}");
                    failures.push(Failure {
                        province,
                        year,
                        error: e.to_string(),
                    });
                }
            }
        }
        let ranks: Vec<RankRow> = Metric::ALL
            .iter()
            .flat_map(|&m| {
                rank_table(&rows, m).into_iter().map(move |e| RankRow {
                    metric: m.name().into(),
                    year: e.year,
                    rank: e.rank,
                    province: e.province,
                    value: e.value,
                })
            })
            .collect();
        self.write_csv(files::INDICATORS, "metrics", &rows)?;
        self.write_csv(files::RANKINGS, "metrics", &ranks)?;
        self.write_csv(files::METRIC_FAILURES, "metrics", &failures)
    }

    /// Party hopping, overlap, bandwagoning, membership and the paired hopping test.
    pub fn party(&self) -> Result<()> {
        let records = self.read_stage_records(files::PARTITION)?;
        let cfg = &self.config.party;
        let cells = hopping_rates(&records);
        let pairs = paired_hopping_rates(&cells);
        let choice = MethodChoice::Auto {
            cutoff: self.config.regression.exact_wilcoxon_cutoff,
        };
        let wilcoxon = wilcoxon_signed_rank_with(&pairs, Alternative::Greater, choice);
        let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
        let shapiro = shapiro_wilk(&diffs);
        let test = HoppingTest {
            pairs: pairs.len(),
            wilcoxon_error: wilcoxon.as_ref().err().map(|e| e.to_string()),
            wilcoxon: wilcoxon.ok(),
            shapiro_error: shapiro.as_ref().err().map(|e| e.to_string()),
            shapiro: shapiro.ok(),
        };
        let bandwagon = bandwagon_rates(&records, &cfg.major_parties)?;
        self.write_csv(files::HOPPING, "party", &cells)?;
        self.write_json(files::HOPPING_TEST, "party", &test)?;
        self.write_csv(
            files::OVERLAP,
            "party",
            &dynasty_party_overlap(&records, cfg.overlap_weighting),
        )?;
        self.write_csv(files::BANDWAGON, "party", &bandwagon)?;
        self.write_csv(
            files::MEMBERSHIP,
            "party",
            &party_membership_table(&records, &cfg.membership_parties),
        )?;
        self.write_json(files::DYNASTIC_SHARE, "party", &dynastic_share(&records))
    }

    /// Linear trend of each indicator over election years.
    pub fn trend(&self) -> Result<()> {
        let rows: Vec<IndicatorRow> = self.read_csv(files::INDICATORS)?;
        let granularity = self.config.trend.granularity;
        let trends: Vec<MetricTrend> = Metric::ALL
            .iter()
            .map(|&m| {
                let obs: Vec<(f64, f64)> = rows
                    .iter()
                    .filter_map(|r| m.value(r).map(|v| (f64::from(r.year), v)))
                    .collect();
                let means = yearly_means(&obs);
                let counts = obs.iter().fold(BTreeMap::<i32, usize>::new(), |mut acc, o| {
                    *acc.entry(o.0 as i32).or_default() += 1;
                    acc
                });
                let input = match granularity {
                    Granularity::Pooled => obs.clone(),
                    Granularity::YearlyMeans => means.clone(),
                };
                let fit = linear_trend(&input);
                MetricTrend {
                    metric: m.name().into(),
                    granularity,
                    yearly_means: means
                        .iter()
                        .map(|&(y, mean)| YearMean {
                            year: y as i32,
                            mean,
                            n: counts[&(y as i32)],
                        })
                        .collect(),
                    error: fit.as_ref().err().map(|e| e.to_string()),
                    fit: fit.ok(),
                }
            })
            .collect();
        self.write_json(files::TRENDS, "trend", &trends)
    }

    /// Panel assembly, both regression directions, VIF and Q-Q exports.
    pub fn regress(&self) -> Result<()> {
        let rows: Vec<IndicatorRow> = self.read_csv(files::INDICATORS)?;
        let Some(socio_path) = &self.config.paths.socio else {
            bail!("no socioeconomic table configured: set paths.socio or pass --socio");
        };
        let file = fs::File::open(socio_path).with_context(|| format!("opening {}", socio_path.display()))?;
        let socio = parse_socio(file).with_context(|| format!("reading {}", socio_path.display()))?;
        let reg = &self.config.regression;
        let opts = PanelOptions {
            log_base: reg.log_base,
            first_year: reg.first_year,
            last_year: reg.last_year,
        };
        let frame = build_panel(&rows, &socio, &opts)?;
        let lmm = LmmOptions {
            reml: reg.reml,
            ..LmmOptions::default()
        };
        let d1 = run_direction1(&frame, &lmm);
        let d2 = run_direction2(&frame, &lmm);
        let cells: Vec<_> = d1.iter().chain(&d2).cloned().collect();

        for cell in &cells {
            let Some(fit) = &cell.fit else { continue };
            let family = cell.family.as_deref().map(|f| format!("_{f}")).unwrap_or_default();
            let rel = format!(
                "{}/d{}_{}{}_{}.csv",
                files::QQ,
                cell.direction,
                cell.response,
                family,
                cell.model.as_str()
            );
            let qq: Vec<QqRow> = qq_pairs(&fit.residuals)
                .into_iter()
                .map(|(theoretical, empirical)| QqRow { theoretical, empirical })
                .collect();
            self.write_csv(&rel, "regress", &qq)?;
        }
        let (design, _) = panel_design(&frame, Column::Hdi, &Column::DYNASTIC);
        let vif_rows = vif(&design).unwrap_or_else(|e| {
            log::warn!("VIF skipped: {e}");
            Vec::new()
        });
        self.write_csv(files::PANEL, "regress", &frame.rows)?;
        self.write_json(files::DIRECTION1, "regress", &d1)?;
        self.write_json(files::DIRECTION2, "regress", &d2)?;
        self.write_csv(files::COMPARISON, "regress", &comparison_table(&cells))?;
        self.write_csv(files::VIF, "regress", &vif_rows)
    }

    /// Writes a synthetic election file, socioeconomic table and ground truth.
    pub fn simulate(&self) -> Result<()> {
        let data = generate(&self.config.synth_config())?;
        self.write_records(files::SYNTH_ELECTIONS, "simulate", &data.records)?;
        self.write_csv(files::SYNTH_SOCIO, "simulate", &data.socio)?;
        self.write_json(files::SYNTH_TRUTH, "simulate", &data.truth)
    }

    /// Collects the headline tables of every stage into one summary.
    pub fn report(&self) -> Result<()> {
        let rows: Vec<IndicatorRow> = self.read_csv(files::INDICATORS)?;
        let mut by_year: BTreeMap<i32, Vec<&IndicatorRow>> = BTreeMap::new();
        for r in &rows {
            by_year.entry(r.year).or_default().push(r);
        }
        let mean_of = |rs: &[&IndicatorRow], m: Metric| {
            let v: Vec<f64> = rs.iter().filter_map(|r| m.value(r)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let indicator_means = by_year
            .iter()
            .map(|(&year, rs)| IndicatorMeans {
                year,
                provinces: rs.len(),
                hhi: mean_of(rs, Metric::Hhi),
                cgc: mean_of(rs, Metric::Cgc),
                ccd: mean_of(rs, Metric::Ccd),
                acc: mean_of(rs, Metric::Acc),
            })
            .collect();
        let regression_comparison = if self.path(files::COMPARISON).is_file() {
            Some(self.read_csv(files::COMPARISON)?)
        } else {
            log::warn!("no regression results; run `kinnet regress` to include them");
            None
        };
        let report = Report {
            indicator_means,
            trends: self.read_json_data(files::TRENDS)?,
            hopping_test: self.read_json_data(files::HOPPING_TEST)?,
            dynastic_share: self.read_json_data(files::DYNASTIC_SHARE)?,
            regression_comparison,
            failures: self.read_csv(files::METRIC_FAILURES)?,
        };
        self.write_json(files::REPORT, "report", &report)
    }

    /// Every analysis stage in order. Regression is skipped when no
    /// socioeconomic table is configured.
    pub fn run_all(&self) -> Result<()> {
        self.ingest()?;
        self.graph()?;
        self.detect()?;
        self.metrics()?;
        self.party()?;
        self.trend()?;
        if self.config.paths.socio.is_some() {
            self.regress()?;
        } else {
            log::warn!("paths.socio not set; skipping regression");
        }
        self.report()
    }

    /// Simulates a panel, points the inputs at it and runs every stage.
    pub fn run_synthetic(config: RunConfig) -> Result<Pipeline> {
        let sim = Pipeline::new(config);
        sim.simulate()?;
        let mut config = sim.config;
        config.paths.elections = Some(sim.out.join(files::SYNTH_ELECTIONS));
        config.paths.socio = Some(sim.out.join(files::SYNTH_SOCIO));
        config.paths.auxiliary = None;
        let run = Pipeline::new(config);
        run.run_all()?;
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.paths.out = out.to_path_buf();
        cfg.simulate.n_provinces = 6;
        cfg
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.paths.out = PathBuf::from("/elsewhere");
        b.workers = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_defaults_fill_gaps() {
        let cfg = RunConfig::from_toml("seed = 9\n[leiden]\ngamma = 0.5\n[party.major_parties]\n2004 = \"X\"\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.leiden.gamma, 0.5);
        assert!(cfg.leiden.weighted);
        assert_eq!(cfg.party.major_parties.get(2004).unwrap(), "X");
        assert_eq!(cfg.regression.exact_wilcoxon_cutoff, 25);
    }

    #[test]
    fn metrics_before_detect_names_partition() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(small_config(dir.path()));
        let err = p.metrics().unwrap_err().to_string();
        assert!(err.contains("partition.csv") && err.contains("detect"), "{err}");
    }

    #[test]
    fn synthetic_run_populates_report() {
        let dir = tempfile::tempdir().unwrap();
        let run = Pipeline::run_synthetic(small_config(dir.path())).unwrap();
        let text = fs::read_to_string(run.path(files::REPORT)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let data = &v["data"];
        assert_eq!(v["meta"]["config_sha256"], run.config_hash());
        assert_eq!(data["indicator_means"].as_array().unwrap().len(), 7);
        assert!(data["hopping_test"]["wilcoxon"].is_object());
        assert_eq!(data["regression_comparison"].as_array().unwrap().len(), 30);
        let first = fs::read_to_string(run.path(files::INDICATORS)).unwrap();
        assert!(first.starts_with("# kinnet "));
    }
}
