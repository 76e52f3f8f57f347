//! Reading, normalizing and linking election records.
//!
//! Every name-like field goes through [`normalize_name`] on the way in, so the
//! rest of the crate can compare names with plain string equality.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Election years covered by the default configuration.
pub const DEFAULT_ELECTION_YEARS: [i32; 7] = [2004, 2007, 2010, 2013, 2016, 2019, 2022];

/// Years between consecutive election cycles.
pub const CYCLE_YEARS: i32 = 3;

/// Party code used for independent candidates.
pub const INDEPENDENT: &str = "IND";

/// Uppercases, maps Ñ to N, strips periods, keeps hyphens and collapses whitespace.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            'ñ' | 'Ñ' => out.push('N'),
            '.' => {}
            c if c.is_whitespace() => out.push(' '),
            c => out.extend(c.to_uppercase()),
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_optional(raw: &str) -> Option<String> {
    let s = normalize_name(raw);
    (!s.is_empty()).then_some(s)
}

/// Normalizes a party label. Independents collapse to [`INDEPENDENT`]; blanks are `None`.
pub fn normalize_party(raw: &str) -> Option<String> {
    let s = normalize_optional(raw)?;
    match s.as_str() {
        "IND" | "INDEPENDENT" | "INDEP" => Some(INDEPENDENT.to_string()),
        _ => Some(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    Governor,
    ViceGovernor,
    HouseRep,
    Mayor,
    ViceMayor,
    BoardMember,
    Councilor,
}

/// Accepted spellings, compared after [`position_key`] folding.
const POSITION_ALIASES: &[(&str, Position)] = &[
    ("GOVERNOR", Position::Governor),
    ("PROVINCIAL GOVERNOR", Position::Governor),
    ("VICE GOVERNOR", Position::ViceGovernor),
    ("PROVINCIAL VICE GOVERNOR", Position::ViceGovernor),
    ("MEMBER, HOUSE OF REPRESENTATIVES", Position::HouseRep),
    ("MEMBER HOUSE OF REPRESENTATIVES", Position::HouseRep),
    ("HOUSE OF REPRESENTATIVES", Position::HouseRep),
    ("HOUSE REPRESENTATIVE", Position::HouseRep),
    ("REPRESENTATIVE", Position::HouseRep),
    ("CONGRESSMAN", Position::HouseRep),
    ("CONGRESSWOMAN", Position::HouseRep),
    ("MAYOR", Position::Mayor),
    ("CITY MAYOR", Position::Mayor),
    ("MUNICIPAL MAYOR", Position::Mayor),
    ("VICE MAYOR", Position::ViceMayor),
    ("CITY VICE MAYOR", Position::ViceMayor),
    ("MUNICIPAL VICE MAYOR", Position::ViceMayor),
    ("PROVINCIAL BOARD MEMBER", Position::BoardMember),
    ("BOARD MEMBER", Position::BoardMember),
    ("MEMBER, SANGGUNIANG PANLALAWIGAN", Position::BoardMember),
    ("MEMBER SANGGUNIANG PANLALAWIGAN", Position::BoardMember),
    ("SP MEMBER", Position::BoardMember),
    ("COUNCILOR", Position::Councilor),
    ("COUNCILLOR", Position::Councilor),
    ("CITY COUNCILOR", Position::Councilor),
    ("MUNICIPAL COUNCILOR", Position::Councilor),
    ("MEMBER, SANGGUNIANG BAYAN", Position::Councilor),
    ("MEMBER SANGGUNIANG BAYAN", Position::Councilor),
    ("MEMBER, SANGGUNIANG PANLUNGSOD", Position::Councilor),
    ("MEMBER SANGGUNIANG PANLUNGSOD", Position::Councilor),
];

fn position_key(raw: &str) -> String {
    normalize_name(&raw.replace('-', " "))
}

impl Position {
    pub const ALL: [Position; 7] = [
        Position::Governor,
        Position::ViceGovernor,
        Position::HouseRep,
        Position::Mayor,
        Position::ViceMayor,
        Position::BoardMember,
        Position::Councilor,
    ];

    /// Canonical label written to the canonical CSV.
    pub fn label(self) -> &'static str {
        match self {
            Position::Governor => "GOVERNOR",
            Position::ViceGovernor => "VICE GOVERNOR",
            Position::HouseRep => "MEMBER, HOUSE OF REPRESENTATIVES",
            Position::Mayor => "MAYOR",
            Position::ViceMayor => "VICE MAYOR",
            Position::BoardMember => "PROVINCIAL BOARD MEMBER",
            Position::Councilor => "COUNCILOR",
        }
    }

    pub fn from_alias(raw: &str) -> Option<Position> {
        let key = position_key(raw);
        POSITION_ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map(|&(_, p)| p)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One elected official in one (province, year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub last_name: String,
    pub first_name: String,
    pub middle_name: Option<String>,
    pub position: Position,
    pub party: Option<String>,
    pub region: String,
    pub province: String,
    pub municipality: String,
    pub year: i32,
    pub community_id: Option<u32>,
    pub dynastic: Option<bool>,
    pub hopper: Option<bool>,
}

impl ElectionRecord {
    /// Builds a record, normalizing every name-like field.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        last_name: &str,
        first_name: &str,
        middle_name: Option<&str>,
        position: Position,
        party: Option<&str>,
        province: &str,
        municipality: &str,
        year: i32,
    ) -> Self {
        ElectionRecord {
            last_name: normalize_name(last_name),
            first_name: normalize_name(first_name),
            middle_name: middle_name.and_then(normalize_optional),
            position,
            party: party.and_then(normalize_party),
            region: String::new(),
            province: normalize_name(province),
            municipality: normalize_name(municipality),
            year,
            community_id: None,
            dynastic: None,
            hopper: None,
        }
    }

    pub fn person_key(&self) -> PersonKey {
        PersonKey {
            first_name: self.first_name.clone(),
            middle_name: self.middle_name.clone(),
            last_name: self.last_name.clone(),
            province: self.province.clone(),
        }
    }

    /// Display label used for graph nodes.
    pub fn label(&self) -> String {
        match &self.middle_name {
            Some(m) => format!("{}, {} {}", self.last_name, self.first_name, m),
            None => format!("{}, {}", self.last_name, self.first_name),
        }
    }
}

/// Identity of a person across election cycles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PersonKey {
    pub first_name: String,
    pub middle_name: Option<String>,
    pub last_name: String,
    pub province: String,
}

/// Maps header names in an input file to record fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub last_name: String,
    pub first_name: String,
    pub middle_name: String,
    pub position: String,
    pub party: String,
    pub region: String,
    pub province: String,
    pub municipality: String,
    pub year: String,
    pub community_id: String,
    pub dynastic: String,
    pub hopper: String,
    pub delimiter: char,
    /// Rows whose year falls outside this set are rejected.
    pub election_years: Vec<i32>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            last_name: "last_name".into(),
            first_name: "first_name".into(),
            middle_name: "middle_name".into(),
            position: "position".into(),
            party: "party".into(),
            region: "region".into(),
            province: "province".into(),
            municipality: "municipality".into(),
            year: "year".into(),
            community_id: "community_id".into(),
            dynastic: "dynastic".into(),
            hopper: "hopper".into(),
            delimiter: ',',
            election_years: DEFAULT_ELECTION_YEARS.to_vec(),
        }
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the source file (header is line 1).
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub records: Vec<ElectionRecord>,
    pub errors: Vec<RowError>,
}

struct Columns {
    last: usize,
    first: usize,
    middle: Option<usize>,
    position: usize,
    party: Option<usize>,
    region: Option<usize>,
    province: usize,
    municipality: Option<usize>,
    year: usize,
    community: Option<usize>,
    dynastic: Option<usize>,
    hopper: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &Schema) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
        };
        let need = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        Ok(Columns {
            last: need(&schema.last_name)?,
            first: need(&schema.first_name)?,
            middle: find(&schema.middle_name),
            position: need(&schema.position)?,
            party: find(&schema.party),
            region: find(&schema.region),
            province: need(&schema.province)?,
            municipality: find(&schema.municipality),
            year: need(&schema.year)?,
            community: find(&schema.community_id),
            dynastic: find(&schema.dynastic),
            hopper: find(&schema.hopper),
        })
    }
}

fn parse_flag(raw: &str) -> std::result::Result<Option<bool>, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" | "y" => Ok(Some(true)),
        "0" | "false" | "no" | "n" => Ok(Some(false)),
        other => Err(format!("invalid flag `{other}`")),
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns, schema: &Schema) -> std::result::Result<ElectionRecord, String> {
    let get = |i: usize| row.get(i).unwrap_or("");
    let opt = |i: Option<usize>| i.map(get).unwrap_or("");

    let position_raw = get(cols.position);
    let position = Position::from_alias(position_raw)
        .ok_or_else(|| format!("unmappable position `{}`", position_raw.trim()))?;
    let year_raw = get(cols.year).trim();
    let year: i32 = year_raw
        .parse()
        .map_err(|_| format!("malformed year `{year_raw}`"))?;
    if !schema.election_years.contains(&year) {
        return Err(format!("year {year} is not a configured election year"));
    }
    let last_name = normalize_name(get(cols.last));
    if last_name.is_empty() {
        return Err("empty last name".into());
    }
    let province = normalize_name(get(cols.province));
    if province.is_empty() {
        return Err("empty province".into());
    }
    let community_raw = opt(cols.community).trim();
    let community_id = if community_raw.is_empty() {
        None
    } else {
        Some(
            community_raw
                .parse()
                .map_err(|_| format!("malformed community id `{community_raw}`"))?,
        )
    };

    Ok(ElectionRecord {
        last_name,
        first_name: normalize_name(get(cols.first)),
        middle_name: normalize_optional(opt(cols.middle)),
        position,
        party: normalize_party(opt(cols.party)),
        region: normalize_name(opt(cols.region)),
        province,
        municipality: normalize_name(opt(cols.municipality)),
        year,
        community_id,
        dynastic: parse_flag(opt(cols.dynastic))?,
        hopper: parse_flag(opt(cols.hopper))?,
    })
}

/// Parses delimiter-separated records from any reader. Lines starting with `#` are skipped.
pub fn parse_records_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<ParseOutcome> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::InvalidInput(format!("delimiter `{}` is not ASCII", schema.delimiter)))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, schema)?;

    let mut outcome = ParseOutcome::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, &cols, schema) {
            Ok(rec) => outcome.records.push(rec),
            Err(message) => outcome.errors.push(RowError { line, message }),
        }
    }
    Ok(outcome)
}

pub fn parse_records(path: &Path, schema: &Schema) -> Result<ParseOutcome> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records_from_reader(file, schema)
}

pub const CANONICAL_HEADER: [&str; 12] = [
    "last_name",
    "first_name",
    "middle_name",
    "position",
    "party",
    "region",
    "province",
    "municipality",
    "year",
    "community_id",
    "dynastic",
    "hopper",
];

/// Writes the canonical CSV. `preamble` lines are emitted as `# ` comments before the header.
pub fn write_records<W: Write>(writer: W, records: &[ElectionRecord], preamble: &[String]) -> Result<()> {
    let mut writer = writer;
    for line in preamble {
        writeln!(writer, "# {line}").map_err(|e| Error::io("<canonical csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_HEADER)?;
    let flag = |f: Option<bool>| match f {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    };
    for r in records {
        let community = r.community_id.map(|c| c.to_string()).unwrap_or_default();
        let year = r.year.to_string();
        w.write_record([
            r.last_name.as_str(),
            r.first_name.as_str(),
            r.middle_name.as_deref().unwrap_or(""),
            r.position.label(),
            r.party.as_deref().unwrap_or(""),
            r.region.as_str(),
            r.province.as_str(),
            r.municipality.as_str(),
            year.as_str(),
            community.as_str(),
            flag(r.dynastic),
            flag(r.hopper),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<canonical csv>", e))?;
    Ok(())
}

/// Which fields [`link_auxiliary`] may copy from the auxiliary source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFields {
    pub middle_name: bool,
    pub party: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkOutcome {
    Matched,
    Ambiguous,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDiagnostic {
    pub base_index: usize,
    pub outcome: LinkOutcome,
    pub candidates: usize,
    pub best_similarity: Option<f64>,
    pub copied: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub threshold: f64,
    pub matched: usize,
    pub ambiguous: usize,
    pub unmatched: usize,
    /// Base records that already carried every requested field.
    pub complete: usize,
    pub rows: Vec<LinkDiagnostic>,
}

/// Default similarity threshold for auxiliary linkage.
pub const DEFAULT_LINK_THRESHOLD: f64 = 0.90;

/// Jaro-Winkler similarity of the `"LAST FIRST"` strings of two records.
pub fn name_similarity(a: &ElectionRecord, b: &ElectionRecord) -> f64 {
    let ka = format!("{} {}", a.last_name, a.first_name);
    let kb = format!("{} {}", b.last_name, b.first_name);
    strsim::jaro_winkler(&ka, &kb)
}

/// Fills missing middle names and/or parties from an auxiliary source.
///
/// Candidates are searched only within the same (province, year, position) block.
/// A field is copied only when exactly one candidate clears `threshold`; present
/// fields are never overwritten.
pub fn link_auxiliary(
    base: &[ElectionRecord],
    aux: &[ElectionRecord],
    fields: LinkFields,
    threshold: f64,
) -> (Vec<ElectionRecord>, LinkageReport) {
    let mut blocks: HashMap<(&str, i32, Position), Vec<&ElectionRecord>> = HashMap::new();
    for rec in aux {
        blocks
            .entry((rec.province.as_str(), rec.year, rec.position))
            .or_default()
            .push(rec);
    }

    let mut report = LinkageReport {
        threshold,
        ..Default::default()
    };
    let mut out = base.to_vec();
    for (i, rec) in out.iter_mut().enumerate() {
        let wants_middle = fields.middle_name && rec.middle_name.is_none();
        let wants_party = fields.party && rec.party.is_none();
        if !wants_middle && !wants_party {
            report.complete += 1;
            continue;
        }
        let scored: Vec<(f64, &ElectionRecord)> = blocks
            .get(&(rec.province.as_str(), rec.year, rec.position))
            .map(|cands| {
                cands
                    .iter()
                    .map(|c| (name_similarity(rec, c), *c))
                    .filter(|(s, _)| *s >= threshold)
                    .collect()
            })
            .unwrap_or_default();
        let best = scored.iter().map(|(s, _)| *s).fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.max(s)))
        });

        let mut diag = LinkDiagnostic {
            base_index: i,
            outcome: LinkOutcome::Unmatched,
            candidates: scored.len(),
            best_similarity: best,
            copied: Vec::new(),
        };
        match scored.as_slice() {
            [] => report.unmatched += 1,
            [(_, hit)] => {
                if wants_middle {
                    if let Some(m) = &hit.middle_name {
                        rec.middle_name = Some(m.clone());
                        diag.copied.push("middle_name".into());
                    }
                }
                if wants_party {
                    if let Some(p) = &hit.party {
                        rec.party = Some(p.clone());
                        diag.copied.push("party".into());
                    }
                }
                diag.outcome = LinkOutcome::Matched;
                report.matched += 1;
            }
            _ => {
                log::info!(
                    "ambiguous linkage for {} ({} {}): {} candidates",
                    rec.label(),
                    rec.province,
                    rec.year,
                    scored.len()
                );
                diag.outcome = LinkOutcome::Ambiguous;
                report.ambiguous += 1;
            }
        }
        report.rows.push(diag);
    }
    (out, report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HopperReport {
    pub flagged: usize,
    /// PersonKeys duplicated inside one (province, year), excluded from matching.
    pub duplicates: Vec<String>,
}

/// Flags incumbents whose party differs from their own previous-cycle record.
pub fn assign_hopper(records: &mut [ElectionRecord]) -> HopperReport {
    let mut by_key: BTreeMap<(PersonKey, i32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_key.entry((r.person_key(), r.year)).or_default().push(i);
    }
    let first_year = records.iter().map(|r| r.year).min();

    let mut report = HopperReport::default();
    for ((key, year), idx) in &by_key {
        if idx.len() > 1 {
            log::warn!(
                "duplicate person {} {} {} in {} {}: excluded from hopper matching",
                key.last_name,
                key.first_name,
                key.middle_name.as_deref().unwrap_or(""),
                key.province,
                year
            );
            report
                .duplicates
                .push(format!("{}|{}|{}|{}|{}", key.last_name, key.first_name, key.middle_name.as_deref().unwrap_or(""), key.province, year));
        }
    }

    let hops: Vec<bool> = records
        .iter()
        .map(|r| {
            if Some(r.year) == first_year {
                return false;
            }
            let key = r.person_key();
            let current = &by_key[&(key.clone(), r.year)];
            if current.len() != 1 {
                return false;
            }
            match by_key.get(&(key, r.year - CYCLE_YEARS)).map(Vec::as_slice) {
                Some([prev]) => match (&records[*prev].party, &r.party) {
                    (Some(a), Some(b)) => a != b,
                    _ => false,
                },
                _ => false,
            }
        })
        .collect();
    for (r, hop) in records.iter_mut().zip(hops) {
        r.hopper = Some(hop);
        report.flagged += usize::from(hop);
    }
    report
}
