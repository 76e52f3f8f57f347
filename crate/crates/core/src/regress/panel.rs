use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::IndicatorRow;
use crate::ingest::{normalize_name, CYCLE_YEARS};

/// Largest tolerated share of indicator provinces with no socioeconomic rows.
pub const MAX_PROVINCE_MISMATCH: f64 = 0.10;

/// One row of the user-supplied socioeconomic table, already aligned to election years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocioRow {
    pub province: String,
    pub year: i32,
    pub pov: Option<f64>,
    pub hdi: Option<f64>,
}

fn optional_number(raw: &str, line: usize, column: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidInput(format!("line {line}: bad {column} value `{raw}`")))
}

/// Reads a `province,year,POV,HDI` table. Column names are matched case-insensitively;
/// blank or `NA` cells become missing values.
pub fn parse_socio<R: Read>(reader: R) -> Result<Vec<SocioRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let (p, y, pov, hdi) = (find("province")?, find("year")?, find("POV")?, find("HDI")?);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let year = rec[y]
            .trim()
            .parse::<i32>()
            .map_err(|_| Error::InvalidInput(format!("line {line}: bad year `{}`", &rec[y])))?;
        rows.push(SocioRow {
            province: normalize_name(&rec[p]),
            year,
            pov: optional_number(&rec[pov], line, "POV")?,
            hdi: optional_number(&rec[hdi], line, "HDI")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Column {
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "CCD")]
    Ccd,
    #[serde(rename = "GINI")]
    Cgc,
    #[serde(rename = "log_HHI")]
    LogHhi,
    #[serde(rename = "POV")]
    Pov,
    #[serde(rename = "HDI")]
    Hdi,
    #[serde(rename = "POV_lag_3year")]
    PovLag,
    #[serde(rename = "HDI_lag_3year")]
    HdiLag,
}

impl Column {
    pub const ALL: [Column; 8] = [
        Column::Acc,
        Column::Ccd,
        Column::Cgc,
        Column::LogHhi,
        Column::Pov,
        Column::Hdi,
        Column::PovLag,
        Column::HdiLag,
    ];
    pub const DYNASTIC: [Column; 4] = [Column::Acc, Column::Ccd, Column::Cgc, Column::LogHhi];

    pub fn name(self) -> &'static str {
        match self {
            Column::Acc => "ACC",
            Column::Ccd => "CCD",
            Column::Cgc => "GINI",
            Column::LogHhi => "log_HHI",
            Column::Pov => "POV",
            Column::Hdi => "HDI",
            Column::PovLag => "POV_lag_3year",
            Column::HdiLag => "HDI_lag_3year",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub province: String,
    pub year: i32,
    pub acc: f64,
    pub ccd: f64,
    pub cgc: Option<f64>,
    pub log_hhi: f64,
    pub pov: Option<f64>,
    pub hdi: Option<f64>,
    pub pov_lag: Option<f64>,
    pub hdi_lag: Option<f64>,
    /// Every regression column is present and finite.
    pub complete: bool,
}

impl PanelRow {
    pub fn get(&self, column: Column) -> Option<f64> {
        let v = match column {
            Column::Acc => Some(self.acc),
            Column::Ccd => Some(self.ccd),
            Column::Cgc => self.cgc,
            Column::LogHhi => Some(self.log_hhi),
            Column::Pov => self.pov,
            Column::Hdi => self.hdi,
            Column::PovLag => self.pov_lag,
            Column::HdiLag => self.hdi_lag,
        };
        v.filter(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelOptions {
    /// Logarithm base applied to HHI; `None` means natural log.
    pub log_base: Option<f64>,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            log_base: None,
            first_year: 2007,
            last_year: 2019,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFrame {
    pub rows: Vec<PanelRow>,
    /// Indicator provinces without any socioeconomic row.
    pub unmatched_provinces: Vec<String>,
}

impl PanelFrame {
    pub fn complete_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.complete).count()
    }
}

/// Inner join of indicator rows with socioeconomic rows on (province, year),
/// restricted to the regression window, with lagged socio columns attached.
pub fn build_panel(indicators: &[IndicatorRow], socio: &[SocioRow], opts: &PanelOptions) -> Result<PanelFrame> {
    let socio_map: BTreeMap<(&str, i32), &SocioRow> =
        socio.iter().map(|s| ((s.province.as_str(), s.year), s)).collect();
    let socio_provinces: BTreeSet<&str> = socio.iter().map(|s| s.province.as_str()).collect();
    let ind_provinces: BTreeSet<&str> = indicators.iter().map(|r| r.province.as_str()).collect();
    let unmatched: Vec<String> = ind_provinces
        .iter()
        .filter(|p| !socio_provinces.contains(*p))
        .map(|p| p.to_string())
        .collect();
    if !ind_provinces.is_empty() {
        let rate = unmatched.len() as f64 / ind_provinces.len() as f64;
        if rate > MAX_PROVINCE_MISMATCH {
            return Err(Error::ProvinceMismatch { rate, unmatched });
        }
    }

    let log = |h: f64| match opts.log_base {
        None => h.ln(),
        Some(b) => h.log(b),
    };
    let mut rows = Vec::new();
    for ind in indicators {
        if ind.year < opts.first_year || ind.year > opts.last_year {
            continue;
        }
        let Some(s) = socio_map.get(&(ind.province.as_str(), ind.year)) else {
            continue;
        };
        let lag = socio_map.get(&(ind.province.as_str(), ind.year - CYCLE_YEARS));
        let mut row = PanelRow {
            province: ind.province.clone(),
            year: ind.year,
            acc: ind.acc,
            ccd: ind.ccd,
            cgc: ind.cgc,
            log_hhi: if ind.hhi > 0.0 { log(ind.hhi) } else { f64::NAN },
            pov: s.pov,
            hdi: s.hdi,
            pov_lag: lag.and_then(|l| l.pov),
            hdi_lag: lag.and_then(|l| l.hdi),
            complete: false,
        };
        row.complete = Column::ALL.iter().all(|&c| row.get(c).is_some());
        rows.push(row);
    }
    rows.sort_by(|a, b| (&a.province, a.year).cmp(&(&b.province, b.year)));
    Ok(PanelFrame {
        rows,
        unmatched_provinces: unmatched,
    })
}
