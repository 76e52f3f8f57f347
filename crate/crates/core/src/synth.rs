//! Seeded synthetic election panels with planted clans, party switches and
//! socioeconomic outcomes.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::indicators::indicator_row;
use crate::ingest::{ElectionRecord, Position, DEFAULT_ELECTION_YEARS};
use crate::regress::SocioRow;

/// Linear model for one socioeconomic outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocioModel {
    pub intercept: f64,
    pub cgc: f64,
    pub ccd: f64,
    pub log_hhi: f64,
    pub acc: f64,
    /// Standard deviation of the per-province intercept.
    pub province_sd: f64,
    pub noise_sd: f64,
}

impl Default for SocioModel {
    fn default() -> Self {
        SocioModel {
            intercept: 0.0,
            cgc: 0.0,
            ccd: 0.0,
            log_hhi: 0.0,
            acc: 0.0,
            province_sd: 0.0,
            noise_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopProbability {
    pub dynastic: f64,
    pub non_dynastic: f64,
}

impl Default for HopProbability {
    fn default() -> Self {
        HopProbability {
            dynastic: 0.25,
            non_dynastic: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_provinces: usize,
    pub years: Vec<i32>,
    /// Inclusive range of clans per province.
    pub clans_per_province: [usize; 2],
    /// Inclusive range of simultaneous office holders per clan and year.
    pub clan_size: [usize; 2],
    pub seats_per_province: usize,
    /// Chance that a new clan member carries another clan's surname as middle name.
    pub intermarriage_probability: f64,
    /// Give the first two clans of every province the same middle name.
    pub shared_middle: bool,
    /// Chance that a sitting official holds the same seat next cycle.
    pub retain_probability: f64,
    pub parties: Vec<String>,
    pub hop_probability: HopProbability,
    pub hdi: SocioModel,
    pub pov: SocioModel,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_provinces: 30,
            years: DEFAULT_ELECTION_YEARS.to_vec(),
            clans_per_province: [2, 5],
            clan_size: [2, 5],
            seats_per_province: 30,
            intermarriage_probability: 0.1,
            shared_middle: false,
            retain_probability: 0.6,
            parties: ["LP", "NP", "NPC", "NUP", "PDPLBN", "LKS-KAM"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            hop_probability: HopProbability::default(),
            hdi: SocioModel {
                intercept: 0.75,
                cgc: -0.3,
                ccd: -0.15,
                province_sd: 0.03,
                noise_sd: 0.01,
                ..SocioModel::default()
            },
            pov: SocioModel {
                intercept: 20.0,
                cgc: 15.0,
                ccd: 10.0,
                province_sd: 4.0,
                noise_sd: 1.5,
                ..SocioModel::default()
            },
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        for (name, p) in [
            ("intermarriage_probability", self.intermarriage_probability),
            ("retain_probability", self.retain_probability),
            ("hop_probability.dynastic", self.hop_probability.dynastic),
            ("hop_probability.non_dynastic", self.hop_probability.non_dynastic),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.n_provinces == 0 || self.years.is_empty() {
            return bad("need at least one province and one year".into());
        }
        if self.years.windows(2).any(|w| w[0] >= w[1]) {
            return bad("years must be strictly increasing".into());
        }
        let [cmin, cmax] = self.clans_per_province;
        let [smin, smax] = self.clan_size;
        if cmin > cmax || smin > smax || smin == 0 {
            return bad("clan ranges must satisfy 1 <= min <= max".into());
        }
        if cmax * smax > self.seats_per_province {
            return bad(format!(
                "{cmax} clans of up to {smax} members exceed {} seats",
                self.seats_per_province
            ));
        }
        if self.parties.len() < 2 {
            return bad("need at least two parties".into());
        }
        if self.shared_middle && cmin < 2 {
            return bad("shared_middle needs at least two clans per province".into());
        }
        for m in [&self.hdi, &self.pov] {
            if m.province_sd < 0.0 || m.noise_sd < 0.0 {
                return bad("standard deviations must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Planted facts for one generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    /// Clan label, unique across the dataset; `None` for unaffiliated officials.
    pub clan: Option<String>,
    /// The official held office last cycle and switched party.
    pub hop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Aligned with the generated records.
    pub rows: Vec<TruthRow>,
    pub hdi_model: SocioModel,
    pub pov_model: SocioModel,
    /// Per-province intercept draws as (HDI, POV).
    pub province_effects: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<ElectionRecord>,
    pub truth: GroundTruth,
    pub socio: Vec<SocioRow>,
}

const SYLLABLES: [&str; 16] = [
    "BA", "DE", "GI", "KO", "LU", "MA", "NE", "PI", "RO", "SU", "TA", "VE", "YI", "ZO", "CA", "HU",
];

/// Name token for `i`; distinct indices give distinct tokens.
fn token(mut i: usize) -> String {
    let mut parts = Vec::new();
    while i > 0 || parts.len() < 3 {
        parts.push(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
    }
    parts.reverse();
    parts.concat()
}

/// Token indices for one province, disjoint from every other province.
struct TokenPool {
    next: usize,
}

impl TokenPool {
    const PER_PROVINCE: usize = 1 << 20;

    fn for_province(p: usize) -> TokenPool {
        TokenPool {
            next: p * Self::PER_PROVINCE,
        }
    }

    fn take(&mut self) -> String {
        let t = token(self.next);
        self.next += 1;
        t
    }
}

pub fn seat_positions(n: usize) -> Vec<Position> {
    const CYCLE: [Position; 8] = [
        Position::HouseRep,
        Position::BoardMember,
        Position::Mayor,
        Position::ViceMayor,
        Position::Councilor,
        Position::BoardMember,
        Position::Councilor,
        Position::Councilor,
    ];
    let mut out = vec![Position::Governor, Position::ViceGovernor];
    out.extend((0..n.saturating_sub(2)).map(|i| CYCLE[i % CYCLE.len()]));
    out.truncate(n);
    out
}

#[derive(Clone)]
struct Person {
    first: String,
    last: String,
    middle: String,
    clan: Option<usize>,
    party: usize,
}

fn derived_seed(seed: u64, province: usize) -> u64 {
    let mut z = seed ^ (province as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn province_name(p: usize) -> String {
    format!("PROVINCE {:02}", p + 1)
}

struct ProvinceOut {
    records: Vec<ElectionRecord>,
    truth: Vec<TruthRow>,
    socio: Vec<SocioRow>,
    effects: (f64, f64),
}

fn generate_province(cfg: &SynthConfig, p: usize) -> Result<ProvinceOut> {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, p));
    let mut pool = TokenPool::for_province(p);
    let province = province_name(p);
    let seats = seat_positions(cfg.seats_per_province);
    let n_clans = rng.random_range(cfg.clans_per_province[0]..=cfg.clans_per_province[1]);
    let surnames: Vec<String> = (0..n_clans).map(|_| pool.take()).collect();
    let mut middles: Vec<String> = (0..n_clans).map(|_| pool.take()).collect();
    if cfg.shared_middle {
        middles[1] = middles[0].clone();
    }

    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::InfeasibleConfig(e.to_string()));
    let hdi_effect = normal(cfg.hdi.province_sd)?.sample(&mut rng);
    let pov_effect = normal(cfg.pov.province_sd)?.sample(&mut rng);
    let hdi_noise = normal(cfg.hdi.noise_sd)?;
    let pov_noise = normal(cfg.pov.noise_sd)?;

    let mut out = ProvinceOut {
        records: Vec::new(),
        truth: Vec::new(),
        socio: Vec::new(),
        effects: (hdi_effect, pov_effect),
    };
    let mut occupants: Vec<Option<Person>> = vec![None; seats.len()];

    for &year in &cfg.years {
        let mut retained = vec![false; seats.len()];
        for (s, occ) in occupants.iter_mut().enumerate() {
            if occ.is_some() && rng.random_bool(cfg.retain_probability) {
                retained[s] = true;
            } else {
                *occ = None;
            }
        }
        for c in 0..n_clans {
            let target = rng.random_range(cfg.clan_size[0]..=cfg.clan_size[1]);
            let mut held: Vec<usize> = (0..seats.len())
                .filter(|&s| occupants[s].as_ref().is_some_and(|o| o.clan == Some(c)))
                .collect();
            held.shuffle(&mut rng);
            for &s in held.iter().skip(target) {
                occupants[s] = None;
                retained[s] = false;
            }
            let mut free: Vec<usize> = (0..seats.len()).filter(|&s| occupants[s].is_none()).collect();
            free.shuffle(&mut rng);
            for &s in free.iter().take(target.saturating_sub(held.len())) {
                let middle = if n_clans > 1 && rng.random_bool(cfg.intermarriage_probability) {
                    let others: Vec<usize> = (0..n_clans).filter(|&o| o != c).collect();
                    surnames[*others.choose(&mut rng).unwrap()].clone()
                } else {
                    middles[c].clone()
                };
                occupants[s] = Some(Person {
                    first: pool.take(),
                    last: surnames[c].clone(),
                    middle,
                    clan: Some(c),
                    party: rng.random_range(0..cfg.parties.len()),
                });
            }
        }
        for occ in occupants.iter_mut().filter(|o| o.is_none()) {
            *occ = Some(Person {
                first: pool.take(),
                last: pool.take(),
                middle: pool.take(),
                clan: None,
                party: rng.random_range(0..cfg.parties.len()),
            });
        }

        let mut clan_counts = vec![0usize; n_clans];
        for o in occupants.iter().flatten() {
            if let Some(c) = o.clan {
                clan_counts[c] += 1;
            }
        }
        let first_record = out.records.len();
        for (s, occ) in occupants.iter_mut().enumerate() {
            let person = occ.as_mut().expect("every seat filled");
            let mut hop = false;
            if retained[s] {
                let dynastic = person.clan.is_some_and(|c| clan_counts[c] >= 2);
                let prob = if dynastic {
                    cfg.hop_probability.dynastic
                } else {
                    cfg.hop_probability.non_dynastic
                };
                if rng.random_bool(prob) {
                    let shift = rng.random_range(1..cfg.parties.len());
                    person.party = (person.party + shift) % cfg.parties.len();
                    hop = true;
                }
            }
            let mut rec = ElectionRecord::new(
                &person.last,
                &person.first,
                Some(&person.middle),
                seats[s],
                Some(&cfg.parties[person.party]),
                &province,
                &format!("TOWN {}", s % 6 + 1),
                year,
            );
            rec.region = format!("REGION {}", p % 8 + 1);
            out.records.push(rec);
            out.truth.push(TruthRow {
                clan: person.clan.map(|c| format!("{province}/{}", surnames[c])),
                hop,
            });
        }

        let slice = &out.records[first_record..];
        let graph = build_graph(slice.iter().enumerate());
        let mut ids: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        let mut assignment = Vec::with_capacity(graph.node_count());
        for node in &graph.nodes {
            let seat = node.record;
            let key = occupants[seat].as_ref().and_then(|o| o.clan).map_or(Some(n_clans + seat), Some);
            let next = ids.len();
            assignment.push(*ids.entry(key).or_insert(next));
        }
        let partition = Partition {
            num_communities: ids.len(),
            modularity: crate::community::modularity(&graph, &assignment, 1.0),
            assignment,
        };
        let row = indicator_row(&graph, &partition)?;
        let cgc = row.cgc.unwrap_or(0.0);
        let linear = |m: &SocioModel| m.intercept + m.cgc * cgc + m.ccd * row.ccd + m.log_hhi * row.hhi.ln() + m.acc * row.acc;
        out.socio.push(SocioRow {
            province: province.clone(),
            year,
            hdi: Some(linear(&cfg.hdi) + hdi_effect + hdi_noise.sample(&mut rng)),
            pov: Some(linear(&cfg.pov) + pov_effect + pov_noise.sample(&mut rng)),
        });
    }
    Ok(out)
}

/// Generates an election panel, its ground truth and a socioeconomic table.
///
/// Every random draw derives from `config.seed`; provinces use independent
/// derived streams so the result does not depend on scheduling.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let run = |p: usize| generate_province(config, p);
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<ProvinceOut>> = {
        use rayon::prelude::*;
        (0..config.n_provinces).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<ProvinceOut>> = (0..config.n_provinces).map(run).collect();

    let mut data = SynthData {
        records: Vec::new(),
        truth: GroundTruth {
            seed: config.seed,
            rows: Vec::new(),
            hdi_model: config.hdi.clone(),
            pov_model: config.pov.clone(),
            province_effects: BTreeMap::new(),
        },
        socio: Vec::new(),
    };
    for (p, part) in parts.into_iter().enumerate() {
        let part = part?;
        data.records.extend(part.records);
        data.truth.rows.extend(part.truth);
        data.socio.extend(part.socio);
        data.truth.province_effects.insert(province_name(p), part.effects);
    }
    Ok(data)
}
