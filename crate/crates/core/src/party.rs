//! Dynastic flags and party-loyalty measures: hopping, dynasty-party overlap,
//! bandwagoning and per-party membership counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ElectionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Dynastic,
    NonDynastic,
}

impl Group {
    pub fn of(record: &ElectionRecord) -> Option<Group> {
        record.dynastic.map(|d| if d { Group::Dynastic } else { Group::NonDynastic })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Dynastic => "dynastic",
            Group::NonDynastic => "non_dynastic",
        }
    }
}

/// Marks a record dynastic when at least one other record shares its
/// (province, year, community).
pub fn assign_dynastic(records: &mut [ElectionRecord]) -> Result<()> {
    let mut sizes: BTreeMap<(&str, i32, u32), usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let c = r.community_id.ok_or(Error::UnassignedCommunity { index: i })?;
        *sizes.entry((r.province.as_str(), r.year, c)).or_default() += 1;
    }
    let flags: Vec<bool> = records
        .iter()
        .map(|r| sizes[&(r.province.as_str(), r.year, r.community_id.unwrap_or_default())] >= 2)
        .collect();
    for (r, d) in records.iter_mut().zip(flags) {
        r.dynastic = Some(d);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoppingCell {
    pub province: String,
    pub year: i32,
    pub group: Group,
    pub hoppers: usize,
    pub eligible: usize,
    pub rate: Option<f64>,
}

/// Hopping counts per (province, year, group), skipping the first cycle in the data.
/// Both groups are always emitted together for each province-year.
pub fn hopping_rates(records: &[ElectionRecord]) -> Vec<HoppingCell> {
    let Some(first_year) = records.iter().map(|r| r.year).min() else {
        return Vec::new();
    };
    let mut counts: BTreeMap<(&str, i32), [(usize, usize); 2]> = BTreeMap::new();
    for r in records.iter().filter(|r| r.year > first_year) {
        let cell = counts.entry((r.province.as_str(), r.year)).or_default();
        let (Some(group), Some(hop)) = (Group::of(r), r.hopper) else {
            continue;
        };
        let slot = &mut cell[group as usize];
        slot.1 += 1;
        slot.0 += usize::from(hop);
    }
    let mut out = Vec::with_capacity(counts.len() * 2);
    for ((province, year), cells) in counts {
        for (group, (hoppers, eligible)) in [Group::Dynastic, Group::NonDynastic].into_iter().zip(cells) {
            out.push(HoppingCell {
                province: province.to_string(),
                year,
                group,
                hoppers,
                eligible,
                rate: (eligible > 0).then(|| hoppers as f64 / eligible as f64),
            });
        }
    }
    out
}

/// `(dynastic rate, non-dynastic rate)` for province-years where both are defined.
pub fn paired_hopping_rates(cells: &[HoppingCell]) -> Vec<(f64, f64)> {
    let mut by_key: BTreeMap<(&str, i32), [Option<f64>; 2]> = BTreeMap::new();
    for c in cells {
        by_key.entry((c.province.as_str(), c.year)).or_default()[c.group as usize] = c.rate;
    }
    by_key
        .into_values()
        .filter_map(|[d, n]| Some((d?, n?)))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapWeighting {
    #[default]
    Unweighted,
    /// Weight each community by its number of known-party members.
    SizeWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub province: String,
    pub year: i32,
    /// Dynastic communities with at least one known party.
    pub communities: usize,
    pub overlap: Option<f64>,
}

/// Share of each dynastic community's known-party members that sit in its most
/// common party, averaged over the communities of a province-year.
pub fn dynasty_party_overlap(records: &[ElectionRecord], weighting: OverlapWeighting) -> Vec<OverlapRow> {
    type Key<'a> = (&'a str, i32);
    let mut members: BTreeMap<(Key, u32), Vec<Option<&str>>> = BTreeMap::new();
    let mut keys: BTreeSet<Key> = BTreeSet::new();
    for r in records {
        keys.insert((r.province.as_str(), r.year));
        if let Some(c) = r.community_id {
            members
                .entry(((r.province.as_str(), r.year), c))
                .or_default()
                .push(r.party.as_deref());
        }
    }
    let mut per_key: BTreeMap<Key, Vec<(f64, usize)>> = BTreeMap::new();
    for ((key, _), parties) in &members {
        if parties.len() < 2 {
            continue;
        }
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        for p in parties.iter().flatten() {
            *tally.entry(p).or_default() += 1;
        }
        let known: usize = tally.values().sum();
        if known == 0 {
            continue;
        }
        let modal = *tally.values().max().unwrap_or(&0);
        per_key
            .entry(*key)
            .or_default()
            .push((modal as f64 / known as f64, known));
    }
    keys.into_iter()
        .map(|key| {
            let shares = per_key.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            let overlap = if shares.is_empty() {
                None
            } else {
                Some(match weighting {
                    OverlapWeighting::Unweighted => {
                        shares.iter().map(|(s, _)| s).sum::<f64>() / shares.len() as f64
                    }
                    OverlapWeighting::SizeWeighted => {
                        let total: usize = shares.iter().map(|(_, n)| n).sum();
                        shares.iter().map(|(s, n)| s * *n as f64).sum::<f64>() / total as f64
                    }
                })
            };
            OverlapRow {
                province: key.0.to_string(),
                year: key.1,
                communities: shares.len(),
                overlap,
            }
        })
        .collect()
}

/// Party of the sitting president at each election.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MajorPartyMap(pub BTreeMap<i32, String>);

impl Default for MajorPartyMap {
    fn default() -> Self {
        MajorPartyMap(
            [
                (2004, "LKS-CMD"),
                (2007, "LKS-CMD"),
                (2010, "LKS-KAM"),
                (2013, "LP"),
                (2016, "LP"),
                (2019, "PDPLBN"),
                (2022, "PDPLBN"),
            ]
            .into_iter()
            .map(|(y, p)| (y, p.to_string()))
            .collect(),
        )
    }
}

impl MajorPartyMap {
    pub fn get(&self, year: i32) -> Result<&str> {
        self.0
            .get(&year)
            .map(String::as_str)
            .ok_or(Error::YearNotInPartyMap(year))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwagonRow {
    pub year: i32,
    pub group: Group,
    pub major_party: String,
    pub bandwagoners: usize,
    pub winners: usize,
    pub rate: Option<f64>,
}

/// National share of each group's winners who hopped into the year's major party.
pub fn bandwagon_rates(records: &[ElectionRecord], map: &MajorPartyMap) -> Result<Vec<BandwagonRow>> {
    let mut counts: BTreeMap<(i32, Group), (usize, usize)> = BTreeMap::new();
    let years: BTreeSet<i32> = records.iter().map(|r| r.year).collect();
    for &year in &years {
        map.get(year)?;
        for g in [Group::Dynastic, Group::NonDynastic] {
            counts.insert((year, g), (0, 0));
        }
    }
    for r in records {
        let Some(group) = Group::of(r) else { continue };
        let major = map.get(r.year)?;
        let slot = counts.entry((r.year, group)).or_default();
        slot.1 += 1;
        if r.hopper == Some(true) && r.party.as_deref() == Some(major) {
            slot.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|((year, group), (bandwagoners, winners))| {
            Ok(BandwagonRow {
                year,
                group,
                major_party: map.get(year)?.to_string(),
                bandwagoners,
                winners,
                rate: (winners > 0).then(|| bandwagoners as f64 / winners as f64),
            })
        })
        .collect()
}

pub const OTHER_PARTY: &str = "OTHER";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipCell {
    pub party: String,
    pub year: i32,
    pub group: Group,
    pub count: usize,
}

/// Winners per (party, year, group). Parties not in `parties` (and unknown ones) count as OTHER.
pub fn party_membership_table(records: &[ElectionRecord], parties: &[String]) -> Vec<MembershipCell> {
    let mut labels: Vec<&str> = parties.iter().map(String::as_str).collect();
    labels.push(OTHER_PARTY);
    let years: BTreeSet<i32> = records.iter().map(|r| r.year).collect();
    let mut counts: BTreeMap<(usize, i32, Group), usize> = BTreeMap::new();
    for (pi, _) in labels.iter().enumerate() {
        for &y in &years {
            for g in [Group::Dynastic, Group::NonDynastic] {
                counts.insert((pi, y, g), 0);
            }
        }
    }
    let other = labels.len() - 1;
    for r in records {
        let Some(group) = Group::of(r) else { continue };
        let pi = r
            .party
            .as_deref()
            .and_then(|p| parties.iter().position(|q| q == p))
            .unwrap_or(other);
        *counts.entry((pi, r.year, group)).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((pi, year, group), count)| MembershipCell {
            party: labels[pi].to_string(),
            year,
            group,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynasticShare {
    pub year: i32,
    pub dynastic: usize,
    pub total: usize,
    pub share: f64,
}

/// Share of winners flagged dynastic, per year.
pub fn dynastic_share(records: &[ElectionRecord]) -> Vec<DynasticShare> {
    let mut counts: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for r in records {
        let slot = counts.entry(r.year).or_default();
        slot.1 += 1;
        slot.0 += usize::from(r.dynastic == Some(true));
    }
    counts
        .into_iter()
        .map(|(year, (dynastic, total))| DynasticShare {
            year,
            dynastic,
            total,
            share: dynastic as f64 / total as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Position;

    fn rec(province: &str, year: i32, community: u32, party: Option<&str>) -> ElectionRecord {
        let mut r = ElectionRecord::new("X", "Y", None, Position::Councilor, party, province, "", year);
        r.community_id = Some(community);
        r
    }

    #[test]
    fn dynastic_flags() {
        let mut recs = vec![
            rec("A", 2016, 0, None),
            rec("A", 2016, 0, None),
            rec("A", 2016, 0, None),
            rec("A", 2016, 1, None),
            rec("B", 2016, 1, None),
        ];
        assign_dynastic(&mut recs).unwrap();
        let flags: Vec<_> = recs.iter().map(|r| r.dynastic.unwrap()).collect();
        assert_eq!(flags, vec![true, true, true, false, false]);
    }

    #[test]
    fn unassigned_community_is_an_error() {
        let mut recs = vec![rec("A", 2016, 0, None)];
        recs[0].community_id = None;
        assert!(matches!(
            assign_dynastic(&mut recs),
            Err(Error::UnassignedCommunity { index: 0 })
        ));
    }

    fn flagged(year: i32, dynastic: bool, hopper: bool, party: &str) -> ElectionRecord {
        let mut r = rec("A", year, 0, Some(party));
        r.dynastic = Some(dynastic);
        r.hopper = Some(hopper);
        r
    }

    #[test]
    fn hopping_rate_counts() {
        let mut recs = vec![flagged(2013, true, false, "LP")];
        for i in 0..10 {
            recs.push(flagged(2016, true, i < 3, "LP"));
        }
        let cells = hopping_rates(&recs);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].group, Group::Dynastic);
        assert_eq!(cells[0].rate, Some(0.3));
        assert_eq!(cells[1].eligible, 0);
        assert_eq!(cells[1].rate, None);
        assert!(paired_hopping_rates(&cells).is_empty());
    }

    #[test]
    fn overlap_examples() {
        let recs = vec![
            rec("A", 2016, 0, Some("LP")),
            rec("A", 2016, 0, Some("LP")),
            rec("A", 2016, 0, Some("LP")),
            rec("A", 2016, 0, Some("NPC")),
            rec("A", 2016, 1, Some("NP")),
            rec("A", 2016, 1, Some("NP")),
            rec("A", 2016, 2, Some("NP")),
            rec("B", 2016, 0, Some("LP")),
        ];
        let rows = dynasty_party_overlap(&recs, OverlapWeighting::Unweighted);
        assert_eq!(rows[0].communities, 2);
        assert!((rows[0].overlap.unwrap() - 0.875).abs() < 1e-15);
        assert_eq!(rows[1].overlap, None);
        let weighted = dynasty_party_overlap(&recs, OverlapWeighting::SizeWeighted);
        assert!((weighted[0].overlap.unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_two_communities_mean() {
        let recs = vec![
            rec("A", 2016, 0, Some("LP")),
            rec("A", 2016, 0, Some("LP")),
            rec("A", 2016, 1, Some("LP")),
            rec("A", 2016, 1, Some("NP")),
            rec("A", 2016, 1, None),
        ];
        let rows = dynasty_party_overlap(&recs, OverlapWeighting::Unweighted);
        assert!((rows[0].overlap.unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bandwagon() {
        let map = MajorPartyMap::default();
        assert_eq!(map.get(2016).unwrap(), "LP");
        let mut recs = Vec::new();
        for i in 0..100 {
            recs.push(flagged(2016, true, i < 10, if i < 8 { "LP" } else { "NP" }));
        }
        let rows = bandwagon_rates(&recs, &map).unwrap();
        assert_eq!(rows[0].rate, Some(0.08));
        assert_eq!(rows[1].winners, 0);
        assert_eq!(rows[1].rate, None);
        let recs = vec![flagged(2025, true, false, "LP")];
        assert!(matches!(bandwagon_rates(&recs, &map), Err(Error::YearNotInPartyMap(2025))));
    }

    #[test]
    fn membership_table() {
        let recs = vec![
            flagged(2013, true, false, "LP"),
            flagged(2013, true, false, "LP"),
            flagged(2013, false, false, "NP"),
        ];
        let t = party_membership_table(&recs, &["LP".to_string()]);
        let cell = |p: &str, g| t.iter().find(|c| c.party == p && c.group == g).unwrap().count;
        assert_eq!(cell("LP", Group::Dynastic), 2);
        assert_eq!(cell("OTHER", Group::NonDynastic), 1);
        let t = party_membership_table(&recs, &[]);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|c| c.party == OTHER_PARTY));
    }
}
