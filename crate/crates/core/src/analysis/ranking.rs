use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const TIE_POLICY: &str = "descending value, ties broken by ascending entity id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub entity_id: String,
    pub value: f64,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub key: String,
    pub entries: Vec<RankEntry>,
    pub tie_policy: String,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> BTreeMap<&str, usize> {
        self.entries
            .iter()
            .map(|e| (e.entity_id.as_str(), e.position))
            .collect()
    }
}

pub fn rank_entities(key: &str, values: &BTreeMap<String, f64>) -> Result<Ranking, AnalysisError> {
    let bad: Vec<String> = values
        .iter()
        .filter(|(_, v)| !v.is_finite())
        .map(|(k, _)| k.clone())
        .collect();
    if !bad.is_empty() {
        return Err(AnalysisError::NonFinite(bad));
    }
    let mut sorted: Vec<(&String, f64)> = values.iter().map(|(k, v)| (k, *v)).collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Ranking {
        key: key.to_string(),
        entries: sorted
            .into_iter()
            .enumerate()
            .map(|(i, (id, value))| RankEntry {
                entity_id: id.clone(),
                value,
                position: i + 1,
            })
            .collect(),
        tie_policy: TIE_POLICY.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub items: usize,
    /// Members at or above each threshold position.
    pub counts: Vec<usize>,
    /// `None` for groups without items.
    pub percentages: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNDistribution {
    pub thresholds: Vec<usize>,
    pub groups: BTreeMap<String, GroupCounts>,
}

/// How many of each group's members sit within each top-N cut.
pub fn topn_distribution(
    ranking: &Ranking,
    grouping: &BTreeMap<String, String>,
    item_counts: &BTreeMap<String, usize>,
    thresholds: &[usize],
) -> Result<TopNDistribution, AnalysisError> {
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_unstable();
    thresholds.dedup();
    let mut ranked: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for e in &ranking.entries {
        let group = grouping
            .get(&e.entity_id)
            .ok_or_else(|| AnalysisError::MissingGroup(e.entity_id.clone()))?;
        ranked.entry(group).or_default().push(e.position);
    }
    for (group, positions) in &ranked {
        let items = item_counts.get(*group).copied().unwrap_or(0);
        if items < positions.len() {
            return Err(AnalysisError::GroupCount {
                group: group.to_string(),
                items,
                ranked: positions.len(),
            });
        }
    }
    let groups = item_counts
        .iter()
        .map(|(group, &items)| {
            let positions = ranked.get(group.as_str()).map_or(&[][..], |v| v.as_slice());
            let counts: Vec<usize> = thresholds
                .iter()
                .map(|&t| positions.iter().filter(|&&p| p <= t).count())
                .collect();
            let percentages = counts
                .iter()
                .map(|&c| (items > 0).then(|| 100.0 * c as f64 / items as f64))
                .collect();
            (
                group.clone(),
                GroupCounts {
                    items,
                    counts,
                    percentages,
                },
            )
        })
        .collect();
    Ok(TopNDistribution { thresholds, groups })
}

/// Mean absolute position difference over a shared entity set.
pub fn mean_rank_shift(r1: &Ranking, r2: &Ranking) -> Result<f64, AnalysisError> {
    let p1 = r1.positions();
    let p2 = r2.positions();
    let k1: BTreeSet<&str> = p1.keys().copied().collect();
    let k2: BTreeSet<&str> = p2.keys().copied().collect();
    if k1 != k2 {
        return Err(AnalysisError::MismatchedEntities {
            only_first: k1.difference(&k2).map(|s| s.to_string()).collect(),
            only_second: k2.difference(&k1).map(|s| s.to_string()).collect(),
        });
    }
    if p1.is_empty() {
        return Ok(0.0);
    }
    let total: usize = p1.iter().map(|(k, &a)| a.abs_diff(p2[k])).sum();
    Ok(total as f64 / p1.len() as f64)
}
