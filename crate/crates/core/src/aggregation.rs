//! Per-unit series, the three aggregation schemes and the internal versus
//! general consistency check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{
    indicator_table, scoped_share, EntityIndicators, IndicatorError, IndicatorOptions,
    IndicatorTable, Measure, Metric, Series,
};
use crate::measurement::{validate_waves, Snapshot, Wave, WaveError};
use crate::registry::{Registry, UnitType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    UniGeneral,
    UnitType,
    UniInternal,
}

impl ScopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeKind::UniGeneral => "uni_general",
            ScopeKind::UnitType => "unit_type",
            ScopeKind::UniInternal => "uni_internal",
        }
    }
}

impl fmt::Display for ScopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("snapshot for {wave} was taken against registry {snapshot}, but the loaded registry is {registry}")]
    RegistryMismatch {
        wave: Wave,
        snapshot: String,
        registry: String,
    },
    #[error("snapshot for {wave} holds URL `{url}` which the registry does not admit")]
    UnknownUrl { wave: Wave, url: String },
    #[error("unknown unit type `{0}`")]
    UnknownType(String),
    #[error("{0}")]
    Waves(#[from] WaveError),
    #[error("{0}")]
    Indicators(#[from] IndicatorError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationOptions {
    /// Count a unit with several URLs once per wave (its largest URL)
    /// instead of summing its URL variants.
    pub dedupe_unit_urls: bool,
}

/// A URL expected at a wave but recorded as missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingRecord {
    pub wave: Wave,
    pub url: String,
    pub owner: String,
    pub reason: String,
}

/// Per-wave series for every active unit and every university's general URLs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSeries {
    pub waves: Vec<Wave>,
    pub units: BTreeMap<String, Series>,
    pub general: BTreeMap<String, Series>,
    pub missing: Vec<MissingRecord>,
}

/// Joins snapshots onto the registry. A unit or university is unmeasured at
/// a wave when none of its URLs has a record there.
pub fn collect_series(
    registry: &Registry,
    snapshots: &[Snapshot],
    options: &AggregationOptions,
) -> Result<SystemSeries, AggregationError> {
    let waves: Vec<Wave> = snapshots.iter().map(|s| s.wave).collect();
    validate_waves(&waves)?;
    for s in snapshots {
        if let Some(h) = &s.registry_hash {
            if h != registry.hash() {
                return Err(AggregationError::RegistryMismatch {
                    wave: s.wave,
                    snapshot: h.clone(),
                    registry: registry.hash().to_string(),
                });
            }
        }
        if let Some(url) = s.records.keys().find(|u| registry.owner_of(u).is_none()) {
            return Err(AggregationError::UnknownUrl {
                wave: s.wave,
                url: url.clone(),
            });
        }
    }

    let mut missing = Vec::new();
    let mut units = BTreeMap::new();
    for unit in registry.active_units() {
        let series = snapshots
            .iter()
            .map(|s| {
                if unit.first_wave > s.wave.index {
                    return None;
                }
                let mut total: Option<Measure> = None;
                for url in &unit.urls {
                    if let Some(rec) = s.records.get(&url.normalized) {
                        let m = Measure {
                            size: rec.page_count,
                            visibility: rec.visibility,
                        };
                        let t = total.get_or_insert_with(Measure::default);
                        if options.dedupe_unit_urls {
                            t.size = t.size.max(m.size);
                            t.visibility = t.visibility.max(m.visibility);
                        } else {
                            *t += m;
                        }
                    } else if let Some(reason) = s.missing.get(&url.normalized) {
                        missing.push(MissingRecord {
                            wave: s.wave,
                            url: url.normalized.clone(),
                            owner: unit.id.clone(),
                            reason: reason.clone(),
                        });
                    }
                }
                total
            })
            .collect();
        units.insert(unit.id.clone(), series);
    }

    let mut general = BTreeMap::new();
    for uni in registry.universities().values() {
        let series = snapshots
            .iter()
            .map(|s| {
                let mut total: Option<Measure> = None;
                for url in uni.general_urls() {
                    if let Some(rec) = s.records.get(&url.normalized) {
                        *total.get_or_insert_with(Measure::default) += Measure {
                            size: rec.page_count,
                            visibility: rec.visibility,
                        };
                    } else if let Some(reason) = s.missing.get(&url.normalized) {
                        missing.push(MissingRecord {
                            wave: s.wave,
                            url: url.normalized.clone(),
                            owner: uni.id.clone(),
                            reason: reason.clone(),
                        });
                    }
                }
                total
            })
            .collect();
        general.insert(uni.id.clone(), series);
    }
    missing.sort_by(|a, b| (a.wave, &a.url).cmp(&(b.wave, &b.url)));
    Ok(SystemSeries {
        waves,
        units,
        general,
        missing,
    })
}

/// Per-wave sums over member series. No members gives zero totals; members
/// that are all unmeasured at a wave leave that wave unmeasured.
pub fn sum_series<'a>(members: impl IntoIterator<Item = &'a Series>, n_waves: usize) -> Series {
    let members: Vec<&Series> = members.into_iter().collect();
    if members.is_empty() {
        return vec![Some(Measure::default()); n_waves];
    }
    (0..n_waves)
        .map(|w| {
            let mut total: Option<Measure> = None;
            for m in members.iter().filter_map(|s| s[w]) {
                *total.get_or_insert_with(Measure::default) += m;
            }
            total
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub scope_kind: ScopeKind,
    pub scope_id: String,
    pub members: Vec<String>,
    pub indicators: EntityIndicators,
}

impl AggregateRecord {
    pub fn totals(&self) -> &Series {
        &self.indicators.series
    }
}

/// One scope kind's aggregates and their shared indicator table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub scope_kind: ScopeKind,
    pub records: BTreeMap<String, AggregateRecord>,
    pub table: IndicatorTable,
}

fn build(
    scope_kind: ScopeKind,
    groups: BTreeMap<String, (Vec<String>, Series)>,
    waves: &[Wave],
    options: &IndicatorOptions,
) -> Result<Aggregation, AggregationError> {
    let series: BTreeMap<String, Series> = groups
        .iter()
        .map(|(k, (_, s))| (k.clone(), s.clone()))
        .collect();
    let table = indicator_table(&series, waves, options)?;
    let records = groups
        .into_iter()
        .map(|(id, (members, _))| {
            let record = AggregateRecord {
                scope_kind,
                scope_id: id.clone(),
                members,
                indicators: table.rows[&id].clone(),
            };
            (id, record)
        })
        .collect();
    Ok(Aggregation {
        scope_kind,
        records,
        table,
    })
}

/// uni_1: each university's general URLs summed; shares over all general URLs.
pub fn aggregate_general(
    registry: &Registry,
    system: &SystemSeries,
    options: &IndicatorOptions,
) -> Result<Aggregation, AggregationError> {
    let groups = registry
        .universities()
        .values()
        .map(|u| {
            let members = u.general_urls().map(|w| w.normalized.clone()).collect();
            (u.id.clone(), (members, system.general[&u.id].clone()))
        })
        .collect();
    build(ScopeKind::UniGeneral, groups, &system.waves, options)
}

/// All units of each taxonomy type summed, every type included.
pub fn aggregate_by_type(
    registry: &Registry,
    system: &SystemSeries,
    options: &IndicatorOptions,
) -> Result<Aggregation, AggregationError> {
    let mut members: BTreeMap<&'static str, Vec<String>> = UnitType::all()
        .iter()
        .map(|t| (t.code(), Vec::new()))
        .collect();
    for unit in registry.active_units() {
        members
            .get_mut(unit.unit_type.code())
            .ok_or_else(|| AggregationError::UnknownType(unit.unit_type.code().to_string()))?
            .push(unit.id.clone());
    }
    let n = system.waves.len();
    let groups = members
        .into_iter()
        .map(|(code, ids)| {
            let series = sum_series(ids.iter().map(|id| &system.units[id]), n);
            (code.to_string(), (ids, series))
        })
        .collect();
    build(ScopeKind::UnitType, groups, &system.waves, options)
}

/// uni_2: all units of each university summed; unit-less universities keep
/// zero totals.
pub fn aggregate_internal(
    registry: &Registry,
    system: &SystemSeries,
    options: &IndicatorOptions,
) -> Result<Aggregation, AggregationError> {
    let mut members: BTreeMap<String, Vec<String>> = registry
        .universities()
        .keys()
        .map(|k| (k.clone(), Vec::new()))
        .collect();
    for unit in registry.active_units() {
        members
            .entry(unit.university_id.clone())
            .or_default()
            .push(unit.id.clone());
    }
    let n = system.waves.len();
    let groups = members
        .into_iter()
        .map(|(uni, ids)| {
            let series = sum_series(ids.iter().map(|id| &system.units[id]), n);
            (uni, (ids, series))
        })
        .collect();
    build(ScopeKind::UniInternal, groups, &system.waves, options)
}

/// Unit-level indicators with shares inside each unit's university and type.
pub fn unit_indicators(
    registry: &Registry,
    system: &SystemSeries,
    internal: &Aggregation,
    types: &Aggregation,
    options: &IndicatorOptions,
) -> Result<IndicatorTable, AggregationError> {
    let mut table = indicator_table(&system.units, &system.waves, options)?;
    for (id, row) in table.rows.iter_mut() {
        let unit = registry
            .unit(id)
            .expect("unit series come from the registry");
        for metric in Metric::BOTH {
            let values = row.values(metric);
            let scope_totals = |record: &AggregateRecord| -> Vec<u64> {
                record
                    .totals()
                    .iter()
                    .map(|m| m.map_or(0, |m| m.get(metric)))
                    .collect()
            };
            let uni_totals = scope_totals(&internal.records[&unit.university_id]);
            let type_totals = scope_totals(&types.records[unit.unit_type.code()]);
            let m = row.metric_mut(metric);
            m.share_uni = scoped_share(&values, &uni_totals);
            m.share_type = scoped_share(&values, &type_totals);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyFlag {
    /// Internal exceeds general.
    Inconsistent,
    /// General is zero while internal is not.
    UndefinedRatio,
}

impl ConsistencyFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsistencyFlag::Inconsistent => "inconsistent",
            ConsistencyFlag::UndefinedRatio => "undefined_ratio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub ratio_percent: Option<f64>,
    pub flag: Option<ConsistencyFlag>,
}

/// `100 * internal / general`, flagged above 100.
pub fn internal_general_ratio(internal: f64, general: f64) -> RatioCheck {
    if general <= 0.0 {
        return RatioCheck {
            ratio_percent: None,
            flag: (internal > 0.0).then_some(ConsistencyFlag::UndefinedRatio),
        };
    }
    let ratio = 100.0 * internal / general;
    RatioCheck {
        ratio_percent: Some(ratio),
        flag: (ratio > 100.0).then_some(ConsistencyFlag::Inconsistent),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub university_id: String,
    /// Per metric, over the waves where both scopes were measured.
    pub accumulated: BTreeMap<Metric, RatioCheck>,
    /// Per wave position and metric; `None` where either side is unmeasured.
    pub per_wave: Vec<BTreeMap<Metric, Option<RatioCheck>>>,
}

impl ConsistencyReport {
    pub fn flags(&self) -> BTreeSet<ConsistencyFlag> {
        self.accumulated
            .values()
            .chain(self.per_wave.iter().flat_map(|w| w.values().flatten()))
            .filter_map(|c| c.flag)
            .collect()
    }
}

pub fn internal_vs_general(
    internal: &AggregateRecord,
    general: &AggregateRecord,
) -> ConsistencyReport {
    let mut sums: BTreeMap<Metric, (u64, u64)> = BTreeMap::new();
    let per_wave = internal
        .totals()
        .iter()
        .zip(general.totals())
        .map(|(i, g)| {
            Metric::BOTH
                .iter()
                .map(|&metric| {
                    let check = match (i, g) {
                        (Some(i), Some(g)) => {
                            let s = sums.entry(metric).or_default();
                            s.0 += i.get(metric);
                            s.1 += g.get(metric);
                            Some(internal_general_ratio(
                                i.get(metric) as f64,
                                g.get(metric) as f64,
                            ))
                        }
                        _ => None,
                    };
                    (metric, check)
                })
                .collect()
        })
        .collect();
    let accumulated = Metric::BOTH
        .iter()
        .map(|&m| {
            let (i, g) = sums.get(&m).copied().unwrap_or_default();
            (m, internal_general_ratio(i as f64, g as f64))
        })
        .collect();
    ConsistencyReport {
        university_id: internal.scope_id.clone(),
        accumulated,
        per_wave,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{waves_from_labels, SnapshotRecord};
    use crate::registry::RegistryRow;
    use proptest::prelude::*;

    fn row(uni: &str, unit: &str, ty: &str, url: &str) -> RegistryRow {
        RegistryRow {
            university_id: uni.into(),
            unit_id: unit.into(),
            unit_type: ty.into(),
            url: url.into(),
            url_role: if unit.is_empty() { "official" } else { "unit" }.into(),
            ..Default::default()
        }
    }

    fn registry() -> Registry {
        let rows = vec![
            row("a", "", "", "a.es"),
            row("b", "", "", "b.es"),
            row("c", "", "", "c.es"),
            row("a", "a-lib", "library", "lib.a.es"),
            row("a", "a-dep", "department", "a.es/dep"),
            row("a", "a-dep", "department", "dep.a.es"),
            row("b", "b-lib", "library", "lib.b.es"),
        ];
        Registry::from_rows(None, rows.into_iter().enumerate().collect()).unwrap()
    }

    fn snapshot(wave: Wave, data: &[(&str, u64, u64)]) -> Snapshot {
        let mut s = Snapshot::new(wave);
        for (url, p, v) in data {
            s.records.insert(
                format!("http://{url}"),
                SnapshotRecord {
                    page_count: *p,
                    visibility: *v,
                    source: "t".into(),
                    queried_at: wave.label,
                    flags: vec![],
                },
            );
        }
        s
    }

    fn fixture() -> (Registry, Vec<Snapshot>) {
        let w = waves_from_labels(&["2010-03", "2010-06"]).unwrap();
        let s1 = snapshot(
            w[0],
            &[
                ("a.es", 1000, 90),
                ("b.es", 500, 10),
                ("c.es", 0, 0),
                ("lib.a.es", 10, 1),
                ("a.es/dep", 20, 2),
                ("dep.a.es", 5, 0),
                ("lib.b.es", 40, 4),
            ],
        );
        let s2 = snapshot(
            w[1],
            &[
                ("a.es", 800, 90),
                ("b.es", 500, 10),
                ("c.es", 100, 0),
                ("lib.a.es", 10, 1),
                ("a.es/dep", 30, 2),
                ("dep.a.es", 0, 0),
                ("lib.b.es", 700, 4),
            ],
        );
        (registry(), vec![s1, s2])
    }

    #[test]
    fn sums_follow_scopes() {
        let (reg, snaps) = fixture();
        let sys = collect_series(&reg, &snaps, &AggregationOptions::default()).unwrap();
        assert_eq!(
            sys.units["a-dep"][0],
            Some(Measure {
                size: 25,
                visibility: 2
            })
        );
        let opts = IndicatorOptions::default();
        let general = aggregate_general(&reg, &sys, &opts).unwrap();
        assert_eq!(general.records["a"].totals()[0].unwrap().size, 1000);
        let internal = aggregate_internal(&reg, &sys, &opts).unwrap();
        assert_eq!(internal.records["a"].totals()[0].unwrap().size, 35);
        assert_eq!(internal.records["c"].totals()[0], Some(Measure::default()));
        let types = aggregate_by_type(&reg, &sys, &opts).unwrap();
        assert_eq!(types.records.len(), 23);
        assert_eq!(types.records["library"].totals()[1].unwrap().size, 710);
        assert!(types.table.rows["otri"]
            .series
            .iter()
            .all(|m| *m == Some(Measure::default())));

        let dedupe = collect_series(
            &reg,
            &snaps,
            &AggregationOptions {
                dedupe_unit_urls: true,
            },
        )
        .unwrap();
        assert_eq!(
            dedupe.units["a-dep"][0],
            Some(Measure {
                size: 20,
                visibility: 2
            })
        );
    }

    #[test]
    fn conservation_holds() {
        let (reg, snaps) = fixture();
        let sys = collect_series(&reg, &snaps, &AggregationOptions::default()).unwrap();
        let opts = IndicatorOptions::default();
        let internal = aggregate_internal(&reg, &sys, &opts).unwrap();
        let types = aggregate_by_type(&reg, &sys, &opts).unwrap();
        for w in 0..2 {
            let units: u64 = sys
                .units
                .values()
                .filter_map(|s| s[w])
                .map(|m| m.size)
                .sum();
            assert_eq!(internal.table.totals[w].size, units);
            assert_eq!(types.table.totals[w].size, units);
        }
    }

    #[test]
    fn scoped_shares_for_units() {
        let (reg, snaps) = fixture();
        let sys = collect_series(&reg, &snaps, &AggregationOptions::default()).unwrap();
        let opts = IndicatorOptions::default();
        let internal = aggregate_internal(&reg, &sys, &opts).unwrap();
        let types = aggregate_by_type(&reg, &sys, &opts).unwrap();
        let units = unit_indicators(&reg, &sys, &internal, &types, &opts).unwrap();
        assert_eq!(units.rows["b-lib"].size.share_uni, Some(100.0));
        let expected = (100.0 * 10.0 / 35.0 + 100.0 * 10.0 / 40.0) / 2.0;
        assert!((units.rows["a-lib"].size.share_uni.unwrap() - expected).abs() < 1e-12);
        let expected_type = (100.0 * 10.0 / 50.0 + 100.0 * 10.0 / 710.0) / 2.0;
        assert!((units.rows["a-lib"].size.share_type.unwrap() - expected_type).abs() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        let size = internal_general_ratio(10_638_205.0, 20_794_776.0);
        assert!((size.ratio_percent.unwrap() - 51.16).abs() < 0.01);
        assert_eq!(size.flag, None);
        let vis = internal_general_ratio(2_322_631.0, 10_437_067.0);
        assert!((vis.ratio_percent.unwrap() - 22.25).abs() < 0.01);
        let over = internal_general_ratio(1826.0, 1000.0);
        assert!((over.ratio_percent.unwrap() - 182.6).abs() < 1e-9);
        assert_eq!(over.flag, Some(ConsistencyFlag::Inconsistent));
        assert_eq!(internal_general_ratio(100.0, 100.0).flag, None);
        assert_eq!(
            internal_general_ratio(5.0, 0.0).flag,
            Some(ConsistencyFlag::UndefinedRatio)
        );
        assert_eq!(
            internal_general_ratio(0.0, 0.0),
            RatioCheck {
                ratio_percent: None,
                flag: None
            }
        );
    }

    #[test]
    fn consistency_report_accumulates() {
        let (reg, snaps) = fixture();
        let sys = collect_series(&reg, &snaps, &AggregationOptions::default()).unwrap();
        let opts = IndicatorOptions::default();
        let internal = aggregate_internal(&reg, &sys, &opts).unwrap();
        let general = aggregate_general(&reg, &sys, &opts).unwrap();
        let b = internal_vs_general(&internal.records["b"], &general.records["b"]);
        assert!((b.accumulated[&Metric::Size].ratio_percent.unwrap() - 74.0).abs() < 1e-12);
        assert_eq!(
            b.per_wave[1][&Metric::Size].unwrap().flag,
            Some(ConsistencyFlag::Inconsistent)
        );
        assert!(b.flags().contains(&ConsistencyFlag::Inconsistent));
    }

    #[test]
    fn foreign_snapshot_urls_and_hashes_are_rejected() {
        let (reg, mut snaps) = fixture();
        let rec = snaps[0].records["http://a.es"].clone();
        snaps[0].records.insert("http://elsewhere.org".into(), rec);
        assert!(matches!(
            collect_series(&reg, &snaps, &AggregationOptions::default()),
            Err(AggregationError::UnknownUrl { .. })
        ));
        let (reg, mut snaps) = fixture();
        snaps[1].registry_hash = Some("deadbeef".into());
        let err = collect_series(&reg, &snaps, &AggregationOptions::default()).unwrap_err();
        assert!(err.to_string().contains("deadbeef") && err.to_string().contains(reg.hash()));
    }

    proptest! {
        #[test]
        fn aggregation_ignores_member_order(values in prop::collection::vec(prop::option::of((0u64..1000, 0u64..1000)), 1..12)) {
            let series: Vec<Series> = values.iter().map(|v| vec![v.map(|(s, vis)| Measure { size: s, visibility: vis })]).collect();
            let forward = sum_series(series.iter(), 1);
            let backward = sum_series(series.iter().rev(), 1);
            prop_assert_eq!(forward, backward);
        }

        #[test]
        fn adding_a_unit_never_shrinks_its_university(extra in 1u64..10_000) {
            let base = vec![Some(Measure { size: 10, visibility: 1 })];
            let added = vec![Some(Measure { size: extra, visibility: 0 })];
            let before = sum_series([&base], 1)[0].unwrap();
            let after = sum_series([&base, &added], 1)[0].unwrap();
            prop_assert!(after.size >= before.size);
        }
    }
}
