//! End-to-end report: indicators, aggregates, analysis and flag lists built
//! from one registry and its snapshots, plus the CSV export bundle.

pub mod export;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{
    aggregate_by_type, aggregate_general, aggregate_internal, collect_series, internal_vs_general,
    unit_indicators, Aggregation, AggregationError, AggregationOptions, ConsistencyReport,
    MissingRecord, SystemSeries,
};
use crate::analysis::{
    detect_temporal_anomalies, mean_rank_shift, pca_two_vars, rank_entities, spearman_rho,
    topn_distribution, AnalysisError, AnomalyRule, PcaMode, PcaResult, Ranking, TopNDistribution,
    DEFAULT_TOP_N,
};
use crate::indicators::{IndicatorOptions, IndicatorTable, Metric};
use crate::measurement::{RecordFlag, Snapshot, Wave};
use crate::registry::{Registry, UrlOwner};

pub use export::write_report;
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Aggregation(#[from] AggregationError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
    #[error("no snapshots to report on")]
    NoSnapshots,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub top_n: Vec<usize>,
    /// Entities left out of correlations and PCA.
    pub exclude: Vec<String>,
    pub pca_mode: PcaMode,
    pub period_months: u32,
    /// Size of the nonzero top subset in the unit-level correlation.
    pub top_k: usize,
    pub anomaly: AnomalyRule,
    pub wif_threshold: f64,
    pub dedupe_unit_urls: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            top_n: DEFAULT_TOP_N.to_vec(),
            exclude: Vec::new(),
            pca_mode: PcaMode::Correlation,
            period_months: 1,
            top_k: 1000,
            anomaly: AnomalyRule::default(),
            wif_threshold: 500.0,
            dedupe_unit_urls: false,
        }
    }
}

/// Ranking scopes, in export order.
pub const RANK_SCOPES: [&str; 4] = ["units", "types", "uni_internal", "uni_general"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub level: String,
    pub x: String,
    pub y: String,
    pub n: usize,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankShiftRow {
    pub comparison: String,
    pub n: usize,
    pub mean_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaExport {
    pub scope: String,
    pub entities: Vec<String>,
    /// `None` when the scope has too few or identical points.
    pub result: Option<PcaResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlagRow {
    pub kind: String,
    pub scope: String,
    pub entity: String,
    pub wave: String,
    pub metric: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub registry_hash: String,
    pub waves: Vec<Wave>,
    pub sources: Vec<String>,
    pub options: ReportOptions,
    pub system: SystemSeries,
    pub units: IndicatorTable,
    pub general: Aggregation,
    pub types: Aggregation,
    pub internal: Aggregation,
    /// Type codes with at least one active unit.
    pub populated_types: BTreeSet<String>,
    pub consistency: Vec<ConsistencyReport>,
    /// Keyed `<scope>_<rs|rv>`.
    pub rankings: BTreeMap<String, Ranking>,
    /// Keyed `<type|university>_<rs|rv>`.
    pub topn: BTreeMap<String, TopNDistribution>,
    pub rank_shift: Vec<RankShiftRow>,
    pub correlations: Vec<CorrelationRow>,
    pub pca: Vec<PcaExport>,
    pub flags: Vec<FlagRow>,
}

pub fn metric_key(metric: Metric) -> &'static str {
    match metric {
        Metric::Size => "rs",
        Metric::Visibility => "rv",
    }
}

/// Defined R values of one table for one metric.
pub fn r_values(table: &IndicatorTable, metric: Metric) -> BTreeMap<String, f64> {
    table
        .rows
        .iter()
        .filter_map(|(id, row)| row.metric(metric).r.map(|r| (id.clone(), r)))
        .collect()
}

fn restrict(values: &BTreeMap<String, f64>, keep: impl Fn(&str) -> bool) -> BTreeMap<String, f64> {
    values
        .iter()
        .filter(|(k, _)| keep(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

fn correlation(
    level: &str,
    x: &str,
    y: &str,
    xs: &BTreeMap<String, f64>,
    ys: &BTreeMap<String, f64>,
) -> CorrelationRow {
    let keys: BTreeSet<&String> = xs.keys().filter(|k| ys.contains_key(*k)).collect();
    let xs = restrict(xs, |k| keys.contains(&k.to_string()));
    let ys = restrict(ys, |k| keys.contains(&k.to_string()));
    let rho = if keys.len() >= 3 {
        spearman_rho(&xs, &ys).ok().flatten()
    } else {
        None
    };
    CorrelationRow {
        level: level.into(),
        x: x.into(),
        y: y.into(),
        n: keys.len(),
        rho,
    }
}

fn shift(
    comparison: &str,
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<RankShiftRow, AnalysisError> {
    let a2 = restrict(a, |k| b.contains_key(k));
    let b2 = restrict(b, |k| a.contains_key(k));
    let ra = rank_entities("a", &a2)?;
    let rb = rank_entities("b", &b2)?;
    Ok(RankShiftRow {
        comparison: comparison.into(),
        n: a2.len(),
        mean_shift: mean_rank_shift(&ra, &rb)?,
    })
}

fn wave_label(waves: &[Wave], w: usize) -> String {
    waves[w].label.to_string()
}

pub fn build_report(
    registry: &Registry,
    snapshots: &[Snapshot],
    options: &ReportOptions,
) -> Result<Report, ReportError> {
    if snapshots.is_empty() {
        return Err(ReportError::NoSnapshots);
    }
    let indicator_opts = IndicatorOptions {
        period_months: options.period_months,
    };
    let system = collect_series(
        registry,
        snapshots,
        &AggregationOptions {
            dedupe_unit_urls: options.dedupe_unit_urls,
        },
    )?;
    let waves = system.waves.clone();
    let general = aggregate_general(registry, &system, &indicator_opts)?;
    let types = aggregate_by_type(registry, &system, &indicator_opts)?;
    let internal = aggregate_internal(registry, &system, &indicator_opts)?;
    let units = unit_indicators(registry, &system, &internal, &types, &indicator_opts)?;
    let populated_types: BTreeSet<String> = types
        .records
        .values()
        .filter(|r| !r.members.is_empty())
        .map(|r| r.scope_id.clone())
        .collect();

    let consistency: Vec<ConsistencyReport> = internal
        .records
        .iter()
        .map(|(id, rec)| internal_vs_general(rec, &general.records[id]))
        .collect();

    let tables: [(&str, &IndicatorTable); 4] = [
        ("units", &units),
        ("types", &types.table),
        ("uni_internal", &internal.table),
        ("uni_general", &general.table),
    ];
    let mut rankings = BTreeMap::new();
    for (scope, table) in tables {
        for metric in Metric::BOTH {
            let key = format!("{scope}_{}", metric_key(metric));
            rankings.insert(key.clone(), rank_entities(&key, &r_values(table, metric))?);
        }
    }

    let mut by_type = BTreeMap::new();
    let mut by_uni = BTreeMap::new();
    let type_items: BTreeMap<String, usize> = types
        .records
        .iter()
        .map(|(k, r)| (k.clone(), r.members.len()))
        .collect();
    let uni_items: BTreeMap<String, usize> = internal
        .records
        .iter()
        .map(|(k, r)| (k.clone(), r.members.len()))
        .collect();
    for unit in registry.active_units() {
        by_type.insert(unit.id.clone(), unit.unit_type.code().to_string());
        by_uni.insert(unit.id.clone(), unit.university_id.clone());
    }
    let mut topn = BTreeMap::new();
    for metric in Metric::BOTH {
        let ranking = &rankings[&format!("units_{}", metric_key(metric))];
        topn.insert(
            format!("type_{}", metric_key(metric)),
            topn_distribution(ranking, &by_type, &type_items, &options.top_n)?,
        );
        topn.insert(
            format!("university_{}", metric_key(metric)),
            topn_distribution(ranking, &by_uni, &uni_items, &options.top_n)?,
        );
    }

    let rs = |t: &IndicatorTable| r_values(t, Metric::Size);
    let rv = |t: &IndicatorTable| r_values(t, Metric::Visibility);
    let rank_shift = vec![
        shift(
            "uni_internal_vs_uni_general_rs",
            &rs(&internal.table),
            &rs(&general.table),
        )?,
        shift(
            "uni_internal_vs_uni_general_rv",
            &rv(&internal.table),
            &rv(&general.table),
        )?,
        shift("units_rs_vs_rv", &rs(&units), &rv(&units))?,
        shift("types_rs_vs_rv", &rs(&types.table), &rv(&types.table))?,
        shift(
            "uni_internal_rs_vs_rv",
            &rs(&internal.table),
            &rv(&internal.table),
        )?,
        shift(
            "uni_general_rs_vs_rv",
            &rs(&general.table),
            &rv(&general.table),
        )?,
    ];

    let excluded: BTreeSet<&str> = options.exclude.iter().map(String::as_str).collect();
    let keep = |k: &str| !excluded.contains(k);
    let unit_rs = restrict(&rs(&units), keep);
    let unit_rv = restrict(&rv(&units), keep);
    let mut nonzero: Vec<(&String, f64)> = unit_rs
        .iter()
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| (k, *v))
        .collect();
    nonzero.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let top: BTreeSet<String> = nonzero
        .iter()
        .take(options.top_k)
        .map(|(k, _)| (*k).clone())
        .collect();
    let type_keep = |k: &str| keep(k) && populated_types.contains(k);
    let type_rs = restrict(&rs(&types.table), type_keep);
    let type_rv = restrict(&rv(&types.table), type_keep);
    let int_rs = restrict(&rs(&internal.table), keep);
    let int_rv = restrict(&rv(&internal.table), keep);
    let gen_rs = restrict(&rs(&general.table), keep);
    let gen_rv = restrict(&rv(&general.table), keep);
    let correlations = vec![
        correlation("unit", "R_s", "R_v", &unit_rs, &unit_rv),
        correlation(
            "unit_topk",
            "R_s",
            "R_v",
            &restrict(&unit_rs, |k| top.contains(k)),
            &restrict(&unit_rv, |k| top.contains(k)),
        ),
        correlation("type", "R_s", "R_v", &type_rs, &type_rv),
        correlation("uni_internal", "R_s", "R_v", &int_rs, &int_rv),
        correlation("uni_general", "R_s", "R_v", &gen_rs, &gen_rv),
        correlation(
            "uni_general_vs_internal",
            "R_s_general",
            "R_s_internal",
            &gen_rs,
            &int_rs,
        ),
        correlation(
            "uni_general_vs_internal",
            "R_v_general",
            "R_v_internal",
            &gen_rv,
            &int_rv,
        ),
    ];

    let pca = [
        ("types", &type_rs, &type_rv),
        ("uni_internal", &int_rs, &int_rv),
        ("uni_general", &gen_rs, &gen_rv),
    ]
    .into_iter()
    .map(|(scope, xs, ys)| {
        let entities: Vec<String> = xs.keys().filter(|k| ys.contains_key(*k)).cloned().collect();
        let points: Vec<(f64, f64)> = entities.iter().map(|e| (xs[e], ys[e])).collect();
        match pca_two_vars(&points, options.pca_mode) {
            Ok(result) => PcaExport {
                scope: scope.into(),
                entities,
                result: Some(result),
                note: None,
            },
            Err(e) => {
                log::warn!("PCA for {scope} skipped: {e}");
                PcaExport {
                    scope: scope.into(),
                    entities,
                    result: None,
                    note: Some(e.to_string()),
                }
            }
        }
    })
    .collect();

    let flags = collect_flags(
        registry,
        snapshots,
        &system,
        &units,
        [&types, &internal, &general],
        &consistency,
        options,
    );
    let sources: BTreeSet<String> = snapshots
        .iter()
        .flat_map(|s| s.records.values().map(|r| r.source.clone()))
        .collect();

    Ok(Report {
        registry_hash: registry.hash().to_string(),
        waves,
        sources: sources.into_iter().collect(),
        options: options.clone(),
        system,
        units,
        general,
        types,
        internal,
        populated_types,
        consistency,
        rankings,
        topn,
        rank_shift,
        correlations,
        pca,
        flags,
    })
}

fn collect_flags(
    registry: &Registry,
    snapshots: &[Snapshot],
    system: &SystemSeries,
    units: &IndicatorTable,
    aggregates: [&Aggregation; 3],
    consistency: &[ConsistencyReport],
    options: &ReportOptions,
) -> Vec<FlagRow> {
    let waves = &system.waves;
    let mut flags = Vec::new();
    let mut push =
        |kind: &str, scope: &str, entity: &str, wave: String, metric: &str, detail: String| {
            flags.push(FlagRow {
                kind: kind.into(),
                scope: scope.into(),
                entity: entity.into(),
                wave,
                metric: metric.into(),
                detail,
            })
        };

    let tables = [
        ("units", units),
        ("types", &aggregates[0].table),
        ("uni_internal", &aggregates[1].table),
        ("uni_general", &aggregates[2].table),
    ];
    for (scope, table) in tables {
        for &(w, metric) in &table.degenerate {
            push(
                "degenerate",
                scope,
                "*",
                wave_label(waves, w),
                metric.as_str(),
                "scope total is zero".into(),
            );
        }
        for (id, row) in &table.rows {
            for metric in Metric::BOTH {
                let series: Vec<Option<f64>> = row
                    .values(metric)
                    .iter()
                    .map(|v| v.map(|v| v as f64))
                    .collect();
                for f in detect_temporal_anomalies(&series, &options.anomaly) {
                    push(
                        "temporal",
                        scope,
                        id,
                        wave_label(waves, f.wave),
                        metric.as_str(),
                        format!(
                            "{} value={:.0} median_of_others={:.2}",
                            f.direction.as_str(),
                            f.value,
                            f.median_of_others
                        ),
                    );
                }
            }
        }
    }

    for (id, row) in &units.rows {
        for (w, wif) in row.wif.iter().enumerate() {
            if let Some(v) = wif {
                if *v > options.wif_threshold {
                    push(
                        "wif_screen",
                        "units",
                        id,
                        wave_label(waves, w),
                        "",
                        format!("wif={v:.4}"),
                    );
                }
            }
        }
    }

    for report in consistency {
        for (w, per) in report.per_wave.iter().enumerate() {
            for (metric, check) in per {
                if let Some(flag) = check.and_then(|c| c.flag) {
                    let detail = check
                        .and_then(|c| c.ratio_percent)
                        .map_or("ratio=NA".to_string(), |r| format!("ratio={r:.2}"));
                    push(
                        flag.as_str(),
                        "uni_internal",
                        &report.university_id,
                        wave_label(waves, w),
                        metric.as_str(),
                        detail,
                    );
                }
            }
        }
        for (metric, check) in &report.accumulated {
            if let Some(flag) = check.flag {
                let detail = check
                    .ratio_percent
                    .map_or("ratio=NA".to_string(), |r| format!("ratio={r:.2}"));
                push(
                    flag.as_str(),
                    "uni_internal",
                    &report.university_id,
                    "all".into(),
                    metric.as_str(),
                    detail,
                );
            }
        }
    }

    for MissingRecord {
        wave,
        url,
        owner,
        reason,
    } in &system.missing
    {
        push(
            "missing_record",
            "url",
            owner,
            wave.label.to_string(),
            "",
            format!("{url}: {reason}"),
        );
    }
    for s in snapshots {
        for (url, rec) in &s.records {
            if rec.flags.contains(&RecordFlag::UnknownUrl) {
                let owner = match registry.owner_of(url) {
                    Some(UrlOwner::General { university_id }) => university_id.clone(),
                    Some(UrlOwner::Unit { unit_id }) => unit_id.clone(),
                    None => String::new(),
                };
                push(
                    "unknown_url",
                    "url",
                    &owner,
                    s.wave.label.to_string(),
                    "",
                    url.clone(),
                );
            }
        }
    }
    flags.sort();
    flags
}
