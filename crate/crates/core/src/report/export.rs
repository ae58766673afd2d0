//! CSV export bundle.
//!
//! Every file starts with one `#` comment line carrying the run hash,
//! followed by plain comma-separated rows with `\n` line endings. Undefined
//! values are written as `NA`. Shares, R factors, growth rates and ratios
//! use 2 decimals; WIF and ranking values 4; correlations and PCA 6.

use std::collections::BTreeSet;
use std::path::Path;

use super::{metric_key, Report, ReportError, RunManifest, RANK_SCOPES};
use crate::aggregation::{internal_general_ratio, Aggregation, RatioCheck};
use crate::indicators::{Measure, Metric};

pub fn fmt_num(value: Option<f64>, decimals: usize) -> String {
    match value {
        None => "NA".to_string(),
        Some(v) => {
            let s = format!("{v:.decimals$}");
            match s.strip_prefix('-') {
                Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
                _ => s,
            }
        }
    }
}

fn fmt_count(value: Option<u64>) -> String {
    value.map_or("NA".to_string(), |v| v.to_string())
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header_line: &str, columns: &[String]) -> Result<Csv, ReportError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(header_line.as_bytes());
        buf.push(b'\n');
        let mut writer = csv::WriterBuilder::new().from_writer(buf);
        writer.write_record(columns)?;
        Ok(Csv { writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), ReportError> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(self) -> Result<Vec<u8>, ReportError> {
        self.writer.into_inner().map_err(|e| ReportError::Io {
            path: "<buffer>".into(),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn labels(report: &Report) -> Vec<String> {
    report.waves.iter().map(|w| w.label.to_string()).collect()
}

fn indicators_units(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let labels = labels(report);
    let mut columns = cols(&["entity_id", "metric"]);
    columns.extend(labels.iter().map(|l| format!("share_{l}")));
    columns.push("R".into());
    columns.extend(labels.iter().map(|l| format!("wif_{l}")));
    columns.extend(cols(&["wif_mean", "r_percent", "share_uni", "share_type"]));
    let mut out = Csv::new(header, &columns)?;
    for (id, row) in &report.units.rows {
        for metric in Metric::BOTH {
            let m = row.metric(metric);
            let mut fields = vec![id.clone(), metric.as_str().to_string()];
            fields.extend(m.monthly_share.iter().map(|s| fmt_num(*s, 2)));
            fields.push(fmt_num(m.r, 2));
            fields.extend(row.wif.iter().map(|w| fmt_num(*w, 4)));
            fields.push(fmt_num(row.wif_mean, 4));
            fields.push(fmt_num(m.r_percent, 2));
            fields.push(fmt_num(m.share_uni, 2));
            fields.push(fmt_num(m.share_type, 2));
            out.row(&fields)?;
        }
    }
    out.finish()
}

fn flag_list(flags: impl IntoIterator<Item = String>) -> String {
    flags
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect::<Vec<_>>()
        .join(";")
}

fn aggregates(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let labels = labels(report);
    let mut columns = cols(&["scope_kind", "scope_id"]);
    columns.extend(labels.iter().map(|l| format!("size_{l}")));
    columns.extend(labels.iter().map(|l| format!("visibility_{l}")));
    columns.extend(cols(&[
        "R_s",
        "R_v",
        "wif_mean",
        "r_size",
        "r_visibility",
        "ratio_size",
        "ratio_visibility",
        "flags",
    ]));
    let mut out = Csv::new(header, &columns)?;
    let scopes: [&Aggregation; 3] = [&report.general, &report.types, &report.internal];
    for agg in scopes {
        for (id, rec) in &agg.records {
            let ind = &rec.indicators;
            let mut fields = vec![agg.scope_kind.as_str().to_string(), id.clone()];
            fields.extend(ind.series.iter().map(|m| fmt_count(m.map(|m| m.size))));
            fields.extend(
                ind.series
                    .iter()
                    .map(|m| fmt_count(m.map(|m| m.visibility))),
            );
            fields.push(fmt_num(ind.size.r, 2));
            fields.push(fmt_num(ind.visibility.r, 2));
            fields.push(fmt_num(ind.wif_mean, 4));
            fields.push(fmt_num(ind.size.r_percent, 2));
            fields.push(fmt_num(ind.visibility.r_percent, 2));
            let mut flags = Vec::new();
            if rec.members.is_empty() && agg.scope_kind != crate::aggregation::ScopeKind::UniGeneral
            {
                flags.push("no_members".to_string());
            }
            let consistency = report.consistency.iter().find(|c| c.university_id == *id);
            match (agg.scope_kind, consistency) {
                (crate::aggregation::ScopeKind::UniInternal, Some(c)) => {
                    for metric in Metric::BOTH {
                        let check = c.accumulated[&metric];
                        fields.push(fmt_num(check.ratio_percent, 2));
                        flags.extend(check.flag.map(|f| f.as_str().to_string()));
                    }
                }
                _ => fields.extend(["NA".to_string(), "NA".to_string()]),
            }
            fields.push(flag_list(flags));
            out.row(&fields)?;
        }
    }
    out.finish()
}

fn consistency_fields(scope: &str, wave: &str, pair: Option<(Measure, Measure)>) -> Vec<String> {
    let mut fields = vec![scope.to_string(), wave.to_string()];
    let mut flags = Vec::new();
    for metric in Metric::BOTH {
        match pair {
            Some((i, g)) => {
                let RatioCheck {
                    ratio_percent,
                    flag,
                } = internal_general_ratio(i.get(metric) as f64, g.get(metric) as f64);
                fields.push(i.get(metric).to_string());
                fields.push(g.get(metric).to_string());
                fields.push(fmt_num(ratio_percent, 2));
                flags.extend(flag.map(|f| format!("{}:{}", metric.as_str(), f.as_str())));
            }
            None => fields.extend(["NA", "NA", "NA"].map(String::from)),
        }
    }
    fields.push(flag_list(flags));
    fields
}

fn consistency(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let columns = cols(&[
        "scope",
        "wave",
        "internal_size",
        "general_size",
        "ratio_size",
        "internal_visibility",
        "general_visibility",
        "ratio_visibility",
        "flags",
    ]);
    let mut out = Csv::new(header, &columns)?;
    let labels = labels(report);
    let n = labels.len();
    let mut system: Vec<Option<(Measure, Measure)>> = vec![None; n];
    for (id, int_rec) in &report.internal.records {
        let gen_rec = &report.general.records[id];
        let mut acc: Option<(Measure, Measure)> = None;
        for w in 0..n {
            let pair = int_rec.totals()[w].zip(gen_rec.totals()[w]);
            if let Some((i, g)) = pair {
                let a = acc.get_or_insert_with(Default::default);
                a.0 += i;
                a.1 += g;
                let s = system[w].get_or_insert_with(Default::default);
                s.0 += i;
                s.1 += g;
            }
            out.row(&consistency_fields(id, &labels[w], pair))?;
        }
        out.row(&consistency_fields(id, "all", acc))?;
    }
    let mut acc: Option<(Measure, Measure)> = None;
    for w in 0..n {
        if let Some((i, g)) = system[w] {
            let a = acc.get_or_insert_with(Default::default);
            a.0 += i;
            a.1 += g;
        }
        out.row(&consistency_fields("system", &labels[w], system[w]))?;
    }
    out.row(&consistency_fields("system", "all", acc))?;
    out.finish()
}

fn ranking(report: &Report, key: &str, header: &str) -> Result<Vec<u8>, ReportError> {
    let mut out = Csv::new(header, &cols(&["position", "entity", "value"]))?;
    for e in &report.rankings[key].entries {
        out.row(&[
            e.position.to_string(),
            e.entity_id.clone(),
            fmt_num(Some(e.value), 4),
        ])?;
    }
    out.finish()
}

fn topn(report: &Report, key: &str, header: &str) -> Result<Vec<u8>, ReportError> {
    let dist = &report.topn[key];
    let mut columns = cols(&["group", "items"]);
    columns.extend(dist.thresholds.iter().map(|t| format!("top{t}")));
    columns.extend(dist.thresholds.iter().map(|t| format!("pct_top{t}")));
    let mut out = Csv::new(header, &columns)?;
    for (group, g) in &dist.groups {
        let mut fields = vec![group.clone(), g.items.to_string()];
        fields.extend(g.counts.iter().map(|c| c.to_string()));
        fields.extend(g.percentages.iter().map(|p| fmt_num(*p, 2)));
        out.row(&fields)?;
    }
    out.finish()
}

fn rank_shift(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let mut out = Csv::new(header, &cols(&["comparison", "n", "mean_shift"]))?;
    for r in &report.rank_shift {
        out.row(&[
            r.comparison.clone(),
            r.n.to_string(),
            fmt_num(Some(r.mean_shift), 4),
        ])?;
    }
    out.finish()
}

fn correlations(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let mut out = Csv::new(header, &cols(&["level", "x", "y", "n", "rho"]))?;
    for c in &report.correlations {
        out.row(&[
            c.level.clone(),
            c.x.clone(),
            c.y.clone(),
            c.n.to_string(),
            fmt_num(c.rho, 6),
        ])?;
    }
    out.finish()
}

fn pca_files(report: &Report, header: &str) -> Result<Vec<(String, Vec<u8>)>, ReportError> {
    let mut files = Vec::new();
    for p in &report.pca {
        let mut comps = Csv::new(
            header,
            &cols(&[
                "mode",
                "component",
                "loading_size",
                "loading_visibility",
                "eigenvalue",
                "explained_variance",
            ]),
        )?;
        let mut scores = Csv::new(header, &cols(&["entity", "pc1", "pc2"]))?;
        if let Some(r) = &p.result {
            for k in 0..2 {
                comps.row(&[
                    r.mode.as_str().to_string(),
                    format!("pc{}", k + 1),
                    fmt_num(Some(r.components[k][0]), 6),
                    fmt_num(Some(r.components[k][1]), 6),
                    fmt_num(Some(r.eigenvalues[k]), 6),
                    fmt_num(Some(r.explained_variance[k]), 4),
                ])?;
            }
            for (entity, s) in p.entities.iter().zip(&r.scores) {
                scores.row(&[
                    entity.clone(),
                    fmt_num(Some(s[0]), 6),
                    fmt_num(Some(s[1]), 6),
                ])?;
            }
        }
        files.push((format!("pca_{}_components.csv", p.scope), comps.finish()?));
        files.push((format!("pca_{}_scores.csv", p.scope), scores.finish()?));
    }
    Ok(files)
}

fn flags(report: &Report, header: &str) -> Result<Vec<u8>, ReportError> {
    let mut out = Csv::new(
        header,
        &cols(&["kind", "scope", "entity", "wave", "metric", "detail"]),
    )?;
    for f in &report.flags {
        out.row(&[
            f.kind.clone(),
            f.scope.clone(),
            f.entity.clone(),
            f.wave.clone(),
            f.metric.clone(),
            f.detail.clone(),
        ])?;
    }
    out.finish()
}

/// Names of every CSV file in the bundle, in write order.
pub fn export_file_names(report: &Report) -> Vec<String> {
    let mut names = vec![
        "indicators_units.csv".to_string(),
        "aggregates.csv".to_string(),
        "consistency.csv".to_string(),
    ];
    for scope in RANK_SCOPES {
        for m in Metric::BOTH {
            names.push(format!("ranking_{scope}_{}.csv", metric_key(m)));
        }
    }
    for group in ["type", "university"] {
        for m in Metric::BOTH {
            names.push(format!("topn_{group}_{}.csv", metric_key(m)));
        }
    }
    names.extend(["rank_shift.csv".to_string(), "correlations.csv".to_string()]);
    for p in &report.pca {
        names.push(format!("pca_{}_components.csv", p.scope));
        names.push(format!("pca_{}_scores.csv", p.scope));
    }
    names.push("flags.csv".to_string());
    names
}

/// Renders every export in memory, keyed by file name.
pub fn render_report(
    report: &Report,
    manifest: &RunManifest,
) -> Result<Vec<(String, Vec<u8>)>, ReportError> {
    let header = manifest.header_line();
    let h = header.as_str();
    let mut files = vec![
        (
            "indicators_units.csv".to_string(),
            indicators_units(report, h)?,
        ),
        ("aggregates.csv".to_string(), aggregates(report, h)?),
        ("consistency.csv".to_string(), consistency(report, h)?),
    ];
    for scope in RANK_SCOPES {
        for m in Metric::BOTH {
            let key = format!("{scope}_{}", metric_key(m));
            files.push((format!("ranking_{key}.csv"), ranking(report, &key, h)?));
        }
    }
    for group in ["type", "university"] {
        for m in Metric::BOTH {
            let key = format!("{group}_{}", metric_key(m));
            files.push((format!("topn_{key}.csv"), topn(report, &key, h)?));
        }
    }
    files.push(("rank_shift.csv".to_string(), rank_shift(report, h)?));
    files.push(("correlations.csv".to_string(), correlations(report, h)?));
    files.extend(pca_files(report, h)?);
    files.push(("flags.csv".to_string(), flags(report, h)?));
    let mut json = serde_json::to_vec_pretty(&report.units)?;
    json.push(b'\n');
    files.push(("indicators_units.json".to_string(), json));
    Ok(files)
}

/// The manifest describing a report over `report`'s inputs.
pub fn report_manifest(
    report: &Report,
    registry_version: Option<&str>,
) -> Result<RunManifest, ReportError> {
    Ok(RunManifest::new(
        "report",
        &report.registry_hash,
        registry_version,
        report.sources.clone(),
        labels(report),
        serde_json::to_value(&report.options)?,
    ))
}

/// Writes the bundle and `manifest.json` into `out_dir`.
pub fn write_report(
    report: &Report,
    registry_version: Option<&str>,
    out_dir: &Path,
) -> Result<RunManifest, ReportError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut manifest = report_manifest(report, registry_version)?;
    for (name, bytes) in render_report(report, &manifest)? {
        let path = out_dir.join(&name);
        std::fs::write(&path, &bytes).map_err(io(&path))?;
        manifest.record_file(&name, &bytes);
    }
    manifest.write(out_dir).map_err(io(out_dir))?;
    Ok(manifest)
}
