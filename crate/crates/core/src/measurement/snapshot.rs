//! Snapshot files: CSV (`wave_label,url,page_count,visibility,source,flags`)
//! and a JSON mirror of [`Snapshot`].
//!
//! CSV files may start with a comment line of the form
//! `# uniweb snapshot wave=<index> label=<YYYY-MM> registry=<hash>`. Unmeasured
//! URLs are written with empty counts and a `missing:<reason>` flag.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{validate_waves, RecordFlag, Snapshot, SnapshotRecord, Wave, YearMonth};

pub const SNAPSHOT_CSV_HEADER: [&str; 6] = [
    "wave_label",
    "url",
    "page_count",
    "visibility",
    "source",
    "flags",
];

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("wave {0} appears in more than one snapshot file")]
    DuplicateWave(String),
    #[error("{0}")]
    Waves(#[from] super::WaveError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("snapshot JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Csv,
    Json,
}

impl SnapshotFormat {
    pub fn from_path(path: &Path) -> Option<SnapshotFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(SnapshotFormat::Csv),
            "json" => Some(SnapshotFormat::Json),
            _ => None,
        }
    }
}

fn sanitize_reason(reason: &str) -> String {
    reason
        .chars()
        .map(|c| {
            if c == ';' || c == '\n' || c == '\r' {
                ','
            } else {
                c
            }
        })
        .collect()
}

/// Writes one snapshot as CSV, with the identifying comment line.
pub fn write_snapshot_csv<W: Write>(
    snapshot: &Snapshot,
    mut writer: W,
) -> Result<(), SnapshotError> {
    let mut comment = format!(
        "# uniweb snapshot wave={} label={}",
        snapshot.wave.index, snapshot.wave.label
    );
    if let Some(h) = &snapshot.registry_hash {
        comment.push_str(&format!(" registry={h}"));
    }
    writeln!(writer, "{comment}").map_err(|source| SnapshotError::Io {
        path: "<writer>".into(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SNAPSHOT_CSV_HEADER)?;
    let label = snapshot.wave.label.to_string();
    // Records and missing entries are interleaved in URL order.
    let mut rows: BTreeMap<&str, [String; 4]> = BTreeMap::new();
    for (url, r) in &snapshot.records {
        let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
        rows.insert(
            url,
            [
                r.page_count.to_string(),
                r.visibility.to_string(),
                r.source.clone(),
                flags.join(";"),
            ],
        );
    }
    for (url, reason) in &snapshot.missing {
        rows.insert(
            url,
            [
                String::new(),
                String::new(),
                String::new(),
                format!("missing:{}", sanitize_reason(reason)),
            ],
        );
    }
    for (url, [page, vis, source, flags]) in rows {
        w.write_record([label.as_str(), url, &page, &vis, &source, &flags])?;
    }
    w.flush().map_err(|source| SnapshotError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

#[derive(Default)]
struct Header {
    wave: Option<u32>,
    label: Option<YearMonth>,
    registry: Option<String>,
}

fn parse_header(text: &str) -> Header {
    let mut header = Header::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        let Some(rest) = body.strip_prefix("uniweb snapshot") else {
            continue;
        };
        for token in rest.split_whitespace() {
            match token.split_once('=') {
                Some(("wave", v)) => header.wave = v.parse().ok(),
                Some(("label", v)) => header.label = v.parse().ok(),
                Some(("registry", v)) => header.registry = Some(v.to_string()),
                _ => {}
            }
        }
    }
    header
}

/// Reads every wave contained in one CSV text. Wave indices come from the
/// header comment when the file holds a single labelled wave, otherwise they
/// are left at 0 for the caller to assign.
pub fn read_snapshots_csv<R: Read>(
    mut reader: R,
    origin: &str,
) -> Result<Vec<Snapshot>, SnapshotError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|source| SnapshotError::Io {
            path: origin.to_string(),
            source,
        })?;
    let header = parse_header(&text);
    let fmt_err = |line: usize, message: String| SnapshotError::Format {
        path: origin.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let cols = rdr.headers()?.clone();
    if cols.iter().collect::<Vec<_>>() != SNAPSHOT_CSV_HEADER {
        return Err(fmt_err(
            1,
            format!("expected header {}", SNAPSHOT_CSV_HEADER.join(",")),
        ));
    }
    let mut by_label: BTreeMap<YearMonth, Snapshot> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let label: YearMonth = record[0].parse().map_err(|m| fmt_err(line, m))?;
        let url = record[1].to_string();
        let snap = by_label.entry(label).or_insert_with(|| {
            let mut s = Snapshot::new(Wave { index: 0, label });
            s.registry_hash = header.registry.clone();
            s
        });
        let flags_field = &record[5];
        if let Some(reason) = flags_field.strip_prefix("missing:") {
            snap.missing.insert(url, reason.to_string());
            continue;
        }
        let count = |i: usize, name: &str| -> Result<u64, SnapshotError> {
            record[i].parse::<u64>().map_err(|_| {
                fmt_err(
                    line,
                    format!("{name} `{}` is not a non-negative integer", &record[i]),
                )
            })
        };
        let mut flags = Vec::new();
        for token in flags_field.split(';').filter(|t| !t.is_empty()) {
            flags.push(token.parse::<RecordFlag>().map_err(|m| fmt_err(line, m))?);
        }
        let rec = SnapshotRecord {
            page_count: count(2, "page_count")?,
            visibility: count(3, "visibility")?,
            source: record[4].to_string(),
            queried_at: label,
            flags,
        };
        if snap.records.insert(url.clone(), rec).is_some() {
            return Err(fmt_err(line, format!("duplicate record for `{url}`")));
        }
    }
    if let (true, Some(label)) = (by_label.is_empty(), header.label) {
        let mut s = Snapshot::new(Wave { index: 0, label });
        s.registry_hash = header.registry.clone();
        by_label.insert(label, s);
    }
    let mut out: Vec<Snapshot> = by_label.into_values().collect();
    if out.len() == 1 {
        if let (Some(index), true) = (
            header.wave,
            header.label.is_none_or(|l| l == out[0].wave.label),
        ) {
            out[0].wave.index = index;
        }
    }
    Ok(out)
}

pub fn write_snapshot_json<W: Write>(snapshot: &Snapshot, writer: W) -> Result<(), SnapshotError> {
    serde_json::to_writer_pretty(writer, snapshot)?;
    Ok(())
}

pub fn read_snapshot_json<R: Read>(reader: R) -> Result<Snapshot, SnapshotError> {
    Ok(serde_json::from_reader(reader)?)
}

fn snapshot_files(path: &Path) -> Result<Vec<PathBuf>, SnapshotError> {
    let io = |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    };
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && SnapshotFormat::from_path(p).is_some()
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("snapshot"))
            })
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Loads snapshots from files or directories (every `snapshot*.csv|json`
/// inside). Waves without an explicit index are numbered by label order.
pub fn read_snapshots<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Snapshot>, SnapshotError> {
    let mut all: BTreeMap<YearMonth, Snapshot> = BTreeMap::new();
    for p in paths {
        for file in snapshot_files(p.as_ref())? {
            let origin = file.display().to_string();
            let handle = fs::File::open(&file).map_err(|source| SnapshotError::Io {
                path: origin.clone(),
                source,
            })?;
            let snaps = match SnapshotFormat::from_path(&file) {
                Some(SnapshotFormat::Json) => vec![read_snapshot_json(handle)?],
                _ => read_snapshots_csv(handle, &origin)?,
            };
            for s in snaps {
                let label = s.wave.label;
                if all.insert(label, s).is_some() {
                    return Err(SnapshotError::DuplicateWave(label.to_string()));
                }
            }
        }
    }
    let mut out: Vec<Snapshot> = all.into_values().collect();
    if out.iter().any(|s| s.wave.index == 0) {
        for (i, s) in out.iter_mut().enumerate() {
            s.wave.index = i as u32 + 1;
        }
    }
    let waves: Vec<Wave> = out.iter().map(|s| s.wave).collect();
    validate_waves(&waves)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Snapshot {
        let label = YearMonth::new(2010, 6).unwrap();
        let mut s = Snapshot::new(Wave { index: 2, label });
        s.registry_hash = Some("abc123".into());
        s.records.insert(
            "http://biblioteca.upc.edu".into(),
            SnapshotRecord {
                page_count: 1234,
                visibility: 57,
                source: "replay".into(),
                queried_at: label,
                flags: vec![],
            },
        );
        s.records.insert(
            "http://upc.edu/old".into(),
            SnapshotRecord {
                page_count: 0,
                visibility: 0,
                source: "replay".into(),
                queried_at: label,
                flags: vec![RecordFlag::UnknownUrl],
            },
        );
        s.missing.insert(
            "http://otri.upc.edu".into(),
            "timeout; retries exhausted".into(),
        );
        s
    }

    #[test]
    fn csv_round_trip_keeps_header_metadata() {
        let s = sample();
        let mut buf = Vec::new();
        write_snapshot_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# uniweb snapshot wave=2 label=2010-06 registry=abc123\n"));
        let back = read_snapshots_csv(buf.as_slice(), "mem").unwrap();
        let mut expected = s.clone();
        expected.missing.insert(
            "http://otri.upc.edu".into(),
            "timeout, retries exhausted".into(),
        );
        assert_eq!(back, vec![expected]);
    }

    #[test]
    fn rejects_negative_counts() {
        let text =
            "wave_label,url,page_count,visibility,source,flags\n2010-03,http://a.es/x,-4,1,r,\n";
        let err = read_snapshots_csv(text.as_bytes(), "bad.csv").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn multi_wave_file_splits_by_label() {
        let text = "wave_label,url,page_count,visibility,source,flags\n\
                    2010-03,http://a.es/x,1,1,r,\n2010-06,http://a.es/x,2,1,r,\n";
        let snaps = read_snapshots_csv(text.as_bytes(), "m").unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[0].wave.index, 0);
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(
            index in 1u32..10,
            month in 1u8..=12,
            recs in prop::collection::btree_map("[a-z]{1,6}", (0u64..1_000_000, 0u64..100_000, prop::bool::ANY), 0..20),
            missing in prop::collection::btree_map("[0-9]{1,4}", "[a-z ]{0,12}", 0..3),
        ) {
            let label = YearMonth::new(2010, month).unwrap();
            let mut s = Snapshot::new(Wave { index, label });
            for (k, (p, v, f)) in recs {
                s.records.insert(format!("http://{k}.uni.es"), SnapshotRecord {
                    page_count: p, visibility: v, source: "synthetic".into(), queried_at: label,
                    flags: if f { vec![RecordFlag::UnknownUrl] } else { vec![] },
                });
            }
            for (k, reason) in missing {
                s.missing.insert(format!("http://uni.es/m{k}"), reason);
            }
            let mut buf = Vec::new();
            write_snapshot_csv(&s, &mut buf).unwrap();
            prop_assert_eq!(&read_snapshots_csv(buf.as_slice(), "p").unwrap()[0], &s);
            let mut json = Vec::new();
            write_snapshot_json(&s, &mut json).unwrap();
            prop_assert_eq!(read_snapshot_json(json.as_slice()).unwrap(), s);
        }
    }
}
