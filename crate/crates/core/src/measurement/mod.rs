//! Measurement sources, sampling waves and per-wave snapshots.

pub mod campaign;
pub mod replay;
pub mod snapshot;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::WebUrl;

pub use campaign::{resume_campaign, run_campaign, CampaignError, CampaignPolicy, Checkpoint};
pub use replay::{MissingPolicy, ReplaySource};
pub use snapshot::{read_snapshots, read_snapshots_csv, write_snapshot_csv, SnapshotFormat};
pub use synthetic::{generate_synthetic_system, SyntheticConfig, SyntheticSource};

/// A calendar month, written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Option<YearMonth> {
        (1..=12)
            .contains(&month)
            .then_some(YearMonth { year, month })
    }

    /// Whole months from `self` to `later` (negative if `later` is earlier).
    pub fn months_until(self, later: YearMonth) -> i64 {
        (later.year as i64 - self.year as i64) * 12 + later.month as i64 - self.month as i64
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("wave label `{s}` is not YYYY-MM"))?;
        let year: i32 = y
            .parse()
            .map_err(|_| format!("wave label `{s}` has a bad year"))?;
        let month: u8 = m
            .parse()
            .map_err(|_| format!("wave label `{s}` has a bad month"))?;
        YearMonth::new(year, month)
            .ok_or_else(|| format!("wave label `{s}` has month outside 1..=12"))
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One dated measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wave {
    pub index: u32,
    pub label: YearMonth,
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (wave {})", self.label, self.index)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WaveError {
    #[error("{0}")]
    Label(String),
    #[error("waves out of order: {previous} is not before {next}")]
    OutOfOrder { previous: String, next: String },
    #[error("no waves given")]
    Empty,
}

/// Builds waves 1..=n from labels, which must be strictly increasing.
pub fn waves_from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Wave>, WaveError> {
    if labels.is_empty() {
        return Err(WaveError::Empty);
    }
    let mut waves: Vec<Wave> = Vec::with_capacity(labels.len());
    for (i, raw) in labels.iter().enumerate() {
        let label: YearMonth = raw.as_ref().parse().map_err(WaveError::Label)?;
        if let Some(prev) = waves.last() {
            if prev.label >= label {
                return Err(WaveError::OutOfOrder {
                    previous: prev.label.to_string(),
                    next: label.to_string(),
                });
            }
        }
        waves.push(Wave {
            index: i as u32 + 1,
            label,
        });
    }
    Ok(waves)
}

/// Checks that indices and labels both increase strictly.
pub fn validate_waves(waves: &[Wave]) -> Result<(), WaveError> {
    for pair in waves.windows(2) {
        if pair[0].index >= pair[1].index || pair[0].label >= pair[1].label {
            return Err(WaveError::OutOfOrder {
                previous: pair[0].to_string(),
                next: pair[1].to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub page_count: bool,
    pub visibility: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SourceError {
    /// Worth retrying.
    #[error("transient source failure: {0}")]
    Transient(String),
    /// The source cannot serve any further query.
    #[error("source unavailable: {0}")]
    Unavailable(String),
    #[error("URL `{0}` is unknown to the source")]
    UnknownUrl(String),
    /// The source knows the URL but holds no count for it, for the reason
    /// given (replayed missing records).
    #[error("{0}")]
    NotRecorded(String),
    #[error("source does not support {0} queries")]
    Unsupported(&'static str),
}

/// A count returned by a source. `unknown` marks a zero substituted for a
/// URL the source holds no data for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Count {
    pub value: u64,
    pub unknown: bool,
}

impl Count {
    pub fn known(value: u64) -> Count {
        Count {
            value,
            unknown: false,
        }
    }
}

/// Contract for anything that can report page counts and external-inlink
/// visibility for a URL at a given wave. Identical queries against the same
/// source state must return identical counts.
pub trait MeasurementSource: Send + Sync {
    fn identity(&self) -> String;

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            page_count: true,
            visibility: true,
        }
    }

    /// Whether the campaign runner may issue queries from several threads.
    fn supports_concurrency(&self) -> bool {
        true
    }

    /// Pages indexed under the URL's host (subdomain) or path prefix
    /// (subdirectory).
    fn page_count(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError>;

    /// Pages outside the URL's own scope that link to it.
    fn visibility(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError>;
}

/// The search-engine query strings a live backend would issue, kept for audit.
pub fn emulated_queries(url: &WebUrl) -> (String, String) {
    let target = url
        .normalized
        .split_once("://")
        .map_or(url.normalized.as_str(), |(_, r)| r);
    (
        format!("site:{target}"),
        format!("linkdomain:{target} -site:{target}"),
    )
}

pub fn query_page_count(
    source: &dyn MeasurementSource,
    url: &WebUrl,
    wave: &Wave,
) -> Result<Count, SourceError> {
    if !source.capabilities().page_count {
        return Err(SourceError::Unsupported("page count"));
    }
    source.page_count(url, wave)
}

pub fn query_visibility(
    source: &dyn MeasurementSource,
    url: &WebUrl,
    wave: &Wave,
) -> Result<Count, SourceError> {
    if !source.capabilities().visibility {
        return Err(SourceError::Unsupported("visibility"));
    }
    source.visibility(url, wave)
}

/// Placeholder for a live search backend. Every query fails as unavailable.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubSource;

impl MeasurementSource for StubSource {
    fn identity(&self) -> String {
        "stub".into()
    }

    fn page_count(&self, _: &WebUrl, _: &Wave) -> Result<Count, SourceError> {
        Err(SourceError::Unavailable(
            "the stub source has no search backend".into(),
        ))
    }

    fn visibility(&self, _: &WebUrl, _: &Wave) -> Result<Count, SourceError> {
        Err(SourceError::Unavailable(
            "the stub source has no search backend".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// The source had no data and zero was substituted.
    UnknownUrl,
}

impl RecordFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordFlag::UnknownUrl => "unknown_url",
        }
    }
}

impl FromStr for RecordFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unknown_url" => Ok(RecordFlag::UnknownUrl),
            other => Err(format!("unknown record flag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub page_count: u64,
    pub visibility: u64,
    pub source: String,
    /// Logical query time: the wave label.
    pub queried_at: YearMonth,
    #[serde(default)]
    pub flags: Vec<RecordFlag>,
}

/// Measurements for one wave, keyed by normalized URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub wave: Wave,
    #[serde(default)]
    pub registry_hash: Option<String>,
    pub records: BTreeMap<String, SnapshotRecord>,
    /// URLs that could not be measured, with the reason.
    #[serde(default)]
    pub missing: BTreeMap<String, String>,
}

impl Snapshot {
    pub fn new(wave: Wave) -> Snapshot {
        Snapshot {
            wave,
            registry_hash: None,
            records: BTreeMap::new(),
            missing: BTreeMap::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn total_page_count(&self) -> u64 {
        self.records.values().map(|r| r.page_count).sum()
    }

    pub fn total_visibility(&self) -> u64 {
        self.records.values().map(|r| r.visibility).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_month_parsing_and_distance() {
        let mar: YearMonth = "2010-03".parse().unwrap();
        let dec: YearMonth = "2010-12".parse().unwrap();
        assert_eq!(mar.months_until(dec), 9);
        assert_eq!(mar.to_string(), "2010-03");
        assert!("2010-13".parse::<YearMonth>().is_err());
        assert!("March".parse::<YearMonth>().is_err());
    }

    #[test]
    fn waves_must_increase() {
        let w = waves_from_labels(&["2010-03", "2010-06", "2010-09", "2010-12"]).unwrap();
        assert_eq!(w.iter().map(|w| w.index).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(validate_waves(&w).is_ok());
        assert!(matches!(
            waves_from_labels(&["2010-06", "2010-03"]),
            Err(WaveError::OutOfOrder { .. })
        ));
        assert!(matches!(
            waves_from_labels(&["2010-06", "2010-06"]),
            Err(WaveError::OutOfOrder { .. })
        ));
        assert_eq!(waves_from_labels::<&str>(&[]), Err(WaveError::Empty));
    }

    #[test]
    fn emulated_query_strings() {
        let url = crate::registry::parse_and_normalize_url("biblioteca.upc.edu").unwrap();
        let (size, vis) = emulated_queries(&url);
        assert_eq!(size, "site:biblioteca.upc.edu");
        assert_eq!(
            vis,
            "linkdomain:biblioteca.upc.edu -site:biblioteca.upc.edu"
        );
    }
}
