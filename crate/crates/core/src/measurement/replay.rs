//! A source that answers from previously recorded snapshots.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Count, MeasurementSource, Snapshot, SourceError, Wave, YearMonth};
use crate::registry::WebUrl;

/// What to do when the replay store has no record for a URL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    Error,
    #[default]
    ZeroWithFlag,
}

impl FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(MissingPolicy::Error),
            "zero-with-flag" | "zero_with_flag" => Ok(MissingPolicy::ZeroWithFlag),
            other => Err(format!("unknown missing-URL policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplaySource {
    label: String,
    policy: MissingPolicy,
    data: BTreeMap<YearMonth, BTreeMap<String, (u64, u64)>>,
    missing: BTreeMap<YearMonth, BTreeMap<String, String>>,
}

impl ReplaySource {
    pub fn new(label: impl Into<String>, policy: MissingPolicy) -> ReplaySource {
        ReplaySource {
            label: label.into(),
            policy,
            data: BTreeMap::new(),
            missing: BTreeMap::new(),
        }
    }

    pub fn from_snapshots(
        label: impl Into<String>,
        snapshots: &[Snapshot],
        policy: MissingPolicy,
    ) -> ReplaySource {
        let mut source = ReplaySource::new(label, policy);
        for s in snapshots {
            for (url, r) in &s.records {
                source.insert(s.wave.label, url.clone(), r.page_count, r.visibility);
            }
            for (url, reason) in &s.missing {
                source.insert_missing(s.wave.label, url.clone(), reason.clone());
            }
        }
        source
    }

    pub fn insert(&mut self, wave: YearMonth, url: String, page_count: u64, visibility: u64) {
        self.data
            .entry(wave)
            .or_default()
            .insert(url, (page_count, visibility));
    }

    /// Records that `url` could not be measured at `wave`; replaying it
    /// yields a missing entry with the same reason.
    pub fn insert_missing(&mut self, wave: YearMonth, url: String, reason: String) {
        self.missing.entry(wave).or_default().insert(url, reason);
    }

    pub fn waves(&self) -> impl Iterator<Item = YearMonth> + '_ {
        self.data.keys().copied()
    }

    fn lookup(&self, url: &WebUrl, wave: &Wave) -> Result<Option<(u64, u64)>, SourceError> {
        match self
            .data
            .get(&wave.label)
            .and_then(|m| m.get(&url.normalized))
        {
            Some(v) => Ok(Some(*v)),
            None => {
                if let Some(reason) = self
                    .missing
                    .get(&wave.label)
                    .and_then(|m| m.get(&url.normalized))
                {
                    return Err(SourceError::NotRecorded(reason.clone()));
                }
                match self.policy {
                    MissingPolicy::Error => Err(SourceError::UnknownUrl(url.normalized.clone())),
                    MissingPolicy::ZeroWithFlag => Ok(None),
                }
            }
        }
    }
}

impl MeasurementSource for ReplaySource {
    fn identity(&self) -> String {
        format!("replay:{}", self.label)
    }

    fn page_count(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError> {
        Ok(match self.lookup(url, wave)? {
            Some((p, _)) => Count::known(p),
            None => Count {
                value: 0,
                unknown: true,
            },
        })
    }

    fn visibility(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError> {
        Ok(match self.lookup(url, wave)? {
            Some((_, v)) => Count::known(v),
            None => Count {
                value: 0,
                unknown: true,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{query_page_count, query_visibility};
    use crate::registry::parse_and_normalize_url;

    fn wave() -> Wave {
        Wave {
            index: 1,
            label: YearMonth::new(2010, 3).unwrap(),
        }
    }

    #[test]
    fn replay_identity() {
        let u = parse_and_normalize_url("biblioteca.upc.edu").unwrap();
        let mut src = ReplaySource::new("t", MissingPolicy::Error);
        src.insert(wave().label, u.normalized.clone(), 1234, 57);
        assert_eq!(
            query_page_count(&src, &u, &wave()).unwrap(),
            Count::known(1234)
        );
        assert_eq!(
            query_visibility(&src, &u, &wave()).unwrap(),
            Count::known(57)
        );
        // repeated queries agree
        assert_eq!(
            query_page_count(&src, &u, &wave()),
            query_page_count(&src, &u, &wave())
        );
    }

    #[test]
    fn missing_url_policies() {
        let u = parse_and_normalize_url("otri.upc.edu").unwrap();
        let strict = ReplaySource::new("t", MissingPolicy::Error);
        assert!(matches!(
            strict.page_count(&u, &wave()),
            Err(SourceError::UnknownUrl(_))
        ));
        let lenient = ReplaySource::new("t", MissingPolicy::ZeroWithFlag);
        assert_eq!(
            lenient.page_count(&u, &wave()).unwrap(),
            Count {
                value: 0,
                unknown: true
            }
        );
    }

    #[test]
    fn recorded_missing_keeps_its_reason() {
        let u = parse_and_normalize_url("campus.upc.edu").unwrap();
        let mut src = ReplaySource::new("t", MissingPolicy::ZeroWithFlag);
        src.insert_missing(wave().label, u.normalized.clone(), "query failed".into());
        match src.visibility(&u, &wave()) {
            Err(SourceError::NotRecorded(r)) => assert_eq!(r, "query failed"),
            other => panic!("{other:?}"),
        }
    }
}
