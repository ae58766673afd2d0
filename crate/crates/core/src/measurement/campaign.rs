//! Batch campaign runner: one wave over every eligible registry URL.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    query_page_count, query_visibility, MeasurementSource, RecordFlag, Snapshot, SnapshotRecord,
    SourceError, Wave,
};
use crate::registry::{Registry, WebUrl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPolicy {
    /// Worker threads issuing queries.
    pub parallelism: usize,
    /// URLs per second across all workers; `None` means unthrottled.
    pub rate_limit: Option<f64>,
    /// Attempts per URL before it is recorded as missing.
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for CampaignPolicy {
    fn default() -> Self {
        CampaignPolicy {
            parallelism: 1,
            rate_limit: None,
            retries: 3,
            backoff_ms: 100,
        }
    }
}

/// Everything needed to finish an interrupted campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub source: String,
    pub snapshot: Snapshot,
    /// Normalized URLs still to be queried.
    pub pending: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign for {wave} aborted with {pending} URLs pending: {reason}", wave = checkpoint.snapshot.wave, pending = checkpoint.pending.len(), reason = checkpoint.reason)]
    Aborted { checkpoint: Box<Checkpoint> },
    #[error("checkpoint was taken against registry {expected}, not {found}")]
    RegistryMismatch { expected: String, found: String },
    #[error("checkpoint URL `{0}` is not in the registry")]
    UnknownCheckpointUrl(String),
    #[error("invalid campaign policy: {0}")]
    InvalidPolicy(String),
}

/// Global throttle handing out evenly spaced start times.
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rate: Option<f64>) -> RateLimiter {
        RateLimiter {
            interval: rate.map(|r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

enum Outcome {
    Measured(SnapshotRecord),
    Missing(String),
    Abort(String),
}

fn measure_one(
    source: &dyn MeasurementSource,
    identity: &str,
    url: &WebUrl,
    wave: &Wave,
    policy: &CampaignPolicy,
    limiter: &RateLimiter,
) -> Outcome {
    let mut last_error = String::new();
    for attempt in 0..policy.retries {
        limiter.acquire();
        let result = query_page_count(source, url, wave)
            .and_then(|p| query_visibility(source, url, wave).map(|v| (p, v)));
        match result {
            Ok((p, v)) => {
                let flags = if p.unknown || v.unknown {
                    vec![RecordFlag::UnknownUrl]
                } else {
                    Vec::new()
                };
                return Outcome::Measured(SnapshotRecord {
                    page_count: p.value,
                    visibility: v.value,
                    source: identity.to_string(),
                    queried_at: wave.label,
                    flags,
                });
            }
            Err(SourceError::Unavailable(reason)) => return Outcome::Abort(reason),
            Err(
                e @ (SourceError::UnknownUrl(_)
                | SourceError::Unsupported(_)
                | SourceError::NotRecorded(_)),
            ) => return Outcome::Missing(e.to_string()),
            Err(SourceError::Transient(reason)) => {
                last_error = reason;
                if attempt + 1 < policy.retries {
                    thread::sleep(Duration::from_millis(policy.backoff_ms << attempt));
                }
            }
        }
    }
    Outcome::Missing(format!(
        "{last_error} (gave up after {} attempts)",
        policy.retries
    ))
}

fn execute(
    source: &dyn MeasurementSource,
    urls: Vec<&WebUrl>,
    mut snapshot: Snapshot,
    policy: &CampaignPolicy,
) -> Result<Snapshot, CampaignError> {
    if policy.parallelism == 0 {
        return Err(CampaignError::InvalidPolicy(
            "parallelism must be at least 1".into(),
        ));
    }
    if policy.retries == 0 {
        return Err(CampaignError::InvalidPolicy(
            "retries must be at least 1".into(),
        ));
    }
    if let Some(r) = policy.rate_limit {
        if !(r.is_finite() && r > 0.0) {
            return Err(CampaignError::InvalidPolicy(format!(
                "rate limit {r} is not positive"
            )));
        }
    }
    let wave = snapshot.wave;
    let identity = source.identity();
    let limiter = RateLimiter::new(policy.rate_limit);
    let next = AtomicUsize::new(0);
    let aborted = AtomicBool::new(false);
    let abort_reason: Mutex<Option<String>> = Mutex::new(None);
    let results: Mutex<BTreeMap<usize, Outcome>> = Mutex::new(BTreeMap::new());
    let workers = if source.supports_concurrency() {
        policy.parallelism.min(urls.len().max(1))
    } else {
        1
    };

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if aborted.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(url) = urls.get(i) else {
                    break;
                };
                let outcome = measure_one(source, &identity, url, &wave, policy, &limiter);
                if let Outcome::Abort(reason) = &outcome {
                    aborted.store(true, Ordering::SeqCst);
                    abort_reason
                        .lock()
                        .expect("abort lock")
                        .get_or_insert_with(|| reason.clone());
                }
                results.lock().expect("results lock").insert(i, outcome);
            });
        }
    });

    let results = results.into_inner().expect("results lock");
    let mut pending = Vec::new();
    for (i, url) in urls.iter().enumerate() {
        match results.get(&i) {
            Some(Outcome::Measured(rec)) => {
                snapshot.records.insert(url.normalized.clone(), rec.clone());
            }
            Some(Outcome::Missing(reason)) => {
                snapshot
                    .missing
                    .insert(url.normalized.clone(), reason.clone());
            }
            Some(Outcome::Abort(_)) | None => pending.push(url.normalized.clone()),
        }
    }
    if let Some(reason) = abort_reason.into_inner().expect("abort lock") {
        return Err(CampaignError::Aborted {
            checkpoint: Box::new(Checkpoint {
                source: identity,
                snapshot,
                pending,
                reason,
            }),
        });
    }
    Ok(snapshot)
}

/// URLs measured at `wave`: every admitted URL whose unit has started.
pub fn eligible_urls<'r>(registry: &'r Registry, wave: &Wave) -> Vec<&'r WebUrl> {
    registry
        .measurable_urls()
        .into_iter()
        .filter(|(_, first)| *first <= wave.index)
        .map(|(u, _)| u)
        .collect()
}

/// Measures every eligible URL of `registry` at `wave`.
///
/// Transient failures are retried with exponential backoff and recorded in
/// `Snapshot::missing` when retries run out. An unavailable source aborts
/// the campaign; the error carries a [`Checkpoint`] for [`resume_campaign`].
pub fn run_campaign(
    registry: &Registry,
    source: &dyn MeasurementSource,
    wave: Wave,
    policy: &CampaignPolicy,
) -> Result<Snapshot, CampaignError> {
    let urls = eligible_urls(registry, &wave);
    let mut snapshot = Snapshot::new(wave);
    snapshot.registry_hash = Some(registry.hash().to_string());
    log::debug!("wave {wave}: {} URLs via {}", urls.len(), source.identity());
    execute(source, urls, snapshot, policy)
}

/// Continues an aborted campaign from its checkpoint.
pub fn resume_campaign(
    registry: &Registry,
    source: &dyn MeasurementSource,
    checkpoint: Checkpoint,
    policy: &CampaignPolicy,
) -> Result<Snapshot, CampaignError> {
    if let Some(h) = &checkpoint.snapshot.registry_hash {
        if h != registry.hash() {
            return Err(CampaignError::RegistryMismatch {
                expected: h.clone(),
                found: registry.hash().to_string(),
            });
        }
    }
    let index: BTreeMap<&str, &WebUrl> = registry
        .measurable_urls()
        .into_iter()
        .map(|(u, _)| (u.normalized.as_str(), u))
        .collect();
    let urls = checkpoint
        .pending
        .iter()
        .map(|p| {
            index
                .get(p.as_str())
                .copied()
                .ok_or_else(|| CampaignError::UnknownCheckpointUrl(p.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    execute(source, urls, checkpoint.snapshot, policy)
}
