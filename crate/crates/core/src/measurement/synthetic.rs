//! Deterministic synthetic university systems.
//!
//! Every unit draws its random variates from its own ChaCha8 stream
//! (`seed`, stream = unit ordinal), universities from stream
//! `UNIVERSITY_STREAM_BASE + ordinal`. Draw order per unit: zero-unit
//! uniform, size normal, independent visibility normal, syntax uniform, then
//! a (size, visibility) noise normal pair per wave. Per university: the
//! prominence normal, then a (size, visibility) noise pair per wave.
//!
//! With `m` the months elapsed since the first wave:
//!
//! ```text
//! size(w)     = exp(loc + scale*z_s + uni_scale*z_u) * growth^m * exp(noise*e_s(w))
//! external(w) = ratio * exp(loc + scale*z_v + uni_scale*z_u) * growth^m * exp(noise*e_v(w))
//! z_v         = coupling*z_s + sqrt(1 - coupling^2)*z_i
//! ```
//!
//! External links are split into homepage and deep links; subdirectory
//! units only get credit for homepage links. Self links are generated as
//! `self_link_ratio * size` and never counted.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::campaign::{run_campaign, CampaignError, CampaignPolicy};
use super::{waves_from_labels, Count, MeasurementSource, Snapshot, SourceError, Wave, WaveError};
use crate::registry::{Registry, RegistryError, RegistryRow, SyntaxClass, UnitType, WebUrl};

pub const UNIVERSITY_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub log_location: f64,
    pub log_scale: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyMetric {
    #[default]
    Both,
    Size,
    Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub unit: String,
    pub wave: u32,
    pub multiplier: f64,
    #[serde(default)]
    pub metric: AnomalyMetric,
}

fn default_waves() -> Vec<String> {
    ["2010-03", "2010-06", "2010-09", "2010-12"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_visibility_ratio() -> f64 {
    0.2
}
fn default_university_log_scale() -> f64 {
    0.6
}
fn default_subdomain_fraction() -> f64 {
    0.8
}
fn default_deep_link_share() -> f64 {
    0.3
}
fn default_self_link_ratio() -> f64 {
    0.5
}
fn default_wave_noise() -> f64 {
    0.05
}
fn default_general_size_ratio() -> f64 {
    2.0
}
fn default_general_visibility_ratio() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_universities: u32,
    /// Units of every type at every university.
    pub units_per_type: u32,
    pub size_distribution: LogNormal,
    /// Share of units with no indexed presence at all.
    pub zero_fraction: f64,
    /// Mean multiplicative drift per month.
    pub monthly_growth: f64,
    /// Correlation between the size and visibility latent normals.
    pub visibility_coupling: f64,
    #[serde(default)]
    pub anomalies: Vec<Anomaly>,
    #[serde(default = "default_waves")]
    pub waves: Vec<String>,
    /// External inlinks per page at equal latent draws.
    #[serde(default = "default_visibility_ratio")]
    pub visibility_ratio: f64,
    /// Spread of the university-wide prominence factor (log scale).
    #[serde(default = "default_university_log_scale")]
    pub university_log_scale: f64,
    #[serde(default = "default_subdomain_fraction")]
    pub subdomain_fraction: f64,
    /// Share of external links pointing below a unit's top URL.
    #[serde(default = "default_deep_link_share")]
    pub deep_link_share: f64,
    #[serde(default = "default_self_link_ratio")]
    pub self_link_ratio: f64,
    #[serde(default = "default_wave_noise")]
    pub wave_noise: f64,
    #[serde(default = "default_general_size_ratio")]
    pub general_size_ratio: f64,
    #[serde(default = "default_general_visibility_ratio")]
    pub general_visibility_ratio: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 2010,
            n_universities: 76,
            units_per_type: 8,
            size_distribution: LogNormal {
                log_location: 5.0,
                log_scale: 2.0,
            },
            zero_fraction: 0.93,
            monthly_growth: 1.03,
            visibility_coupling: 0.4,
            anomalies: Vec::new(),
            waves: default_waves(),
            visibility_ratio: default_visibility_ratio(),
            university_log_scale: default_university_log_scale(),
            subdomain_fraction: default_subdomain_fraction(),
            deep_link_share: default_deep_link_share(),
            self_link_ratio: default_self_link_ratio(),
            wave_noise: default_wave_noise(),
            general_size_ratio: default_general_size_ratio(),
            general_visibility_ratio: default_general_visibility_ratio(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("degenerate synthetic configuration: {0}")]
    Degenerate(String),
    #[error("invalid synthetic configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    Waves(#[from] WaveError),
    #[error("generated registry failed validation: {0}")]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Campaign(#[from] CampaignError),
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<Vec<Wave>, SyntheticError> {
        if self.n_universities == 0 {
            return Err(SyntheticError::Degenerate("zero universities".into()));
        }
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SyntheticError::Invalid(format!(
                    "{name} = {v} is outside [0, 1]"
                )))
            }
        };
        unit(self.zero_fraction, "zero_fraction")?;
        unit(self.subdomain_fraction, "subdomain_fraction")?;
        unit(self.deep_link_share, "deep_link_share")?;
        if !(-1.0..=1.0).contains(&self.visibility_coupling) {
            return Err(SyntheticError::Invalid(format!(
                "visibility_coupling = {} is outside [-1, 1]",
                self.visibility_coupling
            )));
        }
        let positive = [
            ("monthly_growth", self.monthly_growth),
            ("visibility_ratio", self.visibility_ratio + 1.0),
            ("general_size_ratio", self.general_size_ratio + 1.0),
            (
                "general_visibility_ratio",
                self.general_visibility_ratio + 1.0,
            ),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SyntheticError::Invalid(format!("{name} must be positive")));
            }
        }
        for v in [
            self.size_distribution.log_location,
            self.size_distribution.log_scale,
            self.university_log_scale,
            self.self_link_ratio,
            self.wave_noise,
        ] {
            if !v.is_finite() || v < 0.0 && v != self.size_distribution.log_location {
                return Err(SyntheticError::Invalid(format!(
                    "parameter {v} must be finite and non-negative"
                )));
            }
        }
        let waves = waves_from_labels(&self.waves)?;
        for a in &self.anomalies {
            if a.wave == 0 || a.wave as usize > waves.len() {
                return Err(SyntheticError::Invalid(format!(
                    "anomaly wave {} out of range",
                    a.wave
                )));
            }
            if !(a.multiplier.is_finite() && a.multiplier >= 0.0) {
                return Err(SyntheticError::Invalid(format!(
                    "anomaly multiplier {} invalid",
                    a.multiplier
                )));
            }
        }
        Ok(waves)
    }

    pub fn university_id(&self, ordinal: u32) -> String {
        let width = self.n_universities.to_string().len().max(3);
        format!("u{:0width$}", ordinal + 1)
    }

    pub fn unit_id(&self, university: u32, unit_type: &UnitType, k: u32) -> String {
        format!(
            "{}-{}-{:02}",
            self.university_id(university),
            unit_type.code(),
            k
        )
    }

    /// Ordinal of a unit: university-major, then taxonomy order, then `k`.
    pub fn unit_ordinal(&self, university: u32, type_index: usize, k: u32) -> u64 {
        (university as u64 * UnitType::all().len() as u64 + type_index as u64)
            * self.units_per_type as u64
            + k as u64
    }
}

/// Link volume pointing at a URL from one origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkBatch {
    /// A page (normalized URL) the links come from.
    pub from: String,
    /// Whether the links target the top URL itself or pages below it.
    pub deep: bool,
    pub pages: u64,
}

/// Whether `from` lies inside the scope of `target`.
pub fn in_scope(from: &str, target: &WebUrl) -> bool {
    let rest = from.split_once("://").map_or(from, |(_, r)| r);
    let (host, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, ""),
    };
    match target.syntax_class {
        SyntaxClass::Subdirectory => {
            host == target.host
                && (path == target.path || path.starts_with(&format!("{}/", target.path)))
        }
        _ => host == target.host || host.ends_with(&format!(".{}", target.host)),
    }
}

/// Linking pages outside the target's scope. Subdirectories only receive
/// credit for links to their exact top URL.
pub fn external_inlinks(target: &WebUrl, batches: &[LinkBatch]) -> u64 {
    batches
        .iter()
        .filter(|b| !in_scope(&b.from, target))
        .filter(|b| target.syntax_class != SyntaxClass::Subdirectory || !b.deep)
        .map(|b| b.pages)
        .sum()
}

#[derive(Debug, Clone)]
struct WaveData {
    page_count: u64,
    links: Vec<LinkBatch>,
}

/// Raw draws for one unit, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraws {
    pub u_zero: f64,
    pub z_size: f64,
    pub z_independent: f64,
    pub u_syntax: f64,
    pub wave_noise: Vec<(f64, f64)>,
}

pub fn unit_draws(seed: u64, ordinal: u64, n_waves: usize) -> UnitDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    let u_zero = rng.random::<f64>();
    let z_size: f64 = StandardNormal.sample(&mut rng);
    let z_independent: f64 = StandardNormal.sample(&mut rng);
    let u_syntax = rng.random::<f64>();
    let wave_noise = (0..n_waves)
        .map(|_| {
            (
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        })
        .collect();
    UnitDraws {
        u_zero,
        z_size,
        z_independent,
        u_syntax,
        wave_noise,
    }
}

struct UniversityDraws {
    z_prominence: f64,
    wave_noise: Vec<(f64, f64)>,
}

fn university_draws(seed: u64, ordinal: u32, n_waves: usize) -> UniversityDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(UNIVERSITY_STREAM_BASE + ordinal as u64);
    let z_prominence: f64 = StandardNormal.sample(&mut rng);
    let wave_noise = (0..n_waves)
        .map(|_| {
            (
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        })
        .collect();
    UniversityDraws {
        z_prominence,
        wave_noise,
    }
}

/// A measurement source backed by a generated system with a known link list.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    seed: u64,
    waves: Vec<Wave>,
    data: HashMap<String, Vec<WaveData>>,
}

impl SyntheticSource {
    /// Generates the registry and the per-URL series for `config`.
    pub fn build(config: &SyntheticConfig) -> Result<(Registry, SyntheticSource), SyntheticError> {
        let waves = config.validate()?;
        let n_waves = waves.len();
        let first = waves[0].label;
        let months: Vec<i32> = waves
            .iter()
            .map(|w| first.months_until(w.label) as i32)
            .collect();
        let types = UnitType::all();
        let archive_start = if n_waves >= 2 { 2 } else { 1 };

        let mut anomalies: HashMap<&str, Vec<&Anomaly>> = HashMap::new();
        for a in &config.anomalies {
            anomalies.entry(a.unit.as_str()).or_default().push(a);
        }
        let mut unknown_anomaly_units: Vec<&str> = anomalies.keys().copied().collect();

        let loc = config.size_distribution.log_location;
        let scale = config.size_distribution.log_scale;
        let coupling = config.visibility_coupling;
        let mut rows = Vec::new();
        let mut data: HashMap<String, Vec<WaveData>> = HashMap::new();

        for u in 0..config.n_universities {
            let uni_id = config.university_id(u);
            let official = format!("http://{uni_id}.edu");
            let alias = (u % 2 == 1).then(|| format!("http://{uni_id}.es"));
            let ud = university_draws(config.seed, u, n_waves);
            let prominence = config.university_log_scale * ud.z_prominence;
            rows.push(RegistryRow {
                university_id: uni_id.clone(),
                url: official.clone(),
                url_role: "official".into(),
                university_name: format!("Synthetic University {}", u + 1),
                ownership: if u % 4 == 3 { "private" } else { "public" }.into(),
                ..Default::default()
            });
            if let Some(a) = &alias {
                rows.push(RegistryRow {
                    university_id: uni_id.clone(),
                    url: a.clone(),
                    url_role: "alias".into(),
                    ..Default::default()
                });
            }

            let mut internal_size = vec![0u64; n_waves];
            let mut internal_vis = vec![0u64; n_waves];
            for (ti, ty) in types.iter().enumerate() {
                for k in 0..config.units_per_type {
                    let unit_id = config.unit_id(u, ty, k);
                    let ordinal = config.unit_ordinal(u, ti, k);
                    let d = unit_draws(config.seed, ordinal, n_waves);
                    let label = format!("{}-{k}", ty.code().replace('_', "-"));
                    let url_text = if d.u_syntax < config.subdomain_fraction {
                        format!("http://{label}.{uni_id}.edu")
                    } else {
                        format!("http://{uni_id}.edu/{label}")
                    };
                    rows.push(RegistryRow {
                        university_id: uni_id.clone(),
                        unit_id: unit_id.clone(),
                        unit_type: ty.code().into(),
                        url: url_text.clone(),
                        url_role: "unit".into(),
                        first_wave: if ty.code() == "archive" {
                            archive_start.to_string()
                        } else {
                            String::new()
                        },
                        ..Default::default()
                    });

                    let zero = d.u_zero < config.zero_fraction;
                    let z_v =
                        coupling * d.z_size + (1.0 - coupling * coupling).sqrt() * d.z_independent;
                    let size_base = (loc + scale * d.z_size + prominence).exp();
                    let ext_base = config.visibility_ratio * (loc + scale * z_v + prominence).exp();
                    let unit_anomalies = anomalies.get(unit_id.as_str());
                    if unit_anomalies.is_some() {
                        unknown_anomaly_units.retain(|x| *x != unit_id);
                    }
                    let subdirectory = !url_text[7..].split_once('/').is_none();
                    let mut series = Vec::with_capacity(n_waves);
                    for w in 0..n_waves {
                        if zero {
                            series.push(WaveData {
                                page_count: 0,
                                links: Vec::new(),
                            });
                            continue;
                        }
                        let drift = config.monthly_growth.powi(months[w]);
                        let (e_s, e_v) = d.wave_noise[w];
                        let mut size = size_base * drift * (config.wave_noise * e_s).exp();
                        let mut ext = ext_base * drift * (config.wave_noise * e_v).exp();
                        for a in unit_anomalies.into_iter().flatten() {
                            if a.wave as usize == w + 1 {
                                if a.metric != AnomalyMetric::Visibility {
                                    size *= a.multiplier;
                                }
                                if a.metric != AnomalyMetric::Size {
                                    ext *= a.multiplier;
                                }
                            }
                        }
                        let page_count = size.round() as u64;
                        let deep = (ext * config.deep_link_share).round() as u64;
                        let root = (ext * (1.0 - config.deep_link_share)).round() as u64;
                        let internal = (size * config.self_link_ratio).round() as u64;
                        let links = vec![
                            LinkBatch {
                                from: "http://inlinks.example.org/page".into(),
                                deep: false,
                                pages: root,
                            },
                            LinkBatch {
                                from: "http://deeplinks.example.net".into(),
                                deep: true,
                                pages: deep,
                            },
                            LinkBatch {
                                from: format!("{url_text}/news"),
                                deep: false,
                                pages: internal,
                            },
                        ];
                        internal_size[w] += page_count;
                        internal_vis[w] += if subdirectory { root } else { root + deep };
                        series.push(WaveData { page_count, links });
                    }
                    data.insert(url_text, series);
                }
            }

            let floor_size = (loc + prominence).exp();
            let floor_vis = config.visibility_ratio * floor_size;
            let split: &[(String, f64)] = &match &alias {
                Some(a) => vec![(official.clone(), 0.7), (a.clone(), 0.3)],
                None => vec![(official.clone(), 1.0)],
            };
            for (url, share) in split {
                let series = (0..n_waves)
                    .map(|w| {
                        let (g_s, g_v) = ud.wave_noise[w];
                        let size = config.general_size_ratio
                            * (internal_size[w] as f64 + floor_size)
                            * (config.wave_noise * g_s).exp();
                        let vis = config.general_visibility_ratio
                            * (internal_vis[w] as f64 + floor_vis)
                            * (config.wave_noise * g_v).exp();
                        WaveData {
                            page_count: (size * share).round() as u64,
                            links: vec![LinkBatch {
                                from: "http://inlinks.example.org/page".into(),
                                deep: false,
                                pages: (vis * share).round() as u64,
                            }],
                        }
                    })
                    .collect();
                data.insert(url.clone(), series);
            }
        }

        if let Some(unit) = unknown_anomaly_units.first() {
            return Err(SyntheticError::Invalid(format!(
                "anomaly names unknown unit `{unit}`"
            )));
        }

        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 2, r))
            .collect();
        let registry = Registry::from_rows(Some(format!("synthetic-seed-{}", config.seed)), rows)?;
        let source = SyntheticSource {
            seed: config.seed,
            waves,
            data,
        };
        Ok((registry, source))
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    fn wave_slot(&self, url: &WebUrl, wave: &Wave) -> Result<&WaveData, SourceError> {
        let w = self
            .waves
            .iter()
            .position(|x| x.label == wave.label)
            .ok_or_else(|| {
                SourceError::UnknownUrl(format!("{} at {}", url.normalized, wave.label))
            })?;
        self.data
            .get(&url.normalized)
            .map(|s| &s[w])
            .ok_or_else(|| SourceError::UnknownUrl(url.normalized.clone()))
    }

    /// The full generated link list for `url` at `wave`, self links included.
    pub fn link_profile(&self, url: &WebUrl, wave: &Wave) -> Option<&[LinkBatch]> {
        self.wave_slot(url, wave).ok().map(|d| d.links.as_slice())
    }
}

impl MeasurementSource for SyntheticSource {
    fn identity(&self) -> String {
        format!("synthetic:seed={}", self.seed)
    }

    fn page_count(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError> {
        self.wave_slot(url, wave)
            .map(|d| Count::known(d.page_count))
    }

    fn visibility(&self, url: &WebUrl, wave: &Wave) -> Result<Count, SourceError> {
        self.wave_slot(url, wave)
            .map(|d| Count::known(external_inlinks(url, &d.links)))
    }
}

/// Generates a registry and one snapshot per configured wave.
pub fn generate_synthetic_system(
    config: &SyntheticConfig,
) -> Result<(Registry, Vec<Snapshot>), SyntheticError> {
    let (registry, source) = SyntheticSource::build(config)?;
    let policy = CampaignPolicy::default();
    let snapshots = source
        .waves()
        .iter()
        .map(|w| run_campaign(&registry, &source, *w, &policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((registry, snapshots))
}

/// Unit ids grouped by university, for callers that need the layout.
pub fn unit_layout(config: &SyntheticConfig) -> BTreeMap<String, Vec<String>> {
    (0..config.n_universities)
        .map(|u| {
            let units = UnitType::all()
                .iter()
                .flat_map(|ty| (0..config.units_per_type).map(move |k| config.unit_id(u, ty, k)))
                .collect();
            (config.university_id(u), units)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::snapshot::write_snapshot_csv;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_universities: 4,
            units_per_type: 2,
            zero_fraction: 0.3,
            ..Default::default()
        }
    }

    fn bytes(reg: &Registry, snaps: &[Snapshot]) -> Vec<u8> {
        let mut out = Vec::new();
        reg.write_csv(&mut out).unwrap();
        for s in snaps {
            write_snapshot_csv(s, &mut out).unwrap();
        }
        out
    }

    #[test]
    fn generation_is_byte_identical_for_equal_configs() {
        let (r1, s1) = generate_synthetic_system(&small()).unwrap();
        let (r2, s2) = generate_synthetic_system(&small()).unwrap();
        assert_eq!(bytes(&r1, &s1), bytes(&r2, &s2));
        let other = SyntheticConfig { seed: 7, ..small() };
        let (r3, s3) = generate_synthetic_system(&other).unwrap();
        assert_ne!(bytes(&r1, &s1), bytes(&r3, &s3));
    }

    #[test]
    fn zero_fraction_one_silences_every_unit() {
        let cfg = SyntheticConfig {
            zero_fraction: 1.0,
            ..small()
        };
        let (reg, snaps) = generate_synthetic_system(&cfg).unwrap();
        for s in &snaps {
            for (url, rec) in &s.records {
                if let Some(crate::registry::UrlOwner::Unit { .. }) = reg.owner_of(url) {
                    assert_eq!((rec.page_count, rec.visibility), (0, 0), "{url}");
                }
            }
        }
    }

    #[test]
    fn zero_universities_is_degenerate() {
        let cfg = SyntheticConfig {
            n_universities: 0,
            ..small()
        };
        assert!(matches!(
            generate_synthetic_system(&cfg),
            Err(SyntheticError::Degenerate(_))
        ));
    }

    #[test]
    fn out_of_range_knobs_are_rejected() {
        for cfg in [
            SyntheticConfig {
                zero_fraction: 1.5,
                ..small()
            },
            SyntheticConfig {
                visibility_coupling: -1.2,
                ..small()
            },
            SyntheticConfig {
                waves: vec!["2010-06".into(), "2010-03".into()],
                ..small()
            },
        ] {
            assert!(generate_synthetic_system(&cfg).is_err());
        }
    }

    #[test]
    fn anomalies_multiply_their_wave_only() {
        let base = SyntheticConfig {
            zero_fraction: 0.0,
            ..small()
        };
        let unit = base.unit_id(0, &UnitType::lookup("department").unwrap(), 0);
        let spiked = SyntheticConfig {
            anomalies: vec![Anomaly {
                unit: unit.clone(),
                wave: 2,
                multiplier: 50.0,
                metric: AnomalyMetric::Size,
            }],
            ..base.clone()
        };
        let (reg, a) = generate_synthetic_system(&base).unwrap();
        let (_, b) = generate_synthetic_system(&spiked).unwrap();
        let url = &reg.unit(&unit).unwrap().urls[0].normalized;
        let pa: Vec<u64> = a.iter().map(|s| s.records[url].page_count).collect();
        let pb: Vec<u64> = b.iter().map(|s| s.records[url].page_count).collect();
        assert_eq!(pa[0], pb[0]);
        assert_eq!(pa[2], pb[2]);
        assert!(pb[1] > 40 * pa[1].max(1));
        assert_eq!(a[1].records[url].visibility, b[1].records[url].visibility);
        let bad = SyntheticConfig {
            anomalies: vec![Anomaly {
                unit: "nope".into(),
                wave: 1,
                multiplier: 2.0,
                metric: AnomalyMetric::Both,
            }],
            ..base
        };
        assert!(matches!(
            generate_synthetic_system(&bad),
            Err(SyntheticError::Invalid(_))
        ));
    }

    #[test]
    fn archives_start_at_the_second_wave() {
        let (reg, snaps) = generate_synthetic_system(&small()).unwrap();
        let archive = reg
            .units()
            .values()
            .find(|u| u.unit_type.code() == "archive")
            .unwrap();
        let url = &archive.urls[0].normalized;
        assert!(!snaps[0].records.contains_key(url));
        assert!(snaps[1].records.contains_key(url));
    }

    #[test]
    fn self_links_never_count_as_visibility() {
        let cfg = SyntheticConfig {
            zero_fraction: 0.0,
            visibility_ratio: 0.0,
            self_link_ratio: 3.0,
            ..small()
        };
        let (reg, source) = SyntheticSource::build(&cfg).unwrap();
        let wave = source.waves()[0];
        for unit in reg.active_units().filter(|u| u.first_wave == 1) {
            let url = &unit.urls[0];
            let links = source.link_profile(url, &wave).unwrap();
            assert!(links.iter().any(|b| b.pages > 0 && in_scope(&b.from, url)));
            assert_eq!(source.visibility(url, &wave).unwrap().value, 0);
        }
    }

    #[test]
    fn scope_rules() {
        let mut sub = crate::registry::parse_and_normalize_url("lib.u001.edu").unwrap();
        sub.syntax_class = SyntaxClass::Subdomain;
        assert!(in_scope("http://lib.u001.edu/news", &sub));
        assert!(in_scope("http://a.lib.u001.edu", &sub));
        assert!(!in_scope("http://u001.edu/lib", &sub));
        let mut dir = crate::registry::parse_and_normalize_url("u001.edu/lib").unwrap();
        dir.syntax_class = SyntaxClass::Subdirectory;
        assert!(in_scope("http://u001.edu/lib/a", &dir));
        assert!(!in_scope("http://u001.edu/library", &dir));
        assert!(!in_scope("http://u001.edu", &dir));
        let batches = [
            LinkBatch {
                from: "http://x.org".into(),
                deep: false,
                pages: 4,
            },
            LinkBatch {
                from: "http://y.org".into(),
                deep: true,
                pages: 6,
            },
        ];
        assert_eq!(external_inlinks(&sub, &batches), 10);
        assert_eq!(external_inlinks(&dir, &batches), 4);
    }

    #[test]
    fn config_json_round_trips() {
        let cfg = SyntheticConfig {
            anomalies: vec![Anomaly {
                unit: "u001-library-00".into(),
                wave: 2,
                multiplier: 10.0,
                metric: AnomalyMetric::Both,
            }],
            ..small()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SyntheticConfig>(&text).unwrap(), cfg);
        let minimal = r#"{"seed":1,"n_universities":2,"units_per_type":1,
            "size_distribution":{"log_location":3.0,"log_scale":1.0},
            "zero_fraction":0.5,"monthly_growth":1.01,"visibility_coupling":0.3}"#;
        let cfg: SyntheticConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.waves.len(), 4);
    }
}
