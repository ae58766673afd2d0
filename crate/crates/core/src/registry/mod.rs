//! Data model of a university web system and the rules for admitting URLs
//! into it.

pub mod admission;
pub mod taxonomy;
pub mod url;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use admission::{apply_admission_rules, AdmissionDecision, AdmissionRule, Verdict};
pub use taxonomy::{Activity, Nature, UnitType};
pub use url::{
    classify_url, parse_and_normalize_url, SyntaxClass, UrlError, UrlRules, UrlStatus, WebUrl,
};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("row {row}: field `{field}`: {message}")]
    Schema {
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error("row {row}: {source}")]
    Url {
        row: usize,
        #[source]
        source: UrlError,
    },
    #[error("row {row}: unit `{unit}` references unknown university `{university}`")]
    UnknownUniversity {
        row: usize,
        unit: String,
        university: String,
    },
    #[error("university `{0}` has no official URL")]
    NoOfficialUrl(String),
    #[error("URL `{url}` is claimed by both `{first}` and `{second}`")]
    DuplicateUrl {
        url: String,
        first: String,
        second: String,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("registry CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("registry JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistryFormat {
    Csv,
    Json,
}

impl RegistryFormat {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> RegistryFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => RegistryFormat::Json,
            _ => RegistryFormat::Csv,
        }
    }
}

impl FromStr for RegistryFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RegistryFormat::Csv),
            "json" => Ok(RegistryFormat::Json),
            other => Err(format!("unknown registry format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ownership {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlRole {
    Official,
    Alias,
    Alternative,
    Unit,
}

impl FromStr for UrlRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "official" => Ok(UrlRole::Official),
            "alias" => Ok(UrlRole::Alias),
            "alternative" => Ok(UrlRole::Alternative),
            "unit" => Ok(UrlRole::Unit),
            other => Err(format!("unknown url_role `{other}`")),
        }
    }
}

/// One line of the registry file. The first nine columns are required in
/// the header; the last four are optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegistryRow {
    pub university_id: String,
    #[serde(default)]
    pub unit_id: String,
    #[serde(default)]
    pub unit_type: String,
    #[serde(default)]
    pub activity: String,
    #[serde(default)]
    pub nature: String,
    pub url: String,
    pub url_role: String,
    #[serde(default)]
    pub redirect_target: String,
    #[serde(default)]
    pub status: String,
    #[serde(default)]
    pub university_name: String,
    #[serde(default)]
    pub ownership: String,
    #[serde(default)]
    pub unit_name: String,
    #[serde(default)]
    pub first_wave: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegistryDocument {
    #[serde(default)]
    pub version: Option<String>,
    pub rows: Vec<RegistryRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct University {
    pub id: String,
    pub name: String,
    pub ownership: Ownership,
    pub official_urls: Vec<WebUrl>,
    pub alias_urls: Vec<WebUrl>,
    pub alternative_urls: Vec<WebUrl>,
}

impl University {
    /// Bare hosts of every official, alias and alternative URL.
    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.general_urls().map(|u| u.host.as_str())
    }

    pub fn general_urls(&self) -> impl Iterator<Item = &WebUrl> {
        self.official_urls
            .iter()
            .chain(&self.alias_urls)
            .chain(&self.alternative_urls)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Unit {
    pub id: String,
    pub name: String,
    pub university_id: String,
    pub unit_type: UnitType,
    /// Admitted URLs only.
    pub urls: Vec<WebUrl>,
    /// Wave index at which measurement starts.
    pub first_wave: u32,
    /// Set when no URL of the unit survived admission.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum UrlOwner {
    General { university_id: String },
    Unit { unit_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdmissionLogEntry {
    pub row: usize,
    pub owner: String,
    pub url: String,
    pub admitted: bool,
    pub rule: AdmissionRule,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegistrySummary {
    pub universities: usize,
    pub units: usize,
    pub excluded_units: usize,
    pub admitted_urls: usize,
    pub rejected_urls: usize,
}

/// A validated, immutable registry.
#[derive(Debug, Clone)]
pub struct Registry {
    version: Option<String>,
    universities: BTreeMap<String, University>,
    units: BTreeMap<String, Unit>,
    admission_log: Vec<AdmissionLogEntry>,
    owners: BTreeMap<String, UrlOwner>,
    rows: Vec<RegistryRow>,
    hash: String,
}

fn schema(row: usize, field: &'static str, message: impl Into<String>) -> RegistryError {
    RegistryError::Schema {
        row,
        field,
        message: message.into(),
    }
}

fn opt(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

struct PendingUnit {
    row: usize,
    name: String,
    university_id: String,
    unit_type: UnitType,
    first_wave: u32,
    urls: Vec<WebUrl>,
}

impl Registry {
    pub fn empty() -> Registry {
        Registry::from_rows(None, Vec::new()).expect("empty registry is valid")
    }

    /// Validates rows into a registry. `rows` carry their 1-based source
    /// line (CSV) or position (JSON) for error reporting.
    pub fn from_rows(
        version: Option<String>,
        rows: Vec<(usize, RegistryRow)>,
    ) -> Result<Registry, RegistryError> {
        Registry::from_rows_with(version, rows, &UrlRules::default())
    }

    pub fn from_rows_with(
        version: Option<String>,
        rows: Vec<(usize, RegistryRow)>,
        rules: &UrlRules,
    ) -> Result<Registry, RegistryError> {
        let mut universities: BTreeMap<String, University> = BTreeMap::new();
        let mut owners: BTreeMap<String, UrlOwner> = BTreeMap::new();
        let mut log = Vec::new();
        let mut unit_rows = Vec::new();

        // General URLs first, so unit rows may precede their university.
        for (line, row) in &rows {
            let line = *line;
            let role: UrlRole = row
                .url_role
                .parse()
                .map_err(|m: String| schema(line, "url_role", m))?;
            let university_id =
                opt(&row.university_id).ok_or_else(|| schema(line, "university_id", "empty"))?;
            if role == UrlRole::Unit {
                unit_rows.push((line, row));
                continue;
            }
            let url = rules
                .parse(&row.url)
                .map_err(|source| RegistryError::Url { row: line, source })?;
            let uni = universities
                .entry(university_id.to_string())
                .or_insert_with(|| University {
                    id: university_id.to_string(),
                    name: String::new(),
                    ownership: Ownership::Public,
                    official_urls: Vec::new(),
                    alias_urls: Vec::new(),
                    alternative_urls: Vec::new(),
                });
            if let Some(name) = opt(&row.university_name) {
                uni.name = name.to_string();
            }
            if let Some(own) = opt(&row.ownership) {
                uni.ownership = match own.to_ascii_lowercase().as_str() {
                    "public" => Ownership::Public,
                    "private" => Ownership::Private,
                    other => return Err(schema(line, "ownership", format!("unknown `{other}`"))),
                };
            }
            let verdict = admission::apply_general_rules(&url);
            log.push(AdmissionLogEntry {
                row: line,
                owner: university_id.to_string(),
                url: url.normalized.clone(),
                admitted: verdict.admitted,
                rule: verdict.rule,
            });
            if !verdict.admitted {
                continue;
            }
            if let Some(prev) = owners.get(&url.normalized) {
                return Err(RegistryError::DuplicateUrl {
                    url: url.normalized.clone(),
                    first: owner_label(prev),
                    second: university_id.to_string(),
                });
            }
            owners.insert(
                url.normalized.clone(),
                UrlOwner::General {
                    university_id: university_id.to_string(),
                },
            );
            match role {
                UrlRole::Official => uni.official_urls.push(url),
                UrlRole::Alias => uni.alias_urls.push(url),
                UrlRole::Alternative => uni.alternative_urls.push(url),
                UrlRole::Unit => unreachable!(),
            }
        }

        for uni in universities.values_mut() {
            if uni.official_urls.is_empty() {
                return Err(RegistryError::NoOfficialUrl(uni.id.clone()));
            }
            if uni.name.is_empty() {
                uni.name = uni.id.clone();
            }
            let official_labels: BTreeSet<&str> = uni
                .official_urls
                .iter()
                .filter_map(|u| url::second_level_label(&u.host))
                .collect();
            for alias in &uni.alias_urls {
                let label = url::second_level_label(&alias.host);
                if !label.is_some_and(|l| official_labels.contains(l)) {
                    let line = line_of(&rows, &alias.raw, &uni.id);
                    return Err(schema(
                        line,
                        "url_role",
                        format!(
                            "alias `{}` shares no second-level label with an official URL",
                            alias.normalized
                        ),
                    ));
                }
            }
            for alt in &uni.alternative_urls {
                let label = url::second_level_label(&alt.host);
                if label.is_some_and(|l| official_labels.contains(l)) {
                    let line = line_of(&rows, &alt.raw, &uni.id);
                    return Err(schema(
                        line,
                        "url_role",
                        format!(
                            "alternative `{}` shares its second-level label with an official URL",
                            alt.normalized
                        ),
                    ));
                }
            }
        }

        let mut pending: BTreeMap<String, PendingUnit> = BTreeMap::new();
        for (line, row) in unit_rows {
            let unit_id =
                opt(&row.unit_id).ok_or_else(|| schema(line, "unit_id", "empty for a unit row"))?;
            let university_id = row.university_id.trim();
            let Some(uni) = universities.get(university_id) else {
                return Err(RegistryError::UnknownUniversity {
                    row: line,
                    unit: unit_id.to_string(),
                    university: university_id.to_string(),
                });
            };
            let unit_type = UnitType::lookup(&row.unit_type).ok_or_else(|| {
                schema(
                    line,
                    "unit_type",
                    format!("unknown code `{}`", row.unit_type),
                )
            })?;
            if let Some(a) = opt(&row.activity) {
                let a: Activity = a.parse().map_err(|m: String| schema(line, "activity", m))?;
                if a != unit_type.activity() {
                    return Err(schema(
                        line,
                        "activity",
                        format!(
                            "`{}` is a {} type",
                            unit_type.code(),
                            unit_type.activity().as_str()
                        ),
                    ));
                }
            }
            if let Some(n) = opt(&row.nature) {
                let n: Nature = n.parse().map_err(|m: String| schema(line, "nature", m))?;
                if n != unit_type.nature() {
                    return Err(schema(
                        line,
                        "nature",
                        format!(
                            "`{}` is an {} type",
                            unit_type.code(),
                            unit_type.nature().as_str()
                        ),
                    ));
                }
            }
            let first_wave = match opt(&row.first_wave) {
                None => 1,
                Some(s) => match s.parse::<u32>() {
                    Ok(w) if w >= 1 => w,
                    _ => {
                        return Err(schema(
                            line,
                            "first_wave",
                            format!("`{s}` is not a wave index >= 1"),
                        ))
                    }
                },
            };
            let status = match opt(&row.status) {
                None => UrlStatus::Live,
                Some(s) => match s.to_ascii_lowercase().as_str() {
                    "live" => UrlStatus::Live,
                    "broken_but_valid" | "broken" => UrlStatus::BrokenButValid,
                    other => return Err(schema(line, "status", format!("unknown `{other}`"))),
                },
            };

            let mut url_a = rules
                .parse(&row.url)
                .map_err(|source| RegistryError::Url { row: line, source })?;
            url_a.syntax_class = classify_url(&url_a, uni);
            url_a.status = status;
            let url_b = match opt(&row.redirect_target) {
                None => None,
                Some(raw) => {
                    let mut b = rules
                        .parse(raw)
                        .map_err(|source| RegistryError::Url { row: line, source })?;
                    b.syntax_class = classify_url(&b, uni);
                    url_a.redirect_target = Some(b.normalized.clone());
                    Some(b)
                }
            };
            let decision = apply_admission_rules(&url_a, url_b.as_ref());

            let entry = match pending.get_mut(unit_id) {
                Some(p) => {
                    if p.university_id != university_id || p.unit_type != unit_type {
                        return Err(schema(
                            line,
                            "unit_id",
                            format!("unit `{unit_id}` is declared with a different university or type at row {}", p.row),
                        ));
                    }
                    if opt(&row.first_wave).is_some() && p.first_wave != first_wave {
                        return Err(schema(
                            line,
                            "first_wave",
                            format!("conflicts with row {}", p.row),
                        ));
                    }
                    p
                }
                None => pending.entry(unit_id.to_string()).or_insert(PendingUnit {
                    row: line,
                    name: String::new(),
                    university_id: university_id.to_string(),
                    unit_type,
                    first_wave,
                    urls: Vec::new(),
                }),
            };
            if let Some(name) = opt(&row.unit_name) {
                entry.name = name.to_string();
            }

            let candidates = std::iter::once((&decision.primary, Some(url_a)))
                .chain(decision.redirect.as_ref().map(|v| (v, url_b)));
            for (verdict, url) in candidates {
                log.push(AdmissionLogEntry {
                    row: line,
                    owner: unit_id.to_string(),
                    url: verdict.url.clone(),
                    admitted: verdict.admitted,
                    rule: verdict.rule,
                });
                if !verdict.admitted {
                    continue;
                }
                let url = url.expect("admitted verdicts carry their URL");
                match owners.get(&url.normalized) {
                    Some(UrlOwner::Unit { unit_id: prev }) if prev == unit_id => continue,
                    Some(prev) => {
                        return Err(RegistryError::DuplicateUrl {
                            url: url.normalized.clone(),
                            first: owner_label(prev),
                            second: unit_id.to_string(),
                        })
                    }
                    None => {}
                }
                owners.insert(
                    url.normalized.clone(),
                    UrlOwner::Unit {
                        unit_id: unit_id.to_string(),
                    },
                );
                entry.urls.push(url);
            }
        }

        let units = pending
            .into_iter()
            .map(|(id, p)| {
                let unit = Unit {
                    name: if p.name.is_empty() {
                        id.clone()
                    } else {
                        p.name
                    },
                    id: id.clone(),
                    university_id: p.university_id,
                    unit_type: p.unit_type,
                    excluded: p.urls.is_empty(),
                    urls: p.urls,
                    first_wave: p.first_wave,
                };
                (id, unit)
            })
            .collect();

        let mut plain_rows: Vec<RegistryRow> = rows.into_iter().map(|(_, r)| r).collect();
        plain_rows.sort();
        let hash = registry_hash(version.as_deref(), &plain_rows);

        Ok(Registry {
            version,
            universities,
            units,
            admission_log: log,
            owners,
            rows: plain_rows,
            hash,
        })
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    /// Content hash (hex SHA-256) of the version tag and rows.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn universities(&self) -> &BTreeMap<String, University> {
        &self.universities
    }

    pub fn units(&self) -> &BTreeMap<String, Unit> {
        &self.units
    }

    pub fn university(&self, id: &str) -> Option<&University> {
        self.universities.get(id)
    }

    pub fn unit(&self, id: &str) -> Option<&Unit> {
        self.units.get(id)
    }

    pub fn admission_log(&self) -> &[AdmissionLogEntry] {
        &self.admission_log
    }

    pub fn rows(&self) -> &[RegistryRow] {
        &self.rows
    }

    pub fn owner_of(&self, normalized: &str) -> Option<&UrlOwner> {
        self.owners.get(normalized)
    }

    /// Measured units (not excluded).
    pub fn active_units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values().filter(|u| !u.excluded)
    }

    /// Every admitted URL with the wave index from which it is measured,
    /// general URLs first, in deterministic order.
    pub fn measurable_urls(&self) -> Vec<(&WebUrl, u32)> {
        let general = self
            .universities
            .values()
            .flat_map(|u| u.general_urls().map(|url| (url, 1)));
        let units = self
            .active_units()
            .flat_map(|u| u.urls.iter().map(move |url| (url, u.first_wave)));
        general.chain(units).collect()
    }

    pub fn summary(&self) -> RegistrySummary {
        RegistrySummary {
            universities: self.universities.len(),
            units: self.active_units().count(),
            excluded_units: self.units.values().filter(|u| u.excluded).count(),
            admitted_urls: self.admission_log.iter().filter(|e| e.admitted).count(),
            rejected_urls: self.admission_log.iter().filter(|e| !e.admitted).count(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), RegistryError> {
        if let Some(v) = &self.version {
            writeln!(writer, "# version: {v}")?;
        }
        write_rows_csv(&self.rows, writer)
    }

    pub fn to_document(&self) -> RegistryDocument {
        RegistryDocument {
            version: self.version.clone(),
            rows: self.rows.clone(),
        }
    }
}

fn owner_label(owner: &UrlOwner) -> String {
    match owner {
        UrlOwner::General { university_id } => university_id.clone(),
        UrlOwner::Unit { unit_id } => unit_id.clone(),
    }
}

fn line_of(rows: &[(usize, RegistryRow)], raw: &str, university_id: &str) -> usize {
    rows.iter()
        .find(|(_, r)| r.url == raw && r.university_id.trim() == university_id)
        .map(|(l, _)| *l)
        .unwrap_or(0)
}

fn registry_hash(version: Option<&str>, rows: &[RegistryRow]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"uniweb-registry\n");
    hasher.update(version.unwrap_or("").as_bytes());
    hasher.update(b"\n");
    for row in rows {
        hasher.update(
            serde_json::to_string(row)
                .expect("rows serialize")
                .as_bytes(),
        );
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

pub const REGISTRY_CSV_HEADER: [&str; 13] = [
    "university_id",
    "unit_id",
    "unit_type",
    "activity",
    "nature",
    "url",
    "url_role",
    "redirect_target",
    "status",
    "university_name",
    "ownership",
    "unit_name",
    "first_wave",
];

const REQUIRED_COLUMNS: usize = 9;

pub fn write_rows_csv<W: Write>(rows: &[RegistryRow], writer: W) -> Result<(), RegistryError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(REGISTRY_CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads registry rows from CSV text. Lines starting with `#` are comments;
/// an empty input yields no rows.
pub fn read_rows_csv<R: Read>(
    reader: R,
) -> Result<(Option<String>, Vec<(usize, RegistryRow)>), RegistryError> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let mut version = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(v) = line.trim_start_matches('#').trim().strip_prefix("version:") {
            version = Some(v.trim().to_string());
        }
    }
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.starts_with('#'))
    {
        return Ok((version, Vec::new()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    for required in &REGISTRY_CSV_HEADER[..REQUIRED_COLUMNS] {
        if !headers.iter().any(|h| h == *required) {
            return Err(schema(1, "header", format!("missing column `{required}`")));
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: RegistryRow = record
            .deserialize(Some(&headers))
            .map_err(|e| schema(line, "record", e.to_string()))?;
        rows.push((line, row));
    }
    Ok((version, rows))
}

pub fn read_rows_json<R: Read>(
    reader: R,
) -> Result<(Option<String>, Vec<(usize, RegistryRow)>), RegistryError> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok((None, Vec::new()));
    }
    let doc: RegistryDocument = serde_json::from_str(&text)?;
    let rows = doc
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i + 1, r))
        .collect();
    Ok((doc.version, rows))
}

/// Loads and validates a registry file.
pub fn load_registry(path: &Path, format: RegistryFormat) -> Result<Registry, RegistryError> {
    let file = File::open(path)?;
    let (version, rows) = match format {
        RegistryFormat::Csv => read_rows_csv(file)?,
        RegistryFormat::Json => read_rows_json(file)?,
    };
    let registry = Registry::from_rows(version, rows)?;
    let s = registry.summary();
    log::info!(
        "registry {}: {} universities, {} units, {} URLs admitted, {} rejected",
        path.display(),
        s.universities,
        s.units,
        s.admitted_urls,
        s.rejected_urls
    );
    Ok(registry)
}
