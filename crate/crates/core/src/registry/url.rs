//! URL parsing, canonicalization and syntactic classification.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UrlError {
    #[error("empty URL")]
    Empty,
    #[error("malformed URL `{input}`: {reason}")]
    Malformed { input: String, reason: String },
    #[error("URL `{0}` has no host")]
    NoHost(String),
    #[error("URL `{input}` uses unsupported scheme `{scheme}`")]
    UnsupportedScheme { input: String, scheme: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntaxClass {
    Subdomain,
    Subdirectory,
    Apex,
    External,
}

impl SyntaxClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntaxClass::Subdomain => "subdomain",
            SyntaxClass::Subdirectory => "subdirectory",
            SyntaxClass::Apex => "apex",
            SyntaxClass::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UrlStatus {
    #[default]
    Live,
    BrokenButValid,
}

impl UrlStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UrlStatus::Live => "live",
            UrlStatus::BrokenButValid => "broken_but_valid",
        }
    }
}

/// A parsed web address together with its canonical form.
///
/// `syntax_class` is context-free after parsing (`Apex` for a bare host,
/// `Subdirectory` otherwise) and is refined against the owning university
/// by [`classify_url`] when a registry is loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebUrl {
    pub raw: String,
    pub normalized: String,
    pub host: String,
    pub path: String,
    pub query: Option<String>,
    pub syntax_class: SyntaxClass,
    pub dynamic: bool,
    pub single_page: bool,
    pub status: UrlStatus,
    pub redirect_target: Option<String>,
}

impl fmt::Display for WebUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.normalized)
    }
}

/// Configurable syntactic tests used while parsing.
#[derive(Debug, Clone)]
pub struct UrlRules {
    pub dynamic_patterns: Vec<Regex>,
    pub single_page_extensions: Vec<String>,
    pub default_scheme: String,
}

impl Default for UrlRules {
    fn default() -> Self {
        let dynamic_patterns = [
            r"(?i);jsessionid=",
            r"(?i)[;&]?(phpsessid|sessionid|sid)=",
            r"(?i)/cgi-bin(/|$)",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("built-in pattern"))
        .collect();
        let single_page_extensions = [
            "html", "htm", "shtml", "xhtml", "xml", "php", "asp", "aspx", "jsp", "pdf", "txt",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        UrlRules {
            dynamic_patterns,
            single_page_extensions,
            default_scheme: "http".to_string(),
        }
    }
}

static DEFAULT_RULES: LazyLock<UrlRules> = LazyLock::new(UrlRules::default);
static HAS_SCHEME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z][A-Za-z0-9+.\-]*://").expect("scheme pattern"));

/// Parses with the default rules.
pub fn parse_and_normalize_url(raw: &str) -> Result<WebUrl, UrlError> {
    DEFAULT_RULES.parse(raw)
}

impl UrlRules {
    pub fn parse(&self, raw: &str) -> Result<WebUrl, UrlError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(UrlError::Empty);
        }
        let with_scheme = if HAS_SCHEME.is_match(trimmed) {
            trimmed.to_string()
        } else {
            format!("{}://{}", self.default_scheme, trimmed)
        };
        let parsed = Url::parse(&with_scheme).map_err(|e| match e {
            url::ParseError::EmptyHost => UrlError::NoHost(raw.to_string()),
            other => UrlError::Malformed {
                input: raw.to_string(),
                reason: other.to_string(),
            },
        })?;
        let scheme = parsed.scheme().to_ascii_lowercase();
        if scheme != "http" && scheme != "https" {
            return Err(UrlError::UnsupportedScheme {
                input: raw.to_string(),
                scheme,
            });
        }
        let host = match parsed.host_str() {
            Some(h) if !h.is_empty() => canonical_host(h),
            _ => return Err(UrlError::NoHost(raw.to_string())),
        };
        if host.is_empty() {
            return Err(UrlError::NoHost(raw.to_string()));
        }
        let path = parsed.path().trim_end_matches('/').to_string();
        let query = parsed.query().map(str::to_string);

        let mut normalized = format!("{scheme}://{host}");
        if let Some(port) = parsed.port() {
            normalized.push_str(&format!(":{port}"));
        }
        normalized.push_str(&path);
        if let Some(q) = &query {
            normalized.push('?');
            normalized.push_str(q);
        }

        let dynamic = query.is_some() || self.dynamic_patterns.iter().any(|re| re.is_match(&path));
        let single_page = self.is_single_page(&path);
        let syntax_class = if path.is_empty() {
            SyntaxClass::Apex
        } else {
            SyntaxClass::Subdirectory
        };

        Ok(WebUrl {
            raw: raw.to_string(),
            normalized,
            host,
            path,
            query,
            syntax_class,
            dynamic,
            single_page,
            status: UrlStatus::Live,
            redirect_target: None,
        })
    }

    fn is_single_page(&self, path: &str) -> bool {
        let last = path.rsplit('/').next().unwrap_or("");
        match last.rsplit_once('.') {
            Some((stem, ext)) if !stem.is_empty() => self
                .single_page_extensions
                .iter()
                .any(|e| e.eq_ignore_ascii_case(ext)),
            _ => false,
        }
    }
}

fn canonical_host(host: &str) -> String {
    let mut host = host.trim_end_matches('.').to_ascii_lowercase();
    while let Some(rest) = host.strip_prefix("www.") {
        if !rest.contains('.') {
            break;
        }
        host = rest.to_string();
    }
    host
}

/// The label immediately left of the top-level domain (`ub` for `ub.edu`).
pub fn second_level_label(host: &str) -> Option<&str> {
    let mut labels = host.rsplit('.');
    labels.next()?;
    labels.next()
}

/// Classifies `url` against a set of university domains (bare hosts).
pub fn classify_against<'a, I>(url: &WebUrl, domains: I) -> SyntaxClass
where
    I: IntoIterator<Item = &'a str>,
{
    let mut best = SyntaxClass::External;
    for domain in domains {
        let class = if url.host == domain {
            if url.path.is_empty() {
                SyntaxClass::Apex
            } else {
                SyntaxClass::Subdirectory
            }
        } else if url.host.len() > domain.len()
            && url.host.ends_with(domain)
            && url.host.as_bytes()[url.host.len() - domain.len() - 1] == b'.'
        {
            SyntaxClass::Subdomain
        } else {
            continue;
        };
        // An exact host match wins over a suffix match against a shorter domain.
        if best == SyntaxClass::External || class != SyntaxClass::Subdomain {
            best = class;
        }
    }
    best
}

/// Classifies `url` against every official, alias and alternative domain of
/// `university`.
pub fn classify_url(url: &WebUrl, university: &super::University) -> SyntaxClass {
    let domains: Vec<&str> = university.domains().collect();
    classify_against(url, domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn case_and_trailing_slash_are_canonicalized() {
        let u = parse_and_normalize_url("HTTP://UB.ES/").unwrap();
        assert_eq!(u.normalized, "http://ub.es");
        assert_eq!(u.syntax_class, SyntaxClass::Apex);
        assert!(!u.dynamic);
    }

    #[test]
    fn query_string_marks_dynamic() {
        let u = parse_and_normalize_url("http://x.es/page?id=123").unwrap();
        assert!(u.dynamic);
        assert_eq!(u.normalized, "http://x.es/page?id=123");
    }

    #[test]
    fn session_segment_marks_dynamic() {
        let u = parse_and_normalize_url("http://x.es/cat;jsessionid=ABC").unwrap();
        assert!(u.dynamic);
        let u = parse_and_normalize_url("http://x.es/cgi-bin/search").unwrap();
        assert!(u.dynamic);
    }

    #[test]
    fn scheme_less_input_defaults_to_http() {
        let u = parse_and_normalize_url("biblioteca.upc.edu").unwrap();
        assert_eq!(u.normalized, "http://biblioteca.upc.edu");
        assert_eq!(u.host, "biblioteca.upc.edu");
    }

    #[test]
    fn www_prefix_is_transparent() {
        let a = parse_and_normalize_url("http://www.ub.edu/biblioteca/").unwrap();
        let b = parse_and_normalize_url("ub.edu/biblioteca").unwrap();
        assert_eq!(a.normalized, b.normalized);
        assert_eq!(a.normalized, "http://ub.edu/biblioteca");
        // a bare "www.es" keeps its label
        assert_eq!(parse_and_normalize_url("www.es").unwrap().host, "www.es");
    }

    #[test]
    fn path_case_is_preserved_and_fragment_dropped() {
        let u = parse_and_normalize_url("https://UV.es/Fisica/#top").unwrap();
        assert_eq!(u.normalized, "https://uv.es/Fisica");
    }

    #[test]
    fn non_default_port_is_kept() {
        let u = parse_and_normalize_url("http://uv.es:8080/a").unwrap();
        assert_eq!(u.normalized, "http://uv.es:8080/a");
        let u = parse_and_normalize_url("http://uv.es:80/a").unwrap();
        assert_eq!(u.normalized, "http://uv.es/a");
    }

    #[test]
    fn single_file_paths_are_detected() {
        assert!(
            parse_and_normalize_url("uv.es/docs/guide.pdf")
                .unwrap()
                .single_page
        );
        assert!(
            parse_and_normalize_url("uv.es/index.HTML")
                .unwrap()
                .single_page
        );
        assert!(!parse_and_normalize_url("uv.es/docs").unwrap().single_page);
        assert!(!parse_and_normalize_url("uv.es/.well").unwrap().single_page);
    }

    #[test]
    fn missing_host_is_an_error_naming_the_input() {
        let err = parse_and_normalize_url("http://").unwrap_err();
        assert!(err.to_string().contains("http://"), "{err}");
        assert!(matches!(
            parse_and_normalize_url("   "),
            Err(UrlError::Empty)
        ));
        assert!(matches!(
            parse_and_normalize_url("ftp://uv.es/pub"),
            Err(UrlError::UnsupportedScheme { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let domains = ["upc.edu", "upc.es"];
        let lib = parse_and_normalize_url("biblioteca.upc.edu").unwrap();
        assert_eq!(classify_against(&lib, domains), SyntaxClass::Subdomain);
        let dir = parse_and_normalize_url("ub.edu/biblioteca").unwrap();
        assert_eq!(
            classify_against(&dir, ["ub.edu"]),
            SyntaxClass::Subdirectory
        );
        let ext = parse_and_normalize_url("example.org").unwrap();
        assert_eq!(
            classify_against(&ext, ["ub.edu", "ub.es"]),
            SyntaxClass::External
        );
        let apex = parse_and_normalize_url("www.ub.edu").unwrap();
        assert_eq!(classify_against(&apex, ["ub.edu"]), SyntaxClass::Apex);
        // label boundary: "xupc.edu" is not a subdomain of "upc.edu"
        let near = parse_and_normalize_url("xupc.edu").unwrap();
        assert_eq!(classify_against(&near, domains), SyntaxClass::External);
    }

    #[test]
    fn second_level_labels() {
        assert_eq!(second_level_label("ub.edu"), Some("ub"));
        assert_eq!(second_level_label("biblioteca.upc.es"), Some("upc"));
        assert_eq!(second_level_label("localhost"), None);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(
            scheme in prop::sample::select(vec!["", "http://", "HTTPS://", "Http://"]),
            www in prop::bool::ANY,
            labels in prop::collection::vec("[a-zA-Z][a-zA-Z0-9-]{0,6}", 1..4),
            tld in prop::sample::select(vec!["es", "edu", "CAT", "org"]),
            segs in prop::collection::vec("[a-zA-Z0-9_~.%-]{1,8}", 0..4),
            trailing in prop::bool::ANY,
            query in prop::option::of("[a-z]{1,4}=[0-9]{1,3}"),
        ) {
            let mut raw = String::from(scheme);
            if www { raw.push_str("www."); }
            raw.push_str(&labels.join("."));
            raw.push('.');
            raw.push_str(tld);
            for s in &segs { raw.push('/'); raw.push_str(s); }
            if trailing { raw.push('/'); }
            if let Some(q) = &query { raw.push('?'); raw.push_str(q); }
            if let Ok(first) = parse_and_normalize_url(&raw) {
                let second = parse_and_normalize_url(&first.normalized).unwrap();
                prop_assert_eq!(&second.normalized, &first.normalized);
                prop_assert_eq!(second.dynamic, first.dynamic);
                prop_assert_eq!(second.dynamic, query.is_some() || first.dynamic);
            }
        }
    }
}
