//! Unit URL admission: website-level criteria and redirect handling.

use serde::{Deserialize, Serialize};

use super::url::{SyntaxClass, UrlStatus, WebUrl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionRule {
    /// Official, alias or alternative university address.
    GeneralDomain,
    ValidSubdomain,
    ValidSubdirectory,
    /// Does not resolve, but the syntax is acceptable.
    BrokenButValid,
    /// Valid A redirecting to valid B: A is kept.
    RedirectToValid,
    /// Valid A redirecting to non-valid B: A is kept.
    RedirectToInvalid,
    /// B reached from a redirect and valid on its own: kept.
    RedirectTargetValid,
    /// B reached from a redirect but not valid: dropped.
    RedirectTargetInvalid,
    Dynamic,
    External,
    SinglePage,
    /// The bare university domain cannot stand for an internal unit.
    ApexNotUnit,
}

impl AdmissionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AdmissionRule::GeneralDomain => "general_domain",
            AdmissionRule::ValidSubdomain => "valid_subdomain",
            AdmissionRule::ValidSubdirectory => "valid_subdirectory",
            AdmissionRule::BrokenButValid => "broken_but_valid",
            AdmissionRule::RedirectToValid => "redirect_to_valid",
            AdmissionRule::RedirectToInvalid => "redirect_to_invalid",
            AdmissionRule::RedirectTargetValid => "redirect_target_valid",
            AdmissionRule::RedirectTargetInvalid => "redirect_target_invalid",
            AdmissionRule::Dynamic => "dynamic",
            AdmissionRule::External => "external",
            AdmissionRule::SinglePage => "single_page",
            AdmissionRule::ApexNotUnit => "apex_not_unit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub url: String,
    pub admitted: bool,
    pub rule: AdmissionRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub primary: Verdict,
    pub redirect: Option<Verdict>,
}

impl AdmissionDecision {
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        std::iter::once(&self.primary).chain(self.redirect.as_ref())
    }
}

/// Why a unit URL fails the website-level criteria, if it does.
fn rejection(url: &WebUrl) -> Option<AdmissionRule> {
    if url.dynamic {
        Some(AdmissionRule::Dynamic)
    } else if url.syntax_class == SyntaxClass::External {
        Some(AdmissionRule::External)
    } else if url.single_page {
        Some(AdmissionRule::SinglePage)
    } else if url.syntax_class == SyntaxClass::Apex {
        Some(AdmissionRule::ApexNotUnit)
    } else {
        None
    }
}

/// Applies the unit admission rules to `url_a` and its optional redirect
/// target. Both URLs must already be classified against the owning
/// university.
pub fn apply_admission_rules(url_a: &WebUrl, redirect_info: Option<&WebUrl>) -> AdmissionDecision {
    let a_rejection = rejection(url_a);
    let b_rejection = redirect_info.map(rejection);

    let primary = match (a_rejection, b_rejection) {
        (Some(rule), _) => Verdict {
            url: url_a.normalized.clone(),
            admitted: false,
            rule,
        },
        (None, _) if url_a.status == UrlStatus::BrokenButValid => Verdict {
            url: url_a.normalized.clone(),
            admitted: true,
            rule: AdmissionRule::BrokenButValid,
        },
        (None, Some(None)) => Verdict {
            url: url_a.normalized.clone(),
            admitted: true,
            rule: AdmissionRule::RedirectToValid,
        },
        (None, Some(Some(_))) => Verdict {
            url: url_a.normalized.clone(),
            admitted: true,
            rule: AdmissionRule::RedirectToInvalid,
        },
        (None, None) => Verdict {
            url: url_a.normalized.clone(),
            admitted: true,
            rule: if url_a.syntax_class == SyntaxClass::Subdomain {
                AdmissionRule::ValidSubdomain
            } else {
                AdmissionRule::ValidSubdirectory
            },
        },
    };

    let redirect = redirect_info.map(|b| match rejection(b) {
        None => Verdict {
            url: b.normalized.clone(),
            admitted: true,
            rule: AdmissionRule::RedirectTargetValid,
        },
        Some(_) => Verdict {
            url: b.normalized.clone(),
            admitted: false,
            rule: AdmissionRule::RedirectTargetInvalid,
        },
    });

    AdmissionDecision { primary, redirect }
}

/// Admission for official/alias/alternative addresses: only dynamic
/// addresses are refused.
pub fn apply_general_rules(url: &WebUrl) -> Verdict {
    Verdict {
        url: url.normalized.clone(),
        admitted: !url.dynamic,
        rule: if url.dynamic {
            AdmissionRule::Dynamic
        } else {
            AdmissionRule::GeneralDomain
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::url::{classify_against, parse_and_normalize_url};

    fn unit_url(raw: &str) -> WebUrl {
        let mut u = parse_and_normalize_url(raw).unwrap();
        u.syntax_class = classify_against(&u, ["upc.edu", "upc.es"]);
        u
    }

    #[test]
    fn valid_a_redirecting_to_dynamic_b() {
        let a = unit_url("biblioteca.upc.edu");
        let b = unit_url("upc.edu/bib/index?id=4");
        let d = apply_admission_rules(&a, Some(&b));
        assert!(d.primary.admitted);
        assert_eq!(d.primary.rule, AdmissionRule::RedirectToInvalid);
        let r = d.redirect.unwrap();
        assert!(!r.admitted);
        assert_eq!(r.rule, AdmissionRule::RedirectTargetInvalid);
    }

    #[test]
    fn valid_a_redirecting_to_valid_b_keeps_both() {
        let a = unit_url("biblioteca.upc.es");
        let b = unit_url("biblioteca.upc.edu");
        let d = apply_admission_rules(&a, Some(&b));
        assert!(d.primary.admitted && d.redirect.as_ref().unwrap().admitted);
        assert_eq!(d.primary.rule, AdmissionRule::RedirectToValid);
    }

    #[test]
    fn broken_link_with_valid_syntax_is_admitted() {
        let mut a = unit_url("upc.edu/grupo-x");
        a.status = UrlStatus::BrokenButValid;
        let d = apply_admission_rules(&a, None);
        assert!(d.primary.admitted);
        assert_eq!(d.primary.rule, AdmissionRule::BrokenButValid);
    }

    #[test]
    fn rejections() {
        let cases = [
            ("upc.edu/x?y=1", AdmissionRule::Dynamic),
            ("otri-upc.com", AdmissionRule::External),
            ("upc.edu/docs/leaflet.pdf", AdmissionRule::SinglePage),
            ("upc.edu", AdmissionRule::ApexNotUnit),
        ];
        for (raw, rule) in cases {
            let d = apply_admission_rules(&unit_url(raw), None);
            assert!(!d.primary.admitted, "{raw}");
            assert_eq!(d.primary.rule, rule, "{raw}");
        }
    }

    #[test]
    fn invalid_a_with_valid_b_keeps_only_b() {
        let a = unit_url("upc.edu/x?y=1");
        let b = unit_url("x.upc.edu");
        let d = apply_admission_rules(&a, Some(&b));
        assert!(!d.primary.admitted);
        assert!(d.redirect.unwrap().admitted);
    }

    #[test]
    fn decisions_are_deterministic() {
        let a = unit_url("blogs.upc.edu");
        let b = unit_url("upc.edu/blogs;jsessionid=1");
        assert_eq!(
            apply_admission_rules(&a, Some(&b)),
            apply_admission_rules(&a, Some(&b))
        );
    }
}
