//! The 23-code unit taxonomy: 17 institution types and 6 product types,
//! each attached to exactly one university activity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nature {
    Institution,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Teaching,
    Research,
    Transfer,
    Services,
    Administration,
}

impl Nature {
    pub fn as_str(self) -> &'static str {
        match self {
            Nature::Institution => "institution",
            Nature::Product => "product",
        }
    }
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Teaching => "teaching",
            Activity::Research => "research",
            Activity::Transfer => "transfer",
            Activity::Services => "services",
            Activity::Administration => "administration",
        }
    }
}

impl FromStr for Nature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "institution" => Ok(Nature::Institution),
            "product" => Ok(Nature::Product),
            other => Err(format!("unknown nature `{other}`")),
        }
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "teaching" => Ok(Activity::Teaching),
            "research" => Ok(Activity::Research),
            "transfer" => Ok(Activity::Transfer),
            "services" => Ok(Activity::Services),
            "administration" => Ok(Activity::Administration),
            other => Err(format!("unknown activity `{other}`")),
        }
    }
}

/// One entry of the unit taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitType {
    code: &'static str,
    label: &'static str,
    nature: Nature,
    activity: Activity,
}

impl UnitType {
    pub fn code(&self) -> &'static str {
        self.code
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn nature(&self) -> Nature {
        self.nature
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn lookup(code: &str) -> Option<UnitType> {
        let code = code.trim();
        UNIT_TYPES.iter().copied().find(|t| t.code == code)
    }

    pub fn all() -> &'static [UnitType] {
        UNIT_TYPES
    }
}

impl fmt::Display for UnitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code)
    }
}

impl Serialize for UnitType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.code)
    }
}

impl<'de> Deserialize<'de> for UnitType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        UnitType::lookup(&code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown unit type `{code}`")))
    }
}

const fn institution(code: &'static str, label: &'static str, activity: Activity) -> UnitType {
    UnitType {
        code,
        label,
        nature: Nature::Institution,
        activity,
    }
}

const fn product(code: &'static str, label: &'static str, activity: Activity) -> UnitType {
    UnitType {
        code,
        label,
        nature: Nature::Product,
        activity,
    }
}

static UNIT_TYPES: &[UnitType] = &[
    // teaching
    institution("faculty", "Faculty", Activity::Teaching),
    institution("school", "School", Activity::Teaching),
    institution("business_school", "Business school", Activity::Teaching),
    institution(
        "lifelong_learning",
        "Lifelong learning service",
        Activity::Teaching,
    ),
    // research
    institution("department", "Department", Activity::Research),
    institution("research_group", "Research group", Activity::Research),
    institution("research_center", "Research center", Activity::Research),
    institution(
        "university_institute",
        "University institute",
        Activity::Research,
    ),
    // transfer
    institution(
        "otri",
        "Office of research results transfer",
        Activity::Transfer,
    ),
    institution("foundation", "Foundation", Activity::Transfer),
    institution("science_park", "Science park", Activity::Transfer),
    // services
    institution("library", "Library", Activity::Services),
    institution("archive", "Archive", Activity::Services),
    institution(
        "documentation_center",
        "Documentation center",
        Activity::Services,
    ),
    institution(
        "publishing_service",
        "Publishing service",
        Activity::Services,
    ),
    // administration
    institution("vice_rectorate", "Vice-rectorate", Activity::Administration),
    institution(
        "administrative_service",
        "Administrative service",
        Activity::Administration,
    ),
    // products
    product("repository", "Repository", Activity::Research),
    product("catalog", "Catalog", Activity::Services),
    product(
        "digital_collection",
        "Digital collection",
        Activity::Services,
    ),
    product("blog_platform", "Blog platform", Activity::Services),
    product("virtual_campus", "Virtual campus", Activity::Teaching),
    product("video_platform", "Video platform", Activity::Teaching),
];

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn taxonomy_has_17_institutions_and_6_products() {
        let all = UnitType::all();
        assert_eq!(all.len(), 23);
        let institutions = all
            .iter()
            .filter(|t| t.nature() == Nature::Institution)
            .count();
        let products = all.iter().filter(|t| t.nature() == Nature::Product).count();
        assert_eq!((institutions, products), (17, 6));
    }

    #[test]
    fn codes_are_unique_and_round_trip() {
        let codes: HashSet<_> = UnitType::all().iter().map(|t| t.code()).collect();
        assert_eq!(codes.len(), 23);
        for t in UnitType::all() {
            assert_eq!(UnitType::lookup(t.code()), Some(*t));
        }
        assert!(UnitType::lookup("mystery").is_none());
    }

    #[test]
    fn every_activity_is_represented() {
        for a in [
            Activity::Teaching,
            Activity::Research,
            Activity::Transfer,
            Activity::Services,
            Activity::Administration,
        ] {
            assert!(UnitType::all().iter().any(|t| t.activity() == a), "{a:?}");
        }
    }
}
