//! Per-entity indicators: monthly shares, mean representativeness, WIF,
//! compound growth and scoped shares.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::{Snapshot, Wave, YearMonth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Size,
    Visibility,
}

impl Metric {
    pub const BOTH: [Metric; 2] = [Metric::Size, Metric::Visibility];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Size => "size",
            Metric::Visibility => "visibility",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "size" => Ok(Metric::Size),
            "visibility" => Ok(Metric::Visibility),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Size and visibility counts for one entity at one wave.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub size: u64,
    pub visibility: u64,
}

impl Measure {
    pub fn get(self, metric: Metric) -> u64 {
        match metric {
            Metric::Size => self.size,
            Metric::Visibility => self.visibility,
        }
    }
}

impl std::ops::AddAssign for Measure {
    fn add_assign(&mut self, rhs: Measure) {
        self.size += rhs.size;
        self.visibility += rhs.visibility;
    }
}

/// Per-wave measures, `None` where the entity was not measured.
pub type Series = Vec<Option<Measure>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthTotal {
    pub wave: Wave,
    pub total_size: u64,
    pub total_visibility: u64,
}

/// Sums of every record in each snapshot.
pub fn month_totals(snapshots: &[Snapshot]) -> Vec<MonthTotal> {
    snapshots
        .iter()
        .map(|s| MonthTotal {
            wave: s.wave,
            total_size: s.total_page_count(),
            total_visibility: s.total_visibility(),
        })
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("scope total {given} does not equal the sum of its members ({sum})")]
    Consistency { given: u64, sum: u64 },
    #[error("no measured waves")]
    NoMeasuredWaves,
    #[error("negative input {0}")]
    Negative(f64),
    #[error("compounding needs at least one period")]
    NoPeriods,
    #[error("{months} months between {first} and {last} is not a whole number of {period}-month periods")]
    UnevenPeriods {
        first: YearMonth,
        last: YearMonth,
        months: i64,
        period: u32,
    },
    #[error("series has {found} waves, expected {expected}")]
    WaveCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shares {
    pub shares: BTreeMap<String, f64>,
    /// The scope total was zero, so every share was set to 0.
    pub degenerate: bool,
}

/// Percentage of `scope_total` held by each entity.
pub fn monthly_share(
    values: &BTreeMap<String, u64>,
    scope_total: u64,
) -> Result<Shares, IndicatorError> {
    let sum: u64 = values.values().sum();
    if sum != scope_total {
        return Err(IndicatorError::Consistency {
            given: scope_total,
            sum,
        });
    }
    let degenerate = scope_total == 0;
    let shares = values
        .iter()
        .map(|(k, &v)| {
            let share = if degenerate {
                0.0
            } else {
                100.0 * v as f64 / scope_total as f64
            };
            (k.clone(), share)
        })
        .collect();
    Ok(Shares { shares, degenerate })
}

/// Mean of the shares at measured waves (`None` entries are skipped).
pub fn mean_representativeness(shares_by_wave: &[Option<f64>]) -> Result<f64, IndicatorError> {
    let measured: Vec<f64> = shares_by_wave.iter().flatten().copied().collect();
    if measured.is_empty() {
        return Err(IndicatorError::NoMeasuredWaves);
    }
    Ok(measured.iter().sum::<f64>() / measured.len() as f64)
}

/// External inlinks per page; `None` when size is zero.
pub fn wif(size: f64, visibility: f64) -> Option<f64> {
    (size > 0.0).then(|| visibility / size)
}

/// Compound per-period growth in percent. `Ok(None)` when `first` is zero.
pub fn growth_rate(first: f64, last: f64, periods: u32) -> Result<Option<f64>, IndicatorError> {
    for v in [first, last] {
        if v < 0.0 || v.is_nan() {
            return Err(IndicatorError::Negative(v));
        }
    }
    if periods == 0 {
        return Err(IndicatorError::NoPeriods);
    }
    if first == 0.0 {
        return Ok(None);
    }
    if last == 0.0 {
        return Ok(Some(-100.0));
    }
    Ok(Some(
        100.0 * ((last / first).powf(1.0 / periods as f64) - 1.0),
    ))
}

/// Compounding periods between two wave labels.
pub fn compounding_periods(
    first: YearMonth,
    last: YearMonth,
    period_months: u32,
) -> Result<u32, IndicatorError> {
    if period_months == 0 {
        return Err(IndicatorError::NoPeriods);
    }
    let months = first.months_until(last);
    if months < 0 || months % period_months as i64 != 0 {
        return Err(IndicatorError::UnevenPeriods {
            first,
            last,
            months,
            period: period_months,
        });
    }
    Ok((months / period_months as i64) as u32)
}

/// Growth between the first and last measured waves of `values`.
/// Undefined with fewer than two measured waves or a zero start.
pub fn series_growth(
    values: &[Option<u64>],
    waves: &[Wave],
    period_months: u32,
) -> Result<Option<f64>, IndicatorError> {
    let measured: Vec<(usize, u64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let (Some(&(i0, first)), Some(&(i1, last))) = (measured.first(), measured.last()) else {
        return Ok(None);
    };
    let periods = compounding_periods(waves[i0].label, waves[i1].label, period_months)?;
    if periods == 0 {
        return Ok(None);
    }
    growth_rate(first as f64, last as f64, periods)
}

/// An entity's share of its scope, averaged over the waves it was measured
/// in. Waves where the scope total is zero count as 0; if that holds for
/// every measured wave the result is undefined.
pub fn scoped_share(entity: &[Option<u64>], scope_totals: &[u64]) -> Option<f64> {
    let mut any_defined = false;
    let mut shares = Vec::new();
    for (v, &total) in entity.iter().zip(scope_totals) {
        let Some(v) = v else { continue };
        if total > 0 {
            any_defined = true;
            shares.push(100.0 * *v as f64 / total as f64);
        } else {
            shares.push(0.0);
        }
    }
    if !any_defined {
        return None;
    }
    Some(shares.iter().sum::<f64>() / shares.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricIndicators {
    /// Share of the system total per wave, `None` if not measured.
    pub monthly_share: Vec<Option<f64>>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub r_percent: Option<f64>,
    pub share_uni: Option<f64>,
    pub share_type: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityIndicators {
    pub entity_id: String,
    pub series: Series,
    pub size: MetricIndicators,
    pub visibility: MetricIndicators,
    pub wif: Vec<Option<f64>>,
    pub wif_mean: Option<f64>,
}

impl EntityIndicators {
    pub fn metric(&self, metric: Metric) -> &MetricIndicators {
        match metric {
            Metric::Size => &self.size,
            Metric::Visibility => &self.visibility,
        }
    }

    pub fn metric_mut(&mut self, metric: Metric) -> &mut MetricIndicators {
        match metric {
            Metric::Size => &mut self.size,
            Metric::Visibility => &mut self.visibility,
        }
    }

    pub fn values(&self, metric: Metric) -> Vec<Option<u64>> {
        self.series
            .iter()
            .map(|m| m.map(|m| m.get(metric)))
            .collect()
    }
}

/// Indicators for a set of entities sharing one denominator universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTable {
    pub waves: Vec<Wave>,
    /// Per-wave sum over the entities measured that wave.
    pub totals: Vec<Measure>,
    pub rows: BTreeMap<String, EntityIndicators>,
    /// (wave position, metric) pairs whose total was zero.
    pub degenerate: Vec<(usize, Metric)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorOptions {
    pub period_months: u32,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        IndicatorOptions { period_months: 1 }
    }
}

pub fn indicator_table(
    entities: &BTreeMap<String, Series>,
    waves: &[Wave],
    options: &IndicatorOptions,
) -> Result<IndicatorTable, IndicatorError> {
    for series in entities.values() {
        if series.len() != waves.len() {
            return Err(IndicatorError::WaveCount {
                expected: waves.len(),
                found: series.len(),
            });
        }
    }
    let mut shares: BTreeMap<Metric, Vec<Shares>> = BTreeMap::new();
    let mut totals = vec![Measure::default(); waves.len()];
    let mut degenerate = Vec::new();
    for (w, total) in totals.iter_mut().enumerate() {
        for metric in Metric::BOTH {
            let values: BTreeMap<String, u64> = entities
                .iter()
                .filter_map(|(id, s)| s[w].map(|m| (id.clone(), m.get(metric))))
                .collect();
            let sum: u64 = values.values().sum();
            match metric {
                Metric::Size => total.size = sum,
                Metric::Visibility => total.visibility = sum,
            }
            let s = monthly_share(&values, sum)?;
            if s.degenerate {
                degenerate.push((w, metric));
            }
            shares.entry(metric).or_default().push(s);
        }
    }

    let mut rows = BTreeMap::new();
    for (id, series) in entities {
        let metric_row = |metric: Metric| -> Result<MetricIndicators, IndicatorError> {
            let monthly: Vec<Option<f64>> = (0..waves.len())
                .map(|w| shares[&metric][w].shares.get(id).copied())
                .collect();
            let values: Vec<Option<u64>> =
                series.iter().map(|m| m.map(|m| m.get(metric))).collect();
            Ok(MetricIndicators {
                r: mean_representativeness(&monthly).ok(),
                r_percent: series_growth(&values, waves, options.period_months)?,
                monthly_share: monthly,
                share_uni: None,
                share_type: None,
            })
        };
        let wifs: Vec<Option<f64>> = series
            .iter()
            .map(|m| m.and_then(|m| wif(m.size as f64, m.visibility as f64)))
            .collect();
        let defined: Vec<f64> = wifs.iter().flatten().copied().collect();
        rows.insert(
            id.clone(),
            EntityIndicators {
                entity_id: id.clone(),
                series: series.clone(),
                size: metric_row(Metric::Size)?,
                visibility: metric_row(Metric::Visibility)?,
                wif_mean: (!defined.is_empty())
                    .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
                wif: wifs,
            },
        );
    }
    Ok(IndicatorTable {
        waves: waves.to_vec(),
        totals,
        rows,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn monthly_share_examples() {
        let s = monthly_share(&map(&[("A", 50), ("B", 30), ("C", 20)]), 100).unwrap();
        assert_eq!(s.shares["A"], 50.0);
        assert_eq!(s.shares["C"], 20.0);
        assert!(!s.degenerate);
        assert_eq!(
            monthly_share(&map(&[("A", 7)]), 7).unwrap().shares["A"],
            100.0
        );
        let z = monthly_share(&map(&[("A", 0), ("B", 0)]), 0).unwrap();
        assert!(z.degenerate);
        assert!(z.shares.values().all(|v| *v == 0.0));
        assert!(matches!(
            monthly_share(&map(&[("A", 3)]), 4),
            Err(IndicatorError::Consistency { given: 4, sum: 3 })
        ));
    }

    #[test]
    fn mean_representativeness_examples() {
        assert_eq!(
            mean_representativeness(&[Some(50.0), Some(70.0)]).unwrap(),
            60.0
        );
        let r = mean_representativeness(&[Some(23.4), Some(23.5), Some(23.4), Some(23.4)]).unwrap();
        assert!((r - 23.425).abs() < 1e-12);
        assert_eq!(
            mean_representativeness(&[None, Some(10.0), Some(10.0), Some(10.0)]).unwrap(),
            10.0
        );
        assert_eq!(
            mean_representativeness(&[None, None]),
            Err(IndicatorError::NoMeasuredWaves)
        );
    }

    #[test]
    fn wif_examples() {
        assert_eq!(wif(1.0, 1.0), Some(1.0));
        assert_eq!(wif(200.0, 10.0), Some(0.05));
        assert_eq!(wif(0.0, 10.0), None);
    }

    #[test]
    fn growth_examples() {
        assert_eq!(growth_rate(100.0, 100.0, 3).unwrap(), Some(0.0));
        assert_eq!(growth_rate(100.0, 0.0, 5).unwrap(), Some(-100.0));
        assert_eq!(growth_rate(0.0, 10.0, 5).unwrap(), None);
        assert!(growth_rate(-1.0, 10.0, 5).is_err());
        assert!(growth_rate(1.0, 10.0, 0).is_err());
    }

    #[test]
    fn periods_follow_labels() {
        let mar = YearMonth::new(2010, 3).unwrap();
        let dec = YearMonth::new(2010, 12).unwrap();
        assert_eq!(compounding_periods(mar, dec, 1).unwrap(), 9);
        assert_eq!(compounding_periods(mar, dec, 3).unwrap(), 3);
        assert!(compounding_periods(mar, dec, 2).is_err());
    }

    #[test]
    fn scoped_share_examples() {
        assert_eq!(scoped_share(&[Some(10), Some(10)], &[40, 40]), Some(25.0));
        assert_eq!(scoped_share(&[Some(5), Some(9)], &[5, 9]), Some(100.0));
        assert_eq!(scoped_share(&[Some(0), Some(0)], &[0, 0]), None);
        assert_eq!(scoped_share(&[None, Some(3)], &[10, 6]), Some(50.0));
    }

    #[test]
    fn table_skips_unmeasured_waves() {
        let waves = crate::measurement::waves_from_labels(&["2010-03", "2010-06"]).unwrap();
        let m = |s, v| {
            Some(Measure {
                size: s,
                visibility: v,
            })
        };
        let entities: BTreeMap<String, Series> = [
            ("a".to_string(), vec![m(30, 0), m(10, 5)]),
            ("b".to_string(), vec![None, m(30, 5)]),
        ]
        .into_iter()
        .collect();
        let t = indicator_table(&entities, &waves, &IndicatorOptions::default()).unwrap();
        assert_eq!(t.rows["a"].size.monthly_share, [Some(100.0), Some(25.0)]);
        assert_eq!(t.rows["b"].size.r, Some(75.0));
        assert_eq!(
            t.rows["a"].size.r_percent,
            Some(100.0 * ((1.0f64 / 3.0).powf(1.0 / 3.0) - 1.0))
        );
        assert_eq!(t.rows["b"].size.r_percent, None);
        assert_eq!(t.degenerate, [(0, Metric::Visibility)]);
        assert_eq!(t.rows["a"].wif, [Some(0.0), Some(0.5)]);
    }

    proptest! {
        #[test]
        fn shares_normalize(values in prop::collection::vec(0u64..1_000_000, 1..30)) {
            let m: BTreeMap<String, u64> = values.iter().enumerate().map(|(i, v)| (format!("e{i:02}"), *v)).collect();
            let total = values.iter().sum();
            let s = monthly_share(&m, total).unwrap();
            if total == 0 {
                prop_assert!(s.degenerate);
            } else {
                prop_assert!((s.shares.values().sum::<f64>() - 100.0).abs() < 1e-9);
                prop_assert!(s.shares.values().all(|v| (0.0..=100.0).contains(v)));
            }
        }

        #[test]
        fn shares_are_scale_invariant(values in prop::collection::vec(0u64..100_000, 1..20), c in 1u64..1000) {
            let m: BTreeMap<String, u64> = values.iter().enumerate().map(|(i, v)| (format!("e{i:02}"), *v)).collect();
            let scaled: BTreeMap<String, u64> = m.iter().map(|(k, v)| (k.clone(), v * c)).collect();
            let a = monthly_share(&m, m.values().sum()).unwrap();
            let b = monthly_share(&scaled, scaled.values().sum()).unwrap();
            for (k, v) in &a.shares {
                prop_assert!((v - b.shares[k]).abs() < 1e-9);
            }
        }

        #[test]
        fn share_order_follows_count_order(values in prop::collection::vec(0u64..100_000, 2..20)) {
            let m: BTreeMap<String, u64> = values.iter().enumerate().map(|(i, v)| (format!("e{i:02}"), *v)).collect();
            let s = monthly_share(&m, m.values().sum()).unwrap();
            for (a, va) in &m {
                for (b, vb) in &m {
                    if va < vb {
                        prop_assert!(s.shares[a] < s.shares[b] || s.degenerate);
                    }
                }
            }
        }

        #[test]
        fn growth_round_trips(x in 1.0f64..1e7, g in -0.5f64..10.0, n in 1u32..24) {
            let last = x * (1.0 + g).powi(n as i32);
            let r = growth_rate(x, last, n).unwrap().unwrap();
            prop_assert!((r - 100.0 * g).abs() < 1e-9, "r={} g={}", r, g);
        }

        #[test]
        fn wif_is_scale_free(s in 1u32..1_000_000, v in 0u32..1_000_000, k in 1u32..1000) {
            let a = wif(s as f64, v as f64).unwrap();
            let b = wif(s as f64 * k as f64, v as f64 * k as f64).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
