use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRule {
    /// Fold change against the median of the other waves.
    pub k: f64,
    /// Absolute floor used when the median is small or zero.
    pub floor: f64,
}

impl Default for AnomalyRule {
    fn default() -> Self {
        AnomalyRule {
            k: 5.0,
            floor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyDirection {
    High,
    Low,
}

impl AnomalyDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyDirection::High => "high",
            AnomalyDirection::Low => "low",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFlag {
    /// Position in the series (0-based).
    pub wave: usize,
    pub value: f64,
    pub median_of_others: f64,
    pub direction: AnomalyDirection,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Flags waves whose value is above `max(k * median, floor)` or, when the
/// median of the other waves reaches the floor, below `median / k`.
/// Unmeasured waves are ignored; fewer than three measured waves yield no
/// flags.
pub fn detect_temporal_anomalies(series: &[Option<f64>], rule: &AnomalyRule) -> Vec<AnomalyFlag> {
    let measured: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if measured.len() < 3 {
        return Vec::new();
    }
    let mut flags = Vec::new();
    for &(wave, value) in &measured {
        let mut others: Vec<f64> = measured
            .iter()
            .filter(|(i, _)| *i != wave)
            .map(|(_, v)| *v)
            .collect();
        let med = median(&mut others);
        let upper = (rule.k * med).max(rule.floor);
        let direction = if value > upper {
            Some(AnomalyDirection::High)
        } else if med >= rule.floor && value < med / rule.k {
            Some(AnomalyDirection::Low)
        } else {
            None
        };
        if let Some(direction) = direction {
            flags.push(AnomalyFlag {
                wave,
                value,
                median_of_others: med,
                direction,
            });
        }
    }
    flags
}
