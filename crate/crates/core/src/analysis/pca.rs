use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMode {
    /// Standardize both variables (sample standard deviation) first.
    #[default]
    Correlation,
    Covariance,
}

impl PcaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PcaMode::Correlation => "correlation",
            PcaMode::Covariance => "covariance",
        }
    }
}

impl fmt::Display for PcaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PcaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correlation" => Ok(PcaMode::Correlation),
            "covariance" => Ok(PcaMode::Covariance),
            other => Err(format!(
                "unknown PCA mode `{other}` (expected correlation or covariance)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mode: PcaMode,
    /// `components[k]` is the unit loading vector of component k.
    pub components: [[f64; 2]; 2],
    pub eigenvalues: [f64; 2],
    /// Percentages, descending, summing to 100.
    pub explained_variance: [f64; 2],
    pub means: [f64; 2],
    /// Divisors applied after centering (1 in covariance mode).
    pub scales: [f64; 2],
    pub scores: Vec<[f64; 2]>,
}

/// Eigenpairs of the symmetric matrix [[a, b], [b, c]], larger first.
///
/// The first vector is oriented so its components sum to a positive number
/// (or, when they cancel, so its first component is positive); the second is
/// the first rotated by +90 degrees.
pub fn symmetric_eigen(a: f64, b: f64, c: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mid = (a + c) / 2.0;
    let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let (l1, l2) = (mid + rad, mid - rad);
    let v = if b == 0.0 {
        if a >= c {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        // both (b, l1 - a) and (l1 - c, b) solve the system; take the longer
        let p = [b, l1 - a];
        let q = [l1 - c, b];
        if p[0].hypot(p[1]) >= q[0].hypot(q[1]) {
            p
        } else {
            q
        }
    };
    let norm = v[0].hypot(v[1]);
    let mut v1 = [v[0] / norm, v[1] / norm];
    let sum = v1[0] + v1[1];
    if sum < -1e-12 || (sum.abs() <= 1e-12 && v1[0] < 0.0) {
        v1 = [-v1[0], -v1[1]];
    }
    let v2 = [-v1[1], v1[0]];
    ([l1, l2], [v1, v2])
}

pub fn pca_two_vars(points: &[(f64, f64)], mode: PcaMode) -> Result<PcaResult, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFew {
            needed: 3,
            got: points.len(),
        });
    }
    let bad: Vec<String> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.0.is_finite() || !p.1.is_finite())
        .map(|(i, _)| i.to_string())
        .collect();
    if !bad.is_empty() {
        return Err(AnalysisError::NonFinite(bad));
    }
    let n = points.len() as f64;
    let means = [
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    ];
    let centered: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [p.0 - means[0], p.1 - means[1]])
        .collect();
    let var = |k: usize| centered.iter().map(|p| p[k] * p[k]).sum::<f64>() / (n - 1.0);
    let (vx, vy) = (var(0), var(1));
    if vx == 0.0 && vy == 0.0 {
        return Err(AnalysisError::AllIdentical);
    }
    let scales = match mode {
        PcaMode::Correlation => [
            if vx > 0.0 { vx.sqrt() } else { 1.0 },
            if vy > 0.0 { vy.sqrt() } else { 1.0 },
        ],
        PcaMode::Covariance => [1.0, 1.0],
    };
    let z: Vec<[f64; 2]> = centered
        .iter()
        .map(|p| [p[0] / scales[0], p[1] / scales[1]])
        .collect();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in &z {
        a += p[0] * p[0];
        b += p[0] * p[1];
        c += p[1] * p[1];
    }
    let (a, b, c) = (a / (n - 1.0), b / (n - 1.0), c / (n - 1.0));
    let (mut eigenvalues, components) = symmetric_eigen(a, b, c);
    eigenvalues[1] = eigenvalues[1].max(0.0);
    let total = eigenvalues[0] + eigenvalues[1];
    let explained_variance = [
        100.0 * eigenvalues[0] / total,
        100.0 * eigenvalues[1] / total,
    ];
    let scores = z
        .iter()
        .map(|p| {
            [
                p[0] * components[0][0] + p[1] * components[0][1],
                p[0] * components[1][0] + p[1] * components[1][1],
            ]
        })
        .collect();
    Ok(PcaResult {
        mode,
        components,
        eigenvalues,
        explained_variance,
        means,
        scales,
        scores,
    })
}
