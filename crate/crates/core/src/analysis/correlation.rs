use std::collections::BTreeMap;

use super::AnalysisError;

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; `None` if either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Tie-corrected Spearman on paired slices. `Ok(None)` when a variable is
/// constant.
pub fn spearman_values(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Length(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFew {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        let bad = (0..x.len())
            .filter(|&i| !x[i].is_finite() || !y[i].is_finite())
            .map(|i| i.to_string())
            .collect();
        return Err(AnalysisError::NonFinite(bad));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Spearman over two entity-keyed maps with identical key sets.
pub fn spearman_rho(
    x: &BTreeMap<String, f64>,
    y: &BTreeMap<String, f64>,
) -> Result<Option<f64>, AnalysisError> {
    if x.keys().ne(y.keys()) {
        return Err(AnalysisError::MismatchedEntities {
            only_first: x.keys().filter(|k| !y.contains_key(*k)).cloned().collect(),
            only_second: y.keys().filter(|k| !x.contains_key(*k)).cloned().collect(),
        });
    }
    let xs: Vec<f64> = x.values().copied().collect();
    let ys: Vec<f64> = y.values().copied().collect();
    spearman_values(&xs, &ys).map_err(|e| match e {
        AnalysisError::NonFinite(idx) => {
            let keys: Vec<&String> = x.keys().collect();
            AnalysisError::NonFinite(
                idx.iter()
                    .map(|i| keys[i.parse::<usize>().unwrap()].clone())
                    .collect(),
            )
        }
        other => other,
    })
}
