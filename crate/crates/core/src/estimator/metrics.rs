//! Error metrics for runtime predictions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub wmape: f64,
    pub smape: f64,
}

impl Metrics {
    pub fn compute(actual: &[f64], predicted: &[f64]) -> Self {
        Self {
            mse: mse(actual, predicted),
            mae: mae(actual, predicted),
            wmape: wmape(actual, predicted),
            smape: smape(actual, predicted),
        }
    }
}

fn check(actual: &[f64], predicted: &[f64]) -> f64 {
    assert_eq!(actual.len(), predicted.len(), "length mismatch");
    assert!(!actual.is_empty(), "no values to score");
    actual.len() as f64
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = check(actual, predicted);
    actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = check(actual, predicted);
    actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum::<f64>() / n
}

/// `Σ|y − ŷ| / Σ|y|`; zero when both sums vanish.
pub fn wmape(actual: &[f64], predicted: &[f64]) -> f64 {
    check(actual, predicted);
    let num: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum();
    let den: f64 = actual.iter().map(|y| y.abs()).sum();
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Percent, in `[0, 200]`. Pairs with `y = ŷ = 0` contribute nothing.
pub fn smape(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = check(actual, predicted);
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| {
            let den = y.abs() + p.abs();
            if den == 0.0 {
                0.0
            } else {
                2.0 * (y - p).abs() / den
            }
        })
        .sum();
    100.0 * total / n
}
