//! Online correction of per-iteration runtime predictions.
//!
//! After each finished iteration the ratio `g = ŷ/y` of predicted to actual
//! runtime is observed. A Gaussian process with prior mean 1 and a one-way
//! kernel (past iterations inform later ones, never the reverse) smooths
//! those ratios and rescales the predictions for the iterations still to
//! come.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimatorError;

pub const DEFAULT_SIGMA: f64 = 50.0;
pub const DEFAULT_JITTER: f64 = 1e-6;
/// Floor on the posterior ratio before dividing by it.
pub const RATIO_FLOOR: f64 = 1e-6;

/// Warps the lag: logarithmic just below zero, identity above.
pub fn lag_warp(delta: f64) -> f64 {
    if delta > 0.0 {
        delta
    } else {
        (delta + 1.0).ln()
    }
}

/// Covariance between iterations `i` and `i2`; zero once `i2` trails `i` by
/// a full iteration.
pub fn kernel(i: f64, i2: f64, sigma: f64) -> f64 {
    let delta = i2 - i;
    if delta <= -1.0 {
        return 0.0;
    }
    let h = lag_warp(delta);
    (-h * h / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpAdjuster {
    pub sigma: f64,
    pub jitter: f64,
    /// `(iteration, ratio)` with strictly increasing iterations.
    observed: Vec<(f64, f64)>,
    #[serde(skip)]
    alpha: Option<Vec<f64>>,
}

impl Default for GpAdjuster {
    fn default() -> Self {
        Self::new(DEFAULT_SIGMA)
    }
}

impl GpAdjuster {
    pub fn new(sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        Self {
            sigma,
            jitter: DEFAULT_JITTER,
            observed: Vec::new(),
            alpha: None,
        }
    }

    pub fn observed(&self) -> &[(f64, f64)] {
        &self.observed
    }

    /// Records iteration `iteration`'s prediction and measured runtime.
    pub fn observe(&mut self, iteration: f64, predicted: f64, actual: f64) -> Result<(), EstimatorError> {
        if !(actual > 0.0 && actual.is_finite()) {
            return Err(EstimatorError::InvalidObservation(format!("runtime {actual} at iteration {iteration}")));
        }
        if !(predicted > 0.0 && predicted.is_finite()) {
            return Err(EstimatorError::InvalidObservation(format!(
                "prediction {predicted} at iteration {iteration}"
            )));
        }
        self.observe_ratio(iteration, predicted / actual)
    }

    pub fn observe_ratio(&mut self, iteration: f64, ratio: f64) -> Result<(), EstimatorError> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(EstimatorError::InvalidObservation(format!("ratio {ratio} at iteration {iteration}")));
        }
        if let Some(&(last, _)) = self.observed.last() {
            if iteration <= last {
                return Err(EstimatorError::InvalidObservation(format!(
                    "iteration {iteration} does not follow {last}"
                )));
            }
        }
        self.observed.push((iteration, ratio));
        self.alpha = None;
        Ok(())
    }

    // Row b, column a holds cov(i_a, i_b), so the matrix is lower triangular
    // for increasing indices and row b reproduces the posterior at i_b.
    fn weights(&mut self) -> &[f64] {
        if self.alpha.is_none() {
            let m = self.observed.len();
            let gram = DMatrix::from_fn(m, m, |b, a| {
                let c = kernel(self.observed[a].0, self.observed[b].0, self.sigma);
                if a == b {
                    c + self.jitter
                } else {
                    c
                }
            });
            let resid = DVector::from_iterator(m, self.observed.iter().map(|&(_, g)| g - 1.0));
            let alpha = gram
                .lu()
                .solve(&resid)
                .expect("triangular with a positive diagonal");
            self.alpha = Some(alpha.iter().copied().collect());
        }
        self.alpha.as_deref().unwrap_or_default()
    }

    /// Posterior mean ratio at iteration `x`; 1 with nothing observed.
    pub fn posterior_ratio(&mut self, x: f64) -> f64 {
        let sigma = self.sigma;
        let idx: Vec<f64> = self.observed.iter().map(|o| o.0).collect();
        let alpha = self.weights();
        1.0 + idx.iter().zip(alpha).map(|(&i, a)| kernel(i, x, sigma) * a).sum::<f64>()
    }

    /// `ŷ' = ŷ / max(ĝ(x), ε)`.
    pub fn adjust(&mut self, x: f64, predicted: f64) -> f64 {
        predicted / self.posterior_ratio(x).max(RATIO_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjusted {
    /// Adjusted predictions for iterations `observed+1..=q`.
    pub future_ms: Vec<f64>,
    /// Observed runtimes plus adjusted future predictions.
    pub total_ms: f64,
}

/// Conditions a fresh copy of `adjuster` on the observed prefix and
/// rescales the remaining predictions.
pub fn adjust_predictions(adjuster: &GpAdjuster, predicted: &[f64], observed: &[f64]) -> Result<Adjusted, EstimatorError> {
    if observed.is_empty() {
        return Err(EstimatorError::InvalidObservation("no observed iterations".into()));
    }
    if observed.len() > predicted.len() {
        return Err(EstimatorError::InvalidObservation(format!(
            "{} observations for {} predictions",
            observed.len(),
            predicted.len()
        )));
    }
    let mut gp = adjuster.clone();
    for (j, (&y_hat, &y)) in predicted.iter().zip(observed).enumerate() {
        gp.observe((j + 1) as f64, y_hat, y)?;
    }
    let future_ms: Vec<f64> = predicted
        .iter()
        .enumerate()
        .skip(observed.len())
        .map(|(j, &y_hat)| gp.adjust((j + 1) as f64, y_hat))
        .collect();
    let total_ms = observed.iter().sum::<f64>() + future_ms.iter().sum::<f64>();
    Ok(Adjusted { future_ms, total_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(kernel(4.0, 4.0, 50.0), 1.0);
        assert_eq!(kernel(5.0, 3.0, 50.0), 0.0);
        assert_eq!(kernel(5.0, 4.0, 50.0), 0.0);
        assert!((kernel(3.0, 5.0, 50.0) - 0.99920).abs() < 1e-5);
        assert!((kernel(3.0, 5.0, 50.0) - (-4.0f64 / 5000.0).exp()).abs() < 1e-15);
        let half = kernel(7.0, 6.5, 50.0);
        assert!((half - (-(0.5f64.ln().powi(2)) / 5000.0).exp()).abs() < 1e-15);
        assert!((half - 0.99990).abs() < 1e-5);
    }

    #[test]
    fn kernel_is_one_way() {
        for i in 1..20 {
            for j in 1..i {
                assert_eq!(kernel(i as f64, j as f64, 50.0), 0.0);
            }
        }
        // just inside the cutoff the covariance is tiny but positive
        assert!(kernel(2.0, 1.0 + 1e-9, 1.0) > 0.0);
    }

    #[test]
    fn warp_is_smooth_at_zero() {
        let eps = 1e-6;
        assert_eq!(lag_warp(0.0), 0.0);
        let left = (lag_warp(0.0) - lag_warp(-eps)) / eps;
        let right = (lag_warp(eps) - lag_warp(0.0)) / eps;
        assert!((left - 1.0).abs() < 1e-5 && (right - 1.0).abs() < 1e-5);
        assert!((kernel(0.0, -eps, 50.0) - kernel(0.0, eps, 50.0)).abs() < 1e-12);
    }

    #[test]
    fn accurate_predictions_are_left_alone() {
        let predicted = [5.0, 4.0, 4.0, 3.0, 3.0];
        let out = adjust_predictions(&GpAdjuster::default(), &predicted, &predicted[..2]).unwrap();
        for (a, b) in out.future_ms.iter().zip(&predicted[2..]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((out.total_ms - 19.0).abs() < 1e-12);
    }

    #[test]
    fn one_overestimate() {
        let mut gp = GpAdjuster::default();
        gp.observe_ratio(1.0, 2.0).unwrap();
        for j in 2..=20 {
            let x = j as f64;
            let g = gp.posterior_ratio(x);
            let closed = 1.0 + kernel(1.0, x, 50.0) / (1.0 + DEFAULT_JITTER);
            assert!((g - closed).abs() < 1e-12);
            assert!(g > 1.0);
            assert!(gp.adjust(x, 10.0) < 10.0);
        }
    }

    #[test]
    fn posterior_interpolates_observations() {
        let mut gp = GpAdjuster::default();
        let ratios = [1.4, 0.7, 1.1, 0.9, 2.5, 1.0];
        for (j, &g) in ratios.iter().enumerate() {
            gp.observe_ratio((j + 1) as f64, g).unwrap();
        }
        for (j, &g) in ratios.iter().enumerate() {
            assert!((gp.posterior_ratio((j + 1) as f64) - g).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_observations() {
        let mut gp = GpAdjuster::default();
        assert!(gp.observe(1.0, 2.0, 0.0).is_err());
        assert!(gp.observe(1.0, 2.0, -1.0).is_err());
        gp.observe(2.0, 2.0, 1.0).unwrap();
        assert!(gp.observe(2.0, 2.0, 1.0).is_err());
        assert!(adjust_predictions(&GpAdjuster::default(), &[1.0], &[]).is_err());
    }
}
