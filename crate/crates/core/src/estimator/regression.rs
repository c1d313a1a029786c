//! Iteration-count and per-iteration runtime regressors.
//!
//! The iteration count comes from a linear model on task-level features and
//! is turned into a 0/1 mask `u` over the `q` possible iterations. Each
//! iteration's runtime comes from a polynomial model over standardized
//! features, and the task total is the mask-weighted sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{Expansion, MetaFeatures, Standardization, BASE_FEATURES, ITERATION_SLOT};
use super::EstimatorError;

pub const MODEL_VERSION: u32 = 1;

/// Smallest squared Cholesky pivot accepted on the unit-diagonal system.
const MIN_PIVOT: f64 = 1e-10;

/// Ridge added to the normal equations before factorization.
pub const RIDGE_JITTER: f64 = 1e-8;

/// Observed run of one task, the unit of training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Task-level features (`iteration_index` is ignored).
    pub features: MetaFeatures,
    pub runtimes_ms: Vec<f64>,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub version: u32,
    pub beta: usize,
    pub q: usize,
    pub feature_order: Vec<String>,
    pub standardization: Standardization,
    /// Intercept followed by one weight per base feature other than
    /// `iteration_index`.
    pub iteration_coeffs: Vec<f64>,
    /// One weight per monomial of the degree-`beta` expansion.
    pub periteration_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimePrediction {
    /// Predicted iteration count, in `[1, q]`.
    pub iterations: usize,
    /// `u`: ones for the first `iterations` slots.
    pub mask: Vec<u8>,
    /// Predicted runtime of every iteration `1..=q`, floored at zero.
    pub per_iteration_ms: Vec<f64>,
    pub total_ms: f64,
}

/// The dummy array for a predicted count: `υ` ones, then zeros up to `q`.
pub fn dummy_array(iterations: usize, q: usize) -> Vec<u8> {
    (1..=q).map(|j| u8::from(j <= iterations)).collect()
}

/// Rounds half up and clamps to `[1, q]`.
pub fn clamp_iterations(raw: f64, q: usize) -> usize {
    let rounded = (raw + 0.5).floor();
    if rounded.is_nan() || rounded < 1.0 {
        1
    } else if rounded >= q as f64 {
        q
    } else {
        rounded as usize
    }
}

fn task_row(std_row: &[f64]) -> Vec<f64> {
    std::iter::once(1.0)
        .chain(std_row.iter().enumerate().filter(|(i, _)| *i != ITERATION_SLOT).map(|(_, x)| *x))
        .collect()
}

/// Least squares through the normal equations `XᵀX b = Xᵀy`.
///
/// With `D = diag(XᵀX)^½` the system is rescaled to `D⁻¹XᵀXD⁻¹`, which has a
/// unit diagonal, and the ridge `ε` is added there. So the jitter is
/// relative to each column's own scale. Expansions can be exactly
/// rank-deficient (a two-valued feature squared is constant), and an
/// absolute ridge would vanish into rounding next to entries of 1e6.
pub fn solve_normal_equations(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>, EstimatorError> {
    let p = design.ncols();
    let mut gram = design.tr_mul(design);
    let mut rhs = design.tr_mul(target);
    let scale: Vec<f64> = (0..p)
        .map(|i| {
            let s = gram[(i, i)].sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..p {
        for j in 0..p {
            gram[(i, j)] /= scale[i] * scale[j];
        }
        rhs[i] /= scale[i];
    }
    // The plain ridge first; when it is lost in rounding (collinear monomials)
    // escalate to a ridge relative to the unit diagonal.
    let ridges = std::iter::once(None).chain((0..=4).map(|t| Some(RIDGE_JITTER * 10f64.powi(t))));
    let chol = ridges
        .filter_map(|relative| {
            let mut g = gram.clone();
            for i in 0..p {
                g[(i, i)] += relative.unwrap_or(RIDGE_JITTER / (scale[i] * scale[i]));
            }
            g.cholesky()
        })
        .find(|c| c.l_dirty().diagonal().iter().all(|l| l * l >= MIN_PIVOT))
        .ok_or(EstimatorError::SingularDesign)?;
    let mut b = chol.solve(&rhs);
    for (bi, s) in b.iter_mut().zip(&scale) {
        *bi /= s;
    }
    if b.iter().all(|x| x.is_finite()) {
        Ok(b)
    } else {
        Err(EstimatorError::SingularDesign)
    }
}

pub fn fit_runtime_model(samples: &[TrainingSample], beta: usize, q: usize) -> Result<RuntimeModel, EstimatorError> {
    if beta == 0 || q == 0 {
        return Err(EstimatorError::InvalidInput("beta and q must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(EstimatorError::NotEnoughRows { rows: 0, needed: 1 });
    }
    let mut base_rows = Vec::new();
    let mut targets = Vec::new();
    for (s_idx, s) in samples.iter().enumerate() {
        if s.iterations_used == 0 || s.runtimes_ms.len() != s.iterations_used {
            return Err(EstimatorError::InvalidInput(format!(
                "sample {s_idx}: {} runtimes for {} iterations",
                s.runtimes_ms.len(),
                s.iterations_used
            )));
        }
        // rows past the recorded count are masked out by u
        for (j, &y) in s.runtimes_ms.iter().enumerate().take(q) {
            if !(y > 0.0 && y.is_finite()) {
                return Err(EstimatorError::InvalidInput(format!("sample {s_idx}: runtime {y} is not positive")));
            }
            base_rows.push(s.features.at_iteration(j + 1).base());
            targets.push(y);
        }
    }
    let standardization = Standardization::fit(base_rows.iter().map(|r| r.as_slice()), BASE_FEATURES.len());
    let expansion = Expansion::new(BASE_FEATURES.len(), beta);
    if base_rows.len() < expansion.len() {
        return Err(EstimatorError::NotEnoughRows {
            rows: base_rows.len(),
            needed: expansion.len(),
        });
    }

    let design = DMatrix::from_fn(base_rows.len(), expansion.len(), |_, _| 0.0);
    let mut design = design;
    for (r, row) in base_rows.iter().enumerate() {
        for (c, v) in expansion.expand(&standardization.apply(row)).into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    let per_iteration = solve_normal_equations(&design, &DVector::from_vec(targets))?;

    let task_rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| task_row(&standardization.apply(&s.features.at_iteration(0).base())))
        .collect();
    let width = task_rows[0].len();
    let task_design = DMatrix::from_fn(task_rows.len(), width, |r, c| task_rows[r][c]);
    let counts = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.iterations_used as f64));
    let iteration = solve_normal_equations(&task_design, &counts)?;

    Ok(RuntimeModel {
        version: MODEL_VERSION,
        beta,
        q,
        feature_order: BASE_FEATURES.iter().map(|s| s.to_string()).collect(),
        standardization,
        iteration_coeffs: iteration.iter().copied().collect(),
        periteration_coeffs: per_iteration.iter().copied().collect(),
    })
}

impl RuntimeModel {
    fn check_trained(&self) -> Result<(), EstimatorError> {
        let expected = super::features::expansion_dimension(BASE_FEATURES.len(), self.beta);
        if self.periteration_coeffs.len() != expected
            || self.iteration_coeffs.len() != BASE_FEATURES.len()
            || self.standardization.means.len() != BASE_FEATURES.len()
        {
            return Err(EstimatorError::ModelNotTrained);
        }
        Ok(())
    }

    /// Unrounded output of the linear iteration-count model.
    pub fn raw_iteration_count(&self, mf: &MetaFeatures) -> Result<f64, EstimatorError> {
        self.check_trained()?;
        let row = task_row(&self.standardization.apply(&mf.at_iteration(0).base()));
        Ok(row.iter().zip(&self.iteration_coeffs).map(|(x, b)| x * b).sum())
    }

    pub fn predict_iteration_count(&self, mf: &MetaFeatures) -> Result<Vec<u8>, EstimatorError> {
        let raw = self.raw_iteration_count(mf)?;
        Ok(dummy_array(clamp_iterations(raw, self.q), self.q))
    }

    /// Predicted runtime of iteration `iteration` (1-based), floored at zero.
    pub fn predict_iteration_ms(&self, mf: &MetaFeatures, iteration: usize) -> Result<f64, EstimatorError> {
        self.check_trained()?;
        let expansion = Expansion::new(BASE_FEATURES.len(), self.beta);
        Ok(self.eval(&expansion, mf, iteration))
    }

    fn eval(&self, expansion: &Expansion, mf: &MetaFeatures, iteration: usize) -> f64 {
        let row = self.standardization.apply(&mf.at_iteration(iteration).base());
        let y: f64 = expansion
            .expand(&row)
            .iter()
            .zip(&self.periteration_coeffs)
            .map(|(x, b)| x * b)
            .sum();
        y.max(0.0)
    }

    /// `t = Σ u_j ŷ_j` over the `q` iterations.
    pub fn predict_runtime(&self, mf: &MetaFeatures) -> Result<RuntimePrediction, EstimatorError> {
        let mask = self.predict_iteration_count(mf)?;
        let expansion = Expansion::new(BASE_FEATURES.len(), self.beta);
        let per_iteration_ms: Vec<f64> = (1..=self.q).map(|j| self.eval(&expansion, mf, j)).collect();
        Ok(RuntimePrediction {
            iterations: mask.iter().filter(|&&u| u == 1).count(),
            total_ms: masked_total(&mask, &per_iteration_ms),
            mask,
            per_iteration_ms,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EstimatorError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EstimatorError::Json(e.to_string()))?;
        let found = value.get("version").and_then(serde_json::Value::as_u64);
        if found != Some(u64::from(MODEL_VERSION)) {
            return Err(EstimatorError::VersionMismatch {
                found,
                expected: MODEL_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| EstimatorError::Json(e.to_string()))
    }
}

pub fn masked_total(mask: &[u8], per_iteration: &[f64]) -> f64 {
    mask.iter()
        .zip(per_iteration)
        .filter(|(&u, _)| u == 1)
        .map(|(_, y)| y)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dummy_array_worked_example() {
        assert_eq!(dummy_array(2, 5), vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn iteration_count_clamps() {
        assert_eq!(clamp_iterations(0.3, 5), 1);
        assert_eq!(clamp_iterations(-4.0, 5), 1);
        assert_eq!(clamp_iterations(12.0, 5), 5);
        assert_eq!(clamp_iterations(2.5, 5), 3);
        assert_eq!(clamp_iterations(2.49, 5), 2);
        assert_eq!(dummy_array(clamp_iterations(5.0 + 7.0, 5), 5), vec![1; 5]);
    }

    #[test]
    fn masked_sum() {
        assert_eq!(masked_total(&[1, 1, 0], &[3.0, 4.0, 9.0]), 7.0);
        assert_eq!(masked_total(&[1, 0, 0], &[3.0, 4.0, 9.0]), 3.0);
    }

    fn random_features(rng: &mut ChaCha8Rng) -> MetaFeatures {
        MetaFeatures {
            n: rng.gen_range(1_000..1_000_000),
            k: rng.gen_range(2..1_000),
            d: rng.gen_range(2..6),
            f: rng.gen_range(2..200),
            tree_depth: rng.gen_range(3..25),
            leaf_count: rng.gen_range(10..100_000),
            internal_count: 0,
            avg_points_per_leaf: rng.gen_range(1.0..100.0),
            iteration_index: 0,
        }
    }

    #[test]
    fn untrained_model_refuses_to_predict() {
        let model = RuntimeModel {
            version: MODEL_VERSION,
            beta: 2,
            q: 5,
            feature_order: vec![],
            standardization: Standardization { means: vec![], scales: vec![] },
            iteration_coeffs: vec![],
            periteration_coeffs: vec![],
        };
        let mf = random_features(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(model.predict_runtime(&mf).unwrap_err(), EstimatorError::ModelNotTrained);
    }

    #[test]
    fn least_squares_beats_the_mean_and_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<TrainingSample> = (0..60)
            .map(|_| {
                let features = random_features(&mut rng);
                let it = rng.gen_range(1..=6);
                let runtimes_ms = (0..it).map(|_| rng.gen_range(1.0..50.0)).collect();
                TrainingSample { features, runtimes_ms, iterations_used: it }
            })
            .collect();
        let model = fit_runtime_model(&samples, 1, 6).unwrap();
        let mut ys = Vec::new();
        let mut preds = Vec::new();
        let expansion = Expansion::new(8, 1);
        let mut design = Vec::new();
        for s in &samples {
            for (j, &y) in s.runtimes_ms.iter().enumerate() {
                ys.push(y);
                let row = model.standardization.apply(&s.features.at_iteration(j + 1).base());
                let x = expansion.expand(&row);
                preds.push(x.iter().zip(&model.periteration_coeffs).map(|(a, b)| a * b).sum::<f64>());
                design.push(x);
            }
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let mse = ys.iter().zip(&preds).map(|(y, p)| (y - p).powi(2)).sum::<f64>();
        let mse_mean = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        assert!(mse <= mse_mean);
        // residuals orthogonal to every design column (cosine, so the ridge
        // term's absolute size does not depend on the data scale)
        let r_norm = ys.iter().zip(&preds).map(|(y, p)| (y - p).powi(2)).sum::<f64>().sqrt();
        for c in 0..expansion.len() {
            let dot: f64 = design.iter().zip(ys.iter().zip(&preds)).map(|(x, (y, p))| x[c] * (y - p)).sum();
            let x_norm = design.iter().map(|x| x[c] * x[c]).sum::<f64>().sqrt();
            assert!(dot.abs() / (x_norm * r_norm) < 1e-6, "column {c}: {dot}");
        }
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<TrainingSample> = (0..30)
            .map(|_| TrainingSample {
                features: random_features(&mut rng),
                runtimes_ms: vec![3.0, 2.0],
                iterations_used: 2,
            })
            .collect();
        let model = fit_runtime_model(&samples, 1, 4).unwrap();
        let back = RuntimeModel::from_json(&model.to_json()).unwrap();
        let mf = samples[3].features;
        let a = model.predict_runtime(&mf).unwrap().total_ms;
        let b = back.predict_runtime(&mf).unwrap().total_ms;
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        let bumped = model.to_json().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(RuntimeModel::from_json(&bumped), Err(EstimatorError::VersionMismatch { found: Some(2), .. })));
    }

    #[test]
    fn rejects_bad_samples() {
        let mf = random_features(&mut ChaCha8Rng::seed_from_u64(1));
        let bad = TrainingSample { features: mf, runtimes_ms: vec![1.0], iterations_used: 2 };
        assert!(fit_runtime_model(&[bad], 1, 4).is_err());
        let neg = TrainingSample { features: mf, runtimes_ms: vec![-1.0], iterations_used: 1 };
        assert!(fit_runtime_model(&[neg], 1, 4).is_err());
        let few = TrainingSample { features: mf, runtimes_ms: vec![1.0], iterations_used: 1 };
        assert!(matches!(fit_runtime_model(&[few], 2, 4), Err(EstimatorError::NotEnoughRows { .. })));
    }
}
