use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spatial::{sq_dist, Dataset, SpatialVector};

use super::KmeansError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// `k` distinct rows drawn without replacement.
    #[default]
    RandomSample,
    /// D² weighting (k-means++).
    Kmeanspp,
}

/// Initial centroids, row-major. The same seed always yields the same rows.
pub fn init_centroids_flat(data: &Dataset, k: usize, seed: u64, init: InitMethod) -> Result<Vec<f64>, KmeansError> {
    let n = data.n();
    if k == 0 || k > n {
        return Err(KmeansError::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = match init {
        InitMethod::RandomSample => index::sample(&mut rng, n, k).into_vec(),
        InitMethod::Kmeanspp => kmeanspp_rows(data, k, &mut rng),
    };
    let mut out = Vec::with_capacity(k * data.d());
    for r in rows {
        out.extend_from_slice(data.point(r));
    }
    Ok(out)
}

pub fn init_centroids(data: &Dataset, k: usize, seed: u64, init: InitMethod) -> Result<Vec<SpatialVector>, KmeansError> {
    let flat = init_centroids_flat(data, k, seed, init)?;
    Ok(flat
        .chunks_exact(data.d())
        .map(|c| SpatialVector::new(c.to_vec()).expect("dataset rows are finite"))
        .collect())
}

fn kmeanspp_rows(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.n();
    let mut rows = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    rows.push(first);
    let mut nearest: Vec<f64> = data.iter().map(|p| sq_dist(p, data.point(first))).collect();
    while rows.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a chosen centroid
            rng.gen_range(0..n)
        };
        rows.push(next);
        let c = data.point(next);
        for (w, p) in nearest.iter_mut().zip(data.iter()) {
            *w = w.min(sq_dist(p, c));
        }
    }
    rows
}
