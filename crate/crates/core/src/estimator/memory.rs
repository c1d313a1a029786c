//! Closed-form index memory model and leaf-capacity tuning.
//!
//! One unit is one 8-byte word; floats and integers are counted alike.

use serde::{Deserialize, Serialize};

use super::EstimatorError;

pub const BYTES_PER_UNIT: u64 = 8;

/// Index units for `n` points at leaf capacity `f`, assuming half-full
/// leaves: `⌈2n/f⌉` leaves of `6 + f` units and one fewer internal nodes of
/// `8` units.
pub fn estimate_index_memory(n: u64, f: u64) -> u64 {
    assert!(f >= 2 && n >= 1, "need f >= 2 and n >= 1");
    let leaves = (2 * n).div_ceil(f);
    leaves * (6 + f) + (leaves - 1) * 8
}

/// Smooth approximation `2n + 28n/f − 16` of [`estimate_index_memory`].
pub fn approx_index_memory(n: f64, f: f64) -> f64 {
    2.0 * n + 28.0 * n / f - 16.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub point_index_floats: u64,
    pub centroid_index_floats: u64,
    pub assignment_ints: u64,
    pub total_units: u64,
    pub total_bytes: u64,
    /// `(2 + 28/f)(n + k) − 32 + n`.
    pub approx_units: f64,
}

pub fn estimate_total_memory(n: u64, k: u64, f: u64) -> Result<MemoryEstimate, EstimatorError> {
    if n == 0 || k == 0 || f < 2 {
        return Err(EstimatorError::InvalidInput(format!(
            "memory model needs n >= 1, k >= 1, f >= 2 (got n={n}, k={k}, f={f})"
        )));
    }
    let point = estimate_index_memory(n, f);
    let centroid = estimate_index_memory(k, f);
    let total = point + centroid + n;
    let (nf, kf, ff) = (n as f64, k as f64, f as f64);
    Ok(MemoryEstimate {
        point_index_floats: point,
        centroid_index_floats: centroid,
        assignment_ints: n,
        total_units: total,
        total_bytes: total * BYTES_PER_UNIT,
        approx_units: (2.0 + 28.0 / ff) * (nf + kf) - 32.0 + nf,
    })
}

fn total_units(n: u64, k: u64, f: u64) -> u64 {
    estimate_index_memory(n, f) + estimate_index_memory(k, f) + n
}

/// Smallest total over every capacity in `[2, max(n, 2)]`.
pub fn minimum_feasible_budget(n: u64, k: u64) -> u64 {
    (2..=n.max(2)).map(|f| total_units(n, k, f)).min().expect("range is nonempty")
}

/// Picks the leaf capacity for a memory budget of `budget` units.
///
/// Starts from the inverted approximation `28(n+k)/(m' − 3n + 32 − 2k)`,
/// then walks to the smallest nearby capacity whose exact estimate fits.
/// The result always satisfies `estimate_total_memory(n, k, f) <= budget`.
pub fn tune_leaf_capacity(n: u64, k: u64, budget: f64) -> Result<u64, EstimatorError> {
    if n == 0 || k == 0 {
        return Err(EstimatorError::InvalidInput("n and k must be positive".into()));
    }
    let infeasible = || EstimatorError::BudgetInfeasible {
        budget,
        minimum: minimum_feasible_budget(n, k),
    };
    let (nf, kf) = (n as f64, k as f64);
    let denominator = budget - 3.0 * nf + 32.0 - 2.0 * kf;
    if !budget.is_finite() || denominator <= 0.0 {
        return Err(infeasible());
    }
    let max_f = n.max(2);
    let fits = |f: u64| (total_units(n, k, f) as f64) <= budget;
    let guess = (28.0 * (nf + kf) / denominator).round();
    let mut f = guess.clamp(2.0, max_f as f64) as u64;
    if fits(f) {
        while f > 2 && fits(f - 1) {
            f -= 1;
        }
    } else {
        while !fits(f) {
            if f == max_f {
                return Err(infeasible());
            }
            f += 1;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_memory_examples() {
        // 2n + 28n/f − 16 at n = 10^6, f = 30
        assert!((approx_index_memory(1e6, 30.0) - 2_933_317.333_333).abs() < 1e-3);
        // ⌈2·10^6/30⌉ = 66667 leaves: 66667·36 + 66666·8
        assert_eq!(estimate_index_memory(1_000_000, 30), 2_933_340);
        for f in [2u64, 10, 30, 100] {
            assert_eq!(estimate_index_memory(f / 2, f), 6 + f);
        }
    }

    #[test]
    fn exact_and_smooth_forms_agree_when_leaves_are_many() {
        for (n, f) in [(3_000u64, 30u64), (100_000, 100), (1_000_000, 200), (20_000, 200)] {
            assert!(n / f >= 100);
            let exact = estimate_index_memory(n, f) as f64;
            let smooth = approx_index_memory(n as f64, f as f64);
            assert!((exact - smooth).abs() / smooth < 1e-3, "n={n} f={f}");
        }
    }

    #[test]
    fn total_memory_example() {
        let m = estimate_total_memory(1_000_000, 1_000, 30).unwrap();
        assert_eq!(m.point_index_floats, 2_933_340);
        assert_eq!(m.centroid_index_floats, 67 * 36 + 66 * 8);
        assert_eq!(m.total_units, m.point_index_floats + m.centroid_index_floats + m.assignment_ints);
        assert_eq!(m.total_units, 3_936_280);
        assert_eq!(m.total_bytes, 8 * 3_936_280);
        // (2 + 28/30)·1 001 000 − 32 + 10^6
        assert!((m.approx_units - 3_936_234.666_667).abs() < 1e-3);
        assert!((m.total_units as f64 - 3_936_268.0).abs() / 3_936_268.0 < 1e-4);
    }

    #[test]
    fn single_centroid_is_one_leaf() {
        let m = estimate_total_memory(100, 1, 30).unwrap();
        assert_eq!(m.centroid_index_floats, 36);
        assert!(estimate_total_memory(100, 0, 30).is_err());
    }

    #[test]
    fn total_decreases_with_capacity() {
        let mut prev = f64::INFINITY;
        for f in 2..=1000 {
            let m = estimate_total_memory(1_000_000, 1_000, f).unwrap();
            assert!(m.approx_units < prev, "f={f}");
            prev = m.approx_units;
        }
        // the ceiling makes the exact form plateau once f² nears 2n
        let mut prev_exact = u64::MAX;
        for f in 2..=300 {
            let t = estimate_total_memory(1_000_000, 1_000, f).unwrap().total_units;
            assert!(t < prev_exact, "f={f}");
            prev_exact = t;
        }
    }

    #[test]
    fn tune_example() {
        // 28·1 001 000 / (3.2e6 − 3e6 + 32 − 2000) = 141.53...
        let f = tune_leaf_capacity(1_000_000, 1_000, 3.2e6).unwrap();
        assert!((140..=144).contains(&f), "f = {f}");
        assert!(estimate_total_memory(1_000_000, 1_000, f).unwrap().total_units as f64 <= 3.2e6);
        assert!(estimate_total_memory(1_000_000, 1_000, f - 1).unwrap().total_units as f64 > 3.2e6);
    }

    #[test]
    fn tiny_budget_is_infeasible() {
        match tune_leaf_capacity(1_000_000, 1_000, 3e6) {
            Err(EstimatorError::BudgetInfeasible { minimum, .. }) => {
                assert!(minimum > 3_000_000);
                assert!(tune_leaf_capacity(1_000_000, 1_000, minimum as f64).is_ok());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(matches!(tune_leaf_capacity(1_000_000, 1_000, 1e3), Err(EstimatorError::BudgetInfeasible { .. })));
    }

    #[test]
    fn budget_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.gen_range(10_000..10_000_000u64);
            let k = rng.gen_range(100..=10_000u64.min(n));
            let f_max = ((n / 8) as f64).sqrt() as u64;
            let f0 = rng.gen_range(2..=f_max.min(200));
            let f = tune_leaf_capacity(n, k, total_units(n, k, f0) as f64).unwrap();
            assert!(f.abs_diff(f0) <= 1, "n={n} k={k} f0={f0} f={f}");
        }
    }

    #[test]
    fn tuning_never_overshoots() {
        // where leaf counts plateau a smaller capacity may fit the same budget
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.gen_range(1..200_000u64);
            let k = rng.gen_range(1..=n.min(5_000));
            let f0 = rng.gen_range(2..=n.max(2));
            let budget = total_units(n, k, f0);
            let f = tune_leaf_capacity(n, k, budget as f64).unwrap();
            assert!(f <= f0 && total_units(n, k, f) <= budget);
        }
    }

    #[test]
    fn tuned_capacity_always_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(1..200_000u64);
            let k = rng.gen_range(1..=n.min(5_000));
            let budget = rng.gen_range(0.0..6.0 * n as f64 + 100.0);
            if let Ok(f) = tune_leaf_capacity(n, k, budget) {
                assert!(total_units(n, k, f) as f64 <= budget);
            }
        }
    }
}
