use proptest::prelude::*;
use psbatch::analytic::{batch_lst, mean_batch_sojourn};
use psbatch::quadrature::QuadConfig;
use psbatch::ModelParams;

fn cfg() -> QuadConfig {
    QuadConfig::default()
}

#[test]
fn mean_increases_with_load_and_batch_size() {
    let rhos = [0.1, 0.2, 0.3, 0.4, 0.5];
    let qs = [0.1, 0.2, 0.3, 0.4];
    let mut grid = vec![vec![0.0; qs.len()]; rhos.len()];
    for (i, &rho) in rhos.iter().enumerate() {
        for (j, &q) in qs.iter().enumerate() {
            if rho + q < 0.95 {
                grid[i][j] =
                    mean_batch_sojourn(&ModelParams::new(rho, q).unwrap(), &cfg()).unwrap();
                // at least the batch's own work
                assert!(grid[i][j] >= 1.0 / (1.0 - q), "({rho},{q})");
            }
        }
    }
    for i in 0..rhos.len() {
        for j in 0..qs.len() {
            if grid[i][j] == 0.0 {
                continue;
            }
            if i + 1 < rhos.len() && grid[i + 1][j] > 0.0 {
                assert!(
                    grid[i + 1][j] > grid[i][j],
                    "rho {} -> {}",
                    rhos[i],
                    rhos[i + 1]
                );
            }
            if j + 1 < qs.len() && grid[i][j + 1] > 0.0 {
                assert!(grid[i][j + 1] > grid[i][j], "q {} -> {}", qs[j], qs[j + 1]);
            }
        }
    }
}

#[test]
fn lst_differences_alternate() {
    // completely monotone: (−1)^k Δ^k L ≥ 0 for k ≤ 3
    let p = ModelParams::new(0.5, 0.3).unwrap();
    let h = 0.25;
    let l: Vec<f64> = (0..=12)
        .map(|k| batch_lst(&p, k as f64 * h, &cfg()).unwrap().value)
        .collect();
    let mut diff = l.clone();
    for k in 1..=3 {
        diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        assert!(diff.iter().all(|d| sign * d > 0.0), "order {k}: {diff:?}");
    }
}

#[test]
fn lst_slope_at_zero_is_minus_the_mean() {
    for (rho, q) in [(0.5, 0.3), (0.3, 0.2)] {
        let p = ModelParams::new(rho, q).unwrap();
        let mean = mean_batch_sojourn(&p, &cfg()).unwrap();
        let h = 1e-3;
        let (a, b) = (
            batch_lst(&p, h, &cfg()).unwrap().value,
            batch_lst(&p, 2.0 * h, &cfg()).unwrap().value,
        );
        // one-sided second-order difference
        let slope = (-3.0 + 4.0 * a - b) / (2.0 * h);
        assert!(
            (slope + mean).abs() < 1e-3 * mean,
            "({rho},{q}): {slope} vs {mean}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lst_lies_between_jensen_and_work_bounds(rho in 0.05f64..0.6, q in 0.05f64..0.5, s in 0.05f64..5.0) {
        prop_assume!(1.0 - rho - q >= 0.1);
        let p = ModelParams::new(rho, q).unwrap();
        let l = batch_lst(&p, s, &cfg()).unwrap().value;
        let mean = mean_batch_sojourn(&p, &cfg()).unwrap();
        // Ω is at least the batch's total work, a geometric sum of unit exponentials
        let work = (1.0 - q) / (1.0 + s - q);
        prop_assert!(l <= work + 1e-9, "{} > {}", l, work);
        prop_assert!(l >= (-s * mean).exp() - 1e-9);
    }
}
