//! Gaver–Stehfest inversion of `(1 − E[exp(−sΩ)])/s` into `P(Ω > t)`.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::transform::batch_lst;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::QuadConfig;

type F = FBig<HalfEven, 2>;

/// Default number of transform samples per time point.
pub const DEFAULT_GS_ORDER: usize = 12;
/// Largest accepted order.
pub const MAX_GS_ORDER: usize = 40;
/// Accepted disagreement between orders `N` and `N−2`.
pub const INVERSION_SLACK: f64 = 1e-3;

const WEIGHT_BITS: usize = 512;

/// Inverted CCDF on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcdfCurve {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub order: usize,
    /// `|estimate(N) − estimate(N−2)|` per grid point.
    pub order_gap: Vec<f64>,
}

impl CcdfCurve {
    /// Largest violation of `values ∈ [0, 1]` and of monotonicity.
    pub fn shape_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, &v) in self.values.iter().enumerate() {
            worst = worst.max(-v).max(v - 1.0);
            if i > 0 {
                worst = worst.max(v - self.values[i - 1]);
            }
        }
        worst
    }
}

fn int(k: i64) -> F {
    F::from(k).with_precision(WEIGHT_BITS).value()
}

/// Stehfest weights `V_1..V_N` in extended precision.
fn weights(order: usize) -> Vec<F> {
    let m = order / 2;
    let mut fact = vec![int(1)];
    for k in 1..=(2 * order) {
        let next = &fact[k - 1] * int(k as i64);
        fact.push(next);
    }
    (1..=order)
        .map(|k| {
            let mut sum = int(0);
            for j in k.div_ceil(2)..=k.min(m) {
                let mut jm = int(1);
                for _ in 0..m {
                    jm *= int(j as i64);
                }
                let num = jm * &fact[2 * j];
                let den = &fact[m - j] * &fact[j] * &fact[j - 1] * &fact[k - j] * &fact[2 * j - k];
                sum += num / den;
            }
            if (k + m) % 2 == 1 {
                -sum
            } else {
                sum
            }
        })
        .collect()
}

fn combine(w: &[F], samples: &[f64], t: f64) -> f64 {
    let mut acc = int(0);
    for (wk, &fk) in w.iter().zip(samples) {
        let f = F::try_from(fk)
            .expect("finite transform sample")
            .with_precision(WEIGHT_BITS)
            .value();
        acc += wk * f;
    }
    acc.to_f64().value() * std::f64::consts::LN_2 / t
}

/// Gaver–Stehfest inversion of `(1 − lst(s))/s` for any transform of a
/// distribution on `[0, ∞)`. `transform` receives all sample points at once.
pub fn invert_ccdf<T>(transform: T, t_grid: &[f64], order: usize) -> Result<CcdfCurve>
where
    T: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if order < 4 || order % 2 == 1 || order > MAX_GS_ORDER {
        return Err(Error::domain(format!(
            "Gaver-Stehfest order must be even and in 4..={MAX_GS_ORDER}, got {order}"
        )));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::domain(
            "time grid must be nonempty with positive finite entries",
        ));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("time grid must be strictly increasing"));
    }
    let s_points: Vec<f64> = t_grid
        .iter()
        .flat_map(|&t| (1..=order).map(move |k| k as f64 * std::f64::consts::LN_2 / t))
        .collect();
    let lst = transform(&s_points)?;
    let samples: Vec<f64> = s_points
        .iter()
        .zip(&lst)
        .map(|(&s, &l)| (1.0 - l) / s)
        .collect();
    let hi = weights(order);
    let lo = weights(order - 2);
    let mut values = Vec::with_capacity(t_grid.len());
    let mut order_gap = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let row = &samples[i * order..(i + 1) * order];
        let a = combine(&hi, row, t);
        let b = combine(&lo, &row[..order - 2], t);
        let gap = (a - b).abs();
        if !(gap <= INVERSION_SLACK) {
            return Err(Error::InversionUnstable { t, gap });
        }
        values.push(a);
        order_gap.push(gap);
    }
    Ok(CcdfCurve {
        t_grid: t_grid.to_vec(),
        values,
        order,
        order_gap,
    })
}

/// `P(Ω > t)` on `t_grid` with the default order.
pub fn ccdf(params: &ModelParams, t_grid: &[f64], cfg: &QuadConfig) -> Result<CcdfCurve> {
    ccdf_with_order(params, t_grid, DEFAULT_GS_ORDER, cfg)
}

/// `P(Ω > t)` on `t_grid`; transform samples are evaluated in parallel.
pub fn ccdf_with_order(
    params: &ModelParams,
    t_grid: &[f64],
    order: usize,
    cfg: &QuadConfig,
) -> Result<CcdfCurve> {
    invert_ccdf(
        |s| {
            s.par_iter()
                .map(|&s| batch_lst(params, s, cfg).map(|v| v.value))
                .collect()
        },
        t_grid,
        order,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_zero() {
        for order in [6, 12, 18] {
            let w = weights(order);
            let sum = w.iter().fold(int(0), |acc, x| acc + x).to_f64().value();
            assert!(sum.abs() < 1e-6, "{order}: {sum}");
        }
        // N = 2: V = (2, −2)
        let w = weights(2);
        assert_eq!(w[0].to_f64().value(), 2.0);
        assert_eq!(w[1].to_f64().value(), -2.0);
    }

    #[test]
    fn exponential_and_erlang() {
        let grid = [0.2, 0.5, 1.0, 2.0, 4.0];
        let exp = invert_ccdf(
            |s| Ok(s.iter().map(|s| 1.0 / (1.0 + s)).collect()),
            &grid,
            12,
        )
        .unwrap();
        for (t, v) in grid.iter().zip(&exp.values) {
            assert!((v - (-t).exp()).abs() < 1e-4, "{t}: {v}");
        }
        let grid = [0.2, 0.5, 1.0, 2.0];
        let erl = invert_ccdf(
            |s| Ok(s.iter().map(|s| (1.0 + s).powi(-2)).collect()),
            &grid,
            12,
        )
        .unwrap();
        for (t, v) in grid.iter().zip(&erl.values) {
            let exact = (1.0 + t) * (-t).exp();
            assert!((v - exact).abs() < 2e-4, "{t}: {v}");
        }
        assert!(exp.shape_violation() < 1e-4);
    }

    #[test]
    fn order_gap_is_reported() {
        // Erlang(2) at t = 4 is past what orders 10 and 12 resolve to the slack
        let r = invert_ccdf(
            |s| Ok(s.iter().map(|s| (1.0 + s).powi(-2)).collect()),
            &[4.0],
            12,
        );
        assert!(matches!(r, Err(Error::InversionUnstable { .. })));
        let r = invert_ccdf(
            |s| Ok(s.iter().map(|s| (1.0 + s).powi(-2)).collect()),
            &[4.0],
            16,
        )
        .unwrap();
        assert!((r.values[0] - 5.0 * (-4.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        let f = |s: &[f64]| Ok(s.iter().map(|s| 1.0 / (1.0 + s)).collect());
        assert!(invert_ccdf(f, &[1.0], 7).is_err());
        assert!(invert_ccdf(f, &[1.0, 0.5], 12).is_err());
        assert!(invert_ccdf(f, &[-1.0], 12).is_err());
    }
}
