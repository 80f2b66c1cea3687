//! Gauss ₂F₁ and Appell F1 for real arguments.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_nodes, Node, QuadConfig};
use crate::special::gamma::{beta_normalizer, gamma};

const SERIES_MAX_TERMS: usize = 20_000;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// `₂F₁(a, b; c; z)` for real `z < 1`.
///
/// Terminating series (a or b a nonpositive integer) are summed exactly,
/// including the case of a nonpositive integer `c` below which the series
/// stops. Otherwise: power series for `|z| ≤ 1/2`, Pfaff's transformation for
/// `z < −1/2`, and for `z > 1/2` the Euler integral (when `c > b > 0` or
/// `c > a > 0`) or the connection formula at `1 − z`.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(Error::domain("2F1 arguments must be finite"));
    }
    if z >= 1.0 {
        return Err(Error::domain(format!("2F1 requires z < 1, got {z}")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let degree = [a, b]
        .into_iter()
        .filter(|&p| is_nonpositive_integer(p))
        .map(|p| (-p) as u64)
        .min();
    if let Some(n) = degree {
        if is_nonpositive_integer(c) && ((-c) as u64) < n {
            return Err(Error::Pole(format!(
                "2F1 series of degree {n} meets the pole of c = {c}"
            )));
        }
        return Ok(terminating(a, b, c, z, n));
    }
    if is_nonpositive_integer(c) {
        return Err(Error::Pole(format!(
            "2F1 with nonterminating series and c = {c}"
        )));
    }
    if z.abs() <= 0.5 {
        return series(a, b, c, z);
    }
    if z < -0.5 {
        // Pfaff: (1−z)^{−a} ₂F₁(a, c−b; c; z/(z−1))
        let w = z / (z - 1.0);
        let pre = (-a * (-z).ln_1p()).exp();
        return Ok(pre * positive_branch(a, c - b, c, w)?);
    }
    positive_branch(a, b, c, z)
}

/// `z ∈ (0, 1)` with a nonterminating series.
fn positive_branch(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if z <= 0.5 {
        return series(a, b, c, z);
    }
    if c > b && b > 0.0 {
        return euler_integral(a, b, c, z);
    }
    if c > a && a > 0.0 {
        return euler_integral(b, a, c, z);
    }
    let gap = c - a - b;
    if gap == gap.round() {
        return Err(Error::convergence(format!(
            "2F1({a}, {b}; {c}; {z}): no applicable transformation (integer c - a - b)"
        )));
    }
    let w = 1.0 - z;
    let t1 = gamma(c) * gamma(gap) * rgamma(c - a) * rgamma(c - b) * series(a, b, 1.0 - gap, w)?;
    let t2 = gamma(c)
        * gamma(-gap)
        * rgamma(a)
        * rgamma(b)
        * w.powf(gap)
        * series(c - a, c - b, 1.0 + gap, w)?;
    let value = t1 + t2;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::convergence(format!(
            "2F1({a}, {b}; {c}; {z}): connection formula overflowed"
        )))
    }
}

fn terminating(a: f64, b: f64, c: f64, z: f64, n: u64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
    }
    sum
}

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if !sum.is_finite() {
            break;
        }
        if term.abs() <= f64::EPSILON * sum.abs() {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::convergence(format!(
        "2F1 series ({a}, {b}; {c}; {z}) did not converge"
    )))
}

/// `Γ(c)/(Γ(b)Γ(c−b)) ∫₀¹ t^{b−1}(1−t)^{c−b−1}(1−zt)^{−a} dt`, `c > b > 0`.
fn euler_integral(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    // t = u^{1/b}: t^{b−1} dt = du / b
    let e = c - b - 1.0;
    let integral = integrate_nodes(
        |n| {
            let (ln_t, one_minus_t) = power_map(n, b);
            let mut f = (-a * (-z * ln_t.exp()).ln_1p()).exp();
            if e != 0.0 {
                f *= one_minus_t.powf(e);
            }
            f
        },
        0.0,
        1.0,
        &tight(),
    )?
    .checked()?;
    Ok(beta_normalizer(b, c) / b * integral)
}

/// For the substitution `t = u^{1/a}` at the node `u`: `(ln t, 1 − t)`, the
/// latter accurate next to `u = 1`.
fn power_map(n: Node, a: f64) -> (f64, f64) {
    let ln_u = if n.to_b < 0.5 {
        (-n.to_b).ln_1p()
    } else {
        n.x.ln()
    };
    let ln_t = ln_u / a;
    (ln_t, -ln_t.exp_m1())
}

fn tight() -> QuadConfig {
    QuadConfig::default()
        .with_rel_tol(1e-13)
        .with_abs_tol(1e-300)
        .with_max_levels(14)
}

/// `₂F₁(a, b; a+1; z) (1−z)^b` for `a > 0`, `z < 1`, evaluated as
/// `∫₀¹ ((1 − z u^{1/a})/(1 − z))^{−b} du`. The scaling keeps the value of
/// order one when `b` is large and `z` is close to 1.
pub fn gauss_2f1_euler_scaled(a: f64, b: f64, z: f64, cfg: &QuadConfig) -> Result<f64> {
    if !(a > 0.0) || !(z < 1.0) {
        return Err(Error::domain(format!(
            "scaled 2F1 requires a > 0 and z < 1 (a = {a}, z = {z})"
        )));
    }
    integrate_nodes(
        |n| {
            let (_, one_minus_t) = power_map(n, a);
            (-b * (z * one_minus_t / (1.0 - z)).ln_1p()).exp()
        },
        0.0,
        1.0,
        cfg,
    )?
    .checked()
}

/// Appell `F1(a; b1, b2; c; x, y)` from its Euler integral
/// `Γ(c)/(Γ(a)Γ(c−a)) ∫₀¹ t^{a−1}(1−t)^{c−a−1}(1−xt)^{−b1}(1−yt)^{−b2} dt`,
/// valid for `c > a > 0`, `x < 1`, `y < 1`.
pub fn appell_f1(a: f64, b1: f64, b2: f64, c: f64, x: f64, y: f64) -> Result<f64> {
    if !(c > a && a > 0.0) {
        return Err(Error::domain(format!(
            "Appell F1 Euler integral requires c > a > 0 (a = {a}, c = {c})"
        )));
    }
    if !(x < 1.0 && y < 1.0) {
        return Err(Error::domain(format!(
            "Appell F1 requires x < 1 and y < 1 (x = {x}, y = {y})"
        )));
    }
    let e = c - a - 1.0;
    let integral = integrate_nodes(
        |n| {
            let (ln_t, one_minus_t) = power_map(n, a);
            let t = ln_t.exp();
            let mut f = (-b1 * (-x * t).ln_1p() - b2 * (-y * t).ln_1p()).exp();
            if e != 0.0 {
                f *= one_minus_t.powf(e);
            }
            f
        },
        0.0,
        1.0,
        &tight(),
    )?
    .checked()?;
    Ok(beta_normalizer(a, c) / a * integral)
}

/// `F1(a; b1, b2; a+1; x, y) (1−x)^{b1} (1−y)^{b2}` for `a > 0`, evaluated as
/// `∫₀¹ ((1−xt)/(1−x))^{−b1} ((1−yt)/(1−y))^{−b2} du` with `t = u^{1/a}`.
pub fn appell_f1_scaled(a: f64, b1: f64, b2: f64, x: f64, y: f64, cfg: &QuadConfig) -> Result<f64> {
    if !(a > 0.0) || !(x < 1.0 && y < 1.0) {
        return Err(Error::domain(format!(
            "scaled Appell F1 requires a > 0, x < 1, y < 1 (a = {a}, x = {x}, y = {y})"
        )));
    }
    integrate_nodes(
        |n| {
            let (_, one_minus_t) = power_map(n, a);
            let gx = (x * one_minus_t / (1.0 - x)).ln_1p();
            let gy = (y * one_minus_t / (1.0 - y)).ln_1p();
            (-b1 * gx - b2 * gy).exp()
        },
        0.0,
        1.0,
        cfg,
    )?
    .checked()
}
