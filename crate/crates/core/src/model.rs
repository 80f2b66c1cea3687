//! Model parameters, spectral data of `P(s; u)` and the stationary law.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::theta::ThetaContext;

/// Batch arrival rate `ρ` and geometric batch parameter `q`, with the
/// service rate normalized to 1. `P(B = b) = (1−q) q^{b−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    rho: f64,
    q: f64,
}

/// Validates `(ρ, q)`. Never clamps.
pub fn validate_params(rho: f64, q: f64) -> Result<ModelParams> {
    ModelParams::new(rho, q)
}

impl ModelParams {
    pub fn new(rho: f64, q: f64) -> Result<Self> {
        if !rho.is_finite() || rho <= 0.0 {
            return Err(Error::domain(format!("rho must be positive, got {rho}")));
        }
        if !q.is_finite() || q <= 0.0 || q >= 1.0 {
            return Err(Error::domain(format!("q must lie in (0, 1), got {q}")));
        }
        if 1.0 - rho - q <= 0.0 {
            return Err(Error::StabilityViolation { rho, q });
        }
        Ok(Self { rho, q })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `1 − ρ − q`.
    pub fn stability_margin(&self) -> f64 {
        1.0 - self.rho - self.q
    }

    /// `P(B = b)`.
    pub fn batch_pmf(&self, b: u32) -> f64 {
        if b == 0 {
            0.0
        } else {
            (1.0 - self.q) * self.q.powi(b as i32 - 1)
        }
    }

    /// `E[B] = 1/(1−q)`.
    pub fn mean_batch_size(&self) -> f64 {
        1.0 / (1.0 - self.q)
    }

    /// Mean sojourn time of a single job, `1/(1−ρ−q)` (Little's law).
    pub fn mean_job_sojourn(&self) -> f64 {
        1.0 / self.stability_margin()
    }

    pub fn spectral(&self, s: f64) -> Result<SpectralData> {
        SpectralData::new(*self, s)
    }

    pub fn stationary(&self) -> StationaryLaw {
        StationaryLaw { params: *self }
    }
}

/// Roots `U^- < U^+` of `P(s; u) = u² − (s+1+ρ+q)u + sq + ρ + q` and the
/// derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralData {
    pub rho: f64,
    pub q: f64,
    pub s: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// `1 − U^-/U^+`.
    pub x: f64,
}

impl SpectralData {
    pub fn new(params: ModelParams, s: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::domain(format!(
                "Laplace variable must be a finite s >= 0, got {s}"
            )));
        }
        let (rho, q) = (params.rho, params.q);
        let (u_minus, u_plus) = if s == 0.0 {
            (rho + q, 1.0)
        } else {
            let b = s + 1.0 + rho + q;
            let c = s * q + rho + q;
            let disc = (b * b - 4.0 * c).max(0.0);
            let u_plus = 0.5 * (b + disc.sqrt());
            (c / u_plus, u_plus)
        };
        let c_plus = if s == 0.0 {
            -rho / (1.0 - q - rho)
        } else {
            -(u_minus - q) / (u_plus - u_minus)
        };
        Ok(Self {
            rho,
            q,
            s,
            u_minus,
            u_plus,
            c_plus,
            c_minus: 1.0 - c_plus,
            x: 1.0 - u_minus / u_plus,
        })
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            rho: self.rho,
            q: self.q,
        }
    }

    /// `P(s; u)` in factored form, accurate next to either root.
    pub fn p(&self, u: f64) -> f64 {
        (u - self.u_minus) * (u - self.u_plus)
    }

    /// `P(s; u)` from the expanded coefficients.
    pub fn p_expanded(&self, u: f64) -> f64 {
        u * u - (self.s + 1.0 + self.rho + self.q) * u + self.s * self.q + self.rho + self.q
    }

    /// `R(t) = (1−t/U^-)^{C^-−1} (1−t/U^+)^{C^+−1}` for `t ∈ [0, U^-]`.
    pub fn kernel_r(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.u_minus).contains(&t) {
            return Err(Error::domain(format!(
                "kernel R evaluated at t = {t} outside [0, {}]",
                self.u_minus
            )));
        }
        Ok(self.r(t))
    }

    /// Unchecked `R(t)` in log space; valid for `t < U^+`, and `t ≤ U^-`
    /// unless the caller is continuing across the cut on purpose.
    pub(crate) fn r(&self, t: f64) -> f64 {
        if t == self.u_minus {
            return 0.0;
        }
        self.r_from_gap(1.0 - t / self.u_minus, t)
    }

    /// `R(t)` with `1 − t/U^-` supplied by the caller, which keeps full
    /// relative accuracy when `t` sits next to `U^-`.
    pub(crate) fn r_from_gap(&self, gap: f64, t: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        self.ln_r_from_gap(gap, t).exp()
    }

    /// `ln R(t)` with `gap = 1 − t/U^-` (which must be positive).
    pub(crate) fn ln_r_from_gap(&self, gap: f64, t: f64) -> f64 {
        (self.c_minus - 1.0) * gap.ln() + (self.c_plus - 1.0) * (-t / self.u_plus).ln_1p()
    }

    /// Maximum of `R` on `[0, U^-]`, attained at `t = q`.
    pub fn max_r(&self) -> f64 {
        self.r(self.q.min(self.u_minus))
    }

    /// Characteristic curve `Z(u, v; t)` through `(u, v)`.
    pub fn characteristic_z(&self, u: f64, v: f64, t: f64) -> Result<f64> {
        if !(u > 0.0 && u <= self.u_minus) {
            return Err(Error::domain(format!("u = {u} outside (0, U^-]")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("v = {v} outside [0, 1]")));
        }
        if !(0.0..=self.u_minus).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, U^-]")));
        }
        if t == u {
            return Ok(v);
        }
        let ru = self.r(u);
        if ru == 0.0 {
            return Err(Error::domain(
                "characteristic curve through u = U^- is degenerate",
            ));
        }
        Ok(z_from_ratio(v, self.r(t) / ru))
    }

    /// `Q_0(v) = U^+ U^- − q v`.
    pub fn q0(&self, v: f64) -> f64 {
        self.u_plus * self.u_minus - self.q * v
    }

    /// `Q_1(v)`, the quadratic appearing in `L_1`.
    pub fn q1(&self, v: f64) -> f64 {
        let pp = self.u_plus * self.u_minus;
        let ss = self.u_plus + self.u_minus;
        let q = self.q;
        (q * q - pp) * v * v + 2.0 * pp * (ss - 2.0 * q) * v - pp * ((ss - q).powi(2) - pp)
    }

    /// `X(v) = −U^+ v / (P(v) R(v))`.
    pub fn x_of_v(&self, v: f64) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        let gap = 1.0 - v / self.u_minus;
        -self.u_plus * v / (self.p(v) * self.r_signed(gap, v))
    }

    /// `X(v) = v/(v−U^-) · ((1−v/U^-)/(1−v/U^+))^{C^+}`.
    pub fn x_of_v_power_form(&self, v: f64) -> f64 {
        let ratio = (1.0 - v / self.u_minus) / (1.0 - v / self.u_plus);
        v / (v - self.u_minus) * ratio.powf(self.c_plus)
    }

    /// `R` continued to `v > U^-` along the real axis by taking `|1−v/U^-|`,
    /// matching the sign convention of the power form of `X`.
    fn r_signed(&self, gap: f64, v: f64) -> f64 {
        ((self.c_minus - 1.0) * gap.abs().ln() + (self.c_plus - 1.0) * (-v / self.u_plus).ln_1p())
            .exp()
    }

    /// `ν = 1 − C^+` and the radius of the analytic branch of `θ(ν; ·)`.
    pub fn theta_context(&self) -> ThetaContext {
        ThetaContext::new(1.0 - self.c_plus).expect("1 - C^+ > 1 for s >= 0")
    }
}

/// `v r / ((1 − v) + v r)`.
pub(crate) fn z_from_ratio(v: f64, r: f64) -> f64 {
    let num = v * r;
    let den = (1.0 - v) + num;
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Stationary number of jobs found by an arriving batch:
/// `P(N = 0) = 1 − ρ/(1−q)`, `P(N = n) = P(N = 0) ρ (ρ+q)^{n−1}` for `n ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryLaw {
    pub params: ModelParams,
}

impl StationaryLaw {
    pub fn p0(&self) -> f64 {
        1.0 - self.params.rho / (1.0 - self.params.q)
    }

    pub fn pmf(&self, n: u64) -> f64 {
        let p0 = self.p0();
        if n == 0 {
            p0
        } else {
            let ratio = self.params.rho + self.params.q;
            p0 * self.params.rho * ((n - 1) as f64 * ratio.ln()).exp()
        }
    }

    /// `P(N > n)`.
    pub fn tail(&self, n: u64) -> f64 {
        let ratio = self.params.rho + self.params.q;
        // Σ_{k>n} p0 ρ r^{k−1} = p0 ρ r^n / (1−r)
        self.p0() * self.params.rho * ((n as f64) * ratio.ln()).exp() / (1.0 - ratio)
    }

    /// `E[N] = ρ / ((1−q)(1−ρ−q))`.
    pub fn mean(&self) -> f64 {
        self.params.rho / ((1.0 - self.params.q) * self.params.stability_margin())
    }
}

/// `P(N = n)` for the stationary law of `params`.
pub fn stationary_pmf(params: &ModelParams, n: u64) -> f64 {
    params.stationary().pmf(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> ModelParams {
        ModelParams::new(0.5, 0.3).unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(validate_params(0.5, 0.3).is_ok());
        assert!(matches!(
            validate_params(0.8, 0.3),
            Err(Error::StabilityViolation { .. })
        ));
        assert!(matches!(validate_params(0.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(validate_params(0.0, 0.3), Err(Error::Domain(_))));
        assert!(matches!(
            validate_params(0.5, 0.5),
            Err(Error::StabilityViolation { .. })
        ));
    }

    #[test]
    fn spectral_at_zero() {
        let sp = reference().spectral(0.0).unwrap();
        assert!((sp.u_minus - 0.8).abs() < 1e-15);
        assert_eq!(sp.u_plus, 1.0);
        assert!((sp.c_plus + 2.5).abs() < 1e-14);
        assert!((sp.c_minus - 3.5).abs() < 1e-14);
    }

    #[test]
    fn spectral_at_one() {
        let sp = reference().spectral(1.0).unwrap();
        // u² − 2.8u + 1.1
        let disc: f64 = 2.8 * 2.8 - 4.4;
        let up = 0.5 * (2.8 + disc.sqrt());
        assert!((sp.u_plus - up).abs() < 1e-14);
        assert!((sp.u_minus - 1.1 / up).abs() < 1e-14);
        assert!((sp.u_minus - 0.472638).abs() < 1e-6);
        assert!((sp.u_plus - 2.327362).abs() < 1e-6);
        assert!(sp.p_expanded(sp.u_minus).abs() < 1e-12);
        assert!(sp.p_expanded(sp.u_plus).abs() < 1e-12);
    }

    #[test]
    fn negative_s_rejected() {
        assert!(reference().spectral(-0.1).is_err());
    }

    #[test]
    fn kernel_examples() {
        let sp = reference().spectral(0.0).unwrap();
        assert_eq!(sp.kernel_r(0.0).unwrap(), 1.0);
        assert_eq!(sp.kernel_r(sp.u_minus).unwrap(), 0.0);
        let direct = 0.5f64.powf(2.5) * 0.6f64.powf(-3.5);
        assert!((sp.kernel_r(0.4).unwrap() - direct).abs() < 1e-13);
        assert!((direct - 1.0565636).abs() < 1e-7);
        // R(ξ) = (1−ξ)^{-1} ((1−ξ)/(1−ξ/(ρ+q)))^{C^+}
        let xi: f64 = 0.4;
        let other = (1.0 - xi).recip() * ((1.0 - xi) / (1.0 - xi / 0.8)).powf(sp.c_plus);
        assert!((direct - other).abs() < 1e-13);
        assert!(sp.kernel_r(0.81).is_err());
        assert!(sp.kernel_r(-0.01).is_err());
    }

    #[test]
    fn kernel_maximum_at_q() {
        let sp = reference().spectral(1.0).unwrap();
        let m = sp.max_r();
        for i in 0..=200 {
            let t = sp.u_minus * i as f64 / 200.0;
            assert!(sp.r(t) <= m * (1.0 + 1e-14));
        }
    }

    #[test]
    fn characteristic_examples() {
        let sp = reference().spectral(1.0).unwrap();
        let u = 0.3;
        assert_eq!(sp.characteristic_z(u, 0.4, u).unwrap(), 0.4);
        assert_eq!(sp.characteristic_z(u, 0.0, 0.1).unwrap(), 0.0);
        assert_eq!(sp.characteristic_z(u, 1.0, 0.1).unwrap(), 1.0);
        assert!(sp.characteristic_z(sp.u_minus, 0.5, 0.1).is_err());
    }

    #[test]
    fn x_forms_agree() {
        for s in [0.0, 0.5, 1.0, 2.0] {
            let sp = reference().spectral(s).unwrap();
            for i in 1..=20 {
                let v = 0.9 * sp.u_minus * i as f64 / 20.0;
                let a = sp.x_of_v(v);
                let b = sp.x_of_v_power_form(v);
                assert!(((a - b) / b).abs() < 1e-12, "s={s} v={v}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stationary_examples() {
        let law = reference().stationary();
        assert!((law.pmf(0) - 2.0 / 7.0).abs() < 1e-15);
        assert!((law.pmf(2) - 2.0 / 7.0 * 0.5 * 0.8).abs() < 1e-15);
        let head: f64 = (0..50).map(|n| law.pmf(n)).sum();
        assert!((head + law.tail(49) - 1.0).abs() < 1e-14);
        let mean: f64 = (1..2000).map(|n| n as f64 * law.pmf(n)).sum();
        assert!(((mean - law.mean()) / law.mean()).abs() < 1e-12);
    }

    fn stable_params() -> impl Strategy<Value = ModelParams> {
        (0.01f64..0.95, 0.01f64..0.95)
            .prop_filter("stable", |(r, q)| 1.0 - r - q > 0.01)
            .prop_map(|(r, q)| ModelParams::new(r, q).unwrap())
    }

    proptest! {
        #[test]
        fn roots_are_roots(params in stable_params(), si in 0usize..6) {
            let s = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0][si];
            let sp = params.spectral(s).unwrap();
            prop_assert!(sp.p_expanded(sp.u_minus).abs() <= 1e-12 * (1.0 + s));
            prop_assert!(sp.p_expanded(sp.u_plus).abs() <= 1e-12 * (1.0 + s));
            prop_assert!(sp.u_minus < sp.u_plus);
            if s > 0.0 {
                prop_assert!(params.q() < sp.u_minus && sp.u_minus < 1.0 && 1.0 < sp.u_plus);
            }
            prop_assert!(sp.c_plus < 0.0 && sp.c_minus > 1.0);
            prop_assert!((sp.c_plus + sp.c_minus - 1.0).abs() <= 1e-15);
            prop_assert!(sp.x > 0.0 && sp.x < 1.0);
        }

        #[test]
        fn kernel_satisfies_ode(params in stable_params(), si in 0usize..4) {
            let s = [0.0, 0.5, 1.0, 2.0][si];
            let sp = params.spectral(s).unwrap();
            let h = 1e-6 * sp.u_minus;
            for i in 1..=20 {
                let t = sp.u_minus * i as f64 / 21.0;
                let d = (sp.r(t + h) - sp.r(t - h)) / (2.0 * h);
                let rhs = (params.q() - t) * sp.r(t) / sp.p(t);
                prop_assert!((d - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()), "t={} d={} rhs={}", t, d, rhs);
            }
        }

        #[test]
        fn characteristic_monotone_in_v(params in stable_params(), a in 0.05f64..0.95, b in 0.0f64..1.0) {
            let sp = params.spectral(1.0).unwrap();
            let u = a * sp.u_minus;
            let t = b * sp.u_minus;
            let mut last = -1.0;
            for i in 0..=20 {
                let z = sp.characteristic_z(u, i as f64 / 20.0, t).unwrap();
                prop_assert!((0.0..=1.0).contains(&z));
                prop_assert!(z >= last);
                last = z;
            }
        }

        #[test]
        fn stationary_mean_closed_form(params in stable_params()) {
            let law = params.stationary();
            let r = params.rho() + params.q();
            let n_terms = ((-40.0) / r.log10()).ceil() as u64 + 50;
            let mut acc = 0.0;
            for n in 1..n_terms.min(200_000) {
                acc += n as f64 * law.pmf(n);
            }
            prop_assert!(((acc - law.mean()) / law.mean()).abs() <= 1e-12);
        }
    }
}
