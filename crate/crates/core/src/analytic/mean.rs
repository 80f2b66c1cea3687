//! Mean batch sojourn from the first-order term of the expansion at `s = 0`.
//!
//! With `U = ρ+q`, `σ = ρ/(1−ρ−q)`, `α = (1−ρ−q)/ρ`, `γ = (1−q)/ρ`:
//!
//! * `E^{(1)}(q,v) = −Q_0/((U^+−U^-)P(v)) ∫₀^U [Ψ0(Θ(x(1−ξ)R(ξ)X(v))) − Ψ0(Θ(xR(ξ)X(v)))]
//!   (q−ξ)/((U−ξ)(1−ξ)²) dξ`;
//! * `F^{(1)}(U,v) = A(v) + Ω2(v) − (1−v+ρ)/(ρ(q−v+ρ)) E^{(1)}(q,v)`, where `A` carries
//!   the Appell F1 and ₂F₁ terms and `Ω2` the weighted integral of `E^{(1)}`;
//! * `E[Ω] = K [(1−q)²U/(U−q²) E^{(1)}(q,q) + q³/((1−q)(U−q²)) − ρ²(A(q) + Ω2(q))]`,
//!   `K = (1−ρ−q)/(qU)`.

use crate::analytic::transform::AuxPolynomials;
use crate::analytic::ErrorSlot;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::{integrate_nodes, QuadConfig};
use crate::special::{appell_f1_scaled, gauss_2f1_euler_scaled};

/// Per-parameter constants of the mean pipeline.
#[derive(Debug, Clone, Copy)]
pub struct MeanPipeline {
    pub params: ModelParams,
    aux: AuxPolynomials,
    cfg: QuadConfig,
    sigma: f64,
    alpha: f64,
    gamma: f64,
    /// Appell F1 `(a; b1, 2; a+1)`.
    f1_a: f64,
    f1_b1: f64,
    /// ₂F₁ `(a2, b1; a2+1)`.
    f21_a: f64,
}

impl MeanPipeline {
    pub fn new(params: &ModelParams, cfg: &QuadConfig) -> Result<Self> {
        let (rho, q) = (params.rho(), params.q());
        let sp = params.spectral(0.0)?;
        let f1_a = (1.0 - q + rho) / rho;
        let f1_c = (1.0 - q + 2.0 * rho) / rho;
        let f21_a = (1.0 - q) / rho;
        let f21_c = (1.0 - q + rho) / rho;
        // both hypergeometric terms need c = a + 1 for the scaled Euler integrals
        for (a, c) in [(f1_a, f1_c), (f21_a, f21_c)] {
            if ((c - a) - 1.0).abs() > 1e-9 * c.abs().max(1.0) {
                return Err(Error::domain(format!(
                    "hypergeometric parameters a = {a}, c = {c} violate c = a + 1"
                )));
            }
        }
        Ok(Self {
            params: *params,
            aux: AuxPolynomials::new(&sp),
            cfg: *cfg,
            sigma: -sp.c_plus,
            alpha: params.stability_margin() / rho,
            gamma: f21_a,
            f1_a,
            f1_b1: params.stability_margin() / rho,
            f21_a,
        })
    }

    fn u(&self) -> f64 {
        self.params.rho() + self.params.q()
    }

    /// `E^{(1)}(q,v)`.
    ///
    /// The substitution `ξ = U(1 − t^{1/σ})` absorbs the `(U−ξ)^{σ−1}` endpoint
    /// behaviour and gives `R(ξ) = t (1−ξ)^{C^+−1}` exactly.
    pub fn e1(&self, v: f64) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let sp = &self.aux.sp;
        let ctx = &self.aux.ctx;
        let scale = self.aux.theta_scale(v)?;
        let p = sp.p(v);
        if p == 0.0 {
            return Err(Error::Pole(format!("P(v) vanishes at v = {v}")));
        }
        let (u, q, sigma) = (self.u(), self.params.q(), self.sigma);
        let slot = ErrorSlot::default();
        let r = integrate_nodes(
            |n| {
                let t = n.x;
                let gap = (t.ln() / sigma).exp();
                let xi = u * (1.0 - gap);
                let one_minus_xi = (1.0 - u) + u * gap;
                let r = t * ((sp.c_plus - 1.0) * one_minus_xi.ln()).exp();
                let w = scale * r;
                let diff = ctx
                    .delta(w * one_minus_xi)
                    .and_then(|d| ctx.psi0_delta(d))
                    .and_then(|a| Ok(a - ctx.psi0_delta(ctx.delta(w)?)?));
                slot.value(diff) * (q - xi) / (one_minus_xi * one_minus_xi * t)
            },
            0.0,
            1.0,
            &self.cfg,
        );
        let integral = slot.finish(r.and_then(|r| r.checked()))? / sigma;
        Ok(-self.aux.q0(v) / ((sp.u_plus - sp.u_minus) * p) * integral)
    }

    /// Appell F1 and ₂F₁ contribution to `F^{(1)}(U, v)`, with its prefactor
    /// `v/(1−q−ρ)² (1−v/U)^{(1−q−2ρ)/ρ}` folded into the scaled integrals.
    pub fn omega1_term(&self, v: f64) -> Result<f64> {
        let (rho, q) = (self.params.rho(), self.params.q());
        let u = self.u();
        let x = v / u;
        let m1 = appell_f1_scaled(self.f1_a, self.f1_b1, 2.0, x, v, &self.cfg)?;
        let z = v * (1.0 - q - rho) / ((1.0 - v) * u);
        let m2 = gauss_2f1_euler_scaled(self.f21_a, self.f1_b1, z, &self.cfg)?;
        let margin = 1.0 - q - rho;
        let first = v / (1.0 - q + rho) * m1 / ((1.0 - x) * (1.0 - v) * (1.0 - v));
        let second = m2 / ((1.0 - q) * u * (1.0 - x) * (1.0 - v));
        Ok(v / (margin * margin) * (first - second))
    }

    /// `Ω2(v) = (1−q)U/ρ² (U−v)^{−2} α^{−1} ∫₀¹ (1−ξ) ((U−v)/(U−ξ))^γ E^{(1)}(q,ξ) du`,
    /// `ξ = v u^{1/α}`.
    pub fn omega2(&self, v: f64) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let (rho, q) = (self.params.rho(), self.params.q());
        let u = self.u();
        let ln_v = v.ln();
        let slot = ErrorSlot::default();
        let outer_cfg = self.cfg;
        let r = integrate_nodes(
            |n| {
                let ln_u = if n.to_b < 0.5 {
                    (-n.to_b).ln_1p()
                } else {
                    n.x.ln()
                };
                let xi = (ln_v + ln_u / self.alpha).exp();
                let weight = (self.gamma * ((u - v) / (u - xi)).ln()).exp();
                (1.0 - xi) * weight * slot.value(self.e1(xi))
            },
            0.0,
            1.0,
            &outer_cfg,
        );
        let integral = slot.finish(r.and_then(|r| r.checked()))?;
        Ok((1.0 - q) * u / (rho * rho) / ((u - v) * (u - v)) / self.alpha * integral)
    }

    /// `F^{(1)}(ρ+q, v)` for `0 ≤ v < ρ+q`.
    pub fn f1_at_rho_plus_q(&self, v: f64) -> Result<f64> {
        let (rho, q) = (self.params.rho(), self.params.q());
        if !(v >= 0.0 && v < self.u()) {
            return Err(Error::domain(format!(
                "F1(rho+q, v) needs 0 <= v < rho+q, got v = {v}"
            )));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let e1 = self.e1(v)?;
        Ok(self.omega1_term(v)? + self.omega2(v)? - (1.0 - v + rho) / (rho * (q - v + rho)) * e1)
    }

    /// `E[Ω]`.
    pub fn mean(&self) -> Result<f64> {
        let (rho, q) = (self.params.rho(), self.params.q());
        let u = self.u();
        let e1 = self.e1(q)?;
        let omega = rho * rho * (self.omega1_term(q)? + self.omega2(q)?);
        let k = self.params.stability_margin() / (q * u);
        let d = u - q * q;
        let mean = k * ((1.0 - q).powi(2) * u / d * e1 + q.powi(3) / ((1.0 - q) * d) - omega);
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::convergence(format!(
                "mean pipeline produced a non-positive value {mean}"
            )));
        }
        Ok(mean)
    }
}

/// `E^{(1)}(q,v)`.
pub fn e1_qv(params: &ModelParams, v: f64, cfg: &QuadConfig) -> Result<f64> {
    MeanPipeline::new(params, cfg)?.e1(v)
}

/// `F^{(1)}(ρ+q, v)`.
pub fn f1_at_rho_plus_q(params: &ModelParams, v: f64, cfg: &QuadConfig) -> Result<f64> {
    MeanPipeline::new(params, cfg)?.f1_at_rho_plus_q(v)
}

/// Mean batch sojourn time `E[Ω]`.
pub fn mean_batch_sojourn(params: &ModelParams, cfg: &QuadConfig) -> Result<f64> {
    MeanPipeline::new(params, cfg)?.mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipeline(rho: f64, q: f64) -> MeanPipeline {
        MeanPipeline::new(&ModelParams::new(rho, q).unwrap(), &QuadConfig::default()).unwrap()
    }

    #[test]
    fn e1_reference_value() {
        let p = pipeline(0.5, 0.3);
        assert_eq!(p.e1(0.0).unwrap(), 0.0);
        let e1 = p.e1(0.3).unwrap();
        assert!((e1 + 1.6762361).abs() < 1e-6, "{e1}");
    }

    #[test]
    fn mean_reference_values() {
        for (rho, q, expected) in [
            (0.5, 0.3, 5.5777011),
            (0.3, 0.2, 2.064403),
            (0.2, 0.5, 3.697744),
        ] {
            let m = pipeline(rho, q).mean().unwrap();
            assert!((m - expected).abs() < 1e-5 * expected, "{rho} {q}: {m}");
        }
    }

    #[test]
    fn f1_vanishes_at_zero_and_rejects_upper_end() {
        let p = pipeline(0.5, 0.3);
        assert_eq!(p.f1_at_rho_plus_q(0.0).unwrap(), 0.0);
        assert!(p.f1_at_rho_plus_q(0.8).is_err());
        let small = p.f1_at_rho_plus_q(1e-6).unwrap();
        assert!(small.abs() < 1e-4, "{small}");
    }
}
