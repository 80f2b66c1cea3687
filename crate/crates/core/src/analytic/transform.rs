//! `E(q,v)`, `F(u,v)` and the transform of the batch sojourn time.

use crate::analytic::{ErrorSlot, TransformValue};
use crate::error::{Error, Result};
use crate::model::{z_from_ratio, ModelParams, SpectralData};
use crate::quadrature::{integrate_nodes, integrate_vec, QuadConfig};
use crate::special::ThetaContext;

/// Below this distance `F(u,v)` is extrapolated instead of evaluated.
pub const REMOVABLE_GAP: f64 = 1e-6;
const EXTRAPOLATION_STEP: f64 = 1e-4;

/// Auxiliary functions `Q_0`, `Q_1`, `X`, `L_1`, `L_2` at fixed spectral data.
#[derive(Debug, Clone, Copy)]
pub struct AuxPolynomials {
    pub sp: SpectralData,
    pub ctx: ThetaContext,
}

impl AuxPolynomials {
    pub fn new(sp: &SpectralData) -> Self {
        Self {
            sp: *sp,
            ctx: sp.theta_context(),
        }
    }

    pub fn q0(&self, v: f64) -> f64 {
        self.sp.q0(v)
    }

    pub fn q1(&self, v: f64) -> f64 {
        self.sp.q1(v)
    }

    pub fn x(&self, v: f64) -> f64 {
        self.sp.x_of_v(v)
    }

    pub fn x_power_form(&self, v: f64) -> f64 {
        self.sp.x_of_v_power_form(v)
    }

    /// `x X(v)`, after checking that the largest Θ argument
    /// `x X(v) max R` stays inside the analytic branch.
    pub(crate) fn theta_scale(&self, v: f64) -> Result<f64> {
        let sp = &self.sp;
        if v >= sp.u_plus || (v - sp.u_minus).abs() <= 4.0 * f64::EPSILON * sp.u_minus {
            return Err(Error::Pole(format!("X(v) is singular at v = {v}")));
        }
        let scale = sp.x * self.x(v);
        if scale > 0.0 {
            let w = scale * sp.max_r();
            if w >= self.ctx.radius {
                return Err(Error::Radius {
                    w,
                    radius: self.ctx.radius,
                });
            }
        }
        Ok(scale)
    }

    /// `[∫ Ψ0(Θ(xR(ξ)X(v)))/(1−ξ) dξ, ∫ Ψ1(Θ(xR(ξ)X(v)))/(1−ξ) dξ]` over `[0, U^-]`.
    pub fn psi_integrals(&self, v: f64, cfg: &QuadConfig) -> Result<[f64; 2]> {
        if v == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let scale = self.theta_scale(v)?;
        let sp = &self.sp;
        let slot = ErrorSlot::default();
        let r = integrate_vec(
            |n| {
                let xi = n.x;
                let w = scale * sp.ln_r_from_gap(n.to_b / sp.u_minus, xi).exp();
                let d = match self.ctx.delta(w) {
                    Ok(d) => d,
                    Err(e) => return [slot.value(Err(e)); 2],
                };
                let inv = 1.0 / (1.0 - xi);
                [
                    slot.value(self.ctx.psi0_delta(d)) * inv,
                    slot.value(self.ctx.psi1_delta(d)) * inv,
                ]
            },
            0.0,
            sp.u_minus,
            cfg,
        );
        slot.finish(r.and_then(|r| r.checked()))
    }

    /// `∫ Ψ0(Θ(xR(ξ)X(v)))/(1−ξ) dξ` alone.
    pub fn psi0_integral(&self, v: f64, cfg: &QuadConfig) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let scale = self.theta_scale(v)?;
        let sp = &self.sp;
        let slot = ErrorSlot::default();
        let r = integrate_nodes(
            |n| {
                let xi = n.x;
                let w = scale * sp.ln_r_from_gap(n.to_b / sp.u_minus, xi).exp();
                let psi = self.ctx.delta(w).and_then(|d| self.ctx.psi0_delta(d));
                slot.value(psi) / (1.0 - xi)
            },
            0.0,
            sp.u_minus,
            cfg,
        );
        slot.finish(r.and_then(|r| r.checked()))
    }

    fn p_checked(&self, v: f64) -> Result<f64> {
        let p = self.sp.p(v);
        if p == 0.0 {
            return Err(Error::Pole(format!("P(v) vanishes at v = {v}")));
        }
        Ok(p)
    }

    /// `E(q,v)`.
    pub fn e_qv(&self, v: f64, cfg: &QuadConfig) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let p = self.p_checked(v)?;
        let sp = &self.sp;
        Ok(self.q0(v) / ((sp.u_plus - sp.u_minus) * p) * self.psi0_integral(v, cfg)?)
    }

    /// `L_1(u,v) + L_2(v)` from precomputed Ψ integrals at `v`.
    fn l_sum(&self, u: f64, v: f64, ints: [f64; 2]) -> Result<f64> {
        let sp = &self.sp;
        let p = self.p_checked(v)?;
        let q0 = self.q0(v);
        let gap = sp.u_plus - sp.u_minus;
        let l1 = (u * q0 / p + v * self.q1(v) / (p * p)) * ints[0] / gap;
        let l2 = (sp.u_plus + sp.u_minus - sp.q - v) * q0 * q0 / (gap * p * p) * ints[1];
        Ok(l1 + l2)
    }

    /// `L_1(u,v)`.
    pub fn l1(&self, u: f64, v: f64, cfg: &QuadConfig) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let sp = &self.sp;
        let p = self.p_checked(v)?;
        let i0 = self.psi0_integral(v, cfg)?;
        Ok((u * self.q0(v) / p + v * self.q1(v) / (p * p)) * i0 / (sp.u_plus - sp.u_minus))
    }

    /// `L_2(v)`.
    pub fn l2(&self, v: f64, cfg: &QuadConfig) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let sp = &self.sp;
        let p = self.p_checked(v)?;
        let i1 = self.psi_integrals(v, cfg)?[1];
        let q0 = self.q0(v);
        Ok((sp.u_plus + sp.u_minus - sp.q - v) * q0 * q0 / ((sp.u_plus - sp.u_minus) * p * p) * i1)
    }

    /// `F(u,v)` for `0 < u < 1`, `|v| < u`, `v < U^-`.
    ///
    /// Along the characteristic through `(u, v/u)` the integral runs over
    /// `y = u + τ(U^- − u)`, `τ ∈ [0, 1]`, where
    /// `R(y)/R(u) = (1−τ)^{C^-−1} ((U^+−y)/(U^+−u))^{C^+−1}`.
    pub fn f_uv(&self, u: f64, v: f64, cfg: &QuadConfig) -> Result<f64> {
        let sp = &self.sp;
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!(
                "F(u,v) needs 0 < u < 1, got u = {u}"
            )));
        }
        if !(v.abs() < u) || !(v < sp.u_minus) {
            return Err(Error::domain(format!(
                "F(u,v) needs |v| < u and v < U^- = {}, got u = {u}, v = {v}",
                sp.u_minus
            )));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        if (u - v).abs() < REMOVABLE_GAP {
            let a = self.f_uv(u, v - EXTRAPOLATION_STEP, cfg)?;
            let b = self.f_uv(u, v - 2.0 * EXTRAPOLATION_STEP, cfg)?;
            return Ok(2.0 * a - b);
        }
        let w = v / u;
        let (um, up) = (sp.u_minus, sp.u_plus);
        let slot = ErrorSlot::default();
        let r = integrate_nodes(
            |n| {
                let tau = n.x;
                let y = u + tau * (um - u);
                let ln_r = (sp.c_minus - 1.0) * n.to_b.ln()
                    + (sp.c_plus - 1.0) * ((up - y) / (up - u)).ln();
                let z = z_from_ratio(w, ln_r.exp());
                let vz = y * z;
                if vz == 0.0 {
                    return 0.0;
                }
                let rest = self
                    .psi_integrals(vz, cfg)
                    .and_then(|ints| self.l_sum(y, vz, ints));
                (1.0 - z) * (z / (1.0 - y) + slot.value(rest) / y)
            },
            0.0,
            1.0,
            cfg,
        );
        let integral = slot.finish(r.and_then(|r| r.checked()))?;
        Ok(u / ((u - v) * (up - u)) * integral)
    }

    /// `F(s;0,v) = (v + (v−s−ρ−1)E(q,v))/(qv − ρ − q − sq)`.
    pub fn f_at_zero(&self, v: f64, cfg: &QuadConfig) -> Result<f64> {
        let sp = &self.sp;
        let e = self.e_qv(v, cfg)?;
        Ok((v + (v - sp.s - sp.rho - 1.0) * e) / (sp.q * v - sp.rho - sp.q - sp.s * sp.q))
    }
}

/// `E(q,v)` at the given spectral data.
pub fn e_qv(sp: &SpectralData, v: f64, cfg: &QuadConfig) -> Result<f64> {
    AuxPolynomials::new(sp).e_qv(v, cfg)
}

/// `F(u,v)` at the given spectral data.
pub fn f_uv(sp: &SpectralData, u: f64, v: f64, cfg: &QuadConfig) -> Result<f64> {
    AuxPolynomials::new(sp).f_uv(u, v, cfg)
}

/// `F(s;0,v)`.
pub fn f_at_zero(sp: &SpectralData, v: f64, cfg: &QuadConfig) -> Result<f64> {
    AuxPolynomials::new(sp).f_at_zero(v, cfg)
}

/// `E[exp(−sΩ)]`; exactly 1 at `s = 0`.
pub fn batch_lst(params: &ModelParams, s: f64, cfg: &QuadConfig) -> Result<TransformValue> {
    if s == 0.0 {
        return Ok(TransformValue { s, value: 1.0 });
    }
    batch_lst_analytic(params, s, cfg)
}

/// `E[exp(−sΩ)]` from the closed form
/// `(1−ρ−q)/(q(ρ+q)) · (ρ² F(ρ+q,q) + (q³ + ρ(qs+ρ+2q(1−q)) E(q,q))/(q+ρ+qs−q²))`,
/// also at `s = 0`.
pub fn batch_lst_analytic(
    params: &ModelParams,
    s: f64,
    cfg: &QuadConfig,
) -> Result<TransformValue> {
    let sp = params.spectral(s)?;
    let aux = AuxPolynomials::new(&sp);
    let (rho, q) = (params.rho(), params.q());
    let f = aux.f_uv(rho + q, q, cfg)?;
    let e = aux.e_qv(q, cfg)?;
    let k = params.stability_margin() / (q * (rho + q));
    let value = k
        * (rho * rho * f
            + (q.powi(3) + rho * (q * s + rho + 2.0 * q * (1.0 - q)) * e)
                / (q + rho + q * s - q * q));
    Ok(TransformValue { s, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::new(0.5, 0.3).unwrap()
    }

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn e_at_s_zero() {
        let sp = reference().spectral(0.0).unwrap();
        assert_eq!(e_qv(&sp, 0.0, &cfg()).unwrap(), 0.0);
        for v in [0.1, 0.2, 0.3] {
            let e = e_qv(&sp, v, &cfg()).unwrap();
            let exact = v / (0.7 * (1.0 - v));
            assert!((e - exact).abs() < 1e-9, "{v}: {e} vs {exact}");
        }
    }

    #[test]
    fn f_at_s_zero() {
        let sp = reference().spectral(0.0).unwrap();
        let f = f_uv(&sp, 0.6, 0.2, &cfg()).unwrap();
        let exact = 0.2 / (0.7 * 0.4 * 0.8);
        assert!((f - exact).abs() < 1e-8, "{f} vs {exact}");
    }

    #[test]
    fn x_forms_agree() {
        let sp = reference().spectral(1.0).unwrap();
        let aux = AuxPolynomials::new(&sp);
        for i in 0..=20 {
            let v = 0.9 * sp.u_minus * i as f64 / 20.0;
            if v == 0.0 {
                continue;
            }
            let (a, b) = (aux.x(v), aux.x_power_form(v));
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn lst_at_zero_and_domain() {
        let p = reference();
        assert_eq!(batch_lst(&p, 0.0, &cfg()).unwrap().value, 1.0);
        let a = batch_lst_analytic(&p, 0.0, &cfg()).unwrap().value;
        assert!((a - 1.0).abs() < 1e-8, "{a}");
        let sp = p.spectral(1.0).unwrap();
        assert!(f_uv(&sp, 0.3, 0.35, &cfg()).is_err());
        assert!(f_uv(&sp, 1.2, 0.1, &cfg()).is_err());
    }

    #[test]
    fn removable_singularity() {
        let sp = reference().spectral(1.0).unwrap();
        let u = 0.3;
        let near = f_uv(&sp, u, u - 1e-7, &cfg()).unwrap();
        let off = f_uv(&sp, u, u - 1e-3, &cfg()).unwrap();
        assert!(near.is_finite());
        assert!((near - off).abs() < 1e-2 * off.abs());
    }

    #[test]
    fn radius_error_for_large_positive_argument() {
        let sp = reference().spectral(0.0).unwrap();
        let aux = AuxPolynomials::new(&sp);
        assert!(matches!(aux.e_qv(0.81, &cfg()), Err(Error::Radius { .. })));
    }
}
