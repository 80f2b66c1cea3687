//! Residual of the first-order equation satisfied by `F(u,v)`:
//!
//! `u P(u) F_u + v[ρ(1−q) − (s+1+ρ−v)(u−q)] F_v + [u(u−s−1−ρ) + (u−q)(u+v)] F + L = 0`,
//! `L = v/(1−u) + (u+v) E(q,v) − v(s+1+ρ−v) E_v(q,v)`,
//!
//! with every derivative taken by central differences.

use serde::Serialize;

use crate::analytic::transform::AuxPolynomials;
use crate::error::Result;
use crate::model::SpectralData;
use crate::quadrature::QuadConfig;

/// Default central-difference step.
pub const DEFAULT_PDE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeResidual {
    pub u: f64,
    pub v: f64,
    pub residual: f64,
    /// Sum of the absolute values of the individual terms.
    pub scale: f64,
}

impl PdeResidual {
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale
    }
}

pub fn pde_residual(
    sp: &SpectralData,
    u: f64,
    v: f64,
    h: f64,
    cfg: &QuadConfig,
) -> Result<PdeResidual> {
    let aux = AuxPolynomials::new(sp);
    let f = aux.f_uv(u, v, cfg)?;
    let f_u = (aux.f_uv(u + h, v, cfg)? - aux.f_uv(u - h, v, cfg)?) / (2.0 * h);
    let f_v = (aux.f_uv(u, v + h, cfg)? - aux.f_uv(u, v - h, cfg)?) / (2.0 * h);
    let e = aux.e_qv(v, cfg)?;
    let e_v = (aux.e_qv(v + h, cfg)? - aux.e_qv(v - h, cfg)?) / (2.0 * h);
    let (rho, q, s) = (sp.rho, sp.q, sp.s);
    let a = s + 1.0 + rho;
    let terms = [
        u * sp.p_expanded(u) * f_u,
        v * (rho * (1.0 - q) - (a - v) * (u - q)) * f_v,
        (u * (u - a) + (u - q) * (u + v)) * f,
        v / (1.0 - u),
        (u + v) * e,
        -v * (a - v) * e_v,
    ];
    Ok(PdeResidual {
        u,
        v,
        residual: terms.iter().sum(),
        scale: terms.iter().map(|t| t.abs()).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn closed_form_at_s_zero_satisfies_equation() {
        // at s = 0, F = v/((1−q)(1−u)(1−v)) and E(q,v) = v/((1−q)(1−v))
        let sp = ModelParams::new(0.5, 0.3).unwrap().spectral(0.0).unwrap();
        let r = pde_residual(&sp, 0.5, 0.2, DEFAULT_PDE_STEP, &QuadConfig::default()).unwrap();
        assert!(r.relative() < 1e-6, "{r:?}");
    }
}
