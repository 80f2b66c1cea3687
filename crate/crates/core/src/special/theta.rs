//! The branch θ(ν; w) of `1 − θ + w θ^ν = 0` with θ(ν; 0) = 1, and the
//! functions Σ, Ψ0, Ψ1 built on it.
//!
//! Everything is solved for `δ = θ − 1`, since Ψ0 and Ψ1 carry the factor
//! `1 − θ` and the integrals of the analytic solver sample θ very close to 1.
//!
//! For `w < 0` the equation has exactly one root in `(0, 1)`, and it is the
//! analytic continuation of the branch along the negative axis. For
//! `0 ≤ w < exp(−ψ(ν))` the branch is the smaller of the two roots above 1.
//! The branch point sits at `w = exp(−ψ(ν))` on the positive axis only.

use crate::error::{Error, Result};
use crate::special::gamma::ln_gamma;

const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaContext {
    pub nu: f64,
    pub radius: f64,
}

/// `ψ(ν) = (1−ν) ln(ν−1) + ν ln ν` for `ν ≥ 1`.
pub fn psi(nu: f64) -> f64 {
    if nu == 1.0 {
        0.0
    } else {
        (1.0 - nu) * (nu - 1.0).ln() + nu * nu.ln()
    }
}

impl ThetaContext {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 1.0) || !nu.is_finite() {
            return Err(Error::domain(format!("theta requires nu > 1, got {nu}")));
        }
        Ok(Self {
            nu,
            radius: (-psi(nu)).exp(),
        })
    }

    /// `C^+ = 1 − ν`.
    pub fn c_plus(&self) -> f64 {
        1.0 - self.nu
    }

    /// `θ(ν; w)`.
    pub fn theta(&self, w: f64) -> Result<f64> {
        Ok(1.0 + self.delta(w)?)
    }

    /// `θ(ν; w) − 1`, accurate for small `|w|`.
    pub fn delta(&self, w: f64) -> Result<f64> {
        if !w.is_finite() {
            return Err(Error::domain(format!("theta argument is not finite: {w}")));
        }
        if w == 0.0 {
            return Ok(0.0);
        }
        if w >= self.radius {
            return Err(Error::Radius {
                w,
                radius: self.radius,
            });
        }
        let nu = self.nu;
        // g(δ) = w (1+δ)^ν − δ, g' = wν(1+δ)^{ν−1} − 1.
        // w < 0: g concave decreasing on (−1, 0], root in (−1, w].
        // w > 0: g convex, smaller root in [w, δ_max] with g'(δ_max) = 0.
        let (mut lo, mut hi): (f64, f64) = if w < 0.0 {
            (-1.0, 0.0)
        } else {
            let theta_max = ((nu * w).ln() / (1.0 - nu)).exp();
            (0.0, theta_max - 1.0)
        };
        let g = |d: f64| w * (nu * d.ln_1p()).exp() - d;
        let mut d = 0.0f64;
        for _ in 0..MAX_NEWTON {
            let pow = (nu * d.ln_1p()).exp();
            let gd = w * pow - d;
            if gd == 0.0 {
                return Ok(d);
            }
            // maintain the bracket: for w < 0, g > 0 left of the root; for w > 0, g > 0 left of it too
            if gd > 0.0 {
                lo = lo.max(d);
            } else {
                hi = hi.min(d);
            }
            let dg = w * nu * pow / (1.0 + d) - 1.0;
            let mut next = d - gd / dg;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - d).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) {
                return Ok(next);
            }
            d = next;
            if hi - lo <= 2.0 * f64::EPSILON * d.abs() {
                return Ok(d);
            }
        }
        let res = g(d);
        if res.abs() <= 1e-12 * (1.0 + d.abs()) {
            Ok(d)
        } else {
            Err(Error::convergence(format!(
                "theta Newton stalled at w = {w}, residual {res}"
            )))
        }
    }

    /// `Σ(ν; w) = (θ−1)/((1−ν)θ + ν)`.
    pub fn sigma(&self, w: f64) -> Result<f64> {
        let d = self.delta(w)?;
        Ok(d / (1.0 + (1.0 - self.nu) * d))
    }

    /// Coefficient of `w^ℓ` in the power series of Σ:
    /// `Γ(ℓν) / (Γ(ℓ) Γ(1 + ℓ(ν−1)))`.
    pub fn sigma_coefficient(&self, l: u32) -> f64 {
        let lf = l as f64;
        (ln_gamma(lf * self.nu) - ln_gamma(lf) - ln_gamma(1.0 + lf * (self.nu - 1.0))).exp()
    }

    /// Partial sum of the power series of Σ with `terms` terms, and a bound on
    /// the remainder from the ratio of the last two terms.
    pub fn sigma_series(&self, w: f64, terms: u32) -> (f64, f64) {
        let mut sum = 0.0;
        let mut last = 0.0;
        let mut prev = 0.0;
        let mut wl = 1.0;
        for l in 1..=terms {
            wl *= w;
            let t = self.sigma_coefficient(l) * wl;
            sum += t;
            prev = last;
            last = t;
        }
        let ratio = if prev != 0.0 {
            (last / prev).abs()
        } else {
            0.0
        };
        let remainder = if ratio < 1.0 {
            last.abs() * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        (sum, remainder)
    }

    /// `Ψ0(t) = t(1−t)/(C^+ t + 1 − C^+)³`.
    pub fn psi0(&self, t: f64) -> Result<f64> {
        self.psi0_delta(t - 1.0)
    }

    /// `Ψ1(t) = t(1−t)(1 − 2t − C^+(1−t²))/(C^+ t + 1 − C^+)⁵`.
    pub fn psi1(&self, t: f64) -> Result<f64> {
        self.psi1_delta(t - 1.0)
    }

    /// Ψ0 at `t = 1 + δ`.
    pub fn psi0_delta(&self, d: f64) -> Result<f64> {
        let den = self.pole_factor(d)?;
        Ok(-(1.0 + d) * d / (den * den * den))
    }

    /// Ψ1 at `t = 1 + δ`.
    pub fn psi1_delta(&self, d: f64) -> Result<f64> {
        let c = self.c_plus();
        let den = self.pole_factor(d)?;
        let inner = -1.0 - 2.0 * d + c * d * (2.0 + d);
        Ok(-(1.0 + d) * d * inner / den.powi(5))
    }

    fn pole_factor(&self, d: f64) -> Result<f64> {
        let cd = self.c_plus() * d;
        let den = 1.0 + cd;
        if den.abs() <= 4.0 * f64::EPSILON * (1.0 + cd.abs()) {
            Err(Error::Pole(format!(
                "Psi denominator vanishes at t = {}",
                1.0 + d
            )))
        } else {
            Ok(den)
        }
    }
}
