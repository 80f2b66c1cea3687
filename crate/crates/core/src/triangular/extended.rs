//! Forward substitution in binary floating point of configurable precision.
//!
//! The alternating binomial sums lose roughly `0.47 b` decimal digits at row
//! `b`, so the solve carries `128 + 3·b_max` bits. Only `+ − × ÷ √` are
//! needed: `Q_{b,ℓ}` comes from its terminating hypergeometric closed form
//! (the Γ ratio is a finite product) and the right-hand sides from power
//! series integrated term by term against `(1−t)^β`.

use dashu_float::ops::SquareRoot;
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::{Error, Result};
use crate::model::SpectralData;

pub(crate) type F = FBig<HalfEven, 2>;

const MAX_SERIES_TERMS: usize = 400_000;

pub(crate) fn bits_for(b_max: usize) -> usize {
    128 + 3 * b_max
}

fn from_f64(x: f64, prec: usize) -> F {
    F::try_from(x)
        .expect("finite input")
        .with_precision(prec)
        .value()
}

fn int(k: i64, prec: usize) -> F {
    F::from(k).with_precision(prec).value()
}

fn to_f64(x: &F) -> f64 {
    x.to_f64().value()
}

/// Spectral data recomputed at the working precision from the exact binary
/// values of `(ρ, q, s)`.
pub(crate) struct MpSpectral {
    pub prec: usize,
    pub q: F,
    pub u_minus: F,
    pub c_plus: F,
    pub x: F,
}

impl MpSpectral {
    pub fn new(sp: &SpectralData, prec: usize) -> Self {
        let rho = from_f64(sp.rho, prec);
        let q = from_f64(sp.q, prec);
        let s = from_f64(sp.s, prec);
        let one = int(1, prec);
        let (u_minus, u_plus) = if sp.s == 0.0 {
            (&rho + &q, one.clone())
        } else {
            let b = &s + &one + &rho + &q;
            let c = &s * &q + &rho + &q;
            let disc = &b * &b - int(4, prec) * &c;
            let u_plus = (&b + disc.sqrt()) / int(2, prec);
            (&c / &u_plus, u_plus)
        };
        let c_plus = if sp.s == 0.0 {
            -(&rho / (&one - &q - &rho))
        } else {
            -((&u_minus - &q) / (&u_plus - &u_minus))
        };
        let x = &one - &u_minus / &u_plus;
        Self {
            prec,
            q,
            u_minus,
            c_plus,
            x,
        }
    }

    fn int(&self, k: i64) -> F {
        int(k, self.prec)
    }

    /// All `Q_{b,ℓ}` for `1 ≤ ℓ ≤ b ≤ b_max`, row `b−1`, column `ℓ−1`:
    /// `−U^{ℓ+1} ∏_{k<b} k/(k−bC^+) · x^{1−b}/(1−x) · ₂F₁(ℓ−b, −bC^+; −b; x)`.
    pub fn q_matrix(&self, b_max: usize) -> Vec<Vec<F>> {
        let one = self.int(1);
        let one_minus_x = &one - &self.x;
        let mut u_pow = vec![self.u_minus.clone()];
        for l in 1..=b_max {
            let next = &u_pow[l - 1] * &self.u_minus;
            u_pow.push(next); // u_pow[l] = U^{l+1}
        }
        let mut x_inv_pow = one.clone(); // x^{1−b}
        let mut rows = Vec::with_capacity(b_max);
        for b in 1..=b_max {
            if b > 1 {
                x_inv_pow = &x_inv_pow / &self.x;
            }
            let bf = self.int(b as i64);
            let bc = &bf * &self.c_plus; // b C^+
            let mut ratio = one.clone();
            for k in 1..b {
                let kf = self.int(k as i64);
                ratio = ratio * &kf / (&kf - &bc);
            }
            let prefactor = -(&ratio * &x_inv_pow / &one_minus_x);
            let mut row = Vec::with_capacity(b);
            for l in 1..=b {
                // terminating sum, all terms positive
                let mut term = one.clone();
                let mut sum = one.clone();
                for k in 0..(b - l) {
                    let a_k = self.int(l as i64 - b as i64 + k as i64);
                    let b_k = self.int(k as i64) - &bc;
                    let c_k = self.int(k as i64 - b as i64);
                    let k1 = self.int(k as i64 + 1);
                    term = term * a_k * b_k / (c_k * k1) * &self.x;
                    sum += &term;
                }
                row.push(&prefactor * &u_pow[l] * sum);
            }
            rows.push(row);
        }
        rows
    }

    /// `b ∫₀^{U^-} R(ξ)^b/(1−ξ) dξ`, as
    /// `b U^- Σ_m c_m B(m+1, β+1)` with `c_m` the coefficients of
    /// `(1−(1−x)t)^{b(C^+−1)}/(1−U^- t)` and `β = −bC^+`.
    pub fn rhs_lst(&self, b: usize) -> Result<F> {
        let one = self.int(1);
        let bf = self.int(b as i64);
        let gamma = &bf * (&self.c_plus - &one);
        let beta = -(&bf * &self.c_plus);
        let w = &one - &self.x; // U^-/U^+
        let mut d = one.clone();
        let mut c = one.clone();
        let mut beta_m = &one / (&beta + &one);
        let mut sum = &c * &beta_m;
        let mut last = to_f64(&sum).abs();
        for m in 1..MAX_SERIES_TERMS {
            let mf = self.int(m as i64);
            d = d * (&mf - &one - &gamma) / &mf * &w;
            c = &c * &self.u_minus + &d;
            beta_m = beta_m * &mf / (&mf + &beta + &one);
            let term = &c * &beta_m;
            sum += &term;
            let t = to_f64(&term).abs();
            if tail_negligible(t, last, to_f64(&sum).abs(), self.prec) {
                return Ok(&bf * &self.u_minus * sum);
            }
            last = t;
        }
        Err(Error::convergence(format!(
            "extended right-hand side series for b = {b} did not converge"
        )))
    }

    /// Mean right-hand side at `s = 0` (`U^+ = 1`, `U = U^- = ρ+q`):
    /// `b ∫₀^U (q−z)((1−z)^b−1)/((U−z)(1−z)²) R(z)^b dz`
    /// `= b Σ_m g_m B(m+1, β)`, `β = −bC^+`, with `g_m` the coefficients of
    /// `(q − Ut)[(1−Ut)^{bC^+−2} − (1−Ut)^{bC^+−b−2}]`.
    pub fn rhs_mean(&self, b: usize) -> Result<F> {
        let one = self.int(1);
        let bf = self.int(b as i64);
        let u = &self.u_minus;
        let alpha1 = &bf * &self.c_plus - self.int(2);
        let alpha2 = &alpha1 - &bf;
        let beta = -(&bf * &self.c_plus);
        let mut e1 = one.clone();
        let mut e2 = one.clone();
        let mut h_prev = &e1 - &e2; // zero
        let mut beta_m = &one / &beta;
        let mut sum = &self.q * &h_prev * &beta_m;
        let mut last = 0.0f64;
        for m in 1..MAX_SERIES_TERMS {
            let mf = self.int(m as i64);
            e1 = e1 * (&mf - &one - &alpha1) / &mf * u;
            e2 = e2 * (&mf - &one - &alpha2) / &mf * u;
            let h = &e1 - &e2;
            let g = &self.q * &h - u * &h_prev;
            beta_m = beta_m * &mf / (&mf + &beta);
            let term = &g * &beta_m;
            sum += &term;
            // envelope of the mixed-sign terms
            let env = (to_f64(&self.q) * to_f64(&h).abs() + to_f64(u) * to_f64(&h_prev).abs())
                * to_f64(&beta_m);
            if m > 2 && tail_negligible(env, last, to_f64(&sum).abs(), self.prec) {
                return Ok(&bf * sum);
            }
            last = env;
            h_prev = h;
        }
        Err(Error::convergence(format!(
            "extended mean right-hand side series for b = {b} did not converge"
        )))
    }
}

/// Terms past the peak decay with a decreasing ratio `r`, so the tail is
/// below `term · r/(1−r)`.
fn tail_negligible(term: f64, last: f64, sum: f64, prec: usize) -> bool {
    if last == 0.0 {
        return term == 0.0 && sum != 0.0;
    }
    let r = term / last;
    if !(r < 1.0) {
        return false;
    }
    let eps = (-(prec as f64)).exp2();
    term * r / (1.0 - r) <= eps * sum
}

/// Result of one forward substitution.
pub(crate) struct Solved {
    pub values: Vec<f64>,
    pub log10_condition: Vec<f64>,
    pub rel_residuals: Vec<f64>,
}

/// Solves `sign · Σ_{ℓ≤b} (−1)^ℓ C(b,ℓ) Q_{b,ℓ} E_ℓ = rhs_b` row by row.
pub(crate) fn forward_substitution(
    q: &[Vec<F>],
    rhs: &[F],
    sign: i64,
    prec: usize,
) -> Result<Solved> {
    let b_max = rhs.len();
    let mut e: Vec<F> = Vec::with_capacity(b_max);
    let mut log10_condition = Vec::with_capacity(b_max);
    let mut rel_residuals = Vec::with_capacity(b_max);
    let sign = int(sign, prec);
    for b in 1..=b_max {
        // (−1)^ℓ C(b,ℓ)
        let mut binom = int(1, prec);
        let mut coeffs = Vec::with_capacity(b);
        for l in 1..=b {
            binom = binom * int((b - l + 1) as i64, prec) / int(l as i64, prec);
            let signed = if l % 2 == 1 {
                -binom.clone()
            } else {
                binom.clone()
            };
            coeffs.push(&sign * signed * &q[b - 1][l - 1]);
        }
        let diag = &coeffs[b - 1];
        if to_f64(diag) == 0.0 {
            return Err(Error::SingularDiagonal { b });
        }
        let mut acc = int(0, prec);
        let mut magnitude = 0.0f64;
        for l in 1..b {
            let t = &coeffs[l - 1] * &e[l - 1];
            magnitude += to_f64(&t).abs();
            acc += t;
        }
        let value = (&rhs[b - 1] - &acc) / diag;
        let diag_term = diag * &value;
        magnitude += to_f64(&diag_term).abs();
        let rhs_abs = to_f64(&rhs[b - 1]).abs();
        let kappa = if rhs_abs > 0.0 {
            magnitude / rhs_abs
        } else {
            f64::INFINITY
        };
        if kappa.log2() + 64.0 > prec as f64 {
            return Err(Error::convergence(format!(
                "triangular row {b}: condition estimate {kappa:.3e} exceeds the {prec}-bit working precision"
            )));
        }
        let residual = &acc + &diag_term - &rhs[b - 1];
        rel_residuals.push(to_f64(&residual).abs() / rhs_abs.max(f64::MIN_POSITIVE));
        log10_condition.push(kappa.log10());
        e.push(value);
    }
    Ok(Solved {
        values: e.iter().map(to_f64).collect(),
        log10_condition,
        rel_residuals,
    })
}
