//! Γ and log Γ. Both come from statrs (Lanczos approximation, ~15 digits);
//! this module adds the Γ ratios used by the hypergeometric code.

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `Γ(c) / (Γ(a) Γ(c−a))` for `c > a > 0`, evaluated in log space.
pub fn beta_normalizer(a: f64, c: f64) -> f64 {
    (ln_gamma(c) - ln_gamma(a) - ln_gamma(c - a)).exp()
}

/// `Γ(b) Γ(1−bC) / Γ(b−bC)` for integer `b ≥ 1` and `C < 0`, as the finite
/// product `∏_{k=1}^{b−1} k/(k − bC)`.
pub fn q_gamma_ratio(b: u32, c_plus: f64) -> f64 {
    let bc = b as f64 * c_plus;
    (1..b).map(|k| k as f64 / (k as f64 - bc)).product()
}
