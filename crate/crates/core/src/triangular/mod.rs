//! The lower-triangular systems for the boundary coefficients `E_ℓ(q)`
//! (transform) and `E^{(1)}_ℓ(q)` (mean, `s = 0`).
//!
//! Row `b` of the transform system reads
//! `Σ_{ℓ=1}^b (−1)^ℓ C(b,ℓ) Q_{b,ℓ} E_ℓ(q) = b ∫₀^{U^-} R(ξ)^b/(1−ξ) dξ`,
//! and the mean system has `−Σ ... E^{(1)}_ℓ(q)` on the left with the
//! reduced right-hand side of [`rhs_mean`].
//!
//! [`solve_boundary_lst`] and [`solve_boundary_mean`] run in extended
//! precision (see [`extended`]); the double-precision quadrature routes
//! ([`q_coefficient`], [`rhs_lst`], [`rhs_mean`]) are kept as the independent
//! second route.

pub mod extended;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SpectralData;
use crate::quadrature::{integrate_nodes, QuadConfig};
use crate::special::gamma::q_gamma_ratio;
use crate::special::gauss_2f1;

use extended::{bits_for, forward_substitution, MpSpectral};

/// Default truncation order.
pub const DEFAULT_B_MAX: usize = 60;
/// Largest truncation order accepted.
pub const MAX_B_MAX: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoefficientKind {
    /// `E_ℓ(q)` at the table's `s`.
    Lst,
    /// `E^{(1)}_ℓ(q)`, the coefficient of `s` at `s = 0`.
    Mean,
}

/// Solved prefix `ℓ = 1..=b_max` of the boundary coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientTable {
    pub kind: CoefficientKind,
    pub sp: SpectralData,
    pub b_max: usize,
    /// `values[ℓ−1]`.
    pub values: Vec<f64>,
    /// `log10 Σ_ℓ |C(b,ℓ) Q_{b,ℓ} E_ℓ| / |rhs_b|` per row.
    pub log10_condition: Vec<f64>,
    /// Relative residual of each row, evaluated at the working precision.
    pub rel_residuals: Vec<f64>,
    pub precision_bits: usize,
}

impl CoefficientTable {
    /// `E_ℓ(q)` (1-based).
    pub fn get(&self, l: usize) -> f64 {
        self.values[l - 1]
    }

    /// `Σ_ℓ E_ℓ(q) v^ℓ` over the solved prefix.
    pub fn generating(&self, v: f64) -> f64 {
        self.values.iter().rev().fold(0.0, |acc, &e| (acc + e) * v)
    }
}

/// Smallest order `≥ 60` whose truncation bound
/// `(1/(1−q)) q^{b_max+1}/(1−q)` is below `0.1 · tol`.
pub fn required_b_max(q: f64, tol: f64) -> usize {
    let mut b = DEFAULT_B_MAX;
    while b < MAX_B_MAX && q.powi(b as i32 + 1) / ((1.0 - q) * (1.0 - q)) >= 0.1 * tol {
        b += 1;
    }
    b
}

fn check_indices(b: usize, l: usize) -> Result<()> {
    if b == 0 || l == 0 || l > b {
        return Err(Error::domain(format!(
            "Q_(b,l) needs 1 <= l <= b, got b = {b}, l = {l}"
        )));
    }
    Ok(())
}

/// `Q_{b,ℓ} = ∫₀^{U^-} ((ℓ−b+1)z − ℓ(1+ρ+s)) R(z)^b z^{ℓ−1} dz` by quadrature.
pub fn q_coefficient(sp: &SpectralData, b: usize, l: usize, cfg: &QuadConfig) -> Result<f64> {
    check_indices(b, l)?;
    let (bf, lf) = (b as f64, l as f64);
    let um = sp.u_minus;
    let lin = lf * (1.0 + sp.rho + sp.s);
    integrate_nodes(
        |n| {
            let z = n.x;
            let ln_r = sp.ln_r_from_gap(n.to_b / um, z);
            let poly = (lf - bf + 1.0) * z - lin;
            poly * (bf * ln_r + (lf - 1.0) * z.ln()).exp()
        },
        0.0,
        um,
        cfg,
    )?
    .checked()
}

/// `Q_{b,ℓ} = −(U^-)^{ℓ+1} Γ(b)Γ(1−bC^+)/Γ(b−bC^+) · x^{1−b}/(1−x) ·
/// ₂F₁(ℓ−b, −bC^+; −b; x)` in double precision.
pub fn q_coefficient_closed_form(sp: &SpectralData, b: usize, l: usize) -> Result<f64> {
    check_indices(b, l)?;
    let (bf, lf) = (b as f64, l as f64);
    let f = gauss_2f1(lf - bf, -bf * sp.c_plus, -bf, sp.x)?;
    Ok(
        -sp.u_minus.powi(l as i32 + 1) * q_gamma_ratio(b as u32, sp.c_plus) * sp.x.powf(1.0 - bf)
            / (1.0 - sp.x)
            * f,
    )
}

/// All quadrature `Q_{b,ℓ}`, `1 ≤ ℓ ≤ b ≤ b_max`, computed in parallel.
/// Row `b−1`, column `ℓ−1`.
pub fn q_matrix(sp: &SpectralData, b_max: usize, cfg: &QuadConfig) -> Result<Vec<Vec<f64>>> {
    (1..=b_max)
        .into_par_iter()
        .map(|b| {
            (1..=b)
                .map(|l| q_coefficient(sp, b, l, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// `b ∫₀^{U^-} R(ξ)^b/(1−ξ) dξ` by quadrature.
pub fn rhs_lst(sp: &SpectralData, b: usize, cfg: &QuadConfig) -> Result<f64> {
    if b == 0 {
        return Err(Error::domain("rhs_lst needs b >= 1"));
    }
    let bf = b as f64;
    let um = sp.u_minus;
    let integral = integrate_nodes(
        |n| (bf * sp.ln_r_from_gap(n.to_b / um, n.x)).exp() / (1.0 - n.x),
        0.0,
        um,
        cfg,
    )?
    .checked()?;
    Ok(bf * integral)
}

/// `b ∫₀^{ρ+q} (q−z)((1−z)^b−1)/((ρ+q−z)(1−z)²) R(z)^b dz` at `s = 0`.
pub fn rhs_mean(sp0: &SpectralData, b: usize, cfg: &QuadConfig) -> Result<f64> {
    require_s_zero(sp0)?;
    if b == 0 {
        return Err(Error::domain("rhs_mean needs b >= 1"));
    }
    let bf = b as f64;
    let um = sp0.u_minus;
    let q = sp0.q;
    let integral = integrate_nodes(
        |n| {
            let z = n.x;
            let ln_r = sp0.ln_r_from_gap(n.to_b / um, z);
            // R^b/(U−z) keeps the exponent b(C^-−1) − 1 > −1
            let ln_1mz = (-z).ln_1p();
            (q - z) * (bf * ln_1mz).exp_m1() / ((1.0 - z) * (1.0 - z))
                * (bf * ln_r - n.to_b.ln()).exp()
        },
        0.0,
        um,
        cfg,
    )?
    .checked()?;
    Ok(bf * integral)
}

fn require_s_zero(sp: &SpectralData) -> Result<()> {
    if sp.s != 0.0 {
        return Err(Error::domain(format!(
            "the mean system needs s = 0 spectral data, got s = {}",
            sp.s
        )));
    }
    Ok(())
}

/// Solves the transform system up to `b_max` in extended precision.
pub fn solve_boundary_lst(sp: &SpectralData, b_max: usize) -> Result<CoefficientTable> {
    solve(sp, b_max, CoefficientKind::Lst)
}

/// Solves the mean system (`s = 0`) up to `b_max` in extended precision.
pub fn solve_boundary_mean(sp0: &SpectralData, b_max: usize) -> Result<CoefficientTable> {
    require_s_zero(sp0)?;
    solve(sp0, b_max, CoefficientKind::Mean)
}

fn solve(sp: &SpectralData, b_max: usize, kind: CoefficientKind) -> Result<CoefficientTable> {
    if b_max == 0 || b_max > MAX_B_MAX {
        return Err(Error::domain(format!(
            "b_max must lie in 1..={MAX_B_MAX}, got {b_max}"
        )));
    }
    let prec = bits_for(b_max);
    let mp = MpSpectral::new(sp, prec);
    let q = mp.q_matrix(b_max);
    let rhs = (1..=b_max)
        .into_par_iter()
        .map(|b| mp_rhs(&mp, b, kind))
        .collect::<Result<Vec<_>>>()?;
    let sign = match kind {
        CoefficientKind::Lst => 1,
        CoefficientKind::Mean => -1,
    };
    let solved = forward_substitution(&q, &rhs, sign, prec)?;
    Ok(CoefficientTable {
        kind,
        sp: *sp,
        b_max,
        values: solved.values,
        log10_condition: solved.log10_condition,
        rel_residuals: solved.rel_residuals,
        precision_bits: prec,
    })
}

fn mp_rhs(mp: &MpSpectral, b: usize, kind: CoefficientKind) -> Result<extended::F> {
    match kind {
        CoefficientKind::Lst => mp.rhs_lst(b),
        CoefficientKind::Mean => mp.rhs_mean(b),
    }
}

/// `f_b(z) = 1{b=1}/(1−z) + b E_{b−1}(z) 1{b≥2} − (b(1+ρ+s) − z) E_b(q)`,
/// split into its three terms.
fn fb_terms(
    sp: &SpectralData,
    b: usize,
    z: f64,
    eb_q: f64,
    lower: &dyn Fn(f64) -> f64,
) -> [f64; 3] {
    let bf = b as f64;
    let first = if b == 1 { 1.0 / (1.0 - z) } else { 0.0 };
    let second = if b >= 2 { bf * lower(z) } else { 0.0 };
    let third = -(bf * (1.0 + sp.rho + sp.s) - z) * eb_q;
    [first, second, third]
}

fn table_entry(table: &CoefficientTable, b: usize) -> Result<f64> {
    if table.kind != CoefficientKind::Lst {
        return Err(Error::domain(
            "analyticity checks need a transform (LST) table",
        ));
    }
    if b == 0 || b > table.b_max {
        return Err(Error::domain(format!(
            "table solved to order {}, b = {b} requested",
            table.b_max
        )));
    }
    Ok(table.get(b))
}

/// `F_b(u) = (u^b P(u) R(u)^b)^{-1} ∫_u^{U^-} f_b(z) R(z)^b z^{b−1} dz` for
/// `0 < u ≤ U^-`, with `lower(z) = E_{b−1}(z)` on `[u, U^-]`.
///
/// Evaluated with `z = u + τ(U^- − u)`, which turns the kernel ratio into
/// `(1−τ)^{b(C^-−1)} ((U^+−z)/(U^+−u))^{b(C^+−1)}` and keeps `u = U^-` finite.
pub fn coefficient_fb(
    sp: &SpectralData,
    b: usize,
    u: f64,
    table: &CoefficientTable,
    lower: &dyn Fn(f64) -> f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    let eb_q = table_entry(table, b)?;
    if !(u > 0.0 && u <= sp.u_minus) {
        return Err(Error::domain(format!(
            "F_b needs 0 < u <= U^-, got u = {u}"
        )));
    }
    let bf = b as f64;
    let (um, up) = (sp.u_minus, sp.u_plus);
    let integral = integrate_nodes(
        |n| {
            let tau = n.x;
            let z = u + tau * (um - u);
            let f: f64 = fb_terms(sp, b, z, eb_q, lower).iter().sum();
            let ln_ratio = bf * (sp.c_minus - 1.0) * n.to_b.ln()
                + bf * (sp.c_plus - 1.0) * ((up - z) / (up - u)).ln()
                + (bf - 1.0) * (z / u).ln();
            f * ln_ratio.exp()
        },
        0.0,
        1.0,
        cfg,
    )?
    .checked()?;
    Ok(integral / (u * (up - u)))
}

/// Residual of the analyticity condition at `u = 0`,
/// `∫₀^{U^-} f_b(z) R(z)^b z^{b−1} dz`, with the same integral of `|f_b|`
/// term by term as its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticityResidual {
    pub b: usize,
    pub residual: f64,
    pub scale: f64,
}

impl AnalyticityResidual {
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale
    }
}

pub fn condanalytic_residual(
    sp: &SpectralData,
    b: usize,
    table: &CoefficientTable,
    lower: &dyn Fn(f64) -> f64,
    cfg: &QuadConfig,
) -> Result<AnalyticityResidual> {
    let eb_q = table_entry(table, b)?;
    let bf = b as f64;
    let um = sp.u_minus;
    let r = crate::quadrature::integrate_vec_normwise(
        |n| {
            let z = n.x;
            let w = (bf * sp.ln_r_from_gap(n.to_b / um, z) + (bf - 1.0) * z.ln()).exp();
            let t = fb_terms(sp, b, z, eb_q, lower);
            [
                (t[0] + t[1] + t[2]) * w,
                (t[0].abs() + t[1].abs() + t[2].abs()) * w,
            ]
        },
        0.0,
        um,
        cfg,
    )?
    .checked()?;
    Ok(AnalyticityResidual {
        b,
        residual: r[0],
        scale: r[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use proptest::prelude::*;

    fn reference() -> ModelParams {
        ModelParams::new(0.5, 0.3).unwrap()
    }

    fn cfg() -> QuadConfig {
        QuadConfig::default()
            .with_rel_tol(1e-13)
            .with_abs_tol(1e-300)
    }

    #[test]
    fn q_is_negative_and_two_tolerances_agree() {
        for s in [0.0, 1.0] {
            let sp = reference().spectral(s).unwrap();
            for b in 1..=12 {
                for l in 1..=b {
                    let v = q_coefficient(&sp, b, l, &cfg()).unwrap();
                    assert!(v < 0.0);
                }
            }
        }
        let sp = reference().spectral(1.0).unwrap();
        let a = q_coefficient(&sp, 1, 1, &QuadConfig::default()).unwrap();
        let b = q_coefficient(&sp, 1, 1, &cfg().with_max_levels(16)).unwrap();
        assert!(((a - b) / b).abs() < 1e-10);
    }

    #[test]
    fn q_index_checks() {
        let sp = reference().spectral(1.0).unwrap();
        assert!(q_coefficient(&sp, 2, 3, &cfg()).is_err());
        assert!(q_coefficient_closed_form(&sp, 0, 0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_small_b() {
        for s in [0.0, 0.5, 1.0, 2.0] {
            let sp = reference().spectral(s).unwrap();
            for b in 1..=10 {
                for l in 1..=b {
                    let a = q_coefficient(&sp, b, l, &cfg()).unwrap();
                    let c = q_coefficient_closed_form(&sp, b, l).unwrap();
                    assert!(((a - c) / c).abs() < 1e-10, "s={s} b={b} l={l}: {a} vs {c}");
                }
            }
        }
    }

    #[test]
    fn rhs_lst_bounded_by_kernel_maximum() {
        // max R = R(q) > 1, so the right-hand side grows with b; b U max_R^b/(1−U)
        // bounds it and serves as the overflow guard.
        let sp = reference().spectral(0.0).unwrap();
        let max_r = sp.max_r();
        assert!(max_r > 1.0);
        for b in 1..=30 {
            let r = rhs_lst(&sp, b, &cfg()).unwrap();
            // b ∫ R^b/(1−ξ) ≤ b U max_R^b/(1−U)
            let bound = b as f64 * sp.u_minus * max_r.powi(b as i32) / (1.0 - sp.u_minus);
            assert!(r <= bound);
        }
    }

    #[test]
    fn extended_rhs_matches_quadrature() {
        for s in [0.0, 1.0] {
            let sp = reference().spectral(s).unwrap();
            let mp = MpSpectral::new(&sp, 256);
            for b in [1, 2, 7, 20] {
                let quad = rhs_lst(&sp, b, &cfg()).unwrap();
                let ext = mp.rhs_lst(b).unwrap().to_f64().value();
                assert!(
                    ((quad - ext) / ext).abs() < 1e-11,
                    "s={s} b={b}: {quad} vs {ext}"
                );
            }
        }
        let sp0 = reference().spectral(0.0).unwrap();
        let mp = MpSpectral::new(&sp0, 256);
        for b in [1, 2, 7, 20] {
            let quad = rhs_mean(&sp0, b, &cfg()).unwrap();
            let ext = mp.rhs_mean(b).unwrap().to_f64().value();
            assert!(((quad - ext) / ext).abs() < 1e-10, "b={b}: {quad} vs {ext}");
        }
    }

    #[test]
    fn extended_q_matches_closed_form() {
        let sp = reference().spectral(0.5).unwrap();
        let mp = MpSpectral::new(&sp, 256);
        let q = mp.q_matrix(30);
        for b in 1..=30 {
            for l in 1..=b {
                let c = q_coefficient_closed_form(&sp, b, l).unwrap();
                let e = q[b - 1][l - 1].to_f64().value();
                assert!(((c - e) / e).abs() < 1e-12, "b={b} l={l}");
            }
        }
    }

    #[test]
    fn s_zero_gives_geometric_constant() {
        let sp = reference().spectral(0.0).unwrap();
        let t = solve_boundary_lst(&sp, 60).unwrap();
        for l in 1..=60 {
            assert!((t.get(l) - 1.0 / 0.7).abs() < 1e-8, "l={l}: {}", t.get(l));
        }
        assert!(t.rel_residuals.iter().all(|&r| r <= 1e-9));
    }

    #[test]
    fn transform_decreases_in_s() {
        let sp1 = reference().spectral(1.0).unwrap();
        let sp10 = reference().spectral(10.0).unwrap();
        let e1 = solve_boundary_lst(&sp1, 5).unwrap();
        let e10 = solve_boundary_lst(&sp10, 5).unwrap();
        assert!(e10.get(1) < e1.get(1));
        for l in 1..=5 {
            assert!(e1.get(l) > 0.0 && e1.get(l) <= 1.0 / 0.7);
        }
    }

    #[test]
    fn mean_coefficients_negative() {
        let sp0 = reference().spectral(0.0).unwrap();
        let t = solve_boundary_mean(&sp0, 20).unwrap();
        assert!(t.values.iter().all(|&e| e < 0.0));
        assert!(solve_boundary_mean(&reference().spectral(1.0).unwrap(), 5).is_err());
    }

    #[test]
    fn mean_rhs_split_at_q() {
        let sp0 = reference().spectral(0.0).unwrap();
        let whole = rhs_mean(&sp0, 3, &cfg()).unwrap();
        let b = 3.0;
        let um = sp0.u_minus;
        let part = |a: f64, c: f64| {
            crate::quadrature::integrate(
                |z| {
                    (0.3 - z) * ((1.0 - z).powf(b) - 1.0) / ((um - z) * (1.0 - z) * (1.0 - z))
                        * sp0.r(z).powf(b)
                },
                a,
                c,
                &cfg(),
            )
            .unwrap()
            .value
        };
        let split = b * (part(0.0, 0.3) + part(0.3, um));
        assert!(((whole - split) / whole).abs() < 1e-9, "{whole} vs {split}");
    }

    #[test]
    fn fb_at_zero_recovers_b1_closed_form() {
        let sp = reference().spectral(0.0).unwrap();
        let t = solve_boundary_lst(&sp, 1).unwrap();
        for u in [0.05, 0.3, 0.6, sp.u_minus] {
            let f = coefficient_fb(&sp, 1, u, &t, &|_| 0.0, &cfg()).unwrap();
            let exact = 1.0 / (0.7 * (1.0 - u));
            assert!((f - exact).abs() < 1e-7 * exact, "u={u}: {f} vs {exact}");
        }
    }

    #[test]
    fn analyticity_at_zero_with_exact_lower() {
        // at s = 0 every E_b(z) equals 1/(1−z)
        let sp = reference().spectral(0.0).unwrap();
        let t = solve_boundary_lst(&sp, 10).unwrap();
        for b in 1..=10 {
            let r = condanalytic_residual(&sp, b, &t, &|z| 1.0 / (1.0 - z), &cfg()).unwrap();
            assert!(r.relative() <= 1e-10, "b={b}: {}", r.relative());
        }
    }

    #[test]
    fn required_b_max_bound() {
        assert_eq!(required_b_max(0.3, 1e-8), 60);
        let b = required_b_max(0.9, 1e-8);
        assert!(0.9f64.powi(b as i32 + 1) / 0.01 < 1e-9);
        assert!(0.9f64.powi(b as i32) / 0.01 >= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn dual_route_q(rho in 0.1f64..0.6, q in 0.1f64..0.5, si in 0usize..4, b in 1usize..20) {
            prop_assume!(1.0 - rho - q >= 0.1);
            let s = [0.0, 0.5, 1.0, 2.0][si];
            let sp = ModelParams::new(rho, q).unwrap().spectral(s).unwrap();
            for l in 1..=b {
                let a = q_coefficient(&sp, b, l, &cfg()).unwrap();
                let c = q_coefficient_closed_form(&sp, b, l).unwrap();
                prop_assert!(((a - c) / c).abs() < 1e-8, "b={} l={}: {} vs {}", b, l, a, c);
            }
        }
    }
}
