//! Cross-check suite: analytic results against the truncated oracle, the
//! simulator, and their own internal identities.

use serde::Serialize;

use crate::analytic::{batch_lst, batch_lst_analytic, e_qv, mean_batch_sojourn, pde::pde_residual};
use crate::error::Result;
use crate::model::ModelParams;
use crate::oracle::{
    aggregate_lst, aggregate_mean, oracle_b_max, solve_conditional_lst, solve_conditional_means,
    OracleConfig,
};
use crate::quadrature::QuadConfig;
use crate::simulator::{simulate_batch_sojourn, SimConfig};
use crate::triangular::{
    condanalytic_residual, q_coefficient, q_coefficient_closed_form, solve_boundary_lst,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationConfig {
    pub quick: bool,
    /// Relative error injected into the quadrature route of `Q_{b,ℓ}`.
    pub perturb_q_coefficient: f64,
    pub reps: u64,
    pub seed: u64,
    pub n_max: usize,
    pub quad: QuadConfig,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            quick: false,
            perturb_q_coefficient: 0.0,
            reps: 1_000_000,
            seed: 42,
            n_max: 400,
            quad: QuadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Largest discrepancy found.
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail,
        }
    }

    fn failed(name: &str, tolerance: f64, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            measured: f64::INFINITY,
            tolerance,
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn run_check(name: &str, tolerance: f64, f: impl FnOnce() -> Result<(f64, String)>) -> CheckResult {
    match f() {
        Ok((measured, detail)) => CheckResult::new(name, measured, tolerance, detail),
        Err(e) => CheckResult::failed(name, tolerance, e),
    }
}

/// Runs the suite at `params`.
pub fn validate(params: &ModelParams, cfg: &ValidationConfig) -> ValidationReport {
    let quad = &cfg.quad;
    let q = params.q();
    let oracle_cfg = OracleConfig {
        n_max: cfg.n_max,
        b_max: oracle_b_max(q, 1e-9),
        ..Default::default()
    };
    let mut checks = Vec::new();

    checks.push(run_check("lst_normalization", 1e-8, || {
        let v = batch_lst_analytic(params, 0.0, quad)?.value;
        Ok(((v - 1.0).abs(), format!("analytic transform at s = 0: {v}")))
    }));

    checks.push(run_check("s0_degeneracy", 1e-8, || {
        let b_max = if cfg.quick { 30 } else { 60 };
        let sp = params.spectral(0.0)?;
        let table = solve_boundary_lst(&sp, b_max)?;
        let target = 1.0 / (1.0 - q);
        let mut worst = table
            .values
            .iter()
            .map(|e| (e - target).abs())
            .fold(0.0, f64::max);
        for v in [0.1, 0.2, q] {
            worst = worst.max((e_qv(&sp, v, quad)? - v / ((1.0 - q) * (1.0 - v))).abs());
        }
        Ok((
            worst,
            format!("E_l(q) for l <= {b_max} and E(q,v) at s = 0"),
        ))
    }));

    checks.push(run_check("dual_route_q", 1e-8, || {
        let (b_top, s_list): (usize, &[f64]) = if cfg.quick {
            (10, &[1.0])
        } else {
            (30, &[0.0, 0.5, 1.0, 2.0])
        };
        let tight = QuadConfig::default()
            .with_rel_tol(1e-13)
            .with_abs_tol(1e-300);
        let mut worst = 0.0f64;
        for &s in s_list {
            let sp = params.spectral(s)?;
            for b in 1..=b_top {
                for l in 1..=b {
                    let quadrature =
                        q_coefficient(&sp, b, l, &tight)? * (1.0 + cfg.perturb_q_coefficient);
                    let closed = q_coefficient_closed_form(&sp, b, l)?;
                    worst = worst.max(((quadrature - closed) / closed).abs());
                }
            }
        }
        Ok((
            worst,
            format!("relative, 1 <= l <= b <= {b_top}, s in {s_list:?}"),
        ))
    }));

    checks.push(run_check("lst_vs_oracle", 1e-5, || {
        let s_list: &[f64] = if cfg.quick {
            &[1.0]
        } else {
            &[0.1, 0.5, 1.0, 2.0, 5.0]
        };
        let mut worst = 0.0f64;
        for &s in s_list {
            let a = batch_lst(params, s, quad)?.value;
            let o = aggregate_lst(&solve_conditional_lst(params, s, &oracle_cfg)?, params)?;
            worst = worst.max((a - o.value).abs() + o.half_width);
        }
        Ok((worst, format!("s in {s_list:?}")))
    }));

    checks.push(run_check("mean_vs_oracle", 1e-4, || {
        let a = mean_batch_sojourn(params, quad)?;
        let o = aggregate_mean(&solve_conditional_means(params, &oracle_cfg)?, params)?;
        Ok((
            (a - o.value).abs() / o.value,
            format!("analytic {a}, oracle {}", o.value),
        ))
    }));

    checks.push(run_check("mean_vs_simulation", 1.0, || {
        let reps = if cfg.quick {
            cfg.reps.min(100_000)
        } else {
            cfg.reps
        };
        let a = mean_batch_sojourn(params, quad)?;
        let est = simulate_batch_sojourn(params, &SimConfig::new(reps, cfg.seed))?;
        // measured in units of the 99% half-width
        Ok((
            (a - est.mean).abs() / est.ci_half_width,
            format!(
                "analytic {a}, simulated {} +- {} ({reps} reps)",
                est.mean, est.ci_half_width
            ),
        ))
    }));

    checks.push(run_check("pde_residual", 1e-3, || {
        let sp = params.spectral(1.0)?;
        let (us, vs): (&[f64], &[f64]) = if cfg.quick {
            (&[0.35, 0.55], &[0.15, 0.21])
        } else {
            (
                &[0.25, 0.35, 0.45, 0.55, 0.65],
                &[0.12, 0.15, 0.18, 0.21, 0.24],
            )
        };
        let mut worst = 0.0f64;
        for &u in us {
            for &v in vs {
                if v < u && v < sp.u_minus {
                    worst = worst.max(pde_residual(&sp, u, v, 1e-4, quad)?.relative());
                }
            }
        }
        Ok((worst, format!("s = 1, {} points", us.len() * vs.len())))
    }));

    checks.push(run_check("analyticity_residual", 1e-8, || {
        let b_top = if cfg.quick { 5 } else { 10 };
        let s = 1.0;
        let sp = params.spectral(s)?;
        let table = solve_boundary_lst(&sp, b_top.max(20))?;
        let lower = solve_conditional_lst(
            params,
            s,
            &OracleConfig {
                b_max: b_top,
                ..oracle_cfg
            },
        )?;
        let tight = QuadConfig::default()
            .with_rel_tol(1e-12)
            .with_abs_tol(1e-300);
        let mut worst = 0.0f64;
        for b in 1..=b_top {
            let row = |z: f64| lower.row_generating(b - 1, z);
            worst = worst.max(condanalytic_residual(&sp, b, &table, &row, &tight)?.relative());
        }
        Ok((worst, format!("s = {s}, b <= {b_top}")))
    }));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { checks, passed }
}
