//! Tanh-sinh (double-exponential) quadrature.
//!
//! The map `x = c + h·tanh(π/2·sinh t)` pushes the abscissas towards both
//! endpoints at a double-exponential rate, so integrands that vanish like
//! `(b−x)^α` or blow up like `(x−a)^{−β}` (β < 1) are integrated without
//! special treatment. Every abscissa is handed to the integrand together with
//! its exact distances to both endpoints ([`Node`]); integrands whose
//! singular factor is a power of the distance should use those fields instead
//! of recomputing `b − x`, which loses all accuracy next to the endpoint.
//!
//! Levels halve the step: level 0 uses `h = 1`, level `k` adds the odd
//! multiples of `2^{-k}`. The error estimate is the change between two
//! consecutive levels.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest `t` of the transformed variable. At `t = 6` the distance to the
/// endpoint is ~1e-290 of the half-length.
const T_MAX: f64 = 6.0;
/// Finest level for which abscissas are tabulated.
const MAX_TABLE_LEVEL: u32 = 16;
/// Levels always computed before the convergence test is trusted.
const MIN_LEVEL: u32 = 3;

/// Default relative tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Default absolute tolerance.
pub const DEFAULT_ABS_TOL: f64 = 1e-13;
/// Default number of refinement levels.
pub const DEFAULT_MAX_LEVELS: u32 = 12;

/// Tolerances and refinement cap for one integration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_levels: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

impl QuadConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, max_levels: u32) -> Result<Self> {
        if !(rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(Error::domain("quadrature tolerances must be positive"));
        }
        if max_levels == 0 || max_levels > MAX_TABLE_LEVEL {
            return Err(Error::domain(format!(
                "max_levels must lie in 1..={MAX_TABLE_LEVEL}"
            )));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_levels,
        })
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_levels(mut self, max_levels: u32) -> Self {
        self.max_levels = max_levels.clamp(1, MAX_TABLE_LEVEL);
        self
    }
}

/// An abscissa with its distances to both endpoints.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    /// `x − a`, accurate even when it is far below `ulp(x)`.
    pub from_a: f64,
    /// `b − x`, accurate even when it is far below `ulp(x)`.
    pub to_b: f64,
}

/// Result of an integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub err_est: f64,
    pub converged: bool,
    pub levels: u32,
    pub evaluations: usize,
}

impl Integral {
    /// The value, or [`Error::ToleranceNotMet`] if the requested tolerance was
    /// not reached within the level cap.
    pub fn checked(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::ToleranceNotMet {
                value: self.value,
                err_est: self.err_est,
            })
        }
    }
}

/// Vector-valued result, one entry per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralN<const N: usize> {
    pub values: [f64; N],
    pub err_est: [f64; N],
    pub converged: bool,
    pub levels: u32,
    pub evaluations: usize,
}

impl<const N: usize> IntegralN<N> {
    pub fn checked(self) -> Result<[f64; N]> {
        if self.converged {
            Ok(self.values)
        } else {
            let worst = (0..N)
                .max_by(|&i, &j| self.err_est[i].total_cmp(&self.err_est[j]))
                .unwrap_or(0);
            Err(Error::ToleranceNotMet {
                value: self.values[worst],
                err_est: self.err_est[worst],
            })
        }
    }
}

/// One tabulated abscissa on the reference interval `[-1, 1]`: `s = tanh(u)`,
/// `c = 1 − s` computed without cancellation, and the weight `du/dt·(1−s²)`.
#[derive(Debug, Clone, Copy)]
struct RefNode {
    s: f64,
    c: f64,
    w: f64,
}

fn ref_node(t: f64) -> RefNode {
    let u = FRAC_PI_2 * t.sinh();
    let e = (-2.0 * u).exp();
    // 1 - tanh(u) = 2 e^{-2u} / (1 + e^{-2u})
    let c = 2.0 * e / (1.0 + e);
    let s = (1.0 - e) / (1.0 + e);
    let cosh_u = 0.5 * (u.exp() + (-u).exp());
    let w = FRAC_PI_2 * t.cosh() / (cosh_u * cosh_u);
    RefNode { s, c, w }
}

/// Abscissas with t ≥ 0 for every level: level 0 holds t = 0, 1, 2, ...;
/// level k > 0 holds the odd multiples of 2^{-k}.
fn table() -> &'static [Vec<RefNode>] {
    static TABLE: OnceLock<Vec<Vec<RefNode>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=MAX_TABLE_LEVEL)
            .map(|level| {
                let h = (0.5f64).powi(level as i32);
                let (start, stride) = if level == 0 { (0u64, 1u64) } else { (1, 2) };
                let mut nodes = Vec::new();
                let mut j = start;
                loop {
                    let t = j as f64 * h;
                    if t > T_MAX {
                        break;
                    }
                    let node = ref_node(t);
                    if node.c > 0.0 && node.w > 0.0 {
                        nodes.push(node);
                    }
                    j += stride;
                }
                nodes
            })
            .collect()
    })
}

/// Integrates a scalar function of `x` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    integrate_nodes(|n| f(n.x), a, b, cfg)
}

/// Integrates a scalar function that reads the endpoint distances.
pub fn integrate_nodes<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Integral>
where
    F: FnMut(Node) -> f64,
{
    let r = integrate_vec(|n| [f(n)], a, b, cfg)?;
    Ok(Integral {
        value: r.values[0],
        err_est: r.err_est[0],
        converged: r.converged,
        levels: r.levels,
        evaluations: r.evaluations,
    })
}

/// Integrates `N` functions sharing the same abscissas. Convergence requires
/// every component to meet the tolerance.
pub fn integrate_vec<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<IntegralN<N>>
where
    F: FnMut(Node) -> [f64; N],
{
    integrate_vec_impl(f, a, b, cfg, false)
}

/// As [`integrate_vec`], but every component is measured against the
/// largest one. Suited to a residual that cancels to zero, integrated next
/// to its own scale.
pub fn integrate_vec_normwise<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<IntegralN<N>>
where
    F: FnMut(Node) -> [f64; N],
{
    integrate_vec_impl(f, a, b, cfg, true)
}

fn integrate_vec_impl<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
    normwise: bool,
) -> Result<IntegralN<N>>
where
    F: FnMut(Node) -> [f64; N],
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration limits must be finite"));
    }
    if a > b {
        return Err(Error::domain(format!(
            "integration limits reversed: a = {a} > b = {b}"
        )));
    }
    if a == b {
        return Ok(IntegralN {
            values: [0.0; N],
            err_est: [0.0; N],
            converged: true,
            levels: 0,
            evaluations: 0,
        });
    }
    let half = 0.5 * (b - a);
    let mid = a + half;
    let len = b - a;
    let table = table();
    let max_level = cfg.max_levels.min(MAX_TABLE_LEVEL);

    let mut evaluations = 0usize;
    let mut sums = [0.0f64; N];
    let mut prev = [f64::NAN; N];
    let mut errs = [f64::INFINITY; N];
    let mut converged = false;
    let mut level_done = 0;

    for level in 0..=max_level {
        let h = (0.5f64).powi(level as i32);
        let mut level_sum = [0.0f64; N];
        for (idx, node) in table[level as usize].iter().enumerate() {
            let is_center = level == 0 && idx == 0;
            // right side: x = mid + half * s, distance to b = half * c
            let to_b = half * node.c;
            let right = Node {
                x: if node.c < 0.5 {
                    b - to_b
                } else {
                    mid + half * node.s
                },
                from_a: len - to_b,
                to_b,
            };
            if let Some(vals) = eval(&mut f, right, &mut evaluations)? {
                for k in 0..N {
                    level_sum[k] += node.w * vals[k];
                }
            }
            if is_center {
                continue;
            }
            let from_a = half * node.c;
            let left = Node {
                x: if node.c < 0.5 {
                    a + from_a
                } else {
                    mid - half * node.s
                },
                from_a,
                to_b: len - from_a,
            };
            if let Some(vals) = eval(&mut f, left, &mut evaluations)? {
                for k in 0..N {
                    level_sum[k] += node.w * vals[k];
                }
            }
        }
        for k in 0..N {
            sums[k] = if level == 0 {
                h * level_sum[k]
            } else {
                0.5 * sums[k] + h * level_sum[k]
            };
        }
        let estimate: [f64; N] = std::array::from_fn(|k| half * sums[k]);
        if level > 0 {
            for k in 0..N {
                errs[k] = (estimate[k] - prev[k]).abs();
            }
        }
        prev = estimate;
        level_done = level;
        let norm = estimate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = |k: usize| if normwise { norm } else { estimate[k].abs() };
        if level >= MIN_LEVEL.min(max_level)
            && (0..N).all(|k| errs[k] <= cfg.abs_tol.max(cfg.rel_tol * scale(k)))
        {
            converged = true;
            break;
        }
    }

    Ok(IntegralN {
        values: prev,
        err_est: errs,
        converged,
        levels: level_done,
        evaluations,
    })
}

/// Evaluates the integrand; a non-finite value at an abscissa that has
/// rounded onto an endpoint is dropped (the integrand cannot be resolved
/// closer to that endpoint), anywhere else it is an error.
fn eval<const N: usize, F>(f: &mut F, node: Node, count: &mut usize) -> Result<Option<[f64; N]>>
where
    F: FnMut(Node) -> [f64; N],
{
    *count += 1;
    let vals = f(node);
    if vals.iter().all(|v| v.is_finite()) {
        return Ok(Some(vals));
    }
    let on_endpoint = node.from_a <= f64::EPSILON * node.x.abs().max(f64::MIN_POSITIVE)
        || node.to_b <= f64::EPSILON * node.x.abs().max(f64::MIN_POSITIVE);
    if on_endpoint {
        Ok(None)
    } else {
        Err(Error::NonFiniteIntegrand { x: node.x })
    }
}
