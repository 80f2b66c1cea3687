//! Truncated solver for the conditional recurrence of a tagged batch.
//!
//! `e*_{n,b}(s) = E[exp(−s Ω_{n,b})]` satisfies
//! `(s+1+ρ) e*_{n,b} = b/(n+b) e*_{n,b−1} + n/(n+b) e*_{n−1,b} + ρ Σ_m q_m e*_{n+m,b}`
//! with `e*_{n,0} = 1`, and the conditional means satisfy the same system
//! differentiated at `s = 0`. Both are solved on `0 ≤ n ≤ n_max`,
//! `1 ≤ b ≤ b_max`, one batch column at a time.
//!
//! Transform columns are solved by fixed-point iteration from all ones (the
//! map contracts with factor `(1+ρ)/(s+1+ρ)`). Mean columns are solved
//! directly by banded LU, since the mean map barely contracts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Sup-norm change at which the fixed-point iteration stops.
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;
/// Rows used for the slope of the linear tail closure of mean columns.
const SLOPE_ROWS: usize = 10;

/// Batch-size distribution `(q_m)_{m≥1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BatchPmf {
    /// `q_m = (1−q) q^{m−1}`, summed without truncation.
    Geometric { q: f64 },
    /// `q_b = 1`.
    PointMass { b: usize },
    /// `probs[m−1] = q_m`, renormalized to unit mass.
    Custom { probs: Vec<f64> },
}

impl BatchPmf {
    pub fn custom(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain(
                "batch pmf must be a nonempty list of nonnegative numbers",
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("batch pmf has zero mass"));
        }
        Ok(BatchPmf::Custom {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn prob(&self, m: usize) -> f64 {
        match self {
            BatchPmf::Geometric { q } => {
                if m == 0 {
                    0.0
                } else {
                    (1.0 - q) * q.powi(m as i32 - 1)
                }
            }
            BatchPmf::PointMass { b } => {
                if m == *b {
                    1.0
                } else {
                    0.0
                }
            }
            BatchPmf::Custom { probs } => {
                if m == 0 || m > probs.len() {
                    0.0
                } else {
                    probs[m - 1]
                }
            }
        }
    }

    /// `P(B > m)`.
    pub fn tail(&self, m: usize) -> f64 {
        match self {
            BatchPmf::Geometric { q } => q.powi(m as i32),
            BatchPmf::PointMass { b } => {
                if m < *b {
                    1.0
                } else {
                    0.0
                }
            }
            BatchPmf::Custom { probs } => probs.iter().skip(m).sum(),
        }
    }

    /// Explicit support used by the mean solver: all `m` with `q_m` above
    /// `1e-18` of the mass (geometric tail cut and renormalized).
    fn truncated(&self) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            BatchPmf::Geometric { q } => {
                let m_max = ((1e-18f64).ln() / q.ln()).ceil().max(1.0) as usize;
                (1..=m_max).map(|m| self.prob(m)).collect()
            }
            BatchPmf::PointMass { b } => (1..=*b).map(|m| self.prob(m)).collect(),
            BatchPmf::Custom { probs } => probs.clone(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableKind {
    Lst,
    Mean,
}

/// Truncation window and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub n_max: usize,
    pub b_max: usize,
    pub tol: f64,
    /// Also solve with `n_max/2` and report the largest change on the rows
    /// `n ≤ n_max/4`.
    pub sensitivity: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_max: 400,
            b_max: 60,
            tol: DEFAULT_FIXED_POINT_TOL,
            sensitivity: false,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if self.n_max < 2 * SLOPE_ROWS || self.b_max == 0 {
            return Err(Error::domain(format!(
                "oracle window needs n_max >= {} and b_max >= 1",
                2 * SLOPE_ROWS
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("oracle tolerance must be positive"));
        }
        Ok(())
    }
}

/// Solved truncated table.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalTable {
    pub kind: TableKind,
    /// Laplace variable (0 for the mean kind).
    pub s: f64,
    pub rho: f64,
    pub pmf: BatchPmf,
    pub n_max: usize,
    pub b_max: usize,
    /// `columns[b−1][n]`.
    pub columns: Vec<Vec<f64>>,
    /// Largest number of sweeps used by a column (fixed-point solves).
    pub sweeps: usize,
    /// Largest observed ratio of consecutive sup-norm changes.
    pub contraction_ratio: Option<f64>,
    /// Largest entry change when `n_max` is halved.
    pub truncation_sensitivity: Option<f64>,
}

impl ConditionalTable {
    /// Entry `(n, b)`, with the boundary closure for `n > n_max`.
    pub fn entry(&self, n: usize, b: usize) -> f64 {
        if b == 0 {
            return match self.kind {
                TableKind::Lst => 1.0,
                TableKind::Mean => 0.0,
            };
        }
        let col = &self.columns[b - 1];
        if n <= self.n_max {
            col[n]
        } else {
            match self.kind {
                TableKind::Lst => col[self.n_max],
                TableKind::Mean => {
                    let slope =
                        (col[self.n_max] - col[self.n_max - SLOPE_ROWS]) / SLOPE_ROWS as f64;
                    col[self.n_max] + (n - self.n_max) as f64 * slope
                }
            }
        }
    }

    /// `Σ_n entry(n, b) z^n` for `|z| < 1`, including the closure tail.
    pub fn row_generating(&self, b: usize, z: f64) -> f64 {
        let mut acc = 0.0;
        let mut zn = 1.0;
        for n in 0..=self.n_max {
            acc += self.entry(n, b) * zn;
            zn *= z;
        }
        // zn = z^{n_max+1}
        let last = self.entry(self.n_max, b);
        match self.kind {
            TableKind::Lst => acc + last * zn / (1.0 - z),
            TableKind::Mean => {
                let slope = self.entry(self.n_max + 1, b) - last;
                // Σ_{k≥1} (last + k·slope) z^{n_max+k}
                acc + zn * (last / (1.0 - z) + slope / ((1.0 - z) * (1.0 - z)))
            }
        }
    }

    /// `Σ_n Σ_{b ≤ b_max} entry(n, b) u^n v^b`.
    pub fn generating(&self, u: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        let mut vb = 1.0;
        for b in 1..=self.b_max {
            vb *= v;
            acc += self.row_generating(b, u) * vb;
        }
        acc
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::domain(format!(
            "oracle needs a finite s >= 0, got {s}"
        )));
    }
    Ok(())
}

/// Solves the transform table for geometric batches.
pub fn solve_conditional_lst(
    params: &ModelParams,
    s: f64,
    cfg: &OracleConfig,
) -> Result<ConditionalTable> {
    solve_conditional_lst_pmf(params.rho(), &BatchPmf::Geometric { q: params.q() }, s, cfg)
}

/// Solves the transform table for an arbitrary batch pmf. `ρ = 0` is
/// allowed here (an isolated batch).
pub fn solve_conditional_lst_pmf(
    rho: f64,
    pmf: &BatchPmf,
    s: f64,
    cfg: &OracleConfig,
) -> Result<ConditionalTable> {
    check_s(s)?;
    check_rho(rho)?;
    cfg.validate()?;
    let mut table = lst_window(rho, pmf, s, cfg.n_max, cfg.b_max, cfg.tol)?;
    if cfg.sensitivity {
        let half = lst_window(rho, pmf, s, cfg.n_max / 2, cfg.b_max, cfg.tol)?;
        table.truncation_sensitivity = Some(max_change(&table, &half, cfg.n_max / 4));
    }
    Ok(table)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::domain(format!("rho must be >= 0, got {rho}")));
    }
    Ok(())
}

fn max_change(full: &ConditionalTable, half: &ConditionalTable, rows: usize) -> f64 {
    let mut worst = 0.0f64;
    for b in 1..=full.b_max {
        for n in 0..=rows {
            worst = worst.max((full.entry(n, b) - half.entry(n, b)).abs());
        }
    }
    worst
}

/// `T_n = Σ_m q_m e_{n+m}` under the closure `e_n = e_N` for `n > N`.
fn coupling(pmf: &BatchPmf, explicit: &[f64], e: &[f64], out: &mut [f64]) {
    let n_max = e.len() - 1;
    match pmf {
        BatchPmf::Geometric { q } => {
            // T_n = (1−q) e_{n+1} + q T_{n+1}, T_N = e_N
            out[n_max] = e[n_max];
            for n in (0..n_max).rev() {
                out[n] = (1.0 - q) * e[n + 1] + q * out[n + 1];
            }
        }
        _ => {
            for n in 0..=n_max {
                let mut acc = 0.0;
                for (i, &p) in explicit.iter().enumerate() {
                    acc += p * e[(n + i + 1).min(n_max)];
                }
                out[n] = acc;
            }
        }
    }
}

fn lst_window(
    rho: f64,
    pmf: &BatchPmf,
    s: f64,
    n_max: usize,
    b_max: usize,
    tol: f64,
) -> Result<ConditionalTable> {
    let explicit = pmf.truncated();
    let denom = s + 1.0 + rho;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(b_max);
    let mut prev = vec![1.0; n_max + 1];
    let mut worst_sweeps = 0;
    let mut worst_ratio = 0.0f64;
    let mut t = vec![0.0; n_max + 1];
    for b in 1..=b_max {
        let bf = b as f64;
        let mut e = vec![1.0; n_max + 1];
        let mut next = vec![0.0; n_max + 1];
        let mut last_change = f64::NAN;
        let mut sweeps = 0;
        loop {
            coupling(pmf, &explicit, &e, &mut t);
            let mut change = 0.0f64;
            for n in 0..=n_max {
                let nf = n as f64;
                let left = if n == 0 {
                    0.0
                } else {
                    nf / (nf + bf) * e[n - 1]
                };
                let v = (bf / (nf + bf) * prev[n] + left + rho * t[n]) / denom;
                change = change.max((v - e[n]).abs());
                next[n] = v;
            }
            std::mem::swap(&mut e, &mut next);
            sweeps += 1;
            // ratios from the early sweeps reflect the transient, not the rate
            if sweeps > 5 && last_change > 1e3 * tol && change > 0.0 {
                worst_ratio = worst_ratio.max(change / last_change);
            }
            last_change = change;
            if change < tol {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::convergence(format!(
                    "oracle fixed point for column b = {b} did not reach {tol} in {MAX_SWEEPS} sweeps"
                )));
            }
        }
        worst_sweeps = worst_sweeps.max(sweeps);
        prev.clone_from(&e);
        columns.push(e);
    }
    Ok(ConditionalTable {
        kind: TableKind::Lst,
        s,
        rho,
        pmf: pmf.clone(),
        n_max,
        b_max,
        columns,
        sweeps: worst_sweeps,
        contraction_ratio: if worst_ratio > 0.0 {
            Some(worst_ratio)
        } else {
            None
        },
        truncation_sensitivity: None,
    })
}

/// Solves the conditional means for geometric batches.
pub fn solve_conditional_means(
    params: &ModelParams,
    cfg: &OracleConfig,
) -> Result<ConditionalTable> {
    solve_conditional_means_pmf(params.rho(), &BatchPmf::Geometric { q: params.q() }, cfg)
}

/// Solves the conditional means for an arbitrary batch pmf.
pub fn solve_conditional_means_pmf(
    rho: f64,
    pmf: &BatchPmf,
    cfg: &OracleConfig,
) -> Result<ConditionalTable> {
    check_rho(rho)?;
    cfg.validate()?;
    let mut table = mean_window(rho, pmf, cfg.n_max, cfg.b_max)?;
    if cfg.sensitivity {
        let half = mean_window(rho, pmf, cfg.n_max / 2, cfg.b_max)?;
        table.truncation_sensitivity = Some(max_change(&table, &half, cfg.n_max / 4));
    }
    Ok(table)
}

fn mean_window(rho: f64, pmf: &BatchPmf, n_max: usize, b_max: usize) -> Result<ConditionalTable> {
    let explicit = pmf.truncated();
    let m_max = explicit.len();
    let size = n_max + 1;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(b_max);
    let mut prev = vec![0.0; size];
    for b in 1..=b_max {
        let bf = b as f64;
        let mut band = Band::new(size, SLOPE_ROWS, m_max);
        let mut rhs = vec![0.0; size];
        for n in 0..size {
            let nf = n as f64;
            // (1+ρ) M_n − n/(n+b) M_{n−1} − ρ Σ_m q_m M_{n+m} = 1 + b/(n+b) M_{n,b−1}
            band.add(n, n, 1.0 + rho);
            if n > 0 {
                band.add(n, n - 1, -nf / (nf + bf));
            }
            for (i, &p) in explicit.iter().enumerate() {
                let target = n + i + 1;
                if target <= n_max {
                    band.add(n, target, -rho * p);
                } else {
                    // M_{N+k} = M_N + k (M_N − M_{N−10})/10
                    let k = (target - n_max) as f64 / SLOPE_ROWS as f64;
                    band.add(n, n_max, -rho * p * (1.0 + k));
                    band.add(n, n_max - SLOPE_ROWS, rho * p * k);
                }
            }
            rhs[n] = 1.0 + bf / (nf + bf) * prev[n];
        }
        let col = band.solve(rhs).ok_or_else(|| {
            Error::convergence(format!(
                "banded solve for mean column b = {b} met a zero pivot"
            ))
        })?;
        prev.clone_from(&col);
        columns.push(col);
    }
    Ok(ConditionalTable {
        kind: TableKind::Mean,
        s: 0.0,
        rho,
        pmf: pmf.clone(),
        n_max,
        b_max,
        columns,
        sweeps: 0,
        contraction_ratio: None,
        truncation_sensitivity: None,
    })
}

/// Square banded matrix, `kl` sub- and `ku` super-diagonals, with room for
/// the fill-in of partial pivoting.
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    rows: Vec<Vec<f64>>,
}

impl Band {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            rows: vec![vec![0.0; width]; n],
        }
    }

    /// Row `i` stores columns `i − kl ..= i + ku + kl`.
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off >= 0 && (off as usize) < self.width {
            Some(off as usize)
        } else {
            None
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("entry inside the band");
        self.rows[i][k] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.rows[i][k])
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        if let Some(k) = self.slot(i, j) {
            self.rows[i][k] = v;
        }
    }

    fn solve(mut self, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
        let n = self.n;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let pivot = (k..=last_row)
                .max_by(|&a, &b| self.get(a, k).abs().total_cmp(&self.get(b, k).abs()))?;
            if self.get(pivot, k) == 0.0 {
                return None;
            }
            let last_col = (k + self.ku + self.kl).min(n - 1);
            if pivot != k {
                for j in k..=last_col {
                    let (a, b) = (self.get(k, j), self.get(pivot, j));
                    self.set(k, j, b);
                    self.set(pivot, j, a);
                }
                rhs.swap(k, pivot);
            }
            let diag = self.get(k, k);
            for i in (k + 1)..=last_row {
                let factor = self.get(i, k) / diag;
                if factor == 0.0 {
                    continue;
                }
                for j in k..=last_col {
                    let v = self.get(i, j) - factor * self.get(k, j);
                    self.set(i, j, v);
                }
                rhs[i] -= factor * rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let last_col = (i + self.ku + self.kl).min(n - 1);
            let mut acc = rhs[i];
            for j in (i + 1)..=last_col {
                acc -= self.get(i, j) * x[j];
            }
            x[i] = acc / self.get(i, i);
        }
        Some(x)
    }
}

/// Aggregate with an analytic bracket for the truncated tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub value: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `E[exp(−sΩ)] = Σ_n Σ_b e*_{n,b} P(N=n) P(B=b)` for geometric batches.
pub fn aggregate_lst(table: &ConditionalTable, params: &ModelParams) -> Result<Aggregate> {
    let law = params.stationary();
    aggregate_lst_with(table, &|n| law.pmf(n as u64), &|n| law.tail(n as u64))
}

/// Transform aggregate with a caller-supplied queue-length law (`pmf(n)` and
/// `tail(n) = P(N > n)`) and the table's own batch pmf.
pub fn aggregate_lst_with(
    table: &ConditionalTable,
    pmf: &dyn Fn(usize) -> f64,
    tail: &dyn Fn(usize) -> f64,
) -> Result<Aggregate> {
    if table.kind != TableKind::Lst {
        return Err(Error::domain("aggregate_lst needs a transform table"));
    }
    let mut sum = 0.0;
    for b in 1..=table.b_max {
        let qb = table.pmf.prob(b);
        for n in 0..=table.n_max {
            sum += table.entry(n, b) * pmf(n) * qb;
        }
    }
    // entries lie in (0, 1]: the omitted mass bounds the tail
    let mass_b: f64 = (1..=table.b_max).map(|b| table.pmf.prob(b)).sum();
    let missing = tail(table.n_max) * mass_b + table.pmf.tail(table.b_max);
    Ok(Aggregate {
        value: sum + 0.5 * missing,
        half_width: 0.5 * missing,
        lower: sum,
        upper: sum + missing,
    })
}

/// `E[Ω] = Σ_n Σ_b M_{n,b} P(N=n) P(B=b)` for geometric batches.
pub fn aggregate_mean(table: &ConditionalTable, params: &ModelParams) -> Result<Aggregate> {
    let law = params.stationary();
    aggregate_mean_with(table, &|n| law.pmf(n as u64), params.rho() + params.q())
}

/// Mean aggregate with a caller-supplied queue-length law whose tail decays
/// geometrically with ratio `decay`. The tails beyond the window use the
/// linear closure in `n` and a linear extrapolation in `b`; the bracket is
/// `[window sum, window sum + 2 · tail estimate]`.
pub fn aggregate_mean_with(
    table: &ConditionalTable,
    pmf: &dyn Fn(usize) -> f64,
    decay: f64,
) -> Result<Aggregate> {
    if table.kind != TableKind::Mean {
        return Err(Error::domain("aggregate_mean needs a mean table"));
    }
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::domain("queue-length tail ratio must lie in [0, 1)"));
    }
    let mut sum = 0.0;
    let mut tail_est = 0.0;
    let n_extra = 2000usize.min((((1e-30f64).ln() / decay.max(1e-300).ln()).ceil()) as usize + 1);
    for b in 1..=table.b_max {
        let qb = table.pmf.prob(b);
        if qb == 0.0 {
            continue;
        }
        for n in 0..=table.n_max {
            sum += table.entry(n, b) * pmf(n) * qb;
        }
        for n in (table.n_max + 1)..=(table.n_max + n_extra) {
            tail_est += table.entry(n, b) * pmf(n) * qb;
        }
    }
    // batches beyond b_max: M_{n,b} ≤ M_{n,b_max} + (b − b_max)·(M_{n,b_max} − M_{n,b_max−1})
    let bm = table.b_max;
    if bm >= 2 {
        let mut row_mean = 0.0;
        let mut row_slope = 0.0;
        for n in 0..=table.n_max {
            let p = pmf(n);
            row_mean += table.entry(n, bm) * p;
            row_slope += (table.entry(n, bm) - table.entry(n, bm - 1)) * p;
        }
        for b in (bm + 1)..(bm + 2000) {
            let qb = table.pmf.prob(b);
            if qb == 0.0 && table.pmf.tail(b) == 0.0 {
                break;
            }
            tail_est += qb * (row_mean + (b - bm) as f64 * row_slope.max(0.0));
        }
    }
    Ok(Aggregate {
        value: sum + tail_est,
        half_width: tail_est,
        lower: sum,
        upper: sum + 2.0 * tail_est,
    })
}

/// Batch-column cut so that `q^{b_max} · b_max` is below `0.1 · tol`.
pub fn oracle_b_max(q: f64, tol: f64) -> usize {
    let mut b = 1usize;
    while q.powi(b as i32) * b as f64 >= 0.1 * tol && b < 2000 {
        b += 1;
    }
    b
}
