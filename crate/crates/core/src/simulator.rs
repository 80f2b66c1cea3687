//! Monte Carlo tagged-batch simulator.
//!
//! While the tagged batch is present the queue is never empty, so events
//! occur at rate `1+ρ`: a departure with probability `1/(1+ρ)` (a tagged job
//! with probability `b/(n+b)`), otherwise a batch arrival adding a geometric
//! number of foreground jobs. The start `(N, B)` is drawn exactly from the
//! stationary law and the batch-size law.
//!
//! Replication `i` uses its own Xoshiro256++ stream seeded from `(seed, i)`,
//! and replications are reduced in fixed-size blocks merged in index order,
//! so results do not depend on the thread count.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Replications per reduction block.
const BLOCK: u64 = 1 << 14;
/// Default confidence level of the mean interval.
pub const DEFAULT_LEVEL: f64 = 0.99;
/// Level of the DKW band around the empirical CCDF.
pub const DKW_ALPHA: f64 = 0.01;

/// Arrival rate and batch parameter for the simulator; unlike
/// [`ModelParams`], `ρ = 0` (an isolated batch) is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimModel {
    pub rho: f64,
    pub q: f64,
}

impl SimModel {
    pub fn new(rho: f64, q: f64) -> Result<Self> {
        if rho == 0.0 {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::domain(format!("q must lie in (0, 1), got {q}")));
            }
            return Ok(Self { rho, q });
        }
        let p = ModelParams::new(rho, q)?;
        Ok(p.into())
    }
}

impl From<ModelParams> for SimModel {
    fn from(p: ModelParams) -> Self {
        Self {
            rho: p.rho(),
            q: p.q(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_reps: u64,
    pub seed: u64,
    pub level: f64,
    /// Retain the sorted sample for quantiles and the empirical CCDF.
    pub keep_samples: bool,
}

impl SimConfig {
    pub fn new(n_reps: u64, seed: u64) -> Self {
        Self {
            n_reps,
            seed,
            level: DEFAULT_LEVEL,
            keep_samples: false,
        }
    }

    pub fn with_samples(mut self) -> Self {
        self.keep_samples = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::domain("n_reps must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::domain(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of a mean, with a normal-theory interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Infinite when `n_reps = 1`.
    pub ci_half_width: f64,
    pub std_dev: f64,
    pub n_reps: u64,
    pub seed: u64,
    pub level: f64,
    /// Sorted sample, if retained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl SimEstimate {
    pub fn ci(&self) -> (f64, f64) {
        (
            self.mean - self.ci_half_width,
            self.mean + self.ci_half_width,
        )
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.ci_half_width
    }

    /// Empirical `p`-quantile (lower), if samples were retained.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        let s = self.samples.as_ref()?;
        if s.is_empty() || !(0.0..=1.0).contains(&p) {
            return None;
        }
        let idx = ((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
        Some(s[idx])
    }
}

/// Empirical CCDF with its DKW band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCcdf {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Half-width `sqrt(ln(2/α)/(2n))` of the simultaneous band.
    pub band: f64,
}

/// `P̂(Ω > t)` on `t_grid` from a retained sample.
pub fn ecdf_ccdf(estimate: &SimEstimate, t_grid: &[f64]) -> Result<EmpiricalCcdf> {
    let s = estimate
        .samples
        .as_ref()
        .ok_or_else(|| Error::domain("empirical CCDF needs an estimate with retained samples"))?;
    let n = s.len() as f64;
    let values = t_grid
        .iter()
        .map(|&t| {
            let at_most = s.partition_point(|&x| x <= t);
            (s.len() - at_most) as f64 / n
        })
        .collect();
    Ok(EmpiricalCcdf {
        t_grid: t_grid.to_vec(),
        values,
        band: dkw_band(s.len() as u64, DKW_ALPHA),
    })
}

/// `sqrt(ln(2/α)/(2n))`.
pub fn dkw_band(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sojourn of a batch drawn from the batch-size law.
pub fn simulate_batch_sojourn(params: &ModelParams, cfg: &SimConfig) -> Result<SimEstimate> {
    simulate_batch_sojourn_model(&(*params).into(), cfg)
}

pub fn simulate_batch_sojourn_model(model: &SimModel, cfg: &SimConfig) -> Result<SimEstimate> {
    run(model, cfg, |m, rng| {
        let n = stationary_start(m, rng);
        let b = batch_size(m.q, rng);
        tagged_run(m, n, b, b, rng).1
    })
}

/// Sojourn of one job chosen uniformly among all jobs: its batch is drawn
/// size-biased and the job is the `J`-th of the batch to leave, `J` uniform.
pub fn simulate_job_sojourn(params: &ModelParams, cfg: &SimConfig) -> Result<SimEstimate> {
    simulate_job_sojourn_model(&(*params).into(), cfg)
}

pub fn simulate_job_sojourn_model(model: &SimModel, cfg: &SimConfig) -> Result<SimEstimate> {
    run(model, cfg, |m, rng| {
        let (n, b, j) = job_start(m, rng);
        tagged_run(m, n, b, j, rng).0
    })
}

/// `(job, batch)` sojourns on the same path: the tagged job and the whole of
/// its size-biased batch.
pub fn simulate_coupled_pair(
    params: &ModelParams,
    n_reps: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_reps == 0 {
        return Err(Error::domain("n_reps must be at least 1"));
    }
    let m: SimModel = (*params).into();
    Ok((0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let (n, b, j) = job_start(&m, &mut rng);
            tagged_run(&m, n, b, j, &mut rng)
        })
        .collect())
}

fn job_start(m: &SimModel, rng: &mut Xoshiro256PlusPlus) -> (u64, u64, u64) {
    let n = stationary_start(m, rng);
    let b = 1 + geometric_failures(m.q, rng) + geometric_failures(m.q, rng);
    let j = 1 + ((uniform(rng) * b as f64) as u64).min(b - 1);
    (n, b, j)
}

/// Runs the chain from `n` foreground and `b` tagged jobs until all tagged
/// jobs are gone; returns the time of the `j`-th tagged departure and the
/// time of the last one.
fn tagged_run(
    m: &SimModel,
    mut n: u64,
    mut b: u64,
    j: u64,
    rng: &mut Xoshiro256PlusPlus,
) -> (f64, f64) {
    let rate = 1.0 + m.rho;
    let p_dep = 1.0 / rate;
    let total = b;
    let mut t = 0.0;
    let mut t_j = 0.0;
    while b > 0 {
        t += -uniform(rng).ln() / rate;
        if uniform(rng) < p_dep {
            let tagged = n == 0 || uniform(rng) * ((n + b) as f64) < b as f64;
            if tagged {
                b -= 1;
                if total - b == j {
                    t_j = t;
                }
            } else {
                n -= 1;
            }
        } else {
            n += batch_size(m.q, rng);
        }
    }
    (t_j, t)
}

fn substream(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(splitmix(
        seed ^ splitmix(index.wrapping_add(0x632B_E59B_D9B4_E019)),
    ))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on `(0, 1]`.
fn uniform(rng: &mut Xoshiro256PlusPlus) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Failures before the first success, success probability `1 − p`.
fn geometric_failures(p: f64, rng: &mut Xoshiro256PlusPlus) -> u64 {
    if p == 0.0 {
        return 0;
    }
    (uniform(rng).ln() / p.ln()).floor() as u64
}

fn batch_size(q: f64, rng: &mut Xoshiro256PlusPlus) -> u64 {
    1 + geometric_failures(q, rng)
}

/// `P(N = 0) = 1 − ρ/(1−q)`, and `N − 1` given `N ≥ 1` geometric with ratio `ρ+q`.
fn stationary_start(m: &SimModel, rng: &mut Xoshiro256PlusPlus) -> u64 {
    if m.rho == 0.0 {
        return 0;
    }
    let busy = m.rho / (1.0 - m.q);
    if uniform(rng) > busy {
        0
    } else {
        1 + geometric_failures(m.rho + m.q, rng)
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

fn run<F>(model: &SimModel, cfg: &SimConfig, sample: F) -> Result<SimEstimate>
where
    F: Fn(&SimModel, &mut Xoshiro256PlusPlus) -> f64 + Sync,
{
    cfg.validate()?;
    let blocks = cfg.n_reps.div_ceil(BLOCK);
    let per_block: Vec<(Moments, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let lo = k * BLOCK;
            let hi = (lo + BLOCK).min(cfg.n_reps);
            let mut m = Moments::default();
            let mut xs = if cfg.keep_samples {
                Vec::with_capacity((hi - lo) as usize)
            } else {
                Vec::new()
            };
            for i in lo..hi {
                let mut rng = substream(cfg.seed, i);
                let x = sample(model, &mut rng);
                m.push(x);
                if cfg.keep_samples {
                    xs.push(x);
                }
            }
            (m, xs)
        })
        .collect();
    let mut total = Moments::default();
    let mut samples = if cfg.keep_samples {
        Some(Vec::with_capacity(cfg.n_reps as usize))
    } else {
        None
    };
    for (m, xs) in per_block {
        total = total.merge(m);
        if let Some(s) = samples.as_mut() {
            s.extend_from_slice(&xs);
        }
    }
    if let Some(s) = samples.as_mut() {
        s.par_sort_unstable_by(|a, b| a.total_cmp(b));
    }
    let (std_dev, half) = if total.n >= 2 {
        let sd = (total.m2 / (total.n - 1) as f64).sqrt();
        let z = Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(0.5 + 0.5 * cfg.level);
        (sd, z * sd / (total.n as f64).sqrt())
    } else {
        (f64::NAN, f64::INFINITY)
    };
    Ok(SimEstimate {
        mean: total.mean,
        ci_half_width: half,
        std_dev,
        n_reps: cfg.n_reps,
        seed: cfg.seed,
        level: cfg.level,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_start_matches_law() {
        let m = SimModel::new(0.5, 0.3).unwrap();
        let p = ModelParams::new(0.5, 0.3).unwrap().stationary();
        let n = 400_000u64;
        let mut counts = [0u64; 4];
        for i in 0..n {
            let k = stationary_start(&m, &mut substream(7, i));
            if k < 4 {
                counts[k as usize] += 1;
            }
        }
        for k in 0..4 {
            let f = counts[k] as f64 / n as f64;
            let exact = p.pmf(k as u64);
            assert!(
                (f - exact).abs() < 5.0 * (exact / n as f64).sqrt(),
                "{k}: {f} vs {exact}"
            );
        }
    }

    #[test]
    fn block_merge_matches_direct_moments() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut a = Moments::default();
        xs.iter().for_each(|&x| a.push(x));
        let mut l = Moments::default();
        let mut r = Moments::default();
        xs[..313].iter().for_each(|&x| l.push(x));
        xs[313..].iter().for_each(|&x| r.push(x));
        let m = l.merge(r);
        assert!((m.mean - a.mean).abs() < 1e-14);
        assert!((m.m2 - a.m2).abs() < 1e-10);
    }

    #[test]
    fn isolated_batch_mean() {
        let m = SimModel::new(0.0, 0.3).unwrap();
        let est = simulate_batch_sojourn_model(&m, &SimConfig::new(200_000, 3)).unwrap();
        assert!(est.contains(1.0 / 0.7), "{est:?}");
    }

    #[test]
    fn single_replication_has_infinite_interval() {
        let p = ModelParams::new(0.5, 0.3).unwrap();
        let est = simulate_batch_sojourn(&p, &SimConfig::new(1, 1)).unwrap();
        assert!(est.ci_half_width.is_infinite());
        assert!(simulate_batch_sojourn(&p, &SimConfig::new(0, 1)).is_err());
    }
}
