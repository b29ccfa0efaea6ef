//! Replicated simulation of standardized U-statistics and their Kolmogorov
//! distance to the standard normal.
//!
//! Replicate `i` draws its data from `stream(seed, DATA, i)` and its design
//! from `stream(seed, DESIGN, i)`. Replicates run on a rayon pool and are
//! collected in index order, so a result does not depend on the worker count.

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHasher;

use crate::bounds::k_nmd;
use crate::dataset::Dataset;
use crate::design::{sample_design, BernoulliDesign};
use crate::error::{Error, Result};
use crate::estimators::{complete_sums, complete_u_fast, selected_sums};
use crate::kernel::Kernel;
use crate::law::SourceLaw;
use crate::moments::{exact_moments, mc_moments, MomentProfile, DEFAULT_ENUMERATION_BUDGET};
use crate::normal;
use crate::rng::{domain, stream};
use crate::sum::KahanSum;

/// Outer draws used when a profile has to be estimated.
pub const PROFILE_MC_REPS: usize = 100_000;

/// Which statistic a replicate produces and how it is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `sqrt(n) U' / (m sigma_g)`
    Regime1,
    /// `sqrt(N) U' / sigma_h`
    Regime2,
    /// `sqrt(n) U' / sigma` with `sigma^2 = m^2 sigma_g^2 + alpha sigma_h^2`
    Regime3,
    /// The complete statistic: `sqrt(n) U_n / (m sigma_g)` for rank 1 and
    /// `U_n / (sigma_h sqrt(K_{n,m,d}))` for rank `d >= 2`.
    CompleteOnly,
    /// One dataset drawn from `data_seed`; only the design varies across
    /// replicates, and the statistic is `sqrt(N) B_n / sqrt(U_{h^2})`.
    ConditionalOnly { data_seed: u64 },
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Regime1 => f.write_str("regime1"),
            Regime::Regime2 => f.write_str("regime2"),
            Regime::Regime3 => f.write_str("regime3"),
            Regime::CompleteOnly => f.write_str("complete"),
            Regime::ConditionalOnly { data_seed } => write!(f, "conditional:{data_seed}"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// `regime1`, `regime2`, `regime3`, `complete`, or `conditional:<data seed>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regime1" => Ok(Regime::Regime1),
            "regime2" => Ok(Regime::Regime2),
            "regime3" => Ok(Regime::Regime3),
            "complete" => Ok(Regime::CompleteOnly),
            other => match other.strip_prefix("conditional:") {
                Some(seed) => seed
                    .parse()
                    .map(|data_seed| Regime::ConditionalOnly { data_seed })
                    .map_err(|_| Error::InvalidArgument(format!("bad data seed in '{other}'"))),
                None => Err(Error::UnknownName(format!("regime '{other}'"))),
            },
        }
    }
}

/// The budget `N` as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetRule {
    Literal(u64),
    NSquared,
    /// `round(sqrt(n))`
    SqrtN,
    /// `round(c n)`
    Linear(f64),
}

impl BudgetRule {
    pub fn budget(&self, n: usize) -> Result<u64> {
        let nf = n as f64;
        let v = match *self {
            BudgetRule::Literal(b) => return Ok(b),
            BudgetRule::NSquared => return (n as u64).checked_mul(n as u64).ok_or_else(|| overflow(n)),
            BudgetRule::SqrtN => nf.sqrt().round(),
            BudgetRule::Linear(c) => (c * nf).round(),
        };
        if !(v >= 1.0 && v < u64::MAX as f64) {
            return Err(Error::InvalidArgument(format!("budget rule {self} gives N = {v} at n = {n}")));
        }
        Ok(v as u64)
    }
}

fn overflow(n: usize) -> Error {
    Error::InvalidArgument(format!("n^2 overflows at n = {n}"))
}

impl fmt::Display for BudgetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetRule::Literal(b) => write!(f, "{b}"),
            BudgetRule::NSquared => f.write_str("n^2"),
            BudgetRule::SqrtN => f.write_str("sqrt_n"),
            BudgetRule::Linear(c) => write!(f, "cn:{c}"),
        }
    }
}

impl FromStr for BudgetRule {
    type Err = Error;

    /// An integer, `n^2`, `sqrt_n`, or `cn:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n^2" | "n2" => Ok(BudgetRule::NSquared),
            "sqrt_n" => Ok(BudgetRule::SqrtN),
            other => {
                if let Some(c) = other.strip_prefix("cn:") {
                    let c: f64 = c.parse().map_err(|_| Error::InvalidArgument(format!("bad factor in '{other}'")))?;
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(Error::InvalidArgument(format!("factor must be positive in '{other}'")));
                    }
                    Ok(BudgetRule::Linear(c))
                } else {
                    other
                        .parse()
                        .map(BudgetRule::Literal)
                        .map_err(|_| Error::InvalidArgument(format!("unknown budget rule '{other}'")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub law: String,
    pub kernel: String,
    pub regime: Regime,
    pub n: usize,
    pub m: usize,
    pub budget: BudgetRule,
    pub reps: usize,
    pub seed: u64,
    /// Rayon threads; 0 uses the global pool. Never affects the result.
    pub workers: usize,
}

impl ExperimentSpec {
    /// Every field that influences the result (the worker count does not).
    pub fn canonical(&self) -> String {
        format!(
            "law={};kernel={};regime={};n={};m={};N={};R={};seed={}",
            self.law, self.kernel, self.regime, self.n, self.m, self.budget, self.reps, self.seed
        )
    }

    pub fn digest(&self) -> String {
        let mut h = FxHasher::default();
        h.write(self.canonical().as_bytes());
        format!("{:016x}", h.finish())
    }

    pub fn resolve(&self) -> Result<(Kernel, SourceLaw)> {
        Ok((Kernel::from_name(&self.kernel, self.m)?, SourceLaw::from_name(&self.law)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub digest: String,
    pub spec: ExperimentSpec,
    pub budget: u64,
    pub ks: f64,
    /// DKW 95% half-width `sqrt(ln(2/0.05) / (2R))`.
    pub dkw_band: f64,
    pub mean: f64,
    pub var: f64,
    pub seconds: f64,
}

impl SimulationResult {
    pub const CSV_HEADER: &'static str = "regime,kernel,law,n,m,N,R,ks,dkw_band,mean,var,seconds";

    /// Numbers with 17 significant digits.
    pub fn csv_row(&self) -> String {
        let s = &self.spec;
        format!(
            "{},{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.regime, s.kernel, s.law, s.n, s.m, self.budget, s.reps, self.ks, self.dkw_band, self.mean, self.var,
            self.seconds
        )
    }
}

pub fn dkw_band(reps: usize) -> f64 {
    ((2.0f64 / 0.05).ln() / (2.0 * reps as f64)).sqrt()
}

/// `sup_z |F_R(z) - Phi(z)|` for the empirical CDF `F_R` of `sample`.
pub fn ks_to_normal(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("ks_to_normal needs a nonempty sample".into()));
    }
    if let Some(x) = sample.iter().find(|x| x.is_nan()) {
        return Err(Error::InvalidArgument(format!("sample contains {x}")));
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let r = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = normal::cdf(x);
        d = d.max(((i + 1) as f64 / r - f).abs()).max((i as f64 / r - f).abs());
    }
    Ok(d)
}

/// The exact profile when the law has finite support and the enumeration
/// fits, otherwise a Monte Carlo profile with [`PROFILE_MC_REPS`] draws.
pub fn resolve_profile(kernel: &Kernel, law: &SourceLaw, seed: u64) -> Result<MomentProfile> {
    match exact_moments(kernel, law) {
        Ok(p) => Ok(p),
        Err(Error::InvalidLaw(_) | Error::EnumerationTooLarge { .. }) => mc_moments(kernel, law, PROFILE_MC_REPS, seed),
        Err(e) => Err(e),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<SimulationResult> {
    let (kernel, law) = spec.resolve()?;
    let profile = resolve_profile(&kernel, &law, spec.seed)?;
    run_experiment_with(spec, &profile)
}

pub fn run_experiment_with(spec: &ExperimentSpec, profile: &MomentProfile) -> Result<SimulationResult> {
    let start = Instant::now();
    let stats = simulate_statistics(spec, profile)?;
    let ks = ks_to_normal(&stats)?;
    let mean = stats.iter().copied().collect::<KahanSum>().value() / stats.len() as f64;
    let var = if stats.len() > 1 {
        stats.iter().map(|x| (x - mean) * (x - mean)).collect::<KahanSum>().value() / (stats.len() - 1) as f64
    } else {
        0.0
    };
    Ok(SimulationResult {
        digest: spec.digest(),
        spec: spec.clone(),
        budget: spec.budget.budget(spec.n)?,
        ks,
        dkw_band: dkw_band(spec.reps),
        mean,
        var,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build a pool of {workers} threads: {e}")))?;
    Ok(pool.install(f))
}

/// The `R` standardized statistics in replicate order.
pub fn simulate_statistics(spec: &ExperimentSpec, profile: &MomentProfile) -> Result<Vec<f64>> {
    if spec.reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let (kernel, law) = spec.resolve()?;
    if profile.degree != spec.m {
        return Err(Error::InvalidArgument(format!(
            "profile is for degree {}, spec has m = {}",
            profile.degree, spec.m
        )));
    }
    let (n, m) = (spec.n, spec.m);
    let budget = spec.budget.budget(n)?;
    let mu = profile.mean_h;
    let dim = kernel.obs_dim();
    let seed = spec.seed;
    let reps = spec.reps as u64;

    let data_for = |i: u64| Dataset::from_rng(&law, n, dim, &mut stream(seed, domain::DATA, i));

    match spec.regime {
        Regime::Regime1 | Regime::Regime2 | Regime::Regime3 => {
            let scale = match spec.regime {
                Regime::Regime1 => {
                    profile.require_non_degenerate_g()?;
                    (n as f64).sqrt() / (m as f64 * profile.sd_g())
                }
                Regime::Regime2 => {
                    profile.require_nondegenerate()?;
                    (budget as f64).sqrt() / profile.sd_h()
                }
                _ => {
                    profile.require_non_degenerate_g()?;
                    let alpha = n as f64 / budget as f64;
                    let var = (m * m) as f64 * profile.var_g + alpha * profile.var_h;
                    (n as f64).sqrt() / var.sqrt()
                }
            };
            let design = BernoulliDesign::new(n, m, budget, seed)?;
            in_pool(spec.workers, || {
                (0..reps)
                    .into_par_iter()
                    .map(|i| {
                        let data = data_for(i);
                        let sd = sample_design(&design, &mut stream(seed, domain::DESIGN, i));
                        let sel = selected_sums(&data, &kernel, &sd, mu)?;
                        let u = if sd.n_hat == 0 { 0.0 } else { sel.sum / sd.n_hat as f64 };
                        Ok(scale * u)
                    })
                    .collect()
            })?
        }
        Regime::CompleteOnly => {
            profile.require_nondegenerate()?;
            let scale = if profile.rank_d == 1 {
                profile.require_non_degenerate_g()?;
                (n as f64).sqrt() / (m as f64 * profile.sd_g())
            } else {
                1.0 / (profile.sd_h() * k_nmd(n, m, profile.rank_d)?.sqrt())
            };
            in_pool(spec.workers, || {
                (0..reps)
                    .into_par_iter()
                    .map(|i| Ok(scale * (complete_u_fast(&data_for(i), &kernel, DEFAULT_ENUMERATION_BUDGET)? - mu)))
                    .collect()
            })?
        }
        Regime::ConditionalOnly { data_seed } => {
            let data = Dataset::generate(&law, n, dim, data_seed);
            let design = BernoulliDesign::new(n, m, budget, seed)?;
            let all = complete_sums(&data, &kernel, mu, DEFAULT_ENUMERATION_BUDGET)?;
            let u_h2 = all.sum_sq / design.total as f64;
            if !(u_h2 > 0.0) {
                return Err(Error::DegenerateConditionalLaw);
            }
            let nn = budget as f64;
            let p = design.p;
            let scale = nn.sqrt() / (nn * (1.0 - p).sqrt() * u_h2.sqrt());
            in_pool(spec.workers, || {
                (0..reps)
                    .into_par_iter()
                    .map(|i| {
                        let sd = sample_design(&design, &mut stream(seed, domain::DESIGN, i));
                        let sel = selected_sums(&data, &kernel, &sd, mu)?;
                        Ok(scale * (sel.sum - p * all.sum))
                    })
                    .collect()
            })?
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares of `ln ks` on `ln n` over `(n, ks)` points.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("rate_fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(n, ks)) = points.iter().find(|&&(n, ks)| !(n > 0.0 && ks > 0.0)) {
        return Err(Error::InvalidArgument(format!("rate_fit needs n > 0 and ks > 0, got ({n}, {ks})")));
    }
    let k = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(n, ks)| (n.ln(), ks.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate_fit needs at least two distinct n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2 })
}

/// Runs `base` at every `n` in `grid` and fits the rate of the KS distances.
pub fn rate_experiment(base: &ExperimentSpec, grid: &[usize]) -> Result<(Vec<SimulationResult>, RateFit)> {
    let (kernel, law) = base.resolve()?;
    let profile = resolve_profile(&kernel, &law, base.seed)?;
    let results = grid
        .iter()
        .map(|&n| run_experiment_with(&ExperimentSpec { n, ..base.clone() }, &profile))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = results.iter().map(|r| (r.spec.n as f64, r.ks)).collect();
    let fit = rate_fit(&points)?;
    Ok((results, fit))
}
