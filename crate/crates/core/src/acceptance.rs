//! The ten acceptance criteria as runnable checks.
//!
//! Each check returns a [`CriterionOutcome`] carrying a pass flag and a
//! one-line detail with the measured quantities. A check that cannot even be
//! set up (for example an infeasible design) fails with the error in its
//! detail instead of panicking.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bounds::{explicit_complete_bound, explicit_conditional_bound, lower_tail_bound_uh2, nhat_deviation_bound};
use crate::combinatorics::{binom, for_each_colex, BinomialTable};
use crate::dataset::Dataset;
use crate::design::{sample_design, BernoulliDesign};
use crate::error::{Error, Result};
use crate::estimators::{complete_sums, conditional_bn_moments, incomplete_u};
use crate::hoeffding::decompose_uh2;
use crate::kernel::Kernel;
use crate::law::SourceLaw;
use crate::moments::{exact_moments, DEFAULT_ENUMERATION_BUDGET};
use crate::montecarlo::{
    rate_experiment, resolve_profile, run_experiment_with, BudgetRule, ExperimentSpec, Regime,
};
use crate::rng::{domain, stream};
use crate::stein::{bennett_mc_check, censor_contraction_check, lemma_a2_suite, BennettFamily, BENNETT_BOUND};
use crate::sum::KahanSum;

pub const CRITERIA: usize = 10;

/// Criteria whose literal parameters cannot be realized. They are still run
/// and still reported as failures.
pub const UNATTAINABLE: [usize; 1] = [7];

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}) [{:.1}s]: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "conditional explicit bound",
        2 => "complete explicit bound",
        3 => "decomposition identity",
        4 => "Hoeffding identity of U_h2",
        5 => "conditional moments",
        6 => "regime contrast",
        7 => "rate property",
        8 => "tail inequalities",
        9 => "appendix suite",
        10 => "combinatorics",
        _ => "unknown",
    }
}

/// Runs criterion `id` (1 to 10).
pub fn run(id: usize) -> CriterionOutcome {
    let start = Instant::now();
    let res = match id {
        1 => conditional_explicit(),
        2 => complete_explicit(),
        3 => decomposition_identity(),
        4 => hoeffding_identity(),
        5 => conditional_moments(),
        6 => regime_contrast(),
        7 => rate_property(),
        8 => tail_inequalities(),
        9 => appendix_suite(),
        10 => combinatorics(),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    let (passed, detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome { id, title: title(id), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_all() -> Vec<CriterionOutcome> {
    (1..=CRITERIA).map(run).collect()
}

type Check = Result<(bool, String)>;

fn conditional_explicit() -> Check {
    let (n, m, budget, data_seed, reps) = (30, 2, 100u64, 1u64, 200_000);
    let law = SourceLaw::from_name("stdnormal")?;
    let kernel = Kernel::product(m)?;
    let profile = resolve_profile(&kernel, &law, 1)?;
    let spec = ExperimentSpec {
        law: "stdnormal".into(),
        kernel: "product".into(),
        regime: Regime::ConditionalOnly { data_seed },
        n,
        m,
        budget: BudgetRule::Literal(budget),
        reps,
        seed: 1,
        workers: 0,
    };
    let sim = run_experiment_with(&spec, &profile)?;
    let data = Dataset::generate(&law, n, 1, data_seed);
    let design = BernoulliDesign::new(n, m, budget, 1)?;
    let sd = sample_design(&design, &mut stream(1, domain::DESIGN, 0));
    let bundle = incomplete_u(&data, &kernel, &sd, profile.mean_h)?;
    let bound = explicit_conditional_bound(&bundle, budget, design.p)?;
    let limit = bound.total + sim.dkw_band;
    Ok((
        sim.ks <= limit,
        format!("ks = {:.5} <= bound {:.5} + DKW {:.5}", sim.ks, bound.total, sim.dkw_band),
    ))
}

fn complete_explicit() -> Check {
    let (n, reps) = (400, 100_000);
    let kernel = Kernel::sample_variance();
    let law = SourceLaw::uniform3();
    let profile = exact_moments(&kernel, &law)?;
    let spec = ExperimentSpec {
        law: "uniform3".into(),
        kernel: "sample_variance".into(),
        regime: Regime::CompleteOnly,
        n,
        m: 2,
        budget: BudgetRule::Literal(1),
        reps,
        seed: 2,
        workers: 0,
    };
    let sim = run_experiment_with(&spec, &profile)?;
    let bound = explicit_complete_bound(&profile, n, 2)?;
    Ok((
        sim.ks <= bound.total && sim.ks <= 0.1,
        format!("ks = {:.5} <= bound {:.5} and <= 0.1", sim.ks, bound.total),
    ))
}

fn decomposition_identity() -> Check {
    let laws = ["uniform3", "rademacher", "stdnormal", "uniform01", "exp1"];
    let outcomes: Vec<Result<(f64, bool)>> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(3, domain::CHECK, i);
            let n = rng.gen_range(8..=40usize);
            let m = if n > 12 && rng.gen_bool(0.3) { 3 } else { 2 };
            let kernel = match rng.gen_range(0..3) {
                0 => Kernel::product(m)?,
                1 if m == 2 => Kernel::sample_variance(),
                _ => Kernel::mean_pow3(m)?,
            };
            let law = SourceLaw::from_name(laws[i as usize % laws.len()])?;
            let total = binom(n as u64, m as u64)? as u64;
            // log-uniform budgets so that some designs select nothing
            let budget = ((total as f64 - 1.0).ln() * rng.gen::<f64>()).exp().floor().max(1.0) as u64;
            let data = Dataset::generate(&law, n, 1, i);
            let design = BernoulliDesign::new(n, m, budget, i)?;
            let sd = sample_design(&design, &mut stream(i, domain::DESIGN, 0));
            let mu = rng.gen_range(-1.0..1.0);
            let b = incomplete_u(&data, &kernel, &sd, mu)?;
            if b.n_hat == 0 {
                return Ok((0.0, b.u_incomplete == 0.0));
            }
            let scale = b.u_incomplete.abs().max(
                b.budget as f64 / b.n_hat as f64 * ((1.0 - b.p).sqrt() * b.b_n.abs() + b.u_complete_centered().abs()),
            );
            let rel = (b.u_incomplete - b.decomposition_rhs()).abs() / scale.max(f64::MIN_POSITIVE);
            Ok((rel, rel <= 1e-12))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let worst = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let failures = outcomes.iter().filter(|o| !o.1).count();
    Ok((failures == 0, format!("1000 pairs, worst relative residual {worst:.2e}, {failures} failures")))
}

fn hoeffding_identity() -> Check {
    let laws = ["rademacher", "uniform3"];
    let mut worst = 0.0f64;
    for i in 0..200u64 {
        let mut rng = stream(4, domain::CHECK, i);
        let n = rng.gen_range(6..=12usize);
        let law = SourceLaw::from_name(laws[i as usize % 2])?;
        let kernel = match (i / 2) % 3 {
            0 => Kernel::sample_variance(),
            1 => Kernel::mean_pow3(2)?,
            _ => Kernel::custom("x+y+xy", 2, 1, |a| a[0] + a[1] + a[0] * a[1])?,
        };
        let profile = exact_moments(&kernel, &law)?;
        let data = Dataset::generate(&law, n, 1, 1000 + i);
        let d = decompose_uh2(&data, &kernel, &law, &profile)?;
        worst = worst.max((d.lhs - d.rhs()).abs());
    }
    Ok((worst <= 1e-10, format!("200 instances, worst |lhs - rhs| = {worst:.2e}")))
}

/// Running sums for a mean and its standard error.
#[derive(Default)]
struct Moments {
    s1: KahanSum,
    s2: KahanSum,
    s4: KahanSum,
    l1: KahanSum,
    l2: KahanSum,
}

fn conditional_moments() -> Check {
    const DRAWS: usize = 1_000_000;
    const CHUNK: usize = 50_000;
    let laws = ["uniform3", "rademacher", "stdnormal", "exp1"];
    let rows: Vec<Result<(bool, f64)>> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(5, domain::CHECK, i);
            let n = rng.gen_range(6..=8usize);
            let law = SourceLaw::from_name(laws[i as usize % laws.len()])?;
            let kernel = if i % 2 == 0 { Kernel::sample_variance() } else { Kernel::mean_pow3(2)? };
            let total = binom(n as u64, 2)? as u64;
            let budget = rng.gen_range(2..total);
            let data = Dataset::generate(&law, n, 1, 500 + i);
            let design = BernoulliDesign::new(n, 2, budget, i)?;
            let mu = 0.0;
            let analytic = conditional_bn_moments(&data, &kernel, &design, mu)?;

            let mut h = Vec::with_capacity(total as usize);
            let mut args = Vec::new();
            for_each_colex(n, 2, |c| {
                data.gather(c, &mut args);
                h.push(kernel.eval(&args) - mu);
            });
            let p = design.p;
            let u_h2 = h.iter().map(|x| x * x).sum::<f64>() / total as f64;
            let denom = (budget as f64 * (1.0 - p) * u_h2).sqrt();
            let coef: Vec<f64> = h.iter().map(|x| x / denom).collect();

            // independent per-index Bernoulli oracle, not the design sampler
            let parts: Vec<Moments> = (0..DRAWS / CHUNK)
                .map(|c| {
                    let mut r = stream(i, domain::ORACLE, c as u64);
                    let mut acc = Moments::default();
                    for _ in 0..CHUNK {
                        let (mut zeta, mut lyap) = (0.0, 0.0);
                        for &a in &coef {
                            let z = if r.gen::<f64>() < p { 1.0 } else { 0.0 };
                            let t = (z - p) * a;
                            zeta += t;
                            lyap += (t * t * t).abs();
                        }
                        acc.s1.add(zeta);
                        acc.s2.add(zeta * zeta);
                        acc.s4.add(zeta.powi(4));
                        acc.l1.add(lyap);
                        acc.l2.add(lyap * lyap);
                    }
                    acc
                })
                .collect();
            let mut tot = Moments::default();
            for part in &parts {
                tot.s1.add(part.s1.value());
                tot.s2.add(part.s2.value());
                tot.s4.add(part.s4.value());
                tot.l1.add(part.l1.value());
                tot.l2.add(part.l2.value());
            }
            let r = DRAWS as f64;
            let mean = tot.s1.value() / r;
            let m2 = tot.s2.value() / r;
            let m4 = tot.s4.value() / r;
            let var = m2 - mean * mean;
            let lyap = tot.l1.value() / r;
            let se_mean = (var / r).sqrt();
            let se_var = ((m4 - m2 * m2).max(0.0) / r).sqrt();
            let se_lyap = ((tot.l2.value() / r - lyap * lyap).max(0.0) / r).sqrt();
            let z = [
                (mean - analytic.mean).abs() / se_mean,
                (var - analytic.var).abs() / se_var,
                (lyap - analytic.abs3_sum).abs() / se_lyap,
            ];
            let worst = z.iter().copied().fold(0.0, f64::max);
            Ok((worst <= 3.0, worst))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| !r.0).count();
    Ok((failures == 0, format!("20 instances x 3 moments, worst deviation {worst:.2} SE, {failures} instances over 3 SE")))
}

fn regime_contrast() -> Check {
    let kernel = Kernel::product(2)?;
    let law = SourceLaw::rademacher();
    let profile = exact_moments(&kernel, &law)?;
    let spec = ExperimentSpec {
        law: "rademacher".into(),
        kernel: "product".into(),
        regime: Regime::Regime2,
        n: 300,
        m: 2,
        budget: BudgetRule::Literal(300),
        reps: 20_000,
        seed: 6,
        workers: 0,
    };
    let inc = run_experiment_with(&spec, &profile)?;
    let comp = run_experiment_with(&ExperimentSpec { regime: Regime::CompleteOnly, ..spec }, &profile)?;
    Ok((
        inc.ks <= 0.08 && comp.ks >= 0.15,
        format!("incomplete ks = {:.5} <= 0.08, complete ks = {:.5} >= 0.15", inc.ks, comp.ks),
    ))
}

fn rate_property() -> Check {
    let grid = [50, 100, 200, 400];
    let spec = ExperimentSpec {
        law: "uniform3".into(),
        kernel: "sample_variance".into(),
        regime: Regime::Regime1,
        n: grid[0],
        m: 2,
        budget: BudgetRule::NSquared,
        reps: 20_000,
        seed: 7,
        workers: 8,
    };
    for &n in &grid {
        let total = binom(n as u64, 2)?;
        if (n * n) as u128 >= total {
            return Ok((
                false,
                format!("infeasible: N = n^2 = {} >= C({n}, 2) = {total}, so p = N/C(n,m) > 1", n * n),
            ));
        }
    }
    let (_, fit) = rate_experiment(&spec, &grid)?;
    Ok((
        (-0.75..=-0.30).contains(&fit.slope),
        format!("slope = {:.4} in [-0.75, -0.30] (r2 = {:.3})", fit.slope, fit.r2),
    ))
}

fn tail_inequalities() -> Check {
    const REPS: u64 = 1_000_000;
    let mut ok = true;
    let mut detail = Vec::new();
    for budget in [10u64, 28, 50] {
        let design = BernoulliDesign::new(30, 2, budget, 8)?;
        let nn = budget as f64;
        let hits: u64 = (0..REPS / 10_000)
            .into_par_iter()
            .map(|c| {
                let mut r = stream(8, domain::CHECK, budget << 32 | c);
                (0..10_000).filter(|_| (design.sample_count(&mut r) as f64 / nn - 1.0).abs() > 0.5).count() as u64
            })
            .sum();
        let freq = hits as f64 / REPS as f64;
        let bound = nhat_deviation_bound(budget);
        ok &= freq <= bound;
        detail.push(format!("N = {budget}: {freq:.5} <= {bound:.5}"));
    }

    let (n, m) = (10, 2);
    let kernel = Kernel::sample_variance();
    let law = SourceLaw::uniform3();
    let profile = exact_moments(&kernel, &law)?;
    let pairs = binom(n as u64, m as u64)? as f64;
    let half = profile.var_h / 2.0;
    let hits: Vec<Result<u64>> = (0..REPS / 10_000)
        .into_par_iter()
        .map(|c| {
            let mut count = 0;
            for j in 0..10_000 {
                let data = Dataset::from_rng(&law, n, 1, &mut stream(8, domain::DATA, c * 10_000 + j));
                let s = complete_sums(&data, &kernel, profile.mean_h, DEFAULT_ENUMERATION_BUDGET)?;
                count += u64::from(s.sum_sq / pairs <= half);
            }
            Ok(count)
        })
        .collect();
    let hits: u64 = hits.into_iter().sum::<Result<u64>>()?;
    let freq = hits as f64 / REPS as f64;
    let bound = lower_tail_bound_uh2(&profile, n, m)?;
    ok &= freq <= bound;
    detail.push(format!("P(U_h2 <= sigma_h^2/2) = {freq:.5} <= {bound:.5}"));
    Ok((ok, detail.join("; ")))
}

fn appendix_suite() -> Check {
    let suite = lemma_a2_suite();
    let failures: Vec<String> = suite.failures().iter().map(|r| r.name.to_string()).collect();
    let b = bennett_mc_check(BennettFamily::ScaledRademacher, 100, 1_000_000, 9);
    let bennett_ok = b.estimate + 5.0 * b.se <= BENNETT_BOUND;
    let (contraction, upper) = censor_contraction_check(1_000_000, 9);
    let ok = suite.passed() && bennett_ok && contraction.passed() && upper.passed();
    let min_slack = suite.records.iter().map(|r| r.worst_slack).fold(f64::INFINITY, f64::min);
    Ok((
        ok,
        format!(
            "{} regional bounds, min slack {min_slack:.3e}{}; Bennett {:.5} + 5 SE ({:.1e}) <= {BENNETT_BOUND}; censoring contraction slack {:.1e}",
            suite.records.len(),
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join(",")) },
            b.estimate,
            b.se,
            contraction.worst_slack
        ),
    ))
}

/// Largest `n` whose tables for `m > n/2` are still enumerated; above it only
/// `m = n - 1` remains with `C(n, m) <= 10^4`, and its `n^2` table is skipped.
const DENSE_TABLE_MAX_N: usize = 256;

fn combinatorics() -> Check {
    const LIMIT: u128 = 10_000;
    let mut pairs = Vec::new();
    for n in 1..=LIMIT as usize {
        for m in (1..=n / 2).take_while(|&m| binom(n as u64, m as u64).is_ok_and(|t| t <= LIMIT)) {
            pairs.push((n, m));
            if n <= DENSE_TABLE_MAX_N {
                pairs.push((n, n - m));
            }
        }
        if n <= DENSE_TABLE_MAX_N {
            pairs.push((n, n));
        }
    }
    let bad: usize = pairs
        .par_iter()
        .map(|&(n, m)| {
            let table = BinomialTable::new(n, m);
            let mut out = vec![0usize; m];
            let mut next = 0u128;
            let mut errors = 0usize;
            for_each_colex(n, m, |c| {
                table.unrank_into(next, &mut out);
                if out != c || table.rank(c).ok() != Some(next) {
                    errors += 1;
                }
                next += 1;
            });
            if table.total().ok() != Some(next) {
                errors += 1;
            }
            errors
        })
        .sum();
    let bijection = format!("rank/unrank bijection on {} (n, m) pairs, {bad} mismatches", pairs.len());

    // Inclusion indicators of the six index pairs of (4, 2) with N = 3 are
    // i.i.d. Bernoulli(1/2), so all 64 patterns are equally likely.
    const REPS: u64 = 1_000_000;
    let design = BernoulliDesign::relaxed(4, 2, 3, 10)?;
    let counts = (0..REPS / 10_000)
        .into_par_iter()
        .map(|c| {
            let mut cells = [0u64; 64];
            for j in 0..10_000 {
                let sd = sample_design(&design, &mut stream(10, domain::DESIGN, c * 10_000 + j));
                let pattern = sd.ranks.iter().fold(0usize, |acc, &r| acc | 1 << r);
                cells[pattern] += 1;
            }
            cells
        })
        .reduce(
            || [0u64; 64],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let expected = REPS as f64 / 64.0;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let chi = ChiSquared::new(63.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = chi.sf(stat);
    Ok((
        bad == 0 && p_value >= 1e-3,
        format!("{bijection}; chi-square over 64 inclusion patterns = {stat:.2} (df 63, p = {p_value:.4})"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn titles_cover_every_criterion() {
        for id in 1..=CRITERIA {
            assert_ne!(title(id), "unknown");
        }
        let bogus = run(11);
        assert!(!bogus.passed);
        assert!(bogus.line().starts_with("FAIL criterion 11"));
    }
}
