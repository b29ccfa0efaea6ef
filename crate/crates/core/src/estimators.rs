//! Complete and incomplete U-statistics on a dataset, the conditional
//! fluctuation term `B_n`, and the exact conditional moments of its
//! standardized version given the data.

use rand::Rng;

use crate::combinatorics::{binom, next_colex, BinomialTable};
use crate::dataset::Dataset;
use crate::design::{BernoulliDesign, SampledDesign};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::moments::DEFAULT_ENUMERATION_BUDGET;
use crate::rng::{domain, stream};
use crate::sum::KahanSum;

/// Auxiliary subsample size when the full index set exceeds the budget.
pub const AUX_SAMPLE: usize = 1_000_000;
const BLOCK: usize = 4096;

/// Sums of `k - mu`, `(k - mu)^2` and `|k - mu|^3` over a set of index tuples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelSums {
    pub count: u128,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_abs3: f64,
}

impl KernelSums {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Blocked accumulator: plain sums inside short blocks, compensated across blocks.
#[derive(Default)]
struct Acc {
    k: [KahanSum; 3],
    blk: [f64; 3],
    len: usize,
    count: u128,
}

impl Acc {
    #[inline]
    fn push(&mut self, v: f64) {
        let sq = v * v;
        self.blk[0] += v;
        self.blk[1] += sq;
        self.blk[2] += sq * v.abs();
        self.len += 1;
        if self.len == BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        for (k, b) in self.k.iter_mut().zip(self.blk.iter_mut()) {
            k.add(*b);
            *b = 0.0;
        }
        self.count += self.len as u128;
        self.len = 0;
    }

    fn finish(mut self) -> KernelSums {
        self.flush();
        KernelSums { count: self.count, sum: self.k[0].value(), sum_sq: self.k[1].value(), sum_abs3: self.k[2].value() }
    }
}

fn check_shapes(data: &Dataset, k: &Kernel) -> Result<()> {
    if data.obs_dim() != k.obs_dim() {
        return Err(Error::InvalidArgument(format!(
            "kernel '{}' takes observations of dimension {}, data has {}",
            k.name(),
            k.obs_dim(),
            data.obs_dim()
        )));
    }
    if data.n() < k.degree() {
        return Err(Error::InvalidArgument(format!("n = {} < m = {}", data.n(), k.degree())));
    }
    Ok(())
}

fn enumeration_count(n: usize, m: usize, budget: u64) -> Result<u128> {
    let total = binom(n as u64, m as u64)?;
    if total > budget as u128 {
        return Err(Error::EnumerationTooLarge { count: total as f64, budget });
    }
    Ok(total)
}

/// Sums of the shifted kernel `k - mu` over every increasing index tuple.
pub fn complete_sums(data: &Dataset, k: &Kernel, mu: f64, budget: u64) -> Result<KernelSums> {
    check_shapes(data, k)?;
    let (n, m) = (data.n(), k.degree());
    enumeration_count(n, m, budget)?;
    let mut acc = Acc::default();
    let v = data.values();
    if m == 2 && k.obs_dim() == 1 {
        // colex order: j outer, i < j inner
        for j in 1..n {
            let xj = v[j];
            for &xi in &v[..j] {
                acc.push(k.eval(&[xi, xj]) - mu);
            }
        }
    } else {
        let mut c: Vec<usize> = (0..m).collect();
        let mut args = Vec::with_capacity(m * k.obs_dim());
        loop {
            data.gather(&c, &mut args);
            acc.push(k.eval(&args) - mu);
            if !next_colex(&mut c, n) {
                break;
            }
        }
    }
    Ok(acc.finish())
}

/// `U_n`: the average of `k` over all `C(n, m)` tuples.
pub fn complete_u(data: &Dataset, k: &Kernel) -> Result<f64> {
    complete_u_with_budget(data, k, DEFAULT_ENUMERATION_BUDGET)
}

pub fn complete_u_with_budget(data: &Dataset, k: &Kernel, budget: u64) -> Result<f64> {
    Ok(complete_sums(data, k, 0.0, budget)?.mean())
}

/// `U_n`, through the kernel's closed form when it has one and by
/// enumeration otherwise.
pub fn complete_u_fast(data: &Dataset, k: &Kernel, budget: u64) -> Result<f64> {
    check_shapes(data, k)?;
    match k.complete_mean_closed_form(data.values()) {
        Some(u) => Ok(u),
        None => complete_u_with_budget(data, k, budget),
    }
}

/// Sums of `k - mu` over the tuples selected by `sd`.
pub fn selected_sums(data: &Dataset, k: &Kernel, sd: &SampledDesign, mu: f64) -> Result<KernelSums> {
    check_design(data, k, &sd.design)?;
    let mut idx = vec![0usize; k.degree()];
    let mut args = Vec::with_capacity(k.degree() * k.obs_dim());
    let mut acc = Acc::default();
    for j in 0..sd.ranks.len() {
        sd.tuple(j, &mut idx);
        data.gather(&idx, &mut args);
        acc.push(k.eval(&args) - mu);
    }
    Ok(acc.finish())
}

fn check_design(data: &Dataset, k: &Kernel, d: &BernoulliDesign) -> Result<()> {
    check_shapes(data, k)?;
    if d.n != data.n() || d.m != k.degree() {
        return Err(Error::InvalidArgument(format!(
            "design is for (n, m) = ({}, {}), data/kernel give ({}, {})",
            d.n,
            d.m,
            data.n(),
            k.degree()
        )));
    }
    Ok(())
}

/// Sums over `draws` tuples drawn uniformly with replacement, rescaled to
/// estimate the sums over the full index set.
fn auxiliary_sums(data: &Dataset, k: &Kernel, mu: f64, seed: u64, draws: usize) -> Result<KernelSums> {
    let (n, m) = (data.n(), k.degree());
    let total = binom(n as u64, m as u64)?;
    let table = BinomialTable::new(n, m);
    let mut rng = stream(seed, domain::AUX, 0);
    let mut idx = vec![0usize; m];
    let mut args = Vec::with_capacity(m * k.obs_dim());
    let mut acc = Acc::default();
    for _ in 0..draws {
        table.unrank_into(rng.gen_range(0..total), &mut idx);
        data.gather(&idx, &mut args);
        acc.push(k.eval(&args) - mu);
    }
    let s = acc.finish();
    let scale = total as f64 / draws as f64;
    Ok(KernelSums { count: total, sum: s.sum * scale, sum_sq: s.sum_sq * scale, sum_abs3: s.sum_abs3 * scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    /// `U_n` of the kernel as given (not shifted by `mu`).
    pub u_complete: f64,
    /// `U'`: selected sum of `k - mu` over `N_hat`; zero when nothing is selected.
    pub u_incomplete: f64,
    /// Selected sum of `k - mu` over `N`.
    pub u_incomplete_det: f64,
    pub b_n: f64,
    /// Average of `(k - mu)^2` over the full index set.
    pub u_h2: f64,
    /// Average of `|k - mu|^3` over the full index set.
    pub u_abs_h3: f64,
    pub n_hat: u64,
    pub p: f64,
    pub budget: u64,
    pub mu: f64,
    /// True when the full-index-set quantities come from the auxiliary subsample.
    pub approximate: bool,
}

impl EstimateBundle {
    /// `U_n - mu`.
    pub fn u_complete_centered(&self) -> f64 {
        self.u_complete - self.mu
    }

    /// Right side of `U' = (N / N_hat) (sqrt(1 - p) B_n + (U_n - mu))`.
    pub fn decomposition_rhs(&self) -> f64 {
        if self.n_hat == 0 {
            return 0.0;
        }
        self.budget as f64 / self.n_hat as f64 * ((1.0 - self.p).sqrt() * self.b_n + self.u_complete_centered())
    }

    pub const CSV_HEADER: &'static str =
        "u_complete,u_incomplete,u_incomplete_det,b_n,u_h2,u_abs_h3,n_hat,p";
}

/// All estimators for the realized design `sd`, with the kernel shifted by `mu`.
pub fn incomplete_u(data: &Dataset, k: &Kernel, sd: &SampledDesign, mu: f64) -> Result<EstimateBundle> {
    incomplete_u_with_budget(data, k, sd, mu, DEFAULT_ENUMERATION_BUDGET)
}

pub fn incomplete_u_with_budget(
    data: &Dataset,
    k: &Kernel,
    sd: &SampledDesign,
    mu: f64,
    budget: u64,
) -> Result<EstimateBundle> {
    let d = &sd.design;
    check_design(data, k, d)?;
    let sel = selected_sums(data, k, sd, mu)?;
    let (all, approximate) = match complete_sums(data, k, mu, budget) {
        Ok(s) => (s, false),
        Err(Error::EnumerationTooLarge { .. }) => (auxiliary_sums(data, k, mu, d.seed, AUX_SAMPLE)?, true),
        Err(e) => return Err(e),
    };
    let total = d.total as f64;
    let nn = d.budget as f64;
    let u_c = all.sum / total;
    Ok(EstimateBundle {
        u_complete: u_c + mu,
        u_incomplete: if sd.n_hat == 0 { 0.0 } else { sel.sum / sd.n_hat as f64 },
        u_incomplete_det: sel.sum / nn,
        b_n: (sel.sum - d.p * all.sum) / (nn * (1.0 - d.p).sqrt()),
        u_h2: all.sum_sq / total,
        u_abs_h3: all.sum_abs3 / total,
        n_hat: sd.n_hat,
        p: d.p,
        budget: d.budget,
        mu,
        approximate,
    })
}

/// Conditional law of `sqrt(N) B_n / sqrt(U_h2)` given the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub var: f64,
    /// Sum of the conditional third absolute moments of the summands.
    pub abs3_sum: f64,
}

/// `(1 - 2p + 2p^2)`, from `E|Z - p|^3 = p (1 - p) (1 - 2p + 2p^2)`.
pub fn third_moment_factor(p: f64) -> f64 {
    1.0 - 2.0 * p + 2.0 * p * p
}

/// Lyapunov ratio `U_|h|^3 (1 - 2p + 2p^2) / (U_h2^{3/2} sqrt(N (1 - p)))`.
pub fn lyapunov_sum(u_h2: f64, u_abs_h3: f64, budget: u64, p: f64) -> f64 {
    u_abs_h3 * third_moment_factor(p) / (u_h2.powf(1.5) * (budget as f64 * (1.0 - p)).sqrt())
}

/// Analytic conditional moments of `sqrt(N) B_n / sqrt(U_h2)` for the kernel
/// shifted by `mu`, computed from the data alone.
pub fn conditional_bn_moments(data: &Dataset, k: &Kernel, design: &BernoulliDesign, mu: f64) -> Result<ConditionalMoments> {
    check_design(data, k, design)?;
    let all = complete_sums(data, k, mu, DEFAULT_ENUMERATION_BUDGET)?;
    if all.sum_sq <= 0.0 {
        return Err(Error::DegenerateConditionalLaw);
    }
    let total = design.total as f64;
    let (p, nn) = (design.p, design.budget as f64);
    let u_h2 = all.sum_sq / total;
    Ok(ConditionalMoments {
        // each summand carries the factor Z - p, whose mean is zero
        mean: 0.0,
        // sum_i p (1 - p) h_i^2 / (U_h2 N (1 - p))
        var: p * all.sum_sq / (u_h2 * nn),
        abs3_sum: lyapunov_sum(u_h2, all.sum_abs3 / total, design.budget, p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::sample_design;
    use crate::law::SourceLaw;

    fn ds(v: &[f64]) -> Dataset {
        Dataset::from_values(v.to_vec(), 1).unwrap()
    }

    #[test]
    fn complete_examples() {
        let prod = Kernel::product(2).unwrap();
        assert!((complete_u(&ds(&[1.0, 2.0, 3.0]), &prod).unwrap() - 11.0 / 3.0).abs() < 1e-15);
        let sv = Kernel::sample_variance();
        assert!((complete_u(&ds(&[1.0, 2.0, 3.0, 4.0]), &sv).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        let c = Kernel::constant(2.5, 3).unwrap();
        assert_eq!(complete_u(&ds(&[0.1, -4.0, 9.0, 2.0, 1.0]), &c).unwrap(), 2.5);
    }

    #[test]
    fn complete_generic_path_matches_pair_path() {
        let data = Dataset::generate(&SourceLaw::from_name("stdnormal").unwrap(), 25, 1, 4);
        let sv = Kernel::sample_variance();
        let custom = Kernel::custom("sv_generic", 2, 1, |a| 0.5 * (a[0] - a[1]).powi(2)).unwrap();
        let a = complete_u(&data, &sv).unwrap();
        let b = complete_u(&data, &custom).unwrap();
        assert!((a - b).abs() < 1e-14);
        // degree 3 against brute force
        let k3 = Kernel::product(3).unwrap();
        let v = data.values();
        let mut brute = 0.0;
        let mut cnt = 0.0;
        for i in 0..25 {
            for j in i + 1..25 {
                for l in j + 1..25 {
                    brute += v[i] * v[j] * v[l];
                    cnt += 1.0;
                }
            }
        }
        assert!((complete_u(&data, &k3).unwrap() - brute / cnt).abs() < 1e-13);
    }

    #[test]
    fn complete_respects_budget() {
        let data = ds(&[0.0; 30]);
        let err = complete_u_with_budget(&data, &Kernel::product(3).unwrap(), 100).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { budget: 100, .. }));
    }

    #[test]
    fn full_selection_equals_complete() {
        let data = ds(&[0.3, -1.2, 2.0, 0.7]);
        let design = BernoulliDesign::relaxed(4, 2, 3, 0).unwrap();
        let sd = SampledDesign::full(&design);
        let sv = Kernel::sample_variance();
        let b = incomplete_u(&data, &sv, &sd, 0.25).unwrap();
        assert!((b.u_incomplete - (complete_u(&data, &sv).unwrap() - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn empty_selection_gives_zero() {
        let data = ds(&[0.3, -1.2, 2.0, 0.7, 5.0]);
        let design = BernoulliDesign::new(5, 2, 1, 0).unwrap();
        let sd = SampledDesign::from_ranks(&design, vec![]).unwrap();
        let b = incomplete_u(&data, &Kernel::product(2).unwrap(), &sd, 0.0).unwrap();
        assert_eq!(b.u_incomplete, 0.0);
        assert_eq!(b.n_hat, 0);
        assert_eq!(b.decomposition_rhs(), 0.0);
    }

    #[test]
    fn decomposition_identity_on_seeded_runs() {
        let law = SourceLaw::uniform3();
        let k = Kernel::sample_variance();
        for seed in 0..50 {
            let data = Dataset::generate(&law, 20, 1, seed);
            let design = BernoulliDesign::new(20, 2, 40, seed).unwrap();
            let sd = sample_design(&design, &mut stream(seed, domain::DESIGN, 0));
            let b = incomplete_u(&data, &k, &sd, 2.0 / 3.0).unwrap();
            let rhs = b.decomposition_rhs();
            let scale = b.u_incomplete.abs().max(b.u_incomplete_det.abs()).max(1e-300);
            assert!((b.u_incomplete - rhs).abs() <= 1e-12 * scale.max(b.u_complete_centered().abs()), "seed {seed}");
        }
    }

    #[test]
    fn conditional_moments_are_standardized() {
        let data = Dataset::generate(&SourceLaw::from_name("stdnormal").unwrap(), 12, 1, 5);
        let design = BernoulliDesign::new(12, 2, 20, 0).unwrap();
        let c = conditional_bn_moments(&data, &Kernel::product(2).unwrap(), &design, 0.0).unwrap();
        assert_eq!(c.mean, 0.0);
        assert!((c.var - 1.0).abs() < 1e-14);
        assert!(c.abs3_sum > 0.0);
        let zero = Kernel::constant(1.0, 2).unwrap();
        assert_eq!(
            conditional_bn_moments(&data, &zero, &design, 1.0),
            Err(Error::DegenerateConditionalLaw)
        );
    }

    #[test]
    fn approximate_flag_when_over_budget() {
        let data = Dataset::generate(&SourceLaw::uniform3(), 40, 1, 2);
        let design = BernoulliDesign::new(40, 3, 500, 1).unwrap();
        let sd = sample_design(&design, &mut stream(1, domain::DESIGN, 0));
        let k = Kernel::mean_pow3(3).unwrap();
        let exact = incomplete_u(&data, &k, &sd, 0.0).unwrap();
        let approx = incomplete_u_with_budget(&data, &k, &sd, 0.0, 1000).unwrap();
        assert!(!exact.approximate && approx.approximate);
        assert_eq!(exact.u_incomplete, approx.u_incomplete);
        assert!((approx.u_h2 / exact.u_h2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn bundles_are_reproducible() {
        let law = SourceLaw::uniform3();
        let run = || {
            let data = Dataset::generate(&law, 15, 1, 8);
            let design = BernoulliDesign::new(15, 2, 30, 8).unwrap();
            let sd = sample_design(&design, &mut stream(8, domain::DESIGN, 0));
            incomplete_u(&data, &Kernel::sample_variance(), &sd, 0.0).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn third_moment_factor_matches_bernoulli() {
        for p in [0.01f64, 0.2, 0.5, 0.9] {
            let direct = p * (1.0 - p).powi(3) + (1.0 - p) * p.powi(3);
            assert!((direct - p * (1.0 - p) * third_moment_factor(p)).abs() < 1e-16);
        }
    }

    #[test]
    fn closed_forms_agree_with_enumeration() {
        let data = Dataset::generate(&SourceLaw::from_name("stdnormal").unwrap(), 23, 1, 4);
        let kernels = [
            Kernel::product(2).unwrap(),
            Kernel::product(4).unwrap(),
            Kernel::sample_variance(),
            Kernel::sample_variance().centered(0.3),
            Kernel::constant(2.5, 3).unwrap(),
        ];
        for k in &kernels {
            assert!(k.complete_mean_closed_form(data.values()).is_some());
            let fast = complete_u_fast(&data, k, DEFAULT_ENUMERATION_BUDGET).unwrap();
            let slow = complete_u(&data, k).unwrap();
            assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow.abs()), "{}: {fast} vs {slow}", k.name());
        }
        assert!(Kernel::mean_pow3(3).unwrap().complete_mean_closed_form(data.values()).is_none());
    }
}
