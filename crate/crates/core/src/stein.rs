//! The bounded solution `f_z` of the normal Stein equation
//! `f'(w) - w f(w) = I(w <= z) - Phi(z)`, its regional bounds, and Monte Carlo
//! checks of the censored Bennett inequality and the censoring contraction.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::bounds::{censor, normal_scale_difference_bound};
use crate::normal::{cdf, ln_cdf, ln_mills, ln_sf, sf};
use crate::rng::{domain, stream};
use crate::sum::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinEval {
    pub z: f64,
    pub w: f64,
    pub f: f64,
    /// `ln f`; finite everywhere even where `f` itself underflows (for
    /// example `z = -40`, `w = -10`, where `f ~ e^{-748}`).
    pub ln_f: f64,
    pub fprime: f64,
}

/// `f_z(w)` and its derivative.
///
/// With the Mills ratio `M(x) = Phi_bar(x) / phi(x)`:
/// `f = Phi_bar(z) M(-w)` for `w <= z` and `f = Phi(z) M(w)` for `w > z`.
/// Both are evaluated as a sum of logarithms, so the result stays finite
/// where `exp(w^2 / 2)` alone would overflow.
pub fn stein_f(z: f64, w: f64) -> SteinEval {
    let below = w <= z;
    let ln_f = if below { ln_sf(z) + ln_mills(-w) } else { ln_cdf(z) + ln_mills(w) };
    let f = ln_f.exp();
    // 1 - Phi(z) is taken as Phi_bar(z) to avoid cancellation
    let fprime = if below { sf(z) + w * f } else { w * f - cdf(z) };
    SteinEval { z, w, f, ln_f, fprime }
}

/// Worst slack of one inequality over the checked points.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackRecord {
    pub name: &'static str,
    pub checked: u64,
    /// `min(bound - value)`.
    pub worst_slack: f64,
    pub worst_at: (f64, f64),
    /// Whether passing needs strictly positive slack rather than nonnegative.
    pub strict: bool,
}

impl SlackRecord {
    fn new(name: &'static str) -> Self {
        Self { name, checked: 0, worst_slack: f64::INFINITY, worst_at: (f64::NAN, f64::NAN), strict: true }
    }

    fn non_strict(name: &'static str) -> Self {
        Self { strict: false, ..Self::new(name) }
    }

    fn observe(&mut self, bound: f64, value: f64, at: (f64, f64)) {
        self.checked += 1;
        let slack = bound - value;
        if slack < self.worst_slack || slack.is_nan() {
            self.worst_slack = slack;
            self.worst_at = at;
        }
    }

    fn merge(&mut self, other: &SlackRecord) {
        self.checked += other.checked;
        if other.worst_slack < self.worst_slack || other.worst_slack.is_nan() {
            self.worst_slack = other.worst_slack;
            self.worst_at = other.worst_at;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && (self.worst_slack > 0.0 || (!self.strict && self.worst_slack >= 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSuiteReport {
    pub records: Vec<SlackRecord>,
}

impl LemmaSuiteReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(SlackRecord::passed)
    }

    pub fn failures(&self) -> Vec<&SlackRecord> {
        self.records.iter().filter(|r| !r.passed()).collect()
    }
}

const RECORD_NAMES: [&str; 14] = [
    "f_positive",
    "f_le_0.63",
    "fprime_le_1",
    "z_f_le_1",
    "upper.far.f",
    "upper.far.fprime",
    "upper.near.f",
    "upper.near.fprime",
    "upper.beyond.f",
    "upper.beyond.fprime",
    "lower.far.f",
    "lower.far.fprime",
    "lower.near.f",
    "lower.beyond.f_and_fprime",
];

/// Regions relative to `z` are decided by `d = w - z` so that grid points
/// can pass an exact integer offset.
fn check_point(recs: &mut [SlackRecord], z: f64, w: f64, d: f64) {
    let s = stein_f(z, w);
    let at = (z, w);
    let (f, fp) = (s.f, s.fprime.abs());
    recs[0].observe(f, 0.0, at);
    recs[1].observe(0.63, f, at);
    recs[2].observe(1.0, fp, at);
    recs[3].observe(1.0, (z * f).abs(), at);
    if z >= 1.0 {
        if d <= -1.0 {
            recs[4].observe(1.7 * (-z).exp(), f, at);
            recs[5].observe((0.5 - z).exp(), fp, at);
        } else if d <= 0.0 {
            recs[6].observe(1.0 / z, f, at);
            recs[7].observe(1.0, fp, at);
        } else {
            recs[8].observe(1.0 / w, f, at);
            recs[9].observe(1.0 / (1.0 + z * z), fp, at);
        }
    } else if z <= -1.0 {
        // mirror image of the z >= 1 regions under (z, w) -> (-z, -w)
        if d >= 1.0 {
            recs[10].observe(1.7 * z.exp(), f, at);
            recs[11].observe((0.5 + z).exp(), fp, at);
        } else if d >= 0.0 {
            recs[12].observe(-1.0 / z, f, at);
            recs[12].observe(1.0, fp, at);
        } else {
            recs[13].observe(-1.0 / w, f, at);
            recs[13].observe(1.0 / (1.0 + z * z), fp, at);
        }
    }
}

fn fresh_records() -> Vec<SlackRecord> {
    RECORD_NAMES.iter().map(|n| SlackRecord::new(n)).collect()
}

/// Checks every regional bound on `f_z` and `f_z'` on the grid
/// `{-10, -9.99, .., 10}^2` plus `random_pairs` uniform points of `[-12, 12]^2`.
pub fn lemma_a2_suite_with(random_pairs: usize, seed: u64) -> LemmaSuiteReport {
    const STEPS: i64 = 1000;
    let rows: Vec<Vec<SlackRecord>> = (-STEPS..=STEPS)
        .into_par_iter()
        .map(|i| {
            let mut recs = fresh_records();
            let z = i as f64 / 100.0;
            for j in -STEPS..=STEPS {
                let w = j as f64 / 100.0;
                check_point(&mut recs, z, w, (j - i) as f64 / 100.0);
            }
            recs
        })
        .collect();
    let mut recs = fresh_records();
    for row in &rows {
        for (a, b) in recs.iter_mut().zip(row) {
            a.merge(b);
        }
    }
    let mut rng = stream(seed, domain::CHECK, 0);
    for _ in 0..random_pairs {
        let z = rng.gen_range(-12.0..12.0);
        let w = rng.gen_range(-12.0..12.0);
        check_point(&mut recs, z, w, w - z);
    }
    LemmaSuiteReport { records: recs }
}

pub fn lemma_a2_suite() -> LemmaSuiteReport {
    lemma_a2_suite_with(100_000, 0)
}

/// Families of mean-zero variables with `sum E[xi_i^2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BennettFamily {
    /// `xi_i = r_i / sqrt(n)` with Rademacher `r_i`.
    ScaledRademacher,
    /// `xi_i = (E_i - 1) / sqrt(n)` with standard exponential `E_i`.
    ScaledCenteredExponential,
    /// `xi_i = 0`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettCheck {
    pub estimate: f64,
    pub se: f64,
    /// Closed form where one is available.
    pub exact: Option<f64>,
}

pub const BENNETT_BOUND: f64 = 8.15;

/// Monte Carlo estimate of `E[exp(sum_i censor(xi_i, -1, 1))]`.
pub fn bennett_mc_check(family: BennettFamily, n_vars: usize, reps: usize, seed: u64) -> BennettCheck {
    let scale = 1.0 / (n_vars as f64).sqrt();
    let chunks = reps.div_ceil(8192);
    let parts: Vec<(KahanSum, KahanSum)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, domain::CHECK, c as u64 + 1);
            let len = 8192.min(reps - c * 8192);
            let (mut s1, mut s2) = (KahanSum::new(), KahanSum::new());
            for _ in 0..len {
                let mut total = 0.0;
                for _ in 0..n_vars {
                    let xi = match family {
                        BennettFamily::ScaledRademacher => {
                            if rng.gen::<bool>() {
                                scale
                            } else {
                                -scale
                            }
                        }
                        BennettFamily::ScaledCenteredExponential => {
                            let e: f64 = Exp1.sample(&mut rng);
                            (e - 1.0) * scale
                        }
                        BennettFamily::Zero => 0.0,
                    };
                    total += censor(xi, -1.0, 1.0).expect("valid interval");
                }
                let v = total.exp();
                s1.add(v);
                s2.add(v * v);
            }
            (s1, s2)
        })
        .collect();
    let (mut s1, mut s2) = (KahanSum::new(), KahanSum::new());
    for (a, b) in &parts {
        s1.add(a.value());
        s2.add(b.value());
    }
    let r = reps as f64;
    let mean = s1.value() / r;
    let var = ((s2.value() / r - mean * mean) * r / (r - 1.0)).max(0.0);
    let exact = match family {
        BennettFamily::ScaledRademacher => Some(scale.cosh().powi(n_vars as i32)),
        BennettFamily::Zero => Some(1.0),
        BennettFamily::ScaledCenteredExponential => None,
    };
    BennettCheck { estimate: mean, se: (var / r).sqrt(), exact }
}

/// Fuzzes `|censor(y, a, b) - censor(z, a, b)| <= |y - z|` and, for `y >= 0`,
/// `censor(y, -inf, b) <= y`. Returns the worst slack of each.
pub fn censor_contraction_check(triples: usize, seed: u64) -> (SlackRecord, SlackRecord) {
    let mut rng = stream(seed, domain::CHECK, 1 << 40);
    let mut contraction = SlackRecord::non_strict("censor_contraction");
    let mut upper = SlackRecord::non_strict("censor_upper_no_larger");
    for _ in 0..triples {
        let a: f64 = rng.gen_range(-5.0..5.0);
        let b = a + rng.gen_range(0.0..5.0);
        let y: f64 = rng.gen_range(-10.0..10.0);
        let z: f64 = rng.gen_range(-10.0..10.0);
        let lhs = (censor(y, a, b).unwrap() - censor(z, a, b).unwrap()).abs();
        contraction.observe((y - z).abs(), lhs, (y, z));
        let ya = y.abs();
        upper.observe(ya, censor(ya, f64::NEG_INFINITY, b.abs()).unwrap(), (ya, b.abs()));
    }
    (contraction, upper)
}

/// Worst slack of `|Phi(a z) - Phi(z)| <= e^{-1/2} |a - 1| / sqrt(2 pi)` for
/// `a` in `[1, 5]` and `z` in `[-10, 10]`.
pub fn normal_difference_check() -> SlackRecord {
    let mut rec = SlackRecord::new("normal_scale_difference");
    for i in 1..=400 {
        let a = 1.0 + i as f64 * 0.01;
        let bound = normal_scale_difference_bound(a);
        for j in -1000..=1000 {
            let z = j as f64 / 100.0;
            rec.observe(bound, (cdf(a * z) - cdf(z)).abs(), (a, z));
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::SQRT_2PI;

    #[test]
    fn value_at_origin() {
        let s = stein_f(0.0, 0.0);
        assert!((s.f - SQRT_2PI / 4.0).abs() < 1e-15);
        assert!(s.f <= 0.63);
    }

    #[test]
    fn decays_in_the_left_tail() {
        let a = stein_f(0.5, -10.0).f;
        let b = stein_f(0.5, -30.0).f;
        assert!(b < a && a < 0.06);
    }

    #[test]
    fn continuous_at_threshold() {
        for i in -200..=200 {
            let z = i as f64 * 0.05;
            let left = stein_f(z, z).f;
            let right = stein_f(z, z + 1e-300_f64.max(z.abs() * f64::EPSILON)).f;
            // the w > z branch at w = z
            let right_exact = (ln_cdf(z) + ln_mills(z)).exp();
            assert!((left - right_exact).abs() <= 1e-12 * left.max(1e-300), "z = {z}");
            assert!((left - right).abs() <= 1e-12, "z = {z}");
        }
    }

    #[test]
    fn symmetry() {
        for i in -100..=100 {
            for j in -100..=100 {
                let (z, w) = (i as f64 * 0.1, j as f64 * 0.1);
                if w == z {
                    continue;
                }
                let a = stein_f(z, w).f;
                let b = stein_f(-z, -w).f;
                assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "z = {z}, w = {w}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-5;
        for i in -40..=40 {
            for j in -40..=40 {
                let (z, w) = (i as f64 * 0.25, j as f64 * 0.25 + 0.1);
                if (w - z).abs() < 10.0 * h {
                    continue;
                }
                let fd = (stein_f(z, w + h).f - stein_f(z, w - h).f) / (2.0 * h);
                assert!((fd - stein_f(z, w).fprime).abs() < 1e-6, "z = {z}, w = {w}");
            }
        }
    }

    #[test]
    fn stein_equation_holds() {
        for (z, w) in [(0.3, -1.0), (0.3, 2.0), (-4.0, -6.0), (5.0, 5.5)] {
            let s = stein_f(z, w);
            let ind = if w <= z { 1.0 } else { 0.0 };
            assert!((s.fprime - w * s.f - (ind - cdf(z))).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_and_positive_far_out() {
        for i in -80..=80 {
            for j in -80..=80 {
                let s = stein_f(i as f64 * 0.5, j as f64 * 0.5);
                assert!(s.ln_f.is_finite(), "{s:?}");
                assert!(s.f.is_finite() && s.fprime.is_finite(), "{s:?}");
                if s.ln_f > f64::MIN_POSITIVE.ln() {
                    assert!(s.f > 0.0, "{s:?}");
                }
            }
        }
    }

    #[test]
    fn suite_passes_with_positive_slack() {
        let rep = lemma_a2_suite_with(20_000, 1);
        for r in &rep.records {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn bennett_examples() {
        let z = bennett_mc_check(BennettFamily::Zero, 10, 1000, 0);
        assert_eq!(z.estimate, 1.0);
        let one = bennett_mc_check(BennettFamily::ScaledRademacher, 1, 200_000, 0);
        assert!((one.exact.unwrap() - 1f64.cosh()).abs() < 1e-15);
        assert!((one.estimate - 1f64.cosh()).abs() < 5.0 * one.se);
        let r = bennett_mc_check(BennettFamily::ScaledRademacher, 100, 20_000, 3);
        assert!((r.estimate - r.exact.unwrap()).abs() < 5.0 * r.se);
        assert!(r.estimate + 5.0 * r.se < BENNETT_BOUND);
        let e = bennett_mc_check(BennettFamily::ScaledCenteredExponential, 50, 20_000, 4);
        assert!(e.estimate + 5.0 * e.se < BENNETT_BOUND);
    }

    #[test]
    fn censoring_and_normal_difference() {
        let (c, u) = censor_contraction_check(100_000, 2);
        assert!(c.passed() && u.passed());
        assert!(normal_difference_check().passed());
    }
}
