//! Berry-Esseen bound evaluators with per-term breakdowns, plus the auxiliary
//! inequalities they rely on: the variance factor `K_{n,m,d}`, the lower-tail
//! bound for non-negative U-statistics, the Bernstein bound on `N_hat`, and
//! variable censoring.

use std::fmt;

use crate::combinatorics::binom;
use crate::error::{Error, Result};
use crate::estimators::{third_moment_factor, EstimateBundle};
use crate::hoeffding::r_norm32_bound;
use crate::moments::MomentProfile;
use crate::normal::SQRT_2PI;

/// Largest sampling probability accepted where `1 / sqrt(1 - p)` appears.
pub const MAX_P: f64 = 0.99;

pub const COMPLETE_LYAPUNOV_CONSTANT: f64 = 6.1;
pub const COMPLETE_REMAINDER_CONSTANT: f64 = 1.0 + std::f64::consts::SQRT_2;
pub const CONDITIONAL_CONSTANT: f64 = 0.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundRegime {
    /// N much larger than n; standardizer `sqrt(n) / (m sigma_g)`.
    NggN,
    /// N much smaller than n^d; standardizer `sqrt(N) / sigma_h`.
    NllNd,
    /// N comparable to n; standardizer `sqrt(n) / sigma`.
    NasympN,
    /// Complete U-statistic with explicit constants.
    CompleteExplicit,
    /// `sqrt(N) B_n / sqrt(U_h2)` given the data, explicit constant.
    ConditionalExplicit,
}

impl BoundRegime {
    pub const NAMES: [&'static str; 5] = ["thm31", "thm32", "thm33", "complete", "conditional"];

    pub fn name(self) -> &'static str {
        match self {
            Self::NggN => "thm31",
            Self::NllNd => "thm32",
            Self::NasympN => "thm33",
            Self::CompleteExplicit => "complete",
            Self::ConditionalExplicit => "conditional",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s {
            "thm31" | "ngg" => Self::NggN,
            "thm32" | "nll" => Self::NllNd,
            "thm33" | "nasymp" => Self::NasympN,
            "complete" => Self::CompleteExplicit,
            "conditional" => Self::ConditionalExplicit,
            _ => return Err(Error::UnknownName(format!("regime '{s}' (expected one of {:?})", Self::NAMES))),
        })
    }
}

impl fmt::Display for BoundRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a report was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub m: usize,
    pub budget: Option<u64>,
    pub p: Option<f64>,
    pub rank_d: Option<usize>,
    pub var_h: f64,
    pub var_g: Option<f64>,
    pub exact_profile: bool,
}

impl BoundInputs {
    pub fn digest(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_else(|| "-".into());
        format!(
            "n={};m={};N={};p={};d={};var_h={:.17e};var_g={};exact={}",
            self.n,
            self.m,
            opt(self.budget.map(|v| v.to_string())),
            opt(self.p.map(|v| format!("{v:.17e}"))),
            opt(self.rank_d.map(|v| v.to_string())),
            self.var_h,
            opt(self.var_g.map(|v| format!("{v:.17e}"))),
            self.exact_profile
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub regime: BoundRegime,
    pub terms: Vec<(&'static str, f64)>,
    pub total: f64,
    /// Only the explicit complete and conditional bounds carry known constants.
    pub constant_known: bool,
    /// The remainder norm was replaced by its moment-inequality bound.
    pub surrogate: bool,
    pub inputs: BoundInputs,
}

impl BoundReport {
    fn new(regime: BoundRegime, terms: Vec<(&'static str, f64)>, surrogate: bool, inputs: BoundInputs) -> Result<Self> {
        for (label, v) in &terms {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("bound term {label} = {v} is not a finite nonnegative value")));
            }
        }
        let total = terms.iter().map(|t| t.1).sum();
        let constant_known = matches!(regime, BoundRegime::CompleteExplicit | BoundRegime::ConditionalExplicit);
        Ok(Self { regime, terms, total, constant_known, surrogate, inputs })
    }

    pub fn term(&self, label: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.0 == label).map(|t| t.1)
    }
}

/// `K_{n,m,d} = C(n,m)^{-1} sum_{r=d}^m C(m-1, r-1) C(n-m, m-r)`, summed in
/// exact integer arithmetic.
pub fn k_nmd(n: usize, m: usize, d: usize) -> Result<f64> {
    if d < 1 || d > m || m > n {
        return Err(Error::InvalidArgument(format!("k_nmd needs 1 <= d <= m <= n, got n={n}, m={m}, d={d}")));
    }
    let (n, m, d) = (n as u64, m as u64, d as u64);
    let mut num: u128 = 0;
    for r in d..=m {
        let term = binom(m - 1, r - 1)?
            .checked_mul(binom(n - m, m - r)?)
            .ok_or(Error::BinomialOverflow { n, k: m })?;
        num = num.checked_add(term).ok_or(Error::BinomialOverflow { n, k: m })?;
    }
    Ok(num as f64 / binom(n, m)? as f64)
}

/// `(1 - 2p + 2p^2) / sqrt(1 - p)`.
pub fn third_moment_ratio(p: f64) -> f64 {
    third_moment_factor(p) / (1.0 - p).sqrt()
}

/// Minimiser of [`third_moment_ratio`] on `[0, 1)`: `(5 - sqrt 7) / 6`.
pub fn third_moment_ratio_argmin() -> f64 {
    (5.0 - 7f64.sqrt()) / 6.0
}

/// Minimum of [`third_moment_ratio`] on `[0, 1)`: `sqrt((56 sqrt 7 - 136) / 27) ~ 0.671154`.
///
/// The frequently quoted value `25 / (14 sqrt 7) ~ 0.674937` is slightly
/// larger than this and therefore not a valid lower bound.
pub fn third_moment_ratio_min() -> f64 {
    ((56.0 * 7f64.sqrt() - 136.0) / 27.0).sqrt()
}

fn check_design(n: usize, m: usize, budget: u64) -> Result<f64> {
    if m < 2 || 2 * m >= n {
        return Err(Error::InvalidDesign(format!("need 2 <= m < n/2, got n = {n}, m = {m}")));
    }
    let total = binom(n as u64, m as u64)?;
    if budget == 0 || budget as u128 >= total {
        return Err(Error::InvalidDesign(format!("need 0 < N < C({n}, {m}) = {total}, got N = {budget}")));
    }
    Ok(budget as f64 / total as f64)
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} must lie in [0, 1)")));
    }
    if p > MAX_P {
        return Err(Error::InvalidArgument(format!("p = {p} exceeds {MAX_P}; the 1/sqrt(1 - p) factor is refused")));
    }
    Ok(())
}

/// The two summands of `B1`: the Lyapunov part and the lower-tail part.
pub fn b_frak1_terms(profile: &MomentProfile, n: usize, m: usize, budget: u64, p: f64) -> Result<(f64, f64)> {
    profile.require_nondegenerate()?;
    if p >= 1.0 {
        return Err(Error::InvalidArgument(format!("p = {p} must be below 1")));
    }
    let s3 = profile.var_h.powf(1.5);
    let lyap = profile.abs3_h * third_moment_factor(p) / ((budget as f64 * (1.0 - p)).sqrt() * s3);
    let tail = (-(n as f64) * profile.var_h.powi(3) / (24.0 * m as f64 * profile.abs3_h.powi(2))).exp();
    Ok((lyap, tail))
}

/// `B1 = E|h|^3 (1 - 2p + 2p^2) / (sqrt(N (1 - p)) sigma_h^3) + exp(-n sigma_h^6 / (24 m (E|h|^3)^2))`.
pub fn b_frak1(profile: &MomentProfile, n: usize, m: usize, budget: u64, p: f64) -> Result<f64> {
    let (a, b) = b_frak1_terms(profile, n, m, budget, p)?;
    Ok(a + b)
}

/// The two summands of `B2` (the complete-statistic pair without constants).
pub fn b_frak2_terms(profile: &MomentProfile, n: usize, m: usize) -> Result<(f64, f64)> {
    profile.require_non_degenerate_g()?;
    let lyap = profile.abs3_g / ((n as f64).sqrt() * profile.var_g.powf(1.5));
    // sigma_h^2 >= m sigma_g^2 holds in law; clamp roundoff below zero
    let excess = (profile.var_h / (m as f64 * profile.var_g) - 1.0).max(0.0);
    Ok((lyap, (m as f64 / n as f64 * excess).sqrt()))
}

fn inputs(profile: &MomentProfile, n: usize, m: usize, budget: Option<u64>, p: Option<f64>) -> BoundInputs {
    BoundInputs {
        n,
        m,
        budget,
        p,
        rank_d: Some(profile.rank_d),
        var_h: profile.var_h,
        var_g: Some(profile.var_g),
        exact_profile: profile.is_exact(),
    }
}

/// Term breakdown of the theorem bound for `regime` (up to the unspecified
/// absolute constant). `use_4th_moment` selects the fourth-moment variant of
/// the N << n^d and N ~ n bounds.
pub fn thm_bound(
    regime: BoundRegime,
    profile: &MomentProfile,
    n: usize,
    m: usize,
    budget: u64,
    use_4th_moment: bool,
) -> Result<BoundReport> {
    if profile.degree != m {
        return Err(Error::InvalidArgument(format!("profile has degree {}, expected {m}", profile.degree)));
    }
    profile.require_nondegenerate()?;
    let p = check_design(n, m, budget)?;
    let (nf, mf, nn) = (n as f64, m as f64, budget as f64);
    let s2 = profile.var_h;
    let mut surrogate = false;
    let psi_base = mf.powf(1.5) * profile.psi1_pow32 / (nf.sqrt() * s2.powf(1.5));
    let fourth = |profile: &MomentProfile| -> Result<f64> {
        let v = profile.var_h2.ok_or(Error::MissingMoment("E[(h^2 - sigma_h^2)^2]"))?;
        Ok((mf * v).sqrt() / (nf.sqrt() * s2))
    };
    let terms: Vec<(&'static str, f64)> = match regime {
        BoundRegime::NggN => {
            let (l, r) = b_frak2_terms(profile, n, m)?;
            vec![
                ("B2.lyapunov", l),
                ("B2.remainder", r),
                ("bn_term", (nf * (1.0 - p) * s2 / (nn * mf * profile.var_g)).sqrt()),
                ("nhat_term", 1.0 / nn.sqrt()),
            ]
        }
        BoundRegime::NllNd => {
            check_p(p)?;
            let (b1l, b1t) = b_frak1_terms(profile, n, m, budget, p)?;
            let k = k_nmd(n, m, profile.rank_d)?;
            let mut t = vec![
                ("B1.lyapunov", b1l),
                ("B1.lower_tail", b1t),
                ("K_term", (nn * k).sqrt() / (1.0 - p).sqrt()),
            ];
            if use_4th_moment {
                t.push(("fourth_moment_term", fourth(profile)?));
            } else {
                surrogate = true;
                t.push(("psi_term", psi_base));
                t.push(("R_term", r_norm32_bound(profile, n)?));
            }
            t
        }
        BoundRegime::NasympN => {
            check_p(p)?;
            let (b1l, b1t) = b_frak1_terms(profile, n, m, budget, p)?;
            let (b2l, b2r) = b_frak2_terms(profile, n, m)?;
            let mut t = vec![
                ("B1.lyapunov", b1l),
                ("B1.lower_tail", b1t),
                ("B2.lyapunov", b2l),
                ("B2.remainder", b2r),
                ("sqrt_m_term", mf.sqrt() / (nf * (1.0 - p)).sqrt()),
            ];
            if use_4th_moment {
                t.push(("N_over_n2_term", nn / (nf * nf * (1.0 - p))));
                t.push(("fourth_moment_term", fourth(profile)?));
            } else {
                surrogate = true;
                let factor = 1.0 + (mf * nn).sqrt() / (nf * (1.0 - p)).sqrt();
                t.push(("psi_term", factor * psi_base));
                t.push(("R_term", r_norm32_bound(profile, n)?));
            }
            t
        }
        BoundRegime::CompleteExplicit => return explicit_complete_bound(profile, n, m),
        BoundRegime::ConditionalExplicit => {
            return Err(Error::InvalidArgument("the conditional bound is data-dependent; use explicit_conditional_bound".into()))
        }
    };
    BoundReport::new(regime, terms, surrogate, inputs(profile, n, m, Some(budget), Some(p)))
}

/// `6.1 E|g|^3 / (sqrt(n) sigma_g^3) + (1 + sqrt 2) sqrt((m/n)(sigma_h^2 / (m sigma_g^2) - 1))`.
pub fn explicit_complete_bound(profile: &MomentProfile, n: usize, m: usize) -> Result<BoundReport> {
    if profile.degree != m {
        return Err(Error::InvalidArgument(format!("profile has degree {}, expected {m}", profile.degree)));
    }
    if n < m {
        return Err(Error::InvalidArgument(format!("n = {n} < m = {m}")));
    }
    let (l, r) = b_frak2_terms(profile, n, m)?;
    BoundReport::new(
        BoundRegime::CompleteExplicit,
        vec![
            ("complete.lyapunov", COMPLETE_LYAPUNOV_CONSTANT * l),
            ("complete.remainder", COMPLETE_REMAINDER_CONSTANT * r),
        ],
        false,
        inputs(profile, n, m, None, None),
    )
}

/// `0.56 U_|h|^3 (1 - 2p + 2p^2) / (U_h2^{3/2} sqrt(N (1 - p)))` for the data
/// behind `bundle`.
pub fn explicit_conditional_bound(bundle: &EstimateBundle, budget: u64, p: f64) -> Result<BoundReport> {
    if bundle.approximate {
        return Err(Error::ApproximateRefused("U_h2 and U_|h|^3 come from an auxiliary subsample"));
    }
    check_p(p)?;
    if !(bundle.u_h2 > 0.0) {
        return Err(Error::DegenerateConditionalLaw);
    }
    let v = CONDITIONAL_CONSTANT * crate::estimators::lyapunov_sum(bundle.u_h2, bundle.u_abs_h3, budget, p);
    BoundReport::new(
        BoundRegime::ConditionalExplicit,
        vec![("conditional.lyapunov", v)],
        false,
        BoundInputs {
            n: 0,
            m: 0,
            budget: Some(budget),
            p: Some(p),
            rank_d: None,
            var_h: bundle.u_h2,
            var_g: None,
            exact_profile: true,
        },
    )
}

/// Lower-tail bound for a non-negative-kernel U-statistic with mean `mean_kappa`:
/// `exp(-floor(n/m) (l-1) (E k - t)^{l/(l-1)} / (l (E k^l)^{1/(l-1)}))`.
pub fn lower_tail_bound(mean_kappa: f64, mom_l: f64, l: f64, t: f64, n: usize, m: usize) -> Result<f64> {
    if !(t > 0.0 && t <= mean_kappa) {
        return Err(Error::InvalidArgument(format!("need 0 < t <= E[kappa], got t = {t}, E[kappa] = {mean_kappa}")));
    }
    if !(l > 1.0 && l <= 2.0) {
        return Err(Error::InvalidArgument(format!("need 1 < l <= 2, got {l}")));
    }
    if !(mom_l > 0.0) || m == 0 {
        return Err(Error::InvalidArgument("E[kappa^l] must be positive and m >= 1".into()));
    }
    let blocks = (n / m) as f64;
    let expo = blocks * (l - 1.0) * (mean_kappa - t).powf(l / (l - 1.0)) / (l * mom_l.powf(1.0 / (l - 1.0)));
    Ok((-expo).exp())
}

/// `1.05 exp(-n sigma_h^6 / (24 m (E|h|^3)^2))`, the `l = 3/2`, `t = sigma_h^2 / 2`
/// form bounding `P(U_h2 <= sigma_h^2 / 2)`.
pub fn lower_tail_bound_uh2(profile: &MomentProfile, n: usize, m: usize) -> Result<f64> {
    profile.require_nondegenerate()?;
    Ok(1.05 * (-(n as f64) * profile.var_h.powi(3) / (24.0 * m as f64 * profile.abs3_h.powi(2))).exp())
}

/// `2 exp(-3N / 28)`, bounding `P(|N_hat / N - 1| > 1/2)`.
pub fn nhat_deviation_bound(budget: u64) -> f64 {
    2.0 * (-3.0 * budget as f64 / 28.0).exp()
}

/// Clamps `y` into `[a, b]`; either end may be infinite.
pub fn censor(y: f64, a: f64, b: f64) -> Result<f64> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument(format!("censor needs a <= b, got [{a}, {b}]")));
    }
    Ok(if y < a {
        a
    } else if y > b {
        b
    } else {
        y
    })
}

/// `e^{-1/2} / sqrt(2 pi) |a - 1|`, bounding `|Phi(a z) - Phi(z)|` over all `z`.
pub fn normal_scale_difference_bound(a: f64) -> f64 {
    (-0.5f64).exp() / SQRT_2PI * (a - 1.0).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::law::SourceLaw;
    use crate::moments::exact_moments;
    use crate::normal::cdf;

    fn sv_profile() -> MomentProfile {
        exact_moments(&Kernel::sample_variance(), &SourceLaw::uniform3()).unwrap()
    }

    #[test]
    fn k_nmd_examples() {
        assert!((k_nmd(10, 2, 1).unwrap() - 0.2).abs() < 1e-16);
        assert!((k_nmd(6, 3, 2).unwrap() - 0.35).abs() < 1e-16);
        let k = k_nmd(5, 2, 2).unwrap();
        assert!((k - 0.1).abs() < 1e-16);
        assert!(k <= 2.0 * 1.0 / (5.0 * 4.0) + 1e-16);
        assert!(k_nmd(5, 2, 3).is_err());
    }

    #[test]
    fn k_nmd_monotone_and_vandermonde() {
        for n in 5..40 {
            for m in 2..=(n - 1) / 2 {
                assert!((k_nmd(n, m, 1).unwrap() - m as f64 / n as f64).abs() < 1e-14);
                let last = k_nmd(n, m, m).unwrap();
                assert!((last - 1.0 / binom(n as u64, m as u64).unwrap() as f64).abs() < 1e-18);
                for d in 1..m {
                    assert!(k_nmd(n, m, d + 1).unwrap() < k_nmd(n, m, d).unwrap());
                    assert!(k_nmd(n + 1, m, d).unwrap() < k_nmd(n, m, d).unwrap());
                }
                // d = 2 closed-form bound
                let bound = (m * (m - 1) * (m - 1)) as f64 / (n * (n - m + 1)) as f64;
                assert!(k_nmd(n, m, 2).unwrap() <= bound + 1e-15);
            }
        }
    }

    #[test]
    fn third_moment_ratio_floor() {
        let floor = third_moment_ratio_min();
        for i in 0..1000 {
            let p = i as f64 / 1000.0;
            assert!(third_moment_ratio(p) >= floor - 1e-9, "p = {p}");
        }
        assert!((third_moment_ratio(third_moment_ratio_argmin()) - floor).abs() < 1e-15);
        // 25 / (14 sqrt 7) is exceeded by the ratio near the minimiser
        let quoted = 25.0 / (14.0 * 7f64.sqrt());
        assert!(third_moment_ratio(0.392) < quoted - 3e-3);
    }

    #[test]
    fn b_frak1_behaviour() {
        let prof = sv_profile();
        let (n, m) = (100usize, 2usize);
        let total = binom(n as u64, m as u64).unwrap() as f64;
        let b = |nn: u64| b_frak1(&prof, n, m, nn, nn as f64 / total).unwrap();
        assert!(b(400) < b(100));
        let (lyap, _) = b_frak1_terms(&prof, n, m, 100, 0.0).unwrap();
        assert!((lyap - prof.abs3_h / (10.0 * prof.var_h.powf(1.5))).abs() < 1e-15);
        assert!(b_frak1(&prof, n, m, 100, 1.0).is_err());
    }

    #[test]
    fn explicit_complete_example() {
        let prof = sv_profile();
        let r = explicit_complete_bound(&prof, 400, 2).unwrap();
        assert!(r.constant_known);
        let t1 = r.term("complete.lyapunov").unwrap();
        let t2 = r.term("complete.remainder").unwrap();
        assert!((t1 - 0.360).abs() < 1e-3, "{t1}");
        assert!((t2 - 0.341).abs() < 1e-3, "{t2}");
        assert!((r.total - 0.70).abs() < 0.005);
        let r4 = explicit_complete_bound(&prof, 1600, 2).unwrap();
        assert!((r4.term("complete.lyapunov").unwrap() - t1 / 2.0).abs() < 1e-14);
        assert!((r4.term("complete.remainder").unwrap() - t2 / 2.0).abs() < 1e-14);
        let rad = exact_moments(&Kernel::product(2).unwrap(), &SourceLaw::rademacher()).unwrap();
        assert!(explicit_complete_bound(&rad, 400, 2).is_err());
    }

    #[test]
    fn b2_matches_explicit_terms() {
        let prof = sv_profile();
        let ex = explicit_complete_bound(&prof, 300, 2).unwrap();
        let th = thm_bound(BoundRegime::NasympN, &prof, 300, 2, 300, true).unwrap();
        assert_eq!(ex.term("complete.lyapunov").unwrap(), 6.1 * th.term("B2.lyapunov").unwrap());
        assert_eq!(ex.term("complete.remainder").unwrap(), COMPLETE_REMAINDER_CONSTANT * th.term("B2.remainder").unwrap());
    }

    #[test]
    fn theorem_reports() {
        let prof = sv_profile();
        // C(400, 2) = 79800, so the largest admissible quadratic budget is below n^2
        let r31 = thm_bound(BoundRegime::NggN, &prof, 400, 2, 79_000, false).unwrap();
        assert_eq!(r31.terms.len(), 4);
        assert!(!r31.constant_known);
        assert!(thm_bound(BoundRegime::NggN, &prof, 400, 2, 160_000, false).is_err());
        assert_eq!(r31.total, r31.terms.iter().map(|t| t.1).sum::<f64>());
        let rad = exact_moments(&Kernel::product(2).unwrap(), &SourceLaw::rademacher()).unwrap();
        let r32 = thm_bound(BoundRegime::NllNd, &rad, 300, 2, 300, false).unwrap();
        let k = k_nmd(300, 2, 2).unwrap();
        let p = 300.0 / 44_850.0;
        assert!((r32.term("K_term").unwrap() - (300.0 * k).sqrt() / (1.0f64 - p).sqrt()).abs() < 1e-15);
        assert!(r32.surrogate);
        assert_eq!(r32.term("R_term").unwrap(), 0.0);
        let r32b = thm_bound(BoundRegime::NllNd, &rad, 300, 2, 300, true).unwrap();
        assert!(!r32b.surrogate);
        assert_eq!(r32b.term("fourth_moment_term").unwrap(), 0.0);
        // degenerate kernel: N ~ n and N >> n regimes need sigma_g > 0
        assert!(thm_bound(BoundRegime::NasympN, &rad, 300, 2, 300, false).is_err());
        assert!(thm_bound(BoundRegime::NggN, &rad, 300, 2, 3000, false).is_err());
        let r33 = thm_bound(BoundRegime::NasympN, &prof, 300, 2, 300, false).unwrap();
        assert_eq!(r33.terms.len(), 7);
        // m < n/2 violated
        assert!(matches!(thm_bound(BoundRegime::NllNd, &rad, 4, 2, 3, false), Err(Error::InvalidDesign(_))));
        let mut no4 = prof.clone();
        no4.var_h2 = None;
        assert!(thm_bound(BoundRegime::NasympN, &no4, 300, 2, 300, true).is_err());
    }

    #[test]
    fn boundary_sigma_h_equals_m_sigma_g() {
        let mut prof = sv_profile();
        prof.var_h = 2.0 * prof.var_g;
        let r = thm_bound(BoundRegime::NggN, &prof, 100, 2, 1000, false).unwrap();
        assert_eq!(r.term("B2.remainder").unwrap(), 0.0);
    }

    #[test]
    fn conditional_refusals() {
        let b = EstimateBundle {
            u_complete: 0.0,
            u_incomplete: 0.0,
            u_incomplete_det: 0.0,
            b_n: 0.0,
            u_h2: 1.0,
            u_abs_h3: 2.0,
            n_hat: 0,
            p: 0.1,
            budget: 10,
            mu: 0.0,
            approximate: false,
        };
        let r = explicit_conditional_bound(&b, 10, 0.1).unwrap();
        let want = 0.56 * 2.0 * third_moment_factor(0.1) / (9.0f64).sqrt();
        assert!((r.total - want).abs() < 1e-15);
        assert!(explicit_conditional_bound(&b, 10, 0.995).is_err());
        let mut approx = b.clone();
        approx.approximate = true;
        assert!(matches!(explicit_conditional_bound(&approx, 10, 0.1), Err(Error::ApproximateRefused(_))));
    }

    #[test]
    fn lower_tail_examples() {
        let v = lower_tail_bound(1.0, 1.0, 1.5, 0.5, 10, 2).unwrap();
        assert!((v - (-0.3125f64 / 1.5).exp()).abs() < 1e-15);
        assert!((v - 0.8119).abs() < 1e-4);
        assert_eq!(lower_tail_bound(1.0, 1.0, 1.5, 1.0, 10, 2).unwrap(), 1.0);
        assert!(lower_tail_bound(1.0, 1.0, 1.5, 1.5, 10, 2).is_err());
    }

    #[test]
    fn censor_properties() {
        assert_eq!(censor(0.7, 0.0, 1.0).unwrap(), 0.7);
        assert_eq!(censor(-2.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(censor(5.0, f64::NEG_INFINITY, 3.0).unwrap(), 3.0);
        assert!(censor(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn normal_difference_fact_on_grid() {
        for i in 0..=200 {
            let a = 1.0 + i as f64 * 0.02;
            let bound = normal_scale_difference_bound(a);
            for j in -400..=400 {
                let z = j as f64 * 0.02;
                assert!((cdf(a * z) - cdf(z)).abs() <= bound + 1e-15, "a = {a}, z = {z}");
            }
        }
    }
}
