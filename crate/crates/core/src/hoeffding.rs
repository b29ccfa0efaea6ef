//! Hoeffding decomposition of the non-negative kernel `h^2`, where `h` is the
//! kernel centered at its population mean.

use std::collections::HashMap;

use crate::combinatorics::{binom, for_each_colex};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::law::{Atoms, SourceLaw};
use crate::moments::{conditional_exact, conditional_mc, exact_moments, Expectation, MomentProfile};
use crate::rng::{domain, stream};
use crate::sum::KahanSum;

/// Evaluates `Psi~_r` and `pi_r(h^2)` at arbitrary arguments for the kernel
/// centered by `profile.mean_h`.
pub struct Projector<'a> {
    kernel: Kernel,
    law: &'a SourceLaw,
    var_h: f64,
    atoms: Option<Atoms>,
    how: Expectation,
}

impl<'a> Projector<'a> {
    pub fn new(kernel: &Kernel, law: &'a SourceLaw, profile: &MomentProfile, how: Expectation) -> Result<Self> {
        if profile.degree != kernel.degree() {
            return Err(Error::InvalidArgument("profile degree does not match kernel".into()));
        }
        let atoms = law.finite_support().map(|(s, p)| Atoms::from_support(&s, &p, kernel.obs_dim()));
        if matches!(how, Expectation::Exact) && atoms.is_none() {
            return Err(Error::InvalidLaw(format!("law '{}' has no finite support", law.name())));
        }
        Ok(Self { kernel: kernel.centered(profile.mean_h), law, var_h: profile.var_h, atoms, how })
    }

    /// Exact projector; computes the exact profile itself.
    pub fn exact(kernel: &Kernel, law: &'a SourceLaw) -> Result<Self> {
        let profile = exact_moments(kernel, law)?;
        Self::new(kernel, law, &profile, Expectation::Exact)
    }

    pub fn degree(&self) -> usize {
        self.kernel.degree()
    }

    fn check(&self, r: usize, args: &[f64]) -> Result<()> {
        let m = self.degree();
        if r < 1 || r > m {
            return Err(Error::InvalidArgument(format!("r = {r} outside [1, {m}]")));
        }
        if args.len() != r * self.kernel.obs_dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} argument reals, got {}",
                r * self.kernel.obs_dim(),
                args.len()
            )));
        }
        Ok(())
    }

    /// `Psi_r(args) = E[h^2(args, X_{r+1}, .., X_m)]`, uncentered.
    fn psi(&self, args: &[f64]) -> f64 {
        let r = args.len() / self.kernel.obs_dim();
        let free = self.degree() - r;
        if free == 0 {
            let h = self.kernel.eval(args);
            return h * h;
        }
        match &self.how {
            Expectation::Exact => conditional_exact(&self.kernel, self.atoms.as_ref().unwrap(), args, free).second,
            Expectation::MonteCarlo { reps, seed } => {
                let mut rng = stream(*seed, domain::INNER, r as u64);
                conditional_mc(&self.kernel, self.law, args, free, *reps, &mut rng).second
            }
        }
    }

    /// `Psi_1(x)`.
    pub fn psi1(&self, x: &[f64]) -> Result<f64> {
        self.check(1, x)?;
        Ok(self.psi(x))
    }

    /// `Psi~_r(args) = E[h^2(args, ..)] - sigma_h^2`.
    pub fn psi_tilde(&self, r: usize, args: &[f64]) -> Result<f64> {
        self.check(r, args)?;
        Ok(self.psi(args) - self.var_h)
    }

    /// `pi_r(h^2)(args)` by dynamic programming over the subsets of the arguments.
    pub fn pi(&self, r: usize, args: &[f64]) -> Result<f64> {
        self.check(r, args)?;
        let dim = self.kernel.obs_dim();
        let top = (1usize << r) - 1;
        let mut memo = vec![0.0; top + 1];
        let mut sub_args = Vec::with_capacity(args.len());
        for mask in 1..=top {
            sub_args.clear();
            for j in 0..r {
                if mask >> j & 1 == 1 {
                    sub_args.extend_from_slice(&args[j * dim..(j + 1) * dim]);
                }
            }
            let mut val = self.psi(&sub_args) - self.var_h;
            let mut sub = (mask - 1) & mask;
            while sub > 0 {
                val -= memo[sub];
                sub = (sub - 1) & mask;
            }
            memo[mask] = val;
        }
        Ok(memo[top])
    }
}

/// `Psi~_r` on the exact path.
pub fn psi_tilde_r(k: &Kernel, law: &SourceLaw, r: usize, args: &[f64]) -> Result<f64> {
    Projector::exact(k, law)?.psi_tilde(r, args)
}

/// `pi_r(h^2)` on the exact path.
pub fn pi_r_h2(k: &Kernel, law: &SourceLaw, r: usize, args: &[f64]) -> Result<f64> {
    Projector::exact(k, law)?.pi(r, args)
}

/// `(U_h2 - sigma_h^2) / sigma_h^2 = sum_i eta_i - m + R` evaluated on data.
#[derive(Debug, Clone, PartialEq)]
pub struct H2Decomposition {
    pub degree: usize,
    pub eta: Vec<f64>,
    pub remainder_r: f64,
    pub lhs: f64,
}

impl H2Decomposition {
    pub fn rhs(&self) -> f64 {
        self.eta.iter().copied().collect::<KahanSum>().value() - self.degree as f64 + self.remainder_r
    }
}

/// Computes both sides of the decomposition of `U_h2` for `k` centered by the
/// exact profile mean. `R` is summed directly from the `pi_r` kernels, which
/// is offered for `m <= 3`.
pub fn decompose_uh2(data: &Dataset, k: &Kernel, law: &SourceLaw, profile: &MomentProfile) -> Result<H2Decomposition> {
    if !profile.is_exact() {
        return Err(Error::InvalidArgument("decompose_uh2 needs an exact moment profile".into()));
    }
    profile.require_nondegenerate()?;
    let m = k.degree();
    if m > 3 {
        return Err(Error::InvalidArgument(format!("direct remainder computation supports m <= 3, got {m}")));
    }
    let n = data.n();
    if n < m {
        return Err(Error::InvalidArgument(format!("n = {n} < m = {m}")));
    }
    let proj = Projector::new(k, law, profile, Expectation::Exact)?;
    let sigma2 = profile.var_h;
    let kc = k.centered(profile.mean_h);

    // left side
    let mut u_h2 = KahanSum::new();
    let mut args = Vec::new();
    for_each_colex(n, m, |c| {
        data.gather(c, &mut args);
        let h = kc.eval(&args);
        u_h2.add(h * h);
    });
    let total = binom(n as u64, m as u64)? as f64;
    let lhs = (u_h2.value() / total - sigma2) / sigma2;

    // pi_s on data subsets, memoized by index tuple
    let mut pi_memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut psi1 = Vec::with_capacity(n);
    for i in 0..n {
        let v = proj.psi1(data.observation(i))?;
        psi1.push(v);
        pi_memo.insert(vec![i], v - sigma2);
    }
    let eta: Vec<f64> = psi1.iter().map(|v| m as f64 * v / (n as f64 * sigma2)).collect();

    let mut remainder = 0.0;
    for r in 2..=m {
        let mut acc = KahanSum::new();
        let mut fail = None;
        for_each_colex(n, r, |c| {
            data.gather(c, &mut args);
            let psi_t = match proj.psi_tilde(r, &args) {
                Ok(v) => v,
                Err(e) => {
                    fail = Some(e);
                    return;
                }
            };
            let mut val = psi_t;
            // subtract pi over every proper nonempty subset of c
            for mask in 1..(1usize << r) - 1 {
                let key: Vec<usize> = (0..r).filter(|b| mask >> b & 1 == 1).map(|b| c[b]).collect();
                val -= pi_memo[&key];
            }
            if r < m {
                pi_memo.insert(c.to_vec(), val);
            }
            acc.add(val);
        });
        if let Some(e) = fail {
            return Err(e);
        }
        let weight = binom(m as u64, r as u64)? as f64 / binom(n as u64, r as u64)? as f64;
        remainder += weight * acc.value() / sigma2;
    }
    Ok(H2Decomposition { degree: m, eta, remainder_r: remainder, lhs })
}

/// Upper bound on `||R||_{3/2}`: the `2/3` power of
/// `sum_{r=2}^m C(m,r)^{3/2} C(n,r)^{-1/2} 2^{r/2} E|pi_r(h^2)|^{3/2} / sigma_h^3`,
/// which bounds `E|R|^{3/2}`. The value is of order `n^{-2/3}`.
pub fn r_norm32_bound(profile: &MomentProfile, n: usize) -> Result<f64> {
    profile.require_nondegenerate()?;
    let m = profile.degree;
    if profile.pi_r_abs32.len() != m - 1 {
        return Err(Error::MissingMoment("E|pi_r(h^2)|^{3/2}"));
    }
    let sigma3 = profile.var_h.powf(1.5);
    let mut s = 0.0;
    for r in 2..=m {
        let cm = binom(m as u64, r as u64)? as f64;
        let cn = binom(n as u64, r as u64)? as f64;
        s += cm.powf(1.5) / cn.sqrt() * 2f64.powf(r as f64 / 2.0) * profile.pi_r_abs32[r - 2] / sigma3;
    }
    Ok(s.powf(2.0 / 3.0))
}
