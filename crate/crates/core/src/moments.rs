//! Population moments of a kernel under a law: the [`MomentProfile`] every
//! bound evaluator consumes.
//!
//! All moments refer to the centered kernel `h - E[h]`. The exact path
//! enumerates the product law of a finitely supported source; the Monte Carlo
//! path draws outer tuples and evaluates conditional expectations either by
//! exact enumeration (finite support) or by an inner sample.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::law::{Atoms, SourceLaw};
use crate::rng::{domain, stream, Stream};
use crate::sum::{kahan_sum, KahanSum};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;
/// Var[h_r] above this counts as non-zero on the exact path.
pub const RANK_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_INNER_REPS: usize = 512;
pub const MIN_MC_REPS: usize = 10_000;
/// Rank detection z-score on the Monte Carlo path.
pub const RANK_Z: f64 = 5.0;
/// Conditional expectations over at most this many atoms are enumerated.
const INNER_EXACT_LIMIT: usize = 100_000;
/// Projections of h^2 are estimated by Monte Carlo only up to this degree.
const MC_PI_MAX_DEGREE: usize = 4;
const CHUNK: usize = 4096;

/// Standard errors of a Monte Carlo profile, field by field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentSe {
    pub mean_h: f64,
    pub var_h: f64,
    pub var_g: f64,
    pub abs3_g: f64,
    pub abs3_h: f64,
    pub psi1_pow32: f64,
    pub var_h2: f64,
    pub pi_r_abs32: Vec<f64>,
    pub var_h_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Exact,
    MonteCarlo { reps: usize, inner_reps: Option<usize>, se: MomentSe },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub degree: usize,
    /// E[h] of the raw kernel.
    pub mean_h: f64,
    /// sigma_h^2
    pub var_h: f64,
    /// sigma_g^2
    pub var_g: f64,
    /// E|g - E g|^3
    pub abs3_g: f64,
    /// E|h - E h|^3
    pub abs3_h: f64,
    /// E[Psi_1^{3/2}]
    pub psi1_pow32: f64,
    /// E[(h^2 - sigma_h^2)^2]
    pub var_h2: Option<f64>,
    /// E|pi_r(h^2)|^{3/2} for r = 2..=m (index 0 is r = 2); empty if not computed.
    pub pi_r_abs32: Vec<f64>,
    /// Var[h_r] for r = 1..=m (index 0 is r = 1).
    pub var_h_r: Vec<f64>,
    pub rank_d: usize,
    pub provenance: Provenance,
}

impl MomentProfile {
    pub fn is_exact(&self) -> bool {
        matches!(self.provenance, Provenance::Exact)
    }

    pub fn sd_h(&self) -> f64 {
        self.var_h.sqrt()
    }

    pub fn sd_g(&self) -> f64 {
        self.var_g.sqrt()
    }

    /// `0 < sigma_h^2 < inf`, required by every bound.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.var_h > 0.0 && self.var_h.is_finite() {
            Ok(())
        } else {
            Err(Error::DegenerateProfile(format!("sigma_h^2 = {} is not in (0, inf)", self.var_h)))
        }
    }

    /// `sigma_g^2 > 0`.
    pub fn require_non_degenerate_g(&self) -> Result<()> {
        self.require_nondegenerate()?;
        if self.var_g > 0.0 && self.var_g.is_finite() {
            Ok(())
        } else {
            Err(Error::DegenerateProfile(format!("sigma_g^2 = {} is not positive", self.var_g)))
        }
    }

    /// E|pi_r(h^2)|^{3/2}
    pub fn pi_r(&self, r: usize) -> Option<f64> {
        r.checked_sub(2).and_then(|i| self.pi_r_abs32.get(i).copied())
    }
}

fn atoms_for(kernel: &Kernel, law: &SourceLaw) -> Option<Atoms> {
    law.finite_support().map(|(s, p)| Atoms::from_support(&s, &p, kernel.obs_dim()))
}

/// Block-wise weighted sum over the last coordinate of a tensor.
fn marginalize_last(t: &[f64], w: &[f64]) -> Vec<f64> {
    t.chunks_exact(w.len())
        .map(|blk| blk.iter().zip(w).map(|(x, p)| x * p).collect::<KahanSum>().value())
        .collect()
}

fn full_expectation(t: &[f64], w: &[f64]) -> f64 {
    let mut cur = t.to_vec();
    while cur.len() > 1 {
        cur = marginalize_last(&cur, w);
    }
    cur[0]
}

/// Digits of `idx` in base `s`, most significant first.
fn digits(mut idx: usize, s: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % s;
        idx /= s;
    }
}

fn to_index(ds: impl Iterator<Item = usize>, s: usize) -> usize {
    ds.fold(0, |acc, d| acc * s + d)
}

/// Every field by exact weighted enumeration of the `|atoms|^m` tuples.
pub fn exact_moments(kernel: &Kernel, law: &SourceLaw) -> Result<MomentProfile> {
    exact_moments_with_budget(kernel, law, DEFAULT_ENUMERATION_BUDGET)
}

pub fn exact_moments_with_budget(kernel: &Kernel, law: &SourceLaw, budget: u64) -> Result<MomentProfile> {
    let atoms = atoms_for(kernel, law)
        .ok_or_else(|| Error::InvalidLaw(format!("law '{}' has no finite support", law.name())))?;
    let m = kernel.degree();
    let s = atoms.len();
    let count = (s as f64).powi(m as i32);
    if count > budget as f64 {
        return Err(Error::EnumerationTooLarge { count, budget });
    }
    let size = s.pow(m as u32);
    let w = &atoms.weights;
    let dim = atoms.dim;

    // raw kernel tensor, first coordinate most significant
    let mut dig = vec![0usize; m];
    let mut args = vec![0.0; m * dim];
    let mut h: Vec<f64> = Vec::with_capacity(size);
    for idx in 0..size {
        digits(idx, s, &mut dig);
        for (j, &a) in dig.iter().enumerate() {
            args[j * dim..(j + 1) * dim].copy_from_slice(atoms.point(a));
        }
        h.push(kernel.eval(&args));
    }
    let mean_h = full_expectation(&h, w);
    for x in h.iter_mut() {
        *x -= mean_h;
    }
    let sq: Vec<f64> = h.iter().map(|x| x * x).collect();
    let var_h = full_expectation(&sq, w);
    let abs3_h = full_expectation(&h.iter().map(|x| x.abs().powi(3)).collect::<Vec<_>>(), w);
    let var_h2 = full_expectation(&sq.iter().map(|x| (x - var_h).powi(2)).collect::<Vec<_>>(), w);

    // h_r and Psi_r tensors, r = m down to 1; index r - 1
    let mut h_levels: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut psi_levels: Vec<Vec<f64>> = vec![Vec::new(); m];
    h_levels[m - 1] = h;
    psi_levels[m - 1] = sq;
    for r in (1..m).rev() {
        h_levels[r - 1] = marginalize_last(&h_levels[r], w);
        psi_levels[r - 1] = marginalize_last(&psi_levels[r], w);
    }
    let var_h_r: Vec<f64> = h_levels
        .iter()
        .map(|t| {
            let second = full_expectation(&t.iter().map(|x| x * x).collect::<Vec<_>>(), w);
            let first = full_expectation(t, w);
            (second - first * first).max(0.0)
        })
        .collect();
    let g = &h_levels[0];
    let var_g = var_h_r[0];
    let abs3_g = kahan_sum(g.iter().zip(w).map(|(x, p)| p * x.abs().powi(3)));
    let psi1_pow32 = kahan_sum(psi_levels[0].iter().zip(w).map(|(x, p)| p * x.max(0.0).powf(1.5)));

    // Hoeffding projections of h^2 on the atoms; pi[r - 1] has s^r entries
    let pi_cost: f64 = (1..=m).map(|r| (s as f64).powi(r as i32) * 2f64.powi(r as i32)).sum();
    let pi_r_abs32 = if pi_cost <= 4.0 * budget as f64 {
        let mut pi: Vec<Vec<f64>> = Vec::with_capacity(m);
        for r in 1..=m {
            let level = &psi_levels[r - 1];
            let mut table = Vec::with_capacity(level.len());
            let mut dig = vec![0usize; r];
            for (idx, &psi) in level.iter().enumerate() {
                digits(idx, s, &mut dig);
                let mut val = psi - var_h;
                for mask in 1..(1usize << r) - 1 {
                    let sub = to_index((0..r).filter(|b| mask >> b & 1 == 1).map(|b| dig[b]), s);
                    val -= pi[mask.count_ones() as usize - 1][sub];
                }
                table.push(val);
            }
            pi.push(table);
        }
        (2..=m)
            .map(|r| full_expectation(&pi[r - 1].iter().map(|x| x.abs().powf(1.5)).collect::<Vec<_>>(), w))
            .collect()
    } else {
        Vec::new()
    };

    let rank_d = (1..=m).find(|&r| var_h_r[r - 1] > RANK_TOLERANCE).unwrap_or(m);
    Ok(MomentProfile {
        degree: m,
        mean_h,
        var_h,
        var_g,
        abs3_g,
        abs3_h,
        psi1_pow32,
        var_h2: Some(var_h2),
        pi_r_abs32,
        var_h_r,
        rank_d,
        provenance: Provenance::Exact,
    })
}

/// How conditional expectations over trailing kernel arguments are taken.
#[derive(Debug, Clone)]
pub enum Expectation {
    /// Weighted enumeration; the law must have finite support.
    Exact,
    /// Average over `reps` fresh draws from the stream of `seed`.
    MonteCarlo { reps: usize, seed: u64 },
}

/// `h_r(args) = E[h(args, X_{r+1}, .., X_m)]` for the kernel as given.
pub fn projection_h_r(
    kernel: &Kernel,
    law: &SourceLaw,
    r: usize,
    args: &[f64],
    how: &Expectation,
) -> Result<f64> {
    let m = kernel.degree();
    if r < 1 || r > m {
        return Err(Error::InvalidArgument(format!("r = {r} outside [1, {m}]")));
    }
    if args.len() != r * kernel.obs_dim() {
        return Err(Error::InvalidArgument(format!(
            "expected {} argument reals, got {}",
            r * kernel.obs_dim(),
            args.len()
        )));
    }
    if r == m {
        return Ok(kernel.eval(args));
    }
    let stats = match how {
        Expectation::Exact => {
            let atoms = atoms_for(kernel, law)
                .ok_or_else(|| Error::InvalidLaw(format!("law '{}' has no finite support", law.name())))?;
            conditional_exact(kernel, &atoms, args, m - r)
        }
        Expectation::MonteCarlo { reps, seed } => {
            let mut rng = stream(*seed, domain::INNER, 0);
            conditional_mc(kernel, law, args, m - r, *reps, &mut rng)
        }
    };
    Ok(stats.mean)
}

/// Conditional moments of the raw kernel given its leading arguments.
#[derive(Debug, Clone, Copy)]
pub struct Conditional {
    /// E[k | fixed]
    pub mean: f64,
    /// E[k^2 | fixed]
    pub second: f64,
    /// unbiased estimate of E[k | fixed]^2
    pub mean_sq: f64,
}

pub fn conditional_exact(kernel: &Kernel, atoms: &Atoms, fixed: &[f64], free: usize) -> Conditional {
    let dim = atoms.dim;
    let s = atoms.len();
    let size = s.pow(free as u32);
    let mut args = fixed.to_vec();
    args.resize(fixed.len() + free * dim, 0.0);
    let mut dig = vec![0usize; free];
    let (mut m1, mut m2) = (KahanSum::new(), KahanSum::new());
    for idx in 0..size {
        digits(idx, s, &mut dig);
        let mut wgt = 1.0;
        for (j, &a) in dig.iter().enumerate() {
            args[fixed.len() + j * dim..fixed.len() + (j + 1) * dim].copy_from_slice(atoms.point(a));
            wgt *= atoms.weights[a];
        }
        let k = kernel.eval(&args);
        m1.add(wgt * k);
        m2.add(wgt * k * k);
    }
    let mean = m1.value();
    Conditional { mean, second: m2.value(), mean_sq: mean * mean }
}

pub fn conditional_mc<R: Rng + ?Sized>(
    kernel: &Kernel,
    law: &SourceLaw,
    fixed: &[f64],
    free: usize,
    reps: usize,
    rng: &mut R,
) -> Conditional {
    let dim = kernel.obs_dim();
    let mut args = fixed.to_vec();
    args.resize(fixed.len() + free * dim, 0.0);
    let (mut s1, mut s2) = (KahanSum::new(), KahanSum::new());
    for _ in 0..reps {
        for slot in args[fixed.len()..].iter_mut() {
            *slot = law.sample(rng);
        }
        let k = kernel.eval(&args);
        s1.add(k);
        s2.add(k * k);
    }
    let i = reps as f64;
    let (t1, t2) = (s1.value(), s2.value());
    let mean_sq = if reps > 1 { (t1 * t1 - t2) / (i * (i - 1.0)) } else { (t1 / i).powi(2) };
    Conditional { mean: t1 / i, second: t2 / i, mean_sq }
}

/// Monte Carlo configuration for [`mc_moments_with`].
#[derive(Debug, Clone)]
pub struct McConfig {
    pub reps: usize,
    pub inner_reps: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self { reps, inner_reps: DEFAULT_INNER_REPS, seed }
    }
}

/// Monte Carlo profile with the default inner-rep count.
pub fn mc_moments(kernel: &Kernel, law: &SourceLaw, reps: usize, seed: u64) -> Result<MomentProfile> {
    mc_moments_with(kernel, law, &McConfig::new(reps, seed))
}

/// Centering constants estimated on an independent pilot sample.
#[derive(Debug, Clone, Copy)]
struct Centering {
    mu: f64,
    v: f64,
    var_mu: f64,
    var_v: f64,
}

/// Per-draw record layout: `[h, (A_S, B_S, AA_S) for each proper subset mask S]`.
struct Records {
    data: Vec<f64>,
    stride: usize,
    masks: Vec<usize>,
    m: usize,
}

impl Records {
    fn len(&self) -> usize {
        self.data.len() / self.stride
    }

    fn h(&self, i: usize) -> f64 {
        self.data[i * self.stride]
    }

    /// (A, B, AA) of the raw kernel conditional on the coordinates in `mask`.
    fn cond(&self, i: usize, mask: usize) -> (f64, f64, f64) {
        if mask == (1 << self.m) - 1 {
            let h = self.h(i);
            return (h, h * h, h * h);
        }
        let pos = self.masks.iter().position(|&x| x == mask).expect("mask recorded");
        let base = i * self.stride + 1 + 3 * pos;
        (self.data[base], self.data[base + 1], self.data[base + 2])
    }
}

/// Estimate of `T(mean_i q_i(mu, v))` with centering constants from an
/// independent pilot. The second-order plug-in bias is removed and the
/// standard error carries the propagated pilot uncertainty.
fn delta_field<Q, T>(n: usize, c: &Centering, q: Q, t: T) -> (f64, f64)
where
    Q: Fn(usize, f64, f64) -> f64 + Sync,
    T: Fn(f64) -> f64,
{
    let eval = |mu: f64, v: f64| -> f64 { t(kahan_sum((0..n).map(|i| q(i, mu, v))) / n as f64) };
    let mean_q = kahan_sum((0..n).map(|i| q(i, c.mu, c.v))) / n as f64;
    let var_q = kahan_sum((0..n).map(|i| (q(i, c.mu, c.v) - mean_q).powi(2))) / (n as f64 - 1.0).max(1.0);
    let base = t(mean_q);
    // slope of T at mean_q for the sampling SE
    let eps = 1e-6 * mean_q.abs().max(1e-12);
    let tprime = (t(mean_q + eps) - t(mean_q - eps)) / (2.0 * eps);
    let mut se2 = tprime * tprime * var_q / n as f64;
    let mut est = base;
    for (delta2, shift) in [(c.var_mu, 0usize), (c.var_v, 1usize)] {
        if !(delta2 > 0.0) {
            continue;
        }
        let d = delta2.sqrt();
        let (plus, minus) = if shift == 0 {
            (eval(c.mu + d, c.v), eval(c.mu - d, c.v))
        } else {
            (eval(c.mu, c.v + d), eval(c.mu, c.v - d))
        };
        let first = (plus - minus) / (2.0 * d);
        let second = (plus - 2.0 * base + minus) / delta2;
        est -= 0.5 * second * delta2;
        se2 += first * first * delta2 + 0.5 * (second * delta2).powi(2);
    }
    (est, se2.sqrt())
}

/// Monte Carlo profile: `reps` outer tuples, conditional expectations exact
/// when the law has small finite support, otherwise from `inner_reps` draws.
pub fn mc_moments_with(kernel: &Kernel, law: &SourceLaw, cfg: &McConfig) -> Result<MomentProfile> {
    if cfg.reps < MIN_MC_REPS {
        return Err(Error::InvalidArgument(format!(
            "mc_moments needs reps >= {MIN_MC_REPS}, got {}",
            cfg.reps
        )));
    }
    if cfg.inner_reps < 2 {
        return Err(Error::InvalidArgument("inner_reps must be at least 2".into()));
    }
    let m = kernel.degree();
    let dim = kernel.obs_dim();
    let reps = cfg.reps;
    let atoms = atoms_for(kernel, law);
    let inner_exact = |free: usize| {
        atoms.as_ref().is_some_and(|a| (a.len() as f64).powi(free as i32) <= INNER_EXACT_LIMIT as f64)
    };
    let with_pi = m <= MC_PI_MAX_DEGREE;
    let full = (1usize << m) - 1;
    let masks: Vec<usize> = if with_pi {
        (1..full).collect()
    } else {
        (1..m).map(|r| (1usize << r) - 1).collect()
    };
    let stride = 1 + 3 * masks.len();
    let n_chunks = reps.div_ceil(CHUNK);

    let draw_tuple = |rng: &mut Stream, buf: &mut [f64]| {
        for x in buf.iter_mut() {
            *x = law.sample(rng);
        }
    };

    // pilot sample for the centering constants
    let pilot: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(cfg.seed, domain::PILOT, c as u64);
            let mut buf = vec![0.0; m * dim];
            let len = CHUNK.min(reps - c * CHUNK);
            (0..len)
                .map(|_| {
                    draw_tuple(&mut rng, &mut buf);
                    kernel.eval(&buf)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let r = reps as f64;
    let mu = kahan_sum(pilot.iter().copied()) / r;
    let v = kahan_sum(pilot.iter().map(|x| (x - mu).powi(2))) / (r - 1.0);
    let m4 = kahan_sum(pilot.iter().map(|x| (x - mu).powi(4))) / r;
    let centering = Centering {
        mu,
        v,
        var_mu: v / r,
        // Var of the sample variance: (mu4 - sigma^4)/R + 2 sigma^4 / (R (R - 1))
        var_v: ((m4 - v * v).max(0.0) / r + 2.0 * v * v / (r * (r - 1.0))).max(0.0),
    };

    // main sample with conditional expectations
    let data: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(cfg.seed, domain::MOMENTS, c as u64);
            let mut inner_rng = stream(cfg.seed, domain::INNER, c as u64);
            let mut buf = vec![0.0; m * dim];
            let mut fixed = Vec::with_capacity(m * dim);
            let len = CHUNK.min(reps - c * CHUNK);
            let mut out = Vec::with_capacity(len * stride);
            for _ in 0..len {
                draw_tuple(&mut rng, &mut buf);
                out.push(kernel.eval(&buf));
                for &mask in &masks {
                    fixed.clear();
                    for j in 0..m {
                        if mask >> j & 1 == 1 {
                            fixed.extend_from_slice(&buf[j * dim..(j + 1) * dim]);
                        }
                    }
                    let free = m - mask.count_ones() as usize;
                    let cnd = if inner_exact(free) {
                        conditional_exact(kernel, atoms.as_ref().unwrap(), &fixed, free)
                    } else {
                        conditional_mc(kernel, law, &fixed, free, cfg.inner_reps, &mut inner_rng)
                    };
                    out.extend_from_slice(&[cnd.mean, cnd.second, cnd.mean_sq]);
                }
            }
            out
        })
        .collect();
    let rec = Records { data, stride, masks, m };
    let n = rec.len();
    let c = &centering;
    let id = |x: f64| x;

    let mean_h = {
        let xs: Vec<f64> = (0..n).map(|i| rec.h(i)).collect();
        let mean = kahan_sum(xs.iter().copied()) / n as f64;
        let var = kahan_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n as f64 - 1.0);
        (mean, (var / n as f64).sqrt())
    };
    let var_h = delta_field(n, c, |i, mu, _| (rec.h(i) - mu).powi(2), id);
    let abs3_h = delta_field(n, c, |i, mu, _| (rec.h(i) - mu).abs().powi(3), id);
    let var_h2 = delta_field(n, c, |i, mu, v| ((rec.h(i) - mu).powi(2) - v).powi(2), id);
    let var_h_r: Vec<(f64, f64)> = (1..=m)
        .map(|r| {
            if r == m {
                return var_h;
            }
            let mask = (1usize << r) - 1;
            delta_field(
                n,
                c,
                |i, mu, _| {
                    let (a, _, aa) = rec.cond(i, mask);
                    aa - 2.0 * mu * a + mu * mu
                },
                id,
            )
        })
        .collect();
    let var_g = var_h_r[0];
    let abs3_g = delta_field(n, c, |i, mu, _| (rec.cond(i, 1).0 - mu).abs().powi(3), id);
    let psi1 = |i: usize, mu: f64| {
        let (a, b, _) = rec.cond(i, 1);
        (b - 2.0 * mu * a + mu * mu).max(0.0)
    };
    let psi1_pow32 = delta_field(n, c, |i, mu, _| psi1(i, mu).powf(1.5), id);

    let pi_r: Vec<(f64, f64)> = if with_pi {
        // pi over the subsets of the first r coordinates, recursively by mask
        let pi_value = |i: usize, mu: f64, v: f64, r: usize| -> f64 {
            let top = (1usize << r) - 1;
            let mut pi = vec![0.0; top + 1];
            for mask in 1..=top {
                let (a, b, _) = rec.cond(i, mask);
                let mut val = b - 2.0 * mu * a + mu * mu - v;
                let mut sub = (mask - 1) & mask;
                while sub > 0 {
                    val -= pi[sub];
                    sub = (sub - 1) & mask;
                }
                pi[mask] = val;
            }
            pi[top]
        };
        (2..=m).map(|r| delta_field(n, c, |i, mu, v| pi_value(i, mu, v, r).abs().powf(1.5), id)).collect()
    } else {
        Vec::new()
    };

    let rank_d = (1..=m).find(|&r| var_h_r[r - 1].0 > RANK_Z * var_h_r[r - 1].1).unwrap_or(m);
    let se = MomentSe {
        mean_h: mean_h.1,
        var_h: var_h.1,
        var_g: var_g.1,
        abs3_g: abs3_g.1,
        abs3_h: abs3_h.1,
        psi1_pow32: psi1_pow32.1,
        var_h2: var_h2.1,
        pi_r_abs32: pi_r.iter().map(|x| x.1).collect(),
        var_h_r: var_h_r.iter().map(|x| x.1).collect(),
    };
    let any_mc_inner = rec.masks.iter().any(|&mk| !inner_exact(m - mk.count_ones() as usize));
    Ok(MomentProfile {
        degree: m,
        mean_h: mean_h.0,
        var_h: var_h.0,
        var_g: var_g.0,
        abs3_g: abs3_g.0,
        abs3_h: abs3_h.0,
        psi1_pow32: psi1_pow32.0,
        var_h2: Some(var_h2.0),
        pi_r_abs32: pi_r.iter().map(|x| x.0).collect(),
        var_h_r: var_h_r.iter().map(|x| x.0).collect(),
        rank_d,
        provenance: Provenance::MonteCarlo {
            reps,
            inner_reps: any_mc_inner.then_some(cfg.inner_reps),
            se,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn product_on_rademacher() {
        let p = exact_moments(&Kernel::product(2).unwrap(), &SourceLaw::rademacher()).unwrap();
        assert_eq!(p.mean_h, 0.0);
        assert!(close(p.var_h, 1.0, 1e-15));
        assert!(close(p.var_g, 0.0, 1e-15));
        assert_eq!(p.rank_d, 2);
        assert!(close(p.psi1_pow32, 1.0, 1e-15));
        assert!(close(p.var_h2.unwrap(), 0.0, 1e-15));
        assert!(close(p.pi_r(2).unwrap(), 0.0, 1e-15));
    }

    #[test]
    fn sample_variance_on_uniform3() {
        // g takes values {1/6, -1/3, 1/6} on {0, 1, 2}
        let k = Kernel::sample_variance();
        let p = exact_moments(&k, &SourceLaw::uniform3()).unwrap();
        assert!(close(p.mean_h, 2.0 / 3.0, 1e-15));
        assert!(close(p.var_g, 1.0 / 18.0, 1e-15));
        assert!(close(p.var_h, 5.0 / 9.0, 1e-15));
        assert!(close(p.abs3_g, 10.0 / 648.0, 1e-15));
        assert_eq!(p.rank_d, 1);
        // centering first changes nothing but the mean
        let pc = exact_moments(&k.centered(2.0 / 3.0), &SourceLaw::uniform3()).unwrap();
        assert!(close(pc.mean_h, 0.0, 1e-15));
        assert!(close(pc.var_h, p.var_h, 1e-15));
    }

    #[test]
    fn constant_kernel_is_degenerate() {
        let p = exact_moments(&Kernel::constant(3.0, 2).unwrap(), &SourceLaw::uniform3()).unwrap();
        assert_eq!(p.var_h, 0.0);
        assert!(p.require_nondegenerate().is_err());
    }

    #[test]
    fn jensen_on_exact_profiles() {
        for law in [SourceLaw::rademacher(), SourceLaw::uniform3()] {
            for name in Kernel::NAMES {
                let p = exact_moments(&Kernel::from_name(name, 2).unwrap(), &law).unwrap();
                let floor = p.var_h.powf(1.5);
                assert!(p.abs3_h >= floor * (1.0 - 1e-12), "{name}");
                assert!(p.psi1_pow32 >= floor * (1.0 - 1e-12), "{name}");
            }
        }
    }

    #[test]
    fn enumeration_budget_error_names_count() {
        let k = Kernel::product(12).unwrap();
        let err = exact_moments_with_budget(&k, &SourceLaw::uniform3(), 1000).unwrap_err();
        assert_eq!(err, Error::EnumerationTooLarge { count: 531_441.0, budget: 1000 });
        assert!(exact_moments(&k, &SourceLaw::from_name("stdnormal").unwrap()).is_err());
    }

    #[test]
    fn projection_examples() {
        let prod = Kernel::product(2).unwrap();
        let rad = SourceLaw::rademacher();
        assert_eq!(projection_h_r(&prod, &rad, 1, &[1.0], &Expectation::Exact).unwrap(), 0.0);
        let sv = Kernel::sample_variance();
        let u3 = SourceLaw::uniform3();
        let v = projection_h_r(&sv, &u3, 1, &[1.0], &Expectation::Exact).unwrap();
        assert!(close(v, 1.0 / 3.0, 1e-15));
        assert_eq!(projection_h_r(&sv, &u3, 2, &[0.5, 3.0], &Expectation::Exact).unwrap(), sv.eval(&[0.5, 3.0]));
        assert!(projection_h_r(&sv, &u3, 0, &[], &Expectation::Exact).is_err());
        assert!(projection_h_r(&sv, &u3, 3, &[1.0, 1.0, 1.0], &Expectation::Exact).is_err());
    }

    #[test]
    fn mc_projection_path() {
        // E[(1 - Y)^2 / 2] = (1 + 1) / 2 = 1 for Y ~ N(0, 1)
        let sv = Kernel::sample_variance();
        let law = SourceLaw::from_name("stdnormal").unwrap();
        let v = projection_h_r(&sv, &law, 1, &[1.0], &Expectation::MonteCarlo { reps: 200_000, seed: 3 }).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
        assert!(projection_h_r(&sv, &law, 1, &[1.0], &Expectation::Exact).is_err());
    }

    #[test]
    fn mc_rejects_few_reps() {
        let err = mc_moments(&Kernel::product(2).unwrap(), &SourceLaw::rademacher(), 1000, 1);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exact_degree_three_product() {
        // product of three Rademachers: h_1 = h_2 = 0, rank 3
        let p = exact_moments(&Kernel::product(3).unwrap(), &SourceLaw::rademacher()).unwrap();
        assert_eq!(p.rank_d, 3);
        assert_eq!(p.pi_r_abs32.len(), 2);
    }
}
