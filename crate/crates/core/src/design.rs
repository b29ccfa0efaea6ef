//! The Bernoulli sampling design and its two-stage sampler.
//!
//! Including every index of `I_{n,m}` independently with probability `p` is
//! equal in law to drawing the count `N_hat ~ Binomial(C(n,m), p)` and then a
//! uniformly random `N_hat`-subset of ranks. The second form costs `O(N)`
//! instead of `O(C(n,m))`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rustc_hash::FxHashSet;

use crate::combinatorics::{binom, BinomialTable};
use crate::error::{Error, Result};

/// Largest population handled by a single inversion table.
const CHUNK: u128 = 1 << 63;
/// Chunked sampling beyond this many chunks is refused.
const MAX_CHUNKS: u128 = 1 << 20;
/// Relative pmf weight below which the inversion table is truncated.
const TAIL_CUTOFF: f64 = 1e-24;

/// Inversion table for `Binomial(trials, p)` over the window of outcomes whose
/// pmf is not negligible. Built once per design; each draw is a binary search.
#[derive(Debug, Clone)]
pub struct BinomialSampler {
    lo: u64,
    cdf: Vec<f64>,
}

impl BinomialSampler {
    pub fn new(trials: u64, p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p));
        if p == 0.0 || trials == 0 {
            return Self { lo: 0, cdf: vec![1.0] };
        }
        if p == 1.0 {
            return Self { lo: trials, cdf: vec![1.0] };
        }
        let nf = trials as f64;
        let mode = (((nf + 1.0) * p).floor() as u64).min(trials);
        let odds = p / (1.0 - p);
        // weights relative to the mode via the pmf ratio recursion
        let mut up = vec![1.0f64];
        let mut k = mode;
        while k < trials {
            let w = up.last().unwrap() * ((trials - k) as f64 / (k + 1) as f64) * odds;
            if w < TAIL_CUTOFF {
                break;
            }
            up.push(w);
            k += 1;
        }
        let mut down = Vec::new();
        let mut k = mode;
        let mut w = 1.0f64;
        while k > 0 {
            w *= (k as f64 / (trials - k + 1) as f64) / odds;
            if w < TAIL_CUTOFF {
                break;
            }
            down.push(w);
            k -= 1;
        }
        let lo = mode - down.len() as u64;
        let weights: Vec<f64> = down.into_iter().rev().chain(up).collect();
        let total: f64 = crate::sum::kahan_sum(weights.iter().copied());
        let mut acc = crate::sum::KahanSum::new();
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc.add(w / total);
                acc.value()
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Self { lo, cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.lo + idx as u64
    }
}

#[derive(Debug, Clone)]
enum CountSampler {
    Single(BinomialSampler),
    /// `full` chunks of size 2^63 plus one remainder chunk
    Chunked { full: u64, chunk: BinomialSampler, rest: Option<BinomialSampler> },
}

impl CountSampler {
    fn new(total: u128, p: f64) -> Result<Self> {
        if total <= CHUNK {
            return Ok(CountSampler::Single(BinomialSampler::new(total as u64, p)));
        }
        let full = total / CHUNK;
        let rest = total % CHUNK;
        if full > MAX_CHUNKS {
            return Err(Error::InvalidDesign(format!(
                "C(n,m) = {total} needs {full} binomial chunks (limit {MAX_CHUNKS})"
            )));
        }
        Ok(CountSampler::Chunked {
            full: full as u64,
            chunk: BinomialSampler::new(CHUNK as u64, p),
            rest: (rest > 0).then(|| BinomialSampler::new(rest as u64, p)),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        match self {
            CountSampler::Single(s) => s.sample(rng) as u128,
            CountSampler::Chunked { full, chunk, rest } => {
                let mut total: u128 = (0..*full).map(|_| chunk.sample(rng) as u128).sum();
                if let Some(r) = rest {
                    total += r.sample(rng) as u128;
                }
                total
            }
        }
    }
}

/// The design `(n, m, N)` with `p = N / C(n,m)` and `alpha = n / N`.
#[derive(Debug, Clone)]
pub struct BernoulliDesign {
    pub n: usize,
    pub m: usize,
    pub budget: u64,
    pub total: u128,
    pub p: f64,
    pub alpha: f64,
    pub seed: u64,
    table: Arc<BinomialTable>,
    counts: Arc<CountSampler>,
}

impl BernoulliDesign {
    /// Requires `2 <= m < n/2` and `0 < N < C(n,m)`.
    pub fn new(n: usize, m: usize, budget: u64, seed: u64) -> Result<Self> {
        if m < 2 || 2 * m >= n {
            return Err(Error::InvalidDesign(format!("need 2 <= m < n/2, got n = {n}, m = {m}")));
        }
        Self::relaxed(n, m, budget, seed)
    }

    /// Only checks `1 <= m <= n` and `0 < N < C(n,m)`. The sampler is the same;
    /// this exists for tiny index spaces such as `(n, m) = (4, 2)` that fall
    /// outside the `m < n/2` regime.
    pub fn relaxed(n: usize, m: usize, budget: u64, seed: u64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::InvalidDesign(format!("need 1 <= m <= n, got n = {n}, m = {m}")));
        }
        let total = binom(n as u64, m as u64)
            .map_err(|e| Error::InvalidDesign(format!("C({n}, {m}) does not fit: {e}")))?;
        if budget == 0 || budget as u128 >= total {
            return Err(Error::InvalidDesign(format!(
                "budget N = {budget} must satisfy 0 < N < C({n}, {m}) = {total}"
            )));
        }
        let p = budget as f64 / total as f64;
        let counts = CountSampler::new(total, p)?;
        Ok(Self {
            n,
            m,
            budget,
            total,
            p,
            alpha: n as f64 / budget as f64,
            seed,
            table: Arc::new(BinomialTable::new(n, m)),
            counts: Arc::new(counts),
        })
    }

    pub fn table(&self) -> &BinomialTable {
        &self.table
    }

    /// Draws `N_hat` only.
    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> u128 {
        self.counts.sample(rng)
    }
}

/// A realized design: the sorted ranks of the selected index tuples.
#[derive(Debug, Clone)]
pub struct SampledDesign {
    pub design: BernoulliDesign,
    pub n_hat: u64,
    pub ranks: Vec<u128>,
}

impl SampledDesign {
    /// A realization selecting exactly `ranks` (sorted and deduplicated here).
    pub fn from_ranks(design: &BernoulliDesign, mut ranks: Vec<u128>) -> Result<Self> {
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.last().is_some_and(|&r| r >= design.total) {
            return Err(Error::InvalidArgument("rank outside [0, C(n,m))".into()));
        }
        Ok(Self { design: design.clone(), n_hat: ranks.len() as u64, ranks })
    }

    /// Every index selected (only sensible for tiny instances).
    pub fn full(design: &BernoulliDesign) -> Self {
        let ranks: Vec<u128> = (0..design.total).collect();
        Self { design: design.clone(), n_hat: ranks.len() as u64, ranks }
    }

    /// `n,m,N,n_hat,rank_1,...,rank_{n_hat}`
    pub fn to_csv_line(&self) -> String {
        let d = &self.design;
        let mut s = format!("{},{},{},{}", d.n, d.m, d.budget, self.n_hat);
        for r in &self.ranks {
            let _ = write!(s, ",{r}");
        }
        s
    }

    pub fn from_csv_line(line: &str, seed: u64) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        let bad = |what: &str| Error::InvalidArgument(format!("malformed design line: {what}"));
        if fields.len() < 4 {
            return Err(bad("fewer than 4 fields"));
        }
        let n: usize = fields[0].parse().map_err(|_| bad("n"))?;
        let m: usize = fields[1].parse().map_err(|_| bad("m"))?;
        let budget: u64 = fields[2].parse().map_err(|_| bad("N"))?;
        let n_hat: u64 = fields[3].parse().map_err(|_| bad("n_hat"))?;
        let ranks = fields[4..]
            .iter()
            .map(|f| f.parse::<u128>().map_err(|_| bad("rank")))
            .collect::<Result<Vec<_>>>()?;
        if ranks.len() as u64 != n_hat || ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("rank list inconsistent with n_hat or not increasing"));
        }
        let design = BernoulliDesign::new(n, m, budget, seed)?;
        Self::from_ranks(&design, ranks)
    }

    /// Index tuple of the `j`-th selected rank.
    pub fn tuple(&self, j: usize, out: &mut [usize]) {
        self.design.table.unrank_into(self.ranks[j], out);
    }
}

/// Draws a realization of the Bernoulli design from `rng`.
pub fn sample_design<R: Rng + ?Sized>(design: &BernoulliDesign, rng: &mut R) -> SampledDesign {
    let total = design.total;
    let n_hat = design.sample_count(rng);
    let ranks = distinct_uniform_ranks(total, n_hat, rng);
    SampledDesign { design: design.clone(), n_hat: n_hat as u64, ranks }
}

/// `k` distinct uniform draws from `[0, total)`, sorted. Uses rejection
/// against a hash set, or the complement when `k > total / 2`.
pub fn distinct_uniform_ranks<R: Rng + ?Sized>(total: u128, k: u128, rng: &mut R) -> Vec<u128> {
    assert!(k <= total);
    if k == 0 {
        return Vec::new();
    }
    if 2 * k > total {
        let excluded = distinct_uniform_ranks(total, total - k, rng);
        let mut out = Vec::with_capacity(k as usize);
        let mut ex = excluded.iter().peekable();
        for r in 0..total {
            if ex.peek() == Some(&&r) {
                ex.next();
            } else {
                out.push(r);
            }
        }
        return out;
    }
    let k = k as usize;
    let mut seen: FxHashSet<u128> = FxHashSet::with_capacity_and_hasher(k, Default::default());
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let r = rng.gen_range(0..total);
        if seen.insert(r) {
            out.push(r);
        }
    }
    out.sort_unstable();
    out
}
