//! Exact binomial coefficients and the colex rank/unrank bijection on
//! increasing index tuples.
//!
//! A subset `c_1 < c_2 < ... < c_m` of `{0, .., n-1}` has colex rank
//! `sum_i C(c_i, i)` (with `i` counted from 1).

use crate::error::{Error, Result};

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact `C(n, k)`; errors if the value does not fit in 128 bits.
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Err(Error::InvalidArgument(format!("binom({n}, {k}) requires k <= n")));
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) is divisible by (i + 1); cancel first to delay overflow
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(r, den);
        let (r_red, den_red) = (r / g, den / g);
        let num_red = num / den_red;
        debug_assert_eq!(num % den_red, 0);
        r = r_red.checked_mul(num_red).ok_or(Error::BinomialOverflow { n, k })?;
    }
    Ok(r)
}

/// `C(c, i)` for `c <= n`, `i <= m`, used by rank/unrank. Entries that would
/// overflow are stored as `u128::MAX`; they are never reached for valid
/// ranks because `C(c, i) <= C(n, m)` whenever `i <= m <= n / 2`.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    n: usize,
    m: usize,
    rows: Vec<Vec<u128>>,
}

impl BinomialTable {
    pub fn new(n: usize, m: usize) -> Self {
        let mut rows = vec![vec![0u128; n + 1]; m + 1];
        rows[0].fill(1);
        for i in 1..=m {
            for c in 1..=n {
                rows[i][c] = rows[i - 1][c - 1].saturating_add(rows[i][c - 1]);
            }
        }
        Self { n, m, rows }
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize) -> u128 {
        self.rows[i][c]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `C(n, m)`, or an overflow error.
    pub fn total(&self) -> Result<u128> {
        binom(self.n as u64, self.m as u64)
    }

    /// Writes the tuple of colex rank `rank` into `out` (length m).
    #[inline]
    pub fn unrank_into(&self, mut rank: u128, out: &mut [usize]) {
        let mut hi = self.n;
        for i in (1..=self.m).rev() {
            // largest c < hi with C(c, i) <= rank; C(i - 1, i) = 0 always qualifies
            let (mut lo, mut up) = (i - 1, hi - 1);
            while lo < up {
                let mid = lo + (up - lo).div_ceil(2);
                if self.get(mid, i) <= rank {
                    lo = mid;
                } else {
                    up = mid - 1;
                }
            }
            out[i - 1] = lo;
            rank -= self.get(lo, i);
            hi = lo;
        }
    }

    pub fn unrank(&self, rank: u128) -> Result<Vec<usize>> {
        let total = self.total()?;
        if rank >= total {
            return Err(Error::RankOutOfRange { rank, n: self.n, m: self.m, total });
        }
        let mut out = vec![0; self.m];
        self.unrank_into(rank, &mut out);
        Ok(out)
    }

    pub fn rank(&self, subset: &[usize]) -> Result<u128> {
        if subset.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "subset has {} elements, expected {}",
                subset.len(),
                self.m
            )));
        }
        if subset.windows(2).any(|w| w[0] >= w[1]) || subset.last().is_some_and(|&c| c >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "subset {subset:?} is not strictly increasing within [0, {})",
                self.n
            )));
        }
        Ok(subset.iter().enumerate().map(|(i, &c)| self.get(c, i + 1)).sum())
    }
}

/// `unrank(rank, n, m)` as a free function.
pub fn unrank(rank: u128, n: usize, m: usize) -> Result<Vec<usize>> {
    BinomialTable::new(n, m).unrank(rank)
}

pub fn rank(subset: &[usize], n: usize) -> Result<u128> {
    BinomialTable::new(n, subset.len()).rank(subset)
}

/// Advances `c` to the next m-subset of `{0, .., n-1}` in colex order.
/// Returns false after the last subset.
#[inline]
pub fn next_colex(c: &mut [usize], n: usize) -> bool {
    let m = c.len();
    for i in 0..m {
        let limit = if i + 1 < m { c[i + 1] } else { n };
        if c[i] + 1 < limit {
            c[i] += 1;
            for (j, slot) in c.iter_mut().enumerate().take(i) {
                *slot = j;
            }
            return true;
        }
    }
    false
}

/// Calls `f` on every m-subset of `{0, .., n-1}` in colex (rank) order.
pub fn for_each_colex<F: FnMut(&[usize])>(n: usize, m: usize, mut f: F) {
    if m > n {
        return;
    }
    let mut c: Vec<usize> = (0..m).collect();
    loop {
        f(&c);
        if !next_colex(&mut c, n) {
            break;
        }
    }
}
