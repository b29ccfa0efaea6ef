//! Data-generating laws.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::sum::kahan_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplableKind {
    StdNormal,
    Uniform01,
    Rademacher,
    Exponential1,
}

/// A law with finite support. Probabilities supplied as fractions keep their
/// rational form alongside the floating-point weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiscrete {
    support: Vec<f64>,
    probs: Vec<f64>,
    rational: Option<Vec<(u64, u64)>>,
    cumulative: Vec<f64>,
}

impl FiniteDiscrete {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::InvalidLaw(format!(
                "support has {} points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.len() < 2 {
            return Err(Error::InvalidLaw("support must have at least 2 points".into()));
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidLaw("support points must be strictly increasing".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidLaw("probabilities must be strictly positive".into()));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { support, probs, rational: None, cumulative })
    }

    /// Probabilities given as `(numerator, denominator)` pairs; they must sum to
    /// exactly one.
    pub fn from_fractions(support: Vec<f64>, fractions: &[(u64, u64)]) -> Result<Self> {
        if fractions.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::InvalidLaw("fractions must be strictly positive".into()));
        }
        // exact check of sum == 1 over a common denominator
        let (mut num, mut den) = (0u128, 1u128);
        for &(a, b) in fractions {
            let (a, b) = (a as u128, b as u128);
            num = num * b + a * den;
            den *= b;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        if num != den {
            return Err(Error::InvalidLaw(format!("fractions sum to {num}/{den}, not 1")));
        }
        let probs = fractions.iter().map(|&(a, b)| a as f64 / b as f64).collect();
        let mut law = Self::new(support, probs)?;
        law.rational = Some(fractions.to_vec());
        Ok(law)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rational_probs(&self) -> Option<&[(u64, u64)]> {
        self.rational.as_deref()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceLaw {
    FiniteDiscrete(FiniteDiscrete),
    Samplable(SamplableKind),
}

impl SourceLaw {
    pub const NAMES: [&'static str; 5] = ["rademacher", "uniform3", "stdnormal", "uniform01", "exp1"];

    pub fn rademacher() -> Self {
        SourceLaw::FiniteDiscrete(
            FiniteDiscrete::from_fractions(vec![-1.0, 1.0], &[(1, 2), (1, 2)]).expect("valid law"),
        )
    }

    /// Uniform on {0, 1, 2}.
    pub fn uniform3() -> Self {
        SourceLaw::FiniteDiscrete(
            FiniteDiscrete::from_fractions(vec![0.0, 1.0, 2.0], &[(1, 3), (1, 3), (1, 3)])
                .expect("valid law"),
        )
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rademacher" => Ok(Self::rademacher()),
            "uniform3" => Ok(Self::uniform3()),
            "stdnormal" => Ok(SourceLaw::Samplable(SamplableKind::StdNormal)),
            "uniform01" => Ok(SourceLaw::Samplable(SamplableKind::Uniform01)),
            "exp1" => Ok(SourceLaw::Samplable(SamplableKind::Exponential1)),
            other => Err(Error::UnknownName(format!("law '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SourceLaw::FiniteDiscrete(fd) => {
                if fd.support == [-1.0, 1.0] && fd.probs == [0.5, 0.5] {
                    "rademacher".into()
                } else if fd.support == [0.0, 1.0, 2.0] && fd.probs.iter().all(|&p| p == 1.0 / 3.0) {
                    "uniform3".into()
                } else {
                    format!("finite{}", fd.support.len())
                }
            }
            SourceLaw::Samplable(SamplableKind::StdNormal) => "stdnormal".into(),
            SourceLaw::Samplable(SamplableKind::Uniform01) => "uniform01".into(),
            SourceLaw::Samplable(SamplableKind::Rademacher) => "rademacher_samplable".into(),
            SourceLaw::Samplable(SamplableKind::Exponential1) => "exp1".into(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SourceLaw::FiniteDiscrete(fd) => fd.sample(rng),
            SourceLaw::Samplable(SamplableKind::StdNormal) => StandardNormal.sample(rng),
            SourceLaw::Samplable(SamplableKind::Uniform01) => rng.gen(),
            SourceLaw::Samplable(SamplableKind::Rademacher) => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SourceLaw::Samplable(SamplableKind::Exponential1) => Exp1.sample(rng),
        }
    }

    /// Support points and probabilities when the law is finitely supported,
    /// whichever variant represents it.
    pub fn finite_support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SourceLaw::FiniteDiscrete(fd) => Some((fd.support.clone(), fd.probs.clone())),
            SourceLaw::Samplable(SamplableKind::Rademacher) => Some((vec![-1.0, 1.0], vec![0.5, 0.5])),
            SourceLaw::Samplable(_) => None,
        }
    }
}

/// Atoms of the law of one observation made of `dim` independent coordinates:
/// flattened points (`dim` reals each) with their probabilities.
#[derive(Debug, Clone)]
pub struct Atoms {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Atoms {
    pub fn from_support(support: &[f64], probs: &[f64], dim: usize) -> Self {
        let s = support.len();
        let count = s.pow(dim as u32);
        let mut points = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rest = idx;
            let mut w = 1.0;
            let start = points.len();
            points.resize(start + dim, 0.0);
            for c in (0..dim).rev() {
                let j = rest % s;
                rest /= s;
                points[start + c] = support[j];
                w *= probs[j];
            }
            weights.push(w);
        }
        Self { dim, points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    #[test]
    fn rejects_malformed_laws() {
        assert!(FiniteDiscrete::new(vec![0.0], vec![1.0]).is_err());
        assert!(FiniteDiscrete::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(FiniteDiscrete::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(FiniteDiscrete::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(FiniteDiscrete::from_fractions(vec![0.0, 1.0], &[(1, 3), (1, 3)]).is_err());
        assert!(FiniteDiscrete::new(vec![0.0, 1.0], vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn registry_round_trips_names() {
        for name in SourceLaw::NAMES {
            assert_eq!(SourceLaw::from_name(name).unwrap().name(), name);
        }
        assert!(SourceLaw::from_name("cauchy").is_err());
    }

    #[test]
    fn finite_sampling_frequencies() {
        let law = SourceLaw::uniform3();
        let mut rng = stream(1, domain::DATA, 0);
        let mut counts = [0usize; 3];
        let reps = 300_000;
        for _ in 0..reps {
            counts[law.sample(&mut rng) as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / reps as f64;
            assert!((freq - 1.0 / 3.0).abs() < 4.0 * (2.0 / 9.0 / reps as f64).sqrt());
        }
    }

    #[test]
    fn atoms_are_a_product_law() {
        let atoms = Atoms::from_support(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5], 2);
        assert_eq!(atoms.len(), 9);
        assert!((kahan_sum(atoms.weights.iter().copied()) - 1.0).abs() < 1e-15);
        assert_eq!(atoms.point(5), &[1.0, 2.0]);
        assert!((atoms.weights[5] - 0.15).abs() < 1e-16);
    }
}
