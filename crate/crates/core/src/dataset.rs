use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::law::SourceLaw;
use crate::rng::{domain, stream};

/// `n` observations of `obs_dim` reals each, stored flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    obs_dim: usize,
    law: Option<SourceLaw>,
    seed: Option<u64>,
}

impl Dataset {
    pub fn from_values(values: Vec<f64>, obs_dim: usize) -> Result<Self> {
        if obs_dim == 0 || !values.len().is_multiple_of(obs_dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form observations of dimension {obs_dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contains non-finite values".into()));
        }
        Ok(Self { values, obs_dim, law: None, seed: None })
    }

    /// `n` i.i.d. observations drawn from the data stream of `seed`.
    pub fn generate(law: &SourceLaw, n: usize, obs_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, domain::DATA, 0);
        let mut ds = Self::from_rng(law, n, obs_dim, &mut rng);
        ds.seed = Some(seed);
        ds
    }

    pub fn from_rng<R: Rng + ?Sized>(law: &SourceLaw, n: usize, obs_dim: usize, rng: &mut R) -> Self {
        let values = (0..n * obs_dim).map(|_| law.sample(rng)).collect();
        Self { values, obs_dim, law: Some(law.clone()), seed: None }
    }

    /// Plain numeric CSV: every field of every non-empty, non-`#` line is one
    /// real, read row by row.
    pub fn from_csv(path: &Path, obs_dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("line {}: '{}' is not a number", lineno + 1, field.trim()))
                })?;
                values.push(v);
            }
        }
        Self::from_values(values, obs_dim)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.len() / self.obs_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.values[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn law(&self) -> Option<&SourceLaw> {
        self.law.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Gathers the observations at `idx` into `out`.
    #[inline]
    pub fn gather(&self, idx: &[usize], out: &mut Vec<f64>) {
        out.clear();
        for &i in idx {
            out.extend_from_slice(self.observation(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible() {
        let law = SourceLaw::from_name("stdnormal").unwrap();
        let a = Dataset::generate(&law, 50, 1, 9);
        let b = Dataset::generate(&law, 50, 1, 9);
        let c = Dataset::generate(&law, 50, 1, 10);
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        assert_eq!(a.n(), 50);
    }

    #[test]
    fn csv_parsing() {
        let dir = std::env::temp_dir().join(format!("ustat-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        std::fs::write(&path, "# header comment\n1,2\n3, 4.5\n\n-1,0\n").unwrap();
        let ds = Dataset::from_csv(&path, 2).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.observation(1), &[3.0, 4.5]);
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(Dataset::from_csv(&path, 1).is_err());
        assert!(Dataset::from_values(vec![1.0, 2.0, 3.0], 2).is_err());
    }
}
