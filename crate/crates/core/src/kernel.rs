//! Symmetric kernels and the built-in registry.
//!
//! A kernel of degree `m` acts on `m` observations, each observation being
//! `obs_dim` reals. Arguments are passed flattened: observation `j` occupies
//! `args[j * obs_dim..(j + 1) * obs_dim]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest degree accepted by the built-ins.
pub const MAX_DEGREE: usize = 32;

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum KernelFn {
    /// x_1 * ... * x_m
    Product,
    /// (x - y)^2 / 2
    SampleVariance,
    /// sign((x_1 - x_2)(y_1 - y_2)) on paired observations
    KendallSign,
    /// (x_1 + ... + x_m)^3
    MeanPow3,
    Constant(f64),
    Custom(CustomFn),
}

#[derive(Clone)]
pub struct Kernel {
    name: String,
    degree: usize,
    obs_dim: usize,
    func: KernelFn,
    offset: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("obs_dim", &self.obs_dim)
            .field("offset", &self.offset)
            .finish()
    }
}

/// Sum in ascending order so the result does not depend on argument order.
#[inline]
fn sorted_sum(args: &[f64]) -> f64 {
    let mut buf = [0.0f64; MAX_DEGREE];
    let buf = &mut buf[..args.len()];
    buf.copy_from_slice(args);
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum()
}

#[inline]
fn sorted_product(args: &[f64]) -> f64 {
    let mut buf = [0.0f64; MAX_DEGREE];
    let buf = &mut buf[..args.len()];
    buf.copy_from_slice(args);
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().product()
}

impl Kernel {
    pub const NAMES: [&'static str; 4] = ["product", "sample_variance", "kendall_sign", "mean_pow3"];

    fn builtin(name: &str, degree: usize, obs_dim: usize, func: KernelFn) -> Result<Self> {
        if !(2..=MAX_DEGREE).contains(&degree) {
            return Err(Error::InvalidKernel(format!("degree {degree} outside [2, {MAX_DEGREE}]")));
        }
        Ok(Self { name: name.to_string(), degree, obs_dim, func, offset: 0.0 })
    }

    pub fn product(degree: usize) -> Result<Self> {
        Self::builtin("product", degree, 1, KernelFn::Product)
    }

    pub fn sample_variance() -> Self {
        Self::builtin("sample_variance", 2, 1, KernelFn::SampleVariance).expect("degree 2")
    }

    pub fn kendall_sign() -> Self {
        Self::builtin("kendall_sign", 2, 2, KernelFn::KendallSign).expect("degree 2")
    }

    pub fn mean_pow3(degree: usize) -> Result<Self> {
        Self::builtin("mean_pow3", degree, 1, KernelFn::MeanPow3)
    }

    pub fn constant(c: f64, degree: usize) -> Result<Self> {
        Self::builtin("constant", degree, 1, KernelFn::Constant(c))
    }

    /// A user-supplied kernel. Symmetry is the caller's responsibility.
    pub fn custom<F>(name: &str, degree: usize, obs_dim: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if obs_dim == 0 {
            return Err(Error::InvalidKernel("observation dimension must be positive".into()));
        }
        Self::builtin(name, degree, obs_dim, KernelFn::Custom(Arc::new(f)))
    }

    /// Registry lookup. `sample_variance` and `kendall_sign` only exist at degree 2.
    pub fn from_name(name: &str, degree: usize) -> Result<Self> {
        let fixed = |k: Kernel| {
            if degree == 2 {
                Ok(k)
            } else {
                Err(Error::InvalidKernel(format!("kernel '{name}' has degree 2, not {degree}")))
            }
        };
        match name {
            "product" => Self::product(degree),
            "sample_variance" => fixed(Self::sample_variance()),
            "kendall_sign" => fixed(Self::kendall_sign()),
            "mean_pow3" => Self::mean_pow3(degree),
            other => Err(Error::UnknownName(format!("kernel '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// The constant subtracted from the raw kernel value.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.degree * self.obs_dim);
        let raw = match &self.func {
            KernelFn::Product => {
                if args.len() == 2 {
                    args[0] * args[1]
                } else {
                    sorted_product(args)
                }
            }
            KernelFn::SampleVariance => {
                let d = args[0] - args[1];
                0.5 * d * d
            }
            KernelFn::KendallSign => {
                let s = (args[0] - args[2]) * (args[1] - args[3]);
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            KernelFn::MeanPow3 => {
                let s = if args.len() == 2 { args[0] + args[1] } else { sorted_sum(args) };
                s * s * s
            }
            KernelFn::Constant(c) => *c,
            KernelFn::Custom(f) => f(args),
        };
        raw - self.offset
    }

    pub fn centered(&self, mu: f64) -> Kernel {
        center_kernel(self, mu)
    }

    /// Average of the kernel over all increasing index tuples of `values`
    /// without enumerating them, for the kernels where an `O(n m)` formula
    /// exists (product, sample variance, constant). `None` otherwise.
    pub fn complete_mean_closed_form(&self, values: &[f64]) -> Option<f64> {
        let n = values.len();
        let m = self.degree;
        if self.obs_dim != 1 || n < m {
            return None;
        }
        let raw = match &self.func {
            KernelFn::Product => {
                // elementary symmetric polynomial e_m divided by C(n, m)
                let mut e = vec![0.0f64; m + 1];
                e[0] = 1.0;
                for &x in values {
                    for j in (1..=m).rev() {
                        e[j] += x * e[j - 1];
                    }
                }
                let mut c = 1.0f64;
                for j in 0..m {
                    c = c * (n - j) as f64 / (j + 1) as f64;
                }
                e[m] / c
            }
            KernelFn::SampleVariance => {
                let mean = values.iter().sum::<f64>() / n as f64;
                values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            }
            KernelFn::Constant(c) => *c,
            _ => return None,
        };
        Some(raw - self.offset)
    }
}

/// The kernel `k(...) - mu`, same degree, name suffixed `_centered`.
pub fn center_kernel(k: &Kernel, mu: f64) -> Kernel {
    let mut out = k.clone();
    out.offset += mu;
    out.name = format!("{}_centered", k.name);
    out
}
