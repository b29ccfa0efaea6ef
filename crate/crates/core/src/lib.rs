//! Incomplete U-statistics under Bernoulli sampling of index tuples, with
//! exact moment profiles, Hoeffding-decomposition diagnostics, explicit
//! Berry-Esseen type bounds and a Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bounds;
pub mod combinatorics;
pub mod dataset;
pub mod design;
pub mod error;
pub mod hoeffding;
pub mod estimators;
pub mod kernel;
pub mod law;
pub mod moments;
pub mod montecarlo;
pub mod normal;
pub mod rng;
pub mod stein;
pub mod sum;

pub use dataset::Dataset;
pub use design::{sample_design, BernoulliDesign, SampledDesign};
pub use error::{Error, Result};
pub use kernel::Kernel;
pub use law::SourceLaw;
pub use moments::{exact_moments, mc_moments, MomentProfile, Provenance};
