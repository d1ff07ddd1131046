//! Numerics for reward misspecification under KL regularization and conditioning.
//!
//! The crate is organised bottom-up: [`quad`] and [`special`] supply log-space
//! integration and tail functions, [`distributions`] builds the univariate
//! laws on top, and [`tilting`], [`conditioning`], [`mdp`] and [`diagnostics`]
//! implement the constructions and statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod mdp;
pub mod quad;
pub mod rng;
pub mod special;
pub mod tilting;

pub use conditioning::{ConditioningProblem, Dependence, HScheme, RegionScheme};
pub use diagnostics::{SampleFormat, SampleSet, TailReport, Verdict};
pub use distributions::{make_distribution, Dist, Distribution, FamilySpec};
pub use error::{Error, Result};
pub use mdp::{Dmrmdp, Policy, Trajectory, TrajectoryDist};
pub use tilting::{ExpTilt, MixtureKlInput, TailUpweightConfig, TailUpweighted};
