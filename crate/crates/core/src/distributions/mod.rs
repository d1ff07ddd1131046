//! Univariate laws, the family registry and tail-class predicates.

mod discrete;
mod empirical;
mod families;
mod spec;
mod tails;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};

pub use discrete::{Discrete, Mixture, PointMass};
pub use empirical::Empirical;
pub use families::{Exponential, LogNormal, Normal, Pareto, StudentT, Uniform, WeibullStretched};
pub use spec::{make_distribution, Family, FamilySpec};
pub use tails::{
    is_heavy_tailed, ks_critical, ks_statistic, subexponential_ratio, tail_dominance_exponent,
    DominanceRow, DominanceTable, Estimate, EvidenceRow, HeavyTailEvidence, ProbeGrid,
    SubexpMethod, TailClass, Trend,
};

use crate::special::solve_increasing;
pub(crate) use tails::check_grid;

/// A one-dimensional probability law.
///
/// `tail(x)` is `P(X > x)`; `cdf(x)` is `P(X ≤ x)`. Implementations keep
/// `log_tail` finite far beyond the range where `tail` underflows.
pub trait Distribution: Send + Sync + Debug {
    fn name(&self) -> String;

    /// Closed support interval `(lo, hi)`, either end possibly infinite.
    fn support(&self) -> (f64, f64);

    fn cdf(&self, x: f64) -> f64;

    fn tail(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    fn log_tail(&self, x: f64) -> f64 {
        self.tail(x).ln()
    }

    fn log_cdf(&self, x: f64) -> f64 {
        self.cdf(x).ln()
    }

    /// Density, or `None` for laws without one.
    fn pdf(&self, x: f64) -> Option<f64>;

    fn log_pdf(&self, x: f64) -> Option<f64> {
        self.pdf(x).map(f64::ln)
    }

    fn quantile(&self, p: f64) -> f64;

    /// Smallest `x` with `ln P(X > x) ≤ log_p`.
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        if log_p > -30.0 {
            return self.quantile(-log_p.exp_m1());
        }
        let (lo, hi) = self.support();
        let guess = self.quantile(1.0 - 1e-12);
        solve_increasing(|x| -self.log_tail(x), -log_p, lo, hi, guess)
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                self.quantile(u.max(f64::MIN_POSITIVE))
            })
            .collect()
    }

    /// `None` when the mean is undefined or infinite.
    fn mean(&self) -> Option<f64>;

    fn variance(&self) -> Option<f64> {
        None
    }

    /// Atoms `(value, probability)` for purely discrete laws.
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        None
    }

    fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// True when `tail(x)` is extrapolated rather than observed (empirical laws only).
    fn is_extrapolated(&self, _x: f64) -> bool {
        false
    }
}

pub type Dist = Arc<dyn Distribution>;

/// Shared sanity probes, used by tests and the verification runner.
pub fn probe_points(d: &dyn Distribution) -> Vec<f64> {
    let mut xs: Vec<f64> = [
        1e-6,
        1e-3,
        0.01,
        0.1,
        0.25,
        0.5,
        0.75,
        0.9,
        0.99,
        0.999,
        1.0 - 1e-6,
    ]
    .iter()
    .map(|&p| d.quantile(p))
    .filter(|x| x.is_finite())
    .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Scale of a law used to size search windows: the interquartile range, or 1.
pub fn spread(d: &dyn Distribution) -> f64 {
    let iqr = d.quantile(0.75) - d.quantile(0.25);
    if iqr.is_finite() && iqr > 0.0 {
        iqr
    } else {
        1.0
    }
}
