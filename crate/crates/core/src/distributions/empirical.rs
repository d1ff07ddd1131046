//! Step law built from observed samples, with a power-law tail beyond the maximum.

use rand::{Rng, RngCore};

use super::Distribution;
use crate::diagnostics::hill_at;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct TailModel {
    /// threshold order statistic `x_(n−k)` after shifting
    anchor: f64,
    shift: f64,
    /// `k / n`
    mass: f64,
    /// Hill estimate of the reciprocal tail index
    gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    sorted: Vec<f64>,
    source: String,
    model: Option<TailModel>,
}

impl Empirical {
    pub fn new(values: &[f64], source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        if values.is_empty() {
            return Err(Error::EmptySamples(source));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "empirical",
                "values",
                format!("non-finite value at index {i}"),
            ));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let k = ((n as f64).sqrt().round() as usize).clamp(2, n.saturating_sub(1).max(2));
        let model = if n >= 3 {
            let shift = if sorted[0] > 0.0 { 0.0 } else { sorted[n / 2] };
            hill_at(&sorted, k, shift)
                .ok()
                .filter(|g| *g > 0.0)
                .map(|gamma| TailModel {
                    anchor: sorted[n - k - 1] - shift,
                    shift,
                    mass: k as f64 / n as f64,
                    gamma,
                })
        } else {
            None
        };
        Ok(Self {
            sorted,
            source,
            model,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Hill estimate used for extrapolation, if one could be fitted.
    pub fn tail_index(&self) -> Option<f64> {
        self.model.map(|m| m.gamma)
    }

    fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    fn extrapolated_log_tail(&self, x: f64) -> Option<f64> {
        let m = self.model?;
        let z = x - m.shift;
        (z > 0.0 && m.anchor > 0.0).then(|| m.mass.ln() - (z / m.anchor).ln() / m.gamma)
    }
}

impl Distribution for Empirical {
    fn name(&self) -> String {
        format!("empirical:{}", self.source)
    }
    fn support(&self) -> (f64, f64) {
        let hi = if self.model.is_some() {
            f64::INFINITY
        } else {
            self.max()
        };
        (self.sorted[0], hi)
    }
    fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }
    fn tail(&self, x: f64) -> f64 {
        if self.is_extrapolated(x) {
            return self.log_tail(x).exp();
        }
        let n = self.sorted.len();
        (n - self.sorted.partition_point(|&v| v <= x)) as f64 / n as f64
    }
    fn log_tail(&self, x: f64) -> f64 {
        if self.is_extrapolated(x) {
            if let Some(l) = self.extrapolated_log_tail(x) {
                return l.min(0.0);
            }
        }
        self.tail(x).ln()
    }
    fn pdf(&self, _x: f64) -> Option<f64> {
        None
    }
    fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let i = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.sorted[i]
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        let n = self.sorted.len() as f64;
        if let Some(m) = self.model {
            if log_p < -(n.ln()) {
                return m.shift + m.anchor * ((m.mass.ln() - log_p) * m.gamma).exp();
            }
        }
        self.quantile(-log_p.exp_m1())
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| self.sorted[rng.random_range(0..self.sorted.len())])
            .collect()
    }
    fn mean(&self) -> Option<f64> {
        Some(self.sorted.iter().sum::<f64>() / self.sorted.len() as f64)
    }
    fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        Some(self.sorted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.sorted.len() as f64)
    }
    fn is_extrapolated(&self, x: f64) -> bool {
        self.model.is_some() && x >= self.max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_cdf_inside_the_sample() {
        let e = Empirical::new(&[3.0, 1.0, 2.0], "t").unwrap();
        assert_eq!(e.cdf(0.5), 0.0);
        assert!((e.cdf(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.cdf(2.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.quantile(0.5), 2.0);
        assert!(!e.is_extrapolated(2.5));
    }

    #[test]
    fn power_law_extrapolation_beyond_max() {
        let n = 10_000;
        let xs: Vec<f64> = (1..=n)
            .map(|i| (1.0 - (i as f64 - 0.5) / n as f64).powf(-0.5))
            .collect();
        let e = Empirical::new(&xs, "pareto2").unwrap();
        let g = e.tail_index().unwrap();
        assert!((g - 0.5).abs() < 0.05, "{g}");
        let far = 1e4;
        assert!(e.is_extrapolated(far));
        // tail of Pareto(2) at 1e4 is 1e-8
        assert!((e.log_tail(far) - (1e-8f64).ln()).abs() < 2.0);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(matches!(
            Empirical::new(&[], "x"),
            Err(Error::EmptySamples(_))
        ));
        assert!(Empirical::new(&[1.0, f64::NAN], "x").is_err());
    }
}
