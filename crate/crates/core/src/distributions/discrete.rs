//! Atomic laws and finite mixtures.

use rand::{Rng, RngCore};

use super::{Dist, Distribution};
use crate::error::{Error, Result};
use crate::quad::log_sum_exp;
use crate::special::solve_increasing;

/// A finitely supported law.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// `prefix[i] = Σ_{j<i} probs[j]`
    prefix: Vec<f64>,
    /// `suffix[i] = Σ_{j≥i} probs[j]`
    suffix: Vec<f64>,
}

impl Discrete {
    /// Atoms may be unsorted and repeated; probabilities must sum to 1 within 1e-9.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(v, p) in &atoms {
            if !v.is_finite() {
                return Err(Error::invalid(
                    "discrete",
                    "value",
                    format!("non-finite atom {v}"),
                ));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::invalid(
                    "discrete",
                    "probability",
                    format!("{p} is not a probability"),
                ));
            }
        }
        atoms.retain(|a| a.1 > 0.0);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "discrete",
                "probability",
                format!("atoms sum to {total}, expected 1"),
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut probs: Vec<f64> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else {
                values.push(v);
                probs.push(p / total);
            }
        }
        let mut prefix = vec![0.0; probs.len() + 1];
        for i in 0..probs.len() {
            prefix[i + 1] = prefix[i] + probs[i];
        }
        let mut suffix = vec![0.0; probs.len() + 1];
        for i in (0..probs.len()).rev() {
            suffix[i] = suffix[i + 1] + probs[i];
        }
        Ok(Self {
            values,
            probs,
            prefix,
            suffix,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }
}

impl Distribution for Discrete {
    fn name(&self) -> String {
        format!("discrete[{} atoms]", self.values.len())
    }
    fn support(&self) -> (f64, f64) {
        (self.values[0], *self.values.last().unwrap())
    }
    fn cdf(&self, x: f64) -> f64 {
        self.prefix[self.count_le(x)].min(1.0)
    }
    fn tail(&self, x: f64) -> f64 {
        self.suffix[self.count_le(x)].min(1.0)
    }
    fn pdf(&self, _x: f64) -> Option<f64> {
        None
    }
    fn quantile(&self, p: f64) -> f64 {
        let i = self.prefix[1..].partition_point(|&c| c < p - 1e-15);
        self.values[i.min(self.values.len() - 1)]
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        let i = self.suffix[1..].partition_point(|&s| s.ln() > log_p);
        self.values[i.min(self.values.len() - 1)]
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }
    fn mean(&self) -> Option<f64> {
        Some(
            self.values
                .iter()
                .zip(&self.probs)
                .map(|(v, p)| v * p)
                .sum(),
        )
    }
    fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        Some(
            self.values
                .iter()
                .zip(&self.probs)
                .map(|(v, p)| p * (v - m).powi(2))
                .sum(),
        )
    }
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        Some(
            self.values
                .iter()
                .copied()
                .zip(self.probs.iter().copied())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub x: f64,
}

impl PointMass {
    pub fn new(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::invalid("point_mass", "x", "must be finite"));
        }
        Ok(Self { x })
    }
}

impl Distribution for PointMass {
    fn name(&self) -> String {
        format!("point_mass:{}", self.x)
    }
    fn support(&self) -> (f64, f64) {
        (self.x, self.x)
    }
    fn cdf(&self, x: f64) -> f64 {
        if x >= self.x {
            1.0
        } else {
            0.0
        }
    }
    fn tail(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
    fn pdf(&self, _x: f64) -> Option<f64> {
        None
    }
    fn quantile(&self, _p: f64) -> f64 {
        self.x
    }
    fn inverse_log_tail(&self, _log_p: f64) -> f64 {
        self.x
    }
    fn sample(&self, _rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        vec![self.x; n]
    }
    fn mean(&self) -> Option<f64> {
        Some(self.x)
    }
    fn variance(&self) -> Option<f64> {
        Some(0.0)
    }
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![(self.x, 1.0)])
    }
    fn median(&self) -> f64 {
        self.x
    }
}

/// Finite mixture `Σ w_i P_i`.
#[derive(Debug, Clone)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Dist>,
}

impl Mixture {
    pub fn new(parts: Vec<(f64, Dist)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid(
                "mixture",
                "components",
                "need at least one component",
            ));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| !(p.0.is_finite() && p.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "mixture",
                "weights",
                format!("weights must be nonnegative and sum to 1 (got {total})"),
            ));
        }
        let (weights, components) = parts.into_iter().map(|(w, d)| (w / total, d)).unzip();
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &Dist)> {
        self.weights.iter().copied().zip(self.components.iter())
    }
}

impl Distribution for Mixture {
    fn name(&self) -> String {
        let parts: Vec<String> = self
            .components()
            .map(|(w, d)| format!("{w}*{}", d.name()))
            .collect();
        format!("mixture[{}]", parts.join(" + "))
    }
    fn support(&self) -> (f64, f64) {
        self.components
            .iter()
            .map(|d| d.support())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
                (acc.0.min(s.0), acc.1.max(s.1))
            })
    }
    fn cdf(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, d)| w * d.cdf(x))
            .sum::<f64>()
            .min(1.0)
    }
    fn tail(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, d)| w * d.tail(x))
            .sum::<f64>()
            .min(1.0)
    }
    fn log_tail(&self, x: f64) -> f64 {
        log_sum_exp(self.components().map(|(w, d)| w.ln() + d.log_tail(x))).min(0.0)
    }
    fn log_cdf(&self, x: f64) -> f64 {
        log_sum_exp(self.components().map(|(w, d)| w.ln() + d.log_cdf(x))).min(0.0)
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        let mut s = 0.0;
        for (w, d) in self.components() {
            s += w * d.pdf(x)?;
        }
        Some(s)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        let mut terms = Vec::with_capacity(self.weights.len());
        for (w, d) in self.components() {
            terms.push(w.ln() + d.log_pdf(x)?);
        }
        Some(log_sum_exp(terms))
    }
    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.support().0;
        }
        if p >= 1.0 {
            return self.support().1;
        }
        let (lo, hi) = self.support();
        let guess = self
            .components()
            .map(|(w, d)| w * d.quantile(p))
            .sum::<f64>();
        solve_increasing(|x| self.cdf(x), p, lo, hi, guess)
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        let (lo, hi) = self.support();
        let guess = self
            .components
            .iter()
            .map(|d| d.inverse_log_tail(log_p))
            .fold(f64::NEG_INFINITY, f64::max);
        solve_increasing(|x| -self.log_tail(x), -log_p, lo, hi, guess)
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let mut u: f64 = rng.random();
                let mut pick = self.components.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                self.components[pick].sample(rng, 1)[0]
            })
            .collect()
    }
    fn mean(&self) -> Option<f64> {
        let mut s = 0.0;
        for (w, d) in self.components() {
            s += w * d.mean()?;
        }
        Some(s)
    }
    fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        let mut s = 0.0;
        for (w, d) in self.components() {
            let mi = d.mean()?;
            s += w * (d.variance()? + (mi - m).powi(2));
        }
        Some(s)
    }
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        let mut all = Vec::new();
        for (w, d) in self.components() {
            all.extend(d.atoms()?.into_iter().map(|(v, p)| (v, w * p)));
        }
        Some(all)
    }
}
