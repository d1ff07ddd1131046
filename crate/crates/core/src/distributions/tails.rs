//! Numerical tail-class predicates.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Distribution;
use crate::error::{Error, Result};
use crate::quad::{log_add_exp, log_integrate, QuadConfig};
use crate::rng::{par_chunks, CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailClass {
    Heavy,
    Light,
    Inconclusive,
}

/// Rates and abscissae at which `r·x + ln F̄(x)` is probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub rates: Vec<f64>,
    pub xs: Vec<f64>,
}

impl ProbeGrid {
    /// Rates {0.01, 0.1, 1}; 33 geometric points from `max(|q(0.99)|, 1)` over eight decades.
    pub fn default_for(d: &dyn Distribution) -> Self {
        let q = d.quantile(0.99).abs();
        let x0 = if q.is_finite() { q.max(1.0) } else { 1.0 };
        let xs = (0..=32)
            .map(|i| x0 * 10f64.powf(8.0 * i as f64 / 32.0))
            .collect();
        Self {
            rates: vec![0.01, 0.1, 1.0],
            xs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub rate: f64,
    pub x: f64,
    /// `rate·x + ln F̄(x)`
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailEvidence {
    pub class: TailClass,
    pub rows: Vec<EvidenceRow>,
}

const HEAVY_LEVEL: f64 = 10.0;
const LIGHT_LEVEL: f64 = -50.0;

/// Decide heavy, light or inconclusive from the growth of `e^{r x} F̄(x)` on a finite grid.
///
/// Heavy: for every rate, the last three probes strictly increase and end above 10.
/// Light: for some rate, the last probe is `-∞`, or the last three strictly decrease and end below −50.
pub fn is_heavy_tailed(d: &dyn Distribution, grid: &ProbeGrid) -> Result<HeavyTailEvidence> {
    if grid.rates.is_empty() || grid.xs.len() < 3 {
        return Err(Error::invalid(
            "is_heavy_tailed",
            "probe_grid",
            "need at least one rate and three x values",
        ));
    }
    let mut rows = Vec::with_capacity(grid.rates.len() * grid.xs.len());
    let mut all_heavy = true;
    let mut any_light = false;
    for &r in &grid.rates {
        let vals: Vec<f64> = grid.xs.iter().map(|&x| r * x + d.log_tail(x)).collect();
        if vals.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid(
                "is_heavy_tailed",
                "probe_grid",
                "log tail is NaN on the grid",
            ));
        }
        rows.extend(grid.xs.iter().zip(&vals).map(|(&x, &value)| EvidenceRow {
            rate: r,
            x,
            value,
        }));
        let n = vals.len();
        let (a, b, c) = (vals[n - 3], vals[n - 2], vals[n - 1]);
        let rising = a < b && b < c && c > HEAVY_LEVEL;
        let falling = c == f64::NEG_INFINITY || (a > b && b > c && c < LIGHT_LEVEL);
        all_heavy &= rising;
        any_light |= falling;
    }
    let class = if any_light {
        TailClass::Light
    } else if all_heavy {
        TailClass::Heavy
    } else {
        TailClass::Inconclusive
    };
    Ok(HeavyTailEvidence { class, rows })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SubexpMethod {
    /// Convolution quadrature with at most `max_intervals` subintervals.
    Quadrature { max_intervals: usize },
    /// `samples` pairs drawn from seeded streams.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `P(X₁ + X₂ > x) / P(X > x)` for independent copies.
///
/// Quadrature uses `P(S > x) = 2∫_{y ≤ x/2} f(y) F̄(x − y) dy + F̄(x/2)²`.
/// `cap` bounds the acceptable error estimate.
pub fn subexponential_ratio(
    d: &dyn Distribution,
    x: f64,
    method: SubexpMethod,
    cap: Option<f64>,
) -> Result<Estimate> {
    let log_tail_x = d.log_tail(x);
    if log_tail_x == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "subexponential_ratio",
            "x",
            format!("P(X > {x}) is zero"),
        ));
    }
    let est = match method {
        SubexpMethod::Quadrature { max_intervals } => {
            if d.pdf(x).is_none() {
                return Err(Error::invalid(
                    "subexponential_ratio",
                    "method",
                    "quadrature needs a density",
                ));
            }
            let (lo, _) = d.support();
            let half = 0.5 * x;
            let cfg = QuadConfig {
                max_intervals,
                ..QuadConfig::default()
            };
            let hints = [d.median(), x - lo, lo];
            let conv = log_integrate(
                |y| d.log_pdf(y).unwrap() + d.log_tail(x - y),
                lo,
                half,
                &hints,
                cfg,
            )?;
            let both = 2.0 * d.log_tail(half);
            let log_p = log_add_exp(std::f64::consts::LN_2 + conv.log_value, both);
            let value = (log_p - log_tail_x).exp();
            let conv_share = (std::f64::consts::LN_2 + conv.log_value - log_p).exp();
            Estimate {
                value,
                error: value * conv_share * conv.rel_error.max(cfg.rel_tol),
            }
        }
        SubexpMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid(
                    "subexponential_ratio",
                    "budget",
                    "need at least one sample",
                ));
            }
            let hits: u64 = par_chunks(seed, samples, CHUNK, |rng, len| {
                let r: &mut dyn RngCore = rng;
                let a = d.sample(r, len);
                let b = d.sample(r, len);
                a.iter().zip(&b).filter(|(u, v)| *u + *v > x).count() as u64
            })
            .iter()
            .sum();
            let n = samples as f64;
            let p = hits as f64 / n;
            let tail = log_tail_x.exp();
            Estimate {
                value: p / tail,
                error: (p * (1.0 - p) / n).sqrt().max(1.0 / n) / tail,
            }
        }
    };
    if let Some(cap) = cap {
        if est.error > cap {
            return Err(Error::BudgetExhausted {
                estimate: est.value,
                error: est.error,
                cap,
            });
        }
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    DecreasingToZero,
    NotDecreasing,
}

impl Trend {
    /// Strictly decreasing (a run of exact zeros counts) with the last value below 1e-2.
    pub fn of(values: &[f64]) -> Trend {
        let decreasing = values
            .windows(2)
            .all(|w| w[1] < w[0] || (w[1] == 0.0 && w[0] == 0.0));
        if !values.is_empty() && decreasing && *values.last().unwrap() < 1e-2 {
            Trend::DecreasingToZero
        } else {
            Trend::NotDecreasing
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub t: f64,
    pub log_ratio: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceTable {
    pub rows: Vec<DominanceRow>,
    pub trend: Trend,
}

pub(crate) fn check_grid(context: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(context, "t_grid", "grid is empty"));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            context,
            "t_grid",
            "grid must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// `t^p · F̄_V(t) / F̄_X(t)` over a grid, evaluated in log space.
pub fn tail_dominance_exponent(
    dv: &dyn Distribution,
    dx: &dyn Distribution,
    p: f64,
    t_grid: &[f64],
) -> Result<DominanceTable> {
    if !(p > 1.0) {
        return Err(Error::invalid(
            "tail_dominance_exponent",
            "p",
            "must exceed 1",
        ));
    }
    check_grid("tail_dominance_exponent", t_grid)?;
    let rows: Vec<DominanceRow> = t_grid
        .iter()
        .map(|&t| {
            let lv = dv.log_tail(t);
            let log_ratio = if lv == f64::NEG_INFINITY {
                lv
            } else {
                p * t.ln() + lv - dx.log_tail(t)
            };
            DominanceRow {
                t,
                log_ratio,
                ratio: log_ratio.exp(),
            }
        })
        .collect();
    let logs: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let trend = if rows
        .windows(2)
        .all(|w| w[1].log_ratio < w[0].log_ratio || w[1].log_ratio == f64::NEG_INFINITY)
        && rows.last().unwrap().log_ratio < (1e-2f64).ln()
    {
        Trend::DecreasingToZero
    } else {
        Trend::of(&logs)
    };
    Ok(DominanceTable { rows, trend })
}

/// Kolmogorov–Smirnov statistic `sup |F_n − F|` of samples against a continuous cdf.
pub fn ks_statistic(d: &dyn Distribution, samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = d.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::*;
    use crate::rng::stream_rng;

    fn classify(d: &dyn Distribution) -> TailClass {
        is_heavy_tailed(d, &ProbeGrid::default_for(d))
            .unwrap()
            .class
    }

    #[test]
    fn heavy_and_light_families() {
        assert_eq!(classify(&Pareto::new(2.0, 1.0).unwrap()), TailClass::Heavy);
        assert_eq!(
            classify(&StudentT::new(3.0, 0.0, 1.0).unwrap()),
            TailClass::Heavy
        );
        assert_eq!(
            classify(&LogNormal::new(0.0, 1.0).unwrap()),
            TailClass::Heavy
        );
        assert_eq!(
            classify(&WeibullStretched::new(0.5, 1.0).unwrap()),
            TailClass::Heavy
        );
        assert_eq!(classify(&Normal::standard()), TailClass::Light);
        assert_eq!(classify(&Exponential::new(1.0).unwrap()), TailClass::Light);
        assert_eq!(classify(&Uniform::new(0.0, 1.0).unwrap()), TailClass::Light);
    }

    #[test]
    fn short_grid_is_inconclusive() {
        // e^{x} F̄(x) for Exp(1) is constant at rate 1 and the grid has no other rate
        let d = Exponential::new(1.0).unwrap();
        let grid = ProbeGrid {
            rates: vec![1.0],
            xs: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(
            is_heavy_tailed(&d, &grid).unwrap().class,
            TailClass::Inconclusive
        );
    }

    #[test]
    fn pareto_subexponential_ratio_near_two() {
        let d = Pareto::new(2.0, 1.0).unwrap();
        let e = subexponential_ratio(
            &d,
            1e3,
            SubexpMethod::Quadrature {
                max_intervals: 4000,
            },
            None,
        )
        .unwrap();
        // high-precision convolution oracle: 2.008_078_877_053_34
        assert!((e.value - 2.008_078_877_053_34).abs() < 1e-7, "{}", e.value);
        assert!(e.value >= 1.0);
    }

    #[test]
    fn exponential_ratio_is_one_plus_x() {
        let d = Exponential::new(1.0).unwrap();
        let e = subexponential_ratio(
            &d,
            30.0,
            SubexpMethod::Quadrature {
                max_intervals: 4000,
            },
            None,
        )
        .unwrap();
        assert!((e.value - 31.0).abs() < 1e-6, "{}", e.value);
    }

    #[test]
    fn monte_carlo_ratio_and_budget() {
        let d = Exponential::new(1.0).unwrap();
        let e = subexponential_ratio(
            &d,
            3.0,
            SubexpMethod::MonteCarlo {
                samples: 400_000,
                seed: 5,
            },
            None,
        )
        .unwrap();
        assert!((e.value - 4.0).abs() < 4.0 * e.error, "{e:?}");
        let r = subexponential_ratio(
            &d,
            3.0,
            SubexpMethod::MonteCarlo {
                samples: 100,
                seed: 5,
            },
            Some(1e-3),
        );
        assert!(matches!(r, Err(Error::BudgetExhausted { .. })));
    }

    #[test]
    fn dominance_trends() {
        let n = Normal::standard();
        let p15 = Pareto::new(1.5, 1.0).unwrap();
        let t = tail_dominance_exponent(&n, &p15, 1.5, &[10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(t.trend, Trend::DecreasingToZero);
        let p2 = Pareto::new(2.0, 1.0).unwrap();
        let t = tail_dominance_exponent(&p2, &p2, 2.0, &[10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(t.trend, Trend::NotDecreasing);
        assert!((t.rows[1].ratio - 1e4).abs() < 1e-6);
        let e = Exponential::new(1.0).unwrap();
        let w = WeibullStretched::new(0.5, 1.0).unwrap();
        let t = tail_dominance_exponent(&e, &w, 2.0, &[10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(t.trend, Trend::DecreasingToZero);
        assert!(tail_dominance_exponent(&e, &w, 1.0, &[10.0]).is_err());
        assert!(tail_dominance_exponent(&e, &w, 2.0, &[10.0, 5.0]).is_err());
    }

    #[test]
    fn ks_accepts_own_samples() {
        let d = StudentT::new(3.0, 0.0, 1.0).unwrap();
        let xs = d.sample(&mut stream_rng(1, 0), 100_000);
        assert!(ks_statistic(&d, &xs) < ks_critical(xs.len(), 0.001));
        let wrong = Normal::standard();
        assert!(ks_statistic(&wrong, &xs) > ks_critical(xs.len(), 0.001));
    }
}
