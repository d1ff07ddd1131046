//! `E[V | X + V ≥ t]` for independent `X`, `V` and one dependent joint law.
//!
//! Everything is computed against the reweighting `Q_t(v) = F̄_X(t − v) / F̄_X(t)`,
//! which stays O(1) where the density of `V` matters even when `F̄_X(t)` underflows.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    is_heavy_tailed, Dist, Distribution, Normal, ProbeGrid, TailClass, Trend,
};
use crate::error::{Error, Result};
use crate::quad::{
    log_abs_expm1, log_add_exp, log_first_moment, log_integrate, LogIntegral, QuadConfig,
    SignedLogIntegral,
};
use crate::rng::{par_chunks, CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    /// `V ~ N(0,1)`; `X | V ~ N(0, 4)` when `|V| ≤ 1`, else `X = 0`.
    VshapedCounterexample,
}

#[derive(Debug, Clone)]
pub struct ConditioningProblem {
    pub v: Dist,
    pub x: Dist,
    pub t: f64,
    pub dependence: Dependence,
}

impl ConditioningProblem {
    pub fn independent(v: Dist, x: Dist, t: f64) -> Result<Self> {
        let ctx = "conditioning problem";
        if t.is_nan() {
            return Err(Error::invalid(ctx, "t", "is NaN"));
        }
        if v.mean().is_none() {
            return Err(Error::invalid(
                ctx,
                "v_dist",
                format!("{} has no finite mean", v.name()),
            ));
        }
        if v.pdf(v.median()).is_none() {
            return Err(Error::invalid(
                ctx,
                "v_dist",
                format!("{} has no density", v.name()),
            ));
        }
        Ok(Self {
            v,
            x,
            t,
            dependence: Dependence::Independent,
        })
    }

    /// The dependent law; `x` holds the conditional law of `X` on `|V| ≤ 1`.
    pub fn vshaped_counterexample(t: f64) -> Self {
        Self {
            v: Arc::new(Normal::standard()),
            x: Arc::new(Normal::new(0.0, 2.0).expect("valid")),
            t,
            dependence: Dependence::VshapedCounterexample,
        }
    }

    /// `ln F̄_X(t)`, or 0 when the tail is empty and no rescaling helps.
    fn log_norm(&self) -> f64 {
        let l = self.x.log_tail(self.t);
        if l.is_finite() {
            l
        } else {
            0.0
        }
    }

    /// `ln Q_t(v)`.
    fn log_q(&self, v: f64) -> f64 {
        self.x.log_tail(self.t - v) - self.log_norm()
    }

    fn log_fv(&self, v: f64) -> f64 {
        self.v.log_pdf(v).unwrap_or(f64::NEG_INFINITY)
    }

    /// `V` range where `F̄_X(t − v) > 0` can hold.
    fn v_range(&self) -> (f64, f64) {
        let (vl, vh) = self.v.support();
        let (_, xh) = self.x.support();
        (vl.max(self.t - xh), vh)
    }

    fn hints(&self) -> Vec<f64> {
        let (xl, _) = self.x.support();
        let mut h = vec![self.v.median(), self.t - self.x.median(), 0.5 * self.t];
        if xl.is_finite() {
            h.push(self.t - xl);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMean {
    pub value: f64,
    /// `∫ f_V Q_t`, which tends to 1 for heavy-tailed `X`.
    pub denominator: f64,
    /// `ln ∫ f_V(v) F̄_X(t − v) dv = ln P(X + V > t)`.
    pub log_event_probability: f64,
    pub abs_error: f64,
}

fn q_cfg() -> QuadConfig {
    QuadConfig::default().with_rel_tol(1e-10)
}

fn from_pieces(
    t: f64,
    num: SignedLogIntegral,
    den: LogIntegral,
    log_norm: f64,
) -> Result<ConditionalMean> {
    if den.log_value == f64::NEG_INFINITY {
        return Err(Error::DenominatorUnderflow { t });
    }
    let value = num.scaled(den.log_value);
    Ok(ConditionalMean {
        value,
        denominator: den.value(),
        log_event_probability: den.log_value + log_norm,
        abs_error: num.abs_error() / den.value() + value.abs() * den.rel_error,
    })
}

pub fn conditional_mean(problem: &ConditioningProblem) -> Result<ConditionalMean> {
    match problem.dependence {
        Dependence::VshapedCounterexample => conditional_mean_dependent_counterexample(problem.t),
        Dependence::Independent => {
            let (lo, hi) = problem.v_range();
            let hints = problem.hints();
            let logf = |v: f64| problem.log_fv(v) + problem.log_q(v);
            let num = log_first_moment(logf, lo, hi, &hints, q_cfg())?;
            let den = log_integrate(logf, lo, hi, &hints, q_cfg())?;
            from_pieces(problem.t, num, den, problem.log_norm())
        }
    }
}

/// Truncation of `V` for the dependent law, in standard deviations.
const VSHAPED_BOUND: f64 = 8.0;

/// The dependent law, integrated over `v ∈ [−8, 8]`.
///
/// On `|v| ≤ 1` the event has probability `Φ̄((t − v)/2)`; elsewhere it is `1{v ≥ t}`.
pub fn conditional_mean_dependent_counterexample(t: f64) -> Result<ConditionalMean> {
    if t.is_nan() {
        return Err(Error::invalid("dependent counterexample", "t", "is NaN"));
    }
    let std = Normal::standard();
    let xv = Normal::new(0.0, 2.0)?;
    let inner_norm = {
        let l = xv.log_tail(t - 1.0);
        if l.is_finite() {
            l
        } else {
            0.0
        }
    };
    let cfg = q_cfg();
    let inner = |v: f64| std.log_pdf(v).unwrap() + xv.log_tail(t - v) - inner_norm;
    let outer = |v: f64| std.log_pdf(v).unwrap() - inner_norm;
    let mut num = log_first_moment(inner, -1.0, 1.0, &[0.0], cfg)?;
    let mut den = log_integrate(inner, -1.0, 1.0, &[0.0], cfg)?;
    for (a, b) in [(-VSHAPED_BOUND, -1.0), (1.0, VSHAPED_BOUND)] {
        let a = a.max(t);
        if a >= b {
            continue;
        }
        let m = log_first_moment(outer, a, b, &[], cfg)?;
        let d = log_integrate(outer, a, b, &[], cfg)?;
        num.pos = merge(num.pos, m.pos);
        num.neg = merge(num.neg, m.neg);
        den = merge(den, d);
    }
    from_pieces(t, num, den, inner_norm)
}

fn merge(a: LogIntegral, b: LogIntegral) -> LogIntegral {
    let log_value = log_add_exp(a.log_value, b.log_value);
    if log_value == f64::NEG_INFINITY {
        return LogIntegral::ZERO;
    }
    let err = a.rel_error * (a.log_value - log_value).exp()
        + b.rel_error * (b.log_value - log_value).exp();
    LogIntegral {
        log_value,
        rel_error: err,
    }
}

#[derive(Clone)]
pub enum HScheme {
    /// `h(t) = √t`, for power-law tails.
    Sqrt,
    /// `h(t) = (ln t)²`, for tails close to exponential.
    LogPower,
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for HScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for HScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HScheme::Sqrt => f.write_str("sqrt"),
            HScheme::LogPower => f.write_str("log_power"),
            HScheme::Constant(c) => write!(f, "constant:{c}"),
            HScheme::Custom(_) => f.write_str("custom"),
        }
    }
}

impl FromStr for HScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sqrt" => Ok(HScheme::Sqrt),
            "log_power" => Ok(HScheme::LogPower),
            other => match other
                .strip_prefix("constant:")
                .map(|c| c.trim().parse::<f64>())
            {
                Some(Ok(c)) if c >= 0.0 && c.is_finite() => Ok(HScheme::Constant(c)),
                _ => Err(Error::invalid(
                    "h scheme",
                    "h",
                    format!("unknown scheme `{other}` (sqrt, log_power, constant:C)"),
                )),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegionScheme {
    pub h: HScheme,
    /// Tail-dominance exponent, > 1.
    pub p: f64,
}

impl RegionScheme {
    pub fn new(h: HScheme) -> Self {
        Self { h, p: 1.5 }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn h_at(&self, t: f64) -> f64 {
        match &self.h {
            HScheme::Sqrt => t.max(0.0).sqrt(),
            HScheme::LogPower => t.max(1.0).ln().powi(2),
            HScheme::Constant(c) => *c,
            HScheme::Custom(f) => f(t),
        }
    }

    /// `h(t)`, checked against `0 ≤ h(t) < t/2`.
    pub fn checked_h(&self, t: f64) -> Result<f64> {
        let h = self.h_at(t);
        if !(h >= 0.0 && h < 0.5 * t) {
            return Err(Error::invalid(
                "region scheme",
                "h",
                format!("h({t}) = {h} violates 0 <= h(t) < t/2 ({})", self.h),
            ));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityRow {
    pub t: f64,
    pub h: f64,
    /// `sup_{|v| ≤ h(t)} |Q_t(v) − 1|`
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityReport {
    pub rows: Vec<InsensitivityRow>,
    pub decreasing: bool,
    pub warning: Option<String>,
}

/// Since `Q_t` is nondecreasing in `v`, the supremum over `[−h, h]` sits at an endpoint.
pub fn insensitivity_check(
    x: &dyn Distribution,
    scheme: &RegionScheme,
    t_grid: &[f64],
) -> Result<InsensitivityReport> {
    crate::distributions::check_grid("insensitivity_check", t_grid)?;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let h = scheme.checked_h(t)?;
            let lt = x.log_tail(t);
            let dev = |v: f64| (x.log_tail(t - v) - lt).exp_m1().abs();
            Ok(InsensitivityRow {
                t,
                h,
                sup_deviation: dev(h).max(dev(-h)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // strict decrease alone admits a plateau, so the last value must also be at most half the first
    let devs: Vec<f64> = rows.iter().map(|r| r.sup_deviation).collect();
    let all_zero = devs.iter().all(|&d| d == 0.0);
    let decreasing = all_zero
        || (devs.windows(2).all(|w| w[1] < w[0]) && devs.last().unwrap() <= &(0.5 * devs[0]));
    let warning = (!decreasing).then(|| {
        format!(
            "sup |Q_t(v) - 1| over |v| <= h(t) does not decrease on the grid; h = {} looks unsuitable for {}",
            scheme.h,
            x.name()
        )
    });
    Ok(InsensitivityReport {
        rows,
        decreasing,
        warning,
    })
}

/// Pick `h` for a long-tailed `X` and verify insensitivity on `t_grid`.
pub fn choose_h(
    x: &dyn Distribution,
    h: HScheme,
    t_grid: &[f64],
) -> Result<(RegionScheme, InsensitivityReport)> {
    let ev = is_heavy_tailed(x, &ProbeGrid::default_for(x))?;
    if ev.class == TailClass::Light {
        return Err(Error::invalid(
            "choose_h",
            "x_dist",
            format!("{} is light-tailed", x.name()),
        ));
    }
    let scheme = RegionScheme::new(h);
    let report = insensitivity_check(x, &scheme, t_grid)?;
    Ok((scheme, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    /// `ln ∫_r |v| f_V(v) |Q_t(v) − 1| dv`
    pub log_numerator: f64,
    pub numerator: f64,
    /// `P(V ∈ r | X + V > t)`
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTable {
    pub t: f64,
    pub h: f64,
    /// r1 = (−∞, −h], r2 = (−h, h), r3 = [h, t − h], r4 = (t − h, ∞)
    pub regions: [RegionRow; 4],
    /// `∫ f_V (Q_t − 1)` over (−∞, −h), [−h, h] and (h, ∞).
    pub denominator_pieces: [f64; 3],
    /// `t · P(X + V > t, h < V < t − h) / F̄_X(t)`
    pub middle_region_ratio: f64,
    pub log_middle_region_ratio: f64,
}

pub fn region_decomposition(
    problem: &ConditioningProblem,
    scheme: &RegionScheme,
) -> Result<RegionTable> {
    if problem.dependence != Dependence::Independent {
        return Err(Error::invalid(
            "region_decomposition",
            "dependence",
            "independent problems only",
        ));
    }
    let t = problem.t;
    let h = scheme.checked_h(t)?;
    let (lo, hi) = problem.v_range();
    let mut hints = problem.hints();
    hints.push(0.0);
    // |Q − 1| inherits cancellation noise from ln F̄_X, so the region integrals use a looser target
    let cfg = QuadConfig::default().with_rel_tol(1e-7);
    let mut bounds = [f64::NEG_INFINITY, -h, h, t - h, f64::INFINITY];
    for b in bounds.iter_mut() {
        *b = b.clamp(lo, hi);
    }

    let log_q_dev = |v: f64| problem.log_fv(v) + log_abs_expm1(problem.log_q(v));
    let log_weight = |v: f64| problem.log_fv(v) + problem.log_q(v);

    let total = log_integrate(log_weight, lo, hi, &hints, cfg)?;
    if total.log_value == f64::NEG_INFINITY {
        return Err(Error::DenominatorUnderflow { t });
    }
    let mut regions = [RegionRow {
        log_numerator: f64::NEG_INFINITY,
        numerator: 0.0,
        mass: 0.0,
    }; 4];
    for (i, row) in regions.iter_mut().enumerate() {
        let (a, b) = (bounds[i], bounds[i + 1]);
        let m = log_first_moment(log_q_dev, a, b, &hints, cfg)?;
        let log_num = log_add_exp(m.pos.log_value, m.neg.log_value);
        let mass = log_integrate(log_weight, a, b, &hints, cfg)?;
        *row = RegionRow {
            log_numerator: log_num,
            numerator: log_num.exp(),
            mass: (mass.log_value - total.log_value).exp(),
        };
    }

    let signed_dev = |a: f64, b: f64| -> Result<f64> {
        let (a, b) = (a.clamp(lo, hi), b.clamp(lo, hi));
        let pos = log_integrate(log_q_dev, a.max(0.0), b, &hints, cfg)?;
        let neg = log_integrate(log_q_dev, a, b.min(0.0), &hints, cfg)?;
        Ok(pos.value() - neg.value())
    };
    let denominator_pieces = [
        signed_dev(f64::NEG_INFINITY, -h)?,
        signed_dev(-h, h)?,
        signed_dev(h, f64::INFINITY)?,
    ];

    let r3 = log_integrate(log_weight, bounds[2], bounds[3], &hints, cfg)?;
    let log_middle_region_ratio = t.ln() + r3.log_value;
    Ok(RegionTable {
        t,
        h,
        regions,
        denominator_pieces,
        middle_region_ratio: log_middle_region_ratio.exp(),
        log_middle_region_ratio,
    })
}

/// Strictly decreasing logs (runs of `−∞` allowed) ending below `ln 0.01`.
fn log_trend(logs: &[f64]) -> Trend {
    let dec = logs
        .windows(2)
        .all(|w| w[1] < w[0] || (w[0] == f64::NEG_INFINITY && w[1] == f64::NEG_INFINITY));
    match logs.last() {
        Some(&l) if dec && l < 0.01f64.ln() => Trend::DecreasingToZero,
        _ => Trend::NotDecreasing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region4Row {
    pub t: f64,
    /// `ln(t F̄_V(t) / F̄_X(t))`
    pub log_boundary_ratio: f64,
    pub boundary_ratio: f64,
    /// `ln(∫_t^∞ F̄_V / F̄_X(t))`
    pub log_integral_ratio: f64,
    pub integral_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region4Table {
    pub rows: Vec<Region4Row>,
    pub boundary_trend: Trend,
    pub integral_trend: Trend,
    /// Trend of `t^p F̄_V(t) / F̄_X(t)`; the bound is only meaningful when this vanishes.
    pub hypothesis: Trend,
}

pub fn region4_tail_bound(
    v: &dyn Distribution,
    x: &dyn Distribution,
    p: f64,
    t_grid: &[f64],
) -> Result<Region4Table> {
    let hypothesis = crate::distributions::tail_dominance_exponent(v, x, p, t_grid)?.trend;
    let (_, vh) = v.support();
    let rows = t_grid
        .iter()
        .map(|&t| {
            let lx = x.log_tail(t);
            let lv = v.log_tail(t);
            let log_boundary_ratio = if lv == f64::NEG_INFINITY {
                lv
            } else {
                t.ln() + lv - lx
            };
            let integral = if vh <= t {
                LogIntegral::ZERO
            } else {
                log_integrate(|u| v.log_tail(u), t, vh, &[], q_cfg())?
            };
            let log_integral_ratio = if integral.log_value == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                integral.log_value - lx
            };
            Ok(Region4Row {
                t,
                log_boundary_ratio,
                boundary_ratio: log_boundary_ratio.exp(),
                log_integral_ratio,
                integral_ratio: log_integral_ratio.exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let b: Vec<f64> = rows.iter().map(|r| r.log_boundary_ratio).collect();
    let i: Vec<f64> = rows.iter().map(|r| r.log_integral_ratio).collect();
    Ok(Region4Table {
        boundary_trend: log_trend(&b),
        integral_trend: log_trend(&i),
        hypothesis,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightTailRatioRow {
    pub t: f64,
    /// `ln[P(V < c | X+V ≥ t) / P(V > c+1 | X+V ≥ t)]`
    pub log_ratio: f64,
    pub ratio: f64,
    /// `ln[(F̄_X(t−c)/F̄_X(t−c−1)) · P(V < c)/P(V > c+1)]`
    pub log_bound: f64,
    pub bound: f64,
    pub within_bound: bool,
    /// `ln(F̄_X(t+1)/F̄_X(t))`, which must tend to `−∞`.
    pub log_step_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightTailRatioTable {
    pub c: f64,
    pub rows: Vec<LightTailRatioRow>,
    pub ratio_trend: Trend,
    pub bound_vanishing: bool,
}

pub fn light_tail_ratio_diagnostic(
    v: &dyn Distribution,
    x: &dyn Distribution,
    c: f64,
    t_grid: &[f64],
) -> Result<LightTailRatioTable> {
    crate::distributions::check_grid("light_tail_ratio_diagnostic", t_grid)?;
    if !c.is_finite() {
        return Err(Error::invalid(
            "light_tail_ratio_diagnostic",
            "c",
            "must be finite",
        ));
    }
    let log_upper_v = v.log_tail(c + 1.0);
    if log_upper_v == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "light_tail_ratio_diagnostic",
            "c",
            "P(V > c + 1) is zero",
        ));
    }
    let log_lower_v = v.log_cdf(c);
    let (vl, vh) = v.support();
    let rows = t_grid
        .iter()
        .map(|&t| {
            let norm = {
                let l = x.log_tail(t);
                if l.is_finite() {
                    l
                } else {
                    0.0
                }
            };
            let logf =
                |u: f64| v.log_pdf(u).unwrap_or(f64::NEG_INFINITY) + x.log_tail(t - u) - norm;
            let hints = [v.median(), t - x.median(), t, c, c + 1.0];
            let num = if c > vl {
                log_integrate(logf, vl, c, &hints, q_cfg())?
            } else {
                LogIntegral::ZERO
            };
            let den = log_integrate(logf, c + 1.0, vh, &hints, q_cfg())?;
            if den.log_value == f64::NEG_INFINITY {
                return Err(Error::DenominatorUnderflow { t });
            }
            let log_ratio = num.log_value - den.log_value;
            let log_bound = if log_lower_v == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                x.log_tail(t - c) - x.log_tail(t - c - 1.0) + log_lower_v - log_upper_v
            };
            Ok(LightTailRatioRow {
                t,
                log_ratio,
                ratio: log_ratio.exp(),
                log_bound,
                bound: log_bound.exp(),
                within_bound: log_ratio <= log_bound + 1e-9 * log_bound.abs().max(1.0),
                log_step_ratio: x.log_tail(t + 1.0) - x.log_tail(t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r: Vec<f64> = rows.iter().map(|r| r.log_ratio).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.log_bound).collect();
    Ok(LightTailRatioTable {
        c,
        ratio_trend: log_trend(&r),
        bound_vanishing: log_trend(&b) == Trend::DecreasingToZero,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub t: f64,
    pub mean: ConditionalMean,
    pub regions: RegionTable,
}

/// Conditional mean and region table per threshold, in parallel.
pub fn condition_sweep(
    v: &Dist,
    x: &Dist,
    scheme: &RegionScheme,
    t_grid: &[f64],
) -> Result<Vec<ConditionRow>> {
    crate::distributions::check_grid("condition_sweep", t_grid)?;
    t_grid
        .par_iter()
        .map(|&t| {
            let problem = ConditioningProblem::independent(v.clone(), x.clone(), t)?;
            Ok(ConditionRow {
                t,
                mean: conditional_mean(&problem)?,
                regions: region_decomposition(&problem, scheme)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub accepted: u64,
    pub samples: u64,
}

/// Below this acceptance rate the rejection oracle refuses to run.
pub const MIN_ACCEPTANCE: f64 = 1e-5;

fn finish_mc(parts: Vec<(u64, f64, f64)>, n: usize, t: f64) -> Result<McEstimate> {
    let (acc, s, s2) = parts
        .into_iter()
        .fold((0u64, 0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    if (acc as f64) < MIN_ACCEPTANCE * n as f64 || acc < 2 {
        return Err(Error::invalid(
            "rejection oracle",
            "t",
            format!(
                "acceptance {acc}/{n} at t={t} is below {MIN_ACCEPTANCE}; use quadrature alone"
            ),
        ));
    }
    let k = acc as f64;
    let mean = s / k;
    let var = ((s2 - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / k).sqrt(),
        accepted: acc,
        samples: n as u64,
    })
}

/// Rejection estimate of `E[V | X + V ≥ t]` for independent draws.
pub fn rejection_conditional_mean(
    v: &dyn Distribution,
    x: &dyn Distribution,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    let parts = par_chunks(seed, n, CHUNK, |rng, len| {
        let vs = v.sample(rng, len);
        let xs = x.sample(rng, len);
        vs.iter()
            .zip(&xs)
            .filter(|(a, b)| *a + *b >= t)
            .fold((0u64, 0.0, 0.0), |acc, (&a, _)| {
                (acc.0 + 1, acc.1 + a, acc.2 + a * a)
            })
    });
    finish_mc(parts, n, t)
}

/// Rejection estimate for the dependent law.
pub fn rejection_dependent_counterexample(t: f64, n: usize, seed: u64) -> Result<McEstimate> {
    let parts = par_chunks(seed, n, CHUNK, |rng, len| {
        let mut acc = (0u64, 0.0, 0.0);
        for _ in 0..len {
            let v: f64 = StandardNormal.sample(rng);
            let z: f64 = StandardNormal.sample(rng);
            let x = if v.abs() <= 1.0 { 2.0 * z } else { 0.0 };
            if x + v >= t {
                acc = (acc.0 + 1, acc.1 + v, acc.2 + v * v);
            }
        }
        acc
    });
    finish_mc(parts, n, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::*;
    use proptest::prelude::*;

    fn normal() -> Dist {
        Arc::new(Normal::standard())
    }
    fn pareto15() -> Dist {
        Arc::new(Pareto::new(1.5, 1.0).unwrap())
    }
    fn exp1() -> Dist {
        Arc::new(Exponential::new(1.0).unwrap())
    }

    fn cm(v: Dist, x: Dist, t: f64) -> ConditionalMean {
        conditional_mean(&ConditioningProblem::independent(v, x, t).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_pair_at_zero() {
        let r = cm(normal(), normal(), 0.0);
        assert!(
            (r.value - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-9,
            "{}",
            r.value
        );
        assert!((r.log_event_probability - 0.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_pair_matches_closed_form() {
        // S = X + V ~ N(0, 2); E[V | S ≥ t] = E[S | S ≥ t] / 2 = φ_S(t)/(2 F̄_S(t))
        let s = Normal::new(0.0, 2f64.sqrt()).unwrap();
        for &t in &[-3.0, 2.0, 10.0, 60.0] {
            let expect = 0.5 * 2.0 * (s.log_pdf(t).unwrap() - s.log_tail(t)).exp();
            let r = cm(normal(), normal(), t);
            assert!(
                (r.value - expect).abs() < 1e-8 * expect.max(1.0),
                "t={t}: {} vs {expect}",
                r.value
            );
        }
    }

    #[test]
    fn far_left_threshold_gives_unconditional_mean() {
        for (v, x) in [(normal(), pareto15()), (exp1(), normal())] {
            let mean = v.mean().unwrap();
            assert!((cm(v, x, -1e6).value - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn heavy_error_limit_is_unconditional_mean() {
        let r = cm(normal(), pareto15(), 1e6);
        assert!(r.value.abs() < 0.01, "{}", r.value);
        assert!((r.denominator - 1.0).abs() < 0.01);
    }

    #[test]
    fn light_error_mean_grows() {
        let expect = [5.000030616196678, 10.0, 15.0, 20.0];
        let mut prev = f64::NEG_INFINITY;
        for (&t, &e) in [5.0, 10.0, 15.0, 20.0].iter().zip(&expect) {
            let r = cm(exp1(), normal(), t);
            assert!((r.value - e).abs() < 1e-7, "t={t}: {}", r.value);
            assert!(r.value > prev);
            prev = r.value;
        }
    }

    #[test]
    fn dependent_values() {
        let a = conditional_mean_dependent_counterexample(2.0).unwrap();
        assert!((a.value - 0.5698127994425364).abs() < 1e-9);
        let b = conditional_mean_dependent_counterexample(30.0).unwrap();
        assert!((b.value - 0.8496326703324628).abs() < 1e-9);
        let c = conditional_mean_dependent_counterexample(-1e6).unwrap();
        assert!(c.value.abs() < 1e-12);
        let p = ConditioningProblem::vshaped_counterexample(2.0);
        assert_eq!(conditional_mean(&p).unwrap(), a);
    }

    #[test]
    fn dependent_mc_agrees() {
        let q = conditional_mean_dependent_counterexample(2.0)
            .unwrap()
            .value;
        let mc = rejection_dependent_counterexample(2.0, 1_000_000, 5).unwrap();
        assert!((mc.mean - q).abs() < 4.0 * mc.std_error, "{mc:?} vs {q}");
        assert!(rejection_dependent_counterexample(30.0, 10_000, 1).is_err());
    }

    #[test]
    fn independent_mc_agrees() {
        let q = cm(normal(), pareto15(), 5.0).value;
        let mc =
            rejection_conditional_mean(normal().as_ref(), pareto15().as_ref(), 5.0, 1_000_000, 9)
                .unwrap();
        assert!((mc.mean - q).abs() < 4.0 * mc.std_error, "{mc:?} vs {q}");
    }

    #[test]
    fn region_table_heavy_sweep() {
        let scheme = RegionScheme::new(HScheme::Sqrt);
        let rows = condition_sweep(&normal(), &pareto15(), &scheme, &[1e2, 1e3, 1e4, 1e5]).unwrap();
        for w in rows.windows(2) {
            for i in 0..4 {
                assert!(
                    w[1].regions.regions[i].log_numerator < w[0].regions.regions[i].log_numerator,
                    "r{} at t={}",
                    i + 1,
                    w[1].t
                );
            }
            assert!(w[1].regions.log_middle_region_ratio < w[0].regions.log_middle_region_ratio);
        }
        for r in &rows {
            let mass: f64 = r.regions.regions.iter().map(|g| g.mass).sum();
            assert!((mass - 1.0).abs() < 1e-9);
            let pieces: f64 = r.regions.denominator_pieces.iter().sum();
            assert!((pieces - (r.mean.denominator - 1.0)).abs() < 1e-9);
            // triangle inequality on the numerator
            let bound: f64 = r.regions.regions.iter().map(|g| g.numerator).sum();
            let delta = (r.mean.value * r.mean.denominator - 0.0).abs();
            assert!(bound >= delta - 1e-12);
        }
    }

    #[test]
    fn point_mass_like_v_has_only_r2() {
        let v: Dist = Arc::new(Normal::new(0.0, 1e-3).unwrap());
        let p = ConditioningProblem::independent(v, pareto15(), 1e4).unwrap();
        let tab = region_decomposition(&p, &RegionScheme::new(HScheme::Sqrt)).unwrap();
        for i in [0, 2, 3] {
            assert_eq!(tab.regions[i].numerator, 0.0);
        }
        assert!(tab.regions[1].mass > 1.0 - 1e-15);
    }

    #[test]
    fn choose_h_pareto_order() {
        let (_, rep) = choose_h(pareto15().as_ref(), HScheme::Sqrt, &[1e2, 1e3, 1e4, 1e5]).unwrap();
        assert!(rep.decreasing && rep.warning.is_none());
        let row = rep.rows[2];
        let direct = (1.0 - 100.0 / 1e4f64).powf(-1.5) - 1.0;
        assert!((row.sup_deviation - direct).abs() < 1e-12);
        assert!((row.sup_deviation / 0.015 - 1.0).abs() < 0.5);
    }

    #[test]
    fn choose_h_edge_cases() {
        let (_, rep) =
            choose_h(pareto15().as_ref(), HScheme::Constant(0.0), &[10.0, 100.0]).unwrap();
        assert!(rep.rows.iter().all(|r| r.sup_deviation == 0.0));
        let w: Dist = Arc::new(WeibullStretched::new(0.5, 1.0).unwrap());
        let (_, rep) = choose_h(w.as_ref(), HScheme::LogPower, &[1e2, 1e3, 1e4, 1e5, 1e6]).unwrap();
        assert!(rep.decreasing);
        assert!(choose_h(normal().as_ref(), HScheme::Sqrt, &[10.0]).is_err());
        // sqrt is too wide for the stretched exponential
        let (_, bad) = choose_h(w.as_ref(), HScheme::Sqrt, &[1e2, 1e3, 1e4]).unwrap();
        assert!(!bad.decreasing && bad.warning.is_some());
        assert!(RegionScheme::new(HScheme::Constant(6.0))
            .checked_h(10.0)
            .is_err());
    }

    #[test]
    fn h_scheme_parsing() {
        assert!(matches!("sqrt".parse::<HScheme>().unwrap(), HScheme::Sqrt));
        assert!(
            matches!("constant:2.5".parse::<HScheme>().unwrap(), HScheme::Constant(c) if c == 2.5)
        );
        assert!("cubic".parse::<HScheme>().is_err());
        assert_eq!(HScheme::LogPower.to_string(), "log_power");
    }

    #[test]
    fn region4_ratios() {
        let tab = region4_tail_bound(
            normal().as_ref(),
            pareto15().as_ref(),
            1.5,
            &[10.0, 20.0, 40.0],
        )
        .unwrap();
        assert_eq!(tab.boundary_trend, Trend::DecreasingToZero);
        assert_eq!(tab.integral_trend, Trend::DecreasingToZero);
        assert_eq!(tab.hypothesis, Trend::DecreasingToZero);
        let n = Normal::standard();
        let r = tab.rows[1];
        assert!(
            (r.log_boundary_ratio - (20f64.ln() + n.log_tail(20.0) + 1.5 * 20f64.ln())).abs()
                < 1e-10
        );

        let u: Dist = Arc::new(Uniform::new(-1.0, 2.0).unwrap());
        let b = region4_tail_bound(u.as_ref(), pareto15().as_ref(), 1.5, &[3.0, 5.0]).unwrap();
        assert!(b
            .rows
            .iter()
            .all(|r| r.boundary_ratio == 0.0 && r.integral_ratio == 0.0));

        let p2: Dist = Arc::new(Pareto::new(2.0, 1.0).unwrap());
        let same =
            region4_tail_bound(p2.as_ref(), p2.as_ref(), 1.5, &[10.0, 100.0, 1000.0]).unwrap();
        assert_eq!(same.boundary_trend, Trend::NotDecreasing);
        assert!((same.rows[2].boundary_ratio - 1000.0).abs() < 1e-9);
        assert_eq!(same.hypothesis, Trend::NotDecreasing);
    }

    #[test]
    fn light_tail_ratio_normal_error() {
        let tab = light_tail_ratio_diagnostic(
            exp1().as_ref(),
            normal().as_ref(),
            3.0,
            &[5.0, 10.0, 15.0, 20.0],
        )
        .unwrap();
        let expect = [
            0.07443800479405425,
            1.3533104571833935e-10,
            1.5699156069297936e-29,
            3.7317456722440196e-59,
        ];
        for (r, e) in tab.rows.iter().zip(expect) {
            assert!(
                (r.ratio / e - 1.0).abs() < 1e-6,
                "t={}: {} vs {e}",
                r.t,
                r.ratio
            );
            assert!(r.within_bound);
        }
        assert_eq!(tab.ratio_trend, Trend::DecreasingToZero);
        assert!(tab.bound_vanishing);
    }

    #[test]
    fn light_tail_ratio_exponential_error_fails_hypothesis() {
        let tab =
            light_tail_ratio_diagnostic(exp1().as_ref(), exp1().as_ref(), 3.0, &[10.0, 20.0, 40.0])
                .unwrap();
        for r in &tab.rows {
            assert!((r.log_step_ratio + 1.0).abs() < 1e-12);
            assert!(r.within_bound);
        }
        assert!(!tab.bound_vanishing);
        let below =
            light_tail_ratio_diagnostic(exp1().as_ref(), normal().as_ref(), -1.0, &[10.0]).unwrap();
        assert_eq!(below.rows[0].ratio, 0.0);
        let u: Dist = Arc::new(Uniform::new(0.0, 1.0).unwrap());
        assert!(light_tail_ratio_diagnostic(u.as_ref(), normal().as_ref(), 3.0, &[10.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gaussian_pair_any_scale(sv in 0.3f64..3.0, sx in 0.3f64..3.0, t in -5.0f64..15.0) {
            // V | S is Gaussian with slope sv²/(sv²+sx²)
            let v: Dist = Arc::new(Normal::new(0.0, sv).unwrap());
            let x: Dist = Arc::new(Normal::new(0.0, sx).unwrap());
            let ss = (sv * sv + sx * sx).sqrt();
            let s = Normal::new(0.0, ss).unwrap();
            let es = ss * ss * (s.log_pdf(t).unwrap() - s.log_tail(t)).exp();
            let expect = sv * sv / (ss * ss) * es;
            let got = cm(v, x, t).value;
            prop_assert!((got - expect).abs() < 1e-7 * expect.abs().max(1.0), "{} vs {}", got, expect);
        }
    }
}
