//! Tail upweighting, exponential tilting and the mixture KL.
//!
//! [`TailUpweighted`] rescales a base law `Q` so that exactly `m = c/t^γ` of
//! its mass sits above `t`, keeping the shape of `Q` on each side of `t`.
//! For heavy-tailed `Q` the mean stays near `c` (or grows, for `γ < 1`) while
//! the KL divergence to `Q` vanishes. [`exp_tilt`] reweights a base law by
//! `e^{s x}`, which is the optimum of a mean-minus-KL objective and only
//! exists for light tails.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{spread, Dist, Distribution};
use crate::error::{Error, Result};
use crate::quad::{
    log_add_exp, log_first_moment, log_integrate, log_sum_exp, LogIntegral, QuadConfig,
};

#[derive(Debug, Clone)]
pub struct TailUpweightConfig {
    pub base: Dist,
    pub c: f64,
    pub t: f64,
    pub gamma: f64,
}

impl TailUpweightConfig {
    /// `gamma` defaults to 1.
    pub fn new(base: Dist, c: f64, t: f64) -> Self {
        Self {
            base,
            c,
            t,
            gamma: 1.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Upweighted mass `c / t^gamma`.
    pub fn mass(&self) -> f64 {
        (self.c.ln() - self.gamma * self.t.ln()).exp()
    }
}

/// The piecewise law: `F_Q` scaled by `(1 − m)/F_Q(t)` below `t`, `F̄_Q` scaled by `m/F̄_Q(t)` above.
#[derive(Debug, Clone)]
pub struct TailUpweighted {
    config: TailUpweightConfig,
    mass: f64,
    log_cdf_t: f64,
    log_tail_t: f64,
    cdf_t: f64,
    quad: QuadConfig,
}

pub fn build_tail_upweighted(config: TailUpweightConfig) -> Result<TailUpweighted> {
    let ctx = "tail upweighting";
    let TailUpweightConfig { c, t, gamma, .. } = config;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(ctx, "c", "must be finite and > 0"));
    }
    if !(t.is_finite() && t > c) {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("need t > c (t={t}, c={c})"),
        ));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(ctx, "gamma", "must lie in (0, 1]"));
    }
    let mass = config.mass();
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("upweighted mass c/t^gamma = {mass} is not in (0, 1)"),
        ));
    }
    if config.base.mean().is_none() {
        return Err(Error::invalid(
            ctx,
            "base",
            format!("{} has no finite mean", config.base.name()),
        ));
    }
    let log_tail_t = config.base.log_tail(t);
    if !log_tail_t.is_finite() {
        return Err(Error::ThresholdTooDeep {
            t,
            log_tail: log_tail_t,
        });
    }
    let cdf_t = config.base.cdf(t);
    let log_cdf_t = config.base.log_cdf(t);
    if !(cdf_t > 0.0) {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("base puts no mass at or below t={t}"),
        ));
    }
    Ok(TailUpweighted {
        config,
        mass,
        log_cdf_t,
        log_tail_t,
        cdf_t,
        quad: QuadConfig::default(),
    })
}

impl TailUpweighted {
    pub fn config(&self) -> &TailUpweightConfig {
        &self.config
    }

    /// `P_t(X > t)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `ln F̄_Q(t)`.
    pub fn base_log_tail_at_t(&self) -> f64 {
        self.log_tail_t
    }

    fn base(&self) -> &dyn Distribution {
        self.config.base.as_ref()
    }

    fn lower_log_scale(&self) -> f64 {
        (-self.mass).ln_1p() - self.log_cdf_t
    }

    fn upper_log_scale(&self) -> f64 {
        self.mass.ln() - self.log_tail_t
    }
}

impl Distribution for TailUpweighted {
    fn name(&self) -> String {
        format!(
            "upweighted[{}; c={}, t={}, gamma={}]",
            self.base().name(),
            self.config.c,
            self.config.t,
            self.config.gamma
        )
    }
    fn support(&self) -> (f64, f64) {
        self.base().support()
    }
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.config.t {
            (1.0 - self.mass) * (self.base().cdf(x) / self.cdf_t)
        } else {
            1.0 - self.tail(x)
        }
    }
    fn tail(&self, x: f64) -> f64 {
        if x <= self.config.t {
            self.mass + (1.0 - self.mass) * (1.0 - self.base().cdf(x) / self.cdf_t)
        } else {
            self.log_tail(x).exp()
        }
    }
    fn log_tail(&self, x: f64) -> f64 {
        if x <= self.config.t {
            self.tail(x).ln()
        } else {
            self.upper_log_scale() + self.base().log_tail(x)
        }
    }
    fn log_cdf(&self, x: f64) -> f64 {
        if x <= self.config.t {
            self.lower_log_scale() + self.base().log_cdf(x)
        } else {
            (-self.tail(x)).ln_1p()
        }
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        self.log_pdf(x).map(f64::exp)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        let scale = if x <= self.config.t {
            self.lower_log_scale()
        } else {
            self.upper_log_scale()
        };
        self.base().log_pdf(x).map(|l| l + scale)
    }
    fn quantile(&self, p: f64) -> f64 {
        if p <= 1.0 - self.mass {
            self.base().quantile(p / (1.0 - self.mass) * self.cdf_t)
        } else {
            self.inverse_log_tail((-p).ln_1p())
        }
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        if log_p < self.mass.ln() {
            self.base().inverse_log_tail(log_p - self.upper_log_scale())
        } else {
            self.quantile(-log_p.exp_m1())
        }
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let v: f64 = 1.0 - rng.random::<f64>();
                if u < self.mass {
                    self.base().inverse_log_tail(v.ln() + self.log_tail_t)
                } else {
                    self.base().quantile(v * self.cdf_t)
                }
            })
            .collect()
    }
    fn mean(&self) -> Option<f64> {
        upweighted_mean(self).ok()
    }
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        let lo = (1.0 - self.mass) / self.cdf_t;
        let hi = self.upper_log_scale().exp();
        let t = self.config.t;
        Some(
            self.base()
                .atoms()?
                .into_iter()
                .map(|(v, p)| (v, p * if v <= t { lo } else { hi }))
                .collect(),
        )
    }
}

/// `E_Q[X | X > t]` through the mean-excess integral `t + ∫_t^∞ F̄_Q / F̄_Q(t)`.
fn upper_conditional_mean(
    q: &dyn Distribution,
    t: f64,
    log_tail_t: f64,
    cfg: QuadConfig,
) -> Result<f64> {
    if let Some(atoms) = q.atoms() {
        let (num, den) = atoms
            .iter()
            .filter(|a| a.0 > t)
            .fold((0.0, 0.0), |acc, a| (acc.0 + a.0 * a.1, acc.1 + a.1));
        return Ok(num / den);
    }
    let excess = log_integrate(|x| q.log_tail(x) - log_tail_t, t, q.support().1, &[], cfg)?;
    Ok(t + excess.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpweightPieces {
    pub mass: f64,
    pub base_mean: f64,
    /// `F̄_Q(t)`
    pub base_tail: f64,
    /// `E_Q[X | X ≤ t]`
    pub lower_mean: f64,
    /// `E_Q[X | X > t]`
    pub upper_mean: f64,
}

pub fn upweighted_pieces(p: &TailUpweighted) -> Result<UpweightPieces> {
    let q = p.base();
    let base_mean = q
        .mean()
        .ok_or_else(|| Error::invalid("upweighted_mean", "base", "no finite mean"))?;
    let base_tail = p.log_tail_t.exp();
    let upper_mean = upper_conditional_mean(q, p.config.t, p.log_tail_t, p.quad)?;
    Ok(UpweightPieces {
        mass: p.mass,
        base_mean,
        base_tail,
        lower_mean: (base_mean - base_tail * upper_mean) / p.cdf_t,
        upper_mean,
    })
}

/// Mean of `P_t` from `E_Q[X] + (m − F̄_Q(t))(E_Q[X | X > t] − E_Q[X | X ≤ t])`.
pub fn upweighted_mean(p: &TailUpweighted) -> Result<f64> {
    let u = upweighted_pieces(p)?;
    Ok(u.base_mean + (u.mass - u.base_tail) * (u.upper_mean - u.lower_mean))
}

/// Mean of `P_t` by integrating `x` against its piecewise density.
pub fn upweighted_mean_direct(p: &TailUpweighted) -> Result<f64> {
    let q = p.base();
    let t = p.config.t;
    if let Some(atoms) = p.atoms() {
        return Ok(atoms.iter().map(|a| a.0 * a.1).sum());
    }
    let (lo, hi) = q.support();
    let hints = [q.median(), q.quantile(0.25), q.quantile(0.75)];
    let logf = |x: f64| q.log_pdf(x).unwrap_or(f64::NEG_INFINITY);
    let below = log_first_moment(logf, lo, t, &hints, p.quad)?;
    let above = log_first_moment(logf, t, hi, &hints, p.quad)?;
    Ok(below.scaled(-p.lower_log_scale()) + above.scaled(-p.upper_log_scale()))
}

/// `F_P(t) ln(F_P(t)/F_Q(t)) + F̄_P(t) ln(F̄_P(t)/F̄_Q(t))`, the second term from the log tail.
pub fn upweighted_kl(p: &TailUpweighted) -> f64 {
    let m = p.mass;
    let lower = (1.0 - m) * ((-m).ln_1p() - p.log_cdf_t);
    let upper = m * (m.ln() - p.log_tail_t);
    (lower + upper).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpweightRow {
    pub t: f64,
    pub mass: f64,
    pub mean_decomposition: f64,
    pub mean_quadrature: f64,
    pub kl_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpweightSweep {
    pub rows: Vec<UpweightRow>,
    pub mean_increasing: bool,
    pub kl_decreasing: bool,
}

/// One row per threshold, evaluated in parallel.
pub fn upweight_sweep(base: &Dist, c: f64, gamma: f64, ts: &[f64]) -> Result<UpweightSweep> {
    let rows = ts
        .par_iter()
        .map(|&t| {
            let p = build_tail_upweighted(
                TailUpweightConfig::new(base.clone(), c, t).with_gamma(gamma),
            )?;
            Ok(UpweightRow {
                t,
                mass: p.mass(),
                mean_decomposition: upweighted_mean(&p)?,
                mean_quadrature: upweighted_mean_direct(&p)?,
                kl_exact: upweighted_kl(&p),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_increasing = rows
        .windows(2)
        .all(|w| w[1].mean_decomposition > w[0].mean_decomposition);
    let kl_decreasing = rows.windows(2).all(|w| w[1].kl_exact < w[0].kl_exact);
    Ok(UpweightSweep {
        rows,
        mean_increasing,
        kl_decreasing,
    })
}

/// `P(V) ∝ Q(V) e^{sV}`.
#[derive(Debug, Clone)]
pub struct ExpTilt {
    pub base: Dist,
    pub s: f64,
    /// `ln E_Q[e^{sV}]`
    pub log_normalizer: f64,
    pub mean: f64,
}

impl ExpTilt {
    /// `KL(P ‖ Q) = s·E_P[V] − ln E_Q[e^{sV}]`.
    pub fn kl(&self) -> f64 {
        (self.s * self.mean - self.log_normalizer).max(0.0)
    }

    pub fn log_pdf(&self, x: f64) -> Option<f64> {
        self.base
            .log_pdf(x)
            .map(|l| l + self.s * x - self.log_normalizer)
    }
}

const TILT_EXPANSIONS: i32 = 12;

fn divergent(s: f64, detail: String) -> Error {
    Error::DivergentNormalizer { s, detail }
}

/// Reject tilts whose normalizer grows without bound on expanding windows.
fn check_tilt_convergence(base: &dyn Distribution, s: f64, cfg: QuadConfig) -> Result<()> {
    let (lo, hi) = base.support();
    let towards_upper = s > 0.0;
    if (towards_upper && hi.is_finite()) || (!towards_upper && lo.is_finite()) {
        return Ok(());
    }
    let med = base.median();
    let w = spread(base);
    let unit = w * (1.0 + s.abs() * w);
    let dir = if towards_upper { 1.0 } else { -1.0 };
    let logf = |x: f64| s * x + base.log_pdf(x).unwrap_or(f64::NEG_INFINITY);
    let edge = |k: i32| med + dir * unit * 2f64.powi(k);
    let partial = |k: i32| -> Result<f64> {
        let e = edge(k);
        let r = if towards_upper {
            log_integrate(logf, lo.max(med - 64.0 * unit), e, &[med], cfg)?
        } else {
            log_integrate(logf, e, hi.min(med + 64.0 * unit), &[med], cfg)?
        };
        Ok(r.log_value)
    };
    let (a, b) = (partial(TILT_EXPANSIONS - 1)?, partial(TILT_EXPANSIONS)?);
    let growth = b - a;
    if growth > std::f64::consts::LN_10 {
        return Err(divergent(
            s,
            format!("partial normalizer grew by a factor e^{growth:.3} over the last expansion"),
        ));
    }
    let (fa, fb) = (logf(edge(TILT_EXPANSIONS - 1)), logf(edge(TILT_EXPANSIONS)));
    if fb >= fa && fb > f64::NEG_INFINITY {
        return Err(divergent(
            s,
            format!(
                "log integrand still rising at x={:.6e}",
                edge(TILT_EXPANSIONS)
            ),
        ));
    }
    Ok(())
}

pub fn exp_tilt(base: Dist, s: f64) -> Result<ExpTilt> {
    if !s.is_finite() {
        return Err(Error::invalid("exp_tilt", "s", "must be finite"));
    }
    if s == 0.0 {
        let mean = base
            .mean()
            .ok_or_else(|| Error::invalid("exp_tilt", "base", "no finite mean"))?;
        return Ok(ExpTilt {
            base,
            s,
            log_normalizer: 0.0,
            mean,
        });
    }
    if let Some(atoms) = base.atoms() {
        let log_z = log_sum_exp(atoms.iter().map(|a| a.1.ln() + s * a.0));
        let mean = atoms
            .iter()
            .map(|a| a.0 * (a.1.ln() + s * a.0 - log_z).exp())
            .sum();
        return Ok(ExpTilt {
            base,
            s,
            log_normalizer: log_z,
            mean,
        });
    }
    if base.pdf(base.median()).is_none() {
        return Err(Error::invalid(
            "exp_tilt",
            "base",
            "needs a density or atoms",
        ));
    }
    let cfg = QuadConfig::default();
    check_tilt_convergence(base.as_ref(), s, cfg)?;
    let (lo, hi) = base.support();
    let med = base.median();
    let shifted = base
        .mean()
        .zip(base.variance())
        .map(|(m, v)| m + s * v)
        .unwrap_or(med);
    let hints = [med, shifted];
    let logf = |x: f64| s * x + base.log_pdf(x).unwrap_or(f64::NEG_INFINITY);
    let z = log_integrate(logf, lo, hi, &hints, cfg)?;
    if !z.log_value.is_finite() {
        return Err(divergent(s, "normalizer is not finite".into()));
    }
    let m = log_first_moment(logf, lo, hi, &hints, cfg)?;
    Ok(ExpTilt {
        base,
        s,
        log_normalizer: z.log_value,
        mean: m.scaled(z.log_value),
    })
}

impl ExpTilt {
    /// `∫` of the tilted density, which should be 1.
    pub fn total_mass(&self) -> Result<f64> {
        let (lo, hi) = self.base.support();
        let r: LogIntegral = log_integrate(
            |x| self.log_pdf(x).unwrap_or(f64::NEG_INFINITY),
            lo,
            hi,
            &[self.base.median(), self.mean],
            QuadConfig::default(),
        )?;
        Ok(r.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedOptimum {
    pub beta: f64,
    pub tilt_rate: f64,
    pub expected_u: f64,
    pub expected_v: f64,
    pub kl: f64,
}

/// Optimum of `E[U] − β·KL` for `U = X + V` with `X`, `V` independent: tilt both by `e^{u/β}`.
pub fn kl_regularized_optimum(x_dist: Dist, v_dist: Dist, beta: f64) -> Result<RegularizedOptimum> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(
            "kl_regularized_optimum",
            "beta",
            "must be finite and > 0",
        ));
    }
    let s = 1.0 / beta;
    let tx = exp_tilt(x_dist, s)?;
    let tv = exp_tilt(v_dist, s)?;
    Ok(RegularizedOptimum {
        beta,
        tilt_rate: s,
        expected_u: tx.mean + tv.mean,
        expected_v: tv.mean,
        kl: tx.kl() + tv.kl(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureKlInput {
    pub alpha: f64,
    pub log_q: f64,
    pub delta_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureKl {
    pub exact_kl: f64,
    pub first_order_kl: f64,
    pub expected_reward_gain: f64,
    /// `log_q < ln α`, where the first-order form is meaningful.
    pub first_order_regime: bool,
}

/// KL of `(1 − α)Q + α·δ_x` against `Q`, where `Q(x) = e^{log_q}`.
pub fn mixture_kl(input: MixtureKlInput) -> Result<MixtureKl> {
    let MixtureKlInput {
        alpha,
        log_q,
        delta_reward,
    } = input;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("mixture_kl", "alpha", "must lie in (0, 1)"));
    }
    if !(log_q <= 0.0) {
        return Err(Error::invalid(
            "mixture_kl",
            "log_q",
            "must be a log-probability (<= 0)",
        ));
    }
    let ln_1ma = (-alpha).ln_1p();
    let log_mixed = log_add_exp(alpha.ln(), ln_1ma + log_q);
    let point = log_mixed.exp() * (log_mixed - log_q);
    let rest = (1.0 - alpha) * (-log_q.exp_m1()) * ln_1ma;
    Ok(MixtureKl {
        exact_kl: (point + rest).max(0.0),
        first_order_kl: alpha * (alpha.ln() - log_q),
        expected_reward_gain: alpha * delta_reward,
        first_order_regime: log_q < alpha.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn t3() -> Dist {
        Arc::new(StudentT::new(3.0, 0.0, 1.0).unwrap())
    }

    fn build(base: Dist, c: f64, t: f64, gamma: f64) -> TailUpweighted {
        build_tail_upweighted(TailUpweightConfig::new(base, c, t).with_gamma(gamma)).unwrap()
    }

    #[test]
    fn mass_above_threshold_is_exact() {
        let p = build(t3(), 1.0, 1e3, 1.0);
        assert!((p.tail(1e3) - 1e-3).abs() < 1e-17);
        assert!((p.cdf(1e3) - (1.0 - 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn piecewise_cdf_formula() {
        let q = t3();
        let p = build(q.clone(), 1.0, 10.0, 1.0);
        for &x in &[-5.0, 0.0, 3.0, 9.99] {
            let expect = 0.9 / q.cdf(10.0) * q.cdf(x);
            assert!((p.cdf(x) - expect).abs() < 1e-15);
        }
        for &x in &[10.01, 50.0, 1e4] {
            let expect = 0.1 / q.tail(10.0) * q.tail(x);
            assert!((p.tail(x) / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = build(t3(), 1.0, 100.0, 1.0);
        let r = crate::quad::integrate_breaks(
            |x| p.pdf(x).unwrap(),
            &[f64::NEG_INFINITY, 0.0, 100.0, f64::INFINITY],
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_base_construction_is_a_valid_law() {
        let q: Dist = Arc::new(Uniform::new(0.0, 1.0).unwrap());
        let p = build(q, 0.1, 0.5, 1.0);
        assert!((p.mass() - 0.2).abs() < 1e-15);
        let r = crate::quad::integrate_breaks(
            |x| p.pdf(x).unwrap(),
            &[0.0, 0.5, 1.0],
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        // mean = 0.8·0.25 + 0.2·0.75
        assert!((upweighted_mean(&p).unwrap() - 0.35).abs() < 1e-12);
        assert!((upweighted_mean_direct(&p).unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let bad = build_tail_upweighted(TailUpweightConfig::new(t3(), 10.0, 5.0));
        assert!(matches!(bad, Err(Error::InvalidParameter { ref field, .. }) if field == "t"));
        assert!(
            build_tail_upweighted(TailUpweightConfig::new(t3(), 1.0, 10.0).with_gamma(1.5))
                .is_err()
        );
        let cauchy: Dist = Arc::new(StudentT::new(1.0, 0.0, 1.0).unwrap());
        assert!(build_tail_upweighted(TailUpweightConfig::new(cauchy, 1.0, 10.0)).is_err());
        let n: Dist = Arc::new(Normal::standard());
        assert!(build_tail_upweighted(TailUpweightConfig::new(n.clone(), 1.0, 1e100)).is_ok());
        assert!(matches!(
            build_tail_upweighted(TailUpweightConfig::new(n, 1.0, 1e200)),
            Err(Error::ThresholdTooDeep { .. })
        ));
        let u: Dist = Arc::new(Uniform::new(0.0, 1.0).unwrap());
        assert!(matches!(
            build_tail_upweighted(TailUpweightConfig::new(u, 0.1, 2.0)),
            Err(Error::ThresholdTooDeep { .. })
        ));
    }

    #[test]
    fn student_t_sweep_trends() {
        let ts = [10.0, 1e2, 1e3, 1e4];
        let g1 = upweight_sweep(&t3(), 1.0, 1.0, &ts).unwrap();
        assert!(g1.kl_decreasing);
        assert!(g1.rows[3].kl_exact < 0.05);
        assert!(g1.rows[3].mean_decomposition >= 0.95);
        let g08 = upweight_sweep(&t3(), 1.0, 0.8, &ts).unwrap();
        assert!(g08.kl_decreasing && g08.mean_increasing);
        for r in g1.rows.iter().chain(&g08.rows) {
            assert!(
                (r.mean_decomposition / r.mean_quadrature - 1.0).abs() < 1e-6,
                "{r:?}"
            );
        }
    }

    #[test]
    fn student_t_frozen_values() {
        // independent high-precision evaluation of the two formulas
        let p = build(t3(), 1.0, 1e4, 1.0);
        assert!((upweighted_kl(&p) - KL_T3_1E4).abs() < 1e-12 * KL_T3_1E4.max(1.0));
        assert!((upweighted_mean(&p).unwrap() - MEAN_T3_1E4).abs() < 1e-8);
    }

    const KL_T3_1E4: f64 = 1.732300735359999e-3;
    const MEAN_T3_1E4: f64 = 1.4999999924617876;

    #[test]
    fn normal_base_mean_and_kl() {
        let n: Dist = Arc::new(Normal::standard());
        let p = build(n.clone(), 1.0, 10.0, 1.0);
        let upper = 10.0
            + crate::quad::log_integrate(
                |x| n.log_tail(x) - n.log_tail(10.0),
                10.0,
                f64::INFINITY,
                &[],
                QuadConfig::default(),
            )
            .unwrap()
            .value();
        let lower = -n.pdf(10.0).unwrap() / n.cdf(10.0);
        let expect = (0.1 - n.tail(10.0)) * (upper - lower);
        assert!((upweighted_mean(&p).unwrap() - expect).abs() < 1e-10);
        assert!((upweighted_mean_direct(&p).unwrap() - expect).abs() < 1e-8);
        let k20 = upweighted_kl(&build(n.clone(), 1.0, 20.0, 1.0));
        let k40 = upweighted_kl(&build(n.clone(), 1.0, 40.0, 1.0));
        assert!(k20 > 5.0 && k40 > k20, "{k20} {k40}");
        // −(c/t) ln F̄(t) dominates: about t/2
        assert!((k20 - 0.05 * -n.log_tail(20.0)).abs() < 0.2);
    }

    #[test]
    fn kl_vanishes_when_mass_equals_base_tail() {
        let q = t3();
        let t = 5.0;
        let c = q.tail(t) * t;
        let p = build(q, c, t, 1.0);
        assert!(upweighted_kl(&p) < 1e-15);
    }

    #[test]
    fn upweighted_sampler_matches_tail() {
        let p = build(t3(), 1.0, 10.0, 1.0);
        let xs = p.sample(&mut stream_rng(8, 0), 200_000);
        let frac = xs.iter().filter(|&&x| x > 10.0).count() as f64 / xs.len() as f64;
        assert!((frac - 0.1).abs() < 4.0 * (0.09f64 / 200_000.0).sqrt());
        assert!(ks_statistic(&p, &xs) < ks_critical(xs.len(), 0.001));
    }

    #[test]
    fn gaussian_tilt_closed_form() {
        let n: Dist = Arc::new(Normal::standard());
        for &s in &[0.25, 0.5, 1.0] {
            let t = exp_tilt(n.clone(), s).unwrap();
            assert!((t.mean - s).abs() < 1e-8, "{}", t.mean);
            assert!((t.kl() - 0.5 * s * s).abs() < 1e-8);
            assert!((t.log_normalizer - 0.5 * s * s).abs() < 1e-9);
            assert!((t.total_mass().unwrap() - 1.0).abs() < 1e-8);
        }
        let id = exp_tilt(n, 0.0).unwrap();
        assert_eq!((id.mean, id.kl()), (0.0, 0.0));
    }

    #[test]
    fn heavy_tails_have_no_tilt() {
        for d in [
            Arc::new(Pareto::new(2.0, 1.0).unwrap()) as Dist,
            Arc::new(StudentT::new(3.0, 0.0, 1.0).unwrap()),
            Arc::new(LogNormal::new(0.0, 1.0).unwrap()),
        ] {
            assert!(matches!(
                exp_tilt(d, 0.1),
                Err(Error::DivergentNormalizer { .. })
            ));
        }
        let e: Dist = Arc::new(Exponential::new(1.0).unwrap());
        assert!(matches!(
            exp_tilt(e.clone(), 1.0),
            Err(Error::DivergentNormalizer { .. })
        ));
        let t = exp_tilt(e, 0.5).unwrap();
        assert!((t.mean - 2.0).abs() < 1e-8);
    }

    #[test]
    fn cumulant_derivative_is_tilted_mean() {
        let d: Dist = Arc::new(Exponential::new(2.0).unwrap());
        let h = 1e-4;
        for &s in &[-1.0, 0.3, 1.2] {
            let up = exp_tilt(d.clone(), s + h).unwrap().log_normalizer;
            let dn = exp_tilt(d.clone(), s - h).unwrap().log_normalizer;
            let mid = exp_tilt(d.clone(), s).unwrap().mean;
            assert!(((up - dn) / (2.0 * h) - mid).abs() < 1e-5);
        }
    }

    #[test]
    fn large_gaussian_tilt_is_not_flagged() {
        let n: Dist = Arc::new(Normal::standard());
        let t = exp_tilt(n, 200.0).unwrap();
        assert!((t.mean - 200.0).abs() < 1e-6);
    }

    #[test]
    fn regularized_optimum_gaussian() {
        let n: Dist = Arc::new(Normal::standard());
        let o = kl_regularized_optimum(n.clone(), n.clone(), 0.5).unwrap();
        assert!((o.expected_v - 2.0).abs() < 1e-8);
        assert!((o.kl - 4.0).abs() < 1e-7);
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &b in &[1.0, 0.5, 0.25, 0.125] {
            let o = kl_regularized_optimum(n.clone(), n.clone(), b).unwrap();
            assert!(o.expected_v > prev.0 && o.kl > prev.1);
            prev = (o.expected_v, o.kl);
        }
        let p: Dist = Arc::new(Pareto::new(2.0, 1.0).unwrap());
        assert!(kl_regularized_optimum(p, n, 1.0).is_err());
    }

    #[test]
    fn mixture_kl_worked_number() {
        let r = mixture_kl(MixtureKlInput {
            alpha: 0.01,
            log_q: -1339.70,
            delta_reward: 1.9048,
        })
        .unwrap();
        assert!((r.first_order_kl - 13.3509483).abs() < 1e-6);
        assert!((r.exact_kl - 13.3409985).abs() < 1e-6);
        assert!((r.expected_reward_gain - 0.019048).abs() < 1e-12);
        assert!(r.first_order_regime);
    }

    #[test]
    fn mixture_kl_boundary() {
        let a: f64 = 0.2;
        let r = mixture_kl(MixtureKlInput {
            alpha: a,
            log_q: a.ln(),
            delta_reward: 0.0,
        })
        .unwrap();
        assert!(r.first_order_kl.abs() < 1e-15);
        // q = α: [(1−α)α + α] ln(2 − α) + (1−α)² ln(1−α)
        let expect = (2.0 - a) * a * (2.0 - a).ln() + (1.0 - a).powi(2) * (1.0 - a).ln();
        assert!((r.exact_kl - expect).abs() < 1e-14);
        assert!(!r.first_order_regime);
    }

    proptest! {
        #[test]
        fn mixture_kl_nonnegative_and_converges(alpha in 1e-4f64..0.5, log_q in -800.0f64..-0.01) {
            let r = mixture_kl(MixtureKlInput { alpha, log_q, delta_reward: 1.0 }).unwrap();
            prop_assert!(r.exact_kl >= 0.0);
            let far = mixture_kl(MixtureKlInput { alpha, log_q: log_q - 5000.0, delta_reward: 1.0 }).unwrap();
            let nearer = mixture_kl(MixtureKlInput { alpha, log_q: log_q - 500.0, delta_reward: 1.0 }).unwrap();
            let rel = |m: MixtureKl| ((m.exact_kl - m.first_order_kl) / m.exact_kl).abs();
            prop_assert!(rel(far) < rel(nearer));
        }

        #[test]
        fn decomposition_matches_quadrature(t in 2.0f64..500.0, gamma in 0.3f64..1.0) {
            let p = build(t3(), 1.0, t, gamma);
            let a = upweighted_mean(&p).unwrap();
            let b = upweighted_mean_direct(&p).unwrap();
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{} vs {}", a, b);
            prop_assert!(upweighted_kl(&p) >= 0.0);
        }
    }
}
