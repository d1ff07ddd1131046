//! Continuous parametric families.

use rand::RngCore;
use rand_distr::Distribution as _;
use statrs::function::gamma::ln_gamma;

use super::Distribution;
use crate::error::{Error, Result};
use crate::special::*;

fn require(ok: bool, context: &str, field: &str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(context, field, reason))
    }
}

fn positive(x: f64, context: &str, field: &str) -> Result<()> {
    require(
        x.is_finite() && x > 0.0,
        context,
        field,
        "must be finite and > 0",
    )
}

fn finite(x: f64, context: &str, field: &str) -> Result<()> {
    require(x.is_finite(), context, field, "must be finite")
}

fn draw<D: rand_distr::Distribution<f64>>(d: D, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| d.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub mu: f64,
    pub sigma: f64,
}

impl Normal {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        finite(mu, "normal", "mu")?;
        positive(sigma, "normal", "sigma")?;
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
        }
    }

    fn z(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }
}

impl Distribution for Normal {
    fn name(&self) -> String {
        format!("normal:{},{}", self.mu, self.sigma)
    }
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        norm_cdf(self.z(x))
    }
    fn tail(&self, x: f64) -> f64 {
        norm_tail(self.z(x))
    }
    fn log_tail(&self, x: f64) -> f64 {
        norm_log_tail(self.z(x))
    }
    fn log_cdf(&self, x: f64) -> f64 {
        norm_log_tail(-self.z(x))
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        Some(norm_pdf(self.z(x)) / self.sigma)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(norm_log_pdf(self.z(x)) - self.sigma.ln())
    }
    fn quantile(&self, p: f64) -> f64 {
        self.mu + self.sigma * norm_quantile(p)
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        self.mu + self.sigma * norm_inverse_log_tail(log_p)
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(
            rand_distr::Normal::new(self.mu, self.sigma).unwrap(),
            rng,
            n,
        )
    }
    fn mean(&self) -> Option<f64> {
        Some(self.mu)
    }
    fn variance(&self) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }
    fn median(&self) -> f64 {
        self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self> {
        positive(rate, "exponential", "rate")?;
        Ok(Self { rate })
    }
}

impl Distribution for Exponential {
    fn name(&self) -> String {
        format!("exponential:{}", self.rate)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }
    fn tail(&self, x: f64) -> f64 {
        self.log_tail(x).exp()
    }
    fn log_tail(&self, x: f64) -> f64 {
        -self.rate * x.max(0.0)
    }
    fn log_cdf(&self, x: f64) -> f64 {
        self.cdf(x).ln()
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        Some(if x < 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * x).exp()
        })
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.rate.ln() - self.rate * x
        })
    }
    fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return f64::INFINITY;
        }
        -(-p.max(0.0)).ln_1p() / self.rate
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        (-log_p).max(0.0) / self.rate
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(rand_distr::Exp::new(self.rate).unwrap(), rng, n)
    }
    fn mean(&self) -> Option<f64> {
        Some(1.0 / self.rate)
    }
    fn variance(&self) -> Option<f64> {
        Some(1.0 / (self.rate * self.rate))
    }
}

/// Pareto type I: `P(X > x) = (x / scale)^(-shape)` for `x ≥ scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pareto {
    pub shape: f64,
    pub scale: f64,
}

impl Pareto {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        positive(shape, "pareto", "shape")?;
        positive(scale, "pareto", "scale")?;
        Ok(Self { shape, scale })
    }
}

impl Distribution for Pareto {
    fn name(&self) -> String {
        format!("pareto:{},{}", self.shape, self.scale)
    }
    fn support(&self) -> (f64, f64) {
        (self.scale, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.scale {
            0.0
        } else {
            -self.log_tail(x).exp_m1()
        }
    }
    fn tail(&self, x: f64) -> f64 {
        self.log_tail(x).exp()
    }
    fn log_tail(&self, x: f64) -> f64 {
        if x <= self.scale {
            0.0
        } else {
            -self.shape * (x / self.scale).ln()
        }
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        self.log_pdf(x).map(f64::exp)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(if x < self.scale {
            f64::NEG_INFINITY
        } else {
            self.shape.ln() - self.scale.ln() - (self.shape + 1.0) * (x / self.scale).ln()
        })
    }
    fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return f64::INFINITY;
        }
        self.scale * (-(-p.max(0.0)).ln_1p() / self.shape).exp()
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        self.scale * ((-log_p).max(0.0) / self.shape).exp()
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(
            rand_distr::Pareto::new(self.scale, self.shape).unwrap(),
            rng,
            n,
        )
    }
    fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.shape * self.scale / (self.shape - 1.0))
    }
    fn variance(&self) -> Option<f64> {
        let a = self.shape;
        (a > 2.0).then(|| self.scale * self.scale * a / ((a - 1.0) * (a - 1.0) * (a - 2.0)))
    }
}

/// Location-scale Student-t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub df: f64,
    pub loc: f64,
    pub scale: f64,
}

impl StudentT {
    pub fn new(df: f64, loc: f64, scale: f64) -> Result<Self> {
        positive(df, "student_t", "df")?;
        finite(loc, "student_t", "loc")?;
        positive(scale, "student_t", "scale")?;
        Ok(Self { df, loc, scale })
    }

    fn z(&self, x: f64) -> f64 {
        (x - self.loc) / self.scale
    }
}

impl Distribution for StudentT {
    fn name(&self) -> String {
        format!("student_t:{},{},{}", self.df, self.loc, self.scale)
    }
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        student_tail(-self.z(x), self.df)
    }
    fn tail(&self, x: f64) -> f64 {
        student_tail(self.z(x), self.df)
    }
    fn log_tail(&self, x: f64) -> f64 {
        student_log_tail(self.z(x), self.df)
    }
    fn log_cdf(&self, x: f64) -> f64 {
        student_log_tail(-self.z(x), self.df)
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        self.log_pdf(x).map(f64::exp)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(student_log_pdf(self.z(x), self.df) - self.scale.ln())
    }
    fn quantile(&self, p: f64) -> f64 {
        self.loc + self.scale * student_quantile(p, self.df)
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        self.loc + self.scale * student_inverse_log_tail(log_p, self.df)
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        let t = rand_distr::StudentT::new(self.df).unwrap();
        (0..n)
            .map(|_| self.loc + self.scale * t.sample(rng))
            .collect()
    }
    fn mean(&self) -> Option<f64> {
        (self.df > 1.0).then_some(self.loc)
    }
    fn variance(&self) -> Option<f64> {
        (self.df > 2.0).then(|| self.scale * self.scale * self.df / (self.df - 2.0))
    }
    fn median(&self) -> f64 {
        self.loc
    }
}

/// `ln X ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        finite(mu, "lognormal", "mu")?;
        positive(sigma, "lognormal", "sigma")?;
        Ok(Self { mu, sigma })
    }

    fn z(&self, x: f64) -> f64 {
        (x.ln() - self.mu) / self.sigma
    }
}

impl Distribution for LogNormal {
    fn name(&self) -> String {
        format!("lognormal:{},{}", self.mu, self.sigma)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            norm_cdf(self.z(x))
        }
    }
    fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            norm_tail(self.z(x))
        }
    }
    fn log_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            norm_log_tail(self.z(x))
        }
    }
    fn log_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            norm_log_tail(-self.z(x))
        }
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        self.log_pdf(x).map(f64::exp)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            norm_log_pdf(self.z(x)) - self.sigma.ln() - x.ln()
        })
    }
    fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sigma * norm_quantile(p)).exp()
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        (self.mu + self.sigma * norm_inverse_log_tail(log_p)).exp()
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(
            rand_distr::LogNormal::new(self.mu, self.sigma).unwrap(),
            rng,
            n,
        )
    }
    fn mean(&self) -> Option<f64> {
        Some((self.mu + 0.5 * self.sigma * self.sigma).exp())
    }
    fn variance(&self) -> Option<f64> {
        let s2 = self.sigma * self.sigma;
        Some(s2.exp_m1() * (2.0 * self.mu + s2).exp())
    }
    fn median(&self) -> f64 {
        self.mu.exp()
    }
}

/// Weibull law with `P(X > x) = exp(-(x / scale)^a)`; stretched-exponential when `a < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullStretched {
    pub a: f64,
    pub scale: f64,
}

impl WeibullStretched {
    pub fn new(a: f64, scale: f64) -> Result<Self> {
        positive(a, "weibull_stretched", "a")?;
        positive(scale, "weibull_stretched", "scale")?;
        Ok(Self { a, scale })
    }
}

impl Distribution for WeibullStretched {
    fn name(&self) -> String {
        format!("weibull_stretched:{},{}", self.a, self.scale)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn cdf(&self, x: f64) -> f64 {
        -self.log_tail(x).exp_m1()
    }
    fn tail(&self, x: f64) -> f64 {
        self.log_tail(x).exp()
    }
    fn log_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(x / self.scale).powf(self.a)
        }
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        self.log_pdf(x).map(f64::exp)
    }
    fn log_pdf(&self, x: f64) -> Option<f64> {
        Some(if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            let r = x / self.scale;
            self.a.ln() - self.scale.ln() + (self.a - 1.0) * r.ln() - r.powf(self.a)
        })
    }
    fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return f64::INFINITY;
        }
        self.scale * (-(-p.max(0.0)).ln_1p()).powf(1.0 / self.a)
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        self.scale * (-log_p).max(0.0).powf(1.0 / self.a)
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(
            rand_distr::Weibull::new(self.scale, self.a).unwrap(),
            rng,
            n,
        )
    }
    fn mean(&self) -> Option<f64> {
        Some(self.scale * ln_gamma(1.0 + 1.0 / self.a).exp())
    }
    fn variance(&self) -> Option<f64> {
        let g1 = ln_gamma(1.0 + 1.0 / self.a).exp();
        let g2 = ln_gamma(1.0 + 2.0 / self.a).exp();
        Some(self.scale * self.scale * (g2 - g1 * g1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub a: f64,
    pub b: f64,
}

impl Uniform {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        finite(a, "uniform", "a")?;
        finite(b, "uniform", "b")?;
        require(b > a, "uniform", "b", "must exceed a")?;
        Ok(Self { a, b })
    }
}

impl Distribution for Uniform {
    fn name(&self) -> String {
        format!("uniform:{},{}", self.a, self.b)
    }
    fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    fn cdf(&self, x: f64) -> f64 {
        ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0)
    }
    fn tail(&self, x: f64) -> f64 {
        ((self.b - x) / (self.b - self.a)).clamp(0.0, 1.0)
    }
    fn pdf(&self, x: f64) -> Option<f64> {
        Some(if x >= self.a && x <= self.b {
            1.0 / (self.b - self.a)
        } else {
            0.0
        })
    }
    fn quantile(&self, p: f64) -> f64 {
        self.a + (self.b - self.a) * p.clamp(0.0, 1.0)
    }
    fn inverse_log_tail(&self, log_p: f64) -> f64 {
        self.b - (self.b - self.a) * log_p.min(0.0).exp()
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
        draw(rand_distr::Uniform::new(self.a, self.b).unwrap(), rng, n)
    }
    fn mean(&self) -> Option<f64> {
        Some(0.5 * (self.a + self.b))
    }
    fn variance(&self) -> Option<f64> {
        Some((self.b - self.a).powi(2) / 12.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadConfig};
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn families() -> Vec<Box<dyn Distribution>> {
        vec![
            Box::new(Normal::new(0.3, 2.0).unwrap()),
            Box::new(Exponential::new(1.5).unwrap()),
            Box::new(Pareto::new(2.0, 1.0).unwrap()),
            Box::new(Pareto::new(1.5, 3.0).unwrap()),
            Box::new(StudentT::new(3.0, 0.0, 1.0).unwrap()),
            Box::new(StudentT::new(5.0, 1.0, 2.0).unwrap()),
            Box::new(LogNormal::new(0.0, 1.0).unwrap()),
            Box::new(WeibullStretched::new(0.5, 1.0).unwrap()),
            Box::new(Uniform::new(-1.0, 2.0).unwrap()),
        ]
    }

    #[test]
    fn standard_normal_median() {
        assert_eq!(Normal::standard().cdf(0.0), 0.5);
    }

    #[test]
    fn pareto_tail_matches_density_integral() {
        let p = Pareto::new(2.0, 1.0).unwrap();
        assert!((p.tail(10.0) - 0.01).abs() < 1e-15);
        let r = integrate(
            |x| p.pdf(x).unwrap(),
            10.0,
            f64::INFINITY,
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn student_t3_has_zero_mean() {
        assert_eq!(StudentT::new(3.0, 0.0, 1.0).unwrap().mean(), Some(0.0));
    }

    #[test]
    fn parameter_checks_name_the_field() {
        let e = Pareto::new(-1.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("shape"));
        let e = StudentT::new(0.0, 0.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("df"));
        assert!(Uniform::new(1.0, 1.0).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in families() {
            let (lo, hi) = d.support();
            let med = d.median();
            let r = crate::quad::integrate_breaks(
                |x| d.pdf(x).unwrap(),
                &[lo, med, hi],
                QuadConfig::default(),
            )
            .unwrap();
            assert!((r.value - 1.0).abs() < 1e-8, "{}: {}", d.name(), r.value);
        }
    }

    #[test]
    fn cdf_and_tail_are_complementary() {
        for d in families() {
            for x in super::super::probe_points(d.as_ref()) {
                assert!(
                    (d.cdf(x) + d.tail(x) - 1.0).abs() < 1e-12,
                    "{} at {x}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in families() {
            for x in super::super::probe_points(d.as_ref()) {
                let back = d.quantile(d.cdf(x));
                assert!(
                    (back - x).abs() < 1e-9 * x.abs().max(1.0),
                    "{}: {x} -> {back}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn log_tail_agrees_and_stays_finite() {
        for d in families() {
            for x in super::super::probe_points(d.as_ref()) {
                let t = d.tail(x);
                if t > 1e-300 {
                    assert!(
                        (d.log_tail(x) - t.ln()).abs() < 1e-9 * t.ln().abs().max(1.0),
                        "{} at {x}",
                        d.name()
                    );
                }
            }
            if d.support().1.is_infinite() {
                let far = d.log_tail(1e200);
                assert!(far.is_finite() || far == f64::NEG_INFINITY, "{}", d.name());
            }
        }
        assert!(Normal::standard().log_tail(1e6).is_finite());
        assert!(StudentT::new(3.0, 0.0, 1.0)
            .unwrap()
            .log_tail(1e150)
            .is_finite());
        assert!(LogNormal::new(0.0, 1.0)
            .unwrap()
            .log_tail(1e300)
            .is_finite());
    }

    #[test]
    fn inverse_log_tail_round_trips_far_out() {
        for d in families() {
            if d.support().1.is_finite() {
                continue;
            }
            for &lp in &[-1.0, -50.0, -700.0, -2000.0] {
                let x = d.inverse_log_tail(lp);
                if x.is_infinite() {
                    continue;
                }
                assert!(
                    (d.log_tail(x) - lp).abs() < 1e-7 * lp.abs(),
                    "{} at {lp}: x={x}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn sample_means_match() {
        for d in families() {
            let (Some(m), Some(v)) = (d.mean(), d.variance()) else {
                continue;
            };
            let mut rng = stream_rng(11, 0);
            let n = 200_000;
            let xs = d.sample(&mut rng, n);
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (v / n as f64).sqrt();
            assert!((mean - m).abs() < 5.0 * se, "{}: {mean} vs {m}", d.name());
        }
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(x in -50.0f64..50.0, dx in 0.0f64..10.0) {
            for d in families() {
                prop_assert!(d.cdf(x) <= d.cdf(x + dx));
                prop_assert!(d.log_tail(x) >= d.log_tail(x + dx));
            }
        }

        #[test]
        fn normal_quantile_round_trip(mu in -10.0f64..10.0, sigma in 0.1f64..10.0, p in 1e-10f64..(1.0 - 1e-10)) {
            let d = Normal::new(mu, sigma).unwrap();
            let x = d.quantile(p);
            prop_assert!((d.cdf(x) - p).abs() < 1e-12 + 1e-10 * p);
        }
    }
}
