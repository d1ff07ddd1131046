//! Adaptive Gauss–Kronrod quadrature on finite and infinite ranges.
//!
//! Infinite pieces are mapped onto `(0, 1]` with `x = a + (1 - s) / s` (or its
//! mirror), which keeps resolution deep into heavy tails, and all pieces share one global subdivision heap so the stopping
//! rule is relative to the whole integral. [`log_integrate`] integrates
//! `exp(logf)` and returns the logarithm of the result, which is how every
//! far-tail quantity in this crate is evaluated without underflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_715_543_519_356,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Stopping rule for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

/// Result of [`log_integrate`]: `log_value = ln ∫ exp(logf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    pub log_value: f64,
    pub rel_error: f64,
}

impl LogIntegral {
    pub const ZERO: LogIntegral = LogIntegral {
        log_value: f64::NEG_INFINITY,
        rel_error: 0.0,
    };

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Finite,
    Upper(f64),
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply(self, s: f64) -> (f64, f64) {
        match self {
            Map::Finite => (s, 1.0),
            Map::Upper(a) => {
                let r = 1.0 / s;
                (a + (1.0 - s) * r, r * r)
            }
            Map::Lower(b) => {
                let r = 1.0 / s;
                (b - (1.0 - s) * r, r * r)
            }
        }
    }
}

#[derive(Debug)]
struct Segment {
    map: Map,
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

fn gk21<F: Fn(f64) -> f64>(f: &F, map: Map, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |s: f64| -> Result<f64> {
        let (x, jac) = map.apply(s);
        let y = f(x);
        if y.is_nan() || y.is_infinite() {
            return Err(Error::Quadrature {
                estimate: f64::NAN,
                abs_error: f64::INFINITY,
            });
        }
        let v = y * jac;
        Ok(if v.is_finite() { v } else { 0.0 })
    };

    let fc = eval(centre)?;
    let mut resg = 0.0;
    let mut resk = WGK[10] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    #[allow(clippy::needless_range_loop)]
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = resk * half;
    let err = rescale_error((resk - resg) * half, resabs * h, resasc * h);
    Ok((value, err))
}

/// Integrate `f` over `[a, b]`; either end may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<Integral> {
    integrate_breaks(f, &[a, b], cfg)
}

/// Integrate `f` over `[points[0], points[last]]`, splitting at every interior point.
///
/// The points must be nondecreasing; duplicates are dropped. Only the first and
/// last point may be infinite. A doubly infinite range is split at zero.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    cfg: QuadConfig,
) -> Result<Integral> {
    let mut pts: Vec<f64> = Vec::with_capacity(points.len() + 1);
    for &p in points {
        if p.is_nan() {
            return Err(Error::invalid("quadrature", "breakpoint", "NaN breakpoint"));
        }
        if pts.last().is_none_or(|&last| p > last) {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
        });
    }
    if pts.len() == 2 && pts[0] == f64::NEG_INFINITY && pts[1] == f64::INFINITY {
        pts.insert(1, 0.0);
    }

    let mut heap = BinaryHeap::new();
    let last = pts.len() - 2;
    for (i, w) in pts.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (map, lo, hi) = match (a.is_finite(), b.is_finite()) {
            (true, true) => (Map::Finite, a, b),
            (true, false) if i == last => (Map::Upper(a), 0.0, 1.0),
            (false, true) if i == 0 => (Map::Lower(b), 0.0, 1.0),
            _ => {
                return Err(Error::invalid(
                    "quadrature",
                    "breakpoint",
                    "infinite breakpoint in the interior of the range",
                ))
            }
        };
        let (value, error) = gk21(&f, map, lo, hi)?;
        heap.push(Segment {
            map,
            lo,
            hi,
            value,
            error,
        });
    }

    let mut done_value = 0.0;
    let mut done_error = 0.0;
    let mut intervals = heap.len();
    loop {
        let (mut value, mut error) = (done_value, done_error);
        for s in heap.iter() {
            value += s.value;
            error += s.error;
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol || heap.is_empty() {
            return Ok(Integral {
                value,
                abs_error: error,
                intervals,
            });
        }
        if intervals >= cfg.max_intervals {
            return Err(Error::Quadrature {
                estimate: value,
                abs_error: error,
            });
        }
        let Some(seg) = heap.pop() else {
            unreachable!()
        };
        let mid = 0.5 * (seg.lo + seg.hi);
        if !(mid > seg.lo && mid < seg.hi)
            || (seg.hi - seg.lo) < 1e-15 * (seg.lo.abs() + seg.hi.abs())
        {
            done_value += seg.value;
            done_error += seg.error;
            continue;
        }
        let (v1, e1) = gk21(&f, seg.map, seg.lo, mid)?;
        let (v2, e2) = gk21(&f, seg.map, mid, seg.hi)?;
        heap.push(Segment {
            map: seg.map,
            lo: seg.lo,
            hi: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            map: seg.map,
            lo: mid,
            hi: seg.hi,
            value: v2,
            error: e2,
        });
        intervals += 1;
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Σ exp(x_i)`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln |e^d − 1|`, accurate for both tiny and large `|d|`.
pub fn log_abs_expm1(d: f64) -> f64 {
    if d > 0.0 {
        d + (-(-d).exp_m1()).ln()
    } else if d < 0.0 {
        (-d.exp_m1()).ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn probe_points(lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let n = 64;
            for j in 0..n {
                pts.push(lo + (hi - lo) * (j as f64 + 0.5) / n as f64);
            }
        }
        (true, false) => {
            let mut j = -30;
            while j <= 1020 {
                let x = lo + 2f64.powi(j);
                if x > lo && x.is_finite() {
                    pts.push(x);
                }
                j += 1;
            }
        }
        (false, true) => {
            let mut j = -30;
            while j <= 1020 {
                let x = hi - 2f64.powi(j);
                if x < hi && x.is_finite() {
                    pts.push(x);
                }
                j += 1;
            }
            pts.reverse();
        }
        (false, false) => unreachable!("doubly infinite pieces are split first"),
    }
    pts
}

fn golden_max<F: Fn(f64) -> f64>(logf: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = logf(c);
    let mut fd = logf(d);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-12 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = logf(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = logf(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Locate the maximum of `logf` on `(lo, hi)` by probing and golden-section refinement.
fn locate_max<F: Fn(f64) -> f64>(logf: &F, lo: f64, hi: f64) -> (f64, f64) {
    let pts = probe_points(lo, hi);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let mut best_idx = 0;
    for (i, &x) in pts.iter().enumerate() {
        let y = logf(x);
        if y > best.1 {
            best = (x, y);
            best_idx = i;
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return best;
    }
    let left = if best_idx == 0 { lo } else { pts[best_idx - 1] };
    let right = if best_idx + 1 == pts.len() {
        hi
    } else {
        pts[best_idx + 1]
    };
    let left = if left.is_finite() {
        left
    } else {
        best.0 - 2.0 * (best.0.abs() + 1.0)
    };
    let right = if right.is_finite() {
        right
    } else {
        best.0 + 2.0 * (best.0.abs() + 1.0)
    };
    let refined = golden_max(logf, left, right);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

/// Walk outward from `x0` until `logf` drops `drop` below `peak`, or the bound is reached.
fn window_edge<F: Fn(f64) -> f64>(
    logf: &F,
    x0: f64,
    peak: f64,
    bound: f64,
    drop: f64,
) -> Option<f64> {
    let dir = if bound > x0 { 1.0 } else { -1.0 };
    let mut step = (x0.abs() * 1e-8).max(1e-10);
    for _ in 0..1100 {
        let x = x0 + dir * step;
        if (dir > 0.0 && x >= bound) || (dir < 0.0 && x <= bound) || !x.is_finite() {
            return None;
        }
        if logf(x) < peak - drop {
            return Some(x);
        }
        step *= 2.0;
    }
    None
}

/// Integrate `exp(logf)` over `[a, b]` and return the natural log of the result.
///
/// `hints` are extra breakpoints: kinks of the integrand or the location of
/// separate modes. Within each piece between consecutive breakpoints the
/// integrand is assumed unimodal (or monotone); its maximum is located
/// numerically and the integrand is rescaled by the global maximum before the
/// adaptive pass, so the order of magnitude of the result never matters.
pub fn log_integrate<F: Fn(f64) -> f64>(
    logf: F,
    a: f64,
    b: f64,
    hints: &[f64],
    cfg: QuadConfig,
) -> Result<LogIntegral> {
    if !(b > a) {
        return Ok(LogIntegral::ZERO);
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = hints
        .iter()
        .copied()
        .filter(|h| h.is_finite() && *h > a && *h < b)
        .collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    if a == f64::NEG_INFINITY && b == f64::INFINITY && pts.len() == 2 {
        pts.insert(1, 0.0);
    }
    pts.dedup();

    let guarded = |x: f64| {
        let y = logf(x);
        if y.is_nan() {
            f64::NEG_INFINITY
        } else {
            y
        }
    };

    let mut peaks = Vec::new();
    let mut global = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let (x, y) = locate_max(&guarded, w[0], w[1]);
        if y > global {
            global = y;
        }
        peaks.push((w[0], w[1], x, y));
    }
    if global == f64::NEG_INFINITY {
        return Ok(LogIntegral::ZERO);
    }
    if global == f64::INFINITY {
        return Err(Error::Quadrature {
            estimate: f64::INFINITY,
            abs_error: f64::INFINITY,
        });
    }

    let mut breaks = pts.clone();
    for &(lo, hi, x, y) in &peaks {
        if y == f64::NEG_INFINITY {
            continue;
        }
        breaks.push(x);
        if let Some(e) = window_edge(&guarded, x, y, hi, 46.0) {
            breaks.push(e);
        }
        if let Some(e) = window_edge(&guarded, x, y, lo, 46.0) {
            breaks.push(e);
        }
    }
    breaks.retain(|p| !p.is_nan());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let scaled = |x: f64| {
        let y = guarded(x) - global;
        if y == f64::INFINITY {
            f64::MAX
        } else {
            y.exp()
        }
    };
    // rounding in logf propagates as relative noise of about ε·|logf| into the integrand
    let mut cfg = cfg;
    cfg.rel_tol = cfg.rel_tol.max(16.0 * f64::EPSILON * global.abs());
    let res = integrate_breaks(scaled, &breaks, cfg)?;
    if res.value <= 0.0 {
        return Ok(LogIntegral::ZERO);
    }
    Ok(LogIntegral {
        log_value: global + res.value.ln(),
        rel_error: res.abs_error / res.value,
    })
}

/// `∫ x·exp(logf(x)) dx` split at zero into its positive and negative parts, each in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogIntegral {
    /// `ln ∫_{x>0} x·e^{logf}`
    pub pos: LogIntegral,
    /// `ln ∫_{x<0} |x|·e^{logf}`
    pub neg: LogIntegral,
}

impl SignedLogIntegral {
    pub fn value(&self) -> f64 {
        self.pos.value() - self.neg.value()
    }

    /// Value of the moment divided by `exp(log_scale)`.
    pub fn scaled(&self, log_scale: f64) -> f64 {
        (self.pos.log_value - log_scale).exp() - (self.neg.log_value - log_scale).exp()
    }

    pub fn abs_error(&self) -> f64 {
        self.pos.value() * self.pos.rel_error + self.neg.value() * self.neg.rel_error
    }
}

pub fn log_first_moment<F: Fn(f64) -> f64>(
    logf: F,
    a: f64,
    b: f64,
    hints: &[f64],
    cfg: QuadConfig,
) -> Result<SignedLogIntegral> {
    let pos = if b > 0.0 {
        log_integrate(|x| x.ln() + logf(x), a.max(0.0), b, hints, cfg)?
    } else {
        LogIntegral::ZERO
    };
    let neg = if a < 0.0 {
        log_integrate(|x| (-x).ln() + logf(x), a, b.min(0.0), hints, cfg)?
    } else {
        LogIntegral::ZERO
    };
    Ok(SignedLogIntegral { pos, neg })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, QuadConfig::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_over_the_line() {
        let r = integrate(
            |x: f64| (-0.5 * x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn power_law_tail() {
        // ∫_1^∞ x^{-1.5} = 2
        let r = integrate(
            |x: f64| x.powf(-1.5),
            1.0,
            f64::INFINITY,
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} = 2
        let r = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, QuadConfig::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn log_integral_of_far_gaussian_tail() {
        // ln ∫_40^∞ φ(x) dx ≈ ln φ(40) − ln 40 + ln(1 − 1/1600 + 3/40^4)
        let logphi = |x: f64| -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let r = log_integrate(logphi, 40.0, f64::INFINITY, &[], QuadConfig::default()).unwrap();
        let expected = logphi(40.0) - 40f64.ln() + (1.0 - 1.0 / 1600.0 + 3.0 / 40f64.powi(4)).ln();
        assert!(
            (r.log_value - expected).abs() < 1e-8,
            "{} vs {}",
            r.log_value,
            expected
        );
    }

    #[test]
    fn log_integral_finds_distant_peak() {
        // Unnormalized N(1e4, 1) on [0, ∞): ln √(2π)
        let r = log_integrate(
            |x: f64| -0.5 * (x - 1e4).powi(2) + 1e3,
            0.0,
            f64::INFINITY,
            &[],
            QuadConfig::default(),
        )
        .unwrap();
        let expected = 1e3 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!(
            (r.log_value - expected).abs() < 1e-9,
            "{} vs {}",
            r.log_value,
            expected
        );
    }

    #[test]
    fn log_integral_of_zero_function() {
        let r = log_integrate(|_| f64::NEG_INFINITY, 0.0, 1.0, &[], QuadConfig::default()).unwrap();
        assert_eq!(r.log_value, f64::NEG_INFINITY);
    }

    #[test]
    fn helpers() {
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_abs_expm1(1e-10) - (1e-10f64).ln()).abs() < 1e-9);
        assert!((log_abs_expm1(800.0) - 800.0).abs() < 1e-12);
        assert!((log_abs_expm1(-800.0)).abs() < 1e-12);
        assert_eq!(
            log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }
}
