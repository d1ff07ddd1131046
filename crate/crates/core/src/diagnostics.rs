//! Tail diagnostics for observed reward samples.
//!
//! Hill curves with standard errors, normal and exponential probability plots,
//! a deterministic light/heavy verdict and sample file ingestion.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, source: impl Into<String>, seed: Option<u64>) -> Result<Self> {
        let source = source.into();
        if values.is_empty() {
            return Err(Error::EmptySamples(source));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "sample set",
                "values",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(Self {
            values,
            source,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    CsvSingleColumn,
    JsonArray,
}

impl FromStr for SampleFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv_single_column" | "csv" => Ok(SampleFormat::CsvSingleColumn),
            "json_array" | "json" => Ok(SampleFormat::JsonArray),
            other => Err(Error::invalid(
                "sample format",
                "format",
                format!("unknown format `{other}`"),
            )),
        }
    }
}

impl fmt::Display for SampleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleFormat::CsvSingleColumn => "csv_single_column",
            SampleFormat::JsonArray => "json_array",
        })
    }
}

/// Read a sample file. Rows and columns in errors are 1-based.
pub fn ingest_samples(path: &Path, format: SampleFormat) -> Result<SampleSet> {
    let label = path.display().to_string();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let bad = |row: usize, column: usize, message: String| Error::SampleParse {
        path: label.clone(),
        row,
        column,
        message,
    };
    let mut values = Vec::new();
    match format {
        SampleFormat::CsvSingleColumn => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| match e.into_kind() {
                    csv::ErrorKind::Io(err) => io(err),
                    other => bad(0, 0, format!("{other:?}")),
                })?;
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| bad(row, 1, e.to_string()))?;
                if rec.len() != 1 {
                    return Err(bad(
                        row,
                        2,
                        format!("expected one column, found {}", rec.len()),
                    ));
                }
                let text = &rec[0];
                let v: f64 = text
                    .parse()
                    .map_err(|_| bad(row, 1, format!("`{text}` is not a number")))?;
                if !v.is_finite() {
                    return Err(bad(row, 1, format!("non-finite value `{text}`")));
                }
                values.push(v);
            }
        }
        SampleFormat::JsonArray => {
            let text = fs::read_to_string(path).map_err(io)?;
            let items: Vec<serde_json::Value> = serde_json::from_str(&text)
                .map_err(|e| bad(e.line(), e.column(), e.to_string()))?;
            for (i, item) in items.iter().enumerate() {
                match item.as_f64() {
                    Some(v) if v.is_finite() => values.push(v),
                    _ => return Err(bad(i + 1, 1, format!("`{item}` is not a finite number"))),
                }
            }
        }
    }
    SampleSet::new(values, label, None)
}

/// Write values so that [`ingest_samples`] reads back identical bits.
pub fn write_samples(path: &Path, values: &[f64], format: SampleFormat) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    match format {
        SampleFormat::CsvSingleColumn => {
            for v in values {
                writeln!(out, "{v:?}").map_err(io)?;
            }
        }
        SampleFormat::JsonArray => {
            serde_json::to_writer(&mut out, values)?;
        }
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillPoint {
    pub k: usize,
    pub estimate: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillCurve {
    pub points: Vec<HillPoint>,
    /// Amount subtracted from every sample before taking logs.
    pub shift: f64,
}

/// Hill estimate from ascending `sorted` values using the top `k` order statistics.
pub fn hill_at(sorted: &[f64], k: usize, shift: f64) -> Result<f64> {
    let n = sorted.len();
    if k < 1 || k >= n {
        return Err(Error::invalid(
            "hill_estimator",
            "k",
            format!("k={k} must lie in [1, {})", n),
        ));
    }
    let threshold = sorted[n - k - 1] - shift;
    let mut sum = 0.0;
    for &x in &sorted[n - k..] {
        let x = x - shift;
        if x == threshold {
            continue;
        }
        if !(threshold > 0.0) {
            return Err(Error::InsufficientPositiveTail { k, threshold });
        }
        sum += (x / threshold).ln();
    }
    Ok(sum / k as f64)
}

/// Twenty log-spaced values from 10 to `n/10`, deduplicated.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let hi = (n / 10).max(2).min(n.saturating_sub(1));
    let lo = 10.min(hi);
    let mut ks: Vec<usize> = (0..20)
        .map(|i| {
            let f = (lo as f64).ln() + ((hi as f64).ln() - (lo as f64).ln()) * i as f64 / 19.0;
            f.exp().round() as usize
        })
        .filter(|&k| k >= 2 && k < n)
        .collect();
    ks.dedup();
    ks
}

/// Median shift applied before Hill: none for strictly positive samples.
pub fn hill_shift(sorted: &[f64]) -> f64 {
    if sorted[0] > 0.0 {
        0.0
    } else {
        median_sorted(sorted)
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn hill_estimator(s: &SampleSet, k_grid: Option<&[usize]>) -> Result<HillCurve> {
    let sorted = s.sorted();
    let n = sorted.len();
    let grid = match k_grid {
        Some(g) => g.to_vec(),
        None => default_k_grid(n),
    };
    if grid.is_empty() {
        return Err(Error::invalid(
            "hill_estimator",
            "k_grid",
            "no usable k values",
        ));
    }
    if let Some(&k) = grid.iter().find(|&&k| k < 2 || k >= n) {
        return Err(Error::invalid(
            "hill_estimator",
            "k_grid",
            format!("k={k} must satisfy 2 <= k < n={n}"),
        ));
    }
    let shift = hill_shift(&sorted);
    let points = grid
        .iter()
        .map(|&k| {
            let estimate = hill_at(&sorted, k, shift)?;
            Ok(HillPoint {
                k,
                estimate,
                standard_error: estimate / (k as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HillCurve { points, shift })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Normal,
    ExponentialRightHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    BendingUp,
    BendingDown,
    Straight,
}

impl Curvature {
    fn of_ratio(r: f64) -> Curvature {
        if r > 1.0 + CURVATURE_BAND {
            Curvature::BendingUp
        } else if r < 1.0 - CURVATURE_BAND {
            Curvature::BendingDown
        } else {
            Curvature::Straight
        }
    }
}

const CURVATURE_BAND: f64 = 0.05;
const EXTREME_POINTS: usize = 10;
const STABILITY_LIMIT: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPlot {
    pub kind: PlotKind,
    /// `(theoretical, empirical)` quantile pairs, sorted.
    pub pairs: Vec<(f64, f64)>,
    /// Squared correlation of the pairs.
    pub r_squared: f64,
    /// Exponential kind: slope of the upper half of the plot over the slope of the lower half.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_ratio: Option<f64>,
    /// Exponential kind: slope through the last ten points over the lower-half slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extreme_slope_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Curvature>,
}

fn ols_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn r_squared(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return if sxx == syy { 1.0 } else { 0.0 };
    }
    (sxy * sxy / (sxx * syy)).min(1.0)
}

/// Quantile-quantile pairs at plotting positions `(i − 0.5)/n`.
pub fn probability_plot(s: &SampleSet, kind: PlotKind) -> Result<ProbabilityPlot> {
    if s.len() < 20 {
        return Err(Error::invalid(
            "probability_plot",
            "samples",
            format!("need n >= 20, got {}", s.len()),
        ));
    }
    let sorted = s.sorted();
    match kind {
        PlotKind::Normal => {
            let n = sorted.len() as f64;
            let pairs: Vec<(f64, f64)> = sorted
                .iter()
                .enumerate()
                .map(|(i, &y)| (norm_quantile((i as f64 + 0.5) / n), y))
                .collect();
            Ok(ProbabilityPlot {
                kind,
                r_squared: r_squared(&pairs),
                pairs,
                slope_ratio: None,
                extreme_slope_ratio: None,
                curvature: None,
            })
        }
        PlotKind::ExponentialRightHalf => {
            let med = median_sorted(&sorted);
            let right: Vec<f64> = sorted.iter().copied().filter(|&v| v > med).collect();
            let m = right.len();
            if m < 2 * EXTREME_POINTS {
                return Err(Error::invalid(
                    "probability_plot",
                    "samples",
                    "too few values above the median",
                ));
            }
            let pairs: Vec<(f64, f64)> = right
                .iter()
                .enumerate()
                .map(|(i, &y)| (-(-(i as f64 + 0.5) / m as f64).ln_1p(), y))
                .collect();
            let lower = ols_slope(&pairs[..m / 2]);
            let upper = ols_slope(&pairs[m / 2..]);
            let extreme = ols_slope(&pairs[m - EXTREME_POINTS..]);
            let ratio = upper / lower;
            Ok(ProbabilityPlot {
                kind,
                r_squared: r_squared(&pairs),
                pairs,
                slope_ratio: Some(ratio),
                extreme_slope_ratio: Some(extreme / lower),
                curvature: Some(Curvature::of_ratio(ratio)),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentWithLight,
    ConsistentWithHeavy,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub trace: Vec<RuleOutcome>,
}

/// Relative change of the Hill estimate from the first to the last point of the upper half of the k-grid.
pub fn hill_relative_change(curve: &HillCurve) -> f64 {
    let pts = &curve.points;
    let top = &pts[pts.len() / 2..];
    let (first, last) = (top[0].estimate, top[top.len() - 1].estimate);
    if last == first {
        0.0
    } else if last == 0.0 {
        f64::INFINITY
    } else {
        ((last - first) / last).abs()
    }
}

/// Limit on [`hill_relative_change`]: 10%, or three standard errors of the
/// difference between the two nested endpoint estimates when that is larger.
pub fn hill_stability_limit(curve: &HillCurve) -> f64 {
    let pts = &curve.points;
    let top = &pts[pts.len() / 2..];
    let (k1, k2) = (top[0].k as f64, top[top.len() - 1].k as f64);
    let noise = if k2 > k1 {
        3.0 * (1.0 / k1 - 1.0 / k2).sqrt()
    } else {
        0.0
    };
    STABILITY_LIMIT.max(noise)
}

/// Heavy: Hill stabilizes and the exponential plot bends up.
/// Light: Hill does not stabilize, the plot bends down and its last ten points do not bend up.
/// Anything else is ambiguous.
pub fn tail_verdict(hill: &HillCurve, exp_plot: &ProbabilityPlot) -> Result<VerdictReport> {
    if hill.points.is_empty() {
        return Err(Error::invalid("tail_verdict", "hill_curve", "empty curve"));
    }
    let (Some(ratio), Some(extreme)) = (exp_plot.slope_ratio, exp_plot.extreme_slope_ratio) else {
        return Err(Error::invalid(
            "tail_verdict",
            "exp_qq",
            "need the exponential right-half plot",
        ));
    };
    let change = hill_relative_change(hill);
    let limit = hill_stability_limit(hill);
    let stable = change < limit;
    let up = ratio > 1.0 + CURVATURE_BAND;
    let down = ratio < 1.0 - CURVATURE_BAND;
    let extreme_up = extreme > 1.0 + CURVATURE_BAND;
    let trace = vec![
        RuleOutcome {
            rule: "hill_stabilizes".into(),
            value: change,
            threshold: limit,
            passed: stable,
        },
        RuleOutcome {
            rule: "exp_plot_bends_up".into(),
            value: ratio,
            threshold: 1.0 + CURVATURE_BAND,
            passed: up,
        },
        RuleOutcome {
            rule: "exp_plot_bends_down".into(),
            value: ratio,
            threshold: 1.0 - CURVATURE_BAND,
            passed: down,
        },
        RuleOutcome {
            rule: "extreme_points_bend_up".into(),
            value: extreme,
            threshold: 1.0 + CURVATURE_BAND,
            passed: extreme_up,
        },
    ];
    let verdict = if stable && up {
        Verdict::ConsistentWithHeavy
    } else if !stable && down && !extreme_up {
        Verdict::ConsistentWithLight
    } else {
        Verdict::Ambiguous
    };
    Ok(VerdictReport { verdict, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub source: String,
    pub n: usize,
    pub hill_curve: HillCurve,
    pub normal_qq: ProbabilityPlot,
    pub exp_qq: ProbabilityPlot,
    pub verdict: VerdictReport,
}

pub fn tail_report(s: &SampleSet, k_grid: Option<&[usize]>) -> Result<TailReport> {
    let hill_curve = hill_estimator(s, k_grid)?;
    let normal_qq = probability_plot(s, PlotKind::Normal)?;
    let exp_qq = probability_plot(s, PlotKind::ExponentialRightHalf)?;
    let verdict = tail_verdict(&hill_curve, &exp_qq)?;
    Ok(TailReport {
        source: s.source.clone(),
        n: s.len(),
        hill_curve,
        normal_qq,
        exp_qq,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Distribution, Normal, Pareto};
    use crate::rng::stream_rng;

    fn pareto_grid(alpha: f64, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| (1.0 - (i as f64 - 0.5) / n as f64).powf(-1.0 / alpha))
            .collect()
    }

    fn set(values: Vec<f64>) -> SampleSet {
        SampleSet::new(values, "test", None).unwrap()
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        for &alpha in &[1.0, 1.5, 2.0] {
            let s = set(pareto_grid(alpha, 100_000));
            let c = hill_estimator(&s, Some(&[100, 1000])).unwrap();
            assert!(
                (c.points[0].estimate - 1.0 / alpha).abs() < 0.02,
                "{alpha}: {:?}",
                c.points[0]
            );
            assert!((c.points[0].standard_error - c.points[0].estimate / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hill_constant_sample_is_zero() {
        let s = set(vec![3.0; 50]);
        let c = hill_estimator(&s, Some(&[5, 10])).unwrap();
        assert!(c.points.iter().all(|p| p.estimate == 0.0));
    }

    #[test]
    fn hill_rejects_bad_k_and_nonpositive_tail() {
        let s = set(vec![1.0, 2.0, 3.0]);
        assert!(hill_estimator(&s, Some(&[3])).is_err());
        assert!(hill_estimator(&s, Some(&[1])).is_err());
        let sorted = vec![-3.0, -2.0, -1.0, 5.0];
        assert!(matches!(
            hill_at(&sorted, 2, 0.0),
            Err(Error::InsufficientPositiveTail { .. })
        ));
    }

    #[test]
    fn default_grid_shape() {
        let g = default_k_grid(100_000);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 10);
        assert_eq!(*g.last().unwrap(), 10_000);
    }

    #[test]
    fn exact_normal_grid_is_perfectly_linear() {
        let n = 1000;
        let xs: Vec<f64> = (0..n)
            .map(|i| norm_quantile((i as f64 + 0.5) / n as f64))
            .collect();
        let p = probability_plot(&set(xs), PlotKind::Normal).unwrap();
        assert!((p.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_plot_is_affine_invariant() {
        let xs = Normal::standard().sample(&mut stream_rng(3, 0), 5000);
        let ys: Vec<f64> = xs.iter().map(|x| 3.5 * x - 7.0).collect();
        let a = probability_plot(&set(xs), PlotKind::Normal)
            .unwrap()
            .r_squared;
        let b = probability_plot(&set(ys), PlotKind::Normal)
            .unwrap()
            .r_squared;
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 0.999);
    }

    #[test]
    fn curvature_directions() {
        let heavy = Pareto::new(1.5, 1.0)
            .unwrap()
            .sample(&mut stream_rng(4, 0), 20_000);
        let p = probability_plot(&set(heavy), PlotKind::ExponentialRightHalf).unwrap();
        assert_eq!(p.curvature, Some(Curvature::BendingUp));
        let light = Normal::standard().sample(&mut stream_rng(4, 1), 20_000);
        let p = probability_plot(&set(light), PlotKind::ExponentialRightHalf).unwrap();
        assert_eq!(p.curvature, Some(Curvature::BendingDown));
        assert!(p
            .pairs
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn too_few_points_for_plot() {
        assert!(probability_plot(&set(vec![1.0; 19]), PlotKind::Normal).is_err());
    }

    #[test]
    fn verdicts_and_determinism() {
        let heavy = set(Pareto::new(1.5, 1.0)
            .unwrap()
            .sample(&mut stream_rng(9, 0), 100_000));
        let r1 = tail_report(&heavy, None).unwrap();
        let r2 = tail_report(&heavy, None).unwrap();
        assert_eq!(r1.verdict.verdict, Verdict::ConsistentWithHeavy);
        assert_eq!(r1.verdict, r2.verdict);
        let light = set(Normal::standard().sample(&mut stream_rng(9, 1), 100_000));
        assert_eq!(
            tail_report(&light, None).unwrap().verdict.verdict,
            Verdict::ConsistentWithLight
        );
    }

    #[test]
    fn exponential_samples_do_not_stabilize() {
        let d = crate::distributions::Exponential::new(1.0).unwrap();
        let s = set(d.sample(&mut stream_rng(12, 0), 100_000));
        let c = hill_estimator(&s, None).unwrap();
        assert!(hill_relative_change(&c) >= hill_stability_limit(&c));
    }

    #[test]
    fn stability_limit_tracks_sampling_noise() {
        let curve = |ks: &[usize]| HillCurve {
            points: ks
                .iter()
                .map(|&k| HillPoint {
                    k,
                    estimate: 1.0,
                    standard_error: 0.0,
                })
                .collect(),
            shift: 0.0,
        };
        let lim = hill_stability_limit(&curve(&[10, 100, 1000]));
        assert!((lim - 3.0 * (1.0f64 / 100.0 - 1.0 / 1000.0).sqrt()).abs() < 1e-15);
        assert_eq!(
            hill_stability_limit(&curve(&[10_000, 100_000])),
            STABILITY_LIMIT
        );
        assert_eq!(hill_stability_limit(&curve(&[50])), STABILITY_LIMIT);
    }

    #[test]
    fn nan_row_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "NaN\n2.0\n").unwrap();
        match ingest_samples(&p, SampleFormat::CsvSingleColumn) {
            Err(Error::SampleParse { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "1.0\n2.0\n3.0").unwrap();
        assert_eq!(
            ingest_samples(&p, SampleFormat::CsvSingleColumn)
                .unwrap()
                .values,
            vec![1.0, 2.0, 3.0]
        );
        std::fs::write(&p, "").unwrap();
        assert!(matches!(
            ingest_samples(&p, SampleFormat::CsvSingleColumn),
            Err(Error::EmptySamples(_))
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let xs = Normal::standard().sample(&mut stream_rng(21, 0), 10_000);
        for fmt in [SampleFormat::CsvSingleColumn, SampleFormat::JsonArray] {
            let p = dir.path().join(format!("s.{fmt}"));
            write_samples(&p, &xs, fmt).unwrap();
            let back = ingest_samples(&p, fmt).unwrap();
            assert!(xs
                .iter()
                .zip(&back.values)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
