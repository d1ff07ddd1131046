//! Config file loading and grid parsing.
//!
//! A config file is TOML with one optional table per subcommand, keyed by the
//! subcommand name. Keys mirror the long flags with `-` replaced by `_`:
//!
//! ```toml
//! [tilt-sweep]
//! base = "student_t:3"
//! gamma = 0.8
//! t = [10, 100, 1000, 10000]
//!
//! [condition-sweep]
//! t = "logspace:1e2:1e6:9"
//! ```
//!
//! Flags always win over the file.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    List(Vec<f64>),
    Text(String),
}

impl GridValue {
    pub fn resolve(&self, field: &str) -> anyhow::Result<Vec<f64>> {
        let grid = match self {
            GridValue::List(v) => v.clone(),
            GridValue::Text(s) => parse_grid(s, field)?,
        };
        check_sorted(&grid, field)?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltSection {
    pub base: Option<String>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub t: Option<GridValue>,
    pub allow_light: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSection {
    pub v: Option<String>,
    pub x: Option<String>,
    pub t: Option<GridValue>,
    pub h: Option<String>,
    pub p: Option<f64>,
    pub dependent: Option<bool>,
    pub ratio_c: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub input: Option<String>,
    pub builtin: Option<String>,
    pub alphabet: Option<usize>,
    pub max_len: Option<usize>,
    pub returns: Option<String>,
    pub atoms: Option<usize>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub t: Option<GridValue>,
    pub target_mean: Option<f64>,
    pub epsilon: Option<f64>,
    pub control_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsSection {
    pub input: Option<String>,
    pub format: Option<String>,
    pub k_grid: Option<KGridValue>,
    pub sample: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KGridValue {
    List(Vec<usize>),
    Text(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlSection {
    pub alpha: Option<f64>,
    pub log_q: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub only: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "tilt-sweep", default)]
    pub tilt_sweep: TiltSection,
    #[serde(rename = "condition-sweep", default)]
    pub condition_sweep: ConditionSection,
    #[serde(rename = "mdp-demo", default)]
    pub mdp_demo: MdpSection,
    #[serde(default)]
    pub tails: TailsSection,
    #[serde(rename = "kl-calc", default)]
    pub kl_calc: KlSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| invalid("config", path.display().to_string(), e.to_string()))
    }
}

/// `"10,100,1e3"`, `"logspace:A:B:N"` (geometric, endpoints included) or `"linspace:A:B:N"`.
pub fn parse_grid(s: &str, field: &str) -> anyhow::Result<Vec<f64>> {
    let s = s.trim();
    let num = |x: &str| -> anyhow::Result<f64> {
        x.trim()
            .parse::<f64>()
            .map_err(|_| invalid("grid", field, format!("`{x}` is not a number")))
    };
    if let Some(rest) = s
        .strip_prefix("logspace:")
        .or_else(|| s.strip_prefix("linspace:"))
    {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid(
                "grid",
                field,
                format!("`{s}` needs the form KIND:A:B:N"),
            ));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| invalid("grid", field, format!("`{}` is not a count", parts[2])))?;
        if n < 2 {
            return Err(invalid(
                "grid",
                field,
                "a spaced grid needs at least two points",
            ));
        }
        if s.starts_with("logspace") {
            if !(a > 0.0 && b > 0.0) {
                return Err(invalid(
                    "grid",
                    field,
                    "logspace endpoints must be positive",
                ));
            }
            Ok(logspace(a, b, n))
        } else {
            Ok((0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect())
        }
    } else {
        s.split(',')
            .filter(|x| !x.trim().is_empty())
            .map(num)
            .collect()
    }
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.log10(), b.log10());
    (0..n)
        .map(|i| {
            if i == 0 {
                return a;
            }
            if i == n - 1 {
                return b;
            }
            let e = la + (lb - la) * i as f64 / (n - 1) as f64;
            // integral decades parse exactly
            if (e - e.round()).abs() < 1e-9 {
                format!("1e{}", e.round() as i64)
                    .parse()
                    .unwrap_or(10f64.powf(e))
            } else {
                10f64.powf(e)
            }
        })
        .collect()
}

pub fn check_sorted(grid: &[f64], field: &str) -> anyhow::Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", field, "grid is empty"));
    }
    if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
        return Err(invalid("grid", field, format!("non-finite value {x}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", field, "grid must be strictly increasing"));
    }
    Ok(())
}

/// `"auto"` (`None`) or a comma list of order-statistic counts.
pub fn parse_k_grid(v: &KGridValue) -> anyhow::Result<Option<Vec<usize>>> {
    let ks = match v {
        KGridValue::Text(s) if s.trim() == "auto" => return Ok(None),
        KGridValue::Text(s) => s
            .split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| invalid("grid", "k-grid", format!("`{x}` is not a count")))
            })
            .collect::<anyhow::Result<Vec<_>>>()?,
        KGridValue::List(v) => v.clone(),
    };
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) || ks[0] == 0 {
        return Err(invalid(
            "grid",
            "k-grid",
            "k values must be positive and strictly increasing",
        ));
    }
    Ok(Some(ks))
}
