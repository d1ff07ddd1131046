//! Compact family grammar: `name[:p1,p2,...]`.
//!
//! | family              | parameters (defaults)         |
//! |---------------------|-------------------------------|
//! | `normal`            | `mu=0, sigma=1`               |
//! | `exponential`       | `rate=1`                      |
//! | `pareto`            | `shape` (required), `scale=1` |
//! | `student_t`         | `df` (required), `loc=0, scale=1` |
//! | `lognormal`         | `mu=0, sigma=1`               |
//! | `weibull_stretched` | `a` (required), `scale=1`     |
//! | `uniform`           | `a=0, b=1`                    |
//! | `point_mass`        | `x=0`                         |
//! | `empirical`         | a file path (`.json` or CSV)  |

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::*;
use crate::diagnostics::{ingest_samples, SampleFormat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    Exponential,
    Pareto,
    StudentT,
    Lognormal,
    WeibullStretched,
    Uniform,
    PointMass,
    Empirical,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Normal,
        Family::Exponential,
        Family::Pareto,
        Family::StudentT,
        Family::Lognormal,
        Family::WeibullStretched,
        Family::Uniform,
        Family::PointMass,
        Family::Empirical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Exponential => "exponential",
            Family::Pareto => "pareto",
            Family::StudentT => "student_t",
            Family::Lognormal => "lognormal",
            Family::WeibullStretched => "weibull_stretched",
            Family::Uniform => "uniform",
            Family::PointMass => "point_mass",
            Family::Empirical => "empirical",
        }
    }

    /// Parameter names and defaults (`None` = required).
    fn params(self) -> &'static [(&'static str, Option<f64>)] {
        match self {
            Family::Normal | Family::Lognormal => &[("mu", Some(0.0)), ("sigma", Some(1.0))],
            Family::Exponential => &[("rate", Some(1.0))],
            Family::Pareto => &[("shape", None), ("scale", Some(1.0))],
            Family::StudentT => &[("df", None), ("loc", Some(0.0)), ("scale", Some(1.0))],
            Family::WeibullStretched => &[("a", None), ("scale", Some(1.0))],
            Family::Uniform => &[("a", Some(0.0)), ("b", Some(1.0))],
            Family::PointMass => &[("x", Some(0.0))],
            Family::Empirical => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parsed family name with its full parameter list (defaults filled in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    pub params: Vec<f64>,
    /// Sample file for the empirical family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl FamilySpec {
    pub fn new(family: Family, params: Vec<f64>) -> Self {
        Self {
            family,
            params,
            path: None,
        }
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        if let Some(p) = &self.path {
            return write!(f, ":{p}");
        }
        if !self.params.is_empty() {
            let ps: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
            write!(f, ":{}", ps.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let fail = |column: usize, message: String| Error::SpecParse {
            input: input.to_string(),
            column,
            message,
        };
        let (name, rest) = match input.find(':') {
            Some(i) => (&input[..i], Some((i + 1, &input[i + 1..]))),
            None => (input, None),
        };
        let family = Family::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = Family::ALL.iter().map(|f| f.as_str()).collect();
                fail(
                    1,
                    format!(
                        "unknown family `{name}`; expected one of {}",
                        names.join(", ")
                    ),
                )
            })?;

        if family == Family::Empirical {
            return match rest {
                Some((_, path)) if !path.is_empty() => Ok(FamilySpec {
                    family,
                    params: vec![],
                    path: Some(path.to_string()),
                }),
                _ => Err(fail(
                    input.len() + 1,
                    "empirical needs a sample file: empirical:PATH".into(),
                )),
            };
        }

        let names = family.params();
        let mut given = Vec::new();
        if let Some((start, text)) = rest {
            let mut col = start;
            for piece in text.split(',') {
                let v: f64 = piece
                    .trim()
                    .parse()
                    .map_err(|_| fail(col + 1, format!("`{piece}` is not a number")))?;
                if given.len() == names.len() {
                    return Err(fail(
                        col + 1,
                        format!("{family} takes at most {} parameter(s)", names.len()),
                    ));
                }
                given.push(v);
                col += piece.len() + 1;
            }
        }
        let mut params = given;
        for &(pname, default) in &names[params.len()..] {
            match default {
                Some(d) => params.push(d),
                None => {
                    return Err(fail(
                        input.len() + 1,
                        format!("{family} requires parameter `{pname}`"),
                    ))
                }
            }
        }
        Ok(FamilySpec {
            family,
            params,
            path: None,
        })
    }
}

/// Build the law named by `spec`, validating its parameters.
pub fn make_distribution(spec: &FamilySpec) -> Result<Dist> {
    let p = &spec.params;
    let expected = spec.family.params().len();
    if p.len() != expected {
        return Err(Error::invalid(
            spec.family.as_str(),
            "params",
            format!("expected {expected} parameter(s), got {}", p.len()),
        ));
    }
    Ok(match spec.family {
        Family::Normal => Arc::new(Normal::new(p[0], p[1])?),
        Family::Exponential => Arc::new(Exponential::new(p[0])?),
        Family::Pareto => Arc::new(Pareto::new(p[0], p[1])?),
        Family::StudentT => Arc::new(StudentT::new(p[0], p[1], p[2])?),
        Family::Lognormal => Arc::new(LogNormal::new(p[0], p[1])?),
        Family::WeibullStretched => Arc::new(WeibullStretched::new(p[0], p[1])?),
        Family::Uniform => Arc::new(Uniform::new(p[0], p[1])?),
        Family::PointMass => Arc::new(PointMass::new(p[0])?),
        Family::Empirical => {
            let path = spec
                .path
                .as_deref()
                .ok_or_else(|| Error::invalid("empirical", "path", "missing sample file"))?;
            let format = if path.ends_with(".json") {
                SampleFormat::JsonArray
            } else {
                SampleFormat::CsvSingleColumn
            };
            let set = ingest_samples(Path::new(path), format)?;
            Arc::new(Empirical::new(&set.values, set.source)?)
        }
    })
}
