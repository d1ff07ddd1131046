//! CSV and JSON emission with a metadata block.
//!
//! CSV files start with `#` comment lines naming the artifact, its version and
//! the resolved config as one line of JSON, then a header row. Floats are
//! written with 17 significant digits. JSON documents carry the same block
//! under `"meta"`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

pub const ARTIFACT: &str = "goodhart-cli";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
}

impl Meta {
    pub fn new(command: &'static str, config: &impl Serialize) -> anyhow::Result<Self> {
        Ok(Meta {
            artifact: ARTIFACT,
            version: VERSION,
            command,
            config: serde_json::to_value(config)?,
        })
    }
}

pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// One CSV cell: a float, an integer, a string or an empty field.
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::F)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as u64)
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, meta: &Meta) -> anyhow::Result<String> {
        let mut out = String::new();
        writeln!(out, "# {} {}", meta.artifact, meta.version)?;
        writeln!(out, "# command: {}", meta.command)?;
        writeln!(out, "# config: {}", serde_json::to_string(&meta.config)?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::F(x) => fmt_float(*x),
                Cell::I(i) => i.to_string(),
                Cell::S(s) => s.clone(),
                Cell::Empty => String::new(),
            }))?;
        }
        out.push_str(&String::from_utf8(w.into_inner()?)?);
        Ok(out)
    }
}

pub fn render_json(meta: &Meta, body: impl Serialize) -> anyhow::Result<String> {
    let mut doc = json!({ "meta": meta });
    match serde_json::to_value(body)? {
        Value::Object(map) => doc.as_object_mut().expect("object").extend(map),
        other => {
            doc["result"] = other;
        }
    }
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Where artifacts go: a directory, or stdout for the primary one.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> anyhow::Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
        })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// The primary artifact is printed when there is no output directory.
    pub fn primary(&self, name: &str, text: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(_) => self.secondary(name, text),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }

    /// Secondary artifacts are only written to a directory.
    pub fn secondary(&self, name: &str, text: &str) -> anyhow::Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_meta_and_17_digits() {
        let meta = Meta::new("x", &json!({"a": 1})).unwrap();
        let mut t = Table::new(["t", "v", "n"]);
        t.push(vec![Cell::F(0.1), Cell::Empty, Cell::I(3)]);
        let s = t.render(&meta).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# goodhart-cli "));
        assert_eq!(lines[2], "# config: {\"a\":1}");
        assert_eq!(lines[3], "t,v,n");
        assert_eq!(lines[4], "1.0000000000000001e-1,,3");
        assert_eq!(
            lines[4].split(',').next().unwrap().parse::<f64>().unwrap(),
            0.1
        );
    }

    #[test]
    fn json_merges_body() {
        let meta = Meta::new("x", &json!({})).unwrap();
        let v: Value = serde_json::from_str(&render_json(&meta, json!({"k": 2})).unwrap()).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["meta"]["command"], "x");
    }
}
