//! Artifact writers and the observations wire format.
//!
//! Every file starts with a provenance header: `#`-prefixed lines in
//! delimited text and TOML, a `provenance` object in JSON. Floats in
//! delimited files use Rust's shortest round-trip scientific notation
//! (`{:e}`), so parsing a written value returns the identical `f64`.
//!
//! Observations file: header `s1,…,sd,u` for real data or
//! `s1,…,sd,u_re,u_im` for complex data, then one row per sample.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eigenmatrix::kernel::{Field, SampleSet, SpikeSignal};
use eigenmatrix::{Points, C64};
use serde::Serialize;

use crate::config::{Delimiter, RunConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Provenance {
            tool: "eigenmatrix".to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# tool: {} {}\n# config_hash: {}\n# seed: {}\n",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

fn file_err(path: &Path, message: impl ToString) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| file_err(path, e))
}

/// Shortest round-trip form; non-finite values as `inf`, `-inf`, `NaN`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Delimited table with a provenance header.
pub struct Table {
    delimiter: u8,
    text: String,
}

impl Table {
    pub fn new(prov: &Provenance, delimiter: Delimiter, columns: &[String]) -> Self {
        let mut t = Table {
            delimiter: delimiter.byte(),
            text: prov.header(),
        };
        t.row(columns);
        t
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(self.delimiter as char);
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn coord_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_observations(
    path: &Path,
    prov: &Provenance,
    delimiter: Delimiter,
    samples: &SampleSet,
    values: &[C64],
    field: Field,
) -> Result<(), IoError> {
    let mut cols = coord_columns("s", samples.dim());
    match field {
        Field::Real => cols.push("u".into()),
        Field::Complex => cols.extend(["u_re".to_owned(), "u_im".to_owned()]),
    }
    let mut t = Table::new(prov, delimiter, &cols);
    for (p, v) in samples.points.iter().zip(values) {
        let mut row: Vec<String> = p.iter().map(|&c| fmt_float(c)).collect();
        row.push(fmt_float(v.re));
        if field == Field::Complex {
            row.push(fmt_float(v.im));
        }
        t.row(&row);
    }
    write_text(path, &t.into_string())
}

/// Reads an observations file for a `d`-dimensional problem.
pub fn read_observations(path: &Path, d: usize, delimiter: Delimiter) -> Result<(SampleSet, Vec<C64>), IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| file_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| file_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let coords = coord_columns("s", d);
    let complex = if header[..] == [coords.clone(), vec!["u".to_owned()]].concat()[..] {
        false
    } else if header[..] == [coords.clone(), vec!["u_re".to_owned(), "u_im".to_owned()]].concat()[..] {
        true
    } else {
        return Err(file_err(
            path,
            format!(
                "header {:?} does not match {},u or {},u_re,u_im for d = {d}",
                header,
                coords.join(","),
                coords.join(",")
            ),
        ));
    };
    let mut pts = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| file_err(path, e))?;
        let nums = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| file_err(path, format!("data row {}: {e}", i + 1)))?;
        pts.extend_from_slice(&nums[..d]);
        values.push(C64::new(nums[d], if complex { nums[d + 1] } else { 0.0 }));
    }
    if values.is_empty() {
        return Err(file_err(path, "no data rows"));
    }
    let points = Points::new(d, pts).map_err(|e| file_err(path, e))?;
    let samples = SampleSet::new(points).map_err(|e| file_err(path, e))?;
    Ok((samples, values))
}

/// One row per estimated spike: index, matched true coordinates (`NaN`
/// when unknown), raw and refined coordinates, final weight.
pub fn spike_table(
    prov: &Provenance,
    delimiter: Delimiter,
    d: usize,
    truth: Option<(&SpikeSignal, &[Option<usize>])>,
    raw: &Points,
    refined: &Points,
    weights: &[C64],
) -> String {
    let mut cols = vec!["index".to_owned()];
    cols.extend(coord_columns("true_x", d));
    cols.extend(coord_columns("raw_x", d));
    cols.extend(coord_columns("refined_x", d));
    cols.extend(["weight_re".to_owned(), "weight_im".to_owned()]);
    let mut t = Table::new(prov, delimiter, &cols);
    for j in 0..raw.len() {
        let mut row = vec![j.to_string()];
        let matched = truth.and_then(|(sig, assign)| {
            assign
                .iter()
                .position(|a| *a == Some(j))
                .map(|k| sig.spikes.get(k).to_vec())
        });
        match matched {
            Some(p) => row.extend(p.iter().map(|&c| fmt_float(c))),
            None => row.extend((0..d).map(|_| "NaN".to_owned())),
        }
        row.extend(raw.get(j).iter().map(|&c| fmt_float(c)));
        row.extend(refined.get(j).iter().map(|&c| fmt_float(c)));
        let w = weights.get(j).copied().unwrap_or(C64::new(f64::NAN, f64::NAN));
        row.push(fmt_float(w.re));
        row.push(fmt_float(w.im));
        t.row(&row);
    }
    t.into_string()
}

/// JSON document `{"provenance": …, <key>: …}`.
pub fn json_record<T: Serialize>(prov: &Provenance, body: &T) -> String {
    let mut value = serde_json::to_value(body).expect("record serializes");
    let mut out = serde_json::Map::new();
    out.insert(
        "provenance".into(),
        serde_json::to_value(prov).expect("provenance serializes"),
    );
    match value.take() {
        serde_json::Value::Object(map) => out.extend(map),
        other => {
            out.insert("record".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(out)).expect("json");
    s.push('\n');
    s
}

pub fn config_echo(prov: &Provenance, cfg: &RunConfig) -> String {
    let mut s = prov.header();
    let _ = writeln!(s, "# effective configuration; all defaults filled in");
    s.push_str(&cfg.to_toml());
    s
}
