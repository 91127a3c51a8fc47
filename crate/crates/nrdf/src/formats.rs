//! On-disk formats.
//!
//! JSON documents carry `schema_version`. Kernels and joint measures store
//! probabilities as flat row-major arrays:
//!
//! ```json
//! {"schema_version": 1,
//!  "inputs": [{"size": 2}, {"size": 2}], "output": {"size": 2},
//!  "matrix": [0.96, 0.04, 0.75, 0.25, 0.25, 0.75, 0.04, 0.96]}
//! ```
//!
//! Rows of a kernel enumerate the input tuple with the last input varying
//! fastest. A joint measure lists `axes` (`name`, `size`) and a `table` with
//! the last axis varying fastest.
//!
//! CSV files follow RFC 4180 (header row, CRLF line ends) and print reals
//! with 17 significant digits so they parse back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nrdf_core::probability::{Alphabet, Axis, JointMeasure, StochasticKernel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Row sums further than this from one are reported as defects.
pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphabetJson {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl AlphabetJson {
    fn from_alphabet(a: &Alphabet) -> Self {
        AlphabetJson { size: a.size(), labels: a.labels().map(<[String]>::to_vec) }
    }

    fn to_alphabet(&self) -> Result<Alphabet> {
        Ok(match &self.labels {
            Some(l) => Alphabet::with_labels(l.clone())?,
            None => Alphabet::new(self.size)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelJson {
    pub schema_version: u32,
    pub inputs: Vec<AlphabetJson>,
    pub output: AlphabetJson,
    pub matrix: Vec<f64>,
}

impl KernelJson {
    pub fn from_kernel(k: &StochasticKernel) -> Self {
        KernelJson {
            schema_version: SCHEMA_VERSION,
            inputs: k.input().iter().map(AlphabetJson::from_alphabet).collect(),
            output: AlphabetJson::from_alphabet(k.output()),
            matrix: k.matrix().to_vec(),
        }
    }

    /// Validating conversion; a bad row surfaces as a normalization error.
    pub fn to_kernel(&self) -> Result<StochasticKernel> {
        let inputs = self.inputs.iter().map(AlphabetJson::to_alphabet).collect::<Result<Vec<_>>>()?;
        Ok(StochasticKernel::new(inputs, self.output.to_alphabet()?, self.matrix.clone())?)
    }

    /// Rows that are not probability vectors, with their sums.
    pub fn row_defects(&self) -> Vec<(usize, f64)> {
        let cols = self.output.size.max(1);
        self.matrix
            .chunks(cols)
            .enumerate()
            .filter_map(|(r, row)| {
                let sum: f64 = row.iter().sum();
                let bad = (sum - 1.0).abs() > ROW_TOL || row.iter().any(|v| !(*v >= 0.0));
                bad.then_some((r, sum))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisJson {
    pub name: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointJson {
    pub schema_version: u32,
    pub axes: Vec<AxisJson>,
    pub table: Vec<f64>,
}

impl JointJson {
    pub fn from_joint(j: &JointMeasure) -> Self {
        JointJson {
            schema_version: SCHEMA_VERSION,
            axes: j.axes().iter().map(|a| AxisJson { name: a.name.clone(), size: a.size }).collect(),
            table: j.table().to_vec(),
        }
    }

    pub fn to_joint(&self) -> Result<JointMeasure> {
        let axes = self.axes.iter().map(|a| Axis::new(a.name.clone(), a.size)).collect();
        Ok(JointMeasure::new(axes, self.table.clone())?)
    }
}

#[derive(Deserialize)]
struct Versioned {
    schema_version: u32,
}

/// Reads a JSON document, rejecting unknown schema versions.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let what = || path.display().to_string();
    let v: Versioned =
        serde_json::from_str(&text).map_err(|e| CliError::Format { what: what(), message: e.to_string() })?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(CliError::Format {
            what: what(),
            message: format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", v.schema_version),
        });
    }
    serde_json::from_str(&text).map_err(|e| CliError::Format { what: what(), message: e.to_string() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Format { what: path.display().to_string(), message: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// 17 significant digits, round-trip exact.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(BufWriter::new(file));
    let fail = |e: csv::Error| CliError::Format { what: path.display().to_string(), message: e.to_string() };
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    let mut inner = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}
