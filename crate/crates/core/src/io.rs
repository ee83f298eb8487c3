//! File formats: dataset CSV with a JSON sidecar, JSON helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::{Label, LabeledFunctionalData};
use crate::error::{Error, Result};
use crate::eval::fmt17;
use crate::rkhs::{GeometrySet, VectorFieldRepr};
use crate::simgen::SimConfig;

/// `label,c1,...,cs` with labels written as 1 or 2.
pub fn dataset_to_csv(data: &LabeledFunctionalData) -> String {
    let mut out = String::from("label");
    for j in 1..=data.dim() {
        let _ = write!(out, ",c{j}");
    }
    out.push('\n');
    for (r, l) in data.labels.iter().enumerate() {
        out.push_str(&l.code().to_string());
        for v in data.coeffs.row(r).iter() {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV written by [`dataset_to_csv`]; the header line is optional.
pub fn dataset_from_csv(text: &str) -> Result<(DMatrix<f64>, Vec<Label>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("label")) {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let code = fields.next().unwrap_or_default();
        let label = Label::from_code(code).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("label must be 1 or 2, got '{code}'"),
        })?;
        let vals = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad number '{f}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {} coefficients, found {}", first.len(), vals.len()),
                });
            }
        }
        rows.push(vals);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no samples".into(),
        });
    }
    let s = rows[0].len();
    let coeffs = DMatrix::from_fn(rows.len(), s, |r, c| rows[r][c]);
    Ok((coeffs, labels))
}

/// Metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub samples: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SimConfig>,
    /// Path of a JSON array of per-sample fields, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
}

pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_geometry(path: &Path) -> Result<GeometrySet> {
    let fields: Vec<VectorFieldRepr> = read_json(path)?;
    GeometrySet::new(fields)
}

/// Loads a dataset CSV, attaching geometry from `geometry` or, failing
/// that, from the sidecar when one exists.
pub fn load_dataset(csv: &Path, geometry: Option<&Path>) -> Result<LabeledFunctionalData> {
    let (coeffs, labels) = dataset_from_csv(&fs::read_to_string(csv)?)?;
    let geom_path = match geometry {
        Some(p) => Some(p.to_path_buf()),
        None => {
            let side = sidecar_path(csv);
            if side.exists() {
                let meta: DatasetSidecar = read_json(&side)?;
                meta.geometry.map(|g| csv.parent().unwrap_or(Path::new(".")).join(g))
            } else {
                None
            }
        }
    };
    let geometry = match geom_path {
        Some(p) => Some(read_geometry(&p)?),
        None => None,
    };
    LabeledFunctionalData::new(coeffs, labels, geometry)
}
