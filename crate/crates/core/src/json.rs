//! Theory and circuit file formats.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backends::{ClassicalOperation, OperationBody, QuantumOperation};
use crate::circuit::Fragment;
use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};
use crate::theory::{BackendKind, FiducialData, FiducialSpec, Theory};

#[derive(Debug, Serialize, Deserialize)]
struct TheoryFile {
    types: BTreeMap<String, TypeDecl>,
    #[serde(default)]
    operations: BTreeMap<String, OperationDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TypeDecl {
    backend: BackendKind,
    dim: usize,
    #[serde(default = "default_fiducials_decl")]
    fiducials: serde_json::Value,
}

fn default_fiducials_decl() -> serde_json::Value {
    serde_json::Value::String("default".to_string())
}

#[derive(Debug, Serialize, Deserialize)]
struct OperationDecl {
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    outcomes: BTreeMap<String, BodyDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BodyDecl {
    #[serde(skip_serializing_if = "Option::is_none")]
    classical_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kraus: Option<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<Mat> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Malformed {
            what,
            context: "ragged matrix rows".to_string(),
        });
    }
    Ok(Mat::from_rows(rows))
}

fn cmatrix_from_rows(rows: &[Vec<[f64; 2]>], what: &'static str) -> Result<CMat> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Malformed {
            what,
            context: "ragged matrix rows".to_string(),
        });
    }
    let mut m = CMat::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, [re, im]) in row.iter().enumerate() {
            m[(i, j)] = Complex64::new(*re, *im);
        }
    }
    Ok(m)
}

fn fiducial_spec(backend: BackendKind, decl: &serde_json::Value) -> Result<FiducialSpec> {
    match decl {
        serde_json::Value::String(s) if s == "default" => Ok(FiducialSpec::Default),
        serde_json::Value::Object(map) => {
            let get = |key: &str| -> Result<&serde_json::Value> {
                map.get(key).ok_or(Error::Malformed {
                    what: "fiducial declaration",
                    context: format!("missing `{key}`"),
                })
            };
            match backend {
                BackendKind::Classical => {
                    let preparations: Vec<Vec<f64>> =
                        serde_json::from_value(get("preparations")?.clone()).map_err(|e| {
                            Error::Malformed {
                                what: "fiducial declaration",
                                context: e.to_string(),
                            }
                        })?;
                    let effects: Vec<Vec<f64>> = serde_json::from_value(get("effects")?.clone())
                        .map_err(|e| Error::Malformed {
                            what: "fiducial declaration",
                            context: e.to_string(),
                        })?;
                    Ok(FiducialSpec::Explicit(FiducialData::Classical {
                        preparations,
                        effects,
                    }))
                }
                BackendKind::Quantum => {
                    let preparations: Vec<Vec<Vec<[f64; 2]>>> =
                        serde_json::from_value(get("preparations")?.clone()).map_err(|e| {
                            Error::Malformed {
                                what: "fiducial declaration",
                                context: e.to_string(),
                            }
                        })?;
                    let effects: Vec<Vec<Vec<[f64; 2]>>> =
                        serde_json::from_value(get("effects")?.clone()).map_err(|e| {
                            Error::Malformed {
                                what: "fiducial declaration",
                                context: e.to_string(),
                            }
                        })?;
                    Ok(FiducialSpec::Explicit(FiducialData::Quantum {
                        preparations: preparations
                            .iter()
                            .map(|m| cmatrix_from_rows(m, "fiducial declaration"))
                            .collect::<Result<_>>()?,
                        effects: effects
                            .iter()
                            .map(|m| cmatrix_from_rows(m, "fiducial declaration"))
                            .collect::<Result<_>>()?,
                    }))
                }
            }
        }
        other => Err(Error::Malformed {
            what: "fiducial declaration",
            context: format!("expected \"default\" or an object, got {other}"),
        }),
    }
}

/// Build a theory from its JSON file representation.
pub fn theory_from_json(text: &str) -> Result<Theory> {
    let file: TheoryFile = serde_json::from_str(text).map_err(|e| Error::Malformed {
        what: "theory JSON",
        context: e.to_string(),
    })?;
    let mut theory = Theory::new();
    for (name, decl) in &file.types {
        let spec = fiducial_spec(decl.backend, &decl.fiducials)?;
        theory.register_type(name, decl.backend, decl.dim, spec)?;
    }
    for (apparatus, decl) in &file.operations {
        let mut outcomes = BTreeMap::new();
        for (label, body) in &decl.outcomes {
            let body = match (&body.classical_matrix, &body.kraus) {
                (Some(rows), None) => OperationBody::Classical(ClassicalOperation::new(
                    &decl.inputs,
                    &decl.outputs,
                    matrix_from_rows(rows, "classical_matrix")?,
                )?),
                (None, Some(kraus)) => OperationBody::Quantum(QuantumOperation::new(
                    &decl.inputs,
                    &decl.outputs,
                    kraus
                        .iter()
                        .map(|m| cmatrix_from_rows(m, "kraus"))
                        .collect::<Result<_>>()?,
                )?),
                _ => {
                    return Err(Error::Malformed {
                        what: "operation body",
                        context: format!(
                            "outcome `{label}` of `{apparatus}` must have exactly one of \
                             `classical_matrix` or `kraus`"
                        ),
                    })
                }
            };
            outcomes.insert(label.clone(), body);
        }
        let inputs: Vec<&str> = decl.inputs.iter().map(|s| s.as_str()).collect();
        let outputs: Vec<&str> = decl.outputs.iter().map(|s| s.as_str()).collect();
        theory.register_operation(apparatus, &inputs, &outputs, outcomes)?;
    }
    Ok(theory)
}

/// Parse a circuit/fragment from its JSON representation
/// (`{"instances": {...}, "wires": [...]}`).
pub fn fragment_from_json(text: &str) -> Result<Fragment> {
    serde_json::from_str(text).map_err(|e| Error::Malformed {
        what: "circuit JSON",
        context: e.to_string(),
    })
}

/// Serialize a fragment to JSON with stable key ordering.
pub fn fragment_to_json(fragment: &Fragment) -> String {
    serde_json::to_string_pretty(fragment).expect("fragment serializes")
}
