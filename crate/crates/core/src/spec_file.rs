//! JSON cascade description: loading, validation and serialisation.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{reindex, CascadeModel, OscillatorParams};
use crate::error::{Error, Result};
use crate::matcore::{AntisymmetricMatrix, SymmetricMatrix};
use crate::sensitivity::{OscillatorUncertainty, UncertaintyModel};

/// Largest entrywise asymmetry accepted in an energy matrix.
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OscillatorEntry {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum UncertaintyEntry {
    Bounds { a: f64, b: f64 },
    Sigma { sigma: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptionsEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax: Option<usize>,
}

/// On-disk layout of a cascade description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub field_channels: usize,
    pub oscillators: Vec<OscillatorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Vec<UncertaintyEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsEntry>,
}

/// Validated cascade description.
#[derive(Clone, Debug)]
pub struct CascadeSpec {
    pub field_channels: usize,
    pub oscillators: Vec<OscillatorParams>,
    pub uncertainty: Option<UncertaintyModel>,
    pub options: OptionsEntry,
    /// Human-readable notes on every default that was filled in.
    pub defaults_applied: Vec<String>,
    /// SHA-256 of the source text.
    pub input_sha256: String,
}

impl CascadeSpec {
    pub fn cascade(&self) -> Result<CascadeModel> {
        CascadeModel::assemble(self.oscillators.clone())
    }

    /// Uncertainty bounds `(a_k, b_k)` when every oscillator is described by bounds.
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        self.uncertainty.as_ref()?.blocks.iter().map(|b| b.bounds()).collect()
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn to_matrix(rows: &[Vec<f64>], path: &str, shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(schema(path, "rows have different lengths"));
    }
    if (r, c) != shape {
        return Err(Error::dim(path, format!("{}x{}", shape.0, shape.1), format!("{r}x{c}")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(schema(path, "non-finite entry"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn classify(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => schema(format!("line {}, column {}", e.line(), e.column()), e.to_string()),
        Category::Io => Error::Io(std::io::Error::other(e.to_string())),
        _ => Error::Parse(e.to_string()),
    }
}

/// Parses and validates a cascade description from JSON text.
pub fn parse_spec(text: &str) -> Result<CascadeSpec> {
    let doc: SpecDocument = serde_json::from_str(text).map_err(classify)?;
    let mut spec = validate_document(&doc)?;
    spec.input_sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<CascadeSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text)
}

pub fn validate_document(doc: &SpecDocument) -> Result<CascadeSpec> {
    let m = doc.field_channels;
    if m == 0 || !m.is_multiple_of(2) {
        return Err(schema("field_channels", format!("must be a positive even number, got {m}")));
    }
    if doc.oscillators.is_empty() {
        return Err(schema("oscillators", "at least one oscillator is required"));
    }
    let mut defaults = vec![];
    let mut oscillators = vec![];
    for (k, o) in doc.oscillators.iter().enumerate() {
        let base = format!("oscillators[{k}]");
        if o.n == 0 || o.n % 2 != 0 {
            return Err(schema(format!("{base}.n"), format!("must be a positive even number, got {}", o.n)));
        }
        let r = to_matrix(&o.r, &format!("{base}.R"), (o.n, o.n))?;
        let skew = (&r - r.transpose()).abs().max();
        if skew > SYMMETRY_TOL {
            return Err(schema(format!("{base}.R"), format!("not symmetric (max asymmetry {skew:.3e})")));
        }
        let mm = to_matrix(&o.m, &format!("{base}.M"), (m, o.n))?;
        let theta = match &o.theta {
            Some(t) => {
                let tm = to_matrix(t, &format!("{base}.theta"), (o.n, o.n))?;
                let s = (&tm + tm.transpose()).abs().max();
                if s > SYMMETRY_TOL {
                    return Err(schema(format!("{base}.theta"), format!("not antisymmetric (max deviation {s:.3e})")));
                }
                AntisymmetricMatrix::antisymmetrize(tm)
            }
            None => {
                defaults.push(format!("{base}.theta = canonical commutation matrix with factor 1/2"));
                AntisymmetricMatrix::canonical(o.n, 0.5)?
            }
        };
        let p = OscillatorParams::new(theta, SymmetricMatrix::symmetrize(r), mm).map_err(|e| reindex(e, k))?;
        oscillators.push(p);
    }
    let epsilon = match doc.epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(schema("epsilon", format!("must be positive, got {e}"))),
        None => {
            defaults.push(format!("epsilon = {DEFAULT_EPSILON:e}"));
            DEFAULT_EPSILON
        }
    };
    let uncertainty = match &doc.uncertainty {
        None => None,
        Some(list) => {
            if list.len() != oscillators.len() {
                return Err(Error::dim("uncertainty", oscillators.len(), list.len()));
            }
            let mut blocks = vec![];
            for (k, u) in list.iter().enumerate() {
                let path = format!("uncertainty[{k}]");
                let n = oscillators[k].n();
                let d = n * (n + 1) / 2 + m * n;
                blocks.push(match u {
                    UncertaintyEntry::Bounds { a, b } => {
                        if !(*a >= 0.0 && *b >= 0.0) {
                            return Err(schema(path, "bounds must be non-negative"));
                        }
                        OscillatorUncertainty::Bounds { a: *a, b: *b }
                    }
                    UncertaintyEntry::Sigma { sigma } => {
                        let s = to_matrix(sigma, &format!("{path}.sigma"), (d, d))?;
                        OscillatorUncertainty::Covariance(SymmetricMatrix::try_new(s, SYMMETRY_TOL).map_err(|_| schema(format!("{path}.sigma"), "not symmetric"))?)
                    }
                });
            }
            Some(UncertaintyModel { blocks, epsilon })
        }
    };
    Ok(CascadeSpec {
        field_channels: m,
        oscillators,
        uncertainty,
        options: doc.options.clone().unwrap_or_default(),
        defaults_applied: defaults,
        input_sha256: String::new(),
    })
}

/// Document describing `oscillators`, with explicit commutation matrices.
pub fn to_document(oscillators: &[OscillatorParams], uncertainty: Option<&UncertaintyModel>, options: Option<&OptionsEntry>) -> SpecDocument {
    SpecDocument {
        field_channels: oscillators.first().map_or(0, |o| o.channels()),
        oscillators: oscillators
            .iter()
            .map(|o| OscillatorEntry {
                n: o.n(),
                theta: Some(matrix_rows(o.theta().as_matrix())),
                r: matrix_rows(o.energy().as_matrix()),
                m: matrix_rows(o.coupling()),
            })
            .collect(),
        uncertainty: uncertainty.map(|u| {
            u.blocks
                .iter()
                .map(|b| match b {
                    OscillatorUncertainty::Bounds { a, b } => UncertaintyEntry::Bounds { a: *a, b: *b },
                    OscillatorUncertainty::Covariance(s) => UncertaintyEntry::Sigma { sigma: matrix_rows(s.as_matrix()) },
                })
                .collect()
        }),
        epsilon: uncertainty.map(|u| u.epsilon),
        options: options.cloned(),
    }
}

/// The bundled three-oscillator example.
pub const EXAMPLE_SPEC: &str = include_str!("../data/example_three_oscillators.json");
