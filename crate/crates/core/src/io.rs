//! JSON schemas for tensors, rough paths and smooth maps.
//!
//! Floats are written as shortest round-trip decimals, so a value read back
//! from its own output is bit-identical.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{TruncatedTensor, Word};
use crate::error::{Error, Result};
use crate::rde::VectorFieldSystem;
use crate::roughpath::{lift_pl, GeometricRoughPath, PiecewiseLinearPath};
use crate::smooth::{Affine, Compose, Constant, Polynomial, SmoothFn, Sum, TanhCutoff, Trig};

fn parse_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        what: what.into(),
        message: e.to_string(),
    }
}

/// `{"dim": d, "level": N, "terms": [{"word": [1, 2], "coeff": 0.5}, …]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub dim: usize,
    pub level: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub word: Vec<usize>,
    pub coeff: f64,
}

impl From<&TruncatedTensor> for TensorJson {
    fn from(t: &TruncatedTensor) -> Self {
        let mut terms: Vec<(&Word, f64)> = t.terms().filter(|(_, c)| *c != 0.0).collect();
        terms.sort_by(|a, b| a.0.cmp(b.0));
        TensorJson {
            dim: t.dim(),
            level: t.level(),
            terms: terms
                .into_iter()
                .map(|(w, c)| TermJson {
                    word: w.to_vec(),
                    coeff: c,
                })
                .collect(),
        }
    }
}

impl TensorJson {
    pub fn to_tensor(&self) -> Result<TruncatedTensor> {
        TruncatedTensor::from_terms(
            self.dim,
            self.level,
            self.terms.iter().map(|t| (Word::from(t.word.as_slice()), t.coeff)),
        )
    }
}

pub fn tensor_to_json(t: &TruncatedTensor) -> String {
    serde_json::to_string_pretty(&TensorJson::from(t)).expect("tensor serializes")
}

pub fn tensor_from_json(s: &str) -> Result<TruncatedTensor> {
    let j: TensorJson = serde_json::from_str(s).map_err(|e| parse_error("tensor JSON", e))?;
    j.to_tensor()
}

/// A rough path: either the lift of a piecewise-linear path or sampled basepoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoughPathJson {
    PiecewiseLinear {
        gamma: f64,
        level: usize,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Basepoints {
        gamma: f64,
        times: Vec<f64>,
        basepoints: Vec<TensorJson>,
    },
}

impl RoughPathJson {
    pub fn from_path(w: &GeometricRoughPath) -> Self {
        match w.generator() {
            Some(p) => RoughPathJson::PiecewiseLinear {
                gamma: w.gamma(),
                level: w.level(),
                times: p.times().to_vec(),
                values: p.values().to_vec(),
            },
            None => RoughPathJson::Basepoints {
                gamma: w.gamma(),
                times: w.times().to_vec(),
                basepoints: w.basepoints().iter().map(|g| TensorJson::from(g.tensor())).collect(),
            },
        }
    }

    pub fn build(&self) -> Result<GeometricRoughPath> {
        match self {
            RoughPathJson::PiecewiseLinear {
                gamma,
                level,
                times,
                values,
            } => lift_pl(&PiecewiseLinearPath::new(times.clone(), values.clone())?, *gamma, *level),
            RoughPathJson::Basepoints {
                gamma,
                times,
                basepoints,
            } => GeometricRoughPath::from_basepoints(
                *gamma,
                times.clone(),
                basepoints.iter().map(TensorJson::to_tensor).collect::<Result<_>>()?,
            ),
        }
    }
}

pub fn rough_path_to_json(w: &GeometricRoughPath) -> String {
    serde_json::to_string_pretty(&RoughPathJson::from_path(w)).expect("rough path serializes")
}

pub fn rough_path_from_json(s: &str) -> Result<GeometricRoughPath> {
    let j: RoughPathJson = serde_json::from_str(s).map_err(|e| parse_error("rough path JSON", e))?;
    j.build()
}

/// A smooth map declared by family, so that its derivatives can be rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FunctionSpec {
    Polynomial(Polynomial),
    Affine(Affine),
    Constant(Constant),
    Trig(Trig),
    TanhCutoff(TanhCutoff),
    Compose {
        outer: Box<FunctionSpec>,
        inner: Box<FunctionSpec>,
    },
    Sum {
        terms: Vec<FunctionSpec>,
    },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<SmoothFn> {
        Ok(match self {
            FunctionSpec::Polynomial(p) => Arc::new(Polynomial::new(p.dim_in, p.components.clone())?),
            FunctionSpec::Affine(a) => Arc::new(Affine::new(a.matrix.clone(), a.offset.clone())?),
            FunctionSpec::Constant(c) => Arc::new(c.clone()),
            FunctionSpec::Trig(t) => {
                if t.components.iter().flatten().any(|term| term.freq.len() != t.dim_in) {
                    return Err(Error::InvalidParameter("trig frequency length differs from dim_in".into()));
                }
                Arc::new(t.clone())
            }
            FunctionSpec::TanhCutoff(t) => {
                if !(t.scale > 0.0) {
                    return Err(Error::InvalidParameter("cutoff scale must be positive".into()));
                }
                Arc::new(t.clone())
            }
            FunctionSpec::Compose { outer, inner } => Arc::new(Compose::new(outer.build()?, inner.build()?)?),
            FunctionSpec::Sum { terms } => {
                Arc::new(Sum::new(terms.iter().map(FunctionSpec::build).collect::<Result<_>>()?)?)
            }
        })
    }
}

pub fn function_from_json(s: &str) -> Result<SmoothFn> {
    let j: FunctionSpec = serde_json::from_str(s).map_err(|e| parse_error("function JSON", e))?;
    j.build()
}

/// `{"fields": [spec, …]}`, one spec per driving letter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldsJson {
    pub fields: Vec<FunctionSpec>,
}

impl FieldsJson {
    pub fn build(&self) -> Result<VectorFieldSystem> {
        VectorFieldSystem::new(self.fields.iter().map(FunctionSpec::build).collect::<Result<_>>()?)
    }
}

pub fn fields_from_json(s: &str) -> Result<VectorFieldSystem> {
    let j: FieldsJson = serde_json::from_str(s).map_err(|e| parse_error("fields JSON", e))?;
    j.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::GroupTensor;
    use crate::smooth::Monomial;

    #[test]
    fn tensor_roundtrip_is_exact() {
        let g = GroupTensor::segment(&[0.1, 1.0 / 3.0], 3);
        let back = tensor_from_json(&tensor_to_json(g.tensor())).unwrap();
        assert_eq!(back.max_abs_diff(g.tensor()), 0.0);
    }

    #[test]
    fn malformed_tensor_reports_location() {
        let err = tensor_from_json("{\"dim\": 2, \"level\": }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn rough_path_roundtrip() {
        let p = PiecewiseLinearPath::from_fn(1.0, 5, |t| vec![t, t * t]).unwrap();
        let w = lift_pl(&p, 0.4, 2).unwrap();
        let back = rough_path_from_json(&rough_path_to_json(&w)).unwrap();
        let a = w.increment(0.1, 0.9).unwrap();
        let b = back.increment(0.1, 0.9).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);

        let s = GeometricRoughPath::from_basepoints(0.4, w.times().to_vec(), w.basepoints().iter().map(|g| g.tensor().clone()).collect()).unwrap();
        let back = rough_path_from_json(&rough_path_to_json(&s)).unwrap();
        assert_eq!(back.at(1.0).unwrap().max_abs_diff(&s.at(1.0).unwrap()), 0.0);
    }

    #[test]
    fn fields_from_spec() {
        let json = r#"{"fields": [
            {"family": "polynomial", "dim_in": 1, "components": [[{"coeff": 2.0, "powers": [2]}]]},
            {"family": "compose",
             "outer": {"family": "trig", "dim_in": 1, "components": [[{"amp": 1.0, "freq": [1.0], "phase": 0.0}]]},
             "inner": {"family": "affine", "matrix": [[3.0]], "offset": [0.5]}}
        ]}"#;
        let v = fields_from_json(json).unwrap();
        assert_eq!(v.d(), 2);
        assert_eq!(v.field(1).eval(&[3.0]), vec![18.0]);
        assert!((v.field(2).eval(&[1.0])[0] - 3.5f64.sin()).abs() < 1e-15);
        let spec = FunctionSpec::Polynomial(Polynomial::new(1, vec![vec![Monomial { coeff: 1.0, powers: vec![1] }]]).unwrap());
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"family\":\"polynomial\""));
    }
}
