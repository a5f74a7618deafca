//! Piecewise-constant momentum on the template curve and the synthetic
//! target momenta.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{csv_error, CurveLoop};

/// One momentum density per curve facet (per unit template arc length).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumField(Vec<f64>);

impl MomentumField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("momentum value at facet {k} is not finite")));
        }
        Ok(MomentumField(values))
    }

    pub fn zeros(n: usize) -> Self {
        MomentumField(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        MomentumField(self.0.iter().map(|v| v * s).collect())
    }

    pub fn check_len(&self, curve: &CurveLoop) -> Result<()> {
        if self.len() != curve.len() {
            return Err(Error::ShapeMismatch { expected: curve.len(), found: self.len() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Contract,
    Squeeze,
    Star,
    Teardrop,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] =
        [SyntheticKind::Contract, SyntheticKind::Squeeze, SyntheticKind::Star, SyntheticKind::Teardrop];

    /// Momentum density at a template point.
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            SyntheticKind::Contract => -1.38 * PI,
            SyntheticKind::Squeeze => {
                if x < -0.3 {
                    0.83 * PI * (-y * y / 5.0).exp()
                } else {
                    5.0 / 3.0 * PI * (x / 5.0).sin() * y.abs()
                }
            }
            SyntheticKind::Star => 2.6 * PI * (2.0 * PI * x / 5.0).cos(),
            // -3π sign(y) on y < 0 is 3π.
            SyntheticKind::Teardrop => {
                if y < 0.0 {
                    3.0 * PI
                } else {
                    3.0 * PI * (-x * x / 5.0).exp()
                }
            }
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SyntheticKind::Contract => "contract",
            SyntheticKind::Squeeze => "squeeze",
            SyntheticKind::Star => "star",
            SyntheticKind::Teardrop => "teardrop",
        };
        f.write_str(s)
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown momentum kind {s:?}")))
    }
}

/// Evaluates a synthetic momentum at the template facet midpoints.
pub fn synthetic_momentum(kind: SyntheticKind, curve: &CurveLoop) -> MomentumField {
    MomentumField(curve.template_midpoints().iter().map(|m| kind.eval(m.x, m.y)).collect())
}

/// `sqrt(Σ_f L0_f p_f²)`.
pub fn momentum_norm(p: &[f64], curve: &CurveLoop) -> Result<f64> {
    if p.len() != curve.len() {
        return Err(Error::ShapeMismatch { expected: curve.len(), found: p.len() });
    }
    Ok(p.iter().zip(curve.template_lengths()).map(|(v, l)| l * v * v).sum::<f64>().sqrt())
}

/// Writes `facet,value` rows.
pub fn write_momentum_csv(p: &MomentumField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["facet", "value"])?;
        for (k, v) in p.values().iter().enumerate() {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| csv_error(path, e))
}

pub fn read_momentum_csv(path: impl AsRef<Path>) -> Result<MomentumField> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    for row in r.deserialize::<(usize, f64)>() {
        let (k, v) = row.map_err(|e| csv_error(path, e))?;
        if k != values.len() {
            return Err(Error::Parse { path: path.into(), message: format!("facet {k} out of order") });
        }
        values.push(v);
    }
    MomentumField::new(values)
}
