//! Model files: a JSON document with a `kind` discriminator.
//!
//! ```json
//! { "kind": "points", "dimension": 1, "period": 2.0,
//!   "atoms": [[0.0], [1.0]], "weights": [1.0, 1.0] }
//!
//! { "kind": "density", "dimension": 1, "period": 1.0,
//!   "resolution": 4, "values": [1.0, 1.5, 1.0, 0.5] }
//! ```
//!
//! All reals are 64-bit floating point. Atom coordinates may lie outside the
//! fundamental cell; they are wrapped on load.

use crate::error::Result;
use crate::torus::{
    PeriodicDensity, PeriodicPointConfiguration, StationaryModel, TorusGeometry, TorusPoint,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ModelFile {
    Points {
        dimension: usize,
        period: f64,
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Density {
        dimension: usize,
        period: f64,
        resolution: usize,
        values: Vec<f64>,
    },
}

impl ModelFile {
    fn into_model(self) -> Result<StationaryModel> {
        match self {
            ModelFile::Points {
                dimension,
                period,
                atoms,
                weights,
            } => {
                let geometry = TorusGeometry::new(dimension, period)?;
                let atoms = atoms
                    .into_iter()
                    .map(|c| TorusPoint::new(geometry, c))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StationaryModel::Points(PeriodicPointConfiguration::new(
                    geometry, atoms, weights,
                )?))
            }
            ModelFile::Density {
                dimension,
                period,
                resolution,
                values,
            } => {
                let geometry = TorusGeometry::new(dimension, period)?;
                Ok(StationaryModel::Density(PeriodicDensity::new(
                    geometry, resolution, values,
                )?))
            }
        }
    }

    fn from_model(model: &StationaryModel) -> ModelFile {
        match model {
            StationaryModel::Points(c) => ModelFile::Points {
                dimension: c.geometry().dimension(),
                period: c.geometry().period(),
                atoms: c.atoms().iter().map(|a| a.coords().to_vec()).collect(),
                weights: c.weights().to_vec(),
            },
            StationaryModel::Density(d) => ModelFile::Density {
                dimension: d.geometry().dimension(),
                period: d.geometry().period(),
                resolution: d.resolution(),
                values: d.values().to_vec(),
            },
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StationaryModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<StationaryModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn save_model(path: impl AsRef<Path>, model: &StationaryModel) -> Result<()> {
    std::fs::write(path, render_model(model)?)?;
    Ok(())
}

pub fn render_model(model: &StationaryModel) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&ModelFile::from_model(model))?;
    text.push('\n');
    Ok(text)
}
