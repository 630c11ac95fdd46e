//! `generate`: write fixture model files.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use palmot::fixtures;
use palmot::io::render_model;
use palmot::torus::{StationaryModel, TorusGeometry};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureKind {
    /// Cubic lattice with unit weights.
    Lattice,
    /// The same lattice translated by a quarter spacing.
    ShiftedLattice,
    /// Random unit-intensity weighted configuration.
    RandomPoints,
    /// `1 + a cos(2π x / L)` density.
    CosineDensity,
    /// The cosine density translated by a quarter period.
    CosineDensityShifted,
    /// Random strictly positive density with unit mean.
    RandomDensity,
}

pub fn run(
    kind: FixtureKind,
    dimension: usize,
    period: f64,
    n: usize,
    destination: &Path,
    config: &RunConfig,
) -> Result<()> {
    let geometry = TorusGeometry::new(dimension, period)?;
    let mut rng = fixtures::rng(config.seed);
    let model = match kind {
        FixtureKind::Lattice => fixtures::lattice(geometry, n, &vec![0.0; dimension])?,
        FixtureKind::ShiftedLattice => {
            let quarter = 0.25 * period / n as f64;
            fixtures::lattice(geometry, n, &vec![quarter; dimension])?
        }
        FixtureKind::RandomPoints => StationaryModel::Points(
            fixtures::random_unit_intensity_config(&mut rng, geometry, n, true)?,
        ),
        FixtureKind::CosineDensity => {
            if dimension != 1 {
                bail!("cosine densities are one-dimensional");
            }
            StationaryModel::Density(fixtures::cosine_density(geometry, config.grid, 0.5, 0.0)?)
        }
        FixtureKind::CosineDensityShifted => {
            if dimension != 1 {
                bail!("cosine densities are one-dimensional");
            }
            StationaryModel::Density(fixtures::cosine_density(
                geometry,
                config.grid,
                0.5,
                0.25 * period,
            )?)
        }
        FixtureKind::RandomDensity => {
            StationaryModel::Density(fixtures::random_density(&mut rng, geometry, config.grid)?)
        }
    };
    let text = render_model(&model)?;
    std::fs::write(destination, text)
        .with_context(|| format!("writing {}", destination.display()))?;
    println!("wrote {}", destination.display());
    Ok(())
}
