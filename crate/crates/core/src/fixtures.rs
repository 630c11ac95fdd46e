//! Seeded instance generators shared by the verification suites, the
//! benchmarks and the CLI.

use crate::error::Result;
use crate::torus::{
    BoundedField, PeriodicDensity, PeriodicPointConfiguration, StationaryModel, TorusGeometry,
    TorusPoint,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Equally spaced unit-weight atoms along each axis (the cubic lattice with
/// `n` points per axis), offset by `offset`.
pub fn lattice(geometry: TorusGeometry, n_per_axis: usize, offset: &[f64]) -> Result<StationaryModel> {
    let d = geometry.dimension();
    let spacing = geometry.period() / n_per_axis as f64;
    let mut coords = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        coords.push(
            idx.iter()
                .zip(offset)
                .map(|(&i, &o)| i as f64 * spacing + o)
                .collect::<Vec<_>>(),
        );
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(StationaryModel::Points(
                    PeriodicPointConfiguration::unit_weights(geometry, coords)?,
                ));
            }
            idx[axis] += 1;
            if idx[axis] < n_per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Random configuration with unit intensity: atoms drawn uniformly (with a
/// minimum separation retry), weights drawn positive and rescaled so the
/// total weight is exactly the cell volume.
pub fn random_unit_intensity_config(
    rng: &mut ChaCha8Rng,
    geometry: TorusGeometry,
    n: usize,
    random_weights: bool,
) -> Result<PeriodicPointConfiguration> {
    let d = geometry.dimension();
    let period = geometry.period();
    'outer: loop {
        let mut atoms = Vec::with_capacity(n);
        for _ in 0..n {
            let coords: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..period)).collect();
            atoms.push(TorusPoint::new(geometry, coords)?);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if atoms[i].dist(&atoms[j])? < 1e-6 * period {
                    continue 'outer;
                }
            }
        }
        let mut weights: Vec<f64> = if random_weights {
            (0..n).map(|_| rng.gen_range(0.2..2.0)).collect()
        } else {
            vec![1.0; n]
        };
        let total: f64 = weights.iter().sum();
        let scale = geometry.cell_volume() / total;
        for w in weights.iter_mut() {
            *w *= scale;
        }
        return PeriodicPointConfiguration::new(geometry, atoms, weights);
    }
}

/// Pair of unit-intensity models on a common torus (sizes may differ).
pub fn random_pair(
    rng: &mut ChaCha8Rng,
    geometry: TorusGeometry,
    n_source: usize,
    n_target: usize,
    random_weights: bool,
) -> Result<(StationaryModel, StationaryModel)> {
    let a = random_unit_intensity_config(rng, geometry, n_source, random_weights)?;
    let b = random_unit_intensity_config(rng, geometry, n_target, random_weights)?;
    Ok((StationaryModel::Points(a), StationaryModel::Points(b)))
}

/// `1 + amplitude · cos(2π (x - shift) / L)` sampled at cell centers (d = 1).
pub fn cosine_density(
    geometry: TorusGeometry,
    resolution: usize,
    amplitude: f64,
    shift: f64,
) -> Result<PeriodicDensity> {
    let period = geometry.period();
    let values = (0..resolution)
        .map(|i| {
            let x = (i as f64 + 0.5) * period / resolution as f64;
            1.0 + amplitude * (2.0 * std::f64::consts::PI * (x - shift) / period).cos()
        })
        .collect();
    PeriodicDensity::new(geometry, resolution, values)
}

/// Random strictly positive density with unit mean: a low-order random
/// trigonometric polynomial clipped away from zero.
pub fn random_density(
    rng: &mut ChaCha8Rng,
    geometry: TorusGeometry,
    resolution: usize,
) -> Result<PeriodicDensity> {
    let d = geometry.dimension();
    let period = geometry.period();
    let n_modes = 3;
    let coeffs: Vec<(f64, f64, Vec<f64>)> = (0..n_modes)
        .map(|_| {
            (
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..std::f64::consts::TAU),
                (0..d).map(|_| rng.gen_range(1.0..3.5f64).round()).collect(),
            )
        })
        .collect();
    let cells = resolution.pow(d as u32);
    let mut values = Vec::with_capacity(cells);
    for idx in 0..cells {
        let mut rem = idx;
        let mut x = Vec::with_capacity(d);
        for _ in 0..d {
            x.push(((rem % resolution) as f64 + 0.5) * period / resolution as f64);
            rem /= resolution;
        }
        let mut v = 1.0;
        for (amp, phase, freq) in &coeffs {
            let arg: f64 = x
                .iter()
                .zip(freq)
                .map(|(&xi, &k)| std::f64::consts::TAU * k * xi / period)
                .sum();
            v += amp * (arg + phase).cos();
        }
        values.push(v.max(0.05));
    }
    let mean = values.iter().sum::<f64>() / cells as f64;
    for v in values.iter_mut() {
        *v /= mean;
    }
    PeriodicDensity::new(geometry, resolution, values)
}

/// Random smooth Campbell test field: a random trigonometric polynomial in
/// the frame coordinate times a compact bump in the displacement, with all
/// derivatives vanishing at the support boundary (so both quadratures of the
/// Campbell identity converge superalgebraically).
pub fn random_campbell_field(
    rng: &mut ChaCha8Rng,
    geometry: TorusGeometry,
    radius: f64,
) -> BoundedField {
    let d = geometry.dimension();
    let period = geometry.period();
    let terms: Vec<(f64, f64, Vec<f64>)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                (0..d).map(|_| rng.gen_range(1.0..3.5f64).round()).collect(),
            )
        })
        .collect();
    let support = vec![(-radius, radius); d];
    BoundedField::new(support, move |omega: &TorusPoint, z: &[f64]| {
        let mut bump = 1.0;
        for &zi in z {
            let s = zi / radius;
            if s.abs() >= 1.0 {
                return 0.0;
            }
            bump *= (1.0 - 1.0 / (1.0 - s * s)).exp();
        }
        let mut value = 0.4;
        for (amp, phase, freq) in &terms {
            let arg: f64 = omega
                .coords()
                .iter()
                .zip(freq)
                .map(|(&w, &k)| std::f64::consts::TAU * k * w / period)
                .sum();
            value += amp * (arg + phase).cos();
        }
        value * bump
    })
}

/// Replicate a configuration `reps` times per axis on the enlarged torus
/// (same stationarized measure, bigger fundamental cell).
pub fn tile(config: &PeriodicPointConfiguration, reps: usize) -> Result<PeriodicPointConfiguration> {
    let g = config.geometry();
    let d = g.dimension();
    let big = TorusGeometry::new(d, g.period() * reps as f64)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut k = vec![0usize; d];
    loop {
        for (atom, &w) in config.atoms().iter().zip(config.weights()) {
            let coords: Vec<f64> = atom
                .coords()
                .iter()
                .zip(&k)
                .map(|(&x, &ki)| x + ki as f64 * g.period())
                .collect();
            atoms.push(TorusPoint::new(big, coords)?);
            weights.push(w);
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return PeriodicPointConfiguration::new(big, atoms, weights);
            }
            k[axis] += 1;
            if k[axis] < reps {
                break;
            }
            k[axis] = 0;
            axis += 1;
        }
    }
}
