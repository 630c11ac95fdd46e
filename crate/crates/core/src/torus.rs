//! The flat torus as a concrete probability space with translation flow.
//!
//! The sample space is the cube `[0, L)^d` with addition mod `L` as the flow
//! and the uniform distribution as the invariant law. A point `ω` of the torus
//! doubles as the frame of reference: the stationarized measure attached to a
//! periodic configuration with atoms `x_i` places mass at `x_i - ω + kL` over
//! all lattice shifts `k`. Palm measures, the quotient metric and the Campbell
//! identity all become finite, exactly computable objects in this family.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Relative tolerance used when rejecting duplicate atoms.
const DISTINCT_ATOM_TOL: f64 = 1e-12;

/// Cubic torus `[0, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    dimension: usize,
    period: f64,
}

impl TorusGeometry {
    /// All axes share the period `L`; non-cubic cells are rejected upstream by
    /// construction (there is a single `period` field).
    pub fn new(dimension: usize, period: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !period.is_finite() || period <= 0.0 {
            return Err(Error::invalid(format!(
                "period must be a positive real, got {period}"
            )));
        }
        Ok(TorusGeometry { dimension, period })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Volume of the fundamental cell, `L^d`.
    pub fn cell_volume(&self) -> f64 {
        self.period.powi(self.dimension as i32)
    }

    pub(crate) fn check_same(&self, other: &TorusGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                left: format!("{:?}", self),
                right: format!("{:?}", other),
            })
        }
    }
}

/// Reduce one coordinate to the canonical window `[-L/2, L/2)`.
///
/// Values already inside the window are returned unchanged, which makes the
/// reduction bit-exact idempotent.
fn canonical_coord(v: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    if (-half..half).contains(&v) {
        return v;
    }
    let mut r = v.rem_euclid(period); // in [0, period]; the closed end can occur by rounding
    if r >= half {
        r -= period;
    }
    r
}

/// Minimal-norm representative of `v` modulo the lattice `(L Z)^d`.
///
/// The Euclidean norm decomposes over coordinates, so the minimizer is found
/// per axis. A per-axis tie (`|v_i mod L| = L/2`) is resolved towards `-L/2`,
/// which is exactly the lexicographically smallest choice among all
/// minimal-norm representatives (ascending comparison, coordinate 1 most
/// significant). The result therefore lies in `[-L/2, L/2)^d`.
pub fn canonical_rep(v: &[f64], period: f64) -> Result<Vec<f64>> {
    if !period.is_finite() || period <= 0.0 {
        return Err(Error::invalid(format!("period must be positive, got {period}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("canonical_rep input"));
    }
    Ok(v.iter().map(|&x| canonical_coord(x, period)).collect())
}

/// Point of the torus, stored with coordinates in `[0, L)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    geometry: TorusGeometry,
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Wraps arbitrary real coordinates into the fundamental cell.
    pub fn new(geometry: TorusGeometry, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != geometry.dimension() {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                geometry.dimension(),
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("torus point coordinates"));
        }
        let period = geometry.period();
        let coords = coords
            .into_iter()
            .map(|x| {
                let mut r = x.rem_euclid(period);
                if r >= period {
                    r = 0.0; // rem_euclid may round up to the period exactly
                }
                r
            })
            .collect();
        Ok(TorusPoint { geometry, coords })
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The flow `θ_z`: translation by `z`, wrapped back into the cell.
    pub fn shift(&self, z: &[f64]) -> Result<TorusPoint> {
        if z.len() != self.geometry.dimension() {
            return Err(Error::invalid(format!(
                "shift vector has length {}, expected {}",
                z.len(),
                self.geometry.dimension()
            )));
        }
        let moved = self
            .coords
            .iter()
            .zip(z)
            .map(|(&a, &b)| a + b)
            .collect::<Vec<_>>();
        TorusPoint::new(self.geometry, moved)
    }

    /// Shortest translation `z` with `θ_z ω₁ = ω₂`; ties resolved as in
    /// [`canonical_rep`]. Its norm is the torus distance `d_Ω(ω₁, ω₂)`.
    pub fn minimal_shift(&self, other: &TorusPoint) -> Result<Vec<f64>> {
        self.geometry.check_same(&other.geometry)?;
        let diff = other
            .coords
            .iter()
            .zip(&self.coords)
            .map(|(&b, &a)| b - a)
            .collect::<Vec<_>>();
        canonical_rep(&diff, self.geometry.period())
    }

    /// Torus distance `d_Ω`.
    pub fn dist(&self, other: &TorusPoint) -> Result<f64> {
        Ok(norm(&self.minimal_shift(other)?))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Metric on `Ω × R^d`: `(‖z₁ - z₂‖² + d_Ω(ω₁, ω₂)²)^{1/2}`.
pub fn dist_product(p1: (&TorusPoint, &[f64]), p2: (&TorusPoint, &[f64])) -> Result<f64> {
    let (w1, z1) = p1;
    let (w2, z2) = p2;
    if z1.len() != z2.len() {
        return Err(Error::invalid(format!(
            "vector components have lengths {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    let dw = w1.dist(w2)?;
    let dz2 = z1
        .iter()
        .zip(z2)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok((dz2 + dw * dw).sqrt())
}

/// Weighted periodic point configuration: atoms `x_i` with weights `w_i > 0`,
/// replicated over the lattice `(L Z)^d` and stationarized by a uniform frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPointConfiguration {
    geometry: TorusGeometry,
    atoms: Vec<TorusPoint>,
    weights: Vec<f64>,
}

impl PeriodicPointConfiguration {
    pub fn new(
        geometry: TorusGeometry,
        atoms: Vec<TorusPoint>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a configuration needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for a in &atoms {
            geometry.check_same(&a.geometry())?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::invalid("weights must be positive reals"));
        }
        let sep_tol = DISTINCT_ATOM_TOL * geometry.period();
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].dist(&atoms[j])? <= sep_tol {
                    return Err(Error::invalid(format!(
                        "atoms {i} and {j} coincide on the torus"
                    )));
                }
            }
        }
        Ok(PeriodicPointConfiguration {
            geometry,
            atoms,
            weights,
        })
    }

    /// Convenience constructor from raw coordinates with unit weights.
    pub fn unit_weights(geometry: TorusGeometry, coords: Vec<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        let atoms = coords
            .into_iter()
            .map(|c| TorusPoint::new(geometry, c))
            .collect::<Result<Vec<_>>>()?;
        PeriodicPointConfiguration::new(geometry, atoms, vec![1.0; n])
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn atoms(&self) -> &[TorusPoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Translate every atom by `v` (a new configuration on the same torus).
    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| a.shift(v))
            .collect::<Result<Vec<_>>>()?;
        PeriodicPointConfiguration::new(self.geometry, atoms, self.weights.clone())
    }
}

/// Periodic density sampled at the centers of a uniform `m^d` grid.
///
/// Cell `(i_0, .., i_{d-1})` is flattened as `i_0 + m i_1 + m² i_2 + ..`
/// (axis 0 fastest) and has center `((i_a + ½) L / m)_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDensity {
    geometry: TorusGeometry,
    resolution: usize,
    values: Vec<f64>,
}

impl PeriodicDensity {
    pub fn new(geometry: TorusGeometry, resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("resolution must be at least 1"));
        }
        let cells = resolution.pow(geometry.dimension() as u32);
        if values.len() != cells {
            return Err(Error::invalid(format!(
                "expected {cells} grid values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("density values must be nonnegative reals"));
        }
        let mean = values.iter().sum::<f64>() / cells as f64;
        if mean <= 0.0 {
            return Err(Error::invalid("density must carry positive mass"));
        }
        Ok(PeriodicDensity {
            geometry,
            resolution,
            values,
        })
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    /// Mean of the grid values (= intensity of the stationarized measure).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spacing `L / m`.
    pub fn cell_width(&self) -> f64 {
        self.geometry.period() / self.resolution as f64
    }

    /// Center coordinates of the flattened cell `idx`.
    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let d = self.geometry.dimension();
        let h = self.cell_width();
        let mut rem = idx;
        let mut out = Vec::with_capacity(d);
        for _ in 0..d {
            let i = rem % self.resolution;
            rem /= self.resolution;
            out.push((i as f64 + 0.5) * h);
        }
        out
    }

    /// Value of the piecewise-constant density at an arbitrary location
    /// (periodic wrap, nearest-cell lookup).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let h = self.cell_width();
        let mut idx = 0;
        let mut stride = 1;
        for &c in x {
            let wrapped = c.rem_euclid(self.geometry.period());
            let mut i = (wrapped / h) as usize;
            if i >= self.resolution {
                i = self.resolution - 1;
            }
            idx += stride * i;
            stride *= self.resolution;
        }
        self.values[idx]
    }
}

/// A stationarized periodic measure: either a weighted point configuration or
/// a gridded density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StationaryModel {
    Points(PeriodicPointConfiguration),
    Density(PeriodicDensity),
}

impl StationaryModel {
    pub fn geometry(&self) -> TorusGeometry {
        match self {
            StationaryModel::Points(c) => c.geometry(),
            StationaryModel::Density(d) => d.geometry(),
        }
    }

    /// Expected mass per unit volume.
    pub fn intensity(&self) -> f64 {
        match self {
            StationaryModel::Points(c) => c.total_weight() / c.geometry().cell_volume(),
            StationaryModel::Density(d) => d.mean(),
        }
    }

    pub fn as_points(&self) -> Result<&PeriodicPointConfiguration> {
        match self {
            StationaryModel::Points(c) => Ok(c),
            StationaryModel::Density(_) => Err(Error::WrongModelKind {
                operation: "point-configuration operation",
                required: "points",
            }),
        }
    }

    pub fn as_density(&self) -> Result<&PeriodicDensity> {
        match self {
            StationaryModel::Density(d) => Ok(d),
            StationaryModel::Points(_) => Err(Error::WrongModelKind {
                operation: "density operation",
                required: "density",
            }),
        }
    }

    /// Palm measure of the model. For a configuration this is the atomic
    /// measure `Σ_i (w_i / L^d) δ_{x_i}`; for a density it has density
    /// `ρ / L^d` with respect to Lebesgue measure on the cell. Total mass
    /// equals the intensity in both cases.
    pub fn palm_measure(&self) -> PalmMeasure {
        match self {
            StationaryModel::Points(c) => {
                let vol = c.geometry().cell_volume();
                PalmMeasure::Atoms {
                    geometry: c.geometry(),
                    atoms: c
                        .atoms()
                        .iter()
                        .cloned()
                        .zip(c.weights().iter().map(|w| w / vol))
                        .collect(),
                }
            }
            StationaryModel::Density(d) => {
                let vol = d.geometry().cell_volume();
                PalmMeasure::Density {
                    geometry: d.geometry(),
                    resolution: d.resolution(),
                    values: d.values().iter().map(|v| v / vol).collect(),
                }
            }
        }
    }

    /// Realization of the stationarized measure seen from frame `ω`,
    /// restricted to an axis-aligned window (point models only).
    ///
    /// Returns all lattice lifts `x_i - ω + kL` that land inside the window,
    /// as `(location, weight)` pairs. Window bounds are half-open `[lo, hi)`,
    /// matching the boundary convention of the Palm quadrature.
    pub fn evaluate_measure(
        &self,
        omega: &TorusPoint,
        window: &[(f64, f64)],
    ) -> Result<Vec<(Vec<f64>, f64)>> {
        let config = self.as_points()?;
        config.geometry().check_same(&omega.geometry())?;
        let d = config.geometry().dimension();
        if window.len() != d {
            return Err(Error::invalid(format!(
                "window has {} axes, expected {d}",
                window.len()
            )));
        }
        for &(lo, hi) in window {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid("window must be bounded"));
            }
            if lo >= hi {
                return Err(Error::invalid("window bounds must satisfy lo < hi"));
            }
        }
        let period = config.geometry().period();
        let mut out = Vec::new();
        for (atom, &w) in config.atoms().iter().zip(config.weights()) {
            // Base displacement before lattice lifts.
            let base: Vec<f64> = atom
                .coords()
                .iter()
                .zip(omega.coords())
                .map(|(&x, &o)| x - o)
                .collect();
            // Contributing lifts per axis: base + k L in [lo, hi).
            let ranges: Vec<(i64, i64)> = base
                .iter()
                .zip(window)
                .map(|(&b, &(lo, hi))| {
                    let kmin = ((lo - b) / period).ceil() as i64;
                    let kmax = ((hi - b) / period).floor() as i64;
                    (kmin - 1, kmax + 1) // slack against rounding at the edges
                })
                .collect();
            let mut k = ranges.iter().map(|r| r.0).collect::<Vec<_>>();
            'lifts: loop {
                let z: Vec<f64> = base
                    .iter()
                    .zip(&k)
                    .map(|(&b, &ki)| b + ki as f64 * period)
                    .collect();
                if z.iter()
                    .zip(window)
                    .all(|(&zi, &(lo, hi))| zi >= lo && zi < hi)
                {
                    out.push((z, w));
                }
                // Odometer increment over the lift box.
                for axis in 0..d {
                    k[axis] += 1;
                    if k[axis] <= ranges[axis].1 {
                        continue 'lifts;
                    }
                    k[axis] = ranges[axis].0;
                }
                break;
            }
        }
        Ok(out)
    }
}

/// Palm measure: atoms with masses, or a density with respect to Lebesgue
/// measure on the fundamental cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PalmMeasure {
    Atoms {
        geometry: TorusGeometry,
        atoms: Vec<(TorusPoint, f64)>,
    },
    Density {
        geometry: TorusGeometry,
        resolution: usize,
        values: Vec<f64>,
    },
}

impl PalmMeasure {
    pub fn geometry(&self) -> TorusGeometry {
        match self {
            PalmMeasure::Atoms { geometry, .. } => *geometry,
            PalmMeasure::Density { geometry, .. } => *geometry,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            PalmMeasure::Atoms { atoms, .. } => atoms.iter().map(|(_, m)| m).sum(),
            PalmMeasure::Density {
                geometry,
                resolution,
                values,
            } => {
                let d = geometry.dimension() as u32;
                let cell = (geometry.period() / *resolution as f64).powi(d as i32);
                values.iter().sum::<f64>() * cell
            }
        }
    }

    pub fn atoms(&self) -> Result<&[(TorusPoint, f64)]> {
        match self {
            PalmMeasure::Atoms { atoms, .. } => Ok(atoms),
            PalmMeasure::Density { .. } => Err(Error::WrongModelKind {
                operation: "atomic Palm access",
                required: "points",
            }),
        }
    }
}

/// Bounded measurable function on `Ω × R^d` with compact support in its
/// second argument, as used by the Campbell identity check.
type FieldEval = Arc<dyn Fn(&TorusPoint, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct BoundedField {
    support: Vec<(f64, f64)>,
    eval: FieldEval,
}

impl BoundedField {
    pub fn new(
        support: Vec<(f64, f64)>,
        eval: impl Fn(&TorusPoint, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BoundedField {
            support,
            eval: Arc::new(eval),
        }
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn eval(&self, omega: &TorusPoint, z: &[f64]) -> f64 {
        (self.eval)(omega, z)
    }
}

/// Deterministic quadrature resolutions for [`campbell_check`]: uniform grids
/// with `omega_resolution` (resp. `z_resolution`) nodes per axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub omega_resolution: usize,
    pub z_resolution: usize,
}

impl QuadratureSpec {
    pub fn new(omega_resolution: usize, z_resolution: usize) -> Result<Self> {
        if omega_resolution == 0 || z_resolution == 0 {
            return Err(Error::QuadratureTooCoarse(
                "resolutions must be at least 1".into(),
            ));
        }
        Ok(QuadratureSpec {
            omega_resolution,
            z_resolution,
        })
    }
}

/// Outcome of one Campbell identity check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CampbellCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Numerically compare the two sides of the refined Campbell identity
///
/// `E_Q[∫ f(θ_z ω, z) ξ(ω, dz)] = E_{Q_ξ}[∫ f(ω, z) dz]`.
///
/// The left side averages over a uniform frame grid (the flow integral is a
/// finite sum over lattice lifts for point models, a z-grid quadrature for
/// densities); the right side integrates over the support box of `f` against
/// the Palm measure. Both sides and their absolute gap are returned.
pub fn campbell_check(
    model: &StationaryModel,
    f: &BoundedField,
    quad: QuadratureSpec,
) -> Result<CampbellCheck> {
    let geometry = model.geometry();
    let d = geometry.dimension();
    if f.support().len() != d {
        return Err(Error::invalid(format!(
            "field support has {} axes, expected {d}",
            f.support().len()
        )));
    }
    let total_omega_nodes = quad.omega_resolution.pow(d as u32);
    if total_omega_nodes > 20_000_000 {
        return Err(Error::SizeCap {
            size: total_omega_nodes,
            cap: 20_000_000,
            hint: "lower the frame-grid resolution or the dimension",
        });
    }

    let lhs = match model {
        StationaryModel::Points(_) => {
            campbell_lhs_points(model, f, quad.omega_resolution, geometry)?
        }
        StationaryModel::Density(rho) => campbell_lhs_density(rho, f, quad)?,
    };

    let rhs = match model.palm_measure() {
        PalmMeasure::Atoms { atoms, .. } => {
            let mut acc = 0.0;
            for (site, mass) in &atoms {
                acc += mass * box_quadrature(f.support(), quad.z_resolution, |z| f.eval(site, z));
            }
            acc
        }
        PalmMeasure::Density {
            geometry,
            resolution,
            values,
        } => {
            // Palm density against Lebesgue on the cell; cell-center quadrature.
            let h = geometry.period() / resolution as f64;
            let cell_vol = h.powi(d as i32);
            let mut acc = 0.0;
            for (idx, &val) in values.iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let center = density_cell_center(&geometry, resolution, idx);
                let site = TorusPoint::new(geometry, center)?;
                acc += val
                    * cell_vol
                    * box_quadrature(f.support(), quad.z_resolution, |z| f.eval(&site, z));
            }
            acc
        }
    };

    Ok(CampbellCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

fn density_cell_center(geometry: &TorusGeometry, resolution: usize, idx: usize) -> Vec<f64> {
    let d = geometry.dimension();
    let h = geometry.period() / resolution as f64;
    let mut rem = idx;
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        let i = rem % resolution;
        rem /= resolution;
        out.push((i as f64 + 0.5) * h);
    }
    out
}

fn campbell_lhs_points(
    model: &StationaryModel,
    f: &BoundedField,
    omega_resolution: usize,
    geometry: TorusGeometry,
) -> Result<f64> {
    let d = geometry.dimension();
    let period = geometry.period();
    let h = period / omega_resolution as f64;
    let node_weight = 1.0 / omega_resolution.pow(d as u32) as f64;
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let omega = TorusPoint::new(
            geometry,
            idx.iter().map(|&i| i as f64 * h).collect::<Vec<_>>(),
        )?;
        // ξ(ω) restricted to the support window of f; θ_z ω lands exactly on
        // the source atom, recovered here as ω + z wrapped.
        for (z, w) in model.evaluate_measure(&omega, f.support())? {
            let site = omega.shift(&z)?;
            acc += node_weight * w * f.eval(&site, &z);
        }
        // odometer
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(acc);
            }
            idx[axis] += 1;
            if idx[axis] < omega_resolution {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn campbell_lhs_density(
    rho: &PeriodicDensity,
    f: &BoundedField,
    quad: QuadratureSpec,
) -> Result<f64> {
    let geometry = rho.geometry();
    let d = geometry.dimension();
    let period = geometry.period();
    let hw = period / quad.omega_resolution as f64;
    let node_weight = 1.0 / quad.omega_resolution.pow(d as u32) as f64;
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let omega: Vec<f64> = idx.iter().map(|&i| i as f64 * hw).collect();
        let inner = box_quadrature(f.support(), quad.z_resolution, |z| {
            let loc: Vec<f64> = omega.iter().zip(z).map(|(&o, &zi)| o + zi).collect();
            let site = TorusPoint::new(geometry, loc.clone()).expect("finite coords");
            f.eval(&site, z) * rho.value_at(&loc)
        });
        acc += node_weight * inner;
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(acc);
            }
            idx[axis] += 1;
            if idx[axis] < quad.omega_resolution {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Midpoint-rule quadrature of `g` over an axis-aligned box.
fn box_quadrature(bounds: &[(f64, f64)], nodes_per_axis: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
    let d = bounds.len();
    let widths: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) / nodes_per_axis as f64)
        .collect();
    let cell: f64 = widths.iter().product();
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    loop {
        for a in 0..d {
            z[a] = bounds[a].0 + (idx[a] as f64 + 0.5) * widths[a];
        }
        acc += g(&z);
        let mut axis = 0;
        loop {
            if axis == d {
                return acc * cell;
            }
            idx[axis] += 1;
            if idx[axis] < nodes_per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}
