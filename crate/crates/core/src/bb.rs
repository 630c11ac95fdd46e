//! Dynamic solver for the density family: quadratic transport cost between
//! two periodic densities by direct minimization of the kinetic action over
//! discrete solutions of the continuity equation (p = 2 only; other
//! exponents run through the point-model geodesic path).
//!
//! The discretization staggers densities at time nodes / cell centers and
//! momenta at time cells / faces, which makes the discrete continuity
//! equation hold to machine precision for the returned fields; the objective
//! is evaluated at time midpoints with face-averaged momenta. The solver is
//! an augmented-Lagrangian scheme with a spectral constrained projection; see
//! [`solver`] for the step structure. [`static_grid_reference`] provides the
//! independent static value on the same grid through the exact transport
//! solver.

mod solver;
mod spectral;

use crate::error::{Error, Result};
use crate::torus::{PeriodicDensity, TorusGeometry, TorusPoint};
use crate::transport::{quotient_cost_matrix, solve_assignment_exact};
use serde::Serialize;

/// Space-time grid: `m` cells per axis (periodic), `n_t` time steps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StaggeredGrid {
    geometry: TorusGeometry,
    space_resolution: usize,
    time_steps: usize,
}

impl StaggeredGrid {
    pub fn new(geometry: TorusGeometry, space_resolution: usize, time_steps: usize) -> Result<Self> {
        if geometry.dimension() > 2 {
            return Err(Error::invalid(
                "the grid solver supports dimensions 1 and 2",
            ));
        }
        if space_resolution < 8 {
            return Err(Error::invalid("need at least 8 cells per axis"));
        }
        if time_steps < 8 {
            return Err(Error::invalid("need at least 8 time steps"));
        }
        Ok(StaggeredGrid {
            geometry,
            space_resolution,
            time_steps,
        })
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn space_resolution(&self) -> usize {
        self.space_resolution
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn num_cells(&self) -> usize {
        self.space_resolution.pow(self.geometry.dimension() as u32)
    }

    pub fn cell_width(&self) -> f64 {
        self.geometry.period() / self.space_resolution as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.geometry.dimension() as i32)
    }

    pub fn time_step(&self) -> f64 {
        1.0 / self.time_steps as f64
    }
}

/// Solver parameters. `tol` gates both the primal residual and the relative
/// objective change; both must stay below it for 10 consecutive iterations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BbParams {
    pub tol: f64,
    pub max_iters: usize,
    /// Augmented-Lagrangian penalty (the objective carries the grid weights,
    /// so the useful range is insensitive to the resolution).
    pub penalty: f64,
}

impl Default for BbParams {
    fn default() -> Self {
        BbParams {
            tol: 1e-6,
            max_iters: 40_000,
            penalty: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual: f64,
    pub objective: f64,
}

/// Converged space-time fields and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceTimeSolution {
    pub grid: StaggeredGrid,
    /// Densities at time nodes, `(n_t + 1) · N`, endpoints bit-identical to
    /// the (preprocessed) inputs.
    pub density: Vec<f64>,
    /// Face momenta at time cells, `n_t · d · N`.
    pub momentum: Vec<f64>,
    /// Kinetic action `∫∫ ‖m‖²/ρ`, divided by the cell volume `L^d` so it is
    /// directly comparable to the static cost per unit volume.
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

impl SpaceTimeSolution {
    pub fn density_slice(&self, j: usize) -> &[f64] {
        let n = self.grid.num_cells();
        &self.density[j * n..(j + 1) * n]
    }

    pub fn momentum_slice(&self, j: usize, axis: usize) -> &[f64] {
        let n = self.grid.num_cells();
        let d = self.grid.geometry().dimension();
        let base = (j * d + axis) * n;
        &self.momentum[base..base + n]
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Total mass per time node, for the conservation invariant.
    pub fn masses(&self) -> Vec<f64> {
        (0..=self.grid.time_steps())
            .map(|j| self.density_slice(j).iter().sum::<f64>() * self.grid.cell_volume())
            .collect()
    }
}

/// Max-norm of the discrete continuity identity over all space-time cells.
pub(crate) fn discrete_ce_residual(grid: &StaggeredGrid, rho: &[f64], mom: &[f64]) -> f64 {
    let d = grid.geometry().dimension();
    let n = grid.num_cells();
    let m = grid.space_resolution();
    let dt = grid.time_step();
    let dx = grid.cell_width();
    let mut worst: f64 = 0.0;
    for j in 0..grid.time_steps() {
        for i in 0..n {
            let mut div = 0.0;
            for a in 0..d {
                let stride = m.pow(a as u32);
                let axis_pos = (i / stride) % m;
                let minus = if axis_pos == 0 {
                    i + (m - 1) * stride
                } else {
                    i - stride
                };
                let base = (j * d + a) * n;
                div += (mom[base + i] - mom[base + minus]) / dx;
            }
            let dtrho = (rho[(j + 1) * n + i] - rho[j * n + i]) / dt;
            worst = worst.max((dtrho + div).abs());
        }
    }
    worst
}

/// Discrete continuity-equation residual of a solution (max norm).
pub fn ce_residual_grid(solution: &SpaceTimeSolution) -> f64 {
    discrete_ce_residual(&solution.grid, &solution.density, &solution.momentum)
}

/// Floor tiny density values at `1e-8` of the mean and renormalize to the
/// original mass. Returns the adjusted values.
fn floor_and_normalize(values: &[f64], target_mean: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let floor = 1e-8 * target_mean;
    let mut out: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    let mean = out.iter().sum::<f64>() / n;
    let scale = target_mean / mean;
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// Quadratic dynamic transport between two periodic densities of equal mean.
///
/// Returns the converged space-time fields with the objective in cost-per-
/// unit-volume units (comparable to the static solvers). Inputs are floored
/// at `1e-8` of the mean with mass renormalization first, so strictly
/// vanishing densities are admissible; the mean mismatch tolerance is 1e-10
/// relative.
pub fn bb_solve(
    rho0: &PeriodicDensity,
    rho1: &PeriodicDensity,
    grid: &StaggeredGrid,
    params: &BbParams,
) -> Result<SpaceTimeSolution> {
    rho0.geometry().check_same(&rho1.geometry())?;
    rho0.geometry().check_same(&grid.geometry())?;
    if rho0.resolution() != grid.space_resolution() || rho1.resolution() != grid.space_resolution()
    {
        return Err(Error::invalid(
            "density resolution must match the solver grid",
        ));
    }
    let (m0, m1) = (rho0.mean(), rho1.mean());
    if (m0 - m1).abs() > 1e-10 * m0.max(1.0) {
        return Err(Error::IntensityMismatch { left: m0, right: m1 });
    }
    if !params.tol.is_finite() || params.tol <= 0.0 || params.penalty <= 0.0 {
        return Err(Error::invalid("solver tolerance and penalty must be positive"));
    }
    let a = floor_and_normalize(rho0.values(), m0);
    let b = floor_and_normalize(rho1.values(), m0);

    let state = solver::run_admm(grid, &a, &b, params)?;
    let mut sigma_c = vec![0.0; grid.time_steps() * grid.num_cells()];
    let mut w_c =
        vec![0.0; grid.time_steps() * grid.geometry().dimension() * grid.num_cells()];
    solver::interpolate(grid, &state.rho_stag, &state.mom_stag, &mut sigma_c, &mut w_c);
    let raw = solver::kinetic_objective(grid, &sigma_c, &w_c, 1e-10 * m0);
    let objective = raw / grid.geometry().cell_volume();
    let trace = state
        .trace_residual
        .iter()
        .zip(&state.trace_objective)
        .enumerate()
        .map(|(k, (&residual, &obj))| TraceEntry {
            iteration: k + 1,
            residual,
            objective: obj / grid.geometry().cell_volume(),
        })
        .collect();
    Ok(SpaceTimeSolution {
        grid: *grid,
        density: state.rho_stag,
        momentum: state.mom_stag,
        objective,
        iterations: state.iterations,
        trace,
    })
}

/// Cap on the number of grid atoms fed to the exact static solver.
pub const STATIC_REFERENCE_CELL_CAP: usize = 4096;

/// Static transport value between two densities on the same grid: exact
/// optimal transport between cell-center atoms weighted by cell masses, with
/// quotient cost, in cost-per-unit-volume units.
pub fn static_grid_reference(
    rho0: &PeriodicDensity,
    rho1: &PeriodicDensity,
    p: f64,
) -> Result<f64> {
    rho0.geometry().check_same(&rho1.geometry())?;
    if rho0.resolution() != rho1.resolution() {
        return Err(Error::invalid("densities must share a resolution"));
    }
    let n = rho0.num_cells();
    if n > STATIC_REFERENCE_CELL_CAP {
        return Err(Error::SizeCap {
            size: n,
            cap: STATIC_REFERENCE_CELL_CAP,
            hint: "use a coarser grid for the exact reference",
        });
    }
    let (m0, m1) = (rho0.mean(), rho1.mean());
    if (m0 - m1).abs() > 1e-10 * m0.max(1.0) {
        return Err(Error::IntensityMismatch { left: m0, right: m1 });
    }
    let geometry = rho0.geometry();
    let cell_vol = rho0.cell_width().powi(geometry.dimension() as i32);
    let gather = |rho: &PeriodicDensity| -> Result<(Vec<TorusPoint>, Vec<f64>)> {
        let mut atoms = Vec::new();
        let mut masses = Vec::new();
        for (i, &v) in rho.values().iter().enumerate() {
            if v > 0.0 {
                atoms.push(TorusPoint::new(geometry, rho.cell_center(i))?);
                masses.push(v * cell_vol);
            }
        }
        Ok((atoms, masses))
    };
    let (source_atoms, mut source_masses) = gather(rho0)?;
    let (target_atoms, target_masses) = gather(rho1)?;
    if source_atoms.is_empty() || target_atoms.is_empty() {
        return Err(Error::invalid("densities must carry mass"));
    }
    // absorb the residual mass drift so the marginals balance exactly
    let s: f64 = source_masses.iter().sum();
    let t: f64 = target_masses.iter().sum();
    let correction = t / s;
    for v in source_masses.iter_mut() {
        *v *= correction;
    }
    let cost = quotient_cost_matrix(&source_atoms, &target_atoms, p)?;
    let plan = solve_assignment_exact(&cost, &source_masses, &target_masses)?;
    Ok(plan.total_cost(&cost) / geometry.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGeometry;
    use approx::assert_abs_diff_eq;

    fn geometry() -> TorusGeometry {
        TorusGeometry::new(1, 1.0).unwrap()
    }

    fn cosine_density(m: usize, amplitude: f64, shift: f64) -> PeriodicDensity {
        let g = geometry();
        let values = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                1.0 + amplitude * (2.0 * std::f64::consts::PI * (x - shift)).cos()
            })
            .collect();
        PeriodicDensity::new(g, m, values).unwrap()
    }

    #[test]
    fn grid_constructor_enforces_caps() {
        let g = geometry();
        assert!(StaggeredGrid::new(g, 4, 32).is_err());
        assert!(StaggeredGrid::new(g, 32, 4).is_err());
        let g3 = TorusGeometry::new(3, 1.0).unwrap();
        assert!(StaggeredGrid::new(g3, 8, 8).is_err());
    }

    #[test]
    fn equal_densities_have_negligible_objective() {
        let rho = cosine_density(32, 0.4, 0.0);
        let grid = StaggeredGrid::new(geometry(), 32, 8).unwrap();
        let sol = bb_solve(&rho, &rho, &grid, &BbParams::default()).unwrap();
        assert!(sol.objective <= 1e-8, "objective {}", sol.objective);
    }

    #[test]
    fn uniform_densities_are_free() {
        let g = geometry();
        let flat = PeriodicDensity::new(g, 16, vec![2.0; 16]).unwrap();
        let grid = StaggeredGrid::new(g, 16, 8).unwrap();
        let sol = bb_solve(&flat, &flat, &grid, &BbParams::default()).unwrap();
        assert!(sol.objective <= 1e-10);
    }

    #[test]
    fn mass_is_conserved_across_time() {
        let rho0 = cosine_density(32, 0.5, 0.0);
        let rho1 = cosine_density(32, 0.5, 0.25);
        let grid = StaggeredGrid::new(geometry(), 32, 16).unwrap();
        let sol = bb_solve(&rho0, &rho1, &grid, &BbParams::default()).unwrap();
        let masses = sol.masses();
        for w in masses.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn converged_solution_satisfies_discrete_ce() {
        let rho0 = cosine_density(32, 0.5, 0.0);
        let rho1 = cosine_density(32, 0.5, 0.25);
        let grid = StaggeredGrid::new(geometry(), 32, 16).unwrap();
        let params = BbParams::default();
        let sol = bb_solve(&rho0, &rho1, &grid, &params).unwrap();
        assert!(ce_residual_grid(&sol) <= params.tol);
        assert!(sol.min_density() >= -1e-8);
    }

    #[test]
    fn corrupted_momentum_blows_the_residual() {
        let rho0 = cosine_density(32, 0.5, 0.0);
        let rho1 = cosine_density(32, 0.5, 0.25);
        let grid = StaggeredGrid::new(geometry(), 32, 16).unwrap();
        let params = BbParams::default();
        let mut sol = bb_solve(&rho0, &rho1, &grid, &params).unwrap();
        sol.momentum[5] += 1.0;
        assert!(ce_residual_grid(&sol) > 10.0 * params.tol);
    }

    #[test]
    fn intensity_mismatch_is_rejected() {
        let g = geometry();
        let a = PeriodicDensity::new(g, 16, vec![1.0; 16]).unwrap();
        let b = PeriodicDensity::new(g, 16, vec![2.0; 16]).unwrap();
        let grid = StaggeredGrid::new(g, 16, 8).unwrap();
        assert!(matches!(
            bb_solve(&a, &b, &grid, &BbParams::default()),
            Err(Error::IntensityMismatch { .. })
        ));
        assert!(matches!(
            static_grid_reference(&a, &b, 2.0),
            Err(Error::IntensityMismatch { .. })
        ));
    }

    #[test]
    fn static_reference_zero_for_equal_inputs() {
        let rho = cosine_density(64, 0.5, 0.0);
        assert_eq!(static_grid_reference(&rho, &rho, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn static_reference_recovers_translation_cost_of_narrow_bump() {
        // A narrow bump translated by v costs about v^2 per unit mass; the
        // grid makes this exact up to O(h^2).
        let g = geometry();
        let m = 64;
        let bump = |shift: f64| -> PeriodicDensity {
            let values = (0..m)
                .map(|i| {
                    let x = (i as f64 + 0.5) / m as f64;
                    let mut dxs = (x - 0.5 - shift).abs();
                    dxs = dxs.min(1.0 - dxs);
                    (-0.5 * (dxs / 0.05).powi(2)).exp()
                })
                .collect();
            PeriodicDensity::new(g, m, values).unwrap()
        };
        let v = 0.2;
        let rho0 = bump(0.0);
        let mut shifted_values = bump(v).values().to_vec();
        // normalize mass drift from the discrete Gaussian
        let scale = rho0.mean() / (shifted_values.iter().sum::<f64>() / m as f64);
        for val in shifted_values.iter_mut() {
            *val *= scale;
        }
        let rho1 = PeriodicDensity::new(g, m, shifted_values).unwrap();
        let cost = static_grid_reference(&rho0, &rho1, 2.0).unwrap();
        let expected = v * v * rho0.mean();
        assert!(
            (cost - expected).abs() / expected < 0.02,
            "cost {cost} vs expected {expected}"
        );
    }

    #[test]
    fn static_reference_respects_cell_cap() {
        let g = TorusGeometry::new(2, 1.0).unwrap();
        let m = 96; // 9216 cells > 4096
        let rho = PeriodicDensity::new(g, m, vec![1.0; m * m]).unwrap();
        assert!(matches!(
            static_grid_reference(&rho, &rho, 2.0),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn cosine_translate_benchmark_matches_static_reference() {
        let rho0 = cosine_density(64, 0.5, 0.0);
        let rho1 = cosine_density(64, 0.5, 0.25);
        let grid = StaggeredGrid::new(geometry(), 64, 32).unwrap();
        let sol = bb_solve(&rho0, &rho1, &grid, &BbParams::default()).unwrap();
        let reference = static_grid_reference(&rho0, &rho1, 2.0).unwrap();
        let gap = (sol.objective - reference).abs() / reference;
        assert!(
            gap <= 0.05,
            "relative gap {gap}: dynamic {} vs static {reference}",
            sol.objective
        );
    }

    #[test]
    fn time_reversal_symmetry() {
        let rho0 = cosine_density(32, 0.5, 0.0);
        let rho1 = cosine_density(32, 0.5, 0.25);
        let grid = StaggeredGrid::new(geometry(), 32, 16).unwrap();
        let params = BbParams {
            tol: 1e-8,
            ..BbParams::default()
        };
        let fwd = bb_solve(&rho0, &rho1, &grid, &params).unwrap();
        let bwd = bb_solve(&rho1, &rho0, &grid, &params).unwrap();
        let gap = (fwd.objective - bwd.objective).abs() / fwd.objective;
        assert!(gap <= 1e-6, "time reversal gap {gap}");
    }
}
