//! Curves of measures on `Ω × R^d`, the displacement geodesic, the kinetic
//! action, and the weak continuity-equation residual.
//!
//! The geodesic built from a balancing kernel places, at time `t`, an atom at
//! `(θ_{tz} ω_i, z)` for every Palm site `ω_i` and kernel displacement `z`.
//! Under the field `V_t(ω, y) = (y, 0)` this curve solves the continuity
//! equation exactly in the continuum, its action equals the kernel cost, and
//! its endpoints project onto the two Palm measures.

use crate::dynamics::characteristics::{integrate_characteristics, CharacteristicPath};
use crate::dynamics::test_function::TestFunction;
use crate::dynamics::vector_field::VectorField;
use crate::error::{Error, Result};
use crate::product::{ProductAtom, ProductMeasure};
use crate::torus::{PalmMeasure, PeriodicPointConfiguration, StationaryModel, TorusPoint};
use crate::transport::{cost_cp, BalancingKernel, SolveMethod};
use serde::Serialize;

const TIME_MATCH_TOL: f64 = 1e-12;

/// How nodes of a curve are meant to be read between grid times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InterpolationRule {
    /// Atoms travel with constant velocity between nodes.
    Displacement,
}

/// Time-indexed family of product probability measures, plus the common mass
/// normalization (the intensity) that converts probability integrals back
/// into Palm units.
#[derive(Clone)]
pub struct CurveOfMeasures {
    times: Vec<f64>,
    nodes: Vec<ProductMeasure>,
    mass_scale: f64,
    interpolation: InterpolationRule,
}

impl CurveOfMeasures {
    pub fn new(
        times: Vec<f64>,
        nodes: Vec<ProductMeasure>,
        mass_scale: f64,
        interpolation: InterpolationRule,
    ) -> Result<Self> {
        if times.len() != nodes.len() || times.len() < 2 {
            return Err(Error::invalid("curve needs matching times and nodes, at least two"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve times must be strictly increasing"));
        }
        if !mass_scale.is_finite() || mass_scale <= 0.0 {
            return Err(Error::invalid("mass scale must be positive"));
        }
        Ok(CurveOfMeasures {
            times,
            nodes,
            mass_scale,
            interpolation,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nodes(&self) -> &[ProductMeasure] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &ProductMeasure {
        &self.nodes[k]
    }

    pub fn mass_scale(&self) -> f64 {
        self.mass_scale
    }

    pub fn interpolation(&self) -> InterpolationRule {
        self.interpolation
    }

    pub fn index_of_time(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&tk| (tk - t).abs() <= TIME_MATCH_TOL)
            .ok_or_else(|| Error::invalid(format!("no curve node at time {t}")))
    }

    /// Replace one node (test corruption hook).
    pub fn with_node(&self, k: usize, node: ProductMeasure) -> Result<Self> {
        if k >= self.nodes.len() {
            return Err(Error::invalid("node index out of range"));
        }
        let mut nodes = self.nodes.clone();
        nodes[k] = node;
        CurveOfMeasures::new(
            self.times.clone(),
            nodes,
            self.mass_scale,
            self.interpolation,
        )
    }
}

/// Displacement geodesic of a balancing kernel: the curve `t ↦ P_t` with
/// atoms `(θ_{tz} ω_i, z)` and masses `pm_i T_i(z) / intensity`, together
/// with its canonical field `V_t(ω, y) = (y, 0)`.
pub fn build_geodesic(
    kernel: &BalancingKernel,
    palm_xi: &PalmMeasure,
    times: &[f64],
) -> Result<(CurveOfMeasures, VectorField)> {
    let atoms = palm_xi.atoms()?;
    let geometry = kernel.geometry();
    geometry.check_same(&palm_xi.geometry())?;
    kernel.matches_palm(palm_xi)?;
    if times.len() < 2 {
        return Err(Error::invalid("time grid needs at least two nodes"));
    }
    let scale = palm_xi.total_mass();
    let mut nodes = Vec::with_capacity(times.len());
    let mut max_speed: f64 = 0.0;
    for &t in times {
        let mut node_atoms = Vec::new();
        for ((site, pm), row) in atoms.iter().zip(kernel.rows()) {
            for (z, mass) in row {
                let moved: Vec<f64> = z.iter().map(|&zi| zi * t).collect();
                node_atoms.push(ProductAtom {
                    omega: site.shift(&moved)?,
                    y: z.clone(),
                    mass: pm * mass / scale,
                });
                max_speed =
                    max_speed.max(z.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
        nodes.push(ProductMeasure::new(geometry, node_atoms)?);
    }
    let curve = CurveOfMeasures::new(
        times.to_vec(),
        nodes,
        scale,
        InterpolationRule::Displacement,
    )?;
    let field = VectorField::displacement(geometry.dimension(), max_speed);
    Ok((curve, field))
}

/// Kinetic action `∫ ‖V_t‖^p_{L^p(P_t)} dt` in Palm units: node-wise exact
/// spatial sums, trapezoidal in time (exact whenever the integrand is
/// constant in `t`, as on a displacement geodesic).
pub fn action(curve: &CurveOfMeasures, field: &VectorField, p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::invalid(format!("exponent must satisfy p > 1, got {p}")));
    }
    let node_values: Vec<f64> = curve
        .nodes()
        .iter()
        .zip(curve.times())
        .map(|(node, &t)| {
            node.atoms()
                .iter()
                .map(|a| a.mass * field.speed(t, &a.omega, &a.y).powf(p))
                .sum()
        })
        .collect();
    Ok(curve.mass_scale() * trapezoid(curve.times(), &node_values))
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Weak continuity-equation residual
/// `|∫ ∫ (∂_t Φ + ⟨V_t, ∇Φ_t⟩) dP_t dt|` over the curve's time grid.
///
/// Space integrals are exact finite sums; the time integral is trapezoidal.
/// Errors if the grid is too coarse to see the test function's time support.
pub fn ce_residual(
    curve: &CurveOfMeasures,
    field: &VectorField,
    phi: &TestFunction,
) -> Result<f64> {
    let (t0, t1) = phi.time_support();
    let inside = curve
        .times()
        .iter()
        .filter(|&&t| t > t0 && t < t1)
        .count();
    let dt_max = curve
        .times()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    if inside < 2 || dt_max >= (t1 - t0) {
        return Err(Error::QuadratureTooCoarse(format!(
            "curve grid (max step {dt_max:.3e}) cannot resolve the time support ({t0}, {t1})"
        )));
    }
    let node_values: Vec<f64> = curve
        .nodes()
        .iter()
        .zip(curve.times())
        .map(|(node, &t)| {
            node.atoms()
                .iter()
                .map(|a| {
                    let (vw, vy) = field.eval(t, &a.omega, &a.y);
                    let gw = phi.grad_omega(t, &a.omega, &a.y);
                    let gy = phi.grad_space(t, &a.omega, &a.y);
                    let advect: f64 = vw.iter().zip(&gw).map(|(v, g)| v * g).sum::<f64>()
                        + vy.iter().zip(&gy).map(|(v, g)| v * g).sum::<f64>();
                    a.mass * (phi.dt(t, &a.omega, &a.y) + advect)
                })
                .sum()
        })
        .collect();
    Ok(trapezoid(curve.times(), &node_values).abs())
}

/// Push `P_0` forward along the characteristic flow to time `t`: each atom
/// `(ω, y, m)` moves to `(θ_{U_t} ω, W_t, m)`.
///
/// `steps` is the number of uniform integrator intervals on `[0, t]`, `tol`
/// the per-interval local error tolerance (`f64::INFINITY` disables
/// subdivision). At `t = 0` the input is returned bit-identically.
pub fn pushforward_flow(
    field: &VectorField,
    p0: &ProductMeasure,
    t: f64,
    steps: usize,
    tol: f64,
) -> Result<ProductMeasure> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::invalid("time must be a nonnegative real"));
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    if steps == 0 {
        return Err(Error::invalid("integrator needs at least one step"));
    }
    let times: Vec<f64> = (0..=steps).map(|k| t * k as f64 / steps as f64).collect();
    let mut atoms = Vec::with_capacity(p0.atoms().len());
    for atom in p0.atoms() {
        let path = integrate_characteristics(field, &atom.omega, &atom.y, &times, tol)?;
        let (u, w) = path.final_state();
        atoms.push(ProductAtom {
            omega: atom.omega.shift(u)?,
            y: w.to_vec(),
            mass: atom.mass,
        });
    }
    ProductMeasure::new(p0.geometry(), atoms)
}

/// One sampled characteristic: the starting frame, the path mass, and the
/// discrete path.
pub struct SampledPath {
    pub omega: TorusPoint,
    pub mass: f64,
    pub path: CharacteristicPath,
}

impl SampledPath {
    /// Evaluation map at grid index `k`: `(θ_{u_k} ω, w_k)`.
    pub fn evaluate(&self, k: usize) -> Result<(TorusPoint, Vec<f64>)> {
        let (u, w) = self.path.state(k);
        Ok((self.omega.shift(u)?, w.to_vec()))
    }
}

/// Path-space representation of the flow: one characteristic per atom when
/// `P_0` has at most `n` atoms (exact enumeration, masses preserved),
/// otherwise `n` i.i.d. mass-weighted draws with equal empirical masses.
pub fn superposition_sample(
    field: &VectorField,
    p0: &ProductMeasure,
    n: usize,
    times: &[f64],
    tol: f64,
    seed: u64,
) -> Result<Vec<SampledPath>> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut picks: Vec<(TorusPoint, Vec<f64>, f64)> = Vec::new();
    if p0.atoms().len() <= n {
        for atom in p0.atoms() {
            picks.push((atom.omega.clone(), atom.y.clone(), atom.mass));
        }
    } else {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = p0.atoms().iter().map(|a| a.mass).sum();
        for _ in 0..n {
            let mut ticket = rng.gen_range(0.0..total);
            let mut chosen = p0.atoms().len() - 1;
            for (idx, atom) in p0.atoms().iter().enumerate() {
                if ticket < atom.mass {
                    chosen = idx;
                    break;
                }
                ticket -= atom.mass;
            }
            let atom = &p0.atoms()[chosen];
            picks.push((atom.omega.clone(), atom.y.clone(), 1.0 / n as f64));
        }
    }
    picks
        .into_iter()
        .map(|(omega, y, mass)| {
            let path = integrate_characteristics(field, &omega, &y, times, tol)?;
            Ok(SampledPath { omega, mass, path })
        })
        .collect()
}

/// Time-`k` pushforward of a sampled path family under the evaluation map.
pub fn paths_to_measure(
    samples: &[SampledPath],
    k: usize,
    geometry: crate::torus::TorusGeometry,
) -> Result<ProductMeasure> {
    let atoms = samples
        .iter()
        .map(|s| {
            let (omega, y) = s.evaluate(k)?;
            Ok(ProductAtom {
                omega,
                y,
                mass: s.mass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ProductMeasure::new(geometry, atoms)
}

/// Identify the curve node at time `t` with a point model: the node's torus
/// marginal, rescaled by the mass scale, must be the Palm measure of a
/// configuration (weights `mass · scale · L^d`). The identification is
/// verified by a Palm round trip and refused otherwise.
pub fn extract_xi_t(curve: &CurveOfMeasures, t: f64) -> Result<StationaryModel> {
    let k = curve.index_of_time(t)?;
    let node = curve.node(k);
    let geometry = node.geometry();
    let marginal = node.omega_marginal(curve.mass_scale());
    let vol = geometry.cell_volume();
    let atoms: Vec<TorusPoint> = marginal.iter().map(|(p, _)| p.clone()).collect();
    let weights: Vec<f64> = marginal.iter().map(|(_, m)| m * vol).collect();
    let config = PeriodicPointConfiguration::new(geometry, atoms, weights)
        .map_err(|e| Error::NotRealizable(format!("torus marginal at t = {t}: {e}")))?;
    let model = StationaryModel::Points(config);
    // Round trip: the Palm measure of the extracted model must reproduce the
    // marginal within 1e-12 relative.
    let palm = model.palm_measure();
    let palm_atoms = palm.atoms().expect("point model");
    if palm_atoms.len() != marginal.len() {
        return Err(Error::NotRealizable(format!(
            "Palm round trip changed the atom count at t = {t}"
        )));
    }
    for ((site, mass), (want_site, want_mass)) in palm_atoms.iter().zip(&marginal) {
        let pos_err = site.dist(want_site)?;
        let mass_err = (mass - want_mass).abs();
        let scale = want_mass.abs().max(1.0);
        if pos_err > 1e-12 * geometry.period().max(1.0) || mass_err > 1e-12 * scale {
            return Err(Error::NotRealizable(format!(
                "Palm round trip mismatch at t = {t}: position {pos_err:.3e}, mass {mass_err:.3e}"
            )));
        }
    }
    Ok(model)
}

/// Outcome of one weak-continuity comparison: the measured static cost
/// between two extracted configurations against the restricted action bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeakContinuityCheck {
    pub measured: f64,
    pub bound: f64,
}

impl WeakContinuityCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.measured <= self.bound + tol
    }
}

/// Compare `c_p(ξ_r, ξ_t)` against the action of the curve restricted to
/// `[r, t]`; on solutions of the continuity equation the action dominates.
pub fn weak_continuity_bound(
    curve: &CurveOfMeasures,
    field: &VectorField,
    p: f64,
    r: f64,
    t: f64,
) -> Result<WeakContinuityCheck> {
    if r > t {
        return Err(Error::invalid("need r <= t"));
    }
    if (r - t).abs() <= TIME_MATCH_TOL {
        return Ok(WeakContinuityCheck {
            measured: 0.0,
            bound: 0.0,
        });
    }
    let ki = curve.index_of_time(r)?;
    let kj = curve.index_of_time(t)?;
    let xi_r = extract_xi_t(curve, r)?;
    let xi_t = extract_xi_t(curve, t)?;
    let measured = cost_cp(&xi_r, &xi_t, p, SolveMethod::ExactLp)?.cost;
    let times = &curve.times()[ki..=kj];
    let values: Vec<f64> = curve.nodes()[ki..=kj]
        .iter()
        .zip(times)
        .map(|(node, &s)| {
            node.atoms()
                .iter()
                .map(|a| a.mass * field.speed(s, &a.omega, &a.y).powf(p))
                .sum()
        })
        .collect();
    let bound = curve.mass_scale() * trapezoid(times, &values);
    Ok(WeakContinuityCheck { measured, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::bumps::{SpaceBump, TimeBump};
    use crate::dynamics::characteristics::uniform_grid;
    use crate::dynamics::test_function::{make_test_function, MollifierQuadrature};
    use crate::torus::{PeriodicPointConfiguration, TorusGeometry};
    use approx::assert_abs_diff_eq;

    fn geom(period: f64) -> TorusGeometry {
        TorusGeometry::new(1, period).unwrap()
    }

    fn lattice(g: TorusGeometry, coords: &[f64]) -> StationaryModel {
        StationaryModel::Points(
            PeriodicPointConfiguration::unit_weights(
                g,
                coords.iter().map(|&c| vec![c]).collect(),
            )
            .unwrap(),
        )
    }

    fn shifted_pair() -> (StationaryModel, StationaryModel) {
        let g = geom(2.0);
        (lattice(g, &[0.0, 1.0]), lattice(g, &[0.25, 1.25]))
    }

    fn shifted_geodesic(n: usize) -> (CurveOfMeasures, VectorField, f64) {
        let (xi, eta) = shifted_pair();
        let report = cost_cp(&xi, &eta, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let (curve, field) = build_geodesic(&report.kernel, &palm, &uniform_grid(n)).unwrap();
        (curve, field, report.cost)
    }

    fn mollified_phi(g: TorusGeometry) -> TestFunction {
        // the period-1 harmonic is invariant under the half-period lattice
        // shift, so two-atom sums do not cancel
        make_test_function(
            g,
            TimeBump::unit_interior(0.15).unwrap(),
            SpaceBump::symmetric(1, 1.0).unwrap(),
            |w: &TorusPoint, _| {
                let x = w.coords()[0];
                (2.0 * std::f64::consts::PI * x).cos()
                    + 0.3 * (std::f64::consts::PI * x).sin()
            },
            1.3,
            0.05,
            MollifierQuadrature::default(),
        )
        .unwrap()
    }

    #[test]
    fn dirac_kernel_geodesic_is_constant_with_zero_action() {
        let g = geom(2.0);
        let xi = lattice(g, &[0.0, 1.0]);
        let report = cost_cp(&xi, &xi, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let (curve, field) = build_geodesic(&report.kernel, &palm, &uniform_grid(8)).unwrap();
        assert_eq!(action(&curve, &field, 2.0).unwrap(), 0.0);
        for node in curve.nodes() {
            for (a, b) in node.atoms().iter().zip(curve.node(0).atoms()) {
                assert_eq!(a.omega, b.omega);
            }
        }
    }

    #[test]
    fn geodesic_action_equals_static_cost() {
        let (curve, field, static_cost) = shifted_geodesic(16);
        let act = action(&curve, &field, 2.0).unwrap();
        assert_abs_diff_eq!(act, static_cost, epsilon = 1e-12);
        assert_abs_diff_eq!(act, 0.0625, epsilon = 1e-12);
    }

    #[test]
    fn time_rescaled_curve_has_strictly_larger_action() {
        // Traverse the same geodesic at double speed during the first half
        // and stand still afterwards; Jensen makes this strictly worse.
        let (xi, eta) = shifted_pair();
        let report = cost_cp(&xi, &eta, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let g = palm.geometry();
        let scale = palm.total_mass();
        let times = uniform_grid(32);
        let (base_curve, base_field) = build_geodesic(&report.kernel, &palm, &times).unwrap();
        // node of the base geodesic at warped time min(2t, 1), built directly
        let mut nodes = Vec::new();
        for &t in &times {
            let w = (2.0 * t).min(1.0);
            let mut atoms = Vec::new();
            for ((site, pm), row) in palm.atoms().unwrap().iter().zip(report.kernel.rows()) {
                for (z, mass) in row {
                    let moved: Vec<f64> = z.iter().map(|&zi| zi * w).collect();
                    atoms.push(ProductAtom {
                        omega: site.shift(&moved).unwrap(),
                        y: z.clone(),
                        mass: pm * mass / scale,
                    });
                }
            }
            nodes.push(ProductMeasure::new(g, atoms).unwrap());
        }
        let rescaled = CurveOfMeasures::new(
            times.clone(),
            nodes,
            base_curve.mass_scale(),
            InterpolationRule::Displacement,
        )
        .unwrap();
        // matching field: doubled displacement speed then zero
        let rescaled_field = VectorField::new(
            |t, _, y: &[f64]| {
                if t < 0.5 {
                    (y.iter().map(|v| 2.0 * v).collect(), vec![0.0; y.len()])
                } else {
                    (vec![0.0; y.len()], vec![0.0; y.len()])
                }
            },
            1.0,
            2.0,
        );
        let base_action = action(&base_curve, &base_field, 2.0).unwrap();
        let rescaled_action = action(&rescaled, &rescaled_field, 2.0).unwrap();
        assert!(
            rescaled_action > base_action * 1.5,
            "rescaled {rescaled_action} vs base {base_action}"
        );
    }

    #[test]
    fn ce_residual_vanishes_for_static_curve_with_zero_field() {
        let g = geom(2.0);
        let xi = lattice(g, &[0.0, 1.0]);
        let report = cost_cp(&xi, &xi, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let (curve, _) = build_geodesic(&report.kernel, &palm, &uniform_grid(64)).unwrap();
        let phi = mollified_phi(g);
        let residual = ce_residual(&curve, &VectorField::zero(1), &phi).unwrap();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn ce_residual_decays_superquadratically_on_geodesics() {
        let g = geom(2.0);
        let phi = mollified_phi(g);
        let mut residuals = Vec::new();
        for n in [8, 16, 32] {
            let (curve, field, _) = shifted_geodesic(n);
            residuals.push(ce_residual(&curve, &field, &phi).unwrap());
        }
        for pair in residuals.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                order >= 2.0,
                "observed order {order} from residuals {residuals:?}"
            );
        }
    }

    #[test]
    fn ce_residual_detects_corrupted_node() {
        let g = geom(2.0);
        let phi = mollified_phi(g);
        let (curve, field, _) = shifted_geodesic(32);
        let clean = ce_residual(&curve, &field, &phi).unwrap();
        // shove the midpoint node's atoms
        let k = curve.index_of_time(0.5).unwrap();
        let moved = ProductMeasure::new(
            g,
            curve
                .node(k)
                .atoms()
                .iter()
                .map(|a| ProductAtom {
                    omega: a.omega.shift(&[0.21]).unwrap(),
                    y: a.y.clone(),
                    mass: a.mass,
                })
                .collect(),
        )
        .unwrap();
        let corrupted = curve.with_node(k, moved).unwrap();
        let dirty = ce_residual(&corrupted, &field, &phi).unwrap();
        assert!(
            dirty > 100.0 * clean.max(1e-12),
            "clean {clean} vs corrupted {dirty}"
        );
    }

    #[test]
    fn ce_residual_requires_grid_resolving_the_support() {
        let g = geom(2.0);
        let phi = mollified_phi(g);
        let (curve, field, _) = shifted_geodesic(1);
        assert!(matches!(
            ce_residual(&curve, &field, &phi),
            Err(Error::QuadratureTooCoarse(_))
        ));
    }

    #[test]
    fn pushforward_flow_is_identity_at_time_zero() {
        let (curve, field, _) = shifted_geodesic(4);
        let p0 = curve.node(0).clone();
        let back = pushforward_flow(&field, &p0, 0.0, 8, 1e-10).unwrap();
        assert_eq!(p0, back);
    }

    #[test]
    fn pushforward_matches_geodesic_nodes() {
        // Comparison-principle surrogate: the numerically integrated flow and
        // the analytic displacement curve coincide node-wise.
        let (curve, field, _) = shifted_geodesic(8);
        let p0 = curve.node(0).clone();
        for (k, &t) in curve.times().iter().enumerate().skip(1) {
            let flowed = pushforward_flow(&field, &p0, t, 16, 1e-12).unwrap();
            let node = curve.node(k);
            for (a, b) in flowed.atoms().iter().zip(node.atoms()) {
                assert!(a.omega.dist(&b.omega).unwrap() <= 1e-9);
                assert_abs_diff_eq!(a.y[0], b.y[0], epsilon = 1e-9);
                assert_abs_diff_eq!(a.mass, b.mass, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pushforward_endpoint_is_target_palm() {
        let (xi, eta) = shifted_pair();
        let report = cost_cp(&xi, &eta, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let (curve, field) = build_geodesic(&report.kernel, &palm, &uniform_grid(4)).unwrap();
        let p1 = pushforward_flow(&field, curve.node(0), 1.0, 32, 1e-12).unwrap();
        let marginal = p1.omega_marginal(curve.mass_scale());
        let eta_palm = eta.palm_measure();
        for ((site, mass), (want, want_mass)) in marginal.iter().zip(eta_palm.atoms().unwrap()) {
            assert!(site.dist(want).unwrap() <= 1e-9);
            assert_abs_diff_eq!(mass, want_mass, epsilon = 1e-12);
        }
    }

    #[test]
    fn superposition_enumeration_reproduces_pushforward_exactly() {
        let (curve, field, _) = shifted_geodesic(8);
        let p0 = curve.node(0).clone();
        let samples =
            superposition_sample(&field, &p0, 16, curve.times(), 1e-12, 7).unwrap();
        assert_eq!(samples.len(), p0.atoms().len());
        for (k, _) in curve.times().iter().enumerate() {
            let via_paths = paths_to_measure(&samples, k, p0.geometry()).unwrap();
            let t = curve.times()[k];
            let direct = pushforward_flow(&field, &p0, t, k.max(1), 1e-12).unwrap();
            for (a, b) in via_paths.atoms().iter().zip(direct.atoms()) {
                assert!(a.omega.dist(&b.omega).unwrap() <= 1e-9);
                assert_abs_diff_eq!(a.mass, b.mass, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn superposition_action_estimate_matches_field_action() {
        let (curve, field, static_cost) = shifted_geodesic(16);
        let p0 = curve.node(0).clone();
        let samples =
            superposition_sample(&field, &p0, 16, curve.times(), 1e-12, 7).unwrap();
        // Σ m ∫ ‖Ẋ‖^p dt with Ẋ from discrete differences of the paths
        let mut total = 0.0;
        for s in &samples {
            let times = s.path.times();
            for k in 0..times.len() - 1 {
                let dt = times[k + 1] - times[k];
                let (u0, w0) = s.path.state(k);
                let (u1, w1) = s.path.state(k + 1);
                let speed2: f64 = u0
                    .iter()
                    .zip(u1)
                    .chain(w0.iter().zip(w1))
                    .map(|(a, b)| ((b - a) / dt).powi(2))
                    .sum();
                total += s.mass * speed2 * dt;
            }
        }
        total *= curve.mass_scale();
        assert_abs_diff_eq!(total, static_cost, epsilon = 1e-9);
    }

    #[test]
    fn adjacent_node_gaps_vanish_under_refinement() {
        // weak-continuity surrogate: the largest W_p gap between adjacent
        // nodes halves when the grid is refined
        use crate::product::wasserstein_product;
        let mut worst = Vec::new();
        for n in [4usize, 8, 16] {
            let (curve, _, _) = shifted_geodesic(n);
            let mut gap: f64 = 0.0;
            for pair in curve.nodes().windows(2) {
                let (w2, _) = wasserstein_product(&pair[0], &pair[1], 2.0).unwrap();
                gap = gap.max(w2.sqrt());
            }
            worst.push(gap);
        }
        assert!(worst[1] <= 0.6 * worst[0]);
        assert!(worst[2] <= 0.6 * worst[1]);
    }

    #[test]
    fn constant_field_preserves_a_uniform_grid_marginal() {
        // a frame-grid surrogate of the uniform law is invariant under
        // translation by a multiple of its spacing
        let g = geom(1.0);
        let m = 8;
        let p0 = ProductMeasure::new(
            g,
            (0..m)
                .map(|i| ProductAtom {
                    omega: TorusPoint::new(g, vec![i as f64 / m as f64]).unwrap(),
                    y: vec![0.0],
                    mass: 1.0 / m as f64,
                })
                .collect(),
        )
        .unwrap();
        let v = 2.0 / m as f64;
        let field = VectorField::constant(vec![v]);
        let moved = pushforward_flow(&field, &p0, 1.0, 8, 1e-12).unwrap();
        let mut got: Vec<f64> = moved.atoms().iter().map(|a| a.omega.coords()[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        for (a, b) in got.iter().zip(&want) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling_branch_draws_mass_weighted_paths() {
        let (curve, field, _) = shifted_geodesic(4);
        let p0 = curve.node(0).clone();
        // fewer samples than atoms forces the i.i.d. branch
        let n = p0.atoms().len() - 1;
        let samples =
            superposition_sample(&field, &p0, n, curve.times(), 1e-12, 99).unwrap();
        assert_eq!(samples.len(), n);
        for s in &samples {
            assert_abs_diff_eq!(s.mass, 1.0 / n as f64, epsilon = 1e-15);
        }
        // deterministic for a fixed seed
        let again = superposition_sample(&field, &p0, n, curve.times(), 1e-12, 99).unwrap();
        for (a, b) in samples.iter().zip(&again) {
            assert_eq!(a.omega, b.omega);
        }
    }

    #[test]
    fn zero_field_paths_are_constant() {
        let g = geom(1.0);
        let p0 = ProductMeasure::new(
            g,
            vec![ProductAtom {
                omega: TorusPoint::new(g, vec![0.4]).unwrap(),
                y: vec![0.3],
                mass: 1.0,
            }],
        )
        .unwrap();
        let samples = superposition_sample(
            &VectorField::zero(1),
            &p0,
            4,
            &uniform_grid(8),
            1e-12,
            1,
        )
        .unwrap();
        for s in &samples {
            for k in 0..s.path.times().len() {
                let (u, w) = s.path.state(k);
                assert_eq!(u[0], 0.0);
                assert_eq!(w[0], 0.3);
            }
        }
    }

    #[test]
    fn extract_endpoints_and_midpoint() {
        let (xi, eta) = shifted_pair();
        let report = cost_cp(&xi, &eta, 2.0, SolveMethod::ExactLp).unwrap();
        let palm = xi.palm_measure();
        let (curve, _) = build_geodesic(&report.kernel, &palm, &uniform_grid(4)).unwrap();

        let at0 = extract_xi_t(&curve, 0.0).unwrap();
        let source = xi.as_points().unwrap();
        let got0 = at0.as_points().unwrap();
        for (a, b) in got0.atoms().iter().zip(source.atoms()) {
            assert!(a.dist(b).unwrap() <= 1e-12);
        }

        let at1 = extract_xi_t(&curve, 1.0).unwrap();
        let target = eta.as_points().unwrap();
        let got1 = at1.as_points().unwrap();
        for (a, b) in got1.atoms().iter().zip(target.atoms()) {
            assert!(a.dist(b).unwrap() <= 1e-9);
        }

        let mid = extract_xi_t(&curve, 0.5).unwrap();
        let got_mid = mid.as_points().unwrap();
        let expected = [0.125, 1.125];
        for (a, &want) in got_mid.atoms().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a.coords()[0], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn weak_continuity_bound_is_tight_on_full_interval() {
        let (curve, field, static_cost) = shifted_geodesic(8);
        let check = weak_continuity_bound(&curve, &field, 2.0, 0.0, 1.0).unwrap();
        assert!(check.holds(1e-9));
        assert_abs_diff_eq!(check.measured, static_cost, epsilon = 1e-12);
        assert_abs_diff_eq!(check.bound, static_cost, epsilon = 1e-12);

        let degenerate = weak_continuity_bound(&curve, &field, 2.0, 0.5, 0.5).unwrap();
        assert_eq!((degenerate.measured, degenerate.bound), (0.0, 0.0));
    }

    #[test]
    fn weak_continuity_half_interval_closed_form() {
        // Displacement z = 0.25: measured = (z/2)^2 / L^d-normalization,
        // bound = z^2/2 in the same units.
        let (curve, field, _) = shifted_geodesic(8);
        let check = weak_continuity_bound(&curve, &field, 2.0, 0.0, 0.5).unwrap();
        assert!(check.holds(1e-9));
        assert_abs_diff_eq!(check.measured, 0.125f64.powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(check.bound, 0.25f64.powi(2) / 2.0, epsilon = 1e-12);
    }
}
