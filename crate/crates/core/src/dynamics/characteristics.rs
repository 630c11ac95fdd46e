//! Characteristic flow of a vector field: the frozen-frame ODE
//! `Ẋ_t = G^ω_t(X_t)` with `G^ω_t(x, y) = V_t(θ_x ω, y)` and `X_0 = (0, y)`.
//!
//! Integration is classical fourth order (one-step RK4) on the caller's time
//! grid, with optional step-halving error control inside each interval.

use crate::dynamics::vector_field::VectorField;
use crate::error::{Error, Result};
use crate::torus::TorusPoint;

/// Discrete characteristic path `X_t = (U_t, W_t) ∈ R^{2d}` sampled on a
/// time grid, starting from `X_0 = (0, y)`.
#[derive(Debug, Clone)]
pub struct CharacteristicPath {
    times: Vec<f64>,
    states: Vec<(Vec<f64>, Vec<f64>)>,
}

impl CharacteristicPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.states
    }

    /// `(U_t, W_t)` at grid index `k`.
    pub fn state(&self, k: usize) -> (&[f64], &[f64]) {
        (&self.states[k].0, &self.states[k].1)
    }

    pub fn final_state(&self) -> (&[f64], &[f64]) {
        self.state(self.states.len() - 1)
    }
}

fn rk4_step(
    field: &VectorField,
    omega: &TorusPoint,
    t: f64,
    dt: f64,
    state: &[f64],
) -> Result<Vec<f64>> {
    let d = state.len() / 2;
    let eval = |t: f64, s: &[f64]| -> Result<Vec<f64>> {
        let frame = omega.shift(&s[..d])?;
        let (a, b) = field.eval(t, &frame, &s[d..]);
        Ok(a.into_iter().chain(b).collect())
    };
    let k1 = eval(t, state)?;
    let mid1: Vec<f64> = state.iter().zip(&k1).map(|(x, k)| x + 0.5 * dt * k).collect();
    let k2 = eval(t + 0.5 * dt, &mid1)?;
    let mid2: Vec<f64> = state.iter().zip(&k2).map(|(x, k)| x + 0.5 * dt * k).collect();
    let k3 = eval(t + 0.5 * dt, &mid2)?;
    let end: Vec<f64> = state.iter().zip(&k3).map(|(x, k)| x + dt * k).collect();
    let k4 = eval(t + dt, &end)?;
    Ok(state
        .iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One grid interval with optional recursive step halving: compares a full
/// step against two half steps and subdivides while the discrepancy exceeds
/// `tol` (pass `f64::INFINITY` for plain fixed-step RK4).
fn advance(
    field: &VectorField,
    omega: &TorusPoint,
    t: f64,
    dt: f64,
    state: &[f64],
    tol: f64,
    depth: usize,
) -> Result<Vec<f64>> {
    let full = rk4_step(field, omega, t, dt, state)?;
    if !tol.is_finite() {
        return Ok(full);
    }
    let half = rk4_step(field, omega, t, 0.5 * dt, state)?;
    let two_half = rk4_step(field, omega, t + 0.5 * dt, 0.5 * dt, &half)?;
    let err = full
        .iter()
        .zip(&two_half)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / 15.0;
    if err <= tol {
        return Ok(two_half);
    }
    if depth >= 24 {
        return Err(Error::NoConvergence {
            iterations: depth,
            residual: err,
            trace: Vec::new(),
        });
    }
    let mid = advance(field, omega, t, 0.5 * dt, state, tol, depth + 1)?;
    advance(field, omega, t + 0.5 * dt, 0.5 * dt, &mid, tol, depth + 1)
}

/// Integrate the characteristic ODE from `(0, y)` along a time grid.
///
/// `tol` is the per-interval local error tolerance for step rejection;
/// `f64::INFINITY` disables subdivision (useful for convergence studies).
pub fn integrate_characteristics(
    field: &VectorField,
    omega: &TorusPoint,
    y: &[f64],
    times: &[f64],
    tol: f64,
) -> Result<CharacteristicPath> {
    if times.len() < 2 {
        return Err(Error::invalid("time grid needs at least two nodes"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    let d = omega.geometry().dimension();
    if y.len() != d {
        return Err(Error::invalid("initial vector slot has wrong dimension"));
    }
    let mut state: Vec<f64> = vec![0.0; d].into_iter().chain(y.iter().copied()).collect();
    let mut states = Vec::with_capacity(times.len());
    states.push((state[..d].to_vec(), state[d..].to_vec()));
    for w in times.windows(2) {
        state = advance(field, omega, w[0], w[1] - w[0], &state, tol, 0)?;
        states.push((state[..d].to_vec(), state[d..].to_vec()));
    }
    Ok(CharacteristicPath {
        times: times.to_vec(),
        states,
    })
}

/// Uniform grid `0 = t_0 < .. < t_n = 1`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGeometry;
    use approx::assert_abs_diff_eq;

    fn origin(period: f64) -> TorusPoint {
        TorusPoint::new(TorusGeometry::new(1, period).unwrap(), vec![0.0]).unwrap()
    }

    #[test]
    fn constant_field_is_integrated_exactly() {
        let field = VectorField::constant(vec![0.7]);
        let omega = origin(1.0);
        let path =
            integrate_characteristics(&field, &omega, &[0.4], &uniform_grid(8), f64::INFINITY)
                .unwrap();
        for (k, &t) in path.times().iter().enumerate() {
            let (u, w) = path.state(k);
            assert_abs_diff_eq!(u[0], 0.7 * t, epsilon = 1e-14);
            assert_abs_diff_eq!(w[0], 0.4, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_field_freezes_the_state() {
        let field = VectorField::zero(1);
        let omega = origin(2.0);
        let path =
            integrate_characteristics(&field, &omega, &[-0.3], &uniform_grid(4), f64::INFINITY)
                .unwrap();
        for k in 0..path.times().len() {
            let (u, w) = path.state(k);
            assert_eq!(u[0], 0.0);
            assert_eq!(w[0], -0.3);
        }
    }

    #[test]
    fn smooth_field_matches_half_step_reference() {
        // u' = a(ω + u) with a smooth and 1-periodic in the frame coordinate.
        let field = VectorField::new(
            |_, w: &TorusPoint, _| {
                (vec![0.3 + 0.2 * (2.0 * std::f64::consts::PI * w.coords()[0]).sin()], vec![0.0])
            },
            0.5,
            0.2 * 2.0 * std::f64::consts::PI,
        );
        let omega = origin(1.0);
        let coarse =
            integrate_characteristics(&field, &omega, &[0.0], &uniform_grid(64), f64::INFINITY)
                .unwrap();
        let fine =
            integrate_characteristics(&field, &omega, &[0.0], &uniform_grid(128), f64::INFINITY)
                .unwrap();
        let (uc, _) = coarse.final_state();
        let (uf, _) = fine.final_state();
        assert_abs_diff_eq!(uc[0], uf[0], epsilon = 1e-8);
    }

    #[test]
    fn observed_convergence_order_is_four() {
        let field = VectorField::new(
            |_, w: &TorusPoint, _| {
                (vec![1.0 + 0.5 * (2.0 * std::f64::consts::PI * w.coords()[0]).cos()], vec![0.0])
            },
            1.5,
            0.5 * 2.0 * std::f64::consts::PI,
        );
        let omega = origin(1.0);
        let reference =
            integrate_characteristics(&field, &omega, &[0.0], &uniform_grid(4096), f64::INFINITY)
                .unwrap();
        let (uref, _) = reference.final_state();
        let mut errors = Vec::new();
        for n in [8, 16, 32] {
            let path =
                integrate_characteristics(&field, &omega, &[0.0], &uniform_grid(n), f64::INFINITY)
                    .unwrap();
            let (u, _) = path.final_state();
            errors.push((u[0] - uref[0]).abs());
        }
        let ratio0 = errors[0] / errors[1];
        let ratio1 = errors[1] / errors[2];
        // order 4 means ratios near 16; accept a factor of two either way
        assert!(
            (8.0..=32.0).contains(&ratio0) && (8.0..=32.0).contains(&ratio1),
            "ratios {ratio0} {ratio1} from errors {errors:?}"
        );
    }

    #[test]
    fn step_control_rejects_overly_coarse_steps() {
        let field = VectorField::new(
            |_, w: &TorusPoint, _| {
                (vec![(2.0 * std::f64::consts::PI * 3.0 * w.coords()[0]).sin()], vec![0.0])
            },
            1.0,
            6.0 * std::f64::consts::PI,
        );
        let omega = origin(1.0);
        // two-node grid forces internal subdivision to meet the tolerance
        let controlled =
            integrate_characteristics(&field, &omega, &[0.0], &[0.0, 1.0], 1e-12).unwrap();
        let reference =
            integrate_characteristics(&field, &omega, &[0.0], &uniform_grid(2048), f64::INFINITY)
                .unwrap();
        let (uc, _) = controlled.final_state();
        let (ur, _) = reference.final_state();
        assert_abs_diff_eq!(uc[0], ur[0], epsilon = 1e-9);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let field = VectorField::zero(1);
        let omega = origin(1.0);
        assert!(integrate_characteristics(&field, &omega, &[0.0], &[0.0], 1e-9).is_err());
        assert!(
            integrate_characteristics(&field, &omega, &[0.0], &[0.0, 0.0], 1e-9).is_err()
        );
    }
}
