//! Test functions `Φ_t(ω, y) = h(t) g(y) f_ε(ω, y)` with analytic derivatives
//! through a Gaussian mollifier.
//!
//! `f_ε` is the Gaussian smoothing of a continuous bounded function on
//! `Ω × R^d` along both the flow direction and the vector slot. Its value and
//! both gradients are convolutions against the mollifier (resp. its gradient)
//! and are computed by trapezoidal quadrature on the standardized Gaussian,
//! which converges superalgebraically; the recorded quadrature error bound is
//! conservative.

use crate::dynamics::bumps::{SpaceBump, TimeBump};
use crate::error::{Error, Result};
use crate::torus::{TorusGeometry, TorusPoint};
use std::sync::Arc;

type Scalar = Arc<dyn Fn(f64, &TorusPoint, &[f64]) -> f64 + Send + Sync>;
type Vector = Arc<dyn Fn(f64, &TorusPoint, &[f64]) -> Vec<f64> + Send + Sync>;

/// Member of the test class: compact time support inside `(0, 1)`, compact
/// support in the vector slot, uniformly bounded derivatives, with evaluators
/// for the value, the time derivative, and both gradients.
#[derive(Clone)]
pub struct TestFunction {
    time_support: (f64, f64),
    space_support: Vec<(f64, f64)>,
    derivative_bound: f64,
    value: Scalar,
    dt: Scalar,
    grad_omega: Vector,
    grad_space: Vector,
}

impl TestFunction {
    /// Assemble a test function from explicit evaluators. The caller vouches
    /// for the support and bound declarations; [`audit_derivative_bound`]
    /// spot-checks them by sampling.
    pub fn from_parts(
        time_support: (f64, f64),
        space_support: Vec<(f64, f64)>,
        derivative_bound: f64,
        value: impl Fn(f64, &TorusPoint, &[f64]) -> f64 + Send + Sync + 'static,
        dt: impl Fn(f64, &TorusPoint, &[f64]) -> f64 + Send + Sync + 'static,
        grad_omega: impl Fn(f64, &TorusPoint, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        grad_space: impl Fn(f64, &TorusPoint, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            time_support,
            space_support,
            derivative_bound,
            value: Arc::new(value),
            dt: Arc::new(dt),
            grad_omega: Arc::new(grad_omega),
            grad_space: Arc::new(grad_space),
        }
    }

    pub fn time_support(&self) -> (f64, f64) {
        self.time_support
    }

    pub fn space_support(&self) -> &[(f64, f64)] {
        &self.space_support
    }

    pub fn derivative_bound(&self) -> f64 {
        self.derivative_bound
    }

    pub fn value(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> f64 {
        (self.value)(t, omega, y)
    }

    pub fn dt(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> f64 {
        (self.dt)(t, omega, y)
    }

    pub fn grad_omega(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> Vec<f64> {
        (self.grad_omega)(t, omega, y)
    }

    pub fn grad_space(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> Vec<f64> {
        (self.grad_space)(t, omega, y)
    }
}

/// How the flow gradient is evaluated by [`grad_omega`].
#[derive(Debug, Clone, Copy)]
pub enum GradMode {
    /// Use the stored analytic evaluator.
    Analytic,
    /// Central differences along the flow with the given step.
    Numeric { step: f64 },
}

/// Gradient of `Φ_t` along the flow: the vector pairing with `c'(0)` for
/// every differentiable curve `c` through the identity.
pub fn grad_omega(
    phi: &TestFunction,
    t: f64,
    omega: &TorusPoint,
    y: &[f64],
    mode: GradMode,
) -> Result<Vec<f64>> {
    match mode {
        GradMode::Analytic => Ok(phi.grad_omega(t, omega, y)),
        GradMode::Numeric { step } => {
            if !step.is_finite() || step <= 0.0 {
                return Err(Error::invalid("finite-difference step must be positive"));
            }
            let d = omega.geometry().dimension();
            let mut out = Vec::with_capacity(d);
            for axis in 0..d {
                let mut e = vec![0.0; d];
                e[axis] = step;
                let fwd = phi.value(t, &omega.shift(&e)?, y);
                e[axis] = -step;
                let bwd = phi.value(t, &omega.shift(&e)?, y);
                out.push((fwd - bwd) / (2.0 * step));
            }
            Ok(out)
        }
    }
}

/// Trapezoidal discretization of the standardized Gaussian on `R`: nodes
/// `k·step` for `|k| ≤ half_width`, weights `step·e^{-s²}/√π`.
#[derive(Debug, Clone, Copy)]
pub struct MollifierQuadrature {
    pub step: f64,
    pub half_width: usize,
}

impl Default for MollifierQuadrature {
    fn default() -> Self {
        // |s| <= 6 with step 0.5: truncation and aliasing are both below
        // 1e-15 relative for bounded integrands.
        MollifierQuadrature {
            step: 0.5,
            half_width: 12,
        }
    }
}

impl MollifierQuadrature {
    fn nodes(&self) -> Vec<(f64, f64)> {
        let k = self.half_width as i64;
        (-k..=k)
            .map(|i| {
                let s = i as f64 * self.step;
                (s, self.step * (-s * s).exp() / std::f64::consts::PI.sqrt())
            })
            .collect()
    }

    /// Conservative relative error bound for quadrature of a bounded function
    /// against the standardized Gaussian: truncation plus aliasing.
    pub fn error_bound(&self) -> f64 {
        let t = self.step * self.half_width as f64;
        let truncation = (-t * t).exp();
        let aliasing = (-(std::f64::consts::PI / self.step).powi(2)).exp();
        10.0 * (truncation + aliasing)
    }
}

/// Mollified test function: `Φ_t(ω, y) = h(t) · g(y) · f_ε(ω, y)` where
///
/// `f_ε(ω, x) = ∫∫ ρ_ε(z, u) f(θ_z ω, x - u) dz du`,
///
/// with `ρ_ε` the Gaussian of variance `ε` on `R^{2d}`. All four evaluators
/// are analytic through the mollifier: the gradients integrate `f` against
/// `z ρ_ε / ε` (flow slot) and `-u ρ_ε / ε` (vector slot).
pub fn make_test_function(
    geometry: TorusGeometry,
    h: TimeBump,
    g: SpaceBump,
    f: impl Fn(&TorusPoint, &[f64]) -> f64 + Send + Sync + 'static,
    f_sup: f64,
    eps: f64,
    quad: MollifierQuadrature,
) -> Result<TestFunction> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::invalid(format!("mollifier width must be positive, got {eps}")));
    }
    if g.dimension() != geometry.dimension() {
        return Err(Error::invalid("space bump dimension mismatch"));
    }
    if !f_sup.is_finite() || f_sup < 0.0 {
        return Err(Error::invalid("declared sup bound must be a nonnegative real"));
    }
    let d = geometry.dimension();
    let f = Arc::new(f);
    let nodes = Arc::new(quad.nodes());
    let sigma = (2.0 * eps).sqrt();

    // Shared mollifier sweep: returns (f_eps, grad_omega f_eps, grad_x f_eps).
    let mollify = {
        let f = f.clone();
        let nodes = nodes.clone();
        move |omega: &TorusPoint, x: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let mut value = 0.0;
            let mut gw = vec![0.0; d];
            let mut gx = vec![0.0; d];
            // odometer over 2d quadrature axes: first d for the flow slot,
            // last d for the vector slot
            let mut idx = vec![0usize; 2 * d];
            let mut z = vec![0.0; d];
            let mut u = vec![0.0; d];
            loop {
                let mut weight = 1.0;
                for (a, &i) in idx.iter().enumerate() {
                    let (s, w) = nodes[i];
                    weight *= w;
                    if a < d {
                        z[a] = sigma * s;
                    } else {
                        u[a - d] = sigma * s;
                    }
                }
                let shifted = omega.shift(&z).expect("finite shift");
                let arg: Vec<f64> = x.iter().zip(&u).map(|(&xi, &ui)| xi - ui).collect();
                let fv = f(&shifted, &arg);
                value += weight * fv;
                for a in 0..d {
                    // z/ε and -u/ε weights, in standardized variables
                    gw[a] += weight * fv * z[a] / eps;
                    gx[a] -= weight * fv * u[a] / eps;
                }
                let mut axis = 0;
                loop {
                    if axis == 2 * d {
                        return (value, gw, gx);
                    }
                    idx[axis] += 1;
                    if idx[axis] < nodes.len() {
                        break;
                    }
                    idx[axis] = 0;
                    axis += 1;
                }
            }
        }
    };
    let mollify = Arc::new(mollify);

    // Conservative uniform bound on |∂_t Φ| + ‖∇_Ω Φ‖ + ‖∇_x Φ‖: the factors
    // |h|, |h'|, |g|, ‖∇g‖ are bounded by sampling their compact supports and
    // the mollifier gradient is bounded by f_sup · E|z|/ε per axis.
    let (h_sup, dh_sup) = sample_bump_bounds(&h);
    let (g_sup, dg_sup) = sample_space_bounds(&g);
    let grad_factor = f_sup * (2.0 / (std::f64::consts::PI * eps)).sqrt() * d as f64;
    let derivative_bound = 1.5
        * (dh_sup * g_sup * f_sup
            + h_sup * (dg_sup * f_sup + g_sup * grad_factor)
            + h_sup * g_sup * grad_factor);

    let value = {
        let (h, g, mollify) = (h, g.clone(), mollify.clone());
        move |t: f64, omega: &TorusPoint, y: &[f64]| -> f64 {
            let ht = h.value(t);
            if ht == 0.0 {
                return 0.0;
            }
            let gy = g.value(y);
            if gy == 0.0 {
                return 0.0;
            }
            ht * gy * mollify(omega, y).0
        }
    };
    let dt = {
        let (h, g, mollify) = (h, g.clone(), mollify.clone());
        move |t: f64, omega: &TorusPoint, y: &[f64]| -> f64 {
            let dh = h.derivative(t);
            if dh == 0.0 {
                return 0.0;
            }
            let gy = g.value(y);
            if gy == 0.0 {
                return 0.0;
            }
            dh * gy * mollify(omega, y).0
        }
    };
    let grad_w = {
        let (h, g, mollify) = (h, g.clone(), mollify.clone());
        move |t: f64, omega: &TorusPoint, y: &[f64]| -> Vec<f64> {
            let ht = h.value(t);
            if ht == 0.0 {
                return vec![0.0; d];
            }
            let gy = g.value(y);
            if gy == 0.0 {
                return vec![0.0; d];
            }
            mollify(omega, y).1.into_iter().map(|v| ht * gy * v).collect()
        }
    };
    let grad_x = {
        let (h, g, mollify) = (h, g.clone(), mollify.clone());
        move |t: f64, omega: &TorusPoint, y: &[f64]| -> Vec<f64> {
            let ht = h.value(t);
            if ht == 0.0 {
                return vec![0.0; d];
            }
            let (fe, _, gfx) = mollify(omega, y);
            let gy = g.value(y);
            let dg = g.gradient(y);
            (0..d)
                .map(|a| ht * (dg[a] * fe + gy * gfx[a]))
                .collect()
        }
    };

    Ok(TestFunction::from_parts(
        h.support(),
        g.support(),
        derivative_bound,
        value,
        dt,
        grad_w,
        grad_x,
    ))
}

fn sample_bump_bounds(h: &TimeBump) -> (f64, f64) {
    let (a, b) = h.support();
    let mut sup: f64 = 0.0;
    let mut dsup: f64 = 0.0;
    for k in 0..=400 {
        let t = a + (b - a) * k as f64 / 400.0;
        sup = sup.max(h.value(t).abs());
        dsup = dsup.max(h.derivative(t).abs());
    }
    (sup, dsup)
}

fn sample_space_bounds(g: &SpaceBump) -> (f64, f64) {
    let support = g.support();
    let d = support.len();
    let per_axis = 400f64.powf(1.0 / d as f64).ceil() as usize;
    let mut sup: f64 = 0.0;
    let mut dsup: f64 = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let y: Vec<f64> = idx
            .iter()
            .zip(&support)
            .map(|(&i, &(lo, hi))| lo + (hi - lo) * i as f64 / per_axis as f64)
            .collect();
        sup = sup.max(g.value(&y).abs());
        let grad = g.gradient(&y);
        dsup = dsup.max(grad.iter().map(|x| x * x).sum::<f64>().sqrt());
        let mut axis = 0;
        loop {
            if axis == d {
                return (sup, dsup);
            }
            idx[axis] += 1;
            if idx[axis] <= per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Sample `Φ` and its declared bound at random points; returns the largest
/// observed value of `|∂_t Φ| + ‖∇_Ω Φ‖ + ‖∇_x Φ‖`, which must not exceed
/// the recorded bound.
pub fn audit_derivative_bound(
    phi: &TestFunction,
    geometry: TorusGeometry,
    samples: usize,
    seed: u64,
) -> f64 {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = geometry.dimension();
    let (t0, t1) = phi.time_support();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let t = rng.gen_range(t0..t1);
        let omega = TorusPoint::new(
            geometry,
            (0..d).map(|_| rng.gen_range(0.0..geometry.period())).collect(),
        )
        .expect("valid point");
        let y: Vec<f64> = phi
            .space_support()
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let total = phi.dt(t, &omega, &y).abs()
            + norm(&phi.grad_omega(t, &omega, &y))
            + norm(&phi.grad_space(t, &omega, &y));
        worst = worst.max(total);
    }
    worst
}
