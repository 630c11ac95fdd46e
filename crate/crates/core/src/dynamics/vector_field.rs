//! Time-dependent vector fields `V_t(ω, y) ∈ R^{2d}` on `Ω × R^d`.
//!
//! The first `d` components drive the flow coordinate, the last `d` the
//! vector coordinate. Sup and Lipschitz bounds are caller-declared (the
//! integrability assumptions of the dynamic formulation) and spot-audited by
//! sampling rather than certified symbolically.

use crate::torus::{dist_product, TorusGeometry, TorusPoint};
use std::sync::Arc;

type FieldEval = Arc<dyn Fn(f64, &TorusPoint, &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

#[derive(Clone)]
pub struct VectorField {
    eval: FieldEval,
    sup_bound: f64,
    lipschitz: f64,
}

impl VectorField {
    pub fn new(
        eval: impl Fn(f64, &TorusPoint, &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
        sup_bound: f64,
        lipschitz: f64,
    ) -> Self {
        VectorField {
            eval: Arc::new(eval),
            sup_bound,
            lipschitz,
        }
    }

    /// The zero field.
    pub fn zero(dimension: usize) -> Self {
        VectorField::new(move |_, _, _| (vec![0.0; dimension], vec![0.0; dimension]), 0.0, 0.0)
    }

    /// Constant flow velocity `v`, zero vector velocity.
    pub fn constant(v: Vec<f64>) -> Self {
        let sup = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        VectorField::new(move |_, _, _| (v.clone(), vec![0.0; v.len()]), sup, 0.0)
    }

    /// The displacement field `V_t(ω, y) = (y, 0)`: each site moves with the
    /// constant velocity stored in its vector slot. On a curve supported in
    /// `‖y‖ ≤ R` its sup bound is `R` and its Lipschitz constant 1.
    pub fn displacement(dimension: usize, radius: f64) -> Self {
        VectorField::new(
            move |_, _, y: &[f64]| (y.to_vec(), vec![0.0; dimension]),
            radius,
            1.0,
        )
    }

    pub fn eval(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.eval)(t, omega, y)
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `‖V_t(ω, y)‖` as a vector in `R^{2d}`.
    pub fn speed(&self, t: f64, omega: &TorusPoint, y: &[f64]) -> f64 {
        let (a, b) = self.eval(t, omega, y);
        a.iter().chain(b.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Sample the field over a region and report the observed sup and the
    /// largest finite-difference Lipschitz quotient, for comparison against
    /// the declared bounds.
    pub fn audit(
        &self,
        geometry: TorusGeometry,
        y_radius: f64,
        samples: usize,
        seed: u64,
    ) -> FieldAudit {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = geometry.dimension();
        let random_point = |rng: &mut ChaCha8Rng| {
            let omega = TorusPoint::new(
                geometry,
                (0..d).map(|_| rng.gen_range(0.0..geometry.period())).collect(),
            )
            .expect("valid point");
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-y_radius..y_radius)).collect();
            (omega, y)
        };
        let mut observed_sup: f64 = 0.0;
        let mut observed_lipschitz: f64 = 0.0;
        for _ in 0..samples {
            let t = rng.gen_range(0.0..1.0);
            let (omega_a, ya) = random_point(&mut rng);
            let (omega_b, yb) = random_point(&mut rng);
            observed_sup = observed_sup.max(self.speed(t, &omega_a, &ya));
            let dist = dist_product((&omega_a, &ya[..]), (&omega_b, &yb[..]))
                .unwrap_or(f64::INFINITY);
            if dist > 1e-9 {
                let (aa, ab) = self.eval(t, &omega_a, &ya);
                let (ba, bb) = self.eval(t, &omega_b, &yb);
                let diff: f64 = aa
                    .iter()
                    .chain(ab.iter())
                    .zip(ba.iter().chain(bb.iter()))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                observed_lipschitz = observed_lipschitz.max(diff / dist);
            }
        }
        FieldAudit {
            observed_sup,
            observed_lipschitz,
            declared_sup: self.sup_bound,
            declared_lipschitz: self.lipschitz,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldAudit {
    pub observed_sup: f64,
    pub observed_lipschitz: f64,
    pub declared_sup: f64,
    pub declared_lipschitz: f64,
}

impl FieldAudit {
    pub fn holds(&self) -> bool {
        self.observed_sup <= self.declared_sup + 1e-12
            && self.observed_lipschitz <= self.declared_lipschitz + 1e-9
    }
}
