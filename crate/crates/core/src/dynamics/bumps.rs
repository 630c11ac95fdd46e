//! Smooth compactly supported bump functions with analytic derivatives.
//!
//! The classic profile `exp(-1/((t-a)(b-t)))` vanishes with all derivatives
//! at the endpoints, so quadrature against these bumps converges faster than
//! any power of the step and time integrals over their support telescope
//! exactly.

use crate::error::{Error, Result};

/// Scalar bump supported on the open interval `(a, b)`, normalized to peak
/// value 1 at the midpoint.
#[derive(Debug, Clone, Copy)]
pub struct TimeBump {
    a: f64,
    b: f64,
    /// `4 / (b - a)^2`, the exponent offset that normalizes the peak.
    offset: f64,
}

impl TimeBump {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::invalid(format!("invalid bump interval ({a}, {b})")));
        }
        Ok(TimeBump {
            a,
            b,
            offset: 4.0 / ((b - a) * (b - a)),
        })
    }

    /// Bump supported strictly inside `(0, 1)`.
    pub fn unit_interior(margin: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(Error::invalid("margin must lie in [0, 0.5)"));
        }
        TimeBump::new(margin, 1.0 - margin)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            return 0.0;
        }
        let u = (t - self.a) * (self.b - t);
        (self.offset - 1.0 / u).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let v = self.value(t);
        if v == 0.0 {
            return 0.0;
        }
        let u = (t - self.a) * (self.b - t);
        v * (self.a + self.b - 2.0 * t) / (u * u)
    }
}

/// Product of per-axis bumps on an axis-aligned box in `R^d`.
#[derive(Debug, Clone)]
pub struct SpaceBump {
    axes: Vec<TimeBump>,
}

impl SpaceBump {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("space bump needs at least one axis"));
        }
        let axes = bounds
            .into_iter()
            .map(|(lo, hi)| TimeBump::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpaceBump { axes })
    }

    /// Symmetric box `[-r, r]^d`.
    pub fn symmetric(dimension: usize, r: f64) -> Result<Self> {
        SpaceBump::new(vec![(-r, r); dimension])
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn support(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|b| b.support()).collect()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(y)
            .map(|(b, &yi)| b.value(yi))
            .product()
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let values: Vec<f64> = self.axes.iter().zip(y).map(|(b, &yi)| b.value(yi)).collect();
        (0..self.axes.len())
            .map(|a| {
                let mut g = self.axes[a].derivative(y[a]);
                for (i, v) in values.iter().enumerate() {
                    if i != a {
                        g *= v;
                    }
                }
                g
            })
            .collect()
    }
}
