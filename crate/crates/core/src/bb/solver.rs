//! Alternating projection/proximal iterations for the quadratic dynamic
//! transport problem on the periodic staggered space-time grid.
//!
//! Splitting: the staggered variable carries the linear constraints (discrete
//! continuity equation with fixed endpoint densities), the centered variable
//! carries the pointwise kinetic functional, and an augmented Lagrangian ties
//! them through the midpoint/face-average interpolation.
//!
//! The constrained least-squares step diagonalizes over spatial Fourier
//! modes: per mode the momentum unknowns eliminate in closed form and the
//! density unknowns solve a real symmetric tridiagonal system in time, so
//! the step is exact, fast and deterministic (no inner iterations).

use super::{BbParams, StaggeredGrid};
use crate::bb::spectral::Spectral;
use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;

pub(crate) struct AdmmState {
    pub rho_stag: Vec<f64>,  // (n_t + 1) * N
    pub mom_stag: Vec<f64>,  // n_t * d * N
    pub sigma: Vec<f64>,     // n_t * N        centered density
    pub w: Vec<f64>,         // n_t * d * N    centered momentum
    pub dual_sigma: Vec<f64>,
    pub dual_w: Vec<f64>,
    pub trace_residual: Vec<f64>,
    pub trace_objective: Vec<f64>,
    pub iterations: usize,
}

struct ModeData {
    /// `|α_a|² + ε` per axis per mode.
    g: Vec<f64>,
    /// Face-average symbol per axis per mode.
    alpha: Vec<Complex64>,
    /// Divergence symbol per axis per mode.
    div: Vec<Complex64>,
    /// `Σ_a |D_a|² / g_a` per mode.
    w_curv: Vec<f64>,
}

fn mode_data(grid: &StaggeredGrid, spectral: &Spectral) -> ModeData {
    let d = grid.geometry().dimension();
    let m = grid.space_resolution();
    let n = spectral.num_cells();
    let dx = grid.cell_width();
    let eps = 1e-12;
    let mut g = vec![0.0; d * n];
    let mut alpha = vec![Complex64::default(); d * n];
    let mut div = vec![Complex64::default(); d * n];
    let mut w_curv = vec![0.0; n];
    for idx in 0..n {
        let k = spectral.unflatten(idx);
        let mut wsum = 0.0;
        for a in 0..d {
            let theta = 2.0 * std::f64::consts::PI * k[a] as f64 / m as f64;
            let phase = Complex64::from_polar(1.0, -theta);
            let al = (Complex64::new(1.0, 0.0) + phase) * 0.5;
            let dv = (Complex64::new(1.0, 0.0) - phase) / dx;
            let ga = al.norm_sqr() + eps;
            alpha[a * n + idx] = al;
            div[a * n + idx] = dv;
            g[a * n + idx] = ga;
            wsum += dv.norm_sqr() / ga;
        }
        w_curv[idx] = wsum;
    }
    ModeData {
        g,
        alpha,
        div,
        w_curv,
    }
}

pub(crate) struct UStepWorkspace {
    spectral: Spectral,
    modes: ModeData,
    rho0_hat: Vec<Complex64>,
    rho1_hat: Vec<Complex64>,
    csigma_hat: Vec<Complex64>,
    cw_hat: Vec<Complex64>,
    rho_hat: Vec<Complex64>,
    mom_hat: Vec<Complex64>,
}

impl UStepWorkspace {
    pub fn new(grid: &StaggeredGrid, rho0: &[f64], rho1: &[f64]) -> Self {
        let d = grid.geometry().dimension();
        let spectral = Spectral::new(d, grid.space_resolution());
        let modes = mode_data(grid, &spectral);
        let n = spectral.num_cells();
        let nt = grid.time_steps();
        let to_modes = |v: &[f64]| -> Vec<Complex64> {
            let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            spectral.forward(&mut buf);
            buf
        };
        let rho0_hat = to_modes(rho0);
        let rho1_hat = to_modes(rho1);
        UStepWorkspace {
            spectral,
            modes,
            rho0_hat,
            rho1_hat,
            csigma_hat: vec![Complex64::default(); nt * n],
            cw_hat: vec![Complex64::default(); nt * d * n],
            rho_hat: vec![Complex64::default(); (nt + 1) * n],
            mom_hat: vec![Complex64::default(); nt * d * n],
        }
    }

    /// Minimize `‖I(U) - (c_sigma, c_w)‖²` subject to the discrete continuity
    /// equation and the fixed endpoint slices; writes the staggered fields.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &mut self,
        grid: &StaggeredGrid,
        c_sigma: &[f64],
        c_w: &[f64],
        rho0: &[f64],
        rho1: &[f64],
        rho_stag: &mut [f64],
        mom_stag: &mut [f64],
    ) {
        let d = grid.geometry().dimension();
        let n = self.spectral.num_cells();
        let nt = grid.time_steps();
        let dt = grid.time_step();

        // transforms of the centered targets
        for j in 0..nt {
            let mut buf: Vec<Complex64> = c_sigma[j * n..(j + 1) * n]
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            self.spectral.forward(&mut buf);
            self.csigma_hat[j * n..(j + 1) * n].copy_from_slice(&buf);
            for a in 0..d {
                let base = (j * d + a) * n;
                let mut buf: Vec<Complex64> = c_w[base..base + n]
                    .iter()
                    .map(|&x| Complex64::new(x, 0.0))
                    .collect();
                self.spectral.forward(&mut buf);
                self.cw_hat[base..base + n].copy_from_slice(&buf);
            }
        }

        // endpoint slices in mode space
        self.rho_hat[..n].copy_from_slice(&self.rho0_hat);
        self.rho_hat[nt * n..].copy_from_slice(&self.rho1_hat);

        let mut q = vec![Complex64::default(); nt];
        let mut diag = vec![0.0; nt.max(1) - 1];
        let mut rhs = vec![Complex64::default(); nt.max(1) - 1];
        for im in 0..n {
            // q_j = Σ_a D_a conj(α_a) c_w / g_a
            for (j, qj) in q.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for a in 0..d {
                    let mode = a * n + im;
                    acc += self.modes.div[mode] * self.modes.alpha[mode].conj()
                        * self.cw_hat[(j * d + a) * n + im]
                        / self.modes.g[mode];
                }
                *qj = acc;
            }
            let wc = self.modes.w_curv[im];
            if wc < 1e-18 {
                // zero mode: the continuity equation forces a constant slice;
                // endpoints agree because the masses were matched
                for j in 1..nt {
                    self.rho_hat[j * n + im] = self.rho_hat[im];
                }
                for j in 0..nt {
                    for a in 0..d {
                        let mode = a * n + im;
                        self.mom_hat[(j * d + a) * n + im] = self.modes.alpha[mode].conj()
                            * self.cw_hat[(j * d + a) * n + im]
                            / self.modes.g[mode];
                    }
                }
                continue;
            }

            // interior tridiagonal solve for the density mode
            let c = 1.0 / (wc * dt * dt);
            let off = 0.25 - c;
            let dg = 0.5 + 2.0 * c;
            for l in 1..nt {
                let mut r = (self.csigma_hat[(l - 1) * n + im] + self.csigma_hat[l * n + im])
                    * 0.5
                    + (q[l] - q[l - 1]) / (wc * dt);
                if l == 1 {
                    r -= self.rho_hat[im] * off;
                }
                if l == nt - 1 {
                    r -= self.rho_hat[nt * n + im] * off;
                }
                diag[l - 1] = dg;
                rhs[l - 1] = r;
            }
            // Thomas elimination (constant off-diagonal `off`)
            for l in 1..nt - 1 {
                let factor = off / diag[l - 1];
                diag[l] = dg - factor * off;
                let prev = rhs[l - 1];
                rhs[l] -= prev * factor;
            }
            if nt >= 2 {
                self.rho_hat[(nt - 1) * n + im] = rhs[nt - 2] / diag[nt - 2];
                for l in (1..nt - 1).rev() {
                    let next = self.rho_hat[(l + 1) * n + im];
                    self.rho_hat[l * n + im] = (rhs[l - 1] - next * off) / diag[l - 1];
                }
            }

            // recover the momentum modes from the constraint multipliers
            for (j, &qj) in q.iter().enumerate() {
                let s = (self.rho_hat[j * n + im] - self.rho_hat[(j + 1) * n + im]) / dt;
                let mu = (qj - s) / wc;
                for a in 0..d {
                    let mode = a * n + im;
                    self.mom_hat[(j * d + a) * n + im] = (self.modes.alpha[mode].conj()
                        * self.cw_hat[(j * d + a) * n + im]
                        - self.modes.div[mode].conj() * mu)
                        / self.modes.g[mode];
                }
            }
        }

        // back to physical space; endpoints stay bit-identical to the inputs
        rho_stag[..n].copy_from_slice(rho0);
        rho_stag[nt * n..].copy_from_slice(rho1);
        let mut buf = vec![Complex64::default(); n];
        for j in 1..nt {
            buf.copy_from_slice(&self.rho_hat[j * n..(j + 1) * n]);
            self.spectral.inverse(&mut buf);
            for (slot, v) in rho_stag[j * n..(j + 1) * n].iter_mut().zip(&buf) {
                *slot = v.re;
            }
        }
        for j in 0..nt {
            for a in 0..d {
                let base = (j * d + a) * n;
                buf.copy_from_slice(&self.mom_hat[base..base + n]);
                self.spectral.inverse(&mut buf);
                for (slot, v) in mom_stag[base..base + n].iter_mut().zip(&buf) {
                    *slot = v.re;
                }
            }
        }
    }
}

/// Midpoint-in-time and face-average-in-space interpolation onto the
/// centered grid.
pub(crate) fn interpolate(
    grid: &StaggeredGrid,
    rho_stag: &[f64],
    mom_stag: &[f64],
    sigma_c: &mut [f64],
    w_c: &mut [f64],
) {
    let d = grid.geometry().dimension();
    let n = grid.num_cells();
    let nt = grid.time_steps();
    let m = grid.space_resolution();
    for j in 0..nt {
        for i in 0..n {
            sigma_c[j * n + i] = 0.5 * (rho_stag[j * n + i] + rho_stag[(j + 1) * n + i]);
        }
        for a in 0..d {
            let stride = m.pow(a as u32);
            let base = (j * d + a) * n;
            for i in 0..n {
                // neighbor index i - e_a with periodic wrap along axis a
                let axis_pos = (i / stride) % m;
                let minus = if axis_pos == 0 {
                    i + (m - 1) * stride
                } else {
                    i - stride
                };
                w_c[base + i] = 0.5 * (mom_stag[base + i] + mom_stag[base + minus]);
            }
        }
    }
}

/// Pointwise proximal step of the kinetic functional: minimize
/// `(σ - σ̃)²/2 + ‖w - w̃‖²/2 + β ‖w‖²/(2σ)` over `σ ≥ 0`, `w`.
///
/// Stationarity in `w` gives `w = w̃ σ/(σ+β)`; eliminating it leaves the
/// scalar condition `(σ - σ̃)(σ + β)² = β ‖w̃‖²/2`, solved by bisection
/// (the polynomial is increasing right of `max(σ̃, 0)`).
pub(crate) fn kinetic_prox(sigma_tilde: f64, w_tilde_norm2: f64, beta: f64) -> f64 {
    if w_tilde_norm2 == 0.0 {
        return sigma_tilde.max(0.0);
    }
    let target = beta * w_tilde_norm2 / 2.0;
    let p = |s: f64| (s - sigma_tilde) * (s + beta) * (s + beta) - target;
    let mut lo = sigma_tilde.max(0.0);
    if p(lo) >= 0.0 {
        // root at or below the lower bracket: σ = lo (projection at 0 when
        // σ̃ ≤ 0)
        if lo == 0.0 {
            return 0.0;
        }
        // p(max(σ̃,0)) = -target < 0 whenever lo = σ̃ ≥ 0, so reaching this
        // branch means lo = 0 > σ̃
        return 0.0;
    }
    let mut hi = lo.max(1.0);
    while p(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Kinetic objective `Σ coef ‖w‖²/σ` of a centered pair, with the vanishing
/// floor applied to σ.
pub(crate) fn kinetic_objective(
    grid: &StaggeredGrid,
    sigma_c: &[f64],
    w_c: &[f64],
    floor: f64,
) -> f64 {
    let d = grid.geometry().dimension();
    let n = grid.num_cells();
    let nt = grid.time_steps();
    let coef = grid.time_step() * grid.cell_volume();
    let mut acc = 0.0;
    for j in 0..nt {
        for i in 0..n {
            let mut w2 = 0.0;
            for a in 0..d {
                let v = w_c[(j * d + a) * n + i];
                w2 += v * v;
            }
            if w2 > 0.0 {
                acc += coef * w2 / sigma_c[j * n + i].max(floor);
            }
        }
    }
    acc
}

pub(crate) fn run_admm(
    grid: &StaggeredGrid,
    rho0: &[f64],
    rho1: &[f64],
    params: &BbParams,
) -> Result<AdmmState> {
    let d = grid.geometry().dimension();
    let n = grid.num_cells();
    let nt = grid.time_steps();
    let mean = rho0.iter().sum::<f64>() / n as f64;
    let floor = 1e-10 * mean;
    let beta = grid.time_step() * grid.cell_volume() / params.penalty;

    let mut state = AdmmState {
        rho_stag: vec![0.0; (nt + 1) * n],
        mom_stag: vec![0.0; nt * d * n],
        sigma: vec![0.0; nt * n],
        w: vec![0.0; nt * d * n],
        dual_sigma: vec![0.0; nt * n],
        dual_w: vec![0.0; nt * d * n],
        trace_residual: Vec::new(),
        trace_objective: Vec::new(),
        iterations: 0,
    };
    // linear interpolation initialization
    for j in 0..=nt {
        let t = j as f64 / nt as f64;
        for i in 0..n {
            state.rho_stag[j * n + i] = (1.0 - t) * rho0[i] + t * rho1[i];
        }
    }
    interpolate(grid, &state.rho_stag, &state.mom_stag, &mut state.sigma, &mut state.w);

    let mut workspace = UStepWorkspace::new(grid, rho0, rho1);
    let mut c_sigma = vec![0.0; nt * n];
    let mut c_w = vec![0.0; nt * d * n];
    let mut sigma_c = vec![0.0; nt * n];
    let mut w_c = vec![0.0; nt * d * n];

    let mut streak = 0usize;
    let mut last_objective = f64::INFINITY;
    for it in 1..=params.max_iters {
        state.iterations = it;
        // U-step target: V - λ
        for (c, (v, l)) in c_sigma
            .iter_mut()
            .zip(state.sigma.iter().zip(&state.dual_sigma))
        {
            *c = v - l;
        }
        for (c, (v, l)) in c_w.iter_mut().zip(state.w.iter().zip(&state.dual_w)) {
            *c = v - l;
        }
        workspace.solve(
            grid,
            &c_sigma,
            &c_w,
            rho0,
            rho1,
            &mut state.rho_stag,
            &mut state.mom_stag,
        );
        interpolate(grid, &state.rho_stag, &state.mom_stag, &mut sigma_c, &mut w_c);

        // V-step at I(U) + λ
        for j in 0..nt {
            for i in 0..n {
                let st = sigma_c[j * n + i] + state.dual_sigma[j * n + i];
                let mut w2 = 0.0;
                for a in 0..d {
                    let idx = (j * d + a) * n + i;
                    let wt = w_c[idx] + state.dual_w[idx];
                    w2 += wt * wt;
                }
                let s = kinetic_prox(st, w2, beta);
                state.sigma[j * n + i] = s;
                let shrink = if s > 0.0 { s / (s + beta) } else { 0.0 };
                for a in 0..d {
                    let idx = (j * d + a) * n + i;
                    state.w[idx] = (w_c[idx] + state.dual_w[idx]) * shrink;
                }
            }
        }

        // dual ascent and primal residual
        let mut residual: f64 = 0.0;
        for ((dual, &interp), &prox) in state.dual_sigma.iter_mut().zip(&sigma_c).zip(&state.sigma)
        {
            let diff = interp - prox;
            *dual += diff;
            residual = residual.max(diff.abs());
        }
        for ((dual, &interp), &prox) in state.dual_w.iter_mut().zip(&w_c).zip(&state.w) {
            let diff = interp - prox;
            *dual += diff;
            residual = residual.max(diff.abs());
        }
        residual /= mean.max(1e-300);

        let objective = kinetic_objective(grid, &sigma_c, &w_c, floor);
        state.trace_residual.push(residual);
        state.trace_objective.push(objective);

        // the relative-change denominator is floored so that zero-cost
        // problems (whose objective is pure fp noise) still converge
        let objective_floor = 1e-12 * mean * mean * grid.cell_volume() * n as f64;
        let rel_change =
            (objective - last_objective).abs() / objective.abs().max(objective_floor);
        last_objective = objective;
        if residual < params.tol && rel_change < params.tol {
            streak += 1;
            if streak >= 10 {
                return Ok(state);
            }
        } else {
            streak = 0;
        }
    }
    Err(Error::NoConvergence {
        iterations: params.max_iters,
        residual: *state.trace_residual.last().unwrap_or(&f64::NAN),
        trace: state.trace_residual,
    })
}
