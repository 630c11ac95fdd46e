//! `bb`: dynamic quadratic transport between two periodic densities on the
//! staggered grid, cross-checked against the exact static value.

use crate::config::RunConfig;
use crate::report::{write_csv, Report};
use anyhow::{bail, Result};
use palmot::bb::{bb_solve, ce_residual_grid, static_grid_reference, BbParams, StaggeredGrid};
use std::path::Path;
use std::time::Instant;

pub fn run(rho0_path: &Path, rho1_path: &Path, config: &RunConfig) -> Result<Report> {
    let inputs = vec![
        rho0_path.display().to_string(),
        rho1_path.display().to_string(),
    ];
    let mut report = Report::new("bb", &inputs, config);
    let rho0 = palmot::io::load_model(rho0_path)?.as_density()?.clone();
    let rho1 = palmot::io::load_model(rho1_path)?.as_density()?.clone();
    if rho0.resolution() != config.grid {
        bail!(
            "density resolution {} does not match --grid {}",
            rho0.resolution(),
            config.grid
        );
    }

    let grid = StaggeredGrid::new(rho0.geometry(), config.grid, config.timesteps)?;
    let params = BbParams {
        tol: config.tol,
        max_iters: config.max_iters,
        ..BbParams::default()
    };
    let solve_started = Instant::now();
    let solution = bb_solve(&rho0, &rho1, &grid, &params)?;
    report.time("solve_secs", solve_started.elapsed().as_secs_f64());
    report.scalar("objective", solution.objective);
    report.scalar("iterations", solution.iterations as f64);

    let reference_started = Instant::now();
    let reference = static_grid_reference(&rho0, &rho1, 2.0)?;
    report.time("reference_secs", reference_started.elapsed().as_secs_f64());
    report.scalar("static_reference", reference);
    let gap = if reference > 0.0 {
        (solution.objective - reference).abs() / reference
    } else {
        solution.objective.abs()
    };
    report.check_le("dynamic_vs_static_gap", gap, 0.05);

    report.check_le("ce_residual", ce_residual_grid(&solution), config.tol);
    let masses = solution.masses();
    let mass_drift = masses
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0f64, f64::max);
    report.check_le("mass_conservation", mass_drift, 1e-10 * masses[0].max(1.0));
    report.check_le("density_floor", (-solution.min_density()).max(0.0), 1e-8);

    let out = config.out.as_deref();
    let n = grid.num_cells();
    let d = grid.geometry().dimension();
    write_csv(
        out,
        "solution.csv",
        "t,x,rho,m",
        (0..=grid.time_steps()).flat_map(|j| {
            let t = j as f64 * grid.time_step();
            let slice = solution.density_slice(j).to_vec();
            let momentum: Vec<String> = (0..n)
                .map(|i| {
                    if j < grid.time_steps() {
                        (0..d)
                            .map(|a| format!("{:.17e}", solution.momentum_slice(j, a)[i]))
                            .collect::<Vec<_>>()
                            .join(";")
                    } else {
                        String::from("")
                    }
                })
                .collect();
            let grid_copy = grid;
            (0..n).map(move |i| {
                let x = cell_coords(&grid_copy, i)
                    .iter()
                    .map(|c| format!("{c:.17e}"))
                    .collect::<Vec<_>>()
                    .join(";");
                format!("{t},{x},{:.17e},{}", slice[i], momentum[i])
            })
        }),
    )?;
    write_csv(
        out,
        "trace.csv",
        "iteration,residual,objective",
        solution
            .trace
            .iter()
            .map(|e| format!("{},{:.17e},{:.17e}", e.iteration, e.residual, e.objective)),
    )?;
    Ok(report)
}

fn cell_coords(grid: &StaggeredGrid, idx: usize) -> Vec<f64> {
    let d = grid.geometry().dimension();
    let m = grid.space_resolution();
    let h = grid.cell_width();
    let mut rem = idx;
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        out.push((rem % m) as f64 * h + 0.5 * h);
        rem /= m;
    }
    out
}
