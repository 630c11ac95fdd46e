//! `static`: quotient-cost transport between two point models, with the
//! extracted balancing kernel, its verification, and the optional
//! relative-shift search.

use crate::config::{MethodOpt, RunConfig};
use crate::report::{write_csv, Report};
use anyhow::Result;
use palmot::io::load_model;
use palmot::transport::{
    cost_cp, optimize_relative_shift, verify_balancing, ShiftSearchSpec, SolveMethod,
};
use std::path::Path;
use std::time::Instant;

pub fn run(xi_path: &Path, eta_path: &Path, config: &RunConfig) -> Result<Report> {
    let inputs = vec![
        xi_path.display().to_string(),
        eta_path.display().to_string(),
    ];
    let mut report = Report::new("static", &inputs, config);
    let xi = load_model(xi_path)?;
    let eta = load_model(eta_path)?;

    let method = match config.method {
        MethodOpt::Lp => SolveMethod::ExactLp,
        MethodOpt::Sinkhorn => SolveMethod::Sinkhorn {
            epsilon: config.eps,
            max_iters: config.max_iters,
        },
    };
    let solve_started = Instant::now();
    let result = cost_cp(&xi, &eta, config.p, method)?;
    report.time("solve_secs", solve_started.elapsed().as_secs_f64());

    report.scalar("cost", result.cost);
    report.scalar("cost_per_unit_intensity", result.cost_per_unit_intensity);
    report.scalar("root_cost", result.cost.powf(1.0 / config.p));
    report.scalar("intensity", xi.intensity());
    report.scalar("plan_entries", result.plan.entries().len() as f64);
    report.scalar("iterations", result.iterations as f64);
    report.note(result.search_scope);

    report.check_le(
        "plan_marginal_violation",
        result.plan.marginal_violation(),
        match method {
            SolveMethod::ExactLp => 1e-12 * xi.intensity().max(1.0),
            SolveMethod::Sinkhorn { .. } => 1e-9,
        },
    );
    let violation = verify_balancing(&result.kernel, &xi.palm_measure(), &eta.palm_measure(), 1e-9)?;
    report.check_le(
        "balancing_violation",
        violation,
        match method {
            SolveMethod::ExactLp => 1e-12,
            SolveMethod::Sinkhorn { .. } => 1e-8,
        },
    );

    if config.optimize_shift {
        let search_started = Instant::now();
        let search = optimize_relative_shift(&xi, &eta, config.p, ShiftSearchSpec::default())?;
        report.time("shift_search_secs", search_started.elapsed().as_secs_f64());
        report.scalar("shift_cost", search.cost);
        report.scalar("shift_evaluations", search.evaluations as f64);
        for (axis, u) in search.shift.iter().enumerate() {
            report.scalar(&format!("shift_{axis}"), *u);
        }
        report.check(
            "shift_improves_or_matches",
            search.cost <= search.cost_at_zero + 1e-15,
            search.cost - search.cost_at_zero,
            0.0,
        );
    }

    let out = config.out.as_deref();
    write_csv(
        out,
        "plan.csv",
        "source,target,mass",
        result
            .plan
            .entries()
            .iter()
            .map(|&(i, j, m)| format!("{i},{j},{m:.17e}")),
    )?;
    write_csv(
        out,
        "kernel.csv",
        "site,displacement,mass",
        result.kernel.rows().iter().enumerate().flat_map(|(i, row)| {
            row.iter().map(move |(z, mass)| {
                let zs = z
                    .iter()
                    .map(|c| format!("{c:.17e}"))
                    .collect::<Vec<_>>()
                    .join(";");
                format!("{i},{zs},{mass:.17e}")
            })
        }),
    )?;
    Ok(report)
}
