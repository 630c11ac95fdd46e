//! `geodesic`: displacement interpolation between two point models, with the
//! kinetic action, the continuity-equation residual, per-time extraction of
//! the interpolated configuration, and the weak-continuity bound.

use crate::config::RunConfig;
use crate::report::{write_csv, Report};
use anyhow::Result;
use palmot::dynamics::{
    action, build_geodesic, ce_residual, extract_xi_t, make_test_function, uniform_grid,
    weak_continuity_bound, MollifierQuadrature, SpaceBump, TimeBump,
};
use palmot::io::load_model;
use palmot::torus::TorusPoint;
use palmot::transport::{cost_cp, SolveMethod};
use std::path::Path;

pub fn run(xi_path: &Path, eta_path: &Path, config: &RunConfig) -> Result<Report> {
    let inputs = vec![
        xi_path.display().to_string(),
        eta_path.display().to_string(),
    ];
    let mut report = Report::new("geodesic", &inputs, config);
    let xi = load_model(xi_path)?;
    let eta = load_model(eta_path)?;
    let geometry = xi.geometry();

    let static_report = cost_cp(&xi, &eta, config.p, SolveMethod::ExactLp)?;
    report.scalar("static_cost", static_report.cost);

    let palm = xi.palm_measure();
    let times = uniform_grid(config.timesteps);
    let (curve, field) = build_geodesic(&static_report.kernel, &palm, &times)?;
    let act = action(&curve, &field, config.p)?;
    report.scalar("action", act);
    report.check_le(
        "action_matches_static_cost",
        (act - static_report.cost).abs(),
        1e-9,
    );

    // weak residual against a fixed mollified test function; the decay under
    // grid doubling witnesses consistency
    let period = geometry.period();
    let phi = make_test_function(
        geometry,
        TimeBump::unit_interior(0.1)?,
        SpaceBump::symmetric(geometry.dimension(), 0.75 * period)?,
        move |w: &TorusPoint, _: &[f64]| {
            w.coords()
                .iter()
                .map(|&x| (2.0 * std::f64::consts::PI * x / period).cos())
                .sum::<f64>()
        },
        geometry.dimension() as f64,
        0.05 * period * period,
        MollifierQuadrature::default(),
    )?;
    let residual = ce_residual(&curve, &field, &phi)?;
    report.scalar("ce_residual", residual);
    let (fine_curve, fine_field) =
        build_geodesic(&static_report.kernel, &palm, &uniform_grid(2 * config.timesteps))?;
    let fine_residual = ce_residual(&fine_curve, &fine_field, &phi)?;
    report.scalar("ce_residual_refined", fine_residual);
    report.check(
        "ce_residual_second_order",
        fine_residual <= residual / 4.0 + 1e-14,
        fine_residual / residual.max(1e-300),
        0.25,
    );

    for &t in &config.times {
        let label = format!("extract_t{t}");
        match extract_xi_t(&curve, t) {
            Ok(model) => {
                report.scalar(&format!("{label}_atoms"), model.as_points()?.len() as f64);
            }
            Err(err) => {
                report.note(format!("{label}: {err}"));
                report.check(&label, false, f64::NAN, 0.0);
            }
        }
    }
    let endpoint = extract_xi_t(&curve, 1.0)?;
    let target = eta.as_points()?;
    let got = endpoint.as_points()?;
    let mut worst = 0.0f64;
    if got.len() == target.len() {
        // both atom lists are sorted by construction order; match greedily
        for atom in got.atoms() {
            let nearest = target
                .atoms()
                .iter()
                .map(|b| atom.dist(b).unwrap_or(f64::INFINITY))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    } else {
        worst = f64::INFINITY;
    }
    report.check_le("endpoint_recovers_target", worst, 1e-9);

    let half = weak_continuity_bound(&curve, &field, config.p, 0.0, 0.5)?;
    report.scalar("half_interval_cost", half.measured);
    report.scalar("half_interval_bound", half.bound);
    report.check(
        "weak_continuity_bound",
        half.holds(1e-9),
        half.measured - half.bound,
        1e-9,
    );

    let out = config.out.as_deref();
    write_csv(
        out,
        "curve.csv",
        "t,omega,y,mass",
        curve
            .times()
            .iter()
            .zip(curve.nodes())
            .flat_map(|(&t, node)| {
                node.atoms().iter().map(move |a| {
                    let omega = a
                        .omega
                        .coords()
                        .iter()
                        .map(|c| format!("{c:.17e}"))
                        .collect::<Vec<_>>()
                        .join(";");
                    let y = a
                        .y
                        .iter()
                        .map(|c| format!("{c:.17e}"))
                        .collect::<Vec<_>>()
                        .join(";");
                    format!("{t},{omega},{y},{:.17e}", a.mass)
                })
            }),
    )?;
    Ok(report)
}
