//! `palm`: Palm measure of a model, with the mass identity and a Campbell
//! spot check.

use crate::config::RunConfig;
use crate::report::{write_csv, Report};
use anyhow::Result;
use palmot::io::load_model;
use palmot::torus::{campbell_check, BoundedField, PalmMeasure, QuadratureSpec, TorusPoint};
use std::path::Path;

pub fn run(model_path: &Path, config: &RunConfig) -> Result<Report> {
    let inputs = vec![model_path.display().to_string()];
    let mut report = Report::new("palm", &inputs, config);
    let model = load_model(model_path)?;
    let palm = model.palm_measure();
    let intensity = model.intensity();
    report.scalar("intensity", intensity);
    report.scalar("palm_total_mass", palm.total_mass());
    report.check_le(
        "palm_mass_equals_intensity",
        (palm.total_mass() - intensity).abs(),
        1e-12 * intensity.max(1.0),
    );

    // Campbell identity with the unit-window indicator: both sides reduce to
    // the intensity.
    let geometry = model.geometry();
    let d = geometry.dimension();
    let indicator = BoundedField::new(vec![(-0.5, 0.5); d], |_: &TorusPoint, _: &[f64]| 1.0);
    let resolution = config.grid.max(256);
    let check = campbell_check(
        &model,
        &indicator,
        QuadratureSpec::new(resolution, resolution.min(512))?,
    )?;
    report.scalar("campbell_lhs", check.lhs);
    report.scalar("campbell_rhs", check.rhs);
    report.check_le("campbell_gap", check.gap, 1e-2 * intensity.max(1.0));

    let out = config.out.as_deref();
    match &palm {
        PalmMeasure::Atoms { atoms, .. } => {
            write_csv(
                out,
                "palm.csv",
                "site,mass",
                atoms.iter().map(|(site, mass)| {
                    let coords = site
                        .coords()
                        .iter()
                        .map(|c| format!("{c:.17e}"))
                        .collect::<Vec<_>>()
                        .join(";");
                    format!("{coords},{mass:.17e}")
                }),
            )?;
        }
        PalmMeasure::Density { values, .. } => {
            write_csv(
                out,
                "palm.csv",
                "cell,value",
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| format!("{i},{v:.17e}")),
            )?;
        }
    }
    Ok(report)
}
