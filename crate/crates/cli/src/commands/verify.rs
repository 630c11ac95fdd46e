//! `verify`: the seeded property suite. Suites: `campbell`, `balancing`,
//! `equality`, `ce`, `metric`. `--corrupt <suite>` injects a seeded defect
//! into that suite's fixtures, which must flip its assertions to failing
//! (exit code 2) — a self-test of the detectors.

use crate::config::RunConfig;
use crate::report::{write_csv, Report};
use anyhow::{bail, Result};
use palmot::dynamics::{
    action, build_geodesic, ce_residual, make_test_function, uniform_grid, MollifierQuadrature,
    SpaceBump, TimeBump,
};
use palmot::fixtures;
use palmot::product::{check_equality_cp_inf, wasserstein_product, ProductAtom, ProductMeasure};
use palmot::torus::{campbell_check, QuadratureSpec, StationaryModel, TorusGeometry, TorusPoint};
use palmot::transport::{cost_cp, verify_balancing, BalancingKernel, SolveMethod};
use rand::prelude::*;

const KNOWN_SUITES: [&str; 5] = ["campbell", "balancing", "equality", "ce", "metric"];

pub fn run(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new("verify", &[], config);
    if config.suites.is_empty() {
        bail!("empty suite selection; pick from {KNOWN_SUITES:?}");
    }
    for suite in &config.suites {
        if !KNOWN_SUITES.contains(&suite.as_str()) {
            bail!("unknown suite {suite}; pick from {KNOWN_SUITES:?}");
        }
    }
    if let Some(corrupt) = &config.corrupt {
        if !KNOWN_SUITES.contains(&corrupt.as_str()) {
            bail!("unknown corruption target {corrupt}");
        }
        report.note(format!("corruption injected into suite '{corrupt}'"));
    }
    let corrupt = |name: &str| config.corrupt.as_deref() == Some(name);

    for suite in &config.suites {
        match suite.as_str() {
            "campbell" => suite_campbell(&mut report, config, corrupt("campbell"))?,
            "balancing" => suite_balancing(&mut report, config, corrupt("balancing"))?,
            "equality" => suite_equality(&mut report, config, corrupt("equality"))?,
            "ce" => suite_ce(&mut report, config, corrupt("ce"))?,
            "metric" => suite_metric(&mut report, config, corrupt("metric"))?,
            _ => unreachable!(),
        }
    }
    Ok(report)
}

fn suite_campbell(report: &mut Report, config: &RunConfig, corrupt: bool) -> Result<()> {
    let mut rng = fixtures::rng(config.seed ^ 0xca);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let geometry = TorusGeometry::new(1, rng.gen_range(0.8..2.5))?;
        let n = rng.gen_range(1..=5);
        let mut config_model =
            fixtures::random_unit_intensity_config(&mut rng, geometry, n, true)?;
        if corrupt {
            // silently double one weight: the two Campbell quadratures see
            // different measures and the gap blows up
            let mut weights = config_model.weights().to_vec();
            weights[0] *= 2.0;
            config_model = palmot::torus::PeriodicPointConfiguration::new(
                geometry,
                config_model.atoms().to_vec(),
                weights,
            )?;
        }
        let model = StationaryModel::Points(config_model.clone());
        let radius = rng.gen_range(0.3..0.6) * geometry.period();
        let field = fixtures::random_campbell_field(&mut rng, geometry, radius);
        let check = campbell_check(&model, &field, QuadratureSpec::new(2048, 2048)?)?;
        // a corrupted model still satisfies the identity for itself, so the
        // corruption compares the lhs against the clean model's rhs
        let gap = if corrupt {
            let clean = StationaryModel::Points(
                fixtures::random_unit_intensity_config(&mut rng, geometry, n, true)?,
            );
            let clean_check = campbell_check(&clean, &field, QuadratureSpec::new(512, 512)?)?;
            (check.lhs - clean_check.rhs).abs()
        } else {
            check.gap
        };
        worst = worst.max(gap);
    }
    report.scalar("campbell_worst_gap", worst);
    report.check_le("campbell_identity", worst, 1e-8);
    Ok(())
}

fn suite_balancing(report: &mut Report, config: &RunConfig, corrupt: bool) -> Result<()> {
    let mut rng = fixtures::rng(config.seed ^ 0xba);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let geometry = TorusGeometry::new(1, rng.gen_range(0.8..2.0))?;
        let (na, nb) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let (xi, eta) = fixtures::random_pair(&mut rng, geometry, na, nb, true)?;
        let result = cost_cp(&xi, &eta, config.p, SolveMethod::ExactLp)?;
        let kernel = if corrupt {
            let mut rows = result.kernel.rows().to_vec();
            let z = rows[0][0].0.clone();
            let shifted: Vec<f64> = z.iter().map(|c| c + 0.31).collect();
            let mass = rows[0][0].1;
            rows[0][0] = (shifted, mass);
            BalancingKernel::new(geometry, result.kernel.sites().to_vec(), rows)?
        } else {
            result.kernel
        };
        let violation =
            verify_balancing(&kernel, &xi.palm_measure(), &eta.palm_measure(), 1e-9)?;
        worst = worst.max(violation);
    }
    report.scalar("balancing_worst_violation", worst);
    report.check_le("balancing_identity", worst, 1e-12);
    Ok(())
}

fn suite_equality(report: &mut Report, config: &RunConfig, corrupt: bool) -> Result<()> {
    let mut rng = fixtures::rng(config.seed ^ 0xe1);
    let mut worst: f64 = 0.0;
    let mut all_hold = true;
    for _ in 0..10 {
        let geometry = TorusGeometry::new(1, rng.gen_range(0.8..2.5))?;
        let (na, nb) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let (xi, eta) = fixtures::random_pair(&mut rng, geometry, na, nb, true)?;
        let result = check_equality_cp_inf(&xi, &eta, config.p)?;
        let gap = if corrupt {
            // compare against a deliberately wrong static value
            (result.static_cost * 1.5 - result.product_cost).abs()
        } else {
            result.gap
        };
        worst = worst.max(gap);
        all_hold &= result.holds || corrupt;
    }
    report.scalar("equality_worst_gap", worst);
    report.check("equality_reports_hold", all_hold, worst, 1e-9);
    report.check_le("equality_identity", worst, 1e-9);
    Ok(())
}

fn suite_ce(report: &mut Report, config: &RunConfig, corrupt: bool) -> Result<()> {
    let mut rng = fixtures::rng(config.seed ^ 0xce);
    let geometry = TorusGeometry::new(1, 2.0)?;
    let (xi, eta) = fixtures::random_pair(&mut rng, geometry, 3, 2, true)?;
    let result = cost_cp(&xi, &eta, 2.0, SolveMethod::ExactLp)?;
    let palm = xi.palm_measure();
    let freq = std::f64::consts::PI * rng.gen_range(1.0f64..3.5).round();
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let phi = make_test_function(
        geometry,
        TimeBump::unit_interior(0.12)?,
        SpaceBump::symmetric(1, 1.2)?,
        move |w: &TorusPoint, _: &[f64]| (freq * w.coords()[0] + phase).cos(),
        1.0,
        0.05,
        MollifierQuadrature::default(),
    )?;
    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for n in [8usize, 16, 32] {
        let (mut curve, field) = build_geodesic(&result.kernel, &palm, &uniform_grid(n))?;
        if corrupt {
            // displace the atoms of an interior node
            let k = n / 2;
            let node = curve.nodes()[k].clone();
            let moved = ProductMeasure::new(
                geometry,
                node.atoms()
                    .iter()
                    .map(|a| ProductAtom {
                        omega: a.omega.shift(&[0.17]).unwrap(),
                        y: a.y.clone(),
                        mass: a.mass,
                    })
                    .collect(),
            )?;
            curve = curve.with_node(k, moved)?;
        }
        let residual = ce_residual(&curve, &field, &phi)?;
        rows.push(format!("{n},{residual:.17e}"));
        residuals.push(residual);
    }
    // geodesic sanity rides along: its action equals the static cost
    let (curve, field) = build_geodesic(&result.kernel, &palm, &uniform_grid(32))?;
    let act = action(&curve, &field, 2.0)?;
    report.scalar("ce_action", act);
    report.scalar("ce_static_cost", result.cost);
    report.check_le("ce_action_matches_static", (act - result.cost).abs(), 1e-9);

    let mut min_order = f64::INFINITY;
    for pair in residuals.windows(2) {
        min_order = min_order.min((pair[0] / pair[1].max(1e-300)).log2());
    }
    report.scalar("ce_min_observed_order", min_order);
    report.check("ce_refinement_order", min_order >= 2.0, min_order, 2.0);
    write_csv(
        config.out.as_deref(),
        "ce_refinement.csv",
        "timesteps,residual",
        rows.into_iter(),
    )?;
    Ok(())
}

fn suite_metric(report: &mut Report, config: &RunConfig, corrupt: bool) -> Result<()> {
    let mut rng = fixtures::rng(config.seed ^ 0x3e);
    let geometry = TorusGeometry::new(1, 1.5)?;
    let mut worst_symmetry: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    for _ in 0..25 {
        let n = rng.gen_range(2..=4);
        let a = StationaryModel::Points(fixtures::random_unit_intensity_config(
            &mut rng, geometry, n, false,
        )?);
        let b = StationaryModel::Points(fixtures::random_unit_intensity_config(
            &mut rng, geometry, n, false,
        )?);
        let c = StationaryModel::Points(fixtures::random_unit_intensity_config(
            &mut rng, geometry, n, false,
        )?);
        let ab = cost_cp(&a, &b, config.p, SolveMethod::ExactLp)?.cost;
        let ba = cost_cp(&b, &a, config.p, SolveMethod::ExactLp)?.cost;
        let ac = cost_cp(&a, &c, config.p, SolveMethod::ExactLp)?.cost;
        let cb = cost_cp(&c, &b, config.p, SolveMethod::ExactLp)?.cost;
        let (ab, ac, cb) = if corrupt {
            // inflate one leg: the triangle inequality must now fail
            (ab * 4.0 + 1.0, ac, cb)
        } else {
            (ab, ac, cb)
        };
        worst_symmetry = worst_symmetry.max((ab - ba).abs().min(1.0));
        worst_slack = worst_slack
            .max(ab.powf(1.0 / config.p) - ac.powf(1.0 / config.p) - cb.powf(1.0 / config.p));
    }
    // product-measure triangles ride along
    for _ in 0..25 {
        let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<ProductMeasure> {
            let n = rng.gen_range(1..=3);
            let mut masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = masses.iter().sum();
            for m in masses.iter_mut() {
                *m /= total;
            }
            let atoms = masses
                .into_iter()
                .map(|mass| {
                    Ok(ProductAtom {
                        omega: TorusPoint::new(geometry, vec![rng.gen_range(0.0..1.5)])?,
                        y: vec![rng.gen_range(-1.0..1.0)],
                        mass,
                    })
                })
                .collect::<Result<Vec<_>, palmot::Error>>()?;
            Ok(ProductMeasure::new(geometry, atoms)?)
        };
        let a = make(&mut rng)?;
        let b = make(&mut rng)?;
        let c = make(&mut rng)?;
        let (ab, _) = wasserstein_product(&a, &b, config.p)?;
        let (ba, _) = wasserstein_product(&b, &a, config.p)?;
        let (ac, _) = wasserstein_product(&a, &c, config.p)?;
        let (cb, _) = wasserstein_product(&c, &b, config.p)?;
        worst_symmetry = worst_symmetry.max((ab - ba).abs());
        worst_slack = worst_slack
            .max(ab.powf(1.0 / config.p) - ac.powf(1.0 / config.p) - cb.powf(1.0 / config.p));
    }
    report.scalar("metric_worst_symmetry_gap", worst_symmetry);
    report.scalar("metric_worst_triangle_slack", worst_slack);
    report.check_le("metric_symmetry", worst_symmetry, 1e-12);
    report.check_le("metric_triangle", worst_slack, 1e-9);
    Ok(())
}
