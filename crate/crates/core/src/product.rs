//! Probability measures on `Ω × R^d` and the Wasserstein distance induced by
//! the product metric.
//!
//! The static cost between two models equals the optimal transport cost
//! between their Palm measures lifted to `Ω × R^d` (each tensored with a
//! Dirac at the origin in the second slot). Both directions of that identity
//! are constructive: a balancing kernel induces a coupling whose cost is at
//! most the kernel cost, and a coupling projects to a kernel of no larger
//! cost via the minimal-shift map. [`check_equality_cp_inf`] runs both
//! solvers and both conversions and reports every value with its gap.

use crate::error::{Error, Result};
use crate::torus::{dist_product, norm, PalmMeasure, StationaryModel, TorusGeometry, TorusPoint};
use crate::transport::{
    cost_cp, BalancingKernel, SolveMethod, TransportPlan,
};
use serde::Serialize;

const MASS_TOL: f64 = 1e-12;
const ATOM_MATCH_TOL: f64 = 1e-9;

/// Atom of a finitely supported probability measure on `Ω × R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductAtom {
    pub omega: TorusPoint,
    pub y: Vec<f64>,
    pub mass: f64,
}

/// Finitely supported probability measure on `Ω × R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductMeasure {
    geometry: TorusGeometry,
    atoms: Vec<ProductAtom>,
}

impl ProductMeasure {
    pub fn new(geometry: TorusGeometry, atoms: Vec<ProductAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a product measure needs at least one atom"));
        }
        let d = geometry.dimension();
        let mut total = 0.0;
        for atom in &atoms {
            geometry.check_same(&atom.omega.geometry())?;
            if atom.y.len() != d {
                return Err(Error::invalid("vector component dimension mismatch"));
            }
            if atom.y.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("product atom vector component"));
            }
            if !atom.mass.is_finite() || atom.mass <= 0.0 {
                return Err(Error::invalid("product atom masses must be positive"));
            }
            total += atom.mass;
        }
        if (total - 1.0).abs() > MASS_TOL * 16.0 {
            return Err(Error::invalid(format!(
                "product measure mass {total} is not 1"
            )));
        }
        Ok(ProductMeasure { geometry, atoms })
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn atoms(&self) -> &[ProductAtom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Lift a Palm measure to `Ω × R^d` by tensoring with `δ_0`, normalized
    /// to a probability measure. Returns the measure and the normalization
    /// (the Palm total mass, i.e. the intensity).
    pub fn from_palm(palm: &PalmMeasure) -> Result<(ProductMeasure, f64)> {
        let atoms = palm.atoms()?;
        let geometry = palm.geometry();
        let scale = palm.total_mass();
        let d = geometry.dimension();
        let atoms = atoms
            .iter()
            .map(|(site, mass)| ProductAtom {
                omega: site.clone(),
                y: vec![0.0; d],
                mass: mass / scale,
            })
            .collect();
        Ok((ProductMeasure::new(geometry, atoms)?, scale))
    }

    /// Projection onto the torus component, as Palm-style atoms scaled by
    /// `scale` (pass the intensity to recover an actual Palm measure).
    pub fn omega_marginal(&self, scale: f64) -> Vec<(TorusPoint, f64)> {
        let tol = ATOM_MATCH_TOL * self.geometry.period().max(1.0);
        crate::transport::merge_atoms(
            self.atoms
                .iter()
                .map(|a| (a.omega.clone(), a.mass * scale))
                .collect(),
            tol,
        )
    }
}

/// Finitely supported coupling of two product measures.
#[derive(Debug, Clone, Serialize)]
pub struct ProductCoupling {
    geometry: TorusGeometry,
    atoms: Vec<CouplingAtom>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingAtom {
    pub left_omega: TorusPoint,
    pub left_y: Vec<f64>,
    pub right_omega: TorusPoint,
    pub right_y: Vec<f64>,
    pub mass: f64,
}

impl ProductCoupling {
    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn atoms(&self) -> &[CouplingAtom] {
        &self.atoms
    }

    /// `Σ mass · d(left, right)^p`.
    pub fn cost(&self, p: f64) -> Result<f64> {
        let mut acc = 0.0;
        for atom in &self.atoms {
            let dist = dist_product(
                (&atom.left_omega, &atom.left_y),
                (&atom.right_omega, &atom.right_y),
            )?;
            acc += atom.mass * dist.powf(p);
        }
        Ok(acc)
    }

    pub fn first_marginal(&self) -> Result<ProductMeasure> {
        self.marginal(true)
    }

    pub fn second_marginal(&self) -> Result<ProductMeasure> {
        self.marginal(false)
    }

    fn marginal(&self, first: bool) -> Result<ProductMeasure> {
        let pairs: Vec<(TorusPoint, Vec<f64>, f64)> = self
            .atoms
            .iter()
            .map(|a| {
                if first {
                    (a.left_omega.clone(), a.left_y.clone(), a.mass)
                } else {
                    (a.right_omega.clone(), a.right_y.clone(), a.mass)
                }
            })
            .collect();
        let merged = merge_product_atoms(pairs, ATOM_MATCH_TOL * self.geometry.period().max(1.0));
        ProductMeasure::new(
            self.geometry,
            merged
                .into_iter()
                .map(|(omega, y, mass)| ProductAtom { omega, y, mass })
                .collect(),
        )
    }
}

/// Merge atoms of `Ω × R^d` whose product distance is below `tol`.
fn merge_product_atoms(
    atoms: Vec<(TorusPoint, Vec<f64>, f64)>,
    tol: f64,
) -> Vec<(TorusPoint, Vec<f64>, f64)> {
    let n = atoms.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist_product((&atoms[i].0, &atoms[i].1), (&atoms[j].0, &atoms[j].1))
                .unwrap_or(f64::INFINITY);
            if d <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut merged: Vec<Option<(TorusPoint, Vec<f64>, f64)>> = vec![None; n];
    for (i, atom) in atoms.iter().enumerate() {
        let r = find(&mut parent, i);
        match &mut merged[r] {
            Some((_, _, mass)) => *mass += atom.2,
            slot => *slot = Some(atom.clone()),
        }
    }
    let mut out: Vec<(TorusPoint, Vec<f64>, f64)> = merged.into_iter().flatten().collect();
    out.sort_by(|a, b| {
        let ka = a.0.coords().iter().chain(a.1.iter());
        let kb = b.0.coords().iter().chain(b.1.iter());
        ka.zip(kb)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// Exact Wasserstein cost `W_p^p` between two finitely supported product
/// measures, together with an optimal coupling.
pub fn wasserstein_product(
    p0: &ProductMeasure,
    p1: &ProductMeasure,
    p: f64,
) -> Result<(f64, ProductCoupling)> {
    p0.geometry().check_same(&p1.geometry())?;
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::invalid(format!("exponent must satisfy p > 1, got {p}")));
    }
    let n = p0.atoms().len();
    let m = p1.atoms().len();
    let mut costs = Vec::with_capacity(n * m);
    for a in p0.atoms() {
        for b in p1.atoms() {
            let d = dist_product((&a.omega, &a.y), (&b.omega, &b.y))?;
            costs.push(d.powf(p));
        }
    }
    let supply: Vec<f64> = p0.atoms().iter().map(|a| a.mass).collect();
    let demand: Vec<f64> = p1.atoms().iter().map(|a| a.mass).collect();
    let entries = crate::transport::solve_dense_transport(n, m, &costs, &supply, &demand)?;
    let plan = TransportPlan::new(n, m, entries, supply, demand)?;
    let value: f64 = plan
        .entries()
        .iter()
        .map(|&(i, j, f)| f * costs[i * m + j])
        .sum();
    let atoms = plan
        .entries()
        .iter()
        .map(|&(i, j, mass)| CouplingAtom {
            left_omega: p0.atoms()[i].omega.clone(),
            left_y: p0.atoms()[i].y.clone(),
            right_omega: p1.atoms()[j].omega.clone(),
            right_y: p1.atoms()[j].y.clone(),
            mass,
        })
        .collect();
    Ok((
        value,
        ProductCoupling {
            geometry: p0.geometry(),
            atoms,
        },
    ))
}

/// Coupling induced by a balancing kernel: atoms
/// `((ω_i, 0), (θ_z ω_i, 0), pm_i · T_i(z) / intensity)`.
///
/// Its `d^p`-cost is at most the kernel cost (division by the intensity
/// aside), with equality exactly when no displacement admits a shorter torus
/// shift; the coupling sees `d_Ω(ω, θ_z ω) ≤ ‖z‖`.
pub fn kernel_to_coupling(
    kernel: &BalancingKernel,
    palm_xi: &PalmMeasure,
) -> Result<ProductCoupling> {
    let atoms = palm_xi.atoms()?;
    let geometry = kernel.geometry();
    geometry.check_same(&palm_xi.geometry())?;
    if atoms.len() != kernel.sites().len() {
        return Err(Error::NotBalancing {
            violation: f64::INFINITY,
            tolerance: ATOM_MATCH_TOL,
        });
    }
    // Row masses must form probability kernels for the first marginal to be
    // the (normalized) Palm measure.
    for row in kernel.rows() {
        let total: f64 = row.iter().map(|(_, m)| m).sum();
        if (total - 1.0).abs() > ATOM_MATCH_TOL {
            return Err(Error::NotBalancing {
                violation: (total - 1.0).abs(),
                tolerance: ATOM_MATCH_TOL,
            });
        }
    }
    let scale = palm_xi.total_mass();
    let d = geometry.dimension();
    let mut out = Vec::new();
    for ((site, pm), row) in atoms.iter().zip(kernel.rows()) {
        for (z, mass) in row {
            out.push(CouplingAtom {
                left_omega: site.clone(),
                left_y: vec![0.0; d],
                right_omega: site.shift(z)?,
                right_y: vec![0.0; d],
                mass: pm * mass / scale,
            });
        }
    }
    Ok(ProductCoupling {
        geometry,
        atoms: out,
    })
}

/// Kernel extracted from a coupling through the minimal-shift map
/// `F(ω₁, ω₂) = (ω₁, minimal_shift(ω₁, ω₂))`, disintegrated over the first
/// torus coordinate. The kernel cost never exceeds the coupling `d^p`-cost:
/// the map discards the `R^d` components and replaces each shift by a
/// minimal one.
pub fn coupling_to_kernel(coupling: &ProductCoupling) -> Result<BalancingKernel> {
    let geometry = coupling.geometry();
    let tol = ATOM_MATCH_TOL * geometry.period().max(1.0);
    // Group coupling atoms by their first torus coordinate, in coordinate
    // order for determinism.
    let mut sites: Vec<TorusPoint> = Vec::new();
    let mut rows: Vec<Vec<(Vec<f64>, f64)>> = Vec::new();
    let mut totals: Vec<f64> = Vec::new();
    let mut order: Vec<usize> = (0..coupling.atoms().len()).collect();
    order.sort_by(|&a, &b| {
        let ka = coupling.atoms()[a].left_omega.coords();
        let kb = coupling.atoms()[b].left_omega.coords();
        ka.iter()
            .zip(kb)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for idx in order {
        let atom = &coupling.atoms()[idx];
        let z = atom.left_omega.minimal_shift(&atom.right_omega)?;
        let pos = sites
            .iter()
            .position(|s| s.dist(&atom.left_omega).map(|d| d <= tol).unwrap_or(false));
        match pos {
            Some(i) => {
                rows[i].push((z, atom.mass));
                totals[i] += atom.mass;
            }
            None => {
                sites.push(atom.left_omega.clone());
                rows.push(vec![(z, atom.mass)]);
                totals.push(atom.mass);
            }
        }
    }
    // Normalize each row into a probability kernel and merge duplicate
    // displacements.
    for (row, total) in rows.iter_mut().zip(&totals) {
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::new();
        for (z, mass) in row.drain(..) {
            let hit = merged.iter_mut().find(|(mz, _)| {
                norm(&mz.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>()) <= tol
            });
            match hit {
                Some((_, m)) => *m += mass,
                None => merged.push((z, mass)),
            }
        }
        for (_, m) in merged.iter_mut() {
            *m /= total;
        }
        *row = merged;
    }
    BalancingKernel::new(geometry, sites, rows)
}

/// All quantities of the static-equals-product-Wasserstein identity, computed
/// by independent routes.
#[derive(Debug, Clone, Serialize)]
pub struct EqualityReport {
    /// Static cost per unit volume from the quotient-cost solver.
    pub static_cost: f64,
    /// `intensity · W_p^p` between the lifted Palm measures.
    pub product_cost: f64,
    /// Cost of the kernel extracted from the optimal static plan.
    pub kernel_cost: f64,
    /// Cost of the coupling induced by that kernel (at most `kernel_cost`).
    pub coupling_from_kernel_cost: f64,
    /// Cost of the kernel extracted from the optimal product coupling
    /// (at most `product_cost`).
    pub kernel_from_coupling_cost: f64,
    /// `|static - product|`.
    pub gap: f64,
    /// Identity gap within `tolerance` and both conversion inequalities hold.
    pub holds: bool,
    pub tolerance: f64,
}

/// Verify that the static cost equals the product-space Wasserstein cost and
/// that both kernel/coupling conversions move cost in the proven direction.
pub fn check_equality_cp_inf(
    xi: &StationaryModel,
    eta: &StationaryModel,
    p: f64,
) -> Result<EqualityReport> {
    let tolerance = 1e-9;
    let static_report = cost_cp(xi, eta, p, SolveMethod::ExactLp)?;
    let static_cost = static_report.cost;

    let palm_xi = xi.palm_measure();
    let palm_eta = eta.palm_measure();
    let (p0, scale) = ProductMeasure::from_palm(&palm_xi)?;
    let (p1, _) = ProductMeasure::from_palm(&palm_eta)?;
    let (w_normalized, optimal_coupling) = wasserstein_product(&p0, &p1, p)?;
    let product_cost = scale * w_normalized;

    let kernel_cost = static_report.kernel.cost(&palm_xi, p)?;
    let induced = kernel_to_coupling(&static_report.kernel, &palm_xi)?;
    let coupling_from_kernel_cost = scale * induced.cost(p)?;

    let projected = coupling_to_kernel(&optimal_coupling)?;
    let palm_from_marginal = PalmMeasure::Atoms {
        geometry: p0.geometry(),
        atoms: optimal_coupling.first_marginal()?.omega_marginal(scale),
    };
    let kernel_from_coupling_cost = projected.cost(&palm_from_marginal, p)?;

    let gap = (static_cost - product_cost).abs();
    let slack = tolerance * static_cost.max(1.0);
    let holds = gap <= slack
        && coupling_from_kernel_cost <= kernel_cost + slack
        && kernel_from_coupling_cost <= product_cost + slack;
    Ok(EqualityReport {
        static_cost,
        product_cost,
        kernel_cost,
        coupling_from_kernel_cost,
        kernel_from_coupling_cost,
        gap,
        holds,
        tolerance,
    })
}
