//! Dense transportation simplex for balanced problems.
//!
//! Solves `min Σ c_ij x_ij` subject to `Σ_j x_ij = supply_i`,
//! `Σ_i x_ij = demand_j`, `x ≥ 0` on a complete bipartite graph, maintaining
//! a spanning-tree basis (the network form of the simplex method). Pivoting
//! is deterministic: entering arc by most negative reduced cost with
//! lexicographic tie-break, switching to Bland's rule if a degenerate run
//! exceeds its budget; the returned flows are recomputed from the final tree
//! by leaf elimination so the marginals are exact sums of the inputs.

use crate::error::{Error, Result};

pub(crate) struct SimplexSolution {
    /// Positive flows as (row, col, mass) triplets, sorted by (row, col).
    pub entries: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

/// Relative balance tolerance on `Σ supply - Σ demand`.
const BALANCE_TOL: f64 = 1e-12;

pub(crate) fn solve_transport(
    n: usize,
    m: usize,
    costs: &[f64],
    supply: &[f64],
    demand: &[f64],
) -> Result<SimplexSolution> {
    assert_eq!(costs.len(), n * m, "cost matrix shape");
    assert_eq!(supply.len(), n);
    assert_eq!(demand.len(), m);
    if supply.iter().chain(demand).any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::invalid("marginal weights must be positive reals"));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > BALANCE_TOL * total_supply.max(1.0) {
        return Err(Error::UnbalancedMarginals {
            supply: total_supply,
            demand: total_demand,
        });
    }

    let mut state = Basis::northwest(n, m, supply, demand);
    let cost_scale = costs.iter().fold(1.0f64, |a, &c| a.max(c.abs()));
    let tol = cost_scale * 1e-12f64.max((n + m) as f64 * 4.0 * f64::EPSILON);

    let bland_after = 20 * (n + m) * (n + m) + 1000;
    let max_pivots = 40 * (n + m) * (n + m) + 2000;
    let mut pivots = 0usize;
    loop {
        let (u, v) = state.duals(costs);
        let entering = if pivots < bland_after {
            state.most_negative(costs, &u, &v, tol)
        } else {
            state.first_negative(costs, &u, &v, tol)
        };
        let Some((ei, ej)) = entering else { break };
        state.pivot(ei, ej);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NoConvergence {
                iterations: pivots,
                residual: f64::NAN,
                trace: Vec::new(),
            });
        }
    }

    let entries = state.flows_from_tree(total_supply);
    Ok(SimplexSolution { entries, pivots })
}

/// Spanning-tree basis over row nodes `0..n` and column nodes `n..n+m`.
struct Basis {
    n: usize,
    m: usize,
    /// Basic cells (row, col); always exactly n + m - 1 of them.
    cells: Vec<(usize, usize)>,
    in_basis: Vec<bool>,
    supply: Vec<f64>,
    demand: Vec<f64>,
}

impl Basis {
    /// Northwest-corner initial basis: a staircase spanning tree.
    fn northwest(n: usize, m: usize, supply: &[f64], demand: &[f64]) -> Basis {
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut cells = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            cells.push((i, j));
            let f = s[i].min(d[j]);
            s[i] -= f;
            d[j] -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if s[i] <= d[j] && i < n - 1 {
                i += 1;
            } else if j < m - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
        debug_assert_eq!(cells.len(), n + m - 1);
        let mut in_basis = vec![false; n * m];
        for &(i, j) in &cells {
            in_basis[i * m + j] = true;
        }
        Basis {
            n,
            m,
            cells,
            in_basis,
            supply: supply.to_vec(),
            demand: demand.to_vec(),
        }
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut rows = vec![Vec::new(); self.n];
        let mut cols = vec![Vec::new(); self.m];
        for (idx, &(i, j)) in self.cells.iter().enumerate() {
            rows[i].push(idx);
            cols[j].push(idx);
        }
        (rows, cols)
    }

    /// Node potentials with `u[0] = 0`, propagated over the tree so that
    /// `u_i + v_j = c_ij` on every basic cell.
    fn duals(&self, costs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (rows, cols) = self.adjacency();
        let mut u = vec![f64::NAN; self.n];
        let mut v = vec![f64::NAN; self.m];
        u[0] = 0.0;
        // BFS over tree nodes; rows are 0..n, cols are n..n+m.
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(0usize);
        while let Some(node) = queue.pop_front() {
            if node < self.n {
                for &idx in &rows[node] {
                    let (i, j) = self.cells[idx];
                    if v[j].is_nan() {
                        v[j] = costs[i * self.m + j] - u[i];
                        queue.push_back(self.n + j);
                    }
                }
            } else {
                let jnode = node - self.n;
                for &idx in &cols[jnode] {
                    let (i, j) = self.cells[idx];
                    if u[i].is_nan() {
                        u[i] = costs[i * self.m + j] - v[j];
                        queue.push_back(i);
                    }
                }
            }
        }
        debug_assert!(u.iter().chain(v.iter()).all(|x| !x.is_nan()), "basis tree disconnected");
        (u, v)
    }

    fn most_negative(
        &self,
        costs: &[f64],
        u: &[f64],
        v: &[f64],
        tol: f64,
    ) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for (i, &ui) in u.iter().enumerate() {
            let base = i * self.m;
            for j in 0..self.m {
                if self.in_basis[base + j] {
                    continue;
                }
                let r = costs[base + j] - ui - v[j];
                if r < -tol {
                    match best {
                        Some((_, rb)) if r >= rb => {}
                        _ => best = Some(((i, j), r)),
                    }
                }
            }
        }
        best.map(|(c, _)| c)
    }

    fn first_negative(
        &self,
        costs: &[f64],
        u: &[f64],
        v: &[f64],
        tol: f64,
    ) -> Option<(usize, usize)> {
        for (i, &ui) in u.iter().enumerate() {
            let base = i * self.m;
            for j in 0..self.m {
                if !self.in_basis[base + j] && costs[base + j] - ui - v[j] < -tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Bring (ei, ej) into the basis: find the unique tree path from row `ei`
    /// to column `ej`, alternate signs along the cycle, and drop the smallest
    /// negative-position cell (lexicographic tie-break).
    fn pivot(&mut self, ei: usize, ej: usize) {
        let (rows, cols) = self.adjacency();
        // BFS from row node ei to col node ej remembering the arriving cell.
        let total = self.n + self.m;
        let mut prev_cell = vec![usize::MAX; total];
        let mut visited = vec![false; total];
        visited[ei] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(ei);
        let target = self.n + ej;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            let cell_ids = if node < self.n {
                &rows[node]
            } else {
                &cols[node - self.n]
            };
            for &idx in cell_ids {
                let (i, j) = self.cells[idx];
                let other = if node < self.n { self.n + j } else { i };
                if !visited[other] {
                    visited[other] = true;
                    prev_cell[other] = idx;
                    queue.push_back(other);
                }
            }
        }
        debug_assert!(visited[target], "entering cell not connected to basis tree");

        // Reconstruct the path (cells from ej side back to ei).
        let mut path = Vec::new();
        let mut node = target;
        while node != ei {
            let idx = prev_cell[node];
            path.push(idx);
            let (i, j) = self.cells[idx];
            node = if node < self.n { self.n + j } else { i };
        }
        path.reverse(); // now ordered from row ei towards col ej

        // Cells at even positions share a row with the entering arc pattern
        // and lose flow; odd positions gain.
        let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
        debug_assert!(!minus.is_empty());

        // Leaving cell: flow values are implicit; recompute the current flows
        // to find the binding arc.
        let flows = self.current_flows();
        let mut leave = minus[0];
        let mut best = flows[minus[0]];
        for &idx in &minus[1..] {
            let f = flows[idx];
            let cell = self.cells[idx];
            let best_cell = self.cells[leave];
            if f < best || (f == best && cell < best_cell) {
                leave = idx;
                best = f;
            }
        }

        let (li, lj) = self.cells[leave];
        self.in_basis[li * self.m + lj] = false;
        self.in_basis[ei * self.m + ej] = true;
        self.cells[leave] = (ei, ej);
        self.cells.sort_unstable();
    }

    /// Flows on basic cells, solved from the tree by leaf elimination.
    fn current_flows(&self) -> Vec<f64> {
        self.solve_tree(&self.supply, &self.demand)
    }

    fn solve_tree(&self, supply: &[f64], demand: &[f64]) -> Vec<f64> {
        let total = self.n + self.m;
        let mut degree = vec![0usize; total];
        for &(i, j) in &self.cells {
            degree[i] += 1;
            degree[self.n + j] += 1;
        }
        let mut residual = vec![0.0f64; total];
        residual[..self.n].copy_from_slice(supply);
        for j in 0..self.m {
            residual[self.n + j] = demand[j];
        }
        let mut removed_cell = vec![false; self.cells.len()];
        let mut flows = vec![0.0f64; self.cells.len()];
        let mut leaves: Vec<usize> = (0..total).filter(|&x| degree[x] == 1).collect();
        // Node -> incident basic cells (indices); consumed as we peel leaves.
        let mut incident = vec![Vec::new(); total];
        for (idx, &(i, j)) in self.cells.iter().enumerate() {
            incident[i].push(idx);
            incident[self.n + j].push(idx);
        }
        while let Some(node) = leaves.pop() {
            let Some(&idx) = incident[node].iter().find(|&&c| !removed_cell[c]) else {
                continue; // the very last node has no remaining edge
            };
            let (i, j) = self.cells[idx];
            let flow = residual[node];
            flows[idx] = flow;
            removed_cell[idx] = true;
            let other = if node == i { self.n + j } else { i };
            debug_assert!(node == i || node == self.n + j);
            residual[other] -= flow;
            residual[node] = 0.0;
            degree[node] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        flows
    }

    fn flows_from_tree(&self, total_supply: f64) -> Vec<(usize, usize, f64)> {
        let flows = self.current_flows();
        let clamp = 1e-9 * total_supply.max(1.0);
        let mut entries = Vec::new();
        for (idx, &(i, j)) in self.cells.iter().enumerate() {
            let f = flows[idx];
            debug_assert!(f > -clamp, "negative basic flow {f}");
            if f > 0.0 {
                entries.push((i, j, f));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn plan_cost(entries: &[(usize, usize, f64)], costs: &[f64], m: usize) -> f64 {
        entries.iter().map(|&(i, j, f)| f * costs[i * m + j]).sum()
    }

    fn brute_force_permutation(costs: &[f64], n: usize) -> f64 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum();
            if c < best {
                best = c;
            }
        });
        best
    }

    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }

    #[test]
    fn matches_permutation_enumeration_on_random_square_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.gen_range(1..=7);
            let costs: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let w = vec![1.0; n];
            let sol = solve_transport(n, n, &costs, &w, &w).unwrap();
            let got = plan_cost(&sol.entries, &costs, n);
            let want = brute_force_permutation(&costs, n);
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            // unit supplies: the plan is a permutation
            assert_eq!(sol.entries.len(), n);
            assert!(sol.entries.iter().all(|&(_, _, f)| (f - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn handles_rectangular_and_weighted_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let costs: Vec<f64> = (0..n * m).map(|_| rng.gen_range(0.0..5.0)).collect();
            let supply: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
            let total: f64 = supply.iter().sum();
            let mut demand: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
            let dsum: f64 = demand.iter().sum();
            for d in demand.iter_mut() {
                *d *= total / dsum;
            }
            let sol = solve_transport(n, m, &costs, &supply, &demand).unwrap();
            let mut row = vec![0.0; n];
            let mut col = vec![0.0; m];
            for &(i, j, f) in &sol.entries {
                assert!(f > 0.0);
                row[i] += f;
                col[j] += f;
            }
            for i in 0..n {
                assert_abs_diff_eq!(row[i], supply[i], epsilon = 1e-12 * total.max(1.0));
            }
            for j in 0..m {
                assert_abs_diff_eq!(col[j], demand[j], epsilon = 1e-12 * total.max(1.0));
            }
        }
    }

    #[test]
    fn rejects_unbalanced_marginals() {
        let err = solve_transport(1, 1, &[1.0], &[1.0], &[2.0]);
        assert!(matches!(err, Err(Error::UnbalancedMarginals { .. })));
    }

    #[test]
    fn single_row_and_column_cases() {
        let sol = solve_transport(1, 3, &[1.0, 2.0, 3.0], &[6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sol.entries.len(), 3);
        let sol = solve_transport(3, 1, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[6.0]).unwrap();
        assert_eq!(sol.entries.len(), 3);
    }

    #[test]
    fn degenerate_tied_costs_terminate() {
        // All-equal costs: every feasible plan is optimal; must not cycle.
        let n = 6;
        let costs = vec![1.0; n * n];
        let w = vec![1.0; n];
        let sol = solve_transport(n, n, &costs, &w, &w).unwrap();
        assert_abs_diff_eq!(plan_cost(&sol.entries, &costs, n), n as f64, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_across_repeat_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 5;
        let costs: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w = vec![1.0; n];
        let a = solve_transport(n, n, &costs, &w, &w).unwrap();
        let b = solve_transport(n, n, &costs, &w, &w).unwrap();
        assert_eq!(a.entries, b.entries);
    }
}
