//! Exact Wasserstein distances `d_p` and `d_∞` between atomic measures, with
//! transport plans as witnesses, a permutation oracle and semi-discrete
//! estimates against densities.
//!
//! Masses are mapped to integers on a common grid before solving: the exact
//! common denominator when both measures have masses `k/N`, otherwise
//! `2^50` with rounding corrected so both sides carry the same total.

mod bottleneck;
mod brute;
mod simplex;

use std::fmt::Write as _;

pub use brute::brute_force_distance;

use crate::error::{Error, Result};
use crate::measures::{grid_init, DensitySpec, EmpiricalMeasure};

/// Default cap on `N·M` for the pairwise solvers.
pub const DEFAULT_PAIR_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    pub max_pairs: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { max_pairs: DEFAULT_PAIR_LIMIT }
    }
}

/// A coupling between two atomic measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(source index, target index, mass moved)`.
    pub entries: Vec<(usize, usize, f64)>,
    /// `Σ mass·|x-y|^p`, or `max |x-y|` over the support for `p = ∞`.
    pub cost: f64,
    /// `p`, infinite for the bottleneck problem.
    pub order: f64,
    /// Simplex pivots or feasibility checks spent by the solver.
    pub iterations: usize,
}

impl TransportPlan {
    /// Largest deviation of the plan's marginals from the masses of `mu`, `nu`.
    pub fn marginal_error(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let mut rows = vec![0.0; mu.len()];
        let mut cols = vec![0.0; nu.len()];
        for &(i, j, w) in &self.entries {
            rows[i] += w;
            cols[j] += w;
        }
        let r = rows.iter().zip(mu.masses()).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(nu.masses()).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// The plan's cost `Σ π_ij |x_i - y_j|^p` recomputed from its entries, or
    /// the longest used edge for `p = ∞`.
    pub fn recompute_cost(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let dist = |i: usize, j: usize| euclid(mu.position(i), nu.position(j));
        if self.order.is_infinite() {
            self.entries.iter().filter(|e| e.2 > 0.0).map(|&(i, j, _)| dist(i, j)).fold(0.0, f64::max)
        } else {
            self.entries.iter().map(|&(i, j, w)| w * cost_of(dist(i, j), self.order)).sum()
        }
    }

    /// One `i j mass` line per entry.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, j, w) in &self.entries {
            writeln!(s, "{i} {j} {w:.16e}").unwrap();
        }
        s
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn cost_of(dist: f64, p: f64) -> f64 {
    if p == 1.0 {
        dist
    } else if p == 2.0 {
        dist * dist
    } else {
        dist.powf(p)
    }
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, opts: &TransportOptions) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { left: mu.dim(), right: nu.dim() });
    }
    let pairs = mu.len().saturating_mul(nu.len());
    if pairs > opts.max_pairs {
        return Err(Error::Capacity { pairs, limit: opts.max_pairs });
    }
    Ok(())
}

/// Integer masses on a shared grid: `(supply, demand, denominator, exact)`.
pub(crate) fn integer_masses(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> (Vec<i64>, Vec<i64>, i64, bool) {
    fn counts(m: &EmpiricalMeasure) -> Option<Vec<i64>> {
        let n = m.len() as f64;
        let k: Vec<i64> = m.masses().iter().map(|w| (w * n).round() as i64).collect();
        let ok = k.iter().all(|&c| c >= 1)
            && m.masses().iter().zip(&k).all(|(w, &c)| (w * n - c as f64).abs() <= 1e-9)
            && k.iter().sum::<i64>() == m.len() as i64;
        ok.then_some(k)
    }
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let (n, m) = (mu.len() as i64, nu.len() as i64);
    if let (Some(a), Some(b)) = (counts(mu), counts(nu)) {
        let q = n / gcd(n, m) * m;
        if q <= 1 << 50 {
            let supply = a.iter().map(|c| c * (q / n)).collect();
            let demand = b.iter().map(|c| c * (q / m)).collect();
            return (supply, demand, q, true);
        }
    }
    let q: i64 = 1 << 50;
    let round = |masses: &[f64]| -> Vec<i64> {
        let mut v: Vec<i64> = masses.iter().map(|w| ((w * q as f64).round() as i64).max(1)).collect();
        let mut diff = q - v.iter().sum::<i64>();
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[b].cmp(&v[a]));
        let mut k = 0;
        while diff != 0 {
            let i = order[k % order.len()];
            let step = diff.signum();
            if v[i] + step >= 1 {
                v[i] += step;
                diff -= step;
            }
            k += 1;
        }
        v
    };
    (round(mu.masses()), round(nu.masses()), q, false)
}

/// `d_p(μ, ν)` for finite `p ≥ 1` and an optimal plan.
pub fn wasserstein_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<(f64, TransportPlan)> {
    wasserstein_p_with(mu, nu, p, &TransportOptions::default())
}

pub fn wasserstein_p_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    opts: &TransportOptions,
) -> Result<(f64, TransportPlan)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("transport order must be finite and >= 1, got {p}")));
    }
    check_pair(mu, nu, opts)?;
    let (n, m) = (mu.len(), nu.len());
    let mut cost = Vec::with_capacity(n * m);
    for i in 0..n {
        let x = mu.position(i);
        for j in 0..m {
            cost.push(cost_of(euclid(x, nu.position(j)), p));
        }
    }
    let (supply, demand, q, _) = integer_masses(mu, nu);
    let sol = simplex::solve(&cost, &supply, &demand)?;
    let qf = q as f64;
    let entries: Vec<(usize, usize, f64)> = sol.flows.iter().map(|&(i, j, f)| (i, j, f as f64 / qf)).collect();
    let total: f64 = sol.flows.iter().map(|&(i, j, f)| f as f64 * cost[i * m + j]).sum::<f64>() / qf;
    let total = total.max(0.0);
    let plan = TransportPlan { entries, cost: total, order: p, iterations: sol.pivots };
    Ok((total.powf(1.0 / p), plan))
}

/// `d_∞(μ, ν)`, an attained pairwise distance, and a witnessing plan.
pub fn wasserstein_infinity(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, TransportPlan)> {
    wasserstein_infinity_with(mu, nu, &TransportOptions::default())
}

pub fn wasserstein_infinity_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: &TransportOptions,
) -> Result<(f64, TransportPlan)> {
    check_pair(mu, nu, opts)?;
    let (supply, demand, q, exact) = integer_masses(mu, nu);
    // rounded masses may miss a perfect coupling by a few units
    let slack = if exact { 0 } else { (mu.len() + nu.len()) as i64 };
    let sol = bottleneck::solve(mu.positions(), nu.positions(), mu.dim(), &supply, &demand, q - slack);
    let qf = q as f64;
    let entries = sol.flows.iter().map(|&(i, j, f)| (i, j, f as f64 / qf)).collect();
    let plan = TransportPlan { entries, cost: sol.value, order: f64::INFINITY, iterations: sol.checks };
    Ok((sol.value, plan))
}

/// `d_p` for `p ∈ [1, ∞]`, with `f64::INFINITY` selecting the bottleneck.
pub fn distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64, opts: &TransportOptions) -> Result<f64> {
    if p.is_infinite() {
        Ok(wasserstein_infinity_with(mu, nu, opts)?.0)
    } else {
        Ok(wasserstein_p_with(mu, nu, p, opts)?.0)
    }
}

/// Distance estimate between an atomic measure and a density.
#[derive(Debug, Clone, PartialEq)]
pub struct SemidiscreteEstimate {
    pub value: f64,
    /// `(√d/2)·h` for the refinement mesh `h`.
    pub error_bar: f64,
    pub mesh: f64,
    pub refinement_atoms: usize,
}

/// Mesh and grid of the first regular refinement of `rho` with at least
/// `min_atoms` atoms.
pub fn refinement_grid(rho: &DensitySpec, min_atoms: usize) -> Result<(f64, EmpiricalMeasure)> {
    let (lo, hi) = rho.bounding_box();
    let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let d = rho.dim();
    let mut k = ((min_atoms as f64).powf(1.0 / d as f64).floor() as usize).max(1);
    loop {
        let h = side / k as f64;
        let g = grid_init(rho, h, d)?;
        if g.len() >= min_atoms {
            return Ok((h, g));
        }
        k += 1;
    }
}

/// Refinement of the grid of mesh `coarse` by the smallest integer factor
/// per axis giving at least `min_atoms` atoms. Its cells subdivide the
/// coarse cells exactly.
pub fn nested_refinement_grid(
    rho: &DensitySpec,
    coarse: f64,
    min_atoms: usize,
) -> Result<(f64, EmpiricalMeasure)> {
    let d = rho.dim();
    let mut m = 1usize;
    loop {
        let h = coarse / m as f64;
        let g = grid_init(rho, h, d)?;
        if g.len() >= min_atoms {
            return Ok((h, g));
        }
        m += 1;
    }
}

fn check_semidiscrete(mu: &EmpiricalMeasure, p: f64, refinement: usize) -> Result<()> {
    if refinement < 10 * mu.len() {
        return Err(Error::InvalidInput(format!(
            "refinement {refinement} below 10 x {} atoms",
            mu.len()
        )));
    }
    if !(p == 1.0 || p.is_infinite()) {
        return Err(Error::InvalidInput("semi-discrete distance supports p = 1 and p = inf".into()));
    }
    Ok(())
}

fn estimate(
    mu: &EmpiricalMeasure,
    rho: &DensitySpec,
    p: f64,
    (mesh, grid): (f64, EmpiricalMeasure),
    opts: &TransportOptions,
) -> Result<SemidiscreteEstimate> {
    let value = distance(mu, &grid, p, opts)?;
    Ok(SemidiscreteEstimate {
        value,
        error_bar: (rho.dim() as f64).sqrt() / 2.0 * mesh,
        mesh,
        refinement_atoms: grid.len(),
    })
}

/// `d_p(μ, ρ)` for `p = 1` or `p = ∞`, approximated by the distance to a grid
/// discretization of `ρ` with at least `refinement` atoms.
pub fn semidiscrete_distance(
    mu: &EmpiricalMeasure,
    rho: &DensitySpec,
    p: f64,
    refinement: usize,
    opts: &TransportOptions,
) -> Result<SemidiscreteEstimate> {
    check_semidiscrete(mu, p, refinement)?;
    estimate(mu, rho, p, refinement_grid(rho, refinement)?, opts)
}

/// As [`semidiscrete_distance`], discretizing `ρ` on a refinement nested in
/// the grid of mesh `coarse` (see [`nested_refinement_grid`]). Grid data
/// built with the same mesh then sees a bias that scales with the mesh.
pub fn semidiscrete_distance_nested(
    mu: &EmpiricalMeasure,
    rho: &DensitySpec,
    p: f64,
    coarse: f64,
    refinement: usize,
    opts: &TransportOptions,
) -> Result<SemidiscreteEstimate> {
    check_semidiscrete(mu, p, refinement)?;
    estimate(mu, rho, p, nested_refinement_grid(rho, coarse, refinement)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::iid_sample;
    use approx::assert_relative_eq;

    fn line(xs: &[f64], ws: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(1, xs.to_vec(), ws.to_vec()).unwrap()
    }

    #[test]
    fn single_atoms() {
        let a = EmpiricalMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::uniform(2, vec![3.0, 4.0]).unwrap();
        for p in [1.0, 2.0] {
            assert_relative_eq!(wasserstein_p(&a, &b, p).unwrap().0, 5.0, epsilon = 1e-14);
        }
        assert_eq!(wasserstein_infinity(&a, &b).unwrap().0, 5.0);
    }

    #[test]
    fn forced_plans() {
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.5], &[1.0]);
        assert_relative_eq!(wasserstein_p(&mu, &nu, 1.0).unwrap().0, 0.5, epsilon = 1e-15);
        assert_eq!(wasserstein_infinity(&mu, &nu).unwrap().0, 0.5);
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.1, 0.9], &[0.5, 0.5]);
        assert_relative_eq!(wasserstein_p(&mu, &nu, 1.0).unwrap().0, 0.1, epsilon = 1e-15);
        let (d, plan) = wasserstein_infinity(&mu, &nu).unwrap();
        assert_relative_eq!(d, 0.1, epsilon = 1e-15);
        assert_eq!(plan.entries, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn identical_measures() {
        let box_ = DensitySpec::uniform_box(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let mu = iid_sample(&box_, 30, 2).unwrap();
        let (d, plan) = wasserstein_infinity(&mu, &mu).unwrap();
        assert_eq!(d, 0.0);
        assert!(plan.entries.iter().all(|&(i, j, _)| i == j));
        assert!(wasserstein_p(&mu, &mu, 2.0).unwrap().0 < 1e-12);
    }

    #[test]
    fn errors() {
        let a = EmpiricalMeasure::uniform(1, vec![0.0]).unwrap();
        let b = EmpiricalMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(wasserstein_p(&a, &b, 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(wasserstein_infinity(&a, &b), Err(Error::DimensionMismatch { .. })));
        let box_ = DensitySpec::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let big = iid_sample(&box_, 2001, 1).unwrap();
        let big2 = iid_sample(&box_, 2000, 2).unwrap();
        assert!(matches!(wasserstein_p(&big, &big2, 1.0), Err(Error::Capacity { .. })));
        assert!(matches!(wasserstein_infinity(&big, &big2), Err(Error::Capacity { .. })));
    }

    #[test]
    fn plans_are_feasible_and_consistent() {
        let box_ = DensitySpec::uniform_box(vec![0.0; 2], vec![1.0; 2]).unwrap();
        for seed in 0..10u64 {
            let a = iid_sample(&box_, 20 + seed as usize, seed).unwrap();
            let raw = iid_sample(&box_, 17, 100 + seed).unwrap();
            let w: Vec<f64> = (0..17).map(|k| 1.0 + ((k * 31 + seed as usize) % 5) as f64).collect();
            let b = EmpiricalMeasure::normalized(2, raw.positions().to_vec(), w).unwrap();
            for p in [1.0, 2.0, f64::INFINITY] {
                let plan = if p.is_infinite() { wasserstein_infinity(&a, &b) } else { wasserstein_p(&a, &b, p) }
                    .unwrap()
                    .1;
                assert!(plan.marginal_error(&a, &b) <= 1e-10);
                assert!((plan.recompute_cost(&a, &b) - plan.cost).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn unit_interval_to_midpoint() {
        let rho = DensitySpec::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let mu = EmpiricalMeasure::uniform(1, vec![0.5]).unwrap();
        let est = semidiscrete_distance(&mu, &rho, f64::INFINITY, 200, &TransportOptions::default()).unwrap();
        assert!((est.value - 0.5).abs() <= est.error_bar + 1e-12);
        let est = semidiscrete_distance(&mu, &rho, 1.0, 200, &TransportOptions::default()).unwrap();
        assert!((est.value - 0.25).abs() <= est.error_bar + 1e-12);
        assert!(semidiscrete_distance(&mu, &rho, 1.0, 5, &TransportOptions::default()).is_err());
    }

    #[test]
    fn integer_scaling() {
        let a = EmpiricalMeasure::uniform(1, vec![0.0, 1.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
        let (s, d, q, exact) = integer_masses(&a, &b);
        assert!(exact);
        assert_eq!((s, d, q), (vec![2, 2, 2], vec![3, 3], 6));
        let c = EmpiricalMeasure::normalized(1, vec![0.0, 1.0], vec![1.0, std::f64::consts::PI]).unwrap();
        let (s, d, q, exact) = integer_masses(&a, &c);
        assert!(!exact);
        assert_eq!(s.iter().sum::<i64>(), q);
        assert_eq!(d.iter().sum::<i64>(), q);
    }

    #[test]
    fn nested_refinement_of_a_grid() {
        let rho = DensitySpec::uniform_box(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let mu = grid_init(&rho, 0.1, 2).unwrap();
        let (h, g) = nested_refinement_grid(&rho, 0.1, 1000).unwrap();
        assert_relative_eq!(h, 0.025);
        assert_eq!(g.len(), 1600);
        let est = semidiscrete_distance_nested(&mu, &rho, f64::INFINITY, 0.1, 1000, &TransportOptions::default()).unwrap();
        assert_relative_eq!(est.value, 0.075 * 0.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(est.value + est.error_bar, 0.1 * 0.5f64.sqrt(), epsilon = 1e-12);
    }
}
