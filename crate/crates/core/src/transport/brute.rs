use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// Largest count the permutation oracle accepts.
pub const BRUTE_FORCE_MAX: usize = 8;

/// Exhaustive minimum over all `N!` matchings between two equal-mass
/// measures of the same size; `p = ∞` gives the bottleneck value.
pub fn brute_force_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    let n = mu.len();
    if n != nu.len() {
        return Err(Error::InvalidInput("the oracle needs equal atom counts".into()));
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Capacity { pairs: n, limit: BRUTE_FORCE_MAX });
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { left: mu.dim(), right: nu.dim() });
    }
    let equal = |m: &EmpiricalMeasure| m.masses().iter().all(|w| (w * n as f64 - 1.0).abs() <= 1e-12);
    if !equal(mu) || !equal(nu) {
        return Err(Error::InvalidInput("the oracle needs equal masses".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("transport order must be >= 1, got {p}")));
    }
    let dist: Vec<f64> = (0..n * n)
        .map(|k| {
            let (a, b) = (mu.position(k / n), nu.position(k % n));
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .collect();
    let score = |perm: &[usize]| -> f64 {
        if p.is_infinite() {
            (0..n).map(|i| dist[i * n + perm[i]]).fold(0.0, f64::max)
        } else {
            (0..n).map(|i| dist[i * n + perm[i]].powf(p)).sum::<f64>() / n as f64
        }
    };
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = score(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(if p.is_infinite() { best } else { best.powf(1.0 / p) })
}
