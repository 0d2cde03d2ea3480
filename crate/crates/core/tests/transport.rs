use approx::assert_relative_eq;
use meanfield::measures::EmpiricalMeasure;
use meanfield::rng::rng_from_seed;
use meanfield::transport::{distance, wasserstein_infinity, wasserstein_p, TransportOptions};
use rand::Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Optimal assignment by enumerating permutations; fine for n <= 6.
fn permutation_oracle(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> f64 {
    let n = mu.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    loop {
        let cost = if p.is_infinite() {
            (0..n).map(|i| dist(mu.position(i), nu.position(perm[i]))).fold(0.0, f64::max)
        } else {
            (0..n).map(|i| dist(mu.position(i), nu.position(perm[i])).powf(p)).sum::<f64>() / n as f64
        };
        best = best.min(cost);
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
        let j = (i..n).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    if p.is_infinite() {
        best
    } else {
        best.powf(1.0 / p)
    }
}

fn random_uniform(rng: &mut impl Rng, n: usize, d: usize) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn matches_permutation_oracle() {
    let mut rng = rng_from_seed(7);
    let opts = TransportOptions::default();
    for _ in 0..60 {
        let n = rng.gen_range(1..=6);
        let d = rng.gen_range(1..=3);
        let mu = random_uniform(&mut rng, n, d);
        let nu = random_uniform(&mut rng, n, d);
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let got = distance(&mu, &nu, p, &opts).unwrap();
            assert_relative_eq!(got, permutation_oracle(&mu, &nu, p), epsilon = 1e-10);
        }
    }
}

#[test]
fn one_dimensional_sorted_matching() {
    let mut rng = rng_from_seed(11);
    let n = 40;
    let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mu = EmpiricalMeasure::uniform(1, a.clone()).unwrap();
    let nu = EmpiricalMeasure::uniform(1, b.clone()).unwrap();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let w1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    let w2 = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt();
    let winf = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert_relative_eq!(wasserstein_p(&mu, &nu, 1.0).unwrap().0, w1, epsilon = 1e-12);
    assert_relative_eq!(wasserstein_p(&mu, &nu, 2.0).unwrap().0, w2, epsilon = 1e-12);
    assert_relative_eq!(wasserstein_infinity(&mu, &nu).unwrap().0, winf, epsilon = 1e-12);
}

#[test]
fn plans_have_the_right_marginals_and_cost() {
    let mut rng = rng_from_seed(3);
    let d = 2;
    let mu = EmpiricalMeasure::normalized(d, (0..14).map(|_| rng.gen_range(0.0..1.0)).collect(), (0..7).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap();
    let nu = EmpiricalMeasure::normalized(d, (0..18).map(|_| rng.gen_range(0.0..1.0)).collect(), (0..9).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap();
    let (w, plan) = wasserstein_p(&mu, &nu, 2.0).unwrap();
    assert!(plan.marginal_error(&mu, &nu) < 1e-12);
    assert_relative_eq!(plan.recompute_cost(&mu, &nu), w * w, epsilon = 1e-12);
    let (winf, plan) = wasserstein_infinity(&mu, &nu).unwrap();
    assert!(plan.marginal_error(&mu, &nu) < 1e-12);
    assert_relative_eq!(plan.recompute_cost(&mu, &nu), winf, epsilon = 1e-12);
    assert!(winf >= w - 1e-12);
}

#[test]
fn translation_moves_by_the_shift() {
    let mut rng = rng_from_seed(5);
    let mu = random_uniform(&mut rng, 12, 3);
    let shift = [0.3, -0.4, 1.2];
    let moved: Vec<f64> = mu.positions().chunks(3).flat_map(|x| x.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>()).collect();
    let nu = mu.with_positions(moved).unwrap();
    let len = dist(&shift, &[0.0; 3]);
    for p in [1.0, 2.0, f64::INFINITY] {
        assert_relative_eq!(distance(&mu, &nu, p, &TransportOptions::default()).unwrap(), len, epsilon = 1e-10);
    }
}
