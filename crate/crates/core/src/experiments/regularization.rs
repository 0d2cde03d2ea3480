//! Checks on the mollified kernels: the defect `|∇(W - W_ε)|` and the
//! Cauchy property of the regularized particle systems in `ε`.

use crate::dynamics::{integrate, FirstOrderState, IntegratorConfig, ModelSpec, State};
use crate::error::{Error, Result};
use crate::kernels::{eval_gradient, mollify_gradient, KernelSpec, MollifiedKernel, MollifiedProfile, PairKernel};
use crate::measures::{grid_init, DensitySpec, EmpiricalMeasure};
use crate::transport::{wasserstein_p_with, TransportOptions};

use super::{num, Table, VERSION};
use crate::experiments::convergence::lattice_mesh;

/// `max_{2ε ≤ |x| ≤ 1} |∇(W - W_ε)(x)| |x|^{1+α} / ε` per `ε`.
#[derive(Debug, Clone)]
pub struct MollifierReport {
    pub eps: Vec<f64>,
    pub maxima: Vec<f64>,
    /// Largest over smallest maximum.
    pub ratio: f64,
    pub table: Table,
}

/// Scan `samples` log-spaced radii in `[2ε, 1]` along the first axis; the
/// defect is radial, so one direction suffices.
pub fn run_mollifier_check(
    kernel: &KernelSpec,
    dim: usize,
    eps: &[f64],
    alpha: f64,
    samples: usize,
    quadrature_order: usize,
) -> Result<MollifierReport> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < 0.5)) {
        return Err(Error::InvalidInput("mollifier widths must lie in (0, 1/2)".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two radii".into()));
    }
    let mut table = Table::new("mollifier_defect", &["version", "kernel", "epsilon", "r_argmax", "max_scaled_defect"]);
    table.note(format!("d = {dim}, alpha = {alpha}, quadrature order = {quadrature_order}, radii = {samples}"));
    let mut maxima = Vec::with_capacity(eps.len());
    for &e in eps {
        let m = MollifiedKernel::new(kernel.clone(), e, quadrature_order)?;
        let (mut worst, mut at) = (0.0f64, 0.0);
        for i in 0..samples {
            let r = 2.0 * e * (1.0 / (2.0 * e)).powf(i as f64 / (samples - 1) as f64);
            let mut x = vec![0.0; dim];
            x[0] = r;
            let gm = mollify_gradient(&m, &x)?;
            let g = eval_gradient(kernel, &x)?;
            let diff = gm.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scaled = diff * r.powf(1.0 + alpha) / e;
            if scaled > worst {
                worst = scaled;
                at = r;
            }
        }
        table.push(vec![VERSION.into(), kernel.to_string(), num(e), num(at), num(worst)]);
        maxima.push(worst);
    }
    let hi = maxima.iter().copied().fold(0.0, f64::max);
    let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MollifierReport { eps: eps.to_vec(), maxima, ratio: hi / lo, table })
}

/// `d₁` between two regularized runs from the same grid data.
#[derive(Debug, Clone)]
pub struct CauchyPair {
    pub eps: (f64, f64),
    pub times: Vec<f64>,
    pub d1: Vec<f64>,
    /// Smallest `C` with `d₁(t) ≤ (d₁(0) + ε + ε')(e^{Ct} - 1) + d₁(0) e^{Ct}`.
    pub fitted_c: f64,
}

#[derive(Debug, Clone)]
pub struct CauchyReport {
    pub n: usize,
    /// The requested pair followed by its halving.
    pub pairs: Vec<CauchyPair>,
    /// Larger over smaller fitted constant; 1 when both vanish.
    pub c_ratio: f64,
    pub table: Table,
}

/// Smallest `C ≥ 0` for which the integrated Cauchy bound holds on every
/// sample: the bound rearranges to `e^{Ct} ≥ (d₁ + d₀ + s)/(2d₀ + s)`.
pub fn fit_cauchy_constant(times: &[f64], d1: &[f64], s: f64) -> f64 {
    let d0 = d1[0];
    times
        .iter()
        .zip(d1)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, d)| {
            let denom = 2.0 * d0 + s;
            if denom <= 0.0 {
                if *d > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                ((d + d0 + s) / denom).ln() / t
            }
        })
        .fold(0.0, f64::max)
}

fn regularized_run(
    kernel: &KernelSpec,
    mu0: &EmpiricalMeasure,
    eps: f64,
    r_max: f64,
    integrator: &IntegratorConfig,
    sample_every: usize,
) -> Result<(Vec<f64>, Vec<EmpiricalMeasure>)> {
    let m = MollifiedKernel::new(kernel.clone(), eps, 12)?;
    let pk = PairKernel::Mollified(Box::new(MollifiedProfile::new(m, mu0.dim(), r_max)?));
    let rec = integrate(
        &State::First(FirstOrderState { time: 0.0, measure: mu0.clone() }),
        &ModelSpec::FirstOrderAggregation(pk),
        integrator,
        sample_every,
    )?;
    if let Some(ev) = rec.events.first() {
        return Err(Error::StudyInvalid(format!("regularized run at eps = {eps} collides at t = {}", ev.time)));
    }
    let states = rec.states.iter().map(|s| s.as_first().expect("first-order run").measure.clone()).collect();
    Ok((rec.times, states))
}

/// Run the grid-initialized system under `W_ε` and `W_ε'`, then under the
/// halved pair, and fit the Cauchy constant for both.
pub fn run_regularization_cauchy_check(
    kernel: &KernelSpec,
    density: &DensitySpec,
    eps: (f64, f64),
    n: usize,
    integrator: &IntegratorConfig,
    sample_every: usize,
    opts: &TransportOptions,
) -> Result<CauchyReport> {
    if !(eps.0 > 0.0 && eps.1 > 0.0) {
        return Err(Error::InvalidInput("mollifier widths must be positive".into()));
    }
    let d = density.dim();
    let mu0 = grid_init(density, lattice_mesh(density, n), d)?;
    let (lo, hi) = density.bounding_box();
    let r_max = 2.0 * lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let mut table = Table::new("cauchy", &["version", "kernel", "n", "eps", "eps_prime", "t", "d1", "bound", "fitted_c"]);
    table.note(format!("d = {d}, dt = {}, T = {}", integrator.dt, integrator.t_final));
    let mut pairs = Vec::new();
    for (a, b) in [eps, (0.5 * eps.0, 0.5 * eps.1)] {
        let (times, run_a) = regularized_run(kernel, &mu0, a, r_max, integrator, sample_every)?;
        let run_b = if a == b { run_a.clone() } else { regularized_run(kernel, &mu0, b, r_max, integrator, sample_every)?.1 };
        let d1 = run_a
            .iter()
            .zip(&run_b)
            .map(|(x, y)| if x == y { Ok(0.0) } else { Ok(wasserstein_p_with(x, y, 1.0, opts)?.0) })
            .collect::<Result<Vec<f64>>>()?;
        let s = a + b;
        let fitted_c = fit_cauchy_constant(&times, &d1, s);
        for (t, v) in times.iter().zip(&d1) {
            let bound = (d1[0] + s) * ((fitted_c * t).exp() - 1.0) + d1[0] * (fitted_c * t).exp();
            table.push(vec![
                VERSION.into(),
                kernel.to_string(),
                mu0.len().to_string(),
                num(a),
                num(b),
                num(*t),
                num(*v),
                num(bound),
                num(fitted_c),
            ]);
        }
        pairs.push(CauchyPair { eps: (a, b), times, d1, fitted_c });
    }
    let (c0, c1) = (pairs[0].fitted_c, pairs[1].fitted_c);
    let c_ratio = if c0 == 0.0 && c1 == 0.0 { 1.0 } else { c0.max(c1) / c0.min(c1) };
    table.note(format!("C ratio across halving = {}", num(c_ratio)));
    Ok(CauchyReport { n: mu0.len(), pairs, c_ratio, table })
}
