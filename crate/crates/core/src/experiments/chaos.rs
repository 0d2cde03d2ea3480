//! Propagation-of-chaos Monte Carlo: minimum-distance and blob-norm
//! probability bounds for iid initial data, and the convergence-in-probability
//! trend of the empirical measures.

use crate::diagnostics::{blob_constants, chaos_constants, ChaosConstants, TheoryParams};
use crate::dynamics::{integrate, FirstOrderState, IntegratorConfig, ModelSpec, State};
use crate::error::{Error, Result};
use crate::exponent::{unit_ball_volume, Exponent};
use crate::kernels::{KernelSpec, MollifiedKernel, MollifiedProfile, PairKernel};
use crate::measures::{
    blob_lp_norm, blob_radius, blob_smooth, grid_init, iid_sample, min_interparticle_distance, DensitySpec,
    EmpiricalMeasure,
};
use crate::parallel::{map_indexed, Execution};
use crate::rng::derive_seed;
use crate::transport::{wasserstein_infinity_with, wasserstein_p_with, TransportOptions};

use super::convergence::lattice_mesh;
use super::{binomial_se, num, PlotData, Table, VERSION};

fn trial_seed(base: u64, n: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(base, n as u64), trial as u64)
}

#[derive(Debug, Clone)]
pub struct MindistReport {
    pub n: usize,
    pub l: f64,
    pub trials: usize,
    /// `L N^{-(2p-1)/(d(p-1))}`
    pub threshold: f64,
    /// `exp(-2 c_d^{1/p'} ‖ρ⁰‖_p L^{d/p'})`
    pub bound: f64,
    /// `2 c_d^{1/p'} ‖ρ⁰‖_p L^{d/p'}`, required to be at most `N`.
    pub hypothesis_value: f64,
    pub hypothesis_holds: bool,
    pub successes: usize,
    pub frequency: f64,
    /// Binomial standard error at the bound.
    pub se: f64,
    /// `None` when the hypothesis fails and the comparison is skipped.
    pub passed: Option<bool>,
    pub table: Table,
}

/// Empirical frequency of `η_m⁰ ≥ L N^{-(2p-1)/(d(p-1))}` over iid draws,
/// compared against the lower bound with 3 standard errors of slack.
pub fn run_mindist_check(
    rho: &DensitySpec,
    n: usize,
    l: f64,
    trials: usize,
    seed_base: u64,
    p: Exponent,
    exec: Execution,
) -> Result<MindistReport> {
    if n < 2 || trials == 0 || !(l > 0.0) {
        return Err(Error::InvalidInput("need N >= 2, trials >= 1 and L > 0".into()));
    }
    let d = rho.dim();
    let exponent = p.chaos_factor() / d as f64;
    let threshold = l * (n as f64).powf(-exponent);
    let dp = d as f64 / p.conjugate();
    let hypothesis_value = 2.0 * unit_ball_volume(d).powf(1.0 / p.conjugate()) * rho.lp_norm(p) * l.powf(dp);
    let bound = (-hypothesis_value).exp();
    let hypothesis_holds = hypothesis_value <= n as f64;
    let dists = map_indexed(exec, trials, |k| -> Result<f64> {
        min_interparticle_distance(&iid_sample(rho, n, trial_seed(seed_base, n, k))?)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let successes = dists.iter().filter(|&&e| e >= threshold).count();
    let frequency = successes as f64 / trials as f64;
    let se = binomial_se(bound, trials);
    let passed = hypothesis_holds.then_some(frequency >= bound - 3.0 * se);
    let mut table = Table::new(
        "mindist",
        &["version", "n", "l", "trials", "threshold", "bound", "hypothesis", "successes", "frequency", "se", "passed"],
    );
    table.note(format!("d = {d}, p = {p}, seed = {seed_base}, slack = 3 se at the bound"));
    table.push(vec![
        VERSION.into(),
        n.to_string(),
        num(l),
        trials.to_string(),
        num(threshold),
        num(bound),
        hypothesis_holds.to_string(),
        successes.to_string(),
        num(frequency),
        num(se),
        passed.map_or("skipped".to_string(), |b| b.to_string()),
    ]);
    Ok(MindistReport {
        n,
        l,
        trials,
        threshold,
        bound,
        hypothesis_value,
        hypothesis_holds,
        successes,
        frequency,
        se,
        passed,
        table,
    })
}

#[derive(Debug, Clone)]
pub struct BlobNormReport {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub c_r: f64,
    pub l_d: f64,
    pub rho_norm_p: f64,
    /// `[2(R+1)]^d N^γ e^{-c_R ‖ρ⁰‖_p N^{1-γ}}`
    pub bound: f64,
    /// The bound is at least 1 and says nothing.
    pub vacuous: bool,
    pub exceedances: usize,
    pub frequency: f64,
    pub se: f64,
    pub norms: Vec<f64>,
    /// `None` for a vacuous bound.
    pub passed: Option<bool>,
    pub table: Table,
}

/// Frequency of `L_d ‖ρ⁰‖_p ≤ ‖ρ_N⁰‖_p` for blob data at `ε = N^{-γ/d}`,
/// compared against the large-deviation bound with 3 standard errors.
#[allow(clippy::too_many_arguments)]
pub fn run_blobnorm_check(
    rho: &DensitySpec,
    n: usize,
    gamma: f64,
    p: Exponent,
    trials: usize,
    seed_base: u64,
    resolution: usize,
    exec: Execution,
) -> Result<BlobNormReport> {
    if n == 0 || trials == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidInput("need N >= 1, trials >= 1 and gamma in (0, 1)".into()));
    }
    let d = rho.dim();
    let r = rho.support_radius();
    let (c_r, l_d) = blob_constants(d, p, r);
    let rho_norm_p = rho.lp_norm(p);
    let epsilon = blob_radius(n, gamma, d);
    let nf = n as f64;
    let bound = (2.0 * (r + 1.0)).powi(d as i32) * nf.powf(gamma) * (-c_r * rho_norm_p * nf.powf(1.0 - gamma)).exp();
    let vacuous = bound >= 1.0;
    let norms = map_indexed(exec, trials, |k| -> Result<f64> {
        let mu = iid_sample(rho, n, trial_seed(seed_base, n, k))?;
        blob_lp_norm(&blob_smooth(&mu, epsilon)?, p, resolution)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let level = l_d * rho_norm_p;
    let exceedances = norms.iter().filter(|&&v| v >= level).count();
    let frequency = exceedances as f64 / trials as f64;
    let se = binomial_se(bound.min(1.0), trials);
    let passed = (!vacuous).then_some(frequency <= bound + 3.0 * se);
    let mut table = Table::new(
        "blobnorm",
        &[
            "version", "n", "gamma", "epsilon", "trials", "c_r", "l_d", "rho_norm_p", "bound", "vacuous", "exceedances",
            "frequency", "se", "mean_norm", "max_norm", "passed",
        ],
    );
    table.note(format!("d = {d}, p = {p}, R = {r}, resolution = {resolution}, seed = {seed_base}, slack = 3 se at the bound"));
    table.push(vec![
        VERSION.into(),
        n.to_string(),
        num(gamma),
        num(epsilon),
        trials.to_string(),
        num(c_r),
        num(l_d),
        num(rho_norm_p),
        num(bound),
        vacuous.to_string(),
        exceedances.to_string(),
        num(frequency),
        num(se),
        num(norms.iter().sum::<f64>() / trials as f64),
        num(norms.iter().copied().fold(0.0, f64::max)),
        passed.map_or("vacuous".to_string(), |b| b.to_string()),
    ]);
    Ok(BlobNormReport {
        n,
        gamma,
        epsilon,
        trials,
        c_r,
        l_d,
        rho_norm_p,
        bound,
        vacuous,
        exceedances,
        frequency,
        se,
        norms,
        passed,
        table,
    })
}

#[derive(Debug, Clone)]
pub struct ChaosStudyConfig {
    pub kernel: KernelSpec,
    pub density: DensitySpec,
    pub n_schedule: Vec<usize>,
    pub trials: usize,
    pub gamma: f64,
    pub p: Exponent,
    pub integrator: IntegratorConfig,
    pub sample_every: usize,
    pub seed: u64,
    /// Exponent `r` of the minimum-distance filter `η_m⁰ ≥ ε^r / C₁`.
    pub r: f64,
    pub c1: f64,
    /// Atoms of the grid reference run.
    pub reference_n: usize,
    /// Quantile of `sup_t d₁ N^{γ/d}` at the smallest `N` that fixes `C`.
    pub calibration_quantile: f64,
    /// Filtered trials per `N` that also get the blob-solution comparison.
    pub blob_trials: usize,
    pub norm_resolution: usize,
    pub transport: TransportOptions,
    pub execution: Execution,
}

impl ChaosStudyConfig {
    pub fn new(kernel: KernelSpec, density: DensitySpec, n_schedule: Vec<usize>, trials: usize, gamma: f64) -> Self {
        let finest = n_schedule.iter().copied().max().unwrap_or(1);
        let d = density.dim();
        ChaosStudyConfig {
            kernel,
            density,
            n_schedule,
            trials,
            gamma,
            p: Exponent::Infinity,
            integrator: IntegratorConfig::rk4(0.02, 0.5),
            sample_every: 5,
            seed: 0,
            r: 1.0,
            c1: 2.0,
            reference_n: (4 * finest).max(1 << d),
            calibration_quantile: 0.9,
            blob_trials: 4,
            norm_resolution: 4,
            transport: TransportOptions { max_pairs: 1 << 26 },
            execution: Execution::default(),
        }
    }

    pub fn theory(&self) -> TheoryParams {
        TheoryParams::new(self.density.dim(), self.p, self.kernel.declared_alpha())
    }

    /// Largest admissible filter exponent, `d/(p'(1+α))`.
    pub fn r_upper(&self) -> f64 {
        let tp = self.theory();
        tp.d as f64 / (tp.p_conj() * (1.0 + tp.alpha))
    }

    pub fn validate(&self) -> Result<ChaosConstants> {
        let tp = self.theory();
        let consts = chaos_constants(&tp, self.density.support_radius())?;
        if !(self.gamma > consts.gamma_lo && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma = {} outside the admissible interval ({:.6}, 1)",
                self.gamma, consts.gamma_lo
            )));
        }
        if !(self.r >= 1.0 && self.r < self.r_upper()) {
            return Err(Error::Config(format!("r = {} outside [1, {})", self.r, self.r_upper())));
        }
        if tp.alpha >= 0.0 && tp.d < 3 {
            return Err(Error::Config("alpha >= 0 needs d >= 3".into()));
        }
        if self.n_schedule.is_empty() || self.n_schedule.windows(2).any(|w| w[1] <= w[0]) || self.n_schedule[0] < 2 {
            return Err(Error::Config("N schedule must be strictly increasing and start at 2 or more".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::Config("C1 must be positive".into()));
        }
        if !(self.calibration_quantile > 0.0 && self.calibration_quantile < 1.0) {
            return Err(Error::Config("calibration quantile must lie in (0, 1)".into()));
        }
        if self.reference_n < 4 * self.n_schedule.last().unwrap() {
            return Err(Error::Config("reference needs at least 4 x the largest N".into()));
        }
        self.integrator.validate()?;
        Ok(consts)
    }
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosTrial {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub eta_m0: f64,
    pub blob_norm: f64,
    pub omega1: bool,
    pub omega2: bool,
    /// `d₁(μ_N⁰, reference⁰)`
    pub d1_initial: f64,
    pub omega3: bool,
    /// `sup_t d₁(μ_N(t), reference(t))`; `None` for trials removed by the filter.
    pub sup_d1: Option<f64>,
    pub collided: bool,
}

impl ChaosTrial {
    pub fn filtered(&self) -> bool {
        self.omega1 && self.omega2
    }
}

/// Per-`N` summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosLevel {
    pub n: usize,
    pub epsilon: f64,
    pub filtered: usize,
    pub omega1_rate: f64,
    pub omega2_rate: f64,
    pub omega3_rate: f64,
    pub exceed: f64,
    pub exceed_se: f64,
    /// Fitted `C₂` of `d_∞(ρ_N(t), μ_N(t)) ≤ d_∞(ρ_N⁰, μ_N⁰) e^{C₂t}`.
    pub c2: f64,
    /// `d_∞(ρ_N(t), μ_N(t)) ≤ ε e^{C₂ t}` on every compared sample.
    pub blob_bound_holds: bool,
}

#[derive(Debug, Clone)]
pub struct ChaosStudyReport {
    pub constants: ChaosConstants,
    pub c_cal: f64,
    pub trials: Vec<ChaosTrial>,
    pub levels: Vec<ChaosLevel>,
    /// `P̂` non-increasing within 2 standard errors of the difference.
    pub trend_ok: bool,
    /// Filter pass rates non-decreasing within 2 standard errors.
    pub filter_trend_ok: bool,
    /// Largest relative deviation of the fitted `C₂` from their mean.
    pub c2_spread: f64,
    pub trial_table: Table,
    pub summary_table: Table,
    pub plot: PlotData,
}

/// `a_{k+1} ≤ a_k + 2 √(se_k² + se_{k+1}²)` along the sequence.
fn non_increasing_within(values: &[(f64, f64)]) -> bool {
    values.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt())
}

/// Replace every atom by `2d` atoms at `±s e_k`, `s = ε √(d/(d+2))`, which
/// matches the second moment of the uniform ball `B(0, ε)`.
fn blob_stencil(mu: &EmpiricalMeasure, epsilon: f64) -> Result<EmpiricalMeasure> {
    let d = mu.dim();
    let s = epsilon * (d as f64 / (d as f64 + 2.0)).sqrt();
    let mut pos = Vec::with_capacity(mu.len() * 2 * d * d);
    for i in 0..mu.len() {
        let x = mu.position(i);
        for k in 0..d {
            for sign in [-1.0, 1.0] {
                pos.extend(x.iter().enumerate().map(|(j, v)| if j == k { v + sign * s } else { *v }));
            }
        }
    }
    EmpiricalMeasure::uniform(d, pos)
}

fn run_first_order(
    mu: &EmpiricalMeasure,
    kernel: &PairKernel,
    integrator: &IntegratorConfig,
    sample_every: usize,
) -> Result<(Vec<EmpiricalMeasure>, bool)> {
    let rec = integrate(
        &State::First(FirstOrderState { time: 0.0, measure: mu.clone() }),
        &ModelSpec::FirstOrderAggregation(kernel.clone()),
        integrator,
        sample_every,
    )?;
    let collided = !rec.events.is_empty() || rec.halted;
    Ok((rec.states.iter().map(|s| s.as_first().expect("first-order run").measure.clone()).collect(), collided))
}

/// Monte Carlo over iid initial data for every `N` of the schedule.
pub fn run_chaos_study(cfg: &ChaosStudyConfig) -> Result<ChaosStudyReport> {
    let constants = cfg.validate()?;
    let rho = &cfg.density;
    let d = rho.dim();
    let rho_p = rho.lp_norm(cfg.p);
    let exact = PairKernel::Exact(cfg.kernel.clone());

    // reference: grid data under the kernel mollified at half the mesh
    let ref_mesh = lattice_mesh(rho, cfg.reference_n);
    let ref0 = grid_init(rho, ref_mesh, d)?;
    let (lo, hi) = rho.bounding_box();
    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let mollified = MollifiedKernel::new(cfg.kernel.clone(), 0.5 * ref_mesh, 12)?;
    let ref_kernel = PairKernel::Mollified(Box::new(MollifiedProfile::new(mollified, d, 2.0 * diam)?));
    let (reference, ref_collided) = run_first_order(&ref0, &ref_kernel, &cfg.integrator, cfg.sample_every)?;
    if ref_collided {
        return Err(Error::StudyInvalid("reference run collides before T".into()));
    }

    let mut trials = Vec::new();
    let mut blob_fits = Vec::new();
    for &n in &cfg.n_schedule {
        let eps = blob_radius(n, cfg.gamma, d);
        let level = cfg.trials;
        let results = map_indexed(cfg.execution, level, |k| -> Result<ChaosTrial> {
            let seed = trial_seed(cfg.seed, n, k);
            let mu = iid_sample(rho, n, seed)?;
            let eta_m0 = min_interparticle_distance(&mu)?;
            let blob_norm = blob_lp_norm(&blob_smooth(&mu, eps)?, cfg.p, cfg.norm_resolution)?;
            let omega1 = eta_m0 >= eps.powf(cfg.r) / cfg.c1;
            let omega2 = blob_norm <= constants.l_d * rho_p;
            let d1_initial = wasserstein_p_with(&mu, &reference[0], 1.0, &cfg.transport)?.0;
            let mut t = ChaosTrial {
                n,
                trial: k,
                seed,
                eta_m0,
                blob_norm,
                omega1,
                omega2,
                d1_initial,
                omega3: d1_initial <= eps,
                sup_d1: None,
                collided: false,
            };
            if t.filtered() {
                let (states, collided) = run_first_order(&mu, &exact, &cfg.integrator, cfg.sample_every)?;
                let mut sup = d1_initial;
                for (s, r) in states.iter().zip(&reference).skip(1) {
                    sup = sup.max(wasserstein_p_with(s, r, 1.0, &cfg.transport)?.0);
                }
                t.sup_d1 = Some(sup);
                t.collided = collided;
            }
            Ok(t)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        // blob solution against the particle solution on the first filtered trials
        let chosen: Vec<&ChaosTrial> = results.iter().filter(|t| t.filtered()).take(cfg.blob_trials).collect();
        let fits = map_indexed(cfg.execution, chosen.len(), |k| -> Result<(f64, bool)> {
            let mu = iid_sample(rho, n, chosen[k].seed)?;
            let sub = blob_stencil(&mu, eps)?;
            let (ps, _) = run_first_order(&mu, &exact, &cfg.integrator, cfg.sample_every)?;
            let (bs, _) = run_first_order(&sub, &exact, &cfg.integrator, cfg.sample_every)?;
            let times = crate::experiments::convergence::sample_times(&cfg.integrator, cfg.sample_every);
            let dist: Vec<f64> = ps
                .iter()
                .zip(&bs)
                .map(|(a, b)| Ok(wasserstein_infinity_with(b, a, &cfg.transport)?.0))
                .collect::<Result<_>>()?;
            let c2 = times
                .iter()
                .zip(&dist)
                .skip(1)
                .map(|(t, v)| (v / dist[0]).ln() / t)
                .fold(f64::NEG_INFINITY, f64::max);
            let holds = times.iter().zip(&dist).all(|(t, v)| *v <= eps * (c2 * t).exp() * (1.0 + 1e-12));
            Ok((c2, holds))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        blob_fits.push(fits);
        trials.extend(results);
    }

    let at = |n: usize| trials.iter().filter(move |t| t.n == n);
    let scaled = |t: &ChaosTrial| t.sup_d1.map(|v| v * (t.n as f64).powf(cfg.gamma / d as f64));
    let first: Vec<f64> = {
        let mut v: Vec<f64> = at(cfg.n_schedule[0]).filter_map(scaled).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    if first.is_empty() {
        return Err(Error::InsufficientTrials(format!("no trial passed the filter at N = {}", cfg.n_schedule[0])));
    }
    let q_idx = ((cfg.calibration_quantile * first.len() as f64).ceil() as usize).clamp(1, first.len()) - 1;
    let c_cal = first[q_idx];

    let mut levels = Vec::new();
    for (k, &n) in cfg.n_schedule.iter().enumerate() {
        let all: Vec<&ChaosTrial> = at(n).collect();
        let kept: Vec<&&ChaosTrial> = all.iter().filter(|t| t.filtered()).collect();
        if kept.is_empty() {
            return Err(Error::InsufficientTrials(format!("no trial passed the filter at N = {n}")));
        }
        let m = all.len() as f64;
        let rate = |f: &dyn Fn(&ChaosTrial) -> bool| all.iter().filter(|t| f(t)).count() as f64 / m;
        let eps = blob_radius(n, cfg.gamma, d);
        let cut = c_cal * (n as f64).powf(-cfg.gamma / d as f64);
        let exceed = kept.iter().filter(|t| t.sup_d1.unwrap() >= cut).count() as f64 / kept.len() as f64;
        let fits = &blob_fits[k];
        levels.push(ChaosLevel {
            n,
            epsilon: eps,
            filtered: kept.len(),
            omega1_rate: rate(&|t| t.omega1),
            omega2_rate: rate(&|t| t.omega2),
            omega3_rate: rate(&|t| t.omega3),
            exceed,
            exceed_se: binomial_se(exceed, kept.len()),
            c2: fits.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max),
            blob_bound_holds: fits.iter().all(|f| f.1),
        });
    }
    let trend_ok = non_increasing_within(&levels.iter().map(|l| (l.exceed, l.exceed_se)).collect::<Vec<_>>());
    let rate_trend = |f: &dyn Fn(&ChaosLevel) -> f64| {
        let neg: Vec<(f64, f64)> = levels.iter().map(|l| (-f(l), binomial_se(f(l), cfg.trials))).collect();
        non_increasing_within(&neg)
    };
    let filter_trend_ok = rate_trend(&|l| l.omega1_rate) && rate_trend(&|l| l.omega2_rate);
    let c2s: Vec<f64> = levels.iter().map(|l| l.c2).filter(|c| c.is_finite()).collect();
    let c2_mean = c2s.iter().sum::<f64>() / c2s.len().max(1) as f64;
    let c2_spread = c2s.iter().map(|c| (c - c2_mean).abs() / c2_mean.abs()).fold(0.0, f64::max);

    let header = format!(
        "d = {d}, p = {}, alpha = {}, gamma = {}, r = {}, C1 = {}, seed = {}, reference atoms = {}, slack = 2 se for trends",
        cfg.p,
        cfg.kernel.declared_alpha(),
        cfg.gamma,
        cfg.r,
        cfg.c1,
        cfg.seed,
        ref0.len()
    );
    let mut trial_table = Table::new(
        "chaos_trials",
        &[
            "version", "n", "trial", "seed", "epsilon", "eta_m0", "omega1", "blob_norm", "omega2", "d1_initial", "omega3",
            "sup_d1", "collided", "c_cal", "c_r", "l_d",
        ],
    );
    trial_table.note(header.clone());
    for t in &trials {
        trial_table.push(vec![
            VERSION.into(),
            t.n.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            num(blob_radius(t.n, cfg.gamma, d)),
            num(t.eta_m0),
            t.omega1.to_string(),
            num(t.blob_norm),
            t.omega2.to_string(),
            num(t.d1_initial),
            t.omega3.to_string(),
            t.sup_d1.map_or("filtered".to_string(), num),
            t.collided.to_string(),
            num(c_cal),
            num(constants.c_r),
            num(constants.l_d),
        ]);
    }
    let mut summary_table = Table::new(
        "chaos_summary",
        &[
            "version", "n", "epsilon", "filtered", "omega1_rate", "omega2_rate", "omega3_rate", "p_hat", "se", "c_cal",
            "c2", "blob_bound", "c_r", "l_d", "gamma_lo",
        ],
    );
    summary_table.note(header);
    summary_table.note(format!("trend_ok = {trend_ok}, filter_trend_ok = {filter_trend_ok}, c2_spread = {}", num(c2_spread)));
    let mut plot = PlotData::new("exceedance frequency against N", "N", "P(sup d1 >= C N^{-gamma/d})");
    for l in &levels {
        summary_table.push(vec![
            VERSION.into(),
            l.n.to_string(),
            num(l.epsilon),
            l.filtered.to_string(),
            num(l.omega1_rate),
            num(l.omega2_rate),
            num(l.omega3_rate),
            num(l.exceed),
            num(l.exceed_se),
            num(c_cal),
            num(l.c2),
            l.blob_bound_holds.to_string(),
            num(constants.c_r),
            num(constants.l_d),
            num(constants.gamma_lo),
        ]);
        plot.points.push((l.n as f64, l.exceed, l.exceed_se));
    }
    Ok(ChaosStudyReport {
        constants,
        c_cal,
        trials,
        levels,
        trend_ok,
        filter_trend_ok,
        c2_spread,
        trial_table,
        summary_table,
        plot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(d: usize) -> DensitySpec {
        DensitySpec::uniform_box(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn mindist_plug_in() {
        let rep = run_mindist_check(&unit(2), 64, 0.1, 50, 3, Exponent::Infinity, Execution::Sequential).unwrap();
        assert_relative_eq!(rep.bound, (-2.0 * std::f64::consts::PI * 0.01).exp(), epsilon = 1e-15);
        assert_relative_eq!(rep.threshold, 0.1 / 64.0, epsilon = 1e-15);
        assert!(rep.hypothesis_holds);
        // L → 0 drives the bound to 1
        let tiny = run_mindist_check(&unit(2), 64, 1e-9, 20, 3, Exponent::Infinity, Execution::Sequential).unwrap();
        assert!(tiny.bound > 1.0 - 1e-15);
        assert_eq!(tiny.successes, 20);
    }

    #[test]
    fn blobnorm_constants_and_single_atom() {
        let rep = run_blobnorm_check(&unit(2), 16, 0.5, Exponent::Finite(2.0), 10, 1, 16, Execution::Sequential).unwrap();
        assert_relative_eq!(rep.c_r, 2f64.ln() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(rep.l_d, 20.0 / std::f64::consts::PI, epsilon = 1e-14);
        assert!(rep.vacuous && rep.passed.is_none());
        let one = run_blobnorm_check(&unit(2), 1, 0.5, Exponent::Finite(2.0), 3, 1, 64, Execution::Sequential).unwrap();
        let closed = (std::f64::consts::PI * one.epsilon.powi(2)).powf(-0.5);
        for v in one.norms {
            assert!((v - closed).abs() < 0.02 * closed, "{v} vs {closed}");
        }
    }

    #[test]
    fn stencil_is_within_epsilon() {
        let mu = iid_sample(&unit(3), 5, 2).unwrap();
        let sub = blob_stencil(&mu, 0.1).unwrap();
        assert_eq!(sub.len(), 30);
        let (d, _) = wasserstein_infinity_with(&sub, &mu, &TransportOptions::default()).unwrap();
        assert!(d <= 0.1 && d > 0.07);
    }

    #[test]
    fn config_rejects_gamma_outside_interval() {
        let k = KernelSpec::power_law(2.0, 0.8).unwrap();
        let mut cfg = ChaosStudyConfig::new(k, unit(3), vec![8, 16], 4, 1.2);
        cfg.r = 2.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(msg)) if msg.contains("(0.800000, 1)")));
        cfg.gamma = 0.9;
        assert!(cfg.validate().is_ok());
        cfg.r = 2.6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_study_is_deterministic() {
        let k = KernelSpec::power_law(2.0, 0.8).unwrap();
        let mut cfg = ChaosStudyConfig::new(k, unit(3), vec![8, 16], 6, 0.9);
        cfg.r = 2.0;
        cfg.integrator = IntegratorConfig::rk4(0.05, 0.1);
        cfg.sample_every = 1;
        cfg.blob_trials = 1;
        let a = run_chaos_study(&cfg).unwrap();
        let b = run_chaos_study(&cfg).unwrap();
        assert_eq!(a.trial_table.to_csv(), b.trial_table.to_csv());
        assert_eq!(a.summary_table.to_csv(), b.summary_table.to_csv());
        assert_eq!(a.levels.len(), 2);
        assert!(a.trials.iter().all(|t| t.omega2));
    }
}
