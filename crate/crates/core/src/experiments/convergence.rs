//! Mean-field convergence sweeps over grid-initialized particle systems.

use crate::diagnostics::{
    check_bounds_series, guaranteed_time, reference_norm, regime_ratio, xi_n, BoundsReport, GuaranteedTime,
    SeriesPoint, TheoryParams,
};
use crate::dynamics::{integrate, CollisionEvent, FirstOrderState, IntegratorConfig, ModelSpec, State};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::kernels::{KernelSpec, MollifiedKernel, MollifiedProfile, PairKernel};
use crate::measures::{grid_init, DensitySpec, EmpiricalMeasure};
use crate::transport::{refinement_grid, semidiscrete_distance_nested, wasserstein_infinity_with, wasserstein_p_with, TransportOptions};

use super::{log_log_slope, num, PlotData, Table, VERSION};

/// How the limit `ρ(t)` is approximated.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceRule {
    /// Harmonic kernels: the refinement grid of `ρ⁰` contracted toward its
    /// center of mass by `e^{-kt}`, with at least `atoms` atoms.
    ClosedForm { atoms: usize },
    /// Grid run with `n` atoms and the exact kernel.
    FinestGrid { n: usize },
    /// Grid run with `n` atoms and the kernel mollified at `epsilon_reg`,
    /// half the reference mesh by default.
    Mollified { n: usize, epsilon_reg: Option<f64> },
}

impl ReferenceRule {
    fn atoms(&self) -> usize {
        match self {
            ReferenceRule::ClosedForm { atoms } => *atoms,
            ReferenceRule::FinestGrid { n } | ReferenceRule::Mollified { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudyConfig {
    pub kernel: KernelSpec,
    pub density: DensitySpec,
    /// Target particle counts; each becomes the mesh [`lattice_mesh`].
    pub n_schedule: Vec<usize>,
    pub p: Exponent,
    pub integrator: IntegratorConfig,
    pub sample_every: usize,
    pub reference: ReferenceRule,
    pub transport: TransportOptions,
    /// Grid resolution per blob radius for `‖ρ‖`.
    pub norm_resolution: usize,
}

impl ConvergenceStudyConfig {
    pub fn new(kernel: KernelSpec, density: DensitySpec, n_schedule: Vec<usize>, integrator: IntegratorConfig) -> Self {
        let finest = n_schedule.iter().copied().max().unwrap_or(1);
        ConvergenceStudyConfig {
            kernel,
            density,
            n_schedule,
            p: Exponent::Infinity,
            integrator,
            sample_every: 1,
            reference: ReferenceRule::FinestGrid { n: 4 * finest },
            transport: TransportOptions { max_pairs: 1 << 26 },
            norm_resolution: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() || self.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("N schedule must be nonempty and strictly increasing".into()));
        }
        let finest = *self.n_schedule.last().unwrap();
        let min_ref = match self.reference {
            ReferenceRule::ClosedForm { .. } => 10 * finest,
            _ => 4 * finest,
        };
        if self.reference.atoms() < min_ref {
            return Err(Error::Config(format!(
                "reference needs at least {min_ref} atoms, got {}",
                self.reference.atoms()
            )));
        }
        if matches!(self.reference, ReferenceRule::ClosedForm { .. }) && !matches!(self.kernel, KernelSpec::Harmonic { .. }) {
            return Err(Error::Config("closed-form reference needs a harmonic kernel".into()));
        }
        if let ReferenceRule::Mollified { epsilon_reg: Some(e), .. } = self.reference {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config("epsilon_reg must be positive".into()));
            }
        }
        self.integrator.validate()?;
        self.theory().check_mean_field_regime()
    }

    pub fn theory(&self) -> TheoryParams {
        TheoryParams::new(self.density.dim(), self.p, self.kernel.declared_alpha())
    }
}

/// Mesh whose grid over the support's bounding box has about `n` cells.
pub fn lattice_mesh(rho: &DensitySpec, n: usize) -> f64 {
    let (lo, hi) = rho.bounding_box();
    let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    (vol / n as f64).powf(1.0 / rho.dim() as f64)
}

/// One particle count of a sweep.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub n: usize,
    pub mesh: f64,
    pub series: Vec<SeriesPoint>,
    /// Proxy error of the reference at each sample.
    pub eta_err: Vec<f64>,
    pub d1: Vec<f64>,
    pub xi: f64,
    pub guaranteed: GuaranteedTime,
    pub bounds: BoundsReport,
    pub events: Vec<CollisionEvent>,
    pub halted: bool,
}

impl ConvergenceRun {
    /// `η_m ≤ 2(η + err)` on every sample.
    pub fn step_a_holds(&self) -> bool {
        self.series.iter().zip(&self.eta_err).all(|(s, e)| s.eta_m <= 2.0 * (s.eta + e))
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudyReport {
    pub runs: Vec<ConvergenceRun>,
    pub theory: TheoryParams,
    pub rho_norm: f64,
    /// Smallest constant that is violation-free for every run.
    pub c_cal: f64,
    pub table: Table,
    pub plot: PlotData,
}

impl ConvergenceStudyReport {
    /// Largest relative deviation of the per-run constants from their mean.
    pub fn c_cal_spread(&self) -> f64 {
        let cs: Vec<f64> = self.runs.iter().map(|r| r.bounds.calibrated_c).collect();
        let mean = cs.iter().sum::<f64>() / cs.len() as f64;
        cs.iter().map(|c| (c - mean).abs() / mean).fold(0.0, f64::max)
    }

    /// `η` at the final sample, strictly decreasing along the schedule.
    pub fn final_eta_decreasing(&self) -> bool {
        let last: Vec<f64> = self.runs.iter().map(|r| r.series.last().unwrap().eta).collect();
        last.windows(2).all(|w| w[1] < w[0])
    }

    pub fn any_collision(&self) -> bool {
        self.runs.iter().any(|r| !r.events.is_empty() || r.halted)
    }
}

/// Samples `(t, measure)` of the reference and the proxy error at each.
fn reference_samples(cfg: &ConvergenceStudyConfig) -> Result<(Vec<(f64, EmpiricalMeasure)>, Vec<f64>, f64)> {
    let rho = &cfg.density;
    let d = rho.dim();
    match cfg.reference {
        ReferenceRule::ClosedForm { atoms } => {
            let KernelSpec::Harmonic { k } = cfg.kernel else { unreachable!("validated") };
            let (mesh, grid) = refinement_grid(rho, atoms)?;
            let bar = (d as f64).sqrt() / 2.0 * mesh;
            let com = grid.center_of_mass();
            let times = sample_times(&cfg.integrator, cfg.sample_every);
            let mut out = Vec::with_capacity(times.len());
            let mut errs = Vec::with_capacity(times.len());
            for t in times {
                let s = (-k * t).exp();
                let pos: Vec<f64> = grid.positions().iter().enumerate().map(|(i, x)| com[i % d] + (x - com[i % d]) * s).collect();
                out.push((t, grid.with_positions(pos)?));
                errs.push(bar * s);
            }
            Ok((out, errs, mesh))
        }
        ReferenceRule::FinestGrid { n } | ReferenceRule::Mollified { n, .. } => {
            let mesh = lattice_mesh(rho, n);
            let grid = grid_init(rho, mesh, d)?;
            let kernel = match cfg.reference {
                ReferenceRule::Mollified { epsilon_reg, .. } => {
                    let eps = epsilon_reg.unwrap_or(0.5 * mesh);
                    let (lo, hi) = rho.bounding_box();
                    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
                    let m = MollifiedKernel::new(cfg.kernel.clone(), eps, 12)?;
                    PairKernel::Mollified(Box::new(MollifiedProfile::new(m, d, 2.0 * diam)?))
                }
                _ => PairKernel::Exact(cfg.kernel.clone()),
            };
            let rec = integrate(
                &State::First(FirstOrderState { time: 0.0, measure: grid.clone() }),
                &ModelSpec::FirstOrderAggregation(kernel),
                &cfg.integrator,
                cfg.sample_every,
            )?;
            if let Some(ev) = rec.events.first() {
                return Err(Error::StudyInvalid(format!("reference run collides at t = {}", ev.time)));
            }
            let bar = (d as f64).sqrt() / 2.0 * mesh;
            let out: Vec<(f64, EmpiricalMeasure)> = rec
                .times
                .iter()
                .zip(&rec.states)
                .map(|(t, s)| (*t, s.as_first().expect("first-order run").measure.clone()))
                .collect();
            let errs = vec![bar; out.len()];
            Ok((out, errs, mesh))
        }
    }
}

pub(crate) fn sample_times(cfg: &IntegratorConfig, every: usize) -> Vec<f64> {
    let steps = cfg.steps();
    let mut t = vec![0.0];
    for n in 1..=steps {
        if n % every == 0 || n == steps {
            t.push(if n == steps { cfg.t_final } else { n as f64 * cfg.dt });
        }
    }
    t
}

/// Grid-initialize, integrate and compare with the reference for every `N`
/// of the schedule; one table row per `(N, t)`.
pub fn run_convergence_study(cfg: &ConvergenceStudyConfig) -> Result<ConvergenceStudyReport> {
    cfg.validate()?;
    let rho = &cfg.density;
    let d = rho.dim();
    let (reference, ref_err, ref_mesh) = reference_samples(cfg)?;
    let ref_measures: Vec<EmpiricalMeasure> = reference.iter().map(|(_, m)| m.clone()).collect();
    let rho_norm = reference_norm(&ref_measures, ref_mesh, cfg.p, cfg.norm_resolution)?;
    let theory = TheoryParams { rho_norm, ..cfg.theory() };

    let mut runs = Vec::with_capacity(cfg.n_schedule.len());
    for &n_target in &cfg.n_schedule {
        let mesh = lattice_mesh(rho, n_target);
        let mu0 = grid_init(rho, mesh, d)?;
        let rec = integrate(
            &State::First(FirstOrderState { time: 0.0, measure: mu0.clone() }),
            &ModelSpec::FirstOrderAggregation(PairKernel::Exact(cfg.kernel.clone())),
            &cfg.integrator,
            cfg.sample_every,
        )?;
        let mut series = Vec::with_capacity(rec.times.len());
        let mut d1 = Vec::with_capacity(rec.times.len());
        for (k, (t, st)) in rec.times.iter().zip(&rec.states).enumerate() {
            let (t_ref, nu) = &reference[k];
            debug_assert!((t - t_ref).abs() <= 1e-12 * (1.0 + t.abs()));
            let mu = &st.as_first().expect("first-order run").measure;
            let eta = wasserstein_infinity_with(mu, nu, &cfg.transport)?.0;
            d1.push(wasserstein_p_with(mu, nu, 1.0, &cfg.transport)?.0);
            series.push(SeriesPoint { t: *t, eta, eta_m: rec.min_distance[k] });
        }
        let xi = xi_n(series[0].eta, series[0].eta_m, &theory)?;
        let guaranteed = guaranteed_time(xi, &theory)?;
        let bounds = check_bounds_series(&series, &theory)?;
        runs.push(ConvergenceRun {
            n: mu0.len(),
            mesh,
            eta_err: ref_err[..series.len()].to_vec(),
            series,
            d1,
            xi,
            guaranteed,
            bounds,
            events: rec.events,
            halted: rec.halted,
        });
    }

    // violation-freeness is monotone in C, so the joint constant is the max
    let c_cal = runs.iter().map(|r| r.bounds.calibrated_c).fold(0.0, f64::max);
    let joint = TheoryParams { c_cal, ..theory };

    let mut table = Table::new(
        "convergence",
        &[
            "version", "kernel", "n", "mesh", "t", "eta", "eta_err", "d1", "eta_m", "xi", "guaranteed_time",
            "envelope_eta", "envelope_eta_m", "regime", "c_cal_run", "c_cal", "rho_norm", "collisions",
        ],
    );
    table.note(format!("d = {d}, p = {}, alpha = {}, reference = {:?}", cfg.p, theory.alpha, cfg.reference));
    table.note(format!("C_cal = {}, rho_norm = {}", num(c_cal), num(rho_norm)));
    let mut plot = PlotData::new("final d_inf against N", "N", "d_inf(mu_N(T), reference(T))");
    for r in &runs {
        let first = r.series[0];
        for (k, s) in r.series.iter().enumerate() {
            let env = crate::diagnostics::envelope_thm31(first.eta, first.eta_m, s.t - first.t, &joint, s.eta, s.eta_m);
            table.push(vec![
                VERSION.into(),
                cfg.kernel.to_string(),
                r.n.to_string(),
                num(r.mesh),
                num(s.t),
                num(s.eta),
                num(r.eta_err[k]),
                num(r.d1[k]),
                num(s.eta_m),
                num(r.xi),
                num(r.guaranteed.time),
                num(env.eta_upper),
                num(env.eta_m_lower),
                (regime_ratio(s.eta, s.eta_m, &joint) <= 1.0).to_string(),
                num(r.bounds.calibrated_c),
                num(c_cal),
                num(rho_norm),
                r.events.len().to_string(),
            ]);
        }
        let last = r.series.last().unwrap();
        plot.points.push((r.n as f64, last.eta, *r.eta_err.last().unwrap()));
    }
    Ok(ConvergenceStudyReport { runs, theory: joint, rho_norm, c_cal, table, plot })
}

/// `ξ_N` of grid initializations against a mesh sweep.
#[derive(Debug, Clone)]
pub struct XiScalingReport {
    pub meshes: Vec<f64>,
    pub eta0: Vec<f64>,
    pub eta_m0: Vec<f64>,
    pub xi: Vec<f64>,
    /// Fitted slope of `ln ξ` against `ln ε`.
    pub slope: f64,
    /// `d/p' - (1 + α)`
    pub predicted: f64,
    pub table: Table,
}

/// `ξ_N` for grid data at each mesh, with `η⁰` the semi-discrete distance
/// to `ρ⁰` at `refinement_factor` times the atom count.
pub fn run_xi_scaling(
    rho: &DensitySpec,
    meshes: &[f64],
    tp: &TheoryParams,
    refinement_factor: usize,
    opts: &TransportOptions,
) -> Result<XiScalingReport> {
    if meshes.len() < 2 {
        return Err(Error::InvalidInput("need at least two meshes".into()));
    }
    let d = rho.dim();
    let mut eta0 = Vec::new();
    let mut eta_m0 = Vec::new();
    let mut xi = Vec::new();
    let mut table = Table::new("xi_scaling", &["version", "mesh", "n", "eta0", "eta0_err", "eta_m0", "xi", "alpha"]);
    table.note(format!("d = {d}, p = {}, alpha = {}", tp.p, tp.alpha));
    for &h in meshes {
        let mu = grid_init(rho, h, d)?;
        let est = semidiscrete_distance_nested(&mu, rho, f64::INFINITY, h, refinement_factor.max(10) * mu.len(), opts)?;
        let em = crate::measures::min_interparticle_distance(&mu)?;
        let x = xi_n(est.value, em, tp)?;
        table.push(vec![
            VERSION.into(),
            num(h),
            mu.len().to_string(),
            num(est.value),
            num(est.error_bar),
            num(em),
            num(x),
            num(tp.alpha),
        ]);
        eta0.push(est.value);
        eta_m0.push(em);
        xi.push(x);
    }
    let pts: Vec<(f64, f64)> = meshes.iter().copied().zip(xi.iter().copied()).collect();
    let slope = log_log_slope(&pts);
    let predicted = tp.d_over_pconj() - (1.0 + tp.alpha);
    table.note(format!("slope = {}, predicted = {}", num(slope), num(predicted)));
    Ok(XiScalingReport { meshes: meshes.to_vec(), eta0, eta_m0, xi, slope, predicted, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(d: usize) -> DensitySpec {
        DensitySpec::uniform_box(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn lattice_mesh_hits_square_counts() {
        for n in [64usize, 256, 1024] {
            let h = lattice_mesh(&unit(2), n);
            assert_eq!(grid_init(&unit(2), h, 2).unwrap().len(), n);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = ConvergenceStudyConfig::new(KernelSpec::power_law(2.0, 1.0).unwrap(), unit(2), vec![16, 64], IntegratorConfig::rk4(0.1, 0.2));
        assert!(cfg.validate().is_ok());
        let mut bad = cfg.clone();
        bad.n_schedule = vec![64, 16];
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.reference = ReferenceRule::FinestGrid { n: 100 };
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.reference = ReferenceRule::ClosedForm { atoms: 10_000 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn harmonic_closed_form_contracts_eta() {
        let k = KernelSpec::harmonic(1.0).unwrap();
        let mut cfg = ConvergenceStudyConfig::new(k, unit(1), vec![16, 64], IntegratorConfig::rk4(0.01, 1.0));
        cfg.reference = ReferenceRule::ClosedForm { atoms: 6400 };
        cfg.sample_every = 25;
        let rep = run_convergence_study(&cfg).unwrap();
        for r in &rep.runs {
            let eta0 = r.series[0].eta;
            for s in &r.series {
                assert_relative_eq!(s.eta, (-s.t).exp() * eta0, epsilon = 1e-6);
            }
            assert!(r.bounds.violations.is_empty());
            assert!(r.step_a_holds());
        }
        assert!(rep.final_eta_decreasing());
        assert_eq!(rep.table.rows.len(), 2 * 5);
        assert!(!rep.any_collision());
    }

    #[test]
    fn xi_halves_with_the_mesh() {
        let tp = TheoryParams::new(2, Exponent::Infinity, 0.0);
        let rep = run_xi_scaling(&unit(2), &[0.2, 0.1], &tp, 10, &TransportOptions::default()).unwrap();
        assert_relative_eq!(rep.predicted, 1.0);
        assert!((rep.slope - 1.0).abs() < 0.05, "slope {}", rep.slope);
        assert!((rep.xi[1] / rep.xi[0] - 0.5).abs() < 0.05);
    }
}
