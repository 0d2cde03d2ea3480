//! Run a validated configuration and write its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use meanfield::dynamics::{
    diameter, integrate, velocity_diameter, FirstOrderState, ModelSpec, SecondOrderState, State, TrajectoryRecord,
};
use meanfield::experiments::{
    lattice_mesh, run_blobnorm_check, run_chaos_study, run_convergence_study, run_mindist_check,
    run_regularization_cauchy_check, PlotData, Table, VERSION,
};
use meanfield::kernels::{estimate_singularity_order, verify_kernel_assumptions, MollifiedKernel, MollifiedProfile, PairKernel};
use meanfield::measures::{grid_init, iid_sample, DensitySpec, EmpiricalMeasure};
use meanfield::parallel::Execution;
use meanfield::rng::derive_seed;
use meanfield::transport::{wasserstein_infinity_with, wasserstein_p_with};

use crate::job::{Initial, Job, Model, Regime, RunConfig, SimulateJob};
use crate::output::OutputDir;
use crate::CliError;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Config = 1,
    /// Collision or divergence.
    Numerical = 2,
    /// A check subcommand's assertion failed.
    Check = 3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub exit: Exit,
    /// Printed to stdout.
    pub summary: String,
}

impl Outcome {
    fn new(summary: String, failures: Vec<String>, exit: Exit) -> Self {
        if failures.is_empty() {
            Outcome { exit: Exit::Success, summary }
        } else {
            let mut s = summary;
            for f in failures {
                writeln!(s, "FAILED: {f}").unwrap();
            }
            Outcome { exit, summary: s }
        }
    }
}

/// Run `cfg`, resolving input paths against `base` and writing under
/// `cfg.output`. `source` is copied to `config.txt`.
pub fn dispatch(cfg: &RunConfig, source: &str, base: &Path, exec: Execution) -> Result<Outcome, CliError> {
    let mut out = OutputDir::create(&cfg.output)?;
    out.write("config.txt", source)?;
    let outcome = match &cfg.job {
        Job::Simulate(job) => simulate(job, cfg.seed, base, exec, &mut out)?,
        Job::Distance { mu, nu, transport } => {
            let mu = read_measure(&base.join(mu))?;
            let nu = read_measure(&base.join(nu))?;
            let (d1, p1) = wasserstein_p_with(&mu, &nu, 1.0, transport)?;
            let (d2, p2) = wasserstein_p_with(&mu, &nu, 2.0, transport)?;
            let (di, pi) = wasserstein_infinity_with(&mu, &nu, transport)?;
            out.write("plan_d1.plan", &p1.to_text())?;
            out.write("plan_d2.plan", &p2.to_text())?;
            out.write("plan_dinf.plan", &pi.to_text())?;
            let line = format!("d_1={d1:e} d_2={d2:e} d_inf={di:e}\n");
            out.write("distances.txt", &line)?;
            Outcome::new(line, vec![], Exit::Success)
        }
        Job::CheckKernel { kernel, d, p, regime, radii } => {
            let prof = estimate_singularity_order(kernel, radii)?;
            let rep = verify_kernel_assumptions(&prof, *d, *p);
            let text = format!("kernel = {kernel}\n{rep}\n");
            out.write("admissibility.txt", &text)?;
            let (ok, what) = match regime {
                Regime::Any => (rep.admissible, "admissible"),
                Regime::MeanFieldSingular => (rep.theorem_regime, "mean_field_singular"),
                Regime::MeanFieldMild => (rep.corollary_regime, "mean_field_mild"),
                Regime::Chaos => (rep.chaos_regime, "chaos"),
            };
            let fail = if ok { vec![] } else { vec![format!("kernel is not in the {what} regime for d = {d}, p = {p}")] };
            Outcome::new(text, fail, Exit::Check)
        }
        Job::Converge(study) => {
            let mut study = (**study).clone();
            study.integrator.execution = exec;
            let rep = run_convergence_study(&study)?;
            out.write("convergence.csv", &rep.table.to_csv())?;
            out.write("convergence.plotdat", &rep.plot.to_text())?;
            let mut s = String::new();
            for r in &rep.runs {
                out.write(&format!("bounds_n{}.txt", r.n), &format!("{}\n", r.bounds))?;
                let last = r.series.last().unwrap();
                writeln!(s, "n={} eta(T)={:e} eta_m(T)={:e} xi={:e} c_cal={:e}", r.n, last.eta, last.eta_m, r.xi, r.bounds.calibrated_c)
                    .unwrap();
            }
            writeln!(s, "c_cal={:e} spread={:e}", rep.c_cal, rep.c_cal_spread()).unwrap();
            if rep.any_collision() {
                let n: Vec<String> = rep.runs.iter().filter(|r| !r.events.is_empty()).map(|r| r.n.to_string()).collect();
                return finish(out, Outcome::new(s, vec![format!("collision in the runs with N = {}", n.join(", "))], Exit::Numerical));
            }
            let mut fail = Vec::new();
            if !rep.final_eta_decreasing() {
                fail.push("eta(T) is not strictly decreasing in N".to_string());
            }
            for r in rep.runs.iter().filter(|r| !r.step_a_holds()) {
                fail.push(format!("eta_m exceeds 2(eta + err) at N = {}", r.n));
            }
            Outcome::new(s, fail, Exit::Check)
        }
        Job::Chaos { cfg: study, max_c2_spread } => {
            let mut study = (**study).clone();
            study.execution = exec;
            study.integrator.execution = exec;
            let rep = run_chaos_study(&study)?;
            out.write("chaos_trials.csv", &rep.trial_table.to_csv())?;
            out.write("chaos_summary.csv", &rep.summary_table.to_csv())?;
            out.write("chaos.plotdat", &rep.plot.to_text())?;
            let mut s = String::new();
            for l in &rep.levels {
                writeln!(s, "n={} p_hat={:e} se={:e} filtered={} c2={:e}", l.n, l.exceed, l.exceed_se, l.filtered, l.c2).unwrap();
            }
            writeln!(s, "c_cal={:e} c2_spread={:e}", rep.c_cal, rep.c2_spread).unwrap();
            let mut fail = Vec::new();
            if !rep.trend_ok {
                fail.push("exceedance frequency increases along N beyond 2 se".to_string());
            }
            if !rep.filter_trend_ok {
                fail.push("filter pass rates decrease along N beyond 2 se".to_string());
            }
            if rep.c2_spread > *max_c2_spread {
                fail.push(format!("fitted C2 spread {:e} exceeds {max_c2_spread}", rep.c2_spread));
            }
            for l in rep.levels.iter().filter(|l| !l.blob_bound_holds) {
                fail.push(format!("blob d_inf bound fails at N = {}", l.n));
            }
            Outcome::new(s, fail, Exit::Check)
        }
        Job::Mindist { density, n, l, trials, p } => {
            let rep = run_mindist_check(density, *n, *l, *trials, cfg.seed, *p, exec)?;
            out.write("mindist.csv", &rep.table.to_csv())?;
            let verdict = match rep.passed {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "hypothesis violated, comparison skipped",
            };
            let s = format!(
                "frequency={:e} bound={:e} se={:e} hypothesis={:e} <= {} : {}\nresult: {verdict}\n",
                rep.frequency, rep.bound, rep.se, rep.hypothesis_value, rep.n, rep.hypothesis_holds
            );
            let fail = if rep.passed == Some(false) { vec!["frequency below bound - 3 se".to_string()] } else { vec![] };
            Outcome::new(s, fail, Exit::Check)
        }
        Job::Blobnorm { density, n, gamma, trials, p, resolution } => {
            let mut merged: Option<Table> = None;
            let mut plot = PlotData::new("blob norm deviation frequency against N", "N", "P(L_d |rho|_p <= |rho_N|_p)");
            let (mut s, mut fail) = (String::new(), Vec::new());
            for &k in n {
                let rep = run_blobnorm_check(density, k, *gamma, *p, *trials, derive_seed(cfg.seed, k as u64), *resolution, exec)?;
                let verdict = match rep.passed {
                    Some(true) => "pass",
                    Some(false) => "fail",
                    None => "vacuous (bound >= 1, not counted as a pass)",
                };
                writeln!(s, "n={k} frequency={:e} bound={:e} se={:e} : {verdict}", rep.frequency, rep.bound, rep.se).unwrap();
                if rep.passed == Some(false) {
                    fail.push(format!("frequency above bound + 3 se at N = {k}"));
                }
                plot.points.push((k as f64, rep.frequency, rep.se));
                match merged.as_mut() {
                    None => merged = Some(rep.table),
                    Some(t) => t.rows.extend(rep.table.rows),
                }
            }
            if let Some(t) = merged {
                out.write("blobnorm.csv", &t.to_csv())?;
            }
            out.write("blobnorm.plotdat", &plot.to_text())?;
            Outcome::new(s, fail, Exit::Check)
        }
        Job::Cauchy { kernel, density, eps, n, integrator, sample_every, transport, max_ratio } => {
            let mut integrator = *integrator;
            integrator.execution = exec;
            let rep = run_regularization_cauchy_check(kernel, density, *eps, *n, &integrator, *sample_every, transport)?;
            out.write("cauchy.csv", &rep.table.to_csv())?;
            let mut s = String::new();
            for p in &rep.pairs {
                writeln!(s, "eps={:e} eps_prime={:e} fitted_c={:e}", p.eps.0, p.eps.1, p.fitted_c).unwrap();
            }
            writeln!(s, "c_ratio={:e}", rep.c_ratio).unwrap();
            let fail = if rep.c_ratio > *max_ratio { vec![format!("C ratio {:e} exceeds {max_ratio}", rep.c_ratio)] } else { vec![] };
            Outcome::new(s, fail, Exit::Check)
        }
    };
    finish(out, outcome)
}

fn finish(out: OutputDir, outcome: Outcome) -> Result<Outcome, CliError> {
    out.finish()?;
    Ok(outcome)
}

pub fn read_measure(path: &Path) -> Result<EmpiricalMeasure, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(EmpiricalMeasure::from_text(&text)?)
}

fn initial_measure(init: &Initial, seed: u64, base: &Path) -> Result<EmpiricalMeasure, CliError> {
    Ok(match init {
        Initial::Grid { density, n } => grid_init(density, lattice_mesh(density, *n), density.dim())?,
        Initial::Iid { density, n } => iid_sample(density, *n, derive_seed(seed, 0))?,
        Initial::File(p) => read_measure(&base.join(p))?,
    })
}

fn simulate(job: &SimulateJob, seed: u64, base: &Path, exec: Execution, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mu0 = initial_measure(&job.initial, seed, base)?;
    let d = mu0.dim();
    let pair = match (&job.kernel, job.epsilon) {
        (Some(k), None) => Some(PairKernel::Exact(k.clone())),
        (Some(k), Some(eps)) => {
            let r_max = 4.0 * diameter(mu0.positions(), d).max(1.0);
            let m = MollifiedKernel::new(k.clone(), eps, 12)?;
            Some(PairKernel::Mollified(Box::new(MollifiedProfile::new(m, d, r_max)?)))
        }
        (None, _) => None,
    };
    let second = |velocities: Vec<f64>| State::Second(SecondOrderState {
        time: 0.0,
        dim: d,
        positions: mu0.positions().to_vec(),
        velocities,
        masses: mu0.masses().to_vec(),
    });
    let velocities = || -> Result<Vec<f64>, CliError> {
        if job.velocity_spread == 0.0 {
            return Ok(vec![0.0; mu0.positions().len()]);
        }
        let s = job.velocity_spread;
        let cube = DensitySpec::uniform_box(vec![-s; d], vec![s; d])?;
        Ok(iid_sample(&cube, mu0.len(), derive_seed(seed, 1))?.positions().to_vec())
    };
    let (model, state) = match job.model {
        Model::Aggregation => (
            ModelSpec::FirstOrderAggregation(pair.expect("aggregation has a kernel")),
            State::First(FirstOrderState { time: 0.0, measure: mu0.clone() }),
        ),
        Model::DOrsogna { alpha_sp, beta_fr } => (
            ModelSpec::DOrsogna { kernel: pair.expect("dorsogna has a kernel"), alpha_sp, beta_fr },
            second(velocities()?),
        ),
        Model::CuckerSmale { gamma_cs } => (ModelSpec::CuckerSmale { gamma_cs }, second(velocities()?)),
    };
    let mut integrator = job.integrator;
    integrator.execution = exec;
    let rec = integrate(&state, &model, &integrator, job.sample_every)?;
    out.write("initial.atoms", &mu0.to_text())?;
    out.write("trajectory.traj", &rec.to_text())?;
    out.write("events.txt", &rec.events_text())?;
    let last = rec.last();
    let final_measure = EmpiricalMeasure::new(d, last.positions().to_vec(), last.masses().to_vec())?;
    out.write("final.atoms", &final_measure.to_text())?;
    out.write("summary.csv", &summary_table(&rec, d).to_csv())?;
    let mut s = format!("samples={} t_end={:e} eta_m(end)={:e}\n", rec.times.len(), last.time(), rec.min_distance.last().unwrap());
    if let Some(v) = last.as_second() {
        writeln!(s, "velocity_diameter(end)={:e}", velocity_diameter(v)).unwrap();
    }
    let fail: Vec<String> = rec.events.iter().map(|e| e.to_string()).collect();
    Ok(Outcome::new(s, fail, Exit::Numerical))
}

fn summary_table(rec: &TrajectoryRecord, d: usize) -> Table {
    let second = rec.states[0].as_second().is_some();
    let mut cols = vec!["version", "t", "min_distance", "diameter"];
    if second {
        cols.extend(["velocity_diameter", "mean_velocity"]);
    }
    let mut t = Table::new("simulate", &cols);
    t.note(format!("d = {d}, halted = {}, collisions = {}", rec.halted, rec.events.len()));
    for ((time, st), eta) in rec.times.iter().zip(&rec.states).zip(&rec.min_distance) {
        let mut row = vec![VERSION.to_string(), format!("{time:e}"), format!("{eta:e}"), format!("{:e}", diameter(st.positions(), d))];
        if let Some(v) = st.as_second() {
            row.push(format!("{:e}", velocity_diameter(v)));
            row.push(v.mean_velocity().iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" "));
        }
        t.push(row);
    }
    t
}
