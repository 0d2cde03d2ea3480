//! Typed run descriptions built from checked parameters.

use std::path::PathBuf;

use meanfield::dynamics::{IntegratorConfig, Scheme};
use meanfield::experiments::{ChaosStudyConfig, ConvergenceStudyConfig, ReferenceRule};
use meanfield::kernels::KernelSpec;
use meanfield::measures::DensitySpec;
use meanfield::transport::TransportOptions;
use meanfield::Exponent;

use crate::config::{ConfigError, ConfigErrors, Command, Document, Params};

#[derive(Debug, Clone)]
pub enum Initial {
    Grid { density: DensitySpec, n: usize },
    Iid { density: DensitySpec, n: usize },
    /// A `.atoms` file, relative to the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Aggregation,
    DOrsogna { alpha_sp: f64, beta_fr: f64 },
    CuckerSmale { gamma_cs: f64 },
}

#[derive(Debug, Clone)]
pub struct SimulateJob {
    pub model: Model,
    pub kernel: Option<KernelSpec>,
    /// Mollify the kernel at this width.
    pub epsilon: Option<f64>,
    pub initial: Initial,
    pub integrator: IntegratorConfig,
    pub sample_every: usize,
    /// Second-order velocities are uniform on `[-s, s]^d`.
    pub velocity_spread: f64,
}

/// Which regime `check-kernel` must confirm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Any,
    MeanFieldSingular,
    MeanFieldMild,
    Chaos,
}

#[derive(Debug, Clone)]
pub enum Job {
    Simulate(SimulateJob),
    Distance { mu: PathBuf, nu: PathBuf, transport: TransportOptions },
    CheckKernel { kernel: KernelSpec, d: usize, p: Exponent, regime: Regime, radii: Vec<f64> },
    Converge(Box<ConvergenceStudyConfig>),
    Chaos { cfg: Box<ChaosStudyConfig>, max_c2_spread: f64 },
    Mindist { density: DensitySpec, n: usize, l: f64, trials: usize, p: Exponent },
    Blobnorm { density: DensitySpec, n: Vec<usize>, gamma: f64, trials: usize, p: Exponent, resolution: usize },
    Cauchy {
        kernel: KernelSpec,
        density: DensitySpec,
        eps: (f64, f64),
        n: usize,
        integrator: IntegratorConfig,
        sample_every: usize,
        transport: TransportOptions,
        max_ratio: f64,
    },
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub output: PathBuf,
    pub params: Params,
    pub job: Job,
}

pub const DEFAULT_OUTPUT: &str = "meanfield-out";

/// Parse and validate a document. `command` comes from the command line;
/// a `subcommand` key in the document must agree with it.
pub fn parse_config(text: &str, command: Option<Command>) -> Result<RunConfig, ConfigErrors> {
    let doc = Document::parse(text)?;
    let declared = doc.entries.get(&(String::new(), "subcommand".to_string()));
    let command = match (command, declared) {
        (Some(c), None) => c,
        (c, Some(e)) => {
            let named: Command = e.value.parse().map_err(|m| ConfigErrors::single(ConfigError::at(e.line, m)))?;
            if let Some(c) = c.filter(|c| *c != named) {
                return Err(ConfigErrors::single(ConfigError::at(
                    e.line,
                    format!("config is for '{named}' but '{c}' was requested"),
                )));
            }
            named
        }
        (None, None) => return Err(ConfigErrors::single(ConfigError::general("no subcommand given"))),
    };
    let (params, errors) = Params::check_all(&doc, command);
    let mut b = Builder { p: &params, errors };
    let job = b.job(command);
    if !b.errors.is_empty() {
        b.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(ConfigErrors(b.errors));
    }
    Ok(RunConfig {
        command,
        seed: params.int("", "seed").unwrap_or(0),
        output: PathBuf::from(params.word("", "output").unwrap_or(DEFAULT_OUTPUT)),
        job: job.expect("no errors means every part was built"),
        params,
    })
}

struct Builder<'a> {
    p: &'a Params,
    errors: Vec<ConfigError>,
}

impl Builder<'_> {
    fn fail(&mut self, line: Option<usize>, msg: impl Into<String>) {
        self.errors.push(ConfigError { line, msg: msg.into() });
    }

    fn count(&mut self, section: &str, key: &str, default: u64, min: u64) -> usize {
        let v = self.p.int(section, key).unwrap_or(default);
        if v < min {
            self.fail(self.p.line(section, key), format!("{section}.{key} must be at least {min}"));
        }
        v as usize
    }

    fn positive(&mut self, section: &str, key: &str, default: f64) -> f64 {
        let v = self.p.float(section, key).unwrap_or(default);
        if !(v > 0.0) {
            self.fail(self.p.line(section, key), format!("{section}.{key} must be positive"));
        }
        v
    }

    fn max_pairs(&self, section: &str) -> TransportOptions {
        TransportOptions { max_pairs: self.p.int(section, "max_pairs").map_or(1 << 26, |v| v as usize) }
    }

    fn kernel(&mut self) -> Option<KernelSpec> {
        let name = self.p.word("kernel", "name")?;
        if ["a", "b", "k", "c_a", "l_a", "c_r", "l_r", "r_cut"].iter().any(|k| self.p.rejected("kernel", k)) {
            return None;
        }
        let params = self.p.numeric_keys("kernel");
        match KernelSpec::from_params(name, &params) {
            Ok(k) => Some(k),
            Err(e) => {
                self.fail(self.p.line("kernel", "name"), e.to_string());
                None
            }
        }
    }

    fn density(&mut self) -> Option<DensitySpec> {
        let name = self.p.word("density", "name")?.to_string();
        let line = self.p.line("density", "name");
        let allowed: &[&str] = match name.as_str() {
            "uniform_box" => &["lo", "hi"],
            "radial_bump" => &["center", "radius", "exponent"],
            "truncated_gaussian" => &["center", "sigma", "support"],
            other => {
                self.fail(line, format!("unknown density '{other}'"));
                return None;
            }
        };
        let mut ok = true;
        for key in ["lo", "hi", "center", "radius", "exponent", "sigma", "support"] {
            if self.p.rejected("density", key) {
                ok = false;
                continue;
            }
            let present = self.p.get("density", key).is_some();
            if present && !allowed.contains(&key) {
                self.fail(self.p.line("density", key), format!("density '{name}' does not take '{key}'"));
                ok = false;
            }
            if !present && allowed.contains(&key) {
                self.fail(line, format!("density '{name}' requires '{key}'"));
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        let f = |k| self.p.float("density", k).unwrap();
        let v = |k| self.p.floats("density", k).unwrap().to_vec();
        let built = match name.as_str() {
            "uniform_box" => DensitySpec::uniform_box(v("lo"), v("hi")),
            "radial_bump" => DensitySpec::radial_bump(v("center"), f("radius"), f("exponent")),
            _ => DensitySpec::truncated_gaussian(v("center"), f("sigma"), f("support")),
        };
        built.map_err(|e| self.fail(line, e.to_string())).ok()
    }

    fn integrator(&mut self, default: Option<IntegratorConfig>) -> Option<IntegratorConfig> {
        let s = "integrator";
        let mut cfg = match (self.p.float(s, "dt"), self.p.float(s, "t_final")) {
            (Some(dt), Some(t)) => IntegratorConfig::rk4(dt, t),
            (None, None) => default?,
            _ => {
                self.fail(self.p.section_line(s), "integrator.dt and integrator.t_final go together");
                return None;
            }
        };
        match self.p.word(s, "scheme") {
            None | Some("rk4") => {}
            Some("euler") => cfg.scheme = Scheme::ExplicitEuler,
            Some(other) => self.fail(self.p.line(s, "scheme"), format!("unknown scheme '{other}' (expected rk4 or euler)")),
        }
        if let Some(t) = self.p.float(s, "collision_stop_threshold") {
            cfg.collision_stop_threshold = t;
        }
        if let Some(c) = self.p.bool(s, "continue_after_collision") {
            cfg.continue_after_collision = c;
        }
        if let Err(e) = cfg.validate() {
            self.fail(self.p.section_line(s), e.to_string());
        }
        Some(cfg)
    }

    fn job(&mut self, command: Command) -> Option<Job> {
        match command {
            Command::Simulate => self.simulate(),
            Command::Distance => Some(Job::Distance {
                mu: self.p.word("distance", "mu")?.into(),
                nu: self.p.word("distance", "nu")?.into(),
                transport: self.max_pairs("distance"),
            }),
            Command::CheckKernel => self.check_kernel(),
            Command::Converge => self.converge(),
            Command::Chaos => self.chaos(),
            Command::Mindist => {
                let s = "mindist";
                let density = self.density();
                let n = self.count(s, "n", 0, 2);
                let trials = self.count(s, "trials", 0, 1);
                let l = self.positive(s, "l", 0.0);
                let p = self.p.exponent(s, "p").unwrap_or(Exponent::Infinity);
                Some(Job::Mindist { density: density?, n, l, trials, p })
            }
            Command::Blobnorm => {
                let s = "blobnorm";
                let density = self.density();
                let n: Vec<usize> = self.p.ints(s, "n")?.iter().map(|&v| v as usize).collect();
                if n.iter().any(|v| *v == 0) {
                    self.fail(self.p.line(s, "n"), "blobnorm.n entries must be positive");
                }
                let gamma = self.p.float(s, "gamma")?;
                if !(gamma > 0.0 && gamma < 1.0) {
                    self.fail(self.p.line(s, "gamma"), format!("gamma = {gamma} must lie in (0, 1)"));
                }
                let trials = self.count(s, "trials", 0, 1);
                let resolution = self.count(s, "resolution", 8, 1);
                let p = self.p.exponent(s, "p").unwrap_or(Exponent::Infinity);
                Some(Job::Blobnorm { density: density?, n, gamma, trials, p, resolution })
            }
            Command::Cauchy => {
                let s = "cauchy";
                let (kernel, density, integrator) = (self.kernel(), self.density(), self.integrator(None));
                let n = self.count(s, "n", 0, 1);
                let eps = (self.positive(s, "eps", 0.0), self.positive(s, "eps_prime", 0.0));
                let sample_every = self.count(s, "sample_every", 1, 1);
                let max_ratio = self.positive(s, "max_ratio", 2.0);
                Some(Job::Cauchy {
                    kernel: kernel?,
                    density: density?,
                    eps,
                    n,
                    integrator: integrator?,
                    sample_every,
                    transport: self.max_pairs(s),
                    max_ratio,
                })
            }
        }
    }

    fn simulate(&mut self) -> Option<Job> {
        let s = "simulate";
        let model = match self.p.word(s, "model").unwrap_or("aggregation") {
            "aggregation" => Model::Aggregation,
            "dorsogna" => Model::DOrsogna {
                alpha_sp: self.p.float(s, "alpha_sp").unwrap_or(0.0),
                beta_fr: self.p.float(s, "beta_fr").unwrap_or(0.0),
            },
            "cucker_smale" => Model::CuckerSmale { gamma_cs: self.p.float(s, "gamma_cs").unwrap_or(0.5) },
            other => {
                self.fail(self.p.line(s, "model"), format!("unknown model '{other}' (expected aggregation, dorsogna or cucker_smale)"));
                return None;
            }
        };
        let needs_kernel = !matches!(model, Model::CuckerSmale { .. });
        let kernel = if self.p.has_section("kernel") {
            if !needs_kernel {
                self.fail(self.p.section_line("kernel"), "cucker_smale takes no [kernel]");
            }
            self.kernel()
        } else {
            if needs_kernel {
                self.fail(None, "missing [kernel] section for simulate");
            }
            None
        };
        for key in ["alpha_sp", "beta_fr"] {
            if self.p.get(s, key).is_some() && !matches!(model, Model::DOrsogna { .. }) {
                self.fail(self.p.line(s, key), format!("{s}.{key} applies to the dorsogna model only"));
            }
        }
        if self.p.get(s, "gamma_cs").is_some() && !matches!(model, Model::CuckerSmale { .. }) {
            self.fail(self.p.line(s, "gamma_cs"), "simulate.gamma_cs applies to the cucker_smale model only");
        }
        let epsilon = self.p.float(s, "epsilon");
        if let Some(e) = epsilon {
            if !(e > 0.0) || !needs_kernel {
                self.fail(self.p.line(s, "epsilon"), "simulate.epsilon must be positive and needs a kernel");
            }
        }
        let initial = match (self.p.word(s, "input"), self.p.has_section("density")) {
            (Some(path), false) => {
                if self.p.get(s, "n").is_some() || self.p.get(s, "init").is_some() {
                    self.fail(self.p.line(s, "input"), "simulate.input excludes n and init");
                }
                Some(Initial::File(path.into()))
            }
            (None, true) => {
                let density = self.density();
                let n = self.count(s, "n", 0, 1);
                match self.p.word(s, "init").unwrap_or("grid") {
                    "grid" => density.map(|density| Initial::Grid { density, n }),
                    "iid" => density.map(|density| Initial::Iid { density, n }),
                    other => {
                        self.fail(self.p.line(s, "init"), format!("unknown init '{other}' (expected grid or iid)"));
                        None
                    }
                }
            }
            (Some(_), true) => {
                self.fail(self.p.line(s, "input"), "give either simulate.input or a [density], not both");
                None
            }
            (None, false) => {
                self.fail(None, "simulate needs simulate.input or a [density] section");
                None
            }
        };
        let integrator = self.integrator(None);
        let sample_every = self.count(s, "sample_every", 1, 1);
        let velocity_spread = self.p.float(s, "velocity_spread").unwrap_or(1.0);
        if !(velocity_spread >= 0.0) {
            self.fail(self.p.line(s, "velocity_spread"), "simulate.velocity_spread must be nonnegative");
        }
        Some(Job::Simulate(SimulateJob {
            model,
            kernel,
            epsilon,
            initial: initial?,
            integrator: integrator?,
            sample_every,
            velocity_spread,
        }))
    }

    fn check_kernel(&mut self) -> Option<Job> {
        let s = "check";
        let kernel = self.kernel();
        let d = self.count(s, "d", 0, 1);
        let p = self.p.exponent(s, "p")?;
        let regime = match self.p.word(s, "regime").unwrap_or("any") {
            "any" => Regime::Any,
            "mean_field_singular" => Regime::MeanFieldSingular,
            "mean_field_mild" => Regime::MeanFieldMild,
            "chaos" => Regime::Chaos,
            other => {
                self.fail(
                    self.p.line(s, "regime"),
                    format!("unknown regime '{other}' (expected any, mean_field_singular, mean_field_mild or chaos)"),
                );
                Regime::Any
            }
        };
        let radii = match self.p.floats(s, "radii") {
            Some(r) => {
                if r.len() < 4 || r.iter().any(|x| !(*x > 0.0)) {
                    self.fail(self.p.line(s, "radii"), "check.radii needs at least 4 positive radii");
                }
                r.to_vec()
            }
            None => (4..=12).map(|k| 2f64.powi(-k)).collect(),
        };
        Some(Job::CheckKernel { kernel: kernel?, d, p, regime, radii })
    }

    fn converge(&mut self) -> Option<Job> {
        let s = "converge";
        let (kernel, density, integrator) = (self.kernel(), self.density(), self.integrator(None));
        let ns: Vec<usize> = self.p.ints(s, "n")?.iter().map(|&v| v as usize).collect();
        let mut cfg = ConvergenceStudyConfig::new(kernel?, density?, ns, integrator?);
        if let Some(p) = self.p.exponent(s, "p") {
            cfg.p = p;
        }
        cfg.sample_every = self.count(s, "sample_every", 1, 1);
        cfg.norm_resolution = self.count(s, "norm_resolution", cfg.norm_resolution as u64, 1);
        cfg.transport = self.max_pairs(s);
        let finest = cfg.n_schedule.iter().copied().max().unwrap_or(1);
        let reference_n = self.p.int(s, "reference_n").map(|v| v as usize);
        let eps_reg = self.p.float(s, "epsilon_reg");
        let line = self.p.line(s, "reference");
        cfg.reference = match self.p.word(s, "reference").unwrap_or("finest_grid") {
            "finest_grid" => ReferenceRule::FinestGrid { n: reference_n.unwrap_or(4 * finest) },
            "mollified" => ReferenceRule::Mollified { n: reference_n.unwrap_or(4 * finest), epsilon_reg: eps_reg },
            "closed_form" => ReferenceRule::ClosedForm { atoms: reference_n.unwrap_or(16 * finest) },
            other => {
                self.fail(line, format!("unknown reference '{other}' (expected finest_grid, mollified or closed_form)"));
                return None;
            }
        };
        if eps_reg.is_some() && !matches!(cfg.reference, ReferenceRule::Mollified { .. }) {
            self.fail(self.p.line(s, "epsilon_reg"), "converge.epsilon_reg needs reference = mollified");
        }
        if let Err(e) = cfg.validate() {
            self.fail(self.p.section_line(s), e.to_string());
        }
        Some(Job::Converge(Box::new(cfg)))
    }

    fn chaos(&mut self) -> Option<Job> {
        let s = "chaos";
        let (kernel, density) = (self.kernel(), self.density());
        let integrator = self.integrator(Some(IntegratorConfig::rk4(0.02, 0.5)));
        let ns: Vec<usize> = self.p.ints(s, "n")?.iter().map(|&v| v as usize).collect();
        let trials = self.count(s, "trials", 0, 1);
        let gamma = self.p.float(s, "gamma")?;
        let mut cfg = ChaosStudyConfig::new(kernel?, density?, ns, trials, gamma);
        cfg.integrator = integrator?;
        if let Some(p) = self.p.exponent(s, "p") {
            cfg.p = p;
        }
        if let Some(r) = self.p.float(s, "r") {
            cfg.r = r;
        }
        cfg.c1 = self.positive(s, "c1", cfg.c1);
        if let Some(n) = self.p.int(s, "reference_n") {
            cfg.reference_n = n as usize;
        }
        if let Some(q) = self.p.float(s, "quantile") {
            if !(q > 0.0 && q <= 1.0) {
                self.fail(self.p.line(s, "quantile"), "chaos.quantile must lie in (0, 1]");
            }
            cfg.calibration_quantile = q;
        }
        cfg.blob_trials = self.count(s, "blob_trials", cfg.blob_trials as u64, 1);
        cfg.norm_resolution = self.count(s, "norm_resolution", cfg.norm_resolution as u64, 1);
        cfg.sample_every = self.count(s, "sample_every", cfg.sample_every as u64, 1);
        cfg.transport = self.max_pairs(s);
        let max_c2_spread = self.positive(s, "max_c2_spread", 0.5);
        cfg.seed = self.p.int("", "seed").unwrap_or(0);
        if let Err(e) = cfg.validate() {
            self.fail(self.p.line(s, "gamma"), e.to_string());
        }
        Some(Job::Chaos { cfg: Box::new(cfg), max_c2_spread })
    }
}
