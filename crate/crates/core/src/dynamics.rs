//! Fixed-step integration of the first-order aggregation system
//! `Ẋ_i = -Σ_{j≠i} m_j ∇W(X_i - X_j)` and of the second-order D'Orsogna and
//! Cucker–Smale swarming systems, with collision detection.
//!
//! Force rows are summed over `j` in ascending order, one row per task, so
//! sequential and parallel execution give bit-identical trajectories.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernels::PairKernel;
use crate::measures::{closest_pair_of, EmpiricalMeasure};
use crate::parallel::{for_each_chunk, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderState {
    pub time: f64,
    pub measure: EmpiricalMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderState {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SecondOrderState {
    pub fn new(dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 || velocities.len() != positions.len() {
            return Err(Error::InvalidInput("positions and velocities must be nonempty with matching shapes".into()));
        }
        let n = positions.len() / dim;
        Ok(SecondOrderState { time: 0.0, dim, positions, velocities, masses: vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.masses.iter().enumerate() {
            for k in 0..self.dim {
                m[k] += w * self.velocities[i * self.dim + k];
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub enum State {
    First(FirstOrderState),
    Second(SecondOrderState),
}

impl State {
    pub fn time(&self) -> f64 {
        match self {
            State::First(s) => s.time,
            State::Second(s) => s.time,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::First(s) => s.measure.dim(),
            State::Second(s) => s.dim,
        }
    }

    pub fn positions(&self) -> &[f64] {
        match self {
            State::First(s) => s.measure.positions(),
            State::Second(s) => &s.positions,
        }
    }

    pub fn masses(&self) -> &[f64] {
        match self {
            State::First(s) => s.measure.masses(),
            State::Second(s) => &s.masses,
        }
    }

    pub fn as_first(&self) -> Option<&FirstOrderState> {
        match self {
            State::First(s) => Some(s),
            State::Second(_) => None,
        }
    }

    pub fn as_second(&self) -> Option<&SecondOrderState> {
        match self {
            State::Second(s) => Some(s),
            State::First(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    FirstOrderAggregation(PairKernel),
    /// `dv_i/dt = (α - β|v_i|²) v_i - (1/N) Σ_j ∇W(x_i - x_j)`
    DOrsogna { kernel: PairKernel, alpha_sp: f64, beta_fr: f64 },
    /// `dv_i/dt = (1/N) Σ_j (1 + |x_i - x_j|²)^{-γ} (v_j - v_i)`
    CuckerSmale { gamma_cs: f64 },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::FirstOrderAggregation(_) => Ok(()),
            ModelSpec::DOrsogna { alpha_sp, beta_fr, .. } => {
                if *alpha_sp >= 0.0 && *beta_fr >= 0.0 && alpha_sp.is_finite() && beta_fr.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("self-propulsion and friction must be nonnegative".into()))
                }
            }
            ModelSpec::CuckerSmale { gamma_cs } => {
                if *gamma_cs >= 0.0 && gamma_cs.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("communication exponent must be nonnegative".into()))
                }
            }
        }
    }

    fn is_first_order(&self) -> bool {
        matches!(self, ModelSpec::FirstOrderAggregation(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    /// Halt once `η_m` drops below this; 0 disables the check.
    pub collision_stop_threshold: f64,
    /// Keep integrating through a detected collision. The continuation uses
    /// the `∇W(0) = 0` convention and need not be unique.
    pub continue_after_collision: bool,
    pub execution: Execution,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            scheme: Scheme::Rk4,
            dt,
            t_final,
            collision_stop_threshold: 0.0,
            continue_after_collision: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.dt > self.t_final {
            return Err(Error::Config(format!("dt = {} exceeds t_final = {}", self.dt, self.t_final)));
        }
        if !(self.collision_stop_threshold >= 0.0) {
            return Err(Error::Config("collision threshold must be nonnegative".into()));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on `t_final`.
    pub fn steps(&self) -> usize {
        let ratio = self.t_final / self.dt;
        let near = ratio.round();
        if (ratio - near).abs() <= 1e-9 * ratio {
            near as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub i: usize,
    pub j: usize,
    pub dist: f64,
}

impl std::fmt::Display for CollisionEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "collision t={:.16e} i={} j={} dist={:.16e}", self.time, self.i, self.j, self.dist)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// `η_m` at each sample; infinite for a single particle.
    pub min_distance: Vec<f64>,
    pub events: Vec<CollisionEvent>,
    /// Integration stopped early on a collision.
    pub halted: bool,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &State {
        self.states.last().expect("a record holds at least the initial state")
    }

    /// Sample blocks `t <time>` followed by the measure text format; second
    /// order samples add a `velocities N` block of `v_1 … v_d` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, st) in self.times.iter().zip(&self.states) {
            writeln!(s, "t {t:.16e}").unwrap();
            match st {
                State::First(f) => s.push_str(&f.measure.to_text()),
                State::Second(q) => {
                    let m = EmpiricalMeasure::new(q.dim, q.positions.clone(), q.masses.clone())
                        .expect("second order states keep unit mass");
                    s.push_str(&m.to_text());
                    writeln!(s, "velocities {}", q.len()).unwrap();
                    for v in q.velocities.chunks(q.dim) {
                        let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
                        writeln!(s, "{}", row.join(" ")).unwrap();
                    }
                }
            }
        }
        s
    }

    pub fn events_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Parse the sample blocks written by [`TrajectoryRecord::to_text`],
/// keeping positions and masses.
pub fn read_trajectory(text: &str) -> Result<Vec<(f64, EmpiricalMeasure)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut out = Vec::new();
    while let Some((ln, l)) = lines.next() {
        let t: f64 = l
            .strip_prefix("t ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or(Error::Parse { line: ln + 1, msg: "expected 't <time>'".into() })?;
        let mut block = Vec::new();
        let (hl, header) = lines.next().ok_or(Error::Parse { line: ln + 2, msg: "missing measure block".into() })?;
        let n: usize = header
            .split_whitespace()
            .nth(1)
            .and_then(|v| v.parse().ok())
            .ok_or(Error::Parse { line: hl + 1, msg: "bad header".into() })?;
        block.push((hl, header));
        for _ in 0..n {
            block.push(lines.next().ok_or(Error::Parse { line: hl + 1, msg: "truncated block".into() })?);
        }
        let (m, _) = EmpiricalMeasure::parse_block(&mut block.into_iter())?;
        if let Some((_, v)) = lines.peek() {
            if v.starts_with("velocities") {
                lines.next();
                for _ in 0..n {
                    lines.next();
                }
            }
        }
        out.push((t, m));
    }
    Ok(out)
}

fn check_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Accumulate `Σ_{j} m_j f(|x_i - x_j|²) (x_i - x_j)` into `acc` for row `i`.
#[inline]
fn pair_row<F: Fn(f64) -> f64>(x: &[f64], masses: &[f64], d: usize, i: usize, f: &F, acc: &mut [f64]) {
    let xi = &x[i * d..(i + 1) * d];
    match d {
        1 => {
            let mut s = 0.0;
            for (j, m) in masses.iter().enumerate() {
                let dx = xi[0] - x[j];
                s += m * f(dx * dx) * dx;
            }
            acc[0] = s;
        }
        2 => {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (j, m) in masses.iter().enumerate() {
                let dx = xi[0] - x[2 * j];
                let dy = xi[1] - x[2 * j + 1];
                let c = m * f(dx * dx + dy * dy);
                s0 += c * dx;
                s1 += c * dy;
            }
            acc[0] = s0;
            acc[1] = s1;
        }
        3 => {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for (j, m) in masses.iter().enumerate() {
                let dx = xi[0] - x[3 * j];
                let dy = xi[1] - x[3 * j + 1];
                let dz = xi[2] - x[3 * j + 2];
                let c = m * f(dx * dx + dy * dy + dz * dz);
                s0 += c * dx;
                s1 += c * dy;
                s2 += c * dz;
            }
            acc[0] = s0;
            acc[1] = s1;
            acc[2] = s2;
        }
        _ => {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (j, m) in masses.iter().enumerate() {
                let xj = &x[j * d..(j + 1) * d];
                let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                let c = m * f(r2);
                for k in 0..d {
                    acc[k] += c * (xi[k] - xj[k]);
                }
            }
        }
    }
}

/// `out_i = -Σ_j m_j ∇W(x_i - x_j)` with `∇W(0) = 0`.
pub fn aggregation_velocities(
    x: &[f64],
    masses: &[f64],
    d: usize,
    kernel: &PairKernel,
    exec: Execution,
    out: &mut [f64],
) -> Result<()> {
    if !check_finite(x) {
        return Err(Error::Diverged { last_good_time: f64::NAN });
    }
    use crate::kernels::KernelSpec;
    match kernel {
        PairKernel::Exact(KernelSpec::Harmonic { k }) => {
            let k = *k;
            rows(x, masses, d, exec, out, move |r2: f64| if r2 == 0.0 { 0.0 } else { k })
        }
        PairKernel::Exact(KernelSpec::PowerLaw { a, b }) if *a == 2.0 => {
            let e = 0.5 * (b - 2.0);
            rows(x, masses, d, exec, out, move |r2: f64| if r2 == 0.0 { 0.0 } else { 1.0 - r2.powf(e) })
        }
        PairKernel::Exact(k) => rows(x, masses, d, exec, out, |r2| k.force_factor_sq(r2)),
        PairKernel::Mollified(m) => rows(x, masses, d, exec, out, |r2: f64| m.force_factor(r2.sqrt())),
    }
    Ok(())
}

/// Monomorphized row loop, so the factor inlines into the pair sum.
fn rows<F: Fn(f64) -> f64 + Sync + Send>(x: &[f64], masses: &[f64], d: usize, exec: Execution, out: &mut [f64], f: F) {
    for_each_chunk(exec, out, d, |i, row| {
        pair_row(x, masses, d, i, &f, row);
        row.iter_mut().for_each(|v| *v = -*v);
    })
}

/// Velocities of the first-order system at `s`.
pub fn rhs_first_order(s: &FirstOrderState, kernel: &PairKernel) -> Result<Vec<f64>> {
    let m = &s.measure;
    let mut out = vec![0.0; m.positions().len()];
    aggregation_velocities(m.positions(), m.masses(), m.dim(), kernel, Execution::Sequential, &mut out)?;
    Ok(out)
}

fn require_equal_masses(masses: &[f64]) -> Result<()> {
    let n = masses.len() as f64;
    if masses.iter().all(|m| (m * n - 1.0).abs() <= 1e-12) {
        Ok(())
    } else {
        Err(Error::Unsupported("second order models need equal masses 1/N".into()))
    }
}

/// Derivatives `(dv/dt, dx/dt)` of a second-order model.
fn second_order_rhs(
    model: &ModelSpec,
    x: &[f64],
    v: &[f64],
    masses: &[f64],
    d: usize,
    exec: Execution,
    dv: &mut [f64],
) -> Result<()> {
    if !check_finite(x) || !check_finite(v) {
        return Err(Error::Diverged { last_good_time: f64::NAN });
    }
    match model {
        ModelSpec::DOrsogna { kernel, alpha_sp, beta_fr } => {
            // masses are all 1/N, so the weighted row sum is the 1/N mean
            aggregation_velocities(x, masses, d, kernel, exec, dv)?;
            for (vi, ai) in v.chunks(d).zip(dv.chunks_mut(d)) {
                let speed2: f64 = vi.iter().map(|c| c * c).sum();
                let g = alpha_sp - beta_fr * speed2;
                for k in 0..d {
                    ai[k] += g * vi[k];
                }
            }
        }
        ModelSpec::CuckerSmale { gamma_cs } => {
            let gamma = *gamma_cs;
            for_each_chunk(exec, dv, d, |i, row| {
                row.iter_mut().for_each(|r| *r = 0.0);
                let xi = &x[i * d..(i + 1) * d];
                let vi = &v[i * d..(i + 1) * d];
                for (j, m) in masses.iter().enumerate() {
                    let xj = &x[j * d..(j + 1) * d];
                    let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                    let w = m * if gamma == 0.0 { 1.0 } else { (1.0 + r2).powf(-gamma) };
                    for k in 0..d {
                        row[k] += w * (v[j * d + k] - vi[k]);
                    }
                }
            });
        }
        ModelSpec::FirstOrderAggregation(_) => unreachable!("first order model in second order path"),
    }
    Ok(())
}

pub fn rhs_dorsogna(s: &SecondOrderState, model: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if !matches!(model, ModelSpec::DOrsogna { .. }) {
        return Err(Error::InvalidInput("expected a D'Orsogna model".into()));
    }
    second_order_derivatives(s, model)
}

pub fn rhs_cucker_smale(s: &SecondOrderState, gamma_cs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    second_order_derivatives(s, &ModelSpec::CuckerSmale { gamma_cs })
}

fn second_order_derivatives(s: &SecondOrderState, model: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    model.validate()?;
    require_equal_masses(&s.masses)?;
    let mut dv = vec![0.0; s.velocities.len()];
    second_order_rhs(model, &s.positions, &s.velocities, &s.masses, s.dim, Execution::Sequential, &mut dv)?;
    Ok((dv, s.velocities.clone()))
}

/// `max_{i,j} |v_i - v_j|`.
pub fn velocity_diameter(s: &SecondOrderState) -> f64 {
    diameter(&s.velocities, s.dim)
}

pub fn diameter(points: &[f64], d: usize) -> f64 {
    let n = points.len() / d;
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            let r2: f64 = (0..d).map(|k| (points[i * d + k] - points[j * d + k]).powi(2)).sum();
            best = best.max(r2);
        }
    }
    best.sqrt()
}

/// Right-hand side of the flattened system `y' = F(y)`.
struct System<'a> {
    model: &'a ModelSpec,
    masses: &'a [f64],
    d: usize,
    exec: Execution,
}

impl System<'_> {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        match self.model {
            ModelSpec::FirstOrderAggregation(k) => aggregation_velocities(y, self.masses, self.d, k, self.exec, out),
            model => {
                let half = y.len() / 2;
                let (x, v) = y.split_at(half);
                let (dx, dv) = out.split_at_mut(half);
                dx.copy_from_slice(v);
                second_order_rhs(model, x, v, self.masses, self.d, self.exec, dv)
            }
        }
    }

    fn step(&self, scheme: Scheme, y: &mut [f64], h: f64, work: &mut [Vec<f64>; 5]) -> Result<()> {
        let [k1, k2, k3, k4, tmp] = work;
        match scheme {
            Scheme::ExplicitEuler => {
                self.eval(y, k1)?;
                y.iter_mut().zip(k1.iter()).for_each(|(a, b)| *a += h * b);
            }
            Scheme::Rk4 => {
                self.eval(y, k1)?;
                axpy(tmp, y, 0.5 * h, k1);
                self.eval(tmp, k2)?;
                axpy(tmp, y, 0.5 * h, k2);
                self.eval(tmp, k3)?;
                axpy(tmp, y, h, k3);
                self.eval(tmp, k4)?;
                for i in 0..y.len() {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        Ok(())
    }
}

fn axpy(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for i in 0..y.len() {
        out[i] = y[i] + a * k[i];
    }
}

/// Integrate `initial` under `model`, sampling every `sample_every` steps
/// and at the final time.
pub fn integrate(initial: &State, model: &ModelSpec, cfg: &IntegratorConfig, sample_every: usize) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    model.validate()?;
    if sample_every == 0 {
        return Err(Error::Config("sample_every must be at least 1".into()));
    }
    let d = initial.dim();
    let masses = initial.masses().to_vec();
    let mut y: Vec<f64> = match (initial, model.is_first_order()) {
        (State::First(s), true) => s.measure.positions().to_vec(),
        (State::Second(s), false) => {
            require_equal_masses(&s.masses)?;
            s.positions.iter().chain(&s.velocities).copied().collect()
        }
        _ => return Err(Error::InvalidInput("state order does not match the model".into())),
    };
    let npos = masses.len() * d;
    let sys = System { model, masses: &masses, d, exec: cfg.execution };
    let make_state = |y: &[f64], t: f64| -> Result<State> {
        Ok(match initial {
            State::First(s) => State::First(FirstOrderState { time: t, measure: s.measure.with_positions(y.to_vec())? }),
            State::Second(_) => State::Second(SecondOrderState {
                time: t,
                dim: d,
                positions: y[..npos].to_vec(),
                velocities: y[npos..].to_vec(),
                masses: masses.clone(),
            }),
        })
    };
    let closest = |y: &[f64]| -> Option<(usize, usize, f64)> { closest_pair_of(&y[..npos], d).ok() };

    let t0 = initial.time();
    let mut rec = TrajectoryRecord { times: vec![], states: vec![], min_distance: vec![], events: vec![], halted: false };
    let push = |rec: &mut TrajectoryRecord, y: &[f64], t: f64, eta: f64| -> Result<()> {
        rec.times.push(t);
        rec.states.push(make_state(y, t)?);
        rec.min_distance.push(eta);
        Ok(())
    };
    let threshold = cfg.collision_stop_threshold;
    let mut below = false;
    let mut check = |rec: &mut TrajectoryRecord, y: &[f64], t: f64| -> (f64, bool) {
        let cp = closest(y);
        let eta = cp.map_or(f64::INFINITY, |c| c.2);
        let mut stop = false;
        if threshold > 0.0 {
            if let Some((i, j, dist)) = cp {
                if dist < threshold {
                    if !below {
                        rec.events.push(CollisionEvent { time: t, i, j, dist });
                    }
                    below = true;
                    stop = !cfg.continue_after_collision;
                } else {
                    below = false;
                }
            }
        }
        (eta, stop)
    };

    let (eta0, stop0) = check(&mut rec, &y, t0);
    push(&mut rec, &y, t0, eta0)?;
    if stop0 {
        rec.halted = true;
        return Ok(rec);
    }
    let steps = cfg.steps();
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; y.len()]);
    let mut t_prev = t0;
    for n in 1..=steps {
        let t = if n == steps { t0 + cfg.t_final } else { t0 + n as f64 * cfg.dt };
        let h = t - t_prev;
        let ok = sys.step(cfg.scheme, &mut y, h, &mut work).is_ok() && check_finite(&y);
        if !ok {
            return Err(Error::Diverged { last_good_time: t_prev });
        }
        let (eta, stop) = check(&mut rec, &y, t);
        if stop {
            push(&mut rec, &y, t, eta)?;
            rec.halted = true;
            return Ok(rec);
        }
        if n % sample_every == 0 || n == steps {
            push(&mut rec, &y, t, eta)?;
        }
        t_prev = t;
    }
    Ok(rec)
}
