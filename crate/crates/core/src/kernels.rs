//! Radial interaction potentials, their gradients and Hessian norms,
//! mollified variants and the numerical checks of the singularity
//! assumptions `|∇W| ≤ C/|x|^α`, `‖D²W‖ ≤ C/|x|^(1+α)`.
//!
//! Every potential is radial, `W(x) = w(|x|)`, so all vector quantities are
//! assembled from the radial profile: `∇W(x) = w'(r) x/r` and the Hessian has
//! eigenvalues `w''(r)` (radial) and `w'(r)/r` (tangential, multiplicity
//! `d-1`). The gradient at the origin is the zero vector for every variant.

use std::fmt;

use crate::error::{Error, Result};
use crate::exponent::{chaos_gamma_lower, Exponent};
use crate::quadrature::gauss_legendre;

/// A radial interaction potential.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `-C_A e^{-r/ℓ_A} + C_R e^{-r/ℓ_R}`.
    Morse { c_a: f64, l_a: f64, c_r: f64, l_r: f64 },
    /// `r^a/a - r^b/b` with `a > b`; a zero exponent stands for `ln r`.
    PowerLaw { a: f64, b: f64 },
    /// `k r²/2`.
    Harmonic { k: f64 },
    /// `base` on `B(0, r_cut)`; outside, the radial derivative is frozen at
    /// its value on the sphere and faded to zero over `[r_cut, 2 r_cut]` by
    /// the cubic `1 - 3s² + 2s³`.
    TruncatedTail { base: Box<KernelSpec>, r_cut: f64 },
}

/// Radial profile `(w, w', w'')` at some `r > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radial {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[inline]
fn pow(r: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == e.trunc() && e.abs() <= 8.0 {
        r.powi(e as i32)
    } else {
        r.powf(e)
    }
}

#[inline]
fn power_term(r: f64, e: f64) -> f64 {
    if e == 0.0 {
        r.ln()
    } else {
        pow(r, e) / e
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite coordinate".into()))
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl KernelSpec {
    pub fn morse(c_a: f64, l_a: f64, c_r: f64, l_r: f64) -> Result<Self> {
        check_positive("C_A", c_a)?;
        check_positive("l_A", l_a)?;
        check_positive("C_R", c_r)?;
        check_positive("l_R", l_r)?;
        Ok(KernelSpec::Morse { c_a, l_a, c_r, l_r })
    }

    pub fn power_law(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a <= b {
            return Err(Error::InvalidInput(format!("power law needs finite a > b, got a={a}, b={b}")));
        }
        Ok(KernelSpec::PowerLaw { a, b })
    }

    pub fn harmonic(k: f64) -> Result<Self> {
        check_positive("k", k)?;
        Ok(KernelSpec::Harmonic { k })
    }

    pub fn truncated(base: KernelSpec, r_cut: f64) -> Result<Self> {
        check_positive("R_cut", r_cut)?;
        Ok(KernelSpec::TruncatedTail { base: Box::new(base), r_cut })
    }

    /// Build from a name and a parameter list, as found in configuration
    /// files. A `r_cut` entry wraps the result in [`KernelSpec::TruncatedTail`].
    pub fn from_params(name: &str, params: &[(&str, f64)]) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("kernel '{name}' requires parameter '{key}'")))
        };
        let allowed: &[&str] = match name {
            "morse" => &["c_a", "l_a", "c_r", "l_r", "r_cut"],
            "power_law" => &["a", "b", "r_cut"],
            "harmonic" => &["k", "r_cut"],
            other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
        };
        for (k, _) in params {
            if !allowed.contains(k) {
                return Err(Error::Config(format!("kernel '{name}' does not take parameter '{k}'")));
            }
        }
        let base = match name {
            "morse" => KernelSpec::morse(get("c_a")?, get("l_a")?, get("c_r")?, get("l_r")?)?,
            "power_law" => KernelSpec::power_law(get("a")?, get("b")?)?,
            _ => KernelSpec::harmonic(get("k")?)?,
        };
        match params.iter().find(|(k, _)| *k == "r_cut") {
            Some((_, r)) => KernelSpec::truncated(base, *r),
            None => Ok(base),
        }
    }

    /// Radial profile at `r > 0`.
    pub fn radial(&self, r: f64) -> Radial {
        match self {
            KernelSpec::Morse { c_a, l_a, c_r, l_r } => {
                let ea = (-r / l_a).exp();
                let er = (-r / l_r).exp();
                Radial {
                    value: -c_a * ea + c_r * er,
                    d1: c_a / l_a * ea - c_r / l_r * er,
                    d2: -c_a / (l_a * l_a) * ea + c_r / (l_r * l_r) * er,
                }
            }
            KernelSpec::PowerLaw { a, b } => Radial {
                value: power_term(r, *a) - power_term(r, *b),
                d1: pow(r, a - 1.0) - pow(r, b - 1.0),
                d2: (a - 1.0) * pow(r, a - 2.0) - (b - 1.0) * pow(r, b - 2.0),
            },
            KernelSpec::Harmonic { k } => Radial { value: 0.5 * k * r * r, d1: k * r, d2: *k },
            KernelSpec::TruncatedTail { base, r_cut } => {
                if r <= *r_cut {
                    return base.radial(r);
                }
                let edge = base.radial(*r_cut);
                let s = ((r - r_cut) / r_cut).min(1.0);
                let fade = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
                let fade_int = s - s * s * s + 0.5 * s * s * s * s;
                let fade_d = if r >= 2.0 * r_cut { 0.0 } else { -6.0 * s + 6.0 * s * s };
                Radial {
                    value: edge.value + edge.d1 * r_cut * fade_int,
                    d1: edge.d1 * fade,
                    d2: edge.d1 * fade_d / r_cut,
                }
            }
        }
    }

    /// `w'(r)` alone, at `r > 0`.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            KernelSpec::PowerLaw { a, b } => pow(r, a - 1.0) - pow(r, b - 1.0),
            KernelSpec::Harmonic { k } => k * r,
            KernelSpec::TruncatedTail { base, r_cut } if r <= *r_cut => base.derivative(r),
            _ => self.radial(r).d1,
        }
    }

    /// `w'(r)/r`, the factor multiplying `x` in `∇W(x)`; zero at `r = 0`.
    #[inline]
    pub fn force_factor(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::PowerLaw { a, b } => pow(r, a - 2.0) - pow(r, b - 2.0),
            KernelSpec::Harmonic { k } => *k,
            _ => self.radial(r).d1 / r,
        }
    }

    /// [`KernelSpec::force_factor`] as a function of `r²`.
    #[inline]
    pub fn force_factor_sq(&self, r2: f64) -> f64 {
        if r2 == 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::PowerLaw { a, b } => pow(r2, 0.5 * (a - 2.0)) - pow(r2, 0.5 * (b - 2.0)),
            KernelSpec::Harmonic { k } => *k,
            _ => self.force_factor(r2.sqrt()),
        }
    }

    /// `W(0)`: the limit where it exists, 0 by convention otherwise.
    pub fn value_at_origin(&self) -> f64 {
        match self {
            KernelSpec::Morse { c_a, c_r, .. } => c_r - c_a,
            KernelSpec::PowerLaw { .. } | KernelSpec::Harmonic { .. } => 0.0,
            KernelSpec::TruncatedTail { base, .. } => base.value_at_origin(),
        }
    }

    /// Singularity order read off the closed form: the smallest `α ≥ -1`
    /// with `|∇W(x)| ≲ |x|^{-α}` near the origin.
    pub fn declared_alpha(&self) -> f64 {
        match self {
            KernelSpec::Morse { c_a, l_a, c_r, l_r } => {
                if c_a / l_a == c_r / l_r {
                    -1.0
                } else {
                    0.0
                }
            }
            KernelSpec::PowerLaw { b, .. } => (1.0 - b).max(-1.0),
            KernelSpec::Harmonic { .. } => -1.0,
            KernelSpec::TruncatedTail { base, .. } => base.declared_alpha(),
        }
    }

    /// Largest `r` on which the profile coincides with the untruncated one.
    pub fn untruncated_radius(&self) -> f64 {
        match self {
            KernelSpec::TruncatedTail { r_cut, .. } => *r_cut,
            _ => f64::INFINITY,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Morse { c_a, l_a, c_r, l_r } => {
                write!(f, "morse(c_a={c_a},l_a={l_a},c_r={c_r},l_r={l_r})")
            }
            KernelSpec::PowerLaw { a, b } => write!(f, "power_law(a={a},b={b})"),
            KernelSpec::Harmonic { k } => write!(f, "harmonic(k={k})"),
            KernelSpec::TruncatedTail { base, r_cut } => write!(f, "truncated({base},r_cut={r_cut})"),
        }
    }
}

/// `W(x)`; singular variants return the convention value 0 at the origin.
pub fn eval_potential(k: &KernelSpec, x: &[f64]) -> Result<f64> {
    check_finite(x)?;
    let r = norm(x);
    if r == 0.0 {
        return Ok(k.value_at_origin());
    }
    Ok(k.radial(r).value)
}

/// `∇W(x)`, the zero vector at the origin.
pub fn eval_gradient(k: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    let f = k.force_factor(norm(x));
    Ok(x.iter().map(|v| f * v).collect())
}

/// Operator norm of `D²W(x)` from the radial eigenvalues `w''` and `w'/r`.
pub fn eval_hessian_norm(k: &KernelSpec, x: &[f64]) -> Result<f64> {
    check_finite(x)?;
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let rad = k.radial(r);
    if x.len() == 1 {
        Ok(rad.d2.abs())
    } else {
        Ok(rad.d2.abs().max((rad.d1 / r).abs()))
    }
}

/// Measured constants of the singularity assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityProfile {
    pub alpha: f64,
    pub c_grad: f64,
    pub c_hess: f64,
    pub valid_radius: f64,
}

/// Fit `α` as the negated least-squares slope of `ln|∇W|` against `ln r`,
/// then take `C_grad`, `C_hess` as the worst observed ratios. The Hessian
/// norm uses both radial eigenvalues, i.e. the `d ≥ 2` operator norm.
pub fn estimate_singularity_order(k: &KernelSpec, radii: &[f64]) -> Result<SingularityProfile> {
    if radii.len() < 4 {
        return Err(Error::InvalidInput("need at least 4 radii".into()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("radii must be positive and strictly decreasing".into()));
    }
    let grads: Vec<f64> = radii.iter().map(|&r| k.radial(r).d1.abs()).collect();
    if grads.iter().all(|g| *g == 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&grads)
        .filter(|(_, g)| **g > 0.0)
        .map(|(r, g)| (r.ln(), g.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateKernel);
    }
    let alpha = -least_squares_slope(&pts);
    let mut c_grad = 0.0f64;
    let mut c_hess = 0.0f64;
    for (&r, &g) in radii.iter().zip(&grads) {
        let rad = k.radial(r);
        let h = rad.d2.abs().max((rad.d1 / r).abs());
        c_grad = c_grad.max(g * r.powf(alpha));
        c_hess = c_hess.max(h * r.powf(1.0 + alpha));
    }
    Ok(SingularityProfile { alpha, c_grad, c_hess, valid_radius: radii[0] })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Regime classification of a kernel for given `(d, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub alpha: f64,
    pub c_grad: f64,
    pub c_hess: f64,
    pub d: usize,
    pub p: Exponent,
    pub admissible: bool,
    /// `0 ≤ α < d/p' - 1`
    pub theorem_regime: bool,
    /// `-1 ≤ α < 0`
    pub corollary_regime: bool,
    /// `(1+α)p' < d(p-1)/(2p-1)`
    pub chaos_regime: bool,
    /// `(d/p' - 1) - α`
    pub theorem_margin: f64,
    /// `min(α + 1, -α)`
    pub corollary_margin: f64,
    /// `1 - γ_lo`
    pub chaos_margin: f64,
}

impl AdmissibilityReport {
    pub fn regimes(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.theorem_regime {
            v.push("mean_field_singular");
        }
        if self.corollary_regime {
            v.push("mean_field_mild");
        }
        if self.chaos_regime {
            v.push("chaos");
        }
        if v.is_empty() {
            v.push("inadmissible");
        }
        v
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[admissibility]")?;
        writeln!(f, "alpha = {:.12e}", self.alpha)?;
        writeln!(f, "C_grad = {:.12e}", self.c_grad)?;
        writeln!(f, "C_hess = {:.12e}", self.c_hess)?;
        writeln!(f, "d = {}", self.d)?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "admissible = {}", self.admissible)?;
        writeln!(f, "regimes = {}", self.regimes().join(","))?;
        writeln!(f, "margin_mean_field_singular = {:.12e}", self.theorem_margin)?;
        writeln!(f, "margin_mean_field_mild = {:.12e}", self.corollary_margin)?;
        write!(f, "margin_chaos = {:.12e}", self.chaos_margin)
    }
}

pub fn verify_kernel_assumptions(prof: &SingularityProfile, d: usize, p: Exponent) -> AdmissibilityReport {
    let alpha = prof.alpha;
    let admissible = d >= 1 && alpha >= -1.0 && alpha < d as f64 - 1.0;
    let theorem_margin = d as f64 / p.conjugate() - 1.0 - alpha;
    let corollary_margin = (alpha + 1.0).min(-alpha);
    let gamma_lo = chaos_gamma_lower(d, p, alpha);
    AdmissibilityReport {
        alpha,
        c_grad: prof.c_grad,
        c_hess: prof.c_hess,
        d,
        p,
        admissible,
        theorem_regime: admissible && alpha >= 0.0 && theorem_margin > 0.0,
        corollary_regime: admissible && alpha < 0.0,
        chaos_regime: admissible && gamma_lo < 1.0,
        theorem_margin,
        corollary_margin,
        chaos_margin: 1.0 - gamma_lo,
    }
}

/// `θ(y) ∝ exp(-1/(1-|y|²))` on the unit ball.
fn bump(y2: f64) -> f64 {
    if y2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y2)).exp()
    }
}

/// Tensor Gauss–Legendre rule for convolution against the mollifier on
/// `B(0, 1)`, stored as mirrored node pairs so odd integrands cancel exactly.
#[derive(Debug, Clone)]
pub struct MollifierRule {
    dim: usize,
    /// Offsets `y` (unit ball) of one node per mirrored pair.
    pairs: Vec<f64>,
    pair_weights: Vec<f64>,
    center_weight: f64,
}

impl MollifierRule {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::Config("quadrature order must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let (x, w) = gauss_legendre(order);
        let total = order.pow(dim as u32);
        let mut pairs = Vec::new();
        let mut pair_weights = Vec::new();
        let mut center_weight = 0.0;
        let mut mass = 0.0;
        let mut idx = vec![0usize; dim];
        for flat in 0..total {
            let mut rem = flat;
            for slot in idx.iter_mut() {
                *slot = rem % order;
                rem /= order;
            }
            let mirror: usize = idx
                .iter()
                .rev()
                .fold(0, |acc, &i| acc * order + (order - 1 - i));
            let y2: f64 = idx.iter().map(|&i| x[i] * x[i]).sum();
            let wq: f64 = idx.iter().map(|&i| w[i]).product::<f64>() * bump(y2);
            if wq == 0.0 {
                continue;
            }
            match flat.cmp(&mirror) {
                std::cmp::Ordering::Less => {
                    pairs.extend(idx.iter().map(|&i| x[i]));
                    pair_weights.push(wq);
                    mass += 2.0 * wq;
                }
                std::cmp::Ordering::Equal => {
                    center_weight = wq;
                    mass += wq;
                }
                std::cmp::Ordering::Greater => {}
            }
        }
        for w in pair_weights.iter_mut() {
            *w /= mass;
        }
        center_weight /= mass;
        Ok(MollifierRule { dim, pairs, pair_weights, center_weight })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(g * θ_ε)(x)` for an odd vector field `g(v) = f(|v|) v`, where `f`
    /// is given as `factor`.
    pub fn convolve_radial_field<F: Fn(f64) -> f64>(&self, factor: F, eps: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut minus = vec![0.0; d];
        let mut plus = vec![0.0; d];
        for (q, &w) in self.pair_weights.iter().enumerate() {
            let y = &self.pairs[q * d..(q + 1) * d];
            for k in 0..d {
                minus[k] = x[k] - eps * y[k];
                plus[k] = x[k] + eps * y[k];
            }
            let fm = factor(norm(&minus));
            let fp = factor(norm(&plus));
            for k in 0..d {
                out[k] += w * (fm * minus[k] + fp * plus[k]);
            }
        }
        if self.center_weight > 0.0 {
            let f0 = factor(norm(x));
            for k in 0..d {
                out[k] += self.center_weight * f0 * x[k];
            }
        }
    }
}

/// `W` mollified at scale `epsilon`: `∇W_ε = ∇W * θ_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedKernel {
    pub base: KernelSpec,
    pub epsilon: f64,
    pub quadrature_order: usize,
}

impl MollifiedKernel {
    pub fn new(base: KernelSpec, epsilon: f64, quadrature_order: usize) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        if quadrature_order < 1 {
            return Err(Error::Config("quadrature order must be at least 1".into()));
        }
        Ok(MollifiedKernel { base, epsilon, quadrature_order })
    }
}

/// `(∇W * θ_ε)(x)` by tensor Gauss–Legendre quadrature over `B(0, ε)`.
pub fn mollify_gradient(m: &MollifiedKernel, x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    if !(m.epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let rule = MollifierRule::new(x.len(), m.quadrature_order)?;
    let mut out = vec![0.0; x.len()];
    rule.convolve_radial_field(|r| m.base.force_factor(r), m.epsilon, x, &mut out);
    Ok(out)
}

/// Radial table of a mollified gradient, for use inside force loops.
///
/// The mollified profile `g_ε(r)` is tabulated on `[0, 4ε]`; beyond that the
/// table holds the correction `g_ε - g`, which decays like `(ε/r)²`, and the
/// exact base derivative is added back. Outside the table the quadrature is
/// evaluated directly.
#[derive(Debug, Clone)]
pub struct MollifiedProfile {
    kernel: MollifiedKernel,
    rule: MollifierRule,
    inner_step: f64,
    inner: Vec<f64>,
    outer_start: f64,
    outer_step: f64,
    outer: Vec<f64>,
}

const INNER_POINTS: usize = 512;
const OUTER_POINTS: usize = 4096;

impl MollifiedProfile {
    pub fn new(kernel: MollifiedKernel, dim: usize, r_max: f64) -> Result<Self> {
        let rule = MollifierRule::new(dim, kernel.quadrature_order)?;
        let eps = kernel.epsilon;
        let inner_end = 4.0 * eps;
        let r_max = r_max.max(2.0 * inner_end);
        let direct = |r: f64| -> f64 {
            let mut x = vec![0.0; dim];
            x[0] = r;
            let mut out = vec![0.0; dim];
            rule.convolve_radial_field(|s| kernel.base.force_factor(s), eps, &x, &mut out);
            out[0]
        };
        let inner_step = inner_end / INNER_POINTS as f64;
        let inner: Vec<f64> = (0..=INNER_POINTS + 1).map(|i| direct(i as f64 * inner_step)).collect();
        let outer_step = (r_max - inner_end) / OUTER_POINTS as f64;
        let outer: Vec<f64> = (0..=OUTER_POINTS + 2)
            .map(|i| {
                let r = inner_end + (i as f64 - 1.0) * outer_step;
                direct(r) - kernel.base.derivative(r)
            })
            .collect();
        Ok(MollifiedProfile {
            kernel,
            rule,
            inner_step,
            inner,
            outer_start: inner_end,
            outer_step,
            outer,
        })
    }

    pub fn kernel(&self) -> &MollifiedKernel {
        &self.kernel
    }

    /// Mollified radial derivative `g_ε(r)`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        if r < self.outer_start {
            let s = r / self.inner_step;
            let i = s.floor() as usize;
            let t = s - i as f64;
            let at = |j: isize| -> f64 {
                if j < 0 {
                    -self.inner[(-j) as usize]
                } else {
                    self.inner[j as usize]
                }
            };
            let i = i as isize;
            catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t)
        } else {
            let s = (r - self.outer_start) / self.outer_step;
            let i = s.floor() as usize;
            if i + 3 >= self.outer.len() {
                let mut x = vec![0.0; self.rule.dim()];
                x[0] = r;
                let mut out = vec![0.0; self.rule.dim()];
                self.rule
                    .convolve_radial_field(|q| self.kernel.base.force_factor(q), self.kernel.epsilon, &x, &mut out);
                return out[0];
            }
            let t = s - i as f64;
            // outer[k] sits at outer_start + (k - 1) * step
            let o = &self.outer;
            catmull_rom(o[i], o[i + 1], o[i + 2], o[i + 3], t) + self.kernel.base.derivative(r)
        }
    }

    /// `g_ε(r)/r`, zero at `r = 0`.
    #[inline]
    pub fn force_factor(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            self.radial_derivative(r) / r
        }
    }
}

#[inline]
fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1 + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

/// Pair interaction used by the force loops: either the closed-form kernel or
/// a tabulated mollification of it.
#[derive(Debug, Clone)]
pub enum PairKernel {
    Exact(KernelSpec),
    Mollified(Box<MollifiedProfile>),
}

impl PairKernel {
    #[inline]
    pub fn force_factor(&self, r: f64) -> f64 {
        match self {
            PairKernel::Exact(k) => k.force_factor(r),
            PairKernel::Mollified(m) => m.force_factor(r),
        }
    }

    #[inline]
    pub fn force_factor_sq(&self, r2: f64) -> f64 {
        match self {
            PairKernel::Exact(k) => k.force_factor_sq(r2),
            PairKernel::Mollified(m) => m.force_factor(r2.sqrt()),
        }
    }

    pub fn base(&self) -> &KernelSpec {
        match self {
            PairKernel::Exact(k) => k,
            PairKernel::Mollified(m) => &m.kernel().base,
        }
    }
}

impl From<KernelSpec> for PairKernel {
    fn from(k: KernelSpec) -> Self {
        PairKernel::Exact(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn morse() -> KernelSpec {
        KernelSpec::morse(1.0, 1.0, 2.0, 0.5).unwrap()
    }

    fn all_kernels() -> Vec<KernelSpec> {
        vec![
            morse(),
            KernelSpec::power_law(2.0, 1.0).unwrap(),
            KernelSpec::power_law(2.0, 0.5).unwrap(),
            KernelSpec::power_law(1.5, 0.8).unwrap(),
            KernelSpec::harmonic(1.0).unwrap(),
            KernelSpec::truncated(KernelSpec::power_law(2.0, 1.0).unwrap(), 2.0).unwrap(),
            KernelSpec::truncated(morse(), 1.5).unwrap(),
        ]
    }

    #[test]
    fn potential_examples() {
        assert_relative_eq!(eval_potential(&morse(), &[0.0, 0.0]).unwrap(), 1.0);
        let pl = KernelSpec::power_law(2.0, 1.0).unwrap();
        assert_relative_eq!(eval_potential(&pl, &[1.0, 0.0]).unwrap(), -0.5);
        let h = KernelSpec::harmonic(1.0).unwrap();
        assert_relative_eq!(eval_potential(&h, &[3.0, 4.0]).unwrap(), 12.5);
        assert!(eval_potential(&h, &[f64::NAN]).is_err());
        // logarithmic convention at b = 0
        let log = KernelSpec::power_law(2.0, 0.0).unwrap();
        assert_relative_eq!(eval_potential(&log, &[2.0]).unwrap(), 2.0 - 2f64.ln(), epsilon = 1e-15);
        assert_eq!(eval_potential(&log, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let pl = KernelSpec::power_law(2.0, 1.0).unwrap();
        let g = eval_gradient(&pl, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(g[0], 2.4, epsilon = 1e-14);
        assert_relative_eq!(g[1], 3.2, epsilon = 1e-14);

        let g = eval_gradient(&morse(), &[1.0, 0.0]).unwrap();
        let closed = (-1f64).exp() - 4.0 * (-2f64).exp();
        assert_relative_eq!(g[0], closed, epsilon = 1e-15);
        assert_relative_eq!(g[0], -0.173462, epsilon = 1e-6);
        let h = 1e-6;
        let fd = (eval_potential(&morse(), &[1.0 + h, 0.0]).unwrap() - eval_potential(&morse(), &[1.0 - h, 0.0]).unwrap()) / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-8);
        assert_eq!(g[1], 0.0);

        for k in all_kernels() {
            assert_eq!(eval_gradient(&k, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        }
        assert!(eval_gradient(&pl, &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn hessian_examples() {
        let h = KernelSpec::harmonic(1.0).unwrap();
        assert_relative_eq!(eval_hessian_norm(&h, &[0.3, -2.0]).unwrap(), 1.0);
        let pl = KernelSpec::power_law(2.0, 1.0).unwrap();
        assert_relative_eq!(eval_hessian_norm(&pl, &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(eval_hessian_norm(&pl, &[0.0, 0.0]), Err(Error::SingularPoint));
    }

    fn fd_hessian_norm_2d(k: &KernelSpec, x: [f64; 2]) -> f64 {
        let h = 1e-5 * (x[0].hypot(x[1]));
        let g = |p: [f64; 2]| eval_gradient(k, &p).unwrap();
        let mut m = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm) = (g(xp), g(xm));
            for i in 0..2 {
                m[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // symmetric 2x2 eigenvalues
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).abs().max((tr / 2.0 - disc).abs())
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = crate::rng::rng_from_seed(3);
        for k in all_kernels() {
            for _ in 0..50 {
                let r: f64 = rng.gen_range(0.05..3.0);
                let th: f64 = rng.gen_range(0.0..6.28);
                let x = [r * th.cos(), r * th.sin()];
                if let KernelSpec::TruncatedTail { r_cut, .. } = &k {
                    if (r - r_cut).abs() < 1e-3 {
                        continue;
                    }
                }
                let exact = eval_hessian_norm(&k, &x).unwrap();
                let fd = fd_hessian_norm_2d(&k, x);
                assert!((exact - fd).abs() <= 1e-5 * (1.0 + exact), "{k} r={r}: {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn hessian_blowup_slope() {
        let k = KernelSpec::power_law(2.0, 0.5).unwrap();
        let pts: Vec<(f64, f64)> = (4..=12)
            .map(|j| {
                let r = 2f64.powi(-j);
                (r.ln(), eval_hessian_norm(&k, &[r, 0.0]).unwrap().ln())
            })
            .collect();
        let slope = least_squares_slope(&pts);
        assert!((slope + 1.5).abs() < 1e-2, "slope {slope}");
    }

    #[test]
    fn gradient_consistency_and_oddness() {
        let mut rng = crate::rng::rng_from_seed(11);
        for k in all_kernels() {
            for _ in 0..1000 {
                let d = rng.gen_range(1..=3);
                let r = 10f64.powf(rng.gen_range(-3.0..1.0));
                let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = norm(&x).max(1e-300);
                x.iter_mut().for_each(|v| *v *= r / n);
                let g = eval_gradient(&k, &x).unwrap();
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let gn = eval_gradient(&k, &neg).unwrap();
                for i in 0..d {
                    assert_eq!(gn[i], -g[i]);
                }
                let h = 1e-6 * r;
                let gmag = norm(&g);
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (eval_potential(&k, &xp).unwrap() - eval_potential(&k, &xm).unwrap()) / (2.0 * h);
                    let err = (fd - g[i]).abs();
                    // relative to |∇W|, floored where the gradient passes through zero
                    assert!(err <= 1e-5 * gmag.max(1e-2), "{k} x={x:?} fd={fd} g={}", g[i]);
                }
            }
        }
    }

    #[test]
    fn squared_factor_agrees() {
        for k in all_kernels() {
            for r in [1e-3, 0.1, 0.7, 1.3, 2.9] {
                let (a, b) = (k.force_factor(r), k.force_factor_sq(r * r));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{k} r={r}");
            }
            assert_eq!(k.force_factor_sq(0.0), 0.0);
        }
    }

    #[test]
    fn truncated_tail_matches_inside_and_fades() {
        let base = KernelSpec::power_law(2.0, 1.0).unwrap();
        let t = KernelSpec::truncated(base.clone(), 1.0).unwrap();
        for r in [0.1, 0.5, 0.99, 1.0] {
            assert_eq!(t.radial(r), base.radial(r));
        }
        assert_eq!(t.radial(2.5).d1, 0.0);
        let below = t.radial(1.0 - 1e-9).d1;
        let above = t.radial(1.0 + 1e-9).d1;
        assert!((below - above).abs() < 1e-8);
        assert!(t.radial(1.5).d1.abs() < base.radial(1.0).d1.abs() + 1e-15);
    }

    #[test]
    fn singularity_order_examples() {
        let radii = |lo: i32, hi: i32| -> Vec<f64> { (lo..=hi).map(|j| 2f64.powi(-j)).collect() };
        let p = estimate_singularity_order(&KernelSpec::power_law(2.0, 1.0).unwrap(), &radii(8, 16)).unwrap();
        assert!(p.alpha.abs() < 1e-2, "alpha {}", p.alpha);
        let p = estimate_singularity_order(&KernelSpec::power_law(2.0, 0.5).unwrap(), &radii(4, 12)).unwrap();
        assert!((p.alpha - 0.5).abs() < 1e-2, "alpha {}", p.alpha);
        let p = estimate_singularity_order(&morse(), &radii(8, 16)).unwrap();
        assert!(p.alpha.abs() < 1e-2, "alpha {}", p.alpha);
        assert!(p.c_grad < 3.5 && p.c_grad > 2.5);
        let p = estimate_singularity_order(&KernelSpec::harmonic(1.0).unwrap(), &radii(4, 12)).unwrap();
        assert_relative_eq!(p.alpha, -1.0, epsilon = 1e-12);

        for k in [KernelSpec::power_law(2.0, 1.0).unwrap(), KernelSpec::power_law(2.0, 0.8).unwrap(), KernelSpec::power_law(3.0, 1.5).unwrap(), morse()] {
            let est = estimate_singularity_order(&k, &radii(8, 16)).unwrap().alpha;
            assert!((est - k.declared_alpha()).abs() < 1e-2, "{k}: {est}");
        }
        assert!(estimate_singularity_order(&morse(), &[1.0, 0.5, 0.25]).is_err());
        assert!(estimate_singularity_order(&morse(), &[0.25, 0.5, 1.0, 2.0]).is_err());
        // Morse with balanced strengths has w'(0) = 0 but is not identically flat;
        // a truncated kernel sampled beyond 2 R_cut is.
        let flat = KernelSpec::truncated(KernelSpec::harmonic(1.0).unwrap(), 0.1).unwrap();
        assert_eq!(estimate_singularity_order(&flat, &[4.0, 3.0, 2.0, 1.0]), Err(Error::DegenerateKernel));
    }

    #[test]
    fn assumption_bound_is_scale_free() {
        for b in [0.2, 0.5, 0.8] {
            let k = KernelSpec::power_law(2.0, b).unwrap();
            let alpha = 1.0 - b;
            let ratio = |lo: f64| -> f64 {
                (0..50)
                    .map(|i| {
                        let r = lo * 10f64.powf(i as f64 / 50.0);
                        k.radial(r).d1.abs() * r.powf(alpha)
                    })
                    .fold(0.0, f64::max)
            };
            let (a, c) = (ratio(1e-3), ratio(1e-1));
            assert!(a.max(c) / a.min(c) <= 10.0);
        }
    }

    #[test]
    fn key_inequality() {
        let mut rng = crate::rng::rng_from_seed(5);
        for k in [KernelSpec::power_law(2.0, 1.0).unwrap(), KernelSpec::power_law(2.0, 0.5).unwrap(), morse()] {
            let radii: Vec<f64> = (0..=12).map(|j| 2f64.powi(-j)).collect();
            let prof = estimate_singularity_order(&k, &radii).unwrap();
            for _ in 0..1000 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let (nx, ny) = (norm(&x), norm(&y));
                if nx.min(ny) < 1e-2 || nx.max(ny) > 1.0 {
                    continue;
                }
                let gx = eval_gradient(&k, &x).unwrap();
                let gy = eval_gradient(&k, &y).unwrap();
                let lhs = ((gx[0] - gy[0]).powi(2) + (gx[1] - gy[1]).powi(2)).sqrt();
                let dxy = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                let rhs = 2.0 * prof.c_hess * dxy / nx.min(ny).powf(1.0 + prof.alpha);
                assert!(lhs <= rhs * (1.0 + 1e-12), "{k}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn admissibility_examples() {
        let prof = |alpha| SingularityProfile { alpha, c_grad: 1.0, c_hess: 1.0, valid_radius: 1.0 };
        let r = verify_kernel_assumptions(&prof(0.5), 2, Exponent::Infinity);
        assert!(r.theorem_regime && !r.chaos_regime && !r.corollary_regime);
        let r = verify_kernel_assumptions(&prof(0.4), 3, Exponent::Infinity);
        assert!(r.chaos_regime);
        let r = verify_kernel_assumptions(&prof(0.5), 3, Exponent::Infinity);
        assert!(!r.chaos_regime);
        let r = verify_kernel_assumptions(&prof(1.0), 2, Exponent::Infinity);
        assert!(!r.admissible && r.regimes() == vec!["inadmissible"]);
        let r = verify_kernel_assumptions(&prof(-0.5), 2, Exponent::Finite(2.0));
        assert!(r.corollary_regime && !r.theorem_regime);
        let text = r.to_string();
        for key in ["alpha =", "C_grad =", "C_hess =", "regimes =", "margin_chaos ="] {
            assert!(text.contains(key));
        }
    }

    #[test]
    fn mollifier_examples() {
        let h = MollifiedKernel::new(KernelSpec::harmonic(1.0).unwrap(), 0.3, 8).unwrap();
        let g = mollify_gradient(&h, &[1.0, 0.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-14 && g[1].abs() < 1e-14);
        for k in all_kernels() {
            for d in 1..=3 {
                let m = MollifiedKernel::new(k.clone(), 0.1, 8).unwrap();
                assert_eq!(mollify_gradient(&m, &vec![0.0; d]).unwrap(), vec![0.0; d]);
            }
        }
        let bad = MollifiedKernel { base: KernelSpec::harmonic(1.0).unwrap(), epsilon: 0.1, quadrature_order: 0 };
        assert!(matches!(mollify_gradient(&bad, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn mollifier_error_ratio_stable() {
        let base = KernelSpec::power_law(2.0, 1.0).unwrap();
        let mut maxima = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let m = MollifiedKernel::new(base.clone(), eps, 8).unwrap();
            let mut worst = 0.0f64;
            for i in 0..200 {
                let r = 2.0 * eps * (1.0 / (2.0 * eps)).powf(i as f64 / 199.0);
                let x = [r * 0.6, r * 0.8];
                let gm = mollify_gradient(&m, &x).unwrap();
                let g = eval_gradient(&base, &x).unwrap();
                let diff = ((gm[0] - g[0]).powi(2) + (gm[1] - g[1]).powi(2)).sqrt();
                worst = worst.max(diff * r / eps);
            }
            maxima.push(worst);
        }
        let hi = maxima.iter().cloned().fold(0.0, f64::max);
        let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi.is_finite() && hi / lo <= 2.0, "{maxima:?}");
    }

    #[test]
    fn profile_table_matches_direct_quadrature() {
        for (k, dim) in [
            (KernelSpec::power_law(2.0, 1.0).unwrap(), 2),
            (KernelSpec::power_law(2.0, 0.8).unwrap(), 3),
            (morse(), 1),
        ] {
            let m = MollifiedKernel::new(k, 0.05, 12).unwrap();
            let prof = MollifiedProfile::new(m.clone(), dim, 3.0).unwrap();
            for i in 1..300 {
                let r = i as f64 * 0.0123;
                let mut x = vec![0.0; dim];
                x[0] = r;
                let direct = mollify_gradient(&m, &x).unwrap()[0];
                let tab = prof.radial_derivative(r);
                assert!((direct - tab).abs() < 1e-5 * (1.0 + direct.abs()), "r={r}: {direct} vs {tab}");
            }
            assert_eq!(prof.force_factor(0.0), 0.0);
            // beyond the table: direct evaluation
            let mut x = vec![0.0; dim];
            x[0] = 50.0;
            assert_relative_eq!(prof.radial_derivative(50.0), mollify_gradient(&m, &x).unwrap()[0], epsilon = 1e-12);
        }
    }
}
