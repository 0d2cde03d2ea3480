//! Closed-form quantities of the stability estimates: `ξ_N`, the guaranteed
//! existence time, the growth and decay envelopes for `η` and `η_m`, the
//! propagation-of-chaos constants, and calibration of the unspecified
//! constant `C` against measured series.

use std::fmt;

use crate::error::{Error, Result};
use crate::exponent::{chaos_gamma_lower, unit_ball_volume, Exponent};
use crate::measures::{blob_lp_norm, blob_smooth, EmpiricalMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub d: usize,
    pub p: Exponent,
    pub alpha: f64,
    /// `‖ρ‖`, the time-uniform `L¹ ∩ L^p` norm of the limit density.
    pub rho_norm: f64,
    /// Calibrated constant in the differential inequalities.
    pub c_cal: f64,
}

impl TheoryParams {
    pub fn new(d: usize, p: Exponent, alpha: f64) -> Self {
        TheoryParams { d, p, alpha, rho_norm: 1.0, c_cal: 1.0 }
    }

    pub fn p_conj(&self) -> f64 {
        self.p.conjugate()
    }

    /// `d/p'`
    pub fn d_over_pconj(&self) -> f64 {
        self.d as f64 / self.p_conj()
    }

    /// `p'(1+α) < d`, needed for the singular mean-field estimates.
    pub fn check_mean_field_regime(&self) -> Result<()> {
        if self.p_conj() * (1.0 + self.alpha) < self.d as f64 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "p'(1+alpha) = {} is not below d = {}",
                self.p_conj() * (1.0 + self.alpha),
                self.d
            )))
        }
    }
}

/// `ξ_N = (η⁰)^{d/p'} (η_m⁰)^{-(1+α)}`.
pub fn xi_n(eta0: f64, eta_m0: f64, tp: &TheoryParams) -> Result<f64> {
    if !(eta0 > 0.0 && eta_m0 > 0.0) {
        return Err(Error::InvalidInput(format!("need eta0, eta_m0 > 0, got {eta0}, {eta_m0}")));
    }
    Ok(eta0.powf(tp.d_over_pconj()) * eta_m0.powf(-(1.0 + tp.alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuaranteedTime {
    pub time: f64,
    /// `false` when `ξ ≥ 1` and nothing is guaranteed.
    pub guaranteed: bool,
}

/// `-ln ξ / (2 (d/p' + 1 + α) ‖ρ‖)`.
pub fn guaranteed_time(xi: f64, tp: &TheoryParams) -> Result<GuaranteedTime> {
    if !(xi > 0.0) || !(tp.rho_norm > 0.0) {
        return Err(Error::InvalidInput("need xi > 0 and rho_norm > 0".into()));
    }
    if xi >= 1.0 {
        return Ok(GuaranteedTime { time: 0.0, guaranteed: false });
    }
    let time = -xi.ln() / (2.0 * (tp.d_over_pconj() + 1.0 + tp.alpha) * tp.rho_norm);
    Ok(GuaranteedTime { time, guaranteed: true })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub eta_upper: f64,
    pub eta_m_lower: f64,
    /// `η^{d/p'} η_m^{-(1+α)} ≤ 1` at the supplied current values.
    pub applicable: bool,
}

/// `(η⁰ e^{2C‖ρ‖t}, η_m⁰ e^{-2C‖ρ‖t})`, with the regime flag evaluated at
/// the current `(η, η_m)`.
pub fn envelope_thm31(eta0: f64, eta_m0: f64, t: f64, tp: &TheoryParams, eta_now: f64, eta_m_now: f64) -> Envelope {
    let growth = (2.0 * tp.c_cal * tp.rho_norm * t).exp();
    Envelope {
        eta_upper: eta0 * growth,
        eta_m_lower: eta_m0 / growth,
        applicable: regime_ratio(eta_now, eta_m_now, tp) <= 1.0,
    }
}

/// `η^{d/p'} η_m^{-(1+α)}`.
pub fn regime_ratio(eta: f64, eta_m: f64, tp: &TheoryParams) -> f64 {
    eta.powf(tp.d_over_pconj()) * eta_m.powf(-(1.0 + tp.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MildEnvelope {
    Value(f64),
    /// The exponent `s = d/p' - α - 1` is not positive or `α ∉ [-1, 0)`.
    NotApplicable,
    /// The bound blows up at `expiry ≤ t`.
    Expired { expiry: f64 },
}

/// Growth bound for `-1 ≤ α < 0`:
/// `η(t) ≤ ((η⁰)^{-s} e^{-kst} + e^{-kst} - 1)^{-1/s}` with `k = C‖ρ‖`.
pub fn envelope_cor33(eta0: f64, t: f64, tp: &TheoryParams) -> MildEnvelope {
    let s = tp.d_over_pconj() - tp.alpha - 1.0;
    if !(tp.alpha >= -1.0 && tp.alpha < 0.0) || s <= 0.0 {
        return MildEnvelope::NotApplicable;
    }
    let k = tp.c_cal * tp.rho_norm;
    let decay = (-k * s * t).exp();
    let inner = eta0.powf(-s) * decay + decay - 1.0;
    if inner > 0.0 {
        MildEnvelope::Value(inner.powf(-1.0 / s))
    } else {
        MildEnvelope::Expired { expiry: (eta0.powf(-s) + 1.0).ln() / (k * s) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosConstants {
    pub gamma_lo: f64,
    pub c_r: f64,
    pub l_d: f64,
    pub mindist_exponent: f64,
}

/// Constants of the propagation-of-chaos estimates for support radius `r`.
///
/// For finite `p`, `L_d = 4(4⌊√d⌋+1)^{d/p}/c_d`. At `p = ∞` the cube-count
/// argument is used directly, giving `L_d = 4(4⌊√d⌋+1)^d/c_d`.
pub fn chaos_constants(tp: &TheoryParams, r: f64) -> Result<ChaosConstants> {
    let d = tp.d;
    let gamma_lo = chaos_gamma_lower(d, tp.p, tp.alpha);
    if gamma_lo >= 1.0 {
        return Err(Error::EmptyRegime { gamma_lo });
    }
    let (c_r, l_d) = blob_constants(d, tp.p, r);
    Ok(ChaosConstants { gamma_lo, c_r, l_d, mindist_exponent: tp.p.chaos_factor() / d as f64 })
}

/// `(c_R, L_d)` of the blob-norm deviation bound; independent of `α`.
pub fn blob_constants(d: usize, p: Exponent, r: f64) -> (f64, f64) {
    let ln2 = std::f64::consts::LN_2;
    let cubes = 4.0 * ((d as f64).sqrt().floor()) + 1.0;
    let c_d = unit_ball_volume(d);
    match p {
        Exponent::Finite(p) => {
            let dp = d as f64 / p;
            (2.0 * ln2 / (2.0 * (r + 1.0)).powf(dp), 4.0 * cubes.powf(dp) / c_d)
        }
        Exponent::Infinity => (2.0 * ln2, 4.0 * cubes.powi(d as i32) / c_d),
    }
}

/// One measured sample of a convergence run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub eta: f64,
    pub eta_m: f64,
}

/// A measured sample together with its envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub t: f64,
    pub eta: f64,
    pub eta_m: f64,
    pub xi: f64,
    pub envelope_eta: f64,
    pub envelope_eta_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Eta,
    EtaM,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub t: f64,
    pub bound: Bound,
    pub measured: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    /// Violations at the supplied `C_cal`.
    pub violations: Vec<Violation>,
    /// Smallest `C_cal` for which the series is violation-free.
    pub calibrated_c: f64,
    /// First sample time where the regime flag fails, if any.
    pub regime_exit_time: Option<f64>,
    pub records: Vec<ConvergenceRecord>,
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "calibrated_c = {:.12e}", self.calibrated_c)?;
        match self.regime_exit_time {
            Some(t) => writeln!(f, "regime_exit_time = {t:.12e}")?,
            None => writeln!(f, "regime_exit_time = none")?,
        }
        write!(f, "violations = {}", self.violations.len())?;
        for v in &self.violations {
            let kind = match v.bound {
                Bound::Eta => "eta",
                Bound::EtaM => "eta_m",
            };
            write!(f, "\nviolation index={} t={:.12e} bound={kind} measured={:.12e} envelope={:.12e}", v.index, v.t, v.measured, v.envelope)?;
        }
        Ok(())
    }
}

fn violations_at(series: &[SeriesPoint], tp: &TheoryParams) -> (Vec<Violation>, Vec<ConvergenceRecord>) {
    let first = series[0];
    let xi = xi_n(first.eta.max(f64::MIN_POSITIVE), first.eta_m.max(f64::MIN_POSITIVE), tp).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    let mut recs = Vec::with_capacity(series.len());
    for (index, s) in series.iter().enumerate() {
        let env = envelope_thm31(first.eta, first.eta_m, s.t - first.t, tp, s.eta, s.eta_m);
        recs.push(ConvergenceRecord {
            t: s.t,
            eta: s.eta,
            eta_m: s.eta_m,
            xi,
            envelope_eta: env.eta_upper,
            envelope_eta_m: env.eta_m_lower,
        });
        if !env.applicable {
            continue;
        }
        if s.eta > env.eta_upper {
            out.push(Violation { index, t: s.t, bound: Bound::Eta, measured: s.eta, envelope: env.eta_upper });
        }
        if s.eta_m < env.eta_m_lower {
            out.push(Violation { index, t: s.t, bound: Bound::EtaM, measured: s.eta_m, envelope: env.eta_m_lower });
        }
    }
    (out, recs)
}

/// Flag envelope violations at `tp.c_cal` and calibrate the smallest
/// violation-free constant by bisection. Violation-freeness is monotone in
/// `C`, so the set of admissible constants is a half-line.
pub fn check_bounds_series(series: &[SeriesPoint], tp: &TheoryParams) -> Result<BoundsReport> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    if series.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::InvalidInput("series must be strictly increasing in time".into()));
    }
    let (violations, records) = violations_at(series, tp);
    let clean = |c: f64| violations_at(series, &TheoryParams { c_cal: c, ..*tp }).0.is_empty();
    let calibrated_c = if clean(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !clean(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return Ok(BoundsReport { violations, calibrated_c: f64::INFINITY, regime_exit_time: None, records });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if clean(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let regime_exit_time = series.iter().find(|s| regime_ratio(s.eta, s.eta_m, tp) > 1.0).map(|s| s.t);
    Ok(BoundsReport { violations, calibrated_c, regime_exit_time, records })
}

/// `sup_t (‖ρ_ε(t)‖₁ + ‖ρ_ε(t)‖_p)` over blob smoothings of reference samples.
/// The `L¹` norm of a blob density is its mass, 1.
pub fn reference_norm(samples: &[EmpiricalMeasure], blob_radius: f64, p: Exponent, resolution: usize) -> Result<f64> {
    let mut best = 0.0f64;
    for s in samples {
        let b = blob_smooth(s, blob_radius)?;
        best = best.max(1.0 + blob_lp_norm(&b, p, resolution)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{estimate_singularity_order, verify_kernel_assumptions, KernelSpec, SingularityProfile};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tp(d: usize, p: Exponent, alpha: f64) -> TheoryParams {
        TheoryParams::new(d, p, alpha)
    }

    #[test]
    fn xi_examples() {
        let t = tp(2, Exponent::Infinity, 0.0);
        assert_relative_eq!(xi_n(0.1, 0.1, &t).unwrap(), 0.1, epsilon = 1e-15);
        for eps in [0.3, 0.05] {
            assert_relative_eq!(xi_n(eps, eps, &t).unwrap(), eps, epsilon = 1e-15);
        }
        assert!(xi_n(0.0, 0.1, &t).is_err());
    }

    #[test]
    fn guaranteed_time_examples() {
        let t = TheoryParams { rho_norm: 1.0, ..tp(2, Exponent::Infinity, 0.0) };
        let g = guaranteed_time((-6f64).exp(), &t).unwrap();
        assert!(g.guaranteed);
        assert_relative_eq!(g.time, 1.0, epsilon = 1e-14);
        assert_eq!(guaranteed_time(1.0, &t).unwrap(), GuaranteedTime { time: 0.0, guaranteed: false });
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let xi = k as f64 / 50.0;
            let g = guaranteed_time(xi, &t).unwrap().time;
            assert!(g < prev);
            prev = g;
        }
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let t2 = TheoryParams { rho_norm: k as f64 * 0.1, ..t };
            let g = guaranteed_time(0.3, &t2).unwrap().time;
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn envelope_examples() {
        let t = tp(2, Exponent::Infinity, 0.0);
        let e = envelope_thm31(0.1, 0.2, 0.0, &t, 0.1, 0.2);
        assert_eq!((e.eta_upper, e.eta_m_lower), (0.1, 0.2));
        let e = envelope_thm31(0.1, 0.2, 2f64.ln() / 2.0, &t, 0.1, 0.2);
        assert_relative_eq!(e.eta_upper, 0.2, epsilon = 1e-15);
        assert_relative_eq!(e.eta_m_lower, 0.1, epsilon = 1e-15);
        assert!(e.applicable);
        assert!(!envelope_thm31(0.1, 0.2, 0.0, &t, 0.5, 0.01).applicable);
    }

    #[test]
    fn mild_envelope_examples() {
        // d/p' = 2, alpha = -0.5 gives s = 1.5
        let t = tp(2, Exponent::Infinity, -0.5);
        assert_eq!(envelope_cor33(0.1, 0.0, &t), MildEnvelope::Value(0.1f64.powf(-1.5).powf(-1.0 / 1.5)));
        match envelope_cor33(0.1, 0.0, &t) {
            MildEnvelope::Value(v) => assert_relative_eq!(v, 0.1, epsilon = 1e-15),
            other => panic!("{other:?}"),
        }
        let v = |e0: f64| match envelope_cor33(e0, 0.2, &t) {
            MildEnvelope::Value(v) => v,
            other => panic!("{other:?}"),
        };
        assert!(v(0.05) < v(0.1) && v(0.1) < v(0.2));
        // s = 1 and C‖ρ‖ = 1: (11 e^{-t} - 1)^{-1}
        let t1 = tp(3, Exponent::Finite(2.0), -0.5);
        assert_relative_eq!(t1.d_over_pconj() - t1.alpha - 1.0, 1.0, epsilon = 1e-15);
        for time in [0.0, 0.5, 1.0, 2.0] {
            match envelope_cor33(0.1, time, &t1) {
                MildEnvelope::Value(v) => assert_relative_eq!(v, 1.0 / (11.0 * (-time).exp() - 1.0), epsilon = 1e-12),
                other => panic!("{other:?}"),
            }
        }
        match envelope_cor33(0.1, 2.5, &t1) {
            MildEnvelope::Expired { expiry } => assert_relative_eq!(expiry, 11f64.ln(), epsilon = 1e-14),
            other => panic!("{other:?}"),
        }
        assert_eq!(envelope_cor33(0.1, 1.0, &tp(2, Exponent::Infinity, 0.2)), MildEnvelope::NotApplicable);
        assert_eq!(envelope_cor33(0.1, 1.0, &tp(1, Exponent::Finite(2.0), -0.3)), MildEnvelope::NotApplicable);
    }

    #[test]
    fn chaos_constant_examples() {
        let c = chaos_constants(&tp(3, Exponent::Infinity, 0.4), 1.0).unwrap();
        assert_relative_eq!(c.gamma_lo, 2.8 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.mindist_exponent, 2.0 / 3.0, epsilon = 1e-15);
        // approaching the alpha = 1/2 edge drives gamma_lo to 1
        let near = chaos_constants(&tp(3, Exponent::Infinity, 0.4999), 1.0).unwrap();
        assert!((near.gamma_lo - 1.0).abs() < 1e-3);
        assert!(matches!(chaos_constants(&tp(3, Exponent::Infinity, 0.5), 1.0), Err(Error::EmptyRegime { .. })));
        for d in 1..6 {
            let c = chaos_constants(&tp(d, Exponent::Infinity, -0.9), 2.0).unwrap();
            assert_relative_eq!(c.mindist_exponent, 2.0 / d as f64, epsilon = 1e-15);
        }
        let c = chaos_constants(&tp(2, Exponent::Finite(2.0), -0.9), 1.0).unwrap();
        assert_relative_eq!(c.c_r, 2f64.ln() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(c.l_d, 20.0 / PI, epsilon = 1e-14);
        assert_relative_eq!(c.c_r, 0.34657, epsilon = 1e-5);
        assert_relative_eq!(c.l_d, 6.3662, epsilon = 1e-4);
    }

    #[test]
    fn chaos_flag_matches_admissibility_bit_for_bit() {
        for d in 1..=4 {
            for p in [Exponent::Finite(1.5), Exponent::Finite(2.0), Exponent::Finite(7.0), Exponent::Infinity] {
                for k in 0..=80 {
                    let alpha = -1.0 + k as f64 * 0.05;
                    let prof = SingularityProfile { alpha, c_grad: 1.0, c_hess: 1.0, valid_radius: 1.0 };
                    let rep = verify_kernel_assumptions(&prof, d, p);
                    if !rep.admissible {
                        continue;
                    }
                    let c = chaos_constants(&tp(d, p, alpha), 1.0);
                    assert_eq!(c.is_ok(), rep.chaos_regime, "d={d} p={p} alpha={alpha}");
                    let direct = (1.0 + alpha) * p.conjugate() < d as f64 / p.chaos_factor();
                    if ((1.0 + alpha) * p.conjugate() - d as f64 / p.chaos_factor()).abs() > 1e-12 {
                        assert_eq!(direct, rep.chaos_regime);
                    }
                }
            }
        }
        let prof = estimate_singularity_order(&KernelSpec::power_law(2.0, 0.8).unwrap(), &[0.1, 0.05, 0.025, 0.0125]).unwrap();
        assert!(verify_kernel_assumptions(&prof, 3, Exponent::Infinity).chaos_regime);
    }

    fn harmonic_series(c: f64) -> Vec<SeriesPoint> {
        (0..=10)
            .map(|k| {
                let t = k as f64 * 0.1;
                SeriesPoint { t, eta: 0.05 * (-c * t).exp(), eta_m: 0.1 * (-c * t).exp() }
            })
            .collect()
    }

    #[test]
    fn harmonic_series_is_clean() {
        let t = TheoryParams { c_cal: 1.0, rho_norm: 1.0, ..tp(1, Exponent::Infinity, -1.0) };
        let rep = check_bounds_series(&harmonic_series(1.0), &t).unwrap();
        assert!(rep.violations.is_empty());
        // η_m⁰ e^{-t} ≥ η_m⁰ e^{-2Ct} exactly when C ≥ 1/2
        assert_relative_eq!(rep.calibrated_c, 0.5, epsilon = 1e-12);
        assert_eq!(rep.regime_exit_time, None);
        assert!(rep.to_string().contains("violations = 0"));
    }

    #[test]
    fn jump_is_flagged() {
        let t = TheoryParams { c_cal: 1.0, rho_norm: 1.0, ..tp(2, Exponent::Infinity, -0.5) };
        let series = vec![
            SeriesPoint { t: 0.0, eta: 0.01, eta_m: 0.1 },
            SeriesPoint { t: 0.1, eta: 0.1, eta_m: 0.1 },
        ];
        let threshold = 10f64.ln() / (2.0 * 0.1);
        for c in [1.0, 0.9 * threshold] {
            let rep = check_bounds_series(&series, &TheoryParams { c_cal: c, ..t }).unwrap();
            assert_eq!(rep.violations.len(), 1);
            assert_eq!(rep.violations[0].bound, Bound::Eta);
            assert_eq!(rep.violations[0].index, 1);
        }
        let rep = check_bounds_series(&series, &TheoryParams { c_cal: 1.01 * threshold, ..t }).unwrap();
        assert!(rep.violations.is_empty());
        assert_relative_eq!(rep.calibrated_c, threshold, epsilon = 1e-10);
    }

    #[test]
    fn calibration_matches_closed_form() {
        let t = TheoryParams { rho_norm: 1.7, ..tp(2, Exponent::Infinity, 0.0) };
        let series: Vec<SeriesPoint> = (0..8)
            .map(|k| {
                let s = k as f64 * 0.05;
                SeriesPoint { t: s, eta: 0.02 * (1.0 + 3.0 * s * s), eta_m: 0.05 / (1.0 + s) }
            })
            .collect();
        let rep = check_bounds_series(&series, &t).unwrap();
        let closed = series[1..]
            .iter()
            .map(|s| {
                let a = (s.eta / 0.02).ln() / (2.0 * 1.7 * s.t);
                let b = (0.05 / s.eta_m).ln() / (2.0 * 1.7 * s.t);
                a.max(b)
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(rep.calibrated_c, closed, max_relative = 1e-12);
        assert!(check_bounds_series(&[series[1], series[0]], &t).is_err());
    }

    #[test]
    fn reference_norm_of_point_mass() {
        let one = EmpiricalMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let n = reference_norm(&[one], 0.5, Exponent::Infinity, 8).unwrap();
        assert_relative_eq!(n, 1.0 + 1.0 / (PI * 0.25), epsilon = 1e-12);
    }
}
