//! Stability of the medium-plus-cavity loop.
//!
//! The closed loop 1/(1 − r_s G_o) is unstable when 1 − r_s G_o has a zero
//! in the upper half of the complex Ω plane (time dependence e^{−iΩt}).
//! Both poles of G_o sit at Ω = ±Δ₀ − i(γ₁₂ − Γ_opt), below the real axis
//! whenever the medium alone is stable, so the zero count equals the
//! number of counter-clockwise turns of r_s G_o(Ω) about 1 + 0i as Ω runs
//! along the real axis from −∞ to +∞ and back over the upper arc.
//!
//! On that arc the delay factor e^{2iΩτ} decays and G_o → 0, so the
//! contour is closed through the origin. [`root_count_oracle`] counts the
//! same zeros independently by integrating the logarithmic derivative of
//! 1 − r_s G_o around a rectangle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{self, IfoParams};
use crate::medium::{self, MediumClass, MediumParams};
use crate::numerics::{self, RefineOptions};

const CRITICAL: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityClass {
    Stable,
    AtomicInstability,
    OpticalInstability,
    NonStationary,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::AtomicInstability => "atomic_instability",
            StabilityClass::OpticalInstability => "optical_instability",
            StabilityClass::NonStationary => "non_stationary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    /// Non-stationarity threshold factor on Γ_opt²/4.
    pub margin: f64,
    /// Ω_max as a multiple of max(Δ₀, γ₁₂, Γ_opt, 1/τ).
    pub omega_max_mult: f64,
    /// Minimum number of uniform real-axis samples.
    pub base_samples: usize,
    /// Contours closer than this to 1 + 0i are an error.
    pub marginal_tolerance: f64,
    /// Contours closer than this to 1 + 0i are flagged as marginal.
    pub flag_distance: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            margin: 1.0,
            omega_max_mult: 50.0,
            base_samples: 2048,
            marginal_tolerance: 1e-9,
            flag_distance: 1e-6,
        }
    }
}

/// Smallest accepted Ω_max multiple.
pub const MIN_OMEGA_MAX_MULT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub classification: StabilityClass,
    /// Counter-clockwise turns of r_s G_o about 1 + 0i (0 when no contour was traced).
    pub winding: i64,
    /// Closest approach of the contour to 1 + 0i.
    pub min_distance_to_critical: Option<f64>,
    /// Real-axis interval covered by the contour.
    pub omega_range_used: Option<(f64, f64)>,
    /// Set when the contour came within `flag_distance` of 1 + 0i.
    pub marginal: bool,
}

impl StabilityReport {
    fn medium_only(classification: StabilityClass) -> Self {
        Self { classification, winding: 0, min_distance_to_critical: None, omega_range_used: None, marginal: false }
    }

    pub fn is_stable(&self) -> bool {
        self.classification == StabilityClass::Stable
    }
}

/// Samples of r_s G_o(Ω) along the real axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NyquistContour {
    pub omegas: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl NyquistContour {
    /// Real-axis samples followed by the closure through the origin.
    pub fn closed_curve(&self) -> Vec<Complex64> {
        let mut pts = self.values.clone();
        pts.push(Complex64::new(0.0, 0.0));
        pts
    }

    pub fn min_distance_to_critical(&self) -> f64 {
        let pts = self.closed_curve();
        let n = pts.len();
        (0..n)
            .map(|i| numerics::segment_distance(pts[i], pts[(i + 1) % n], CRITICAL))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Characteristic frequency scale max(Δ₀, γ₁₂, Γ_opt, 1/τ).
pub fn frequency_scale(ifo: &IfoParams, med: &MediumParams) -> f64 {
    med.max_rate().max(1.0 / ifo.tau())
}

/// Upper bound on |M(Ω)| for |Re Ω| ≥ `omega`, Im Ω ≥ 0.
fn transfer_bound_beyond(med: &MediumParams, omega: f64) -> f64 {
    let gap = omega - med.delta0;
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    1.0 + 2.0 * med.gamma_opt_total / gap
}

/// Ω_max such that r_s |G_o| < 1 everywhere beyond it, so the tail of the
/// contour cannot encircle 1 + 0i.
pub fn tail_safe_omega_max(ifo: &IfoParams, med: &MediumParams, mult: f64) -> Result<f64> {
    let r = ifo.srm_amplitude_reflectivity;
    let mut omega_max = mult * frequency_scale(ifo, med);
    for _ in 0..200 {
        if r * transfer_bound_beyond(med, omega_max) < 1.0 {
            return Ok(omega_max);
        }
        omega_max *= 2.0;
    }
    Err(Error::Precondition("could not bound the Nyquist contour tail".into()))
}

fn base_grid(med: &MediumParams, tau: f64, omega_max: f64, base_samples: usize) -> Vec<f64> {
    // Uniform part: delay phase advances at most π/8 per step.
    let n_delay = (2.0 * omega_max * tau * 16.0 / PI).ceil() as usize;
    let n = base_samples.max(n_delay).max(16);
    let mut grid: Vec<f64> = (0..=n).map(|k| -omega_max + 2.0 * omega_max * k as f64 / n as f64).collect();

    // Resolve the gain peaks at ±Δ₀ (width g) and the white-light band at 0.
    let g = med.net_damping().abs().max(1e-9 * frequency_scale_of(med, tau));
    for centre in [-med.delta0, 0.0, med.delta0] {
        for k in -80..=80 {
            grid.push(centre + g * k as f64 / 8.0);
        }
        let mut off = 10.0 * g;
        while off < omega_max {
            grid.push(centre + off);
            grid.push(centre - off);
            off *= 1.25;
        }
    }
    grid.retain(|w| w.abs() <= omega_max);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

fn frequency_scale_of(med: &MediumParams, tau: f64) -> f64 {
    med.max_rate().max(1.0 / tau)
}

/// Traces r_s G_o(Ω) for Ω ∈ [−omega_max, omega_max] with refinement
/// around 1 + 0i and the gain peaks.
pub fn nyquist_contour(ifo: &IfoParams, med: &MediumParams, omega_max: f64, base_samples: usize) -> Result<NyquistContour> {
    if medium::classify_medium(med, 1.0) != MediumClass::Stationary {
        return Err(Error::Precondition("Nyquist contour needs a stationary, non-lasing medium".into()));
    }
    let scale = frequency_scale(ifo, med);
    if !(omega_max >= MIN_OMEGA_MAX_MULT * scale * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!(
            "omega_max = {omega_max} is below {MIN_OMEGA_MAX_MULT} x the frequency scale {scale}"
        )));
    }
    let r = ifo.srm_amplitude_reflectivity;
    let params = base_grid(med, ifo.tau(), omega_max, base_samples);
    let producer = |w: f64| r * interferometer::open_loop_gain_at(ifo, med, Complex64::new(w, 0.0));
    let samples = numerics::refine_curve(producer, &params, CRITICAL, &RefineOptions::default());
    Ok(NyquistContour {
        omegas: samples.iter().map(|s| s.param).collect(),
        values: samples.iter().map(|s| s.value).collect(),
    })
}

/// Medium-level checks first, then the Nyquist winding about 1 + 0i.
pub fn classify_system(ifo: &IfoParams, med: &MediumParams, opts: &StabilityOptions) -> Result<StabilityReport> {
    classify_with_contour(ifo, med, opts).map(|(report, _)| report)
}

/// As [`classify_system`], also returning the traced contour when one was needed.
pub fn classify_with_contour(
    ifo: &IfoParams,
    med: &MediumParams,
    opts: &StabilityOptions,
) -> Result<(StabilityReport, Option<NyquistContour>)> {
    match medium::classify_medium(med, opts.margin) {
        MediumClass::AtomicInstability => {
            return Ok((StabilityReport::medium_only(StabilityClass::AtomicInstability), None))
        }
        MediumClass::NonStationary => return Ok((StabilityReport::medium_only(StabilityClass::NonStationary), None)),
        MediumClass::Stationary => {}
    }
    // A margin below 1 can admit media the contour tracer rejects.
    if medium::classify_medium(med, 1.0) != MediumClass::Stationary {
        return Ok((StabilityReport::medium_only(StabilityClass::NonStationary), None));
    }
    if ifo.srm_amplitude_reflectivity == 0.0 {
        let report = StabilityReport {
            classification: StabilityClass::Stable,
            winding: 0,
            min_distance_to_critical: Some(1.0),
            omega_range_used: None,
            marginal: false,
        };
        return Ok((report, None));
    }

    let omega_max = tail_safe_omega_max(ifo, med, opts.omega_max_mult)?;
    let contour = nyquist_contour(ifo, med, omega_max, opts.base_samples)?;
    let summary = numerics::winding_summary(&contour.closed_curve(), CRITICAL)?;
    if summary.min_distance < opts.marginal_tolerance {
        return Err(Error::MarginalStability(format!(
            "Nyquist contour passes within {:e} of 1+0i",
            summary.min_distance
        )));
    }
    let classification =
        if summary.winding == 0 { StabilityClass::Stable } else { StabilityClass::OpticalInstability };
    let report = StabilityReport {
        classification,
        winding: summary.winding,
        min_distance_to_critical: Some(summary.min_distance),
        omega_range_used: Some((-omega_max, omega_max)),
        marginal: summary.min_distance < opts.flag_distance,
    };
    Ok((report, Some(contour)))
}

/// Axis-aligned rectangle in the complex Ω plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

/// Rectangle [−Ω_max, Ω_max] × [0, H] that contains every upper-half-plane
/// zero of 1 − r_s G_o.
///
/// Above height y, |r_s G_o| ≤ r_s e^{−2τy} (1 + 2Γ_opt/(y + g)), so H is
/// the larger of 10 × the frequency scale and the height where that bound
/// drops below one.
pub fn default_oracle_rect(ifo: &IfoParams, med: &MediumParams, omega_max_mult: f64) -> Result<Rect> {
    let omega_max = tail_safe_omega_max(ifo, med, omega_max_mult)?;
    let tau = ifo.tau();
    let r = ifo.srm_amplitude_reflectivity;
    let g = med.net_damping().max(0.0);
    let peak = 1.0 + if g > 0.0 { 2.0 * med.gamma_opt_total / g } else { f64::INFINITY };
    let escape = if r * peak > 1.0 { (r * peak).ln() / (2.0 * tau) + 1.0 / tau } else { 0.0 };
    let height = (10.0 * frequency_scale(ifo, med)).max(escape);
    Ok(Rect { re_min: -omega_max, re_max: omega_max, im_min: 0.0, im_max: height })
}

const ORACLE_BOUNDARY_TOL: f64 = 1e-9;
const ORACLE_MAX_EVALUATIONS: usize = 1 << 24;
const ORACLE_MAX_DEPTH: u32 = 60;

/// Number of zeros of 1 − r_s G_o inside `rect`, from the contour integral
/// (1/2πi) ∮ F'/F dΩ.
///
/// Each edge is integrated by a trapezoid rule whose panels are halved
/// wherever the one-panel and two-panel sums disagree. The tolerance is
/// tightened until two successive estimates agree and sit within 0.01 of
/// an integer.
pub fn root_count_oracle(ifo: &IfoParams, med: &MediumParams, rect: Rect) -> Result<u32> {
    let mut rect = rect;
    for _attempt in 0..4 {
        match oracle_on_rect(ifo, med, &rect) {
            Err(OracleFailure::BoundaryZero) => {
                let h = rect.im_max - rect.im_min;
                rect = Rect {
                    re_min: rect.re_min * 1.01,
                    re_max: rect.re_max * 1.01,
                    im_min: rect.im_min + 1e-6 * h,
                    im_max: rect.im_max * 1.01,
                };
            }
            Err(OracleFailure::NoConvergence { best }) => {
                return Err(Error::Accuracy { best, error_estimate: (best - best.round()).abs() })
            }
            Ok(n) => return Ok(n),
        }
    }
    Err(Error::Precondition("zero of 1 - r_s G_o persists on the oracle rectangle boundary".into()))
}

enum OracleFailure {
    BoundaryZero,
    NoConvergence { best: f64 },
}

struct Trapezoid<'a> {
    f: &'a dyn Fn(Complex64) -> std::result::Result<Complex64, OracleFailure>,
    evaluations: usize,
}

impl Trapezoid<'_> {
    fn eval(&mut self, z: Complex64) -> std::result::Result<Complex64, OracleFailure> {
        self.evaluations += 1;
        if self.evaluations > ORACLE_MAX_EVALUATIONS {
            return Err(OracleFailure::NoConvergence { best: f64::NAN });
        }
        (self.f)(z)
    }

    /// Adaptive trapezoid over the straight segment [a, b] with known end values.
    fn panel(
        &mut self,
        a: Complex64,
        b: Complex64,
        fa: Complex64,
        fb: Complex64,
        tol: f64,
        depth: u32,
    ) -> std::result::Result<Complex64, OracleFailure> {
        let m = 0.5 * (a + b);
        let fm = self.eval(m)?;
        let one = 0.5 * (b - a) * (fa + fb);
        let two = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
        if (two - one).norm() <= 3.0 * tol || depth >= ORACLE_MAX_DEPTH {
            return Ok(two);
        }
        Ok(self.panel(a, m, fa, fm, 0.5 * tol, depth + 1)? + self.panel(m, b, fm, fb, 0.5 * tol, depth + 1)?)
    }
}

fn oracle_on_rect(ifo: &IfoParams, med: &MediumParams, rect: &Rect) -> std::result::Result<u32, OracleFailure> {
    let r = ifo.srm_amplitude_reflectivity;
    let log_derivative = |z: Complex64| -> std::result::Result<Complex64, OracleFailure> {
        let f = 1.0 - r * interferometer::open_loop_gain_at(ifo, med, z);
        if f.norm() < ORACLE_BOUNDARY_TOL {
            return Err(OracleFailure::BoundaryZero);
        }
        Ok(-r * interferometer::open_loop_gain_derivative_at(ifo, med, z) / f)
    };

    let corners = [
        Complex64::new(rect.re_min, rect.im_min),
        Complex64::new(rect.re_max, rect.im_min),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ];
    let perimeter: f64 = (0..4).map(|k| (corners[(k + 1) % 4] - corners[k]).norm()).sum();
    // Initial panels resolve the delay oscillation and the medium linewidth.
    let tau = ifo.tau();
    let mut step = PI / (8.0 * tau);
    if med.gamma_opt_total > 0.0 {
        step = step.min(med.net_damping().abs().max(1e-9 / tau) / 2.0);
    }

    let mut previous: Option<f64> = None;
    let mut tol = 1e-3;
    while tol >= 1e-9 {
        let mut trap = Trapezoid { f: &log_derivative, evaluations: 0 };
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..4 {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            let n = (((b - a).norm() / step).ceil() as usize).max(8);
            let dz = (b - a) / n as f64;
            let mut za = a;
            let mut fa = trap.eval(za).map_err(|e| with_best(e, previous))?;
            for j in 1..=n {
                let zb = if j == n { b } else { a + dz * j as f64 };
                let fb = trap.eval(zb).map_err(|e| with_best(e, previous))?;
                let share = 2.0 * PI * tol * (zb - za).norm() / perimeter;
                total += trap.panel(za, zb, fa, fb, share, 0).map_err(|e| with_best(e, previous))?;
                za = zb;
                fa = fb;
            }
        }
        let count = (total / Complex64::new(0.0, 2.0 * PI)).re;
        if let Some(prev) = previous {
            let near_integer = (count - count.round()).abs() < 0.01;
            if near_integer && (count - prev).abs() < 0.01 && count.round() >= 0.0 {
                return Ok(count.round() as u32);
            }
        }
        previous = Some(count);
        tol *= 0.1;
    }
    Err(OracleFailure::NoConvergence { best: previous.unwrap_or(f64::NAN) })
}

fn with_best(e: OracleFailure, previous: Option<f64>) -> OracleFailure {
    match e {
        OracleFailure::NoConvergence { .. } => OracleFailure::NoConvergence { best: previous.unwrap_or(f64::NAN) },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::map_eta_xi;

    fn ifo(r2: f64) -> IfoParams {
        IfoParams::default().with_srm_power_reflectivity(r2)
    }

    fn surveyed(ifo: &IfoParams, eta: f64, xi: f64, root: usize) -> MediumParams {
        let tau = ifo.tau();
        let (g12, gm) = map_eta_xi(eta, xi, tau).unwrap();
        let d0 = medium::solve_detuning(g12, gm, tau)[root];
        MediumParams { gamma12: g12, gamma_opt_total: gm, delta0: d0, atom_count: 1 }
    }

    #[test]
    fn open_loop_without_srm_is_stable() {
        let i = ifo(0.0);
        let med = surveyed(&i, 0.5, 0.3, 1);
        let rep = classify_system(&i, &med, &StabilityOptions::default()).unwrap();
        assert_eq!(rep.classification, StabilityClass::Stable);
        assert_eq!(rep.winding, 0);
    }

    #[test]
    fn atomic_instability_takes_precedence() {
        let i = ifo(0.9);
        let tau = i.tau();
        let med = MediumParams { gamma12: 1.0 / tau, gamma_opt_total: 2.0 / tau, delta0: 1.0 / tau, atom_count: 1 };
        let rep = classify_system(&i, &med, &StabilityOptions::default()).unwrap();
        assert_eq!(rep.classification, StabilityClass::AtomicInstability);
        assert!(rep.min_distance_to_critical.is_none());
        assert!(nyquist_contour(&i, &med, 100.0 / tau, 256).is_err());
    }

    #[test]
    fn empty_arm_contour_is_circle() {
        let i = ifo(0.64);
        let tau = i.tau();
        let med = MediumParams::transparent();
        let c = nyquist_contour(&i, &med, 50.0 / tau, 512).unwrap();
        assert!(c.values.iter().all(|z| (z.norm() - 0.8).abs() < 1e-12));
        assert_eq!(numerics::winding_number(&c.closed_curve(), CRITICAL).unwrap(), 0);
        assert!((c.min_distance_to_critical() - 0.2).abs() < 1e-6);
    }

    #[test]
    fn zero_reflectivity_contour_is_origin() {
        let i = ifo(0.0);
        let med = surveyed(&i, 0.5, 0.3, 0);
        let c = nyquist_contour(&i, &med, 60.0 * frequency_scale(&i, &med), 64).unwrap();
        assert!(c.values.iter().all(|z| z.norm() == 0.0));
        assert_eq!(numerics::winding_number(&c.closed_curve(), CRITICAL).unwrap(), 0);
    }

    #[test]
    fn omega_max_precondition() {
        let i = ifo(0.5);
        let med = surveyed(&i, 0.5, 0.3, 0);
        let scale = frequency_scale(&i, &med);
        assert!(nyquist_contour(&i, &med, 5.0 * scale, 64).is_err());
    }

    #[test]
    fn oracle_without_medium() {
        let i = ifo(0.8);
        let med = MediumParams::transparent();
        let rect = default_oracle_rect(&i, &med, 50.0).unwrap();
        assert_eq!(root_count_oracle(&i, &med, rect).unwrap(), 0);
    }

    #[test]
    fn strong_gain_is_optically_unstable() {
        let i = ifo(0.9);
        let med = surveyed(&i, 0.8, 0.3, 1);
        let rep = classify_system(&i, &med, &StabilityOptions::default()).unwrap();
        assert_eq!(rep.classification, StabilityClass::OpticalInstability);
        assert!(rep.winding > 0);
        let rect = default_oracle_rect(&i, &med, 50.0).unwrap();
        assert_eq!(root_count_oracle(&i, &med, rect).unwrap() as i64, rep.winding);
    }
}
