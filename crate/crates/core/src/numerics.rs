//! Small numeric toolbox shared by the physics modules.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// 2×2 complex matrix acting on (amplitude, phase) quadrature pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex2x2 {
    pub a11: Complex64,
    pub a12: Complex64,
    pub a21: Complex64,
    pub a22: Complex64,
}

impl Complex2x2 {
    pub const fn new(a11: Complex64, a12: Complex64, a21: Complex64, a22: Complex64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    /// `s · I`
    pub fn scalar(s: Complex64) -> Self {
        Self::new(s, ZERO, ZERO, s)
    }

    pub fn diag(d1: Complex64, d2: Complex64) -> Self {
        Self::new(d1, ZERO, ZERO, d2)
    }

    pub fn det(&self) -> Complex64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::new(
            self.a11.conj(),
            self.a21.conj(),
            self.a12.conj(),
            self.a22.conj(),
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::Precondition("singular 2x2 matrix".into()));
        }
        let inv = det.inv();
        Ok(Self::new(
            self.a22 * inv,
            -self.a12 * inv,
            -self.a21 * inv,
            self.a11 * inv,
        ))
    }

    /// Row vector times matrix: `v · self`.
    pub fn left_mul(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            v[0] * self.a11 + v[1] * self.a21,
            v[0] * self.a12 + v[1] * self.a22,
        ]
    }

    /// Matrix times column vector: `self · v`.
    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Ratio of the off-diagonal magnitude to the diagonal magnitude, and
    /// the mismatch between the two diagonal entries. Both vanish for `s · I`.
    pub fn scalar_defect(&self) -> f64 {
        let diag = self.a11.norm().max(self.a22.norm());
        if diag == 0.0 {
            return if self.max_norm() == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let off = self.a12.norm().max(self.a21.norm());
        off.max((self.a11 - self.a22).norm()) / diag
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }
}

impl Add for Complex2x2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl Sub for Complex2x2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}

impl Neg for Complex2x2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a11, -self.a12, -self.a21, -self.a22)
    }
}

impl Mul for Complex2x2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Mul<Complex64> for Complex2x2 {
    type Output = Self;
    fn mul(self, s: Complex64) -> Self {
        self.scale(s)
    }
}

impl Mul<f64> for Complex2x2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }
}

/// Real roots of a quadratic, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRoots {
    pub roots: Vec<f64>,
    /// Set when the discriminant vanished within tolerance and the single
    /// entry in `roots` has multiplicity two.
    pub double_root: bool,
}

/// Relative discriminant tolerance used to detect double roots.
pub const DISCRIMINANT_TOL: f64 = 1e-10;

/// Real roots of `a x² + b x + c = 0`.
///
/// The larger-magnitude root is formed without cancellation and the other
/// one recovered from the product `c / a`. A discriminant within
/// `DISCRIMINANT_TOL · max(b², |4ac|)` of zero yields a flagged double root.
pub fn solve_quadratic(a: f64, b: f64, c: f64) -> Result<QuadraticRoots> {
    if a == 0.0 && b == 0.0 && c == 0.0 {
        return Err(Error::DegenerateEquation);
    }
    if a == 0.0 {
        let roots = if b == 0.0 { vec![] } else { vec![-c / b] };
        return Ok(QuadraticRoots { roots, double_root: false });
    }
    let b2 = b * b;
    let four_ac = 4.0 * a * c;
    let disc = b2 - four_ac;
    if disc.abs() <= DISCRIMINANT_TOL * b2.max(four_ac.abs()) {
        return Ok(QuadraticRoots { roots: vec![-b / (2.0 * a)], double_root: true });
    }
    if disc < 0.0 {
        return Ok(QuadraticRoots { roots: vec![], double_root: false });
    }
    let q = -0.5 * (b + disc.sqrt().copysign(b));
    let mut roots = vec![q / a, c / q];
    roots.sort_by(|x, y| x.total_cmp(y));
    Ok(QuadraticRoots { roots, double_root: false })
}

/// Outcome of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Maximum bisection depth of the adaptive Simpson rule.
pub const MAX_SIMPSON_DEPTH: u32 = 40;
const MAX_EVALUATIONS: usize = 20_000_000;
const INITIAL_PANELS: usize = 16;

/// Adaptive Simpson quadrature of `f` over `[lo, hi]`.
///
/// The target accuracy is `max(abs_tol, rel_tol · |I|)` with `|I|` taken from
/// a coarse composite pass. On failure the best estimate is carried in
/// [`Error::Accuracy`].
pub fn integrate_adaptive<F>(f: F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    integrate_piecewise(f, &[lo, hi], rel_tol, abs_tol)
}

/// Like [`integrate_adaptive`] but with caller supplied breakpoints, which
/// must be ascending. Narrow features should sit on breakpoints so the
/// initial sampling sees them.
pub fn integrate_piecewise<F>(f: F, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    if breaks.len() < 2 {
        return Err(Error::Precondition("quadrature needs at least two breakpoints".into()));
    }
    if breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("quadrature breakpoints must be strictly ascending".into()));
    }
    if rel_tol < 0.0 || abs_tol < 0.0 || (rel_tol == 0.0 && abs_tol == 0.0) {
        return Err(Error::InvalidParameter("quadrature tolerances must be non-negative and not both zero".into()));
    }

    // Panels: each interval between breakpoints cut into equal pieces.
    let mut panels = Vec::with_capacity((breaks.len() - 1) * INITIAL_PANELS);
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / INITIAL_PANELS as f64;
        for k in 0..INITIAL_PANELS {
            let a = w[0] + h * k as f64;
            let b = if k + 1 == INITIAL_PANELS { w[1] } else { w[0] + h * (k + 1) as f64 };
            panels.push((a, b));
        }
    }

    let mut state = SimpsonState { evaluations: 0, failed: false, error: 0.0, abs_sum: 0.0 };
    let mut first = Vec::with_capacity(panels.len());
    let mut coarse = 0.0;
    for &(a, b) in &panels {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        state.evaluations += 3;
        if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
            return Err(Error::Precondition(format!("integrand not finite on [{a}, {b}]")));
        }
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        coarse += whole.abs();
        first.push((a, b, fa, fm, fb, whole));
    }

    let span = breaks[breaks.len() - 1] - breaks[0];
    let tol = abs_tol.max(rel_tol * coarse);
    let mut value = 0.0;
    for (a, b, fa, fm, fb, whole) in first {
        let share = if tol > 0.0 { tol * (b - a) / span } else { 0.0 };
        value += simpson_step(&f, a, b, fa, fm, fb, whole, share, 0, &mut state);
    }

    let error_estimate = state.error + 4.0 * f64::EPSILON * state.abs_sum;
    if state.failed {
        return Err(Error::Accuracy { best: value, error_estimate });
    }
    Ok(QuadratureResult { value, error_estimate, evaluations: state.evaluations })
}

struct SimpsonState {
    evaluations: usize,
    failed: bool,
    error: f64,
    abs_sum: f64,
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    st: &mut SimpsonState,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    st.evaluations += 2;
    if !(flm.is_finite() && frm.is_finite()) {
        st.failed = true;
        return whole;
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let converged = delta.abs() <= 15.0 * tol;
    let exhausted = depth >= MAX_SIMPSON_DEPTH || st.evaluations >= MAX_EVALUATIONS || m <= a || m >= b;
    if converged || exhausted {
        if !converged {
            st.failed = true;
        }
        st.error += delta.abs() / 15.0;
        st.abs_sum += left.abs() + right.abs();
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, st)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, st)
}

/// Second-order central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

/// Accumulated-angle summary of a closed polyline about a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingSummary {
    pub winding: i64,
    /// Total accumulated angle in radians.
    pub total_angle: f64,
    /// Closest approach of the polyline (vertices and segments) to the point.
    pub min_distance: f64,
    /// Largest single principal-value increment, in radians.
    pub max_increment: f64,
}

fn contact_tolerance(point: Complex64) -> f64 {
    1e-12 * point.norm().max(1.0)
}

/// Winding angle summary of the closed curve (last point joins the first).
pub fn winding_summary(curve: &[Complex64], point: Complex64) -> Result<WindingSummary> {
    if curve.len() < 3 {
        return Err(Error::Precondition("winding number needs at least three curve points".into()));
    }
    let tol = contact_tolerance(point);
    let n = curve.len();
    let mut total = 0.0;
    let mut min_distance = f64::INFINITY;
    let mut max_increment: f64 = 0.0;
    for i in 0..n {
        let a = curve[i];
        let b = curve[(i + 1) % n];
        let d = segment_distance(a, b, point);
        min_distance = min_distance.min(d);
        if d <= tol {
            return Err(Error::MarginalStability(format!(
                "curve passes within {d:e} of the point {point}"
            )));
        }
        let step = ((b - point) / (a - point)).arg();
        max_increment = max_increment.max(step.abs());
        total += step;
    }
    Ok(WindingSummary {
        winding: (total / (2.0 * PI)).round() as i64,
        total_angle: total,
        min_distance,
        max_increment,
    })
}

/// Number of counter-clockwise turns of the closed curve about `point`.
pub fn winding_number(curve: &[Complex64], point: Complex64) -> Result<i64> {
    winding_summary(curve, point).map(|s| s.winding)
}

/// Refinement controls for [`refine_curve`].
#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    /// A segment whose angle increment about the point reaches this value is split.
    pub max_angle_step: f64,
    /// Segments with an endpoint closer than this to the point are split
    /// until they are short compared with that distance.
    pub near_distance: f64,
    /// Length-to-distance ratio enforced inside `near_distance`.
    pub near_ratio: f64,
    pub max_depth: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { max_angle_step: PI / 2.0, near_distance: 0.1, near_ratio: 0.25, max_depth: 40 }
    }
}

/// A sample of a parametrised curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub param: f64,
    pub value: Complex64,
}

/// Samples `producer` at `params` and bisects segments that turn too fast
/// about `point` or pass close to it. Output is ordered by parameter.
pub fn refine_curve<F>(producer: F, params: &[f64], point: Complex64, opts: &RefineOptions) -> Vec<CurveSample>
where
    F: Fn(f64) -> Complex64,
{
    let mut out = Vec::with_capacity(params.len() * 2);
    let Some(&first) = params.first() else {
        return out;
    };
    let mut prev = CurveSample { param: first, value: producer(first) };
    out.push(prev);
    for &t in &params[1..] {
        let next = CurveSample { param: t, value: producer(t) };
        // Depth-first bisection; the stack holds pending right halves.
        let mut stack = vec![(next, 0u32)];
        while let Some((right, depth)) = stack.pop() {
            if depth < opts.max_depth && needs_split(prev.value, right.value, point, opts) {
                let mid_t = 0.5 * (prev.param + right.param);
                if mid_t > prev.param && mid_t < right.param {
                    let mid = CurveSample { param: mid_t, value: producer(mid_t) };
                    stack.push((right, depth + 1));
                    stack.push((mid, depth + 1));
                    continue;
                }
            }
            out.push(right);
            prev = right;
        }
    }
    out
}

fn needs_split(a: Complex64, b: Complex64, point: Complex64, opts: &RefineOptions) -> bool {
    let da = (a - point).norm();
    let db = (b - point).norm();
    if da == 0.0 || db == 0.0 {
        return false;
    }
    let step = ((b - point) / (a - point)).arg().abs();
    if step >= opts.max_angle_step {
        return true;
    }
    let dmin = da.min(db);
    dmin < opts.near_distance && (b - a).norm() > opts.near_ratio * dmin
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_factorable() {
        let r = solve_quadratic(1.0, -3.0, 2.0).unwrap();
        assert_eq!(r.roots, vec![1.0, 2.0]);
        assert!(!r.double_root);
    }

    #[test]
    fn quadratic_linear_fallback() {
        let r = solve_quadratic(0.0, 2.0, -4.0).unwrap();
        assert_eq!(r.roots, vec![2.0]);
    }

    #[test]
    fn quadratic_double_root() {
        let r = solve_quadratic(1.0, -2.0, 1.0).unwrap();
        assert_eq!(r.roots, vec![1.0]);
        assert!(r.double_root);
    }

    #[test]
    fn quadratic_degenerate_and_complex() {
        assert_eq!(solve_quadratic(0.0, 0.0, 0.0), Err(Error::DegenerateEquation));
        assert!(solve_quadratic(1.0, 0.0, 1.0).unwrap().roots.is_empty());
        assert!(solve_quadratic(0.0, 0.0, 3.0).unwrap().roots.is_empty());
    }

    #[test]
    fn quadratic_cancellation_resistant() {
        // Roots 1e8 and 1e-8: the naive formula loses the small one entirely.
        let r = solve_quadratic(1.0, -(1e8 + 1e-8), 1.0).unwrap();
        assert_relative_eq!(r.roots[0], 1e-8, max_relative = 1e-14);
        assert_relative_eq!(r.roots[1], 1e8, max_relative = 1e-14);
    }

    #[test]
    fn matrix_inverse_and_identity() {
        let m = Complex2x2::new(c(1.0, 2.0), c(0.5, -1.0), c(-0.3, 0.1), c(2.0, 0.0));
        let p = m * m.inverse().unwrap();
        assert!((p - Complex2x2::identity()).max_norm() < 1e-14);
        assert_eq!(Complex2x2::identity() * m, m);
        assert!(Complex2x2::zero().inverse().is_err());
    }

    #[test]
    fn constant_and_sine_integrals() {
        let r = integrate_adaptive(|_| 1.0, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((r.value - 2.0).abs() <= 1e-12);
        let r = integrate_adaptive(f64::sin, 0.0, PI, 1e-9, 0.0).unwrap();
        assert!((r.value - 2.0).abs() <= 2e-9);
        assert!((r.value - 2.0).abs() <= 10.0 * r.error_estimate);
    }

    #[test]
    fn poisson_kernel_integral() {
        let rr = 0.8f64;
        let f = |x: f64| 1.0 / (1.0 - 2.0 * rr * (2.0 * x).cos() + rr * rr);
        // Independent check: the periodic trapezoid rule converges
        // geometrically for this integrand.
        let n = 4000;
        let h = PI / n as f64;
        let trap: f64 = (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h;
        let closed = PI / (1.0 - rr * rr);
        assert_relative_eq!(trap, closed, max_relative = 1e-13);
        assert_relative_eq!(closed, 8.726_646_259_971_647, max_relative = 1e-15);
        let r = integrate_adaptive(f, 0.0, PI, 1e-10, 0.0).unwrap();
        assert_relative_eq!(r.value, closed, max_relative = 1e-9);
    }

    #[test]
    fn accuracy_failure_carries_estimate() {
        // Integrable singularity at 0: the depth limit is hit before 1e-15.
        let err = integrate_adaptive(|x: f64| 1.0 / (x.abs() + 1e-300).sqrt(), -1.0, 1.001, 1e-15, 0.0);
        match err {
            Err(Error::Accuracy { best, .. }) => assert!(best.is_finite()),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(integrate_adaptive(|x| x, 1.0, 0.0, 1e-6, 0.0).is_err());
    }

    fn circle(n: usize, turns: f64) -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0, turns * 2.0 * PI * k as f64 / n as f64))
            .collect()
    }

    #[test]
    fn winding_examples() {
        let ccw = circle(64, 1.0);
        assert_eq!(winding_number(&ccw, c(0.0, 0.0)).unwrap(), 1);
        assert_eq!(winding_number(&ccw, c(2.0, 0.0)).unwrap(), 0);
        let cw_twice = circle(128, -2.0);
        assert_eq!(winding_number(&cw_twice, c(0.0, 0.0)).unwrap(), -2);
    }

    #[test]
    fn winding_through_point_is_marginal() {
        let ccw = circle(64, 1.0);
        assert!(matches!(winding_number(&ccw, c(1.0, 0.0)), Err(Error::MarginalStability(_))));
        assert!(winding_number(&ccw[..2], c(0.0, 0.0)).is_err());
    }

    #[test]
    fn refinement_resolves_coarse_spiral() {
        // Base steps of 0.8π: unambiguous but too coarse for a polyline.
        let f = |t: f64| Complex64::from_polar(1.0, 4.0 * PI * t);
        let base = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        assert!(base.windows(2).all(|w| needs_split(f(w[0]), f(w[1]), c(0.0, 0.0), &RefineOptions::default())));
        let refined = refine_curve(f, &base, c(0.0, 0.0), &RefineOptions::default());
        let pts: Vec<_> = refined.iter().map(|s| s.value).collect();
        assert_eq!(winding_number(&pts, c(0.0, 0.0)).unwrap(), 2);
        assert!(refined.windows(2).all(|w| w[0].param < w[1].param));
    }
}
