//! Twisted ergodic integrals along horocycle orbits, cusp-coefficient
//! extraction from closed horocycles, and growth-exponent fitting.
//!
//! The central object is `I(T) = int_0^T e^{i lambda t} f(h_t x) dt` for an
//! observable `f` on the quotient surface.  Orbit points are produced from a
//! checkpointed warm-stepped orbit so the matrices fed to the reducer stay
//! bounded uniformly in `T`, and the quadrature is a panel-doubling composite
//! rule whose panel density respects both the phase oscillation `2 pi /
//! |lambda|` and the unit variation scale of reduced observables.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::cusp::{evaluate_form, CuspFormSpec};
use crate::error::{HoroError, Result};
use crate::group::{exp_stable, GroupElement};
use crate::quad::{composite_gl15, fixed_gl15};
use crate::surface::{reduce, SurfacePoint};

/// Hard ceiling on composite panels in one refinement sweep.
const MAX_PANELS: usize = 1 << 22;

/// Spacing of the warm-stepped orbit checkpoints.
const CHECKPOINT_SPACING: f64 = 1.0;

/// A real-valued observable on the quotient surface.
pub trait Observable: Send + Sync {
    fn eval(&self, x: &SurfacePoint) -> f64;
}

impl<F> Observable for F
where
    F: Fn(&SurfacePoint) -> f64 + Send + Sync,
{
    fn eval(&self, x: &SurfacePoint) -> f64 {
        self(x)
    }
}

/// Panel-density and convergence policy for orbit quadratures.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Composite panels per phase period `2 pi / |lambda|`; at least 8.
    pub panels_per_period: usize,
    /// Relative tolerance between successive refinement levels.
    pub rel_tol: f64,
    /// Maximum number of panel doublings.
    pub max_depth: usize,
}

impl QuadratureSpec {
    pub fn new(panels_per_period: usize, rel_tol: f64, max_depth: usize) -> Result<Self> {
        if panels_per_period < 8 {
            return Err(HoroError::InvalidArgument(format!(
                "panel density must be at least 8 per period, got {panels_per_period}"
            )));
        }
        if !(rel_tol > 0.0 && rel_tol <= 1e-3) {
            return Err(HoroError::InvalidArgument(format!(
                "tolerance must lie in (0, 1e-3], got {rel_tol}"
            )));
        }
        if max_depth == 0 || max_depth > 24 {
            return Err(HoroError::InvalidArgument(format!(
                "refinement depth must lie in [1, 24], got {max_depth}"
            )));
        }
        Ok(QuadratureSpec { panels_per_period, rel_tol, max_depth })
    }

    pub fn default_spec() -> Self {
        QuadratureSpec { panels_per_period: 8, rel_tol: 1e-9, max_depth: 12 }
    }
}

/// A computed twisted integral with its refinement-difference error estimate.
#[derive(Debug, Clone)]
pub struct TwistedIntegral {
    pub x: SurfacePoint,
    pub lambda: f64,
    pub horizon: f64,
    pub value: Complex64,
    /// Difference between the last two refinement levels.
    pub err_est: f64,
    /// False when the depth or panel budget ran out before the tolerance.
    pub converged: bool,
}

/// Warm-stepped horocycle orbit: reduced checkpoints every
/// [`CHECKPOINT_SPACING`] time units, with exact horocycle offsets inside
/// each step, so reducer inputs stay bounded uniformly in the horizon.
pub struct OrbitCache {
    checkpoints: Vec<GroupElement>,
}

impl OrbitCache {
    pub fn new(x: &SurfacePoint, t_max: f64) -> Result<Self> {
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(HoroError::InvalidArgument(format!(
                "orbit horizon must be finite and nonnegative, got {t_max}"
            )));
        }
        let n = (t_max / CHECKPOINT_SPACING).floor() as usize + 1;
        if n > 10_000_000 {
            return Err(HoroError::ResourceLimit(format!(
                "orbit cache would need {n} checkpoints"
            )));
        }
        let mut checkpoints = Vec::with_capacity(n);
        let mut current = x.reduced;
        checkpoints.push(current);
        for _ in 1..n {
            current = reduce(&current.mul(&exp_stable(CHECKPOINT_SPACING)))?.reduced;
            checkpoints.push(current);
        }
        Ok(OrbitCache { checkpoints })
    }

    /// The reduced orbit point `h_t(x)`.
    pub fn point_at(&self, t: f64) -> Result<SurfacePoint> {
        let idx = ((t / CHECKPOINT_SPACING).floor() as isize)
            .clamp(0, self.checkpoints.len() as isize - 1) as usize;
        let dt = t - idx as f64 * CHECKPOINT_SPACING;
        reduce(&self.checkpoints[idx].mul(&exp_stable(dt)))
    }
}

struct RefineOutcome {
    value: Complex64,
    err_est: f64,
    converged: bool,
    panels: usize,
}

/// Panel-doubling refinement of a composite rule until two successive levels
/// differ by less than `rel_tol * |value| + abs_floor`.
fn refine_to_tolerance<F>(
    integrand: &F,
    a: f64,
    b: f64,
    panels0: usize,
    spec: &QuadratureSpec,
    abs_floor: f64,
) -> RefineOutcome
where
    F: Fn(f64) -> Complex64,
{
    let mut panels = panels0.max(1);
    let mut prev = composite_gl15(integrand, a, b, panels);
    let mut value = prev;
    let mut err_est = f64::INFINITY;
    let mut converged = false;
    for _ in 0..spec.max_depth {
        if panels * 2 > MAX_PANELS {
            break;
        }
        panels *= 2;
        value = composite_gl15(integrand, a, b, panels);
        err_est = (value - prev).norm();
        if err_est <= spec.rel_tol * value.norm() + abs_floor {
            converged = true;
            break;
        }
        prev = value;
    }
    RefineOutcome { value, err_est, converged, panels }
}

/// Base panel count: the required density per phase period and per unit of
/// orbit time (reduced observables vary on a unit scale).
fn base_panels(spec: &QuadratureSpec, horizon: f64, lambda: f64) -> usize {
    let per_period = if lambda == 0.0 {
        0.0
    } else {
        spec.panels_per_period as f64 * horizon * lambda.abs() / (2.0 * PI)
    };
    per_period.max(horizon).ceil().max(1.0) as usize
}

/// The twisted ergodic integral `int_0^T e^{i lambda t} f(h_t x) dt`.
pub fn twisted_orbit_integral(
    x: &SurfacePoint,
    obs: &dyn Observable,
    lambda: f64,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<TwistedIntegral> {
    if lambda == 0.0 {
        return Err(HoroError::UseUntwistedPath(
            "lambda = 0 is the classical ergodic integral; call orbit_integral".into(),
        ));
    }
    orbit_quadrature(x, obs, lambda, horizon, spec)
}

/// The untwisted ergodic integral `int_0^T f(h_t x) dt` (the `lambda = 0`
/// case, kept as a separate entry point).
pub fn orbit_integral(
    x: &SurfacePoint,
    obs: &dyn Observable,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<TwistedIntegral> {
    orbit_quadrature(x, obs, 0.0, horizon, spec)
}

fn orbit_quadrature(
    x: &SurfacePoint,
    obs: &dyn Observable,
    lambda: f64,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<TwistedIntegral> {
    if !lambda.is_finite() || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(HoroError::InvalidArgument(format!(
            "need finite lambda and positive finite horizon, got {lambda}, {horizon}"
        )));
    }
    let cache = OrbitCache::new(x, horizon)?;
    let integrand = |t: f64| -> Complex64 {
        let p = cache.point_at(t).expect("orbit point reduction failed");
        Complex64::from_polar(1.0, lambda * t) * obs.eval(&p)
    };
    let out = refine_to_tolerance(
        &integrand,
        0.0,
        horizon,
        base_panels(spec, horizon, lambda),
        spec,
        1e-14 * (1.0 + horizon),
    );
    Ok(TwistedIntegral {
        x: *x,
        lambda,
        horizon,
        value: out.value,
        err_est: out.err_est,
        converged: out.converged,
    })
}

/// The `n`-th coefficient of a weight-`k` form by the closed-horocycle
/// integral `e^{2 pi} n^{-1} int_0^n f((i+t)/n) e^{-2 pi i t} dt`, evaluated
/// directly in the upper half-plane (the evaluation reduces internally).
/// For the discriminant form this recovers the `n`-th q-coefficient up to
/// quadrature error.
pub fn cusp_coefficient(n: u32, form: &CuspFormSpec, quad: &QuadratureSpec) -> Result<Complex64> {
    if n == 0 {
        return Err(HoroError::InvalidArgument(
            "coefficient index must be at least 1".into(),
        ));
    }
    let length = n as f64;
    let integrand = |t: f64| -> Complex64 {
        let z = Complex64::new(t / length, 1.0 / length);
        evaluate_form(form, z).expect("form evaluation failed in the upper half-plane")
            * Complex64::from_polar(1.0, -2.0 * PI * t)
    };
    // The phase period is 1, so the density request is per unit time.
    let panels0 = (quad.panels_per_period as f64 * length).ceil() as usize;
    let out = refine_to_tolerance(&integrand, 0.0, length, panels0, quad, 1e-14 * (1.0 + length));
    if !out.converged {
        return Err(HoroError::ResourceLimit(format!(
            "coefficient quadrature did not converge within depth {} (err {:.3e})",
            quad.max_depth, out.err_est
        )));
    }
    Ok(out.value * (2.0 * PI).exp() / length)
}

/// Initial-point independence of the closed-horocycle twisted integral:
/// returns `||I(x)| - |I(h_s x)|| / |I(x)|` for the period-`n` closed
/// horocycle at height `1/n`.  Exact invariance holds because the twist
/// completes full oscillations over one period.
pub fn closed_horocycle_shift_check(
    n: u32,
    s: f64,
    form: &CuspFormSpec,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if n == 0 || !s.is_finite() {
        return Err(HoroError::InvalidArgument(format!(
            "need a positive period and finite shift, got {n}, {s}"
        )));
    }
    let length = n as f64;
    let panels0 = (quad.panels_per_period as f64 * length).ceil() as usize;
    let run = |shift: f64| -> RefineOutcome {
        let integrand = |t: f64| -> Complex64 {
            let z = Complex64::new((t + shift) / length, 1.0 / length);
            evaluate_form(form, z).expect("form evaluation failed in the upper half-plane")
                * Complex64::from_polar(1.0, -2.0 * PI * t)
        };
        refine_to_tolerance(&integrand, 0.0, length, panels0, quad, 1e-14 * (1.0 + length))
    };
    let base = run(0.0);
    let shifted = run(s);
    Ok((base.value.norm() - shifted.value.norm()).abs() / base.value.norm().max(1e-300))
}

/// Least-squares power-law fit through `(log T, log |I|)`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_max: f64,
    pub samples: usize,
}

/// Fit `log |I| = slope * log T + intercept` by least squares.
pub fn exponent_fit(samples: &[(f64, f64)]) -> Result<ExponentFit> {
    if samples.len() < 4 {
        return Err(HoroError::InvalidArgument(format!(
            "exponent fits need at least 4 samples, got {}",
            samples.len()
        )));
    }
    let logs: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(t, v)| {
            if !(t > 0.0) || !(v > 0.0) {
                return Err(HoroError::InvalidArgument(format!(
                    "exponent fits need positive samples, got ({t}, {v})"
                )));
            }
            Ok((t.ln(), v.ln()))
        })
        .collect::<Result<_>>()?;
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let var: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if var == 0.0 {
        return Err(HoroError::InvalidArgument(
            "exponent fits need at least two distinct horizons".into(),
        ));
    }
    let cov: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = cov / var;
    let intercept = mean_y - slope * mean_x;
    let residual_max = logs
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit { slope, intercept, residual_max, samples: samples.len() })
}

/// Integration-by-parts identity in the small-twist regime: the absolute
/// difference between `int_0^T e^{i lambda t} f(h_t x) dt` and
/// `e^{i lambda T} F(T) - i lambda int_0^T e^{i lambda t} F(t) dt` with
/// `F(t) = int_0^t f(h_tau x) dtau`, both by quadrature.  Only meaningful
/// while `|lambda T| <= e`.
pub fn small_lambda_identity_check(
    x: &SurfacePoint,
    obs: &dyn Observable,
    lambda: f64,
    horizon: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(lambda * horizon).abs().is_finite() || (lambda * horizon).abs() > std::f64::consts::E {
        return Err(HoroError::OutOfRegime(format!(
            "|lambda T| = {} exceeds e",
            (lambda * horizon).abs()
        )));
    }
    if !(horizon > 0.0) {
        return Err(HoroError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let cache = OrbitCache::new(x, horizon)?;
    let plain = |t: f64| -> Complex64 {
        let p = cache.point_at(t).expect("orbit point reduction failed");
        Complex64::new(obs.eval(&p), 0.0)
    };
    let twisted = |t: f64| Complex64::from_polar(1.0, lambda * t) * plain(t);
    let lhs = refine_to_tolerance(
        &twisted,
        0.0,
        horizon,
        base_panels(quad, horizon, lambda),
        quad,
        1e-14 * (1.0 + horizon),
    );
    // Cumulative primitive F on the final panel grid: prefix sums at panel
    // edges plus a partial single-panel rule inside the current panel.
    let panels = lhs.panels;
    let width = horizon / panels as f64;
    let mut prefix = vec![Complex64::new(0.0, 0.0); panels + 1];
    for j in 0..panels {
        let a = width * j as f64;
        prefix[j + 1] = prefix[j] + fixed_gl15(&plain, a, a + width);
    }
    let primitive = |t: f64| -> Complex64 {
        let j = ((t / width).floor() as isize).clamp(0, panels as isize - 1) as usize;
        let a = width * j as f64;
        prefix[j] + fixed_gl15(&plain, a, t)
    };
    let boundary = Complex64::from_polar(1.0, lambda * horizon) * primitive(horizon);
    let bulk = composite_gl15(
        &|t: f64| Complex64::from_polar(1.0, lambda * t) * primitive(t),
        0.0,
        horizon,
        panels,
    );
    let rhs = boundary - Complex64::new(0.0, lambda) * bulk;
    Ok((lhs.value - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cusp::lift;
    use crate::surface::sample_point;

    fn unit_observable() -> impl Observable {
        |_: &SurfacePoint| 1.0
    }

    fn delta_observable() -> impl Observable {
        let form = CuspFormSpec::default_delta();
        move |x: &SurfacePoint| lift(&form, &x.reduced).expect("lift failed").re
    }

    #[test]
    fn constant_observable_matches_the_closed_form() {
        let x = sample_point(11);
        let spec = QuadratureSpec::default_spec();
        let (lambda, horizon) = (0.73, 9.1);
        let out = twisted_orbit_integral(&x, &unit_observable(), lambda, horizon, &spec).unwrap();
        let closed = (Complex64::from_polar(1.0, lambda * horizon) - 1.0)
            / Complex64::new(0.0, lambda);
        assert!(out.converged);
        assert!(
            (out.value - closed).norm() <= 1e-9 * closed.norm(),
            "got {}, closed form {closed}",
            out.value
        );
    }

    #[test]
    fn constant_observable_full_oscillations_cancel() {
        let x = sample_point(3);
        let spec = QuadratureSpec::default_spec();
        // lambda T = 2 pi exactly.
        let out =
            twisted_orbit_integral(&x, &unit_observable(), PI / 5.0, 10.0, &spec).unwrap();
        assert!(out.value.norm() <= 1e-8, "expected cancellation, got {}", out.value);
    }

    #[test]
    fn lambda_zero_signals_the_untwisted_path() {
        let x = sample_point(5);
        let spec = QuadratureSpec::default_spec();
        assert!(matches!(
            twisted_orbit_integral(&x, &unit_observable(), 0.0, 10.0, &spec),
            Err(HoroError::UseUntwistedPath(_))
        ));
        let plain = orbit_integral(&x, &unit_observable(), 10.0, &spec).unwrap();
        assert!((plain.value.re - 10.0).abs() <= 1e-9 * 10.0);
        assert!(plain.value.im.abs() <= 1e-12);
    }

    #[test]
    fn cusp_observable_is_stable_under_density_doubling() {
        let x = sample_point(7);
        let obs = delta_observable();
        let coarse = QuadratureSpec::new(8, 1e-9, 12).unwrap();
        let fine = QuadratureSpec::new(16, 1e-9, 12).unwrap();
        let a = twisted_orbit_integral(&x, &obs, 1.0, 100.0, &coarse).unwrap();
        let b = twisted_orbit_integral(&x, &obs, 1.0, 100.0, &fine).unwrap();
        assert!(a.converged && b.converged);
        assert!(
            (a.value - b.value).norm() <= 1e-8 * (1.0 + a.value.norm()),
            "density doubling moved the value: {} vs {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn halving_the_tolerance_stays_within_the_error_estimate() {
        let x = sample_point(19);
        let obs = delta_observable();
        let spec = QuadratureSpec::new(8, 1e-7, 12).unwrap();
        let finer = QuadratureSpec::new(8, 5e-8, 12).unwrap();
        let a = twisted_orbit_integral(&x, &obs, 0.9, 40.0, &spec).unwrap();
        let b = twisted_orbit_integral(&x, &obs, 0.9, 40.0, &finer).unwrap();
        assert!((a.value - b.value).norm() <= a.err_est.max(1e-12));
    }

    #[test]
    fn twisted_integrals_are_additive_along_the_orbit() {
        let x = sample_point(23);
        let obs = delta_observable();
        let spec = QuadratureSpec::default_spec();
        let (lambda, t1, t2) = (0.9, 7.3, 5.1);
        let whole = twisted_orbit_integral(&x, &obs, lambda, t1 + t2, &spec).unwrap();
        let head = twisted_orbit_integral(&x, &obs, lambda, t1, &spec).unwrap();
        let shifted = reduce(&x.reduced.mul(&exp_stable(t1))).unwrap();
        let tail = twisted_orbit_integral(&shifted, &obs, lambda, t2, &spec).unwrap();
        let glued = head.value + Complex64::from_polar(1.0, lambda * t1) * tail.value;
        let budget = (whole.err_est + head.err_est + tail.err_est).max(1e-10);
        assert!(
            (whole.value - glued).norm() <= 10.0 * budget,
            "additivity violated: {} vs {}",
            whole.value,
            glued
        );
    }

    #[test]
    fn rescaling_identity_holds() {
        // int_0^T e^{i lambda t} f(h_t x) dt
        //   = |lambda|^{-1} int_0^{|lambda| T} e^{i sgn(lambda) u} f(h_{u/|lambda|} x) du.
        let x = sample_point(29);
        let obs = delta_observable();
        let spec = QuadratureSpec::default_spec();
        let horizon = 20.0;
        for lambda in [0.1f64, 0.5] {
            let lhs = twisted_orbit_integral(&x, &obs, lambda, horizon, &spec).unwrap();
            let cache = OrbitCache::new(&x, horizon).unwrap();
            let integrand = |u: f64| -> Complex64 {
                let p = cache.point_at(u / lambda.abs()).unwrap();
                Complex64::from_polar(1.0, lambda.signum() * u) * obs.eval(&p)
            };
            let out = refine_to_tolerance(
                &integrand,
                0.0,
                lambda.abs() * horizon,
                base_panels(&spec, lambda.abs() * horizon, lambda.signum()),
                &spec,
                1e-14 * (1.0 + horizon),
            );
            let rhs = out.value / lambda.abs();
            let budget = (lhs.err_est + out.err_est / lambda.abs()).max(1e-9);
            assert!(
                (lhs.value - rhs).norm() <= 10.0 * budget,
                "rescaling identity failed at lambda={lambda}: {} vs {rhs}",
                lhs.value
            );
        }
    }

    #[test]
    fn coefficients_match_the_expansion_oracle() {
        let form = CuspFormSpec::default_delta();
        let quad = QuadratureSpec::default_spec();
        let c1 = cusp_coefficient(1, &form, &quad).unwrap();
        assert!((c1 - Complex64::new(1.0, 0.0)).norm() <= 1e-6, "c1 = {c1}");
        let c2 = cusp_coefficient(2, &form, &quad).unwrap();
        assert!((c2 - Complex64::new(-24.0, 0.0)).norm() <= 1e-4, "c2 = {c2}");
        let c5 = cusp_coefficient(5, &form, &quad).unwrap();
        assert!((c5 - Complex64::new(4830.0, 0.0)).norm() <= 1e-6 * 4830.0, "c5 = {c5}");
        let c7 = cusp_coefficient(7, &form, &quad).unwrap();
        assert!(
            (c7 - Complex64::new(-16744.0, 0.0)).norm() <= 1e-6 * 16744.0,
            "c7 = {c7}"
        );
    }

    #[test]
    fn shift_independence_on_closed_horocycles() {
        let form = CuspFormSpec::default_delta();
        let quad = QuadratureSpec::default_spec();
        assert_eq!(closed_horocycle_shift_check(3, 0.0, &form, &quad).unwrap(), 0.0);
        for (n, s_frac) in [(2u32, 1.0), (3, 0.37), (5, 0.37)] {
            let s = s_frac * n as f64;
            let rel = closed_horocycle_shift_check(n, s, &form, &quad).unwrap();
            assert!(rel <= 1e-8, "shift dependence {rel} at n={n}, s={s}");
        }
    }

    #[test]
    fn exponent_fit_recovers_exact_power_laws() {
        let samples: Vec<(f64, f64)> =
            (1..=6).map(|j| (2.0f64.powi(j), 3.0 * 2.0f64.powi(j).powf(0.5))).collect();
        let fit = exponent_fit(&samples).unwrap();
        assert!((fit.slope - 0.5).abs() <= 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() <= 1e-12);
        assert!(fit.residual_max <= 1e-12);

        let five_sixths: Vec<(f64, f64)> =
            (1..=5).map(|j| (10.0f64.powi(j), 10.0f64.powi(j).powf(5.0 / 6.0))).collect();
        let fit = exponent_fit(&five_sixths).unwrap();
        assert!((fit.slope - 5.0 / 6.0).abs() <= 1e-12);

        assert!(matches!(
            exponent_fit(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]),
            Err(HoroError::InvalidArgument(_))
        ));
        assert!(matches!(
            exponent_fit(&[(1.0, 1.0), (2.0, -2.0), (3.0, 3.0), (4.0, 4.0)]),
            Err(HoroError::InvalidArgument(_))
        ));
    }

    #[test]
    fn small_lambda_identity() {
        let x = sample_point(31);
        let quad = QuadratureSpec::default_spec();
        let zero = |_: &SurfacePoint| 0.0;
        assert!(small_lambda_identity_check(&x, &zero, 0.01, 100.0, &quad).unwrap() <= 1e-15);
        let diff =
            small_lambda_identity_check(&x, &unit_observable(), 0.02, 50.0, &quad).unwrap();
        assert!(diff <= 1e-10, "constant-observable identity off by {diff}");
        let diff = small_lambda_identity_check(&x, &delta_observable(), 0.01, 100.0, &quad)
            .unwrap();
        assert!(diff <= 1e-7, "cusp-observable identity off by {diff}");
        assert!(matches!(
            small_lambda_identity_check(&x, &zero, 1.0, 100.0, &quad),
            Err(HoroError::OutOfRegime(_))
        ));
    }

    #[test]
    fn quadrature_spec_validates() {
        assert!(QuadratureSpec::new(7, 1e-9, 10).is_err());
        assert!(QuadratureSpec::new(8, 1e-2, 10).is_err());
        assert!(QuadratureSpec::new(8, 0.0, 10).is_err());
        assert!(QuadratureSpec::new(8, 1e-9, 0).is_err());
        assert!(QuadratureSpec::new(8, 1e-9, 25).is_err());
    }

    #[test]
    fn orbit_cache_matches_direct_products_at_moderate_times() {
        let x = sample_point(41);
        let cache = OrbitCache::new(&x, 30.0).unwrap();
        for t in [0.0, 0.4, 7.9, 18.3, 29.99] {
            let cached = cache.point_at(t).unwrap();
            let direct = reduce(&x.reduced.mul(&exp_stable(t))).unwrap();
            assert!(
                cached.base().re - direct.base().re <= 1e-9
                    && (cached.base() - direct.base()).norm() <= 1e-8,
                "cache and direct orbit disagree at t={t}: {} vs {}",
                cached.base(),
                direct.base()
            );
        }
    }
}
