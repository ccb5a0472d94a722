//! Gauss-Legendre quadrature: fixed rules and a globally adaptive driver.
//!
//! Gauss nodes are strictly interior, so the adaptive driver copes with
//! integrable endpoint singularities (`x^{-s}`, `log x`, weights
//! `|xi|^{-Re nu}` with `Re nu < 1`) by bisecting toward the endpoint; no
//! integrand is ever evaluated at a panel boundary.
//!
//! Nodes and weights are computed once per order by Newton iteration on the
//! Legendre recurrence and cached; the unit tests pin them down through
//! polynomial-exactness checks (an n-point rule must integrate degree
//! `2n - 1` exactly), which would fail for any wrong digit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{HoroError, Result};

/// Default relative tolerance for the adaptive driver.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Default absolute-error floor (lets integrals that cancel to zero finish).
pub const DEFAULT_ABS_TOL: f64 = 1e-14;
/// Default cap on integrand evaluations.
pub const DEFAULT_MAX_EVALS: usize = 1 << 20;

/// Computes the n-point Gauss-Legendre rule on `[-1, 1]` by Newton iteration
/// on the three-term Legendre recurrence.
fn compute_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess for the i-th root of P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// The 15-point rule (cached).
pub fn gl15() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (n, w) = RULE.get_or_init(|| compute_rule(15));
    (n, w)
}

/// The 64-point rule (cached).
pub fn gl64() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (n, w) = RULE.get_or_init(|| compute_rule(64));
    (n, w)
}

/// Applies one n-point panel of the given rule to `[a, b]`.
pub fn apply_rule<F>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> Complex64
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in nodes.iter().zip(weights) {
        acc += f(mid + half * x) * *w;
    }
    acc * half
}

/// Single 15-point panel on `[a, b]`.
pub fn fixed_gl15<F>(f: &F, a: f64, b: f64) -> Complex64
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let (n, w) = gl15();
    apply_rule(f, a, b, n, w)
}

/// Single 64-point panel on `[a, b]`.
pub fn fixed_gl64<F>(f: &F, a: f64, b: f64) -> Complex64
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let (n, w) = gl64();
    apply_rule(f, a, b, n, w)
}

/// `panels` equal 15-point panels on `[a, b]`.
pub fn composite_gl15<F>(f: &F, a: f64, b: f64, panels: usize) -> Complex64
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let h = (b - a) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..panels {
        let lo = a + k as f64 * h;
        acc += fixed_gl15(f, lo, lo + h);
    }
    acc
}

/// Controls for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_evals: DEFAULT_MAX_EVALS,
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    /// Sum of per-panel refinement discrepancies at termination.
    pub err_est: f64,
    /// Number of integrand evaluations consumed.
    pub evals: usize,
}

/// A panel with its coarse value and the values of its two halves; the
/// local error estimate is the coarse-vs-refined discrepancy.
struct Panel {
    a: f64,
    m: f64,
    b: f64,
    left: Complex64,
    right: Complex64,
    err: f64,
}

impl Panel {
    fn refined(&self) -> Complex64 {
        self.left + self.right
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

fn make_panel<F>(f: &F, a: f64, b: f64, whole: Complex64, evals: &mut usize) -> Panel
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    let m = 0.5 * (a + b);
    let left = fixed_gl15(f, a, m);
    let right = fixed_gl15(f, m, b);
    *evals += 30;
    let err = (whole - (left + right)).norm();
    Panel { a, m, b, left, right, err }
}

/// Globally adaptive Gauss-Legendre integration of `f` over `[a, b]`.
///
/// Splits the panel with the worst local error until the summed error
/// estimate drops below `max(abs_tol, rel_tol * |value|)`.  Returns
/// `resource-limit` if the evaluation budget runs out first.
pub fn integrate<F>(f: &F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64 + ?Sized,
{
    if !a.is_finite() || !b.is_finite() {
        return Err(HoroError::InvalidArgument(
            "integration endpoints must be finite".into(),
        ));
    }
    if a > b {
        return Err(HoroError::InvalidArgument(format!(
            "integration interval is reversed: [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult { value: Complex64::new(0.0, 0.0), err_est: 0.0, evals: 0 });
    }
    if !(opts.rel_tol > 0.0) || !(opts.abs_tol >= 0.0) {
        return Err(HoroError::InvalidArgument(
            "quadrature tolerances must be positive".into(),
        ));
    }

    let mut evals = 0usize;
    let whole = fixed_gl15(f, a, b);
    evals += 15;
    let mut heap = BinaryHeap::new();
    heap.push(make_panel(f, a, b, whole, &mut evals));

    loop {
        let total: Complex64 = heap.iter().map(Panel::refined).sum();
        let err_sum: f64 = heap.iter().map(|p| p.err).sum();
        if !total.is_finite() {
            return Err(HoroError::InvalidArgument(
                "integrand produced a non-finite value".into(),
            ));
        }
        if err_sum <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            return Ok(QuadResult { value: total, err_est: err_sum, evals });
        }
        if evals + 60 > opts.max_evals {
            return Err(HoroError::ResourceLimit(format!(
                "adaptive quadrature exceeded {} evaluations (error estimate {err_sum:.3e})",
                opts.max_evals
            )));
        }
        let worst = heap.pop().expect("heap cannot be empty");
        heap.push(make_panel(f, worst.a, worst.m, worst.left, &mut evals));
        heap.push(make_panel(f, worst.m, worst.b, worst.right, &mut evals));
    }
}

/// Adaptive integration of a real-valued integrand.
pub fn integrate_real<F>(f: &F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    integrate(&|x: f64| Complex64::new(f(x), 0.0), a, b, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact `\int_{-1}^{1} x^k dx`.
    fn monomial_integral(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    }

    // An n-point Gauss rule is exact through degree 2n-1; checking the full
    // range pins every node and weight digit.
    #[test]
    fn gl15_is_exact_through_degree_29() {
        let (nodes, weights) = gl15();
        assert_eq!(nodes.len(), 15);
        let wsum: f64 = weights.iter().sum();
        assert!((wsum - 2.0).abs() <= 1e-14);
        for k in 0..=29u32 {
            let got: f64 = nodes
                .iter()
                .zip(weights)
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            assert!(
                (got - monomial_integral(k)).abs() <= 2e-14,
                "degree {k}: got {got}"
            );
        }
    }

    #[test]
    fn gl64_is_exact_at_high_degree() {
        let (nodes, weights) = gl64();
        assert_eq!(nodes.len(), 64);
        for k in [0u32, 31, 64, 100, 126, 127] {
            let got: f64 = nodes
                .iter()
                .zip(weights)
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            assert!(
                (got - monomial_integral(k)).abs() <= 5e-14,
                "degree {k}: got {got}"
            );
        }
    }

    #[test]
    fn nodes_are_interior_and_symmetric() {
        for rule in [gl15(), gl64()] {
            let (nodes, weights) = rule;
            let n = nodes.len();
            for i in 0..n {
                assert!(nodes[i].abs() < 1.0);
                assert_eq!(nodes[i], -nodes[n - 1 - i]);
                assert_eq!(weights[i], weights[n - 1 - i]);
                assert!(weights[i] > 0.0);
            }
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularities() {
        // \int_0^1 x^{-1/2} dx = 2.
        let r = integrate_real(&|x: f64| x.powf(-0.5), 0.0, 1.0, &QuadOptions::default())
            .unwrap();
        assert!((r.value.re - 2.0).abs() <= 1e-9, "got {}", r.value.re);
        // \int_0^1 -ln(x) dx = 1.
        let r = integrate_real(&|x: f64| -x.ln(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((r.value.re - 1.0).abs() <= 1e-10, "got {}", r.value.re);
        // \int_0^1 x^{-0.8} dx = 5 (the hardest weight exponent we meet).
        let r = integrate_real(&|x: f64| x.powf(-0.8), 0.0, 1.0, &QuadOptions::default())
            .unwrap();
        assert!((r.value.re - 5.0).abs() <= 5e-9, "got {}", r.value.re);
    }

    #[test]
    fn adaptive_matches_oscillatory_closed_form() {
        // \int_a^b e^{i w x} dx = (e^{iwb} - e^{iwa}) / (iw).
        let (a, b, w) = (-1.0, 2.0, 40.0);
        let exact = (Complex64::new(0.0, w * b).exp() - Complex64::new(0.0, w * a).exp())
            / Complex64::new(0.0, w);
        let r = integrate(
            &|x: f64| Complex64::new(0.0, w * x).exp(),
            a,
            b,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value - exact).norm() <= 1e-10);
    }

    #[test]
    fn gaussian_mass_matches_frozen_value() {
        // \int_{-8}^{8} e^{-x^2} dx = sqrt(pi) - (tails < 1e-28).
        let r = integrate_real(&|x: f64| (-x * x).exp(), -8.0, 8.0, &QuadOptions::default())
            .unwrap();
        assert!((r.value.re - std::f64::consts::PI.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn zero_integral_terminates_via_absolute_floor() {
        let r = integrate_real(
            &|x: f64| x.sin(),
            -std::f64::consts::PI,
            std::f64::consts::PI,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!(r.value.re.abs() <= 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let opts = QuadOptions { rel_tol: 1e-13, abs_tol: 0.0, max_evals: 200 };
        let err = integrate_real(&|x: f64| x.powf(-0.9), 0.0, 1.0, &opts).unwrap_err();
        assert!(matches!(err, HoroError::ResourceLimit(_)));
    }

    #[test]
    fn rejects_bad_intervals() {
        let opts = QuadOptions::default();
        assert!(integrate_real(&|x: f64| x, 1.0, 0.0, &opts).is_err());
        assert!(integrate_real(&|x: f64| x, f64::NAN, 1.0, &opts).is_err());
        let r = integrate_real(&|x: f64| x, 2.0, 2.0, &opts).unwrap();
        assert_eq!(r.value.re, 0.0);
    }

    #[test]
    fn composite_rule_sums_panels() {
        let exact = 1.0 - (-4.0f64).exp();
        let got = composite_gl15(&|x: f64| Complex64::new((-x).exp(), 0.0), 0.0, 4.0, 8);
        assert!((got.re - exact).abs() <= 1e-13);
    }
}
