//! Fourier-side model functions for the irreducible unitary series and the
//! exact symbolic machinery (polynomials, differential operators, closed
//! derivative oracles) that the norm and transfer-operator layer builds on.
//!
//! Model functions are closed-form test families -- polynomials times an
//! optional Gaussian factor, optionally cut off to a compact window -- with
//! analytically coded derivatives of every order.  No grid representation
//! exists anywhere: operator inequalities are probed without discretization
//! error, and quadrature only ever touches scalar integrands.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::error::{HoroError, Result};

/// Number of standard deviations kept when a Gaussian family reports its
/// effective support (squared tails beyond this are < 1e-62).
const GAUSSIAN_SUPPORT_SIGMAS: f64 = 8.5;

// ---------------------------------------------------------------------------
// Complex polynomials
// ---------------------------------------------------------------------------

/// Polynomial with complex coefficients, ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: Complex64) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    pub fn real(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.norm() == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (i as f64 + 1.0))
                .collect(),
        )
    }

    pub fn nth_derivative(&self, n: usize) -> Poly {
        let mut p = self.clone();
        for _ in 0..n {
            p = p.derivative();
        }
        p
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, &c) in rhs.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Poly::new(out)
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out =
            vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Re-expansion `p(x + a)` as a polynomial in `x`.
    pub fn shift(&self, a: f64) -> Poly {
        // Horner-style: p(x + a) built from the top coefficient down.
        let mut out = Poly::zero();
        let x_plus_a = Poly::new(vec![Complex64::new(a, 0.0), Complex64::new(1.0, 0.0)]);
        for &c in self.coeffs.iter().rev() {
            out = out.mul(&x_plus_a).add(&Poly::constant(c));
        }
        out
    }

    /// Substitution `p(s x)`.
    pub fn dilate(&self, s: f64) -> Poly {
        let mut out = Vec::with_capacity(self.coeffs.len());
        let mut pow = 1.0;
        for &c in &self.coeffs {
            out.push(c * pow);
            pow *= s;
        }
        Poly::new(out)
    }
}

// ---------------------------------------------------------------------------
// Differential operators with polynomial coefficients
// ---------------------------------------------------------------------------

/// `sum_j terms[j](xi) d^j/dxi^j`; coefficients are polynomials in the
/// absolute variable `xi`.
#[derive(Debug, Clone)]
pub struct DiffOp {
    pub terms: Vec<Poly>,
}

impl DiffOp {
    pub fn new(terms: Vec<Poly>) -> Self {
        let mut op = DiffOp { terms };
        while matches!(op.terms.last(), Some(p) if p.is_zero()) {
            op.terms.pop();
        }
        op
    }

    pub fn zero() -> Self {
        DiffOp { terms: vec![] }
    }

    pub fn identity() -> Self {
        DiffOp::new(vec![Poly::constant(Complex64::new(1.0, 0.0))])
    }

    /// Multiplication operator by a polynomial.
    pub fn mult(p: Poly) -> Self {
        DiffOp::new(vec![p])
    }

    /// `d^k/dxi^k`.
    pub fn derivative(k: usize) -> Self {
        let mut terms = vec![Poly::zero(); k + 1];
        terms[k] = Poly::constant(Complex64::new(1.0, 0.0));
        DiffOp::new(terms)
    }

    /// Highest derivative order present.
    pub fn order(&self) -> usize {
        self.terms.len().saturating_sub(1)
    }

    pub fn add(&self, rhs: &DiffOp) -> DiffOp {
        let n = self.terms.len().max(rhs.terms.len());
        let mut out = vec![Poly::zero(); n];
        for (i, p) in self.terms.iter().enumerate() {
            out[i] = out[i].add(p);
        }
        for (i, p) in rhs.terms.iter().enumerate() {
            out[i] = out[i].add(p);
        }
        DiffOp::new(out)
    }

    pub fn scale(&self, s: Complex64) -> DiffOp {
        DiffOp::new(self.terms.iter().map(|p| p.scale(s)).collect())
    }

    /// Operator composition `self . rhs` using the Leibniz commutation
    /// `d^j (b .) = sum_l C(j,l) b^{(l)} d^{j-l}`.
    pub fn compose(&self, rhs: &DiffOp) -> DiffOp {
        let mut out = DiffOp::zero();
        for (j, a) in self.terms.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (k, b) in rhs.terms.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                let mut binom = 1.0f64;
                for l in 0..=j {
                    if l > 0 {
                        binom = binom * (j - l + 1) as f64 / l as f64;
                    }
                    let coeff = a.mul(&b.nth_derivative(l)).scale(Complex64::new(binom, 0.0));
                    let mut terms = vec![Poly::zero(); j - l + k + 1];
                    terms[j - l + k] = coeff;
                    out = out.add(&DiffOp::new(terms));
                }
            }
        }
        out
    }

    /// Applies the operator to an oracle at a point.
    pub fn apply_at(&self, f: &dyn DerivOracle, xi: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, p) in self.terms.iter().enumerate() {
            if !p.is_zero() {
                acc += p.eval(xi) * f.deriv(xi, j);
            }
        }
        acc
    }
}

/// The model of the diagonal generator: `(1 - nu) + 2 xi d/dxi`.
pub fn hat_x_op(nu: Complex64) -> DiffOp {
    DiffOp::new(vec![
        Poly::constant(Complex64::new(1.0, 0.0) - nu),
        Poly::x().scale(Complex64::new(2.0, 0.0)),
    ])
}

/// The model of the unstable generator:
/// `-i((1 - nu) d/dxi + xi d^2/dxi^2)`.
pub fn hat_v_op(nu: Complex64) -> DiffOp {
    let minus_i = Complex64::new(0.0, -1.0);
    DiffOp::new(vec![
        Poly::zero(),
        Poly::constant((Complex64::new(1.0, 0.0) - nu) * minus_i),
        Poly::x().scale(minus_i),
    ])
}

/// The rescaled foliated Laplacian model
/// `m^2 I - (T^{-1/3} hatX)^2 - (T^{-2/3} hatV)^2`.
pub fn laplace_op(nu: Complex64, m: i64, rescale: f64) -> DiffOp {
    let x = hat_x_op(nu);
    let v = hat_v_op(nu);
    let x2 = x.compose(&x).scale(Complex64::new(-rescale.powf(-2.0 / 3.0), 0.0));
    let v2 = v.compose(&v).scale(Complex64::new(-rescale.powf(-4.0 / 3.0), 0.0));
    DiffOp::mult(Poly::constant(Complex64::new((m * m) as f64, 0.0)))
        .add(&x2)
        .add(&v2)
}

// ---------------------------------------------------------------------------
// Derivative oracles
// ---------------------------------------------------------------------------

/// A scalar function of one real variable with exact derivatives.
///
/// `deriv(xi, 0)` is the value; `max_order` is the highest `k` for which
/// `deriv(.., k)` is globally trustworthy (compactly cut-off families lose
/// smoothness at their window edge).
pub trait DerivOracle: Send + Sync {
    fn deriv(&self, xi: f64, k: usize) -> Complex64;
    fn max_order(&self) -> usize;

    fn value(&self, xi: f64) -> Complex64 {
        self.deriv(xi, 0)
    }
}

/// The workhorse family: `P(xi - center) * exp(-((xi-center)/width)^2)`,
/// optionally zeroed outside a window.  Differentiation is closed: each
/// derivative multiplies in the Gaussian chain factor and stays in the
/// family, so the symbolic derivative table is extended lazily and cached.
pub struct PolyFactor {
    poly: Poly,
    center: f64,
    gauss_width: Option<f64>,
    cutoff: Option<(f64, f64)>,
    smoothness: usize,
    table: Mutex<Vec<Poly>>,
}

impl std::fmt::Debug for PolyFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolyFactor")
            .field("poly", &self.poly)
            .field("center", &self.center)
            .field("gauss_width", &self.gauss_width)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl PolyFactor {
    /// `P(u) e^{-(u/width)^2}` with `u = xi - center`.
    pub fn gaussian(center: f64, width: f64, poly_in_u: Poly) -> Result<Self> {
        if !(width > 0.0) || !center.is_finite() {
            return Err(HoroError::InvalidArgument(format!(
                "gaussian family needs finite center and positive width, got {center}, {width}"
            )));
        }
        Ok(PolyFactor {
            table: Mutex::new(vec![poly_in_u.clone()]),
            poly: poly_in_u,
            center,
            gauss_width: Some(width),
            cutoff: None,
            smoothness: usize::MAX,
        })
    }

    /// Global polynomial in the absolute variable.
    pub fn polynomial(p: Poly) -> Self {
        PolyFactor {
            table: Mutex::new(vec![p.clone()]),
            poly: p,
            center: 0.0,
            gauss_width: None,
            cutoff: None,
            smoothness: usize::MAX,
        }
    }

    /// Compact bump `P(u) (1 - (u/halfwidth)^2)^p` on
    /// `[center - halfwidth, center + halfwidth]`, zero outside; the window
    /// edge is `C^{p-1}`, so derivatives are trustworthy to order `p - 1`.
    pub fn bump(center: f64, halfwidth: f64, p: usize, poly_in_u: Poly) -> Result<Self> {
        if !(halfwidth > 0.0) || p < 2 {
            return Err(HoroError::InvalidArgument(format!(
                "bump needs positive halfwidth and vanishing order >= 2, got {halfwidth}, {p}"
            )));
        }
        // (1 - (u/h)^2)^p expanded.
        let base = Poly::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0 / (halfwidth * halfwidth), 0.0),
        ]);
        let mut window = Poly::constant(Complex64::new(1.0, 0.0));
        for _ in 0..p {
            window = window.mul(&base);
        }
        let poly = poly_in_u.mul(&window);
        Ok(PolyFactor {
            table: Mutex::new(vec![poly.clone()]),
            poly,
            center,
            gauss_width: None,
            cutoff: Some((center - halfwidth, center + halfwidth)),
            smoothness: p - 1,
        })
    }

    /// The window outside which the function is (numerically) zero, when
    /// the family defines one.
    pub fn support_hint(&self) -> Option<[f64; 2]> {
        if let Some((a, b)) = self.cutoff {
            return Some([a, b]);
        }
        self.gauss_width.map(|w| {
            [
                self.center - GAUSSIAN_SUPPORT_SIGMAS * w,
                self.center + GAUSSIAN_SUPPORT_SIGMAS * w,
            ]
        })
    }

    fn table_entry(&self, k: usize) -> Poly {
        let mut table = self.table.lock().expect("derivative table poisoned");
        while table.len() <= k {
            let last = table.last().expect("table starts non-empty");
            let mut next = last.derivative();
            if let Some(w) = self.gauss_width {
                // d/du of P e^{-u^2/w^2} = (P' - (2u/w^2) P) e^{-u^2/w^2}.
                let chain = Poly::new(vec![
                    Complex64::new(0.0, 0.0),
                    Complex64::new(-2.0 / (w * w), 0.0),
                ]);
                next = next.add(&last.mul(&chain));
            }
            table.push(next);
        }
        table[k].clone()
    }
}

impl DerivOracle for PolyFactor {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        if let Some((a, b)) = self.cutoff {
            if xi < a || xi > b {
                return Complex64::new(0.0, 0.0);
            }
        }
        let u = xi - self.center;
        let p = self.table_entry(k);
        let mut v = p.eval(u);
        if let Some(w) = self.gauss_width {
            v *= (-(u / w) * (u / w)).exp();
        }
        v
    }

    fn max_order(&self) -> usize {
        self.smoothness
    }
}

/// A differential operator applied to another oracle.  Derivatives of the
/// result are the composed operators `d^k . op`, built once and cached.
pub struct OperatorOracle {
    op: DiffOp,
    inner: Arc<dyn DerivOracle>,
    table: Mutex<Vec<DiffOp>>,
}

impl OperatorOracle {
    pub fn new(op: DiffOp, inner: Arc<dyn DerivOracle>) -> Self {
        OperatorOracle { table: Mutex::new(vec![op.clone()]), op, inner }
    }
}

impl DerivOracle for OperatorOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        let composed = {
            let mut table = self.table.lock().expect("operator table poisoned");
            while table.len() <= k {
                let next = DiffOp::derivative(1).compose(table.last().expect("non-empty"));
                table.push(next);
            }
            table[k].clone()
        };
        composed.apply_at(self.inner.as_ref(), xi)
    }

    fn max_order(&self) -> usize {
        self.inner.max_order().saturating_sub(self.op.order())
    }
}

/// Dilation-recentering `tau^{1/6} f(lambda + tau^{1/3}(xi - lambda))`:
/// exact chain rule, derivatives gain a factor `tau^{k/3}`.
pub struct DilationOracle {
    inner: Arc<dyn DerivOracle>,
    tau: f64,
    lambda: f64,
}

impl DilationOracle {
    pub fn new(inner: Arc<dyn DerivOracle>, tau: f64, lambda: f64) -> Self {
        DilationOracle { inner, tau, lambda }
    }
}

impl DerivOracle for DilationOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        let s = self.tau.powf(1.0 / 3.0);
        let arg = self.lambda + s * (xi - self.lambda);
        self.inner.deriv(arg, k) * self.tau.powf(1.0 / 6.0) * s.powi(k as i32)
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }
}

/// Multiplication by a real power `xi^p` on `xi > 0`; derivatives by the
/// Leibniz rule with falling factorials.
pub struct PowerWeightOracle {
    inner: Arc<dyn DerivOracle>,
    exponent: f64,
}

impl PowerWeightOracle {
    pub fn new(inner: Arc<dyn DerivOracle>, exponent: f64) -> Self {
        PowerWeightOracle { inner, exponent }
    }
}

impl DerivOracle for PowerWeightOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        debug_assert!(xi > 0.0, "power weight is only defined on xi > 0");
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            // (d/dxi)^{k-j} xi^p = p (p-1) ... (p-k+j+1) xi^{p-k+j}.
            let mut falling = 1.0f64;
            for idx in 0..(k - j) {
                falling *= self.exponent - idx as f64;
            }
            acc += self.inner.deriv(xi, j)
                * binom
                * falling
                * xi.powf(self.exponent - (k - j) as f64);
        }
        acc
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }
}

/// Modulation `e^{i freq xi} f(xi)`; derivatives by the Leibniz rule.
pub struct ModulatedOracle {
    inner: Arc<dyn DerivOracle>,
    freq: f64,
}

impl ModulatedOracle {
    pub fn new(inner: Arc<dyn DerivOracle>, freq: f64) -> Self {
        ModulatedOracle { inner, freq }
    }
}

impl DerivOracle for ModulatedOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        let phase = Complex64::new(0.0, self.freq * xi).exp();
        let i_freq = Complex64::new(0.0, self.freq);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            acc += self.inner.deriv(xi, j) * binom * i_freq.powu((k - j) as u32);
        }
        phase * acc
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }
}

/// Complex-linear combination of oracles.
pub struct SumOracle {
    parts: Vec<(Complex64, Arc<dyn DerivOracle>)>,
}

impl SumOracle {
    pub fn new(parts: Vec<(Complex64, Arc<dyn DerivOracle>)>) -> Self {
        SumOracle { parts }
    }
}

impl DerivOracle for SumOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        self.parts.iter().map(|(c, f)| f.deriv(xi, k) * c).sum()
    }

    fn max_order(&self) -> usize {
        self.parts.iter().map(|(_, f)| f.max_order()).min().unwrap_or(usize::MAX)
    }
}

/// Scalar multiple of an oracle.
pub struct ScaledOracle {
    inner: Arc<dyn DerivOracle>,
    factor: Complex64,
}

impl ScaledOracle {
    pub fn new(inner: Arc<dyn DerivOracle>, factor: Complex64) -> Self {
        ScaledOracle { inner, factor }
    }
}

impl DerivOracle for ScaledOracle {
    fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        self.inner.deriv(xi, k) * self.factor
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }
}

// ---------------------------------------------------------------------------
// Spectral functions and parameter types
// ---------------------------------------------------------------------------

/// The four irreducible series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Principal,
    Complementary,
    Discrete,
    MockDiscrete,
}

/// A model function: series data, spectral parameter, circle index,
/// effective support, and the derivative oracle for the Fourier transform.
#[derive(Clone)]
pub struct SpectralFunction {
    pub series: Series,
    pub nu: Complex64,
    pub m: i64,
    pub support: [f64; 2],
    pub oracle: Arc<dyn DerivOracle>,
}

impl std::fmt::Debug for SpectralFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralFunction")
            .field("series", &self.series)
            .field("nu", &self.nu)
            .field("m", &self.m)
            .field("support", &self.support)
            .finish()
    }
}

impl SpectralFunction {
    /// Full constructor with all series/parameter consistency checks.
    pub fn new(
        series: Series,
        nu: Complex64,
        m: i64,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(HoroError::InvalidArgument(
                "circle index m must be nonzero".into(),
            ));
        }
        if !support[0].is_finite() || !support[1].is_finite() || support[0] >= support[1] {
            return Err(HoroError::InvalidArgument(format!(
                "support must be a nonempty finite interval, got {support:?}"
            )));
        }
        match series {
            Series::Principal => {
                if nu.re != 0.0 {
                    return Err(HoroError::InvalidArgument(format!(
                        "principal series needs purely imaginary nu, got {nu}"
                    )));
                }
            }
            Series::Complementary => {
                if nu.im != 0.0 || !(nu.re > 0.0 && nu.re < 1.0) {
                    return Err(HoroError::InvalidArgument(format!(
                        "complementary series needs real nu in (0,1), got {nu}"
                    )));
                }
            }
            Series::Discrete => {
                if nu.im != 0.0 || nu.re < 1.0 || nu.re.fract() != 0.0 {
                    return Err(HoroError::InvalidArgument(format!(
                        "discrete series needs integer nu >= 1, got {nu}"
                    )));
                }
            }
            Series::MockDiscrete => {
                if nu != Complex64::new(0.0, 0.0) {
                    return Err(HoroError::InvalidArgument(format!(
                        "mock-discrete series needs nu = 0, got {nu}"
                    )));
                }
            }
        }
        if matches!(series, Series::Discrete | Series::MockDiscrete) && support[0] <= 0.0 {
            return Err(HoroError::InvalidArgument(format!(
                "discrete-type support must lie in (0, inf), got {support:?}"
            )));
        }
        if oracle.max_order() < 4 {
            return Err(HoroError::InvalidArgument(format!(
                "model functions need derivative oracles to order >= 4, got {}",
                oracle.max_order()
            )));
        }
        Ok(SpectralFunction { series, nu, m, support, oracle })
    }

    /// Principal series, `nu = i theta`.
    pub fn principal(
        theta: f64,
        m: i64,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> Result<Self> {
        SpectralFunction::new(Series::Principal, Complex64::new(0.0, theta), m, support, oracle)
    }

    /// Complementary series, real `nu` in (0, 1).
    pub fn complementary(
        nu: f64,
        m: i64,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> Result<Self> {
        SpectralFunction::new(Series::Complementary, Complex64::new(nu, 0.0), m, support, oracle)
    }

    /// Discrete series, integer `nu >= 1`.
    pub fn discrete(
        nu: u32,
        m: i64,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> Result<Self> {
        SpectralFunction::new(Series::Discrete, Complex64::new(nu as f64, 0.0), m, support, oracle)
    }

    /// Mock-discrete series (`nu = 0`).
    pub fn mock_discrete(
        m: i64,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> Result<Self> {
        SpectralFunction::new(
            Series::MockDiscrete,
            Complex64::new(0.0, 0.0),
            m,
            support,
            oracle,
        )
    }

    /// Same series data, new oracle/support (used by operator outputs; the
    /// order-4 floor is not re-imposed since operators consume orders).
    pub(crate) fn with_oracle(
        &self,
        support: [f64; 2],
        oracle: Arc<dyn DerivOracle>,
    ) -> SpectralFunction {
        SpectralFunction { series: self.series, nu: self.nu, m: self.m, support, oracle }
    }

    /// Casimir-type parameter `mu = 1 - nu^2`; real for every valid series.
    pub fn mu(&self) -> f64 {
        (Complex64::new(1.0, 0.0) - self.nu * self.nu).re
    }

    /// Exponent of the norm weight `|xi|^{-w}`.
    pub fn weight_exponent(&self) -> f64 {
        self.nu.re
    }

    pub fn value(&self, xi: f64) -> Complex64 {
        self.oracle.value(xi)
    }

    pub fn deriv(&self, xi: f64, k: usize) -> Complex64 {
        self.oracle.deriv(xi, k)
    }
}

/// Twist data: circle frequency `lambda`, circle index `m`, orbit rescaling.
#[derive(Debug, Clone, Copy)]
pub struct TwistParams {
    pub lambda: f64,
    pub m: i64,
    pub rescale: f64,
}

impl TwistParams {
    pub fn new(lambda: f64, m: i64, rescale: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda == 0.0 || m == 0 {
            return Err(HoroError::InvalidArgument(format!(
                "twist parameters need lambda != 0 and m != 0, got {lambda}, {m}"
            )));
        }
        if !(rescale >= 1.0) {
            return Err(HoroError::InvalidArgument(format!(
                "rescaling must be >= 1, got {rescale}"
            )));
        }
        Ok(TwistParams { lambda, m, rescale })
    }

    /// The product `lambda * m` steering every multiplier.
    pub fn lambda_m(&self) -> f64 {
        self.lambda * self.m as f64
    }
}

/// Sobolev exponents: transverse `r >= 0`, foliated even `s`.
#[derive(Debug, Clone, Copy)]
pub struct SobolevIndex {
    pub r: f64,
    pub s: u32,
}

impl SobolevIndex {
    pub fn new(r: f64, s: u32) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(HoroError::InvalidArgument(format!(
                "transverse exponent r must be >= 0, got {r}"
            )));
        }
        if s % 2 != 0 {
            return Err(HoroError::UnsupportedIndex(format!(
                "foliated exponent s must be even, got {s}"
            )));
        }
        Ok(SobolevIndex { r, s })
    }
}

/// Observed convergence order of centered finite differences of
/// `deriv(.., k-1)` against `deriv(.., k)` between steps 1e-3 and 5e-4.
/// Exact oracles give order ~2 wherever the h^2 term dominates round-off.
pub fn fd_observed_order(f: &dyn DerivOracle, xi: f64, k: usize) -> (f64, f64) {
    assert!(k >= 1);
    let err = |h: f64| -> f64 {
        let fd = (f.deriv(xi + h, k - 1) - f.deriv(xi - h, k - 1)) / (2.0 * h);
        (fd - f.deriv(xi, k)).norm()
    };
    let e1 = err(1e-3);
    let e2 = err(5e-4);
    ((e1 / e2).log2(), e1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn poly_algebra_basics() {
        let p = Poly::real(&[1.0, 2.0, 3.0]); // 1 + 2x + 3x^2
        assert_eq!(p.eval(2.0), c(17.0));
        assert_eq!(p.derivative().eval(2.0), c(14.0));
        let q = p.shift(1.0); // p(x+1) = 6 + 8x + 3x^2
        assert_eq!(q.eval(0.0), c(6.0));
        assert_eq!(q.eval(1.0), p.eval(2.0));
        let d = p.dilate(2.0); // p(2x)
        assert_eq!(d.eval(1.0), p.eval(2.0));
        let prod = p.mul(&Poly::x());
        assert_eq!(prod.eval(3.0), p.eval(3.0) * 3.0);
    }

    #[test]
    fn diffop_composition_matches_leibniz() {
        // (d/dx . x) f = f + x f', i.e. terms [1, x].
        let dx = DiffOp::derivative(1);
        let mult_x = DiffOp::mult(Poly::x());
        let composed = dx.compose(&mult_x);
        let f = PolyFactor::polynomial(Poly::real(&[0.0, 0.0, 1.0])); // x^2
        for xi in [-1.5, 0.3, 2.0] {
            let want = f.value(xi) + xi * f.deriv(xi, 1);
            assert!((composed.apply_at(&f, xi) - want).norm() <= 1e-14);
        }
    }

    #[test]
    fn model_commutators() {
        // On these models: [X,U] = 2U, [X,V] = -2V, [U,V] = -X.
        let nu = Complex64::new(0.0, 0.7);
        let x = hat_x_op(nu);
        let v = hat_v_op(nu);
        let u = DiffOp::mult(Poly::x().scale(Complex64::new(0.0, 1.0)));
        let f = PolyFactor::polynomial(Poly::real(&[0.5, -1.0, 2.0, 1.0])); // cubic
        let bracket = |a: &DiffOp, b: &DiffOp| a.compose(b).add(&b.compose(a).scale(c(-1.0)));
        for xi in [-2.0, -0.4, 0.9, 3.1] {
            let xu = bracket(&x, &u).apply_at(&f, xi);
            assert!((xu - u.apply_at(&f, xi) * 2.0).norm() <= 1e-12, "XU at {xi}");
            let xv = bracket(&x, &v).apply_at(&f, xi);
            assert!((xv - v.apply_at(&f, xi) * (-2.0)).norm() <= 1e-12, "XV at {xi}");
            let uv = bracket(&u, &v).apply_at(&f, xi);
            assert!((uv - x.apply_at(&f, xi) * (-1.0)).norm() <= 1e-12, "UV at {xi}");
        }
    }

    #[test]
    fn gaussian_family_derivatives_are_exact() {
        // f = e^{-xi^2}: f' = -2 xi f, f'' = (4 xi^2 - 2) f.
        let f = PolyFactor::gaussian(0.0, 1.0, Poly::real(&[1.0])).unwrap();
        for xi in [-1.2f64, 0.0, 0.7] {
            let g = (-xi * xi).exp();
            assert!((f.value(xi) - c(g)).norm() <= 1e-15);
            assert!((f.deriv(xi, 1) - c(-2.0 * xi * g)).norm() <= 1e-14);
            assert!((f.deriv(xi, 2) - c((4.0 * xi * xi - 2.0) * g)).norm() <= 1e-14);
        }
    }

    #[test]
    fn bump_vanishes_smoothly_at_the_edge() {
        let p = 6;
        let f = PolyFactor::bump(1.5, 0.5, p, Poly::real(&[1.0])).unwrap();
        assert_eq!(f.max_order(), p - 1);
        assert_eq!(f.value(2.1), c(0.0));
        assert_eq!(f.value(0.9), c(0.0));
        assert!((f.value(1.5) - c(1.0)).norm() <= 1e-15);
        // Derivatives up to p-1 vanish at the edge itself (the k-th
        // derivative decays like distance^{p-k} approaching it).
        for k in 0..p {
            let v = f.deriv(2.0, k);
            assert!(v.norm() <= 1e-6, "k={k}: {v}");
        }
        // Decay rate toward the edge: the k-th derivative scales like
        // distance^{p-k} (distances kept large enough that the expanded
        // polynomial's cancellation round-off stays negligible).
        for k in 0..=2 {
            let near = f.deriv(2.0 - 1e-1, k).norm();
            let nearer = f.deriv(2.0 - 1e-2, k).norm();
            assert!(nearer <= near * 10.0f64.powi(-((p - k) as i32)) * 3.0, "k={k}");
        }
        assert_eq!(f.support_hint(), Some([1.0, 2.0]));
    }

    #[test]
    fn fd_consistency_of_oracles() {
        let gauss = PolyFactor::gaussian(0.5, 1.3, Poly::real(&[1.0, 0.7])).unwrap();
        let bump = PolyFactor::bump(0.0, 2.0, 8, Poly::real(&[1.0, 0.0, -0.3])).unwrap();
        let oracles: [&dyn DerivOracle; 2] = [&gauss, &bump];
        for f in oracles {
            for k in 1..=3 {
                for xi in [-0.8, 0.2, 1.1] {
                    let (order, e1) = fd_observed_order(f, xi, k);
                    // Where the h^2 term is already at round-off level the
                    // order estimate is noise; only meaningful errors count.
                    if e1 > 1e-10 {
                        assert!(order >= 1.8, "k={k}, xi={xi}: order {order}");
                    }
                }
            }
        }
    }

    #[test]
    fn operator_oracle_composes_derivatives() {
        // Apply hatX at nu=0 to x^2: result 1*x^2 + 2x*2x = 5x^2... check
        // against symbolic expectation (1-0)x^2 + 2x . 2x = 5 x^2, whose
        // derivative is 10x.
        let inner: Arc<dyn DerivOracle> =
            Arc::new(PolyFactor::polynomial(Poly::real(&[0.0, 0.0, 1.0])));
        let op = hat_x_op(Complex64::new(0.0, 0.0));
        let out = OperatorOracle::new(op, inner);
        for xi in [-1.0, 0.5, 2.0] {
            assert!((out.value(xi) - c(5.0 * xi * xi)).norm() <= 1e-13);
            assert!((out.deriv(xi, 1) - c(10.0 * xi)).norm() <= 1e-13);
            assert!((out.deriv(xi, 2) - c(10.0)).norm() <= 1e-13);
        }
    }

    #[test]
    fn dilation_and_power_weight_oracles() {
        let inner: Arc<dyn DerivOracle> =
            Arc::new(PolyFactor::gaussian(1.0, 0.5, Poly::real(&[1.0])).unwrap());
        let tau = 8.0f64;
        let lambda = 1.0;
        let dil = DilationOracle::new(inner.clone(), tau, lambda);
        let s = tau.powf(1.0 / 3.0);
        for xi in [0.8, 1.0, 1.3] {
            let want = inner.value(lambda + s * (xi - lambda)) * tau.powf(1.0 / 6.0);
            assert!((dil.value(xi) - want).norm() <= 1e-14);
            let (order, e1) = fd_observed_order(&dil, xi, 2);
            assert!(e1 <= 1e-10 || order >= 1.8, "dilation order {order}");
        }
        let pw = PowerWeightOracle::new(inner.clone(), -1.0);
        for xi in [0.5, 1.0, 2.2] {
            assert!((pw.value(xi) - inner.value(xi) / xi).norm() <= 1e-14);
            let want1 = inner.deriv(xi, 1) / xi - inner.value(xi) / (xi * xi);
            assert!((pw.deriv(xi, 1) - want1).norm() <= 1e-13);
            let (order, e1) = fd_observed_order(&pw, xi, 2);
            assert!(e1 <= 1e-10 || order >= 1.8, "power order {order}");
        }
    }

    #[test]
    fn spectral_function_validation() {
        let oracle: Arc<dyn DerivOracle> =
            Arc::new(PolyFactor::gaussian(0.0, 1.0, Poly::real(&[1.0])).unwrap());
        assert!(SpectralFunction::principal(0.7, 1, [-8.5, 8.5], oracle.clone()).is_ok());
        assert!(SpectralFunction::principal(0.7, 0, [-8.5, 8.5], oracle.clone()).is_err());
        assert!(SpectralFunction::complementary(1.2, 1, [-8.5, 8.5], oracle.clone()).is_err());
        assert!(SpectralFunction::complementary(0.5, 1, [-8.5, 8.5], oracle.clone()).is_ok());
        // Discrete-type supports must avoid 0.
        assert!(SpectralFunction::discrete(2, 1, [-1.0, 8.5], oracle.clone()).is_err());
        assert!(SpectralFunction::discrete(2, 1, [0.5, 8.5], oracle.clone()).is_ok());
        assert!(SpectralFunction::mock_discrete(1, [0.5, 8.5], oracle.clone()).is_ok());
        // mu = 1 - nu^2 is real in all series.
        let f = SpectralFunction::principal(0.7, 1, [-8.5, 8.5], oracle.clone()).unwrap();
        assert!((f.mu() - 1.49).abs() <= 1e-15);
        let g = SpectralFunction::discrete(2, 1, [0.5, 8.5], oracle).unwrap();
        assert_eq!(g.mu(), -3.0);
    }

    #[test]
    fn sobolev_index_rejects_odd() {
        assert!(matches!(
            SobolevIndex::new(1.0, 3),
            Err(HoroError::UnsupportedIndex(_))
        ));
        assert!(SobolevIndex::new(0.0, 4).is_ok());
        assert!(SobolevIndex::new(-0.5, 2).is_err());
    }

    #[test]
    fn twist_params_validation() {
        assert!(TwistParams::new(0.0, 1, 1.0).is_err());
        assert!(TwistParams::new(1.0, 0, 1.0).is_err());
        assert!(TwistParams::new(1.0, 1, 0.5).is_err());
        let p = TwistParams::new(-0.5, 3, 2.0).unwrap();
        assert_eq!(p.lambda_m(), -1.5);
    }
}
