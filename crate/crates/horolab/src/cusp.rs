//! The weight-12 cusp form: eta-product evaluation, automorphic reduction,
//! the lift to the frame bundle, and an exact integer oracle for its
//! q-expansion coefficients.
//!
//! Evaluation always reduces the argument into the fundamental domain
//! first, where `|q| = e^{-2 pi Im z} <= e^{-pi sqrt(3)} ~ 4.3e-3`, so a
//! 40-term eta product leaves tails far below 1e-17.
//!
//! The coefficient oracle never touches floating point: it expands the
//! 24th power of the Euler product with the pentagonal-number sparse form
//! of `prod (1 - q^n)` in checked 128-bit integers.

use num_complex::Complex64;

use crate::error::{HoroError, Result};
use crate::group::GroupElement;
use crate::surface::{base_point, reduce_upper_half};

/// Largest coefficient index served by [`tau_oracle`].
pub const TAU_MAX_INDEX: usize = 10_000;

/// The forms available for evaluation (only the discriminant form in v1;
/// the enum leaves room for other eta quotients).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormId {
    Delta,
}

/// Which form to evaluate and how deep to run the eta product.
#[derive(Debug, Clone, Copy)]
pub struct CuspFormSpec {
    pub weight: u32,
    pub form: FormId,
    pub trunc: u32,
}

impl CuspFormSpec {
    /// The discriminant form with an explicit eta truncation length.
    /// Truncations below 40 are rejected: after reduction, 40 factors
    /// already push the dropped tail below 1e-17.
    pub fn delta(trunc: u32) -> Result<Self> {
        if trunc < 40 {
            return Err(HoroError::InvalidArgument(format!(
                "eta truncation must be >= 40 to meet the tail budget, got {trunc}"
            )));
        }
        Ok(CuspFormSpec { weight: 12, form: FormId::Delta, trunc })
    }

    /// The discriminant form at the default truncation.
    pub fn default_delta() -> Self {
        CuspFormSpec { weight: 12, form: FormId::Delta, trunc: 40 }
    }
}

/// Dedekind eta: `q^{1/24} prod_{n=1}^{trunc} (1 - q^n)` with
/// `q = e^{2 pi i z}`.  The prefactor is computed as `e^{pi i z / 12}`
/// directly from `z`, so no fractional-power branch is involved.
pub fn eta(z: Complex64, trunc: u32) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() || z.im <= 0.0 {
        return Err(HoroError::InvalidArgument(format!(
            "eta needs Im z > 0, got {z}"
        )));
    }
    let q = (Complex64::new(0.0, 2.0 * std::f64::consts::PI) * z).exp();
    let mut product = Complex64::new(1.0, 0.0);
    let mut q_pow = Complex64::new(1.0, 0.0);
    for _ in 0..trunc {
        q_pow *= q;
        product *= Complex64::new(1.0, 0.0) - q_pow;
    }
    let prefactor = (Complex64::new(0.0, std::f64::consts::PI / 12.0) * z).exp();
    Ok(prefactor * product)
}

/// Evaluates the form at an arbitrary upper-half-plane point by reducing
/// first: with `z_red = gamma z` and `(c, d)` the bottom row of `gamma`,
/// the value is `(cz + d)^{-k} eta(z_red)^{24 k / 12}`.
pub fn evaluate_form(spec: &CuspFormSpec, z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() || z.im <= 0.0 {
        return Err(HoroError::InvalidArgument(format!(
            "form evaluation needs Im z > 0, got {z}"
        )));
    }
    let (z_red, gamma) = reduce_upper_half(z)?;
    let [[_, _], [c, d]] = gamma.m;
    let factor = (z * c as f64 + d as f64).powi(-(spec.weight as i32));
    let eta_val = eta(z_red, spec.trunc)?;
    Ok(factor * eta_val.powu(24 * spec.weight / 12))
}

/// Lift of the form to the frame bundle: `f(g.i) (ci + d)^{-k}` with
/// `(c, d)` the bottom row of `g`.  Left-invariant under the integer
/// lattice by the automorphy of the form.
pub fn lift(spec: &CuspFormSpec, g: &GroupElement) -> Result<Complex64> {
    let value = evaluate_form(spec, base_point(g))?;
    let cocycle = Complex64::new(g.d, g.c).powi(-(spec.weight as i32));
    Ok(value * cocycle)
}

/// Exact q-expansion coefficients, 1-indexed: `coeff(1) = 1`.
#[derive(Debug, Clone)]
pub struct QExpansionOracle {
    coeffs: Vec<i128>,
}

impl QExpansionOracle {
    pub fn max_index(&self) -> usize {
        self.coeffs.len()
    }

    /// The n-th coefficient (n >= 1).
    pub fn coeff(&self, n: usize) -> Result<i128> {
        if n == 0 || n > self.coeffs.len() {
            return Err(HoroError::InvalidArgument(format!(
                "coefficient index {n} outside 1..={}",
                self.coeffs.len()
            )));
        }
        Ok(self.coeffs[n - 1])
    }

    /// Evaluates the truncated expansion `sum_{n<=N} coeff(n) q^n` at `z`.
    pub fn partial_sum(&self, z: Complex64) -> Complex64 {
        let q = (Complex64::new(0.0, 2.0 * std::f64::consts::PI) * z).exp();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut q_pow = Complex64::new(1.0, 0.0);
        for &a in &self.coeffs {
            q_pow *= q;
            acc += q_pow * a as f64;
        }
        acc
    }
}

/// Sparse Euler product `prod_{n>=1} (1 - q^n) mod q^{len}` via the
/// pentagonal-number theorem: exponent `k(3k-1)/2` carries sign `(-1)^k`.
fn pentagonal_series(len: usize) -> Vec<(usize, i128)> {
    let mut terms = vec![(0usize, 1i128)];
    let mut k: i64 = 1;
    loop {
        let mut pushed = false;
        for e in [k * (3 * k - 1) / 2, k * (3 * k + 1) / 2] {
            let e = e as usize;
            if e < len {
                terms.push((e, if k % 2 == 0 { 1 } else { -1 }));
                pushed = true;
            }
        }
        if !pushed {
            return terms;
        }
        k += 1;
    }
}

/// Builds the exact coefficient table `coeff(1..=n_max)` of the weight-12
/// form `q prod (1 - q^n)^{24}` by 24 sparse multiplications in checked
/// integer arithmetic.
pub fn tau_oracle(n_max: usize) -> Result<QExpansionOracle> {
    if n_max == 0 {
        return Err(HoroError::InvalidArgument(
            "oracle needs at least one coefficient".into(),
        ));
    }
    if n_max > TAU_MAX_INDEX {
        return Err(HoroError::ResourceLimit(format!(
            "coefficient index {n_max} exceeds the exact-arithmetic cap {TAU_MAX_INDEX}"
        )));
    }
    // coeff(n) is the coefficient of q^{n-1} in the 24th power.
    let len = n_max;
    let sparse = pentagonal_series(len);
    let mut acc = vec![0i128; len];
    acc[0] = 1;
    for _ in 0..24 {
        let mut next = vec![0i128; len];
        for (e, s) in &sparse {
            for i in 0..len - e {
                if acc[i] != 0 {
                    let term = acc[i].checked_mul(*s).ok_or_else(|| {
                        HoroError::InternalError("tau oracle overflowed i128".into())
                    })?;
                    next[i + e] = next[i + e].checked_add(term).ok_or_else(|| {
                        HoroError::InternalError("tau oracle overflowed i128".into())
                    })?;
                }
            }
        }
        acc = next;
    }
    Ok(QExpansionOracle { coeffs: acc })
}
