//! Unit-determinant 2x2 matrices and their one-parameter flows.
//!
//! Conventions used throughout the crate: the generator basis is
//! `X = [[1,0],[0,-1]]`, `U = [[0,1],[0,0]]`, `V = [[0,0],[1,0]]`, so that
//! `[X,U] = 2U`, `[X,V] = -2V`, `[U,V] = X`.  Flows act on the *right* of a
//! group element:
//!
//! * geodesic:            `a_t(x) = x * exp(t X / 2) = x * diag(e^{t/2}, e^{-t/2})`
//! * stable horocycle:    `h_t(x) = x * exp(t U) = x * [[1,t],[0,1]]`
//! * unstable horocycle:  `hbar_z(x) = x * exp(z V) = x * [[1,0],[z,1]]`
//!
//! All exponentials are closed-form; no matrix exponential is ever
//! approximated numerically.

use crate::error::{HoroError, Result};

/// How many compositions may accumulate before the determinant is
/// renormalized back to 1 (see [`ComposeAccumulator`]).
pub const RENORM_PERIOD: usize = 1_000;

/// Tolerance on `|det - 1|` accepted at construction.
pub const DET_TOL: f64 = 1e-12;

/// A finite flow time.  NaN and infinities are rejected at construction so
/// that downstream closed forms never see them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTime(f64);

impl FlowTime {
    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(HoroError::InvalidArgument(format!(
                "flow time must be finite, got {t}"
            )));
        }
        Ok(FlowTime(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// An element of the unit-determinant group, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl GroupElement {
    /// Builds an element, requiring `|det - 1| <= 1e-12` and finite entries.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let g = GroupElement { a, b, c, d };
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(HoroError::InvalidArgument(
                "group element entries must be finite".into(),
            ));
        }
        if (g.det() - 1.0).abs() > DET_TOL {
            return Err(HoroError::InvalidArgument(format!(
                "determinant {} is not within {DET_TOL} of 1",
                g.det()
            )));
        }
        Ok(g)
    }

    /// Builds an element without the determinant check.  Used internally by
    /// exact closed forms whose determinant is 1 by construction.
    pub(crate) fn new_unchecked(a: f64, b: f64, c: f64, d: f64) -> Self {
        GroupElement { a, b, c, d }
    }

    pub fn identity() -> Self {
        GroupElement { a: 1.0, b: 0.0, c: 0.0, d: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &GroupElement) -> GroupElement {
        GroupElement {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    /// Exact inverse (adjugate; determinant is 1 up to round-off).
    pub fn inverse(&self) -> GroupElement {
        GroupElement { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// Rescales both rows by `det^{-1/2}`, restoring determinant 1.  Call
    /// this every [`RENORM_PERIOD`] compositions on long products.
    pub fn renormalized(&self) -> GroupElement {
        let s = 1.0 / self.det().sqrt();
        GroupElement { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    /// Largest absolute entry difference against `rhs`.
    pub fn linf_distance(&self, rhs: &GroupElement) -> f64 {
        (self.a - rhs.a)
            .abs()
            .max((self.b - rhs.b).abs())
            .max((self.c - rhs.c).abs())
            .max((self.d - rhs.d).abs())
    }

    /// Largest absolute entry.
    pub fn linf_norm(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }
}

/// `exp(t X / 2) = diag(e^{t/2}, e^{-t/2})`.
pub fn exp_geodesic(t: f64) -> GroupElement {
    let e = (0.5 * t).exp();
    GroupElement::new_unchecked(e, 0.0, 0.0, 1.0 / e)
}

/// `exp(t U) = [[1, t], [0, 1]]`.
pub fn exp_stable(t: f64) -> GroupElement {
    GroupElement::new_unchecked(1.0, t, 0.0, 1.0)
}

/// `exp(z V) = [[1, 0], [z, 1]]`.
pub fn exp_unstable(z: f64) -> GroupElement {
    GroupElement::new_unchecked(1.0, 0.0, z, 1.0)
}

/// `exp(y X) = diag(e^y, e^{-y})` (full generator, no 1/2).
pub fn exp_diagonal(y: f64) -> GroupElement {
    let e = y.exp();
    GroupElement::new_unchecked(e, 0.0, 0.0, 1.0 / e)
}

/// Geodesic flow `a_t(x) = x * exp(t X / 2)`.
pub fn geodesic(x: &GroupElement, t: FlowTime) -> GroupElement {
    x.mul(&exp_geodesic(t.get()))
}

/// Stable horocycle flow `h_t(x) = x * exp(t U)`.
pub fn horocycle(x: &GroupElement, t: FlowTime) -> GroupElement {
    x.mul(&exp_stable(t.get()))
}

/// Unstable horocycle flow `hbar_z(x) = x * exp(z V)`.
pub fn unstable_horocycle(x: &GroupElement, z: FlowTime) -> GroupElement {
    x.mul(&exp_unstable(z.get()))
}

/// Rescaled box chart at `x`:
/// `alpha(t, y, z) = x * exp(t*S U) * exp(y*S^{-1/3} X) * exp(z*S^{-2/3} V)`
/// where `S >= 1` is the orbit-length rescaling.
pub fn alpha_map(
    x: &GroupElement,
    t: f64,
    y: f64,
    z: f64,
    rescale: f64,
) -> Result<GroupElement> {
    if !(rescale >= 1.0) {
        return Err(HoroError::InvalidArgument(format!(
            "rescaling must be >= 1, got {rescale}"
        )));
    }
    for (name, v) in [("t", t), ("y", y), ("z", z)] {
        if !v.is_finite() {
            return Err(HoroError::InvalidArgument(format!(
                "alpha_map coordinate {name} must be finite"
            )));
        }
    }
    let s13 = rescale.powf(1.0 / 3.0);
    let g = x
        .mul(&exp_stable(t * rescale))
        .mul(&exp_diagonal(y / s13))
        .mul(&exp_unstable(z / (s13 * s13)));
    Ok(g)
}

/// Accumulates a long product of group elements, renormalizing the
/// determinant by row scaling every [`RENORM_PERIOD`] compositions.
#[derive(Debug, Clone)]
pub struct ComposeAccumulator {
    value: GroupElement,
    since_renorm: usize,
}

impl ComposeAccumulator {
    pub fn new(start: GroupElement) -> Self {
        ComposeAccumulator { value: start, since_renorm: 0 }
    }

    pub fn push(&mut self, rhs: &GroupElement) {
        self.value = self.value.mul(rhs);
        self.since_renorm += 1;
        if self.since_renorm >= RENORM_PERIOD {
            self.value = self.value.renormalized();
            self.since_renorm = 0;
        }
    }

    pub fn value(&self) -> &GroupElement {
        &self.value
    }
}

/// Plain 2x2 real matrices for Lie-algebra level checks (generators are not
/// group elements: their determinants are not 1).
pub mod generators {
    /// Row-major 2x2 matrix.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Mat2(pub [[f64; 2]; 2]);

    impl Mat2 {
        pub fn mul(&self, r: &Mat2) -> Mat2 {
            let a = &self.0;
            let b = &r.0;
            Mat2([
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ])
        }

        pub fn sub(&self, r: &Mat2) -> Mat2 {
            Mat2([
                [self.0[0][0] - r.0[0][0], self.0[0][1] - r.0[0][1]],
                [self.0[1][0] - r.0[1][0], self.0[1][1] - r.0[1][1]],
            ])
        }

        pub fn scale(&self, s: f64) -> Mat2 {
            Mat2([
                [s * self.0[0][0], s * self.0[0][1]],
                [s * self.0[1][0], s * self.0[1][1]],
            ])
        }
    }

    pub fn x() -> Mat2 {
        Mat2([[1.0, 0.0], [0.0, -1.0]])
    }

    pub fn u() -> Mat2 {
        Mat2([[0.0, 1.0], [0.0, 0.0]])
    }

    pub fn v() -> Mat2 {
        Mat2([[0.0, 0.0], [1.0, 0.0]])
    }

    /// Commutator `[A, B] = AB - BA`.
    pub fn bracket(a: &Mat2, b: &Mat2) -> Mat2 {
        a.mul(b).sub(&b.mul(a))
    }
}
