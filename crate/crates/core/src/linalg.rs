//! Tiny fixed-size linear algebra for the bivariate pieces of the model.
//!
//! The model never needs anything larger than symmetric 2x2 matrices (the
//! person and item covariance matrices), so a full linear algebra crate
//! would be dead weight. [`Sym2`] stores the three free entries and supplies
//! exactly the operations the samplers and densities need: determinant,
//! inverse, Cholesky factor, quadratic forms.

use serde::{Deserialize, Serialize};

/// A point in the plane, used for bivariate means and (theta, tau) pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, c: f64) -> Vec2 {
        Vec2::new(c * self.x, c * self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Outer product v v^T, which is symmetric.
    pub fn outer(self) -> Sym2 {
        Sym2::new(self.x * self.x, self.x * self.y, self.y * self.y)
    }
}

/// A symmetric 2x2 matrix stored as its upper triangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    /// Entry (1, 1).
    pub a: f64,
    /// Off-diagonal entry (1, 2) = (2, 1).
    pub b: f64,
    /// Entry (2, 2).
    pub d: f64,
}

/// Lower-triangular Cholesky factor L with M = L L^T.
#[derive(Clone, Copy, Debug)]
pub struct Chol2 {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        a: 1.0,
        b: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, d: f64) -> Self {
        Sym2 { a, b, d }
    }

    /// c times the identity matrix.
    pub fn scaled_identity(c: f64) -> Self {
        Sym2::new(c, 0.0, c)
    }

    pub fn det(self) -> f64 {
        self.a * self.d - self.b * self.b
    }

    pub fn trace(self) -> f64 {
        self.a + self.d
    }

    pub fn add(self, other: Sym2) -> Sym2 {
        Sym2::new(self.a + other.a, self.b + other.b, self.d + other.d)
    }

    pub fn scale(self, c: f64) -> Sym2 {
        Sym2::new(c * self.a, c * self.b, c * self.d)
    }

    /// Symmetric positive definite, by Sylvester's criterion. Rejects
    /// non-finite entries as well.
    pub fn is_spd(self) -> bool {
        self.a.is_finite()
            && self.b.is_finite()
            && self.d.is_finite()
            && self.a > 0.0
            && self.det() > 0.0
    }

    /// Inverse, valid only when the determinant is nonzero.
    pub fn inverse(self) -> Sym2 {
        let det = self.det();
        Sym2::new(self.d / det, -self.b / det, self.a / det)
    }

    /// Cholesky factor, or `None` when the matrix is not positive definite.
    pub fn cholesky(self) -> Option<Chol2> {
        if !self.is_spd() {
            return None;
        }
        let l11 = self.a.sqrt();
        let l21 = self.b / l11;
        let l22 = (self.d - l21 * l21).sqrt();
        if l22 > 0.0 && l22.is_finite() {
            Some(Chol2 { l11, l21, l22 })
        } else {
            None
        }
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.b * v.x + self.d * v.y)
    }

    /// Quadratic form v^T M v.
    pub fn quad_form(self, v: Vec2) -> f64 {
        self.a * v.x * v.x + 2.0 * self.b * v.x * v.y + self.d * v.y * v.y
    }

    /// trace(self * other) for symmetric matrices.
    pub fn trace_product(self, other: Sym2) -> f64 {
        self.a * other.a + 2.0 * self.b * other.b + self.d * other.d
    }
}

impl Chol2 {
    /// L z for a column vector z, used to correlate standard normal draws.
    pub fn mul_vec(self, z: Vec2) -> Vec2 {
        Vec2::new(self.l11 * z.x, self.l21 * z.x + self.l22 * z.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn determinant_and_inverse() {
        let m = Sym2::new(2.0, 0.5, 1.0);
        assert_relative_eq!(m.det(), 1.75);
        let inv = m.inverse();
        // m * inv should be the identity.
        let prod_a = m.a * inv.a + m.b * inv.b;
        let prod_b = m.a * inv.b + m.b * inv.d;
        let prod_d = m.b * inv.b + m.d * inv.d;
        assert_relative_eq!(prod_a, 1.0, epsilon = 1e-12);
        assert_relative_eq!(prod_b, 0.0, epsilon = 1e-12);
        assert_relative_eq!(prod_d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_detection() {
        assert!(Sym2::new(1.0, 0.0, 1.0).is_spd());
        assert!(Sym2::new(0.287, 0.123, 0.270).is_spd());
        // Negative diagonal and dominant off-diagonal both fail.
        assert!(!Sym2::new(-1.0, 0.0, 1.0).is_spd());
        assert!(!Sym2::new(1.0, 1.5, 1.0).is_spd());
        assert!(!Sym2::new(f64::NAN, 0.0, 1.0).is_spd());
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = Sym2::new(2.0, -0.7, 1.3);
        let l = m.cholesky().unwrap();
        assert_relative_eq!(l.l11 * l.l11, m.a, epsilon = 1e-12);
        assert_relative_eq!(l.l11 * l.l21, m.b, epsilon = 1e-12);
        assert_relative_eq!(l.l21 * l.l21 + l.l22 * l.l22, m.d, epsilon = 1e-12);
        assert!(Sym2::new(1.0, 2.0, 1.0).cholesky().is_none());
    }

    #[test]
    fn quadratic_form_matches_explicit_product() {
        let m = Sym2::new(1.5, 0.3, 0.9);
        let v = Vec2::new(0.7, -1.2);
        let mv = m.mul_vec(v);
        assert_relative_eq!(m.quad_form(v), v.dot(mv), epsilon = 1e-12);
    }

    proptest! {
        // Any matrix built as A A^T + eps I is SPD and round-trips through
        // inverse and Cholesky.
        #[test]
        fn spd_invariants(p in -2.0f64..2.0, q in -2.0f64..2.0, r in -2.0f64..2.0, s in -2.0f64..2.0) {
            let m = Sym2::new(
                p * p + q * q + 0.1,
                p * r + q * s,
                r * r + s * s + 0.1,
            );
            prop_assert!(m.is_spd());
            let inv = m.inverse();
            prop_assert!(inv.is_spd());
            prop_assert!((m.det() * inv.det() - 1.0).abs() < 1e-9);
            let l = m.cholesky().unwrap();
            prop_assert!((l.l11 * l.l11 - m.a).abs() < 1e-9);
            prop_assert!((l.l11 * l.l21 - m.b).abs() < 1e-9);
            prop_assert!((l.l21 * l.l21 + l.l22 * l.l22 - m.d).abs() < 1e-9);
        }
    }
}
