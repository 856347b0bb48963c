//! 2×2 matrix algebra and the geometry of the minors space R⁵ = R^{2×2} × R.
//!
//! Matrices use the trace inner product `a · b = tr(aᵀ b)` and the Frobenius
//! norm. A [`MinorsPoint`] pairs a matrix with a scalar and carries the
//! Euclidean structure `(ξ, s) · (η, t) = ξ · η + s t`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Dimension of the minors space for 2×2 matrices.
pub const MINORS_DIM: usize = 5;

/// A real 2×2 matrix, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub e11: f64,
    pub e12: f64,
    pub e21: f64,
    pub e22: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    /// `e₁ ⊗ e₁`, the generator of the line projected out by [`bracket`].
    pub const E11: Mat2 = Mat2::new(1.0, 0.0, 0.0, 0.0);
    pub const E22: Mat2 = Mat2::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(e11: f64, e12: f64, e21: f64, e22: f64) -> Self {
        Mat2 { e11, e12, e21, e22 }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, b)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Mat2::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.e11, self.e12, self.e21, self.e22]
    }

    /// Rotation by `angle` radians, an element of SO(2).
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn det(self) -> f64 {
        det2(self)
    }

    pub fn cof(self) -> Mat2 {
        cof2(self)
    }

    pub fn dot(self, other: Mat2) -> f64 {
        inner_mat(self, other)
    }

    pub fn norm_sq(self) -> f64 {
        inner_mat(self, self)
    }

    /// Frobenius norm.
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.e11 + o.e11, self.e12 + o.e12, self.e21 + o.e21, self.e22 + o.e22)
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.e11 - o.e11, self.e12 - o.e12, self.e21 - o.e21, self.e22 - o.e22)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.e11, -self.e12, -self.e21, -self.e22)
    }
}

impl Mul<Mat2> for f64 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        Mat2::new(self * m.e11, self * m.e12, self * m.e21, self * m.e22)
    }
}

/// A point `X = (X̂, X′)` of the minors space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MinorsPoint {
    pub hat: Mat2,
    pub last: f64,
}

impl MinorsPoint {
    pub const ZERO: MinorsPoint = MinorsPoint { hat: Mat2::ZERO, last: 0.0 };

    pub const fn new(hat: Mat2, last: f64) -> Self {
        MinorsPoint { hat, last }
    }

    pub fn from_array(a: [f64; MINORS_DIM]) -> Self {
        MinorsPoint::new(Mat2::new(a[0], a[1], a[2], a[3]), a[4])
    }

    pub fn to_array(self) -> [f64; MINORS_DIM] {
        [self.hat.e11, self.hat.e12, self.hat.e21, self.hat.e22, self.last]
    }

    pub fn dot(self, other: MinorsPoint) -> f64 {
        inner5(self, other)
    }

    pub fn norm(self) -> f64 {
        inner5(self, self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.hat.is_finite() && self.last.is_finite()
    }
}

impl Add for MinorsPoint {
    type Output = MinorsPoint;
    fn add(self, o: MinorsPoint) -> MinorsPoint {
        MinorsPoint::new(self.hat + o.hat, self.last + o.last)
    }
}

impl AddAssign for MinorsPoint {
    fn add_assign(&mut self, o: MinorsPoint) {
        *self = *self + o;
    }
}

impl Sub for MinorsPoint {
    type Output = MinorsPoint;
    fn sub(self, o: MinorsPoint) -> MinorsPoint {
        MinorsPoint::new(self.hat - o.hat, self.last - o.last)
    }
}

impl Neg for MinorsPoint {
    type Output = MinorsPoint;
    fn neg(self) -> MinorsPoint {
        MinorsPoint::new(-self.hat, -self.last)
    }
}

impl Mul<MinorsPoint> for f64 {
    type Output = MinorsPoint;
    fn mul(self, p: MinorsPoint) -> MinorsPoint {
        MinorsPoint::new(self * p.hat, self * p.last)
    }
}

pub fn det2(m: Mat2) -> f64 {
    m.e11 * m.e22 - m.e12 * m.e21
}

/// Cofactor matrix; `det(m + h) = det m + cof(m) · h + det h`.
pub fn cof2(m: Mat2) -> Mat2 {
    Mat2::new(m.e22, -m.e21, -m.e12, m.e11)
}

pub fn inner_mat(a: Mat2, b: Mat2) -> f64 {
    a.e11 * b.e11 + a.e12 * b.e12 + a.e21 * b.e21 + a.e22 * b.e22
}

pub fn inner5(p: MinorsPoint, q: MinorsPoint) -> f64 {
    inner_mat(p.hat, q.hat) + p.last * q.last
}

/// `a ⊗ b`, the matrix with entries `aᵢ bⱼ`.
pub fn outer(a: [f64; 2], b: [f64; 2]) -> Mat2 {
    Mat2::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

/// Orthogonal projection removing the `e₁ ⊗ e₁` component.
pub fn bracket(m: Mat2) -> Mat2 {
    Mat2 { e11: 0.0, ..m }
}

/// The minors lift `ξ ↦ (ξ, det ξ)`.
pub fn lift(m: Mat2) -> MinorsPoint {
    MinorsPoint::new(m, det2(m))
}
