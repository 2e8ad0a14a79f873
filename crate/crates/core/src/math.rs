//! Minimal 3D vector/matrix types generic over the [`Real`] scalar.
//!
//! Deliberately small: only the operations the simulator needs, written so
//! the evaluation order is identical on the primal and taped paths.

use crate::scalar::Real;
use core::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

pub type Vec3f = Vec3<f64>;

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    /// Zero vector in the same context as `ctx` (same tape for `Var`).
    pub fn zero_like(ctx: T) -> Self {
        let z = ctx.lift(0.0);
        Vec3 { x: z, y: z, z }
    }

    pub fn from_f64(ctx: T, v: Vec3<f64>) -> Self {
        Vec3 { x: ctx.lift(v.x), y: ctx.lift(v.y), z: ctx.lift(v.z) }
    }

    pub fn primal(self) -> Vec3<f64> {
        Vec3 { x: self.x.primal(), y: self.y.primal(), z: self.z.primal() }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    /// Euclidean norm; derivative 0 at the origin (sqrt convention).
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Vec3 { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn is_finite(self) -> bool {
        self.x.primal().is_finite() && self.y.primal().is_finite() && self.z.primal().is_finite()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<f64> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Column-major 3x3 matrix: `cols[j]` is column j.
#[derive(Clone, Copy, Debug)]
pub struct Mat3<T> {
    pub cols: [Vec3<T>; 3],
}

impl<T: Real> Mat3<T> {
    pub fn from_cols(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Mat3 { cols: [c0, c1, c2] }
    }

    pub fn identity_like(ctx: T) -> Self {
        let o = ctx.lift(1.0);
        let z = ctx.lift(0.0);
        Mat3::from_cols(Vec3::new(o, z, z), Vec3::new(z, o, z), Vec3::new(z, z, o))
    }

    pub fn from_f64(ctx: T, m: Mat3<f64>) -> Self {
        Mat3::from_cols(
            Vec3::from_f64(ctx, m.cols[0]),
            Vec3::from_f64(ctx, m.cols[1]),
            Vec3::from_f64(ctx, m.cols[2]),
        )
    }

    pub fn mul_vec(self, v: Vec3<T>) -> Vec3<T> {
        self.cols[0].scale(v.x) + self.cols[1].scale(v.y) + self.cols[2].scale(v.z)
    }

    pub fn mul_mat(self, o: Mat3<T>) -> Mat3<T> {
        Mat3::from_cols(self.mul_vec(o.cols[0]), self.mul_vec(o.cols[1]), self.mul_vec(o.cols[2]))
    }

    pub fn transpose(self) -> Mat3<T> {
        let [a, b, c] = self.cols;
        Mat3::from_cols(
            Vec3::new(a.x, b.x, c.x),
            Vec3::new(a.y, b.y, c.y),
            Vec3::new(a.z, b.z, c.z),
        )
    }

    /// Cofactor matrix: `cof(F) = det(F) * F^{-T}` without the division.
    pub fn cofactor(self) -> Mat3<T> {
        let [a, b, c] = self.cols;
        Mat3::from_cols(b.cross(c), c.cross(a), a.cross(b))
    }

    pub fn det(self) -> T {
        let [a, b, c] = self.cols;
        a.dot(b.cross(c))
    }

    /// Sum of squared entries, `tr(F^T F)`.
    pub fn frobenius_sq(self) -> T {
        self.cols[0].norm_sq() + self.cols[1].norm_sq() + self.cols[2].norm_sq()
    }

    pub fn scale(self, s: T) -> Mat3<T> {
        Mat3::from_cols(self.cols[0].scale(s), self.cols[1].scale(s), self.cols[2].scale(s))
    }

    pub fn add(self, o: Mat3<T>) -> Mat3<T> {
        Mat3::from_cols(self.cols[0] + o.cols[0], self.cols[1] + o.cols[1], self.cols[2] + o.cols[2])
    }
}

impl<T: Real> Vec3<T> {
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
}

impl Mat3<f64> {
    /// Inverse for precomputed rest matrices (primal only).
    pub fn inverse(self) -> Option<Mat3<f64>> {
        let det = self.det();
        if det.abs() < 1e-30 {
            return None;
        }
        let cof = self.cofactor();
        // inv = cof^T / det
        Some(cof.transpose().scale(1.0 / det))
    }
}
