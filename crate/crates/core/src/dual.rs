//! Forward-mode dual numbers with a 3-wide tangent, layered on top of any
//! [`Real`] scalar.
//!
//! Evaluating a function of a 3D point with `Dual3<T>` inputs seeded with
//! the identity tangent yields the spatial gradient as `T` expressions. With
//! `T = Var` this is forward-over-reverse: the gradient components stay on
//! the tape, so quantities built from them (contact normals) remain
//! differentiable end to end.

use crate::math::Vec3;
use crate::scalar::Real;
use core::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug)]
pub struct Dual3<T> {
    pub v: T,
    pub dx: T,
    pub dy: T,
    pub dz: T,
}

impl<T: Real> Dual3<T> {
    pub fn constant(ctx: T, value: f64) -> Self {
        let z = ctx.lift(0.0);
        Dual3 { v: ctx.lift(value), dx: z, dy: z, dz: z }
    }

    pub fn passive(v: T) -> Self {
        let z = v.lift(0.0);
        Dual3 { v, dx: z, dy: z, dz: z }
    }

    /// Seeds a 3D point with the identity tangent basis.
    pub fn seed_point(p: Vec3<T>) -> [Dual3<T>; 3] {
        let o = p.x.lift(1.0);
        let z = p.x.lift(0.0);
        [
            Dual3 { v: p.x, dx: o, dy: z, dz: z },
            Dual3 { v: p.y, dx: z, dy: o, dz: z },
            Dual3 { v: p.z, dx: z, dy: z, dz: o },
        ]
    }

    pub fn grad(self) -> Vec3<T> {
        Vec3::new(self.dx, self.dy, self.dz)
    }

    fn map(self, v: T, d: T) -> Self {
        Dual3 { v, dx: self.dx * d, dy: self.dy * d, dz: self.dz * d }
    }
}

impl<T: Real> PartialEq for Dual3<T> {
    fn eq(&self, other: &Self) -> bool {
        self.v.primal() == other.v.primal()
    }
}

impl<T: Real> PartialOrd for Dual3<T> {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        self.v.primal().partial_cmp(&other.v.primal())
    }
}

impl<T: Real> Add for Dual3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual3 { v: self.v + o.v, dx: self.dx + o.dx, dy: self.dy + o.dy, dz: self.dz + o.dz }
    }
}

impl<T: Real> Sub for Dual3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual3 { v: self.v - o.v, dx: self.dx - o.dx, dy: self.dy - o.dy, dz: self.dz - o.dz }
    }
}

impl<T: Real> Mul for Dual3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual3 {
            v: self.v * o.v,
            dx: self.dx * o.v + o.dx * self.v,
            dy: self.dy * o.v + o.dy * self.v,
            dz: self.dz * o.v + o.dz * self.v,
        }
    }
}

impl<T: Real> Div for Dual3<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        let inv = o.v.recip();
        Dual3 {
            v,
            dx: (self.dx - o.dx * v) * inv,
            dy: (self.dy - o.dy * v) * inv,
            dz: (self.dz - o.dz * v) * inv,
        }
    }
}

impl<T: Real> Neg for Dual3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual3 { v: -self.v, dx: -self.dx, dy: -self.dy, dz: -self.dz }
    }
}

impl<T: Real> Add<f64> for Dual3<T> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual3 { v: self.v + c, ..self }
    }
}

impl<T: Real> Sub<f64> for Dual3<T> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual3 { v: self.v - c, ..self }
    }
}

impl<T: Real> Mul<f64> for Dual3<T> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual3 { v: self.v * c, dx: self.dx * c, dy: self.dy * c, dz: self.dz * c }
    }
}

impl<T: Real> Div<f64> for Dual3<T> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        let inv = 1.0 / c;
        Dual3 { v: self.v * inv, dx: self.dx * inv, dy: self.dy * inv, dz: self.dz * inv }
    }
}

impl<T: Real> Real for Dual3<T> {
    fn primal(self) -> f64 {
        self.v.primal()
    }

    fn lift(self, value: f64) -> Self {
        Dual3::constant(self.v, value)
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let d = if s.primal() == 0.0 { s.lift(0.0) } else { s.lift(0.5) / s };
        self.map(s, d)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.map(e, e)
    }

    fn ln(self) -> Self {
        self.map(self.v.ln(), self.v.recip())
    }

    fn sin(self) -> Self {
        self.map(self.v.sin(), self.v.cos())
    }

    fn cos(self) -> Self {
        self.map(self.v.cos(), -self.v.sin())
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.map(t, -t.sq() + 1.0)
    }

    fn abs(self) -> Self {
        let p = self.v.primal();
        let sign = if p > 0.0 {
            1.0
        } else if p < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map(self.v.abs(), self.v.lift(sign))
    }

    fn max_zero(self) -> Self {
        if self.v.primal() > 0.0 {
            self
        } else {
            Dual3::constant(self.v, 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T, z: T) -> T {
        (x * y + z.sq()).sqrt() + (x * 0.5).sin() * y.exp() - z.abs()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y, z) = (1.3, 0.7, -2.1);
        let [dx, dy, dz] = Dual3::seed_point(Vec3::new(x, y, z));
        let out = f(dx, dy, dz);
        let h = 1e-7;
        let g = [
            (f(x + h, y, z) - f(x - h, y, z)) / (2.0 * h),
            (f(x, y + h, z) - f(x, y - h, z)) / (2.0 * h),
            (f(x, y, z + h) - f(x, y, z - h)) / (2.0 * h),
        ];
        let got = out.grad();
        for (a, b) in [got.x, got.y, got.z].iter().zip(g) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert_eq!(out.v, f(x, y, z));
    }

    #[test]
    fn dual_over_tape_gives_second_order_terms() {
        // g(a) = d/dx [ (a*x)^2 ] at x0 = 3 equals 2*a^2*x0; its derivative
        // w.r.t. a is 4*a*x0.
        use crate::tape::Tape;
        let tape = Tape::new();
        let a = tape.var(1.5);
        let x = Dual3 { v: tape.constant(3.0), dx: tape.constant(1.0), dy: tape.constant(0.0), dz: tape.constant(0.0) };
        let ax = x * Dual3::passive(a);
        let out = ax * ax;
        let dfdx = out.dx; // 2 a^2 x
        assert!((dfdx.value() - 2.0 * 1.5 * 1.5 * 3.0).abs() < 1e-12);
        let g = tape.backward(dfdx);
        assert!((g.grad(a) - 4.0 * 1.5 * 3.0).abs() < 1e-12);
    }
}
