//! Analytic signed distance field of the knife blade, its spatial gradient,
//! prescribed pose, and the Frank-Wolfe closest-point search along an edge.
//!
//! The blade cross-section is a six-vertex profile in the local x-y plane: a
//! thin `edge_dim`-wide band of height `tip_height` at the cutting edge that
//! widens linearly to `spine_dim` over `spine_height`. The exact 2D polygon
//! SDF is extruded along z over `depth`, which rounds outside corners
//! exactly. The local origin sits at the midpoint of the cutting edge, so
//! `pose.position.y` is the height of the edge above the ground plane.

use crate::dual::Dual3;
use crate::error::{Result, SimError};
use crate::math::{Vec3, Vec3f};
use crate::scalar::Real;

/// Blade dimensions (meters). Defaults follow the standard kitchen-knife
/// setup used throughout the experiments.
#[derive(Clone, Copy, Debug)]
pub struct KnifeGeometry {
    /// Width of the cutting edge (lower end of the profile).
    pub edge_dim: f64,
    /// Width of the spine (upper end of the profile).
    pub spine_dim: f64,
    /// Height of the widening section between edge band and spine.
    pub spine_height: f64,
    /// Height of the constant-width band at the cutting edge.
    pub tip_height: f64,
    /// Blade length along z.
    pub depth: f64,
    /// Ignore the z extent (used by the motion-control experiment, which
    /// treats the blade as infinitely long).
    pub infinite_blade: bool,
}

impl Default for KnifeGeometry {
    fn default() -> Self {
        KnifeGeometry {
            edge_dim: 0.08e-3,
            spine_dim: 2.0e-3,
            spine_height: 40.0e-3,
            tip_height: 0.04e-3,
            depth: 150.0e-3,
            infinite_blade: false,
        }
    }
}

impl KnifeGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("edge_dim", self.edge_dim),
            ("spine_dim", self.spine_dim),
            ("spine_height", self.spine_height),
            ("tip_height", self.tip_height),
            ("depth", self.depth),
        ];
        for (name, v) in dims {
            if !(v > 0.0) {
                return Err(SimError::Config(alloc::format!("knife {name} must be positive")));
            }
        }
        if self.edge_dim >= self.spine_dim {
            return Err(SimError::Config("knife edge_dim must be smaller than spine_dim".into()));
        }
        Ok(())
    }

    pub fn total_height(&self) -> f64 {
        self.tip_height + self.spine_height
    }

    /// Cross-section profile, counter-clockwise.
    fn profile(&self) -> [[f64; 2]; 6] {
        let e = 0.5 * self.edge_dim;
        let s = 0.5 * self.spine_dim;
        let ht = self.tip_height;
        let h = self.total_height();
        [[-e, 0.0], [e, 0.0], [e, ht], [s, h], [-s, h], [-e, ht]]
    }
}

/// Knife pose: translation plus prescribed linear velocity. Rotation is
/// fixed with the blade plane aligned to the cutting plane.
#[derive(Clone, Copy, Debug)]
pub struct KnifePose<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
}

impl KnifePose<f64> {
    pub fn at_rest(position: Vec3f) -> Self {
        KnifePose { position, velocity: Vec3::new(0.0, 0.0, 0.0) }
    }
}

fn clamp01<S: Real>(t: S) -> S {
    if t.primal() <= 0.0 {
        t.lift(0.0)
    } else if t.primal() >= 1.0 {
        t.lift(1.0)
    } else {
        t
    }
}

/// Exact signed distance to a simple polygon (negative inside), evaluated
/// on local 2D coordinates.
fn polygon_sdf<S: Real>(poly: &[[f64; 2]; 6], px: S, py: S) -> S {
    let mut d = (px - poly[0][0]).sq() + (py - poly[0][1]).sq();
    let mut sign = 1.0f64;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (poly[i], poly[j]);
        let (ex, ey) = (vj[0] - vi[0], vj[1] - vi[1]);
        let wx = px - vi[0];
        let wy = py - vi[1];
        let t = clamp01((wx * ex + wy * ey) * (1.0 / (ex * ex + ey * ey)));
        let bx = wx - t * ex;
        let by = wy - t * ey;
        d = d.min_val(bx.sq() + by.sq());
        // Crossing-parity winding test on primal values.
        let c0 = py.primal() >= vi[1];
        let c1 = py.primal() < vj[1];
        let c2 = ex * wy.primal() > ey * wx.primal();
        if (c0 && c1 && c2) || (!c0 && !c1 && !c2) {
            sign = -sign;
        }
        j = i;
    }
    d.sqrt() * sign
}

/// Exact SDF of the extruded profile.
fn extrude<S: Real>(d2: S, z: S, half_depth: f64) -> S {
    let wz = z.abs() - half_depth;
    let inside = d2.max_val(wz).min_val(d2.lift(0.0));
    let ox = d2.max_zero();
    let oz = wz.max_zero();
    inside + (ox.sq() + oz.sq()).sqrt()
}

/// Signed distance from `p` to the blade surface: negative inside, zero on
/// the boundary, positive outside. 1-Lipschitz.
pub fn sdf_eval<T: Real>(geom: &KnifeGeometry, pose: &KnifePose<T>, p: Vec3<T>) -> T {
    let q = p - pose.position;
    let d2 = polygon_sdf(&geom.profile(), q.x, q.y);
    if geom.infinite_blade {
        d2
    } else {
        extrude(d2, q.z, 0.5 * geom.depth)
    }
}

/// SDF value together with its spatial gradient, computed by forward-mode
/// duals through the same expression as [`sdf_eval`] (so the two always
/// agree piecewise). The gradient has unit norm away from the medial axis;
/// at an exactly singular point the fallback `+y` is returned and flagged.
pub fn sdf_with_grad<T: Real>(
    geom: &KnifeGeometry,
    pose: &KnifePose<T>,
    p: Vec3<T>,
) -> (T, Vec3<T>, bool) {
    let [px, py, pz] = Dual3::seed_point(p);
    let dual_pose = KnifePose {
        position: Vec3::new(
            Dual3::passive(pose.position.x),
            Dual3::passive(pose.position.y),
            Dual3::passive(pose.position.z),
        ),
        velocity: Vec3::new(
            Dual3::passive(pose.velocity.x),
            Dual3::passive(pose.velocity.y),
            Dual3::passive(pose.velocity.z),
        ),
    };
    let out = sdf_eval(geom, &dual_pose, Vec3::new(px, py, pz));
    let g = out.grad();
    let norm_sq =
        g.x.primal() * g.x.primal() + g.y.primal() * g.y.primal() + g.z.primal() * g.z.primal();
    if norm_sq < 0.25 {
        let ctx = p.x;
        (out.v, Vec3::new(ctx.lift(0.0), ctx.lift(1.0), ctx.lift(0.0)), true)
    } else {
        (out.v, g, false)
    }
}

/// Gradient only; see [`sdf_with_grad`] for the singular-point convention.
pub fn sdf_grad<T: Real>(geom: &KnifeGeometry, pose: &KnifePose<T>, p: Vec3<T>) -> (Vec3<T>, bool) {
    let (_, g, degenerate) = sdf_with_grad(geom, pose, p);
    (g, degenerate)
}

/// Frank-Wolfe search for the barycentric coordinate `u` on the segment
/// `(p1, p2)` with the smallest signed distance to the blade.
///
/// `u` starts at 1/2; each iteration moves toward the endpoint indicated by
/// the sign of the directional derivative with step `2/(2+i)`. The iterate
/// is a convex combination throughout, so `u` stays in `[0, 1]`. Because the
/// update depends on the inputs only through branch signs, `u` is piecewise
/// constant and treated as a constant by the taped path.
pub fn closest_point_frank_wolfe(
    geom: &KnifeGeometry,
    pose: &KnifePose<f64>,
    p1: Vec3f,
    p2: Vec3f,
    max_iters: usize,
) -> f64 {
    let dir = p2 - p1;
    let mut u = 0.5;
    for i in 0..max_iters {
        let p = p1 + dir * u;
        let (g, _) = sdf_grad(geom, pose, p);
        let delta = g.dot(dir);
        let s = if delta < 0.0 { 1.0 } else { 0.0 };
        let gamma = 2.0 / (2.0 + i as f64);
        u += gamma * (s - u);
    }
    u
}

pub const DEFAULT_FW_ITERS: usize = 20;
