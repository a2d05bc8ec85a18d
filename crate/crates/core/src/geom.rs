//! Vectors, affine transforms, rays and the primitive intersection kernels
//! shared by every level of the traversal.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Returned when a transform with a (near) singular linear part is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("singular matrix (|det| = {det:e})")]
pub struct SingularMatrix {
    pub det: f64,
}

/// Smallest determinant magnitude accepted by [`Affine::inverse`].
pub const MIN_DETERMINANT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[inline]
pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);
    pub const ONE: Vec3 = vec3(1.0, 1.0, 1.0);
    pub const X: Vec3 = vec3(1.0, 0.0, 0.0);
    pub const Y: Vec3 = vec3(0.0, 1.0, 0.0);
    pub const Z: Vec3 = vec3(0.0, 0.0, 1.0);

    pub const fn splat(v: f64) -> Vec3 {
        vec3(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        vec3(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    /// Unit vector in the same direction. Zero stays zero.
    pub fn normalize(self) -> Vec3 {
        let len = self.length();
        if len > 0.0 {
            self / len
        } else {
            self
        }
    }

    #[inline]
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        vec3(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    #[inline]
    pub fn div_elem(self, o: Vec3) -> Vec3 {
        vec3(self.x / o.x, self.y / o.y, self.z / o.z)
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        vec3(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        vec3(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn abs(self) -> Vec3 {
        vec3(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_element(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn min_element(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Any unit vector orthogonal to `self` (which must be non-zero).
    pub fn any_orthogonal(self) -> Vec3 {
        let a = self.abs();
        let helper = if a.x <= a.y && a.x <= a.z {
            Vec3::X
        } else if a.y <= a.z {
            Vec3::Y
        } else {
            Vec3::Z
        };
        self.cross(helper).normalize()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

#[inline]
pub const fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub fn min(self, o: Vec2) -> Vec2 {
        vec2(self.x.min(o.x), self.y.min(o.y))
    }

    pub fn max(self, o: Vec2) -> Vec2 {
        vec2(self.x.max(o.x), self.y.max(o.y))
    }

    pub fn perp_dot(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        vec2(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        vec2(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        vec2(self.x * s, self.y * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [Vec3; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [Vec3::X, Vec3::Y, Vec3::Z],
    };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 { rows: [r0, r1, r2] }
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3::from_rows(c0, c1, c2).transpose()
    }

    pub fn from_diagonal(d: Vec3) -> Mat3 {
        Mat3::from_rows(vec3(d.x, 0.0, 0.0), vec3(0.0, d.y, 0.0), vec3(0.0, 0.0, d.z))
    }

    pub fn col(&self, i: usize) -> Vec3 {
        vec3(self.rows[0][i], self.rows[1][i], self.rows[2][i])
    }

    pub fn transpose(&self) -> Mat3 {
        Mat3::from_rows(self.col(0), self.col(1), self.col(2))
    }

    pub fn determinant(&self) -> f64 {
        self.rows[0].dot(self.rows[1].cross(self.rows[2]))
    }

    pub fn inverse(&self) -> Result<Mat3, SingularMatrix> {
        let [r0, r1, r2] = self.rows;
        let c0 = r1.cross(r2);
        let c1 = r2.cross(r0);
        let c2 = r0.cross(r1);
        let det = r0.dot(c0);
        if !(det.abs() > MIN_DETERMINANT) {
            return Err(SingularMatrix { det });
        }
        let inv_det = 1.0 / det;
        Ok(Mat3::from_cols(c0 * inv_det, c1 * inv_det, c2 * inv_det))
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        vec3(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let c = [o.col(0), o.col(1), o.col(2)];
        Mat3::from_cols(self.mul_vec(c[0]), self.mul_vec(c[1]), self.mul_vec(c[2]))
    }

    /// Euclidean norm of each row; the half-extent of the image of a unit ball.
    pub fn row_norms(&self) -> Vec3 {
        vec3(
            self.rows[0].length(),
            self.rows[1].length(),
            self.rows[2].length(),
        )
    }
}

/// Unit quaternion rotation, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a quaternion from `[w, x, y, z]` and normalizes it; `None` for
    /// a zero or non-finite input.
    pub fn from_wxyz(q: [f64; 4]) -> Option<Quat> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !(n > 1e-12) || !n.is_finite() {
            return None;
        }
        Some(Quat {
            w: q[0] / n,
            x: q[1] / n,
            y: q[2] / n,
            z: q[3] / n,
        })
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let a = axis.normalize();
        let (s, c) = (angle * 0.5).sin_cos();
        Quat {
            w: c,
            x: a.x * s,
            y: a.y * s,
            z: a.z * s,
        }
    }

    /// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
    pub fn from_arc(from: Vec3, to: Vec3) -> Quat {
        let from = from.normalize();
        let to = to.normalize();
        let d = from.dot(to);
        if d >= 1.0 - 1e-15 {
            return Quat::IDENTITY;
        }
        if d <= -1.0 + 1e-15 {
            return Quat::from_axis_angle(from.any_orthogonal(), std::f64::consts::PI);
        }
        let c = from.cross(to);
        Quat::from_wxyz([1.0 + d, c.x, c.y, c.z]).unwrap_or(Quat::IDENTITY)
    }

    pub fn to_mat3(self) -> Mat3 {
        let Quat { w, x, y, z } = self;
        Mat3::from_rows(
            vec3(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ),
            vec3(
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ),
            vec3(
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ),
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_mat3().mul_vec(v)
    }
}

/// Hamilton product: `a * b` rotates by `b` first.
impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }
}

/// `p ↦ linear · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        linear: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(linear: Mat3, translation: Vec3) -> Affine {
        Affine {
            linear,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Affine {
        Affine::new(Mat3::IDENTITY, t)
    }

    pub fn from_linear(linear: Mat3) -> Affine {
        Affine::new(linear, Vec3::ZERO)
    }

    pub fn from_rotation(q: Quat) -> Affine {
        Affine::from_linear(q.to_mat3())
    }

    pub fn from_scale(s: Vec3) -> Affine {
        Affine::from_linear(Mat3::from_diagonal(s))
    }

    /// Translation ∘ rotation ∘ uniform scale.
    pub fn from_trs(t: Vec3, r: Quat, s: f64) -> Affine {
        let lin = r.to_mat3().mul_mat(&Mat3::from_diagonal(Vec3::splat(s)));
        Affine::new(lin, t)
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.linear.mul_vec(p) + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.linear.mul_vec(v)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Affine) -> Affine {
        Affine::new(
            self.linear.mul_mat(&other.linear),
            self.transform_point(other.translation),
        )
    }

    pub fn inverse(&self) -> Result<Affine, SingularMatrix> {
        let inv = self.linear.inverse()?;
        Ok(Affine::new(inv, -inv.mul_vec(self.translation)))
    }

    /// Maps the origin by the full transform and the direction by the linear
    /// part only. The direction is not renormalized, so a hit at parameter
    /// `t` in the mapped ray is the same point as `t` on the original ray.
    #[inline]
    pub fn transform_ray(&self, ray: &Ray) -> Ray {
        Ray {
            origin: self.transform_point(ray.origin),
            direction: self.transform_vector(ray.direction),
            t_min: ray.t_min,
            t_max: ray.t_max,
        }
    }

    /// Transforms a covector (surface normal) by the inverse transpose and
    /// renormalizes.
    pub fn transform_normal(&self, n: Vec3) -> Result<Vec3, SingularMatrix> {
        let inv = self.linear.inverse()?;
        Ok(inv.transpose().mul_vec(n).normalize())
    }

    pub fn approx_eq(&self, o: &Affine, tol: f64) -> bool {
        (0..3).all(|r| {
            let d = self.linear.rows[r] - o.linear.rows[r];
            d.abs().max_element() <= tol
        }) && (self.translation - o.translation).abs().max_element() <= tol
    }
}

pub fn affine_compose(a: &Affine, b: &Affine) -> Affine {
    a.compose(b)
}

pub fn affine_invert(a: &Affine) -> Result<Affine, SingularMatrix> {
    a.inverse()
}

pub fn transform_ray(inv: &Affine, ray: &Ray) -> Ray {
    inv.transform_ray(ray)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        Ray {
            origin,
            direction,
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    pub fn with_interval(mut self, t_min: f64, t_max: f64) -> Ray {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Ray {
        self.t_max = t_max;
        self
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn is_valid(&self) -> bool {
        self.direction.length_squared() > 0.0 && self.t_min >= 0.0 && self.t_min < self.t_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub t_enter: f64,
    pub t_exit: f64,
}

impl Interval {
    pub fn new(t_enter: f64, t_exit: f64) -> Interval {
        Interval { t_enter, t_exit }
    }

    /// Whether this interval shares at least one point with `[lo, hi]`.
    #[inline]
    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.t_enter <= hi && self.t_exit >= lo
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Option<Interval> {
        let a = self.t_enter.max(lo);
        let b = self.t_exit.min(hi);
        (a <= b).then_some(Interval::new(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// The empty box: union identity, intersects nothing.
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        Aabb { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Aabb {
        Aabb::new(center - half, center + half)
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Aabb {
        points
            .into_iter()
            .fold(Aabb::EMPTY, |b, p| Aabb::new(b.min.min(p), b.max.max(p)))
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y && self.min.z <= self.max.z)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn grow(&self, p: Vec3) -> Aabb {
        Aabb::new(self.min.min(p), self.max.max(p))
    }

    pub fn expand(&self, amount: f64) -> Aabb {
        Aabb::new(self.min - Vec3::splat(amount), self.max + Vec3::splat(amount))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.extent().length()
        }
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        o.is_empty() || (self.contains_point(o.min) && self.contains_point(o.max))
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            vec3(a.x, a.y, a.z),
            vec3(b.x, a.y, a.z),
            vec3(a.x, b.y, a.z),
            vec3(b.x, b.y, a.z),
            vec3(a.x, a.y, b.z),
            vec3(b.x, a.y, b.z),
            vec3(a.x, b.y, b.z),
            vec3(b.x, b.y, b.z),
        ]
    }

    /// Bounds of the image of this box under `m`.
    pub fn transformed(&self, m: &Affine) -> Aabb {
        if self.is_empty() {
            return *self;
        }
        let c = m.transform_point(self.center());
        let h = self.extent() * 0.5;
        let abs_rows = [
            m.linear.rows[0].abs(),
            m.linear.rows[1].abs(),
            m.linear.rows[2].abs(),
        ];
        let half = vec3(abs_rows[0].dot(h), abs_rows[1].dot(h), abs_rows[2].dot(h));
        Aabb::from_center_half(c, half)
    }
}

/// Slab-method entry/exit of the ray's line against `b`, before clamping to
/// the ray's own interval. `None` when the slabs are disjoint.
pub fn ray_aabb(ray: &Ray, b: &Aabb) -> Option<Interval> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let o = ray.origin[a];
        let d = ray.direction[a];
        if d == 0.0 {
            if o < b.min[a] || o > b.max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let mut near = (b.min[a] - o) * inv;
        let mut far = (b.max[a] - o) * inv;
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    Some(Interval::new(t0, t1))
}

/// Smallest `t` in `[t_min, t_max]` where the ray meets the sphere surface.
pub fn ray_sphere(ray: &Ray, center: Vec3, radius: f64) -> Option<f64> {
    let oc = ray.origin - center;
    let a = ray.direction.length_squared();
    let half_b = oc.dot(ray.direction);
    let c = oc.length_squared() - radius * radius;
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    let (r0, r1) = if disc == 0.0 {
        let r = -half_b / a;
        (r, r)
    } else {
        // Numerically stable root pair.
        let q = -(half_b + half_b.signum() * disc.sqrt());
        if q == 0.0 {
            // half_b == 0 and c == 0: origin on the surface, direction tangent.
            (0.0, 0.0)
        } else {
            let (x, y) = (q / a, c / q);
            (x.min(y), x.max(y))
        }
    };
    if r0 >= ray.t_min && r0 <= ray.t_max {
        Some(r0)
    } else if r1 >= ray.t_min && r1 <= ray.t_max {
        Some(r1)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleHit {
    pub t: f64,
    /// Weights of `(v0, v1, v2)`.
    pub barycentrics: (f64, f64, f64),
    pub front_facing: bool,
}

/// Barycentric tolerance that closes cracks between edge-adjacent triangles;
/// double reports on a shared edge are resolved by the caller's index rule.
const EDGE_EPS: f64 = 1e-10;

/// Möller–Trumbore with an inclusive edge band. The geometric normal follows
/// counter-clockwise winding; `front_facing` means the ray travels against it.
pub fn ray_triangle(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<TriangleHit> {
    ray_triangle_line(ray, v0, v1, v2).filter(|h| h.t >= ray.t_min && h.t <= ray.t_max)
}

/// As [`ray_triangle`] but over the whole line, ignoring the ray interval.
pub fn ray_triangle_line(ray: &Ray, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<TriangleHit> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    let scale = e1.length() * e2.length() * ray.direction.length();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(p) * inv_det;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv_det;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    if !t.is_finite() {
        return None;
    }
    let normal = e1.cross(e2);
    Some(TriangleHit {
        t,
        barycentrics: (1.0 - u - v, u, v),
        front_facing: ray.direction.dot(normal) < 0.0,
    })
}

pub fn barycentric_interp(weights: (f64, f64, f64), a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    a * weights.0 + b * weights.1 + c * weights.2
}

/// Barycentric weights of `p` with respect to the 2D triangle `(a, b, c)`.
/// Points outside the triangle get weights outside `[0, 1]`. `None` when the
/// triangle has zero area.
pub fn barycentric_2d(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let det = e1.perp_dot(e2);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let d = p - a;
    let w1 = d.perp_dot(e2) / det;
    let w2 = e1.perp_dot(d) / det;
    Some((1.0 - w1 - w2, w1, w2))
}

/// Oriented plane `normal · p = offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn through(normal: Vec3, point: Vec3) -> Plane {
        Plane {
            normal,
            offset: normal.dot(point),
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// The same plane expressed in the source space of `m`, so that
    /// `self.signed_distance(m(p)) == pulled.signed_distance(p)`.
    pub fn pull_back(&self, m: &Affine) -> Plane {
        Plane {
            normal: m.linear.transpose().mul_vec(self.normal),
            offset: self.offset - self.normal.dot(m.translation),
        }
    }
}
