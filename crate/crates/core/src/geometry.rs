//! Rigid transforms, rays and axis-aligned boxes.

use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform with uniform scale: `p' = rotation * (scale * p) + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRecord", into = "TransformRecord")]
pub struct Transform {
    pub translation: DVec3,
    pub rotation: DQuat,
    pub scale: f64,
}

/// On-disk form; rotation is a unit quaternion stored `w, x, y, z`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRecord {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default = "identity_wxyz")]
    rotation: [f64; 4],
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<TransformRecord> for Transform {
    type Error = Error;

    fn try_from(r: TransformRecord) -> Result<Self> {
        let [w, x, y, z] = r.rotation;
        let q = DQuat::from_xyzw(x, y, z, w);
        if !q.is_finite() || (q.length() - 1.0).abs() > 1e-6 {
            return Err(Error::field("rotation", "must be a unit quaternion (w, x, y, z)"));
        }
        if !(r.scale.is_finite() && r.scale > 0.0) {
            return Err(Error::field("scale", "must be positive"));
        }
        if !r.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::field("translation", "must be finite"));
        }
        Ok(Transform {
            translation: DVec3::from(r.translation),
            // already-unit input stays bit-identical so records round-trip
            rotation: if (q.length_squared() - 1.0).abs() <= 1e-12 { q } else { q.normalize() },
            scale: r.scale,
        })
    }
}

impl From<Transform> for TransformRecord {
    fn from(t: Transform) -> Self {
        TransformRecord {
            translation: t.translation.to_array(),
            rotation: [t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z],
            scale: t.scale,
        }
    }
}

impl Default for Transform {
    fn default() -> Self {
        Transform::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        translation: DVec3::ZERO,
        rotation: DQuat::IDENTITY,
        scale: 1.0,
    };

    pub fn new(translation: DVec3, rotation: DQuat, scale: f64) -> Self {
        Transform {
            translation,
            rotation,
            scale,
        }
    }

    pub fn from_translation(translation: DVec3) -> Self {
        Transform {
            translation,
            ..Transform::IDENTITY
        }
    }

    pub fn point(&self, p: DVec3) -> DVec3 {
        self.rotation * (p * self.scale) + self.translation
    }

    pub fn vector(&self, v: DVec3) -> DVec3 {
        self.rotation * v
    }

    pub fn inverse_point(&self, p: DVec3) -> DVec3 {
        (self.rotation.inverse() * (p - self.translation)) / self.scale
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: DVec3,
    pub dir: DVec3,
}

impl Ray {
    pub fn new(origin: DVec3, dir: DVec3) -> Self {
        Ray { origin, dir }
    }

    pub fn at(&self, t: f64) -> DVec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: DVec3::splat(f64::INFINITY),
        max: DVec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: DVec3, max: DVec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_points<I: IntoIterator<Item = DVec3>>(points: I) -> Self {
        points.into_iter().fold(Aabb::EMPTY, |b, p| b.grow(p))
    }

    pub fn grow(self, p: DVec3) -> Self {
        Aabb {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    pub fn union(self, o: Aabb) -> Self {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn center(&self) -> DVec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> DVec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.min.cmple(o.min).all() && self.max.cmpge(o.max).all()
    }

    pub fn contains_point(&self, p: DVec3) -> bool {
        self.min.cmple(p).all() && self.max.cmpge(p).all()
    }

    /// Closed-interval overlap test; touching boxes intersect.
    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.cmple(o.max).all() && o.min.cmple(self.max).all()
    }

    pub fn corners(&self) -> [DVec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            DVec3::new(a.x, a.y, a.z),
            DVec3::new(b.x, a.y, a.z),
            DVec3::new(a.x, b.y, a.z),
            DVec3::new(b.x, b.y, a.z),
            DVec3::new(a.x, a.y, b.z),
            DVec3::new(b.x, a.y, b.z),
            DVec3::new(a.x, b.y, b.z),
            DVec3::new(b.x, b.y, b.z),
        ]
    }

    pub fn transformed(&self, t: &Transform) -> Aabb {
        Aabb::from_points(self.corners().into_iter().map(|c| t.point(c)))
    }

    /// Conservative slab test returning the entry distance if the ray meets
    /// the box within `[t_min, t_max]`. The exit distance is inflated by a
    /// few ulps so that triangles lying on a face are never culled.
    pub fn hit(&self, origin: DVec3, inv_dir: DVec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for axis in 0..3 {
            let mut near = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let mut far = (self.max[axis] - origin[axis]) * inv_dir[axis];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            far *= 1.0 + 4.0 * f64::EPSILON;
            // NaN (0 * inf) leaves the interval untouched
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Möller–Trumbore ray/triangle test. Returns `(t, b1, b2)` for hits with
/// `t > t_min`; both faces are hit.
#[inline]
pub fn intersect_triangle(ray: &Ray, v0: DVec3, e1: DVec3, e2: DVec3, t_min: f64) -> Option<(f64, f64, f64)> {
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v0;
    let b1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(e1);
    let b2 = ray.dir.dot(q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > t_min && t.is_finite() {
        Some((t, b1, b2))
    } else {
        None
    }
}

/// Separating-axis triangle/box overlap test.
pub fn triangle_overlaps_box(tri: [DVec3; 3], b: &Aabb) -> bool {
    let c = b.center();
    let h = b.extent() * 0.5;
    let v = [tri[0] - c, tri[1] - c, tri[2] - c];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let axes_box = [DVec3::X, DVec3::Y, DVec3::Z];

    let separated = |axis: DVec3| -> bool {
        if axis.length_squared() < 1e-24 {
            return false;
        }
        let p = [axis.dot(v[0]), axis.dot(v[1]), axis.dot(v[2])];
        let r = h.x * axis.x.abs() + h.y * axis.y.abs() + h.z * axis.z.abs();
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        lo > r || hi < -r
    };

    for a in axes_box {
        for edge in e {
            if separated(a.cross(edge)) {
                return false;
            }
        }
        if separated(a) {
            return false;
        }
    }
    !separated(e[0].cross(e[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_round_trip() {
        let t = Transform::new(
            DVec3::new(1.0, -2.0, 0.5),
            DQuat::from_euler(glam::EulerRot::XYZ, 0.3, -1.1, 2.0),
            2.5,
        );
        let p = DVec3::new(0.2, 0.7, -3.0);
        assert!((t.inverse_point(t.point(p)) - p).length() < 1e-12);
    }

    #[test]
    fn transform_json_is_wxyz() {
        let t: Transform =
            serde_json::from_str(r#"{"translation":[1,2,3],"rotation":[1,0,0,0],"scale":2}"#)
                .unwrap();
        assert_eq!(t.rotation, DQuat::IDENTITY);
        let bad = serde_json::from_str::<Transform>(r#"{"rotation":[2,0,0,0]}"#);
        assert!(bad.is_err());
        let neg = serde_json::from_str::<Transform>(r#"{"scale":-1}"#);
        assert!(neg.is_err());
    }

    #[test]
    fn slab_hits_face_aligned_ray() {
        let b = Aabb::new(DVec3::ZERO, DVec3::ONE);
        let dir = DVec3::new(0.0, 0.0, 1.0);
        let inv = dir.recip();
        assert!(b.hit(DVec3::new(0.0, 0.5, -1.0), inv, 0.0, f64::INFINITY).is_some());
        assert!(b.hit(DVec3::new(1.5, 0.5, -1.0), inv, 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn ray_hits_triangle_centroid() {
        let (a, b, c) = (DVec3::new(-1.0, -1.0, -2.0), DVec3::new(1.0, -1.0, -2.0), DVec3::new(0.0, 1.0, -2.0));
        let centroid = (a + b + c) / 3.0;
        let ray = Ray::new(DVec3::ZERO, centroid.normalize());
        let (t, _, _) = intersect_triangle(&ray, a, b - a, c - a, 0.0).unwrap();
        assert!((t - centroid.length()).abs() < 1e-12);
        let miss = Ray::new(DVec3::ZERO, DVec3::new(0.0, 0.0, 1.0));
        assert!(intersect_triangle(&miss, a, b - a, c - a, 0.0).is_none());
    }

    #[test]
    fn triangle_box_overlap() {
        let b = Aabb::new(DVec3::splat(-1.0), DVec3::splat(1.0));
        let inside = [DVec3::ZERO, DVec3::X * 0.5, DVec3::Y * 0.5];
        let outside = [DVec3::splat(2.0), DVec3::new(3.0, 2.0, 2.0), DVec3::new(2.0, 3.0, 2.0)];
        let crossing = [
            DVec3::new(-5.0, -5.0, 0.0),
            DVec3::new(5.0, -5.0, 0.0),
            DVec3::new(0.0, 5.0, 0.0),
        ];
        assert!(triangle_overlaps_box(inside, &b));
        assert!(!triangle_overlaps_box(outside, &b));
        assert!(triangle_overlaps_box(crossing, &b));
    }
}
