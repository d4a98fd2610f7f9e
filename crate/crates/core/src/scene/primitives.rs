//! Procedural meshes, each centered at the origin with unit bounding extent.

use std::f64::consts::{PI, TAU};

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cube,
    Sphere,
    Cylinder,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 3] = [PrimitiveKind::Cube, PrimitiveKind::Sphere, PrimitiveKind::Cylinder];

    pub fn mesh(self) -> Mesh {
        match self {
            PrimitiveKind::Cube => cube(),
            PrimitiveKind::Sphere => sphere(48, 24),
            PrimitiveKind::Cylinder => cylinder(32),
        }
    }
}

/// Side-1 cube with flat per-face normals (24 vertices, 12 triangles).
pub fn cube() -> Mesh {
    let mut vertices = Vec::with_capacity(24);
    let mut normals = Vec::with_capacity(24);
    let mut triangles = Vec::with_capacity(12);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut n = DVec3::ZERO;
            n[axis] = sign;
            let u = {
                let mut u = DVec3::ZERO;
                u[(axis + 1) % 3] = 1.0;
                u
            };
            let v = n.cross(u);
            let base = vertices.len() as u32;
            for (a, b) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
                vertices.push(n * 0.5 + u * a + v * b);
                normals.push(n);
            }
            triangles.push([base, base + 1, base + 2]);
            triangles.push([base, base + 2, base + 3]);
        }
    }
    Mesh {
        vertices,
        triangles,
        normals,
    }
}

/// Radius-0.5 UV sphere with analytic normals.
pub fn sphere(slices: u32, stacks: u32) -> Mesh {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    for i in 0..=stacks {
        let theta = PI * f64::from(i) / f64::from(stacks);
        for j in 0..=slices {
            let phi = TAU * f64::from(j) / f64::from(slices);
            let n = DVec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
            vertices.push(n * 0.5);
            normals.push(n.normalize());
        }
    }
    let row = slices + 1;
    let mut triangles = Vec::new();
    for i in 0..stacks {
        for j in 0..slices {
            let a = i * row + j;
            let b = a + row;
            if i != 0 {
                triangles.push([a, a + 1, b]);
            }
            if i + 1 != stacks {
                triangles.push([a + 1, b + 1, b]);
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        normals,
    }
}

/// Radius-0.5, height-1 cylinder along +y with flat caps.
pub fn cylinder(segments: u32) -> Mesh {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for j in 0..=segments {
        let phi = TAU * f64::from(j) / f64::from(segments);
        let n = DVec3::new(phi.cos(), 0.0, phi.sin());
        vertices.push(n * 0.5 + DVec3::new(0.0, -0.5, 0.0));
        normals.push(n);
        vertices.push(n * 0.5 + DVec3::new(0.0, 0.5, 0.0));
        normals.push(n);
    }
    for j in 0..segments {
        let a = 2 * j;
        triangles.push([a, a + 1, a + 3]);
        triangles.push([a, a + 3, a + 2]);
    }
    for (y, n) in [(-0.5, -DVec3::Y), (0.5, DVec3::Y)] {
        let center = vertices.len() as u32;
        vertices.push(DVec3::new(0.0, y, 0.0));
        normals.push(n);
        for j in 0..=segments {
            let phi = TAU * f64::from(j) / f64::from(segments);
            vertices.push(DVec3::new(0.5 * phi.cos(), y, 0.5 * phi.sin()));
            normals.push(n);
        }
        for j in 0..segments {
            let (a, b) = (center + 1 + j, center + 2 + j);
            if y < 0.0 {
                triangles.push([center, a, b]);
            } else {
                triangles.push([center, b, a]);
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        normals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_valid_unit_extent() {
        for kind in PrimitiveKind::ALL {
            let m = kind.mesh();
            m.validate().unwrap();
            let e = m.bounds().extent();
            assert!((e.max_element() - 1.0).abs() < 1e-9, "{kind:?} {e}");
        }
    }

    #[test]
    fn cube_triangles_face_outward() {
        let m = cube();
        for (i, t) in m.triangles.iter().enumerate() {
            let [a, b, c] = m.triangle(i);
            let face = (b - a).cross(c - a).normalize();
            assert!(face.dot(m.normals[t[0] as usize]) > 0.99);
        }
    }
}
