//! Unidirectional path tracer and the instance-ID pass.

mod bsdf;
mod bvh;
mod envmap;
mod tracer;

pub use bsdf::Brdf;
pub use bvh::{Bvh, Hit, Triangle, MAX_LEAF_SIZE};
pub use envmap::{luminance, AliasTable, EnvMap, EnvironmentLight};
pub use tracer::{instance_id_pass, trace, FrameBuffers, RenderSettings};

use glam::DVec3;

use crate::scene::SceneGraph;

/// Owner of a flattened triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    /// Index into `SceneGraph::parts`.
    Part(u32),
    Backplate,
}

/// Per-triangle data the tracer needs besides the intersection geometry.
#[derive(Debug, Clone)]
pub struct TriangleInfo {
    pub owner: Owner,
    pub normals: [DVec3; 3],
    /// Texture coordinates; only meaningful for backplate triangles.
    pub uv: [[f64; 2]; 3],
}

/// World-space triangles of a scene in a fixed order (parts in scene
/// order, each in mesh order, then the backplate), with their owners.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub triangles: Vec<Triangle>,
    pub info: Vec<TriangleInfo>,
}

impl SceneGeometry {
    pub fn flatten(scene: &SceneGraph) -> Self {
        Self::flatten_filtered(scene, true, |_| true)
    }

    /// Flattens only the parts accepted by `keep` (by index), optionally
    /// including the backplate.
    pub fn flatten_filtered(scene: &SceneGraph, backplate: bool, keep: impl Fn(usize) -> bool) -> Self {
        let mut triangles = Vec::new();
        let mut info = Vec::new();
        for (pi, part) in scene.parts.iter().enumerate() {
            if !keep(pi) {
                continue;
            }
            let mesh = &part.mesh;
            let world_n: Vec<DVec3> = mesh
                .normals
                .iter()
                .map(|&n| part.transform.vector(n).normalize())
                .collect();
            let world_v: Vec<DVec3> = mesh.vertices.iter().map(|&v| part.transform.point(v)).collect();
            for t in &mesh.triangles {
                let [a, b, c] = t.map(|i| i as usize);
                triangles.push(Triangle::new(world_v[a], world_v[b], world_v[c]));
                info.push(TriangleInfo {
                    owner: Owner::Part(pi as u32),
                    normals: [world_n[a], world_n[b], world_n[c]],
                    uv: [[0.0; 2]; 3],
                });
            }
        }
        if backplate {
            if let Some(bp) = &scene.backplate {
                for (tri, uv) in bp.triangles() {
                    let t = Triangle::new(tri[0], tri[1], tri[2]);
                    let n = t.geometric_normal();
                    triangles.push(t);
                    info.push(TriangleInfo {
                        owner: Owner::Backplate,
                        normals: [n; 3],
                        uv,
                    });
                }
            }
        }
        SceneGeometry { triangles, info }
    }
}

/// Builds the acceleration structure over all scene triangles, including
/// the backplate, in [`SceneGeometry::flatten`] order.
pub fn build_bvh(scene: &SceneGraph) -> Bvh {
    Bvh::new(SceneGeometry::flatten(scene).triangles)
}
