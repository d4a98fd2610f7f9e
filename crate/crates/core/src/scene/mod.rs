//! Recreated inspection scene: meshes, placed parts, camera, backplate and
//! the region of interest that must stay in frame.

mod camera;
mod file;
mod mesh;
pub mod primitives;

use std::path::PathBuf;
use std::sync::Arc;

use glam::DVec3;

pub use camera::{PinholeCamera, Projection, MIN_RESOLUTION};
pub(crate) use file::resolve as resolve_path;
pub use file::{load_scene, BackplateRecord, EnvironmentRecord, PartRecord, SceneFile};
pub use mesh::{area_weighted_normals, load_mesh, parse_mesh, Mesh};

use crate::error::{Error, Result};
use crate::geometry::{triangle_overlaps_box, Aabb, Ray, Transform};
use crate::imaging::LinearImage;
use crate::material::MaterialSpec;
use crate::render::EnvironmentLight;

pub const MAX_INSTANCE_ID: u32 = u16::MAX as u32;

#[derive(Debug, Clone)]
pub struct PartInstance {
    pub mesh: Arc<Mesh>,
    /// Source file, when the mesh came from disk.
    pub mesh_path: Option<PathBuf>,
    pub transform: Transform,
    /// Category of an inspected component; `None` for context geometry.
    pub class_label: Option<String>,
    pub instance_id: u32,
    /// Bound material. In a scene file this is the fixed photo-realistic
    /// assignment; randomization overwrites it.
    pub material: Option<MaterialSpec>,
}

impl PartInstance {
    pub fn is_labeled(&self) -> bool {
        self.class_label.is_some()
    }

    pub fn world_bounds(&self) -> Aabb {
        Aabb::from_points(self.mesh.vertices.iter().map(|&v| self.transform.point(v)))
    }

    pub fn world_triangles(&self) -> impl Iterator<Item = [DVec3; 3]> + '_ {
        (0..self.mesh.triangles.len()).map(|i| self.mesh.triangle(i).map(|v| self.transform.point(v)))
    }
}

/// Textured quad behind the scene, the camera-facing face of a backdrop
/// cube. Corners run top-left, top-right, bottom-right, bottom-left as
/// seen from the camera; the image maps onto them without distortion
/// for a rectangular quad.
#[derive(Debug, Clone)]
pub struct Backplate {
    pub corners: [DVec3; 4],
    pub image: Arc<LinearImage>,
    pub image_path: Option<PathBuf>,
}

impl Backplate {
    /// The two triangles with the texture coordinates of their vertices.
    pub fn triangles(&self) -> [([DVec3; 3], [[f64; 2]; 3]); 2] {
        let c = self.corners;
        let uv = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        [
            ([c[0], c[1], c[2]], [uv[0], uv[1], uv[2]]),
            ([c[0], c[2], c[3]], [uv[0], uv[2], uv[3]]),
        ]
    }

    pub fn overlaps(&self, b: &Aabb) -> bool {
        self.triangles().iter().any(|(t, _)| triangle_overlaps_box(*t, b))
    }
}

/// World-space box that encloses every labeled part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOfInterest(pub Aabb);

impl RegionOfInterest {
    pub fn bounds(&self) -> &Aabb {
        &self.0
    }
}

/// True iff all eight ROI corners project inside the image at positive
/// depth. Occlusion is not considered.
pub fn roi_fully_visible(camera: &PinholeCamera, roi: &RegionOfInterest) -> bool {
    let (w, h) = (f64::from(camera.width), f64::from(camera.height));
    roi.0.corners().iter().all(|&c| match camera.project_point(c) {
        Projection::Pixel(p) => p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h,
        Projection::BehindCamera => false,
    })
}

#[derive(Debug, Clone)]
pub struct SceneGraph {
    pub parts: Vec<PartInstance>,
    pub camera: PinholeCamera,
    pub environment: EnvironmentLight,
    pub backplate: Option<Backplate>,
    pub roi: RegionOfInterest,
}

impl SceneGraph {
    pub fn labeled_parts(&self) -> impl Iterator<Item = &PartInstance> {
        self.parts.iter().filter(|p| p.is_labeled())
    }

    /// Sorted, de-duplicated class labels of the labeled parts.
    pub fn class_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.labeled_parts().filter_map(|p| p.class_label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn part_by_id(&self, id: u32) -> Option<&PartInstance> {
        self.parts.iter().find(|p| p.instance_id == id)
    }

    pub fn max_instance_id(&self) -> u32 {
        self.parts.iter().map(|p| p.instance_id).max().unwrap_or(0)
    }

    /// Union of the labeled parts' world bounds.
    pub fn labeled_bounds(&self) -> Aabb {
        self.labeled_parts().fold(Aabb::EMPTY, |b, p| b.union(p.world_bounds()))
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.labeled_parts().next().is_none() {
            return Err(Error::Config("scene needs at least one labeled part".into()));
        }
        let mut ids: Vec<u32> = self.parts.iter().map(|p| p.instance_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("instance_id {} is used twice", w[0])));
        }
        if ids.first() == Some(&0) || ids.last().is_some_and(|&m| m > MAX_INSTANCE_ID) {
            return Err(Error::field("instance_id", "must lie in 1..=65535"));
        }
        for p in &self.parts {
            p.mesh.validate()?;
            if let Some(m) = &p.material {
                m.validate()?;
            }
            if p.is_labeled() && !self.roi.0.contains_box(&p.world_bounds()) {
                return Err(Error::field(
                    "roi",
                    format!("does not contain labeled part {}", p.instance_id),
                ));
            }
        }
        if let Some(bp) = &self.backplate {
            if bp.overlaps(&self.roi.0) {
                return Err(Error::field("backplate", "intersects the region of interest"));
            }
        }
        if let Some(p) = self.parts.iter().find(|p| camera_inside(&self.camera, p)) {
            return Err(Error::field(
                "camera",
                format!("camera lies inside the mesh of part {}", p.instance_id),
            ));
        }
        Ok(())
    }
}

/// Parity test along three fixed directions; the camera counts as inside a
/// part only if every direction crosses its surface an odd number of times,
/// which keeps open (non-closed) meshes from triggering false positives.
fn camera_inside(camera: &PinholeCamera, part: &PartInstance) -> bool {
    let origin = camera.position();
    if !part.world_bounds().contains_point(origin) {
        return false;
    }
    let dirs = [
        DVec3::new(0.5377, 0.8137, 0.2213),
        DVec3::new(-0.6211, 0.1312, -0.7727),
        DVec3::new(0.0917, -0.9304, 0.3549),
    ];
    dirs.iter().all(|d| {
        let ray = Ray::new(origin, d.normalize());
        let crossings = part
            .world_triangles()
            .filter(|[a, b, c]| crate::geometry::intersect_triangle(&ray, *a, *b - *a, *c - *a, 0.0).is_some())
            .count();
        crossings % 2 == 1
    })
}
