//! Bounding-box annotations derived from the instance-ID pass.
//!
//! Boxes cover the visible pixels of an instance. Occlusion is measured
//! against a solo pass that renders only that instance with the same
//! camera and resolution.

mod coco;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use coco::{export_coco, CocoAnnotation, CocoCategory, CocoDataset, CocoImage, ImageRecord};

use crate::error::{Error, Result};
use crate::render::{instance_id_pass, Bvh, FrameBuffers, SceneGeometry};
use crate::scene::{PinholeCamera, Projection, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelPolicy {
    pub min_visible_pixels: u64,
    pub min_visibility_fraction: f64,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            min_visible_pixels: 25,
            min_visibility_fraction: 0.25,
        }
    }
}

impl LabelPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_visibility_fraction >= 0.0 && self.min_visibility_fraction.is_finite()) {
            return Err(Error::field("labels.min_visibility_fraction", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub instance_id: u32,
    pub class_label: String,
    /// `[x, y, width, height]`, tight over the visible pixels.
    pub bbox: [u32; 4],
    pub visible_pixels: u64,
    pub visibility_fraction: f64,
}

/// Visibility measurements for one labeled instance, independent of any
/// policy. Stored per frame so labels can be re-derived without rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceVisibility {
    pub instance_id: u32,
    pub class_label: String,
    pub visible_pixels: u64,
    pub unoccluded_pixels: u64,
    /// Present when `visible_pixels > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[u32; 4]>,
}

#[derive(Default, Clone, Copy)]
struct PixelExtent {
    count: u64,
    min: (u32, u32),
    max: (u32, u32),
}

fn extents(width: u32, ids: &[u32]) -> BTreeMap<u32, PixelExtent> {
    let mut out: BTreeMap<u32, PixelExtent> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let (x, y) = (i as u32 % width, i as u32 / width);
        let e = out.entry(id).or_insert(PixelExtent {
            count: 0,
            min: (x, y),
            max: (x, y),
        });
        e.count += 1;
        e.min = (e.min.0.min(x), e.min.1.min(y));
        e.max = (e.max.0.max(x), e.max.1.max(y));
    }
    out
}

/// Pixel window guaranteed to contain every pixel center whose ray can hit
/// `bounds`; the full frame when any corner is behind the camera.
fn pixel_window(camera: &PinholeCamera, bounds: &crate::geometry::Aabb) -> (u32, u32, u32, u32) {
    let full = (0, 0, camera.width, camera.height);
    let mut lo = glam::DVec2::splat(f64::INFINITY);
    let mut hi = glam::DVec2::splat(f64::NEG_INFINITY);
    for c in bounds.corners() {
        match camera.project_point(c) {
            Projection::Pixel(p) => {
                lo = lo.min(p);
                hi = hi.max(p);
            }
            Projection::BehindCamera => return full,
        }
    }
    let clamp = |v: f64, max: u32| v.clamp(0.0, f64::from(max)) as u32;
    (
        clamp(lo.x.floor() - 2.0, camera.width),
        clamp(lo.y.floor() - 2.0, camera.height),
        clamp(hi.x.ceil() + 2.0, camera.width),
        clamp(hi.y.ceil() + 2.0, camera.height),
    )
}

/// Number of pixel centers at which part `index` is hit when rendered alone.
pub fn solo_pixel_count(scene: &SceneGraph, index: usize, width: u32, height: u32) -> u64 {
    let geometry = SceneGeometry::flatten_filtered(scene, false, |i| i == index);
    let bvh = Bvh::new(geometry.triangles.clone());
    let camera = PinholeCamera {
        width,
        height,
        ..scene.camera.clone()
    };
    let (x0, y0, x1, y1) = pixel_window(&camera, &scene.parts[index].world_bounds());
    let mut count = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            let ray = camera.pixel_center_ray(x, y);
            if bvh.intersect(&ray, 0.0, f64::INFINITY).is_some() {
                count += 1;
            }
        }
    }
    count
}

/// Measures every labeled instance of `scene` against an instance-ID map.
pub fn measure_visibility(width: u32, height: u32, ids: &[u32], scene: &SceneGraph) -> Result<Vec<InstanceVisibility>> {
    if ids.len() != (width as usize) * (height as usize) {
        return Err(Error::Structure(format!(
            "instance-ID map holds {} pixels, expected {width}x{height}",
            ids.len()
        )));
    }
    let ext = extents(width, ids);
    for id in ext.keys() {
        if scene.part_by_id(*id).is_none() {
            return Err(Error::Structure(format!("instance id {id} is not in the scene")));
        }
    }
    let mut out = Vec::new();
    for (index, part) in scene.parts.iter().enumerate() {
        let Some(label) = &part.class_label else { continue };
        let e = ext.get(&part.instance_id).copied().unwrap_or_default();
        let (unoccluded, bbox) = if e.count == 0 {
            (0, None)
        } else {
            let solo = solo_pixel_count(scene, index, width, height).max(e.count);
            let bbox = [e.min.0, e.min.1, e.max.0 - e.min.0 + 1, e.max.1 - e.min.1 + 1];
            (solo, Some(bbox))
        };
        out.push(InstanceVisibility {
            instance_id: part.instance_id,
            class_label: label.clone(),
            visible_pixels: e.count,
            unoccluded_pixels: unoccluded,
            bbox,
        });
    }
    out.sort_by_key(|v| v.instance_id);
    Ok(out)
}

/// Keeps the instances that pass `policy`.
pub fn apply_policy(visibility: &[InstanceVisibility], policy: &LabelPolicy) -> Vec<InstanceAnnotation> {
    visibility
        .iter()
        .filter_map(|v| {
            let bbox = v.bbox?;
            if v.visible_pixels == 0 || v.visible_pixels < policy.min_visible_pixels {
                return None;
            }
            let fraction = v.visible_pixels as f64 / v.unoccluded_pixels.max(v.visible_pixels) as f64;
            if fraction < policy.min_visibility_fraction {
                return None;
            }
            Some(InstanceAnnotation {
                instance_id: v.instance_id,
                class_label: v.class_label.clone(),
                bbox,
                visible_pixels: v.visible_pixels,
                visibility_fraction: fraction,
            })
        })
        .collect()
}

pub fn extract_annotations(frame: &FrameBuffers, scene: &SceneGraph, policy: &LabelPolicy) -> Result<Vec<InstanceAnnotation>> {
    if frame.beauty.dimensions() != (frame.width, frame.height) {
        return Err(Error::Structure("beauty and instance-ID buffers differ in size".into()));
    }
    let vis = measure_visibility(frame.width, frame.height, &frame.instance_id, scene)?;
    Ok(apply_policy(&vis, policy))
}

/// Renders only the ID pass of `scene` at the given resolution.
pub fn render_ids(scene: &SceneGraph, width: u32, height: u32) -> Vec<u32> {
    let geometry = SceneGeometry::flatten(scene);
    let bvh = Bvh::new(geometry.triangles.clone());
    instance_id_pass(scene, &geometry, &bvh, width, height)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use glam::DVec3;
    use image::RgbImage;

    use super::*;
    use crate::geometry::{Aabb, Transform};
    use crate::render::EnvironmentLight;
    use crate::scene::{Mesh, PartInstance, RegionOfInterest};

    /// Axis-aligned square at depth `z` covering the continuous pixel range
    /// `[lo, hi]` in both axes for a 64x64, 90 degree camera at the origin.
    fn square(lo: f64, hi: f64, z: f64) -> Mesh {
        let f = 32.0;
        let to_x = |u: f64| (u - 32.0) / f * z;
        let to_y = |v: f64| -(v - 32.0) / f * z;
        let (x0, x1, y0, y1) = (to_x(lo), to_x(hi), to_y(lo), to_y(hi));
        Mesh::from_triangles(
            vec![
                DVec3::new(x0, y0, -z),
                DVec3::new(x1, y0, -z),
                DVec3::new(x1, y1, -z),
                DVec3::new(x0, y1, -z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    fn part(mesh: Mesh, id: u32, label: Option<&str>) -> PartInstance {
        PartInstance {
            mesh: Arc::new(mesh),
            mesh_path: None,
            transform: Transform::IDENTITY,
            class_label: label.map(Into::into),
            instance_id: id,
            material: None,
        }
    }

    fn scene(parts: Vec<PartInstance>) -> SceneGraph {
        let mut s = SceneGraph {
            parts,
            camera: PinholeCamera {
                pose: Transform::IDENTITY,
                vertical_fov: std::f64::consts::FRAC_PI_2,
                width: 64,
                height: 64,
            },
            environment: EnvironmentLight::default(),
            backplate: None,
            roi: RegionOfInterest(Aabb::EMPTY),
        };
        s.roi = RegionOfInterest(s.labeled_bounds());
        s
    }

    fn frame(scene: &SceneGraph) -> FrameBuffers {
        FrameBuffers {
            width: 64,
            height: 64,
            radiance: vec![[0.0; 3]; 64 * 64],
            beauty: RgbImage::new(64, 64),
            instance_id: render_ids(scene, 64, 64),
        }
    }

    #[test]
    fn unoccluded_square_gets_tight_box() {
        let s = scene(vec![part(square(9.6, 21.4, 1.0), 1, Some("screw"))]);
        let anns = extract_annotations(&frame(&s), &s, &LabelPolicy::default()).unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].bbox, [10, 10, 11, 11]);
        assert_eq!(anns[0].visible_pixels, 121);
        assert_eq!(anns[0].visibility_fraction, 1.0);
    }

    #[test]
    fn fully_hidden_part_gets_no_annotation() {
        let s = scene(vec![
            part(square(9.6, 21.4, 2.0), 1, Some("screw")),
            part(square(5.0, 30.0, 1.0), 2, None),
        ]);
        let anns = extract_annotations(&frame(&s), &s, &LabelPolicy::default()).unwrap();
        assert!(anns.is_empty());
    }

    #[test]
    fn partial_occlusion_measures_fraction() {
        // occluder covers columns 10..=15 of the 11x11 square
        let occluder = {
            let z = 1.0;
            let to_x = |u: f64| (u - 32.0) / 32.0 * z;
            let to_y = |v: f64| -(v - 32.0) / 32.0 * z;
            Mesh::from_triangles(
                vec![
                    DVec3::new(to_x(5.0), to_y(5.0), -z),
                    DVec3::new(to_x(15.9), to_y(5.0), -z),
                    DVec3::new(to_x(15.9), to_y(30.0), -z),
                    DVec3::new(to_x(5.0), to_y(30.0), -z),
                ],
                vec![[0, 1, 2], [0, 2, 3]],
            )
        };
        let s = scene(vec![part(square(9.6, 21.4, 2.0), 1, Some("screw")), part(occluder, 2, None)]);
        let policy = LabelPolicy {
            min_visible_pixels: 1,
            min_visibility_fraction: 0.0,
        };
        let anns = extract_annotations(&frame(&s), &s, &policy).unwrap();
        assert_eq!(anns[0].bbox, [16, 10, 5, 11]);
        assert_eq!(anns[0].visible_pixels, 55);
        assert!((anns[0].visibility_fraction - 55.0 / 121.0).abs() < 1e-12);
        let strict = LabelPolicy {
            min_visible_pixels: 1,
            min_visibility_fraction: 0.5,
        };
        assert!(extract_annotations(&frame(&s), &s, &strict).unwrap().is_empty());
    }

    #[test]
    fn unlabeled_parts_produce_nothing() {
        let s = scene(vec![
            part(square(40.0, 60.0, 1.0), 1, Some("screw")),
            part(square(2.0, 30.0, 1.0), 2, None),
        ]);
        let anns = extract_annotations(&frame(&s), &s, &LabelPolicy::default()).unwrap();
        assert_eq!(anns.iter().map(|a| a.instance_id).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn raising_pixel_threshold_never_adds_annotations() {
        let s = scene(vec![
            part(square(9.6, 21.4, 1.0), 1, Some("a")),
            part(square(30.0, 33.0, 1.0), 2, Some("b")),
            part(square(40.0, 60.0, 1.0), 3, Some("c")),
        ]);
        let f = frame(&s);
        let vis = measure_visibility(64, 64, &f.instance_id, &s).unwrap();
        let mut last = usize::MAX;
        for min in [0, 1, 5, 9, 10, 121, 122, 400, 401, 5000] {
            let n = apply_policy(
                &vis,
                &LabelPolicy {
                    min_visible_pixels: min,
                    min_visibility_fraction: 0.0,
                },
            )
            .len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn mismatched_buffers_are_structural_errors() {
        let s = scene(vec![part(square(9.6, 21.4, 1.0), 1, Some("screw"))]);
        let mut f = frame(&s);
        f.instance_id.pop();
        assert!(matches!(extract_annotations(&f, &s, &LabelPolicy::default()), Err(Error::Structure(_))));
        let mut f = frame(&s);
        f.beauty = RgbImage::new(32, 32);
        assert!(matches!(extract_annotations(&f, &s, &LabelPolicy::default()), Err(Error::Structure(_))));
        let mut f = frame(&s);
        f.instance_id[0] = 77;
        assert!(matches!(extract_annotations(&f, &s, &LabelPolicy::default()), Err(Error::Structure(_))));
    }
}
