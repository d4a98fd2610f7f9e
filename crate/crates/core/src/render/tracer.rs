use std::sync::atomic::{AtomicU64, Ordering};

use glam::DVec3;
use image::RgbImage;
use rand::Rng;
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bsdf::Brdf;
use super::{Bvh, EnvironmentLight, Owner, SceneGeometry};
use crate::error::{Error, Result};
use crate::geometry::{Ray, Transform};
use crate::imaging::{quantize, tonemap};
use crate::material::MaterialSpec;
use crate::scene::{PinholeCamera, SceneGraph};
use crate::seed::{combine, TAG_PIXEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub width: u32,
    pub height: u32,
    pub samples_per_pixel: u32,
    /// Maximum number of surface scattering events per path.
    pub max_bounces: u32,
    /// Russian roulette applies from this bounce index on.
    pub russian_roulette_start: u32,
    pub seed: u64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            width: 1920,
            height: 1080,
            samples_per_pixel: 64,
            max_bounces: 6,
            russian_roulette_start: 3,
            seed: 0,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_pixel < 1 {
            return Err(Error::field("render.samples_per_pixel", "must be >= 1"));
        }
        if self.max_bounces < 1 {
            return Err(Error::field("render.max_bounces", "must be >= 1"));
        }
        if self.width < crate::scene::MIN_RESOLUTION || self.height < crate::scene::MIN_RESOLUTION {
            return Err(Error::field("render.width/height", "resolution must be at least 16x16"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: u32,
    pub height: u32,
    /// Pre-tonemap linear radiance, row-major from the top-left pixel.
    pub radiance: Vec<[f32; 3]>,
    /// Tonemapped 8-bit image.
    pub beauty: RgbImage,
    /// Instance id of the surface seen through each pixel center, 0 for
    /// background and backplate.
    pub instance_id: Vec<u32>,
}

struct PartShading {
    material: MaterialSpec,
    transform: Transform,
}

struct Context<'a> {
    scene: &'a SceneGraph,
    bvh: &'a Bvh,
    geometry: &'a SceneGeometry,
    parts: Vec<PartShading>,
    env: &'a EnvironmentLight,
    env_sampling: bool,
    settings: &'a RenderSettings,
}

fn pixel_rng(seed: u64, pixel: u64, sample: u32) -> Pcg64Mcg {
    let a = combine(combine(seed, TAG_PIXEL), pixel);
    let b = combine(a, u64::from(sample));
    Pcg64Mcg::new((u128::from(a) << 64) | u128::from(b))
}

fn offset_origin(p: DVec3, ng: DVec3, towards: DVec3) -> DVec3 {
    let eps = 1e-7 * (1.0 + p.abs().max_element());
    if ng.dot(towards) >= 0.0 {
        p + ng * eps
    } else {
        p - ng * eps
    }
}

impl Context<'_> {
    fn radiance<R: Rng>(&self, mut ray: Ray, rng: &mut R) -> DVec3 {
        let mut l = DVec3::ZERO;
        let mut beta = DVec3::ONE;
        // solid-angle pdf of the BRDF sample that produced `ray`; None for camera rays
        let mut last_pdf: Option<f64> = None;
        let mut bounce = 0u32;
        loop {
            let Some(hit) = self.bvh.intersect(&ray, 0.0, f64::INFINITY) else {
                let le = DVec3::from(self.env.radiance(ray.dir));
                let w = match last_pdf {
                    Some(pb) if self.env_sampling => {
                        let pe = self.env.pdf(ray.dir);
                        pb / (pb + pe)
                    }
                    _ => 1.0,
                };
                l += beta * le * w;
                break;
            };
            let info = &self.geometry.info[hit.tri as usize];
            let b0 = 1.0 - hit.b1 - hit.b2;
            let part_index = match info.owner {
                Owner::Backplate => {
                    if let Some(bp) = &self.scene.backplate {
                        let u = b0 * info.uv[0][0] + hit.b1 * info.uv[1][0] + hit.b2 * info.uv[2][0];
                        let v = b0 * info.uv[0][1] + hit.b1 * info.uv[1][1] + hit.b2 * info.uv[2][1];
                        l += beta * DVec3::from(bp.image.sample(u, v));
                    }
                    break;
                }
                Owner::Part(i) => i as usize,
            };
            if bounce >= self.settings.max_bounces {
                break;
            }

            let tri = &self.geometry.triangles[hit.tri as usize];
            let p = ray.at(hit.t);
            let wo = -ray.dir;
            let mut ng = tri.geometric_normal();
            if ng.dot(wo) < 0.0 {
                ng = -ng;
            }
            let mut ns = (info.normals[0] * b0 + info.normals[1] * hit.b1 + info.normals[2] * hit.b2).normalize_or_zero();
            if ns.dot(ng) < 0.0 {
                ns = -ns;
            }
            // interpolated normals can face away from the viewer near silhouettes
            if ns.dot(wo) <= 0.0 {
                ns = ng;
            }

            let shading = &self.parts[part_index];
            let albedo = shading.material.albedo_at(shading.transform.inverse_point(p));
            let brdf = Brdf::new(&shading.material, albedo);

            if self.env_sampling {
                if let Some((wi, le, pe)) = self.env.sample(rng) {
                    let (f, pb) = brdf.eval(ns, wo, wi);
                    let cos = ns.dot(wi);
                    if cos > 0.0 && f != DVec3::ZERO {
                        let shadow = Ray::new(offset_origin(p, ng, wi), wi);
                        if !self.bvh.occluded(&shadow, 0.0, f64::INFINITY) {
                            let w = pe / (pe + pb);
                            l += beta * f * DVec3::from(le) * (cos * w / pe);
                        }
                    }
                }
            }

            let Some(s) = brdf.sample(ns, wo, rng) else { break };
            beta *= s.f * (ns.dot(s.wi) / s.pdf);
            last_pdf = Some(s.pdf);
            ray = Ray::new(offset_origin(p, ng, s.wi), s.wi);
            bounce += 1;

            if bounce >= self.settings.russian_roulette_start {
                let q = beta.max_element().clamp(0.05, 1.0);
                if rng.gen::<f64>() >= q {
                    break;
                }
                beta /= q;
            }
        }
        l
    }
}

/// Renders the beauty image and the instance-ID map.
///
/// The output resolution comes from `settings`; the scene camera supplies
/// pose and vertical field of view. Every (pixel, sample) pair draws from
/// its own generator seeded from `(settings.seed, pixel, sample)`, so the
/// result is bit-identical for any thread count.
pub fn trace(scene: &SceneGraph, bvh: &Bvh, settings: &RenderSettings) -> FrameBuffers {
    settings.validate().expect("render settings must be validated before tracing");
    let geometry = SceneGeometry::flatten(scene);
    assert_eq!(
        geometry.triangles.len(),
        bvh.triangles().len(),
        "BVH was not built from this scene"
    );
    let camera = PinholeCamera {
        width: settings.width,
        height: settings.height,
        ..scene.camera.clone()
    };
    let ctx = Context {
        scene,
        bvh,
        geometry: &geometry,
        parts: scene
            .parts
            .iter()
            .map(|p| PartShading {
                material: p.material.clone().unwrap_or_default(),
                transform: p.transform,
            })
            .collect(),
        env: &scene.environment,
        env_sampling: scene.environment.can_sample(),
        settings,
    };

    let (w, h) = (settings.width as usize, settings.height as usize);
    let spp = settings.samples_per_pixel;
    let discarded = AtomicU64::new(0);
    let mut radiance = vec![[0f32; 3]; w * h];
    radiance.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let pixel = (y * w + x) as u64;
            let mut sum = DVec3::ZERO;
            for s in 0..spp {
                let mut rng = pixel_rng(settings.seed, pixel, s);
                let (jx, jy): (f64, f64) = (rng.gen(), rng.gen());
                let ray = camera.ray_through(x as f64 + jx, y as f64 + jy);
                let l = ctx.radiance(ray, &mut rng);
                if l.is_finite() && l.min_element() >= 0.0 {
                    sum += l;
                } else {
                    discarded.fetch_add(1, Ordering::Relaxed);
                }
            }
            let mean = sum / f64::from(spp);
            *out = [mean.x as f32, mean.y as f32, mean.z as f32];
        }
    });
    let discarded = discarded.into_inner();
    if discarded > 0 {
        log::warn!("discarded {discarded} non-finite radiance samples");
    }

    let instance_id = instance_id_pass(scene, &geometry, bvh, settings.width, settings.height);
    let beauty = quantize(&tonemap(settings.width, settings.height, &radiance));
    FrameBuffers {
        width: settings.width,
        height: settings.height,
        radiance,
        beauty,
        instance_id,
    }
}

/// One primary ray through each pixel center; returns the instance id of
/// the first part hit, or 0.
pub fn instance_id_pass(scene: &SceneGraph, geometry: &SceneGeometry, bvh: &Bvh, width: u32, height: u32) -> Vec<u32> {
    let camera = PinholeCamera {
        width,
        height,
        ..scene.camera.clone()
    };
    let w = width as usize;
    let mut ids = vec![0u32; w * height as usize];
    ids.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let ray = camera.pixel_center_ray(x as u32, y as u32);
            *out = match bvh.intersect(&ray, 0.0, f64::INFINITY) {
                Some(hit) => match geometry.info[hit.tri as usize].owner {
                    Owner::Part(i) => scene.parts[i as usize].instance_id,
                    Owner::Backplate => 0,
                },
                None => 0,
            };
        }
    });
    ids
}
