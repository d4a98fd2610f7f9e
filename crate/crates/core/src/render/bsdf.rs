//! Metallic-roughness BRDF: Lambertian diffuse plus a GGX microfacet lobe
//! with separable Smith masking-shadowing and Schlick Fresnel. The diffuse
//! lobe is attenuated by `1 - F` on both sides so the sum never reflects
//! more than it receives, even at grazing angles.
//!
//! All directions are world-space unit vectors pointing away from the
//! surface; `n` is the shading normal already flipped towards `wo`.

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use glam::DVec3;
use rand::Rng;

use crate::material::{MaterialSpec, DIELECTRIC_F0};

#[derive(Debug, Clone, Copy)]
pub struct Brdf {
    albedo: DVec3,
    alpha: f64,
    f0: DVec3,
    f90: DVec3,
    diffuse: DVec3,
}

pub struct BrdfSample {
    pub wi: DVec3,
    /// BRDF value (without the cosine factor).
    pub f: DVec3,
    pub pdf: f64,
}

fn lum(c: DVec3) -> f64 {
    0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z
}

/// Orthonormal basis around `n` (Duff et al. 2017).
pub fn basis(n: DVec3) -> (DVec3, DVec3) {
    let s = 1f64.copysign(n.z);
    let a = -1.0 / (s + n.z);
    let b = n.x * n.y * a;
    (
        DVec3::new(1.0 + s * n.x * n.x * a, s * b, -s * n.x),
        DVec3::new(b, s + n.y * n.y * a, -n.y),
    )
}

impl Brdf {
    pub fn new(material: &MaterialSpec, albedo: [f64; 3]) -> Self {
        let albedo = DVec3::from(albedo);
        let metal = material.metalness;
        let dielectric_f0 = DIELECTRIC_F0 * material.specular;
        let f0 = DVec3::splat(dielectric_f0).lerp(albedo, metal);
        // grazing reflectance fades out for vanishing f0 so a pure Lambertian
        // material has no specular lobe at all
        let f90 = (f0 * 50.0).min(DVec3::ONE);
        let r = material.roughness;
        Brdf {
            albedo,
            alpha: (r * r).max(1e-4),
            f0,
            f90,
            diffuse: albedo * ((1.0 - metal) * FRAC_1_PI),
        }
    }

    pub fn albedo(&self) -> DVec3 {
        self.albedo
    }

    fn fresnel(&self, cos: f64) -> DVec3 {
        let m = (1.0 - cos.clamp(0.0, 1.0)).powi(5);
        self.f0 + (self.f90 - self.f0) * m
    }

    fn transmitted(&self, cos: f64) -> f64 {
        1.0 - self.fresnel(cos).max_element()
    }

    fn ggx_d(&self, cos_h: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let t = cos_h * cos_h * (a2 - 1.0) + 1.0;
        a2 / (PI * t * t)
    }

    fn smith_g1(&self, cos: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        2.0 * cos / (cos + (a2 + (1.0 - a2) * cos * cos).sqrt())
    }

    fn specular_probability(&self, cos_o: f64) -> f64 {
        let ws = lum(self.fresnel(cos_o));
        let wd = lum(self.diffuse) * self.transmitted(cos_o) * PI;
        if ws + wd <= 0.0 {
            0.0
        } else {
            ws / (ws + wd)
        }
    }

    pub fn is_black(&self) -> bool {
        self.diffuse == DVec3::ZERO && self.f0 == DVec3::ZERO
    }

    /// BRDF value and solid-angle pdf of [`Brdf::sample`] for the pair.
    pub fn eval(&self, n: DVec3, wo: DVec3, wi: DVec3) -> (DVec3, f64) {
        let cos_o = n.dot(wo);
        let cos_i = n.dot(wi);
        if cos_o <= 0.0 || cos_i <= 0.0 {
            return (DVec3::ZERO, 0.0);
        }
        let ps = self.specular_probability(cos_o);
        let mut f = self.diffuse * (self.transmitted(cos_i) * self.transmitted(cos_o));
        let mut pdf = (1.0 - ps) * cos_i * FRAC_1_PI;
        if ps > 0.0 {
            let h = (wo + wi).normalize();
            let cos_h = n.dot(h).max(0.0);
            let o_h = wo.dot(h).max(1e-12);
            let d = self.ggx_d(cos_h);
            let g = self.smith_g1(cos_i) * self.smith_g1(cos_o);
            f += self.fresnel(o_h) * (d * g / (4.0 * cos_i * cos_o));
            pdf += ps * d * cos_h / (4.0 * o_h);
        }
        (f, pdf)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: DVec3, wo: DVec3, rng: &mut R) -> Option<BrdfSample> {
        let cos_o = n.dot(wo);
        if cos_o <= 0.0 || self.is_black() {
            return None;
        }
        let ps = self.specular_probability(cos_o);
        let (t, b) = basis(n);
        let pick: f64 = rng.gen();
        let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
        let wi = if pick < ps {
            let a2 = self.alpha * self.alpha;
            let cos_h = ((1.0 - u1) / (1.0 + (a2 - 1.0) * u1)).sqrt();
            let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
            let phi = TAU * u2;
            let h = t * (sin_h * phi.cos()) + b * (sin_h * phi.sin()) + n * cos_h;
            2.0 * wo.dot(h) * h - wo
        } else {
            let r = u1.sqrt();
            let phi = TAU * u2;
            t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()
        };
        let (f, pdf) = self.eval(n, wo, wi);
        if pdf <= 0.0 || !pdf.is_finite() {
            return None;
        }
        Some(BrdfSample { wi, f, pdf })
    }
}
