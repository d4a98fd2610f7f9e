//! Equirectangular environment lighting with luminance-proportional
//! importance sampling through a Vose alias table.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::Arc;

use glam::{DQuat, DVec3};
use rand::Rng;

use crate::error::{Error, Result};

pub const MIN_ENV_WIDTH: u32 = 8;
pub const MIN_ENV_HEIGHT: u32 = 4;

pub fn luminance(c: [f64; 3]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

/// Walker/Vose alias table over a discrete distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
    pmf: Vec<f64>,
}

impl AliasTable {
    /// Returns `None` when the weights sum to zero.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut scaled: Vec<f64> = pmf.iter().map(|p| p * n as f64).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        Some(AliasTable { prob, alias, pmf })
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    pub fn pmf(&self, i: usize) -> f64 {
        self.pmf[i]
    }

    /// Maps one uniform in `[0, 1)` to an index.
    pub fn sample(&self, u: f64) -> usize {
        let n = self.prob.len();
        let scaled = u * n as f64;
        let slot = (scaled as usize).min(n - 1);
        let frac = scaled - slot as f64;
        if frac < self.prob[slot] {
            slot
        } else {
            self.alias[slot] as usize
        }
    }
}

/// HDR radiance map in equirectangular layout: column `u` maps to azimuth
/// `phi = 2 pi u` measured from +x towards +z, row `v` to polar angle
/// `theta = pi v` measured from +y.
#[derive(Debug, Clone)]
pub struct EnvMap {
    pub width: u32,
    pub height: u32,
    pub texels: Vec<[f32; 3]>,
    table: Option<AliasTable>,
    max_radiance: f64,
}

impl EnvMap {
    pub fn new(width: u32, height: u32, texels: Vec<[f32; 3]>) -> Result<Self> {
        if width < MIN_ENV_WIDTH || height < MIN_ENV_HEIGHT {
            return Err(Error::field("environment", "map must be at least 8x4"));
        }
        if texels.len() != (width * height) as usize {
            return Err(Error::Structure("environment texel count mismatch".into()));
        }
        if !texels.iter().flatten().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(Error::field("environment", "radiance must be finite and >= 0"));
        }
        // MIS compensation: sample only the radiance above the solid-angle
        // mean, weighted by each texel's solid angle. Uniform parts of the
        // map are left to BRDF sampling, which handles them without
        // variance; a constant map gets no light sampling at all.
        let lum_sin: Vec<(f64, f64)> = texels
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let row = (i as u32 / width) as f64;
                let theta = PI * (row + 0.5) / f64::from(height);
                (luminance(t.map(f64::from)), theta.sin())
            })
            .collect();
        let total_sin: f64 = lum_sin.iter().map(|&(_, s)| s).sum();
        let mean = lum_sin.iter().map(|&(l, s)| l * s).sum::<f64>() / total_sin;
        let floor = mean * (1.0 + 1e-9);
        let weights: Vec<f64> = lum_sin
            .iter()
            .map(|&(l, s)| if l > floor { (l - mean) * s } else { 0.0 })
            .collect();
        let max_radiance = texels
            .iter()
            .flatten()
            .fold(0.0f64, |m, &c| m.max(f64::from(c)));
        Ok(EnvMap {
            width,
            height,
            table: AliasTable::new(&weights),
            texels,
            max_radiance,
        })
    }

    pub fn constant(rgb: [f32; 3]) -> Self {
        EnvMap::new(MIN_ENV_WIDTH, MIN_ENV_HEIGHT, vec![rgb; 32]).expect("valid constant map")
    }

    pub fn black() -> Self {
        EnvMap::constant([0.0; 3])
    }

    /// Loads a Radiance RGBE (`.hdr`) file.
    pub fn load_hdr(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::image(format!("reading {}", path.display()), e))?
            .into_rgb32f();
        let (w, h) = img.dimensions();
        let texels = img.pixels().map(|p| p.0).collect();
        EnvMap::new(w, h, texels).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn max_radiance(&self) -> f64 {
        self.max_radiance
    }

    fn texel_index(&self, d: DVec3) -> (usize, f64) {
        let phi = d.z.atan2(d.x);
        let u = (phi / TAU).rem_euclid(1.0);
        let cos_theta = d.y.clamp(-1.0, 1.0);
        let v = cos_theta.acos() / PI;
        let x = ((u * f64::from(self.width)) as u32).min(self.width - 1);
        let y = ((v * f64::from(self.height)) as u32).min(self.height - 1);
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        ((y * self.width + x) as usize, sin_theta)
    }

    /// Nearest-texel lookup; the piecewise-constant radiance matches the
    /// sampling density exactly.
    pub fn lookup(&self, d: DVec3) -> [f64; 3] {
        self.texels[self.texel_index(d).0].map(f64::from)
    }

    /// Solid-angle density of [`EnvMap::sample`] for direction `d` in map space.
    pub fn pdf(&self, d: DVec3) -> f64 {
        let Some(table) = &self.table else { return 0.0 };
        let (i, sin_theta) = self.texel_index(d);
        if sin_theta <= 0.0 {
            return 0.0;
        }
        table.pmf(i) * f64::from(self.width) * f64::from(self.height) / (2.0 * PI * PI * sin_theta)
    }

    pub fn can_sample(&self) -> bool {
        self.table.is_some()
    }

    /// Map-space direction and its density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(DVec3, f64)> {
        let table = self.table.as_ref()?;
        let i = table.sample(rng.gen());
        let (x, y) = (i as u32 % self.width, i as u32 / self.width);
        let u = (f64::from(x) + rng.gen::<f64>()) / f64::from(self.width);
        let v = (f64::from(y) + rng.gen::<f64>()) / f64::from(self.height);
        let (phi, theta) = (TAU * u, PI * v);
        let d = DVec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
        let pdf = self.pdf(d);
        (pdf > 0.0).then_some((d, pdf))
    }
}

/// An environment map placed in the world: rotated about +y and scaled by
/// an intensity and a per-channel tint.
#[derive(Debug, Clone)]
pub struct EnvironmentLight {
    pub map: Arc<EnvMap>,
    pub rotation: f64,
    pub intensity_scale: f64,
    pub color_tint: [f64; 3],
}

impl Default for EnvironmentLight {
    fn default() -> Self {
        EnvironmentLight::new(Arc::new(EnvMap::black()))
    }
}

impl EnvironmentLight {
    pub fn new(map: Arc<EnvMap>) -> Self {
        EnvironmentLight {
            map,
            rotation: 0.0,
            intensity_scale: 1.0,
            color_tint: [1.0; 3],
        }
    }

    pub fn constant(radiance: f64) -> Self {
        EnvironmentLight::new(Arc::new(EnvMap::constant([radiance as f32; 3])))
    }

    fn to_map(&self) -> DQuat {
        DQuat::from_rotation_y(-self.rotation)
    }

    pub fn radiance(&self, world_dir: DVec3) -> [f64; 3] {
        let c = self.map.lookup(self.to_map() * world_dir);
        std::array::from_fn(|i| c[i] * self.intensity_scale * self.color_tint[i])
    }

    pub fn pdf(&self, world_dir: DVec3) -> f64 {
        self.map.pdf(self.to_map() * world_dir)
    }

    pub fn can_sample(&self) -> bool {
        self.map.can_sample() && self.intensity_scale > 0.0 && self.color_tint.iter().any(|&t| t > 0.0)
    }

    /// World direction, radiance and solid-angle pdf.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(DVec3, [f64; 3], f64)> {
        let (d, pdf) = self.map.sample(rng)?;
        let world = DQuat::from_rotation_y(self.rotation) * d;
        Some((world, self.radiance(world), pdf))
    }

    /// Upper bound of the emitted radiance over all directions and channels.
    pub fn max_radiance(&self) -> f64 {
        let tint = self.color_tint.iter().fold(0.0f64, |m, &t| m.max(t));
        self.map.max_radiance() * self.intensity_scale * tint
    }
}
