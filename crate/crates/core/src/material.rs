//! PBR metallic-roughness materials, the randomization library and the
//! three material strategies.
//!
//! The default library is regenerated procedurally from a seed with fixed
//! quotas: 40 textureless dielectrics with hue-spread base colors, 30
//! metals and 45 entries carrying an object-space procedural pattern.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::PartInstance;
use crate::seed::{self, uniform, uniform_index};

pub const MIN_ROUGHNESS: f64 = 0.02;
/// Normal-incidence reflectance of a dielectric at `specular = 1`.
pub const DIELECTRIC_F0: f64 = 0.04;

pub const DEFAULT_LIBRARY_SIZE: usize = 115;
pub const QUOTA_DIELECTRIC: usize = 40;
pub const QUOTA_METAL: usize = 30;
pub const QUOTA_TEXTURED: usize = 45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Checker,
    Stripe,
    Noise,
}

/// Procedural albedo pattern evaluated in object space, so meshes need no UVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TexturePattern {
    pub kind: PatternKind,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
    /// Pattern cycles per object-space unit.
    pub frequency: f64,
}

impl TexturePattern {
    /// Blend weight in `[0, 1]` between `color_a` and `color_b` at `p`.
    pub fn weight(&self, p: glam::DVec3) -> f64 {
        let q = p * self.frequency;
        match self.kind {
            PatternKind::Checker => {
                let s = q.x.floor() as i64 + q.y.floor() as i64 + q.z.floor() as i64;
                s.rem_euclid(2) as f64
            }
            PatternKind::Stripe => {
                let s = (q.x + q.y + q.z) / 3f64.sqrt();
                (s.floor() as i64).rem_euclid(2) as f64
            }
            PatternKind::Noise => value_noise(q),
        }
    }

    pub fn color(&self, p: glam::DVec3) -> [f64; 3] {
        let w = self.weight(p);
        std::array::from_fn(|i| self.color_a[i] * (1.0 - w) + self.color_b[i] * w)
    }
}

fn lattice(x: i64, y: i64, z: i64) -> f64 {
    let h = seed::mix64(
        (x as u64).wrapping_mul(0x8da6_b343)
            ^ (y as u64).wrapping_mul(0xd816_3841)
            ^ (z as u64).wrapping_mul(0xcb1a_b31f),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(p: glam::DVec3) -> f64 {
    let f = p.floor();
    let (x, y, z) = (f.x as i64, f.y as i64, f.z as i64);
    let t = p - f;
    let s = t * t * (glam::DVec3::splat(3.0) - 2.0 * t);
    let lerp = |a: f64, b: f64, w: f64| a + (b - a) * w;
    let c = |dx, dy, dz| lattice(x + dx, y + dy, z + dz);
    let x00 = lerp(c(0, 0, 0), c(1, 0, 0), s.x);
    let x10 = lerp(c(0, 1, 0), c(1, 1, 0), s.x);
    let x01 = lerp(c(0, 0, 1), c(1, 0, 1), s.x);
    let x11 = lerp(c(0, 1, 1), c(1, 1, 1), s.x);
    lerp(lerp(x00, x10, s.y), lerp(x01, x11, s.y), s.z)
}

/// Metallic-roughness material parameters. Colors are linear RGB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub base_color: [f64; 3],
    pub metalness: f64,
    pub roughness: f64,
    /// Dielectric reflectance scale; normal-incidence reflectance is
    /// `specular * 0.04`.
    pub specular: f64,
    /// When present, the albedo is `base_color * pattern.color(p)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<TexturePattern>,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            base_color: [0.5; 3],
            metalness: 0.0,
            roughness: 0.5,
            specular: 0.5,
            texture: None,
        }
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl MaterialSpec {
    pub fn lambertian(albedo: f64) -> Self {
        MaterialSpec {
            base_color: [albedo; 3],
            metalness: 0.0,
            roughness: 1.0,
            specular: 0.0,
            texture: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_color.iter().all(|&c| unit(c)) {
            return Err(Error::field("base_color", "channels must lie in [0, 1]"));
        }
        if !unit(self.metalness) {
            return Err(Error::field("metalness", "must lie in [0, 1]"));
        }
        if !(MIN_ROUGHNESS..=1.0).contains(&self.roughness) {
            return Err(Error::field("roughness", "must lie in [0.02, 1]"));
        }
        if !unit(self.specular) {
            return Err(Error::field("specular", "must lie in [0, 1]"));
        }
        if let Some(t) = &self.texture {
            if !t.color_a.iter().chain(&t.color_b).all(|&c| unit(c)) {
                return Err(Error::field("texture", "pattern colors must lie in [0, 1]"));
            }
            if !(t.frequency.is_finite() && t.frequency > 0.0) {
                return Err(Error::field("texture.frequency", "must be positive"));
            }
        }
        Ok(())
    }

    /// Albedo at object-space point `p`.
    pub fn albedo_at(&self, p: glam::DVec3) -> [f64; 3] {
        match &self.texture {
            None => self.base_color,
            Some(t) => {
                let c = t.color(p);
                std::array::from_fn(|i| self.base_color[i] * c[i])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLibrary {
    pub name: String,
    pub entries: Vec<MaterialSpec>,
}

impl MaterialLibrary {
    pub fn new(name: impl Into<String>, entries: Vec<MaterialSpec>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("material library must have at least one entry".into()));
        }
        for (i, m) in entries.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::Config(format!("library entry {i}: {e}")))?;
        }
        Ok(MaterialLibrary {
            name: name.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialized as a bare JSON array of material records.
    pub fn to_json(&self) -> Vec<u8> {
        crate::jsonio::to_json_bytes(&self.entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries: Vec<MaterialSpec> = crate::jsonio::read_json(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        MaterialLibrary::new(name, entries)
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [(r + m).clamp(0.0, 1.0), (g + m).clamp(0.0, 1.0), (b + m).clamp(0.0, 1.0)]
}

fn random_rgb<R: Rng>(rng: &mut R) -> [f64; 3] {
    let h = uniform(rng, 0.0, 1.0);
    let s = uniform(rng, 0.1, 1.0);
    let v = uniform(rng, 0.1, 1.0);
    hsv_to_rgb(h, s, v)
}

/// Deterministically generates the 115-entry default library.
pub fn generate_default_library(seed: u64) -> MaterialLibrary {
    let mut rng = seed::stream(seed);
    let mut entries = Vec::with_capacity(DEFAULT_LIBRARY_SIZE);

    for k in 0..QUOTA_DIELECTRIC {
        let hue = (k as f64 + uniform(&mut rng, 0.0, 1.0)) / QUOTA_DIELECTRIC as f64;
        let sat = uniform(&mut rng, 0.2, 1.0);
        let val = uniform(&mut rng, 0.15, 0.95);
        entries.push(MaterialSpec {
            base_color: hsv_to_rgb(hue, sat, val),
            metalness: uniform(&mut rng, 0.0, 0.05),
            roughness: uniform(&mut rng, MIN_ROUGHNESS, 1.0),
            specular: uniform(&mut rng, 0.0, 1.0),
            texture: None,
        });
    }

    for k in 0..QUOTA_METAL {
        // metals span the hue circle at low saturation, like tinted alloys
        let hue = (k as f64 + uniform(&mut rng, 0.0, 1.0)) / QUOTA_METAL as f64;
        let sat = uniform(&mut rng, 0.0, 0.6);
        let val = uniform(&mut rng, 0.5, 1.0);
        entries.push(MaterialSpec {
            base_color: hsv_to_rgb(hue, sat, val),
            metalness: uniform(&mut rng, 0.92, 1.0),
            roughness: uniform(&mut rng, MIN_ROUGHNESS, 0.8),
            specular: 0.5,
            texture: None,
        });
    }

    let kinds = [PatternKind::Checker, PatternKind::Stripe, PatternKind::Noise];
    for k in 0..QUOTA_TEXTURED {
        let kind = kinds[k % kinds.len()];
        // 1 to 200 cycles per unit, log-spread
        let frequency = seed::log_uniform(&mut rng, 1.0, 200.0);
        let color_a = random_rgb(&mut rng);
        let color_b = random_rgb(&mut rng);
        let metallic = uniform(&mut rng, 0.0, 1.0) < 0.2;
        entries.push(MaterialSpec {
            base_color: [1.0; 3],
            metalness: if metallic {
                uniform(&mut rng, 0.92, 1.0)
            } else {
                uniform(&mut rng, 0.0, 0.05)
            },
            roughness: uniform(&mut rng, MIN_ROUGHNESS, 1.0),
            specular: uniform(&mut rng, 0.0, 1.0),
            texture: Some(TexturePattern {
                kind,
                color_a,
                color_b,
                frequency,
            }),
        });
    }

    MaterialLibrary {
        name: format!("complex-{seed}"),
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialStrategy {
    #[default]
    ComplexLibrary,
    PhotoRealistic,
    RandomColor,
}

/// A drawn material plus its library index when it came from the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialDraw {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library_index: Option<usize>,
    pub material: MaterialSpec,
}

/// Fresh textureless material with every parameter uniform over its range.
pub fn random_color_material<R: Rng>(rng: &mut R) -> MaterialSpec {
    let base_color = [
        uniform(rng, 0.0, 1.0),
        uniform(rng, 0.0, 1.0),
        uniform(rng, 0.0, 1.0),
    ];
    let roughness = uniform(rng, MIN_ROUGHNESS, 1.0);
    let specular = uniform(rng, 0.0, 1.0);
    let metalness = uniform(rng, 0.0, 1.0);
    MaterialSpec {
        base_color,
        metalness,
        roughness,
        specular,
        texture: None,
    }
}

pub fn draw_material<R: Rng>(
    strategy: MaterialStrategy,
    library: &MaterialLibrary,
    part: &PartInstance,
    rng: &mut R,
) -> Result<MaterialDraw> {
    if library.is_empty() {
        return Err(Error::Config("material library is empty".into()));
    }
    match strategy {
        MaterialStrategy::ComplexLibrary => {
            let i = uniform_index(rng, library.len());
            Ok(MaterialDraw {
                library_index: Some(i),
                material: library.entries[i].clone(),
            })
        }
        MaterialStrategy::RandomColor => Ok(MaterialDraw {
            library_index: None,
            material: random_color_material(rng),
        }),
        MaterialStrategy::PhotoRealistic => match &part.material {
            Some(m) => Ok(MaterialDraw {
                library_index: None,
                material: m.clone(),
            }),
            None => Err(Error::Config(format!(
                "photo_realistic strategy needs a fixed material for part {}",
                part.instance_id
            ))),
        },
    }
}

pub fn sample_material<R: Rng>(
    strategy: MaterialStrategy,
    library: &MaterialLibrary,
    part: &PartInstance,
    rng: &mut R,
) -> Result<MaterialSpec> {
    draw_material(strategy, library, part, rng).map(|d| d.material)
}
