//! Per-frame scenario sampling.
//!
//! A [`ScenarioSample`] is a pure function of the configuration, the scene
//! and a frame seed. Draws happen in a fixed order from one ChaCha8 stream:
//! materials (one per part, scene order), HDRI, rotation, intensity, tint
//! (r, g, b), camera (rejection loop, six draws per attempt), background,
//! distractors, noise.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use glam::{DQuat, DVec3, EulerRot};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Transform};
use crate::imaging::LinearImage;
use crate::material::{draw_material, random_color_material, MaterialDraw, MaterialLibrary, MaterialSpec, MaterialStrategy};
use crate::render::{EnvMap, EnvironmentLight};
use crate::scene::primitives::PrimitiveKind;
use crate::scene::{load_mesh, resolve_path, roi_fully_visible, Backplate, Mesh, PartInstance, SceneGraph, MAX_INSTANCE_ID};
use crate::seed::{log_uniform, stream, uniform, uniform_index, uniform_int};

/// Bounds on the sensor noise standard deviation, display units.
pub const MAX_NOISE_SIGMA: f64 = 0.25;
/// Distractor size range in meters (largest extent), sampled log-uniformly.
pub const DISTRACTOR_SIZE: [f64; 2] = [0.01, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// Backplate image drawn from a directory of real photographs.
    RealImagePool(PathBuf),
    /// No backplate; the environment map is the background.
    HdriOnly,
    /// Backplate image drawn from an arbitrary image directory.
    ImagePool(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorMode {
    None,
    Primitive { count: [u32; 2] },
    ComplexMeshPool { dir: PathBuf, count: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub material_strategy: MaterialStrategy,
    /// Environment maps, or directories of `.hdr` files.
    pub hdri_pool: Vec<PathBuf>,
    pub hdri_rotation: [f64; 2],
    pub light_intensity_scale: [f64; 2],
    pub light_color_tint: [f64; 2],
    /// Meters per axis.
    pub camera_translation_jitter: f64,
    /// Radians per axis.
    pub camera_rotation_jitter: f64,
    /// `None` disables noise.
    pub noise_sigma: Option<[f64; 2]>,
    pub background_mode: BackgroundMode,
    pub distractors: DistractorMode,
    pub max_visibility_attempts: u32,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            material_strategy: MaterialStrategy::ComplexLibrary,
            hdri_pool: Vec::new(),
            hdri_rotation: [0.0, TAU],
            light_intensity_scale: [0.3, 3.0],
            light_color_tint: [0.7, 1.3],
            camera_translation_jitter: 0.05,
            camera_rotation_jitter: 5f64.to_radians(),
            noise_sigma: Some([0.0, 0.04]),
            background_mode: BackgroundMode::HdriOnly,
            distractors: DistractorMode::None,
            max_visibility_attempts: 100,
        }
    }
}

fn check_range(field: &'static str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::field(field, format!("range [{}, {}] is empty", r[0], r[1])));
    }
    if r[0] < lo || r[1] > hi {
        return Err(Error::field(field, format!("range [{}, {}] outside [{lo}, {hi}]", r[0], r[1])));
    }
    Ok(())
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hdri_pool.is_empty() {
            return Err(Error::field("randomization.hdri_pool", "must not be empty"));
        }
        check_range("randomization.hdri_rotation", self.hdri_rotation, 0.0, TAU)?;
        check_range("randomization.light_intensity_scale", self.light_intensity_scale, f64::MIN_POSITIVE, f64::MAX)?;
        check_range("randomization.light_color_tint", self.light_color_tint, 0.0, f64::MAX)?;
        if !(self.camera_translation_jitter >= 0.0 && self.camera_translation_jitter.is_finite()) {
            return Err(Error::field("randomization.camera_translation_jitter", "must be finite and >= 0"));
        }
        if !(0.0..PI).contains(&self.camera_rotation_jitter) {
            return Err(Error::field("randomization.camera_rotation_jitter", "must be in [0, pi)"));
        }
        if let Some(r) = self.noise_sigma {
            check_range("randomization.noise_sigma", r, 0.0, MAX_NOISE_SIGMA)?;
        }
        match &self.distractors {
            DistractorMode::None => {}
            DistractorMode::Primitive { count } | DistractorMode::ComplexMeshPool { count, .. } => {
                if count[0] > count[1] {
                    return Err(Error::field("randomization.distractors.count", "range is empty"));
                }
            }
        }
        if self.max_visibility_attempts == 0 {
            return Err(Error::field("randomization.max_visibility_attempts", "must be positive"));
        }
        Ok(())
    }
}

/// An entry drawn from a file pool: its position in the sorted pool and
/// its file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolChoice {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorShape {
    Primitive(PrimitiveKind),
    Mesh(PoolChoice),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorPlacement {
    pub shape: DistractorShape,
    pub instance_id: u32,
    pub transform: Transform,
    pub material: MaterialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartMaterial {
    pub instance_id: u32,
    #[serde(flatten)]
    pub draw: MaterialDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub frame_seed: u64,
    pub materials: Vec<PartMaterial>,
    pub hdri: PoolChoice,
    pub hdri_rotation: f64,
    pub light_intensity_scale: f64,
    pub light_color_tint: [f64; 3],
    pub camera_pose: Transform,
    pub background: Option<PoolChoice>,
    pub distractors: Vec<DistractorPlacement>,
    pub noise_sigma: f64,
}

fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Lazily loaded pool of files.
struct Pool<T> {
    paths: Vec<PathBuf>,
    loaded: Vec<OnceLock<Arc<T>>>,
}

impl<T> Pool<T> {
    fn new(paths: Vec<PathBuf>) -> Self {
        let loaded = paths.iter().map(|_| OnceLock::new()).collect();
        Pool { paths, loaded }
    }

    fn choice(&self, index: usize) -> PoolChoice {
        PoolChoice {
            index,
            name: file_name(&self.paths[index]),
        }
    }

    fn get(&self, index: usize, load: impl Fn(&Path) -> Result<T>) -> Result<Arc<T>> {
        let path = self
            .paths
            .get(index)
            .ok_or_else(|| Error::Structure(format!("pool index {index} out of range ({} entries)", self.paths.len())))?;
        if let Some(v) = self.loaded[index].get() {
            return Ok(v.clone());
        }
        let v = Arc::new(load(path)?);
        Ok(self.loaded[index].get_or_init(|| v).clone())
    }
}

/// A validated [`RandomizationConfig`] with its file pools resolved and a
/// material library attached. Assets load on first use and are shared
/// between threads.
pub struct Randomizer {
    config: RandomizationConfig,
    library: Arc<MaterialLibrary>,
    hdris: Pool<EnvMap>,
    backgrounds: Pool<LinearImage>,
    meshes: Pool<Mesh>,
    primitives: Vec<Arc<Mesh>>,
}

impl Randomizer {
    /// Relative paths in `config` resolve against `base`.
    pub fn new(config: RandomizationConfig, base: &Path, library: Arc<MaterialLibrary>) -> Result<Self> {
        config.validate()?;
        let mut hdris = Vec::new();
        for entry in &config.hdri_pool {
            let p = resolve_path(base, entry);
            if p.is_dir() {
                let found = list_files(&p, &["hdr"])?;
                if found.is_empty() {
                    return Err(Error::field("randomization.hdri_pool", format!("{} holds no .hdr files", p.display())));
                }
                hdris.extend(found);
            } else if p.is_file() {
                hdris.push(p);
            } else {
                return Err(Error::MissingFiles(vec![p]));
            }
        }
        let backgrounds = match &config.background_mode {
            BackgroundMode::HdriOnly => Vec::new(),
            BackgroundMode::RealImagePool(dir) | BackgroundMode::ImagePool(dir) => {
                let found = list_files(&resolve_path(base, dir), &["png", "jpg", "jpeg"])?;
                if found.is_empty() {
                    return Err(Error::field("randomization.background_mode", format!("{} holds no images", dir.display())));
                }
                found
            }
        };
        let meshes = match &config.distractors {
            DistractorMode::ComplexMeshPool { dir, .. } => {
                let found = list_files(&resolve_path(base, dir), &["obj"])?;
                if found.is_empty() {
                    return Err(Error::Config(format!("distractor mesh pool {} is empty", dir.display())));
                }
                found
            }
            _ => Vec::new(),
        };
        let primitives = match config.distractors {
            DistractorMode::Primitive { .. } => PrimitiveKind::ALL.iter().map(|k| Arc::new(k.mesh())).collect(),
            _ => Vec::new(),
        };
        Ok(Randomizer {
            config,
            library,
            hdris: Pool::new(hdris),
            backgrounds: Pool::new(backgrounds),
            meshes: Pool::new(meshes),
            primitives,
        })
    }

    pub fn config(&self) -> &RandomizationConfig {
        &self.config
    }

    pub fn library(&self) -> &MaterialLibrary {
        &self.library
    }

    pub fn hdri_count(&self) -> usize {
        self.hdris.paths.len()
    }

    fn hdri(&self, i: usize) -> Result<Arc<EnvMap>> {
        self.hdris.get(i, EnvMap::load_hdr)
    }

    fn background(&self, i: usize) -> Result<Arc<LinearImage>> {
        self.backgrounds.get(i, LinearImage::load_srgb)
    }

    fn mesh(&self, shape: &DistractorShape) -> Result<Arc<Mesh>> {
        match shape {
            DistractorShape::Primitive(kind) => {
                let i = PrimitiveKind::ALL.iter().position(|k| k == kind).unwrap_or(0);
                match self.primitives.get(i) {
                    Some(m) => Ok(m.clone()),
                    None => Ok(Arc::new(kind.mesh())),
                }
            }
            DistractorShape::Mesh(choice) => self.meshes.get(choice.index, load_mesh),
        }
    }
}

/// Uniformly distributed rotation (Shoemake); three draws.
fn random_rotation<R: rand::Rng>(rng: &mut R) -> DQuat {
    let u1 = uniform(rng, 0.0, 1.0);
    let u2 = uniform(rng, 0.0, TAU);
    let u3 = uniform(rng, 0.0, TAU);
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    DQuat::from_xyzw(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()).normalize()
}

/// Inner and outer radius of the placement shell around the ROI.
fn distractor_shell(roi: &Aabb) -> (f64, f64) {
    let inner = 0.5 * roi.diagonal();
    (inner, (2.0 * inner).max(inner + 0.3))
}

pub fn sample_scenario(r: &Randomizer, scene: &SceneGraph, frame_seed: u64) -> Result<ScenarioSample> {
    let cfg = &r.config;
    let mut rng = stream(frame_seed);

    let mut materials = Vec::with_capacity(scene.parts.len());
    for part in &scene.parts {
        materials.push(PartMaterial {
            instance_id: part.instance_id,
            draw: draw_material(cfg.material_strategy, &r.library, part, &mut rng)?,
        });
    }

    let hdri = r.hdris.choice(uniform_index(&mut rng, r.hdri_count()));
    let hdri_rotation = uniform(&mut rng, cfg.hdri_rotation[0], cfg.hdri_rotation[1]);
    let [ilo, ihi] = cfg.light_intensity_scale;
    let light_intensity_scale = log_uniform(&mut rng, ilo, ihi);
    let [tlo, thi] = cfg.light_color_tint;
    let light_color_tint = [uniform(&mut rng, tlo, thi), uniform(&mut rng, tlo, thi), uniform(&mut rng, tlo, thi)];

    let base = scene.camera.pose;
    let (t, a) = (cfg.camera_translation_jitter, cfg.camera_rotation_jitter);
    let mut camera = scene.camera.clone();
    let mut accepted = false;
    for _ in 0..cfg.max_visibility_attempts {
        let dt = DVec3::new(uniform(&mut rng, -t, t), uniform(&mut rng, -t, t), uniform(&mut rng, -t, t));
        let (rx, ry, rz) = (uniform(&mut rng, -a, a), uniform(&mut rng, -a, a), uniform(&mut rng, -a, a));
        let jitter = if (rx, ry, rz) == (0.0, 0.0, 0.0) {
            DQuat::IDENTITY
        } else {
            DQuat::from_euler(EulerRot::XYZ, rx, ry, rz)
        };
        camera.pose = Transform::new(base.translation + dt, (base.rotation * jitter).normalize(), base.scale);
        if roi_fully_visible(&camera, &scene.roi) {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::ScenarioExhausted {
            frame: None,
            constraint: "camera keeps the ROI fully visible",
            attempts: cfg.max_visibility_attempts,
        });
    }

    let background = match cfg.background_mode {
        BackgroundMode::HdriOnly => None,
        _ => {
            if scene.backplate.is_none() {
                return Err(Error::Config("background image pools need a backplate in the scene".into()));
            }
            Some(r.backgrounds.choice(uniform_index(&mut rng, r.backgrounds.paths.len())))
        }
    };

    let distractors = sample_distractors(r, scene, camera.position(), &mut rng)?;

    let noise_sigma = match cfg.noise_sigma {
        Some([lo, hi]) => uniform(&mut rng, lo, hi),
        None => 0.0,
    };

    Ok(ScenarioSample {
        frame_seed,
        materials,
        hdri,
        hdri_rotation,
        light_intensity_scale,
        light_color_tint,
        camera_pose: camera.pose,
        background,
        distractors,
        noise_sigma,
    })
}

/// Per distractor: shape, size, position (rejection loop, three draws per
/// attempt), rotation, material.
fn sample_distractors(r: &Randomizer, scene: &SceneGraph, camera: DVec3, rng: &mut crate::seed::Stream) -> Result<Vec<DistractorPlacement>> {
    let count = match &r.config.distractors {
        DistractorMode::None => return Ok(Vec::new()),
        DistractorMode::Primitive { count } | DistractorMode::ComplexMeshPool { count, .. } => {
            uniform_int(rng, count[0], count[1])
        }
    };
    let first_id = scene.max_instance_id() + 1;
    if count > 0 && first_id + count - 1 > MAX_INSTANCE_ID {
        return Err(Error::Config(format!("{count} distractors exceed the instance id range")));
    }
    let roi = *scene.roi.bounds();
    let (inner, outer) = distractor_shell(&roi);
    let center = roi.center();
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let shape = match &r.config.distractors {
            DistractorMode::Primitive { .. } => DistractorShape::Primitive(PrimitiveKind::ALL[uniform_index(rng, PrimitiveKind::ALL.len())]),
            _ => DistractorShape::Mesh(r.meshes.choice(uniform_index(rng, r.meshes.paths.len()))),
        };
        let mesh = r.mesh(&shape)?;
        let local = mesh.bounds();
        let size = log_uniform(rng, DISTRACTOR_SIZE[0], DISTRACTOR_SIZE[1]);
        let scale = size / local.extent().max_element().max(1e-12);
        let mut position = None;
        for _ in 0..r.config.max_visibility_attempts {
            // uniform in the shell volume
            let z = uniform(rng, -1.0, 1.0);
            let phi = uniform(rng, 0.0, TAU);
            let u = uniform(rng, 0.0, 1.0);
            let radius = (inner.powi(3) + u * (outer.powi(3) - inner.powi(3))).cbrt();
            let s = (1.0 - z * z).max(0.0).sqrt();
            let p = center + radius * DVec3::new(s * phi.cos(), s * phi.sin(), z);
            // conservative box: sphere around the scaled local bounds
            let half = 0.5 * scale * local.diagonal();
            let b = Aabb::new(p - DVec3::splat(half), p + DVec3::splat(half));
            if !b.intersects(&roi) && !b.contains_point(camera) {
                position = Some(p);
                break;
            }
        }
        let Some(p) = position else {
            return Err(Error::ScenarioExhausted {
                frame: None,
                constraint: "distractor clear of the ROI",
                attempts: r.config.max_visibility_attempts,
            });
        };
        let rotation = random_rotation(rng);
        let translation = p - rotation * (scale * local.center());
        out.push(DistractorPlacement {
            shape,
            instance_id: first_id + k,
            transform: Transform::new(translation, rotation, scale),
            material: random_color_material(rng),
        });
    }
    Ok(out)
}

/// Binds `sample` into a copy of `scene`.
pub fn apply_scenario(r: &Randomizer, scene: &SceneGraph, sample: &ScenarioSample) -> Result<SceneGraph> {
    if sample.materials.len() != scene.parts.len() {
        return Err(Error::Structure(format!(
            "scenario binds {} materials to a scene with {} parts",
            sample.materials.len(),
            scene.parts.len()
        )));
    }
    let mut out = scene.clone();
    for (part, m) in out.parts.iter_mut().zip(&sample.materials) {
        part.material = Some(m.draw.material.clone());
    }
    out.environment = EnvironmentLight {
        map: r.hdri(sample.hdri.index)?,
        rotation: sample.hdri_rotation,
        intensity_scale: sample.light_intensity_scale,
        color_tint: sample.light_color_tint,
    };
    out.camera.pose = sample.camera_pose;
    out.backplate = match (&sample.background, &scene.backplate) {
        (None, _) => None,
        (Some(choice), Some(plate)) => Some(Backplate {
            corners: plate.corners,
            image: r.background(choice.index)?,
            image_path: Some(r.backgrounds.paths[choice.index].clone()),
        }),
        (Some(_), None) => return Err(Error::Structure("scenario sets a background but the scene has no backplate".into())),
    };
    for d in &sample.distractors {
        out.parts.push(PartInstance {
            mesh: r.mesh(&d.shape)?,
            mesh_path: match &d.shape {
                DistractorShape::Mesh(c) => Some(r.meshes.paths[c.index].clone()),
                DistractorShape::Primitive(_) => None,
            },
            transform: d.transform,
            class_label: None,
            instance_id: d.instance_id,
            material: Some(d.material.clone()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::generate_default_library;
    use crate::scene::{primitives, PinholeCamera, RegionOfInterest};
    use crate::seed::frame_seed;

    fn write_hdris(dir: &Path, n: usize) {
        for i in 0..n {
            let img = image::Rgb32FImage::from_fn(16, 8, |x, _| image::Rgb([1.0 + i as f32, x as f32 * 0.1, 0.5]));
            img.save(dir.join(format!("env_{i:02}.hdr"))).unwrap();
        }
    }

    fn scene() -> SceneGraph {
        let part = |id: u32, x: f64, label: Option<&str>| PartInstance {
            mesh: Arc::new(primitives::cube()),
            mesh_path: None,
            transform: Transform::new(DVec3::new(x, 0.0, 0.0), DQuat::IDENTITY, 0.1),
            class_label: label.map(Into::into),
            instance_id: id,
            material: None,
        };
        let mut s = SceneGraph {
            parts: vec![part(1, -0.2, Some("screw")), part(2, 0.2, Some("screw")), part(5, 0.0, None)],
            camera: PinholeCamera::look_at(DVec3::new(0.0, 0.3, 1.5), DVec3::ZERO, DVec3::Y, 0.8, 64, 64),
            environment: EnvironmentLight::default(),
            backplate: None,
            roi: RegionOfInterest(Aabb::EMPTY),
        };
        s.roi = RegionOfInterest(s.labeled_bounds());
        s.validate().unwrap();
        s
    }

    fn randomizer(dir: &Path, config: RandomizationConfig) -> Result<Randomizer> {
        Randomizer::new(config, dir, Arc::new(generate_default_library(1)))
    }

    fn config_with_pool() -> RandomizationConfig {
        RandomizationConfig {
            hdri_pool: vec!["hdris".into()],
            ..Default::default()
        }
    }

    fn setup(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("hdris")).unwrap();
        write_hdris(&dir.path().join("hdris"), n);
        dir
    }

    #[test]
    fn zero_variance_config_reproduces_the_scene() {
        let dir = setup(1);
        let cfg = RandomizationConfig {
            hdri_rotation: [0.0, 0.0],
            light_intensity_scale: [1.0, 1.0],
            light_color_tint: [1.0, 1.0],
            camera_translation_jitter: 0.0,
            camera_rotation_jitter: 0.0,
            noise_sigma: Some([0.0, 0.0]),
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let s = scene();
        let sample = sample_scenario(&r, &s, 99).unwrap();
        assert_eq!(sample.hdri.index, 0);
        assert_eq!(sample.hdri_rotation, 0.0);
        assert_eq!(sample.light_intensity_scale, 1.0);
        assert_eq!(sample.light_color_tint, [1.0; 3]);
        assert_eq!(sample.camera_pose, s.camera.pose);
        assert_eq!(sample.noise_sigma, 0.0);
        assert!(sample.distractors.is_empty() && sample.background.is_none());
        let out = apply_scenario(&r, &s, &sample).unwrap();
        assert_eq!(out.parts.len(), s.parts.len());
        for (a, b) in out.parts.iter().zip(&s.parts) {
            assert_eq!((a.instance_id, &a.class_label, a.transform), (b.instance_id, &b.class_label, b.transform));
            assert!(a.material.is_some());
        }
        assert_eq!(out.camera, s.camera);
    }

    #[test]
    fn sampling_is_deterministic() {
        let dir = setup(4);
        let cfg = RandomizationConfig {
            distractors: DistractorMode::Primitive { count: [0, 4] },
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let s = scene();
        for seed in 0..50 {
            let a = sample_scenario(&r, &s, seed).unwrap();
            let b = sample_scenario(&r, &s, seed).unwrap();
            assert_eq!(a, b);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<ScenarioSample>(&json).unwrap(), a);
        }
    }

    #[test]
    fn every_sample_keeps_the_roi_visible_and_clear() {
        let dir = setup(2);
        let cfg = RandomizationConfig {
            camera_translation_jitter: 0.3,
            camera_rotation_jitter: 0.2,
            distractors: DistractorMode::Primitive { count: [1, 6] },
            max_visibility_attempts: 1000,
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let s = scene();
        for seed in 0..300 {
            let sample = sample_scenario(&r, &s, frame_seed(3, seed)).unwrap();
            let out = apply_scenario(&r, &s, &sample).unwrap();
            assert!(roi_fully_visible(&out.camera, &out.roi));
            assert_eq!(out.parts.len(), s.parts.len() + sample.distractors.len());
            for d in &out.parts[s.parts.len()..] {
                assert!(!d.world_bounds().intersects(s.roi.bounds()));
                assert!(d.class_label.is_none() && d.instance_id > 5);
            }
            let labeled = |g: &SceneGraph| g.labeled_parts().map(|p| p.instance_id).collect::<Vec<_>>();
            assert_eq!(labeled(&out), labeled(&s));
        }
    }

    /// Monte Carlo acceptance estimate with an independent projection.
    fn acceptance_oracle(s: &SceneGraph, jitter: f64, trials: u32) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_pcg::Pcg64::seed_from_u64(17);
        let corners = s.roi.bounds().corners();
        let (w, h) = (f64::from(s.camera.width), f64::from(s.camera.height));
        let f = 0.5 * h / (0.5 * s.camera.vertical_fov).tan();
        let mut hits = 0;
        for _ in 0..trials {
            let eye = s.camera.pose.translation
                + DVec3::new(rng.gen_range(-jitter..jitter), rng.gen_range(-jitter..jitter), rng.gen_range(-jitter..jitter));
            let inv = s.camera.pose.rotation.inverse();
            let ok = corners.iter().all(|&c| {
                let q = inv * (c - eye);
                let d = -q.z;
                d > 0.0 && {
                    let (u, v) = (w / 2.0 + f * q.x / d, h / 2.0 - f * q.y / d);
                    (0.0..=w).contains(&u) && (0.0..=h).contains(&v)
                }
            });
            hits += u32::from(ok);
        }
        f64::from(hits) / f64::from(trials)
    }

    #[test]
    fn huge_jitter_with_one_attempt_mostly_fails() {
        let dir = setup(1);
        let s = scene();
        let distance = s.camera.position().distance(s.roi.bounds().center());
        let jitter = 101.0 * distance;
        let cfg = RandomizationConfig {
            camera_translation_jitter: jitter,
            camera_rotation_jitter: 0.0,
            max_visibility_attempts: 1,
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let n = 1000;
        let errors = (0..n)
            .filter(|&i| match sample_scenario(&r, &s, frame_seed(11, i)) {
                Err(Error::ScenarioExhausted { constraint, .. }) => {
                    assert!(constraint.contains("ROI"));
                    true
                }
                Err(e) => panic!("{e}"),
                Ok(_) => false,
            })
            .count();
        let rate = errors as f64 / n as f64;
        assert!(rate > 0.9, "{rate}");
        let p = 1.0 - acceptance_oracle(&s, jitter, 200_000);
        let sd = (p * (1.0 - p) / n as f64).sqrt().max(1e-3);
        assert!((rate - p).abs() < 5.0 * sd, "rate {rate} oracle {p}");
    }

    #[test]
    fn distractor_count_is_conserved() {
        let dir = setup(1);
        let cfg = RandomizationConfig {
            distractors: DistractorMode::Primitive { count: [3, 3] },
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let s = scene();
        let sample = sample_scenario(&r, &s, 4).unwrap();
        let out = apply_scenario(&r, &s, &sample).unwrap();
        assert_eq!(out.parts.len(), s.parts.len() + 3);
        assert_eq!(out.parts.iter().filter(|p| !p.is_labeled()).count(), 1 + 3);
        assert_eq!(sample.distractors.iter().map(|d| d.instance_id).collect::<Vec<_>>(), vec![6, 7, 8]);
    }

    #[test]
    fn mesh_pool_distractors_load_and_scale() {
        let dir = setup(1);
        fs::create_dir(dir.path().join("meshes")).unwrap();
        primitives::sphere(8, 4).save(&dir.path().join("meshes/a.obj")).unwrap();
        let cfg = RandomizationConfig {
            distractors: DistractorMode::ComplexMeshPool { dir: "meshes".into(), count: [2, 2] },
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        let s = scene();
        let sample = sample_scenario(&r, &s, 8).unwrap();
        let out = apply_scenario(&r, &s, &sample).unwrap();
        for d in &out.parts[3..] {
            let e = d.world_bounds().extent().max_element();
            assert!((DISTRACTOR_SIZE[0] * 0.5..=DISTRACTOR_SIZE[1] * 1.8).contains(&e), "{e}");
        }
    }

    #[test]
    fn empty_mesh_pool_is_a_config_error() {
        let dir = setup(1);
        fs::create_dir(dir.path().join("meshes")).unwrap();
        let cfg = RandomizationConfig {
            distractors: DistractorMode::ComplexMeshPool { dir: "meshes".into(), count: [1, 2] },
            ..config_with_pool()
        };
        assert!(matches!(randomizer(dir.path(), cfg), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let dir = setup(1);
        let bad = [
            RandomizationConfig { hdri_pool: vec![], ..Default::default() },
            RandomizationConfig { noise_sigma: Some([0.0, 0.3]), ..config_with_pool() },
            RandomizationConfig { light_intensity_scale: [0.0, 1.0], ..config_with_pool() },
            RandomizationConfig { hdri_rotation: [1.0, 0.5], ..config_with_pool() },
            RandomizationConfig { max_visibility_attempts: 0, ..config_with_pool() },
        ];
        let fields = ["hdri_pool", "noise_sigma", "light_intensity_scale", "hdri_rotation", "max_visibility_attempts"];
        for (cfg, field) in bad.into_iter().zip(fields) {
            let err = randomizer(dir.path(), cfg).err().unwrap();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn image_pool_needs_backplate() {
        let dir = setup(1);
        fs::create_dir(dir.path().join("bg")).unwrap();
        image::RgbImage::from_pixel(8, 8, image::Rgb([10, 20, 30])).save(dir.path().join("bg/a.png")).unwrap();
        let cfg = RandomizationConfig {
            background_mode: BackgroundMode::ImagePool("bg".into()),
            ..config_with_pool()
        };
        let r = randomizer(dir.path(), cfg).unwrap();
        assert!(matches!(sample_scenario(&r, &scene(), 1), Err(Error::Config(_))));
    }
}
