//! Campaign orchestration: per-frame sampling, rendering, labeling and
//! export, with deterministic splits, a manifest, and resumable output.
//!
//! Output layout, relative to the campaign's output directory:
//!
//! ```text
//! config.json          resolved configuration, without the output directory
//! checkpoint.json      config digests; present from the first frame on
//! materials.json       material library snapshot
//! images/{train,val}/NNNNNN.png
//! ids/{train,val}/NNNNNN.png        16-bit instance-ID maps
//! scenarios/NNNNNN.json             per-frame record, written last
//! annotations/{train,val}.json      COCO
//! manifest.json                     written when every frame is done
//! ```
//!
//! A frame counts as complete once its scenario record exists; the record
//! is renamed into place after the images, so an interrupted frame is
//! simply rendered again.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{add_sensor_noise, quantize, read_png_ids, tonemap, write_png_ids, write_png_rgb};
use crate::jsonio::{read_json, to_json_bytes, write_atomic, write_json};
use crate::label::{apply_policy, export_coco, measure_visibility, CocoDataset, ImageRecord, InstanceAnnotation, InstanceVisibility, LabelPolicy};
use crate::material::{generate_default_library, MaterialLibrary};
use crate::randomizer::{apply_scenario, sample_scenario, RandomizationConfig, Randomizer, ScenarioSample};
use crate::render::{build_bvh, trace, RenderSettings};
use crate::scene::{load_scene, resolve_path, SceneGraph};
use crate::seed::{frame_seed, noise_seed, split_bucket};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DRGEN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Val];

    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Frame `index` goes to validation iff its split bucket (a hash of the
/// master seed and the index, mod 100) is below `round((1 - train) * 100)`.
pub fn assign_split(master_seed: u64, index: u64, train_fraction: f64) -> Split {
    let val_buckets = ((1.0 - train_fraction) * 100.0).round() as u64;
    if split_bucket(master_seed, index) < val_buckets {
        Split::Val
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub scene: PathBuf,
    #[serde(default)]
    pub randomization: RandomizationConfig,
    #[serde(default)]
    pub render: RenderSettings,
    #[serde(default)]
    pub labels: LabelPolicy,
    #[serde(default = "default_total")]
    pub total_images: u64,
    /// Fraction of frames assigned to training.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Material library file; the default library seeded with the master
    /// seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_library: Option<PathBuf>,
}

fn default_total() -> u64 {
    10_000
}

fn default_split() -> f64 {
    0.8
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl CampaignConfig {
    /// Reads a config file; relative paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: CampaignConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.scene = resolve_path(base, &self.scene);
        self.output_dir = resolve_path(base, &self.output_dir);
        if let Some(lib) = &mut self.material_library {
            *lib = resolve_path(base, lib);
        }
        let r = &mut self.randomization;
        for p in &mut r.hdri_pool {
            *p = resolve_path(base, p);
        }
        use crate::randomizer::{BackgroundMode, DistractorMode};
        if let BackgroundMode::RealImagePool(d) | BackgroundMode::ImagePool(d) = &mut r.background_mode {
            *d = resolve_path(base, d);
        }
        if let DistractorMode::ComplexMeshPool { dir, .. } = &mut r.distractors {
            *dir = resolve_path(base, dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_images < 1 {
            return Err(Error::field("total_images", "must be >= 1"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::field("split", format!("train fraction {} is outside (0, 1)", self.split)));
        }
        self.randomization.validate()?;
        self.render.validate()?;
        self.labels.validate()
    }

    /// Normalized JSON: defaults filled in, keys sorted, output directory
    /// removed.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        v
    }

    /// SHA-256 of the normalized JSON.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.snapshot()).expect("value serializes"))
    }

    /// Digest of everything that affects pixels, i.e. all but the label
    /// policy.
    pub fn render_digest(&self) -> String {
        let mut v = self.snapshot();
        if let Some(m) = v.as_object_mut() {
            m.remove("labels");
        }
        sha256_hex(&serde_json::to_vec(&v).expect("value serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_digest: String,
    pub render_digest: String,
    pub total_images: u64,
    pub tool_version: String,
}

/// Per-frame record stored under `scenarios/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: u64,
    pub frame_seed: u64,
    pub split: Split,
    pub image: String,
    pub ids: String,
    pub width: u32,
    pub height: u32,
    pub scenario: ScenarioSample,
    pub visibility: Vec<InstanceVisibility>,
    pub annotations: Vec<InstanceAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: u64,
    pub frame_seed: u64,
    pub split: Split,
    pub image: String,
    pub scenario_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryReference {
    pub file: String,
    pub name: String,
    pub entries: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub materials: LibraryReference,
    pub categories: Vec<String>,
    pub split_counts: BTreeMap<Split, u64>,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join("manifest.json"))
    }
}

fn frame_name(index: u64) -> String {
    format!("{index:06}")
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))
}

/// A loaded campaign: scene, randomizer and library ready for rendering.
pub struct Campaign {
    pub config: CampaignConfig,
    pub scene: SceneGraph,
    pub randomizer: Randomizer,
    pub library: Arc<MaterialLibrary>,
}

impl Campaign {
    /// `config` paths must already be resolved.
    pub fn new(config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        let mut scene = load_scene(&config.scene)?;
        // labels and ROI checks happen at the output resolution
        scene.camera.width = config.render.width;
        scene.camera.height = config.render.height;
        scene.validate()?;
        let library = Arc::new(match &config.material_library {
            Some(p) => MaterialLibrary::load(p)?,
            None => generate_default_library(config.master_seed),
        });
        // pool paths are already resolved against the config file
        let randomizer = Randomizer::new(config.randomization.clone(), Path::new(""), library.clone())?;
        Ok(Campaign {
            config,
            scene,
            randomizer,
            library,
        })
    }

    pub fn load(config_path: &Path) -> Result<Self> {
        Campaign::new(CampaignConfig::load(config_path)?)
    }

    pub fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn frame_seed(&self, index: u64) -> u64 {
        frame_seed(self.config.master_seed, index)
    }

    pub fn split_of(&self, index: u64) -> Split {
        assign_split(self.config.master_seed, index, self.config.split)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_digest: self.config.digest(),
            render_digest: self.config.render_digest(),
            total_images: self.config.total_images,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    pub fn sample(&self, index: u64) -> Result<ScenarioSample> {
        sample_scenario(&self.randomizer, &self.scene, self.frame_seed(index)).map_err(|e| match e {
            Error::ScenarioExhausted { constraint, attempts, .. } => Error::ScenarioExhausted {
                frame: Some(index),
                constraint,
                attempts,
            },
            other => other,
        })
    }

    /// Renders and labels frame `index` and writes its files under `out`.
    pub fn render_frame(&self, index: u64, out: &Path) -> Result<FrameRecord> {
        let seed = self.frame_seed(index);
        let split = self.split_of(index);
        let sample = self.sample(index)?;
        let scene = apply_scenario(&self.randomizer, &self.scene, &sample)?;
        let bvh = build_bvh(&scene);
        let settings = RenderSettings {
            seed,
            ..self.config.render.clone()
        };
        let frame = trace(&scene, &bvh, &settings);
        let beauty = if sample.noise_sigma > 0.0 {
            let display = tonemap(frame.width, frame.height, &frame.radiance);
            quantize(&add_sensor_noise(&display, sample.noise_sigma, noise_seed(seed))?)
        } else {
            frame.beauty.clone()
        };
        let visibility = measure_visibility(frame.width, frame.height, &frame.instance_id, &scene)?;
        let annotations = apply_policy(&visibility, &self.config.labels);

        let name = frame_name(index);
        let image = format!("images/{}/{name}.png", split.dir());
        let ids = format!("ids/{}/{name}.png", split.dir());
        write_png_rgb(&out.join(&image), &beauty)?;
        write_png_ids(&out.join(&ids), frame.width, frame.height, &frame.instance_id)?;
        let record = FrameRecord {
            index,
            frame_seed: seed,
            split,
            image,
            ids,
            width: frame.width,
            height: frame.height,
            scenario: sample,
            visibility,
            annotations,
        };
        write_json(&out.join("scenarios").join(format!("{name}.json")), &record)?;
        Ok(record)
    }

    fn prepare_layout(&self, out: &Path) -> Result<()> {
        for split in Split::ALL {
            create_dir(&out.join("images").join(split.dir()))?;
            create_dir(&out.join("ids").join(split.dir()))?;
        }
        create_dir(&out.join("scenarios"))?;
        create_dir(&out.join("annotations"))
    }

    /// Creates the output directory and writes config, library and
    /// checkpoint. Refuses a directory that already holds a campaign.
    pub fn prepare(&self) -> Result<()> {
        let out = self.out();
        if out.join("checkpoint.json").exists() {
            return Err(Error::ResumeRefused(format!(
                "{} already holds a campaign; resume it instead",
                out.display()
            )));
        }
        let mut seen = HashSet::new();
        for i in 0..self.config.total_images {
            if !seen.insert(self.frame_seed(i)) {
                return Err(Error::Structure(format!("frame seed collision at frame {i}")));
            }
        }
        self.prepare_layout(out)?;
        write_json(&out.join("config.json"), &self.config.snapshot())?;
        write_atomic(&out.join("materials.json"), &self.library.to_json())?;
        write_json(&out.join("checkpoint.json"), &self.checkpoint())
    }

    pub fn is_complete(&self, index: u64) -> bool {
        let path = self.out().join("scenarios").join(format!("{}.json", frame_name(index)));
        read_json::<FrameRecord>(&path).is_ok_and(|r| r.index == index)
    }

    /// Renders every frame in `range` that is not complete yet.
    pub fn render_frames(&self, range: Range<u64>) -> Result<()> {
        let todo: Vec<u64> = range.filter(|&i| !self.is_complete(i)).collect();
        with_pool(|| {
            todo.par_iter().try_for_each(|&i| {
                log::info!("frame {i}");
                self.render_frame(i, self.out()).map(|_| ())
            })
        })
    }

    fn load_records(&self) -> Result<Vec<FrameRecord>> {
        (0..self.config.total_images)
            .map(|i| read_json(&self.out().join("scenarios").join(format!("{}.json", frame_name(i)))))
            .collect()
    }

    /// Writes COCO files and the manifest from the per-frame records.
    pub fn finalize(&self) -> Result<DatasetManifest> {
        let records = self.load_records()?;
        let categories = self.scene.class_labels();
        write_coco(self.out(), &records, &categories, |r| r.annotations.clone())?;
        let lib_bytes = self.library.to_json();
        let mut split_counts = BTreeMap::new();
        for s in Split::ALL {
            split_counts.insert(s, records.iter().filter(|r| r.split == s).count() as u64);
        }
        let manifest = DatasetManifest {
            tool_version: TOOL_VERSION.to_string(),
            config_digest: self.config.digest(),
            config: self.config.snapshot(),
            materials: LibraryReference {
                file: "materials.json".into(),
                name: self.library.name.clone(),
                entries: self.library.len(),
                digest: sha256_hex(&lib_bytes),
            },
            categories,
            split_counts,
            records: records
                .iter()
                .map(|r| ManifestRecord {
                    index: r.index,
                    frame_seed: r.frame_seed,
                    split: r.split,
                    image: r.image.clone(),
                    scenario_digest: sha256_hex(&to_json_bytes(&r.scenario)),
                })
                .collect(),
        };
        write_json(&self.out().join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    fn check_checkpoint(&self) -> Result<Checkpoint> {
        let path = self.out().join("checkpoint.json");
        if !path.exists() {
            return Err(Error::ResumeRefused(format!("no checkpoint in {}", self.out().display())));
        }
        let cp: Checkpoint = read_json(&path)?;
        Ok(cp)
    }
}

/// Runs `f` on a pool capped by `DRGEN_THREADS` when that is set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn write_coco(out: &Path, records: &[FrameRecord], categories: &[String], annotations: impl Fn(&FrameRecord) -> Vec<InstanceAnnotation>) -> Result<()> {
    for split in Split::ALL {
        let frames: Vec<(ImageRecord, Vec<InstanceAnnotation>)> = records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                (
                    ImageRecord {
                        id: r.index + 1,
                        file_name: r.image.clone(),
                        width: r.width,
                        height: r.height,
                    },
                    annotations(r),
                )
            })
            .collect();
        export_coco(&frames, categories)?.save(&out.join("annotations").join(format!("{}.json", split.dir())))?;
    }
    Ok(())
}

/// Runs a campaign from scratch.
pub fn run_campaign(config: CampaignConfig) -> Result<DatasetManifest> {
    let campaign = Campaign::new(config)?;
    campaign.prepare()?;
    campaign.render_frames(0..campaign.config.total_images)?;
    campaign.finalize()
}

/// Completes the missing frames of an interrupted campaign. The supplied
/// configuration must match the checkpoint exactly.
pub fn resume_campaign(config: CampaignConfig) -> Result<DatasetManifest> {
    let campaign = Campaign::new(config)?;
    let cp = campaign.check_checkpoint()?;
    let digest = campaign.config.digest();
    if cp.config_digest != digest {
        return Err(Error::ResumeRefused(format!(
            "config digest {digest} differs from the checkpoint's {}",
            cp.config_digest
        )));
    }
    let manifest_path = campaign.out().join("manifest.json");
    if manifest_path.exists() {
        if let Ok(m) = DatasetManifest::load(campaign.out()) {
            if m.config_digest == digest && m.records.len() as u64 == campaign.config.total_images {
                return Ok(m);
            }
        }
    }
    campaign.prepare_layout(campaign.out())?;
    campaign.render_frames(0..campaign.config.total_images)?;
    campaign.finalize()
}

/// Resumes the campaign stored in `dir` using its own `config.json`.
pub fn resume_directory(dir: &Path) -> Result<DatasetManifest> {
    let mut value: serde_json::Value = read_json(&dir.join("config.json"))?;
    if let Some(m) = value.as_object_mut() {
        m.insert("output_dir".into(), serde_json::to_value(dir).map_err(|e| Error::Structure(e.to_string()))?);
    }
    let config: CampaignConfig = serde_json::from_value(value).map_err(|e| Error::Structure(format!("config.json: {e}")))?;
    resume_campaign(config)
}

/// Renders frame `index` standalone into `out` with the campaign layout,
/// including single-image COCO files.
pub fn render_one(campaign: &Campaign, index: u64, out: &Path) -> Result<FrameRecord> {
    if index >= campaign.config.total_images {
        return Err(Error::field("frame", format!("index {index} is outside the campaign's {} frames", campaign.config.total_images)));
    }
    campaign.prepare_layout(out)?;
    let record = with_pool(|| campaign.render_frame(index, out))?;
    write_coco(out, std::slice::from_ref(&record), &campaign.scene.class_labels(), |r| r.annotations.clone())?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelSummary {
    pub frames: u64,
    pub annotations: BTreeMap<Split, usize>,
    pub output: PathBuf,
}

/// Re-derives annotations from the stored ID maps under the label policy
/// of `config`, without rendering. Pixel counts and boxes come from the ID
/// maps; unoccluded counts from the frame records. COCO files go to
/// `out/annotations/` (the dataset itself by default).
pub fn relabel(config: CampaignConfig, out: Option<&Path>) -> Result<RelabelSummary> {
    config.validate()?;
    let campaign = Campaign::new(config)?;
    let cp = campaign.check_checkpoint()?;
    if cp.render_digest != campaign.config.render_digest() {
        return Err(Error::ResumeRefused(
            "the stored frames were rendered with different settings; only the label policy may change".into(),
        ));
    }
    let records = campaign.load_records()?;
    let policy = campaign.config.labels.clone();
    let mut relabeled = Vec::with_capacity(records.len());
    for r in &records {
        let (w, h, ids) = read_png_ids(&campaign.out().join(&r.ids))?;
        if (w, h) != (r.width, r.height) {
            return Err(Error::Structure(format!("{} is {w}x{h}, record says {}x{}", r.ids, r.width, r.height)));
        }
        let stored: BTreeMap<u32, &InstanceVisibility> = r.visibility.iter().map(|v| (v.instance_id, v)).collect();
        let labeled: BTreeMap<u32, String> = r.visibility.iter().map(|v| (v.instance_id, v.class_label.clone())).collect();
        let fresh = visibility_from_ids(w, &ids, &labeled)
            .into_iter()
            .map(|mut v| {
                v.unoccluded_pixels = stored.get(&v.instance_id).map_or(v.visible_pixels, |s| s.unoccluded_pixels);
                v
            })
            .collect::<Vec<_>>();
        relabeled.push(apply_policy(&fresh, &policy));
    }
    let target = out.unwrap_or(campaign.out()).to_owned();
    create_dir(&target.join("annotations"))?;
    let by_index: BTreeMap<u64, &Vec<InstanceAnnotation>> = records.iter().map(|r| r.index).zip(&relabeled).collect();
    write_coco(&target, &records, &campaign.scene.class_labels(), |r| by_index[&r.index].clone())?;
    let mut annotations = BTreeMap::new();
    for s in Split::ALL {
        let n = records.iter().zip(&relabeled).filter(|(r, _)| r.split == s).map(|(_, a)| a.len()).sum();
        annotations.insert(s, n);
    }
    Ok(RelabelSummary {
        frames: records.len() as u64,
        annotations,
        output: target,
    })
}

/// Visible pixel counts and boxes for the labeled ids of an ID map.
fn visibility_from_ids(width: u32, ids: &[u32], labeled: &BTreeMap<u32, String>) -> Vec<InstanceVisibility> {
    let mut ext: BTreeMap<u32, (u64, [u32; 4])> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if !labeled.contains_key(&id) {
            continue;
        }
        let (x, y) = (i as u32 % width, i as u32 / width);
        let e = ext.entry(id).or_insert((0, [x, y, x, y]));
        e.0 += 1;
        e.1 = [e.1[0].min(x), e.1[1].min(y), e.1[2].max(x), e.1[3].max(y)];
    }
    labeled
        .iter()
        .map(|(&id, label)| {
            let (count, b) = ext.get(&id).copied().unwrap_or((0, [0; 4]));
            InstanceVisibility {
                instance_id: id,
                class_label: label.clone(),
                visible_pixels: count,
                unoccluded_pixels: count,
                bbox: (count > 0).then(|| [b[0], b[1], b[2] - b[0] + 1, b[3] - b[1] + 1]),
            }
        })
        .collect()
}

/// Draw histograms over simulated scenario samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub samples: u64,
    /// Library index counts over every part of every sample (library
    /// strategy only).
    pub material_counts: Vec<u64>,
    pub hdri_names: Vec<String>,
    pub hdri_counts: Vec<u64>,
    pub rotation_range: [f64; 2],
    pub rotation_histogram: Vec<u64>,
    /// Raw rotation angles, for distribution tests.
    #[serde(skip)]
    pub rotations: Vec<f64>,
}

pub const ROTATION_BINS: usize = 16;

/// Samples the scenarios of frames `0..samples` without rendering.
pub fn draw_statistics(campaign: &Campaign, samples: u64) -> Result<DrawStats> {
    let drawn: Vec<ScenarioSample> = with_pool(|| (0..samples).into_par_iter().map(|i| campaign.sample(i)).collect::<Result<_>>())?;
    let mut material_counts = vec![0u64; campaign.library.len()];
    let mut hdri_counts = vec![0u64; campaign.randomizer.hdri_count()];
    let mut hdri_names = vec![String::new(); hdri_counts.len()];
    let range = campaign.config.randomization.hdri_rotation;
    let mut rotation_histogram = vec![0u64; ROTATION_BINS];
    let mut rotations = Vec::with_capacity(drawn.len());
    for s in &drawn {
        for m in &s.materials {
            if let Some(i) = m.draw.library_index {
                material_counts[i] += 1;
            }
        }
        hdri_counts[s.hdri.index] += 1;
        hdri_names[s.hdri.index] = s.hdri.name.clone();
        let width = range[1] - range[0];
        let bin = if width > 0.0 {
            (((s.hdri_rotation - range[0]) / width * ROTATION_BINS as f64) as usize).min(ROTATION_BINS - 1)
        } else {
            0
        };
        rotation_histogram[bin] += 1;
        rotations.push(s.hdri_rotation);
    }
    Ok(DrawStats {
        samples,
        material_counts,
        hdri_names,
        hdri_counts,
        rotation_range: range,
        rotation_histogram,
        rotations,
    })
}

impl DrawStats {
    pub fn render_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let bar = |n: u64, max: u64| "#".repeat(((n as f64 / max.max(1) as f64) * 50.0).round() as usize);
        let _ = writeln!(s, "samples: {}", self.samples);
        let _ = writeln!(s, "\nHDRI selection");
        let max = self.hdri_counts.iter().copied().max().unwrap_or(0);
        for (i, (&n, name)) in self.hdri_counts.iter().zip(&self.hdri_names).enumerate() {
            let _ = writeln!(s, "{i:>4} {name:<24} {n:>8} {}", bar(n, max));
        }
        let _ = writeln!(s, "\nHDRI rotation [{:.4}, {:.4})", self.rotation_range[0], self.rotation_range[1]);
        let max = self.rotation_histogram.iter().copied().max().unwrap_or(0);
        for (i, &n) in self.rotation_histogram.iter().enumerate() {
            let _ = writeln!(s, "{i:>4} {n:>8} {}", bar(n, max));
        }
        let total: u64 = self.material_counts.iter().sum();
        if total > 0 {
            let (lo, hi) = (
                self.material_counts.iter().min().copied().unwrap_or(0),
                self.material_counts.iter().max().copied().unwrap_or(0),
            );
            let _ = writeln!(s, "\nmaterials: {total} draws over {} entries, min {lo}, max {hi}", self.material_counts.len());
            let max = hi;
            for (i, &n) in self.material_counts.iter().enumerate() {
                let _ = writeln!(s, "{i:>4} {n:>8} {}", bar(n, max));
            }
        }
        s
    }
}

/// COCO document of one split of a generated dataset.
pub fn load_split(dir: &Path, split: Split) -> Result<CocoDataset> {
    CocoDataset::load(&dir.join("annotations").join(format!("{}.json", split.dir())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_fraction_is_close() {
        let val = (0..10_000).filter(|&i| assign_split(5, i, 0.8) == Split::Val).count();
        assert!((val as i64 - 2000).abs() <= 150, "{val}");
        assert!((0..1000).all(|i| assign_split(5, i, 0.999) == Split::Train));
    }

    #[test]
    fn digest_ignores_output_dir_but_not_noise() {
        let cfg = CampaignConfig {
            scene: "scene.json".into(),
            randomization: RandomizationConfig::default(),
            render: RenderSettings::default(),
            labels: LabelPolicy::default(),
            total_images: 10,
            split: 0.8,
            master_seed: 1,
            output_dir: "a".into(),
            material_library: None,
        };
        let moved = CampaignConfig { output_dir: "b".into(), ..cfg.clone() };
        assert_eq!(cfg.digest(), moved.digest());
        let mut noisy = cfg.clone();
        noisy.randomization.noise_sigma = Some([0.0, 0.05]);
        assert_ne!(cfg.digest(), noisy.digest());
        let mut relabeled = cfg.clone();
        relabeled.labels.min_visible_pixels = 3;
        assert_ne!(cfg.digest(), relabeled.digest());
        assert_eq!(cfg.render_digest(), relabeled.render_digest());
    }

    #[test]
    fn split_out_of_range_names_the_field() {
        let cfg = CampaignConfig {
            scene: "scene.json".into(),
            randomization: RandomizationConfig { hdri_pool: vec!["x.hdr".into()], ..Default::default() },
            render: RenderSettings::default(),
            labels: LabelPolicy::default(),
            total_images: 10,
            split: 1.5,
            master_seed: 1,
            output_dir: "a".into(),
            material_library: None,
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("split"));
    }

    #[test]
    fn ids_visibility_matches_extents() {
        let ids = vec![0, 3, 3, 0, 0, 3, 7, 7, 0];
        let labeled: BTreeMap<u32, String> = [(3, "a".to_string()), (9, "b".to_string())].into();
        let v = visibility_from_ids(3, &ids, &labeled);
        assert_eq!(v[0].bbox, Some([1, 0, 2, 2]));
        assert_eq!(v[0].visible_pixels, 3);
        assert_eq!((v[1].instance_id, v[1].bbox), (9, None));
    }
}
