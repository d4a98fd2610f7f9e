//! Toy scene fixture: screw-like cylinders and a cover on a plate, a
//! backplate, 16 small HDRIs, two background image pools and a distractor
//! mesh pool, all written into a temporary directory.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use drgen::dataset::CampaignConfig;
use drgen::geometry::Transform;
use drgen::label::LabelPolicy;
use drgen::material::MaterialSpec;
use drgen::randomizer::RandomizationConfig;
use drgen::render::RenderSettings;
use drgen::scene::{primitives, BackplateRecord, EnvironmentRecord, Mesh, PartRecord, PinholeCamera, SceneFile};
use glam::{DQuat, DVec3};

pub const HDRI_COUNT: usize = 16;

pub struct Toy {
    pub dir: tempfile::TempDir,
}

impl Toy {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn scene(&self) -> PathBuf {
        self.path().join("scene.json")
    }

    /// Small campaign over the toy scene: 64x64, 4 spp, default randomization.
    pub fn config(&self, out: &str, total: u64) -> CampaignConfig {
        CampaignConfig {
            scene: self.scene(),
            randomization: RandomizationConfig {
                hdri_pool: vec![self.path().join("hdri")],
                ..Default::default()
            },
            render: RenderSettings {
                width: 64,
                height: 64,
                samples_per_pixel: 4,
                max_bounces: 4,
                ..Default::default()
            },
            labels: LabelPolicy::default(),
            total_images: total,
            split: 0.8,
            master_seed: 7,
            output_dir: self.path().join(out),
            material_library: None,
        }
    }

    /// Writes `config` as JSON next to the scene and returns its path.
    pub fn write_config(&self, name: &str, config: &CampaignConfig) -> PathBuf {
        let path = self.path().join(name);
        std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
        path
    }
}

fn stretched(mesh: Mesh, scale: DVec3, offset: DVec3) -> Mesh {
    let vertices = mesh.vertices.iter().map(|v| *v * scale + offset).collect();
    Mesh::from_triangles(vertices, mesh.triangles)
}

fn write_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
}

pub fn toy() -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for sub in ["meshes", "hdri", "bg_real", "bg_generic", "distractors"] {
        std::fs::create_dir_all(p.join(sub)).unwrap();
    }

    // plate top at y = 0; screw 4 cm wide, 5 cm tall
    stretched(primitives::cube(), DVec3::new(0.4, 0.02, 0.3), DVec3::new(0.0, -0.01, 0.0))
        .save(&p.join("meshes/plate.obj"))
        .unwrap();
    stretched(primitives::cylinder(16), DVec3::new(0.04, 0.05, 0.04), DVec3::new(0.0, 0.025, 0.0))
        .save(&p.join("meshes/screw.obj"))
        .unwrap();
    primitives::cube().save(&p.join("meshes/cube.obj")).unwrap();

    for i in 0..HDRI_COUNT {
        // a warm sun at a different azimuth per map over a cool sky
        let sun = (i * 2) as u32;
        let img = image::Rgb32FImage::from_fn(32, 16, |x, y| {
            if x == sun && y == 4 {
                image::Rgb([40.0, 36.0, 30.0])
            } else {
                let t = y as f32 / 15.0;
                image::Rgb([0.6 - 0.3 * t, 0.7 - 0.3 * t, 0.9 - 0.4 * t])
            }
        });
        img.save(p.join(format!("hdri/room_{i:02}.hdr"))).unwrap();
    }
    for i in 0..3u32 {
        write_png(&p.join(format!("bg_real/line_{i}.png")), 32, 32, |x, y| {
            let v = (60 + 30 * i + (x + y) % 40) as u8;
            [v, v, v.saturating_add(10)]
        });
        write_png(&p.join(format!("bg_generic/photo_{i}.png")), 32, 32, |x, y| {
            [(x * 8) as u8, (y * 8) as u8, (80 * i) as u8]
        });
    }
    primitives::sphere(12, 6).save(&p.join("distractors/ball.obj")).unwrap();
    primitives::cylinder(10).save(&p.join("distractors/peg.obj")).unwrap();
    primitives::cube().save(&p.join("distractors/block.obj")).unwrap();
    write_png(&p.join("backplate.png"), 16, 16, |x, y| if (x / 4 + y / 4) % 2 == 0 { [90; 3] } else { [150; 3] });

    let steel = MaterialSpec {
        base_color: [0.8, 0.8, 0.82],
        metalness: 1.0,
        roughness: 0.35,
        specular: 0.5,
        texture: None,
    };
    let part = |mesh: &str, at: [f64; 3], scale: f64, label: Option<&str>, id: u32, material: MaterialSpec| PartRecord {
        mesh: mesh.into(),
        transform: Transform::new(DVec3::from(at), DQuat::IDENTITY, scale),
        class_label: label.map(Into::into),
        instance_id: id,
        material: Some(material),
    };
    let scene = SceneFile {
        parts: vec![
            part("meshes/plate.obj", [0.0; 3], 1.0, None, 1, MaterialSpec::lambertian(0.4)),
            part("meshes/screw.obj", [-0.08, 0.0, 0.0], 1.0, Some("screw"), 2, steel.clone()),
            part("meshes/screw.obj", [0.08, 0.0, 0.0], 1.0, Some("screw"), 3, steel.clone()),
            part("meshes/screw.obj", [0.0, 0.0, 0.06], 1.0, Some("screw"), 4, steel),
            part(
                "meshes/cube.obj",
                [0.0, 0.03, -0.06],
                0.06,
                Some("cover"),
                5,
                MaterialSpec {
                    base_color: [0.1, 0.2, 0.6],
                    metalness: 0.0,
                    roughness: 0.6,
                    specular: 0.5,
                    texture: None,
                },
            ),
        ],
        camera: PinholeCamera::look_at(DVec3::new(0.0, 0.35, 0.25), DVec3::ZERO, DVec3::Y, 0.7, 64, 64),
        roi: None,
        backplate: Some(BackplateRecord {
            corners: [[-1.5, -0.1, -1.5], [1.5, -0.1, -1.5], [1.5, -0.1, 1.5], [-1.5, -0.1, 1.5]],
            image: Some("backplate.png".into()),
        }),
        environment: Some(EnvironmentRecord::Constant([0.8; 3])),
    };
    scene.save(&p.join("scene.json")).unwrap();
    Toy { dir }
}

/// Every file under `dir`, relative, sorted.
pub fn tree(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, d: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push(path.strip_prefix(base).unwrap().to_owned());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Relative paths whose bytes differ between two directories, plus files
/// present in only one of them.
pub fn differing_files(a: &Path, b: &Path) -> Vec<PathBuf> {
    let (ta, tb) = (tree(a), tree(b));
    let mut diff: Vec<PathBuf> = ta.iter().filter(|p| !tb.contains(p)).cloned().collect();
    diff.extend(tb.iter().filter(|p| !ta.contains(p)).cloned());
    for p in ta.iter().filter(|p| tb.contains(p)) {
        if std::fs::read(a.join(p)).unwrap() != std::fs::read(b.join(p)).unwrap() {
            diff.push(p.clone());
        }
    }
    diff.sort();
    diff
}
