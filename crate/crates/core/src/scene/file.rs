//! JSON scene description. Relative paths resolve against the directory
//! containing the scene file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::{load_mesh, Backplate, Mesh, PartInstance, PinholeCamera, RegionOfInterest, SceneGraph};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Transform};
use crate::imaging::LinearImage;
use crate::jsonio::{read_json, to_json_bytes};
use crate::material::MaterialSpec;
use crate::render::{EnvMap, EnvironmentLight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRecord {
    pub mesh: PathBuf,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub class_label: Option<String>,
    pub instance_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackplateRecord {
    /// Top-left, top-right, bottom-right, bottom-left.
    pub corners: [[f64; 3]; 4],
    /// Photo shown on the plate; mid-grey when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentRecord {
    Constant([f64; 3]),
    Hdri(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub parts: Vec<PartRecord>,
    pub camera: PinholeCamera,
    /// Defaults to the union of the labeled parts' bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backplate: Option<BackplateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentRecord>,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_json_bytes(self)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Every file the scene references, resolved against `base`.
    pub fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = self.parts.iter().map(|p| resolve(base, &p.mesh)).collect();
        if let Some(img) = self.backplate.as_ref().and_then(|b| b.image.as_ref()) {
            files.push(resolve(base, img));
        }
        if let Some(EnvironmentRecord::Hdri(p)) = &self.environment {
            files.push(resolve(base, p));
        }
        files.sort();
        files.dedup();
        files
    }

    /// Loads meshes and images and builds a validated scene graph.
    pub fn instantiate(&self, base: &Path) -> Result<SceneGraph> {
        let missing: Vec<PathBuf> = self.referenced_files(base).into_iter().filter(|p| !p.exists()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }

        let mut meshes: HashMap<PathBuf, Arc<Mesh>> = HashMap::new();
        let mut parts = Vec::with_capacity(self.parts.len());
        for rec in &self.parts {
            let path = resolve(base, &rec.mesh);
            let mesh = match meshes.get(&path) {
                Some(m) => m.clone(),
                None => {
                    let m = Arc::new(load_mesh(&path)?);
                    meshes.insert(path.clone(), m.clone());
                    m
                }
            };
            parts.push(PartInstance {
                mesh,
                mesh_path: Some(path),
                transform: rec.transform,
                class_label: rec.class_label.clone(),
                instance_id: rec.instance_id,
                material: rec.material.clone(),
            });
        }

        let backplate = match &self.backplate {
            None => None,
            Some(b) => {
                let (image, image_path) = match &b.image {
                    Some(p) => {
                        let path = resolve(base, p);
                        (LinearImage::load_srgb(&path)?, Some(path))
                    }
                    None => (LinearImage::constant(1, 1, [0.214; 3]), None),
                };
                Some(Backplate {
                    corners: b.corners.map(DVec3::from),
                    image: Arc::new(image),
                    image_path,
                })
            }
        };

        let environment = match &self.environment {
            None => EnvironmentLight::default(),
            Some(EnvironmentRecord::Constant(c)) => {
                if !c.iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return Err(Error::field("environment.constant", "radiance must be finite and >= 0"));
                }
                EnvironmentLight::new(Arc::new(EnvMap::constant(c.map(|v| v as f32))))
            }
            Some(EnvironmentRecord::Hdri(p)) => {
                EnvironmentLight::new(Arc::new(EnvMap::load_hdr(&resolve(base, p))?))
            }
        };

        let mut scene = SceneGraph {
            parts,
            camera: self.camera.clone(),
            environment,
            backplate,
            roi: RegionOfInterest(Aabb::EMPTY),
        };
        scene.roi = RegionOfInterest(self.roi.unwrap_or_else(|| scene.labeled_bounds()));
        scene.validate()?;
        Ok(scene)
    }
}

pub fn load_scene(path: &Path) -> Result<SceneGraph> {
    let file = SceneFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.instantiate(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::primitives;

    fn write_scene(dir: &Path) -> SceneFile {
        primitives::cube().save(&dir.join("cube.obj")).unwrap();
        SceneFile {
            parts: vec![
                PartRecord {
                    mesh: "cube.obj".into(),
                    transform: Transform::from_translation(DVec3::new(0.0, 0.0, -0.5)),
                    class_label: None,
                    instance_id: 1,
                    material: None,
                },
                PartRecord {
                    mesh: "cube.obj".into(),
                    transform: Transform::new(DVec3::new(0.0, 0.2, 0.1), glam::DQuat::IDENTITY, 0.1),
                    class_label: Some("screw".into()),
                    instance_id: 2,
                    material: None,
                },
            ],
            camera: PinholeCamera::look_at(DVec3::new(0.0, 0.0, 2.0), DVec3::ZERO, DVec3::Y, 0.9, 64, 48),
            roi: None,
            backplate: Some(BackplateRecord {
                corners: [[-3.0, 3.0, -2.0], [3.0, 3.0, -2.0], [3.0, -3.0, -2.0], [-3.0, -3.0, -2.0]],
                image: None,
            }),
            environment: Some(EnvironmentRecord::Constant([0.5; 3])),
        }
    }

    #[test]
    fn scene_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let file = write_scene(dir.path());
        let path = dir.path().join("scene.json");
        file.save(&path).unwrap();
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.parts.len(), 2);
        assert!(Arc::ptr_eq(&scene.parts[0].mesh, &scene.parts[1].mesh));
        assert_eq!(scene.class_labels(), vec!["screw".to_string()]);
        assert!(scene.roi.0.contains_box(&scene.parts[1].world_bounds()));
        assert_eq!(SceneFile::load(&path).unwrap(), file);
    }

    #[test]
    fn missing_mesh_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = write_scene(dir.path());
        file.parts[0].mesh = "nope.obj".into();
        file.parts[1].mesh = "gone.obj".into();
        let err = file.instantiate(dir.path()).unwrap_err();
        match err {
            Error::MissingFiles(list) => assert_eq!(list.len(), 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_ids_and_unlabeled_scenes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = write_scene(dir.path());
        file.parts[1].instance_id = 1;
        assert!(file.instantiate(dir.path()).is_err());
        let mut file = write_scene(dir.path());
        file.parts[1].class_label = None;
        assert!(file.instantiate(dir.path()).is_err());
    }

    #[test]
    fn backplate_through_roi_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = write_scene(dir.path());
        file.backplate.as_mut().unwrap().corners = [[-3.0, 3.0, 0.1], [3.0, 3.0, 0.1], [3.0, -3.0, 0.1], [-3.0, -3.0, 0.1]];
        let err = file.instantiate(dir.path()).unwrap_err();
        assert!(err.to_string().contains("backplate"), "{err}");
    }

    #[test]
    fn camera_inside_mesh_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = write_scene(dir.path());
        file.camera.pose.translation = DVec3::new(0.1, 0.1, -0.4);
        let err = file.instantiate(dir.path()).unwrap_err();
        assert!(err.to_string().contains("inside"), "{err}");
    }

    #[test]
    fn unknown_fields_report_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, r#"{"parts": [{"mesh": "a.obj", "instance_id": 1, "colour": 3}]}"#).unwrap();
        let err = SceneFile::load(&path).unwrap_err().to_string();
        assert!(err.contains("parts[0]"), "{err}");
    }
}
