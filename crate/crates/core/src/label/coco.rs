//! COCO object-detection documents: writer for the labeler and reader for
//! the evaluation harness.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InstanceAnnotation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDataset {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        crate::jsonio::to_json_bytes(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: CocoDataset = crate::jsonio::read_json(path)?;
        doc.check()?;
        Ok(doc)
    }

    pub fn category_id(&self, name: &str) -> Option<u64> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn category_name(&self, id: u64) -> Option<&str> {
        self.categories.iter().find(|c| c.id == id).map(|c| c.name.as_str())
    }

    /// Unique ids and names, and annotations that point at known images
    /// and categories.
    pub fn check(&self) -> Result<()> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(Error::Structure(format!("duplicate image id {}", img.id)));
            }
        }
        let mut cat_ids = HashSet::new();
        let mut names = HashSet::new();
        for c in &self.categories {
            if !cat_ids.insert(c.id) {
                return Err(Error::Structure(format!("duplicate category id {}", c.id)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Structure(format!("duplicate category name {}", c.name)));
            }
        }
        let mut ann_ids = HashSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.id) {
                return Err(Error::Structure(format!("duplicate annotation id {}", a.id)));
            }
            if !image_ids.contains(&a.image_id) {
                return Err(Error::Structure(format!("annotation {} references unknown image {}", a.id, a.image_id)));
            }
            if !cat_ids.contains(&a.category_id) {
                return Err(Error::Structure(format!(
                    "annotation {} references unknown category {}",
                    a.id, a.category_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

/// Builds a COCO document. Categories get ids `1..` in the given order;
/// images are sorted by id, annotations by (image id, instance id), and
/// annotation ids are dense from 1.
pub fn export_coco(frames: &[(ImageRecord, Vec<InstanceAnnotation>)], categories: &[String]) -> Result<CocoDataset> {
    let mut seen = HashSet::new();
    for name in categories {
        if !seen.insert(name.as_str()) {
            return Err(Error::Structure(format!("duplicate category name {name}")));
        }
    }
    let mut image_ids = HashSet::new();
    for (img, _) in frames {
        if !image_ids.insert(img.id) {
            return Err(Error::Structure(format!("duplicate image id {}", img.id)));
        }
    }

    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| frames[i].0.id);

    let mut doc = CocoDataset {
        images: Vec::with_capacity(frames.len()),
        annotations: Vec::new(),
        categories: categories
            .iter()
            .enumerate()
            .map(|(i, name)| CocoCategory {
                id: i as u64 + 1,
                name: name.clone(),
            })
            .collect(),
    };
    for i in order {
        let (img, anns) = &frames[i];
        doc.images.push(CocoImage {
            id: img.id,
            file_name: img.file_name.clone(),
            width: img.width,
            height: img.height,
        });
        let mut anns: Vec<&InstanceAnnotation> = anns.iter().collect();
        anns.sort_by_key(|a| a.instance_id);
        if let Some(w) = anns.windows(2).find(|w| w[0].instance_id == w[1].instance_id) {
            return Err(Error::Structure(format!(
                "instance {} annotated twice in image {}",
                w[0].instance_id, img.id
            )));
        }
        for a in anns {
            let category_id = doc
                .category_id(&a.class_label)
                .ok_or_else(|| Error::Structure(format!("unknown category {}", a.class_label)))?;
            let [x, y, w, h] = a.bbox.map(f64::from);
            doc.annotations.push(CocoAnnotation {
                id: doc.annotations.len() as u64 + 1,
                image_id: img.id,
                category_id,
                bbox: [x, y, w, h],
                area: w * h,
                iscrowd: 0,
            });
        }
    }
    Ok(doc)
}
