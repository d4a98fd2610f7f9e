//! Triangle meshes and the ASCII `v` / `vn` / `f` interchange format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use glam::DVec3;

use crate::error::{Error, Result};
use crate::geometry::Aabb;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<DVec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<DVec3>,
}

impl Mesh {
    /// Builds a mesh and computes area-weighted vertex normals.
    pub fn from_triangles(vertices: Vec<DVec3>, triangles: Vec<[u32; 3]>) -> Self {
        let normals = area_weighted_normals(&vertices, &triangles);
        Mesh {
            vertices,
            triangles,
            normals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Structure("mesh has no triangles".into()));
        }
        if self.normals.len() != self.vertices.len() {
            return Err(Error::Structure("normal count differs from vertex count".into()));
        }
        let n = self.vertices.len();
        if self.triangles.iter().flatten().any(|&i| i as usize >= n) {
            return Err(Error::Structure("triangle index out of range".into()));
        }
        if self.normals.iter().any(|v| (v.length() - 1.0).abs() > 1e-4) {
            return Err(Error::Structure("normals must be unit length".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter().copied())
    }

    pub fn triangle(&self, i: usize) -> [DVec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Writes the mesh with one `vn` per `v` and plain `f i j k` records.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for n in &self.normals {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj_string())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Per-vertex normals as the normalized sum of incident face cross products
/// (each cross product is twice the face area times its unit normal).
pub fn area_weighted_normals(vertices: &[DVec3], triangles: &[[u32; 3]]) -> Vec<DVec3> {
    let mut acc = vec![DVec3::ZERO; vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = (b - a).cross(c - a);
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.length();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                DVec3::Z
            }
        })
        .collect()
}

/// Keeps already-unit normals bit-identical so load/save/load is stable.
fn unitize(n: DVec3) -> Option<DVec3> {
    let len = n.length();
    if !(len > 0.0 && len.is_finite()) {
        return None;
    }
    if (len - 1.0).abs() <= 1e-12 {
        Some(n)
    } else {
        Some(n / len)
    }
}

struct Corner {
    v: usize,
    n: Option<usize>,
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading mesh {}", path.display()), e))?;
    parse_mesh(&text, path)
}

/// Parses the ASCII mesh format. Polygons are fan-triangulated; texture
/// coordinates and unknown record types are ignored.
pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut positions = Vec::new();
    let mut file_normals = Vec::new();
    let mut faces: Vec<(usize, [Corner; 3])> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        match tag {
            "v" | "vn" => {
                let xyz: Vec<f64> = fields
                    .take(3)
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| parse_err(line, format!("invalid number `{s}`")))
                    })
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 || !xyz.iter().all(|v| v.is_finite()) {
                    return Err(parse_err(line, format!("`{tag}` needs three finite numbers")));
                }
                let p = DVec3::new(xyz[0], xyz[1], xyz[2]);
                if tag == "v" {
                    positions.push(p);
                } else {
                    file_normals.push(p);
                }
            }
            "f" => {
                let mut corners = Vec::new();
                for item in fields {
                    let mut parts = item.split('/');
                    let resolve = |s: &str, count: usize| -> Result<usize> {
                        let idx: i64 = s
                            .parse()
                            .map_err(|_| parse_err(line, format!("invalid index `{s}`")))?;
                        let resolved = if idx < 0 { count as i64 + idx } else { idx - 1 };
                        if idx == 0 || resolved < 0 || resolved as usize >= count {
                            return Err(Error::IndexOutOfRange {
                                line,
                                index: idx.unsigned_abs() as usize,
                                count,
                            });
                        }
                        Ok(resolved as usize)
                    };
                    let v = resolve(parts.next().unwrap_or(""), positions.len())?;
                    let _uv = parts.next();
                    let n = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, file_normals.len())?),
                        _ => None,
                    };
                    corners.push(Corner { v, n });
                }
                if corners.len() < 3 {
                    return Err(parse_err(line, "face needs at least three vertices".into()));
                }
                let mut iter = corners.into_iter();
                let first = iter.next().unwrap();
                let mut prev = iter.next().unwrap();
                for cur in iter {
                    let a = Corner {
                        v: first.v,
                        n: first.n,
                    };
                    let b = std::mem::replace(&mut prev, cur);
                    let c = Corner {
                        v: prev.v,
                        n: prev.n,
                    };
                    faces.push((line, [a, b, c]));
                }
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(Error::EmptyMesh(path.to_owned()));
    }

    let explicit = faces.iter().all(|(_, f)| f.iter().all(|c| c.n.is_some()));
    if explicit {
        // one output vertex per distinct (position, normal) pair
        let mut remap: HashMap<(usize, usize), u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut triangles = Vec::with_capacity(faces.len());
        for (line, face) in &faces {
            let mut tri = [0u32; 3];
            for (slot, c) in tri.iter_mut().zip(face) {
                let key = (c.v, c.n.unwrap());
                *slot = match remap.get(&key) {
                    Some(&i) => i,
                    None => {
                        let n = unitize(file_normals[key.1])
                            .ok_or_else(|| parse_err(*line, "zero-length normal".into()))?;
                        let i = vertices.len() as u32;
                        vertices.push(positions[key.0]);
                        normals.push(n);
                        remap.insert(key, i);
                        i
                    }
                };
            }
            triangles.push(tri);
        }
        return Ok(Mesh {
            vertices,
            triangles,
            normals,
        });
    }

    let triangles: Vec<[u32; 3]> = faces
        .iter()
        .map(|(_, f)| [f[0].v as u32, f[1].v as u32, f[2].v as u32])
        .collect();
    if file_normals.len() == positions.len() {
        if let Some(normals) = file_normals.iter().map(|&n| unitize(n)).collect::<Option<Vec<_>>>() {
            return Ok(Mesh {
                vertices: positions,
                triangles,
                normals,
            });
        }
    }
    Ok(Mesh::from_triangles(positions, triangles))
}
