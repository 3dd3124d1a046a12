use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ply::vertex_colors;
use crate::geometry::TriMesh;
use crate::grouping::PlaneInstance;
use crate::{Error, Result};

/// Wavefront OBJ with per-vertex colors (`v x y z r g b`) and normals.
pub fn write_obj(mesh: &TriMesh) -> Result<String> {
    mesh.validate()?;
    let mut out = String::from("# planefield mesh\n");
    for (p, c) in mesh.vertices.iter().zip(vertex_colors(mesh)) {
        let [r, g, b] = c.map(|x| x as f64 / 255.0);
        writeln!(out, "v {} {} {} {r:.4} {g:.4} {b:.4}", p.x, p.y, p.z).unwrap();
    }
    let normals = mesh.has_normals();
    if normals {
        for n in &mesh.normals {
            writeln!(out, "vn {} {} {}", n.x, n.y, n.z).unwrap();
        }
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i + 1);
        if normals {
            writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}").unwrap();
        } else {
            writeln!(out, "f {a} {b} {c}").unwrap();
        }
    }
    Ok(out)
}

/// One label per line.
pub fn format_labels(labels: &[i32]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<i32>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<i32>()
                .ok()
                .filter(|&x| x >= -1)
                .ok_or_else(|| Error::parse(format!("line {}: bad label {l:?}", i + 1)))
        })
        .collect()
}

/// Serialized form of a plane instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: i32,
    pub normal: [f64; 3],
    pub offset: f64,
    pub vertex_count: usize,
    pub mean_normal: [f64; 3],
    pub mean_embedding: [f64; 3],
}

impl From<&PlaneInstance> for InstanceRecord {
    fn from(inst: &PlaneInstance) -> Self {
        Self {
            id: inst.id,
            normal: inst.plane.normal.into(),
            offset: inst.plane.offset,
            vertex_count: inst.vertex_count(),
            mean_normal: inst.mean_normal.into(),
            mean_embedding: inst.mean_embedding.into(),
        }
    }
}

/// Contents of `instances.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancesFile {
    pub num_vertices: usize,
    pub instances: Vec<InstanceRecord>,
}

pub fn instances_json(num_vertices: usize, instances: &[PlaneInstance]) -> Result<String> {
    let file = InstancesFile {
        num_vertices,
        instances: instances.iter().map(InstanceRecord::from).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}
