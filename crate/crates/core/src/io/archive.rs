//! Scene archive directories:
//!
//! ```text
//! intrinsics.txt            9 floats, row-major 3x3 pinhole matrix
//! poses.txt                 per line: frame id, 16 floats of camera_to_world (row-major)
//! frames/NNNNNN.depth.bin   PDEP, 1 channel, meters (0 = invalid)
//! frames/NNNNNN.prob.bin    PDEP, 1 channel, planar probability
//! frames/NNNNNN.emb.bin     PDEP, 3 channels, per-pixel embedding
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};

use super::pdep::{decode_pdep, encode_pdep, RawImage};
use crate::geometry::{CameraPose, Image, Intrinsics};
use crate::tsdf::Keyframe;
use crate::{Error, Result};

pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const POSES_FILE: &str = "poses.txt";
pub const FRAMES_DIR: &str = "frames";

/// One parsed line of `poses.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseRecord {
    pub frame_id: u32,
    pub camera_to_world: Matrix4<f64>,
}

fn floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(format!("bad number {t:?}")))
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a 3x3 row-major pinhole matrix (whitespace or newline separated).
pub fn parse_intrinsics(text: &str) -> Result<Intrinsics> {
    let values: Vec<f64> = content_lines(text)
        .map(|(_, l)| floats(l))
        .collect::<Result<Vec<_>>>()?
        .concat();
    if values.len() != 9 {
        return Err(Error::parse(format!("expected 9 intrinsics values, found {}", values.len())));
    }
    Intrinsics::from_matrix(&Matrix3::from_row_slice(&values))
}

pub fn format_intrinsics(k: &Intrinsics) -> String {
    let m = k.matrix();
    let mut out = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| m[(r, c)].to_string()).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

/// Parses `poses.txt`. Blank lines and `#` comments are skipped; frame ids
/// must be unique.
pub fn parse_poses(text: &str) -> Result<Vec<PoseRecord>> {
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line_no, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let id_tok = tokens.next().unwrap_or_default();
        let frame_id: u32 = id_tok
            .parse()
            .map_err(|_| Error::parse(format!("line {line_no}: bad frame id {id_tok:?}")))?;
        let values = floats(&tokens.collect::<Vec<_>>().join(" "))
            .map_err(|e| Error::parse(format!("line {line_no}: {e}")))?;
        if values.len() != 16 {
            return Err(Error::parse(format!(
                "line {line_no}: expected 16 pose values, found {}",
                values.len()
            )));
        }
        if !seen.insert(frame_id) {
            return Err(Error::parse(format!("line {line_no}: duplicate frame id {frame_id}")));
        }
        records.push(PoseRecord {
            frame_id,
            camera_to_world: Matrix4::from_row_slice(&values),
        });
    }
    Ok(records)
}

pub fn format_poses(records: &[PoseRecord]) -> String {
    let mut out = String::new();
    for r in records {
        write!(out, "{}", r.frame_id).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                write!(out, " {}", r.camera_to_world[(row, col)]).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn frame_path(dir: &Path, frame_id: u32, kind: &str) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{frame_id:06}.{kind}.bin"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

fn read_image(path: &Path, channels: usize) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_pdep(&bytes, channels).map_err(|e| e.in_file(path))
}

/// An opened archive: intrinsics and poses are parsed up front, frames are
/// decoded on demand.
#[derive(Clone, Debug)]
pub struct SceneReader {
    dir: PathBuf,
    intrinsics: Intrinsics,
    records: Vec<PoseRecord>,
}

impl SceneReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let k_path = dir.join(INTRINSICS_FILE);
        let intrinsics = parse_intrinsics(&read_text(&k_path)?).map_err(|e| e.in_file(&k_path))?;
        let p_path = dir.join(POSES_FILE);
        let records = parse_poses(&read_text(&p_path)?).map_err(|e| e.in_file(&p_path))?;
        if records.is_empty() {
            return Err(Error::invalid("scene has no frames").in_file(&p_path));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            intrinsics,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    pub fn records(&self) -> &[PoseRecord] {
        &self.records
    }

    /// Decodes the frame on line `index` of `poses.txt`; its timestamp is
    /// that index.
    pub fn frame(&self, index: usize) -> Result<Keyframe> {
        let dir = &self.dir;
        let record = self
            .records
            .get(index)
            .ok_or_else(|| Error::invalid(format!("frame index {index} out of range")))?;
        let pose = CameraPose::from_matrix(self.intrinsics, &record.camera_to_world).map_err(|e| {
            Error::invalid(format!("frame {}: {e}", record.frame_id)).in_file(dir.join(POSES_FILE))
        })?;
        let depth = read_image(&frame_path(dir, record.frame_id, "depth"), 1)?;
        let shape = (depth.height, depth.width);
        let load = |kind: &str, channels: usize| -> Result<RawImage> {
            let path = frame_path(dir, record.frame_id, kind);
            let img = read_image(&path, channels)?;
            if (img.height, img.width) != shape {
                return Err(Error::invalid(format!(
                    "{}x{} image does not match the {}x{} depth map",
                    img.height, img.width, shape.0, shape.1
                ))
                .in_file(&path));
            }
            Ok(img)
        };
        let prob = load("prob", 1)?;
        let emb = load("emb", 3)?;
        let (h, w) = shape;
        let frame = Keyframe {
            depth: Image::from_vec(w, h, depth.data)?,
            planar_prob: Image::from_vec(w, h, prob.data)?,
            pixel_embedding: Image::from_vec(
                w,
                h,
                emb.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            )?,
            pose,
            frame_id: record.frame_id,
            timestamp: index as f64,
        };
        frame
            .validate()
            .map_err(|e| e.in_file(frame_path(dir, record.frame_id, "prob")))?;
        Ok(frame)
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<Keyframe>> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }
}

/// Loads every frame listed in `poses.txt`, in file order. Errors name the
/// offending file.
pub fn read_scene(dir: &Path) -> Result<Vec<Keyframe>> {
    SceneReader::open(dir)?.frames().collect()
}

/// Writes frames to an archive directory. All frames must share intrinsics.
pub fn write_scene(dir: &Path, frames: &[Keyframe]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::invalid("no frames to write"));
    };
    let intrinsics = first.pose.intrinsics;
    if frames.iter().any(|f| f.pose.intrinsics != intrinsics) {
        return Err(Error::invalid("all frames of an archive must share intrinsics"));
    }
    fs::create_dir_all(dir.join(FRAMES_DIR))?;
    fs::write(dir.join(INTRINSICS_FILE), format_intrinsics(&intrinsics))?;
    let records: Vec<PoseRecord> = frames
        .iter()
        .map(|f| PoseRecord {
            frame_id: f.frame_id,
            camera_to_world: f.pose.matrix(),
        })
        .collect();
    fs::write(dir.join(POSES_FILE), format_poses(&records))?;
    for f in frames {
        f.validate()?;
        let (h, w) = f.depth.shape();
        fs::write(frame_path(dir, f.frame_id, "depth"), encode_pdep(h, w, 1, &f.depth.data)?)?;
        fs::write(frame_path(dir, f.frame_id, "prob"), encode_pdep(h, w, 1, &f.planar_prob.data)?)?;
        let emb: Vec<f32> = f.pixel_embedding.data.iter().flatten().copied().collect();
        fs::write(frame_path(dir, f.frame_id, "emb"), encode_pdep(h, w, 3, &emb)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};

    fn frame(id: u32) -> Keyframe {
        let (w, h) = (4, 3);
        let k = Intrinsics::from_fov(w, h, 1.0);
        let iso = Isometry3::from_parts(
            Translation3::new(0.5, -1.0, 2.0),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3 + id as f64),
        );
        Keyframe {
            depth: Image::from_vec(w, h, (0..12).map(|i| i as f32 * 0.5).collect()).unwrap(),
            planar_prob: Image::filled(w, h, 0.75),
            pixel_embedding: Image::from_vec(w, h, (0..12).map(|i| [i as f32, 1.0, -2.0]).collect())
                .unwrap(),
            pose: CameraPose::new(k, iso),
            frame_id: id,
            timestamp: 0.0,
        }
    }

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![frame(3), frame(7)];
        write_scene(dir.path(), &frames).unwrap();
        let back = read_scene(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in frames.iter().zip(&back) {
            assert_eq!(a.frame_id, b.frame_id);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.planar_prob, b.planar_prob);
            assert_eq!(a.pixel_embedding, b.pixel_embedding);
            assert!((a.pose.matrix() - b.pose.matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &[frame(1)]).unwrap();
        let bad = frame_path(dir.path(), 1, "emb");
        fs::write(&bad, b"PDEP\x01\0\0\0").unwrap();
        let msg = read_scene(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("000001.emb.bin"), "{msg}");

        fs::write(dir.path().join(POSES_FILE), "").unwrap();
        let msg = read_scene(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("poses.txt"), "{msg}");
    }

    #[test]
    fn pose_parsing() {
        let line = "0 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n";
        assert_eq!(parse_poses(line).unwrap().len(), 1);
        assert!(parse_poses("0 1 0 0").is_err());
        assert!(parse_poses(&format!("{line}{line}")).is_err());
        assert!(parse_poses("x 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1").is_err());
        assert!(parse_poses("# comment\n\n").unwrap().is_empty());
        assert!(parse_poses("0 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 nan").is_err());
    }

    #[test]
    fn intrinsics_parsing() {
        let k = parse_intrinsics("500 0 320\n0 500 240\n0 0 1\n").unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (500.0, 500.0, 320.0, 240.0));
        assert_eq!(parse_intrinsics(&format_intrinsics(&k)).unwrap(), k);
        assert!(parse_intrinsics("1 2 3").is_err());
        assert!(parse_intrinsics("500 1 320 0 500 240 0 0 1").is_err());
        assert!(parse_intrinsics("-5 0 320 0 500 240 0 0 1").is_err());
    }
}
