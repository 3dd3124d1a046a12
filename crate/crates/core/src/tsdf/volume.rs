use super::Keyframe;
use crate::geometry::TriMesh;
use crate::{Error, Result, Vec3};

/// Voxels whose fused planar probability falls below this are not meshed.
pub const DEFAULT_PLANAR_THRESHOLD: f64 = 0.25;
pub const DEFAULT_VOXEL_SIZE: f64 = 0.04;

/// Dense TSDF grid. Samples sit at `origin + voxel_size · (i, j, k)`.
///
/// `tsdf` is normalized by the truncation distance and lies in `[-1, 1]`;
/// unobserved voxels keep `tsdf = 1`, `weight = 0`.
#[derive(Clone, Debug)]
pub struct TsdfVolume {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    truncation: f64,
    pub(crate) tsdf: Vec<f32>,
    pub(crate) weight: Vec<f32>,
    pub(crate) planar_prob: Vec<f32>,
    /// Number of observations inside the truncation band; the planar
    /// probability averages over these only.
    band_weight: Vec<f32>,
    frame_shape: Option<(usize, usize)>,
}

impl TsdfVolume {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3], truncation: f64) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
        }
        if !(truncation >= 2.0 * voxel_size) {
            return Err(Error::invalid(format!(
                "truncation {truncation} must be at least twice the voxel size {voxel_size}"
            )));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid(format!("volume dims {dims:?} must be >= 2")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::invalid(format!("volume dims {dims:?} are too large")))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            truncation,
            tsdf: vec![1.0; n],
            weight: vec![0.0; n],
            planar_prob: vec![0.0; n],
            band_weight: vec![0.0; n],
            frame_shape: None,
        })
    }

    /// Volume covering the axis-aligned box `[min, max]` (plus one voxel).
    pub fn covering(min: Vec3, max: Vec3, voxel_size: f64, truncation: f64) -> Result<Self> {
        let extent = max - min;
        if extent.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(format!("bad volume bounds {min:?}..{max:?}")));
        }
        let dims = [0, 1, 2].map(|a| (extent[a] / voxel_size).ceil() as usize + 2);
        Self::new(min, voxel_size, dims, truncation)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel_size
    }

    pub fn tsdf_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.tsdf[self.index(i, j, k)]
    }

    pub fn weight_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.weight[self.index(i, j, k)]
    }

    pub fn planar_prob_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.planar_prob[self.index(i, j, k)]
    }

    /// Overwrites one voxel. Intended for building analytic volumes.
    pub fn set_voxel(&mut self, i: usize, j: usize, k: usize, tsdf: f32, weight: f32, prob: f32) {
        let idx = self.index(i, j, k);
        self.tsdf[idx] = tsdf.clamp(-1.0, 1.0);
        self.weight[idx] = weight.max(0.0);
        self.planar_prob[idx] = prob.clamp(0.0, 1.0);
        self.band_weight[idx] = self.weight[idx];
    }

    /// Fuses one keyframe.
    ///
    /// Each voxel is projected into the frame and compared with the depth
    /// at the nearest pixel. Voxels more than the truncation distance behind
    /// the observed surface are left untouched; every other observed voxel
    /// gets one more unit of weight, its tsdf moves toward the clamped
    /// signed distance (free space in front of the band counts as `+1`).
    /// The planar probability only follows observations inside the band:
    /// a pixel's probability describes its surface, not the empty space
    /// the ray crossed on the way there.
    pub fn integrate(&mut self, frame: &Keyframe) -> Result<()> {
        frame.validate()?;
        let (h, w) = frame.depth.shape();
        match self.frame_shape {
            Some((fh, fw)) if (fh, fw) != (h, w) => {
                return Err(Error::ResolutionMismatch {
                    want_h: fh,
                    want_w: fw,
                    got_h: h,
                    got_w: w,
                })
            }
            _ => self.frame_shape = Some((h, w)),
        }
        let k = frame.pose.intrinsics;
        let iso = frame.pose.camera_to_world.inverse();
        let rot = iso.rotation.to_rotation_matrix();
        let r = rot.matrix();
        let t = iso.translation.vector;
        let trunc = self.truncation;
        let [nx, ny, nz] = self.dims;

        for kz in 0..nz {
            for jy in 0..ny {
                // camera-frame position of voxel (0, jy, kz) and the step along i
                let base = self.position(0, jy, kz);
                let row0 = r * base + t;
                let step = r.column(0) * self.voxel_size;
                for ix in 0..nx {
                    let pc = row0 + step * ix as f64;
                    if pc.z <= 1e-9 {
                        continue;
                    }
                    let u = (k.fx * pc.x / pc.z + k.cx).round();
                    let v = (k.fy * pc.y / pc.z + k.cy).round();
                    if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                        continue;
                    }
                    let (u, v) = (u as usize, v as usize);
                    let Some(d) = frame.depth_at(u, v) else {
                        continue;
                    };
                    let sdf = d - pc.z;
                    if sdf < -trunc {
                        continue;
                    }
                    let obs = (sdf / trunc).min(1.0) as f32;
                    let idx = ix + nx * (jy + ny * kz);
                    let w0 = self.weight[idx];
                    let w1 = w0 + 1.0;
                    self.tsdf[idx] = ((self.tsdf[idx] * w0 + obs) / w1).clamp(-1.0, 1.0);
                    self.weight[idx] = w1;
                    if sdf <= trunc {
                        let prob = *frame.planar_prob.get(u, v);
                        let b0 = self.band_weight[idx];
                        let b1 = b0 + 1.0;
                        self.planar_prob[idx] =
                            ((self.planar_prob[idx] * b0 + prob) / b1).clamp(0.0, 1.0);
                        self.band_weight[idx] = b1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Iso-surface at `tsdf = 0` over observed voxels, skipping every cube
    /// that touches a voxel with planar probability below `planar_threshold`.
    pub fn extract_mesh(&self, planar_threshold: f64) -> TriMesh {
        super::marching_cubes::extract(self, planar_threshold)
    }
}
