use super::{DepthImage, Image, Intrinsics};
use crate::{Error, Result, Vec3};

/// Camera-frame normals from a depth map using central differences of the
/// back-projected points.
///
/// A pixel gets a normal only when every pixel of its 3x3 neighborhood has
/// valid depth. Normals face the camera (`n · p < 0`, so `n_z < 0` for
/// surfaces seen head-on).
pub fn normals_from_depth(depth: &DepthImage, k: &Intrinsics) -> Result<Image<Option<Vec3>>> {
    normals_from_depth_strided(depth, k, 1)
}

/// Like [`normals_from_depth`] but differencing pixels `stride` apart. The
/// validity window grows to `(2·stride + 1)²`. Wider strides trade edge
/// sharpness for robustness to per-pixel depth noise.
pub fn normals_from_depth_strided(
    depth: &DepthImage,
    k: &Intrinsics,
    stride: usize,
) -> Result<Image<Option<Vec3>>> {
    let (w, h) = (depth.width, depth.height);
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    if stride == 0 || 2 * stride + 1 > w.min(h) {
        return Err(Error::invalid(format!(
            "normal stride {stride} does not fit a {h}x{w} image"
        )));
    }
    let s = stride;
    let valid: Vec<bool> = depth
        .data
        .iter()
        .map(|&d| d > 0.0 && d.is_finite())
        .collect();

    // Row-wise then column-wise running minima give "whole window valid".
    let mut row_ok = vec![false; w * h];
    for v in 0..h {
        for u in s..w - s {
            row_ok[v * w + u] = (u - s..=u + s).all(|x| valid[v * w + x]);
        }
    }
    let point = |u: usize, v: usize| {
        k.backproject(u as f64, v as f64, *depth.get(u, v) as f64)
    };

    let mut out = Image::filled(w, h, None);
    for v in s..h - s {
        for u in s..w - s {
            if !(v - s..=v + s).all(|y| row_ok[y * w + u]) {
                continue;
            }
            let du = point(u + s, v) - point(u - s, v);
            let dv = point(u, v + s) - point(u, v - s);
            let Some(mut n) = du.cross(&dv).try_normalize(1e-300) else {
                continue;
            };
            if n.dot(&point(u, v)) > 0.0 {
                n = -n;
            }
            *out.get_mut(u, v) = Some(n);
        }
    }
    Ok(out)
}
