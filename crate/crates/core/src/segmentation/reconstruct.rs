//! Interior fill of closed contours and volumetric mean-filter smoothing.

use crate::error::Result;
use crate::volume::{Volume3D, VolumeKind};
use crate::Vec3;

pub const DEFAULT_SMOOTHING_ITERATIONS: usize = 3;

/// Marks pixels inside the closed chain `poly` (even-odd rule on pixel
/// centers) together with the chain pixels themselves.
pub fn fill_polygon(poly: &[[usize; 2]], width: usize, height: usize, out: &mut [bool]) {
    for &[x, y] in poly {
        if x < width && y < height {
            out[y * width + x] = true;
        }
    }
    if poly.len() < 3 {
        return;
    }
    let ys = poly.iter().map(|p| p[1]);
    let (y_lo, y_hi) = (ys.clone().min().unwrap(), ys.max().unwrap().min(height - 1));
    let mut crossings = Vec::new();
    for y in y_lo..=y_hi {
        let yc = y as f64;
        crossings.clear();
        for k in 0..poly.len() {
            let [x0, y0] = poly[k];
            let [x1, y1] = poly[(k + 1) % poly.len()];
            let (x0, y0, x1, y1) = (x0 as f64, y0 as f64, x1 as f64, y1 as f64);
            if (y0 > yc) != (y1 > yc) {
                crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let from = pair[0].ceil().max(0.0) as usize;
            let to = pair[1].floor().min(width as f64 - 1.0);
            if to < 0.0 {
                continue;
            }
            for x in from..=to as usize {
                out[y * width + x] = true;
            }
        }
    }
}

/// `iterations` passes of the 7-point mean (voxel and its 6 face
/// neighbors, borders clamped).
pub fn mean_filter(data: &[f64], dims: [usize; 3], iterations: usize) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut cur = data.to_vec();
    let mut next = vec![0.0; cur.len()];
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for _ in 0..iterations {
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let s = cur[idx(i, j, k)]
                        + cur[idx(i.saturating_sub(1), j, k)]
                        + cur[idx((i + 1).min(nx - 1), j, k)]
                        + cur[idx(i, j.saturating_sub(1), k)]
                        + cur[idx(i, (j + 1).min(ny - 1), k)]
                        + cur[idx(i, j, k.saturating_sub(1))]
                        + cur[idx(i, j, (k + 1).min(nz - 1))];
                    next[idx(i, j, k)] = s / 7.0;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Stacks filled slices (one entry per z, each a list of closed chains),
/// smooths and re-thresholds at 0.5. The flag is set when every slice was
/// empty, in which case the mask is all zero.
pub fn reconstruct_tissue(
    slices: &[Vec<Vec<[usize; 2]>>],
    width: usize,
    height: usize,
    spacing: Vec3,
    iterations: usize,
) -> Result<(Volume3D, bool)> {
    let dims = [width, height, slices.len()];
    let plane = width * height;
    let mut stacked = vec![0.0; plane * slices.len()];
    let mut empty = true;
    for (z, polys) in slices.iter().enumerate() {
        let mut filled = vec![false; plane];
        for poly in polys {
            fill_polygon(poly, width, height, &mut filled);
        }
        for (n, &f) in filled.iter().enumerate() {
            if f {
                stacked[z * plane + n] = 1.0;
                empty = false;
            }
        }
    }
    if empty {
        return Ok((Volume3D::zeros(dims, spacing, VolumeKind::Binary)?, true));
    }
    let smooth = mean_filter(&stacked, dims, iterations);
    let data = smooth
        .iter()
        .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    Ok((
        Volume3D::new(dims, spacing, data, VolumeKind::Binary)?,
        false,
    ))
}
