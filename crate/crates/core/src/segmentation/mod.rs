//! Colonizable-tissue segmentation: per-slice edges, two ellipses per
//! slice, closed outlines, interior fill and 3D smoothing.

mod canny;
mod contour;
mod hough;
mod reconstruct;

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Axis, Volume3D, VolumeKind};

pub use canny::{
    canny_adaptive, gradient, hysteresis, otsu_threshold, Gradient, DEFAULT_LOW_RATIO,
    DEFAULT_SIGMA,
};
pub use contour::{close_contour, close_contour_with, Contour, ContourParams};
pub use hough::{conic_to_ellipse, fit_ellipse, hough_ellipses, hough_ellipses_with, HoughParams};
pub use reconstruct::{
    fill_polygon, mean_filter, reconstruct_tissue, DEFAULT_SMOOTHING_ITERATIONS,
};

/// Row-major 2D scalar image, `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image2D {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image2D {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            pixels: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.pixels[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Edge pixel coordinates in storage order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(move |(n, _)| (n % w, n / w))
    }

    /// 8-connected components, each in discovery order.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        for start in 0..w * h {
            if !self.pixels[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                let (x, y) = (n % w, n / w);
                comp.push((x, y));
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let m = yy * w + xx;
                        if self.pixels[m] && !seen[m] {
                            seen[m] = true;
                            queue.push_back(m);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Ellipse in pixel coordinates with `a >= b > 0` and rotation of the
/// major axis in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse2D {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub rotation: f64,
}

impl Ellipse2D {
    /// Normalizes axis order and rotation range.
    pub fn new(center: [f64; 2], semi_axes: [f64; 2], rotation: f64) -> Self {
        let (mut a, mut b, mut rot) = (semi_axes[0], semi_axes[1], rotation);
        if b > a {
            std::mem::swap(&mut a, &mut b);
            rot += PI / 2.0;
        }
        rot = rot.rem_euclid(PI);
        if rot >= PI {
            rot = 0.0;
        }
        Ellipse2D {
            center,
            semi_axes: [a, b],
            rotation: rot,
        }
    }

    fn local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// `(u/a)^2 + (v/b)^2` in the ellipse frame; 1 on the boundary.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        let [u, v] = self.local(p);
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.level(p) <= 1.0
    }

    /// First-order (Sampson) distance from `p` to the boundary, px.
    pub fn sampson_distance(&self, p: [f64; 2]) -> f64 {
        let [u, v] = self.local(p);
        let (a2, b2) = (self.semi_axes[0].powi(2), self.semi_axes[1].powi(2));
        let f = u * u / a2 + v * v / b2 - 1.0;
        let g = 2.0 * ((u / a2).powi(2) + (v / b2).powi(2)).sqrt();
        if g == 0.0 {
            return self.semi_axes[1];
        }
        f.abs() / g
    }

    /// Distance from the center to `p` minus the boundary radius in that
    /// direction (positive outside).
    pub fn radial_offset(&self, p: [f64; 2]) -> f64 {
        let [u, v] = self.local(p);
        let r = u.hypot(v);
        if r == 0.0 {
            return -self.semi_axes[1];
        }
        let edge = 1.0
            / ((u / r / self.semi_axes[0]).powi(2) + (v / r / self.semi_axes[1]).powi(2)).sqrt();
        r - edge
    }

    /// Boundary point at parameter `t` radians.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (self.semi_axes[0] * t.cos(), self.semi_axes[1] * t.sin());
        [
            self.center[0] + c * u - s * v,
            self.center[1] + s * u + c * v,
        ]
    }

    /// Ramanujan's approximation.
    pub fn perimeter(&self) -> f64 {
        let [a, b] = self.semi_axes;
        let h = ((a - b) / (a + b)).powi(2);
        PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
    }

    fn pixel_bounds(&self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let a = self.semi_axes[0] + 1.0;
        let lo = |c: f64| (c - a).floor().max(0.0) as usize;
        let hi = |c: f64, n: usize| ((c + a).ceil().max(0.0) as usize).min(n.saturating_sub(1));
        (
            lo(self.center[0]),
            hi(self.center[0], w),
            lo(self.center[1]),
            hi(self.center[1], h),
        )
    }

    /// Pixels whose centers lie inside.
    pub fn interior_pixels(&self, w: usize, h: usize) -> Vec<(usize, usize)> {
        let (x0, x1, y0, y1) = self.pixel_bounds(w, h);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains([x as f64, y as f64]) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Interior pixels with at least one 4-neighbor outside (or at the
    /// image border); an 8-connected ring.
    pub fn outline_pixels(&self, w: usize, h: usize) -> Vec<(usize, usize)> {
        let inside = |x: isize, y: isize| {
            x >= 0
                && y >= 0
                && x < w as isize
                && y < h as isize
                && self.contains([x as f64, y as f64])
        };
        self.interior_pixels(w, h)
            .into_iter()
            .filter(|&(x, y)| {
                let (x, y) = (x as isize, y as isize);
                !(inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1))
            })
            .collect()
    }

    /// Outline pixels ordered by angle about the center.
    pub fn outline_chain(&self, w: usize, h: usize) -> Vec<[usize; 2]> {
        let mut px: Vec<[usize; 2]> = self
            .outline_pixels(w, h)
            .into_iter()
            .map(|(x, y)| [x, y])
            .collect();
        let ang =
            |p: &[usize; 2]| (p[1] as f64 - self.center[1]).atan2(p[0] as f64 - self.center[0]);
        px.sort_by(|a, b| ang(a).total_cmp(&ang(b)).then(a.cmp(b)));
        px
    }

    /// Intersection over union of the rasterized interiors.
    pub fn iou(&self, other: &Ellipse2D) -> f64 {
        let r = self.semi_axes[0].max(other.semi_axes[0]) + 1.0;
        let x0 = (self.center[0].min(other.center[0]) - r).floor() as i64;
        let x1 = (self.center[0].max(other.center[0]) + r).ceil() as i64;
        let y0 = (self.center[1].min(other.center[1]) - r).floor() as i64;
        let y1 = (self.center[1].max(other.center[1]) + r).ceil() as i64;
        let (mut inter, mut union) = (0usize, 0usize);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64, y as f64];
                let (a, b) = (self.contains(p), other.contains(p));
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// How the hysteresis thresholds are chosen in [`segment_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// Otsu over each slice's own gradient magnitudes.
    Slice,
    /// Otsu over the gradient magnitudes of the whole stack.
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    pub sigma: f64,
    pub low_ratio: f64,
    pub threshold_scope: ThresholdScope,
    pub ellipses_per_slice: usize,
    pub hough: HoughParams,
    pub band: f64,
    pub bridge_limit: f64,
    pub smoothing_iterations: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            sigma: DEFAULT_SIGMA,
            low_ratio: DEFAULT_LOW_RATIO,
            threshold_scope: ThresholdScope::Volume,
            ellipses_per_slice: 2,
            hough: HoughParams::default(),
            band: ContourParams::default().band,
            bridge_limit: ContourParams::default().bridge_limit,
            smoothing_iterations: DEFAULT_SMOOTHING_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub z: usize,
    pub edge_pixels: usize,
    pub ellipses: Vec<Ellipse2D>,
    /// Contours that fell back to the seed ellipse.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: Volume3D,
    pub slices: Vec<SliceReport>,
    /// Every slice came out empty; `mask` is all zero.
    pub empty: bool,
}

impl SegmentationResult {
    /// Slices in which no ellipse was found.
    pub fn flagged_slices(&self) -> Vec<usize> {
        self.slices
            .iter()
            .filter(|s| s.ellipses.is_empty())
            .map(|s| s.z)
            .collect()
    }
}

/// Segments every z-slice independently (in parallel) and reconstructs the
/// binary tissue volume.
pub fn segment_volume(volume: &Volume3D, p: &SegmentationParams) -> Result<SegmentationResult> {
    if p.ellipses_per_slice == 0 {
        return Err(Error::InvalidParams(
            "ellipses_per_slice must be at least 1".into(),
        ));
    }
    let [nx, ny, nz] = volume.dims();
    let images: Vec<Image2D> = (0..nz)
        .map(|z| {
            let (w, h, data) = volume.slice(Axis::Z, z)?;
            Ok(Image2D {
                width: w,
                height: h,
                data,
            })
        })
        .collect::<Result<_>>()?;
    let grads: Vec<Gradient> = images
        .par_iter()
        .map(|img| gradient(img, p.sigma))
        .collect::<Result<_>>()?;
    let volume_high = match p.threshold_scope {
        ThresholdScope::Volume => {
            let all: Vec<f64> = grads
                .iter()
                .flat_map(|g| g.magnitude.iter().copied())
                .collect();
            Some(otsu_threshold(&all))
        }
        ThresholdScope::Slice => None,
    };
    let contour_params = ContourParams {
        band: p.band,
        bridge_limit: p.bridge_limit,
    };
    let per_slice: Vec<(SliceReport, Vec<Vec<[usize; 2]>>)> = grads
        .par_iter()
        .enumerate()
        .map(|(z, g)| {
            let high = volume_high.unwrap_or_else(|| otsu_threshold(&g.magnitude));
            let edges = hysteresis(g, high, p.low_ratio * high);
            let ellipses = hough_ellipses_with(&edges, p.ellipses_per_slice, &p.hough, z as u64);
            let mut polys = Vec::with_capacity(ellipses.len());
            let mut fallbacks = 0;
            for e in &ellipses {
                let c = close_contour_with(&edges, e, &contour_params);
                fallbacks += c.fallback as usize;
                polys.push(c.pixels);
            }
            let report = SliceReport {
                z,
                edge_pixels: edges.count(),
                ellipses,
                fallbacks,
            };
            (report, polys)
        })
        .collect();
    let (slices, polys): (Vec<_>, Vec<_>) = per_slice.into_iter().unzip();
    let (mask, empty) =
        reconstruct_tissue(&polys, nx, ny, volume.spacing(), p.smoothing_iterations)?;
    for s in &slices {
        if s.ellipses.is_empty() {
            log::debug!(
                "slice {} has no ellipse ({} edge pixels)",
                s.z,
                s.edge_pixels
            );
        }
    }
    if empty {
        log::warn!("segmentation found no tissue in any slice");
    }
    debug_assert_eq!(mask.kind(), VolumeKind::Binary);
    Ok(SegmentationResult {
        mask,
        slices,
        empty,
    })
}

/// Intersection over union of two binary volumes.
pub fn mask_iou(a: &Volume3D, b: &Volume3D) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimsMismatch(a.dims(), b.dims()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
