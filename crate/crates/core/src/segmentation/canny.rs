//! Canny edge detection with Otsu-derived hysteresis thresholds.

use std::collections::VecDeque;

use super::{EdgeMap, Image2D};
use crate::error::{Error, Result};

pub const DEFAULT_SIGMA: f64 = 1.4;
pub const DEFAULT_LOW_RATIO: f64 = 0.5;

/// Blurred gradient field of an image.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Canny with `high` = Otsu threshold of the gradient magnitude and
/// `low = 0.5 * high`.
pub fn canny_adaptive(img: &Image2D) -> Result<EdgeMap> {
    let grad = gradient(img, DEFAULT_SIGMA)?;
    let high = otsu_threshold(&grad.magnitude);
    Ok(hysteresis(&grad, high, DEFAULT_LOW_RATIO * high))
}

/// Gaussian blur followed by Sobel derivatives. Borders are clamped.
pub fn gradient(img: &Image2D, sigma: f64) -> Result<Gradient> {
    let (w, h) = (img.width, img.height);
    if w * h < 2 {
        return Err(Error::InvalidVolume(format!(
            "image {w}x{h} is too small for edge detection"
        )));
    }
    let blurred = gaussian_blur(img, sigma);
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        blurred[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let n = y as usize * w + x as usize;
            gx[n] = dx;
            gy[n] = dy;
            magnitude[n] = dx.hypot(dy);
        }
    }
    Ok(Gradient {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    })
}

fn gaussian_blur(img: &Image2D, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    if sigma <= 0.0 {
        return img.data.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, k) in (-radius..=radius).zip(&kernel) {
                let xx = (x as isize + t).clamp(0, w as isize - 1) as usize;
                s += k * img.data[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, k) in (-radius..=radius).zip(&kernel) {
                let yy = (y as isize + t).clamp(0, h as isize - 1) as usize;
                s += k * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Otsu threshold over 256 equal bins spanning `[0, max]`.
///
/// Returns the lower edge of the first bin of the upper class, or 0 when
/// every value is zero.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    const BINS: usize = 256;
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let width = max / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in values {
        let b = ((v / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &c)| b as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0);
    for (t, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t;
        }
    }
    (best_t + 1) as f64 * width
}

/// Non-maximum suppression and double-threshold hysteresis.
///
/// Along the quantized gradient direction a pixel survives if it is
/// strictly greater than its backward neighbor and at least its forward
/// neighbor, so two-pixel plateaus thin to a single pixel. Pixels outside
/// the image count as zero.
pub fn hysteresis(grad: &Gradient, high: f64, low: f64) -> EdgeMap {
    let (w, h) = (grad.width, grad.height);
    let mut edges = EdgeMap::new(w, h);
    if high <= 0.0 {
        return edges;
    }
    let mag = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            grad.magnitude[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let n = y * w + x;
            let g = grad.magnitude[n];
            if g <= 0.0 {
                continue;
            }
            let (dx, dy) = direction_step(grad.gx[n], grad.gy[n]);
            let (xi, yi) = (x as isize, y as isize);
            let back = mag(xi - dx, yi - dy);
            let fwd = mag(xi + dx, yi + dy);
            if g > back && g >= fwd {
                thin[n] = g;
            }
        }
    }
    let mut queue = VecDeque::new();
    for (n, &g) in thin.iter().enumerate() {
        if g >= high {
            edges.pixels[n] = true;
            queue.push_back(n);
        }
    }
    while let Some(n) = queue.pop_front() {
        let (x, y) = ((n % w) as isize, (n / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    continue;
                }
                let m = yy as usize * w + xx as usize;
                if !edges.pixels[m] && thin[m] >= low && thin[m] > 0.0 {
                    edges.pixels[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    edges
}

// gradient direction quantized to one of four pixel steps
fn direction_step(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}
