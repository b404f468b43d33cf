//! Randomized Hough transform for ellipses.
//!
//! Ellipses are found one at a time. In each round, five edge points drawn
//! from one 8-connected edge component define a conic; hypotheses are
//! quantized into a 5-parameter accumulator where each bin keeps its
//! best-supported hypothesis. The strongest bins are refined by least
//! squares on their inliers and the best-covered one is accepted. Its
//! inlier pixels are then removed so the next round is not swamped by
//! variants of an ellipse already found.

use std::collections::BTreeMap;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EdgeMap, Ellipse2D};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    /// Samples drawn per detection round.
    pub iterations: usize,
    /// Smallest accepted semi-axis, px.
    pub min_axis: f64,
    /// Sampson distance below which an edge pixel supports an ellipse, px.
    pub inlier_tolerance: f64,
    /// Minimum inlier count relative to the ellipse perimeter.
    pub min_coverage: f64,
    /// Bins refined per round.
    pub refine_candidates: usize,
    pub seed: u64,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            iterations: 400,
            min_axis: 4.0,
            inlier_tolerance: 1.5,
            min_coverage: 0.4,
            refine_candidates: 12,
            seed: 0,
        }
    }
}

/// The `n` best-supported ellipses, in detection order.
pub fn hough_ellipses(edges: &EdgeMap, n: usize) -> Vec<Ellipse2D> {
    hough_ellipses_with(edges, n, &HoughParams::default(), 0)
}

/// As [`hough_ellipses`]; `key` selects the random stream (e.g. slice index).
pub fn hough_ellipses_with(edges: &EdgeMap, n: usize, p: &HoughParams, key: u64) -> Vec<Ellipse2D> {
    let mut rng = keyed_rng(p.seed, key);
    let mut remaining = edges.clone();
    let mut out: Vec<Ellipse2D> = Vec::new();
    while out.len() < n {
        let candidates = detect_round(&remaining, p, &mut rng);
        let Some(best) = candidates
            .into_iter()
            .find(|e| out.iter().all(|o| o.iou(e) <= 0.5))
        else {
            break;
        };
        let inliers: Vec<(usize, usize)> = remaining
            .points()
            .filter(|&(x, y)| best.sampson_distance([x as f64, y as f64]) < p.inlier_tolerance)
            .collect();
        for (x, y) in inliers {
            remaining.set(x, y, false);
        }
        out.push(best);
    }
    out
}

/// One sampling round over `edges`: refined, coverage-qualified
/// hypotheses, best-covered first.
fn detect_round(edges: &EdgeMap, p: &HoughParams, rng: &mut ChaCha8Rng) -> Vec<Ellipse2D> {
    let mut slot_of = vec![usize::MAX; edges.pixels.len()];
    let mut points: Vec<[f64; 2]> = Vec::new();
    for (x, y) in edges.points() {
        slot_of[y * edges.width + x] = points.len();
        points.push([x as f64, y as f64]);
    }
    if points.len() < 5 {
        return Vec::new();
    }
    let components: Vec<Vec<usize>> = edges
        .components()
        .into_iter()
        .filter(|c| c.len() >= 5)
        .map(|c| {
            c.into_iter()
                .map(|(x, y)| slot_of[y * edges.width + x])
                .collect()
        })
        .collect();
    if components.is_empty() {
        return Vec::new();
    }
    let weights: Vec<usize> = components.iter().map(|c| c.len()).collect();
    let total: usize = weights.iter().sum();
    let max_axis = edges.width.max(edges.height) as f64;

    // bin -> (votes, best support, hypothesis)
    let mut acc: BTreeMap<[i64; 5], (usize, usize, Ellipse2D)> = BTreeMap::new();
    for _ in 0..p.iterations {
        let mut pick = rng.random_range(0..total);
        let comp = weights
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap();
        let members = &components[comp];
        let mut chosen: Vec<usize> = Vec::with_capacity(5);
        let mut guard = 0;
        while chosen.len() < 5 && guard < 50 {
            let m = members[rng.random_range(0..members.len())];
            if !chosen.contains(&m) {
                chosen.push(m);
            }
            guard += 1;
        }
        if chosen.len() < 5 {
            continue;
        }
        let sample: Vec<[f64; 2]> = chosen.iter().map(|&i| points[i]).collect();
        let Some(e) = fit_ellipse(&sample) else {
            continue;
        };
        if !plausible(&e, p.min_axis, max_axis, edges) {
            continue;
        }
        let support = support(&e, &points, p.inlier_tolerance);
        let key = quantize(&e);
        let slot = acc.entry(key).or_insert((0, 0, e));
        slot.0 += 1;
        if support > slot.1 {
            slot.1 = support;
            slot.2 = e;
        }
    }

    let mut bins: Vec<(usize, usize, Ellipse2D)> = acc.into_values().collect();
    bins.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
    let mut refined: Vec<(f64, Ellipse2D)> = Vec::new();
    for &(_, _, e) in bins.iter().take(p.refine_candidates) {
        let mut best = e;
        for _ in 0..3 {
            let inliers: Vec<[f64; 2]> = points
                .iter()
                .copied()
                .filter(|&q| best.sampson_distance(q) < p.inlier_tolerance)
                .collect();
            match fit_ellipse(&inliers) {
                Some(f) if plausible(&f, p.min_axis, max_axis, edges) => best = f,
                _ => break,
            }
        }
        let score = support(&best, &points, p.inlier_tolerance);
        if (score as f64) < p.min_coverage * best.perimeter() {
            continue;
        }
        refined.push((score as f64 / best.perimeter(), best));
    }
    refined.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.center[0].total_cmp(&b.1.center[0]))
            .then(a.1.center[1].total_cmp(&b.1.center[1]))
    });
    refined.into_iter().map(|(_, e)| e).collect()
}

fn plausible(e: &Ellipse2D, min_axis: f64, max_axis: f64, edges: &EdgeMap) -> bool {
    e.semi_axes[1] >= min_axis
        && e.semi_axes[0] <= max_axis
        && e.center[0] >= 0.0
        && e.center[1] >= 0.0
        && e.center[0] <= edges.width as f64
        && e.center[1] <= edges.height as f64
}

fn support(e: &Ellipse2D, points: &[[f64; 2]], tol: f64) -> usize {
    points
        .iter()
        .filter(|&&q| e.sampson_distance(q) < tol)
        .count()
}

fn quantize(e: &Ellipse2D) -> [i64; 5] {
    [
        (e.center[0] / 2.0).round() as i64,
        (e.center[1] / 2.0).round() as i64,
        (e.semi_axes[0] / 2.0).round() as i64,
        (e.semi_axes[1] / 2.0).round() as i64,
        (e.rotation / (std::f64::consts::PI / 18.0)).round() as i64 % 18,
    ]
}

/// Algebraic least-squares conic through `points` (at least 5), returned
/// only if it is a real ellipse. Points are centered and scaled first.
pub fn fit_ellipse(points: &[[f64; 2]]) -> Option<Ellipse2D> {
    if points.len() < 5 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let spread = points
        .iter()
        .map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if spread <= 0.0 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / spread;
    let mut scatter = Matrix6::<f64>::zeros();
    for p in points {
        let (x, y) = ((p[0] - mx) * s, (p[1] - my) * s);
        let row = Vector6::new(x * x, x * y, y * y, x, y, 1.0);
        scatter += row * row.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let k = eig.eigenvalues.imin();
    let c = eig.eigenvectors.column(k);
    let e = conic_to_ellipse([c[0], c[1], c[2], c[3], c[4], c[5]])?;
    Some(Ellipse2D::new(
        [e.center[0] / s + mx, e.center[1] / s + my],
        [e.semi_axes[0] / s, e.semi_axes[1] / s],
        e.rotation,
    ))
}

/// Geometric parameters of `Ax^2 + Bxy + Cy^2 + Dx + Ey + F = 0`.
pub fn conic_to_ellipse(q: [f64; 6]) -> Option<Ellipse2D> {
    let [a, b, c, d, e, f] = q;
    let det = 4.0 * a * c - b * b;
    if det.is_nan() || det <= 0.0 {
        return None;
    }
    let x0 = (b * e - 2.0 * c * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = f + (d * x0 + e * y0) / 2.0;
    let theta = 0.5 * b.atan2(a - c);
    let (st, ct) = theta.sin_cos();
    let l1 = a * ct * ct + b * ct * st + c * st * st;
    let l2 = a + c - l1;
    let (r1, r2) = (-f0 / l1, -f0 / l2);
    if !(r1 > 0.0 && r2 > 0.0) || !r1.is_finite() || !r2.is_finite() {
        return None;
    }
    Some(Ellipse2D::new([x0, y0], [r1.sqrt(), r2.sqrt()], theta))
}
