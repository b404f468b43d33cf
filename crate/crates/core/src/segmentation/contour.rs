//! Closing lung outlines by following edges around a seed ellipse.

use std::f64::consts::{PI, TAU};

use super::{EdgeMap, Ellipse2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    /// Edge pixels farther than this from the seed ellipse are ignored, px.
    pub band: f64,
    /// Longest gap bridged by a straight segment, px.
    pub bridge_limit: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        ContourParams {
            band: 3.0,
            bridge_limit: 5.0,
        }
    }
}

/// Closed pixel chain; `fallback` is set when it is the rasterized seed
/// ellipse rather than a traced edge chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub pixels: Vec<[usize; 2]>,
    pub fallback: bool,
    pub bridges: usize,
}

pub fn close_contour(edges: &EdgeMap, seed: &Ellipse2D) -> Contour {
    close_contour_with(edges, seed, &ContourParams::default())
}

/// Walks counter-clockwise (in angle about the seed center) along edge
/// pixels near the seed ellipse. Each step goes to an unvisited 8-neighbor
/// that advances the angle, preferring the one closest to the ellipse;
/// without one, the nearest advancing edge pixel within the bridge limit is
/// joined by a straight segment. The chain is closed once it has gone most
/// of the way round and the start is within bridging distance.
pub fn close_contour_with(edges: &EdgeMap, seed: &Ellipse2D, p: &ContourParams) -> Contour {
    let (w, h) = (edges.width, edges.height);
    let fallback = || Contour {
        pixels: seed.outline_chain(w, h),
        fallback: true,
        bridges: 0,
    };
    let offset = |x: usize, y: usize| seed.radial_offset([x as f64, y as f64]).abs();
    let in_band: Vec<bool> = (0..w * h)
        .map(|n| edges.pixels[n] && offset(n % w, n / w) <= p.band)
        .collect();
    let Some(start) = (0..w * h).filter(|&n| in_band[n]).min_by(|&a, &b| {
        offset(a % w, a / w)
            .total_cmp(&offset(b % w, b / w))
            .then(a.cmp(&b))
    }) else {
        return fallback();
    };

    let angle = |n: usize| ((n / w) as f64 - seed.center[1]).atan2((n % w) as f64 - seed.center[0]);
    let advance = |from: usize, to: usize| {
        let mut d = angle(to) - angle(from);
        while d > PI {
            d -= TAU;
        }
        while d <= -PI {
            d += TAU;
        }
        d
    };
    let dist = |a: usize, b: usize| {
        ((a % w) as f64 - (b % w) as f64).hypot((a / w) as f64 - (b / w) as f64)
    };

    let budget = (4.0 * seed.perimeter()) as usize + 64;
    let mut visited = vec![false; w * h];
    visited[start] = true;
    let mut chain = vec![start];
    let mut bridges = 0;
    let mut swept = 0.0;
    let mut cur = start;
    let reach = p.bridge_limit.floor() as isize;
    while chain.len() < budget {
        if swept > 1.5 * PI && dist(cur, start) <= p.bridge_limit && advance(cur, start) >= 0.0 {
            let line = line_between(cur, start, w);
            bridges += line.iter().any(|&m| !edges.pixels[m]) as usize;
            chain.extend(line);
            return Contour {
                pixels: chain.into_iter().map(|n| [n % w, n / w]).collect(),
                fallback: false,
                bridges,
            };
        }
        let (cx, cy) = ((cur % w) as isize, (cur / w) as isize);
        let around = |r: isize| {
            let mut out = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx + dx, cy + dy);
                    if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        continue;
                    }
                    let n = y as usize * w + x as usize;
                    if in_band[n] && !visited[n] && advance(cur, n) > 0.0 {
                        out.push(n);
                    }
                }
            }
            out
        };
        let step = around(1).into_iter().min_by(|&a, &b| {
            offset(a % w, a / w)
                .total_cmp(&offset(b % w, b / w))
                .then(advance(cur, b).total_cmp(&advance(cur, a)))
                .then(a.cmp(&b))
        });
        let next = match step {
            Some(n) => n,
            None => {
                let jump = around(reach)
                    .into_iter()
                    .filter(|&n| dist(cur, n) <= p.bridge_limit)
                    .min_by(|&a, &b| {
                        dist(cur, a)
                            .total_cmp(&dist(cur, b))
                            .then(offset(a % w, a / w).total_cmp(&offset(b % w, b / w)))
                            .then(a.cmp(&b))
                    });
                match jump {
                    Some(n) => {
                        let line = line_between(cur, n, w);
                        // hopping over a single edge pixel is not a gap
                        bridges += line.iter().any(|&m| !edges.pixels[m]) as usize;
                        for m in line {
                            visited[m] = true;
                            chain.push(m);
                        }
                        n
                    }
                    None => return fallback(),
                }
            }
        };
        swept += advance(cur, next);
        visited[next] = true;
        chain.push(next);
        cur = next;
    }
    fallback()
}

/// Pixels strictly between `a` and `b` on a DDA line.
fn line_between(a: usize, b: usize, w: usize) -> Vec<usize> {
    let (ax, ay) = ((a % w) as f64, (a / w) as f64);
    let (bx, by) = ((b % w) as f64, (b / w) as f64);
    let steps = (bx - ax).abs().max((by - ay).abs()) as usize;
    (1..steps)
        .map(|s| {
            let t = s as f64 / steps as f64;
            let x = (ax + t * (bx - ax)).round() as usize;
            let y = (ay + t * (by - ay)).round() as usize;
            y * w + x
        })
        .filter(|&n| n != a && n != b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::fill_polygon;

    fn ring(e: &Ellipse2D, w: usize, h: usize) -> EdgeMap {
        let mut m = EdgeMap::new(w, h);
        for (x, y) in e.outline_pixels(w, h) {
            m.set(x, y, true);
        }
        m
    }

    fn area(c: &Contour, w: usize, h: usize) -> usize {
        let mut out = vec![false; w * h];
        fill_polygon(&c.pixels, w, h, &mut out);
        out.iter().filter(|&&b| b).count()
    }

    #[test]
    fn closed_ring_is_returned() {
        let e = Ellipse2D::new([20.0, 16.0], [12.0, 8.0], 0.3);
        let m = ring(&e, 40, 32);
        let c = close_contour(&m, &e);
        assert!(!c.fallback);
        assert_eq!(c.bridges, 0);
        let mut traced = c.pixels.clone();
        traced.sort_by_key(|&[x, y]| (y, x));
        let ring_px: Vec<[usize; 2]> = m.points().map(|(x, y)| [x, y]).collect();
        assert_eq!(traced, ring_px);
    }

    #[test]
    fn gapped_ring_is_bridged() {
        let e = Ellipse2D::new([20.0, 16.0], [12.0, 8.0], 0.0);
        let full = ring(&e, 40, 32);
        let mut gapped = full.clone();
        // knock out three pixels on the right-hand side
        let right: Vec<(usize, usize)> = full.points().filter(|&(x, _)| x >= 31).collect();
        let mid = right.len() / 2;
        for &(x, y) in &right[mid - 1..=mid + 1] {
            gapped.set(x, y, false);
        }
        let c = close_contour(&gapped, &e);
        assert!(!c.fallback);
        assert!(c.bridges >= 1);
        let (a_full, a_gap) = (area(&close_contour(&full, &e), 40, 32), area(&c, 40, 32));
        assert!((a_gap as f64 / a_full as f64 - 1.0).abs() <= 0.05);
    }

    #[test]
    fn empty_edges_fall_back_to_seed() {
        let e = Ellipse2D::new([20.0, 16.0], [12.0, 8.0], 0.0);
        let c = close_contour(&EdgeMap::new(40, 32), &e);
        assert!(c.fallback);
        assert!(!c.pixels.is_empty());
    }
}
