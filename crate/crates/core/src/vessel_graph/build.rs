//! Expanding-radius construction of the flow graph.

use super::{dist, UnionFind, Vessel, VesselGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildReport {
    /// Search radius when the graph became connected.
    pub final_radius: f64,
    /// Number of `R <- R + delta_R` steps taken.
    pub expansions: usize,
    /// Rounds that added at least one edge.
    pub productive_rounds: usize,
}

pub fn build_graph(
    vessels: Vec<Vessel>,
    r0: f64,
    delta_r: f64,
    normalize_axis: bool,
) -> Result<VesselGraph> {
    build_graph_with_report(vessels, r0, delta_r, normalize_axis).map(|(g, _)| g)
}

/// Connects vessels until the graph is connected.
///
/// Each round walks the vessels in height order. A vessel `i` whose start
/// `sl_i` lies within `R` of the start or end of some vessel it is not yet
/// joined to gets one edge, to the eligible vessel `j` minimizing
/// `||sl_i - el_j||` (lowest index on ties). Construction stops as soon as
/// the graph is connected. A round that adds nothing grows `R` by
/// `delta_r`; runs of empty rounds are skipped by stepping `R` straight to
/// the first radius that makes a new pair eligible, which yields the same
/// sequence of radii as stepping one round at a time.
pub fn build_graph_with_report(
    vessels: Vec<Vessel>,
    r0: f64,
    delta_r: f64,
    normalize_axis: bool,
) -> Result<(VesselGraph, BuildReport)> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "R_0 must be positive, got {r0}"
        )));
    }
    if !(delta_r.is_finite() && delta_r > 0.0) {
        return Err(Error::InvalidParams(format!(
            "delta_R must be positive, got {delta_r}"
        )));
    }
    if vessels.is_empty() {
        return Err(Error::Empty("no vessels to build a graph from".into()));
    }
    let mut g = VesselGraph::new(vessels, normalize_axis)?;
    let n = g.len();
    let mut report = BuildReport {
        final_radius: r0,
        expansions: 0,
        productive_rounds: 0,
    };
    let mut uf = UnionFind::new(n);
    let mut components = n;
    let mut radius = r0;

    // reach[i][j]: how close sl_i comes to vessel j (min over j's two ends);
    // link[i][j]: ||sl_i - el_j||, the ranking used to pick the partner.
    let mut reach = vec![0.0; n * n];
    let mut link = vec![0.0; n * n];
    for i in 0..n {
        let sl_i = g.ends(i).0;
        for j in 0..n {
            let (sl_j, el_j) = g.ends(j);
            reach[i * n + j] = dist(sl_i, sl_j).min(dist(sl_i, el_j));
            link[i * n + j] = dist(sl_i, el_j);
        }
    }

    while components > 1 {
        let mut added = false;
        for i in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if j == i || g.has_edge(i, j) || reach[i * n + j] > radius {
                    continue;
                }
                let d = link[i * n + j];
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            if let Some((j, _)) = best {
                g.add_edge(i, j);
                added = true;
                if uf.union(i, j) {
                    components -= 1;
                    if components == 1 {
                        break;
                    }
                }
            }
        }
        if added {
            report.productive_rounds += 1;
            continue;
        }
        // Every eligible pair is already joined; find the next radius at
        // which some unjoined pair comes into reach.
        let mut next = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if j != i && !g.has_edge(i, j) {
                    next = next.min(reach[i * n + j]);
                }
            }
        }
        debug_assert!(next.is_finite() && next > radius);
        while radius < next {
            let grown = radius + delta_r;
            if grown == radius {
                return Err(Error::InvalidParams(format!(
                    "delta_R {delta_r} is too small to grow R = {radius}"
                )));
            }
            radius = grown;
            report.expansions += 1;
        }
    }
    report.final_radius = radius;
    log::debug!(
        "built vessel graph: {} nodes, {} edges, R = {:.3} after {} expansions",
        n,
        g.edge_count(),
        radius,
        report.expansions
    );
    Ok((g, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn flat(c: [f64; 3], h: f64) -> Vessel {
        Vessel {
            c,
            h,
            r: 1.0,
            o_xy: 0.0,
            o_xz: FRAC_PI_2,
        }
    }

    /// Naive loop: one round per radius step, no skipping.
    fn naive_expansions(vessels: &[Vessel], r0: f64, dr: f64) -> (usize, usize) {
        let g0 = VesselGraph::new(vessels.to_vec(), false).unwrap();
        let n = g0.len();
        let mut g = g0.clone();
        let mut radius = r0;
        let mut steps = 0;
        while !g.is_connected() {
            let mut added = false;
            for i in 0..n {
                if g.is_connected() {
                    break;
                }
                let sl_i = g.ends(i).0;
                let cand = (0..n)
                    .filter(|&j| j != i && !g.has_edge(i, j))
                    .filter(|&j| {
                        let (sl, el) = g.ends(j);
                        dist(sl_i, sl) <= radius || dist(sl_i, el) <= radius
                    })
                    .min_by(|&a, &b| {
                        dist(sl_i, g.ends(a).1)
                            .total_cmp(&dist(sl_i, g.ends(b).1))
                            .then(a.cmp(&b))
                    });
                if let Some(j) = cand {
                    g.add_edge(i, j);
                    added = true;
                }
            }
            if !added {
                radius += dr;
                steps += 1;
            }
        }
        (steps, g.edge_count())
    }

    #[test]
    fn single_vessel_is_connected() {
        let (g, rep) = build_graph_with_report(vec![flat([0.0; 3], 1.0)], 1.0, 1.0, false).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(g.is_connected());
        assert_eq!(rep.expansions, 0);
    }

    #[test]
    fn touching_vessels_share_one_edge() {
        let a = flat([0.0; 3], 2.0);
        let (_, el) = a.endpoints();
        // b starts exactly where a ends
        let dir = a.direction();
        let b = flat([el[0] + dir[0], el[1] + dir[1], el[2] + dir[2]], 2.0);
        let g = build_graph(vec![a, b], 1.0, 1.0, false).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.is_connected());
    }

    #[test]
    fn gap_of_five_needs_four_expansions() {
        let a = flat([0.0; 3], 2.0);
        let (_, el) = a.endpoints();
        let dir = a.direction();
        // sl_b = el_a + (0, 0, 5)
        let b = flat([el[0] + dir[0], el[1] + dir[1], el[2] + 5.0 + dir[2]], 2.0);
        assert_eq!(dist(b.endpoints().0, el), 5.0);
        let (g, rep) = build_graph_with_report(vec![a, b], 1.0, 1.0, false).unwrap();
        assert_eq!(rep.expansions, 4);
        assert_eq!(rep.final_radius, 5.0);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(naive_expansions(&[a, b], 1.0, 1.0), (4, 1));
    }

    #[test]
    fn skipping_matches_naive_loop() {
        let vs: Vec<Vessel> = (0..7)
            .map(|i| {
                let x = (i * 37 % 11) as f64 * 4.3;
                let y = (i * 17 % 7) as f64 * 3.1;
                Vessel {
                    c: [x, y, (i % 3) as f64 * 2.0],
                    h: 1.0 + (i % 4) as f64,
                    r: 0.5,
                    o_xy: i as f64 * 0.7,
                    o_xz: 0.3 + i as f64 * 0.2,
                }
            })
            .collect();
        let (g, rep) = build_graph_with_report(vs.clone(), 0.5, 0.25, false).unwrap();
        assert!(g.is_connected());
        assert_eq!(
            (rep.expansions, g.edge_count()),
            naive_expansions(&vs, 0.5, 0.25)
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let vs = vec![flat([0.0; 3], 1.0)];
        assert!(build_graph(vs.clone(), 0.0, 1.0, false).is_err());
        assert!(build_graph(vs.clone(), 1.0, -1.0, false).is_err());
        assert!(build_graph(vec![], 1.0, 1.0, false).is_err());
        let mut bad = vs[0];
        bad.c[1] = f64::NAN;
        assert!(matches!(
            build_graph(vec![bad], 1.0, 1.0, false),
            Err(Error::InvalidVessels(_))
        ));
    }
}
