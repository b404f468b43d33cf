//! Cylinder vessel primitives and the flow graph built from them.
//!
//! A vessel `b = (c, h, r, o_xy, o_xz)` is a cylinder with center of mass
//! `c`, height `h`, average radius `r` and two orientation angles. Its start
//! and end locations are
//!
//! ```text
//! sl = c - h/2 * [cos(o_xy), cos(pi/4 - o_xy), cos(o_xz)]
//! el = c + h/2 * [cos(o_xy), cos(pi/4 - o_xy), cos(o_xz)]
//! ```
//!
//! The direction vector is generally not unit length. It is used as written
//! unless `normalize_axis` is requested.

mod build;
mod paths;
mod tree;

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub use build::{build_graph, build_graph_with_report, BuildReport};
pub use paths::{paths_within, VesselPath};
pub use tree::{max_spanning_tree, max_spanning_tree_by, UnionFind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    /// Center of mass, mm.
    pub c: Vec3,
    /// Height, mm.
    pub h: f64,
    /// Average radius, mm.
    pub r: f64,
    /// Orientation in the xy plane, radians in [0, 2pi].
    pub o_xy: f64,
    /// Orientation in the xz plane, radians in [0, pi].
    pub o_xz: f64,
}

impl Vessel {
    /// Unscaled axis direction `[cos(o_xy), cos(pi/4 - o_xy), cos(o_xz)]`.
    pub fn direction(&self) -> Vec3 {
        [
            self.o_xy.cos(),
            (FRAC_PI_4 - self.o_xy).cos(),
            self.o_xz.cos(),
        ]
    }

    pub fn endpoints(&self) -> (Vec3, Vec3) {
        endpoints(self, false)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
            && self.h.is_finite()
            && self.r.is_finite()
            && self.o_xy.is_finite()
            && self.o_xz.is_finite()
    }

    /// Builds the vessel whose endpoints are `start` and `end` under the
    /// unnormalized direction formula, if such angles exist.
    ///
    /// The xy part of the direction can point anywhere, but the z part is
    /// bounded by the xy part; `None` is returned when the segment is too
    /// steep to be represented.
    pub fn from_endpoints(start: Vec3, end: Vec3, r: f64) -> Option<Vessel> {
        let d = sub(end, start);
        // [cos a, cos(pi/4 - a)] = M [cos a, sin a] with M = [[1, 0], [1/sqrt2, 1/sqrt2]]
        let w = [d[0], std::f64::consts::SQRT_2 * d[1] - d[0]];
        let h = norm2(w);
        if h.is_nan() || h <= 0.0 || d[2].abs() > h {
            return None;
        }
        let mut o_xy = w[1].atan2(w[0]);
        if o_xy < 0.0 {
            o_xy += 2.0 * std::f64::consts::PI;
        }
        let o_xz = (d[2] / h).clamp(-1.0, 1.0).acos();
        Some(Vessel {
            c: scale_add(start, 0.5, d),
            h,
            r,
            o_xy,
            o_xz,
        })
    }
}

/// Start and end locations of a vessel's axis.
pub fn endpoints(v: &Vessel, normalize_axis: bool) -> (Vec3, Vec3) {
    let mut dir = v.direction();
    if normalize_axis {
        let n = norm(dir);
        if n > 0.0 {
            dir = [dir[0] / n, dir[1] / n, dir[2] / n];
        }
    }
    let half = v.h / 2.0;
    (scale_add(v.c, -half, dir), scale_add(v.c, half, dir))
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn norm2(a: [f64; 2]) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

#[inline]
pub(crate) fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[inline]
fn scale_add(p: Vec3, s: f64, d: Vec3) -> Vec3 {
    [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]]
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, scale_add(a, t, ab))
}

/// Flow graph `G = (B, E)`: vessels sorted by height, undirected edges.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselGraph {
    vessels: Vec<Vessel>,
    ends: Vec<(Vec3, Vec3)>,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    normalize_axis: bool,
}

impl VesselGraph {
    /// Graph without edges. Vessels are sorted ascending by `h`, ties kept
    /// in input order.
    pub fn new(vessels: Vec<Vessel>, normalize_axis: bool) -> Result<Self> {
        if let Some(bad) = vessels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVessels(format!(
                "vessel {bad} has non-finite fields"
            )));
        }
        if let Some(bad) = vessels.iter().position(|v| v.h < 0.0 || v.r < 0.0) {
            return Err(Error::InvalidVessels(format!(
                "vessel {bad} has negative h or r"
            )));
        }
        let mut vessels = vessels;
        vessels.sort_by(|a, b| a.h.total_cmp(&b.h));
        let ends = vessels
            .iter()
            .map(|v| endpoints(v, normalize_axis))
            .collect();
        let n = vessels.len();
        Ok(VesselGraph {
            vessels,
            ends,
            edges: BTreeSet::new(),
            adjacency: vec![Vec::new(); n],
            normalize_axis,
        })
    }

    /// Graph over already-sorted vessels with the given edges.
    pub fn with_edges(
        vessels: Vec<Vessel>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        normalize_axis: bool,
    ) -> Result<Self> {
        if vessels.windows(2).any(|w| w[0].h > w[1].h) {
            return Err(Error::InvalidVessels(
                "vessels must be sorted by height".into(),
            ));
        }
        let mut g = VesselGraph::new(vessels, normalize_axis)?;
        for (i, j) in edges {
            if i >= g.len() || j >= g.len() {
                return Err(Error::InvalidVessels(format!(
                    "edge ({i}, {j}) out of range"
                )));
            }
            if i == j {
                return Err(Error::InvalidVessels(format!("self-loop on vessel {i}")));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    /// Adds an undirected edge; returns false if it already existed.
    pub(crate) fn add_edge(&mut self, i: usize, j: usize) -> bool {
        debug_assert_ne!(i, j);
        let key = (i.min(j), i.max(j));
        if !self.edges.insert(key) {
            return false;
        }
        insert_sorted(&mut self.adjacency[i], j);
        insert_sorted(&mut self.adjacency[j], i);
        true
    }

    pub fn len(&self) -> usize {
        self.vessels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vessels.is_empty()
    }

    pub fn vessels(&self) -> &[Vessel] {
        &self.vessels
    }

    pub fn vessel(&self, i: usize) -> &Vessel {
        &self.vessels[i]
    }

    /// `(sl, el)` of vessel `i`.
    pub fn ends(&self, i: usize) -> (Vec3, Vec3) {
        self.ends[i]
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn normalize_axis(&self) -> bool {
        self.normalize_axis
    }

    /// Edge weight for the maximum spanning tree: the narrower radius.
    pub fn edge_weight(&self, i: usize, j: usize) -> f64 {
        self.vessels[i].r.min(self.vessels[j].r)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(i, j)| self.edge_weight(i, j)).sum()
    }

    pub fn is_connected(&self) -> bool {
        if self.vessels.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.len()
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && self.edges.len() + 1 == self.len()
    }

    /// Vessel closest to `p` and the distance from `p` to its wall.
    ///
    /// The distance is the point-to-axis distance minus the radius, clamped
    /// at zero. Ties resolve to the lowest index.
    pub fn nearest_vessel(&self, p: Vec3) -> Result<(usize, f64)> {
        if self.vessels.is_empty() {
            return Err(Error::Empty("vessel graph has no vessels".into()));
        }
        let mut best = (0, f64::INFINITY);
        for (i, v) in self.vessels.iter().enumerate() {
            let (sl, el) = self.ends[i];
            let d = (point_segment_distance(p, sl, el) - v.r).max(0.0);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            vessels: self.vessels.clone(),
            edges: self.edges().map(|(i, j)| [i, j]).collect(),
            normalize_axis: self.normalize_axis,
        }
    }

    pub fn from_json(json: GraphJson) -> Result<Self> {
        VesselGraph::with_edges(
            json.vessels,
            json.edges.into_iter().map(|[i, j]| (i, j)),
            json.normalize_axis,
        )
    }
}

fn insert_sorted(list: &mut Vec<usize>, x: usize) {
    if let Err(pos) = list.binary_search(&x) {
        list.insert(pos, x);
    }
}

/// On-disk graph: vessel list plus `[i, j]` edge pairs. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub vessels: Vec<Vessel>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub normalize_axis: bool,
}

pub fn write_vessels(vessels: &[Vessel], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(vessels)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_vessels(path: &Path) -> Result<Vec<Vessel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_graph(g: &VesselGraph, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&g.to_json())?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<VesselGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VesselGraph::from_json(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn vessel(c: Vec3, h: f64, r: f64, o_xy: f64, o_xz: f64) -> Vessel {
        Vessel {
            c,
            h,
            r,
            o_xy,
            o_xz,
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn endpoints_flat_zero_angle() {
        let (sl, el) = vessel([0.0; 3], 2.0, 1.0, 0.0, FRAC_PI_2).endpoints();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in sl.iter().zip([-1.0, -s, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in el.iter().zip([1.0, s, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(el[1], 0.70711, epsilon = 1e-5);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn endpoints_quarter_turn() {
        let (sl, el) = vessel([0.0; 3], 2.0, 1.0, FRAC_PI_4, FRAC_PI_2).endpoints();
        assert_abs_diff_eq!(sl[0], -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(sl[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sl[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(el[0], 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(el[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_height_collapses() {
        let (sl, el) = vessel([1.0, 2.0, 3.0], 0.0, 1.0, 0.3, 1.1).endpoints();
        assert_eq!(sl, [1.0, 2.0, 3.0]);
        assert_eq!(el, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn normalized_axis_has_length_h() {
        let v = vessel([0.0; 3], 3.0, 1.0, 1.0, 0.4);
        let (sl, el) = endpoints(&v, true);
        assert_abs_diff_eq!(dist(sl, el), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn from_endpoints_inverts_formula() {
        let start = [1.0, 2.0, 3.0];
        for end in [
            [5.0, 2.0, 4.0],
            [1.0, -3.0, 3.5],
            [-2.0, 6.0, 1.0],
            [0.0, 2.5, 3.0],
        ] {
            let v = Vessel::from_endpoints(start, end, 1.0).unwrap();
            assert!((0.0..=2.0 * PI).contains(&v.o_xy));
            assert!((0.0..=PI).contains(&v.o_xz));
            let (sl, el) = v.endpoints();
            for a in 0..3 {
                assert_abs_diff_eq!(sl[a], start[a], epsilon = 1e-9);
                assert_abs_diff_eq!(el[a], end[a], epsilon = 1e-9);
            }
        }
        assert!(Vessel::from_endpoints([0.0; 3], [0.0, 0.0, 5.0], 1.0).is_none());
    }

    #[test]
    fn nearest_on_axis_is_zero() {
        let g = VesselGraph::new(vec![vessel([5.0, 5.0, 5.0], 4.0, 1.0, 0.3, 1.0)], false).unwrap();
        let (sl, el) = g.ends(0);
        let mid = [
            (sl[0] + el[0]) / 2.0,
            (sl[1] + el[1]) / 2.0,
            (sl[2] + el[2]) / 2.0,
        ];
        assert_eq!(g.nearest_vessel(mid).unwrap(), (0, 0.0));
    }

    #[test]
    fn nearest_subtracts_radius() {
        // axis from (-1, -0.707, 0) to (1, 0.707, 0); (0, 0, 10) is 10 from the midpoint
        let g = VesselGraph::new(vec![vessel([0.0; 3], 2.0, 2.0, 0.0, FRAC_PI_2)], false).unwrap();
        let (i, d) = g.nearest_vessel([0.0, 0.0, 10.0]).unwrap();
        assert_eq!(i, 0);
        assert_abs_diff_eq!(d, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn nearest_tie_takes_lower_index() {
        let a = vessel([0.0, 0.0, 0.0], 1.0, 0.5, 0.0, FRAC_PI_2);
        let b = vessel([0.0, 0.0, 10.0], 1.0, 0.5, 0.0, FRAC_PI_2);
        let g = VesselGraph::new(vec![a, b], false).unwrap();
        assert_eq!(g.nearest_vessel([0.0, 0.0, 5.0]).unwrap().0, 0);
    }

    #[test]
    fn nearest_on_empty_graph_fails() {
        let g = VesselGraph::new(vec![], false).unwrap();
        assert!(g.nearest_vessel([0.0; 3]).is_err());
    }

    #[test]
    fn vessels_sorted_by_height_stably() {
        let vs = vec![
            vessel([0.0; 3], 3.0, 1.0, 0.0, 0.0),
            vessel([1.0; 3], 1.0, 1.0, 0.0, 0.0),
            vessel([2.0; 3], 3.0, 1.0, 0.0, 0.0),
        ];
        let g = VesselGraph::new(vs, false).unwrap();
        let cs: Vec<f64> = g.vessels().iter().map(|v| v.c[0]).collect();
        assert_eq!(cs, vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn graph_json_roundtrip() {
        let vs = vec![
            vessel([0.0; 3], 1.0, 1.0, 0.1, 0.2),
            vessel([1.0; 3], 2.0, 0.5, 0.3, 0.4),
        ];
        let g = VesselGraph::with_edges(vs, [(0, 1)], false).unwrap();
        let text = serde_json::to_string(&g.to_json()).unwrap();
        assert!(text.contains("\"edges\":[[0,1]]"));
        let back = VesselGraph::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn self_loops_and_bad_edges_rejected() {
        let vs = vec![vessel([0.0; 3], 1.0, 1.0, 0.0, 0.0)];
        assert!(VesselGraph::with_edges(vs.clone(), [(0, 0)], false).is_err());
        assert!(VesselGraph::with_edges(vs, [(0, 3)], false).is_err());
    }

    proptest::proptest! {
        #[test]
        fn endpoint_formula_invariants(
            c in proptest::array::uniform3(-50.0f64..50.0),
            h in 0.0f64..30.0,
            o_xy in 0.0f64..(2.0 * PI),
            o_xz in 0.0f64..PI,
        ) {
            let v = vessel(c, h, 1.0, o_xy, o_xz);
            let (sl, el) = v.endpoints();
            let dir = v.direction();
            for a in 0..3 {
                proptest::prop_assert!(((sl[a] + el[a]) / 2.0 - c[a]).abs() < 1e-9);
                proptest::prop_assert!((el[a] - sl[a] - h * dir[a]).abs() < 1e-9);
            }
            proptest::prop_assert!((dist(sl, el) - h * norm(dir)).abs() < 1e-9);
        }
    }
}
