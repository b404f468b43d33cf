use std::collections::VecDeque;

use super::VesselGraph;
use crate::error::{Error, Result};

/// A simple path through the flow graph.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselPath {
    pub nodes: Vec<usize>,
    /// Sum of vessel heights over every vessel on the path, endpoints included.
    pub length: f64,
}

/// All simple paths from `s` to `t` strictly shorter than `nu` millimeters.
///
/// Partial paths are expanded breadth-first and dropped as soon as their
/// length reaches `nu`; heights are non-negative so no extension of a
/// dropped path can qualify. Results are ordered by length, then by node
/// sequence.
pub fn paths_within(g: &VesselGraph, s: usize, t: usize, nu: f64) -> Result<Vec<VesselPath>> {
    let n = g.len();
    if s >= n || t >= n {
        return Err(Error::InvalidVessels(format!(
            "path endpoints ({s}, {t}) out of range for {n} vessels"
        )));
    }
    if nu.is_nan() {
        return Err(Error::InvalidParams("path bound is NaN".into()));
    }
    let h = |i: usize| g.vessel(i).h;
    let mut found = Vec::new();
    let start = VesselPath {
        nodes: vec![s],
        length: h(s),
    };
    if start.length >= nu {
        return Ok(found);
    }
    let mut queue = VecDeque::from([start]);
    while let Some(path) = queue.pop_front() {
        let last = *path.nodes.last().expect("paths are never empty");
        if last == t {
            found.push(path);
            continue;
        }
        for &next in g.neighbors(last) {
            if path.nodes.contains(&next) {
                continue;
            }
            let length = path.length + h(next);
            if length >= nu {
                continue;
            }
            let mut nodes = path.nodes.clone();
            nodes.push(next);
            queue.push_back(VesselPath { nodes, length });
        }
    }
    found.sort_by(|a, b| {
        a.length
            .total_cmp(&b.length)
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
    Ok(found)
}
