//! Dense brute-force evaluation of the colonization model.
//!
//! This is a second, deliberately plain implementation of the expected-cell
//! count used to plant ground-truth metastases and to cross-check the grid
//! evaluator. It walks every voxel, scans every vessel for the nearest one,
//! and enumerates source-to-target paths with a recursive depth-first
//! search. It shares no code with `biophysics`, `heatmap` or the path
//! search in `vessel_graph`.

use crate::biophysics::{SimulationParams, TumorSpec};
use crate::vessel_graph::VesselGraph;
use crate::volume::Volume3D;
use crate::Vec3;

/// Expected settled cells at every voxel center of `tissue`, storage order.
pub fn dense_model_field(
    graph: &VesselGraph,
    tumor: &TumorSpec,
    tissue: &Volume3D,
    params: &SimulationParams,
) -> Vec<f64> {
    let axes: Vec<(Vec3, Vec3, f64)> = graph
        .vessels()
        .iter()
        .map(|v| {
            let mut dir = [
                v.o_xy.cos(),
                (std::f64::consts::FRAC_PI_4 - v.o_xy).cos(),
                v.o_xz.cos(),
            ];
            if graph.normalize_axis() {
                let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
                if len > 0.0 {
                    dir = [dir[0] / len, dir[1] / len, dir[2] / len];
                }
            }
            let half = v.h / 2.0;
            let start = [
                v.c[0] - half * dir[0],
                v.c[1] - half * dir[1],
                v.c[2] - half * dir[2],
            ];
            let end = [
                v.c[0] + half * dir[0],
                v.c[1] + half * dir[1],
                v.c[2] + half * dir[2],
            ];
            (start, end, v.r)
        })
        .collect();
    let heights: Vec<f64> = graph.vessels().iter().map(|v| v.h).collect();
    let mut adjacency = vec![Vec::new(); graph.len()];
    for (i, j) in graph.edges() {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }

    let (source, tumor_gap) = closest_wall(&axes, tumor.location);
    let contact_days = ((tumor_gap - tumor.radius) / params.g).max(0.0);
    let shedding_days = (params.t_stop - contact_days).max(0.0);
    let bound = if params.xi < params.n0 {
        (params.n0 / params.xi).ln() / params.lambda_len
    } else {
        0.0
    };

    let [nx, ny, nz] = tissue.dims();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if tissue.get(i, j, k) != 1.0 || shedding_days == 0.0 {
                    out.push(0.0);
                    continue;
                }
                let center = tissue.voxel_center(i, j, k);
                let (target, _) = closest_wall(&axes, center);
                let mut survivors = 0.0;
                let mut on_path = vec![false; heights.len()];
                dfs(
                    source,
                    target,
                    0.0,
                    bound,
                    &heights,
                    &adjacency,
                    &mut on_path,
                    &mut |len| survivors += (-params.lambda_len * len).exp(),
                );
                let survivors = if survivors > 1.0 { 1.0 } else { survivors };
                out.push(params.d * shedding_days * survivors * params.p_settle);
            }
        }
    }
    out
}

fn closest_wall(axes: &[(Vec3, Vec3, f64)], p: Vec3) -> (usize, f64) {
    let mut best_index = 0;
    let mut best = f64::INFINITY;
    for (n, &(a, b, r)) in axes.iter().enumerate() {
        let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
        let ab2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        let along = if ab2 == 0.0 {
            0.0
        } else {
            ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / ab2).clamp(0.0, 1.0)
        };
        let foot = [
            a[0] + along * ab[0],
            a[1] + along * ab[1],
            a[2] + along * ab[2],
        ];
        let off = [p[0] - foot[0], p[1] - foot[1], p[2] - foot[2]];
        let gap = ((off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt() - r).max(0.0);
        if gap < best {
            best = gap;
            best_index = n;
        }
    }
    (best_index, best)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    at: usize,
    target: usize,
    so_far: f64,
    bound: f64,
    heights: &[f64],
    adjacency: &[Vec<usize>],
    on_path: &mut [bool],
    visit: &mut impl FnMut(f64),
) {
    let len = so_far + heights[at];
    if len >= bound {
        return;
    }
    if at == target {
        visit(len);
        return;
    }
    on_path[at] = true;
    for &next in &adjacency[at] {
        if !on_path[next] {
            dfs(next, target, len, bound, heights, adjacency, on_path, visit);
        }
    }
    on_path[at] = false;
}
