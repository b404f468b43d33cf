//! Grid evaluation of the colonization model and L1 normalization.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biophysics::{Model, SimulationParams, TumorSpec};
use crate::error::{Error, Result};
use crate::vessel_graph::VesselGraph;
use crate::volume::{sample_grid, write_volume, GridSpec, Volume3D, VolumeKind};

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapResult {
    /// Expected settled cells per grid point, at grid resolution.
    pub raw: Volume3D,
    /// `raw / sum(raw)`, or all zero when `zero_mass` is set.
    pub prob: Volume3D,
    pub grid: GridSpec,
    pub params_fingerprint: String,
    pub zero_mass: bool,
}

/// Evaluates the model at every grid point of `tissue` and normalizes.
///
/// `workers = None` uses the global rayon pool. Points are evaluated
/// independently and the normalizing sum is taken sequentially in grid
/// order, so the output does not depend on the worker count.
pub fn generate_heatmap(
    graph: &VesselGraph,
    tumor: &TumorSpec,
    tissue: &Volume3D,
    grid: &GridSpec,
    params: &SimulationParams,
    workers: Option<usize>,
) -> Result<HeatmapResult> {
    if tissue.kind() != VolumeKind::Binary {
        return Err(Error::InvalidVolume("tissue volume must be binary".into()));
    }
    tumor.validate(tissue)?;
    let points = sample_grid(tissue, grid)?;
    let model = Model::new(graph, tumor, params)?;

    let eval = || -> Result<Vec<f64>> {
        points
            .par_iter()
            .enumerate()
            .map(|(n, p)| model.evaluate(tissue, p.position, n as u64))
            .collect()
    };
    let raw = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidParams(format!("cannot build worker pool: {e}")))?
            .install(eval)?,
        None => eval()?,
    };
    let extent = tissue.extent();
    let spacing = [
        extent[0] / grid.counts[0] as f64,
        extent[1] / grid.counts[1] as f64,
        extent[2] / grid.counts[2] as f64,
    ];
    let (prob, zero_mass) = normalize_l1(&raw);
    if zero_mass {
        log::warn!("heatmap has zero mass; probability volume left all-zero");
    }
    Ok(HeatmapResult {
        raw: Volume3D::new(grid.counts, spacing, raw, VolumeKind::Scalar)?,
        prob: Volume3D::new(grid.counts, spacing, prob, VolumeKind::Probability)?,
        grid: *grid,
        params_fingerprint: params.fingerprint(),
        zero_mass,
    })
}

/// `values / sum(values)`; all zero and flagged when the sum is zero.
pub fn normalize_l1(values: &[f64]) -> (Vec<f64>, bool) {
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| v / total).collect(), false)
}

/// Nearest-neighbor upsampling of the probability volume, renormalized.
///
/// Each target voxel copies the value of the grid stratum containing it.
pub fn upsample_to_volume(h: &HeatmapResult, target_dims: [usize; 3]) -> Result<Volume3D> {
    let counts = h.grid.counts;
    for a in 0..3 {
        if target_dims[a] < counts[a] {
            return Err(Error::InvalidGrid(format!(
                "target dims {target_dims:?} smaller than grid {counts:?}"
            )));
        }
    }
    let extent = h.prob.extent();
    let spacing = [
        extent[0] / target_dims[0] as f64,
        extent[1] / target_dims[1] as f64,
        extent[2] / target_dims[2] as f64,
    ];
    let stratum = |i: usize, a: usize| i * counts[a] / target_dims[a];
    let copied = Volume3D::from_fn(target_dims, spacing, VolumeKind::Scalar, |i, j, k| {
        h.prob.get(stratum(i, 0), stratum(j, 1), stratum(k, 2))
    })?;
    let (data, _) = normalize_l1(copied.data());
    Volume3D::new(target_dims, spacing, data, VolumeKind::Probability)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapManifest {
    pub grid: [usize; 3],
    pub params_fingerprint: String,
    pub zero_mass: bool,
    pub raw_file: String,
    pub prob_file: String,
    pub raw_checksum: String,
    pub prob_checksum: String,
}

/// Writes `heatmap_raw.raw`, `heatmap_prob.raw` (plus sidecars) and
/// `heatmap_manifest.json` into `dir`.
pub fn write_heatmap(h: &HeatmapResult, dir: &Path) -> Result<HeatmapManifest> {
    let raw_file = "heatmap_raw.raw";
    let prob_file = "heatmap_prob.raw";
    let raw_checksum = write_volume(&h.raw, &dir.join(raw_file))?;
    let prob_checksum = write_volume(&h.prob, &dir.join(prob_file))?;
    let manifest = HeatmapManifest {
        grid: h.grid.counts,
        params_fingerprint: h.params_fingerprint.clone(),
        zero_mass: h.zero_mass,
        raw_file: raw_file.into(),
        prob_file: prob_file.into(),
        raw_checksum,
        prob_checksum,
    };
    let path = dir.join("heatmap_manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
