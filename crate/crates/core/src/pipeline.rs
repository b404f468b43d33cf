//! In-memory end-to-end run: segmentation, graph, spanning tree, heatmap,
//! upsampling and (optionally) scoring.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::biophysics::{SimulationParams, TumorSpec};
use crate::error::{Error, Result};
use crate::heatmap::{generate_heatmap, upsample_to_volume, HeatmapResult};
use crate::metrics::{score_batch, ScoreReport};
use crate::segmentation::{segment_volume, SegmentationParams, SegmentationResult};
use crate::vessel_graph::{
    build_graph_with_report, max_spanning_tree, BuildReport, Vessel, VesselGraph,
};
use crate::volume::{GridSpec, Volume3D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub params: SimulationParams,
    pub grid: [usize; 3],
    pub segmentation: SegmentationParams,
    /// Hard-score threshold; the prediction's 95th percentile when absent.
    pub zeta: Option<f64>,
    /// Heatmap worker threads; the global pool when absent.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            params: SimulationParams::default(),
            grid: [16, 16, 16],
            segmentation: SegmentationParams::default(),
            zeta: None,
            workers: None,
        }
    }
}

pub struct PipelineInput<'a> {
    pub volume: &'a Volume3D,
    pub vessels: Vec<Vessel>,
    pub tumor: TumorSpec,
    /// Ground-truth metastasis mask to score against.
    pub truth: Option<&'a Volume3D>,
    pub case_id: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub segmentation: SegmentationResult,
    /// Graph produced by the expanding-radius construction.
    pub graph: VesselGraph,
    pub build: BuildReport,
    /// Graph the model was evaluated on (spanning tree or `graph`).
    pub flow_graph: VesselGraph,
    pub heatmap: HeatmapResult,
    /// Heatmap probabilities at volume resolution.
    pub prediction: Volume3D,
    pub score: Option<ScoreReport>,
    pub timings: Vec<(&'static str, Duration)>,
}

fn stage<T>(
    name: &'static str,
    timings: &mut Vec<(&'static str, Duration)>,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    let elapsed = t.elapsed();
    log::info!("{name}: {elapsed:.2?}");
    timings.push((name, elapsed));
    Ok(out)
}

pub fn run_pipeline(input: PipelineInput<'_>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let p = &cfg.params;
    let mut timings = Vec::new();
    stage("config", &mut timings, || p.validate())?;
    let segmentation = stage("segmentation", &mut timings, || {
        segment_volume(input.volume, &cfg.segmentation)
    })?;
    let (graph, build) = stage("graph", &mut timings, || {
        build_graph_with_report(input.vessels.clone(), p.r0, p.delta_r, p.normalize_axis)
    })?;
    let flow_graph = stage("spanning-tree", &mut timings, || {
        if p.use_spanning_tree {
            max_spanning_tree(&graph)
        } else {
            Ok(graph.clone())
        }
    })?;
    let grid = GridSpec::new(cfg.grid);
    let heatmap = stage("heatmap", &mut timings, || {
        generate_heatmap(
            &flow_graph,
            &input.tumor,
            &segmentation.mask,
            &grid,
            p,
            cfg.workers,
        )
    })?;
    let prediction = stage("upsample", &mut timings, || {
        upsample_to_volume(&heatmap, input.volume.dims())
    })?;
    let score = match input.truth {
        Some(truth) => Some(stage("score", &mut timings, || {
            score_batch(
                &[(input.case_id.clone(), truth.clone(), prediction.clone())],
                cfg.zeta,
            )
        })?),
        None => None,
    };
    Ok(PipelineOutput {
        segmentation,
        graph,
        build,
        flow_graph,
        heatmap,
        prediction,
        score,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, plant_metastases, PhantomSpec};

    #[test]
    fn small_phantom_end_to_end() {
        let spec = PhantomSpec::default().resampled(32);
        let (vol, gt) = generate_phantom(&spec).unwrap();
        let cfg = PipelineConfig {
            grid: [8, 8, 8],
            ..Default::default()
        };
        let truth = plant_metastases(&gt, &cfg.params, 3, 1).unwrap();
        let out = run_pipeline(
            PipelineInput {
                volume: &vol,
                vessels: gt.vessels.clone(),
                tumor: gt.tumor,
                truth: Some(&truth),
                case_id: "p1".into(),
            },
            &cfg,
        )
        .unwrap();
        assert!(out.flow_graph.is_tree());
        assert!((out.prediction.sum() - 1.0).abs() < 1e-9);
        let report = out.score.unwrap();
        assert_eq!(report.per_case.len(), 1);
        assert!(report.per_case[0].hard <= 1.0);
    }

    #[test]
    fn stage_errors_are_labeled() {
        let spec = PhantomSpec::default().resampled(16);
        let (vol, gt) = generate_phantom(&spec).unwrap();
        let err = run_pipeline(
            PipelineInput {
                volume: &vol,
                vessels: Vec::new(),
                tumor: gt.tumor,
                truth: None,
                case_id: "x".into(),
            },
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "graph", .. }), "{err}");
    }
}
