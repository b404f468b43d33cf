mod config;
mod staging;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use metasim_core::biophysics::TumorSpec;
use metasim_core::heatmap::{generate_heatmap, upsample_to_volume, write_heatmap};
use metasim_core::metrics::score_batch;
use metasim_core::phantom::{generate_phantom, plant_metastases};
use metasim_core::pipeline::{run_pipeline, PipelineConfig, PipelineInput};
use metasim_core::segmentation::segment_volume;
use metasim_core::vessel_graph::{
    build_graph_with_report, max_spanning_tree, read_graph, read_vessels, write_graph,
    write_vessels,
};
use metasim_core::volume::{read_volume, render_slice, write_volume, Axis, GridSpec, Volume3D};

use config::{parse_grid, RunConfig};
use staging::{write_manifest, Staging};

#[derive(Parser)]
#[command(
    name = "metasim",
    version,
    about = "Metastasis colonization heatmaps from vessel trees"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Heatmap worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Hard-score threshold.
    #[arg(long, global = true)]
    zeta: Option<f64>,
    /// Heatmap grid counts, X,Y,Z.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<[usize; 3]>,
    /// Sample Poisson cell counts instead of expected values.
    #[arg(long, global = true)]
    stochastic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom with ground truth.
    Phantom,
    /// Segment colonizable tissue from a scalar volume.
    Segment {
        #[arg(long)]
        volume: Option<PathBuf>,
    },
    /// Build the flow graph and spanning tree from a vessel list.
    Vessels {
        #[arg(long)]
        vessels: Option<PathBuf>,
    },
    /// Evaluate the heatmap on a tissue mask.
    Heatmap {
        #[arg(long)]
        tissue: Option<PathBuf>,
        /// Graph JSON the model runs on.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        tumor: Option<PathBuf>,
    },
    /// Score predictions against truth masks (paired by position).
    Score {
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
    },
    /// Render a volume slice to PNG.
    Render {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        axis: Option<Axis>,
        #[arg(long)]
        index: Option<usize>,
    },
    /// Run every stage end to end.
    Pipeline,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("METASIM_LOG", "warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.zeta.is_some() {
        cfg.zeta = cli.zeta;
    }
    if let Some(g) = cli.grid {
        cfg.grid = g;
    }
    if cli.stochastic {
        cfg.params.stochastic = true;
    }
    cfg.apply_seed();
    cfg.validate()?;

    let started = Instant::now();
    let staging = Staging::new(&cfg.out_dir())?;
    let name = match cli.command {
        Command::Phantom => {
            cmd_phantom(&cfg, &staging)?;
            "phantom"
        }
        Command::Segment { volume } => {
            let path = pick(volume, &cfg.inputs.volume, "--volume")?;
            cmd_segment(&cfg, &staging, &path)?;
            "segment"
        }
        Command::Vessels { vessels } => {
            let path = pick(vessels, &cfg.inputs.vessels, "--vessels")?;
            cmd_vessels(&cfg, &staging, &path)?;
            "vessels"
        }
        Command::Heatmap {
            tissue,
            graph,
            tumor,
        } => {
            let tissue = pick(tissue, &cfg.inputs.tissue, "--tissue")?;
            let graph = pick(graph, &cfg.inputs.graph, "--graph")?;
            let tumor = pick(tumor, &cfg.inputs.tumor, "--tumor")?;
            cmd_heatmap(&cfg, &staging, &tissue, &graph, &tumor)?;
            "heatmap"
        }
        Command::Score { truth, pred } => {
            cmd_score(&cfg, &staging, &truth, &pred)?;
            "score"
        }
        Command::Render {
            volume,
            axis,
            index,
        } => {
            let v = read_volume(&volume)?;
            let axis = axis.unwrap_or(cfg.render.axis);
            let index = index
                .or(cfg.render.index)
                .unwrap_or(v.dims()[axis.index()] / 2);
            render_slice(
                &v,
                axis,
                index,
                &staging.path(&slice_name("slice", axis, index)),
            )?;
            "render"
        }
        Command::Pipeline => {
            cmd_pipeline(&cfg, &staging)?;
            "pipeline"
        }
    };
    write_manifest(&staging, name, &cfg, started)?;
    for p in staging.commit()? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = flag
        .or_else(|| configured.clone())
        .ok_or_else(|| anyhow!("missing input: pass {what} or set it under [inputs]"))?;
    if !p.exists() {
        bail!("input file {} does not exist", p.display());
    }
    Ok(p)
}

fn slice_name(prefix: &str, axis: Axis, index: usize) -> String {
    let a = ["x", "y", "z"][axis.index()];
    format!("{prefix}_{a}{index}.png")
}

fn read_tumor(path: &Path) -> Result<TumorSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_phantom(cfg: &RunConfig, staging: &Staging) -> Result<()> {
    let (volume, mut gt) = generate_phantom(&cfg.phantom).context("phantom")?;
    gt.metastasis_mask = plant_metastases(&gt, &cfg.params, cfg.metastases, cfg.seed())
        .context("planting metastases")?;
    write_volume(&volume, &staging.path("volume.raw"))?;
    write_volume(&gt.lung_mask, &staging.path("lung_mask.raw"))?;
    write_volume(&gt.metastasis_mask, &staging.path("metastasis_mask.raw"))?;
    write_vessels(&gt.vessels, &staging.path("vessels.json"))?;
    write_json(&staging.path("tumor.json"), &gt.tumor)?;
    println!(
        "phantom {:?}: {} vessels, {} lung voxels, {} metastasis voxels",
        volume.dims(),
        gt.vessels.len(),
        gt.lung_mask.count_nonzero(),
        gt.metastasis_mask.count_nonzero()
    );
    Ok(())
}

fn cmd_segment(cfg: &RunConfig, staging: &Staging, volume: &Path) -> Result<()> {
    let v = read_volume(volume)?;
    let seg = segment_volume(&v, &cfg.segmentation).context("segmentation")?;
    write_volume(&seg.mask, &staging.path("tissue_mask.raw"))?;
    write_json(&staging.path("segmentation.json"), &seg.slices)?;
    println!(
        "tissue: {} voxels; {} slices without ellipses",
        seg.mask.count_nonzero(),
        seg.flagged_slices().len()
    );
    Ok(())
}

fn cmd_vessels(cfg: &RunConfig, staging: &Staging, vessels: &Path) -> Result<()> {
    let p = &cfg.params;
    let list = read_vessels(vessels)?;
    let (graph, report) =
        build_graph_with_report(list, p.r0, p.delta_r, p.normalize_axis).context("graph")?;
    let tree = max_spanning_tree(&graph).context("spanning tree")?;
    write_graph(&graph, &staging.path("graph.json"))?;
    write_graph(&tree, &staging.path("tree.json"))?;
    write_json(
        &staging.path("build.json"),
        &serde_json::json!({
            "final_radius": report.final_radius,
            "expansions": report.expansions,
            "productive_rounds": report.productive_rounds,
            "edges": graph.edge_count(),
        }),
    )?;
    println!(
        "{} vessels, {} edges (R = {}), tree weight {:.4}",
        graph.len(),
        graph.edge_count(),
        report.final_radius,
        tree.total_weight()
    );
    Ok(())
}

fn cmd_heatmap(
    cfg: &RunConfig,
    staging: &Staging,
    tissue: &Path,
    graph: &Path,
    tumor: &Path,
) -> Result<()> {
    let tissue = read_volume(tissue)?;
    let graph = read_graph(graph)?;
    let tumor = read_tumor(tumor)?;
    let h = generate_heatmap(
        &graph,
        &tumor,
        &tissue,
        &GridSpec::new(cfg.grid),
        &cfg.params,
        cfg.workers,
    )
    .context("heatmap")?;
    write_heatmap(&h, staging.dir())?;
    let up = upsample_to_volume(&h, tissue.dims())?;
    write_volume(&up, &staging.path("prediction.raw"))?;
    println!(
        "heatmap {:?}: mass {:.6e}, zero mass {}",
        cfg.grid,
        h.raw.sum(),
        h.zero_mass
    );
    Ok(())
}

fn cmd_score(
    cfg: &RunConfig,
    staging: &Staging,
    truth: &[PathBuf],
    pred: &[PathBuf],
) -> Result<()> {
    if truth.len() != pred.len() {
        bail!(
            "{} --truth files but {} --pred files",
            truth.len(),
            pred.len()
        );
    }
    let cases = truth
        .iter()
        .zip(pred)
        .enumerate()
        .map(|(n, (t, p))| Ok(((n + 1).to_string(), read_volume(t)?, read_volume(p)?)))
        .collect::<Result<Vec<(String, Volume3D, Volume3D)>>>()?;
    let report = score_batch(&cases, cfg.zeta).context("scoring")?;
    let table = report.to_table();
    print!("{table}");
    fs::write(staging.path("score.tsv"), &table)?;
    write_json(&staging.path("score.json"), &report)?;
    Ok(())
}

fn cmd_pipeline(cfg: &RunConfig, staging: &Staging) -> Result<()> {
    let inputs = &cfg.inputs;
    let (volume, vessels, tumor, truth) = match (&inputs.volume, &inputs.vessels, &inputs.tumor) {
        (Some(v), Some(b), Some(t)) => {
            let truth = inputs.truth.as_deref().map(read_volume).transpose()?;
            (read_volume(v)?, read_vessels(b)?, read_tumor(t)?, truth)
        }
        (None, None, None) => {
            let (volume, gt) = generate_phantom(&cfg.phantom).context("phantom stage failed")?;
            let truth = plant_metastases(&gt, &cfg.params, cfg.metastases, cfg.seed())
                .context("planting stage failed")?;
            write_volume(&volume, &staging.path("volume.raw"))?;
            write_volume(&gt.lung_mask, &staging.path("lung_mask.raw"))?;
            write_volume(&truth, &staging.path("metastasis_mask.raw"))?;
            write_vessels(&gt.vessels, &staging.path("vessels.json"))?;
            write_json(&staging.path("tumor.json"), &gt.tumor)?;
            (volume, gt.vessels, gt.tumor, Some(truth))
        }
        _ => bail!("[inputs] needs volume, vessels and tumor together (or none to use a phantom)"),
    };
    let pcfg = PipelineConfig {
        params: cfg.params.clone(),
        grid: cfg.grid,
        segmentation: cfg.segmentation,
        zeta: cfg.zeta,
        workers: cfg.workers,
    };
    let out = run_pipeline(
        PipelineInput {
            volume: &volume,
            vessels,
            tumor,
            truth: truth.as_ref(),
            case_id: cfg.seed().to_string(),
        },
        &pcfg,
    )?;
    write_volume(&out.segmentation.mask, &staging.path("tissue_mask.raw"))?;
    write_json(&staging.path("segmentation.json"), &out.segmentation.slices)?;
    write_graph(&out.graph, &staging.path("graph.json"))?;
    write_graph(&out.flow_graph, &staging.path("tree.json"))?;
    write_heatmap(&out.heatmap, staging.dir())?;
    write_volume(&out.prediction, &staging.path("prediction.raw"))?;
    let axis = cfg.render.axis;
    let index = cfg.render.index.unwrap_or(volume.dims()[axis.index()] / 2);
    render_slice(
        &volume,
        axis,
        index,
        &staging.path(&slice_name("volume", axis, index)),
    )?;
    render_slice(
        &out.segmentation.mask,
        axis,
        index,
        &staging.path(&slice_name("tissue", axis, index)),
    )?;
    render_slice(
        &out.prediction,
        axis,
        index,
        &staging.path(&slice_name("prediction", axis, index)),
    )?;
    let timings: serde_json::Map<String, serde_json::Value> = out
        .timings
        .iter()
        .map(|(k, d)| (k.to_string(), serde_json::json!(d.as_secs_f64())))
        .collect();
    write_json(&staging.path("timings.json"), &timings)?;
    if let Some(report) = &out.score {
        let table = report.to_table();
        print!("{table}");
        fs::write(staging.path("score.tsv"), &table)?;
        write_json(&staging.path("score.json"), report)?;
    }
    println!(
        "pipeline done: {} tissue voxels, {} edges, zero mass {}",
        out.segmentation.mask.count_nonzero(),
        out.flow_graph.edge_count(),
        out.heatmap.zero_mass
    );
    Ok(())
}
