use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use metasim_core::biophysics::SimulationParams;
use metasim_core::phantom::PhantomSpec;
use metasim_core::segmentation::SegmentationParams;
use metasim_core::volume::Axis;
use serde::{Deserialize, Serialize};

/// Input files for the stages that consume existing data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub volume: Option<PathBuf>,
    pub vessels: Option<PathBuf>,
    pub tumor: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub tissue: Option<PathBuf>,
    pub graph: Option<PathBuf>,
}

impl Inputs {
    fn all(&self) -> impl Iterator<Item = &PathBuf> {
        [
            &self.volume,
            &self.vessels,
            &self.tumor,
            &self.truth,
            &self.tissue,
            &self.graph,
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub axis: Axis,
    /// Slice index; the middle slice when absent.
    pub index: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            axis: Axis::Z,
            index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub zeta: Option<f64>,
    pub grid: [usize; 3],
    /// Metastases planted in generated phantoms.
    pub metastases: usize,
    pub params: SimulationParams,
    pub segmentation: SegmentationParams,
    pub phantom: PhantomSpec,
    pub inputs: Inputs,
    pub render: RenderOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: None,
            workers: None,
            zeta: None,
            grid: [16, 16, 16],
            metastases: 5,
            params: SimulationParams::default(),
            segmentation: SegmentationParams::default(),
            phantom: PhantomSpec::default(),
            inputs: Inputs::default(),
            render: RenderOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Pushes the run seed into every seeded component.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.phantom.seed = seed;
            self.params.seed = seed;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.phantom.seed)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("metasim-out"))
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.inputs.all() {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if self.grid.contains(&0) {
            bail!("grid counts must be positive, got {:?}", self.grid);
        }
        if let Some(z) = self.zeta {
            if !(0.0..=1.0).contains(&z) {
                bail!("zeta must lie in [0, 1], got {z}");
            }
        }
        if self.workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        Ok(())
    }
}

pub fn parse_grid(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got '{s}'"));
    }
    let mut g = [0; 3];
    for (slot, p) in g.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("bad grid count '{p}'"))?;
        if *slot == 0 {
            return Err("grid counts must be positive".into());
        }
    }
    Ok(g)
}
