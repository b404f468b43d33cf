//! Output staging: files are written to a scratch directory inside the
//! output directory and moved into place only when the command succeeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use metasim_core::volume::checksum;
use serde::Serialize;

use crate::config::RunConfig;

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)
            .with_context(|| format!("creating output dir {}", out.display()))?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)
            .with_context(|| format!("output dir {} is not writable", out.display()))?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// sha256 of every staged file, by name.
    pub fn checksums(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            out.insert(name, checksum(&fs::read(entry.path())?));
        }
        Ok(out)
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        let mut names: Vec<_> = fs::read_dir(&self.dir)?.collect::<std::io::Result<Vec<_>>>()?;
        names.sort_by_key(|e| e.file_name());
        for entry in names {
            let target = self.out.join(entry.file_name());
            fs::rename(entry.path(), &target)
                .with_context(|| format!("moving {}", target.display()))?;
            moved.push(target);
        }
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub seed: u64,
    pub params_fingerprint: String,
    pub wall_time_s: f64,
    pub outputs: BTreeMap<String, String>,
    pub config: &'a RunConfig,
}

/// Writes `manifest.json` (config copy, seed, fingerprints, output
/// checksums) into the staging directory.
pub fn write_manifest(
    staging: &Staging,
    command: &str,
    cfg: &RunConfig,
    started: Instant,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed(),
        params_fingerprint: cfg.params.fingerprint(),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: staging.checksums()?,
        config: cfg,
    };
    fs::write(
        staging.path("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
