//! Job interface to an external neural stylizer.
//!
//! Each job is a JSON file `{content, style, lambda, output, warm_start?}`.
//! The stylizer is run as `<program> <job.json>` and must write an image of
//! the content's size to `output`; a nonzero exit status is a failure. A
//! stylizer that keeps its network weights writes them to `<output>.weights`,
//! which later jobs receive as `warm_start`.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageRgb;

/// Environment variable naming the stylizer executable.
pub const BRIDGE_ENV: &str = "AGARSYNTH_BRIDGE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeJob {
    pub content: PathBuf,
    pub style: PathBuf,
    pub lambda: f64,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<PathBuf>,
}

impl BridgeJob {
    pub fn weights_path(&self) -> PathBuf {
        let mut s = self.output.clone().into_os_string();
        s.push(".weights");
        PathBuf::from(s)
    }
}

pub trait StyleBridge: Sync {
    /// Runs one job whose JSON has been written to `job_file`.
    fn run(&self, job: &BridgeJob, job_file: &Path) -> Result<()>;
}

/// Runs an executable per job.
#[derive(Clone, Debug)]
pub struct ProcessBridge {
    pub program: PathBuf,
}

impl ProcessBridge {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ProcessBridge {
            program: program.into(),
        }
    }

    /// Reads [`BRIDGE_ENV`]; an unset or empty variable is an error telling the
    /// user to fall back to a built-in mode.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(BRIDGE_ENV) {
            Some(p) if !p.is_empty() => Ok(ProcessBridge::new(p)),
            _ => Err(Error::Bridge(format!(
                "external stylization needs {BRIDGE_ENV} to point at the neural stylizer; \
                 set it, or use mode = \"semi\" or \"full\" for the built-in transfer"
            ))),
        }
    }
}

impl StyleBridge for ProcessBridge {
    fn run(&self, _job: &BridgeJob, job_file: &Path) -> Result<()> {
        let out = Command::new(&self.program).arg(job_file).output().map_err(|e| {
            Error::Bridge(format!(
                "cannot start {}: {e}; use mode = \"semi\" or \"full\" for the built-in transfer",
                self.program.display()
            ))
        })?;
        if !out.status.success() {
            return Err(Error::Bridge(format!(
                "{} failed on {} ({}): {}",
                self.program.display(),
                job_file.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(())
    }
}

/// Packs up to four equally sized patches into a 2×2 tile in reading order;
/// missing slots are black.
pub fn tile_patches(patches: &[&ImageRgb]) -> Result<ImageRgb> {
    let Some(first) = patches.first() else {
        return Err(Error::InvalidArgument("a tile needs at least one patch".into()));
    };
    if patches.len() > 4 {
        return Err(Error::InvalidArgument("a tile holds at most 4 patches".into()));
    }
    let (w, h) = first.dims();
    let mut tile = ImageRgb::new(2 * w, 2 * h);
    for (k, p) in patches.iter().enumerate() {
        if p.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                got: p.dims(),
            });
        }
        let (ox, oy) = ((k % 2) * w, (k / 2) * h);
        for y in 0..h {
            for x in 0..w {
                tile.set(ox + x, oy + y, p.get(x, y));
            }
        }
    }
    Ok(tile)
}

/// Inverse of [`tile_patches`]: the first `n` quadrants.
pub fn untile(tile: &ImageRgb, n: usize) -> Vec<ImageRgb> {
    let (w, h) = (tile.width() / 2, tile.height() / 2);
    (0..n).map(|k| tile.crop((k % 2) * w, (k / 2) * h, w, h)).collect()
}
