use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ConfigError, SimConfig};
use crate::sim;
use crate::workload::{ProfileSet, Workload, PRESETS};

use super::SimReport;

/// One run of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub policy: String,
    /// Preset name or trace file path.
    pub workload: String,
    pub seed: u64,
}

impl MatrixEntry {
    pub fn new(policy: &str, workload: &str, seed: u64) -> Self {
        MatrixEntry { policy: policy.into(), workload: workload.into(), seed }
    }

    /// File-system friendly cell name.
    pub fn label(&self) -> String {
        let w = Path::new(&self.workload).file_stem().map_or(self.workload.clone(), |s| s.to_string_lossy().into_owned());
        format!("{}-{}-{}", self.policy, w, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct Matrix {
    pub config: SimConfig,
    pub profiles: ProfileSet,
    pub entries: Vec<MatrixEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    config: Option<PathBuf>,
    profiles: Option<PathBuf>,
    #[serde(default)]
    schedulers: Vec<String>,
    #[serde(default)]
    workloads: Vec<String>,
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default)]
    cells: Vec<MatrixEntry>,
}

impl Matrix {
    /// Cross product of policies, workloads and seeds, in that nesting order.
    pub fn product(config: SimConfig, profiles: ProfileSet, policies: &[&str], workloads: &[&str], seeds: &[u64]) -> Self {
        let mut entries = Vec::new();
        for p in policies {
            for w in workloads {
                for &s in seeds {
                    entries.push(MatrixEntry::new(p, w, s));
                }
            }
        }
        Matrix { config, profiles, entries }
    }

    /// Parses a matrix file. Relative paths resolve against `base`.
    ///
    /// ```toml
    /// config = "cluster.toml"      # optional
    /// profiles = "profiles.toml"   # optional
    /// schedulers = ["ct", "fair"]
    /// workloads = ["paper-sweep"]
    /// seeds = [1, 2, 3]
    /// [[cells]]                    # extra explicit runs
    /// policy = "fifo"
    /// workload = "table2"
    /// seed = 7
    /// ```
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let parse = |message: String| ConfigError::Parse { path: base.display().to_string(), message };
        let file: MatrixFile = toml::from_str(text).map_err(|e| parse(e.to_string()))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let config = match &file.config {
            Some(p) => SimConfig::load(&resolve(p))?,
            None => SimConfig::default(),
        };
        let profiles = match &file.profiles {
            Some(p) => ProfileSet::load(&resolve(p))?,
            None => ProfileSet::default(),
        };
        let workload = |w: &str| {
            if PRESETS.contains(&w) {
                w.to_string()
            } else {
                resolve(Path::new(w)).display().to_string()
            }
        };
        let mut entries = Vec::new();
        for p in &file.schedulers {
            for w in &file.workloads {
                for &s in &file.seeds {
                    entries.push(MatrixEntry::new(p, &workload(w), s));
                }
            }
        }
        for c in file.cells {
            entries.push(MatrixEntry { workload: workload(&c.workload), ..c });
        }
        Ok(Matrix { config, profiles, entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Matrix::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub entry: MatrixEntry,
    /// The error message of a failed run.
    pub report: Result<SimReport, String>,
}

pub fn run_cell(matrix: &Matrix, entry: &MatrixEntry) -> Result<SimReport, String> {
    let w = Workload::resolve(&entry.workload, entry.seed, &matrix.profiles, &matrix.config.cluster)
        .map_err(|e| e.to_string())?;
    sim::run(&matrix.config, &w, &matrix.profiles, &entry.policy, entry.seed)
        .map(|o| o.report)
        .map_err(|e| e.to_string())
}

/// Runs every entry on a pool of `parallelism` threads. Results come back
/// in entry order; a failing cell does not stop the others.
pub fn run_experiment(matrix: &Matrix, parallelism: usize) -> Result<Vec<CellResult>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build()?;
    Ok(pool.install(|| {
        matrix
            .entries
            .par_iter()
            .map(|e| CellResult { entry: e.clone(), report: run_cell(matrix, e) })
            .collect()
    }))
}
