//! JSON-driven sweeps: plan a dependency DAG over (dataset, config)
//! cells, execute it on a local worker pool with resume support, gate the
//! results, and pick the best-fit configuration per field.

mod exec;
mod plan;
mod select;

pub use exec::{execute, run_sweep_json, JobOutcome, JobStatus, RunLedger, SweepOutput};
pub use plan::{plan, Job, JobKind};
pub use select::{select_best_fit, ChoiceOutcome, ChosenConfig, Selection, NO_ACCEPTABLE};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::analysis::{DEFAULT_HALO_TOL, DEFAULT_MIN_MODES, DEFAULT_N_MIN, DEFAULT_PK_TOL};
use crate::bench::BenchProtocol;
use crate::datamodel::CompressionConfig;
use crate::error::{Error, Result};

pub const SWEEP_SPEC_VERSION: u32 = 1;

/// Where a dataset comes from: a file on disk or the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A stored field (raw f32 plus JSON sidecar).
    GridFile { path: PathBuf },
    /// A stored particle set (six-component manifest).
    ParticleFile { manifest: PathBuf },
    /// Gaussian random field, optionally pushed through the lognormal map.
    SynthGrid {
        grid: usize,
        box_length: f64,
        spectral_index: f64,
        #[serde(default)]
        cutoff: Option<f64>,
        #[serde(default)]
        lognormal: bool,
        #[serde(default)]
        target_max: Option<f32>,
    },
    /// Mock particles sampled from a synthetic lognormal density.
    SynthParticles {
        n_particles: usize,
        grid: usize,
        box_length: f64,
        spectral_index: f64,
        #[serde(default)]
        cutoff: Option<f64>,
        velocity_sigma: f64,
        particle_mass: f64,
    },
}

impl DataSource {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, DataSource::SynthGrid { .. } | DataSource::SynthParticles { .. })
    }

    pub fn is_particles(&self) -> bool {
        matches!(self, DataSource::ParticleFile { .. } | DataSource::SynthParticles { .. })
    }

    /// Box edge length when the source defines one.
    pub fn box_length(&self) -> Option<f64> {
        match self {
            DataSource::SynthGrid { box_length, .. }
            | DataSource::SynthParticles { box_length, .. } => Some(*box_length),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub source: DataSource,
    pub configs: Vec<CompressionConfig>,
    /// Compute the spectrum on the density contrast `f/mean - 1` instead
    /// of the mean-subtracted field. Grid datasets only.
    #[serde(default)]
    pub contrast: bool,
    /// Physical box edge; required for grid files (synthetic sources and
    /// particle manifests carry their own).
    #[serde(default)]
    pub box_length: Option<f64>,
}

impl DatasetSpec {
    /// Effective box edge for analysis, if known from the spec alone.
    pub fn box_length(&self) -> Option<f64> {
        self.source.box_length().or(self.box_length)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    #[serde(default = "default_pk_tol")]
    pub pk_tol: f64,
    #[serde(default = "default_min_modes")]
    pub min_modes: u64,
    #[serde(default = "default_halo_tol")]
    pub halo_tol: f64,
    /// Friends-of-friends linking length; derived from the mean
    /// inter-particle spacing when absent.
    #[serde(default)]
    pub linking_length: Option<f64>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    /// Halo mass-bin edges, strictly increasing; derived from the
    /// original catalog when absent.
    #[serde(default)]
    pub mass_bins: Option<Vec<f64>>,
}

fn default_pk_tol() -> f64 {
    DEFAULT_PK_TOL
}
fn default_min_modes() -> u64 {
    DEFAULT_MIN_MODES
}
fn default_halo_tol() -> f64 {
    DEFAULT_HALO_TOL
}
fn default_n_min() -> usize {
    DEFAULT_N_MIN
}

impl Default for GateSpec {
    fn default() -> Self {
        GateSpec {
            pk_tol: DEFAULT_PK_TOL,
            min_modes: DEFAULT_MIN_MODES,
            halo_tol: DEFAULT_HALO_TOL,
            linking_length: None,
            n_min: DEFAULT_N_MIN,
            mass_bins: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub version: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for non-timed jobs; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub gates: GateSpec,
    #[serde(default)]
    pub protocol: BenchProtocol,
    /// Extra job-id -> dependency-ids edges merged into the planned DAG.
    #[serde(default)]
    pub extra_deps: BTreeMap<String, Vec<String>>,
    /// Emit SVG plots alongside the CSV outputs.
    #[serde(default)]
    pub plots: bool,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SWEEP_SPEC_VERSION {
            return Err(Error::Config(format!(
                "sweep spec version {} is not supported (expected {SWEEP_SPEC_VERSION})",
                self.version
            )));
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("sweep needs at least one dataset".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for ds in &self.datasets {
            if ds.name.is_empty()
                || !ds.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::Config(format!(
                    "dataset name {:?} must be non-empty and use only [A-Za-z0-9_-]",
                    ds.name
                )));
            }
            if !seen.insert(&ds.name) {
                return Err(Error::Config(format!("duplicate dataset name {:?}", ds.name)));
            }
            if ds.configs.is_empty() {
                return Err(Error::Config(format!("dataset {:?} has no configs", ds.name)));
            }
            let mut slugs = std::collections::BTreeSet::new();
            for cfg in &ds.configs {
                cfg.validate()?;
                if !slugs.insert(cfg.slug()) {
                    return Err(Error::Config(format!(
                        "dataset {:?} lists config {} twice",
                        ds.name,
                        cfg.label()
                    )));
                }
            }
            if !ds.source.is_particles() && ds.box_length().is_none() {
                return Err(Error::Config(format!(
                    "grid dataset {:?} needs a box_length for spectrum analysis",
                    ds.name
                )));
            }
            if let Some(l) = ds.box_length() {
                if !(l.is_finite() && l > 0.0) {
                    return Err(Error::Config(format!(
                        "dataset {:?} box_length must be positive, got {l}",
                        ds.name
                    )));
                }
            }
        }
        let g = &self.gates;
        if !(g.pk_tol.is_finite() && g.pk_tol > 0.0 && g.pk_tol < 1.0) {
            return Err(Error::Config(format!("pk_tol must be in (0, 1), got {}", g.pk_tol)));
        }
        if !(g.halo_tol.is_finite() && g.halo_tol > 0.0 && g.halo_tol < 1.0) {
            return Err(Error::Config(format!("halo_tol must be in (0, 1), got {}", g.halo_tol)));
        }
        if g.n_min == 0 {
            return Err(Error::Config("n_min must be at least 1".into()));
        }
        if let Some(l) = g.linking_length {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("linking_length must be positive, got {l}")));
            }
        }
        if let Some(bins) = &g.mass_bins {
            if bins.len() < 2 || bins.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(
                    "mass_bins must hold at least two strictly increasing edges".into(),
                ));
            }
        }
        if self.protocol.runs == 0 {
            return Err(Error::Config("protocol.runs must be at least 1".into()));
        }
        Ok(())
    }
}
