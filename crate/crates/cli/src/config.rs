//! Run configuration: one JSON document drives every subcommand. Every run
//! is a pure function of its config and seed, so reports are byte-identical
//! across repeats.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nullcoord_core::dioph::FrequencyVector;
use nullcoord_core::straighten::StraightenConfig;
use nullcoord_core::TorusFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    /// explicit frequency components
    Values(Vec<f64>),
    /// `{"golden": true}` selects the golden-ratio frequency for this `nu`
    Golden { golden: bool },
}

/// A coefficient function: inline spectral JSON or a path to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSource {
    File { file: PathBuf },
    Inline(TorusFunction),
}

impl FunctionSource {
    pub fn load(&self, base: &Path) -> anyhow::Result<TorusFunction> {
        match self {
            FunctionSource::Inline(f) => Ok(f.clone()),
            FunctionSource::File { file } => {
                let path = if file.is_absolute() { file.clone() } else { base.join(file) };
                let text = std::fs::read_to_string(&path)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KgSpec {
    pub bxx: FunctionSource,
    pub bx: FunctionSource,
    pub bt: FunctionSource,
    pub b: FunctionSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiophSpec {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub gammas: Vec<f64>,
    pub samples: usize,
    pub cutoff: usize,
}

/// Real initial data as cosine/sine amplitudes per spatial mode.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ModeData {
    pub modes: Vec<(usize, f64, f64)>,
}

impl ModeData {
    pub fn on_grid(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                self.modes
                    .iter()
                    .map(|&(k, c, s)| c * (k as f64 * x).cos() + s * (k as f64 * x).sin())
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveSpec {
    pub t_end: f64,
    pub dt: f64,
    pub grid_size: usize,
    #[serde(default)]
    pub snapshot_until: f64,
    #[serde(default = "default_norm_stride")]
    pub norm_stride: usize,
    pub psi0: ModeData,
    #[serde(default)]
    pub dpsi0: ModeData,
    /// run the almost-periodicity projection after the evolution
    #[serde(default)]
    pub check_almost_periodic: bool,
    #[serde(default = "default_r_grid")]
    pub r_grid: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_norm_stride() -> usize {
    100
}
fn default_r_grid() -> usize {
    64
}
fn default_k_max() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdoSpec {
    pub n_phi: usize,
    pub n_x: usize,
    pub gr: FunctionSource,
    pub g: Option<FunctionSource>,
    #[serde(default = "default_gr_smallness")]
    pub smallness: f64,
    /// dump the residual-generator blocks as CSV matrices
    #[serde(default)]
    pub export_matrices: bool,
}

fn default_gr_smallness() -> f64 {
    nullcoord_core::psdo::GR_SMALLNESS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tolerances {
    #[serde(default = "tol_eikonal")]
    pub eikonal: f64,
    #[serde(default = "tol_metric")]
    pub metric_form: f64,
    #[serde(default = "tol_parity")]
    pub parity: f64,
    #[serde(default = "tol_identity")]
    pub identity: f64,
}

fn tol_eikonal() -> f64 {
    1e-9
}
fn tol_metric() -> f64 {
    1e-8
}
fn tol_parity() -> f64 {
    1e-9
}
fn tol_identity() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eikonal: tol_eikonal(),
            metric_form: tol_metric(),
            parity: tol_parity(),
            identity: tol_identity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartModeSpec {
    Parity,
    NoParity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub nu: usize,
    pub gamma: f64,
    #[serde(default)]
    pub iota: Option<f64>,
    pub omega: OmegaSpec,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// straightening guard on `gamma^-1 |a0|_{s1}`; `null` keeps the default
    #[serde(default)]
    pub smallness_threshold: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    /// transport coefficient `a0` for `straighten`
    #[serde(default)]
    pub a0: Option<FunctionSource>,
    /// metric coefficient `A` for `chart` / `evolve` / `check`
    #[serde(default)]
    pub metric: Option<FunctionSource>,
    #[serde(default)]
    pub chart_mode: Option<ChartModeSpec>,
    #[serde(default)]
    pub kg: Option<KgSpec>,
    #[serde(default)]
    pub dioph: Option<DiophSpec>,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub psdo: Option<PsdoSpec>,
}

fn default_mass() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.nu < 1 {
            anyhow::bail!("nu must be >= 1");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            anyhow::bail!("gamma must lie in (0, 1)");
        }
        if let OmegaSpec::Values(v) = &self.omega {
            if v.len() != self.nu {
                anyhow::bail!("omega has {} components but nu = {}", v.len(), self.nu);
            }
        }
        Ok(())
    }

    pub fn frequency(&self) -> FrequencyVector {
        let mut w = match &self.omega {
            OmegaSpec::Values(v) => FrequencyVector::new(v.clone(), self.gamma),
            OmegaSpec::Golden { .. } => FrequencyVector::golden(self.nu, self.gamma),
        };
        if let Some(iota) = self.iota {
            w.iota = iota;
        }
        w
    }

    pub fn straighten_config(&self) -> StraightenConfig {
        let mut cfg = StraightenConfig::default();
        if let Some(t) = self.smallness_threshold {
            cfg.smallness_threshold = t;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(n) = self.max_iter {
            cfg.max_iter = n;
        }
        cfg
    }

    pub fn tols(&self) -> Tolerances {
        self.tolerances.clone().unwrap_or_default()
    }
}
