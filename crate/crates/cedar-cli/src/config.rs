//! Run configuration: one JSON file with `model`, `grid`, `sim`, `outputs`
//! and `figures` sections.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cedar_core::{GridSpec, ModelParams, SimConfig};
use serde::{Deserialize, Serialize};

/// Grid section of the configuration file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: f64,
    #[serde(rename = "N")]
    pub n_space: usize,
    #[serde(rename = "Mt")]
    pub n_time: usize,
    /// Storage stride: keep every `stride`-th time column. Defaults to 100.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    100
}

impl GridConfig {
    pub fn to_spec(self, horizon: f64) -> Result<GridSpec> {
        GridSpec::with_stride(self.d, self.n_space, self.n_time, horizon, self.stride)
            .map_err(Into::into)
    }
}

/// Identifiers of the figure-data emitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig6,
        FigureId::Fig7,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1.csv",
            FigureId::Fig2 => "fig2.csv",
            FigureId::Fig3 => "fig3.csv",
            FigureId::Fig4 => "fig4.csv",
            FigureId::Fig5 => "fig5.csv",
            FigureId::Fig6 => "fig6.csv",
            FigureId::Fig7 => "fig7.csv",
        }
    }

    /// Figures 1-4 read the solve artifacts; 5-7 are closed forms.
    pub fn needs_artifacts(self) -> bool {
        matches!(
            self,
            FigureId::Fig1 | FigureId::Fig2 | FigureId::Fig3 | FigureId::Fig4
        )
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = *self as usize + 1;
        write!(f, "fig{n}")
    }
}

impl FromStr for FigureId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fig1" => Ok(FigureId::Fig1),
            "fig2" => Ok(FigureId::Fig2),
            "fig3" => Ok(FigureId::Fig3),
            "fig4" => Ok(FigureId::Fig4),
            "fig5" => Ok(FigureId::Fig5),
            "fig6" => Ok(FigureId::Fig6),
            "fig7" => Ok(FigureId::Fig7),
            other => bail!("unknown figure identifier `{other}` (expected fig1..fig7)"),
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    pub sim: SimConfig,
    /// Directory all artifacts are written to.
    pub outputs: PathBuf,
    /// Figures emitted by the `figures` command when `--which` is absent.
    #[serde(default)]
    pub figures: Vec<FigureId>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        cfg.sim.validate(cfg.model.horizon)?;
        cfg.grid.to_spec(cfg.model.horizon)?;
        Ok(cfg)
    }

    pub fn spec(&self) -> GridSpec {
        self.grid
            .to_spec(self.model.horizon)
            .expect("validated at load time")
    }
}
