//! Run configuration (TOML). Every section is optional and every key has a
//! default; unknown keys are errors.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use rwm_mpc::design::DesignConfig;
use rwm_mpc::fgm::{FgmOptions, Preconditioner, Restart, Width};
use rwm_mpc::lti::SurrogateConfig;
use rwm_mpc::sim::{ControllerKind, NoiseConfig, SimConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Write measured solve times into CSVs; off gives byte-reproducible
    /// files.
    pub timing: bool,
    /// Optional matrix-set file holding the plant (A, B, C, ...); when absent
    /// the seeded surrogate from `[model]` is used.
    pub plant_file: Option<PathBuf>,
    pub model: SurrogateConfig,
    pub design: DesignConfig,
    pub controller: ControllerSection,
    pub solver: SolverSection,
    pub sim: SimSection,
    pub noise: NoiseConfig,
    pub sweep: SweepSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            seed: 0,
            timing: true,
            plant_file: None,
            model: SurrogateConfig::default(),
            design: DesignConfig::default(),
            controller: ControllerSection::default(),
            solver: SolverSection::default(),
            sim: SimSection::default(),
            noise: NoiseConfig::default(),
            sweep: SweepSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    /// Move-blocking interval lengths; their sum is the horizon.
    pub blocking: Vec<usize>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection { kind: ControllerKind::Mpc, blocking: vec![2, 2, 76] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Fgm,
    Oracle,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartName {
    Off,
    AsWritten,
    MomentumReset,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerName {
    RowSum,
    Scalar,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthName {
    Wide,
    Narrow,
}

impl From<WidthName> for Width {
    fn from(w: WidthName) -> Self {
        match w {
            WidthName::Wide => Width::Wide,
            WidthName::Narrow => Width::Narrow,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverKind,
    pub iters: usize,
    pub width: WidthName,
    pub restart: RestartName,
    pub preconditioner: PreconditionerName,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            kind: SolverKind::Fgm,
            iters: 50,
            width: WidthName::Wide,
            restart: RestartName::AsWritten,
            preconditioner: PreconditionerName::RowSum,
        }
    }
}

impl SolverSection {
    pub fn fgm_options(&self) -> FgmOptions {
        FgmOptions {
            i_max: self.iters,
            width: self.width.into(),
            restart: match self.restart {
                RestartName::Off => Restart::Off,
                RestartName::AsWritten => Restart::AsWritten,
                RestartName::MomentumReset => Restart::MomentumReset,
            },
            preconditioner: match self.preconditioner {
                PreconditionerName::RowSum => Preconditioner::RowSum,
                PreconditionerName::Scalar => Preconditioner::Scalar,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration: f64,
    pub substep: f64,
    pub saturation: f64,
    pub xi0: [f64; 2],
    pub settle_threshold: f64,
    pub divergence: f64,
    pub current_limit: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            duration: d.duration,
            substep: d.substep,
            saturation: d.saturation,
            xi0: d.xi0,
            settle_threshold: d.settle_threshold,
            divergence: d.divergence,
            current_limit: d.current_limit,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub bap_min: f64,
    pub bap_max: f64,
    /// Points per axis.
    pub bap_points: usize,
    pub controllers: Vec<ControllerKind>,
    pub gammas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            bap_min: 0.35,
            bap_max: 0.65,
            bap_points: 7,
            controllers: vec![ControllerKind::Mpc, ControllerKind::LqgEwp],
            gammas: vec![0.1, 5.0, 10.0, 19.0, 20.0],
            omegas: vec![-15.0, 0.0, 15.0],
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub iters: Vec<usize>,
    pub widths: Vec<WidthName>,
    pub verify_iters: usize,
    pub max_mse: f64,
    pub max_cost_gap: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            iters: rwm_mpc::bench::DEFAULT_ITERS.to_vec(),
            widths: vec![WidthName::Wide, WidthName::Narrow],
            verify_iters: 50,
            max_mse: 1e-4,
            max_cost_gap: 1e-4,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    anyhow!("config line {line}: {msg}")
                }
                None => anyhow!("config: {msg}"),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            duration: self.sim.duration,
            ts: self.design.ts,
            substep: self.sim.substep,
            ps_lag: self.design.ps_lag,
            ps_delay: self.design.ps_delay,
            saturation: self.sim.saturation,
            xi0: self.sim.xi0,
            settle_threshold: self.sim.settle_threshold,
            divergence: self.sim.divergence,
            current_limit: self.sim.current_limit,
            noise: self.noise.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        if self.controller.blocking.is_empty() {
            bail!("controller.blocking must not be empty");
        }
        if !(self.sweep.bap_min <= self.sweep.bap_max) {
            bail!("sweep.bap_min must not exceed sweep.bap_max");
        }
        Ok(())
    }
}
