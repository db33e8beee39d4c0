//! TOML experiment configuration. Every section and field is optional and
//! falls back to the desk-scale defaults.

use std::fs;
use std::path::Path;

use imcal_core::baselines::MlpOptions;
use imcal_core::calib::{PilotChoice, TrainOptions};
use imcal_core::cavity::{build_cavity, CavitySpec, GroundTruth, HiddenCompact};
use imcal_core::dataset::CoefficientMask;
use imcal_core::metrics::Alignment;
use imcal_core::model::PortRoles;
use imcal_core::sweep::{CoefficientSet, ModelKind, SweepSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiddenSpec {
    pub n_antennas: usize,
    pub n_meta: usize,
    pub coupling_scale: f64,
    pub seed: u64,
}

impl Default for HiddenSpec {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            n_meta: 16,
            coupling_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthConfig {
    DipoleCavity(CavitySpec),
    HiddenCompact(HiddenSpec),
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig::DipoleCavity(CavitySpec::default())
    }
}

impl TruthConfig {
    pub fn seed(&self) -> u64 {
        match self {
            TruthConfig::DipoleCavity(s) => s.seed,
            TruthConfig::HiddenCompact(s) => s.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            TruthConfig::DipoleCavity(s) => s.seed = seed,
            TruthConfig::HiddenCompact(s) => s.seed = seed,
        }
    }

    pub fn n_antennas(&self) -> usize {
        match self {
            TruthConfig::DipoleCavity(s) => s.n_antennas,
            TruthConfig::HiddenCompact(s) => s.n_antennas,
        }
    }

    pub fn build(&self) -> Result<GroundTruth<f64>> {
        Ok(match self {
            TruthConfig::DipoleCavity(s) => GroundTruth::DipoleCavity(build_cavity(s)?),
            TruthConfig::HiddenCompact(s) => {
                if s.n_antennas == 0 {
                    return Err(CliError::Config("hidden-compact truth needs at least one antenna".into()));
                }
                GroundTruth::HiddenCompact(HiddenCompact::random(s.n_antennas, s.n_meta, s.coupling_scale, s.seed))
            }
        })
    }
}

/// A block of coefficients `rx x tx` in physical port numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub rx: Vec<usize>,
    pub tx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_data: usize,
    pub seed: u64,
    /// Transmit and receive ports; all antennas when absent.
    pub tx: Option<Vec<usize>>,
    pub rx: Option<Vec<usize>>,
    pub phaseless: bool,
    pub pilots: PilotChoice,
    pub pilot_seed: u64,
    /// Coefficients left out of the calibration data.
    pub exclude: Option<Block>,
    pub noise_snr_db: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_data: 2000,
            seed: 1,
            tx: None,
            rx: None,
            phaseless: false,
            pilots: PilotChoice::Random,
            pilot_seed: 0,
            exclude: None,
            noise_snr_db: None,
        }
    }
}

impl DatasetConfig {
    pub fn roles(&self, n_antennas: usize) -> Result<PortRoles> {
        let all: Vec<usize> = (0..n_antennas).collect();
        Ok(PortRoles::new(
            n_antennas,
            self.tx.clone().unwrap_or_else(|| all.clone()),
            self.rx.clone().unwrap_or(all),
        )?)
    }

    pub fn mask(&self, roles: &PortRoles) -> Option<CoefficientMask> {
        self.exclude
            .as_ref()
            .map(|b| CoefficientMask::excluding_block(roles, &b.rx, &b.tx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub n_eval: usize,
    pub seed: u64,
    pub alignment: Alignment,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            n_eval: 200,
            seed: 2,
            alignment: Alignment::PerCoefficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub name: String,
    pub tx: Vec<usize>,
    pub rx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Coefficient sets; a single full-matrix set when empty.
    pub sets: Vec<SetConfig>,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub eval_seed: u64,
    pub n_eval: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: vec![50, 100, 200, 400, 800, 1600],
            models: vec![ModelKind::Physical, ModelKind::Linear, ModelKind::Mlp],
            sets: Vec::new(),
            seeds: vec![0],
            data_seed: 1,
            eval_seed: 2,
            n_eval: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub pool: usize,
    pub pool_seed: u64,
    /// Receive port to focus on.
    pub focus_port: usize,
    /// Coefficient used for QPSK.
    pub qpsk_tx: usize,
    pub qpsk_rx: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            pool: 1000,
            pool_seed: 3,
            focus_port: 0,
            qpsk_tx: 0,
            qpsk_rx: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: TruthConfig,
    pub dataset: DatasetConfig,
    pub train: TrainOptions,
    pub mlp: MlpOptions,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepConfig,
    pub control: ControlConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical JSON form; its hash identifies the experiment.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serialises")
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let n_a = self.truth.n_antennas();
        let sets = if self.sweep.sets.is_empty() {
            vec![CoefficientSet {
                name: "full".into(),
                roles: PortRoles::full(n_a),
            }]
        } else {
            self.sweep
                .sets
                .iter()
                .map(|s| {
                    Ok(CoefficientSet {
                        name: s.name.clone(),
                        roles: PortRoles::new(n_a, s.tx.clone(), s.rx.clone())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(SweepSpec {
            grid: self.sweep.grid.clone(),
            models: self.sweep.models.clone(),
            sets,
            seeds: self.sweep.seeds.clone(),
            data_seed: self.sweep.data_seed,
            eval_seed: self.sweep.eval_seed,
            n_eval: self.sweep.n_eval,
            train: self.train.clone(),
            mlp: self.mlp.clone(),
            noise_snr_db: self.dataset.noise_snr_db,
        })
    }
}
