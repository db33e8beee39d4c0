//! Single-document JSON checkpoints for the three model kinds.

use std::fs;
use std::path::Path;

use imcal_core::baselines::{LinearModel, MlpModel};
use imcal_core::calib::{CalibratedModel, PilotSet, StopReason, TrainingReport};
use imcal_core::linalg::CMat;
use imcal_core::model::{CompactModelParams, MetaConfig, PortRoles, ScatteringPredictor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{complex_matrix, complex_rows, pair, unpair, Pair, RolesJson};

pub const CHECKPOINT_FORMAT: &str = "imcal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub enum TrainedModel {
    Physical(CalibratedModel<f64>),
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Physical(_) => "physical",
            TrainedModel::Linear(_) => "linear",
            TrainedModel::Mlp(_) => "mlp",
        }
    }

    pub fn roles(&self) -> &PortRoles {
        match self {
            TrainedModel::Physical(m) => &m.roles,
            TrainedModel::Linear(m) => &m.roles,
            TrainedModel::Mlp(m) => &m.roles,
        }
    }

    pub fn predictor(&self) -> &dyn ScatteringPredictor<f64> {
        match self {
            TrainedModel::Physical(m) => m,
            TrainedModel::Linear(m) => m,
            TrainedModel::Mlp(m) => m,
        }
    }
}

/// What the model was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingInfo {
    pub dataset_sha256: String,
    pub cost: String,
    /// Mask rows of a masked cost, '1' for included coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<String>>,
    /// Every configuration seen in training, as bitstrings.
    pub configs: Vec<String>,
}

impl TrainingInfo {
    pub fn config_set(&self) -> Result<std::collections::HashSet<MetaConfig>> {
        self.configs
            .iter()
            .map(|s| MetaConfig::from_bitstring(s).map_err(CliError::from))
            .collect()
    }
}

pub struct Checkpoint {
    pub model: TrainedModel,
    pub training: TrainingInfo,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportJson {
    iterations: usize,
    best_iteration: usize,
    best_validation_cost: f64,
    n_train: usize,
    n_validation: usize,
    stop: StopReason,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicalJson {
    n_antennas: usize,
    n_meta: usize,
    roles: RolesJson,
    alpha_a: Pair,
    alpha_0: Pair,
    alpha_1: Pair,
    /// Upper triangle with diagonal, row-major.
    coupling: Vec<Pair>,
    pilot_seed: Option<u64>,
    pilots: Vec<Vec<Pair>>,
    report: ReportJson,
}

#[derive(Serialize)]
struct Envelope<'a, M: Serialize> {
    format: &'static str,
    version: u32,
    kind: &'static str,
    model: &'a M,
    training: &'a TrainingInfo,
}

fn physical_json(m: &CalibratedModel<f64>) -> PhysicalJson {
    let r = &m.report;
    PhysicalJson {
        n_antennas: m.params.n_antennas(),
        n_meta: m.params.n_meta(),
        roles: (&m.roles).into(),
        alpha_a: pair(m.params.alpha_a),
        alpha_0: pair(m.params.alpha_0),
        alpha_1: pair(m.params.alpha_1),
        coupling: m.params.coupling_upper().iter().map(|&z| pair(z)).collect(),
        pilot_seed: m.pilots.seed,
        pilots: complex_rows(&m.pilots.matrix),
        report: ReportJson {
            iterations: r.iterations,
            best_iteration: r.best_iteration,
            best_validation_cost: r.best_validation_cost,
            n_train: r.n_train,
            n_validation: r.n_validation,
            stop: r.stop,
        },
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<String> {
    fn wrap<M: Serialize>(kind: &'static str, model: &M, training: &TrainingInfo) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&Envelope {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            kind,
            model,
            training,
        })
    }
    let text = match &ck.model {
        TrainedModel::Physical(m) => wrap("physical", &physical_json(m), &ck.training),
        TrainedModel::Linear(m) => wrap("linear", m, &ck.training),
        TrainedModel::Mlp(m) => wrap("mlp", m, &ck.training),
    }
    .map_err(|e| CliError::Incompatible(format!("checkpoint cannot be encoded: {e}")))?;
    Ok(text + "\n")
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)?).map_err(|e| CliError::io(path, e))
}

fn physical_from_json(p: PhysicalJson) -> std::result::Result<CalibratedModel<f64>, String> {
    let n = p.n_antennas + p.n_meta;
    let expected = n * (n + 1) / 2;
    if p.coupling.len() != expected {
        return Err(format!(
            "coupling list has {} entries, expected (N+1)N/2 = {expected} for N = {n}",
            p.coupling.len()
        ));
    }
    let params = CompactModelParams::new(
        p.n_antennas,
        p.n_meta,
        unpair(p.alpha_a),
        unpair(p.alpha_0),
        unpair(p.alpha_1),
        p.coupling.into_iter().map(unpair).collect(),
    )
    .map_err(|e| e.to_string())?;
    let roles = p.roles.to_roles().map_err(|e| e.to_string())?;
    let matrix: CMat<f64> = complex_matrix(&p.pilots)?;
    let report = TrainingReport {
        iterations: p.report.iterations,
        best_iteration: p.report.best_iteration,
        best_validation_cost: p.report.best_validation_cost,
        n_train: p.report.n_train,
        n_validation: p.report.n_validation,
        stop: p.report.stop,
        trace: Vec::new(),
    };
    CalibratedModel::from_params(
        params,
        roles,
        PilotSet {
            matrix,
            seed: p.pilot_seed,
        },
        report,
    )
    .map_err(|e| e.to_string())
}

pub fn decode_checkpoint(path: &Path, text: &str) -> Result<Checkpoint> {
    let bad = |m: String| CliError::parse(path, 1, m);
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(bad(format!("not an {CHECKPOINT_FORMAT} document")));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(CliError::Version {
                path: path.to_path_buf(),
                found,
                supported: CHECKPOINT_VERSION,
            })
        }
        None => return Err(bad("checkpoint lacks a version".into())),
    }
    let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("").to_string();
    let model_value = value.get_mut("model").map(serde_json::Value::take).ok_or_else(|| bad("missing `model`".into()))?;
    let training: TrainingInfo = serde_json::from_value(
        value.get_mut("training").map(serde_json::Value::take).ok_or_else(|| bad("missing `training`".into()))?,
    )
    .map_err(|e| bad(format!("training: {e}")))?;
    let model = match kind.as_str() {
        "physical" => {
            let p: PhysicalJson = serde_json::from_value(model_value).map_err(|e| bad(e.to_string()))?;
            TrainedModel::Physical(physical_from_json(p).map_err(bad)?)
        }
        "linear" => {
            let m: LinearModel = serde_json::from_value(model_value).map_err(|e| bad(e.to_string()))?;
            if m.weights.len() != m.intercept.len() || m.weights.iter().any(|w| w.len() != m.n_meta) {
                return Err(bad("linear weights disagree with n_meta or the coefficient count".into()));
            }
            TrainedModel::Linear(m)
        }
        "mlp" => {
            let m: MlpModel = serde_json::from_value(model_value).map_err(|e| bad(e.to_string()))?;
            m.check_layout().map_err(|e| bad(e.to_string()))?;
            TrainedModel::Mlp(m)
        }
        other => {
            return Err(bad(format!(
                "unknown model kind '{other}' (expected physical, linear or mlp)"
            )))
        }
    };
    Ok(Checkpoint { model, training })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(path, &text)
}
