//! Accuracy as a function of calibration-set size, on nested prefixes of
//! one dataset and a shared held-out evaluation set.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_linear, fit_mlp, MlpOptions};
use crate::calib::{calibrate, CostKind, TrainOptions};
use crate::cavity::{generate_dataset, random_config, stream_rng, DatasetOptions, GroundTruth, RoleView};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{zeta_report, Alignment};
use crate::model::{MetaConfig, PortRoles, ScatteringPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Physical,
    Linear,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Physical => "physical",
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        }
    }
}

/// A named block of coefficients to calibrate and evaluate on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub name: String,
    pub roles: PortRoles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Ascending calibration-set sizes.
    pub grid: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub sets: Vec<CoefficientSet>,
    /// Training seeds; one row per seed and cell.
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub eval_seed: u64,
    pub n_eval: usize,
    pub train: TrainOptions,
    pub mlp: MlpOptions,
    pub noise_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_data: usize,
    pub model: ModelKind,
    pub coeff_set: String,
    pub seed: u64,
    /// `None` when the cell failed; see `error`.
    pub zeta_siso_db: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub n_eval: usize,
}

impl SweepResult {
    /// `n_data,model,coeff_set,zeta_siso_db,seed,seconds` rows. Runtimes are
    /// left empty unless `timing` is set, so repeated runs compare equal.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("n_data,model,coeff_set,zeta_siso_db,seed,seconds\n");
        for r in &self.rows {
            let zeta = r.zeta_siso_db.map_or_else(|| "failed".to_string(), |z| format!("{z:.6}"));
            let secs = if timing { format!("{:.3}", r.seconds) } else { String::new() };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n_data,
                r.model.name(),
                r.coeff_set,
                zeta,
                r.seed,
                secs
            ));
        }
        out
    }

    /// ζ_SISO by grid point for one (model, set, seed).
    pub fn curve(&self, model: ModelKind, set: &str, seed: u64) -> Vec<(usize, Option<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.coeff_set == set && r.seed == seed)
            .map(|r| (r.n_data, r.zeta_siso_db))
            .collect()
    }

    /// Smallest grid point whose ζ_SISO reaches `target_db`.
    pub fn first_reaching(&self, model: ModelKind, set: &str, seed: u64, target_db: f64) -> Option<usize> {
        self.curve(model, set, seed)
            .into_iter()
            .find(|(_, z)| z.is_some_and(|z| z >= target_db))
            .map(|(n, _)| n)
    }
}

/// `n` configurations not present in `exclude`, drawn from seeded streams.
pub fn held_out_configs(n_meta: usize, n: usize, seed: u64, exclude: &HashSet<MetaConfig>) -> Result<Vec<MetaConfig>> {
    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let mut index = 0u64;
    let limit = (n as u64 + exclude.len() as u64) * 64 + 1024;
    while out.len() < n {
        if index >= limit {
            return Err(Error::InvalidArgument(format!(
                "could not find {n} held-out configurations"
            )));
        }
        let c = random_config(n_meta, &mut stream_rng(seed, index));
        index += 1;
        if !exclude.contains(&c) && seen.insert(c.clone()) {
            out.push(c);
        }
    }
    Ok(out)
}

fn fit_and_score(
    kind: ModelKind,
    data: &Dataset<f64>,
    set: &CoefficientSet,
    seed: u64,
    spec: &SweepSpec,
    truth: &GroundTruth<f64>,
    eval: &[MetaConfig],
) -> Result<f64> {
    let model: Box<dyn ScatteringPredictor<f64>> = match kind {
        ModelKind::Physical => {
            let opts = TrainOptions {
                seed,
                ..spec.train.clone()
            };
            Box::new(calibrate(data, &set.roles, &CostKind::Coherent, &opts)?)
        }
        ModelKind::Linear => Box::new(fit_linear(data, &set.roles)?),
        ModelKind::Mlp => {
            let opts = MlpOptions {
                seed,
                ..spec.mlp.clone()
            };
            Box::new(fit_mlp(data, &set.roles, &opts)?)
        }
    };
    let view = RoleView {
        truth,
        roles: set.roles.clone(),
    };
    let report = zeta_report(&view, model.as_ref(), eval, &set.roles, Alignment::PerCoefficient)?;
    Ok(report.zeta_siso_db)
}

/// Train every model on every coefficient set at every grid size and
/// record held-out ζ_SISO. Failed cells are recorded, not fatal.
pub fn ndata_sweep(truth: &GroundTruth<f64>, spec: &SweepSpec) -> Result<SweepResult> {
    if spec.grid.is_empty() || spec.grid.windows(2).any(|w| w[0] >= w[1]) || spec.grid[0] == 0 {
        return Err(Error::InvalidArgument("grid must be positive and strictly ascending".into()));
    }
    if spec.n_eval < 2 {
        return Err(Error::InvalidArgument("at least two evaluation configurations are needed".into()));
    }
    let full = PortRoles::full(truth.n_antennas());
    let n_max = *spec.grid.last().expect("non-empty grid");
    let opts = DatasetOptions {
        noise_snr_db: spec.noise_snr_db,
        ..Default::default()
    };
    let dataset = generate_dataset(truth, &full, n_max, spec.data_seed, &opts)?;
    let train_set: HashSet<MetaConfig> = dataset.configs().cloned().collect();
    let eval = held_out_configs(truth.n_meta(), spec.n_eval, spec.eval_seed, &train_set)?;

    let mut rows = Vec::new();
    for &n in &spec.grid {
        let data = dataset.prefix(n);
        for set in &spec.sets {
            for &kind in &spec.models {
                for &seed in &spec.seeds {
                    let start = Instant::now();
                    let outcome = fit_and_score(kind, &data, set, seed, spec, truth, &eval);
                    let seconds = start.elapsed().as_secs_f64();
                    let (zeta_siso_db, error) = match outcome {
                        Ok(z) => (Some(z), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    rows.push(SweepRow {
                        n_data: n,
                        model: kind,
                        coeff_set: set.name.clone(),
                        seed,
                        zeta_siso_db,
                        error,
                        seconds,
                    });
                }
            }
        }
    }
    Ok(SweepResult {
        grid: spec.grid.clone(),
        rows,
        n_eval: eval.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::HiddenCompact;

    fn spec(grid: Vec<usize>) -> SweepSpec {
        SweepSpec {
            grid,
            models: vec![ModelKind::Linear],
            sets: vec![CoefficientSet {
                name: "s21".into(),
                roles: PortRoles::new(2, vec![0], vec![1]).unwrap(),
            }],
            seeds: vec![0],
            data_seed: 1,
            eval_seed: 2,
            n_eval: 50,
            train: TrainOptions::default(),
            mlp: MlpOptions::default(),
            noise_snr_db: None,
        }
    }

    fn truth() -> GroundTruth<f64> {
        GroundTruth::HiddenCompact(HiddenCompact::random(2, 10, 0.1, 3))
    }

    #[test]
    fn one_cell_gives_one_row() {
        let r = ndata_sweep(&truth(), &spec(vec![40])).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].zeta_siso_db.is_some());
        assert_eq!(r.to_csv(false).lines().count(), 2);
    }

    #[test]
    fn sweeps_are_reproducible() {
        let a = ndata_sweep(&truth(), &spec(vec![20, 40])).unwrap();
        let b = ndata_sweep(&truth(), &spec(vec![20, 40])).unwrap();
        assert_eq!(a.to_csv(false), b.to_csv(false));
    }

    #[test]
    fn failed_cells_are_recorded() {
        // roles over more antennas than the ground truth has
        let mut s = spec(vec![3]);
        s.sets[0].roles = PortRoles::new(3, vec![0], vec![2]).unwrap();
        let r = ndata_sweep(&truth(), &s).unwrap();
        assert!(r.rows[0].zeta_siso_db.is_none());
        assert!(r.rows[0].error.is_some());
        assert!(r.to_csv(false).contains("failed"));
    }

    #[test]
    fn grid_must_ascend() {
        assert!(ndata_sweep(&truth(), &spec(vec![40, 20])).is_err());
    }

    #[test]
    fn held_out_configs_avoid_training_configs() {
        let train: HashSet<MetaConfig> = crate::cavity::random_configs(4, 10, 5).into_iter().collect();
        let eval = held_out_configs(4, 6, 5, &train).unwrap();
        assert!(eval.iter().all(|c| !train.contains(c)));
        assert_eq!(eval.len(), 6);
    }
}
