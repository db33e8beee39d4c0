//! Minibatch Adam calibration with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calib::adam::AdamState;
use crate::calib::cost::{CostKind, DEFAULT_SMOOTHING};
use crate::calib::gradient::{batch_cost_and_gradient, Objective, PreparedRecord};
use crate::dataset::{Dataset, Measurement};
use crate::error::{Error, Result};
use crate::linalg::{identity, CMat};
use crate::model::{scattering_block, CompactModelParams, MetaConfig, PortRoles, ScatteringPredictor};
use crate::scalar::{Cplx, Real};

/// Pilot excitations `X` (`N_T x N_P`), shared by every configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet<T: Real> {
    pub matrix: CMat<T>,
    /// Seed of a random draw; `None` for canonical-basis pilots.
    pub seed: Option<u64>,
}

impl<T: Real> PilotSet<T> {
    /// `n_tx` pilots with i.i.d. standard normal real and imaginary parts.
    pub fn random(n_tx: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9170_7a11_0000);
        let matrix = CMat::from_fn(n_tx, n_tx, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Cplx::new(T::lit(re), T::lit(im))
        });
        Self {
            matrix,
            seed: Some(seed),
        }
    }

    /// Unit excitation of one port at a time.
    pub fn canonical(n_tx: usize) -> Self {
        Self {
            matrix: identity(n_tx),
            seed: None,
        }
    }

    pub fn n_pilots(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotChoice {
    Random,
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    /// Minibatch size; `None` picks 1000 (coherent, masked) or 10000
    /// (phaseless).
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// Multiply the learning rate by this after `lr_plateau` iterations
    /// without validation improvement.
    pub lr_decay: f64,
    pub lr_plateau: usize,
    pub lr_floor: f64,
    /// Stop once this many iterations pass without improvement.
    pub patience: usize,
    pub validation_fraction: f64,
    pub validation_every: usize,
    pub init_std: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub smoothing_eps: f64,
    pub pilots: PilotChoice,
    pub pilot_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: None,
            learning_rate: 1e-2,
            lr_decay: 0.5,
            lr_plateau: 2500,
            lr_floor: 1e-4,
            patience: 7500,
            validation_fraction: 1.0 / 9.0,
            validation_every: 50,
            init_std: 0.2,
            max_iterations: 200_000,
            seed: 0,
            smoothing_eps: DEFAULT_SMOOTHING,
            pilots: PilotChoice::Random,
            pilot_seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "validation fraction must lie strictly between 0 and 1".into(),
            ));
        }
        if !(self.smoothing_eps > 0.0) {
            return Err(Error::InvalidArgument("smoothing epsilon must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.init_std >= 0.0) {
            return Err(Error::InvalidArgument("learning rate and init std must be positive".into()));
        }
        if self.validation_every == 0 || self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("validation cadence and batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, kind: &CostKind) -> usize {
        self.batch_size.unwrap_or(match kind {
            CostKind::Phaseless => 10_000,
            _ => 1_000,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub train_cost: f64,
    pub validation_cost: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub best_iteration: usize,
    pub best_validation_cost: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

impl TrainingReport {
    /// `iteration,train_cost,validation_cost,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,train_cost,validation_cost,lr\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.iteration, r.train_cost, r.validation_cost, r.learning_rate
            ));
        }
        out
    }

    /// Recorded best-so-far validation costs, one per trace row.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|r| {
                best = best.min(r.validation_cost);
                best
            })
            .collect()
    }
}

/// A calibrated compact model together with the port mapping it was
/// trained for.
#[derive(Debug, Clone)]
pub struct CalibratedModel<T: Real> {
    pub params: CompactModelParams<T>,
    /// Roles in physical port numbers (what predictions are laid out by).
    pub roles: PortRoles,
    /// Physical port behind each model antenna.
    pub ports: Vec<usize>,
    /// Roles in the model's own antenna numbering.
    pub model_roles: PortRoles,
    pub pilots: PilotSet<T>,
    pub report: TrainingReport,
}

impl<T: Real> CalibratedModel<T> {
    /// Wrap parameters (e.g. from a checkpoint) without a training history.
    pub fn from_params(
        params: CompactModelParams<T>,
        roles: PortRoles,
        pilots: PilotSet<T>,
        report: TrainingReport,
    ) -> Result<Self> {
        let (model_roles, ports) = compact_roles(&roles)?;
        if model_roles.n_antennas() != params.n_antennas() {
            return Err(Error::Dimension(format!(
                "roles involve {} antennas, parameters have {}",
                model_roles.n_antennas(),
                params.n_antennas()
            )));
        }
        Ok(Self {
            params,
            roles,
            ports,
            model_roles,
            pilots,
            report,
        })
    }
}

impl<T: Real> ScatteringPredictor<T> for CalibratedModel<T> {
    fn n_meta(&self) -> usize {
        self.params.n_meta()
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>> {
        scattering_block(&self.params, config, &self.model_roles).map(|s| s.entries)
    }
}

/// Renumber the antennas taking part in `roles` as `0..N_A` (sorted by
/// physical port). Returns the renumbered roles and the physical ports.
pub fn compact_roles(roles: &PortRoles) -> Result<(PortRoles, Vec<usize>)> {
    let mut ports: Vec<usize> = roles.tx_ports().iter().chain(roles.rx_ports()).copied().collect();
    ports.sort_unstable();
    ports.dedup();
    let remap = |p: &usize| ports.iter().position(|q| q == p).expect("port present");
    let tx = roles.tx_ports().iter().map(remap).collect();
    let rx = roles.rx_ports().iter().map(remap).collect();
    Ok((PortRoles::new(ports.len(), tx, rx)?, ports))
}

/// RMS magnitude of the entries the cost compares; non-finite entries are
/// skipped.
fn data_scale<T: Real>(data: &Dataset<T>, kind: &CostKind) -> T {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in &data.records {
        let m = r.measurement.magnitudes();
        for c in 0..m.ncols() {
            for row in 0..m.nrows() {
                if let CostKind::Masked(mask) = kind {
                    if !mask.is_included(row, c) {
                        continue;
                    }
                }
                let v = m[(row, c)].as_f64();
                if v.is_finite() {
                    sum += v * v;
                    count += 1;
                }
            }
        }
    }
    let rms = (sum / count.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        T::lit(rms)
    } else {
        T::one()
    }
}

fn rescaled<T: Real>(data: &Dataset<T>, factor: T) -> Dataset<T> {
    let mut out = data.clone();
    for r in &mut out.records {
        match &mut r.measurement {
            Measurement::Complex(m) => m.iter_mut().for_each(|z| *z = *z * factor),
            Measurement::Intensity(m) => m.iter_mut().for_each(|x| *x = *x * factor),
        }
    }
    out
}

/// Truncated normal sample: resample outside two standard deviations.
fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Calibrate a compact model for `roles` (a sub-block of the dataset's
/// roles, in physical port numbers) by minimising `kind`.
pub fn calibrate<T: Real>(
    dataset: &Dataset<T>,
    roles: &PortRoles,
    kind: &CostKind,
    opts: &TrainOptions,
) -> Result<CalibratedModel<T>> {
    opts.validate()?;
    kind.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset.validate()?;
    let same_roles = roles == dataset.roles();
    if dataset.is_phaseless() && !same_roles {
        return Err(Error::Phaseless(
            "phaseless data must be calibrated on the roles it was recorded with".into(),
        ));
    }
    // Fit to unit-RMS data; W scales inversely with S, so the fitted
    // parameters are divided by the same factor at the end.
    let data = dataset.restrict(roles)?;
    if let Some(mask) = &data.header.mask {
        if !mask.excluded().is_empty() && !matches!(kind, CostKind::Masked(_)) {
            return Err(Error::InvalidArgument(format!(
                "the dataset excludes {} coefficients; calibrate it with the masked cost",
                mask.excluded().len()
            )));
        }
    }
    let scale = data_scale(&data, kind);
    let data = rescaled(&data, T::one() / scale);

    let (model_roles, ports) = compact_roles(roles)?;
    let n_a = model_roles.n_antennas();
    let n_s = dataset.header.n_meta;

    let pilots = if dataset.is_phaseless() {
        if !matches!(kind, CostKind::Phaseless) {
            return Err(Error::Phaseless(format!(
                "a {} cost needs complex measurements",
                kind.name()
            )));
        }
        match &dataset.header.pilots {
            Some(x) => PilotSet {
                matrix: x.clone(),
                seed: None,
            },
            None => PilotSet::canonical(roles.n_tx()),
        }
    } else {
        match opts.pilots {
            PilotChoice::Random => PilotSet::random(roles.n_tx(), opts.pilot_seed),
            PilotChoice::Canonical => PilotSet::canonical(roles.n_tx()),
        }
    };

    let eps = T::lit(opts.smoothing_eps);
    let obj = Objective {
        roles: &model_roles,
        pilots: &pilots.matrix,
        kind,
        eps,
    };
    let prepared = data
        .records
        .iter()
        .map(|r| obj.prepare(r))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if prepared.len() < 2 {
        0
    } else {
        ((prepared.len() as f64 * opts.validation_fraction).round() as usize).clamp(1, prepared.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train: Vec<usize> = train_idx.to_vec();
    // a single record serves as its own validation set
    let val: Vec<usize> = if n_val == 0 { train.clone() } else { val_idx.to_vec() };
    let val_refs: Vec<&PreparedRecord<T>> = val.iter().map(|&i| &prepared[i]).collect();

    let n_params = crate::model::n_real_params(n_a + n_s);
    let mut theta: Vec<T> = (0..n_params)
        .map(|_| T::lit(truncated_normal(&mut rng, opts.init_std)))
        .collect();
    let mut adam = AdamState::new(n_params, T::lit(opts.learning_rate));
    let batch_size = opts.batch_size_for(kind).min(train.len());

    let val_cost = |theta: &[T]| -> Result<T> {
        let p = CompactModelParams::from_vec(n_a, n_s, theta)?;
        Ok(batch_cost_and_gradient(&p, &val_refs, &obj, false)?.0)
    };

    let mut best_cost = val_cost(&theta)?;
    let mut best_theta = theta.clone();
    let mut best_iter = 0usize;
    let mut last_decay = 0usize;
    let mut trace = vec![TraceRow {
        iteration: 0,
        train_cost: f64::NAN,
        validation_cost: (best_cost * scale).as_f64(),
        learning_rate: opts.learning_rate,
    }];
    let mut cursor = train.len();
    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIterations;

    for it in 1..=opts.max_iterations {
        if cursor + batch_size > train.len() {
            train.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<&PreparedRecord<T>> =
            train[cursor..cursor + batch_size].iter().map(|&i| &prepared[i]).collect();
        cursor += batch_size;

        let params = CompactModelParams::from_vec(n_a, n_s, &theta)?;
        let (train_cost, grad) = batch_cost_and_gradient(&params, &batch, &obj, true)?;
        let grad = grad.expect("gradient requested");
        adam.step(&grad, &mut theta)?;
        iterations = it;

        if it % opts.validation_every == 0 {
            let v = val_cost(&theta)?;
            if v < best_cost {
                best_cost = v;
                best_theta.clone_from(&theta);
                best_iter = it;
            }
            trace.push(TraceRow {
                iteration: it,
                train_cost: (train_cost * scale).as_f64(),
                validation_cost: (v * scale).as_f64(),
                learning_rate: adam.learning_rate.as_f64(),
            });
            if it - best_iter >= opts.patience {
                stop = StopReason::Patience;
                break;
            }
            if it - best_iter.max(last_decay) >= opts.lr_plateau {
                let lr = (adam.learning_rate * T::lit(opts.lr_decay)).max(T::lit(opts.lr_floor));
                adam.learning_rate = lr;
                last_decay = it;
            }
        }
    }

    let unscaled: Vec<T> = best_theta.iter().map(|&x| x / scale).collect();
    let params = CompactModelParams::from_vec(n_a, n_s, &unscaled)?;
    Ok(CalibratedModel {
        params,
        roles: roles.clone(),
        ports,
        model_roles,
        pilots,
        report: TrainingReport {
            iterations,
            best_iteration: best_iter,
            best_validation_cost: (best_cost * scale).as_f64(),
            n_train: train.len(),
            n_validation: val.len(),
            stop,
            trace,
        },
    })
}
