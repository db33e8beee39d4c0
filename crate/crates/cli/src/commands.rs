//! Subcommand implementations. Each writes its outputs and a manifest into
//! the output directory and returns the text to print on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use imcal_core::baselines::{fit_linear, fit_mlp};
use imcal_core::calib::{calibrate, gradcheck, CostKind, PilotChoice, PilotSet};
use imcal_core::cavity::{generate_dataset, random_configs, DatasetOptions, GroundTruth, RoleView};
use imcal_core::control::{
    absorb_wavefront, deposited_energy, focus_wavefront, qpsk_select, reflected_power, replay_constellation,
    select_best_config, ControlObjective, QPSK_LABELS,
};
use imcal_core::dataset::{CoefficientMask, Dataset};
use imcal_core::linalg::{select, CMat};
use imcal_core::metrics::{mi_lower_bound, offset_correct, zeta_report, ZetaReport};
use imcal_core::model::{MetaConfig, PortRoles, ScatteringPredictor};
use imcal_core::sweep::{held_out_configs, ndata_sweep};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainedModel, TrainingInfo};
use crate::config::{ExperimentConfig, TruthConfig};
use crate::dataset_io::{load_dataset, save_dataset};
use crate::error::{CliError, Result};
use crate::formats::{mask_rows, pair, parse_mask, Pair};
use crate::manifest::{file_sha256, Manifest};

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CostArg {
    Coherent,
    Phaseless,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelArg {
    Physical,
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ObjectiveArg {
    Focus,
    Absorb,
    Qpsk,
}

/// Options shared by the subcommands that read an experiment config.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

struct Run {
    config: ExperimentConfig,
    out: PathBuf,
    manifest: Manifest,
}

fn start(command: &str, common: &Common, adjust: impl FnOnce(&mut ExperimentConfig)) -> Result<Run> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    adjust(&mut config);
    let out = common
        .out
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{command} needs --out <dir>")))?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut manifest = Manifest::new(command, &config.canonical_json());
    if let Some(p) = &common.config {
        manifest.input(p)?;
    }
    Ok(Run { config, out, manifest })
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.manifest.output(&self.out, name)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Incompatible(e.to_string()))? + "\n";
        self.write(name, &text)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.out)
    }
}

fn parse_mask_flag(text: &str) -> Result<CoefficientMask> {
    let rows: Vec<String> = text.split(',').map(|s| s.trim().to_string()).collect();
    parse_mask(&rows).map_err(CliError::Usage)
}

// ---------------------------------------------------------------- gen-cavity

#[derive(Serialize)]
struct CavityFile<'a> {
    truth: &'a TruthConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    wavenumber: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    antennas: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta_atoms: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scatterers: Option<Vec<[f64; 3]>>,
}

pub fn gen_cavity(common: &Common) -> Result<String> {
    let mut run = start("gen-cavity", common, |c| {
        if let Some(s) = common.seed {
            c.truth.set_seed(s);
        }
    })?;
    let truth_config = run.config.truth.clone();
    let truth = truth_config.build()?;
    let file = match &truth {
        GroundTruth::DipoleCavity(cav) => {
            let n_a = cav.spec.n_antennas;
            let n_s = cav.spec.n_meta;
            CavityFile {
                truth: &truth_config,
                wavenumber: Some(cav.k),
                antennas: Some(cav.positions[..n_a].to_vec()),
                meta_atoms: Some(cav.positions[n_a..n_a + n_s].to_vec()),
                scatterers: Some(cav.positions[n_a + n_s..].to_vec()),
            }
        }
        // the concealed parameters stay out of every file
        GroundTruth::HiddenCompact(_) => CavityFile {
            truth: &truth_config,
            wavenumber: None,
            antennas: None,
            meta_atoms: None,
            scatterers: None,
        },
    };
    run.write_json("cavity.json", &file)?;
    run.manifest.seed("truth", run.config.truth.seed());
    let msg = format!(
        "cavity: {} antennas, {} meta-atoms -> {}",
        truth.n_antennas(),
        truth.n_meta(),
        run.out.join("cavity.json").display()
    );
    run.finish()?;
    Ok(msg)
}

// --------------------------------------------------------------- gen-dataset

pub struct GenDatasetArgs {
    pub common: Common,
    pub ndata: Option<usize>,
    pub cost: Option<CostArg>,
    pub mask: Option<String>,
}

pub fn gen_dataset(args: &GenDatasetArgs) -> Result<String> {
    let mut run = start("gen-dataset", &args.common, |c| {
        if let Some(s) = args.common.seed {
            c.dataset.seed = s;
        }
        if let Some(n) = args.ndata {
            c.dataset.n_data = n;
        }
        match args.cost {
            Some(CostArg::Phaseless) => c.dataset.phaseless = true,
            Some(_) => c.dataset.phaseless = false,
            None => {}
        }
    })?;
    let cfg = run.config.clone();
    let truth = cfg.truth.build()?;
    let roles = cfg.dataset.roles(truth.n_antennas())?;
    let mask = match (&args.mask, args.cost) {
        (Some(m), _) => Some(parse_mask_flag(m)?),
        (None, Some(CostArg::Coherent)) | (None, Some(CostArg::Phaseless)) => None,
        (None, _) => cfg.dataset.mask(&roles),
    };
    if args.cost == Some(CostArg::Masked) && mask.is_none() {
        return Err(CliError::Usage(
            "--cost masked needs --mask or a [dataset.exclude] block".into(),
        ));
    }
    if cfg.dataset.phaseless && mask.is_some() {
        return Err(CliError::Incompatible("phaseless datasets cannot carry a coefficient mask".into()));
    }
    let pilots = cfg.dataset.phaseless.then(|| match cfg.dataset.pilots {
        PilotChoice::Random => PilotSet::<f64>::random(roles.n_tx(), cfg.dataset.pilot_seed).matrix,
        PilotChoice::Canonical => PilotSet::<f64>::canonical(roles.n_tx()).matrix,
    });
    let opts = DatasetOptions {
        phaseless_pilots: pilots,
        mask,
        noise_snr_db: cfg.dataset.noise_snr_db,
        spec_hash: Some(crate::manifest::sha256_hex(
            serde_json::to_string(&cfg.truth).expect("truth serialises").as_bytes(),
        )),
    };
    let data = generate_dataset(&truth, &roles, cfg.dataset.n_data, cfg.dataset.seed, &opts)?;
    let path = run.out.join("dataset.jsonl");
    save_dataset(&path, &data)?;
    run.manifest.output(&run.out, "dataset.jsonl")?;
    run.manifest
        .seed("truth", cfg.truth.seed())
        .seed("dataset", cfg.dataset.seed)
        .argument("n_data", cfg.dataset.n_data);
    if cfg.dataset.phaseless {
        run.manifest.seed("pilots", cfg.dataset.pilot_seed);
    }
    let msg = format!("{} records -> {}", data.len(), path.display());
    run.finish()?;
    Ok(msg)
}

// ----------------------------------------------------------------- calibrate

pub struct CalibrateArgs {
    pub common: Common,
    pub data: PathBuf,
    pub model: ModelArg,
    pub cost: Option<CostArg>,
    pub mask: Option<String>,
}

fn cost_for(data: &Dataset<f64>, cost: Option<CostArg>, mask_flag: Option<&str>) -> Result<CostKind> {
    let header_mask = data.header.mask.clone().filter(|m| !m.excluded().is_empty());
    let mask = match mask_flag {
        Some(m) => Some(parse_mask_flag(m)?),
        None => header_mask,
    };
    Ok(match (cost, data.is_phaseless()) {
        (None, true) | (Some(CostArg::Phaseless), true) => CostKind::Phaseless,
        (Some(CostArg::Phaseless), false) => {
            return Err(CliError::Incompatible(
                "the phaseless cost needs a phaseless dataset (generate one with --cost phaseless)".into(),
            ))
        }
        (Some(c), true) => {
            return Err(CliError::Incompatible(format!(
                "a {} cost needs complex measurements but the dataset is phaseless",
                if c == CostArg::Masked { "masked" } else { "coherent" }
            )))
        }
        (None, false) => match mask {
            Some(m) => CostKind::Masked(m),
            None => CostKind::Coherent,
        },
        (Some(CostArg::Coherent), false) => CostKind::Coherent,
        (Some(CostArg::Masked), false) => CostKind::Masked(mask.ok_or_else(|| {
            CliError::Usage("--cost masked needs --mask or a dataset with excluded coefficients".into())
        })?),
    })
}

pub fn calibrate_cmd(args: &CalibrateArgs) -> Result<String> {
    let mut run = start("calibrate", &args.common, |c| {
        if let Some(s) = args.common.seed {
            c.train.seed = s;
            c.mlp.seed = s;
        }
    })?;
    let data = load_dataset(&args.data)?;
    run.manifest.input(&args.data)?;
    let roles = data.roles().clone();
    let cost = cost_for(&data, args.cost, args.mask.as_deref())?;
    let cfg = run.config.clone();

    let model = match args.model {
        ModelArg::Physical => {
            run.manifest.seed("train", cfg.train.seed);
            let m = calibrate(&data, &roles, &cost, &cfg.train)?;
            run.write("trace.csv", &m.report.to_csv())?;
            TrainedModel::Physical(m)
        }
        kind @ (ModelArg::Linear | ModelArg::Mlp) => {
            if !matches!(cost, CostKind::Coherent) {
                return Err(CliError::Incompatible(format!(
                    "the {} baseline needs complete complex data, not a {} cost",
                    if kind == ModelArg::Linear { "linear" } else { "mlp" },
                    cost.name()
                )));
            }
            if kind == ModelArg::Linear {
                TrainedModel::Linear(fit_linear(&data, &roles)?)
            } else {
                run.manifest.seed("mlp", cfg.mlp.seed);
                TrainedModel::Mlp(fit_mlp(&data, &roles, &cfg.mlp)?)
            }
        }
    };
    let training = TrainingInfo {
        dataset_sha256: file_sha256(&args.data)?,
        cost: cost.name().to_string(),
        mask: match &cost {
            CostKind::Masked(m) => Some(mask_rows(m)),
            _ => None,
        },
        configs: data.configs().map(MetaConfig::to_bitstring).collect(),
    };
    let ck = Checkpoint { model, training };
    save_checkpoint(&run.out.join("checkpoint.json"), &ck)?;
    run.manifest.output(&run.out, "checkpoint.json")?;
    run.manifest.argument("model", ck.model.kind()).argument("cost", cost.name());
    let detail = match &ck.model {
        TrainedModel::Physical(m) => format!(
            " iterations={} best_validation_cost={:e}",
            m.report.iterations, m.report.best_validation_cost
        ),
        TrainedModel::Mlp(m) => format!(" epochs={} best_validation_cost={:e}", m.epochs, m.best_validation_cost),
        TrainedModel::Linear(_) => String::new(),
    };
    let msg = format!("calibrated {} model on {} records{detail}", ck.model.kind(), data.len());
    run.finish()?;
    Ok(msg)
}

// ------------------------------------------------------------------ evaluate

pub struct EvaluateArgs {
    pub common: Common,
    pub checkpoint: PathBuf,
    pub data: Option<PathBuf>,
    pub disjoint_eval: bool,
    pub offset_correct: bool,
}

/// Measured values looked up by configuration.
struct MeasuredTable {
    n_meta: usize,
    rows: std::collections::HashMap<MetaConfig, CMat<f64>>,
}

impl ScatteringPredictor<f64> for MeasuredTable {
    fn n_meta(&self) -> usize {
        self.n_meta
    }

    fn predict(&self, config: &MetaConfig) -> imcal_core::Result<CMat<f64>> {
        self.rows.get(config).cloned().ok_or_else(|| {
            imcal_core::Error::InvalidArgument(format!("no measurement for configuration {config}"))
        })
    }
}

fn check_truth_fits(truth: &GroundTruth<f64>, roles: &PortRoles, n_meta: usize) -> Result<()> {
    if truth.n_antennas() != roles.n_antennas() || truth.n_meta() != n_meta {
        return Err(CliError::Incompatible(format!(
            "the configured ground truth has {} antennas and {} meta-atoms, the model {} and {}",
            truth.n_antennas(),
            truth.n_meta(),
            roles.n_antennas(),
            n_meta
        )));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<String> {
    let mut run = start("evaluate", &args.common, |c| {
        if let Some(s) = args.common.seed {
            c.evaluate.seed = s;
        }
    })?;
    let ck = load_checkpoint(&args.checkpoint)?;
    run.manifest.input(&args.checkpoint)?;
    let cfg = run.config.clone();
    let model = ck.model.predictor();
    let roles = ck.model.roles().clone();
    let n_meta = model.n_meta();
    let seen = ck.training.config_set()?;

    let (report, configs): (ZetaReport, Vec<MetaConfig>) = match &args.data {
        Some(path) => {
            let data = load_dataset(path)?;
            run.manifest.input(path)?;
            if data.is_phaseless() {
                return Err(CliError::Incompatible("evaluation needs complex measurements".into()));
            }
            if data.header.n_meta != n_meta {
                return Err(CliError::Incompatible(format!(
                    "dataset has {} meta-atoms, model {}",
                    data.header.n_meta, n_meta
                )));
            }
            let data = data.restrict(&roles)?;
            let overlap = data.configs().filter(|c| seen.contains(*c)).count();
            if overlap > 0 && !args.disjoint_eval {
                return Err(CliError::Incompatible(format!(
                    "{overlap} of {} evaluation configurations were used in training; \
                     pass --disjoint-eval to evaluate on the remaining unseen ones",
                    data.len()
                )));
            }
            let mut rows = std::collections::HashMap::new();
            let mut configs = Vec::new();
            for r in &data.records {
                if seen.contains(&r.config) || rows.contains_key(&r.config) {
                    continue;
                }
                rows.insert(r.config.clone(), r.measurement.complex()?.clone());
                configs.push(r.config.clone());
            }
            if configs.len() < 2 {
                return Err(CliError::Incompatible(format!(
                    "only {} unseen evaluation configurations remain, at least two are needed",
                    configs.len()
                )));
            }
            let table = MeasuredTable { n_meta, rows };
            (zeta_report(&table, model, &configs, &roles, cfg.evaluate.alignment)?, configs)
        }
        None => {
            let truth = cfg.truth.build()?;
            check_truth_fits(&truth, &roles, n_meta)?;
            let configs = held_out_configs(n_meta, cfg.evaluate.n_eval, cfg.evaluate.seed, &seen)?;
            let view = RoleView {
                truth: &truth,
                roles: roles.clone(),
            };
            (zeta_report(&view, model, &configs, &roles, cfg.evaluate.alignment)?, configs)
        }
    };
    run.write("zeta.csv", &report.to_csv())?;
    run.manifest.seed("evaluate", cfg.evaluate.seed);
    let mut msg = format!(
        "zeta_siso_db={:.3} min_zeta_db={:.3} n_eval={}",
        report.zeta_siso_db,
        report.min_db(),
        report.n_eval
    );

    if args.offset_correct {
        let mask = match &ck.training.mask {
            Some(rows) => parse_mask(rows).map_err(CliError::Incompatible)?,
            None => {
                return Err(CliError::Incompatible(
                    "offset correction applies to models calibrated with a masked cost".into(),
                ))
            }
        };
        let truth = cfg.truth.build()?;
        check_truth_fits(&truth, &roles, n_meta)?;
        let mut exclude = seen.clone();
        exclude.extend(configs.iter().cloned());
        let reference = held_out_configs(n_meta, 1, cfg.evaluate.seed ^ 0x0ff5_e7, &exclude)?.remove(0);
        let measured = select(&truth.scattering(&reference)?, roles.rx_ports(), roles.tx_ports());
        let corrected = offset_correct(model, &reference, &measured, &mask)?;
        let view = RoleView {
            truth: &truth,
            roles: roles.clone(),
        };
        let rep = zeta_report(&view, &corrected, &configs, &roles, cfg.evaluate.alignment)?;
        run.write("zeta_offset_corrected.csv", &rep.to_csv())?;
        msg.push_str(&format!(" reference={reference}"));
    }
    run.finish()?;
    Ok(msg)
}

// ------------------------------------------------------------------- control

pub struct ControlArgs {
    pub common: Common,
    pub checkpoint: PathBuf,
    pub objective: ObjectiveArg,
    pub pool: Option<usize>,
}

#[derive(Serialize)]
struct WavefrontResult {
    objective: &'static str,
    pool_index: usize,
    config: MetaConfig,
    predicted_value: f64,
    wavefront: Vec<Pair>,
    true_value: f64,
    true_optimum: f64,
}

#[derive(Serialize)]
struct QpskResult {
    tx: usize,
    rx: usize,
    labels: [&'static str; 4],
    configs: Vec<MetaConfig>,
    pool_indices: Vec<usize>,
    predicted_points: Vec<Pair>,
    predicted_evm: f64,
    replay_points: Vec<Pair>,
    replay_evm: f64,
    replay_phase_errors_deg: Vec<f64>,
}

pub fn control(args: &ControlArgs) -> Result<String> {
    let mut run = start("control", &args.common, |c| {
        if let Some(s) = args.common.seed {
            c.control.pool_seed = s;
        }
        if let Some(p) = args.pool {
            c.control.pool = p;
        }
    })?;
    let ck = load_checkpoint(&args.checkpoint)?;
    run.manifest.input(&args.checkpoint)?;
    let cfg = run.config.clone();
    let model = ck.model.predictor();
    let roles = ck.model.roles().clone();
    let n_meta = model.n_meta();
    let truth = cfg.truth.build()?;
    check_truth_fits(&truth, &roles, n_meta)?;
    let view = RoleView {
        truth: &truth,
        roles: roles.clone(),
    };
    let pool = random_configs(n_meta, cfg.control.pool, cfg.control.pool_seed);
    run.manifest
        .seed("pool", cfg.control.pool_seed)
        .argument("pool", cfg.control.pool);

    let msg = match args.objective {
        ObjectiveArg::Focus | ObjectiveArg::Absorb => {
            let objective = if args.objective == ObjectiveArg::Focus {
                let row = roles
                    .rx_ports()
                    .iter()
                    .position(|&p| p == cfg.control.focus_port)
                    .ok_or_else(|| {
                        CliError::Incompatible(format!("port {} is not a receive port of the model", cfg.control.focus_port))
                    })?;
                ControlObjective::Focus { row }
            } else {
                ControlObjective::Absorb
            };
            let (index, config, predicted) = select_best_config(model, &pool, objective)?;
            let s_model = model.predict(&config)?;
            let s_true = view.predict(&config)?;
            let (name, wavefront, achieved, optimum) = match objective {
                ControlObjective::Focus { row } => {
                    let t_model: Vec<_> = s_model.row(row).iter().copied().collect();
                    let t_true: Vec<_> = s_true.row(row).iter().copied().collect();
                    let w = focus_wavefront(&t_model)?;
                    let opt = t_true.iter().map(|z| z.norm_sqr()).sum::<f64>();
                    ("focus", w.clone(), deposited_energy(&t_true, &w)?, opt)
                }
                ControlObjective::Absorb => {
                    let (w, _) = absorb_wavefront(&s_model)?;
                    let (_, opt) = absorb_wavefront(&s_true)?;
                    ("absorb", w.clone(), reflected_power(&s_true, &w)?, opt)
                }
            };
            let result = WavefrontResult {
                objective: name,
                pool_index: index,
                config,
                predicted_value: predicted,
                wavefront: wavefront.amplitudes().iter().map(|&z| pair(z)).collect(),
                true_value: achieved,
                true_optimum: optimum,
            };
            run.write_json("control.json", &result)?;
            format!(
                "{name}: pool index {index}, true value {:.6e}, true optimum {:.6e}",
                achieved, optimum
            )
        }
        ObjectiveArg::Qpsk => {
            let (r, c) = roles.position(cfg.control.qpsk_rx, cfg.control.qpsk_tx).ok_or_else(|| {
                CliError::Incompatible(format!(
                    "coefficient S[{}, {}] is not covered by the model",
                    cfg.control.qpsk_rx, cfg.control.qpsk_tx
                ))
            })?;
            let constellation = qpsk_select(model, &pool, c, r)?;
            let true_values = pool
                .iter()
                .map(|cfg| Ok(view.predict(cfg)?[(r, c)]))
                .collect::<Result<Vec<_>>>()?;
            let replay = replay_constellation(&constellation, &true_values)?;
            let mut csv = String::from("label,config,predicted_re,predicted_im,replay_re,replay_im\n");
            for k in 0..4 {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    QPSK_LABELS[k],
                    constellation.configs[k],
                    constellation.points[k].re,
                    constellation.points[k].im,
                    replay.points[k].re,
                    replay.points[k].im
                ));
            }
            run.write("constellation.csv", &csv)?;
            let result = QpskResult {
                tx: cfg.control.qpsk_tx,
                rx: cfg.control.qpsk_rx,
                labels: QPSK_LABELS,
                configs: constellation.configs.clone(),
                pool_indices: constellation.pool_indices.clone(),
                predicted_points: constellation.points.iter().map(|&z| pair(z)).collect(),
                predicted_evm: constellation.evm,
                replay_points: replay.points.iter().map(|&z| pair(z)).collect(),
                replay_evm: replay.evm,
                replay_phase_errors_deg: replay.phase_errors_deg.clone(),
            };
            run.write_json("control.json", &result)?;
            format!("qpsk: predicted evm {:.4}, replayed evm {:.4}", constellation.evm, replay.evm)
        }
    };
    run.manifest.argument(
        "objective",
        match args.objective {
            ObjectiveArg::Focus => "focus",
            ObjectiveArg::Absorb => "absorb",
            ObjectiveArg::Qpsk => "qpsk",
        },
    );
    run.finish()?;
    Ok(msg)
}

// --------------------------------------------------------------------- sweep

pub fn sweep(common: &Common, timing: bool) -> Result<String> {
    let mut run = start("sweep", common, |c| {
        if let Some(s) = common.seed {
            c.sweep.seeds = vec![s];
        }
    })?;
    let cfg = run.config.clone();
    let truth = cfg.truth.build()?;
    let spec = cfg.sweep_spec()?;
    let result = ndata_sweep(&truth, &spec)?;
    run.write("sweep.csv", &result.to_csv(timing))?;
    for (i, s) in spec.seeds.iter().enumerate() {
        run.manifest.seed(&format!("train_{i}"), *s);
    }
    run.manifest
        .seed("truth", cfg.truth.seed())
        .seed("data", spec.data_seed)
        .seed("eval", spec.eval_seed)
        .argument("timing", timing);
    let failed = result.rows.iter().filter(|r| r.zeta_siso_db.is_none()).count();
    let msg = format!("{} cells, {failed} failed", result.rows.len());
    run.finish()?;
    Ok(msg)
}

// ----------------------------------------------------------------- gradcheck

pub fn gradcheck_cmd(seed: u64, out: Option<&Path>) -> Result<String> {
    let checks = gradcheck(seed)?;
    let worst = checks.iter().map(|c| c.max_relative_deviation).fold(0.0, f64::max);
    let mut lines: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "cost={} n_antennas={} n_meta={} max_relative_deviation={:.3e}",
                c.cost, c.n_antennas, c.n_meta, c.max_relative_deviation
            )
        })
        .collect();
    lines.push(format!("max_relative_deviation={worst:.3e}"));
    if let Some(dir) = out {
        let common = Common {
            out: Some(dir.to_path_buf()),
            ..Default::default()
        };
        let mut run = start("gradcheck", &common, |_| {})?;
        run.write_json("gradcheck.json", &checks)?;
        run.manifest.seed("instance", seed);
        run.finish()?;
    }
    if !(worst <= GRADCHECK_TOLERANCE) {
        return Err(CliError::Check(format!(
            "max relative gradient deviation {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(lines.join("\n"))
}

// ------------------------------------------------------------------ mi-curve

pub struct MiCurveArgs {
    pub zeta_db: Vec<f64>,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub snr_db_step: f64,
    pub out: Option<PathBuf>,
}

pub fn mi_curve_csv(args: &MiCurveArgs) -> Result<String> {
    if args.zeta_db.is_empty() {
        return Err(CliError::Usage("--zeta-db needs at least one value".into()));
    }
    if !(args.snr_db_step > 0.0) || !(args.snr_db_max >= args.snr_db_min) {
        return Err(CliError::Usage("SNR grid needs a positive step and max >= min".into()));
    }
    let n_steps = ((args.snr_db_max - args.snr_db_min) / args.snr_db_step + 1e-9).floor() as usize;
    let mut csv = String::from("snr_db,zeta_db,mi_bits\n");
    for &z in &args.zeta_db {
        for k in 0..=n_steps {
            let snr_db = args.snr_db_min + k as f64 * args.snr_db_step;
            let mi = mi_lower_bound(10f64.powf(snr_db / 10.0), 10f64.powf(z / 10.0))?;
            csv.push_str(&format!("{snr_db},{z},{mi:.12}\n"));
        }
    }
    Ok(csv)
}

pub fn mi_curve(args: &MiCurveArgs) -> Result<String> {
    let csv = mi_curve_csv(args)?;
    match &args.out {
        None => Ok(csv.trim_end().to_string()),
        Some(dir) => {
            let common = Common {
                out: Some(dir.clone()),
                ..Default::default()
            };
            let mut run = start("mi-curve", &common, |_| {})?;
            run.write("mi_curve.csv", &csv)?;
            run.manifest
                .argument(
                    "zeta_db",
                    args.zeta_db.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
                )
                .argument("snr_db_min", args.snr_db_min)
                .argument("snr_db_max", args.snr_db_max)
                .argument("snr_db_step", args.snr_db_step);
            run.finish()?;
            Ok(format!("{} rows -> {}", csv.lines().count() - 1, dir.join("mi_curve.csv").display()))
        }
    }
}
