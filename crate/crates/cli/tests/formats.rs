use std::fs;

use imcal_cli::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, Checkpoint, TrainedModel, TrainingInfo};
use imcal_cli::config::{ExperimentConfig, HiddenSpec, TruthConfig};
use imcal_cli::dataset_io::{decode_dataset, encode_dataset, load_dataset, save_dataset};
use imcal_cli::CliError;
use imcal_core::baselines::{fit_linear, fit_mlp, MlpArch, MlpOptions};
use imcal_core::calib::{calibrate, CostKind, PilotSet, TrainOptions};
use imcal_core::cavity::{generate_dataset, DatasetOptions, GroundTruth, HiddenCompact};
use imcal_core::dataset::{CoefficientMask, Dataset};
use imcal_core::model::{MetaConfig, PortRoles};

fn truth() -> GroundTruth<f64> {
    GroundTruth::HiddenCompact(HiddenCompact::random(3, 6, 0.1, 4))
}

fn complex_data(n: usize) -> Dataset<f64> {
    let roles = PortRoles::full(3);
    generate_dataset(&truth(), &roles, n, 9, &DatasetOptions::default()).unwrap()
}

fn path() -> std::path::PathBuf {
    "data.jsonl".into()
}

#[test]
fn complex_dataset_round_trips_exactly() {
    let data = complex_data(20);
    let text = encode_dataset(&data).unwrap();
    let back = decode_dataset(&path(), &text).unwrap();
    assert_eq!(back.len(), data.len());
    for (a, b) in data.records.iter().zip(&back.records) {
        assert_eq!(a.config, b.config);
        assert_eq!(a.measurement.complex().unwrap(), b.measurement.complex().unwrap());
    }
    assert_eq!(encode_dataset(&back).unwrap(), text);
}

#[test]
fn phaseless_and_masked_datasets_round_trip() {
    let roles = PortRoles::full(3);
    let pilots = PilotSet::<f64>::random(3, 5).matrix;
    let opts = DatasetOptions {
        phaseless_pilots: Some(pilots.clone()),
        ..Default::default()
    };
    let data = generate_dataset(&truth(), &roles, 10, 2, &opts).unwrap();
    let back = decode_dataset(&path(), &encode_dataset(&data).unwrap()).unwrap();
    assert!(back.is_phaseless());
    assert_eq!(back.header.pilots.as_ref().unwrap(), &pilots);
    for (a, b) in data.records.iter().zip(&back.records) {
        assert_eq!(a.measurement.magnitudes(), b.measurement.magnitudes());
    }

    let mask = CoefficientMask::excluding_block(&roles, &[1, 2], &[1, 2]);
    let opts = DatasetOptions {
        mask: Some(mask.clone()),
        ..Default::default()
    };
    let data = generate_dataset(&truth(), &roles, 5, 2, &opts).unwrap();
    let back = decode_dataset(&path(), &encode_dataset(&data).unwrap()).unwrap();
    assert_eq!(back.header.mask.as_ref().unwrap(), &mask);
}

#[test]
fn file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.jsonl");
    let data = complex_data(4);
    save_dataset(&p, &data).unwrap();
    let back = load_dataset(&p).unwrap();
    assert_eq!(back.len(), 4);
}

#[test]
fn truncated_last_line_reports_its_line_number() {
    let text = encode_dataset(&complex_data(5)).unwrap();
    let cut = &text[..text.len() - 20];
    match decode_dataset(&path(), cut) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected a parse error, got {:?}", other.map(|d| d.len())),
    }
    let err = decode_dataset(&path(), cut).unwrap_err();
    assert!(err.line().starts_with("error[parse]: data.jsonl:6:"), "{}", err.line());
}

#[test]
fn unsupported_dataset_version_is_named() {
    let text = encode_dataset(&complex_data(2)).unwrap().replacen("\"version\":1", "\"version\":7", 1);
    let err = decode_dataset(&path(), &text).unwrap_err();
    assert!(matches!(err, CliError::Version { found: 7, .. }), "{err}");
    assert!(err.line().contains("version 7"));
}

#[test]
fn wrong_measurement_kind_is_rejected() {
    let text = encode_dataset(&complex_data(2)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = r#"{"config":"000000","magnitude":[[1.0,1.0,1.0],[1.0,1.0,1.0],[1.0,1.0,1.0]]}"#.into();
    let err = decode_dataset(&path(), &lines.join("\n")).unwrap_err();
    assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
}

fn physical_checkpoint() -> Checkpoint {
    let data = complex_data(60);
    let opts = TrainOptions {
        max_iterations: 50,
        ..Default::default()
    };
    let m = calibrate(&data, data.roles(), &CostKind::Coherent, &opts).unwrap();
    Checkpoint {
        model: TrainedModel::Physical(m),
        training: TrainingInfo {
            dataset_sha256: "00".into(),
            cost: "coherent".into(),
            mask: None,
            configs: data.configs().map(MetaConfig::to_bitstring).collect(),
        },
    }
}

#[test]
fn checkpoints_round_trip_and_predict_identically() {
    let data = complex_data(60);
    let info = || TrainingInfo {
        dataset_sha256: "00".into(),
        cost: "coherent".into(),
        mask: None,
        configs: vec![],
    };
    let mlp_opts = MlpOptions {
        arch: MlpArch {
            layers: 2,
            width: Some(8),
        },
        max_epochs: 3,
        ..Default::default()
    };
    let models = vec![
        physical_checkpoint(),
        Checkpoint {
            model: TrainedModel::Linear(fit_linear(&data, data.roles()).unwrap()),
            training: info(),
        },
        Checkpoint {
            model: TrainedModel::Mlp(fit_mlp(&data, data.roles(), &mlp_opts).unwrap()),
            training: info(),
        },
    ];
    let probes = imcal_core::cavity::random_configs(6, 10, 8);
    for ck in models {
        let text = encode_checkpoint(&ck).unwrap();
        let back = decode_checkpoint(&path(), &text).unwrap();
        assert_eq!(back.model.kind(), ck.model.kind());
        assert_eq!(back.training, ck.training);
        for probe in &probes {
            assert_eq!(
                back.model.predictor().predict(probe).unwrap(),
                ck.model.predictor().predict(probe).unwrap()
            );
        }
        assert_eq!(encode_checkpoint(&back).unwrap(), text);
    }
}

#[test]
fn wrong_coupling_length_is_explained() {
    let text = encode_checkpoint(&physical_checkpoint()).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["model"]["coupling"].as_array_mut().unwrap().pop();
    let err = decode_checkpoint(&path(), &v.to_string()).err().unwrap();
    let line = err.line();
    assert!(line.contains("coupling list has 44 entries, expected (N+1)N/2 = 45 for N = 9"), "{line}");
}

#[test]
fn unknown_model_kind_is_explained() {
    let text = encode_checkpoint(&physical_checkpoint()).unwrap();
    let text = text.replacen("\"kind\": \"physical\"", "\"kind\": \"transformer\"", 1);
    let err = decode_checkpoint(&path(), &text).err().unwrap();
    assert!(err.line().contains("unknown model kind 'transformer'"), "{}", err.line());
}

#[test]
fn checkpoint_version_mismatch_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let text = encode_checkpoint(&physical_checkpoint()).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
    fs::write(&p, text).unwrap();
    let err = load_checkpoint(&p).err().unwrap();
    assert!(matches!(err, CliError::Version { found: 2, .. }));
}

#[test]
fn config_selects_the_hidden_truth() {
    let c = ExperimentConfig::parse("[truth]\nkind = \"hidden-compact\"\nseed = 5\n").unwrap();
    assert_eq!(
        c.truth,
        TruthConfig::HiddenCompact(HiddenSpec {
            seed: 5,
            ..Default::default()
        })
    );
    assert!(ExperimentConfig::parse("[truth]\nkind = \"hidden-compact\"\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::parse("[truth]\nkind = \"nonsense\"\n").is_err());
}

