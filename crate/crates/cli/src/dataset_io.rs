//! JSON Lines datasets: the header object on line 1, then one record per
//! line. Doubles are written in shortest round-trip form, so loading a saved
//! dataset reproduces every value exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use imcal_core::dataset::{Dataset, DatasetHeader, Measurement, Provenance, Record, DATASET_VERSION};
use imcal_core::model::MetaConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{
    all_finite, complex_matrix, complex_rows, mask_rows, parse_mask, real_matrix, real_rows, Pair, RolesJson,
};

pub const DATASET_FORMAT: &str = "imcal-dataset";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceJson {
    spec_hash: String,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderJson {
    format: String,
    version: u32,
    n_antennas: usize,
    n_meta: usize,
    roles: RolesJson,
    frequency: Option<f64>,
    phaseless: bool,
    pilots: Option<Vec<Vec<Pair>>>,
    mask: Option<Vec<String>>,
    provenance: Option<ProvenanceJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<Vec<Vec<Pair>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    magnitude: Option<Vec<Vec<f64>>>,
}

fn header_json(h: &DatasetHeader<f64>) -> HeaderJson {
    HeaderJson {
        format: DATASET_FORMAT.into(),
        version: h.version,
        n_antennas: h.n_antennas,
        n_meta: h.n_meta,
        roles: (&h.roles).into(),
        frequency: h.frequency,
        phaseless: h.phaseless,
        pilots: h.pilots.as_ref().map(complex_rows),
        mask: h.mask.as_ref().map(mask_rows),
        provenance: h.provenance.as_ref().map(|p| ProvenanceJson {
            spec_hash: p.spec_hash.clone(),
            seed: p.seed,
        }),
    }
}

/// The encoded file contents.
pub fn encode_dataset(data: &Dataset<f64>) -> Result<String> {
    data.validate()?;
    let mut out = serde_json::to_string(&header_json(&data.header)).map_err(|e| CliError::Config(e.to_string()))?;
    out.push('\n');
    for (i, r) in data.records.iter().enumerate() {
        let rec = match &r.measurement {
            Measurement::Complex(m) => {
                if !all_finite(m.iter().flat_map(|z| [z.re, z.im])) {
                    return Err(CliError::Incompatible(format!("record {i} holds non-finite values")));
                }
                RecordJson {
                    config: r.config.to_bitstring(),
                    s: Some(complex_rows(m)),
                    magnitude: None,
                }
            }
            Measurement::Intensity(m) => {
                if !all_finite(m.iter().copied()) {
                    return Err(CliError::Incompatible(format!("record {i} holds non-finite values")));
                }
                RecordJson {
                    config: r.config.to_bitstring(),
                    s: None,
                    magnitude: Some(real_rows(m)),
                }
            }
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| CliError::Config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, data: &Dataset<f64>) -> Result<()> {
    let text = encode_dataset(data)?;
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn parse_header(path: &Path, line: &str) -> Result<DatasetHeader<f64>> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| CliError::parse(path, 1, e.to_string()))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(DATASET_FORMAT) {
        return Err(CliError::parse(path, 1, format!("not an {DATASET_FORMAT} header")));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(DATASET_VERSION) => {}
        Some(found) => {
            return Err(CliError::Version {
                path: path.to_path_buf(),
                found,
                supported: DATASET_VERSION,
            })
        }
        None => return Err(CliError::parse(path, 1, "header lacks a version")),
    }
    let h: HeaderJson = serde_json::from_value(value).map_err(|e| CliError::parse(path, 1, e.to_string()))?;
    let bad = |m: String| CliError::parse(path, 1, m);
    let roles = h.roles.to_roles().map_err(|e| bad(e.to_string()))?;
    if roles.n_antennas() != h.n_antennas {
        return Err(bad("roles disagree with n_antennas".into()));
    }
    Ok(DatasetHeader {
        version: h.version,
        n_antennas: h.n_antennas,
        n_meta: h.n_meta,
        roles,
        frequency: h.frequency,
        phaseless: h.phaseless,
        pilots: h.pilots.as_deref().map(complex_matrix).transpose().map_err(bad)?,
        mask: h.mask.as_deref().map(parse_mask).transpose().map_err(bad)?,
        provenance: h.provenance.map(|p| Provenance {
            spec_hash: p.spec_hash,
            seed: p.seed,
        }),
    })
}

fn parse_record(path: &Path, line_no: usize, line: &str, h: &DatasetHeader<f64>) -> Result<Record<f64>> {
    let bad = |m: String| CliError::parse(path, line_no, m);
    let r: RecordJson = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let config = MetaConfig::from_bitstring(&r.config).map_err(|e| bad(e.to_string()))?;
    if config.len() != h.n_meta {
        return Err(bad(format!("configuration has {} bits, header says {}", config.len(), h.n_meta)));
    }
    let measurement = match (r.s, r.magnitude, h.phaseless) {
        (Some(s), None, false) => Measurement::Complex(complex_matrix(&s).map_err(bad)?),
        (None, Some(m), true) => Measurement::Intensity(real_matrix(&m).map_err(bad)?),
        (_, _, true) => return Err(bad("phaseless records carry exactly one `magnitude` field".into())),
        (_, _, false) => return Err(bad("complex records carry exactly one `s` field".into())),
    };
    let expected = match (&h.pilots, h.phaseless) {
        (Some(x), true) => (h.roles.n_rx(), x.ncols()),
        _ => (h.roles.n_rx(), h.roles.n_tx()),
    };
    if measurement.shape() != expected {
        return Err(bad(format!("measurement is {:?}, expected {:?}", measurement.shape(), expected)));
    }
    Ok(Record { config, measurement })
}

pub fn decode_dataset(path: &Path, text: &str) -> Result<Dataset<f64>> {
    let mut lines = text.split('\n').enumerate().peekable();
    let header = match lines.next() {
        Some((_, l)) if !l.trim().is_empty() => parse_header(path, l)?,
        _ => return Err(CliError::parse(path, 1, "empty file, expected a header line")),
    };
    let mut records = Vec::new();
    while let Some((i, line)) = lines.next() {
        // the newline after the last record leaves one empty piece
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        records.push(parse_record(path, i + 1, line, &header)?);
    }
    let data = Dataset { header, records };
    data.validate()?;
    Ok(data)
}

pub fn load_dataset(path: &Path) -> Result<Dataset<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    decode_dataset(path, &text)
}
