//! On-disk encodings shared by datasets and checkpoints: complex numbers as
//! `[re, im]`, matrices as lists of rows, configurations as bitstrings.

use imcal_core::dataset::CoefficientMask;
use imcal_core::linalg::{CMat, RMat};
use imcal_core::model::{MetaConfig, PortRoles};
use imcal_core::Complex;
use serde::{Deserialize, Serialize};

pub type Pair = [f64; 2];

pub fn pair(z: Complex) -> Pair {
    [z.re, z.im]
}

pub fn unpair(p: Pair) -> Complex {
    Complex::new(p[0], p[1])
}

pub fn complex_rows(m: &CMat<f64>) -> Vec<Vec<Pair>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| pair(m[(r, c)])).collect()).collect()
}

pub fn real_rows(m: &RMat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn check_rectangular<T>(rows: &[Vec<T>]) -> Result<(usize, usize), String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err("matrix must have at least one row and one column".into());
    }
    if let Some(i) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(format!("matrix row {i} has {} entries, expected {n_cols}", rows[i].len()));
    }
    Ok((n_rows, n_cols))
}

pub fn complex_matrix(rows: &[Vec<Pair>]) -> Result<CMat<f64>, String> {
    let (n, m) = check_rectangular(rows)?;
    Ok(CMat::from_fn(n, m, |r, c| unpair(rows[r][c])))
}

pub fn real_matrix(rows: &[Vec<f64>]) -> Result<RMat<f64>, String> {
    let (n, m) = check_rectangular(rows)?;
    Ok(RMat::from_fn(n, m, |r, c| rows[r][c]))
}

pub fn mask_rows(mask: &CoefficientMask) -> Vec<String> {
    mask.rows()
        .iter()
        .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
        .collect()
}

pub fn parse_mask(rows: &[String]) -> Result<CoefficientMask, String> {
    let bits = rows
        .iter()
        .map(|r| MetaConfig::from_bitstring(r).map(|c| c.bits().to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("mask: {e}"))?;
    CoefficientMask::from_rows(&bits).map_err(|e| format!("mask: {e}"))
}

/// Port roles as stored in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesJson {
    pub n_antennas: usize,
    pub tx: Vec<usize>,
    pub rx: Vec<usize>,
}

impl From<&PortRoles> for RolesJson {
    fn from(r: &PortRoles) -> Self {
        Self {
            n_antennas: r.n_antennas(),
            tx: r.tx_ports().to_vec(),
            rx: r.rx_ports().to_vec(),
        }
    }
}

impl RolesJson {
    pub fn to_roles(&self) -> imcal_core::Result<PortRoles> {
        PortRoles::new(self.n_antennas, self.tx.clone(), self.rx.clone())
    }
}

pub fn all_finite(values: impl IntoIterator<Item = f64>) -> bool {
    values.into_iter().all(f64::is_finite)
}
