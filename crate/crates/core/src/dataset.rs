//! Calibration datasets: (configuration, measurement) records plus the
//! header describing ports, pilots and which coefficients were observed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{select, CMat, RMat};
use crate::model::{MetaConfig, PortRoles};
use crate::scalar::Real;

pub const DATASET_VERSION: u32 = 1;

/// Boolean `N_R x N_T` matrix; `true` marks a coefficient that is included
/// in the calibration data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientMask {
    included: DMatrix<bool>,
}

impl CoefficientMask {
    pub fn all(n_rx: usize, n_tx: usize) -> Self {
        Self {
            included: DMatrix::from_element(n_rx, n_tx, true),
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_rx = rows.len();
        let n_tx = rows.first().map_or(0, Vec::len);
        if n_rx == 0 || n_tx == 0 || rows.iter().any(|r| r.len() != n_tx) {
            return Err(Error::Dimension("mask rows must be non-empty and equal length".into()));
        }
        Ok(Self {
            included: DMatrix::from_fn(n_rx, n_tx, |i, j| rows[i][j]),
        })
    }

    /// Exclude every coefficient `S[rx, tx]` with `rx` in `rx_ports` and
    /// `tx` in `tx_ports` (physical port numbers).
    pub fn excluding_block(roles: &PortRoles, rx_ports: &[usize], tx_ports: &[usize]) -> Self {
        let included = DMatrix::from_fn(roles.n_rx(), roles.n_tx(), |i, j| {
            !(rx_ports.contains(&roles.rx_ports()[i]) && tx_ports.contains(&roles.tx_ports()[j]))
        });
        Self { included }
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        (0..self.included.nrows())
            .map(|i| (0..self.included.ncols()).map(|j| self.included[(i, j)]).collect())
            .collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.included.shape()
    }

    pub fn is_included(&self, r: usize, c: usize) -> bool {
        self.included[(r, c)]
    }

    pub fn n_included(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn excluded(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.included.ncols() {
            for r in 0..self.included.nrows() {
                if !self.included[(r, c)] {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn as_matrix(&self) -> &DMatrix<bool> {
        &self.included
    }
}

/// One measurement. Phaseless records hold `|H X|` for the dataset pilots
/// (with canonical pilots this is `|H|` itself) and no phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement<T: Real> {
    Complex(CMat<T>),
    Intensity(RMat<T>),
}

impl<T: Real> Measurement<T> {
    pub fn is_phaseless(&self) -> bool {
        matches!(self, Measurement::Intensity(_))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Measurement::Complex(m) => m.shape(),
            Measurement::Intensity(m) => m.shape(),
        }
    }

    /// Complex entries; unavailable for phaseless records.
    pub fn complex(&self) -> Result<&CMat<T>> {
        match self {
            Measurement::Complex(m) => Ok(m),
            Measurement::Intensity(_) => Err(Error::Phaseless(
                "record holds magnitudes only, no phase".into(),
            )),
        }
    }

    pub fn magnitudes(&self) -> RMat<T> {
        match self {
            Measurement::Complex(m) => m.map(|z| z.norm()),
            Measurement::Intensity(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record<T: Real> {
    pub config: MetaConfig,
    pub measurement: Measurement<T>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub spec_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader<T: Real> {
    pub version: u32,
    pub n_antennas: usize,
    pub n_meta: usize,
    pub roles: PortRoles,
    pub frequency: Option<f64>,
    pub phaseless: bool,
    /// Pilot matrix `X` (`N_T x N_P`) behind phaseless intensities.
    pub pilots: Option<CMat<T>>,
    pub mask: Option<CoefficientMask>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub header: DatasetHeader<T>,
    pub records: Vec<Record<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn roles(&self) -> &PortRoles {
        &self.header.roles
    }

    pub fn is_phaseless(&self) -> bool {
        self.header.phaseless
    }

    pub fn configs(&self) -> impl Iterator<Item = &MetaConfig> {
        self.records.iter().map(|r| &r.config)
    }

    /// First `n` records, sharing the header.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            header: self.header.clone(),
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            header: self.header.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Records restricted to the sub-block of ports named by `roles`
    /// (physical port numbers, drawn from the dataset's own roles).
    pub fn restrict(&self, roles: &PortRoles) -> Result<Self> {
        if roles == &self.header.roles {
            return Ok(self.clone());
        }
        if self.header.phaseless {
            return Err(Error::Phaseless(
                "phaseless records cannot be restricted to a sub-block of ports".into(),
            ));
        }
        let own = &self.header.roles;
        if roles.n_antennas() != own.n_antennas() {
            return Err(Error::Dimension("roles and dataset disagree on antenna count".into()));
        }
        let locate = |want: &[usize], have: &[usize], what: &str| {
            want.iter()
                .map(|p| have.iter().position(|q| q == p))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::InvalidArgument(format!("{what} port not present in the dataset")))
        };
        let rows = locate(roles.rx_ports(), own.rx_ports(), "receive")?;
        let cols = locate(roles.tx_ports(), own.tx_ports(), "transmit")?;
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(Record {
                    config: r.config.clone(),
                    measurement: Measurement::Complex(select(r.measurement.complex()?, &rows, &cols)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = match &self.header.mask {
            Some(m) => Some(CoefficientMask {
                included: DMatrix::from_fn(rows.len(), cols.len(), |i, j| m.is_included(rows[i], cols[j])),
            }),
            None => None,
        };
        Ok(Self {
            header: DatasetHeader {
                roles: roles.clone(),
                mask,
                ..self.header.clone()
            },
            records,
        })
    }

    /// Check every record against the header invariants.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.roles.n_antennas() != h.n_antennas {
            return Err(Error::Dimension("roles disagree with antenna count".into()));
        }
        if let Some(mask) = &h.mask {
            if mask.shape() != (h.roles.n_rx(), h.roles.n_tx()) {
                return Err(Error::Dimension("mask shape disagrees with roles".into()));
            }
        }
        let expected = match (&h.pilots, h.phaseless) {
            (Some(x), true) => {
                if x.nrows() != h.roles.n_tx() {
                    return Err(Error::Dimension("pilot rows disagree with transmit ports".into()));
                }
                (h.roles.n_rx(), x.ncols())
            }
            (None, true) => (h.roles.n_rx(), h.roles.n_tx()),
            _ => (h.roles.n_rx(), h.roles.n_tx()),
        };
        for (i, r) in self.records.iter().enumerate() {
            if r.config.len() != h.n_meta {
                return Err(Error::Dimension(format!(
                    "record {i}: configuration has {} bits, header says {}",
                    r.config.len(),
                    h.n_meta
                )));
            }
            if r.measurement.is_phaseless() != h.phaseless {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: phaseless flag disagrees with header"
                )));
            }
            if r.measurement.shape() != expected {
                return Err(Error::Dimension(format!(
                    "record {i}: measurement {:?}, expected {:?}",
                    r.measurement.shape(),
                    expected
                )));
            }
        }
        Ok(())
    }
}
