//! The compact interaction-matrix model.
//!
//! The primary entities are `N_A` antennas followed by `N_S` binary
//! meta-atoms, `N = N_A + N_S`. The interaction matrix is
//! `W(c) = diag(a(c)) + C` where `a_i` is `alpha_a` on antennas and
//! `alpha_0`/`alpha_1` on meta-atoms depending on the configuration bit, and
//! `C` is a symmetric complex coupling matrix whose diagonal carries the
//! reverberant self-coupling. Predicted scattering is the antenna block of
//! `W^{-1}`, obtained by eliminating the state-1 and state-0 meta-atom
//! blocks in turn.

use std::fmt;

use nalgebra::DMatrix;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PivotStage, Result};
use crate::linalg::{checked_inverse, matmul, select, sub, zeros, CMat};
use crate::scalar::{Cplx, Real};

/// Binary metasurface configuration, one bit per meta-atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaConfig {
    bits: Vec<bool>,
}

impl Serialize for MetaConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bitstring())
    }
}

impl<'de> Deserialize<'de> for MetaConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MetaConfig::from_bitstring(&s).map_err(serde::de::Error::custom)
    }
}

impl MetaConfig {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn ones(n: usize) -> Self {
        Self {
            bits: vec![true; n],
        }
    }

    /// Parse a `"0"`/`"1"` string, index 0 leftmost.
    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "configuration bit must be '0' or '1', got {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = !bits[i];
        Self { bits }
    }

    /// The configuration as a 0/1 feature vector.
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for MetaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

/// Which antennas transmit and which receive. Scattering matrices are laid
/// out with rows indexed by `rx_ports` and columns by `tx_ports`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRoles {
    n_antennas: usize,
    tx_ports: Vec<usize>,
    rx_ports: Vec<usize>,
}

impl PortRoles {
    pub fn new(n_antennas: usize, tx_ports: Vec<usize>, rx_ports: Vec<usize>) -> Result<Self> {
        if tx_ports.is_empty() || rx_ports.is_empty() {
            return Err(Error::InvalidArgument(
                "port roles need at least one transmit and one receive port".into(),
            ));
        }
        if let Some(&p) = tx_ports.iter().chain(&rx_ports).find(|&&p| p >= n_antennas) {
            return Err(Error::InvalidArgument(format!(
                "port {p} out of range for {n_antennas} antennas"
            )));
        }
        Ok(Self {
            n_antennas,
            tx_ports,
            rx_ports,
        })
    }

    /// Every antenna both transmits and receives.
    pub fn full(n_antennas: usize) -> Self {
        let all: Vec<usize> = (0..n_antennas).collect();
        Self {
            n_antennas,
            tx_ports: all.clone(),
            rx_ports: all,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn tx_ports(&self) -> &[usize] {
        &self.tx_ports
    }

    pub fn rx_ports(&self) -> &[usize] {
        &self.rx_ports
    }

    pub fn n_tx(&self) -> usize {
        self.tx_ports.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_ports.len()
    }

    /// Row/column position of the coefficient `S[rx, tx]` in the role
    /// layout, if both ports take part.
    pub fn position(&self, rx: usize, tx: usize) -> Option<(usize, usize)> {
        let r = self.rx_ports.iter().position(|&p| p == rx)?;
        let c = self.tx_ports.iter().position(|&p| p == tx)?;
        Some((r, c))
    }
}

/// Index of `(i, j)` (any order) in a row-major upper triangle with diagonal.
#[inline]
pub fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Learnable parameters of the compact model.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModelParams<T: Real> {
    n_antennas: usize,
    n_meta: usize,
    pub alpha_a: Cplx<T>,
    pub alpha_0: Cplx<T>,
    pub alpha_1: Cplx<T>,
    coupling: Vec<Cplx<T>>,
}

impl<T: Real> CompactModelParams<T> {
    pub fn new(
        n_antennas: usize,
        n_meta: usize,
        alpha_a: Cplx<T>,
        alpha_0: Cplx<T>,
        alpha_1: Cplx<T>,
        coupling: Vec<Cplx<T>>,
    ) -> Result<Self> {
        let n = n_antennas + n_meta;
        let expected = n * (n + 1) / 2;
        if coupling.len() != expected {
            return Err(Error::Dimension(format!(
                "coupling upper triangle has {} entries, expected (N+1)N/2 = {expected}",
                coupling.len()
            )));
        }
        Ok(Self {
            n_antennas,
            n_meta,
            alpha_a,
            alpha_0,
            alpha_1,
            coupling,
        })
    }

    pub fn zeros(n_antennas: usize, n_meta: usize) -> Self {
        let n = n_antennas + n_meta;
        Self {
            n_antennas,
            n_meta,
            alpha_a: Cplx::zero(),
            alpha_0: Cplx::zero(),
            alpha_1: Cplx::zero(),
            coupling: vec![Cplx::zero(); n * (n + 1) / 2],
        }
    }

    /// Build from a dense coupling matrix, reading its upper triangle.
    pub fn from_dense_coupling(
        n_antennas: usize,
        alpha_a: Cplx<T>,
        alpha_0: Cplx<T>,
        alpha_1: Cplx<T>,
        coupling: &CMat<T>,
    ) -> Result<Self> {
        let n = coupling.nrows();
        if coupling.ncols() != n || n < n_antennas {
            return Err(Error::Dimension(format!(
                "coupling matrix {}x{} incompatible with {n_antennas} antennas",
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        let mut tri = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                tri.push(coupling[(i, j)]);
            }
        }
        Self::new(n_antennas, n - n_antennas, alpha_a, alpha_0, alpha_1, tri)
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_meta(&self) -> usize {
        self.n_meta
    }

    pub fn n(&self) -> usize {
        self.n_antennas + self.n_meta
    }

    pub fn coupling_upper(&self) -> &[Cplx<T>] {
        &self.coupling
    }

    pub fn coupling(&self, i: usize, j: usize) -> Cplx<T> {
        self.coupling[tri_index(self.n(), i, j)]
    }

    pub fn set_coupling(&mut self, i: usize, j: usize, value: Cplx<T>) {
        let k = tri_index(self.n(), i, j);
        self.coupling[k] = value;
    }

    /// Number of real learnables, `2 (3 + (N+1) N / 2)`.
    pub fn n_real_params(&self) -> usize {
        n_real_params(self.n())
    }

    /// Flatten into `[Re a_A, Im a_A, Re a_0, Im a_0, Re a_1, Im a_1,
    /// Re C_00, Im C_00, Re C_01, ...]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_real_params());
        for z in [self.alpha_a, self.alpha_0, self.alpha_1]
            .iter()
            .chain(self.coupling.iter())
        {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    pub fn from_vec(n_antennas: usize, n_meta: usize, v: &[T]) -> Result<Self> {
        let n = n_antennas + n_meta;
        if v.len() != n_real_params(n) {
            return Err(Error::Dimension(format!(
                "parameter vector has {} reals, expected {}",
                v.len(),
                n_real_params(n)
            )));
        }
        let z: Vec<Cplx<T>> = v.chunks_exact(2).map(|p| Cplx::new(p[0], p[1])).collect();
        Self::new(n_antennas, n_meta, z[0], z[1], z[2], z[3..].to_vec())
    }

    /// Local term of entity `i` under `config`.
    pub fn local(&self, i: usize, config: &MetaConfig) -> Cplx<T> {
        if i < self.n_antennas {
            self.alpha_a
        } else if config.bit(i - self.n_antennas) {
            self.alpha_1
        } else {
            self.alpha_0
        }
    }
}

pub fn n_real_params(n: usize) -> usize {
    2 * (3 + (n + 1) * n / 2)
}

/// Predicted or measured scattering between the role ports.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix<T: Real> {
    pub entries: CMat<T>,
    pub roles: PortRoles,
    pub frequency: Option<f64>,
}

impl<T: Real> ScatteringMatrix<T> {
    pub fn new(entries: CMat<T>, roles: PortRoles) -> Result<Self> {
        if entries.shape() != (roles.n_rx(), roles.n_tx()) {
            return Err(Error::Dimension(format!(
                "scattering entries {}x{} but roles are {}x{}",
                entries.nrows(),
                entries.ncols(),
                roles.n_rx(),
                roles.n_tx()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "scattering entries must be finite".into(),
            ));
        }
        Ok(Self {
            entries,
            roles,
            frequency: None,
        })
    }

    pub fn with_frequency(mut self, hz: f64) -> Self {
        self.frequency = Some(hz);
        self
    }
}

fn check_config<T: Real>(params: &CompactModelParams<T>, config: &MetaConfig) -> Result<()> {
    if config.len() != params.n_meta() {
        return Err(Error::Dimension(format!(
            "configuration has {} bits, model has {} meta-atoms",
            config.len(),
            params.n_meta()
        )));
    }
    Ok(())
}

/// `W = diag(a(c)) + C`.
pub fn assemble_interaction_matrix<T: Real>(
    params: &CompactModelParams<T>,
    config: &MetaConfig,
) -> Result<CMat<T>> {
    check_config(params, config)?;
    let n = params.n();
    let mut w = zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let c = params.coupling[k];
            k += 1;
            w[(i, j)] = c;
            w[(j, i)] = c;
        }
        w[(i, i)] = w[(i, i)] + params.local(i, config);
    }
    Ok(w)
}

/// Result of the staged elimination of a symmetric interaction matrix.
#[derive(Debug, Clone)]
pub struct StagedInverse<T: Real> {
    /// `[W^{-1}]_{AA}`.
    pub antenna_block: CMat<T>,
    /// `[W^{-1}]_{:,A}` in the original entity order, when requested.
    pub antenna_columns: Option<CMat<T>>,
}

/// Eliminate the state-1 block, then the state-0 block, then invert the
/// remaining antenna Schur complement. `W` must be symmetric for the
/// returned columns to equal `[W^{-1}]_{:,A}`.
pub fn staged_inverse<T: Real>(
    w: &CMat<T>,
    n_antennas: usize,
    config: &MetaConfig,
    want_columns: bool,
) -> Result<StagedInverse<T>> {
    let n = w.nrows();
    if w.ncols() != n || n != n_antennas + config.len() {
        return Err(Error::Dimension(format!(
            "interaction matrix {}x{} does not match {} antennas + {} meta-atoms",
            w.nrows(),
            w.ncols(),
            n_antennas,
            config.len()
        )));
    }
    let antennas: Vec<usize> = (0..n_antennas).collect();
    let mut zero_idx = Vec::new();
    let mut one_idx = Vec::new();
    for (i, &b) in config.bits().iter().enumerate() {
        if b {
            one_idx.push(n_antennas + i);
        } else {
            zero_idx.push(n_antennas + i);
        }
    }
    // remaining block after the first elimination: antennas, then state-0
    let rest: Vec<usize> = antennas.iter().chain(zero_idx.iter()).copied().collect();
    let n_rest = rest.len();
    let k0 = zero_idx.len();

    let w_rest = select(w, &rest, &rest);
    let (reduced, t1) = if one_idx.is_empty() {
        (w_rest, None)
    } else {
        let inv11 = checked_inverse(&select(w, &one_idx, &one_idx), PivotStage::StateOne)?;
        let t1 = matmul(&inv11, &select(w, &one_idx, &rest));
        let correction = matmul(&select(w, &rest, &one_idx), &t1);
        (sub(&w_rest, &correction), Some(t1))
    };

    let a_loc: Vec<usize> = (0..n_antennas).collect();
    let z_loc: Vec<usize> = (n_antennas..n_rest).collect();
    let (schur_a, t0) = if k0 == 0 {
        (select(&reduced, &a_loc, &a_loc), None)
    } else {
        let inv00 = checked_inverse(&select(&reduced, &z_loc, &z_loc), PivotStage::StateZero)?;
        let t0 = matmul(&inv00, &select(&reduced, &z_loc, &a_loc));
        let correction = matmul(&select(&reduced, &a_loc, &z_loc), &t0);
        (sub(&select(&reduced, &a_loc, &a_loc), &correction), Some(t0))
    };

    let s = checked_inverse(&schur_a, PivotStage::Antennas)?;

    let antenna_columns = if want_columns {
        let mut cols = zeros(n, n_antennas);
        // V_{rest, A}
        let mut v_rest = zeros(n_rest, n_antennas);
        for i in 0..n_antennas {
            for j in 0..n_antennas {
                v_rest[(i, j)] = s[(i, j)];
            }
        }
        if let Some(t0) = &t0 {
            let v_za = matmul(t0, &s);
            for r in 0..k0 {
                for j in 0..n_antennas {
                    v_rest[(n_antennas + r, j)] = -v_za[(r, j)];
                }
            }
        }
        for (r, &orig) in rest.iter().enumerate() {
            for j in 0..n_antennas {
                cols[(orig, j)] = v_rest[(r, j)];
            }
        }
        if let Some(t1) = &t1 {
            let v_1a = matmul(t1, &v_rest);
            for (r, &orig) in one_idx.iter().enumerate() {
                for j in 0..n_antennas {
                    cols[(orig, j)] = -v_1a[(r, j)];
                }
            }
        }
        Some(cols)
    } else {
        None
    };

    Ok(StagedInverse {
        antenna_block: s,
        antenna_columns,
    })
}

/// Predicted scattering between the role ports, `[W^{-1}]_{AA}[rx, tx]`.
pub fn scattering_block<T: Real>(
    params: &CompactModelParams<T>,
    config: &MetaConfig,
    roles: &PortRoles,
) -> Result<ScatteringMatrix<T>> {
    if roles.n_antennas() != params.n_antennas() {
        return Err(Error::Dimension(format!(
            "roles cover {} antennas, model has {}",
            roles.n_antennas(),
            params.n_antennas()
        )));
    }
    let w = assemble_interaction_matrix(params, config)?;
    let staged = staged_inverse(&w, params.n_antennas(), config, false)?;
    let entries = select(&staged.antenna_block, roles.rx_ports(), roles.tx_ports());
    ScatteringMatrix::new(entries, roles.clone())
}

/// `Y = H X` for a block of pilot columns.
pub fn apply_pilots<T: Real>(h: &CMat<T>, pilots: &CMat<T>) -> Result<CMat<T>> {
    if h.ncols() != pilots.nrows() {
        return Err(Error::Dimension(format!(
            "channel has {} inputs but pilots have {} rows",
            h.ncols(),
            pilots.nrows()
        )));
    }
    Ok(matmul(h, pilots))
}

/// Anything that predicts the role-port scattering matrix for a
/// configuration: calibrated models, baselines and ground truths.
pub trait ScatteringPredictor<T: Real> {
    fn n_meta(&self) -> usize;
    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>>;
}

impl<T: Real> ScatteringPredictor<T> for (CompactModelParams<T>, PortRoles) {
    fn n_meta(&self) -> usize {
        self.0.n_meta()
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>> {
        scattering_block(&self.0, config, &self.1).map(|s| s.entries)
    }
}

/// Dense copy of `C`, mostly useful in tests and diagnostics.
pub fn dense_coupling<T: Real>(params: &CompactModelParams<T>) -> CMat<T> {
    let n = params.n();
    DMatrix::from_fn(n, n, |i, j| params.coupling(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{checked_inverse, frobenius};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Cplx<f64> {
        Cplx::new(re, im)
    }

    fn toy(coupling: [[f64; 2]; 2]) -> CompactModelParams<f64> {
        let m = DMatrix::from_fn(2, 2, |i, j| c(coupling[i][j], 0.0));
        CompactModelParams::from_dense_coupling(1, c(2.0, 0.0), c(3.0, 0.0), c(5.0, 0.0), &m)
            .unwrap()
    }

    fn random_params(n_a: usize, n_s: usize, rng: &mut ChaCha8Rng) -> CompactModelParams<f64> {
        let n = n_a + n_s;
        let mut p = CompactModelParams::zeros(n_a, n_s);
        p.alpha_a = c(rng.random_range(1.0..3.0), rng.random_range(-1.0..1.0));
        p.alpha_0 = c(rng.random_range(1.0..3.0), rng.random_range(-1.0..1.0));
        p.alpha_1 = c(rng.random_range(-3.0..-1.0), rng.random_range(-1.0..1.0));
        for i in 0..n {
            for j in i..n {
                p.set_coupling(i, j, c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
            }
        }
        p
    }

    fn random_config(n: usize, rng: &mut ChaCha8Rng) -> MetaConfig {
        MetaConfig::new((0..n).map(|_| rng.random_bool(0.5)).collect())
    }

    fn full_inverse_block(p: &CompactModelParams<f64>, cfg: &MetaConfig) -> CMat<f64> {
        let w = assemble_interaction_matrix(p, cfg).unwrap();
        let inv = checked_inverse(&w, PivotStage::Dense).unwrap();
        let a: Vec<usize> = (0..p.n_antennas()).collect();
        select(&inv, &a, &a)
    }

    fn max_rel_dev(a: &CMat<f64>, b: &CMat<f64>) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn tri_index_is_row_major_upper() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(tri_index(n, i, j), k);
                assert_eq!(tri_index(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn assembly_examples() {
        let p = toy([[0.0, 1.0], [1.0, 0.0]]);
        let w0 = assemble_interaction_matrix(&p, &MetaConfig::from_bitstring("0").unwrap()).unwrap();
        assert_eq!(w0, DMatrix::from_row_slice(2, 2, &[c(2., 0.), c(1., 0.), c(1., 0.), c(3., 0.)]));
        let w1 = assemble_interaction_matrix(&p, &MetaConfig::from_bitstring("1").unwrap()).unwrap();
        assert_eq!(w1, DMatrix::from_row_slice(2, 2, &[c(2., 0.), c(1., 0.), c(1., 0.), c(5., 0.)]));
        let p = toy([[0.5, 1.0], [1.0, -0.5]]);
        let w = assemble_interaction_matrix(&p, &MetaConfig::zeros(1)).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[c(2.5, 0.), c(1., 0.), c(1., 0.), c(2.5, 0.)]));
    }

    #[test]
    fn assembly_rejects_wrong_config_length() {
        let p = toy([[0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(
            assemble_interaction_matrix(&p, &MetaConfig::zeros(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn two_by_two_scattering() {
        // W = [[2,1],[1,2]]: alpha_a = 2, alpha_0 = 2, C off-diagonal 1
        let m = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let p = CompactModelParams::from_dense_coupling(1, c(2., 0.), c(2., 0.), c(9., 0.), &m).unwrap();
        let s = scattering_block(&p, &MetaConfig::zeros(1), &PortRoles::full(1)).unwrap();
        assert!((s.entries[(0, 0)] - c(2.0 / 3.0, 0.0)).norm() < 1e-15);

        let m = DMatrix::from_element(2, 2, c(0., 0.));
        let p = CompactModelParams::from_dense_coupling(1, c(2., 0.), c(4., 0.), c(9., 0.), &m).unwrap();
        let s = scattering_block(&p, &MetaConfig::zeros(1), &PortRoles::full(1)).unwrap();
        assert!((s.entries[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn staged_matches_full_inverse_six_by_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(2, 4, &mut rng);
        let cfg = MetaConfig::from_bitstring("0110").unwrap();
        let s = scattering_block(&p, &cfg, &PortRoles::full(2)).unwrap();
        let full = full_inverse_block(&p, &cfg);
        assert!(max_rel_dev(&s.entries, &full) <= 1e-12);
    }

    #[test]
    fn staged_columns_match_full_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = random_params(3, 6, &mut rng);
            let cfg = random_config(6, &mut rng);
            let w = assemble_interaction_matrix(&p, &cfg).unwrap();
            let staged = staged_inverse(&w, 3, &cfg, true).unwrap();
            let inv = checked_inverse(&w, PivotStage::Dense).unwrap();
            let all: Vec<usize> = (0..9).collect();
            let cols = select(&inv, &all, &[0, 1, 2]);
            let got = staged.antenna_columns.unwrap();
            assert!(frobenius(&sub(&got, &cols)) / frobenius(&cols) < 1e-12);
        }
    }

    #[test]
    fn all_zero_and_all_one_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(2, 5, &mut rng);
        for cfg in [MetaConfig::zeros(5), MetaConfig::ones(5)] {
            let s = scattering_block(&p, &cfg, &PortRoles::full(2)).unwrap();
            assert!(max_rel_dev(&s.entries, &full_inverse_block(&p, &cfg)) < 1e-12);
        }
    }

    #[test]
    fn singular_state_block_names_the_stage() {
        // meta-atom in state 1 with zero total diagonal and no coupling
        let m = DMatrix::from_element(2, 2, c(0., 0.));
        let p = CompactModelParams::from_dense_coupling(1, c(1., 0.), c(1., 0.), c(0., 0.), &m).unwrap();
        let err = scattering_block(&p, &MetaConfig::ones(1), &PortRoles::full(1)).unwrap_err();
        assert!(matches!(
            err,
            Error::SingularPivot {
                stage: PivotStage::StateOne,
                ..
            }
        ));
    }

    #[test]
    fn sub_block_follows_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(4, 3, &mut rng);
        let cfg = random_config(3, &mut rng);
        let full = scattering_block(&p, &cfg, &PortRoles::full(4)).unwrap();
        let roles = PortRoles::new(4, vec![0, 1], vec![2, 3]).unwrap();
        let sub_s = scattering_block(&p, &cfg, &roles).unwrap();
        assert_eq!(sub_s.entries[(0, 1)], full.entries[(2, 1)]);
        assert_eq!(sub_s.entries[(1, 0)], full.entries[(3, 0)]);
    }

    #[test]
    fn pilot_examples() {
        let eye = crate::linalg::identity::<f64>(2);
        let x = DMatrix::from_row_slice(2, 1, &[c(1., 0.), c(0., 0.)]);
        assert_eq!(apply_pilots(&eye, &x).unwrap(), x);
        let swap = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let y = apply_pilots(&swap, &x).unwrap();
        assert_eq!(y, DMatrix::from_row_slice(2, 1, &[c(0., 0.), c(1., 0.)]));
        assert!(apply_pilots(&swap, &DMatrix::from_element(3, 1, c(1., 0.))).is_err());
    }

    #[test]
    fn pilots_match_per_column_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = DMatrix::from_fn(2, 2, |_, _| c(rng.random(), rng.random()));
        let x = DMatrix::from_fn(2, 2, |_, _| c(rng.random(), rng.random()));
        let y = apply_pilots(&h, &x).unwrap();
        for p in 0..2 {
            for r in 0..2 {
                let naive = h[(r, 0)] * x[(0, p)] + h[(r, 1)] * x[(1, p)];
                assert!((y[(r, p)] - naive).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn params_vector_round_trip_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n_a, n_s) in [(1, 1), (2, 3), (4, 16), (4, 68)] {
            let p = random_params(n_a, n_s, &mut rng);
            let n = n_a + n_s;
            assert_eq!(p.n_real_params(), 2 * (3 + (n + 1) * n / 2));
            let v = p.to_vec();
            assert_eq!(v.len(), p.n_real_params());
            assert_eq!(CompactModelParams::from_vec(n_a, n_s, &v).unwrap(), p);
        }
    }

    #[test]
    fn params_reject_wrong_coupling_length() {
        let z = Cplx::<f64>::zero();
        assert!(CompactModelParams::new(1, 1, z, z, z, vec![z; 4]).is_err());
    }

    #[test]
    fn f32_model_agrees_with_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_params(2, 4, &mut rng);
        let cfg = random_config(4, &mut rng);
        let v32: Vec<f32> = p.to_vec().iter().map(|&x| x as f32).collect();
        let p32 = CompactModelParams::<f32>::from_vec(2, 4, &v32).unwrap();
        let s64 = scattering_block(&p, &cfg, &PortRoles::full(2)).unwrap();
        let s32 = scattering_block(&p32, &cfg, &PortRoles::full(2)).unwrap();
        for (a, b) in s64.entries.iter().zip(s32.entries.iter()) {
            assert!((a.re - b.re as f64).abs() < 1e-4 && (a.im - b.im as f64).abs() < 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn staged_equals_full_inverse(seed in any::<u64>(), n_a in 1usize..5, n_s in 0usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_params(n_a, n_s, &mut rng);
            let cfg = random_config(n_s, &mut rng);
            let s = scattering_block(&p, &cfg, &PortRoles::full(n_a)).unwrap();
            prop_assert!(max_rel_dev(&s.entries, &full_inverse_block(&p, &cfg)) <= 1e-10);
        }

        #[test]
        fn full_port_scattering_is_reciprocal(seed in any::<u64>(), n_a in 1usize..5, n_s in 0usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_params(n_a, n_s, &mut rng);
            let cfg = random_config(n_s, &mut rng);
            let s = scattering_block(&p, &cfg, &PortRoles::full(n_a)).unwrap().entries;
            prop_assert!(max_rel_dev(&s, &s.transpose()) <= 1e-12);
        }

        #[test]
        fn flipping_a_bit_changes_one_entry(seed in any::<u64>(), n_s in 1usize..10, which in any::<prop::sample::Index>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_params(2, n_s, &mut rng);
            let cfg = random_config(n_s, &mut rng);
            let i = which.index(n_s);
            let w = assemble_interaction_matrix(&p, &cfg).unwrap();
            let w2 = assemble_interaction_matrix(&p, &cfg.flipped(i)).unwrap();
            let diffs: Vec<(usize, usize)> = (0..w.nrows())
                .flat_map(|r| (0..w.ncols()).map(move |c| (r, c)))
                .filter(|&(r, c)| w[(r, c)] != w2[(r, c)])
                .collect();
            prop_assert_eq!(diffs, vec![(2 + i, 2 + i)]);
        }
    }
}
