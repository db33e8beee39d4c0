//! Synthetic ground truth: a coupled-dipole "virtual cavity".
//!
//! Antennas, meta-atoms and lossy environment scatterers are point dipoles
//! coupled by the scalar free-space Green's function `exp(ikr)/r`. The full
//! interaction matrix has `1/alpha` on the diagonal and `-g(r_i, r_j)` off
//! it; measured scattering is its inverse restricted to the antennas. A
//! second mode hides a compact-model instance behind the same measurement
//! interface so that calibration can be checked for exact recovery.

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    CoefficientMask, Dataset, DatasetHeader, Measurement, Provenance, Record, DATASET_VERSION,
};
use crate::error::{Error, PivotStage, Result};
use crate::linalg::{checked_inverse, matmul, select, sub, zeros, CMat, Lu};
use crate::model::{
    scattering_block, CompactModelParams, MetaConfig, PortRoles, ScatteringPredictor,
};
use crate::scalar::{Cplx, Real};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

const PLACEMENT_RETRIES: usize = 100_000;

/// Two-state Lorentzian meta-atom resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaResonance {
    pub f_res_0: f64,
    pub f_res_1: f64,
    pub gamma: f64,
    pub chi: f64,
}

/// Distribution of environment inverse polarizabilities. Each scatterer gets
/// `1/alpha = mean + spread * (n_re + i n_im)` with the imaginary part forced
/// negative so that every scatterer is lossy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvScatterers {
    pub inv_alpha_mean: [f64; 2],
    pub inv_alpha_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavitySpec {
    pub n_antennas: usize,
    pub n_meta: usize,
    pub n_env: usize,
    /// Box extents in metres.
    pub box_size: [f64; 3],
    /// Working frequency in Hz.
    pub frequency: f64,
    pub meta: MetaResonance,
    /// Antenna polarizability `[re, im]`.
    pub antenna_alpha: [f64; 2],
    pub env: EnvScatterers,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for CavitySpec {
    /// Desk-scale cavity: 4 antennas, 16 meta-atoms, 64 scatterers in a
    /// 0.4 m cube at 5.2 GHz.
    fn default() -> Self {
        Self {
            n_antennas: 4,
            n_meta: 16,
            n_env: 64,
            box_size: [0.4, 0.4, 0.4],
            frequency: 5.2e9,
            meta: MetaResonance {
                f_res_0: 5.0e9,
                f_res_1: 5.5e9,
                gamma: 0.25e9,
                chi: 0.002,
            },
            antenna_alpha: [0.03, 0.03],
            env: EnvScatterers {
                inv_alpha_mean: [0.0, -100.0],
                inv_alpha_spread: 6.0,
            },
            min_separation: 0.05,
            seed: 0,
        }
    }
}

impl Default for MetaResonance {
    fn default() -> Self {
        CavitySpec::default().meta
    }
}

impl Default for EnvScatterers {
    fn default() -> Self {
        CavitySpec::default().env
    }
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_separation > 0.0) {
            return Err(Error::InvalidArgument("min_separation must be positive".into()));
        }
        if !(self.meta.gamma > 0.0) {
            return Err(Error::InvalidArgument("resonance linewidth gamma must be positive".into()));
        }
        if self.box_size.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::InvalidArgument("box extents must be positive".into()));
        }
        if !(self.frequency > 0.0) {
            return Err(Error::InvalidArgument("frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn n_entities(&self) -> usize {
        self.n_antennas + self.n_meta + self.n_env
    }
}

/// Scalar Green's function `exp(i k r) / r` between two points.
pub fn greens_coupling<T: Real>(ri: &[T; 3], rj: &[T; 3], k: T) -> Result<Cplx<T>> {
    let r = distance(ri, rj);
    if r.is_zero() {
        return Err(Error::CoincidentPoints);
    }
    let phase = k * r;
    Ok(Cplx::new(phase.cos(), phase.sin()) / r)
}

/// `chi f_res^2 / (f_res^2 - f^2 - i gamma f)`.
pub fn lorentzian_polarizability<T: Real>(f: T, f_res: T, gamma: T, chi: T) -> Result<Cplx<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let num = chi * f_res * f_res;
    let den = Cplx::new(f_res * f_res - f * f, -gamma * f);
    Ok(Cplx::new(num, T::zero()) / den)
}

fn distance<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A realised cavity. Entities are ordered antennas, meta-atoms, scatterers.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityInstance<T: Real> {
    pub spec: CavitySpec,
    pub positions: Vec<[T; 3]>,
    /// Wavenumber `2 pi f / c0`, rad/m.
    pub k: T,
    pub antenna_alpha: Cplx<T>,
    /// Meta-atom polarizability in states 0 and 1.
    pub meta_alpha: [Cplx<T>; 2],
    pub env_inv_alpha: Vec<Cplx<T>>,
}

/// Place all entities by rejection sampling; deterministic in `spec.seed`.
pub fn build_cavity<T: Real>(spec: &CavitySpec) -> Result<CavityInstance<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.n_entities();
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(total);
    while positions.len() < total {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let p = [
                rng.random::<f64>() * spec.box_size[0],
                rng.random::<f64>() * spec.box_size[1],
                rng.random::<f64>() * spec.box_size[2],
            ];
            if positions.iter().all(|q| distance(&p, q) >= spec.min_separation) {
                positions.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement {
                placed: positions.len(),
                requested: total,
            });
        }
    }

    let f = T::lit(spec.frequency);
    let meta_alpha = [
        lorentzian_polarizability(f, T::lit(spec.meta.f_res_0), T::lit(spec.meta.gamma), T::lit(spec.meta.chi))?,
        lorentzian_polarizability(f, T::lit(spec.meta.f_res_1), T::lit(spec.meta.gamma), T::lit(spec.meta.chi))?,
    ];
    let env_inv_alpha = (0..spec.n_env)
        .map(|_| {
            let nr: f64 = StandardNormal.sample(&mut rng);
            let ni: f64 = StandardNormal.sample(&mut rng);
            let re = spec.env.inv_alpha_mean[0] + spec.env.inv_alpha_spread * nr;
            let im = spec.env.inv_alpha_mean[1] + spec.env.inv_alpha_spread * ni;
            Cplx::new(T::lit(re), T::lit(-im.abs()))
        })
        .collect();

    Ok(CavityInstance {
        spec: spec.clone(),
        positions: positions
            .iter()
            .map(|p| [T::lit(p[0]), T::lit(p[1]), T::lit(p[2])])
            .collect(),
        k: T::lit(2.0 * std::f64::consts::PI * spec.frequency / C0),
        antenna_alpha: Cplx::new(T::lit(spec.antenna_alpha[0]), T::lit(spec.antenna_alpha[1])),
        meta_alpha,
        env_inv_alpha,
    })
}

impl<T: Real> CavityInstance<T> {
    pub fn n_antennas(&self) -> usize {
        self.spec.n_antennas
    }

    pub fn n_meta(&self) -> usize {
        self.spec.n_meta
    }

    fn n_total(&self) -> usize {
        self.positions.len()
    }

    fn inv_alpha(&self, i: usize, config: &MetaConfig) -> Cplx<T> {
        let na = self.spec.n_antennas;
        let ns = self.spec.n_meta;
        if i < na {
            self.antenna_alpha.inv()
        } else if i < na + ns {
            self.meta_alpha[config.bit(i - na) as usize].inv()
        } else {
            self.env_inv_alpha[i - na - ns]
        }
    }

    fn coupling_matrix(&self) -> Result<CMat<T>> {
        let n = self.n_total();
        let mut g = zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let gij = greens_coupling(&self.positions[i], &self.positions[j], self.k)?;
                g[(i, j)] = gij;
                g[(j, i)] = gij;
            }
        }
        Ok(g)
    }

    /// Full interaction matrix for a configuration.
    pub fn interaction_matrix(&self, config: &MetaConfig) -> Result<CMat<T>> {
        if config.len() != self.spec.n_meta {
            return Err(Error::Dimension(format!(
                "configuration has {} bits, cavity has {} meta-atoms",
                config.len(),
                self.spec.n_meta
            )));
        }
        let mut m = self.coupling_matrix()?.map(|z| -z);
        for i in 0..self.n_total() {
            m[(i, i)] = self.inv_alpha(i, config);
        }
        Ok(m)
    }

    /// Noise-free `[M^{-1}]_{AA}` over all antennas.
    pub fn scattering(&self, config: &MetaConfig) -> Result<CMat<T>> {
        let m = self.interaction_matrix(config)?;
        let na = self.spec.n_antennas;
        let rhs = DMatrix::from_fn(self.n_total(), na, |i, j| {
            if i == j {
                Cplx::one()
            } else {
                Cplx::zero()
            }
        });
        let cols = Lu::factor(&m, PivotStage::Dense)?.solve(&rhs);
        let a: Vec<usize> = (0..na).collect();
        Ok(select(&cols, &a, &a))
    }

    /// Exact reduction of the cavity onto antennas and meta-atoms: the
    /// environment is eliminated by a Schur complement and folded into the
    /// coupling matrix, which makes the dipole cavity a member of the
    /// compact model class.
    pub fn reduced_compact_params(&self) -> Result<CompactModelParams<T>> {
        let na = self.spec.n_antennas;
        let np = na + self.spec.n_meta;
        let n = self.n_total();
        // config-independent part: zero local terms on primary entities
        let mut m = self.coupling_matrix()?.map(|z| -z);
        for i in np..n {
            m[(i, i)] = self.env_inv_alpha[i - np];
        }
        let p: Vec<usize> = (0..np).collect();
        let e: Vec<usize> = (np..n).collect();
        let reduced = if e.is_empty() {
            select(&m, &p, &p)
        } else {
            let inv_e = checked_inverse(&select(&m, &e, &e), PivotStage::Dense)?;
            let corr = matmul(&select(&m, &p, &e), &matmul(&inv_e, &select(&m, &e, &p)));
            sub(&select(&m, &p, &p), &corr)
        };
        // symmetrise away rounding so the upper triangle is representative
        let sym = DMatrix::from_fn(np, np, |i, j| (reduced[(i, j)] + reduced[(j, i)]) * T::lit(0.5));
        CompactModelParams::from_dense_coupling(
            na,
            self.antenna_alpha.inv(),
            self.meta_alpha[0].inv(),
            self.meta_alpha[1].inv(),
            &sym,
        )
    }
}

/// A compact-model instance whose parameters are not reachable through the
/// measurement interface.
#[derive(Clone)]
pub struct HiddenCompact<T: Real> {
    params: CompactModelParams<T>,
}

impl<T: Real> std::fmt::Debug for HiddenCompact<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HiddenCompact")
            .field("n_antennas", &self.params.n_antennas())
            .field("n_meta", &self.params.n_meta())
            .finish_non_exhaustive()
    }
}

impl<T: Real> HiddenCompact<T> {
    pub fn new(params: CompactModelParams<T>) -> Self {
        Self { params }
    }

    /// Random compact instance drawn around a physically plausible operating
    /// point: distinct state-0/state-1 local terms of order one and weaker
    /// complex couplings of scale `coupling_scale`.
    pub fn random(n_antennas: usize, n_meta: usize, coupling_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let c = |re: f64, im: f64| Cplx::new(T::lit(re), T::lit(im));
        let alpha_a = c(1.0 + 0.1 * normal(), -0.3 + 0.1 * normal());
        let alpha_0 = c(1.0 + 0.1 * normal(), -0.2 + 0.1 * normal());
        let alpha_1 = c(-1.0 + 0.1 * normal(), -0.2 + 0.1 * normal());
        let n = n_antennas + n_meta;
        let coupling = (0..n * (n + 1) / 2)
            .map(|_| c(coupling_scale * normal(), coupling_scale * normal()))
            .collect();
        Self {
            params: CompactModelParams::new(n_antennas, n_meta, alpha_a, alpha_0, alpha_1, coupling)
                .expect("coupling length matches by construction"),
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.params.n_antennas()
    }

    pub fn n_meta(&self) -> usize {
        self.params.n_meta()
    }

    fn scattering(&self, config: &MetaConfig) -> Result<CMat<T>> {
        scattering_block(&self.params, config, &PortRoles::full(self.params.n_antennas()))
            .map(|s| s.entries)
    }
}

/// Where measurements come from.
#[derive(Debug, Clone)]
pub enum GroundTruth<T: Real> {
    DipoleCavity(CavityInstance<T>),
    HiddenCompact(HiddenCompact<T>),
}

impl<T: Real> GroundTruth<T> {
    pub fn n_antennas(&self) -> usize {
        match self {
            GroundTruth::DipoleCavity(c) => c.n_antennas(),
            GroundTruth::HiddenCompact(h) => h.n_antennas(),
        }
    }

    pub fn n_meta(&self) -> usize {
        match self {
            GroundTruth::DipoleCavity(c) => c.n_meta(),
            GroundTruth::HiddenCompact(h) => h.n_meta(),
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self {
            GroundTruth::DipoleCavity(c) => Some(c.spec.frequency),
            GroundTruth::HiddenCompact(_) => None,
        }
    }

    /// Noise-free full antenna scattering matrix.
    pub fn scattering(&self, config: &MetaConfig) -> Result<CMat<T>> {
        if config.len() != self.n_meta() {
            return Err(Error::Dimension(format!(
                "configuration has {} bits, ground truth has {} meta-atoms",
                config.len(),
                self.n_meta()
            )));
        }
        match self {
            GroundTruth::DipoleCavity(c) => c.scattering(config),
            GroundTruth::HiddenCompact(h) => h.scattering(config),
        }
    }

    /// Measure the full antenna scattering matrix, optionally with complex
    /// white noise at `snr_db` relative to the mean entry power.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        config: &MetaConfig,
        noise_snr_db: Option<f64>,
        rng: &mut R,
    ) -> Result<CMat<T>> {
        let s = self.scattering(config)?;
        Ok(match noise_snr_db {
            None => s,
            Some(snr_db) => add_noise(&s, snr_db, rng),
        })
    }
}

impl<T: Real> ScatteringPredictor<T> for GroundTruth<T> {
    fn n_meta(&self) -> usize {
        GroundTruth::n_meta(self)
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>> {
        self.scattering(config)
    }
}

/// Ground truth restricted to a set of port roles.
pub struct RoleView<'a, T: Real> {
    pub truth: &'a GroundTruth<T>,
    pub roles: PortRoles,
}

impl<T: Real> ScatteringPredictor<T> for RoleView<'_, T> {
    fn n_meta(&self) -> usize {
        self.truth.n_meta()
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>> {
        let s = self.truth.scattering(config)?;
        Ok(select(&s, self.roles.rx_ports(), self.roles.tx_ports()))
    }
}

fn add_noise<T: Real, R: Rng + ?Sized>(s: &CMat<T>, snr_db: f64, rng: &mut R) -> CMat<T> {
    let power = s.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>() / s.len().max(1) as f64;
    let var = power / 10f64.powf(snr_db / 10.0);
    let sd = (var / 2.0).sqrt();
    s.map(|z| {
        let nr: f64 = StandardNormal.sample(rng);
        let ni: f64 = StandardNormal.sample(rng);
        z + Cplx::new(T::lit(sd * nr), T::lit(sd * ni))
    })
}

/// Independent RNG stream for item `index` of a seeded collection, so that
/// item `i` is the same whatever order or subset is generated.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform random configuration, each bit Bernoulli(1/2).
pub fn random_config<R: Rng + ?Sized>(n_meta: usize, rng: &mut R) -> MetaConfig {
    MetaConfig::new((0..n_meta).map(|_| rng.random_bool(0.5)).collect())
}

/// `n` configurations from stream-indexed RNGs, index `i` from stream `i`.
pub fn random_configs(n_meta: usize, n: usize, seed: u64) -> Vec<MetaConfig> {
    (0..n)
        .map(|i| random_config(n_meta, &mut stream_rng(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct DatasetOptions<T: Real> {
    /// Store `|H X|` for these pilots instead of complex `H`. An identity
    /// pilot matrix stores `|H|`.
    pub phaseless_pilots: Option<CMat<T>>,
    pub mask: Option<CoefficientMask>,
    pub noise_snr_db: Option<f64>,
    pub spec_hash: Option<String>,
}

/// Draw `n_data` random configurations and measure each. Record `i` depends
/// only on `(seed, i)`, so smaller datasets are prefixes of larger ones.
pub fn generate_dataset<T: Real>(
    truth: &GroundTruth<T>,
    roles: &PortRoles,
    n_data: usize,
    seed: u64,
    opts: &DatasetOptions<T>,
) -> Result<Dataset<T>> {
    if n_data == 0 {
        return Err(Error::InvalidArgument("n_data must be at least 1".into()));
    }
    if roles.n_antennas() != truth.n_antennas() {
        return Err(Error::Dimension(format!(
            "roles cover {} antennas, ground truth has {}",
            roles.n_antennas(),
            truth.n_antennas()
        )));
    }
    if let Some(mask) = &opts.mask {
        if mask.shape() != (roles.n_rx(), roles.n_tx()) {
            return Err(Error::Dimension("mask shape disagrees with roles".into()));
        }
    }
    if let Some(x) = &opts.phaseless_pilots {
        if x.nrows() != roles.n_tx() {
            return Err(Error::Dimension("pilot rows disagree with transmit ports".into()));
        }
    }
    let records = (0..n_data)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let config = random_config(truth.n_meta(), &mut rng);
            let full = truth.measure(&config, opts.noise_snr_db, &mut rng)?;
            let h = select(&full, roles.rx_ports(), roles.tx_ports());
            let measurement = match &opts.phaseless_pilots {
                Some(x) => Measurement::Intensity(matmul(&h, x).map(|z| z.norm())),
                None => Measurement::Complex(h),
            };
            Ok(Record {
                config,
                measurement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            version: DATASET_VERSION,
            n_antennas: truth.n_antennas(),
            n_meta: truth.n_meta(),
            roles: roles.clone(),
            frequency: truth.frequency(),
            phaseless: opts.phaseless_pilots.is_some(),
            pilots: opts.phaseless_pilots.clone(),
            mask: opts.mask.clone(),
            provenance: opts.spec_hash.as_ref().map(|h| Provenance {
                spec_hash: h.clone(),
                seed,
            }),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use std::f64::consts::PI;

    fn small_spec() -> CavitySpec {
        CavitySpec {
            n_antennas: 2,
            n_meta: 4,
            n_env: 10,
            ..CavitySpec::default()
        }
    }

    #[test]
    fn greens_examples() {
        let lambda = 0.05;
        let k = 2.0 * PI / lambda;
        let g = greens_coupling(&[0.0, 0.0, 0.0], &[lambda, 0.0, 0.0], k).unwrap();
        assert!((g - Cplx::new(1.0 / lambda, 0.0)).norm() < 1e-9);
        let r = 0.3;
        let g = greens_coupling(&[0.0, 0.0, 0.0], &[0.0, r, 0.0], PI / r).unwrap();
        assert!((g - Cplx::new(-1.0 / r, 0.0)).norm() < 1e-12);
        let g1: Cplx<f64> = greens_coupling(&[0.0; 3], &[0.0, 0.0, 0.1], 7.0).unwrap();
        let g2 = greens_coupling(&[0.0; 3], &[0.0, 0.0, 0.2], 7.0).unwrap();
        assert!((g2.norm() - g1.norm() / 2.0).abs() < 1e-12);
        assert!(matches!(
            greens_coupling(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1.0),
            Err(Error::CoincidentPoints)
        ));
    }

    #[test]
    fn lorentzian_examples() {
        let (fr, g, chi) = (5e9, 2e8, 0.3);
        let on = lorentzian_polarizability(fr, fr, g, chi).unwrap();
        assert!((on - Cplx::new(0.0, chi * fr / g)).norm() < 1e-9);
        let stat = lorentzian_polarizability(0.0, fr, g, chi).unwrap();
        assert!((stat - Cplx::new(chi, 0.0)).norm() < 1e-15);
        let high = lorentzian_polarizability(1e15, fr, g, chi).unwrap();
        assert!(high.norm() < 1e-9);
        assert!(lorentzian_polarizability(1.0, fr, 0.0, chi).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_cavity::<f64>(&CavitySpec::default()).unwrap();
        let b = build_cavity::<f64>(&CavitySpec::default()).unwrap();
        assert_eq!(a, b);
        let min = (0..a.positions.len())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| distance(&a.positions[i], &a.positions[j]))
            .fold(f64::INFINITY, f64::min);
        assert!(min >= a.spec.min_separation);
    }

    #[test]
    fn empty_environment() {
        let spec = CavitySpec {
            n_env: 0,
            ..small_spec()
        };
        let c = build_cavity::<f64>(&spec).unwrap();
        assert_eq!(c.positions.len(), 6);
        assert!(c.env_inv_alpha.is_empty());
        c.scattering(&MetaConfig::zeros(4)).unwrap();
    }

    #[test]
    fn infeasible_placement_is_reported() {
        let spec = CavitySpec {
            box_size: [0.01, 0.01, 0.01],
            min_separation: 1.0,
            ..small_spec()
        };
        match build_cavity::<f64>(&spec) {
            Err(Error::Placement { placed, requested }) => {
                assert_eq!(placed, 1);
                assert_eq!(requested, 16);
            }
            other => panic!("expected placement error, got {other:?}"),
        }
    }

    #[test]
    fn hidden_compact_matches_scattering_block() {
        let hidden = HiddenCompact::<f64>::random(3, 5, 0.3, 4);
        let params = hidden.params.clone();
        let truth = GroundTruth::HiddenCompact(hidden);
        let cfg = MetaConfig::from_bitstring("10110").unwrap();
        let mut rng = stream_rng(0, 0);
        let measured = truth.measure(&cfg, None, &mut rng).unwrap();
        let direct = scattering_block(&params, &cfg, &PortRoles::full(3)).unwrap();
        assert_eq!(measured, direct.entries);
    }

    #[test]
    fn dipole_flip_changes_measurement() {
        let truth = GroundTruth::DipoleCavity(build_cavity::<f64>(&small_spec()).unwrap());
        let cfg = MetaConfig::from_bitstring("0101").unwrap();
        let a = truth.scattering(&cfg).unwrap();
        let b = truth.scattering(&cfg.flipped(2)).unwrap();
        assert!(frobenius(&sub(&a, &b)) > 0.0);
    }

    #[test]
    fn dipole_is_reciprocal() {
        let truth = GroundTruth::DipoleCavity(build_cavity::<f64>(&CavitySpec::default()).unwrap());
        for cfg in random_configs(16, 5, 3) {
            let s = truth.scattering(&cfg).unwrap();
            let rel = frobenius(&sub(&s, &s.transpose())) / frobenius(&s);
            assert!(rel <= 1e-10, "{rel}");
        }
    }

    #[test]
    fn reduction_reproduces_dipole_scattering() {
        let cavity = build_cavity::<f64>(&CavitySpec::default()).unwrap();
        let params = cavity.reduced_compact_params().unwrap();
        let roles = PortRoles::full(4);
        for cfg in random_configs(16, 5, 8) {
            let s_full = cavity.scattering(&cfg).unwrap();
            let s_red = scattering_block(&params, &cfg, &roles).unwrap().entries;
            let rel = frobenius(&sub(&s_full, &s_red)) / frobenius(&s_full);
            assert!(rel < 1e-9, "{rel}");
        }
    }

    #[test]
    fn near_infinite_snr_matches_clean() {
        let truth = GroundTruth::DipoleCavity(build_cavity::<f64>(&small_spec()).unwrap());
        let cfg = MetaConfig::from_bitstring("1100").unwrap();
        let clean = truth.measure(&cfg, None, &mut stream_rng(1, 0)).unwrap();
        let noisy = truth.measure(&cfg, Some(200.0), &mut stream_rng(1, 0)).unwrap();
        let scale = clean.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let worst = clean
            .iter()
            .zip(noisy.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8 * scale);
        let noisy20 = truth.measure(&cfg, Some(20.0), &mut stream_rng(1, 0)).unwrap();
        assert!(frobenius(&sub(&clean, &noisy20)) > 1e-6 * scale);
    }

    #[test]
    fn dataset_shapes_and_prefixes() {
        let truth = GroundTruth::HiddenCompact(HiddenCompact::<f64>::random(4, 6, 0.3, 1));
        let roles = PortRoles::full(4);
        let ds = generate_dataset(&truth, &roles, 3, 9, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_ne!(ds.records[0].config, ds.records[1].config);
        ds.validate().unwrap();
        let bigger = generate_dataset(&truth, &roles, 10, 9, &DatasetOptions::default()).unwrap();
        assert_eq!(bigger.records[..3], ds.records[..]);
        assert!(generate_dataset(&truth, &roles, 0, 9, &DatasetOptions::default()).is_err());
    }

    #[test]
    fn phaseless_dataset_has_no_phase() {
        let truth = GroundTruth::HiddenCompact(HiddenCompact::<f64>::random(4, 6, 0.3, 1));
        let roles = PortRoles::full(4);
        let opts = DatasetOptions {
            phaseless_pilots: Some(crate::linalg::identity(4)),
            ..DatasetOptions::default()
        };
        let ds = generate_dataset(&truth, &roles, 2, 9, &opts).unwrap();
        assert!(ds.is_phaseless());
        for r in &ds.records {
            assert!(r.measurement.complex().is_err());
            let s = truth.scattering(&r.config).unwrap();
            let m = r.measurement.magnitudes();
            for (a, b) in m.iter().zip(s.iter()) {
                assert!((a - b.norm()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn masked_dataset_flags_excluded_block() {
        let truth = GroundTruth::HiddenCompact(HiddenCompact::<f64>::random(4, 6, 0.3, 1));
        let roles = PortRoles::full(4);
        let mask = CoefficientMask::excluding_block(&roles, &[2, 3], &[2, 3]);
        let opts = DatasetOptions {
            mask: Some(mask),
            ..DatasetOptions::default()
        };
        let ds = generate_dataset(&truth, &roles, 4, 2, &opts).unwrap();
        let mask = ds.header.mask.as_ref().unwrap();
        assert_eq!(mask.excluded(), vec![(2, 2), (3, 2), (2, 3), (3, 3)]);
        assert_eq!(mask.n_included(), 12);
    }
}
