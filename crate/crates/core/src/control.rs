//! Wavefront shaping and configuration selection with a scattering model:
//! phase-conjugate focusing, minimum-reflection wavefronts, and QPSK
//! backscatter constellations.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{adjoint, hermitian_eigen, matmul, CMat};
use crate::model::{MetaConfig, ScatteringPredictor};
use crate::scalar::{Cplx, Real};

/// Unit-norm complex input amplitudes over the transmit ports.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefront<T: Real> {
    amplitudes: Vec<Cplx<T>>,
}

impl<T: Real> Wavefront<T> {
    /// Normalise `amplitudes` to unit 2-norm.
    pub fn new(amplitudes: Vec<Cplx<T>>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidArgument("wavefront must be finite and non-zero".into()));
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|z| z / norm).collect(),
        })
    }

    /// Equal real amplitudes on every port.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![Cplx::new(T::one(), T::zero()); n])
    }

    pub fn amplitudes(&self) -> &[Cplx<T>] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Energy `|t^T psi|^2` arriving at the port whose transmission row is `t`.
pub fn deposited_energy<T: Real>(t: &[Cplx<T>], psi: &Wavefront<T>) -> Result<T> {
    if t.len() != psi.len() {
        return Err(Error::Dimension(format!(
            "transmission has {} inputs, wavefront {}",
            t.len(),
            psi.len()
        )));
    }
    Ok(t.iter()
        .zip(psi.amplitudes())
        .fold(Cplx::zero(), |a: Cplx<T>, (x, y)| a + x * y)
        .norm_sqr())
}

/// Reflected power `||S psi||^2`.
pub fn reflected_power<T: Real>(s: &CMat<T>, psi: &Wavefront<T>) -> Result<T> {
    if s.ncols() != psi.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} inputs, wavefront {}",
            s.ncols(),
            psi.len()
        )));
    }
    Ok((0..s.nrows())
        .map(|r| {
            (0..s.ncols())
                .fold(Cplx::zero(), |a: Cplx<T>, c| a + s[(r, c)] * psi.amplitudes()[c])
                .norm_sqr()
        })
        .fold(T::zero(), |a, b| a + b))
}

/// Phase conjugation `conj(t) / ||t||`, the focusing optimum.
pub fn focus_wavefront<T: Real>(t: &[Cplx<T>]) -> Result<Wavefront<T>> {
    if t.iter().all(|z| z.is_zero()) {
        return Err(Error::InvalidArgument("transmission vector is zero".into()));
    }
    Wavefront::new(t.iter().map(|z| z.conj()).collect())
}

/// Eigenvector of `S^H S` with the smallest eigenvalue, and that eigenvalue
/// (the reflected power it achieves).
pub fn absorb_wavefront<T: Real>(s: &CMat<T>) -> Result<(Wavefront<T>, T)> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "absorption needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let gram = matmul(&adjoint(s), s);
    let (values, vectors) = hermitian_eigen(&gram)?;
    let v: Vec<Cplx<T>> = (0..s.ncols()).map(|r| vectors[(r, 0)]).collect();
    Ok((Wavefront::new(v)?, values[0].max(T::zero())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ControlObjective {
    /// Maximise energy focused onto output row `row` of the predictions,
    /// using every predicted column as an input.
    Focus { row: usize },
    /// Minimise the smallest achievable reflected power.
    Absorb,
}

/// Score of one predicted matrix: deposited energy for focusing, smallest
/// reflected power for absorption.
pub fn objective_value<T: Real>(s: &CMat<T>, objective: ControlObjective) -> Result<T> {
    match objective {
        ControlObjective::Focus { row } => {
            if row >= s.nrows() {
                return Err(Error::Dimension(format!("no output row {row}")));
            }
            Ok((0..s.ncols()).map(|c| s[(row, c)].norm_sqr()).fold(T::zero(), |a, b| a + b))
        }
        ControlObjective::Absorb => Ok(absorb_wavefront(s)?.1),
    }
}

/// Index, configuration and predicted value of the best pool entry; ties go
/// to the lowest index.
pub fn select_best_config<T: Real>(
    model: &dyn ScatteringPredictor<T>,
    pool: &[MetaConfig],
    objective: ControlObjective,
) -> Result<(usize, MetaConfig, T)> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("configuration pool is empty".into()));
    }
    let mut best: Option<(usize, T)> = None;
    for (i, c) in pool.iter().enumerate() {
        let v = objective_value(&model.predict(c)?, objective)?;
        let better = match (best, objective) {
            (None, _) => true,
            (Some((_, b)), ControlObjective::Focus { .. }) => v > b,
            (Some((_, b)), ControlObjective::Absorb) => v < b,
        };
        if better {
            best = Some((i, v));
        }
    }
    let (i, v) = best.expect("pool is non-empty");
    Ok((i, pool[i].clone(), v))
}

/// Gray-coded symbol labels in counter-clockwise order.
pub const QPSK_LABELS: [&str; 4] = ["00", "01", "11", "10"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub tx: usize,
    pub rx: usize,
    /// Symbols in [`QPSK_LABELS`] order.
    pub configs: Vec<MetaConfig>,
    pub pool_indices: Vec<usize>,
    /// Centred values `S_ji(c) - <S_ji>` of the four configurations.
    pub points: Vec<Cplx<f64>>,
    pub mean: Cplx<f64>,
    pub amplitude: f64,
    /// Phase of the `00` symbol.
    pub theta: f64,
    pub evm: f64,
}

/// Least-squares fit of `rho e^{i(theta + k pi/2)}` to four points:
/// returns `(rho, theta, evm)` with `evm^2 = 4 - |s|^2 / A`.
pub fn fit_qpsk(points: &[Cplx<f64>; 4]) -> (f64, f64, f64) {
    let quarter = [
        Cplx::new(1.0, 0.0),
        Cplx::new(0.0, -1.0),
        Cplx::new(-1.0, 0.0),
        Cplx::new(0.0, 1.0),
    ];
    let s: Cplx<f64> = points.iter().zip(quarter).map(|(z, q)| z * q).sum();
    let a: f64 = points.iter().map(|z| z.norm_sqr()).sum();
    if a == 0.0 || s.norm() == 0.0 {
        return (0.0, 0.0, 2.0);
    }
    // the residual is summed directly; 4 - |s|^2 / A cancels catastrophically
    // for near-perfect constellations
    let fit = s / 4.0;
    let residual: f64 = points.iter().zip(quarter).map(|(z, q)| (z - fit * q.conj()).norm_sqr()).sum();
    (a / s.norm(), s.arg(), 2.0 * (residual / a).sqrt())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const RADIUS_STEPS: usize = 16;
const PHASE_STEPS: usize = 64;

/// For four targets, match each to a distinct pool point, taking the
/// globally closest (target, point) pairs first.
fn match_targets(z: &[Cplx<f64>], targets: &[Cplx<f64>; 4]) -> [usize; 4] {
    let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(16);
    for (k, t) in targets.iter().enumerate() {
        let mut near: [(f64, usize); 4] = [(f64::INFINITY, usize::MAX); 4];
        for (i, p) in z.iter().enumerate() {
            let d = (p - t).norm_sqr();
            if d < near[3].0 {
                near[3] = (d, i);
                let mut j = 3;
                while j > 0 && near[j].0 < near[j - 1].0 {
                    near.swap(j, j - 1);
                    j -= 1;
                }
            }
        }
        cands.extend(near.iter().map(|&(d, i)| (d, k, i)));
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    let mut chosen = [usize::MAX; 4];
    for (_, k, i) in cands {
        if chosen[k] == usize::MAX && !chosen.contains(&i) {
            chosen[k] = i;
        }
    }
    chosen
}

/// Pick four pool configurations whose centred predictions of `S[rx, tx]`
/// (indices into the predicted matrix) best form a QPSK constellation.
pub fn qpsk_select<T: Real>(
    model: &dyn ScatteringPredictor<T>,
    pool: &[MetaConfig],
    tx: usize,
    rx: usize,
) -> Result<Constellation> {
    if pool.len() < 4 {
        return Err(Error::InvalidArgument("QPSK needs a pool of at least four configurations".into()));
    }
    let mut values = Vec::with_capacity(pool.len());
    for c in pool {
        let s = model.predict(c)?;
        if rx >= s.nrows() || tx >= s.ncols() {
            return Err(Error::Dimension(format!("no coefficient ({rx}, {tx}) in the prediction")));
        }
        let v = s[(rx, tx)];
        values.push(Cplx::new(v.re.as_f64(), v.im.as_f64()));
    }
    qpsk_from_values(&values, pool, tx, rx)
}

/// QPSK selection on precomputed coefficient values (one per pool entry).
pub fn qpsk_from_values(
    values: &[Cplx<f64>],
    pool: &[MetaConfig],
    tx: usize,
    rx: usize,
) -> Result<Constellation> {
    if values.len() != pool.len() || pool.len() < 4 {
        return Err(Error::InvalidArgument("QPSK needs at least four pool values".into()));
    }
    let mean = values.iter().sum::<Cplx<f64>>() / values.len() as f64;
    let z: Vec<Cplx<f64>> = values.iter().map(|v| v - mean).collect();
    let mut radii: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    radii.sort_by(f64::total_cmp);

    let mut best: Option<(f64, [usize; 4])> = None;
    for r in 0..RADIUS_STEPS {
        let q = 0.5 + 0.45 * r as f64 / (RADIUS_STEPS - 1) as f64;
        let rho = percentile(&radii, q);
        if rho <= 0.0 {
            continue;
        }
        for p in 0..PHASE_STEPS {
            let phase = std::f64::consts::FRAC_PI_2 * p as f64 / PHASE_STEPS as f64;
            let t0 = Cplx::from_polar(rho, phase);
            let i = Cplx::new(0.0, 1.0);
            let targets = [t0, t0 * i, -t0, -(t0 * i)];
            let chosen = match_targets(&z, &targets);
            let pts = chosen.map(|k| z[k]);
            let (_, _, evm) = fit_qpsk(&pts);
            if best.is_none_or(|(e, _)| evm < e) {
                best = Some((evm, chosen));
            }
        }
    }
    let (_, chosen) = best.ok_or_else(|| {
        Error::InvalidArgument("all centred values vanish; no constellation exists".into())
    })?;
    // the lowest pool index carries the 00 label
    let start = (0..4).min_by_key(|&k| chosen[k]).expect("four symbols");
    let order: [usize; 4] = std::array::from_fn(|k| chosen[(start + k) % 4]);
    let points = order.map(|k| z[k]);
    let (amplitude, theta, evm) = fit_qpsk(&points);
    Ok(Constellation {
        tx,
        rx,
        configs: order.iter().map(|&k| pool[k].clone()).collect(),
        pool_indices: order.to_vec(),
        points: points.to_vec(),
        mean,
        amplitude,
        theta,
        evm,
    })
}

/// The constellation's configurations replayed on other (e.g. true) values
/// of the same coefficient over the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub points: Vec<Cplx<f64>>,
    pub amplitude: f64,
    pub theta: f64,
    pub evm: f64,
    /// Deviation of each symbol's phase from `theta + k pi/2`, degrees.
    pub phase_errors_deg: Vec<f64>,
}

pub fn replay_constellation(constellation: &Constellation, values: &[Cplx<f64>]) -> Result<Replay> {
    if values.is_empty() || constellation.pool_indices.iter().any(|&k| k >= values.len()) {
        return Err(Error::Dimension("replay values do not cover the pool".into()));
    }
    let mean = values.iter().sum::<Cplx<f64>>() / values.len() as f64;
    let points: [Cplx<f64>; 4] = std::array::from_fn(|k| values[constellation.pool_indices[k]] - mean);
    let (amplitude, theta, evm) = fit_qpsk(&points);
    let phase_errors_deg = points
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let target = Cplx::from_polar(1.0, theta + std::f64::consts::FRAC_PI_2 * k as f64);
            (z * target.conj()).arg().to_degrees()
        })
        .collect();
    Ok(Replay {
        points: points.to_vec(),
        amplitude,
        theta,
        evm,
        phase_errors_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::random_configs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    type C = Cplx<f64>;

    fn randn(rng: &mut ChaCha8Rng) -> C {
        C::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    }

    #[test]
    fn focus_examples() {
        let one = C::new(1.0, 0.0);
        let zero = C::new(0.0, 0.0);
        let i = C::new(0.0, 1.0);
        let psi = focus_wavefront(&[one, zero, zero]).unwrap();
        assert_eq!(psi.amplitudes(), &[one, zero, zero]);
        assert!((deposited_energy(&[one, zero, zero], &psi).unwrap() - 1.0).abs() < 1e-15);
        let t = [one, i];
        let psi = focus_wavefront(&t).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.amplitudes()[0] - C::new(h, 0.0)).norm() < 1e-15);
        assert!((psi.amplitudes()[1] - C::new(0.0, -h)).norm() < 1e-15);
        assert!((deposited_energy(&t, &psi).unwrap() - 2.0).abs() < 1e-12);
        let t = [one, -one, zero];
        let uni = Wavefront::uniform(3).unwrap();
        assert!(deposited_energy(&t, &uni).unwrap() < 1e-30);
        let opt = focus_wavefront(&t).unwrap();
        assert!((deposited_energy(&t, &opt).unwrap() - 2.0).abs() < 1e-12);
        assert!(focus_wavefront(&[zero, zero]).is_err());
    }

    #[test]
    fn absorb_examples() {
        let s = CMat::from_row_slice(2, 2, &[C::new(0.1, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.9, 0.0)]);
        let (psi, r) = absorb_wavefront(&s).unwrap();
        assert!((r - 0.01).abs() < 1e-12);
        assert!((psi.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        assert!(psi.amplitudes()[1].norm() < 1e-12);
        // a unitary matrix reflects everything whatever the input
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = CMat::from_row_slice(2, 2, &[C::new(h, 0.0), C::new(0.0, h), C::new(0.0, h), C::new(h, 0.0)]);
        let (psi, r) = absorb_wavefront(&u).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!((reflected_power(&u, &psi).unwrap() - 1.0).abs() < 1e-12);
        let rect = CMat::<f64>::zeros(2, 3);
        assert!(absorb_wavefront(&rect).is_err());
    }

    #[test]
    fn absorb_beats_random_wavefronts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = CMat::from_fn(4, 4, |_, _| randn(&mut rng) * 0.4);
        let (psi, r) = absorb_wavefront(&s).unwrap();
        assert!((reflected_power(&s, &psi).unwrap() - r).abs() < 1e-10);
        for _ in 0..1000 {
            let w = Wavefront::new((0..4).map(|_| randn(&mut rng)).collect()).unwrap();
            assert!(r <= reflected_power(&s, &w).unwrap() + 1e-12);
        }
    }

    struct Table(Vec<CMat<f64>>, Vec<MetaConfig>);

    impl ScatteringPredictor<f64> for Table {
        fn n_meta(&self) -> usize {
            self.1[0].len()
        }
        fn predict(&self, config: &MetaConfig) -> Result<CMat<f64>> {
            let i = self.1.iter().position(|c| c == config).expect("config in table");
            Ok(self.0[i].clone())
        }
    }

    #[test]
    fn selection_picks_the_extreme_with_lowest_index_on_ties() {
        let pool = random_configs(10, 5, 1);
        let mats: Vec<CMat<f64>> = [1.0, 3.0, 3.0, 0.5, 2.0]
            .iter()
            .map(|&a| CMat::from_element(1, 2, C::new(a, 0.0)))
            .collect();
        let table = Table(mats, pool.clone());
        let (i, c, v) = select_best_config(&table, &pool, ControlObjective::Focus { row: 0 }).unwrap();
        assert_eq!((i, &c), (1, &pool[1]));
        assert!((v - 18.0).abs() < 1e-12);
        let (i, _, _) = select_best_config(&table, &pool[..1], ControlObjective::Focus { row: 0 }).unwrap();
        assert_eq!(i, 0);
        assert!(select_best_config(&table, &[], ControlObjective::Absorb).is_err());
    }

    #[test]
    fn planted_constellation_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = 0.7;
        // zero-sum clutter and planted points, then a common offset, so the
        // centred values are exactly the planted ones
        let mut values: Vec<C> = (0..400).map(|_| randn(&mut rng) * 0.3).collect();
        let slots = [17, 123, 250, 391];
        for (k, &s) in slots.iter().enumerate() {
            values[s] = C::from_polar(rho, 0.4 + std::f64::consts::FRAC_PI_2 * k as f64);
        }
        let clutter_mean = values
            .iter()
            .enumerate()
            .filter(|(i, _)| !slots.contains(i))
            .map(|(_, v)| v)
            .sum::<C>()
            / (values.len() - 4) as f64;
        let offset = C::new(0.2, -0.1);
        for (i, v) in values.iter_mut().enumerate() {
            if !slots.contains(&i) {
                *v -= clutter_mean;
            }
            *v += offset;
        }
        let pool = random_configs(12, values.len(), 2);
        let c = qpsk_from_values(&values, &pool, 0, 1).unwrap();
        let mut got = c.pool_indices.clone();
        got.sort_unstable();
        assert_eq!(got, slots.to_vec());
        assert!(c.evm <= 1e-10, "evm {}", c.evm);
        assert!((c.amplitude - rho).abs() < 1e-9);
        for (k, z) in c.points.iter().enumerate() {
            let expect = c.theta + std::f64::consts::FRAC_PI_2 * k as f64;
            let d = (z * C::from_polar(1.0, -expect)).arg();
            assert!(d.abs() <= 1e-9);
        }
        assert_eq!(c.pool_indices[0], 17);
    }

    #[test]
    fn qpsk_needs_four_configurations() {
        let pool = random_configs(4, 3, 0);
        assert!(qpsk_from_values(&[C::new(1.0, 0.0); 3], &pool, 0, 0).is_err());
    }

    #[test]
    fn negated_pool_gives_the_same_constellation_rotated_by_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(4..200);
            let values: Vec<C> = (0..n).map(|_| randn(&mut rng)).collect();
            let neg: Vec<C> = values.iter().map(|v| -v).collect();
            let pool = random_configs(6, n, 3);
            let a = qpsk_from_values(&values, &pool, 0, 0).unwrap();
            let b = qpsk_from_values(&neg, &pool, 0, 0).unwrap();
            assert_eq!(a.pool_indices, b.pool_indices);
            let d = (C::from_polar(1.0, b.theta - a.theta - std::f64::consts::PI)).arg();
            assert!(d.abs() < 1e-9);
            assert!((a.evm - b.evm).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn phase_conjugation_is_optimal(seed in 0u64..500, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<C> = (0..n).map(|_| randn(&mut rng)).collect();
            let best = t.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let opt = focus_wavefront(&t).unwrap();
            proptest::prop_assert!((deposited_energy(&t, &opt).unwrap() - best).abs() <= 1e-10 * best.max(1.0));
            let w = Wavefront::new((0..n).map(|_| randn(&mut rng)).collect()).unwrap();
            proptest::prop_assert!(deposited_energy(&t, &w).unwrap() <= best + 1e-12);
        }

        #[test]
        fn smallest_eigenvalue_is_attained(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = CMat::from_fn(4, 4, |_, _| randn(&mut rng));
            let (psi, r) = absorb_wavefront(&s).unwrap();
            proptest::prop_assert!((reflected_power(&s, &psi).unwrap() - r).abs() <= 1e-10);
        }
    }
}
