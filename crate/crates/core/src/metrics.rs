//! Prediction accuracy (ζ), the mutual-information bound, and offset
//! correction of unseen coefficients.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dataset::CoefficientMask;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{MetaConfig, PortRoles, ScatteringPredictor};
use crate::scalar::{Cplx, Real};

/// Reported ceiling for ζ, reached when the residual variance underflows.
pub const ZETA_CAP_DB: f64 = 120.0;

fn mean(x: &[Cplx<f64>]) -> Cplx<f64> {
    x.iter().fold(Cplx::zero(), |a, b| a + b) / x.len() as f64
}

/// Complex variance `mean |x - mean(x)|^2`.
pub fn complex_variance(x: &[Cplx<f64>]) -> f64 {
    let m = mean(x);
    x.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / x.len() as f64
}

fn to_db(ratio: f64) -> f64 {
    if !ratio.is_finite() || ratio <= 0.0 {
        return if ratio <= 0.0 { -ZETA_CAP_DB } else { ZETA_CAP_DB };
    }
    (10.0 * ratio.log10()).clamp(-ZETA_CAP_DB, ZETA_CAP_DB)
}

fn check_lengths(truth: &[Cplx<f64>], pred: &[Cplx<f64>]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("ζ needs at least two samples".into()));
    }
    Ok(())
}

/// `Var(y) / Var(y - e^{iθ} ŷ)` in dB for a given alignment phase.
pub fn zeta_with_phase(truth: &[Cplx<f64>], pred: &[Cplx<f64>], theta: f64) -> Result<f64> {
    check_lengths(truth, pred)?;
    let rot = Cplx::from_polar(1.0, theta);
    let resid: Vec<_> = truth.iter().zip(pred).map(|(y, p)| y - rot * p).collect();
    let num = complex_variance(truth);
    let den = complex_variance(&resid);
    if den <= num * 10f64.powf(-ZETA_CAP_DB / 10.0) {
        return Ok(ZETA_CAP_DB);
    }
    Ok(to_db(num / den))
}

fn centred_inner(truth: &[Cplx<f64>], pred: &[Cplx<f64>]) -> Cplx<f64> {
    let (my, mp) = (mean(truth), mean(pred));
    truth
        .iter()
        .zip(pred)
        .fold(Cplx::zero(), |a, (y, p)| a + (p - mp).conj() * (y - my))
}

fn phase_of(s: Cplx<f64>) -> f64 {
    if s.is_zero() {
        0.0
    } else {
        s.arg()
    }
}

/// Phase minimising the residual variance: `arg` of the inner product of
/// the centred series. Centring keeps ζ blind to constant offsets.
fn alignment_phase(truth: &[Cplx<f64>], pred: &[Cplx<f64>]) -> f64 {
    phase_of(centred_inner(truth, pred))
}

/// ζ in dB after aligning the predictions by one global phase.
pub fn zeta(truth: &[Cplx<f64>], pred: &[Cplx<f64>]) -> Result<f64> {
    check_lengths(truth, pred)?;
    zeta_with_phase(truth, pred, alignment_phase(truth, pred))
}

/// How predictions are phase-aligned before ζ is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// One phase per coefficient.
    PerCoefficient,
    /// One phase shared by every coefficient, so relative phases count.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientZeta {
    /// Physical receive and transmit ports.
    pub rx: usize,
    pub tx: usize,
    pub zeta_db: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaReport {
    pub coefficients: Vec<CoefficientZeta>,
    /// Mean ζ (dB) over transmission coefficients, or over every
    /// coefficient when only reflections are present.
    pub zeta_siso_db: f64,
    pub n_eval: usize,
    pub alignment: Alignment,
}

impl ZetaReport {
    pub fn get(&self, rx: usize, tx: usize) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|c| c.rx == rx && c.tx == tx)
            .map(|c| c.zeta_db)
    }

    pub fn min_db(&self) -> f64 {
        self.coefficients.iter().map(|c| c.zeta_db).fold(f64::INFINITY, f64::min)
    }

    /// Mean ζ (dB) over the listed coefficients.
    pub fn mean_over(&self, coeffs: &[(usize, usize)]) -> Option<f64> {
        let vals: Vec<f64> = coeffs.iter().filter_map(|&(r, t)| self.get(r, t)).collect();
        if vals.is_empty() || vals.len() != coeffs.len() {
            return None;
        }
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `coefficient,zeta_db,n_eval` rows; coefficients as `S<rx>_<tx>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coefficient,zeta_db,n_eval\n");
        for c in &self.coefficients {
            out.push_str(&format!("S{}_{},{:.6},{}\n", c.rx, c.tx, c.zeta_db, self.n_eval));
        }
        out
    }
}

/// Per-coefficient series over the evaluation configurations, in
/// column-major coefficient order.
fn series<T: Real>(
    predictor: &dyn ScatteringPredictor<T>,
    configs: &[MetaConfig],
    shape: (usize, usize),
) -> Result<Vec<Vec<Cplx<f64>>>> {
    let mut out = vec![Vec::with_capacity(configs.len()); shape.0 * shape.1];
    for c in configs {
        let m = predictor.predict(c)?;
        if m.shape() != shape {
            return Err(Error::Dimension(format!(
                "prediction shape {:?}, expected {:?}",
                m.shape(),
                shape
            )));
        }
        for (k, z) in m.iter().enumerate() {
            out[k].push(Cplx::new(z.re.as_f64(), z.im.as_f64()));
        }
    }
    Ok(out)
}

/// ζ of every coefficient of `model` against `truth` over `configs`. Both
/// predictors must lay their output out by `roles`.
pub fn zeta_report<T: Real>(
    truth: &dyn ScatteringPredictor<T>,
    model: &dyn ScatteringPredictor<T>,
    configs: &[MetaConfig],
    roles: &PortRoles,
    alignment: Alignment,
) -> Result<ZetaReport> {
    let shape = (roles.n_rx(), roles.n_tx());
    let ys = series(truth, configs, shape)?;
    let ps = series(model, configs, shape)?;
    let joint_theta = match alignment {
        Alignment::Joint => Some(phase_of(
            ys.iter()
                .zip(&ps)
                .fold(Cplx::zero(), |a, (y, p)| a + centred_inner(y, p)),
        )),
        Alignment::PerCoefficient => None,
    };
    let mut coefficients = Vec::with_capacity(ys.len());
    for (k, (y, p)) in ys.iter().zip(&ps).enumerate() {
        let theta = joint_theta.unwrap_or_else(|| alignment_phase(y, p));
        let (r, c) = (k % shape.0, k / shape.0);
        coefficients.push(CoefficientZeta {
            rx: roles.rx_ports()[r],
            tx: roles.tx_ports()[c],
            zeta_db: zeta_with_phase(y, p, theta)?,
            theta,
        });
    }
    let transmission: Vec<f64> = coefficients
        .iter()
        .filter(|c| c.rx != c.tx)
        .map(|c| c.zeta_db)
        .collect();
    let pool: Vec<f64> = if transmission.is_empty() {
        coefficients.iter().map(|c| c.zeta_db).collect()
    } else {
        transmission
    };
    Ok(ZetaReport {
        zeta_siso_db: pool.iter().sum::<f64>() / pool.len() as f64,
        coefficients,
        n_eval: configs.len(),
        alignment,
    })
}

/// `log2(1 + 1 / (1/SNR + 1/ζ))` in bits; infinite arguments drop their
/// term.
pub fn mi_lower_bound(snr_linear: f64, zeta_linear: f64) -> Result<f64> {
    if !(snr_linear > 0.0) || !(zeta_linear > 0.0) {
        return Err(Error::InvalidArgument(
            "SNR and ζ must be positive".into(),
        ));
    }
    let inv = 1.0 / snr_linear + 1.0 / zeta_linear;
    Ok((1.0 + 1.0 / inv).log2())
}

/// A predictor whose masked-out coefficients are shifted by constant
/// offsets fixed from one reference measurement.
pub struct OffsetCorrected<'a, T: Real> {
    pub inner: &'a dyn ScatteringPredictor<T>,
    pub offset: CMat<T>,
}

/// Offsets `measured - predicted` at `reference` on the coefficients the
/// mask excludes (zero elsewhere).
pub fn offset_correct<'a, T: Real>(
    model: &'a dyn ScatteringPredictor<T>,
    reference: &MetaConfig,
    measured: &CMat<T>,
    mask: &CoefficientMask,
) -> Result<OffsetCorrected<'a, T>> {
    let pred = model.predict(reference)?;
    if measured.shape() != pred.shape() || mask.shape() != pred.shape() {
        return Err(Error::Dimension(format!(
            "reference {:?}, prediction {:?}, mask {:?} must agree",
            measured.shape(),
            pred.shape(),
            mask.shape()
        )));
    }
    let mut offset = CMat::from_element(pred.nrows(), pred.ncols(), Cplx::zero());
    for (r, c) in mask.excluded() {
        let m = measured[(r, c)];
        if !(m.re.is_finite() && m.im.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "reference measurement lacks masked coefficient ({r}, {c})"
            )));
        }
        offset[(r, c)] = m - pred[(r, c)];
    }
    Ok(OffsetCorrected {
        inner: model,
        offset,
    })
}

impl<T: Real> ScatteringPredictor<T> for OffsetCorrected<'_, T> {
    fn n_meta(&self) -> usize {
        self.inner.n_meta()
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<T>> {
        let mut p = self.inner.predict(config)?;
        for (z, d) in p.iter_mut().zip(self.offset.iter()) {
            if !d.is_zero() {
                *z += *d;
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(n: usize, seed: u64) -> Vec<Cplx<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Cplx::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn zeta_examples() {
        let y = randn(500, 1);
        assert_eq!(zeta(&y, &y).unwrap(), ZETA_CAP_DB);
        let m = mean(&y);
        assert!(zeta(&y, &vec![m; y.len()]).unwrap().abs() < 1e-9);
        let y = randn(10_000, 2);
        let noise = randn(10_000, 3);
        let scale = (complex_variance(&y) / 10.0 / complex_variance(&noise)).sqrt();
        let p: Vec<_> = y.iter().zip(&noise).map(|(a, n)| a + n * scale).collect();
        let z = zeta(&y, &p).unwrap();
        assert!((z - 10.0).abs() <= 0.5, "{z}");
        assert!(zeta(&y[..1], &p[..1]).is_err());
    }

    #[test]
    fn zeta_invariances() {
        let y = randn(300, 4);
        let p: Vec<_> = y.iter().zip(randn(300, 5)).map(|(a, n)| a + n * 0.3).collect();
        let z0 = zeta(&y, &p).unwrap();
        let shift = Cplx::new(2.0, -1.0);
        let ys: Vec<_> = y.iter().map(|a| a + shift).collect();
        let ps: Vec<_> = p.iter().map(|a| a + shift).collect();
        assert!((zeta(&ys, &ps).unwrap() - z0).abs() < 1e-6);
        let scale = Cplx::from_polar(3.0, 0.4);
        let ys: Vec<_> = y.iter().map(|a| a * scale).collect();
        let ps: Vec<_> = p.iter().map(|a| a * scale).collect();
        assert!((zeta(&ys, &ps).unwrap() - z0).abs() < 1e-9);
        let rotated: Vec<_> = p.iter().map(|a| a * Cplx::from_polar(1.0, 2.0)).collect();
        assert!((zeta(&y, &rotated).unwrap() - z0).abs() < 1e-9);
    }

    #[test]
    fn mi_examples() {
        assert!((mi_lower_bound(10.0, 10.0).unwrap() - 6f64.log2()).abs() < 1e-12);
        assert!((mi_lower_bound(f64::INFINITY, 1000.0).unwrap() - 1001f64.log2()).abs() < 1e-12);
        assert!((mi_lower_bound(7.0, f64::INFINITY).unwrap() - 8f64.log2()).abs() < 1e-12);
        assert!(mi_lower_bound(0.0, 1.0).is_err());
        assert!(mi_lower_bound(1.0, -1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn mi_is_monotone(a in 1e-3f64..1e4, b in 1e-3f64..1e4, f in 1.01f64..10.0) {
            let base = mi_lower_bound(a, b).unwrap();
            proptest::prop_assert!(mi_lower_bound(a * f, b).unwrap() > base);
            proptest::prop_assert!(mi_lower_bound(a, b * f).unwrap() > base);
        }
    }
}
