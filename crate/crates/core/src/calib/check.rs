//! Central finite-difference check of the analytic cost gradients.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calib::cost::CostKind;
use crate::calib::gradient::{model_cost, model_gradient};
use crate::calib::train::PilotSet;
use crate::cavity::{generate_dataset, DatasetOptions, GroundTruth, HiddenCompact};
use crate::dataset::{CoefficientMask, Record};
use crate::error::Result;
use crate::linalg::CMat;
use crate::model::{CompactModelParams, PortRoles};

pub const FD_STEP: f64 = 1e-6;

/// Largest `|fd_k - g_k|` over all parameters, relative to `max_k |g_k|`.
pub fn finite_difference_deviation(
    params: &CompactModelParams<f64>,
    batch: &[Record<f64>],
    roles: &PortRoles,
    pilots: &CMat<f64>,
    kind: &CostKind,
    eps: f64,
    h: f64,
) -> Result<f64> {
    let (n_a, n_s) = (params.n_antennas(), params.n_meta());
    let grad = model_gradient(params, batch, roles, pilots, kind, eps)?;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let base = params.to_vec();
    let cost_at = |v: &[f64]| -> Result<f64> {
        model_cost(&CompactModelParams::from_vec(n_a, n_s, v)?, batch, roles, pilots, kind, eps)
    };
    let mut worst = 0.0f64;
    let mut shifted = base.clone();
    for k in 0..base.len() {
        shifted[k] = base[k] + h;
        let plus = cost_at(&shifted)?;
        shifted[k] = base[k] - h;
        let minus = cost_at(&shifted)?;
        shifted[k] = base[k];
        let fd = (plus - minus) / (2.0 * h);
        let dev = (fd - grad[k]).abs();
        worst = worst.max(if scale > 0.0 { dev / scale } else { dev });
    }
    Ok(worst)
}

/// Well-conditioned random parameters: standard normal couplings and local
/// terms pushed away from zero.
pub fn random_check_params(n_a: usize, n_s: usize, seed: u64) -> CompactModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_a + n_s;
    let v: Vec<f64> = (0..crate::model::n_real_params(n))
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut p = CompactModelParams::from_vec(n_a, n_s, &v).expect("length matches");
    p.alpha_a += Complex64::new(3.0, 0.0);
    p.alpha_0 += Complex64::new(3.0, 0.0);
    p.alpha_1 += Complex64::new(-3.0, 0.0);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub n_antennas: usize,
    pub n_meta: usize,
    pub cost: String,
    pub max_relative_deviation: f64,
}

/// Check all three costs on one random instance (`N_A` in 2..=4, `N_S` in
/// 3..=8, four configurations) derived from `seed`.
pub fn gradcheck(seed: u64) -> Result<Vec<GradientCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9c4e_c3ec);
    let n_a = rng.random_range(2..=4usize);
    let n_s = rng.random_range(3..=8usize);
    let roles = PortRoles::full(n_a);
    let truth = GroundTruth::HiddenCompact(HiddenCompact::new(random_check_params(n_a, n_s, seed.wrapping_add(100))));
    let params = random_check_params(n_a, n_s, seed);
    let pilots = PilotSet::<f64>::random(n_a, seed).matrix;

    // a mask with at least one coefficient on each side
    let mut rows: Vec<Vec<bool>> = (0..n_a).map(|_| (0..n_a).map(|_| rng.random_bool(0.5)).collect()).collect();
    rows[0][0] = true;
    rows[n_a - 1][n_a - 1] = false;
    let mask = CoefficientMask::from_rows(&rows)?;

    let complex = generate_dataset(&truth, &roles, 4, seed, &DatasetOptions::default())?;
    let phaseless = generate_dataset(
        &truth,
        &roles,
        4,
        seed,
        &DatasetOptions {
            phaseless_pilots: Some(pilots.clone()),
            ..Default::default()
        },
    )?;
    let eps = 1e-12;
    let cases = [
        (CostKind::Coherent, &complex),
        (CostKind::Phaseless, &phaseless),
        (CostKind::Masked(mask), &complex),
    ];
    cases
        .iter()
        .map(|(kind, data)| {
            let dev = finite_difference_deviation(&params, &data.records, &roles, &pilots, kind, eps, FD_STEP)?;
            Ok(GradientCheck {
                n_antennas: n_a,
                n_meta: n_s,
                cost: kind.name().to_string(),
                max_relative_deviation: dev,
            })
        })
        .collect()
}
