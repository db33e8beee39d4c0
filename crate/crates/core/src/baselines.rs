//! Benchmark predictors: an affine map of the configuration bits and a
//! fully connected ReLU network. Both are fitted per coefficient block in
//! double precision.

use nalgebra::{DMatrix, SVD};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::adam::AdamState;
use crate::calib::cost::{aligned_l1, DEFAULT_SMOOTHING};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{MetaConfig, PortRoles, ScatteringPredictor};
use crate::scalar::Cplx;

type C64 = Cplx<f64>;

fn check_len(config: &MetaConfig, n_meta: usize) -> Result<()> {
    if config.len() != n_meta {
        return Err(Error::Dimension(format!(
            "configuration has {} bits, model expects {}",
            config.len(),
            n_meta
        )));
    }
    Ok(())
}

/// Complex targets, one row per record, coefficients column-major.
fn targets(dataset: &Dataset<f64>) -> Result<Vec<Vec<C64>>> {
    dataset
        .records
        .iter()
        .map(|r| Ok(r.measurement.complex()?.iter().copied().collect()))
        .collect()
}

fn unflatten(values: &[C64], roles: &PortRoles) -> CMat<f64> {
    CMat::from_column_slice(roles.n_rx(), roles.n_tx(), values)
}

/// `S_ij(c) = S0_ij + tau_ij^T c` for every coefficient of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub roles: PortRoles,
    pub n_meta: usize,
    /// One intercept per coefficient, column-major over the block.
    pub intercept: Vec<C64>,
    /// `n_coeff` rows of `n_meta` weights.
    pub weights: Vec<Vec<C64>>,
}

impl LinearModel {
    pub fn n_coeff(&self) -> usize {
        self.intercept.len()
    }

    /// `2 (N_S + 1)` reals per coefficient.
    pub fn n_params(&self) -> usize {
        self.n_coeff() * 2 * (self.n_meta + 1)
    }

    pub fn predict_flat(&self, config: &MetaConfig) -> Result<Vec<C64>> {
        check_len(config, self.n_meta)?;
        Ok(self
            .intercept
            .iter()
            .zip(&self.weights)
            .map(|(s0, tau)| {
                config
                    .bits()
                    .iter()
                    .zip(tau)
                    .filter(|(b, _)| **b)
                    .fold(*s0, |acc, (_, t)| acc + t)
            })
            .collect())
    }
}

impl ScatteringPredictor<f64> for LinearModel {
    fn n_meta(&self) -> usize {
        self.n_meta
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<f64>> {
        Ok(unflatten(&self.predict_flat(config)?, &self.roles))
    }
}

/// Ordinary least squares on `[1, c]`, real and imaginary parts separately,
/// minimum-norm when the design is rank deficient.
pub fn fit_linear(dataset: &Dataset<f64>, roles: &PortRoles) -> Result<LinearModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.is_phaseless() {
        return Err(Error::Phaseless("the linear model needs complex measurements".into()));
    }
    let data = dataset.restrict(roles)?;
    let n_s = data.header.n_meta;
    let ys = targets(&data)?;
    let n_coeff = roles.n_rx() * roles.n_tx();
    let design = DMatrix::from_fn(data.len(), n_s + 1, |r, c| {
        if c == 0 || data.records[r].config.bit(c - 1) {
            1.0
        } else {
            0.0
        }
    });
    let rhs = DMatrix::from_fn(data.len(), 2 * n_coeff, |r, c| {
        let z = ys[r][c % n_coeff];
        if c < n_coeff {
            z.re
        } else {
            z.im
        }
    });
    let svd = SVD::new(design, true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * (data.len().max(n_s + 1) as f64) * f64::EPSILON;
    let beta = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let coef = |row: usize, k: usize| C64::new(beta[(row, k)], beta[(row, n_coeff + k)]);
    Ok(LinearModel {
        roles: roles.clone(),
        n_meta: n_s,
        intercept: (0..n_coeff).map(|k| coef(0, k)).collect(),
        weights: (0..n_coeff)
            .map(|k| (1..=n_s).map(|r| coef(r, k)).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Number of hidden ReLU layers.
    pub layers: usize,
    /// Hidden width; `None` means `6 N_S`.
    pub width: Option<usize>,
}

impl Default for MlpArch {
    fn default() -> Self {
        Self {
            layers: 5,
            width: None,
        }
    }
}

/// `(N_S M + M) + (n - 1)(M M + M) + 2 (M N_coeff + 1)`: the output layer
/// has one shared bias for the real parts and one for the imaginary parts.
pub fn mlp_param_count(n_meta: usize, layers: usize, width: usize, n_coeff: usize) -> usize {
    (n_meta * width + width) + layers.saturating_sub(1) * (width * width + width) + 2 * (width * n_coeff + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpOptions {
    pub arch: MlpArch,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            arch: MlpArch::default(),
            learning_rate: 1e-3,
            batch_size: 10,
            train_fraction: 0.75,
            patience_epochs: 3,
            max_epochs: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub roles: PortRoles,
    pub n_meta: usize,
    pub layers: usize,
    pub width: usize,
    /// Flattened parameters: for each hidden layer its row-major weights
    /// then biases, then the output weights and the two output biases.
    pub params: Vec<f64>,
    /// Network outputs are multiplied by this to give scattering values.
    #[serde(default = "unit_scale")]
    pub output_scale: f64,
    pub epochs: usize,
    pub best_validation_cost: f64,
}

fn unit_scale() -> f64 {
    1.0
}

struct Layout {
    /// (weight offset, bias offset, fan_in, fan_out) per hidden layer.
    hidden: Vec<(usize, usize, usize, usize)>,
    out_w: usize,
    out_b: usize,
    n_out: usize,
    total: usize,
}

impl MlpModel {
    pub fn n_coeff(&self) -> usize {
        self.roles.n_rx() * self.roles.n_tx()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layout(n_meta: usize, layers: usize, width: usize, n_coeff: usize) -> Layout {
        let mut hidden = Vec::with_capacity(layers);
        let mut off = 0;
        let mut fan_in = n_meta;
        for _ in 0..layers {
            hidden.push((off, off + width * fan_in, fan_in, width));
            off += width * fan_in + width;
            fan_in = width;
        }
        let n_out = 2 * n_coeff;
        let out_w = off;
        let out_b = off + n_out * fan_in;
        Layout {
            hidden,
            out_w,
            out_b,
            n_out,
            total: out_b + 2,
        }
    }

    /// Check that the parameter vector fits the architecture, e.g. after
    /// deserialisation.
    pub fn check_layout(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.roles.n_rx() * self.roles.n_tx() == 0 {
            return Err(Error::InvalidArgument("network needs hidden layers, width and outputs".into()));
        }
        let expected = mlp_param_count(self.n_meta, self.layers, self.width, self.n_coeff());
        if self.params.len() != expected {
            return Err(Error::Dimension(format!(
                "network has {} parameters, its architecture needs {expected}",
                self.params.len()
            )));
        }
        Ok(())
    }

    fn own_layout(&self) -> Layout {
        Self::layout(self.n_meta, self.layers, self.width, self.n_coeff())
    }

    /// Network with He-uniform weights and zero biases.
    pub fn initialise(roles: &PortRoles, n_meta: usize, arch: MlpArch, seed: u64) -> Result<Self> {
        if arch.layers == 0 {
            return Err(Error::InvalidArgument("the network needs at least one hidden layer".into()));
        }
        let width = arch.width.unwrap_or(6 * n_meta).max(1);
        let n_coeff = roles.n_rx() * roles.n_tx();
        let lay = Self::layout(n_meta, arch.layers, width, n_coeff);
        let mut params = vec![0.0; lay.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |start: usize, count: usize, fan_in: usize| {
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            for p in &mut params[start..start + count] {
                *p = rng.random_range(-bound..=bound);
            }
        };
        for &(w, _, fan_in, fan_out) in &lay.hidden {
            fill(w, fan_in * fan_out, fan_in);
        }
        fill(lay.out_w, lay.n_out * width, width);
        debug_assert_eq!(lay.total, mlp_param_count(n_meta, arch.layers, width, n_coeff));
        Ok(Self {
            roles: roles.clone(),
            n_meta,
            layers: arch.layers,
            width,
            params,
            output_scale: 1.0,
            epochs: 0,
            best_validation_cost: f64::NAN,
        })
    }

    /// Forward pass keeping every layer's activations (input first).
    fn forward(&self, lay: &Layout, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let p = &self.params;
        let mut acts = Vec::with_capacity(lay.hidden.len() + 1);
        acts.push(x.to_vec());
        for &(w, b, fan_in, fan_out) in &lay.hidden {
            let input = acts.last().expect("input present");
            let mut out = p[b..b + fan_out].to_vec();
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &p[w + o * fan_in..w + (o + 1) * fan_in];
                *slot += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                *slot = slot.max(0.0);
            }
            acts.push(out);
        }
        let last = acts.last().expect("hidden output present");
        let width = last.len();
        let n_coeff = lay.n_out / 2;
        let out: Vec<f64> = (0..lay.n_out)
            .map(|o| {
                let row = &p[lay.out_w + o * width..lay.out_w + (o + 1) * width];
                let bias = if o < n_coeff { p[lay.out_b] } else { p[lay.out_b + 1] };
                bias + row.iter().zip(last).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (acts, out)
    }

    /// Accumulate the gradient of one sample given the output gradient.
    fn backward(&self, lay: &Layout, acts: &[Vec<f64>], g_out: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let n_coeff = lay.n_out / 2;
        let last = acts.last().expect("hidden output present");
        let width = last.len();
        let mut g_h = vec![0.0; width];
        for (o, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[lay.out_b + usize::from(o >= n_coeff)] += g;
            let base = lay.out_w + o * width;
            for k in 0..width {
                grad[base + k] += g * last[k];
                g_h[k] += g * p[base + k];
            }
        }
        for (l, &(w, b, fan_in, fan_out)) in lay.hidden.iter().enumerate().rev() {
            let out = &acts[l + 1];
            let input = &acts[l];
            let mut g_in = vec![0.0; fan_in];
            for o in 0..fan_out {
                if out[o] <= 0.0 {
                    continue;
                }
                let g = g_h[o];
                grad[b + o] += g;
                let base = w + o * fan_in;
                for k in 0..fan_in {
                    grad[base + k] += g * input[k];
                    g_in[k] += g * p[base + k];
                }
            }
            g_h = g_in;
        }
    }

    pub fn predict_flat(&self, config: &MetaConfig) -> Result<Vec<C64>> {
        check_len(config, self.n_meta)?;
        let lay = self.own_layout();
        let (_, out) = self.forward(&lay, &config.as_f64());
        let n = lay.n_out / 2;
        let s = self.output_scale;
        Ok((0..n).map(|k| C64::new(out[k], out[n + k]) * s).collect())
    }

    /// Aligned L1 cost (and gradient) over a set of samples.
    fn batch(&self, lay: &Layout, xs: &[Vec<f64>], ys: &[Vec<C64>], idx: &[usize], want_grad: bool) -> (f64, Vec<f64>) {
        let n = lay.n_out / 2;
        let mut fwd = Vec::with_capacity(idx.len());
        let mut y = Vec::with_capacity(idx.len() * n);
        let mut yhat = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            let (acts, out) = self.forward(lay, &xs[i]);
            y.extend_from_slice(&ys[i]);
            yhat.extend((0..n).map(|k| C64::new(out[k], out[n + k])));
            if want_grad {
                fwd.push(acts);
            }
        }
        let eval = aligned_l1(&y, &yhat, DEFAULT_SMOOTHING, want_grad);
        let mut grad = Vec::new();
        if want_grad {
            grad = vec![0.0; self.params.len()];
            let mut g_out = vec![0.0; lay.n_out];
            for (s, acts) in fwd.iter().enumerate() {
                for k in 0..n {
                    let g = eval.grad[s * n + k];
                    g_out[k] = g.re;
                    g_out[n + k] = g.im;
                }
                self.backward(lay, acts, &g_out, &mut grad);
            }
        }
        (eval.value, grad)
    }
}

impl ScatteringPredictor<f64> for MlpModel {
    fn n_meta(&self) -> usize {
        self.n_meta
    }

    fn predict(&self, config: &MetaConfig) -> Result<CMat<f64>> {
        Ok(unflatten(&self.predict_flat(config)?, &self.roles))
    }
}

/// Train the network with Adam on the phase-aligned L1 cost, keeping the
/// weights of the best validation epoch.
pub fn fit_mlp(dataset: &Dataset<f64>, roles: &PortRoles, opts: &MlpOptions) -> Result<MlpModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.is_phaseless() {
        return Err(Error::Phaseless("the network needs complex measurements".into()));
    }
    if opts.batch_size == 0 || !(opts.train_fraction > 0.0 && opts.train_fraction <= 1.0) {
        return Err(Error::InvalidArgument("batch size and train fraction must be positive".into()));
    }
    let data = dataset.restrict(roles)?;
    let mut ys = targets(&data)?;
    let xs: Vec<Vec<f64>> = data.records.iter().map(|r| r.config.as_f64()).collect();
    let mut model = MlpModel::initialise(roles, data.header.n_meta, opts.arch, opts.seed)?;
    let lay = model.own_layout();
    // train on unit-RMS targets
    let n_vals = ys.iter().map(Vec::len).sum::<usize>().max(1);
    let rms = (ys.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / n_vals as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        model.output_scale = rms;
        for z in ys.iter_mut().flatten() {
            *z /= rms;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d6c_7000);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64 * opts.train_fraction).round() as usize).clamp(1, data.len());
    let (train, val) = order.split_at(n_train);
    let mut train = train.to_vec();
    let val: Vec<usize> = if val.is_empty() { train.clone() } else { val.to_vec() };

    let mut best_cost = model.batch(&lay, &xs, &ys, &val, false).0;
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut adam = AdamState::new(model.params.len(), opts.learning_rate);
    let mut epochs = 0;
    for epoch in 1..=opts.max_epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(opts.batch_size) {
            let (_, grad) = model.batch(&lay, &xs, &ys, chunk, true);
            adam.step(&grad, &mut model.params)?;
        }
        epochs = epoch;
        let v = model.batch(&lay, &xs, &ys, &val, false).0;
        if v < best_cost {
            best_cost = v;
            best_params.clone_from(&model.params);
            best_epoch = epoch;
        }
        if epoch - best_epoch >= opts.patience_epochs {
            break;
        }
    }
    model.params = best_params;
    model.epochs = epochs;
    model.best_validation_cost = best_cost * model.output_scale;
    Ok(model)
}
