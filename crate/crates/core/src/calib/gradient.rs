//! Batch cost and its gradient with respect to every real learnable.
//!
//! Backward pass: the cost gradient on the pilot signals is pulled back to
//! the channel (`G_H = G_Y X^H`), scattered into the antenna block, and
//! pushed through the inverse with `d(W^{-1}) = -W^{-1} dW W^{-1}`. Because
//! `W` is symmetric only the antenna columns of `W^{-1}` are needed:
//! `G_W = -conj(V_{:,A} conj(G_S) V_{:,A}^T)`.

use num_traits::Zero;

use crate::calib::cost::{evaluate, flatten_for, CostKind, Signals};
use crate::dataset::{Measurement, Record};
use crate::error::{Error, Result};
use crate::linalg::{matmul, select, CMat};
use crate::model::{
    assemble_interaction_matrix, staged_inverse, tri_index, CompactModelParams, MetaConfig,
    PortRoles,
};
use crate::scalar::{Cplx, Real};

/// A record with its cost target precomputed.
#[derive(Debug, Clone)]
pub struct PreparedRecord<T: Real> {
    pub config: MetaConfig,
    pub target: Signals<T>,
}

/// Everything the batch cost needs besides parameters and data.
#[derive(Debug, Clone)]
pub struct Objective<'a, T: Real> {
    /// Roles in the model's own antenna numbering.
    pub roles: &'a PortRoles,
    pub pilots: &'a CMat<T>,
    pub kind: &'a CostKind,
    pub eps: T,
}

impl<T: Real> Objective<'_, T> {
    /// Turn a dataset record into the flattened target this objective
    /// compares against.
    pub fn prepare(&self, record: &Record<T>) -> Result<PreparedRecord<T>> {
        let (n_rx, n_tx) = (self.roles.n_rx(), self.roles.n_tx());
        let target = match (&record.measurement, self.kind) {
            (Measurement::Complex(h), CostKind::Coherent) => {
                check_shape(h.shape(), (n_rx, n_tx))?;
                Signals::Complex(matmul(h, self.pilots).iter().copied().collect())
            }
            (Measurement::Complex(h), CostKind::Masked(mask)) => {
                check_shape(h.shape(), (n_rx, n_tx))?;
                check_shape(mask.shape(), (n_rx, n_tx))?;
                Signals::Complex(flatten_for(h, self.kind))
            }
            (Measurement::Complex(h), CostKind::Phaseless) => {
                check_shape(h.shape(), (n_rx, n_tx))?;
                Signals::Magnitude(matmul(h, self.pilots).iter().map(|z| z.norm()).collect())
            }
            (Measurement::Intensity(m), CostKind::Phaseless) => {
                check_shape(m.shape(), (n_rx, self.pilots.ncols()))?;
                Signals::Magnitude(m.iter().copied().collect())
            }
            (Measurement::Intensity(_), _) => {
                return Err(Error::Phaseless(format!(
                    "a {} cost needs complex measurements",
                    self.kind.name()
                )))
            }
        };
        Ok(PreparedRecord {
            config: record.config.clone(),
            target,
        })
    }

    /// Predicted signals for one configuration, flattened like the target.
    fn predict_signals(&self, h: &CMat<T>) -> Vec<Cplx<T>> {
        match self.kind {
            CostKind::Masked(_) => flatten_for(h, self.kind),
            _ => matmul(h, self.pilots).iter().copied().collect(),
        }
    }
}

fn check_shape(got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "measurement shape {got:?}, expected {want:?}"
        )));
    }
    Ok(())
}

struct Forward<T: Real> {
    signals: Vec<Cplx<T>>,
    columns: CMat<T>,
}

/// Batch cost, and its gradient over the flattened real learnables when
/// `want_grad` is set. One alignment phase is shared by the whole batch.
pub fn batch_cost_and_gradient<T: Real>(
    params: &CompactModelParams<T>,
    batch: &[&PreparedRecord<T>],
    obj: &Objective<'_, T>,
    want_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    obj.kind.validate()?;
    let roles = obj.roles;
    if roles.n_antennas() != params.n_antennas() {
        return Err(Error::Dimension(format!(
            "roles cover {} antennas, model has {}",
            roles.n_antennas(),
            params.n_antennas()
        )));
    }
    let na = params.n_antennas();

    let mut forwards = Vec::with_capacity(batch.len());
    for rec in batch {
        let w = assemble_interaction_matrix(params, &rec.config)?;
        let staged = staged_inverse(&w, na, &rec.config, want_grad)?;
        let h = select(&staged.antenna_block, roles.rx_ports(), roles.tx_ports());
        let signals = obj.predict_signals(&h);
        if signals.len() != rec.target.len() {
            return Err(Error::Dimension(format!(
                "target has {} signals, prediction {}",
                rec.target.len(),
                signals.len()
            )));
        }
        forwards.push(Forward {
            signals,
            columns: staged.antenna_columns.unwrap_or_else(|| crate::linalg::zeros(0, 0)),
        });
    }

    let target = match &batch[0].target {
        Signals::Complex(_) => Signals::Complex(
            batch
                .iter()
                .flat_map(|r| match &r.target {
                    Signals::Complex(v) => v.clone(),
                    Signals::Magnitude(_) => unreachable!("mixed targets in one batch"),
                })
                .collect(),
        ),
        Signals::Magnitude(_) => Signals::Magnitude(
            batch
                .iter()
                .flat_map(|r| match &r.target {
                    Signals::Magnitude(v) => v.clone(),
                    Signals::Complex(_) => unreachable!("mixed targets in one batch"),
                })
                .collect(),
        ),
    };
    let predicted: Vec<Cplx<T>> = forwards.iter().flat_map(|f| f.signals.iter().copied()).collect();
    let eval = evaluate(&target, &predicted, obj.eps, want_grad);
    if !want_grad {
        return Ok((eval.value, None));
    }

    let n = params.n();
    let mut g_alpha = [Cplx::<T>::zero(); 3];
    let mut g_coupling = vec![Cplx::<T>::zero(); n * (n + 1) / 2];
    let mut offset = 0;
    let (n_rx, n_tx) = (roles.n_rx(), roles.n_tx());
    let n_p = obj.pilots.ncols();
    let mut g_s = crate::linalg::zeros::<T>(na, na);
    let mut m = crate::linalg::zeros::<T>(n, na);

    for (rec, fwd) in batch.iter().zip(&forwards) {
        let k = fwd.signals.len();
        let g_pred = &eval.grad[offset..offset + k];
        offset += k;

        // pull back onto the antenna block
        g_s.fill(Cplx::zero());
        match obj.kind {
            CostKind::Masked(mask) => {
                let mut it = g_pred.iter();
                for c in 0..n_tx {
                    for r in 0..n_rx {
                        if mask.is_included(r, c) {
                            let g = *it.next().expect("mask count matches");
                            g_s[(roles.rx_ports()[r], roles.tx_ports()[c])] += g;
                        }
                    }
                }
            }
            _ => {
                // G_H = G_Y X^H, G_Y column-major n_rx x n_p
                for r in 0..n_rx {
                    for c in 0..n_tx {
                        let mut acc = Cplx::zero();
                        for p in 0..n_p {
                            acc += g_pred[r + p * n_rx] * obj.pilots[(c, p)].conj();
                        }
                        g_s[(roles.rx_ports()[r], roles.tx_ports()[c])] += acc;
                    }
                }
            }
        }

        // M = V_{:,A} conj(G_S)
        let v = &fwd.columns;
        for i in 0..n {
            for b in 0..na {
                let mut acc = Cplx::zero();
                for a in 0..na {
                    let gs = g_s[(a, b)];
                    if !gs.is_zero() {
                        acc += v[(i, a)] * gs.conj();
                    }
                }
                m[(i, b)] = acc;
            }
        }

        // G_W[i,j] = -conj(sum_b M[i,b] V[j,b]); fold symmetric pairs
        let mut tri = 0;
        for i in 0..n {
            for j in i..n {
                let mut gij = Cplx::<T>::zero();
                let mut gji = Cplx::zero();
                for b in 0..na {
                    gij += m[(i, b)] * v[(j, b)];
                    if i != j {
                        gji += m[(j, b)] * v[(i, b)];
                    }
                }
                let total = -(gij + gji).conj();
                g_coupling[tri] += total;
                if i == j {
                    let slot = if i < na {
                        0
                    } else if rec.config.bit(i - na) {
                        2
                    } else {
                        1
                    };
                    g_alpha[slot] += total;
                }
                tri += 1;
            }
        }
    }
    debug_assert_eq!(g_coupling.len(), tri_index(n, n - 1, n - 1) + 1);

    let mut grad = Vec::with_capacity(params.n_real_params());
    for g in g_alpha.iter().chain(g_coupling.iter()) {
        grad.push(g.re);
        grad.push(g.im);
    }
    Ok((eval.value, Some(grad)))
}

/// Gradient of the batch cost over all `2 (3 + (N+1) N / 2)` real
/// learnables. `roles` use the model's antenna numbering.
pub fn model_gradient<T: Real>(
    params: &CompactModelParams<T>,
    batch: &[Record<T>],
    roles: &PortRoles,
    pilots: &CMat<T>,
    kind: &CostKind,
    eps: T,
) -> Result<Vec<T>> {
    let obj = Objective {
        roles,
        pilots,
        kind,
        eps,
    };
    let prepared = batch
        .iter()
        .map(|r| obj.prepare(r))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedRecord<T>> = prepared.iter().collect();
    let (_, grad) = batch_cost_and_gradient(params, &refs, &obj, true)?;
    Ok(grad.expect("gradient requested"))
}

/// Batch cost without the gradient.
pub fn model_cost<T: Real>(
    params: &CompactModelParams<T>,
    batch: &[Record<T>],
    roles: &PortRoles,
    pilots: &CMat<T>,
    kind: &CostKind,
    eps: T,
) -> Result<T> {
    let obj = Objective {
        roles,
        pilots,
        kind,
        eps,
    };
    let prepared = batch
        .iter()
        .map(|r| obj.prepare(r))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedRecord<T>> = prepared.iter().collect();
    Ok(batch_cost_and_gradient(params, &refs, &obj, false)?.0)
}
