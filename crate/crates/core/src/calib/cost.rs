//! Calibration costs and their gradients with respect to the predictions.
//!
//! Gradients are packed as complex numbers `dC/dRe z + i dC/dIm z`, so that
//! a perturbation `dz` changes the cost by `Re(conj(g) dz)`.

use num_traits::Zero;

use crate::dataset::CoefficientMask;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scalar::{smooth_abs, smooth_abs_real, Cplx, Real};

pub const DEFAULT_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostKind {
    /// `min_theta < |y - e^{i theta} yhat| >` over pilot signals.
    Coherent,
    /// `< ||y| - |yhat|| >` over pilot signal intensities.
    Phaseless,
    /// `min_theta < |A.H - e^{i theta} A.Hhat| >` over included coefficients.
    Masked(CoefficientMask),
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Coherent => "coherent",
            CostKind::Phaseless => "phaseless",
            CostKind::Masked(_) => "masked",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CostKind::Masked(mask) = self {
            if mask.n_included() == 0 {
                return Err(Error::EmptyMask);
            }
        }
        Ok(())
    }
}

/// `arg(sum conj(yhat) y)`, the rotation of `yhat` that best matches `y` in
/// the least-squares sense; `0` when the inner product vanishes.
pub fn optimal_global_phase<T: Real>(y: &[Cplx<T>], yhat: &[Cplx<T>]) -> T {
    debug_assert_eq!(y.len(), yhat.len());
    let s = inner(y, yhat);
    if s.is_zero() {
        T::zero()
    } else {
        s.arg()
    }
}

fn inner<T: Real>(y: &[Cplx<T>], yhat: &[Cplx<T>]) -> Cplx<T> {
    y.iter()
        .zip(yhat)
        .fold(Cplx::zero(), |acc, (a, b)| acc + b.conj() * a)
}

/// Observed signals entering a cost.
#[derive(Debug, Clone, PartialEq)]
pub enum Signals<T: Real> {
    Complex(Vec<Cplx<T>>),
    Magnitude(Vec<T>),
}

impl<T: Real> Signals<T> {
    pub fn len(&self) -> usize {
        match self {
            Signals::Complex(v) => v.len(),
            Signals::Magnitude(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct CostEval<T: Real> {
    pub value: T,
    /// Alignment phase used (zero for phaseless costs).
    pub theta: T,
    /// Gradient with respect to each prediction.
    pub grad: Vec<Cplx<T>>,
}

/// Phase-aligned smoothed-L1 cost. The gradient includes the dependence of
/// the alignment phase on the predictions.
pub fn aligned_l1<T: Real>(y: &[Cplx<T>], yhat: &[Cplx<T>], eps: T, want_grad: bool) -> CostEval<T> {
    let k = y.len();
    let inv_k = T::one() / T::from_usize_lossy(k.max(1));
    let s = inner(y, yhat);
    let theta = if s.is_zero() { T::zero() } else { s.arg() };
    let rot = Cplx::new(theta.cos(), theta.sin());
    let mut value = T::zero();
    let mut grad = if want_grad { Vec::with_capacity(k) } else { Vec::new() };
    let mut dtheta = T::zero();
    for (a, b) in y.iter().zip(yhat) {
        let rb = rot * b;
        let r = *a - rb;
        let m = smooth_abs(r, eps);
        value += m;
        if want_grad {
            grad.push(-(r * rot.conj()) * (inv_k / m));
            dtheta += (r.conj() * rb).im / m;
        }
    }
    value *= inv_k;
    if want_grad && !s.is_zero() {
        dtheta *= inv_k;
        let coef = Cplx::new(T::zero(), -dtheta / s.norm_sqr()) * s.conj();
        for (g, a) in grad.iter_mut().zip(y) {
            *g = *g + coef * a;
        }
    }
    CostEval { value, theta, grad }
}

/// `< ||y| - |yhat|| >`.
pub fn magnitude_l1<T: Real>(y: &[T], yhat: &[Cplx<T>], eps: T, want_grad: bool) -> CostEval<T> {
    let k = y.len();
    let inv_k = T::one() / T::from_usize_lossy(k.max(1));
    let mut value = T::zero();
    let mut grad = if want_grad { Vec::with_capacity(k) } else { Vec::new() };
    // the value uses exact moduli so that equal magnitudes cost exactly
    // zero; smoothing only keeps the gradient finite at the kinks
    for (&m, b) in y.iter().zip(yhat) {
        value += (b.norm() - m).abs();
        if want_grad {
            let mag = smooth_abs(*b, eps);
            let d = mag - m;
            let ad = smooth_abs_real(d, eps);
            grad.push(*b * (d / ad / mag * inv_k));
        }
    }
    CostEval {
        value: value * inv_k,
        theta: T::zero(),
        grad,
    }
}

pub fn evaluate<T: Real>(y: &Signals<T>, yhat: &[Cplx<T>], eps: T, want_grad: bool) -> CostEval<T> {
    match y {
        Signals::Complex(v) => aligned_l1(v, yhat, eps, want_grad),
        Signals::Magnitude(v) => magnitude_l1(v, yhat, eps, want_grad),
    }
}

/// Gather the entries of `m` that `kind` compares, column-major.
pub fn flatten_for<T: Real>(m: &CMat<T>, kind: &CostKind) -> Vec<Cplx<T>> {
    match kind {
        CostKind::Masked(mask) => {
            let mut out = Vec::with_capacity(mask.n_included());
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    if mask.is_included(r, c) {
                        out.push(m[(r, c)]);
                    }
                }
            }
            out
        }
        _ => m.iter().copied().collect(),
    }
}

/// Cost between two signal matrices with the default smoothing.
pub fn cost<T: Real>(y: &CMat<T>, yhat: &CMat<T>, kind: &CostKind) -> Result<T> {
    cost_with_smoothing(y, yhat, kind, T::lit(DEFAULT_SMOOTHING))
}

pub fn cost_with_smoothing<T: Real>(y: &CMat<T>, yhat: &CMat<T>, kind: &CostKind, eps: T) -> Result<T> {
    kind.validate()?;
    if y.shape() != yhat.shape() {
        return Err(Error::Dimension(format!(
            "signal shapes differ: {:?} vs {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    if let CostKind::Masked(mask) = kind {
        if mask.shape() != y.shape() {
            return Err(Error::Dimension("mask shape disagrees with signals".into()));
        }
    }
    let pred = flatten_for(yhat, kind);
    let obs = flatten_for(y, kind);
    let eval = match kind {
        CostKind::Phaseless => magnitude_l1(&obs.iter().map(|z| z.norm()).collect::<Vec<_>>(), &pred, eps, false),
        _ => aligned_l1(&obs, &pred, eps, false),
    };
    Ok(eval.value)
}
