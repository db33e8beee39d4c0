//! Small dense complex linear algebra: LU with partial pivoting, explicit
//! inverses with a 1-norm condition estimate, and a cyclic Jacobi solver for
//! Hermitian eigenproblems. Matrices are at most a few hundred wide here, so
//! straightforward loops over `nalgebra` storage are fast enough.

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use crate::error::{Error, PivotStage, Result};
use crate::scalar::{Cplx, Real};

pub type CMat<T> = DMatrix<Cplx<T>>;
pub type RMat<T> = DMatrix<T>;

/// Condition-number ceiling above which a pivot block counts as singular.
pub const COND_LIMIT: f64 = 1e12;

pub fn zeros<T: Real>(rows: usize, cols: usize) -> CMat<T> {
    DMatrix::from_element(rows, cols, Cplx::zero())
}

pub fn identity<T: Real>(n: usize) -> CMat<T> {
    DMatrix::from_fn(n, n, |i, j| if i == j { Cplx::one() } else { Cplx::zero() })
}

/// Conjugate transpose.
pub fn adjoint<T: Real>(m: &CMat<T>) -> CMat<T> {
    DMatrix::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// Gather the sub-matrix `m[rows, cols]`.
pub fn select<T: Real>(m: &CMat<T>, rows: &[usize], cols: &[usize]) -> CMat<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Maximum absolute column sum.
pub fn norm1<T: Real>(m: &CMat<T>) -> T {
    let mut best = T::zero();
    for j in 0..m.ncols() {
        let mut s = T::zero();
        for i in 0..m.nrows() {
            s += m[(i, j)].norm();
        }
        if s > best {
            best = s;
        }
    }
    best
}

pub fn frobenius<T: Real>(m: &CMat<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// `a * b` without going through nalgebra's generic gemm, which needs
/// trait bounds we do not otherwise carry.
pub fn matmul<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    assert_eq!(a.ncols(), b.nrows(), "matmul inner dimension");
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = zeros(n, m);
    for j in 0..m {
        for l in 0..k {
            let blj = b[(l, j)];
            if blj.re.is_zero() && blj.im.is_zero() {
                continue;
            }
            for i in 0..n {
                out[(i, j)] = out[(i, j)] + a[(i, l)] * blj;
            }
        }
    }
    out
}

pub fn sub<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    assert_eq!(a.shape(), b.shape());
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// LU factorisation `P A = L U` with partial pivoting, stored packed.
#[derive(Debug, Clone)]
pub struct Lu<T: Real> {
    n: usize,
    // column-major packed L (unit diagonal, below) and U (on/above diagonal)
    lu: Vec<Cplx<T>>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &CMat<T>, stage: PivotStage) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "LU of non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut lu: Vec<Cplx<T>> = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let idx = |i: usize, j: usize| i + j * n;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[idx(k, k)].norm_sqr();
            for i in (k + 1)..n {
                let v = lu[idx(i, k)].norm_sqr();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best.is_zero() || !best.is_finite() {
                return Err(Error::SingularPivot {
                    stage,
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(idx(k, j), idx(p, j));
                }
                perm.swap(k, p);
            }
            let inv_pivot = lu[idx(k, k)].inv();
            for i in (k + 1)..n {
                let f = lu[idx(i, k)] * inv_pivot;
                lu[idx(i, k)] = f;
                if f.is_zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[idx(k, j)];
                    lu[idx(i, j)] = lu[idx(i, j)] - f * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A X = B` for a block of right-hand sides.
    pub fn solve(&self, b: &CMat<T>) -> CMat<T> {
        let n = self.n;
        assert_eq!(b.nrows(), n, "LU solve right-hand side rows");
        let idx = |i: usize, j: usize| i + j * n;
        let mut x = zeros(n, b.ncols());
        let mut col = vec![Cplx::<T>::zero(); n];
        for c in 0..b.ncols() {
            for i in 0..n {
                col[i] = b[(self.perm[i], c)];
            }
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s = s - self.lu[idx(i, k)] * col[k];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s = s - self.lu[idx(i, k)] * col[k];
                }
                col[i] = s / self.lu[idx(i, i)];
            }
            for i in 0..n {
                x[(i, c)] = col[i];
            }
        }
        x
    }

    pub fn inverse(&self) -> CMat<T> {
        self.solve(&identity(self.n))
    }
}

/// Explicit inverse; fails when the 1-norm condition estimate exceeds
/// [`COND_LIMIT`] or a pivot vanishes. Empty matrices invert to empty.
pub fn checked_inverse<T: Real>(a: &CMat<T>, stage: PivotStage) -> Result<CMat<T>> {
    if a.nrows() == 0 && a.ncols() == 0 {
        return Ok(zeros(0, 0));
    }
    let inv = Lu::factor(a, stage)?.inverse();
    let cond = norm1(a) * norm1(&inv);
    let cond_f = cond.as_f64();
    if !cond_f.is_finite() || cond_f > COND_LIMIT {
        return Err(Error::SingularPivot {
            stage,
            condition: cond_f,
        });
    }
    Ok(inv)
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns eigenvalues in ascending order and the matching unit
/// eigenvectors as columns.
pub fn hermitian_eigen<T: Real>(h: &CMat<T>) -> Result<(Vec<T>, CMat<T>)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::Dimension(format!(
            "eigen-decomposition of non-square {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    let mut a = h.clone();
    // enforce exact hermiticity so rounding in the input cannot stall sweeps
    for i in 0..n {
        a[(i, i)] = Cplx::new(a[(i, i)].re, T::zero());
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * T::lit(0.5);
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = identity::<T>(n);
    let scale = frobenius(&a).max(T::min_positive_value());
    let tol = T::epsilon() * T::epsilon() * scale * scale;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag.is_zero() {
                    continue;
                }
                let w = apq.conj() / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (T::lit(2.0) * mag);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let (cc, sc) = (Cplx::new(c, T::zero()), Cplx::new(s, T::zero()));
                // columns: A <- A G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cc * akp - sc * w * akq;
                    a[(k, q)] = sc * akp + cc * w * akq;
                }
                // rows: A <- G^H A
                let wc = w.conj();
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cc * apk - sc * wc * aqk;
                    a[(q, k)] = sc * apk + cc * wc * aqk;
                }
                a[(p, q)] = Cplx::zero();
                a[(q, p)] = Cplx::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cc * vkp - sc * w * vkq;
                    v[(k, q)] = sc * vkp + cc * w * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .re
            .partial_cmp(&a[(j, j)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMat<f64> {
        DMatrix::from_fn(n, m, |_, _| {
            Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(7, 7, &mut rng);
        let inv = checked_inverse(&a, PivotStage::Dense).unwrap();
        let prod = matmul(&a, &inv);
        let err = frobenius(&sub(&prod, &identity(7)));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = zeros::<f64>(3, 3);
        a[(0, 0)] = Cplx::new(1.0, 0.0);
        a[(1, 1)] = Cplx::new(1.0, 0.0);
        let err = checked_inverse(&a, PivotStage::StateZero).unwrap_err();
        assert!(matches!(
            err,
            Error::SingularPivot {
                stage: PivotStage::StateZero,
                ..
            }
        ));
    }

    #[test]
    fn ill_conditioned_matrix_is_reported() {
        let mut a = identity::<f64>(2);
        a[(1, 1)] = Cplx::new(1e-14, 0.0);
        assert!(checked_inverse(&a, PivotStage::Dense).is_err());
    }

    #[test]
    fn empty_inverse() {
        let a = zeros::<f64>(0, 0);
        assert_eq!(checked_inverse(&a, PivotStage::StateOne).unwrap().len(), 0);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random(5, 5, &mut rng);
        let h = matmul(&adjoint(&b), &b);
        let (vals, vecs) = hermitian_eigen(&h).unwrap();
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (k, &lam) in vals.iter().enumerate() {
            let v = select(&vecs, &[0, 1, 2, 3, 4], &[k]);
            let hv = matmul(&h, &v);
            let resid = frobenius(&sub(&hv, &v.map(|z| z * lam)));
            assert!(resid < 1e-10, "eigpair {k}: {resid}");
        }
        let gram = matmul(&adjoint(&vecs), &vecs);
        assert!(frobenius(&sub(&gram, &identity(5))) < 1e-12);
    }

    #[test]
    fn hermitian_eigen_of_diagonal() {
        let mut h = zeros::<f64>(3, 3);
        h[(0, 0)] = Cplx::new(3.0, 0.0);
        h[(1, 1)] = Cplx::new(1.0, 0.0);
        h[(2, 2)] = Cplx::new(2.0, 0.0);
        let (vals, vecs) = hermitian_eigen(&h).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-15);
    }
}
