//! Thin wrappers over `faer` dense factorizations, on complex matrices.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};

use crate::{Error, Result, C64};

pub type CMat = Mat<C64>;

/// `A = U diag(s) V*` with `k = min(m, n)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl ThinSvd {
    /// Number of singular values `≥ rel · s₀`.
    pub fn rank_at(&self, rel: f64) -> usize {
        let Some(&s0) = self.s.first() else { return 0 };
        self.s.iter().take_while(|&&s| s >= rel * s0 && s > 0.0).count()
    }

    /// `V_r Σ_r⁻¹ U_r*` using the leading `r` triplets.
    pub fn pinv_rank(&self, r: usize) -> CMat {
        let vs = scale_cols(self.v.as_ref().subcols(0, r), |j| 1.0 / self.s[j]);
        &vs * self.u.as_ref().subcols(0, r).adjoint()
    }

    pub fn condition_number(&self) -> f64 {
        match (self.s.first(), self.s.last()) {
            (Some(&a), Some(&b)) => a / b,
            _ => f64::NAN,
        }
    }
}

pub fn thin_svd(a: MatRef<'_, C64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::LinAlg(format!("singular values did not converge: {e:?}")))
}

pub fn spectral_norm(a: MatRef<'_, C64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// `σ_max / σ_min` over `min(m, n)` singular values.
pub fn condition_number(a: MatRef<'_, C64>) -> Result<f64> {
    let s = singular_values(a)?;
    Ok(match (s.first(), s.last()) {
        (Some(&x), Some(&y)) => x / y,
        _ => f64::NAN,
    })
}

/// Unthresholded Moore–Penrose pseudoinverse; only exactly zero singular
/// values are dropped. Returns the pseudoinverse and the condition number.
pub fn pinv(a: MatRef<'_, C64>) -> Result<(CMat, f64)> {
    let svd = thin_svd(a)?;
    let r = svd.s.iter().take_while(|&&s| s > 0.0).count();
    Ok((svd.pinv_rank(r), svd.condition_number()))
}

/// Eigenvalues and (column) eigenvectors of a general square matrix.
pub fn eig(a: MatRef<'_, C64>) -> Result<(Vec<C64>, CMat)> {
    let e = a
        .eigen()
        .map_err(|e| Error::LinAlg(format!("eigensolver did not converge: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    a.eigenvalues()
        .map_err(|e| Error::LinAlg(format!("eigensolver did not converge: {e:?}")))
}

pub fn inverse(a: MatRef<'_, C64>) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let xm = column(x);
    let y = a * &xm;
    y.col_as_slice(0).to_vec()
}

pub fn column(x: &[C64]) -> CMat {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn col_norm(a: MatRef<'_, C64>, j: usize) -> f64 {
    a.col(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn select_cols(a: MatRef<'_, C64>, idx: &[usize]) -> CMat {
    Mat::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

/// Multiplies column `j` by `f(j)`.
pub fn scale_cols(a: MatRef<'_, C64>, f: impl Fn(usize) -> f64) -> CMat {
    let mut out = a.to_owned();
    for j in 0..out.ncols() {
        let c = f(j);
        out.col_as_slice_mut(j).iter_mut().for_each(|v| *v *= c);
    }
    out
}

/// Multiplies row `i` by `d[i]`, i.e. `diag(d) · a`.
pub fn scale_rows_complex(a: MatRef<'_, C64>, d: &[C64]) -> CMat {
    assert_eq!(a.nrows(), d.len());
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i])
}

/// Minimum-norm least squares `min ‖A x − b‖₂` through a thin SVD. Singular
/// values below `n·ε·σ₁` are dropped. Returns `x` and `cond(A)`.
pub fn lstsq(a: MatRef<'_, C64>, b: &[C64]) -> Result<(Vec<C64>, f64)> {
    assert_eq!(a.nrows(), b.len());
    let svd = thin_svd(a)?;
    let r = svd.rank_at(a.nrows().max(a.ncols()) as f64 * f64::EPSILON);
    let utb = svd.u.as_ref().subcols(0, r).adjoint() * column(b);
    let y = Mat::from_fn(r, 1, |i, _| utb[(i, 0)] / svd.s[i]);
    let x = svd.v.as_ref().subcols(0, r) * &y;
    Ok((x.col_as_slice(0).to_vec(), svd.condition_number()))
}

/// Real counterpart of [`lstsq`].
pub fn lstsq_real(a: MatRef<'_, f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    assert_eq!(a.nrows(), b.len());
    let svd = a
        .thin_svd()
        .map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let s0 = s.first().copied().unwrap_or(0.0);
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * s0;
    let r = s.iter().take_while(|&&v| v > tol).count();
    let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let utb = svd.U().subcols(0, r).transpose() * &bm;
    let y = Mat::from_fn(r, 1, |i, _| utb[(i, 0)] / s[i]);
    let x = svd.V().subcols(0, r) * &y;
    let cond = match s.last() {
        Some(&l) if s0 > 0.0 => s0 / l,
        _ => f64::INFINITY,
    };
    Ok((x.col_as_slice(0).to_vec(), cond))
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}
