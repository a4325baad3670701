//! ESPRIT-style spike extraction from the eigenmatrices.
//!
//! The Krylov matrix `K = [M^α ũ]` has row space spanned by the rows of a
//! multivariate Vandermonde matrix in the spike eigenvalues. Shifting one
//! exponent by one is multiplication by `diag(λ^t)`, so `B^t = Z^t_D (Z^t_U)⁺`
//! is similar to that diagonal, with the same unknown similarity for every
//! `t`. A random combination of the `B^t` recovers the shared eigenbasis.

use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigenmatrix::{build_eigenmatrices, BuildConfig, BuildDiagnostics, EigenmatrixSet, Mode};
use crate::error::{StageExt, Warning};
use crate::grid::GridKind;
use crate::kernel::{Field, Kernel, SampleSet};
use crate::linalg::{self, CMat};
use crate::{seed, Error, Points, Result, C64};

/// Coordinates beyond `1 + OUT_OF_BOX_SLACK` are flagged before clamping.
pub const OUT_OF_BOX_SLACK: f64 = 0.05;
/// Refinement never moves a spike outside `[−REFINE_BOX, REFINE_BOX]^d`.
pub const REFINE_BOX: f64 = 1.05;
pub const RANK_WARN_RATIO: f64 = 1e-13;
pub const SHIFT_COND_WARN: f64 = 1e12;
pub const WEIGHT_COND_WARN: f64 = 1e12;
/// Redraws of `β` after the first attempt.
pub const BETA_REDRAWS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpikeCount {
    Fixed(usize),
    /// Estimated from a gap in the Krylov singular values; `max_spikes`
    /// sizes the Krylov matrix.
    Auto {
        gap_threshold: f64,
        max_spikes: usize,
    },
}

impl SpikeCount {
    pub fn auto() -> Self {
        SpikeCount::Auto {
            gap_threshold: 1e-3,
            max_spikes: 8,
        }
    }

    fn sizing(&self) -> usize {
        match *self {
            SpikeCount::Fixed(n) => n,
            SpikeCount::Auto { max_spikes, .. } => max_spikes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub n_x: SpikeCount,
    /// Multi-index degree cap `L`; `None` picks [`default_degree`].
    pub degree: Option<usize>,
    pub beta_seed: u64,
    pub refine: bool,
    pub cond_p_limit: f64,
}

impl RecoveryConfig {
    pub fn new(n_x: usize) -> Self {
        RecoveryConfig {
            n_x: SpikeCount::Fixed(n_x),
            degree: None,
            beta_seed: 0,
            refine: true,
            cond_p_limit: 1e12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.n_x {
            SpikeCount::Fixed(0) => return Err(Error::InvalidArgument("n_x must be at least 1".into())),
            SpikeCount::Auto {
                gap_threshold,
                max_spikes,
            } => {
                if !(gap_threshold > 0.0 && gap_threshold < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gap_threshold must lie in (0, 1), got {gap_threshold}"
                    )));
                }
                if max_spikes == 0 {
                    return Err(Error::InvalidArgument("max_spikes must be at least 1".into()));
                }
            }
            _ => {}
        }
        if self.degree == Some(0) {
            return Err(Error::InvalidArgument("degree L must be at least 1".into()));
        }
        if !(self.cond_p_limit > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cond_p_limit must exceed 1, got {}",
                self.cond_p_limit
            )));
        }
        Ok(())
    }

    /// `L` actually used with `m` eigenmatrices.
    pub fn resolved_degree(&self, m: usize) -> usize {
        self.degree.unwrap_or_else(|| default_degree(self.n_x.sizing(), m))
    }
}

/// Smallest `L ≥ 2` with `L·(L+1)^(m−1) ≥ n_x + 1`.
pub fn default_degree(n_x: usize, m: usize) -> usize {
    let mut l = 2usize;
    while l.saturating_mul((l + 1).saturating_pow(m.saturating_sub(1) as u32)) < n_x + 1 {
        l += 1;
    }
    l
}

/// All `α ∈ {0..L}^m` in lexicographic order, last index fastest.
pub fn multi_indices(degree: usize, m: usize) -> Vec<Vec<usize>> {
    let total = (degree + 1).pow(m as u32);
    let mut out = Vec::with_capacity(total);
    let mut a = vec![0usize; m];
    for _ in 0..total {
        out.push(a.clone());
        for t in (0..m).rev() {
            if a[t] < degree {
                a[t] += 1;
                break;
            }
            a[t] = 0;
        }
    }
    out
}

fn flat_index(alpha: &[usize], degree: usize) -> usize {
    alpha.iter().fold(0, |acc, &a| acc * (degree + 1) + a)
}

/// `K = [M^α ũ]`, one column per multi-index, built by progressive application.
pub fn krylov_columns(set: &EigenmatrixSet, u: &[C64], degree: usize) -> Result<CMat> {
    if u.len() != set.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: set.n_samples(),
            got: u.len(),
        });
    }
    if degree == 0 {
        return Err(Error::InvalidArgument("degree L must be at least 1".into()));
    }
    let m = set.count();
    let idx = multi_indices(degree, m);
    let mut k = Mat::<C64>::zeros(u.len(), idx.len());
    k.col_as_slice_mut(0).copy_from_slice(u);
    for (j, alpha) in idx.iter().enumerate().skip(1) {
        let t = alpha.iter().rposition(|&a| a > 0).expect("nonzero multi-index");
        let mut prev = alpha.clone();
        prev[t] -= 1;
        let src = set.apply(t, k.col_as_slice(flat_index(&prev, degree)));
        k.col_as_slice_mut(j).copy_from_slice(&src);
    }
    Ok(k)
}

#[derive(Clone, Debug)]
pub struct RowSpace {
    /// `Ṽ*`, `n_x × columns`.
    pub vstar: CMat,
    pub singular_values: Vec<f64>,
    pub warning: Option<Warning>,
}

/// Top-`n_x` right singular vectors of `K`, conjugate-transposed.
pub fn row_space(k: &CMat, n_x: usize) -> Result<RowSpace> {
    if n_x == 0 || n_x > k.ncols() || n_x > k.nrows() {
        return Err(Error::InvalidArgument(format!(
            "n_x = {n_x} needs 1 ≤ n_x ≤ min(rows, columns) = {}",
            k.nrows().min(k.ncols())
        )));
    }
    let svd = linalg::thin_svd(k.as_ref())?;
    let vstar = svd.v.as_ref().subcols(0, n_x).adjoint().to_owned();
    let ratio = svd.s[n_x - 1] / svd.s[0];
    let warning = (!(ratio >= RANK_WARN_RATIO)).then_some(Warning::RankDeficientKrylov { ratio });
    Ok(RowSpace {
        vstar,
        singular_values: svd.s,
        warning,
    })
}

/// Column positions kept by `Z^t_U` (`α^t ≤ L−1`) and `Z^t_D` (`α^t ≥ 1`).
pub fn shift_indices(t: usize, degree: usize, m: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if degree == 0 {
        return Err(Error::InvalidArgument("degree L must be at least 1".into()));
    }
    if t >= m {
        return Err(Error::InvalidArgument(format!(
            "dimension index {t} out of range for m = {m}"
        )));
    }
    let idx = multi_indices(degree, m);
    let up = idx
        .iter()
        .enumerate()
        .filter(|(_, a)| a[t] < degree)
        .map(|(j, _)| j)
        .collect();
    let down = idx
        .iter()
        .enumerate()
        .filter(|(_, a)| a[t] >= 1)
        .map(|(j, _)| j)
        .collect();
    Ok((up, down))
}

pub fn shift_submatrices(vstar: &CMat, t: usize, degree: usize, m: usize) -> Result<(CMat, CMat)> {
    let expected = (degree + 1).pow(m as u32);
    if vstar.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: vstar.ncols(),
        });
    }
    let (up, down) = shift_indices(t, degree, m)?;
    Ok((
        linalg::select_cols(vstar.as_ref(), &up),
        linalg::select_cols(vstar.as_ref(), &down),
    ))
}

/// `B = Z_D · pinv(Z_U)` and `cond(Z_U)`.
pub fn transfer_matrix(zu: &CMat, zd: &CMat) -> Result<(CMat, f64)> {
    if zu.nrows() != zd.nrows() || zu.ncols() != zd.ncols() {
        return Err(Error::DimensionMismatch {
            expected: zu.ncols(),
            got: zd.ncols(),
        });
    }
    let (p, cond) = linalg::pinv(zu.as_ref())?;
    Ok((zd * &p, cond))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointExtraction {
    /// `coords[k][t]`: `t`-th extracted eigenvalue of spike `k`.
    pub coords: Vec<Vec<C64>>,
    pub beta: Vec<C64>,
    #[serde(with = "crate::serde_float")]
    pub cond_p: f64,
    /// Draws of `β` used, starting at 1.
    pub attempts: usize,
    /// Largest relative off-diagonal Frobenius mass of `P⁻¹ B^t P`.
    pub off_diagonal: f64,
}

/// Shared eigenbasis of a random unit-complex combination `Σ β^t B^t`.
pub fn joint_extract(bs: &[CMat], beta_seed: u64, cond_p_limit: f64) -> Result<JointExtraction> {
    let n = bs.first().map_or(0, |b| b.nrows());
    if n == 0 || bs.iter().any(|b| b.nrows() != n || b.ncols() != n) {
        return Err(Error::InvalidArgument(
            "transfer matrices must be square and of equal size".into(),
        ));
    }
    let mut last_cond = f64::NAN;
    for attempt in 0..=BETA_REDRAWS {
        let mut rng = seed::stream(beta_seed, "beta", &[attempt as u64]);
        let beta: Vec<C64> = bs
            .iter()
            .map(|_| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.random::<f64>()))
            .collect();
        let mut b = Mat::<C64>::zeros(n, n);
        for (bt, w) in bs.iter().zip(&beta) {
            b += bt * faer::Scale(*w);
        }
        let (_, p) = linalg::eig(b.as_ref())?;
        let cond_p = linalg::condition_number(p.as_ref())?;
        last_cond = cond_p;
        if !(cond_p <= cond_p_limit) {
            continue;
        }
        let pinv = linalg::inverse(p.as_ref());
        let mut coords = vec![Vec::with_capacity(bs.len()); n];
        let mut off_diagonal = 0.0f64;
        for bt in bs {
            let d = &pinv * bt * &p;
            let (mut diag, mut off) = (0.0, 0.0);
            for j in 0..n {
                for i in 0..n {
                    if i == j {
                        diag += d[(i, j)].norm_sqr();
                    } else {
                        off += d[(i, j)].norm_sqr();
                    }
                }
            }
            let total = diag + off;
            if total > 0.0 {
                off_diagonal = off_diagonal.max((off / total).sqrt());
            }
            for (k, row) in coords.iter_mut().enumerate() {
                row.push(d[(k, k)]);
            }
        }
        return Ok(JointExtraction {
            coords,
            beta,
            cond_p,
            attempts: attempt + 1,
            off_diagonal,
        });
    }
    Err(Error::IllConditionedEigenbasis {
        cond: last_cond,
        attempts: BETA_REDRAWS + 1,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<C64>,
    pub ls_residual: f64,
    pub cond: f64,
    pub warning: Option<Warning>,
}

/// Kernel matrix `[G(s_j, x_k)]`, unnormalized.
fn kernel_matrix(kernel: &Kernel, samples: &SampleSet, spikes: &Points) -> Result<CMat> {
    let mut g = Mat::<C64>::zeros(samples.len(), spikes.len());
    for (k, x) in spikes.iter().enumerate() {
        for (j, s) in samples.points.iter().enumerate() {
            g[(j, k)] = kernel.evaluate(s, x)?;
        }
    }
    Ok(g)
}

fn relative_misfit(g: &CMat, w: &[C64], u: &[C64]) -> f64 {
    let gw = linalg::matvec(g.as_ref(), w);
    let num: f64 = gw.iter().zip(u).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den = linalg::norm2(u);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Least-squares weights at fixed spike positions; real weights for real kernels.
pub fn solve_weights(kernel: &Kernel, samples: &SampleSet, spikes: &Points, u: &[C64]) -> Result<WeightFit> {
    if u.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: u.len(),
        });
    }
    if spikes.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: spikes.dim(),
        });
    }
    if spikes.is_empty() || spikes.len() > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ n_x ≤ n_s, got n_x = {} with n_s = {}",
            spikes.len(),
            samples.len()
        )));
    }
    let g = kernel_matrix(kernel, samples, spikes)?;
    let (weights, cond) = match kernel.field() {
        Field::Complex => linalg::lstsq(g.as_ref(), u)?,
        Field::Real => {
            // stack real and imaginary parts so the unknowns stay real
            let (ns, nx) = (g.nrows(), g.ncols());
            let a = Mat::from_fn(2 * ns, nx, |i, k| if i < ns { g[(i, k)].re } else { g[(i - ns, k)].im });
            let b: Vec<f64> = u.iter().map(|v| v.re).chain(u.iter().map(|v| v.im)).collect();
            let (w, cond) = linalg::lstsq_real(a.as_ref(), &b)?;
            (w.into_iter().map(|v| C64::new(v, 0.0)).collect(), cond)
        }
    };
    let ls_residual = relative_misfit(&g, &weights, u);
    let warning = (!(cond <= WEIGHT_COND_WARN)).then_some(Warning::CollinearSpikes { cond });
    Ok(WeightFit {
        weights,
        ls_residual,
        cond,
        warning,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub spikes: Points,
    pub weights: Vec<C64>,
    pub iterations: usize,
    /// Relative misfit before and after.
    pub initial_misfit: f64,
    pub final_misfit: f64,
    /// Set when the first Jacobian was rank deficient and nothing moved.
    pub skipped: bool,
    /// Misfit after each accepted step, starting with the initial one.
    pub history: Vec<f64>,
}

pub const REFINE_MAX_ITER: usize = 50;
const REFINE_TOL: f64 = 1e-12;
const REFINE_MAX_HALVINGS: usize = 60;
const JACOBIAN_COND_LIMIT: f64 = 1e12;

struct Model<'a> {
    kernel: &'a Kernel,
    samples: &'a SampleSet,
    u: &'a [C64],
    dim: usize,
    n: usize,
    complex_weights: bool,
}

impl Model<'_> {
    fn weight_params(&self) -> usize {
        if self.complex_weights {
            2
        } else {
            1
        }
    }

    fn stride(&self) -> usize {
        self.dim + self.weight_params()
    }

    fn pack(&self, spikes: &Points, weights: &[C64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n * self.stride());
        for (x, w) in spikes.iter().zip(weights) {
            p.extend_from_slice(x);
            p.push(w.re);
            if self.complex_weights {
                p.push(w.im);
            }
        }
        p
    }

    fn unpack(&self, p: &[f64]) -> (Points, Vec<C64>) {
        let mut coords = Vec::with_capacity(self.n * self.dim);
        let mut weights = Vec::with_capacity(self.n);
        for chunk in p.chunks(self.stride()) {
            coords.extend_from_slice(&chunk[..self.dim]);
            let im = if self.complex_weights { chunk[self.dim + 1] } else { 0.0 };
            weights.push(C64::new(chunk[self.dim], im));
        }
        (Points::new(self.dim, coords).expect("consistent layout"), weights)
    }

    /// Complex residual `G(x) w − ũ`.
    fn residual(&self, p: &[f64]) -> Result<Vec<C64>> {
        let (x, w) = self.unpack(p);
        let mut r: Vec<C64> = self.u.iter().map(|v| -v).collect();
        for (xk, wk) in x.iter().zip(&w) {
            for (rj, s) in r.iter_mut().zip(self.samples.points.iter()) {
                *rj += self.kernel.evaluate(s, xk)? * wk;
            }
        }
        Ok(r)
    }

    /// Real Jacobian of `[Re r; Im r]` with respect to the packed parameters.
    fn jacobian(&self, p: &[f64]) -> Result<Mat<f64>> {
        let (x, w) = self.unpack(p);
        let ns = self.samples.len();
        let mut jac = Mat::<f64>::zeros(2 * ns, p.len());
        let mut grad = vec![C64::new(0.0, 0.0); self.dim];
        for (k, (xk, wk)) in x.iter().zip(&w).enumerate() {
            let base = k * self.stride();
            for (j, s) in self.samples.points.iter().enumerate() {
                let g = self.kernel.value_and_gradient(s, xk, &mut grad)?;
                for t in 0..self.dim {
                    let d = grad[t] * wk;
                    jac[(j, base + t)] = d.re;
                    jac[(ns + j, base + t)] = d.im;
                }
                jac[(j, base + self.dim)] = g.re;
                jac[(ns + j, base + self.dim)] = g.im;
                if self.complex_weights {
                    // ∂/∂Im w = i G
                    jac[(j, base + self.dim + 1)] = -g.im;
                    jac[(ns + j, base + self.dim + 1)] = g.re;
                }
            }
        }
        Ok(jac)
    }

    fn clamp(&self, p: &mut [f64]) {
        let stride = self.stride();
        for chunk in p.chunks_mut(stride) {
            for c in &mut chunk[..self.dim] {
                *c = c.clamp(-REFINE_BOX, REFINE_BOX);
            }
        }
    }
}

fn misfit_of(r: &[C64], scale: f64) -> f64 {
    linalg::norm2(r) / scale
}

/// Damped Gauss–Newton on `Σ_j |Σ_k G(s_j, x_k) w_k − ũ_j|²` over positions and weights.
pub fn refine_spikes(
    kernel: &Kernel,
    samples: &SampleSet,
    u: &[C64],
    spikes: &Points,
    weights: &[C64],
) -> Result<Refinement> {
    if u.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: u.len(),
        });
    }
    if spikes.len() != weights.len() || spikes.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: spikes.len(),
            got: weights.len(),
        });
    }
    let model = Model {
        kernel,
        samples,
        u,
        dim: spikes.dim(),
        n: spikes.len(),
        complex_weights: kernel.field() == Field::Complex,
    };
    let scale = {
        let n = linalg::norm2(u);
        if n > 0.0 {
            n
        } else {
            1.0
        }
    };
    let mut p = model.pack(spikes, weights);
    let mut r = model.residual(&p)?;
    let mut f = misfit_of(&r, scale);
    let initial = f;
    let mut history = vec![f];
    let mut iterations = 0;
    let unchanged = |skipped: bool, history: Vec<f64>| Refinement {
        spikes: spikes.clone(),
        weights: weights.to_vec(),
        iterations: 0,
        initial_misfit: initial,
        final_misfit: initial,
        skipped,
        history,
    };

    while iterations < REFINE_MAX_ITER && f > 0.0 {
        let jac = model.jacobian(&p)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v.re).chain(r.iter().map(|v| -v.im)).collect();
        let (step, cond) = linalg::lstsq_real(jac.as_ref(), &rhs)?;
        if iterations == 0 && !(cond <= JACOBIAN_COND_LIMIT) {
            return Ok(unchanged(true, history));
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..REFINE_MAX_HALVINGS {
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            model.clamp(&mut trial);
            let rt = model.residual(&trial)?;
            let ft = misfit_of(&rt, scale);
            if ft < f {
                accepted = Some((trial, rt, ft));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, rt, ft)) = accepted else { break };
        let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let improvement = (f - ft) / f;
        p = trial;
        r = rt;
        f = ft;
        history.push(f);
        iterations += 1;
        if improvement < REFINE_TOL || moved < REFINE_TOL {
            break;
        }
    }
    if iterations == 0 {
        return Ok(unchanged(false, history));
    }
    let (spikes, weights) = model.unpack(&p);
    Ok(Refinement {
        spikes,
        weights,
        iterations,
        initial_misfit: initial,
        final_misfit: f,
        skipped: false,
        history,
    })
}

/// Smallest `r` with `σ_{r+1}/σ_r < gap`; the full length and `true` when no gap exists.
pub fn estimate_n_x(singular_values: &[f64], gap_threshold: f64) -> Result<(usize, bool)> {
    if singular_values.is_empty() {
        return Err(Error::InvalidArgument("no singular values to inspect".into()));
    }
    for r in 1..singular_values.len() {
        if !(singular_values[r] >= gap_threshold * singular_values[r - 1]) {
            return Ok((r, false));
        }
    }
    Ok((singular_values.len(), true))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    pub n_x: usize,
    pub degree: usize,
    pub krylov_columns: usize,
    pub krylov_singular_values: Vec<f64>,
    /// `cond(Z^t_U)` per dimension.
    #[serde(with = "crate::serde_float::vec")]
    pub shift_conditions: Vec<f64>,
    #[serde(with = "crate::serde_float")]
    pub cond_p: f64,
    pub beta: Vec<C64>,
    pub beta_attempts: usize,
    pub off_diagonal: f64,
    /// Extracted complex eigenvalues per spike (rows aligned with `spikes_raw`).
    pub eigenvalues: Vec<Vec<C64>>,
    /// Largest imaginary magnitude discarded per spike (per-dimension mode).
    pub imaginary_parts: Vec<f64>,
    pub max_abs_coordinate: f64,
    pub out_of_box: bool,
    #[serde(with = "crate::serde_float")]
    pub weight_cond: f64,
    /// Residual at the raw spikes with least-squares weights.
    pub raw_ls_residual: f64,
    pub refinement: Option<Refinement>,
    pub no_gap: bool,
    pub build: BuildDiagnostics,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub spikes_raw: Points,
    pub spikes_refined: Points,
    pub weights_raw: Vec<C64>,
    pub weights: Vec<C64>,
    pub ls_residual: f64,
    pub diagnostics: RecoveryDiagnostics,
}

impl RecoveryResult {
    pub fn n_x(&self) -> usize {
        self.spikes_refined.len()
    }
}

fn check_recoverable(kernel: &Kernel, build: &BuildConfig) -> Result<()> {
    if matches!(kernel, Kernel::LogPotential) {
        return Err(Error::UnsupportedKernel(
            "log_potential admits no accurate eigenmatrix; use it only for diagnostics".into(),
        ));
    }
    if build.grid.kind != GridKind::Chebyshev {
        return Err(Error::InvalidArgument(
            "recovery reads real spike coordinates and needs a chebyshev proxy grid".into(),
        ));
    }
    Ok(())
}

/// Full pipeline: eigenmatrices, Krylov matrix, row space, transfer
/// matrices, joint extraction, weights and optional refinement.
pub fn recover(
    kernel: &Kernel,
    samples: &SampleSet,
    u: &[C64],
    build: &BuildConfig,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    check_recoverable(kernel, build).stage("validate")?;
    config.validate().stage("validate")?;
    if u.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: u.len(),
        })
        .stage("validate");
    }
    let grid = build.grid.build(samples.dim()).stage("build")?;
    let set = build_eigenmatrices(kernel, samples, &grid, build).stage("build")?;
    recover_with_set(&set, kernel, samples, u, config)
}

/// [`recover`] with prebuilt eigenmatrices, e.g. shared across noise levels.
pub fn recover_with_set(
    set: &EigenmatrixSet,
    kernel: &Kernel,
    samples: &SampleSet,
    u: &[C64],
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    if matches!(kernel, Kernel::LogPotential) {
        return Err(Error::UnsupportedKernel(
            "log_potential cannot be used for recovery".into(),
        ))
        .stage("validate");
    }
    if set.grid_kind() != GridKind::Chebyshev {
        return Err(Error::InvalidArgument("recovery needs a chebyshev proxy grid".into())).stage("validate");
    }
    config.validate().stage("validate")?;
    let dim = set.dim();
    let m = set.count();
    let mut warnings = set.diagnostics().warnings.clone();

    let norm = linalg::norm2(u);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::ZeroVector).stage("krylov");
    }
    let un: Vec<C64> = u.iter().map(|v| v / norm).collect();
    let degree = config.resolved_degree(m);
    let k = krylov_columns(set, &un, degree).stage("krylov")?;

    let sv = linalg::singular_values(k.as_ref()).stage("row_space")?;
    let (n_x, no_gap) = match config.n_x {
        SpikeCount::Fixed(n) => (n, false),
        SpikeCount::Auto {
            gap_threshold,
            max_spikes,
        } => {
            let (n, flag) = estimate_n_x(&sv, gap_threshold).stage("row_space")?;
            if flag {
                warnings.push(Warning::NoSpectralGap);
            }
            (n.min(max_spikes), flag)
        }
    };
    let rs = row_space(&k, n_x).stage("row_space")?;
    warnings.extend(rs.warning.clone());

    let mut bs = Vec::with_capacity(m);
    let mut shift_conditions = Vec::with_capacity(m);
    for t in 0..m {
        let (zu, zd) = shift_submatrices(&rs.vstar, t, degree, m).stage("transfer")?;
        if zu.ncols() < n_x {
            return Err(Error::InvalidArgument(format!(
                "degree L = {degree} leaves {} shifted columns for {n_x} spikes",
                zu.ncols()
            )))
            .stage("transfer");
        }
        let (b, cond) = transfer_matrix(&zu, &zd).stage("transfer")?;
        if !(cond <= SHIFT_COND_WARN) {
            warnings.push(Warning::IllConditionedShift { dim: t, cond });
        }
        bs.push(b);
        shift_conditions.push(cond);
    }

    let joint = joint_extract(&bs, config.beta_seed, config.cond_p_limit).stage("extract")?;
    if joint.attempts > 1 {
        warnings.push(Warning::BetaRedrawn {
            attempts: joint.attempts,
        });
    }

    // spike coordinates from the extracted eigenvalues
    let mut rows: Vec<(Vec<f64>, Vec<C64>, f64)> = joint
        .coords
        .iter()
        .map(|c| {
            let (x, imag) = match (set.mode(), dim) {
                (Mode::ComplexEmbedding, 2) => (vec![c[0].re, c[0].im], 0.0),
                _ => (
                    c.iter().map(|z| z.re).collect(),
                    c.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
                ),
            };
            (x, c.clone(), imag)
        })
        .collect();
    rows.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let max_abs = rows
        .iter()
        .flat_map(|r| r.0.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let out_of_box = !(max_abs <= 1.0 + OUT_OF_BOX_SLACK);
    if out_of_box {
        warnings.push(Warning::SpikesOutOfBox { max_abs });
    }
    let mut coords = Vec::with_capacity(n_x * dim);
    for r in &rows {
        coords.extend(r.0.iter().map(|c| if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) }));
    }
    let spikes_raw = Points::new(dim, coords).stage("extract")?;

    let fit = solve_weights(kernel, samples, &spikes_raw, u).stage("weights")?;
    warnings.extend(fit.warning.clone());

    let (spikes_refined, weights, ls_residual, refinement) = if config.refine {
        let r = refine_spikes(kernel, samples, u, &spikes_raw, &fit.weights).stage("refine")?;
        if r.skipped {
            warnings.push(Warning::RefinementSkipped);
        }
        (r.spikes.clone(), r.weights.clone(), r.final_misfit, Some(r))
    } else {
        (spikes_raw.clone(), fit.weights.clone(), fit.ls_residual, None)
    };

    Ok(RecoveryResult {
        spikes_raw,
        spikes_refined,
        weights_raw: fit.weights.clone(),
        weights,
        ls_residual,
        diagnostics: RecoveryDiagnostics {
            n_x,
            degree,
            krylov_columns: k.ncols(),
            krylov_singular_values: sv,
            shift_conditions,
            cond_p: joint.cond_p,
            beta: joint.beta,
            beta_attempts: joint.attempts,
            off_diagonal: joint.off_diagonal,
            eigenvalues: rows.iter().map(|r| r.1.clone()).collect(),
            imaginary_parts: rows.iter().map(|r| r.2).collect(),
            max_abs_coordinate: max_abs,
            out_of_box,
            weight_cond: fit.cond,
            raw_ls_residual: fit.ls_residual,
            refinement,
            no_gap,
            build: set.diagnostics().clone(),
            warnings,
        },
    })
}
