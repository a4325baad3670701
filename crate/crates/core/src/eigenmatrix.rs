//! Eigenmatrices `M^t = Ĝ Λ^t Ĝ⁺`.
//!
//! `Ĝ` holds the normalized kernel vectors `ĝ(a_τ)` at the proxy nodes as
//! columns and `Λ^t` the prescribed eigenvalues at those nodes: the `t`-th
//! node coordinate in per-dimension mode, or `γ(a) = a¹ + i a²` in the 2D
//! complex embedding. `Ĝ⁺` drops singular values below `δ·σ₁`; `δ` is
//! raised by decades until every `‖M^t‖₂ ≤ C`.
//!
//! Each `M^t` is stored dense. With `Ĝ = U Σ V*` the build also keeps
//! `M^t = F^t U_r*`, `F^t = U H^t`, `H^t = Σ V* Λ^t V_r Σ_r⁻¹`: norms come
//! from the smaller `H^t` and commutators from the factors.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::Warning;
use crate::grid::{gamma_embed, GridKind, NodeGrid};
use crate::kernel::{normalize_in_place, Kernel, SampleSet};
use crate::linalg::{self, CMat};
use crate::{Error, Execution, Result, C64};

/// Eigenrelation residuals above this are reported as warnings.
pub const RESIDUAL_WARN: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One eigenmatrix per coordinate, `λ^t(x) = x^t`.
    PerDimension,
    /// A single eigenmatrix with `λ(x) = x¹ + i x²` (2D) or `λ(x) = x` (1D).
    ComplexEmbedding,
}

impl Mode {
    /// Complex embedding in 2D, per-dimension otherwise.
    pub fn default_for(dim: usize) -> Mode {
        if dim == 2 {
            Mode::ComplexEmbedding
        } else {
            Mode::PerDimension
        }
    }

    /// Number of eigenmatrices built in `dim` dimensions.
    pub fn matrix_count(self, dim: usize) -> usize {
        match self {
            Mode::PerDimension => dim,
            Mode::ComplexEmbedding => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub kind: GridKind,
    pub n_per_dim: usize,
}

impl GridSpec {
    pub fn build(&self, dim: usize) -> Result<NodeGrid> {
        crate::grid::product_grid(self.kind, dim, self.n_per_dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    /// Relative singular-value cutoff `δ`.
    pub sv_threshold_rel: f64,
    /// Cap `C` on `‖M^t‖₂`.
    pub norm_cap: f64,
    /// `cond(Ĝ)` above this raises a warning.
    pub cond_limit: f64,
    pub mode: Mode,
    pub grid: GridSpec,
    #[serde(skip)]
    pub execution: Execution,
}

impl BuildConfig {
    pub fn new(mode: Mode, grid: GridSpec) -> Self {
        BuildConfig {
            sv_threshold_rel: 1e-8,
            norm_cap: 10.0,
            cond_limit: 1e7,
            mode,
            grid,
            execution: Execution::default(),
        }
    }

    /// Defaults for a `dim`-dimensional real problem on a Chebyshev grid.
    pub fn for_dim(dim: usize, n_per_dim: usize) -> Self {
        Self::new(
            Mode::default_for(dim),
            GridSpec {
                kind: GridKind::Chebyshev,
                n_per_dim,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sv_threshold_rel;
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sv_threshold_rel must lie in (0, 1), got {d}"
            )));
        }
        if !(self.norm_cap > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "norm_cap must exceed 1, got {}",
                self.norm_cap
            )));
        }
        if !(self.cond_limit > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cond_limit must exceed 1, got {}",
                self.cond_limit
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    #[serde(with = "crate::serde_float")]
    pub cond_ghat: f64,
    pub ghat_rows: usize,
    pub ghat_cols: usize,
    /// Number of singular values kept in `Ĝ⁺`.
    pub effective_rank: usize,
    /// Threshold `δ` actually used after escalation.
    pub threshold_used: f64,
    pub escalations: usize,
    /// `‖M^t‖₂` per matrix.
    pub norms: Vec<f64>,
    /// `max_τ ‖M^t ĝ(a_τ) − λ^t_τ ĝ(a_τ)‖₂` per matrix.
    pub on_grid_residuals: Vec<f64>,
    pub on_grid_residual: f64,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug)]
pub struct EigenmatrixSet {
    matrices: Vec<CMat>,
    left: Vec<CMat>,
    right: CMat,
    maps: Vec<Vec<C64>>,
    mode: Mode,
    dim: usize,
    grid_kind: GridKind,
    diagnostics: BuildDiagnostics,
}

impl EigenmatrixSet {
    /// `M^1 … M^m`, each `n_s × n_s`.
    pub fn matrices(&self) -> &[CMat] {
        &self.matrices
    }

    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    /// `M^t x`.
    pub fn apply(&self, t: usize, x: &[C64]) -> Vec<C64> {
        linalg::matvec(self.matrices[t].as_ref(), x)
    }

    /// `(F^t, U_r)` with `M^t = F^t U_r*`.
    pub fn factors(&self, t: usize) -> (&CMat, &CMat) {
        (&self.left[t], &self.right)
    }

    pub fn n_samples(&self) -> usize {
        self.right.nrows()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Dimension of the parameter space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_kind(&self) -> GridKind {
        self.grid_kind
    }

    /// Prescribed eigenvalues at the proxy nodes, one list per matrix.
    pub fn eigenvalue_maps(&self) -> &[Vec<C64>] {
        &self.maps
    }

    pub fn diagnostics(&self) -> &BuildDiagnostics {
        &self.diagnostics
    }

    /// Prescribed eigenvalues `λ^t(x)` of an arbitrary real point.
    pub fn eigenvalues_at(&self, x: &[f64]) -> Result<Vec<C64>> {
        point_eigenvalues(self.mode, x)
    }
}

fn point_eigenvalues(mode: Mode, x: &[f64]) -> Result<Vec<C64>> {
    Ok(match (mode, x.len()) {
        (Mode::PerDimension, _) | (Mode::ComplexEmbedding, 1) => x.iter().map(|&c| C64::new(c, 0.0)).collect(),
        (Mode::ComplexEmbedding, _) => vec![gamma_embed(x)?],
    })
}

/// The `Λ^t` diagonals for a grid.
pub fn eigenvalue_maps(grid: &NodeGrid, mode: Mode) -> Result<Vec<Vec<C64>>> {
    match mode {
        Mode::PerDimension => Ok((0..grid.dim()).map(|t| grid.eigenvalue_map(t)).collect()),
        Mode::ComplexEmbedding => match (grid.dim(), grid.kind()) {
            (1, _) => Ok(vec![grid.eigenvalue_map(0)]),
            (2, GridKind::Chebyshev) => {
                let (a, b) = (grid.eigenvalue_map(0), grid.eigenvalue_map(1));
                Ok(vec![a.iter().zip(&b).map(|(x, y)| C64::new(x.re, y.re)).collect()])
            }
            (d, kind) => Err(Error::InvalidArgument(format!(
                "complex embedding needs a 1D grid or a 2D chebyshev grid, got {d}D {kind:?}"
            ))),
        },
    }
}

fn check_compat(kernel: &Kernel, samples: &SampleSet, grid: &NodeGrid) -> Result<()> {
    kernel.validate()?;
    samples.validate_for(kernel)?;
    if samples.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: grid.dim(),
        });
    }
    Ok(())
}

/// Normalized kernel vector at a proxy node (real or complex).
fn node_vector(kernel: &Kernel, samples: &SampleSet, grid: &NodeGrid, tau: usize) -> Result<Vec<C64>> {
    let mut g = match grid.real_node(tau) {
        Some(x) => samples
            .points
            .iter()
            .map(|s| kernel.evaluate(s, &x))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let z = grid.node(tau);
            samples
                .points
                .iter()
                .map(|s| kernel.evaluate_complex(s, z))
                .collect::<Result<Vec<_>>>()?
        }
    };
    normalize_in_place(&mut g)?;
    Ok(g)
}

/// `Ĝ = [ĝ(a_1) … ĝ(a_{n_a})]`, columns in grid order.
pub fn assemble_ghat(kernel: &Kernel, samples: &SampleSet, grid: &NodeGrid, exec: Execution) -> Result<CMat> {
    check_compat(kernel, samples, grid)?;
    let ns = samples.len();
    let na = grid.len();
    let mut ghat = Mat::<C64>::zeros(ns, na);
    let cols = exec.try_map(na, |tau| node_vector(kernel, samples, grid, tau))?;
    for (tau, col) in cols.into_iter().enumerate() {
        ghat.col_as_slice_mut(tau).copy_from_slice(&col);
    }
    Ok(ghat)
}

#[derive(Clone, Debug)]
pub struct ThresholdedPinv {
    pub pinv: CMat,
    pub effective_rank: usize,
    pub threshold: f64,
}

/// `Ĝ⁺ = V Σ_kept⁻¹ U*`, dropping singular values `< δ·σ₁`.
pub fn thresholded_pinv(ghat: MatRef<'_, C64>, delta: f64) -> Result<ThresholdedPinv> {
    let svd = linalg::thin_svd(ghat)?;
    let r = svd.rank_at(delta);
    if r == 0 {
        return Err(Error::Degenerate);
    }
    Ok(ThresholdedPinv {
        pinv: svd.pinv_rank(r),
        effective_rank: r,
        threshold: delta,
    })
}

pub fn build_eigenmatrices(
    kernel: &Kernel,
    samples: &SampleSet,
    grid: &NodeGrid,
    config: &BuildConfig,
) -> Result<EigenmatrixSet> {
    config.validate()?;
    let maps = eigenvalue_maps(grid, config.mode)?;
    let ghat = assemble_ghat(kernel, samples, grid, config.execution)?;
    build_from_ghat(ghat, maps, config.mode, grid.dim(), grid.kind(), config)
}

/// Builds the eigenmatrices from an assembled `Ĝ` and the eigenvalue diagonals.
pub fn build_from_ghat(
    ghat: CMat,
    maps: Vec<Vec<C64>>,
    mode: Mode,
    dim: usize,
    grid_kind: GridKind,
    config: &BuildConfig,
) -> Result<EigenmatrixSet> {
    config.validate()?;
    let (ns, na) = (ghat.nrows(), ghat.ncols());
    if maps.is_empty() || maps.iter().any(|m| m.len() != na) {
        return Err(Error::DimensionMismatch {
            expected: na,
            got: maps.first().map_or(0, Vec::len),
        });
    }
    let exec = config.execution;
    let svd = linalg::thin_svd(ghat.as_ref())?;
    drop(ghat);
    let cond = svd.condition_number();
    let s0 = svd.s.first().copied().unwrap_or(0.0);
    if s0 == 0.0 {
        return Err(Error::Degenerate);
    }
    let k = svd.s.len();
    let sv = &svd.s;
    // T^t = V* Λ^t V, shared by every threshold tried
    let tmat: Vec<CMat> = exec.map(maps.len(), |t| {
        svd.v.adjoint() * linalg::scale_rows_complex(svd.v.as_ref(), &maps[t])
    });
    let reduced = |t: usize, r: usize| Mat::from_fn(k, r, |i, j| tmat[t][(i, j)] * (sv[i] / sv[j]));

    let mut delta = config.sv_threshold_rel;
    let mut escalations = 0;
    let (rank, norms) = loop {
        let r = svd.rank_at(delta);
        if r == 0 {
            return Err(Error::Degenerate);
        }
        let hs: Vec<CMat> = exec.map(maps.len(), |t| reduced(t, r));
        // a power-iteration lower bound already above the cap settles the step
        let bound = exec
            .map(maps.len(), |t| norm_lower_bound(&hs[t]))
            .into_iter()
            .fold(0.0, f64::max);
        let worst = if bound > config.norm_cap {
            bound
        } else {
            let norms = exec.try_map(maps.len(), |t| linalg::spectral_norm(hs[t].as_ref()))?;
            let worst = norms.iter().copied().fold(0.0, f64::max);
            if worst <= config.norm_cap {
                break (r, norms);
            }
            worst
        };
        if delta * 10.0 >= 1.0 {
            return Err(Error::NormCapUnreachable {
                cap: config.norm_cap,
                last_norm: worst,
            });
        }
        delta *= 10.0;
        escalations += 1;
    };

    let u_r = svd.u.as_ref().subcols(0, rank).to_owned();
    let v_r = svd.v.as_ref().subcols(0, rank);
    let mut left = Vec::with_capacity(maps.len());
    let mut on_grid = Vec::with_capacity(maps.len());
    for t in 0..maps.len() {
        let h = reduced(t, rank);
        // M Ĝ − Ĝ Λ = U (H Σ_r V_r* − Σ V* Λ); U is an isometry
        let hs = Mat::from_fn(k, rank, |i, j| tmat[t][(i, j)] * sv[i]);
        let mut p = &hs * v_r.adjoint();
        drop(hs);
        for tau in 0..na {
            let lam = maps[t][tau];
            for i in 0..k {
                p[(i, tau)] -= svd.v[(tau, i)].conj() * (sv[i] * lam);
            }
        }
        let worst = exec
            .map(na, |tau| linalg::col_norm(p.as_ref(), tau))
            .into_iter()
            .fold(0.0, f64::max);
        drop(p);
        on_grid.push(worst);
        left.push(&svd.u * &h);
    }
    let matrices: Vec<CMat> = exec.map(maps.len(), |t| &left[t] * u_r.adjoint());
    let on_grid_residual = on_grid.iter().copied().fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if !(cond <= config.cond_limit) {
        warnings.push(Warning::IllConditionedGhat {
            cond,
            limit: config.cond_limit,
        });
    }
    if !(on_grid_residual <= RESIDUAL_WARN) {
        warnings.push(Warning::LargeResidual {
            residual: on_grid_residual,
            tolerance: RESIDUAL_WARN,
        });
    }
    Ok(EigenmatrixSet {
        matrices,
        left,
        right: u_r,
        maps,
        mode,
        dim,
        grid_kind,
        diagnostics: BuildDiagnostics {
            cond_ghat: cond,
            ghat_rows: ns,
            ghat_cols: na,
            effective_rank: rank,
            threshold_used: delta,
            escalations,
            norms,
            on_grid_residuals: on_grid,
            on_grid_residual,
            warnings,
        },
    })
}

/// `‖H x‖ / ‖x‖` after a few power iterations on `H* H`; never exceeds `‖H‖₂`.
fn norm_lower_bound(h: &CMat) -> f64 {
    const ITERS: usize = 12;
    let n = h.ncols();
    if n == 0 || h.nrows() == 0 {
        return 0.0;
    }
    // fixed, non-symmetric start so the result is deterministic
    let mut x = Mat::from_fn(n, 1, |i, _| C64::new(1.0 + (i as f64 * 0.618_034).fract(), 0.0));
    let mut best = 0.0f64;
    for _ in 0..ITERS {
        let xn = linalg::col_norm(x.as_ref(), 0);
        if xn == 0.0 {
            break;
        }
        x *= faer::Scale(C64::new(1.0 / xn, 0.0));
        let y = h * &x;
        best = best.max(linalg::col_norm(y.as_ref(), 0));
        x = h.adjoint() * &y;
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorNorm {
    pub a: usize,
    pub b: usize,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub probe_count: usize,
    /// `max_x ‖M^t ĝ(x) − λ^t(x) ĝ(x)‖₂` per matrix over the probes.
    pub off_grid_residuals: Vec<f64>,
    /// `‖M^a M^b − M^b M^a‖₂` for every pair `a < b`; empty with one matrix.
    pub commutators: Vec<CommutatorNorm>,
    pub build: BuildDiagnostics,
}

impl DiagnosticsReport {
    pub fn max_off_grid(&self) -> f64 {
        self.off_grid_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_commutator(&self) -> Option<f64> {
        self.commutators.iter().map(|c| c.norm).reduce(f64::max)
    }
}

/// Off-grid eigenrelation residuals at the probes and pairwise commutator norms.
pub fn diagnostics(
    set: &EigenmatrixSet,
    kernel: &Kernel,
    samples: &SampleSet,
    probes: &crate::Points,
    exec: Execution,
) -> Result<DiagnosticsReport> {
    if samples.len() != set.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: set.n_samples(),
            got: samples.len(),
        });
    }
    if probes.dim() != set.dim {
        return Err(Error::DimensionMismatch {
            expected: set.dim,
            got: probes.dim(),
        });
    }
    let per_probe = exec.try_map(probes.len(), |p| -> Result<Vec<f64>> {
        let x = probes.get(p);
        let g = match set.grid_kind {
            GridKind::Chebyshev => crate::kernel::kernel_vector(kernel, samples, x, true)?,
            GridKind::Circle => {
                let z: Vec<C64> = x.iter().map(|&c| C64::new(c, 0.0)).collect();
                let mut g = samples
                    .points
                    .iter()
                    .map(|s| kernel.evaluate_complex(s, &z))
                    .collect::<Result<Vec<_>>>()?;
                normalize_in_place(&mut g)?;
                g
            }
        };
        let lambda = point_eigenvalues(set.mode, x)?;
        Ok((0..set.count())
            .zip(&lambda)
            .map(|(t, l)| {
                let mg = set.apply(t, &g);
                mg.iter()
                    .zip(&g)
                    .map(|(a, b)| (a - l * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    })?;
    let mut off = vec![0.0f64; set.count()];
    for r in &per_probe {
        for (o, v) in off.iter_mut().zip(r) {
            *o = o.max(*v);
        }
    }

    let pairs: Vec<(usize, usize)> = (0..set.count())
        .flat_map(|a| (a + 1..set.count()).map(move |b| (a, b)))
        .collect();
    let commutators = exec.try_map(pairs.len(), |i| {
        let (a, b) = pairs[i];
        // M^a M^b − M^b M^a = (F^a C_ab − F^b C_ba) U_r*, C_xy = U_r* F^y
        let c_ab = set.right.adjoint() * &set.left[b];
        let c_ba = set.right.adjoint() * &set.left[a];
        let x = &set.left[a] * &c_ab - &set.left[b] * &c_ba;
        Ok::<_, Error>(CommutatorNorm {
            a,
            b,
            norm: linalg::spectral_norm(x.as_ref())?,
        })
    })?;

    Ok(DiagnosticsReport {
        probe_count: probes.len(),
        off_grid_residuals: off,
        commutators,
        build: set.diagnostics.clone(),
    })
}
