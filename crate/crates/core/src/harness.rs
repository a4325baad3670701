//! Synthetic problems, noise, spike matching and σ/seed sweeps.
//!
//! Every random quantity of a trial comes from a named stream of the master
//! seed (see [`crate::seed`]): `"spikes"`, `"samples"`, `"noise"` and
//! `"beta"`. Spikes, samples and noise therefore depend on the seed only,
//! which lets a sweep build the eigenmatrices once per seed and share the
//! noise realization across σ values.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eigenmatrix::{build_eigenmatrices, BuildConfig, EigenmatrixSet};
use crate::error::Warning;
use crate::kernel::{forward_map, Cube, Field, Kernel, Observations, SampleSet, SpikeSignal};
use crate::points::distance;
use crate::recovery::{recover_with_set, RecoveryConfig, RecoveryResult};
use crate::{seed, Error, Execution, Points, Result, C64};

pub const REJECTION_MIN_DRAWS: usize = 100_000;
pub const REJECTION_MIN_RATE: f64 = 0.01;
pub const SPIKE_ROUNDS: usize = 100_000;
pub const EASY_SEPARATION: f64 = 0.5;
pub const EASY_BOX: f64 = 0.9;
pub const HARD_SPLIT: f64 = 0.1;
pub const HARD_CENTER_SEPARATION: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Uniform in `[−0.9, 0.9]^d`, pairwise separation at least 0.5.
    Easy,
    /// Two pairs split by 0.1, pair centers at least 1 apart.
    Hard,
    Explicit(SpikeSignal),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kernel: Kernel,
    pub dim: usize,
    pub sample_region: Cube,
    pub exclusion: Option<Cube>,
    pub n_samples: usize,
    pub layout: Layout,
    pub n_x: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and ≥ 0, got {}",
                self.sigma
            )));
        }
        if self.n_x == 0 {
            return Err(Error::InvalidArgument("n_x must be at least 1".into()));
        }
        if let Some(ex) = &self.exclusion {
            if !ex.strictly_inside(&self.sample_region) {
                return Err(Error::InvalidArgument(
                    "exclusion box must lie strictly inside the sample region".into(),
                ));
            }
        }
        if self.kernel.is_deconvolution() {
            let covers_unit = self.exclusion.is_some_and(|e| e.lo <= -1.0 && e.hi >= 1.0);
            let disjoint = self.sample_region.lo > 1.0 || self.sample_region.hi < -1.0;
            if !(covers_unit || disjoint) {
                return Err(Error::InvalidArgument(format!(
                    "{} kernel needs samples outside [-1,1]^d: set an exclusion box containing it",
                    self.kernel.name()
                )));
            }
        }
        if let Layout::Explicit(sig) = &self.layout {
            sig.validate()?;
            if sig.len() != self.n_x || sig.spikes.dim() != self.dim {
                return Err(Error::InvalidArgument(format!(
                    "explicit layout has {} spikes in {}D, problem declares n_x = {} in {}D",
                    sig.len(),
                    sig.spikes.dim(),
                    self.n_x,
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

/// `J` i.i.d. uniform points in `region^d`, rejecting those inside `exclusion`.
pub fn gen_samples(region: Cube, dim: usize, n: usize, exclusion: Option<Cube>, seed: u64) -> Result<SampleSet> {
    if let Some(ex) = &exclusion {
        if !ex.strictly_inside(&region) {
            return Err(Error::InvalidArgument(
                "exclusion box must lie strictly inside the sample region".into(),
            ));
        }
    }
    let mut rng = seed::stream(seed, "samples", &[]);
    let mut coords = Vec::with_capacity(n * dim);
    let mut p = vec![0.0; dim];
    let (mut draws, mut accepted) = (0usize, 0usize);
    while accepted < n {
        for c in p.iter_mut() {
            *c = rng.random_range(region.lo..region.hi);
        }
        draws += 1;
        if exclusion.is_some_and(|e| e.contains(&p)) {
            if draws >= REJECTION_MIN_DRAWS && (accepted as f64) < REJECTION_MIN_RATE * draws as f64 {
                return Err(Error::Sampling(format!(
                    "acceptance rate {accepted}/{draws} below {REJECTION_MIN_RATE}"
                )));
            }
            continue;
        }
        coords.extend_from_slice(&p);
        accepted += 1;
    }
    let mut s = SampleSet::new(Points::new(dim, coords)?)?;
    s.region = Some(region);
    s.exclusion = exclusion;
    Ok(s)
}

fn unit_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Ground-truth spikes; generated layouts carry unit weights.
pub fn gen_spikes(layout: &Layout, n_x: usize, dim: usize, seed: u64) -> Result<SpikeSignal> {
    let mut rng = seed::stream(seed, "spikes", &[]);
    match layout {
        Layout::Explicit(sig) => {
            sig.validate()?;
            if sig.len() != n_x || sig.spikes.dim() != dim {
                return Err(Error::InvalidArgument(
                    "explicit layout does not match n_x and dim".into(),
                ));
            }
            Ok(sig.clone())
        }
        Layout::Easy => {
            if n_x == 0 || n_x > 8 || dim == 0 || dim > 3 {
                return Err(Error::InvalidArgument(format!(
                    "easy layout supports 1 ≤ n_x ≤ 8 in 1 ≤ d ≤ 3, got n_x = {n_x}, d = {dim}"
                )));
            }
            let mut pts = Points::empty(dim);
            let mut p = vec![0.0; dim];
            for _ in 0..SPIKE_ROUNDS {
                for c in p.iter_mut() {
                    *c = rng.random_range(-EASY_BOX..EASY_BOX);
                }
                if pts.iter().all(|q| distance(q, &p) >= EASY_SEPARATION) {
                    pts.push(&p)?;
                    if pts.len() == n_x {
                        return SpikeSignal::with_unit_weights(pts);
                    }
                }
            }
            Err(Error::Sampling(format!(
                "could not place {n_x} spikes with separation {EASY_SEPARATION} in {dim}D"
            )))
        }
        Layout::Hard => {
            if n_x != 4 {
                return Err(Error::InvalidArgument(format!("hard layout needs n_x = 4, got {n_x}")));
            }
            if dim == 0 {
                return Err(Error::InvalidArgument("dim must be at least 1".into()));
            }
            let half = HARD_SPLIT / 2.0;
            let reach = EASY_BOX - half;
            for _ in 0..SPIKE_ROUNDS {
                let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-reach..reach)).collect();
                let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-reach..reach)).collect();
                if distance(&a, &b) < HARD_CENTER_SEPARATION {
                    continue;
                }
                let mut pts = Points::empty(dim);
                for c in [&a, &b] {
                    let dir = unit_direction(&mut rng, dim);
                    let lo: Vec<f64> = c.iter().zip(&dir).map(|(x, v)| x - half * v).collect();
                    let hi: Vec<f64> = c.iter().zip(&dir).map(|(x, v)| x + half * v).collect();
                    pts.push(&lo)?;
                    pts.push(&hi)?;
                }
                return SpikeSignal::with_unit_weights(pts);
            }
            Err(Error::Sampling("could not place the hard layout".into()))
        }
    }
}

/// `ũ_j = u_j (1 + σ Z_j)`; `Z` real or circular complex standard Gaussian by field.
pub fn add_noise(u: &Observations, sigma: f64, seed: u64) -> Result<Observations> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be finite and ≥ 0, got {sigma}"
        )));
    }
    let mut rng = seed::stream(seed, "noise", &[]);
    let values = u
        .values
        .iter()
        .map(|&v| {
            let z = match u.field {
                Field::Real => C64::new(rng.sample(StandardNormal), 0.0),
                Field::Complex => {
                    let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
                }
            };
            v * (C64::new(1.0, 0.0) + z * sigma)
        })
        .collect();
    Ok(Observations {
        values,
        sigma,
        field: u.field,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `assignment[k]`: estimate matched to truth spike `k`.
    pub assignment: Vec<Option<usize>>,
    #[serde(with = "crate::serde_float::vec")]
    pub position_errors: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub weight_errors: Vec<f64>,
}

impl Matching {
    pub fn max_error(&self) -> f64 {
        self.position_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_error(&self) -> f64 {
        let n = self.position_errors.len();
        if n == 0 {
            return 0.0;
        }
        self.position_errors.iter().sum::<f64>() / n as f64
    }
}

/// Minimum-cost assignment on a square cost matrix (rows to columns).
/// Potentials-based Hungarian method, `O(n³)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; p[j] is the row assigned to column j
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Cost of pairing a truth spike with a missing estimate. Every perfect
/// matching pads the same number of rows, so any constant works; zero keeps
/// the sums exact (a huge sentinel would swamp the real distances).
const PAD_COST: f64 = 0.0;

/// Minimum total Euclidean distance matching of estimates to truth.
/// Missing estimates are padded with infinite-error sentinels.
pub fn match_spikes(truth: &SpikeSignal, estimate: &SpikeSignal) -> Matching {
    let (nt, ne) = (truth.len(), estimate.len());
    let n = nt.max(ne);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (i < nt, j < ne) {
                    (true, true) => distance(truth.spikes.get(i), estimate.spikes.get(j)),
                    (true, false) => PAD_COST,
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let assign = hungarian(&cost);
    let mut assignment = Vec::with_capacity(nt);
    let mut position_errors = Vec::with_capacity(nt);
    let mut weight_errors = Vec::with_capacity(nt);
    for (i, &j) in assign.iter().enumerate().take(nt) {
        if j < ne {
            assignment.push(Some(j));
            position_errors.push(cost[i][j]);
            weight_errors.push((truth.weights[i] - estimate.weights[j]).norm());
        } else {
            assignment.push(None);
            position_errors.push(f64::INFINITY);
            weight_errors.push(f64::INFINITY);
        }
    }
    Matching {
        assignment,
        position_errors,
        weight_errors,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spec: ProblemSpec,
    pub build: BuildConfig,
    pub recovery: RecoveryConfig,
    /// Seed actually handed to the β stream.
    pub beta_seed: u64,
    pub truth: SpikeSignal,
    /// Matching of the final (refined when enabled) spikes.
    pub matching: Option<Matching>,
    /// Matching of the spikes before refinement.
    pub raw_matching: Option<Matching>,
    #[serde(with = "crate::serde_float")]
    pub max_error: f64,
    #[serde(with = "crate::serde_float")]
    pub mean_error: f64,
    #[serde(with = "crate::serde_float")]
    pub raw_max_error: f64,
    #[serde(with = "crate::serde_float")]
    pub ls_residual: f64,
    pub build_warnings: Vec<Warning>,
    pub result: Option<RecoveryResult>,
    pub failure: Option<TrialFailure>,
    /// Seconds; not serialized so records stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time: f64,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Seed-dependent inputs of a trial, shared across noise levels.
struct Prepared {
    truth: SpikeSignal,
    samples: SampleSet,
    clean: Observations,
}

fn prepare(spec: &ProblemSpec) -> Result<Prepared> {
    spec.validate()?;
    let truth = gen_spikes(&spec.layout, spec.n_x, spec.dim, spec.seed)?;
    let samples = gen_samples(spec.sample_region, spec.dim, spec.n_samples, spec.exclusion, spec.seed)?;
    let clean = forward_map(&spec.kernel, &samples, &truth)?;
    Ok(Prepared { truth, samples, clean })
}

pub fn trial_beta_seed(spec: &ProblemSpec, recovery: &RecoveryConfig) -> u64 {
    seed::derive_seed(spec.seed, "beta", &[recovery.beta_seed])
}

fn failed(
    spec: &ProblemSpec,
    build: &BuildConfig,
    recovery: &RecoveryConfig,
    truth: Option<SpikeSignal>,
    build_warnings: Vec<Warning>,
    err: &Error,
    start: Instant,
) -> TrialResult {
    TrialResult {
        spec: spec.clone(),
        build: *build,
        recovery: *recovery,
        beta_seed: trial_beta_seed(spec, recovery),
        truth: truth.unwrap_or_else(|| SpikeSignal {
            spikes: Points::empty(spec.dim),
            weights: Vec::new(),
        }),
        matching: None,
        raw_matching: None,
        max_error: f64::INFINITY,
        mean_error: f64::INFINITY,
        raw_max_error: f64::INFINITY,
        ls_residual: f64::INFINITY,
        build_warnings,
        result: None,
        failure: Some(TrialFailure {
            stage: err.stage().map(str::to_owned),
            message: err.to_string(),
        }),
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn build_set(spec: &ProblemSpec, samples: &SampleSet, build: &BuildConfig) -> Result<EigenmatrixSet> {
    let grid = build.grid.build(spec.dim).map_err(|e| e.at("build"))?;
    build_eigenmatrices(&spec.kernel, samples, &grid, build).map_err(|e| e.at("build"))
}

fn finish(
    spec: &ProblemSpec,
    build: &BuildConfig,
    recovery: &RecoveryConfig,
    prepared: &Prepared,
    set: &EigenmatrixSet,
    start: Instant,
) -> TrialResult {
    let warnings = set.diagnostics().warnings.clone();
    let noisy = match add_noise(&prepared.clean, spec.sigma, spec.seed) {
        Ok(n) => n,
        Err(e) => {
            return failed(
                spec,
                build,
                recovery,
                Some(prepared.truth.clone()),
                warnings,
                &e.at("noise"),
                start,
            )
        }
    };
    let mut rc = *recovery;
    rc.beta_seed = trial_beta_seed(spec, recovery);
    let result = match recover_with_set(set, &spec.kernel, &prepared.samples, &noisy.values, &rc) {
        Ok(r) => r,
        Err(e) => return failed(spec, build, recovery, Some(prepared.truth.clone()), warnings, &e, start),
    };
    let estimate = SpikeSignal {
        spikes: result.spikes_refined.clone(),
        weights: result.weights.clone(),
    };
    let raw = SpikeSignal {
        spikes: result.spikes_raw.clone(),
        weights: result.weights_raw.clone(),
    };
    let matching = match_spikes(&prepared.truth, &estimate);
    let raw_matching = match_spikes(&prepared.truth, &raw);
    TrialResult {
        spec: spec.clone(),
        build: *build,
        recovery: *recovery,
        beta_seed: rc.beta_seed,
        truth: prepared.truth.clone(),
        max_error: matching.max_error(),
        mean_error: matching.mean_error(),
        raw_max_error: raw_matching.max_error(),
        ls_residual: result.ls_residual,
        matching: Some(matching),
        raw_matching: Some(raw_matching),
        build_warnings: warnings,
        result: Some(result),
        failure: None,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// spikes → samples → forward map → noise → recovery → matching.
/// Stage errors become a failed-trial record.
pub fn run_trial(spec: &ProblemSpec, build: &BuildConfig, recovery: &RecoveryConfig) -> TrialResult {
    let start = Instant::now();
    let prepared = match prepare(spec) {
        Ok(p) => p,
        Err(e) => return failed(spec, build, recovery, None, Vec::new(), &e.at("generate"), start),
    };
    match build_set(spec, &prepared.samples, build) {
        Ok(set) => finish(spec, build, recovery, &prepared, &set, start),
        Err(e) => failed(spec, build, recovery, Some(prepared.truth), Vec::new(), &e, start),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub sigma_index: usize,
    pub seed_index: usize,
    pub sigma: f64,
    pub seed: u64,
    pub trial: TrialResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub failures: usize,
    #[serde(with = "crate::serde_float")]
    pub median_max_error: f64,
    #[serde(with = "crate::serde_float")]
    pub worst_max_error: f64,
    #[serde(with = "crate::serde_float")]
    pub median_raw_max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub template: ProblemSpec,
    pub build: BuildConfig,
    pub recovery: RecoveryConfig,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// σ-major, seed-minor.
    pub cells: Vec<Cell>,
    pub summary: Vec<SigmaSummary>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| !c.trial.succeeded()).count()
    }

    pub fn cell(&self, sigma_index: usize, seed_index: usize) -> &Cell {
        &self.cells[sigma_index * self.seeds.len() + seed_index]
    }
}

/// Median with `+∞` entries for failed cells (NaN-free input assumed).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

/// All (σ, seed) cells; one eigenmatrix build per seed.
pub fn run_sweep(
    template: &ProblemSpec,
    sigmas: &[f64],
    seeds: &[u64],
    build: &BuildConfig,
    recovery: &RecoveryConfig,
    exec: Execution,
) -> Result<ExperimentReport> {
    let order: Vec<usize> = (0..seeds.len()).collect();
    run_sweep_in_order(template, sigmas, seeds, build, recovery, exec, &order)
}

/// [`run_sweep`] processing seeds in the given order; the report does not
/// depend on it.
#[doc(hidden)]
pub fn run_sweep_in_order(
    template: &ProblemSpec,
    sigmas: &[f64],
    seeds: &[u64],
    build: &BuildConfig,
    recovery: &RecoveryConfig,
    exec: Execution,
    order: &[usize],
) -> Result<ExperimentReport> {
    if sigmas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one sigma and one seed".into(),
        ));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and ≥ 0, got {s}")));
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..seeds.len()).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(
            "order must be a permutation of the seed indices".into(),
        ));
    }

    let per_seed: Vec<Vec<TrialResult>> = exec.map(order.len(), |i| {
        let seed = seeds[order[i]];
        let specs: Vec<ProblemSpec> = sigmas
            .iter()
            .map(|&sigma| ProblemSpec {
                sigma,
                seed,
                ..template.clone()
            })
            .collect();
        let start = Instant::now();
        let prepared = match prepare(&specs[0]) {
            Ok(p) => p,
            Err(e) => {
                let e = e.at("generate");
                return specs
                    .iter()
                    .map(|s| failed(s, build, recovery, None, Vec::new(), &e, start))
                    .collect();
            }
        };
        match build_set(&specs[0], &prepared.samples, build) {
            Ok(set) => specs
                .iter()
                .map(|s| finish(s, build, recovery, &prepared, &set, Instant::now()))
                .collect(),
            Err(e) => specs
                .iter()
                .map(|s| failed(s, build, recovery, Some(prepared.truth.clone()), Vec::new(), &e, start))
                .collect(),
        }
    });

    let mut by_seed: Vec<Option<Vec<TrialResult>>> = vec![None; seeds.len()];
    for (i, trials) in per_seed.into_iter().enumerate() {
        by_seed[order[i]] = Some(trials);
    }
    let mut cells = Vec::with_capacity(sigmas.len() * seeds.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        for (ki, &seed) in seeds.iter().enumerate() {
            let trial = by_seed[ki].as_ref().expect("every seed ran")[si].clone();
            cells.push(Cell {
                sigma_index: si,
                seed_index: ki,
                sigma,
                seed,
                trial,
            });
        }
    }
    let summary = sigmas
        .iter()
        .enumerate()
        .map(|(si, &sigma)| {
            let row = &cells[si * seeds.len()..(si + 1) * seeds.len()];
            let errs: Vec<f64> = row.iter().map(|c| c.trial.max_error).collect();
            let raw: Vec<f64> = row.iter().map(|c| c.trial.raw_max_error).collect();
            SigmaSummary {
                sigma,
                seeds: seeds.to_vec(),
                failures: row.iter().filter(|c| !c.trial.succeeded()).count(),
                median_max_error: median(&errs),
                worst_max_error: errs.iter().copied().fold(0.0, f64::max),
                median_raw_max_error: median(&raw),
            }
        })
        .collect();
    Ok(ExperimentReport {
        metadata: ReportMetadata::default(),
        template: template.clone(),
        build: *build,
        recovery: *recovery,
        sigmas: sigmas.to_vec(),
        seeds: seeds.to_vec(),
        cells,
        summary,
    })
}
