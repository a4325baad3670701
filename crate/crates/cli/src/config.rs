//! Flat TOML run configuration.
//!
//! Layers, lowest precedence first: preset, `--config` file, `--set`
//! overrides, then the `--seed` / `--out` flags. The merged table is checked
//! against [`RawConfig`] (unknown keys rejected) and materialized into a
//! fully defaulted [`RunConfig`], which is what gets echoed and hashed.

use std::path::Path;

use eigenmatrix::eigenmatrix::{BuildConfig, GridSpec, Mode};
use eigenmatrix::grid::GridKind;
use eigenmatrix::harness::{Layout, ProblemSpec};
use eigenmatrix::kernel::{Cube, Kernel, SpikeSignal};
use eigenmatrix::recovery::{RecoveryConfig, SpikeCount};
use eigenmatrix::{Execution, Points, C64};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CountRaw {
    Int(i64),
    Word(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ExclusionRaw {
    Box(Vec<f64>),
    Word(String),
}

/// Schema of the config document; every key optional.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kernel: Option<String>,
    pub exponent: Option<f64>,
    pub d: Option<i64>,
    #[serde(rename = "J")]
    pub j: Option<i64>,
    pub region: Option<Vec<f64>>,
    pub exclusion: Option<ExclusionRaw>,
    pub layout: Option<String>,
    pub spikes: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
    pub n_x: Option<CountRaw>,
    pub gap_threshold: Option<f64>,
    pub max_spikes: Option<i64>,
    pub sigma: Option<f64>,
    pub sigmas: Option<Vec<f64>>,
    pub seed: Option<i64>,
    pub seeds: Option<Vec<i64>>,
    pub grid: Option<i64>,
    pub grid_kind: Option<String>,
    pub mode: Option<String>,
    pub sv_threshold_rel: Option<f64>,
    pub norm_cap: Option<f64>,
    pub cond_limit: Option<f64>,
    #[serde(rename = "L")]
    pub degree: Option<CountRaw>,
    pub beta_seed: Option<i64>,
    pub refine: Option<bool>,
    pub cond_p_limit: Option<f64>,
    pub probes: Option<i64>,
    pub observations: Option<String>,
    pub delimiter: Option<String>,
    pub out: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Fourier,
    PowerLaw,
    Exponential,
    LogPotential,
}

impl KernelName {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fourier" => KernelName::Fourier,
            "power_law" => KernelName::PowerLaw,
            "exponential" => KernelName::Exponential,
            "log_potential" => KernelName::LogPotential,
            _ => return None,
        })
    }

    fn is_deconvolution(self) -> bool {
        self != KernelName::Fourier
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutName {
    Easy,
    Hard,
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

/// `"auto"` or a positive integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Count {
    Auto,
    Fixed(usize),
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Count::Auto => s.serialize_str("auto"),
            Count::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

/// `"none"` or `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exclusion(pub Option<Cube>);

impl Serialize for Exclusion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            None => s.serialize_str("none"),
            Some(c) => [c.lo, c.hi].serialize(s),
        }
    }
}

/// Fully defaulted, validated configuration. Field order is the echo order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: KernelName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    pub d: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub region: [f64; 2],
    pub exclusion: Exclusion,
    pub layout: LayoutName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spikes: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub n_x: Count,
    pub gap_threshold: f64,
    pub max_spikes: usize,
    pub sigma: f64,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub grid: usize,
    pub grid_kind: GridKind,
    pub mode: Mode,
    pub sv_threshold_rel: f64,
    pub norm_cap: f64,
    pub cond_limit: f64,
    #[serde(rename = "L")]
    pub degree: Count,
    pub beta_seed: u64,
    pub refine: bool,
    pub cond_p_limit: f64,
    pub probes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<String>,
    pub delimiter: Delimiter,
    pub out: String,
}

/// Reads a config file, reporting syntax, type and unknown-key errors with
/// line and column.
pub fn load_file(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_document(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn parse_document(text: &str) -> Result<Table, ConfigError> {
    toml::from_str::<RawConfig>(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_owned()))?;
    text.parse::<Table>()
        .map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_owned()))
}

/// `KEY=VALUE`; the value is read as a TOML value when it parses as one,
/// otherwise as a bare string (so `kernel=fourier` works unquoted).
pub fn parse_override(spec: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("override `{spec}` is not of the form KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Parse(format!("override `{spec}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));
    Ok((key.to_owned(), value))
}

pub fn merge(base: &mut Table, layer: Table) {
    for (k, v) in layer {
        base.insert(k, v);
    }
}

fn to_usize(key: &str, v: i64, min: usize) -> Result<usize, ConfigError> {
    if v < min as i64 {
        return Err(invalid(key, format!("must be at least {min}, got {v}")));
    }
    Ok(v as usize)
}

fn to_u64(key: &str, v: i64) -> Result<u64, ConfigError> {
    u64::try_from(v).map_err(|_| invalid(key, format!("must be non-negative, got {v}")))
}

fn count(key: &str, raw: Option<CountRaw>, default: Count) -> Result<Count, ConfigError> {
    match raw {
        None => Ok(default),
        Some(CountRaw::Int(n)) => Ok(Count::Fixed(to_usize(key, n, 1)?)),
        Some(CountRaw::Word(w)) if w == "auto" => Ok(Count::Auto),
        Some(CountRaw::Word(w)) => Err(invalid(
            key,
            format!("expected a positive integer or \"auto\", got \"{w}\""),
        )),
    }
}

fn finite_positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(key, format!("must be finite and positive, got {v}")));
    }
    Ok(v)
}

fn interval(key: &str, v: &[f64]) -> Result<Cube, ConfigError> {
    match v {
        [lo, hi] if lo.is_finite() && hi.is_finite() && lo < hi => Ok(Cube { lo: *lo, hi: *hi }),
        _ => Err(invalid(key, format!("expected [lo, hi] with lo < hi, got {v:?}"))),
    }
}

fn noise_level(key: &str, v: f64) -> Result<f64, ConfigError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(invalid(key, format!("must be finite and >= 0, got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    /// Deserializes the merged table and fills every default.
    pub fn from_table(table: Table) -> Result<RunConfig, ConfigError> {
        let raw = RawConfig::deserialize(Value::Table(table)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        RunConfig::materialize(raw)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_table(parse_document(text)?)
    }

    pub fn materialize(raw: RawConfig) -> Result<RunConfig, ConfigError> {
        let kernel_s = raw.kernel.ok_or_else(|| invalid("kernel", "missing required key"))?;
        let kernel = KernelName::parse(&kernel_s).ok_or_else(|| {
            invalid(
                "kernel",
                format!("unknown kernel \"{kernel_s}\"; expected fourier, power_law, exponential or log_potential"),
            )
        })?;
        let d = to_usize("d", raw.d.ok_or_else(|| invalid("d", "missing required key"))?, 1)?;

        let exponent = match (kernel, raw.exponent) {
            (KernelName::PowerLaw, e) => Some(finite_positive("exponent", e.unwrap_or(1.0))?),
            (_, Some(_)) => return Err(invalid("exponent", "only meaningful for kernel = \"power_law\"")),
            (_, None) => None,
        };
        let j = to_usize("J", raw.j.unwrap_or(1024), 1)?;

        let default_region = match (kernel, d) {
            (KernelName::Fourier, 1 | 2) => [-8.0, 8.0],
            (KernelName::Fourier, _) => [-4.0, 4.0],
            _ => [-2.0, 2.0],
        };
        let region = match &raw.region {
            Some(r) => interval("region", r)?,
            None => Cube {
                lo: default_region[0],
                hi: default_region[1],
            },
        };
        let exclusion = match raw.exclusion {
            None if kernel.is_deconvolution() => Some(Cube::UNIT),
            None => None,
            Some(ExclusionRaw::Word(w)) if w == "none" => None,
            Some(ExclusionRaw::Word(w)) => {
                return Err(invalid(
                    "exclusion",
                    format!("expected \"none\" or [lo, hi], got \"{w}\""),
                ))
            }
            Some(ExclusionRaw::Box(b)) => Some(interval("exclusion", &b)?),
        };
        if let Some(ex) = exclusion {
            if !ex.strictly_inside(&region) {
                return Err(invalid("exclusion", "must lie strictly inside the sample region"));
            }
        }
        if kernel.is_deconvolution() {
            let covers = exclusion.is_some_and(|e| e.lo <= -1.0 && e.hi >= 1.0);
            let disjoint = region.lo > 1.0 || region.hi < -1.0;
            if !(covers || disjoint) {
                return Err(invalid(
                    "exclusion",
                    "deconvolution kernels need samples outside [-1,1]^d; use an exclusion box containing it",
                ));
            }
        }

        let layout = match raw.layout.as_deref().unwrap_or("easy") {
            "easy" => LayoutName::Easy,
            "hard" => LayoutName::Hard,
            "explicit" => LayoutName::Explicit,
            other => {
                return Err(invalid(
                    "layout",
                    format!("expected easy, hard or explicit, got \"{other}\""),
                ))
            }
        };
        let n_x = count("n_x", raw.n_x, Count::Fixed(4))?;
        let (spikes, weights) = match layout {
            LayoutName::Explicit => {
                let spikes = raw
                    .spikes
                    .ok_or_else(|| invalid("spikes", "required when layout = \"explicit\""))?;
                if spikes.is_empty() {
                    return Err(invalid("spikes", "needs at least one spike"));
                }
                if let Some(k) = spikes.iter().position(|p| p.len() != d) {
                    return Err(invalid(
                        "spikes",
                        format!("spike {k} has {} coordinates, d = {d}", spikes[k].len()),
                    ));
                }
                if let Some(k) = spikes
                    .iter()
                    .position(|p| !p.iter().all(|c| c.is_finite() && c.abs() <= 1.0))
                {
                    return Err(invalid("spikes", format!("spike {k} lies outside [-1,1]^d")));
                }
                let weights = raw.weights.unwrap_or_else(|| vec![1.0; spikes.len()]);
                if weights.len() != spikes.len() {
                    return Err(invalid(
                        "weights",
                        format!("{} weights for {} spikes", weights.len(), spikes.len()),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w == 0.0) {
                    return Err(invalid("weights", "weights must be finite and nonzero"));
                }
                if let Count::Fixed(n) = n_x {
                    if n != spikes.len() {
                        return Err(invalid(
                            "n_x",
                            format!("{n} does not match the {} explicit spikes", spikes.len()),
                        ));
                    }
                }
                (Some(spikes), Some(weights))
            }
            _ => {
                if raw.spikes.is_some() {
                    return Err(invalid("spikes", "only allowed with layout = \"explicit\""));
                }
                if raw.weights.is_some() {
                    return Err(invalid("weights", "only allowed with layout = \"explicit\""));
                }
                (None, None)
            }
        };
        match (layout, n_x) {
            (LayoutName::Hard, Count::Fixed(n)) if n != 4 => {
                return Err(invalid("n_x", format!("hard layout needs n_x = 4, got {n}")))
            }
            (LayoutName::Easy, Count::Fixed(n)) if n > 8 || d > 3 => {
                return Err(invalid(
                    "layout",
                    format!("easy layout supports n_x <= 8 in d <= 3, got n_x = {n}, d = {d}"),
                ))
            }
            (LayoutName::Easy | LayoutName::Hard, Count::Auto) if raw.observations.is_none() => {
                return Err(invalid(
                    "n_x",
                    "\"auto\" needs explicit spikes or an observations file to know the true count",
                ))
            }
            _ => {}
        }
        let gap_threshold = raw.gap_threshold.unwrap_or(1e-3);
        if !(gap_threshold > 0.0 && gap_threshold < 1.0) {
            return Err(invalid(
                "gap_threshold",
                format!("must lie in (0, 1), got {gap_threshold}"),
            ));
        }
        let max_spikes = to_usize("max_spikes", raw.max_spikes.unwrap_or(8), 1)?;

        let sigma = noise_level("sigma", raw.sigma.unwrap_or(0.0))?;
        let sigmas = match raw.sigmas {
            None => vec![sigma],
            Some(v) if v.is_empty() => return Err(invalid("sigmas", "needs at least one value")),
            Some(v) => v
                .into_iter()
                .map(|s| noise_level("sigmas", s))
                .collect::<Result<_, _>>()?,
        };
        let seed = to_u64("seed", raw.seed.unwrap_or(0))?;
        let seeds = match raw.seeds {
            None => vec![seed],
            Some(v) if v.is_empty() => return Err(invalid("seeds", "needs at least one seed")),
            Some(v) => v.into_iter().map(|s| to_u64("seeds", s)).collect::<Result<_, _>>()?,
        };

        let grid = to_usize(
            "grid",
            raw.grid.unwrap_or(match d {
                1 | 2 => 32,
                3 => 16,
                _ => 8,
            }),
            2,
        )?;
        let grid_kind = match raw.grid_kind.as_deref().unwrap_or("chebyshev") {
            "chebyshev" => GridKind::Chebyshev,
            "circle" => GridKind::Circle,
            other => {
                return Err(invalid(
                    "grid_kind",
                    format!("expected chebyshev or circle, got \"{other}\""),
                ))
            }
        };
        if grid_kind == GridKind::Circle && kernel != KernelName::Fourier {
            return Err(invalid("grid_kind", "circle grids need the fourier kernel"));
        }
        let mode = match raw.mode.as_deref() {
            None => Mode::default_for(d),
            Some("per_dimension") => Mode::PerDimension,
            Some("complex_embedding") if d <= 2 => Mode::ComplexEmbedding,
            Some("complex_embedding") => return Err(invalid("mode", "complex_embedding needs d <= 2")),
            Some(other) => {
                return Err(invalid(
                    "mode",
                    format!("expected per_dimension or complex_embedding, got \"{other}\""),
                ))
            }
        };
        let sv_threshold_rel = raw.sv_threshold_rel.unwrap_or(1e-8);
        if !(sv_threshold_rel > 0.0 && sv_threshold_rel < 1.0) {
            return Err(invalid(
                "sv_threshold_rel",
                format!("must lie in (0, 1), got {sv_threshold_rel}"),
            ));
        }
        let above_one = |key: &str, v: f64| {
            if v.is_finite() && v > 1.0 {
                Ok(v)
            } else {
                Err(invalid(key, format!("must be finite and exceed 1, got {v}")))
            }
        };
        let norm_cap = above_one("norm_cap", raw.norm_cap.unwrap_or(10.0))?;
        let cond_limit = above_one("cond_limit", raw.cond_limit.unwrap_or(1e7))?;
        let cond_p_limit = above_one("cond_p_limit", raw.cond_p_limit.unwrap_or(1e12))?;
        let degree = count("L", raw.degree, Count::Auto)?;
        let beta_seed = to_u64("beta_seed", raw.beta_seed.unwrap_or(0))?;
        let probes = to_usize("probes", raw.probes.unwrap_or(100), 1)?;
        let delimiter = match raw.delimiter.as_deref().unwrap_or("comma") {
            "comma" => Delimiter::Comma,
            "tab" => Delimiter::Tab,
            other => return Err(invalid("delimiter", format!("expected comma or tab, got \"{other}\""))),
        };
        if raw.observations.as_deref() == Some("") {
            return Err(invalid("observations", "path is empty"));
        }
        let out = raw.out.unwrap_or_else(|| "out".to_owned());
        if out.is_empty() {
            return Err(invalid("out", "path is empty"));
        }

        Ok(RunConfig {
            kernel,
            exponent,
            d,
            j,
            region: [region.lo, region.hi],
            exclusion: Exclusion(exclusion),
            layout,
            spikes,
            weights,
            n_x,
            gap_threshold,
            max_spikes,
            sigma,
            sigmas,
            seed,
            seeds,
            grid,
            grid_kind,
            mode,
            sv_threshold_rel,
            norm_cap,
            cond_limit,
            degree,
            beta_seed,
            refine: raw.refine.unwrap_or(true),
            cond_p_limit,
            probes,
            observations: raw.observations,
            delimiter,
            out,
        })
    }

    /// Effective config as TOML; re-parses to an identical `RunConfig`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the echoed config without `out`, so moving the output
    /// directory does not change the provenance of identical runs.
    pub fn hash(&self) -> String {
        let mut table = Table::try_from(self).expect("run config serializes");
        table.remove("out");
        let digest = Sha256::digest(toml::to_string(&table).expect("table serializes").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn kernel(&self) -> Kernel {
        match self.kernel {
            KernelName::Fourier => Kernel::Fourier,
            KernelName::PowerLaw => Kernel::PowerLaw {
                exponent: self.exponent.unwrap_or(1.0),
            },
            KernelName::Exponential => Kernel::Exponential,
            KernelName::LogPotential => Kernel::LogPotential,
        }
    }

    pub fn region(&self) -> Cube {
        Cube {
            lo: self.region[0],
            hi: self.region[1],
        }
    }

    /// Explicit spikes as a signal with real weights.
    pub fn explicit_signal(&self) -> Option<SpikeSignal> {
        let spikes = self.spikes.as_ref()?;
        let pts = Points::from_rows(self.d, spikes).ok()?;
        let weights = self.weights.as_ref()?.iter().map(|&w| C64::new(w, 0.0)).collect();
        Some(SpikeSignal { spikes: pts, weights })
    }

    /// Number of true spikes for synthetic generation.
    pub fn truth_count(&self) -> usize {
        match (self.n_x, &self.spikes) {
            (_, Some(s)) => s.len(),
            (Count::Fixed(n), None) => n,
            (Count::Auto, None) => 0,
        }
    }

    pub fn problem_spec(&self, sigma: f64, seed: u64) -> ProblemSpec {
        let layout = match self.layout {
            LayoutName::Easy => Layout::Easy,
            LayoutName::Hard => Layout::Hard,
            LayoutName::Explicit => Layout::Explicit(self.explicit_signal().expect("validated explicit spikes")),
        };
        ProblemSpec {
            kernel: self.kernel(),
            dim: self.d,
            sample_region: self.region(),
            exclusion: self.exclusion.0,
            n_samples: self.j,
            layout,
            n_x: self.truth_count(),
            sigma,
            seed,
        }
    }

    pub fn build_config(&self, execution: Execution) -> BuildConfig {
        BuildConfig {
            sv_threshold_rel: self.sv_threshold_rel,
            norm_cap: self.norm_cap,
            cond_limit: self.cond_limit,
            mode: self.mode,
            grid: GridSpec {
                kind: self.grid_kind,
                n_per_dim: self.grid,
            },
            execution,
        }
    }

    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            n_x: match self.n_x {
                Count::Fixed(n) => SpikeCount::Fixed(n),
                Count::Auto => SpikeCount::Auto {
                    gap_threshold: self.gap_threshold,
                    max_spikes: self.max_spikes,
                },
            },
            degree: match self.degree {
                Count::Fixed(l) => Some(l),
                Count::Auto => None,
            },
            beta_seed: self.beta_seed,
            refine: self.refine,
            cond_p_limit: self.cond_p_limit,
        }
    }
}
