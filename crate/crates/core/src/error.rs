use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular kernel evaluation: sample point coincides with parameter point")]
    SingularEvaluation,

    #[error("kernel vector has zero norm and cannot be normalized")]
    ZeroVector,

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("matrix is degenerate: every singular value falls below the threshold")]
    Degenerate,

    #[error(
        "no singular-value threshold in the ladder keeps the eigenmatrix norm below {cap} (last norm {last_norm:.3e})"
    )]
    NormCapUnreachable { cap: f64, last_norm: f64 },

    #[error("eigenvector matrix is ill-conditioned (cond = {cond:.3e}) after {attempts} beta draws; retry with a different beta_seed")]
    IllConditionedEigenbasis { cond: f64, attempts: usize },

    #[error("linear algebra routine failed: {0}")]
    LinAlg(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Stage label if the error carries one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}

/// Non-fatal conditions recorded in diagnostics.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// `cond(Ĝ)` above the configured limit.
    IllConditionedGhat {
        #[serde(with = "crate::serde_float")]
        cond: f64,
        #[serde(with = "crate::serde_float")]
        limit: f64,
    },
    /// An eigenmatrix fails its eigenrelation by more than the tolerance.
    LargeResidual {
        #[serde(with = "crate::serde_float")]
        residual: f64,
        #[serde(with = "crate::serde_float")]
        tolerance: f64,
    },
    /// `σ_{n_x} / σ₁` of the Krylov matrix is numerically zero.
    RankDeficientKrylov {
        #[serde(with = "crate::serde_float")]
        ratio: f64,
    },
    /// `cond(Z_U^t)` above `1e12`.
    IllConditionedShift {
        dim: usize,
        #[serde(with = "crate::serde_float")]
        cond: f64,
    },
    /// The kernel matrix at the recovered spikes is nearly collinear.
    CollinearSpikes {
        #[serde(with = "crate::serde_float")]
        cond: f64,
    },
    /// Some raw coordinate left the slack band around `[−1, 1]^d` before clamping.
    SpikesOutOfBox {
        #[serde(with = "crate::serde_float")]
        max_abs: f64,
    },
    /// `β` was redrawn because the eigenvector matrix was ill-conditioned.
    BetaRedrawn { attempts: usize },
    /// Gauss–Newton refinement skipped: the first Jacobian is rank deficient.
    RefinementSkipped,
    /// No singular-value gap found when estimating the spike count.
    NoSpectralGap,
}
