use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdent(String),
    #[error("variable x{index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("adaptive quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("integrand or result is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("diffusion matrix not positive definite at {at:?} (min eigenvalue {min_eig})")]
    NonPositiveDefinite { at: Vec<f64>, min_eig: f64 },
    #[error("density is not positive at {at:?}")]
    NonPositiveDensity { at: Vec<f64> },
    #[error("region does not intersect the domain")]
    EmptyRegion,
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolumeError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("profile value decreases at r={r}: {prev} -> {next}")]
    MonotonicityViolation { r: f64, prev: f64, next: f64 },
    #[error("r={r} outside the sampled range [{lo}, {hi}]")]
    DomainExceeded { r: f64, lo: f64, hi: f64 },
    #[error("profile is not strictly increasing near r={0}")]
    NotStrictlyIncreasing(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("only {found} samples in the top decade, need {needed}")]
    InsufficientTail { found: usize, needed: usize },
    #[error("declared tail law disagrees with the profile (max relative error {rel_err})")]
    TailMismatch { rel_err: f64 },
    #[error("a_n vanishes at n={0}")]
    ZeroA(f64),
    #[error("measured energy {e} exceeds certified bound {b} at n={n}")]
    BoundViolated { n: f64, e: f64, b: f64 },
    #[error("conflicting verdicts: {0}")]
    Conflict(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Scale1dError {
    #[error("log-derivative (phi'+2b)/phi not integrable near x={0}")]
    NonIntegrableLogDerivative(f64),
    #[error("neither convergence nor divergence certified on either half-line")]
    TailUnresolved,
    #[error("model is not one-dimensional with drift b/phi: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("cell weight not positive at cell {0}")]
    NonPositiveWeight(usize),
    #[error("face weight lost ellipticity at face ({i},{j}): conductance {c}, half flux {q}")]
    EllipticityLoss { i: usize, j: usize, c: f64, q: f64 },
    #[error("singular linear system")]
    SingularSystem,
    #[error("chain is not transient on the support of f")]
    NotTransient,
    #[error("generator is not conservative (min row sum {0})")]
    NotConservative(f64),
    #[error("exhaustion not monotone at cell {cell}: {prev} > {next}")]
    MonotonicityViolation { cell: usize, prev: f64, next: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("model is not smooth enough to simulate: {0}")]
    NotSmoothEnough(String),
    #[error("need at least 100 paths, got {0}")]
    InsufficientPaths(usize),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Union of the module errors, used by front ends that need a single type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Scale1d(#[from] Scale1dError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
}

impl Error {
    /// Module-qualified error code such as `volume_growth.QuadratureFailure`.
    pub fn code(&self) -> String {
        fn quad(e: &QuadError) -> &'static str {
            match e {
                QuadError::QuadratureFailure(_) => "QuadratureFailure",
                QuadError::NonFinite => "NonFinite",
            }
        }
        fn model(e: &ModelError) -> String {
            let v = match e {
                ModelError::UnknownModel(_) => "UnknownModel",
                ModelError::InvalidConfig(_) => "InvalidConfig",
                ModelError::Expr(_) => "ExpressionError",
                ModelError::NonPositiveDefinite { .. } => "NonPositiveDefinite",
                ModelError::NonPositiveDensity { .. } => "NonPositiveDensity",
                ModelError::EmptyRegion => "EmptyRegion",
                ModelError::Quad(q) => quad(q),
            };
            format!("model.{v}")
        }
        fn volume(e: &VolumeError) -> String {
            let v = match e {
                VolumeError::Quad(q) => quad(q),
                VolumeError::Model(m) => return model(m),
                VolumeError::MonotonicityViolation { .. } => "MonotonicityViolation",
                VolumeError::DomainExceeded { .. } => "DomainExceeded",
                VolumeError::NotStrictlyIncreasing(_) => "NotStrictlyIncreasing",
                VolumeError::InvalidArgument(_) => "InvalidArgument",
            };
            format!("volume_growth.{v}")
        }
        fn criteria(e: &CriteriaError) -> String {
            let v = match e {
                CriteriaError::InsufficientTail { .. } => "InsufficientTail",
                CriteriaError::TailMismatch { .. } => "TailMismatch",
                CriteriaError::ZeroA(_) => "ZeroA",
                CriteriaError::BoundViolated { .. } => "BoundViolated",
                CriteriaError::Conflict(_) => "Conflict",
                CriteriaError::Volume(v) => return volume(v),
                CriteriaError::Quad(q) => quad(q),
                CriteriaError::InvalidArgument(_) => "InvalidArgument",
            };
            format!("criteria.{v}")
        }
        match self {
            Error::Model(e) => model(e),
            Error::Volume(e) => volume(e),
            Error::Criteria(e) => criteria(e),
            Error::Scale1d(e) => {
                let v = match e {
                    Scale1dError::NonIntegrableLogDerivative(_) => "NonIntegrableLogDerivative",
                    Scale1dError::TailUnresolved => "TailUnresolved",
                    Scale1dError::NotApplicable(_) => "NotApplicable",
                    Scale1dError::Criteria(c) => return criteria(c),
                    Scale1dError::Volume(v) => return volume(v),
                    Scale1dError::Model(m) => return model(m),
                };
                format!("scale_1d.{v}")
            }
            Error::Lab(e) => {
                let v = match e {
                    LabError::NonPositiveWeight(_) => "NonPositiveWeight",
                    LabError::EllipticityLoss { .. } => "EllipticityLoss",
                    LabError::SingularSystem => "SingularSystem",
                    LabError::NotTransient => "NotTransient",
                    LabError::NotConservative(_) => "NotConservative",
                    LabError::MonotonicityViolation { .. } => "MonotonicityViolation",
                    LabError::InvalidGrid(_) => "InvalidGrid",
                    LabError::Model(m) => return model(m),
                    LabError::Quad(q) => quad(q),
                };
                format!("discrete_lab.{v}")
            }
            Error::MonteCarlo(e) => {
                let v = match e {
                    McError::NotSmoothEnough(_) => "NotSmoothEnough",
                    McError::InsufficientPaths(_) => "InsufficientPaths",
                    McError::InvalidConfig(_) => "InvalidConfig",
                    McError::Model(m) => return model(m),
                    McError::Expr(_) => "ExpressionError",
                };
                format!("montecarlo.{v}")
            }
        }
    }
}
