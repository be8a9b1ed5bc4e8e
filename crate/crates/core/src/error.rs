use thiserror::Error;

/// Everything that can go wrong while building or integrating a system.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weight {index} is (numerically) zero: {value:e}")]
    ZeroWeight { index: usize, value: f64 },

    #[error("s2 = {s2} equals 1/sum(w) = {inverse_sum}; L would be rank one")]
    DegenerateScale { s2: f64, inverse_sum: f64 },

    #[error("L is singular (smallest/largest singular value = {ratio:e})")]
    SingularL { ratio: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid condensate ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("solution blew up at t = {time} (max |value| = {max_abs:e})")]
    BlowUp { time: f64, max_abs: f64 },

    #[error("component {component} has |psi| = {modulus:e} at x = {x}; phase undefined")]
    VacuumPoint {
        component: usize,
        x: f64,
        modulus: f64,
    },

    #[error("alpha*rho has a non-positive eigenvalue {value:e}; uniform state is unstable")]
    ComplexEigenvalue { value: f64 },

    #[error("extra condensate {index} satisfies the degeneracy condition (rho0*(g-h) = {value})")]
    DegeneracyCollision { index: usize, value: f64 },

    #[error("component {component} density becomes {density:e} at x = {x}")]
    NegativeDensity {
        component: usize,
        x: f64,
        density: f64,
    },

    #[error(
        "velocity perturbation of component {component} has mean {mean:e}; phase is not periodic"
    )]
    NonzeroMeanVelocity { component: usize, mean: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
