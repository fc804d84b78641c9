use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("pole at u = {0}")]
    PoleAt(Complex64),
    #[error("argument u = {0} is too large to reduce modulo the lattice")]
    ArgumentOutOfRange(Complex64),
    #[error("invalid modulus tau = {0}: Im(tau) must be positive")]
    InvalidModulus(Complex64),
    #[error("non-finite integrand sample at z = {0}")]
    NonFiniteSample(Complex64),
    #[error("quadrature did not converge: error estimate {estimate:e} after {panels} panels")]
    NoConvergence { estimate: f64, panels: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("syntax error at byte {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("u = {0} is a declared puncture")]
    DomainViolation(Complex64),

    #[error("zero or pole on a subdivision contour after {attempts} jittered attempts")]
    ZeroOnContour { attempts: usize },
    #[error("divisor audit failed: {0}")]
    AuditFailed(String),
    #[error("Abel condition violated: {0}")]
    AbelViolation(String),
    #[error("coincident points: {0}")]
    CoincidentPoints(String),
    #[error("involution incompatible with domain: {0}")]
    IncompatibleInvolution(String),

    #[error("route passes through a pole or puncture near u = {0}")]
    PathThroughPole(Complex64),
    #[error(
        "|C| = {modulus} is not 1; the data is on the vertical-flux branch, use is_vertical_flux"
    )]
    NotUnitModulusC { modulus: f64 },
    #[error("lambda must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("could not find a regular sample after {0} attempts")]
    SampleAtPole(usize),
    #[error("invalid Weierstrass data: {0}")]
    InvalidData(String),

    #[error("singular Jacobian: damped Newton and Levenberg-Marquardt both stalled at residual norm {norm:e}")]
    SingularJacobian { norm: f64 },
    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("sampling region is disconnected by its exclusion disks")]
    DisconnectedSampling,
    #[error("invalid sampling: {0}")]
    InvalidSampling(String),
    #[error("threshold order: delta_int = {delta_int} must exceed 2 x max edge length = {limit}")]
    ThresholdOrder { delta_int: f64, limit: f64 },
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("data does not have vertical flux (max horizontal flux {0:e})")]
    NotVerticalFlux(f64),
}
