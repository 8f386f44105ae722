use num_complex::Complex64;

use crate::model::Verdict;
use crate::oracle::StationarySolution;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: rates must be finite and strictly positive")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("parameters outside the stability region ({verdict}: rho1 = {rho1}, rho2 = {rho2})")]
    NotStable { verdict: Verdict, rho1: f64, rho2: f64 },

    #[error("orientation violated: alpha*lambda1 = {hat_lambda1} is not below mu*mu1 = {hat_mu1}")]
    MisOriented { hat_lambda1: f64, hat_mu1: f64 },

    #[error("branch point ordering violated: {0}")]
    BranchOrdering(String),

    #[error("vanishing denominator in {what} (value {value:e})")]
    Degenerate { what: &'static str, value: f64 },

    #[error("argument {value} outside the domain of {what}")]
    OutOfDomain { what: &'static str, value: Complex64 },

    #[error("index chi = {chi} is nonzero: stability/orientation violated or grid too coarse")]
    NonZeroIndex { chi: i64 },

    #[error("{what} nearly vanishes on the contour at {at} (modulus {modulus:e})")]
    VanishingOnContour {
        what: &'static str,
        at: Complex64,
        modulus: f64,
    },

    #[error("zero of A(x,h(x)) lies on the contour (x0 = {x0}, radius = {radius})")]
    ZeroOnContour { x0: f64, radius: f64 },

    #[error("kernel zero near ({x}, {y}) could not be resolved (|R| = {distance:e})")]
    KernelZero {
        x: Complex64,
        y: Complex64,
        distance: f64,
    },

    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),

    #[error(
        "truncation insufficient: boundary mass {boundary_mass:e} >= tol {tol:e} \
         at m_max = {m_max}, n_max = {n_max}"
    )]
    TruncationInsufficient {
        boundary_mass: f64,
        tol: f64,
        m_max: usize,
        n_max: usize,
        solution: Box<StationarySolution>,
    },

    #[error("state reduction failed at state {0}: no transitions towards lower-index states")]
    Reducible(usize),

    #[error("truncated chain too large for the banded solver ({0} band entries)")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
