use thiserror::Error;

use crate::hilbert::{FockLabel, HilbertSpace, Mode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("invalid truncation: {mode} cutoff {cutoff} is below 2")]
    InvalidTruncation { mode: Mode, cutoff: usize },
    #[error("operators act on different spaces ({left:?} vs {right:?})")]
    SpaceMismatch { left: HilbertSpace, right: HilbertSpace },
    #[error("state {0} lies outside the truncated space")]
    OutOfSpace(FockLabel),
    #[error("level {level} is not below cutoff {cutoff}")]
    LevelAboveCutoff { level: usize, cutoff: usize },
    #[error("displaced state D({alpha})|{level}> loses {deficit:.3e} of its norm at cutoff {cutoff}")]
    TruncationLoss { level: usize, alpha: f64, cutoff: usize, deficit: f64 },
    #[error("cannot parse bare-state label {0:?}; expected \"k,q,n\"")]
    BadLabel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("no interior gap minimum in bracket [{lo}, {hi}] (minimum found at {at})")]
    Bracket { lo: f64, hi: f64, at: f64 },
    #[error("invalid sweep grid: {0}")]
    Grid(String),
    #[error("level selection failed: {0}")]
    Selection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("vanishing energy denominator for intermediate state |{k},{q},2> (denominator {denominator:.3e})")]
    Resonance { k: usize, q: usize, denominator: f64 },
    #[error("intermediate-state sums not converged after {shells} shells (last change {change:.3e})")]
    NotConverged { shells: usize, change: f64 },
    #[error("sum cutoff {0} is below the minimum of 4 shells")]
    SumCutoff(usize),
    #[error("detuning must be nonzero")]
    ZeroDetuning,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("integrator exceeded {steps} steps before t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("time grid must be ascending with at least one point")]
    TimeGrid,
    #[error("time grid is not uniform (spacing deviates by {0:.3e}); resample first")]
    NonUniformGrid(f64),
    #[error("state dimension {got} does not match expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid initial state: {0}")]
    InitialState(String),
    #[error("eigenstate index {index} outside retained set of {available}")]
    Index { index: usize, available: usize },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}
