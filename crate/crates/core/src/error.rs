use thiserror::Error;

use crate::correlation::CorrelationError;
use crate::cubature::CubatureError;
use crate::field::FieldError;
use crate::harmonics::HarmonicsError;
use crate::kernels::KernelError;
use crate::spectra::SpectrumError;
use crate::stats::StatsError;

/// Any library failure, classified for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Cubature(#[from] CubatureError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Broad failure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Regime,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Regime => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Harmonics(_) => ErrorClass::Validation,
            Error::Spectrum(e) => spectrum_class(e),
            Error::Kernel(e) => kernel_class(e),
            Error::Cubature(e) => cubature_class(e),
            Error::Correlation(e) => correlation_class(e),
            Error::Field(e) => field_class(e),
            Error::Stats(e) => stats_class(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }
}

fn spectrum_class(e: &SpectrumError) -> ErrorClass {
    match e {
        SpectrumError::Underflow { .. } => ErrorClass::Numerical,
        SpectrumError::InapplicableVariant => ErrorClass::Regime,
        _ => ErrorClass::Validation,
    }
}

fn kernel_class(e: &KernelError) -> ErrorClass {
    match e {
        KernelError::Truncation { .. } => ErrorClass::Numerical,
        _ => ErrorClass::Validation,
    }
}

fn cubature_class(e: &CubatureError) -> ErrorClass {
    match e {
        CubatureError::TooManyPoints { .. } => ErrorClass::Numerical,
        _ => ErrorClass::Validation,
    }
}

fn correlation_class(e: &CorrelationError) -> ErrorClass {
    match e {
        CorrelationError::Regime(_) => ErrorClass::Regime,
        CorrelationError::Truncation { .. }
        | CorrelationError::DegenerateVariance { .. }
        | CorrelationError::OutOfRange(_)
        | CorrelationError::DegenerateFit(_) => ErrorClass::Numerical,
        CorrelationError::InvalidQuery(_) => ErrorClass::Validation,
        CorrelationError::Spectrum(s) => spectrum_class(s),
    }
}

fn field_class(e: &FieldError) -> ErrorClass {
    match e {
        FieldError::NonReal(_) | FieldError::DegenerateVariance => ErrorClass::Numerical,
        FieldError::Kernel(k) => kernel_class(k),
        FieldError::Spectrum(s) => spectrum_class(s),
        _ => ErrorClass::Validation,
    }
}

fn stats_class(e: &StatsError) -> ErrorClass {
    match e {
        StatsError::SingularOmega { .. } => ErrorClass::Regime,
        StatsError::Field(f) => field_class(f),
        StatsError::Correlation(c) => correlation_class(c),
        StatsError::Cubature(c) => cubature_class(c),
        _ => ErrorClass::Validation,
    }
}
