use alloc::boxed::Box;
use core::fmt;

use crate::grid::{Property, PropertySet};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone)]
pub enum Error {
    InvalidGrid(&'static str),
    InvalidProperty {
        property: Property,
        index: usize,
        value: f64,
    },
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    CflViolation {
        courant: f64,
    },
    IndexOutOfGrid {
        row: usize,
        col: usize,
    },
    GridTooSmall {
        nx: usize,
        nz: usize,
    },
    InvalidProbe(&'static str),
    PmlTooWide {
        width: usize,
        nx: usize,
        nz: usize,
    },
    /// Damping too strong for the explicit scheme at this time step.
    DampingUnstable {
        cell: usize,
        d_dt: f64,
        limit: f64,
    },
    NonlinearityBlowup {
        cell: usize,
        g1: f64,
    },
    FieldDiverged {
        cell: usize,
        value: f64,
    },
    /// A step error with the time index at which it happened.
    AtStep {
        step: usize,
        source: Box<Error>,
    },
    NyquistViolation {
        frequency: f64,
        nyquist: f64,
    },
    TapeMemoryExceeded {
        required: usize,
        budget: usize,
    },
    Unsupported(&'static str),
    ProblemTooLarge {
        unknowns: usize,
        cap: usize,
    },
    SingularBlock {
        row: usize,
    },
    ApertureOutOfArray {
        first: usize,
        count: usize,
        elements: usize,
    },
    InvalidPlan(&'static str),
    ZeroSignal,
    NonFiniteGradient {
        property: Property,
    },
    InvalidGeometry(&'static str),
    DegenerateBounds {
        min: f64,
        max: f64,
    },
    InvalidConfig(&'static str),
    /// The inversion stopped because an iterate broke a precondition; the
    /// offending iterate is attached for inspection.
    InversionAborted {
        iteration: usize,
        iterate: Box<PropertySet>,
        source: Box<Error>,
    },
    Worker {
        index: usize,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error once step, worker and iteration context is stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. }
            | Error::InversionAborted { source, .. }
            | Error::Worker { source, .. } => source.root(),
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidProperty {
                property,
                index,
                value,
            } => write!(f, "invalid {property} value {value} at cell {index}"),
            Error::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(f, "shape mismatch for {what}: expected {expected}, found {found}"),
            Error::CflViolation { courant } => write!(
                f,
                "CFL condition violated: Courant number {courant:.6} > 1; shrink dt"
            ),
            Error::IndexOutOfGrid { row, col } => {
                write!(f, "cell ({row}, {col}) lies outside the grid")
            }
            Error::GridTooSmall { nx, nz } => {
                write!(f, "grid {nx}x{nz} too small for the stencils (need >= 3x3)")
            }
            Error::InvalidProbe(msg) => write!(f, "invalid probe geometry: {msg}"),
            Error::PmlTooWide { width, nx, nz } => {
                write!(f, "PML width {width} does not fit a {nx}x{nz} grid")
            }
            Error::DampingUnstable { cell, d_dt, limit } => write!(
                f,
                "attenuation times dt is {d_dt:.4} at cell {cell}, above the stable limit {limit:.4}; lower the PML d_max or dt"
            ),
            Error::NonlinearityBlowup { cell, g1 } => write!(
                f,
                "nonlinear coefficient G1 = {g1:e} collapsed at cell {cell}; amplitude too high for this medium"
            ),
            Error::FieldDiverged { cell, value } => {
                write!(f, "pressure diverged at cell {cell} (value {value:e})")
            }
            Error::AtStep { step, source } => write!(f, "time step {step}: {source}"),
            Error::NyquistViolation { frequency, nyquist } => write!(
                f,
                "frequency {frequency:e} Hz is above the Nyquist limit {nyquist:e} Hz"
            ),
            Error::TapeMemoryExceeded { required, budget } => write!(
                f,
                "tape needs {required} bytes, budget is {budget} bytes"
            ),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
            Error::ProblemTooLarge { unknowns, cap } => write!(
                f,
                "linear operator would have {unknowns} unknowns, cap is {cap}"
            ),
            Error::SingularBlock { row } => write!(f, "singular diagonal entry in row {row}"),
            Error::ApertureOutOfArray {
                first,
                count,
                elements,
            } => write!(
                f,
                "aperture of {count} elements starting at {first} exceeds the {elements}-element array"
            ),
            Error::InvalidPlan(msg) => write!(f, "invalid emission plan: {msg}"),
            Error::ZeroSignal => write!(f, "signal power is zero; SNR is undefined"),
            Error::NonFiniteGradient { property } => {
                write!(f, "non-finite gradient for {property}")
            }
            Error::InvalidGeometry(msg) => write!(f, "invalid phantom geometry: {msg}"),
            Error::DegenerateBounds { min, max } => {
                write!(f, "degenerate bounds: max {max} must exceed min {min}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InversionAborted {
                iteration, source, ..
            } => write!(f, "inversion aborted at iteration {iteration}: {source}"),
            Error::Worker { index, source } => write!(f, "worker {index} failed: {source}"),
        }
    }
}

impl core::error::Error for Error {}
