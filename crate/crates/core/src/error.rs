use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A target index outside the scene's target list.
    InvalidTarget { index: usize, count: usize },
    /// A target sits exactly on the transmitter or receiver.
    CoincidentTarget { index: usize },
    /// An observation window index outside `0..K`.
    WindowOutOfRange { k: usize, n_windows: usize },
    /// Matrix or grid shapes that do not agree.
    DimensionMismatch { context: &'static str, expected: (usize, usize), found: (usize, usize) },
    /// A parameter or input violating a documented invariant.
    InvalidParameter(String),
    /// CFAR window does not fit inside the map, or leaves no training cells.
    DegenerateWindow(String),
    /// Bisection failed to bracket a root.
    NoRoot(String),
    /// Two detections on the same delay-Doppler bin.
    DuplicateBin { delay_bin: usize, doppler_bin: usize },
    /// A split of the temporal sequence came out empty.
    EmptySplit(&'static str),
    /// Training produced a NaN or infinite loss.
    NonFiniteLoss { epoch: usize, step: usize },
    /// A reduction over an empty or all-masked set.
    EmptyInput(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidTarget { index, count } => {
                write!(f, "target index {index} out of range (scene has {count} targets)")
            }
            Error::CoincidentTarget { index } => {
                write!(f, "target {index} coincides with the transmitter or receiver")
            }
            Error::WindowOutOfRange { k, n_windows } => {
                write!(f, "window index {k} out of range (K = {n_windows})")
            }
            Error::DimensionMismatch { context, expected, found } => {
                write!(f, "{context}: expected {}x{}, found {}x{}", expected.0, expected.1, found.0, found.1)
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DegenerateWindow(msg) => write!(f, "degenerate CFAR window: {msg}"),
            Error::NoRoot(msg) => write!(f, "no root in bracket: {msg}"),
            Error::DuplicateBin { delay_bin, doppler_bin } => {
                write!(f, "duplicate detection at bin ({delay_bin}, {doppler_bin})")
            }
            Error::EmptySplit(which) => write!(f, "{which} split is empty"),
            Error::NonFiniteLoss { epoch, step } => {
                write!(f, "non-finite loss at epoch {epoch}, step {step}")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
        }
    }
}

impl core::error::Error for Error {}
