use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimensionError {
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("{axis}: filter {filter} larger than padded input {input}")]
    FilterLargerThanInput { axis: &'static str, input: u32, filter: u32 },
    #[error("{axis}: (input {input} - filter {filter}) not divisible by stride {stride}")]
    NotDivisible { axis: &'static str, input: u32, filter: u32, stride: u32 },
    #[error("output dims {actual:?} do not match derived {expected:?}")]
    OutputMismatch { expected: (u32, u32), actual: (u32, u32) },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TileError {
    #[error("{name} = {value} outside 1..={max}")]
    OutOfRange { name: &'static str, value: u32, max: u32 },
    #[error("{unroll} = {u} does not divide {tile} = {t}")]
    UnrollMismatch { unroll: &'static str, tile: &'static str, u: u32, t: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{data_type} index {index:?} out of range for bounds {bounds:?}")]
pub struct AddressError {
    pub data_type: &'static str,
    pub index: [u32; 4],
    pub bounds: [u32; 4],
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid layer: {0}")]
    Layer(#[from] DimensionError),
    #[error("invalid tile: {0}")]
    Tile(#[from] TileError),
    #[error("tile footprint {footprint} exceeds SRAM budget {budget}")]
    SramExceeded { footprint: u64, budget: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DseError {
    #[error("design space is empty after filtering")]
    EmptySpace,
    #[error("no design point fits an SRAM budget of {budget}")]
    Infeasible { budget: u64 },
    #[error("top fraction {0} outside (0, 1]")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} trace was not collected")]
pub struct TraceUnavailable(pub &'static str);

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dse(#[from] DseError),
    #[error(transparent)]
    Trace(#[from] TraceUnavailable),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<TileError> for Error {
    fn from(e: TileError) -> Self {
        Error::Config(e.into())
    }
}

impl From<DimensionError> for Error {
    fn from(e: DimensionError) -> Self {
        Error::Config(e.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
