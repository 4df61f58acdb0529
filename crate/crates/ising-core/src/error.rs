use thiserror::Error;

/// Every failure mode of the library, one variant per documented error class.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("boundary error: {0}")]
    Boundary(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("size error: {what} needs {needed}, budget is {budget}")]
    Size { what: String, needed: usize, budget: usize },
    #[error("input error: {0}")]
    Input(String),
    #[error("disorder line crosses edge {0} with zero weight")]
    DegenerateLine(usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("not integrable: loop residual {residual:e}")]
    NonIntegrable { residual: f64 },
    #[error("degenerate spinor pair: {0}")]
    DegenerateSpinor(String),
    #[error("sheet error: {0}")]
    Sheet(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("monte carlo budget error: {0}")]
    McBudget(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
