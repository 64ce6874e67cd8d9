use thiserror::Error;

/// Errors raised by domain construction, kernel evaluation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point ({re}, {im}) is not strictly inside the domain")]
    Membership { re: f64, im: f64 },
    #[error("singular evaluation: {0}")]
    Singularity(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("descriptor error: {0}")]
    Descriptor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn outside(z: num_complex::Complex64) -> Self {
        Error::Membership { re: z.re, im: z.im }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
