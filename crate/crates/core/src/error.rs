use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("voxel index {index} out of range for {len} voxels")]
    Index { index: usize, len: usize },
    #[error("sequence of {n} hits exceeds capacity {capacity}")]
    Capacity { n: usize, capacity: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("reconstruction failed: {0}")]
    Reconstruction(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(
        "non-finite loss at epoch {epoch}, step {step}: loss={loss}, lr_voxel={lr_voxel}, \
         lr_encoder={lr_encoder}, |g_voxel|={grad_norm_voxel}, |g_encoder|={grad_norm_encoder}"
    )]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
        lr_voxel: f64,
        lr_encoder: f64,
        grad_norm_voxel: f64,
        grad_norm_encoder: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! param_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Param(alloc::format!($($arg)*))
    };
}
pub(crate) use param_err;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}
pub(crate) use shape_err;
