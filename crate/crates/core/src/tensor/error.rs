use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: extents must be positive and rank at least 1")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    ReshapeMismatch { from: Vec<usize>, to: Vec<usize> },
    #[error("expected a [C,D,H,W] or [N,C,D,H,W] tensor, got shape {0:?}")]
    ExpectedSpatial(Vec<usize>),
    #[error("shape mismatch on axis {axis} ({name}): expected {expected}, got {actual}")]
    AxisMismatch { name: &'static str, axis: usize, expected: usize, actual: usize },
    #[error("shapes {a:?} and {b:?} are not broadcast-compatible")]
    Broadcast { a: Vec<usize>, b: Vec<usize> },
    #[error("convolution produces an empty output along axis {axis}")]
    EmptyOutput { axis: usize },
    #[error("invalid convolution parameters: {0}")]
    ConvParams(String),
    #[error("pool window {window:?} exceeds spatial extents {extents:?}")]
    WindowTooLarge { window: [usize; 3], extents: [usize; 3] },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("concat input {index} has shape {actual:?}, incompatible with {expected:?} outside axis {axis}")]
    ConcatMismatch { index: usize, axis: usize, expected: Vec<usize>, actual: Vec<usize> },
    #[error("concat of an empty list")]
    EmptyConcat,
    #[error("slice {start}..{end} out of range for extent {extent}")]
    SliceOutOfRange { start: usize, end: usize, extent: usize },
    #[error("matmul inner extents differ: {left:?} x {right:?}")]
    MatmulMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("batch norm in eval mode needs running statistics; none recorded")]
    RunningStatsUninitialized,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("graph was already released by a previous backward pass")]
    GraphReleased,
    #[error("loss is not connected to any tensor requiring gradients")]
    NoGraph,
    #[error("tensor record: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}
