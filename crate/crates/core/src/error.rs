use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("kernel {kernel:?} larger than input {input:?}")]
    KernelTooLarge { kernel: Vec<usize>, input: Vec<usize> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target is not a one-hot vector")]
    NotOneHot,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid span: t_s={t_s}, t_e={t_e}, M={len}")]
    InvalidSpan { t_s: f64, t_e: f64, len: usize },
    #[error("sequence `{0}` has no ground-truth span")]
    MissingSpan(String),
    #[error("class {class} has only {count} items (need at least 3)")]
    ClassTooSmall { class: usize, count: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("infeasible summary: frames {first} and {second} are {distance} apart (D_max {d_max})")]
    InfeasiblePair {
        first: usize,
        second: usize,
        distance: f64,
        d_max: f64,
    },
    #[error("infeasible summary: {frames} frames cannot be covered with gap {k_max} and at most {t_max} picks")]
    InfeasibleLength {
        frames: usize,
        k_max: usize,
        t_max: usize,
    },
    #[error("parameter shape mismatch: {0:?}")]
    ParamMismatch(Vec<String>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    /// True for the two summarization infeasibility verdicts.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::InfeasiblePair { .. } | Error::InfeasibleLength { .. })
    }
}
