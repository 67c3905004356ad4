//! Comparison methods: ITE (k-means codebook encoding with threshold
//! attribution), a per-frame linear classifier with majority vote, and the
//! shared linear softmax classifier they both use. The temporal-attention
//! variant lives in [`crate::model`] as [`crate::model::Variant::Attention`].

mod framevote;
mod ite;
mod kmeans;
mod linear;

pub use framevote::{longest_run, majority_vote, FrameVote, FrameVoteConfig};
pub use ite::{bridged_interval, ite_attribute, ite_encode, ite_frame_scores, IteBaseline, IteCodebook, IteConfig, MAX_BRIDGE};
pub use kmeans::{kmeans_fit, KMeans, KMeansConfig};
pub use linear::{LinearConfig, LinearSoftmax};

/// A single-frame run `[s, s]` has no length as an interval; extend it by
/// one frame, toward the end when possible.
pub(crate) fn widen_span(s: usize, e: usize, len: usize) -> (usize, usize) {
    if e > s {
        (s, e)
    } else if s < len {
        (s, s + 1)
    } else {
        (s.saturating_sub(1).max(1), s)
    }
}
