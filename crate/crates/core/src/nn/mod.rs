//! Minimal differentiable network: an MLP feature extractor, task heads,
//! the two training losses, momentum SGD and the cosine learning-rate
//! schedule. Backpropagation is hand-written per layer; there is no
//! general autodiff graph.

mod loss;
mod network;
mod optim;

pub use loss::{cross_entropy, feature_kl, feature_l2, softmax_rows};
pub use network::{
    backward, FeatureExtractor, ForwardTrace, Gradients, Head, HeadSet, Linear, LinearGrad,
    Upstream,
};
pub use optim::{cosine_lr, OptimState, SgdParams};
