//! The differentiable graph scorer: input embeddings, message-passing
//! layers, scalar readout, candidate batching, and exact reverse-mode
//! gradients through the whole processing chain.

mod chain;
mod forward;
mod params;

pub use chain::{
    action_probs, action_scores, build_chain, CandidateBatch, Chain, FeatureDeltaIds, Model,
};
pub use forward::{
    argmax, argmin, collect_param_grads, forward_score, gnn_score, inject_params, softmax_probs,
    GraphWiring, LayerIds, ParamIds,
};
pub use params::{GnnDims, GnnParams, LayerParams};
