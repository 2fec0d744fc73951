//! EvolveGCN temporal node classification on delay-Doppler graph sequences.

mod adam;
mod matrix;
mod model;
mod tape;
mod train;

pub use adam::Adam;
pub use matrix::Matrix;
pub use model::{
    argmax_rows, evolve_weights, forward_on_tape, forward_sequence, gcn_layer_forward, loss, normalized_adjacency, top_k_rows, BoundModel,
    Decoder, EvolveGcn, EvolvingLayer, GraphInput, MatrixGru, ModelDims,
};
pub use tape::{log_sum_exp, Gradients, Tape, Var};
pub use train::{loss_and_gradients, predict, predict_logits, snapshot_loss, train, EpochStats, Split, TrainConfig, TrainReport};
