//! A small reverse-mode differentiation engine over sequential layer graphs.
//!
//! Each layer kind has a hand-written backward kernel; a recorded forward
//! pass ([`Tape`]) keeps layer inputs and per-layer caches, and
//! [`ModelGraph::backward`] walks the layers in reverse.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod layer;
mod loss;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GRAD_FLOOR};
pub(crate) use graph::glorot;
pub use graph::{GraphBuilder, ModelGraph, Parameter, Tape};
pub use layer::{Layer, LayerKind, LayerSpec, Padding, RunningStats, BN_EPS, BN_MOMENTUM, SAFELOG_FLOOR};
pub use loss::softmax_xent;
pub use tensor::Tensor4;

use ndarray::Array2;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Network output as a `batch x classes` matrix.
pub fn logits_matrix(out: &Tensor4) -> Array2<f64> {
    let n = out.batch();
    Array2::from_shape_vec((n, out.sample_len()), out.data().to_vec()).expect("contiguous output")
}

/// Eval-mode logits for a batch.
pub fn model_forward(model: &ModelGraph, batch: &Tensor4) -> Result<Array2<f64>> {
    Ok(logits_matrix(&model.predict(batch)?))
}

/// Train-mode forward, cross-entropy loss, and backward pass. Fills the
/// gradients of trainable parameters and returns the loss and the tape (whose
/// batch statistics the caller may commit).
pub fn model_backward(
    model: &mut ModelGraph,
    batch: &Tensor4,
    labels: &[usize],
    dropout_seed: u64,
) -> Result<(f64, Tape)> {
    let tape = model.forward(batch, Mode::Train, dropout_seed)?;
    let logits = logits_matrix(tape.output());
    let (loss, grad) = softmax_xent(logits.view(), labels)?;
    let grad = Tensor4::from_vec(tape.output().shape(), grad.into_raw_vec_and_offset().0)?;
    model.backward(&tape, &grad);
    Ok((loss, tape))
}
