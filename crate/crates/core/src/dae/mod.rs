//! The denoising autoencoder: integration layer, skip-connected LSTM encoder,
//! state-copied LSTM decoder and the two output layers.

pub mod activation;
pub mod checkpoint;
pub mod network;
pub mod params;

pub use activation::{gelu, gelu_grad, sigmoid};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{
    backward, decode, encoder_step, forward_batch, forward_window, integrate, loss_and_grad,
    loss_and_grad_batch, loss_batch, BatchTrace, EncoderState, Reconstruction, CI_WIDTH,
};
pub use params::{Dims, Gradients, LstmParams, ModelParams};
