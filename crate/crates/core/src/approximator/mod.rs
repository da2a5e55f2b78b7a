//! Small fully connected networks with analytic gradients, a squashed
//! Gaussian head, the Adam optimizer and a checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod net;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use gaussian::{gaussian_sample_and_logprob, GaussianHeadOutput, RewardSpace};
pub use net::{backward, backward_batch, forward, forward_batch, Activation, NetSpec, Network, ParamVector, Tape};
