//! Network construction: encoders, the four decoder families and the training primitives
//! (layer-wise backpropagation, Adam, checkpoints).

pub mod adam;
pub mod arch;
pub mod broadcast;
pub mod checkpoint;
pub mod conv;
pub mod init;
pub mod layers;
pub mod network;
pub mod scalar;
pub mod tensor;
pub mod vae;

pub use adam::{Adam, AdamConfig};
pub use arch::{
    build_decoder, build_encoder, ArchitectureSpec, BroadcastSpec, ConvLayerSpec, DecoderSpec, DeconvSpec,
    EncoderSpec,
};
pub use broadcast::{linspace, shuffle_coordinate_channels, spatial_broadcast, CoordChannels};
pub use checkpoint::Checkpoint;
pub use layers::Layer;
pub use network::{Network, Tape};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use vae::{LatentPosterior, OutputMap, Vae};
