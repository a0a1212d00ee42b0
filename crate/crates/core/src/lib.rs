//! HES-UNet lesion segmentation.
//!
//! A self-contained CPU implementation: a reverse-mode autograd tensor
//! engine ([`tensor`]), the network building blocks ([`blocks`]), the
//! assembled deep-supervision network ([`network`]), losses and overlap
//! metrics ([`loss`], [`metrics`]), CT preprocessing and synthetic phantom
//! data ([`data`]) and the training engine ([`train`]).

pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod provenance;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use network::{HesUnet, ModelConfig, Stage, StageActivations};
pub use tensor::{DType, Real, Tensor};
