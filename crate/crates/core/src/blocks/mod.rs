//! Network building blocks, each a pure function of (input, parameters).

pub mod cbam;
pub mod decoder;
pub mod encoder;
pub mod gam;
pub mod ghpa;
pub mod layers;
pub mod mab;
pub mod mdb;
pub mod mub;
pub mod params;
pub mod shapes;

pub use cbam::{Cbam, CbamGates};
pub use decoder::{DecoderBlock, DecoderOutput};
pub use encoder::{ConvStage, Downsample, EncoderBlock};
pub use gam::{Gam, GamOutput};
pub use ghpa::Ghpa;
pub use layers::{Conv, Norm, NormKind};
pub use mab::{Mab, MabOutput};
pub use mdb::{Mdb, MdbStages};
pub use mub::{Mub, MubOutput};
pub use params::{Ctx, Init, ParamEntry, ParamSpec, ParamStore, StatUpdates};
pub use shapes::StageShapeSpec;
