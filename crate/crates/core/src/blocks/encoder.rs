use super::cbam::Cbam;
use super::ghpa::Ghpa;
use super::layers::{channels, Conv};
use super::mdb::Mdb;
use super::params::{Ctx, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Feature extractor at the start of an encoder/decoder block: a plain 3×3
/// convolution at the full-resolution end of the network, GHPA elsewhere.
#[derive(Debug, Clone)]
pub enum ConvStage {
    Plain(Conv),
    Ghpa(Ghpa),
}

impl ConvStage {
    pub fn specs(&self) -> Vec<ParamSpec> {
        match self {
            ConvStage::Plain(c) => c.specs(),
            ConvStage::Ghpa(g) => g.specs(),
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ConvStage::Plain(c) => c.forward(ctx, x),
            ConvStage::Ghpa(g) => g.forward(ctx, x),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Downsample {
    Mdb(Mdb),
    MaxPool,
}

/// `EB_level`: conv stage (doubling channels), CBAM, then downsampling.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub level: usize,
    pub cin: usize,
    pub cout: usize,
    pub conv: ConvStage,
    pub cbam: Cbam,
    pub down: Downsample,
}

impl EncoderBlock {
    pub fn new(
        level: usize,
        in_channels: usize,
        c0: usize,
        grid: usize,
        use_mdb: bool,
    ) -> Result<Self> {
        if !(1..=5).contains(&level) {
            return Err(Error::Config(format!("encoder level {level} out of range")));
        }
        let name = format!("eb{level}");
        let cout = c0 << (level - 1);
        let cin = if level == 1 {
            in_channels
        } else {
            c0 << (level - 2)
        };
        let conv = if level == 1 {
            ConvStage::Plain(Conv::same(format!("{name}.conv"), cin, cout, 3))
        } else {
            ConvStage::Ghpa(Ghpa::new(format!("{name}.ghpa"), cin, cout, grid)?)
        };
        let down = if use_mdb {
            Downsample::Mdb(Mdb::new(format!("{name}.mdb"), cout))
        } else {
            Downsample::MaxPool
        };
        Ok(EncoderBlock {
            level,
            cin,
            cout,
            conv,
            cbam: Cbam::new(format!("{name}.cbam"), cout)?,
            down,
        })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.conv.specs();
        v.extend(self.cbam.specs());
        if let Downsample::Mdb(m) = &self.down {
            v.extend(m.specs());
        }
        v
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if channels(x) != self.cin {
            return Err(Error::Shape {
                op: "encoder_block",
                msg: format!(
                    "EB{} expects {} input channels, got {:?}",
                    self.level,
                    self.cin,
                    x.shape()
                ),
            });
        }
        let y = self.conv.forward(ctx, x)?;
        let y = self.cbam.forward(ctx, &y)?;
        match &self.down {
            Downsample::Mdb(m) => m.forward(ctx, &y),
            Downsample::MaxPool => y.max_pool2x2(),
        }
    }
}
