use super::encoder::ConvStage;
use super::ghpa::Ghpa;
use super::layers::{channels, spatial, Conv};
use super::params::{Ctx, ParamSpec};
use super::shapes::decoder_input_channels;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `DB_level`: conv stage halving channels, ×2 bilinear upsampling (→ `D`),
/// and a 1×1 head producing single-channel logits (→ `P_{level-1}`).
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub level: usize,
    pub cin: usize,
    pub cout: usize,
    conv: ConvStage,
    head: Conv,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput<T: Real> {
    pub d: Tensor<T>,
    /// logits
    pub p: Tensor<T>,
}

impl DecoderBlock {
    pub fn new(level: usize, c0: usize, grid: usize) -> Result<Self> {
        if !(1..=6).contains(&level) {
            return Err(Error::Config(format!("decoder level {level} out of range")));
        }
        let name = format!("db{level}");
        let cin = decoder_input_channels(c0, level);
        let cout = cin / 2;
        let conv = if level == 1 {
            ConvStage::Plain(Conv::same(format!("{name}.conv"), cin, cout, 3))
        } else {
            ConvStage::Ghpa(Ghpa::new(format!("{name}.ghpa"), cin, cout, grid)?)
        };
        Ok(DecoderBlock {
            level,
            cin,
            cout,
            conv,
            head: Conv::pointwise(format!("{name}.head"), cout, 1),
        })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.conv.specs();
        v.extend(self.head.specs());
        v
    }

    pub fn forward<T: Real>(
        &self,
        ctx: &mut Ctx<'_, T>,
        x: &Tensor<T>,
    ) -> Result<DecoderOutput<T>> {
        if channels(x) != self.cin {
            return Err(Error::Shape {
                op: "decoder_block",
                msg: format!(
                    "DB{} expects {} channels, got {:?}",
                    self.level,
                    self.cin,
                    x.shape()
                ),
            });
        }
        let (h, w) = spatial(x);
        let d = self.conv.forward(ctx, x)?.bilinear_resize(2 * h, 2 * w)?;
        let p = self.head.forward(ctx, &d)?;
        Ok(DecoderOutput { d, p })
    }
}
