//! Multi-directional downsampling: Haar subbands stacked into channels,
//! filtered by a 1×1 convolution back to `C`, then batch norm and ReLU.

use super::layers::{channels, Conv, Norm, NormKind};
use super::params::{Ctx, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Mdb {
    pub name: String,
    pub channels: usize,
    proj: Conv,
    bn: Norm,
}

#[derive(Debug, Clone)]
pub struct MdbStages<T: Real> {
    /// `4C` subband stack in the order `[LL, LV, LH, LD]`
    pub subbands: Tensor<T>,
    /// after the 1×1 filter, before normalization
    pub projected: Tensor<T>,
    pub out: Tensor<T>,
}

impl Mdb {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        Mdb {
            proj: Conv::pointwise(format!("{name}.proj"), 4 * channels, channels),
            bn: Norm::new(format!("{name}.bn"), channels, NormKind::Batch),
            name,
            channels,
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.proj.specs();
        v.extend(self.bn.specs());
        v
    }

    /// Haar subbands of `x` stacked as `[LL, LV, LH, LD]`.
    pub fn subbands<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = x.haar_dwt2()?;
        Tensor::cat_channels(&[b.ll, b.lv, b.lh, b.ld])
    }

    /// Invert [`Mdb::subbands`]; the stack is lossless.
    pub fn reconstruct<T: Real>(stack: &Tensor<T>) -> Result<Tensor<T>> {
        let axis = stack.rank() - 3;
        let p = stack.chunk(4, axis)?;
        Tensor::haar_idwt2(&p[0], &p[2], &p[1], &p[3])
    }

    pub fn stages<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<MdbStages<T>> {
        if channels(x) != self.channels {
            return Err(Error::Shape {
                op: "mdb",
                msg: format!(
                    "{}: expected {} channels, got {:?}",
                    self.name,
                    self.channels,
                    x.shape()
                ),
            });
        }
        let subbands = Self::subbands(x)?;
        let projected = self.proj.forward(ctx, &subbands)?;
        let out = self.bn.forward(ctx, &projected)?.relu()?;
        Ok(MdbStages {
            subbands,
            projected,
            out,
        })
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.stages(ctx, x)?.out)
    }
}
