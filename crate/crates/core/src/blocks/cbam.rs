//! Channel-then-spatial attention gating.

use super::layers::{channels, Conv};
use super::params::{Ctx, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Cbam {
    pub name: String,
    pub channels: usize,
    pub hidden: usize,
    fc1: Conv,
    fc2: Conv,
    spatial: Conv,
}

/// Intermediate gates, exposed for inspection.
#[derive(Debug, Clone)]
pub struct CbamGates<T: Real> {
    /// `N×C×1×1`
    pub channel: Tensor<T>,
    /// `N×1×H×W`
    pub spatial: Tensor<T>,
    pub out: Tensor<T>,
}

impl Cbam {
    pub fn new(name: impl Into<String>, channels: usize) -> Result<Self> {
        let name = name.into();
        if channels < 2 {
            return Err(Error::Config(format!(
                "{name}: CBAM needs at least 2 channels"
            )));
        }
        let ratio = (channels / 2).min(16);
        let hidden = (channels / ratio).max(1);
        Ok(Cbam {
            fc1: Conv::pointwise(format!("{name}.fc1"), channels, hidden),
            fc2: Conv::pointwise(format!("{name}.fc2"), hidden, channels),
            spatial: Conv::same(format!("{name}.spatial"), 2, 1, 7),
            name,
            channels,
            hidden,
        })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.fc1.specs();
        v.extend(self.fc2.specs());
        v.extend(self.spatial.specs());
        v
    }

    fn mlp<T: Real>(&self, ctx: &mut Ctx<'_, T>, v: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.fc1.forward(ctx, v)?.relu()?;
        self.fc2.forward(ctx, &h)
    }

    pub fn gates<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<CbamGates<T>> {
        if channels(x) != self.channels {
            return Err(Error::Shape {
                op: "cbam",
                msg: format!(
                    "{}: expected {} channels, got {:?}",
                    self.name,
                    self.channels,
                    x.shape()
                ),
            });
        }
        let x4 = if x.rank() == 3 {
            let s = x.shape();
            x.reshape(&[1, s[0], s[1], s[2]])?
        } else {
            x.clone()
        };
        let &[n, c, h, w] = x4.shape() else {
            unreachable!()
        };
        let avg = x4.adaptive_avg_pool(1, 1)?;
        let max = x4
            .reshape(&[n, c, h * w])?
            .max_axis(2, true)?
            .reshape(&[n, c, 1, 1])?;
        let channel = self.mlp(ctx, &avg)?.add(&self.mlp(ctx, &max)?)?.sigmoid()?;
        let xc = x4.mul(&channel)?;
        let pooled = Tensor::cat_channels(&[xc.mean_axis(1, true)?, xc.max_axis(1, true)?])?;
        let spatial = self.spatial.forward(ctx, &pooled)?.sigmoid()?;
        let mut out = xc.mul(&spatial)?;
        if x.rank() == 3 {
            out = out.reshape(x.shape())?;
        }
        Ok(CbamGates {
            channel,
            spatial,
            out,
        })
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.gates(ctx, x)?.out)
    }
}
