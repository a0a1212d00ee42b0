//! Primitive parameterized layers shared by the blocks.

use super::params::{Ctx, Init, ParamSpec};
use crate::error::Result;
use crate::tensor::{Conv2dArgs, Real, Tensor};

/// Convolution with an optional bias.
#[derive(Debug, Clone)]
pub struct Conv {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub args: Conv2dArgs,
    pub bias: bool,
}

impl Conv {
    pub fn new(
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        kernel: usize,
        args: Conv2dArgs,
        bias: bool,
    ) -> Self {
        Conv {
            name: name.into(),
            cin,
            cout,
            kernel,
            args,
            bias,
        }
    }

    pub fn pointwise(name: impl Into<String>, cin: usize, cout: usize) -> Self {
        Self::new(name, cin, cout, 1, Conv2dArgs::default(), true)
    }

    /// Size-preserving `k×k` convolution.
    pub fn same(name: impl Into<String>, cin: usize, cout: usize, kernel: usize) -> Self {
        Self::new(
            name,
            cin,
            cout,
            kernel,
            Conv2dArgs::padding(kernel / 2),
            true,
        )
    }

    /// Per-channel 3×3 filter without bias.
    pub fn depthwise(name: impl Into<String>, channels: usize) -> Self {
        let args = Conv2dArgs {
            padding: 1,
            groups: channels,
            ..Default::default()
        };
        Self::new(name, channels, channels, 3, args, false)
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let cin_g = self.cin / self.args.groups;
        let fan_in = cin_g * self.kernel * self.kernel;
        let mut v = vec![ParamSpec::new(
            self.weight_name(),
            &[self.cout, cin_g, self.kernel, self.kernel],
            Init::KaimingUniform { fan_in },
        )];
        if self.bias {
            v.push(ParamSpec::new(self.bias_name(), &[self.cout], Init::Zeros));
        }
        v
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = ctx.param(&self.weight_name())?;
        let b = if self.bias {
            Some(ctx.param(&self.bias_name())?)
        } else {
            None
        };
        x.conv2d(&w, b.as_ref(), self.args)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Batch,
    Group(usize),
    /// across channels at each location
    Layer,
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub name: String,
    pub channels: usize,
    pub kind: NormKind,
}

impl Norm {
    pub fn new(name: impl Into<String>, channels: usize, kind: NormKind) -> Self {
        Norm {
            name: name.into(),
            channels,
            kind,
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let c = [self.channels];
        let mut v = vec![
            ParamSpec::new(format!("{}.gamma", self.name), &c, Init::Ones),
            ParamSpec::new(format!("{}.beta", self.name), &c, Init::Zeros),
        ];
        if self.kind == NormKind::Batch {
            v.push(ParamSpec::buffer(
                format!("{}.running_mean", self.name),
                &c,
                Init::Zeros,
            ));
            v.push(ParamSpec::buffer(
                format!("{}.running_var", self.name),
                &c,
                Init::Ones,
            ));
        }
        v
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let gamma = ctx.param(&format!("{}.gamma", self.name))?;
        let beta = ctx.param(&format!("{}.beta", self.name))?;
        match self.kind {
            NormKind::Batch => {
                let mut stats = ctx.running_stats(&self.name)?;
                let y = x.batch_norm(&gamma, &beta, &mut stats, ctx.training)?;
                if ctx.training {
                    ctx.record_stats(&self.name, stats);
                }
                Ok(y)
            }
            NormKind::Group(groups) => x.group_norm(groups, &gamma, &beta),
            NormKind::Layer => x.layer_norm(&gamma, &beta),
        }
    }
}

/// Spatial extent `(H, W)` of an image tensor (3-D or 4-D).
pub fn spatial<T: Real>(x: &Tensor<T>) -> (usize, usize) {
    let s = x.shape();
    (s[s.len() - 2], s[s.len() - 1])
}

pub fn channels<T: Real>(x: &Tensor<T>) -> usize {
    let s = x.shape();
    s[s.len() - 3]
}
