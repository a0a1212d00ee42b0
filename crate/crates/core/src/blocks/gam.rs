//! Global attention module `GAM_i`.
//!
//! `G_i` is projected to `E_i`'s width and resized to its grid. Both are cut
//! into four channel quarters; quarter `j` is concatenated with the
//! single-channel prediction `P_i`, layer-normalized and filtered by a 3×3
//! convolution with dilation `d_j`. The four results are concatenated and
//! fused by a 1×1 convolution into `Q_i`.

use super::layers::{channels, spatial, Conv, Norm, NormKind};
use super::params::{Ctx, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Conv2dArgs, Real, Tensor};

pub const DEFAULT_DILATIONS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone)]
pub struct Gam {
    pub level: usize,
    pub channels: usize,
    /// channels per mixed group: two quarters plus the prediction
    pub group_channels: usize,
    g_proj: Conv,
    norms: Vec<Norm>,
    convs: Vec<Conv>,
    fuse: Conv,
}

#[derive(Debug, Clone)]
pub struct GamOutput<T: Real> {
    /// per-group features before fusion
    pub groups: Vec<Tensor<T>>,
    pub q: Tensor<T>,
}

impl Gam {
    pub fn new(level: usize, c0: usize, dilations: [usize; 4]) -> Result<Self> {
        let c = c0 << (level - 1);
        if !c.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "GAM{level}: {c} channels not divisible by 4"
            )));
        }
        if dilations.contains(&0) {
            return Err(Error::Config("GAM dilations must be positive".into()));
        }
        let name = format!("gam{level}");
        let mixed = 2 * (c / 4) + 1;
        let norms = (1..=4)
            .map(|j| Norm::new(format!("{name}.norm{j}"), mixed, NormKind::Layer))
            .collect();
        let convs = dilations
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                Conv::new(
                    format!("{name}.conv{}", j + 1),
                    mixed,
                    mixed,
                    3,
                    Conv2dArgs::dilated(d),
                    true,
                )
            })
            .collect();
        Ok(Gam {
            level,
            channels: c,
            group_channels: mixed,
            g_proj: Conv::pointwise(format!("{name}.gproj"), 2 * c, c),
            norms,
            convs,
            fuse: Conv::pointwise(format!("{name}.fuse"), 4 * mixed, c),
        })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.g_proj.specs();
        for (n, c) in self.norms.iter().zip(&self.convs) {
            v.extend(n.specs());
            v.extend(c.specs());
        }
        v.extend(self.fuse.specs());
        v
    }

    pub fn forward<T: Real>(
        &self,
        ctx: &mut Ctx<'_, T>,
        e: &Tensor<T>,
        g: &Tensor<T>,
        p: &Tensor<T>,
    ) -> Result<GamOutput<T>> {
        let shape_err = |msg: String| Error::Shape { op: "gam", msg };
        if channels(e) != self.channels {
            return Err(shape_err(format!(
                "GAM{}: E has {:?}",
                self.level,
                e.shape()
            )));
        }
        if channels(g) != 2 * self.channels {
            return Err(shape_err(format!(
                "GAM{}: G has {:?}",
                self.level,
                g.shape()
            )));
        }
        let (h, w) = spatial(e);
        if channels(p) != 1 || spatial(p) != (h, w) || p.rank() != e.rank() {
            return Err(shape_err(format!(
                "GAM{}: P has {:?}, E has {:?}",
                self.level,
                p.shape(),
                e.shape()
            )));
        }
        let g = self.g_proj.forward(ctx, g)?.bilinear_resize(h, w)?;
        debug_assert_eq!(g.shape(), e.shape());
        let axis = e.rank() - 3;
        let e_parts = e.chunk(4, axis)?;
        let g_parts = g.chunk(4, axis)?;
        let mut groups = Vec::with_capacity(4);
        for j in 0..4 {
            let mixed = Tensor::cat_channels(&[e_parts[j].clone(), g_parts[j].clone(), p.clone()])?;
            let normed = self.norms[j].forward(ctx, &mixed)?;
            groups.push(self.convs[j].forward(ctx, &normed)?);
        }
        let q = self.fuse.forward(ctx, &Tensor::cat_channels(&groups)?)?;
        Ok(GamOutput { groups, q })
    }
}
