//! Multi-scale upsampling.
//!
//! Trunk: two GHPA stages widen `F` from `Cf` to `4·Cf` channels, then a
//! ×2 pixel shuffle returns to `Cf` at twice the resolution. Two auxiliary
//! paths at the input resolution (GHPA without shuffle, and identity) are
//! summed, bilinearly upsampled ×2 and added to the trunk. Five heads
//! (1×1 conv, then bilinear resize) produce `G_1..G_5`.

use super::ghpa::Ghpa;
use super::layers::{spatial, Conv};
use super::params::{Ctx, ParamSpec};
use super::shapes::{global_feature_shape, StageShapeSpec};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Mub {
    pub c0: usize,
    pub height: usize,
    pub width: usize,
    trunk: [Ghpa; 2],
    aux: Ghpa,
    heads: Vec<Conv>,
}

#[derive(Debug, Clone)]
pub struct MubOutput<T: Real> {
    /// trunk after the two GHPA stages (`4·Cf` channels)
    pub expanded: Tensor<T>,
    /// fused features ahead of the heads (`Cf` channels, 2× resolution)
    pub fused: Tensor<T>,
    /// `G_1..G_5`
    pub globals: Vec<Tensor<T>>,
}

impl Mub {
    pub fn new(c0: usize, height: usize, width: usize, grid: usize) -> Result<Self> {
        let cf = c0 << 5;
        Ok(Mub {
            c0,
            height,
            width,
            trunk: [
                Ghpa::new("mub.trunk1", cf, 2 * cf, grid)?,
                Ghpa::new("mub.trunk2", 2 * cf, 4 * cf, grid)?,
            ],
            aux: Ghpa::new("mub.aux", cf, cf, grid)?,
            heads: (1..=5)
                .map(|i| Conv::pointwise(format!("mub.head{i}"), cf, c0 << i))
                .collect(),
        })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.trunk[0].specs();
        v.extend(self.trunk[1].specs());
        v.extend(self.aux.specs());
        for h in &self.heads {
            v.extend(h.specs());
        }
        v
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, f: &Tensor<T>) -> Result<MubOutput<T>> {
        let want = global_feature_shape(self.c0, self.height, self.width);
        let s = f.shape();
        if s.len() < 3 || s[s.len() - 3..] != want {
            return Err(Error::Shape {
                op: "mub",
                msg: format!("F has shape {s:?}, expected {want:?}"),
            });
        }
        let (h, w) = spatial(f);
        let wide = self.trunk[0].forward(ctx, f)?;
        let expanded = self.trunk[1].forward(ctx, &wide)?;
        let trunk = expanded.pixel_shuffle(2)?;
        let side = self
            .aux
            .forward(ctx, f)?
            .add(f)?
            .bilinear_resize(2 * h, 2 * w)?;
        let fused = trunk.add(&side)?;
        let mut globals = Vec::with_capacity(5);
        for (i, head) in self.heads.iter().enumerate() {
            let spec = StageShapeSpec::new(self.c0, self.height, self.width, i + 1);
            let g = head
                .forward(ctx, &fused)?
                .bilinear_resize(spec.global[1], spec.global[2])?;
            globals.push(g);
        }
        Ok(MubOutput {
            expanded,
            fused,
            globals,
        })
    }
}
