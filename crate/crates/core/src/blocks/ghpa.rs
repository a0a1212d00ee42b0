//! Grouped Hadamard-product attention.
//!
//! The input is group-normalized and split into four channel quarters:
//!
//! 1. Hadamard product with a learnable `g×g` grid resized to `H×W`
//! 2. Hadamard product with a learnable length-`g` column resized to `H`,
//!    broadcast along `W`
//! 3. the same along `W`, broadcast along `H`
//! 4. identity
//!
//! Each quarter then passes through its own depthwise 3×3 filter; the
//! quarters are concatenated, rectified and mixed by a 1×1 convolution.
//! Cost is linear in `H·W`.

use super::layers::{Conv, Norm, NormKind};
use super::params::{Ctx, Init, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_GRID: usize = 8;
const GRID_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Ghpa {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub grid: usize,
    norm: Norm,
    dw: [Conv; 4],
    proj: Conv,
}

impl Ghpa {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, grid: usize) -> Result<Self> {
        let name = name.into();
        if !cin.is_multiple_of(4) || cin == 0 {
            return Err(Error::Config(format!(
                "{name}: GHPA input channels {cin} not divisible by 4"
            )));
        }
        let q = cin / 4;
        let dw = std::array::from_fn(|i| Conv::depthwise(format!("{name}.dw{}", i + 1), q));
        Ok(Ghpa {
            norm: Norm::new(format!("{name}.norm"), cin, NormKind::Group(4)),
            dw,
            proj: Conv::pointwise(format!("{name}.proj"), cin, cout),
            name,
            cin,
            cout,
            grid,
        })
    }

    fn grid_names(&self) -> [String; 3] {
        [
            format!("{}.grid_hw", self.name),
            format!("{}.grid_h", self.name),
            format!("{}.grid_w", self.name),
        ]
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let (q, g) = (self.cin / 4, self.grid);
        let init = Init::Normal {
            mean: 1.0,
            std: GRID_STD,
        };
        let [hw, h, w] = self.grid_names();
        let mut v = self.norm.specs();
        v.push(ParamSpec::new(hw, &[q, g, g], init));
        v.push(ParamSpec::new(h, &[q, g, 1], init));
        v.push(ParamSpec::new(w, &[q, 1, g], init));
        for dw in &self.dw {
            v.extend(dw.specs());
        }
        v.extend(self.proj.specs());
        v
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let axis = x.rank() - 3;
        if x.shape()[axis] != self.cin {
            return Err(Error::Shape {
                op: "ghpa",
                msg: format!(
                    "{}: expected {} channels, got {:?}",
                    self.name,
                    self.cin,
                    x.shape()
                ),
            });
        }
        let (h, w) = super::layers::spatial(x);
        let xn = self.norm.forward(ctx, x)?;
        let parts = xn.chunk(4, axis)?;
        let [hw_name, h_name, w_name] = self.grid_names();
        let grid_hw = ctx.param(&hw_name)?.bilinear_resize(h, w)?;
        let grid_h = ctx.param(&h_name)?.bilinear_resize(h, 1)?;
        let grid_w = ctx.param(&w_name)?.bilinear_resize(1, w)?;
        let gated = [
            parts[0].mul(&grid_hw)?,
            parts[1].mul(&grid_h)?,
            parts[2].mul(&grid_w)?,
            parts[3].clone(),
        ];
        let mut branches = Vec::with_capacity(4);
        for (dw, part) in self.dw.iter().zip(&gated) {
            branches.push(dw.forward(ctx, part)?);
        }
        self.proj
            .forward(ctx, &Tensor::cat_channels(&branches)?.relu()?)
    }
}
