//! Multi-scale aggregation: every encoder level pooled to the deepest grid,
//! projected to `32·c0` channels and summed with `E_6 = CBAM(GHPA(E_5))`.

use super::cbam::Cbam;
use super::ghpa::Ghpa;
use super::layers::{spatial, Conv};
use super::params::{Ctx, ParamSpec};
use super::shapes::StageShapeSpec;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Mab {
    pub c0: usize,
    pub height: usize,
    pub width: usize,
    /// per-level pooling projections; empty when aggregation is disabled
    proj: Vec<Conv>,
    ghpa: Ghpa,
    cbam: Cbam,
}

#[derive(Debug, Clone)]
pub struct MabOutput<T: Real> {
    pub f: Tensor<T>,
    pub e6: Tensor<T>,
}

impl Mab {
    pub fn new(
        c0: usize,
        height: usize,
        width: usize,
        grid: usize,
        aggregate: bool,
    ) -> Result<Self> {
        let cf = c0 << 5;
        let proj = if aggregate {
            (1..=5)
                .map(|i| Conv::pointwise(format!("mab.proj{i}"), c0 << (i - 1), cf))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Mab {
            c0,
            height,
            width,
            proj,
            ghpa: Ghpa::new("mab.ghpa", c0 << 4, cf, grid)?,
            cbam: Cbam::new("mab.cbam", cf)?,
        })
    }

    pub fn aggregates(&self) -> bool {
        !self.proj.is_empty()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v: Vec<ParamSpec> = self.proj.iter().flat_map(|c| c.specs()).collect();
        v.extend(self.ghpa.specs());
        v.extend(self.cbam.specs());
        v
    }

    pub fn forward<T: Real>(
        &self,
        ctx: &mut Ctx<'_, T>,
        encoded: &[Tensor<T>],
    ) -> Result<MabOutput<T>> {
        if encoded.len() != 5 {
            return Err(Error::Shape {
                op: "mab",
                msg: format!("expected 5 encoder maps, got {}", encoded.len()),
            });
        }
        for (i, e) in encoded.iter().enumerate() {
            let want = StageShapeSpec::new(self.c0, self.height, self.width, i + 1).encoder;
            let s = e.shape();
            if s[s.len() - 3..] != want {
                return Err(Error::Shape {
                    op: "mab",
                    msg: format!("E{} has shape {:?}, expected {:?}", i + 1, s, want),
                });
            }
        }
        let (th, tw) = spatial(&encoded[4]);
        let g = self.ghpa.forward(ctx, &encoded[4])?;
        let e6 = self.cbam.forward(ctx, &g)?;
        let mut f = e6.clone();
        for (conv, e) in self.proj.iter().zip(encoded) {
            let pooled = e.adaptive_avg_pool(th, tw)?;
            f = f.add(&conv.forward(ctx, &pooled)?)?;
        }
        Ok(MabOutput { f, e6 })
    }
}
