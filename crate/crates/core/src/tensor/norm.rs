//! Batch, group and channel-wise layer normalization with per-channel affine.
//!
//! All three share one kernel: the tensor is partitioned into normalization
//! sets, each standardized with its own (biased) mean and variance, then
//! scaled and shifted per channel.

use super::{Nchw, Real, Tensor};
use crate::error::{shape_err, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running mean/variance kept by a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// How elements are grouped into normalization sets.
#[derive(Debug, Clone, Copy)]
enum Sets {
    /// one set per channel, spanning batch and space
    PerChannel,
    /// one set per (sample, channel group)
    PerGroup(usize),
    /// one set per (sample, location), spanning channels
    PerLocation,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    d: Nchw,
    sets: Sets,
}

impl Layout {
    fn count(&self) -> usize {
        let d = &self.d;
        match self.sets {
            Sets::PerChannel => d.c,
            Sets::PerGroup(g) => d.n * g,
            Sets::PerLocation => d.n * d.plane(),
        }
    }

    fn size(&self) -> usize {
        let d = &self.d;
        match self.sets {
            Sets::PerChannel => d.n * d.plane(),
            Sets::PerGroup(g) => d.c / g * d.plane(),
            Sets::PerLocation => d.c,
        }
    }

    /// Flat indices of set `k`.
    fn indices(&self, k: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        let d = self.d;
        let hw = d.plane();
        match self.sets {
            Sets::PerChannel => Box::new((0..d.n).flat_map(move |n| {
                let base = (n * d.c + k) * hw;
                base..base + hw
            })),
            Sets::PerGroup(g) => {
                let cg = d.c / g;
                let (n, gi) = (k / g, k % g);
                let base = (n * d.c + gi * cg) * hw;
                Box::new(base..base + cg * hw)
            }
            Sets::PerLocation => {
                let (n, p) = (k / hw, k % hw);
                let base = n * d.c * hw + p;
                Box::new((0..d.c).map(move |c| base + c * hw))
            }
        }
    }

    fn channel_of(&self, idx: usize) -> usize {
        (idx / self.d.plane()) % self.d.c
    }
}

struct Normalized<T> {
    out: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

fn normalize<T: Real>(
    x: &[T],
    layout: &Layout,
    gamma: &[T],
    beta: &[T],
    fixed: Option<(&[T], &[T])>,
) -> Normalized<T> {
    let eps = T::lit(NORM_EPS);
    let m = T::lit(layout.size() as f64);
    let count = layout.count();
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(count);
    let mut means = Vec::with_capacity(count);
    let mut vars = Vec::with_capacity(count);
    for k in 0..count {
        let (mean, var) = match fixed {
            Some((fm, fv)) => (fm[k], fv[k]),
            None => {
                let mean = layout.indices(k).map(|i| x[i]).sum::<T>() / m;
                let var = layout
                    .indices(k)
                    .map(|i| {
                        let dv = x[i] - mean;
                        dv * dv
                    })
                    .sum::<T>()
                    / m;
                (mean, var)
            }
        };
        let is = T::one() / (var + eps).sqrt();
        for i in layout.indices(k) {
            let c = layout.channel_of(i);
            let xh = (x[i] - mean) * is;
            xhat[i] = xh;
            out[i] = xh * gamma[c] + beta[c];
        }
        inv_std.push(is);
        means.push(mean);
        vars.push(var);
    }
    Normalized {
        out,
        xhat,
        inv_std,
        mean: means,
        var: vars,
    }
}

fn check_affine<T: Real>(
    op: &'static str,
    c: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return shape_err(
            op,
            format!(
                "affine params {:?}/{:?} do not match {c} channels",
                gamma.shape(),
                beta.shape()
            ),
        );
    }
    Ok(())
}

fn norm_op<T: Real>(
    name: &'static str,
    x: &Tensor<T>,
    layout: Layout,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    fixed: Option<(&[T], &[T])>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let frozen = fixed.is_some();
    let gd = gamma.shared_data();
    let norm = normalize(x.data(), &layout, &gd, beta.data(), fixed);
    let Normalized {
        out,
        xhat,
        inv_std,
        mean,
        var,
    } = norm;
    let c = layout.d.c;
    let t = Tensor::from_op(
        name,
        x.shape().to_vec(),
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |g, needs| {
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for (i, (&gv, &xh)) in g.iter().zip(&xhat).enumerate() {
                let ch = layout.channel_of(i);
                dgamma[ch] += gv * xh;
                dbeta[ch] += gv;
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![T::zero(); g.len()];
                let m = T::lit(layout.size() as f64);
                for (k, &is) in inv_std.iter().enumerate() {
                    if frozen {
                        for i in layout.indices(k) {
                            dx[i] = g[i] * gd[layout.channel_of(i)] * is;
                        }
                        continue;
                    }
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for i in layout.indices(k) {
                        let dxh = g[i] * gd[layout.channel_of(i)];
                        sum_d += dxh;
                        sum_dx += dxh * xhat[i];
                    }
                    for i in layout.indices(k) {
                        let dxh = g[i] * gd[layout.channel_of(i)];
                        dx[i] = is / m * (m * dxh - sum_d - xhat[i] * sum_dx);
                    }
                }
                dx
            });
            vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
        },
    )?;
    Ok((t, mean, var))
}

impl<T: Real> Tensor<T> {
    /// Batch normalization over batch and spatial axes, per channel.
    ///
    /// In training mode the batch statistics are used and `stats` is updated
    /// with momentum 0.1 (unbiased variance); in eval mode `stats` is used.
    pub fn batch_norm(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &mut RunningStats<T>,
        training: bool,
    ) -> Result<Tensor<T>> {
        let d = Nchw::of("batch_norm", self.shape())?;
        check_affine("batch_norm", d.c, gamma, beta)?;
        if stats.mean.len() != d.c || stats.var.len() != d.c {
            return shape_err("batch_norm", "running statistics do not match channels");
        }
        let layout = Layout {
            d,
            sets: Sets::PerChannel,
        };
        if !training {
            let (t, _, _) = norm_op(
                "batch_norm",
                self,
                layout,
                gamma,
                beta,
                Some((&stats.mean, &stats.var)),
            )?;
            return Ok(t);
        }
        let (t, mean, var) = norm_op("batch_norm", self, layout, gamma, beta, None)?;
        let m = layout.size() as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        let mom = T::lit(BN_MOMENTUM);
        let keep = T::one() - mom;
        for c in 0..d.c {
            stats.mean[c] = keep * stats.mean[c] + mom * mean[c];
            stats.var[c] = keep * stats.var[c] + mom * var[c] * T::lit(unbias);
        }
        Ok(t)
    }

    /// Group normalization: per sample, over `C/groups` channels and space.
    pub fn group_norm(
        &self,
        groups: usize,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let d = Nchw::of("group_norm", self.shape())?;
        if groups == 0 || d.c % groups != 0 {
            return shape_err(
                "group_norm",
                format!("{groups} groups do not divide {} channels", d.c),
            );
        }
        check_affine("group_norm", d.c, gamma, beta)?;
        let layout = Layout {
            d,
            sets: Sets::PerGroup(groups),
        };
        Ok(norm_op("group_norm", self, layout, gamma, beta, None)?.0)
    }

    /// Layer normalization across the channel axis at every spatial location.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
        let d = Nchw::of("layer_norm", self.shape())?;
        check_affine("layer_norm", d.c, gamma, beta)?;
        let layout = Layout {
            d,
            sets: Sets::PerLocation,
        };
        Ok(norm_op("layer_norm", self, layout, gamma, beta, None)?.0)
    }
}
