//! Spatial resampling: bilinear resize, adaptive average pooling, 2×2 max-pool.

use super::{Nchw, Real, Tensor};
use crate::error::{shape_err, Result};

/// Source taps for one output coordinate (half-pixel centers, edge-clamped).
#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Real>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = if lo == input - 1 {
                0.0
            } else {
                src - lo as f64
            };
            Tap {
                lo,
                hi,
                frac: T::lit(frac),
            }
        })
        .collect()
}

/// Inclusive-exclusive source window of adaptive pooling cell `i`.
pub(crate) fn pool_window(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

impl<T: Real> Tensor<T> {
    /// Bilinear interpolation to `out_h × out_w` (align-corners off).
    pub fn bilinear_resize(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let d = Nchw::of("bilinear_resize", self.shape())?;
        if out_h == 0 || out_w == 0 {
            return shape_err("bilinear_resize", "target size must be positive");
        }
        if out_h == d.h && out_w == d.w {
            let data = self.data().to_vec();
            return Tensor::from_op(
                "bilinear_resize",
                self.shape().to_vec(),
                data,
                vec![self.clone()],
                |g, _| vec![Some(g.to_vec())],
            );
        }
        let ty = taps::<T>(d.h, out_h);
        let tx = taps::<T>(d.w, out_w);
        let x = self.data();
        let one = T::one();
        let mut out = Vec::with_capacity(d.n * d.c * out_h * out_w);
        for plane in x.chunks(d.plane()) {
            for t in &ty {
                let r0 = &plane[t.lo * d.w..(t.lo + 1) * d.w];
                let r1 = &plane[t.hi * d.w..(t.hi + 1) * d.w];
                for s in &tx {
                    let top = (one - s.frac) * r0[s.lo] + s.frac * r0[s.hi];
                    let bot = (one - s.frac) * r1[s.lo] + s.frac * r1[s.hi];
                    out.push((one - t.frac) * top + t.frac * bot);
                }
            }
        }
        let (h, w, planes) = (d.h, d.w, d.n * d.c);
        Tensor::from_op(
            "bilinear_resize",
            d.shape_with(d.c, out_h, out_w),
            out,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![T::zero(); planes * h * w];
                for (p, gp) in g.chunks(out_h * out_w).enumerate() {
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for (oy, t) in ty.iter().enumerate() {
                        for (ox, s) in tx.iter().enumerate() {
                            let gv = gp[oy * out_w + ox];
                            let top = gv * (one - t.frac);
                            let bot = gv * t.frac;
                            dst[t.lo * w + s.lo] += top * (one - s.frac);
                            dst[t.lo * w + s.hi] += top * s.frac;
                            dst[t.hi * w + s.lo] += bot * (one - s.frac);
                            dst[t.hi * w + s.hi] += bot * s.frac;
                        }
                    }
                }
                vec![Some(gx)]
            },
        )
    }

    /// Average over floor/ceil windows so the output is `out_h × out_w`.
    pub fn adaptive_avg_pool(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let d = Nchw::of("adaptive_avg_pool", self.shape())?;
        if out_h == 0 || out_w == 0 || out_h > d.h || out_w > d.w {
            return shape_err(
                "adaptive_avg_pool",
                format!("target {out_h}×{out_w} invalid for input {}×{}", d.h, d.w),
            );
        }
        let wy: Vec<_> = (0..out_h).map(|i| pool_window(i, d.h, out_h)).collect();
        let wx: Vec<_> = (0..out_w).map(|i| pool_window(i, d.w, out_w)).collect();
        let x = self.data();
        let mut out = Vec::with_capacity(d.n * d.c * out_h * out_w);
        for plane in x.chunks(d.plane()) {
            for &(y0, y1) in &wy {
                for &(x0, x1) in &wx {
                    let mut acc = T::zero();
                    for yy in y0..y1 {
                        for &v in &plane[yy * d.w + x0..yy * d.w + x1] {
                            acc += v;
                        }
                    }
                    out.push(acc / T::lit(((y1 - y0) * (x1 - x0)) as f64));
                }
            }
        }
        let (h, w, planes) = (d.h, d.w, d.n * d.c);
        Tensor::from_op(
            "adaptive_avg_pool",
            d.shape_with(d.c, out_h, out_w),
            out,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![T::zero(); planes * h * w];
                for (p, gp) in g.chunks(out_h * out_w).enumerate() {
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for (oy, &(y0, y1)) in wy.iter().enumerate() {
                        for (ox, &(x0, x1)) in wx.iter().enumerate() {
                            let share =
                                gp[oy * out_w + ox] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                            for yy in y0..y1 {
                                for v in &mut dst[yy * w + x0..yy * w + x1] {
                                    *v += share;
                                }
                            }
                        }
                    }
                }
                vec![Some(gx)]
            },
        )
    }

    /// Non-overlapping 2×2 max-pool; ties resolve to the first element in
    /// row-major order.
    pub fn max_pool2x2(&self) -> Result<Tensor<T>> {
        let d = Nchw::of("max_pool2x2", self.shape())?;
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return shape_err("max_pool2x2", format!("odd extent {}×{}", d.h, d.w));
        }
        let (oh, ow) = (d.h / 2, d.w / 2);
        let x = self.data();
        let mut out = Vec::with_capacity(d.n * d.c * oh * ow);
        let mut arg = Vec::with_capacity(out.capacity());
        for (p, plane) in x.chunks(d.plane()).enumerate() {
            for i in 0..oh {
                for j in 0..ow {
                    let cands = [
                        (2 * i) * d.w + 2 * j,
                        (2 * i) * d.w + 2 * j + 1,
                        (2 * i + 1) * d.w + 2 * j,
                        (2 * i + 1) * d.w + 2 * j + 1,
                    ];
                    let mut best = cands[0];
                    for &c in &cands[1..] {
                        if plane[c] > plane[best] {
                            best = c;
                        }
                    }
                    out.push(plane[best]);
                    arg.push(p * d.plane() + best);
                }
            }
        }
        let n = self.numel();
        Tensor::from_op(
            "max_pool2x2",
            d.shape_with(d.c, oh, ow),
            out,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![T::zero(); n];
                for (k, &src) in arg.iter().enumerate() {
                    gx[src] += g[k];
                }
                vec![Some(gx)]
            },
        )
    }
}
