//! Sub-pixel rearrangement between channel blocks and spatial grids.

use super::{Nchw, Real, Tensor};
use crate::error::{shape_err, Result};

/// Index map for pixel shuffle: `shuffled[k] = source[map[k]]`.
fn shuffle_map(n: usize, c: usize, h: usize, w: usize, r: usize) -> Vec<usize> {
    // source layout: n × (c·r²) × h × w ; output: n × c × (h·r) × (w·r)
    let (oh, ow) = (h * r, w * r);
    let mut map = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                let (hh, a) = (y / r, y % r);
                for x in 0..ow {
                    let (ww, bb) = (x / r, x % r);
                    let src_c = ch * r * r + a * r + bb;
                    map.push(((b * c * r * r + src_c) * h + hh) * w + ww);
                }
            }
        }
    }
    map
}

fn permute<T: Real>(
    name: &'static str,
    x: &Tensor<T>,
    shape: Vec<usize>,
    gather: Vec<usize>,
) -> Result<Tensor<T>> {
    let xd = x.data();
    let out: Vec<T> = gather.iter().map(|&i| xd[i]).collect();
    let n = x.numel();
    Tensor::from_op(name, shape, out, vec![x.clone()], move |g, _| {
        let mut gx = vec![T::zero(); n];
        for (k, &src) in gather.iter().enumerate() {
            gx[src] = g[k];
        }
        vec![Some(gx)]
    })
}

impl<T: Real> Tensor<T> {
    /// `out[c, h·r+a, w·r+b] = in[c·r² + a·r + b, h, w]`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor<T>> {
        let d = Nchw::of("pixel_shuffle", self.shape())?;
        if r == 0 || d.c % (r * r) != 0 {
            return shape_err(
                "pixel_shuffle",
                format!("{} channels not divisible by r²={}", d.c, r * r),
            );
        }
        let c = d.c / (r * r);
        let map = shuffle_map(d.n, c, d.h, d.w, r);
        permute(
            "pixel_shuffle",
            self,
            d.shape_with(c, d.h * r, d.w * r),
            map,
        )
    }

    /// Exact inverse of [`Tensor::pixel_shuffle`].
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Tensor<T>> {
        let d = Nchw::of("pixel_unshuffle", self.shape())?;
        if r == 0 || d.h % r != 0 || d.w % r != 0 {
            return shape_err(
                "pixel_unshuffle",
                format!("extent {}×{} not divisible by r={r}", d.h, d.w),
            );
        }
        let (h, w) = (d.h / r, d.w / r);
        // invert the shuffle map: shuffled position k came from source map[k]
        let fwd = shuffle_map(d.n, d.c, h, w, r);
        let mut inv = vec![0usize; fwd.len()];
        for (k, &src) in fwd.iter().enumerate() {
            inv[src] = k;
        }
        permute(
            "pixel_unshuffle",
            self,
            d.shape_with(d.c * r * r, h, w),
            inv,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_rule() {
        let x = Tensor::<f32>::from_vec(&[4, 1, 1], vec![1., 2., 3., 4.]).unwrap();
        let y = x.pixel_shuffle(2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.to_vec(), vec![1., 2., 3., 4.]);
        let back = y.pixel_unshuffle(2).unwrap();
        assert_eq!(back.shape(), &[4, 1, 1]);
        assert_eq!(back.to_vec(), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn rejects_bad_channels() {
        let x = Tensor::<f32>::zeros(&[3, 2, 2]).unwrap();
        assert!(x.pixel_shuffle(2).is_err());
        assert!(x.pixel_unshuffle(3).is_err());
    }
}
