//! Single-level orthonormal 2-D Haar transform on disjoint 2×2 blocks.
//!
//! For a block `[[a, b], [c, d]]`:
//!
//! ```text
//! LL = (a + b + c + d) / 2     approximation
//! LH = (a - b + c - d) / 2     horizontal detail
//! LV = (a + b - c - d) / 2     vertical detail
//! LD = (a - b - c + d) / 2     diagonal detail
//! ```
//!
//! The transform matrix is symmetric and orthogonal, so the inverse (and the
//! backward pass of either direction) applies the same butterfly.

use super::{Nchw, Real, Tensor};
use crate::error::{shape_err, Result};

/// The four half-resolution subbands.
#[derive(Debug, Clone)]
pub struct HaarBands<T: Real> {
    pub ll: Tensor<T>,
    pub lh: Tensor<T>,
    pub lv: Tensor<T>,
    pub ld: Tensor<T>,
}

#[inline]
fn butterfly<T: Real>(a: T, b: T, c: T, d: T) -> [T; 4] {
    let half = T::lit(0.5);
    [
        (a + b + c + d) * half,
        (a - b + c - d) * half,
        (a + b - c - d) * half,
        (a - b - c + d) * half,
    ]
}

/// Full resolution `n×c×h×w` → band-major `n×4c×h/2×w/2`.
fn analyze<T: Real>(x: &[T], n: usize, c: usize, h: usize, w: usize) -> Vec<T> {
    let (hh, hw) = (h / 2, w / 2);
    let band = c * hh * hw;
    let mut out = vec![T::zero(); n * 4 * band];
    for b in 0..n {
        for ch in 0..c {
            let src = &x[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
            for i in 0..hh {
                for j in 0..hw {
                    let p = 2 * i * w + 2 * j;
                    let coeffs = butterfly(src[p], src[p + 1], src[p + w], src[p + w + 1]);
                    let off = ch * hh * hw + i * hw + j;
                    for (k, v) in coeffs.into_iter().enumerate() {
                        out[b * 4 * band + k * band + off] = v;
                    }
                }
            }
        }
    }
    out
}

/// Band-major `n×4c×h/2×w/2` → full resolution `n×c×h×w`.
fn synthesize<T: Real>(x: &[T], n: usize, c: usize, hh: usize, hw: usize) -> Vec<T> {
    let (h, w) = (2 * hh, 2 * hw);
    let band = c * hh * hw;
    let mut out = vec![T::zero(); n * c * h * w];
    for b in 0..n {
        let src = &x[b * 4 * band..(b + 1) * 4 * band];
        for ch in 0..c {
            let dst = &mut out[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
            for i in 0..hh {
                for j in 0..hw {
                    let off = ch * hh * hw + i * hw + j;
                    let [a, bb, cc, d] = butterfly(
                        src[off],
                        src[band + off],
                        src[2 * band + off],
                        src[3 * band + off],
                    );
                    let p = 2 * i * w + 2 * j;
                    dst[p] = a;
                    dst[p + 1] = bb;
                    dst[p + w] = cc;
                    dst[p + w + 1] = d;
                }
            }
        }
    }
    out
}

impl<T: Real> Tensor<T> {
    /// Forward transform with the subbands stacked along channels in the
    /// order `[LL, LH, LV, LD]`, each `C` channels wide.
    pub fn haar_dwt2_stacked(&self) -> Result<Tensor<T>> {
        let d = Nchw::of("haar_dwt2", self.shape())?;
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return shape_err("haar_dwt2", format!("odd spatial extent {}×{}", d.h, d.w));
        }
        let out = analyze(self.data(), d.n, d.c, d.h, d.w);
        let (n, c, hh, hw) = (d.n, d.c, d.h / 2, d.w / 2);
        Tensor::from_op(
            "haar_dwt2",
            d.shape_with(4 * d.c, hh, hw),
            out,
            vec![self.clone()],
            move |g, _| vec![Some(synthesize(g, n, c, hh, hw))],
        )
    }

    pub fn haar_dwt2(&self) -> Result<HaarBands<T>> {
        let stacked = self.haar_dwt2_stacked()?;
        let axis = if stacked.rank() == 4 { 1 } else { 0 };
        let mut bands = stacked.chunk(4, axis)?.into_iter();
        let mut next = || bands.next().expect("four bands");
        Ok(HaarBands {
            ll: next(),
            lh: next(),
            lv: next(),
            ld: next(),
        })
    }

    /// Inverse of [`Tensor::haar_dwt2_stacked`].
    pub fn haar_idwt2_stacked(&self) -> Result<Tensor<T>> {
        let d = Nchw::of("haar_idwt2", self.shape())?;
        if d.c % 4 != 0 {
            return shape_err("haar_idwt2", format!("{} channels is not four bands", d.c));
        }
        let c = d.c / 4;
        let out = synthesize(self.data(), d.n, c, d.h, d.w);
        let (n, h, w) = (d.n, 2 * d.h, 2 * d.w);
        Tensor::from_op(
            "haar_idwt2",
            d.shape_with(c, h, w),
            out,
            vec![self.clone()],
            move |g, _| vec![Some(analyze(g, n, c, h, w))],
        )
    }

    pub fn haar_idwt2(
        ll: &Tensor<T>,
        lh: &Tensor<T>,
        lv: &Tensor<T>,
        ld: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let shape = ll.shape();
        if [lh, lv, ld].iter().any(|b| b.shape() != shape) {
            return shape_err("haar_idwt2", "subband shapes differ");
        }
        Tensor::cat_channels(&[ll.clone(), lh.clone(), lv.clone(), ld.clone()])?
            .haar_idwt2_stacked()
    }
}

impl<T: Real> HaarBands<T> {
    pub fn inverse(&self) -> Result<Tensor<T>> {
        Tensor::haar_idwt2(&self.ll, &self.lh, &self.lv, &self.ld)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_only_approximation() {
        let x = Tensor::<f32>::full(&[2, 4, 4], 1.5).unwrap();
        let b = x.haar_dwt2().unwrap();
        assert!(b.ll.data().iter().all(|&v| v == 3.0));
        for band in [&b.lh, &b.lv, &b.ld] {
            assert!(band.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_corner_pixel() {
        let x = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1., 0., 0., 0.]).unwrap();
        let b = x.haar_dwt2().unwrap();
        for band in [&b.ll, &b.lh, &b.lv, &b.ld] {
            assert_eq!(band.to_vec(), vec![0.5]);
        }
    }

    #[test]
    fn detail_orientation() {
        // left/right difference shows up in LH, top/bottom in LV
        let lr = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1., 0., 1., 0.]).unwrap();
        let b = lr.haar_dwt2().unwrap();
        assert_eq!(b.lh.to_vec(), vec![1.0]);
        assert_eq!(b.lv.to_vec(), vec![0.0]);
        let tb = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1., 1., 0., 0.]).unwrap();
        let b = tb.haar_dwt2().unwrap();
        assert_eq!(b.lv.to_vec(), vec![1.0]);
        assert_eq!(b.lh.to_vec(), vec![0.0]);
    }

    #[test]
    fn zero_bands_give_zero_image() {
        let z = Tensor::<f32>::zeros(&[3, 2, 2]).unwrap();
        let img = Tensor::haar_idwt2(&z, &z, &z, &z).unwrap();
        assert_eq!(img.shape(), &[3, 4, 4]);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_extent_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4]).unwrap();
        assert!(x.haar_dwt2().is_err());
    }
}
