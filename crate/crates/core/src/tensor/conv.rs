//! 2-D cross-correlation with stride, zero padding, dilation and groups.
//!
//! Three kernels share one contract: a direct loop for depthwise filters
//! (one input and one output channel per group), a plain GEMM for unpadded
//! stride-1 `1×1` filters, and im2col + GEMM for everything else.

use rayon::prelude::*;

use super::{gemm, Nchw, Real, Tensor};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dArgs {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dArgs {
    fn default() -> Self {
        Conv2dArgs {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv2dArgs {
    pub fn padding(padding: usize) -> Self {
        Conv2dArgs {
            padding,
            ..Default::default()
        }
    }

    pub fn dilated(dilation: usize) -> Self {
        Conv2dArgs {
            padding: dilation,
            dilation,
            ..Default::default()
        }
    }
}

/// Output extent, or `None` when the dilated kernel does not fit.
pub fn conv_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    dil: usize,
) -> Option<usize> {
    let span = dil * (kernel - 1) + 1;
    if stride == 0 || input + 2 * pad < span {
        return None;
    }
    Some((input + 2 * pad - span) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
    dil: usize,
    groups: usize,
    cin_g: usize,
    cout_g: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Depthwise,
    Pointwise,
    Im2col,
}

impl Geometry {
    fn kernel(&self) -> Kernel {
        if self.cin_g == 1 && self.cout_g == 1 {
            Kernel::Depthwise
        } else if self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0 {
            Kernel::Pointwise
        } else {
            Kernel::Im2col
        }
    }

    fn in_sample(&self) -> usize {
        self.cin * self.h * self.w
    }

    fn out_sample(&self) -> usize {
        self.cout * self.ho * self.wo
    }

    fn k_group(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    /// Output positions `o` along one axis whose tap `o*stride + off - pad`
    /// falls inside `[0, len)`.
    fn valid(&self, off: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = off as isize - self.pad as isize;
        // o*s + shift >= 0  and  o*s + shift <= len-1
        let lo = if shift >= 0 {
            0
        } else {
            ((-shift) + s - 1) / s
        };
        let hi_num = len as isize - 1 - shift;
        if hi_num < 0 {
            return (0, 0);
        }
        let hi = (hi_num / s + 1).min(out_len as isize);
        (lo as usize, hi.max(lo) as usize)
    }
}

fn im2col<T: Real>(geo: &Geometry, x: &[T], col: &mut [T]) {
    let plane = geo.ho * geo.wo;
    col.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..geo.cin_g {
        let xc = &x[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
        for ki in 0..geo.kh {
            let (oh_lo, oh_hi) = geo.valid(ki * geo.dil, geo.h, geo.ho);
            for kj in 0..geo.kw {
                let (ow_lo, ow_hi) = geo.valid(kj * geo.dil, geo.w, geo.wo);
                let row = (c * geo.kh + ki) * geo.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oh in oh_lo..oh_hi {
                    let ih = oh * geo.stride + ki * geo.dil - geo.pad;
                    for ow in ow_lo..ow_hi {
                        let iw = ow * geo.stride + kj * geo.dil - geo.pad;
                        dst[oh * geo.wo + ow] = xc[ih * geo.w + iw];
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(geo: &Geometry, col: &[T], dx: &mut [T]) {
    let plane = geo.ho * geo.wo;
    for c in 0..geo.cin_g {
        let dxc = &mut dx[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
        for ki in 0..geo.kh {
            let (oh_lo, oh_hi) = geo.valid(ki * geo.dil, geo.h, geo.ho);
            for kj in 0..geo.kw {
                let (ow_lo, ow_hi) = geo.valid(kj * geo.dil, geo.w, geo.wo);
                let row = (c * geo.kh + ki) * geo.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oh in oh_lo..oh_hi {
                    let ih = oh * geo.stride + ki * geo.dil - geo.pad;
                    for ow in ow_lo..ow_hi {
                        let iw = ow * geo.stride + kj * geo.dil - geo.pad;
                        dxc[ih * geo.w + iw] += src[oh * geo.wo + ow];
                    }
                }
            }
        }
    }
}

fn forward_sample<T: Real>(geo: &Geometry, x: &[T], wt: &[T], out: &mut [T]) {
    let plane = geo.ho * geo.wo;
    let in_plane = geo.h * geo.w;
    match geo.kernel() {
        Kernel::Depthwise => {
            for c in 0..geo.cout {
                let xc = &x[c * in_plane..(c + 1) * in_plane];
                let oc = &mut out[c * plane..(c + 1) * plane];
                oc.iter_mut().for_each(|v| *v = T::zero());
                for ki in 0..geo.kh {
                    let (oh_lo, oh_hi) = geo.valid(ki * geo.dil, geo.h, geo.ho);
                    for kj in 0..geo.kw {
                        let wv = wt[(c * geo.kh + ki) * geo.kw + kj];
                        let (ow_lo, ow_hi) = geo.valid(kj * geo.dil, geo.w, geo.wo);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * geo.stride + ki * geo.dil - geo.pad;
                            let row = &xc[ih * geo.w..(ih + 1) * geo.w];
                            let orow = &mut oc[oh * geo.wo..(oh + 1) * geo.wo];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * geo.stride + kj * geo.dil - geo.pad;
                                orow[ow] += wv * row[iw];
                            }
                        }
                    }
                }
            }
        }
        Kernel::Pointwise => {
            for g in 0..geo.groups {
                let xg = &x[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                let wg = &wt[g * geo.cout_g * geo.cin_g..(g + 1) * geo.cout_g * geo.cin_g];
                let og = &mut out[g * geo.cout_g * plane..(g + 1) * geo.cout_g * plane];
                gemm(
                    geo.cout_g, geo.cin_g, plane, wg, false, xg, false, og, false,
                );
            }
        }
        Kernel::Im2col => {
            let k = geo.k_group();
            let mut col = vec![T::zero(); k * plane];
            for g in 0..geo.groups {
                let xg = &x[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                im2col(geo, xg, &mut col);
                let wg = &wt[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
                let og = &mut out[g * geo.cout_g * plane..(g + 1) * geo.cout_g * plane];
                gemm(geo.cout_g, k, plane, wg, false, &col, false, og, false);
            }
        }
    }
}

/// Accumulates this sample's weight gradient into `dw` and writes `dx` when asked.
fn backward_sample<T: Real>(
    geo: &Geometry,
    x: &[T],
    wt: &[T],
    gout: &[T],
    dw: Option<&mut [T]>,
    dx: Option<&mut [T]>,
) {
    let plane = geo.ho * geo.wo;
    let in_plane = geo.h * geo.w;
    match geo.kernel() {
        Kernel::Depthwise => {
            let mut dw = dw;
            let mut dx = dx;
            for c in 0..geo.cout {
                let xc = &x[c * in_plane..(c + 1) * in_plane];
                let gc = &gout[c * plane..(c + 1) * plane];
                for ki in 0..geo.kh {
                    let (oh_lo, oh_hi) = geo.valid(ki * geo.dil, geo.h, geo.ho);
                    for kj in 0..geo.kw {
                        let widx = (c * geo.kh + ki) * geo.kw + kj;
                        let wv = wt[widx];
                        let (ow_lo, ow_hi) = geo.valid(kj * geo.dil, geo.w, geo.wo);
                        let mut acc = T::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * geo.stride + ki * geo.dil - geo.pad;
                            for ow in ow_lo..ow_hi {
                                let iw = ow * geo.stride + kj * geo.dil - geo.pad;
                                let gv = gc[oh * geo.wo + ow];
                                acc += gv * xc[ih * geo.w + iw];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[c * in_plane + ih * geo.w + iw] += gv * wv;
                                }
                            }
                        }
                        if let Some(dw) = dw.as_deref_mut() {
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        Kernel::Pointwise => {
            let mut dw = dw;
            let mut dx = dx;
            for g in 0..geo.groups {
                let xg = &x[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                let gg = &gout[g * geo.cout_g * plane..(g + 1) * geo.cout_g * plane];
                let wrange = g * geo.cout_g * geo.cin_g..(g + 1) * geo.cout_g * geo.cin_g;
                if let Some(dw) = dw.as_deref_mut() {
                    gemm(
                        geo.cout_g,
                        plane,
                        geo.cin_g,
                        gg,
                        false,
                        xg,
                        true,
                        &mut dw[wrange.clone()],
                        true,
                    );
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let dxg = &mut dx[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                    gemm(
                        geo.cin_g,
                        geo.cout_g,
                        plane,
                        &wt[wrange],
                        true,
                        gg,
                        false,
                        dxg,
                        true,
                    );
                }
            }
        }
        Kernel::Im2col => {
            let k = geo.k_group();
            let mut col = vec![T::zero(); k * plane];
            let mut dw = dw;
            let mut dx = dx;
            for g in 0..geo.groups {
                let gg = &gout[g * geo.cout_g * plane..(g + 1) * geo.cout_g * plane];
                let wrange = g * geo.cout_g * k..(g + 1) * geo.cout_g * k;
                if let Some(dw) = dw.as_deref_mut() {
                    let xg = &x[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                    im2col(geo, xg, &mut col);
                    gemm(
                        geo.cout_g,
                        plane,
                        k,
                        gg,
                        false,
                        &col,
                        true,
                        &mut dw[wrange.clone()],
                        true,
                    );
                }
                if let Some(dx) = dx.as_deref_mut() {
                    gemm(
                        k,
                        geo.cout_g,
                        plane,
                        &wt[wrange],
                        true,
                        gg,
                        false,
                        &mut col,
                        false,
                    );
                    let dxg = &mut dx[g * geo.cin_g * in_plane..(g + 1) * geo.cin_g * in_plane];
                    col2im(geo, &col, dxg);
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Cross-correlation of `self` (`C×H×W` or `N×C×H×W`) with
    /// `weight: Cout × Cin/groups × kh × kw`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        args: Conv2dArgs,
    ) -> Result<Tensor<T>> {
        let op = "conv2d";
        let d = Nchw::of(op, self.shape())?;
        let &[cout, wcin, kh, kw] = weight.shape() else {
            return shape_err(op, format!("weight must be 4-D, got {:?}", weight.shape()));
        };
        let groups = args.groups;
        if groups == 0 || d.c % groups != 0 || cout % groups != 0 {
            return shape_err(
                op,
                format!("groups {groups} must divide Cin {} and Cout {cout}", d.c),
            );
        }
        if wcin != d.c / groups {
            return shape_err(
                op,
                format!(
                    "weight expects {} input channels per group, input has {}",
                    wcin,
                    d.c / groups
                ),
            );
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return shape_err(op, format!("bias shape {:?} != [{cout}]", b.shape()));
            }
        }
        if args.dilation == 0 {
            return shape_err(op, "dilation must be positive");
        }
        let (Some(ho), Some(wo)) = (
            conv_out_extent(d.h, kh, args.stride, args.padding, args.dilation),
            conv_out_extent(d.w, kw, args.stride, args.padding, args.dilation),
        ) else {
            return shape_err(
                op,
                format!("non-positive output extent for input {:?}", self.shape()),
            );
        };
        let geo = Geometry {
            n: d.n,
            cin: d.c,
            h: d.h,
            w: d.w,
            cout,
            kh,
            kw,
            ho,
            wo,
            stride: args.stride,
            pad: args.padding,
            dil: args.dilation,
            groups,
            cin_g: d.c / groups,
            cout_g: cout / groups,
        };

        let xd = self.shared_data();
        let wd = weight.shared_data();
        let mut out = vec![T::zero(); geo.n * geo.out_sample()];
        out.par_chunks_mut(geo.out_sample())
            .zip(xd.par_chunks(geo.in_sample()))
            .for_each(|(o, x)| forward_sample(&geo, x, &wd, o));
        if let Some(b) = bias {
            let bd = b.data();
            let plane = ho * wo;
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let bv = bd[i % cout];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }

        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        let has_bias = bias.is_some();
        Tensor::from_op(
            op,
            d.shape_with(cout, ho, wo),
            out,
            inputs,
            move |g, needs| {
                let wlen = wd.len();
                let need_dx = needs[0];
                let need_dw = needs[1];
                let mut dx = need_dx.then(|| vec![T::zero(); geo.n * geo.in_sample()]);
                let dw = need_dw.then(|| {
                    let partials: Vec<Vec<T>> = g
                        .par_chunks(geo.out_sample())
                        .zip(xd.par_chunks(geo.in_sample()))
                        .map(|(gs, xs)| {
                            let mut dw = vec![T::zero(); wlen];
                            backward_sample(&geo, xs, &wd, gs, Some(&mut dw), None);
                            dw
                        })
                        .collect();
                    let mut dw = vec![T::zero(); wlen];
                    for p in &partials {
                        super::add_into(&mut dw, p);
                    }
                    dw
                });
                if let Some(dx) = dx.as_mut() {
                    dx.par_chunks_mut(geo.in_sample())
                        .zip(g.par_chunks(geo.out_sample()))
                        .zip(xd.par_chunks(geo.in_sample()))
                        .for_each(|((dxs, gs), xs)| {
                            backward_sample(&geo, xs, &wd, gs, None, Some(dxs))
                        });
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    let db = needs[2].then(|| {
                        let plane = geo.ho * geo.wo;
                        let mut db = vec![T::zero(); geo.cout];
                        for (i, chunk) in g.chunks(plane).enumerate() {
                            db[i % geo.cout] += chunk.iter().copied().sum::<T>();
                        }
                        db
                    });
                    grads.push(db);
                }
                grads
            },
        )
    }

    /// Per-channel spatial filtering with `weight: C×1×k×k`, stride 1 and
    /// size-preserving padding. Same kernel path as `conv2d` with `groups = C`.
    pub fn depthwise_conv2d(&self, weight: &Tensor<T>, padding: usize) -> Result<Tensor<T>> {
        let d = Nchw::of("depthwise_conv2d", self.shape())?;
        let &[c, one, kh, kw] = weight.shape() else {
            return shape_err("depthwise_conv2d", "weight must be C×1×k×k");
        };
        if c != d.c || one != 1 || kh != 2 * padding + 1 || kw != 2 * padding + 1 {
            return shape_err(
                "depthwise_conv2d",
                format!(
                    "weight {:?} with padding {padding} does not preserve size",
                    weight.shape()
                ),
            );
        }
        self.conv2d(
            weight,
            None,
            Conv2dArgs {
                stride: 1,
                padding,
                dilation: 1,
                groups: c,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let x = Tensor::<f32>::from_vec(&[1, 3, 3], (0..9).map(|v| v as f32 * 0.5 - 1.0).collect())
            .unwrap();
        let w = Tensor::<f32>::ones(&[1, 1, 1, 1]).unwrap();
        let y = x.conv2d(&w, None, Conv2dArgs::default()).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn all_ones_counts_overlap() {
        let x = Tensor::<f32>::ones(&[1, 4, 4]).unwrap();
        let w = Tensor::<f32>::ones(&[1, 1, 3, 3]).unwrap();
        let y = x.conv2d(&w, None, Conv2dArgs::padding(1)).unwrap();
        let v = y.to_vec();
        assert_eq!(v[0], 4.0);
        assert_eq!(v[3], 4.0);
        assert_eq!(v[1], 6.0);
        assert_eq!(v[4], 6.0);
        assert_eq!(v[5], 9.0);
        assert_eq!(v[10], 9.0);
        assert_eq!(v[15], 4.0);
    }

    #[test]
    fn strided_output_extent() {
        assert_eq!(conv_out_extent(8, 3, 2, 1, 1), Some(4));
        assert_eq!(conv_out_extent(8, 3, 1, 2, 2), Some(8));
        assert_eq!(conv_out_extent(2, 5, 1, 0, 1), None);
    }

    #[test]
    fn errors() {
        let x = Tensor::<f32>::zeros(&[3, 4, 4]).unwrap();
        let w = Tensor::<f32>::zeros(&[4, 3, 3, 3]).unwrap();
        assert!(x
            .conv2d(
                &w,
                None,
                Conv2dArgs {
                    groups: 2,
                    ..Default::default()
                }
            )
            .is_err());
        let big = Tensor::<f32>::zeros(&[4, 3, 7, 7]).unwrap();
        assert!(x.conv2d(&big, None, Conv2dArgs::default()).is_err());
        let wrong = Tensor::<f32>::zeros(&[4, 2, 3, 3]).unwrap();
        assert!(x.conv2d(&wrong, None, Conv2dArgs::default()).is_err());
    }

    #[test]
    fn depthwise_channels_do_not_mix() {
        let mut xs = vec![0.0f32; 2 * 9];
        for (i, v) in xs.iter_mut().enumerate() {
            *v = i as f32 + 1.0;
        }
        let w = Tensor::<f32>::from_vec(
            &[2, 1, 3, 3],
            (0..18).map(|i| (i % 5) as f32 - 2.0).collect(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[2, 3, 3], xs.clone()).unwrap();
        let y = x.depthwise_conv2d(&w, 1).unwrap().to_vec();
        xs[..9].iter_mut().for_each(|v| *v = 0.0);
        let x0 = Tensor::from_vec(&[2, 3, 3], xs).unwrap();
        let y0 = x0.depthwise_conv2d(&w, 1).unwrap().to_vec();
        assert!(y0[..9].iter().all(|&v| v == 0.0));
        assert_eq!(&y0[9..], &y[9..]);
    }

    #[test]
    fn depthwise_identity_kernels() {
        let mut w = vec![0.0f32; 3 * 9];
        for c in 0..3 {
            w[c * 9 + 4] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 1, 3, 3], w).unwrap();
        let x = Tensor::<f32>::from_vec(&[3, 4, 4], (0..48).map(|v| v as f32).collect()).unwrap();
        assert_eq!(x.depthwise_conv2d(&w, 1).unwrap().to_vec(), x.to_vec());
    }
}
