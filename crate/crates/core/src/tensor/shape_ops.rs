use super::reduce::split_axis;
use super::{Real, Tensor};
use crate::error::{shape_err, Result};

impl<T: Real> Tensor<T> {
    /// Reinterpret the same values under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() || shape.contains(&0) {
            return shape_err(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            );
        }
        let data = self.data().to_vec();
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            data,
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        )
    }

    /// Contiguous sub-range `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return shape_err(
                "narrow",
                format!(
                    "range {start}..{} on axis {axis} of {:?}",
                    start + len,
                    self.shape()
                ),
            );
        }
        let (outer, full, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Tensor::from_op("narrow", shape, out, vec![self.clone()], move |g, _| {
            let mut gx = vec![T::zero(); outer * full * inner];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Split into `parts` equal chunks along `axis`.
    pub fn chunk(&self, parts: usize, axis: usize) -> Result<Vec<Tensor<T>>> {
        if axis >= self.rank() || parts == 0 || !self.shape()[axis].is_multiple_of(parts) {
            return shape_err(
                "chunk",
                format!("{:?} axis {axis} not divisible into {parts}", self.shape()),
            );
        }
        let step = self.shape()[axis] / parts;
        (0..parts)
            .map(|p| self.narrow(axis, p * step, step))
            .collect()
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(tensors: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let Some(first) = tensors.first() else {
            return shape_err("concat", "empty input list");
        };
        let rank = first.rank();
        if axis >= rank {
            return shape_err("concat", format!("axis {axis} out of range"));
        }
        for t in tensors {
            let same_rank = t.rank() == rank;
            let others_match =
                same_rank && (0..rank).all(|d| d == axis || t.shape()[d] == first.shape()[d]);
            if !others_match {
                return shape_err(
                    "concat",
                    format!("{:?} incompatible with {:?}", t.shape(), first.shape()),
                );
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (t, &len) in tensors.iter().zip(&lens) {
                out.extend_from_slice(&t.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let lens2 = lens.clone();
        Tensor::from_op("concat", shape, out, tensors.to_vec(), move |g, needs| {
            let mut grads: Vec<Option<Vec<T>>> = lens2
                .iter()
                .zip(needs)
                .map(|(&len, &need)| need.then(|| Vec::with_capacity(outer * len * inner)))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gi, &len) in grads.iter_mut().zip(&lens2) {
                    if let Some(gi) = gi {
                        gi.extend_from_slice(&g[pos..pos + len * inner]);
                    }
                    pos += len * inner;
                }
            }
            grads
        })
    }

    /// Channel concatenation for `C×H×W` / `N×C×H×W` tensors.
    pub fn cat_channels(tensors: &[Tensor<T>]) -> Result<Tensor<T>> {
        let Some(first) = tensors.first() else {
            return shape_err("cat_channels", "empty input list");
        };
        let axis = if first.rank() == 4 { 1 } else { 0 };
        Tensor::concat(tensors, axis)
    }
}
