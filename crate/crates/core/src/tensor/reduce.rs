use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// Split a shape around `axis` into (outer, axis extent, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut s = shape.to_vec();
    if keepdim {
        s[axis] = 1;
    } else {
        s.remove(axis);
        if s.is_empty() {
            s.push(1);
        }
    }
    s
}

impl<T: Real> Tensor<T> {
    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        let total: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            vec![1],
            vec![total],
            vec![self.clone()],
            move |g, _| vec![Some(vec![g[0]; n])],
        )
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        self.sum()?.mul_scalar(1.0 / n as f64)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return shape_err("sum_axis", format!("axis {axis} out of range"));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &x[(o * len + a) * inner..(o * len + a + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        }
        let shape = reduced_shape(self.shape(), axis, keepdim);
        Tensor::from_op("sum_axis", shape, out, vec![self.clone()], move |g, _| {
            let mut gx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                for a in 0..len {
                    gx[(o * len + a) * inner..(o * len + a + 1) * inner]
                        .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return shape_err("mean_axis", format!("axis {axis} out of range"));
        }
        let len = self.shape()[axis];
        self.sum_axis(axis, keepdim)?.mul_scalar(1.0 / len as f64)
    }

    /// Maximum along an axis; the gradient flows to the first maximal entry.
    pub fn max_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return shape_err("max_axis", format!("axis {axis} out of range"));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![T::zero(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = x[o * len * inner + i];
                let mut best_a = 0;
                for a in 1..len {
                    let v = x[(o * len + a) * inner + i];
                    if v > best {
                        best = v;
                        best_a = a;
                    }
                }
                out[o * inner + i] = best;
                arg[o * inner + i] = (o * len + best_a) * inner + i;
            }
        }
        let shape = reduced_shape(self.shape(), axis, keepdim);
        let n = self.numel();
        Tensor::from_op("max_axis", shape, out, vec![self.clone()], move |g, _| {
            let mut gx = vec![T::zero(); n];
            for (k, &src) in arg.iter().enumerate() {
                gx[src] += g[k];
            }
            vec![Some(gx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_reductions() {
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![1., 5., 3., 4., 2., 6.]).unwrap();
        assert_eq!(x.sum_axis(0, false).unwrap().to_vec(), vec![5., 7., 9.]);
        assert_eq!(x.mean_axis(1, true).unwrap().shape(), &[2, 1]);
        assert_eq!(x.max_axis(1, false).unwrap().to_vec(), vec![5., 6.]);
    }

    #[test]
    fn max_grad_routes_to_argmax() {
        let x = Tensor::<f64>::param(&[1, 3], vec![1., 5., 3.]).unwrap();
        x.max_axis(1, false)
            .unwrap()
            .sum()
            .unwrap()
            .backward()
            .unwrap();
        assert_eq!(x.grad().unwrap(), vec![0., 1., 0.]);
    }
}
