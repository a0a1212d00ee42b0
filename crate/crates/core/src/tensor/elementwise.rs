//! Elementwise arithmetic (with right-aligned broadcasting) and activations.

use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// Output shape of a right-aligned broadcast.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Flat source offset of every output element for an input broadcast to `out`.
fn broadcast_offsets(out: &[usize], input: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let pad = rank - input.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..input.len()).rev() {
        if input[i] != 1 {
            strides[i + pad] = acc;
        }
        acc *= input[i];
    }
    let total: usize = out.iter().product();
    let mut offsets = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out[d] {
                break;
            }
            off -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
    offsets
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
}

fn binary<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: BinOp) -> Result<Tensor<T>> {
    let name = match op {
        BinOp::Add => "add",
        BinOp::Sub => "sub",
        BinOp::Mul => "mul",
    };
    let Some(out_shape) = broadcast_shape(a.shape(), b.shape()) else {
        return shape_err(
            name,
            format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()),
        );
    };
    let apply = |x: T, y: T| match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
    };
    let (ad, bd) = (a.shared_data(), b.shared_data());
    let same = a.shape() == b.shape();
    if same {
        let data: Vec<T> = ad
            .iter()
            .zip(bd.iter())
            .map(|(&x, &y)| apply(x, y))
            .collect();
        let (ad2, bd2) = (ad.clone(), bd.clone());
        return Tensor::from_op(
            name,
            out_shape,
            data,
            vec![a.clone(), b.clone()],
            move |g, needs| {
                let ga = needs[0].then(|| match op {
                    BinOp::Add | BinOp::Sub => g.to_vec(),
                    BinOp::Mul => g.iter().zip(bd2.iter()).map(|(&g, &y)| g * y).collect(),
                });
                let gb = needs[1].then(|| match op {
                    BinOp::Add => g.to_vec(),
                    BinOp::Sub => g.iter().map(|&g| -g).collect(),
                    BinOp::Mul => g.iter().zip(ad2.iter()).map(|(&g, &x)| g * x).collect(),
                });
                vec![ga, gb]
            },
        );
    }
    let oa = broadcast_offsets(&out_shape, a.shape());
    let ob = broadcast_offsets(&out_shape, b.shape());
    let data: Vec<T> = oa
        .iter()
        .zip(&ob)
        .map(|(&i, &j)| apply(ad[i], bd[j]))
        .collect();
    let (na, nb) = (a.numel(), b.numel());
    Tensor::from_op(
        name,
        out_shape,
        data,
        vec![a.clone(), b.clone()],
        move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![T::zero(); na];
                for (k, (&i, &j)) in oa.iter().zip(&ob).enumerate() {
                    ga[i] += match op {
                        BinOp::Add | BinOp::Sub => g[k],
                        BinOp::Mul => g[k] * bd[j],
                    };
                }
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![T::zero(); nb];
                for (k, (&i, &j)) in oa.iter().zip(&ob).enumerate() {
                    gb[j] += match op {
                        BinOp::Add => g[k],
                        BinOp::Sub => -g[k],
                        BinOp::Mul => g[k] * ad[i],
                    };
                }
                gb
            });
            vec![ga, gb]
        },
    )
}

fn unary<T: Real>(
    x: &Tensor<T>,
    name: &'static str,
    f: impl Fn(T) -> T,
    // derivative expressed through (input, output)
    df: impl Fn(T, T) -> T + Send + Sync + 'static,
) -> Result<Tensor<T>> {
    let xd = x.shared_data();
    let data: Vec<T> = xd.iter().map(|&v| f(v)).collect();
    let out = std::sync::Arc::new(data.clone());
    Tensor::from_op(
        name,
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        move |g, _| {
            vec![Some(
                g.iter()
                    .zip(xd.iter().zip(out.iter()))
                    .map(|(&g, (&xi, &yi))| g * df(xi, yi))
                    .collect(),
            )]
        },
    )
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Sub)
    }

    /// Hadamard product with broadcasting.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Mul)
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Tensor<T>> {
        let s = T::lit(s);
        let data = self.data().iter().map(|&v| v * s).collect();
        Tensor::from_op(
            "mul_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            move |g, _| vec![Some(g.iter().map(|&g| g * s).collect())],
        )
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor<T>> {
        let s = T::lit(s);
        let data = self.data().iter().map(|&v| v + s).collect();
        Tensor::from_op(
            "add_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        )
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        unary(
            self,
            "relu",
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        unary(self, "sigmoid", sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    pub fn square(&self) -> Result<Tensor<T>> {
        unary(self, "square", |v| v * v, |x, _| x + x)
    }
}

/// Overflow-free logistic function.
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
