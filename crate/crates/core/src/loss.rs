//! Segmentation losses on probabilities, and the deep-supervision sum.
//!
//! Targets are constants; only the probability argument is differentiated.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;
/// Added to numerator and denominator of the Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

fn same_shape<T: Real>(op: &'static str, y: &Tensor<T>, p: &Tensor<T>) -> Result<()> {
    if y.shape() != p.shape() {
        return shape_err(
            op,
            format!("target {:?} vs prediction {:?}", y.shape(), p.shape()),
        );
    }
    Ok(())
}

/// Mean binary cross-entropy `-(1/N) Σ [y ln p + (1-y) ln(1-p)]`.
///
/// The gradient is zero where `p` lies outside the clamp interval.
pub fn bce_loss<T: Real>(y: &Tensor<T>, p: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("bce_loss", y, p)?;
    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let n = p.numel() as f64;
    let yv = y.to_f64_vec();
    let pv = p.to_f64_vec();
    let total: f64 = yv
        .iter()
        .zip(&pv)
        .map(|(&y, &p)| {
            let p = p.clamp(lo, hi);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Tensor::from_op(
        "bce_loss",
        vec![1],
        vec![T::lit(total / n)],
        vec![p.clone()],
        move |g, _| {
            let g = g[0].as_f64() / n;
            let dp = yv
                .iter()
                .zip(&pv)
                .map(|(&y, &p)| {
                    if p < lo || p > hi {
                        T::zero()
                    } else {
                        T::lit(-g * (y / p - (1.0 - y) / (1.0 - p)))
                    }
                })
                .collect();
            vec![Some(dp)]
        },
    )
}

/// Smoothed Dice loss `1 - (2 Σ y·p + ε) / (Σ y + Σ p + ε)`.
///
/// A 4-D input is treated as a batch: the loss is computed per sample and
/// averaged. Any other rank is one sample.
pub fn dice_loss<T: Real>(y: &Tensor<T>, p: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("dice_loss", y, p)?;
    let samples = if p.rank() == 4 { p.shape()[0] } else { 1 };
    let per = p.numel() / samples;
    let yv = y.to_f64_vec();
    let pv = p.to_f64_vec();
    let eps = DICE_SMOOTH;
    // (numerator, denominator) per sample
    let terms: Vec<(f64, f64)> = yv
        .chunks(per)
        .zip(pv.chunks(per))
        .map(|(ys, ps)| {
            let inter: f64 = ys.iter().zip(ps).map(|(a, b)| a * b).sum();
            let sy: f64 = ys.iter().sum();
            let sp: f64 = ps.iter().sum();
            (2.0 * inter + eps, sy + sp + eps)
        })
        .collect();
    let loss = terms.iter().map(|(num, den)| 1.0 - num / den).sum::<f64>() / samples as f64;
    Tensor::from_op(
        "dice_loss",
        vec![1],
        vec![T::lit(loss)],
        vec![p.clone()],
        move |g, _| {
            let g = g[0].as_f64() / samples as f64;
            let mut dp = Vec::with_capacity(yv.len());
            for (ys, &(num, den)) in yv.chunks(per).zip(&terms) {
                for &y in ys {
                    dp.push(T::lit(-g * (2.0 * y * den - num) / (den * den)));
                }
            }
            vec![Some(dp)]
        },
    )
}

/// Ground-truth masks at the six prediction scales, finest first.
#[derive(Debug, Clone)]
pub struct GroundTruthPyramid<T: Real> {
    pub levels: Vec<Tensor<T>>,
}

/// Levels in a pyramid: the full mask plus five halvings.
pub const PYRAMID_LEVELS: usize = 6;

impl<T: Real> GroundTruthPyramid<T> {
    /// Repeated 2×2 max-pooling: a coarse pixel is positive when any of its
    /// four children is.
    ///
    /// Accepts `(H, W)`, `(1, H, W)` or `(N, 1, H, W)` masks; a bare 2-D mask
    /// gains a leading channel axis.
    pub fn build(mask: &Tensor<T>) -> Result<Self> {
        if !mask.data().iter().all(|&v| v == T::zero() || v == T::one()) {
            return Err(Error::Data("pyramid source mask is not binary".into()));
        }
        let base = if mask.rank() == 2 {
            let mut s = vec![1];
            s.extend_from_slice(mask.shape());
            mask.detach().reshape(&s)?
        } else {
            mask.detach()
        };
        let mut levels = vec![base];
        for _ in 1..PYRAMID_LEVELS {
            let next = levels.last().expect("non-empty").max_pool2x2()?;
            levels.push(next);
        }
        Ok(GroundTruthPyramid { levels })
    }
}

/// `Σ_i λ_i · (Dice(L_i, σ(P_i)) + BCE(L_i, σ(P_i)))` over the six levels.
pub fn composite_loss<T: Real>(
    pyramid: &GroundTruthPyramid<T>,
    logits: &[Tensor<T>],
    lambda: &[f64; 6],
) -> Result<Tensor<T>> {
    if logits.len() != PYRAMID_LEVELS || pyramid.levels.len() != PYRAMID_LEVELS {
        return shape_err(
            "composite_loss",
            format!(
                "expected {PYRAMID_LEVELS} levels, got {} logits and {} targets",
                logits.len(),
                pyramid.levels.len()
            ),
        );
    }
    let mut total: Option<Tensor<T>> = None;
    for (i, (target, logit)) in pyramid.levels.iter().zip(logits).enumerate() {
        if target.shape() != logit.shape() {
            return shape_err(
                "composite_loss",
                format!(
                    "level {i}: target {:?} vs logits {:?}",
                    target.shape(),
                    logit.shape()
                ),
            );
        }
        let p = logit.sigmoid()?;
        let term = dice_loss(target, &p)?
            .add(&bce_loss(target, &p)?)?
            .mul_scalar(lambda[i])?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("six levels"))
}
