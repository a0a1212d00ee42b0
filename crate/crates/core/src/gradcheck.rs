//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the loss closure on perturbed
//! constant inputs, so it does not depend on any backward rule.

pub mod cases;

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// perturbation size for `(f(x+h) - f(x-h)) / 2h`
    pub step: f64,
    /// relative tolerance on entries above `floor`
    pub rel_tol: f64,
    /// entries whose magnitude is at or below this are compared absolutely
    pub floor: f64,
    /// cap on probed entries per input (evenly strided); `None` probes all
    pub max_probes: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            rel_tol: 1e-3,
            floor: 1e-4,
            max_probes: None,
        }
    }
}

/// Outcome for one input tensor.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub probed: usize,
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    /// (flat index, analytic, numeric) of the worst relative mismatch
    pub worst: Option<(usize, f64, f64)>,
    pub passed: bool,
}

fn probe_indices(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(k) if k < len => {
            let stride = len as f64 / k as f64;
            (0..k).map(|i| (i as f64 * stride) as usize).collect()
        }
        _ => (0..len).collect(),
    }
}

/// Compare autograd against central differences for every input of `f`.
///
/// `inputs` are `(shape, values)` pairs; `f` must build a scalar from
/// tensors given in the same order.
pub fn check<F>(inputs: &[(Vec<usize>, Vec<f64>)], f: F, cfg: GradCheck) -> Result<Vec<GradReport>>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(s, v)| Tensor::param(s, v.clone()))
        .collect::<Result<_>>()?;
    f(&leaves)?.backward()?;

    let eval = |vals: &[Vec<f64>]| -> Result<f64> {
        let consts: Vec<Tensor<f64>> = inputs
            .iter()
            .zip(vals)
            .map(|((s, _), v)| Tensor::from_vec(s, v.clone()))
            .collect::<Result<_>>()?;
        f(&consts)?.item()
    };

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let mut reports = Vec::with_capacity(inputs.len());
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let mut report = GradReport {
            probed: 0,
            max_rel_err: 0.0,
            max_abs_err_small: 0.0,
            worst: None,
            passed: true,
        };
        for i in probe_indices(leaf.numel(), cfg.max_probes) {
            let orig = values[k][i];
            values[k][i] = orig + cfg.step;
            let up = eval(&values)?;
            values[k][i] = orig - cfg.step;
            let down = eval(&values)?;
            values[k][i] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            report.probed += 1;
            if scale > cfg.floor {
                let rel = (a - numeric).abs() / scale;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = Some((i, a, numeric));
                }
            } else {
                report.max_abs_err_small = report.max_abs_err_small.max((a - numeric).abs());
            }
        }
        report.passed = report.max_rel_err <= cfg.rel_tol && report.max_abs_err_small <= cfg.floor;
        reports.push(report);
    }
    Ok(reports)
}

/// Deterministic pseudo-random values in `[-scale, scale]` for test inputs.
pub fn sample_values(len: usize, seed: u64, scale: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
}
