//! Scalar-loop reference implementations of the losses and overlap metrics.

#![allow(dead_code)]

use hesunet::gradcheck::sample_values;
use hesunet::loss::{bce_loss, composite_loss, dice_loss, GroundTruthPyramid};
use hesunet::metrics::evaluate;
use hesunet::Tensor;

pub const CASES: u64 = 100;

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn bce_oracle(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let q = p[i].clamp(1e-7, 1.0 - 1e-7);
        s -= y[i] * q.ln() + (1.0 - y[i]) * (1.0 - q).ln();
    }
    s / y.len() as f64
}

/// Per-sample smoothed Dice loss averaged over `samples` equal chunks.
pub fn dice_oracle(y: &[f64], p: &[f64], samples: usize) -> f64 {
    let per = y.len() / samples;
    let mut total = 0.0;
    for s in 0..samples {
        let (mut inter, mut sy, mut sp) = (0.0, 0.0, 0.0);
        for i in s * per..(s + 1) * per {
            inter += y[i] * p[i];
            sy += y[i];
            sp += p[i];
        }
        total += 1.0 - (2.0 * inter + 1.0) / (sy + sp + 1.0);
    }
    total / samples as f64
}

/// 2×2 max pooling of an `n×h×w` stack.
pub fn pool_oracle(m: &[f64], n: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; n * oh * ow];
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize| m[(b * h + 2 * y + dy) * w + 2 * x + dx];
                out[(b * oh + y) * ow + x] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
            }
        }
    }
    out
}

pub fn metric_oracle(pred: &[f64], gt: &[f64]) -> (u64, u64, u64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..pred.len() {
        match (pred[i] == 1.0, gt[i] == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return (0, 0, 0, 1.0, 1.0, 1.0);
    }
    let r = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (
        tp,
        fp,
        fn_,
        r(2 * tp, 2 * tp + fp + fn_),
        r(tp, tp + fp),
        r(tp, tp + fn_),
    )
}

fn random_mask(len: usize, seed: u64, density: f64) -> Vec<f64> {
    sample_values(len, seed, 1.0)
        .into_iter()
        .map(|v| if (v + 1.0) / 2.0 < density { 1.0 } else { 0.0 })
        .collect()
}

fn random_probs(len: usize, seed: u64) -> Vec<f64> {
    sample_values(len, seed, 1.0)
        .into_iter()
        .map(|v| (v + 1.0) / 2.0)
        .collect()
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b}"))
    }
}

/// BCE, Dice and composite loss against the loops on random cases, plus the
/// closed-form special values. Returns the largest deviation seen.
pub fn check_losses() -> Result<f64, String> {
    let mut worst = 0f64;
    for case in 0..CASES {
        let n = 1 + (case % 3) as usize;
        let side = 4 + 2 * (case % 4) as usize;
        let len = n * side * side;
        let y = random_mask(len, 1000 + case, 0.1 + 0.8 * (case as f64 / CASES as f64));
        let mut p = random_probs(len, 2000 + case);
        if case % 10 == 0 {
            p[0] = 0.0;
            p[len - 1] = 1.0;
        }
        let shape = [n, 1, side, side];
        let yt = Tensor::<f64>::from_vec(&shape, y.clone()).unwrap();
        let pt = Tensor::<f64>::from_vec(&shape, p.clone()).unwrap();
        let bce = bce_loss(&yt, &pt)
            .map_err(|e| e.to_string())?
            .item()
            .unwrap();
        let dice = dice_loss(&yt, &pt)
            .map_err(|e| e.to_string())?
            .item()
            .unwrap();
        let (bo, d_o) = (bce_oracle(&y, &p), dice_oracle(&y, &p, n));
        close(bce, bo, 1e-6, &format!("case {case} bce"))?;
        close(dice, d_o, 1e-6, &format!("case {case} dice"))?;
        worst = worst.max((bce - bo).abs()).max((dice - d_o).abs());
    }

    for case in 0..CASES / 10 {
        let n = 1 + (case % 2) as usize;
        let lambda = [1.0, 0.5, 0.4, 0.3, 0.2, 0.1];
        let mut mask = random_mask(n * 64 * 64, 3000 + case, 0.05);
        let mut logits = Vec::new();
        let mut manual = 0.0;
        let mut side = 64;
        for (i, &l) in lambda.iter().enumerate() {
            if i > 0 {
                mask = pool_oracle(&mask, n, side, side);
                side /= 2;
            }
            let z: Vec<f64> = sample_values(n * side * side, 4000 + 10 * case + i as u64, 3.0);
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            manual += l * (dice_oracle(&mask, &p, n) + bce_oracle(&mask, &p));
            logits.push(Tensor::<f64>::from_vec(&[n, 1, side, side], z).unwrap());
        }
        let base = random_mask(n * 64 * 64, 3000 + case, 0.05);
        let pyr =
            GroundTruthPyramid::build(&Tensor::from_vec(&[n, 1, 64, 64], base).unwrap()).unwrap();
        let got = composite_loss(&pyr, &logits, &lambda)
            .map_err(|e| e.to_string())?
            .item()
            .unwrap();
        close(got, manual, 1e-6, &format!("composite case {case}"))?;
        worst = worst.max((got - manual).abs());
    }

    let t = |v: &[f64]| Tensor::<f64>::from_vec(&[v.len()], v.to_vec()).unwrap();
    let bce = |y: &[f64], p: &[f64]| bce_loss(&t(y), &t(p)).unwrap().item().unwrap();
    let dice = |y: &[f64], p: &[f64]| dice_loss(&t(y), &t(p)).unwrap().item().unwrap();
    close(
        bce(&[1.0], &[0.5]),
        std::f64::consts::LN_2,
        1e-12,
        "bce at one half",
    )?;
    close(
        bce(&[0.0], &[0.5]),
        std::f64::consts::LN_2,
        1e-12,
        "bce at one half, negative",
    )?;
    close(
        bce(&[1.0, 0.0], &[1.0, 0.0]),
        0.0,
        1e-6,
        "bce of exact match",
    )?;
    close(
        dice(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]),
        0.0,
        1e-12,
        "dice of exact match",
    )?;
    close(
        dice(&[0.0, 0.0], &[0.0, 0.0]),
        0.0,
        1e-12,
        "dice of empty pair",
    )?;
    close(
        dice(&[1.0, 0.0], &[0.0, 1.0]),
        2.0 / 3.0,
        1e-12,
        "dice of disjoint pair",
    )?;
    Ok(worst)
}

/// Library metrics against the counting loop on random pairs, including
/// empty prediction and empty ground truth cases. Returns the case count.
pub fn check_metrics() -> Result<usize, String> {
    let mut checked = 0;
    for case in 0..CASES {
        let len = 16 + (case as usize % 7) * 9;
        let density = (case % 5) as f64 * 0.2;
        let mut pred = random_mask(len, 5000 + case, density);
        let mut gt = random_mask(len, 6000 + case, 0.3);
        match case % 10 {
            0 => pred.iter_mut().for_each(|v| *v = 0.0),
            1 => gt.iter_mut().for_each(|v| *v = 0.0),
            2 => {
                pred.iter_mut().for_each(|v| *v = 0.0);
                gt.iter_mut().for_each(|v| *v = 0.0);
            }
            3 => gt = pred.clone(),
            _ => {}
        }
        let r = evaluate(&pred, &gt).map_err(|e| e.to_string())?;
        let want = metric_oracle(&pred, &gt);
        let got = (r.tp, r.fp, r.fn_, r.dsc, r.precision, r.recall);
        if got != want {
            return Err(format!("case {case}: {got:?} vs {want:?}"));
        }
        checked += 1;
    }
    Ok(checked)
}
