//! Overlap metrics between binary masks.
//!
//! Conventions: an empty prediction against an empty ground truth scores 1
//! on every metric; otherwise a ratio with a zero denominator scores 0.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub dsc: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        if tp + fp + fn_ == 0 {
            return EvalReport {
                tp,
                fp,
                fn_,
                dsc: 1.0,
                precision: 1.0,
                recall: 1.0,
            };
        }
        EvalReport {
            tp,
            fp,
            fn_,
            dsc: ratio(2 * tp, 2 * tp + fp + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }

    /// Flat `key=value` record, one pair per line.
    pub fn to_record(&self) -> String {
        format!(
            "dsc={}\nprecision={}\nrecall={}\ntp={}\nfp={}\nfn={}\n",
            self.dsc, self.precision, self.recall, self.tp, self.fp, self.fn_
        )
    }

    pub fn parse_record(text: &str) -> Result<Self> {
        let mut r = EvalReport::default();
        let mut seen = 0u8;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("report line without '=': {line}")))?;
            let v = v.trim();
            let bad = || Error::Format(format!("bad value for {k}: {v}"));
            let float = || v.parse::<f64>().map_err(|_| bad());
            let count = || v.parse::<u64>().map_err(|_| bad());
            match k.trim() {
                "dsc" => r.dsc = float()?,
                "precision" => r.precision = float()?,
                "recall" => r.recall = float()?,
                "tp" => r.tp = count()?,
                "fp" => r.fp = count()?,
                "fn" => r.fn_ = count()?,
                other => return Err(Error::Format(format!("unknown report key {other}"))),
            }
            seen += 1;
        }
        if seen != 6 {
            return Err(Error::Format(format!("report has {seen} of 6 keys")));
        }
        Ok(r)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dsc={:.4} precision={:.4} recall={:.4} (tp={} fp={} fn={})",
            self.dsc, self.precision, self.recall, self.tp, self.fp, self.fn_
        )
    }
}

/// Pixel counts `(tp, fp, fn)`; both masks must hold only 0 and 1.
pub fn confusion<T: Real>(pred: &[T], gt: &[T]) -> Result<(u64, u64, u64)> {
    if pred.len() != gt.len() {
        return Err(Error::Shape {
            op: "evaluate",
            msg: format!("{} predicted vs {} reference pixels", pred.len(), gt.len()),
        });
    }
    let bin = |v: T| -> Result<bool> {
        if v == T::one() {
            Ok(true)
        } else if v == T::zero() {
            Ok(false)
        } else {
            Err(Error::Data(format!(
                "mask value {} is not binary",
                v.as_f64()
            )))
        }
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in pred.iter().zip(gt) {
        match (bin(p)?, bin(g)?) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok((tp, fp, fn_))
}

pub fn evaluate<T: Real>(pred: &[T], gt: &[T]) -> Result<EvalReport> {
    let (tp, fp, fn_) = confusion(pred, gt)?;
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

/// Running totals over many samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregate {
    pub samples: Vec<EvalReport>,
}

impl Aggregate {
    pub fn push(&mut self, r: EvalReport) {
        self.samples.push(r);
    }

    /// Metrics from pixel counts summed over every sample.
    pub fn micro(&self) -> EvalReport {
        let (tp, fp, fn_) = self
            .samples
            .iter()
            .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
        EvalReport::from_counts(tp, fp, fn_)
    }

    /// Per-sample metrics averaged; counts are summed.
    pub fn macro_avg(&self) -> EvalReport {
        let mut r = self.micro();
        if self.samples.is_empty() {
            return r;
        }
        let n = self.samples.len() as f64;
        r.dsc = self.samples.iter().map(|s| s.dsc).sum::<f64>() / n;
        r.precision = self.samples.iter().map(|s| s.precision).sum::<f64>() / n;
        r.recall = self.samples.iter().map(|s| s.recall).sum::<f64>() / n;
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_example() {
        let r = evaluate(&[1.0f32, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.dsc, r.precision, r.recall), (0.5, 0.5, 0.5));
    }

    #[test]
    fn conventions() {
        let e = evaluate(&[0.0f32; 4], &[0.0; 4]).unwrap();
        assert_eq!((e.dsc, e.precision, e.recall), (1.0, 1.0, 1.0));
        let miss = evaluate(&[0.0f32, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((miss.dsc, miss.precision, miss.recall), (0.0, 0.0, 0.0));
        let spurious = evaluate(&[1.0f32, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(
            (spurious.dsc, spurious.precision, spurious.recall),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn rejects_non_binary() {
        assert!(evaluate(&[0.5f32], &[1.0]).is_err());
        assert!(evaluate(&[1.0f32], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let r = EvalReport::from_counts(7, 2, 3);
        let text = r.to_record();
        for key in ["dsc=", "precision=", "recall=", "tp=7", "fp=2", "fn=3"] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(EvalReport::parse_record(&text).unwrap(), r);
    }

    #[test]
    fn micro_and_macro() {
        let mut agg = Aggregate::default();
        agg.push(EvalReport::from_counts(1, 1, 0));
        agg.push(EvalReport::from_counts(3, 0, 1));
        let micro = agg.micro();
        assert_eq!((micro.tp, micro.fp, micro.fn_), (4, 1, 1));
        assert!((micro.dsc - 8.0 / 10.0).abs() < 1e-12);
        let mac = agg.macro_avg();
        assert!((mac.dsc - (2.0 / 3.0 + 6.0 / 7.0) / 2.0).abs() < 1e-12);
    }
}
