use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Split;
use crate::error::{Error, Result};

/// Fractions of patients in train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r))
            || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios {all:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Patient → split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientSplit {
    pub assignment: BTreeMap<String, Split>,
}

impl PatientSplit {
    pub fn of(&self, patient: &str) -> Option<Split> {
        self.assignment.get(patient).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }
}

/// Assign whole patients to splits.
///
/// Patients are sorted, shuffled under `seed`, and the validation and test
/// counts are `round(ratio · patients)`; the rest train.
pub fn split_dataset<'a>(
    patients: impl IntoIterator<Item = &'a str>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<PatientSplit> {
    ratios.validate()?;
    let mut ids: Vec<&str> = patients.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    let needed = [ratios.train, ratios.val, ratios.test]
        .iter()
        .filter(|&&r| r > 0.0)
        .count();
    if ids.len() < needed {
        return Err(Error::Data(format!(
            "{} patients cannot fill {needed} splits",
            ids.len()
        )));
    }
    let n = ids.len() as f64;
    let n_val = ((ratios.val * n).round() as usize).max(usize::from(ratios.val > 0.0));
    let n_test = ((ratios.test * n).round() as usize).max(usize::from(ratios.test > 0.0));
    if n_val + n_test > ids.len() || (ratios.train > 0.0 && n_val + n_test == ids.len()) {
        return Err(Error::Data(format!(
            "{} patients too few for ratios {ratios:?}",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < n_val {
                Split::Val
            } else if i < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            (id.to_string(), s)
        })
        .collect();
    Ok(PatientSplit { assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:04}")).collect()
    }

    #[test]
    fn ten_patients_eight_one_one() {
        let r = roster(10);
        let s = split_dataset(r.iter().map(String::as_str), SplitRatios::default(), 3).unwrap();
        assert_eq!(
            (
                s.count(Split::Train),
                s.count(Split::Val),
                s.count(Split::Test)
            ),
            (8, 1, 1)
        );
    }

    #[test]
    fn seed_deterministic() {
        let r = roster(40);
        let a = split_dataset(r.iter().map(String::as_str), SplitRatios::default(), 9).unwrap();
        let b = split_dataset(r.iter().map(String::as_str), SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_patients() {
        let r = roster(2);
        assert!(split_dataset(r.iter().map(String::as_str), SplitRatios::default(), 0).is_err());
    }
}
