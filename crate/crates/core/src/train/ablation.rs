//! Train and score every on/off combination of the three optional modules.

use crate::data::SliceSample;
use crate::error::Result;
use crate::metrics::EvalReport;
use crate::tensor::Real;

use super::config::RunConfig;
use super::trainer::Trainer;

pub const ABLATION_EPOCHS: usize = 30;
pub const ABLATION_PATIENCE: usize = 10;
pub const ABLATION_HEADER: &str = "mdb\tmub\tmab\tdsc\tprecision\trecall";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub mdb: bool,
    pub mub: bool,
    pub mab: bool,
    /// micro-averaged over the test samples
    pub report: EvalReport,
}

impl AblationRow {
    pub fn to_tsv(&self) -> String {
        let flag = |b: bool| if b { "on" } else { "off" };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            flag(self.mdb),
            flag(self.mub),
            flag(self.mab),
            self.report.dsc,
            self.report.precision,
            self.report.recall
        )
    }

    pub fn is_full(&self) -> bool {
        self.mdb && self.mub && self.mab
    }

    pub fn removed_count(&self) -> usize {
        [self.mdb, self.mub, self.mab]
            .iter()
            .filter(|b| !**b)
            .count()
    }
}

/// The 8 `(mdb, mub, mab)` combinations, full model first.
pub fn combinations() -> Vec<(bool, bool, bool)> {
    (0..8u8)
        .map(|i| (i & 4 == 0, i & 2 == 0, i & 1 == 0))
        .collect()
}

/// `base` with the ablation schedule applied and the modules toggled.
pub fn variant_config(base: &RunConfig, (mdb, mub, mab): (bool, bool, bool)) -> RunConfig {
    let mut cfg = base.clone();
    cfg.model.use_mdb = mdb;
    cfg.model.use_mub = mub;
    cfg.model.use_mab = mab;
    cfg.train.epochs = ABLATION_EPOCHS;
    cfg.train.early_stop_patience = ABLATION_PATIENCE;
    cfg.train.checkpoint_dir = base.train.checkpoint_dir.as_ref().map(|d| {
        d.join(format!(
            "mdb{}_mub{}_mab{}",
            mdb as u8, mub as u8, mab as u8
        ))
    });
    cfg
}

/// Train one variant and score its validation-selected parameters on `test`.
pub fn run_variant<T: Real>(
    base: &RunConfig,
    flags: (bool, bool, bool),
    train: &[SliceSample],
    val: &[SliceSample],
    test: &[SliceSample],
) -> Result<AblationRow> {
    let mut trainer = Trainer::<T>::new(variant_config(base, flags))?;
    trainer.fit(train, val)?;
    let report = trainer.evaluate_best(test)?.aggregate.micro();
    log::info!(
        "ablation mdb={} mub={} mab={} dsc={:.4}",
        flags.0,
        flags.1,
        flags.2,
        report.dsc
    );
    Ok(AblationRow {
        mdb: flags.0,
        mub: flags.1,
        mab: flags.2,
        report,
    })
}

/// All 8 variants with identical data, seeds and schedule.
pub fn run_ablation<T: Real>(
    base: &RunConfig,
    train: &[SliceSample],
    val: &[SliceSample],
    test: &[SliceSample],
) -> Result<Vec<AblationRow>> {
    combinations()
        .into_iter()
        .map(|flags| run_variant::<T>(base, flags, train, val, test))
        .collect()
}
