//! Stage shape formulas of the encoder/decoder pyramid.
//!
//! With base width `c0` and input `H×W`, level `i ∈ 1..=5` has
//! encoder/refined features `(c0·2^(i-1), H/2^i, W/2^i)`, global features
//! `(c0·2^i, H/2^(i+1), W/2^(i+1))` and predictions `(1, H/2^i, W/2^i)`.

pub const LEVELS: usize = 5;
/// Input extents must be multiples of this (deepest map is `H/2^6`).
pub const SIZE_MULTIPLE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShapeSpec {
    pub level: usize,
    pub encoder: [usize; 3],
    pub global: [usize; 3],
    pub prediction: [usize; 3],
}

impl StageShapeSpec {
    pub fn new(c0: usize, height: usize, width: usize, level: usize) -> Self {
        assert!((1..=LEVELS).contains(&level), "level {level} out of range");
        let down = 1 << level;
        StageShapeSpec {
            level,
            encoder: [c0 << (level - 1), height / down, width / down],
            global: [c0 << level, height / (2 * down), width / (2 * down)],
            prediction: [1, height / down, width / down],
        }
    }

    /// All five levels, finest first.
    pub fn pyramid(c0: usize, height: usize, width: usize) -> Vec<Self> {
        (1..=LEVELS)
            .map(|l| Self::new(c0, height, width, l))
            .collect()
    }
}

/// Aggregated global feature `F`: `(32·c0, H/32, W/32)`.
pub fn global_feature_shape(c0: usize, height: usize, width: usize) -> [usize; 3] {
    [c0 << 5, height >> 5, width >> 5]
}

/// Decoder output `D_level` for `level ∈ 1..=6`.
///
/// `D_l = (c0·2^(l-2), H/2^(l-1), W/2^(l-1))` for `l ≥ 2`; `D_1` continues the
/// halving to `c0/2` channels at full resolution.
pub fn decoder_shape(c0: usize, height: usize, width: usize, level: usize) -> [usize; 3] {
    assert!(
        (1..=6).contains(&level),
        "decoder level {level} out of range"
    );
    let ch = if level == 1 {
        c0 / 2
    } else {
        c0 << (level - 2)
    };
    [ch, height >> (level - 1), width >> (level - 1)]
}

/// Input channels of decoder block `level` (`G_5` for level 6, else `Q_level`).
pub fn decoder_input_channels(c0: usize, level: usize) -> usize {
    if level == 6 {
        c0 << 5
    } else {
        c0 << (level - 1)
    }
}

/// Spatial extent of prediction `P_i`, `i ∈ 0..=5`.
pub fn prediction_size(height: usize, width: usize, index: usize) -> (usize, usize) {
    (height >> index, width >> index)
}
