use super::Plane;
use crate::error::{Error, Result};

/// Hounsfield range accepted on ingestion.
pub const HU_MIN: f32 = -1024.0;
pub const HU_MAX: f32 = 3071.0;

/// Raw CT slice in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct HuSlice {
    pub width: usize,
    pub height: usize,
    pub hu: Vec<f32>,
    /// pixel spacing `(row, column)` in millimetres
    pub spacing: (f64, f64),
    pub patient_id: String,
    pub slice_index: usize,
    /// values that were clamped into `[HU_MIN, HU_MAX]` on construction
    pub clamped: usize,
}

impl HuSlice {
    pub fn new(width: usize, height: usize, mut hu: Vec<f32>, spacing: (f64, f64)) -> Result<Self> {
        if width == 0 || height == 0 || hu.len() != width * height {
            return Err(Error::Data(format!(
                "HU slice {width}x{height} cannot hold {} values",
                hu.len()
            )));
        }
        let mut clamped = 0;
        for v in &mut hu {
            if !v.is_finite() {
                return Err(Error::Data("non-finite HU value".into()));
            }
            if *v < HU_MIN || *v > HU_MAX {
                *v = v.clamp(HU_MIN, HU_MAX);
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} HU values into [{HU_MIN}, {HU_MAX}]");
        }
        Ok(HuSlice {
            width,
            height,
            hu,
            spacing,
            patient_id: String::new(),
            slice_index: 0,
            clamped,
        })
    }
}

/// Display window given as width and level (centre).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub width_hu: f64,
    pub level_hu: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            width_hu: 150.0,
            level_hu: 35.0,
        }
    }
}

impl WindowSpec {
    /// Window covering `[lo, hi]`.
    pub fn from_bounds(lo: f64, hi: f64) -> Result<Self> {
        let w = WindowSpec {
            width_hu: hi - lo,
            level_hu: (lo + hi) / 2.0,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_hu > 0.0) || !self.level_hu.is_finite() || !self.width_hu.is_finite() {
            return Err(Error::Config(format!(
                "degenerate window: width {} level {}",
                self.width_hu, self.level_hu
            )));
        }
        Ok(())
    }

    /// `(lo, hi) = (level - width/2, level + width/2)`.
    pub fn bounds(&self) -> (f64, f64) {
        (
            self.level_hu - self.width_hu / 2.0,
            self.level_hu + self.width_hu / 2.0,
        )
    }

    #[inline]
    pub fn apply(&self, hu: f64) -> f64 {
        let (lo, hi) = self.bounds();
        ((hu - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn normalize(&self, slice: &HuSlice) -> Result<Plane> {
        self.validate()?;
        let data = slice
            .hu
            .iter()
            .map(|&v| self.apply(v as f64) as f32)
            .collect();
        Plane::new(slice.height, slice.width, data)
    }
}
