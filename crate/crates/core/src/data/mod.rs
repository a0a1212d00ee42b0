//! CT slice preprocessing, dataset layout and synthetic phantoms.

pub mod augment;
pub mod io;
pub mod overlay;
pub mod phantom;
pub mod split;
pub mod window;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use augment::{augment, AugmentConfig};
pub use phantom::{generate_phantom, PhantomConfig};
pub use split::{split_dataset, PatientSplit, SplitRatios};
pub use window::{HuSlice, WindowSpec};

/// Mix `parts` into `base` to get an independent stream seed (SplitMix64
/// finalizer per step).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Single-channel image or mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Data(format!(
                "plane {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Plane {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_positive(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    /// `(1, H, W)` tensor.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::from_vec(&[1, self.height, self.width], self.data.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LesionKind {
    Ce,
    Ae,
    None,
}

impl fmt::Display for LesionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LesionKind::Ce => "CE",
            LesionKind::Ae => "AE",
            LesionKind::None => "none",
        })
    }
}

impl FromStr for LesionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CE" => Ok(LesionKind::Ce),
            "AE" => Ok(LesionKind::Ae),
            "none" => Ok(LesionKind::None),
            _ => Err(Error::Format(format!("unknown lesion kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Real,
    Synthetic,
}

/// One normalized slice with its lesion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    /// intensities in `[0, 1]`
    pub image: Plane,
    /// strictly `{0, 1}`
    pub mask: Plane,
    pub split: Split,
    pub source: Source,
    pub lesion_kind: LesionKind,
    pub patient_id: String,
    pub slice_index: usize,
}

impl SliceSample {
    pub fn validate(&self) -> Result<()> {
        if (self.image.height, self.image.width) != (self.mask.height, self.mask.width) {
            return Err(Error::Data(format!(
                "{}: image {}x{} vs mask {}x{}",
                self.name(),
                self.image.height,
                self.image.width,
                self.mask.height,
                self.mask.width
            )));
        }
        if !self.mask.is_binary() {
            return Err(Error::Data(format!("{}: mask is not binary", self.name())));
        }
        if self.image.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!(
                "{}: image values outside [0, 1]",
                self.name()
            )));
        }
        Ok(())
    }

    /// File stem `<patient>_<slice>`.
    pub fn name(&self) -> String {
        format!("{}_{:03}", self.patient_id, self.slice_index)
    }
}

/// Stack samples into `(N, 1, H, W)` image and mask tensors.
pub fn batch_tensors(samples: &[&SliceSample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("empty batch".into()))?;
    let (h, w) = (first.image.height, first.image.width);
    let mut img = Vec::with_capacity(samples.len() * h * w);
    let mut msk = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.image.height, s.image.width) != (h, w) {
            return Err(Error::Data(format!(
                "{}: size differs within batch",
                s.name()
            )));
        }
        img.extend_from_slice(&s.image.data);
        msk.extend_from_slice(&s.mask.data);
    }
    let shape = [samples.len(), 1, h, w];
    Ok((
        Tensor::from_vec(&shape, img)?,
        Tensor::from_vec(&shape, msk)?,
    ))
}
