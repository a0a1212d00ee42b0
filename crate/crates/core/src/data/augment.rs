//! Training-time augmentation: rotation, isotropic scaling, Gaussian blur
//! and additive Gaussian noise, each applied independently with a fixed
//! probability.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Plane, SliceSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// probability of each transform
    pub p: f64,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p: 0.5,
            max_rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            blur_sigma: (0.25, 1.0),
            noise_sigma: (0.005, 0.02),
        }
    }
}

/// Which transforms a draw enabled, with their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentDraw {
    pub rotation_deg: Option<f64>,
    pub scale: Option<f64>,
    pub blur_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
}

impl AugmentDraw {
    /// Four gates first, then the parameters of the enabled transforms.
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let gates: [bool; 4] = std::array::from_fn(|_| rng.gen::<f64>() < cfg.p);
        let mut uniform = |on: bool, (lo, hi): (f64, f64)| {
            on.then(|| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        };
        let r = cfg.max_rotation_deg;
        AugmentDraw {
            rotation_deg: uniform(gates[0], (-r, r)),
            scale: uniform(gates[1], cfg.scale_range),
            blur_sigma: uniform(gates[2], cfg.blur_sigma),
            noise_sigma: uniform(gates[3], cfg.noise_sigma),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentDraw::default()
    }
}

pub fn augment(sample: &SliceSample, rng: &mut impl Rng, cfg: &AugmentConfig) -> SliceSample {
    let draw = AugmentDraw::sample(cfg, rng);
    apply(sample, &draw, rng)
}

/// Apply a draw; `rng` supplies the noise field.
pub fn apply(sample: &SliceSample, draw: &AugmentDraw, rng: &mut impl Rng) -> SliceSample {
    let mut out = sample.clone();
    if draw.rotation_deg.is_some() || draw.scale.is_some() {
        let theta = draw.rotation_deg.unwrap_or(0.0).to_radians();
        let s = draw.scale.unwrap_or(1.0);
        out.image = warp(&out.image, theta, s, Interp::Bilinear);
        out.mask = warp(&out.mask, theta, s, Interp::Nearest);
    }
    if let Some(sigma) = draw.blur_sigma {
        out.image = gaussian_blur(&out.image, sigma);
    }
    if let Some(sigma) = draw.noise_sigma {
        if let Ok(n) = Normal::new(0.0, sigma) {
            for v in &mut out.image.data {
                *v = (*v as f64 + n.sample(rng)) as f32;
            }
        }
    }
    for v in &mut out.image.data {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

#[derive(Clone, Copy)]
enum Interp {
    Bilinear,
    Nearest,
}

/// Rotate by `theta` and scale by `s` about the image centre; pixels that
/// map outside the source are zero.
fn warp(src: &Plane, theta: f64, s: f64, interp: Interp) -> Plane {
    let (h, w) = (src.height, src.width);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = theta.sin_cos();
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // inverse map: rotate by -theta, divide by s
            let sx = (cos * dx + sin * dy) / s + cx;
            let sy = (-sin * dx + cos * dy) / s + cy;
            let v = match interp {
                Interp::Nearest => {
                    let (ry, rx) = (sy.round(), sx.round());
                    if ry >= 0.0 && rx >= 0.0 && (ry as usize) < h && (rx as usize) < w {
                        src.at(ry as usize, rx as usize)
                    } else {
                        0.0
                    }
                }
                Interp::Bilinear => bilinear(src, sy, sx),
            };
            out.set(y, x, v);
        }
    }
    out
}

fn bilinear(src: &Plane, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let get = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy as usize >= src.height || xx as usize >= src.width {
            0.0
        } else {
            src.at(yy as usize, xx as usize) as f64
        }
    };
    let v = get(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + get(y0, x0 + 1.0) * (1.0 - fy) * fx
        + get(y0 + 1.0, x0) * fy * (1.0 - fx)
        + get(y0 + 1.0, x0 + 1.0) * fy * fx;
    v as f32
}

/// Separable Gaussian filter, truncated at `3σ`, normalized, with edge
/// replication.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let (h, w) = (src.height as isize, src.width as isize);
    let pass = |input: &Plane, horizontal: bool| -> Plane {
        let mut out = Plane::zeros(input.height, input.width);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in (-r..=r).zip(&k) {
                    let (yy, xx) = if horizontal {
                        (y, (x + t).clamp(0, w - 1))
                    } else {
                        ((y + t).clamp(0, h - 1), x)
                    };
                    acc += kv * input.at(yy as usize, xx as usize) as f64;
                }
                out.set(y as usize, x as usize, acc as f32);
            }
        }
        out
    };
    pass(&pass(src, true), false)
}
