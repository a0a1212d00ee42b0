//! Synthetic abdominal CT-like slices with labelled liver lesions.
//!
//! Each slice has a dark background, a soft-tissue body ellipse and a
//! brighter liver ellipse. Cystic lesions are dark smooth ellipses with a
//! bright thin rim; alveolar lesions are irregular unions of jittered
//! ellipses with mottled texture. Optionally, bright calcification dots sit
//! inside lesions and bright rib arcs sit outside the liver as confusers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::augment::gaussian_blur;
use super::split::{split_dataset, SplitRatios};
use super::{derive_seed, LesionKind, Plane, SliceSample, Source, Split};
use crate::blocks::shapes::SIZE_MULTIPLE;
use crate::error::{Error, Result};

const BACKGROUND: f32 = 0.04;
const BODY: f32 = 0.3;
const LIVER: f32 = 0.55;
const CYST: f32 = 0.2;
const RIM: f32 = 0.8;
const ALVEOLAR: f32 = 0.32;
const BRIGHT: f32 = 0.95;
const RIB: f32 = 0.9;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    /// probability of calcification dots and rib arcs
    pub confuser_p: f64,
    /// allowed lesion area as a fraction of the image
    pub area_range: (f64, f64),
}

impl PhantomConfig {
    pub fn new(height: usize, width: usize) -> Self {
        PhantomConfig {
            height,
            width,
            confuser_p: 0.3,
            area_range: (0.005, 0.12),
        }
    }
}

/// A rendered slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: Plane,
    pub mask: Plane,
    pub liver: Plane,
    pub confusers: bool,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    theta: f64,
}

impl Ellipse {
    /// Squared normalized radius: `< 1` inside.
    fn rho(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2)
    }

    /// Point at normalized polar position `(r, phi)`.
    fn point(&self, r: f64, phi: f64) -> (f64, f64) {
        let (u, v) = (r * self.rx * phi.cos(), r * self.ry * phi.sin());
        let (s, c) = self.theta.sin_cos();
        (self.cy + s * u + c * v, self.cx + c * u - s * v)
    }
}

fn fill(plane: &mut Plane, e: &Ellipse, value: f32) {
    for y in 0..plane.height {
        for x in 0..plane.width {
            if e.rho(y as f64, x as f64) < 1.0 {
                plane.set(y, x, value);
            }
        }
    }
}

/// Zero-mean smooth random field with roughly unit amplitude.
fn smooth_field(h: usize, w: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Plane {
    let n = Normal::new(0.0f64, 1.0).expect("unit normal");
    let white = Plane {
        height: h,
        width: w,
        data: (0..h * w).map(|_| n.sample(rng) as f32).collect(),
    };
    let mut f = gaussian_blur(&white, sigma);
    let sd = (f.data.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / (h * w) as f64).sqrt();
    if sd > 0.0 {
        f.data.iter_mut().for_each(|v| *v = (*v as f64 / sd) as f32);
    }
    f
}

fn lesion_center(liver: &Ellipse, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let r = rng.gen_range(0.0..0.6f64).sqrt() * 0.8;
    liver.point(r, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Lesion masks (support, rim) for one attempt.
fn draw_lesions(
    kind: LesionKind,
    liver_mask: &Plane,
    liver: &Ellipse,
    rng: &mut ChaCha8Rng,
) -> (Plane, Plane) {
    let (h, w) = (liver_mask.height, liver_mask.width);
    let side = h.min(w) as f64;
    let mut support = Plane::zeros(h, w);
    let mut rim = Plane::zeros(h, w);
    match kind {
        LesionKind::None => {}
        LesionKind::Ce => {
            for _ in 0..rng.gen_range(1..=3) {
                let (cy, cx) = lesion_center(liver, rng);
                let r = side * rng.gen_range(0.05..0.13);
                let aspect = rng.gen_range(0.7..1.3);
                let e = Ellipse {
                    cy,
                    cx,
                    ry: r * aspect,
                    rx: r / aspect,
                    theta: rng.gen_range(0.0..std::f64::consts::PI),
                };
                let inner = (1.0 - 1.2 / e.ry.min(e.rx)).max(0.0).powi(2);
                for y in 0..h {
                    for x in 0..w {
                        let rho = e.rho(y as f64, x as f64);
                        if rho < 1.0 && liver_mask.at(y, x) > 0.0 {
                            support.set(y, x, 1.0);
                            if rho >= inner {
                                rim.set(y, x, 1.0);
                            }
                        }
                    }
                }
            }
        }
        LesionKind::Ae => {
            for _ in 0..rng.gen_range(1..=2) {
                let (cy, cx) = lesion_center(liver, rng);
                let r = side * rng.gen_range(0.06..0.12);
                for _ in 0..rng.gen_range(4..=8) {
                    let e = Ellipse {
                        cy: cy + rng.gen_range(-0.6..0.6) * r,
                        cx: cx + rng.gen_range(-0.6..0.6) * r,
                        ry: r * rng.gen_range(0.4..0.8),
                        rx: r * rng.gen_range(0.4..0.8),
                        theta: rng.gen_range(0.0..std::f64::consts::PI),
                    };
                    for y in 0..h {
                        for x in 0..w {
                            if e.rho(y as f64, x as f64) < 1.0 && liver_mask.at(y, x) > 0.0 {
                                support.set(y, x, 1.0);
                            }
                        }
                    }
                }
            }
        }
    }
    // the rim only counts where the interior survived the liver clip
    for (r, s) in rim.data.iter_mut().zip(&support.data) {
        *r *= *s;
    }
    (support, rim)
}

pub fn generate_phantom(
    cfg: &PhantomConfig,
    kind: LesionKind,
    rng: &mut ChaCha8Rng,
) -> Result<Phantom> {
    let (h, w) = (cfg.height, cfg.width);
    if h == 0 || w == 0 || h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
        return Err(Error::Config(format!(
            "phantom size {h}x{w} must be a positive multiple of {SIZE_MULTIPLE}"
        )));
    }
    let (hf, wf) = (h as f64, w as f64);
    let body = Ellipse {
        cy: hf / 2.0,
        cx: wf / 2.0,
        ry: 0.44 * hf,
        rx: 0.47 * wf,
        theta: 0.0,
    };
    let liver = Ellipse {
        cy: hf * rng.gen_range(0.42..0.55),
        cx: wf * rng.gen_range(0.38..0.52),
        ry: hf * rng.gen_range(0.22..0.30),
        rx: wf * rng.gen_range(0.25..0.33),
        theta: rng.gen_range(-0.5..0.5),
    };
    let mut liver_mask = Plane::zeros(h, w);
    fill(&mut liver_mask, &liver, 1.0);

    let total = (h * w) as f64;
    let (mut support, mut rim) = (Plane::zeros(h, w), Plane::zeros(h, w));
    if kind != LesionKind::None {
        let mut ok = false;
        for _ in 0..MAX_ATTEMPTS {
            (support, rim) = draw_lesions(kind, &liver_mask, &liver, rng);
            let frac = support.count_positive() as f64 / total;
            if (cfg.area_range.0..=cfg.area_range.1).contains(&frac) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Data(format!(
                "no {kind} lesion within the area range after {MAX_ATTEMPTS} draws"
            )));
        }
    }

    let mut image = Plane {
        height: h,
        width: w,
        data: vec![BACKGROUND; h * w],
    };
    fill(&mut image, &body, BODY);
    for (v, &l) in image.data.iter_mut().zip(&liver_mask.data) {
        if l > 0.0 {
            *v = LIVER;
        }
    }
    match kind {
        LesionKind::Ce => {
            for i in 0..h * w {
                if rim.data[i] > 0.0 {
                    image.data[i] = RIM;
                } else if support.data[i] > 0.0 {
                    image.data[i] = CYST;
                }
            }
        }
        LesionKind::Ae => {
            let texture = smooth_field(h, w, 1.0, rng);
            for i in 0..h * w {
                if support.data[i] > 0.0 {
                    image.data[i] = ALVEOLAR + 0.12 * texture.data[i].clamp(-1.5, 1.5);
                }
            }
        }
        LesionKind::None => {}
    }

    let confusers = rng.gen::<f64>() < cfg.confuser_p;
    if confusers {
        let lesion_px: Vec<usize> = (0..h * w).filter(|&i| support.data[i] > 0.0).collect();
        if !lesion_px.is_empty() {
            for _ in 0..rng.gen_range(1..=4) {
                let c = lesion_px[rng.gen_range(0..lesion_px.len())];
                let (cy, cx) = ((c / w) as f64, (c % w) as f64);
                let r = rng.gen_range(1.0..=3.0f64);
                for y in 0..h {
                    for x in 0..w {
                        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        if d2 <= r * r && support.at(y, x) > 0.0 {
                            image.set(y, x, BRIGHT);
                        }
                    }
                }
            }
        }
        for _ in 0..rng.gen_range(2..=4) {
            let phi0 = rng.gen_range(0.0..std::f64::consts::TAU);
            let span = rng.gen_range(0.2..0.4);
            let shell = rng.gen_range(0.84..0.93);
            let thickness = 1.5 / body.rx.min(body.ry);
            for y in 0..h {
                for x in 0..w {
                    let (yy, xx) = (y as f64, x as f64);
                    let rho = body.rho(yy, xx).sqrt();
                    let phi = (yy - body.cy).atan2(xx - body.cx);
                    let dphi = (phi - phi0).rem_euclid(std::f64::consts::TAU);
                    if (rho - shell).abs() < thickness && dphi < span && liver_mask.at(y, x) == 0.0
                    {
                        image.set(y, x, RIB);
                    }
                }
            }
        }
    }

    let texture = smooth_field(h, w, 1.5, rng);
    let white = Normal::new(0.0f64, 0.01).expect("valid sigma");
    for (v, t) in image.data.iter_mut().zip(&texture.data) {
        *v = (*v as f64 + 0.02 * *t as f64 + white.sample(rng)).clamp(0.0, 1.0) as f32;
    }

    Ok(Phantom {
        image,
        mask: support,
        liver: liver_mask,
        confusers,
    })
}

/// Parameters of a synthetic patient roster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub patients: usize,
    pub size: usize,
    pub seed: u64,
    /// fraction of patients with cystic lesions; the rest are alveolar
    pub ce_ratio: f64,
    pub slices_per_patient: usize,
    /// probability that a slice of a patient shows a lesion
    pub lesion_slice_p: f64,
    pub ratios: SplitRatios,
}

/// 137 cystic of 268 patients.
pub const DEFAULT_CE_RATIO: f64 = 137.0 / 268.0;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patients: 40,
            size: 64,
            seed: 0,
            ce_ratio: DEFAULT_CE_RATIO,
            slices_per_patient: 5,
            lesion_slice_p: 0.8,
            ratios: SplitRatios::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patients == 0 || self.slices_per_patient == 0 {
            return Err(Error::Config(
                "patients and slices per patient must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ce_ratio) || !(0.0..=1.0).contains(&self.lesion_slice_p) {
            return Err(Error::Config(
                "ce_ratio and lesion_slice_p must be in [0, 1]".into(),
            ));
        }
        if self.size == 0 || !self.size.is_multiple_of(SIZE_MULTIPLE) {
            return Err(Error::Config(format!(
                "size {} must be a positive multiple of {SIZE_MULTIPLE}",
                self.size
            )));
        }
        self.ratios.validate()
    }

    pub fn patient_id(i: usize) -> String {
        format!("p{i:04}")
    }

    /// Disease type per patient: the first `round(ce_ratio · N)` are cystic.
    pub fn patient_kind(&self, i: usize) -> LesionKind {
        let n_ce = (self.ce_ratio * self.patients as f64).round() as usize;
        if i < n_ce {
            LesionKind::Ce
        } else {
            LesionKind::Ae
        }
    }
}

/// Render a full roster with a patient-disjoint split.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<SliceSample>> {
    cfg.validate()?;
    let ids: Vec<String> = (0..cfg.patients).map(SynthConfig::patient_id).collect();
    let split = split_dataset(ids.iter().map(String::as_str), cfg.ratios, cfg.seed)?;
    let pcfg = PhantomConfig::new(cfg.size, cfg.size);
    let mut out = Vec::with_capacity(cfg.patients * cfg.slices_per_patient);
    for (p, id) in ids.iter().enumerate() {
        for s in 0..cfg.slices_per_patient {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[p as u64, s as u64]));
            let kind = if rng.gen::<f64>() < cfg.lesion_slice_p {
                cfg.patient_kind(p)
            } else {
                LesionKind::None
            };
            let ph = generate_phantom(&pcfg, kind, &mut rng)?;
            out.push(SliceSample {
                image: ph.image,
                mask: ph.mask,
                split: split.of(id).unwrap_or(Split::Train),
                source: Source::Synthetic,
                lesion_kind: kind,
                patient_id: id.clone(),
                slice_index: s,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn none_has_empty_mask() {
        let p =
            generate_phantom(&PhantomConfig::new(64, 64), LesionKind::None, &mut rng(1)).unwrap();
        assert_eq!(p.mask.count_positive(), 0);
    }

    #[test]
    fn lesions_inside_liver() {
        for (s, kind) in [(2, LesionKind::Ce), (3, LesionKind::Ae)] {
            let p = generate_phantom(&PhantomConfig::new(64, 64), kind, &mut rng(s)).unwrap();
            assert!(p.mask.count_positive() > 0);
            assert!(p.mask.data.iter().zip(&p.liver.data).all(|(m, l)| *m <= *l));
        }
    }

    #[test]
    fn reproducible() {
        let a = generate_phantom(&PhantomConfig::new(64, 64), LesionKind::Ae, &mut rng(7)).unwrap();
        let b = generate_phantom(&PhantomConfig::new(64, 64), LesionKind::Ae, &mut rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_size_rejected() {
        assert!(
            generate_phantom(&PhantomConfig::new(60, 64), LesionKind::Ce, &mut rng(0)).is_err()
        );
    }

    #[test]
    fn roster_kinds() {
        let cfg = SynthConfig {
            patients: 268,
            ..Default::default()
        };
        let ce = (0..268)
            .filter(|&i| cfg.patient_kind(i) == LesionKind::Ce)
            .count();
        assert_eq!((ce, 268 - ce), (137, 131));
    }
}
