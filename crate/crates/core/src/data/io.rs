//! On-disk formats.
//!
//! Images and masks are 8-bit grayscale PNG. A dataset root holds
//! `{train,val,test}/{images,masks}/<patient>_<slice>.png` and a
//! `manifest.tsv` with columns `path, patient_id, split, lesion_kind`.
//! Raw HU volumes are `<name>.raw` (f32 little-endian, slice-major) with a
//! `<name>.meta` sidecar of `key=value` lines.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{GrayImage, Luma};

use super::window::HuSlice;
use super::{LesionKind, Plane, SliceSample, Source, Split};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "path\tpatient_id\tsplit\tlesion_kind";

fn to_gray(plane: &Plane, f: impl Fn(f32) -> u8) -> GrayImage {
    GrayImage::from_fn(plane.width as u32, plane.height as u32, |x, y| {
        Luma([f(plane.at(y as usize, x as usize))])
    })
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path)?.into_luma8())
}

/// Intensities in `[0, 1]` quantized as `round(v · 255)`.
pub fn write_image(path: &Path, plane: &Plane) -> Result<()> {
    to_gray(plane, |v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).save(path)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Plane> {
    let g = read_gray(path)?;
    let (w, h) = g.dimensions();
    Plane::new(
        h as usize,
        w as usize,
        g.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
    )
}

/// Binary mask stored as 0 / 255.
pub fn write_mask(path: &Path, mask: &Plane) -> Result<()> {
    to_gray(mask, |v| if v > 0.5 { 255 } else { 0 }).save(path)?;
    Ok(())
}

/// Pixels `>= 128` are foreground.
pub fn read_mask(path: &Path) -> Result<Plane> {
    let g = read_gray(path)?;
    let (w, h) = g.dimensions();
    Plane::new(
        h as usize,
        w as usize,
        g.pixels()
            .map(|p| if p.0[0] >= 128 { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// Sidecar of a raw HU volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeMeta {
    pub width: usize,
    pub height: usize,
    pub slices: usize,
    pub spacing: (f64, f64),
}

impl VolumeMeta {
    pub fn to_text(&self) -> String {
        format!(
            "width={}\nheight={}\nslices={}\nspacing={},{}\n",
            self.width, self.height, self.slices, self.spacing.0, self.spacing.1
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut width, mut height, mut slices, mut spacing) = (None, None, None, None);
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("sidecar line without '=': {line}")))?;
            let int = || {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad {k}: {v}")))
            };
            match k.trim() {
                "width" => width = Some(int()?),
                "height" => height = Some(int()?),
                "slices" => slices = Some(int()?),
                "spacing" => {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| Error::Format(format!("bad spacing: {v}")))?;
                    let f = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad spacing: {v}")))
                    };
                    spacing = Some((f(a)?, f(b)?));
                }
                other => return Err(Error::Format(format!("unknown sidecar key {other}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("sidecar missing {k}"));
        let meta = VolumeMeta {
            width: width.ok_or_else(|| missing("width"))?,
            height: height.ok_or_else(|| missing("height"))?,
            slices: slices.ok_or_else(|| missing("slices"))?,
            spacing: spacing.unwrap_or((1.0, 1.0)),
        };
        if meta.width == 0 || meta.height == 0 || meta.slices == 0 {
            return Err(Error::Format(format!(
                "sidecar has a zero dimension: {meta:?}"
            )));
        }
        Ok(meta)
    }
}

fn meta_path(raw: &Path) -> PathBuf {
    raw.with_extension("meta")
}

pub fn write_hu_volume(raw: &Path, meta: &VolumeMeta, values: &[f32]) -> Result<()> {
    if values.len() != meta.width * meta.height * meta.slices {
        return Err(Error::Format(format!(
            "{} values do not match sidecar {meta:?}",
            values.len()
        )));
    }
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.write_f32::<LittleEndian>(v)?;
    }
    fs::write(raw, buf)?;
    fs::write(meta_path(raw), meta.to_text())?;
    Ok(())
}

/// Read every slice of a raw volume. The payload size must match the
/// sidecar exactly; nothing is returned otherwise.
pub fn read_hu_volume(raw: &Path) -> Result<Vec<HuSlice>> {
    let meta = VolumeMeta::parse(&fs::read_to_string(meta_path(raw))?)?;
    let mut bytes = Vec::new();
    fs::File::open(raw)?.read_to_end(&mut bytes)?;
    let plane = meta.width * meta.height;
    if bytes.len() != plane * meta.slices * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, sidecar expects {}",
            raw.display(),
            bytes.len(),
            plane * meta.slices * 4
        )));
    }
    let mut cur = &bytes[..];
    let mut out = Vec::with_capacity(meta.slices);
    let stem = raw
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for s in 0..meta.slices {
        let mut hu = vec![0f32; plane];
        cur.read_f32_into::<LittleEndian>(&mut hu)?;
        let mut slice = HuSlice::new(meta.width, meta.height, hu, meta.spacing)?;
        slice.patient_id = stem.clone();
        slice.slice_index = s;
        out.push(slice);
    }
    Ok(out)
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// image path relative to the dataset root
    pub path: String,
    pub patient_id: String,
    pub split: Split,
    pub lesion_kind: LesionKind,
}

impl ManifestRow {
    pub fn mask_path(&self) -> String {
        self.path.replacen("/images/", "/masks/", 1)
    }
}

pub fn image_rel_path(s: &SliceSample) -> String {
    format!("{}/images/{}.png", s.split, s.name())
}

/// Write samples under `root` in the dataset layout.
pub fn write_dataset(root: &Path, samples: &[SliceSample]) -> Result<Vec<ManifestRow>> {
    for split in Split::ALL {
        fs::create_dir_all(root.join(split.to_string()).join("images"))?;
        fs::create_dir_all(root.join(split.to_string()).join("masks"))?;
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        s.validate()?;
        let row = ManifestRow {
            path: image_rel_path(s),
            patient_id: s.patient_id.clone(),
            split: s.split,
            lesion_kind: s.lesion_kind,
        };
        write_image(&root.join(&row.path), &s.image)?;
        write_mask(&root.join(row.mask_path()), &s.mask)?;
        rows.push(row);
    }
    write_manifest(&root.join(MANIFEST), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{MANIFEST_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{}\t{}\t{}\t{}",
            r.path, r.patient_id, r.split, r.lesion_kind
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != MANIFEST_HEADER {
                return Err(Error::Format(format!(
                    "unexpected manifest header {line:?}"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!(
                "manifest line {}: {} columns",
                i + 1,
                cols.len()
            )));
        }
        rows.push(ManifestRow {
            path: cols[0].to_string(),
            patient_id: cols[1].to_string(),
            split: cols[2].parse()?,
            lesion_kind: cols[3].parse()?,
        });
    }
    Ok(rows)
}

/// Load every sample listed in `root/manifest.tsv`.
pub fn load_dataset(root: &Path) -> Result<Vec<SliceSample>> {
    let rows = read_manifest(&root.join(MANIFEST))?;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let image = read_image(&root.join(&r.path))?;
        let mask = read_mask(&root.join(r.mask_path()))?;
        let stem = Path::new(&r.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let slice_index = stem
            .rsplit_once('_')
            .and_then(|(_, s)| s.parse().ok())
            .unwrap_or(0);
        let s = SliceSample {
            image,
            mask,
            split: r.split,
            source: Source::Synthetic,
            lesion_kind: r.lesion_kind,
            patient_id: r.patient_id,
            slice_index,
        };
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_png(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    Ok(v)
}
