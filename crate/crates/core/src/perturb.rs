//! Image perturbations: brightness scaling, in-plane rotation, and
//! perspective tilt.
//!
//! Samples are 8-bit. Geometric transforms use inverse mapping with bilinear
//! interpolation; neighbours outside the source read as the fill value.
//! Every output sample is rounded half away from zero and clamped to
//! `0..=255`. Parameters at their identity value return the input unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomspace::SampleMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images need 1 or 3 channels, got {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.pixels[self.offset(x, y) + c as usize]
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Reads an 8-bit grayscale or RGB PNG. Alpha and 16-bit images are rejected.
    pub fn read_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?;
        let (w, h) = (decoded.width(), decoded.height());
        match decoded {
            DynamicImage::ImageLuma8(buf) => Self::new(w, h, 1, buf.into_raw()),
            DynamicImage::ImageRgb8(buf) => Self::new(w, h, 3, buf.into_raw()),
            other => Err(Error::invalid(format!(
                "{}: unsupported PNG color type {:?} (expected 8-bit gray or RGB)",
                path.display(),
                other.color()
            ))),
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            ColorType::L8
        } else {
            ColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    // f64::round rounds half away from zero
    v.round().clamp(0.0, 255.0) as u8
}

/// Resampling options shared by the geometric transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryOptions {
    /// Value read for source positions outside the image.
    #[serde(default)]
    pub fill: u8,
    /// Pinhole focal length for tilt, in pixels; defaults to the image height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length: Option<f64>,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            fill: 0,
            focal_length: None,
        }
    }
}

/// Scales every sample by `factor`.
pub fn brightness(img: &Image, factor: f64) -> Result<Image> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::invalid(format!(
            "brightness factor must be finite and >= 0, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let pixels = img.pixels.iter().map(|&p| to_u8(p as f64 * factor)).collect();
    Image::new(img.width, img.height, img.channels, pixels)
}

/// Inverse-maps every output pixel through `source_of` and samples bilinearly.
fn warp<F>(img: &Image, fill: u8, source_of: F) -> Result<Image>
where
    F: Fn(f64, f64) -> Option<(f64, f64)>,
{
    let (w, h, ch) = (img.width as i64, img.height as i64, img.channels as usize);
    let mut out = vec![0u8; img.pixels.len()];
    let fill = fill as f64;
    let mut acc = vec![0.0f64; ch];
    for y in 0..h {
        for x in 0..w {
            let dst = ((y * w + x) as usize) * ch;
            let Some((sx, sy)) = source_of(x as f64, y as f64) else {
                out[dst..dst + ch].iter_mut().for_each(|v| *v = fill as u8);
                continue;
            };
            if !(sx.is_finite() && sy.is_finite()) {
                out[dst..dst + ch].iter_mut().for_each(|v| *v = fill as u8);
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let weight = wx * wy;
                    if weight == 0.0 {
                        continue;
                    }
                    let (px, py) = (x0 + dx, y0 + dy);
                    if px < 0 || py < 0 || px >= w || py >= h {
                        acc.iter_mut().for_each(|a| *a += weight * fill);
                    } else {
                        let src = ((py * w + px) as usize) * ch;
                        for (a, &p) in acc.iter_mut().zip(&img.pixels[src..src + ch]) {
                            *a += weight * p as f64;
                        }
                    }
                }
            }
            for (o, &a) in out[dst..dst + ch].iter_mut().zip(&acc) {
                *o = to_u8(a);
            }
        }
    }
    Image::new(img.width, img.height, img.channels, out)
}

fn center(img: &Image) -> (f64, f64) {
    ((img.width as f64 - 1.0) / 2.0, (img.height as f64 - 1.0) / 2.0)
}

/// Rotates about the image center. Positive angles turn the content
/// counter-clockwise as displayed (y axis pointing down).
pub fn rotate(img: &Image, degrees: f64, opts: &GeometryOptions) -> Result<Image> {
    if !degrees.is_finite() {
        return Err(Error::invalid(format!("rotation angle must be finite, got {degrees}")));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (cx, cy) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, opts.fill, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        Some((cx + cos * dx - sin * dy, cy + sin * dx + cos * dy))
    })
}

/// Perspective view of the image plane turned about its horizontal center
/// axis, seen by a pinhole camera with the configured focal length. Positive
/// angles move the bottom edge away from the viewer. The center row is fixed.
pub fn tilt(img: &Image, degrees: f64, opts: &GeometryOptions) -> Result<Image> {
    if !degrees.is_finite() || degrees.abs() >= 90.0 {
        return Err(Error::invalid(format!("tilt angle must lie in (-90, 90), got {degrees}")));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let f = opts.focal_length.unwrap_or(img.height as f64);
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("focal length must be positive, got {f}")));
    }
    let (cx, cy) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, opts.fill, |x, y| {
        let (u, v) = (x - cx, y - cy);
        // project (X, Y cos, Y sin) onto the screen and invert for (X, Y)
        let denom = f * cos - v * sin;
        if denom <= 0.0 {
            return None;
        }
        let plane_y = v * f / denom;
        let plane_x = u * (f + plane_y * sin) / f;
        Some((cx + plane_x, cy + plane_y))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Brightness,
    Rotation,
    Tilt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationStep {
    pub kind: PerturbationKind,
    pub parameter: String,
}

/// Which perturbations to apply and which parameter drives each.
///
/// Steps always run in the canonical order brightness, rotation, tilt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerturbationSpec {
    steps: Vec<PerturbationStep>,
}

impl PerturbationSpec {
    pub fn new(mut steps: Vec<PerturbationStep>) -> Result<Self> {
        steps.sort_by_key(|s| s.kind);
        if steps.windows(2).any(|w| w[0].kind == w[1].kind) {
            return Err(Error::invalid("each perturbation kind may appear at most once"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[PerturbationStep] {
        &self.steps
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.parameter.as_str())
    }
}

/// Applies every step of `spec` using the named physical parameter values.
pub fn apply(
    spec: &PerturbationSpec,
    img: &Image,
    values: &BTreeMap<String, f64>,
    opts: &GeometryOptions,
) -> Result<Image> {
    for step in &spec.steps {
        if !values.contains_key(&step.parameter) {
            return Err(Error::MissingParameter(step.parameter.clone()));
        }
    }
    let mut current = img.clone();
    for step in &spec.steps {
        let v = values[&step.parameter];
        current = match step.kind {
            PerturbationKind::Brightness => brightness(&current, v)?,
            PerturbationKind::Rotation => rotate(&current, v, opts)?,
            PerturbationKind::Tilt => tilt(&current, v, opts)?,
        };
    }
    Ok(current)
}

pub fn sample_file_name(index: usize) -> String {
    format!("sample_{index}.png")
}

/// Writes one transformed PNG per sample row into `dir` plus `manifest.csv`
/// (`index`, parameter values, `file`). Returns the written image paths.
pub fn write_transformed_set(
    spec: &PerturbationSpec,
    img: &Image,
    samples: &SampleMatrix<f64>,
    opts: &GeometryOptions,
    dir: &Path,
    comments: &[String],
) -> Result<Vec<PathBuf>> {
    let names: Vec<String> = samples.space().names().into_iter().map(str::to_string).collect();
    for p in spec.parameter_names() {
        if !names.iter().any(|n| n == p) {
            return Err(Error::MissingParameter(p.to_string()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for c in comments {
        let _ = writeln!(manifest, "# {c}");
    }
    let _ = writeln!(manifest, "index,{},file", names.join(","));
    let mut paths = Vec::with_capacity(samples.n());
    for (i, row) in samples.rows().enumerate() {
        let values: BTreeMap<String, f64> = names.iter().cloned().zip(row.iter().copied()).collect();
        let out = apply(spec, img, &values, opts)?;
        let file = sample_file_name(i);
        let path = dir.join(&file);
        out.write_png(&path)?;
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(manifest, "{i},{},{file}", cells.join(","));
        paths.push(path);
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(paths)
}
