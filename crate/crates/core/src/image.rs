//! Grayscale images, PGM/PNG I/O, bilinear sampling and center slices.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Domain(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Domain(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::Domain(format!("intensity {bad} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Rounds every intensity to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|&p| f64::from(to_u8(p)) / 255.0)
                .collect(),
        }
    }

    /// The assumed center of distortion: the geometric image center.
    pub fn center(&self) -> Center {
        Center {
            u0: self.width as f64 / 2.0,
            v0: self.height as f64 / 2.0,
        }
    }

    /// Largest distance from `center` to a corner of the pixel rectangle.
    pub fn max_radius(&self, center: Center) -> f64 {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(u, v)| (u - center.u0).hypot(v - center.v0))
            .fold(0.0, f64::max)
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// A point in pixel coordinates (`u` horizontal, `v` vertical, downwards).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub u: f64,
    pub v: f64,
}

impl Point {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Principal point, assumed to coincide with the center of distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub u0: f64,
    pub v0: f64,
}

impl Center {
    pub const fn new(u0: f64, v0: f64) -> Self {
        Self { u0, v0 }
    }

    pub fn point(self) -> Point {
        Point::new(self.u0, self.v0)
    }

    /// Checks `0 <= u0 < width` and `0 <= v0 < height`.
    pub fn validate(self, width: usize, height: usize) -> Result<()> {
        let ok = self.u0.is_finite()
            && self.v0.is_finite()
            && self.u0 >= 0.0
            && self.v0 >= 0.0
            && self.u0 < width as f64
            && self.v0 < height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "center ({}, {}) outside {width}x{height} image",
                self.u0, self.v0
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Loads a PGM (P2/P5, maxval <= 255) or PNG image. Color PNGs are reduced
/// by an unweighted channel average; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(&bytes)
    } else {
        Err(Error::Format(format!(
            "{}: not a PGM (P2/P5) or PNG file",
            path.display()
        )))
    }
}

/// Saves as binary PGM (`.pgm`) or 8-bit grayscale PNG (`.png`), chosen by
/// extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("pgm") => encode_pgm(img),
        Some("png") => encode_png(img)?,
        _ => {
            return Err(Error::Format(format!(
                "{}: output extension must be .pgm or .png",
                path.display()
            )))
        }
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Encodes as binary P5 PGM with maxval 255.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| to_u8(p)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 0usize;
    let magic = next_token(bytes, &mut cursor)?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(Error::Format("PGM magic must be P2 or P5".into())),
    };
    let width = parse_header_number(next_token(bytes, &mut cursor)?)?;
    let height = parse_header_number(next_token(bytes, &mut cursor)?)?;
    let maxval = parse_header_number(next_token(bytes, &mut cursor)?)?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = cursor + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::Format("truncated P5 raster".into()))?;
        for &b in raster {
            if u32::from(b) > maxval as u32 {
                return Err(Error::Format(format!("sample {b} exceeds maxval {maxval}")));
            }
            pixels.push(f64::from(b) / scale);
        }
    } else {
        for _ in 0..count {
            let tok = next_token(bytes, &mut cursor)?;
            let value = parse_header_number(tok)?;
            if value > maxval {
                return Err(Error::Format(format!("sample {value} exceeds maxval {maxval}")));
            }
            pixels.push(value as f64 / scale);
        }
    }
    Image::new(width, height, pixels).map_err(|e| Error::Format(e.to_string()))
}

/// Next whitespace-delimited token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Result<&'a [u8]> {
    let mut i = *cursor;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        break;
    }
    let start = i;
    while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if start == i {
        return Err(Error::Format("unexpected end of PGM data".into()));
    }
    *cursor = i;
    Ok(&bytes[start..i])
}

fn parse_header_number(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("invalid PGM number {:?}", String::from_utf8_lossy(tok))))
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    use ::image::DynamicImage;

    let decoded = ::image::load_from_memory_with_format(bytes, ::image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("zero dimension {width}x{height}")));
    }
    let pixels: Vec<f64> = match &decoded {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .pixels()
            .map(|p| f64::from(p.0[0]) / 255.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| (f64::from(p.0[0]) + f64::from(p.0[1]) + f64::from(p.0[2])) / 3.0)
            .map(clamp_unit)
            .collect(),
    };
    Image::new(width, height, pixels).map_err(|e| Error::Format(e.to_string()))
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.pixels.iter().map(|&p| to_u8(p)).collect();
    let buf = ::image::GrayImage::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ::image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Bilinear interpolation at a subpixel position.
///
/// Coordinates outside `[0, w-1] x [0, h-1]` are clamped to the boundary.
pub fn sample_bilinear(img: &Image, u: f64, v: f64) -> f64 {
    let max_u = (img.width - 1) as f64;
    let max_v = (img.height - 1) as f64;
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, max_u) };
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, max_v) };
    let x0 = (u.floor() as usize).min(img.width - 2);
    let y0 = (v.floor() as usize).min(img.height - 2);
    let fu = u - x0 as f64;
    let fv = v - y0 as f64;
    let p00 = img.get(x0, y0);
    let p10 = img.get(x0 + 1, y0);
    let p01 = img.get(x0, y0 + 1);
    let p11 = img.get(x0 + 1, y0 + 1);
    // Weighted form so that integer positions reproduce pixels exactly.
    let top = p00 * (1.0 - fu) + p10 * fu;
    let bottom = p01 * (1.0 - fu) + p11 * fu;
    top * (1.0 - fv) + bottom * fv
}

/// A 1-D intensity signal along a diameter through the center.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSignal {
    /// Direction in degrees, in `[0, 180)`.
    pub angle: f64,
    /// Samples ordered from signed radius `-r` to `+r`.
    pub samples: Vec<f64>,
    /// Distance between consecutive samples, in pixels.
    pub sample_spacing: f64,
}

/// Geometry of one slice: unit direction and the sampled signed radii.
#[derive(Debug, Clone)]
pub struct SliceGeometry {
    pub angle: f64,
    pub direction: (f64, f64),
    pub radii: Vec<f64>,
}

impl SliceGeometry {
    pub fn point(&self, center: Center, radius: f64) -> Point {
        Point::new(
            center.u0 + radius * self.direction.0,
            center.v0 + radius * self.direction.1,
        )
    }

    pub fn spacing(&self) -> f64 {
        if self.radii.len() < 2 {
            0.0
        } else {
            self.radii[1] - self.radii[0]
        }
    }
}

/// Number of slices produced for an angular step: `ceil(180 / step)`.
pub fn slice_count(angle_step: f64) -> usize {
    // Guard against 180/step landing a hair above an integer.
    ((180.0 / angle_step) - 1e-9).ceil() as usize
}

/// Half-length of the diameter at `angle` (degrees) through `center`,
/// clipped to the pixel rectangle and symmetric about the center.
pub fn clipped_half_length(width: usize, height: usize, center: Center, angle: f64) -> f64 {
    let (s, c) = angle.to_radians().sin_cos();
    let max_u = (width - 1) as f64;
    let max_v = (height - 1) as f64;
    let mut half = f64::INFINITY;
    if c.abs() > 1e-12 {
        half = half.min(center.u0 / c.abs()).min((max_u - center.u0) / c.abs());
    }
    if s.abs() > 1e-12 {
        half = half.min(center.v0 / s.abs()).min((max_v - center.v0) / s.abs());
    }
    half
}

/// Slice layouts for the standard angular sweep `{0, step, 2 step, ...} < 180`.
pub fn slice_geometries(
    width: usize,
    height: usize,
    center: Center,
    angle_step: f64,
    n_samples: usize,
) -> Result<Vec<SliceGeometry>> {
    if !(angle_step > 0.0 && angle_step <= 90.0) {
        return Err(Error::Domain(format!("angle step {angle_step} outside (0, 90]")));
    }
    if n_samples < 16 {
        return Err(Error::Domain(format!("need at least 16 samples per slice, got {n_samples}")));
    }
    center.validate(width, height)?;
    (0..slice_count(angle_step))
        .map(|i| {
            let angle = i as f64 * angle_step;
            let half = clipped_half_length(width, height, center, angle);
            if !(half >= 1.0) {
                return Err(Error::Domain(format!(
                    "slice at {angle} degrees is shorter than one pixel"
                )));
            }
            let (s, c) = angle.to_radians().sin_cos();
            let last = (n_samples - 1) as f64;
            let radii = (0..n_samples)
                .map(|k| -half + 2.0 * half * k as f64 / last)
                .collect();
            Ok(SliceGeometry {
                angle,
                direction: (c, s),
                radii,
            })
        })
        .collect()
}

/// Samples `ceil(180 / angle_step)` diameters through `center`, each with
/// exactly `n_samples` bilinear samples spread uniformly over the part of
/// the diameter inside the image.
pub fn extract_slices(
    img: &Image,
    center: Center,
    angle_step: f64,
    n_samples: usize,
) -> Result<Vec<SliceSignal>> {
    let geoms = slice_geometries(img.width, img.height, center, angle_step, n_samples)?;
    Ok(geoms
        .into_iter()
        .map(|g| {
            let samples = g
                .radii
                .iter()
                .map(|&r| {
                    let p = g.point(center, r);
                    sample_bilinear(img, p.u, p.v)
                })
                .collect();
            SliceSignal {
                angle: g.angle,
                sample_spacing: g.spacing(),
                samples,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(width: usize, height: usize) -> Image {
        Image::from_fn(width, height, |x, _| x as f64 / width as f64).unwrap()
    }

    #[test]
    fn ascii_pgm_scales_to_unit_range() {
        let img = decode_pgm(b"P2\n# tiny\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pgm_rejects_zero_dimension_and_bad_magic() {
        assert!(matches!(decode_pgm(b"P5\n0 2\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P6\n2 2\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00\x01"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P2\n2 2\n255\n0 1 2 300"), Err(Error::Format(_))));
    }

    #[test]
    fn constant_half_quantizes_to_nearest_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.pgm");
        save_image(&Image::filled(4, 3, 0.5).unwrap(), &path).unwrap();
        let back = load_image(&path).unwrap();
        for &p in back.pixels() {
            assert!(p == 127.0 / 255.0 || p == 128.0 / 255.0);
        }
    }

    #[test]
    fn black_image_has_zero_payload() {
        let bytes = encode_pgm(&Image::filled(5, 4, 0.0).unwrap());
        let header = b"P5\n5 4\n255\n".len();
        assert!(bytes[header..].iter().all(|&b| b == 0));
        assert_eq!(bytes.len() - header, 20);
    }

    #[test]
    fn png_round_trip_and_color_average() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        let img = ramp(17, 5).quantized();
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);

        let rgb = ::image::RgbImage::from_fn(3, 2, |x, _| ::image::Rgb([30 * x as u8, 0, 90]));
        let color_path = dir.path().join("c.png");
        rgb.save(&color_path).unwrap();
        let gray = load_image(&color_path).unwrap();
        assert!((gray.get(2, 1) - (60.0 + 0.0 + 90.0) / 3.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_format_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        fs::write(&path, b"hello").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
        assert!(matches!(load_image(dir.path().join("nope.pgm")), Err(Error::Io { .. })));
        assert!(matches!(
            save_image(&Image::filled(2, 2, 0.0).unwrap(), dir.path().join("a.bmp")),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn bilinear_identity_and_midpoint() {
        let img = Image::from_fn(6, 7, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        assert_eq!(sample_bilinear(&img, 3.0, 5.0), img.get(3, 5));
        assert_eq!(sample_bilinear(&img, 5.0, 6.0), img.get(5, 6));
        let two = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((sample_bilinear(&two, 0.5, 0.0) - 0.5).abs() < 1e-15);
        let flat = Image::filled(9, 9, 0.3).unwrap();
        assert!((sample_bilinear(&flat, 4.37, 2.91) - 0.3).abs() < 1e-15);
        // Outside coordinates clamp to the border.
        assert_eq!(sample_bilinear(&img, -4.0, 100.0), img.get(0, 6));
    }

    #[test]
    fn twelve_degree_step_gives_fifteen_slices() {
        let img = Image::filled(320, 240, 0.2).unwrap();
        let slices = extract_slices(&img, img.center(), 12.0, 256).unwrap();
        assert_eq!(slices.len(), 15);
        for s in &slices {
            assert_eq!(s.samples.len(), 256);
            assert!(s.samples.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        }
    }

    #[test]
    fn ramp_slices_follow_the_ramp() {
        let img = ramp(320, 240);
        let slices = extract_slices(&img, img.center(), 90.0, 64).unwrap();
        assert_eq!(slices.len(), 2);
        let horizontal = &slices[0];
        assert!(horizontal.samples.windows(2).all(|w| w[1] > w[0]));
        // Analytic ramp value at each sample position.
        let half = clipped_half_length(320, 240, img.center(), 0.0);
        for (k, &s) in horizontal.samples.iter().enumerate() {
            let u = 160.0 - half + 2.0 * half * k as f64 / 63.0;
            assert!((s - u / 320.0).abs() < 1e-12);
        }
        let vertical = &slices[1];
        let first = vertical.samples[0];
        assert!(vertical.samples.iter().all(|&v| (v - first).abs() < 1e-12));
    }

    #[test]
    fn slice_rejects_bad_parameters() {
        let img = Image::filled(32, 32, 0.0).unwrap();
        assert!(extract_slices(&img, img.center(), 0.0, 64).is_err());
        assert!(extract_slices(&img, img.center(), 91.0, 64).is_err());
        assert!(extract_slices(&img, img.center(), 12.0, 8).is_err());
        assert!(matches!(
            extract_slices(&img, Center::new(40.0, 3.0), 12.0, 64),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn slice_count_matches_ceiling(step in 0.5f64..=90.0) {
            let img = Image::filled(40, 30, 0.0).unwrap();
            let slices = extract_slices(&img, img.center(), step, 16).unwrap();
            prop_assert_eq!(slices.len(), (180.0 / step - 1e-9).ceil() as usize);
            prop_assert!(slices.iter().all(|s| s.angle < 180.0));
        }

        #[test]
        fn slice_samples_equal_bilinear_at_positions(step in 5.0f64..=90.0, seed in 0u64..1000) {
            let img = Image::from_fn(37, 29, |x, y| ((x as u64 * 31 + y as u64 * 17 + seed) % 97) as f64 / 96.0).unwrap();
            let c = img.center();
            let geoms = slice_geometries(37, 29, c, step, 20).unwrap();
            let slices = extract_slices(&img, c, step, 20).unwrap();
            for (g, s) in geoms.iter().zip(&slices) {
                for (&r, &val) in g.radii.iter().zip(&s.samples) {
                    let p = g.point(c, r);
                    prop_assert_eq!(val, sample_bilinear(&img, p.u, p.v));
                }
            }
        }

        #[test]
        fn bilinear_is_linear_along_rows(x in 0usize..8, y in 0usize..9, t in 0.0f64..1.0) {
            let img = Image::from_fn(9, 10, |i, j| ((i * 13 + j * 5) % 7) as f64 / 6.0).unwrap();
            let expect = img.get(x, y) * (1.0 - t) + img.get(x + 1, y) * t;
            prop_assert!((sample_bilinear(&img, x as f64 + t, y as f64) - expect).abs() < 1e-12);
        }

        #[test]
        fn save_load_within_one_quantum(vals in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let dir = tempfile::tempdir().unwrap();
            let img = Image::new(4, 3, vals).unwrap();
            for name in ["a.pgm", "a.png"] {
                let path = dir.path().join(name);
                save_image(&img, &path).unwrap();
                let back = load_image(&path).unwrap();
                for (a, b) in img.pixels().iter().zip(back.pixels()) {
                    prop_assert!((a - b).abs() <= 1.0 / 255.0);
                }
            }
        }
    }
}
