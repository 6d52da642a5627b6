//! Whole-image distortion compensation and application.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{sample_bilinear, Image, Point};
use crate::models::{distort_point, undistort_point, DistortionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum WarpMethod {
    /// Pull every output pixel from its source position, bilinearly.
    InverseBilinear,
    /// Push every input pixel to its nearest output pixel, then fill
    /// unvisited pixels with the mean of visited neighbors within `radius`
    /// (Chebyshev), and what remains with a second pass at `2 * radius`.
    ForwardFillAverage { radius: usize },
}

impl Default for WarpMethod {
    fn default() -> Self {
        WarpMethod::InverseBilinear
    }
}

impl WarpMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WarpMethod::ForwardFillAverage { radius: 0 } => {
                Err(Error::InvalidConfig("fill radius must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A warped image with its diagnostics.
#[derive(Debug, Clone)]
pub struct Warped {
    pub image: Image,
    /// Row-major flags for output pixels whose source position falls
    /// outside the input frame.
    pub outside: Vec<bool>,
    /// Forward method only: pixels with an in-frame source that neither
    /// received a deposit nor could be filled; they are set to 0.
    pub holes: usize,
}

impl Warped {
    pub fn outside_count(&self) -> usize {
        self.outside.iter().filter(|&&o| o).count()
    }
}

/// Compensates distortion: the output lives in the undistorted frame.
pub fn undistort_image(img: &Image, model: &DistortionModel, method: WarpMethod) -> Result<Warped> {
    warp(img, model, method, Direction::Undistort)
}

/// Applies distortion: the output lives in the distorted frame.
pub fn distort_image(img: &Image, model: &DistortionModel, method: WarpMethod) -> Result<Warped> {
    warp(img, model, method, Direction::Distort)
}

#[derive(Clone, Copy)]
enum Direction {
    Undistort,
    Distort,
}

impl Direction {
    /// Output position -> source position.
    fn pull(self, model: &DistortionModel, p: Point) -> Result<Point> {
        match self {
            Direction::Undistort => distort_point(model, p),
            Direction::Distort => undistort_point(model, p),
        }
    }

    /// Source position -> output position.
    fn push(self, model: &DistortionModel, p: Point) -> Result<Point> {
        match self {
            Direction::Undistort => undistort_point(model, p),
            Direction::Distort => distort_point(model, p),
        }
    }
}

fn warp(img: &Image, model: &DistortionModel, method: WarpMethod, dir: Direction) -> Result<Warped> {
    method.validate()?;
    let (w, h) = img.dims();
    model.validate(w, h)?;
    match method {
        WarpMethod::InverseBilinear => Ok(pull_bilinear(img, model, dir)),
        WarpMethod::ForwardFillAverage { radius } => Ok(push_and_fill(img, model, dir, radius)),
    }
}

fn pull_bilinear(img: &Image, model: &DistortionModel, dir: Direction) -> Warped {
    let (w, h) = img.dims();
    let (max_u, max_v) = ((w - 1) as f64, (h - 1) as f64);
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut vals = Vec::with_capacity(w);
            let mut out = Vec::with_capacity(w);
            for x in 0..w {
                match dir.pull(model, Point::new(x as f64, y as f64)) {
                    Ok(s) => {
                        vals.push(sample_bilinear(img, s.u, s.v));
                        out.push(!(s.u >= 0.0 && s.u <= max_u && s.v >= 0.0 && s.v <= max_v));
                    }
                    Err(_) => {
                        vals.push(0.0);
                        out.push(true);
                    }
                }
            }
            (vals, out)
        })
        .collect();
    let mut pixels = Vec::with_capacity(w * h);
    let mut outside = Vec::with_capacity(w * h);
    for (v, o) in rows {
        pixels.extend(v);
        outside.extend(o);
    }
    Warped {
        image: Image::from_fn(w, h, |x, y| pixels[y * w + x]).expect("warp output has input dims"),
        outside,
        holes: 0,
    }
}

fn push_and_fill(img: &Image, model: &DistortionModel, dir: Direction, radius: usize) -> Warped {
    let (w, h) = img.dims();
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    // Row-major deposit order keeps the result deterministic.
    for y in 0..h {
        for x in 0..w {
            let Ok(q) = dir.push(model, Point::new(x as f64, y as f64)) else {
                continue;
            };
            let (qx, qy) = (q.u.round(), q.v.round());
            if qx >= 0.0 && qy >= 0.0 && qx < w as f64 && qy < h as f64 {
                let i = qy as usize * w + qx as usize;
                sum[i] += img.get(x, y);
                count[i] += 1;
            }
        }
    }
    // Pixels whose source lies outside the input frame have nothing to be
    // interpolated from; they are reported as outside, not as holes.
    let (max_u, max_v) = ((w - 1) as f64, (h - 1) as f64);
    let outside: Vec<bool> = (0..w * h)
        .into_par_iter()
        .map(|i| match dir.pull(model, Point::new((i % w) as f64, (i / w) as f64)) {
            Ok(s) => !(s.u >= -0.5 && s.u <= max_u + 0.5 && s.v >= -0.5 && s.v <= max_v + 0.5),
            Err(_) => true,
        })
        .collect();
    let mut value: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    for r in [radius, 2 * radius] {
        value = fill_pass(&value, &outside, w, h, r);
    }
    let holes = value
        .iter()
        .zip(&outside)
        .filter(|(v, &o)| v.is_none() && !o)
        .count();
    Warped {
        image: Image::from_fn(w, h, |x, y| value[y * w + x].unwrap_or(0.0))
            .expect("warp output has input dims"),
        outside,
        holes,
    }
}

/// Fills each empty pixel with the mean of the known pixels in its
/// `(2r+1)^2` neighborhood, reading only values known before the pass.
fn fill_pass(value: &[Option<f64>], outside: &[bool], w: usize, h: usize, r: usize) -> Vec<Option<f64>> {
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            if value[i].is_some() || outside[i] {
                return value[i];
            }
            let (x, y) = (i % w, i / w);
            let (mut s, mut n) = (0.0, 0usize);
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    if let Some(v) = value[yy * w + xx] {
                        s += v;
                        n += 1;
                    }
                }
            }
            (n > 0).then(|| s / n as f64)
        })
        .collect()
}

/// PSNR in dB (peak 1) over the central 80% of both axes. Identical regions
/// give `f64::INFINITY`.
pub fn psnr_central(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Domain(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (w, h) = a.dims();
    let (x0, x1) = (w / 10, w - w / 10);
    let (y0, y1) = (h / 10, h - h / 10);
    let mut se = 0.0;
    let mut n = 0usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let d = a.get(x, y) - b.get(x, y);
            se += d * d;
            n += 1;
        }
    }
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}
