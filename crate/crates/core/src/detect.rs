//! Blind distortion detection by bicoherence minimization.
//!
//! Every candidate model is used to provisionally undistort slices through
//! the image center. Distortion is a smooth nonlinearity of the radial
//! coordinate, so it adds quadratic phase coupling to the slice signals; the
//! candidate that removes most of it has the smallest bicoherence.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hosa::{bicoherence, objective_max, objective_mean, segment, SegmentPolicy};
use crate::image::{clipped_half_length, sample_bilinear, slice_count, Center, Image, Point, SliceSignal};
use crate::models::{distort_point, DistortionModel, ModelKind, SearchRange};

/// Scalar summary of a bicoherence grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Largest defined bin, divided by the pixel count.
    #[default]
    Max,
    /// Sum of defined bins over `N^2`.
    Mean,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Max => "max",
            Criterion::Mean => "mean",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Criterion::Max),
            "mean" => Ok(Criterion::Mean),
            other => Err(Error::InvalidConfig(format!("unknown criterion '{other}'"))),
        }
    }
}

pub const DEFAULT_ANGLE_STEP: f64 = 12.0;
pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_SEGMENT: usize = 64;
pub const DEFAULT_GEOMETRIC_STEP: f64 = 0.88e-6;
pub const DEFAULT_GEOMETRIC_HALF_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub model_kind: ModelKind,
    /// Radial search range; for `RationalGeo2` the first-stage range.
    pub range1: SearchRange,
    /// Overrides the second-stage k2 axis of a geometric search.
    pub range2: Option<SearchRange>,
    /// Second-stage grid: `seed +- half_steps * step` on each axis.
    pub geometric_half_steps: usize,
    pub geometric_step: f64,
    pub criterion: Criterion,
    /// Angular spacing of slices, degrees.
    pub angle_step: f64,
    /// Samples per slice.
    pub n_samples: usize,
    pub segment: SegmentPolicy,
    /// Recorded for reproducibility; the search itself is deterministic.
    pub seed: u64,
}

impl DetectionConfig {
    /// Defaults for a 320x240 image.
    pub fn new(model_kind: ModelKind) -> Self {
        Self {
            model_kind,
            range1: SearchRange::default_for(model_kind),
            range2: None,
            geometric_half_steps: DEFAULT_GEOMETRIC_HALF_STEPS,
            geometric_step: DEFAULT_GEOMETRIC_STEP,
            criterion: Criterion::Max,
            angle_step: DEFAULT_ANGLE_STEP,
            n_samples: DEFAULT_SAMPLES,
            segment: SegmentPolicy::with_length(DEFAULT_SEGMENT),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |e: Error| Error::InvalidConfig(e.to_string());
        self.range1.validate()?;
        if let Some(r) = &self.range2 {
            r.validate()?;
        }
        if !(self.geometric_step > 0.0 && self.geometric_step.is_finite()) {
            return Err(Error::InvalidConfig("geometric step must be positive".into()));
        }
        if !(self.angle_step > 0.0 && self.angle_step <= 90.0) {
            return Err(Error::InvalidConfig(format!("angle step {} outside (0, 90]", self.angle_step)));
        }
        self.segment.validate().map_err(invalid)?;
        if self.n_samples < self.segment.length.max(16) {
            return Err(Error::InvalidConfig(format!(
                "{} samples per slice cannot hold a {}-sample segment",
                self.n_samples, self.segment.length
            )));
        }
        Ok(())
    }
}

/// Intensity along the diameter at `angle` (degrees), sampled at uniformly
/// spaced undistorted radii over the clipped diameter, each looked up at its
/// distorted position under `candidate`.
pub fn provisional_undistorted_signal(
    img: &Image,
    center: Center,
    angle: f64,
    candidate: &DistortionModel,
    n_samples: usize,
) -> Result<SliceSignal> {
    let (w, h) = img.dims();
    center.validate(w, h)?;
    if n_samples < 2 {
        return Err(Error::Domain("need at least 2 samples per slice".into()));
    }
    let half = clipped_half_length(w, h, center, angle);
    if !(half >= 1.0) {
        return Err(Error::Domain(format!("slice at {angle} degrees is shorter than one pixel")));
    }
    let (s, c) = angle.to_radians().sin_cos();
    let last = (n_samples - 1) as f64;
    let samples = (0..n_samples)
        .map(|k| {
            let r = -half + 2.0 * half * k as f64 / last;
            let d = distort_point(candidate, Point::new(center.u0 + r * c, center.v0 + r * s))?;
            Ok(sample_bilinear(img, d.u, d.v))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SliceSignal { angle, samples, sample_spacing: 2.0 * half / last })
}

/// Objective of a single image under a candidate centered on the image.
pub fn evaluate_image(img: &Image, candidate: &DistortionModel, cfg: &DetectionConfig) -> Result<f64> {
    let (w, h) = img.dims();
    let center = img.center();
    let model = candidate.at_center(center);
    model.validate(w, h)?;
    let mut segments = Vec::new();
    for i in 0..slice_count(cfg.angle_step) {
        let angle = i as f64 * cfg.angle_step;
        let slice = provisional_undistorted_signal(img, center, angle, &model, cfg.n_samples)?;
        segments.extend(segment(&slice.samples, &cfg.segment)?);
    }
    let grid = bicoherence(&segments, cfg.segment.length)?;
    match cfg.criterion {
        Criterion::Max => objective_max(&grid, w, h),
        Criterion::Mean => objective_mean(&grid),
    }
}

/// Objective averaged over images.
pub fn evaluate_candidate(images: &[Image], candidate: &DistortionModel, cfg: &DetectionConfig) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::InvalidConfig("no images to evaluate".into()));
    }
    let mut sum = 0.0;
    for img in images {
        sum += evaluate_image(img, candidate, cfg)?;
    }
    Ok(sum / images.len() as f64)
}

/// Curve values minus the curve minimum.
pub fn relative_j(curve: &[f64]) -> Vec<f64> {
    let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    curve.iter().map(|v| v - min).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k1: f64,
    pub k2: f64,
    pub j: f64,
    pub relative_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub best: Coefficients,
    pub best_j: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub model_kind: ModelKind,
    pub per_image: Vec<ImageResult>,
    /// Arithmetic mean of the per-image argmins.
    pub group_mean: Coefficients,
    /// First-stage radial estimate of a geometric search.
    pub radial_seed: Option<f64>,
}

impl DetectionResult {
    /// Writes `image,k1,k2,j,relative_j` rows for every curve point.
    pub fn write_curves_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "image,k1,k2,j,relative_j")?;
        for (i, r) in self.per_image.iter().enumerate() {
            for p in &r.curve {
                writeln!(out, "{i},{:e},{:e},{:.17e},{:.17e}", p.k1, p.k2, p.j, p.relative_j)?;
            }
        }
        Ok(())
    }
}

/// One-coefficient search over `cfg.range1`.
pub fn detect_radial(images: &[Image], cfg: &DetectionConfig) -> Result<DetectionResult> {
    if !matches!(cfg.model_kind, ModelKind::Poly1 | ModelKind::Rational1) {
        return Err(Error::InvalidConfig(format!(
            "radial detection needs poly1 or rational1, got {}",
            cfg.model_kind
        )));
    }
    cfg.validate()?;
    let candidates: Vec<(f64, f64)> = cfg.range1.grid().into_iter().map(|k| (k, k)).collect();
    search(images, cfg, cfg.model_kind, &candidates, None)
}

/// Second stage of geometric detection: a `(k1, k2)` grid around the radial
/// estimate `radial_seed`.
pub fn detect_geometric(images: &[Image], cfg: &DetectionConfig, radial_seed: f64) -> Result<DetectionResult> {
    if cfg.model_kind != ModelKind::RationalGeo2 {
        return Err(Error::InvalidConfig(format!(
            "geometric detection needs rational-geo2, got {}",
            cfg.model_kind
        )));
    }
    cfg.validate()?;
    let axis1 = SearchRange::centered(radial_seed, cfg.geometric_half_steps, cfg.geometric_step)?;
    let axis2 = cfg.range2.unwrap_or(axis1);
    let mut result = detect_grid(images, cfg, &axis1, &axis2)?;
    result.radial_seed = Some(radial_seed);
    Ok(result)
}

/// Exhaustive `RationalGeo2` search over `axis1 x axis2`.
pub fn detect_grid(
    images: &[Image],
    cfg: &DetectionConfig,
    axis1: &SearchRange,
    axis2: &SearchRange,
) -> Result<DetectionResult> {
    cfg.validate()?;
    let g2 = axis2.grid();
    let candidates: Vec<(f64, f64)> = axis1
        .grid()
        .into_iter()
        .flat_map(|a| g2.iter().map(move |&b| (a, b)))
        .collect();
    search(images, cfg, ModelKind::RationalGeo2, &candidates, None)
}

/// Both stages: radial `Rational1` over `cfg.range1`, then the geometric grid
/// around its group mean.
pub fn detect_two_stage(images: &[Image], cfg: &DetectionConfig) -> Result<(DetectionResult, DetectionResult)> {
    let radial_cfg = DetectionConfig { model_kind: ModelKind::Rational1, ..cfg.clone() };
    let radial = detect_radial(images, &radial_cfg)?;
    let geo = detect_geometric(images, cfg, radial.group_mean.k1)?;
    Ok((radial, geo))
}

fn search(
    images: &[Image],
    cfg: &DetectionConfig,
    kind: ModelKind,
    candidates: &[(f64, f64)],
    radial_seed: Option<f64>,
) -> Result<DetectionResult> {
    if images.is_empty() {
        return Err(Error::InvalidConfig("no images to search".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..candidates.len()).map(move |c| (i, c)))
        .collect();
    // Ordered collection keeps results (and the reported error) deterministic.
    let values: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(i, c)| {
            let (k1, k2) = candidates[c];
            let model = DistortionModel::new(kind, k1, k2, images[i].center());
            evaluate_image(&images[i], &model, cfg)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;

    let per_image: Vec<ImageResult> = values
        .chunks(candidates.len())
        .map(|js| {
            let rel = relative_j(js);
            let mut best = 0;
            for i in 1..js.len() {
                let (a, b) = (candidates[i], candidates[best]);
                if js[i] < js[best] || (js[i] == js[best] && a.0.hypot(a.1) < b.0.hypot(b.1)) {
                    best = i;
                }
            }
            ImageResult {
                best: Coefficients { k1: candidates[best].0, k2: candidates[best].1 },
                best_j: js[best],
                curve: candidates
                    .iter()
                    .zip(js.iter().zip(&rel))
                    .map(|(&(k1, k2), (&j, &relative_j))| CurvePoint { k1, k2, j, relative_j })
                    .collect(),
            }
        })
        .collect();
    let n = per_image.len() as f64;
    let group_mean = Coefficients {
        k1: per_image.iter().map(|r| r.best.k1).sum::<f64>() / n,
        k2: per_image.iter().map(|r| r.best.k2).sum::<f64>() / n,
    };
    Ok(DetectionResult { model_kind: kind, per_image, group_mean, radial_seed })
}
