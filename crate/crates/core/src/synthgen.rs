//! Synthetic scenes and fixtures with known distortion.
//!
//! Scenes with a closed-form intensity are sampled analytically at the
//! undistorted source position of every fixture pixel, so the ground truth
//! carries no interpolation error. Noise scenes are warped bilinearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Center, Image, Point};
use crate::models::{undistort_point, DistortionModel, ModelRecord};
use crate::warp::{distort_image, WarpMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SceneKind {
    /// Alternating `square`-pixel cells; the cell containing pixel `(0, 0)`
    /// is white. Pixel `i` covers `[i - 0.5, i + 0.5]`, so cell edges fall
    /// between pixel centers. The intensity is averaged over a unit pixel
    /// footprint: binary at pixel centers, a linear ramp within half a pixel
    /// of an edge.
    Checkerboard { square: usize },
    /// `0.5 + 0.5 * mean_i cos(2 pi f_i r)` with `r` the distance from the
    /// image center and `f_i` in cycles per pixel.
    RadialSinusoid { frequencies: Vec<f64> },
    /// Seeded uniform white noise.
    Noise { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize) -> Result<Self> {
        let s = Self { kind, width, height };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidConfig(format!(
                "scene must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        match &self.kind {
            SceneKind::Checkerboard { square } if *square < 2 => Err(Error::InvalidConfig(format!(
                "checkerboard square {square} must be at least 2"
            ))),
            SceneKind::RadialSinusoid { frequencies }
                if frequencies.is_empty() || frequencies.iter().any(|f| !f.is_finite() || *f == 0.0) =>
            {
                Err(Error::InvalidConfig("radial frequencies must be finite and nonzero".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn center(&self) -> Center {
        Center::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Closed-form intensity at a subpixel position, if the scene has one.
    pub fn intensity(&self, p: Point) -> Option<f64> {
        match &self.kind {
            SceneKind::Checkerboard { square } => {
                let s = *square as f64;
                Some(0.5 + 0.5 * box_square_wave(p.u, s) * box_square_wave(p.v, s))
            }
            SceneKind::RadialSinusoid { frequencies } => {
                let c = self.center();
                let r = (p.u - c.u0).hypot(p.v - c.v0);
                let sum: f64 = frequencies
                    .iter()
                    .map(|f| (2.0 * std::f64::consts::PI * f * r).cos())
                    .sum();
                Some(0.5 + 0.5 * sum / frequencies.len() as f64)
            }
            SceneKind::Noise { .. } => None,
        }
    }
}

/// Square wave (+1 on even cells of width `s`, edges at `k s - 0.5`)
/// averaged over `[t - 0.5, t + 0.5]`. The board is the separable product
/// of two such waves, so its box average factors the same way.
fn box_square_wave(t: f64, s: f64) -> f64 {
    let k = ((t + 0.5) / s).floor();
    let sign = if k.rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
    let d = (t - (k * s - 0.5)).min((k + 1.0) * s - 0.5 - t);
    if d >= 0.5 {
        sign
    } else {
        sign * 2.0 * d
    }
}

/// Renders the undistorted scene.
pub fn render(spec: &SceneSpec) -> Result<Image> {
    spec.validate()?;
    match spec.kind {
        SceneKind::Noise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pixels = (0..spec.width * spec.height).map(|_| rng.random::<f64>()).collect();
            Image::new(spec.width, spec.height, pixels)
        }
        _ => Image::from_fn(spec.width, spec.height, |x, y| {
            spec.intensity(Point::new(x as f64, y as f64)).unwrap_or(0.0)
        }),
    }
}

/// Renders `spec` as seen through `model`. Pixels whose undistorted source
/// does not exist are set to 0.
pub fn make_fixture(spec: &SceneSpec, model: &DistortionModel) -> Result<(Image, DistortionModel)> {
    spec.validate()?;
    model.validate(spec.width, spec.height)?;
    let img = match spec.kind {
        SceneKind::Noise { .. } => distort_image(&render(spec)?, model, WarpMethod::InverseBilinear)?.image,
        _ => Image::from_fn(spec.width, spec.height, |x, y| {
            undistort_point(model, Point::new(x as f64, y as f64))
                .ok()
                .and_then(|q| spec.intensity(q))
                .unwrap_or(0.0)
        })?,
    };
    Ok((img, *model))
}

/// JSON sidecar written next to a fixture image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSidecar {
    #[serde(flatten)]
    pub model: ModelRecord,
    pub scene: SceneSpec,
}
