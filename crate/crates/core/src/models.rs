//! Distortion models in the undistorted-to-distorted direction, their
//! closed-form inverses, coefficient frame conversion and search ranges.
//!
//! All coefficients are in image-plane pixel units (px^-2). Offsets are
//! measured from the center of distortion `(u0, v0)`:
//!
//! - `Poly1`: `r_d = r (1 + k r^2)`.
//! - `Rational1`: both offsets scaled by `1 / (1 + k r^2)`.
//! - `RationalGeo2`: horizontal offset scaled by `1 / (1 + k1 r^2)`, vertical
//!   by `1 / (1 + k2 r^2)`, with `r` the undistorted radius.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Center, Point};

/// Sanity bound on any coefficient, far above physical values at pixel scale.
pub const MAX_ABS_COEFFICIENT: f64 = 1e-3;

/// Maximum number of grid steps a [`SearchRange`] may span.
pub const MAX_GRID_STEPS: f64 = 1e4;

/// Radius at which the default search ranges were laid out (a 320x240
/// image with a centered principal point).
pub const REFERENCE_RADIUS: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Poly1,
    Rational1,
    RationalGeo2,
}

impl ModelKind {
    pub fn is_rational(self) -> bool {
        matches!(self, ModelKind::Rational1 | ModelKind::RationalGeo2)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Poly1 => "poly1",
            ModelKind::Rational1 => "rational1",
            ModelKind::RationalGeo2 => "rational-geo2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly1" => Ok(ModelKind::Poly1),
            "rational1" => Ok(ModelKind::Rational1),
            "rational-geo2" => Ok(ModelKind::RationalGeo2),
            other => Err(Error::InvalidConfig(format!("unknown model kind '{other}'"))),
        }
    }
}

/// A distortion model. For the one-coefficient kinds `k2 == k1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionModel {
    pub kind: ModelKind,
    pub k1: f64,
    pub k2: f64,
    pub center: Center,
}

impl DistortionModel {
    pub fn poly1(k: f64, center: Center) -> Self {
        Self { kind: ModelKind::Poly1, k1: k, k2: k, center }
    }

    pub fn rational1(k: f64, center: Center) -> Self {
        Self { kind: ModelKind::Rational1, k1: k, k2: k, center }
    }

    pub fn rational_geo2(k1: f64, k2: f64, center: Center) -> Self {
        Self { kind: ModelKind::RationalGeo2, k1, k2, center }
    }

    /// Builds a model of `kind`; `k2` is ignored for the one-coefficient kinds.
    pub fn new(kind: ModelKind, k1: f64, k2: f64, center: Center) -> Self {
        match kind {
            ModelKind::RationalGeo2 => Self::rational_geo2(k1, k2, center),
            _ => Self { kind, k1, k2: k1, center },
        }
    }

    /// The same coefficients about a different center.
    pub fn at_center(self, center: Center) -> Self {
        Self { center, ..self }
    }

    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0
    }

    /// Checks the coefficient bounds and that the model is well defined
    /// (nonvanishing denominators, monotone radial map) out to the farthest
    /// image corner.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for k in [self.k1, self.k2] {
            if !k.is_finite() || k.abs() > MAX_ABS_COEFFICIENT {
                return Err(Error::InvalidConfig(format!(
                    "coefficient {k} outside [-{MAX_ABS_COEFFICIENT}, {MAX_ABS_COEFFICIENT}]"
                )));
            }
        }
        if self.kind != ModelKind::RationalGeo2 && self.k1 != self.k2 {
            return Err(Error::InvalidConfig(format!("{} model needs k1 == k2", self.kind)));
        }
        self.center.validate(width, height)?;
        let r2 = domain_radius(width, height, self.center).powi(2);
        let ok = match self.kind {
            ModelKind::Poly1 => 1.0 + 3.0 * self.k1 * r2 > 0.0,
            _ => 1.0 + self.k1 * r2 > 0.0 && 1.0 + self.k2 * r2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ModelDomain(format!(
                "{} model with k1={}, k2={} is not well defined out to radius {:.3}",
                self.kind,
                self.k1,
                self.k2,
                r2.sqrt()
            )))
        }
    }

    pub fn record(&self) -> ModelRecord {
        ModelRecord {
            kind: self.kind,
            k1: self.k1,
            k2: self.k2,
            u0: self.center.u0,
            v0: self.center.v0,
        }
    }
}

/// Largest distance from `center` to a corner of the `width x height` pixel
/// rectangle.
pub fn domain_radius(width: usize, height: usize, center: Center) -> f64 {
    let (w, h) = (width.saturating_sub(1) as f64, height.saturating_sub(1) as f64);
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
        .iter()
        .map(|&(u, v)| (u - center.u0).hypot(v - center.v0))
        .fold(0.0, f64::max)
}

/// Maps an undistorted point to its distorted position.
pub fn distort_point(model: &DistortionModel, p: Point) -> Result<Point> {
    if model.is_identity() {
        return Ok(p);
    }
    let Center { u0, v0 } = model.center;
    let (du, dv) = (p.u - u0, p.v - v0);
    let r2 = du * du + dv * dv;
    match model.kind {
        ModelKind::Poly1 => {
            let s = 1.0 + model.k1 * r2;
            Ok(Point::new(u0 + du * s, v0 + dv * s))
        }
        ModelKind::Rational1 | ModelKind::RationalGeo2 => {
            let d1 = 1.0 + model.k1 * r2;
            let d2 = 1.0 + model.k2 * r2;
            if d1 <= 0.0 || d2 <= 0.0 {
                return Err(Error::ModelDomain(format!(
                    "rational denominator vanishes at ({}, {})",
                    p.u, p.v
                )));
            }
            Ok(Point::new(u0 + du / d1, v0 + dv / d2))
        }
    }
}

/// Maps a distorted point back to its undistorted position in closed form.
pub fn undistort_point(model: &DistortionModel, p: Point) -> Result<Point> {
    let Center { u0, v0 } = model.center;
    let (du, dv) = (p.u - u0, p.v - v0);
    if model.is_identity() || (du == 0.0 && dv == 0.0) {
        return Ok(p);
    }
    match model.kind {
        ModelKind::Poly1 => {
            let rd = du.hypot(dv);
            let r = poly1_inverse_radius(model.k1, rd)?;
            let s = r / rd;
            Ok(Point::new(u0 + du * s, v0 + dv * s))
        }
        ModelKind::Rational1 | ModelKind::RationalGeo2 => {
            let rbar = rational_inverse_r2(model.k1, model.k2, du * du, dv * dv)?;
            Ok(Point::new(
                u0 + du * (1.0 + model.k1 * rbar),
                v0 + dv * (1.0 + model.k2 * rbar),
            ))
        }
    }
}

/// Solves `(k1^2 a + k2^2 b) x^2 + (2 k1 a + 2 k2 b - 1) x + (a + b) = 0`
/// for the squared undistorted radius `x`, given squared distorted offsets
/// `a` and `b`.
fn rational_inverse_r2(k1: f64, k2: f64, a: f64, b: f64) -> Result<f64> {
    let qa = k1 * k1 * a + k2 * k2 * b;
    let qb = 2.0 * k1 * a + 2.0 * k2 * b - 1.0;
    let qc = a + b;
    let valid = |x: f64| x.is_finite() && x >= 0.0 && 1.0 + k1 * x > 0.0 && 1.0 + k2 * x > 0.0;
    let candidates: Vec<f64> = if qa == 0.0 {
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Err(Error::InversionDomain(format!(
                "no real undistorted radius for squared offsets ({a}, {b})"
            )));
        }
        // Cancellation-free pair of roots.
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        vec![q / qa, qc / q]
    };
    candidates
        .into_iter()
        .filter(|&x| valid(x))
        .min_by(|x, y| (x - qc).abs().total_cmp(&(y - qc).abs()))
        .ok_or_else(|| {
            Error::InversionDomain(format!("no valid undistorted radius for squared offsets ({a}, {b})"))
        })
}

/// Real root of `k r^3 + r - rd = 0` on the monotone branch of the forward
/// map, from the trigonometric/hyperbolic form of the depressed cubic,
/// followed by one Newton step.
fn poly1_inverse_radius(k: f64, rd: f64) -> Result<f64> {
    if k == 0.0 {
        return Ok(rd);
    }
    // r^3 + p r + q = 0
    let p = 1.0 / k;
    let q = -rd / k;
    let r = if k > 0.0 {
        let arg = (1.5 * q / p) * (3.0 / p).sqrt();
        -2.0 * (p / 3.0).sqrt() * (arg.asinh() / 3.0).sinh()
    } else {
        let fold = 1.0 / (3.0 * -k).sqrt();
        let disc = 4.0 * p * p * p + 27.0 * q * q;
        if disc > 0.0 {
            return Err(Error::InversionDomain(format!(
                "distorted radius {rd} exceeds the fold of the poly1 model (k={k})"
            )));
        }
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = ((1.5 * q / p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|j| m * (theta - 2.0 * std::f64::consts::PI * j as f64 / 3.0).cos())
            .filter(|&t| t >= 0.0 && t <= fold * (1.0 + 1e-9))
            .min_by(f64::total_cmp)
            .ok_or_else(|| {
                Error::InversionDomain(format!("no root on the monotone branch for radius {rd}"))
            })?
    };
    let deriv = 3.0 * k * r * r + 1.0;
    if deriv > 0.0 {
        Ok(r - (k * r * r * r + r - rd) / deriv)
    } else {
        Ok(r)
    }
}

/// Rough intrinsics under `gamma ~ 0` and `alpha ~ beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsApprox {
    alpha: f64,
}

impl IntrinsicsApprox {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::Domain(format!("focal scale alpha must be positive, got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Converts a camera-frame (normalized) coefficient to the image plane:
/// `k_uv = k_xy / alpha^2`.
pub fn convert_coefficient_frame(k_xy: f64, intr: IntrinsicsApprox) -> f64 {
    k_xy / (intr.alpha * intr.alpha)
}

/// An inclusive, evenly spaced range of candidate coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SearchRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let r = Self { lo, hi, step };
        r.validate()?;
        Ok(r)
    }

    /// A single candidate.
    pub fn point(value: f64) -> Self {
        Self { lo: value, hi: value, step: 1e-6 }
    }

    /// `seed +- half_steps * step`.
    pub fn centered(seed: f64, half_steps: usize, step: f64) -> Result<Self> {
        let w = half_steps as f64 * step;
        Self::new(seed - w, seed + w, step)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return Err(Error::InvalidConfig("search range values must be finite".into()));
        }
        if self.lo > self.hi {
            return Err(Error::InvalidConfig(format!("range lo {} > hi {}", self.lo, self.hi)));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidConfig(format!("range step {} must be positive", self.step)));
        }
        if (self.hi - self.lo) / self.step > MAX_GRID_STEPS {
            return Err(Error::InvalidConfig(format!(
                "range [{}, {}] / {} exceeds {MAX_GRID_STEPS} steps",
                self.lo, self.hi, self.step
            )));
        }
        Ok(())
    }

    /// Grid values `lo, lo + step, ...` up to `hi` (tolerating rounding).
    /// Values within rounding noise of zero are snapped to exactly 0.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| {
                let v = self.lo + i as f64 * self.step;
                if v.abs() < self.step * 1e-9 {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The default grid for a 320x240 image: Poly1 `[-4.5e-6, 3.5e-6]`,
    /// rational `[0, 9e-6]`, both with step `1e-6`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Poly1 => Self { lo: -4.5e-6, hi: 3.5e-6, step: 1e-6 },
            _ => Self { lo: 0.0, hi: 9e-6, step: 1e-6 },
        }
    }

    /// [`Self::default_for`] rescaled by `(200 / r_max)^2` so the grid covers
    /// the same boundary shrink ratios at another image size.
    pub fn scaled_default(kind: ModelKind, center: Center) -> Self {
        let s = range_scale(center);
        let d = Self::default_for(kind);
        Self { lo: d.lo * s, hi: d.hi * s, step: d.step * s }
    }
}

fn range_scale(center: Center) -> f64 {
    let r_max = center.u0.hypot(center.v0);
    (REFERENCE_RADIUS / r_max).powi(2)
}

/// Coefficient that moves a point at `r_max` to `rho * r_max`:
/// `(rho - 1) / r_max^2` for Poly1, `(1 / rho - 1) / r_max^2` for the
/// rational kinds.
pub fn boundary_coefficient(kind: ModelKind, rho: f64, r_max: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("shrink ratio {rho} outside (0, 1]")));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Domain(format!("r_max {r_max} must be positive")));
    }
    let r2 = r_max * r_max;
    Ok(match kind {
        ModelKind::Poly1 => (rho - 1.0) / r2,
        _ => (1.0 / rho - 1.0) / r2,
    })
}

/// Result of [`derive_search_range`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRange {
    /// One boundary coefficient per requested ratio, in order.
    pub candidates: Vec<f64>,
    /// The scaled default grid, widened by whole steps until it covers
    /// every candidate.
    pub range: SearchRange,
}

/// Search range from boundary shrink ratios, with `r_max = sqrt(u0^2 + v0^2)`.
pub fn derive_search_range(
    kind: ModelKind,
    dims: (usize, usize),
    center: Center,
    rhos: &[f64],
) -> Result<DerivedRange> {
    center.validate(dims.0, dims.1)?;
    if rhos.is_empty() {
        return Err(Error::Domain("need at least one shrink ratio".into()));
    }
    let r_max = center.u0.hypot(center.v0);
    let candidates = rhos
        .iter()
        .map(|&rho| boundary_coefficient(kind, rho, r_max))
        .collect::<Result<Vec<_>>>()?;
    let mut range = SearchRange::scaled_default(kind, center);
    let min = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min < range.lo {
        range.lo -= ((range.lo - min) / range.step - 1e-9).ceil() * range.step;
    }
    if max > range.hi {
        range.hi += ((max - range.hi) / range.step - 1e-9).ceil() * range.step;
    }
    range.validate()?;
    Ok(DerivedRange { candidates, range })
}

/// Serialized form of a model: `{kind, k1, k2, u0, v0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kind: ModelKind,
    pub k1: f64,
    pub k2: f64,
    pub u0: f64,
    pub v0: f64,
}

impl ModelRecord {
    pub fn model(&self) -> DistortionModel {
        DistortionModel::new(self.kind, self.k1, self.k2, Center::new(self.u0, self.v0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: Center = Center::new(160.0, 120.0);

    fn close(a: Point, b: Point, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn forward_boundary_examples() {
        let p = Point::new(360.0, 120.0);
        let poly = distort_point(&DistortionModel::poly1(-6.25e-6, C), p).unwrap();
        assert!(close(poly, Point::new(310.0, 120.0), 1e-12));
        let rat = distort_point(&DistortionModel::rational1(1.0 / 120_000.0, C), p).unwrap();
        assert!(close(rat, Point::new(310.0, 120.0), 1e-12));
        let rat = distort_point(&DistortionModel::rational1(8.3333e-6, C), p).unwrap();
        assert!(close(rat, Point::new(310.0, 120.0), 1e-3));
    }

    #[test]
    fn inverse_examples() {
        for model in [
            DistortionModel::poly1(-6.25e-6, C),
            DistortionModel::rational1(8.3333e-6, C),
            DistortionModel::rational_geo2(3e-6, 6e-6, C),
        ] {
            assert_eq!(undistort_point(&model, C.point()).unwrap(), C.point());
        }
        let back = undistort_point(&DistortionModel::rational1(1.0 / 120_000.0, C), Point::new(310.0, 120.0)).unwrap();
        assert!(close(back, Point::new(360.0, 120.0), 1e-9));
        let back = undistort_point(&DistortionModel::poly1(-6.25e-6, C), Point::new(310.0, 120.0)).unwrap();
        assert!(close(back, Point::new(360.0, 120.0), 1e-9));
    }

    #[test]
    fn geometric_round_trip_on_grid() {
        let m = DistortionModel::rational_geo2(3e-6, 6e-6, C);
        for i in 0..9 {
            for j in 0..9 {
                let p = Point::new(i as f64 * 319.0 / 8.0, j as f64 * 239.0 / 8.0);
                let back = undistort_point(&m, distort_point(&m, p).unwrap()).unwrap();
                assert!(close(back, p, 1e-9), "{p:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn inversion_fails_beyond_the_fold() {
        // Rational forward radii never exceed 1 / (2 sqrt k).
        let m = DistortionModel::rational1(9e-6, C);
        let rd = 1.0 / (2.0 * 9e-6f64.sqrt());
        assert!(matches!(
            undistort_point(&m, Point::new(160.0 + rd + 1.0, 120.0)),
            Err(Error::InversionDomain(_))
        ));
        // Poly1 barrel forward radii never exceed (2/3) / sqrt(3 |k|).
        let m = DistortionModel::poly1(-6.25e-6, C);
        let rd = (2.0 / 3.0) / (3.0 * 6.25e-6f64).sqrt();
        assert!(matches!(
            undistort_point(&m, Point::new(160.0 + rd + 1.0, 120.0)),
            Err(Error::InversionDomain(_))
        ));
    }

    #[test]
    fn rational_denominator_guard() {
        let m = DistortionModel::rational1(-1e-4, C);
        assert!(matches!(distort_point(&m, Point::new(300.0, 120.0)), Err(Error::ModelDomain(_))));
    }

    #[test]
    fn validation() {
        assert!(DistortionModel::poly1(-6.25e-6, C).validate(320, 240).is_ok());
        assert!(DistortionModel::rational1(9e-6, C).validate(320, 240).is_ok());
        assert!(DistortionModel::rational1(2e-3, C).validate(320, 240).is_err());
        assert!(DistortionModel::rational1(f64::NAN, C).validate(320, 240).is_err());
        assert!(matches!(
            DistortionModel::poly1(-9e-6, C).validate(320, 240),
            Err(Error::ModelDomain(_))
        ));
        assert!(matches!(
            DistortionModel::rational1(-3e-5, C).validate(320, 240),
            Err(Error::ModelDomain(_))
        ));
        assert!(DistortionModel::poly1(0.0, Center::new(400.0, 1.0)).validate(320, 240).is_err());
    }

    #[test]
    fn frame_conversion() {
        assert_eq!(convert_coefficient_frame(3e-6, IntrinsicsApprox::new(1.0).unwrap()), 3e-6);
        assert!((convert_coefficient_frame(4e-6, IntrinsicsApprox::new(2.0).unwrap()) - 1e-6).abs() < 1e-21);
        let k = convert_coefficient_frame(-0.2611, IntrinsicsApprox::new(264.6).unwrap());
        assert!((k - (-3.729e-6)).abs() < 1e-9, "{k}");
        assert!(IntrinsicsApprox::new(0.0).is_err());
    }

    #[test]
    fn search_range_candidates() {
        let p = derive_search_range(ModelKind::Poly1, (320, 240), C, &[0.75, 1.0]).unwrap();
        assert_eq!(p.candidates, vec![-6.25e-6, 0.0]);
        assert!(p.range.lo <= -6.25e-6 && p.range.hi >= 3.5e-6);
        let r = derive_search_range(ModelKind::Rational1, (320, 240), C, &[0.75]).unwrap();
        assert!((r.candidates[0] - 8.3333e-6).abs() < 5e-8);
        assert_eq!(r.range, SearchRange::default_for(ModelKind::Rational1));
        assert!(derive_search_range(ModelKind::Poly1, (320, 240), C, &[0.0]).is_err());
        assert!(derive_search_range(ModelKind::Poly1, (320, 240), C, &[1.5]).is_err());
        let big = derive_search_range(ModelKind::Rational1, (640, 480), Center::new(320.0, 240.0), &[1.0]).unwrap();
        assert!((big.range.hi - 9e-6 / 4.0).abs() < 1e-20);
    }

    #[test]
    fn search_range_grid() {
        let g = SearchRange::default_for(ModelKind::Rational1).grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.0);
        assert!((g[9] - 9e-6).abs() < 1e-18);
        assert_eq!(SearchRange::default_for(ModelKind::Poly1).grid().len(), 9);
        let c = SearchRange::centered(4e-6, 3, 0.88e-6).unwrap().grid();
        assert_eq!(c.len(), 7);
        assert!((c[3] - 4e-6).abs() < 1e-18);
        assert_eq!(SearchRange::centered(0.88e-6, 1, 0.88e-6).unwrap().grid()[0], 0.0);
        assert!(SearchRange::new(1.0, 0.0, 1.0).is_err());
        assert!(SearchRange::new(0.0, 1.0, 0.0).is_err());
        assert!(SearchRange::new(0.0, 1.0, 1e-5).is_err());
        assert_eq!(SearchRange::point(3e-6).grid(), vec![3e-6]);
    }

    #[test]
    fn record_json_round_trip() {
        let m = DistortionModel::rational_geo2(3e-6, 6e-6, C);
        let json = serde_json::to_string(&m.record()).unwrap();
        assert!(json.contains("\"kind\":\"rational-geo2\""));
        let back: ModelRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.model(), m);
        assert_eq!("poly1".parse::<ModelKind>().unwrap(), ModelKind::Poly1);
        assert!("cubic".parse::<ModelKind>().is_err());
    }

    fn any_model() -> impl Strategy<Value = DistortionModel> {
        prop_oneof![
            (-6.0e-6f64..3.5e-6).prop_map(|k| DistortionModel::poly1(k, C)),
            (-2e-6f64..9e-6).prop_map(|k| DistortionModel::rational1(k, C)),
            (0.0f64..9e-6, 0.0f64..9e-6).prop_map(|(a, b)| DistortionModel::rational_geo2(a, b, C)),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_both_ways(m in any_model(), u in 0.0f64..319.0, v in 0.0f64..239.0) {
            let p = Point::new(u, v);
            let d = distort_point(&m, p).unwrap();
            prop_assert!(close(undistort_point(&m, d).unwrap(), p, 1e-9));
            // Distorted points are inside the forward image whenever the
            // inverse exists; check the other composition there.
            if let Ok(q) = undistort_point(&m, p) {
                prop_assert!(close(distort_point(&m, q).unwrap(), p, 1e-9));
            }
        }

        #[test]
        fn identity_at_zero(kind in prop_oneof![Just(ModelKind::Poly1), Just(ModelKind::Rational1), Just(ModelKind::RationalGeo2)],
                            u in -500.0f64..500.0, v in -500.0f64..500.0) {
            let m = DistortionModel::new(kind, 0.0, 0.0, C);
            let p = Point::new(u, v);
            prop_assert_eq!(distort_point(&m, p).unwrap(), p);
            prop_assert_eq!(undistort_point(&m, p).unwrap(), p);
        }

        #[test]
        fn radial_kinds_preserve_angle(m in any_model().prop_filter("radial", |m| m.kind != ModelKind::RationalGeo2),
                                       theta in 0.0f64..std::f64::consts::TAU, r in 1.0f64..200.0) {
            let p = Point::new(160.0 + r * theta.cos(), 120.0 + r * theta.sin());
            let d = distort_point(&m, p).unwrap();
            let (du, dv) = (d.u - 160.0, d.v - 120.0);
            let cross = du * theta.sin() - dv * theta.cos();
            prop_assert!(cross.abs() < 1e-9);
            prop_assert!(du * theta.cos() + dv * theta.sin() > 0.0);
            // Output radius depends on the input radius only.
            let q = distort_point(&m, Point::new(160.0 + r, 120.0)).unwrap();
            prop_assert!((du.hypot(dv) - (q.u - 160.0)).abs() < 1e-9);
        }

        #[test]
        fn geo2_with_equal_coefficients_matches_rational1(k in -2e-6f64..9e-6, u in 0.0f64..319.0, v in 0.0f64..239.0) {
            let a = DistortionModel::rational1(k, C);
            let b = DistortionModel::rational_geo2(k, k, C);
            let p = Point::new(u, v);
            prop_assert!(close(distort_point(&a, p).unwrap(), distort_point(&b, p).unwrap(), 1e-12));
            match (undistort_point(&a, p), undistort_point(&b, p)) {
                (Ok(x), Ok(y)) => prop_assert!(close(x, y, 1e-12)),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }

        #[test]
        fn distorted_radius_is_increasing(m in any_model(), theta in 0.0f64..std::f64::consts::TAU, r in 0.0f64..199.0) {
            let at = |r: f64| {
                let d = distort_point(&m, Point::new(160.0 + r * theta.cos(), 120.0 + r * theta.sin())).unwrap();
                (d.u - 160.0).hypot(d.v - 120.0)
            };
            prop_assert!(at(r + 1.0) > at(r));
        }
    }
}
