//! Library round trip: synthesize, write to disk, detect, undistort.

use blindlens::detect::{detect_radial, DetectionConfig};
use blindlens::image::{load_image, save_image, Image};
use blindlens::models::{DistortionModel, ModelKind};
use blindlens::synthgen::{make_fixture, render, SceneKind, SceneSpec};
use blindlens::warp::{psnr_central, undistort_image, WarpMethod};

fn radial(freqs: &[f64]) -> SceneSpec {
    SceneSpec::new(SceneKind::RadialSinusoid { frequencies: freqs.to_vec() }, 320, 240).unwrap()
}

#[test]
fn files_in_both_formats_survive_detection() {
    let dir = tempfile::tempdir().unwrap();
    let k = 4.4e-6;
    let mut images: Vec<Image> = Vec::new();
    for (i, f) in [0.06, 0.07, 0.08, 0.09, 0.10].iter().enumerate() {
        let spec = radial(&[*f]);
        let (img, _) = make_fixture(&spec, &DistortionModel::rational1(k, spec.center())).unwrap();
        let ext = if i % 2 == 0 { "pgm" } else { "png" };
        let path = dir.path().join(format!("f{i}.{ext}"));
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        // both encodings are 8-bit
        let worst = back.pixels().iter().zip(img.quantized().pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "decode drift {worst:e}");
        images.push(back);
    }
    let res = detect_radial(&images, &DetectionConfig::new(ModelKind::Rational1)).unwrap();
    assert!((res.group_mean.k1 - k).abs() <= 1e-6, "{:e}", res.group_mean.k1);
    let close = res.per_image.iter().filter(|r| (r.best.k1 - k).abs() <= 1e-6).count();
    assert!(close >= 4);
}

#[test]
fn detected_model_undistorts_the_scene() {
    let spec = radial(&[0.03, 0.05]);
    let truth = DistortionModel::rational1(6e-6, spec.center());
    let (fixture, _) = make_fixture(&spec, &truth).unwrap();
    let reference = render(&spec).unwrap();

    let detect_spec = radial(&[0.07]);
    let (probe, _) = make_fixture(&detect_spec, &truth).unwrap();
    let res = detect_radial(&[probe], &DetectionConfig::new(ModelKind::Rational1)).unwrap();
    let found = DistortionModel::rational1(res.group_mean.k1, spec.center());
    assert!((found.k1 - truth.k1).abs() <= 1e-6);

    let before = psnr_central(&fixture, &reference).unwrap();
    let after = psnr_central(&undistort_image(&fixture, &found, WarpMethod::default()).unwrap().image, &reference)
        .unwrap();
    assert!(after > before + 5.0, "before {before:.1} dB, after {after:.1} dB");
}
