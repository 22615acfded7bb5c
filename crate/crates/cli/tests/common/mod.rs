//! Synthetic inputs shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smokeflow::fields::gaussian_smooth;
use smokeflow::{ImageFrame, Mask, ScalarField};

/// Smoothed uniform noise rescaled to `[lo, hi]`.
pub fn texture(w: usize, h: usize, sigma: f64, seed: u64, lo: f64, hi: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = ScalarField::zeros(w, h);
    for v in raw.data_mut() {
        *v = rng.random::<f64>();
    }
    let s = gaussian_smooth(&raw, sigma);
    let (a, b) = (s.min(), s.max());
    s.map(|v| lo + (hi - lo) * (v - a) / (b - a))
}

pub fn gray(f: &ScalarField) -> ImageFrame {
    ImageFrame::from_planes(std::slice::from_ref(f))
}

/// A 64x64 texture and the same texture moved one pixel to the right,
/// both cropped from a larger canvas so no seam enters the frame.
pub fn shifted_texture(seed: u64) -> (ImageFrame, ImageFrame) {
    let big = texture(80, 80, 2.0, seed, 0.1, 0.9);
    let f1 = ScalarField::from_fn(64, 64, |x, y| big.get(x + 8, y + 8));
    let f2 = ScalarField::from_fn(64, 64, |x, y| big.get(x + 7, y + 8));
    (gray(&f1), gray(&f2))
}

/// Smoke-like pair: a bright textured plume drifting `rise` pixels upward
/// over a static darker background. Returns both frames and the plume
/// support in the first frame.
pub fn smoke_pair(w: usize, h: usize, rise: usize, seed: u64) -> (ImageFrame, ImageFrame, Mask) {
    let bg = texture(w, h, 3.0, seed, 0.25, 0.45);
    let pad = rise + 2;
    let smoke = texture(w, h + pad, 2.0, seed + 1, 0.6, 1.0);
    let (cx, cy, r) = (w as f64 / 2.0, h as f64 * 0.55, w.min(h) as f64 * 0.22);
    let alpha = |x: usize, y: f64| {
        let d = (x as f64 - cx).hypot(y - cy);
        ((r - d) / 2.0 + 0.5).clamp(0.0, 1.0)
    };
    let frame = |t: usize| {
        let planes: Vec<ScalarField> = [1.0, 0.97, 0.9]
            .iter()
            .enumerate()
            .map(|(c, tint)| {
                let tone = [0.9, 1.0, 0.8][c];
                ScalarField::from_fn(w, h, |x, y| {
                    let yy = y + t * rise;
                    let a = alpha(x, (y + t * rise) as f64);
                    let s = smoke.get(x, yy.min(h + pad - 1)) * tint;
                    (1.0 - a) * bg.get(x, y) * tone + a * s
                })
            })
            .collect();
        ImageFrame::from_planes(&planes)
    };
    let support = Mask::from_fn(w, h, |x, y| alpha(x, y as f64) > 0.5);
    (frame(0), frame(1), support)
}

/// Runs the built binary with `args`.
pub fn smokeflow(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_smokeflow"))
        .args(args)
        .env_remove("SMOKEFLOW_LOG")
        .output()
        .expect("spawn smokeflow")
}

/// Writes a plume pair as PNG into `dir` and returns both paths.
pub fn write_pair(dir: &std::path::Path, w: usize, h: usize, seed: u64) -> (String, String) {
    let (f1, f2, _) = smoke_pair(w, h, 1, seed);
    let p1 = dir.join("f1.png");
    let p2 = dir.join("f2.png");
    smokeflow::imgio::write_image(&f1, &p1).unwrap();
    smokeflow::imgio::write_image(&f2, &p2).unwrap();
    (p1.display().to_string(), p2.display().to_string())
}
