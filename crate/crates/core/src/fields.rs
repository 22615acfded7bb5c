//! Scalar and vector fields, image derivatives, smoothing, warping,
//! pyramids and noise injection.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::ImageFrame;
use crate::par;

/// Intensity scale applied before differentiation.
pub const GRADIENT_SCALE: f64 = 255.0;

/// Row-major real-valued grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} samples for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let mut data = vec![0.0; width * height];
        par::for_each_row(&mut data, width, |y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = f(x, y);
            }
        });
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with replicated borders.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn same_size(&self, other: &ScalarField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        ScalarField {
            width: self.width,
            height: self.height,
            data: par::map_indexed(self.data.len(), |i| f(self.data[i])),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Per-pixel displacement in pixels/frame; `u` points right, `v` points down.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: ScalarField::zeros(width, height),
            v: ScalarField::zeros(width, height),
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            u: ScalarField::filled(width, height, u),
            v: ScalarField::filled(width, height, v),
        }
    }

    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        if !u.same_size(&v) {
            return Err(Error::SizeMismatch(format!(
                "u is {}x{}, v is {}x{}",
                u.width, u.height, v.width, v.height
            )));
        }
        Ok(Self { u, v })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.u.height
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }

    pub fn max_abs_diff(&self, other: &FlowField) -> f64 {
        self.u.max_abs_diff(&other.u).max(self.v.max_abs_diff(&other.v))
    }

    /// Rounds every sample to single precision, as stored in `.flo` files.
    pub fn to_f32_precision(&self) -> FlowField {
        let round = |v: f64| v as f32 as f64;
        FlowField {
            u: self.u.map(round),
            v: self.v.map(round),
        }
    }

    pub fn components(&self) -> [&ScalarField; 2] {
        [&self.u, &self.v]
    }
}

/// Spatial derivatives (intensity/pixel) and temporal difference (intensity/frame).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTriple {
    pub ix: ScalarField,
    pub iy: ScalarField,
    pub it: ScalarField,
}

impl GradientTriple {
    pub fn width(&self) -> usize {
        self.ix.width()
    }

    pub fn height(&self) -> usize {
        self.ix.height()
    }

    pub fn grad_norm_sq(&self, i: usize) -> f64 {
        let gx = self.ix.data()[i];
        let gy = self.iy.data()[i];
        gx * gx + gy * gy
    }
}

/// Grayscale conversion with Rec.601 luma weights; 1-channel frames pass through.
pub fn luma(frame: &ImageFrame) -> ScalarField {
    let (w, h) = (frame.width(), frame.height());
    let data = frame.data();
    match frame.channels() {
        1 => ScalarField::from_fn(w, h, |x, y| data[y * w + x] as f64),
        _ => ScalarField::from_fn(w, h, |x, y| {
            let i = 3 * (y * w + x);
            0.299 * data[i] as f64 + 0.587 * data[i + 1] as f64 + 0.114 * data[i + 2] as f64
        }),
    }
}

/// Normalised 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicated borders. `sigma = 0` is the identity.
pub fn gaussian_smooth(field: &ScalarField, sigma: f64) -> ScalarField {
    if sigma <= 0.0 {
        return field.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (field.width(), field.height());
    let horiz = ScalarField::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(j, kw)| kw * field.at(x as isize + j as isize - r, y as isize))
            .sum()
    });
    ScalarField::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(j, kw)| kw * horiz.at(x as isize, y as isize + j as isize - r))
            .sum()
    })
}

/// Blurs every channel of a frame.
pub fn smooth_frame(frame: &ImageFrame, sigma: f64) -> ImageFrame {
    if sigma <= 0.0 {
        return frame.clone();
    }
    let planes: Vec<ScalarField> = (0..frame.channels())
        .map(|c| gaussian_smooth(&frame.channel(c), sigma))
        .collect();
    ImageFrame::from_planes(&planes)
}

/// Central difference along x with replicated borders.
fn diff_x(f: &ScalarField) -> ScalarField {
    ScalarField::from_fn(f.width(), f.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (f.at(x + 1, y) - f.at(x - 1, y))
    })
}

fn diff_y(f: &ScalarField) -> ScalarField {
    ScalarField::from_fn(f.width(), f.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (f.at(x, y + 1) - f.at(x, y - 1))
    })
}

fn check_same_frame_size(a: &ImageFrame, b: &ImageFrame) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::SizeMismatch(format!(
            "frames are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Derivatives of a frame pair on the 0..255 intensity scale.
///
/// Both frames are converted to luma, blurred with `presmooth_sigma`, and
/// rescaled by 255. The spatial derivatives are central differences averaged
/// over the two frames; the temporal derivative is `frame2 - frame1`.
pub fn gradients(
    frame1: &ImageFrame,
    frame2: &ImageFrame,
    presmooth_sigma: f64,
) -> Result<GradientTriple> {
    check_same_frame_size(frame1, frame2)?;
    let prep = |f: &ImageFrame| {
        gaussian_smooth(&luma(f), presmooth_sigma).map(|v| v * GRADIENT_SCALE)
    };
    let a = prep(frame1);
    let b = prep(frame2);
    gradients_from_fields(&a, &b)
}

/// As [`gradients`] but on already prepared (smoothed, scaled) intensity fields.
pub fn gradients_from_fields(a: &ScalarField, b: &ScalarField) -> Result<GradientTriple> {
    if !a.same_size(b) {
        return Err(Error::SizeMismatch("intensity fields differ in size".into()));
    }
    let (ax, ay) = (diff_x(a), diff_y(a));
    let (bx, by) = (diff_x(b), diff_y(b));
    let (w, h) = (a.width(), a.height());
    Ok(GradientTriple {
        ix: ScalarField::from_fn(w, h, |x, y| 0.5 * (ax.get(x, y) + bx.get(x, y))),
        iy: ScalarField::from_fn(w, h, |x, y| 0.5 * (ay.get(x, y) + by.get(x, y))),
        it: ScalarField::from_fn(w, h, |x, y| b.get(x, y) - a.get(x, y)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    SaltPepper,
    Poisson,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "salt_pepper" | "salt-pepper" => Ok(NoiseKind::SaltPepper),
            "poisson" => Ok(NoiseKind::Poisson),
            other => Err(Error::invalid(
                "noise.kind",
                format!("unknown noise kind {other:?}"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub mean: f64,
    pub sigma: f64,
    pub density: f64,
    pub seed: u64,
}

/// Photon count corresponding to full intensity for Poisson noise.
pub const POISSON_PEAK: f64 = 255.0;

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            mean: 0.0,
            sigma,
            density: 0.0,
            seed,
        }
    }

    pub fn salt_pepper(density: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::SaltPepper,
            mean: 0.0,
            sigma: 0.0,
            density,
            seed,
        }
    }

    pub fn poisson(seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            mean: 0.0,
            sigma: 0.0,
            density: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("noise.sigma", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::invalid("noise.density", "must lie in [0, 1]"));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("noise.mean", "must be finite"));
        }
        Ok(())
    }
}

/// Adds seeded noise to a frame. Output samples stay in [0, 1].
pub fn add_noise(frame: &ImageFrame, spec: &NoiseSpec) -> Result<ImageFrame> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = frame.data().to_vec();
    match spec.kind {
        NoiseKind::Gaussian => {
            if spec.sigma > 0.0 || spec.mean != 0.0 {
                let normal = Normal::new(spec.mean, spec.sigma)
                    .map_err(|e| Error::invalid("noise.sigma", e.to_string()))?;
                for v in data.iter_mut() {
                    let n: f64 = normal.sample(&mut rng);
                    *v = (*v as f64 + n).clamp(0.0, 1.0) as f32;
                }
            }
        }
        NoiseKind::SaltPepper => {
            let pixels = frame.width() * frame.height();
            let count = (spec.density * pixels as f64).round() as usize;
            let ch = frame.channels();
            for p in sample(&mut rng, pixels, count.min(pixels)).into_iter() {
                let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                data[p * ch..(p + 1) * ch].iter_mut().for_each(|v| *v = value);
            }
        }
        NoiseKind::Poisson => {
            for v in data.iter_mut() {
                let lambda = *v as f64 * POISSON_PEAK;
                let count = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map_err(|e| Error::invalid("noise.kind", e.to_string()))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                *v = (count / POISSON_PEAK).clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageFrame::new(frame.width(), frame.height(), frame.channels(), data)
}

/// Bilinear sample at fractional coordinates with border clamping.
pub fn sample_bilinear(f: &ScalarField, x: f64, y: f64) -> f64 {
    let xm = (f.width() - 1) as f64;
    let ym = (f.height() - 1) as f64;
    let x = x.clamp(0.0, xm);
    let y = y.clamp(0.0, ym);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let a = f.at(x0, y0);
    let b = f.at(x0 + 1, y0);
    let c = f.at(x0, y0 + 1);
    let d = f.at(x0 + 1, y0 + 1);
    (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
}

/// Backward warp of one field: `out(x, y) = f(x + u, y + v)`.
pub fn warp_field(f: &ScalarField, flow: &FlowField) -> ScalarField {
    ScalarField::from_fn(f.width(), f.height(), |x, y| {
        sample_bilinear(
            f,
            x as f64 + flow.u.get(x, y),
            y as f64 + flow.v.get(x, y),
        )
    })
}

/// Bilinear backward warp of every channel; out-of-range samples clamp to the border.
pub fn warp(frame: &ImageFrame, flow: &FlowField) -> Result<ImageFrame> {
    if frame.width() != flow.width() || frame.height() != flow.height() {
        return Err(Error::SizeMismatch("frame and flow differ in size".into()));
    }
    let planes: Vec<ScalarField> = (0..frame.channels())
        .map(|c| warp_field(&frame.channel(c), flow))
        .collect();
    Ok(ImageFrame::from_planes(&planes))
}

/// Bilinear resampling to a new grid size (pixel-centre aligned).
pub fn resize_field(f: &ScalarField, width: usize, height: usize) -> ScalarField {
    let sx = f.width() as f64 / width as f64;
    let sy = f.height() as f64 / height as f64;
    ScalarField::from_fn(width, height, |x, y| {
        sample_bilinear(f, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

/// Resamples a flow to a new grid and rescales the displacements accordingly.
pub fn resize_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let ku = width as f64 / flow.width() as f64;
    let kv = height as f64 / flow.height() as f64;
    FlowField {
        u: resize_field(&flow.u, width, height).map(|v| v * ku),
        v: resize_field(&flow.v, width, height).map(|v| v * kv),
    }
}

/// Smallest side accepted for any pyramid level or solve.
pub const MIN_SIDE: usize = 8;

/// Gaussian pyramid; level 0 is the input.
pub fn build_pyramid(frame: &ImageFrame, levels: usize, factor: f64) -> Result<Vec<ImageFrame>> {
    if levels == 0 {
        return Err(Error::invalid("pyramid_levels", "must be >= 1"));
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::invalid("pyramid_factor", "must lie in (0, 1)"));
    }
    let mut out = vec![frame.clone()];
    for _ in 1..levels {
        let prev = out.last().expect("non-empty pyramid");
        let w = (prev.width() as f64 * factor).floor() as usize;
        let h = (prev.height() as f64 * factor).floor() as usize;
        if w < MIN_SIDE || h < MIN_SIDE {
            return Err(Error::DegenerateSize {
                width: w,
                height: h,
            });
        }
        let blurred = smooth_frame(prev, 0.8 / factor);
        let planes: Vec<ScalarField> = (0..blurred.channels())
            .map(|c| resize_field(&blurred.channel(c), w, h))
            .collect();
        out.push(ImageFrame::from_planes(&planes));
    }
    Ok(out)
}
