//! Diagonal-covariance Gaussian mixtures over colour-map pixels, motion mask
//! extraction and mask fusion.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{self, ImageFrame};
use crate::par;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const PRIOR_COLLAPSE: f64 = 1e-6;
/// Minimum distance from white for the smoke component to count as motion.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.05;
const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub min_separation: f64,
    pub closing_radius: usize,
    pub min_component_px: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            tol: 1e-6,
            max_iter: 100,
            min_separation: DEFAULT_MIN_SEPARATION,
            closing_radius: 0,
            min_component_px: 0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid("gmm.tol", "must be finite and >= 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("gmm.max_iter", "must be >= 1"));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::invalid("gmm.min_separation", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub priors: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    pub covars: Vec<[f64; 3]>,
    pub loglik_trace: Vec<f64>,
}

impl GmmModel {
    /// Per-component `log pi_k + log N(x | mu_k, Sigma_k)`.
    fn joint_log(&self, x: &[f64; 3], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = self.priors[j].ln();
            for d in 0..3 {
                let var = self.covars[j][d];
                let diff = x[d] - self.means[j][d];
                s -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var);
            }
            *o = s;
        }
    }

    /// Index of the most probable component for `x` (ties to the smaller index).
    pub fn predict(&self, x: &[f64; 3]) -> usize {
        let mut lp = vec![0.0; self.k];
        self.joint_log(x, &mut lp);
        argmax(&lp)
    }

    /// Component whose mean is farthest from white (ties to the smaller index).
    pub fn smoke_component(&self) -> usize {
        let d: Vec<f64> = self.means.iter().map(|m| dist(m, &WHITE)).collect();
        argmax(&d)
    }

    /// Total log-likelihood of `pixels` under the model.
    pub fn log_likelihood(&self, pixels: &[[f64; 3]]) -> f64 {
        par::chunked_sum(pixels.len(), |i| {
            let mut lp = vec![0.0; self.k];
            self.joint_log(&pixels[i], &mut lp);
            log_sum_exp(&lp)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GmmModel = serde_json::from_str(s).map_err(|e| Error::invalid("model", e.to_string()))?;
        if m.priors.len() != m.k || m.means.len() != m.k || m.covars.len() != m.k || m.k < 2 {
            return Err(Error::invalid("model", "component arrays do not match k"));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        imgio::atomic_write(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile { path: path.to_path_buf() },
            _ => Error::IoFailure {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::from_json(&s)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Binary per-pixel labels, 1 for smoke and 0 for background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            labels: vec![value as u8; width * height],
        }
    }

    pub fn from_fn<F: Fn(usize, usize) -> bool>(width: usize, height: usize, f: F) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.labels[y * width + x] = f(x, y) as u8;
            }
        }
        m
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels: labels.into_iter().map(|l| (l != 0) as u8).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.labels[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.labels[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.labels.len() as f64
        }
    }

    pub fn as_bools(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }

    /// Single-channel frame with samples 0 and 1.
    pub fn to_image(&self) -> ImageFrame {
        let data = self.labels.iter().map(|&l| l as f32).collect();
        ImageFrame::new(self.width, self.height, 1, data).expect("binary samples")
    }

    /// Thresholds the first channel at one half.
    pub fn from_image(img: &ImageFrame) -> Self {
        let ch = img.channels();
        let labels = img.data().iter().step_by(ch).map(|&v| (v >= 0.5) as u8).collect();
        Self {
            width: img.width(),
            height: img.height(),
            labels,
        }
    }

    /// 8-bit grayscale PNG with values {0, 255}.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        imgio::atomic_write(path.as_ref(), &imgio::encode_png(&self.to_image()))
    }
}

/// Colour 3-vectors of every pixel, row-major.
pub fn pixels_of(colormap: &ImageFrame) -> Result<Vec<[f64; 3]>> {
    if colormap.channels() != 3 {
        return Err(Error::NotColor(colormap.channels()));
    }
    Ok(colormap
        .data()
        .chunks_exact(3)
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect())
}

/// k-means++ seeding; falls back to uniform picks when every remaining
/// distance is zero.
fn kmeans_pp(pixels: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let n = pixels.len();
    let mut centers = vec![pixels[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = pixels.iter().map(|p| dist_sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = pixels[idx];
        for (d, p) in d2.iter_mut().zip(pixels) {
            *d = d.min(dist_sq(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Sufficient statistics per component: weight, weighted sum, weighted sum of squares.
struct Stats {
    loglik: f64,
    nk: Vec<f64>,
    sx: Vec<[f64; 3]>,
    sxx: Vec<[f64; 3]>,
}

fn e_step(model: &GmmModel, pixels: &[[f64; 3]]) -> Stats {
    let k = model.k;
    let n = pixels.len();
    let chunks = n.div_ceil(par::REDUCE_CHUNK);
    let partials = par::map_indexed(chunks, |c| {
        let start = c * par::REDUCE_CHUNK;
        let end = (start + par::REDUCE_CHUNK).min(n);
        let mut s = Stats {
            loglik: 0.0,
            nk: vec![0.0; k],
            sx: vec![[0.0; 3]; k],
            sxx: vec![[0.0; 3]; k],
        };
        let mut lp = vec![0.0; k];
        for x in &pixels[start..end] {
            model.joint_log(x, &mut lp);
            let lse = log_sum_exp(&lp);
            s.loglik += lse;
            for j in 0..k {
                let r = (lp[j] - lse).exp();
                s.nk[j] += r;
                for d in 0..3 {
                    s.sx[j][d] += r * x[d];
                    s.sxx[j][d] += r * x[d] * x[d];
                }
            }
        }
        s
    });
    let mut acc = Stats {
        loglik: 0.0,
        nk: vec![0.0; k],
        sx: vec![[0.0; 3]; k],
        sxx: vec![[0.0; 3]; k],
    };
    for s in partials {
        acc.loglik += s.loglik;
        for j in 0..k {
            acc.nk[j] += s.nk[j];
            for d in 0..3 {
                acc.sx[j][d] += s.sx[j][d];
                acc.sxx[j][d] += s.sxx[j][d];
            }
        }
    }
    acc
}

fn m_step(model: &mut GmmModel, s: &Stats, n: usize) -> Result<()> {
    for j in 0..model.k {
        let prior = s.nk[j] / n as f64;
        if prior.is_nan() || prior < PRIOR_COLLAPSE {
            return Err(Error::DegenerateMixture(format!(
                "component {j} prior {prior:e} collapsed below {PRIOR_COLLAPSE:e}"
            )));
        }
        model.priors[j] = prior;
        for d in 0..3 {
            let mu = s.sx[j][d] / s.nk[j];
            model.means[j][d] = mu;
            // Sum of r (x - mu)^2, computed as a sum of squares about the new mean.
            let var = (s.sxx[j][d] / s.nk[j] - mu * mu).max(0.0);
            model.covars[j][d] = var.max(VARIANCE_FLOOR);
        }
    }
    Ok(())
}

/// EM for a `k`-component diagonal mixture. Stops when the relative change
/// of the log-likelihood is at most `tol` or after `max_iter` updates.
pub fn fit_gmm(pixels: &[[f64; 3]], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<GmmModel> {
    if k < 2 {
        return Err(Error::DegenerateMixture(format!(
            "k = {k}: at least two components are needed to separate smoke from background"
        )));
    }
    let need = 10 * k;
    if pixels.len() < need {
        return Err(Error::TooFewPixels {
            count: pixels.len(),
            k,
            need,
        });
    }
    if pixels.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput("gmm pixels"));
    }
    let n = pixels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_pp(pixels, k, &mut rng);

    let mut global = [0.0; 3];
    for d in 0..3 {
        let mu = pixels.iter().map(|p| p[d]).sum::<f64>() / n as f64;
        let var = pixels.iter().map(|p| (p[d] - mu) * (p[d] - mu)).sum::<f64>() / n as f64;
        global[d] = var.max(VARIANCE_FLOOR);
    }
    let mut model = GmmModel {
        k,
        priors: vec![1.0 / k as f64; k],
        means,
        covars: vec![global; k],
        loglik_trace: Vec::new(),
    };

    let mut stats = e_step(&model, pixels);
    model.loglik_trace.push(stats.loglik);
    for _ in 0..max_iter {
        m_step(&mut model, &stats, n)?;
        let prev = stats.loglik;
        stats = e_step(&model, pixels);
        model.loglik_trace.push(stats.loglik);
        if (stats.loglik - prev).abs() <= tol * stats.loglik.abs() {
            break;
        }
    }
    Ok(model)
}

/// Fits a mixture to the pixels of `colormap` with the settings in `cfg`.
pub fn fit_colormap(colormap: &ImageFrame, cfg: &GmmConfig) -> Result<GmmModel> {
    cfg.validate()?;
    let px = pixels_of(colormap)?;
    fit_gmm(&px, cfg.k, cfg.seed, cfg.tol, cfg.max_iter)
}

/// Posterior-argmax labelling with the smoke component chosen as the mean
/// farthest from white.
pub fn classify(model: &GmmModel, colormap: &ImageFrame) -> Result<Mask> {
    classify_with_separation(model, colormap, DEFAULT_MIN_SEPARATION)
}

/// As [`classify`]; if the smoke mean lies within `min_separation` of white
/// no mode is off-white and the mask is all background.
pub fn classify_with_separation(model: &GmmModel, colormap: &ImageFrame, min_separation: f64) -> Result<Mask> {
    let px = pixels_of(colormap)?;
    let (w, h) = (colormap.width(), colormap.height());
    let smoke = model.smoke_component();
    if dist(&model.means[smoke], &WHITE) < min_separation {
        return Ok(Mask::new(w, h));
    }
    let labels = par::map_indexed(px.len(), |i| (model.predict(&px[i]) == smoke) as u8);
    Mask::from_labels(w, h, labels)
}

/// Keeps colour-map pixels under the mask and paints the rest black.
pub fn fuse(colormap: &ImageFrame, mask: &Mask) -> Result<ImageFrame> {
    if colormap.width() != mask.width() || colormap.height() != mask.height() {
        return Err(Error::SizeMismatch(format!(
            "colormap {}x{} vs mask {}x{}",
            colormap.width(),
            colormap.height(),
            mask.width(),
            mask.height()
        )));
    }
    let ch = colormap.channels();
    let data = colormap
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask.labels[i / ch] != 0 { v } else { 0.0 })
        .collect();
    ImageFrame::new(colormap.width(), colormap.height(), ch, data)
}

/// Offsets of the discrete disc `dx^2 + dy^2 <= r^2 + r`, which is the 3x3
/// square for `r = 1`.
fn disc(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let lim = r * r + r;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= lim {
                v.push((dx, dy));
            }
        }
    }
    v
}

/// Dilation ignores pixels outside the image; erosion treats them as set, so
/// the closing never removes foreground.
fn closing(mask: &Mask, r: usize) -> Mask {
    let se = disc(r);
    let (w, h) = (mask.width as isize, mask.height as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
    let dil = Mask::from_fn(mask.width, mask.height, |x, y| {
        se.iter().any(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            inside(nx, ny) && mask.get(nx as usize, ny as usize)
        })
    });
    Mask::from_fn(mask.width, mask.height, |x, y| {
        se.iter().all(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            !inside(nx, ny) || dil.get(nx as usize, ny as usize)
        })
    })
}

/// Labels 8-connected foreground components; returns per-pixel component ids
/// (0 for background) and component sizes indexed by id - 1.
pub fn connected_components(mask: &Mask) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut ids = vec![0usize; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.labels[start] == 0 || ids[start] != 0 {
            continue;
        }
        let id = sizes.len() + 1;
        let mut size = 0;
        ids[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.labels[j] != 0 && ids[j] == 0 {
                        ids[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (ids, sizes)
}

/// Morphological closing with a disc of `closing_radius`, then removal of
/// 8-connected components smaller than `min_component_px`.
pub fn postprocess(mask: &Mask, min_component_px: usize, closing_radius: usize) -> Mask {
    let closed = if closing_radius > 0 {
        closing(mask, closing_radius)
    } else {
        mask.clone()
    };
    if min_component_px == 0 {
        return closed;
    }
    let (ids, sizes) = connected_components(&closed);
    let labels = ids
        .iter()
        .map(|&id| (id != 0 && sizes[id - 1] >= min_component_px) as u8)
        .collect();
    Mask {
        labels,
        ..closed
    }
}

/// Fit, classify and post-process a colour map in one call.
pub fn segment(colormap: &ImageFrame, cfg: &GmmConfig) -> Result<(GmmModel, Mask)> {
    let model = fit_colormap(colormap, cfg)?;
    let raw = classify_with_separation(&model, colormap, cfg.min_separation)?;
    Ok((model, postprocess(&raw, cfg.min_component_px, cfg.closing_radius)))
}
