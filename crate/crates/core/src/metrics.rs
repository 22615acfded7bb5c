//! Flow accuracy metrics (angular error, endpoint error, error normal to the
//! image gradient) and single-scale SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FlowField, GradientTriple, ScalarField};
use crate::imgio::ImageFrame;
use crate::par;

/// Ground-truth samples with magnitude above this are "unknown".
pub const UNKNOWN_FLOW: f64 = 1e9;
pub const DEFAULT_GRAD_FLOOR: f64 = 1.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Radians.
    pub aae: f64,
    /// Pixels.
    pub aepe: f64,
    /// Pixels.
    pub aeng: f64,
    pub valid_fraction: f64,
}

fn check_same(pred: &FlowField, gt: &FlowField) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::SizeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// Per-pixel validity: inside the optional mask and with known ground truth.
fn valid_set(gt: &FlowField, mask: Option<&[bool]>) -> Result<Vec<bool>> {
    let n = gt.width() * gt.height();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::SizeMismatch("mask and flow differ in size".into()));
        }
    }
    Ok((0..n)
        .map(|i| {
            let known = gt.u.data()[i].abs() <= UNKNOWN_FLOW && gt.v.data()[i].abs() <= UNKNOWN_FLOW;
            known && mask.is_none_or(|m| m[i])
        })
        .collect())
}

fn masked_mean<F>(valid: &[bool], f: F) -> Result<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let sum = par::chunked_sum(valid.len(), |i| if valid[i] { f(i) } else { 0.0 });
    Ok(sum / count as f64)
}

/// Angle between the homogeneous vectors `(u, v, 1)` and `(u_g, v_g, 1)`.
#[inline]
pub fn angular_error(u: f64, v: f64, ug: f64, vg: f64) -> f64 {
    let num = u * ug + v * vg + 1.0;
    let den = ((u * u + v * v + 1.0) * (ug * ug + vg * vg + 1.0)).sqrt();
    (num / den).clamp(-1.0, 1.0).acos()
}

/// Average angular error in radians.
pub fn aae(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_same(pred, gt)?;
    let valid = valid_set(gt, mask)?;
    let (u, v, ug, vg) = (pred.u.data(), pred.v.data(), gt.u.data(), gt.v.data());
    masked_mean(&valid, |i| angular_error(u[i], v[i], ug[i], vg[i]))
}

/// Average endpoint error in pixels.
pub fn aepe(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_same(pred, gt)?;
    let valid = valid_set(gt, mask)?;
    let (u, v, ug, vg) = (pred.u.data(), pred.v.data(), gt.u.data(), gt.v.data());
    masked_mean(&valid, |i| (u[i] - ug[i]).hypot(v[i] - vg[i]))
}

/// Average error component along the isophote direction `(-I_y, I_x)/|grad I|`,
/// over pixels whose gradient magnitude reaches `grad_floor`.
pub fn aeng(pred: &FlowField, gt: &FlowField, g: &GradientTriple, grad_floor: f64) -> Result<f64> {
    check_same(pred, gt)?;
    if g.width() != gt.width() || g.height() != gt.height() {
        return Err(Error::SizeMismatch("gradients and flow differ in size".into()));
    }
    let base = valid_set(gt, None)?;
    let (ix, iy) = (g.ix.data(), g.iy.data());
    let valid: Vec<bool> = base
        .iter()
        .enumerate()
        .map(|(i, &b)| b && ix[i].hypot(iy[i]) >= grad_floor)
        .collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::NoValidGradients(grad_floor));
    }
    let (u, v, ug, vg) = (pred.u.data(), pred.v.data(), gt.u.data(), gt.v.data());
    masked_mean(&valid, |i| {
        let n = ix[i].hypot(iy[i]);
        let (eu, ev) = (u[i] - ug[i], v[i] - vg[i]);
        ((eu * -iy[i] + ev * ix[i]) / n).abs()
    })
}

/// All three flow metrics over the known ground-truth pixels.
pub fn evaluate(pred: &FlowField, gt: &FlowField, g: &GradientTriple, grad_floor: f64) -> Result<MetricsReport> {
    let valid = valid_set(gt, None)?;
    let count = valid.iter().filter(|&&v| v).count();
    Ok(MetricsReport {
        aae: aae(pred, gt, None)?,
        aepe: aepe(pred, gt, None)?,
        aeng: aeng(pred, gt, g, grad_floor)?,
        valid_fraction: count as f64 / valid.len() as f64,
    })
}

/// Valid-region separable filtering with the SSIM window.
fn window_filter(f: &ScalarField, k: &[f64]) -> ScalarField {
    let r = k.len();
    let (w, h) = (f.width() - r + 1, f.height() - r + 1);
    let horiz = ScalarField::from_fn(w, f.height(), |x, y| {
        k.iter().enumerate().map(|(j, kw)| kw * f.get(x + j, y)).sum()
    });
    ScalarField::from_fn(w, h, |x, y| {
        k.iter().enumerate().map(|(j, kw)| kw * horiz.get(x, y + j)).sum()
    })
}

fn ssim_plane(a: &ScalarField, b: &ScalarField) -> f64 {
    let k = ssim_taps();
    let prod = |p: &ScalarField, q: &ScalarField| {
        ScalarField::from_fn(p.width(), p.height(), |x, y| p.get(x, y) * q.get(x, y))
    };
    let mu_a = window_filter(a, &k);
    let mu_b = window_filter(b, &k);
    let saa = window_filter(&prod(a, a), &k);
    let sbb = window_filter(&prod(b, b), &k);
    let sab = window_filter(&prod(a, b), &k);
    let n = mu_a.len();
    let total = par::chunked_sum(n, |i| {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = saa.data()[i] - ma * ma;
        let vb = sbb.data()[i] - mb * mb;
        let cov = sab.data()[i] - ma * mb;
        ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
    });
    total / n as f64
}

/// Mean single-scale SSIM (11x11 Gaussian window, sigma 1.5) over valid
/// window positions, averaged over channels.
pub fn ssim(a: &ImageFrame, b: &ImageFrame) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::SizeMismatch("SSIM inputs differ in shape".into()));
    }
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: a.width(),
            height: a.height(),
            window: SSIM_WINDOW,
        });
    }
    let ch = a.channels();
    let s: f64 = (0..ch).map(|c| ssim_plane(&a.channel(c), &b.channel(c))).sum();
    Ok(s / ch as f64)
}

/// 11 normalised Gaussian taps used by [`ssim`].
pub fn ssim_taps() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as i32;
    let raw: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}
