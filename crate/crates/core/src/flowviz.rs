//! Colour-wheel flow encoding in the Middlebury style, its approximate
//! inverse, and per-channel extraction.
//!
//! Direction picks the hue from a 55-entry wheel indexed by
//! `atan2(-v, -u)`; magnitude relative to `max_mag` picks the saturation.
//! Zero motion is white and upward motion lands on blue-dominant hues.

use crate::error::{Error, Result};
use crate::fields::{FlowField, ScalarField};
use crate::imgio::ImageFrame;
use crate::par;

/// Arc lengths of the wheel: RY, YG, GC, CB, BM, MR.
const ARCS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// Colour wheel with entries in [0, 1]; every entry has one channel at 1 and
/// one at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorWheel {
    entries: Vec<[f64; 3]>,
}

impl Default for ColorWheel {
    fn default() -> Self {
        Self::new()
    }
}

impl ColorWheel {
    pub fn new() -> Self {
        let [ry, yg, gc, cb, bm, mr] = ARCS;
        let mut e = Vec::with_capacity(55);
        let f = |i: usize, n: usize| i as f64 / n as f64;
        for i in 0..ry {
            e.push([1.0, f(i, ry), 0.0]);
        }
        for i in 0..yg {
            e.push([1.0 - f(i, yg), 1.0, 0.0]);
        }
        for i in 0..gc {
            e.push([0.0, 1.0, f(i, gc)]);
        }
        for i in 0..cb {
            e.push([0.0, 1.0 - f(i, cb), 1.0]);
        }
        for i in 0..bm {
            e.push([f(i, bm), 0.0, 1.0]);
        }
        for i in 0..mr {
            e.push([1.0, 0.0, 1.0 - f(i, mr)]);
        }
        Self { entries: e }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[[f64; 3]] {
        &self.entries
    }

    /// Fully saturated colour for a flow direction; the wheel wraps, so the
    /// hue is continuous around the whole circle.
    pub fn hue(&self, u: f64, v: f64) -> [f64; 3] {
        let n = self.entries.len();
        let a = (-v).atan2(-u) / std::f64::consts::PI; // [-1, 1]
        let fk = ((a + 1.0) / 2.0 * n as f64).rem_euclid(n as f64);
        let k0 = (fk.floor() as usize).min(n - 1);
        let k1 = (k0 + 1) % n;
        let t = fk - k0 as f64;
        let (c0, c1) = (self.entries[k0], self.entries[k1]);
        std::array::from_fn(|c| (1.0 - t) * c0[c] + t * c1[c])
    }

    /// Inverse of [`ColorWheel::hue`]: the flow angle `atan2(v, u)` best
    /// explaining a saturated colour.
    pub fn angle_of(&self, col: [f64; 3]) -> f64 {
        let n = self.entries.len();
        let mut best = (f64::INFINITY, 0.0);
        for k0 in 0..n {
            let c0 = self.entries[k0];
            let c1 = self.entries[(k0 + 1) % n];
            let d: [f64; 3] = std::array::from_fn(|c| c1[c] - c0[c]);
            let dd: f64 = d.iter().map(|x| x * x).sum();
            let t = if dd > 0.0 {
                (0..3).map(|c| (col[c] - c0[c]) * d[c]).sum::<f64>() / dd
            } else {
                0.0
            }
            .clamp(0.0, 1.0);
            let err: f64 = (0..3).map(|c| (c0[c] + t * d[c] - col[c]).powi(2)).sum();
            if err < best.0 {
                best = (err, k0 as f64 + t);
            }
        }
        let a = best.1 / n as f64 * 2.0 - 1.0;
        // a * pi = atan2(-v, -u), i.e. the flow points the opposite way
        a * std::f64::consts::PI + std::f64::consts::PI
    }
}

/// Magnitude scale for the encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxMagnitude {
    /// 99th percentile of magnitudes, floored at 1e-3.
    Auto,
    Fixed(f64),
}

pub const AUTO_MAG_FLOOR: f64 = 1e-3;

/// 99th-percentile magnitude with the auto floor.
pub fn auto_max_magnitude(flow: &FlowField) -> f64 {
    let mut mags: Vec<f64> = flow
        .u
        .data()
        .iter()
        .zip(flow.v.data())
        .map(|(u, v)| u.hypot(*v))
        .collect();
    if mags.is_empty() {
        return AUTO_MAG_FLOOR;
    }
    mags.sort_by(|a, b| a.total_cmp(b));
    let idx = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    mags[idx].max(AUTO_MAG_FLOOR)
}

fn resolve(flow: &FlowField, max_mag: MaxMagnitude) -> Result<f64> {
    match max_mag {
        MaxMagnitude::Auto => Ok(auto_max_magnitude(flow)),
        MaxMagnitude::Fixed(m) if m > 0.0 && m.is_finite() => Ok(m),
        MaxMagnitude::Fixed(m) => Err(Error::invalid("max_mag", format!("{m} must be > 0"))),
    }
}

/// Encodes a flow as an RGB colour map.
pub fn flow_to_color(flow: &FlowField, max_mag: MaxMagnitude) -> Result<ImageFrame> {
    if !flow.is_finite() {
        return Err(Error::NonFiniteInput("flow"));
    }
    let m = resolve(flow, max_mag)?;
    let wheel = ColorWheel::new();
    let (u, v) = (flow.u.data(), flow.v.data());
    let pixels = par::map_indexed(u.len(), |i| {
        let sat = (u[i].hypot(v[i]) / m).min(1.0);
        if sat == 0.0 {
            return [1.0f32; 3];
        }
        let hue = wheel.hue(u[i], v[i]);
        hue.map(|c| (1.0 - sat * (1.0 - c)) as f32)
    });
    ImageFrame::new(
        flow.width(),
        flow.height(),
        3,
        pixels.into_iter().flatten().collect(),
    )
}

/// Approximate inverse of [`flow_to_color`] for a known `max_mag`.
pub fn color_to_flow(colormap: &ImageFrame, max_mag: f64) -> Result<FlowField> {
    if colormap.channels() != 3 {
        return Err(Error::NotColor(colormap.channels()));
    }
    let wheel = ColorWheel::new();
    let data = colormap.data();
    let decoded = par::map_indexed(colormap.width() * colormap.height(), |i| {
        let px: [f64; 3] = std::array::from_fn(|c| data[3 * i + c] as f64);
        let sat = 1.0 - px.iter().copied().fold(f64::INFINITY, f64::min);
        if sat <= 0.0 {
            return (0.0, 0.0);
        }
        let col = px.map(|c| (1.0 - (1.0 - c) / sat).clamp(0.0, 1.0));
        let ang = wheel.angle_of(col);
        let mag = sat * max_mag;
        (mag * ang.cos(), mag * ang.sin())
    });
    let (w, h) = (colormap.width(), colormap.height());
    FlowField::new(
        ScalarField::from_vec(w, h, decoded.iter().map(|p| p.0).collect())?,
        ScalarField::from_vec(w, h, decoded.iter().map(|p| p.1).collect())?,
    )
}

/// Splits an RGB frame into three single-channel frames.
pub fn channel_split(colormap: &ImageFrame) -> Result<[ImageFrame; 3]> {
    if colormap.channels() != 3 {
        return Err(Error::NotColor(colormap.channels()));
    }
    Ok(std::array::from_fn(|c| {
        ImageFrame::from_planes(&[colormap.channel(c)])
    }))
}

/// Re-interleaves three single-channel frames.
pub fn channel_merge(planes: &[ImageFrame; 3]) -> Result<ImageFrame> {
    let fields: Vec<ScalarField> = planes.iter().map(|p| p.channel(0)).collect();
    if !fields.iter().all(|f| f.same_size(&fields[0])) {
        return Err(Error::SizeMismatch("channel planes differ in size".into()));
    }
    Ok(ImageFrame::from_planes(&fields))
}
