//! Grünwald-Letnikov weights, the fractional cross-neighbourhood operator and
//! its von Neumann stability certificate.
//!
//! Weights enter the neighbourhood operator and the normaliser through their
//! magnitudes `|w_q|`. With that convention the flow update is a convex
//! combination of the auxiliary flow and the neighbours, so the stability
//! bound holds with equality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;

/// Truncated coefficient table `w_0..=w_W` for order `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlWeights {
    alpha: f64,
    w: Vec<f64>,
}

impl GlWeights {
    /// `w_0 = 1`, `w_q = (1 - (alpha + 1)/q) w_{q-1}`.
    pub fn new(alpha: f64, window: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OrderOutOfRange(alpha));
        }
        if window == 0 {
            return Err(Error::invalid("window", "must be >= 1"));
        }
        let mut w = Vec::with_capacity(window + 1);
        w.push(1.0);
        for q in 1..=window {
            let prev = w[q - 1];
            w.push((1.0 - (alpha + 1.0) / q as f64) * prev);
        }
        Ok(Self { alpha, w })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn window(&self) -> usize {
        self.w.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.w
    }

    /// Truncation tail `|w_W|`.
    pub fn tail(&self) -> f64 {
        self.w[self.window()].abs()
    }

    /// `sum_{q=1..W} |w_q|` along one half-axis.
    pub fn half_axis_sum(&self) -> f64 {
        self.w[1..].iter().map(|v| v.abs()).sum()
    }

    /// `sum_{neighbours} |w_q|` over the 4W-point cross.
    pub fn neighbor_sum(&self) -> f64 {
        4.0 * self.half_axis_sum()
    }
}

/// Shorthand for [`GlWeights::new`].
pub fn gl_weights(alpha: f64, window: usize) -> Result<GlWeights> {
    GlWeights::new(alpha, window)
}

/// Cross-stencil sum `sum |w_q| f(neighbour)` over the 4W axis neighbours of
/// every pixel, with replicated borders. Returns the field and `sum |w_q|`.
pub fn neighborhood_sum(field: &ScalarField, weights: &GlWeights) -> (ScalarField, f64) {
    let w = weights.coefficients();
    let out = ScalarField::from_fn(field.width(), field.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let mut acc = 0.0;
        for (q, wq) in w.iter().enumerate().skip(1) {
            let q = q as isize;
            let n = field.at(x + q, y) + field.at(x - q, y) + field.at(x, y + q) + field.at(x, y - q);
            acc += wq.abs() * n;
        }
        acc
    });
    (out, weights.neighbor_sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sum_abs: f64,
    pub normalizer: f64,
    pub bound: f64,
    pub stable: bool,
    pub amplification_max: f64,
}

/// Evaluates the amplification factor
/// `G(k, l) = R^{-1} (1 + 2 theta sum |w_q| e^{i(k dr + l ds)})` on a
/// `grid x grid` lattice of wavenumbers in `[0, 2 pi)`.
pub fn stability_check(weights: &GlWeights, theta: f64, grid: usize) -> Result<StabilityReport> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", "must be > 0"));
    }
    let sum_abs = weights.neighbor_sum();
    let normalizer = 1.0 + 2.0 * theta * sum_abs;
    let bound = (normalizer - 1.0) / (2.0 * theta);
    let w = weights.coefficients();
    let grid = grid.max(1);
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    let mut amplification_max: f64 = 0.0;
    for a in 0..grid {
        for b in 0..grid {
            let (k, l) = (a as f64 * step, b as f64 * step);
            let mut re = 0.0;
            let mut im = 0.0;
            for (q, wq) in w.iter().enumerate().skip(1) {
                let qf = q as f64;
                for (dr, ds) in [(qf, 0.0), (-qf, 0.0), (0.0, qf), (0.0, -qf)] {
                    let phase = k * dr + l * ds;
                    re += wq.abs() * phase.cos();
                    im += wq.abs() * phase.sin();
                }
            }
            let g_re = (1.0 + 2.0 * theta * re) / normalizer;
            let g_im = 2.0 * theta * im / normalizer;
            amplification_max = amplification_max.max(g_re.hypot(g_im));
        }
    }
    Ok(StabilityReport {
        sum_abs,
        normalizer,
        bound,
        stable: sum_abs <= bound + 1e-12,
        amplification_max,
    })
}
