//! Bounded dual ascent for the L1 brightness-constancy term and the
//! closed-form auxiliary flow update.

use crate::error::{Error, Result};
use crate::fields::{FlowField, GradientTriple, ScalarField};

/// Dual variable of the data term; every entry satisfies `|d| <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField(ScalarField);

impl DualField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self(ScalarField::zeros(width, height))
    }

    /// Projects `field` onto `[-1, 1]`.
    pub fn from_field(field: ScalarField) -> Result<Self> {
        if !field.is_finite() {
            return Err(Error::NonFiniteInput("dual field"));
        }
        Ok(Self(field.map(|v| v.clamp(-1.0, 1.0))))
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }
}

/// Step scale for the dual ascent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepScale {
    /// `1 / (1 + lambda^2 theta |grad I|^2)` per pixel.
    Adaptive,
    Fixed(f64),
}

/// Brightness-constancy residual `I_t + grad I . Z`.
#[inline]
pub fn residual(g: &GradientTriple, z: &FlowField, i: usize) -> f64 {
    g.it.data()[i] + g.ix.data()[i] * z.u.data()[i] + g.iy.data()[i] * z.v.data()[i]
}

fn check_sizes(g: &GradientTriple, z: &FlowField, w: usize, h: usize) -> Result<()> {
    let ok = g.width() == w && g.height() == h && z.width() == w && z.height() == h;
    if !ok {
        return Err(Error::SizeMismatch("dual, gradient and flow sizes differ".into()));
    }
    Ok(())
}

fn check_finite(g: &GradientTriple, z: &FlowField, lambda: f64, theta: f64) -> Result<()> {
    if !(g.ix.is_finite() && g.iy.is_finite() && g.it.is_finite()) {
        return Err(Error::NonFiniteInput("gradients"));
    }
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("flow"));
    }
    if !(lambda.is_finite() && theta.is_finite()) {
        return Err(Error::NonFiniteInput("lambda/theta"));
    }
    Ok(())
}

/// One projected gradient ascent step on the dual objective
/// `lambda rho d - (theta/2) lambda^2 |grad I|^2 d^2`, followed by clamping
/// to `[-1, 1]`. The flow `z` is held constant.
pub fn dual_ascent_step(
    d: &DualField,
    g: &GradientTriple,
    z: &FlowField,
    lambda: f64,
    theta: f64,
    step: StepScale,
) -> Result<DualField> {
    let (w, h) = (d.0.width(), d.0.height());
    check_sizes(g, z, w, h)?;
    check_finite(g, z, lambda, theta)?;
    if let StepScale::Fixed(s) = step {
        if !s.is_finite() {
            return Err(Error::NonFiniteInput("step scale"));
        }
    }
    let curvature = lambda * lambda * theta;
    let next = ScalarField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let g2 = g.grad_norm_sq(i);
        let scale = match step {
            StepScale::Adaptive => 1.0 / (1.0 + curvature * g2),
            StepScale::Fixed(s) => s,
        };
        let di = d.0.data()[i];
        let temp = di + scale * (lambda * residual(g, z, i) - curvature * g2 * di);
        // NaN cannot arise from finite inputs; clamp keeps |d| <= 1 exactly
        temp.clamp(-1.0, 1.0)
    });
    Ok(DualField(next))
}

/// Stationary point of the coupled objective in the auxiliary flow:
/// `Zhat = Z - theta lambda d grad I`.
pub fn update_zhat(
    z: &FlowField,
    d: &DualField,
    g: &GradientTriple,
    lambda: f64,
    theta: f64,
) -> Result<FlowField> {
    let (w, h) = (z.width(), z.height());
    check_sizes(g, z, d.0.width(), d.0.height())?;
    check_finite(g, z, lambda, theta)?;
    let k = theta * lambda;
    let dd = d.0.data();
    let u = ScalarField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        z.u.data()[i] - k * dd[i] * g.ix.data()[i]
    });
    let v = ScalarField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        z.v.data()[i] - k * dd[i] * g.iy.data()[i]
    });
    FlowField::new(u, v)
}
