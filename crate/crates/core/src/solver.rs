//! Outer alternation of the flow solver, its energy monitor and the
//! frames-to-mask pipeline.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{self, FlowField, GradientTriple, ScalarField, MIN_SIDE};
use crate::flowviz::{self, MaxMagnitude};
use crate::fracdiff::{stability_check, GlWeights, StabilityReport};
use crate::gmm::{self, GmmConfig, GmmModel, Mask};
use crate::imgio::ImageFrame;
use crate::levelset::{
    compose_flow, dirac, evolve_levelsets, fractional_differences, init_levelsets, update_phase_flows,
    InitScheme, InnerSolve, LevelSetParams, LevelSetQuad, PhaseFlows,
};
use crate::par;
use crate::primaldual::{dual_ascent_step, residual, update_zhat, DualField, StepScale};

/// Wavenumber lattice used for the up-front stability certificate.
pub const STABILITY_GRID: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub nu: f64,
    pub outer_iters: usize,
    pub dual_iters: usize,
    /// Cap on Jacobi sweeps per phase-flow solve.
    pub flow_iters: usize,
    pub flow_tol: f64,
    pub window: usize,
    pub eps: f64,
    pub dtau: f64,
    pub h: f64,
    pub eta: f64,
    pub shared_levelsets: bool,
    pub init: InitScheme,
    pub pyramid_levels: usize,
    pub pyramid_factor: f64,
    pub presmooth_sigma: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 225.0,
            theta: 0.001,
            nu: 1000.0,
            outer_iters: 100,
            dual_iters: 5,
            flow_iters: 30,
            flow_tol: 1e-4,
            window: 3,
            eps: 1.0,
            dtau: 0.1,
            h: 1.0,
            eta: 1e-6,
            shared_levelsets: false,
            init: InitScheme::Checkerboard,
            pyramid_levels: 1,
            pyramid_factor: 0.5,
            presmooth_sigma: 1.0,
        }
    }
}

impl SolverParams {
    pub fn level_set_params(&self) -> LevelSetParams {
        LevelSetParams {
            eps: self.eps,
            dtau: self.dtau,
            h: self.h,
            nu: self.nu,
            eta: self.eta,
            shared: self.shared_levelsets,
        }
    }

    pub fn inner_solve(&self) -> InnerSolve {
        InnerSolve {
            tol: self.flow_tol,
            max_sweeps: self.flow_iters,
        }
    }

    pub fn weights(&self) -> Result<GlWeights> {
        GlWeights::new(self.alpha, self.window)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights()?;
        let positive = [("lambda", self.lambda), ("theta", self.theta)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be finite and > 0"));
            }
        }
        self.level_set_params().validate()?;
        if self.outer_iters == 0 {
            return Err(Error::invalid("outer_iters", "must be >= 1"));
        }
        if self.dual_iters == 0 {
            return Err(Error::invalid("dual_iters", "must be >= 1"));
        }
        if self.flow_iters == 0 {
            return Err(Error::invalid("flow_iters", "must be >= 1"));
        }
        if !(self.flow_tol >= 0.0 && self.flow_tol.is_finite()) {
            return Err(Error::invalid("flow_tol", "must be finite and >= 0"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid_levels", "must be >= 1"));
        }
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return Err(Error::invalid("pyramid_factor", "must lie in (0, 1)"));
        }
        if !(self.presmooth_sigma >= 0.0 && self.presmooth_sigma.is_finite()) {
            return Err(Error::invalid("presmooth_sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Monitored energy terms after one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub iteration: usize,
    pub data_term: f64,
    pub frac_term: f64,
    pub contour_term: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub flow: FlowField,
    pub levelsets: LevelSetQuad,
    pub energy_trace: Vec<EnergyBreakdown>,
    pub residual_trace: Vec<f64>,
    pub stability: StabilityReport,
}

/// Data term `lambda sum |I_t + grad I . Z|`, fractional term as the
/// per-pixel root-sum-square of the fractional differences of u and v, and
/// contour term `nu sum_a sum delta(kappa_a) |grad kappa_a|`.
pub fn energy(
    g: &GradientTriple,
    flow: &FlowField,
    q: &LevelSetQuad,
    w: &GlWeights,
    params: &SolverParams,
) -> EnergyBreakdown {
    energy_at(g, flow, q, w, params, 0)
}

fn energy_at(
    g: &GradientTriple,
    flow: &FlowField,
    q: &LevelSetQuad,
    w: &GlWeights,
    params: &SolverParams,
    iteration: usize,
) -> EnergyBreakdown {
    let n = flow.u.len();
    let data_term = params.lambda * par::chunked_sum(n, |i| residual(g, flow, i).abs());
    let (ux, uy) = fractional_differences(&flow.u, w, params.h);
    let (vx, vy) = fractional_differences(&flow.v, w, params.h);
    let frac_term = par::chunked_sum(n, |i| {
        let s = ux.data()[i].powi(2) + uy.data()[i].powi(2) + vx.data()[i].powi(2) + vy.data()[i].powi(2);
        s.sqrt()
    });
    let surfaces: &[&ScalarField] = if params.shared_levelsets {
        &[&q.ku1, &q.ku2]
    } else {
        &[&q.ku1, &q.ku2, &q.kv1, &q.kv2]
    };
    let contour_term = params.nu
        * surfaces
            .iter()
            .map(|k| contour_length(k, params.eps, params.h))
            .sum::<f64>();
    EnergyBreakdown {
        iteration,
        data_term,
        frac_term,
        contour_term,
        total: data_term + frac_term + contour_term,
    }
}

/// `sum delta(kappa) |grad kappa|` with central differences.
fn contour_length(k: &ScalarField, eps: f64, h: f64) -> f64 {
    let w = k.width();
    par::chunked_sum(k.len(), |i| {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        let gx = (k.at(x + 1, y) - k.at(x - 1, y)) / (2.0 * h);
        let gy = (k.at(x, y + 1) - k.at(x, y - 1)) / (2.0 * h);
        dirac(k.data()[i], eps) * gx.hypot(gy)
    })
}

#[derive(Serialize)]
struct DiagnosticRecord<'a> {
    level: usize,
    #[serde(flatten)]
    energy: &'a EnergyBreakdown,
    residual: f64,
}

fn check_frames(f1: &ImageFrame, f2: &ImageFrame) -> Result<()> {
    if f1.width() != f2.width() || f1.height() != f2.height() || f1.channels() != f2.channels() {
        return Err(Error::SizeMismatch(format!(
            "frames {}x{}x{} vs {}x{}x{}",
            f1.width(),
            f1.height(),
            f1.channels(),
            f2.width(),
            f2.height(),
            f2.channels()
        )));
    }
    if f1.width() < MIN_SIDE || f1.height() < MIN_SIDE {
        return Err(Error::DegenerateSize {
            width: f1.width(),
            height: f1.height(),
        });
    }
    Ok(())
}

struct LevelRun {
    flow: FlowField,
    levelsets: LevelSetQuad,
    energy_trace: Vec<EnergyBreakdown>,
    residual_trace: Vec<f64>,
}

fn solve_level(
    g: &GradientTriple,
    z0: FlowField,
    params: &SolverParams,
    w: &GlWeights,
    level: usize,
    sink: &mut Option<&mut dyn Write>,
) -> Result<LevelRun> {
    let (width, height) = (g.width(), g.height());
    let sp = params.level_set_params();
    let inner = params.inner_solve();
    let mut q = init_levelsets(width, height, params.init)?;
    let mut phases = PhaseFlows::uniform(&z0);
    let mut z = z0;
    let mut d = DualField::zeros(width, height);
    let mut energy_trace = Vec::with_capacity(params.outer_iters);
    let mut residual_trace = Vec::with_capacity(params.outer_iters);

    for it in 0..params.outer_iters {
        let diverged = || Error::NonFiniteDivergence { iteration: it };
        for _ in 0..params.dual_iters {
            d = dual_ascent_step(&d, g, &z, params.lambda, params.theta, StepScale::Adaptive)?;
        }
        let zhat = update_zhat(&z, &d, g, params.lambda, params.theta)?;
        if !zhat.is_finite() {
            return Err(diverged());
        }
        phases = update_phase_flows(&phases, &zhat, w, params.theta, inner);
        q = evolve_levelsets(&q, &phases, &zhat, w, &sp, params.theta);
        let next = compose_flow(&phases, &q, params.eps);
        if !(next.is_finite() && phases.is_finite() && q.is_finite()) {
            return Err(diverged());
        }
        let res = next.max_abs_diff(&z);
        z = next;
        let e = energy_at(g, &z, &q, w, params, it);
        if !e.total.is_finite() {
            return Err(diverged());
        }
        if let Some(out) = sink.as_deref_mut() {
            let rec = DiagnosticRecord {
                level,
                energy: &e,
                residual: res,
            };
            let line = serde_json::to_string(&rec).expect("record serialises");
            writeln!(out, "{line}").map_err(|source| Error::IoFailure {
                path: "<diagnostics>".into(),
                source,
            })?;
        }
        energy_trace.push(e);
        residual_trace.push(res);
    }
    Ok(LevelRun {
        flow: z,
        levelsets: q,
        energy_trace,
        residual_trace,
    })
}

/// Gradients of `f1` against `f2` warped by `z0`, with the temporal
/// derivative shifted so the residual stays linear in the full flow.
/// Pixels whose warped position leaves the frame get no data term.
fn level_gradients(f1: &ImageFrame, f2: &ImageFrame, z0: &FlowField, sigma: f64) -> Result<GradientTriple> {
    if z0.max_abs() == 0.0 {
        return fields::gradients(f1, f2, sigma);
    }
    let warped = fields::warp(f2, z0)?;
    let g = fields::gradients(f1, &warped, sigma)?;
    let (w, h) = (g.width(), g.height());
    let inside = |x: usize, y: usize| {
        let i = y * w + x;
        let (px, py) = (x as f64 + z0.u.data()[i], y as f64 + z0.v.data()[i]);
        px >= 0.0 && py >= 0.0 && px <= (w - 1) as f64 && py <= (h - 1) as f64
    };
    let gate = |f: &ScalarField| ScalarField::from_fn(w, h, |x, y| if inside(x, y) { f.get(x, y) } else { 0.0 });
    let it = ScalarField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        g.it.data()[i] - g.ix.data()[i] * z0.u.data()[i] - g.iy.data()[i] * z0.v.data()[i]
    });
    Ok(GradientTriple {
        ix: gate(&g.ix),
        iy: gate(&g.iy),
        it: gate(&it),
    })
}

/// Estimates the flow from `frame1` to `frame2`.
pub fn estimate_flow(frame1: &ImageFrame, frame2: &ImageFrame, params: &SolverParams) -> Result<FlowResult> {
    estimate_flow_with_diagnostics(frame1, frame2, params, None)
}

/// As [`estimate_flow`], writing one JSON record per outer iteration to `sink`.
pub fn estimate_flow_with_diagnostics(
    frame1: &ImageFrame,
    frame2: &ImageFrame,
    params: &SolverParams,
    mut sink: Option<&mut dyn Write>,
) -> Result<FlowResult> {
    params.validate()?;
    check_frames(frame1, frame2)?;
    let w = params.weights()?;
    let stability = stability_check(&w, params.theta, STABILITY_GRID)?;

    let p1 = fields::build_pyramid(frame1, params.pyramid_levels, params.pyramid_factor)?;
    let p2 = fields::build_pyramid(frame2, params.pyramid_levels, params.pyramid_factor)?;
    let coarsest = p1.last().expect("non-empty pyramid");
    let mut z = FlowField::zeros(coarsest.width(), coarsest.height());
    let mut last = None;
    for level in (0..p1.len()).rev() {
        let (f1, f2) = (&p1[level], &p2[level]);
        if z.width() != f1.width() || z.height() != f1.height() {
            z = fields::resize_flow(&z, f1.width(), f1.height());
        }
        let g = level_gradients(f1, f2, &z, params.presmooth_sigma)?;
        let run = solve_level(&g, z, params, &w, level, &mut sink)?;
        z = run.flow.clone();
        last = Some(run);
    }
    let run = last.expect("at least one level");
    Ok(FlowResult {
        flow: run.flow,
        levelsets: run.levelsets,
        energy_trace: run.energy_trace,
        residual_trace: run.residual_trace,
        stability,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// Flow rounded to the single precision stored in `.flo` files.
    pub flow: FlowField,
    /// Colour map quantised to 8 bits.
    pub colormap: ImageFrame,
    pub mask: Mask,
    pub fused: ImageFrame,
    pub model: GmmModel,
    pub result: FlowResult,
}

/// Flow, colour map, GMM motion mask and fused image for one frame pair.
/// Every stage consumes exactly what the previous stage would write to
/// disk, so the staged file-based run reproduces these artifacts.
pub fn run_pipeline(
    frame1: &ImageFrame,
    frame2: &ImageFrame,
    params: &SolverParams,
    gmm_cfg: &GmmConfig,
) -> Result<PipelineOutput> {
    run_pipeline_with(frame1, frame2, params, gmm_cfg, MaxMagnitude::Auto, None)
}

/// As [`run_pipeline`] with an explicit colour scale and a diagnostics sink.
pub fn run_pipeline_with(
    frame1: &ImageFrame,
    frame2: &ImageFrame,
    params: &SolverParams,
    gmm_cfg: &GmmConfig,
    max_mag: MaxMagnitude,
    sink: Option<&mut dyn Write>,
) -> Result<PipelineOutput> {
    gmm_cfg.validate()?;
    if gmm_cfg.k < 2 {
        return Err(Error::DegenerateMixture(format!("k = {}", gmm_cfg.k)));
    }
    let result = estimate_flow_with_diagnostics(frame1, frame2, params, sink)?;
    let flow = result.flow.to_f32_precision();
    let colormap = flowviz::flow_to_color(&flow, max_mag)?.quantize_u8();
    let (model, mask) = gmm::segment(&colormap, gmm_cfg)?;
    let fused = gmm::fuse(&colormap, &mask)?;
    Ok(PipelineOutput {
        flow,
        colormap,
        mask,
        fused,
        model,
        result,
    })
}
