//! Four-phase level-set machinery: regularised Heaviside/Dirac, curvature
//! coefficients, the phase-flow fixed-point update, level-set evolution and
//! composition of the final flow.
//!
//! Each flow component owns two level surfaces. Their signs split the grid
//! into four phases `++`, `+-`, `-+`, `--`, each with its own flow. The
//! composed flow blends the phase flows with products of regularised
//! Heaviside functions, which form a partition of unity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FlowField, ScalarField, MIN_SIDE};
use crate::fracdiff::{neighborhood_sum, GlWeights};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetQuad {
    pub ku1: ScalarField,
    pub ku2: ScalarField,
    pub kv1: ScalarField,
    pub kv2: ScalarField,
}

impl LevelSetQuad {
    pub fn is_finite(&self) -> bool {
        self.ku1.is_finite() && self.ku2.is_finite() && self.kv1.is_finite() && self.kv2.is_finite()
    }

    pub fn surfaces(&self) -> [&ScalarField; 4] {
        [&self.ku1, &self.ku2, &self.kv1, &self.kv2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseFlows {
    pub zpp: FlowField,
    pub zpm: FlowField,
    pub zmp: FlowField,
    pub zmm: FlowField,
}

impl PhaseFlows {
    /// All four phases equal to `flow`.
    pub fn uniform(flow: &FlowField) -> Self {
        Self {
            zpp: flow.clone(),
            zpm: flow.clone(),
            zmp: flow.clone(),
            zmm: flow.clone(),
        }
    }

    pub fn phases(&self) -> [&FlowField; 4] {
        [&self.zpp, &self.zpm, &self.zmp, &self.zmm]
    }

    pub fn is_finite(&self) -> bool {
        self.phases().iter().all(|p| p.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetParams {
    /// Regularisation width of H and delta, in pixels.
    pub eps: f64,
    /// Artificial time step.
    pub dtau: f64,
    /// Grid spacing.
    pub h: f64,
    /// Contour-length weight.
    pub nu: f64,
    /// Floor on curvature-coefficient denominators.
    pub eta: f64,
    /// Drive u and v with one shared pair of surfaces.
    pub shared: bool,
}

impl Default for LevelSetParams {
    fn default() -> Self {
        Self {
            eps: 1.0,
            dtau: 0.1,
            h: 1.0,
            nu: 1000.0,
            eta: 1e-6,
            shared: false,
        }
    }
}

impl LevelSetParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("eps", self.eps), ("dtau", self.dtau), ("h", self.h), ("eta", self.eta)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be finite and > 0"));
            }
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[inline]
pub fn heaviside(kappa: f64, eps: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (kappa / eps).atan())
}

#[inline]
pub fn dirac(kappa: f64, eps: f64) -> f64 {
    eps / (PI * (eps * eps + kappa * kappa))
}

/// Regularised Heaviside and Dirac fields of `kappa`.
pub fn heaviside_dirac(kappa: &ScalarField, eps: f64) -> (ScalarField, ScalarField) {
    (kappa.map(|k| heaviside(k, eps)), kappa.map(|k| dirac(k, eps)))
}

/// The four coefficients of the semi-implicit curvature discretisation:
/// inverse gradient magnitudes at the east, west, south and north half-steps
/// (one-sided difference across the face, central difference along it).
pub fn curvature_coeffs(kappa: &ScalarField, h: f64, eta: f64) -> [ScalarField; 4] {
    let k = |x: isize, y: isize| kappa.at(x, y);
    let inv = move |a: f64, b: f64| 1.0 / (a * a + b * b).sqrt().max(eta);
    let (w, ht) = (kappa.width(), kappa.height());
    let c1 = ScalarField::from_fn(w, ht, |x, y| {
        let (x, y) = (x as isize, y as isize);
        inv((k(x + 1, y) - k(x, y)) / h, (k(x, y + 1) - k(x, y - 1)) / (2.0 * h))
    });
    let c2 = ScalarField::from_fn(w, ht, |x, y| {
        let (x, y) = (x as isize, y as isize);
        inv((k(x, y) - k(x - 1, y)) / h, (k(x - 1, y + 1) - k(x - 1, y - 1)) / (2.0 * h))
    });
    let c3 = ScalarField::from_fn(w, ht, |x, y| {
        let (x, y) = (x as isize, y as isize);
        inv((k(x + 1, y) - k(x - 1, y)) / (2.0 * h), (k(x, y + 1) - k(x, y)) / h)
    });
    let c4 = ScalarField::from_fn(w, ht, |x, y| {
        let (x, y) = (x as isize, y as isize);
        inv((k(x + 1, y - 1) - k(x - 1, y - 1)) / (2.0 * h), (k(x, y) - k(x, y - 1)) / h)
    });
    [c1, c2, c3, c4]
}

/// Stopping rule for the phase-flow fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerSolve {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for InnerSolve {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_sweeps: 30,
        }
    }
}

/// One Jacobi sweep `Z <- R^{-1} (Zhat + 2 theta sum |w_q| Z_nb)`.
fn phase_sweep(z: &ScalarField, zhat: &ScalarField, w: &GlWeights, theta: f64) -> ScalarField {
    let (nb, sum_abs) = neighborhood_sum(z, w);
    let inv_r = 1.0 / (1.0 + 2.0 * theta * sum_abs);
    let (width, height) = (z.width(), z.height());
    ScalarField::from_fn(width, height, |x, y| {
        inv_r * (zhat.get(x, y) + 2.0 * theta * nb.get(x, y))
    })
}

fn solve_component(
    z0: &ScalarField,
    zhat: &ScalarField,
    w: &GlWeights,
    theta: f64,
    inner: InnerSolve,
) -> ScalarField {
    let mut z = z0.clone();
    for _ in 0..inner.max_sweeps.max(1) {
        let next = phase_sweep(&z, zhat, w, theta);
        let change = next.max_abs_diff(&z);
        z = next;
        if change < inner.tol {
            break;
        }
    }
    z
}

/// Fixed-point iteration of the fractional phase-flow equations for every
/// component of every phase.
pub fn update_phase_flows(
    p: &PhaseFlows,
    zhat: &FlowField,
    w: &GlWeights,
    theta: f64,
    inner: InnerSolve,
) -> PhaseFlows {
    let solve = |f: &FlowField| FlowField {
        u: solve_component(&f.u, &zhat.u, w, theta, inner),
        v: solve_component(&f.v, &zhat.v, w, theta, inner),
    };
    PhaseFlows {
        zpp: solve(&p.zpp),
        zpm: solve(&p.zpm),
        zmp: solve(&p.zmp),
        zmm: solve(&p.zmm),
    }
}

/// Backward fractional difference `h^{-alpha} sum_{q>=1} |w_q| (f(x) - f(x - q))`
/// along x and along y.
pub fn fractional_differences(f: &ScalarField, w: &GlWeights, h: f64) -> (ScalarField, ScalarField) {
    let c = w.coefficients();
    let scale = h.powf(-w.alpha());
    let (width, height) = (f.width(), f.height());
    let dx = ScalarField::from_fn(width, height, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let centre = f.get(x, y);
        scale
            * c.iter()
                .enumerate()
                .skip(1)
                .map(|(q, wq)| wq.abs() * (centre - f.at(xi - q as isize, yi)))
                .sum::<f64>()
    });
    let dy = ScalarField::from_fn(width, height, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let centre = f.get(x, y);
        scale
            * c.iter()
                .enumerate()
                .skip(1)
                .map(|(q, wq)| wq.abs() * (centre - f.at(xi, yi - q as isize)))
                .sum::<f64>()
    });
    (dx, dy)
}

/// Pointwise fractional energy density `(D_x f)^2 + (D_y f)^2`.
pub fn fractional_energy_density(f: &ScalarField, w: &GlWeights, h: f64) -> ScalarField {
    let (dx, dy) = fractional_differences(f, w, h);
    ScalarField::from_fn(f.width(), f.height(), |x, y| {
        dx.get(x, y).powi(2) + dy.get(x, y).powi(2)
    })
}

/// Phase energies `e^{ij} = (zhat - z^{ij})^2 + rho^{ij}` for one component,
/// ordered `++, +-, -+, --`.
fn phase_energies(
    zhat: &ScalarField,
    phases: [&ScalarField; 4],
    w: &GlWeights,
    h: f64,
) -> [ScalarField; 4] {
    phases.map(|z| {
        let rho = fractional_energy_density(z, w, h);
        ScalarField::from_fn(z.width(), z.height(), |x, y| {
            (zhat.get(x, y) - z.get(x, y)).powi(2) + rho.get(x, y)
        })
    })
}

/// Four-phase competition forces on the two surfaces of one component.
pub fn phase_forcing(
    energies: &[ScalarField; 4],
    k1: &ScalarField,
    k2: &ScalarField,
    eps: f64,
    theta: f64,
) -> (ScalarField, ScalarField) {
    let [epp, epm, emp, emm] = energies;
    let s = 1.0 / (2.0 * theta);
    let (w, h) = (k1.width(), k1.height());
    let f1 = ScalarField::from_fn(w, h, |x, y| {
        let h2 = heaviside(k2.get(x, y), eps);
        s * ((epp.get(x, y) - emp.get(x, y)) * h2 + (epm.get(x, y) - emm.get(x, y)) * (1.0 - h2))
    });
    let f2 = ScalarField::from_fn(w, h, |x, y| {
        let h1 = heaviside(k1.get(x, y), eps);
        s * ((epp.get(x, y) - epm.get(x, y)) * h1 + (emp.get(x, y) - emm.get(x, y)) * (1.0 - h1))
    });
    (f1, f2)
}

/// One semi-implicit step of `dk/dt = delta(k) [nu div(grad k/|grad k|) - F]`.
pub fn evolve_surface(kappa: &ScalarField, forcing: &ScalarField, sp: &LevelSetParams) -> ScalarField {
    let [c1, c2, c3, c4] = curvature_coeffs(kappa, sp.h, sp.eta);
    let (w, h) = (kappa.width(), kappa.height());
    ScalarField::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let k0 = kappa.get(x, y);
        let delta = dirac(k0, sp.eps);
        let gamma = sp.dtau / (sp.h * sp.h) * sp.nu * delta;
        let (a1, a2, a3, a4) = (c1.get(x, y), c2.get(x, y), c3.get(x, y), c4.get(x, y));
        let nb = a1 * kappa.at(xi + 1, yi)
            + a2 * kappa.at(xi - 1, yi)
            + a3 * kappa.at(xi, yi + 1)
            + a4 * kappa.at(xi, yi - 1);
        let num = k0 + gamma * nb - sp.dtau * delta * forcing.get(x, y);
        num / (1.0 + gamma * (a1 + a2 + a3 + a4))
    })
}

fn add_fields(a: &[ScalarField; 4], b: &[ScalarField; 4]) -> [ScalarField; 4] {
    std::array::from_fn(|i| {
        let (x, y) = (&a[i], &b[i]);
        ScalarField::from_fn(x.width(), x.height(), |c, r| x.get(c, r) + y.get(c, r))
    })
}

/// Advances all four surfaces by one semi-implicit step.
pub fn evolve_levelsets(
    q: &LevelSetQuad,
    p: &PhaseFlows,
    zhat: &FlowField,
    w: &GlWeights,
    sp: &LevelSetParams,
    theta: f64,
) -> LevelSetQuad {
    let eu = phase_energies(&zhat.u, [&p.zpp.u, &p.zpm.u, &p.zmp.u, &p.zmm.u], w, sp.h);
    let ev = phase_energies(&zhat.v, [&p.zpp.v, &p.zpm.v, &p.zmp.v, &p.zmm.v], w, sp.h);
    if sp.shared {
        let e = add_fields(&eu, &ev);
        let (f1, f2) = phase_forcing(&e, &q.ku1, &q.ku2, sp.eps, theta);
        let k1 = evolve_surface(&q.ku1, &f1, sp);
        let k2 = evolve_surface(&q.ku2, &f2, sp);
        return LevelSetQuad {
            kv1: k1.clone(),
            kv2: k2.clone(),
            ku1: k1,
            ku2: k2,
        };
    }
    let (fu1, fu2) = phase_forcing(&eu, &q.ku1, &q.ku2, sp.eps, theta);
    let (fv1, fv2) = phase_forcing(&ev, &q.kv1, &q.kv2, sp.eps, theta);
    LevelSetQuad {
        ku1: evolve_surface(&q.ku1, &fu1, sp),
        ku2: evolve_surface(&q.ku2, &fu2, sp),
        kv1: evolve_surface(&q.kv1, &fv1, sp),
        kv2: evolve_surface(&q.kv2, &fv2, sp),
    }
}

/// The four Heaviside blending weights `(H1 H2, H1(1-H2), (1-H1)H2, (1-H1)(1-H2))`.
#[inline]
pub fn phase_weights(k1: f64, k2: f64, eps: f64) -> [f64; 4] {
    let h1 = heaviside(k1, eps);
    let h2 = heaviside(k2, eps);
    [h1 * h2, h1 * (1.0 - h2), (1.0 - h1) * h2, (1.0 - h1) * (1.0 - h2)]
}

fn compose_component(
    phases: [&ScalarField; 4],
    k1: &ScalarField,
    k2: &ScalarField,
    eps: f64,
) -> ScalarField {
    let (w, h) = (k1.width(), k1.height());
    let mut data = vec![0.0; w * h];
    par::for_each_row(&mut data, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let c = phase_weights(k1.get(x, y), k2.get(x, y), eps);
            *out = c[0] * phases[0].get(x, y)
                + c[1] * phases[1].get(x, y)
                + c[2] * phases[2].get(x, y)
                + c[3] * phases[3].get(x, y);
        }
    });
    ScalarField::from_vec(w, h, data).expect("sized")
}

/// Blends the phase flows into one flow field.
pub fn compose_flow(p: &PhaseFlows, q: &LevelSetQuad, eps: f64) -> FlowField {
    FlowField {
        u: compose_component([&p.zpp.u, &p.zpm.u, &p.zmp.u, &p.zmm.u], &q.ku1, &q.ku2, eps),
        v: compose_component([&p.zpp.v, &p.zpm.v, &p.zmp.v, &p.zmm.v], &q.kv1, &q.kv2, eps),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Checkerboard,
    Circles,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkerboard" => Ok(InitScheme::Checkerboard),
            "circles" => Ok(InitScheme::Circles),
            other => Err(Error::invalid("init", format!("unknown scheme {other:?}"))),
        }
    }
}

/// Initial surfaces; u and v start from the same pair.
pub fn init_levelsets(width: usize, height: usize, scheme: InitScheme) -> Result<LevelSetQuad> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::DegenerateSize { width, height });
    }
    let (k1, k2) = match scheme {
        InitScheme::Checkerboard => {
            let wave = |x: f64, y: f64| (PI * x / 5.0).sin() * (PI * y / 5.0).sin();
            (
                ScalarField::from_fn(width, height, |x, y| wave(x as f64, y as f64)),
                ScalarField::from_fn(width, height, |x, y| wave(x as f64 + 2.5, y as f64 + 2.5)),
            )
        }
        InitScheme::Circles => {
            let r = width.min(height) as f64 / 4.0;
            let (wf, hf) = (width as f64, height as f64);
            let circle = move |cx: f64, cy: f64| {
                ScalarField::from_fn(width, height, move |x, y| {
                    r - ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt()
                })
            };
            (circle(wf / 3.0, hf / 3.0), circle(2.0 * wf / 3.0, 2.0 * hf / 3.0))
        }
    };
    Ok(LevelSetQuad {
        ku1: k1.clone(),
        ku2: k2.clone(),
        kv1: k1,
        kv2: k2,
    })
}
