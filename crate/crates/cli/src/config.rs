//! Run configuration: defaults, then an optional TOML file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smokeflow::flowviz::MaxMagnitude;
use smokeflow::metrics::DEFAULT_GRAD_FLOOR;
use smokeflow::{Error, GmmConfig, InitScheme, NoiseKind, NoiseSpec, SolverParams};

/// Every tunable key. The config file uses exactly these names at top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub nu: f64,
    pub iters: usize,
    pub dual_iters: usize,
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
    /// Colour-map saturation scale in pixels; absent means auto.
    pub max_mag: Option<f64>,
    pub grad_floor: f64,
    pub gmm_k: usize,
    pub gmm_seed: u64,
    pub gmm_tol: f64,
    pub gmm_max_iter: usize,
    pub min_separation: f64,
    pub closing_radius: usize,
    pub min_component_px: usize,
    pub noise_kind: NoiseKind,
    pub noise_mean: f64,
    pub noise_sigma: f64,
    pub noise_density: f64,
    pub noise_seed: u64,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolverParams::default();
        let g = GmmConfig::default();
        let n = NoiseSpec::gaussian(0.01, 0);
        Self {
            alpha: s.alpha,
            lambda: s.lambda,
            theta: s.theta,
            nu: s.nu,
            iters: s.outer_iters,
            dual_iters: s.dual_iters,
            flow_iters: s.flow_iters,
            flow_tol: s.flow_tol,
            window: s.window,
            eps: s.eps,
            dtau: s.dtau,
            h: s.h,
            eta: s.eta,
            shared_levelsets: s.shared_levelsets,
            init: s.init,
            pyramid_levels: s.pyramid_levels,
            pyramid_factor: s.pyramid_factor,
            presmooth_sigma: s.presmooth_sigma,
            max_mag: None,
            grad_floor: DEFAULT_GRAD_FLOOR,
            gmm_k: g.k,
            gmm_seed: g.seed,
            gmm_tol: g.tol,
            gmm_max_iter: g.max_iter,
            min_separation: g.min_separation,
            closing_radius: g.closing_radius,
            min_component_px: g.min_component_px,
            noise_kind: n.kind,
            noise_mean: n.mean,
            noise_sigma: n.sigma,
            noise_density: 0.01,
            noise_seed: n.seed,
            log_level: "warn".into(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the TOML file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_path_buf(),
            },
            _ => Error::IoFailure {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        toml::from_str(&text).map_err(|e| Error::InvalidParameter {
            key: format!("{}{}", path.display(), key_hint(&e)),
            reason: e.message().to_string(),
        })
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            alpha: self.alpha,
            lambda: self.lambda,
            theta: self.theta,
            nu: self.nu,
            outer_iters: self.iters,
            dual_iters: self.dual_iters,
            flow_iters: self.flow_iters,
            flow_tol: self.flow_tol,
            window: self.window,
            eps: self.eps,
            dtau: self.dtau,
            h: self.h,
            eta: self.eta,
            shared_levelsets: self.shared_levelsets,
            init: self.init,
            pyramid_levels: self.pyramid_levels,
            pyramid_factor: self.pyramid_factor,
            presmooth_sigma: self.presmooth_sigma,
        }
    }

    pub fn gmm(&self) -> GmmConfig {
        GmmConfig {
            k: self.gmm_k,
            seed: self.gmm_seed,
            tol: self.gmm_tol,
            max_iter: self.gmm_max_iter,
            min_separation: self.min_separation,
            closing_radius: self.closing_radius,
            min_component_px: self.min_component_px,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            kind: self.noise_kind,
            mean: self.noise_mean,
            sigma: self.noise_sigma,
            density: self.noise_density,
            seed: self.noise_seed,
        }
    }

    pub fn max_magnitude(&self) -> MaxMagnitude {
        match self.max_mag {
            Some(m) => MaxMagnitude::Fixed(m),
            None => MaxMagnitude::Auto,
        }
    }

    /// Checks every key; errors name the config key that failed.
    pub fn validate(&self) -> Result<(), Error> {
        self.solver().validate().map_err(rename_solver_key)?;
        self.gmm().validate().map_err(|e| rename(e, |k| k.replace("gmm.", "gmm_")))?;
        if self.gmm_k < 2 {
            return Err(invalid("gmm_k", "at least two mixture components are required"));
        }
        self.noise().validate().map_err(|e| rename(e, |k| k.replace("noise.", "noise_")))?;
        if let Some(m) = self.max_mag {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("max_mag", "must be finite and > 0"));
            }
        }
        if !(self.grad_floor >= 0.0 && self.grad_floor.is_finite()) {
            return Err(invalid("grad_floor", "must be finite and >= 0"));
        }
        if self.log_level.parse::<log::LevelFilter>().is_err() {
            return Err(invalid("log_level", "expected off, error, warn, info, debug or trace"));
        }
        Ok(())
    }
}

fn invalid(key: &str, reason: &str) -> Error {
    Error::InvalidParameter {
        key: key.into(),
        reason: reason.into(),
    }
}

fn rename(e: Error, f: impl Fn(&str) -> String) -> Error {
    match e {
        Error::InvalidParameter { key, reason } => Error::InvalidParameter { key: f(&key), reason },
        other => other,
    }
}

fn rename_solver_key(e: Error) -> Error {
    match e {
        Error::OrderOutOfRange(a) => Error::InvalidParameter {
            key: "alpha".into(),
            reason: format!("OrderOutOfRange: {a} must lie in (0, 1)"),
        },
        other => rename(other, |k| if k == "outer_iters" { "iters".into() } else { k.into() }),
    }
}

/// ` at byte N` for a TOML error with a known position.
fn key_hint(e: &toml::de::Error) -> String {
    e.span()
        .map(|s| format!(" at byte {}", s.start))
        .unwrap_or_default()
}
