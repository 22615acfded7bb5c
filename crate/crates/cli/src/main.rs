mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use smokeflow::flowviz::{self, MaxMagnitude};
use smokeflow::{fields, gmm, imgio, metrics, solver, Error, InitScheme, NoiseKind};

use crate::config::RunConfig;

/// Environment variable holding an env_logger filter; overrides `log_level`.
const LOG_ENV: &str = "SMOKEFLOW_LOG";

#[derive(Parser, Debug)]
#[command(name = "smokeflow", version, about = "Fractional-order optical flow and smoke motion masks")]
struct Cli {
    /// TOML file with run configuration keys; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the flow between two frames and write a .flo file.
    Flow {
        #[arg(long)]
        frame1: PathBuf,
        #[arg(long)]
        frame2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Newline-delimited JSON record per outer iteration.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Render a .flo file as a colour map.
    Colorize {
        input: PathBuf,
        /// Defaults to the input path with a .png extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        color: ColorFlags,
    },
    /// Fit a GMM to a colour map and write the motion mask and fused image.
    Segment {
        #[arg(long)]
        colormap: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        gmm: GmmFlags,
    },
    /// Compare a predicted flow with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Frame supplying the image gradients for the normal error.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Blur applied to the image before differentiation.
        #[arg(long)]
        presmooth_sigma: Option<f64>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// SSIM between two images.
    Ssim {
        a: PathBuf,
        b: PathBuf,
    },
    /// Add seeded noise to an image.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// Flow, colour map, mask, fused image and metrics for one frame pair.
    Pipeline {
        #[arg(long)]
        frame1: PathBuf,
        #[arg(long)]
        frame2: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Ground-truth .flo; adds accuracy metrics to the record.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        gmm: GmmFlags,
        #[command(flatten)]
        color: ColorFlags,
        #[command(flatten)]
        eval: EvalFlags,
    },
}

#[derive(Args, Debug, Default)]
struct SolverFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    dual_iters: Option<usize>,
    #[arg(long)]
    flow_iters: Option<usize>,
    #[arg(long)]
    flow_tol: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    dtau: Option<f64>,
    /// Grid spacing.
    #[arg(long = "grid-h")]
    h: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    shared_levelsets: Option<bool>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    pyramid_levels: Option<usize>,
    #[arg(long)]
    pyramid_factor: Option<f64>,
    #[arg(long)]
    presmooth_sigma: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct GmmFlags {
    #[arg(long = "k")]
    gmm_k: Option<usize>,
    #[arg(long)]
    gmm_seed: Option<u64>,
    #[arg(long)]
    gmm_tol: Option<f64>,
    #[arg(long)]
    gmm_max_iter: Option<usize>,
    #[arg(long)]
    min_separation: Option<f64>,
    #[arg(long)]
    closing_radius: Option<usize>,
    #[arg(long)]
    min_component_px: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ColorFlags {
    /// Saturation scale in pixels; omitted means the 99th percentile.
    #[arg(long)]
    max_mag: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct EvalFlags {
    #[arg(long)]
    grad_floor: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct NoiseFlags {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! overlay {
    ($cfg:expr, $flags:expr, $($field:ident),+) => {
        $( if let Some(v) = $flags.$field.clone() { $cfg.$field = v; } )+
    };
}

impl SolverFlags {
    fn apply(&self, c: &mut RunConfig) -> Result<(), Error> {
        overlay!(c, self, alpha, lambda, theta, nu, iters, dual_iters, flow_iters, flow_tol, window);
        overlay!(c, self, eps, dtau, h, eta, shared_levelsets, pyramid_levels, pyramid_factor, presmooth_sigma);
        if let Some(s) = &self.init {
            c.init = s.parse::<InitScheme>()?;
        }
        Ok(())
    }
}

impl GmmFlags {
    fn apply(&self, c: &mut RunConfig) {
        overlay!(c, self, gmm_k, gmm_seed, gmm_tol, gmm_max_iter, min_separation, closing_radius, min_component_px);
    }
}

impl ColorFlags {
    fn apply(&self, c: &mut RunConfig) {
        if self.max_mag.is_some() {
            c.max_mag = self.max_mag;
        }
    }
}

impl EvalFlags {
    fn apply(&self, c: &mut RunConfig) {
        overlay!(c, self, grad_floor);
    }
}

impl NoiseFlags {
    fn apply(&self, c: &mut RunConfig) -> Result<(), Error> {
        if let Some(k) = &self.kind {
            c.noise_kind = k.parse::<NoiseKind>().map_err(|_| Error::InvalidParameter {
                key: "noise_kind".into(),
                reason: format!("unknown noise kind {k:?}"),
            })?;
        }
        if let Some(v) = self.mean {
            c.noise_mean = v;
        }
        if let Some(v) = self.sigma {
            c.noise_sigma = v;
        }
        if let Some(v) = self.density {
            c.noise_density = v;
        }
        if let Some(v) = self.seed {
            c.noise_seed = v;
        }
        Ok(())
    }
}

/// Exit status 1 for bad input or configuration, 2 for failures at run time.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. }
        | Error::OrderOutOfRange(_)
        | Error::MissingFile { .. }
        | Error::UnsupportedFormat { .. }
        | Error::CorruptHeader { .. }
        | Error::BadMagic { .. }
        | Error::SizeMismatch(_)
        | Error::DegenerateSize { .. }
        | Error::TooSmall { .. }
        | Error::NotColor(_)
        | Error::NonFiniteInput(_) => 1,
        _ => 2,
    }
}

fn init_logging(level: &str) {
    let mut b = env_logger::Builder::new();
    match std::env::var(LOG_ENV) {
        Ok(filter) => b.parse_filters(&filter),
        Err(_) => b.parse_filters(level),
    };
    let _ = b.try_init();
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("json value");
    text.push('\n');
    imgio::atomic_write(path, text.as_bytes())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("json value"));
}

/// Resolves the configuration for `cmd` and checks it before any work.
fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut c = RunConfig::load(cli.config.as_deref())?;
    if let Some(l) = &cli.log_level {
        c.log_level = l.clone();
    }
    match &cli.command {
        Command::Flow { solver, .. } => solver.apply(&mut c)?,
        Command::Colorize { color, .. } => color.apply(&mut c),
        Command::Segment { gmm, .. } => gmm.apply(&mut c),
        Command::Eval {
            eval, presmooth_sigma, ..
        } => {
            eval.apply(&mut c);
            if let Some(s) = presmooth_sigma {
                c.presmooth_sigma = *s;
            }
        }
        Command::Ssim { .. } => {}
        Command::Noise { noise, .. } => noise.apply(&mut c)?,
        Command::Pipeline {
            solver,
            gmm,
            color,
            eval,
            ..
        } => {
            solver.apply(&mut c)?;
            gmm.apply(&mut c);
            color.apply(&mut c);
            eval.apply(&mut c);
        }
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), Error> {
    match &cli.command {
        Command::Flow {
            frame1,
            frame2,
            out,
            diagnostics,
            ..
        } => {
            let f1 = imgio::read_image(frame1)?;
            let f2 = imgio::read_image(frame2)?;
            let mut diag: Vec<u8> = Vec::new();
            let sink: Option<&mut dyn std::io::Write> = diagnostics.as_ref().map(|_| &mut diag as _);
            log::info!("estimating flow {}x{}", f1.width(), f1.height());
            let r = solver::estimate_flow_with_diagnostics(&f1, &f2, &cfg.solver(), sink)?;
            imgio::write_flo(&r.flow, out)?;
            if let Some(p) = diagnostics {
                imgio::atomic_write(p, &diag)?;
            }
            print_json(&json!({
                "command": "flow",
                "out": out,
                "final": r.energy_trace.last(),
                "final_residual": r.residual_trace.last(),
                "stability": r.stability,
            }));
        }
        Command::Colorize { input, out, .. } => {
            let flow = imgio::read_flo(input)?;
            let out = out.clone().unwrap_or_else(|| input.with_extension("png"));
            let m = match cfg.max_magnitude() {
                MaxMagnitude::Auto => flowviz::auto_max_magnitude(&flow),
                MaxMagnitude::Fixed(m) => m,
            };
            let img = flowviz::flow_to_color(&flow, MaxMagnitude::Fixed(m))?;
            imgio::write_image(&img, &out)?;
            print_json(&json!({ "command": "colorize", "out": out, "max_mag": m }));
        }
        Command::Segment {
            colormap,
            mask,
            fused,
            model,
            ..
        } => {
            let img = imgio::read_image(colormap)?;
            let (m, mk) = gmm::segment(&img, &cfg.gmm())?;
            let f = gmm::fuse(&img, &mk)?;
            mk.write_png(mask)?;
            imgio::write_image(&f, fused)?;
            if let Some(p) = model {
                m.save(p)?;
            }
            print_json(&json!({
                "command": "segment",
                "mask_fraction": mk.fraction(),
                "smoke_component": m.smoke_component(),
                "iterations": m.loglik_trace.len() - 1,
            }));
        }
        Command::Eval {
            pred, gt, image, out, ..
        } => {
            let p = imgio::read_flo(pred)?;
            let g = imgio::read_flo(gt)?;
            let img = imgio::read_image(image)?;
            let grads = fields::gradients(&img, &img, cfg.presmooth_sigma)?;
            let report = metrics::evaluate(&p, &g, &grads, cfg.grad_floor)?;
            let v = serde_json::to_value(&report).expect("report");
            if let Some(o) = out {
                write_json(o, &v)?;
            }
            print_json(&v);
        }
        Command::Ssim { a, b } => {
            let s = metrics::ssim(&imgio::read_image(a)?, &imgio::read_image(b)?)?;
            print_json(&json!({ "ssim": s }));
        }
        Command::Noise { input, out, .. } => {
            let img = imgio::read_image(input)?;
            let noisy = fields::add_noise(&img, &cfg.noise())?;
            imgio::write_image(&noisy, out)?;
            print_json(&json!({ "command": "noise", "out": out, "spec": cfg.noise() }));
        }
        Command::Pipeline {
            frame1,
            frame2,
            out_dir,
            gt,
            ..
        } => pipeline(frame1, frame2, out_dir, gt.as_deref(), cfg)?,
    }
    Ok(())
}

fn pipeline(frame1: &Path, frame2: &Path, out_dir: &Path, gt: Option<&Path>, cfg: &RunConfig) -> Result<(), Error> {
    let f1 = imgio::read_image(frame1)?;
    let f2 = imgio::read_image(frame2)?;
    let gt_flow = gt.map(imgio::read_flo).transpose()?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::IoFailure {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut diag: Vec<u8> = Vec::new();
    let out = solver::run_pipeline_with(&f1, &f2, &cfg.solver(), &cfg.gmm(), cfg.max_magnitude(), Some(&mut diag))?;
    let max_mag = match cfg.max_magnitude() {
        MaxMagnitude::Auto => flowviz::auto_max_magnitude(&out.flow),
        MaxMagnitude::Fixed(m) => m,
    };
    imgio::write_flo(&out.flow, out_dir.join("flow.flo"))?;
    imgio::write_image(&out.colormap, out_dir.join("colormap.png"))?;
    out.mask.write_png(out_dir.join("mask.png"))?;
    imgio::write_image(&out.fused, out_dir.join("fused.png"))?;
    out.model.save(out_dir.join("model.json"))?;
    imgio::atomic_write(&out_dir.join("diagnostics.ndjson"), &diag)?;

    let accuracy = match &gt_flow {
        Some(g) => {
            let grads = fields::gradients(&f1, &f1, cfg.presmooth_sigma)?;
            Some(metrics::evaluate(&out.flow, g, &grads, cfg.grad_floor)?)
        }
        None => None,
    };
    let record = json!({
        "command": "pipeline",
        "max_mag": max_mag,
        "mask_fraction": out.mask.fraction(),
        "final": out.result.energy_trace.last(),
        "final_residual": out.result.residual_trace.last(),
        "stability": out.result.stability,
        "accuracy": accuracy,
    });
    write_json(&out_dir.join("metrics.json"), &record)?;
    print_json(&record);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            init_logging("warn");
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    init_logging(&cfg.log_level);
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
