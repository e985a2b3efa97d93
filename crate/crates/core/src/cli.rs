//! Command-line front end: `tgv <subcommand> [flags]`.
//!
//! Configuration is layered: built-in defaults, then `--config FILE`, then
//! the dedicated flags, then every `--set section.key=value` in order.
//! Without `--input` the observation is synthesized from the truth (given
//! by `--truth` or a phantom) with seeded Gaussian noise of variance
//! `sigma2`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bilevel_dual::run_bilevel_dual_tracked;
use crate::bilevel_pd::{run_bilevel_pd_tracked, Alpha0Mode, BilevelPdConfig};
use crate::config::{Mode, RunConfig, SolverKind};
use crate::error::{param, Result, TgvError};
use crate::field::{GridMode, GridSpec, ScalarField};
use crate::gridsearch::{gridsearch, GridRow, GridSolver};
use crate::history::RunHistory;
use crate::io::{read_field_csv, read_image, write_field_csv, write_pgm, write_pgm_scaled};
use crate::lower_dual::solve_lower_dual;
use crate::lower_pd::pd_newton_solve;
use crate::metrics::{psnr, ssim};
use crate::smoothing::Weight;
use crate::synth::{add_gaussian_noise, make_phantom};
use crate::upper::{localized_residual, objective_f, CorridorSpec};

pub const EXIT_OK: i32 = 0;
/// Malformed command line (reported by the argument parser).
pub const EXIT_USAGE: i32 = 2;
/// Unreadable, unwritable or malformed file.
pub const EXIT_INPUT: i32 = 3;
/// Parameter outside its admissible range or mismatched grids.
pub const EXIT_PARAMETER: i32 = 4;
/// Lower-level or linear solver failure.
pub const EXIT_SOLVER: i32 = 5;

pub fn exit_code(e: &TgvError) -> i32 {
    match e {
        TgvError::Io(_) | TgvError::Format(_) => EXIT_INPUT,
        TgvError::Parameter(_) | TgvError::GridMismatch(_) => EXIT_PARAMETER,
        TgvError::NonConvergence { .. } | TgvError::Solver(_) | TgvError::NonFinite(_) => EXIT_SOLVER,
    }
}

#[derive(Parser, Debug)]
#[command(name = "tgv", version, about = "Weighted TGV denoising and bilevel weight learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One solve of the predual problem with scalar weights.
    DenoiseDual(CommonArgs),
    /// One solve of the primal-dual problem with scalar weights.
    DenoisePd(CommonArgs),
    /// Learn `alpha1` (field) and `alpha0` (scalar) with the predual solver.
    BilevelDual(CommonArgs),
    /// Learn the weights with the primal-dual solver.
    BilevelPd(CommonArgs),
    /// Scan pairs of scalar weights.
    Gridsearch(CommonArgs),
    /// PSNR and SSIM of `--input` against `--truth`.
    Metrics(CommonArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Noisy observation (.pgm or .csv).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Ground truth (.pgm or .csv) for metrics and noise synthesis.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "tgv-out")]
    pub output: PathBuf,
    #[arg(long, env = "TGV_SEED")]
    pub seed: Option<u64>,
    /// Noise variance, used for synthesis and for the variance corridor.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Window side of the localized residual.
    #[arg(long)]
    pub n_w: Option<usize>,
    /// Phantom kind used when neither --input nor --truth is given.
    #[arg(long)]
    pub phantom: Option<String>,
    /// Phantom side length.
    #[arg(long)]
    pub size: Option<usize>,
    /// `alpha0` of the pipeline (initial value for bilevel runs, a
    /// comma-separated list for gridsearch).
    #[arg(long)]
    pub alpha0: Option<String>,
    /// `alpha1`, read like --alpha0.
    #[arg(long)]
    pub alpha1: Option<String>,
    /// Outer iterations of a bilevel run.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Any config key, e.g. `--set pd.kkt_tol=1e-6`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the effective configuration of this pipeline and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl Command {
    fn parts(&self) -> (Mode, &CommonArgs) {
        match self {
            Command::DenoiseDual(a) => (Mode::DenoiseDual, a),
            Command::DenoisePd(a) => (Mode::DenoisePd, a),
            Command::BilevelDual(a) => (Mode::BilevelDual, a),
            Command::BilevelPd(a) => (Mode::BilevelPd, a),
            Command::Gridsearch(a) => (Mode::GridSearch, a),
            Command::Metrics(a) => (Mode::Metrics, a),
        }
    }
}

/// Parses `argv` (program name first), runs the pipeline and returns the
/// process exit code. Results go to `out`, diagnostics to standard error.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (mode, args) = cli.command.parts();
    match run(mode, args, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("tgv {}: {e}", mode.name());
            exit_code(&e)
        }
    }
}

/// Effective configuration: defaults, file, flags, `--set` overrides.
pub fn resolve_config(mode: Mode, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        cfg.apply(&crate::config::ConfigFile::parse(&text)?)?;
    }
    let d = "data";
    if let Some(s) = args.seed {
        cfg.data.seed = s;
    }
    if let Some(s) = args.sigma2 {
        cfg.data.sigma2 = s;
    }
    if let Some(n) = args.n_w {
        cfg.data.n_w = n;
    }
    if let Some(p) = &args.phantom {
        cfg.set(d, "phantom", p)?;
    }
    if let Some(n) = args.size {
        cfg.data.size = n;
    }
    let weight_keys = match mode {
        Mode::DenoiseDual => Some(("dual", "alpha0", "alpha1")),
        Mode::DenoisePd => Some(("pd", "alpha0", "alpha1")),
        Mode::BilevelDual => Some(("bilevel-dual", "alpha0_init", "alpha1_init")),
        Mode::BilevelPd => Some(("bilevel-pd", "alpha0_init", "alpha1_init")),
        Mode::GridSearch => Some(("gridsearch", "alpha0", "alpha1")),
        Mode::Metrics => None,
    };
    if let Some((sec, k0, k1)) = weight_keys {
        if let Some(v) = &args.alpha0 {
            cfg.set(sec, k0, v)?;
        }
        if let Some(v) = &args.alpha1 {
            cfg.set(sec, k1, v)?;
        }
    } else if args.alpha0.is_some() || args.alpha1.is_some() {
        return param("metrics takes no weights");
    }
    if let Some(k) = args.max_outer {
        cfg.bilevel_dual.steps.max_outer = k;
        cfg.bilevel_pd.steps.max_outer = k;
    }
    for o in &args.overrides {
        cfg.set_dotted(o)?;
    }
    Ok(cfg)
}

fn run(mode: Mode, args: &CommonArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(mode, args)?;
    if args.print_config {
        write!(out, "{}", cfg.render(mode))?;
        return Ok(());
    }
    cfg.validate(mode)?;
    if mode == Mode::Metrics {
        return metrics(args, out);
    }
    let spec = CorridorSpec::new(cfg.data.sigma2, cfg.data.n_w)?.with_zero_pad(cfg.data.zero_pad);
    let grid_mode = match mode {
        Mode::DenoiseDual | Mode::BilevelDual => GridMode::Dual,
        Mode::GridSearch if cfg.gridsearch.solver == SolverKind::Dual => GridMode::Dual,
        _ => GridMode::PrimalDual,
    };
    let data = load_data(args, &cfg, grid_mode)?;
    let dir = &args.output;
    fs::create_dir_all(dir)?;
    if data.synthesized {
        write_pgm(&dir.join("noisy.pgm"), &data.f, cfg.data.depth)?;
    }
    match mode {
        Mode::DenoiseDual | Mode::DenoisePd => denoise(mode, &cfg, &data, &spec, dir, out),
        Mode::BilevelDual => bilevel_dual(&cfg, &data, &spec, dir, out),
        Mode::BilevelPd => bilevel_pd(&cfg, &data, &spec, dir, out),
        Mode::GridSearch => grid(&cfg, &data, &spec, dir, out),
        Mode::Metrics => unreachable!(),
    }
}

struct Data {
    f: ScalarField,
    truth: Option<ScalarField>,
    synthesized: bool,
}

fn load_data(args: &CommonArgs, cfg: &RunConfig, mode: GridMode) -> Result<Data> {
    let mut truth = args.truth.as_deref().map(|p| read_image(p, mode)).transpose()?;
    let (f, synthesized) = match &args.input {
        Some(p) => (read_image(p, mode)?, false),
        None => {
            let t = match truth.take() {
                Some(t) => t,
                None => {
                    let n = cfg.data.size;
                    make_phantom(cfg.data.phantom, GridSpec::with_mode(n, n, mode)?)
                }
            };
            let f = add_gaussian_noise(&t, cfg.data.sigma2, cfg.data.seed)?;
            truth = Some(t);
            (f, true)
        }
    };
    if let Some(t) = &truth {
        if !t.grid().same_shape(f.grid()) {
            return Err(TgvError::GridMismatch(format!(
                "input is {}x{}, truth is {}x{}",
                f.grid().n,
                f.grid().m,
                t.grid().n,
                t.grid().m
            )));
        }
    }
    Ok(Data { f, truth, synthesized })
}

/// `psnr=.. ssim=..` against the truth when there is one.
fn quality(u: &ScalarField, truth: Option<&ScalarField>) -> Result<String> {
    Ok(match truth {
        Some(t) => format!(" psnr={} ssim={}", psnr(u, t, 1.0)?, ssim(u, t)?),
        None => String::new(),
    })
}

fn write_image(dir: &Path, name: &str, u: &ScalarField, cfg: &RunConfig) -> Result<()> {
    write_pgm(&dir.join(format!("{name}.pgm")), u, cfg.data.depth)?;
    write_field_csv(&dir.join(format!("{name}.csv")), u)
}

/// Weight map as CSV (exact) and as a PGM stretched over its own range.
fn write_weight(dir: &Path, name: &str, a: &ScalarField) -> Result<()> {
    write_field_csv(&dir.join(format!("{name}.csv")), a)?;
    write_pgm_scaled(&dir.join(format!("{name}.pgm")), a, a.min(), a.max())
}

fn write_history(dir: &Path, name: &str, h: &RunHistory) -> Result<()> {
    Ok(fs::write(dir.join(name), h.to_csv()?)?)
}

fn denoise(
    mode: Mode,
    cfg: &RunConfig,
    data: &Data,
    spec: &CorridorSpec,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let f = &data.f;
    let (u, iterations) = match mode {
        Mode::DenoiseDual => {
            let w = cfg.dual_weights;
            let a1 = ScalarField::constant(*f.grid(), w.alpha1);
            let s = solve_lower_dual(f, &Weight::Scalar(w.alpha0), &a1, &cfg.dual)?;
            (s.image(f), s.iterations)
        }
        _ => {
            let w = cfg.pd_weights;
            let a1 = ScalarField::constant(*f.grid(), w.alpha1);
            let s = pd_newton_solve(f, &Weight::Scalar(w.alpha0), &a1, &cfg.pd, None)?;
            (s.state.u, s.iterations)
        }
    };
    write_image(dir, "u", &u, cfg)?;
    let fv = objective_f(&localized_residual(&u, f, spec)?, spec);
    writeln!(out, "{} iterations={iterations} f_value={fv}{}", mode.name(), quality(&u, data.truth.as_ref())?)?;
    Ok(())
}

fn bilevel_dual(cfg: &RunConfig, data: &Data, spec: &CorridorSpec, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let r = run_bilevel_dual_tracked(&data.f, &cfg.dual_bilevel(), spec, data.truth.as_ref())?;
    write_image(dir, "u", &r.u, cfg)?;
    write_weight(dir, "alpha1", &r.alpha1)?;
    write_history(dir, "history.csv", &r.history)?;
    summary(out, "bilevel-dual", &r.history, &Weight::Scalar(r.alpha0), &r.alpha1, &r.u, data)
}

fn bilevel_pd(cfg: &RunConfig, data: &Data, spec: &CorridorSpec, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let base = cfg.pd_bilevel();
    let truth = data.truth.as_ref();
    let stage_cfg = match base.alpha0_mode {
        Alpha0Mode::Scalar => base,
        Alpha0Mode::Spatial => {
            let alpha1 = if cfg.fixed_alpha1.is_empty() {
                let first = BilevelPdConfig { alpha0_mode: Alpha0Mode::Scalar, ..base.clone() };
                let r = run_bilevel_pd_tracked(&data.f, &first, spec, truth)?;
                write_history(dir, "history_stage1.csv", &r.history)?;
                summary(out, "bilevel-pd stage 1", &r.history, &r.alpha0, &r.alpha1, &r.u, data)?;
                r.alpha1
            } else {
                let a = read_field_csv(Path::new(&cfg.fixed_alpha1), GridMode::PrimalDual)?;
                a.regrid(*data.f.grid())?
            };
            BilevelPdConfig { alpha0_init: cfg.spatial_alpha0_init, fixed_alpha1: Some(alpha1), ..base }
        }
    };
    let r = run_bilevel_pd_tracked(&data.f, &stage_cfg, spec, truth)?;
    write_image(dir, "u", &r.u, cfg)?;
    write_weight(dir, "alpha1", &r.alpha1)?;
    if let Weight::Field(a0) = &r.alpha0 {
        write_weight(dir, "alpha0", a0)?;
    }
    write_history(dir, "history.csv", &r.history)?;
    summary(out, "bilevel-pd", &r.history, &r.alpha0, &r.alpha1, &r.u, data)
}

fn summary(
    out: &mut dyn Write,
    label: &str,
    h: &RunHistory,
    a0: &Weight,
    a1: &ScalarField,
    u: &ScalarField,
    data: &Data,
) -> Result<()> {
    let a0s = match a0 {
        Weight::Scalar(v) => format!("alpha0={v}"),
        Weight::Field(f) => format!("alpha0=[{}, {}]", f.min(), f.max()),
    };
    writeln!(
        out,
        "{label} iterations={} lower_solves={} objective={}->{} {a0s} alpha1=[{}, {}]{}",
        h.rows.len(),
        h.total_lower_solves(),
        h.initial.objective,
        h.last().objective,
        a1.min(),
        a1.max(),
        quality(u, data.truth.as_ref())?
    )?;
    Ok(())
}

fn grid(cfg: &RunConfig, data: &Data, spec: &CorridorSpec, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let Some(truth) = &data.truth else {
        return param("gridsearch needs a truth image (--truth or a synthesized phantom)");
    };
    let g = &cfg.gridsearch;
    let solver = match g.solver {
        SolverKind::Dual => GridSolver::Dual(cfg.dual.clone()),
        SolverKind::Pd => GridSolver::Pd(cfg.pd.clone()),
    };
    let t = gridsearch(&data.f, truth, &g.alpha0, &g.alpha1, &solver, spec)?;
    fs::write(dir.join("grid.csv"), t.to_csv()?)?;
    let failed = t.rows.iter().filter(|r| !r.ok()).count();
    writeln!(out, "gridsearch pairs={} failed={failed}", t.rows.len())?;
    let show = |r: Option<&GridRow>| match r {
        Some(r) => {
            format!("alpha0={} alpha1={} psnr={} ssim={} f_value={}", r.alpha0, r.alpha1, r.psnr, r.ssim, r.f_value)
        }
        None => "none".into(),
    };
    writeln!(out, "best psnr: {}", show(t.best_psnr()))?;
    writeln!(out, "best ssim: {}", show(t.best_ssim()))?;
    writeln!(out, "least F:   {}", show(t.best_f()))?;
    Ok(())
}

fn metrics(args: &CommonArgs, out: &mut dyn Write) -> Result<()> {
    let (Some(i), Some(t)) = (&args.input, &args.truth) else {
        return param("metrics needs --input and --truth");
    };
    let u = read_image(i, GridMode::PrimalDual)?;
    let t = read_image(t, GridMode::PrimalDual)?;
    writeln!(out, "psnr={} ssim={}", psnr(&u, &t, 1.0)?, ssim(&u, &t)?)?;
    Ok(())
}
