//! Run configuration: plain-text `key = value` files with `[section]` headers.
//!
//! ```text
//! [data]
//! sigma2 = 0.01
//! n_w = 7
//!
//! [pd]
//! alpha0 = 0.2   # trailing comments are allowed
//! ```
//!
//! Every pipeline has a shipped default profile ([`default_profile`]) that
//! lists all keys it reads. A file only needs the keys it changes; unknown
//! sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::bilevel_dual::{BilevelDualConfig, WarmStart};
use crate::bilevel_pd::{Alpha0Mode, BilevelPdConfig};
use crate::descent::{StepRule, WeightBounds};
use crate::error::{param, Result, TgvError};
use crate::io::{fmt_f64 as show_f64, PgmDepth};
use crate::lower_dual::DualSolverConfig;
use crate::lower_pd::PdSolverConfig;
use crate::smoothing::ProjectionMode;
use crate::synth::PhantomKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    DenoiseDual,
    DenoisePd,
    BilevelDual,
    BilevelPd,
    GridSearch,
    Metrics,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::DenoiseDual, Mode::DenoisePd, Mode::BilevelDual, Mode::BilevelPd, Mode::GridSearch, Mode::Metrics];

    pub fn name(self) -> &'static str {
        match self {
            Mode::DenoiseDual => "denoise-dual",
            Mode::DenoisePd => "denoise-pd",
            Mode::BilevelDual => "bilevel-dual",
            Mode::BilevelPd => "bilevel-pd",
            Mode::GridSearch => "gridsearch",
            Mode::Metrics => "metrics",
        }
    }

    /// Sections read by this pipeline.
    pub fn sections(self) -> &'static [&'static str] {
        match self {
            Mode::DenoiseDual => &["data", "dual"],
            Mode::DenoisePd => &["data", "pd"],
            Mode::BilevelDual => &["data", "dual", "bilevel-dual"],
            Mode::BilevelPd => &["data", "pd", "bilevel-pd"],
            Mode::GridSearch => &["data", "dual", "pd", "gridsearch"],
            Mode::Metrics => &["data"],
        }
    }
}

impl FromStr for Mode {
    type Err = TgvError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| TgvError::Parameter(format!("unknown mode '{s}'")))
    }
}

/// Which lower-level solver a grid search uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Dual,
    Pd,
}

/// Observation, ground truth and the noise model.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub sigma2: f64,
    pub seed: u64,
    pub n_w: usize,
    /// Zero-padded window sums instead of the renormalized window.
    pub zero_pad: bool,
    /// Synthetic truth used when no image is given.
    pub phantom: PhantomKind,
    pub size: usize,
    pub depth: PgmDepth,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            sigma2: 0.01,
            seed: 0,
            n_w: 7,
            zero_pad: false,
            phantom: PhantomKind::PiecewiseAffine,
            size: 64,
            depth: PgmDepth::Sixteen,
        }
    }
}

/// Scalar weights for a single denoising solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarWeights {
    pub alpha0: f64,
    pub alpha1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchConfig {
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub solver: SolverKind,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            alpha0: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            alpha1: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            solver: SolverKind::Pd,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub dual: DualSolverConfig,
    pub dual_weights: ScalarWeights,
    pub pd: PdSolverConfig,
    pub pd_weights: ScalarWeights,
    /// Its `lower` field is replaced by `dual` when a run starts.
    pub bilevel_dual: BilevelDualConfig,
    /// Its `lower` field is replaced by `pd` when a run starts.
    pub bilevel_pd: BilevelPdConfig,
    /// Start of a spatial `alpha0` stage.
    pub spatial_alpha0_init: f64,
    /// CSV file holding a fixed `alpha1` for the spatial stage; empty means
    /// a scalar stage is run first to produce it.
    pub fixed_alpha1: String,
    pub gridsearch: GridSearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            dual: DualSolverConfig::default(),
            dual_weights: ScalarWeights { alpha0: 3.125e-6, alpha1: 9e-4 },
            pd: PdSolverConfig::default(),
            pd_weights: ScalarWeights { alpha0: 0.2, alpha1: 0.25 },
            bilevel_dual: BilevelDualConfig::default(),
            bilevel_pd: BilevelPdConfig::default(),
            spatial_alpha0_init: 5.0,
            fixed_alpha1: String::new(),
            gridsearch: GridSearchConfig::default(),
        }
    }
}

/// A config value that can be shown and parsed back.
trait Value {
    fn show(&self) -> String;
    fn parse(&mut self, s: &str) -> std::result::Result<(), String>;
}

fn parse_with<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

impl Value for f64 {
    fn show(&self) -> String {
        show_f64(*self)
    }
    fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = parse_with(s)?;
        Ok(())
    }
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn show(&self) -> String {
                self.to_string()
            }
            fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = parse_with(s)?;
                Ok(())
            }
        }
    )*};
}

plain_value!(usize, u64, bool, String);

/// Values spelled as one of a fixed set of words.
macro_rules! word_value {
    ($t:ty { $($v:expr => $w:literal),* $(,)? }) => {
        impl Value for $t {
            fn show(&self) -> String {
                match self {
                    $(x if *x == $v => $w.to_string(),)*
                    _ => unreachable!(),
                }
            }
            fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = match s {
                    $($w => $v,)*
                    _ => return Err(format!("expected one of: {}", [$($w),*].join(", "))),
                };
                Ok(())
            }
        }
    };
}

word_value!(ProjectionMode { ProjectionMode::PixelRadial => "pixel", ProjectionMode::Componentwise => "componentwise" });
word_value!(Alpha0Mode { Alpha0Mode::Scalar => "scalar", Alpha0Mode::Spatial => "spatial" });
word_value!(SolverKind { SolverKind::Dual => "dual", SolverKind::Pd => "pd" });
word_value!(PgmDepth { PgmDepth::Eight => "8", PgmDepth::Sixteen => "16" });

impl Value for PhantomKind {
    fn show(&self) -> String {
        self.name().to_string()
    }
    fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.parse().map_err(|e: TgvError| e.to_string())?;
        Ok(())
    }
}

/// `cold`, `final:N` or `path:EPS`.
impl Value for WarmStart {
    fn show(&self) -> String {
        match self {
            WarmStart::Cold => "cold".into(),
            WarmStart::FinalOnly(n) => format!("final:{n}"),
            WarmStart::Path(e) => format!("path:{}", show_f64(*e)),
        }
    }
    fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = match s.split_once(':') {
            None if s == "cold" => WarmStart::Cold,
            Some(("final", n)) => WarmStart::FinalOnly(parse_with(n)?),
            Some(("path", e)) => WarmStart::Path(parse_with(e)?),
            _ => return Err("expected cold, final:N or path:EPS".into()),
        };
        Ok(())
    }
}

/// Comma-separated numbers.
impl Value for Vec<f64> {
    fn show(&self) -> String {
        self.iter().map(|v| show_f64(*v)).collect::<Vec<_>>().join(", ")
    }
    fn parse(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.split(',').map(|t| parse_with(t.trim())).collect::<std::result::Result<_, _>>()?;
        Ok(())
    }
}

type Visit<'a> = dyn FnMut(&str, &mut dyn Value) + 'a;

fn visit_steps(s: &mut StepRule, v: &mut Visit) {
    v("tau0", &mut s.tau0_init);
    v("tau1", &mut s.tau1_init);
    v("c", &mut s.c);
    v("theta_minus", &mut s.theta_minus);
    v("theta_plus", &mut s.theta_plus);
    v("max_outer", &mut s.max_outer);
    v("max_shrinks", &mut s.max_shrinks);
}

fn visit_bounds(b: &mut WeightBounds, v: &mut Visit) {
    v("alpha0_min", &mut b.alpha0.0);
    v("alpha0_max", &mut b.alpha0.1);
    v("alpha1_min", &mut b.alpha1.0);
    v("alpha1_max", &mut b.alpha1.1);
    v("eps_alpha", &mut b.eps_alpha);
    v("lap_weight", &mut b.lap_weight);
}

impl RunConfig {
    fn visit(&mut self, section: &str, v: &mut Visit) {
        match section {
            "data" => {
                let d = &mut self.data;
                v("sigma2", &mut d.sigma2);
                v("seed", &mut d.seed);
                v("n_w", &mut d.n_w);
                v("zero_pad", &mut d.zero_pad);
                v("phantom", &mut d.phantom);
                v("size", &mut d.size);
                v("depth", &mut d.depth);
            }
            "dual" => {
                let c = &mut self.dual;
                v("alpha0", &mut self.dual_weights.alpha0);
                v("alpha1", &mut self.dual_weights.alpha1);
                v("beta", &mut c.beta);
                v("gamma", &mut c.gamma);
                v("delta", &mut c.delta);
                v("eps0_init", &mut c.eps0_init);
                v("eps1_init", &mut c.eps1_init);
                v("eps0_final", &mut c.eps0_final);
                v("eps1_final", &mut c.eps1_final);
                v("theta_eps", &mut c.theta_eps);
                v("newton_tol", &mut c.newton_tol);
                v("stage_tol_start", &mut c.stage_tol_start);
                v("max_newton", &mut c.max_newton);
                v("line_search", &mut c.line_search);
            }
            "pd" => {
                let c = &mut self.pd;
                v("alpha0", &mut self.pd_weights.alpha0);
                v("alpha1", &mut self.pd_weights.alpha1);
                v("mu", &mut c.mu);
                v("alpha_reg", &mut c.alpha_reg);
                v("gamma0", &mut c.gamma0);
                v("gamma1", &mut c.gamma1);
                v("delta", &mut c.delta);
                v("kkt_tol", &mut c.kkt_tol);
                v("max_newton", &mut c.max_newton);
                v("projection", &mut c.projection);
            }
            "bilevel-dual" => {
                let c = &mut self.bilevel_dual;
                v("lambda", &mut c.lambda);
                v("alpha0_init", &mut c.alpha0_init);
                v("alpha1_init", &mut c.alpha1_init);
                visit_bounds(&mut c.bounds, v);
                visit_steps(&mut c.steps, v);
                v("warm_start", &mut c.warm_start);
            }
            "bilevel-pd" => {
                let c = &mut self.bilevel_pd;
                v("lambda0", &mut c.lambda0);
                v("lambda1", &mut c.lambda1);
                v("alpha0_mode", &mut c.alpha0_mode);
                v("alpha0_init", &mut c.alpha0_init);
                v("alpha1_init", &mut c.alpha1_init);
                v("spatial_alpha0_init", &mut self.spatial_alpha0_init);
                v("fixed_alpha1", &mut self.fixed_alpha1);
                visit_bounds(&mut c.bounds, v);
                visit_steps(&mut c.steps, v);
            }
            "gridsearch" => {
                let c = &mut self.gridsearch;
                v("alpha0", &mut c.alpha0);
                v("alpha1", &mut c.alpha1);
                v("solver", &mut c.solver);
            }
            _ => {}
        }
    }

    fn keys(section: &str) -> Vec<String> {
        let mut out = Vec::new();
        RunConfig::default().visit(section, &mut |k, _| out.push(k.to_string()));
        out
    }

    /// Sets one value; `section.key` must name a known key.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let mut found = None;
        self.visit(section, &mut |k, slot| {
            if k == key {
                found = Some(slot.parse(value.trim()));
            }
        });
        match found {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => param(format!("[{section}] {key} = {value}: {e}")),
            None if Self::keys(section).is_empty() => param(format!("unknown section [{section}]")),
            None => param(format!("unknown key '{key}' in [{section}]")),
        }
    }

    /// Applies a `section.key=value` override.
    pub fn set_dotted(&mut self, assignment: &str) -> Result<()> {
        let bad = || TgvError::Parameter(format!("override '{assignment}' is not section.key=value"));
        let (path, value) = assignment.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        self.set(section, key, value)
    }

    /// Applies every assignment of a parsed file on top of `self`.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        for (section, entries) in &file.sections {
            for (key, (value, line)) in entries {
                self.set(section, key, value).map_err(|e| match e {
                    TgvError::Parameter(m) => TgvError::Parameter(format!("line {line}: {m}")),
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply(&ConfigFile::parse(text)?)?;
        Ok(c)
    }

    /// Text of every section a pipeline reads, with current values.
    pub fn render(&self, mode: Mode) -> String {
        let mut c = self.clone();
        let mut out = format!("# {} profile\n", mode.name());
        for s in mode.sections() {
            out.push_str(&format!("\n[{s}]\n"));
            c.visit(s, &mut |k, val| out.push_str(&format!("{k} = {}\n", val.show())));
        }
        out
    }

    pub fn dual_bilevel(&self) -> BilevelDualConfig {
        BilevelDualConfig { lower: self.dual.clone(), ..self.bilevel_dual.clone() }
    }

    pub fn pd_bilevel(&self) -> BilevelPdConfig {
        BilevelPdConfig { lower: self.pd.clone(), ..self.bilevel_pd.clone() }
    }

    /// Checks every parameter group a pipeline uses.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let d = &self.data;
        if !(d.sigma2 >= 0.0) {
            return param("sigma2 must be nonnegative");
        }
        if d.size < 2 {
            return param("phantom size must be at least 2");
        }
        let pos = |w: &ScalarWeights| w.alpha0 > 0.0 && w.alpha1 > 0.0;
        match mode {
            Mode::DenoiseDual => {
                self.dual.validate()?;
                if !pos(&self.dual_weights) {
                    return param("dual weights must be positive");
                }
            }
            Mode::DenoisePd => {
                self.pd.validate()?;
                if !pos(&self.pd_weights) {
                    return param("pd weights must be positive");
                }
            }
            Mode::BilevelDual => self.dual_bilevel().validate()?,
            Mode::BilevelPd => {
                let c = self.pd_bilevel();
                c.validate()?;
                if c.alpha0_mode == Alpha0Mode::Spatial {
                    let (lo, hi) = c.bounds.alpha0;
                    if !(lo..=hi).contains(&self.spatial_alpha0_init) {
                        return param("spatial_alpha0_init must lie inside the alpha0 bounds");
                    }
                }
            }
            Mode::GridSearch => {
                let g = &self.gridsearch;
                if g.alpha0.is_empty() || g.alpha1.is_empty() {
                    return param("grid search lists must be nonempty");
                }
                if g.alpha0.iter().chain(&g.alpha1).any(|v| !(*v > 0.0)) {
                    return param("grid search weights must be positive");
                }
                match g.solver {
                    SolverKind::Dual => self.dual.validate()?,
                    SolverKind::Pd => self.pd.validate()?,
                }
            }
            Mode::Metrics => {}
        }
        Ok(())
    }
}

/// Shipped profile of a pipeline: every key it reads at its default value.
pub fn default_profile(mode: Mode) -> String {
    RunConfig::default().render(mode)
}

/// Parsed `[section]` / `key = value` text. Values keep their source line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| TgvError::Format(format!("line {line}: unterminated section header")))?;
                current = Some(name.trim().to_string());
                out.sections.entry(name.trim().to_string()).or_default();
                continue;
            }
            let (key, value) =
                body.split_once('=').ok_or_else(|| TgvError::Format(format!("line {line}: expected key = value")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| TgvError::Format(format!("line {line}: assignment before any section")))?;
            let prev = out
                .sections
                .get_mut(section)
                .expect("section inserted on header")
                .insert(key.trim().to_string(), (value.trim().to_string(), line));
            if prev.is_some() {
                return Err(TgvError::Format(format!("line {line}: '{}' set twice in [{section}]", key.trim())));
            }
        }
        Ok(out)
    }
}
