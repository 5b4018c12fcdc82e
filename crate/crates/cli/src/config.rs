//! Flat `key = value` experiment configs.
//!
//! One entry per line, `#` starts a comment, keys are dotted words. Unknown
//! and duplicate keys are errors, so a typo never silently falls back to a
//! default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use horo_core::hyperbolic::DiskPoint;
use horo_core::observables::{ObservableRecipe, TimeChange};
use horo_core::surface::{FuchsianGroup, SpectralGapParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Entries with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
    pub lines: BTreeMap<String, usize>,
}

pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::at(n, format!("expected `key = value`, got `{body}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(ConfigError::at(n, format!("invalid key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError::at(n, format!("empty value for `{key}`")));
        }
        if let Some(first) = raw.lines.get(key) {
            return Err(ConfigError::at(n, format!("duplicate key `{key}` (first set on line {first})")));
        }
        raw.entries.insert(key.to_string(), value.to_string());
        raw.lines.insert(key.to_string(), n);
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityParams {
    pub arcs: usize,
    pub t_max: f64,
    pub sigma: f64,
    pub tolerance: f64,
    pub fd_points: usize,
    pub fd_t: f64,
    pub fd_tolerance: f64,
    pub mixing_ensemble: usize,
    pub mixing_t: f64,
    pub mixing_sigma: f64,
    pub mixing_sigmas: f64,
    pub degenerate_points: usize,
    pub degenerate_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquidistParams {
    pub ensemble: usize,
    pub k_min: u32,
    pub k_max: u32,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingParams {
    pub ensemble: usize,
    pub k_max: u32,
    pub t_min: f64,
    pub bound: f64,
    pub coboundary_bound: f64,
    /// The coboundary autocorrelation decays fast, so it is sampled densely
    /// (`t = 2^(k/4)`, `k ≤ coboundary_k_max`) with a larger ensemble.
    pub coboundary_ensemble: usize,
    pub coboundary_k_max: u32,
    pub arc_samples: usize,
    pub arc_sigma: f64,
    pub arc_k_min: u32,
    pub arc_k_max: u32,
    pub arc_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwistedParams {
    pub ensemble: usize,
    pub xi: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub bound: f64,
    pub coboundary_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams {
    pub ensemble: usize,
    pub dt: f64,
    pub t_max: f64,
    pub band: (f64, f64),
    pub points: usize,
    pub xi: Vec<f64>,
    pub ld_ensemble: usize,
    pub ld_k_min: u32,
    pub ld_k_max: u32,
    pub ld_target: f64,
    pub ld_tolerance: f64,
    pub rescaling_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// The config text as read, for the manifest hash.
    pub text: String,
    pub mu0: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub alpha: ObservableRecipe,
    pub f: ObservableRecipe,
    pub g: ObservableRecipe,
    pub u: ObservableRecipe,
    pub zero_average_n: usize,
    pub out: Option<PathBuf>,
    pub identities: IdentityParams,
    pub equidist: EquidistParams,
    pub mixing: MixingParams,
    pub twisted: TwistedParams,
    pub spectrum: SpectrumParams,
}

const REQUIRED: [&str; 4] = ["surface", "mu0", "seed", "alpha.epsilon"];

const SCALARS: &[&str] = &[
    "surface",
    "mu0",
    "seed",
    "alpha.epsilon",
    "output",
    "quad.zero_average_n",
    "identities.arcs",
    "identities.t_max",
    "identities.sigma",
    "identities.tolerance",
    "identities.fd_points",
    "identities.fd_t",
    "identities.fd_tolerance",
    "identities.mixing_ensemble",
    "identities.mixing_t",
    "identities.mixing_sigma",
    "identities.mixing_sigmas",
    "identities.degenerate_points",
    "identities.degenerate_t",
    "equidist.ensemble",
    "equidist.k_min",
    "equidist.k_max",
    "equidist.bound",
    "mixing.ensemble",
    "mixing.k_max",
    "mixing.t_min",
    "mixing.bound",
    "mixing.coboundary_bound",
    "mixing.coboundary_ensemble",
    "mixing.coboundary_k_max",
    "mixing.arc_samples",
    "mixing.arc_sigma",
    "mixing.arc_k_min",
    "mixing.arc_k_max",
    "mixing.arc_bound",
    "twisted.ensemble",
    "twisted.xi",
    "twisted.k_min",
    "twisted.k_max",
    "twisted.bound",
    "twisted.coboundary_bound",
    "spectrum.ensemble",
    "spectrum.dt",
    "spectrum.t_max",
    "spectrum.band",
    "spectrum.points",
    "spectrum.xi",
    "spectrum.ld_ensemble",
    "spectrum.ld_k_min",
    "spectrum.ld_k_max",
    "spectrum.ld_target",
    "spectrum.ld_tolerance",
    "spectrum.rescaling_tolerance",
];

const RECIPES: [&str; 4] = ["alpha", "f", "g", "u"];

fn default_recipe(name: &str) -> ObservableRecipe {
    let (r, angle, width) = match name {
        "alpha" => (1.0, 2.5, 1.0),
        "f" => (0.0, 0.0, 1.2),
        "g" => (0.6, 1.0, 1.2),
        _ => (0.5, -1.0, 1.2),
    };
    ObservableRecipe::single(DiskPoint::from_polar_hyperbolic(r, angle), width, 0)
}

fn is_recipe_key(key: &str) -> bool {
    RECIPES.iter().any(|p| {
        key.strip_prefix(p).and_then(|rest| rest.strip_prefix('.')).is_some_and(|rest| {
            rest == "offset"
                || rest.strip_prefix("bump").is_some_and(|b| {
                    let (idx, field) = b.split_once('.').unwrap_or((b, ""));
                    !idx.is_empty()
                        && idx.chars().all(|c| c.is_ascii_digit())
                        && ["center", "width", "harmonic", "coefficient"].contains(&field)
                })
        })
    })
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn located(&self, key: &str, message: String) -> ConfigError {
        ConfigError { line: self.raw.lines.get(key).copied(), message }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T, what: &str) -> Result<T, ConfigError> {
        match self.raw.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.located(key, format!("`{key}`: expected {what}, got `{v}`"))),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.parsed(key, default, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.located(key, format!("`{key}` must be finite")))
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.real(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.located(key, format!("`{key}` must be positive, got {v}")))
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.parsed(key, default, "a nonnegative integer")
    }

    fn index(&self, key: &str, default: u32) -> Result<u32, ConfigError> {
        self.parsed(key, default, "a nonnegative integer")
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw.entries.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| self.located(key, format!("`{key}`: expected comma-separated numbers, got `{v}`"))),
        }
    }

    fn recipe(&self, prefix: &str) -> Result<ObservableRecipe, ConfigError> {
        let present = self.raw.entries.keys().any(|k| k.starts_with(&format!("{prefix}.bump")) || *k == format!("{prefix}.offset"));
        if !present {
            return Ok(default_recipe(prefix));
        }
        ObservableRecipe::from_config(prefix, &self.raw.entries).map_err(|e| {
            let line = self.raw.lines.iter().filter(|(k, _)| k.starts_with(&format!("{prefix}."))).map(|(_, n)| *n).min();
            ConfigError { line, message: format!("recipe `{prefix}`: {e}") }
        })
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let raw = parse(text)?;
        for (key, line) in &raw.lines {
            if !SCALARS.contains(&key.as_str()) && !is_recipe_key(key) {
                return Err(ConfigError::at(*line, format!("unknown key `{key}`")));
            }
        }
        for key in REQUIRED {
            if !raw.entries.contains_key(key) {
                return Err(ConfigError::general(format!("missing required key `{key}`")));
            }
        }
        let r = Reader { raw: &raw };
        let surface = &raw.entries["surface"];
        if surface != "bolza" {
            return Err(r.located("surface", format!("unsupported surface `{surface}` (only `bolza`)")));
        }
        let band = r.list("spectrum.band", &[0.5, 4.0])?;
        let [lo, hi] = band[..] else {
            return Err(r.located("spectrum.band", "`spectrum.band` needs two numbers".into()));
        };
        let cfg = ExperimentConfig {
            text: text.to_string(),
            mu0: r.positive("mu0", SpectralGapParams::BOLZA_MU0)?,
            seed: r.parsed("seed", 0, "an unsigned integer")?,
            epsilon: r.real("alpha.epsilon", 0.3)?,
            alpha: r.recipe("alpha")?,
            f: r.recipe("f")?,
            g: r.recipe("g")?,
            u: r.recipe("u")?,
            zero_average_n: r.count("quad.zero_average_n", 100_000)?,
            out: raw.entries.get("output").map(PathBuf::from),
            identities: IdentityParams {
                arcs: r.count("identities.arcs", 100)?,
                t_max: r.positive("identities.t_max", 1000.0)?,
                sigma: r.positive("identities.sigma", 0.25)?,
                tolerance: r.positive("identities.tolerance", 1e-6)?,
                fd_points: r.count("identities.fd_points", 4)?,
                fd_t: r.positive("identities.fd_t", 10.0)?,
                fd_tolerance: r.positive("identities.fd_tolerance", 1e-4)?,
                mixing_ensemble: r.count("identities.mixing_ensemble", 100_000)?,
                mixing_t: r.positive("identities.mixing_t", 10.0)?,
                mixing_sigma: r.positive("identities.mixing_sigma", 0.5)?,
                mixing_sigmas: r.positive("identities.mixing_sigmas", 4.0)?,
                degenerate_points: r.count("identities.degenerate_points", 20)?,
                degenerate_t: r.positive("identities.degenerate_t", 1000.0)?,
            },
            equidist: EquidistParams {
                ensemble: r.count("equidist.ensemble", 1000)?,
                k_min: r.index("equidist.k_min", 14)?,
                k_max: r.index("equidist.k_max", 26)?,
                bound: r.real("equidist.bound", 0.55)?,
            },
            mixing: MixingParams {
                ensemble: r.count("mixing.ensemble", 100_000)?,
                k_max: r.index("mixing.k_max", 19)?,
                t_min: r.positive("mixing.t_min", 1.0)?,
                bound: r.real("mixing.bound", -0.4)?,
                coboundary_bound: r.real("mixing.coboundary_bound", -0.9)?,
                coboundary_ensemble: r.count("mixing.coboundary_ensemble", 1_000_000)?,
                coboundary_k_max: r.index("mixing.coboundary_k_max", 20)?,
                arc_samples: r.count("mixing.arc_samples", 8)?,
                arc_sigma: r.positive("mixing.arc_sigma", 0.25)?,
                arc_k_min: r.index("mixing.arc_k_min", 14)?,
                arc_k_max: r.index("mixing.arc_k_max", 26)?,
                arc_bound: r.real("mixing.arc_bound", -0.9)?,
            },
            twisted: TwistedParams {
                ensemble: r.count("twisted.ensemble", 1000)?,
                xi: r.real("twisted.xi", 1.0)?,
                k_min: r.index("twisted.k_min", 14)?,
                k_max: r.index("twisted.k_max", 26)?,
                bound: r.real("twisted.bound", 0.85)?,
                coboundary_bound: r.real("twisted.coboundary_bound", 0.65)?,
            },
            spectrum: SpectrumParams {
                ensemble: r.count("spectrum.ensemble", 100_000)?,
                dt: r.positive("spectrum.dt", 0.25)?,
                t_max: r.positive("spectrum.t_max", 200.0)?,
                band: (lo, hi),
                points: r.count("spectrum.points", 64)?,
                xi: r.list("spectrum.xi", &[1.0, 2.0])?,
                ld_ensemble: r.count("spectrum.ld_ensemble", 1000)?,
                ld_k_min: r.index("spectrum.ld_k_min", 8)?,
                ld_k_max: r.index("spectrum.ld_k_max", 20)?,
                ld_target: r.real("spectrum.ld_target", 1.0)?,
                ld_tolerance: r.positive("spectrum.ld_tolerance", 0.15)?,
                rescaling_tolerance: r.positive("spectrum.rescaling_tolerance", 0.3)?,
            },
        };
        for (key, lo, hi) in [
            ("equidist.k_min", cfg.equidist.k_min, cfg.equidist.k_max),
            ("mixing.arc_k_min", cfg.mixing.arc_k_min, cfg.mixing.arc_k_max),
            ("twisted.k_min", cfg.twisted.k_min, cfg.twisted.k_max),
            ("spectrum.ld_k_min", cfg.spectrum.ld_k_min, cfg.spectrum.ld_k_max),
        ] {
            if lo > hi {
                return Err(r.located(key, format!("`{key}` = {lo} exceeds the matching upper index {hi}")));
            }
        }
        if cfg.spectrum.xi.iter().any(|x| *x == 0.0) || cfg.spectrum.xi.is_empty() {
            return Err(r.located("spectrum.xi", "`spectrum.xi` needs nonzero frequencies".into()));
        }
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn gap(&self) -> SpectralGapParams {
        SpectralGapParams::from_mu0(self.mu0).expect("mu0 validated positive")
    }

    pub fn time_change(&self, group: &FuchsianGroup) -> horo_core::error::Result<TimeChange> {
        TimeChange::new(self.alpha.build(group)?, self.epsilon, self.gap())
    }
}
