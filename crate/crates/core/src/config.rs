//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Unknown or repeated keys are
//! configuration errors. Every key has a default, so an empty file is the
//! baseline calibration with the low preset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::agent::{Hyperparameters, Preset};
use crate::economy::{Preferences, Technology};
use crate::error::{Error, Result};
use crate::markov::{ArOneSpec, MarkovChain};
use crate::population::Generation;
use crate::rational::AssetGrid;

pub const DEFAULT_SEED: u64 = 42;

/// Explicit hyperparameter values that replace the preset's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HpOverrides {
    pub hidden_sizes: Option<Vec<usize>>,
    pub learn_freq: Option<usize>,
    pub external_share: Option<f64>,
    pub memory_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub adam_alpha: Option<f64>,
    pub polyak_lambda: Option<f64>,
    pub mu: Option<f64>,
    pub life_t: Option<usize>,
    pub childhood: Option<usize>,
    pub external_a_max: Option<f64>,
    pub a_cap: Option<f64>,
}

impl HpOverrides {
    pub fn apply(&self, mut hp: Hyperparameters) -> Hyperparameters {
        if let Some(v) = &self.hidden_sizes {
            hp.hidden_sizes = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { hp.$f = v; })*};
        }
        set!(learn_freq, external_share, memory_size, batch_size, adam_alpha, polyak_lambda, mu, life_t, childhood, external_a_max, a_cap);
        hp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub beta: f64,
    pub gamma: f64,
    pub capital_share: f64,
    pub depreciation: f64,
    pub rho: f64,
    pub sigma: f64,
    pub n_states: usize,
    pub tauchen_width: f64,
    pub grid_points: usize,
    pub grid_max: f64,
    pub preset: Preset,
    pub overrides: HpOverrides,
    pub n_agents: usize,
    pub asymptotic_agents: usize,
    pub seed: u64,
    pub generation: Generation,
    pub out: PathBuf,
    /// Parent panel for second-generation runs; defaults to the first-generation
    /// panel of the same preset in `out`.
    pub parent_panel: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prefs = Preferences::baseline();
        let tech = Technology::baseline();
        let ar = ArOneSpec::baseline();
        RunConfig {
            beta: prefs.beta,
            gamma: prefs.gamma,
            capital_share: tech.alpha,
            depreciation: tech.delta,
            rho: ar.rho,
            sigma: ar.sigma,
            n_states: ar.n_states,
            tauchen_width: ar.width,
            grid_points: 300,
            grid_max: 60.0,
            preset: Preset::Low,
            overrides: HpOverrides::default(),
            n_agents: 2000,
            asymptotic_agents: 5,
            seed: DEFAULT_SEED,
            generation: Generation::First,
            out: PathBuf::from("out"),
            parent_panel: None,
            threads: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("line {line}: bad value {value:?} for {key}: {e}")))
}

fn parse_sizes(key: &str, value: &str, line: usize) -> Result<Vec<usize>> {
    value.split(',').map(|s| parse(key, s.trim(), line)).collect()
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {line}: expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("line {line}: key {key} given twice")));
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let o = &mut self.overrides;
        match key {
            "beta" => self.beta = parse(key, v, line)?,
            "gamma" => self.gamma = parse(key, v, line)?,
            "capital_share" => self.capital_share = parse(key, v, line)?,
            "depreciation" => self.depreciation = parse(key, v, line)?,
            "rho" => self.rho = parse(key, v, line)?,
            "sigma" => self.sigma = parse(key, v, line)?,
            "n_states" => self.n_states = parse(key, v, line)?,
            "tauchen_width" => self.tauchen_width = parse(key, v, line)?,
            "grid_points" => self.grid_points = parse(key, v, line)?,
            "grid_max" => self.grid_max = parse(key, v, line)?,
            "preset" => self.preset = parse(key, v, line)?,
            "hidden_sizes" => o.hidden_sizes = Some(parse_sizes(key, v, line)?),
            "learn_freq" => o.learn_freq = Some(parse(key, v, line)?),
            "external_share" => o.external_share = Some(parse(key, v, line)?),
            "memory_size" => o.memory_size = Some(parse(key, v, line)?),
            "batch_size" => o.batch_size = Some(parse(key, v, line)?),
            "adam_alpha" => o.adam_alpha = Some(parse(key, v, line)?),
            "polyak_lambda" => o.polyak_lambda = Some(parse(key, v, line)?),
            "mu" => o.mu = Some(parse(key, v, line)?),
            "life_t" => o.life_t = Some(parse(key, v, line)?),
            "childhood" => o.childhood = Some(parse(key, v, line)?),
            "external_a_max" => o.external_a_max = Some(parse(key, v, line)?),
            "a_cap" => o.a_cap = Some(parse(key, v, line)?),
            "n_agents" => self.n_agents = parse(key, v, line)?,
            "asymptotic_agents" => self.asymptotic_agents = parse(key, v, line)?,
            "seed" => self.seed = parse(key, v, line)?,
            "generation" => self.generation = parse(key, v, line)?,
            "out" => self.out = PathBuf::from(v),
            "parent_panel" => self.parent_panel = Some(PathBuf::from(v)),
            "threads" => self.threads = Some(parse(key, v, line)?),
            _ => return Err(Error::config(format!("line {line}: unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.preferences()?;
        self.technology()?;
        self.ar_spec().validate()?;
        self.grid()?;
        self.hyperparameters().validate()?;
        self.asymptotic_hyperparameters().validate()?;
        if self.n_agents == 0 || self.asymptotic_agents == 0 {
            return Err(Error::config("agent counts must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be positive"));
        }
        Ok(())
    }

    pub fn preferences(&self) -> Result<Preferences> {
        Preferences::new(self.beta, self.gamma).map_err(to_config)
    }

    pub fn technology(&self) -> Result<Technology> {
        Technology::new(self.capital_share, self.depreciation).map_err(to_config)
    }

    pub fn ar_spec(&self) -> ArOneSpec {
        ArOneSpec {
            rho: self.rho,
            sigma: self.sigma,
            n_states: self.n_states,
            width: self.tauchen_width,
        }
    }

    pub fn chain(&self) -> Result<MarkovChain> {
        MarkovChain::tauchen(&self.ar_spec()).map_err(to_config)
    }

    pub fn grid(&self) -> Result<AssetGrid> {
        AssetGrid::squared(self.grid_points, self.grid_max).map_err(to_config)
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.overrides.apply(self.preset.hyperparameters())
    }

    pub fn asymptotic_hyperparameters(&self) -> Hyperparameters {
        self.overrides.apply(Hyperparameters::asymptotic())
    }

    /// Canonical rendering: every key with its resolved value, in fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let hp = self.hyperparameters();
        let sizes: Vec<String> = hp.hidden_sizes.iter().map(|h| h.to_string()).collect();
        let kv: Vec<(&str, String)> = vec![
            ("beta", format!("{:?}", self.beta)),
            ("gamma", format!("{:?}", self.gamma)),
            ("capital_share", format!("{:?}", self.capital_share)),
            ("depreciation", format!("{:?}", self.depreciation)),
            ("rho", format!("{:?}", self.rho)),
            ("sigma", format!("{:?}", self.sigma)),
            ("n_states", self.n_states.to_string()),
            ("tauchen_width", format!("{:?}", self.tauchen_width)),
            ("grid_points", self.grid_points.to_string()),
            ("grid_max", format!("{:?}", self.grid_max)),
            ("preset", self.preset.name().to_string()),
            ("hidden_sizes", sizes.join(",")),
            ("learn_freq", hp.learn_freq.to_string()),
            ("external_share", format!("{:?}", hp.external_share)),
            ("memory_size", hp.memory_size.to_string()),
            ("batch_size", hp.batch_size.to_string()),
            ("adam_alpha", format!("{:?}", hp.adam_alpha)),
            ("polyak_lambda", format!("{:?}", hp.polyak_lambda)),
            ("mu", format!("{:?}", hp.mu)),
            ("life_t", hp.life_t.to_string()),
            ("childhood", hp.childhood.to_string()),
            ("external_a_max", format!("{:?}", hp.external_a_max)),
            ("a_cap", format!("{:?}", hp.a_cap)),
            ("n_agents", self.n_agents.to_string()),
            ("asymptotic_agents", self.asymptotic_agents.to_string()),
            ("seed", self.seed.to_string()),
            ("generation", self.generation.number().to_string()),
        ];
        for (k, v) in kv {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(p) = &self.parent_panel {
            let _ = writeln!(s, "parent_panel = {}", p.display());
        }
        s
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::config(other.to_string()),
    }
}
