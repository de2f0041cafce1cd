//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, lists are comma separated.
//! Relative paths are resolved against the directory of the config file.
//! Unknown or repeated keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `source` | inferred | `csse`, `synthetic` or `none` |
//! | `region` | | country/region name in the CSSE tables |
//! | `confirmed`, `deaths` | | CSSE wide tables (source `csse`) |
//! | `population_table` | | `region,population` CSV |
//! | `population` | | initial population, overrides the table |
//! | `start_day`, `end_day` | `0`, last day | days since the first case |
//! | `stride` | `1` | keep every `stride`-th day |
//! | `windows` | empty | window joints in days |
//! | `substeps` | `10` | solver steps per observation interval |
//! | `lower`, `upper` | `0,0.2,0.1,0`, `5,0.25,0.2,0.01` | parameter box for `beta,epsilon,gamma,mu` |
//! | `tau` | `1e-6` | base proximal step |
//! | `tau_multipliers` | `100,1,1,0.01` | per-component multipliers of `tau` |
//! | `weights` | `balanced` | `balanced` or `lambda1,lambda2` |
//! | `tol`, `max_iters`, `divergence_factor` | `1e-4`, `5000`, `1000` | stopping rules |
//! | `initial_guess` | `0.5,0.2,0.1,0` | rough constant guess |
//! | `mu_from_data` | `true` | replace the guessed `mu` by the data-driven one |
//! | `control_tau`, `control_tol`, `control_max_iters` | fit values | optimizer for `control` |
//! | `unreachable_misfit` | `0.05` | schedule miss that counts as unreachable |
//! | `out` | `out` | output directory |
//! | `seed` | `0` | noise seed of synthetic data |
//! | `twin_theta` | | `beta,epsilon,gamma,mu`, or `day:beta,epsilon,gamma,mu; ...` pieces |
//! | `twin_days`, `twin_interval` | , `1` | synthetic horizon and reporting interval |
//! | `twin_population`, `twin_infected` | `1e6`, `100` | synthetic initial state |
//! | `twin_noise` | `0` | relative multiplicative noise |
//! | `theta`, `u0`, `days`, `birth` | , , , `0` | `simulate` inputs |

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use seir_control::control::step_sizes;
use seir_control::{LossWeights, OptimizerSettings, ParamBounds, ParamVec, StateVec};

use crate::error::{CliError, Result};

const TWIN_KEYS: [&str; 6] = [
    "twin_theta",
    "twin_days",
    "twin_interval",
    "twin_population",
    "twin_infected",
    "twin_noise",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Csse { confirmed: PathBuf, deaths: PathBuf },
    Synthetic(TwinSpec),
}

/// Model-generated data: piecewise-constant `theta` switching at the given days.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinSpec {
    pub pieces: Vec<(f64, ParamVec)>,
    pub days: f64,
    pub interval: f64,
    pub population: f64,
    pub infected: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPolicy {
    Balanced,
    Fixed(LossWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Where fit and control runs get their data; `simulate` needs none.
    pub source: Option<Source>,
    pub region: Option<String>,
    pub population_table: Option<PathBuf>,
    pub population: Option<f64>,
    pub start_day: f64,
    pub end_day: Option<f64>,
    pub stride: usize,
    pub windows: Vec<f64>,
    pub substeps: usize,
    pub settings: OptimizerSettings,
    pub weights: WeightPolicy,
    pub initial_guess: ParamVec,
    pub mu_from_data: bool,
    pub control_settings: OptimizerSettings,
    pub unreachable_misfit: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub theta: Option<ParamVec>,
    pub u0: Option<StateVec>,
    pub days: Option<f64>,
    pub birth: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses `text`; `origin` names the file in messages, `base` anchors relative paths.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut kv = Entries::read(text, origin)?;

        let source = match kv.take("source").map(|(l, v)| (l, v.to_ascii_lowercase())) {
            Some((_, v)) if v == "csse" || v == "synthetic" || v == "none" => v,
            Some((line, v)) => return Err(kv.err(line, format!("unknown source `{v}`"))),
            None if kv.has("confirmed") || kv.has("deaths") => "csse".into(),
            None if kv.has("twin_theta") => "synthetic".into(),
            None => "none".into(),
        };
        if source != "synthetic" {
            for key in TWIN_KEYS {
                if let Some((line, _)) = kv.take(key) {
                    return Err(kv.err(line, format!("`{key}` needs source = synthetic")));
                }
            }
        }
        if source != "csse" {
            for key in ["confirmed", "deaths"] {
                if let Some((line, _)) = kv.take(key) {
                    return Err(kv.err(line, format!("`{key}` needs source = csse")));
                }
            }
        }
        let source = match source.as_str() {
            "csse" => match (kv.path("confirmed", base)?, kv.path("deaths", base)?) {
                (Some(confirmed), Some(deaths)) => Some(Source::Csse { confirmed, deaths }),
                (c, _) => {
                    let missing = if c.is_none() { "confirmed" } else { "deaths" };
                    return Err(kv.err(0, format!("source csse needs `{missing}`")));
                }
            },
            "synthetic" => {
                let pieces = match kv.take("twin_theta") {
                    Some((line, v)) => parse_pieces(&v).map_err(|m| kv.err(line, m))?,
                    None => return Err(kv.err(0, "source synthetic needs `twin_theta`".into())),
                };
                let days = kv
                    .number("twin_days")?
                    .ok_or_else(|| kv.err(0, "source synthetic needs `twin_days`".into()))?;
                Some(Source::Synthetic(TwinSpec {
                    pieces,
                    days,
                    interval: kv.number("twin_interval")?.unwrap_or(1.0),
                    population: kv.number("twin_population")?.unwrap_or(1e6),
                    infected: kv.number("twin_infected")?.unwrap_or(100.0),
                    noise: kv.number("twin_noise")?.unwrap_or(0.0),
                }))
            }
            _ => None,
        };

        let region = kv.take("region").map(|(_, v)| v);
        let population_table = kv.path("population_table", base)?;
        let population = kv.number("population")?;
        let start_day = kv.number("start_day")?.unwrap_or(0.0);
        let end_day = kv.number("end_day")?;
        let stride = kv.integer("stride")?.unwrap_or(1);
        let windows = match kv.take("windows") {
            Some((line, v)) => parse_list(&v).map_err(|m| kv.err(line, m))?,
            None => Vec::new(),
        };
        let substeps = kv.integer("substeps")?.unwrap_or(seir_control::DEFAULT_SUBSTEPS);

        let defaults = OptimizerSettings::default();
        let lower = kv.params("lower")?.unwrap_or(defaults.bounds.lower);
        let upper = kv.params("upper")?.unwrap_or(defaults.bounds.upper);
        let bounds = ParamBounds::new(lower, upper).map_err(|e| kv.err(0, e.to_string()))?;
        let multipliers = kv.params("tau_multipliers")?;
        let scaled = |base: f64| match multipliers {
            Some(m) => m.map(|x| x * base),
            None => step_sizes(base),
        };
        let tau = kv.number("tau")?.unwrap_or(1e-6);
        let settings = OptimizerSettings {
            bounds,
            tau: scaled(tau),
            tol: kv.number("tol")?.unwrap_or(defaults.tol),
            max_iters: kv.integer("max_iters")?.unwrap_or(defaults.max_iters),
            divergence_factor: kv
                .number("divergence_factor")?
                .unwrap_or(defaults.divergence_factor),
        };
        settings.validate().map_err(|e| kv.err(0, e.to_string()))?;
        let control_settings = OptimizerSettings {
            tau: scaled(kv.number("control_tau")?.unwrap_or(tau)),
            tol: kv.number("control_tol")?.unwrap_or(settings.tol),
            max_iters: kv.integer("control_max_iters")?.unwrap_or(settings.max_iters),
            ..settings
        };
        control_settings
            .validate()
            .map_err(|e| kv.err(0, e.to_string()))?;

        let weights = match kv.take("weights") {
            None => WeightPolicy::Balanced,
            Some((_, v)) if v == "balanced" => WeightPolicy::Balanced,
            Some((line, v)) => {
                let l = parse_list(&v).map_err(|m| kv.err(line, m))?;
                if l.len() != 2 {
                    return Err(kv.err(line, "weights must be `balanced` or `lambda1,lambda2`".into()));
                }
                WeightPolicy::Fixed(LossWeights::new(l[0], l[1]).map_err(|e| kv.err(line, e.to_string()))?)
            }
        };

        let config = RunConfig {
            source,
            region,
            population_table,
            population,
            start_day,
            end_day,
            stride,
            windows,
            substeps,
            settings,
            weights,
            initial_guess: kv
                .params("initial_guess")?
                .unwrap_or(ParamVec::new(0.5, 0.2, 0.1, 0.0)),
            mu_from_data: kv.boolean("mu_from_data")?.unwrap_or(true),
            control_settings,
            unreachable_misfit: kv.number("unreachable_misfit")?.unwrap_or(0.05),
            out: kv
                .take("out")
                .map(|(_, v)| base.join(v))
                .unwrap_or_else(|| PathBuf::from("out")),
            seed: kv.integer("seed")?.unwrap_or(0) as u64,
            theta: kv.params("theta")?,
            u0: match kv.take("u0") {
                Some((line, v)) => {
                    let l = parse_list(&v).map_err(|m| kv.err(line, m))?;
                    let arr: [f64; 5] = l
                        .try_into()
                        .map_err(|_| kv.err(line, "u0 needs five values S,E,I,R,D".into()))?;
                    Some(StateVec::from_array(arr))
                }
                None => None,
            },
            days: kv.number("days")?,
            birth: kv.number("birth")?.unwrap_or(0.0),
        };
        let err = kv.err(0, String::new());
        kv.finish()?;
        config.check().map_err(|message| match err {
            CliError::Config { path, line, .. } => CliError::Config { path, line, message },
            other => other,
        })?;
        Ok(config)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.substeps == 0 {
            return Err("substeps must be at least 1".into());
        }
        if self.stride == 0 {
            return Err("stride must be at least 1".into());
        }
        if let Some(end) = self.end_day {
            if end <= self.start_day {
                return Err(format!("end_day {end} must exceed start_day {}", self.start_day));
            }
        }
        if self.windows.windows(2).any(|w| w[1] <= w[0]) {
            return Err("windows must be strictly increasing".into());
        }
        if let Some(p) = self.population {
            if !(p > 0.0) {
                return Err(format!("population must be positive ({p})"));
            }
        }
        if let Some(Source::Synthetic(t)) = &self.source {
            if !(t.interval > 0.0 && t.days >= t.interval) {
                return Err("twin_days must be at least one twin_interval".into());
            }
            if !(t.noise >= 0.0) || !(t.infected > 0.0) || !(t.population > t.infected) {
                return Err("twin_noise must be nonnegative and 0 < twin_infected < twin_population".into());
            }
        }
        if !(self.birth >= 0.0) {
            return Err(format!("birth must be nonnegative ({})", self.birth));
        }
        Ok(())
    }

    /// The initial guess as used by the fit.
    pub fn rough_guess(&self) -> ParamVec {
        self.settings.bounds.clip(self.initial_guess)
    }
}

struct Entries<'a> {
    origin: &'a Path,
    map: HashMap<String, (usize, String)>,
}

impl<'a> Entries<'a> {
    fn read(text: &str, origin: &'a Path) -> Result<Self> {
        let mut map = HashMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config {
                path: origin.to_path_buf(),
                line: k + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_string();
            if map
                .insert(key.clone(), (k + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("`{key}` set twice")));
            }
        }
        Ok(Self { origin, map })
    }

    fn err(&self, line: usize, message: String) -> CliError {
        CliError::Config {
            path: self.origin.to_path_buf(),
            line,
            message,
        }
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(self.err(line, format!("`{key}` must be a number, got `{v}`"))),
            },
        }
    }

    fn integer(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(line, format!("`{key}` must be a nonnegative integer, got `{v}`"))),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(line, format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    fn params(&mut self, key: &str) -> Result<Option<ParamVec>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_params(&v)
                .map(Some)
                .map_err(|m| self.err(line, format!("`{key}`: {m}"))),
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> Result<Option<PathBuf>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                let p = base.join(&v);
                if !p.is_file() {
                    return Err(self.err(line, format!("`{key}`: no such file {}", p.display())));
                }
                Ok(Some(p))
            }
        }
    }

    fn finish(self) -> Result<()> {
        let mut left: Vec<_> = self.map.iter().map(|(k, (line, _))| (*line, k.clone())).collect();
        left.sort();
        match left.first() {
            Some((line, key)) => Err(self.err(*line, format!("unknown key `{key}`"))),
            None => Ok(()),
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{s}` is not a number"))
        })
        .collect()
}

fn parse_params(v: &str) -> std::result::Result<ParamVec, String> {
    let l = parse_list(v)?;
    let arr: [f64; 4] = l
        .try_into()
        .map_err(|_| "expected four values beta,epsilon,gamma,mu".to_string())?;
    let theta = ParamVec::from_array(arr);
    theta.validate().map_err(|e| e.to_string())?;
    Ok(theta)
}

fn parse_pieces(v: &str) -> std::result::Result<Vec<(f64, ParamVec)>, String> {
    if !v.contains(':') {
        return Ok(vec![(0.0, parse_params(v)?)]);
    }
    let mut pieces = Vec::new();
    for piece in v.split(';').filter(|p| !p.trim().is_empty()) {
        let (day, theta) = piece.split_once(':').ok_or_else(|| {
            format!(
                "piece `{}` needs the form day:beta,epsilon,gamma,mu",
                piece.trim()
            )
        })?;
        let day: f64 = day
            .trim()
            .parse()
            .map_err(|_| format!("`{}` is not a day", day.trim()))?;
        pieces.push((day, parse_params(theta)?));
    }
    if pieces.first().map(|p| p.0) != Some(0.0) {
        return Err("the first piece must start at day 0".into());
    }
    if pieces.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err("piece start days must increase".into());
    }
    Ok(pieces)
}
