//! Run configuration.
//!
//! A configuration is a flat list of `key=value` pairs. Files hold one
//! pair per line with `#` comments; command-line flags use the same key
//! names and override file entries. [`RunConfig::effective`] renders the
//! complete resolved configuration in the same format, so it can be fed
//! back through `--config`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use igo_core::algorithms::{AlgorithmConfig, AlgorithmId, DomainExitPolicy};
use igo_core::objectives::ObjectiveId;
use igo_core::selection::SelectionScheme;

/// Every accepted key, in the order [`RunConfig::effective`] prints them.
pub const KEYS: [&str; 23] = [
    "algo",
    "objective",
    "dim",
    "lambda",
    "q",
    "weights",
    "dt",
    "dt-m",
    "dt-c",
    "steps",
    "seed",
    "target",
    "domain-exit",
    "uncertified",
    "exact-rewards",
    "track-j",
    "init-mean",
    "init-sigma",
    "out",
    "summary",
    "format",
    "log",
    "timing",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl From<igo_core::Error> for ConfigError {
    fn from(e: igo_core::Error) -> Self {
        match e {
            igo_core::Error::Config { field, message } => Self { field, message },
            other => Self::new("config", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Ordered `key -> value` pairs before interpretation.
pub type Pairs = BTreeMap<String, String>;

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Pairs, ConfigError> {
    let mut pairs = Pairs::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::new("config", format!("line {}: expected key=value, got `{line}`", n + 1))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        pairs.insert(key.to_string(), value.trim().to_string());
    }
    Ok(pairs)
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: AlgorithmConfig,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub format: Format,
    pub log: String,
    /// Record wall-clock time per step (makes traces non-reproducible).
    pub timing: bool,
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::new(field, format!("cannot parse `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::new(field, format!("expected true or false, got `{value}`"))),
    }
}

fn opt_string(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Interprets `pairs`; missing keys take their defaults. Harness runs
    /// default to the safeguarded domain-exit policy.
    pub fn from_pairs(pairs: &Pairs) -> Result<Self, ConfigError> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(k, "unknown key"));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let mut algo = AlgorithmConfig {
            domain_exit: DomainExitPolicy::Safeguard,
            ..AlgorithmConfig::default()
        };
        if let Some(v) = get("algo") {
            algo.algorithm = v.parse::<AlgorithmId>()?;
        }
        if let Some(v) = get("objective") {
            algo.objective = v
                .parse::<ObjectiveId>()
                .map_err(|_| ConfigError::new("objective", format!("unknown objective `{v}`")))?;
        }
        if let Some(v) = get("dim") {
            algo.dim = parse("dim", v)?;
        }
        if let Some(v) = get("lambda") {
            algo.lambda = parse("lambda", v)?;
        }
        match (get("q"), get("weights")) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("weights", "give either q or weights, not both"));
            }
            (Some(v), None) => {
                algo.scheme = SelectionScheme::truncation(parse("q", v)?)
                    .map_err(|e| ConfigError::new("q", e.to_string()))?;
            }
            (None, Some(v)) => {
                let bar = v
                    .split(',')
                    .map(|w| parse::<f64>("weights", w.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                algo.scheme = SelectionScheme::tabulated(bar)
                    .map_err(|e| ConfigError::new("weights", e.to_string()))?;
            }
            (None, None) => {}
        }
        if let Some(v) = get("dt") {
            algo.dt = parse("dt", v)?;
        }
        algo.dt_m = get("dt-m").map(|v| parse("dt-m", v)).transpose()?;
        algo.dt_c = get("dt-c").map(|v| parse("dt-c", v)).transpose()?;
        if let Some(v) = get("steps") {
            algo.max_steps = parse("steps", v)?;
        }
        if let Some(v) = get("seed") {
            algo.seed = parse("seed", v)?;
        }
        algo.target = get("target").map(|v| parse("target", v)).transpose()?;
        if let Some(v) = get("domain-exit") {
            algo.domain_exit = v.parse::<DomainExitPolicy>()?;
        }
        if let Some(v) = get("uncertified") {
            algo.uncertified = parse_bool("uncertified", v)?;
        }
        if let Some(v) = get("exact-rewards") {
            algo.exact_rewards = parse_bool("exact-rewards", v)?;
        }
        if let Some(v) = get("track-j") {
            algo.track_j = parse_bool("track-j", v)?;
        }
        if let Some(v) = get("init-mean") {
            algo.init_mean = parse("init-mean", v)?;
        }
        if let Some(v) = get("init-sigma") {
            algo.init_sigma = parse("init-sigma", v)?;
        }
        let format = match get("format").unwrap_or("csv") {
            "csv" => Format::Csv,
            "jsonl" => Format::Jsonl,
            other => return Err(ConfigError::new("format", format!("unknown format `{other}`"))),
        };
        let timing = get("timing").map(|v| parse_bool("timing", v)).transpose()?.unwrap_or(false);
        algo.validate()?;
        Ok(Self {
            algo,
            out: get("out").map(PathBuf::from),
            summary: get("summary").map(PathBuf::from),
            format,
            log: get("log").unwrap_or("warn").to_string(),
            timing,
        })
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn effective_pairs(&self) -> Vec<(&'static str, String)> {
        let a = &self.algo;
        let (q, weights) = match &a.scheme {
            SelectionScheme::Truncation(t) => (t.q().to_string(), String::new()),
            SelectionScheme::Tabulated(bar) => (
                String::new(),
                bar.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            ),
            // not reachable from a config, which always selects a scheme
            SelectionScheme::Uniform => (String::new(), String::new()),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("algo", a.algorithm.to_string()),
            ("objective", a.objective.to_string()),
            ("dim", a.dim.to_string()),
            ("lambda", a.lambda.to_string()),
            ("q", q),
            ("weights", weights),
            ("dt", a.dt.to_string()),
            ("dt-m", opt_string(&a.dt_m)),
            ("dt-c", opt_string(&a.dt_c)),
            ("steps", a.max_steps.to_string()),
            ("seed", a.seed.to_string()),
            ("target", opt_string(&a.target)),
            ("domain-exit", a.domain_exit.to_string()),
            ("uncertified", a.uncertified.to_string()),
            ("exact-rewards", a.exact_rewards.to_string()),
            ("track-j", a.track_j.to_string()),
            ("init-mean", a.init_mean.to_string()),
            ("init-sigma", a.init_sigma.to_string()),
            ("out", path(&self.out)),
            ("summary", path(&self.summary)),
            ("format", self.format.name().to_string()),
            ("log", self.log.clone()),
            ("timing", self.timing.to_string()),
        ]
    }

    /// The resolved configuration as a config file.
    pub fn effective(&self) -> String {
        let mut s = String::from("# effective configuration\n");
        for (k, v) in self.effective_pairs() {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_echo_round_trips() {
        let mut pairs = parse_pairs("# base\nalgo = pbil\ndim=16\nq=0.3 # trailing\nseed=4\n").unwrap();
        pairs.insert("seed".into(), "42".into());
        let cfg = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.algo.seed, 42);
        assert_eq!(cfg.algo.dim, 16);
        assert_eq!(cfg.algo.scheme.q(), Some(0.3));
        let echoed = RunConfig::from_pairs(&parse_pairs(&cfg.effective()).unwrap()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_pairs("algo=pbil\nlamda=10\n").unwrap_err();
        assert_eq!(err.field, "lamda");
    }

    #[test]
    fn large_steps_need_uncertified() {
        let mut pairs = Pairs::new();
        pairs.insert("dt".into(), "1.5".into());
        let err = RunConfig::from_pairs(&pairs).unwrap_err();
        assert_eq!(err.field, "dt");
        pairs.insert("uncertified".into(), "true".into());
        assert!(RunConfig::from_pairs(&pairs).is_ok());
    }

    #[test]
    fn tabulated_weights_parse() {
        let mut pairs = Pairs::new();
        pairs.insert("weights".into(), "0.5,0.3,0.2".into());
        let cfg = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.algo.scheme, SelectionScheme::tabulated(vec![0.5, 0.3, 0.2]).unwrap());
        pairs.insert("q".into(), "0.2".into());
        assert!(RunConfig::from_pairs(&pairs).is_err());
    }
}
