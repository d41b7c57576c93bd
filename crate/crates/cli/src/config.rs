use std::collections::BTreeMap;
use std::path::PathBuf;

use oseen_core::assembly::{Method, QuadratureDegrees};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}` ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("key `{0}`: list is empty")]
    EmptyList(String),
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

/// Which parameter a sweep varies; every other parameter stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Mu,
    Delta0,
}

impl Sweep {
    pub fn key(self) -> &'static str {
        match self {
            Sweep::Mu => "mu",
            Sweep::Delta0 => "delta0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: u32,
    pub methods: Vec<Method>,
    pub sigmas: Vec<f64>,
    pub mus: Vec<f64>,
    /// `None` selects each method's default.
    pub delta0s: Option<Vec<f64>>,
    pub first_level: usize,
    pub last_level: usize,
    pub n: usize,
    pub jitter: f64,
    pub mesh_file: Option<PathBuf>,
    pub degrees: QuadratureDegrees,
    pub tolerance: f64,
    pub out: PathBuf,
    pub sweep: Option<Sweep>,
    pub big: bool,
    /// When false, `wall_ms` is written as 0 so repeated runs are byte-identical.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: 2,
            methods: Method::ALL.to_vec(),
            sigmas: vec![1.0],
            mus: vec![1e-5],
            delta0s: None,
            first_level: 1,
            last_level: 4,
            n: 4,
            jitter: 0.2,
            mesh_file: None,
            degrees: QuadratureDegrees::default(),
            tolerance: 1e-10,
            out: PathBuf::from("results"),
            sweep: None,
            big: false,
            timing: true,
        }
    }
}

pub const KEYS: &[&str] = &[
    "example",
    "method",
    "sigma",
    "mu",
    "delta0",
    "levels",
    "n",
    "jitter",
    "mesh_file",
    "volume_degree",
    "error_degree",
    "edge_degree",
    "tol",
    "out",
    "sweep",
    "big",
    "timing",
];

/// Largest level allowed without `big`.
pub const MAX_DEFAULT_LEVEL: usize = 4;

fn decades(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|e| 10f64.powi(e)).collect()
}

impl RunConfig {
    pub fn levels(&self) -> Vec<usize> {
        (self.first_level..=self.last_level).collect()
    }

    pub fn delta0s_for(&self, method: Method) -> Vec<f64> {
        match &self.delta0s {
            Some(list) => list.clone(),
            None => vec![method.default_delta0()],
        }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        pairs.push((normalize_key(key), value.trim().to_string()));
    }
    Ok(pairs)
}

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| bad(key, value, e))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(ConfigError::EmptyList(key.to_string()));
    }
    items.into_iter().map(|s| scalar(key, s)).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn level_range(key: &str, value: &str) -> Result<(usize, usize), ConfigError> {
    let (a, b) = match value.split_once("..") {
        Some((a, b)) => (a, b),
        None => (value, value),
    };
    let first: usize = scalar(key, a)?;
    let last: usize = scalar(key, b)?;
    Ok((first, last))
}

/// Resolves a config from file text and flag overrides. Both use the same
/// keys; hyphens and underscores are interchangeable; later entries win.
pub fn parse_config(file_text: &str, flags: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut merged: BTreeMap<String, String> = BTreeMap::new();
    for (key, value) in parse_lines(file_text)?
        .into_iter()
        .chain(flags.iter().map(|(k, v)| (normalize_key(k), v.trim().to_string())))
    {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        merged.insert(key, value);
    }

    let mut config = RunConfig::default();
    let mut levels_given = false;
    for (key, value) in &merged {
        let (k, v) = (key.as_str(), value.as_str());
        match k {
            "example" => config.example = scalar(k, v)?,
            "method" => config.methods = list(k, v)?,
            "sigma" => config.sigmas = list(k, v)?,
            "mu" => config.mus = list(k, v)?,
            "delta0" => config.delta0s = Some(list(k, v)?),
            "levels" => {
                (config.first_level, config.last_level) = level_range(k, v)?;
                levels_given = true;
            }
            "n" => config.n = scalar(k, v)?,
            "jitter" => config.jitter = scalar(k, v)?,
            "mesh_file" => config.mesh_file = Some(PathBuf::from(v)),
            "volume_degree" => config.degrees.volume = scalar(k, v)?,
            "error_degree" => config.degrees.error = scalar(k, v)?,
            "edge_degree" => config.degrees.edge = scalar(k, v)?,
            "tol" => config.tolerance = scalar(k, v)?,
            "out" => config.out = PathBuf::from(v),
            "sweep" => {
                config.sweep = match v.to_ascii_lowercase().as_str() {
                    "mu" => Some(Sweep::Mu),
                    "delta0" => Some(Sweep::Delta0),
                    "" | "none" => None,
                    _ => return Err(bad(k, v, "expected mu or delta0")),
                }
            }
            "big" => config.big = boolean(k, v)?,
            "timing" => config.timing = boolean(k, v)?,
            _ => unreachable!("key list checked above"),
        }
    }

    if config.big && !levels_given {
        config.last_level = 5;
    }
    match config.sweep {
        Some(Sweep::Mu) if !merged.contains_key("mu") => config.mus = decades(-6, 0),
        Some(Sweep::Delta0) if !merged.contains_key("delta0") => config.delta0s = Some(decades(-5, 3)),
        _ => {}
    }
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    if !(1..=4).contains(&config.example) {
        return Err(invalid("example", format!("{} is not in 1..=4", config.example)));
    }
    if config.first_level == 0 || config.first_level > config.last_level {
        return Err(invalid(
            "levels",
            format!(
                "{}..{} is not a range of levels >= 1",
                config.first_level, config.last_level
            ),
        ));
    }
    if config.last_level > MAX_DEFAULT_LEVEL && !config.big {
        return Err(invalid(
            "levels",
            format!("levels above {MAX_DEFAULT_LEVEL} need `big`"),
        ));
    }
    if let Some(mu) = config.mus.iter().find(|&&mu| !(mu > 0.0 && mu.is_finite())) {
        return Err(invalid("mu", format!("{mu} must be positive")));
    }
    if let Some(s) = config.sigmas.iter().find(|&&s| !(s >= 0.0 && s.is_finite())) {
        return Err(invalid("sigma", format!("{s} must be nonnegative")));
    }
    if let Some(d) = config.delta0s.iter().flatten().find(|&&d| !(d >= 0.0 && d.is_finite())) {
        return Err(invalid("delta0", format!("{d} must be nonnegative")));
    }
    if config.n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(0.0..=0.3).contains(&config.jitter) {
        return Err(invalid("jitter", format!("{} outside [0, 0.3]", config.jitter)));
    }
    if !(config.tolerance > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_input_gives_defaults() {
        let config = parse_config("", &[]).unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.n, 4);
        assert_eq!(config.jitter, 0.2);
        assert_eq!(config.levels(), vec![1, 2, 3, 4]);
        assert_eq!(config.delta0s_for(Method::SvSupg), vec![0.25]);
        assert_eq!(config.delta0s_for(Method::SvLsvs), vec![0.006]);
        assert_eq!(
            config.degrees,
            QuadratureDegrees {
                volume: 8,
                error: 10,
                edge: 7
            }
        );
        assert_eq!(config.tolerance, 1e-10);
    }

    #[test]
    fn flag_overrides_file() {
        let config = parse_config("mu = 1e-5\n", &flags(&[("mu", "1e-3")])).unwrap();
        assert_eq!(config.mus, vec![1e-3]);
    }

    #[test]
    fn method_list() {
        let config = parse_config("method = lsvs,supg,sv", &[]).unwrap();
        assert_eq!(config.methods, vec![Method::SvLsvs, Method::SvSupg, Method::Sv]);
    }

    #[test]
    fn comments_blank_lines_and_hyphens() {
        let text = "# study\n\nexample = 3   # convection along y\nmesh-file = base.mesh\nlevels = 2..3\n";
        let config = parse_config(text, &[]).unwrap();
        assert_eq!(config.example, 3);
        assert_eq!(config.mesh_file, Some(PathBuf::from("base.mesh")));
        assert_eq!(config.levels(), vec![2, 3]);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            parse_config("colour = red", &[]),
            Err(ConfigError::UnknownKey("colour".into()))
        );
        assert!(matches!(
            parse_config("mu = fast", &[]),
            Err(ConfigError::BadValue { key, .. }) if key == "mu"
        ));
        assert_eq!(
            parse_config("method = ,", &[]),
            Err(ConfigError::EmptyList("method".into()))
        );
        assert!(matches!(
            parse_config("just words", &[]),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(parse_config("mu = -1", &[]), Err(ConfigError::Invalid { key, .. }) if key == "mu"));
        assert!(matches!(
            parse_config("levels = 3..1", &[]),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(
            parse_config("delta0 = -0.1", &[]),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn big_extends_default_levels_only() {
        assert!(parse_config("levels = 1..5", &[]).is_err());
        assert_eq!(parse_config("big = true", &[]).unwrap().last_level, 5);
        let config = parse_config("levels = 2..3", &flags(&[("big", "")])).unwrap();
        assert_eq!(config.levels(), vec![2, 3]);
    }

    #[test]
    fn sweep_defaults() {
        let config = parse_config("sweep = delta0", &[]).unwrap();
        let d = config.delta0s.unwrap();
        assert_eq!(d.len(), 9);
        assert_eq!((d[0], d[8]), (1e-5, 1e3));
        let config = parse_config("sweep = mu\nmu = 1e-2", &[]).unwrap();
        assert_eq!(config.mus, vec![1e-2]);
        let config = parse_config("sweep = mu", &[]).unwrap();
        assert_eq!(config.mus.len(), 7);
    }
}
