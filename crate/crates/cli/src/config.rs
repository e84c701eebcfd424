//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags.
//!
//! Resolution order, later wins: built-in defaults, the config file (from
//! `--config` or the `NOWCAST_CONFIG` environment variable), then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{config_err, CliError, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "NOWCAST_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Nowcast,
    Cv,
    Granger,
    Classify,
    TensorRank,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Fit => "fit",
            Command::Nowcast => "nowcast",
            Command::Cv => "cv",
            Command::Granger => "granger",
            Command::Classify => "classify",
            Command::TensorRank => "tensor-rank",
        })
    }
}

struct Key {
    name: &'static str,
    default: Option<&'static str>,
}

const fn key(name: &'static str, default: Option<&'static str>) -> Key {
    Key { name, default }
}

const MIDAS_KEYS: &[Key] = &[
    key("data", None),
    key("target", None),
    key("covariates", None),
    key("degrees", Some("3")),
    key("ar_lags", Some("1")),
    key("horizon", Some("0")),
    key("as_of", None),
    key("fill", Some("drop")),
    key("gamma", Some("0.5")),
    key("grid_size", Some("30")),
    key("grid_ratio", Some("0.01")),
    key("cv_gap", Some("1")),
    key("cv_subsample", None),
    key("cv_loss", Some("squared")),
    key("max_passes", Some("10000")),
    key("tolerance", Some("1e-8")),
    key("seed", None),
];

const LAMBDA_KEY: &[Key] = &[key("lambda", None)];

const GRANGER_KEYS: &[Key] = &[
    key("tested", None),
    key("nodewise_lambda", None),
    key("nodewise_gamma", Some("1")),
    key("kernel", Some("parzen")),
    key("regime", Some("subgaussian")),
    key("moments", None),
    key("bandwidth", None),
    key("level", Some("0.05")),
    key("singular", Some("error")),
];

const CLASSIFY_KEYS: &[Key] = &[
    key("data", None),
    key("label", Some("label")),
    key("lambda", Some("0")),
    key("intercept", Some("true")),
    key("max_iterations", Some("200000")),
    key("quartet", Some("symmetric")),
    key("loss_tp", Some("0")),
    key("loss_fp", Some("1")),
    key("loss_fn", Some("1")),
    key("loss_tn", Some("0")),
    key("benefit", None),
    key("detention_cost", None),
    key("recidivism_cost", None),
    key("group_weight", Some("1")),
];

const TENSOR_KEYS: &[Key] = &[
    key("data", None),
    key("k", Some("1")),
    key("cap", None),
    key("draws", Some("500")),
    key("rank", None),
    key("seed", None),
];

fn keys_for(command: Command) -> Vec<&'static Key> {
    let groups: &[&[Key]] = match command {
        Command::Fit | Command::Nowcast | Command::Granger => &[MIDAS_KEYS, LAMBDA_KEY],
        Command::Cv => &[MIDAS_KEYS],
        Command::Classify => &[CLASSIFY_KEYS],
        Command::TensorRank => &[TENSOR_KEYS],
    };
    let mut out: Vec<&Key> = groups.iter().flat_map(|g| g.iter()).collect();
    if command == Command::Granger {
        out.extend(GRANGER_KEYS);
    }
    out
}

fn is_known(name: &str) -> bool {
    [MIDAS_KEYS, LAMBDA_KEY, GRANGER_KEYS, CLASSIFY_KEYS, TENSOR_KEYS]
        .iter()
        .any(|g| g.iter().any(|k| k.name == name))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config_err(format!("{origin}:{}: expected `key = value`", n + 1));
        };
        let k = k.trim();
        if !is_known(k) {
            return config_err(format!("{origin}:{}: unknown key `{k}`", n + 1));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Parses a `KEY=VALUE` override flag.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let Some((k, v)) = s.split_once('=') else {
        return config_err(format!("override `{s}` is not of the form KEY=VALUE"));
    };
    let k = k.trim();
    if !is_known(k) {
        return config_err(format!("unknown key `{k}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Merges defaults, the file and the flag overrides. Keys that do not
    /// apply to `command` are ignored.
    pub fn resolve(
        command: Command,
        config_file: Option<&Path>,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let file_values = match config_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
                let mut m = parse_config_text(&text, &path.display().to_string())?;
                // input paths in a config file are relative to the file
                if let (Some(data), Some(dir)) = (m.get_mut("data"), path.parent()) {
                    if Path::new(data.as_str()).is_relative() {
                        *data = dir.join(data.as_str()).display().to_string();
                    }
                }
                m
            }
            None => BTreeMap::new(),
        };
        let mut values = BTreeMap::new();
        for k in keys_for(command) {
            let v = overrides
                .get(k.name)
                .or_else(|| file_values.get(k.name))
                .cloned()
                .or_else(|| k.default.map(str::to_string));
            if let Some(v) = v.filter(|v| !v.is_empty()) {
                values.insert(k.name.to_string(), v);
            }
        }
        for k in file_values.keys().chain(overrides.keys()) {
            if !values.contains_key(k) && !keys_for(command).iter().any(|s| s.name == k) {
                log::debug!("key `{k}` does not apply to `{command}`");
            }
        }
        Ok(Self { command, values })
    }

    /// The resolved key-value pairs, sorted by key.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| CliError::Config(format!("`{key}` is required for `{}`", self.command)))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("cannot parse `{key}` value `{v}`"))),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?;
        Ok(self.parse(key)?.expect("checked above"))
    }

    /// Existing input file named by `key`.
    pub fn input_path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        if !p.is_file() {
            return Err(CliError::MissingInput(p));
        }
        Ok(p)
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse::<u64>("seed")?
            .ok_or_else(|| CliError::Config(format!("`--seed` is required for `{}` with these settings", self.command)))
    }
}
