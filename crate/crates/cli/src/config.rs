//! Flat `key = value` configuration with dotted sections.
//!
//! Resolution is layered: built-in defaults, then a config file, then
//! command-line overrides, later assignments winning. Unknown keys are
//! errors. [`render`] writes every resolved value, and parsing the rendered
//! text gives back the same configuration.
//!
//! ```text
//! # comments run to the end of the line
//! ks.L = 22
//! noise.sigma_level_3 = 1.65
//! mrenkf.scale_5.lambda = 10
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use mrenkf::experiment::{FilterKind, TwinExperimentConfig};
use mrenkf::mrenkf::coarse_to_fine;
use mrenkf::{CovStrategy, ScaleSettings, Wavelet};

use crate::error::{CliError, CliResult};

/// One `key = value` pair and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub origin: String,
}

impl Assignment {
    pub fn new(
        key: impl Into<String>,
        value: impl Into<String>,
        origin: impl Into<String>,
    ) -> Self {
        Assignment {
            key: key.into(),
            value: value.into(),
            origin: origin.into(),
        }
    }

    /// Parses a `KEY=VALUE` command-line override.
    pub fn from_override(text: &str) -> CliResult<Self> {
        let (key, value) = text.split_once('=').ok_or_else(|| {
            CliError::ConfigGeneral(format!("override `{text}` is not KEY=VALUE"))
        })?;
        Ok(Assignment::new(key.trim(), value.trim(), "command line"))
    }
}

/// Keys that exist independently of the level counts, in rendering order.
const FIXED_KEYS: [&str; 20] = [
    "ks.L",
    "ks.n",
    "ks.dt",
    "experiment.horizon",
    "experiment.obs_stride",
    "experiment.filter",
    "experiment.seed",
    "experiment.markers",
    "ensemble.size",
    "ensemble.init_spread",
    "noise.wavelet",
    "noise.levels",
    "obs.variance",
    "enkf.rho",
    "mrenkf.wavelet",
    "mrenkf.levels",
    "mrenkf.order",
    "rank.sample_points",
    "rank.cycle_stride",
    "rank.use_forecast",
];

const SCALE_FIELDS: [&str; 4] = ["strategy", "lambda", "rho", "sample_count"];

/// Settings given to levels that have no tuned default, i.e. whenever the
/// filter depth differs from the built-in one.
pub const UNTUNED_SCALE: ScaleSettings = ScaleSettings {
    strategy: CovStrategy::Diagonal,
    lambda: 1.0,
    rho: 1.0,
    sample_count: 1000,
};

/// Splits config text into assignments. `#` starts a comment; blank lines
/// are ignored; a key may appear only once per source.
pub fn parse_text(text: &str, origin: &str) -> CliResult<Vec<Assignment>> {
    let mut out: Vec<Assignment> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::ConfigGeneral(format!("{origin}:{}: expected `key = value`", i + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::ConfigGeneral(format!(
                "{origin}:{}: empty key",
                i + 1
            )));
        }
        if out.iter().any(|a| a.key == key) {
            return Err(CliError::config(key, format!("assigned twice in {origin}")));
        }
        out.push(Assignment::new(
            key,
            value.trim(),
            format!("{origin}:{}", i + 1),
        ));
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> CliResult<Vec<Assignment>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_text(&text, &path.display().to_string())
}

fn value_error(a: &Assignment, what: &str) -> CliError {
    CliError::config(
        &a.key,
        format!("`{}` is not {what} ({})", a.value, a.origin),
    )
}

fn parse_f64(a: &Assignment) -> CliResult<f64> {
    a.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| value_error(a, "a finite number"))
}

fn parse_positive(a: &Assignment) -> CliResult<f64> {
    let v = parse_f64(a)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(value_error(a, "positive"))
    }
}

fn parse_non_negative(a: &Assignment) -> CliResult<f64> {
    let v = parse_f64(a)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(value_error(a, "non-negative"))
    }
}

fn parse_int<T: FromStr>(a: &Assignment) -> CliResult<T> {
    a.value
        .parse::<T>()
        .map_err(|_| value_error(a, "a non-negative integer"))
}

fn parse_with<T: FromStr>(a: &Assignment, what: &str) -> CliResult<T> {
    a.value.parse::<T>().map_err(|_| value_error(a, what))
}

fn parse_bool(a: &Assignment) -> CliResult<bool> {
    match a.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(value_error(a, "`true` or `false`")),
    }
}

fn parse_list<T: FromStr>(a: &Assignment, what: &str) -> CliResult<Vec<T>> {
    if a.value.trim().is_empty() {
        return Ok(Vec::new());
    }
    a.value
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| value_error(a, what)))
        .collect()
}

/// `noise.sigma_level_{i}` → `i`.
fn sigma_level(key: &str) -> Option<usize> {
    key.strip_prefix("noise.sigma_level_")?.parse().ok()
}

/// `mrenkf.scale_{i}.{field}` → `(i, field)`.
fn scale_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("mrenkf.scale_")?;
    let (level, field) = rest.split_once('.')?;
    let level = level.parse().ok()?;
    SCALE_FIELDS.contains(&field).then_some((level, field))
}

fn check_depth(key: &str, n: usize, levels: usize) -> CliResult<()> {
    if levels >= usize::BITS as usize || !n.is_multiple_of(1usize << levels) {
        return Err(CliError::config(
            key,
            format!("{levels} levels need ks.n divisible by 2^{levels}, but ks.n = {n}"),
        ));
    }
    Ok(())
}

/// Applies `assignments` on top of the defaults.
pub fn resolve(assignments: &[Assignment]) -> CliResult<TwinExperimentConfig> {
    let mut map: BTreeMap<&str, &Assignment> = BTreeMap::new();
    for a in assignments {
        map.insert(a.key.as_str(), a);
    }
    let defaults = TwinExperimentConfig::default();
    let mut cfg = defaults.clone();

    // level counts first: they decide which level keys exist
    if let Some(a) = map.get("ks.n") {
        cfg.ks.n = parse_int(a)?;
    }
    if let Some(a) = map.get("noise.levels") {
        cfg.noise.levels = parse_int(a)?;
        check_depth("noise.levels", cfg.ks.n, cfg.noise.levels)?;
    }
    if let Some(a) = map.get("mrenkf.levels") {
        cfg.mrenkf.levels = parse_int(a)?;
        check_depth("mrenkf.levels", cfg.ks.n, cfg.mrenkf.levels)?;
    }
    for key in map.keys() {
        let known = FIXED_KEYS.contains(key)
            || sigma_level(key).is_some_and(|i| (1..=cfg.noise.levels + 1).contains(&i))
            || scale_key(key).is_some_and(|(i, _)| (1..=cfg.mrenkf.levels + 1).contains(&i));
        if !known {
            return Err(CliError::config(
                *key,
                format!("unknown key ({})", map[key].origin),
            ));
        }
    }
    if cfg.noise.levels != defaults.noise.levels {
        cfg.noise.sigmas = vec![f64::NAN; cfg.noise.levels + 1];
    }
    if cfg.mrenkf.levels != defaults.mrenkf.levels {
        cfg.mrenkf.scales = vec![UNTUNED_SCALE; cfg.mrenkf.levels + 1];
        cfg.mrenkf.order = coarse_to_fine(cfg.mrenkf.levels);
    }

    for (&key, &a) in &map {
        match key {
            "ks.L" => cfg.ks.l = parse_positive(a)?,
            "ks.n" | "noise.levels" | "mrenkf.levels" => {}
            "ks.dt" => cfg.ks.dt = parse_positive(a)?,
            "experiment.horizon" => cfg.horizon = parse_positive(a)?,
            "experiment.obs_stride" => cfg.obs_stride = parse_int(a)?,
            "experiment.filter" => cfg.filter = parse_with::<FilterKind>(a, "`enkf` or `mrenkf`")?,
            "experiment.seed" => cfg.seed = parse_int(a)?,
            "experiment.markers" => {
                cfg.markers = parse_list(a, "a comma-separated list of numbers")?
            }
            "ensemble.size" => cfg.ensemble_size = parse_int(a)?,
            "ensemble.init_spread" => cfg.init_spread = parse_non_negative(a)?,
            "noise.wavelet" => {
                cfg.noise.wavelet = parse_with::<Wavelet>(a, "a wavelet name (db1..db9)")?
            }
            "obs.variance" => {
                cfg.obs_variance = if a.value == "auto" {
                    None
                } else {
                    Some(parse_positive(a)?)
                }
            }
            "enkf.rho" => cfg.enkf_rho = parse_positive(a)?,
            "mrenkf.wavelet" => {
                cfg.mrenkf.wavelet = parse_with::<Wavelet>(a, "a wavelet name (db1..db9)")?
            }
            "mrenkf.order" => {
                cfg.mrenkf.order = parse_list(a, "a comma-separated list of level labels")?
            }
            "rank.sample_points" => cfg.rank.sample_points = parse_int(a)?,
            "rank.cycle_stride" => cfg.rank.cycle_stride = parse_int(a)?,
            "rank.use_forecast" => cfg.rank.use_forecast = parse_bool(a)?,
            _ => {
                if let Some(level) = sigma_level(key) {
                    cfg.noise.sigmas[cfg.noise.levels + 1 - level] = parse_non_negative(a)?;
                } else if let Some((level, field)) = scale_key(key) {
                    let s = &mut cfg.mrenkf.scales[cfg.mrenkf.levels + 1 - level];
                    match field {
                        "strategy" => {
                            s.strategy = parse_with::<CovStrategy>(a, "exact, diagonal or sampled")?
                        }
                        "lambda" => s.lambda = parse_positive(a)?,
                        "rho" => s.rho = parse_positive(a)?,
                        _ => s.sample_count = parse_int(a)?,
                    }
                }
            }
        }
    }

    if let Some(idx) = cfg.noise.sigmas.iter().position(|s| s.is_nan()) {
        let level = cfg.noise.levels + 1 - idx;
        return Err(CliError::config(
            format!("noise.sigma_level_{level}"),
            "required when noise.levels differs from the default",
        ));
    }
    check_depth("noise.levels", cfg.ks.n, cfg.noise.levels)?;
    check_depth("mrenkf.levels", cfg.ks.n, cfg.mrenkf.levels)?;
    let mut order = cfg.mrenkf.order.clone();
    order.sort_unstable();
    if order != (1..=cfg.mrenkf.levels + 1).collect::<Vec<_>>() {
        return Err(CliError::config(
            "mrenkf.order",
            format!(
                "must list each level 1..={} exactly once",
                cfg.mrenkf.levels + 1
            ),
        ));
    }
    for (idx, s) in cfg.mrenkf.scales.iter().enumerate() {
        if s.strategy == CovStrategy::Sampled && s.sample_count < 2 {
            let level = cfg.mrenkf.levels + 1 - idx;
            return Err(CliError::config(
                format!("mrenkf.scale_{level}.sample_count"),
                "sampled covariances need at least 2 draws",
            ));
        }
    }
    cfg.validate().map_err(|e| match e {
        mrenkf::Error::InvalidParameter {
            name,
            value,
            reason,
        } => CliError::config(key_path(name), format!("{value}: {reason}")),
        other => CliError::ConfigGeneral(other.to_string()),
    })?;
    Ok(cfg)
}

/// Config key for a parameter name reported by the core validators; the
/// remaining names already are key paths.
fn key_path(name: &str) -> &str {
    match name {
        "obs_stride" => "experiment.obs_stride",
        "horizon" => "experiment.horizon",
        "obs_variance" => "obs.variance",
        "noise.sigma" => "noise.sigma_level_*",
        _ => name,
    }
}

fn list<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Every resolved value as ordered `(key, value)` pairs.
pub fn to_pairs(cfg: &TwinExperimentConfig) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| out.push((k.to_string(), v));
    push("ks.L", cfg.ks.l.to_string());
    push("ks.n", cfg.ks.n.to_string());
    push("ks.dt", cfg.ks.dt.to_string());
    push("experiment.horizon", cfg.horizon.to_string());
    push("experiment.obs_stride", cfg.obs_stride.to_string());
    push("experiment.filter", cfg.filter.to_string());
    push("experiment.seed", cfg.seed.to_string());
    push("experiment.markers", list(&cfg.markers));
    push("ensemble.size", cfg.ensemble_size.to_string());
    push("ensemble.init_spread", cfg.init_spread.to_string());
    push("noise.wavelet", cfg.noise.wavelet.to_string());
    push("noise.levels", cfg.noise.levels.to_string());
    for (idx, s) in cfg.noise.sigmas.iter().enumerate() {
        let level = cfg.noise.levels + 1 - idx;
        push(&format!("noise.sigma_level_{level}"), s.to_string());
    }
    push(
        "obs.variance",
        cfg.obs_variance
            .map_or_else(|| "auto".to_string(), |v| v.to_string()),
    );
    push("enkf.rho", cfg.enkf_rho.to_string());
    push("mrenkf.wavelet", cfg.mrenkf.wavelet.to_string());
    push("mrenkf.levels", cfg.mrenkf.levels.to_string());
    push("mrenkf.order", list(&cfg.mrenkf.order));
    for (idx, s) in cfg.mrenkf.scales.iter().enumerate() {
        let level = cfg.mrenkf.levels + 1 - idx;
        push(
            &format!("mrenkf.scale_{level}.strategy"),
            s.strategy.to_string(),
        );
        push(
            &format!("mrenkf.scale_{level}.lambda"),
            s.lambda.to_string(),
        );
        push(&format!("mrenkf.scale_{level}.rho"), s.rho.to_string());
        push(
            &format!("mrenkf.scale_{level}.sample_count"),
            s.sample_count.to_string(),
        );
    }
    push("rank.sample_points", cfg.rank.sample_points.to_string());
    push("rank.cycle_stride", cfg.rank.cycle_stride.to_string());
    push("rank.use_forecast", cfg.rank.use_forecast.to_string());
    out
}

/// The resolved configuration as config-file text.
pub fn render(cfg: &TwinExperimentConfig) -> String {
    let mut s = String::from("# fully resolved configuration\n");
    for (k, v) in to_pairs(cfg) {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}
