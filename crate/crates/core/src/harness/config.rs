//! Flat `key=value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::model::RewardSpec;
use crate::partition::{best_case_exponent, worst_case_exponent};
use crate::sim::{ArrivalKind, FeatureMap, PopularityThresholds, SimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Run,
    Oracle,
    Regret,
    Bench,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "run" => Mode::Run,
            "oracle" => Mode::Oracle,
            "regret" => Mode::Regret,
            "bench" => Mode::Bench,
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Run => "run",
            Mode::Oracle => "oracle",
            Mode::Regret => "regret",
            Mode::Bench => "bench",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    Binary,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Benchmark {
    AllUnpopular,
    AllPopular,
    ViewBased,
    Perfect,
}

impl Benchmark {
    pub fn key(self) -> &'static str {
        match self {
            Benchmark::AllUnpopular => "au",
            Benchmark::AllPopular => "ap",
            Benchmark::ViewBased => "vp",
            Benchmark::Perfect => "perfect",
        }
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "au" => Benchmark::AllUnpopular,
            "ap" => Benchmark::AllPopular,
            "vp" => Benchmark::ViewBased,
            "perfect" => Benchmark::Perfect,
            other => return Err(Error::Config(format!("unknown benchmark {other:?}"))),
        })
    }
}

/// Every experiment knob. Unset optional values resolve to defaults that
/// the manifest records explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub videos: Option<usize>,
    pub horizon: usize,
    pub popularity_levels: Levels,
    pub thresholds: Option<Vec<u64>>,
    pub w: f64,
    pub rewards: Option<Vec<f64>>,
    pub lambda: f64,
    pub split_scale: f64,
    pub split_exponent: Option<f64>,
    pub alpha: f64,
    pub period_views_feature: bool,
    pub view_cap: f64,
    pub brf_cap: f64,
    pub benchmarks: Vec<Benchmark>,
    pub vp_ages: Vec<usize>,
    pub trace_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub window: usize,
    pub arrival: ArrivalKind,
    pub regret_age: usize,
    pub world_file: Option<PathBuf>,
    pub world_horizon: usize,
    pub world_symbols: usize,
    pub embed_level: u32,
    pub dim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Run,
            seed: 1,
            videos: None,
            horizon: 100,
            popularity_levels: Levels::Binary,
            thresholds: None,
            w: 10.0,
            rewards: None,
            lambda: 0.01,
            split_scale: 1.0,
            split_exponent: None,
            alpha: 1.0,
            period_views_feature: false,
            view_cap: 200_000.0,
            brf_cap: 5_000.0,
            benchmarks: vec![
                Benchmark::AllUnpopular,
                Benchmark::AllPopular,
                Benchmark::ViewBased,
                Benchmark::Perfect,
            ],
            vp_ages: vec![25, 50, 75],
            trace_file: None,
            output_dir: None,
            window: 500,
            arrival: ArrivalKind::Worst,
            regret_age: 1,
            world_file: None,
            world_horizon: 2,
            world_symbols: 2,
            embed_level: 2,
            dim: 2,
        }
    }
}

/// Default corpus size when `videos` is unset and traces are synthetic.
pub const DEFAULT_VIDEOS: usize = 10_000;

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

fn optional<T>(value: &str, parse: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "videos" => self.videos = optional(value, |v| parse_value(key, v))?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "popularity_levels" => {
                self.popularity_levels = match value {
                    "binary" => Levels::Binary,
                    "refined" => Levels::Refined,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown popularity_levels {other:?}"
                        )))
                    }
                }
            }
            "thresholds" => self.thresholds = optional(value, |v| parse_list(key, v))?,
            "w" => self.w = parse_value(key, value)?,
            "rewards" => self.rewards = optional(value, |v| parse_list(key, v))?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "split_scale" => self.split_scale = parse_value(key, value)?,
            "split_exponent" => self.split_exponent = optional(value, |v| parse_value(key, v))?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "period_views_feature" => self.period_views_feature = parse_value(key, value)?,
            "view_cap" => self.view_cap = parse_value(key, value)?,
            "brf_cap" => self.brf_cap = parse_value(key, value)?,
            "benchmarks" => self.benchmarks = parse_list(key, value)?,
            "vp_ages" => self.vp_ages = parse_list(key, value)?,
            "trace_file" => self.trace_file = optional(value, |v| Ok(PathBuf::from(v)))?,
            "output_dir" => self.output_dir = optional(value, |v| Ok(PathBuf::from(v)))?,
            "window" => self.window = parse_value(key, value)?,
            "arrival" => self.arrival = value.parse()?,
            "regret_age" => self.regret_age = parse_value(key, value)?,
            "world_file" => self.world_file = optional(value, |v| Ok(PathBuf::from(v)))?,
            "world_horizon" => self.world_horizon = parse_value(key, value)?,
            "world_symbols" => self.world_symbols = parse_value(key, value)?,
            "embed_level" => self.embed_level = parse_value(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        match self.popularity_levels {
            Levels::Binary => 2,
            Levels::Refined => 3,
        }
    }

    pub fn resolved_thresholds(&self) -> Result<PopularityThresholds> {
        match &self.thresholds {
            Some(t) => PopularityThresholds::new(t.clone()),
            None => Ok(match self.popularity_levels {
                Levels::Binary => PopularityThresholds::binary(),
                Levels::Refined => PopularityThresholds::refined(),
            }),
        }
    }

    /// Correct-forecast rewards per status, lowest first.
    pub fn resolved_rewards(&self) -> Vec<f64> {
        match (&self.rewards, self.popularity_levels) {
            (Some(r), _) => r.clone(),
            (None, Levels::Binary) => vec![1.0, self.w],
            (None, Levels::Refined) => vec![1.0, 5.0, 10.0],
        }
    }

    pub fn reward_spec(&self, horizon: usize) -> Result<RewardSpec> {
        RewardSpec::diagonal(horizon, &self.resolved_rewards(), self.lambda)
    }

    pub fn features(&self) -> FeatureMap {
        FeatureMap {
            view_cap: self.view_cap,
            brf_cap: self.brf_cap,
            period_views: self.period_views_feature,
        }
    }

    pub fn context_dim(&self) -> usize {
        match self.mode {
            Mode::Regret | Mode::Oracle => self.dim,
            _ => self.features().dim(),
        }
    }

    /// Split exponent actually used: explicit, or the rate-optimal value for
    /// the arrival process (best case only in regret mode).
    pub fn resolved_split_exponent(&self) -> f64 {
        self.split_exponent
            .unwrap_or_else(|| match (self.mode, self.arrival) {
                (Mode::Regret, ArrivalKind::Best) => best_case_exponent(self.alpha),
                _ => worst_case_exponent(self.alpha, self.context_dim()),
            })
    }

    pub fn learner_config(&self, horizon: usize) -> LearnerConfig {
        LearnerConfig {
            dims: vec![self.context_dim(); horizon],
            split_scale: self.split_scale,
            split_exponent: Some(self.resolved_split_exponent()),
            alpha: self.alpha,
        }
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let mut params = match self.popularity_levels {
            Levels::Binary => SimParams::binary(self.horizon, derive_seed(self.seed, SEED_TRACES)),
            Levels::Refined => {
                SimParams::refined(self.horizon, derive_seed(self.seed, SEED_TRACES))
            }
        };
        params.thresholds = self.resolved_thresholds()?;
        params.features = self.features();
        params.validate()?;
        Ok(params)
    }

    /// Checks ranges and cross-field consistency before any work starts.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        if self.horizon == 0 {
            return invalid("horizon must be at least 1".into());
        }
        let thresholds = self
            .resolved_thresholds()
            .map_err(|e| Error::Validation(e.to_string()))?;
        if thresholds.levels() != self.levels() {
            return invalid(format!(
                "{} thresholds given for {} popularity levels",
                thresholds.values().len(),
                self.levels()
            ));
        }
        let rewards = self.resolved_rewards();
        if rewards.len() != self.levels() {
            return invalid(format!(
                "{} rewards given for {} levels",
                rewards.len(),
                self.levels()
            ));
        }
        if rewards.iter().any(|r| !(r.is_finite() && *r > 0.0))
            || !(self.lambda >= 0.0 && self.lambda.is_finite())
        {
            return invalid("rewards must be positive and lambda non-negative".into());
        }
        if !(self.split_scale > 0.0 && self.alpha > 0.0) {
            return invalid("split_scale and alpha must be positive".into());
        }
        if self
            .split_exponent
            .is_some_and(|p| !(p > 0.0 && p.is_finite()))
        {
            return invalid("split_exponent must be positive".into());
        }
        if !(self.view_cap > 0.0 && self.brf_cap > 0.0) {
            return invalid("feature caps must be positive".into());
        }
        if self.window == 0 {
            return invalid("window must be at least 1".into());
        }
        if let Some(&age) = self.vp_ages.iter().find(|&&a| a == 0 || a > self.horizon) {
            if self.benchmarks.contains(&Benchmark::ViewBased)
                && matches!(self.mode, Mode::Run | Mode::Bench)
            {
                return invalid(format!("VP age {age} outside 1..={}", self.horizon));
            }
        }
        if self.mode == Mode::Regret || self.mode == Mode::Oracle {
            if self.world_horizon == 0
                || self.regret_age == 0
                || self.regret_age > self.world_horizon
            {
                return invalid(format!(
                    "regret_age {} outside 1..={}",
                    self.regret_age, self.world_horizon
                ));
            }
            if !(1..=16).contains(&self.dim) || self.world_symbols == 0 {
                return invalid("dim must be in 1..=16 and world_symbols positive".into());
            }
            if self.embed_level as usize * self.dim > 12 {
                return invalid("embedding grid exceeds 4096 cells".into());
            }
        }
        Ok(())
    }

    /// Resolved configuration in key order, suitable for re-parsing.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let thresholds = self
            .resolved_thresholds()
            .map(|t| join(t.values()))
            .unwrap_or_else(|_| join(self.thresholds.as_deref().unwrap_or(&[])));
        let videos = match (self.videos, &self.trace_file) {
            (Some(k), _) => k.to_string(),
            (None, None) => DEFAULT_VIDEOS.to_string(),
            (None, Some(_)) => "auto".to_string(),
        };
        let benchmarks: Vec<&str> = self.benchmarks.iter().map(|b| b.key()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("videos", videos),
            ("horizon", self.horizon.to_string()),
            (
                "popularity_levels",
                match self.popularity_levels {
                    Levels::Binary => "binary",
                    Levels::Refined => "refined",
                }
                .to_string(),
            ),
            ("thresholds", thresholds),
            ("w", self.w.to_string()),
            ("rewards", join(&self.resolved_rewards())),
            ("lambda", self.lambda.to_string()),
            ("split_scale", self.split_scale.to_string()),
            ("split_exponent", self.resolved_split_exponent().to_string()),
            ("alpha", self.alpha.to_string()),
            (
                "period_views_feature",
                self.period_views_feature.to_string(),
            ),
            ("view_cap", self.view_cap.to_string()),
            ("brf_cap", self.brf_cap.to_string()),
            ("benchmarks", benchmarks.join(",")),
            ("vp_ages", join(&self.vp_ages)),
            ("trace_file", path(&self.trace_file)),
            ("output_dir", path(&self.output_dir)),
            ("window", self.window.to_string()),
            ("arrival", self.arrival.to_string()),
            ("regret_age", self.regret_age.to_string()),
            ("world_file", path(&self.world_file)),
            ("world_horizon", self.world_horizon.to_string()),
            ("world_symbols", self.world_symbols.to_string()),
            ("embed_level", self.embed_level.to_string()),
            ("dim", self.dim.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

pub(crate) const SEED_TRACES: u64 = 1;
pub(crate) const SEED_WORLD: u64 = 2;
pub(crate) const SEED_ARRIVALS: u64 = 3;
pub(crate) const SEED_OUTCOMES: u64 = 4;

/// Deterministic per-component seed (SplitMix64 finalizer over master and tag).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_text() {
        let c = ExperimentConfig::parse(
            "# sweep\nmode=bench\nw = 5\n\nvp_ages=10,20\nsplit_exponent=auto\n",
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Bench);
        assert_eq!(c.w, 5.0);
        assert_eq!(c.vp_ages, vec![10, 20]);
        assert_eq!(c.split_exponent, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for text in ["colour=red", "w=ten", "mode=fly", "novalue"] {
            let e = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn manifest_reparses_to_same_resolution() {
        let c = ExperimentConfig::parse("popularity_levels=refined\nlambda=0.015\n").unwrap();
        let text: String = c
            .manifest()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again.manifest(), c.manifest());
        assert!(
            text.contains("split_exponent=4.372281323269014\n"),
            "{text}"
        );
    }

    #[test]
    fn resolved_exponent_follows_arrival_kind() {
        let mut c = ExperimentConfig::parse("mode=regret\ndim=2\n").unwrap();
        assert_eq!(c.resolved_split_exponent(), 4.0);
        c.arrival = ArrivalKind::Best;
        assert_eq!(c.resolved_split_exponent(), 3.0);
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let bad = [
            "vp_ages=101",
            "popularity_levels=refined\nthresholds=10000",
            "rewards=1,2,3",
            "window=0",
            "mode=regret\nregret_age=3",
            "lambda=-1",
        ];
        for text in bad {
            let e = ExperimentConfig::parse(text)
                .unwrap()
                .validate()
                .unwrap_err();
            assert!(matches!(e, Error::Validation(_)), "{text}: {e}");
        }
        ExperimentConfig::default().validate().unwrap();
    }
}
