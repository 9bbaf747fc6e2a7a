//! Simultaneous learning of every age's forecasting policy.
//!
//! Each age owns a [`PartitionState`] over its own context space. While a
//! video propagates, [`ForecastEngine::observe`] selects the best-estimated
//! action for each age in turn. Once the status is realized,
//! [`ForecastEngine::finalize`] feeds every action of every age a
//! counterfactual reward: a prediction earns `U(a, s, n)`, and waiting earns
//! the realized age `n + 1` reward under the actions actually selected later.
//! Predictions do not influence propagation, so these counterfactuals are
//! exact.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ContextVector, ForecastAction, PopularityStatus, PredictionOutcome, RewardSpec,
};
use crate::partition::{worst_case_exponent, ActionSet, CubeId, PartitionState, SplitRule};

/// Learner parameters shared by all ages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Context dimension per age, `dims[n - 1]` for age `n`.
    pub dims: Vec<usize>,
    /// `A`.
    pub split_scale: f64,
    /// `p`; when unset each age uses the worst-case exponent for `alpha` and its dimension.
    pub split_exponent: Option<f64>,
    /// Hölder exponent of the reward smoothness assumption.
    pub alpha: f64,
}

impl LearnerConfig {
    pub fn uniform(horizon: usize, dim: usize) -> Self {
        LearnerConfig {
            dims: vec![dim; horizon],
            split_scale: 1.0,
            split_exponent: None,
            alpha: 1.0,
        }
    }

    /// The split exponent used at `age`.
    pub fn exponent_for(&self, age: usize) -> f64 {
        self.split_exponent
            .unwrap_or_else(|| worst_case_exponent(self.alpha, self.dims[age - 1]))
    }

    /// Exploration-rate exponent `z = 2α/p` from the regret analysis. Not used
    /// by the learner itself; reported alongside results.
    pub fn exploration_exponent(&self, age: usize) -> f64 {
        2.0 * self.alpha / self.exponent_for(age)
    }
}

/// Work counters, for checking per-video cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Action estimates examined during selection.
    pub comparisons: u64,
    /// Estimate updates applied during finalization.
    pub updates: u64,
    pub arrivals: u64,
    pub splits: u64,
}

/// Learner for a single age.
#[derive(Debug, Clone)]
pub struct AgeLearner {
    pub age: usize,
    pub partition: PartitionState,
}

#[derive(Debug, Clone)]
struct PendingInstance {
    located: Vec<CubeId>,
    actions: Vec<ForecastAction>,
    issued: Option<(usize, PopularityStatus)>,
}

#[derive(Debug, Clone)]
pub struct ForecastEngine {
    spec: RewardSpec,
    config: LearnerConfig,
    learners: Vec<AgeLearner>,
    pending: HashMap<u64, PendingInstance>,
    counters: OpCounters,
}

impl ForecastEngine {
    pub fn new(spec: RewardSpec, config: LearnerConfig) -> Result<Self> {
        let horizon = spec.horizon();
        if config.dims.len() != horizon {
            return Err(Error::Config(format!(
                "{} context dimensions configured for horizon {horizon}",
                config.dims.len()
            )));
        }
        if !(config.alpha.is_finite() && config.alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha must be > 0, got {}",
                config.alpha
            )));
        }
        let learners = (1..=horizon)
            .map(|age| {
                let rule = SplitRule::new(config.split_scale, config.exponent_for(age))?;
                let actions = ActionSet::new(spec.levels(), age < horizon);
                Ok(AgeLearner {
                    age,
                    partition: PartitionState::new(config.dims[age - 1], rule, actions)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ForecastEngine {
            spec,
            config,
            learners,
            pending: HashMap::new(),
            counters: OpCounters::default(),
        })
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn learner(&self, age: usize) -> &AgeLearner {
        &self.learners[age - 1]
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Forecast issued so far for video `k`, as `(age, status)`.
    pub fn issued(&self, k: u64) -> Option<(usize, PopularityStatus)> {
        self.pending.get(&k).and_then(|p| p.issued)
    }

    /// Processes the age-`n` context of video `k` and returns the selected action.
    pub fn observe(&mut self, k: u64, n: usize, x: &ContextVector) -> Result<ForecastAction> {
        self.spec.check_age(n)?;
        let expected = self.pending.get(&k).map_or(1, |p| p.actions.len() + 1);
        if n != expected {
            return Err(Error::Protocol(format!(
                "video {k}: expected age {expected}, got {n}"
            )));
        }
        let learner = &mut self.learners[n - 1];
        let cube = learner.partition.locate(x)?;
        let action = learner.partition.best_action(cube);
        self.counters.comparisons += learner.partition.actions().len() as u64;
        if learner.partition.register_arrival(cube)? {
            self.counters.splits += 1;
        }
        self.counters.arrivals += 1;

        let pending = self.pending.entry(k).or_insert_with(|| PendingInstance {
            located: Vec::with_capacity(self.spec.horizon()),
            actions: Vec::with_capacity(self.spec.horizon()),
            issued: None,
        });
        pending.located.push(cube);
        pending.actions.push(action);
        if pending.issued.is_none() {
            if let Some(s) = action.status() {
                pending.issued = Some((n, s));
            }
        }
        Ok(action)
    }

    /// Realizes the status of video `k`, updates every age's estimates and
    /// returns the forecast outcome.
    pub fn finalize(&mut self, k: u64, s: PopularityStatus) -> Result<PredictionOutcome> {
        let horizon = self.spec.horizon();
        let pending = match self.pending.get(&k) {
            None => return Err(Error::Protocol(format!("video {k} is unknown"))),
            Some(p) if p.actions.len() < horizon => {
                return Err(Error::Protocol(format!(
                    "video {k}: finalize after {} of {horizon} ages",
                    p.actions.len()
                )))
            }
            Some(_) => self.pending.remove(&k).expect("present"),
        };
        let outcome = PredictionOutcome::from_actions(&pending.actions, s, &self.spec)?;
        let u_max = self.spec.u_max();
        for n in 1..=horizon {
            let cube = pending.located[n - 1];
            let partition = &mut self.learners[n - 1].partition;
            for a in partition.actions().iter().collect::<Vec<_>>() {
                let raw = match a {
                    ForecastAction::Predict(p) => self.spec.prediction_reward(p, s, n)?,
                    ForecastAction::Wait => outcome.age_rewards[n],
                };
                partition.update_estimate(cube, a, raw / u_max)?;
                self.counters.updates += 1;
            }
        }
        Ok(outcome)
    }

    /// Feeds a whole trace through `observe` and `finalize`.
    pub fn process(
        &mut self,
        k: u64,
        contexts: &[ContextVector],
        s: PopularityStatus,
    ) -> Result<PredictionOutcome> {
        for (i, x) in contexts.iter().enumerate() {
            self.observe(k, i + 1, x)?;
        }
        self.finalize(k, s)
    }

    /// Frozen copy of the current greedy policy.
    pub fn policy_snapshot(&self) -> PolicyView {
        PolicyView {
            partitions: self.learners.iter().map(|l| l.partition.clone()).collect(),
        }
    }

    /// Writes `manifest.json` plus one `age_<n>.csv` partition snapshot per age.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.pending.is_empty() {
            return Err(Error::Protocol(format!(
                "cannot save with {} videos in flight",
                self.pending.len()
            )));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = EngineManifest {
            reward: self.spec.clone(),
            learner: self.config.clone(),
            resolved_exponents: (1..=self.horizon())
                .map(|n| self.config.exponent_for(n))
                .collect(),
        };
        let path = dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        for l in &self.learners {
            let path = dir.join(format!("age_{}.csv", l.age));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            l.partition.write_snapshot(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EngineManifest = serde_json::from_str(&text).map_err(|e| {
            Error::parse(&path.display().to_string(), e.line() as u64, e.to_string())
        })?;
        let mut engine = ForecastEngine::new(manifest.reward, manifest.learner)?;
        for l in &mut engine.learners {
            let path = dir.join(format!("age_{}.csv", l.age));
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            l.partition = PartitionState::read_snapshot(
                std::io::BufReader::new(file),
                &path.display().to_string(),
                l.partition.dim(),
                l.partition.rule(),
                l.partition.actions(),
            )?;
        }
        Ok(engine)
    }
}

#[derive(Serialize, Deserialize)]
struct EngineManifest {
    reward: RewardSpec,
    learner: LearnerConfig,
    resolved_exponents: Vec<f64>,
}

/// Read-only greedy policy extracted from an engine.
#[derive(Debug, Clone)]
pub struct PolicyView {
    partitions: Vec<PartitionState>,
}

impl PolicyView {
    pub fn horizon(&self) -> usize {
        self.partitions.len()
    }

    pub fn action(&self, age: usize, x: &ContextVector) -> Result<ForecastAction> {
        let p = self
            .partitions
            .get(age.wrapping_sub(1))
            .ok_or(Error::InvalidAge {
                age,
                horizon: self.partitions.len(),
            })?;
        Ok(p.best_action(p.locate(x)?))
    }
}
