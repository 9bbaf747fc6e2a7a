//! Single-age regret against a discrete world with known optimum.
//!
//! The world's age-`n` symbols are laid out on the cells of a dyadic grid,
//! so a context in `[0,1]^d` identifies a symbol. The learner under test
//! acts at age `n` only; later ages follow the solver's optimal policy, so
//! the per-context optimum `μ*` is exact.

use std::fs::File;
use std::io::BufReader;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ContextVector, ForecastAction};
use crate::oracle::{
    action_value_table, conditional_action_reward, random_world, solve, DiscreteWorldModel,
    TabularPolicy, WorldOutcome,
};
use crate::partition::{
    worst_case_regret_exponent, ActionSet, CubeId, Hypercube, PartitionState, SplitRule,
};
use crate::sim::{generate_arrival_contexts, ArrivalKind};

use super::config::{
    derive_seed, ExperimentConfig, Mode, SEED_ARRIVALS, SEED_OUTCOMES, SEED_WORLD,
};
use super::report::{PolicyEntry, RegretFit, RegretPoint, Report};

/// A discrete world with its age-`n` symbols mapped onto grid cells.
#[derive(Debug, Clone)]
pub struct EmbeddedWorld {
    model: DiscreteWorldModel,
    age: usize,
    level: u32,
    dim: usize,
    optimal: TabularPolicy,
    actions: ActionSet,
    /// Conditional normalized action values per age-`n` symbol; `None` if unreachable.
    values: Vec<Option<Vec<f64>>>,
    /// Outcomes with the given age-`n` symbol and their cumulative probabilities.
    by_symbol: Vec<(Vec<usize>, Vec<f64>)>,
}

impl EmbeddedWorld {
    pub fn new(model: DiscreteWorldModel, age: usize, level: u32, dim: usize) -> Result<Self> {
        model.reward().check_age(age)?;
        let optimal = solve(&model)?;
        let actions = model.action_set(age);
        let table = action_value_table(&model, &optimal);
        let u_max = model.reward().u_max();
        let symbols = model.alphabet(age).len();
        let values = (0..symbols)
            .map(|x| {
                model.is_reachable(age, x).then(|| {
                    let m = model.marginal(age, x);
                    table[age - 1][x].iter().map(|v| v / m / u_max).collect()
                })
            })
            .collect();
        let mut by_symbol = vec![(Vec::new(), Vec::new()); symbols];
        for (i, o) in model.outcomes().iter().enumerate() {
            let (idx, cum): &mut (Vec<usize>, Vec<f64>) = &mut by_symbol[o.contexts[age - 1]];
            if o.probability > 0.0 {
                let total = cum.last().copied().unwrap_or(0.0) + o.probability;
                idx.push(i);
                cum.push(total);
            }
        }
        Ok(EmbeddedWorld {
            model,
            age,
            level,
            dim,
            optimal,
            actions,
            values,
            by_symbol,
        })
    }

    pub fn model(&self) -> &DiscreteWorldModel {
        &self.model
    }

    pub fn optimal_policy(&self) -> &TabularPolicy {
        &self.optimal
    }

    pub fn actions(&self) -> ActionSet {
        self.actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        1usize << (self.level as usize * self.dim)
    }

    /// Symbol of the grid cell containing `x`; cells wrap around the alphabet.
    pub fn symbol(&self, x: &[f64]) -> usize {
        let cube = Hypercube::containing(x, self.level);
        let side = 1usize << self.level;
        let cell = cube
            .coords
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * side + c as usize);
        cell % self.model.alphabet(self.age).len()
    }

    /// Center of the first cell carrying `symbol`.
    pub fn center(&self, symbol: usize) -> ContextVector {
        let side = 1usize << self.level;
        let mut cell = symbol;
        let coords = (0..self.dim)
            .map(|_| {
                let c = cell % side;
                cell /= side;
                (c as f64 + 0.5) / side as f64
            })
            .collect();
        ContextVector::new(coords).expect("cell centers are inside the unit cube")
    }

    /// Normalized conditional value of every action for `symbol`.
    pub fn action_values(&self, symbol: usize) -> Result<&[f64]> {
        self.values[symbol].as_deref().ok_or_else(|| {
            Error::GroundTruth(format!(
                "no optimal value for symbol {symbol} at age {}",
                self.age
            ))
        })
    }

    pub fn optimal_value(&self, symbol: usize) -> Result<f64> {
        let a = self.optimal.action(self.age, symbol);
        Ok(self.action_values(symbol)?[self.actions.index(a).expect("valid action")])
    }

    fn sample<R: Rng + ?Sized>(&self, symbol: usize, rng: &mut R) -> &WorldOutcome {
        let (idx, cum) = &self.by_symbol[symbol];
        let u = rng.random::<f64>() * cum.last().expect("reachable symbol");
        let i = cum.partition_point(|&c| c <= u).min(idx.len() - 1);
        &self.model.outcomes()[idx[i]]
    }

    /// Normalized realized age-`n` reward of every action on one outcome.
    fn realized(&self, o: &WorldOutcome) -> Vec<f64> {
        let reward = self.model.reward();
        let u_max = reward.u_max();
        let mut later = None;
        for n in (self.age + 1..=self.model.horizon()).rev() {
            if let ForecastAction::Predict(a) = self.optimal.action(n, o.contexts[n - 1]) {
                later = Some(reward.prediction_reward(a, o.status, n).expect("valid age"));
            }
        }
        self.actions
            .iter()
            .map(|a| match a {
                ForecastAction::Predict(p) => reward.prediction_reward(p, o.status, self.age).expect("valid age"),
                ForecastAction::Wait => later.expect("optimal policy predicts by the horizon"),
            } / u_max)
            .collect()
    }
}

/// Chooses an action for an arrival and learns from its realized rewards.
pub trait ActionSelector {
    fn select(&mut self, x: &ContextVector, symbol: usize) -> Result<ForecastAction>;
    /// Full-information feedback: normalized reward of every action, in action-set order.
    fn observe(&mut self, rewards: &[f64]) -> Result<()>;
}

/// The adaptive-partition learner for one age.
pub struct PartitionSelector {
    partition: PartitionState,
    current: Option<CubeId>,
}

impl PartitionSelector {
    pub fn new(dim: usize, rule: SplitRule, actions: ActionSet) -> Result<Self> {
        Ok(PartitionSelector {
            partition: PartitionState::new(dim, rule, actions)?,
            current: None,
        })
    }

    pub fn partition(&self) -> &PartitionState {
        &self.partition
    }
}

impl ActionSelector for PartitionSelector {
    fn select(&mut self, x: &ContextVector, _symbol: usize) -> Result<ForecastAction> {
        let id = self.partition.locate(x)?;
        let a = self.partition.best_action(id);
        self.partition.register_arrival(id)?;
        self.current = Some(id);
        Ok(a)
    }

    fn observe(&mut self, rewards: &[f64]) -> Result<()> {
        let id = self
            .current
            .take()
            .ok_or_else(|| Error::Protocol("feedback without a selection".into()))?;
        let actions = self.partition.actions();
        for (a, &r) in actions.iter().zip(rewards) {
            self.partition.update_estimate(id, a, r)?;
        }
        Ok(())
    }
}

/// Always plays the ground-truth best (or worst) action.
pub struct OracleSelector<'a> {
    world: &'a EmbeddedWorld,
    worst: bool,
}

impl<'a> OracleSelector<'a> {
    pub fn best(world: &'a EmbeddedWorld) -> Self {
        OracleSelector {
            world,
            worst: false,
        }
    }

    pub fn worst(world: &'a EmbeddedWorld) -> Self {
        OracleSelector { world, worst: true }
    }
}

impl ActionSelector for OracleSelector<'_> {
    fn select(&mut self, _x: &ContextVector, symbol: usize) -> Result<ForecastAction> {
        if !self.worst {
            return Ok(self.world.optimal.action(self.world.age, symbol));
        }
        let values = self.world.action_values(symbol)?;
        let mut pick = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[pick] {
                pick = i;
            }
        }
        Ok(self.world.actions.action(pick))
    }

    fn observe(&mut self, _rewards: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Cumulative pseudo-regret `Σ μ*(x) − μ(x, a_k)` and realized regret
/// `Σ μ*(x) − r_k` after each arrival, in normalized reward units.
pub fn run_regret<S: ActionSelector + ?Sized, R: Rng + ?Sized>(
    world: &EmbeddedWorld,
    arrivals: &[ContextVector],
    selector: &mut S,
    rng: &mut R,
) -> Result<Vec<RegretPoint>> {
    let mut series = Vec::with_capacity(arrivals.len());
    let (mut pseudo, mut realized) = (0.0, 0.0);
    for (k, x) in arrivals.iter().enumerate() {
        if x.dim() != world.dim {
            return Err(Error::Contract(format!(
                "arrival of dimension {} for a {}-d world",
                x.dim(),
                world.dim
            )));
        }
        let symbol = world.symbol(x.coords());
        let best = world.optimal_value(symbol)?;
        let a = selector.select(x, symbol)?;
        let i = world
            .actions
            .index(a)
            .ok_or_else(|| Error::Contract(format!("selector chose unavailable action {a}")))?;
        let rewards = world.realized(world.sample(symbol, rng));
        pseudo += best - world.action_values(symbol)?[i];
        realized += best - rewards[i];
        selector.observe(&rewards)?;
        series.push(RegretPoint {
            instance: k as u64 + 1,
            cumulative_regret: pseudo,
            cumulative_realized_regret: realized,
        });
    }
    Ok(series)
}

/// Least-squares slope of `ln R(k)` against `ln k` over the second half of
/// the series, skipping non-positive values. Returns the slope (if at least
/// two points qualify) and the first instance of the window.
pub fn fit_slope(series: &[RegretPoint]) -> (Option<f64>, u64) {
    let start = (series.len() as u64 / 2).max(1);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.instance >= start && p.cumulative_regret > 0.0)
        .map(|p| ((p.instance as f64).ln(), p.cumulative_regret.ln()))
        .collect();
    if pts.len() < 2 {
        return (None, start);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    ((sxx > 0.0).then(|| sxy / sxx), start)
}

/// Theoretical regret-growth exponent for the arrival process.
pub fn theoretical_exponent(kind: ArrivalKind, alpha: f64, dim: usize) -> f64 {
    match kind {
        ArrivalKind::Worst => worst_case_regret_exponent(alpha, dim),
        ArrivalKind::Best => 2.0 / 3.0,
    }
}

/// The world named by `world_file`, or a random world whose tested age has
/// one symbol per embedding cell.
pub fn load_world(config: &ExperimentConfig) -> Result<DiscreteWorldModel> {
    let reward = config.reward_spec(config.world_horizon)?;
    match &config.world_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            DiscreteWorldModel::from_csv(BufReader::new(file), &path.display().to_string(), reward)
        }
        None => {
            let cells = 1usize << (config.embed_level as usize * config.dim);
            let sizes: Vec<usize> = (1..=config.world_horizon)
                .map(|n| {
                    if n == config.regret_age {
                        cells
                    } else {
                        config.world_symbols
                    }
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_WORLD));
            random_world(&mut rng, reward, &sizes)
        }
    }
}

/// The configured arrival process: `videos` contexts in `dim` dimensions.
pub fn arrival_stream(config: &ExperimentConfig) -> Result<Vec<ContextVector>> {
    let k = config.videos.unwrap_or(super::config::DEFAULT_VIDEOS);
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_ARRIVALS));
    generate_arrival_contexts(
        config.arrival,
        k,
        config.dim,
        config.resolved_split_exponent(),
        &mut rng,
    )
}

/// `regret` mode: learner versus embedded world on a generated arrival stream.
pub fn regret_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    if config.mode != Mode::Regret {
        return Err(Error::Validation(
            "regret experiment needs mode=regret".into(),
        ));
    }
    let world = EmbeddedWorld::new(
        load_world(config)?,
        config.regret_age,
        config.embed_level,
        config.dim,
    )?;
    let p = config.resolved_split_exponent();
    let arrivals = arrival_stream(config)?;
    let mut selector = PartitionSelector::new(
        config.dim,
        SplitRule::new(config.split_scale, p)?,
        world.actions(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_OUTCOMES));
    let regret = run_regret(&world, &arrivals, &mut selector, &mut rng)?;
    let (slope, start) = fit_slope(&regret);
    let mut report = Report {
        manifest: config.manifest(),
        ..Report::default()
    };
    if let Some(last) = regret.last() {
        report.regret_fit.push(RegretFit {
            age: config.regret_age,
            arrival: config.arrival.to_string(),
            instances: last.instance,
            split_exponent: p,
            theoretical_exponent: theoretical_exponent(config.arrival, config.alpha, config.dim),
            fitted_slope: slope,
            final_regret: last.cumulative_regret,
            fit_window_start: start,
        });
    }
    report.regret = regret;
    Ok(report)
}

/// Policy table and value of the solver's optimum.
pub fn oracle_report(config: &ExperimentConfig, model: &DiscreteWorldModel) -> Result<Report> {
    let opt = solve(model)?;
    let mut report = Report {
        manifest: config.manifest(),
        ..Report::default()
    };
    for n in 1..=model.horizon() {
        for (x, sym) in model.alphabet(n).iter().enumerate() {
            let a = opt.action(n, x);
            report.policy.push(PolicyEntry {
                age: n,
                symbol: sym.label.clone(),
                probability: model.marginal(n, x),
                action: a.to_string(),
                expected_reward: if model.is_reachable(n, x) {
                    Some(conditional_action_reward(model, n, x, a, &opt)?)
                } else {
                    None
                },
            });
        }
    }
    report
        .values
        .push(("optimal".into(), crate::oracle::policy_value(model, &opt)));
    Ok(report)
}

/// `oracle` mode: solve the configured world file.
pub fn oracle_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    if config.world_file.is_none() {
        return Err(Error::Validation("oracle mode needs world_file".into()));
    }
    oracle_report(config, &load_world(config)?)
}
