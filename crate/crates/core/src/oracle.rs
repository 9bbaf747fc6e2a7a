//! Complete-information solver over an explicit finite world.
//!
//! A [`DiscreteWorldModel`] lists every possible lifetime `(x_1, ..., x_N, s)`
//! with its probability. Given a policy for the other ages, the expected
//! reward of an action at age `n` and context `x̂` is the joint expectation
//! `Σ 1{x_n = x̂}·r_n·f`. The best response maximizes it per context, and
//! because the age-`n` best response only depends on later ages, `N`
//! successive best responses from any starting policy reach the optimum.

use std::collections::HashMap;
use std::io::Read;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{ContextVector, ForecastAction, PopularityStatus, RewardSpec};
use crate::partition::ActionSet;

const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ContextSymbol {
    pub label: String,
    pub embedding: Option<ContextVector>,
}

impl ContextSymbol {
    pub fn new(label: impl Into<String>) -> Self {
        ContextSymbol {
            label: label.into(),
            embedding: None,
        }
    }
}

/// One complete lifetime with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldOutcome {
    /// Symbol index per age.
    pub contexts: Vec<usize>,
    pub status: PopularityStatus,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteWorldModel {
    reward: RewardSpec,
    alphabets: Vec<Vec<ContextSymbol>>,
    outcomes: Vec<WorldOutcome>,
    marginals: Vec<Vec<f64>>,
}

impl DiscreteWorldModel {
    pub fn new(
        reward: RewardSpec,
        alphabets: Vec<Vec<ContextSymbol>>,
        outcomes: Vec<WorldOutcome>,
    ) -> Result<Self> {
        let horizon = reward.horizon();
        if alphabets.len() != horizon {
            return Err(Error::Config(format!(
                "{} alphabets for horizon {horizon}",
                alphabets.len()
            )));
        }
        if alphabets.iter().any(|a| a.is_empty()) {
            return Err(Error::Config("empty context alphabet".into()));
        }
        let mut total = 0.0;
        let mut marginals: Vec<Vec<f64>> = alphabets.iter().map(|a| vec![0.0; a.len()]).collect();
        for o in &outcomes {
            if o.contexts.len() != horizon {
                return Err(Error::Config("outcome length differs from horizon".into()));
            }
            if o.status.0 >= reward.levels() {
                return Err(Error::Config(format!("status {} out of range", o.status)));
            }
            if !(o.probability.is_finite() && o.probability >= 0.0) {
                return Err(Error::Config(format!("bad probability {}", o.probability)));
            }
            for (n, &c) in o.contexts.iter().enumerate() {
                if c >= alphabets[n].len() {
                    return Err(Error::Config(format!(
                        "symbol {c} outside age-{} alphabet",
                        n + 1
                    )));
                }
                marginals[n][c] += o.probability;
            }
            total += o.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::Config(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(DiscreteWorldModel {
            reward,
            alphabets,
            outcomes,
            marginals,
        })
    }

    /// Parses a world from CSV with header `x_1,...,x_N,s,probability`.
    /// Symbols are labels, numbered per age in order of first appearance.
    pub fn from_csv<R: Read>(input: R, source: &str, reward: RewardSpec) -> Result<Self> {
        let horizon = reward.horizon();
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(source, 1, e.to_string()))?
            .clone();
        let expected: Vec<String> = (1..=horizon)
            .map(|n| format!("x_{n}"))
            .chain(["s".to_string(), "probability".to_string()])
            .collect();
        if header.iter().collect::<Vec<_>>()
            != expected.iter().map(String::as_str).collect::<Vec<_>>()
        {
            return Err(Error::parse(
                source,
                1,
                format!("header must be {}", expected.join(",")),
            ));
        }
        let mut alphabets: Vec<Vec<ContextSymbol>> = vec![Vec::new(); horizon];
        let mut index: Vec<HashMap<String, usize>> = vec![HashMap::new(); horizon];
        let mut outcomes = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
            let mut contexts = Vec::with_capacity(horizon);
            for n in 0..horizon {
                let label = rec[n].trim().to_string();
                let next = alphabets[n].len();
                let id = *index[n].entry(label.clone()).or_insert(next);
                if id == next {
                    alphabets[n].push(ContextSymbol::new(label));
                }
                contexts.push(id);
            }
            let status: usize = rec[horizon].trim().parse().map_err(|_| {
                Error::parse(source, line, format!("bad status {:?}", &rec[horizon]))
            })?;
            let probability: f64 = rec[horizon + 1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, line, "bad probability"))?;
            if status >= reward.levels() || !(probability >= 0.0 && probability.is_finite()) {
                return Err(Error::parse(
                    source,
                    line,
                    "status or probability out of range",
                ));
            }
            outcomes.push(WorldOutcome {
                contexts,
                status: PopularityStatus(status),
                probability,
            });
        }
        Self::new(reward, alphabets, outcomes).map_err(|e| match e {
            Error::Config(m) => Error::parse(source, 0, m),
            other => other,
        })
    }

    pub fn reward(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn horizon(&self) -> usize {
        self.reward.horizon()
    }

    pub fn alphabet(&self, age: usize) -> &[ContextSymbol] {
        &self.alphabets[age - 1]
    }

    pub fn alphabet_mut(&mut self, age: usize) -> &mut [ContextSymbol] {
        &mut self.alphabets[age - 1]
    }

    pub fn outcomes(&self) -> &[WorldOutcome] {
        &self.outcomes
    }

    /// Probability that the age-`n` context is `symbol`.
    pub fn marginal(&self, age: usize, symbol: usize) -> f64 {
        self.marginals[age - 1][symbol]
    }

    pub fn is_reachable(&self, age: usize, symbol: usize) -> bool {
        self.marginal(age, symbol) > 0.0
    }

    pub fn action_set(&self, age: usize) -> ActionSet {
        ActionSet::new(self.reward.levels(), age < self.horizon())
    }
}

/// Deterministic map from context symbols to actions, per age.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    actions: Vec<Vec<ForecastAction>>,
}

impl TabularPolicy {
    /// Policy that predicts the lowest status everywhere.
    pub fn initial(model: &DiscreteWorldModel) -> Self {
        TabularPolicy {
            actions: model
                .alphabets
                .iter()
                .map(|a| vec![ForecastAction::predict(0); a.len()])
                .collect(),
        }
    }

    /// Builds a policy, checking totality and the no-Wait-at-horizon rule.
    pub fn from_actions(
        model: &DiscreteWorldModel,
        actions: Vec<Vec<ForecastAction>>,
    ) -> Result<Self> {
        if actions.len() != model.horizon() {
            return Err(Error::Contract("policy horizon mismatch".into()));
        }
        for (n, row) in actions.iter().enumerate() {
            if row.len() != model.alphabets[n].len() {
                return Err(Error::Contract(format!(
                    "policy for age {} is not total",
                    n + 1
                )));
            }
            let set = model.action_set(n + 1);
            if row.iter().any(|a| set.index(*a).is_none()) {
                return Err(Error::Contract(format!("invalid action at age {}", n + 1)));
            }
        }
        Ok(TabularPolicy { actions })
    }

    pub fn action(&self, age: usize, symbol: usize) -> ForecastAction {
        self.actions[age - 1][symbol]
    }

    pub fn age(&self, age: usize) -> &[ForecastAction] {
        &self.actions[age - 1]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Age rewards `r_1..r_N` of one outcome under `pi` (backward recursion).
fn outcome_rewards(reward: &RewardSpec, o: &WorldOutcome, pi: &TabularPolicy) -> Vec<f64> {
    let horizon = reward.horizon();
    let mut r = vec![0.0; horizon + 1];
    for n in (1..=horizon).rev() {
        r[n - 1] = match pi.action(n, o.contexts[n - 1]) {
            ForecastAction::Predict(a) => reward
                .prediction_reward(a, o.status, n)
                .expect("validated status and age"),
            ForecastAction::Wait => r[n],
        };
    }
    r.truncate(horizon);
    r
}

fn action_reward(
    reward: &RewardSpec,
    o: &WorldOutcome,
    n: usize,
    a: ForecastAction,
    later: &[f64],
) -> f64 {
    match a {
        ForecastAction::Predict(p) => reward.prediction_reward(p, o.status, n).expect("validated"),
        // `later` holds r_1..r_N under the fixed policy; r_{n+1} is later[n].
        ForecastAction::Wait => later[n],
    }
}

/// Joint-form expected reward of taking `a` at age `n` when the age-`n`
/// context is `symbol` and `pi` governs the later ages.
pub fn expected_action_reward(
    model: &DiscreteWorldModel,
    age: usize,
    symbol: usize,
    a: ForecastAction,
    pi: &TabularPolicy,
) -> Result<f64> {
    model.reward.check_age(age)?;
    if symbol >= model.alphabet(age).len() || !model.is_reachable(age, symbol) {
        return Err(Error::UndefinedContext { age, symbol });
    }
    if model.action_set(age).index(a).is_none() {
        return Err(Error::Contract(format!(
            "action {a} not available at age {age}"
        )));
    }
    Ok(model
        .outcomes
        .iter()
        .filter(|o| o.contexts[age - 1] == symbol)
        .map(|o| {
            let later = outcome_rewards(&model.reward, o, pi);
            action_reward(&model.reward, o, age, a, &later) * o.probability
        })
        .sum())
}

/// [`expected_action_reward`] divided by the context's marginal probability.
pub fn conditional_action_reward(
    model: &DiscreteWorldModel,
    age: usize,
    symbol: usize,
    a: ForecastAction,
    pi: &TabularPolicy,
) -> Result<f64> {
    Ok(expected_action_reward(model, age, symbol, a, pi)? / model.marginal(age, symbol))
}

/// Joint-form expected rewards of every action, indexed `[age-1][symbol][action]`.
pub fn action_value_table(model: &DiscreteWorldModel, pi: &TabularPolicy) -> Vec<Vec<Vec<f64>>> {
    let horizon = model.horizon();
    let mut table: Vec<Vec<Vec<f64>>> = (1..=horizon)
        .map(|n| vec![vec![0.0; model.action_set(n).len()]; model.alphabet(n).len()])
        .collect();
    for o in &model.outcomes {
        let later = outcome_rewards(&model.reward, o, pi);
        for n in 1..=horizon {
            let set = model.action_set(n);
            let cell = &mut table[n - 1][o.contexts[n - 1]];
            for (i, a) in set.iter().enumerate() {
                cell[i] += action_reward(&model.reward, o, n, a, &later) * o.probability;
            }
        }
    }
    table
}

/// Best response to `pi` at every age and context, ties broken toward the
/// earliest action in canonical order. Unreachable contexts get `Predict(0)`.
pub fn best_response(model: &DiscreteWorldModel, pi: &TabularPolicy) -> TabularPolicy {
    let table = action_value_table(model, pi);
    let actions = table
        .iter()
        .enumerate()
        .map(|(i, per_symbol)| {
            let set = model.action_set(i + 1);
            per_symbol
                .iter()
                .map(|values| {
                    let mut best = 0;
                    for (j, v) in values.iter().enumerate().skip(1) {
                        if *v > values[best] {
                            best = j;
                        }
                    }
                    set.action(best)
                })
                .collect()
        })
        .collect();
    TabularPolicy { actions }
}

/// Optimal policy: `N` best responses from the all-`Predict(0)` policy.
pub fn solve(model: &DiscreteWorldModel) -> Result<TabularPolicy> {
    let mut pi = TabularPolicy::initial(model);
    for _ in 0..model.horizon() {
        pi = best_response(model, &pi);
    }
    if best_response(model, &pi) != pi {
        return Err(Error::Internal(
            "best response did not reach a fixed point within N iterations".into(),
        ));
    }
    Ok(pi)
}

/// Expected overall reward `Σ r_1·f` of a policy.
pub fn policy_value(model: &DiscreteWorldModel, pi: &TabularPolicy) -> f64 {
    model
        .outcomes
        .iter()
        .map(|o| outcome_rewards(&model.reward, o, pi)[0] * o.probability)
        .sum()
}

/// Random world over every `(x_1..x_N, s)` combination with
/// exponentially distributed weights, normalized to a probability mass.
/// Symbols at age `n` are labelled `n:i`.
pub fn random_world<R: Rng + ?Sized>(
    rng: &mut R,
    reward: RewardSpec,
    alphabet_sizes: &[usize],
) -> Result<DiscreteWorldModel> {
    if alphabet_sizes.len() != reward.horizon() || alphabet_sizes.contains(&0) {
        return Err(Error::Config(
            "alphabet sizes must be positive, one per age".into(),
        ));
    }
    let levels = reward.levels();
    let mut outcomes = Vec::new();
    let mut contexts = vec![0usize; alphabet_sizes.len()];
    loop {
        for s in 0..levels {
            let weight: f64 = rng.sample(Exp1);
            outcomes.push(WorldOutcome {
                contexts: contexts.clone(),
                status: PopularityStatus(s),
                probability: weight,
            });
        }
        // odometer increment over the context tuple
        let mut i = 0;
        while i < contexts.len() {
            contexts[i] += 1;
            if contexts[i] < alphabet_sizes[i] {
                break;
            }
            contexts[i] = 0;
            i += 1;
        }
        if i == contexts.len() {
            break;
        }
    }
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    for o in &mut outcomes {
        o.probability /= total;
    }
    let alphabets = alphabet_sizes
        .iter()
        .enumerate()
        .map(|(n, &k)| {
            (0..k)
                .map(|i| ContextSymbol::new(format!("{}:{i}", n + 1)))
                .collect()
        })
        .collect();
    DiscreteWorldModel::new(reward, alphabets, outcomes)
}

/// Random world in which every age-`n` symbol determines the whole context
/// history up to `n`: each symbol at age `n` has `branching[n]` children at
/// age `n + 1`, so the age-`n` alphabet has `Π_{j≤n} branching[j]` symbols.
pub fn random_tree_world<R: Rng + ?Sized>(
    rng: &mut R,
    reward: RewardSpec,
    branching: &[usize],
) -> Result<DiscreteWorldModel> {
    if branching.len() != reward.horizon() || branching.contains(&0) {
        return Err(Error::Config(
            "branching factors must be positive, one per age".into(),
        ));
    }
    let leaves: usize = branching.iter().product();
    let levels = reward.levels();
    let mut outcomes = Vec::with_capacity(leaves * levels);
    for leaf in 0..leaves {
        // decode the leaf into its ancestor at every age
        let mut contexts = vec![0; branching.len()];
        let mut rest = leaf;
        for n in (0..branching.len()).rev() {
            contexts[n] = rest;
            rest /= branching[n];
        }
        for s in 0..levels {
            let weight: f64 = rng.sample(Exp1);
            outcomes.push(WorldOutcome {
                contexts: contexts.clone(),
                status: PopularityStatus(s),
                probability: weight,
            });
        }
    }
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    for o in &mut outcomes {
        o.probability /= total;
    }
    let mut size = 1;
    let alphabets = branching
        .iter()
        .enumerate()
        .map(|(n, &b)| {
            size *= b;
            (0..size)
                .map(|i| ContextSymbol::new(format!("{}:{i}", n + 1)))
                .collect()
        })
        .collect();
    DiscreteWorldModel::new(reward, alphabets, outcomes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_world() -> DiscreteWorldModel {
        let reward = RewardSpec::binary(2, 2.0, 0.1).unwrap();
        let text = "x_1,x_2,s,probability\na,c,1,0.4\na,d,0,0.1\nb,c,0,0.25\nb,d,0,0.25\n";
        DiscreteWorldModel::from_csv(text.as_bytes(), "tiny", reward).unwrap()
    }

    const PU: ForecastAction = ForecastAction::Predict(PopularityStatus(0));
    const PP: ForecastAction = ForecastAction::Predict(PopularityStatus(1));
    const W: ForecastAction = ForecastAction::Wait;

    /// Forward evaluation: walk ages until the first prediction.
    fn forward_value(model: &DiscreteWorldModel, pi: &TabularPolicy) -> f64 {
        model
            .outcomes()
            .iter()
            .map(|o| {
                let n = (1..=model.horizon())
                    .find(|&n| !pi.action(n, o.contexts[n - 1]).is_wait())
                    .unwrap();
                let a = pi.action(n, o.contexts[n - 1]).status().unwrap();
                model.reward().prediction_reward(a, o.status, n).unwrap() * o.probability
            })
            .sum()
    }

    #[test]
    fn tiny_world_expected_reward() {
        let m = tiny_world();
        let pi = TabularPolicy::initial(&m);
        // symbol 0 at age 2 is "c"
        let v = expected_action_reward(&m, 2, 0, PP, &pi).unwrap();
        assert!((v - 0.8).abs() < 1e-12);
        let alt = TabularPolicy::from_actions(&m, vec![vec![W, PP], vec![PP, PP]]).unwrap();
        assert_eq!(
            expected_action_reward(&m, 2, 0, PU, &pi).unwrap(),
            expected_action_reward(&m, 2, 0, PU, &alt).unwrap()
        );
    }

    #[test]
    fn tiny_world_solution() {
        let m = tiny_world();
        let one = best_response(&m, &TabularPolicy::initial(&m));
        assert_eq!(one.age(2), &[PP, PU]);
        let opt = solve(&m).unwrap();
        assert_eq!(opt.age(1), &[W, PU]);
        assert_eq!(opt.age(2), &[PP, PU]);
        let v = policy_value(&m, &opt);
        assert!((v - 1.45).abs() < 1e-12, "{v}");
        assert!((forward_value(&m, &opt) - 1.45).abs() < 1e-12);
        assert_eq!(best_response(&m, &opt), opt);
        // Law of total expectation over age-1 contexts.
        let total: f64 = (0..2)
            .map(|x| expected_action_reward(&m, 1, x, opt.action(1, x), &opt).unwrap())
            .sum();
        assert!((total - v).abs() < 1e-12);
    }

    #[test]
    fn tiny_world_all_unpopular_value() {
        let m = tiny_world();
        let pi = TabularPolicy::from_actions(&m, vec![vec![PU, PU], vec![PU, PU]]).unwrap();
        assert!((policy_value(&m, &pi) - 0.70).abs() < 1e-12);
    }

    #[test]
    fn zero_marginal_is_undefined() {
        let reward = RewardSpec::binary(1, 2.0, 0.1).unwrap();
        let m = DiscreteWorldModel::new(
            reward,
            vec![vec![ContextSymbol::new("a"), ContextSymbol::new("ghost")]],
            vec![WorldOutcome {
                contexts: vec![0],
                status: PopularityStatus(1),
                probability: 1.0,
            }],
        )
        .unwrap();
        let pi = TabularPolicy::initial(&m);
        assert!(matches!(
            expected_action_reward(&m, 1, 1, PU, &pi),
            Err(Error::UndefinedContext { age: 1, symbol: 1 })
        ));
        assert!(!m.is_reachable(1, 1));
        // N = 1: a single myopic argmax.
        let opt = solve(&m).unwrap();
        assert_eq!(opt.age(1), &[PP, PU]);
    }

    #[test]
    fn independent_status_predicts_popular_at_first_age() {
        // s independent of contexts, P(P)·w = 0.3·5 > P(U) = 0.7.
        let reward = RewardSpec::binary(3, 5.0, 0.05).unwrap();
        let mut outcomes = Vec::new();
        for x1 in 0..2 {
            for x2 in 0..2 {
                for x3 in 0..2 {
                    for (s, ps) in [(0, 0.7), (1, 0.3)] {
                        outcomes.push(WorldOutcome {
                            contexts: vec![x1, x2, x3],
                            status: PopularityStatus(s),
                            probability: ps / 8.0,
                        });
                    }
                }
            }
        }
        let alpha = || vec![ContextSymbol::new("l"), ContextSymbol::new("h")];
        let m = DiscreteWorldModel::new(reward, vec![alpha(), alpha(), alpha()], outcomes).unwrap();
        let opt = solve(&m).unwrap();
        assert_eq!(opt.age(1), &[PP, PP]);
    }

    #[test]
    fn invalid_worlds_rejected() {
        let reward = RewardSpec::binary(2, 2.0, 0.1).unwrap();
        let bad = "x_1,x_2,s,probability\na,c,1,0.5\na,d,0,0.4\n";
        assert!(matches!(
            DiscreteWorldModel::from_csv(bad.as_bytes(), "bad", reward.clone()),
            Err(Error::Parse { .. })
        ));
        let bad_header = "x_1,s,probability\na,1,1.0\n";
        assert!(
            DiscreteWorldModel::from_csv(bad_header.as_bytes(), "bad", reward.clone()).is_err()
        );
        let bad_status = "x_1,x_2,s,probability\na,c,2,1.0\n";
        assert!(matches!(
            DiscreteWorldModel::from_csv(bad_status.as_bytes(), "bad", reward),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    fn world_strategy() -> impl Strategy<Value = DiscreteWorldModel> {
        (1usize..=3, any::<u64>()).prop_flat_map(|(horizon, seed)| {
            (
                proptest::collection::vec(1usize..=3, horizon),
                Just(seed),
                0.5f64..4.0,
                0.0f64..0.5,
            )
                .prop_map(move |(sizes, seed, w, lambda)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let reward = RewardSpec::binary(sizes.len(), w, lambda).unwrap();
                    random_world(&mut rng, reward, &sizes).unwrap()
                })
        })
    }

    fn tree_world_strategy() -> impl Strategy<Value = DiscreteWorldModel> {
        (
            proptest::collection::vec(1usize..=2, 1..=3),
            any::<u64>(),
            0.5f64..4.0,
            0.0f64..0.5,
        )
            .prop_map(|(branching, seed, w, lambda)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let reward = RewardSpec::binary(branching.len(), w, lambda).unwrap();
                random_tree_world(&mut rng, reward, &branching).unwrap()
            })
    }

    fn all_policies(m: &DiscreteWorldModel) -> Vec<TabularPolicy> {
        let slots: Vec<(usize, ActionSet)> = (1..=m.horizon())
            .flat_map(|n| (0..m.alphabet(n).len()).map(move |_| n))
            .map(|n| (n, m.action_set(n)))
            .collect();
        let total: usize = slots.iter().map(|(_, set)| set.len()).product();
        (0..total)
            .map(|mut code| {
                let mut actions: Vec<Vec<ForecastAction>> = vec![Vec::new(); m.horizon()];
                for (n, set) in &slots {
                    actions[n - 1].push(set.action(code % set.len()));
                    code /= set.len();
                }
                TabularPolicy::from_actions(m, actions).unwrap()
            })
            .collect()
    }

    fn random_policy(m: &DiscreteWorldModel, rng: &mut ChaCha8Rng) -> TabularPolicy {
        let actions = (1..=m.horizon())
            .map(|n| {
                let set = m.action_set(n);
                (0..m.alphabet(n).len())
                    .map(|_| set.action(rng.random_range(0..set.len())))
                    .collect()
            })
            .collect();
        TabularPolicy::from_actions(m, actions).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solve_attains_enumerated_maximum(m in tree_world_strategy()) {
            let policies = all_policies(&m);
            prop_assume!(policies.len() <= 4096);
            let best = policies.iter().map(|pi| policy_value(&m, pi)).fold(f64::MIN, f64::max);
            let opt = solve(&m).unwrap();
            prop_assert!((policy_value(&m, &opt) - best).abs() < 1e-12);
            prop_assert!((forward_value(&m, &opt) - best).abs() < 1e-12);
        }

        #[test]
        fn iteration_converges_from_any_start(m in world_strategy(), seed in any::<u64>()) {
            let opt = solve(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pi = random_policy(&m, &mut rng);
            let horizon = m.horizon();
            for iter in 1..=horizon {
                pi = best_response(&m, &pi);
                // ages N+1-iter..N are settled after `iter` rounds
                for n in (horizon + 1 - iter)..=horizon {
                    prop_assert_eq!(pi.age(n), opt.age(n));
                }
            }
            prop_assert_eq!(pi, opt);
        }

        #[test]
        fn earlier_ages_do_not_affect_best_response(m in world_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = random_policy(&m, &mut rng);
            let other = random_policy(&m, &mut rng);
            let base = best_response(&m, &pi);
            for n in 1..=m.horizon() {
                let mut mixed: Vec<Vec<ForecastAction>> = (1..=m.horizon())
                    .map(|j| if j < n { other.age(j).to_vec() } else { pi.age(j).to_vec() })
                    .collect();
                let perturbed = best_response(&m, &TabularPolicy::from_actions(&m, std::mem::take(&mut mixed)).unwrap());
                prop_assert_eq!(perturbed.age(n), base.age(n));
            }
        }
    }

    #[test]
    fn shared_late_context_breaks_per_age_optimality() {
        // Age-2 symbol c is reached from both a and b, so its unconditional
        // value ignores that only b's path waits.
        let reward = RewardSpec::binary(2, 2.0, 0.0).unwrap();
        let text = "x_1,x_2,s,probability\na,c,0,0.6\nb,c,1,0.2\nb,d,0,0.2\n";
        let m = DiscreteWorldModel::from_csv(text.as_bytes(), "shared", reward).unwrap();
        let opt = solve(&m).unwrap();
        assert_eq!(opt.age(2), &[PU, PU]);
        assert!((policy_value(&m, &opt) - 1.0).abs() < 1e-12);
        let better = TabularPolicy::from_actions(&m, vec![vec![PU, W], vec![PP, PU]]).unwrap();
        assert!((policy_value(&m, &better) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn wait_at_horizon_rejected_in_policy() {
        let m = tiny_world();
        assert!(TabularPolicy::from_actions(&m, vec![vec![W, W], vec![W, PU]]).is_err());
    }
}
