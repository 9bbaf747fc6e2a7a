//! Domain vocabulary and reward arithmetic.
//!
//! Ages are 1-based throughout. A video is observed at ages `1..=N`, and at
//! every age the forecaster either predicts a popularity status or waits. The
//! reward attributed to age `n` follows a backward recursion: a prediction at
//! `n` earns `U(a, s, n) = θ(a, s) + λ·ψ(n)`, while waiting inherits the
//! reward of age `n + 1`. Waiting at the horizon is not allowed, so a forecast
//! is always issued by age `N`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One level of the popularity status space, `0` being the least popular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PopularityStatus(pub usize);

impl PopularityStatus {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PopularityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-age decision. The derived ordering is the canonical tie-break order:
/// `Predict(0) < Predict(1) < ... < Wait`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ForecastAction {
    Predict(PopularityStatus),
    Wait,
}

impl ForecastAction {
    pub fn predict(status: usize) -> Self {
        ForecastAction::Predict(PopularityStatus(status))
    }

    pub fn is_wait(self) -> bool {
        matches!(self, ForecastAction::Wait)
    }

    pub fn status(self) -> Option<PopularityStatus> {
        match self {
            ForecastAction::Predict(s) => Some(s),
            ForecastAction::Wait => None,
        }
    }
}

impl fmt::Display for ForecastAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastAction::Predict(s) => write!(f, "predict_{}", s.0),
            ForecastAction::Wait => f.write_str("wait"),
        }
    }
}

/// A point of the unit cube describing a video's propagation state at one age.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Numeric(format!(
                "context coordinate {bad} outside [0, 1]"
            )));
        }
        Ok(ContextVector(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Raw per-age propagation measurements of one video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFeatures {
    pub cum_views: u64,
    pub period_views: u64,
    /// Branching factor: viewers who directly follow the initiator.
    pub brf: u64,
    /// Share rate: fraction of viewers who re-shared after watching.
    pub shr: f64,
}

/// Lifetime record of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrace {
    pub id: u64,
    pub contexts: Vec<ContextVector>,
    pub status: PopularityStatus,
    pub raw: Option<Vec<RawFeatures>>,
}

impl VideoTrace {
    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }

    pub fn context(&self, age: usize) -> &ContextVector {
        &self.contexts[age - 1]
    }

    pub fn raw_at(&self, age: usize) -> Option<&RawFeatures> {
        self.raw.as_ref().map(|r| &r[age - 1])
    }
}

/// Timeliness component `ψ(n)` of the prediction reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Timeliness {
    /// `ψ(n) = N - n`.
    RemainingAges,
    /// Explicit values for ages `1..=N`; must be non-negative and non-increasing.
    Table(Vec<f64>),
}

/// Accuracy matrix, timeliness weight and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardSpecRepr", into = "RewardSpecRepr")]
pub struct RewardSpec {
    horizon: usize,
    lambda: f64,
    /// Row = predicted status, column = realized status.
    accuracy: Vec<Vec<f64>>,
    timeliness: Timeliness,
    u_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RewardSpecRepr {
    horizon: usize,
    lambda: f64,
    accuracy: Vec<Vec<f64>>,
    timeliness: Timeliness,
}

impl TryFrom<RewardSpecRepr> for RewardSpec {
    type Error = Error;

    fn try_from(r: RewardSpecRepr) -> Result<Self> {
        RewardSpec::new(r.horizon, r.lambda, r.accuracy, r.timeliness)
    }
}

impl From<RewardSpec> for RewardSpecRepr {
    fn from(r: RewardSpec) -> Self {
        RewardSpecRepr {
            horizon: r.horizon,
            lambda: r.lambda,
            accuracy: r.accuracy,
            timeliness: r.timeliness,
        }
    }
}

impl RewardSpec {
    pub fn new(
        horizon: usize,
        lambda: f64,
        accuracy: Vec<Vec<f64>>,
        timeliness: Timeliness,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let levels = accuracy.len();
        if levels < 2 {
            return Err(Error::Config(
                "status space needs at least two levels".into(),
            ));
        }
        for row in &accuracy {
            if row.len() != levels {
                return Err(Error::Config("accuracy matrix must be square".into()));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(
                    "accuracy rewards must be finite and non-negative".into(),
                ));
            }
        }
        if let Timeliness::Table(values) = &timeliness {
            if values.len() != horizon {
                return Err(Error::Config(format!(
                    "timeliness table has {} entries, horizon is {horizon}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
                || values.windows(2).any(|w| w[1] > w[0])
            {
                return Err(Error::Config(
                    "timeliness must be non-negative and non-increasing".into(),
                ));
            }
        }
        let mut spec = RewardSpec {
            horizon,
            lambda,
            accuracy,
            timeliness,
            u_max: 0.0,
        };
        let mut u_max = 0.0f64;
        for a in 0..levels {
            for s in 0..levels {
                for n in 1..=horizon {
                    u_max = u_max.max(spec.accuracy[a][s] + lambda * spec.psi(n));
                }
            }
        }
        if u_max <= 0.0 {
            return Err(Error::Config("maximum reward must be positive".into()));
        }
        spec.u_max = u_max;
        Ok(spec)
    }

    /// Two statuses `{Unpopular, Popular}` with `θ = [[1, 0], [0, w]]` and `ψ(n) = N - n`.
    pub fn binary(horizon: usize, w: f64, lambda: f64) -> Result<Self> {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Config(format!("w must be positive, got {w}")));
        }
        Self::new(
            horizon,
            lambda,
            vec![vec![1.0, 0.0], vec![0.0, w]],
            Timeliness::RemainingAges,
        )
    }

    /// Diagonal accuracy rewards (correct prediction of level `i` earns
    /// `rewards[i]`, any error earns 0) with `ψ(n) = N - n`.
    pub fn diagonal(horizon: usize, rewards: &[f64], lambda: f64) -> Result<Self> {
        let levels = rewards.len();
        let accuracy = (0..levels)
            .map(|a| {
                (0..levels)
                    .map(|s| if a == s { rewards[a] } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(horizon, lambda, accuracy, Timeliness::RemainingAges)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn levels(&self) -> usize {
        self.accuracy.len()
    }

    pub fn accuracy(&self) -> &[Vec<f64>] {
        &self.accuracy
    }

    pub fn timeliness(&self) -> &Timeliness {
        &self.timeliness
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    // Caller guarantees 1 <= n <= N.
    fn psi(&self, n: usize) -> f64 {
        match &self.timeliness {
            Timeliness::RemainingAges => (self.horizon - n) as f64,
            Timeliness::Table(values) => values[n - 1],
        }
    }

    pub fn check_age(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.horizon {
            return Err(Error::InvalidAge {
                age: n,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn check_status(&self, s: PopularityStatus) -> Result<()> {
        if s.0 >= self.levels() {
            return Err(Error::Config(format!(
                "status {} outside a {}-level status space",
                s.0,
                self.levels()
            )));
        }
        Ok(())
    }

    /// `ψ(n)`.
    pub fn timeliness_reward(&self, n: usize) -> Result<f64> {
        self.check_age(n)?;
        Ok(self.psi(n))
    }

    /// `θ(a, s)`.
    pub fn accuracy_reward(&self, a: PopularityStatus, s: PopularityStatus) -> Result<f64> {
        self.check_status(a)?;
        self.check_status(s)?;
        Ok(self.accuracy[a.0][s.0])
    }

    /// `U(a, s, n) = θ(a, s) + λ·ψ(n)`.
    pub fn prediction_reward(
        &self,
        a: PopularityStatus,
        s: PopularityStatus,
        n: usize,
    ) -> Result<f64> {
        self.check_age(n)?;
        Ok(self.accuracy_reward(a, s)? + self.lambda * self.psi(n))
    }

    /// Age-dependent rewards `r_1..r_N` for a full action vector.
    pub fn age_reward_vector(
        &self,
        actions: &[ForecastAction],
        s: PopularityStatus,
    ) -> Result<Vec<f64>> {
        if actions.len() != self.horizon {
            return Err(Error::Contract(format!(
                "expected {} actions, got {}",
                self.horizon,
                actions.len()
            )));
        }
        self.check_status(s)?;
        let mut rewards = vec![0.0; self.horizon];
        let mut next = None;
        for n in (1..=self.horizon).rev() {
            let r = match (actions[n - 1], next) {
                (ForecastAction::Predict(a), _) => self.prediction_reward(a, s, n)?,
                (ForecastAction::Wait, Some(r)) => r,
                (ForecastAction::Wait, None) => {
                    return Err(Error::Contract("Wait is not allowed at the horizon".into()))
                }
            };
            rewards[n - 1] = r;
            next = Some(r);
        }
        Ok(rewards)
    }

    /// Scales a raw reward into `[0, 1]` by `u_max`.
    pub fn normalize_reward(&self, u: f64) -> Result<f64> {
        if !(0.0..=self.u_max).contains(&u) {
            return Err(Error::Numeric(format!(
                "reward {u} outside [0, {}]",
                self.u_max
            )));
        }
        Ok(u / self.u_max)
    }
}

/// Result of forecasting one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome {
    pub forecast_age: usize,
    pub predicted: PopularityStatus,
    pub age_rewards: Vec<f64>,
    pub overall_reward: f64,
    pub normalized_reward: f64,
}

impl PredictionOutcome {
    pub fn from_actions(
        actions: &[ForecastAction],
        s: PopularityStatus,
        spec: &RewardSpec,
    ) -> Result<Self> {
        let age_rewards = spec.age_reward_vector(actions, s)?;
        let (forecast_age, predicted) = actions
            .iter()
            .enumerate()
            .find_map(|(i, a)| a.status().map(|st| (i + 1, st)))
            .ok_or_else(|| Error::Internal("no forecast issued".into()))?;
        let overall_reward = age_rewards[0];
        Ok(PredictionOutcome {
            forecast_age,
            predicted,
            normalized_reward: spec.normalize_reward(overall_reward)?,
            overall_reward,
            age_rewards,
        })
    }

    /// Outcome of issuing `predicted` at `age` after waiting at every earlier age.
    pub fn single_forecast(
        age: usize,
        predicted: PopularityStatus,
        s: PopularityStatus,
        spec: &RewardSpec,
    ) -> Result<Self> {
        spec.check_age(age)?;
        let actions: Vec<_> = (1..=spec.horizon())
            .map(|n| {
                if n < age {
                    ForecastAction::Wait
                } else {
                    ForecastAction::Predict(predicted)
                }
            })
            .collect();
        Self::from_actions(&actions, s, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const U: PopularityStatus = PopularityStatus(0);
    const P: PopularityStatus = PopularityStatus(1);

    fn binary_spec() -> RewardSpec {
        RewardSpec::binary(100, 10.0, 0.01).unwrap()
    }

    #[test]
    fn accuracy_matrix_entries() {
        let spec = binary_spec();
        assert_eq!(spec.accuracy_reward(P, P).unwrap(), 10.0);
        assert_eq!(spec.accuracy_reward(U, P).unwrap(), 0.0);
        assert_eq!(spec.accuracy_reward(U, U).unwrap(), 1.0);
        assert!(matches!(
            spec.accuracy_reward(PopularityStatus(2), U),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prediction_reward_examples() {
        let spec = binary_spec();
        assert!((spec.prediction_reward(P, P, 1).unwrap() - 10.99).abs() < 1e-12);
        assert_eq!(spec.prediction_reward(U, U, 100).unwrap(), 1.0);
        assert!((spec.prediction_reward(P, U, 50).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            spec.prediction_reward(P, P, 0),
            Err(Error::InvalidAge { age: 0, .. })
        ));
        assert!(matches!(
            spec.prediction_reward(P, P, 101),
            Err(Error::InvalidAge { age: 101, .. })
        ));
    }

    #[test]
    fn reward_vector_wait_then_predict() {
        let spec = binary_spec();
        let mut actions = vec![ForecastAction::Wait, ForecastAction::Wait];
        actions.extend(std::iter::repeat_n(ForecastAction::Predict(P), 98));
        let r = spec.age_reward_vector(&actions, P).unwrap();
        for v in &r[..3] {
            assert!((v - 10.97).abs() < 1e-12);
        }
        assert!((r[3] - 10.96).abs() < 1e-12);
    }

    #[test]
    fn reward_vector_first_prediction_decides() {
        let spec = binary_spec();
        let mut actions = vec![ForecastAction::Predict(U)];
        actions.extend((1..100).map(|i| {
            if i % 3 == 0 {
                ForecastAction::Wait
            } else {
                ForecastAction::predict(i % 2)
            }
        }));
        *actions.last_mut().unwrap() = ForecastAction::Predict(P);
        let r = spec.age_reward_vector(&actions, U).unwrap();
        assert!((r[0] - 1.99).abs() < 1e-12);
    }

    #[test]
    fn reward_vector_all_wait_wrong_at_horizon() {
        let spec = binary_spec();
        let mut actions = vec![ForecastAction::Wait; 99];
        actions.push(ForecastAction::Predict(U));
        let r = spec.age_reward_vector(&actions, P).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wait_at_horizon_rejected() {
        let spec = binary_spec();
        let actions = vec![ForecastAction::Wait; 100];
        assert!(matches!(
            spec.age_reward_vector(&actions, P),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let spec = binary_spec();
        assert!((spec.u_max() - 10.99).abs() < 1e-12);
        assert_eq!(spec.normalize_reward(spec.u_max()).unwrap(), 1.0);
        assert_eq!(spec.normalize_reward(0.0).unwrap(), 0.0);
        let x = spec.normalize_reward(1.99).unwrap();
        assert!((x - 1.99 / 10.99).abs() < 1e-15);
        assert!((x - 0.18107).abs() < 1e-5);
        assert!(spec.normalize_reward(-0.1).is_err());
        assert!(spec.normalize_reward(11.0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(RewardSpec::binary(0, 10.0, 0.01).is_err());
        assert!(RewardSpec::binary(10, 0.0, 0.01).is_err());
        assert!(RewardSpec::binary(10, 1.0, -0.01).is_err());
        assert!(RewardSpec::new(3, 0.1, vec![vec![1.0]], Timeliness::RemainingAges).is_err());
        assert!(RewardSpec::new(
            3,
            0.1,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            Timeliness::Table(vec![1.0, 2.0, 0.0])
        )
        .is_err());
    }

    #[test]
    fn outcome_from_actions() {
        let spec = binary_spec();
        let o = PredictionOutcome::single_forecast(25, P, P, &spec).unwrap();
        assert_eq!(o.forecast_age, 25);
        assert!((o.overall_reward - 10.75).abs() < 1e-12);
        assert!((o.normalized_reward - 10.75 / 10.99).abs() < 1e-12);
    }

    #[test]
    fn context_vector_range() {
        assert!(ContextVector::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(ContextVector::new(vec![1.5]).is_err());
        assert!(ContextVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = RewardSpec::diagonal(7, &[1.0, 5.0, 10.0], 0.02).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: RewardSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    fn action_strategy(levels: usize) -> impl Strategy<Value = ForecastAction> {
        prop_oneof![
            (0..levels).prop_map(ForecastAction::predict),
            Just(ForecastAction::Wait)
        ]
    }

    fn actions_strategy(n: usize, levels: usize) -> impl Strategy<Value = Vec<ForecastAction>> {
        (
            proptest::collection::vec(action_strategy(levels), n - 1),
            (0..levels).prop_map(ForecastAction::predict),
        )
            .prop_map(|(mut v, last)| {
                v.push(last);
                v
            })
    }

    proptest! {
        #[test]
        fn chain_property(actions in actions_strategy(12, 3), s in 0usize..3) {
            let spec = RewardSpec::diagonal(12, &[1.0, 5.0, 10.0], 0.05).unwrap();
            let r = spec.age_reward_vector(&actions, PopularityStatus(s)).unwrap();
            for n in 0..11 {
                if actions[n].is_wait() {
                    prop_assert_eq!(r[n], r[n + 1]);
                }
            }
            let first = actions.iter().position(|a| !a.is_wait()).unwrap();
            for n in 0..=first {
                prop_assert_eq!(r[n], r[0]);
            }
        }

        #[test]
        fn prefix_independence(
            a in actions_strategy(10, 2),
            b in actions_strategy(10, 2),
            m in 0usize..10,
            s in 0usize..2,
        ) {
            prop_assume!(!a[m].is_wait());
            let spec = RewardSpec::binary(10, 4.0, 0.1).unwrap();
            let mut mixed = a.clone();
            mixed[m + 1..].copy_from_slice(&b[m + 1..]);
            let ra = spec.age_reward_vector(&a, PopularityStatus(s)).unwrap();
            let rm = spec.age_reward_vector(&mixed, PopularityStatus(s)).unwrap();
            prop_assert_eq!(&ra[..=m], &rm[..=m]);
        }

        #[test]
        fn normalized_reward_in_unit_interval(
            a in 0usize..3, s in 0usize..3, n in 1usize..=20, lambda in 0.0f64..2.0
        ) {
            let spec = RewardSpec::diagonal(20, &[1.0, 5.0, 10.0], lambda).unwrap();
            let u = spec.prediction_reward(PopularityStatus(a), PopularityStatus(s), n).unwrap();
            let x = spec.normalize_reward(u).unwrap();
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn timeliness_pressure(s in 0usize..2, n in 1usize..20, lambda in 0.001f64..1.0) {
            let spec = RewardSpec::binary(20, 3.0, lambda).unwrap();
            let st = PopularityStatus(s);
            prop_assert!(
                spec.prediction_reward(st, st, n).unwrap()
                    > spec.prediction_reward(st, st, n + 1).unwrap()
            );
        }
    }
}
