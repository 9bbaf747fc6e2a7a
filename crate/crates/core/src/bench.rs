//! Comparison predictors: constant forecasts, a view-count regression issued
//! at a fixed age, and the perfect forecaster used as the reward normalizer.

use crate::error::{Error, Result};
use crate::model::{PopularityStatus, PredictionOutcome, RewardSpec, VideoTrace};
use crate::sim::PopularityThresholds;

/// Always forecasts the lowest status at age 1.
pub fn au_predict(trace: &VideoTrace, spec: &RewardSpec) -> Result<PredictionOutcome> {
    PredictionOutcome::single_forecast(1, PopularityStatus(0), trace.status, spec)
}

/// Always forecasts the highest status at age 1.
pub fn ap_predict(trace: &VideoTrace, spec: &RewardSpec) -> Result<PredictionOutcome> {
    PredictionOutcome::single_forecast(1, PopularityStatus(spec.levels() - 1), trace.status, spec)
}

/// Reward of a correct forecast at age 1.
pub fn perfect_reward(trace: &VideoTrace, spec: &RewardSpec) -> Result<f64> {
    spec.prediction_reward(trace.status, trace.status, 1)
}

pub fn perfect_predict(trace: &VideoTrace, spec: &RewardSpec) -> Result<PredictionOutcome> {
    PredictionOutcome::single_forecast(1, trace.status, trace.status, spec)
}

/// Log-linear fit `log10(1 + v_N) ≈ β0 + β1·log10(1 + v_n̂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpModel {
    pub age: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub training_count: u64,
    /// Fewer than two points or a constant regressor; predictions fall back to the lowest status.
    pub degenerate: bool,
}

/// Online least-squares accumulator for [`VpModel`], using centered
/// co-moments so identical regressors give exactly zero variance.
#[derive(Debug, Clone)]
pub struct VpTrainer {
    age: usize,
    count: u64,
    mean_x: f64,
    mean_y: f64,
    sxx: f64,
    sxy: f64,
}

fn views_at(trace: &VideoTrace, age: usize) -> Result<u64> {
    trace
        .raw_at(age)
        .map(|r| r.cum_views)
        .ok_or_else(|| Error::Contract(format!("trace {} has no raw views", trace.id)))
}

fn log_views(v: u64) -> f64 {
    (1.0 + v as f64).log10()
}

impl VpTrainer {
    pub fn new(age: usize) -> Self {
        VpTrainer {
            age,
            count: 0,
            mean_x: 0.0,
            mean_y: 0.0,
            sxx: 0.0,
            sxy: 0.0,
        }
    }

    pub fn add_point(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.mean_y += (y - self.mean_y) / n;
        self.sxx += dx * (x - self.mean_x);
        self.sxy += dx * (y - self.mean_y);
    }

    /// Adds a completed trace's `(v_n̂, v_N)` pair.
    pub fn add(&mut self, trace: &VideoTrace) -> Result<()> {
        let x = log_views(views_at(trace, self.age)?);
        let y = log_views(views_at(trace, trace.horizon())?);
        self.add_point(x, y);
        Ok(())
    }

    pub fn model(&self) -> VpModel {
        let degenerate = self.count < 2 || self.sxx <= 0.0;
        let (beta0, beta1) = if degenerate {
            (0.0, 0.0)
        } else {
            let b1 = self.sxy / self.sxx;
            (self.mean_y - b1 * self.mean_x, b1)
        };
        VpModel {
            age: self.age,
            beta0,
            beta1,
            training_count: self.count,
            degenerate,
        }
    }
}

/// Batch fit over completed traces.
pub fn vp_fit<'a>(
    history: impl IntoIterator<Item = &'a VideoTrace>,
    age: usize,
) -> Result<VpModel> {
    let mut t = VpTrainer::new(age);
    for trace in history {
        t.add(trace)?;
    }
    Ok(t.model())
}

impl VpModel {
    /// Point estimate of final views from views at the model's age.
    pub fn estimate(&self, views: u64) -> f64 {
        10f64.powf(self.beta0 + self.beta1 * log_views(views)) - 1.0
    }
}

/// VP forecast issued at the model's age. Returns the outcome and whether
/// the degenerate fallback was used.
pub fn vp_predict(
    model: &VpModel,
    trace: &VideoTrace,
    spec: &RewardSpec,
    thresholds: &PopularityThresholds,
) -> Result<(PredictionOutcome, bool)> {
    spec.check_age(model.age)?;
    let predicted = if model.degenerate {
        PopularityStatus(0)
    } else {
        let v = model.estimate(views_at(trace, model.age)?);
        PopularityStatus(
            thresholds
                .values()
                .iter()
                .filter(|&&t| v > t as f64)
                .count(),
        )
    };
    let outcome = PredictionOutcome::single_forecast(model.age, predicted, trace.status, spec)?;
    Ok((outcome, model.degenerate))
}

/// Counts of `(true status, predicted status)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(levels: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; levels]; levels],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: PopularityStatus, predicted: PopularityStatus) {
        self.counts[truth.0][predicted.0] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Fraction of videos with true status `s` that were forecast as `s`;
    /// `None` when no video has that status.
    pub fn recall(&self, s: usize) -> Option<f64> {
        let total: u64 = self.counts[s].iter().sum();
        (total > 0).then(|| self.counts[s][s] as f64 / total as f64)
    }

    /// Recall of the highest status.
    pub fn true_positive_rate(&self) -> Option<f64> {
        self.recall(self.levels() - 1)
    }

    /// Recall of the lowest status.
    pub fn true_negative_rate(&self) -> Option<f64> {
        self.recall(0)
    }
}

pub fn classification_rates(
    outcomes: &[PredictionOutcome],
    traces: &[VideoTrace],
    levels: usize,
) -> Result<ConfusionMatrix> {
    if outcomes.len() != traces.len() {
        return Err(Error::Contract(
            "outcomes and traces differ in length".into(),
        ));
    }
    let mut m = ConfusionMatrix::new(levels);
    for (o, t) in outcomes.iter().zip(traces) {
        m.record(t.status, o.predicted);
    }
    Ok(m)
}
