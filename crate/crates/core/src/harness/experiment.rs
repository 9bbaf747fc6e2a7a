//! Streams a trace corpus through Social-Forecast and the benchmarks.

use crate::bench::{
    ap_predict, au_predict, perfect_predict, perfect_reward, vp_predict, ConfusionMatrix, VpTrainer,
};
use crate::error::{Error, Result};
use crate::learner::{ForecastEngine, OpCounters};
use crate::model::{PredictionOutcome, RewardSpec, VideoTrace};
use crate::sim::{generate_corpus, load_traces, PopularityThresholds};

use super::config::{Benchmark, ExperimentConfig, Mode, DEFAULT_VIDEOS};
use super::report::{AgeCount, AlgorithmSummary, ConfusionEntry, CurvePoint, Report};

pub const SOCIAL_FORECAST: &str = "social_forecast";

/// Traces named by the config: the trace file if set, otherwise a synthetic corpus.
pub fn load_corpus(config: &ExperimentConfig) -> Result<Vec<VideoTrace>> {
    match &config.trace_file {
        Some(path) => {
            let mut traces = load_traces(path, &config.features(), &config.resolved_thresholds()?)?;
            if let Some(t) = traces.iter().find(|t| t.horizon() != config.horizon) {
                return Err(Error::Validation(format!(
                    "trace {} has {} ages but horizon is {}",
                    t.id,
                    t.horizon(),
                    config.horizon
                )));
            }
            if let Some(k) = config.videos {
                traces.truncate(k);
            }
            Ok(traces)
        }
        None => generate_corpus(
            &config.sim_params()?,
            config.videos.unwrap_or(DEFAULT_VIDEOS),
        ),
    }
}

/// Running totals for one algorithm.
struct Tally {
    name: String,
    window: usize,
    raw: f64,
    perfect: f64,
    count: u64,
    age_sum: u64,
    ages: Vec<u64>,
    confusion: ConfusionMatrix,
    window_raw: f64,
    window_perfect: f64,
    window_count: usize,
    curve: Vec<CurvePoint>,
    flags: Vec<String>,
    fallbacks: u64,
}

impl Tally {
    fn new(name: impl Into<String>, levels: usize, horizon: usize, window: usize) -> Self {
        Tally {
            name: name.into(),
            window,
            raw: 0.0,
            perfect: 0.0,
            count: 0,
            age_sum: 0,
            ages: vec![0; horizon + 1],
            confusion: ConfusionMatrix::new(levels),
            window_raw: 0.0,
            window_perfect: 0.0,
            window_count: 0,
            curve: Vec::new(),
            flags: Vec::new(),
            fallbacks: 0,
        }
    }

    fn record(&mut self, outcome: &PredictionOutcome, trace: &VideoTrace, perfect: f64) {
        self.raw += outcome.overall_reward;
        self.perfect += perfect;
        self.count += 1;
        self.age_sum += outcome.forecast_age as u64;
        self.ages[outcome.forecast_age] += 1;
        self.confusion.record(trace.status, outcome.predicted);
        self.window_raw += outcome.overall_reward;
        self.window_perfect += perfect;
        self.window_count += 1;
        if self.window_count == self.window {
            self.close_window();
        }
    }

    fn close_window(&mut self) {
        self.curve.push(CurvePoint {
            algorithm: self.name.clone(),
            instances: self.count,
            window_normalized_reward: self.window_raw / self.window_perfect,
            cumulative_normalized_reward: self.raw / self.perfect,
        });
        self.window_raw = 0.0;
        self.window_perfect = 0.0;
        self.window_count = 0;
    }

    fn finish(mut self, report: &mut Report) {
        if self.count == 0 {
            return;
        }
        if self.window_count > 0 {
            self.close_window();
        }
        if self.fallbacks > 0 {
            self.flags
                .push(format!("degenerate_fallbacks={}", self.fallbacks));
        }
        report.summary.push(AlgorithmSummary {
            algorithm: self.name.clone(),
            videos: self.count,
            raw_reward: self.raw,
            perfect_reward: self.perfect,
            normalized_reward: self.raw / self.perfect,
            true_positive_rate: self.confusion.true_positive_rate(),
            true_negative_rate: self.confusion.true_negative_rate(),
            mean_forecast_age: Some(self.age_sum as f64 / self.count as f64),
            flags: self.flags.join(";"),
        });
        report.learning_curve.append(&mut self.curve);
        for (t, row) in self.confusion.counts().iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                report.confusion.push(ConfusionEntry {
                    algorithm: self.name.clone(),
                    true_status: t,
                    predicted_status: p,
                    count,
                });
            }
        }
        for (age, &count) in self.ages.iter().enumerate().filter(|(_, &c)| c > 0) {
            report.forecast_ages.push(AgeCount {
                algorithm: self.name.clone(),
                forecast_age: age,
                count,
            });
        }
    }
}

enum Runner {
    Learner(Box<ForecastEngine>),
    AllUnpopular,
    AllPopular,
    ViewBased(VpTrainer),
    Perfect,
}

impl Runner {
    fn predict(
        &mut self,
        trace: &VideoTrace,
        spec: &RewardSpec,
        thresholds: &PopularityThresholds,
    ) -> Result<(PredictionOutcome, bool)> {
        match self {
            Runner::Learner(engine) => Ok((
                engine.process(trace.id, &trace.contexts, trace.status)?,
                false,
            )),
            Runner::AllUnpopular => Ok((au_predict(trace, spec)?, false)),
            Runner::AllPopular => Ok((ap_predict(trace, spec)?, false)),
            Runner::Perfect => Ok((perfect_predict(trace, spec)?, false)),
            Runner::ViewBased(trainer) => {
                let result = vp_predict(&trainer.model(), trace, spec, thresholds)?;
                // Prequential: learn from the trace only after forecasting it.
                trainer.add(trace)?;
                Ok(result)
            }
        }
    }
}

/// Summary and per-algorithm work counters of one run.
pub struct RunOutput {
    pub report: Report,
    pub counters: Option<OpCounters>,
}

/// Runs the configured algorithms over `traces` in order.
pub fn run_on_traces(config: &ExperimentConfig, traces: &[VideoTrace]) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.reward_spec(config.horizon)?;
    let thresholds = config.resolved_thresholds()?;
    let levels = spec.levels();
    let mut runners: Vec<(Runner, Tally)> = Vec::new();
    let tally = |name: String| Tally::new(name, levels, config.horizon, config.window);
    if config.mode != Mode::Bench {
        let engine = ForecastEngine::new(spec.clone(), config.learner_config(config.horizon))?;
        runners.push((
            Runner::Learner(Box::new(engine)),
            tally(SOCIAL_FORECAST.into()),
        ));
    }
    for b in &config.benchmarks {
        match b {
            Benchmark::AllUnpopular => runners.push((Runner::AllUnpopular, tally("au".into()))),
            Benchmark::AllPopular => runners.push((Runner::AllPopular, tally("ap".into()))),
            Benchmark::Perfect => runners.push((Runner::Perfect, tally("perfect".into()))),
            Benchmark::ViewBased => {
                for &age in &config.vp_ages {
                    let mut t = tally(format!("vp_{age}"));
                    t.flags.push("prequential_fit".into());
                    runners.push((Runner::ViewBased(VpTrainer::new(age)), t));
                }
            }
        }
    }

    for trace in traces {
        if trace.horizon() != config.horizon {
            return Err(Error::Validation(format!(
                "trace {} has {} ages",
                trace.id,
                trace.horizon()
            )));
        }
        let perfect = perfect_reward(trace, &spec)?;
        for (runner, tally) in runners.iter_mut() {
            let (outcome, fallback) = runner.predict(trace, &spec, &thresholds)?;
            tally.fallbacks += u64::from(fallback);
            tally.record(&outcome, trace, perfect);
        }
    }

    let mut report = Report {
        manifest: config.manifest(),
        ..Report::default()
    };
    let mut counters = None;
    for (runner, tally) in runners {
        if let Runner::Learner(engine) = &runner {
            counters = Some(engine.counters());
        }
        tally.finish(&mut report);
    }
    Ok(RunOutput { report, counters })
}

/// `run` and `bench` modes: load or generate the corpus, then run it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let traces = load_corpus(config)?;
    Ok(run_on_traces(config, &traces)?.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "horizon=20\nvideos=300\nvp_ages=5,10\nwindow=100\n{text}"
        ))
        .unwrap()
    }

    #[test]
    fn perfect_row_is_one_and_rates_match_constants() {
        let r = run_experiment(&small("")).unwrap();
        assert_eq!(r.algorithm("perfect").unwrap().normalized_reward, 1.0);
        let au = r.algorithm("au").unwrap();
        assert_eq!(
            (au.true_positive_rate, au.true_negative_rate),
            (Some(0.0), Some(1.0))
        );
        let ap = r.algorithm("ap").unwrap();
        assert_eq!(
            (ap.true_positive_rate, ap.true_negative_rate),
            (Some(1.0), Some(0.0))
        );
        for s in &r.summary {
            assert!((0.0..=1.0).contains(&s.normalized_reward), "{s:?}");
            assert_eq!(s.videos, 300);
        }
        assert_eq!(r.summary[0].algorithm, SOCIAL_FORECAST);
        let curve: Vec<_> = r
            .learning_curve
            .iter()
            .filter(|c| c.algorithm == "au")
            .map(|c| c.instances)
            .collect();
        assert_eq!(curve, vec![100, 200, 300]);
    }

    #[test]
    fn bench_mode_skips_learner() {
        let r = run_experiment(&small("mode=bench\nbenchmarks=au,vp")).unwrap();
        let names: Vec<_> = r.summary.iter().map(|s| s.algorithm.as_str()).collect();
        assert_eq!(names, ["au", "vp_5", "vp_10"]);
        assert!(r
            .algorithm("vp_5")
            .unwrap()
            .flags
            .contains("degenerate_fallbacks="));
    }

    #[test]
    fn empty_corpus_gives_empty_tables() {
        let r = run_experiment(&small("videos=0")).unwrap();
        assert!(r.summary.is_empty() && r.learning_curve.is_empty() && r.confusion.is_empty());
        assert!(!r.manifest.is_empty());
    }

    #[test]
    fn vp_age_beyond_horizon_is_rejected_early() {
        let e = run_experiment(&small("vp_ages=30")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
