use popcast::harness::{regret_experiment, run_experiment, ExperimentConfig, Report};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

#[test]
fn run_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&config(
        "videos=700\nhorizon=30\nvp_ages=10,20\nwindow=200\nseed=4",
    ))
    .unwrap();
    r.emit(dir.path()).unwrap();
    assert_eq!(Report::load(dir.path()).unwrap(), r);
}

#[test]
fn regret_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = regret_experiment(&config("mode=regret\nvideos=2000\narrival=best")).unwrap();
    r.emit(dir.path()).unwrap();
    let back = Report::load(dir.path()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.regret_fit[0].split_exponent, 3.0);
}

#[test]
fn summary_columns_are_fixed() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("videos=50\nhorizon=10\nvp_ages=5"))
        .unwrap()
        .emit(dir.path())
        .unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    let first = |name: &str| read(name).lines().next().unwrap().to_string();
    assert_eq!(
        first("summary.csv"),
        "algorithm,videos,raw_reward,perfect_reward,normalized_reward,true_positive_rate,true_negative_rate,mean_forecast_age,flags"
    );
    assert_eq!(
        first("learning_curve.csv"),
        "algorithm,instances,window_normalized_reward,cumulative_normalized_reward"
    );
    assert_eq!(
        first("confusion.csv"),
        "algorithm,true_status,predicted_status,count"
    );
    assert_eq!(first("forecast_ages.csv"), "algorithm,forecast_age,count");
    assert_eq!(
        first("regret.csv"),
        "instance,cumulative_regret,cumulative_realized_regret"
    );
    let rows: Vec<String> = read("summary.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(rows, ["social_forecast", "au", "ap", "vp_5", "perfect"]);
}

#[test]
fn manifest_records_resolved_exponent() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("videos=10\nhorizon=5\nvp_ages=2"))
        .unwrap()
        .emit(dir.path())
        .unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(
        manifest
            .lines()
            .any(|l| l == "split_exponent=4.372281323269014"),
        "{manifest}"
    );
    assert!(manifest.lines().any(|l| l == "window=500"));
    // The manifest is itself a valid configuration.
    let again = ExperimentConfig::parse(&manifest).unwrap();
    assert_eq!(again.split_exponent, Some(4.372281323269014));
}

#[test]
fn empty_corpus_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&config("videos=0")).unwrap();
    r.emit(dir.path()).unwrap();
    for name in [
        "summary.csv",
        "learning_curve.csv",
        "confusion.csv",
        "forecast_ages.csv",
        "regret.csv",
    ] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
    assert_eq!(Report::load(dir.path()).unwrap(), r);
}

#[test]
fn normalized_rewards_stay_in_unit_interval() {
    for text in [
        "w=5",
        "w=15\nlambda=0.015",
        "popularity_levels=refined",
        "period_views_feature=true",
    ] {
        let r = run_experiment(&config(&format!(
            "videos=400\nhorizon=30\nvp_ages=10\n{text}"
        )))
        .unwrap();
        for s in &r.summary {
            assert!((0.0..=1.0).contains(&s.normalized_reward), "{text}: {s:?}");
        }
        assert_eq!(r.algorithm("perfect").unwrap().normalized_reward, 1.0);
    }
}

#[test]
fn unwritable_output_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = Report::default().emit(&blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
