use popcast::error::Error;
use popcast::model::PopularityStatus;
use popcast::partition::Hypercube;
use popcast::sim::{
    generate_arrival_contexts, generate_corpus, load_traces, read_traces, write_arrivals,
    write_traces, write_traces_file, ArrivalKind, FeatureMap, PopularityThresholds, SimParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn trace_file_round_trip() {
    let params = SimParams::binary(100, 2024);
    let traces = generate_corpus(&params, 100).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    write_traces_file(&path, &traces).unwrap();
    let loaded = load_traces(&path, &params.features, &params.thresholds).unwrap();
    assert_eq!(loaded, traces);
}

#[test]
fn header_only_file_is_empty() {
    let text = "video_id,age,cum_views,period_views,brf,shr,final_status\n";
    let t = read_traces(
        text.as_bytes(),
        "t",
        &FeatureMap::default(),
        &PopularityThresholds::binary(),
    )
    .unwrap();
    assert!(t.is_empty());
}

#[test]
fn decreasing_views_report_the_line() {
    let text = "video_id,age,cum_views,period_views,brf,shr,final_status\n\
                1,1,10,10,1,0.1,0\n\
                1,2,12,2,1,0.1,0\n\
                1,3,11,0,1,0.1,0\n";
    let err = read_traces(
        text.as_bytes(),
        "t",
        &FeatureMap::default(),
        &PopularityThresholds::binary(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Integrity { line: 4, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn schema_violations_are_parse_errors() {
    let f = FeatureMap::default();
    let t = PopularityThresholds::binary();
    let cases = [
        ("video_id,age,views\n", 1),
        ("video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,x,0,0,0.1,\n", 2),
        ("video_id,age,cum_views,period_views,brf,shr,final_status\n1,2,5,5,0,0.1,\n", 2),
        ("video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,5,5,0,1.5,\n", 2),
        (
            "video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,5,5,0,0.1,\n1,3,5,0,0,0.1,\n",
            3,
        ),
        (
            "video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,5,5,0,0.1,\n1,2,5,0,0,0.1,\n2,1,5,5,0,0.1,\n",
            4,
        ),
    ];
    for (text, want) in cases {
        match read_traces(text.as_bytes(), "t", &f, &t) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn declared_label_must_match_views() {
    let text =
        "video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,20000,20000,3,0.1,0\n";
    let err = read_traces(
        text.as_bytes(),
        "t",
        &FeatureMap::default(),
        &PopularityThresholds::binary(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Integrity { line: 2, .. }));
    let unlabeled =
        "video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,20000,20000,3,0.1,\n";
    let t = read_traces(
        unlabeled.as_bytes(),
        "t",
        &FeatureMap::default(),
        &PopularityThresholds::binary(),
    )
    .unwrap();
    assert_eq!(t[0].status, PopularityStatus(1));
}

#[test]
fn no_popular_prior_gives_unpopular_labels() {
    let params = SimParams::binary(20, 11).with_priors(&[1.0, 0.0]).unwrap();
    let traces = generate_corpus(&params, 100_000).unwrap();
    let popular = traces.iter().filter(|t| t.status.0 == 1).count();
    assert!(popular as f64 / 1e5 <= 1e-3, "{popular} popular");
}

#[test]
fn default_popular_fraction_matches_prior() {
    let traces = generate_corpus(&SimParams::binary(100, 5), 10_000).unwrap();
    let frac = traces.iter().filter(|t| t.status.0 == 1).count() as f64 / 1e4;
    assert!((frac - 0.10).abs() <= 0.01, "{frac}");
}

#[test]
fn popularity_rises_with_brf_and_shr() {
    let traces = generate_corpus(&SimParams::binary(100, 8), 20_000).unwrap();
    for age in [1, 10, 50] {
        for coord in [1, 2] {
            let mut counts = [(0u32, 0u32); 4];
            for t in &traces {
                let v = t.context(age).coords()[coord];
                let bin = ((v * 4.0) as usize).min(3);
                counts[bin].0 += 1;
                counts[bin].1 += t.status.0 as u32;
            }
            let rates: Vec<f64> = counts
                .iter()
                .filter(|c| c.0 >= 200)
                .map(|c| c.1 as f64 / c.0 as f64)
                .collect();
            assert!(
                rates.windows(2).all(|w| w[0] <= w[1]),
                "age {age} coord {coord}: {rates:?}"
            );
        }
    }
}

#[test]
fn arrival_csv_has_documented_header() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs = generate_arrival_contexts(ArrivalKind::Worst, 4, 2, 4.0, &mut rng).unwrap();
    let mut out = Vec::new();
    write_arrivals(&mut out, &xs).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("index,x_0,x_1\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn best_case_example_lands_in_one_level_six_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = generate_arrival_contexts(ArrivalKind::Best, 1024, 2, 2.0, &mut rng).unwrap();
    let cube = Hypercube::containing(xs[0].coords(), 6);
    assert!(xs.iter().all(|x| cube.contains(x.coords())));
    assert_eq!(cube.side(), 1.0 / 64.0);
}

fn min_pairwise_distance(xs: &[popcast::model::ContextVector]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let d2: f64 = xs[i]
                .coords()
                .iter()
                .zip(xs[j].coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn worst_case_points_are_spread(k in 1usize..400, d in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = generate_arrival_contexts(ArrivalKind::Worst, k, d, 4.0, &mut rng).unwrap();
        prop_assert_eq!(xs.len(), k);
        prop_assert!(xs.iter().all(|x| x.dim() == d && x.coords().iter().all(|c| (0.0..=1.0).contains(c))));
        let floor = (k as f64).powf(-1.0 / d as f64);
        prop_assert!(min_pairwise_distance(&xs) >= floor * (1.0 - 1e-12));
    }

    #[test]
    fn best_case_points_share_a_cube(k in 1usize..5000, d in 1usize..=4, p in 0.5f64..6.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = generate_arrival_contexts(ArrivalKind::Best, k, d, p, &mut rng).unwrap();
        let level = popcast::sim::best_case_level(k, p);
        let cube = Hypercube::containing(xs[0].coords(), level);
        prop_assert!(xs.iter().all(|x| cube.contains(x.coords())));
    }
}

#[test]
fn traces_serialize_identically_across_runs() {
    let params = SimParams::refined(12, 4);
    let mut a = Vec::new();
    write_traces(&mut a, &generate_corpus(&params, 50).unwrap()).unwrap();
    let again = read_traces(a.as_slice(), "a", &params.features, &params.thresholds).unwrap();
    let mut b = Vec::new();
    write_traces(&mut b, &again).unwrap();
    assert_eq!(a, b);
}
