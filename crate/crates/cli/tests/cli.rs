use std::path::Path;
use std::process::{Command, Output};

fn popcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popcast"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_run_from_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let o = popcast(&[
        "simulate",
        "-s",
        "videos=200",
        "-s",
        "horizon=20",
        "-o",
        path(&sim_dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traces = sim_dir.join("traces.csv");
    let text = std::fs::read_to_string(&traces).unwrap();
    assert_eq!(text.lines().count(), 1 + 200 * 20);

    let config = dir.path().join("exp.conf");
    let out = dir.path().join("out");
    std::fs::write(
        &config,
        format!(
            "horizon=20\nvp_ages=5,10\nwindow=50\ntrace_file={}\n",
            traces.display()
        ),
    )
    .unwrap();
    let o = popcast(&["run", "-c", path(&config), "-o", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("social_forecast"));
    for f in [
        "manifest.txt",
        "summary.csv",
        "learning_curve.csv",
        "regret.csv",
        "confusion.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("mode=run\n"));
}

#[test]
fn oracle_solves_tiny_world() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.csv");
    std::fs::write(
        &world,
        "x_1,x_2,s,probability\na,c,1,0.4\na,d,0,0.1\nb,c,0,0.25\nb,d,0,0.25\n",
    )
    .unwrap();
    let o = popcast(&[
        "oracle",
        "-s",
        &format!("world_file={}", world.display()),
        "-s",
        "w=2",
        "-s",
        "lambda=0.1",
        "-o",
        path(&dir.path().join("out")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("age 1 a"), "{text}");
    assert!(
        text.lines()
            .any(|l| l.starts_with("age 1 a") && l.ends_with("wait")),
        "{text}"
    );
    assert!(
        text.lines()
            .any(|l| l.starts_with("age 2 c") && l.ends_with("predict_1")),
        "{text}"
    );
    let value = text.lines().find(|l| l.starts_with("V(optimal)")).unwrap();
    let v: f64 = value.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((v - 1.45).abs() < 1e-12);
    assert!(dir.path().join("out/policy.csv").exists());
}

#[test]
fn regret_and_bench_run() {
    let o = popcast(&["regret", "-s", "videos=2000"]);
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("worst arrivals: K=2000 p=4"),
        "{}",
        stdout(&o)
    );
    let o = popcast(&[
        "bench",
        "-s",
        "videos=100",
        "-s",
        "horizon=30",
        "-s",
        "vp_ages=25",
    ]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("social_forecast"));
    assert!(stdout(&o).contains("vp_25"));
}

#[test]
fn arrivals_go_to_stdout() {
    let o = popcast(&["simulate", "--arrivals", "-s", "videos=9", "-s", "dim=2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("index,x_0,x_1\n"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn validation_errors_exit_with_two() {
    for args in [
        vec!["run", "-s", "vp_ages=500"],
        vec!["run", "-s", "colour=red"],
        vec!["run", "-s", "lambda"],
        vec!["oracle"],
        vec!["run", "-c", "/nonexistent/config"],
    ] {
        let o = popcast(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(popcast(&["launch"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("bad.csv");
    std::fs::write(
        &traces,
        "video_id,age,cum_views,period_views,brf,shr,final_status\n1,1,10,10,1,0.1,0\n1,2,5,0,1,0.1,0\n",
    )
    .unwrap();
    let o = popcast(&[
        "run",
        "-s",
        "horizon=2",
        "-s",
        "vp_ages=1",
        "-s",
        &format!("trace_file={}", traces.display()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains(":3:"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let world = dir.path().join("world.csv");
    std::fs::write(&world, "x_1,x_2,s,probability\na,c,1,0.5\n").unwrap();
    let o = popcast(&["oracle", "-s", &format!("world_file={}", world.display())]);
    assert_eq!(o.status.code(), Some(3));

    let o = popcast(&["run", "-s", "trace_file=/nonexistent/traces.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}"));
        let o = popcast(&[
            "run",
            "-s",
            "videos=300",
            "-s",
            "horizon=25",
            "-s",
            "vp_ages=10",
            "-s",
            "seed=8",
            "-o",
            path(&out),
        ]);
        assert!(o.status.success());
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                let name = e.file_name().to_string_lossy().into_owned();
                (name, std::fs::read(e.path()).unwrap())
            })
            .filter(|(n, _)| n != "manifest.txt")
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}
