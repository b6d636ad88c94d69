use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lanetrust"));
    c.env_remove(lanetrust_cli::OUT_DIR_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn bundled(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn gen(dir: &Path, events: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("gen_{events}_{seed}"));
    ok(&run(&["gen", &bundled("gen.toml"), "--events", &events.to_string(), "--seed", &seed.to_string(), "--out-dir", s(&out)]));
    out
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = walk(dir).into_iter().map(|p| p.strip_prefix(dir).unwrap().to_path_buf()).collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

/// Every file but the manifest must match byte for byte.
fn same_outputs(a: &Path, b: &Path) {
    let fa = files(a);
    assert_eq!(fa, files(b));
    for f in fa.iter().filter(|f| f.as_os_str() != "manifest.json") {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{}", f.display());
    }
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bundled_configs_hold_the_defaults() {
    use lanetrust_cli::{calibrate::CalibrateConfig, infer::InferConfig, simulate::SimulateConfig};
    let read = |n: &str| fs::read_to_string(bundled(n)).unwrap();
    assert_eq!(toml::from_str::<SimulateConfig>(&read("simulate.toml")).unwrap(), SimulateConfig::default());
    assert_eq!(toml::from_str::<lanetrust::data::GenConfig>(&read("gen.toml")).unwrap(), Default::default());
    let cal: CalibrateConfig = toml::from_str(&read("calibrate.toml")).unwrap();
    assert_eq!(cal.calibration, Default::default());
    assert_eq!(cal.reference, Some(lanetrust::game::published::MAGIC_DLC));
    let inf: InferConfig = toml::from_str(&read("infer.toml")).unwrap();
    assert_eq!(InferConfig { frame_rate: 25.0, ..inf }, InferConfig::default());
    for n in ["recovery.toml", "collapse.toml"] {
        toml::from_str::<SimulateConfig>(&read(n)).unwrap().validate().unwrap();
    }
}

#[test]
fn simulate_single_honest_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&run(&["simulate", &bundled("simulate.toml"), "--n", "1", "--policy", "honest", "--out-dir", s(&out)]));
    let traces: Vec<_> = files(&out).into_iter().filter(|p| p.starts_with("traces")).collect();
    assert_eq!(traces, vec![PathBuf::from("traces/pair_00000_honest.csv")]);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["pairs"], 1);
    assert!(summary.get("arm").is_some());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["n"], 1);
    assert_eq!(m["inputs"][0]["role"], "config");
}

#[test]
fn simulate_both_reports_paired_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&run(&["simulate", &bundled("simulate.toml"), "--n", "20", "--no-traces", "--out-dir", s(&out)]));
    let summary = json(&out.join("summary.json"));
    let c = &summary["comparison"];
    for key in ["reduced_lane_change_time", "increased_min_tdtc"] {
        let v = c[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(!out.join("traces").exists());
}

#[test]
fn malformed_config_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n = \"many\"\n").unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    // valid TOML, invalid value
    fs::write(&cfg, "[params]\ntau0 = 1.5\n").unwrap();
    let o = run(&["simulate", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn gen_writes_recoverable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), 25, 3);
    for f in ["tracks.csv", "truth.json", "manifest.json"] {
        assert!(out.join(f).exists());
    }
    let ds = lanetrust::data::load_trajectories(out.join("tracks.csv"), &Default::default(), 5.0).unwrap();
    let ex = lanetrust::data::extract_events(&ds, &Default::default());
    assert_eq!(ex.events.len(), 25);
    assert_eq!(json(&out.join("truth.json"))["events"].as_array().unwrap().len(), 25);
}

#[test]
fn gen_rejects_zero_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = run(&["gen", &bundled("gen.toml"), "--events", "0", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn gen_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), 10, 7);
    let b = dir.path().join("again");
    ok(&run(&["gen", &bundled("gen.toml"), "--events", "10", "--seed", "7", "--out-dir", s(&b)]));
    same_outputs(&a, &b);
    let c = gen(dir.path(), 10, 8);
    assert_ne!(fs::read(a.join("tracks.csv")).unwrap(), fs::read(c.join("tracks.csv")).unwrap());
}

#[test]
fn calibrate_synthetic_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 40, 1).join("tracks.csv");
    let a = dir.path().join("cal_a");
    let b = dir.path().join("cal_b");
    for out in [&a, &b] {
        ok(&run(&["calibrate", s(&data), "--config", &bundled("calibrate.toml"), "--out", s(out)]));
    }
    let r = json(&a.join("calibration.json"));
    assert!(r["validation_tpr"].as_f64().is_some());
    assert!(json(&a.join("reference.json"))["validation_agreement"].as_f64().is_some());
    same_outputs(&a, &b);
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["inputs"][0]["role"], "data");
}

#[test]
fn calibrate_too_few_events() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 5, 1).join("tracks.csv");
    let out = dir.path().join("cal");
    let o = run(&["calibrate", s(&data), "--config", &bundled("calibrate.toml"), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("need at least 20") && err.contains("found 5"), "{err}");
    assert!(!out.exists());
}

#[test]
fn calibrate_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("t.csv");
    fs::write(&data, "frame,id,x,y\n0,1,0,1\n").unwrap();
    let o = run(&["calibrate", s(&data), "--out", s(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("laneId"));
}

#[test]
fn infer_labels_synthetic_cooperative_driver() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), 10, 2);
    let truth = json(&g.join("truth.json"));
    let ev = truth["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["driver"] == "cooperative")
        .expect("a cooperative follower");
    let hv = ev["roles"]["hv"].as_u64().unwrap().to_string();
    let out = dir.path().join("inf");
    ok(&run(&["infer", s(&g.join("tracks.csv")), "--driver", &hv, "--config", &bundled("infer.toml"), "--out", s(&out)]));
    let mut drivers = csv::Reader::from_path(out.join("drivers.csv")).unwrap();
    let row = drivers.records().next().unwrap().unwrap();
    assert_eq!(&row[0], hv.as_str());
    assert_eq!(&row[4], "cooperative");
    let mut events = csv::Reader::from_path(out.join("events.csv")).unwrap();
    let e = events.records().next().unwrap().unwrap();
    let frames: usize = e[4].parse().unwrap();
    let span = e[3].parse::<usize>().unwrap() - e[2].parse::<usize>().unwrap() + 1;
    assert_eq!(frames, span);
    let trust_rows = csv::Reader::from_path(out.join("trust.csv")).unwrap().records().count();
    assert_eq!(trust_rows, frames);
}

#[test]
fn infer_all_on_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.csv");
    fs::write(&data, "frame,id,x,y,xVelocity,xAcceleration,laneId\n").unwrap();
    let out = dir.path().join("inf");
    ok(&run(&["infer", s(&data), "--all", "--out", s(&out)]));
    for f in ["trust.csv", "events.csv", "drivers.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}");
    }
}

#[test]
fn infer_unknown_driver() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), 3, 2);
    let o = run(&["infer", s(&g.join("tracks.csv")), "--driver", "999999", "--config", &bundled("infer.toml"), "--out", s(&dir.path().join("i"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("999999"));
    let o = run(&["infer", s(&g.join("tracks.csv")), "--out", s(&dir.path().join("i"))]);
    assert_eq!(o.status.code(), Some(2));
}

/// A follower that accelerates into the gap for the whole interaction.
fn aggressive_csv() -> String {
    let mut text = String::from("frame,id,x,y,xVelocity,xAcceleration,laneId\n");
    for f in 0..60i64 {
        let t = f as f64 / 10.0;
        let y = if f < 10 { 1.75 } else { (1.75 + 0.1 * (f - 10) as f64).min(5.25) };
        let lane = |y: f64| if y >= 3.5 { 2 } else { 1 };
        let rows = [
            (1, 20.0 * t, y, 20.0, 0.0),
            (2, 20.0 * t - 30.0 + t * t, 5.25, 20.0 + 2.0 * t, 2.0),
            (3, 20.0 * t + 40.0, 1.75, 20.0, 0.0),
            (4, 20.0 * t + 60.0, 5.25, 20.0, 0.0),
        ];
        for (id, x, y, v, a) in rows {
            text.push_str(&format!("{f},{id},{x},{y},{v},{a},{}\n", lane(y)));
        }
    }
    text
}

#[test]
fn infer_flags_trust_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("agg.csv");
    fs::write(&data, aggressive_csv()).unwrap();
    let cfg = dir.path().join("infer.toml");
    fs::write(&cfg, "frame_rate = 10.0\ntau0 = 0.89\n").unwrap();
    let out = dir.path().join("inf");
    ok(&run(&["infer", s(&data), "--driver", "2", "--config", s(&cfg), "--out", s(&out)]));
    let mut events = csv::Reader::from_path(out.join("events.csv")).unwrap();
    let e = events.records().next().unwrap().unwrap();
    let final_tau: f64 = e[7].parse().unwrap();
    assert!(final_tau < 0.09, "{final_tau}");
    assert_eq!(&e[9], "1");
    assert_eq!(&e[10], "0");
    let mut drivers = csv::Reader::from_path(out.join("drivers.csv")).unwrap();
    assert_eq!(&drivers.records().next().unwrap().unwrap()[4], "non_cooperative");
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("sim");
    ok(&run(&["simulate", &bundled("simulate.toml"), "--n", "5", "--seed", "9", "--out-dir", s(&a)]));
    let b = dir.path().join("replayed");
    ok(&run(&["replay", s(&a.join("manifest.json")), "--out-dir", s(&b)]));
    same_outputs(&a, &b);

    let data = gen(dir.path(), 4, 4);
    let i = dir.path().join("inf");
    ok(&run(&["infer", s(&data.join("tracks.csv")), "--all", "--config", &bundled("infer.toml"), "--out", s(&i)]));
    let j = dir.path().join("inf2");
    ok(&run(&["replay", s(&i.join("manifest.json")), "--out", s(&j)]));
    same_outputs(&i, &j);
    // a changed input is refused
    fs::write(data.join("tracks.csv"), "frame,id,x,y,xVelocity,xAcceleration,laneId\n").unwrap();
    let o = run(&["replay", s(&i.join("manifest.json")), "--out", s(&dir.path().join("inf3"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from_env");
    let o = bin()
        .args(["gen", &bundled("gen.toml"), "--events", "2"])
        .env(lanetrust_cli::OUT_DIR_ENV, &env_out)
        .output()
        .unwrap();
    ok(&o);
    assert!(env_out.join("tracks.csv").exists());
    let flag_out = dir.path().join("from_flag");
    let o = bin()
        .args(["gen", &bundled("gen.toml"), "--events", "2", "--out-dir", s(&flag_out)])
        .env(lanetrust_cli::OUT_DIR_ENV, dir.path().join("unused"))
        .output()
        .unwrap();
    ok(&o);
    assert!(flag_out.join("tracks.csv").exists());
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn jobs_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("j1");
    let b = dir.path().join("j4");
    ok(&run(&["--jobs", "1", "simulate", &bundled("simulate.toml"), "--n", "12", "--out-dir", s(&a)]));
    ok(&run(&["simulate", &bundled("simulate.toml"), "--n", "12", "--jobs", "4", "--out-dir", s(&b)]));
    same_outputs(&a, &b);
}
