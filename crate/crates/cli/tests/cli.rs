use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ulthop(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulthop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_one_cycle_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["simulate", "--cycles", "1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        first_line(&dir.path().join("trajectory.csv")),
        "t,x_c,y_c,x_f,y_f,theta,vx_c,vy_c,vx_f,vy_f,omega,tau,xi,phase"
    );
    assert_eq!(
        first_line(&dir.path().join("events.csv")),
        "t,kind,x_c,y_c,x_f,y_f,theta,vx_c,vy_c,vx_f,vy_f,omega"
    );
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let kinds: Vec<&str> = events.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(kinds, ["touchdown", "liftoff", "apex"]);
    let cycles: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("cycles.json")).unwrap()).unwrap();
    assert_eq!(cycles["cycles"].as_array().unwrap().len(), 1);
    assert_eq!(cycles["outcome"], "Completed");
    assert!(dir.path().join("effective_config.toml").exists());
    assert!(!dir.path().join("config.toml").exists());
}

#[test]
fn simulate_reports_a_fall_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["simulate", "--cycles", "100"], dir.path());
    assert_eq!(code(&o), 1);
    let events = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(events.lines().last().unwrap().contains(",fall,"));
}

#[test]
fn absolute_retraction_falls() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["simulate", "--cycles", "3", "--retraction-mode", "absolute"], dir.path());
    assert_eq!(code(&o), 1);
    let eff = fs::read_to_string(dir.path().join("effective_config.toml")).unwrap();
    assert!(eff.contains("retraction_mode = \"absolute\""), "{eff}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\nm_c = \"heavy\"\n").unwrap();
    let out = dir.path().join("out");
    let bad = bad.to_str().unwrap();
    assert_eq!(code(&ulthop(&["simulate", "--config", bad], &out)), 2);

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "[model]\nmass = 3.0\n").unwrap();
    assert_eq!(code(&ulthop(&["simulate", "--config", unknown.to_str().unwrap()], &out)), 2);

    let invalid = dir.path().join("invalid.toml");
    fs::write(&invalid, "[model]\nk = -5.0\n").unwrap();
    assert_eq!(code(&ulthop(&["simulate", "--config", invalid.to_str().unwrap()], &out)), 2);

    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&ulthop(&["simulate", "--config", missing.to_str().unwrap()], &out)), 2);

    assert_eq!(code(&ulthop(&["sweep", "--grid", "vx:6:3:0.1"], &out)), 2);
    assert_eq!(code(&ulthop(&["sweep", "--grid", "speed:3:6:0.1"], &out)), 2);
    assert_eq!(code(&ulthop(&["simulate", "--cycles", "0"], &out)), 2);
    assert_eq!(code(&ulthop(&["simulate", "--rel-tol", "-1"], &out)), 2);
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn config_is_copied_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let text = "# reference gait, one cycle\n[simulate]\ncycles = 1   # short\n\n[control]\nvx_des = 5.0\n";
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = ulthop(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("config.toml")).unwrap(), text);
    let eff: toml::Value = toml::from_str(&fs::read_to_string(out.join("effective_config.toml")).unwrap()).unwrap();
    assert_eq!(eff["simulate"]["cycles"].as_integer(), Some(1));
    assert_eq!(eff["control"]["K"].as_float(), Some(0.15));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = |args: &[&str]| {
        let o = ulthop(args, dir.path());
        let mut files: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        let bytes: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect();
        (code(&o), o.stdout, bytes)
    };
    for args in [
        &["simulate", "--cycles", "2"][..],
        &["sweep", "--grid", "vx:4.9:5.0:0.1,l0:0.087:0.089:0.002", "--cycles", "3"][..],
    ] {
        let a = snapshot(args);
        let b = snapshot(args);
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["sweep", "--grid", "vx:4.9:5.0:0.1,l0:0.087:0.089:0.002", "--cycles", "3"], dir.path());
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "vx_des,l0_swing,steps_survived");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("4.9,0.087,"));
    assert!(lines[4].starts_with("5,0.089,"));
    for l in &lines[1..] {
        let steps: usize = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(steps <= 3);
    }
}

#[test]
fn stability_report_has_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["stability", "--cycles", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("stability.json")).unwrap()).unwrap();
    let r = &doc["report"];
    assert_eq!(r["fixed_point_full"].as_array().unwrap().len(), 10);
    assert_eq!(r["jacobian"]["rows"], 8);
    assert_eq!(r["jacobian"]["data"].as_array().unwrap().len(), 64);
    let mults = r["multipliers"].as_array().unwrap();
    assert_eq!(mults.len(), 8);
    assert!(mults.iter().all(|m| m.as_array().unwrap().len() == 2));
    assert!(r["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(doc["perturbation"]["fraction"], -0.075);
}

#[test]
fn stability_without_a_fixed_point_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[stability]\nmax_iter = 1\n\n[control]\nvx_des = 4.0\n").unwrap();
    let o = ulthop(&["stability", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(code(&o), 1);
}

#[test]
fn velocity_map_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulthop(&["velocity-map", "--cycles", "2"], dir.path());
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("velocity_map.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "k,v_k,v_k1");
    assert_eq!(text.lines().count(), 3);

    let o = ulthop(&["velocity-map", "--no-adapt-phi"], dir.path());
    assert_eq!(code(&o), 1);
    let eff = fs::read_to_string(dir.path().join("effective_config.toml")).unwrap();
    assert!(eff.contains("adapt_phi = false"));
}
