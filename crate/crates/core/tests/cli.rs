use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lapai::cli::{evaluate_scheme, phantom, read_frame, simulate_scheme, RunConfig, SchemeEntry};

fn lapai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapai"))
        .args(args)
        .output()
        .expect("spawn lapai")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

/// Small, fast scenario: three crossings on a coarse grid.
const SMALL: &str = r#"{
  "seed": 11,
  "scene": { "n_crossings": 3 },
  "recon": { "pitch_mm": 0.4 },
  "sweep": { "d_mm": [12, 20], "theta_deg": [45, 87] }
}"#;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

#[test]
fn zoom_solve_demo_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = lapai(&["zoom-solve", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verification: pass"));
    let csv = std::fs::read_to_string(tmp.path().join("zoom_trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "m2,m1,branch,dx1_mm,dx2_mm,f_comb_mm,M");
    assert_eq!(lines.len(), 201);
}

#[test]
fn zoom_solve_unit_ratio_is_one_row_with_zero_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"zoom": {"zoom_ratio": 1, "m2_long": -1}}"#);
    let o = lapai(&[
        "zoom-solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("max conservation residual: 0e0"), "{text}");
    assert!(text.contains("variator line residual (mm): 0e0"), "{text}");
    let csv = std::fs::read_to_string(tmp.path().join("zoom_trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn zoom_solve_error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let cfg = write_config(tmp.path(), r#"{"zoom": {"f2_mm": 25}}"#);
    let o = lapai(&[
        "zoom-solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!Path::new(out).join("zoom_trajectory.csv").exists());

    let cfg = write_config(tmp.path(), r#"{"zoom": {"m1_long": -1.2}}"#);
    let o = lapai(&[
        "zoom-solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn config_problems_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let cfg = write_config(tmp.path(), r#"{"sweep": {"d_mm": [], "theta_deg": [45]}}"#);
    let o = lapai(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), r#"{"sead": 3}"#);
    let o = lapai(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));

    let o = lapai(&["sweep", "--out", out]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(
        tmp.path(),
        r#"{"sweep": {"schemes": [{"d_mm": 20, "theta_deg": 95}]}}"#,
    );
    let o = lapai(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));

    let o = lapai(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_csv_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("sweep");
    let o = lapai(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let got = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let want = std::fs::read_to_string(golden("sweep_small.csv")).unwrap();
    assert_eq!(got, want);
    assert_eq!(
        got.lines().next().unwrap(),
        "d_mm,theta_deg,class,contrast,node_count,best"
    );
    assert_eq!(got.lines().filter(|l| l.ends_with(",1")).count(), 1);
    for stem in [
        "scheme_d12_t45",
        "scheme_d12_t87",
        "scheme_d20_t45",
        "scheme_d20_t87",
    ] {
        assert!(out.join(format!("{stem}.pgm")).is_file());
        assert!(out.join(format!("{stem}.csv")).is_file());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let run = |dir: &str, seed: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut args = vec![
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let o = lapai(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("scheme_d20_t45.pgm")).unwrap()
    };
    let plain = run("a", None);
    assert_eq!(run("b", Some("11")), plain);
    assert_ne!(run("c", Some("12")), plain);
}

#[test]
fn single_steps_reproduce_the_sweep_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let cfg_s = cfg_path.to_str().unwrap();
    let steps = tmp.path().join("steps");
    let steps_s = steps.to_str().unwrap();
    let args = ["--config", cfg_s, "--out", steps_s];

    let o = lapai(
        &[
            &["simulate", "--d-mm", "20", "--theta-deg", "45"],
            &args[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = lapai(&[&["reconstruct"], &args[..]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = lapai(&[&["metrics"], &args[..]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // The frame on disk is exactly the in-process frame.
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let scene = phantom(&cfg).unwrap();
    let scheme = cfg.illumination.scheme(20.0, 45.0);
    let frame = simulate_scheme(&cfg, &scene, &scheme).unwrap();
    assert_eq!(read_frame(&steps.join("frame.paf")).unwrap(), frame);

    // Image bytes match the sweep's image for the same scheme.
    let sweep = tmp.path().join("sweep");
    let o = lapai(&["sweep", "--config", cfg_s, "--out", sweep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(steps.join("image.pgm")).unwrap(),
        std::fs::read(sweep.join("scheme_d20_t45.pgm")).unwrap()
    );
    assert_eq!(
        std::fs::read(steps.join("image.csv")).unwrap(),
        std::fs::read(sweep.join("scheme_d20_t45.csv")).unwrap()
    );

    // Metrics from the quantised PGM agree with the in-process numbers.
    let direct = evaluate_scheme(
        &cfg,
        &scene,
        SchemeEntry {
            d_mm: 20.0,
            theta_deg: 45.0,
        },
    )
    .unwrap()
    .report;
    let csv = std::fs::read_to_string(steps.join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], &["20", "45", direct.class.as_str()]);
    let c: f64 = row[3].parse().unwrap();
    assert!(
        (c - direct.contrast).abs() < 1e-3 * direct.contrast.abs().max(1.0),
        "{c} vs {}",
        direct.contrast
    );
}

#[test]
fn truncated_frame_reports_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let args = [
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let o = lapai(&[&["simulate"], &args[..]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let frame = out.join("frame.paf");
    let bytes = std::fs::read(&frame).unwrap();
    let cut = tmp.path().join("cut.paf");
    std::fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
    let o = lapai(
        &[
            &["reconstruct", "--frame", cut.to_str().unwrap()],
            &args[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(
        err.contains(&format!("offset {}", bytes.len() - 7)),
        "{err}"
    );

    let o = lapai(
        &[
            &[
                "reconstruct",
                "--frame",
                tmp.path().join("missing.paf").to_str().unwrap(),
            ],
            &args[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn threads_env_var_is_a_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let run = |dir: &str, env: Option<&str>, flag: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lapai"));
        cmd.args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        if let Some(n) = flag {
            cmd.args(["--threads", n]);
        }
        match env {
            Some(v) => cmd.env("LAPAI_THREADS", v),
            None => cmd.env_remove("LAPAI_THREADS"),
        };
        let o = cmd.output().unwrap();
        (o.status.code(), std::fs::read(out.join("sweep.csv")).ok())
    };
    let (code, a) = run("a", Some("1"), None);
    assert_eq!(code, Some(0));
    let (_, b) = run("b", Some("3"), Some("2"));
    assert_eq!(a, b);
    let (code, _) = run("c", Some("many"), None);
    assert_eq!(code, Some(1));
}
