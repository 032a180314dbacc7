use std::path::PathBuf;

use tubelab::pipeline::*;

fn series(name: &str, eps: &[f64], values: &[f64], bound: Option<f64>) -> RatioSeries {
    RatioSeries {
        name: name.into(),
        variant: None,
        formula: format!("{name} formula"),
        target: 1.0,
        eps: eps.to_vec(),
        values: values.to_vec(),
        mandatory: true,
        require_monotone: true,
        final_tolerance: bound,
    }
}

const EPS: [f64; 5] = [0.3, 0.25, 0.2, 0.15, 0.1];

#[test]
fn config_json_round_trip() {
    let cfg = RunConfig::default();
    cfg.validate().unwrap();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    // output location, job count and caching do not change the hash
    let moved = RunConfig { out_dir: PathBuf::from("/elsewhere"), jobs: 3, cache: false, ..cfg.clone() };
    assert_eq!(moved.hash(), cfg.hash());
    assert_eq!(moved.profile_hash(), cfg.profile_hash());
    let other = RunConfig { sweep: vec![0.3, 0.2], ..cfg.clone() };
    assert_ne!(other.hash(), cfg.hash());
    assert_eq!(other.profile_hash(), cfg.profile_hash());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cfg.json");
    std::fs::write(&p, &text).unwrap();
    assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    assert!(RunConfig::load(&dir.path().join("missing.json")).is_err());
}

#[test]
fn config_validation_rejects_bad_input() {
    let ok = RunConfig::default();
    let bad = [
        RunConfig { n: 2, ..ok.clone() },
        RunConfig { sweep: vec![], ..ok.clone() },
        RunConfig { sweep: vec![0.2, 0.3], ..ok.clone() },
        RunConfig { sweep: vec![0.6, 0.3], ..ok.clone() },
        RunConfig { sweep: vec![0.3, 0.04], ..ok.clone() },
        RunConfig { x0: vec![0.5, 1.2], ..ok.clone() },
        RunConfig { k_tilde: vec![-1.0], ..ok.clone() },
        RunConfig { truncation_radii: vec![12.0, 8.0], ..ok.clone() },
        RunConfig { window_samples: 3, ..ok.clone() },
    ];
    for c in &bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    // small ε is accepted in cascade-only mode
    RunConfig { sweep: vec![0.3, 0.04], cascade_only: true, ..ok.clone() }.validate().unwrap();
    // the dumbbell tube must reuse the profile discretization
    let mut m = ok.clone();
    m.mesh.q = 0.4;
    assert!(m.validate().is_err());
    let mut m = ok.clone();
    m.mesh.order = 1;
    assert!(m.validate().is_err());
}

#[test]
fn classification_of_synthetic_series() {
    let tol = Tolerances::default();
    let conv: Vec<f64> = EPS.iter().map(|e| 1.0 + 0.5 * e).collect();
    let v = classify(&series("R2", &EPS, &conv, Some(0.15)), &tol);
    assert_eq!(v.trend, Trend::Converging);
    assert!(v.monotone && v.pass);
    assert!((v.slope - 1.0).abs() < 1e-12);
    assert!((v.final_deviation - 0.05).abs() < 1e-15);
    // converging from below counts the same
    let below: Vec<f64> = EPS.iter().map(|e| 1.0 - e * e).collect();
    let v = classify(&series("R1", &EPS, &below, Some(0.05)), &tol);
    assert!(v.pass && (v.slope - 2.0).abs() < 1e-12);
    // a flat offset fails
    let v = classify(&series("R3", &EPS, &[1.3; 5], Some(0.15)), &tol);
    assert_eq!(v.trend, Trend::Flat);
    assert!(!v.pass && !v.monotone);
    // converging but still too far off
    let slow: Vec<f64> = EPS.iter().map(|e| 1.0 + 3.0 * e).collect();
    let v = classify(&series("R4", &EPS, &slow, Some(0.15)), &tol);
    assert!(v.trend == Trend::Converging && !v.pass);
    // trend-only series ignore the final size
    assert!(classify(&series("B", &EPS, &slow, None), &tol).pass);
    // growing deviations diverge
    let grow: Vec<f64> = EPS.iter().map(|e| 1.0 + 0.01 / e).collect();
    assert_eq!(classify(&series("R6", &EPS, &grow, None), &tol).trend, Trend::Diverging);
    // a wiggle breaks monotonicity only when it is required
    let wiggle = [1.3, 1.2, 1.22, 1.1, 1.05];
    let mut s = series("R5", &EPS, &wiggle, Some(0.15));
    assert!(!classify(&s, &tol).pass);
    s.require_monotone = false;
    assert!(classify(&s, &tol).pass);
    // missing values are skipped by the trend fit
    let gap = [1.15, f64::NAN, 1.1, 1.075, 1.05];
    let v = classify(&series("R2", &EPS, &gap, None), &tol);
    assert_eq!(v.trend, Trend::Converging);
    assert!(classify(&series("R2", &[], &[], None), &tol).final_deviation.is_nan());
}

#[test]
fn csv_and_svg_layout() {
    let a = series("R5", &EPS, &[1.3, 1.2, 1.15, 1.1, 1.05], None);
    let mut b = series("R5", &EPS, &[0.7, 0.8, f64::NAN, 0.9, 0.95], None);
    b.variant = Some("k=1.5".into());
    let csv = series_csv(&[&a, &b]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + EPS.len());
    assert_eq!(lines[0], "eps,R5,k=1.5");
    assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 3));
    assert!(lines[3].ends_with("NaN"));
    let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, vec![0.3, 1.3, 0.7]);
    let svg = series_svg("R5", &[&a, &b]);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    // the NaN sample is left out of its polyline
    let pts: Vec<usize> = svg
        .lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| l.split("points=\"").nth(1).unwrap().split('"').next().unwrap().split(' ').count())
        .collect();
    assert_eq!(pts, vec![5, 4]);
    assert!(series_svg("empty", &[]).contains("<title>empty</title>"));
}

fn small_config(dir: &std::path::Path) -> RunConfig {
    RunConfig { sweep: vec![0.3, 0.2], out_dir: dir.to_path_buf(), ..RunConfig::default() }
}

#[test]
fn run_emit_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let record = run(&cfg).unwrap();
    assert_eq!(record.sweep.len(), 2);
    assert!(record.sweep.iter().all(|e| e.record.is_some() && e.error.is_none()));
    assert_eq!(record.config_hash, cfg.hash());
    // profile constants are cached under the profile hash and reused
    let cached = run_profiles(&cfg).unwrap();
    assert_eq!(cached.constants, record.constants);
    assert!(dir.path().join("cache").read_dir().unwrap().count() == 1);

    let files = emit(&record, dir.path(), &[Format::Record, Format::Csv, Format::Svg]).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let names: Vec<&str> = record.series.iter().map(|s| s.name.as_str()).collect();
    for n in ["R1", "R2", "R3", "R5", "R6"] {
        assert!(names.contains(&n), "{n}");
        assert!(dir.path().join(format!("{n}.csv")).exists());
        assert!(dir.path().join(format!("{n}.svg")).exists());
    }
    let back = load(&dir.path().join("record.json")).unwrap();
    // compare through the serialized form, which treats NaN as null on both sides
    assert_eq!(to_json(&back).unwrap(), to_json(&record).unwrap());
    // re-verifying a loaded record reproduces the stored verdicts
    let v = verify(&back, &back.config.tolerances);
    assert_eq!(to_json(&v).unwrap(), to_json(&record.verdicts).unwrap());
    let text = render_verdicts(&v);
    assert_eq!(text.lines().count(), v.series.len() + v.checks.len() + 1);
    assert!(text.lines().last().unwrap().starts_with("verdict: "));
    assert_eq!(v.pass, v.first_failure.is_none());

    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    assert!(load(&dir.path().join("broken.json")).is_err());
}

#[test]
fn verdict_text_names_the_first_failure() {
    let tol = Tolerances::default();
    let v = Verdicts {
        series: vec![classify(&series("R3", &EPS, &[1.3; 5], Some(0.15)), &tol)],
        checks: vec![Check { name: "profile identities".into(), value: f64::NAN, bound: 1e-3, pass: false }],
        pass: false,
        first_failure: Some("R3: R3 formula".into()),
    };
    let text = render_verdicts(&v);
    assert!(text.starts_with("FAIL  R3"));
    assert!(text.contains("profile identities = NaN"));
    assert!(text.ends_with("verdict: fail, first broken statement: R3: R3 formula\n"));
    let json = to_json(&v).unwrap();
    let back: Verdicts = serde_json::from_str(&json).unwrap();
    assert!(back.checks[0].value.is_nan());
    assert_eq!(back.series, v.series);
}
