use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn trendscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trendscan"))
        .args(args)
        .env_remove("TRENDSCAN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn weekdays(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2005, 1, 3).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Writes a sidecar-free series CSV and returns its path and dates.
fn write_series(dir: &Path, name: &str, values: &[f64]) -> (PathBuf, Vec<NaiveDate>) {
    let dates = weekdays(values.len());
    let mut text = String::from("date,mean_correlation\n");
    for (d, v) in dates.iter().zip(values) {
        text.push_str(&format!("{d},{v:.17e}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    (path, dates)
}

fn noise(seed: u64, n: usize, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

fn knee(n: usize, at: usize, seed: u64) -> Vec<f64> {
    let e = noise(seed, n, 0.002);
    (0..n)
        .map(|i| 0.3 + 0.002 * i as f64 + if i > at { 0.02 * (i - at) as f64 } else { 0.0 } + e[i])
        .collect()
}

/// Short decline, flat stretch, then a rise of 0.5 per 100 days after `onset`.
fn onset_series(onset: usize, n: usize) -> Vec<f64> {
    let e = noise(17, n, 0.02);
    (0..n)
        .map(|i| {
            let base = if i < 50 {
                0.45 - 0.003 * i as f64
            } else if i <= onset {
                0.3
            } else {
                0.3 + 0.005 * (i - onset) as f64
            };
            base + e[i]
        })
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn preprocess_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixtures().join("prices3.csv");
    let o = trendscan(&[
        "preprocess", "--input", p(&input), "--output-dir", p(dir.path()),
        "--tau", "6", "--norm-window", "4", "--stride", "3", "--coverage", "0.9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("retained 3 of 3 tickers"));
    for name in [
        "correlation.csv",
        "correlation.meta.json",
        "correlation_thinned.csv",
        "correlation_thinned.meta.json",
    ] {
        let got = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let want = std::fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = trendscan(&["preprocess", "--input", p(&missing), "--output-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"));
    let o = trendscan(&["analyze", "--output-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--input"));
}

#[test]
fn full_coverage_threshold_rejects_gappy_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // Every ticker misses at least one day.
    let mut text = String::from("date,A,B,C\n");
    for (i, d) in weekdays(30).iter().enumerate() {
        let cell = |k: usize| if i == 3 + 5 * k { String::new() } else { format!("{}", 10.0 + (i * (k + 1)) as f64 * 0.1) };
        text.push_str(&format!("{d},{},{},{}\n", cell(0), cell(1), cell(2)));
    }
    let input = dir.path().join("gappy.csv");
    std::fs::write(&input, text).unwrap();
    let o = trendscan(&[
        "preprocess", "--input", p(&input), "--output-dir", p(dir.path()),
        "--tau", "6", "--norm-window", "4", "--coverage", "1.0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no ticker qualifies"), "{}", stderr(&o));
}

#[test]
fn analyze_prints_knee_date_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (input, dates) = write_series(dir.path(), "knee.csv", &knee(60, 30, 1));
    let out = dir.path().join("out");
    let o = trendscan(&["analyze", "--input", p(&input), "--output-dir", p(&out), "--num-cps", "1", "--top-k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&format!("MAP: {} (#30)", dates[30])), "{}", stdout(&o));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("posterior.json")).unwrap()).unwrap();
    assert_eq!(summary["Z_m"], "58");
    assert_eq!(summary["map"]["indices"][0], 30);
    assert_eq!(summary["top_k"].as_array().unwrap().len(), 3);
    let marg = std::fs::read_to_string(out.join("marginals.csv")).unwrap();
    assert!(marg.starts_with("date,ordinal_1\n"));
    assert_eq!(marg.lines().count(), 61);
    let fit = std::fs::read_to_string(out.join("fit.csv")).unwrap();
    assert!(fit.starts_with("date,mean,sigma,lower,upper\n"));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("plot.svg").exists());
}

#[test]
fn full_scale_count_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_series(dir.path(), "s.csv", &knee(132, 70, 2));
    let o = trendscan(&["marginals", "--input", p(&input), "--output-dir", p(dir.path()), "--num-cps", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("11358880 configurations evaluated"), "{}", stdout(&o));
}

#[test]
fn oversized_enumeration_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_series(dir.path(), "long.csv", &knee(600, 300, 3));
    let o = trendscan(&["analyze", "--input", p(&input), "--output-dir", p(dir.path()), "--num-cps", "5"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("626677265214"));
    assert!(stderr(&o).contains("stride"));
    let o = trendscan(&[
        "fit", "--input", p(&input), "--output-dir", p(dir.path()), "--num-cps", "2", "--budget-override", "1000",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn online_detects_onset_and_reports_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let (input, dates) = write_series(dir.path(), "onset.csv", &onset_series(250, 550));
    let out = dir.path().join("online");
    let o = trendscan(&[
        "online", "--input", p(&input), "--output-dir", p(&out), "--stride", "2",
        "--onset", &dates[250].to_string(), "--svg",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sensitivity.json")).unwrap()).unwrap();
    let horizon = report["horizon_trading_days"].as_u64().expect("detected");
    assert!(horizon > 0);
    let map: NaiveDate = report["map_location"].as_str().unwrap().parse().unwrap();
    let map_pos = dates.iter().position(|d| *d == map).unwrap() as i64;
    assert!((map_pos - 250).abs() <= 100);
    assert_eq!(report["stride"], 2);
    assert_eq!(report["tolerance_days"], 100);
    assert_eq!(report["series_hash"].as_str().unwrap().len(), 64);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("cut_date,map_date,map_mass\n"));
    for name in ["segment_posterior.json", "segment_marginals.csv", "segment_fit.csv", "plot.svg"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn online_date_errors_and_vacuous_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let (input, dates) = write_series(dir.path(), "onset.csv", &onset_series(250, 400));
    let o = trendscan(&[
        "sensitivity", "--input", p(&input), "--output-dir", p(dir.path()),
        "--onset", &dates[300].to_string(), "--end", &dates[280].to_string(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = trendscan(&["sensitivity", "--input", p(&input), "--output-dir", p(dir.path()), "--onset", "2030-01-01"]);
    assert_eq!(o.status.code(), Some(2));

    let out = dir.path().join("vacuous");
    let o = trendscan(&[
        "sensitivity", "--input", p(&input), "--output-dir", p(&out), "--stride", "5",
        "--onset", &dates[251].to_string(), "--tolerance-days", "1000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sensitivity.json")).unwrap()).unwrap();
    // Thinned stamps are 0, 5, ...; the first at or after 251 is 255.
    assert_eq!(report["detection_cut"], dates[255].to_string());
    assert_eq!(report["horizon_trading_days"], 4);
    assert_eq!(std::fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 2);
    assert!(!out.join("segment_fit.csv").exists());
}

#[test]
fn undetected_onset_is_a_finding() {
    let dir = tempfile::tempdir().unwrap();
    let flat: Vec<f64> = noise(5, 200, 0.02).iter().map(|e| 0.3 + e).collect();
    let (input, dates) = write_series(dir.path(), "flat.csv", &flat);
    let o = trendscan(&[
        "sensitivity", "--input", p(&input), "--output-dir", p(dir.path()), "--stride", "4",
        "--onset", &dates[20].to_string(), "--tolerance-days", "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sensitivity.json")).unwrap()).unwrap();
    assert!(report["detection_cut"].is_null());
    assert!(report["horizon_trading_days"].is_null());
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_series(dir.path(), "knee.csv", &knee(50, 20, 9));
    let first = dir.path().join("first");
    let o = trendscan(&[
        "analyze", "--input", p(&input), "--output-dir", p(&first), "--num-cps", "3", "--svg", "--workers", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let second = dir.path().join("second");
    let o = Command::new(env!("CARGO_BIN_EXE_trendscan"))
        .args(["analyze", "--config", p(&first.join("manifest.json")), "--output-dir", p(&second)])
        .env("TRENDSCAN_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files(&first), files(&second));
    assert_eq!(files(&first).len(), 5);

    // A changed input is caught instead of silently producing other outputs.
    std::fs::write(&input, "date,mean_correlation\n2005-01-03,0.1\n").unwrap();
    let o = trendscan(&["analyze", "--config", p(&first.join("manifest.json")), "--output-dir", p(&second)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("changed since the manifest"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_series(dir.path(), "knee.csv", &knee(40, 20, 4));
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, format!("input={}\nnum-cps=2\ntop-k=4\n", p(&input))).unwrap();
    let out = dir.path().join("out");
    let o = trendscan(&["analyze", "--config", p(&cfg), "--output-dir", p(&out), "--num-cps", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["parameters"]["num-cps"], "1");
    assert_eq!(manifest["parameters"]["top-k"], "4");
    assert_eq!(manifest["parameters"]["band-multiplier"], "3");

    std::fs::write(&cfg, "bogus=1\n").unwrap();
    let o = trendscan(&["analyze", "--config", p(&cfg), "--input", p(&input), "--output-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evidence_prefers_the_true_model_and_threads_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = write_series(dir.path(), "knee.csv", &knee(60, 30, 6));
    let o = trendscan(&["evidence", "--input", p(&input), "--output-dir", p(dir.path()), "--num-cps", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("evidence.csv")).unwrap();
    assert!(csv.starts_with("m,configurations,log_evidence,model_probability\n"));
    assert_eq!(csv.lines().count(), 4);
    let log_e: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(log_e[1] > log_e[0]);

    let o = Command::new(env!("CARGO_BIN_EXE_trendscan"))
        .args(["evidence", "--input", p(&input), "--output-dir", p(dir.path())])
        .env("TRENDSCAN_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TRENDSCAN_THREADS"));
}
