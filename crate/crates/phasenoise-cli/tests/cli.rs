use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasenoise::fitting::{peak_model, peak_power};
use phasenoise::heterodyne::self_het_white_bumps;
use phasenoise::spectra::NoiseModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

const OMEGA0: f64 = 2.0 * PI * 1e6;

fn run(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phasenoise"));
    cmd.arg("--out-dir").arg(dir.join("out")).args(args);
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(body).unwrap()).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn synth_config(seed: u64) -> Value {
    json!({
        "$schema": "phasenoise/synth/v1",
        "model": {"kind": "composite", "terms": [
            {"kind": "white", "h0_hz2_per_hz": 100.0},
            {"kind": "servo_bump", "hg_hz2_per_hz": 1000.0, "sigma_g_hz": 5e3, "fg_hz": 200e3}
        ]},
        "trace": "phase",
        "duration_s": 1e-4,
        "bandwidth_hz": 2e6,
        "seed": seed
    })
}

#[test]
fn synth_is_deterministic_and_writes_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = write(d.path(), "synth.json", &synth_config(11));
        ok(&run(d.path(), &["synth", cfg.to_str().unwrap()]));
    }
    let ta = fs::read(a.path().join("out/trace.csv")).unwrap();
    let tb = fs::read(b.path().join("out/trace.csv")).unwrap();
    assert_eq!(ta, tb);
    let rows = read_csv(&a.path().join("out/trace.csv"));
    assert_eq!(rows.len(), 400);
    let m = read_json(&a.path().join("out/manifest.json"));
    assert_eq!(m["$schema"], "phasenoise/manifest/v1");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["outputs"], json!(["trace.csv", "trace.json"]));
    assert_eq!(m, read_json(&b.path().join("out/manifest.json")));

    // the seed override changes the trace and is recorded
    let c = tempfile::tempdir().unwrap();
    let cfg = write(c.path(), "synth.json", &synth_config(11));
    ok(&run(c.path(), &["--seed", "12", "synth", cfg.to_str().unwrap()]));
    assert_ne!(fs::read(c.path().join("out/trace.csv")).unwrap(), ta);
    assert_eq!(read_json(&c.path().join("out/manifest.json"))["resolved_config"]["seed"], 12);
}

#[test]
fn malformed_inputs_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.json");
    fs::write(&p, "{\"model\": ").unwrap();
    assert_eq!(code(&run(d.path(), &["synth", p.to_str().unwrap()])), 2);

    let mut cfg = synth_config(1);
    cfg["$schema"] = json!("phasenoise/synth/v9");
    let p = write(d.path(), "schema.json", &cfg);
    assert_eq!(code(&run(d.path(), &["synth", p.to_str().unwrap()])), 2);

    let mut cfg = synth_config(1);
    cfg["model"]["terms"][0]["h0_hz2_per_hz"] = json!(-1.0);
    let p = write(d.path(), "neg.json", &cfg);
    assert_eq!(code(&run(d.path(), &["synth", p.to_str().unwrap()])), 2);

    let mut cfg = synth_config(1);
    cfg["extra"] = json!(1);
    let p = write(d.path(), "extra.json", &cfg);
    let o = run(d.path(), &["synth", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));

    let missing = d.path().join("nope.json");
    assert_eq!(code(&run(d.path(), &["synth", missing.to_str().unwrap()])), 4);
}

fn heterodyne_config() -> Value {
    json!({
        "$schema": "phasenoise/heterodyne/v1",
        "model": {"kind": "white", "h0_hz2_per_hz": 13.0},
        "td_s": 54.45e-6,
        "freq_grid_hz": {"start_hz": 0.0, "stop_hz": 200e3, "step_hz": 250.0},
        "modes": ["exact", "weak_noise"]
    })
}

#[test]
fn heterodyne_modes_and_nulls() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "het.json", &heterodyne_config());
    ok(&run(d.path(), &["heterodyne", cfg.to_str().unwrap()]));
    let exact = read_csv(&d.path().join("out/self_het_exact.csv"));
    let weak = read_csv(&d.path().join("out/self_het_weak_noise.csv"));
    assert_eq!(exact.len(), 801);
    let td = 54.45e-6;
    for (e, w) in exact.iter().zip(&weak) {
        let f = e[0];
        if f < 1e3 {
            continue;
        }
        // white noise: both modes use the same closed form
        assert!(rel(e[1], w[1]) < 1e-6, "f={f}: {} vs {}", e[1], w[1]);
        let closed = self_het_white_bumps(13.0, &[], td, f);
        assert!(rel(e[1], closed) < 1e-6);
    }
    // scallop nulls sit far below their neighbours' maxima
    let at = |f: f64| exact.iter().min_by(|a, b| (a[0] - f).abs().total_cmp(&(b[0] - f).abs())).unwrap()[1];
    for k in 2..=5 {
        let null = k as f64 / td;
        let between = (k as f64 + 0.5) / td;
        assert!(at(null) < 0.05 * at(between), "k={k}");
    }
    let side = read_json(&d.path().join("out/self_het_exact.json"));
    assert_eq!(side["normalization"], "unit_integral");
    assert_eq!(side["has_delta_at_zero"], true);
    let w = side["delta_weight"].as_f64().unwrap();
    assert!(rel(w, (-4.0 * PI * PI * 13.0 * td).exp()) < 1e-9);
}

#[test]
fn heterodyne_requires_delay() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = heterodyne_config();
    cfg.as_object_mut().unwrap().remove("td_s");
    let p = write(d.path(), "het.json", &cfg);
    let o = run(d.path(), &["heterodyne", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("td_s"));
}

const TD: f64 = 54.45e-6;
const BUMPS: [(f64, f64, f64); 2] = [(25.0, 18e3, 130e3), (2000.0, 1.5e3, 234e3)];

/// Analyzer trace centred at 80 MHz: a fitted-form central peak plus the composite wing model,
/// with the peak sized so the total power is one before an arbitrary gain is applied.
fn write_measured_spectrum(dir: &Path, h0: f64, bumps: &[(f64, f64, f64)]) -> (PathBuf, PathBuf) {
    let window = 25e3;
    let step = 250.0;
    let offsets: Vec<f64> = (-2400..=2400).map(|k| k as f64 * step).collect();
    let wing = |d: f64| if d.abs() > window { self_het_white_bumps(h0, bumps, TD, d.abs()) } else { 0.0 };
    let wing_power: f64 = offsets.windows(2).map(|w| 0.5 * (wing(w[0]) + wing(w[1])) * step).sum();
    let (alpha, sigma) = (2.5, 240.0);
    let s_p = (1.0 - wing_power) / peak_power(alpha, 1.0);
    let gain = 3.7e6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut text = String::from("freq_hz,psd\n");
    for d in &offsets {
        let v = gain * (peak_model(alpha, sigma, s_p, *d) + wing(*d)) * (1.0 + noise.sample(&mut rng));
        text.push_str(&format!("{},{:e}\n", 80e6 + d, v));
    }
    let data = dir.join("data.csv");
    fs::write(&data, text).unwrap();
    let meta = write(dir, "meta.json", &json!({"rbw_hz": 100.0, "td_s": TD}));
    (data, meta)
}

#[test]
fn fit_recovers_measured_parameters() {
    let d = tempfile::tempdir().unwrap();
    let (data, meta) = write_measured_spectrum(d.path(), 13.0, &BUMPS);
    ok(&run(d.path(), &["fit", data.to_str().unwrap(), meta.to_str().unwrap(), "--n-bumps", "2"]));
    let fit = read_json(&d.path().join("out/noise_fit.json"));
    assert!(rel(fit["h0_hz2_per_hz"].as_f64().unwrap(), 13.0) < 0.05, "{fit}");
    for (b, (hg, sg, fg)) in fit["bumps"].as_array().unwrap().iter().zip(BUMPS) {
        assert!(rel(b["hg_hz2_per_hz"].as_f64().unwrap(), hg) < 0.05, "{b}");
        assert!(rel(b["sigma_g_hz"].as_f64().unwrap(), sg) < 0.05, "{b}");
        assert!(rel(b["fg_hz"].as_f64().unwrap(), fg) < 0.05, "{b}");
    }
    // loads directly as a noise model
    let model: NoiseModel = serde_json::from_value(fit.clone()).unwrap();
    assert_eq!(model.leaves().len(), 3);
    let peak = read_json(&d.path().join("out/peak_fit.json"));
    assert!(rel(peak["alpha"].as_f64().unwrap(), 2.5) < 0.05);
    let report = fs::read_to_string(d.path().join("out/fit_report.txt")).unwrap();
    assert!(report.contains("flagged") && report.contains("avoid"), "{report}");
    let manifest = read_json(&d.path().join("out/manifest.json"));
    for name in ["noise_fit.json", "peak_fit.json", "fit_report.txt", "error_budget.json", "normalized_spectrum.csv"] {
        assert!(manifest["outputs"].as_array().unwrap().contains(&json!(name)), "{name}");
    }
}

#[test]
fn fit_white_only() {
    let d = tempfile::tempdir().unwrap();
    let (data, meta) = write_measured_spectrum(d.path(), 40.0, &[]);
    ok(&run(d.path(), &["fit", data.to_str().unwrap(), meta.to_str().unwrap(), "--n-bumps", "0"]));
    let fit = read_json(&d.path().join("out/noise_fit.json"));
    assert!(rel(fit["h0_hz2_per_hz"].as_f64().unwrap(), 40.0) < 0.05, "{fit}");
    assert!(fit["bumps"].as_array().unwrap().is_empty());
}

#[test]
fn fit_rejects_flat_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let mut text = String::from("freq_hz,psd\n");
    for k in 0..200 {
        text.push_str(&format!("{},1.0\n", k as f64 * 100.0));
    }
    let data = d.path().join("flat.csv");
    fs::write(&data, text).unwrap();
    let meta = write(d.path(), "meta.json", &json!({"rbw_hz": 100.0, "td_s": TD}));
    assert_eq!(code(&run(d.path(), &["fit", data.to_str().unwrap(), meta.to_str().unwrap()])), 2);
}

fn simulate_config(h0: f64) -> Value {
    json!({
        "$schema": "phasenoise/simulate/v1",
        "drive": {"kind": "one_photon", "omega0_rad_per_s": OMEGA0},
        "gate": {"n": 0.5, "initial_state": "x_plus"},
        "noise": {"laser1": {"frequency": {"kind": "white", "h0_hz2_per_hz": h0}}},
        "trials": 200,
        "seed": 3,
        "synthesis": {"bandwidth_hz": 1e7}
    })
}

#[test]
fn simulate_sweep_is_linear_in_h0() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = simulate_config(0.0);
    cfg["sweep"] = json!({"path": "noise.laser1.frequency", "field": "h0_hz2_per_hz", "values": [1000.0, 2000.0, 4000.0]});
    let p = write(d.path(), "sim.json", &cfg);
    ok(&run(d.path(), &["simulate", p.to_str().unwrap()]));
    let rows = read_csv(&d.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let expected = PI.powi(3) * r[0] * 0.5 / OMEGA0;
        assert!((r[1] - expected).abs() < 3.0 * r[2] + 0.15 * expected, "{r:?} vs {expected}");
        assert_eq!(r[3], 200.0);
    }
    // common random numbers: the error scales exactly with h0 to first order
    assert!(rel(rows[2][1] / rows[0][1], 4.0) < 0.05);
}

#[test]
fn simulate_rejects_zero_trials_and_bad_sweeps() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "sim.json", &simulate_config(100.0));
    assert_eq!(code(&run(d.path(), &["--trials", "0", "simulate", p.to_str().unwrap()])), 2);
    let mut cfg = simulate_config(100.0);
    cfg["sweep"] = json!({"path": "noise.laser2", "field": "h0_hz2_per_hz", "values": [1.0]});
    let p = write(d.path(), "sweep.json", &cfg);
    assert_eq!(code(&run(d.path(), &["simulate", p.to_str().unwrap()])), 2);
}

#[test]
fn fit_output_drives_simulation() {
    let d = tempfile::tempdir().unwrap();
    let (data, meta) = write_measured_spectrum(d.path(), 13.0, &BUMPS);
    ok(&run(d.path(), &["fit", data.to_str().unwrap(), meta.to_str().unwrap()]));
    let fitted = d.path().join("fitted.json");
    fs::copy(d.path().join("out/noise_fit.json"), &fitted).unwrap();

    let mut cfg = simulate_config(0.0);
    cfg.as_object_mut().unwrap().remove("noise");
    cfg["noise_model_file"] = json!("fitted.json");
    cfg["trials"] = json!(100);
    let p = write(d.path(), "sim.json", &cfg);
    ok(&run(d.path(), &["simulate", p.to_str().unwrap()]));
    let est = read_json(&d.path().join("out/estimate.json"));
    let e = est["estimate"]["mean_error"].as_f64().unwrap();
    assert!(e > 0.0 && e < 1e-2, "{est}");
    let resolved = &read_json(&d.path().join("out/manifest.json"))["resolved_config"];
    assert_eq!(resolved["noise"]["laser1"]["frequency"]["kind"], "composite");
    assert!(resolved.get("noise_model_file").is_none());
}

fn analytic_config(n: Option<f64>, t_g: Option<f64>, averaging: &str) -> Value {
    let mut q = json!({"drive": {"kind": "one_photon", "omega0_rad_per_s": OMEGA0}, "averaging": averaging});
    if let Some(n) = n {
        q["n"] = json!(n);
    }
    if let Some(t) = t_g {
        q["t_g_s"] = json!(t);
    }
    json!({"$schema": "phasenoise/analytic/v1", "query": q, "noise": {"kind": "white", "h0_hz2_per_hz": 40.0}})
}

#[test]
fn analytic_benchmark_and_routing() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "q.json", &analytic_config(Some(0.5), None, "initial_x"));
    ok(&run(d.path(), &["analytic", p.to_str().unwrap()]));
    let r = read_json(&d.path().join("out/result.json"));
    assert!((r["estimate"]["mean_error"].as_f64().unwrap() - 9.87e-5).abs() < 1e-7);
    assert_eq!(r["estimate"]["method"], "analytic");

    let p = write(d.path(), "q2.json", &analytic_config(None, Some(1.3 * PI / OMEGA0), "initial_x"));
    ok(&run(d.path(), &["analytic", p.to_str().unwrap()]));
    assert_eq!(read_json(&d.path().join("out/result.json"))["estimate"]["method"], "quadrature");

    let p = write(d.path(), "q3.json", &analytic_config(Some(0.5), None, "sometimes"));
    assert_eq!(code(&run(d.path(), &["analytic", p.to_str().unwrap()])), 2);
}
