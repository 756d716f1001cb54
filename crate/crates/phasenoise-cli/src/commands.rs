//! Subcommand configs and runners.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

use phasenoise::analytic::{self, AnalyticError, ErrorQuery};
use phasenoise::dynamics::{
    monte_carlo_run, DriveConfig, DriveNoise, DynamicsError, Frame, GateSpec, MonteCarloRequest,
};
use phasenoise::fitting::{
    error_budget, fit_noise_model, fit_peak, ingest_spectrum, normalize_record, FitError, NoiseFitOptions, SpectrumMeta,
    SpectrumRecord,
};
use phasenoise::heterodyne::{lineshape_se, self_het_spectrum, HeterodyneConfig, HeterodyneError, SpectrumCurve, SpectrumMode};
use phasenoise::ode::{IntegratorConfig, OdeError};
use phasenoise::spectra::{NoiseModel, SpectraError};
use phasenoise::synth::{synth_frequency_trace, synth_intensity_trace, synth_phase_trace, SynthError, SynthesisConfig, TraceKind};

use crate::output::OutputSet;
use crate::CliError;

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

pub const SYNTH_SCHEMA: &str = "phasenoise/synth/v1";
pub const HETERODYNE_SCHEMA: &str = "phasenoise/heterodyne/v1";
pub const FIT_META_SCHEMA: &str = "phasenoise/fit-meta/v1";
pub const SIMULATE_SCHEMA: &str = "phasenoise/simulate/v1";
pub const ANALYTIC_SCHEMA: &str = "phasenoise/analytic/v1";

fn check_schema(found: &Option<String>, expected: &str) -> Result<(), CliError> {
    match found {
        Some(s) if s != expected => {
            Err(CliError::Validation(format!("$schema is \"{s}\" but this command reads \"{expected}\"")))
        }
        _ => Ok(()),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configs always serialize")
}

// ---------------------------------------------------------------------------------------------
// error classification

fn spectra_err(e: SpectraError) -> CliError {
    match e {
        SpectraError::Quadrature(q) => CliError::Numerical(q.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::Spectra(s) => spectra_err(s),
        other => CliError::Validation(other.to_string()),
    }
}

fn heterodyne_err(e: HeterodyneError) -> CliError {
    match e {
        HeterodyneError::Model(s) => spectra_err(s),
        HeterodyneError::InvalidConfig(_) | HeterodyneError::Regime { .. } => CliError::Validation(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn fit_err(e: FitError) -> CliError {
    match e {
        FitError::NonConvergence { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn dynamics_err(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Synth(s) => synth_err(s),
        DynamicsError::Integrator(OdeError::InvalidConfig(m)) => CliError::Validation(m),
        DynamicsError::Trial { ref source, .. } => match dynamics_err((**source).clone()) {
            CliError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        },
        DynamicsError::Integrator(_) | DynamicsError::NormDrift { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn analytic_err(e: AnalyticError) -> CliError {
    match e {
        AnalyticError::Quadrature(q) => CliError::Numerical(q.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

// ---------------------------------------------------------------------------------------------
// synth

fn default_trace() -> TraceKind {
    TraceKind::Phase
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCommandConfig {
    #[serde(rename = "$schema", default)]
    pub schema: Option<String>,
    pub model: NoiseModel,
    #[serde(default = "default_trace")]
    pub trace: TraceKind,
    pub duration_s: f64,
    /// Either the bandwidth or the sample count sets the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

pub fn cmd_synth(config: &Path, out: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let mut cfg: SynthCommandConfig = read_json(config)?;
    check_schema(&cfg.schema, SYNTH_SCHEMA)?;
    cfg.schema = Some(SYNTH_SCHEMA.into());
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let scfg = match (cfg.bandwidth_hz, cfg.num_samples) {
        (Some(b), None) => SynthesisConfig::new(cfg.duration_s, b, cfg.seed),
        (None, Some(m)) => SynthesisConfig::from_samples(cfg.duration_s, m, cfg.seed),
        _ => return Err(CliError::Validation("set exactly one of bandwidth_hz and num_samples".into())),
    }
    .map_err(synth_err)?;
    let trace = match cfg.trace {
        TraceKind::Phase => synth_phase_trace(&cfg.model, &scfg),
        TraceKind::FrequencyDeviation => synth_frequency_trace(&cfg.model, &scfg),
        TraceKind::RelativeIntensity => synth_intensity_trace(&cfg.model, &scfg),
    }
    .map_err(synth_err)?;
    let unit = match cfg.trace {
        TraceKind::Phase => "phase_rad",
        TraceKind::FrequencyDeviation => "frequency_hz",
        TraceKind::RelativeIntensity => "relative_intensity",
    };
    let mut set = OutputSet::new(out)?;
    set.csv("trace.csv", &["time_s", unit], trace.times.iter().zip(&trace.values).map(|(t, v)| vec![*t, *v]))?;
    set.json(
        "trace.json",
        &serde_json::json!({
            "$schema": "phasenoise/trace/v1",
            "kind": trace.kind,
            "model": trace.model,
            "seed": trace.seed,
            "rng": trace.rng,
            "config": trace.config,
        }),
    )?;
    set.finish("synth", Some(cfg.seed), to_value(&cfg))
}

// ---------------------------------------------------------------------------------------------
// heterodyne

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreqGrid {
    List(Vec<f64>),
    Range { start_hz: f64, stop_hz: f64, step_hz: f64 },
}

impl FreqGrid {
    fn points(&self) -> Result<Vec<f64>, CliError> {
        match *self {
            FreqGrid::List(ref v) => Ok(v.clone()),
            FreqGrid::Range { start_hz, stop_hz, step_hz } => {
                if !(step_hz > 0.0 && stop_hz >= start_hz) {
                    return Err(CliError::Validation("freq_grid_hz range needs step_hz > 0 and stop_hz >= start_hz".into()));
                }
                let n = ((stop_hz - start_hz) / step_hz + 1e-9).floor() as usize;
                if n > 10_000_000 {
                    return Err(CliError::Validation(format!("freq_grid_hz range has {n} points")));
                }
                Ok((0..=n).map(|k| start_hz + k as f64 * step_hz).collect())
            }
        }
    }
}

fn default_modes() -> Vec<SpectrumMode> {
    vec![SpectrumMode::Exact]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterodyneCommandConfig {
    #[serde(rename = "$schema", default)]
    pub schema: Option<String>,
    pub model: NoiseModel,
    pub td_s: f64,
    pub freq_grid_hz: FreqGrid,
    #[serde(default = "default_modes")]
    pub modes: Vec<SpectrumMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_hz: Option<f64>,
    /// Also emit the laser lineshape in each mode.
    #[serde(default)]
    pub lineshape: bool,
}

fn mode_name(m: SpectrumMode) -> &'static str {
    match m {
        SpectrumMode::Exact => "exact",
        SpectrumMode::WeakNoise => "weak_noise",
    }
}

fn write_curve(set: &mut OutputSet, stem: &str, curve: &SpectrumCurve, extra: Value) -> Result<(), CliError> {
    set.csv(&format!("{stem}.csv"), &["freq_hz", "psd"], curve.frequencies.iter().zip(&curve.values).map(|(f, v)| vec![*f, *v]))?;
    let mut sidecar = serde_json::json!({
        "$schema": "phasenoise/spectrum/v1",
        "normalization": curve.normalization,
        "has_delta_at_zero": curve.has_delta_at_zero,
        "delta_weight": curve.delta_weight,
    });
    if let (Value::Object(s), Value::Object(e)) = (&mut sidecar, extra) {
        s.extend(e);
    }
    set.json(&format!("{stem}.json"), &sidecar)
}

pub fn cmd_heterodyne(config: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let mut cfg: HeterodyneCommandConfig = read_json(config)?;
    check_schema(&cfg.schema, HETERODYNE_SCHEMA)?;
    cfg.schema = Some(HETERODYNE_SCHEMA.into());
    cfg.model.validate().map_err(spectra_err)?;
    let mut hcfg = HeterodyneConfig::new(cfg.td_s, cfg.freq_grid_hz.points()?);
    hcfg.tau_max = cfg.tau_max_s;
    hcfg.shift_nu_s = cfg.shift_hz;
    hcfg.validate().map_err(heterodyne_err)?;
    if cfg.modes.is_empty() {
        return Err(CliError::Validation("modes must list at least one of exact, weak_noise".into()));
    }
    let mut set = OutputSet::new(out)?;
    for &mode in &cfg.modes {
        let extra = serde_json::json!({ "td_s": cfg.td_s, "mode": mode, "model": cfg.model });
        let si = self_het_spectrum(&cfg.model, &hcfg, mode).map_err(heterodyne_err)?;
        write_curve(&mut set, &format!("self_het_{}", mode_name(mode)), &si, extra.clone())?;
        if cfg.lineshape {
            let se = lineshape_se(&cfg.model, &hcfg, mode).map_err(heterodyne_err)?;
            write_curve(&mut set, &format!("lineshape_{}", mode_name(mode)), &se, extra)?;
        }
    }
    set.finish("heterodyne", None, to_value(&cfg))
}

// ---------------------------------------------------------------------------------------------
// fit

fn default_window() -> f64 {
    25e3
}

fn default_budget_omega0() -> f64 {
    2.0 * std::f64::consts::PI * 1e6
}

fn default_budget_n() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default = "default_budget_omega0")]
    pub omega0_rad_per_s: f64,
    #[serde(default = "default_budget_n")]
    pub n: f64,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self { omega0_rad_per_s: default_budget_omega0(), n: default_budget_n() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    #[serde(rename = "$schema", default)]
    pub schema: Option<String>,
    pub rbw_hz: f64,
    pub td_s: f64,
    /// Data already centred and scaled to unit total power; skips the peak stage.
    #[serde(default)]
    pub normalized: bool,
    #[serde(default = "default_window")]
    pub peak_window_hz: f64,
    #[serde(default)]
    pub budget: BudgetSpec,
}

#[derive(Debug, Deserialize)]
struct SpectrumRow {
    freq_hz: f64,
    psd: f64,
}

fn read_spectrum(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut f = Vec::new();
    let mut p = Vec::new();
    for row in rdr.deserialize::<SpectrumRow>() {
        let row = row.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io(format!("{}: {e}", path.display())),
            _ => CliError::Validation(format!("{}: {e}", path.display())),
        })?;
        f.push(row.freq_hz);
        p.push(row.psd);
    }
    Ok((f, p))
}

pub fn cmd_fit(data: &Path, meta_path: &Path, n_bumps: usize, out: &Path) -> Result<PathBuf, CliError> {
    let mut meta: FitMeta = read_json(meta_path)?;
    check_schema(&meta.schema, FIT_META_SCHEMA)?;
    meta.schema = Some(FIT_META_SCHEMA.into());
    let (f, p) = read_spectrum(data)?;
    let sm = SpectrumMeta { rbw: meta.rbw_hz, delay_td: meta.td_s };
    let mut set = OutputSet::new(out)?;
    let mut report = String::new();
    let record = if meta.normalized {
        if f.windows(2).any(|w| w[1] <= w[0]) || p.iter().any(|v| !(*v >= 0.0)) || f.len() < 50 {
            return Err(CliError::Validation(format!(
                "{}: need >= 50 rows, increasing freq_hz and psd >= 0",
                data.display()
            )));
        }
        SpectrumRecord { frequencies: f, psd: p, rbw: sm.rbw, delay_td: sm.delay_td, center_found: 0.0, normalization_applied: true }
    } else {
        let rec = ingest_spectrum(&f, &p, sm).map_err(fit_err)?;
        let peak = fit_peak(&rec, meta.peak_window_hz).map_err(fit_err)?;
        report.push_str(&format!(
            "centre           {:.9e} Hz\npeak alpha       {:.6}\npeak sigma       {:.6e} Hz\npeak FWHM        {:.6e} Hz\npeak power       {:.6e} (record units)\n",
            rec.center_found, peak.alpha, peak.sigma, peak.fwhm, peak.peak_power
        ));
        set.json("peak_fit.json", &peak)?;
        normalize_record(&rec, &peak, meta.peak_window_hz)
    };
    set.csv(
        "normalized_spectrum.csv",
        &["freq_hz", "psd"],
        record.frequencies.iter().zip(&record.psd).map(|(f, v)| vec![*f, *v]),
    )?;
    let opts = NoiseFitOptions { peak_exclusion: meta.peak_window_hz, ..NoiseFitOptions::default() };
    let fit = fit_noise_model(&record, n_bumps, &opts).map_err(fit_err)?;
    set.json("noise_fit.json", &fit)?;
    let budget = error_budget(&fit, meta.budget.omega0_rad_per_s, meta.budget.n);
    set.json("error_budget.json", &budget)?;

    report.push_str(&format!("white h0         {:.6e} Hz^2/Hz\n", fit.h0));
    for (i, b) in fit.bumps.iter().enumerate() {
        report.push_str(&format!(
            "bump {}           hg {:.6e} Hz^2/Hz, sigma_g {:.6e} Hz, fg {:.6e} Hz, s_g {:.6e}\n",
            i + 1,
            b.hg,
            b.sigma_g,
            b.fg,
            b.s_g
        ));
    }
    report.push_str(&format!("log residual     {:.6e}\n", fit.residual_norm));
    report.push_str(&format!(
        "budget           Omega0 {:.6e} rad/s, N {}: white error {:.6e}, total {:.6e}\n",
        budget.omega0, budget.n, budget.white_error, budget.total_error
    ));
    report.push_str(&format!("s_g threshold    {:.6e}\n", budget.s_g_threshold));
    for b in &budget.bumps {
        if b.exceeds_threshold {
            report.push_str(&format!("flagged          bump at {:.6e} Hz: s_g {:.6e} exceeds the threshold\n", b.fg, b.s_g));
        }
    }
    for w in &budget.avoid_windows {
        report.push_str(&format!(
            "avoid            Omega/2pi in [{:.6e}, {:.6e}] Hz (bump at {:.6e} Hz)\n",
            w.avoid_lo, w.avoid_hi, w.fg
        ));
    }
    for w in &fit.warnings {
        report.push_str(&format!("warning          {w}\n"));
    }
    set.text("fit_report.txt", &report)?;
    let resolved = serde_json::json!({
        "meta": meta,
        "n_bumps": n_bumps,
        "data_digest": crate::output::digest(&serde_json::json!(record.psd)),
    });
    set.finish("fit", None, resolved)
}

// ---------------------------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub bandwidth_hz: f64,
    /// Trace length; must cover the gate. Defaults to `num_samples / (2·bandwidth_hz)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Defaults to 1000 when `duration_s` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<usize>,
}

const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Dotted path into the config, e.g. `noise.laser1.frequency`.
    pub path: String,
    /// Field set within that subtree, e.g. `h0_hz2_per_hz`.
    pub field: String,
    pub values: Vec<f64>,
    /// Set every occurrence of `field` under `path` rather than the first.
    #[serde(default)]
    pub all: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCommandConfig {
    #[serde(rename = "$schema", default)]
    pub schema: Option<String>,
    pub drive: DriveConfig,
    pub gate: GateSpec,
    #[serde(default)]
    pub noise: DriveNoise,
    /// A `NoiseModel` JSON file (a `fit` result loads directly) used as the frequency noise of
    /// the first laser, and of the second when `noise_model_both` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_model_file: Option<PathBuf>,
    #[serde(default)]
    pub noise_model_both: bool,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default)]
    pub state_averaged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn set_field(v: &mut Value, field: &str, x: f64, all: bool) -> usize {
    match v {
        Value::Object(map) => {
            let mut n = 0;
            if let Some(slot) = map.get_mut(field) {
                *slot = serde_json::json!(x);
                n += 1;
                if !all {
                    return n;
                }
            }
            for (k, child) in map.iter_mut() {
                if k == field {
                    continue;
                }
                n += set_field(child, field, x, all);
                if n > 0 && !all {
                    return n;
                }
            }
            n
        }
        Value::Array(items) => {
            let mut n = 0;
            for item in items {
                n += set_field(item, field, x, all);
                if n > 0 && !all {
                    return n;
                }
            }
            n
        }
        _ => 0,
    }
}

fn apply_sweep(base: &Value, sweep: &Sweep, x: f64) -> Result<SimulateCommandConfig, CliError> {
    let mut v = base.clone();
    let mut node = &mut v;
    for key in sweep.path.split('.').filter(|k| !k.is_empty()) {
        node = node
            .get_mut(key)
            .ok_or_else(|| CliError::Validation(format!("sweep.path: no `{key}` in the resolved config ({})", sweep.path)))?;
    }
    if set_field(node, &sweep.field, x, sweep.all) == 0 {
        return Err(CliError::Validation(format!("sweep.field: `{}` not found under `{}`", sweep.field, sweep.path)));
    }
    serde_json::from_value(v).map_err(|e| CliError::Validation(format!("sweep value {x}: {e}")))
}

fn request(cfg: &SimulateCommandConfig) -> Result<MonteCarloRequest, CliError> {
    cfg.drive.validate().map_err(dynamics_err)?;
    let t_g = cfg.gate.gate_time(cfg.drive.effective_rabi()).map_err(dynamics_err)?;
    let spec = &cfg.synthesis;
    let synthesis = match (spec.duration_s, spec.num_samples) {
        (Some(d), None) => SynthesisConfig::new(d, spec.bandwidth_hz, cfg.seed),
        (d, m) => {
            if d.is_some() {
                return Err(CliError::Validation("synthesis: set at most one of duration_s and num_samples".into()));
            }
            let m = m.unwrap_or(DEFAULT_SAMPLES);
            if !(spec.bandwidth_hz > 0.0) {
                return Err(CliError::Validation("synthesis.bandwidth_hz must be > 0".into()));
            }
            SynthesisConfig::from_samples(m as f64 / (2.0 * spec.bandwidth_hz), m, cfg.seed)
        }
    }
    .map_err(synth_err)?;
    if synthesis.duration < t_g {
        return Err(CliError::Validation(format!(
            "synthesis covers {:e} s but the gate lasts {:e} s; raise duration_s or num_samples",
            synthesis.duration, t_g
        )));
    }
    Ok(MonteCarloRequest {
        drive: cfg.drive,
        gate: cfg.gate,
        noise: cfg.noise.clone(),
        n_trials: cfg.trials,
        base_seed: cfg.seed,
        integrator: cfg.integrator,
        synthesis,
        frame: cfg.frame,
        state_averaged: cfg.state_averaged,
    })
}

pub fn cmd_simulate(config: &Path, out: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let mut cfg: SimulateCommandConfig = read_json(config)?;
    check_schema(&cfg.schema, SIMULATE_SCHEMA)?;
    cfg.schema = Some(SIMULATE_SCHEMA.into());
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(t) = ov.trials {
        cfg.trials = t;
    }
    if cfg.trials < 2 {
        return Err(CliError::Validation(format!("trials must be at least 2, got {}", cfg.trials)));
    }
    if let Some(file) = cfg.noise_model_file.take() {
        let path = if file.is_relative() { config.parent().unwrap_or(Path::new(".")).join(&file) } else { file };
        let model: NoiseModel = read_json(&path)?;
        model.validate().map_err(spectra_err)?;
        cfg.noise.laser1.frequency = Some(model.clone());
        if cfg.noise_model_both {
            cfg.noise.laser2.frequency = Some(model);
        }
        cfg.noise_model_both = false;
    }
    let resolved = to_value(&cfg);
    let mut set = OutputSet::new(out)?;
    match cfg.sweep.clone() {
        None => {
            let report = monte_carlo_run(&request(&cfg)?).map_err(dynamics_err)?;
            set.csv("trials.csv", &["trial", "error"], report.per_trial.iter().enumerate().map(|(i, e)| vec![i as f64, *e]))?;
            set.json(
                "estimate.json",
                &serde_json::json!({
                    "$schema": "phasenoise/estimate/v1",
                    "estimate": report.estimate,
                    "max_intermediate_population": report.max_intermediate_population,
                    "warnings": report.warnings,
                }),
            )?;
        }
        Some(sweep) => {
            if sweep.values.is_empty() {
                return Err(CliError::Validation("sweep.values is empty".into()));
            }
            let mut base = resolved.clone();
            base.as_object_mut().expect("config is an object").remove("sweep");
            let mut rows = Vec::new();
            let mut points = Vec::new();
            for &x in &sweep.values {
                let point = apply_sweep(&base, &sweep, x)?;
                let report = monte_carlo_run(&request(&point)?).map_err(dynamics_err)?;
                let e = report.estimate;
                rows.push(vec![x, e.mean_error, e.std_error, e.n_trials as f64]);
                points.push(serde_json::json!({ "value": x, "estimate": e, "warnings": report.warnings }));
            }
            set.csv("sweep.csv", &[sweep.field.as_str(), "mean_error", "std_error", "n_trials"], rows)?;
            set.json(
                "sweep.json",
                &serde_json::json!({ "$schema": "phasenoise/sweep/v1", "path": sweep.path, "field": sweep.field, "points": points }),
            )?;
        }
    }
    set.finish("simulate", Some(cfg.seed), resolved)
}

// ---------------------------------------------------------------------------------------------
// analytic

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    Many(Vec<NoiseModel>),
    One(NoiseModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticCommandConfig {
    #[serde(rename = "$schema", default)]
    pub schema: Option<String>,
    pub query: ErrorQuery,
    /// One model per laser.
    pub noise: OneOrMany,
}

pub fn cmd_analytic(config: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let mut cfg: AnalyticCommandConfig = read_json(config)?;
    check_schema(&cfg.schema, ANALYTIC_SCHEMA)?;
    cfg.schema = Some(ANALYTIC_SCHEMA.into());
    let lasers = match &cfg.noise {
        OneOrMany::Many(v) => v.clone(),
        OneOrMany::One(m) => vec![m.clone()],
    };
    for m in &lasers {
        m.validate().map_err(spectra_err)?;
    }
    let result = analytic::evaluate(&cfg.query, &lasers).map_err(analytic_err)?;
    let mut set = OutputSet::new(out)?;
    set.json(
        "result.json",
        &serde_json::json!({ "$schema": "phasenoise/analytic-result/v1", "estimate": result.estimate, "warnings": result.warnings }),
    )?;
    set.finish("analytic", None, to_value(&cfg))
}
