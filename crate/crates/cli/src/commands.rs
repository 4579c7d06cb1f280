//! Command implementations: JSON configs in, CSV/JSON artifacts out.
//!
//! Exit-code contract (enforced in `main`): config/usage problems map to 1,
//! unparseable input data to 2, and a fit that ends without convergence
//! to 3. Output artifacts use exponential float formatting or serde_json
//! throughout, so identical configs and seeds produce byte-identical files.

use lambtune::circuit::{
    linspace, parallel_resonance, response_from_csv, response_to_csv, synthesize,
    FrequencyResponse, ModalBranch, ResonatorModel,
};
use lambtune::device::{calibrated_velocity, overtone_set, static_capacitance, DeviceGeometry};
use lambtune::dispersion::{curve_to_csv, rayleigh_lamb_s0, s0_thin_plate_velocity};
use lambtune::extract::{add_complex_noise, fit_mbvd, ExtractError, FitReport};
use lambtune::materials::{load_materials, Layer, LayerStack};
use lambtune::touchstone::{
    parse as parse_touchstone, s_to_y, series_through_admittance, ReciprocityReport,
};
use lambtune::tuning::{
    detect_turning_voltage, simulate_sweep, sweep_to_csv, tunability, BiasSweepResult, SweepMetric,
    TuningError, TuningModel, TurningPointReport,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Failure bucket; decides the exit code and the `kind` field of the error
/// JSON printed on stderr.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Parse(String),
    NonConvergence(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn parse(message: impl Into<String>) -> Self {
        CliError::Parse(message.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Parse(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Parse(_) => "parse",
            CliError::NonConvergence(_) => "non_convergence",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Parse(m) | CliError::NonConvergence(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.message() } })
            .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Frequency grid: `n` points from `start` to `stop` inclusive, Hz.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

/// Parser for `--grid start,stop,n`.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected start,stop,n".into());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| "bad start frequency")?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| "bad stop frequency")?;
    let n: usize = parts[2].trim().parse().map_err(|_| "bad point count")?;
    Ok(Grid { start, stop, n })
}

fn grid_points(g: &Grid) -> Result<Vec<f64>, CliError> {
    if !(g.start > 0.0 && g.stop > g.start && g.n >= 2) {
        return Err(CliError::config(format!(
            "grid must satisfy 0 < start < stop and n >= 2, got start={}, stop={}, n={}",
            g.start, g.stop, g.n
        )));
    }
    Ok(linspace(g.start, g.stop, g.n))
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))
}

fn ensure_schema(version: u32) -> Result<(), CliError> {
    if version != 1 {
        return Err(CliError::config(format!(
            "unsupported schema_version {version}; this build reads version 1"
        )));
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

/// Directory holding the bundled data files; overridable for installed use.
fn fixtures_dir() -> PathBuf {
    std::env::var_os("LAMBTUNE_FIXTURES").map_or_else(|| PathBuf::from("fixtures"), PathBuf::from)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StackEntry {
    material: String,
    thickness: f64,
    #[serde(default)]
    piezo: bool,
}

fn build_stack(materials_file: &Path, entries: &[StackEntry]) -> Result<LayerStack, CliError> {
    let db = load_materials(materials_file).map_err(|e| {
        CliError::config(format!("materials file {}: {e}", materials_file.display()))
    })?;
    let mut layers = Vec::with_capacity(entries.len());
    for entry in entries {
        let material =
            db.get(&entry.material).map_err(|e| CliError::config(e.to_string()))?.clone();
        layers.push(Layer { material, thickness: entry.thickness, piezo: entry.piezo });
    }
    LayerStack::new(layers).map_err(|e| CliError::config(e.to_string()))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    schema_version: u32,
    #[serde(default)]
    model: Option<ResonatorModel>,
    #[serde(default)]
    device: Option<DeviceSection>,
    #[serde(default)]
    grid: Option<Grid>,
    #[serde(default)]
    noise: Option<NoiseConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseConfig {
    relative_std: f64,
}

fn default_min_weight() -> f64 {
    0.01
}

fn default_n_max() -> usize {
    9
}

/// Derive a circuit from device geometry: overtone ladder frequencies from
/// the calibrated sound speed, couplings scaled by the electrode overlap
/// weight (the strongest mode gets `k2_reference`), and the plate
/// permittivity setting the static capacitance.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSection {
    materials_file: PathBuf,
    stack: Vec<StackEntry>,
    geometry: DeviceGeometry,
    anchor_frequency_hz: f64,
    anchor_overtone: usize,
    #[serde(default = "default_n_max")]
    n_max: usize,
    k2_reference: f64,
    q: f64,
    #[serde(default = "default_min_weight")]
    min_weight: f64,
}

impl DeviceSection {
    fn build_model(&self) -> Result<ResonatorModel, CliError> {
        let stack = build_stack(&self.materials_file, &self.stack)?;
        let plate = stack.homogenize();
        let cfg = |e: lambtune::device::DeviceError| CliError::config(e.to_string());
        self.geometry.validate().map_err(cfg)?;
        let v_s0 =
            calibrated_velocity(&self.geometry, self.anchor_frequency_hz, self.anchor_overtone)
                .map_err(cfg)?;
        let modes = overtone_set(&self.geometry, v_s0, self.n_max).map_err(cfg)?;
        let c0 = static_capacitance(&self.geometry, plate.eps_eff_r).map_err(cfg)?;
        let branches: Vec<ModalBranch> = modes
            .iter()
            .filter(|m| m.weight >= self.min_weight)
            .map(|m| ModalBranch { fs: m.frequency, k2: self.k2_reference * m.weight, q: self.q })
            .collect();
        ResonatorModel::new(c0, 0.0, branches).map_err(|e| CliError::config(e.to_string()))
    }
}

#[derive(Serialize)]
struct BranchMetrics {
    index: usize,
    fs_hz: f64,
    fp_hz: f64,
    k2: f64,
    q: f64,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    c0_f: f64,
    rs_shunt_ohm: f64,
    branches: Vec<BranchMetrics>,
    grid: Grid,
    noise_relative_std: f64,
    seed: u64,
    data_file: &'a str,
}

pub fn cmd_simulate(
    config_path: &Path,
    out: &Path,
    seed: u64,
    grid_override: Option<Grid>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let config: SimulateConfig = load_config(config_path)?;
    ensure_schema(config.schema_version)?;
    let model = match (&config.model, &config.device) {
        (Some(m), _) => {
            m.validate().map_err(|e| CliError::config(e.to_string()))?;
            m.clone()
        }
        (None, Some(d)) => d.build_model()?,
        (None, None) => {
            return Err(CliError::config("config needs a 'model' or a 'device' section"))
        }
    };
    let grid = grid_override
        .or(config.grid)
        .ok_or_else(|| CliError::config("no grid in config and no --grid override"))?;
    let freqs = grid_points(&grid)?;
    let mut fr = synthesize(&model, &freqs).map_err(|e| CliError::config(e.to_string()))?;
    let noise = config.noise.map_or(0.0, |n| n.relative_std);
    if noise > 0.0 {
        add_complex_noise(&mut fr, noise, seed);
    }

    prepare_out(out)?;
    let data_file = match format {
        OutputFormat::Csv => {
            write_artifact(out, "response.csv", &response_to_csv(&fr))?;
            "response.csv"
        }
        OutputFormat::Json => {
            write_artifact(out, "response.json", &to_pretty_json(&fr))?;
            "response.json"
        }
    };
    let report = SimulateReport {
        c0_f: model.c0,
        rs_shunt_ohm: model.rs_shunt,
        branches: model
            .branches
            .iter()
            .enumerate()
            .map(|(index, b)| BranchMetrics {
                index,
                fs_hz: b.fs,
                fp_hz: parallel_resonance(b),
                k2: b.k2,
                q: b.q,
            })
            .collect(),
        grid,
        noise_relative_std: noise,
        seed,
        data_file,
    };
    write_artifact(out, "simulate_report.json", &to_pretty_json(&report))?;
    println!(
        "simulated {} branches over {} points; wrote {data_file} and simulate_report.json in {}",
        model.branches.len(),
        freqs.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    schema_version: u32,
    base_model: ResonatorModel,
    tuning: TuningSection,
    voltages: VoltSpec,
    #[serde(default)]
    metric: Option<MetricSpec>,
    #[serde(default)]
    traces: Option<TracesConfig>,
    #[serde(default)]
    reference_tuning_percent: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TuningSection {
    v_turn: f64,
    v_c: f64,
    q0: f64,
    eps_r0: f64,
    alpha_eps: f64,
    beta_turn: f64,
    gamma_decay: f64,
    /// Explicit per-mode ceilings; omitted means "calibrate against the base
    /// model at the turning voltage". Give together with `q_sat`.
    #[serde(default)]
    k2_max: Option<Vec<f64>>,
    #[serde(default)]
    q_sat: Option<f64>,
}

impl TuningSection {
    fn to_model(&self, base: &ResonatorModel) -> Result<TuningModel, CliError> {
        let model = match (&self.k2_max, self.q_sat) {
            (Some(k2_max), Some(q_sat)) => TuningModel {
                v_c: self.v_c,
                k2_max: k2_max.clone(),
                q0: self.q0,
                q_sat,
                eps_r0: self.eps_r0,
                alpha_eps: self.alpha_eps,
                v_turn: self.v_turn,
                beta_turn: self.beta_turn,
                gamma_decay: self.gamma_decay,
            },
            (None, None) => TuningModel::calibrated(
                base,
                self.v_turn,
                self.v_c,
                self.q0,
                self.eps_r0,
                self.alpha_eps,
                self.beta_turn,
                self.gamma_decay,
            )
            .map_err(|e| CliError::config(e.to_string()))?,
            _ => {
                return Err(CliError::config(
                    "give k2_max and q_sat together, or neither (calibrated mode)",
                ))
            }
        };
        model.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VoltSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl VoltSpec {
    fn build(&self) -> Result<Vec<f64>, CliError> {
        match self {
            VoltSpec::List(v) => Ok(v.clone()),
            VoltSpec::Range { start, stop, step } => {
                if !(*step > 0.0 && stop >= start) {
                    return Err(CliError::config("voltage range needs step > 0 and stop >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TracesConfig {
    voltages: Vec<f64>,
    grid: Grid,
}

/// Detection metric named in configs; `kind` is one of `series_frequency`,
/// `parallel_frequency`, `coupling`, `quality`, `capacitance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub kind: String,
    #[serde(default)]
    pub mode: usize,
}

impl MetricSpec {
    fn to_metric(&self) -> Result<SweepMetric, CliError> {
        match self.kind.as_str() {
            "series_frequency" => Ok(SweepMetric::SeriesFrequency(self.mode)),
            "parallel_frequency" => Ok(SweepMetric::ParallelFrequency(self.mode)),
            "coupling" => Ok(SweepMetric::Coupling(self.mode)),
            "quality" => Ok(SweepMetric::Quality),
            "capacitance" => Ok(SweepMetric::Capacitance),
            other => Err(CliError::config(format!("unknown detection metric '{other}'"))),
        }
    }
}

fn default_metric() -> MetricSpec {
    MetricSpec { kind: "parallel_frequency".into(), mode: 0 }
}

/// Machine-readable sweep summary; `compare` reads the tunability column.
#[derive(Serialize, Deserialize)]
pub struct SweepSummary {
    pub n_rows: usize,
    pub metric: MetricSpec,
    pub detection: Option<TurningPointReport>,
    pub detection_note: Option<String>,
    /// Per mode, over the below-turn rows (whole sweep if no kink found);
    /// `null` where the mode never couples.
    pub tunability_percent: Vec<Option<f64>>,
    pub tunability_rows: usize,
    /// Externally reported value to display alongside, if configured.
    pub reference_tuning_percent: Option<f64>,
}

pub fn cmd_sweep(config_path: &Path, out: &Path, format: OutputFormat) -> Result<(), CliError> {
    let config: SweepConfig = load_config(config_path)?;
    ensure_schema(config.schema_version)?;
    config.base_model.validate().map_err(|e| CliError::config(e.to_string()))?;
    let tuning = config.tuning.to_model(&config.base_model)?;
    let voltages = config.voltages.build()?;
    let sweep = simulate_sweep(&tuning, &config.base_model, &voltages)
        .map_err(|e| CliError::config(e.to_string()))?;

    let metric_spec = config.metric.unwrap_or_else(default_metric);
    let metric = metric_spec.to_metric()?;
    let (detection, detection_note) = match detect_turning_voltage(&sweep, metric) {
        Ok(report) => (Some(report), None),
        Err(TuningError::InsufficientRows { rows, need }) => {
            (None, Some(format!("{rows} rows; turning-voltage detection needs at least {need}")))
        }
        Err(e) => return Err(CliError::config(e.to_string())),
    };

    // Tunability is the below-turn figure of merit: past the turning voltage
    // the frequency runs away with the electrostrictive shift rather than
    // the coupling swing.
    let below: Vec<_> = match detection.as_ref().and_then(|d| d.v_turn) {
        Some(vt) => sweep.rows.iter().filter(|r| r.v_dc <= vt).cloned().collect(),
        None => sweep.rows.clone(),
    };
    let subset = BiasSweepResult { rows: below };
    let n_modes = config.base_model.branches.len();
    let tunability_percent: Vec<Option<f64>> =
        (0..n_modes).map(|mode| tunability(&subset, mode).ok()).collect();

    prepare_out(out)?;
    let data_file = match format {
        OutputFormat::Csv => {
            write_artifact(out, "sweep.csv", &sweep_to_csv(&sweep))?;
            "sweep.csv"
        }
        OutputFormat::Json => {
            write_artifact(out, "sweep.json", &to_pretty_json(&sweep))?;
            "sweep.json"
        }
    };
    let summary = SweepSummary {
        n_rows: sweep.rows.len(),
        metric: metric_spec,
        detection,
        detection_note,
        tunability_percent,
        tunability_rows: subset.rows.len(),
        reference_tuning_percent: config.reference_tuning_percent,
    };
    write_artifact(out, "sweep_summary.json", &to_pretty_json(&summary))?;

    if let Some(traces) = &config.traces {
        let freqs = grid_points(&traces.grid)?;
        for &v in &traces.voltages {
            let row = sweep.rows.iter().find(|r| r.v_dc == v).ok_or_else(|| {
                CliError::config(format!("trace voltage {v} V is not a sweep point"))
            })?;
            let model = row.to_model().map_err(|e| CliError::config(e.to_string()))?;
            let fr = synthesize(&model, &freqs).map_err(|e| CliError::config(e.to_string()))?;
            write_artifact(out, &format!("trace_{v}V.csv"), &response_to_csv(&fr))?;
        }
    }
    let turn_text = summary
        .detection
        .as_ref()
        .and_then(|d| d.v_turn)
        .map_or_else(|| "none".to_string(), |v| format!("{v} V"));
    println!(
        "swept {} bias points; turning voltage: {turn_text}; wrote {data_file} and sweep_summary.json in {}",
        summary.n_rows,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    schema_version: u32,
    input: PathBuf,
    n_branches: usize,
    #[serde(default)]
    init: Option<ResonatorModel>,
}

fn load_response(path: &Path) -> Result<FrequencyResponse, CliError> {
    let ext =
        path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    match ext.as_str() {
        "csv" => response_from_csv(&text)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display()))),
        "json" => serde_json::from_str(&text)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display()))),
        "s1p" | "s2p" => {
            let (fr, report) = ingest_network(&text, path)?;
            if report.is_some_and(|r| r.flagged > 0) {
                println!(
                    "note: {} has non-reciprocal points; proceeding with -Y21",
                    path.display()
                );
            }
            Ok(fr)
        }
        other => Err(CliError::config(format!(
            "unsupported input extension '.{other}' for {}; expected .csv, .json, .s1p, or .s2p",
            path.display()
        ))),
    }
}

fn ingest_network(
    text: &str,
    origin: &Path,
) -> Result<(FrequencyResponse, Option<ReciprocityReport>), CliError> {
    let parse_err = |e: lambtune::touchstone::TouchstoneError| {
        CliError::parse(format!("{}: {e}", origin.display()))
    };
    let network = parse_touchstone(text).map_err(parse_err)?;
    let y = s_to_y(&network).map_err(parse_err)?;
    if y.n_ports == 2 {
        let (fr, report) = series_through_admittance(&y).map_err(parse_err)?;
        Ok((fr, Some(report)))
    } else {
        let y11: Vec<_> = y.mats.iter().map(|m| m[0]).collect();
        let fr = FrequencyResponse::new(y.freqs.clone(), y11)
            .map_err(|e| CliError::parse(format!("{}: {e}", origin.display())))?;
        Ok((fr, None))
    }
}

fn overlay_csv(fr: &FrequencyResponse, model: &ResonatorModel) -> String {
    let mut out = String::from("freq_hz,re_y_data,im_y_data,re_y_fit,im_y_fit\n");
    for (&f, y) in fr.freqs.iter().zip(&fr.y) {
        let fit = model.admittance(f);
        writeln!(out, "{f:e},{:e},{:e},{:e},{:e}", y.re, y.im, fit.re, fit.im)
            .expect("string write");
    }
    out
}

pub fn cmd_fit(config_path: &Path, out: &Path, branches: Option<usize>) -> Result<(), CliError> {
    let config: FitConfig = load_config(config_path)?;
    ensure_schema(config.schema_version)?;
    let n_branches = branches.unwrap_or(config.n_branches);
    let fr = load_response(&config.input)?;
    let report = fit_mbvd(&fr, n_branches, config.init.as_ref()).map_err(|e| match e {
        ExtractError::InitSizeMismatch { .. } => CliError::config(e.to_string()),
        other => CliError::parse(other.to_string()),
    })?;

    prepare_out(out)?;
    write_artifact(out, "fit_report.json", &to_pretty_json(&report))?;
    write_artifact(out, "fit_overlay.csv", &overlay_csv(&fr, &report.model))?;

    let mut line = format!(
        "fit of {} ({} points, {} branches): rms residual {:.3e} S over {} iterations;",
        config.input.display(),
        fr.len(),
        n_branches,
        report.residual_rms,
        report.iterations
    );
    for (i, b) in report.model.branches.iter().enumerate() {
        if b.is_inert() {
            write!(line, " mode {i}: inert;").expect("string write");
        } else {
            write!(line, " mode {i}: fs={:.4e} Hz, k2={:.4}, q={:.1};", b.fs, b.k2, b.q)
                .expect("string write");
        }
    }
    println!("{line} wrote fit_report.json and fit_overlay.csv in {}", out.display());
    if !report.converged {
        return Err(CliError::NonConvergence(format!(
            "fit did not converge in {} iterations ({}); report written to {}",
            report.iterations,
            report.diagnostics.join("; "),
            out.join("fit_report.json").display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Serialize)]
struct IngestSidecar<'a> {
    input: String,
    n_ports: usize,
    z0_ohm: f64,
    source_format: lambtune::touchstone::SourceFormat,
    freq_unit_declared: lambtune::touchstone::FreqUnit,
    points: usize,
    comments: &'a [String],
    reciprocity: Option<ReciprocityReport>,
    data_file: String,
}

pub fn cmd_ingest(inputs: &[PathBuf], out: &Path, format: OutputFormat) -> Result<(), CliError> {
    prepare_out(out)?;
    let mut written = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
        let parse_err = |e: lambtune::touchstone::TouchstoneError| {
            CliError::parse(format!("{}: {e}", path.display()))
        };
        let network = parse_touchstone(&text).map_err(parse_err)?;
        let (fr, reciprocity) = ingest_network(&text, path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "network".into());
        let data_file = match format {
            OutputFormat::Csv => {
                let name = format!("{stem}.admittance.csv");
                write_artifact(out, &name, &response_to_csv(&fr))?;
                name
            }
            OutputFormat::Json => {
                let name = format!("{stem}.admittance.json");
                write_artifact(out, &name, &to_pretty_json(&fr))?;
                name
            }
        };
        let sidecar = IngestSidecar {
            input: path.display().to_string(),
            n_ports: network.n_ports,
            z0_ohm: network.z0,
            source_format: network.source_format,
            freq_unit_declared: network.freq_unit_declared,
            points: network.freqs.len(),
            comments: &network.comments,
            reciprocity,
            data_file: data_file.clone(),
        };
        write_artifact(out, &format!("{stem}.ingest.json"), &to_pretty_json(&sidecar))?;
        written.push(data_file);
    }
    println!("ingested {} file(s) into {}: {}", written.len(), out.display(), written.join(", "));
    Ok(())
}

// ---------------------------------------------------------------------------
// dispersion

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DispersionConfig {
    schema_version: u32,
    materials_file: PathBuf,
    stack: Vec<StackEntry>,
    fd: Grid,
}

#[derive(Serialize)]
struct DispersionReport {
    thin_plate_velocity_m_s: f64,
    points: usize,
    max_residual: f64,
    unresolved_fd: Vec<f64>,
}

pub fn cmd_dispersion(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config: DispersionConfig = load_config(config_path)?;
    ensure_schema(config.schema_version)?;
    let stack = build_stack(&config.materials_file, &config.stack)?;
    let plate = stack.homogenize();
    let fd_grid = grid_points(&config.fd)?;
    let solution =
        rayleigh_lamb_s0(&plate, &fd_grid).map_err(|e| CliError::config(e.to_string()))?;
    let report = DispersionReport {
        thin_plate_velocity_m_s: s0_thin_plate_velocity(&plate),
        points: solution.curve.points.len(),
        max_residual: solution.residuals.iter().cloned().fold(0.0, f64::max),
        unresolved_fd: solution.unresolved.clone(),
    };
    prepare_out(out)?;
    write_artifact(out, "dispersion.csv", &curve_to_csv(&solution.curve))?;
    write_artifact(out, "dispersion_report.json", &to_pretty_json(&report))?;
    println!(
        "traced {} dispersion points (max residual {:.2e}); wrote dispersion.csv and dispersion_report.json in {}",
        report.points,
        report.max_residual,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareConfig {
    schema_version: u32,
    #[serde(default)]
    reference_csv: Option<PathBuf>,
    #[serde(default)]
    fit_report: Option<PathBuf>,
    #[serde(default)]
    sweep_summary: Option<PathBuf>,
    #[serde(default)]
    material: Option<String>,
    #[serde(default)]
    excitation: Option<String>,
}

const REFERENCE_HEADER: &str =
    "id,material,excitation,f_ghz,q,k2_percent,tuning_percent,multi_freq,source";

struct ComparisonRow {
    f_ghz: f64,
    fields: Vec<String>,
}

pub fn cmd_compare(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config: CompareConfig = load_config(config_path)?;
    ensure_schema(config.schema_version)?;
    let reference_path =
        config.reference_csv.unwrap_or_else(|| fixtures_dir().join("reference_resonators.csv"));
    let text = std::fs::read_to_string(&reference_path).map_err(|e| {
        CliError::config(format!(
            "reference table {} is missing or unreadable: {e}",
            reference_path.display()
        ))
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REFERENCE_HEADER => {}
        other => {
            return Err(CliError::parse(format!(
                "{}: expected header '{REFERENCE_HEADER}', got {other:?}",
                reference_path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != 9 {
            return Err(CliError::parse(format!(
                "{} line {}: expected 9 fields, got {}",
                reference_path.display(),
                i + 2,
                fields.len()
            )));
        }
        let f_ghz: f64 = fields[3].parse().map_err(|_| {
            CliError::parse(format!(
                "{} line {}: bad frequency '{}'",
                reference_path.display(),
                i + 2,
                fields[3]
            ))
        })?;
        rows.push(ComparisonRow { f_ghz, fields });
    }

    // No fitted results: echo the reference ranking unchanged.
    let fitted = match &config.fit_report {
        None => Vec::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("fit report {}: {e}", path.display())))?;
            let report: FitReport = serde_json::from_str(&text)
                .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
            let tunability: Vec<Option<f64>> = match &config.sweep_summary {
                None => Vec::new(),
                Some(sp) => {
                    let text = std::fs::read_to_string(sp).map_err(|e| {
                        CliError::config(format!("sweep summary {}: {e}", sp.display()))
                    })?;
                    let summary: SweepSummary = serde_json::from_str(&text)
                        .map_err(|e| CliError::parse(format!("{}: {e}", sp.display())))?;
                    summary.tunability_percent
                }
            };
            let live = report.model.branches.iter().filter(|b| !b.is_inert()).count();
            let material = config.material.as_deref().unwrap_or("?");
            let excitation = config.excitation.as_deref().unwrap_or("?");
            report
                .model
                .branches
                .iter()
                .enumerate()
                .filter(|(_, b)| !b.is_inert())
                .map(|(i, b)| {
                    let tuning = tunability
                        .get(i)
                        .copied()
                        .flatten()
                        .map_or(String::new(), |t| format!("{t:.3}"));
                    ComparisonRow {
                        f_ghz: b.fs / 1e9,
                        fields: vec![
                            format!("fit-mode-{i}"),
                            material.to_string(),
                            excitation.to_string(),
                            format!("{:.6}", b.fs / 1e9),
                            format!("{:.1}", b.q),
                            format!("{:.3}", 100.0 * b.k2),
                            tuning,
                            if live >= 2 { "Y" } else { "N" }.to_string(),
                            "this fit".to_string(),
                        ],
                    }
                })
                .collect()
        }
    };

    let ranked = !fitted.is_empty();
    if ranked {
        rows.extend(fitted);
        rows.sort_by(|a, b| {
            a.f_ghz.total_cmp(&b.f_ghz).then_with(|| a.fields[0].cmp(&b.fields[0]))
        });
    }
    let mut out_text = format!("rank,{REFERENCE_HEADER}\n");
    for (rank, row) in rows.iter().enumerate() {
        writeln!(out_text, "{},{}", rank + 1, row.fields.join(",")).expect("string write");
    }
    prepare_out(out)?;
    write_artifact(out, "comparison.csv", &out_text)?;
    println!(
        "wrote comparison.csv ({} rows, {}) in {}",
        rows.len(),
        if ranked { "ranked by frequency" } else { "reference order" },
        out.display()
    );
    Ok(())
}
