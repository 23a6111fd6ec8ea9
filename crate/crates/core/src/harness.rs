//! Experiment runner: config parsing, seeded sweeps, CSV output and summaries.
//!
//! A config is TOML with an optional `preset`, an `out_dir`, a `[scenario]`
//! table and a `[sweep]` table:
//!
//! ```toml
//! preset = "custom"
//! out_dir = "runs/demo"
//!
//! [scenario]
//! users = [[0, 0, 0], [0, 100, 0]]
//! n_t = 2
//! bounds = { x_min = 0, x_max = 300, y_min = 0, y_max = 300, z_min = 80, z_max = 120 }
//!
//! [sweep]
//! snr_db = [10, 20]
//! seeds = [1, 2, 3]
//! ```
//!
//! Named presets fix the scenario; only `seeds` and `schemes` may be changed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::channel::{ChannelModel, ChannelRealization, Position3D, RicianParams};
use crate::joint::{self, JointParams, JointSolution, Scenario, StartPosition};
use crate::placement::PlacementBox;
use crate::precoder::Scheme;

pub const AREA_SIDE: f64 = 300.0;
pub const BANDWIDTH_HZ: f64 = 20e6;
/// Tolerance on ordering checks (bits/s/Hz).
pub const ORDER_TOL: f64 = 1e-6;
const AGGREGATE_FILE: &str = "aggregate.csv";
const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1Convergence,
    Fig2Trajectory,
    Fig3SnrLos,
    Fig4SnrRician,
    #[default]
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Fig1Convergence, Preset::Fig2Trajectory, Preset::Fig3SnrLos, Preset::Fig4SnrRician, Preset::Custom];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Fig1Convergence => "fig1_convergence",
            Preset::Fig2Trajectory => "fig2_trajectory",
            Preset::Fig3SnrLos => "fig3_snr_los",
            Preset::Fig4SnrRician => "fig4_snr_rician",
            Preset::Custom => "custom",
        }
    }

    /// The fully pinned config of a named preset (`None` for `custom`).
    pub fn config(&self) -> Option<ExperimentConfig> {
        let two_users = vec![Position3D::new(0.0, 0.0, 0.0), Position3D::new(0.0, 100.0, 0.0)];
        let four_users = vec![
            Position3D::new(0.0, 0.0, 0.0),
            Position3D::new(0.0, 100.0, 0.0),
            Position3D::new(150.0, 150.0, 0.0),
            Position3D::new(200.0, 50.0, 0.0),
        ];
        let snr_sweep: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
        let (scenario, sweep) = match self {
            Preset::Custom => return None,
            Preset::Fig1Convergence | Preset::Fig2Trajectory => (
                ScenarioSpec::standard(Some(two_users), 2, ChannelModel::Los),
                SweepSpec {
                    snr_db: vec![20.0],
                    methods: vec![Method::Joint],
                    start: StartRule::Random,
                    ..SweepSpec::default()
                },
            ),
            Preset::Fig3SnrLos => (
                ScenarioSpec::standard(Some(four_users), 4, ChannelModel::Los),
                SweepSpec { snr_db: snr_sweep, seeds: vec![1], ..SweepSpec::default() },
            ),
            Preset::Fig4SnrRician => (
                ScenarioSpec::standard(Some(four_users), 4, ChannelModel::Rician(RicianParams::default())),
                SweepSpec { snr_db: snr_sweep, ..SweepSpec::default() },
            ),
        };
        Some(ExperimentConfig {
            preset: *self,
            out_dir: PathBuf::from("runs").join(self.as_str()),
            scenario,
            sweep,
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown preset `{s}` (expected one of fig1_convergence, fig2_trajectory, fig3_snr_los, fig4_snr_rician, custom)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Alternating placement and precoding.
    Joint,
    /// Precoder only, UAV fixed at the users' average location.
    AvgLocation,
}

impl Method {
    fn tag(&self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::AvgLocation => "avgloc",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        [Method::Joint, Method::AvgLocation].into_iter().find(|m| m.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRule {
    AverageLocation,
    CentroidAtFloor,
    /// Uniform in the placement box, drawn from the run seed.
    Random,
}

/// Scenario fields that do not depend on the sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Pinned ground positions; `None` means Monte Carlo drops.
    pub users: Option<Vec<Position3D>>,
    pub user_count: usize,
    pub weights: Vec<f64>,
    pub sigma2: f64,
    pub bandwidth: f64,
    /// bits/s
    pub rate_thresholds: Vec<f64>,
    pub bounds: PlacementBox,
    pub n_t: usize,
    pub channel: ChannelModel,
}

impl ScenarioSpec {
    fn standard(users: Option<Vec<Position3D>>, n_t: usize, channel: ChannelModel) -> Self {
        let k = users.as_ref().map_or(2, Vec::len);
        Self {
            users,
            user_count: k,
            weights: vec![1.0; k],
            sigma2: 1.0,
            bandwidth: BANDWIDTH_HZ,
            rate_thresholds: vec![0.0; k],
            bounds: PlacementBox { x_min: 0.0, x_max: AREA_SIDE, y_min: 0.0, y_max: AREA_SIDE, z_min: 80.0, z_max: 120.0 },
            n_t,
            channel,
        }
    }

    /// Scenario at one SNR with the given ground positions.
    pub fn at(&self, snr_db: f64, users: Vec<Position3D>) -> Scenario {
        Scenario {
            users,
            weights: self.weights.clone(),
            power: 10f64.powf(snr_db / 10.0) * self.sigma2,
            sigma2: self.sigma2,
            bandwidth: self.bandwidth,
            rate_thresholds: self.rate_thresholds.clone(),
            bounds: self.bounds,
            n_t: self.n_t,
            channel: self.channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub snr_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    /// User drops per seed; only with unpinned users.
    pub monte_carlo_drops: usize,
    pub methods: Vec<Method>,
    pub start: StartRule,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            snr_db: vec![20.0],
            schemes: Scheme::ALL.to_vec(),
            seeds: (1..=10).collect(),
            monte_carlo_drops: 0,
            methods: vec![Method::Joint, Method::AvgLocation],
            start: StartRule::AverageLocation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub out_dir: PathBuf,
    pub scenario: ScenarioSpec,
    pub sweep: SweepSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        let sw = &self.sweep;
        let fail = |m: String| Err(ConfigError::new(m));
        if sw.seeds.is_empty() {
            return fail("sweep.seeds must not be empty".into());
        }
        if sw.snr_db.is_empty() || sw.snr_db.iter().any(|v| !v.is_finite()) {
            return fail("sweep.snr_db must be a non-empty list of finite values".into());
        }
        if sw.schemes.is_empty() || sw.methods.is_empty() {
            return fail("sweep.schemes and sweep.methods must not be empty".into());
        }
        match &s.users {
            Some(u) if sw.monte_carlo_drops > 0 => {
                return fail(format!("monte_carlo_drops needs unpinned users, but {} positions are given", u.len()))
            }
            None if sw.monte_carlo_drops == 0 => {
                return fail("scenario.users is missing, so sweep.monte_carlo_drops must be at least 1".into())
            }
            _ => {}
        }
        let probe = s.users.clone().unwrap_or_else(|| vec![Position3D::default(); s.user_count]);
        s.at(sw.snr_db[0], probe).validate().map_err(|e| ConfigError::new(format!("scenario: {e}")))?;
        if !(s.bounds.x_min >= 0.0 && s.bounds.x_max <= AREA_SIDE && s.bounds.y_min >= 0.0 && s.bounds.y_max <= AREA_SIDE)
            && s.users.is_none()
        {
            return fail("random drops need the placement box inside the 300 m x 300 m area".into());
        }
        Ok(())
    }

    fn runs(&self) -> Vec<RunKey> {
        let drops = self.sweep.monte_carlo_drops.max(1);
        let mut keys = Vec::new();
        for &method in &self.sweep.methods {
            for &scheme in &self.sweep.schemes {
                for &snr_db in &self.sweep.snr_db {
                    for &seed in &self.sweep.seeds {
                        for drop in 0..drops {
                            keys.push(RunKey { method, scheme, snr_db, seed, drop: (self.sweep.monte_carlo_drops > 0).then_some(drop) });
                        }
                    }
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    /// 1-based line and column.
    pub position: Option<(usize, usize)>,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), position: None }
    }

    fn at(text: &str, offset: usize, message: impl Into<String>) -> Self {
        Self { message: message.into(), position: Some(line_col(text, offset)) }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, col)) => write!(f, "line {line}, column {col}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    out_dir: Option<PathBuf>,
    scenario: Option<Spanned<RawScenario>>,
    sweep: Option<Spanned<RawSweep>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    users: Option<Vec<Position3D>>,
    user_count: Option<usize>,
    weights: Option<Vec<f64>>,
    sigma2: Option<f64>,
    bandwidth: Option<f64>,
    rate_thresholds: Option<Vec<f64>>,
    bounds: Option<PlacementBox>,
    n_t: Option<usize>,
    channel: Option<ChannelModel>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    snr_db: Option<Spanned<Vec<f64>>>,
    schemes: Option<Vec<Scheme>>,
    seeds: Option<Spanned<Vec<u64>>>,
    monte_carlo_drops: Option<usize>,
    methods: Option<Vec<Method>>,
    start: Option<StartRule>,
}

/// Parses and validates a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with_preset(text, None)
}

/// Like [`parse_config`], with `preset` taking precedence over the file's.
pub fn parse_config_with_preset(text: &str, preset: Option<Preset>) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => ConfigError::at(text, span.start, e.message().to_string()),
        None => ConfigError::new(e.message().to_string()),
    })?;
    let preset = preset.or(raw.preset).unwrap_or_default();

    let mut config = match preset.config() {
        Some(pinned) => {
            if let Some(sc) = &raw.scenario {
                return Err(ConfigError::at(
                    text,
                    sc.span().start,
                    format!("preset `{preset}` fixes the scenario; use preset = \"custom\" to change it"),
                ));
            }
            pinned
        }
        None => custom_config(text, raw.scenario)?,
    };
    if let Some(dir) = raw.out_dir {
        config.out_dir = dir;
    }
    if let Some(sweep) = raw.sweep {
        let span = sweep.span();
        let sweep = sweep.into_inner();
        if preset != Preset::Custom
            && (sweep.snr_db.is_some() || sweep.monte_carlo_drops.is_some() || sweep.methods.is_some() || sweep.start.is_some())
        {
            return Err(ConfigError::at(
                text,
                span.start,
                format!("preset `{preset}` only lets [sweep] change `seeds` and `schemes`"),
            ));
        }
        if let Some(v) = sweep.seeds {
            if v.get_ref().is_empty() {
                return Err(ConfigError::at(text, v.span().start, "sweep.seeds must not be empty"));
            }
            config.sweep.seeds = v.into_inner();
        }
        if let Some(v) = sweep.snr_db {
            if let Some(bad) = v.get_ref().iter().find(|x| !x.is_finite()) {
                return Err(ConfigError::at(text, v.span().start, format!("snr value {bad} is not finite")));
            }
            config.sweep.snr_db = v.into_inner();
        }
        if let Some(v) = sweep.schemes {
            config.sweep.schemes = v;
        }
        if let Some(v) = sweep.monte_carlo_drops {
            config.sweep.monte_carlo_drops = v;
        }
        if let Some(v) = sweep.methods {
            config.sweep.methods = v;
        }
        if let Some(v) = sweep.start {
            config.sweep.start = v;
        }
    }
    config.validate()?;
    Ok(config)
}

fn custom_config(text: &str, scenario: Option<Spanned<RawScenario>>) -> Result<ExperimentConfig, ConfigError> {
    let Some(scenario) = scenario else {
        return Err(ConfigError::new("a custom config needs a [scenario] table"));
    };
    let offset = scenario.span().start;
    let raw = scenario.into_inner();
    let k = match (&raw.users, raw.user_count) {
        (Some(u), Some(c)) if u.len() != c => {
            return Err(ConfigError::at(text, offset, format!("user_count = {c} but {} users are listed", u.len())))
        }
        (Some(u), _) => u.len(),
        (None, Some(c)) => c,
        (None, None) => return Err(ConfigError::at(text, offset, "scenario needs `users` or `user_count`")),
    };
    let mut spec = ScenarioSpec::standard(raw.users, raw.n_t.unwrap_or(2), raw.channel.unwrap_or_default());
    spec.user_count = k;
    spec.weights = raw.weights.unwrap_or_else(|| vec![1.0; k]);
    spec.rate_thresholds = raw.rate_thresholds.unwrap_or_else(|| vec![0.0; k]);
    if let Some(v) = raw.sigma2 {
        spec.sigma2 = v;
    }
    if let Some(v) = raw.bandwidth {
        spec.bandwidth = v;
    }
    if let Some(v) = raw.bounds {
        spec.bounds = v;
    }
    Ok(ExperimentConfig {
        preset: Preset::Custom,
        out_dir: PathBuf::from("runs").join("custom"),
        scenario: spec,
        sweep: SweepSpec::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub method: Method,
    pub scheme: Scheme,
    pub snr_db: f64,
    pub seed: u64,
    pub drop: Option<usize>,
}

impl RunKey {
    pub fn file_name(&self) -> String {
        let mut name = format!("trace_{}_{}_snr{}_seed{}", self.method.tag(), self.scheme, self.snr_db, self.seed);
        if let Some(d) = self.drop {
            name.push_str(&format!("_drop{d}"));
        }
        name.push_str(".csv");
        name
    }
}

/// What one run drew from its seed: ground positions, channel and start.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDraw {
    pub users: Vec<Position3D>,
    pub realization: ChannelRealization,
    pub start: StartPosition,
}

/// Draws are keyed by `(seed, drop)` only, so every scheme, method and SNR
/// sees the same users, fading and start point.
pub fn draw_run(spec: &ScenarioSpec, start: StartRule, seed: u64, drop: Option<usize>) -> RunDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop.map_or(0, |d| d as u64 + 1));
    let users = match &spec.users {
        Some(u) => u.clone(),
        None => (0..spec.user_count)
            .map(|_| Position3D::new(rng.random_range(0.0..AREA_SIDE), rng.random_range(0.0..AREA_SIDE), 0.0))
            .collect(),
    };
    let realization = ChannelRealization::draw(&spec.channel, users.len(), spec.n_t, &mut rng);
    let start = match start {
        StartRule::AverageLocation => StartPosition::AverageLocation,
        StartRule::CentroidAtFloor => StartPosition::CentroidAtFloor,
        StartRule::Random => StartPosition::Random(rng.random()),
    };
    RunDraw { users, realization, start }
}

/// Runs one sweep point.
pub fn run_one(config: &ExperimentConfig, key: &RunKey) -> crate::Result<JointSolution> {
    let draw = draw_run(&config.scenario, config.sweep.start, key.seed, key.drop);
    let scenario = config.scenario.at(key.snr_db, draw.users);
    let params = JointParams { start: draw.start, ..JointParams::default() };
    match key.method {
        Method::Joint => joint::alternating_optimize(&scenario, &draw.realization, key.scheme, &params),
        Method::AvgLocation => joint::avg_location_baseline(&scenario, &draw.realization, key.scheme, &params),
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub key: RunKey,
    pub file: PathBuf,
    pub outcome: Result<JointSolution, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub runs: Vec<RunResult>,
    pub aggregate: PathBuf,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv { path: path.to_path_buf(), source }
}

/// Runs every sweep point (in parallel on `jobs` threads, or rayon's default)
/// and writes one trace CSV per run, `aggregate.csv` and `manifest.toml`.
///
/// A failing run still gets a trace file with a single `error` row.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport, HarnessError> {
    config.validate().map_err(|e| HarnessError::Other(e.to_string()))?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let keys = config.runs();
    let work = || -> Result<Vec<RunResult>, HarnessError> {
        keys.par_iter()
            .map(|key| {
                let file = dir.join(key.file_name());
                let outcome = run_one(config, key).map_err(|e| e.to_string());
                write_trace(&file, config, key, &outcome)?;
                Ok(RunResult { key: *key, file, outcome })
            })
            .collect()
    };
    let runs = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Other(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let aggregate = dir.join(AGGREGATE_FILE);
    write_aggregate(&aggregate, config, &runs)?;
    write_manifest(&dir.join(MANIFEST_FILE), config, &runs)?;
    Ok(ExperimentReport { out_dir: dir.clone(), runs, aggregate })
}

fn trace_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "scheme", "seed", "snr_db", "wsr_bps_hz", "wsr_bps", "uav_x", "uav_y", "uav_z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=k).map(|i| format!("rate_user_{i}")));
    h.push("status".into());
    h
}

fn write_trace(path: &Path, config: &ExperimentConfig, key: &RunKey, outcome: &Result<JointSolution, String>) -> Result<(), HarnessError> {
    let k = config.scenario.user_count;
    let bw = config.scenario.bandwidth;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(trace_header(k)).map_err(csv_err(path))?;
    let lead = |iteration: usize| vec![iteration.to_string(), key.scheme.to_string(), key.seed.to_string(), key.snr_db.to_string()];
    match outcome {
        Ok(sol) => {
            for r in &sol.trace.records {
                let mut row = lead(r.iteration);
                row.push(r.wsr.to_string());
                row.push((r.wsr * bw).to_string());
                let q = r.uav.unwrap_or(sol.uav_position);
                row.extend([q.x, q.y, q.z].map(|v| v.to_string()));
                row.extend(r.rates.iter().map(|v| v.to_string()));
                row.push(r.status.as_str().into());
                w.write_record(&row).map_err(csv_err(path))?;
            }
        }
        Err(_) => {
            let mut row = lead(0);
            row.extend(std::iter::repeat_n(String::new(), 5 + k));
            row.push("error".into());
            w.write_record(&row).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_aggregate(path: &Path, config: &ExperimentConfig, runs: &[RunResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "method",
        "scheme",
        "snr_db",
        "runs",
        "failed",
        "wsr_mean_bps_hz",
        "wsr_min_bps_hz",
        "wsr_max_bps_hz",
        "wsr_mean_bps",
        "iterations_mean",
    ])
    .map_err(csv_err(path))?;
    for &method in &config.sweep.methods {
        for &scheme in &config.sweep.schemes {
            for &snr in &config.sweep.snr_db {
                let point: Vec<&RunResult> = runs
                    .iter()
                    .filter(|r| r.key.method == method && r.key.scheme == scheme && r.key.snr_db == snr)
                    .collect();
                let ok: Vec<&JointSolution> = point.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let wsr: Vec<f64> = ok.iter().map(|s| s.wsr()).collect();
                let stat = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                let mean = (!wsr.is_empty()).then(|| wsr.iter().sum::<f64>() / wsr.len() as f64);
                let iters = (!ok.is_empty())
                    .then(|| ok.iter().map(|s| s.trace.iterations() as f64).sum::<f64>() / ok.len() as f64);
                w.write_record([
                    method.tag().to_string(),
                    scheme.to_string(),
                    snr.to_string(),
                    point.len().to_string(),
                    (point.len() - ok.len()).to_string(),
                    stat(mean),
                    stat(wsr.iter().copied().reduce(f64::min)),
                    stat(wsr.iter().copied().reduce(f64::max)),
                    stat(mean.map(|m| m * config.scenario.bandwidth)),
                    stat(iters),
                ])
                .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    runs: Vec<ManifestRun>,
}

#[derive(Serialize)]
struct ManifestRun {
    file: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn write_manifest(path: &Path, config: &ExperimentConfig, runs: &[RunResult]) -> Result<(), HarnessError> {
    let manifest = Manifest {
        config,
        runs: runs
            .iter()
            .map(|r| ManifestRun {
                file: r.key.file_name(),
                status: match &r.outcome {
                    Ok(s) => s.status.as_str().into(),
                    Err(_) => "error".into(),
                },
                error: r.outcome.as_ref().err().cloned(),
            })
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| HarnessError::Other(e.to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}

/// Final state of one trace file, as read back by [`summarize`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub file: String,
    pub method: Method,
    pub scheme: Scheme,
    pub snr_db: f64,
    pub seed: u64,
    /// `None` for a failed run.
    pub final_wsr: Option<f64>,
    pub iterations: usize,
    /// First iteration within 1% of the final WSR.
    pub settle_iteration: Option<usize>,
    pub status: String,
    pub final_uav: Option<Position3D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub traces: Vec<TraceSummary>,
    pub checks: Vec<Check>,
    /// Files that could not be read.
    pub problems: Vec<String>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        for p in &self.problems {
            writeln!(f, "unreadable: {p}")?;
        }
        if self.traces.is_empty() {
            return Ok(());
        }
        writeln!(f, "{:<8} {:<6} {:>8} {:>6} {:>16} {:>10} {:>8}", "method", "scheme", "snr_db", "runs", "median_wsr", "median_it", "failed")?;
        for (key, group) in groups(&self.traces) {
            let wsr = median(group.iter().filter_map(|t| t.final_wsr).collect());
            let it = median(group.iter().filter(|t| t.final_wsr.is_some()).map(|t| t.iterations as f64).collect());
            let failed = group.iter().filter(|t| t.final_wsr.is_none()).count();
            writeln!(
                f,
                "{:<8} {:<6} {:>8} {:>6} {:>16} {:>10} {:>8}",
                key.0.tag(),
                key.1.to_string(),
                key.2,
                group.len(),
                wsr.map_or("-".into(), |v| format!("{v:.9e}")),
                it.map_or("-".into(), |v| format!("{v}")),
                failed
            )?;
        }
        for c in &self.checks {
            writeln!(f, "{}: {} ({})", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail)?;
        }
        Ok(())
    }
}

type GroupKey = (Method, Scheme, String);

fn groups(traces: &[TraceSummary]) -> BTreeMap<GroupKey, Vec<&TraceSummary>> {
    let mut map: BTreeMap<GroupKey, Vec<&TraceSummary>> = BTreeMap::new();
    for t in traces {
        map.entry((t.method, t.scheme, format!("{:>8}", t.snr_db))).or_default().push(t);
    }
    map
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn method_of(file: &str) -> Option<Method> {
    Method::from_tag(file.strip_prefix("trace_")?.split('_').next()?)
}

fn read_trace(path: &Path) -> Result<TraceSummary, String> {
    let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let method = method_of(&file).ok_or("file name does not name a method")?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("missing column `{name}`"));
    let (c_it, c_scheme, c_seed, c_snr, c_wsr, c_status) =
        (col("iteration")?, col("scheme")?, col("seed")?, col("snr_db")?, col("wsr_bps_hz")?, col("status")?);
    let (c_x, c_y, c_z) = (col("uav_x")?, col("uav_y")?, col("uav_z")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| e.to_string())?);
    }
    let last = rows.last().ok_or("no rows")?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
    let scheme: Scheme = last[c_scheme].parse().map_err(|e: crate::Error| e.to_string())?;
    let status = last[c_status].to_string();
    let failed = status == "error";
    let wsr: Vec<f64> = if failed { vec![] } else { rows.iter().map(|r| num(&r[c_wsr])).collect::<Result<_, _>>()? };
    let final_wsr = wsr.last().copied();
    let settle_iteration = final_wsr.and_then(|w| {
        rows.iter().zip(&wsr).find(|(_, v)| **v >= w * 0.99).and_then(|(r, _)| r[c_it].parse().ok())
    });
    let final_uav = if failed { None } else { Some(Position3D::new(num(&last[c_x])?, num(&last[c_y])?, num(&last[c_z])?)) };
    Ok(TraceSummary {
        file,
        method,
        scheme,
        snr_db: num(&last[c_snr])?,
        seed: last[c_seed].parse().map_err(|_| "bad seed".to_string())?,
        final_wsr,
        iterations: last[c_it].parse().map_err(|_| "bad iteration".to_string())?,
        settle_iteration,
        status,
        final_uav,
    })
}

fn channel_kind(dir: &Path) -> Option<String> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let table: toml::Table = text.parse().ok()?;
    table.get("config")?.get("scenario")?.get("channel")?.get("kind")?.as_str().map(str::to_string)
}

/// Reads every trace CSV in `dir` and reports converged values and the
/// scheme ordering checks.
pub fn summarize(dir: &Path) -> Result<Summary, HarnessError> {
    let mut summary = Summary::default();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            name.starts_with("trace_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    for path in &files {
        match read_trace(path) {
            Ok(t) => summary.traces.push(t),
            Err(e) => summary.problems.push(format!("{}: {e}", path.display())),
        }
    }
    if summary.traces.is_empty() {
        summary.notes.push(format!("no runs found in {}", dir.display()));
        return Ok(summary);
    }

    let medians: BTreeMap<GroupKey, f64> = groups(&summary.traces)
        .into_iter()
        .filter_map(|(k, g)| median(g.iter().filter_map(|t| t.final_wsr).collect()).map(|m| (k, m)))
        .collect();
    let snrs: Vec<String> = {
        let mut s: Vec<String> = medians.keys().map(|k| k.2.clone()).collect();
        s.sort_by(|a, b| a.trim().parse::<f64>().unwrap_or(0.0).total_cmp(&b.trim().parse::<f64>().unwrap_or(0.0)));
        s.dedup();
        s
    };
    let mut order = |name: String, a: Option<&f64>, b: Option<&f64>| {
        if let (Some(a), Some(b)) = (a, b) {
            summary.checks.push(Check {
                name,
                pass: *a >= *b - ORDER_TOL,
                detail: format!("{a:.9e} vs {b:.9e}, margin {:+.3e}", a - b),
            });
        }
    };
    let rician = channel_kind(dir).as_deref() == Some("rician");
    for snr in &snrs {
        let at = |m: Method, s: Scheme| medians.get(&(m, s, snr.clone()));
        let label = snr.trim();
        for method in [Method::Joint, Method::AvgLocation] {
            let tag = method.tag();
            order(format!("{tag} RSMA >= SDMA @ {label} dB"), at(method, Scheme::Rsma), at(method, Scheme::Sdma));
            order(format!("{tag} SDMA >= NOMA @ {label} dB"), at(method, Scheme::Sdma), at(method, Scheme::Noma));
        }
        for scheme in Scheme::ALL {
            order(
                format!("joint >= avgloc {scheme} @ {label} dB"),
                at(Method::Joint, scheme),
                at(Method::AvgLocation, scheme),
            );
        }
        if rician && label.parse::<f64>().is_ok_and(|v| v <= 5.0) {
            order(format!("NOMA >= SDMA (low SNR) @ {label} dB"), at(Method::Joint, Scheme::Noma), at(Method::Joint, Scheme::Sdma));
        }
    }
    Ok(summary)
}
