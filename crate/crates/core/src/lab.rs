//! Experiment configuration, cached stage execution and run manifests.
//!
//! A run is a sequence of stages. Each stage writes `<stage>.json` (and
//! possibly `<stage>.csv`) under `output_dir/cache/<config-hash>/`; the JSON
//! file is written last and marks the stage complete, so a rerun with the
//! same canonical config reuses it instead of recomputing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concentration::{self, concentration_report, decay_rates, ConcentrationReport, Window};
use crate::deviation::{
    self, exact_variance_auto, mc_variance, mdp_probability, mdp_rate_fit, DeviationEstimate, RateFit, SpectralConstant,
    VarianceResult,
};
use crate::quantum::{self, damped_propagator, spectrum, unitarity_defect};
use crate::rng::RNG_ALGORITHM;
use crate::torus::{Mode, ToralAutomorphism, TorusError, TorusObservable, TorusPoint};
use crate::transfer::{self, gartner_ellis_check, legendre_fenchel, pressure_curve, GartnerEllisComparison, PressureCurve, RateFunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// The only environment override.
pub const OUTPUT_DIR_ENV: &str = "OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `[a, b, c, d]`
    pub map: [i64; 4],
    /// `{"K": .., "modes": [{"m": [m1, m2], "re": .., "im": ..}]}` with the zero mode and positive half.
    pub observable: serde_json::Value,
    /// The damping is `g = damping_offset + damping_scale · observable`.
    pub damping_offset: f64,
    pub damping_scale: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "T_list")]
    pub t_list: Vec<usize>,
    #[serde(rename = "variance_T")]
    pub variance_t: usize,
    pub gamma: f64,
    pub epsilon_grid: Vec<f64>,
    /// Half-width of the fixed decay-rate window.
    pub window_epsilon: f64,
    pub alpha: f64,
    pub xi_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    #[serde(rename = "K_op")]
    pub k_op: i64,
    pub power_tol: f64,
    pub samples: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: [2, 1, 1, 1],
            observable: TorusObservable::cosine(Mode(1, 0), 1.0).to_json(),
            damping_offset: 0.3,
            damping_scale: 0.3,
            n_list: vec![128, 256, 512, 1024],
            t_list: vec![50, 100, 200],
            variance_t: 100,
            gamma: 0.25,
            epsilon_grid: vec![1.0],
            window_epsilon: 0.1,
            alpha: 0.5,
            xi_grid: transfer::symmetric_grid(1.0, 0.05),
            eta_grid: transfer::symmetric_grid(0.3, 0.05),
            k_op: 32,
            power_tol: 1e-12,
            samples: 1_000_000,
            seed: 2024,
            output_dir: PathBuf::from("spectral-lab-out"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("config is not valid JSON for this schema: {0}")]
    Parse(String),
    #[error(transparent)]
    Map(TorusError),
    #[error("observable: {0}")]
    Observable(TorusError),
    #[error("gamma must lie in (0, 1/2), got {0}")]
    Gamma(f64),
    #[error("epsilon_grid must be nonempty with positive finite entries")]
    EpsilonGrid,
    #[error("T_list needs at least 3 ascending even windows >= 2, got {0:?}")]
    TList(Vec<usize>),
    #[error("variance_T must be >= 2, got {0}")]
    VarianceWindow(usize),
    #[error("samples must be >= 1000, got {0}")]
    Samples(u64),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("window_epsilon must be positive and finite, got {0}")]
    WindowEpsilon(f64),
    #[error("N_list needs at least 3 ascending dimensions >= 2, got {0:?}")]
    NList(Vec<usize>),
    #[error(transparent)]
    NotQuantizable(quantum::QuantumError),
    #[error("damping g = {offset} + {scale} q takes the negative value {min}")]
    NegativeDamping { offset: f64, scale: f64, min: f64 },
    #[error("xi_grid must be sorted, symmetric about 0 and contain 0")]
    XiGrid,
    #[error("eta_grid must be nonempty and finite")]
    EtaGrid,
    #[error("K_op = {k_op} is below twice the observable radius {radius}")]
    BoxRadius { k_op: i64, radius: i64 },
    #[error("power_tol must lie in (1e-14, 1e-4), got {0}")]
    Tolerance(f64),
    #[error(transparent)]
    Variance(deviation::DeviationError),
}

impl ValidationError {
    /// Stable identifier, one per precondition.
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::Parse(_) => "E_CONFIG_PARSE",
            ValidationError::Map(TorusError::NotUnimodular { .. }) => "E_MAP_NOT_UNIMODULAR",
            ValidationError::Map(_) => "E_MAP_NOT_HYPERBOLIC",
            ValidationError::Observable(_) => "E_OBSERVABLE",
            ValidationError::Gamma(_) => "E_BAD_SCALING",
            ValidationError::EpsilonGrid => "E_EPSILON_GRID",
            ValidationError::TList(_) => "E_T_LIST",
            ValidationError::VarianceWindow(_) => "E_VARIANCE_WINDOW",
            ValidationError::Samples(_) => "E_SAMPLES",
            ValidationError::Alpha(_) => "E_ALPHA",
            ValidationError::WindowEpsilon(_) => "E_WINDOW_EPSILON",
            ValidationError::NList(_) => "E_N_LIST",
            ValidationError::NotQuantizable(quantum::QuantumError::SingularKernel) => "E_SINGULAR_KERNEL",
            ValidationError::NotQuantizable(_) => "E_NOT_QUANTIZABLE",
            ValidationError::NegativeDamping { .. } => "E_NEGATIVE_DAMPING",
            ValidationError::XiGrid => "E_XI_GRID",
            ValidationError::EtaGrid => "E_ETA_GRID",
            ValidationError::BoxRadius { .. } => "E_BOX_TOO_SMALL",
            ValidationError::Tolerance(_) => "E_TOLERANCE",
            ValidationError::Variance(_) => "E_ESCAPE_CAP",
        }
    }
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("validation failed [{code}]: {0}", code = .0.code())]
    Validation(#[from] ValidationError),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("i/o error at {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation(_) => EXIT_VALIDATION,
            LabError::Stage { .. } => EXIT_NUMERICAL,
            LabError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> LabError + '_ {
    move |e| LabError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// What a command needs validated and computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Variance,
    Mdp,
    Pressure,
    Spectrum,
    Concentration,
    Classical,
    Quantum,
    Full,
}

impl Command {
    fn needs_classical(self) -> bool {
        matches!(self, Command::Variance | Command::Mdp | Command::Pressure | Command::Classical | Command::Full)
    }

    fn needs_quantum(self) -> bool {
        matches!(self, Command::Spectrum | Command::Concentration | Command::Quantum | Command::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Variance => "variance",
            Command::Mdp => "mdp",
            Command::Pressure => "pressure",
            Command::Spectrum => "spectrum",
            Command::Concentration => "concentration",
            Command::Classical => "classical",
            Command::Quantum => "quantum",
            Command::Full => "full",
        }
    }
}

/// The validated, typed view of a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub map: ToralAutomorphism,
    pub observable: TorusObservable,
    pub damping: TorusObservable,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(s).map_err(|e| ValidationError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(Self::from_json_str(&text)?)
    }

    /// Sorted-key JSON of everything that affects numerical output (not `output_dir`).
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Checks every precondition of the stages `command` runs.
    pub fn validate(&self, command: Command) -> Result<Experiment, ValidationError> {
        let [a, b, c, d] = self.map;
        let map = ToralAutomorphism::new(a, b, c, d).map_err(ValidationError::Map)?;
        let observable = TorusObservable::from_json(&self.observable).map_err(ValidationError::Observable)?;
        let damping = TorusObservable::constant(self.damping_offset).add(&observable.scale(self.damping_scale));
        if command.needs_classical() {
            self.validate_classical(&map, &observable)?;
        }
        if command.needs_quantum() {
            self.validate_quantum(&map, &damping)?;
        }
        Ok(Experiment { config: self.clone(), map, observable, damping, hash: self.hash() })
    }

    fn validate_classical(&self, map: &ToralAutomorphism, q: &TorusObservable) -> Result<(), ValidationError> {
        deviation::check_scaling(self.gamma).map_err(|_| ValidationError::Gamma(self.gamma))?;
        if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(ValidationError::EpsilonGrid);
        }
        let t_ok = self.t_list.len() >= 3
            && self.t_list.iter().all(|&t| t >= 2 && t % 2 == 0)
            && self.t_list.windows(2).all(|w| w[0] < w[1]);
        if !t_ok {
            return Err(ValidationError::TList(self.t_list.clone()));
        }
        if self.variance_t < 2 {
            return Err(ValidationError::VarianceWindow(self.variance_t));
        }
        if self.samples < 1000 {
            return Err(ValidationError::Samples(self.samples));
        }
        transfer::check_grid(&self.xi_grid).map_err(|_| ValidationError::XiGrid)?;
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !e.is_finite()) {
            return Err(ValidationError::EtaGrid);
        }
        if self.k_op < 2 * q.radius() || self.k_op < 1 {
            return Err(ValidationError::BoxRadius { k_op: self.k_op, radius: q.radius() });
        }
        if !(self.power_tol > 1e-14 && self.power_tol < 1e-4) {
            return Err(ValidationError::Tolerance(self.power_tol));
        }
        deviation::escape_time(map, q).map_err(ValidationError::Variance)?;
        Ok(())
    }

    fn validate_quantum(&self, map: &ToralAutomorphism, g: &TorusObservable) -> Result<(), ValidationError> {
        concentration::check_alpha(self.alpha).map_err(|_| ValidationError::Alpha(self.alpha))?;
        if !(self.window_epsilon > 0.0 && self.window_epsilon.is_finite()) {
            return Err(ValidationError::WindowEpsilon(self.window_epsilon));
        }
        if concentration::check_sizes(&self.n_list).is_err() || self.n_list[0] < 2 {
            return Err(ValidationError::NList(self.n_list.clone()));
        }
        if map.b == 0 {
            return Err(ValidationError::NotQuantizable(quantum::QuantumError::SingularKernel));
        }
        for &n in &self.n_list {
            if !quantum::is_admissible(map, n) {
                let [a, b, c, d] = map.entries();
                return Err(ValidationError::NotQuantizable(quantum::QuantumError::NotQuantizable {
                    a,
                    b,
                    c,
                    d,
                    n,
                    reason: "parity condition fails and N is odd".into(),
                }));
            }
        }
        let grid = 256;
        let min = (0..grid * grid)
            .map(|i| g.eval(TorusPoint { x: (i / grid) as f64 / grid as f64, p: (i % grid) as f64 / grid as f64 }))
            .fold(f64::INFINITY, f64::min);
        if min < -1e-12 {
            return Err(ValidationError::NegativeDamping { offset: self.damping_offset, scale: self.damping_scale, min });
        }
        Ok(())
    }

    /// `--out` wins over `OUTPUT_DIR`, which wins over the config file.
    pub fn resolve_output_dir(&mut self, cli_out: Option<PathBuf>) {
        if let Some(out) = cli_out {
            self.output_dir = out;
        } else if let Ok(env) = std::env::var(OUTPUT_DIR_ENV) {
            if !env.is_empty() {
                self.output_dir = PathBuf::from(env);
            }
        }
    }
}

/// Sorted-key, pretty-printed JSON with a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("artifact serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

fn sha256_file(path: &Path) -> Result<String, LabError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), LabError> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageStatus {
    Computed,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub wall_seconds: f64,
    pub files: Vec<FileRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub cache_dir: PathBuf,
    pub rng_algorithm: String,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
    pub started_unix: u64,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn all_cached(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Cached)
    }

    /// Every listed file exists under `root` and still matches its hash.
    pub fn verify(&self, root: &Path) -> Result<(), String> {
        for stage in &self.stages {
            for f in &stage.files {
                let path = root.join(&f.path);
                let actual = sha256_file(&path).map_err(|e| e.to_string())?;
                if actual != f.sha256 {
                    return Err(format!("{} changed since the run", path.display()));
                }
            }
        }
        Ok(())
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("spectral-lab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest-schema".to_string(), "1".to_string()),
    ])
}

/// One stage's outputs: the JSON record and an optional CSV table.
struct StageOutput<T> {
    record: T,
    csv: Option<String>,
}

struct Runner<'a> {
    exp: &'a Experiment,
    root: PathBuf,
    dir: PathBuf,
    manifest: RunManifest,
}

impl<'a> Runner<'a> {
    fn new(exp: &'a Experiment, command: Command) -> Result<Self, LabError> {
        let root = exp.config.output_dir.clone();
        let rel = PathBuf::from("cache").join(&exp.hash);
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let config: serde_json::Value = serde_json::from_str(&exp.config.canonical_json()).expect("canonical json");
        let manifest = RunManifest {
            command: command.name().into(),
            config_hash: exp.hash.clone(),
            config,
            cache_dir: rel,
            rng_algorithm: RNG_ALGORITHM.into(),
            versions: versions(),
            stages: Vec::new(),
            warnings: Vec::new(),
            started_unix,
        };
        Ok(Self { exp, root, dir, manifest })
    }

    fn rel(&self, file: &str) -> PathBuf {
        self.manifest.cache_dir.join(file)
    }

    fn file_records(&self, name: &str, has_csv: bool) -> Result<Vec<FileRecord>, LabError> {
        let mut files = Vec::new();
        if has_csv {
            let rel = self.rel(&format!("{name}.csv"));
            files.push(FileRecord { sha256: sha256_file(&self.root.join(&rel))?, path: rel });
        }
        let rel = self.rel(&format!("{name}.json"));
        files.push(FileRecord { sha256: sha256_file(&self.root.join(&rel))?, path: rel });
        Ok(files)
    }

    /// Serves `name` from the cache or runs `compute`, recording the outcome.
    fn stage<T, F>(&mut self, name: &str, has_csv: bool, compute: F) -> Result<T, LabError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<StageOutput<T>, String>,
    {
        let json_path = self.dir.join(format!("{name}.json"));
        let csv_path = self.dir.join(format!("{name}.csv"));
        if json_path.exists() && (!has_csv || csv_path.exists()) {
            let text = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
            if let Ok(record) = serde_json::from_str::<T>(&text) {
                let files = self.file_records(name, has_csv)?;
                self.manifest.stages.push(StageRecord {
                    stage: name.into(),
                    status: StageStatus::Cached,
                    wall_seconds: 0.0,
                    files,
                    error: None,
                });
                return Ok(record);
            }
        }
        let start = Instant::now();
        match compute() {
            Ok(out) => {
                if let Some(csv) = &out.csv {
                    write_atomic(&csv_path, csv)?;
                }
                write_atomic(&json_path, &to_sorted_json(&out.record))?;
                let files = self.file_records(name, has_csv)?;
                self.manifest.stages.push(StageRecord {
                    stage: name.into(),
                    status: StageStatus::Computed,
                    wall_seconds: start.elapsed().as_secs_f64(),
                    files,
                    error: None,
                });
                Ok(out.record)
            }
            Err(message) => {
                self.manifest.stages.push(StageRecord {
                    stage: name.into(),
                    status: StageStatus::Failed,
                    wall_seconds: start.elapsed().as_secs_f64(),
                    files: Vec::new(),
                    error: Some(message.clone()),
                });
                Err(LabError::Stage { stage: name.into(), message })
            }
        }
    }

    fn finish(mut self, result: Result<(), LabError>) -> (RunManifest, Result<(), LabError>) {
        self.manifest.warnings.sort();
        self.manifest.warnings.dedup();
        let runs = self.root.join("runs").join(&self.exp.hash);
        let written = fs::create_dir_all(&runs).map_err(io_err(&runs)).and_then(|_| {
            let path = runs.join(format!("{}.manifest.json", self.manifest.command));
            write_atomic(&path, &to_sorted_json(&self.manifest))
        });
        let result = result.and(written);
        (self.manifest, result)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceArtifact {
    #[serde(rename = "T")]
    pub window: usize,
    pub sigma_sq_exact: f64,
    pub exact: VarianceResult,
    pub monte_carlo: VarianceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitRecord {
    pub epsilon: f64,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpArtifact {
    pub estimates: Vec<DeviationEstimate>,
    pub fits: Vec<RateFitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GartnerEllisRecord {
    pub epsilon: f64,
    pub comparison: Option<GartnerEllisComparison>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    #[serde(rename = "N")]
    pub n: usize,
    pub map: [i64; 4],
    pub damping: serde_json::Value,
    pub eigenvalue_count: usize,
    pub unitarity_defect: f64,
    pub symbol_sup: f64,
    pub symbol_modes: usize,
    pub order: String,
    pub csv_columns: Vec<String>,
}

pub fn spectrum_csv(eigenvalues: &[Complex64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["re", "im", "modulus", "decay_rate"]).expect("in-memory write");
    for z in eigenvalues {
        let m = z.norm();
        w.write_record([z.re.to_string(), z.im.to_string(), m.to_string(), (-m.ln()).to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<Complex64>, LabError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::Io { path: path.into(), message: e.to_string() })?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| LabError::Io { path: path.into(), message: e.to_string() })?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| LabError::Io { path: path.into(), message: format!("bad field {i}") })
            };
            Ok(Complex64::new(parse(0)?, parse(1)?))
        })
        .collect()
}

fn estimates_csv(estimates: &[DeviationEstimate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["T", "a_T", "gamma", "epsilon", "hits", "samples", "probability", "stderr", "rate", "rate_is_bound"])
        .expect("in-memory write");
    for e in estimates {
        w.write_record([
            e.t.to_string(),
            e.a_t.to_string(),
            e.gamma.to_string(),
            e.epsilon.to_string(),
            e.hits.to_string(),
            e.samples.to_string(),
            e.probability.to_string(),
            e.stderr.to_string(),
            e.rate.to_string(),
            e.rate_is_bound.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

fn classical_stages(r: &mut Runner<'_>, command: Command) -> Result<(), LabError> {
    let exp = r.exp;
    let cfg = &exp.config;
    let (map, q) = (&exp.map, &exp.observable);
    let full = matches!(command, Command::Classical | Command::Full);

    if full || command == Command::Variance {
        let _: VarianceArtifact = r.stage("variance", false, || {
            let exact = exact_variance_auto(map, q).map_err(|e| e.to_string())?;
            let monte_carlo = mc_variance(map, q, cfg.variance_t, cfg.samples, cfg.seed).map_err(|e| e.to_string())?;
            let record = VarianceArtifact { window: cfg.variance_t, sigma_sq_exact: exact.sigma_sq, exact, monte_carlo };
            Ok(StageOutput { record, csv: None })
        })?;
    }
    let mut mdp = None;
    if full || command == Command::Mdp {
        let sigma_sq = exact_variance_auto(map, q).map_err(|e| LabError::Stage { stage: "mdp".into(), message: e.to_string() })?.sigma_sq;
        let art: MdpArtifact = r.stage("mdp", true, || {
            let mut estimates = Vec::new();
            let mut fits = Vec::new();
            for &eps in &cfg.epsilon_grid {
                let family: Vec<DeviationEstimate> = cfg
                    .t_list
                    .iter()
                    .map(|&t| mdp_probability(map, q, t, cfg.gamma, eps, cfg.samples, cfg.seed))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let fit = mdp_rate_fit(&family, sigma_sq);
                fits.push(RateFitRecord { epsilon: eps, error: fit.as_ref().err().map(|e| e.to_string()), fit: fit.ok() });
                estimates.extend(family);
            }
            let csv = estimates_csv(&estimates);
            Ok(StageOutput { record: MdpArtifact { estimates, fits }, csv: Some(csv) })
        })?;
        for e in art.estimates.iter().filter(|e| e.rate_is_bound) {
            r.manifest.warnings.push(format!("mdp: no hits at T = {}, epsilon = {}; rate is a bound", e.t, e.epsilon));
        }
        for f in art.fits.iter().filter_map(|f| f.error.as_ref().map(|e| (f.epsilon, e))) {
            r.manifest.warnings.push(format!("mdp: rate fit at epsilon = {} unavailable: {}", f.0, f.1));
        }
        mdp = Some(art);
    }
    if full || command == Command::Pressure {
        let curve: PressureCurve = r.stage("pressure", true, || {
            let curve = pressure_curve(map, q, &cfg.xi_grid, cfg.k_op, cfg.power_tol).map_err(|e| e.to_string())?;
            let csv = curve.to_csv();
            Ok(StageOutput { record: curve, csv: Some(csv) })
        })?;
        let rate: RateFunction = r.stage("rate_function", true, || {
            let rate = legendre_fenchel(&curve, &cfg.eta_grid).map_err(|e| e.to_string())?;
            let csv = rate.to_csv();
            Ok(StageOutput { record: rate, csv: Some(csv) })
        })?;
        if let Some(art) = &mdp {
            let _: Vec<GartnerEllisRecord> = r.stage("gartner_ellis", false, || {
                let record = cfg
                    .epsilon_grid
                    .iter()
                    .map(|&eps| {
                        let family: Vec<DeviationEstimate> = art.estimates.iter().filter(|e| e.epsilon == eps).cloned().collect();
                        let cmp = gartner_ellis_check(&rate, &family);
                        GartnerEllisRecord { epsilon: eps, error: cmp.as_ref().err().map(|e| e.to_string()), comparison: cmp.ok() }
                    })
                    .collect();
                Ok(StageOutput { record, csv: None })
            })?;
        }
    }
    Ok(())
}

fn constant_stage(r: &mut Runner<'_>) -> Result<SpectralConstant, LabError> {
    let (map, q) = (&r.exp.map, &r.exp.observable);
    let c: SpectralConstant = r.stage("constant", false, || {
        let record = deviation::concentration_constant(map, q).map_err(|e| e.to_string())?;
        Ok(StageOutput { record, csv: None })
    })?;
    if c.is_infinite() {
        r.manifest.warnings.push("constant: sigma^2 = 0, c = +infinity".into());
    }
    Ok(c)
}

fn quantum_stages(r: &mut Runner<'_>, command: Command, constant: Option<&SpectralConstant>) -> Result<(), LabError> {
    let exp = r.exp;
    let cfg = &exp.config;
    let mut samples = Vec::new();
    for &n in &cfg.n_list {
        let name = format!("spectrum_N{n}");
        let _: SpectrumSidecar = r.stage(&name, true, || {
            let sys = damped_propagator(&exp.map, &exp.damping, n).map_err(|e| e.to_string())?;
            let ev = spectrum(&sys).map_err(|e| e.to_string())?;
            let record = SpectrumSidecar {
                n,
                map: cfg.map,
                damping: exp.damping.to_json(),
                eigenvalue_count: ev.len(),
                unitarity_defect: unitarity_defect(sys.propagator.as_ref()),
                symbol_sup: sys.symbol_sup,
                symbol_modes: sys.symbol.modes().count(),
                order: "modulus descending, then phase ascending".into(),
                csv_columns: ["re", "im", "modulus", "decay_rate"].map(String::from).to_vec(),
            };
            Ok(StageOutput { record, csv: Some(spectrum_csv(&ev)) })
        })?;
        let ev = read_spectrum_csv(&r.dir.join(format!("{name}.csv")))?;
        let sample = decay_rates(&ev, &exp.damping, cfg.alpha).map_err(|e| LabError::Stage { stage: name.clone(), message: e.to_string() })?;
        samples.push(sample);
    }
    if command == Command::Spectrum {
        return Ok(());
    }
    for (name, window) in [("concentration_fixed", Window::Fixed(cfg.window_epsilon)), ("concentration_shrinking", Window::Shrinking)] {
        let report: ConcentrationReport = r.stage(name, true, || {
            let report = concentration_report(&samples, window, constant).map_err(|e| e.to_string())?;
            let csv = report.to_csv();
            Ok(StageOutput { record: report, csv: Some(csv) })
        })?;
        r.manifest.warnings.extend(report.warnings.iter().map(|w| format!("{name}: {w}")));
        if report.fit_status == concentration::FitStatus::Degenerate {
            r.manifest.warnings.push(format!("{name}: every fraction is 0 (perfect concentration, no exponent fitted)"));
        }
    }
    Ok(())
}

/// Validates `config` for `command` and runs the corresponding stages.
///
/// The manifest is returned (and written) even when a stage fails.
pub fn run(config: &ExperimentConfig, command: Command) -> Result<RunManifest, (Option<RunManifest>, LabError)> {
    let exp = config.validate(command).map_err(|e| (None, e.into()))?;
    let mut runner = Runner::new(&exp, command).map_err(|e| (None, e))?;
    let result = (|| {
        if command.needs_classical() {
            classical_stages(&mut runner, command)?;
        }
        if matches!(command, Command::Variance | Command::Classical | Command::Full | Command::Quantum | Command::Concentration) {
            let c = constant_stage(&mut runner)?;
            if command.needs_quantum() {
                quantum_stages(&mut runner, command, Some(&c))?;
            }
        } else if command.needs_quantum() {
            quantum_stages(&mut runner, command, None)?;
        }
        Ok(())
    })();
    let (manifest, result) = runner.finish(result);
    match result {
        Ok(()) => Ok(manifest),
        Err(e) => Err((Some(manifest), e)),
    }
}

pub fn run_classical(config: &ExperimentConfig) -> Result<RunManifest, (Option<RunManifest>, LabError)> {
    run(config, Command::Classical)
}

pub fn run_quantum(config: &ExperimentConfig) -> Result<RunManifest, (Option<RunManifest>, LabError)> {
    run(config, Command::Quantum)
}

pub fn run_full(config: &ExperimentConfig) -> Result<RunManifest, (Option<RunManifest>, LabError)> {
    run(config, Command::Full)
}

/// Runs `f` on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    builder.build().expect("thread pool").install(f)
}

/// Reads a stage record back from a run's cache directory.
pub fn load_stage<T: DeserializeOwned>(output_dir: &Path, manifest: &RunManifest, stage: &str) -> Result<T, LabError> {
    let path = output_dir.join(&manifest.cache_dir).join(format!("{stage}.json"));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| LabError::Io { path, message: e.to_string() })
}
