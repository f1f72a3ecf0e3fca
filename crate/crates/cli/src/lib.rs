//! Command-line front end: instance generation, PAC experiments, checklist
//! reports and the power-of-data demo. Every output is a pure function of
//! the resolved config, so re-running with the same seed reproduces files
//! byte for byte (wall-clock columns stay zero unless `--timing` is set).

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use learnsep::checklist::{self, ChecklistOptions, Separation, SeparationReport, Theorem};
use learnsep::cuberoot::{BitConcept, CubeRootProblem, RsaInstance, RsaPublic, RsaSecretFile, SurrogateCubeRootLearner};
use learnsep::decomposition::{with_sabotage, CubeRootDecomposition, DlpDecomposition, Sabotage};
use learnsep::dlp::{DlpConcept, DlpInstance, DlpInstanceFile, DlpProblem, SurrogateDlpLearner};
use learnsep::pac::{pac_trial, Learner, LearnerConfig, LearningProblem, TrialSummary};
use learnsep::power_of_data::{self, DataDemo};
use learnsep::seeds::{derive_seed, rng_from, stream};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Fresh examples drawn to estimate each trial's error.
pub const TEST_SIZE: usize = 2000;
/// Points on the power-of-data comparison grid.
pub const GRID_POINTS: usize = 100;
/// Largest grid deviation the power-of-data demo accepts.
pub const DEMO_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "learnsep", version, about = "Learning-separation laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a DLP or cube-root instance file.
    Gen(GenArgs),
    /// Run seeded PAC trials (or the power-of-data demo) and write CSV + JSON.
    Run(RunArgs),
    /// Sweep the separation checklist and write the report.
    Checklist(ChecklistArgs),
    /// Fit a single-parameter circuit from three samples and compare on a grid.
    PowerOfData(PowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Dlp,
    Cuberoot,
    PowerOfData,
}

impl Problem {
    fn name(self) -> &'static str {
        match self {
            Problem::Dlp => "dlp",
            Problem::Cuberoot => "cuberoot",
            Problem::PowerOfData => "power-of-data",
        }
    }
}

/// How a command ended, mapped to exit codes 0 and 1. Errors exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Positive,
    Negative,
}

impl Outcome {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Positive
        } else {
            Outcome::Negative
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Positive => 0,
            Outcome::Negative => 1,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub problem: Problem,
    #[arg(long)]
    pub bits: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; cube-root secrets go to `<stem>.secrets.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    #[arg(value_enum)]
    pub problem: Option<Problem>,
    /// Instance file written by `gen`. Without it an instance is generated from --bits and --seed.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub bits: Option<u32>,
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Cap on example-oracle calls per trial.
    #[arg(long)]
    pub sample_budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Output stem: writes `<stem>.csv` and `<stem>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Record wall-clock times (outputs are then no longer reproducible).
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecklistArgs {
    #[arg(value_enum)]
    pub problem: Option<Problem>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub bits: Option<u32>,
    /// `1`, `2` or `both`.
    #[arg(long)]
    pub theorem: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Learning trials for the learnability criterion.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Planted fault: none, off-by-one-reconstruction, label-bug, slow-generator.
    #[arg(long)]
    pub sabotage: Option<Sabotage>,
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Output stem: writes `<stem>.json` (report) and `<stem>.txt` (table).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerArgs {
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Fully resolved experiment settings, embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_budget: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => {
            let merged = RunArgs { jobs: a.jobs, timing: a.timing, ..layered(&a, a.config.as_deref())? };
            with_jobs(merged.jobs, || cmd_run(&merged))
        }
        Command::Checklist(a) => {
            let merged = ChecklistArgs { jobs: a.jobs, ..layered(&a, a.config.as_deref())? };
            with_jobs(merged.jobs, || cmd_checklist(&merged))
        }
        Command::PowerOfData(a) => {
            let a = layered(&a, a.config.as_deref())?;
            let run = RunArgs {
                problem: Some(Problem::PowerOfData),
                qubits: a.qubits,
                seed: a.seed,
                out: a.out.clone(),
                ..RunArgs::default()
            };
            cmd_run(&run)
        }
    }
}

/// Overlay the flags that were given on top of the config file's fields.
/// Fields marked `serde(skip)` come back defaulted; callers restore them.
fn layered<T: Serialize + DeserializeOwned + Clone>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(flags.clone());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut base: serde_json::Map<String, Value> =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Value::Object(over) = serde_json::to_value(flags)? else {
        bail!("flags did not serialize to an object");
    };
    for (k, v) in over {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).with_context(|| format!("invalid config {}", path.display()))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    pool.install(f)
}

fn stem(out: &Path) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some("json" | "csv" | "txt") => out.with_extension(""),
        _ => out.to_path_buf(),
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn cmd_gen(a: &GenArgs) -> Result<Outcome> {
    let stem = stem(&a.out);
    match a.problem {
        Problem::Dlp => {
            let inst = DlpInstance::generate(a.bits, a.seed)?;
            let path = with_suffix(&stem, ".json");
            write_file(&path, &to_json(&inst.to_file())?)?;
            println!("wrote {} (p = {}, a = {})", path.display(), inst.p(), inst.generator());
        }
        Problem::Cuberoot => {
            let inst = RsaInstance::generate(a.bits, a.seed)?;
            let public = with_suffix(&stem, ".json");
            let secret = with_suffix(&stem, ".secrets.json");
            write_file(&public, &to_json(&inst.public())?)?;
            write_file(&secret, &to_json(&inst.secret_file())?)?;
            println!("wrote {} (N = {}) and {}", public.display(), inst.n(), secret.display());
        }
        Problem::PowerOfData => bail!("power-of-data has no instance file; use `power-of-data --qubits`"),
    }
    Ok(Outcome::Positive)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading instance {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing instance {}", path.display()))
}

fn secrets_path(instance: &Path) -> PathBuf {
    with_suffix(&stem(instance), ".secrets.json")
}

fn load_dlp(instance: Option<&Path>, bits: Option<u32>, seed: u64) -> Result<DlpInstance> {
    let inst = match instance {
        Some(path) => DlpInstance::from_file(&read_json::<DlpInstanceFile>(path)?)?,
        None => DlpInstance::generate(bits.context("dlp needs --instance or --bits")?, seed)?,
    };
    if let Some(b) = bits {
        ensure!(b == inst.bits(), "--bits {b} does not match the {}-bit instance", inst.bits());
    }
    Ok(inst)
}

fn load_rsa(instance: Option<&Path>, bits: Option<u32>, seed: u64) -> Result<RsaInstance> {
    let inst = match instance {
        Some(path) => {
            let public: RsaPublic = read_json(path)?;
            let secret: RsaSecretFile = read_json(&secrets_path(path))?;
            RsaInstance::from_files(&public, &secret)?
        }
        None => RsaInstance::generate(bits.context("cuberoot needs --instance or --bits")?, seed)?,
    };
    if let Some(b) = bits {
        ensure!(b == inst.bits(), "--bits {b} does not match the {}-bit instance", inst.bits());
    }
    Ok(inst)
}

fn resolve_run(a: &RunArgs) -> Result<ExperimentConfig> {
    let problem = a.problem.context("missing problem (dlp, cuberoot or power-of-data)")?;
    let seed = a.seed.unwrap_or(0);
    let output_path = a.out.as_ref().map(|p| stem(p).display().to_string());
    let cfg = if problem == Problem::PowerOfData {
        let qubits = a.qubits.unwrap_or(4);
        ensure!((1..=power_of_data::MAX_QUBITS).contains(&qubits), "--qubits must be in 1..={}", power_of_data::MAX_QUBITS);
        ExperimentConfig {
            problem,
            instance: None,
            bits: None,
            qubits: Some(qubits),
            epsilon: None,
            delta: None,
            trials: None,
            sample_budget: None,
            seed,
            output_path,
        }
    } else {
        let epsilon = a.epsilon.unwrap_or(0.05);
        let delta = a.delta.unwrap_or(0.05);
        LearnerConfig::new(epsilon, delta, 0, seed)?;
        let trials = a.trials.unwrap_or(50);
        ensure!(trials > 0, "--trials must be positive");
        ensure!(a.instance.is_some() || a.bits.is_some(), "{} needs --instance or --bits", problem.name());
        ExperimentConfig {
            problem,
            instance: a.instance.as_ref().map(|p| p.display().to_string()),
            bits: a.bits,
            qubits: None,
            epsilon: Some(epsilon),
            delta: Some(delta),
            trials: Some(trials),
            sample_budget: a.sample_budget,
            seed,
            output_path,
        }
    };
    Ok(cfg)
}

/// Summary written next to the per-trial CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub problem: String,
    pub learner: String,
    pub success_frequency: f64,
    pub mean_error: f64,
    pub mean_samples: f64,
    /// Pass mark `1 - delta - slack` for the exit code.
    pub threshold: f64,
    pub passed: bool,
    pub wall_ms: u64,
}

pub fn cmd_run(a: &RunArgs) -> Result<Outcome> {
    let cfg = resolve_run(a)?;
    if cfg.problem == Problem::PowerOfData {
        return power_demo(&cfg);
    }
    let started = Instant::now();
    let instance = a.instance.as_deref();
    let (learner, problem): (Box<dyn Learner>, Box<dyn LearningProblem>) = match cfg.problem {
        Problem::Dlp => {
            let inst = load_dlp(instance, cfg.bits, cfg.seed)?;
            let i = 1 + derive_seed(cfg.seed, stream::CONCEPT, 0) % inst.order();
            let concept = DlpConcept::new(&inst, i)?;
            (Box::new(SurrogateDlpLearner::new(inst.clone())), Box::new(DlpProblem { inst, concept }))
        }
        Problem::Cuberoot => {
            let inst = load_rsa(instance, cfg.bits, cfg.seed)?;
            let public = inst.public();
            let i = 1 + (derive_seed(cfg.seed, stream::CONCEPT, 0) % inst.bits() as u64) as u32;
            let concept = BitConcept::new(&public, i)?;
            (Box::new(SurrogateCubeRootLearner::new(public)), Box::new(CubeRootProblem { inst, concept }))
        }
        Problem::PowerOfData => unreachable!(),
    };
    let (epsilon, delta, trials) = (cfg.epsilon.unwrap(), cfg.delta.unwrap(), cfg.trials.unwrap());
    let lc = LearnerConfig::new(epsilon, delta, cfg.sample_budget.unwrap_or(usize::MAX), cfg.seed)?;
    let summary = pac_trial(learner.as_ref(), problem.as_ref(), &lc, trials, TEST_SIZE);
    let threshold = 1.0 - delta - checklist::binomial_slack(delta, trials);
    let success_frequency = summary.success_frequency();
    let passed = success_frequency >= threshold;
    let result = RunSummary {
        config: cfg.clone(),
        problem: problem.description(),
        learner: learner.id().to_string(),
        success_frequency,
        mean_error: summary.mean_error(),
        mean_samples: summary.mean_samples(),
        threshold,
        passed,
        wall_ms: if a.timing { started.elapsed().as_millis() as u64 } else { 0 },
    };
    let csv = trials_csv(&cfg, learner.sample_size(&lc), &summary, a.timing)?;
    let json = to_json(&result)?;
    match &cfg.output_path {
        Some(s) => {
            write_file(&with_suffix(Path::new(s), ".csv"), &csv)?;
            write_file(&with_suffix(Path::new(s), ".json"), &json)?;
        }
        None => print!("{csv}"),
    }
    print!("{json}");
    Ok(Outcome::from_bool(passed))
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    seed: u64,
    m: usize,
    queries_used: usize,
    empirical_error: Option<f64>,
    success: bool,
    wall_ms: u64,
}

fn config_header<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(format!("# config: {}\n", serde_json::to_string(cfg)?))
}

fn csv_body<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Per-trial CSV: `trial,seed,m,queries_used,empirical_error,success,wall_ms`.
/// `empirical_error` is empty when the learner failed.
pub fn trials_csv(cfg: &ExperimentConfig, m: usize, summary: &TrialSummary, timing: bool) -> Result<String> {
    let rows = summary.records.iter().map(|r| TrialRow {
        trial: r.trial_id,
        seed: r.seed,
        m,
        queries_used: r.samples_used,
        empirical_error: r.empirical_error,
        success: r.success,
        wall_ms: if timing { r.wall.as_millis() as u64 } else { 0 },
    });
    Ok(config_header(cfg)? + &csv_body(rows)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSummary {
    pub config: ExperimentConfig,
    pub demo: DataDemoSummary,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataDemoSummary {
    pub circuit: power_of_data::CircuitSpec,
    pub samples: [(f64, f64); 3],
    pub model: power_of_data::CosineModel,
}

/// Circuit, sample angles and demo for a qubit count and seed.
pub fn power_demo_for(qubits: usize, seed: u64) -> Result<DataDemo> {
    let mut rng = rng_from(derive_seed(seed, stream::CIRCUIT, 0));
    let circuit = power_of_data::random_circuit(qubits, 3 * qubits + 2, &mut rng)?;
    // evenly spread samples keep the 3x3 system well conditioned
    let t0: f64 = rng.gen_range(0.0..TAU / 3.0);
    let thetas = [t0, t0 + TAU / 3.0, t0 + 2.0 * TAU / 3.0];
    Ok(power_of_data::run_demo(&circuit, thetas, GRID_POINTS)?)
}

fn power_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let demo = power_demo_for(cfg.qubits.unwrap(), cfg.seed)?;
    let passed = demo.max_abs_error <= DEMO_TOLERANCE;
    let csv = config_header(cfg)? + &csv_body(&demo.grid)?;
    let summary = PowerSummary {
        config: cfg.clone(),
        demo: DataDemoSummary { circuit: demo.circuit.clone(), samples: demo.samples, model: demo.model },
        max_abs_error: demo.max_abs_error,
        tolerance: DEMO_TOLERANCE,
        passed,
    };
    let json = to_json(&summary)?;
    match &cfg.output_path {
        Some(s) => {
            write_file(&with_suffix(Path::new(s), ".csv"), &csv)?;
            write_file(&with_suffix(Path::new(s), ".json"), &json)?;
        }
        None => print!("{csv}"),
    }
    println!(
        "alpha = {}, beta = {}, gamma = {}; max |simulated - predicted| over {} points = {:e}",
        demo.model.alpha, demo.model.beta, demo.model.gamma, GRID_POINTS, demo.max_abs_error
    );
    Ok(Outcome::from_bool(passed))
}

fn parse_theorems(s: Option<&str>) -> Result<Vec<Theorem>> {
    Ok(match s.unwrap_or("1") {
        "1" => vec![Theorem::One],
        "2" => vec![Theorem::Two],
        "both" | "1,2" => vec![Theorem::One, Theorem::Two],
        other => bail!("--theorem must be 1, 2 or both, got {other:?}"),
    })
}

/// Checklist settings as embedded in the text report.
#[derive(Debug, Clone, Serialize)]
struct ChecklistConfig<'a> {
    problem: Problem,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits: Option<u32>,
    sabotage: Sabotage,
    options: &'a ChecklistOptions,
}

pub fn cmd_checklist(a: &ChecklistArgs) -> Result<Outcome> {
    let (report, config) = checklist_report(a)?;
    let table = render_with_config(&report, &config);
    let json = to_json(&report)?;
    if let Some(out) = &a.out {
        let s = stem(out);
        write_file(&with_suffix(&s, ".json"), &json)?;
        write_file(&with_suffix(&s, ".txt"), &table)?;
    }
    print!("{table}");
    Ok(Outcome::from_bool(report.claimed_separation != Separation::None))
}

fn render_with_config(report: &SeparationReport, config: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config: {config}");
    out.push_str(&checklist::render_table(report));
    out
}

/// Build and sweep the checklist; returns the report and the embedded config line.
pub fn checklist_report(a: &ChecklistArgs) -> Result<(SeparationReport, String)> {
    let problem = a.problem.context("missing problem (dlp or cuberoot)")?;
    let seed = a.seed.unwrap_or(0);
    let mut options = ChecklistOptions { theorems: parse_theorems(a.theorem.as_deref())?, seed, ..Default::default() };
    if let Some(e) = a.epsilon {
        options.epsilon = e;
    }
    if let Some(d) = a.delta {
        options.delta = d;
    }
    if let Some(t) = a.trials {
        ensure!(t > 0, "--trials must be positive");
        options.learn_trials = t;
    }
    LearnerConfig::new(options.epsilon, options.delta, 0, seed)?;
    let sabotage = a.sabotage.unwrap_or_default();
    let instance = a.instance.as_deref();
    let report = match problem {
        Problem::Dlp => {
            let inst = load_dlp(instance, a.bits, seed)?;
            let learner = SurrogateDlpLearner::new(inst.clone());
            let d = with_sabotage(DlpDecomposition::new(inst), sabotage);
            checklist::run_checklist(&d, &learner, &options)?
        }
        Problem::Cuberoot => {
            let inst = load_rsa(instance, a.bits, seed)?;
            let learner = SurrogateCubeRootLearner::new(inst.public());
            let d = with_sabotage(CubeRootDecomposition::new(inst), sabotage);
            checklist::run_checklist(&d, &learner, &options)?
        }
        Problem::PowerOfData => bail!("the checklist applies to dlp and cuberoot"),
    };
    let config = ChecklistConfig {
        problem,
        instance: a.instance.as_ref().map(|p| p.display().to_string()),
        bits: a.bits,
        sabotage,
        options: &options,
    };
    let config = serde_json::to_string(&config)?;
    Ok((report, config))
}
