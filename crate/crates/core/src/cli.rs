//! Command-line runner: `solve`, `learn`, `diagnose`, `resources`, `poly-table`.
//!
//! Every subcommand accepts `--config FILE` (TOML, unknown keys rejected);
//! flags override file values. Exit codes: 0 success, 2 infeasible,
//! 3 configuration error, 4 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::exactspec::{self, eigendecompose, free_energy_purity, gibbs_state, purity_bound, spectral_condition_count};
use crate::hamlearn::{self, make_instance, ModelSpec};
use crate::mmw::{
    binary_search_optimize, rescale_problem, zero_sum_solve, Constraint, NoHooks, SdpProblem, SolveOptions,
    SolverBackend, Verdict, VerdictKind,
};
use crate::operators::{compile, PauliSum};
use crate::resources::{self, BlockCosts};
use crate::tpq::{Backend, EnsembleConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "tpqsdp", version, about = "MMW SDP solver with thermal pure quantum state estimates")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve an SDP feasibility (or optimization) problem from a TOML file.
    Solve(SolveArgs),
    /// Run a Hamiltonian-learning instance.
    Learn(LearnArgs),
    /// Purity and spectral-condition diagnostics for a model Gibbs state.
    Diagnose(DiagnoseArgs),
    /// Complexity and resource calculators.
    Resources {
        #[command(subcommand)]
        what: ResourcesCommand,
    },
    /// Polynomial degree table.
    PolyTable(PolyTableArgs),
}

#[derive(Subcommand, Debug)]
pub enum ResourcesCommand {
    /// JSON complexity report.
    Report(ReportArgs),
    /// Hubbard Toffoli/qubit table as CSV.
    Table1(Table1Args),
    /// Polynomial degree table as CSV.
    PolyTable(PolyTableArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// exact | krylov | qet
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub optimize: bool,
    #[arg(long)]
    pub record_time: bool,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub samples_per_batch: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// hubbard | xxz
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub stride: Option<u64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub samples_per_batch: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Matrix dimension N.
    #[arg(long = "dim")]
    pub dim: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub delta_tilde: Option<f64>,
    #[arg(long)]
    pub spectral_condition: bool,
}

#[derive(Args, Debug)]
pub struct Table1Args {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct PolyTableArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

fn read_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_backend(s: &str) -> CliResult<Backend> {
    s.parse().map_err(config_err)
}

/// Writes via a temporary sibling and rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dst = dir.join(name);
    let mut f = fs::File::create(&tmp).map_err(numerical)?;
    f.write_all(contents.as_bytes()).map_err(numerical)?;
    f.sync_all().map_err(numerical)?;
    fs::rename(&tmp, &dst).map_err(numerical)
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn commit(self) -> CliResult<()> {
        fs::create_dir_all(&self.dir).map_err(numerical)?;
        for (name, contents) in &self.files {
            write_atomic(&self.dir, name, contents)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a C,
}

fn manifest<C: Serialize>(command: &str, seed: u64, config: &C) -> String {
    let m = Manifest { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, seed, config };
    serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn verdict_exit(v: &Verdict) -> i32 {
    if matches!(v.kind, VerdictKind::Infeasible { .. }) {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub batches: Option<usize>,
    pub samples_per_batch: Option<usize>,
    pub xi: Option<f64>,
}

fn ensemble(backend: Backend, sec: &EnsembleSection, epsilon: f64, seed: u64) -> CliResult<EnsembleConfig> {
    let d = EnsembleConfig::default();
    let cfg = EnsembleConfig {
        batches: sec.batches.unwrap_or(d.batches),
        samples_per_batch: sec.samples_per_batch.unwrap_or(d.samples_per_batch),
        backend,
        xi: sec.xi.unwrap_or(epsilon),
        seed,
        ..d
    };
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn solver_backend(name: &str, sec: &EnsembleSection, epsilon: f64, seed: u64) -> CliResult<SolverBackend> {
    match parse_backend(name)? {
        Backend::Exact => Ok(SolverBackend::Exact),
        b => Ok(SolverBackend::Tpq(ensemble(b, sec, epsilon, seed)?)),
    }
}

// ---------- solve ----------

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// Inline operator text (`coeff LETTERS` per line).
    pub operator: Option<String>,
    /// Operator file, relative to the problem file.
    pub file: Option<PathBuf>,
    pub b: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub objective: Option<String>,
    pub trace_bound: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub optimize: Option<bool>,
    pub record_time: Option<bool>,
    pub max_iterations: Option<u64>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
}

fn load_operator(spec: &ConstraintSpec, base: &Path, n: usize) -> CliResult<PauliSum> {
    let text = match (&spec.operator, &spec.file) {
        (Some(t), None) => t.clone(),
        (None, Some(f)) => fs::read_to_string(base.join(f)).map_err(|e| config_err(format!("{}: {e}", f.display())))?,
        _ => return Err(config_err("each constraint needs exactly one of `operator` or `file`")),
    };
    let op = PauliSum::from_text(&text).map_err(config_err)?;
    if op.is_zero() {
        Ok(PauliSum::zero(n))
    } else {
        Ok(op)
    }
}

fn load_problem(path: &Path, epsilon_override: Option<f64>) -> CliResult<SdpProblem> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let pf: ProblemFile = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let constraints = pf
        .constraints
        .iter()
        .map(|c| Ok(Constraint { a: load_operator(c, base, pf.n)?, b: c.b }))
        .collect::<CliResult<Vec<_>>>()?;
    let eps = epsilon_override.unwrap_or(pf.epsilon);
    let mut p = SdpProblem::new(pf.n, constraints, eps).map_err(config_err)?;
    if let Some(obj) = &pf.objective {
        p = p.with_objective(PauliSum::from_text(obj).map_err(config_err)?).map_err(config_err)?;
    }
    match pf.trace_bound {
        Some(r) if r != 1.0 => {
            p.trace_bound = r;
            rescale_problem(&p, r).map_err(config_err)
        }
        _ => Ok(p),
    }
}

#[derive(Serialize)]
struct SolveMetrics {
    verdict: VerdictKind,
    tau: u64,
    budget: u64,
    beta: f64,
    theta: Vec<f64>,
    final_max_violation: f64,
    optimum: Option<f64>,
    config: SolveConfig,
}

fn run_solve(args: SolveArgs) -> CliResult<i32> {
    let file: SolveConfig = read_config(&args.common.config)?;
    let cfg = SolveConfig {
        problem: args.problem.or(file.problem),
        seed: args.common.seed.or(file.seed).or(Some(0)),
        backend: args.common.backend.or(file.backend).or(Some("exact".into())),
        epsilon: args.common.epsilon.or(file.epsilon),
        out: args.common.out.or(file.out).or(Some(PathBuf::from("out"))),
        optimize: Some(args.optimize || file.optimize.unwrap_or(false)),
        record_time: Some(args.record_time || file.record_time.unwrap_or(false)),
        max_iterations: args.max_iterations.or(file.max_iterations),
        ensemble: EnsembleSection {
            batches: args.batches.or(file.ensemble.batches),
            samples_per_batch: args.samples_per_batch.or(file.ensemble.samples_per_batch),
            xi: args.xi.or(file.ensemble.xi),
        },
    };
    let path = cfg.problem.clone().ok_or_else(|| config_err("no problem file given"))?;
    let problem = load_problem(&path, cfg.epsilon)?;
    let seed = cfg.seed.unwrap_or(0);
    let backend = solver_backend(cfg.backend.as_deref().unwrap_or("exact"), &cfg.ensemble, problem.epsilon, seed)?;
    let opts = SolveOptions { seed, record_time: cfg.record_time.unwrap_or(false), max_iterations: cfg.max_iterations };
    if cfg.optimize == Some(true) && problem.objective.is_none() {
        return Err(config_err("--optimize needs an objective"));
    }
    let (verdict, optimum) = if cfg.optimize == Some(true) {
        let r = binary_search_optimize(&problem, &backend, &opts).map_err(numerical)?;
        match r.witness {
            Some(w) => (w, Some(r.value)),
            None => return Err(numerical("no feasible level found during bisection")),
        }
    } else {
        (zero_sum_solve(&problem, &backend, &opts, &mut NoHooks).map_err(numerical)?, None)
    };
    let metrics = SolveMetrics {
        verdict: verdict.kind.clone(),
        tau: verdict.tau(),
        budget: verdict.budget,
        beta: verdict.beta,
        theta: verdict.theta(),
        final_max_violation: verdict.trace.rows.last().map_or(f64::NAN, |r| r.max_violation),
        optimum,
        config: cfg.clone(),
    };
    let mut art = Artifacts::new(cfg.out.clone().expect("defaulted"));
    art.add("trace.csv", verdict.trace.to_csv());
    art.add("metrics.json", to_json(&metrics));
    art.add("manifest.json", manifest("solve", seed, &cfg));
    art.commit()?;
    Ok(verdict_exit(&verdict))
}

// ---------- learn ----------

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub model: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub stride: Option<u64>,
    pub max_iterations: Option<u64>,
    pub record_time: Option<bool>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
}

fn model_spec(model: Option<&str>, nx: Option<usize>, ny: Option<usize>, n: Option<usize>) -> CliResult<ModelSpec> {
    match model.unwrap_or("hubbard") {
        "hubbard" => Ok(ModelSpec::hubbard(nx.unwrap_or(2), ny.unwrap_or(2))),
        "xxz" => Ok(ModelSpec::xxz(n.unwrap_or(8))),
        other => Err(config_err(format!("unknown model '{other}'"))),
    }
}

#[derive(Serialize)]
struct LearnOutput<'a> {
    verdict: &'a VerdictKind,
    tau: u64,
    purity: f64,
    purity_over_eps2: f64,
    metrics: Option<&'a hamlearn::LearningMetrics>,
    config: &'a LearnConfig,
}

fn run_learn(args: LearnArgs) -> CliResult<i32> {
    let file: LearnConfig = read_config(&args.common.config)?;
    let cfg = LearnConfig {
        model: args.model.or(file.model).or(Some("hubbard".into())),
        nx: args.nx.or(file.nx),
        ny: args.ny.or(file.ny),
        n: args.n.or(file.n),
        beta: args.beta.or(file.beta).or(Some(0.4)),
        seed: args.common.seed.or(file.seed).or(Some(0)),
        backend: args.common.backend.or(file.backend).or(Some("krylov".into())),
        epsilon: args.common.epsilon.or(file.epsilon).or(Some(0.05)),
        out: args.common.out.or(file.out).or(Some(PathBuf::from("out"))),
        stride: args.stride.or(file.stride).or(Some(hamlearn::DEFAULT_STRIDE)),
        max_iterations: args.max_iterations.or(file.max_iterations),
        record_time: Some(args.record_time || file.record_time.unwrap_or(false)),
        ensemble: EnsembleSection {
            batches: args.batches.or(file.ensemble.batches),
            samples_per_batch: args.samples_per_batch.or(file.ensemble.samples_per_batch),
            xi: args.xi.or(file.ensemble.xi),
        },
    };
    let spec = model_spec(cfg.model.as_deref(), cfg.nx, cfg.ny, cfg.n)?;
    let seed = cfg.seed.unwrap_or(0);
    let epsilon = cfg.epsilon.unwrap_or(0.05);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(config_err(format!("epsilon = {epsilon}")));
    }
    let beta = cfg.beta.unwrap_or(0.4);
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(config_err(format!("beta = {beta}")));
    }
    let backend = solver_backend(cfg.backend.as_deref().unwrap_or("krylov"), &cfg.ensemble, epsilon, seed)?;
    if spec.num_qubits() > exactspec::DEFAULT_MAX_DENSE_QUBITS {
        return Err(config_err(format!("{} qubits exceed the dense oracle limit", spec.num_qubits())));
    }
    let inst = make_instance(&spec, beta, epsilon, seed).map_err(config_err)?;
    let opts = SolveOptions { seed, record_time: cfg.record_time.unwrap_or(false), max_iterations: cfg.max_iterations };
    let stride = cfg.stride.unwrap_or(hamlearn::DEFAULT_STRIDE);
    let mut hooks = hamlearn::LearningHooks::new(&inst, stride).map_err(numerical)?;
    let verdict = zero_sum_solve(&inst.problem, &backend, &opts, &mut hooks).map_err(numerical)?;
    let metrics = if verdict.is_feasible() {
        Some(hamlearn::recover_parameters(&verdict, &inst).map_err(numerical)?)
    } else {
        None
    };
    let out = LearnOutput {
        verdict: &verdict.kind,
        tau: verdict.tau(),
        purity: inst.purity,
        purity_over_eps2: inst.purity_ratio(),
        metrics: metrics.as_ref(),
        config: &cfg,
    };
    let mut art = Artifacts::new(cfg.out.clone().expect("defaulted"));
    art.add("trace.csv", verdict.trace.to_csv());
    art.add("metrics.json", to_json(&out));
    art.add("instance.json", inst.snapshot_json() + "\n");
    art.add("manifest.json", manifest("learn", seed, &cfg));
    art.commit()?;
    Ok(verdict_exit(&verdict))
}

// ---------- diagnose ----------

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub model: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Diagnosis {
    pub n: usize,
    pub beta: f64,
    /// Spectral norm used to rescale `H` to `‖H‖ = 1`.
    pub scale: f64,
    pub nu: f64,
    pub purity: f64,
    pub bound: f64,
    pub count: usize,
    pub c: f64,
    /// `|purity − Z_{2β}/Z_β²|`
    pub free_energy_check: f64,
}

/// Purity of `e^{−βH/‖H‖}` and the spectral-condition bound at
/// `ν = (1 − 10⁻⁵) ln2/(2β)`.
pub fn diagnose_hamiltonian(h: &PauliSum, beta: f64) -> CliResult<Diagnosis> {
    let op = compile(h).map_err(config_err)?;
    let raw = exactspec::eigenvalues(&op).map_err(numerical)?;
    let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let scaled = compile(&h.scaled(1.0 / scale)).map_err(numerical)?;
    let eig = Arc::new(eigendecompose(&scaled).map_err(numerical)?);
    let g = gibbs_state(&eig, beta).map_err(numerical)?;
    let purity = exactspec::purity(&g);
    let n = h.num_qubits();
    let nu = (1.0 - 1e-5) * std::f64::consts::LN_2 / (2.0 * beta);
    let (count, c) = spectral_condition_count(eig.eigenvalues.as_slice(), nu, n);
    let bound = purity_bound(c, nu, beta, n).map_err(numerical)?;
    let fe = free_energy_purity(eig.eigenvalues.as_slice(), beta);
    Ok(Diagnosis { n, beta, scale, nu, purity, bound, count, c, free_energy_check: (purity - fe).abs() })
}

fn run_diagnose(args: DiagnoseArgs) -> CliResult<i32> {
    let file: DiagnoseConfig = read_config(&args.common.config)?;
    let cfg = DiagnoseConfig {
        model: args.model.or(file.model).or(Some("xxz".into())),
        nx: args.nx.or(file.nx),
        ny: args.ny.or(file.ny),
        n: args.n.or(file.n),
        beta: args.beta.or(file.beta).or(Some(0.4)),
        seed: args.common.seed.or(file.seed).or(Some(0)),
        out: args.common.out.or(file.out),
    };
    let spec = model_spec(cfg.model.as_deref(), cfg.nx, cfg.ny, cfg.n)?;
    let beta = cfg.beta.unwrap_or(0.4);
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(config_err(format!("beta = {beta}")));
    }
    if spec.num_qubits() > exactspec::DEFAULT_MAX_DENSE_QUBITS {
        return Err(config_err(format!("{} qubits exceed the dense oracle limit", spec.num_qubits())));
    }
    let seed = cfg.seed.unwrap_or(0);
    let terms = spec.build(seed).map_err(config_err)?;
    let d = diagnose_hamiltonian(&terms.hamiltonian, beta)?;
    let json = to_json(&d);
    print!("{json}");
    if let Some(dir) = cfg.out.clone() {
        let mut art = Artifacts::new(dir);
        art.add("diagnose.json", json);
        art.add("manifest.json", manifest("diagnose", seed, &cfg));
        art.commit()?;
    }
    Ok(EXIT_OK)
}

// ---------- resources ----------

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub dim: Option<f64>,
    pub m: Option<usize>,
    pub epsilon: Option<f64>,
    pub xi: Option<f64>,
    pub delta_tilde: Option<f64>,
    pub spectral_condition: Option<bool>,
    pub t_k: Option<f64>,
    pub t_sqrt_a: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReportOutput {
    complexity: resources::ComplexityReport,
    or_gap: resources::OrGapReport,
    or_binomial: Option<resources::OrBinomialReport>,
}

fn emit(out: Option<PathBuf>, name: &str, contents: String) -> CliResult<()> {
    print!("{contents}");
    if let Some(dir) = out {
        let mut art = Artifacts::new(dir);
        art.add(name, contents);
        art.commit()?;
    }
    Ok(())
}

fn run_report(args: ReportArgs) -> CliResult<i32> {
    let file: ReportConfig = read_config(&args.common.config)?;
    let dim = args.dim.or(file.dim).unwrap_or(1024.0);
    let m = args.m.or(file.m).unwrap_or(39);
    let eps = args.common.epsilon.or(file.epsilon).unwrap_or(0.05);
    let xi = args.xi.or(file.xi).unwrap_or(eps);
    let dt = args.delta_tilde.or(file.delta_tilde).unwrap_or(0.01);
    let cond = args.spectral_condition || file.spectral_condition.unwrap_or(false);
    let costs = BlockCosts { t_k: file.t_k.unwrap_or(1.0), t_sqrt_a: file.t_sqrt_a.unwrap_or(1.0) };
    let complexity = resources::complexity_report(dim, m, eps, xi, dt, cond, costs).map_err(config_err)?;
    let or_gap = resources::or_lemma_probabilities(resources::OR_DELTA, resources::OR_ZETA, m, 0.0);
    let or_binomial = resources::or_gap_binomial(eps, xi, m, resources::OR_DELTA, resources::OR_ZETA, 0.0).ok();
    emit(args.common.out.or(file.out), "report.json", to_json(&ReportOutput { complexity, or_gap, or_binomial }))?;
    Ok(EXIT_OK)
}

fn run_table1(args: Table1Args) -> CliResult<i32> {
    #[derive(Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct T1 {
        epsilon: Option<f64>,
        sizes: Option<Vec<(usize, usize)>>,
        out: Option<PathBuf>,
    }
    let file: T1 = read_config(&args.common.config)?;
    let eps = args.common.epsilon.or(file.epsilon).unwrap_or(0.05);
    let sizes = file.sizes.unwrap_or_else(|| vec![(2, 2), (4, 4), (6, 6)]);
    let csv = resources::table1_csv(&sizes, eps).map_err(config_err)?;
    emit(args.common.out.or(file.out), "table1.csv", csv)?;
    Ok(EXIT_OK)
}

fn run_poly_table(args: PolyTableArgs) -> CliResult<i32> {
    #[derive(Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        pairs: Option<Vec<(f64, f64)>>,
        out: Option<PathBuf>,
    }
    let file: P = read_config(&args.common.config)?;
    let pairs = file.pairs.unwrap_or_else(resources::default_poly_grid);
    let rows = resources::poly_table(&pairs).map_err(config_err)?;
    emit(args.common.out.or(file.out), "poly_table.csv", resources::poly_table_csv(&rows))?;
    Ok(EXIT_OK)
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("configuration error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Learn(a) => run_learn(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::Resources { what } => match what {
            ResourcesCommand::Report(a) => run_report(a),
            ResourcesCommand::Table1(a) => run_table1(a),
            ResourcesCommand::PolyTable(a) => run_poly_table(a),
        },
        Command::PolyTable(a) => run_poly_table(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<LearnConfig, _> = toml::from_str("model = \"xxz\"\nbogus = 1\n");
        assert!(r.is_err());
        let r: Result<LearnConfig, _> = toml::from_str("model = \"xxz\"\n[ensemble]\nbatches = 3\n");
        assert!(r.is_ok());
    }

    #[test]
    fn diagnosis_fields() {
        let spec = ModelSpec::xxz(6);
        let terms = spec.build(0).unwrap();
        let d = diagnose_hamiltonian(&terms.hamiltonian, 0.4).unwrap();
        assert!(d.purity <= d.bound);
        assert!(d.free_energy_check < 1e-10);
        assert!(d.c > 0.0 && d.c <= 1.0);
    }

    #[test]
    fn bad_backend_is_config_error() {
        assert!(matches!(parse_backend("gpu"), Err(CliError::Config(_))));
    }
}
