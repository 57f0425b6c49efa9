//! `nblab`: sampling, spectra, exact identity checks and seeded experiments.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 precondition failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nblab::configuration::{multigraph_of_matching, sample_uniform_matching, sample_uniform_regular, HalfEdgeSpace};
use nblab::experiment::{
    run_friedman_experiment, run_identity_suite, run_lift_experiment, Fault, FriedmanConfig, IdentityConfig, LiftConfig,
};
use nblab::lift::{build_lift, sample_random_lift, NewEigenMethod};
use nblab::multigraph::BaseMultigraph;
use nblab::nonbacktracking::{nb_from_multigraph, nb_spectrum_dense};
use nblab::pathmatrices::{verify_decomposition, DEFAULT_BUDGET};
use nblab::prooforacle::{binomial_grid_survey, exppath_bound_survey, SURVEY_ENVELOPE};
use nblab::rng::rng_from_seed;
use nblab::spectra::{dense_symmetric, gap_statistic, ramanujan_bound, SolverChoice};
use nblab::tangle::{find_tangled_vertex, UndirectedGraph};
use nblab::Error;

#[derive(Parser)]
#[command(name = "nblab", version, about = "Non-backtracking spectra of random regular graphs and random lifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a uniform simple d-regular graph by rejection from the configuration model.
    SampleRegular(SampleRegular),
    /// Sample a uniform random n-lift of a base multigraph.
    SampleLift(SampleLift),
    /// Adjacency and (optionally) non-backtracking spectrum of a graph file.
    Spectrum(SpectrumArgs),
    /// Check that every radius-ℓ ball contains at most one cycle.
    TangleCheck(TangleCheck),
    /// Exact check of the tangle-free path decomposition on a seeded configuration.
    VerifyDecomposition(VerifyDecomposition),
    /// Exact proof oracles: path-expectation survey and binomial grid.
    Oracle(OracleArgs),
    /// Friedman experiment on uniform simple d-regular graphs (JSONL).
    ExperimentFriedman(ExperimentFriedman),
    /// New-eigenvalue experiment on random lifts of a base graph (JSONL).
    ExperimentLift(ExperimentLift),
    /// Run every exact and numerical identity check on seeded instances.
    IdentitySuite(IdentitySuite),
}

#[derive(Args)]
struct Output {
    /// Write the main output here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleRegular {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    max_attempts: usize,
    /// Also write the accepted matching ("v i v' i'" per pair).
    #[arg(long)]
    matching: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct BaseArgs {
    /// Base graph file in the text graph format.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    base: Option<PathBuf>,
    /// Built-in base: bouquet:K, complete:K, cycle:K, path:K, k:A,B (complete bipartite) or petersen.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args)]
struct SampleLift {
    #[command(flatten)]
    base: BaseArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the lifted graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Include the non-backtracking spectrum (dense).
    #[arg(long)]
    nb: bool,
    /// Write the non-backtracking matrix in "row col value" form.
    #[arg(long)]
    coo: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct TangleCheck {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    ell: usize,
}

#[derive(Args)]
struct VerifyDecomposition {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    ell: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of partial paths per matrix.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// Path-expectation survey on n·d half-edges with up to k steps.
    #[arg(long, num_args = 3, value_names = ["N", "D", "K"])]
    survey: Option<Vec<usize>>,
    /// Binomial bound on the grid k ≤ K, p, q ∈ {0.001, …, 0.5}.
    #[arg(long, value_name = "K")]
    binomial: Option<u32>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, env = "NBLAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Add wall-clock timings to trial records (breaks byte-for-byte reproducibility).
    #[arg(long)]
    elapsed: bool,
    /// Also write the one-row CSV summary.
    #[arg(long)]
    summary_csv: Option<PathBuf>,
    /// Print one line per trial to stderr.
    #[arg(long)]
    log: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Dense,
    Iterative,
}

#[derive(Args)]
struct ExperimentFriedman {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 10_000)]
    max_attempts: usize,
    #[arg(long, value_enum, default_value_t = Solver::Auto)]
    solver: Solver,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Dense,
    IharaBass,
    ProjectedPower,
}

#[derive(Args)]
struct ExperimentLift {
    #[command(flatten)]
    base: BaseArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Method::Dense)]
    method: Method,
    /// Random restarts for the projected power method.
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IdentitySuite {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances per randomized check.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, env = "NBLAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Corrupt one non-backtracking entry to exercise the failure path.
    #[arg(long)]
    inject_fault: bool,
}

enum Failure {
    Verification(String),
    Config(String),
    Precondition(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidEdge { .. }
            | Error::InvalidVertexMap(_)
            | Error::InvalidMatching(_)
            | Error::EmptySample
            | Error::DimensionMismatch { .. } => Failure::Config(e.to_string()),
            Error::ReducibleOperator
            | Error::PreconditionFailed(_)
            | Error::PreconditionTangled(_)
            | Error::NotRegular(_)
            | Error::NoMatchingExists(_)
            | Error::EnumerationBudget(_)
            | Error::RejectionBudgetExhausted(_) => Failure::Precondition(e.to_string()),
            _ => Failure::Verification(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn emit(out: &Output, text: &str) -> CliResult {
    match &out.output {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::Config(format!("stdout: {e}")))
        }
    }
}

fn load_graph(path: &Path) -> Result<BaseMultigraph, Failure> {
    Ok(BaseMultigraph::from_text(&read(path)?)?)
}

fn builtin(spec: &str) -> Result<BaseMultigraph, Failure> {
    let bad = || Failure::Config(format!("unknown built-in graph `{spec}`"));
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    Ok(match name {
        "bouquet" => BaseMultigraph::bouquet(num(arg)?),
        "complete" => BaseMultigraph::complete(num(arg)?),
        "cycle" => BaseMultigraph::cycle(num(arg)?),
        "path" => BaseMultigraph::path(num(arg)?),
        "petersen" => BaseMultigraph::petersen(),
        "k" => {
            let (a, b) = arg.split_once(',').ok_or_else(bad)?;
            BaseMultigraph::complete_bipartite(num(a)?, num(b)?)
        }
        _ => return Err(bad()),
    })
}

fn load_base(args: &BaseArgs) -> Result<BaseMultigraph, Failure> {
    match (&args.base, &args.builtin) {
        (Some(p), _) => load_graph(p),
        (None, Some(s)) => builtin(s),
        (None, None) => Err(Failure::Config("a base graph is required".into())),
    }
}

fn json(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialize") + "\n"
}

fn sample_regular(a: SampleRegular) -> CliResult {
    if (a.n * a.d) % 2 == 1 || a.n <= a.d {
        return Err(Failure::Config(format!("no simple {}-regular graph on {} vertices", a.d, a.n)));
    }
    let mut rng = rng_from_seed(a.seed);
    let s = sample_uniform_regular(a.n, a.d, &mut rng, a.max_attempts)?;
    let space = HalfEdgeSpace::new(a.n, a.d);
    if let Some(p) = &a.matching {
        write_file(p, &s.matching.to_text(space))?;
    }
    eprintln!("accepted after {} attempts", s.attempts);
    emit(&a.out, &multigraph_of_matching(space, &s.matching).to_text())
}

fn sample_lift(a: SampleLift) -> CliResult {
    let base = load_base(&a.base)?;
    let sigma = sample_random_lift(&base, a.n, &mut rng_from_seed(a.seed))?;
    if let Some(p) = &a.graph {
        write_file(p, &build_lift(&base, &sigma)?.graph.to_text())?;
    }
    emit(&a.out, &sigma.to_text())
}

fn spectrum(a: SpectrumArgs) -> CliResult {
    let g = load_graph(&a.graph)?;
    let adj = g.adjacency();
    let eigs = dense_symmetric(adj.to_dense_f64());
    let mut report = serde_json::json!({ "adjacency": eigs });
    if let Some(d) = adj.regular_degree() {
        report["regular_degree"] = d.into();
        if let Ok(gs) = gap_statistic(&adj, d) {
            report["mu"] = gs.mu.into();
            report["mu2_or_mun"] = gs.friedman.into();
            report["ramanujan"] = (gs.mu <= ramanujan_bound(d) + 1e-10).into();
        }
    }
    let b = nb_from_multigraph(&g);
    if let Some(p) = &a.coo {
        write_file(p, &b.to_coordinate_text())?;
    }
    if a.nb {
        let nb: Vec<[f64; 2]> = nb_spectrum_dense(&b).iter().map(|z| [z.re, z.im]).collect();
        report["non_backtracking"] = serde_json::json!(nb);
    }
    emit(&a.out, &json(&report))
}

fn tangle_check(a: TangleCheck) -> CliResult {
    let g = UndirectedGraph::from(&load_graph(&a.graph)?);
    match find_tangled_vertex(&g, a.ell) {
        None => {
            println!("tangle-free at radius {}", a.ell);
            Ok(())
        }
        Some(r) => {
            println!("{}", serde_json::to_string(&r).expect("report serializes"));
            Err(Failure::Verification(format!(
                "tangled: ball of radius {} around vertex {} holds {} cycles",
                r.radius, r.center, r.cycle_count
            )))
        }
    }
}

fn verify_decomp(a: VerifyDecomposition) -> CliResult {
    let space = HalfEdgeSpace::new(a.n, a.d);
    let sigma = sample_uniform_matching(space, &mut rng_from_seed(a.seed))?;
    let c = verify_decomposition(space, &sigma, a.ell, a.budget)?;
    let line = format!(
        "n={} d={} ell={} seed={} worst_residual={:e} worst_entry=({}, {})",
        a.n, a.d, a.ell, a.seed, c.worst_residual, c.worst_entry.0, c.worst_entry.1
    );
    if c.holds {
        println!("PASS {line}");
        Ok(())
    } else {
        println!("FAIL {line}");
        Err(Failure::Verification("decomposition identity does not hold".into()))
    }
}

fn oracle(a: OracleArgs) -> CliResult {
    if a.survey.is_none() && a.binomial.is_none() {
        return Err(Failure::Config("pass --survey N D K and/or --binomial K".into()));
    }
    let mut failed = Vec::new();
    if let Some(k) = a.binomial {
        let r = binomial_grid_survey(k, 1000, 500);
        eprintln!(
            "binomial: checked={} violations={} worst_ratio={:.6} at k={} p={}/1000 q={}/1000",
            r.checked, r.violations, r.worst_ratio, r.worst_at.0, r.worst_at.1, r.worst_at.2
        );
        if r.violations > 0 {
            failed.push(format!("{} binomial violations", r.violations));
        }
    }
    if let Some(v) = &a.survey {
        let s = exppath_bound_survey(v[0], v[1], v[2])?;
        eprintln!("survey: n={} d={} k≤{} paths={} max_c={:.6}", s.n, s.d, s.k_limit, s.records.len(), s.max_c);
        if !(s.max_c <= SURVEY_ENVELOPE) {
            failed.push(format!("implied constant {} exceeds {SURVEY_ENVELOPE}", s.max_c));
        }
        emit(&a.out, &s.to_csv())?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join("; ")))
    }
}

fn finish_run(common: &Common, jsonl: &str, csv: &str, log: impl Iterator<Item = String>) -> CliResult {
    if common.log {
        for line in log {
            eprintln!("{line}");
        }
    }
    if let Some(p) = &common.summary_csv {
        write_file(p, csv)?;
    }
    emit(&common.out, jsonl)
}

fn experiment_friedman(a: ExperimentFriedman) -> CliResult {
    let cfg = FriedmanConfig {
        n: a.n,
        d: a.d,
        trials: a.common.trials,
        master_seed: a.common.seed,
        max_attempts: a.max_attempts,
        solver: match a.solver {
            Solver::Auto => SolverChoice::Auto,
            Solver::Dense => SolverChoice::Dense,
            Solver::Iterative => SolverChoice::Iterative,
        },
        threads: a.common.threads,
        record_elapsed: a.common.elapsed,
    };
    let run = run_friedman_experiment(&cfg)?;
    let log = run.trials.iter().map(|t| format!("trial {} seed={} status={} stat={:?}", t.index, t.seed, t.status, t.mu2_or_mun));
    finish_run(&a.common, &run.to_jsonl(), &run.summary_csv(), log)
}

fn experiment_lift(a: ExperimentLift) -> CliResult {
    let method = match a.method {
        Method::Dense => NewEigenMethod::Dense,
        Method::IharaBass => NewEigenMethod::IharaBass,
        Method::ProjectedPower => NewEigenMethod::ProjectedPower { restarts: a.restarts, seed: a.common.seed },
    };
    let cfg = LiftConfig {
        base: load_base(&a.base)?,
        n: a.n,
        trials: a.common.trials,
        master_seed: a.common.seed,
        method,
        threads: a.common.threads,
        record_elapsed: a.common.elapsed,
    };
    let run = run_lift_experiment(&cfg)?;
    let log = run.trials.iter().map(|t| format!("trial {} seed={} lead={:?} contained={}", t.index, t.seed, t.new_lead_modulus, t.containment_ok));
    finish_run(&a.common, &run.to_jsonl(), &run.summary_csv(), log)?;
    if run.summary.containment_fraction < 1.0 {
        return Err(Failure::Verification("base spectrum not contained in every lift".into()));
    }
    Ok(())
}

fn identity_suite(a: IdentitySuite) -> CliResult {
    let cfg = IdentityConfig {
        master_seed: a.seed,
        instances: a.instances,
        budget: a.budget,
        fault: a.inject_fault.then_some(Fault::FlipNbEntry),
        threads: a.threads,
    };
    let report = run_identity_suite(&cfg)?;
    print!("{}", report.to_text());
    if report.passed() {
        println!("PASS identity-suite ({} checks)", report.outcomes.len());
        Ok(())
    } else {
        let seeds: Vec<String> = report.failures().filter_map(|o| o.seed).map(|s| s.to_string()).collect();
        println!("FAIL identity-suite ({} failing)", report.failures().count());
        Err(Failure::Verification(format!("failing seeds: {}", seeds.join(" "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SampleRegular(a) => sample_regular(a),
        Command::SampleLift(a) => sample_lift(a),
        Command::Spectrum(a) => spectrum(a),
        Command::TangleCheck(a) => tangle_check(a),
        Command::VerifyDecomposition(a) => verify_decomp(a),
        Command::Oracle(a) => oracle(a),
        Command::ExperimentFriedman(a) => experiment_friedman(a),
        Command::ExperimentLift(a) => experiment_lift(a),
        Command::IdentitySuite(a) => identity_suite(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Precondition(m)) => {
            eprintln!("precondition failed: {m}");
            ExitCode::from(3)
        }
    }
}
