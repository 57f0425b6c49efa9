//! Seeded experiments producing JSONL records.
//!
//! Trial `i` always draws from `trial_seed(master_seed, i)` and results are
//! collected in trial order, so the output bytes do not depend on the number
//! of worker threads. Wall-clock timings are only emitted on request.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::{sample_uniform_matching, sample_uniform_regular, HalfEdgeSpace, Matching};
use crate::error::{Error, Result};
use crate::lift::{
    fiber_action_matches, lift_nb_matrix, lift_spectrum_ihara_bass, projected_power_estimate, sample_random_lift,
    split_spectrum, LiftPermutations, NewEigenMethod, PowerOptions, CONTAINMENT_TOL,
};
use crate::multigraph::BaseMultigraph;
use crate::nonbacktracking::{
    is_irreducible, nb_from_matching, nb_from_multigraph, nb_spectrum_dense, perron_eigenvalue, quadratic_roots,
    verify_ihara_bass,
};
use crate::pathmatrices::{lemma_hr_check, verify_decomposition, verify_power_identity, DEFAULT_BUDGET};
use crate::prooforacle::{binomial_grid_survey, exppath_bound_survey, SURVEY_ENVELOPE};
use crate::rng::{rng_from_seed, trial_seed};
use crate::spectra::{gap_statistic_with, ramanujan_bound, SolverChoice};
use crate::tangle::{largest_tangle_free_radius, UndirectedGraph};

pub const SCHEMA_VERSION: u32 = 1;
/// Slack values for the summary fractions.
pub const EPSILONS: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

/// Runs `f` on a pool of `threads` workers (0 means rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quantiles {
            min: *v.first()?,
            q05: quantile(&v, 0.05)?,
            q25: quantile(&v, 0.25)?,
            median: quantile(&v, 0.5)?,
            q75: quantile(&v, 0.75)?,
            q95: quantile(&v, 0.95)?,
            max: *v.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsFraction {
    pub eps: f64,
    pub threshold: f64,
    pub fraction: f64,
}

fn fractions(values: &[f64], center: f64) -> Vec<EpsFraction> {
    EPSILONS
        .iter()
        .map(|&eps| {
            let threshold = center + eps;
            let hit = values.iter().filter(|&&v| v <= threshold).count();
            EpsFraction { eps, threshold, fraction: if values.is_empty() { 0.0 } else { hit as f64 / values.len() as f64 } }
        })
        .collect()
}

fn to_jsonl<T: Serialize, S: Serialize>(trials: &[T], summary: &S) -> String {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(t).expect("records serialize"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(summary).expect("records serialize"));
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanConfig {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub max_attempts: usize,
    pub solver: SolverChoice,
    /// Worker threads; 0 selects rayon's default.
    pub threads: usize,
    pub record_elapsed: bool,
}

impl Default for FriedmanConfig {
    fn default() -> Self {
        FriedmanConfig {
            n: 200,
            d: 3,
            trials: 100,
            master_seed: 0,
            max_attempts: 10_000,
            solver: SolverChoice::Auto,
            threads: 0,
            record_elapsed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanTrial {
    pub schema_version: u32,
    pub record: &'static str,
    pub master_seed: u64,
    pub index: usize,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub status: &'static str,
    pub attempts: usize,
    /// `μ₂ ∨ |μₙ|`.
    pub mu2_or_mun: Option<f64>,
    pub mu: Option<f64>,
    pub ramanujan: Option<bool>,
    /// Second largest modulus of the non-backtracking spectrum via Ihara-Bass.
    pub nb_lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanSummary {
    pub schema_version: u32,
    pub record: &'static str,
    pub master_seed: u64,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub completed: usize,
    pub exhausted: usize,
    pub mean_attempts: f64,
    pub quantiles: Option<Quantiles>,
    /// Fraction of completed trials with `μ₂ ∨ |μₙ| ≤ 2√(d−1) + ε`.
    pub fractions: Vec<EpsFraction>,
    pub ramanujan_fraction: f64,
    pub nb_lambda2_quantiles: Option<Quantiles>,
    /// Fraction with `|λ₂| ≤ √(d−1) + ε`.
    pub nb_fractions: Vec<EpsFraction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanRun {
    pub trials: Vec<FriedmanTrial>,
    pub summary: FriedmanSummary,
}

impl FriedmanRun {
    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.trials, &self.summary)
    }

    pub const CSV_HEADER: &'static str =
        "master_seed,n,d,trials,completed,exhausted,median,q95,frac_eps_0.05,frac_eps_0.1,frac_eps_0.15,frac_eps_0.2,ramanujan_fraction";

    pub fn summary_csv(&self) -> String {
        let s = &self.summary;
        let q = |f: fn(&Quantiles) -> f64| s.quantiles.as_ref().map_or(String::new(), |x| f(x).to_string());
        let fr: Vec<String> = s.fractions.iter().map(|f| f.fraction.to_string()).collect();
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            s.master_seed,
            s.n,
            s.d,
            s.trials,
            s.completed,
            s.exhausted,
            q(|x| x.median),
            q(|x| x.q95),
            fr.join(","),
            s.ramanujan_fraction
        )
    }
}

/// `|λ₂(B)|` of a connected `d`-regular graph from `μ = max{|μᵢ| : |μᵢ| < d}`.
pub fn nb_second_modulus(mu: f64, d: usize) -> f64 {
    quadratic_roots(mu, d).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn friedman_trial(cfg: &FriedmanConfig, index: usize) -> Result<FriedmanTrial> {
    let seed = trial_seed(cfg.master_seed, index as u64);
    let start = Instant::now();
    let mut rng = rng_from_seed(seed);
    let mut trial = FriedmanTrial {
        schema_version: SCHEMA_VERSION,
        record: "trial",
        master_seed: cfg.master_seed,
        index,
        seed,
        n: cfg.n,
        d: cfg.d,
        status: "ok",
        attempts: 0,
        mu2_or_mun: None,
        mu: None,
        ramanujan: None,
        nb_lambda2: None,
        elapsed_ms: None,
    };
    match sample_uniform_regular(cfg.n, cfg.d, &mut rng, cfg.max_attempts) {
        Ok(sample) => {
            let g = gap_statistic_with(&sample.adjacency, cfg.d, cfg.solver)?;
            trial.attempts = sample.attempts;
            trial.mu2_or_mun = Some(g.friedman);
            trial.mu = Some(g.mu);
            trial.ramanujan = Some(g.mu <= ramanujan_bound(cfg.d) + 1e-10);
            trial.nb_lambda2 = Some(nb_second_modulus(g.mu, cfg.d));
        }
        Err(Error::RejectionBudgetExhausted(a)) => {
            trial.status = "rejection_budget_exhausted";
            trial.attempts = a;
        }
        Err(e) => return Err(e),
    }
    if cfg.record_elapsed {
        trial.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(trial)
}

/// Samples `trials` uniform simple `d`-regular graphs and records their
/// adjacency and non-backtracking gap statistics.
pub fn run_friedman_experiment(cfg: &FriedmanConfig) -> Result<FriedmanRun> {
    if cfg.d == 0 || (cfg.n * cfg.d) % 2 == 1 || cfg.n <= cfg.d {
        return Err(Error::InvalidArgument(format!("no simple {}-regular graph on {} vertices", cfg.d, cfg.n)));
    }
    if cfg.trials == 0 {
        return Err(Error::EmptySample);
    }
    let trials = with_threads(cfg.threads, || (0..cfg.trials).into_par_iter().map(|i| friedman_trial(cfg, i)).collect::<Result<Vec<_>>>())??;
    let stats: Vec<f64> = trials.iter().filter_map(|t| t.mu2_or_mun).collect();
    let lambdas: Vec<f64> = trials.iter().filter_map(|t| t.nb_lambda2).collect();
    let completed = stats.len();
    let ok_attempts: Vec<usize> = trials.iter().filter(|t| t.status == "ok").map(|t| t.attempts).collect();
    let summary = FriedmanSummary {
        schema_version: SCHEMA_VERSION,
        record: "summary",
        master_seed: cfg.master_seed,
        n: cfg.n,
        d: cfg.d,
        trials: cfg.trials,
        completed,
        exhausted: cfg.trials - completed,
        mean_attempts: if completed == 0 { 0.0 } else { ok_attempts.iter().sum::<usize>() as f64 / completed as f64 },
        quantiles: Quantiles::of(&stats),
        fractions: fractions(&stats, ramanujan_bound(cfg.d)),
        ramanujan_fraction: if completed == 0 {
            0.0
        } else {
            trials.iter().filter(|t| t.ramanujan == Some(true)).count() as f64 / completed as f64
        },
        nb_lambda2_quantiles: Quantiles::of(&lambdas),
        nb_fractions: fractions(&lambdas, ((cfg.d - 1) as f64).sqrt()),
    };
    Ok(FriedmanRun { trials, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftConfig {
    pub base: BaseMultigraph,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub method: NewEigenMethod,
    pub threads: usize,
    pub record_elapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftTrial {
    pub schema_version: u32,
    pub record: &'static str,
    pub master_seed: u64,
    pub index: usize,
    pub seed: u64,
    pub n: usize,
    pub rho1: f64,
    pub status: String,
    pub new_lead_modulus: Option<f64>,
    pub containment_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSummary {
    pub schema_version: u32,
    pub record: &'static str,
    pub master_seed: u64,
    pub n: usize,
    pub trials: usize,
    pub rho1: f64,
    pub sqrt_rho1: f64,
    pub containment_fraction: f64,
    pub quantiles: Option<Quantiles>,
    /// Fraction of trials with new leading modulus `≤ √ρ₁ + ε`.
    pub fractions: Vec<EpsFraction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftRun {
    pub trials: Vec<LiftTrial>,
    pub summary: LiftSummary,
}

impl LiftRun {
    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.trials, &self.summary)
    }

    pub const CSV_HEADER: &'static str =
        "master_seed,n,trials,rho1,containment_fraction,median,q95,frac_eps_0.05,frac_eps_0.1,frac_eps_0.15,frac_eps_0.2";

    pub fn summary_csv(&self) -> String {
        let s = &self.summary;
        let q = |f: fn(&Quantiles) -> f64| s.quantiles.as_ref().map_or(String::new(), |x| f(x).to_string());
        let fr: Vec<String> = s.fractions.iter().map(|f| f.fraction.to_string()).collect();
        format!(
            "{}\n{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            s.master_seed,
            s.n,
            s.trials,
            s.rho1,
            s.containment_fraction,
            q(|x| x.median),
            q(|x| x.q95),
            fr.join(",")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftOutcome {
    /// `None` when the new spectrum could not be separated.
    pub new_lead_modulus: Option<f64>,
    /// `σ(B) ⊆ σ(B_n)`: by spectrum matching for the spectral methods, by the
    /// exact action of `B_n` on fiber-constant vectors for the power method.
    pub containment_ok: bool,
}

/// New leading modulus and containment check for one lift.
pub fn lift_outcome(base: &BaseMultigraph, sigma: &LiftPermutations, method: NewEigenMethod) -> Result<LiftOutcome> {
    let b = nb_from_multigraph(base);
    if !is_irreducible(&b) {
        return Err(Error::ReducibleOperator);
    }
    let n = sigma.n();
    let spectral = |lift_eigs: Vec<num_complex::Complex64>| -> Result<LiftOutcome> {
        match split_spectrum(&lift_eigs, &nb_spectrum_dense(&b), CONTAINMENT_TOL) {
            Ok(split) => Ok(LiftOutcome {
                new_lead_modulus: Some(split.new.first().map_or(0.0, |z| z.norm())),
                containment_ok: true,
            }),
            Err(Error::ContainmentViolation { .. }) => Ok(LiftOutcome { new_lead_modulus: None, containment_ok: false }),
            Err(e) => Err(e),
        }
    };
    match method {
        NewEigenMethod::Dense => spectral(nb_spectrum_dense(&lift_nb_matrix(base, sigma)?)),
        NewEigenMethod::IharaBass => spectral(lift_spectrum_ihara_bass(base, sigma)?),
        NewEigenMethod::ProjectedPower { restarts, seed } => {
            let b_n = lift_nb_matrix(base, sigma)?;
            let containment_ok = fiber_action_matches(&b, &b_n, n);
            if n == 1 {
                return Ok(LiftOutcome { new_lead_modulus: Some(0.0), containment_ok });
            }
            let mut rng = rng_from_seed(seed);
            let mut best = 0.0f64;
            for _ in 0..restarts.max(1) {
                best = best.max(projected_power_estimate(&b_n, n, PowerOptions::default(), &mut rng)?);
            }
            Ok(LiftOutcome { new_lead_modulus: Some(best), containment_ok })
        }
    }
}

fn lift_trial(cfg: &LiftConfig, rho1: f64, index: usize) -> Result<LiftTrial> {
    let seed = trial_seed(cfg.master_seed, index as u64);
    let start = Instant::now();
    let mut rng = rng_from_seed(seed);
    let sigma = sample_random_lift(&cfg.base, cfg.n, &mut rng)?;
    let method = match cfg.method {
        NewEigenMethod::ProjectedPower { restarts, seed: s } => {
            NewEigenMethod::ProjectedPower { restarts, seed: trial_seed(s, seed) }
        }
        m => m,
    };
    let (status, outcome) = match lift_outcome(&cfg.base, &sigma, method) {
        Ok(o) => ("ok".to_string(), o),
        Err(e @ Error::ConvergenceFailure { .. }) => {
            (format!("error: {e}"), LiftOutcome { new_lead_modulus: None, containment_ok: false })
        }
        Err(e) => return Err(e),
    };
    Ok(LiftTrial {
        schema_version: SCHEMA_VERSION,
        record: "trial",
        master_seed: cfg.master_seed,
        index,
        seed,
        n: cfg.n,
        rho1,
        status,
        new_lead_modulus: outcome.new_lead_modulus,
        containment_ok: outcome.containment_ok,
        elapsed_ms: cfg.record_elapsed.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

/// Samples random `n`-lifts of an irreducible base and records the largest
/// new non-backtracking eigenvalue modulus of each.
pub fn run_lift_experiment(cfg: &LiftConfig) -> Result<LiftRun> {
    let b = nb_from_multigraph(&cfg.base);
    if !is_irreducible(&b) {
        return Err(Error::ReducibleOperator);
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("lift size must be at least 1".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::EmptySample);
    }
    let rho1 = perron_eigenvalue(&b, 1e-12, 1_000_000)?;
    let trials = with_threads(cfg.threads, || {
        (0..cfg.trials).into_par_iter().map(|i| lift_trial(cfg, rho1, i)).collect::<Result<Vec<_>>>()
    })??;
    let leads: Vec<f64> = trials.iter().filter_map(|t| t.new_lead_modulus).collect();
    let contained = trials.iter().filter(|t| t.containment_ok).count();
    let summary = LiftSummary {
        schema_version: SCHEMA_VERSION,
        record: "summary",
        master_seed: cfg.master_seed,
        n: cfg.n,
        trials: cfg.trials,
        rho1,
        sqrt_rho1: rho1.sqrt(),
        containment_fraction: contained as f64 / cfg.trials as f64,
        quantiles: Quantiles::of(&leads),
        fractions: fractions(&leads, rho1.sqrt()),
    };
    Ok(LiftRun { trials, summary })
}

/// Deliberate corruption used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the first zero entry of the first row of every `B` handed to
    /// the Ihara-Bass check.
    FlipNbEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityConfig {
    pub master_seed: u64,
    /// Instances per check.
    pub instances: usize,
    pub budget: u64,
    pub fault: Option<Fault>,
    pub threads: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig { master_seed: 0, instances: 20, budget: DEFAULT_BUDGET, fault: None, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: &'static str,
    pub passed: bool,
    /// Seed of the instance, when the check is randomized.
    pub seed: Option<u64>,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        match self.seed {
            Some(s) => format!("{verdict} {} seed={s} {}", self.check, self.detail),
            None => format!("{verdict} {} {}", self.check, self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    pub fn to_text(&self) -> String {
        self.outcomes.iter().map(|o| o.line() + "\n").collect()
    }
}

/// Seeded configuration instance on `n·d` half-edges whose largest
/// tangle-free radius `ℓ ≤ max_ell` is at least `min_ell ≥ 1`. Draws seeds
/// `trial_seed(master, index·2²⁰ + j)` for `j < 2²⁰` until one qualifies.
pub fn tangle_free_instance(
    n: usize,
    d: usize,
    min_ell: usize,
    max_ell: usize,
    master: u64,
    index: usize,
) -> Option<(u64, Matching, usize)> {
    const TRIES: usize = 1 << 20;
    let space = HalfEdgeSpace::new(n, d);
    (0..TRIES).find_map(|j| {
        let seed = trial_seed(master, (index * TRIES + j) as u64);
        let sigma = sample_uniform_matching(space, &mut rng_from_seed(seed)).ok()?;
        let g = UndirectedGraph::from_matching(space, &sigma);
        let ell = largest_tangle_free_radius(&g, max_ell).filter(|&l| l >= min_ell.max(1))?;
        Some((seed, sigma, ell))
    })
}

fn power_identity_outcomes(cfg: &IdentityConfig) -> Vec<CheckOutcome> {
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let n = [6, 8, 10, 12][i % 4];
            let min_ell = if n == 12 { 2 } else { 1 };
            let Some((seed, sigma, ell)) = tangle_free_instance(n, 3, min_ell, 3, cfg.master_seed ^ 0xB0, i) else {
                return CheckOutcome {
                    check: "power_identity",
                    passed: false,
                    seed: None,
                    detail: format!("no {min_ell}-tangle-free instance found at n={n}"),
                };
            };
            let space = HalfEdgeSpace::new(n, 3);
            let mut bad = Vec::new();
            for k in 0..=ell {
                match verify_power_identity(space, &sigma, k, cfg.budget) {
                    Ok(c) if c.holds => {}
                    Ok(c) => bad.push(format!("k={k}: {} mismatches", c.mismatches)),
                    Err(e) => bad.push(format!("k={k}: {e}")),
                }
            }
            CheckOutcome {
                check: "power_identity",
                passed: bad.is_empty(),
                seed: Some(seed),
                detail: if bad.is_empty() { format!("n={n} d=3 ℓ={ell}") } else { format!("n={n} ℓ={ell} {}", bad.join("; ")) },
            }
        })
        .collect()
}

fn decomposition_outcomes(cfg: &IdentityConfig) -> Vec<CheckOutcome> {
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let n = [4, 6, 8][i % 3];
            let ell = 1 + i % 2;
            let seed = trial_seed(cfg.master_seed ^ 0xDEC, i as u64);
            let space = HalfEdgeSpace::new(n, 3);
            let sigma = sample_uniform_matching(space, &mut rng_from_seed(seed)).expect("even half-edge count");
            let (passed, detail) = match verify_decomposition(space, &sigma, ell, cfg.budget) {
                Ok(c) => (c.holds, format!("n={n} d=3 ℓ={ell} worst_residual={:e}", c.worst_residual)),
                Err(e) => (false, format!("n={n} ℓ={ell} {e}")),
            };
            CheckOutcome { check: "decomposition", passed, seed: Some(seed), detail }
        })
        .collect()
}

fn flip_first_zero(b: &crate::nonbacktracking::NBMatrix) -> crate::nonbacktracking::NBMatrix {
    let f = (0..b.dim()).find(|&f| b.get(0, f) == 0.0).unwrap_or(0);
    b.with_flipped_entry(0, f)
}

fn ihara_bass_outcomes(cfg: &IdentityConfig) -> Vec<CheckOutcome> {
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let d = 3 + i % 2;
            let n = [10, 16, 20, 30][i % 4];
            let seed = trial_seed(cfg.master_seed ^ 0x1B, i as u64);
            let result = sample_uniform_regular(n, d, &mut rng_from_seed(seed), 100_000).and_then(|s| {
                let space = HalfEdgeSpace::new(n, d);
                let mut b = nb_from_matching(space, &s.matching);
                if cfg.fault == Some(Fault::FlipNbEntry) {
                    b = flip_first_zero(&b);
                }
                verify_ihara_bass(&s.adjacency, &b, 1e-8)
            });
            let (passed, detail) = match result {
                Ok(c) => (c.ok, format!("n={n} d={d} worst_residual={:e}", c.worst)),
                Err(e) => (false, format!("n={n} d={d} {e}")),
            };
            CheckOutcome { check: "ihara_bass", passed, seed: Some(seed), detail }
        })
        .collect()
}

fn hr_outcomes(cfg: &IdentityConfig) -> Vec<CheckOutcome> {
    (0..cfg.instances.min(5))
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(cfg.master_seed ^ 0x4E, i as u64);
            let (n, d, ell) = (8, 3, 1 + i % 3);
            let space = HalfEdgeSpace::new(n, d);
            let sigma = sample_uniform_matching(space, &mut rng_from_seed(seed)).expect("even half-edge count");
            let mut bm = nb_from_matching(space, &sigma);
            if cfg.fault == Some(Fault::FlipNbEntry) {
                bm = flip_first_zero(&bm);
            }
            let b = bm.to_dense();
            let m = space.size();
            let bl = (0..ell).fold(DMatrix::identity(m, m), |acc, _| acc * &b);
            let s = DMatrix::from_element(m, m, ((d - 1) as f64).powi(ell as i32) / m as f64);
            let r = &bl - &s;
            let (passed, detail) = match lemma_hr_check(&s, &r) {
                Ok(c) => (c.holds, format!("n={n} d={d} ℓ={ell} bound={:.6}", c.bound)),
                Err(e) => (false, format!("n={n} d={d} ℓ={ell} {e}")),
            };
            CheckOutcome { check: "lemma_hr", passed, seed: Some(seed), detail }
        })
        .collect()
}

fn oracle_outcomes() -> Vec<CheckOutcome> {
    let grid = binomial_grid_survey(12, 1000, 500);
    let mut out = vec![CheckOutcome {
        check: "binomial_oracle",
        passed: grid.violations == 0,
        seed: None,
        detail: format!("checked={} violations={} worst_ratio={:.6}", grid.checked, grid.violations, grid.worst_ratio),
    }];
    for (n, d) in [(2, 3), (4, 3), (2, 4), (3, 4)] {
        let (passed, detail) = match exppath_bound_survey(n, d, 3) {
            Ok(s) => (
                s.max_c.is_finite() && s.max_c <= SURVEY_ENVELOPE,
                format!("n={n} d={d} k≤{} paths={} max_c={:.6}", s.k_limit, s.records.len(), s.max_c),
            ),
            Err(e) => (false, format!("n={n} d={d} {e}")),
        };
        out.push(CheckOutcome { check: "exppath_oracle", passed, seed: None, detail });
    }
    out
}

/// Runs every exact and numerical identity check on seeded instances.
pub fn run_identity_suite(cfg: &IdentityConfig) -> Result<IdentityReport> {
    if cfg.instances == 0 {
        return Err(Error::EmptySample);
    }
    with_threads(cfg.threads, || {
        let mut outcomes = ihara_bass_outcomes(cfg);
        outcomes.extend(power_identity_outcomes(cfg));
        outcomes.extend(decomposition_outcomes(cfg));
        outcomes.extend(hr_outcomes(cfg));
        outcomes.extend(oracle_outcomes());
        IdentityReport { outcomes }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.95), Some(95.0));
        assert_eq!(quantile(&v, 0.5), Some(50.0));
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn friedman_on_k4_is_trivial() {
        let cfg = FriedmanConfig { n: 4, d: 3, trials: 5, ..Default::default() };
        let run = run_friedman_experiment(&cfg).unwrap();
        for t in &run.trials {
            assert_eq!(t.status, "ok");
            assert!((t.mu.unwrap() - 1.0).abs() < 1e-10);
        }
        assert_eq!(run.summary.completed, 5);
        assert!(!run.to_jsonl().contains("elapsed"));
    }

    #[test]
    fn friedman_rejects_bad_config() {
        let cfg = FriedmanConfig { n: 5, d: 3, ..Default::default() };
        assert!(matches!(run_friedman_experiment(&cfg), Err(Error::InvalidArgument(_))));
        let cfg = FriedmanConfig { trials: 0, ..Default::default() };
        assert_eq!(run_friedman_experiment(&cfg), Err(Error::EmptySample));
    }

    #[test]
    fn exhausted_trials_are_recorded() {
        let cfg = FriedmanConfig { n: 30, d: 3, trials: 3, max_attempts: 1, master_seed: 9, ..Default::default() };
        let run = run_friedman_experiment(&cfg).unwrap();
        assert!(run.trials.iter().any(|t| t.status == "rejection_budget_exhausted"));
        assert_eq!(run.summary.completed + run.summary.exhausted, 3);
    }

    #[test]
    fn output_independent_of_thread_count() {
        let mut cfg = FriedmanConfig { n: 40, d: 3, trials: 12, master_seed: 5, ..Default::default() };
        cfg.threads = 1;
        let a = run_friedman_experiment(&cfg).unwrap().to_jsonl();
        cfg.threads = 4;
        let b = run_friedman_experiment(&cfg).unwrap().to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn lift_of_size_one_has_no_new_spectrum() {
        let cfg = LiftConfig {
            base: BaseMultigraph::complete(4),
            n: 1,
            trials: 2,
            master_seed: 0,
            method: NewEigenMethod::Dense,
            threads: 1,
            record_elapsed: false,
        };
        let run = run_lift_experiment(&cfg).unwrap();
        for t in &run.trials {
            assert_eq!(t.new_lead_modulus, Some(0.0));
            assert!(t.containment_ok);
        }
        assert!((run.summary.rho1 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn lift_of_reducible_base_fails() {
        let cfg = LiftConfig {
            base: BaseMultigraph::path(2),
            n: 3,
            trials: 2,
            master_seed: 0,
            method: NewEigenMethod::Dense,
            threads: 1,
            record_elapsed: false,
        };
        assert_eq!(run_lift_experiment(&cfg), Err(Error::ReducibleOperator));
    }

    #[test]
    fn lift_methods_agree() {
        let base = BaseMultigraph::complete(4);
        let sigma = sample_random_lift(&base, 12, &mut rng_from_seed(4)).unwrap();
        let dense = lift_outcome(&base, &sigma, NewEigenMethod::Dense).unwrap();
        let ib = lift_outcome(&base, &sigma, NewEigenMethod::IharaBass).unwrap();
        let pp = lift_outcome(&base, &sigma, NewEigenMethod::ProjectedPower { restarts: 2, seed: 1 }).unwrap();
        assert!(dense.containment_ok && ib.containment_ok && pp.containment_ok);
        let (a, b, c) = (dense.new_lead_modulus.unwrap(), ib.new_lead_modulus.unwrap(), pp.new_lead_modulus.unwrap());
        assert!((a - b).abs() < 1e-8, "{a} {b}");
        assert!((a - c).abs() < 2e-2 * a, "{a} {c}");
    }

    #[test]
    fn identity_suite_detects_fault() {
        let cfg = IdentityConfig { instances: 2, fault: Some(Fault::FlipNbEntry), ..Default::default() };
        let ib = ihara_bass_outcomes(&cfg);
        assert!(ib.iter().all(|o| !o.passed));
        assert!(ib[0].line().starts_with("FAIL ihara_bass seed="));
        let clean = ihara_bass_outcomes(&IdentityConfig { instances: 2, ..Default::default() });
        assert!(clean.iter().all(|o| o.passed));
    }

    #[test]
    fn tangle_free_instances_are_reproducible() {
        let a = tangle_free_instance(12, 3, 2, 3, 1, 0).unwrap();
        let b = tangle_free_instance(12, 3, 2, 3, 1, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.2 >= 2);
    }
}
