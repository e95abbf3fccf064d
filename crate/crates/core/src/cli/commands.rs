//! The `run`, `lp` and `validate` verbs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{parse_scenario, validate, ConfigError, PolicyKind, RawConfig, ScenarioConfig};
use crate::lp::{beta_to_alpha, solve_reference, LpSolution, LpStatus};
use crate::model::{network_cost, ActivationVector, CostParams};
use crate::region::Scenario;
use crate::sim::{drift_diagnostic, run, stability_fraction, stability_fraction_between, SimTrace};

/// Frozen column order of the per-seed trace files.
pub const TRACE_COLUMNS: [&str; 9] = [
    "t",
    "total_queue",
    "cost_t",
    "avg_cost",
    "windowed_cost",
    "j_state_id",
    "explore_flag",
    "mu_hat_err",
    "lambda_hat_err",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("LP infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for runtime and solver failures,
    /// 3 for an infeasible LP.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Runtime(_) => 2,
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Command-line replacements for `run.seeds` and `run.horizon`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub horizon: Option<u64>,
}

/// A loaded scenario and the exact bytes it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ScenarioConfig,
    pub text: String,
    pub path: PathBuf,
}

pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Loaded, CliError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = if overrides == &Overrides::default() {
        parse_scenario(&text)?
    } else {
        let mut raw: RawConfig = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
        if let Some(seeds) = &overrides.seeds {
            raw.run.seeds = seeds.clone();
        }
        if let Some(h) = overrides.horizon {
            raw.run.horizon = h;
        }
        validate(raw)?
    };
    Ok(Loaded {
        config,
        text,
        path: path.to_path_buf(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub policy: &'static str,
    pub users: usize,
    pub stations: usize,
    pub links: usize,
    pub channel_states: usize,
    pub lp_dimension: usize,
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

pub fn cmd_validate(config: &ScenarioConfig) -> ValidationReport {
    let s = &config.scenario;
    ValidationReport {
        valid: true,
        policy: config.policy.kind.as_str(),
        users: s.network().users(),
        stations: s.network().stations(),
        links: s.network().links().len(),
        channel_states: s.state_count(),
        lp_dimension: crate::lp::LpLayout::new(s).dim(),
        horizon: config.run.horizon,
        seeds: config.run.seeds.clone(),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SigmaEntry {
    pub id: usize,
    pub activation: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AlphaMember {
    pub rates: Vec<Vec<u64>>,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AlphaEntry {
    pub activation: String,
    pub state: String,
    pub members: Vec<AlphaMember>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CostDecomposition {
    /// `Σ_j σ_j (C1 ‖j‖ + C1' (M − ‖j‖))`, the LP objective.
    pub activation_cost: f64,
    pub eps_s: f64,
    /// Mean per-slot switching charge of the chain `P(σ*, ε_s)` in steady state.
    pub expected_switching_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LpReport {
    pub status: &'static str,
    pub eps_g: f64,
    pub objective: Option<f64>,
    /// Optimum with no capacity gap, `C*(μ, λ)`.
    pub objective_without_gap: Option<f64>,
    pub pivots: usize,
    pub sigma: Vec<SigmaEntry>,
    pub alpha: Vec<AlphaEntry>,
    pub cost: Option<CostDecomposition>,
}

const REPORT_FLOOR: f64 = 1e-12;

/// `ε_s Σ_{j,j'} σ_j σ_j' c(j → j')`.
pub fn expected_switching_cost(sigma: &[f64], stations: usize, costs: &CostParams, eps_s: f64) -> f64 {
    let switching = CostParams {
        c1: 0.0,
        c1_prime: 0.0,
        ..*costs
    };
    let mut sum = 0.0;
    for a in ActivationVector::enumerate(stations) {
        for b in ActivationVector::enumerate(stations) {
            sum += sigma[a.id()] * sigma[b.id()] * network_cost(&a, &b, &switching);
        }
    }
    eps_s * sum
}

fn optimum(solution: &LpSolution) -> Option<f64> {
    solution.is_optimal().then_some(solution.objective_value)
}

pub fn cmd_lp(config: &ScenarioConfig, eps_g: Option<f64>) -> Result<LpReport, CliError> {
    let s = &config.scenario;
    let eps_g = eps_g.unwrap_or(config.policy.eps_g);
    let solution = solve_reference(s, eps_g).map_err(runtime)?;
    let without_gap = solve_reference(s, 0.0).map_err(runtime)?;
    let stations = s.network().stations();
    let mut report = LpReport {
        status: match solution.status {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
        },
        eps_g,
        objective: optimum(&solution),
        objective_without_gap: optimum(&without_gap),
        pivots: solution.pivots,
        sigma: Vec::new(),
        alpha: Vec::new(),
        cost: None,
    };
    if !solution.is_optimal() {
        return Ok(report);
    }
    let sigma: Vec<f64> = solution.sigma().iter().map(|p| p.max(0.0)).collect();
    let split = beta_to_alpha(&solution);
    for j in ActivationVector::enumerate(stations) {
        let p = sigma[j.id()];
        if p <= REPORT_FLOOR {
            continue;
        }
        report.sigma.push(SigmaEntry {
            id: j.id(),
            activation: j.to_string(),
            probability: p,
        });
        for (h, state) in s.channel().states().iter().enumerate() {
            let region = s.region(&j, h);
            let members = split
                .alpha(j.id(), h)
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > REPORT_FLOOR)
                .map(|(k, &a)| {
                    let r = region.get(k);
                    let (rows, cols) = r.shape();
                    AlphaMember {
                        rates: (0..rows).map(|m| (0..cols).map(|u| r.get(m, u)).collect()).collect(),
                        probability: a,
                    }
                })
                .collect();
            report.alpha.push(AlphaEntry {
                activation: j.to_string(),
                state: state.name.clone(),
                members,
            });
        }
    }
    let eps_s = config.policy.eps_s;
    let switching = expected_switching_cost(&sigma, stations, s.network().costs(), eps_s);
    report.cost = Some(CostDecomposition {
        activation_cost: solution.objective_value,
        eps_s,
        expected_switching_cost: switching,
        total: solution.objective_value + switching,
    });
    Ok(report)
}

/// Writes one trace in the frozen column layout. Estimate errors are empty
/// for policies that learn nothing.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    let running = trace.running_average_cost();
    let windowed = trace.windowed_cost();
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (i, r) in trace.records().iter().enumerate() {
        w.write_record([
            r.t.to_string(),
            r.total_queue.to_string(),
            r.cost.to_string(),
            running[i].to_string(),
            windowed[i].to_string(),
            r.activation.to_string(),
            u8::from(r.explored).to_string(),
            opt(r.mu_hat_err),
            opt(r.lambda_hat_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DriftSummary {
    pub window: usize,
    pub threshold: u64,
    pub conditional_mean: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub trace_file: String,
    pub average_cost: f64,
    pub final_windowed_cost: f64,
    pub mean_total_queue: f64,
    pub mean_total_queue_last_half: f64,
    pub max_total_queue: u64,
    pub q_bar: u64,
    pub stability_fraction: f64,
    pub stability_fraction_last_half: f64,
    pub switch_count: u64,
    pub resample_count: u64,
    pub explore_count: u64,
    pub mu_hat_err: Option<f64>,
    pub lambda_hat_err: Option<f64>,
    pub drift: DriftSummary,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LpReference {
    pub eps_g: f64,
    /// `C*(μ, λ)`.
    pub at_lambda: Option<f64>,
    /// `C*(μ, λ + ε_g)`.
    pub at_lambda_plus_gap: Option<f64>,
    /// `C*(μ, λ + ε_g) + M C0 ε_s`.
    pub upper_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub policy: &'static str,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub lp_reference: LpReference,
    pub runs: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub config_sha256: String,
    pub config_path: String,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    pub files: Vec<String>,
    pub version: &'static str,
}

pub fn lp_reference(scenario: &Scenario, eps_g: f64, eps_s: f64) -> Result<LpReference, CliError> {
    let at_lambda = optimum(&solve_reference(scenario, 0.0).map_err(runtime)?);
    let at_gap = optimum(&solve_reference(scenario, eps_g).map_err(runtime)?);
    let network = scenario.network();
    Ok(LpReference {
        eps_g,
        at_lambda,
        at_lambda_plus_gap: at_gap,
        upper_bound: at_gap.map(|c| c + network.stations() as f64 * network.costs().c0 * eps_s),
    })
}

pub fn summarize(config: &ScenarioConfig, seed: u64, trace: &SimTrace, trace_file: String) -> SeedSummary {
    let h = trace.horizon();
    let half = h / 2 + 1;
    let drift = drift_diagnostic(trace, config.run.drift_window, config.run.drift_threshold);
    let q_bar = config.run.q_bar;
    SeedSummary {
        seed,
        trace_file,
        average_cost: trace.average_cost(),
        final_windowed_cost: trace.windowed_cost().last().copied().unwrap_or(0.0),
        mean_total_queue: trace.mean_total_queue_between(1, h),
        mean_total_queue_last_half: trace.mean_total_queue_between(half, h),
        max_total_queue: trace.records().iter().map(|r| r.total_queue).max().unwrap_or(0),
        q_bar,
        stability_fraction: stability_fraction(trace, q_bar),
        stability_fraction_last_half: stability_fraction_between(trace, q_bar, half, h),
        switch_count: trace.switch_count(),
        resample_count: trace.resample_count(),
        explore_count: trace.explore_count(),
        mu_hat_err: trace.final_mu_hat_err(),
        lambda_hat_err: trace.final_lambda_hat_err(),
        drift: DriftSummary {
            window: drift.window,
            threshold: drift.threshold,
            conditional_mean: drift.conditional_mean,
            samples: drift.conditioned_samples,
        },
    }
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(runtime)
}

/// Runs every seed, writing `trace_seed{N}.csv`, `summary.json` and
/// `manifest.json` into `out_dir`.
pub fn cmd_run(loaded: &Loaded, out_dir: &Path) -> Result<RunSummary, CliError> {
    let config = &loaded.config;
    let scenario = &config.scenario;
    let lp_ref = lp_reference(scenario, config.policy.eps_g, config.policy.eps_s)?;
    if matches!(config.policy.kind, PolicyKind::StaticSplitMw | PolicyKind::StaticSplitStatic)
        && lp_ref.at_lambda_plus_gap.is_none()
    {
        return Err(CliError::Infeasible(format!(
            "no static split serves the arrival rates with eps_g = {}",
            config.policy.eps_g
        )));
    }
    fs::create_dir_all(out_dir).map_err(runtime)?;

    let runs: Vec<SeedSummary> = config
        .run
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut policy = config.policy.build(scenario).map_err(runtime)?;
            let trace = run(scenario, &mut policy, &config.run_options(seed)).map_err(runtime)?;
            let name = trace_file_name(seed);
            let file = fs::File::create(out_dir.join(&name)).map_err(runtime)?;
            write_trace_csv(&trace, std::io::BufWriter::new(file)).map_err(runtime)?;
            Ok(summarize(config, seed, &trace, name))
        })
        .collect::<Result<_, CliError>>()?;

    let summary = RunSummary {
        policy: config.policy.kind.as_str(),
        horizon: config.run.horizon,
        seeds: config.run.seeds.clone(),
        lp_reference: lp_ref,
        runs,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    let mut files: Vec<String> = summary.runs.iter().map(|r| r.trace_file.clone()).collect();
    files.push("summary.json".into());
    let manifest = Manifest {
        config_sha256: hex::encode(Sha256::digest(loaded.text.as_bytes())),
        config_path: loaded.path.display().to_string(),
        seeds: config.run.seeds.clone(),
        horizon: config.run.horizon,
        files,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}
