//! Scenario files: JSON with `network`, `channel`, `arrivals`, `policy` and
//! `run` blocks. Loading validates every field and reports all problems at
//! once, each tagged with its path.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ActivationVector, CostParams, LinkValues, NetworkConfig, PacketMatrix, QueueMatrix};
use crate::policy::{Algorithm1, Algorithm1Params, AlwaysOn, Policy, PolicyError, StaticSplitMw, StaticSplitStatic};
use crate::region::{ChannelModel, ChannelState, Interference, Scenario};
use crate::sim::{ArrivalLaw, RegimeSchedule, RunOptions, DEFAULT_COST_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub network: RawNetwork,
    pub channel: RawChannel,
    pub arrivals: RawArrivals,
    pub policy: RawPolicy,
    pub run: RawRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub users: usize,
    pub stations: usize,
    /// `adjacency[m]` lists the users BS `m` can serve.
    pub adjacency: Vec<Vec<usize>>,
    pub costs: CostParams,
    pub a_max: u64,
    pub r_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawState {
    pub name: String,
    pub rates: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawInterference {
    OneUserPerBs,
    /// Per state, the members of `R(𝟙,h)`.
    Explicit(Vec<Vec<Vec<Vec<u64>>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    pub states: Vec<RawState>,
    pub mu: Vec<f64>,
    pub interference: RawInterference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRegime {
    pub start: u64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawArrivals {
    #[serde(default)]
    pub law: ArrivalLaw,
    /// `M×n` mean arrivals per slot; zero off the adjacency.
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub regime: Vec<RawRegime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPolicy {
    pub name: String,
    #[serde(default)]
    pub eps_p: f64,
    #[serde(default)]
    pub eps_s: f64,
    #[serde(default)]
    pub eps_g: f64,
    #[serde(default)]
    pub learning_floor: Option<f64>,
    #[serde(default)]
    pub min_switch_gap: Option<u64>,
    #[serde(default)]
    pub lambda_every_slot: bool,
}

fn default_q_bar() -> u64 {
    200
}

fn default_drift_window() -> usize {
    100
}

fn default_cost_window() -> usize {
    DEFAULT_COST_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_q_bar")]
    pub q_bar: u64,
    #[serde(default = "default_drift_window")]
    pub drift_window: usize,
    /// Backlog above which drift is averaged; defaults to `q_bar`.
    #[serde(default)]
    pub drift_threshold: Option<u64>,
    #[serde(default = "default_cost_window")]
    pub cost_window: usize,
    /// `Q(1)`: the same backlog on every link.
    #[serde(default)]
    pub initial_queue_per_link: u64,
    /// `J(0)` as a bit string, BS 0 first; all on by default.
    #[serde(default)]
    pub initial_activation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    AlwaysOn,
    StaticSplitMw,
    StaticSplitStatic,
    Algorithm1,
    Algorithm1Tracking,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::AlwaysOn,
        PolicyKind::StaticSplitMw,
        PolicyKind::StaticSplitStatic,
        PolicyKind::Algorithm1,
        PolicyKind::Algorithm1Tracking,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::AlwaysOn => "always_on",
            PolicyKind::StaticSplitMw => "static_split_mw",
            PolicyKind::StaticSplitStatic => "static_split_static",
            PolicyKind::Algorithm1 => "algorithm1",
            PolicyKind::Algorithm1Tracking => "algorithm1_tracking",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub eps_p: f64,
    pub eps_s: f64,
    pub eps_g: f64,
    pub learning_floor: Option<f64>,
    pub min_switch_gap: Option<u64>,
    pub lambda_every_slot: bool,
}

impl PolicySpec {
    pub fn build(&self, scenario: &Scenario) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self.kind {
            PolicyKind::AlwaysOn => Box::new(AlwaysOn),
            PolicyKind::StaticSplitMw => Box::new(
                StaticSplitMw::new(scenario, self.eps_s, self.eps_g)?.with_min_switch_gap(self.min_switch_gap),
            ),
            PolicyKind::StaticSplitStatic => Box::new(
                StaticSplitStatic::new(scenario, self.eps_s, self.eps_g)?.with_min_switch_gap(self.min_switch_gap),
            ),
            PolicyKind::Algorithm1 | PolicyKind::Algorithm1Tracking => {
                let params = Algorithm1Params {
                    eps_p: self.eps_p,
                    eps_s: self.eps_s,
                    eps_g: self.eps_g,
                    learning_floor: match self.kind {
                        PolicyKind::Algorithm1Tracking => self.learning_floor,
                        _ => None,
                    },
                    lambda_every_slot: self.lambda_every_slot,
                    min_switch_gap: self.min_switch_gap,
                };
                Box::new(Algorithm1::new(scenario, params)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub q_bar: u64,
    pub drift_window: usize,
    pub drift_threshold: u64,
    pub cost_window: usize,
    pub initial_queue_per_link: u64,
    pub initial_activation: Option<ActivationVector>,
}

/// A validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub raw: RawConfig,
    pub scenario: Scenario,
    pub policy: PolicySpec,
    pub run: RunSpec,
    pub regime: Option<RegimeSchedule>,
    pub arrival_law: ArrivalLaw,
}

impl ScenarioConfig {
    /// Options for one seed.
    pub fn run_options(&self, seed: u64) -> RunOptions {
        let network = self.scenario.network();
        let initial_queue = (self.run.initial_queue_per_link > 0).then(|| {
            let mut q: QueueMatrix = network.zero_matrix();
            for &(m, u) in network.links() {
                q.set(m, u, self.run.initial_queue_per_link);
            }
            q
        });
        RunOptions {
            horizon: self.run.horizon,
            seed,
            regime: self.regime.clone(),
            initial_activation: self.run.initial_activation,
            initial_queue,
            arrival_law: self.arrival_law,
            cost_window: self.run.cost_window,
        }
    }
}

/// A problem with one field of a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{} validation error(s):\n{}", .0.len(), join_errors(.0))]
    Invalid(Vec<FieldError>),
}

fn join_errors(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            ConfigError::Invalid(e) => e,
            _ => &[],
        }
    }
}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    validate(raw)
}

fn check_matrix_shape<T>(errors: &mut Errors, path: &str, m: &[Vec<T>], rows: usize, cols: usize) -> bool {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        errors.push(path, format!("expected a {rows}x{cols} matrix"));
        return false;
    }
    true
}

fn check_rates(errors: &mut Errors, path: &str, rates: &[Vec<u64>], net: &RawNetwork, adjacent: &[Vec<bool>]) -> bool {
    if !check_matrix_shape(errors, path, rates, net.stations, net.users) {
        return false;
    }
    let before = errors.len();
    for (m, row) in rates.iter().enumerate() {
        for (u, &r) in row.iter().enumerate() {
            if r > net.r_max {
                errors.push(format!("{path}[{m}][{u}]"), format!("rate {r} exceeds r_max = {}", net.r_max));
            } else if r > 0 && !adjacent[m][u] {
                errors.push(format!("{path}[{m}][{u}]"), "rate on a pair that is not a link");
            }
        }
    }
    errors.len() == before
}

/// Checks every field, then builds the domain objects.
pub fn validate(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut errors = Errors::default();
    let net = &raw.network;

    let mut network_ok = true;
    if net.users == 0 {
        errors.push("network.users", "must be at least 1");
        network_ok = false;
    }
    if net.stations == 0 || net.stations > crate::model::MAX_BASE_STATIONS {
        errors.push(
            "network.stations",
            format!("must be between 1 and {}", crate::model::MAX_BASE_STATIONS),
        );
        network_ok = false;
    }
    if net.adjacency.len() != net.stations {
        errors.push(
            "network.adjacency",
            format!("lists {} stations, expected {}", net.adjacency.len(), net.stations),
        );
        network_ok = false;
    }
    let mut adjacent = vec![vec![false; net.users]; net.stations];
    if network_ok {
        for (m, users) in net.adjacency.iter().enumerate() {
            for (i, &u) in users.iter().enumerate() {
                let path = format!("network.adjacency[{m}][{i}]");
                if u >= net.users {
                    errors.push(path, format!("user {u} out of range"));
                    network_ok = false;
                } else if adjacent[m][u] {
                    errors.push(path, format!("duplicate user {u}"));
                    network_ok = false;
                } else {
                    adjacent[m][u] = true;
                }
            }
        }
    }
    for (name, value) in [
        ("c0", net.costs.c0),
        ("c1", net.costs.c1),
        ("c0_prime", net.costs.c0_prime),
        ("c1_prime", net.costs.c1_prime),
    ] {
        if !(value.is_finite() && value >= 0.0) {
            errors.push(format!("network.costs.{name}"), "must be finite and nonnegative");
            network_ok = false;
        }
    }
    if net.a_max == 0 {
        errors.push("network.a_max", "must be at least 1");
        network_ok = false;
    }

    let ch = &raw.channel;
    let mut channel_ok = network_ok;
    if ch.states.is_empty() {
        errors.push("channel.states", "at least one channel state is required");
        channel_ok = false;
    }
    if ch.mu.len() != ch.states.len() {
        errors.push(
            "channel.mu",
            format!("has {} entries for {} states", ch.mu.len(), ch.states.len()),
        );
        channel_ok = false;
    } else if ch.mu.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        errors.push("channel.mu", "entries must be nonnegative");
        channel_ok = false;
    } else {
        let sum: f64 = ch.mu.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            errors.push("channel.mu", format!("sums to {sum}, expected 1"));
            channel_ok = false;
        }
    }
    if network_ok {
        for (h, state) in ch.states.iter().enumerate() {
            channel_ok &= check_rates(&mut errors, &format!("channel.states[{h}].rates"), &state.rates, net, &adjacent);
        }
        if let RawInterference::Explicit(regions) = &ch.interference {
            if regions.len() != ch.states.len() {
                errors.push(
                    "channel.interference.explicit",
                    format!("lists {} regions for {} states", regions.len(), ch.states.len()),
                );
                channel_ok = false;
            }
            for (h, region) in regions.iter().enumerate() {
                for (k, member) in region.iter().enumerate() {
                    channel_ok &= check_rates(
                        &mut errors,
                        &format!("channel.interference.explicit[{h}][{k}]"),
                        member,
                        net,
                        &adjacent,
                    );
                }
            }
        }
    }

    let arr = &raw.arrivals;
    let mut arrivals_ok = network_ok;
    if network_ok && check_matrix_shape(&mut errors, "arrivals.rates", &arr.rates, net.stations, net.users) {
        let bound = match arr.law {
            ArrivalLaw::Bernoulli => 1.0f64.min(net.a_max as f64),
            ArrivalLaw::Binomial => net.a_max as f64,
        };
        for (m, row) in arr.rates.iter().enumerate() {
            for (u, &l) in row.iter().enumerate() {
                let path = format!("arrivals.rates[{m}][{u}]");
                if !(l.is_finite() && (0.0..=bound).contains(&l)) {
                    errors.push(path, format!("mean {l} outside [0, {bound}]"));
                    arrivals_ok = false;
                } else if l > 0.0 && !adjacent[m][u] {
                    errors.push(path, "traffic on a pair that is not a link");
                    arrivals_ok = false;
                }
            }
        }
    } else {
        arrivals_ok = false;
    }
    let regime = if arr.regime.is_empty() {
        None
    } else {
        match RegimeSchedule::new(arr.regime.iter().map(|r| (r.start, r.scale)).collect()) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push("arrivals.regime", e.to_string());
                None
            }
        }
    };

    let pol = &raw.policy;
    let kind = PolicyKind::parse(&pol.name);
    if kind.is_none() {
        let names: Vec<&str> = PolicyKind::ALL.iter().map(PolicyKind::as_str).collect();
        errors.push("policy.name", format!("unknown policy {:?}; expected one of {}", pol.name, names.join(", ")));
    }
    if !(0.0..=1.0).contains(&pol.eps_s) {
        errors.push("policy.eps_s", format!("{} outside [0, 1]", pol.eps_s));
    }
    if !(pol.eps_p.is_finite() && pol.eps_p >= 0.0) {
        errors.push("policy.eps_p", "must be nonnegative");
    }
    if !(pol.eps_g.is_finite() && pol.eps_g >= 0.0) {
        errors.push("policy.eps_g", "must be nonnegative");
    }
    match (kind, pol.learning_floor) {
        (Some(PolicyKind::Algorithm1Tracking), None) => {
            errors.push("policy.learning_floor", "required by algorithm1_tracking")
        }
        (_, Some(f)) if !(f > 0.0 && f < 1.0) => {
            errors.push("policy.learning_floor", format!("{f} outside (0, 1)"))
        }
        _ => {}
    }
    if pol.min_switch_gap == Some(0) {
        errors.push("policy.min_switch_gap", "must be at least 1 when given");
    }

    let run = &raw.run;
    if run.horizon == 0 {
        errors.push("run.horizon", "must be at least 1");
    }
    if run.seeds.is_empty() {
        errors.push("run.seeds", "at least one seed is required");
    }
    if run.drift_window == 0 {
        errors.push("run.drift_window", "must be at least 1");
    }
    if run.cost_window == 0 {
        errors.push("run.cost_window", "must be at least 1");
    }
    let initial_activation = match &run.initial_activation {
        None => None,
        Some(bits) if bits.len() == net.stations && bits.chars().all(|c| c == '0' || c == '1') => {
            Some(ActivationVector::from_bits(&bits.chars().map(|c| c == '1').collect::<Vec<_>>()))
        }
        Some(bits) => {
            errors.push(
                "run.initial_activation",
                format!("{bits:?} is not a bit string of length {}", net.stations),
            );
            None
        }
    };

    if !(network_ok && channel_ok && arrivals_ok) || errors.len() > 0 {
        return Err(ConfigError::Invalid(errors.0));
    }

    let links: Vec<(usize, usize)> = net
        .adjacency
        .iter()
        .enumerate()
        .flat_map(|(m, us)| us.iter().map(move |&u| (m, u)))
        .collect();
    let lambda = LinkValues::from_rows(&arr.rates);
    let network = NetworkConfig::new(net.users, net.stations, links, lambda, net.a_max, net.r_max, net.costs)
        .map_err(|e| ConfigError::Invalid(vec![field("network", e)]))?;
    let states = ch
        .states
        .iter()
        .map(|s| ChannelState {
            name: s.name.clone(),
            rates: PacketMatrix::from_rows(&s.rates),
        })
        .collect();
    let interference = match &ch.interference {
        RawInterference::OneUserPerBs => Interference::OneUserPerBs,
        RawInterference::Explicit(regions) => Interference::Explicit(
            regions
                .iter()
                .map(|r| r.iter().map(|m| PacketMatrix::from_rows(m)).collect())
                .collect(),
        ),
    };
    let channel = ChannelModel::new(states, ch.mu.clone(), interference, &network)
        .map_err(|e| ConfigError::Invalid(vec![field("channel", e)]))?;
    let scenario = Scenario::new(network, channel).map_err(|e| ConfigError::Invalid(vec![field("channel", e)]))?;

    let policy = PolicySpec {
        kind: kind.expect("checked above"),
        eps_p: pol.eps_p,
        eps_s: pol.eps_s,
        eps_g: pol.eps_g,
        learning_floor: pol.learning_floor,
        min_switch_gap: pol.min_switch_gap,
        lambda_every_slot: pol.lambda_every_slot,
    };
    let run_spec = RunSpec {
        horizon: run.horizon,
        seeds: run.seeds.clone(),
        q_bar: run.q_bar,
        drift_window: run.drift_window,
        drift_threshold: run.drift_threshold.unwrap_or(run.q_bar),
        cost_window: run.cost_window,
        initial_queue_per_link: run.initial_queue_per_link,
        initial_activation,
    };
    Ok(ScenarioConfig {
        arrival_law: arr.law,
        raw,
        scenario,
        policy,
        run: run_spec,
        regime,
    })
}

fn field(path: &str, e: impl fmt::Display) -> FieldError {
    FieldError {
        path: path.into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::build_scenario_sec6;

    const SEC6: &str = include_str!("../../scenarios/sec6.json");

    fn paths(err: ConfigError) -> Vec<String> {
        err.field_errors().iter().map(|e| e.path.clone()).collect()
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> Result<ScenarioConfig, ConfigError> {
        let mut v: serde_json::Value = serde_json::from_str(SEC6).unwrap();
        f(&mut v);
        parse_scenario(&v.to_string())
    }

    #[test]
    fn bundled_scenario_matches_builder() {
        let cfg = parse_scenario(SEC6).unwrap();
        let (network, channel) = build_scenario_sec6();
        assert_eq!(cfg.scenario.network(), &network);
        assert_eq!(cfg.scenario.channel(), &channel);
    }

    #[test]
    fn mu_must_sum_to_one() {
        let err = edit(|v| v["channel"]["mu"] = serde_json::json!([0.5, 0.25, 0.25, 0.25])).unwrap_err();
        assert_eq!(paths(err), vec!["channel.mu"]);
    }

    #[test]
    fn eps_s_range() {
        let err = edit(|v| v["policy"]["eps_s"] = serde_json::json!(1.5)).unwrap_err();
        assert_eq!(paths(err), vec!["policy.eps_s"]);
    }

    #[test]
    fn all_errors_are_reported() {
        let err = edit(|v| {
            v["policy"]["eps_s"] = serde_json::json!(-0.1);
            v["run"]["seeds"] = serde_json::json!([]);
            v["channel"]["states"][1]["rates"][0][2] = serde_json::json!(1);
            v["arrivals"]["rates"][0][0] = serde_json::json!(1.5);
        })
        .unwrap_err();
        let p = paths(err);
        for expected in ["policy.eps_s", "run.seeds", "channel.states[1].rates[0][2]", "arrivals.rates[0][0]"] {
            assert!(p.iter().any(|x| x == expected), "missing {expected} in {p:?}");
        }
    }

    #[test]
    fn unknown_policy_and_missing_floor() {
        let err = edit(|v| v["policy"]["name"] = serde_json::json!("greedy")).unwrap_err();
        assert_eq!(paths(err), vec!["policy.name"]);
        let err = edit(|v| v["policy"]["name"] = serde_json::json!("algorithm1_tracking")).unwrap_err();
        assert_eq!(paths(err), vec!["policy.learning_floor"]);
    }

    #[test]
    fn regime_order() {
        let err = edit(|v| v["arrivals"]["regime"] = serde_json::json!([{"start": 10, "scale": 0.5}, {"start": 5, "scale": 1.0}]))
            .unwrap_err();
        assert_eq!(paths(err), vec!["arrivals.regime"]);
    }

    #[test]
    fn parse_errors_are_not_field_errors() {
        assert!(matches!(parse_scenario("{"), Err(ConfigError::Parse(_))));
        assert!(matches!(
            edit(|v| v["run"]["unknown"] = serde_json::json!(1)),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn run_options_from_config() {
        let cfg = edit(|v| {
            v["run"]["initial_queue_per_link"] = serde_json::json!(4);
            v["run"]["initial_activation"] = serde_json::json!("010");
        })
        .unwrap();
        let opts = cfg.run_options(9);
        assert_eq!(opts.seed, 9);
        assert_eq!(opts.initial_queue.unwrap().total(), 40);
        assert_eq!(opts.initial_activation.unwrap().id(), 2);
    }
}
