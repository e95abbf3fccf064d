//! Channel states, their distribution, and the finite rate regions `R(j,h)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    restrict_rates, ActivationVector, CostParams, LinkValues, NetworkConfig, PacketMatrix,
    RateMatrix,
};

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("unknown channel state {state} (model has {count} states)")]
    UnknownState { state: usize, count: usize },
    #[error("channel model has no states")]
    NoStates,
    #[error("channel pmf has {got} entries for {expected} states")]
    PmfLength { got: usize, expected: usize },
    #[error("channel pmf entry {index} is {value}")]
    PmfEntry { index: usize, value: f64 },
    #[error("channel pmf sums to {0}, expected 1")]
    PmfSum(f64),
    #[error("state {state}: rate matrix shape {got:?}, expected {expected:?}")]
    Shape {
        state: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("state {state}: rate {rate} at ({bs}, {user}) exceeds R_bar = {r_max}")]
    RateTooLarge {
        state: usize,
        bs: usize,
        user: usize,
        rate: u64,
        r_max: u64,
    },
    #[error("state {state}: nonzero rate at ({bs}, {user}), which is not a link")]
    RateOffAdjacency { state: usize, bs: usize, user: usize },
    #[error("explicit enumeration lists {got} regions for {expected} states")]
    RegionCount { got: usize, expected: usize },
}

/// Feasibility rule that turns a channel state into its full region `R(𝟙,h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interference {
    /// Each BS serves at most one of its users per slot, at the state's link rate.
    OneUserPerBs,
    /// `R(𝟙,h)` listed per state.
    Explicit(Vec<Vec<RateMatrix>>),
}

/// One network channel state: achievable per-link rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub name: String,
    pub rates: RateMatrix,
}

/// Finite channel alphabet with its pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    states: Vec<ChannelState>,
    mu: Vec<f64>,
    interference: Interference,
}

impl ChannelModel {
    pub fn new(
        states: Vec<ChannelState>,
        mu: Vec<f64>,
        interference: Interference,
        network: &NetworkConfig,
    ) -> Result<Self, RegionError> {
        if states.is_empty() {
            return Err(RegionError::NoStates);
        }
        validate_pmf(&mu, states.len())?;
        for (index, state) in states.iter().enumerate() {
            check_rate_matrix(index, &state.rates, network)?;
        }
        if let Interference::Explicit(regions) = &interference {
            if regions.len() != states.len() {
                return Err(RegionError::RegionCount {
                    got: regions.len(),
                    expected: states.len(),
                });
            }
            for (index, region) in regions.iter().enumerate() {
                for member in region {
                    check_rate_matrix(index, member, network)?;
                }
            }
        }
        Ok(Self {
            states,
            mu,
            interference,
        })
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn interference(&self) -> &Interference {
        &self.interference
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub(crate) fn validate_pmf(mu: &[f64], expected: usize) -> Result<(), RegionError> {
    if mu.len() != expected {
        return Err(RegionError::PmfLength {
            got: mu.len(),
            expected,
        });
    }
    for (index, &value) in mu.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(RegionError::PmfEntry { index, value });
        }
    }
    let sum: f64 = mu.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(RegionError::PmfSum(sum));
    }
    Ok(())
}

fn check_rate_matrix(
    state: usize,
    rates: &RateMatrix,
    network: &NetworkConfig,
) -> Result<(), RegionError> {
    let expected = (network.stations(), network.users());
    if rates.shape() != expected {
        return Err(RegionError::Shape {
            state,
            got: rates.shape(),
            expected,
        });
    }
    for (bs, user, rate) in rates.nonzeros() {
        if rate > network.r_max() {
            return Err(RegionError::RateTooLarge {
                state,
                bs,
                user,
                rate,
                r_max: network.r_max(),
            });
        }
        if !network.is_link(bs, user) {
            return Err(RegionError::RateOffAdjacency { state, bs, user });
        }
    }
    Ok(())
}

/// A finite set of rate matrices. Member order is deterministic, the zero
/// matrix is always first, and there are no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRegion {
    members: Vec<RateMatrix>,
    // (flat index, rate) of the nonzero entries of each member
    sparse: Vec<Vec<(usize, u64)>>,
}

impl RateRegion {
    /// Builds a region from candidate members: zero is placed first and later
    /// duplicates are dropped.
    pub fn from_members(shape: (usize, usize), members: impl IntoIterator<Item = RateMatrix>) -> Self {
        let zero = PacketMatrix::zeros(shape.0, shape.1);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        seen.insert(zero.clone());
        out.push(zero);
        for member in members {
            debug_assert_eq!(member.shape(), shape);
            if seen.insert(member.clone()) {
                out.push(member);
            }
        }
        let cols = shape.1;
        let sparse = out
            .iter()
            .map(|r| r.nonzeros().map(|(m, u, x)| (m * cols + u, x)).collect())
            .collect();
        Self {
            members: out,
            sparse,
        }
    }

    pub fn members(&self) -> &[RateMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, index: usize) -> &RateMatrix {
        &self.members[index]
    }

    /// `q·r` for member `index`, with `q` given as its flat row-major slice.
    pub fn weight(&self, index: usize, queues: &[u64]) -> u128 {
        self.sparse[index]
            .iter()
            .map(|&(i, x)| queues[i] as u128 * x as u128)
            .sum()
    }

    pub fn contains(&self, rates: &RateMatrix) -> bool {
        self.members.iter().any(|r| r == rates)
    }

    pub fn is_subset_of(&self, other: &RateRegion) -> bool {
        self.members.iter().all(|r| other.contains(r))
    }
}

/// `R(𝟙,h)` for channel state `state`.
pub fn full_region(
    channel: &ChannelModel,
    network: &NetworkConfig,
    state: usize,
) -> Result<RateRegion, RegionError> {
    let Some(h) = channel.states.get(state) else {
        return Err(RegionError::UnknownState {
            state,
            count: channel.len(),
        });
    };
    let shape = (network.stations(), network.users());
    match &channel.interference {
        Interference::Explicit(regions) => Ok(RateRegion::from_members(
            shape,
            regions[state].iter().cloned(),
        )),
        Interference::OneUserPerBs => {
            // Mixed-radix walk: BS m picks option 0 (idle) or one of its users
            // with a positive rate. BS 0 varies fastest.
            let choices: Vec<Vec<(usize, u64)>> = (0..network.stations())
                .map(|m| {
                    network
                        .users_of(m)
                        .map(|u| (u, h.rates.get(m, u)))
                        .filter(|&(_, rate)| rate > 0)
                        .collect()
                })
                .collect();
            let total: usize = choices.iter().map(|c| c.len() + 1).product();
            let mut members = Vec::with_capacity(total);
            let mut digits = vec![0usize; choices.len()];
            for _ in 0..total {
                let mut r = PacketMatrix::zeros(shape.0, shape.1);
                for (m, &d) in digits.iter().enumerate() {
                    if d > 0 {
                        let (u, rate) = choices[m][d - 1];
                        r.set(m, u, rate);
                    }
                }
                members.push(r);
                for (m, d) in digits.iter_mut().enumerate() {
                    *d += 1;
                    if *d <= choices[m].len() {
                        break;
                    }
                    *d = 0;
                }
            }
            Ok(RateRegion::from_members(shape, members))
        }
    }
}

/// `R∘j` with duplicates removed, preserving first-occurrence order.
pub fn restricted_region(region: &RateRegion, activation: &ActivationVector) -> RateRegion {
    let shape = region.members[0].shape();
    RateRegion::from_members(
        shape,
        region.members.iter().map(|r| restrict_rates(r, activation)),
    )
}

/// Network plus channel model plus every `R(j,h)`, precomputed.
#[derive(Debug, Clone)]
pub struct Scenario {
    network: NetworkConfig,
    channel: ChannelModel,
    full: Vec<RateRegion>,
    // restricted[j][h]
    restricted: Vec<Vec<RateRegion>>,
}

impl Scenario {
    pub fn new(network: NetworkConfig, channel: ChannelModel) -> Result<Self, RegionError> {
        let full = (0..channel.len())
            .map(|h| full_region(&channel, &network, h))
            .collect::<Result<Vec<_>, _>>()?;
        let restricted = ActivationVector::enumerate(network.stations())
            .map(|j| full.iter().map(|region| restricted_region(region, &j)).collect())
            .collect();
        Ok(Self {
            network,
            channel,
            full,
            restricted,
        })
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.network
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn full_region(&self, state: usize) -> &RateRegion {
        &self.full[state]
    }

    /// `R(j,h)`.
    pub fn region(&self, activation: &ActivationVector, state: usize) -> &RateRegion {
        &self.restricted[activation.id()][state]
    }

    pub fn activation_count(&self) -> usize {
        self.restricted.len()
    }

    pub fn state_count(&self) -> usize {
        self.full.len()
    }

    /// Same topology and channel with a different arrival-rate matrix.
    pub fn with_lambda(&self, lambda: LinkValues) -> Result<Self, crate::model::ModelError> {
        Ok(Self {
            network: self.network.with_lambda(lambda)?,
            channel: self.channel.clone(),
            full: self.full.clone(),
            restricted: self.restricted.clone(),
        })
    }
}

/// The five-user, three-BS reference scenario with correlated fading.
///
/// Users (0-based) 0,1,4 attach to BS 0; 0..=3 to BS 1; 2,3,4 to BS 2. Each
/// link receives Bernoulli(0.1) traffic. The four equiprobable channel states
/// are "all bad" (rate 1 everywhere) and "BS k good" (rate 2 on BS k's links).
pub fn build_scenario_sec6() -> (NetworkConfig, ChannelModel) {
    let users = 5;
    let stations = 3;
    let adjacency: [&[usize]; 3] = [&[0, 1, 4], &[0, 1, 2, 3], &[2, 3, 4]];
    let links: Vec<(usize, usize)> = adjacency
        .iter()
        .enumerate()
        .flat_map(|(m, us)| us.iter().map(move |&u| (m, u)))
        .collect();
    let mut lambda = LinkValues::zeros(stations, users);
    for &(m, u) in &links {
        lambda.set(m, u, 0.1);
    }
    let network = NetworkConfig::new(users, stations, links.clone(), lambda, 1, 2, CostParams::new(1.0, 1.0))
        .expect("reference network is valid");

    let state = |good: Option<usize>| {
        let mut rates = PacketMatrix::zeros(stations, users);
        for &(m, u) in &links {
            rates.set(m, u, if good == Some(m) { 2 } else { 1 });
        }
        rates
    };
    let mut states = vec![ChannelState {
        name: "all_bad".into(),
        rates: state(None),
    }];
    for k in 0..stations {
        states.push(ChannelState {
            name: format!("bs{k}_good"),
            rates: state(Some(k)),
        });
    }
    let channel = ChannelModel::new(states, vec![0.25; 4], Interference::OneUserPerBs, &network)
        .expect("reference channel model is valid");
    (network, channel)
}
