//! Network domain types: topology, activation state, packet matrices, and the
//! per-slot cost and queue laws.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported base-station count. Activation states are enumerated
/// explicitly, so `2^M` must stay small.
pub const MAX_BASE_STATIONS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("network must have at least one user and one base station (got n={users}, M={stations})")]
    EmptyNetwork { users: usize, stations: usize },
    #[error("at most {MAX_BASE_STATIONS} base stations are supported (got {0})")]
    TooManyStations(usize),
    #[error("link ({bs}, {user}) is outside the {stations}x{users} network")]
    LinkOutOfRange {
        bs: usize,
        user: usize,
        stations: usize,
        users: usize,
    },
    #[error("duplicate link ({bs}, {user})")]
    DuplicateLink { bs: usize, user: usize },
    #[error("arrival rate at ({bs}, {user}) is {rate}, must lie in [0, {a_max}]")]
    RateOutOfRange {
        bs: usize,
        user: usize,
        rate: f64,
        a_max: u64,
    },
    #[error("arrival rate at ({bs}, {user}) is nonzero but the pair is not a link")]
    RateOffAdjacency { bs: usize, user: usize },
    #[error("cost parameter {name} is {value}, must be finite and nonnegative")]
    BadCost { name: &'static str, value: f64 },
    #[error("matrix shape {got:?} does not match network shape {expected:?}")]
    Shape {
        got: (usize, usize),
        expected: (usize, usize),
    },
}

/// Per-BS cost parameters. `c0_prime` (OFF to ON) and `c1_prime` (sleep) are
/// extensions that default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c0: f64,
    pub c1: f64,
    #[serde(default)]
    pub c0_prime: f64,
    #[serde(default)]
    pub c1_prime: f64,
}

impl CostParams {
    pub fn new(c0: f64, c1: f64) -> Self {
        Self {
            c0,
            c1,
            c0_prime: 0.0,
            c1_prime: 0.0,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("C0", self.c0),
            ("C1", self.c1),
            ("C0_prime", self.c0_prime),
            ("C1_prime", self.c1_prime),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::BadCost { name, value });
            }
        }
        Ok(())
    }
}

/// Binary on/off vector over the `M` base stations, stored as a bitmask.
/// Bit `m` is BS `m`; the mask doubles as the state id used to index `{0,1}^M`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationVector {
    mask: u32,
    len: u8,
}

impl ActivationVector {
    pub fn all_on(len: usize) -> Self {
        assert!(len <= MAX_BASE_STATIONS);
        Self {
            mask: ((1u64 << len) - 1) as u32,
            len: len as u8,
        }
    }

    pub fn all_off(len: usize) -> Self {
        assert!(len <= MAX_BASE_STATIONS);
        Self {
            mask: 0,
            len: len as u8,
        }
    }

    /// Builds the vector whose state id is `id`.
    pub fn from_id(id: usize, len: usize) -> Self {
        assert!(len <= MAX_BASE_STATIONS && id < (1usize << len));
        Self {
            mask: id as u32,
            len: len as u8,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= MAX_BASE_STATIONS);
        let mask = bits
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .fold(0u32, |acc, (m, _)| acc | (1 << m));
        Self {
            mask,
            len: bits.len() as u8,
        }
    }

    /// Number of activation states `|{0,1}^M|`.
    pub fn state_count(len: usize) -> usize {
        1 << len
    }

    /// Iterates every activation state in id order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = ActivationVector> {
        (0..Self::state_count(len)).map(move |id| Self::from_id(id, len))
    }

    pub fn id(&self) -> usize {
        self.mask as usize
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_on(&self, m: usize) -> bool {
        self.mask >> m & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|m| self.is_on(m)).collect()
    }

    /// `‖j‖₁`.
    pub fn count_on(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// `‖(self − other)⁺‖₁`: stations on here and off in `other`.
    pub fn turned_off_into(&self, other: &ActivationVector) -> usize {
        (self.mask & !other.mask).count_ones() as usize
    }

    /// Entrywise `self ≤ other`.
    pub fn is_dominated_by(&self, other: &ActivationVector) -> bool {
        self.mask & !other.mask == 0
    }
}

impl fmt::Debug for ActivationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J[{self}]")
    }
}

impl fmt::Display for ActivationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in 0..self.len() {
            f.write_str(if self.is_on(m) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Dense `M×n` matrix of packet counts, row `m` is base station `m`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

/// Queue lengths `Q(t)`.
pub type QueueMatrix = PacketMatrix;
/// Allocated service rates `S(t)` and members of rate regions.
pub type RateMatrix = PacketMatrix;
/// Per-link arrivals `A(t)`.
pub type ArrivalMatrix = PacketMatrix;

impl PacketMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[u64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.as_ref().len(), cols, "ragged matrix rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, m: usize, u: usize) -> u64 {
        self.data[m * self.cols + u]
    }

    pub fn set(&mut self, m: usize, u: usize, value: u64) {
        self.data[m * self.cols + u] = value;
    }

    pub fn row(&self, m: usize) -> &[u64] {
        &self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    /// `Σ q²`, the quadratic Lyapunov function.
    pub fn sum_of_squares(&self) -> u128 {
        self.data.iter().map(|&x| (x as u128) * (x as u128)).sum()
    }

    /// Frobenius inner product `Σ self·other`.
    pub fn dot(&self, other: &PacketMatrix) -> u128 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as u128 * b as u128)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn max_entry(&self) -> u64 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Entrywise `self ≤ other`.
    pub fn le(&self, other: &PacketMatrix) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }

    /// Indices `(m, u)` of nonzero entries with their values.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .map(move |(i, &x)| (i / self.cols, i % self.cols, x))
    }
}

impl fmt::Debug for PacketMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[u64]> = (0..self.rows).map(|m| self.row(m)).collect();
        write!(f, "{rows:?}")
    }
}

/// Dense `M×n` matrix of real per-link values (arrival means, estimates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkValues {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LinkValues {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.as_ref().len(), cols, "ragged matrix rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, m: usize, u: usize) -> f64 {
        self.data[m * self.cols + u]
    }

    pub fn set(&mut self, m: usize, u: usize, value: f64) {
        self.data[m * self.cols + u] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `‖self − other‖₁` over all entries.
    pub fn l1_distance(&self, other: &LinkValues) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// One scenario's topology, traffic and cost parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    users: usize,
    stations: usize,
    links: Vec<(usize, usize)>,
    lambda: LinkValues,
    a_max: u64,
    r_max: u64,
    costs: CostParams,
}

impl NetworkConfig {
    /// Validates and builds a network. `links` are `(bs, user)` pairs; they are
    /// stored sorted so per-link iteration order is canonical.
    pub fn new(
        users: usize,
        stations: usize,
        links: Vec<(usize, usize)>,
        lambda: LinkValues,
        a_max: u64,
        r_max: u64,
        costs: CostParams,
    ) -> Result<Self, ModelError> {
        if users == 0 || stations == 0 {
            return Err(ModelError::EmptyNetwork { users, stations });
        }
        if stations > MAX_BASE_STATIONS {
            return Err(ModelError::TooManyStations(stations));
        }
        if lambda.shape() != (stations, users) {
            return Err(ModelError::Shape {
                got: lambda.shape(),
                expected: (stations, users),
            });
        }
        costs.validate()?;
        let mut links = links;
        links.sort_unstable();
        for pair in links.windows(2) {
            if pair[0] == pair[1] {
                return Err(ModelError::DuplicateLink {
                    bs: pair[0].0,
                    user: pair[0].1,
                });
            }
        }
        let mut adjacent = vec![false; stations * users];
        for &(bs, user) in &links {
            if bs >= stations || user >= users {
                return Err(ModelError::LinkOutOfRange {
                    bs,
                    user,
                    stations,
                    users,
                });
            }
            adjacent[bs * users + user] = true;
        }
        for bs in 0..stations {
            for user in 0..users {
                let rate = lambda.get(bs, user);
                if !rate.is_finite() || rate < 0.0 || rate > a_max as f64 {
                    return Err(ModelError::RateOutOfRange {
                        bs,
                        user,
                        rate,
                        a_max,
                    });
                }
                if rate != 0.0 && !adjacent[bs * users + user] {
                    return Err(ModelError::RateOffAdjacency { bs, user });
                }
            }
        }
        Ok(Self {
            users,
            stations,
            links,
            lambda,
            a_max,
            r_max,
            costs,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    /// Sorted `(bs, user)` links.
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn is_link(&self, bs: usize, user: usize) -> bool {
        self.links.binary_search(&(bs, user)).is_ok()
    }

    /// Users adjacent to `bs`, ascending.
    pub fn users_of(&self, bs: usize) -> impl Iterator<Item = usize> + '_ {
        self.links
            .iter()
            .filter(move |(m, _)| *m == bs)
            .map(|(_, u)| *u)
    }

    pub fn lambda(&self) -> &LinkValues {
        &self.lambda
    }

    pub fn a_max(&self) -> u64 {
        self.a_max
    }

    pub fn r_max(&self) -> u64 {
        self.r_max
    }

    pub fn costs(&self) -> &CostParams {
        &self.costs
    }

    /// Copy of this network with a different arrival-rate matrix.
    pub fn with_lambda(&self, lambda: LinkValues) -> Result<Self, ModelError> {
        Self::new(
            self.users,
            self.stations,
            self.links.clone(),
            lambda,
            self.a_max,
            self.r_max,
            self.costs,
        )
    }

    /// Copy of this network with different cost parameters.
    pub fn with_costs(&self, costs: CostParams) -> Result<Self, ModelError> {
        Self::new(
            self.users,
            self.stations,
            self.links.clone(),
            self.lambda.clone(),
            self.a_max,
            self.r_max,
            costs,
        )
    }

    pub fn zero_matrix(&self) -> PacketMatrix {
        PacketMatrix::zeros(self.stations, self.users)
    }
}

/// Slot cost for moving from `prev` to `cur`, including the optional
/// wake-up and sleep-state terms.
pub fn network_cost(prev: &ActivationVector, cur: &ActivationVector, costs: &CostParams) -> f64 {
    debug_assert_eq!(prev.len(), cur.len());
    let on = cur.count_on() as f64;
    costs.c0 * prev.turned_off_into(cur) as f64
        + costs.c1 * on
        + costs.c0_prime * cur.turned_off_into(prev) as f64
        + costs.c1_prime * (cur.len() as f64 - on)
}

/// `r∘j`: zero every row of a BS that is off.
pub fn restrict_rates(rates: &RateMatrix, activation: &ActivationVector) -> RateMatrix {
    debug_assert_eq!(rates.rows, activation.len());
    let mut out = rates.clone();
    for m in 0..out.rows {
        if !activation.is_on(m) {
            out.data[m * out.cols..(m + 1) * out.cols].fill(0);
        }
    }
    out
}

/// One slot of queue dynamics. Departures are `min(s, q)` entrywise and
/// arrivals join after service, so they cannot be served in the same slot.
pub fn step_queues(
    queues: &QueueMatrix,
    arrivals: &ArrivalMatrix,
    service: &RateMatrix,
) -> (QueueMatrix, RateMatrix) {
    debug_assert_eq!(queues.shape(), arrivals.shape());
    debug_assert_eq!(queues.shape(), service.shape());
    let mut next = queues.clone();
    let mut departures = queues.clone();
    for i in 0..queues.data.len() {
        let d = queues.data[i].min(service.data[i]);
        departures.data[i] = d;
        next.data[i] = queues.data[i] - d + arrivals.data[i];
    }
    (next, departures)
}
