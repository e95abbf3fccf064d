//! Slot-by-slot simulation loop, traces and stability diagnostics.
//!
//! Slot `t` runs: draw `A(t)`, draw `h(t) ~ μ`, ask the policy for
//! `(J(t), S(t))`, charge `C(t)` for `J(t−1) → J(t)`, then
//! `Q(t+1) = Q(t) − min(S(t), Q(t)) + A(t)`.
//!
//! One seed drives three independent ChaCha8 streams of the same key:
//! stream 0 for arrivals, 1 for the channel, 2 for the policy.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{network_cost, ActivationVector, ArrivalMatrix, LinkValues, QueueMatrix};
use crate::policy::{Policy, PolicyError, SimRng, SlotContext};
use crate::region::Scenario;

pub const ARRIVAL_STREAM: u64 = 0;
pub const CHANNEL_STREAM: u64 = 1;
pub const POLICY_STREAM: u64 = 2;

pub const DEFAULT_COST_WINDOW: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("cost window must be at least 1")]
    ZeroWindow,
    #[error("regime starts must be strictly increasing and at least 1")]
    RegimeOrder,
    #[error("regime scale {0} must be positive and finite")]
    RegimeScale(f64),
    #[error("arrival mean {mean} on link ({bs}, {user}) is outside [0, {bound}]")]
    ArrivalMean { bs: usize, user: usize, mean: f64, bound: u64 },
    #[error("initial queue has shape {got:?}, expected {expected:?}")]
    QueueShape { expected: (usize, usize), got: (usize, usize) },
    #[error("initial activation has {got} entries, expected {expected}")]
    ActivationLength { expected: usize, got: usize },
    #[error("policy chose a rate matrix outside R(J(t), h(t)) at slot {0}")]
    InfeasibleRates(u64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Per-link arrival law with mean `λ_{m,u}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalLaw {
    /// `Bernoulli(λ)`; needs `λ ≤ 1`.
    #[default]
    Bernoulli,
    /// `Binomial(Ā, λ/Ā)`, bounded by `Ā`.
    Binomial,
}

/// Piecewise-constant multiplier on `λ`: `scale` applies from `start`
/// (inclusive) until the next entry. Before the first entry the scale is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    segments: Vec<(u64, f64)>,
}

impl RegimeSchedule {
    pub fn new(segments: Vec<(u64, f64)>) -> Result<Self, SimError> {
        let mut last = 0;
        for &(start, scale) in &segments {
            if start <= last {
                return Err(SimError::RegimeOrder);
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(SimError::RegimeScale(scale));
            }
            last = start;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(u64, f64)] {
        &self.segments
    }

    pub fn scale_at(&self, t: u64) -> f64 {
        self.segments
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map_or(1.0, |&(_, s)| s)
    }

    fn scales(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(1.0).chain(self.segments.iter().map(|&(_, s)| s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub horizon: u64,
    pub seed: u64,
    pub regime: Option<RegimeSchedule>,
    /// `J(0)`; all on when `None`.
    pub initial_activation: Option<ActivationVector>,
    /// `Q(1)`; empty when `None`.
    pub initial_queue: Option<QueueMatrix>,
    pub arrival_law: ArrivalLaw,
    pub cost_window: usize,
}

impl RunOptions {
    pub fn new(horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            regime: None,
            initial_activation: None,
            initial_queue: None,
            arrival_law: ArrivalLaw::Bernoulli,
            cost_window: DEFAULT_COST_WINDOW,
        }
    }

    pub fn with_regime(mut self, regime: RegimeSchedule) -> Self {
        self.regime = Some(regime);
        self
    }

    pub fn with_initial_queue(mut self, q: QueueMatrix) -> Self {
        self.initial_queue = Some(q);
        self
    }

    pub fn with_initial_activation(mut self, j: ActivationVector) -> Self {
        self.initial_activation = Some(j);
        self
    }
}

/// One simulated slot. Queue fields describe `Q(t+1)`, the backlog left at
/// the end of the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    pub activation: u32,
    pub explored: bool,
    pub resampled: bool,
    pub total_queue: u64,
    pub queue_energy: u128,
    pub cost: f64,
    pub departures: u64,
    pub arrivals: u64,
    pub mu_hat_err: Option<f64>,
    pub lambda_hat_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    records: Vec<SlotRecord>,
    initial_activation: ActivationVector,
    initial_total_queue: u64,
    initial_energy: u128,
    final_queues: QueueMatrix,
    cost_window: usize,
    stations: usize,
}

impl SimTrace {
    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn horizon(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn initial_activation(&self) -> ActivationVector {
        self.initial_activation
    }

    pub fn final_queues(&self) -> &QueueMatrix {
        &self.final_queues
    }

    pub fn cost_window(&self) -> usize {
        self.cost_window
    }

    pub fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    /// `(1/T) Σ_{t ≤ T} C(t)` over the whole trace.
    pub fn average_cost(&self) -> f64 {
        self.total_cost() / self.records.len() as f64
    }

    /// Running average cost after each slot.
    pub fn running_average_cost(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                sum += r.cost;
                sum / (i + 1) as f64
            })
            .collect()
    }

    /// Mean cost over the trailing `cost_window` slots (fewer at the start).
    pub fn windowed_cost(&self) -> Vec<f64> {
        let w = self.cost_window;
        let mut sum = 0.0;
        let mut out = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            sum += r.cost;
            if i >= w {
                sum -= self.records[i - w].cost;
            }
            out.push(sum / (i + 1).min(w) as f64);
        }
        out
    }

    /// Mean cost over slots `from..=to` (1-based, inclusive).
    pub fn mean_cost_between(&self, from: u64, to: u64) -> f64 {
        let slice = self.slot_range(from, to);
        slice.iter().map(|r| r.cost).sum::<f64>() / slice.len() as f64
    }

    pub fn mean_total_queue_between(&self, from: u64, to: u64) -> f64 {
        let slice = self.slot_range(from, to);
        slice.iter().map(|r| r.total_queue as f64).sum::<f64>() / slice.len() as f64
    }

    fn slot_range(&self, from: u64, to: u64) -> &[SlotRecord] {
        let from = from.max(1) as usize - 1;
        let to = (to as usize).min(self.records.len());
        &self.records[from..to.max(from)]
    }

    /// Fraction of slots spent in each activation state, indexed by id.
    pub fn occupation_frequencies(&self) -> Vec<f64> {
        let mut freq = vec![0.0; ActivationVector::state_count(self.stations)];
        for r in &self.records {
            freq[r.activation as usize] += 1.0;
        }
        let n = self.records.len() as f64;
        freq.iter_mut().for_each(|f| *f /= n);
        freq
    }

    /// Slots whose activation differs from the previous slot's.
    pub fn switch_count(&self) -> u64 {
        let mut prev = self.initial_activation.id() as u32;
        let mut n = 0;
        for r in &self.records {
            if r.activation != prev {
                n += 1;
            }
            prev = r.activation;
        }
        n
    }

    pub fn resample_count(&self) -> u64 {
        self.records.iter().filter(|r| r.resampled).count() as u64
    }

    pub fn explore_count(&self) -> u64 {
        self.records.iter().filter(|r| r.explored).count() as u64
    }

    pub fn final_mu_hat_err(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.mu_hat_err)
    }

    pub fn final_lambda_hat_err(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.lambda_hat_err)
    }

    /// `V(Q)` with the initial backlog first, then one value per slot.
    pub fn energy_series(&self) -> Vec<u128> {
        std::iter::once(self.initial_energy)
            .chain(self.records.iter().map(|r| r.queue_energy))
            .collect()
    }

    /// Total backlog with the initial backlog first, then one value per slot.
    pub fn total_queue_series(&self) -> Vec<u64> {
        std::iter::once(self.initial_total_queue)
            .chain(self.records.iter().map(|r| r.total_queue))
            .collect()
    }
}

fn draw_arrivals(
    scenario: &Scenario,
    lambda: &LinkValues,
    law: ArrivalLaw,
    rng: &mut SimRng,
    out: &mut ArrivalMatrix,
) {
    let network = scenario.network();
    let a_max = network.a_max();
    for &(m, u) in network.links() {
        let mean = lambda.get(m, u);
        let a = match law {
            ArrivalLaw::Bernoulli => u64::from(rng.random_bool(mean)),
            ArrivalLaw::Binomial => Binomial::new(a_max, mean / a_max as f64)
                .expect("validated mean")
                .sample(rng),
        };
        out.set(m, u, a);
    }
}

fn check_rates(scenario: &Scenario, options: &RunOptions) -> Result<(), SimError> {
    let network = scenario.network();
    let bound = match options.arrival_law {
        ArrivalLaw::Bernoulli => 1,
        ArrivalLaw::Binomial => network.a_max(),
    };
    let bound = bound.min(network.a_max());
    let scales: Vec<f64> = match &options.regime {
        Some(r) => r.scales().collect(),
        None => vec![1.0],
    };
    for scale in scales {
        for &(m, u) in network.links() {
            let mean = network.lambda().get(m, u) * scale;
            if !(0.0..=bound as f64).contains(&mean) {
                return Err(SimError::ArrivalMean {
                    bs: m,
                    user: u,
                    mean,
                    bound,
                });
            }
        }
    }
    Ok(())
}

fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run<P: Policy + ?Sized>(
    scenario: &Scenario,
    policy: &mut P,
    options: &RunOptions,
) -> Result<SimTrace, SimError> {
    if options.horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    if options.cost_window == 0 {
        return Err(SimError::ZeroWindow);
    }
    check_rates(scenario, options)?;
    let network = scenario.network();
    let shape = (network.stations(), network.users());
    let initial = options
        .initial_activation
        .unwrap_or_else(|| ActivationVector::all_on(network.stations()));
    if initial.len() != network.stations() {
        return Err(SimError::ActivationLength {
            expected: network.stations(),
            got: initial.len(),
        });
    }
    let mut queues = match &options.initial_queue {
        Some(q) if q.shape() != shape => {
            return Err(SimError::QueueShape {
                expected: shape,
                got: q.shape(),
            })
        }
        Some(q) => q.clone(),
        None => network.zero_matrix(),
    };

    let mut arrival_rng = stream(options.seed, ARRIVAL_STREAM);
    let mut channel_rng = stream(options.seed, CHANNEL_STREAM);
    let mut policy_rng = stream(options.seed, POLICY_STREAM);
    policy.start(scenario, initial, &mut policy_rng);

    let mu = scenario.channel().mu();
    let channel_law = WeightedIndex::new(mu).expect("validated pmf");
    let base_lambda = network.lambda();
    let mut lambda = base_lambda.clone();
    let mut current_scale = 1.0;
    let mut arrivals = network.zero_matrix();
    let mut prev = initial;
    let mut records = Vec::with_capacity(options.horizon as usize);
    let initial_total_queue = queues.total();
    let initial_energy = queues.sum_of_squares();

    for t in 1..=options.horizon {
        let scale = options.regime.as_ref().map_or(1.0, |r| r.scale_at(t));
        if scale != current_scale {
            lambda = base_lambda.scaled(scale);
            current_scale = scale;
        }
        draw_arrivals(scenario, &lambda, options.arrival_law, &mut arrival_rng, &mut arrivals);
        let state = channel_law.sample(&mut channel_rng);
        let ctx = SlotContext {
            t,
            queues: &queues,
            state,
            arrivals: &arrivals,
            prev,
        };
        let decision = policy.decide(scenario, &ctx, &mut policy_rng)?;
        if decision.activation.len() != network.stations()
            || !scenario.region(&decision.activation, state).contains(&decision.rates)
        {
            return Err(SimError::InfeasibleRates(t));
        }
        let cost = network_cost(&prev, &decision.activation, network.costs());
        let (next, departures) = crate::model::step_queues(&queues, &arrivals, &decision.rates);
        queues = next;
        let (mu_hat_err, lambda_hat_err) = match policy.estimates() {
            Some(e) => (
                Some(crate::markov::l1_distance(e.mu_hat, mu)),
                Some(e.lambda_hat.l1_distance(&lambda)),
            ),
            None => (None, None),
        };
        records.push(SlotRecord {
            t,
            activation: decision.activation.id() as u32,
            explored: decision.explored,
            resampled: decision.resampled,
            total_queue: queues.total(),
            queue_energy: queues.sum_of_squares(),
            cost,
            departures: departures.total(),
            arrivals: arrivals.total(),
            mu_hat_err,
            lambda_hat_err,
        });
        prev = decision.activation;
    }

    Ok(SimTrace {
        records,
        initial_activation: initial,
        initial_total_queue,
        initial_energy,
        final_queues: queues,
        cost_window: options.cost_window,
        stations: network.stations(),
    })
}

/// Runs one seed per entry of `seeds` in parallel. `make_policy` builds a
/// fresh policy for each run; results keep the order of `seeds`.
pub fn run_batch<P, F>(
    scenario: &Scenario,
    seeds: &[u64],
    options: &RunOptions,
    make_policy: F,
) -> Vec<Result<SimTrace, SimError>>
where
    P: Policy,
    F: Fn() -> Result<P, PolicyError> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut policy = make_policy()?;
            let opts = RunOptions {
                seed,
                ..options.clone()
            };
            run(scenario, &mut policy, &opts)
        })
        .collect()
}

/// Fraction of slots `from..=to` whose end-of-slot total backlog is at most `q_bar`.
pub fn stability_fraction_between(trace: &SimTrace, q_bar: u64, from: u64, to: u64) -> f64 {
    let slice = trace.slot_range(from, to);
    slice.iter().filter(|r| r.total_queue <= q_bar).count() as f64 / slice.len() as f64
}

pub fn stability_fraction(trace: &SimTrace, q_bar: u64) -> f64 {
    stability_fraction_between(trace, q_bar, 1, trace.horizon())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub window: usize,
    pub threshold: u64,
    /// `Δ_T(t) = V(Q(t+T)) − V(Q(t))` for each `t` with `t + T` in range.
    pub series: Vec<f64>,
    /// Mean of the drift over slots whose starting backlog exceeds the threshold.
    pub conditional_mean: Option<f64>,
    pub conditioned_samples: usize,
}

/// `T`-step Lyapunov drift with `V(q) = Σ q²`, indexed from `Q(1)`.
pub fn drift_diagnostic(trace: &SimTrace, window: usize, threshold: u64) -> DriftReport {
    assert!(window >= 1, "drift window must be at least 1");
    let energy = trace.energy_series();
    let totals = trace.total_queue_series();
    let n = energy.len().saturating_sub(window);
    let series: Vec<f64> = (0..n)
        .map(|i| energy[i + window] as f64 - energy[i] as f64)
        .collect();
    let conditioned: Vec<f64> = (0..n)
        .filter(|&i| totals[i] > threshold)
        .map(|i| series[i])
        .collect();
    let conditional_mean = if conditioned.is_empty() {
        None
    } else {
        Some(conditioned.iter().sum::<f64>() / conditioned.len() as f64)
    };
    DriftReport {
        window,
        threshold,
        series,
        conditioned_samples: conditioned.len(),
        conditional_mean,
    }
}
