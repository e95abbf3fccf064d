//! Scheduling policies. Every policy picks an activation `J(t)` and then a
//! rate matrix from `R(J(t), h(t))`.

mod algorithm1;
mod static_split;

pub use algorithm1::{exploration_probability, Algorithm1, Algorithm1Params, Estimator};
pub use static_split::{StaticSplitMw, StaticSplitStatic};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lp::LpError;
use crate::model::{ActivationVector, ArrivalMatrix, LinkValues, QueueMatrix, RateMatrix};
use crate::region::{RateRegion, Scenario};

/// Generator type handed to policies for their internal draws.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("parameter {name} = {value} out of range")]
    Parameter { name: &'static str, value: f64 },
    #[error("the reference LP is infeasible: the offered load cannot be served with the requested gap")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<(), PolicyError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PolicyError::Parameter { name, value })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<(), PolicyError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::Parameter { name, value })
    }
}

/// What a policy sees at slot `t`. Arrivals `A(t)` are drawn before the
/// activation decision, channel state `h(t)` is the full-network state.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub t: u64,
    pub queues: &'a QueueMatrix,
    pub state: usize,
    pub arrivals: &'a ArrivalMatrix,
    pub prev: ActivationVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub activation: ActivationVector,
    pub rates: RateMatrix,
    pub explored: bool,
    /// A resampling event `E_s(t) = 1` fired.
    pub resampled: bool,
}

/// Learned statistics exposed by learning policies.
#[derive(Debug, Clone, Copy)]
pub struct Estimates<'a> {
    pub mu_hat: &'a [f64],
    pub lambda_hat: &'a LinkValues,
    pub samples: u64,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Resets internal state before slot 1, with `J(0) = initial`.
    fn start(&mut self, _scenario: &Scenario, _initial: ActivationVector, _rng: &mut SimRng) {}

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError>;

    fn estimates(&self) -> Option<Estimates<'_>> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn start(&mut self, scenario: &Scenario, initial: ActivationVector, rng: &mut SimRng) {
        (**self).start(scenario, initial, rng)
    }

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        (**self).decide(scenario, ctx, rng)
    }

    fn estimates(&self) -> Option<Estimates<'_>> {
        (**self).estimates()
    }
}

/// Index of the Max-Weight member: largest `q·r`, first in region order on
/// ties. The zero matrix is member 0, so an all-zero queue selects it.
pub fn max_weight_index(queues: &QueueMatrix, region: &RateRegion) -> usize {
    let q = queues.as_slice();
    let mut best = 0;
    let mut best_weight = region.weight(0, q);
    for k in 1..region.len() {
        let w = region.weight(k, q);
        if w > best_weight {
            best = k;
            best_weight = w;
        }
    }
    best
}

pub fn max_weight<'r>(queues: &QueueMatrix, region: &'r RateRegion) -> &'r RateMatrix {
    region.get(max_weight_index(queues, region))
}

/// Draws an index from a pmf. Entries must be nonnegative with a positive sum.
pub(crate) fn sample_pmf<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(pmf.iter().map(|p| p.max(0.0)))
        .expect("pmf with positive mass")
        .sample(rng)
}

/// Optional hysteresis: no resampling draw within `gap` slots of the last
/// change of activation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SwitchGate {
    gap: Option<u64>,
    last_change: u64,
}

impl SwitchGate {
    pub(crate) fn new(gap: Option<u64>) -> Self {
        Self { gap, last_change: 0 }
    }

    pub(crate) fn reset(&mut self) {
        self.last_change = 0;
    }

    pub(crate) fn open(&self, t: u64) -> bool {
        match self.gap {
            Some(gap) if self.last_change > 0 => t - self.last_change >= gap,
            _ => true,
        }
    }

    pub(crate) fn record(&mut self, t: u64, prev: ActivationVector, next: ActivationVector) {
        if prev != next {
            self.last_change = t;
        }
    }
}

/// Baseline: every BS on in every slot, Max-Weight over the full region.
#[derive(Debug, Clone, Default)]
pub struct AlwaysOn;

impl Policy for AlwaysOn {
    fn name(&self) -> &'static str {
        "always_on"
    }

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        _rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        let region = scenario.full_region(ctx.state);
        Ok(Decision {
            activation: ActivationVector::all_on(scenario.network().stations()),
            rates: max_weight(ctx.queues, region).clone(),
            explored: false,
            resampled: false,
        })
    }
}
