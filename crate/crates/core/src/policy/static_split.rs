//! Known-statistics policies built on the reference LP solution `σ*`.
//!
//! The activation follows `P(σ*, ε_s)`: with probability `ε_s` a fresh state
//! is drawn from `σ*`, otherwise `J(t) = J(t−1)`.

use crate::lp::{beta_to_alpha, solve_reference, RateSplit};
use crate::model::ActivationVector;
use crate::region::Scenario;

use super::{
    check_nonnegative, check_unit, max_weight, sample_pmf, Decision, Policy, PolicyError, SimRng,
    SlotContext, SwitchGate,
};
use rand::Rng;

#[derive(Debug, Clone)]
struct ActivationChain {
    sigma: Vec<f64>,
    eps_s: f64,
    gate: SwitchGate,
}

impl ActivationChain {
    fn step(&mut self, ctx: &SlotContext<'_>, rng: &mut SimRng, stations: usize) -> (ActivationVector, bool) {
        let mut next = ctx.prev;
        let mut resampled = false;
        if self.gate.open(ctx.t) && rng.random_bool(self.eps_s) {
            resampled = true;
            next = ActivationVector::from_id(sample_pmf(&self.sigma, rng), stations);
        }
        self.gate.record(ctx.t, ctx.prev, next);
        (next, resampled)
    }
}

fn reference_split(
    scenario: &Scenario,
    eps_s: f64,
    eps_g: f64,
) -> Result<(Vec<f64>, RateSplit), PolicyError> {
    check_unit("eps_s", eps_s)?;
    check_nonnegative("eps_g", eps_g)?;
    let solution = solve_reference(scenario, eps_g)?;
    if !solution.is_optimal() {
        return Err(PolicyError::Infeasible);
    }
    Ok((solution.sigma().to_vec(), beta_to_alpha(&solution)))
}

/// Activation from `P(σ*, ε_s)`, rates from Max-Weight.
#[derive(Debug, Clone)]
pub struct StaticSplitMw {
    chain: ActivationChain,
}

impl StaticSplitMw {
    /// Solves `L_{c⁰}(μ, λ + ε_g)` for the scenario.
    pub fn new(scenario: &Scenario, eps_s: f64, eps_g: f64) -> Result<Self, PolicyError> {
        let (sigma, _) = reference_split(scenario, eps_s, eps_g)?;
        Ok(Self::from_sigma(sigma, eps_s))
    }

    pub fn from_sigma(sigma: Vec<f64>, eps_s: f64) -> Self {
        Self {
            chain: ActivationChain {
                sigma,
                eps_s,
                gate: SwitchGate::new(None),
            },
        }
    }

    pub fn with_min_switch_gap(mut self, gap: Option<u64>) -> Self {
        self.chain.gate = SwitchGate::new(gap);
        self
    }

    pub fn sigma(&self) -> &[f64] {
        &self.chain.sigma
    }
}

impl Policy for StaticSplitMw {
    fn name(&self) -> &'static str {
        "static_split_mw"
    }

    fn start(&mut self, _scenario: &Scenario, _initial: ActivationVector, _rng: &mut SimRng) {
        self.chain.gate.reset();
    }

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        let (activation, resampled) = self.chain.step(ctx, rng, scenario.network().stations());
        let rates = max_weight(ctx.queues, scenario.region(&activation, ctx.state)).clone();
        Ok(Decision {
            activation,
            rates,
            explored: false,
            resampled,
        })
    }
}

/// Activation from `P(σ*, ε_s)`, rates drawn from `α*(J(t), h(t))`. Queue-blind.
#[derive(Debug, Clone)]
pub struct StaticSplitStatic {
    chain: ActivationChain,
    split: RateSplit,
}

impl StaticSplitStatic {
    pub fn new(scenario: &Scenario, eps_s: f64, eps_g: f64) -> Result<Self, PolicyError> {
        let (sigma, split) = reference_split(scenario, eps_s, eps_g)?;
        Ok(Self {
            chain: ActivationChain {
                sigma,
                eps_s,
                gate: SwitchGate::new(None),
            },
            split,
        })
    }

    pub fn with_min_switch_gap(mut self, gap: Option<u64>) -> Self {
        self.chain.gate = SwitchGate::new(gap);
        self
    }

    pub fn sigma(&self) -> &[f64] {
        &self.chain.sigma
    }
}

impl Policy for StaticSplitStatic {
    fn name(&self) -> &'static str {
        "static_split_static"
    }

    fn start(&mut self, _scenario: &Scenario, _initial: ActivationVector, _rng: &mut SimRng) {
        self.chain.gate.reset();
    }

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        let (activation, resampled) = self.chain.step(ctx, rng, scenario.network().stations());
        let region = scenario.region(&activation, ctx.state);
        let alpha = self.split.alpha(activation.id(), ctx.state);
        let rates = region.get(sample_pmf(alpha, rng)).clone();
        Ok(Decision {
            activation,
            rates,
            explored: false,
            resampled,
        })
    }
}
