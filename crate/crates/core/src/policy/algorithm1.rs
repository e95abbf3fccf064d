//! Explore-exploit policy for unknown channel and arrival statistics.
//!
//! Per slot: a resampling event `E_s(t) ~ Bernoulli(ε_s)` redraws the
//! candidate `J̃(t)` from the solution of `L_{c^εp}(μ̂, λ̂ + ε_g)`; an
//! explore event `E_l(t) ~ Bernoulli(ε_l(t))` turns every BS on and feeds
//! the full channel state and the arrivals to the estimator. Non-explore
//! slots use `J(t) = J̃(t)`, so `J(t) ≥ J̃(t)` always holds.

use rand::Rng;

use crate::lp::{build_lp, perturb_cost, solve_lp, CostVector};
use crate::model::{ActivationVector, ArrivalMatrix, LinkValues};
use crate::region::Scenario;

use super::{
    check_nonnegative, check_unit, max_weight, sample_pmf, Decision, Estimates, Policy,
    PolicyError, SimRng, SlotContext, SwitchGate,
};

/// `2 ln t / t`, floored at `floor` when given. Zero at `t = 1`, at most `2/e`.
pub fn exploration_probability(t: u64, floor: Option<f64>) -> f64 {
    let t = t.max(1) as f64;
    let p = 2.0 * t.ln() / t;
    match floor {
        Some(f) => p.max(f),
        None => p,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm1Params {
    pub eps_p: f64,
    pub eps_s: f64,
    pub eps_g: f64,
    /// Lower bound on both the exploration probability and the learning rate.
    /// `None` gives the plain algorithm with running means.
    pub learning_floor: Option<f64>,
    /// Update `λ̂` from the arrivals of every slot, not only explore slots.
    pub lambda_every_slot: bool,
    pub min_switch_gap: Option<u64>,
}

impl Algorithm1Params {
    pub fn new(eps_p: f64, eps_s: f64, eps_g: f64) -> Self {
        Self {
            eps_p,
            eps_s,
            eps_g,
            learning_floor: None,
            lambda_every_slot: false,
            min_switch_gap: None,
        }
    }

    pub fn tracking(mut self, floor: f64) -> Self {
        self.learning_floor = Some(floor);
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        check_nonnegative("eps_p", self.eps_p)?;
        check_unit("eps_s", self.eps_s)?;
        check_nonnegative("eps_g", self.eps_g)?;
        if let Some(f) = self.learning_floor {
            if !(f > 0.0 && f < 1.0) {
                return Err(PolicyError::Parameter {
                    name: "learning_floor",
                    value: f,
                });
            }
        }
        Ok(())
    }
}

/// Running estimates of `μ` and `λ`. Each update moves the estimate toward
/// the new sample with rate `max(1/k, floor)`, where `k` counts samples, so
/// without a floor the estimates are plain empirical means.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    mu_hat: Vec<f64>,
    lambda_hat: LinkValues,
    samples: u64,
    lambda_samples: u64,
    floor: Option<f64>,
}

impl Estimator {
    /// The all-zero sentinel: `μ̂ = 0`, `λ̂ = 0`.
    pub fn new(states: usize, shape: (usize, usize), floor: Option<f64>) -> Self {
        Self {
            mu_hat: vec![0.0; states],
            lambda_hat: LinkValues::zeros(shape.0, shape.1),
            samples: 0,
            lambda_samples: 0,
            floor,
        }
    }

    fn rate(&self, k: u64) -> f64 {
        let r = 1.0 / k as f64;
        self.floor.map_or(r, |f| r.max(f))
    }

    pub fn observe_state(&mut self, state: usize) {
        self.samples += 1;
        let eta = self.rate(self.samples);
        for (h, m) in self.mu_hat.iter_mut().enumerate() {
            let target = if h == state { 1.0 } else { 0.0 };
            *m += eta * (target - *m);
        }
    }

    pub fn observe_arrivals(&mut self, arrivals: &ArrivalMatrix) {
        self.lambda_samples += 1;
        let eta = self.rate(self.lambda_samples);
        for (l, &a) in self.lambda_hat.as_mut_slice().iter_mut().zip(arrivals.as_slice()) {
            *l += eta * (a as f64 - *l);
        }
    }

    /// No channel sample yet, so `μ̂` is not a pmf.
    pub fn is_sentinel(&self) -> bool {
        self.samples == 0
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    pub fn lambda_hat(&self) -> &LinkValues {
        &self.lambda_hat
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }
}

#[derive(Debug, Clone)]
pub struct Algorithm1 {
    params: Algorithm1Params,
    fixed_cost: Option<CostVector>,
    cost: Option<CostVector>,
    estimator: Estimator,
    j_tilde: ActivationVector,
    gate: SwitchGate,
    // estimates change only on updates; the LP on unchanged input is
    // deterministic, so its solution is reused until the next update
    version: u64,
    cached: Option<(u64, Option<Vec<f64>>)>,
    lp_solves: u64,
    infeasible_solves: u64,
}

impl Algorithm1 {
    pub fn new(scenario: &Scenario, params: Algorithm1Params) -> Result<Self, PolicyError> {
        params.validate()?;
        let network = scenario.network();
        let estimator = Estimator::new(
            scenario.state_count(),
            (network.stations(), network.users()),
            params.learning_floor,
        );
        Ok(Self {
            gate: SwitchGate::new(params.min_switch_gap),
            params,
            fixed_cost: None,
            cost: None,
            estimator,
            j_tilde: ActivationVector::all_on(network.stations()),
            version: 0,
            cached: None,
            lp_solves: 0,
            infeasible_solves: 0,
        })
    }

    /// Uses `cost` instead of drawing `c^εp` at start.
    pub fn with_fixed_cost(mut self, cost: CostVector) -> Self {
        self.fixed_cost = Some(cost);
        self
    }

    pub fn params(&self) -> &Algorithm1Params {
        &self.params
    }

    pub fn cost(&self) -> Option<&CostVector> {
        self.cost.as_ref()
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    /// Replaces the estimator, e.g. to feed known statistics.
    pub fn set_estimator(&mut self, estimator: Estimator) {
        self.estimator = estimator;
        self.version += 1;
    }

    pub fn candidate(&self) -> ActivationVector {
        self.j_tilde
    }

    pub fn lp_solves(&self) -> u64 {
        self.lp_solves
    }

    pub fn infeasible_solves(&self) -> u64 {
        self.infeasible_solves
    }

    /// `σ̂` for the current estimates, or `None` while the estimator is the
    /// sentinel or the estimated LP is infeasible.
    pub fn estimated_sigma(&mut self, scenario: &Scenario) -> Result<Option<Vec<f64>>, PolicyError> {
        if self.estimator.is_sentinel() {
            return Ok(None);
        }
        if let Some((v, sigma)) = &self.cached {
            if *v == self.version {
                return Ok(sigma.clone());
            }
        }
        let cost = match (&self.cost, &self.fixed_cost) {
            (Some(c), _) | (None, Some(c)) => c.clone(),
            (None, None) => CostVector::activation_cost(scenario),
        };
        let problem = build_lp(
            scenario,
            self.estimator.mu_hat(),
            self.estimator.lambda_hat(),
            self.params.eps_g,
            &cost,
        )?;
        let solution = solve_lp(&problem)?;
        self.lp_solves += 1;
        let sigma = if solution.is_optimal() {
            Some(solution.sigma().to_vec())
        } else {
            self.infeasible_solves += 1;
            None
        };
        self.cached = Some((self.version, sigma.clone()));
        Ok(sigma)
    }
}

impl Policy for Algorithm1 {
    fn name(&self) -> &'static str {
        if self.params.learning_floor.is_some() {
            "algorithm1_tracking"
        } else {
            "algorithm1"
        }
    }

    fn start(&mut self, scenario: &Scenario, initial: ActivationVector, rng: &mut SimRng) {
        let network = scenario.network();
        self.estimator = Estimator::new(
            scenario.state_count(),
            (network.stations(), network.users()),
            self.params.learning_floor,
        );
        self.cost = Some(match &self.fixed_cost {
            Some(c) => c.clone(),
            None => perturb_cost(&CostVector::activation_cost(scenario), self.params.eps_p, rng),
        });
        self.j_tilde = initial;
        self.gate.reset();
        self.version += 1;
        self.cached = None;
        self.lp_solves = 0;
        self.infeasible_solves = 0;
    }

    fn decide(
        &mut self,
        scenario: &Scenario,
        ctx: &SlotContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        let stations = scenario.network().stations();

        let mut resampled = false;
        if self.gate.open(ctx.t) && rng.random_bool(self.params.eps_s) {
            resampled = true;
            if let Some(sigma) = self.estimated_sigma(scenario)? {
                self.j_tilde = ActivationVector::from_id(sample_pmf(&sigma, rng), stations);
            }
        }

        let p_explore = exploration_probability(ctx.t, self.params.learning_floor);
        let explored = rng.random_bool(p_explore);
        let activation = if explored {
            self.estimator.observe_state(ctx.state);
            if !self.params.lambda_every_slot {
                self.estimator.observe_arrivals(ctx.arrivals);
            }
            self.version += 1;
            ActivationVector::all_on(stations)
        } else {
            self.j_tilde
        };
        if self.params.lambda_every_slot {
            self.estimator.observe_arrivals(ctx.arrivals);
            self.version += 1;
        }
        self.gate.record(ctx.t, ctx.prev, activation);

        let rates = max_weight(ctx.queues, scenario.region(&activation, ctx.state)).clone();
        Ok(Decision {
            activation,
            rates,
            explored,
            resampled,
        })
    }

    fn estimates(&self) -> Option<Estimates<'_>> {
        Some(Estimates {
            mu_hat: self.estimator.mu_hat(),
            lambda_hat: self.estimator.lambda_hat(),
            samples: self.estimator.samples(),
        })
    }
}
