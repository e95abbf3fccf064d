//! The activation linear program over `(σ, β)`.
//!
//! Variables are ordered as the `σ` block indexed by activation id, followed
//! by one `β` block per `(j, h)` pair (`j` outer, `h` inner) whose entries
//! follow the member order of `R(j,h)`.

pub mod simplex;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{ActivationVector, LinkValues};
use crate::region::Scenario;
pub use simplex::{Constraint, StandardLp, Status as LpStatus, TOLERANCE};

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("cost vector has length {got}, instance dimension is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("problem contains non-finite coefficients")]
    NonFinite,
    #[error("simplex exceeded {0} pivots")]
    IterationCap(usize),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("channel pmf has {got} entries, scenario has {expected} states")]
    PmfLength { expected: usize, got: usize },
    #[error("target rate matrix has shape {got:?}, network is {expected:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// Index map from `(j, h, r)` to LP columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LpLayout {
    activations: usize,
    states: usize,
    // start column and size of each β block, indexed by j * states + h
    blocks: Vec<(usize, usize)>,
    dim: usize,
}

impl LpLayout {
    pub fn new(scenario: &Scenario) -> Self {
        let activations = scenario.activation_count();
        let states = scenario.state_count();
        let stations = scenario.network().stations();
        let mut blocks = Vec::with_capacity(activations * states);
        let mut next = activations;
        for j in ActivationVector::enumerate(stations) {
            for h in 0..states {
                let size = scenario.region(&j, h).len();
                blocks.push((next, size));
                next += size;
            }
        }
        Self {
            activations,
            states,
            blocks,
            dim: next,
        }
    }

    /// Total variable count `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn activations(&self) -> usize {
        self.activations
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Column range of the `β_{j,h,·}` block.
    pub fn beta_block(&self, activation: usize, state: usize) -> std::ops::Range<usize> {
        let (start, size) = self.blocks[activation * self.states + state];
        start..start + size
    }
}

/// Objective weights over the `d` LP variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    /// `c⁰`: per-slot activation cost on the `σ` block, zero on `β`. The sleep
    /// cost `C1'` is charged to the stations a state leaves off.
    pub fn activation_cost(scenario: &Scenario) -> Self {
        let layout = LpLayout::new(scenario);
        let costs = scenario.network().costs();
        let stations = scenario.network().stations();
        let mut c = vec![0.0; layout.dim()];
        for j in ActivationVector::enumerate(stations) {
            let on = j.count_on() as f64;
            c[j.id()] = costs.c1 * on + costs.c1_prime * (stations as f64 - on);
        }
        Self(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `c + ε_p·υ` with `υ` uniform on the unit sphere (a normalized Gaussian).
pub fn perturb_cost<R: Rng + ?Sized>(base: &CostVector, eps_p: f64, rng: &mut R) -> CostVector {
    let mut direction: Vec<f64> = (0..base.len()).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut direction {
        *x /= norm;
    }
    CostVector(
        base.0
            .iter()
            .zip(&direction)
            .map(|(c, v)| c + eps_p * v)
            .collect(),
    )
}

/// One instance `L_c(μ, λ+ε_g)` together with its column layout.
#[derive(Debug, Clone)]
pub struct LpProblem {
    layout: LpLayout,
    program: StandardLp,
}

impl LpProblem {
    pub fn layout(&self) -> &LpLayout {
        &self.layout
    }

    pub fn program(&self) -> &StandardLp {
        &self.program
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }
}

/// Builds `min c·(σ,β)` over `σ ∈ simplex`, `β ≥ 0`,
/// `σ_j = Σ_r β_{j,h,r}` for every `(j,h)`, and
/// `Σ β_{j,h,r} μ(h) r_{m,u} ≥ λ_{m,u} + ε_g` on every link.
pub fn build_lp(
    scenario: &Scenario,
    mu: &[f64],
    lambda_target: &LinkValues,
    eps_g: f64,
    cost: &CostVector,
) -> Result<LpProblem, LpError> {
    let layout = LpLayout::new(scenario);
    let network = scenario.network();
    if cost.len() != layout.dim {
        return Err(LpError::Dimension {
            expected: layout.dim,
            got: cost.len(),
        });
    }
    if mu.len() != layout.states {
        return Err(LpError::PmfLength {
            expected: layout.states,
            got: mu.len(),
        });
    }
    let shape = (network.stations(), network.users());
    if lambda_target.shape() != shape {
        return Err(LpError::Shape {
            expected: shape,
            got: lambda_target.shape(),
        });
    }
    let d = layout.dim;

    let mut equalities = Vec::with_capacity(1 + layout.blocks.len());
    let mut simplex_row = vec![0.0; d];
    simplex_row[..layout.activations].fill(1.0);
    equalities.push(Constraint {
        coeffs: simplex_row,
        rhs: 1.0,
    });
    for j in 0..layout.activations {
        for h in 0..layout.states {
            let mut coeffs = vec![0.0; d];
            coeffs[j] = 1.0;
            for col in layout.beta_block(j, h) {
                coeffs[col] = -1.0;
            }
            equalities.push(Constraint { coeffs, rhs: 0.0 });
        }
    }

    let mut lower_bounds = Vec::with_capacity(network.links().len());
    for &(m, u) in network.links() {
        let mut coeffs = vec![0.0; d];
        for j in ActivationVector::enumerate(network.stations()) {
            for (h, &p) in mu.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let region = scenario.region(&j, h);
                for (k, col) in layout.beta_block(j.id(), h).enumerate() {
                    let rate = region.get(k).get(m, u);
                    if rate != 0 {
                        coeffs[col] = p * rate as f64;
                    }
                }
            }
        }
        lower_bounds.push(Constraint {
            coeffs,
            rhs: lambda_target.get(m, u) + eps_g,
        });
    }

    Ok(LpProblem {
        layout,
        program: StandardLp {
            objective: cost.0.clone(),
            equalities,
            lower_bounds,
        },
    })
}

/// Optimizer of an [`LpProblem`], or an infeasibility verdict.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    x: Vec<f64>,
    layout: LpLayout,
    pub pivots: usize,
    /// Nonbasic columns with zero reduced cost; zero certifies a unique optimum.
    pub zero_reduced_costs: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Full variable vector `(σ, β)`; empty when infeasible.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `σ`, indexed by activation id.
    pub fn sigma(&self) -> &[f64] {
        if self.x.is_empty() {
            &[]
        } else {
            &self.x[..self.layout.activations]
        }
    }

    /// `β_{j,h,·}` in member order of `R(j,h)`.
    pub fn beta(&self, activation: usize, state: usize) -> &[f64] {
        &self.x[self.layout.beta_block(activation, state)]
    }

    pub fn layout(&self) -> &LpLayout {
        &self.layout
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    let out = simplex::solve(&problem.program)?;
    Ok(LpSolution {
        status: out.status,
        objective_value: out.objective,
        x: out.x,
        layout: problem.layout.clone(),
        pivots: out.pivots,
        zero_reduced_costs: out.zero_reduced_costs,
    })
}

/// Rate-allocation pmfs `α(j,h)` over the members of `R(j,h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSplit {
    states: usize,
    alpha: Vec<Vec<f64>>,
}

impl RateSplit {
    /// Per-`(j,h)` pmfs listed with `j` outer and `h` inner.
    pub fn from_parts(states: usize, alpha: Vec<Vec<f64>>) -> Self {
        Self { states, alpha }
    }

    pub fn alpha(&self, activation: usize, state: usize) -> &[f64] {
        &self.alpha[activation * self.states + state]
    }
}

/// Below this `σ_j` the activation state is treated as unused.
const UNUSED_STATE: f64 = 1e-12;

/// `α_r(j,h) = β_{j,h,r} / σ_j`, and a point mass on the zero matrix for
/// states with `σ_j = 0`.
pub fn beta_to_alpha(solution: &LpSolution) -> RateSplit {
    let layout = &solution.layout;
    let mut alpha = Vec::with_capacity(layout.blocks.len());
    for j in 0..layout.activations {
        let sigma = solution.sigma().get(j).copied().unwrap_or(0.0);
        for h in 0..layout.states {
            let size = layout.beta_block(j, h).len();
            if sigma > UNUSED_STATE {
                alpha.push(solution.beta(j, h).iter().map(|b| b.max(0.0) / sigma).collect());
            } else {
                let mut point = vec![0.0; size];
                point[0] = 1.0;
                alpha.push(point);
            }
        }
    }
    RateSplit {
        states: layout.states,
        alpha,
    }
}

/// `Σ_j σ_j Σ_h μ(h) Σ_r α_r(j,h)·r`, the mean service a static split offers.
pub fn offered_rates(scenario: &Scenario, mu: &[f64], sigma: &[f64], split: &RateSplit) -> LinkValues {
    let network = scenario.network();
    let mut out = LinkValues::zeros(network.stations(), network.users());
    for j in ActivationVector::enumerate(network.stations()) {
        let s = sigma[j.id()];
        if s <= 0.0 {
            continue;
        }
        for (h, &p) in mu.iter().enumerate() {
            let region = scenario.region(&j, h);
            for (k, &a) in split.alpha(j.id(), h).iter().enumerate() {
                let w = s * p * a;
                if w == 0.0 {
                    continue;
                }
                for (m, u, rate) in region.get(k).nonzeros() {
                    out.set(m, u, out.get(m, u) + w * rate as f64);
                }
            }
        }
    }
    out
}

/// Solves `L_{c⁰}(μ, λ+ε_g)` for the scenario's own statistics.
pub fn solve_reference(scenario: &Scenario, eps_g: f64) -> Result<LpSolution, LpError> {
    let cost = CostVector::activation_cost(scenario);
    let problem = build_lp(
        scenario,
        scenario.channel().mu(),
        scenario.network().lambda(),
        eps_g,
        &cost,
    )?;
    solve_lp(&problem)
}
