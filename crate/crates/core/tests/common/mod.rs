//! Test-only oracles shared by the integration targets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use switchsched::lp::{offered_rates, perturb_cost, CostVector, LpLayout, RateSplit, StandardLp};
use switchsched::model::{ActivationVector, CostParams, LinkValues, NetworkConfig, PacketMatrix};
use switchsched::region::{ChannelModel, ChannelState, Interference, Scenario};

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// Dense standard form `A x = b`, `x ≥ 0`, with one surplus column per `≥` row.
fn standard_form(lp: &StandardLp) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let d = lp.objective.len();
    let ge = lp.lower_bounds.len();
    let rows = lp.equalities.len() + ge;
    let mut a = DMatrix::zeros(rows, d + ge);
    let mut b = DVector::zeros(rows);
    for (i, c) in lp.equalities.iter().chain(&lp.lower_bounds).enumerate() {
        for (j, &v) in c.coeffs.iter().enumerate() {
            a[(i, j)] = v;
        }
        b[i] = c.rhs;
    }
    for k in 0..ge {
        a[(lp.equalities.len() + k, d + k)] = -1.0;
    }
    let mut cost = lp.objective.clone();
    cost.extend(std::iter::repeat(0.0).take(ge));
    (a, b, cost)
}

fn independent_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..a.nrows() {
        let mut trial = keep.clone();
        trial.push(i);
        let sub = a.select_rows(&trial);
        if sub.rank(1e-9) == trial.len() {
            keep = trial;
        }
    }
    keep
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of candidate bases the enumeration would visit.
pub fn enumeration_size(lp: &StandardLp) -> u128 {
    let (a, _, _) = standard_form(lp);
    binomial(a.ncols(), independent_rows(&a).len())
}

/// Minimum of `c·x` over every basic feasible solution, found by trying every
/// column subset of size `rank(A)`. `None` when no subset is feasible.
pub fn bfs_optimum(lp: &StandardLp) -> Option<f64> {
    let (a_full, b_full, cost) = standard_form(lp);
    let rows = independent_rows(&a_full);
    let a = a_full.select_rows(&rows);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| b_full[i]));
    let (m, n) = (a.nrows(), a.ncols());
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let basis = a.select_columns(&subset);
        let lu = basis.full_piv_lu();
        let pivots_ok = (0..m).all(|i| lu.u()[(i, i)].abs() > 1e-10);
        if pivots_ok {
            if let Some(xb) = lu.solve(&b) {
                if xb.iter().all(|&v| v >= -1e-9) {
                    let mut x = DVector::zeros(n);
                    for (k, &j) in subset.iter().enumerate() {
                        x[j] = xb[k];
                    }
                    let residual = (&a_full * &x - &b_full).amax();
                    if residual < 1e-8 {
                        let value: f64 = subset.iter().zip(xb.iter()).map(|(&j, &v)| cost[j] * v).sum();
                        best = Some(best.map_or(value, |b: f64| b.min(value)));
                    }
                }
            }
        }
        // next combination in lexicographic order
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < n - m + i {
                break;
            }
        }
        subset[i] += 1;
        for k in i + 1..m {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// A small LP input: scenario, statistics, target rates and cost.
pub struct SmallInstance {
    pub scenario: Scenario,
    pub mu: Vec<f64>,
    pub lambda: LinkValues,
    pub eps_g: f64,
    pub cost: CostVector,
}

fn random_pmf<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    p
}

/// `M ≤ 2`, `|ℋ| ≤ 3`, feasible by construction: `λ + ε_g` is a fraction of
/// what the all-on uniform split offers.
pub fn random_small_instance<R: Rng>(rng: &mut R) -> SmallInstance {
    let stations = rng.random_range(1..=2usize);
    let users = rng.random_range(1..=2usize);
    let mut links = Vec::new();
    for m in 0..stations {
        let first = rng.random_range(0..users);
        for u in 0..users {
            if u == first || rng.random_bool(0.5) {
                links.push((m, u));
            }
        }
    }
    let network = NetworkConfig::new(
        users,
        stations,
        links.clone(),
        LinkValues::zeros(stations, users),
        2,
        2,
        CostParams::new(1.0, 1.0),
    )
    .unwrap();
    let state_count = rng.random_range(1..=3usize);
    let states: Vec<ChannelState> = (0..state_count)
        .map(|h| {
            let mut rates = PacketMatrix::zeros(stations, users);
            for &(m, u) in &links {
                rates.set(m, u, rng.random_range(1..=2));
            }
            ChannelState {
                name: format!("h{h}"),
                rates,
            }
        })
        .collect();
    let mu = random_pmf(state_count, rng);
    let channel = ChannelModel::new(states, mu.clone(), Interference::OneUserPerBs, &network).unwrap();
    let scenario = Scenario::new(network, channel).unwrap();

    let layout = LpLayout::new(&scenario);
    let on = ActivationVector::all_on(stations);
    let mut sigma = vec![0.0; layout.activations()];
    sigma[on.id()] = 1.0;
    let split = uniform_split(&scenario, on);
    let offered = offered_rates(&scenario, &mu, &sigma, &split);
    let theta = rng.random_range(0.2..0.9);
    let eps_g = if rng.random_bool(0.5) { 0.01 } else { 0.0 };
    let mut lambda = LinkValues::zeros(stations, users);
    for &(m, u) in &links {
        lambda.set(m, u, (theta * offered.get(m, u) - eps_g).max(0.0));
    }
    let base = CostVector::activation_cost(&scenario);
    let cost = perturb_cost(&base, 0.5, rng);
    SmallInstance {
        scenario,
        mu,
        lambda,
        eps_g,
        cost,
    }
}

/// `α` uniform over `R(on, h)` for the all-on state; point mass on zero elsewhere.
fn uniform_split(scenario: &Scenario, on: ActivationVector) -> RateSplit {
    let states = scenario.state_count();
    let mut alpha = Vec::new();
    for j in ActivationVector::enumerate(scenario.network().stations()) {
        for h in 0..states {
            let size = scenario.region(&j, h).len();
            if j == on {
                alpha.push(vec![1.0 / size as f64; size]);
            } else {
                let mut point = vec![0.0; size];
                point[0] = 1.0;
                alpha.push(point);
            }
        }
    }
    RateSplit::from_parts(states, alpha)
}
