//! Coefficient of ergodicity and convergence bounds for perturbed chains.
//!
//! `τ₁(P) = max { ‖Pᵀz‖₁ : zᵀ𝟙 = 0, ‖z‖₁ = 1 }`. The maximum is attained at
//! `z = (e_i − e_k)/2`, which gives the closed form
//! `τ₁(P) = ½ max_{i,k} Σ_j |p_ij − p_kj|`.
//!
//! Matrix distances (`‖P − Q‖`) are the maximum absolute row sum of the
//! difference throughout, i.e. the operator norm acting on row vectors.

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} outside [0, 1]")]
    Entry { row: usize, col: usize, value: f64 },
    #[error("distribution has length {got}, chain has {expected} states")]
    Length { expected: usize, got: usize },
    #[error("vector is not a pmf")]
    NotPmf,
    #[error("parameter eps_s = {0} outside [0, 1]")]
    EpsilonRange(f64),
    #[error("no scrambling power up to {0}: the chain is not eventually scrambling")]
    NotScrambling(usize),
    #[error("sigma is not invariant for P (residual {0})")]
    NotInvariant(f64),
    #[error("invariant distribution is not unique")]
    Singular,
}

/// Square row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(DMatrix<f64>);

impl StochasticMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self, MarkovError> {
        if p.nrows() != p.ncols() {
            return Err(MarkovError::NotSquare {
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        if p.nrows() == 0 {
            return Err(MarkovError::Empty);
        }
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let v = p[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(MarkovError::Entry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum = p.row(i).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MarkovError::RowSum { row: i, sum });
            }
        }
        Ok(Self(p))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MarkovError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MarkovError::NotSquare { rows: n, cols });
        }
        Self::new(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// `𝟙σ`: every row equal to `sigma`.
    pub fn rank_one(sigma: &[f64]) -> Result<Self, MarkovError> {
        check_pmf(sigma)?;
        let n = sigma.len();
        Self::new(DMatrix::from_fn(n, n, |_, j| sigma[j]))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Product of stochastic matrices. Not revalidated: rounding can move row
    /// sums by a few ulps.
    pub fn mul(&self, other: &StochasticMatrix) -> StochasticMatrix {
        StochasticMatrix(&self.0 * &other.0)
    }

    pub fn pow(&self, k: u32) -> StochasticMatrix {
        let mut acc = StochasticMatrix::identity(self.size());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Row vector times matrix, `yP`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|j| (0..n).map(|i| y[i] * self.0[(i, j)]).sum())
            .collect()
    }

    /// Maximum absolute row sum of `self − other`.
    pub fn distance(&self, other: &StochasticMatrix) -> f64 {
        (0..self.size())
            .map(|i| (0..self.size()).map(|j| (self.0[(i, j)] - other.0[(i, j)]).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn support(&self) -> Vec<Vec<bool>> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)] > 0.0).collect())
            .collect()
    }
}

fn check_pmf(p: &[f64]) -> Result<(), MarkovError> {
    if p.is_empty() || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(MarkovError::NotPmf);
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(MarkovError::NotPmf);
    }
    Ok(())
}

/// `‖x − y‖₁` for vectors.
pub fn l1_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

pub fn tau1(p: &StochasticMatrix) -> f64 {
    let m = p.matrix();
    let n = p.size();
    let mut best = 0.0f64;
    for i in 0..n {
        for k in i + 1..n {
            let d: f64 = (0..n).map(|j| (m[(i, j)] - m[(k, j)]).abs()).sum();
            best = best.max(d);
        }
    }
    (0.5 * best).min(1.0)
}

/// `ε_s·𝟙σ + (1 − ε_s)·I`.
pub fn p_sigma_eps(sigma: &[f64], eps_s: f64) -> Result<StochasticMatrix, MarkovError> {
    if !(0.0..=1.0).contains(&eps_s) {
        return Err(MarkovError::EpsilonRange(eps_s));
    }
    check_pmf(sigma)?;
    let n = sigma.len();
    let p = DMatrix::from_fn(n, n, |i, j| {
        eps_s * sigma[j] + if i == j { 1.0 - eps_s } else { 0.0 }
    });
    // rounding in the sum above can leave row sums a few ulps from 1
    let p = DMatrix::from_fn(n, n, |i, j| p[(i, j)] / p.row(i).sum());
    StochasticMatrix::new(p)
}

fn boolean_product(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect())
        .collect()
}

fn support_is_scrambling(s: &[Vec<bool>]) -> bool {
    let n = s.len();
    (0..n).all(|i| (i + 1..n).all(|k| (0..n).any(|j| s[i][j] && s[k][j])))
}

/// No two rows of `p` are orthogonal.
pub fn is_scrambling(p: &StochasticMatrix) -> bool {
    support_is_scrambling(&p.support())
}

/// Smallest `k ≤ cap` such that `p^k` is scrambling. Works on the support
/// pattern, so the answer does not depend on floating-point underflow.
pub fn find_scrambling_power(p: &StochasticMatrix, cap: usize) -> Option<usize> {
    let base = p.support();
    let mut power = base.clone();
    for k in 1..=cap {
        if support_is_scrambling(&power) {
            return Some(k);
        }
        power = boolean_product(&power, &base);
    }
    None
}

/// Default search cap for [`find_scrambling_power`]: past the Wielandt bound
/// `(N−1)² + 1` with slack for transient states.
pub fn default_scrambling_cap(n: usize) -> usize {
    (n.saturating_sub(1)).pow(2) + 1 + n
}

/// Invariant distribution from `σ(P − I) = 0`, `σ𝟙 = 1`.
pub fn stationary_distribution(p: &StochasticMatrix) -> Result<Vec<f64>, MarkovError> {
    let n = p.size();
    // rows of the system are the columns of (P - I); the last is replaced by 𝟙
    let mut a = p.matrix().transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(MarkovError::Singular)?;
    let sigma: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = sigma.iter().sum();
    Ok(sigma.into_iter().map(|v| v / total).collect())
}

/// `P*`, its invariant pmf, a perturbation radius and an initial pmf.
#[derive(Debug, Clone)]
pub struct PerturbedChain {
    p_star: StochasticMatrix,
    sigma_star: Vec<f64>,
    epsilon: f64,
    y0: Vec<f64>,
    scrambling_power: usize,
}

impl PerturbedChain {
    /// Computes `σ*` from `P*`. Fails when `P*` has no scrambling power within
    /// [`default_scrambling_cap`].
    pub fn new(p_star: StochasticMatrix, epsilon: f64, y0: Vec<f64>) -> Result<Self, MarkovError> {
        let sigma = stationary_distribution(&p_star)?;
        Self::with_sigma(p_star, sigma, epsilon, y0)
    }

    pub fn with_sigma(
        p_star: StochasticMatrix,
        sigma_star: Vec<f64>,
        epsilon: f64,
        y0: Vec<f64>,
    ) -> Result<Self, MarkovError> {
        let n = p_star.size();
        for v in [&sigma_star, &y0] {
            if v.len() != n {
                return Err(MarkovError::Length {
                    expected: n,
                    got: v.len(),
                });
            }
            check_pmf(v)?;
        }
        let residual = l1_distance(&p_star.apply(&sigma_star), &sigma_star);
        if residual > 1e-9 {
            return Err(MarkovError::NotInvariant(residual));
        }
        let cap = default_scrambling_cap(n);
        let scrambling_power =
            find_scrambling_power(&p_star, cap).ok_or(MarkovError::NotScrambling(cap))?;
        Ok(Self {
            p_star,
            sigma_star,
            epsilon,
            y0,
            scrambling_power,
        })
    }

    pub fn p_star(&self) -> &StochasticMatrix {
        &self.p_star
    }

    pub fn sigma_star(&self) -> &[f64] {
        &self.sigma_star
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    /// `m̂`, the smallest power of `P*` that is scrambling.
    pub fn scrambling_power(&self) -> usize {
        self.scrambling_power
    }

    /// `τ₁(P*^ℓ)` for `ℓ = 0..=n`.
    pub fn tau_powers(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut power = StochasticMatrix::identity(self.p_star.size());
        for _ in 0..=n {
            out.push(tau1(&power));
            power = power.mul(&self.p_star);
        }
        out
    }

    /// The marginal bound for every `n' ≤ n`, sharing one pass over the powers.
    pub fn marginal_bounds(&self, n: usize) -> Vec<f64> {
        let taus = self.tau_powers(n);
        let start = l1_distance(&self.y0, &self.sigma_star);
        let mut partial = 0.0;
        taus.iter()
            .map(|&t| {
                let bound = t * start + self.epsilon * partial;
                partial += t;
                bound
            })
            .collect()
    }

    /// Cap on `Υ(P*)` from `τ₁(P*^k) ≤ τ₁(P*^m̂)^⌊k/m̂⌋`.
    pub fn upsilon_cap(&self) -> f64 {
        let m = self.scrambling_power;
        m as f64 / (1.0 - tau1(&self.p_star.pow(m as u32)))
    }
}

/// `τ₁(P*ⁿ)·‖y(0) − σ*‖₁ + ε·Σ_{ℓ<n} τ₁(P*^ℓ)`.
pub fn lemma3_bound(chain: &PerturbedChain, n: usize) -> f64 {
    chain.marginal_bounds(n)[n]
}

const UPSILON_TERM_FLOOR: f64 = 1e-15;
const UPSILON_MAX_TERMS: usize = 1_000_000;

/// `Υ(P*) = Σ_ℓ τ₁(P*^ℓ)`, summed until terms drop below 1e-15 and capped
/// by [`PerturbedChain::upsilon_cap`].
pub fn upsilon(chain: &PerturbedChain) -> f64 {
    let cap = chain.upsilon_cap();
    let mut sum = 0.0f64;
    let mut power = StochasticMatrix::identity(chain.p_star.size());
    for _ in 0..UPSILON_MAX_TERMS {
        let term = tau1(&power);
        if term < UPSILON_TERM_FLOOR {
            return sum.min(cap);
        }
        sum += term;
        if sum >= cap {
            return cap;
        }
        power = power.mul(&chain.p_star);
    }
    cap
}

/// Outcome of evolving `y(n) = y(n−1)·P_{δ_n}` against the marginal bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCheck {
    pub steps: usize,
    pub violations: usize,
    /// Largest `‖y(n) − σ*‖₁ / bound(n)` seen (bound > 0 only).
    pub worst_ratio: f64,
}

/// Evolves the exact marginal of a time-inhomogeneous chain whose step-`n`
/// kernel is `kernel(n)` and compares it with the bound for each `n ≤ steps`.
pub fn check_marginal_bound(
    chain: &PerturbedChain,
    steps: usize,
    mut kernel: impl FnMut(usize) -> StochasticMatrix,
) -> MarginalCheck {
    let bounds = chain.marginal_bounds(steps);
    let mut y = chain.y0.clone();
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for (n, &bound) in bounds.iter().enumerate() {
        if n > 0 {
            y = kernel(n - 1).apply(&y);
        }
        let dist = l1_distance(&y, &chain.sigma_star);
        if dist > bound + 1e-12 {
            violations += 1;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(dist / bound);
        }
    }
    MarginalCheck {
        steps,
        violations,
        worst_ratio,
    }
}

/// A random stochastic matrix with every entry at least `floor`.
pub fn random_stochastic<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> StochasticMatrix {
    assert!(floor * n as f64 <= 1.0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let free = 1.0 - floor * n as f64;
            let mut row: Vec<f64> = raw.iter().map(|x| floor + free * x / s).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect();
    StochasticMatrix::from_rows(&rows).expect("normalized rows")
}

/// `P + D` where each row of `D` sums to zero and has L1 norm exactly
/// `radius`. The entries of `P` must be at least `radius / 2`.
pub fn random_perturbation<R: Rng + ?Sized>(
    p: &StochasticMatrix,
    radius: f64,
    rng: &mut R,
) -> StochasticMatrix {
    let n = p.size();
    let mut m = p.matrix().clone();
    if n < 2 || radius == 0.0 {
        return p.clone();
    }
    for i in 0..n {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let norm: f64 = centered.iter().map(|x| x.abs()).sum();
        if norm == 0.0 {
            continue;
        }
        for j in 0..n {
            m[(i, j)] = (m[(i, j)] + radius * centered[j] / norm).clamp(0.0, 1.0);
        }
        let s = m.row(i).sum();
        for j in 0..n {
            m[(i, j)] /= s;
        }
    }
    StochasticMatrix::new(m).expect("perturbation stays stochastic")
}
