//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Solves `min c·x` subject to equality rows, `≥` rows and `x ≥ 0`. Every
//! `≥` row gets a surplus column and every row an artificial column; phase 1
//! minimizes the artificial sum, phase 2 the real objective over the
//! remaining columns.

use super::LpError;

/// Absolute tolerance on reduced costs, feasibility and phase-1 residue.
pub const TOLERANCE: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-11;
const ITERATION_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// `min c·x` s.t. `A_eq x = b_eq`, `A_ge x ≥ b_ge`, `x ≥ 0`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp {
    pub objective: Vec<f64>,
    pub equalities: Vec<Constraint>,
    pub lower_bounds: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
    /// Nonbasic columns whose reduced cost is zero at the optimum. Zero means
    /// the optimal vertex is the unique optimizer.
    pub zero_reduced_costs: usize,
}

struct Tableau {
    rows: usize,
    width: usize, // columns + rhs
    cells: Vec<f64>,
    objective: Vec<f64>, // reduced costs, last entry = -value
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.cells[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<(), LpError> {
        self.pivots += 1;
        if self.pivots > ITERATION_CAP {
            return Err(LpError::IterationCap(ITERATION_CAP));
        }
        let w = self.width;
        let p = self.cells[row * w + col];
        for v in &mut self.cells[row * w..(row + 1) * w] {
            *v /= p;
        }
        self.cells[row * w + col] = 1.0;
        let pivot_row: Vec<f64> = self.cells[row * w..(row + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.cells[i * w + col];
            if f == 0.0 {
                continue;
            }
            let r = &mut self.cells[i * w..(i + 1) * w];
            for (v, &pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
            if r[w - 1] < 0.0 && r[w - 1] > -TOLERANCE {
                r[w - 1] = 0.0;
            }
        }
        let f = self.objective[col];
        if f != 0.0 {
            for (v, &pv) in self.objective.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.objective[col] = 0.0;
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Bland's rule: lowest-index improving column enters; among rows tied on
    /// the ratio test, the one whose basic variable has the lowest index leaves.
    fn optimize(&mut self, allowed: &[bool]) -> Result<(), LpError> {
        loop {
            let Some(col) = (0..self.width - 1).find(|&j| allowed[j] && self.objective[j] < -TOLERANCE)
            else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let slack = 1e-12 * (1.0 + br.abs());
                        if ratio < br - slack
                            || (ratio <= br + slack && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((row, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col)?;
        }
    }

    fn remove_row(&mut self, row: usize) {
        let w = self.width;
        self.cells.drain(row * w..(row + 1) * w);
        self.basis.remove(row);
        self.rows -= 1;
    }

    fn load_objective(&mut self, costs: &[f64]) {
        let w = self.width;
        self.objective = costs.to_vec();
        self.objective.push(0.0);
        for i in 0..self.rows {
            let cb = costs[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                self.objective[j] -= cb * self.cells[i * w + j];
            }
        }
    }
}

pub fn solve(lp: &StandardLp) -> Result<Outcome, LpError> {
    let n = lp.objective.len();
    for row in lp.equalities.iter().chain(&lp.lower_bounds) {
        if row.coeffs.len() != n {
            return Err(LpError::Dimension {
                expected: n,
                got: row.coeffs.len(),
            });
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite);
        }
    }
    if lp.objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::NonFinite);
    }

    let n_ge = lp.lower_bounds.len();
    let rows = lp.equalities.len() + n_ge;
    let first_artificial = n + n_ge;
    let cols = first_artificial + rows;
    let width = cols + 1;
    let mut cells = vec![0.0; rows * width];
    for (i, c) in lp.equalities.iter().chain(&lp.lower_bounds).enumerate() {
        let r = &mut cells[i * width..(i + 1) * width];
        r[..n].copy_from_slice(&c.coeffs);
        if i >= lp.equalities.len() {
            r[n + i - lp.equalities.len()] = -1.0;
        }
        r[cols] = c.rhs;
        if c.rhs < 0.0 {
            for v in r.iter_mut() {
                *v = -*v;
            }
        }
        r[first_artificial + i] = 1.0;
    }
    let mut t = Tableau {
        rows,
        width,
        cells,
        objective: Vec::new(),
        basis: (first_artificial..cols).collect(),
        pivots: 0,
    };

    // phase 1
    let mut phase1 = vec![0.0; cols];
    phase1[first_artificial..].fill(1.0);
    t.load_objective(&phase1);
    let everything = vec![true; cols];
    t.optimize(&everything)?;
    let residue = -t.objective[cols];
    let scale = 1.0
        + lp.equalities
            .iter()
            .chain(&lp.lower_bounds)
            .map(|c| c.rhs.abs())
            .fold(0.0, f64::max);
    if residue > TOLERANCE * scale {
        return Ok(Outcome {
            status: Status::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            pivots: t.pivots,
            zero_reduced_costs: 0,
        });
    }

    // drive remaining artificials out of the basis, dropping redundant rows
    let mut i = 0;
    while i < t.rows {
        if t.basis[i] >= first_artificial {
            match (0..first_artificial).find(|&j| t.at(i, j).abs() > TOLERANCE) {
                Some(j) => {
                    t.pivot(i, j)?;
                    i += 1;
                }
                None => t.remove_row(i),
            }
        } else {
            i += 1;
        }
    }

    // phase 2
    let mut costs = vec![0.0; cols];
    costs[..n].copy_from_slice(&lp.objective);
    t.load_objective(&costs);
    let mut allowed = vec![true; cols];
    allowed[first_artificial..].fill(false);
    t.optimize(&allowed)?;

    let mut x = vec![0.0; n];
    let mut basic = vec![false; cols];
    for row in 0..t.rows {
        let j = t.basis[row];
        basic[j] = true;
        if j < n {
            x[j] = t.rhs(row).max(0.0);
        }
    }
    let zero_reduced_costs = (0..first_artificial)
        .filter(|&j| !basic[j] && t.objective[j].abs() <= TOLERANCE)
        .count();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Outcome {
        status: Status::Optimal,
        x,
        objective,
        pivots: t.pivots,
        zero_reduced_costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[f64], rhs: f64) -> Constraint {
        Constraint {
            coeffs: coeffs.to_vec(),
            rhs,
        }
    }

    #[test]
    fn small_textbook_problem() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let lp = StandardLp {
            objective: vec![-1.0, -1.0, 0.0, 0.0],
            equalities: vec![row(&[1.0, 2.0, 1.0, 0.0], 4.0), row(&[3.0, 1.0, 0.0, 1.0], 6.0)],
            lower_bounds: vec![],
        };
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.objective + 2.8).abs() < 1e-12);
        assert!((out.x[0] - 1.6).abs() < 1e-12 && (out.x[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x = 1, x ≥ 2
        let lp = StandardLp {
            objective: vec![0.0],
            equalities: vec![row(&[1.0], 1.0)],
            lower_bounds: vec![row(&[1.0], 2.0)],
        };
        assert_eq!(solve(&lp).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let lp = StandardLp {
            objective: vec![-1.0],
            equalities: vec![],
            lower_bounds: vec![row(&[1.0], 1.0)],
        };
        assert!(matches!(solve(&lp), Err(LpError::Unbounded)));
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        // x + y = 1 twice, min x + 2y
        let lp = StandardLp {
            objective: vec![1.0, 2.0],
            equalities: vec![row(&[1.0, 1.0], 1.0), row(&[2.0, 2.0], 2.0)],
            lower_bounds: vec![],
        };
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        // -x ≥ -3 (x ≤ 3), min -x
        let lp = StandardLp {
            objective: vec![-1.0],
            equalities: vec![],
            lower_bounds: vec![row(&[-1.0], -3.0)],
        };
        let out = solve(&lp).unwrap();
        assert!((out.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Beale's example cycles under Dantzig's rule without anti-cycling.
        // min -3/4 x4 + 20 x5 - 1/2 x6 + 6 x7
        let lp = StandardLp {
            objective: vec![0.0, 0.0, 0.0, -0.75, 20.0, -0.5, 6.0],
            equalities: vec![
                row(&[1.0, 0.0, 0.0, 0.25, -8.0, -1.0, 9.0], 0.0),
                row(&[0.0, 1.0, 0.0, 0.5, -12.0, -0.5, 3.0], 0.0),
                row(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0], 1.0),
            ],
            lower_bounds: vec![],
        };
        let out = solve(&lp).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.objective + 1.25).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lp = StandardLp {
            objective: vec![1.0, 1.0],
            equalities: vec![row(&[1.0], 1.0)],
            lower_bounds: vec![],
        };
        assert!(matches!(solve(&lp), Err(LpError::Dimension { .. })));
    }
}
