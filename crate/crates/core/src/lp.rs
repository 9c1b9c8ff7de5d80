//! Dense two-phase simplex for small linear programs of the form
//!
//!   minimize c^T x  subject to  A x <= b,  x >= 0
//!
//! with `b` of arbitrary sign. Pivoting uses Bland's rule throughout, which
//! rules out cycling at the cost of speed; the programs solved here have a
//! few dozen columns and at most a few hundred rows.
//!
//! The optimal dual `y <= 0` (for `max b^T y s.t. A^T y <= c`) is read off
//! the slack reduced costs and used to certify the duality gap.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
/// Reduced costs above `-OPT_TOL` count as nonnegative.
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual multipliers, one per constraint, all `<= 0`.
    pub dual: Vec<f64>,
    pub duality_gap: f64,
    /// Largest violation of `A^T y <= c` by the recovered dual.
    pub dual_infeasibility: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry holds `-z`.
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in &mut self.rows[r] {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs simplex iterations on the current objective row until no allowed
    /// column has a negative reduced cost or the objective drops to `floor`.
    fn optimize(&mut self, allowed: &[bool], floor: f64) -> Result<()> {
        let rhs = self.width;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Lp("pivot limit reached".into()));
            }
            if -self.obj[rhs] <= floor {
                return Ok(());
            }
            let Some(enter) = (0..self.width).find(|&j| allowed[j] && self.obj[j] < -OPT_TOL)
            else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = row[rhs] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-14
                            || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                        {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            self.pivot(r, enter);
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    if lp.rhs.len() != m || lp.constraints.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("inconsistent problem dimensions".into()));
    }
    let flipped: Vec<bool> = lp.rhs.iter().map(|&b| b < 0.0).collect();
    let n_art = flipped.iter().filter(|&&f| f).count();
    let width = n + m + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = n + m;
    for i in 0..m {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width + 1];
        for (j, &a) in lp.constraints[i].iter().enumerate() {
            row[j] = sign * a;
        }
        row[n + i] = sign;
        row[width] = sign * lp.rhs[i];
        if flipped[i] {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; width + 1];
    for j in n + m..width {
        obj[j] = 1.0;
    }
    for (i, row) in rows.iter().enumerate() {
        if flipped[i] {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= v;
            }
        }
    }
    let mut t = Tableau {
        rows,
        obj,
        basis,
        width,
        pivots: 0,
    };
    let is_art = |j: usize| j >= n + m;
    if n_art > 0 {
        let allowed = vec![true; width];
        // the phase-one objective is a sum of nonnegative artificials
        t.optimize(&allowed, FEAS_TOL * 1e-3)?;
        let infeasibility = -t.obj[width];
        if infeasibility > FEAS_TOL {
            return Err(Error::Lp(format!(
                "infeasible (phase-one objective {infeasibility:e})"
            )));
        }
        // drive remaining artificials out of the basis
        let mut i = 0;
        while i < t.rows.len() {
            if is_art(t.basis[i]) {
                match (0..n + m).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    // phase 2
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(&lp.objective);
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        let cb = if b < n { lp.objective[b] } else { 0.0 };
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= cb * v;
            }
        }
    }
    t.obj = obj;
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    t.optimize(&allowed, f64::NEG_INFINITY)?;

    let mut x = vec![0.0; n];
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < n {
            x[b] = row[width].max(0.0);
        }
    }
    let objective: f64 = x.iter().zip(&lp.objective).map(|(a, c)| a * c).sum();
    let dual: Vec<f64> = (0..m).map(|i| (-t.obj[n + i]).min(0.0)).collect();
    let dual_objective: f64 = dual.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
    let dual_infeasibility = (0..n)
        .map(|j| {
            let aty: f64 = (0..m).map(|i| lp.constraints[i][j] * dual[i]).sum();
            (aty - lp.objective[j]).max(0.0)
        })
        .fold(0.0f64, f64::max);
    Ok(LpSolution {
        x,
        objective,
        dual,
        duality_gap: (objective - dual_objective).abs(),
        dual_infeasibility,
        pivots: t.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            constraints: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            rhs: vec![4.0, 12.0, 18.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
        assert!((sol.objective + 36.0).abs() < 1e-12);
        assert!(sol.duality_gap < 1e-12);
        assert!(sol.dual_infeasibility < 1e-12);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // min x + y s.t. x + y >= 2 (i.e. -x - y <= -2), x <= 3
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            constraints: vec![vec![-1.0, -1.0], vec![1.0, 0.0]],
            rhs: vec![-2.0, 3.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
        assert!(sol.duality_gap < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            objective: vec![1.0],
            constraints: vec![vec![1.0], vec![-1.0]],
            rhs: vec![1.0, -2.0],
        };
        assert!(matches!(solve(&infeasible), Err(Error::Lp(_))));
        let unbounded = LinearProgram {
            objective: vec![-1.0],
            constraints: vec![vec![-1.0]],
            rhs: vec![0.0],
        };
        assert!(matches!(solve(&unbounded), Err(Error::Lp(_))));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // a classic cycling example under Dantzig's rule (Beale)
        let lp = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            constraints: vec![
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            rhs: vec![0.0, 0.0, 1.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-12);
        assert!(sol.duality_gap < 1e-12);
    }
}
