//! Dense two-phase primal simplex with Bland's rule and incrementally
//! maintained reduced costs.
//!
//! Written for the modest, well-conditioned problems produced by the norm
//! computations in this crate: a few hundred variables and constraints,
//! dense rows, no presolve.

use std::fmt::Write as _;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Rel,
    pub rhs: f64,
}

/// A linear program over variables `x_0 .. x_{n-1}`; variables flagged in
/// `free` are unrestricted, the rest are nonnegative.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n_vars: usize,
    pub maximize: bool,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_vars: usize, maximize: bool, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), n_vars);
        LpProblem {
            n_vars,
            maximize,
            objective,
            constraints: Vec::new(),
            free: vec![false; n_vars],
        }
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Rel, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars);
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    /// Serialize in the classic LP file format, for external inspection.
    pub fn to_lp_format(&self) -> String {
        let mut s = String::new();
        s.push_str(if self.maximize { "Maximize\n obj:" } else { "Minimize\n obj:" });
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(s, " {} {} x{}", if *c < 0.0 { "-" } else { "+" }, c.abs(), j);
            }
        }
        s.push_str("\nSubject To\n");
        for (i, con) in self.constraints.iter().enumerate() {
            let _ = write!(s, " c{i}:");
            for (j, c) in con.coeffs.iter().enumerate() {
                if *c != 0.0 {
                    let _ = write!(s, " {} {} x{}", if *c < 0.0 { "-" } else { "+" }, c.abs(), j);
                }
            }
            let rel = match con.rel {
                Rel::Le => "<=",
                Rel::Ge => ">=",
                Rel::Eq => "=",
            };
            let _ = writeln!(s, " {rel} {}", con.rhs);
        }
        s.push_str("Bounds\n");
        for (j, f) in self.free.iter().enumerate() {
            if *f {
                let _ = writeln!(s, " x{j} free");
            }
        }
        s.push_str("End\n");
        s
    }
}

struct Tableau {
    m: usize,
    /// Columns: structural vars (free ones split), then slacks/artificials,
    /// then the right-hand side.
    cols: usize,
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[row].clone();
        for (r, current) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = current[col];
            if factor == 0.0 {
                continue;
            }
            for (v, pv) in current.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
        self.basis[row] = col;
    }

    /// Minimize `cost . x` from the current basic feasible point; returns
    /// false on unboundedness.  The reduced-cost row is maintained
    /// incrementally across pivots (with periodic recomputation to bound
    /// drift), so pricing is O(cols) per iteration.  Bland's rule picks the
    /// entering column, which guarantees termination under degeneracy.
    fn optimize(&mut self, cost: &[f64]) -> bool {
        const REFRESH: usize = 64;
        let recompute = |t: &Tableau| -> Vec<f64> {
            (0..t.cols)
                .map(|j| {
                    let mut v = cost[j];
                    for (r, &b) in t.basis.iter().enumerate() {
                        v -= cost[b] * t.rows[r][j];
                    }
                    v
                })
                .collect()
        };
        let mut red = recompute(self);
        let mut since_refresh = 0usize;
        loop {
            if since_refresh >= REFRESH {
                red = recompute(self);
                since_refresh = 0;
            }
            let entering = (0..self.cols).find(|&j| red[j] < -EPS);
            let Some(col) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.rows[r][col];
                if a > EPS {
                    let ratio = self.rows[r][self.cols] / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - EPS
                                || (ratio < lratio + EPS && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return false;
            };
            self.pivot(row, col);
            // After the pivot `rows[row]` holds the normalized pivot row, so
            // the reduced costs update by one elimination step.
            let rc = red[col];
            for (v, p) in red.iter_mut().zip(&self.rows[row]) {
                *v -= rc * p;
            }
            since_refresh += 1;
        }
    }
}

pub fn lp_solve(problem: &LpProblem) -> LpSolution {
    let n = problem.n_vars;
    // Split free variables: x_j = x_j+ - x_j-.
    let split: Vec<Option<usize>> = {
        let mut next = n;
        problem
            .free
            .iter()
            .map(|&f| {
                if f {
                    let c = next;
                    next += 1;
                    Some(c)
                } else {
                    None
                }
            })
            .collect()
    };
    let n_struct = n + split.iter().flatten().count();
    let m = problem.constraints.len();

    let n_slack = problem
        .constraints
        .iter()
        .filter(|c| c.rel != Rel::Eq)
        .count();
    let cols = n_struct + n_slack + m; // artificials for every row, some unused
    let mut t = Tableau {
        m,
        cols,
        rows: vec![vec![0.0; cols + 1]; m],
        basis: vec![usize::MAX; m],
    };

    let mut slack_at = n_struct;
    let art_base = n_struct + n_slack;
    let mut artificial_cols = Vec::new();
    for (i, con) in problem.constraints.iter().enumerate() {
        let flip = con.rhs < 0.0;
        let sgn = if flip { -1.0 } else { 1.0 };
        for (j, &c) in con.coeffs.iter().enumerate() {
            t.rows[i][j] = sgn * c;
            if let Some(neg) = split[j] {
                t.rows[i][neg] = -sgn * c;
            }
        }
        t.rows[i][cols] = sgn * con.rhs;
        let rel = match (con.rel, flip) {
            (Rel::Le, false) | (Rel::Ge, true) => Rel::Le,
            (Rel::Ge, false) | (Rel::Le, true) => Rel::Ge,
            (Rel::Eq, _) => Rel::Eq,
        };
        match rel {
            Rel::Le => {
                t.rows[i][slack_at] = 1.0;
                t.basis[i] = slack_at;
                slack_at += 1;
            }
            Rel::Ge => {
                t.rows[i][slack_at] = -1.0;
                slack_at += 1;
                let a = art_base + i;
                t.rows[i][a] = 1.0;
                t.basis[i] = a;
                artificial_cols.push(a);
            }
            Rel::Eq => {
                let a = art_base + i;
                t.rows[i][a] = 1.0;
                t.basis[i] = a;
                artificial_cols.push(a);
            }
        }
    }

    // Phase 1: minimize the artificial sum.
    if !artificial_cols.is_empty() {
        let mut cost = vec![0.0; cols];
        for &a in &artificial_cols {
            cost[a] = 1.0;
        }
        if !t.optimize(&cost) {
            // Phase 1 is bounded below by zero; unboundedness is numerical.
            return LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                x: vec![0.0; n],
            };
        }
        let phase1: f64 = t
            .basis
            .iter()
            .enumerate()
            .filter(|(_, b)| artificial_cols.contains(b))
            .map(|(r, _)| t.rows[r][cols])
            .sum();
        if phase1 > 1e-7 {
            return LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                x: vec![0.0; n],
            };
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if artificial_cols.contains(&t.basis[r]) {
                if let Some(col) = (0..art_base).find(|&j| t.rows[r][j].abs() > EPS) {
                    t.pivot(r, col);
                }
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; cols];
    for (j, &c) in problem.objective.iter().enumerate() {
        let v = if problem.maximize { -c } else { c };
        cost[j] = v;
        if let Some(neg) = split[j] {
            cost[neg] = -v;
        }
    }
    // Forbid re-entering artificial columns.
    for &a in &artificial_cols {
        cost[a] = 1e30;
    }
    if !t.optimize(&cost) {
        return LpSolution {
            status: LpStatus::Unbounded,
            value: if problem.maximize {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            x: vec![0.0; n],
        };
    }

    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.rows[r][cols];
        } else {
            for (j, s) in split.iter().enumerate() {
                if *s == Some(b) {
                    x[j] -= t.rows[r][cols];
                }
            }
        }
    }
    let value = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum();
    LpSolution {
        status: LpStatus::Optimal,
        value,
        x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_max() {
        // max x + y st x + 2y <= 4, 3x + y <= 6 -> (8/5, 6/5), value 14/5.
        let mut p = LpProblem::new(2, true, vec![1.0, 1.0]);
        p.add(vec![1.0, 2.0], Rel::Le, 4.0);
        p.add(vec![3.0, 1.0], Rel::Le, 6.0);
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 14.0 / 5.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free() {
        // min |t| style: min t st t >= x, t >= -x, x = 3 with x free.
        let mut p = LpProblem::new(2, false, vec![0.0, 1.0]);
        p.free[0] = true;
        p.free[1] = true;
        p.add(vec![-1.0, 1.0], Rel::Ge, 0.0);
        p.add(vec![1.0, 1.0], Rel::Ge, 0.0);
        p.add(vec![1.0, 0.0], Rel::Eq, -3.0);
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 3.0).abs() < 1e-9);
        assert!((s.x[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible() {
        let mut p = LpProblem::new(1, true, vec![1.0]);
        p.add(vec![1.0], Rel::Le, 1.0);
        p.add(vec![1.0], Rel::Ge, 2.0);
        assert_eq!(lp_solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded() {
        let mut p = LpProblem::new(1, true, vec![1.0]);
        p.add(vec![-1.0], Rel::Le, 1.0);
        assert_eq!(lp_solve(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_cycling_guard() {
        // Beale's classic cycling example; Bland's rule must terminate.
        let mut p = LpProblem::new(4, false, vec![-0.75, 150.0, -0.02, 6.0]);
        p.add(vec![0.25, -60.0, -0.04, 9.0], Rel::Le, 0.0);
        p.add(vec![0.5, -90.0, -0.02, 3.0], Rel::Le, 0.0);
        p.add(vec![0.0, 0.0, 1.0, 0.0], Rel::Le, 1.0);
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value + 0.05).abs() < 1e-9);
    }

    /// Oracle: enumerate all basic solutions of `A x <= b, x >= 0` by
    /// solving square subsystems of active constraints, keep the feasible
    /// ones, and take the best objective value.
    fn vertex_oracle(p: &LpProblem) -> Option<f64> {
        let n = p.n_vars;
        // Build the full inequality system: constraint rows plus x_j >= 0.
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &p.constraints {
            match c.rel {
                Rel::Le => rows.push((c.coeffs.clone(), c.rhs)),
                Rel::Ge => rows.push((c.coeffs.iter().map(|v| -v).collect(), -c.rhs)),
                Rel::Eq => {
                    rows.push((c.coeffs.clone(), c.rhs));
                    rows.push((c.coeffs.iter().map(|v| -v).collect(), -c.rhs));
                }
            }
        }
        for j in 0..n {
            if !p.free[j] {
                let mut r = vec![0.0; n];
                r[j] = -1.0;
                rows.push((r, 0.0));
            }
        }
        let idx: Vec<usize> = (0..rows.len()).collect();
        let mut best: Option<f64> = None;
        let mut comb = vec![0usize; n];
        fn for_each_comb(
            idx: &[usize],
            k: usize,
            start: usize,
            comb: &mut Vec<usize>,
            f: &mut impl FnMut(&[usize]),
        ) {
            if comb.len() == k {
                f(comb);
                return;
            }
            for i in start..idx.len() {
                comb.push(idx[i]);
                for_each_comb(idx, k, i + 1, comb, f);
                comb.pop();
            }
        }
        comb.clear();
        for_each_comb(&idx, n, 0, &mut comb, &mut |chosen| {
            // Solve the square system by Gaussian elimination.
            let mut a: Vec<Vec<f64>> = chosen.iter().map(|&i| rows[i].0.clone()).collect();
            let mut b: Vec<f64> = chosen.iter().map(|&i| rows[i].1).collect();
            let mut x = vec![0.0; n];
            let mut singular = false;
            for col in 0..n {
                let piv = (col..n).max_by(|&r1, &r2| {
                    a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap()
                });
                let piv = piv.unwrap();
                if a[piv][col].abs() < 1e-10 {
                    singular = true;
                    break;
                }
                a.swap(col, piv);
                b.swap(col, piv);
                for r in 0..n {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        for c in 0..n {
                            a[r][c] -= f * a[col][c];
                        }
                        b[r] -= f * b[col];
                    }
                }
            }
            if singular {
                return;
            }
            for col in 0..n {
                x[col] = b[col] / a[col][col];
            }
            let feasible = rows.iter().all(|(coef, rhs)| {
                coef.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() <= rhs + 1e-7
            });
            if feasible {
                let val: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(match best {
                    None => val,
                    Some(b) => {
                        if p.maximize {
                            b.max(val)
                        } else {
                            b.min(val)
                        }
                    }
                });
            }
        });
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut solved = 0;
        for _ in 0..60 {
            let n = rng.gen_range(2..4);
            let m = rng.gen_range(2..5);
            let mut p = LpProblem::new(n, rng.gen_bool(0.5), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
            for _ in 0..m {
                let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                p.add(coeffs, Rel::Le, rng.gen_range(0.5..3.0));
            }
            // rhs > 0 with x >= 0 keeps the origin feasible; bound the box
            // so the oracle and solver both see a compact region.
            for j in 0..n {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                p.add(r, Rel::Le, 10.0);
            }
            let s = lp_solve(&p);
            assert_eq!(s.status, LpStatus::Optimal);
            let oracle = vertex_oracle(&p).expect("oracle found a vertex");
            assert!(
                (s.value - oracle).abs() < 1e-6,
                "simplex {} vs oracle {}",
                s.value,
                oracle
            );
            solved += 1;
        }
        assert_eq!(solved, 60);
    }

    #[test]
    fn lp_format_dump() {
        let mut p = LpProblem::new(2, true, vec![1.0, -1.0]);
        p.free[1] = true;
        p.add(vec![1.0, 1.0], Rel::Le, 2.0);
        let s = p.to_lp_format();
        assert!(s.contains("Maximize"));
        assert!(s.contains("x1 free"));
        assert!(s.contains("<= 2"));
    }
}
