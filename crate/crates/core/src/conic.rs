//! Solver-agnostic conic program record and the backends that solve it.
//!
//! A program maximizes a linear objective subject to affine expressions lying
//! in cones. Backends only see this record, so swapping solvers is a
//! configuration change.

use std::fmt;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sum_i coeff_i * x_i + constant`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, c: f64) -> Self {
        Self {
            terms: vec![(i, c)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, i: usize, c: f64) -> Self {
        self.terms.push((i, c));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Every row equals zero.
    Zero,
    /// Every row is nonnegative.
    Nonneg,
    /// `rows[0] >= ||rows[1..]||`.
    SecondOrder,
    /// `(r0, r1, r2)` with `r1 * exp(r0 / r1) <= r2`, `r1 > 0`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub cone: Cone,
    pub rows: Vec<LinExpr>,
}

impl ConeConstraint {
    /// Largest violation of the membership; `<= 0` when satisfied.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = self.rows.iter().map(|e| e.eval(x)).collect();
        match self.cone {
            Cone::Zero => r.iter().fold(0.0, |m, v| m.max(v.abs())),
            Cone::Nonneg => r.iter().fold(f64::NEG_INFINITY, |m, v| m.max(-v)),
            Cone::SecondOrder => r[1..].iter().map(|v| v * v).sum::<f64>().sqrt() - r[0],
            Cone::Exponential => {
                if r[1] > 0.0 {
                    r[1] * (r[0] / r[1]).exp() - r[2]
                } else {
                    // closure of the cone at r1 = 0
                    (-r[1]).max(r[0]).max(-r[2])
                }
            }
        }
    }
}

/// `maximize objective(x)` subject to every constraint.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub names: Vec<String>,
    pub objective: LinExpr,
    pub constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn push(&mut self, cone: Cone, rows: Vec<LinExpr>) {
        self.constraints.push(ConeConstraint { cone, rows });
    }

    /// `lhs >= rhs`
    pub fn geq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        let mut e = lhs;
        e.terms.extend(rhs.terms.iter().map(|&(i, c)| (i, -c)));
        e.constant -= rhs.constant;
        self.push(Cone::Nonneg, vec![e]);
    }

    pub fn eq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        let mut e = lhs;
        e.terms.extend(rhs.terms.iter().map(|&(i, c)| (i, -c)));
        e.constant -= rhs.constant;
        self.push(Cone::Zero, vec![e]);
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.residual(x)).collect()
    }

    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.residuals(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective of the maximization at `x`.
    pub objective: f64,
}

pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution>;
}

/// Which backend to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverBackend {
    #[default]
    Clarabel,
}

impl SolverBackend {
    pub fn instantiate(self) -> Box<dyn ConicSolver + Send + Sync> {
        match self {
            Self::Clarabel => Box::new(ClarabelBackend::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

impl ConicSolver for ClarabelBackend {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution> {
        let n = program.num_vars();
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        // s = b - A x; our rows are r = a x + c, so A = -a and b = c
        for con in &program.constraints {
            for row in &con.rows {
                let r = b.len();
                for &(j, c) in &row.terms {
                    ii.push(r);
                    jj.push(j);
                    vv.push(-c);
                }
                b.push(row.constant);
            }
            let m = con.rows.len();
            let cone = match con.cone {
                Cone::Zero => SupportedConeT::ZeroConeT(m),
                Cone::Nonneg => SupportedConeT::NonnegativeConeT(m),
                Cone::SecondOrder => SupportedConeT::SecondOrderConeT(m),
                Cone::Exponential => {
                    if m != 3 {
                        return Err(Error::Solver(format!(
                            "exponential cone needs 3 rows, got {m}"
                        )));
                    }
                    SupportedConeT::ExponentialConeT()
                }
            };
            cones.push(cone);
        }
        let a = CscMatrix::new_from_triplets(b.len(), n, ii, jj, vv);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(j, c) in &program.objective.terms {
            q[j] -= c;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
            .map_err(|e| Error::Solver(e.to_string()))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            other => {
                log::debug!("clarabel stopped with {other:?}");
                SolveStatus::NumericalFailure
            }
        };
        let x = sol.x.clone();
        let objective = program.objective.eval(&x);
        Ok(ConicSolution {
            status,
            x,
            objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &ConicProgram) -> ConicSolution {
        ClarabelBackend::default().solve(p).unwrap()
    }

    #[test]
    fn lp_vertex() {
        // max x + y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2)
        let mut p = ConicProgram::default();
        let x = p.add_var("x");
        let y = p.add_var("y");
        p.objective = LinExpr::var(x).add(y, 1.0);
        p.geq(LinExpr::constant(4.0), LinExpr::var(x).add(y, 2.0));
        p.geq(LinExpr::constant(6.0), LinExpr::term(x, 3.0).add(y, 1.0));
        p.geq(LinExpr::var(x), LinExpr::default());
        p.geq(LinExpr::var(y), LinExpr::default());
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[x] - 1.6).abs() < 1e-6 && (s.x[y] - 1.2).abs() < 1e-6);
        assert!((s.objective - 2.8).abs() < 1e-6);
    }

    #[test]
    fn second_order_cone_disc() {
        // max x + y  on the unit disc -> sqrt(2)
        let mut p = ConicProgram::default();
        let x = p.add_var("x");
        let y = p.add_var("y");
        p.objective = LinExpr::var(x).add(y, 1.0);
        p.push(
            Cone::SecondOrder,
            vec![LinExpr::constant(1.0), LinExpr::var(x), LinExpr::var(y)],
        );
        let s = solve(&p);
        assert!((s.objective - 2f64.sqrt()).abs() < 1e-6);
        assert!(p.max_residual(&s.x) < 1e-6);
    }

    #[test]
    fn exponential_cone_log() {
        // max t  s.t. t <= ln(1 + x), x <= e - 1  -> 1
        let mut p = ConicProgram::default();
        let t = p.add_var("t");
        let x = p.add_var("x");
        p.objective = LinExpr::var(t);
        p.push(
            Cone::Exponential,
            vec![
                LinExpr::var(t),
                LinExpr::constant(1.0),
                LinExpr::var(x).plus(1.0),
            ],
        );
        p.geq(
            LinExpr::constant(std::f64::consts::E - 1.0),
            LinExpr::var(x),
        );
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[t] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x");
        p.objective = LinExpr::var(x);
        p.geq(LinExpr::var(x), LinExpr::constant(2.0));
        p.geq(LinExpr::constant(1.0), LinExpr::var(x));
        assert_eq!(solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn residual_semantics() {
        let c = ConeConstraint {
            cone: Cone::SecondOrder,
            rows: vec![
                LinExpr::constant(5.0),
                LinExpr::constant(3.0),
                LinExpr::constant(4.0),
            ],
        };
        assert_eq!(c.residual(&[]), 0.0);
        let c = ConeConstraint {
            cone: Cone::Exponential,
            rows: vec![
                LinExpr::constant(0.0),
                LinExpr::constant(1.0),
                LinExpr::constant(2.0),
            ],
        };
        assert_eq!(c.residual(&[]), -1.0);
        let c = ConeConstraint {
            cone: Cone::Nonneg,
            rows: vec![LinExpr::constant(-0.5)],
        };
        assert_eq!(c.residual(&[]), 0.5);
    }
}
