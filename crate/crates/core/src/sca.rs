//! Power and slot allocation by successive convex approximation.
//!
//! For a fixed slot split every SINR term `t` gets a lower-bound variable
//! `x_t` and an interference upper-bound variable `g_t`. The bilinear
//! constraint `x_t * g_t <= gain_t * P` is replaced by its AGM surrogate
//! `(phi x)^2 + (g / phi)^2 <= 2 gain_t P`, a second-order cone, and
//! `log2(1 + x)` is handled by an exponential cone or a piecewise-linear
//! envelope. Powers are normalized by the largest budget and each term by
//! its own noise level so the program stays well scaled.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::MrcCoefficients;
use crate::config::SystemConfig;
use crate::conic::{Cone, ConicProgram, ConicSolver, LinExpr, SolveStatus, SolverBackend};
use crate::error::{Error, Result};
use crate::rates::{InterferenceMode, LinkModel, QosThresholds, RateReport};
use crate::streams::{DecodingOrder, PowerAllocation, StreamId, StreamKind, StreamLayout};

/// SINR below which a term's AGM scale is computed from this floor instead.
const SINR_FLOOR: f64 = 1e-8;

/// Extra rate the restoration phase aims for above each QoS threshold.
const RESTORE_MARGIN: f64 = 1e-6;

/// `(a x)^2 + (y / a)^2`, an upper bound on `2 x y`.
pub fn agm_upper_bound(x: f64, y: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidAgmScale(a));
    }
    Ok((a * x).powi(2) + (y / a).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogModel {
    ExponentialCone,
    /// Chords of `log2(1 + x)` on geometric breakpoints up to the largest
    /// SINR the budgets allow.
    PiecewiseLinear {
        segments: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaSettings {
    pub eps: f64,
    pub max_iterations: usize,
    pub log_model: LogModel,
    pub backend: SolverBackend,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iterations: 30,
            log_model: LogModel::ExponentialCone,
            backend: SolverBackend::Clarabel,
        }
    }
}

/// AGM scale per SINR term, in term order of the [`LinkModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    pub phi: Vec<f64>,
    pub iteration: usize,
}

impl SurrogateState {
    pub fn uniform(terms: usize, phi: f64) -> Self {
        Self {
            phi: vec![phi; terms],
            iteration: 0,
        }
    }
}

/// One power allocation problem: a layout with fixed order, budgets and QoS.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    /// Rates used by the optimizer, always with static inter-pair interference.
    pub model: LinkModel,
    pub p_u_max: f64,
    pub p_v_max: f64,
    pub qos: QosThresholds,
    pub settings: ScaSettings,
    pub delta_grid: Vec<f64>,
}

impl PowerProblem {
    pub fn new(
        layout: &StreamLayout,
        coeffs: &MrcCoefficients,
        order: &DecodingOrder,
        config: &SystemConfig,
    ) -> Result<Self> {
        Ok(Self {
            model: LinkModel::build(layout, coeffs, order, InterferenceMode::StaticIpi)?,
            p_u_max: config.p_u_max(),
            p_v_max: config.p_v_max(),
            qos: QosThresholds {
                ccu: config.r_th_u,
                ceu: config.r_th_v,
            },
            settings: ScaSettings {
                eps: config.eps,
                max_iterations: config.max_iterations,
                ..ScaSettings::default()
            },
            delta_grid: config.delta_grid.clone(),
        })
    }

    pub fn layout(&self) -> &StreamLayout {
        &self.model.layout
    }

    fn budget_of(&self, s: StreamId) -> f64 {
        match s.kind {
            StreamKind::CcuSub(_) | StreamKind::Relay(_) => self.p_u_max,
            StreamKind::CeuDirect(_) => self.p_v_max,
        }
    }

    fn p_ref(&self) -> f64 {
        let m = self.p_u_max.max(self.p_v_max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// Starting point: a quarter of each budget, split evenly over the
    /// streams that budget funds.
    pub fn initial_powers(&self, delta: f64) -> PowerAllocation {
        let layout = self.layout();
        let mut pa = PowerAllocation::zeros(layout.len(), delta);
        for l in 0..layout.len() {
            let u = layout.ccu_streams(l);
            for &s in &u {
                pa.set(s, 0.25 * self.p_u_max / u.len() as f64);
            }
            let v = layout.ceu_streams(l);
            for &s in &v {
                pa.set(s, 0.25 * self.p_v_max / v.len() as f64);
            }
        }
        pa
    }

    /// Normalized SINR and interference of every term at `pa`.
    fn true_state(&self, pa: &PowerAllocation) -> (Vec<f64>, Vec<f64>) {
        self.model
            .terms
            .iter()
            .map(|t| {
                let g = t.interference_power(pa) / t.noise;
                (t.sinr(pa), g)
            })
            .unzip()
    }

    /// AGM scales at which the surrogate is tight for `pa`.
    pub fn tight_surrogate(&self, pa: &PowerAllocation, iteration: usize) -> SurrogateState {
        let (x, g) = self.true_state(pa);
        SurrogateState {
            phi: x
                .iter()
                .zip(&g)
                .map(|(&x, &g)| (g / x.max(SINR_FLOOR)).sqrt())
                .collect(),
            iteration,
        }
    }

    pub fn evaluate(&self, pa: &PowerAllocation) -> RateReport {
        self.model.evaluate(pa, self.qos)
    }
}

/// Variable counts by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VariableCensus {
    pub lambda_u: usize,
    pub lambda_v: usize,
    pub powers: usize,
    /// SINR bounds of CCU sub-messages.
    pub alpha: usize,
    /// SINR bounds of CEU messages at the BS, direct and relayed.
    pub beta: usize,
    /// SINR bounds of CEU messages at the paired CCU.
    pub omega: usize,
    /// Interference bounds matching `alpha`.
    pub gamma: usize,
    /// Interference bounds matching `beta`.
    pub mu: usize,
    /// Interference bounds matching `omega`.
    pub eta: usize,
    /// Epigraph variables of the log terms.
    pub log_aux: usize,
}

/// A built program together with the meaning of its variables.
#[derive(Debug, Clone)]
pub struct ScaProgram {
    pub program: ConicProgram,
    pub p_ref: f64,
    pub streams: Vec<StreamId>,
    pub power_var: Vec<usize>,
    pub x_var: Vec<usize>,
    pub g_var: Vec<usize>,
    pub rho_var: Vec<usize>,
    pub lambda_u: Vec<usize>,
    /// Per pair, one variable per CEU message part.
    pub lambda_v: Vec<Vec<usize>>,
    /// Terms whose SINR is pinned to zero (no gain or no budget).
    pub dead: Vec<bool>,
    pub census: VariableCensus,
    /// QoS shortfall variables of the elastic program.
    pub shortfall: Vec<usize>,
}

impl ScaProgram {
    pub fn powers(&self, x: &[f64], delta: f64) -> PowerAllocation {
        let pairs = self.lambda_u.len();
        let mut pa = PowerAllocation::zeros(pairs, delta);
        for (s, &v) in self.streams.iter().zip(&self.power_var) {
            pa.set(*s, (x[v] * self.p_ref).max(0.0));
        }
        pa
    }

    /// Assemble a variable vector from physical powers and term values.
    pub fn point(
        &self,
        pa: &PowerAllocation,
        sinr: &[f64],
        interference: &[f64],
        rho: &[f64],
        lambda_u: &[f64],
        lambda_v: &[Vec<f64>],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.program.num_vars()];
        for (s, &v) in self.streams.iter().zip(&self.power_var) {
            x[v] = pa.get(*s) / self.p_ref;
        }
        for t in 0..self.x_var.len() {
            x[self.x_var[t]] = sinr[t];
            x[self.g_var[t]] = interference[t];
            x[self.rho_var[t]] = rho[t];
        }
        for (l, &v) in self.lambda_u.iter().enumerate() {
            x[v] = lambda_u[l];
        }
        for (l, parts) in self.lambda_v.iter().enumerate() {
            for (i, &v) in parts.iter().enumerate() {
                x[v] = lambda_v[l][i];
            }
        }
        x
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Build the convex surrogate for slot fraction `delta` around `surr`.
pub fn build_socp(problem: &PowerProblem, delta: f64, surr: &SurrogateState) -> Result<ScaProgram> {
    build_program(problem, delta, surr, false)
}

/// With `elastic`, every QoS constraint gets a nonnegative shortfall
/// variable and the objective becomes the negated total shortfall.
fn build_program(
    problem: &PowerProblem,
    delta: f64,
    surr: &SurrogateState,
    elastic: bool,
) -> Result<ScaProgram> {
    let layout = problem.layout();
    if layout.cooperative && !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let model = &problem.model;
    if surr.phi.len() != model.terms.len() {
        return Err(Error::InvalidConfig(format!(
            "surrogate has {} scales for {} terms",
            surr.phi.len(),
            model.terms.len()
        )));
    }
    if let Some(&bad) = surr.phi.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidAgmScale(bad));
    }
    let p_ref = problem.p_ref();
    let mut prog = ConicProgram::default();
    let mut census = VariableCensus::default();

    let streams = layout.streams();
    let power_var: Vec<usize> = streams
        .iter()
        .map(|s| prog.add_var(format!("P[{s}]")))
        .collect();
    census.powers = streams.len();
    let index = |s: StreamId| streams.iter().position(|&x| x == s).expect("layout stream");
    for &v in &power_var {
        prog.geq(LinExpr::var(v), LinExpr::default());
    }
    for l in 0..layout.len() {
        for (members, budget) in [
            (layout.ccu_streams(l), problem.p_u_max),
            (layout.ceu_streams(l), problem.p_v_max),
        ] {
            let mut sum = LinExpr::default();
            for s in members {
                sum = sum.add(power_var[index(s)], 1.0);
            }
            prog.geq(LinExpr::constant(budget / p_ref), sum);
        }
    }

    let n_terms = model.terms.len();
    let (mut x_var, mut g_var, mut rho_var, mut dead) = (
        Vec::with_capacity(n_terms),
        Vec::with_capacity(n_terms),
        Vec::with_capacity(n_terms),
        Vec::with_capacity(n_terms),
    );
    for (t, term) in model.terms.iter().enumerate() {
        let x = prog.add_var(format!("x[{t}]"));
        let g = prog.add_var(format!("g[{t}]"));
        let rho = prog.add_var(format!("rho[{t}]"));
        x_var.push(x);
        g_var.push(g);
        rho_var.push(rho);
        let budget = problem.budget_of(term.signal);
        let gain = term.gain * p_ref / term.noise;
        let is_dead = !(gain > 0.0 && budget > 0.0);
        dead.push(is_dead);

        // g >= 1 + sum c' p'
        let mut rhs = LinExpr::constant(1.0);
        for &(s, c) in &term.interference {
            rhs = rhs.add(power_var[index(s)], c * p_ref / term.noise);
        }
        prog.geq(LinExpr::var(g), rhs);
        prog.geq(LinExpr::var(x), LinExpr::default());

        if is_dead {
            prog.eq(LinExpr::var(x), LinExpr::default());
        } else {
            // (phi x)^2 + (g / phi)^2 <= 2 w  with  w = gain p
            let phi = surr.phi[t];
            let p = power_var[index(term.signal)];
            let s2 = std::f64::consts::SQRT_2;
            prog.push(
                Cone::SecondOrder,
                vec![
                    LinExpr::term(p, gain).plus(1.0),
                    LinExpr::term(x, s2 * phi),
                    LinExpr::term(g, s2 / phi),
                    LinExpr::term(p, gain).plus(-1.0),
                ],
            );
        }

        match problem.settings.log_model {
            LogModel::ExponentialCone => prog.push(
                Cone::Exponential,
                vec![
                    LinExpr::term(rho, std::f64::consts::LN_2),
                    LinExpr::constant(1.0),
                    LinExpr::var(x).plus(1.0),
                ],
            ),
            LogModel::PiecewiseLinear { segments } => {
                let x_max = if is_dead { 0.0 } else { gain * budget / p_ref };
                prog.geq(LinExpr::constant(x_max), LinExpr::var(x));
                let segments = segments.max(1);
                let lo = x_max.min(1e-3);
                let mut breaks = vec![0.0];
                if x_max > 0.0 {
                    for k in 0..segments {
                        let f = k as f64 / (segments - 1).max(1) as f64;
                        breaks.push(lo * (x_max / lo).powf(f));
                    }
                    breaks.dedup();
                }
                if breaks.len() == 1 {
                    prog.geq(LinExpr::default(), LinExpr::var(rho));
                }
                for w in breaks.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let slope = (log2_1p(b) - log2_1p(a)) / (b - a);
                    let icpt = log2_1p(a) - slope * a;
                    prog.geq(LinExpr::term(x, slope).plus(icpt), LinExpr::var(rho));
                }
            }
        }
    }
    census.log_aux = n_terms;

    let (w_dt, w_ct) = model.slot_weights(delta);
    let mut objective = LinExpr::default();
    let mut lambda_u = Vec::with_capacity(layout.len());
    let mut lambda_v = Vec::with_capacity(layout.len());
    let mut qos_rows = Vec::with_capacity(2 * layout.len());
    for l in 0..layout.len() {
        let lu = prog.add_var(format!("Lambda_u[{l}]"));
        census.lambda_u += 1;
        let mut rate = LinExpr::default();
        for &t in &model.ccu_terms[l] {
            rate = rate.add(rho_var[t], w_ct);
            census.alpha += 1;
            census.gamma += 1;
        }
        prog.geq(rate, LinExpr::var(lu));
        qos_rows.push((LinExpr::var(lu), problem.qos.ccu));
        objective = objective.add(lu, 1.0);

        let mut parts = Vec::new();
        let mut total = LinExpr::default();
        for (i, part) in model.ceu_terms[l].iter().enumerate() {
            let lv = prog.add_var(format!("Lambda_v[{l}.{}]", i + 1));
            census.lambda_v += 1;
            let mut bs = LinExpr::term(rho_var[part.direct], w_dt);
            census.beta += 1;
            census.mu += 1;
            if let Some(r) = part.relay {
                bs = bs.add(rho_var[r], w_ct);
                census.beta += 1;
                census.mu += 1;
            }
            prog.geq(bs, LinExpr::var(lv));
            if let Some(c) = part.at_ccu {
                prog.geq(LinExpr::term(rho_var[c], w_dt), LinExpr::var(lv));
                census.omega += 1;
                census.eta += 1;
            }
            total = total.add(lv, 1.0);
            objective = objective.add(lv, 1.0);
            parts.push(lv);
        }
        qos_rows.push((total, problem.qos.ceu));
        lambda_u.push(lu);
        lambda_v.push(parts);
    }
    let mut shortfall = Vec::new();
    for (i, (lhs, target)) in qos_rows.into_iter().enumerate() {
        if elastic {
            let sv = prog.add_var(format!("shortfall[{i}]"));
            prog.geq(LinExpr::var(sv), LinExpr::default());
            prog.geq(lhs.add(sv, 1.0), LinExpr::constant(target + RESTORE_MARGIN));
            shortfall.push(sv);
        } else {
            prog.geq(lhs, LinExpr::constant(target));
        }
    }
    prog.objective = if elastic {
        shortfall
            .iter()
            .fold(LinExpr::default(), |e, &v| e.add(v, -1.0))
    } else {
        objective
    };

    Ok(ScaProgram {
        program: prog,
        p_ref,
        streams,
        power_var,
        x_var,
        g_var,
        rho_var,
        lambda_u,
        lambda_v,
        dead,
        census,
        shortfall,
    })
}

/// How an SCA run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
    InfeasibleAtInit,
    /// A later surrogate failed even after resetting the AGM scales.
    FailedAfterUpdate,
    SolverFailure,
}

/// Auxiliary values of the last solved surrogate, in physical units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaAux {
    /// SINR lower bounds per term.
    pub sinr: Vec<f64>,
    /// Interference-plus-noise upper bounds per term, in watts.
    pub interference: Vec<f64>,
    /// Rate epigraph values per term.
    pub log_rate: Vec<f64>,
    pub lambda_u: Vec<f64>,
    /// Per pair, summed over message parts.
    pub lambda_v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocpOutcome {
    pub status: SolveStatus,
    pub termination: Termination,
    pub delta: f64,
    /// Sum of the rate epigraph variables of the last solved surrogate.
    pub objective: f64,
    pub powers: PowerAllocation,
    pub aux: ScaAux,
    /// Scales used by the last solved surrogate.
    pub surrogate: SurrogateState,
    /// Number of surrogate solves.
    pub iterations: usize,
    /// Solves spent finding a starting point that meets every QoS target.
    pub restoration_iterations: usize,
    /// Objective after every successful solve.
    pub history: Vec<f64>,
    /// True sum rate at the starting point.
    pub initial_objective: f64,
    pub wall_ms: f64,
}

impl SocpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Solved {
    objective: f64,
    powers: PowerAllocation,
    aux: ScaAux,
    surrogate: SurrogateState,
}

fn solve_once(
    problem: &PowerProblem,
    solver: &dyn ConicSolver,
    delta: f64,
    surr: &SurrogateState,
) -> Result<(SolveStatus, Option<Solved>)> {
    let sp = build_socp(problem, delta, surr)?;
    let sol = solver.solve(&sp.program)?;
    if sol.status != SolveStatus::Optimal {
        return Ok((sol.status, None));
    }
    let x = &sol.x;
    let terms = &problem.model.terms;
    let aux = ScaAux {
        sinr: sp.x_var.iter().map(|&v| x[v].max(0.0)).collect(),
        interference: sp
            .g_var
            .iter()
            .zip(terms)
            .map(|(&v, t)| x[v] * t.noise)
            .collect(),
        log_rate: sp.rho_var.iter().map(|&v| x[v]).collect(),
        lambda_u: sp.lambda_u.iter().map(|&v| x[v]).collect(),
        lambda_v: sp
            .lambda_v
            .iter()
            .map(|parts| parts.iter().map(|&v| x[v]).sum())
            .collect(),
    };
    Ok((
        SolveStatus::Optimal,
        Some(Solved {
            objective: sol.objective,
            powers: sp.powers(x, delta),
            aux,
            surrogate: surr.clone(),
        }),
    ))
}

/// Drive the QoS shortfall to zero with elastic surrogate solves, starting
/// from `p0`. Returns a point meeting every target, or `None` once the
/// shortfall stops shrinking.
fn restore(
    problem: &PowerProblem,
    solver: &dyn ConicSolver,
    delta: f64,
    p0: &PowerAllocation,
) -> Result<(Option<PowerAllocation>, usize)> {
    let mut surr = problem.tight_surrogate(p0, 0);
    let mut last = f64::INFINITY;
    for n in 1..=problem.settings.max_iterations {
        let sp = build_program(problem, delta, &surr, true)?;
        let sol = solver.solve(&sp.program)?;
        if sol.status != SolveStatus::Optimal {
            return Ok((None, n));
        }
        let pa = sp.powers(&sol.x, p0.delta);
        if problem.evaluate(&pa).feasible() {
            return Ok((Some(pa), n));
        }
        let shortfall = -sol.objective;
        if shortfall > last - 1e-7 * last.max(1.0) {
            return Ok((None, n));
        }
        last = shortfall;
        surr = problem.tight_surrogate(&pa, n);
    }
    Ok((None, problem.settings.max_iterations))
}

/// Iterate surrogate solves at a fixed slot split until the objective
/// settles. A starting point that misses a QoS target is first repaired by
/// an elastic restoration phase.
pub fn sca_solve(problem: &PowerProblem, delta: f64) -> Result<SocpOutcome> {
    let start = Instant::now();
    let solver = problem.settings.backend.instantiate();
    let layout_delta = if problem.layout().cooperative {
        delta
    } else {
        1.0
    };
    if problem.layout().cooperative && !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let mut p0 = problem.initial_powers(layout_delta);
    let mut restoration_iterations = 0;
    if !problem.evaluate(&p0).feasible() {
        match restore(problem, solver.as_ref(), delta, &p0)? {
            (Some(p), n) => {
                p0 = p;
                restoration_iterations = n;
            }
            (None, n) => {
                let surrogate = problem.tight_surrogate(&p0, 0);
                return Ok(SocpOutcome {
                    status: SolveStatus::Infeasible,
                    termination: Termination::InfeasibleAtInit,
                    delta: layout_delta,
                    objective: f64::NEG_INFINITY,
                    initial_objective: problem.evaluate(&p0).sum_rate,
                    powers: p0,
                    aux: ScaAux::default(),
                    surrogate,
                    iterations: 0,
                    restoration_iterations: n,
                    history: Vec::new(),
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
        }
    }
    let initial_objective = problem.evaluate(&p0).sum_rate;
    let surr0 = problem.tight_surrogate(&p0, 0);
    let mut surr = surr0.clone();

    let mut history: Vec<f64> = Vec::new();
    let mut best: Option<Solved> = None;
    let mut retried = false;
    let mut solves = 0;
    let mut termination = Termination::IterationCap;
    let mut status = SolveStatus::Optimal;
    let mut previous = initial_objective;

    while solves < problem.settings.max_iterations {
        solves += 1;
        let (st, solved) = solve_once(problem, solver.as_ref(), delta, &surr)?;
        let Some(solved) = solved else {
            if best.is_none() {
                status = st;
                termination = if st == SolveStatus::Infeasible {
                    Termination::InfeasibleAtInit
                } else {
                    Termination::SolverFailure
                };
                break;
            }
            if !retried {
                log::debug!("surrogate failed ({st}) after update; resetting scales");
                retried = true;
                surr = SurrogateState {
                    iteration: surr.iteration + 1,
                    ..surr0.clone()
                };
                continue;
            }
            status = SolveStatus::NumericalFailure;
            termination = Termination::FailedAfterUpdate;
            break;
        };
        history.push(solved.objective);
        let change = (solved.objective - previous).abs();
        previous = solved.objective;
        surr = problem.tight_surrogate(&solved.powers, surr.iteration + 1);
        best = Some(solved);
        if change < problem.settings.eps {
            termination = Termination::Converged;
            break;
        }
    }

    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(match best {
        Some(b) => SocpOutcome {
            status,
            termination,
            delta: layout_delta,
            objective: b.objective,
            powers: b.powers,
            aux: b.aux,
            surrogate: b.surrogate,
            iterations: solves,
            restoration_iterations,
            history,
            initial_objective,
            wall_ms,
        },
        None => SocpOutcome {
            status,
            termination,
            delta: layout_delta,
            objective: f64::NEG_INFINITY,
            powers: p0,
            aux: ScaAux::default(),
            surrogate: surr0,
            iterations: solves,
            restoration_iterations,
            history,
            initial_objective,
            wall_ms,
        },
    })
}

/// Result of the exhaustive slot-split search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSearch {
    pub best_delta: f64,
    pub outcome: SocpOutcome,
    /// `(delta, objective)` per grid point, `-inf` where infeasible.
    pub scores: Vec<(f64, f64)>,
}

/// Run [`sca_solve`] on every grid point and keep the best; ties go to the
/// smaller split. Points outside the open unit interval cannot carry both
/// phases and score as infeasible.
pub fn delta_search(problem: &PowerProblem) -> Result<DeltaSearch> {
    if problem.delta_grid.is_empty() {
        return Err(Error::InvalidConfig("slot grid is empty".into()));
    }
    let mut grid = problem.delta_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, SocpOutcome)> = None;
    for &d in &grid {
        if !(d > 0.0 && d < 1.0) {
            scores.push((d, f64::NEG_INFINITY));
            continue;
        }
        let out = sca_solve(problem, d)?;
        let score = if out.is_optimal() {
            out.objective
        } else {
            f64::NEG_INFINITY
        };
        scores.push((d, score));
        if score > f64::NEG_INFINITY && best.as_ref().is_none_or(|(_, b)| score > b.objective) {
            best = Some((d, out));
        }
    }
    let (best_delta, outcome) = best.ok_or(Error::InstanceInfeasible)?;
    Ok(DeltaSearch {
        best_delta,
        outcome,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::{PairingMethod, PairingPolicy};
    use crate::streams::{make_decoding_order, OrderLabel};

    fn single_pair(sigma2: f64) -> (StreamLayout, MrcCoefficients) {
        let p = PairingPolicy::new(vec![(0, 1)], PairingMethod::SusMg).unwrap();
        let coeffs = MrcCoefficients {
            self_gain: vec![4.0, 0.25],
            cross_gain: vec![vec![4.0, 0.1], vec![0.1, 0.25]],
            noise_gain: vec![2.0 * sigma2, 0.5 * sigma2],
            link_gain: vec![vec![0.0, 2.0], vec![2.0, 0.0]],
            sigma2,
        };
        (StreamLayout::crsma(&p), coeffs)
    }

    /// Low-noise setting where the toy pair is comfortably feasible.
    fn toy_config() -> SystemConfig {
        SystemConfig {
            sigma2: 1e-3,
            ..SystemConfig::default()
        }
    }

    fn problem(config: &SystemConfig) -> PowerProblem {
        let (layout, coeffs) = single_pair(config.sigma2);
        let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        PowerProblem::new(&layout, &coeffs, &order, config).unwrap()
    }

    #[test]
    fn agm_examples() {
        assert_eq!(agm_upper_bound(3.0, 3.0, 1.0).unwrap(), 18.0);
        assert_eq!(agm_upper_bound(1.0, 4.0, 1.0).unwrap(), 17.0);
        assert!(matches!(
            agm_upper_bound(1.0, 1.0, 0.0),
            Err(Error::InvalidAgmScale(_))
        ));
        assert!(agm_upper_bound(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn census_single_pair() {
        let cfg = toy_config();
        let pr = problem(&cfg);
        let surr = SurrogateState::uniform(pr.model.terms.len(), 1.0);
        let sp = build_socp(&pr, 0.5, &surr).unwrap();
        let c = sp.census;
        assert_eq!((c.lambda_u, c.lambda_v, c.powers), (1, 1, 4));
        assert_eq!((c.alpha, c.beta, c.omega), (2, 2, 1));
        assert_eq!((c.gamma, c.mu, c.eta), (2, 2, 1));
        assert_eq!(c.log_aux, 5);
        assert_eq!(sp.program.num_vars(), 2 + 4 + 5 * 3);
    }

    #[test]
    fn rejects_bad_delta_and_scale() {
        let pr = problem(&toy_config());
        let surr = SurrogateState::uniform(pr.model.terms.len(), 1.0);
        for d in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                build_socp(&pr, d, &surr),
                Err(Error::InvalidDelta(_))
            ));
        }
        let bad = SurrogateState::uniform(pr.model.terms.len(), 0.0);
        assert!(build_socp(&pr, 0.5, &bad).is_err());
    }

    #[test]
    fn zero_budgets_zero_thresholds() {
        let cfg = SystemConfig {
            p_u_max_dbm: f64::NEG_INFINITY,
            p_v_max_dbm: f64::NEG_INFINITY,
            r_th_u: 0.0,
            r_th_v: 0.0,
            ..toy_config()
        };
        let out = sca_solve(&problem(&cfg), 0.5).unwrap();
        assert!(out.is_optimal());
        assert!(out.objective.abs() < 1e-6);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_budgets_positive_thresholds_infeasible() {
        let cfg = SystemConfig {
            p_u_max_dbm: f64::NEG_INFINITY,
            p_v_max_dbm: f64::NEG_INFINITY,
            ..toy_config()
        };
        let out = sca_solve(&problem(&cfg), 0.5).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert_eq!(out.termination, Termination::InfeasibleAtInit);
    }

    #[test]
    fn residuals_at_hand_built_point() {
        // take a strictly feasible physical point and fill the auxiliaries
        // with exact values; every constraint must hold
        let cfg = SystemConfig {
            r_th_u: 0.0,
            r_th_v: 0.0,
            ..toy_config()
        };
        let pr = problem(&cfg);
        let delta = 0.4;
        let pa = PowerAllocation::single_pair(0.03, 0.02, 0.05, 0.01, delta);
        let surr = pr.tight_surrogate(&pa, 0);
        let sp = build_socp(&pr, delta, &surr).unwrap();
        let (sinr, g): (Vec<f64>, Vec<f64>) = pr
            .model
            .terms
            .iter()
            .map(|t| (t.sinr(&pa) * 0.999, t.interference_power(&pa) / t.noise))
            .unzip();
        let rho: Vec<f64> = sinr.iter().map(|&x| log2_1p(x) - 1e-9).collect();
        let m = &pr.model;
        let lu = (1.0 - delta) * m.ccu_terms[0].iter().map(|&t| rho[t]).sum::<f64>();
        let part = m.ceu_terms[0][0];
        let lv = (delta * rho[part.direct] + (1.0 - delta) * rho[part.relay.unwrap()])
            .min(delta * rho[part.at_ccu.unwrap()]);
        let x = sp.point(&pa, &sinr, &g, &rho, &[lu], &[vec![lv]]);
        let worst = sp.program.max_residual(&x);
        assert!(worst <= 1e-12, "worst residual {worst}");
        // and a point above the budget is caught
        let over = PowerAllocation::single_pair(1.0, 1.0, 1.0, 1.0, delta);
        let x = sp.point(&over, &sinr, &g, &rho, &[lu], &[vec![lv]]);
        assert!(sp.program.max_residual(&x) > 0.0);
    }

    #[test]
    fn sca_monotone_and_feasible() {
        let cfg = toy_config();
        let pr = problem(&cfg);
        let out = sca_solve(&pr, 0.5).unwrap();
        assert!(out.is_optimal(), "{:?}", out.termination);
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.iterations <= 10);
        for w in out.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "{:?}", out.history);
        }
        let report = pr.evaluate(&out.powers);
        assert!(report.feasible());
        assert!(report.sum_rate >= out.objective - 1e-3);
        assert!(out
            .powers
            .within_budget(pr.layout(), pr.p_u_max, pr.p_v_max, 1e-9));
    }

    #[test]
    fn piecewise_linear_close_to_exponential_cone() {
        let cfg = toy_config();
        let exact = sca_solve(&problem(&cfg), 0.5).unwrap();
        let mut pr = problem(&cfg);
        pr.settings.log_model = LogModel::PiecewiseLinear { segments: 64 };
        let pwl = sca_solve(&pr, 0.5).unwrap();
        assert!(pwl.is_optimal());
        assert!(pwl.objective <= exact.objective + 1e-4);
        assert!(pwl.objective >= 0.97 * exact.objective);
        assert!(pr.evaluate(&pwl.powers).sum_rate >= pwl.objective - 1e-4);
    }

    #[test]
    fn delta_grid_handling() {
        let cfg = SystemConfig {
            delta_grid: vec![0.5],
            ..toy_config()
        };
        let pr = problem(&cfg);
        let ds = delta_search(&pr).unwrap();
        let direct = sca_solve(&pr, 0.5).unwrap();
        assert_eq!(ds.best_delta, 0.5);
        assert_eq!(ds.outcome.objective, direct.objective);

        let cfg = SystemConfig {
            delta_grid: vec![1.0],
            ..toy_config()
        };
        assert!(matches!(
            delta_search(&problem(&cfg)),
            Err(Error::InstanceInfeasible)
        ));
    }
}
