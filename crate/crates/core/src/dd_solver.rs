//! The L-scheme domain-decomposition iteration for one time step.
//!
//! Iteration `i ≥ 1` solves four decoupled systems (phase × subdomain) with
//! fixed Robin data `g^i`, then forms `g^{i+1}` from the neighbour's trace:
//!
//! ```text
//! g_{α,l}^{i+1} = -2λ_α p_{α,3-l}^i|_Γ - g_{α,3-l}^i
//! ```
//!
//! At a fixed point the two traces agree and the recovered normal fluxes
//! balance, so the limit is the monolithic discrete solution.

use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::assembly::{assemble_lscheme, variational_flux};
use crate::constitutive::Phase;
use crate::error::{Error, Result};
use crate::mesh::Subdomain;
use crate::problem::{Problem, SubdomainState};

/// Robin data `g_{α,l}` at the interface nodes, bottom to top.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceData {
    pub phase: Phase,
    pub subdomain: Subdomain,
    pub values: Vec<f64>,
}

impl InterfaceData {
    pub fn zeros(phase: Phase, subdomain: Subdomain, n: usize) -> Self {
        Self {
            phase,
            subdomain,
            values: vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// All four `g_{α,l}`, indexed `[phase][subdomain]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceSet {
    pub data: [[InterfaceData; 2]; 2],
}

impl InterfaceSet {
    pub fn zeros(n: usize) -> Self {
        Self::from_fn(|_, _| vec![0.0; n])
    }

    pub fn from_fn(mut f: impl FnMut(Phase, Subdomain) -> Vec<f64>) -> Self {
        let data = Phase::ALL.map(|phase| {
            Subdomain::ALL.map(|sub| InterfaceData {
                phase,
                subdomain: sub,
                values: f(phase, sub),
            })
        });
        Self { data }
    }

    pub fn get(&self, phase: Phase, sub: Subdomain) -> &InterfaceData {
        &self.data[phase.index()][sub.index()]
    }

    pub fn get_mut(&mut self, phase: Phase, sub: Subdomain) -> &mut InterfaceData {
        &mut self.data[phase.index()][sub.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(InterfaceData::is_finite)
    }
}

/// Choice of the initial Robin data of a time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GInitMode {
    /// `g_l^0 = F_{3-l}·n_l - λ p_l|_Γ` from the previous time level.
    Flux,
    /// Converged `g` of the previous step; the first step falls back to `Flux`.
    #[default]
    Warm,
}

impl std::str::FromStr for GInitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flux" => Ok(GInitMode::Flux),
            "warm" => Ok(GInitMode::Warm),
            _ => Err(Error::config(format!("g_init must be `flux` or `warm`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    /// `L_{α,l}`, indexed `[phase][subdomain]`.
    pub l: [[f64; 2]; 2],
    /// `λ_α`, indexed by phase.
    pub lambda: [f64; 2],
    pub tol: f64,
    pub max_iter: usize,
    pub tau: f64,
}

impl SchemeParams {
    /// Same `L` and `λ` everywhere, `tol = 1e-10`, 500 iterations.
    pub fn uniform(l: f64, lambda: f64, tau: f64) -> Self {
        Self {
            l: [[l; 2]; 2],
            lambda: [lambda; 2],
            tol: 1e-10,
            max_iter: 500,
            tau,
        }
    }

    pub fn l(&self, phase: Phase, sub: Subdomain) -> f64 {
        self.l[phase.index()][sub.index()]
    }

    pub fn lambda(&self, phase: Phase) -> f64 {
        self.lambda[phase.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !self.l.iter().flatten().all(|&v| pos(v)) {
            return Err(Error::config(format!("L values must be positive, got {:?}", self.l)));
        }
        if !self.lambda.iter().all(|&v| pos(v)) {
            return Err(Error::config(format!("lambda values must be positive, got {:?}", self.lambda)));
        }
        if !pos(self.tol) {
            return Err(Error::config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if !pos(self.tau) {
            return Err(Error::config(format!("time step must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// Relative tolerance handed to the subdomain linear solver.
    pub fn linear_tol(&self) -> f64 {
        (self.tol / 100.0).max(1e-15)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖p^i - p^{i-1}‖_{L²}`, indexed `[phase][subdomain]`.
    pub increment: [[f64; 2]; 2],
    /// `‖g^{i+1} - g^i‖_Γ`, indexed `[phase][subdomain]`.
    pub g_update: [[f64; 2]; 2],
    /// Weighted error functional, when a reference solution is supplied.
    pub monitor: Option<f64>,
    /// `(Σ ‖p⋆ - p^i‖²_{L²})^{1/2}`, when a reference solution is supplied.
    pub reference_error: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationReport {
    pub time_step: usize,
    pub iterations_used: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
    /// Monitor value at the initial iterate.
    pub initial_monitor: Option<f64>,
    /// Geometric-mean error reduction per iteration.
    pub contraction_factor: Option<f64>,
}

impl IterationReport {
    /// Largest increase of the monitor between consecutive iterations
    /// (including the initial value); negative or zero when nonincreasing.
    pub fn max_monitor_increase(&self) -> Option<f64> {
        let mut vals: Vec<f64> = self.initial_monitor.into_iter().collect();
        vals.extend(self.records.iter().filter_map(|r| r.monitor));
        if vals.len() < 2 {
            return None;
        }
        Some(vals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Monolithic solution of the step and its induced Robin data, used to
/// evaluate the weighted error functional.
#[derive(Clone, Debug)]
pub struct MonitorReference {
    pub states: [SubdomainState; 2],
    pub g: InterfaceSet,
}

impl MonitorReference {
    /// Builds `g⋆_l = F⋆_{3-l}·n_l - λ p⋆|_Γ` from a converged monolithic state.
    pub fn new(
        problem: &Problem,
        states: [SubdomainState; 2],
        prev_time: &[SubdomainState; 2],
        params: &SchemeParams,
        t_new: f64,
    ) -> Result<Self> {
        let g = robin_from_fluxes(problem, &states, &states, prev_time, params, t_new)?;
        Ok(Self { states, g })
    }
}

/// `g_l = -(F_{3-l}·n_{3-l}) - λ p_l|_Γ` with fluxes recovered from `states`.
fn robin_from_fluxes(
    problem: &Problem,
    states: &[SubdomainState; 2],
    mobility: &[SubdomainState; 2],
    prev_time: &[SubdomainState; 2],
    params: &SchemeParams,
    t: f64,
) -> Result<InterfaceSet> {
    let mut out = InterfaceSet::zeros(problem.trace.len());
    for phase in Phase::ALL {
        for sub in Subdomain::ALL {
            let o = sub.other();
            let flux = variational_flux(
                problem,
                phase,
                o,
                &states[o.index()],
                &mobility[o.index()],
                &prev_time[o.index()],
                &problem.sources,
                params.tau,
                t,
            )?;
            let trace = problem.trace.restrict(sub, states[sub.index()].pressure(phase));
            out.get_mut(phase, sub).values = flux
                .iter()
                .zip(&trace)
                .map(|(f, p)| -f - params.lambda(phase) * p)
                .collect();
        }
    }
    Ok(out)
}

/// Everything `run_step` needs from the time loop.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    /// Converged states at `t^{n-1}`.
    pub prev_time: &'a [SubdomainState; 2],
    /// States at `t^{n-2}`, for the storage term of the previous-level flux;
    /// `None` at the first step.
    pub before_prev: Option<&'a [SubdomainState; 2]>,
    /// Converged Robin data of the previous step.
    pub prev_interface: Option<&'a InterfaceSet>,
    /// Time step index `n ≥ 1`.
    pub time_step: usize,
    /// `t^n`.
    pub t_new: f64,
}

/// Iterate 0 and `g^0`: `p^{n,0} = p^{n-1}` with Dirichlet values at `t^n`.
pub fn init_step(
    problem: &Problem,
    input: &StepInput<'_>,
    params: &SchemeParams,
    mode: GInitMode,
) -> Result<([SubdomainState; 2], InterfaceSet)> {
    for sub in Subdomain::ALL {
        problem.check_state(sub, &input.prev_time[sub.index()])?;
    }
    let mut states = input.prev_time.clone();
    for sub in Subdomain::ALL {
        let s = &mut states[sub.index()];
        problem.apply_dirichlet(problem.patch(sub), s, input.t_new);
        s.time_level = input.time_step;
        s.iterate_index = 0;
    }
    let g = match (mode, input.prev_interface) {
        (GInitMode::Warm, Some(g)) => g.clone(),
        _ => {
            let t_prev = input.t_new - params.tau;
            let old = input.before_prev.unwrap_or(input.prev_time);
            robin_from_fluxes(problem, input.prev_time, input.prev_time, old, params, t_prev)?
        }
    };
    Ok((states, g))
}

/// Robin update from the other subdomain's data, nodewise on `Γ`.
pub fn update_interface(
    problem: &Problem,
    g: &InterfaceSet,
    states: &[SubdomainState; 2],
    params: &SchemeParams,
) -> InterfaceSet {
    let mut out = g.clone();
    for phase in Phase::ALL {
        for sub in Subdomain::ALL {
            let o = sub.other();
            let trace = problem.trace.restrict(o, states[o.index()].pressure(phase));
            out.get_mut(phase, sub).values = update_values(params.lambda(phase), &trace, &g.get(phase, o).values);
        }
    }
    out
}

/// `-2λ p_other - g_other`.
pub fn update_values(lambda: f64, p_other: &[f64], g_other: &[f64]) -> Vec<f64> {
    p_other.iter().zip(g_other).map(|(p, g)| -2.0 * lambda * p - g).collect()
}

const JOBS: [(Phase, Subdomain); 4] = [
    (Phase::Wetting, Subdomain::One),
    (Phase::Wetting, Subdomain::Two),
    (Phase::Nonwetting, Subdomain::One),
    (Phase::Nonwetting, Subdomain::Two),
];

fn solve_job(
    problem: &Problem,
    (phase, sub): (Phase, Subdomain),
    prev_iter: &[SubdomainState; 2],
    prev_time: &[SubdomainState; 2],
    g: &InterfaceSet,
    params: &SchemeParams,
    t_new: f64,
) -> Result<Vec<f64>> {
    let k = sub.index();
    let sys = assemble_lscheme(
        problem,
        phase,
        sub,
        &prev_iter[k],
        &prev_time[k],
        g.get(phase, sub),
        params,
        t_new,
    )?;
    let patch = problem.patch(sub);
    let mut p = prev_iter[k].pressure(phase).to_vec();
    let mut x: Vec<f64> = patch.free_nodes.iter().map(|&l| p[l]).collect();
    let out = sys.solve(&mut x, params.linear_tol());
    if !out.converged {
        return Err(Error::LinearSolver {
            phase: phase.name(),
            subdomain: sub.number(),
            iterations: out.iterations,
            residual: out.relative_residual,
        });
    }
    for (e, &l) in patch.free_nodes.iter().enumerate() {
        p[l] = x[e];
    }
    Ok(p)
}

/// One L-scheme iteration: the four decoupled solves with `g` held fixed.
pub fn iterate_once(
    problem: &Problem,
    prev_iter: &[SubdomainState; 2],
    prev_time: &[SubdomainState; 2],
    g: &InterfaceSet,
    params: &SchemeParams,
    t_new: f64,
) -> Result<[SubdomainState; 2]> {
    let run = |job| solve_job(problem, job, prev_iter, prev_time, g, params, t_new);
    let results: Vec<Result<Vec<f64>>> = if problem.disc.parallel {
        JOBS.par_iter().map(|&j| run(j)).collect()
    } else {
        JOBS.iter().map(|&j| run(j)).collect()
    };
    let mut next = prev_iter.clone();
    for (&(phase, sub), r) in JOBS.iter().zip(results) {
        *next[sub.index()].pressure_mut(phase) = r?;
    }
    for s in &mut next {
        s.iterate_index += 1;
    }
    Ok(next)
}

fn l2(problem: &Problem, sub: Subdomain, v: &[f64]) -> f64 {
    problem.patch(sub).lumped_norm_sq(v).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Weighted error functional
/// `Σ (L/2)‖p⋆ - p^i‖² + τ Σ (1/(4λ))‖g⋆ - g^{i+1}‖²_Γ`.
pub fn monitor_value(
    problem: &Problem,
    reference: &MonitorReference,
    states: &[SubdomainState; 2],
    g_next: &InterfaceSet,
    params: &SchemeParams,
) -> f64 {
    let mut e = 0.0;
    for phase in Phase::ALL {
        for sub in Subdomain::ALL {
            let k = sub.index();
            let d = diff(reference.states[k].pressure(phase), states[k].pressure(phase));
            e += 0.5 * params.l(phase, sub) * problem.patch(sub).lumped_norm_sq(&d);
            let dg = diff(&reference.g.get(phase, sub).values, &g_next.get(phase, sub).values);
            let n = problem.pairing.norm(&dg);
            e += params.tau * n * n / (4.0 * params.lambda(phase));
        }
    }
    e
}

fn reference_error(problem: &Problem, reference: &MonitorReference, states: &[SubdomainState; 2]) -> f64 {
    let mut s = 0.0;
    for phase in Phase::ALL {
        for sub in Subdomain::ALL {
            let k = sub.index();
            let d = diff(reference.states[k].pressure(phase), states[k].pressure(phase));
            s += problem.patch(sub).lumped_norm_sq(&d);
        }
    }
    s.sqrt()
}

/// Geometric-mean per-iteration reduction of `errors`, ignoring the tail
/// that has reached the noise level `floor`.
pub fn contraction_factor(errors: &[f64], floor: f64) -> Option<f64> {
    let useful: Vec<f64> = errors.iter().copied().take_while(|&e| e > floor).collect();
    if useful.len() < 2 || useful[0] <= 0.0 {
        return None;
    }
    let k = (useful.len() - 1) as f64;
    Some((useful[useful.len() - 1] / useful[0]).powf(1.0 / k))
}

/// Runs one time step to convergence. On failure the error carries the
/// iteration report.
pub fn run_step(
    problem: &Problem,
    input: &StepInput<'_>,
    params: &SchemeParams,
    mode: GInitMode,
    reference: Option<&MonitorReference>,
) -> Result<([SubdomainState; 2], InterfaceSet, IterationReport)> {
    params.validate()?;
    let (mut states, g0) = init_step(problem, input, params, mode)?;
    let mut g = update_interface(problem, &g0, &states, params);
    let mut report = IterationReport {
        time_step: input.time_step,
        initial_monitor: reference.map(|r| monitor_value(problem, r, &states, &g, params)),
        ..Default::default()
    };
    let mut ref_errors: Vec<f64> = reference
        .map(|r| reference_error(problem, r, &states))
        .into_iter()
        .collect();
    let mut increments = Vec::new();
    let start = Instant::now();
    for i in 1..=params.max_iter {
        let next = iterate_once(problem, &states, input.prev_time, &g, params, input.t_new)?;
        let g_next = update_interface(problem, &g, &next, params);
        let mut rec = IterationRecord {
            iteration: i,
            increment: [[0.0; 2]; 2],
            g_update: [[0.0; 2]; 2],
            monitor: None,
            reference_error: None,
            seconds: start.elapsed().as_secs_f64(),
        };
        let mut settled = true;
        for phase in Phase::ALL {
            for sub in Subdomain::ALL {
                let k = sub.index();
                let inc = l2(problem, sub, &diff(next[k].pressure(phase), states[k].pressure(phase)));
                let size = l2(problem, sub, next[k].pressure(phase));
                let a = &g_next.get(phase, sub).values;
                let dg = problem.pairing.norm(&diff(a, &g.get(phase, sub).values));
                let gsize = problem.pairing.norm(a);
                rec.increment[phase.index()][k] = inc;
                rec.g_update[phase.index()][k] = dg;
                settled &= inc <= params.tol * (1.0 + size) && dg <= params.tol * (1.0 + gsize);
            }
        }
        let finite = next.iter().all(SubdomainState::is_finite) && g_next.is_finite();
        if let Some(r) = reference.filter(|_| finite) {
            rec.monitor = Some(monitor_value(problem, r, &next, &g_next, params));
            let e = reference_error(problem, r, &next);
            rec.reference_error = Some(e);
            ref_errors.push(e);
        }
        increments.push(rec.increment.iter().flatten().fold(0.0f64, |m, &v| m.max(v)));
        debug!(
            "step {} iteration {i}: max increment {:.3e}, monitor {:?}",
            input.time_step,
            increments[i - 1],
            rec.monitor
        );
        report.records.push(rec);
        report.iterations_used = i;
        states = next;
        g = g_next;
        if !finite {
            warn!("step {}: iterates became non-finite at iteration {i}", input.time_step);
            return Err(Error::Diverged {
                report: Box::new(report),
            });
        }
        if settled {
            report.converged = true;
            break;
        }
    }
    let scale = 1.0 + states.iter().map(|s| s.p_w.iter().chain(&s.p_g).fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
    report.contraction_factor = if ref_errors.is_empty() {
        contraction_factor(&increments, 100.0 * params.tol * scale)
    } else {
        contraction_factor(&ref_errors, 100.0 * params.tol * scale)
    };
    if !report.converged {
        warn!(
            "step {}: no convergence within {} iterations",
            input.time_step, params.max_iter
        );
        return Err(Error::NonConvergence {
            report: Box::new(report),
        });
    }
    info!(
        "step {} converged in {} iterations (contraction {:?})",
        input.time_step, report.iterations_used, report.contraction_factor
    );
    Ok((states, g, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{CurveSpec, LayerParams, PhaseParams, Phases};
    use crate::mesh::build_mesh;
    use crate::problem::{Discretization, Model, ScalarField, SourceSpec};

    fn model(k2: f64) -> Model {
        let layer = |k| {
            LayerParams::new(
                1.0,
                k,
                CurveSpec::linear_test(0.5, 0.1),
                CurveSpec::linear_test(0.0, 1.0).with_floor(0.1),
                CurveSpec::linear_test(0.0, 1.0).with_floor(0.1),
            )
            .unwrap()
        };
        Model {
            layers: [layer(0.1), layer(k2)],
            phases: Phases::new(
                PhaseParams::new(Phase::Wetting, 1.0, 1.0).unwrap(),
                PhaseParams::new(Phase::Nonwetting, 1.0, 0.8).unwrap(),
            )
            .unwrap(),
            gravity: 0.0,
        }
    }

    fn bump_problem(parallel: bool) -> Problem {
        let disc = Discretization {
            parallel,
            ..Default::default()
        };
        Problem::new(build_mesh(2.0, 1.0, 8, 4, 4).unwrap(), model(1.0), SourceSpec::zero(), disc).with_initial(
            ScalarField::function(|x, y, _| (x * (2.0 - x) * y * (1.0 - y)).max(0.0)),
            ScalarField::function(|x, y, _| 1.5 * (x * (2.0 - x) * y * (1.0 - y)).max(0.0)),
        )
    }

    #[test]
    fn robin_update_formula() {
        assert_eq!(update_values(1.0, &[2.0], &[1.0]), vec![-5.0]);
        assert_eq!(update_values(0.5, &[1.0, -2.0], &[0.0, 3.0]), vec![-1.0, -1.0]);
    }

    #[test]
    fn update_uses_only_the_other_side() {
        let pr = bump_problem(false);
        let params = SchemeParams::uniform(0.2, 1.0, 0.1);
        let states = pr.initial_states();
        let g = InterfaceSet::zeros(pr.trace.len());
        let a = update_interface(&pr, &g, &states, &params);
        let mut perturbed = states.clone();
        perturbed[0].p_w.iter_mut().for_each(|v| *v += 1.0);
        let b = update_interface(&pr, &g, &perturbed, &params);
        assert_eq!(a.get(Phase::Wetting, Subdomain::One), b.get(Phase::Wetting, Subdomain::One));
        assert_ne!(a.get(Phase::Wetting, Subdomain::Two), b.get(Phase::Wetting, Subdomain::Two));
    }

    #[test]
    fn constant_state_gives_minus_lambda_trace() {
        let pr = Problem::new(
            build_mesh(1.0, 1.0, 4, 2, 2).unwrap(),
            model(1.0),
            SourceSpec::zero(),
            Discretization::default(),
        )
        .with_initial(ScalarField::Constant(0.3), ScalarField::Constant(0.7))
        .with_boundary(ScalarField::Constant(0.3), ScalarField::Constant(0.7));
        let params = SchemeParams::uniform(0.2, 1.5, 0.1);
        let init = pr.initial_states();
        let input = StepInput {
            prev_time: &init,
            before_prev: None,
            prev_interface: None,
            time_step: 1,
            t_new: 0.1,
        };
        let (_, g) = init_step(&pr, &input, &params, GInitMode::Flux).unwrap();
        for (phase, p) in [(Phase::Wetting, 0.3), (Phase::Nonwetting, 0.7)] {
            for sub in Subdomain::ALL {
                for v in &g.get(phase, sub).values {
                    assert!((v + 1.5 * p).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn warm_mode_carries_over() {
        let pr = bump_problem(false);
        let params = SchemeParams::uniform(0.2, 1.0, 0.1);
        let init = pr.initial_states();
        let stored = InterfaceSet::from_fn(|p, s| vec![(p.index() * 2 + s.index()) as f64; pr.trace.len()]);
        let input = StepInput {
            prev_time: &init,
            before_prev: Some(&init),
            prev_interface: Some(&stored),
            time_step: 2,
            t_new: 0.2,
        };
        let (_, g) = init_step(&pr, &input, &params, GInitMode::Warm).unwrap();
        assert_eq!(g, stored);
    }

    #[test]
    fn converges_and_is_order_independent() {
        let params = SchemeParams::uniform(0.2, 1.0, 0.05);
        let mut out = Vec::new();
        for parallel in [false, true] {
            let pr = bump_problem(parallel);
            let init = pr.initial_states();
            let input = StepInput {
                prev_time: &init,
                before_prev: None,
                prev_interface: None,
                time_step: 1,
                t_new: params.tau,
            };
            let (s, _, rep) = run_step(&pr, &input, &params, GInitMode::Flux, None).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.records.len(), rep.iterations_used);
            assert!(rep.contraction_factor.unwrap() < 1.0);
            out.push(s);
        }
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn loose_tolerance_stops_after_one_iteration() {
        let pr = bump_problem(false);
        let mut params = SchemeParams::uniform(0.2, 1.0, 0.05);
        params.tol = 1e6;
        let init = pr.initial_states();
        let input = StepInput {
            prev_time: &init,
            before_prev: None,
            prev_interface: None,
            time_step: 1,
            t_new: params.tau,
        };
        let (_, _, rep) = run_step(&pr, &input, &params, GInitMode::Flux, None).unwrap();
        assert_eq!(rep.iterations_used, 1);
    }

    #[test]
    fn nonconvergence_carries_report() {
        let pr = bump_problem(false);
        let mut params = SchemeParams::uniform(0.2, 1.0, 0.05);
        params.max_iter = 2;
        let init = pr.initial_states();
        let input = StepInput {
            prev_time: &init,
            before_prev: None,
            prev_interface: None,
            time_step: 1,
            t_new: params.tau,
        };
        let err = run_step(&pr, &input, &params, GInitMode::Flux, None).unwrap_err();
        let rep = err.report().expect("report attached");
        assert_eq!(rep.iterations_used, 2);
        assert!(!rep.converged);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SchemeParams::uniform(1.0, 1.0, 0.1);
        assert!(p.validate().is_ok());
        p.lambda[1] = 0.0;
        assert!(p.validate().is_err());
        let mut p = SchemeParams::uniform(1.0, 1.0, 0.1);
        p.max_iter = 0;
        assert!(p.validate().is_err());
        assert!("warm".parse::<GInitMode>().is_ok());
        assert!("cold".parse::<GInitMode>().is_err());
    }

    #[test]
    fn contraction_factor_of_geometric_sequence() {
        let e: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).chain([1e-20, 1e-21]).collect();
        let f = contraction_factor(&e, 1e-12).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        assert!(contraction_factor(&[1.0], 0.0).is_none());
    }
}
