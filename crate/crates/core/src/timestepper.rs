//! Backward Euler outer loop and the step-size condition of the scheme.
//!
//! For each layer `l` the scheme contracts when
//!
//! ```text
//! P_l = 1/L_{S_l} - Σ_α 1/(2L_{α,l}) > 0
//! C_l = P_l - τ Σ_α L_{k_{α,l}}² M² / (2m) > 0
//! ```
//!
//! where `M` bounds `|∇(p_α - z_α)|`. Both are sufficient conditions only.

use log::{info, warn};

use crate::constitutive::{Phase, RegularityConstants};
use crate::dd_solver::{run_step, GInitMode, InterfaceSet, IterationReport, MonitorReference, SchemeParams, StepInput};
use crate::error::{Error, Result};
use crate::mesh::Subdomain;
use crate::problem::{Problem, SubdomainState};
use crate::verification::monolithic_solve;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
    pub tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::config(format!("T must be positive, got {t_final}")));
        }
        if steps == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        Ok(Self {
            t_final,
            steps,
            tau: t_final / steps as f64,
        })
    }

    /// `t^n`; the last level is exactly `T`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.tau
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerAdmissibility {
    /// `1/L_S - Σ 1/(2L)`.
    pub parameter_value: f64,
    /// `Σ_α L_k² M² / (2m)`.
    pub growth: f64,
    /// Parameter value minus `τ·growth`.
    pub c_value: f64,
    pub parameter_pass: bool,
    pub time_step_pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub layers: [LayerAdmissibility; 2],
    pub tau: f64,
    pub m_used: f64,
    /// `None` when no positive step is admissible.
    pub tau_max: Option<f64>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.parameter_pass && l.time_step_pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (k, l) in self.layers.iter().enumerate() {
            s.push_str(&format!(
                "layer {}: parameter condition {} ({}), C = {} at tau = {} ({}); ",
                k + 1,
                l.parameter_value,
                if l.parameter_pass { "pass" } else { "FAIL" },
                l.c_value,
                self.tau,
                if l.time_step_pass { "pass" } else { "FAIL" },
            ));
        }
        match self.tau_max {
            Some(t) => s.push_str(&format!("tau_max = {t} with M = {}", self.m_used)),
            None => s.push_str("no admissible time step; increase L"),
        }
        s
    }
}

fn layer_terms(c: &RegularityConstants, params: &SchemeParams, sub: Subdomain, m: f64) -> (f64, f64) {
    let mut p = 1.0 / c.lipschitz_s;
    let mut growth = 0.0;
    for phase in Phase::ALL {
        p -= 1.0 / (2.0 * params.l(phase, sub));
        let lk = c.lipschitz_k(phase);
        growth += lk * lk * m * m / (2.0 * c.mobility_lower);
    }
    (p, growth)
}

fn check_inputs(constants: &[RegularityConstants; 2], params: &SchemeParams, m: f64) -> Result<()> {
    for c in constants {
        c.validate()?;
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain(format!("gradient bound M must be positive, got {m}")));
    }
    if !params.l.iter().flatten().all(|&l| l > 0.0 && l.is_finite()) {
        return Err(Error::domain(format!("L values must be positive, got {:?}", params.l)));
    }
    if !(params.tau >= 0.0 && params.tau.is_finite()) {
        return Err(Error::domain(format!("time step must be nonnegative, got {}", params.tau)));
    }
    Ok(())
}

/// Evaluates both conditions per layer at `params.tau`.
pub fn check_admissibility(
    constants: &[RegularityConstants; 2],
    params: &SchemeParams,
    m: f64,
) -> Result<AdmissibilityReport> {
    check_inputs(constants, params, m)?;
    let layers = Subdomain::ALL.map(|sub| {
        let (p, growth) = layer_terms(&constants[sub.index()], params, sub, m);
        let c = p - params.tau * growth;
        LayerAdmissibility {
            parameter_value: p,
            growth,
            c_value: c,
            parameter_pass: p > 0.0,
            time_step_pass: c > 0.0,
        }
    });
    Ok(AdmissibilityReport {
        layers,
        tau: params.tau,
        m_used: m,
        tau_max: max_stable_tau(constants, params, m).ok(),
    })
}

/// Largest `τ` with `C_l ≥ 0` on both layers; infinite when the mobilities
/// are constant.
pub fn max_stable_tau(constants: &[RegularityConstants; 2], params: &SchemeParams, m: f64) -> Result<f64> {
    check_inputs(constants, params, m)?;
    let mut best = f64::INFINITY;
    for sub in Subdomain::ALL {
        let (p, growth) = layer_terms(&constants[sub.index()], params, sub, m);
        if p <= 0.0 {
            return Err(Error::NoAdmissibleStep {
                layer: sub.number(),
                value: p,
            });
        }
        if growth > 0.0 {
            best = best.min(p / growth);
        }
    }
    Ok(best)
}

/// `L_{α,l} = 2·L_{S_l}`, indexed `[phase][subdomain]`.
#[allow(non_snake_case)]
pub fn suggest_L(constants: &[RegularityConstants; 2]) -> [[f64; 2]; 2] {
    let l = Subdomain::ALL.map(|s| 2.0 * constants[s.index()].lipschitz_s);
    [l, l]
}

#[derive(Clone, Debug)]
pub struct SimulationSettings {
    /// `params.tau` is overwritten with the grid step.
    pub params: SchemeParams,
    pub grid: TimeGrid,
    pub g_init: GInitMode,
    /// Configured gradient bound `M`.
    pub gradient_bound: f64,
    pub constants: [RegularityConstants; 2],
    pub override_admissibility: bool,
    /// Evaluate the weighted error functional against a monolithic solve of
    /// every step.
    pub monitor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    NonConvergence,
    Diverged,
    Other,
}

#[derive(Clone, Debug)]
pub struct StepFailure {
    pub time_step: usize,
    pub kind: FailureKind,
    pub message: String,
    pub report: Option<IterationReport>,
}

#[derive(Clone, Debug)]
pub struct SolutionTrajectory {
    pub admissibility: AdmissibilityReport,
    pub params: SchemeParams,
    pub times: Vec<f64>,
    /// Converged states per time level, including the initial data.
    pub states: Vec<[SubdomainState; 2]>,
    /// Converged Robin data per level; `None` for the initial level.
    pub interfaces: Vec<Option<InterfaceSet>>,
    pub reports: Vec<IterationReport>,
    /// Discrete `max |∇(p - z)|` of each stored level.
    pub gradient_estimates: Vec<f64>,
    pub failure: Option<StepFailure>,
}

impl SolutionTrajectory {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last_states(&self) -> &[SubdomainState; 2] {
        self.states.last().expect("trajectory holds the initial level")
    }
}

/// Largest discrete gradient over both subdomains.
pub fn gradient_estimate(problem: &Problem, states: &[SubdomainState; 2]) -> f64 {
    Subdomain::ALL
        .iter()
        .map(|&s| problem.max_gradient(problem.patch(s), &states[s.index()]))
        .fold(0.0, f64::max)
}

/// Advances `n = 1..N`. Fails up front when the parameters are not
/// admissible and no override is set; a step failure truncates the
/// trajectory and is recorded in it.
pub fn run_simulation(problem: &Problem, settings: &SimulationSettings) -> Result<SolutionTrajectory> {
    let mut params = settings.params.clone();
    params.tau = settings.grid.tau;
    params.validate()?;
    let admissibility = check_admissibility(&settings.constants, &params, settings.gradient_bound)?;
    if !admissibility.passed() {
        if settings.override_admissibility {
            warn!("admissibility violated, continuing by override: {}", admissibility.summary());
        } else {
            return Err(Error::Admissibility(Box::new(admissibility)));
        }
    }
    let init = problem.initial_states();
    let mut traj = SolutionTrajectory {
        admissibility,
        params: params.clone(),
        times: vec![0.0],
        gradient_estimates: vec![gradient_estimate(problem, &init)],
        states: vec![init],
        interfaces: vec![None],
        reports: Vec::new(),
        failure: None,
    };
    for n in 1..=settings.grid.steps {
        let t_new = settings.grid.time(n);
        let estimate = traj.gradient_estimates[n - 1];
        if estimate > settings.gradient_bound {
            warn!(
                "step {n}: discrete gradient {estimate:.4e} of the previous level exceeds the configured M = {}",
                settings.gradient_bound
            );
        }
        let prev = &traj.states[n - 1];
        let reference = if settings.monitor {
            let (g_prev, _) = problem.merge(prev);
            let star = monolithic_solve(problem, &g_prev, &params, t_new)?;
            Some(MonitorReference::new(problem, problem.split(&star.state), prev, &params, t_new)?)
        } else {
            None
        };
        let input = StepInput {
            prev_time: prev,
            before_prev: (n >= 2).then(|| &traj.states[n - 2]),
            prev_interface: traj.interfaces[n - 1].as_ref(),
            time_step: n,
            t_new,
        };
        match run_step(problem, &input, &params, settings.g_init, reference.as_ref()) {
            Ok((states, g, report)) => {
                traj.gradient_estimates.push(gradient_estimate(problem, &states));
                traj.times.push(t_new);
                traj.states.push(states);
                traj.interfaces.push(Some(g));
                traj.reports.push(report);
            }
            Err(e) => {
                let kind = match &e {
                    Error::NonConvergence { .. } => FailureKind::NonConvergence,
                    Error::Diverged { .. } => FailureKind::Diverged,
                    _ => FailureKind::Other,
                };
                warn!("step {n} failed: {e}");
                traj.failure = Some(StepFailure {
                    time_step: n,
                    kind,
                    message: e.to_string(),
                    report: e.report().cloned(),
                });
                break;
            }
        }
    }
    info!(
        "simulation finished: {} of {} steps",
        traj.reports.len(),
        settings.grid.steps
    );
    Ok(traj)
}
