//! The assembled simulation context: mesh, constitutive model, data fields
//! and the per-subdomain views shared by the solvers.

use std::fmt;
use std::sync::Arc;

use crate::constitutive::{LayerParams, Phase, PhaseParams, Phases};
use crate::error::{Error, Result};
use crate::mesh::{interface_trace, InterfacePairing, InterfaceTrace, PairingMode, Patch, Subdomain, TwoLayerMesh};

/// A scalar field on the domain, possibly time dependent.
#[derive(Clone, Default)]
pub enum ScalarField {
    #[default]
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
    /// Time-independent values indexed by global node id.
    Nodal(Arc<Vec<f64>>),
}

impl ScalarField {
    pub fn function(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    pub fn eval(&self, node: usize, p: [f64; 2], t: f64) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Function(f) => f(p[0], p[1], t),
            ScalarField::Nodal(v) => v[node],
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => f.write_str("Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Function(_) => f.write_str("Function(..)"),
            ScalarField::Nodal(v) => write!(f, "Nodal(len {})", v.len()),
        }
    }
}

/// Right-hand sides `f_{α,l}`, indexed `[phase][layer]`.
#[derive(Clone, Debug, Default)]
pub struct SourceSpec {
    pub f: [[ScalarField; 2]; 2],
}

impl SourceSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Same source in both layers.
    pub fn uniform(f_w: ScalarField, f_g: ScalarField) -> Self {
        Self {
            f: [[f_w.clone(), f_w], [f_g.clone(), f_g]],
        }
    }

    pub fn get(&self, phase: Phase, layer: Subdomain) -> &ScalarField {
        &self.f[phase.index()][layer.index()]
    }

    /// Multiplies every source by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |s: &ScalarField| {
            let s = s.clone();
            ScalarField::function(move |x, y, t| factor * s.eval(0, [x, y], t))
        };
        Self {
            f: [
                [scale(&self.f[0][0]), scale(&self.f[0][1])],
                [scale(&self.f[1][0]), scale(&self.f[1][1])],
            ],
        }
    }
}

/// Layer properties, fluid properties and gravity.
#[derive(Clone, Debug)]
pub struct Model {
    pub layers: [LayerParams; 2],
    pub phases: Phases,
    /// Gravitational acceleration; `z_α = ρ_α·g·y`.
    pub gravity: f64,
}

impl Model {
    pub fn layer(&self, l: Subdomain) -> &LayerParams {
        &self.layers[l.index()]
    }

    pub fn phase(&self, phase: Phase) -> &PhaseParams {
        self.phases.get(phase)
    }

    /// `∇z_α`.
    pub fn gravity_gradient(&self, phase: Phase) -> [f64; 2] {
        [0.0, self.phase(phase).density * self.gravity]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MassMode {
    #[default]
    Lumped,
    Consistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discretization {
    pub mass: MassMode,
    pub pairing: PairingMode,
    /// Run the four subdomain solves of an iteration on the rayon pool.
    pub parallel: bool,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            mass: MassMode::Lumped,
            pairing: PairingMode::Lumped,
            parallel: true,
        }
    }
}

/// Nodal wetting and nonwetting pressures on one subdomain (or, for the
/// monolithic solver, on the whole mesh), in the patch's local numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainState {
    pub p_w: Vec<f64>,
    pub p_g: Vec<f64>,
    pub time_level: usize,
    pub iterate_index: usize,
}

pub type GlobalState = SubdomainState;

impl SubdomainState {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_w: vec![0.0; n],
            p_g: vec![0.0; n],
            time_level: 0,
            iterate_index: 0,
        }
    }

    pub fn pressure(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Wetting => &self.p_w,
            Phase::Nonwetting => &self.p_g,
        }
    }

    pub fn pressure_mut(&mut self, phase: Phase) -> &mut Vec<f64> {
        match phase {
            Phase::Wetting => &mut self.p_w,
            Phase::Nonwetting => &mut self.p_g,
        }
    }

    pub fn len(&self) -> usize {
        self.p_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_w.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.p_w.iter().chain(&self.p_g).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: TwoLayerMesh,
    pub model: Model,
    pub sources: SourceSpec,
    /// Dirichlet data on `∂Ω \ Γ`, per phase.
    pub boundary: [ScalarField; 2],
    /// Initial pressures, per phase.
    pub initial: [ScalarField; 2],
    pub disc: Discretization,
    pub patches: [Patch; 2],
    pub global: Patch,
    pub trace: InterfaceTrace,
    pub pairing: InterfacePairing,
}

impl Problem {
    pub fn new(mesh: TwoLayerMesh, model: Model, sources: SourceSpec, disc: Discretization) -> Self {
        let patches = Subdomain::ALL.map(|s| mesh.patch(s));
        let global = mesh.global_patch();
        let trace = interface_trace(&mesh);
        let pairing = InterfacePairing::new(&trace, disc.pairing);
        Self {
            mesh,
            model,
            sources,
            boundary: Default::default(),
            initial: Default::default(),
            disc,
            patches,
            global,
            trace,
            pairing,
        }
    }

    pub fn with_boundary(mut self, p_w: ScalarField, p_g: ScalarField) -> Self {
        self.boundary = [p_w, p_g];
        self
    }

    pub fn with_initial(mut self, p_w: ScalarField, p_g: ScalarField) -> Self {
        self.initial = [p_w, p_g];
        self
    }

    pub fn patch(&self, sub: Subdomain) -> &Patch {
        &self.patches[sub.index()]
    }

    pub fn boundary_value(&self, phase: Phase, node: usize, t: f64) -> f64 {
        self.boundary[phase.index()].eval(node, self.mesh.nodes[node], t)
    }

    /// Overwrites the Dirichlet nodes of `state` with the boundary data at `t`.
    pub fn apply_dirichlet(&self, patch: &Patch, state: &mut SubdomainState, t: f64) {
        for (l, &g) in patch.nodes.iter().enumerate() {
            if !patch.is_free(l) {
                for phase in Phase::ALL {
                    state.pressure_mut(phase)[l] = self.boundary_value(phase, g, t);
                }
            }
        }
    }

    fn sample(&self, patch: &Patch, fields: &[ScalarField; 2], t: f64) -> SubdomainState {
        let mut s = SubdomainState::zeros(patch.len());
        for (l, &g) in patch.nodes.iter().enumerate() {
            for phase in Phase::ALL {
                s.pressure_mut(phase)[l] = fields[phase.index()].eval(g, patch.coords[l], t);
            }
        }
        s
    }

    /// Initial pressures on both subdomains, Dirichlet nodes taken from the
    /// boundary data at `t = 0`.
    pub fn initial_states(&self) -> [SubdomainState; 2] {
        Subdomain::ALL.map(|s| {
            let patch = self.patch(s);
            let mut st = self.sample(patch, &self.initial, 0.0);
            self.apply_dirichlet(patch, &mut st, 0.0);
            st
        })
    }

    /// Interpolates arbitrary per-phase fields on a subdomain.
    pub fn interpolate(&self, sub: Subdomain, fields: &[ScalarField; 2], t: f64) -> SubdomainState {
        self.sample(self.patch(sub), fields, t)
    }

    pub fn interpolate_global(&self, fields: &[ScalarField; 2], t: f64) -> GlobalState {
        self.sample(&self.global, fields, t)
    }

    /// Joins subdomain states into a global one. Interface values are the
    /// mean of both traces; the returned number is the largest trace jump.
    pub fn merge(&self, states: &[SubdomainState; 2]) -> (GlobalState, f64) {
        let n = self.mesh.nodes.len();
        let mut g = SubdomainState::zeros(n);
        g.time_level = states[0].time_level;
        g.iterate_index = states[0].iterate_index;
        let mut jump = 0.0f64;
        for sub in Subdomain::ALL {
            let patch = self.patch(sub);
            for (l, &gid) in patch.nodes.iter().enumerate() {
                for phase in Phase::ALL {
                    g.pressure_mut(phase)[gid] = states[sub.index()].pressure(phase)[l];
                }
            }
        }
        for (k, &gid) in self.trace.nodes.iter().enumerate() {
            for phase in Phase::ALL {
                let a = states[0].pressure(phase)[self.trace.local[0][k]];
                let b = states[1].pressure(phase)[self.trace.local[1][k]];
                jump = jump.max((a - b).abs());
                g.pressure_mut(phase)[gid] = 0.5 * (a + b);
            }
        }
        (g, jump)
    }

    /// Restricts a global state to the two subdomains.
    pub fn split(&self, global: &GlobalState) -> [SubdomainState; 2] {
        Subdomain::ALL.map(|sub| {
            let patch = self.patch(sub);
            let mut s = SubdomainState::zeros(patch.len());
            s.time_level = global.time_level;
            s.iterate_index = global.iterate_index;
            for (l, &gid) in patch.nodes.iter().enumerate() {
                for phase in Phase::ALL {
                    s.pressure_mut(phase)[l] = global.pressure(phase)[gid];
                }
            }
            s
        })
    }

    pub fn check_state(&self, sub: Subdomain, state: &SubdomainState) -> Result<()> {
        let n = self.patch(sub).len();
        if state.p_w.len() != n || state.p_g.len() != n {
            return Err(Error::domain(format!(
                "state on subdomain {} has length ({}, {}), expected {n}",
                sub.number(),
                state.p_w.len(),
                state.p_g.len()
            )));
        }
        if !state.is_finite() {
            return Err(Error::domain(format!("non-finite pressure on subdomain {}", sub.number())));
        }
        Ok(())
    }

    /// Largest element-wise `|∇(p_α - z_α)|` on a patch.
    pub fn max_gradient(&self, patch: &Patch, state: &SubdomainState) -> f64 {
        let mut worst = 0.0f64;
        for phase in Phase::ALL {
            let gz = self.model.gravity_gradient(phase);
            let p = state.pressure(phase);
            for (t, geom) in patch.triangles.iter().zip(&patch.geometry) {
                let g = geom.gradient(t.map(|i| p[i]));
                worst = worst.max(((g[0] - gz[0]).powi(2) + (g[1] - gz[1]).powi(2)).sqrt());
            }
        }
        worst
    }
}
