//! P1 assembly of the linearised phase equations, the interior weak-form
//! residual and the variational interface flux.
//!
//! One L-scheme system for phase `α` on a patch reads
//!
//! ```text
//! (L·M + τ·A(k^{i-1}) + τλ·B_Γ) p^i
//!     = L·M p^{i-1} + (-1)^{δ_{α,w}} M (ΦS^{i-1} - ΦS^{n-1}) + τ M f
//!       + τ⟨k^{i-1}∇z_α, ∇φ⟩ - τ B_Γ g
//! ```
//!
//! with `M` the (lumped) mass matrix, `A` the stiffness matrix with an
//! element-constant mobility evaluated at the vertex mean of the previous
//! iterate's saturation, and `B_Γ` the interface pairing. The monolithic
//! variant uses the global patch and drops the `Γ` terms.

use crate::constitutive::Phase;
use crate::dd_solver::{InterfaceData, SchemeParams};
use crate::error::{Error, Result};
use crate::linalg::{pcg, CgOutcome, CsrMatrix, TripletBuilder};
use crate::mesh::{InterfacePairing, Patch, Subdomain};
use crate::problem::{MassMode, Model, Problem, SourceSpec, SubdomainState};

/// Linear system on the free DOFs of a patch.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn solve(&self, x0: &mut [f64], rel_tol: f64) -> CgOutcome {
        let n = self.rhs.len();
        pcg(&self.matrix, &self.rhs, x0, rel_tol, 20 * n + 200)
    }
}

/// Element-local mass matrix entry.
#[inline]
fn mass_entry(mode: MassMode, area: f64, i: usize, j: usize) -> f64 {
    match mode {
        MassMode::Lumped => {
            if i == j {
                area / 3.0
            } else {
                0.0
            }
        }
        MassMode::Consistent => {
            if i == j {
                area / 6.0
            } else {
                area / 12.0
            }
        }
    }
}

/// Wetting saturation at each vertex of each triangle, using the law of the
/// triangle's layer.
pub fn vertex_saturations(patch: &Patch, model: &Model, state: &SubdomainState) -> Vec<[f64; 3]> {
    patch
        .triangles
        .iter()
        .zip(&patch.triangle_layer)
        .map(|(t, &l)| {
            let layer = model.layer(l);
            t.map(|i| layer.saturation_pc(state.p_g[i] - state.p_w[i]))
        })
        .collect()
}

/// Element-constant mobility of `phase`, evaluated at the vertex-mean
/// saturation of `state`.
pub fn element_mobility(patch: &Patch, model: &Model, phase: Phase, state: &SubdomainState) -> Vec<f64> {
    let params = model.phase(phase);
    vertex_saturations(patch, model, state)
        .iter()
        .zip(&patch.triangle_layer)
        .map(|(s, &l)| {
            let mean = (s[0] + s[1] + s[2]) / 3.0;
            model.layer(l).mobility_unchecked(params, mean)
        })
        .collect()
}

/// `M·(Φ S(state))` over all patch nodes.
pub fn storage(patch: &Patch, model: &Model, mode: MassMode, state: &SubdomainState) -> Vec<f64> {
    let mut out = vec![0.0; patch.len()];
    let sat = vertex_saturations(patch, model, state);
    for (k, t) in patch.triangles.iter().enumerate() {
        let phi = model.layer(patch.triangle_layer[k]).porosity;
        let area = patch.geometry[k].area;
        for a in 0..3 {
            for b in 0..3 {
                out[t[a]] += phi * mass_entry(mode, area, a, b) * sat[k][b];
            }
        }
    }
    out
}

/// Robin part of a subdomain system.
#[derive(Clone, Copy, Debug)]
pub struct Robin<'a> {
    pub lambda: f64,
    pub g: &'a [f64],
    pub pairing: &'a InterfacePairing,
    pub interface: &'a [usize],
}

/// Scalars of one linearised solve on a patch.
#[derive(Clone, Copy, Debug)]
pub struct Linearization<'a> {
    /// `L_{α,l}` by layer.
    pub l: [f64; 2],
    pub tau: f64,
    /// New time level.
    pub t: f64,
    pub robin: Option<Robin<'a>>,
}

fn source_values(patch: &Patch, sources: &SourceSpec, phase: Phase, t: f64) -> Vec<[f64; 3]> {
    patch
        .triangles
        .iter()
        .zip(&patch.triangle_layer)
        .map(|(tri, &l)| {
            let f = sources.get(phase, l);
            tri.map(|i| f.eval(patch.nodes[i], patch.coords[i], t))
        })
        .collect()
}

/// Assembles the L-scheme system of `phase` on `patch`. Dirichlet nodes of
/// `prev_iter` must already hold the boundary values at the new time level.
pub fn assemble_patch(
    patch: &Patch,
    model: &Model,
    mode: MassMode,
    sources: &SourceSpec,
    phase: Phase,
    prev_iter: &SubdomainState,
    prev_time: &SubdomainState,
    lin: &Linearization<'_>,
) -> Result<SparseSystem> {
    let n = patch.num_free();
    let tau = lin.tau;
    let sign = phase.storage_sign();
    let p_prev = prev_iter.pressure(phase);
    let mob = element_mobility(patch, model, phase, prev_iter);
    let s_iter = vertex_saturations(patch, model, prev_iter);
    let s_old = vertex_saturations(patch, model, prev_time);
    let f = source_values(patch, sources, phase, lin.t);
    let gz = model.gravity_gradient(phase);

    let mut trip = TripletBuilder::new(n);
    let mut rhs = vec![0.0; n];
    for (k, tri) in patch.triangles.iter().enumerate() {
        let geom = &patch.geometry[k];
        let layer = patch.triangle_layer[k];
        let big_l = lin.l[layer.index()];
        let phi = model.layer(layer).porosity;
        for a in 0..3 {
            let Some(row) = patch.equation[tri[a]] else {
                continue;
            };
            let mut r = 0.0;
            for b in 0..3 {
                let m = mass_entry(mode, geom.area, a, b);
                let lhs = big_l * m + tau * mob[k] * geom.stiffness(a, b);
                r += big_l * m * p_prev[tri[b]];
                r += sign * phi * m * (s_iter[k][b] - s_old[k][b]);
                r += tau * m * f[k][b];
                match patch.equation[tri[b]] {
                    Some(col) => trip.add(row, col, lhs),
                    None => r -= lhs * p_prev[tri[b]],
                }
            }
            r += tau * mob[k] * geom.area * (gz[0] * geom.grad[a][0] + gz[1] * geom.grad[a][1]);
            rhs[row] += r;
        }
    }
    if let Some(robin) = lin.robin {
        let bg = robin.pairing.apply(robin.g);
        let (diag, off) = (robin.pairing.diagonal(), robin.pairing.off_diagonal());
        for (k, &node) in robin.interface.iter().enumerate() {
            let row = patch.equation[node].expect("interface nodes are free");
            trip.add(row, row, tau * robin.lambda * diag[k]);
            if k + 1 < robin.interface.len() && off[k] != 0.0 {
                let col = patch.equation[robin.interface[k + 1]].expect("interface nodes are free");
                trip.add(row, col, tau * robin.lambda * off[k]);
                trip.add(col, row, tau * robin.lambda * off[k]);
            }
            rhs[row] -= tau * bg[k];
        }
    }
    let matrix = trip.build();
    if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Assembly {
            dof: patch.nodes[patch.free_nodes[i]],
            what: "right-hand side".into(),
        });
    }
    if let Some(k) = matrix.val.iter().position(|v| !v.is_finite()) {
        let row = matrix.row_ptr.partition_point(|&p| p <= k) - 1;
        return Err(Error::Assembly {
            dof: patch.nodes[patch.free_nodes[row]],
            what: "matrix".into(),
        });
    }
    Ok(SparseSystem { matrix, rhs })
}

/// L-scheme system of `phase` on subdomain `sub` with interface data `g_cur`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_lscheme(
    problem: &Problem,
    phase: Phase,
    sub: Subdomain,
    prev_iter: &SubdomainState,
    prev_time: &SubdomainState,
    g_cur: &InterfaceData,
    params: &SchemeParams,
    t_new: f64,
) -> Result<SparseSystem> {
    let patch = problem.patch(sub);
    problem.check_state(sub, prev_iter)?;
    problem.check_state(sub, prev_time)?;
    if g_cur.values.len() != patch.interface.len() || g_cur.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("interface data must be finite and match the interface length"));
    }
    let lin = Linearization {
        l: [params.l(phase, sub); 2],
        tau: params.tau,
        t: t_new,
        robin: Some(Robin {
            lambda: params.lambda(phase),
            g: &g_cur.values,
            pairing: &problem.pairing,
            interface: &patch.interface,
        }),
    };
    assemble_patch(
        patch,
        &problem.model,
        problem.disc.mass,
        &problem.sources,
        phase,
        prev_iter,
        prev_time,
        &lin,
    )
}

/// Interior weak-form residual of `phase` at every patch node:
///
/// `(-1)^{δ_{α,w}+1} M(ΦS(state) - ΦS(prev_time)) + τA(k)p - τ⟨k∇z,∇φ⟩ - τMf`
///
/// with `k` taken from `mobility_state`. No interface or Dirichlet terms.
#[allow(clippy::too_many_arguments)]
pub fn weak_residual(
    patch: &Patch,
    model: &Model,
    mode: MassMode,
    sources: &SourceSpec,
    phase: Phase,
    state: &SubdomainState,
    mobility_state: &SubdomainState,
    prev_time: &SubdomainState,
    tau: f64,
    t: f64,
) -> Vec<f64> {
    let sign = -phase.storage_sign();
    let p = state.pressure(phase);
    let mob = element_mobility(patch, model, phase, mobility_state);
    let s_new = vertex_saturations(patch, model, state);
    let s_old = vertex_saturations(patch, model, prev_time);
    let f = source_values(patch, sources, phase, t);
    let gz = model.gravity_gradient(phase);
    let mut r = vec![0.0; patch.len()];
    for (k, tri) in patch.triangles.iter().enumerate() {
        let geom = &patch.geometry[k];
        let phi = model.layer(patch.triangle_layer[k]).porosity;
        for a in 0..3 {
            let mut v = 0.0;
            for b in 0..3 {
                let m = mass_entry(mode, geom.area, a, b);
                v += sign * phi * m * (s_new[k][b] - s_old[k][b]);
                v += tau * mob[k] * geom.stiffness(a, b) * p[tri[b]];
                v -= tau * m * f[k][b];
            }
            v -= tau * mob[k] * geom.area * (gz[0] * geom.grad[a][0] + gz[1] * geom.grad[a][1]);
            r[tri[a]] += v;
        }
    }
    r
}

/// Discrete normal flux `F_α·n_l` on `Γ` recovered from the interior
/// residual: `-B_Γ⁻¹ r_Γ / τ`.
#[allow(clippy::too_many_arguments)]
pub fn variational_flux(
    problem: &Problem,
    phase: Phase,
    sub: Subdomain,
    state: &SubdomainState,
    prev_iter_for_mobility: &SubdomainState,
    prev_time: &SubdomainState,
    sources: &SourceSpec,
    tau: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::domain("variational flux needs a positive time step"));
    }
    let patch = problem.patch(sub);
    for s in [state, prev_iter_for_mobility, prev_time] {
        problem.check_state(sub, s)?;
    }
    let r = weak_residual(
        patch,
        &problem.model,
        problem.disc.mass,
        sources,
        phase,
        state,
        prev_iter_for_mobility,
        prev_time,
        tau,
        t,
    );
    let rg: Vec<f64> = patch.interface.iter().map(|&i| -r[i] / tau).collect();
    Ok(problem.pairing.solve(&rg))
}

/// Problem-1 residual norms per phase for a global state.
pub fn problem1_residual_global(
    problem: &Problem,
    state: &SubdomainState,
    prev_time: &SubdomainState,
    sources: &SourceSpec,
    tau: f64,
    t: f64,
) -> [f64; 2] {
    let patch = &problem.global;
    Phase::ALL.map(|phase| {
        let r = weak_residual(
            patch,
            &problem.model,
            problem.disc.mass,
            sources,
            phase,
            state,
            state,
            prev_time,
            tau,
            t,
        );
        patch.free_nodes.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt()
    })
}

/// Residual of the coupled semi-discrete system evaluated on DD states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledResidual {
    /// Euclidean norm over global free DOFs, `[w, g]`.
    pub norms: [f64; 2],
    /// Largest pressure jump across `Γ`.
    pub interface_jump: f64,
    /// Set when the jump exceeds the supplied tolerance.
    pub flagged: bool,
}

/// Merges subdomain states (interface values averaged) and evaluates the
/// coupled residual on the global space.
pub fn problem1_residual(
    problem: &Problem,
    states: &[SubdomainState; 2],
    prev_time: &[SubdomainState; 2],
    sources: &SourceSpec,
    tau: f64,
    t: f64,
    jump_tol: f64,
) -> CoupledResidual {
    let (g, jump) = problem.merge(states);
    let (old, _) = problem.merge(prev_time);
    CoupledResidual {
        norms: problem1_residual_global(problem, &g, &old, sources, tau, t),
        interface_jump: jump,
        flagged: jump > jump_tol,
    }
}
