//! Two-layer structured triangulation of a rectangle.
//!
//! Nodes are numbered row by row, `id = iy·(nx+1) + ix`. Each cell is cut by
//! its SW–NE diagonal. The interface `Γ` is the vertical grid line
//! `ix = split_index`; `Ω₁` lies to its left and `Ω₂` to its right.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    One,
    Two,
}

impl Subdomain {
    pub const ALL: [Subdomain; 2] = [Subdomain::One, Subdomain::Two];

    pub fn index(self) -> usize {
        match self {
            Subdomain::One => 0,
            Subdomain::Two => 1,
        }
    }

    /// 1 or 2.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn other(self) -> Self {
        match self {
            Subdomain::One => Subdomain::Two,
            Subdomain::Two => Subdomain::One,
        }
    }

    /// x-component of the outward unit normal on `Γ`.
    pub fn normal_x(self) -> f64 {
        match self {
            Subdomain::One => 1.0,
            Subdomain::Two => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    Interior(Subdomain),
    Interface,
    OuterBoundary(Subdomain),
}

#[derive(Clone, Debug)]
pub struct TwoLayerMesh {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub split_index: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub node_class: Vec<NodeClass>,
    pub triangle_subdomain: Vec<Subdomain>,
}

pub fn build_mesh(lx: f64, ly: f64, nx: usize, ny: usize, split_index: usize) -> Result<TwoLayerMesh> {
    if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
        return Err(Error::config(format!("lx and ly must be positive, got ({lx}, {ly})")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::config(format!("nx and ny must be at least 1, got ({nx}, {ny})")));
    }
    if split_index == 0 || split_index >= nx {
        return Err(Error::config(format!(
            "split_index must lie strictly inside (0, nx = {nx}), got {split_index}"
        )));
    }
    let hy = ly / ny as f64;
    let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut node_class = Vec::with_capacity(nodes.capacity());
    for iy in 0..=ny {
        for ix in 0..=nx {
            // x of interface nodes is computed exactly as lx·split/nx
            let x = if ix == nx { lx } else { lx * ix as f64 / nx as f64 };
            let y = if iy == ny { ly } else { iy as f64 * hy };
            nodes.push([x, y]);
            let side = if ix < split_index { Subdomain::One } else { Subdomain::Two };
            node_class.push(if ix == split_index {
                NodeClass::Interface
            } else if ix == 0 || ix == nx || iy == 0 || iy == ny {
                NodeClass::OuterBoundary(side)
            } else {
                NodeClass::Interior(side)
            });
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut triangle_subdomain = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (sw, se, ne, nw) = (id(ix, iy), id(ix + 1, iy), id(ix + 1, iy + 1), id(ix, iy + 1));
            let side = if ix < split_index { Subdomain::One } else { Subdomain::Two };
            triangles.push([sw, se, ne]);
            triangles.push([sw, ne, nw]);
            triangle_subdomain.push(side);
            triangle_subdomain.push(side);
        }
    }
    Ok(TwoLayerMesh {
        lx,
        ly,
        nx,
        ny,
        split_index,
        nodes,
        triangles,
        node_class,
        triangle_subdomain,
    })
}

impl TwoLayerMesh {
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn interface_x(&self) -> f64 {
        self.lx * self.split_index as f64 / self.nx as f64
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    /// Interface node ids ordered bottom to top.
    pub fn interface_nodes(&self) -> Vec<usize> {
        (0..=self.ny).map(|iy| self.node_id(self.split_index, iy)).collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    fn columns(&self, sub: Subdomain) -> std::ops::RangeInclusive<usize> {
        match sub {
            Subdomain::One => 0..=self.split_index,
            Subdomain::Two => self.split_index..=self.nx,
        }
    }

    /// Node/element view of one subdomain. Local node order is row-major
    /// within the subdomain's columns.
    pub fn patch(&self, sub: Subdomain) -> Patch {
        let cols = self.columns(sub);
        let mut nodes = Vec::new();
        for iy in 0..=self.ny {
            for ix in cols.clone() {
                nodes.push(self.node_id(ix, iy));
            }
        }
        let triangles = (0..self.triangles.len())
            .filter(|&t| self.triangle_subdomain[t] == sub)
            .collect();
        Patch::from_parts(self, nodes, triangles, true)
    }

    /// The undecomposed domain; interface nodes are shared.
    pub fn global_patch(&self) -> Patch {
        Patch::from_parts(
            self,
            (0..self.nodes.len()).collect(),
            (0..self.triangles.len()).collect(),
            false,
        )
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        matches!(self.node_class[node], NodeClass::OuterBoundary(_))
    }
}

/// P1 element geometry: area and gradients of the barycentric shape functions.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeom {
    pub area: f64,
    pub grad: [[f64; 2]; 3],
}

impl ElementGeom {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grad[i] = [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det];
        }
        Self {
            area: 0.5 * det,
            grad,
        }
    }

    /// `∫_K ∇φ_i·∇φ_j`.
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        self.area * (self.grad[i][0] * self.grad[j][0] + self.grad[i][1] * self.grad[j][1])
    }

    /// Gradient of the P1 interpolant with vertex values `v`.
    pub fn gradient(&self, v: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (i, vi) in v.iter().enumerate() {
            g[0] += vi * self.grad[i][0];
            g[1] += vi * self.grad[i][1];
        }
        g
    }
}

/// A set of triangles together with its nodes, free-DOF numbering and
/// interface nodes, in local numbering.
#[derive(Clone, Debug)]
pub struct Patch {
    /// Subdomain this patch covers, `None` for the whole domain.
    pub subdomain: Option<Subdomain>,
    /// Local → global node id.
    pub nodes: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    /// Local vertex indices.
    pub triangles: Vec<[usize; 3]>,
    pub geometry: Vec<ElementGeom>,
    pub triangle_layer: Vec<Subdomain>,
    /// Local ids of the unknowns, in equation order.
    pub free_nodes: Vec<usize>,
    /// Local id → equation index.
    pub equation: Vec<Option<usize>>,
    /// Local ids of the interface nodes, bottom to top.
    pub interface: Vec<usize>,
    /// Lumped mass `Σ_K |K|/3` per local node.
    pub lumped_mass: Vec<f64>,
}

impl Patch {
    fn from_parts(mesh: &TwoLayerMesh, nodes: Vec<usize>, tris: Vec<usize>, sub: bool) -> Patch {
        let mut local = vec![usize::MAX; mesh.nodes.len()];
        for (l, &g) in nodes.iter().enumerate() {
            local[g] = l;
        }
        let triangles: Vec<[usize; 3]> = tris.iter().map(|&t| mesh.triangles[t].map(|g| local[g])).collect();
        let triangle_layer = tris.iter().map(|&t| mesh.triangle_subdomain[t]).collect();
        let coords: Vec<[f64; 2]> = nodes.iter().map(|&g| mesh.nodes[g]).collect();
        let geometry: Vec<ElementGeom> = triangles
            .iter()
            .map(|t| ElementGeom::new(t.map(|i| coords[i])))
            .collect();
        let mut equation = vec![None; nodes.len()];
        let mut free_nodes = Vec::new();
        for (l, &g) in nodes.iter().enumerate() {
            if !mesh.is_dirichlet(g) {
                equation[l] = Some(free_nodes.len());
                free_nodes.push(l);
            }
        }
        let interface = mesh.interface_nodes().into_iter().map(|g| local[g]).collect();
        let mut lumped_mass = vec![0.0; nodes.len()];
        for (t, geom) in triangles.iter().zip(&geometry) {
            for &i in t {
                lumped_mass[i] += geom.area / 3.0;
            }
        }
        let subdomain = if sub { Some(mesh.triangle_subdomain[tris[0]]) } else { None };
        Patch {
            subdomain,
            nodes,
            coords,
            triangles,
            geometry,
            triangle_layer,
            free_nodes,
            equation,
            interface,
            lumped_mass,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn is_free(&self, local: usize) -> bool {
        self.equation[local].is_some()
    }

    /// `Σ_j m_j v_j²` with the lumped mass.
    pub fn lumped_norm_sq(&self, v: &[f64]) -> f64 {
        self.lumped_mass.iter().zip(v).map(|(m, x)| m * x * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubdomainDofMap {
    pub subdomain: Subdomain,
    /// Global node ids of the unknowns (interface nodes included).
    pub free_dofs: Vec<usize>,
    /// Global interface node ids, bottom to top.
    pub interface_dofs: Vec<usize>,
}

pub fn dof_maps(mesh: &TwoLayerMesh) -> (SubdomainDofMap, SubdomainDofMap) {
    let map = |sub| {
        let p = mesh.patch(sub);
        SubdomainDofMap {
            subdomain: sub,
            free_dofs: p.free_nodes.iter().map(|&l| p.nodes[l]).collect(),
            interface_dofs: p.interface.iter().map(|&l| p.nodes[l]).collect(),
        }
    };
    (map(Subdomain::One), map(Subdomain::Two))
}

#[derive(Clone, Debug)]
pub struct InterfaceTrace {
    pub nodes: Vec<usize>,
    /// Local patch index of each interface node, per subdomain.
    pub local: [Vec<usize>; 2],
    /// Lumped `∫_Γ φ_j` per interface node.
    pub weights: Vec<f64>,
    /// Segment lengths between consecutive interface nodes.
    pub segments: Vec<f64>,
}

pub fn interface_trace(mesh: &TwoLayerMesh) -> InterfaceTrace {
    let nodes = mesh.interface_nodes();
    let segments: Vec<f64> = nodes.windows(2).map(|w| mesh.nodes[w[1]][1] - mesh.nodes[w[0]][1]).collect();
    let mut weights = vec![0.0; nodes.len()];
    for (k, h) in segments.iter().enumerate() {
        weights[k] += 0.5 * h;
        weights[k + 1] += 0.5 * h;
    }
    let local = Subdomain::ALL.map(|s| mesh.patch(s).interface);
    InterfaceTrace {
        nodes,
        local,
        weights,
        segments,
    }
}

impl InterfaceTrace {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Interface values of a subdomain nodal vector.
    pub fn restrict(&self, sub: Subdomain, v: &[f64]) -> Vec<f64> {
        self.local[sub.index()].iter().map(|&i| v[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairingMode {
    #[default]
    Lumped,
    Consistent,
}

/// Discrete `L²(Γ)` inner product: the lumped diagonal or the consistent
/// tridiagonal interface mass matrix.
#[derive(Clone, Debug)]
pub struct InterfacePairing {
    pub mode: PairingMode,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl InterfacePairing {
    pub fn new(trace: &InterfaceTrace, mode: PairingMode) -> Self {
        let n = trace.len();
        match mode {
            PairingMode::Lumped => Self {
                mode,
                diag: trace.weights.clone(),
                off: vec![0.0; n.saturating_sub(1)],
            },
            PairingMode::Consistent => {
                let mut diag = vec![0.0; n];
                for (k, h) in trace.segments.iter().enumerate() {
                    diag[k] += h / 3.0;
                    diag[k + 1] += h / 3.0;
                }
                Self {
                    mode,
                    diag,
                    off: trace.segments.iter().map(|h| h / 6.0).collect(),
                }
            }
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off
    }

    /// `B·v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// `B⁻¹·r` (Thomas algorithm; `B` is diagonally dominant).
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        if self.mode == PairingMode::Lumped {
            return r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = if n > 1 { self.off[0] / self.diag[0] } else { 0.0 };
        d[0] = r[0] / self.diag[0];
        for i in 1..n {
            let m = self.diag[i] - self.off[i - 1] * c[i - 1];
            if i + 1 < n {
                c[i] = self.off[i] / m;
            }
            d[i] = (r[i] - self.off[i - 1] * d[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.apply(a).iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smallest_mesh() {
        let m = build_mesh(1.0, 1.0, 2, 1, 1).unwrap();
        assert_eq!(m.nodes.len(), 6);
        assert_eq!(m.triangles.len(), 4);
        let iface = m.interface_nodes();
        assert_eq!(iface.len(), 2);
        for &i in &iface {
            assert_eq!(m.nodes[i][0], 0.5);
            assert_eq!(m.node_class[i], NodeClass::Interface);
        }
    }

    #[test]
    fn split_must_be_interior() {
        assert!(build_mesh(1.0, 1.0, 1, 1, 1).is_err());
        assert!(build_mesh(1.0, 1.0, 4, 1, 0).is_err());
        assert!(build_mesh(1.0, 1.0, 0, 1, 0).is_err());
        assert!(build_mesh(-1.0, 1.0, 4, 1, 2).is_err());
    }

    #[test]
    fn counts_16_by_8() {
        let m = build_mesh(2.0, 1.0, 16, 8, 8).unwrap();
        assert_eq!(m.nodes.len(), 153);
        assert_eq!(m.triangles.len(), 256);
        assert_eq!(m.interface_nodes().len(), 9);
    }

    #[test]
    fn triangles_positive_and_cover_domain() {
        let m = build_mesh(2.0, 1.0, 16, 8, 5).unwrap();
        let total: f64 = (0..m.triangles.len()).map(|t| m.triangle_area(t)).sum();
        assert!((0..m.triangles.len()).all(|t| m.triangle_area(t) > 0.0));
        assert_relative_eq!(total, 2.0, max_relative = 1e-12);
        let xi = m.interface_x();
        for (t, tri) in m.triangles.iter().enumerate() {
            let left = tri.iter().all(|&i| m.nodes[i][0] <= xi);
            let right = tri.iter().all(|&i| m.nodes[i][0] >= xi);
            match m.triangle_subdomain[t] {
                Subdomain::One => assert!(left),
                Subdomain::Two => assert!(right),
            }
        }
    }

    #[test]
    fn refinement_preserves_interface_line() {
        let a = build_mesh(3.0, 1.0, 6, 2, 2).unwrap();
        let b = build_mesh(3.0, 1.0, 12, 4, 4).unwrap();
        assert_eq!(a.interface_x(), b.interface_x());
        for &i in &b.interface_nodes() {
            assert_eq!(b.nodes[i][0], a.interface_x());
        }
    }

    #[test]
    fn dof_maps_on_smallest_mesh() {
        let m = build_mesh(1.0, 1.0, 2, 1, 1).unwrap();
        let (d1, d2) = dof_maps(&m);
        assert_eq!(d1.free_dofs, m.interface_nodes());
        assert_eq!(d2.free_dofs, m.interface_nodes());
        assert_eq!(d1.interface_dofs, d2.interface_dofs);
    }

    #[test]
    fn free_dof_count_matches_enumeration() {
        let m = build_mesh(2.0, 1.0, 16, 8, 8).unwrap();
        let (d1, d2) = dof_maps(&m);
        // brute force: columns 0..=8, drop x = 0 and y ∈ {0, ly} unless on Γ
        let mut count = 0;
        for iy in 0..=8 {
            for ix in 0..=8 {
                let on_gamma = ix == 8;
                let outer = ix == 0 || iy == 0 || iy == 8;
                if on_gamma || !outer {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 58);
        assert_eq!(d1.free_dofs.len(), count);
        assert_eq!(d2.free_dofs.len(), count);
        for d in [&d1, &d2] {
            assert!(d.free_dofs.iter().all(|&i| !m.is_dirichlet(i)));
            assert!(d.interface_dofs.iter().all(|i| d.free_dofs.contains(i)));
        }
    }

    #[test]
    fn trapezoid_weights() {
        let m = build_mesh(1.0, 1.0, 2, 1, 1).unwrap();
        assert_eq!(interface_trace(&m).weights, vec![0.5, 0.5]);
        let m = build_mesh(1.0, 1.0, 2, 4, 1).unwrap();
        let t = interface_trace(&m);
        assert_eq!(t.weights, vec![0.125, 0.25, 0.25, 0.25, 0.125]);
        let ones = vec![1.0; t.len()];
        for mode in [PairingMode::Lumped, PairingMode::Consistent] {
            let b = InterfacePairing::new(&t, mode);
            assert_relative_eq!(b.inner(&ones, &ones), 1.0, max_relative = 1e-14);
        }
        let p = m.patch(Subdomain::Two);
        assert_eq!(t.restrict(Subdomain::Two, &vec![1.0; p.len()]), ones);
    }

    #[test]
    fn consistent_pairing_solve_inverts_apply() {
        let m = build_mesh(1.0, 2.0, 4, 7, 2).unwrap();
        let t = interface_trace(&m);
        let b = InterfacePairing::new(&t, PairingMode::Consistent);
        let v: Vec<f64> = (0..t.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let back = b.solve(&b.apply(&v));
        for (x, y) in v.iter().zip(&back) {
            assert_relative_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn patch_lumped_mass_sums_to_area() {
        let m = build_mesh(2.0, 1.0, 8, 4, 3).unwrap();
        let p1 = m.patch(Subdomain::One);
        let p2 = m.patch(Subdomain::Two);
        let g = m.global_patch();
        let s = |p: &Patch| p.lumped_mass.iter().sum::<f64>();
        assert_relative_eq!(s(&p1), 2.0 * 3.0 / 8.0, max_relative = 1e-13);
        assert_relative_eq!(s(&p1) + s(&p2), s(&g), max_relative = 1e-13);
        assert_eq!(p1.len(), 4 * 5);
        assert_eq!(p2.len(), 6 * 5);
        assert!(p1.interface.iter().all(|&i| p1.is_free(i)));
    }

    #[test]
    fn element_gradient_is_exact_for_linears() {
        let e = ElementGeom::new([[0.0, 0.0], [0.5, 0.0], [0.5, 0.25]]);
        let f = |p: [f64; 2]| 3.0 * p[0] - 2.0 * p[1] + 1.0;
        let g = e.gradient([f([0.0, 0.0]), f([0.5, 0.0]), f([0.5, 0.25])]);
        assert_relative_eq!(g[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], -2.0, epsilon = 1e-14);
        let row: f64 = (0..3).map(|j| e.stiffness(0, j)).sum();
        assert!(row.abs() < 1e-14);
    }
}
