//! Taylor-Hood / P1 assembly of the coupled Stokes-elasticity saddle system.
//!
//! Velocity DOFs live on one unified scalar node set (mesh vertices plus
//! fluid edge midpoints), so the kinematic interface condition w_t = u is a
//! matter of bookkeeping: solid vertices reference the same nodes as the
//! fluid trace. Outer-boundary nodes are eliminated, and P2 midpoints on the
//! interface are constrained to the mean of their edge endpoints so the fluid
//! trace space matches the P1 solid trace exactly.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stokes_lame::elements::{
    divergence_element, p1_elastic_element, p1_mass_element, p2_mass_element,
    p2_viscous_element,
};
use crate::stokes_lame::mesh::{EdgeTag, Mesh, Region};

/// Material constants of the solid and the fluid viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// First Lame constant (compression), lambda >= 0.
    pub lambda: f64,
    /// Second Lame constant (shear), mu > 0.
    pub mu: f64,
    /// Fluid viscosity, 1 by default.
    pub viscosity: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            lambda: 1.0,
            mu: 1.0,
            viscosity: 1.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.mu > 0.0) {
            issues.push(format!("mu = {} must be positive", self.mu));
        }
        if !(self.lambda >= 0.0) {
            issues.push(format!("lambda = {} must be nonnegative", self.lambda));
        }
        if !(self.viscosity > 0.0) {
            issues.push(format!("viscosity = {} must be positive", self.viscosity));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(issues.join("; ")))
        }
    }
}

/// How one unconstrained scalar node expands into free velocity DOFs.
#[derive(Debug, Clone)]
enum NodeExpansion {
    Free(usize),
    /// Outer-boundary node, velocity pinned to zero.
    Dirichlet,
    /// Interface midpoint: mean of the two endpoint free nodes.
    Average(usize, usize),
}

/// DOF bookkeeping of the assembled saddle system.
#[derive(Debug, Clone)]
pub struct DofMaps {
    /// Scalar nodes: mesh vertices then fluid edge midpoints.
    pub n_scalar_nodes: usize,
    /// Free scalar velocity nodes (after elimination and constraints).
    pub n_free_scalar: usize,
    /// Pressure DOFs (all fluid vertices).
    pub n_pressure: usize,
    /// Solid vertices carrying displacement DOFs.
    pub solid_vertices: Vec<usize>,
    /// Interface vertices, ascending; the trace space is P1 on these.
    pub interface_vertices: Vec<usize>,
    /// Free scalar id per node, if any.
    pub free_of_node: Vec<Option<usize>>,
    /// Pressure id per vertex, if any.
    pub pressure_of_vertex: Vec<Option<usize>>,
    /// Free vector velocity DOFs whose node belongs to the fluid.
    pub fluid_dofs: Vec<usize>,
}

/// The assembled blocks of the coupled system before pressure elimination.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// Fluid velocity mass on free velocity DOFs.
    pub fluid_mass: DMatrix<f64>,
    /// Fluid viscous stiffness from the (eps(u), eps(phi)) form.
    pub fluid_stiffness: DMatrix<f64>,
    /// Discrete divergence, n_pressure x n_velocity.
    pub divergence: DMatrix<f64>,
    /// Solid mass on free velocity DOFs (kinetic coupling).
    pub solid_vel_mass: DMatrix<f64>,
    /// Solid mass on displacement DOFs.
    pub solid_mass: DMatrix<f64>,
    /// Solid elastic stiffness from the (sigma(w), eps(psi)) form.
    pub solid_stiffness: DMatrix<f64>,
    /// Selects the solid velocity from the free velocity vector
    /// (n_displacement x n_velocity).
    pub coupling: DMatrix<f64>,
    /// Interface control load <g, phi> (n_velocity x n_trace).
    pub control_load: DMatrix<f64>,
    /// Interface trace extractor (n_trace x n_velocity).
    pub trace: DMatrix<f64>,
    /// Interface boundary mass (P1 on the interface polygon, vector-valued).
    pub boundary_mass: DMatrix<f64>,
    pub dof_maps: DofMaps,
    pub params: MaterialParams,
    pub mesh_h: f64,
    pub resolution: usize,
}

impl SaddleSystem {
    pub fn n_velocity(&self) -> usize {
        self.fluid_mass.nrows()
    }

    pub fn n_pressure(&self) -> usize {
        self.divergence.nrows()
    }

    pub fn n_displacement(&self) -> usize {
        self.solid_mass.nrows()
    }

    pub fn n_trace(&self) -> usize {
        self.trace.nrows()
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Assembles the Taylor-Hood fluid and P1 solid blocks on the shared node
/// set, applying the outer Dirichlet condition and the interface midpoint
/// constraint by DOF expansion.
pub fn assemble_saddle(mesh: &Mesh, params: &MaterialParams) -> Result<SaddleSystem> {
    params.validate()?;

    let nv = mesh.vertices.len();

    // fluid edge midpoints
    let mut midpoint_of_edge: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in mesh.fluid_triangles() {
        let tri = mesh.triangles[t];
        for k in 0..3 {
            let key = edge_key(tri[k], tri[(k + 1) % 3]);
            let next = nv + midpoint_of_edge.len();
            midpoint_of_edge.entry(key).or_insert(next);
        }
    }
    let n_scalar = nv + midpoint_of_edge.len();

    // node classifications from the tagged boundary edges
    let mut outer_nodes: BTreeSet<usize> = BTreeSet::new();
    let mut interface_vertex_set: BTreeSet<usize> = BTreeSet::new();
    let mut interface_midpoints: BTreeSet<usize> = BTreeSet::new();
    let mut interface_edges: Vec<(usize, usize)> = Vec::new();
    for be in &mesh.boundary_edges {
        let key = edge_key(be.vertices[0], be.vertices[1]);
        match be.tag {
            EdgeTag::Outer => {
                outer_nodes.insert(be.vertices[0]);
                outer_nodes.insert(be.vertices[1]);
                if let Some(&mid) = midpoint_of_edge.get(&key) {
                    outer_nodes.insert(mid);
                }
            }
            EdgeTag::Interface => {
                interface_vertex_set.insert(be.vertices[0]);
                interface_vertex_set.insert(be.vertices[1]);
                let mid = *midpoint_of_edge.get(&key).ok_or_else(|| {
                    Error::MeshTags(format!(
                        "interface edge {key:?} has no fluid midpoint node"
                    ))
                })?;
                interface_midpoints.insert(mid);
                interface_edges.push(key);
            }
        }
    }
    if interface_edges.is_empty() {
        return Err(Error::MeshTags("mesh has no interface edges".into()));
    }

    let mut solid_vertex_set: BTreeSet<usize> = BTreeSet::new();
    let mut fluid_node_set: BTreeSet<usize> = BTreeSet::new();
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        match mesh.regions[t] {
            Region::Solid => solid_vertex_set.extend(tri),
            Region::Fluid => {
                fluid_node_set.extend(tri);
                for k in 0..3 {
                    fluid_node_set.insert(midpoint_of_edge[&edge_key(tri[k], tri[(k + 1) % 3])]);
                }
            }
        }
    }

    // free scalar numbering
    let mut free_of_node: Vec<Option<usize>> = vec![None; n_scalar];
    let mut n_free_scalar = 0;
    for node in 0..n_scalar {
        if outer_nodes.contains(&node) || interface_midpoints.contains(&node) {
            continue;
        }
        free_of_node[node] = Some(n_free_scalar);
        n_free_scalar += 1;
    }

    // midpoint constraint targets
    let mut average_ends: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(a, b) in &interface_edges {
        let mid = midpoint_of_edge[&(a, b)];
        let fa = free_of_node[a].ok_or_else(|| {
            Error::MeshTags(format!("interface vertex {a} was eliminated"))
        })?;
        let fb = free_of_node[b].ok_or_else(|| {
            Error::MeshTags(format!("interface vertex {b} was eliminated"))
        })?;
        average_ends.insert(mid, (fa, fb));
    }

    let expansion: Vec<NodeExpansion> = (0..n_scalar)
        .map(|node| {
            if let Some(f) = free_of_node[node] {
                NodeExpansion::Free(f)
            } else if let Some(&(fa, fb)) = average_ends.get(&node) {
                NodeExpansion::Average(fa, fb)
            } else {
                NodeExpansion::Dirichlet
            }
        })
        .collect();
    let expand = |node: usize| -> Vec<(usize, f64)> {
        match expansion[node] {
            NodeExpansion::Free(f) => vec![(f, 1.0)],
            NodeExpansion::Dirichlet => vec![],
            NodeExpansion::Average(fa, fb) => vec![(fa, 0.5), (fb, 0.5)],
        }
    };

    let n_vel = 2 * n_free_scalar;
    let mut fluid_mass = DMatrix::zeros(n_vel, n_vel);
    let mut fluid_stiffness = DMatrix::zeros(n_vel, n_vel);
    let mut solid_vel_mass = DMatrix::zeros(n_vel, n_vel);

    // pressure numbering: all fluid vertices, ascending
    let mut pressure_of_vertex: Vec<Option<usize>> = vec![None; nv];
    let mut n_pressure = 0;
    for v in 0..nv {
        if fluid_node_set.contains(&v) {
            pressure_of_vertex[v] = Some(n_pressure);
            n_pressure += 1;
        }
    }
    let mut divergence = DMatrix::zeros(n_pressure, n_vel);

    // fluid element loop
    for t in mesh.fluid_triangles() {
        let tri = mesh.triangles[t];
        let coords = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let local_nodes = [
            tri[0],
            tri[1],
            tri[2],
            midpoint_of_edge[&edge_key(tri[0], tri[1])],
            midpoint_of_edge[&edge_key(tri[1], tri[2])],
            midpoint_of_edge[&edge_key(tri[0], tri[2])],
        ];
        let k_el = p2_viscous_element(&coords, params.viscosity);
        let m_el = p2_mass_element(&coords);
        let d_el = divergence_element(&coords);
        let expansions: Vec<Vec<(usize, f64)>> =
            local_nodes.iter().map(|&nd| expand(nd)).collect();
        for i in 0..6 {
            for j in 0..6 {
                for &(fi, wi) in &expansions[i] {
                    for &(fj, wj) in &expansions[j] {
                        for a in 0..2 {
                            for b in 0..2 {
                                let val = wi * wj * k_el[2 * i + a][2 * j + b];
                                fluid_stiffness[(2 * fi + a, 2 * fj + b)] += val;
                                let mval = wi * wj * m_el[2 * i + a][2 * j + b];
                                fluid_mass[(2 * fi + a, 2 * fj + b)] += mval;
                            }
                        }
                    }
                }
            }
        }
        for i in 0..3 {
            let Some(pi) = pressure_of_vertex[tri[i]] else {
                continue;
            };
            for j in 0..6 {
                for &(fj, wj) in &expansions[j] {
                    for b in 0..2 {
                        divergence[(pi, 2 * fj + b)] += wj * d_el[i][2 * j + b];
                    }
                }
            }
        }
    }

    // solid element loop; displacement DOFs have their own numbering
    let solid_vertices: Vec<usize> = solid_vertex_set.iter().copied().collect();
    let solid_index: BTreeMap<usize, usize> = solid_vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let n_disp = 2 * solid_vertices.len();
    let mut solid_mass = DMatrix::zeros(n_disp, n_disp);
    let mut solid_stiffness = DMatrix::zeros(n_disp, n_disp);
    for t in mesh.solid_triangles() {
        let tri = mesh.triangles[t];
        let coords = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let k_el = p1_elastic_element(&coords, params.lambda, params.mu);
        let m_el = p1_mass_element(&coords);
        for i in 0..3 {
            let di = solid_index[&tri[i]];
            for j in 0..3 {
                let dj = solid_index[&tri[j]];
                for a in 0..2 {
                    for b in 0..2 {
                        solid_stiffness[(2 * di + a, 2 * dj + b)] +=
                            k_el[2 * i + a][2 * j + b];
                        solid_mass[(2 * di + a, 2 * dj + b)] += m_el[2 * i + a][2 * j + b];
                    }
                }
            }
            // kinetic energy of the solid lives on the shared velocity nodes
            let exp_i = expand(tri[i]);
            for j in 0..3 {
                let exp_j = expand(tri[j]);
                for &(fi, wi) in &exp_i {
                    for &(fj, wj) in &exp_j {
                        for a in 0..2 {
                            for b in 0..2 {
                                solid_vel_mass[(2 * fi + a, 2 * fj + b)] +=
                                    wi * wj * m_el[2 * i + a][2 * j + b];
                            }
                        }
                    }
                }
            }
        }
    }

    // velocity extraction for the displacement rate: w' = S v
    let mut coupling = DMatrix::zeros(n_disp, n_vel);
    for (&v, &di) in &solid_index {
        let f = free_of_node[v].ok_or_else(|| {
            Error::MeshTags(format!("solid vertex {v} has no free velocity DOF"))
        })?;
        coupling[(2 * di, 2 * f)] = 1.0;
        coupling[(2 * di + 1, 2 * f + 1)] = 1.0;
    }

    // interface trace space: P1 on the interface vertices
    let interface_vertices: Vec<usize> = interface_vertex_set.iter().copied().collect();
    let trace_index: BTreeMap<usize, usize> = interface_vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let n_trace = 2 * interface_vertices.len();
    let mut trace = DMatrix::zeros(n_trace, n_vel);
    for (&v, &ti) in &trace_index {
        let f = free_of_node[v].expect("interface vertices are free");
        trace[(2 * ti, 2 * f)] = 1.0;
        trace[(2 * ti + 1, 2 * f + 1)] = 1.0;
    }
    let mut boundary_mass = DMatrix::zeros(n_trace, n_trace);
    for &(a, b) in &interface_edges {
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let (ta, tb) = (trace_index[&a], trace_index[&b]);
        for c in 0..2 {
            boundary_mass[(2 * ta + c, 2 * ta + c)] += len / 3.0;
            boundary_mass[(2 * tb + c, 2 * tb + c)] += len / 3.0;
            boundary_mass[(2 * ta + c, 2 * tb + c)] += len / 6.0;
            boundary_mass[(2 * tb + c, 2 * ta + c)] += len / 6.0;
        }
    }
    // control load <g, phi> on the interface: B_g = Tr' M_Gamma
    let control_load = trace.transpose() * &boundary_mass;

    let fluid_dofs: Vec<usize> = (0..n_scalar)
        .filter(|node| fluid_node_set.contains(node))
        .filter_map(|node| free_of_node[node])
        .flat_map(|f| [2 * f, 2 * f + 1])
        .collect();

    Ok(SaddleSystem {
        fluid_mass,
        fluid_stiffness,
        divergence,
        solid_vel_mass,
        solid_mass,
        solid_stiffness,
        coupling,
        control_load,
        trace,
        boundary_mass,
        dof_maps: DofMaps {
            n_scalar_nodes: n_scalar,
            n_free_scalar,
            n_pressure,
            solid_vertices,
            interface_vertices,
            free_of_node,
            pressure_of_vertex,
            fluid_dofs,
        },
        params: *params,
        mesh_h: mesh.h(),
        resolution: mesh.resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes_lame::mesh::generate_annulus_mesh;
    use approx::assert_relative_eq;

    fn reference_saddle() -> SaddleSystem {
        let mesh = generate_annulus_mesh(8).unwrap();
        assemble_saddle(&mesh, &MaterialParams::default()).unwrap()
    }

    #[test]
    fn stiffness_blocks_are_exactly_symmetric() {
        let s = reference_saddle();
        assert_eq!((&s.fluid_stiffness - s.fluid_stiffness.transpose()).norm(), 0.0);
        assert_eq!((&s.solid_stiffness - s.solid_stiffness.transpose()).norm(), 0.0);
        assert_relative_eq!((&s.fluid_mass - s.fluid_mass.transpose()).norm(), 0.0);
        assert_relative_eq!((&s.solid_mass - s.solid_mass.transpose()).norm(), 0.0);
    }

    #[test]
    fn divergence_shape_matches_dof_counts() {
        let s = reference_saddle();
        assert_eq!(s.divergence.nrows(), s.dof_maps.n_pressure);
        assert_eq!(s.divergence.ncols(), 2 * s.dof_maps.n_free_scalar);
        // resolution 8: 80 fluid vertices carry pressure
        assert_eq!(s.dof_maps.n_pressure, 80);
    }

    #[test]
    fn expected_dof_counts_at_resolution_8() {
        let s = reference_saddle();
        // 81 vertices + 200 fluid edge midpoints
        assert_eq!(s.dof_maps.n_scalar_nodes, 281);
        // minus 64 outer scalar nodes, minus 8 interface midpoints
        assert_eq!(s.dof_maps.n_free_scalar, 281 - 64 - 8);
        assert_eq!(s.dof_maps.interface_vertices.len(), 8);
        assert_eq!(s.dof_maps.solid_vertices.len(), 9);
        assert_eq!(s.n_trace(), 16);
        assert_eq!(s.n_displacement(), 18);
    }

    /// Korn/Poincare proxy: the viscous form is positive definite on the
    /// constrained fluid space, and its smallest generalized eigenvalue
    /// against the fluid mass is stable under refinement.
    #[test]
    fn viscous_form_is_coercive_and_mesh_stable() {
        let mut lambdas = Vec::new();
        for res in [8usize, 16] {
            let mesh = generate_annulus_mesh(res).unwrap();
            let s = assemble_saddle(&mesh, &MaterialParams::default()).unwrap();
            let fd = &s.dof_maps.fluid_dofs;
            let nf = fd.len();
            let mut k = DMatrix::zeros(nf, nf);
            let mut m = DMatrix::zeros(nf, nf);
            for (i, &di) in fd.iter().enumerate() {
                for (j, &dj) in fd.iter().enumerate() {
                    k[(i, j)] = s.fluid_stiffness[(di, dj)];
                    m[(i, j)] = s.fluid_mass[(di, dj)];
                }
            }
            // smallest generalized eigenvalue by inverse iteration on K z = l M z
            let chol = nalgebra::linalg::Cholesky::new(k.clone()).expect("K coercive");
            let mut z = nalgebra::DVector::from_element(nf, 1.0);
            let mut lambda = 0.0;
            for _ in 0..200 {
                let w = chol.solve(&(&m * &z));
                let norm = (w.transpose() * &m * &w)[(0, 0)].sqrt();
                z = w / norm;
                lambda = (z.transpose() * &k * &z)[(0, 0)];
            }
            assert!(lambda > 0.0);
            lambdas.push(lambda);
        }
        let ratio = lambdas[0] / lambdas[1];
        assert!(
            (0.8..1.25).contains(&ratio),
            "smallest viscous eigenvalue drifts under refinement: {lambdas:?}"
        );
    }

    #[test]
    fn control_load_is_adjoint_to_trace() {
        let s = reference_saddle();
        let diff = (&s.control_load - s.trace.transpose() * &s.boundary_mass).norm();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn boundary_mass_total_equals_interface_length() {
        let s = reference_saddle();
        // sum over one component block = total interface length (here 4 * 1/4)
        let nt = s.n_trace() / 2;
        let mut total = 0.0;
        for i in 0..nt {
            for j in 0..nt {
                total += s.boundary_mass[(2 * i, 2 * j)];
            }
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-13);
    }
}
