//! Structured triangulation of the unit square with the centered square hole
//! [3/8, 5/8]^2 occupied by the solid; the fluid fills the rest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Fluid,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    /// Outer boundary of the unit square (no-slip wall).
    Outer,
    /// Fluid-solid interface.
    Interface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    /// Endpoint vertex ids, ascending.
    pub vertices: [usize; 2],
    pub tag: EdgeTag,
}

/// Triangulation with per-triangle region tags and tagged boundary edges.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, positively oriented.
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Grid resolution; the mesh size is 1/resolution.
    pub resolution: usize,
}

impl Mesh {
    pub fn h(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn fluid_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&t| self.regions[t] == Region::Fluid)
    }

    pub fn solid_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&t| self.regions[t] == Region::Solid)
    }

    pub fn interface_edge_count(&self) -> usize {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == EdgeTag::Interface)
            .count()
    }
}

/// Generates the structured mesh at grid size 1/resolution, each cell split
/// into two triangles. Cells inside the hole are solid, the rest fluid.
///
/// The hole boundary 3/8 and 5/8 must land on grid lines, which requires the
/// resolution to be a positive multiple of 8.
pub fn generate_annulus_mesh(resolution: usize) -> Result<Mesh> {
    if resolution < 8 || resolution % 8 != 0 {
        return Err(Error::MeshResolution { got: resolution });
    }
    let res = resolution;
    let np = res + 1;
    let h = 1.0 / res as f64;
    let vid = |i: usize, j: usize| j * np + i;

    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }

    let lo = 3 * res / 8;
    let hi = 5 * res / 8;
    let cell_region = |i: usize, j: usize| -> Region {
        if (lo..hi).contains(&i) && (lo..hi).contains(&j) {
            Region::Solid
        } else {
            Region::Fluid
        }
    };

    let mut triangles = Vec::with_capacity(2 * res * res);
    let mut regions = Vec::with_capacity(2 * res * res);
    for j in 0..res {
        for i in 0..res {
            let (v00, v10) = (vid(i, j), vid(i + 1, j));
            let (v01, v11) = (vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            let r = cell_region(i, j);
            regions.push(r);
            regions.push(r);
        }
    }

    let mut boundary_edges = Vec::new();
    // outer boundary
    for i in 0..res {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            tag: EdgeTag::Outer,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, res), vid(i + 1, res)],
            tag: EdgeTag::Outer,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(0, i), vid(0, i + 1)],
            tag: EdgeTag::Outer,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(res, i), vid(res, i + 1)],
            tag: EdgeTag::Outer,
        });
    }
    // interface: grid edges between cells of different regions
    for j in 0..res {
        for i in 0..res.saturating_sub(1) {
            // vertical edge between cell (i,j) and (i+1,j)
            if cell_region(i, j) != cell_region(i + 1, j) {
                boundary_edges.push(BoundaryEdge {
                    vertices: [vid(i + 1, j), vid(i + 1, j + 1)],
                    tag: EdgeTag::Interface,
                });
            }
        }
    }
    for j in 0..res.saturating_sub(1) {
        for i in 0..res {
            // horizontal edge between cell (i,j) and (i,j+1)
            if cell_region(i, j) != cell_region(i, j + 1) {
                boundary_edges.push(BoundaryEdge {
                    vertices: [vid(i, j + 1), vid(i + 1, j + 1)],
                    tag: EdgeTag::Interface,
                });
            }
        }
    }

    let mesh = Mesh {
        vertices,
        triangles,
        regions,
        boundary_edges,
        resolution,
    };
    validate_tags(&mesh)?;
    Ok(mesh)
}

/// Structural checks: positive orientation, every interface edge shared by
/// exactly one fluid and one solid triangle, every outer edge owned by
/// exactly one fluid triangle.
fn validate_tags(mesh: &Mesh) -> Result<()> {
    for t in 0..mesh.triangles.len() {
        if mesh.triangle_area(t) <= 0.0 {
            return Err(Error::MeshTags(format!("triangle {t} is not positively oriented")));
        }
    }
    use std::collections::BTreeMap;
    let mut edge_owners: BTreeMap<(usize, usize), Vec<Region>> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            edge_owners.entry(key).or_default().push(mesh.regions[t]);
        }
    }
    for be in &mesh.boundary_edges {
        let key = (be.vertices[0], be.vertices[1]);
        let owners = edge_owners
            .get(&key)
            .ok_or_else(|| Error::MeshTags(format!("edge {key:?} not found in any triangle")))?;
        match be.tag {
            EdgeTag::Outer => {
                if owners.len() != 1 || owners[0] != Region::Fluid {
                    return Err(Error::MeshTags(format!(
                        "outer edge {key:?} has owners {owners:?}"
                    )));
                }
            }
            EdgeTag::Interface => {
                let fluid = owners.iter().filter(|&&r| r == Region::Fluid).count();
                let solid = owners.iter().filter(|&&r| r == Region::Solid).count();
                if fluid != 1 || solid != 1 {
                    return Err(Error::MeshTags(format!(
                        "interface edge {key:?} has {fluid} fluid and {solid} solid owners"
                    )));
                }
            }
        }
    }
    Ok(())
}
