//! Reference-triangle bases and quadrature for the Taylor-Hood / P1 pairing.
//!
//! The reference triangle is {(x, y): x, y >= 0, x + y <= 1}; quadrature
//! weights sum to its area 1/2, so physical integrals carry |det J|.

/// Midpoint rule, exact to degree 2.
pub(crate) const QUAD_DEG2: [(f64, f64, f64); 3] = [
    (0.5, 0.0, 1.0 / 6.0),
    (0.5, 0.5, 1.0 / 6.0),
    (0.0, 0.5, 1.0 / 6.0),
];

/// Six-point rule, exact to degree 4.
pub(crate) const QUAD_DEG4: [(f64, f64, f64); 6] = [
    (
        0.445948490915965,
        0.445948490915965,
        0.111690794839005,
    ),
    (
        0.108103018168070,
        0.445948490915965,
        0.111690794839005,
    ),
    (
        0.445948490915965,
        0.108103018168070,
        0.111690794839005,
    ),
    (
        0.091576213509771,
        0.091576213509771,
        0.054975871827661,
    ),
    (
        0.816847572980459,
        0.091576213509771,
        0.054975871827661,
    ),
    (
        0.091576213509771,
        0.816847572980459,
        0.054975871827661,
    ),
];

/// P1 shape functions at a reference point.
pub(crate) fn p1_shape(x: f64, y: f64) -> [f64; 3] {
    [1.0 - x - y, x, y]
}

/// Constant reference gradients of the P1 shape functions.
pub(crate) const P1_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// P2 shape functions: three vertices, then midpoints of edges (0,1), (1,2),
/// (0,2).
pub(crate) fn p2_shape(x: f64, y: f64) -> [f64; 6] {
    let l = [1.0 - x - y, x, y];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[0] * l[2],
    ]
}

/// Reference gradients of the P2 shape functions.
pub(crate) fn p2_grad(x: f64, y: f64) -> [[f64; 2]; 6] {
    let l = [1.0 - x - y, x, y];
    let dl = P1_GRAD;
    let mut g = [[0.0; 2]; 6];
    for v in 0..3 {
        for d in 0..2 {
            g[v][d] = (4.0 * l[v] - 1.0) * dl[v][d];
        }
    }
    let pairs = [(0usize, 1usize), (1, 2), (0, 2)];
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (l[a] * dl[b][d] + l[b] * dl[a][d]);
        }
    }
    g
}

/// Geometry of one physical triangle: inverse-transpose Jacobian action and
/// |det J| for the affine reference map.
pub(crate) struct TriangleGeometry {
    inv_jt: [[f64; 2]; 2],
    pub det: f64,
}

impl TriangleGeometry {
    pub fn new(coords: &[[f64; 2]; 3]) -> Self {
        let j = [
            [coords[1][0] - coords[0][0], coords[2][0] - coords[0][0]],
            [coords[1][1] - coords[0][1], coords[2][1] - coords[0][1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // J^{-T} = 1/det [[ J22, -J21 ], [ -J12, J11 ]]
        let inv_jt = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        TriangleGeometry { inv_jt, det }
    }

    /// Physical gradient from a reference gradient.
    pub fn grad(&self, reference: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jt[0][0] * reference[0] + self.inv_jt[0][1] * reference[1],
            self.inv_jt[1][0] * reference[0] + self.inv_jt[1][1] * reference[1],
        ]
    }
}

/// Vector-valued symmetric-gradient contraction: for u = phi e_a, v = psi e_b,
/// eps(u) : eps(v) = 1/2 (delta_ab grad(phi).grad(psi) + phi_,b psi_,a).
pub(crate) fn eps_contraction(ga: [f64; 2], gb: [f64; 2], a: usize, b: usize) -> f64 {
    let dot = ga[0] * gb[0] + ga[1] * gb[1];
    0.5 * (if a == b { dot } else { 0.0 } + ga[b] * gb[a])
}

/// Viscous element matrix nu * int eps(phi_i e_a) : eps(phi_j e_b) on one
/// fluid triangle; 12x12 with velocity dof order (node, component).
pub(crate) fn p2_viscous_element(coords: &[[f64; 2]; 3], viscosity: f64) -> [[f64; 12]; 12] {
    let geo = TriangleGeometry::new(coords);
    let mut k = [[0.0; 12]; 12];
    for &(x, y, w) in &QUAD_DEG2 {
        let grads = p2_grad(x, y);
        let phys: Vec<[f64; 2]> = grads.iter().map(|&g| geo.grad(g)).collect();
        let scale = w * geo.det * viscosity;
        for i in 0..6 {
            for j in 0..6 {
                for a in 0..2 {
                    for b in 0..2 {
                        k[2 * i + a][2 * j + b] +=
                            scale * eps_contraction(phys[i], phys[j], a, b);
                    }
                }
            }
        }
    }
    k
}

/// Vector mass element for P2 (12x12).
pub(crate) fn p2_mass_element(coords: &[[f64; 2]; 3]) -> [[f64; 12]; 12] {
    let geo = TriangleGeometry::new(coords);
    let mut m = [[0.0; 12]; 12];
    for &(x, y, w) in &QUAD_DEG4 {
        let phi = p2_shape(x, y);
        let scale = w * geo.det;
        for i in 0..6 {
            for j in 0..6 {
                let v = scale * phi[i] * phi[j];
                m[2 * i][2 * j] += v;
                m[2 * i + 1][2 * j + 1] += v;
            }
        }
    }
    m
}

/// Divergence element: rows P1 pressure nodes, columns P2 velocity dofs,
/// entries int q_i d(phi_j)/dx_b (3x12).
pub(crate) fn divergence_element(coords: &[[f64; 2]; 3]) -> [[f64; 12]; 3] {
    let geo = TriangleGeometry::new(coords);
    let mut d = [[0.0; 12]; 3];
    for &(x, y, w) in &QUAD_DEG2 {
        let q = p1_shape(x, y);
        let grads = p2_grad(x, y);
        let scale = w * geo.det;
        for i in 0..3 {
            for j in 0..6 {
                let g = geo.grad(grads[j]);
                for b in 0..2 {
                    d[i][2 * j + b] += scale * q[i] * g[b];
                }
            }
        }
    }
    d
}

/// Linear-elasticity element for vector P1 (6x6):
/// lambda div(u) div(v) + 2 mu eps(u) : eps(v).
pub(crate) fn p1_elastic_element(
    coords: &[[f64; 2]; 3],
    lambda: f64,
    mu: f64,
) -> [[f64; 6]; 6] {
    let geo = TriangleGeometry::new(coords);
    let area = 0.5 * geo.det;
    let grads: Vec<[f64; 2]> = P1_GRAD.iter().map(|&g| geo.grad(g)).collect();
    let mut k = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    let div_term = lambda * grads[i][a] * grads[j][b];
                    let eps_term = 2.0 * mu * eps_contraction(grads[i], grads[j], a, b);
                    k[2 * i + a][2 * j + b] += area * (div_term + eps_term);
                }
            }
        }
    }
    k
}

/// Vector mass element for P1 (6x6).
pub(crate) fn p1_mass_element(coords: &[[f64; 2]; 3]) -> [[f64; 6]; 6] {
    let geo = TriangleGeometry::new(coords);
    let mut m = [[0.0; 6]; 6];
    for &(x, y, w) in &QUAD_DEG2 {
        let phi = p1_shape(x, y);
        let scale = w * geo.det;
        for i in 0..3 {
            for j in 0..3 {
                let v = scale * phi[i] * phi[j];
                m[2 * i][2 * j] += v;
                m[2 * i + 1][2 * j + 1] += v;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Exact reference-triangle integral of x^p y^q.
    fn monomial_integral(p: u32, q: u32) -> f64 {
        // p! q! / (p + q + 2)!
        let fact = |n: u32| -> f64 { (1..=n).map(|k| k as f64).product::<f64>().max(1.0) };
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn quadrature_rules_match_their_degrees() {
        for p in 0..=2u32 {
            for q in 0..=(2 - p) {
                let exact = monomial_integral(p, q);
                let got: f64 = QUAD_DEG2
                    .iter()
                    .map(|&(x, y, w)| w * x.powi(p as i32) * y.powi(q as i32))
                    .sum();
                assert_relative_eq!(got, exact, epsilon = 1e-15);
            }
        }
        for p in 0..=4u32 {
            for q in 0..=(4 - p) {
                let exact = monomial_integral(p, q);
                let got: f64 = QUAD_DEG4
                    .iter()
                    .map(|&(x, y, w)| w * x.powi(p as i32) * y.powi(q as i32))
                    .sum();
                assert_relative_eq!(got, exact, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn p2_basis_is_nodal() {
        let nodes = [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.5),
            (0.0, 0.5),
        ];
        for (k, &(x, y)) in nodes.iter().enumerate() {
            let phi = p2_shape(x, y);
            for (j, &v) in phi.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(v, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn p2_gradients_match_finite_differences() {
        let eps = 1e-7;
        for &(x, y) in &[(0.23, 0.31), (0.1, 0.6), (0.4, 0.15)] {
            let g = p2_grad(x, y);
            let fx: Vec<f64> = p2_shape(x + eps, y)
                .iter()
                .zip(p2_shape(x - eps, y).iter())
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect();
            let fy: Vec<f64> = p2_shape(x, y + eps)
                .iter()
                .zip(p2_shape(x, y - eps).iter())
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect();
            for i in 0..6 {
                assert_relative_eq!(g[i][0], fx[i], epsilon = 1e-6);
                assert_relative_eq!(g[i][1], fy[i], epsilon = 1e-6);
            }
        }
    }

    /// Independent fixed-order quadrature oracle for the reference-triangle
    /// viscous block: a seven-point degree-5 rule and the full tensor
    /// contraction of the symmetric gradients, written from scratch.
    #[test]
    fn reference_viscous_block_matches_hand_quadrature() {
        let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let k = p2_viscous_element(&coords, 1.0);

        let s15 = 15.0_f64.sqrt();
        let a = (6.0 + s15) / 21.0;
        let b = (6.0 - s15) / 21.0;
        let w1 = (155.0 + s15) / 2400.0;
        let w2 = (155.0 - s15) / 2400.0;
        let rule = [
            (1.0 / 3.0, 1.0 / 3.0, 9.0 / 80.0),
            (a, a, w1),
            (1.0 - 2.0 * a, a, w1),
            (a, 1.0 - 2.0 * a, w1),
            (b, b, w2),
            (1.0 - 2.0 * b, b, w2),
            (b, 1.0 - 2.0 * b, w2),
        ];
        // self-check the oracle rule on degree-5 monomials
        for p in 0..=5u32 {
            for q in 0..=(5 - p) {
                let fact =
                    |n: u32| -> f64 { (1..=n).map(|k| k as f64).product::<f64>().max(1.0) };
                let exact = fact(p) * fact(q) / fact(p + q + 2);
                let got: f64 = rule
                    .iter()
                    .map(|&(x, y, w)| w * x.powi(p as i32) * y.powi(q as i32))
                    .sum();
                assert_relative_eq!(got, exact, epsilon = 1e-14);
            }
        }

        for i in 0..6 {
            for j in 0..6 {
                for ca in 0..2 {
                    for cb in 0..2 {
                        let mut integral = 0.0;
                        for &(x, y, w) in &rule {
                            let g = p2_grad(x, y);
                            // eps tensors of phi_i e_ca and phi_j e_cb
                            let mut eu = [[0.0; 2]; 2];
                            let mut ev = [[0.0; 2]; 2];
                            for r in 0..2 {
                                for c in 0..2 {
                                    let du = if r == ca { g[i][c] } else { 0.0 };
                                    let dut = if c == ca { g[i][r] } else { 0.0 };
                                    eu[r][c] = 0.5 * (du + dut);
                                    let dv = if r == cb { g[j][c] } else { 0.0 };
                                    let dvt = if c == cb { g[j][r] } else { 0.0 };
                                    ev[r][c] = 0.5 * (dv + dvt);
                                }
                            }
                            let mut contract = 0.0;
                            for r in 0..2 {
                                for c in 0..2 {
                                    contract += eu[r][c] * ev[r][c];
                                }
                            }
                            integral += w * contract;
                        }
                        assert!(
                            (k[2 * i + ca][2 * j + cb] - integral).abs() <= 1e-12,
                            "entry ({i},{ca})x({j},{cb}): {} vs oracle {integral}",
                            k[2 * i + ca][2 * j + cb]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn elastic_element_annihilates_rigid_motions() {
        let coords = [[0.1, 0.2], [0.7, 0.3], [0.4, 0.9]];
        let k = p1_elastic_element(&coords, 1.3, 0.7);
        // translation x, translation y, infinitesimal rotation (-y, x)
        let rigid: [[f64; 6]; 3] = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            [
                -coords[0][1],
                coords[0][0],
                -coords[1][1],
                coords[1][0],
                -coords[2][1],
                coords[2][0],
            ],
        ];
        for r in rigid {
            for row in 0..6 {
                let dot: f64 = (0..6).map(|c| k[row][c] * r[c]).sum();
                assert!(dot.abs() <= 1e-12, "rigid motion not annihilated: {dot:.3e}");
            }
        }
    }

    #[test]
    fn mass_elements_integrate_constants_to_area() {
        let coords = [[0.0, 0.0], [0.5, 0.1], [0.2, 0.6]];
        let geo = TriangleGeometry::new(&coords);
        let area = 0.5 * geo.det;
        let m2 = p2_mass_element(&coords);
        let ones_sum: f64 = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .map(|(i, j)| m2[2 * i][2 * j])
            .sum();
        assert_relative_eq!(ones_sum, area, epsilon = 1e-13);
        let m1 = p1_mass_element(&coords);
        let ones_sum1: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| m1[2 * i + 1][2 * j + 1])
            .sum();
        assert_relative_eq!(ones_sum1, area, epsilon = 1e-14);
    }

    #[test]
    fn divergence_element_is_exact_for_linear_velocity() {
        // u = (x, 0): div u = 1; int q_i * 1 = area/3 for each P1 basis
        let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let d = divergence_element(&coords);
        // velocity coefficients of u = (x, 0) in the P2 nodal basis
        let nodes = [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.5),
            (0.0, 0.5),
        ];
        for i in 0..3 {
            let mut val = 0.0;
            for (j, &(x, _)) in nodes.iter().enumerate() {
                val += d[i][2 * j] * x; // x-component coefficient = x(node)
            }
            assert_relative_eq!(val, 0.5 / 3.0, epsilon = 1e-14);
        }
    }
}
