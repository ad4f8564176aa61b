//! The 1D heat-wave interface analogue.
//!
//! Heat equation on (0,1), wave equation on (1,2), velocity matching at the
//! interface x = 1 enforced by sharing the interface degree of freedom, and
//! the boundary control entering the fluid momentum row as a point load. The
//! solid far end x = 2 carries a homogeneous natural condition, so exactly
//! one interface is controlled.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operators::{
    sym_psd_sqrt, FluidEvolution, IndexMap, SmoothingBlock, StateVector, SystemOperators,
};

/// Parameters of the heat-wave model. Units are nondimensional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatWaveConfig {
    /// Interval count on the fluid segment (0,1).
    pub n_f: usize,
    /// Interval count on the solid segment (1,2).
    pub n_s: usize,
    /// Diffusivity of the fluid segment.
    pub kappa: f64,
    /// Wave speed squared of the solid segment.
    pub c2: f64,
    /// Control horizon.
    pub horizon: f64,
}

impl HeatWaveConfig {
    pub fn new(n_f: usize, n_s: usize) -> Self {
        HeatWaveConfig {
            n_f,
            n_s,
            kappa: 1.0,
            c2: 1.0,
            horizon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.n_f < 2 {
            issues.push(format!("n_f = {} must be at least 2", self.n_f));
        }
        if self.n_s < 2 {
            issues.push(format!("n_s = {} must be at least 2", self.n_s));
        }
        if !(self.kappa > 0.0) {
            issues.push(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.c2 > 0.0) {
            issues.push(format!("c2 = {} must be positive", self.c2));
        }
        if !(self.horizon > 0.0) {
            issues.push(format!("horizon = {} must be positive", self.horizon));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(issues.join("; ")))
        }
    }
}

/// P1 mass matrix on a uniform segment with `n` intervals and `keep` nodes.
/// `rows` maps local node index -> matrix row.
fn p1_mass(n: usize, h: f64, rows: &[usize], size: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(size, size);
    for e in 0..n {
        for (a, &ra) in [rows[e], rows[e + 1]].iter().enumerate() {
            for (b, &rb) in [rows[e], rows[e + 1]].iter().enumerate() {
                if ra == usize::MAX || rb == usize::MAX {
                    continue;
                }
                let val = if a == b { h / 3.0 } else { h / 6.0 };
                m[(ra, rb)] += val;
            }
        }
    }
    m
}

/// P1 stiffness matrix, same layout conventions as [`p1_mass`].
fn p1_stiffness(n: usize, h: f64, rows: &[usize], size: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(size, size);
    for e in 0..n {
        for (a, &ra) in [rows[e], rows[e + 1]].iter().enumerate() {
            for (b, &rb) in [rows[e], rows[e + 1]].iter().enumerate() {
                if ra == usize::MAX || rb == usize::MAX {
                    continue;
                }
                let val = if a == b { 1.0 / h } else { -1.0 / h };
                k[(ra, rb)] += val;
            }
        }
    }
    k
}

/// Assembles the coupled heat-wave system.
///
/// State layout: `[u_1..u_{n_f} | w_0..w_{n_s} | wt_1..wt_{n_s}]`, where u
/// runs over the fluid nodes h..1 (Dirichlet node 0 eliminated), w over all
/// solid nodes 1..2, and wt over the interior solid velocities; the interface
/// solid velocity is identified with the last fluid DOF.
pub fn assemble_heatwave(config: &HeatWaveConfig) -> Result<SystemOperators> {
    config.validate()?;
    let (n_f, n_s) = (config.n_f, config.n_s);
    let h_f = 1.0 / n_f as f64;
    let h_s = 1.0 / n_s as f64;

    let n_u = n_f; // fluid nodes 1..n_f
    let n_w = n_s + 1; // solid nodes 0..n_s
    let n_wt = n_s; // interior solid velocities
    let n = n_u + n_w + n_wt;

    let index_map = IndexMap {
        fluid: 0..n_u,
        solid_disp: n_u..n_u + n_w,
        solid_vel: n_u + n_w..n,
    };

    // Fluid matrices on the kept nodes 1..n_f (node 0 is Dirichlet).
    let fluid_rows: Vec<usize> = std::iter::once(usize::MAX).chain(0..n_u).collect();
    let m_f = p1_mass(n_f, h_f, &fluid_rows, n_u);
    let k_f = p1_stiffness(n_f, h_f, &fluid_rows, n_u) * config.kappa;

    // Solid matrices on all nodes 0..n_s.
    let solid_rows: Vec<usize> = (0..=n_s).collect();
    let m_s = p1_mass(n_s, h_s, &solid_rows, n_w);
    let k_s = p1_stiffness(n_s, h_s, &solid_rows, n_w) * config.c2;

    // State indices of the combined velocity field: fluid block, then the
    // interior solid velocities. The interface velocity is fluid DOF n_f-1.
    let interface_u = n_u - 1;
    let vel_of_solid_node = |k: usize| -> usize {
        if k == 0 {
            interface_u
        } else {
            n_u + n_w + (k - 1)
        }
    };

    let mut mass = DMatrix::zeros(n, n);
    let mut energy = DMatrix::zeros(n, n);
    let mut gen = DMatrix::zeros(n, n);

    // Fluid mass and viscous stiffness on the u block.
    for i in 0..n_u {
        for j in 0..n_u {
            mass[(i, j)] += m_f[(i, j)];
            energy[(i, j)] += m_f[(i, j)];
            gen[(i, j)] -= k_f[(i, j)];
        }
    }
    // Solid mass couples the interface velocity with the interior velocities.
    for a in 0..n_w {
        for b in 0..n_w {
            let (ia, ib) = (vel_of_solid_node(a), vel_of_solid_node(b));
            mass[(ia, ib)] += m_s[(a, b)];
            energy[(ia, ib)] += m_s[(a, b)];
        }
    }
    // Elastic force -S' K_s w on the velocity rows.
    for a in 0..n_w {
        let ia = vel_of_solid_node(a);
        for b in 0..n_w {
            gen[(ia, index_map.solid_disp.start + b)] -= k_s[(a, b)];
        }
    }
    // Displacement block: M_w w' = M_w S v, strain energy in the energy form.
    for a in 0..n_w {
        let ra = index_map.solid_disp.start + a;
        for b in 0..n_w {
            mass[(ra, index_map.solid_disp.start + b)] += m_s[(a, b)];
            energy[(ra, index_map.solid_disp.start + b)] += k_s[(a, b)];
            gen[(ra, vel_of_solid_node(b))] += m_s[(a, b)];
        }
    }

    // State norm: complete the energy seminorm by the solid L2 mass so the
    // displacement is measured in a full (strain + mass) H1 norm.
    let mut state_norm = energy.clone();
    for a in 0..n_w {
        let ra = index_map.solid_disp.start + a;
        for b in 0..n_w {
            state_norm[(ra, index_map.solid_disp.start + b)] += m_s[(a, b)];
        }
    }

    // Point interface load: <g, phi> = g * phi(1).
    let mut control = DMatrix::zeros(n, 1);
    control[(interface_u, 0)] = 1.0;
    let mut trace_map = DMatrix::zeros(1, n);
    trace_map[(0, interface_u)] = 1.0;
    let boundary_mass = DMatrix::from_element(1, 1, 1.0);

    let observation = sym_psd_sqrt(&(0.5 * &energy));

    let mut from_state = DMatrix::zeros(n_u, n);
    for i in 0..n_u {
        from_state[(i, i)] = 1.0;
    }
    let mut fluid_trace = DMatrix::zeros(1, n_u);
    fluid_trace[(0, interface_u)] = 1.0;

    let smoothing_blocks = vec![
        SmoothingBlock {
            range: index_map.fluid.clone(),
            pair: Some((k_f.clone(), m_f.clone())),
        },
        SmoothingBlock {
            range: index_map.solid_disp.clone(),
            pair: Some((k_s.clone(), m_s.clone())),
        },
        SmoothingBlock {
            range: index_map.solid_vel.clone(),
            pair: None,
        },
    ];

    Ok(SystemOperators {
        mass,
        generator: gen,
        control,
        trace_map,
        observation,
        index_map,
        level: n_f,
        horizon: config.horizon,
        energy_form: energy,
        state_norm_form: state_norm,
        boundary_mass,
        fluid: FluidEvolution {
            mass: m_f,
            stiffness: k_f,
            from_state,
            trace: fluid_trace,
        },
        smoothing_blocks,
        fluid_h: h_f,
        block_eigen: OnceLock::new(),
    })
}

/// Families of initial data for the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// Gaussian nodal values, normalized to unit energy norm.
    RandomEnergyUnit,
    /// u = sin(pi x), solid at rest, normalized.
    Smooth,
    /// All fluid mass on one interior node, normalized.
    DeltaLike,
}

impl std::str::FromStr for InitialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_energy_unit" => Ok(InitialKind::RandomEnergyUnit),
            "smooth" => Ok(InitialKind::Smooth),
            "delta_like" => Ok(InitialKind::DeltaLike),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// Deterministic initial states of unit energy norm.
pub fn make_initial_state(
    sys: &SystemOperators,
    kind: InitialKind,
    seed: u64,
) -> Result<StateVector> {
    let n = sys.dim();
    let mut y = DVector::zeros(n);
    match kind {
        InitialKind::RandomEnergyUnit => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                y[i] = StandardNormal.sample(&mut rng);
            }
        }
        InitialKind::Smooth => {
            let n_u = sys.index_map.fluid.len();
            let h = sys.fluid_h;
            for i in 0..n_u {
                let x = (i + 1) as f64 * h;
                y[sys.index_map.fluid.start + i] = (std::f64::consts::PI * x).sin();
            }
        }
        InitialKind::DeltaLike => {
            let n_u = sys.index_map.fluid.len();
            // node nearest x = 1/2, always interior
            let node = (n_u / 2).max(1) - 1;
            y[sys.index_map.fluid.start + node] = 1.0;
        }
    }
    let norm = sys.energy_norm(&y);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter(
            "initial state has zero energy".to_string(),
        ));
    }
    Ok(y / norm)
}
