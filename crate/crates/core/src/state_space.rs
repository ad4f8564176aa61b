//! Generic evolution layer: theta-method stepping, the fluid splitting
//! u = u1 + u2, component-wise fractional smoothing, and energy/trace
//! evaluation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operators::{generalized_sym_eigen, BlockEigen, StateVector, SystemOperators};

/// Dimension cap for dense eigen-decompositions (fractional powers and the
/// exact fluid semigroup).
pub const EIGEN_DIM_CAP: usize = 600;

/// Piecewise-constant control on a uniform partition of [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    /// Node times, strictly increasing, length N+1.
    pub times: Vec<f64>,
    /// One value per interval, length N.
    pub values: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn zero(control_dim: usize, horizon: f64, steps: usize) -> Self {
        let dt = horizon / steps as f64;
        ControlSignal {
            times: (0..=steps).map(|k| k as f64 * dt).collect(),
            values: vec![DVector::zeros(control_dim); steps],
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    /// Value on the interval containing `t` (last interval at t = T).
    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        let n = self.values.len();
        let pos = self.times.partition_point(|&s| s <= t);
        let idx = pos.saturating_sub(1).min(n - 1);
        &self.values[idx]
    }

    /// L2(0,T; U) norm with the given boundary mass.
    pub fn l2_norm(&self, boundary_mass: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for (k, g) in self.values.iter().enumerate() {
            let dt = self.times[k + 1] - self.times[k];
            acc += dt * (g.transpose() * boundary_mass * g)[(0, 0)];
        }
        acc.max(0.0).sqrt()
    }
}

/// Stepping parameters of the theta method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepper {
    pub dt: f64,
    pub theta: f64,
}

impl Stepper {
    pub fn new(dt: f64, theta: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} outside the A-stable range [1/2, 1]"
            )));
        }
        Ok(Stepper { dt, theta })
    }

    /// Number of steps covering [0, T]; dt must divide the horizon.
    pub fn steps(&self, horizon: f64) -> Result<usize> {
        let n = (horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - horizon).abs() > 1e-8 * horizon.max(1.0) {
            return Err(Error::GridMismatch {
                horizon,
                dt: self.dt,
                got: n as usize,
            });
        }
        Ok(n as usize)
    }
}

/// A time-gridded state history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub stepper: Stepper,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Factored theta step (M - theta dt A) y+ = (M + (1-theta) dt A) y + dt B g.
pub(crate) struct ThetaStep {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    explicit: DMatrix<f64>,
}

impl ThetaStep {
    pub fn new(
        mass: &DMatrix<f64>,
        generator: &DMatrix<f64>,
        stepper: Stepper,
    ) -> Result<Self> {
        let implicit = mass - stepper.theta * stepper.dt * generator;
        let explicit = mass + (1.0 - stepper.theta) * stepper.dt * generator;
        let lu = implicit.lu();
        // LU in nalgebra is non-failing; detect singularity via a solve probe.
        if lu
            .solve(&DVector::from_element(mass.nrows(), 1.0))
            .is_none()
        {
            return Err(Error::SingularStepMatrix {
                dt: stepper.dt,
                theta: stepper.theta,
            });
        }
        Ok(ThetaStep { lu, explicit })
    }

    pub fn advance(&self, y: &DVector<f64>, load: &DVector<f64>) -> DVector<f64> {
        let rhs = &self.explicit * y + load;
        self.lu.solve(&rhs).expect("step matrix verified nonsingular")
    }
}

/// Steps M y' = A y + B g over [0, T] with the theta method; the factorization
/// of the step matrix is reused across steps.
pub fn propagate_theta(
    sys: &SystemOperators,
    y0: &StateVector,
    g: &ControlSignal,
    stepper: Stepper,
) -> Result<Trajectory> {
    sys.assert_state(y0, "propagate_theta initial state")?;
    let steps = stepper.steps(sys.horizon)?;
    if g.horizon() + 1e-12 < sys.horizon {
        return Err(Error::ControlCoverage {
            needed: sys.horizon,
            got: g.horizon(),
        });
    }
    let step = ThetaStep::new(&sys.mass, &sys.generator, stepper)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    states.push(y0.clone());
    times.push(0.0);
    let mut y = y0.clone();
    for k in 0..steps {
        let t_mid = (k as f64 + 0.5) * stepper.dt;
        let load = &sys.control * g.value_at(t_mid) * stepper.dt;
        y = step.advance(&y, &load);
        states.push(y.clone());
        times.push((k + 1) as f64 * stepper.dt);
    }
    Ok(Trajectory {
        times,
        states,
        stepper,
    })
}

/// Free fluid evolution and the interface-forced remainder.
#[derive(Debug, Clone)]
pub struct FluidDecomposition {
    pub times: Vec<f64>,
    /// Free fluid evolution from u(0), in fluid-block coordinates.
    pub u1: Vec<DVector<f64>>,
    /// Remainder u - u1.
    pub u2: Vec<DVector<f64>>,
}

impl FluidDecomposition {
    pub fn u1_trace(&self, sys: &SystemOperators, k: usize) -> DVector<f64> {
        &sys.fluid.trace * &self.u1[k]
    }

    pub fn u2_trace(&self, sys: &SystemOperators, k: usize) -> DVector<f64> {
        &sys.fluid.trace * &self.u2[k]
    }
}

/// Splits the fluid component of a trajectory into the free evolution u1
/// (fluid block stepped alone with zero interface load, same scheme and grid)
/// and the remainder u2 = u - u1.
pub fn decompose_fluid(
    sys: &SystemOperators,
    traj: &Trajectory,
) -> Result<FluidDecomposition> {
    if traj.states.is_empty() {
        return Err(Error::EmptySeries);
    }
    sys.assert_state(&traj.states[0], "decompose_fluid trajectory")?;
    let neg_stiff = -&sys.fluid.stiffness;
    let step = ThetaStep::new(&sys.fluid.mass, &neg_stiff, traj.stepper)?;
    let zero = DVector::zeros(sys.fluid.mass.nrows());
    let mut u1 = Vec::with_capacity(traj.states.len());
    let mut u2 = Vec::with_capacity(traj.states.len());
    let mut cur = &sys.fluid.from_state * &traj.states[0];
    for (k, y) in traj.states.iter().enumerate() {
        if k > 0 {
            cur = step.advance(&cur, &zero);
        }
        let u = &sys.fluid.from_state * y;
        u2.push(&u - &cur);
        u1.push(cur.clone());
    }
    Ok(FluidDecomposition {
        times: traj.times.clone(),
        u1,
        u2,
    })
}

fn block_eigen(sys: &SystemOperators) -> Result<&Vec<BlockEigen>> {
    if let Some(v) = sys.block_eigen.get() {
        return Ok(v);
    }
    let mut blocks = Vec::new();
    for sb in &sys.smoothing_blocks {
        let basis = match &sb.pair {
            None => None,
            Some((k, m)) => {
                if k.nrows() > EIGEN_DIM_CAP {
                    return Err(Error::EigenCap {
                        dim: k.nrows(),
                        cap: EIGEN_DIM_CAP,
                    });
                }
                Some(generalized_sym_eigen(k, m)?)
            }
        };
        blocks.push(BlockEigen {
            range: sb.range.clone(),
            basis,
        });
    }
    let _ = sys.block_eigen.set(blocks);
    Ok(sys.block_eigen.get().expect("just set"))
}

/// Applies (M^{-1} K)^s block-wise: the fluid block uses the viscous form,
/// the solid displacement the elastic form, and the solid velocity is the
/// identity. Negative s smooths, positive s roughens. Generalized eigenvalues
/// below roundoff (rigid solid modes) are passed through unchanged.
pub fn apply_component_fractional_power(
    sys: &SystemOperators,
    s: f64,
    y: &StateVector,
) -> Result<StateVector> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "fractional order s = {s} outside [-1, 1]"
        )));
    }
    sys.assert_state(y, "apply_component_fractional_power state")?;
    let blocks = block_eigen(sys)?;
    let mut out = y.clone();
    if s == 0.0 {
        return Ok(out);
    }
    for block in blocks {
        let Some(basis) = &block.basis else { continue };
        let slice = y.rows(block.range.start, block.range.len()).into_owned();
        let coeffs = &basis.inverse * &slice;
        let lmax = basis.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let floor = lmax * 1e-12;
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(basis.eigenvalues.iter()).map(|(&c, &l)| {
                if l > floor {
                    c * l.powf(s)
                } else {
                    c
                }
            }),
        );
        let transformed = &basis.vectors * scaled;
        out.rows_mut(block.range.start, block.range.len())
            .copy_from(&transformed);
    }
    Ok(out)
}

/// Energy E(y) = 1/2 (|u|^2 + (sigma(w), eps(w)) + |w_t|^2).
pub fn energy_of(sys: &SystemOperators, y: &StateVector) -> f64 {
    sys.energy(y)
}

/// Fluid velocity values on the interface.
pub fn interface_trace(sys: &SystemOperators, y: &StateVector) -> DVector<f64> {
    &sys.trace_map * y
}

/// Interface trace of the free fluid evolution e^{At} u0, exact in time via
/// the generalized eigen-decomposition of the fluid block. Returns one trace
/// vector per requested time.
pub fn free_fluid_trace_series(
    sys: &SystemOperators,
    y0: &StateVector,
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    sys.assert_state(y0, "free_fluid_trace_series state")?;
    let nf = sys.fluid.mass.nrows();
    if nf > EIGEN_DIM_CAP {
        return Err(Error::EigenCap {
            dim: nf,
            cap: EIGEN_DIM_CAP,
        });
    }
    let basis = generalized_sym_eigen(&sys.fluid.stiffness, &sys.fluid.mass)?;
    let u0 = &sys.fluid.from_state * y0;
    let coeffs = &basis.inverse * u0;
    let trace_modes = &sys.fluid.trace * &basis.vectors; // m x nf
    let m = trace_modes.nrows();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut tr = DVector::zeros(m);
        for j in 0..coeffs.len() {
            let decay = (-basis.eigenvalues[j].max(0.0) * t).exp();
            let c = coeffs[j] * decay;
            for i in 0..m {
                tr[i] += trace_modes[(i, j)] * c;
            }
        }
        out.push(tr);
    }
    Ok(out)
}

/// Random state of unit energy norm (generic over models).
pub fn random_state(sys: &SystemOperators, seed: u64) -> Result<StateVector> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut y = DVector::zeros(sys.dim());
    for i in 0..y.len() {
        y[i] = StandardNormal.sample(&mut rng);
    }
    let norm = sys.energy_norm(&y);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("zero-energy random state".into()));
    }
    Ok(y / norm)
}

/// Random state smoothed by the component fractional calculus of order
/// `-order` and renormalized; a generic stand-in for regular initial data.
pub fn smoothed_random_state(
    sys: &SystemOperators,
    seed: u64,
    order: f64,
) -> Result<StateVector> {
    let rough = random_state(sys, seed)?;
    let smooth = apply_component_fractional_power(sys, -order, &rough)?;
    let norm = sys.energy_norm(&smooth);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("zero-energy smoothed state".into()));
    }
    Ok(smooth / norm)
}
