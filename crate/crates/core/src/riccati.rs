//! Backward Differential Riccati Equation solver and feedback synthesis.
//!
//! The coupled system M y' = A y + B g with cost
//!
//! ```text
//!     J(g) = int_0^T ( |R y(t)|^2 + alpha |g(t)|_U^2 ) dt
//! ```
//!
//! is transformed to mass-normalized coordinates z = L' y (M = L L') and
//! control coordinates with unit weight, where the Riccati equation takes the
//! standard form
//!
//! ```text
//!     dP/dt + A'P + PA + R'R = P B B' P,     P(T) = 0.
//! ```
//!
//! Integration is backward in time by an L-stable second-order BDF formula;
//! each step's algebraic equation is solved by Newton-Kleinman iterations,
//! every iterate one Lyapunov solve of the shifted closed-loop matrix, warm
//! started from the previous snapshot. Snapshots are symmetrized after each
//! step and positivity is monitored at checkpoints, never projected.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lyapunov::lyapunov_solve;
use crate::operators::{StateVector, SystemOperators};
use crate::state_space::{ControlSignal, Stepper, ThetaStep, Trajectory};

/// Reduced dimension cap of the dense backward sweep.
pub const DRE_DIM_CAP: usize = 600;

const NK_MAX_ITER: usize = 30;
const NK_TOL: f64 = 1e-11;
const PSD_TOL: f64 = 1e-8;
const CHECKPOINT_EVERY: usize = 10;

/// Quadratic cost specification: observation matrix and a scalar control
/// weight on the interface control space.
#[derive(Debug, Clone)]
pub struct CostSpec {
    /// Observation matrix R; the state integrand is |R y|^2.
    pub observation: DMatrix<f64>,
    /// Scalar weight on |g|_U^2 (identity scale on U).
    pub control_weight: f64,
    /// Horizon T.
    pub horizon: f64,
}

impl CostSpec {
    /// The full-energy cost: |R y|^2 equals the instantaneous energy of y.
    pub fn full_energy(sys: &SystemOperators) -> Self {
        CostSpec {
            observation: sys.observation.clone(),
            control_weight: 1.0,
            horizon: sys.horizon,
        }
    }

    pub fn validate(&self, sys: &SystemOperators) -> Result<()> {
        if self.observation.ncols() != sys.dim() {
            return Err(Error::DimensionMismatch {
                what: "cost observation columns",
                expected: sys.dim(),
                got: self.observation.ncols(),
            });
        }
        if !(self.control_weight > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "control weight {} must be positive",
                self.control_weight
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cost horizon {} must be positive",
                self.horizon
            )));
        }
        Ok(())
    }

    /// State weight Q = R' R.
    pub fn state_weight(&self) -> DMatrix<f64> {
        self.observation.transpose() * &self.observation
    }
}

/// The standard-coordinate problem data, kept with the solution so states and
/// controls can be mapped back and forth.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Lower Cholesky factor of M.
    pub state_l: DMatrix<f64>,
    /// Lower Cholesky factor of the boundary mass.
    pub control_l: DMatrix<f64>,
    pub control_weight: f64,
}

pub(crate) fn standard_form(sys: &SystemOperators, cost: &CostSpec) -> Result<StandardForm> {
    cost.validate(sys)?;
    let chol = nalgebra::linalg::Cholesky::new(sys.mass.clone())
        .ok_or(Error::Factorization("mass matrix is not positive definite"))?;
    let l = chol.l();
    let a1 = l
        .solve_lower_triangular(&sys.generator)
        .ok_or(Error::Factorization("singular mass Cholesky factor"))?;
    let a = l
        .solve_lower_triangular(&a1.transpose())
        .ok_or(Error::Factorization("singular mass Cholesky factor"))?
        .transpose();
    let qm = cost.state_weight();
    let q1 = l
        .solve_lower_triangular(&qm)
        .ok_or(Error::Factorization("singular mass Cholesky factor"))?;
    let q = l
        .solve_lower_triangular(&q1.transpose())
        .ok_or(Error::Factorization("singular mass Cholesky factor"))?
        .transpose();
    let q = 0.5 * (&q + q.transpose());
    let chol_u = nalgebra::linalg::Cholesky::new(sys.boundary_mass.clone())
        .ok_or(Error::Factorization("boundary mass is not positive definite"))?;
    let lu = chol_u.l();
    let b1 = l
        .solve_lower_triangular(&sys.control)
        .ok_or(Error::Factorization("singular mass Cholesky factor"))?;
    let b = lu
        .solve_lower_triangular(&b1.transpose())
        .ok_or(Error::Factorization("singular boundary Cholesky factor"))?
        .transpose()
        / cost.control_weight.sqrt();
    Ok(StandardForm {
        a,
        b,
        q,
        state_l: l,
        control_l: lu,
        control_weight: cost.control_weight,
    })
}

/// Time grid of symmetric PSD Riccati snapshots with residual metadata.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Snapshot times, ascending over [0, T]; P(T) = 0.
    pub times: Vec<f64>,
    /// Snapshots in mass-normalized coordinates, symmetric and PSD.
    pub snapshots: Vec<DMatrix<f64>>,
    /// (t, Frobenius residual of the DRE by central differences) checkpoints.
    pub residual_log: Vec<(f64, f64)>,
    pub(crate) form: StandardForm,
}

impl RiccatiSolution {
    /// P(0), the optimal-cost operator in mass-normalized coordinates.
    pub fn p0(&self) -> &DMatrix<f64> {
        &self.snapshots[0]
    }

    pub fn dim(&self) -> usize {
        self.form.a.nrows()
    }

    /// Linear interpolation between stored snapshots.
    pub fn snapshot_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let horizon = *self.times.last().expect("nonempty grid");
        if t < -1e-12 || t > horizon + 1e-12 {
            return Err(Error::RiccatiCoverage { t });
        }
        let t = t.clamp(0.0, horizon);
        let hi = self.times.partition_point(|&s| s < t).min(self.times.len() - 1);
        if hi == 0 || (self.times[hi] - t).abs() < 1e-14 {
            return Ok(self.snapshots[hi].clone());
        }
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok((1.0 - w) * &self.snapshots[lo] + w * &self.snapshots[hi])
    }

    /// Physical feedback gain at time t: g = -gain(t) y.
    pub fn gain_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let p = self.snapshot_at(t)?;
        self.gain_from_snapshot(&p)
    }

    pub(crate) fn gain_from_snapshot(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        // g = -alpha^{-1/2} L_U^{-T} B' P L' y
        let k = self.form.b.transpose() * p;
        let k = self
            .form
            .control_l
            .transpose()
            .solve_upper_triangular(&k)
            .ok_or(Error::Factorization("singular boundary Cholesky factor"))?;
        Ok(k * self.form.state_l.transpose() / self.form.control_weight.sqrt())
    }

    /// Optimal cost (P(0) y0, y0) in the mass-normalized inner product.
    pub fn optimal_cost(&self, y0: &StateVector) -> f64 {
        let z = self.form.state_l.transpose() * y0;
        (z.transpose() * self.p0() * &z)[(0, 0)]
    }
}

/// Options for the backward sweep.
#[derive(Debug, Clone, Copy)]
pub struct DreOptions {
    pub dt: f64,
    /// Store every k-th node (the terminal and initial nodes are always kept).
    pub store_every: usize,
}

/// Backward DRE solve with snapshots at every node.
pub fn dre_solve_backward(
    sys: &SystemOperators,
    cost: &CostSpec,
    dt: f64,
) -> Result<RiccatiSolution> {
    dre_solve_with(sys, cost, DreOptions { dt, store_every: 1 })
}

/// Backward DRE solve with snapshot thinning.
pub fn dre_solve_with(
    sys: &SystemOperators,
    cost: &CostSpec,
    opts: DreOptions,
) -> Result<RiccatiSolution> {
    if sys.dim() > DRE_DIM_CAP {
        return Err(Error::EigenCap {
            dim: sys.dim(),
            cap: DRE_DIM_CAP,
        });
    }
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dre dt = {} must be positive",
            opts.dt
        )));
    }
    let form = standard_form(sys, cost)?;
    let horizon = cost.horizon;
    let steps = {
        let n = (horizon / opts.dt).round();
        if n < 1.0 || (n * opts.dt - horizon).abs() > 1e-8 * horizon.max(1.0) {
            return Err(Error::GridMismatch {
                horizon,
                dt: opts.dt,
                got: n as usize,
            });
        }
        n as usize
    };
    let store_every = opts.store_every.max(1);
    let n = form.a.nrows();
    let dtau = opts.dt;
    let bbt = &form.b * form.b.transpose();

    // march in time-to-go tau = T - t, P(tau=0) = 0
    let mut p_prev = DMatrix::<f64>::zeros(n, n); // P_{m-1}
    let mut p_prev2 = DMatrix::<f64>::zeros(n, n); // P_{m-2}
    let mut stored_tau = vec![0.0];
    let mut snapshots_tau = vec![p_prev.clone()];
    let mut residual_log = Vec::new();

    // The terminal layer (stiff modes rising from P(T) = 0 toward their
    // quasi-steady values) is integrated by substepped implicit Euler, which
    // preserves the monotone PSD ordering; BDF2 takes over once the layer
    // has settled. The first macro step is graded geometrically.
    const STARTUP_MACRO_STEPS: usize = 8;
    const FIRST_STEP_FRACTIONS: [f64; 7] = [
        1.0 / 64.0,
        1.0 / 64.0,
        1.0 / 32.0,
        1.0 / 16.0,
        1.0 / 8.0,
        1.0 / 4.0,
        1.0 / 2.0,
    ];
    const LATER_STARTUP_SUBSTEPS: usize = 4;

    let euler_substep = |p: &DMatrix<f64>, h: f64, m: usize| -> Result<DMatrix<f64>> {
        let mut abar = form.a.clone();
        for i in 0..n {
            abar[(i, i)] -= 0.5 / h;
        }
        let qbar = &form.q + p / h;
        let qbar = 0.5 * (&qbar + qbar.transpose());
        newton_kleinman(&abar, &form.b, &qbar, p.clone(), m)
    };

    for m in 1..=steps {
        // shifted algebraic Riccati equation of each (sub)step:
        //   Abar' P + P Abar + Qbar - P B B' P = 0
        let p_new = if m == 1 {
            let mut p = p_prev.clone();
            for frac in FIRST_STEP_FRACTIONS {
                p = euler_substep(&p, frac * dtau, m)?;
            }
            p
        } else if m <= STARTUP_MACRO_STEPS {
            let h = dtau / LATER_STARTUP_SUBSTEPS as f64;
            let mut p = p_prev.clone();
            for _ in 0..LATER_STARTUP_SUBSTEPS {
                p = euler_substep(&p, h, m)?;
            }
            p
        } else {
            // BDF2
            let shift = 0.75 / dtau;
            let qbar = &form.q + (4.0 * &p_prev - &p_prev2) / (2.0 * dtau);
            let qbar = 0.5 * (&qbar + qbar.transpose());
            let mut abar = form.a.clone();
            for i in 0..n {
                abar[(i, i)] -= shift;
            }
            let predictor = 2.0 * &p_prev - &p_prev2;
            newton_kleinman(&abar, &form.b, &qbar, predictor, m)?
        };

        // residual of the node behind us, by central differences in tau
        if m >= 2 && (m - 1) % CHECKPOINT_EVERY == 0 {
            let dp = (&p_new - &p_prev2) / (2.0 * dtau);
            let f = form.a.transpose() * &p_prev + &p_prev * &form.a + &form.q
                - &p_prev * &bbt * &p_prev;
            let t = horizon - (m - 1) as f64 * dtau;
            residual_log.push((t, (&dp - &f).norm()));
        }
        if m % CHECKPOINT_EVERY == 0 || m == steps {
            let eig = nalgebra::linalg::SymmetricEigen::new(p_new.clone());
            let min_eig = eig.eigenvalues.min();
            let norm = p_new.norm();
            if min_eig < -PSD_TOL * norm.max(1e-300) {
                return Err(Error::LostPositivity {
                    t: horizon - m as f64 * dtau,
                    min_eig,
                    norm,
                });
            }
        }

        p_prev2 = std::mem::replace(&mut p_prev, p_new);
        if m % store_every == 0 || m == steps {
            stored_tau.push(m as f64 * dtau);
            snapshots_tau.push(p_prev.clone());
        }
    }

    // reverse to ascending t = T - tau
    let times: Vec<f64> = stored_tau.iter().rev().map(|&tau| horizon - tau).collect();
    let snapshots: Vec<DMatrix<f64>> = snapshots_tau.into_iter().rev().collect();
    residual_log.reverse();
    Ok(RiccatiSolution {
        times,
        snapshots,
        residual_log,
        form,
    })
}

/// Newton-Kleinman for Abar' P + P Abar + Qbar - P B B' P = 0.
fn newton_kleinman(
    abar: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qbar: &DMatrix<f64>,
    warm_start: DMatrix<f64>,
    step: usize,
) -> Result<DMatrix<f64>> {
    let mut p = 0.5 * (&warm_start + warm_start.transpose());
    // roundoff floor of one Lyapunov solve; iterating below it cannot help
    let noise = f64::EPSILON * abar.norm() * abar.nrows() as f64;
    let mut dp_prev = f64::MAX;
    for _it in 1..=NK_MAX_ITER {
        let k = b.transpose() * &p;
        let a_cl = abar - b * &k;
        let rhs = qbar + k.transpose() * &k;
        let rhs = 0.5 * (&rhs + rhs.transpose());
        let p_next = lyapunov_solve(&a_cl, &rhs)?;
        let dp = (&p_next - &p).norm();
        p = p_next;
        let scale = p.norm().max(1.0);
        if dp <= NK_TOL * scale || (dp >= 0.25 * dp_prev && dp <= noise * scale) {
            return Ok(p);
        }
        dp_prev = dp;
    }
    Err(Error::NewtonKleinmanStall {
        step,
        iterations: NK_MAX_ITER,
    })
}

/// Closed-loop synthesis result.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub trajectory: Trajectory,
    pub control: ControlSignal,
    pub cost_value: f64,
}

/// Steps the closed-loop system with g_k = -gain(t_k) y_k frozen per step and
/// evaluates the realized cost by the shared quadrature.
pub fn closed_loop_simulate(
    sys: &SystemOperators,
    cost: &CostSpec,
    ricc: &RiccatiSolution,
    y0: &StateVector,
    stepper: Stepper,
) -> Result<ClosedLoop> {
    sys.assert_state(y0, "closed_loop_simulate initial state")?;
    if ricc.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "riccati solution dimension",
            expected: sys.dim(),
            got: ricc.dim(),
        });
    }
    let steps = stepper.steps(cost.horizon)?;
    if (ricc.times.last().unwrap() - cost.horizon).abs() > 1e-9 * cost.horizon.max(1.0) {
        return Err(Error::RiccatiCoverage {
            t: cost.horizon,
        });
    }
    let step = ThetaStep::new(&sys.mass, &sys.generator, stepper)?;
    let m = sys.control_dim();
    let mut y = y0.clone();
    let mut states = vec![y.clone()];
    let mut times = vec![0.0];
    let mut controls: Vec<DVector<f64>> = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * stepper.dt;
        let gain = ricc.gain_matrix(t)?;
        let g = -(&gain * &y);
        debug_assert_eq!(g.len(), m);
        let load = &sys.control * &g * stepper.dt;
        y = step.advance(&y, &load);
        controls.push(g);
        states.push(y.clone());
        times.push((k + 1) as f64 * stepper.dt);
    }
    let trajectory = Trajectory {
        times: times.clone(),
        states,
        stepper,
    };
    let control = ControlSignal {
        times,
        values: controls,
    };
    let cost_value = quadrature_cost(sys, cost, &trajectory, &control);
    Ok(ClosedLoop {
        trajectory,
        control,
        cost_value,
    })
}

/// (P(0) y0, y0), the predicted optimal cost.
pub fn optimal_cost(ricc: &RiccatiSolution, y0: &StateVector) -> f64 {
    ricc.optimal_cost(y0)
}

/// Shared cost quadrature: trapezoid rule for the state term on the
/// trajectory grid, exact integration of the piecewise-constant control term.
pub fn quadrature_cost(
    sys: &SystemOperators,
    cost: &CostSpec,
    traj: &Trajectory,
    g: &ControlSignal,
) -> f64 {
    let n_nodes = traj.states.len();
    let dt = traj.stepper.dt;
    let mut state_term = 0.0;
    for (k, y) in traj.states.iter().enumerate() {
        let ry = &cost.observation * y;
        let w = if k == 0 || k + 1 == n_nodes { 0.5 } else { 1.0 };
        state_term += w * ry.norm_squared();
    }
    let mut control_term = 0.0;
    for (k, gk) in g.values.iter().enumerate() {
        let h = g.times[k + 1] - g.times[k];
        control_term += h * (gk.transpose() * &sys.boundary_mass * gk)[(0, 0)];
    }
    dt * state_term + cost.control_weight * control_term
}

/// Structural diagnostics of a Riccati solution: symmetry, positivity,
/// monotonicity in the PSD order, and the terminal condition.
#[derive(Debug, Clone)]
pub struct RiccatiStructure {
    /// max_k |P_k - P_k'| (should be zero; symmetrization is enforced).
    pub max_symmetry_deviation: f64,
    /// min_k lambda_min(P_k) / |P_k| over nonzero snapshots.
    pub min_scaled_eigenvalue: f64,
    /// min over consecutive pairs of lambda_min(P(t) - P(t+dt)) / |P(t)|.
    pub min_scaled_monotonicity: f64,
    /// Frobenius norm of P(T).
    pub terminal_norm: f64,
}

pub fn riccati_structure(ricc: &RiccatiSolution) -> RiccatiStructure {
    let mut max_sym: f64 = 0.0;
    let mut min_eig = f64::MAX;
    let mut min_mono = f64::MAX;
    for (k, p) in ricc.snapshots.iter().enumerate() {
        max_sym = max_sym.max((p - p.transpose()).norm());
        let norm = p.norm();
        if norm > 0.0 {
            let eig = nalgebra::linalg::SymmetricEigen::new(p.clone());
            min_eig = min_eig.min(eig.eigenvalues.min() / norm);
        }
        if k + 1 < ricc.snapshots.len() {
            let diff = p - &ricc.snapshots[k + 1];
            if norm > 0.0 {
                let eig = nalgebra::linalg::SymmetricEigen::new(diff);
                min_mono = min_mono.min(eig.eigenvalues.min() / norm);
            }
        }
    }
    RiccatiStructure {
        max_symmetry_deviation: max_sym,
        min_scaled_eigenvalue: if min_eig == f64::MAX { 0.0 } else { min_eig },
        min_scaled_monotonicity: if min_mono == f64::MAX { 0.0 } else { min_mono },
        terminal_norm: ricc.snapshots.last().map(|p| p.norm()).unwrap_or(0.0),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::heatwave::{assemble_heatwave, make_initial_state, HeatWaveConfig, InitialKind};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    /// Scalar control system y' = a y + b g as SystemOperators.
    pub(crate) fn scalar_lq(a: f64, b: f64, horizon: f64) -> SystemOperators {
        let one = DMatrix::from_element(1, 1, 1.0);
        SystemOperators {
            mass: one.clone(),
            generator: DMatrix::from_element(1, 1, a),
            control: DMatrix::from_element(1, 1, b),
            trace_map: one.clone(),
            observation: one.clone(),
            index_map: crate::operators::IndexMap {
                fluid: 0..1,
                solid_disp: 1..1,
                solid_vel: 1..1,
            },
            level: 1,
            horizon,
            energy_form: one.clone(),
            state_norm_form: one.clone(),
            boundary_mass: one.clone(),
            fluid: crate::operators::FluidEvolution {
                mass: one.clone(),
                stiffness: one.clone(),
                from_state: one.clone(),
                trace: one.clone(),
            },
            smoothing_blocks: vec![],
            fluid_h: 1.0,
            block_eigen: OnceLock::new(),
        }
    }

    #[test]
    fn scalar_linear_case_p_equals_one_minus_t() {
        // a = 0, b = 0, r = 1: P' = -1, P(1) = 0 so P(t) = 1 - t
        let sys = scalar_lq(0.0, 0.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 1e-3).unwrap();
        let mut max_err = 0.0f64;
        for (t, p) in ricc.times.iter().zip(ricc.snapshots.iter()) {
            max_err = max_err.max((p[(0, 0)] - (1.0 - t)).abs());
        }
        assert!(max_err <= 1e-8, "max error {max_err:.3e}");
    }

    #[test]
    fn scalar_riccati_matches_tanh_closed_form() {
        // a = 0, b = 1, r = 1: P(t) = tanh(1 - t)
        let sys = scalar_lq(0.0, 1.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 1e-3).unwrap();
        let mut max_err = 0.0f64;
        for (t, p) in ricc.times.iter().zip(ricc.snapshots.iter()) {
            max_err = max_err.max((p[(0, 0)] - (1.0 - t).tanh()).abs());
        }
        assert!(max_err <= 1e-6, "max error {max_err:.3e}");
    }

    /// Fine explicit RK4 integration of the matrix DRE as an independent
    /// oracle on a random stable 5x5 system.
    #[test]
    fn random_system_matches_rk4_oracle() {
        use rand::{Rng, SeedableRng};
        let n = 5;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        for i in 0..n {
            a[(i, i)] -= 2.0;
        }
        let b = DMatrix::from_fn(n, 1, |_, _| rng.gen::<f64>() - 0.5);
        let r = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);

        let mut sys = scalar_lq(0.0, 0.0, 0.5);
        sys.mass = DMatrix::identity(n, n);
        sys.generator = a.clone();
        sys.control = b.clone();
        sys.observation = r.clone();
        sys.boundary_mass = DMatrix::identity(1, 1);
        sys.energy_form = DMatrix::identity(n, n);
        sys.state_norm_form = DMatrix::identity(n, n);
        sys.trace_map = DMatrix::zeros(1, n);
        let cost = CostSpec {
            observation: r.clone(),
            control_weight: 1.0,
            horizon: 0.5,
        };
        let ricc = dre_solve_backward(&sys, &cost, 2.5e-4).unwrap();

        // oracle: dP/dtau = A'P + PA + Q - P BB' P, P(0) = 0, explicit RK4
        let q = r.transpose() * &r;
        let bbt = &b * b.transpose();
        let f = |p: &DMatrix<f64>| {
            a.transpose() * p + p * &a + &q - p * &bbt * p
        };
        let dtau = 1e-5_f64;
        let mut p = DMatrix::<f64>::zeros(n, n);
        let nsteps = (0.5 / dtau).round() as usize;
        for _ in 0..nsteps {
            let k1 = f(&p);
            let k2 = f(&(&p + 0.5 * dtau * &k1));
            let k3 = f(&(&p + 0.5 * dtau * &k2));
            let k4 = f(&(&p + dtau * &k3));
            p += dtau / 6.0 * (&k1 + 2.0 * &k2 + 2.0 * &k3 + &k4);
        }
        let diff = (ricc.p0() - &p).amax();
        assert!(diff <= 1e-6, "P(0) differs from RK4 oracle by {diff:.3e}");
    }

    #[test]
    fn terminal_snapshot_is_exactly_zero() {
        let sys = scalar_lq(0.0, 1.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 0.05).unwrap();
        assert_eq!(ricc.snapshots.last().unwrap().norm(), 0.0);
        assert_relative_eq!(*ricc.times.last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_scalar_cost_converges_to_tanh_one() {
        let sys = scalar_lq(0.0, 1.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 1e-3).unwrap();
        let y0 = DVector::from_element(1, 1.0);
        let cl = closed_loop_simulate(&sys, &cost, &ricc, &y0, Stepper::new(1e-3, 1.0).unwrap())
            .unwrap();
        assert!(
            (cl.cost_value - 1.0f64.tanh()).abs() <= 1e-3,
            "cost {} vs tanh(1) {}",
            cl.cost_value,
            1.0f64.tanh()
        );
        assert_relative_eq!(ricc.optimal_cost(&y0), 1.0f64.tanh(), epsilon = 1e-6);
    }

    #[test]
    fn zero_state_gives_zero_control_and_cost() {
        let sys = scalar_lq(0.0, 1.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 0.01).unwrap();
        let y0 = DVector::zeros(1);
        let cl = closed_loop_simulate(&sys, &cost, &ricc, &y0, Stepper::new(0.01, 1.0).unwrap())
            .unwrap();
        assert_eq!(cl.cost_value, 0.0);
        for g in &cl.control.values {
            assert_eq!(g[0], 0.0);
        }
        assert_eq!(optimal_cost(&ricc, &y0), 0.0);
    }

    #[test]
    fn closed_loop_cost_scales_quadratically() {
        let sys = scalar_lq(-0.3, 1.0, 1.0);
        let cost = CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let ricc = dre_solve_backward(&sys, &cost, 0.01).unwrap();
        let stepper = Stepper::new(0.01, 1.0).unwrap();
        let c1 = closed_loop_simulate(&sys, &cost, &ricc, &DVector::from_element(1, 1.0), stepper)
            .unwrap()
            .cost_value;
        let c2 = closed_loop_simulate(&sys, &cost, &ricc, &DVector::from_element(1, 2.0), stepper)
            .unwrap()
            .cost_value;
        assert_relative_eq!(c2, 4.0 * c1, max_relative = 1e-9);
    }

    #[test]
    fn heatwave_structure_and_cost_identity_at_small_scale() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(8, 8)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let ricc = dre_solve_backward(&sys, &cost, 1e-3).unwrap();
        let structure = riccati_structure(&ricc);
        assert_eq!(structure.terminal_norm, 0.0);
        assert_eq!(structure.max_symmetry_deviation, 0.0);
        assert!(structure.min_scaled_eigenvalue >= -1e-8);
        assert!(structure.min_scaled_monotonicity >= -1e-8);

        let y0 = make_initial_state(&sys, InitialKind::Smooth, 0).unwrap();
        let predicted = ricc.optimal_cost(&y0);
        let cl = closed_loop_simulate(&sys, &cost, &ricc, &y0, Stepper::new(1e-3, 0.5).unwrap())
            .unwrap();
        let rel = (predicted - cl.cost_value).abs() / predicted.abs();
        assert!(
            rel <= 1e-3,
            "optimal cost {predicted} vs realized {} (rel {rel:.2e})",
            cl.cost_value
        );
    }

    #[test]
    fn dre_residual_checkpoints_are_small() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(6, 6)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let dt = 2e-3;
        let ricc = dre_solve_backward(&sys, &cost, dt).unwrap();
        assert!(!ricc.residual_log.is_empty());
        let form = &ricc.form;
        let bbt = &form.b * form.b.transpose();
        for &(t, res) in &ricc.residual_log {
            let p = ricc.snapshot_at(t).unwrap();
            let scale = form.q.norm()
                + 2.0 * form.a.norm() * p.norm()
                + (&p * &bbt * &p).norm();
            assert!(
                res <= 10.0 * dt * scale.max(1.0),
                "residual {res:.3e} at t = {t} above 10 dt scale"
            );
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let mut sys = scalar_lq(0.0, 1.0, 1.0);
        let big = DRE_DIM_CAP + 1;
        sys.mass = DMatrix::identity(big, big);
        sys.generator = -DMatrix::identity(big, big);
        sys.control = DMatrix::zeros(big, 1);
        sys.observation = DMatrix::identity(big, big);
        sys.trace_map = DMatrix::zeros(1, big);
        sys.energy_form = DMatrix::identity(big, big);
        sys.state_norm_form = DMatrix::identity(big, big);
        let cost = CostSpec {
            observation: DMatrix::identity(big, big),
            control_weight: 1.0,
            horizon: 1.0,
        };
        let err = dre_solve_backward(&sys, &cost, 0.1).unwrap_err();
        assert!(matches!(err, Error::EigenCap { .. }));
    }
}
