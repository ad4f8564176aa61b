//! Independent open-loop minimizer: discrete adjoint gradients and conjugate
//! gradient over the piecewise-constant control space. Gradients are exact
//! for the discrete cost (discretize-then-optimize), so this module is the
//! ground truth the Riccati synthesis is checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{StateVector, SystemOperators};
use crate::riccati::{quadrature_cost, CostSpec};
use crate::state_space::{propagate_theta, ControlSignal, Stepper};

/// Outcome of the conjugate-gradient minimization.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub g_star: ControlSignal,
    pub j_star: f64,
    pub iterations: usize,
    /// L2(0,T;U) gradient norms per iteration (including the initial one).
    pub gradient_norm_history: Vec<f64>,
    /// Cost values per iteration.
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

/// Simulates with the theta method and integrates |R y|^2 + alpha |g|_U^2;
/// trapezoid rule for the state term on the state grid, the control term
/// integrated exactly.
pub fn evaluate_cost(
    sys: &SystemOperators,
    cost: &CostSpec,
    y0: &StateVector,
    g: &ControlSignal,
    stepper: Stepper,
) -> Result<f64> {
    cost.validate(sys)?;
    let traj = propagate_theta(sys, y0, g, stepper)?;
    Ok(quadrature_cost(sys, cost, &traj, g))
}

/// Exact gradient of the discrete cost with respect to the interval values
/// of g, represented in the L2(0,T;U) pairing: the directional derivative is
/// sum_k dt <grad_k, delta_k>_U.
///
/// The adjoint recursion is the theta scheme transposed; with B = 0 the
/// gradient is exactly 2 alpha g.
pub fn adjoint_gradient(
    sys: &SystemOperators,
    cost: &CostSpec,
    y0: &StateVector,
    g: &ControlSignal,
    stepper: Stepper,
) -> Result<ControlSignal> {
    cost.validate(sys)?;
    let traj = propagate_theta(sys, y0, g, stepper)?;
    let n_steps = traj.steps();
    let dt = stepper.dt;
    let q = cost.state_weight();

    let implicit_t = (&sys.mass - stepper.theta * dt * &sys.generator).transpose();
    let explicit_t = (&sys.mass + (1.0 - stepper.theta) * dt * &sys.generator).transpose();
    let lu = implicit_t.lu();
    if lu.solve(&DVector::from_element(sys.dim(), 1.0)).is_none() {
        return Err(Error::SingularStepMatrix {
            dt,
            theta: stepper.theta,
        });
    }
    let bmass_chol = nalgebra::linalg::Cholesky::new(sys.boundary_mass.clone())
        .ok_or(Error::Factorization("boundary mass is not positive definite"))?;

    // terminal adjoint: F1' mu_N = -dt Q y_N (trapezoid weight 1/2)
    let mut mu = lu
        .solve(&(-dt * (&q * &traj.states[n_steps])))
        .expect("factor verified");
    let mut grad = vec![DVector::zeros(sys.control_dim()); n_steps];
    for k in (0..n_steps).rev() {
        // gradient entry for interval k uses mu_{k+1}
        let bt_mu = sys.control.transpose() * &mu;
        let correction = bmass_chol.solve(&bt_mu);
        let g_k = g.value_at((k as f64 + 0.5) * dt);
        grad[k] = 2.0 * cost.control_weight * g_k - correction;
        if k > 0 {
            let rhs = &explicit_t * &mu - 2.0 * dt * (&q * &traj.states[k]);
            mu = lu.solve(&rhs).expect("factor verified");
        }
    }
    Ok(ControlSignal {
        times: g.times.clone(),
        values: grad,
    })
}

fn l2_inner(a: &ControlSignal, b: &ControlSignal, bmass: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.values.len() {
        let dt = a.times[k + 1] - a.times[k];
        acc += dt * (a.values[k].transpose() * bmass * &b.values[k])[(0, 0)];
    }
    acc
}

fn axpy(y: &mut ControlSignal, alpha: f64, x: &ControlSignal) {
    for (yk, xk) in y.values.iter_mut().zip(x.values.iter()) {
        *yk += alpha * xk;
    }
}

/// Conjugate gradient on the quadratic cost over piecewise-constant controls,
/// matrix-free via the adjoint gradient, in the L2(0,T;U) geometry.
///
/// Stops when the gradient norm falls below `tol (1 + |g|)` or after the
/// control-space dimension count of iterations, whichever comes first; in the
/// latter case the result is returned with `converged = false`.
pub fn minimize_cg(
    sys: &SystemOperators,
    cost: &CostSpec,
    y0: &StateVector,
    stepper: Stepper,
    tol: f64,
) -> Result<OracleResult> {
    minimize_cg_from(sys, cost, y0, stepper, tol, None, None)
}

/// [`minimize_cg`] with an explicit starting control and iteration cap.
pub fn minimize_cg_from(
    sys: &SystemOperators,
    cost: &CostSpec,
    y0: &StateVector,
    stepper: Stepper,
    tol: f64,
    start: Option<&ControlSignal>,
    max_iters: Option<usize>,
) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "CG tolerance {tol} must be positive"
        )));
    }
    let steps = stepper.steps(cost.horizon)?;
    let m = sys.control_dim();
    let dim = steps * m;
    let max_iters = max_iters.unwrap_or(dim);
    let bmass = sys.boundary_mass.clone();

    let zero = ControlSignal::zero(m, cost.horizon, steps);
    let mut g = match start {
        Some(s) => {
            if s.values.len() != steps || s.values.first().map(|v| v.len()) != Some(m) {
                return Err(Error::DimensionMismatch {
                    what: "CG starting control",
                    expected: dim,
                    got: s.values.len() * s.values.first().map(|v| v.len()).unwrap_or(0),
                });
            }
            s.clone()
        }
        None => zero.clone(),
    };

    let grad_zero = adjoint_gradient(sys, cost, y0, &zero, stepper)?;
    // linear part of the gradient map: A g = grad(g) - grad(0)
    let apply = |u: &ControlSignal| -> Result<ControlSignal> {
        let mut gu = adjoint_gradient(sys, cost, y0, u, stepper)?;
        axpy(&mut gu, -1.0, &grad_zero);
        Ok(gu)
    };

    let mut r = apply(&g)?; // A g
    axpy(&mut r, 1.0, &grad_zero); // full gradient at g
    for v in r.values.iter_mut() {
        *v *= -1.0; // residual = -grad
    }
    let mut rs = l2_inner(&r, &r, &bmass);
    let mut d = r.clone();

    let mut gradient_norm_history = vec![rs.sqrt()];
    let mut cost_history = vec![evaluate_cost(sys, cost, y0, &g, stepper)?];
    let mut converged = rs.sqrt() <= tol * (1.0 + l2_inner(&g, &g, &bmass).sqrt());
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        let ad = apply(&d)?;
        let dad = l2_inner(&d, &ad, &bmass);
        if !(dad > 0.0) {
            // numerically flat direction; stop rather than divide by ~zero
            break;
        }
        let alpha = rs / dad;
        axpy(&mut g, alpha, &d);
        axpy(&mut r, -alpha, &ad);
        let rs_new = l2_inner(&r, &r, &bmass);
        iterations += 1;
        gradient_norm_history.push(rs_new.sqrt());
        cost_history.push(evaluate_cost(sys, cost, y0, &g, stepper)?);
        if rs_new.sqrt() <= tol * (1.0 + l2_inner(&g, &g, &bmass).sqrt()) {
            converged = true;
            break;
        }
        let beta = rs_new / rs;
        rs = rs_new;
        let mut d_next = r.clone();
        axpy(&mut d_next, beta, &d);
        d = d_next;
    }

    let j_star = *cost_history.last().expect("at least the initial cost");
    Ok(OracleResult {
        g_star: g,
        j_star,
        iterations,
        gradient_norm_history,
        cost_history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatwave::{assemble_heatwave, make_initial_state, HeatWaveConfig, InitialKind};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn scalar_sys(a: f64, b: f64, horizon: f64) -> SystemOperators {
        crate::riccati::tests::scalar_lq(a, b, horizon)
    }

    fn unit_cost(horizon: f64) -> CostSpec {
        CostSpec {
            observation: DMatrix::from_element(1, 1, 1.0),
            control_weight: 1.0,
            horizon,
        }
    }

    #[test]
    fn frozen_state_cost_is_horizon_times_norm() {
        // A = 0, B = 0, R = I, g = 0: J = T |y0|^2 exactly
        let sys = scalar_sys(0.0, 0.0, 2.0);
        let cost = unit_cost(2.0);
        let y0 = DVector::from_element(1, 1.5);
        let g = ControlSignal::zero(1, 2.0, 40);
        let j = evaluate_cost(&sys, &cost, &y0, &g, Stepper::new(0.05, 1.0).unwrap()).unwrap();
        assert_relative_eq!(j, 2.0 * 1.5 * 1.5, epsilon = 1e-12);
    }

    /// Independent quadrature: with g = 0 the cost must equal the trapezoid
    /// integral of the simulated energy integrand.
    #[test]
    fn free_cost_matches_direct_energy_quadrature() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(10, 10)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let y0 = make_initial_state(&sys, InitialKind::RandomEnergyUnit, 4).unwrap();
        let stepper = Stepper::new(0.01, 1.0).unwrap();
        let g = ControlSignal::zero(1, sys.horizon, 100);
        let j = evaluate_cost(&sys, &cost, &y0, &g, stepper).unwrap();

        let traj = propagate_theta(&sys, &y0, &g, stepper).unwrap();
        let mut acc = 0.0;
        for (k, y) in traj.states.iter().enumerate() {
            let w = if k == 0 || k + 1 == traj.states.len() { 0.5 } else { 1.0 };
            acc += w * stepper.dt * crate::state_space::energy_of(&sys, y);
        }
        assert_relative_eq!(j, acc, epsilon = 1e-10);
    }

    #[test]
    fn cost_dominates_control_energy() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(6, 6)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let y0 = make_initial_state(&sys, InitialKind::Smooth, 0).unwrap();
        let stepper = Stepper::new(0.02, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut g = ControlSignal::zero(1, sys.horizon, 50);
        for v in g.values.iter_mut() {
            v[0] = rng.gen::<f64>() - 0.5;
        }
        let j = evaluate_cost(&sys, &cost, &y0, &g, stepper).unwrap();
        let control_energy: f64 = g
            .values
            .iter()
            .map(|v| stepper.dt * v[0] * v[0])
            .sum();
        assert!(j >= control_energy);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(8, 6)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let y0 = make_initial_state(&sys, InitialKind::RandomEnergyUnit, 7).unwrap();
        let stepper = Stepper::new(0.025, 1.0).unwrap();
        let steps = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut g = ControlSignal::zero(1, sys.horizon, steps);
        for v in g.values.iter_mut() {
            v[0] = rng.gen::<f64>() - 0.5;
        }
        let grad = adjoint_gradient(&sys, &cost, &y0, &g, stepper).unwrap();
        let eps = 1e-6;
        for _ in 0..5 {
            let mut delta = ControlSignal::zero(1, sys.horizon, steps);
            for v in delta.values.iter_mut() {
                v[0] = rng.gen::<f64>() - 0.5;
            }
            let mut gp = g.clone();
            axpy(&mut gp, eps, &delta);
            let mut gm = g.clone();
            axpy(&mut gm, -eps, &delta);
            let jp = evaluate_cost(&sys, &cost, &y0, &gp, stepper).unwrap();
            let jm = evaluate_cost(&sys, &cost, &y0, &gm, stepper).unwrap();
            let fd = (jp - jm) / (2.0 * eps);
            let pred = l2_inner(&grad, &delta, &sys.boundary_mass);
            let rel = (fd - pred).abs() / pred.abs().max(1e-12);
            assert!(rel <= 1e-5, "directional derivative rel error {rel:.2e}");
        }
    }

    #[test]
    fn zero_b_gradient_is_two_g() {
        let sys = scalar_sys(-1.0, 0.0, 1.0);
        let cost = unit_cost(1.0);
        let y0 = DVector::from_element(1, 1.0);
        let stepper = Stepper::new(0.05, 1.0).unwrap();
        let mut g = ControlSignal::zero(1, 1.0, 20);
        for (k, v) in g.values.iter_mut().enumerate() {
            v[0] = (k as f64 * 0.37).sin();
        }
        let grad = adjoint_gradient(&sys, &cost, &y0, &g, stepper).unwrap();
        for (gk, dk) in g.values.iter().zip(grad.values.iter()) {
            assert_eq!(dk[0], 2.0 * gk[0]);
        }
    }

    #[test]
    fn scalar_minimum_matches_tanh_closed_form() {
        let sys = scalar_sys(0.0, 1.0, 1.0);
        let cost = unit_cost(1.0);
        let y0 = DVector::from_element(1, 1.0);
        let stepper = Stepper::new(1e-3, 0.5).unwrap();
        let res = minimize_cg(&sys, &cost, &y0, stepper, 1e-9).unwrap();
        assert!(res.converged);
        assert!(
            (res.j_star - 1.0f64.tanh()).abs() <= 1e-3,
            "J* = {} vs tanh(1) = {}",
            res.j_star,
            1.0f64.tanh()
        );
    }

    #[test]
    fn zero_initial_state_has_zero_minimizer() {
        let sys = scalar_sys(0.0, 1.0, 1.0);
        let cost = unit_cost(1.0);
        let y0 = DVector::zeros(1);
        let res = minimize_cg(&sys, &cost, &y0, Stepper::new(0.01, 1.0).unwrap(), 1e-10).unwrap();
        assert_eq!(res.j_star, 0.0);
        for v in &res.g_star.values {
            assert_eq!(v[0], 0.0);
        }
    }

    #[test]
    fn cost_history_is_monotone_and_gradient_small_at_optimum() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(8, 8)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let y0 = make_initial_state(&sys, InitialKind::Smooth, 0).unwrap();
        let stepper = Stepper::new(0.02, 0.5).unwrap();
        let tol = 1e-8;
        let res = minimize_cg(&sys, &cost, &y0, stepper, tol).unwrap();
        assert!(res.converged);
        for w in res.cost_history.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "cost rose: {} -> {}",
                w[0],
                w[1]
            );
        }
        let grad = adjoint_gradient(&sys, &cost, &y0, &res.g_star, stepper).unwrap();
        let gnorm = l2_inner(&grad, &grad, &sys.boundary_mass).sqrt();
        let gstar_norm = l2_inner(&res.g_star, &res.g_star, &sys.boundary_mass).sqrt();
        assert!(gnorm <= tol * (1.0 + gstar_norm) * 10.0);
    }

    /// Uniqueness proxy: two CG runs from different starting controls reach
    /// the same minimizer.
    #[test]
    fn different_starts_land_on_the_same_minimizer() {
        let sys = assemble_heatwave(&HeatWaveConfig::new(6, 6)).unwrap();
        let cost = CostSpec::full_energy(&sys);
        let y0 = make_initial_state(&sys, InitialKind::Smooth, 0).unwrap();
        let stepper = Stepper::new(0.025, 1.0).unwrap();
        let tol = 1e-10;
        let a = minimize_cg(&sys, &cost, &y0, stepper, tol).unwrap();
        let mut warm = ControlSignal::zero(1, sys.horizon, 40);
        for (k, v) in warm.values.iter_mut().enumerate() {
            v[0] = 0.3 * ((k as f64) * 0.2).cos();
        }
        let b = minimize_cg_from(&sys, &cost, &y0, stepper, tol, Some(&warm), None).unwrap();
        let mut diff = a.g_star.clone();
        axpy(&mut diff, -1.0, &b.g_star);
        let dn = l2_inner(&diff, &diff, &sys.boundary_mass).sqrt();
        let an = l2_inner(&a.g_star, &a.g_star, &sys.boundary_mass).sqrt();
        assert!(dn <= 1e-6 * (1.0 + an), "minimizers differ by {dn:.3e}");
    }
}
