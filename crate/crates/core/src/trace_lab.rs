//! Empirical verification of the interface trace estimates: the pointwise
//! singular decay of the free fluid trace, L_p integrability of the
//! interface-forced remainder, the admissible L_q window for the trace of
//! u_t, and the refinement growth of the raw feedback gain against the
//! stability of its smoothed counterpart.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heatwave::{assemble_heatwave, HeatWaveConfig};
use crate::operators::{StateVector, SystemOperators};
use crate::riccati::{dre_solve_with, CostSpec, DreOptions};
use crate::state_space::{
    apply_component_fractional_power, decompose_fluid, free_fluid_trace_series,
    propagate_theta, random_state, ControlSignal, Stepper,
};
use crate::stokes_lame::{
    assemble_saddle, generate_annulus_mesh, project_solenoidal_with_horizon, MaterialParams,
};

/// Power-law fit of a positive series over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Magnitude of the fitted log-log slope.
    pub exponent: f64,
    /// Coefficient of determination of the regression.
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares slope of log(value) against log(t) over the window.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::EmptySeries);
    }
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .zip(values.iter())
        .filter(|(&t, &v)| t >= window.0 && t <= window.1 && t > 0.0 && v > 0.0)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    if pairs.len() < 4 {
        return Err(Error::EmptySeries);
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &pairs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let ss_res: f64 = pairs
        .iter()
        .map(|&(x, y)| {
            let fit = mean_y + slope * (x - mean_x);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if syy > 1e-300 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(FitResult {
        exponent: slope.abs(),
        r_squared,
        window,
        samples: pairs.len(),
    })
}

/// Decay data and fit of the free-fluid interface trace.
#[derive(Debug, Clone)]
pub struct SingularFitStudy {
    pub fit: FitResult,
    /// Log-spaced sample times.
    pub times: Vec<f64>,
    /// Ensemble supremum of the trace norm at each sample time.
    pub sup_series: Vec<f64>,
    /// Per-member trace-norm series.
    pub member_series: Vec<Vec<f64>>,
}

/// Fits the decay exponent of sup over the ensemble of |u1(t)|_Gamma against
/// t on a log-spaced window.
///
/// The window must start above ten times the fluid mesh cutoff h^2 (below it
/// the discrete semigroup cannot exhibit the estimate) and span at least 1.5
/// decades.
pub fn fit_singular_exponent(
    sys: &SystemOperators,
    initial_states: &[StateVector],
    window: (f64, f64),
    samples: usize,
) -> Result<SingularFitStudy> {
    if initial_states.is_empty() {
        return Err(Error::EmptySeries);
    }
    let cutoff = 10.0 * sys.fluid_h * sys.fluid_h;
    if window.0 < cutoff {
        return Err(Error::WindowBelowCutoff {
            t_min: window.0,
            cutoff,
        });
    }
    if !(window.1 > window.0 && window.1 <= sys.horizon) {
        return Err(Error::InvalidParameter(format!(
            "fit window ({}, {}) outside (0, {}]",
            window.0, window.1, sys.horizon
        )));
    }
    let decades = (window.1 / window.0).log10();
    if decades < 1.5 {
        return Err(Error::WindowTooNarrow {
            decades,
            needed: 1.5,
        });
    }
    let samples = samples.max(16);
    let times: Vec<f64> = (0..samples)
        .map(|k| {
            let f = k as f64 / (samples - 1) as f64;
            window.0 * (window.1 / window.0).powf(f)
        })
        .collect();
    let member_series: Vec<Vec<f64>> = initial_states
        .par_iter()
        .map(|y0| {
            let traces = free_fluid_trace_series(sys, y0, &times)?;
            Ok(traces.iter().map(|tr| sys.trace_norm(tr)).collect())
        })
        .collect::<Result<_>>()?;
    let sup_series: Vec<f64> = (0..times.len())
        .map(|k| member_series.iter().map(|s| s[k]).fold(0.0f64, f64::max))
        .collect();
    let fit = fit_power_law(&times, &sup_series, window)?;
    Ok(SingularFitStudy {
        fit,
        times,
        sup_series,
        member_series,
    })
}

/// Trapezoid-rule L_p norm in time of a scalar series on a grid.
pub fn lp_trace_norm(times: &[f64], series: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidLpExponent(p));
    }
    if times.len() != series.len() || times.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        acc += 0.5 * dt * (series[k].abs().powf(p) + series[k + 1].abs().powf(p));
    }
    Ok(acc.powf(1.0 / p))
}

/// Model families the refinement studies range over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    /// 1D heat-wave; level = interval count on each segment.
    HeatWave { kappa: f64, c2: f64, horizon: f64 },
    /// 2D reduction; level = grid resolution (multiples of 8).
    StokesLame {
        params: MaterialParams,
        horizon: f64,
    },
    /// Heat-wave with the control column zeroed; degenerate family for the
    /// not-applicable branch of the gain study.
    HeatWaveZeroControl { kappa: f64, c2: f64, horizon: f64 },
}

impl ModelFamily {
    pub fn heatwave(horizon: f64) -> Self {
        ModelFamily::HeatWave {
            kappa: 1.0,
            c2: 1.0,
            horizon,
        }
    }

    pub fn build(&self, level: usize) -> Result<SystemOperators> {
        match *self {
            ModelFamily::HeatWave { kappa, c2, horizon } => assemble_heatwave(&HeatWaveConfig {
                n_f: level,
                n_s: level,
                kappa,
                c2,
                horizon,
            }),
            ModelFamily::HeatWaveZeroControl { kappa, c2, horizon } => {
                let mut sys = assemble_heatwave(&HeatWaveConfig {
                    n_f: level,
                    n_s: level,
                    kappa,
                    c2,
                    horizon,
                })?;
                sys.control.fill(0.0);
                Ok(sys)
            }
            ModelFamily::StokesLame { params, horizon } => {
                let mesh = generate_annulus_mesh(level)?;
                let saddle = assemble_saddle(&mesh, &params)?;
                Ok(project_solenoidal_with_horizon(&saddle, horizon)?.sys)
            }
        }
    }
}

/// Three-valued outcome of a study assertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyVerdict {
    Pass,
    Fail,
    NotApplicable,
}

/// One refinement level of the gain study.
#[derive(Debug, Clone, Copy)]
pub struct GainRow {
    pub level: usize,
    pub dim: usize,
    /// Operator norm of the feedback gain at t = 0, measured from the
    /// (fluid L2 x solid H1 x solid L2) state norm into L2(Gamma).
    pub raw: f64,
    /// Same norm with the component smoothing of order -epsilon applied
    /// first.
    pub smoothed: f64,
}

/// Gain refinement study output.
#[derive(Debug, Clone)]
pub struct GainStudy {
    pub rows: Vec<GainRow>,
    pub epsilon: f64,
    pub raw_strictly_increasing: StudyVerdict,
    /// Largest consecutive ratio of the smoothed norms.
    pub max_smoothed_ratio: f64,
    pub smoothed_ratio_ok: bool,
    /// Set when a level failed; rows before the failure are kept.
    pub aborted: Option<String>,
}

/// Operator norm of `gain` from the y_form inner-product space into the
/// u_form one: sigma_max(L_u' G L_y^{-T}).
fn operator_norm(
    gain: &DMatrix<f64>,
    y_form: &DMatrix<f64>,
    u_form: &DMatrix<f64>,
) -> Result<f64> {
    let ly = nalgebra::linalg::Cholesky::new(y_form.clone())
        .ok_or(Error::Factorization("state-norm form is not positive definite"))?
        .l();
    let lu = nalgebra::linalg::Cholesky::new(u_form.clone())
        .ok_or(Error::Factorization("control-norm form is not positive definite"))?
        .l();
    // G L_y^{-T} = (L_y^{-1} G')'
    let g1 = ly
        .solve_lower_triangular(&gain.transpose())
        .ok_or(Error::Factorization("singular state-norm factor"))?
        .transpose();
    let g2 = lu.transpose() * g1;
    let svd = g2.svd(false, false);
    Ok(svd.singular_values.max())
}

/// Builds each level, solves the DRE, and compares the refinement growth of
/// the raw feedback gain at t = 0 with its smoothed counterpart.
pub fn gain_refinement_study(
    family: &ModelFamily,
    levels: &[usize],
    dre_dt: f64,
    epsilon_smooth: f64,
) -> Result<GainStudy> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "levels must be nonempty and strictly increasing".into(),
        ));
    }
    if !(epsilon_smooth > 0.0 && epsilon_smooth < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "epsilon_smooth = {epsilon_smooth} outside (0, 1/4)"
        )));
    }
    let results: Vec<Result<GainRow>> = levels
        .par_iter()
        .map(|&level| {
            let sys = family.build(level)?;
            let cost = CostSpec::full_energy(&sys);
            let ricc = dre_solve_with(
                &sys,
                &cost,
                DreOptions {
                    dt: dre_dt,
                    store_every: usize::MAX,
                },
            )?;
            let gain = ricc.gain_matrix(0.0)?;
            let raw = operator_norm(&gain, &sys.state_norm_form, &sys.boundary_mass)?;
            let smoother = fractional_power_matrix(&sys, -epsilon_smooth)?;
            let smoothed_gain = &gain * smoother;
            let smoothed =
                operator_norm(&smoothed_gain, &sys.state_norm_form, &sys.boundary_mass)?;
            Ok(GainRow {
                level,
                dim: sys.dim(),
                raw,
                smoothed,
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut aborted = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }

    let degenerate = rows.iter().all(|r| r.raw <= 1e-12);
    let raw_strictly_increasing = if rows.len() < 2 {
        StudyVerdict::Pass
    } else if degenerate {
        StudyVerdict::NotApplicable
    } else if rows.windows(2).all(|w| w[1].raw > w[0].raw) {
        StudyVerdict::Pass
    } else {
        StudyVerdict::Fail
    };
    let max_smoothed_ratio = if degenerate {
        1.0
    } else {
        rows.windows(2)
            .map(|w| w[1].smoothed / w[0].smoothed.max(1e-300))
            .fold(1.0f64, f64::max)
    };
    let smoothed_ratio_ok = max_smoothed_ratio <= crate::tolerances::GAIN_SMOOTHED_RATIO_MAX;
    Ok(GainStudy {
        rows,
        epsilon: epsilon_smooth,
        raw_strictly_increasing,
        max_smoothed_ratio,
        smoothed_ratio_ok,
        aborted,
    })
}

/// Full matrix of the component fractional power (see
/// [`apply_component_fractional_power`]); built column by column from the
/// cached block eigenbases.
pub fn fractional_power_matrix(sys: &SystemOperators, s: f64) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let mut out = DMatrix::identity(n, n);
    for j in 0..n {
        let e = nalgebra::DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        let col = apply_component_fractional_power(sys, s, &e)?;
        out.set_column(j, &col);
    }
    Ok(out)
}

/// Admissible supremum of the time exponent q given the smoothness
/// parameter: 4 / (3 + 4 theta), for theta in (0, 1/4).
pub fn admissible_q_sup(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 0.25) {
        return Err(Error::ThetaRange(theta));
    }
    Ok(4.0 / (3.0 + 4.0 * theta))
}

/// L_q norms of the interface trace's discrete time derivative, for data
/// prepared by component smoothing of order -(1 - theta).
#[derive(Debug, Clone)]
pub struct UtTraceStudy {
    pub theta: f64,
    pub q: f64,
    pub q_sup: f64,
    pub levels: Vec<usize>,
    /// Max over the ensemble of the L_q norms, per level.
    pub max_norms: Vec<f64>,
    pub mean_norms: Vec<f64>,
    /// max(r, 1/r) over consecutive levels of the max norms.
    pub level_ratio: Option<f64>,
}

pub fn ut_trace_study(
    family: &ModelFamily,
    levels: &[usize],
    theta: f64,
    q: f64,
    ensemble: usize,
    seed: u64,
    stepper: Stepper,
) -> Result<UtTraceStudy> {
    let q_sup = admissible_q_sup(theta)?;
    if !(q > 1.0 && q < q_sup) {
        return Err(Error::QRange { q, sup: q_sup });
    }
    if ensemble == 0 {
        return Err(Error::InvalidParameter("ensemble must be nonempty".into()));
    }
    let mut max_norms = Vec::new();
    let mut mean_norms = Vec::new();
    for &level in levels {
        let sys = family.build(level)?;
        let norms: Vec<f64> = (0..ensemble)
            .into_par_iter()
            .map(|i| {
                let rough = random_state(&sys, seed + i as u64)?;
                let y0 = apply_component_fractional_power(&sys, -(1.0 - theta), &rough)?;
                let steps = stepper.steps(sys.horizon)?;
                let g = ControlSignal::zero(sys.control_dim(), sys.horizon, steps);
                let traj = propagate_theta(&sys, &y0, &g, stepper)?;
                // |d/dt trace|_U per interval, midpoint rule in time
                let mut acc = 0.0;
                for k in 0..steps {
                    let tr0 = &sys.trace_map * &traj.states[k];
                    let tr1 = &sys.trace_map * &traj.states[k + 1];
                    let rate = (tr1 - tr0) / stepper.dt;
                    acc += stepper.dt * sys.trace_norm(&rate).powf(q);
                }
                Ok(acc.powf(1.0 / q))
            })
            .collect::<Result<_>>()?;
        let max = norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        max_norms.push(max);
        mean_norms.push(mean);
    }
    let level_ratio = if max_norms.len() >= 2 {
        Some(
            max_norms
                .windows(2)
                .map(|w| {
                    let r = w[1] / w[0].max(1e-300);
                    r.max(1.0 / r.max(1e-300))
                })
                .fold(1.0f64, f64::max),
        )
    } else {
        None
    };
    Ok(UtTraceStudy {
        theta,
        q,
        q_sup,
        levels: levels.to_vec(),
        max_norms,
        mean_norms,
        level_ratio,
    })
}

/// L_p norms of the u2 interface trace across refinement levels, from the
/// deterministic smooth initial profile.
#[derive(Debug, Clone)]
pub struct LpStabilityStudy {
    pub p_list: Vec<f64>,
    pub levels: Vec<usize>,
    /// norms[level index][p index]
    pub norms: Vec<Vec<f64>>,
    /// Largest consecutive symmetric level ratio over all p.
    pub max_ratio: f64,
}

pub fn u2_lp_stability(
    family: &ModelFamily,
    levels: &[usize],
    p_list: &[f64],
    stepper: Stepper,
) -> Result<LpStabilityStudy> {
    if p_list.is_empty() || levels.is_empty() {
        return Err(Error::EmptySeries);
    }
    for &p in p_list {
        if !(p >= 1.0) {
            return Err(Error::InvalidLpExponent(p));
        }
    }
    let mut norms = Vec::new();
    for &level in levels {
        let sys = family.build(level)?;
        let y0 = match family {
            ModelFamily::HeatWave { .. } | ModelFamily::HeatWaveZeroControl { .. } => {
                crate::heatwave::make_initial_state(
                    &sys,
                    crate::heatwave::InitialKind::Smooth,
                    0,
                )?
            }
            ModelFamily::StokesLame { .. } => {
                crate::state_space::smoothed_random_state(&sys, 0, 1.0)?
            }
        };
        let steps = stepper.steps(sys.horizon)?;
        let g = ControlSignal::zero(sys.control_dim(), sys.horizon, steps);
        let traj = propagate_theta(&sys, &y0, &g, stepper)?;
        let dec = decompose_fluid(&sys, &traj)?;
        let series: Vec<f64> = (0..traj.states.len())
            .map(|k| sys.trace_norm(&dec.u2_trace(&sys, k)))
            .collect();
        let level_norms: Vec<f64> = p_list
            .iter()
            .map(|&p| lp_trace_norm(&traj.times, &series, p))
            .collect::<Result<_>>()?;
        norms.push(level_norms);
    }
    let mut max_ratio = 1.0f64;
    for pi in 0..p_list.len() {
        for w in norms.windows(2) {
            let r = w[1][pi] / w[0][pi].max(1e-300);
            max_ratio = max_ratio.max(r.max(1.0 / r.max(1e-300)));
        }
    }
    Ok(LpStabilityStudy {
        p_list: p_list.to_vec(),
        levels: levels.to_vec(),
        norms,
        max_ratio,
    })
}

/// Maximum interface-trace jump of u2 between adjacent time nodes, per dt; a
/// modulus-of-continuity table for the remainder's continuity claim.
pub fn u2_continuity_modulus(
    sys: &SystemOperators,
    y0: &StateVector,
    dts: &[f64],
    theta: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for &dt in dts {
        let stepper = Stepper::new(dt, theta)?;
        let steps = stepper.steps(sys.horizon)?;
        let g = ControlSignal::zero(sys.control_dim(), sys.horizon, steps);
        let traj = propagate_theta(sys, y0, &g, stepper)?;
        let dec = decompose_fluid(sys, &traj)?;
        let mut max_jump = 0.0f64;
        for k in 0..steps {
            let jump =
                sys.trace_norm(&(dec.u2_trace(sys, k + 1) - dec.u2_trace(sys, k)));
            max_jump = max_jump.max(jump);
        }
        rows.push((dt, max_jump));
    }
    Ok(rows)
}

/// Study configuration shared by the experiment runner; invariants are
/// checked here so configs fail early with every offending field reported.
#[derive(Debug, Clone)]
pub struct TraceStudyConfig {
    pub theta: f64,
    pub q: f64,
    pub p_list: Vec<f64>,
    pub ensemble_size: usize,
    pub t_window: (f64, f64),
    pub levels: Vec<usize>,
}

impl TraceStudyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.theta > 0.0 && self.theta < 0.25) {
            issues.push(format!("theta = {} must lie in (0, 1/4)", self.theta));
        } else {
            let sup = 4.0 / (3.0 + 4.0 * self.theta);
            if !(self.q > 1.0 && self.q < sup) {
                issues.push(format!(
                    "q = {} outside the admissible range 1 < q < 4/(3+4*theta) = {:.6}",
                    self.q, sup
                ));
            }
        }
        for &p in &self.p_list {
            if !(p >= 1.0) {
                issues.push(format!("L_p exponent {p} must be at least 1"));
            }
        }
        if self.ensemble_size == 0 {
            issues.push("ensemble_size must be positive".into());
        }
        if !(self.t_window.0 > 0.0 && self.t_window.1 > self.t_window.0) {
            issues.push(format!(
                "t_window ({}, {}) must be increasing and positive",
                self.t_window.0, self.t_window.1
            ));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            issues.push("levels must be nonempty and strictly increasing".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { issues })
        }
    }
}
