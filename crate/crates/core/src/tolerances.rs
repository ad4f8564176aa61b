//! Pinned tolerances and thresholds used by the acceptance suite and the
//! experiment assertions. Every numeric gate lives here, not inline.

/// Scalar Riccati closed form: max |P(t) - tanh(1-t)| at dt = 1e-3.
pub const SCALAR_DRE_MAX_ERR: f64 = 1e-6;

/// Relative cost agreement between feedback synthesis, Riccati prediction,
/// and the conjugate-gradient oracle.
pub const COST_REL_TOL: f64 = 1e-3;

/// Relative L2(0,T;U) distance between the feedback control and the oracle
/// minimizer.
pub const FEEDBACK_REL_TOL: f64 = 5e-2;

/// Riccati positivity floor: lambda_min(P) >= -PSD_FLOOR * |P|.
pub const PSD_FLOOR: f64 = 1e-8;

/// Adjoint gradient vs central finite differences, relative per direction.
pub const GRADIENT_FD_REL_TOL: f64 = 1e-5;

/// Fitted singular-estimate exponent band around 1/4 + delta.
pub const SINGULAR_EXPONENT_BAND: (f64, f64) = (0.15, 0.35);

/// Minimum fit quality of the singular-estimate regression.
pub const SINGULAR_FIT_R2_MIN: f64 = 0.9;

/// L_p trace norms across refinement levels: largest consecutive level ratio.
pub const LP_LEVEL_RATIO_MAX: f64 = 1.2;

/// u_t trace L_q norms across two levels: largest level ratio.
pub const UT_LEVEL_RATIO_MAX: f64 = 1.5;

/// Smoothed gain norms: largest consecutive refinement ratio.
pub const GAIN_SMOOTHED_RATIO_MAX: f64 = 1.05;

/// 2D divergence residual of the lifted fluid velocity, max norm per step.
pub const DIVERGENCE_RESIDUAL_MAX: f64 = 1e-10;

/// Discrete adjoint trace identity |g'(B'y) - <g, Tr y>|.
pub const ADJOINT_IDENTITY_TOL: f64 = 1e-12;

/// Energy increase slack per step for the uncontrolled implicit-Euler flow
/// (relative to the current energy; roundoff headroom only).
pub const ENERGY_DECAY_SLACK: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_and_gates_are_consistent() {
        assert!(SINGULAR_EXPONENT_BAND.0 < 0.25 && 0.25 < SINGULAR_EXPONENT_BAND.1);
        assert!(COST_REL_TOL < FEEDBACK_REL_TOL);
        assert!(ADJOINT_IDENTITY_TOL < DIVERGENCE_RESIDUAL_MAX);
        assert!(LP_LEVEL_RATIO_MAX < UT_LEVEL_RATIO_MAX);
    }
}
