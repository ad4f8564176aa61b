//! Discrete coupled-system operators shared by both models.
//!
//! A model assembly produces the first-order form
//!
//! ```text
//!     M y' = A y + B g,        y = (u, w, w_t),
//! ```
//!
//! together with the interface trace map, the energy quadratic form, and the
//! per-component stiffness/mass pairs used for fractional smoothing. All
//! matrices are dense; the toolkit targets desk-scale reduced dimensions.

use std::ops::Range;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State vectors are plain coordinate vectors, partitioned per [`IndexMap`].
pub type StateVector = DVector<f64>;

/// Block ranges of the state vector for the (u, w, w_t) components.
///
/// The interface velocity degree of freedom lives in the fluid block; the
/// `solid_vel` block holds only the interior solid velocities. In the reduced
/// 2D system the velocity coefficients carry fluid and solid velocity jointly,
/// and `solid_vel` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    pub fluid: Range<usize>,
    pub solid_disp: Range<usize>,
    pub solid_vel: Range<usize>,
}

impl IndexMap {
    pub fn total(&self) -> usize {
        self.fluid.len() + self.solid_disp.len() + self.solid_vel.len()
    }
}

/// Free evolution of the fluid block alone (zero interface load), used for
/// the u = u1 + u2 splitting and the singular-estimate studies.
#[derive(Debug, Clone)]
pub struct FluidEvolution {
    /// Fluid mass matrix in fluid-block coordinates.
    pub mass: DMatrix<f64>,
    /// Assembled viscous stiffness in fluid-block coordinates.
    pub stiffness: DMatrix<f64>,
    /// Extracts fluid-block coordinates from a full state.
    pub from_state: DMatrix<f64>,
    /// Interface trace of a fluid-block vector.
    pub trace: DMatrix<f64>,
}

/// One component block for the fractional functional calculus.
///
/// `pair = None` marks an identity block (the solid velocity component, whose
/// stiffness/mass pair is the mass itself).
#[derive(Debug, Clone)]
pub struct SmoothingBlock {
    pub range: Range<usize>,
    pub pair: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

pub(crate) struct BlockEigen {
    pub range: Range<usize>,
    /// None: identity block.
    pub basis: Option<BlockBasis>,
}

pub(crate) struct BlockBasis {
    pub eigenvalues: DVector<f64>,
    /// Columns are mass-orthonormal generalized eigenvectors.
    pub vectors: DMatrix<f64>,
    /// Inverse coordinate map (Q' L' with mass = L L').
    pub inverse: DMatrix<f64>,
}

/// The discrete (A, B, R) system of one model at one refinement level.
pub struct SystemOperators {
    /// Mass matrix M, symmetric positive definite.
    pub mass: DMatrix<f64>,
    /// Generator A of the first-order form M y' = A y + B g.
    pub generator: DMatrix<f64>,
    /// Control injection B, one column per interface control coordinate.
    pub control: DMatrix<f64>,
    /// Interface trace extractor: fluid velocity values on the interface.
    pub trace_map: DMatrix<f64>,
    /// Observation matrix R of the full-energy functional: |R y|^2 = energy.
    pub observation: DMatrix<f64>,
    pub index_map: IndexMap,
    /// Refinement tag (interval count in 1D, grid resolution in 2D).
    pub level: usize,
    /// Horizon T of the control problem.
    pub horizon: f64,
    /// Energy quadratic form E: y' E y = |u|^2 + (sigma(w), eps(w)) + |w_t|^2.
    pub energy_form: DMatrix<f64>,
    /// SPD norm used for operator-norm diagnostics: energy form completed by
    /// the solid L2 mass (the discrete analogue of fluid-L2 x H1 x L2).
    pub state_norm_form: DMatrix<f64>,
    /// Interface boundary mass (control-space inner product).
    pub boundary_mass: DMatrix<f64>,
    pub fluid: FluidEvolution,
    pub smoothing_blocks: Vec<SmoothingBlock>,
    /// Fluid mesh size, the cutoff scale for trace-decay fits.
    pub fluid_h: f64,
    pub(crate) block_eigen: OnceLock<Vec<BlockEigen>>,
}

impl SystemOperators {
    /// State dimension.
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Control dimension.
    pub fn control_dim(&self) -> usize {
        self.control.ncols()
    }

    pub fn assert_state(&self, y: &StateVector, what: &'static str) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dim(),
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Energy E(y) = 1/2 y' E y.
    pub fn energy(&self, y: &StateVector) -> f64 {
        0.5 * (y.transpose() * &self.energy_form * y)[(0, 0)]
    }

    /// Energy norm, the square root of the full quadratic form y' E y.
    pub fn energy_norm(&self, y: &StateVector) -> f64 {
        (y.transpose() * &self.energy_form * y)[(0, 0)].max(0.0).sqrt()
    }

    /// L2(Gamma_s) norm of an interface trace vector.
    pub fn trace_norm(&self, tr: &DVector<f64>) -> f64 {
        (tr.transpose() * &self.boundary_mass * tr)[(0, 0)].max(0.0).sqrt()
    }
}

impl std::fmt::Debug for SystemOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemOperators")
            .field("dim", &self.dim())
            .field("control_dim", &self.control_dim())
            .field("level", &self.level)
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// Symmetric PSD square root via a symmetric eigen-decomposition; eigenvalues
/// below roundoff are clamped to zero.
pub(crate) fn sym_psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (m + m.transpose());
    let eig = nalgebra::linalg::SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let floor = lmax * 1e-14;
    let sqrt_vals =
        DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| {
            if l > floor {
                l.sqrt()
            } else {
                0.0
            }
        }));
    let q = eig.eigenvectors;
    &q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose()
}

/// Generalized symmetric eigen-decomposition of K v = lambda M v.
///
/// Returns mass-orthonormal eigenvectors X (columns) and the inverse map
/// X^{-1} = Q' L' so that X diag(f(lambda)) X^{-1} applies functional calculus.
pub(crate) fn generalized_sym_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<BlockBasis> {
    let chol = nalgebra::linalg::Cholesky::new(m.clone())
        .ok_or(Error::Factorization("mass block is not positive definite"))?;
    let l = chol.l();
    let a1 = l
        .solve_lower_triangular(k)
        .ok_or(Error::Factorization("singular Cholesky factor"))?;
    let a2 = l
        .solve_lower_triangular(&a1.transpose())
        .ok_or(Error::Factorization("singular Cholesky factor"))?;
    let s = 0.5 * (&a2 + a2.transpose());
    let eig = nalgebra::linalg::SymmetricEigen::new(s);
    let lt = l.transpose();
    let x = lt
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or(Error::Factorization("singular Cholesky factor"))?;
    let inverse = eig.eigenvectors.transpose() * lt;
    Ok(BlockBasis {
        eigenvalues: eig.eigenvalues,
        vectors: x,
        inverse,
    })
}
