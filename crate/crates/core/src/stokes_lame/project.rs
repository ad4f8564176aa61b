//! Pressure elimination: an orthonormal basis of the discretely
//! divergence-free velocity subspace turns the saddle system into the
//! reduced coupled ODE used by the Riccati and oracle layers.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::{
    sym_psd_sqrt, FluidEvolution, IndexMap, SmoothingBlock, SystemOperators,
};
use crate::stokes_lame::assemble::SaddleSystem;

/// Rank cutoff relative to the largest diagonal of the pivoted R factor.
const RANK_TOL: f64 = 1e-10;

/// The reduced system together with the lifting basis.
#[derive(Debug)]
pub struct SolenoidalReduction {
    pub sys: SystemOperators,
    /// Orthonormal columns spanning the divergence-free velocity subspace;
    /// lifts reduced velocity coordinates back to physical DOFs.
    pub basis: DMatrix<f64>,
    /// Rank of the divergence matrix.
    pub rank: usize,
    /// Fluid-only solenoidal basis (columns indexed by fluid DOFs).
    pub fluid_basis: DMatrix<f64>,
}

impl SolenoidalReduction {
    /// Lifts a reduced state's velocity coordinates to the physical
    /// free-velocity vector.
    pub fn lift_velocity(&self, state: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let nz = self.basis.ncols();
        &self.basis * state.rows(0, nz)
    }
}

/// Orthonormal basis of null(D) via column-pivoted QR of D' and of the
/// complementary projector; `min_rank` guards against defective meshes.
fn null_space_basis(d: &DMatrix<f64>, min_rank: usize) -> Result<(DMatrix<f64>, usize)> {
    let n = d.ncols();
    let qr = d.transpose().col_piv_qr();
    let r = qr.r();
    let rmax = (0..r.nrows().min(r.ncols()))
        .map(|i| r[(i, i)].abs())
        .fold(0.0f64, f64::max);
    let rank = (0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > RANK_TOL * rmax.max(1e-300))
        .count();
    if rank < min_rank {
        return Err(Error::RankDeficient {
            rank,
            expected: min_rank,
        });
    }
    let q = qr.q();
    let q_range = q.columns(0, rank).into_owned();
    // orthonormal basis of the complement via QR of I - Q Q'
    let mut proj = DMatrix::identity(n, n);
    proj -= &q_range * q_range.transpose();
    let qr2 = proj.col_piv_qr();
    let z = qr2.q().columns(0, n - rank).into_owned();
    // one re-orthogonalization pass against the range
    let z = &z - &q_range * (q_range.transpose() * &z);
    let z = z.qr().q();
    Ok((z, rank))
}

/// Builds the reduced first-order system on (solenoidal velocity
/// coefficients, solid displacement).
pub fn project_solenoidal(saddle: &SaddleSystem) -> Result<SolenoidalReduction> {
    project_solenoidal_with_horizon(saddle, 1.0)
}

/// [`project_solenoidal`] with an explicit control horizon.
pub fn project_solenoidal_with_horizon(
    saddle: &SaddleSystem,
    horizon: f64,
) -> Result<SolenoidalReduction> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let n_p = saddle.n_pressure();
    // full rank expected up to the constant-pressure mode
    let (basis, rank) = null_space_basis(&saddle.divergence, n_p.saturating_sub(1))?;
    let nz = basis.ncols();
    let n_w = saddle.n_displacement();
    let n = nz + n_w;

    let m_vel = &saddle.fluid_mass + &saddle.solid_vel_mass;
    let m_hat = basis.transpose() * &m_vel * &basis;
    let m_hat = 0.5 * (&m_hat + m_hat.transpose());
    let k_hat = basis.transpose() * &saddle.fluid_stiffness * &basis;
    let k_hat = 0.5 * (&k_hat + k_hat.transpose());
    let s_z = &saddle.coupling * &basis; // n_w x nz
    let b_hat = basis.transpose() * &saddle.control_load;
    let trace_z = &saddle.trace * &basis;

    let mut mass = DMatrix::zeros(n, n);
    mass.view_mut((0, 0), (nz, nz)).copy_from(&m_hat);
    mass.view_mut((nz, nz), (n_w, n_w)).copy_from(&saddle.solid_mass);

    let mut generator = DMatrix::zeros(n, n);
    generator.view_mut((0, 0), (nz, nz)).copy_from(&(-&k_hat));
    generator
        .view_mut((0, nz), (nz, n_w))
        .copy_from(&(-(s_z.transpose() * &saddle.solid_stiffness)));
    generator
        .view_mut((nz, 0), (n_w, nz))
        .copy_from(&(&saddle.solid_mass * &s_z));

    let mut control = DMatrix::zeros(n, saddle.n_trace());
    control.view_mut((0, 0), (nz, saddle.n_trace())).copy_from(&b_hat);

    let mut trace_map = DMatrix::zeros(saddle.n_trace(), n);
    trace_map
        .view_mut((0, 0), (saddle.n_trace(), nz))
        .copy_from(&trace_z);

    let mut energy = DMatrix::zeros(n, n);
    energy.view_mut((0, 0), (nz, nz)).copy_from(&m_hat);
    energy
        .view_mut((nz, nz), (n_w, n_w))
        .copy_from(&saddle.solid_stiffness);

    let mut state_norm = energy.clone();
    {
        let mut w_block = state_norm.view_mut((nz, nz), (n_w, n_w));
        w_block += &saddle.solid_mass;
    }

    let observation = sym_psd_sqrt(&(0.5 * &energy));

    // fluid-only evolution: restrict to fluid DOFs, project out pressure
    let fd = &saddle.dof_maps.fluid_dofs;
    let nf = fd.len();
    let mut d_f = DMatrix::zeros(n_p, nf);
    for (j, &dj) in fd.iter().enumerate() {
        for i in 0..n_p {
            d_f[(i, j)] = saddle.divergence[(i, dj)];
        }
    }
    let (fluid_basis, _) = null_space_basis(&d_f, n_p.saturating_sub(1))?;
    let nzf = fluid_basis.ncols();
    let mut m_ff = DMatrix::zeros(nf, nf);
    let mut k_ff = DMatrix::zeros(nf, nf);
    for (i, &di) in fd.iter().enumerate() {
        for (j, &dj) in fd.iter().enumerate() {
            m_ff[(i, j)] = saddle.fluid_mass[(di, dj)];
            k_ff[(i, j)] = saddle.fluid_stiffness[(di, dj)];
        }
    }
    let fluid_mass_red = fluid_basis.transpose() * &m_ff * &fluid_basis;
    let fluid_mass_red = 0.5 * (&fluid_mass_red + fluid_mass_red.transpose());
    let fluid_stiff_red = fluid_basis.transpose() * &k_ff * &fluid_basis;
    let fluid_stiff_red = 0.5 * (&fluid_stiff_red + fluid_stiff_red.transpose());
    // state -> fluid-block coordinates: Z_f' R_f Z zeta
    let mut restrict = DMatrix::zeros(nf, basis.nrows());
    for (i, &di) in fd.iter().enumerate() {
        restrict[(i, di)] = 1.0;
    }
    let mut from_state = DMatrix::zeros(nzf, n);
    from_state
        .view_mut((0, 0), (nzf, nz))
        .copy_from(&(fluid_basis.transpose() * &restrict * &basis));
    let mut trace_f = DMatrix::zeros(saddle.n_trace(), nf);
    for (j, &dj) in fd.iter().enumerate() {
        for i in 0..saddle.n_trace() {
            trace_f[(i, j)] = saddle.trace[(i, dj)];
        }
    }
    let fluid_trace = &trace_f * &fluid_basis;

    // smoothing blocks: viscous form on the fluid glued with identity-in-mass
    // on the solid velocities; elastic/mass pair on the displacement
    let k_vel_blend = {
        let blend = &saddle.fluid_stiffness + &saddle.solid_vel_mass;
        let b = basis.transpose() * blend * &basis;
        0.5 * (&b + b.transpose())
    };
    let smoothing_blocks = vec![
        SmoothingBlock {
            range: 0..nz,
            pair: Some((k_vel_blend, m_hat.clone())),
        },
        SmoothingBlock {
            range: nz..n,
            pair: Some((saddle.solid_stiffness.clone(), saddle.solid_mass.clone())),
        },
    ];

    let sys = SystemOperators {
        mass,
        generator,
        control,
        trace_map,
        observation,
        index_map: IndexMap {
            fluid: 0..nz,
            solid_disp: nz..n,
            solid_vel: n..n,
        },
        level: saddle.resolution,
        horizon,
        energy_form: energy,
        state_norm_form: state_norm,
        boundary_mass: saddle.boundary_mass.clone(),
        fluid: FluidEvolution {
            mass: fluid_mass_red,
            stiffness: fluid_stiff_red,
            from_state,
            trace: fluid_trace,
        },
        smoothing_blocks,
        fluid_h: saddle.mesh_h,
        block_eigen: OnceLock::new(),
    };

    Ok(SolenoidalReduction {
        sys,
        basis,
        rank,
        fluid_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes_lame::assemble::{assemble_saddle, MaterialParams};
    use crate::stokes_lame::mesh::generate_annulus_mesh;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn reduced() -> (SaddleSystem, SolenoidalReduction) {
        let mesh = generate_annulus_mesh(8).unwrap();
        let saddle = assemble_saddle(&mesh, &MaterialParams::default()).unwrap();
        let red = project_solenoidal(&saddle).unwrap();
        (saddle, red)
    }

    #[test]
    fn basis_annihilates_divergence_columnwise() {
        let (saddle, red) = reduced();
        let dz = &saddle.divergence * &red.basis;
        for j in 0..dz.ncols() {
            let col_max = dz.column(j).amax();
            assert!(col_max <= 1e-12, "column {j}: |D z| = {col_max:.3e}");
        }
    }

    #[test]
    fn nullity_matches_rank_deficiency() {
        let (saddle, red) = reduced();
        assert_eq!(
            red.basis.ncols(),
            saddle.n_velocity() - red.rank,
            "rank-nullity"
        );
    }

    /// The reduction preserves the energy form: lifted and reduced quadratic
    /// forms agree on random states.
    #[test]
    fn lifted_energy_equals_reduced_energy() {
        let (saddle, red) = reduced();
        let n = red.sys.dim();
        let nz = red.basis.ncols();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m_vel = &saddle.fluid_mass + &saddle.solid_vel_mass;
        for _ in 0..10 {
            let y = nalgebra::DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
            let reduced_energy = red.sys.energy(&y);
            let v = red.lift_velocity(&y);
            let w = y.rows(nz, n - nz).into_owned();
            let full = 0.5
                * ((v.transpose() * &m_vel * &v)[(0, 0)]
                    + (w.transpose() * &saddle.solid_stiffness * &w)[(0, 0)]);
            let denom = reduced_energy.abs().max(1e-30);
            assert!(
                (reduced_energy - full).abs() / denom <= 1e-12,
                "energy mismatch: {reduced_energy} vs {full}"
            );
        }
    }

    #[test]
    fn reduced_mass_is_positive_definite() {
        let (_, red) = reduced();
        assert!(nalgebra::linalg::Cholesky::new(red.sys.mass.clone()).is_some());
    }

    #[test]
    fn adjoint_trace_identity_holds_in_reduced_coordinates() {
        let (_, red) = reduced();
        let sys = &red.sys;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let y = nalgebra::DVector::from_fn(sys.dim(), |_, _| rng.gen::<f64>() - 0.5);
            let g = nalgebra::DVector::from_fn(sys.control_dim(), |_, _| {
                rng.gen::<f64>() - 0.5
            });
            let lhs = (g.transpose() * (sys.control.transpose() * &y))[(0, 0)];
            let tr = &sys.trace_map * &y;
            let rhs = (g.transpose() * &sys.boundary_mass * tr)[(0, 0)];
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn uncontrolled_energy_decays_under_implicit_euler() {
        use crate::state_space::{propagate_theta, ControlSignal, Stepper};
        let (_, red) = reduced();
        let sys = &red.sys;
        let y0 = crate::state_space::random_state(sys, 2).unwrap();
        let steps = 50;
        let g = ControlSignal::zero(sys.control_dim(), sys.horizon, steps);
        let traj = propagate_theta(
            sys,
            &y0,
            &g,
            Stepper::new(sys.horizon / steps as f64, 1.0).unwrap(),
        )
        .unwrap();
        let mut prev = sys.energy(&traj.states[0]);
        for y in &traj.states[1..] {
            let e = sys.energy(y);
            assert!(e <= prev * (1.0 + 1e-12) + 1e-15);
            prev = e;
        }
    }

    /// Divergence residual of the lifted fluid velocity stays at roundoff
    /// along simulated trajectories.
    #[test]
    fn divergence_residual_stays_small_along_trajectories() {
        use crate::state_space::{propagate_theta, ControlSignal, Stepper};
        let (saddle, red) = reduced();
        let sys = &red.sys;
        let y0 = crate::state_space::smoothed_random_state(sys, 9, 0.5).unwrap();
        let steps = 40;
        let mut g = ControlSignal::zero(sys.control_dim(), sys.horizon, steps);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for v in g.values.iter_mut() {
            for i in 0..v.len() {
                v[i] = rng.gen::<f64>() - 0.5;
            }
        }
        let traj = propagate_theta(
            sys,
            &y0,
            &g,
            Stepper::new(sys.horizon / steps as f64, 1.0).unwrap(),
        )
        .unwrap();
        let dz = &saddle.divergence * &red.basis;
        for y in &traj.states {
            let nz = red.basis.ncols();
            let resid = (&dz * y.rows(0, nz)).amax();
            assert!(resid <= 1e-10, "divergence residual {resid:.3e}");
        }
    }
}
