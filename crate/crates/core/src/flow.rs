//! Momentum transport via a velocity-correction projection method.
//!
//! Each step solves an intermediate velocity ignoring pressure, a
//! variable-coefficient pressure Poisson system with the constant null space
//! removed, and applies the nodal correction v = u* + (1/rho) grad p.
//!
//! The pressure operator is assembled as the exact composition of the
//! central divergence with the central gradient used by the correction, so
//! the discrete divergence of the corrected field telescopes to the linear
//! solve residual at every interior node.

use crate::comm::Communicator;
use crate::error::StepError;
use crate::linsolve::{
    gmres_solve_with_guess, SolveReport, SolverConfig, Stencil, StencilMatrix,
};
use crate::mesh::{Field, GhostPolicy, Subdomain};
use crate::operators::{
    convective_derivative, div_coeff_grad, phase_stress_div, transpose_stress_div, VectorField,
};
use crate::transport::PhiHistory;

/// How the variable viscosity is split between the implicit operator and the
/// explicit forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscositySplit {
    /// Volume-fraction averaged viscosity inside the implicit operator
    /// (robust at the large network/solvent viscosity contrast; default).
    LocalImplicit,
    /// Constant pure-solvent reference viscosity implicit; the spatial excess
    /// goes into the explicit forcing. Only advisable for mild contrasts.
    ReferenceExplicit,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    /// Solvent and network Reynolds numbers.
    pub re_s: f64,
    pub re_n: f64,
    /// Phase-stress strength, shared with the Cahn-Hilliard energy.
    pub gamma1: f64,
    /// Densities relative to the reference density.
    pub rho_n_ratio: f64,
    pub rho_s_ratio: f64,
    /// Velocity of the top wall.
    pub lid: (f64, f64),
    /// Velocity of the bottom wall (zero for the no-slip substratum).
    pub base: (f64, f64),
    /// Include the phase/viscous forcing term in the intermediate solve.
    pub include_forcing: bool,
    pub viscosity: ViscositySplit,
    /// Ceiling on the effective dimensionless viscosity used by the stress
    /// terms. The network value 1/Re_n can sit many decades above the
    /// solvent value; far beyond the rigid limit the extra decades change
    /// nothing physically but wreck the Jacobi-preconditioned conditioning.
    /// Infinite disables the cap.
    pub nu_max: f64,
    /// Keep the explicit transposed-gradient part of the viscous stress.
    /// It vanishes identically for uniform viscosity (incompressibility);
    /// at large viscosity contrast its explicit treatment couples back into
    /// the velocity with order-one gain and destabilizes the stepping, so it
    /// is off by default.
    pub transpose_stress: bool,
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.re_s > 0.0) || !(self.re_n > 0.0) {
            return Err("Reynolds numbers must be positive".into());
        }
        if !(self.rho_n_ratio > 0.0) || !(self.rho_s_ratio > 0.0) {
            return Err("density ratios must be positive".into());
        }
        Ok(())
    }

    /// Pure-solvent reference 1/Re_a, used by the ReferenceExplicit split.
    pub fn re_a_ref(&self) -> f64 {
        self.re_s
    }
}

/// Complete flow state at one time level. The stored pressure-like variable
/// absorbs the time step: physical pressure is recovered as p/dt.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub v: VectorField,
    pub v_prev: VectorField,
    pub u_star: VectorField,
    pub p: Field,
}

/// Velocity component field: ghost width 1, Dirichlet walls.
pub fn velocity_field(sub: Subdomain, bottom: f64, top: f64) -> Field {
    Field::new(sub, 1, GhostPolicy::Dirichlet(bottom), GhostPolicy::Dirichlet(top))
}

/// Pressure field: ghost width 2 (the composed operator reaches two nodes in
/// x across the periodic seam), mirror walls for the homogeneous Neumann
/// condition.
pub fn pressure_field(sub: Subdomain) -> Field {
    Field::new(sub, 2, GhostPolicy::EvenMirror, GhostPolicy::EvenMirror)
}

impl FlowState {
    /// Quiescent state with the wall velocities applied.
    pub fn quiescent(sub: Subdomain, fp: &FlowParams, comm: &Communicator) -> FlowState {
        let mut u = velocity_field(sub, fp.base.0, fp.lid.0);
        let mut v = velocity_field(sub, fp.base.1, fp.lid.1);
        u.refresh(comm).expect("velocity init");
        v.refresh(comm).expect("velocity init");
        let vf = VectorField::new(u, v);
        FlowState {
            v_prev: vf.clone(),
            u_star: vf.clone(),
            v: vf,
            p: pressure_field(sub),
        }
    }

    /// Extrapolated velocity (3 v^n - v^{n-1})/2 with refreshed ghosts.
    pub fn extrapolate(&self, comm: &Communicator) -> VectorField {
        let mut u = self.v.u.clone();
        let mut v = self.v.v.clone();
        let w = u.ghost_width() as isize;
        let onx = u.sub.owned_nx() as isize;
        let ony = u.sub.owned_ny() as isize;
        for j in -w..ony + w {
            for i in -w..onx + w {
                u.set(i, j, 1.5 * self.v.u.at(i, j) - 0.5 * self.v_prev.u.at(i, j));
                v.set(i, j, 1.5 * self.v.v.at(i, j) - 0.5 * self.v_prev.v.at(i, j));
            }
        }
        u.refresh(comm).expect("velocity extrapolation");
        v.refresh(comm).expect("velocity extrapolation");
        VectorField::new(u, v)
    }
}

/// Volume-fraction averaged density rho~ = phi_n rho_n + phi_s rho_s over
/// owned nodes and the ghost ring. Collective (refreshes its ghosts).
pub fn averaged_density(phi: &Field, fp: &FlowParams, comm: &Communicator) -> Field {
    let mut rho = crate::transport::nutrient_field(phi.sub);
    fill_from_phi(&mut rho, phi, |f| {
        f * fp.rho_n_ratio + (1.0 - f) * fp.rho_s_ratio
    });
    rho.refresh(comm).expect("density ghosts");
    rho
}

/// Pointwise averaged inverse Reynolds number 1/Re_a = phi_n/Re_n +
/// phi_s/Re_s; this is the dimensionless viscosity in front of 2D.
/// The volume fraction is clamped to [0, 1] here: extrapolation overshoot
/// outside the physical range would otherwise produce a negative viscosity
/// (the network term dominates by many decades) and an indefinite operator.
pub fn averaged_inverse_reynolds(phi: &Field, fp: &FlowParams, comm: &Communicator) -> Field {
    let mut nu = crate::transport::nutrient_field(phi.sub);
    fill_from_phi(&mut nu, phi, |f| {
        let f = f.clamp(0.0, 1.0);
        f / fp.re_n + (1.0 - f) / fp.re_s
    });
    nu.refresh(comm).expect("viscosity ghosts");
    nu
}

fn fill_from_phi(out: &mut Field, phi: &Field, f: impl Fn(f64) -> f64) {
    let onx = out.sub.owned_nx() as isize;
    let ony = out.sub.owned_ny() as isize;
    for j in 0..ony {
        for i in 0..onx {
            out.set(i, j, f(phi.at(i, j)));
        }
    }
}

/// Forcing term of the reformulated momentum equation:
/// R = -div(gamma1 grad phi (x) grad phi)
///     + div(2 [1/Re_a(x) - 1/re_a_ref] D).
/// The viscous excess is evaluated as the conservative principal part plus
/// the transposed-gradient remainder so all reads stay within one ghost ring.
pub fn assemble_r(
    phi: &Field,
    v: &VectorField,
    fp: &FlowParams,
    re_a_ref: f64,
    comm: &Communicator,
) -> (Field, Field) {
    let nu_a = averaged_inverse_reynolds(phi, fp, comm);
    let mut excess = nu_a.clone();
    excess.map_owned(|x| x - 1.0 / re_a_ref);
    excess.refresh(comm).expect("excess viscosity ghosts");
    viscous_plus_phase(phi, v, &excess, fp.gamma1)
}

/// Shared kernel: -phase stress divergence + div(nu_ex (grad v + grad v^T)).
fn viscous_plus_phase(
    phi: &Field,
    v: &VectorField,
    nu_ex: &Field,
    gamma1: f64,
) -> (Field, Field) {
    let (psx, psy) = phase_stress_div(phi, gamma1);
    let px = div_coeff_grad(nu_ex, &v.u);
    let py = div_coeff_grad(nu_ex, &v.v);
    let (tx, ty) = transpose_stress_div(nu_ex, v);
    let sub = phi.sub;
    let mut rx = Field::scratch(sub);
    let mut ry = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            rx.set(i, j, -psx.at(i, j) + px.at(i, j) + tx.at(i, j));
            ry.set(i, j, -psy.at(i, j) + py.at(i, j) + ty.at(i, j));
        }
    }
    (rx, ry)
}

/// Momentum operator rows: identity on wall rows, otherwise
/// (1/dt) I - theta (1/rho) div(nu grad .) with conservative faces.
fn momentum_rows(
    sub: Subdomain,
    nu: &Field,
    rho: &Field,
    dt: f64,
    theta: f64,
    identity_walls: bool,
) -> Vec<((usize, usize), Vec<Stencil>)> {
    let g = sub.grid;
    let ny = g.ny();
    let rx2 = 1.0 / (g.dx() * g.dx());
    let ry2 = 1.0 / (g.dy() * g.dy());
    let mut rows = Vec::with_capacity(sub.owned_nodes());
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let gi = sub.ix_lo + i as usize;
            if gj == 0 || gj == ny - 1 {
                let e = if identity_walls {
                    vec![Stencil::new(0, 0, 1.0)]
                } else {
                    vec![Stencil::new(0, 0, 0.0)]
                };
                rows.push(((gi, gj), e));
                continue;
            }
            let ir = 1.0 / rho.at(i, j);
            let nxp = 0.5 * (nu.at(i, j) + nu.at(i + 1, j)) * rx2;
            let nxm = 0.5 * (nu.at(i, j) + nu.at(i - 1, j)) * rx2;
            let nyp = 0.5 * (nu.at(i, j) + nu.at(i, j + 1)) * ry2;
            let nym = 0.5 * (nu.at(i, j) + nu.at(i, j - 1)) * ry2;
            let s = theta * ir;
            let mut e = vec![Stencil::new(0, 0, 1.0 / dt + s * (nxp + nxm + nyp + nym))];
            e.push(Stencil::new(1, 0, -s * nxp));
            e.push(Stencil::new(-1, 0, -s * nxm));
            e.push(Stencil::new(0, 1, -s * nyp));
            e.push(Stencil::new(0, -1, -s * nym));
            rows.push(((gi, gj), e));
        }
    }
    rows
}

/// Explicit viscous application (1/rho) div(nu grad f) at interior rows.
fn viscous_apply(nu: &Field, rho: &Field, f: &Field) -> Field {
    let sub = f.sub;
    let g = sub.grid;
    let ny = g.ny();
    let rx2 = 1.0 / (g.dx() * g.dx());
    let ry2 = 1.0 / (g.dy() * g.dy());
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        if gj == 0 || gj == ny - 1 {
            continue;
        }
        for i in 0..sub.owned_nx() as isize {
            let nxp = 0.5 * (nu.at(i, j) + nu.at(i + 1, j)) * rx2;
            let nxm = 0.5 * (nu.at(i, j) + nu.at(i - 1, j)) * rx2;
            let nyp = 0.5 * (nu.at(i, j) + nu.at(i, j + 1)) * ry2;
            let nym = 0.5 * (nu.at(i, j) + nu.at(i, j - 1)) * ry2;
            let acc = nxp * (f.at(i + 1, j) - f.at(i, j)) - nxm * (f.at(i, j) - f.at(i - 1, j))
                + nyp * (f.at(i, j + 1) - f.at(i, j))
                - nym * (f.at(i, j) - f.at(i, j - 1));
            out.set(i, j, acc / rho.at(i, j));
        }
    }
    out
}

pub struct IntermediateReports {
    pub u: SolveReport,
    pub v: SolveReport,
}

/// Solve the intermediate-velocity systems, one per component:
/// (u - v^n)/dt = -[(v.grad)v]* + (1/rho*) div(nu grad u^{theta}) + R*/rho*,
/// with Dirichlet rows pinning the walls. Collective.
#[allow(clippy::too_many_arguments)]
pub fn intermediate_velocity(
    state: &FlowState,
    nu: &Field,
    rho_star: &Field,
    forcing: Option<&(Field, Field)>,
    fp: &FlowParams,
    dt: f64,
    theta: f64,
    solver: &SolverConfig,
    comm: &Communicator,
) -> Result<(VectorField, IntermediateReports), StepError> {
    let sub = state.v.u.sub;
    let ny = sub.grid.ny();
    let rows = momentum_rows(sub, nu, rho_star, dt, theta, true);
    let a = StencilMatrix::assemble(sub, 1, rows).map_err(|e| StepError::Domain(e.to_string()))?;

    let vstar = state.extrapolate(comm);
    let (conv_u, conv_v) = convective_derivative(&vstar);
    let visc_u = viscous_apply(nu, rho_star, &state.v.u);
    let visc_v = viscous_apply(nu, rho_star, &state.v.v);

    let solve_component = |vn: &Field,
                               vp: &Field,
                               us_prev: &Field,
                               conv: &Field,
                               visc: &Field,
                               force: Option<&Field>,
                               wall_bottom: f64,
                               wall_top: f64|
     -> Result<(Field, SolveReport), StepError> {
        let mut b = vn.clone();
        for j in 0..sub.owned_ny() as isize {
            let gj = sub.jy_lo + j as usize;
            for i in 0..sub.owned_nx() as isize {
                let rhs = if gj == 0 {
                    wall_bottom
                } else if gj == ny - 1 {
                    wall_top
                } else {
                    let mut r = vn.at(i, j) / dt - conv.at(i, j) + (1.0 - theta) * visc.at(i, j);
                    if let Some(f) = force {
                        r += f.at(i, j) / rho_star.at(i, j);
                    }
                    r
                };
                b.set(i, j, rhs);
            }
        }
        // warm start: the previous intermediate velocity tracks the standing
        // forced structure, the v increment tracks the drift
        let mut guess = vn.clone();
        for j in 0..sub.owned_ny() as isize {
            for i in 0..sub.owned_nx() as isize {
                guess.set(i, j, us_prev.at(i, j) + vn.at(i, j) - vp.at(i, j));
            }
        }
        let (x, report) = gmres_solve_with_guess(&a, &b, &guess, solver, comm)?;
        if !report.converged {
            return Err(StepError::NotConverged {
                system: "momentum",
                iterations: report.iterations,
                residual: report.residual,
            });
        }
        Ok((x, report))
    };

    let (mut u_star, rep_u) = solve_component(
        &state.v.u,
        &state.v_prev.u,
        &state.u_star.u,
        &conv_u,
        &visc_u,
        forcing.map(|f| &f.0),
        fp.base.0,
        fp.lid.0,
    )?;
    let (mut v_star, rep_v) = solve_component(
        &state.v.v,
        &state.v_prev.v,
        &state.u_star.v,
        &conv_v,
        &visc_v,
        forcing.map(|f| &f.1),
        fp.base.1,
        fp.lid.1,
    )?;
    u_star
        .refresh(comm)
        .map_err(|e| StepError::Domain(e.to_string()))?;
    v_star
        .refresh(comm)
        .map_err(|e| StepError::Domain(e.to_string()))?;
    Ok((
        VectorField::new(u_star, v_star),
        IntermediateReports { u: rep_u, v: rep_v },
    ))
}

/// Discrete divergence of the intermediate velocity, composing exactly with
/// the operator solved by [`pressure_poisson`]. Wall rows encode the
/// impermeable condition by reflecting the vertical component and carry the
/// same half weight as their matrix rows, which makes the right-hand side
/// exactly orthogonal to the singular operator's left null space.
pub fn projection_rhs(u_star: &VectorField) -> Field {
    let sub = u_star.u.sub;
    let g = sub.grid;
    let ny = g.ny();
    let (rdx2, rdy2) = (0.5 / g.dx(), 0.5 / g.dy());
    let mut b = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let ddx = (u_star.u.at(i + 1, j) - u_star.u.at(i - 1, j)) * rdx2;
            let v = if gj == 0 {
                0.5 * (ddx + 2.0 * u_star.v.at(i, j + 1) * rdy2)
            } else if gj == ny - 1 {
                0.5 * (ddx - 2.0 * u_star.v.at(i, j - 1) * rdy2)
            } else {
                ddx + (u_star.v.at(i, j + 1) - u_star.v.at(i, j - 1)) * rdy2
            };
            b.set(i, j, v);
        }
    }
    b
}

/// Assemble the pressure operator -div((1/rho) grad p) as the composition of
/// central divergence and central gradient (a radius-2 stencil; parity
/// sublattices decouple, which is the accepted collocated-grid artifact).
/// Wall rows are scaled by 1/2: the mirror fold doubles their couplings, and
/// the half weight restores symmetry so the left null space coincides with
/// the span of the (parity) constants.
pub fn pressure_operator(
    rho: &Field,
    comm: &Communicator,
) -> Result<StencilMatrix, StepError> {
    let sub = rho.sub;
    let g = sub.grid;
    let ny = g.ny();
    let rx4 = 0.25 / (g.dx() * g.dx());
    let ry4 = 0.25 / (g.dy() * g.dy());
    let _ = comm;
    let mut min_rho = f64::INFINITY;
    let mut rows = Vec::with_capacity(sub.owned_nodes());
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let gi = sub.ix_lo + i as usize;
            let w = if gj == 0 || gj == ny - 1 { 0.5 } else { 1.0 };
            let axp = w / rho.at(i + 1, j);
            let axm = w / rho.at(i - 1, j);
            let ayp = w / rho.at(i, j + 1);
            let aym = w / rho.at(i, j - 1);
            min_rho = min_rho
                .min(rho.at(i + 1, j))
                .min(rho.at(i - 1, j))
                .min(rho.at(i, j + 1))
                .min(rho.at(i, j - 1));
            let e = vec![
                Stencil::new(0, 0, (axp + axm) * rx4 + (ayp + aym) * ry4),
                Stencil::new(2, 0, -axp * rx4),
                Stencil::new(-2, 0, -axm * rx4),
                Stencil::new(0, 2, -ayp * ry4),
                Stencil::new(0, -2, -aym * ry4),
            ];
            rows.push(((gi, gj), e));
        }
    }
    if min_rho <= 0.0 {
        return Err(StepError::Domain(format!(
            "nonpositive density {min_rho:e} in the pressure operator"
        )));
    }
    StencilMatrix::assemble(sub, 2, rows).map_err(|e| StepError::Domain(e.to_string()))
}

/// Solve -div((1/rho) grad p) = div(u*) with the constant null space removed
/// from the right-hand side and the returned solution. Collective.
pub fn pressure_poisson(
    u_star: &VectorField,
    rho: &Field,
    guess: &Field,
    solver: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), StepError> {
    let a = pressure_operator(rho, comm)?;
    let rhs = projection_rhs(u_star);
    let mut b = pressure_field(u_star.u.sub);
    b.copy_owned_from(&rhs);
    let mut cfg = *solver;
    cfg.nullspace = crate::linsolve::Nullspace::Constants;
    let (p, report) = gmres_solve_with_guess(&a, &b, guess, &cfg, comm)?;
    if !report.converged {
        return Err(StepError::NotConverged {
            system: "pressure",
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((p, report))
}

/// Nodal correction v = u* + (1/rho) grad p, then re-pin the wall rows to
/// their Dirichlet values. `p` must have current ghosts.
pub fn velocity_correction(
    u_star: &VectorField,
    p: &Field,
    rho: &Field,
    fp: &FlowParams,
) -> VectorField {
    let sub = u_star.u.sub;
    let g = sub.grid;
    let (rdx2, rdy2) = (0.5 / g.dx(), 0.5 / g.dy());
    let mut u = velocity_field(sub, fp.base.0, fp.lid.0);
    let mut v = velocity_field(sub, fp.base.1, fp.lid.1);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let ir = 1.0 / rho.at(i, j);
            u.set(
                i,
                j,
                u_star.u.at(i, j) + ir * (p.at(i + 1, j) - p.at(i - 1, j)) * rdx2,
            );
            v.set(
                i,
                j,
                u_star.v.at(i, j) + ir * (p.at(i, j + 1) - p.at(i, j - 1)) * rdy2,
            );
        }
    }
    u.fill_physical_ghosts();
    v.fill_physical_ghosts();
    VectorField::new(u, v)
}

/// Largest |div v| over interior rows (walls carry prescribed velocities).
/// Collective; velocity ghosts must be current.
pub fn max_interior_divergence(v: &VectorField, comm: &Communicator) -> f64 {
    let sub = v.u.sub;
    let g = sub.grid;
    let ny = g.ny();
    let (rdx2, rdy2) = (0.5 / g.dx(), 0.5 / g.dy());
    let mut local = 0.0f64;
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        if gj == 0 || gj == ny - 1 {
            continue;
        }
        for i in 0..sub.owned_nx() as isize {
            let d = (v.u.at(i + 1, j) - v.u.at(i - 1, j)) * rdx2
                + (v.v.at(i, j + 1) - v.v.at(i, j - 1)) * rdy2;
            local = local.max(d.abs());
        }
    }
    comm.allreduce_scalar(local, crate::comm::ReduceOp::Max)
}

/// Checkerboard monitor: largest second difference of p along grid lines,
/// normalized by the pressure range. Collective.
pub fn pressure_oscillation(p: &Field, comm: &Communicator) -> f64 {
    let sub = p.sub;
    let mut local = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let center = p.at(i, j);
            lo = lo.min(center);
            hi = hi.max(center);
            let ox = (p.at(i + 1, j) - 2.0 * center + p.at(i - 1, j)).abs();
            local = local.max(ox);
            let gj = sub.jy_lo + j as usize;
            if gj > 0 && gj + 1 < sub.grid.ny() {
                let oy = (p.at(i, j + 1) - 2.0 * center + p.at(i, j - 1)).abs();
                local = local.max(oy);
            }
        }
    }
    let osc = comm.allreduce_scalar(local, crate::comm::ReduceOp::Max);
    let lo = comm.allreduce_scalar(lo, crate::comm::ReduceOp::Min);
    let hi = comm.allreduce_scalar(hi, crate::comm::ReduceOp::Max);
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    osc / range
}

/// Network-phase velocity v_n = v + v_e with the excess flux
/// v_e = -lambda phi grad(df/dphi); a diagnostic reconstruction.
pub fn network_velocity(
    phi: &Field,
    v: &VectorField,
    ch: &crate::transport::ChParams,
    comm: &Communicator,
) -> VectorField {
    let mu_raw = crate::transport::chemical_potential(phi, ch);
    let mut mu = crate::transport::nutrient_field(phi.sub);
    mu.copy_owned_from(&mu_raw);
    mu.refresh(comm).expect("chemical potential ghosts");
    let (gx, gy) = crate::operators::grad(&mu);
    let mut u = v.u.clone();
    let mut w = v.v.clone();
    for j in 0..phi.sub.owned_ny() as isize {
        for i in 0..phi.sub.owned_nx() as isize {
            let m = ch.lambda * phi.at(i, j);
            u.set(i, j, v.u.at(i, j) - m * gx.at(i, j));
            w.set(i, j, v.v.at(i, j) - m * gy.at(i, j));
        }
    }
    VectorField::new(u, w)
}

pub struct FlowStepReports {
    pub momentum_iters: usize,
    pub pressure_iters: usize,
    pub pressure_residual: f64,
}

/// One projection step: forcing, intermediate velocity, pressure Poisson,
/// correction, history rotation. Collective.
#[allow(clippy::too_many_arguments)]
pub fn flow_step(
    state: &mut FlowState,
    hist: &PhiHistory,
    phi_next: &Field,
    ch: &crate::transport::ChParams,
    fp: &FlowParams,
    dt: f64,
    theta: f64,
    mom_cfg: &SolverConfig,
    prs_cfg: &SolverConfig,
    comm: &Communicator,
) -> Result<FlowStepReports, StepError> {
    let phi_star = hist.extrapolate(comm);
    let rho_star = averaged_density(&phi_star, fp, comm);
    let rho_next = averaged_density(phi_next, fp, comm);

    // Implicit viscosity field and matching explicit remainder.
    let capped_nu = |comm: &Communicator| -> Field {
        let mut nu = averaged_inverse_reynolds(&phi_star, fp, comm);
        let cap = fp.nu_max;
        nu.map_owned(|v| v.min(cap));
        nu.refresh(comm).expect("viscosity ghosts");
        nu
    };
    let nu_imp = match fp.viscosity {
        ViscositySplit::LocalImplicit => capped_nu(comm),
        ViscositySplit::ReferenceExplicit => {
            let mut nu = crate::transport::nutrient_field(phi_star.sub);
            nu.fill(1.0 / fp.re_a_ref());
            nu
        }
    };
    let forcing = if fp.include_forcing {
        let vstar = state.extrapolate(comm);
        let r = match fp.viscosity {
            ViscositySplit::LocalImplicit => {
                // principal part is implicit; the phase stress (and, when
                // enabled, the transposed-gradient remainder) stays explicit
                let (psx, psy) = phase_stress_div(&phi_star, ch.gamma1);
                let trans = if fp.transpose_stress {
                    let nu_a = capped_nu(comm);
                    Some(transpose_stress_div(&nu_a, &vstar))
                } else {
                    None
                };
                let sub = phi_star.sub;
                let mut rx = Field::scratch(sub);
                let mut ry = Field::scratch(sub);
                for j in 0..sub.owned_ny() as isize {
                    for i in 0..sub.owned_nx() as isize {
                        let (tx, ty) = match &trans {
                            Some((tx, ty)) => (tx.at(i, j), ty.at(i, j)),
                            None => (0.0, 0.0),
                        };
                        rx.set(i, j, -psx.at(i, j) + tx);
                        ry.set(i, j, -psy.at(i, j) + ty);
                    }
                }
                (rx, ry)
            }
            ViscositySplit::ReferenceExplicit => {
                assemble_r(&phi_star, &vstar, fp, fp.re_a_ref(), comm)
            }
        };
        Some(r)
    } else {
        None
    };

    let (u_star, mom) = intermediate_velocity(
        state,
        &nu_imp,
        &rho_star,
        forcing.as_ref(),
        fp,
        dt,
        theta,
        mom_cfg,
        comm,
    )?;
    let (mut p, prs) = pressure_poisson(&u_star, &rho_next, &state.p, prs_cfg, comm)?;
    p.refresh(comm).map_err(|e| StepError::Domain(e.to_string()))?;
    let mut v_new = velocity_correction(&u_star, &p, &rho_next, fp);
    v_new
        .u
        .refresh(comm)
        .map_err(|e| StepError::Domain(e.to_string()))?;
    v_new
        .v
        .refresh(comm)
        .map_err(|e| StepError::Domain(e.to_string()))?;

    state.v_prev = std::mem::replace(&mut state.v, v_new);
    state.u_star = u_star;
    state.p = p;
    Ok(FlowStepReports {
        momentum_iters: mom.u.iterations + mom.v.iterations,
        pressure_iters: prs.iterations,
        pressure_residual: prs.residual,
    })
}
