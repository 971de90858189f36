//! Time stepping for the two scalar transport equations: the modified
//! Cahn-Hilliard network equation with Monod production, and the nutrient
//! advection-diffusion equation with consumption.
//!
//! Both steps solve one linear system. Nonlinear coefficients are frozen at
//! the extrapolated state phi* = (3 phi^n - phi^{n-1})/2; the linear
//! transport operator is theta-weighted between time levels (theta = 1/2 is
//! Crank-Nicolson). Fluxes are conservative with zero wall faces, so the
//! discrete network mass telescopes exactly.

use crate::comm::Communicator;
use crate::error::StepError;
use crate::linsolve::{
    gmres_solve_with_guess, SolveReport, SolverConfig, Stencil, StencilMatrix,
};
use crate::mesh::{global_reduce, Field, GhostPolicy, ReduceKind, Subdomain};
use crate::operators::VectorField;

/// Cahn-Hilliard parameters (dimensionless).
#[derive(Debug, Clone, Copy)]
pub struct ChParams {
    /// Conformation-entropy (gradient energy) strength.
    pub gamma1: f64,
    /// Bulk double-well strength.
    pub gamma2: f64,
    /// Mobility scale; the effective mobility is lambda * phi.
    pub lambda: f64,
    /// Maximum production rate.
    pub mu: f64,
    /// Monod half-saturation constant.
    pub kc: f64,
    /// Production scaling constant; zero disables production.
    pub epsilon: f64,
}

impl ChParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma1 > 0.0) || !(self.gamma2 > 0.0) || !(self.lambda > 0.0) {
            return Err("gamma1, gamma2 and lambda must be positive".into());
        }
        if !(self.kc > 0.0) {
            return Err("kc must be positive".into());
        }
        if self.mu < 0.0 || self.epsilon < 0.0 {
            return Err("mu and epsilon must be nonnegative".into());
        }
        Ok(())
    }
}

/// Nutrient parameters (dimensionless).
#[derive(Debug, Clone, Copy)]
pub struct NutrientParams {
    pub ds: f64,
    pub a: f64,
}

impl NutrientParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ds > 0.0) {
            return Err("ds must be positive".into());
        }
        if self.a < 0.0 {
            return Err("a must be nonnegative".into());
        }
        Ok(())
    }
}

/// Network fraction at the two most recent time levels (ghost width 2,
/// mirror walls). The solvent fraction is 1 - phi by definition and is never
/// stored.
#[derive(Debug, Clone)]
pub struct PhiHistory {
    pub prev: Field,
    pub curr: Field,
}

impl PhiHistory {
    /// Start history with prev = curr, which makes the first extrapolation
    /// collapse to the initial state.
    pub fn fresh(phi0: Field) -> PhiHistory {
        PhiHistory {
            prev: phi0.clone(),
            curr: phi0,
        }
    }

    /// phi* = (3 phi^n - phi^{n-1})/2 with ghosts refreshed.
    pub fn extrapolate(&self, comm: &Communicator) -> Field {
        let mut star = self.curr.clone();
        let w = star.ghost_width() as isize;
        let onx = star.sub.owned_nx() as isize;
        let ony = star.sub.owned_ny() as isize;
        for j in -w..ony + w {
            for i in -w..onx + w {
                star.set(i, j, 1.5 * self.curr.at(i, j) - 0.5 * self.prev.at(i, j));
            }
        }
        star.refresh(comm).expect("phi extrapolation refresh");
        star
    }

    pub fn advance(&mut self, next: Field) {
        std::mem::swap(&mut self.prev, &mut self.curr);
        self.curr = next;
    }
}

/// Standard phi field: ghost width 2, even mirror at both walls.
pub fn phi_field(sub: Subdomain) -> Field {
    Field::new(sub, 2, GhostPolicy::EvenMirror, GhostPolicy::EvenMirror)
}

/// Standard nutrient field: ghost width 1, even mirror at both walls.
pub fn nutrient_field(sub: Subdomain) -> Field {
    Field::new(sub, 1, GhostPolicy::EvenMirror, GhostPolicy::EvenMirror)
}

/// Derivative of the double-well bulk energy gamma2 * phi^2 (1-phi)^2.
pub fn bulk_potential_derivative(phi: f64, gamma2: f64) -> f64 {
    2.0 * gamma2 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

/// Chemical potential df/dphi = -gamma1 lap(phi) + bulk'(phi). Ghosts of phi
/// must be current.
pub fn chemical_potential(phi: &Field, p: &ChParams) -> Field {
    let mut out = crate::operators::laplacian(phi);
    let onx = phi.sub.owned_nx() as isize;
    let ony = phi.sub.owned_ny() as isize;
    for j in 0..ony {
        for i in 0..onx {
            let v = -p.gamma1 * out.at(i, j) + bulk_potential_derivative(phi.at(i, j), p.gamma2);
            out.set(i, j, v);
        }
    }
    out
}

/// Discrete free energy: dx dy * sum over unique nodes of
/// gamma1/2 |grad phi|^2 + gamma2 phi^2 (1-phi)^2. Collective; ghosts of phi
/// must be current.
pub fn free_energy(phi: &Field, p: &ChParams, comm: &Communicator) -> f64 {
    let g = phi.sub.grid;
    let (rdx2, rdy2) = (0.5 / g.dx(), 0.5 / g.dy());
    let onx = phi.sub.owned_nx() as isize;
    let ony = phi.sub.owned_ny() as isize;
    let mut acc = crate::comm::Kahan::new();
    for j in 0..ony {
        for i in 0..onx {
            let gx = (phi.at(i + 1, j) - phi.at(i - 1, j)) * rdx2;
            let gy = (phi.at(i, j + 1) - phi.at(i, j - 1)) * rdy2;
            let f = phi.at(i, j);
            let well = f * f * (1.0 - f) * (1.0 - f);
            acc.add(0.5 * p.gamma1 * (gx * gx + gy * gy) + p.gamma2 * well);
        }
    }
    let local = acc.value() * g.dx() * g.dy();
    comm.allreduce_scalar(local, crate::comm::ReduceOp::Sum)
}

/// Monod production rate g_n = epsilon * mu * phi * c / (kc + c), node-wise.
pub fn growth_rate(phi: &Field, c: &Field, p: &ChParams) -> Result<Field, StepError> {
    let mut out = Field::scratch(phi.sub);
    let onx = phi.sub.owned_nx() as isize;
    let ony = phi.sub.owned_ny() as isize;
    let mut min_denom = f64::INFINITY;
    for j in 0..ony {
        for i in 0..onx {
            let cij = c.at(i, j);
            min_denom = min_denom.min(p.kc + cij);
            out.set(
                i,
                j,
                p.epsilon * p.mu * phi.at(i, j) * cij / (p.kc + cij),
            );
        }
    }
    if min_denom <= 0.0 {
        return Err(StepError::Domain(format!(
            "nutrient field corrupted: kc + c reaches {min_denom:e}"
        )));
    }
    Ok(out)
}

/// Face mobility lambda*(phi_l + phi_r)/2, clipped at zero (extrapolation can
/// overshoot slightly below the degenerate limit).
#[inline]
fn face_mobility(lambda: f64, l: f64, r: f64) -> f64 {
    (0.5 * lambda * (l + r)).max(0.0)
}

/// Accumulator for stencil entries over the radius-2 neighborhood.
struct RowAcc {
    c: [[f64; 5]; 5],
}

impl RowAcc {
    fn new() -> RowAcc {
        RowAcc { c: [[0.0; 5]; 5] }
    }

    #[inline]
    fn add(&mut self, di: i32, dj: i32, v: f64) {
        self.c[(dj + 2) as usize][(di + 2) as usize] += v;
    }

    /// Five-point Laplacian of the unknown centered at offset (bi, bj),
    /// scaled by `s`.
    fn add_laplacian(&mut self, bi: i32, bj: i32, s: f64, rx2: f64, ry2: f64) {
        self.add(bi, bj, -2.0 * s * (rx2 + ry2));
        self.add(bi - 1, bj, s * rx2);
        self.add(bi + 1, bj, s * rx2);
        self.add(bi, bj - 1, s * ry2);
        self.add(bi, bj + 1, s * ry2);
    }

    fn entries(&self) -> Vec<Stencil> {
        let mut out = Vec::with_capacity(13);
        for dj in -2i32..=2 {
            for di in -2i32..=2 {
                let v = self.c[(dj + 2) as usize][(di + 2) as usize];
                if v != 0.0 || (di == 0 && dj == 0) {
                    out.push(Stencil::new(di, dj, v));
                }
            }
        }
        out
    }
}

/// Linear transport operator rows for the network equation:
/// T phi = div(phi v) + gamma1 * div(M grad(lap phi)), with conservative
/// advection, zero wall faces for the flux term, and mirror images feeding
/// the inner Laplacian.
fn ch_transport_rows(
    phi_star: &Field,
    v: &VectorField,
    p: &ChParams,
) -> Vec<((usize, usize), Vec<Stencil>)> {
    let sub = phi_star.sub;
    let g = sub.grid;
    let ny = g.ny();
    let rx2 = 1.0 / (g.dx() * g.dx());
    let ry2 = 1.0 / (g.dy() * g.dy());
    let (adx, ady) = (0.5 / g.dx(), 0.5 / g.dy());
    let mut rows = Vec::with_capacity(sub.owned_nodes());
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let gi = sub.ix_lo + i as usize;
            let mut acc = RowAcc::new();
            // advection: products at the neighbor nodes
            acc.add(1, 0, v.u.at(i + 1, j) * adx);
            acc.add(-1, 0, -v.u.at(i - 1, j) * adx);
            if gj + 1 < ny {
                acc.add(0, 1, v.v.at(i, j + 1) * ady);
            }
            if gj > 0 {
                acc.add(0, -1, -v.v.at(i, j - 1) * ady);
            }
            // gamma1 * div(M grad(lap .)), one face at a time
            let m_xp = face_mobility(p.lambda, phi_star.at(i, j), phi_star.at(i + 1, j));
            let m_xm = face_mobility(p.lambda, phi_star.at(i, j), phi_star.at(i - 1, j));
            let s_xp = p.gamma1 * m_xp * rx2;
            let s_xm = p.gamma1 * m_xm * rx2;
            acc.add_laplacian(1, 0, s_xp, rx2, ry2);
            acc.add_laplacian(0, 0, -s_xp, rx2, ry2);
            acc.add_laplacian(-1, 0, s_xm, rx2, ry2);
            acc.add_laplacian(0, 0, -s_xm, rx2, ry2);
            if gj + 1 < ny {
                let m_yp = face_mobility(p.lambda, phi_star.at(i, j), phi_star.at(i, j + 1));
                let s_yp = p.gamma1 * m_yp * ry2;
                acc.add_laplacian(0, 1, s_yp, rx2, ry2);
                acc.add_laplacian(0, 0, -s_yp, rx2, ry2);
            }
            if gj > 0 {
                let m_ym = face_mobility(p.lambda, phi_star.at(i, j), phi_star.at(i, j - 1));
                let s_ym = p.gamma1 * m_ym * ry2;
                acc.add_laplacian(0, -1, s_ym, rx2, ry2);
                acc.add_laplacian(0, 0, -s_ym, rx2, ry2);
            }
            rows.push(((gi, gj), acc.entries()));
        }
    }
    rows
}

/// Explicit flux div(M grad q) with zero wall faces; q must have current
/// ghosts (width >= 1).
fn mobility_flux_div(phi_star: &Field, q: &Field, lambda: f64) -> Field {
    let sub = phi_star.sub;
    let g = sub.grid;
    let ny = g.ny();
    let rx2 = 1.0 / (g.dx() * g.dx());
    let ry2 = 1.0 / (g.dy() * g.dy());
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let m_xp = face_mobility(lambda, phi_star.at(i, j), phi_star.at(i + 1, j));
            let m_xm = face_mobility(lambda, phi_star.at(i, j), phi_star.at(i - 1, j));
            let mut acc = (m_xp * (q.at(i + 1, j) - q.at(i, j))
                - m_xm * (q.at(i, j) - q.at(i - 1, j)))
                * rx2;
            if gj + 1 < ny {
                let m_yp = face_mobility(lambda, phi_star.at(i, j), phi_star.at(i, j + 1));
                acc += m_yp * (q.at(i, j + 1) - q.at(i, j)) * ry2;
            }
            if gj > 0 {
                let m_ym = face_mobility(lambda, phi_star.at(i, j), phi_star.at(i, j - 1));
                acc -= m_ym * (q.at(i, j) - q.at(i, j - 1)) * ry2;
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// One Cahn-Hilliard step: solves
/// (phi' - phi)/dt + theta*T phi' + (1-theta)*T phi =
///     div(M* grad bulk'(phi*)) + g_n(phi*, c)
/// where T is the linearized transport operator at the extrapolated state.
/// Returns phi^{n+1} and the solve report. Collective.
#[allow(clippy::too_many_arguments)]
pub fn ch_step(
    hist: &PhiHistory,
    v: &VectorField,
    c: &Field,
    p: &ChParams,
    dt: f64,
    theta: f64,
    solver: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), StepError> {
    let sub = hist.curr.sub;
    let phi_star = hist.extrapolate(comm);
    let rows = ch_transport_rows(&phi_star, v, p);

    let a_rows: Vec<_> = rows
        .iter()
        .map(|((gi, gj), entries)| {
            let mut merged: Vec<Stencil> = entries
                .iter()
                .map(|e| Stencil::new(e.di, e.dj, theta * e.val))
                .collect();
            if let Some(d) = merged.iter_mut().find(|e| e.di == 0 && e.dj == 0) {
                d.val += 1.0 / dt;
            } else {
                merged.push(Stencil::new(0, 0, 1.0 / dt));
            }
            ((*gi, *gj), merged)
        })
        .collect();
    let a = StencilMatrix::assemble(sub, 2, a_rows).map_err(|e| StepError::Domain(e.to_string()))?;

    // rhs = phi/dt - (1-theta) T phi + explicit bulk flux + production
    let t = StencilMatrix::assemble(sub, 2, rows).map_err(|e| StepError::Domain(e.to_string()))?;
    let mut phi_n = hist.curr.clone();
    let mut t_phi = Field::scratch(sub);
    t.matvec(&mut phi_n, &mut t_phi, comm)?;

    let mut bulk = nutrient_field(sub); // width-1 mirror field reused as scratch shape
    bulk.fill_from(|_, _| 0.0);
    {
        let onx = sub.owned_nx() as isize;
        let ony = sub.owned_ny() as isize;
        for j in 0..ony {
            for i in 0..onx {
                bulk.set(i, j, bulk_potential_derivative(phi_star.at(i, j), p.gamma2));
            }
        }
    }
    bulk.refresh(comm)
        .map_err(|e| StepError::Domain(e.to_string()))?;
    let bulk_flux = mobility_flux_div(&phi_star, &bulk, p.lambda);
    let production = if p.epsilon > 0.0 && p.mu > 0.0 {
        // Collective guard: every rank must agree on a corrupted nutrient
        // field before anyone bails out of the step.
        let mut local_min = f64::INFINITY;
        for j in 0..sub.owned_ny() as isize {
            for i in 0..sub.owned_nx() as isize {
                local_min = local_min.min(p.kc + c.at(i, j));
            }
        }
        let denom = comm.allreduce_scalar(local_min, crate::comm::ReduceOp::Min);
        if denom <= 0.0 {
            return Err(StepError::Domain(format!(
                "nutrient field corrupted: kc + c reaches {denom:e}"
            )));
        }
        Some(growth_rate(&phi_star, c, p)?)
    } else {
        None
    };

    let mut b = phi_field(sub);
    let onx = sub.owned_nx() as isize;
    let ony = sub.owned_ny() as isize;
    for j in 0..ony {
        for i in 0..onx {
            let mut rhs = hist.curr.at(i, j) / dt - (1.0 - theta) * t_phi.at(i, j)
                + bulk_flux.at(i, j);
            if let Some(gn) = &production {
                rhs += gn.at(i, j);
            }
            b.set(i, j, rhs);
        }
    }

    let (phi_next, report) = gmres_solve_with_guess(&a, &b, &hist.curr, solver, comm)?;
    if !report.converged {
        return Err(StepError::NotConverged {
            system: "cahn-hilliard",
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((phi_next, report))
}

/// One nutrient step: solves
/// (phi_s' c' - phi_s c)/dt + theta*T c' + (1-theta)*T c = 0, where
/// T c = div(c v phi_s^{n+1/2}) - div(Ds phi_s^{n+1/2} grad c)
///       + A phi_n^{n+1/2} c.
/// Collective.
#[allow(clippy::too_many_arguments)]
pub fn nutrient_step(
    c: &Field,
    hist: &PhiHistory,
    phi_next: &Field,
    v: &VectorField,
    p: &NutrientParams,
    dt: f64,
    theta: f64,
    solver: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), StepError> {
    let sub = c.sub;
    let g = sub.grid;
    let ny = g.ny();

    // Degenerate time-derivative coefficient check (collective).
    let mut min_phis = f64::INFINITY;
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            min_phis = min_phis.min(1.0 - phi_next.at(i, j));
        }
    }
    let min_phis = comm.allreduce_scalar(min_phis, crate::comm::ReduceOp::Min);
    if min_phis <= 0.0 {
        return Err(StepError::Domain(format!(
            "solvent fraction reaches {min_phis:e}; nutrient time derivative degenerates"
        )));
    }

    // phi at the half level, with ghosts (both parents have current ghosts).
    let mut phi_half = hist.curr.clone();
    {
        let w = phi_half.ghost_width() as isize;
        let onx = sub.owned_nx() as isize;
        let ony = sub.owned_ny() as isize;
        for j in -w..ony + w {
            for i in -w..onx + w {
                phi_half.set(i, j, 0.5 * (hist.curr.at(i, j) + phi_next.at(i, j)));
            }
        }
    }

    let rx2 = 1.0 / (g.dx() * g.dx());
    let ry2 = 1.0 / (g.dy() * g.dy());
    let (adx, ady) = (0.5 / g.dx(), 0.5 / g.dy());
    let phis = |i: isize, j: isize| 1.0 - phi_half.at(i, j);
    let mut rows = Vec::with_capacity(sub.owned_nodes());
    for j in 0..sub.owned_ny() as isize {
        let gj = sub.jy_lo + j as usize;
        for i in 0..sub.owned_nx() as isize {
            let gi = sub.ix_lo + i as usize;
            let mut acc = RowAcc::new();
            // advection of c by v phi_s
            acc.add(1, 0, v.u.at(i + 1, j) * phis(i + 1, j) * adx);
            acc.add(-1, 0, -v.u.at(i - 1, j) * phis(i - 1, j) * adx);
            if gj + 1 < ny {
                acc.add(0, 1, v.v.at(i, j + 1) * phis(i, j + 1) * ady);
            }
            if gj > 0 {
                acc.add(0, -1, -v.v.at(i, j - 1) * phis(i, j - 1) * ady);
            }
            // minus diffusion div(Ds phi_s grad c), zero wall faces
            let dxp = (0.5 * p.ds * (phis(i, j) + phis(i + 1, j))).max(0.0) * rx2;
            let dxm = (0.5 * p.ds * (phis(i, j) + phis(i - 1, j))).max(0.0) * rx2;
            acc.add(1, 0, -dxp);
            acc.add(0, 0, dxp + dxm);
            acc.add(-1, 0, -dxm);
            if gj + 1 < ny {
                let dyp = (0.5 * p.ds * (phis(i, j) + phis(i, j + 1))).max(0.0) * ry2;
                acc.add(0, 1, -dyp);
                acc.add(0, 0, dyp);
            }
            if gj > 0 {
                let dym = (0.5 * p.ds * (phis(i, j) + phis(i, j - 1))).max(0.0) * ry2;
                acc.add(0, -1, -dym);
                acc.add(0, 0, dym);
            }
            // consumption A phi_n c
            acc.add(0, 0, p.a * phi_half.at(i, j));
            let entries = acc
                .entries()
                .into_iter()
                .filter(|e| e.di.abs() <= 1 && e.dj.abs() <= 1)
                .collect::<Vec<_>>();
            rows.push(((gi, gj), entries));
        }
    }

    let a_rows: Vec<_> = rows
        .iter()
        .zip(owned_nodes(sub))
        .map(|(((gi, gj), entries), (i, j))| {
            let mut merged: Vec<Stencil> = entries
                .iter()
                .map(|e| Stencil::new(e.di, e.dj, theta * e.val))
                .collect();
            let coeff = (1.0 - phi_next.at(i, j)) / dt;
            if let Some(d) = merged.iter_mut().find(|e| e.di == 0 && e.dj == 0) {
                d.val += coeff;
            } else {
                merged.push(Stencil::new(0, 0, coeff));
            }
            ((*gi, *gj), merged)
        })
        .collect();
    let a = StencilMatrix::assemble(sub, 1, a_rows).map_err(|e| StepError::Domain(e.to_string()))?;
    let t = StencilMatrix::assemble(sub, 1, rows).map_err(|e| StepError::Domain(e.to_string()))?;

    let mut c_n = c.clone();
    let mut t_c = Field::scratch(sub);
    t.matvec(&mut c_n, &mut t_c, comm)?;

    let mut b = nutrient_field(sub);
    for (i, j) in owned_nodes(sub) {
        let rhs = (1.0 - hist.curr.at(i, j)) * c.at(i, j) / dt - (1.0 - theta) * t_c.at(i, j);
        b.set(i, j, rhs);
    }

    let (c_next, report) = gmres_solve_with_guess(&a, &b, c, solver, comm)?;
    if !report.converged {
        return Err(StepError::NotConverged {
            system: "nutrient",
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((c_next, report))
}

fn owned_nodes(sub: Subdomain) -> impl Iterator<Item = (isize, isize)> {
    let onx = sub.owned_nx() as isize;
    let ony = sub.owned_ny() as isize;
    (0..ony).flat_map(move |j| (0..onx).map(move |i| (i, j)))
}

/// Total network mass over unique nodes. Collective.
pub fn phi_mass(phi: &Field, comm: &Communicator) -> f64 {
    global_reduce(phi, ReduceKind::Sum, comm)
}
