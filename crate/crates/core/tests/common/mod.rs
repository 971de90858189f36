//! Shared test utilities: independent dense reimplementations of the
//! time-stepping schemes, used as oracles against the distributed stencil
//! path. Everything here works on global dense arrays with explicit wrap and
//! reflect index maps, deliberately avoiding the production Field/matrix
//! machinery.
#![allow(dead_code)]

use biofilm2d::comm::Communicator;
use biofilm2d::mesh::{decompose, gather_global, Field, GhostPolicy, GridSpec, Subdomain};
use biofilm2d::operators::VectorField;
use nalgebra::{DMatrix, DVector};

pub struct DenseGrid {
    pub nxu: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl DenseGrid {
    pub fn of(grid: &GridSpec) -> DenseGrid {
        DenseGrid {
            nxu: grid.unique_nx(),
            ny: grid.ny(),
            dx: grid.dx(),
            dy: grid.dy(),
        }
    }

    pub fn n(&self) -> usize {
        self.nxu * self.ny
    }

    pub fn wrap(&self, i: isize) -> usize {
        let n = self.nxu as isize;
        (((i % n) + n) % n) as usize
    }

    /// Reflect a row index about the walls (even mirror images).
    pub fn reflect(&self, j: isize) -> usize {
        let top = (self.ny - 1) as isize;
        let mut j = j;
        while j < 0 || j > top {
            if j < 0 {
                j = -j;
            }
            if j > top {
                j = 2 * top - j;
            }
        }
        j as usize
    }

    /// Column index of (i, j) with periodic wrap and wall reflection.
    pub fn col(&self, i: isize, j: isize) -> usize {
        self.reflect(j) * self.nxu + self.wrap(i)
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }
}

// ---------------------------------------------------------------------------
// setup helpers

pub fn solo_setup(intervals: usize) -> (GridSpec, Subdomain, Communicator) {
    let g = GridSpec::from_intervals(intervals).unwrap();
    let sub = decompose(&g, 1).unwrap()[0];
    (g, sub, Communicator::solo())
}

/// Build a field from a global function and refresh its ghosts.
pub fn field_from(
    sub: Subdomain,
    comm: &Communicator,
    width: usize,
    bottom: GhostPolicy,
    top: GhostPolicy,
    f: impl Fn(usize, usize) -> f64,
) -> Field {
    let mut out = Field::new(sub, width, bottom, top);
    out.fill_from(f);
    out.refresh(comm).unwrap();
    out
}

pub fn global_of(f: &Field, comm: &Communicator) -> Vec<f64> {
    gather_global(f, comm)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Deterministic smooth-ish pseudo-random value in [-1, 1).
pub fn hash_noise(seed: u64, i: usize, j: usize) -> f64 {
    biofilm2d::driver::ic::node_noise(seed, i, j, 4096)
}

// ---------------------------------------------------------------------------
// dense scheme pieces

fn face_mobility(lambda: f64, a: f64, b: f64) -> f64 {
    (0.5 * lambda * (a + b)).max(0.0)
}

/// Dense linear transport operator of the network equation:
/// T phi = div(phi v) + gamma1 div(M grad(lap phi)), with conservative
/// advection (products at neighbor nodes, wall-crossing products dropped),
/// zero wall faces for the flux term, and mirror images inside the Laplacian.
pub fn dense_ch_transport(
    dg: &DenseGrid,
    phi_star: &[f64],
    u: &[f64],
    v: &[f64],
    gamma1: f64,
    lambda: f64,
) -> DMatrix<f64> {
    let n = dg.n();
    let rx2 = 1.0 / (dg.dx * dg.dx);
    let ry2 = 1.0 / (dg.dy * dg.dy);
    let (adx, ady) = (0.5 / dg.dx, 0.5 / dg.dy);
    let mut t = DMatrix::<f64>::zeros(n, n);
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            // advection
            t[(r, dg.col(i + 1, j))] += u[dg.col(i + 1, j)] * adx;
            t[(r, dg.col(i - 1, j))] -= u[dg.col(i - 1, j)] * adx;
            if j + 1 < dg.ny as isize {
                t[(r, dg.col(i, j + 1))] += v[dg.col(i, j + 1)] * ady;
            }
            if j > 0 {
                t[(r, dg.col(i, j - 1))] -= v[dg.col(i, j - 1)] * ady;
            }
            // gamma1 div(M grad(lap .)) with zero wall faces
            let lap_at = |bi: isize, bj: isize, s: f64, t: &mut DMatrix<f64>| {
                t[(r, dg.col(bi, bj))] += -2.0 * s * (rx2 + ry2);
                t[(r, dg.col(bi - 1, bj))] += s * rx2;
                t[(r, dg.col(bi + 1, bj))] += s * rx2;
                t[(r, dg.col(bi, bj - 1))] += s * ry2;
                t[(r, dg.col(bi, bj + 1))] += s * ry2;
            };
            let ps = |ii: isize, jj: isize| phi_star[dg.col(ii, jj)];
            let m_xp = face_mobility(lambda, ps(i, j), ps(i + 1, j));
            let m_xm = face_mobility(lambda, ps(i, j), ps(i - 1, j));
            lap_at(i + 1, j, gamma1 * m_xp * rx2, &mut t);
            lap_at(i, j, -gamma1 * m_xp * rx2, &mut t);
            lap_at(i - 1, j, gamma1 * m_xm * rx2, &mut t);
            lap_at(i, j, -gamma1 * m_xm * rx2, &mut t);
            if j + 1 < dg.ny as isize {
                let m_yp = face_mobility(lambda, ps(i, j), ps(i, j + 1));
                lap_at(i, j + 1, gamma1 * m_yp * ry2, &mut t);
                lap_at(i, j, -gamma1 * m_yp * ry2, &mut t);
            }
            if j > 0 {
                let m_ym = face_mobility(lambda, ps(i, j), ps(i, j - 1));
                lap_at(i, j - 1, gamma1 * m_ym * ry2, &mut t);
                lap_at(i, j, -gamma1 * m_ym * ry2, &mut t);
            }
        }
    }
    t
}

/// Dense div(M grad q) with zero wall faces.
pub fn dense_mobility_flux(
    dg: &DenseGrid,
    phi_star: &[f64],
    q: &[f64],
    lambda: f64,
) -> DVector<f64> {
    let rx2 = 1.0 / (dg.dx * dg.dx);
    let ry2 = 1.0 / (dg.dy * dg.dy);
    let mut out = DVector::<f64>::zeros(dg.n());
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            let ps = |ii: isize, jj: isize| phi_star[dg.col(ii, jj)];
            let qq = |ii: isize, jj: isize| q[dg.col(ii, jj)];
            let mut acc = 0.0;
            let m_xp = face_mobility(lambda, ps(i, j), ps(i + 1, j));
            let m_xm = face_mobility(lambda, ps(i, j), ps(i - 1, j));
            acc += (m_xp * (qq(i + 1, j) - qq(i, j)) - m_xm * (qq(i, j) - qq(i - 1, j))) * rx2;
            if j + 1 < dg.ny as isize {
                let m_yp = face_mobility(lambda, ps(i, j), ps(i, j + 1));
                acc += m_yp * (qq(i, j + 1) - qq(i, j)) * ry2;
            }
            if j > 0 {
                let m_ym = face_mobility(lambda, ps(i, j), ps(i, j - 1));
                acc -= m_ym * (qq(i, j) - qq(i, j - 1)) * ry2;
            }
            out[r] = acc;
        }
    }
    out
}

fn bulk_prime(phi: f64, gamma2: f64) -> f64 {
    2.0 * gamma2 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

pub struct ChParamsLite {
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kc: f64,
    pub epsilon: f64,
}

/// One dense Cahn-Hilliard step, mirroring the production scheme:
/// (phi' - phi)/dt + theta T phi' + (1-theta) T phi
///   = div(M* grad bulk'(phi*)) + g_n(phi*, c)
pub fn dense_ch_step(
    dg: &DenseGrid,
    phi: &[f64],
    phi_prev: &[f64],
    u: &[f64],
    v: &[f64],
    c: &[f64],
    p: &ChParamsLite,
    dt: f64,
    theta: f64,
) -> DVector<f64> {
    let n = dg.n();
    let phi_star: Vec<f64> = phi
        .iter()
        .zip(phi_prev.iter())
        .map(|(a, b)| 1.5 * a - 0.5 * b)
        .collect();
    let t = dense_ch_transport(dg, &phi_star, u, v, p.gamma1, p.lambda);
    let mut a = DMatrix::<f64>::identity(n, n) / dt;
    a += &t * theta;
    let phi_v = DVector::from_column_slice(phi);
    let bulk: Vec<f64> = phi_star.iter().map(|&f| bulk_prime(f, p.gamma2)).collect();
    let mut b = &phi_v / dt - &t * &phi_v * (1.0 - theta)
        + dense_mobility_flux(dg, &phi_star, &bulk, p.lambda);
    if p.epsilon > 0.0 && p.mu > 0.0 {
        for r in 0..n {
            b[r] += p.epsilon * p.mu * phi_star[r] * c[r] / (p.kc + c[r]);
        }
    }
    a.lu().solve(&b).expect("dense CH solve")
}

/// One dense nutrient step, mirroring the production scheme.
#[allow(clippy::too_many_arguments)]
pub fn dense_nutrient_step(
    dg: &DenseGrid,
    c: &[f64],
    phi_n_level: &[f64],
    phi_next: &[f64],
    u: &[f64],
    v: &[f64],
    ds: f64,
    a_rate: f64,
    dt: f64,
    theta: f64,
) -> DVector<f64> {
    let n = dg.n();
    let rx2 = 1.0 / (dg.dx * dg.dx);
    let ry2 = 1.0 / (dg.dy * dg.dy);
    let (adx, ady) = (0.5 / dg.dx, 0.5 / dg.dy);
    let phi_half: Vec<f64> = phi_n_level
        .iter()
        .zip(phi_next.iter())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let phis = |r: usize| 1.0 - phi_half[r];
    let mut t = DMatrix::<f64>::zeros(n, n);
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            // advection of c by v phi_s
            t[(r, dg.col(i + 1, j))] += u[dg.col(i + 1, j)] * phis(dg.col(i + 1, j)) * adx;
            t[(r, dg.col(i - 1, j))] -= u[dg.col(i - 1, j)] * phis(dg.col(i - 1, j)) * adx;
            if j + 1 < dg.ny as isize {
                t[(r, dg.col(i, j + 1))] += v[dg.col(i, j + 1)] * phis(dg.col(i, j + 1)) * ady;
            }
            if j > 0 {
                t[(r, dg.col(i, j - 1))] -= v[dg.col(i, j - 1)] * phis(dg.col(i, j - 1)) * ady;
            }
            // minus diffusion, zero wall faces
            let dxp = (0.5 * ds * (phis(r) + phis(dg.col(i + 1, j)))).max(0.0) * rx2;
            let dxm = (0.5 * ds * (phis(r) + phis(dg.col(i - 1, j)))).max(0.0) * rx2;
            t[(r, dg.col(i + 1, j))] -= dxp;
            t[(r, r)] += dxp + dxm;
            t[(r, dg.col(i - 1, j))] -= dxm;
            if j + 1 < dg.ny as isize {
                let dyp = (0.5 * ds * (phis(r) + phis(dg.col(i, j + 1)))).max(0.0) * ry2;
                t[(r, dg.col(i, j + 1))] -= dyp;
                t[(r, r)] += dyp;
            }
            if j > 0 {
                let dym = (0.5 * ds * (phis(r) + phis(dg.col(i, j - 1)))).max(0.0) * ry2;
                t[(r, dg.col(i, j - 1))] -= dym;
                t[(r, r)] += dym;
            }
            // consumption
            t[(r, r)] += a_rate * phi_half[r];
        }
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        a[(r, r)] = (1.0 - phi_next[r]) / dt;
    }
    a += &t * theta;
    let c_v = DVector::from_column_slice(c);
    let mut b = -(&t * &c_v) * (1.0 - theta);
    for r in 0..n {
        b[r] += (1.0 - phi_n_level[r]) * c[r] / dt;
    }
    a.lu().solve(&b).expect("dense nutrient solve")
}

/// One dense intermediate-velocity component solve:
/// (u - v^n)/dt = -conv* + (1/rho) div(nu grad u^theta) + force/rho,
/// identity rows at the walls.
#[allow(clippy::too_many_arguments)]
pub fn dense_momentum_component(
    dg: &DenseGrid,
    vn: &[f64],
    conv: &[f64],
    nu: &[f64],
    rho: &[f64],
    force: Option<&[f64]>,
    wall_bottom: f64,
    wall_top: f64,
    dt: f64,
    theta: f64,
) -> DVector<f64> {
    let n = dg.n();
    let rx2 = 1.0 / (dg.dx * dg.dx);
    let ry2 = 1.0 / (dg.dy * dg.dy);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    // explicit viscous application for the (1-theta) side
    let visc = |f: &[f64], i: isize, j: isize| -> f64 {
        let r = dg.col(i, j);
        let nxp = 0.5 * (nu[r] + nu[dg.col(i + 1, j)]) * rx2;
        let nxm = 0.5 * (nu[r] + nu[dg.col(i - 1, j)]) * rx2;
        let nyp = 0.5 * (nu[r] + nu[dg.col(i, j + 1)]) * ry2;
        let nym = 0.5 * (nu[r] + nu[dg.col(i, j - 1)]) * ry2;
        (nxp * (f[dg.col(i + 1, j)] - f[r]) - nxm * (f[r] - f[dg.col(i - 1, j)])
            + nyp * (f[dg.col(i, j + 1)] - f[r])
            - nym * (f[r] - f[dg.col(i, j - 1)]))
            / rho[r]
    };
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            if j == 0 || j == (dg.ny - 1) as isize {
                a[(r, r)] = 1.0;
                b[r] = if j == 0 { wall_bottom } else { wall_top };
                continue;
            }
            let ir = 1.0 / rho[r];
            let nxp = 0.5 * (nu[r] + nu[dg.col(i + 1, j)]) * rx2;
            let nxm = 0.5 * (nu[r] + nu[dg.col(i - 1, j)]) * rx2;
            let nyp = 0.5 * (nu[r] + nu[dg.col(i, j + 1)]) * ry2;
            let nym = 0.5 * (nu[r] + nu[dg.col(i, j - 1)]) * ry2;
            let s = theta * ir;
            a[(r, r)] = 1.0 / dt + s * (nxp + nxm + nyp + nym);
            a[(r, dg.col(i + 1, j))] -= s * nxp;
            a[(r, dg.col(i - 1, j))] -= s * nxm;
            a[(r, dg.col(i, j + 1))] -= s * nyp;
            a[(r, dg.col(i, j - 1))] -= s * nym;
            b[r] = vn[r] / dt - conv[r] + (1.0 - theta) * visc(vn, i, j);
            if let Some(f) = force {
                b[r] += f[r] * ir;
            }
        }
    }
    a.lu().solve(&b).expect("dense momentum solve")
}

/// Dense convective derivative of the extrapolated velocity at interior rows.
pub fn dense_convective(dg: &DenseGrid, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (adx, ady) = (0.5 / dg.dx, 0.5 / dg.dy);
    let mut cu = vec![0.0; dg.n()];
    let mut cv = vec![0.0; dg.n()];
    for j in 1..(dg.ny - 1) as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            let ux = (u[dg.col(i + 1, j)] - u[dg.col(i - 1, j)]) * adx;
            let uy = (u[dg.col(i, j + 1)] - u[dg.col(i, j - 1)]) * ady;
            let vx = (v[dg.col(i + 1, j)] - v[dg.col(i - 1, j)]) * adx;
            let vy = (v[dg.col(i, j + 1)] - v[dg.col(i, j - 1)]) * ady;
            cu[r] = u[r] * ux + v[r] * uy;
            cv[r] = u[r] * vx + v[r] * vy;
        }
    }
    (cu, cv)
}

/// Dense pressure operator: -div((1/rho) grad p) as the central composition,
/// wall rows weighted by 1/2 (see the production assembly).
pub fn dense_pressure_operator(dg: &DenseGrid, rho: &[f64]) -> DMatrix<f64> {
    let n = dg.n();
    let rx4 = 0.25 / (dg.dx * dg.dx);
    let ry4 = 0.25 / (dg.dy * dg.dy);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            let w = if j == 0 || j == (dg.ny - 1) as isize {
                0.5
            } else {
                1.0
            };
            let axp = w / rho[dg.col(i + 1, j)];
            let axm = w / rho[dg.col(i - 1, j)];
            let ayp = w / rho[dg.col(i, j + 1)];
            let aym = w / rho[dg.col(i, j - 1)];
            a[(r, r)] += (axp + axm) * rx4 + (ayp + aym) * ry4;
            a[(r, dg.col(i + 2, j))] -= axp * rx4;
            a[(r, dg.col(i - 2, j))] -= axm * rx4;
            a[(r, dg.col(i, j + 2))] -= ayp * ry4;
            a[(r, dg.col(i, j - 2))] -= aym * ry4;
        }
    }
    a
}

/// Dense projection right-hand side with the reflected, half-weighted wall
/// rows.
pub fn dense_projection_rhs(dg: &DenseGrid, u: &[f64], v: &[f64]) -> DVector<f64> {
    let (adx, ady) = (0.5 / dg.dx, 0.5 / dg.dy);
    let mut b = DVector::<f64>::zeros(dg.n());
    for j in 0..dg.ny as isize {
        for i in 0..dg.nxu as isize {
            let r = dg.col(i, j);
            let ddx = (u[dg.col(i + 1, j)] - u[dg.col(i - 1, j)]) * adx;
            b[r] = if j == 0 {
                0.5 * (ddx + 2.0 * v[dg.col(i, j + 1)] * ady)
            } else if j == (dg.ny - 1) as isize {
                0.5 * (ddx - 2.0 * v[dg.col(i, j - 1)] * ady)
            } else {
                ddx + (v[dg.col(i, j + 1)] - v[dg.col(i, j - 1)]) * ady
            };
        }
    }
    b
}

/// Minimum-norm least-squares solve via SVD, together with the null-space
/// basis (columns of V with relatively tiny singular values).
pub fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax;
    let mut x = DVector::<f64>::zeros(n);
    let mut null_cols = Vec::new();
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > tol {
            let coeff = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coeff;
        } else {
            null_cols.push(vt.row(k).transpose());
        }
    }
    let mut nullspace = DMatrix::<f64>::zeros(n, null_cols.len());
    for (k, col) in null_cols.iter().enumerate() {
        nullspace.set_column(k, col);
    }
    (x, nullspace)
}

/// Distance between two solutions of a singular system, measured in the
/// quotient space (null-space components removed from the difference).
pub fn diff_modulo_nullspace(a: &[f64], b: &[f64], nullspace: &DMatrix<f64>) -> f64 {
    let mut d = DVector::from_iterator(a.len(), a.iter().zip(b.iter()).map(|(x, y)| x - y));
    for k in 0..nullspace.ncols() {
        let col = nullspace.column(k);
        let proj = col.dot(&d);
        d -= col * proj;
    }
    d.amax()
}

/// Velocity pair with Dirichlet walls built from global closures.
pub fn velocity_pair(
    sub: Subdomain,
    comm: &Communicator,
    lid: (f64, f64),
    fu: impl Fn(usize, usize) -> f64,
    fv: impl Fn(usize, usize) -> f64,
) -> VectorField {
    let mut u = Field::new(
        sub,
        1,
        GhostPolicy::Dirichlet(0.0),
        GhostPolicy::Dirichlet(lid.0),
    );
    u.fill_from(fu);
    u.refresh(comm).unwrap();
    let mut v = Field::new(
        sub,
        1,
        GhostPolicy::Dirichlet(0.0),
        GhostPolicy::Dirichlet(lid.1),
    );
    v.fill_from(fv);
    v.refresh(comm).unwrap();
    VectorField::new(u, v)
}
