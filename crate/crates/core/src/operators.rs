//! Second-order central finite-difference calculus on [`Field`]s.
//!
//! Every operator reads ghost values (the caller must have exchanged and
//! filled them) and writes owned nodes only. Transport-style operators use
//! conservative flux forms so that discrete sums telescope exactly.

use crate::mesh::Field;

/// Velocity pair sharing one grid, decomposition and ghost width.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub u: Field,
    pub v: Field,
}

impl VectorField {
    pub fn new(u: Field, v: Field) -> VectorField {
        debug_assert_eq!(u.sub, v.sub);
        debug_assert_eq!(u.ghost_width(), v.ghost_width());
        VectorField { u, v }
    }
}

/// Node sample of a rank-2 tensor; for a rate-of-strain tensor xy == yx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorSample {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

/// Central gradient: (f_{i+1,j} - f_{i-1,j})/(2 dx), analogous in y.
pub fn grad(f: &Field) -> (Field, Field) {
    let sub = f.sub;
    let (rdx2, rdy2) = half_spacings(f);
    let mut gx = Field::scratch(sub);
    let mut gy = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            gx.set(i, j, (f.at(i + 1, j) - f.at(i - 1, j)) * rdx2);
            gy.set(i, j, (f.at(i, j + 1) - f.at(i, j - 1)) * rdy2);
        }
    }
    (gx, gy)
}

/// Central divergence of a vector field.
pub fn div(vf: &VectorField) -> Field {
    let sub = vf.u.sub;
    let (rdx2, rdy2) = half_spacings(&vf.u);
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let d = (vf.u.at(i + 1, j) - vf.u.at(i - 1, j)) * rdx2
                + (vf.v.at(i, j + 1) - vf.v.at(i, j - 1)) * rdy2;
            out.set(i, j, d);
        }
    }
    out
}

/// Five-point Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let sub = f.sub;
    let rdx2 = 1.0 / (sub.grid.dx() * sub.grid.dx());
    let rdy2 = 1.0 / (sub.grid.dy() * sub.grid.dy());
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let v = (f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j)) * rdx2
                + (f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1)) * rdy2;
            out.set(i, j, v);
        }
    }
    out
}

/// Conservative variable-coefficient diffusion div(a grad f) with arithmetic
/// face means a_{i+1/2} = (a_i + a_{i+1})/2.
pub fn div_coeff_grad(a: &Field, f: &Field) -> Field {
    let sub = f.sub;
    let rdx2 = 1.0 / (sub.grid.dx() * sub.grid.dx());
    let rdy2 = 1.0 / (sub.grid.dy() * sub.grid.dy());
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let axp = 0.5 * (a.at(i, j) + a.at(i + 1, j));
            let axm = 0.5 * (a.at(i, j) + a.at(i - 1, j));
            let ayp = 0.5 * (a.at(i, j) + a.at(i, j + 1));
            let aym = 0.5 * (a.at(i, j) + a.at(i, j - 1));
            let v = (axp * (f.at(i + 1, j) - f.at(i, j)) - axm * (f.at(i, j) - f.at(i - 1, j)))
                * rdx2
                + (ayp * (f.at(i, j + 1) - f.at(i, j)) - aym * (f.at(i, j) - f.at(i, j - 1)))
                    * rdy2;
            out.set(i, j, v);
        }
    }
    out
}

/// Conservative advection div(f v) in central form, with products taken at
/// the neighbor nodes.
pub fn advect(f: &Field, vf: &VectorField) -> Field {
    let sub = f.sub;
    let (rdx2, rdy2) = half_spacings(f);
    let mut out = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let v = (f.at(i + 1, j) * vf.u.at(i + 1, j) - f.at(i - 1, j) * vf.u.at(i - 1, j))
                * rdx2
                + (f.at(i, j + 1) * vf.v.at(i, j + 1) - f.at(i, j - 1) * vf.v.at(i, j - 1))
                    * rdy2;
            out.set(i, j, v);
        }
    }
    out
}

/// Non-conservative convective derivative (v . grad) v, component-wise.
pub fn convective_derivative(vf: &VectorField) -> (Field, Field) {
    let sub = vf.u.sub;
    let (rdx2, rdy2) = half_spacings(&vf.u);
    let mut cu = Field::scratch(sub);
    let mut cv = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let u = vf.u.at(i, j);
            let v = vf.v.at(i, j);
            cu.set(
                i,
                j,
                u * (vf.u.at(i + 1, j) - vf.u.at(i - 1, j)) * rdx2
                    + v * (vf.u.at(i, j + 1) - vf.u.at(i, j - 1)) * rdy2,
            );
            cv.set(
                i,
                j,
                u * (vf.v.at(i + 1, j) - vf.v.at(i - 1, j)) * rdx2
                    + v * (vf.v.at(i, j + 1) - vf.v.at(i, j - 1)) * rdy2,
            );
        }
    }
    (cu, cv)
}

/// Rate-of-strain tensor D = (grad v + grad v^T)/2 as (xx, xy, yy) fields;
/// the yx component equals xy by symmetry.
pub fn rate_of_strain(vf: &VectorField) -> (Field, Field, Field) {
    let sub = vf.u.sub;
    let (rdx2, rdy2) = half_spacings(&vf.u);
    let mut dxx = Field::scratch(sub);
    let mut dxy = Field::scratch(sub);
    let mut dyy = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let ux = (vf.u.at(i + 1, j) - vf.u.at(i - 1, j)) * rdx2;
            let uy = (vf.u.at(i, j + 1) - vf.u.at(i, j - 1)) * rdy2;
            let vx = (vf.v.at(i + 1, j) - vf.v.at(i - 1, j)) * rdx2;
            let vy = (vf.v.at(i, j + 1) - vf.v.at(i, j - 1)) * rdy2;
            dxx.set(i, j, ux);
            dxy.set(i, j, 0.5 * (uy + vx));
            dyy.set(i, j, vy);
        }
    }
    (dxx, dxy, dyy)
}

/// Tensor sample at one owned node.
pub fn rate_of_strain_at(vf: &VectorField, i: isize, j: isize) -> TensorSample {
    let (rdx2, rdy2) = half_spacings(&vf.u);
    let ux = (vf.u.at(i + 1, j) - vf.u.at(i - 1, j)) * rdx2;
    let uy = (vf.u.at(i, j + 1) - vf.u.at(i, j - 1)) * rdy2;
    let vx = (vf.v.at(i + 1, j) - vf.v.at(i - 1, j)) * rdx2;
    let vy = (vf.v.at(i, j + 1) - vf.v.at(i, j - 1)) * rdy2;
    TensorSample {
        xx: ux,
        xy: 0.5 * (uy + vx),
        yx: 0.5 * (uy + vx),
        yy: vy,
    }
}

/// Divergence of the phase stress tensor gamma1 * grad(phi) (x) grad(phi):
/// component k is sum_m d_m(gamma1 * d_k phi * d_m phi). Needs phi with
/// ghost width 2 (a gradient of gradient products).
pub fn phase_stress_div(phi: &Field, gamma1: f64) -> (Field, Field) {
    let sub = phi.sub;
    debug_assert!(phi.ghost_width() >= 2);
    let (rdx2, rdy2) = half_spacings(phi);
    // Gradients on the owned nodes plus a one-node ring, computed directly
    // from phi's width-2 ghosts.
    let mut gx = Field::scratch(sub);
    let mut gy = Field::scratch(sub);
    for j in -1..sub.owned_ny() as isize + 1 {
        for i in -1..sub.owned_nx() as isize + 1 {
            gx.set(i, j, (phi.at(i + 1, j) - phi.at(i - 1, j)) * rdx2);
            gy.set(i, j, (phi.at(i, j + 1) - phi.at(i, j - 1)) * rdy2);
        }
    }
    let mut sx = Field::scratch(sub);
    let mut sy = Field::scratch(sub);
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let txx = |i: isize, j: isize| gamma1 * gx.at(i, j) * gx.at(i, j);
            let txy = |i: isize, j: isize| gamma1 * gx.at(i, j) * gy.at(i, j);
            let tyy = |i: isize, j: isize| gamma1 * gy.at(i, j) * gy.at(i, j);
            sx.set(
                i,
                j,
                (txx(i + 1, j) - txx(i - 1, j)) * rdx2 + (txy(i, j + 1) - txy(i, j - 1)) * rdy2,
            );
            sy.set(
                i,
                j,
                (txy(i + 1, j) - txy(i - 1, j)) * rdx2 + (tyy(i, j + 1) - tyy(i, j - 1)) * rdy2,
            );
        }
    }
    (sx, sy)
}

/// Explicit remainder of a variable-viscosity stress divergence after the
/// principal part div(nu grad u) has been moved into an implicit operator:
/// component x gets dx(nu dx u) + dy(nu dx v), component y gets
/// dy(nu dy v) + dx(nu dy u). Principal-looking pieces use the conservative
/// face form; the cross pieces use central products, so all reads stay within
/// a one-node ring.
pub fn transpose_stress_div(nu: &Field, vf: &VectorField) -> (Field, Field) {
    let sub = vf.u.sub;
    let g = sub.grid;
    let rdx2sq = 1.0 / (g.dx() * g.dx());
    let rdy2sq = 1.0 / (g.dy() * g.dy());
    let (rdx2, rdy2) = half_spacings(&vf.u);
    let mut sx = Field::scratch(sub);
    let mut sy = Field::scratch(sub);
    let dxv = |i: isize, j: isize| (vf.v.at(i + 1, j) - vf.v.at(i - 1, j)) * rdx2;
    let dyu = |i: isize, j: isize| (vf.u.at(i, j + 1) - vf.u.at(i, j - 1)) * rdy2;
    for j in 0..sub.owned_ny() as isize {
        for i in 0..sub.owned_nx() as isize {
            let nxp = 0.5 * (nu.at(i, j) + nu.at(i + 1, j));
            let nxm = 0.5 * (nu.at(i, j) + nu.at(i - 1, j));
            let nyp = 0.5 * (nu.at(i, j) + nu.at(i, j + 1));
            let nym = 0.5 * (nu.at(i, j) + nu.at(i, j - 1));
            let face_x = (nxp * (vf.u.at(i + 1, j) - vf.u.at(i, j))
                - nxm * (vf.u.at(i, j) - vf.u.at(i - 1, j)))
                * rdx2sq;
            let cross_x = (nu.at(i, j + 1) * dxv(i, j + 1) - nu.at(i, j - 1) * dxv(i, j - 1)) * rdy2;
            sx.set(i, j, face_x + cross_x);
            let face_y = (nyp * (vf.v.at(i, j + 1) - vf.v.at(i, j))
                - nym * (vf.v.at(i, j) - vf.v.at(i, j - 1)))
                * rdy2sq;
            let cross_y = (nu.at(i + 1, j) * dyu(i + 1, j) - nu.at(i - 1, j) * dyu(i - 1, j)) * rdx2;
            sy.set(i, j, face_y + cross_y);
        }
    }
    (sx, sy)
}

#[inline]
fn half_spacings(f: &Field) -> (f64, f64) {
    let g = f.sub.grid;
    (0.5 / g.dx(), 0.5 / g.dy())
}
