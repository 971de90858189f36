//! Distributed sparse linear algebra on stencil-addressed matrices.
//!
//! Matrices are stored per owned node as (di, dj, value) offset entries, so
//! rows and columns are addressed in grid coordinates and never need a global
//! renumbering. Offsets that cross the periodic seam or a mirror wall resolve
//! through the ghost layers of the vector being multiplied.

use crate::comm::{ksum, Communicator, ReduceOp};
use crate::error::{AssemblyError, LinsolveError};
use crate::mesh::{Field, Subdomain};

/// One matrix entry addressed by its grid offset from the row node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub di: i32,
    pub dj: i32,
    pub val: f64,
}

impl Stencil {
    pub fn new(di: i32, dj: i32, val: f64) -> Stencil {
        Stencil { di, dj, val }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nullspace {
    NoneSpace,
    /// The operator annihilates constant fields; the right-hand side is
    /// projected to zero mean and solutions are returned zero-mean.
    Constants,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_iters: usize,
    pub restart: usize,
    pub preconditioner: Preconditioner,
    pub nullspace: Nullspace,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-8,
            atol: 1e-12,
            max_iters: 500,
            restart: 30,
            preconditioner: Preconditioner::Jacobi,
            nullspace: Nullspace::NoneSpace,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err("solver tolerances must be positive".into());
        }
        if self.restart < 1 {
            return Err("restart length must be at least 1".into());
        }
        Ok(())
    }
}

/// Outcome of a linear solve. `converged` asserts that the residual,
/// recomputed from scratch in the left-preconditioned norm (the plain
/// residual when no preconditioner is active), satisfies
/// max(rtol*||M^-1 b||, atol).
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Sparse operator distributed conformally with a subdomain. Row order is the
/// canonical owned order (j-major, i fastest).
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    sub: Subdomain,
    width: usize,
    stride: usize,
    row_ptr: Vec<u32>,
    offsets: Vec<i32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    diag_present: Vec<bool>,
}

impl StencilMatrix {
    /// Assemble from a stream of (global node, entries). Every owned row must
    /// appear exactly once (insert semantics) and offsets may not reach past
    /// the ghost width the matrix is built for.
    pub fn assemble(
        sub: Subdomain,
        width: usize,
        rows: impl IntoIterator<Item = ((usize, usize), Vec<Stencil>)>,
    ) -> Result<StencilMatrix, AssemblyError> {
        assert!(width == 1 || width == 2);
        let onx = sub.owned_nx();
        let ony = sub.owned_ny();
        let n = onx * ony;
        let mut slots: Vec<Option<Vec<Stencil>>> = vec![None; n];
        for ((gi, gj), entries) in rows {
            if gi < sub.ix_lo || gi >= sub.ix_hi || gj < sub.jy_lo || gj >= sub.jy_hi {
                return Err(AssemblyError::RowNotOwned { i: gi, j: gj });
            }
            for e in &entries {
                if e.di.unsigned_abs() as usize > width || e.dj.unsigned_abs() as usize > width {
                    return Err(AssemblyError::OffsetBeyondGhost {
                        i: gi,
                        j: gj,
                        di: e.di,
                        dj: e.dj,
                        width,
                    });
                }
            }
            let r = (gj - sub.jy_lo) * onx + (gi - sub.ix_lo);
            if slots[r].is_some() {
                return Err(AssemblyError::DuplicateRow { i: gi, j: gj });
            }
            slots[r] = Some(entries);
        }
        let missing = slots.iter().filter(|s| s.is_none()).count();
        if missing > 0 {
            return Err(AssemblyError::MissingRows { missing });
        }
        let stride = onx + 2 * width;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut offsets = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        let mut diag_present = vec![false; n];
        row_ptr.push(0);
        for (r, slot) in slots.into_iter().enumerate() {
            for e in slot.unwrap() {
                offsets.push(e.dj * stride as i32 + e.di);
                vals.push(e.val);
                if e.di == 0 && e.dj == 0 {
                    diag[r] += e.val;
                    diag_present[r] = true;
                }
            }
            row_ptr.push(offsets.len() as u32);
        }
        Ok(StencilMatrix {
            sub,
            width,
            stride,
            row_ptr,
            offsets,
            vals,
            diag,
            diag_present,
        })
    }

    pub fn sub(&self) -> &Subdomain {
        &self.sub
    }

    pub fn ghost_width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.sub.owned_nodes()
    }

    /// y = A x over owned rows. Refreshes x's communicated halos and mirror
    /// images first (Dirichlet pinning is an equation property, not a vector
    /// transform, so it is not applied here). Collective.
    pub fn matvec(
        &self,
        x: &mut Field,
        y: &mut Field,
        comm: &Communicator,
    ) -> Result<(), LinsolveError> {
        if x.ghost_width() != self.width {
            return Err(LinsolveError::Contract {
                matrix: self.width,
                field: x.ghost_width(),
            });
        }
        debug_assert_eq!(x.stride(), self.stride);
        x.refresh_linear(comm)?;
        let onx = self.sub.owned_nx();
        let ony = self.sub.owned_ny();
        let w = self.width;
        let xdata = x.data();
        let mut r = 0usize;
        for j in 0..ony {
            let mut base = (j + w) * self.stride + w;
            for _i in 0..onx {
                let lo = self.row_ptr[r] as usize;
                let hi = self.row_ptr[r + 1] as usize;
                let mut acc = 0.0;
                for k in lo..hi {
                    let col = (base as isize + self.offsets[k] as isize) as usize;
                    acc += self.vals[k] * xdata[col];
                }
                let k = y.idx(_i as isize, j as isize);
                y.data_mut()[k] = acc;
                base += 1;
                r += 1;
            }
        }
        Ok(())
    }

    fn check_diag(&self) -> Result<(), LinsolveError> {
        for (r, (&d, &p)) in self.diag.iter().zip(self.diag_present.iter()).enumerate() {
            if !p || d == 0.0 {
                return Err(LinsolveError::Preconditioner { row: r });
            }
        }
        Ok(())
    }
}

/// Diagonal (Jacobi) application z = r / diag(A).
pub fn jacobi_apply(a: &StencilMatrix, r: &Field) -> Result<Field, LinsolveError> {
    a.check_diag()?;
    let mut z = r.clone();
    let onx = a.sub.owned_nx() as isize;
    let ony = a.sub.owned_ny() as isize;
    let mut row = 0usize;
    for j in 0..ony {
        for i in 0..onx {
            let v = r.at(i, j) / a.diag[row];
            z.set(i, j, v);
            row += 1;
        }
    }
    Ok(z)
}

/// Remove the constant component: b' = b - mean(b) over unique nodes.
/// Collective.
pub fn nullspace_project(b: &mut Field, comm: &Communicator) {
    let total = comm.allreduce_scalar(ksum(b.owned_iter()), ReduceOp::Sum);
    let mean = total / b.sub.grid.unique_nodes() as f64;
    b.map_owned(|v| v - mean);
}

struct VecOps<'a> {
    comm: &'a Communicator,
}

impl<'a> VecOps<'a> {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let local = ksum(a.iter().zip(b.iter()).map(|(&x, &y)| x * y));
        self.comm.allreduce_scalar(local, ReduceOp::Sum)
    }

    fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }
}

fn owned_vec(f: &Field) -> Vec<f64> {
    f.owned_iter().collect()
}

fn store_owned(f: &mut Field, v: &[f64]) {
    let onx = f.sub.owned_nx();
    let ony = f.sub.owned_ny();
    let mut n = 0;
    for j in 0..ony as isize {
        for i in 0..onx as isize {
            f.set(i, j, v[n]);
            n += 1;
        }
    }
}

fn project_constant(v: &mut [f64], unique: usize, comm: &Communicator) {
    let mean = comm.allreduce_scalar(ksum(v.iter().copied()), ReduceOp::Sum) / unique as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Restarted GMRES with modified Gram-Schmidt, left preconditioning and
/// optional constant-null-space removal, starting from zero.
pub fn gmres_solve(
    a: &StencilMatrix,
    b: &Field,
    cfg: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), LinsolveError> {
    gmres_impl(a, b, None, cfg, comm)
}

/// Same solver, warm-started from `x0` (used by the time loop, where the
/// previous step's solution is an excellent initial guess).
pub fn gmres_solve_with_guess(
    a: &StencilMatrix,
    b: &Field,
    x0: &Field,
    cfg: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), LinsolveError> {
    gmres_impl(a, b, Some(x0), cfg, comm)
}

fn gmres_impl(
    a: &StencilMatrix,
    b: &Field,
    x0: Option<&Field>,
    cfg: &SolverConfig,
    comm: &Communicator,
) -> Result<(Field, SolveReport), LinsolveError> {
    let jacobi = cfg.preconditioner == Preconditioner::Jacobi;
    if jacobi {
        a.check_diag()?;
    }
    let constants = cfg.nullspace == Nullspace::Constants;
    let unique = a.sub.grid.unique_nodes();
    let ops = VecOps { comm };
    let n = a.rows();

    let mut bvec = owned_vec(b);
    if constants {
        project_constant(&mut bvec, unique, comm);
    }
    let bnorm = ops.norm(&bvec);
    let mut out = b.clone();
    if bnorm == 0.0 {
        out.fill(0.0);
        return Ok((
            out,
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    // Ghosted scratch for operator input, sharing b's policies so mirror
    // walls act on Krylov vectors exactly as they act on the solution.
    let mut xin = b.clone();
    let mut yout = b.clone();
    let apply =
        |v: &[f64], xin: &mut Field, yout: &mut Field| -> Result<Vec<f64>, LinsolveError> {
            store_owned(xin, v);
            a.matvec(xin, yout, comm)?;
            Ok(owned_vec(yout))
        };
    let precond = |v: Vec<f64>| -> Vec<f64> {
        if jacobi {
            v.iter().zip(a.diag.iter()).map(|(x, d)| x / d).collect()
        } else {
            v
        }
    };

    let mut x: Vec<f64> = match x0 {
        Some(f) => owned_vec(f),
        None => vec![0.0; n],
    };
    if constants && x0.is_some() {
        project_constant(&mut x, unique, comm);
    }

    let pbnorm = {
        let pb = precond(bvec.clone());
        ops.norm(&pb)
    };
    let trace = std::env::var_os("BIOFILM2D_GMRES_TRACE").is_some();
    // Convergence is tested on the preconditioned residual (recomputed from
    // scratch each cycle, never the running estimate). This is the norm in
    // which badly row-scaled systems remain solvable in f64.
    let target = (cfg.rtol * pbnorm).max(cfg.atol);
    let mut trigger = target;
    let mut iterations = 0usize;
    let mut residual;

    loop {
        let ax = apply(&x, &mut xin, &mut yout)?;
        let r: Vec<f64> = bvec.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
        let z = precond(r);
        let beta = ops.norm(&z);
        residual = beta;
        if trace {
            eprintln!("gmres cycle: iters={iterations} outer_prec_res={residual:e} target={target:e}");
        }
        if residual <= target {
            if constants {
                project_constant(&mut x, unique, comm);
            }
            store_owned(&mut out, &x);
            return Ok((
                out,
                SolveReport {
                    iterations,
                    residual,
                    converged: true,
                },
            ));
        }
        if iterations >= cfg.max_iters {
            break;
        }
        if beta == 0.0 {
            break;
        }
        let m = cfg.restart;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(z.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0usize;
        let mut inner_triggered = false;
        while k < m && iterations < cfg.max_iters {
            let mut w = precond(apply(&basis[k], &mut xin, &mut yout)?);
            iterations += 1;
            for i in 0..=k {
                let hik = ops.dot(&w, &basis[i]);
                h[i][k] = hik;
                w.iter_mut()
                    .zip(basis[i].iter())
                    .for_each(|(wv, bv)| *wv -= hik * bv);
            }
            let hk1 = ops.norm(&w);
            h[k + 1][k] = hk1;
            let breakdown = hk1 < 1e-300 || !hk1.is_finite();
            if !breakdown {
                basis.push(w.iter().map(|v| v / hk1).collect());
            }
            // Givens update of the Hessenberg column and residual estimate.
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k += 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            let res_est = g[k].abs();
            if breakdown {
                break;
            }
            if res_est <= trigger {
                inner_triggered = true;
                break;
            }
        }
        if k > 0 {
            // Back-substitute y from the rotated Hessenberg system.
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let mut s = g[i];
                for l in i + 1..k {
                    s -= h[i][l] * y[l];
                }
                y[i] = s / h[i][i];
            }
            for (l, yl) in y.iter().enumerate() {
                x.iter_mut()
                    .zip(basis[l].iter())
                    .for_each(|(xv, bv)| *xv += yl * bv);
            }
        }
        if constants {
            project_constant(&mut x, unique, comm);
        }
        // If the preconditioned estimate claimed convergence but the true
        // residual disagrees, tighten the inner trigger before the next cycle.
        if inner_triggered {
            trigger *= 0.1;
        }
    }

    if constants {
        project_constant(&mut x, unique, comm);
    }
    let ax = apply(&x, &mut xin, &mut yout)?;
    let r: Vec<f64> = bvec.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
    residual = ops.norm(&precond(r));
    store_owned(&mut out, &x);
    Ok((
        out,
        SolveReport {
            iterations,
            residual,
            converged: residual <= target,
        },
    ))
}
