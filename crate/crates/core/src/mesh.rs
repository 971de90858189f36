//! Structured grid, domain decomposition and ghost-layer machinery.
//!
//! The domain is the unit square, discretized by nodes (x_i, y_j) =
//! (i*dx, j*dy). The x direction is periodic: column nx-1 is identified with
//! column 0, so arrays store nx-1 unique columns and the seam is never owned
//! twice. The y direction is bounded by physical walls at j = 0 and
//! j = ny - 1.

use crate::comm::{Communicator, ReduceOp, Tag, TAG_HALO_X, TAG_HALO_Y};
use crate::error::MeshError;

/// Global grid description. `nx`/`ny` are node counts per direction; spacing
/// follows as 1/(n-1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize) -> Result<GridSpec, MeshError> {
        if nx < 8 || ny < 8 {
            return Err(MeshError::Contract(format!(
                "grid must be at least 8x8 nodes, got {nx}x{ny}"
            )));
        }
        Ok(GridSpec { nx, ny })
    }

    /// Grid with `n` spatial intervals per direction (n+1 nodes).
    pub fn from_intervals(n: usize) -> Result<GridSpec, MeshError> {
        GridSpec::new(n + 1, n + 1)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of unique (stored) columns; the periodic seam column nx-1 is an
    /// alias of column 0.
    pub fn unique_nx(&self) -> usize {
        self.nx - 1
    }

    pub fn unique_nodes(&self) -> usize {
        self.unique_nx() * self.ny
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    /// Wrap a signed unique-column index into [0, unique_nx).
    pub fn wrap_x(&self, i: isize) -> usize {
        let n = self.unique_nx() as isize;
        (((i % n) + n) % n) as usize
    }
}

/// Ghost handling at a physical wall edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GhostPolicy {
    /// Zero-normal-gradient images: f(i,-k) = f(i,k).
    EvenMirror,
    /// Pin the wall-node row to a prescribed value; ghost rows beyond the
    /// wall are zeroed and must not be read by stencils.
    Dirichlet(f64),
    /// No fill; stencils must not read past this wall.
    None,
}

/// One rank's owned patch of the grid plus neighbor topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdomain {
    pub grid: GridSpec,
    pub rank: usize,
    pub ranks: usize,
    /// Rank-grid extents and this rank's coordinates in it.
    pub px: usize,
    pub py: usize,
    pub rx: usize,
    pub ry: usize,
    /// Owned global ranges, [lo, hi), in unique-column index space.
    pub ix_lo: usize,
    pub ix_hi: usize,
    pub jy_lo: usize,
    pub jy_hi: usize,
    /// x neighbors always exist (periodic ring; may be self when px = 1).
    pub left: usize,
    pub right: usize,
    /// y neighbors; `None` marks a physical wall.
    pub down: Option<usize>,
    pub up: Option<usize>,
}

impl Subdomain {
    pub fn owned_nx(&self) -> usize {
        self.ix_hi - self.ix_lo
    }

    pub fn owned_ny(&self) -> usize {
        self.jy_hi - self.jy_lo
    }

    pub fn owned_nodes(&self) -> usize {
        self.owned_nx() * self.owned_ny()
    }

    pub fn touches_bottom(&self) -> bool {
        self.jy_lo == 0
    }

    pub fn touches_top(&self) -> bool {
        self.jy_hi == self.grid.ny()
    }

    /// Global coordinates of an owned local node.
    pub fn global(&self, i: usize, j: usize) -> (usize, usize) {
        (self.ix_lo + i, self.jy_lo + j)
    }
}

fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let rem = n % parts;
    (0..parts)
        .map(|r| base + usize::from(r < rem))
        .collect()
}

/// Partition the grid over `ranks` ranks as a Cartesian rank grid.
///
/// Candidates (px, py) with px*py = ranks are filtered for feasibility (every
/// owned extent must fit a width-2 halo in split directions), then scored by
/// squareness, total halo traffic, and finally a preference for more ranks
/// along the periodic direction.
pub fn decompose(spec: &GridSpec, ranks: usize) -> Result<Vec<Subdomain>, MeshError> {
    if ranks == 0 {
        return Err(MeshError::Decomposition {
            nx: spec.unique_nx(),
            ny: spec.ny(),
            ranks,
            reason: "need at least one rank".into(),
        });
    }
    let nxu = spec.unique_nx();
    let ny = spec.ny();

    let mut best: Option<(usize, usize, (usize, usize, isize))> = None;
    for px in 1..=ranks {
        if ranks % px != 0 {
            continue;
        }
        let py = ranks / px;
        // A split direction must give every rank at least 2 owned nodes so a
        // width-2 halo never spans past the immediate neighbor.
        if px > 1 && nxu / px < 2 {
            continue;
        }
        if py > 1 && ny / py < 2 {
            continue;
        }
        let halo = if px > 1 { px * ny } else { 0 } + if py > 1 { (py - 1) * nxu } else { 0 };
        let score = (px.abs_diff(py), halo, -(px as isize));
        if best.map_or(true, |(_, _, s)| score < s) {
            best = Some((px, py, score));
        }
    }
    let (px, py) = match best {
        Some((px, py, _)) => (px, py),
        None => {
            return Err(MeshError::Decomposition {
                nx: nxu,
                ny,
                ranks,
                reason: "more ranks than the grid can host with width-2 halos".into(),
            })
        }
    };

    let xs = split_sizes(nxu, px);
    let ys = split_sizes(ny, py);
    let mut subs = Vec::with_capacity(ranks);
    let mut j_lo = 0;
    for ry in 0..py {
        let mut i_lo = 0;
        for rx in 0..px {
            let rank = ry * px + rx;
            subs.push(Subdomain {
                grid: *spec,
                rank,
                ranks,
                px,
                py,
                rx,
                ry,
                ix_lo: i_lo,
                ix_hi: i_lo + xs[rx],
                jy_lo: j_lo,
                jy_hi: j_lo + ys[ry],
                left: ry * px + (rx + px - 1) % px,
                right: ry * px + (rx + 1) % px,
                down: if ry > 0 { Some((ry - 1) * px + rx) } else { None },
                up: if ry + 1 < py { Some((ry + 1) * px + rx) } else { None },
            });
            i_lo += xs[rx];
        }
        j_lo += ys[ry];
    }
    Ok(subs)
}

/// Rank-local scalar array over owned nodes plus ghost layers.
#[derive(Debug, Clone)]
pub struct Field {
    pub sub: Subdomain,
    width: usize,
    stride: usize,
    pub bottom: GhostPolicy,
    pub top: GhostPolicy,
    data: Vec<f64>,
}

impl Field {
    pub fn new(sub: Subdomain, width: usize, bottom: GhostPolicy, top: GhostPolicy) -> Field {
        assert!(width == 1 || width == 2, "supported ghost widths are 1 and 2");
        let stride = sub.owned_nx() + 2 * width;
        let rows = sub.owned_ny() + 2 * width;
        Field {
            sub,
            width,
            stride,
            bottom,
            top,
            data: vec![0.0; stride * rows],
        }
    }

    /// Plain scratch field: width 1, no wall policies.
    pub fn scratch(sub: Subdomain) -> Field {
        Field::new(sub, 1, GhostPolicy::None, GhostPolicy::None)
    }

    pub fn ghost_width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn idx(&self, i: isize, j: isize) -> usize {
        debug_assert!(i >= -(self.width as isize) && i < (self.sub.owned_nx() + self.width) as isize);
        debug_assert!(j >= -(self.width as isize) && j < (self.sub.owned_ny() + self.width) as isize);
        let w = self.width as isize;
        ((j + w) * self.stride as isize + (i + w)) as usize
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Set owned nodes from a function of the global (unique) node index.
    pub fn fill_from(&mut self, f: impl Fn(usize, usize) -> f64) {
        for j in 0..self.sub.owned_ny() {
            for i in 0..self.sub.owned_nx() {
                let (gi, gj) = self.sub.global(i, j);
                self.set(i as isize, j as isize, f(gi, gj));
            }
        }
    }

    /// Apply `f` to every owned value.
    pub fn map_owned(&mut self, mut f: impl FnMut(f64) -> f64) {
        for j in 0..self.sub.owned_ny() as isize {
            for i in 0..self.sub.owned_nx() as isize {
                let k = self.idx(i, j);
                self.data[k] = f(self.data[k]);
            }
        }
    }

    pub fn owned_iter(&self) -> impl Iterator<Item = f64> + '_ {
        let onx = self.sub.owned_nx() as isize;
        let ony = self.sub.owned_ny() as isize;
        (0..ony).flat_map(move |j| (0..onx).map(move |i| self.at(i, j)))
    }

    /// Copy owned values from another field of the same shape (ghosts left
    /// untouched).
    pub fn copy_owned_from(&mut self, other: &Field) {
        debug_assert_eq!(self.sub, other.sub);
        for j in 0..self.sub.owned_ny() as isize {
            for i in 0..self.sub.owned_nx() as isize {
                let k = self.idx(i, j);
                self.data[k] = other.at(i, j);
            }
        }
    }

    fn tag(base: Tag, width: usize, phase: u32) -> Tag {
        base | ((width as u32) << 8) | (phase << 16)
    }

    /// Exchange interior/periodic halos with neighbor ranks. Physical wall
    /// edges are left untouched (see [`Field::fill_physical_ghosts`]).
    ///
    /// Collective: every rank must call this with fields of identical ghost
    /// width. The two-phase (x then y including x-ghosts) protocol fills the
    /// corner ghosts needed by diagonal stencil entries.
    pub fn halo_exchange(&mut self, comm: &Communicator) -> Result<(), MeshError> {
        let w = self.width;
        let onx = self.sub.owned_nx() as isize;
        let ony = self.sub.owned_ny() as isize;
        let wrap = |e: crate::error::CommError| MeshError::Contract(e.to_string());

        // Phase 1: x direction, owned rows only.
        if self.sub.px == 1 {
            for j in 0..ony {
                for k in 0..w as isize {
                    let left_src = self.at(onx - w as isize + k, j);
                    self.set(-(w as isize) + k, j, left_src);
                    let right_src = self.at(k, j);
                    self.set(onx + k, j, right_src);
                }
            }
        } else {
            let col_block = |f: &Field, i0: isize| -> Vec<f64> {
                let mut buf = Vec::with_capacity(w * ony as usize);
                for j in 0..ony {
                    for k in 0..w as isize {
                        buf.push(f.at(i0 + k, j));
                    }
                }
                buf
            };
            // Sub-exchange 1: send rightmost owned block right, fill left ghosts.
            let t1 = Self::tag(TAG_HALO_X, w, 1);
            comm.send(self.sub.right, t1, col_block(self, onx - w as isize));
            let from_left = comm.recv(self.sub.left, t1).map_err(wrap)?;
            // Sub-exchange 2: send leftmost owned block left, fill right ghosts.
            let t2 = Self::tag(TAG_HALO_X, w, 2);
            comm.send(self.sub.left, t2, col_block(self, 0));
            let from_right = comm.recv(self.sub.right, t2).map_err(wrap)?;
            let mut n = 0;
            for j in 0..ony {
                for k in 0..w as isize {
                    self.set(-(w as isize) + k, j, from_left[n]);
                    self.set(onx + k, j, from_right[n]);
                    n += 1;
                }
            }
        }

        // Phase 2: y direction, full rows including freshly filled x-ghosts.
        if self.sub.py > 1 {
            let row_block = |f: &Field, j0: isize| -> Vec<f64> {
                let mut buf = Vec::with_capacity(w * f.stride);
                for k in 0..w as isize {
                    for i in -(w as isize)..onx + w as isize {
                        buf.push(f.at(i, j0 + k));
                    }
                }
                buf
            };
            let t1 = Self::tag(TAG_HALO_Y, w, 1);
            let t2 = Self::tag(TAG_HALO_Y, w, 2);
            // Send top rows up / receive bottom ghosts, then the reverse.
            let from_down = match self.sub.up {
                Some(up) => {
                    let msg = row_block(self, ony - w as isize);
                    comm.send(up, t1, msg);
                    match self.sub.down {
                        Some(down) => Some(comm.recv(down, t1).map_err(wrap)?),
                        None => None,
                    }
                }
                None => match self.sub.down {
                    Some(down) => Some(comm.recv(down, t1).map_err(wrap)?),
                    None => None,
                },
            };
            let from_up = match self.sub.down {
                Some(down) => {
                    comm.send(down, t2, row_block(self, 0));
                    match self.sub.up {
                        Some(up) => Some(comm.recv(up, t2).map_err(wrap)?),
                        None => None,
                    }
                }
                None => match self.sub.up {
                    Some(up) => Some(comm.recv(up, t2).map_err(wrap)?),
                    None => None,
                },
            };
            if let Some(buf) = from_down {
                let mut n = 0;
                for k in 0..w as isize {
                    for i in -(w as isize)..onx + w as isize {
                        self.set(i, -(w as isize) + k, buf[n]);
                        n += 1;
                    }
                }
            }
            if let Some(buf) = from_up {
                let mut n = 0;
                for k in 0..w as isize {
                    for i in -(w as isize)..onx + w as isize {
                        self.set(i, ony + k, buf[n]);
                        n += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Fill ghost rows at physical walls according to the edge policies.
    /// Mirror images satisfy f(i,-k) = f(i,k) about the wall node; Dirichlet
    /// pins the wall-node row itself.
    pub fn fill_physical_ghosts(&mut self) {
        let w = self.width as isize;
        let onx = self.sub.owned_nx() as isize;
        let ony = self.sub.owned_ny() as isize;
        if self.sub.touches_bottom() {
            match self.bottom {
                GhostPolicy::EvenMirror => {
                    for k in 1..=w {
                        for i in -w..onx + w {
                            let v = self.at(i, k);
                            self.set(i, -k, v);
                        }
                    }
                }
                GhostPolicy::Dirichlet(v) => {
                    for i in -w..onx + w {
                        self.set(i, 0, v);
                    }
                    for k in 1..=w {
                        for i in -w..onx + w {
                            self.set(i, -k, 0.0);
                        }
                    }
                }
                GhostPolicy::None => {}
            }
        }
        if self.sub.touches_top() {
            match self.top {
                GhostPolicy::EvenMirror => {
                    for k in 1..=w {
                        for i in -w..onx + w {
                            let v = self.at(i, ony - 1 - k);
                            self.set(i, ony - 1 + k, v);
                        }
                    }
                }
                GhostPolicy::Dirichlet(v) => {
                    for i in -w..onx + w {
                        self.set(i, ony - 1, v);
                    }
                    for k in 1..=w {
                        for i in -w..onx + w {
                            self.set(i, ony - 1 + k, 0.0);
                        }
                    }
                }
                GhostPolicy::None => {}
            }
        }
    }

    /// Halo exchange plus wall fill; the standard pre-stencil refresh.
    pub fn refresh(&mut self, comm: &Communicator) -> Result<(), MeshError> {
        self.halo_exchange(comm)?;
        self.fill_physical_ghosts();
        Ok(())
    }

    /// Refresh for linear-operator application: exchanges halos and fills
    /// mirror images, but skips Dirichlet pinning (boundary conditions enter
    /// linear systems through their matrix rows, not by mutating the vector).
    pub fn refresh_linear(&mut self, comm: &Communicator) -> Result<(), MeshError> {
        self.halo_exchange(comm)?;
        let w = self.width as isize;
        let onx = self.sub.owned_nx() as isize;
        let ony = self.sub.owned_ny() as isize;
        if self.sub.touches_bottom() && self.bottom == GhostPolicy::EvenMirror {
            for k in 1..=w {
                for i in -w..onx + w {
                    let v = self.at(i, k);
                    self.set(i, -k, v);
                }
            }
        }
        if self.sub.touches_top() && self.top == GhostPolicy::EvenMirror {
            for k in 1..=w {
                for i in -w..onx + w {
                    let v = self.at(i, ony - 1 - k);
                    self.set(i, ony - 1 + k, v);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Max,
    Min,
}

/// Reduce over owned (unique) nodes across all ranks. Collective. Sums use
/// compensated accumulation combined in fixed rank order, so a given
/// decomposition reproduces bitwise.
pub fn global_reduce(field: &Field, kind: ReduceKind, comm: &Communicator) -> f64 {
    let mut it = field.owned_iter();
    let local = match kind {
        ReduceKind::Sum => crate::comm::ksum(field.owned_iter()),
        ReduceKind::Max => it.by_ref().fold(f64::NEG_INFINITY, f64::max),
        ReduceKind::Min => it.by_ref().fold(f64::INFINITY, f64::min),
    };
    let op = match kind {
        ReduceKind::Sum => ReduceOp::Sum,
        ReduceKind::Max => ReduceOp::Max,
        ReduceKind::Min => ReduceOp::Min,
    };
    comm.allreduce_scalar(local, op)
}

/// Assemble the global unique-node array (row-major, i fastest) on rank 0.
/// Other ranks receive an empty vector. Collective.
pub fn gather_global(field: &Field, comm: &Communicator) -> Vec<f64> {
    let grid = field.sub.grid;
    let mut local = Vec::with_capacity(field.sub.owned_nodes());
    local.extend(field.owned_iter());
    let blocks = comm.gather(local);
    if comm.rank() != 0 {
        return Vec::new();
    }
    let subs = decompose(&grid, comm.size()).expect("gather on a valid decomposition");
    let nxu = grid.unique_nx();
    let mut global = vec![0.0; nxu * grid.ny()];
    for (sub, block) in subs.iter().zip(blocks.iter()) {
        let mut n = 0;
        for j in sub.jy_lo..sub.jy_hi {
            for i in sub.ix_lo..sub.ix_hi {
                global[j * nxu + i] = block[n];
                n += 1;
            }
        }
    }
    global
}
