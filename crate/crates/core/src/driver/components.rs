//! Connected-component analysis of the thresholded biofilm field, used to
//! detect detachment events.

use crate::comm::{Communicator, ReduceOp};
use crate::mesh::{gather_global, Field, GridSpec};

/// 4-connectivity component count of {phi >= threshold} on the global grid,
/// periodic in x. Pure function of the gathered array.
pub fn count_components(global: &[f64], grid: &GridSpec, threshold: f64) -> usize {
    let nxu = grid.unique_nx();
    let ny = grid.ny();
    debug_assert_eq!(global.len(), nxu * ny);
    let mask: Vec<bool> = global.iter().map(|&v| v >= threshold).collect();
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let i = idx % nxu;
            let j = idx / nxu;
            let left = j * nxu + (i + nxu - 1) % nxu;
            let right = j * nxu + (i + 1) % nxu;
            let mut push = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            push(left);
            push(right);
            if j > 0 {
                push(idx - nxu);
            }
            if j + 1 < ny {
                push(idx + nxu);
            }
        }
    }
    count
}

/// Collective component count: gathers the field to rank 0, counts there and
/// broadcasts the result so every rank returns the same value.
pub fn connected_components(phi: &Field, threshold: f64, comm: &Communicator) -> usize {
    let global = gather_global(phi, comm);
    let local = if comm.rank() == 0 {
        count_components(&global, &phi.sub.grid, threshold) as f64
    } else {
        0.0
    };
    comm.allreduce_scalar(local, ReduceOp::Max) as usize
}

/// Narrowest horizontal occupancy of the thresholded field above the base
/// layer: for every row with y > base_height, count nodes at or above the
/// threshold; return the smallest nonzero count. `None` when nothing sits
/// above the base.
pub fn neck_width_nodes(
    global: &[f64],
    grid: &GridSpec,
    threshold: f64,
    base_height: f64,
) -> Option<usize> {
    let nxu = grid.unique_nx();
    let mut min_width: Option<usize> = None;
    for j in 0..grid.ny() {
        if grid.y(j) <= base_height {
            continue;
        }
        let width = (0..nxu)
            .filter(|&i| global[j * nxu + i] >= threshold)
            .count();
        if width > 0 {
            min_width = Some(min_width.map_or(width, |m| m.min(width)));
        }
    }
    min_width
}
