//! Initial-condition construction.

use super::config::{IcVariant, InitialCondition};
use crate::comm::Communicator;
use crate::flow::{FlowParams, FlowState};
use crate::mesh::{Field, Subdomain};
use crate::transport::{nutrient_field, phi_field, PhiHistory};

/// Deterministic per-node noise in [-1, 1), independent of the
/// decomposition: a splitmix64 hash of (seed, global node id).
pub fn node_noise(seed: u64, gi: usize, gj: usize, nxu: usize) -> f64 {
    let id = (gj * nxu + gi) as u64;
    let mut z = seed ^ id.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    let unit = (z >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * unit - 1.0
}

/// Smoothed indicator: a tanh profile of the signed distance (in smoothing
/// widths), rescaled so the plateau values are exactly 0 and 1. The plateau
/// is reached once the signed distance exceeds about 2.65 widths.
fn smooth_step(signed_distance: f64, width: f64) -> f64 {
    const TRIM: f64 = 5e-3;
    let t = 0.5 * (1.0 + (signed_distance / width).tanh());
    ((t - TRIM) / (1.0 - 2.0 * TRIM)).clamp(0.0, 1.0)
}

fn mushroom_phi(ic: &InitialCondition, x: f64, y: f64) -> f64 {
    let w = ic.smoothing;
    // base layer occupying y < base_height
    let mut phi = ic.phi_bulk * smooth_step(ic.base_height - y, w);
    for &(cx, cy) in &ic.caps {
        // cap disk
        let d = ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt();
        phi = phi.max(ic.phi_bulk * smooth_step(ic.cap_radius - d, w));
        // neck rectangle joining base to cap center; it reaches well into the
        // base so its plateau is complete before the base profile fades
        let y0 = ic.base_height - 5.0 * w;
        let y1 = cy;
        let sd = (0.5 * ic.neck_width - (x - cx).abs())
            .min(y - y0)
            .min(y1 - y);
        phi = phi.max(ic.phi_neck * smooth_step(sd, w));
    }
    phi
}

/// Build (phi history, nutrient, flow state) on this rank's subdomain.
/// Collective (ghost refreshes).
pub fn build_initial_condition(
    ic: &InitialCondition,
    sub: Subdomain,
    fp: &FlowParams,
    comm: &Communicator,
) -> (PhiHistory, Field, FlowState) {
    let g = sub.grid;
    let mut phi = phi_field(sub);
    match ic.variant {
        IcVariant::UniformPerturbed => {
            phi.fill_from(|gi, gj| {
                ic.phi_mean + ic.amplitude * node_noise(ic.seed, gi, gj, g.unique_nx())
            });
        }
        IcVariant::BaseLayer => {
            phi.fill_from(|_, gj| {
                ic.phi_bulk * smooth_step(ic.base_height - g.y(gj), ic.smoothing)
            });
        }
        IcVariant::MushroomPair => {
            phi.fill_from(|gi, gj| mushroom_phi(ic, g.x(gi), g.y(gj)));
        }
    }
    phi.refresh(comm).expect("initial phi ghosts");
    let mut c = nutrient_field(sub);
    c.fill(ic.c_init);
    c.refresh(comm).expect("initial nutrient ghosts");
    let flow = FlowState::quiescent(sub, fp, comm);
    (PhiHistory::fresh(phi), c, flow)
}
