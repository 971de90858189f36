//! Strong-scaling benchmark harness: fixed problem size, growing rank count.

use super::{RankSim, SimConfig};
use crate::comm::run_on_ranks;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub ranks: usize,
    pub grid_n: usize,
    pub steps: usize,
    pub wall_ms_per_step: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

impl ScalingRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.4},{:.4}",
            self.ranks,
            self.grid_n,
            self.steps,
            self.wall_ms_per_step,
            self.speedup,
            self.efficiency
        )
    }
}

/// Run the configured workload at each rank count and report per-step wall
/// time (median over timed steps), speedup and efficiency relative to the
/// first entry. Warmup steps are excluded and nothing is written inside the
/// timed region.
pub fn scaling_harness(cfg: &SimConfig, rank_counts: &[usize]) -> Result<Vec<ScalingRow>, String> {
    let grid_n = cfg.nx - 1;
    let mut rows: Vec<ScalingRow> = Vec::new();
    let mut base_ms: Option<(usize, f64)> = None;
    for &ranks in rank_counts {
        let results = run_on_ranks(ranks, |comm| -> Result<f64, String> {
            let mut sim = RankSim::new(cfg, comm).map_err(|e| e.to_string())?;
            for _ in 0..cfg.scaling.warmup {
                sim.step().map_err(|e| e.to_string())?;
            }
            sim.comm.barrier();
            let mut per_step = Vec::with_capacity(cfg.scaling.steps);
            for _ in 0..cfg.scaling.steps {
                let t0 = Instant::now();
                sim.step().map_err(|e| e.to_string())?;
                sim.comm.barrier();
                per_step.push(t0.elapsed().as_secs_f64() * 1e3);
            }
            per_step.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(per_step[per_step.len() / 2])
        });
        let ms = results.into_iter().next().unwrap()?;
        let (base_ranks, base) = *base_ms.get_or_insert((ranks, ms));
        let speedup = base / ms * base_ranks as f64;
        rows.push(ScalingRow {
            ranks,
            grid_n,
            steps: cfg.scaling.steps,
            wall_ms_per_step: ms,
            speedup,
            efficiency: speedup / ranks as f64,
        });
    }
    Ok(rows)
}
