//! Configuration, initial conditions, the outer time loop, diagnostics,
//! file output and the benchmark harness.

pub mod components;
pub mod config;
pub mod ic;
pub mod output;
pub mod scaling;

pub use components::{connected_components, count_components, neck_width_nodes};
pub use config::{
    load_config, parse_config, IcVariant, InitialCondition, RunMode, SimConfig,
};
pub use ic::build_initial_condition;
pub use output::{DiagnosticsRow, DIAGNOSTICS_HEADER, SCALING_HEADER};
pub use scaling::{scaling_harness, ScalingRow};

use crate::comm::{run_on_ranks, Communicator, ReduceOp};
use crate::error::StepError;
use crate::flow::{flow_step, max_interior_divergence, FlowState};
use crate::mesh::{decompose, gather_global, global_reduce, Field, ReduceKind, Subdomain};
use crate::transport::{ch_step, free_energy, nutrient_step, PhiHistory};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

/// Per-step iteration counts from the four linear systems.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub ch_iters: usize,
    pub nut_iters: usize,
    pub mom_iters: usize,
    pub prs_iters: usize,
}

/// One rank's share of a running simulation.
pub struct RankSim {
    pub cfg: SimConfig,
    pub comm: Communicator,
    pub sub: Subdomain,
    pub hist: PhiHistory,
    pub c: Field,
    pub flow: FlowState,
    pub step_index: usize,
}

impl RankSim {
    /// Decompose the grid and build initial conditions. Collective.
    pub fn new(cfg: &SimConfig, comm: Communicator) -> Result<RankSim, StepError> {
        let grid = cfg
            .grid()
            .map_err(|e| StepError::Domain(e.to_string()))?;
        let subs = decompose(&grid, comm.size()).map_err(|e| StepError::Domain(e.to_string()))?;
        let sub = subs[comm.rank()];
        let (hist, c, flow) = build_initial_condition(&cfg.ic, sub, &cfg.flow, &comm);
        Ok(RankSim {
            cfg: cfg.clone(),
            comm,
            sub,
            hist,
            c,
            flow,
            step_index: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    /// Advance one time step: network transport, nutrient transport, then
    /// momentum/projection. Collective; on error every rank sees the same
    /// failure (all error checks reduce globally).
    pub fn step(&mut self) -> Result<StepStats, StepError> {
        let cfg = &self.cfg;
        let profile = std::env::var_os("BIOFILM2D_STEP_PROFILE").is_some() && self.comm.rank() == 0;
        let mut mark = Instant::now();
        let mut lap = |name: &str, profile: bool| {
            if profile {
                eprintln!("  {name}: {:.0} ms", mark.elapsed().as_secs_f64() * 1e3);
            }
            mark = Instant::now();
        };
        let (phi_next, ch_rep) = ch_step(
            &self.hist,
            &self.flow.v,
            &self.c,
            &cfg.ch,
            cfg.dt,
            cfg.theta.ch,
            &cfg.solver_ch,
            &self.comm,
        )?;
        lap("ch", profile);
        let mut phi_next = phi_next;
        phi_next
            .refresh(&self.comm)
            .map_err(|e| StepError::Domain(e.to_string()))?;

        let (mut c_next, nut_rep) = nutrient_step(
            &self.c,
            &self.hist,
            &phi_next,
            &self.flow.v,
            &cfg.nutrient,
            cfg.dt,
            cfg.theta.nutrient,
            &cfg.solver_nutrient,
            &self.comm,
        )?;
        lap("nutrient", profile);
        c_next
            .refresh(&self.comm)
            .map_err(|e| StepError::Domain(e.to_string()))?;

        let flow_rep = flow_step(
            &mut self.flow,
            &self.hist,
            &phi_next,
            &cfg.ch,
            &cfg.flow,
            cfg.dt,
            cfg.theta.momentum,
            &cfg.solver_momentum,
            &cfg.solver_pressure,
            &self.comm,
        )?;
        lap("flow", profile);

        self.hist.advance(phi_next);
        self.c = c_next;
        self.step_index += 1;
        Ok(StepStats {
            ch_iters: ch_rep.iterations,
            nut_iters: nut_rep.iterations,
            mom_iters: flow_rep.momentum_iters,
            prs_iters: flow_rep.pressure_iters,
        })
    }

    /// Collective diagnostics for the current state.
    pub fn diagnostics(&self, stats: StepStats, wall_ms: f64) -> DiagnosticsRow {
        let phi = &self.hist.curr;
        let mass_phi = global_reduce(phi, ReduceKind::Sum, &self.comm);
        let energy = free_energy(phi, &self.cfg.ch, &self.comm);
        let phi_min = global_reduce(phi, ReduceKind::Min, &self.comm);
        let phi_max = global_reduce(phi, ReduceKind::Max, &self.comm);
        let max_div = max_interior_divergence(&self.flow.v, &self.comm);
        let mut solvent_nutrient = Field::scratch(self.sub);
        for j in 0..self.sub.owned_ny() as isize {
            for i in 0..self.sub.owned_nx() as isize {
                solvent_nutrient.set(i, j, (1.0 - phi.at(i, j)) * self.c.at(i, j));
            }
        }
        let nutrient_total = global_reduce(&solvent_nutrient, ReduceKind::Sum, &self.comm);
        let components =
            connected_components(phi, 0.5 * self.cfg.ic.phi_bulk, &self.comm);
        DiagnosticsRow {
            step: self.step_index,
            time: self.time(),
            mass_phi,
            free_energy: energy,
            max_div,
            phi_min,
            phi_max,
            nutrient_total,
            components,
            wall_ms,
            ch_iters: stats.ch_iters,
            nut_iters: stats.nut_iters,
            mom_iters: stats.mom_iters,
            prs_iters: stats.prs_iters,
        }
    }

    /// Gather the named global arrays for a snapshot on rank 0. Collective.
    pub fn gather_snapshot(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut arrays = vec![
            ("phi_n", gather_global(&self.hist.curr, &self.comm)),
            ("c", gather_global(&self.c, &self.comm)),
        ];
        let mut p_phys = self.flow.p.clone();
        let dt = self.cfg.dt;
        p_phys.map_owned(|v| v / dt);
        arrays.push(("p", gather_global(&p_phys, &self.comm)));
        arrays.push(("u", gather_global(&self.flow.v.u, &self.comm)));
        arrays.push(("v", gather_global(&self.flow.v.v, &self.comm)));
        if self.cfg.output.network_velocity {
            let vn = crate::flow::network_velocity(
                &self.hist.curr,
                &self.flow.v,
                &self.cfg.ch,
                &self.comm,
            );
            arrays.push(("u_network", gather_global(&vn.u, &self.comm)));
            arrays.push(("v_network", gather_global(&vn.v, &self.comm)));
        }
        arrays
    }

    /// Write a snapshot file (rank 0) after a collective gather.
    pub fn write_snapshot(&self, dir: &Path) -> std::io::Result<()> {
        let arrays = self.gather_snapshot();
        if self.comm.rank() != 0 {
            return Ok(());
        }
        let named: Vec<output::NamedArray<'_>> = arrays
            .iter()
            .map(|(name, values)| output::NamedArray { name, values })
            .collect();
        let title = format!("biofilm2d step={} time={:.6e}", self.step_index, self.time());
        let path = dir.join(format!("snapshot_{:06}.vtk", self.step_index));
        output::write_vtk(&path, &self.sub.grid, &title, &named)
    }
}

/// Full in-memory run: fields gathered at the end, diagnostics collected per
/// step. The workhorse behind the serial-check mode and the test suites.
pub struct CollectedRun {
    pub phi: Vec<f64>,
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub stats: Vec<StepStats>,
    pub diagnostics: Vec<DiagnosticsRow>,
}

pub fn simulate_collect(
    cfg: &SimConfig,
    ranks: usize,
    with_diagnostics: bool,
) -> Result<CollectedRun, String> {
    let results = run_on_ranks(ranks, |comm| -> Result<CollectedRun, String> {
        let mut sim = RankSim::new(cfg, comm).map_err(|e| e.to_string())?;
        let mut stats_log = Vec::with_capacity(cfg.steps);
        let mut diag_log = Vec::new();
        for _ in 0..cfg.steps {
            let stats = sim.step().map_err(|e| e.to_string())?;
            stats_log.push(stats);
            if with_diagnostics {
                diag_log.push(sim.diagnostics(stats, 0.0));
            }
        }
        let phi = gather_global(&sim.hist.curr, &sim.comm);
        let c = gather_global(&sim.c, &sim.comm);
        let u = gather_global(&sim.flow.v.u, &sim.comm);
        let v = gather_global(&sim.flow.v.v, &sim.comm);
        let p = gather_global(&sim.flow.p, &sim.comm);
        Ok(CollectedRun {
            phi,
            c,
            u,
            v,
            p,
            stats: stats_log,
            diagnostics: diag_log,
        })
    });
    results.into_iter().next().unwrap()
}

/// Outcome of a CLI-level run, mapped to the documented exit codes:
/// 0 success, 1 configuration error, 2 solver/check failure, 3 I/O error.
pub struct RunOutcome {
    pub exit_code: i32,
    pub message: Option<String>,
}

impl RunOutcome {
    fn ok() -> RunOutcome {
        RunOutcome {
            exit_code: 0,
            message: None,
        }
    }

    fn fail(code: i32, msg: impl Into<String>) -> RunOutcome {
        RunOutcome {
            exit_code: code,
            message: Some(msg.into()),
        }
    }
}

/// Dispatch on the configured mode.
pub fn run(cfg: &SimConfig) -> RunOutcome {
    if let Err(e) = cfg.validate() {
        return RunOutcome::fail(1, e.to_string());
    }
    let grid = match cfg.grid() {
        Ok(g) => g,
        Err(e) => return RunOutcome::fail(1, e.to_string()),
    };
    if let Err(e) = decompose(&grid, cfg.ranks) {
        return RunOutcome::fail(1, e.to_string());
    }
    match cfg.mode {
        RunMode::Simulate => run_simulate(cfg),
        RunMode::Scaling => run_scaling(cfg),
        RunMode::SerialCheck => run_serialcheck(cfg),
    }
}

fn run_simulate(cfg: &SimConfig) -> RunOutcome {
    let dir = cfg.output.dir.clone();
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return RunOutcome::fail(3, format!("cannot create output directory: {e}"));
    }
    // Every failure path must be agreed on by all ranks before anyone leaves
    // the collective sequence, so rank 0's I/O outcome is reduced globally.
    let io_failed = |comm: &Communicator, local: bool| -> bool {
        comm.allreduce_scalar(if local { 1.0 } else { 0.0 }, ReduceOp::Max) > 0.0
    };
    let results = run_on_ranks(cfg.ranks, |comm| -> (i32, Option<String>) {
        let rank0 = comm.rank() == 0;
        let mut sim = match RankSim::new(cfg, comm) {
            Ok(s) => s,
            Err(e) => return (2, Some(e.to_string())),
        };
        let mut csv = None;
        let mut local_fail = false;
        if rank0 {
            match std::fs::File::create(dir.join("diagnostics.csv")) {
                Ok(mut f) => {
                    local_fail = writeln!(f, "{}", DIAGNOSTICS_HEADER).is_err();
                    csv = Some(f);
                }
                Err(_) => local_fail = true,
            }
        }
        if io_failed(&sim.comm, local_fail) {
            return (3, Some("cannot create diagnostics.csv".into()));
        }
        if cfg.output.vtk && cfg.output.interval > 0 {
            let bad = sim.write_snapshot(&dir).is_err();
            if io_failed(&sim.comm, bad) {
                return (3, Some("initial snapshot failed".into()));
            }
        }
        for _ in 0..cfg.steps {
            let t0 = Instant::now();
            let stats = match sim.step() {
                Ok(s) => s,
                Err(e) => return (2, Some(e.to_string())),
            };
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            let row = sim.diagnostics(stats, wall_ms);
            let mut bad = false;
            if let Some(f) = csv.as_mut() {
                bad = writeln!(f, "{}", row.to_csv()).and_then(|_| f.flush()).is_err();
            }
            let snapshot_due = cfg.output.vtk
                && cfg.output.interval > 0
                && sim.step_index % cfg.output.interval == 0;
            if snapshot_due {
                bad |= sim.write_snapshot(&dir).is_err();
            }
            if io_failed(&sim.comm, bad) {
                return (3, Some("I/O failure while writing results".into()));
            }
        }
        if cfg.output.vtk {
            let due_at_end = cfg.output.interval == 0 || sim.step_index % cfg.output.interval != 0;
            let bad = due_at_end && sim.write_snapshot(&dir).is_err();
            if io_failed(&sim.comm, bad) {
                return (3, Some("final snapshot failed".into()));
            }
        }
        (0, None)
    });
    let (code, message) = results.into_iter().next().unwrap();
    RunOutcome {
        exit_code: code,
        message,
    }
}

fn run_scaling(cfg: &SimConfig) -> RunOutcome {
    let rows = match scaling_harness(cfg, &cfg.scaling.rank_counts.clone()) {
        Ok(r) => r,
        Err(e) => return RunOutcome::fail(2, e),
    };
    if let Err(e) = std::fs::create_dir_all(&cfg.output.dir) {
        return RunOutcome::fail(3, e.to_string());
    }
    let path = cfg.output.dir.join("scaling.csv");
    let mut text = String::from(SCALING_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_csv());
        text.push('\n');
        println!(
            "ranks={} grid={} per-step={:.1} ms speedup={:.3} efficiency={:.3}",
            row.ranks, row.grid_n, row.wall_ms_per_step, row.speedup, row.efficiency
        );
    }
    if let Err(e) = std::fs::write(&path, text) {
        return RunOutcome::fail(3, e.to_string());
    }
    RunOutcome::ok()
}

fn run_serialcheck(cfg: &SimConfig) -> RunOutcome {
    let parallel_ranks = cfg.ranks.max(2);
    let serial = match simulate_collect(cfg, 1, false) {
        Ok(r) => r,
        Err(e) => return RunOutcome::fail(2, format!("serial run failed: {e}")),
    };
    let parallel = match simulate_collect(cfg, parallel_ranks, false) {
        Ok(r) => r,
        Err(e) => return RunOutcome::fail(2, format!("parallel run failed: {e}")),
    };
    let max_diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let pairs = [
        ("phi_n", &serial.phi, &parallel.phi),
        ("c", &serial.c, &parallel.c),
        ("u", &serial.u, &parallel.u),
        ("v", &serial.v, &parallel.v),
        ("p", &serial.p, &parallel.p),
    ];
    let mut worst = 0.0f64;
    for (name, a, b) in pairs {
        let d = max_diff(a, b);
        println!("serialcheck {name}: max |1-rank - {parallel_ranks}-rank| = {d:.3e}");
        worst = worst.max(d);
    }
    let iters_equal = serial.stats == parallel.stats;
    println!(
        "serialcheck iteration counts identical: {}",
        if iters_equal { "yes" } else { "no" }
    );
    if worst <= 1e-8 && iters_equal {
        RunOutcome::ok()
    } else {
        RunOutcome::fail(
            2,
            format!("decomposition mismatch: max field difference {worst:.3e}, iteration counts identical: {iters_equal}"),
        )
    }
}
