use biofilm2d::comm::run_on_ranks;
use biofilm2d::driver::{RankSim, SimConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(128);
    let ranks: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let steps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5);
    let mut cfg = SimConfig::default();
    cfg.nx = n + 1;
    cfg.ny = n + 1;
    cfg.ranks = ranks;
    for ov in args.iter().skip(4) {
        let (k, v) = ov.split_once('=').unwrap();
        cfg.apply(k, v, 0).unwrap();
    }
    cfg.validate().unwrap();
    let out = run_on_ranks(ranks, |comm| {
        let rank0 = comm.rank() == 0;
        let mut sim = RankSim::new(&cfg, comm).unwrap();
        for s in 0..steps {
            let t0 = Instant::now();
            let stats = sim.step().unwrap();
            if rank0 {
                println!(
                    "step {s}: {:.0} ms  ch={} nut={} mom={} prs={}",
                    t0.elapsed().as_secs_f64() * 1e3,
                    stats.ch_iters, stats.nut_iters, stats.mom_iters, stats.prs_iters
                );
            }
        }
        0
    });
    let _ = out;
}
