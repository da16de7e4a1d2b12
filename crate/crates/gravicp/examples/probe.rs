// temporary probe
use gravicp::bench::*;

fn main() {
    let scenario = DriftScenario::default();
    let seeds: Vec<u64> = (0..10).collect();
    let t0 = std::time::Instant::now();
    let report = run_drift_benchmark(&scenario, &seeds).unwrap();
    println!("{}", report.summary_text());
    println!("elapsed {:.1}s for 10 seeds", t0.elapsed().as_secs_f64());
    let max_rp = report.runs.iter().map(|r| r.four_dof.max_rollpitch_dev).fold(0.0f64, f64::max);
    println!("max 4dof roll/pitch deviation from prior: {:.2e}", max_rp);
}
