// Wall time of one planning tick (vertical QP plus both footstep QPs).

use aslip::bench::{bench_planner, horizon_sweep};
use aslip::horizontal::HorizontalParams;
use aslip::vertical::VerticalParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (vp, hp) = (VerticalParams::default(), HorizontalParams::default());
    let report = bench_planner(&vp, &hp, 2000)?;
    for (name, p) in [("cold", report.cold), ("warm", report.warm)] {
        println!("{name}: p50 {:.1} us, p99 {:.1} us, max {:.1} us", p.p50, p.p99, p.max);
    }
    for (n, p) in horizon_sweep(&vp, &hp, [1, 2, 4, 8], 1000)? {
        println!("{n} predicted steps: p50 {:.1} us", p.p50);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
