// Ten seconds of walking on flat ground at 0.3 m/s.

use aslip::report::summarize;
use aslip::scenario::Scenario;
use aslip::sim::run_scenario;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let log = run_scenario(&Scenario::default())?;
    println!("{}", summarize(&log, 5));
    println!("first footsteps:");
    for step in log.steps.iter().take(6) {
        println!(
            "  t={:.2}s {:?} foot at ({:.3}, {:.3}) [{}]",
            step.t, step.support, step.contact[0], step.contact[1], step.event.label()
        );
    }
    let (lo, hi) = log.rows.iter().skip(1400).fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r.com[2]), hi.max(r.com[2])));
    println!("CoM height after two steps: {lo:.4} .. {hi:.4} m");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
