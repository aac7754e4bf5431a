// Stairs at 0.6 m/s: the +2/+2/+3/+3/-2/-3/-2/-3 cm sequence, then the same
// sequence scaled to larger rises until the swing foot stubs a riser.

use aslip::scenario::Scenario;
use aslip::sim::{run_scenario, SimEvent};
use aslip::terrain::TerrainSpec;

const SEQUENCE: [f64; 8] = [0.02, 0.02, 0.03, 0.03, -0.02, -0.03, -0.02, -0.03];

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for max_rise in [0.01, 0.02, 0.03, 0.04, 0.06] {
        let rises = SEQUENCE.iter().map(|r| r * max_rise / 0.03).collect();
        let scenario = Scenario {
            terrain: TerrainSpec::stairs(-2.0, 40.0, 0.8, rises, 0.3),
            velocity: [0.6, 0.0],
            duration: 8.0,
            ..Default::default()
        };
        let log = run_scenario(&scenario)?;
        let edges = log.events().filter(|(_, e)| *e == SimEvent::EdgeLanding).count();
        println!(
            "largest rise {:.0} cm: {:?} after {} steps ({edges} edge landings)",
            max_rise * 100.0,
            log.outcome,
            log.steps.len()
        );
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
