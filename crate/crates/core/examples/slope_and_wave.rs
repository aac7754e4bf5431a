// Blind walking over a 15 degree slope and a wave field.

use aslip::scenario::Scenario;
use aslip::sim::run_scenario;
use aslip::terrain::{TerrainSpec, WaveSegment};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let wave: Vec<_> = [15.0, -15.0, 10.0, -10.0, 5.0, -5.0]
        .into_iter()
        .cycle()
        .take(12)
        .map(|angle_deg| WaveSegment { angle_deg, length: 0.4 })
        .collect();
    let terrains = [
        ("slope 15 deg", TerrainSpec::slope(-2.0, 40.0, 0.5, 15.0)),
        ("wave field", TerrainSpec::wave(-2.0, 40.0, 0.5, wave)),
    ];
    for (name, terrain) in terrains {
        let log = run_scenario(&Scenario { terrain, ..Default::default() })?;
        let crouch = log.rows.iter().map(|r| r.com[2] - r.stance[2]).fold(f64::MAX, f64::min);
        let last = log.rows.last().expect("at least one row");
        println!(
            "{name}: {:?} after {} steps, end at x={:.2} z={:.3}, lowest CoM above stance {crouch:.3} m",
            log.outcome,
            log.steps.len(),
            last.com[0],
            last.com[2]
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
