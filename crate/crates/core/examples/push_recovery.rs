// A 40 N, 0.1 s push during wave-field walking, forward and sideways.

use aslip::scenario::Scenario;
use aslip::sim::{run_scenario, PushEvent};
use aslip::terrain::{TerrainSpec, WaveSegment};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let wave: Vec<_> = [15.0, -15.0, 10.0, -10.0, 5.0, -5.0]
        .into_iter()
        .cycle()
        .take(12)
        .map(|angle_deg| WaveSegment { angle_deg, length: 0.4 })
        .collect();
    let base = Scenario { terrain: TerrainSpec::wave(-2.0, 40.0, 0.5, wave), ..Default::default() };
    let reference = run_scenario(&base)?;

    for (axis, force) in [(0, [40.0, 0.0, 0.0]), (1, [0.0, 40.0, 0.0])] {
        let push = PushEvent { start: 4.0, duration: 0.1, force };
        let pushed = run_scenario(&Scenario { pushes: vec![push], ..base.clone() })?;
        let first = pushed.steps.iter().position(|s| s.t > push.start + push.duration).expect("steps after the push");
        let shift = pushed.steps[first].contact[axis] - reference.steps[first].contact[axis];
        println!("push along {}: {:?}, first step after the push moved {shift:+.3} m", ["x", "y"][axis], pushed.outcome);
        for w in pushed.steps[first - 1..].windows(2).take(4) {
            let rows = pushed.rows.iter().filter(|r| r.t >= w[0].t && r.t < w[1].t);
            let (sum, n) = rows.fold((0.0, 0usize), |(s, n), r| (s + r.vel[axis], n + 1));
            println!("  step from t={:.1}s: mean v{} = {:+.3} m/s", w[0].t, ["x", "y"][axis], sum / n as f64);
        }
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
