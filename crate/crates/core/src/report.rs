//! CSV logs and run summaries.

use std::io::Write;

use crate::sim::{Outcome, SimLog};

pub const CSV_COLUMNS: [&str; 22] = [
    "t",
    "com_x",
    "com_y",
    "com_z",
    "vel_x",
    "vel_y",
    "vel_z",
    "z_ref",
    "r",
    "stance_side",
    "stance_x",
    "stance_y",
    "stance_z",
    "swing_x",
    "swing_y",
    "swing_z",
    "planned_step1_x",
    "planned_step1_y",
    "push_fx",
    "push_fy",
    "push_fz",
    "event",
];

/// Writes one row per tick. `stance_side` is 0 for left and 1 for right;
/// `event` joins the tick's event labels with `;`.
pub fn write_csv<W: Write>(log: &SimLog, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    let mut fields: Vec<String> = Vec::with_capacity(CSV_COLUMNS.len());
    for row in &log.rows {
        fields.clear();
        fields.push(row.t.to_string());
        fields.extend(row.com.iter().chain(row.vel.iter()).map(|v| v.to_string()));
        fields.push(row.z_ref.to_string());
        fields.push(row.r.to_string());
        fields.push(row.support.flag().to_string());
        fields.extend(row.stance.iter().chain(row.swing.iter()).map(|v| v.to_string()));
        fields.extend(row.planned_step.iter().chain(row.push.iter()).map(|v| v.to_string()));
        fields.push(row.events.iter().map(|e| e.label()).collect::<Vec<_>>().join(";"));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentiles. `None` for an empty sample.
pub fn percentiles(samples: &[f64]) -> Option<Percentiles> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
    Some(Percentiles { p50: rank(0.50), p95: rank(0.95), p99: rank(0.99), max: v[v.len() - 1] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    /// Mean CoM velocity over the final `window` steps.
    pub mean_velocity: Option<[f64; 2]>,
    pub max_z_error: f64,
    pub fell: bool,
    pub outcome: Outcome,
    pub latency_us: Option<Percentiles>,
}

/// Time-averaged CoM velocity between two instants.
pub fn mean_velocity(log: &SimLog, from: f64, to: f64) -> Option<[f64; 2]> {
    let rows: Vec<_> = log.rows.iter().filter(|r| r.t >= from - 1e-9 && r.t < to - 1e-9).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some([rows.iter().map(|r| r.vel[0]).sum::<f64>() / n, rows.iter().map(|r| r.vel[1]).sum::<f64>() / n])
}

pub fn summarize(log: &SimLog, window: usize) -> Summary {
    let steps = log.steps.len();
    let mean = if steps > window {
        mean_velocity(log, log.steps[steps - 1 - window].t, log.steps[steps - 1].t)
    } else {
        None
    };
    let max_z_error = log.rows.iter().map(|r| (r.com[2] - r.z_ref).abs()).fold(0.0, f64::max);
    Summary {
        steps,
        mean_velocity: mean,
        max_z_error,
        fell: log.fell(),
        outcome: log.outcome,
        latency_us: percentiles(&log.latencies_us),
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "outcome: {:?}", self.outcome)?;
        writeln!(f, "fell: {}", self.fell)?;
        writeln!(f, "steps: {}", self.steps)?;
        match self.mean_velocity {
            Some([vx, vy]) => writeln!(f, "mean velocity (final steps): vx={vx:.4} m/s vy={vy:.4} m/s")?,
            None => writeln!(f, "mean velocity (final steps): n/a")?,
        }
        writeln!(f, "max |z - z_ref|: {:.6} m", self.max_z_error)?;
        match self.latency_us {
            Some(p) => write!(
                f,
                "planner latency: p50={:.1} us p95={:.1} us p99={:.1} us max={:.1} us",
                p.p50, p.p95, p.p99, p.max
            ),
            None => write!(f, "planner latency: n/a"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::sim::run_scenario;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentiles(&v).unwrap();
        assert_eq!((p.p50, p.p95, p.p99, p.max), (50.0, 95.0, 99.0, 100.0));
        assert_eq!(percentiles(&[3.0]).unwrap().p99, 3.0);
        assert!(percentiles(&[]).is_none());
    }

    #[test]
    fn csv_has_fixed_header_and_one_row_per_tick() {
        let log = run_scenario(&Scenario { duration: 0.5, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, CSV_COLUMNS);
        let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 501);
        let t: f64 = rows[250][0].parse().unwrap();
        assert!((t - 0.25).abs() < 1e-12);
    }
}
