//! Height fields varying along x only: flat runs, slopes, piecewise-slope
//! wave fields and stair sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default stair tread depth in metres.
pub const DEFAULT_TREAD: f64 = 0.30;
const MAX_ANGLE_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("terrain has no pieces")]
    Empty,
    #[error("invalid extent [{0}, {1}]")]
    Extent(f64, f64),
    #[error("piece {index} starts at {x_start} before the previous piece ends at {previous_end}")]
    Overlap { index: usize, x_start: f64, previous_end: f64 },
    #[error("piece {index}: {reason}")]
    InvalidPiece { index: usize, reason: String },
    #[error("query x = {x} outside terrain extent [{min}, {max}]")]
    OutOfExtent { x: f64, min: f64, max: f64 },
}

fn default_tread() -> f64 {
    DEFAULT_TREAD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSegment {
    pub angle_deg: f64,
    pub length: f64,
}

/// One piece of a terrain description. Each piece starts at the height where
/// the previous one ended and runs until the next piece starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceSpec {
    Flat { x_start: f64 },
    Slope { x_start: f64, angle_deg: f64 },
    Wave { x_start: f64, segments: Vec<WaveSegment> },
    Stairs {
        x_start: f64,
        rises: Vec<f64>,
        #[serde(default = "default_tread")]
        tread: f64,
    },
}

impl PieceSpec {
    fn x_start(&self) -> f64 {
        match self {
            PieceSpec::Flat { x_start }
            | PieceSpec::Slope { x_start, .. }
            | PieceSpec::Wave { x_start, .. }
            | PieceSpec::Stairs { x_start, .. } => *x_start,
        }
    }

    /// End of the piece's own geometry (wave and stairs are finite).
    fn own_end(&self) -> Option<f64> {
        match self {
            PieceSpec::Flat { .. } | PieceSpec::Slope { .. } => None,
            PieceSpec::Wave { x_start, segments } => Some(x_start + segments.iter().map(|s| s.length).sum::<f64>()),
            PieceSpec::Stairs { x_start, rises, tread } => Some(x_start + rises.len() as f64 * tread),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default)]
    pub base_height: f64,
    pub pieces: Vec<PieceSpec>,
}

impl TerrainSpec {
    pub fn flat(x_min: f64, x_max: f64) -> Self {
        Self { x_min, x_max, base_height: 0.0, pieces: vec![PieceSpec::Flat { x_start: x_min }] }
    }

    pub fn slope(x_min: f64, x_max: f64, x_start: f64, angle_deg: f64) -> Self {
        Self {
            x_min,
            x_max,
            base_height: 0.0,
            pieces: vec![PieceSpec::Flat { x_start: x_min }, PieceSpec::Slope { x_start, angle_deg }],
        }
    }

    pub fn stairs(x_min: f64, x_max: f64, x_start: f64, rises: Vec<f64>, tread: f64) -> Self {
        Self {
            x_min,
            x_max,
            base_height: 0.0,
            pieces: vec![PieceSpec::Flat { x_start: x_min }, PieceSpec::Stairs { x_start, rises, tread }],
        }
    }

    pub fn wave(x_min: f64, x_max: f64, x_start: f64, segments: Vec<WaveSegment>) -> Self {
        Self {
            x_min,
            x_max,
            base_height: 0.0,
            pieces: vec![PieceSpec::Flat { x_start: x_min }, PieceSpec::Wave { x_start, segments }],
        }
    }
}

/// Linear run `z = z0 + slope * (x - x0)` over `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    x0: f64,
    x1: f64,
    z0: f64,
    slope: f64,
}

impl Run {
    fn height(&self, x: f64) -> f64 {
        self.z0 + self.slope * (x - self.x0)
    }
    fn end_height(&self) -> f64 {
        self.height(self.x1)
    }
}

/// A height discontinuity (stair riser) at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: f64,
    /// Height just before the edge (smaller x).
    pub before: f64,
    /// Height just after the edge.
    pub after: f64,
}

impl Edge {
    pub fn top(&self) -> f64 {
        self.before.max(self.after)
    }
}

/// Compiled, immutable height field.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainProfile {
    runs: Vec<Run>,
    edges: Vec<Edge>,
    x_min: f64,
    x_max: f64,
}

impl TerrainProfile {
    pub fn build(spec: &TerrainSpec) -> Result<Self, TerrainError> {
        if spec.pieces.is_empty() {
            return Err(TerrainError::Empty);
        }
        if !(spec.x_min.is_finite() && spec.x_max.is_finite() && spec.x_min < spec.x_max) {
            return Err(TerrainError::Extent(spec.x_min, spec.x_max));
        }
        let invalid = |index: usize, reason: String| TerrainError::InvalidPiece { index, reason };
        let mut previous_end = spec.x_min;
        for (index, piece) in spec.pieces.iter().enumerate() {
            let x_start = piece.x_start();
            if !x_start.is_finite() || x_start > spec.x_max {
                return Err(invalid(index, format!("start {x_start} outside extent")));
            }
            if x_start < previous_end || (index > 0 && x_start <= spec.pieces[index - 1].x_start()) {
                return Err(TerrainError::Overlap { index, x_start, previous_end });
            }
            match piece {
                PieceSpec::Flat { .. } => {}
                PieceSpec::Slope { angle_deg, .. } => check_angle(index, *angle_deg)?,
                PieceSpec::Wave { segments, .. } => {
                    if segments.is_empty() {
                        return Err(invalid(index, "wave without segments".into()));
                    }
                    for s in segments {
                        check_angle(index, s.angle_deg)?;
                        if !(s.length.is_finite() && s.length > 0.0) {
                            return Err(invalid(index, format!("segment length {}", s.length)));
                        }
                    }
                }
                PieceSpec::Stairs { rises, tread, .. } => {
                    if rises.is_empty() || rises.iter().any(|r| !r.is_finite()) {
                        return Err(invalid(index, "stairs need finite rises".into()));
                    }
                    if !(tread.is_finite() && *tread > 0.0) {
                        return Err(invalid(index, format!("tread {tread}")));
                    }
                }
            }
            previous_end = piece.own_end().unwrap_or(x_start);
            if previous_end > spec.x_max {
                return Err(invalid(index, format!("ends at {previous_end} beyond extent")));
            }
        }

        let mut runs = Vec::new();
        let mut edges = Vec::new();
        let mut z = spec.base_height;
        let push = |runs: &mut Vec<Run>, x0: f64, x1: f64, z0: f64, slope: f64| -> f64 {
            if x1 > x0 {
                runs.push(Run { x0, x1, z0, slope });
            }
            z0 + slope * (x1 - x0)
        };
        let first = spec.pieces[0].x_start();
        z = push(&mut runs, spec.x_min, first, z, 0.0);
        for (index, piece) in spec.pieces.iter().enumerate() {
            let next = spec.pieces.get(index + 1).map_or(spec.x_max, |p| p.x_start());
            match piece {
                PieceSpec::Flat { x_start } => z = push(&mut runs, *x_start, next, z, 0.0),
                PieceSpec::Slope { x_start, angle_deg } => {
                    z = push(&mut runs, *x_start, next, z, angle_deg.to_radians().tan())
                }
                PieceSpec::Wave { x_start, segments } => {
                    let mut x = *x_start;
                    for s in segments {
                        z = push(&mut runs, x, x + s.length, z, s.angle_deg.to_radians().tan());
                        x += s.length;
                    }
                    z = push(&mut runs, x, next, z, 0.0);
                }
                PieceSpec::Stairs { x_start, rises, tread } => {
                    let mut x = *x_start;
                    for rise in rises {
                        let before = z;
                        z += rise;
                        edges.push(Edge { x, before, after: z });
                        z = push(&mut runs, x, x + tread, z, 0.0);
                        x += tread;
                    }
                    z = push(&mut runs, x, next, z, 0.0);
                }
            }
        }
        Ok(Self { runs, edges, x_min: spec.x_min, x_max: spec.x_max })
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Terrain height at `(x, y)`. At a stair edge the upper side is returned.
    pub fn height_at(&self, x: f64, _y: f64) -> Result<f64, TerrainError> {
        if !self.contains(x) {
            return Err(TerrainError::OutOfExtent { x, min: self.x_min, max: self.x_max });
        }
        let mut best = f64::NEG_INFINITY;
        for run in &self.runs {
            if x >= run.x0 && x <= run.x1 {
                best = best.max(run.height(x));
            }
        }
        // Edges sit on run boundaries, but a zero-length edge at x_min has no run before it.
        for e in &self.edges {
            if e.x == x {
                best = best.max(e.top());
            }
        }
        Ok(best)
    }

    /// Stair edges inside the half-open interval `(min(from, to), max(from, to)]`.
    pub fn edges_crossed(&self, from: f64, to: f64) -> impl Iterator<Item = &Edge> {
        let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
        self.edges.iter().filter(move |e| e.x > lo && e.x <= hi)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Height at the far end of the profile, useful for reporting net climb.
    pub fn final_height(&self) -> f64 {
        self.runs.last().map_or(0.0, |r| r.end_height())
    }
}

fn check_angle(index: usize, angle_deg: f64) -> Result<(), TerrainError> {
    if angle_deg.is_finite() && angle_deg.abs() < MAX_ANGLE_DEG {
        Ok(())
    } else {
        Err(TerrainError::InvalidPiece { index, reason: format!("angle {angle_deg} deg outside (-60, 60)") })
    }
}
