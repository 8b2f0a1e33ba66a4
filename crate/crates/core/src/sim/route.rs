//! Closed-loop drive along a rounded rectangle.
//!
//! Counterclockwise laps run east along the south edge, north along the east
//! edge, and so on. East and west edges are two-lane roads: traffic keeps to
//! the right, so a CCW lap runs on the outer lane of those edges and a CW lap
//! on the inner one, `lateral_lane_offset` apart.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouteConfig {
    /// East-west extent of the loop centre line, meters.
    pub perimeter_width: f64,
    /// North-south extent, meters.
    pub perimeter_height: f64,
    pub laps: usize,
    /// The first `ccw_laps` laps are driven counterclockwise, the rest clockwise.
    pub ccw_laps: usize,
    /// m/s.
    pub speed: f64,
    /// Seconds between snapshots.
    pub snapshot_period: f64,
    /// Lane-centre separation of opposing directions on the east and west edges.
    pub lateral_lane_offset: f64,
    pub corner_radius: f64,
    pub seed: u64,
}

impl Default for RouteConfig {
    fn default() -> Self {
        Self {
            perimeter_width: 100.0,
            perimeter_height: 100.0,
            laps: 4,
            ccw_laps: 2,
            speed: 1.0,
            snapshot_period: 0.075,
            lateral_lane_offset: 3.0,
            corner_radius: 5.0,
            seed: 0,
        }
    }
}

impl RouteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perimeter_width > 0.0 && self.perimeter_height > 0.0) {
            return Err(Error::Config(format!(
                "degenerate perimeter {} x {}",
                self.perimeter_width, self.perimeter_height
            )));
        }
        if self.ccw_laps > self.laps {
            return Err(Error::Config(format!(
                "ccw_laps {} exceeds laps {}",
                self.ccw_laps, self.laps
            )));
        }
        let step = self.speed * self.snapshot_period;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config("speed * snapshot_period must be positive".into()));
        }
        let half_offset = self.lateral_lane_offset / 2.0;
        let min_half = (self.perimeter_width / 2.0 - half_offset).min(self.perimeter_height / 2.0);
        if self.lateral_lane_offset < 0.0 || self.corner_radius < 0.0 || self.corner_radius >= min_half {
            return Err(Error::Config(format!(
                "corner radius {} and lane offset {} do not fit the perimeter",
                self.corner_radius, self.lateral_lane_offset
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.speed * self.snapshot_period
    }

    pub fn is_ccw(&self, lap: usize) -> bool {
        lap < self.ccw_laps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutePoint {
    pub pose: Pose,
    pub lap_index: usize,
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { from: [f64; 2], to: [f64; 2] },
    /// Angles in the math convention (east = 0, counterclockwise).
    Arc { center: [f64; 2], radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { from, to } => (to[0] - from[0]).hypot(to[1] - from[1]),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position and direction of travel (math angle) at distance `d` along the piece.
    fn at(&self, d: f64) -> ([f64; 2], f64) {
        match *self {
            Piece::Line { from, to } => {
                let len = self.length();
                let t = if len > 0.0 { d / len } else { 0.0 };
                let dir = (to[1] - from[1]).atan2(to[0] - from[0]);
                ([from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])], dir)
            }
            Piece::Arc { center, radius, start, sweep } => {
                let a = start + sweep.signum() * d / radius;
                let dir = a + sweep.signum() * FRAC_PI_2;
                ([center[0] + radius * a.cos(), center[1] + radius * a.sin()], dir)
            }
        }
    }

    fn reversed(&self) -> Piece {
        match *self {
            Piece::Line { from, to } => Piece::Line { from: to, to: from },
            Piece::Arc { center, radius, start, sweep } => Piece::Arc {
                center,
                radius,
                start: start + sweep,
                sweep: -sweep,
            },
        }
    }
}

/// Counterclockwise rounded rectangle starting where the south edge leaves the SW corner arc.
fn ccw_loop(x0: f64, y0: f64, x1: f64, y1: f64, r: f64) -> Vec<Piece> {
    vec![
        Piece::Line { from: [x0 + r, y0], to: [x1 - r, y0] },
        Piece::Arc { center: [x1 - r, y0 + r], radius: r, start: -FRAC_PI_2, sweep: FRAC_PI_2 },
        Piece::Line { from: [x1, y0 + r], to: [x1, y1 - r] },
        Piece::Arc { center: [x1 - r, y1 - r], radius: r, start: 0.0, sweep: FRAC_PI_2 },
        Piece::Line { from: [x1 - r, y1], to: [x0 + r, y1] },
        Piece::Arc { center: [x0 + r, y1 - r], radius: r, start: FRAC_PI_2, sweep: FRAC_PI_2 },
        Piece::Line { from: [x0, y1 - r], to: [x0, y0 + r] },
        Piece::Arc { center: [x0 + r, y0 + r], radius: r, start: PI, sweep: FRAC_PI_2 },
    ]
}

fn lap_pieces(config: &RouteConfig, ccw: bool) -> Vec<Piece> {
    let h = config.lateral_lane_offset / 2.0;
    let (w, ht, r) = (config.perimeter_width, config.perimeter_height, config.corner_radius);
    if ccw {
        ccw_loop(-h, 0.0, w + h, ht, r)
    } else {
        // Start at the same corner: the reversed loop begins with the SW arc.
        ccw_loop(h, 0.0, w - h, ht, r).iter().rev().map(Piece::reversed).collect()
    }
}

/// Compass heading (north = 0, clockwise) from a math-convention direction.
fn compass_from_math(dir: f64) -> f64 {
    90.0 - dir.to_degrees()
}

/// Length of one lap in the given direction.
pub fn lap_length(config: &RouteConfig, ccw: bool) -> f64 {
    lap_pieces(config, ccw).iter().map(Piece::length).sum()
}

/// Samples every `speed * snapshot_period` meters. Each lap starts afresh at
/// the start corner so lap boundaries coincide with that corner.
pub fn generate_route(config: &RouteConfig) -> Result<Vec<RoutePoint>> {
    config.validate()?;
    let step = config.step();
    let mut points = Vec::new();
    for lap in 0..config.laps {
        let pieces = lap_pieces(config, config.is_ccw(lap));
        let total: f64 = pieces.iter().map(Piece::length).sum();
        let count = (total / step).floor() as usize;
        let mut piece_idx = 0;
        let mut piece_start = 0.0;
        for k in 0..count {
            let d = k as f64 * step;
            while piece_idx + 1 < pieces.len() && d >= piece_start + pieces[piece_idx].length() {
                piece_start += pieces[piece_idx].length();
                piece_idx += 1;
            }
            let (pos, dir) = pieces[piece_idx].at(d - piece_start);
            points.push(RoutePoint {
                pose: Pose::new(pos[0], pos[1], compass_from_math(dir)),
                lap_index: lap,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heading_close(a: f64, b: f64, tol: f64) -> bool {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d) <= tol
    }

    #[test]
    fn default_route_scale() {
        let cfg = RouteConfig::default();
        let pts = generate_route(&cfg).unwrap();
        let per_lap = lap_length(&cfg, true);
        assert!((380.0..420.0).contains(&per_lap), "lap length {per_lap}");
        // About 5333 poses per lap and 21333 overall.
        assert!((20_000..22_500).contains(&pts.len()), "{}", pts.len());
        for lap in 0..4 {
            let n = pts.iter().filter(|p| p.lap_index == lap).count();
            assert!((5000..5600).contains(&n), "lap {lap}: {n}");
        }
    }

    #[test]
    fn spacing_is_speed_times_period() {
        let cfg = RouteConfig { laps: 1, ccw_laps: 1, ..RouteConfig::default() };
        let pts = generate_route(&cfg).unwrap();
        for w in pts[..100].windows(2) {
            let d = (w[1].pose.x_e - w[0].pose.x_e).hypot(w[1].pose.x_n - w[0].pose.x_n);
            assert!((d - 0.075).abs() < 1e-9);
        }
    }

    #[test]
    fn ccw_east_edge_heads_north_and_cw_south() {
        let cfg = RouteConfig::default();
        let pts = generate_route(&cfg).unwrap();
        let mid = |lap: usize| {
            pts.iter()
                .filter(|p| p.lap_index == lap && (p.pose.x_n - 50.0).abs() < 0.05 && p.pose.x_e > 90.0)
                .copied()
                .next()
                .unwrap()
        };
        let ccw = mid(0);
        assert!(heading_close(ccw.pose.gamma, 0.0, 1e-9), "{}", ccw.pose.gamma);
        assert!((ccw.pose.x_e - 101.5).abs() < 1e-9);
        let cw = mid(3);
        assert!(heading_close(cw.pose.gamma, 180.0, 1e-9), "{}", cw.pose.gamma);
        assert!((cw.pose.x_e - 98.5).abs() < 1e-9);
    }

    #[test]
    fn headings_cover_cardinal_directions() {
        let pts = generate_route(&RouteConfig::default()).unwrap();
        for target in [0.0, 90.0, -90.0, 180.0] {
            assert!(pts.iter().any(|p| heading_close(p.pose.gamma, target, 5.0)));
        }
        assert!(pts.iter().all(|p| (-180.0..180.0).contains(&p.pose.gamma)));
    }

    #[test]
    fn laps_are_contiguous_and_start_at_corner() {
        let cfg = RouteConfig { perimeter_width: 40.0, perimeter_height: 30.0, ..RouteConfig::default() };
        let pts = generate_route(&cfg).unwrap();
        assert!(pts.windows(2).all(|w| w[1].lap_index >= w[0].lap_index));
        for lap in 0..4 {
            let first = pts.iter().find(|p| p.lap_index == lap).unwrap();
            assert!(first.pose.x_e < 10.0 && first.pose.x_n < 10.0);
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        let bad = RouteConfig { perimeter_width: 0.0, ..RouteConfig::default() };
        assert!(matches!(generate_route(&bad), Err(Error::Config(_))));
        let bad = RouteConfig { ccw_laps: 5, ..RouteConfig::default() };
        assert!(generate_route(&bad).is_err());
        let bad = RouteConfig { speed: 0.0, ..RouteConfig::default() };
        assert!(generate_route(&bad).is_err());
        let bad = RouteConfig { corner_radius: 60.0, ..RouteConfig::default() };
        assert!(generate_route(&bad).is_err());
    }
}
