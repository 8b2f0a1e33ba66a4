//! Propagation geometry: base stations, reflecting walls, and diffuse
//! scatterers. Paths are traced with free-space spreading, single-bounce
//! image reflections off vertical walls, and one-hop diffuse scattering.
//! A wall blocks a path leg that crosses it below the wall's height.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::wrap_azimuth;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::sim::route::RouteConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: String,
    /// `(east, north, height)` in meters.
    pub position: [f64; 3],
    /// Suppress the direct path regardless of wall geometry.
    #[serde(default)]
    pub blocked_los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub reflection_loss_db: f64,
    /// Meters; `None` is unbounded.
    #[serde(default)]
    pub height: Option<f64>,
}

impl Wall {
    fn covers(&self, z: f64) -> bool {
        self.height.is_none_or(|h| z < h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub base_stations: Vec<BaseStation>,
    pub walls: Vec<Wall>,
    pub diffuse_scatterer_count: usize,
    /// Scatterers are drawn uniformly in this `[min_e, min_n, max_e, max_n]` box.
    pub scatterer_region: [f64; 4],
    /// Linear amplitude of a scatterer relative to a specular bounce, in dB.
    pub scatterer_gain_db: f64,
    /// Noise power relative to the strongest path, dB. `None` disables noise.
    pub noise_floor_db: Option<f64>,
    /// Receive antenna height, meters.
    pub rx_height: f64,
    /// Standard deviation of a per-snapshot timing offset, in seconds.
    pub timing_jitter: f64,
    /// Standard deviation of independent per-path, per-snapshot gain
    /// fluctuations, dB.
    pub path_gain_jitter_db: f64,
    /// Standard deviation of per-path, per-snapshot phase fluctuations, degrees.
    pub path_phase_jitter_deg: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::urban_canyon(&RouteConfig::default())
    }
}

impl SceneConfig {
    /// A block of buildings inside the loop, broken street fronts outside it,
    /// and two base stations: one with its direct path always suppressed, the
    /// other in view whenever the buildings allow.
    pub fn urban_canyon(route: &RouteConfig) -> Self {
        let (w, h) = (route.perimeter_width, route.perimeter_height);
        let setback = 0.12 * w.min(h) + route.lateral_lane_offset;
        let inner = [setback, setback, w - setback, h - setback];
        let outer = [-setback, -setback, w + setback, h + setback];
        let mut walls = Vec::new();
        let concrete = 6.0;
        let glass = 9.0;
        // Inner block, closed.
        let corners = [
            [inner[0], inner[1]],
            [inner[2], inner[1]],
            [inner[2], inner[3]],
            [inner[0], inner[3]],
        ];
        for i in 0..4 {
            walls.push(Wall {
                start: corners[i],
                end: corners[(i + 1) % 4],
                reflection_loss_db: if i % 2 == 0 { concrete } else { glass },
                height: Some(25.0),
            });
        }
        // Outer facades, each side split by a side street.
        let gap = 0.08 * w.min(h);
        let sides = [
            ([outer[0], outer[1]], [outer[2], outer[1]]),
            ([outer[2], outer[1]], [outer[2], outer[3]]),
            ([outer[2], outer[3]], [outer[0], outer[3]]),
            ([outer[0], outer[3]], [outer[0], outer[1]]),
        ];
        for (i, (a, b)) in sides.iter().enumerate() {
            let split = [0.4, 0.6, 0.55, 0.35][i];
            let lerp = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let g = gap / len / 2.0;
            let loss = if i % 2 == 0 { glass } else { concrete };
            let height = Some(3.5);
            walls.push(Wall { start: *a, end: lerp(split - g), reflection_loss_db: loss, height });
            walls.push(Wall { start: lerp(split + g), end: *b, reflection_loss_db: loss, height });
        }
        let span = w.max(h);
        Self {
            base_stations: vec![
                BaseStation {
                    id: "A".into(),
                    position: [-1.6 * span, 1.3 * h, 40.0],
                    blocked_los: true,
                },
                BaseStation {
                    id: "B".into(),
                    position: [w + 1.2 * span, -0.9 * span, 35.0],
                    blocked_los: false,
                },
            ],
            walls,
            diffuse_scatterer_count: 32,
            scatterer_region: [outer[0], outer[1], outer[2], outer[3]],
            scatterer_gain_db: -12.0,
            noise_floor_db: Some(-25.0),
            rx_height: 2.0,
            timing_jitter: 60e-9,
            path_gain_jitter_db: 3.0,
            path_phase_jitter_deg: 20.0,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_stations.is_empty() {
            return Err(Error::Config("scene needs at least one base station".into()));
        }
        if let Some(w) = self.walls.iter().find(|w| !(w.reflection_loss_db >= 0.0)) {
            return Err(Error::Config(format!(
                "reflection loss must be >= 0 dB, got {}",
                w.reflection_loss_db
            )));
        }
        if !(self.timing_jitter >= 0.0 && self.path_gain_jitter_db >= 0.0 && self.path_phase_jitter_deg >= 0.0) {
            return Err(Error::Config("jitter magnitudes must be >= 0".into()));
        }
        let r = self.scatterer_region;
        if self.diffuse_scatterer_count > 0 && !(r[2] > r[0] && r[3] > r[1]) {
            return Err(Error::Config("scatterer region is empty".into()));
        }
        Ok(())
    }

    /// Fixed scatterer positions and reflection coefficients, drawn from `seed`.
    pub fn scatterers(&self) -> Vec<Scatterer> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5ca7_7e25);
        let amp = 10f64.powf(self.scatterer_gain_db / 20.0);
        let r = self.scatterer_region;
        (0..self.diffuse_scatterer_count)
            .map(|_| Scatterer {
                position: [
                    rng.random_range(r[0]..r[2]),
                    rng.random_range(r[1]..r[3]),
                    rng.random_range(0.0..30.0),
                ],
                coefficient: Complex64::from_polar(amp, rng.random_range(0.0..TAU)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: [f64; 3],
    pub coefficient: Complex64,
}

/// One propagation path as seen by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathComponent {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Radians, vehicle frame, clockwise from forward, in `[-pi, pi)`.
    pub azimuth: f64,
    /// Radians from zenith.
    pub elevation: f64,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Proper intersection of segments `p1p2` and `q1q2` (touching endpoints
/// excluded), as the fraction along `p1p2`.
fn segment_crossing(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> Option<f64> {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 * d2 < 0.0 && d3 * d4 < 0.0).then(|| d1 / (d1 - d2))
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    segment_crossing(p1, p2, q1, q2).is_some()
}

fn occluded(a: [f64; 3], b: [f64; 3], walls: &[Wall], skip: Option<usize>) -> bool {
    walls.iter().enumerate().any(|(i, w)| {
        Some(i) != skip
            && segment_crossing(xy(a), xy(b), w.start, w.end).is_some_and(|s| w.covers(a[2] + s * (b[2] - a[2])))
    })
}

fn mirror(p: [f64; 2], wall: &Wall) -> [f64; 2] {
    let (a, b) = (wall.start, wall.end);
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2;
    let foot = [a[0] + t * d[0], a[1] + t * d[1]];
    [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]]
}

/// Arrival angles at `rx` of a wave coming from `src`, rotated into the vehicle frame.
fn arrival_angles(rx: [f64; 3], src: [f64; 3], gamma_deg: f64) -> (f64, f64) {
    let de = src[0] - rx[0];
    let dn = src[1] - rx[1];
    let dz = src[2] - rx[2];
    let dist = (de * de + dn * dn + dz * dz).sqrt();
    let bearing = de.atan2(dn);
    let azimuth = wrap_azimuth(bearing - gamma_deg.to_radians());
    let elevation = (dz / dist).clamp(-1.0, 1.0).acos();
    (azimuth, elevation)
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn xy(p: [f64; 3]) -> [f64; 2] {
    [p[0], p[1]]
}

/// Traces the line-of-sight, wall-reflected, and diffuse paths from base
/// station `bs_id` to the vehicle at `pose`. Amplitudes are referenced to 1 m.
pub fn synthesize_paths(pose: &Pose, scene: &SceneConfig, bs_id: usize) -> Result<Vec<MultipathComponent>> {
    let scatterers = scene.scatterers();
    synthesize_paths_with(pose, scene, bs_id, &scatterers)
}

pub(crate) fn synthesize_paths_with(
    pose: &Pose,
    scene: &SceneConfig,
    bs_id: usize,
    scatterers: &[Scatterer],
) -> Result<Vec<MultipathComponent>> {
    let bs = scene
        .base_stations
        .get(bs_id)
        .ok_or_else(|| Error::Config(format!("no base station with index {bs_id}")))?;
    let tx = bs.position;
    let rx = [pose.x_e, pose.x_n, scene.rx_height];
    let c = crate::SPEED_OF_LIGHT;
    let mut paths = Vec::new();

    if !bs.blocked_los && !occluded(tx, rx, &scene.walls, None) {
        let d = dist3(tx, rx);
        let (azimuth, elevation) = arrival_angles(rx, tx, pose.gamma);
        paths.push(MultipathComponent {
            gain: Complex64::new(1.0 / d, 0.0),
            delay: d / c,
            azimuth,
            elevation,
        });
    }

    for (i, wall) in scene.walls.iter().enumerate() {
        let (a, b) = (wall.start, wall.end);
        let s_tx = cross(a, b, xy(tx));
        let s_rx = cross(a, b, xy(rx));
        // Both ends must face the same side of the wall.
        if s_tx * s_rx <= 0.0 {
            continue;
        }
        let img2 = mirror(xy(tx), wall);
        if !segments_cross(xy(rx), img2, a, b) {
            continue;
        }
        // Bounce point: where the rx-image line meets the wall.
        let t = s_rx / (s_rx - cross(a, b, img2));
        let hit = [
            rx[0] + t * (img2[0] - rx[0]),
            rx[1] + t * (img2[1] - rx[1]),
            rx[2] + t * (tx[2] - rx[2]),
        ];
        if !wall.covers(hit[2]) || occluded(tx, hit, &scene.walls, Some(i)) || occluded(hit, rx, &scene.walls, Some(i)) {
            continue;
        }
        let image = [img2[0], img2[1], tx[2]];
        let d = dist3(image, rx);
        let (azimuth, elevation) = arrival_angles(rx, image, pose.gamma);
        let amp = 10f64.powf(-wall.reflection_loss_db / 20.0) / d;
        paths.push(MultipathComponent {
            // Reflection flips the field.
            gain: Complex64::new(-amp, 0.0),
            delay: d / c,
            azimuth,
            elevation,
        });
    }

    for s in scatterers {
        let p = s.position;
        if occluded(tx, p, &scene.walls, None) || occluded(p, rx, &scene.walls, None) {
            continue;
        }
        let d = dist3(tx, p) + dist3(p, rx);
        let (azimuth, elevation) = arrival_angles(rx, p, pose.gamma);
        paths.push(MultipathComponent {
            gain: s.coefficient / d,
            delay: d / c,
            azimuth,
            elevation,
        });
    }
    Ok(paths)
}
