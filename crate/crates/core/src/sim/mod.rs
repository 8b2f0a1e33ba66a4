//! Synthetic drive: a closed-loop route, a propagation scene, and the CSI
//! each base station produces at every pose.

pub mod csi;
pub mod route;
pub mod scene;

use ndarray::{Array3, Axis};
use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use csi::synthesize_csi;
pub use route::{generate_route, lap_length, RouteConfig, RoutePoint};
pub use scene::{synthesize_paths, BaseStation, MultipathComponent, SceneConfig, Wall};

use crate::array::ArrayGeometry;
use crate::dataset::{Content, Dataset, Record, Station, TensorStack};
use crate::error::{Error, Result};
use crate::ofdm::OfdmGrid;

/// Seed of the noise stream for one (snapshot, station) pair, independent of
/// the order in which snapshots are synthesized.
pub fn snapshot_seed(scene_seed: u64, route_seed: u64, snapshot_index: usize, bs_id: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = scene_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(route_seed.rotate_left(17))
        .wrapping_add((snapshot_index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((bs_id as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One CSI snapshot per route pose per base station.
pub fn simulate(route: &RouteConfig, scene: &SceneConfig, grid: &OfdmGrid, geometry: &ArrayGeometry) -> Result<Dataset> {
    route.validate()?;
    scene.validate()?;
    grid.validate()?;
    geometry.validate()?;
    if (geometry.carrier_frequency - grid.carrier_frequency).abs() > 1e-6 * grid.carrier_frequency {
        return Err(Error::Config(format!(
            "array is designed for {} Hz but the grid is centred on {} Hz",
            geometry.carrier_frequency, grid.carrier_frequency
        )));
    }
    let points = generate_route(route)?;
    let freqs = grid.frequencies();
    let scatterers = scene.scatterers();
    let (s_count, m_count) = (grid.num_subcarriers, geometry.num_ports());
    let mut stations = Vec::with_capacity(scene.base_stations.len());
    for (bs_id, bs) in scene.base_stations.iter().enumerate() {
        let mut stack = Array3::<Complex32>::zeros((points.len(), s_count, m_count));
        for (i, (pt, mut slot)) in points.iter().zip(stack.axis_iter_mut(Axis(0))).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(snapshot_seed(scene.seed, route.seed, i, bs_id));
            let mut paths = scene::synthesize_paths_with(&pt.pose, scene, bs_id, &scatterers)?;
            if scene.timing_jitter > 0.0 {
                let offset = Normal::new(0.0, scene.timing_jitter)
                    .expect("positive std")
                    .sample(&mut rng);
                paths.iter_mut().for_each(|p| p.delay += offset);
            }
            if scene.path_gain_jitter_db > 0.0 || scene.path_phase_jitter_deg > 0.0 {
                let unit = Normal::new(0.0, 1.0).expect("unit normal");
                for p in paths.iter_mut() {
                    let db = scene.path_gain_jitter_db * unit.sample(&mut rng);
                    let phase = scene.path_phase_jitter_deg.to_radians() * unit.sample(&mut rng);
                    p.gain *= Complex64::from_polar(10f64.powf(db / 20.0), phase);
                }
            }
            let f = synthesize_csi(&paths, geometry, &freqs, scene.noise_floor_db, &mut rng)?;
            slot.zip_mut_with(&f, |d, z| *d = Complex32::new(z.re as f32, z.im as f32));
        }
        log::debug!("station {} synthesized {} snapshots", bs.id, points.len());
        stations.push(Station {
            id: bs.id.clone(),
            tensors: TensorStack::Complex(stack),
        });
    }
    let records = points
        .iter()
        .enumerate()
        .map(|(i, p)| Record {
            pose: p.pose,
            lap_index: p.lap_index,
            snapshot_index: i,
        })
        .collect();
    Ok(Dataset {
        grid: *grid,
        geometry: *geometry,
        content: Content::Csi,
        stations,
        records,
        source: serde_json::json!({ "route": route, "scene": scene }),
    })
}
