//! Ready-made parameter sets: the full-size drive and a small desk-scale one.

use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::nn::TrainConfig;
use crate::ofdm::OfdmGrid;
use crate::sim::{RouteConfig, SceneConfig};
use crate::wiometrics::{BdirConfig, MfadConfig, TransformParams, WiometricKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub route: RouteConfig,
    pub scene: SceneConfig,
    pub grid: OfdmGrid,
    pub geometry: ArrayGeometry,
    pub bdir: BdirConfig,
    pub mfad: MfadConfig,
    pub train: TrainConfig,
}

impl Scenario {
    /// 4 laps of a 100 m square, 128-port array, 200 subcarriers.
    pub fn full() -> Self {
        let route = RouteConfig::default();
        Self {
            scene: SceneConfig::urban_canyon(&route),
            route,
            grid: OfdmGrid::default(),
            geometry: ArrayGeometry::default(),
            bdir: BdirConfig::default(),
            mfad: MfadConfig::default(),
            train: TrainConfig::default(),
        }
    }

    /// About 4,000 snapshots per station: 4 laps of a 50 m square, a
    /// 32-port array and 64 subcarriers.
    pub fn desk() -> Self {
        let route = RouteConfig {
            perimeter_width: 50.0,
            perimeter_height: 50.0,
            speed: 2.5,
            ..RouteConfig::default()
        };
        Self {
            scene: SceneConfig::urban_canyon(&route),
            route,
            grid: OfdmGrid::desk(),
            geometry: ArrayGeometry::desk(),
            bdir: BdirConfig { delta_max: 32, delta_dec: 4 },
            mfad: MfadConfig {
                elevation_bins: 7,
                azimuth_bins: 36,
                num_taps: 16,
                tau_step: None,
            },
            train: TrainConfig {
                epochs: 25,
                learning_rate: 0.003,
                position_scale: 25.0,
                ..TrainConfig::default()
            },
        }
    }

    pub fn transform(&self, kind: WiometricKind) -> TransformParams {
        TransformParams::with_defaults(kind, self.bdir, self.mfad)
    }
}
