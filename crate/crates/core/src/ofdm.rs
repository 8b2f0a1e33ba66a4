//! OFDM subcarrier grid shared by the simulator, the delay matrix, and datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform subcarrier grid centred on the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmGrid {
    pub carrier_frequency: f64,
    pub subcarrier_spacing: f64,
    pub num_subcarriers: usize,
}

impl Default for OfdmGrid {
    /// 200 reference subcarriers every 90 kHz (every sixth 15 kHz LTE tone of a 20 MHz cell).
    fn default() -> Self {
        Self {
            carrier_frequency: 2.66e9,
            subcarrier_spacing: 90e3,
            num_subcarriers: 200,
        }
    }
}

impl OfdmGrid {
    /// Desk-scale grid: 64 subcarriers spanning the same 18 MHz as the default.
    pub fn desk() -> Self {
        Self {
            carrier_frequency: 2.66e9,
            subcarrier_spacing: 18e6 / 64.0,
            num_subcarriers: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::Config("grid has no subcarriers".into()));
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        Ok(())
    }

    /// Absolute subcarrier frequencies in Hz, strictly increasing.
    pub fn frequencies(&self) -> Vec<f64> {
        let mid = (self.num_subcarriers as f64 - 1.0) / 2.0;
        (0..self.num_subcarriers)
            .map(|s| self.carrier_frequency + (s as f64 - mid) * self.subcarrier_spacing)
            .collect()
    }

    /// One DFT-resolution delay tap, `1 / (S * spacing)`.
    pub fn default_tau_step(&self) -> f64 {
        1.0 / (self.num_subcarriers as f64 * self.subcarrier_spacing)
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_frequency
    }
}
