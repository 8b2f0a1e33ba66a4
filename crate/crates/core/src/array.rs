//! Stacked uniform circular array geometry, the discretized antenna response
//! matrix, and the delay matrix used by the matched filter.
//!
//! Port indexing is ring-major, then element-within-ring, then polarization:
//! `m = (ring * elements_per_ring + element) * polarizations + pol`.
//!
//! Angles follow the vehicle frame used throughout the crate: `theta` is the
//! polar angle from zenith (`pi/2` is the horizon) and `phi` is the azimuth
//! measured clockwise from the vehicle's forward axis. Element 0 of every
//! ring faces `phi = 0`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that an angular step divides its range.
const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub rings: usize,
    pub elements_per_ring: usize,
    pub polarizations: usize,
    /// Meters.
    pub ring_radius: f64,
    /// Vertical distance between adjacent rings, meters.
    pub ring_spacing: f64,
    /// Hz.
    pub carrier_frequency: f64,
    /// Exponent of the cosine-power element pattern; 0 gives isotropic elements.
    pub directivity_exponent: f64,
}

impl Default for ArrayGeometry {
    /// 4 rings of 16 dual-polarized patches (128 ports) at 2.66 GHz.
    fn default() -> Self {
        Self::half_wavelength(4, 16, 2, 2.66e9)
    }
}

impl ArrayGeometry {
    /// Rings spaced half a wavelength apart with half-wavelength arc spacing
    /// between neighbouring elements on a ring.
    pub fn half_wavelength(
        rings: usize,
        elements_per_ring: usize,
        polarizations: usize,
        carrier_frequency: f64,
    ) -> Self {
        let lambda = crate::SPEED_OF_LIGHT / carrier_frequency;
        Self {
            rings,
            elements_per_ring,
            polarizations,
            ring_radius: elements_per_ring.max(1) as f64 * lambda / (4.0 * PI),
            ring_spacing: lambda / 2.0,
            carrier_frequency,
            directivity_exponent: 2.0,
        }
    }

    /// Desk-scale array: 2 rings of 8 dual-polarized patches (32 ports).
    pub fn desk() -> Self {
        Self::half_wavelength(2, 8, 2, 2.66e9)
    }

    pub fn num_ports(&self) -> usize {
        self.rings * self.elements_per_ring * self.polarizations
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn port_index(&self, ring: usize, element: usize, pol: usize) -> usize {
        (ring * self.elements_per_ring + element) * self.polarizations + pol
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings == 0 || self.elements_per_ring == 0 || self.polarizations == 0 {
            return Err(Error::Config("array dimensions must be non-zero".into()));
        }
        if !(self.ring_radius > 0.0 && self.ring_radius.is_finite()) {
            return Err(Error::Config("ring radius must be positive".into()));
        }
        if !(self.ring_spacing >= 0.0 && self.ring_spacing.is_finite()) {
            return Err(Error::Config("ring spacing must be non-negative".into()));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        if !(self.directivity_exponent >= 0.0) {
            return Err(Error::Config("directivity exponent must be >= 0".into()));
        }
        Ok(())
    }

    /// Element centre `(x, y, z)` in the array frame; x forward, y at `phi = pi/2`, z up.
    fn element_position(&self, ring: usize, element: usize) -> [f64; 3] {
        let alpha = self.element_azimuth(element);
        let z = (ring as f64 - (self.rings as f64 - 1.0) / 2.0) * self.ring_spacing;
        [self.ring_radius * alpha.cos(), self.ring_radius * alpha.sin(), z]
    }

    fn element_azimuth(&self, element: usize) -> f64 {
        TAU * element as f64 / self.elements_per_ring as f64
    }
}

/// Wraps an azimuth into `[-pi, pi)`.
pub fn wrap_azimuth(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Complex response of every port to a unit plane wave arriving from `(theta, phi)`.
///
/// Each element has gain `((1 + cos psi) / 2)^n` where `psi` is the angle to
/// its outward normal, so the pattern peaks on boresight and never vanishes
/// except directly behind the element. The second polarization port of a
/// patch carries an extra 90 degree phase.
pub fn array_response(geometry: &ArrayGeometry, theta: f64, phi: f64) -> Result<Array1<Complex64>> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("elevation {theta} outside [0, pi]")));
    }
    if !phi.is_finite() {
        return Err(Error::Domain(format!("azimuth {phi} is not finite")));
    }
    let phi = wrap_azimuth(phi);
    let k = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
    let wavenumber = TAU / geometry.wavelength();
    let mut out = Array1::zeros(geometry.num_ports());
    for ring in 0..geometry.rings {
        for element in 0..geometry.elements_per_ring {
            let r = geometry.element_position(ring, element);
            let alpha = geometry.element_azimuth(element);
            let cos_psi = theta.sin() * (phi - alpha).cos();
            let gain = if geometry.directivity_exponent == 0.0 {
                1.0
            } else {
                (0.5 * (1.0 + cos_psi)).max(0.0).powf(geometry.directivity_exponent)
            };
            let phase = wavenumber * (k[0] * r[0] + k[1] * r[1] + k[2] * r[2]);
            let base = Complex64::from_polar(gain, phase);
            for pol in 0..geometry.polarizations {
                let offset = Complex64::from_polar(1.0, pol as f64 * FRAC_PI_2);
                out[geometry.port_index(ring, element, pol)] = base * offset;
            }
        }
    }
    Ok(out)
}

/// `A`: one column per (elevation, azimuth) grid point, elevation-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaResponseMatrix {
    pub entries: Array2<Complex64>,
    pub delta_theta: f64,
    pub delta_phi: f64,
}

impl AntennaResponseMatrix {
    pub fn num_elevations(&self) -> usize {
        grid_count(PI, self.delta_theta) + 1
    }

    pub fn num_azimuths(&self) -> usize {
        grid_count(TAU, self.delta_phi)
    }

    /// Elevation of grid row `a`.
    pub fn elevation(&self, a: usize) -> f64 {
        a as f64 * self.delta_theta
    }

    /// Azimuth of grid column `b`; the grid starts at `-pi`.
    pub fn azimuth(&self, b: usize) -> f64 {
        -PI + b as f64 * self.delta_phi
    }

    /// Column index of grid point `(a, b)`.
    pub fn column(&self, a: usize, b: usize) -> usize {
        a * self.num_azimuths() + b
    }

    /// Azimuth bin whose cell `[phi_b - d/2, phi_b + d/2)` contains `phi`.
    pub fn azimuth_bin(&self, phi: f64) -> usize {
        let n = self.num_azimuths();
        let b = ((wrap_azimuth(phi) + PI) / self.delta_phi + 0.5).floor() as usize;
        b % n
    }
}

fn grid_count(range: f64, step: f64) -> usize {
    (range / step).round() as usize
}

fn check_divides(range: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("{what} step must be positive, got {step}")));
    }
    let ratio = range / step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > STEP_TOLERANCE * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "{what} step {step} does not divide {range}"
        )));
    }
    Ok(n as usize)
}

pub fn build_antenna_matrix(
    geometry: &ArrayGeometry,
    delta_theta: f64,
    delta_phi: f64,
) -> Result<AntennaResponseMatrix> {
    geometry.validate()?;
    let n_theta = check_divides(PI, delta_theta, "elevation")? + 1;
    let n_phi = check_divides(TAU, delta_phi, "azimuth")?;
    let mut entries = Array2::zeros((geometry.num_ports(), n_theta * n_phi));
    for a in 0..n_theta {
        // Clamp so the last row sits exactly on pi despite rounding.
        let theta = (a as f64 * delta_theta).min(PI);
        for b in 0..n_phi {
            let phi = -PI + b as f64 * delta_phi;
            let col = array_response(geometry, theta, phi)?;
            entries.column_mut(a * n_phi + b).assign(&col);
        }
    }
    Ok(AntennaResponseMatrix {
        entries,
        delta_theta,
        delta_phi,
    })
}

/// `D`: entry `(s, t) = exp(-j 2 pi f_s tau_step t)`.
///
/// Channel snapshots carry `exp(-j 2 pi f tau)` per path, so the matched
/// filter `F D*` re-aligns the phase of a path whose delay sits on tap `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    pub entries: Array2<Complex64>,
    pub tau_step: f64,
    pub subcarrier_frequencies: Vec<f64>,
}

impl DelayMatrix {
    pub fn num_taps(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn build_delay_matrix(
    subcarrier_frequencies: &[f64],
    tau_step: f64,
    num_taps: usize,
) -> Result<DelayMatrix> {
    if subcarrier_frequencies.is_empty() {
        return Err(Error::Config("delay matrix needs at least one subcarrier".into()));
    }
    if num_taps == 0 {
        return Err(Error::Config("delay matrix needs at least one tap".into()));
    }
    if !(tau_step > 0.0 && tau_step.is_finite()) {
        return Err(Error::Config(format!("tau step must be positive, got {tau_step}")));
    }
    if subcarrier_frequencies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("subcarrier frequencies must be strictly increasing".into()));
    }
    let entries = Array2::from_shape_fn((subcarrier_frequencies.len(), num_taps), |(s, t)| {
        if t == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            // Reduce the phase in cycles first; f * tau * t reaches ~1e4 cycles.
            let cycles = (subcarrier_frequencies[s] * tau_step * t as f64).fract();
            Complex64::from_polar(1.0, -TAU * cycles)
        }
    });
    Ok(DelayMatrix {
        entries,
        tau_step,
        subcarrier_frequencies: subcarrier_frequencies.to_vec(),
    })
}
