//! Superposition of multipath components into a CSI matrix.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::array::{array_response, ArrayGeometry};
use crate::error::{Error, Result};
use crate::sim::scene::MultipathComponent;

/// `exp(-j 2 pi f tau)`, with the phase reduced in cycles first.
pub(crate) fn delay_phasor(f: f64, tau: f64) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * (f * tau).fract())
}

/// `F[s, m] = sum_p gain_p * a_m(theta_p, phi_p) * exp(-j 2 pi f_s tau_p) + noise`.
///
/// Noise is circular complex Gaussian with total power `noise_floor_db`
/// below the strongest path's power; `None` gives a noiseless matrix.
pub fn synthesize_csi<R: Rng + ?Sized>(
    paths: &[MultipathComponent],
    geometry: &ArrayGeometry,
    subcarrier_frequencies: &[f64],
    noise_floor_db: Option<f64>,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    if subcarrier_frequencies.is_empty() {
        return Err(Error::Config("no subcarriers".into()));
    }
    let s_count = subcarrier_frequencies.len();
    let m_count = geometry.num_ports();
    let mut f = Array2::<Complex64>::zeros((s_count, m_count));
    let mut phasors = vec![Complex64::new(0.0, 0.0); s_count];
    for p in paths {
        let a = array_response(geometry, p.elevation, p.azimuth)?;
        for (ph, &freq) in phasors.iter_mut().zip(subcarrier_frequencies) {
            *ph = p.gain * delay_phasor(freq, p.delay);
        }
        for (s, mut row) in f.outer_iter_mut().enumerate() {
            let ph = phasors[s];
            row.iter_mut().zip(a.iter()).for_each(|(v, &am)| *v += ph * am);
        }
    }
    if let Some(db) = noise_floor_db {
        let strongest = paths.iter().map(|p| p.gain.norm()).fold(0.0, f64::max);
        let sigma = strongest * 10f64.powf(db / 20.0) / std::f64::consts::SQRT_2;
        if sigma > 0.0 {
            for v in f.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok(f)
}
