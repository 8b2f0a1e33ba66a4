//! The four real-valued channel representations computed from one CSI matrix
//! `F` (subcarriers x ports):
//!
//! * ACSI: elementwise magnitude, `S x M`.
//! * CCSI: real and imaginary parts interleaved column by column, `S x 2M`.
//! * BDIR: magnitudes of decimated frequency autocorrelations of the
//!   beam-domain CSI, `L x M`. Insensitive to timing offsets.
//! * MFAD: matched filter over an (elevation, azimuth, delay) grid, summed
//!   incoherently over elevation, `N_phi x T`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{build_antenna_matrix, build_delay_matrix, AntennaResponseMatrix, ArrayGeometry, DelayMatrix};
use crate::error::{Error, Result};
use crate::ofdm::OfdmGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WiometricKind {
    Acsi,
    Ccsi,
    Bdir,
    Mfad,
}

impl WiometricKind {
    pub const ALL: [WiometricKind; 4] = [Self::Acsi, Self::Ccsi, Self::Bdir, Self::Mfad];

    pub fn name(self) -> &'static str {
        match self {
            Self::Acsi => "acsi",
            Self::Ccsi => "ccsi",
            Self::Bdir => "bdir",
            Self::Mfad => "mfad",
        }
    }

    /// Whether every output entry is guaranteed non-negative.
    pub fn is_non_negative(self) -> bool {
        !matches!(self, Self::Ccsi)
    }
}

impl fmt::Display for WiometricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WiometricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acsi" => Ok(Self::Acsi),
            "ccsi" => Ok(Self::Ccsi),
            "bdir" => Ok(Self::Bdir),
            "mfad" => Ok(Self::Mfad),
            other => Err(Error::Config(format!(
                "unknown wiometric kind {other:?}; expected one of acsi, ccsi, bdir, mfad"
            ))),
        }
    }
}

/// Where a representation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub snapshot_index: usize,
    pub bs_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wiometric {
    pub kind: WiometricKind,
    pub tensor: Array2<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BdirConfig {
    pub delta_max: usize,
    pub delta_dec: usize,
}

impl Default for BdirConfig {
    fn default() -> Self {
        Self {
            delta_max: 128,
            delta_dec: 4,
        }
    }
}

impl BdirConfig {
    /// Number of autocorrelation lags, `floor(delta_max / delta_dec)`.
    pub fn num_lags(&self) -> usize {
        self.delta_max / self.delta_dec
    }

    fn lag(&self, l: usize) -> usize {
        (l + 1) * self.delta_dec
    }

    /// Every lag needs at least one product inside the `num_subcarriers` window.
    pub fn validate(&self, num_subcarriers: usize) -> Result<()> {
        if self.delta_dec == 0 || self.delta_max < self.delta_dec {
            return Err(Error::Config(format!(
                "bdir needs 0 < delta_dec <= delta_max, got {self:?}"
            )));
        }
        let largest = self.lag(self.num_lags() - 1);
        if largest >= num_subcarriers {
            return Err(Error::Shape(format!(
                "bdir lag {largest} does not fit {num_subcarriers} subcarriers"
            )));
        }
        Ok(())
    }
}

/// Grid of the matched filter: `elevation_bins` rows spanning `[0, pi]`
/// inclusive, `azimuth_bins` columns spanning `[-pi, pi)`, `num_taps` delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfadConfig {
    pub elevation_bins: usize,
    pub azimuth_bins: usize,
    pub num_taps: usize,
    /// Seconds per tap; `None` uses one DFT-resolution tap of the grid.
    #[serde(default)]
    pub tau_step: Option<f64>,
}

impl Default for MfadConfig {
    fn default() -> Self {
        Self {
            elevation_bins: 19,
            azimuth_bins: 150,
            num_taps: 90,
            tau_step: None,
        }
    }
}

impl MfadConfig {
    pub fn delta_theta(&self) -> f64 {
        std::f64::consts::PI / (self.elevation_bins.max(2) - 1) as f64
    }

    pub fn delta_phi(&self) -> f64 {
        std::f64::consts::TAU / self.azimuth_bins.max(1) as f64
    }

    pub fn tau_step_for(&self, grid: &OfdmGrid) -> f64 {
        self.tau_step.unwrap_or_else(|| grid.default_tau_step())
    }

    pub fn validate(&self) -> Result<()> {
        if self.elevation_bins < 2 || self.azimuth_bins == 0 || self.num_taps == 0 {
            return Err(Error::Config(format!(
                "mfad grid needs >= 2 elevations, >= 1 azimuth and >= 1 tap, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn build_matrices(
        &self,
        geometry: &ArrayGeometry,
        grid: &OfdmGrid,
    ) -> Result<(AntennaResponseMatrix, DelayMatrix)> {
        self.validate()?;
        let a = build_antenna_matrix(geometry, self.delta_theta(), self.delta_phi())?;
        let d = build_delay_matrix(&grid.frequencies(), self.tau_step_for(grid), self.num_taps)?;
        Ok((a, d))
    }
}

pub fn acsi(f: ArrayView2<'_, Complex64>) -> Array2<f64> {
    f.mapv(|z| z.norm())
}

pub fn ccsi(f: ArrayView2<'_, Complex64>) -> Array2<f64> {
    let (rows, cols) = f.dim();
    Array2::from_shape_fn((rows, 2 * cols), |(s, c)| {
        let z = f[[s, c / 2]];
        if c % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// Inverse of [`ccsi`].
pub fn deinterleave(x: ArrayView2<'_, f64>) -> Result<Array2<Complex64>> {
    let (rows, cols) = x.dim();
    if cols % 2 != 0 {
        return Err(Error::Shape(format!("interleaved matrix has odd width {cols}")));
    }
    Ok(Array2::from_shape_fn((rows, cols / 2), |(s, m)| {
        Complex64::new(x[[s, 2 * m]], x[[s, 2 * m + 1]])
    }))
}

/// Unnormalized 2-D DFT over the (ring, element) axes of every subcarrier
/// and polarization.
pub struct BeamTransform {
    geometry: ArrayGeometry,
    ring_fft: Arc<dyn Fft<f64>>,
    element_fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for BeamTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BeamTransform").field("geometry", &self.geometry).finish()
    }
}

impl BeamTransform {
    pub fn new(geometry: &ArrayGeometry) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            geometry: *geometry,
            ring_fft: planner.plan_fft_forward(geometry.rings),
            element_fft: planner.plan_fft_forward(geometry.elements_per_ring),
        }
    }

    pub fn apply(&self, f: ArrayView2<'_, Complex64>) -> Result<Array2<Complex64>> {
        let g = &self.geometry;
        let m = g.num_ports();
        if f.ncols() != m {
            return Err(Error::Shape(format!(
                "csi has {} ports, geometry declares {m}",
                f.ncols()
            )));
        }
        let (rings, elems, pols) = (g.rings, g.elements_per_ring, g.polarizations);
        let mut out = Array2::zeros(f.raw_dim());
        let mut plane = vec![Complex64::new(0.0, 0.0); rings * elems];
        let mut column = vec![Complex64::new(0.0, 0.0); rings];
        for (s, row) in f.outer_iter().enumerate() {
            for p in 0..pols {
                for r in 0..rings {
                    for e in 0..elems {
                        plane[r * elems + e] = row[g.port_index(r, e, p)];
                    }
                }
                for chunk in plane.chunks_exact_mut(elems) {
                    self.element_fft.process(chunk);
                }
                for e in 0..elems {
                    for r in 0..rings {
                        column[r] = plane[r * elems + e];
                    }
                    self.ring_fft.process(&mut column);
                    for r in 0..rings {
                        out[[s, g.port_index(r, e, p)]] = column[r];
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn beam_transform(f: ArrayView2<'_, Complex64>, geometry: &ArrayGeometry) -> Result<Array2<Complex64>> {
    BeamTransform::new(geometry).apply(f)
}

/// Row `l` holds `|sum_n y(n) conj(y(n + delta_l))|` per beam column, with
/// `delta_l = (l + 1) * delta_dec`. The sum runs over the first `delta_max`
/// subcarriers, truncated to those whose partner `n + delta_l` still exists.
pub fn bdir_from_beams(y: ArrayView2<'_, Complex64>, config: &BdirConfig) -> Result<Array2<f64>> {
    let (subcarriers, ports) = y.dim();
    config.validate(subcarriers)?;
    let lags = config.num_lags();
    let mut out = Array2::zeros((lags, ports));
    for m in 0..ports {
        let col = y.column(m);
        for l in 0..lags {
            let lag = config.lag(l);
            let window = config.delta_max.min(subcarriers - lag);
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..window {
                acc += col[n] * col[n + lag].conj();
            }
            out[[l, m]] = acc.norm();
        }
    }
    Ok(out)
}

pub fn bdir(f: ArrayView2<'_, Complex64>, geometry: &ArrayGeometry, config: &BdirConfig) -> Result<Array2<f64>> {
    config.validate(f.nrows())?;
    let y = beam_transform(f, geometry)?;
    bdir_from_beams(y.view(), config)
}

fn check_matched_filter_dims(f: &ArrayView2<'_, Complex64>, a: &AntennaResponseMatrix, d: &DelayMatrix) -> Result<()> {
    if a.entries.nrows() != f.ncols() {
        return Err(Error::Shape(format!(
            "antenna matrix has {} ports, csi has {}",
            a.entries.nrows(),
            f.ncols()
        )));
    }
    if d.entries.nrows() != f.nrows() {
        return Err(Error::Shape(format!(
            "delay matrix has {} subcarriers, csi has {}",
            d.entries.nrows(),
            f.nrows()
        )));
    }
    Ok(())
}

/// `A^H F D*` reshaped to `(elevation, azimuth, delay)`.
pub fn mfpd(f: ArrayView2<'_, Complex64>, a: &AntennaResponseMatrix, d: &DelayMatrix) -> Result<Array3<Complex64>> {
    check_matched_filter_dims(&f, a, d)?;
    // (M x S)(S x T) first: far fewer products than starting from A^H F.
    let fd = f.t().dot(&d.entries.mapv(|z| z.conj()));
    let ah = a.entries.t().mapv(|z| z.conj());
    let y = ah.dot(&fd);
    let (n_theta, n_phi, taps) = (a.num_elevations(), a.num_azimuths(), d.num_taps());
    y.into_shape_with_order((n_theta, n_phi, taps))
        .map_err(|e| Error::Shape(format!("mfpd reshape: {e}")))
}

pub fn mfad(f: ArrayView2<'_, Complex64>, a: &AntennaResponseMatrix, d: &DelayMatrix) -> Result<Array2<f64>> {
    let y = mfpd(f, a, d)?;
    Ok(y.mapv(|z| z.norm()).sum_axis(Axis(0)))
}

/// Precomputed state for applying one representation to many snapshots.
/// The antenna and delay matrices are built once and shared.
#[derive(Debug)]
pub enum Transformer {
    Acsi,
    Ccsi,
    Bdir { beams: BeamTransform, config: BdirConfig },
    Mfad { a: AntennaResponseMatrix, d: DelayMatrix },
}

/// Everything needed to rebuild a [`Transformer`]; recorded in dataset metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformParams {
    Acsi,
    Ccsi,
    Bdir(BdirConfig),
    Mfad(MfadConfig),
}

impl TransformParams {
    pub fn kind(&self) -> WiometricKind {
        match self {
            Self::Acsi => WiometricKind::Acsi,
            Self::Ccsi => WiometricKind::Ccsi,
            Self::Bdir(_) => WiometricKind::Bdir,
            Self::Mfad(_) => WiometricKind::Mfad,
        }
    }

    pub fn with_defaults(kind: WiometricKind, bdir: BdirConfig, mfad: MfadConfig) -> Self {
        match kind {
            WiometricKind::Acsi => Self::Acsi,
            WiometricKind::Ccsi => Self::Ccsi,
            WiometricKind::Bdir => Self::Bdir(bdir),
            WiometricKind::Mfad => Self::Mfad(mfad),
        }
    }

    /// Output tensor shape for a dataset with `grid` and `geometry`.
    pub fn output_shape(&self, grid: &OfdmGrid, geometry: &ArrayGeometry) -> (usize, usize) {
        let (s, m) = (grid.num_subcarriers, geometry.num_ports());
        match self {
            Self::Acsi => (s, m),
            Self::Ccsi => (s, 2 * m),
            Self::Bdir(c) => (c.num_lags(), m),
            Self::Mfad(c) => (c.azimuth_bins, c.num_taps),
        }
    }
}

impl Transformer {
    pub fn new(params: &TransformParams, geometry: &ArrayGeometry, grid: &OfdmGrid) -> Result<Self> {
        Ok(match params {
            TransformParams::Acsi => Self::Acsi,
            TransformParams::Ccsi => Self::Ccsi,
            TransformParams::Bdir(config) => {
                config.validate(grid.num_subcarriers)?;
                Self::Bdir {
                    beams: BeamTransform::new(geometry),
                    config: *config,
                }
            }
            TransformParams::Mfad(config) => {
                let (a, d) = config.build_matrices(geometry, grid)?;
                log::info!(
                    "mfad matrices built once: A {}x{}, D {}x{}",
                    a.entries.nrows(),
                    a.entries.ncols(),
                    d.entries.nrows(),
                    d.entries.ncols()
                );
                Self::Mfad { a, d }
            }
        })
    }

    pub fn kind(&self) -> WiometricKind {
        match self {
            Self::Acsi => WiometricKind::Acsi,
            Self::Ccsi => WiometricKind::Ccsi,
            Self::Bdir { .. } => WiometricKind::Bdir,
            Self::Mfad { .. } => WiometricKind::Mfad,
        }
    }

    pub fn apply(&self, f: ArrayView2<'_, Complex64>) -> Result<Array2<f64>> {
        match self {
            Self::Acsi => Ok(acsi(f)),
            Self::Ccsi => Ok(ccsi(f)),
            Self::Bdir { beams, config } => bdir_from_beams(beams.apply(f)?.view(), config),
            Self::Mfad { a, d } => mfad(f, a, d),
        }
    }

    pub fn wiometric(&self, f: ArrayView2<'_, Complex64>, provenance: Provenance) -> Result<Wiometric> {
        Ok(Wiometric {
            kind: self.kind(),
            tensor: self.apply(f)?,
            provenance,
        })
    }
}

/// Index of the largest entry, first occurrence on ties.
pub fn argmax2(x: ArrayView2<'_, f64>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for ((i, j), &v) in x.indexed_iter() {
        if v > best_v {
            best_v = v;
            best = (i, j);
        }
    }
    best
}
