//! Pose-labelled datasets on disk, train/test splits, and input standardization.
//!
//! A dataset directory holds `metadata.json` and one blob per base station
//! (`station_<i>.wiom`) stacking that station's tensors for every record
//! along the first axis.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::{Complex32, Complex64};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::container::{read_blob, write_blob, Blob, BlobData};
use crate::error::{Error, LoadError, Result};
use crate::ofdm::OfdmGrid;
use crate::pose::Pose;
use crate::wiometrics::{TransformParams, WiometricKind};

pub const METADATA_FILE: &str = "metadata.json";
pub const DATASET_FORMAT: &str = "wiom-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Floor applied to per-element standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub pose: Pose,
    pub lap_index: usize,
    pub snapshot_index: usize,
}

/// What the per-station tensors contain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Content {
    Csi,
    Wiometric { params: TransformParams },
}

impl Content {
    pub fn kind(&self) -> Option<WiometricKind> {
        match self {
            Content::Csi => None,
            Content::Wiometric { params } => Some(params.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorStack {
    Complex(Array3<Complex32>),
    Real(Array3<f32>),
}

impl TensorStack {
    pub fn len(&self) -> usize {
        match self {
            Self::Complex(a) => a.len_of(Axis(0)),
            Self::Real(a) => a.len_of(Axis(0)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-record tensor shape.
    pub fn item_shape(&self) -> (usize, usize) {
        let d = match self {
            Self::Complex(a) => a.dim(),
            Self::Real(a) => a.dim(),
        };
        (d.1, d.2)
    }

    /// Record `i` as a complex f64 matrix; errors on a real stack.
    pub fn complex(&self, i: usize) -> Result<Array2<Complex64>> {
        match self {
            Self::Complex(a) => Ok(a.index_axis(Axis(0), i).mapv(|z| Complex64::new(z.re as f64, z.im as f64))),
            Self::Real(_) => Err(Error::Shape("expected complex CSI, found real tensors".into())),
        }
    }

    /// Record `i` as a real f64 matrix; errors on a complex stack.
    pub fn real(&self, i: usize) -> Result<Array2<f64>> {
        match self {
            Self::Real(a) => Ok(a.index_axis(Axis(0), i).mapv(f64::from)),
            Self::Complex(_) => Err(Error::Shape("expected real tensors, found complex CSI".into())),
        }
    }

    pub fn real_view(&self, i: usize) -> Result<ArrayView2<'_, f32>> {
        match self {
            Self::Real(a) => Ok(a.index_axis(Axis(0), i)),
            Self::Complex(_) => Err(Error::Shape("expected real tensors, found complex CSI".into())),
        }
    }

    fn to_blob(&self) -> Result<Blob> {
        match self {
            Self::Complex(a) => {
                let (n, r, c) = a.dim();
                Blob::new(vec![n, r, c], BlobData::Complex64(a.iter().copied().collect()))
            }
            Self::Real(a) => {
                let (n, r, c) = a.dim();
                Blob::new(vec![n, r, c], BlobData::F32(a.iter().copied().collect()))
            }
        }
    }

    fn from_blob(blob: Blob, path: &Path) -> Result<Self> {
        let shape = match blob.dims[..] {
            [n, r, c] => (n, r, c),
            _ => {
                return Err(LoadError::Metadata {
                    path: path.to_path_buf(),
                    reason: format!("station blob must be rank 3, got dims {:?}", blob.dims),
                }
                .into())
            }
        };
        let stack = match blob.data {
            BlobData::Complex64(v) => Self::Complex(Array3::from_shape_vec(shape, v).expect("checked by decode")),
            BlobData::F32(v) => Self::Real(Array3::from_shape_vec(shape, v).expect("checked by decode")),
            BlobData::F64(_) => {
                return Err(LoadError::Metadata {
                    path: path.to_path_buf(),
                    reason: "station blobs must be f32 or complex64".into(),
                }
                .into())
            }
        };
        Ok(stack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub tensors: TensorStack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: OfdmGrid,
    pub geometry: ArrayGeometry,
    pub content: Content,
    pub stations: Vec<Station>,
    pub records: Vec<Record>,
    /// Free-form provenance (generating configs), stored verbatim.
    pub source: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationMeta {
    id: String,
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    format: String,
    version: u32,
    grid: OfdmGrid,
    geometry: ArrayGeometry,
    content: Content,
    stations: Vec<StationMeta>,
    records: Vec<Record>,
    #[serde(default)]
    source: serde_json::Value,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn kind(&self) -> Option<WiometricKind> {
        self.content.kind()
    }

    pub fn laps(&self) -> Vec<usize> {
        let mut laps: Vec<usize> = self.records.iter().map(|r| r.lap_index).collect();
        laps.dedup();
        laps
    }

    /// Checks the structural invariants shared by every dataset.
    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(Error::Shape("dataset has no stations".into()));
        }
        let shape = self.stations[0].tensors.item_shape();
        for st in &self.stations {
            if st.tensors.len() != self.records.len() {
                return Err(Error::Shape(format!(
                    "station {} holds {} tensors for {} records",
                    st.id,
                    st.tensors.len(),
                    self.records.len()
                )));
            }
            if st.tensors.item_shape() != shape {
                return Err(Error::Shape(format!("station {} has tensor shape {:?}, expected {shape:?}", st.id, st.tensors.item_shape())));
            }
            let complex = matches!(st.tensors, TensorStack::Complex(_));
            if complex != matches!(self.content, Content::Csi) {
                return Err(Error::Shape("tensor dtype does not match dataset content".into()));
            }
        }
        let expected = match self.content {
            Content::Csi => (self.grid.num_subcarriers, self.geometry.num_ports()),
            Content::Wiometric { params } => params.output_shape(&self.grid, &self.geometry),
        };
        if !self.records.is_empty() && shape != expected {
            return Err(Error::Shape(format!("tensor shape {shape:?}, expected {expected:?}")));
        }
        for w in self.records.windows(2) {
            if w[1].snapshot_index <= w[0].snapshot_index {
                return Err(Error::Shape("snapshot indices must be strictly increasing".into()));
            }
            if w[1].lap_index < w[0].lap_index {
                return Err(Error::Shape("lap indices must be non-decreasing".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut stations = Vec::with_capacity(self.stations.len());
        for (i, st) in self.stations.iter().enumerate() {
            let file = format!("station_{i}.wiom");
            let sha256 = write_blob(&dir.join(&file), &st.tensors.to_blob()?)?;
            stations.push(StationMeta {
                id: st.id.clone(),
                file,
                sha256,
            });
        }
        let meta = Metadata {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            grid: self.grid,
            geometry: self.geometry,
            content: self.content,
            stations,
            records: self.records.clone(),
            source: self.source.clone(),
        };
        let path = dir.join(METADATA_FILE);
        let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Metadata = serde_json::from_str(&text).map_err(|e| LoadError::Metadata {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if meta.format != DATASET_FORMAT || meta.version != DATASET_VERSION {
            return Err(LoadError::Metadata {
                path,
                reason: format!("unsupported dataset format {} v{}", meta.format, meta.version),
            }
            .into());
        }
        let mut stations = Vec::with_capacity(meta.stations.len());
        for st in &meta.stations {
            let blob_path = dir.join(&st.file);
            let blob = read_blob(&blob_path, Some(&st.sha256))?;
            stations.push(Station {
                id: st.id.clone(),
                tensors: TensorStack::from_blob(blob, &blob_path)?,
            });
        }
        let ds = Dataset {
            grid: meta.grid,
            geometry: meta.geometry,
            content: meta.content,
            stations,
            records: meta.records,
            source: meta.source,
        };
        ds.validate().map_err(|e| LoadError::Metadata {
            path,
            reason: e.to_string(),
        })?;
        Ok(ds)
    }

    /// Blob file names and their recorded checksums, for inspection.
    pub fn blob_checksums(dir: &Path) -> Result<Vec<(String, String)>> {
        let path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Metadata = serde_json::from_str(&text).map_err(|e| LoadError::Metadata {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(meta.stations.into_iter().map(|s| (s.file, s.sha256)).collect())
    }

    /// Station index by id or by numeric position.
    pub fn station_index(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.stations.iter().position(|s| s.id == key) {
            return Ok(i);
        }
        match key.parse::<usize>() {
            Ok(i) if i < self.stations.len() => Ok(i),
            _ => Err(Error::Config(format!(
                "unknown station {key:?}; dataset has {:?}",
                self.stations.iter().map(|s| s.id.as_str()).collect::<Vec<_>>()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitKind {
    /// Random holdout.
    Leu {
        test_fraction: f64,
        seed: u64,
        #[serde(default)]
        stratify_by_lap: bool,
    },
    /// Whole-lap holdout.
    Heu { held_out_lap: usize },
}

impl SplitKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Leu { .. } => "leu",
            Self::Heu { .. } => "heu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub kind: SplitKind,
    /// Sorted ascending.
    pub train_indices: Vec<usize>,
    /// Sorted ascending.
    pub test_indices: Vec<usize>,
}

/// `round(fraction * n)` with ties rounding up.
fn test_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

pub fn split(dataset: &Dataset, kind: SplitKind) -> Result<SplitAssignment> {
    match kind {
        SplitKind::Leu {
            test_fraction,
            seed,
            stratify_by_lap,
        } => split_leu(dataset, test_fraction, seed, stratify_by_lap),
        SplitKind::Heu { held_out_lap } => split_heu(dataset, held_out_lap),
    }
}

/// Uniform random holdout of `round(test_fraction * n)` records. With
/// `stratify_by_lap`, each lap contributes its own rounded share instead.
pub fn split_leu(dataset: &Dataset, test_fraction: f64, seed: u64, stratify_by_lap: bool) -> Result<SplitAssignment> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.len();
    let mut is_test = vec![false; n];
    let groups: Vec<Vec<usize>> = if stratify_by_lap {
        dataset
            .laps()
            .into_iter()
            .map(|lap| (0..n).filter(|&i| dataset.records[i].lap_index == lap).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for mut group in groups {
        let k = test_count(test_fraction, group.len());
        group.shuffle(&mut rng);
        for &i in &group[..k] {
            is_test[i] = true;
        }
    }
    Ok(partition(
        SplitKind::Leu {
            test_fraction,
            seed,
            stratify_by_lap,
        },
        &is_test,
    ))
}

pub fn split_heu(dataset: &Dataset, held_out_lap: usize) -> Result<SplitAssignment> {
    if !dataset.records.iter().any(|r| r.lap_index == held_out_lap) {
        return Err(Error::Config(format!(
            "lap {held_out_lap} not present; dataset laps are {:?}",
            dataset.laps()
        )));
    }
    let is_test: Vec<bool> = dataset.records.iter().map(|r| r.lap_index == held_out_lap).collect();
    Ok(partition(SplitKind::Heu { held_out_lap }, &is_test))
}

fn partition(kind: SplitKind, is_test: &[bool]) -> SplitAssignment {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..is_test.len()).partition(|&i| is_test[i]);
    SplitAssignment {
        kind,
        train_indices: train,
        test_indices: test,
    }
}

/// Per-element mean and standard deviation of each station's tensors over
/// the training records.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<Array2<f64>>,
    pub std: Vec<Array2<f64>>,
}

pub fn fit_normalizer(dataset: &Dataset, train_indices: &[usize]) -> Result<NormStats> {
    if train_indices.is_empty() {
        return Err(Error::Empty("normalizer needs at least one training record".into()));
    }
    let mut mean = Vec::with_capacity(dataset.stations.len());
    let mut std = Vec::with_capacity(dataset.stations.len());
    let n = train_indices.len() as f64;
    for st in &dataset.stations {
        let shape = st.tensors.item_shape();
        let mut sum = Array2::<f64>::zeros(shape);
        for &i in train_indices {
            sum += &st.tensors.real_view(i)?.mapv(f64::from);
        }
        let mu = sum / n;
        let mut var = Array2::<f64>::zeros(shape);
        for &i in train_indices {
            let x = st.tensors.real_view(i)?;
            ndarray::Zip::from(&mut var).and(&x).and(&mu).for_each(|v, &x, &m| {
                let d = x as f64 - m;
                *v += d * d;
            });
        }
        std.push((var / n).mapv(|v| v.sqrt().max(STD_FLOOR)));
        mean.push(mu);
    }
    Ok(NormStats { mean, std })
}

impl NormStats {
    pub fn apply(&self, station: usize, x: ArrayView2<'_, f32>) -> Array2<f64> {
        let mut out = x.mapv(f64::from);
        ndarray::Zip::from(&mut out)
            .and(&self.mean[station])
            .and(&self.std[station])
            .for_each(|v, &m, &s| *v = (*v - m) / s);
        out
    }

    pub fn to_blobs(&self) -> Result<Vec<Blob>> {
        let mut out = Vec::new();
        for (m, s) in self.mean.iter().zip(&self.std) {
            let (r, c) = m.dim();
            out.push(Blob::new(vec![2, r, c], BlobData::F64(m.iter().chain(s.iter()).copied().collect()))?);
        }
        Ok(out)
    }

    pub fn from_blobs(blobs: Vec<Blob>) -> Result<Self> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for blob in blobs {
            let (r, c) = match (&blob.dims[..], &blob.data) {
                ([2, r, c], BlobData::F64(_)) => (*r, *c),
                _ => return Err(Error::Shape(format!("normalizer blob has dims {:?}", blob.dims))),
            };
            let BlobData::F64(v) = blob.data else { unreachable!() };
            let (m, s) = v.split_at(r * c);
            mean.push(Array2::from_shape_vec((r, c), m.to_vec()).expect("sized"));
            std.push(Array2::from_shape_vec((r, c), s.to_vec()).expect("sized"));
        }
        Ok(Self { mean, std })
    }
}
