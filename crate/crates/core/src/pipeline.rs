//! Glue between stages: transform a CSI dataset, assemble network inputs,
//! train and evaluate on a split, and persist checkpoints.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::container::{read_blob, write_blob, Blob, BlobData};
use crate::dataset::{fit_normalizer, Content, Dataset, NormStats, SplitAssignment, SplitKind, Station, TensorStack};
use crate::error::{Error, LoadError, Result};
use crate::eval::{knn_baseline, ErrorReport, ReportMeta};
use crate::nn::{self, EpochStats, Model, Network, NetworkSpec, TrainConfig, TrainingSet};
use crate::pose::Pose;
use crate::wiometrics::{TransformParams, Transformer, WiometricKind};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const WEIGHTS_FILE: &str = "weights.wiom";
pub const HISTORY_FILE: &str = "history.csv";

/// Applies one transform to every snapshot of every station.
pub fn transform_dataset(ds: &Dataset, params: &TransformParams) -> Result<Dataset> {
    if let Some(kind) = ds.kind() {
        return Err(Error::Config(format!("dataset already holds {kind} wiometrics; transform a CSI dataset")));
    }
    let transformer = Transformer::new(params, &ds.geometry, &ds.grid)?;
    let (rows, cols) = params.output_shape(&ds.grid, &ds.geometry);
    let mut stations = Vec::with_capacity(ds.stations.len());
    for st in &ds.stations {
        let n = st.tensors.len();
        let mut out = Array3::<f32>::zeros((n, rows, cols));
        for i in 0..n {
            let w = transformer.apply(st.tensors.complex(i)?.view())?;
            out.index_axis_mut(ndarray::Axis(0), i).assign(&w.mapv(|v| v as f32));
        }
        stations.push(Station {
            id: st.id.clone(),
            tensors: TensorStack::Real(out),
        });
    }
    Ok(Dataset {
        grid: ds.grid,
        geometry: ds.geometry,
        content: Content::Wiometric { params: *params },
        stations,
        records: ds.records.clone(),
        source: ds.source.clone(),
    })
}

/// Normalized inputs with the chosen stations stacked as channels,
/// flattened `[channel, row, col]`.
pub fn assemble_inputs(ds: &Dataset, indices: &[usize], stations: &[usize], norm: &NormStats) -> Result<TrainingSet> {
    if stations.is_empty() {
        return Err(Error::Config("select at least one base station".into()));
    }
    for &s in stations {
        if s >= ds.stations.len() || s >= norm.mean.len() {
            return Err(Error::Config(format!("station index {s} out of range ({} stations)", ds.stations.len())));
        }
    }
    let mut set = TrainingSet::default();
    for &i in indices {
        let mut x = Vec::new();
        for &s in stations {
            let t = norm.apply(s, ds.stations[s].tensors.real_view(i)?);
            x.extend(t.iter());
        }
        set.inputs.push(x);
        set.poses.push(ds.records[i].pose);
    }
    Ok(set)
}

/// `(rows, cols)` of one station's tensor.
pub fn item_shape(ds: &Dataset) -> Result<(usize, usize)> {
    ds.stations
        .first()
        .map(|s| s.tensors.item_shape())
        .ok_or_else(|| Error::Empty("dataset has no stations".into()))
}

/// A trained network plus everything needed to apply it to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub norm: NormStats,
    pub stations: Vec<usize>,
    pub kind: WiometricKind,
    pub split: SplitKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    format: String,
    name: String,
    parameter_count: usize,
    spec: NetworkSpec,
    kind: WiometricKind,
    stations: Vec<usize>,
    split: SplitKind,
    train: TrainConfig,
    position_center: [f64; 2],
    history: Vec<EpochStats>,
    weights_sha256: String,
    norm_sha256: Vec<String>,
}

const CHECKPOINT_FORMAT: &str = "wiom-checkpoint-1";

fn norm_file(i: usize) -> String {
    format!("norm_{i}.wiom")
}

impl Checkpoint {
    pub fn name(&self) -> &str {
        &self.model.spec().name
    }

    /// Writes `checkpoint.json`, the weight blob, normalizer blobs and the
    /// training history CSV into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let net = &self.model.network;
        let weights = Blob::new(vec![net.num_params()], BlobData::F64(net.params.clone()))?;
        let weights_sha256 = write_blob(&dir.join(WEIGHTS_FILE), &weights)?;
        let norm_sha256 = self
            .norm
            .to_blobs()?
            .iter()
            .enumerate()
            .map(|(i, b)| write_blob(&dir.join(norm_file(i)), b))
            .collect::<Result<Vec<_>>>()?;
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT.into(),
            name: self.name().to_string(),
            parameter_count: net.num_params(),
            spec: net.spec.clone(),
            kind: self.kind,
            stations: self.stations.clone(),
            split: self.split,
            train: self.model.config,
            position_center: self.model.position_center,
            history: self.model.history.clone(),
            weights_sha256,
            norm_sha256,
        };
        let path = dir.join(CHECKPOINT_FILE);
        let json = serde_json::to_string_pretty(&meta).expect("serializable");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        write_history_csv(&dir.join(HISTORY_FILE), &self.model.history)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| LoadError::Metadata {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(LoadError::Metadata {
                path,
                reason: format!("unknown checkpoint format {:?}", meta.format),
            }
            .into());
        }
        let weights = match read_blob(&dir.join(WEIGHTS_FILE), Some(&meta.weights_sha256))?.data {
            BlobData::F64(v) => v,
            _ => {
                return Err(LoadError::Metadata {
                    path: dir.join(WEIGHTS_FILE),
                    reason: "weights must be f64".into(),
                }
                .into())
            }
        };
        let blobs = meta
            .norm_sha256
            .iter()
            .enumerate()
            .map(|(i, sha)| read_blob(&dir.join(norm_file(i)), Some(sha)))
            .collect::<Result<Vec<_>>>()?;
        let network = Network::from_params(meta.spec, weights)?;
        let n = network.num_params();
        Ok(Self {
            model: Model {
                network,
                adam: nn::AdamState::new(n),
                history: meta.history,
                position_center: meta.position_center,
                config: meta.train,
            },
            norm: NormStats::from_blobs(blobs)?,
            stations: meta.stations,
            kind: meta.kind,
            split: meta.split,
        })
    }

    pub fn predict_all(&self, inputs: &TrainingSet) -> Result<Vec<Pose>> {
        let xs: Vec<&[f64]> = inputs.inputs.iter().map(Vec::as_slice).collect();
        self.model.predict_batch(&xs)
    }
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), val])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn require_kind(ds: &Dataset) -> Result<WiometricKind> {
    ds.kind()
        .ok_or_else(|| Error::Config("dataset holds raw CSI; run a transform first".into()))
}

/// Fits the normalizer on the training records and trains `spec` on the
/// stacked stations. The test records are only used for the reported
/// validation loss.
pub fn train_on_split(
    ds: &Dataset,
    split: &SplitAssignment,
    spec: NetworkSpec,
    stations: &[usize],
    config: &TrainConfig,
) -> Result<Checkpoint> {
    let kind = require_kind(ds)?;
    let (rows, cols) = item_shape(ds)?;
    let expected = [stations.len(), rows, cols];
    if spec.input_shape != expected {
        return Err(Error::Shape(format!(
            "{} expects input {:?}, dataset provides {:?}",
            spec.name, spec.input_shape, expected
        )));
    }
    let norm = fit_normalizer(ds, &split.train_indices)?;
    let train = assemble_inputs(ds, &split.train_indices, stations, &norm)?;
    let val = assemble_inputs(ds, &split.test_indices, stations, &norm)?;
    log::info!("training {} on {} records ({} held out)", spec.name, train.len(), val.len());
    let model = nn::train(spec, &train, Some(&val), config)?;
    Ok(Checkpoint {
        model,
        norm,
        stations: stations.to_vec(),
        kind,
        split: split.kind,
    })
}

/// Which records a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOn {
    Test,
    Train,
}

impl EvalOn {
    fn pick<'a>(&self, split: &'a SplitAssignment) -> &'a [usize] {
        match self {
            EvalOn::Test => &split.test_indices,
            EvalOn::Train => &split.train_indices,
        }
    }

    fn label(&self, split: &SplitAssignment) -> String {
        match self {
            EvalOn::Test => split.kind.label().to_string(),
            EvalOn::Train => "train".to_string(),
        }
    }
}

fn split_seed(kind: &SplitKind) -> u64 {
    match kind {
        SplitKind::Leu { seed, .. } => *seed,
        SplitKind::Heu { .. } => 0,
    }
}

pub fn evaluate_checkpoint(ckpt: &Checkpoint, ds: &Dataset, split: &SplitAssignment, on: EvalOn) -> Result<ErrorReport> {
    let kind = require_kind(ds)?;
    if kind != ckpt.kind {
        return Err(Error::Shape(format!("checkpoint expects {} inputs, dataset holds {kind}", ckpt.kind)));
    }
    let (rows, cols) = item_shape(ds)?;
    let want = ckpt.model.spec().input_shape;
    if want != [ckpt.stations.len(), rows, cols] {
        return Err(Error::Shape(format!(
            "checkpoint input {:?} does not match dataset tensors {rows}x{cols}",
            want
        )));
    }
    for (s, m) in ckpt.stations.iter().map(|&s| (s, ckpt.norm.mean.get(s))) {
        if m.map(|m| m.dim()) != Some((rows, cols)) {
            return Err(Error::Shape(format!("normalizer for station {s} does not match dataset")));
        }
    }
    let set = assemble_inputs(ds, on.pick(split), &ckpt.stations, &ckpt.norm)?;
    let preds = ckpt.predict_all(&set)?;
    ErrorReport::from_predictions(
        &preds,
        &set.poses,
        ReportMeta {
            network: ckpt.name().to_string(),
            split: on.label(split),
            seed: ckpt.model.config.seed,
        },
    )
}

/// k-NN on the same normalized, stacked inputs the networks see.
pub fn evaluate_knn(ds: &Dataset, split: &SplitAssignment, stations: &[usize], k: usize, on: EvalOn) -> Result<ErrorReport> {
    require_kind(ds)?;
    let norm = fit_normalizer(ds, &split.train_indices)?;
    let train = assemble_inputs(ds, &split.train_indices, stations, &norm)?;
    let test = assemble_inputs(ds, on.pick(split), stations, &norm)?;
    knn_baseline(
        &train.inputs,
        &train.poses,
        &test.inputs,
        &test.poses,
        k,
        ReportMeta {
            network: "knn".into(),
            split: on.label(split),
            seed: split_seed(&split.kind),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, test_support::toy_dataset};
    use crate::nn::presets;

    fn csi_dataset() -> Dataset {
        use crate::sim::{simulate, RouteConfig, SceneConfig};
        let route = RouteConfig {
            perimeter_width: 20.0,
            perimeter_height: 20.0,
            laps: 2,
            ccw_laps: 1,
            speed: 1.0,
            snapshot_period: 2.0,
            ..Default::default()
        };
        let scene = SceneConfig::urban_canyon(&route);
        simulate(&route, &scene, &crate::ofdm::OfdmGrid::desk(), &crate::array::ArrayGeometry::desk()).unwrap()
    }

    #[test]
    fn transform_sets_kind_and_refuses_twice() {
        let ds = csi_dataset();
        let params = TransformParams::Ccsi;
        let t = transform_dataset(&ds, &params).unwrap();
        assert_eq!(t.kind(), Some(WiometricKind::Ccsi));
        assert_eq!(t.stations[0].tensors.item_shape(), (64, 64));
        assert_eq!(t.records, ds.records);
        assert!(matches!(transform_dataset(&t, &params), Err(Error::Config(_))));
    }

    #[test]
    fn stacking_puts_stations_in_channel_order() {
        let ds = toy_dataset(2, 5, 2, 1);
        let norm = fit_normalizer(&ds, &[0, 1, 2]).unwrap();
        let one = assemble_inputs(&ds, &[3], &[1], &norm).unwrap();
        let both = assemble_inputs(&ds, &[3], &[0, 1], &norm).unwrap();
        let n = one.inputs[0].len();
        assert_eq!(both.inputs[0].len(), 2 * n);
        assert_eq!(&both.inputs[0][n..], &one.inputs[0][..]);
        assert!(assemble_inputs(&ds, &[3], &[2], &norm).is_err());
        assert!(assemble_inputs(&ds, &[3], &[], &norm).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_shape_guard() {
        let ds = toy_dataset(3, 12, 1, 2);
        let sp = split(&ds, SplitKind::Heu { held_out_lap: 2 }).unwrap();
        let (r, c) = item_shape(&ds).unwrap();
        let spec = presets::fcnn("toy", [1, r, c], &[6]);
        let cfg = TrainConfig { epochs: 2, batch_size: 8, ..Default::default() };
        let ckpt = train_on_split(&ds, &sp, spec, &[0], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ckpt.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back.model.network, ckpt.model.network);
        assert_eq!(back.norm, ckpt.norm);
        let a = evaluate_checkpoint(&ckpt, &ds, &sp, EvalOn::Test).unwrap();
        let b = evaluate_checkpoint(&back, &ds, &sp, EvalOn::Test).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.split, "heu");
        assert_eq!(evaluate_checkpoint(&ckpt, &ds, &sp, EvalOn::Train).unwrap().meta.split, "train");
        let history = fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(history.lines().count(), 3);

        let wide = toy_dataset(3, 12, 2, 2);
        let bad = presets::fcnn("toy", [1, r + 1, c], &[6]);
        assert!(matches!(train_on_split(&wide, &sp, bad, &[0], &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn knn_on_training_records_is_exact() {
        let ds = toy_dataset(2, 10, 1, 3);
        let sp = split(&ds, SplitKind::Leu { test_fraction: 0.3, seed: 1, stratify_by_lap: false }).unwrap();
        let r = evaluate_knn(&ds, &sp, &[0], 1, EvalOn::Train).unwrap();
        assert!(r.percentiles.values().all(|&(p, h)| p == 0.0 && h < 1e-9));
        assert_eq!(r.meta.split, "train");
    }
}
