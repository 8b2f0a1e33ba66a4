use std::path::Path;

use anyhow::{bail, Context, Result};
use wiom_core::container::{read_blob, sha256_hex, BlobData};
use wiom_core::dataset::{Content, Dataset, METADATA_FILE};
use wiom_core::pipeline::{self, Checkpoint, CHECKPOINT_FILE};

pub fn run(path: &Path) -> Result<()> {
    if path.is_dir() {
        if path.join(METADATA_FILE).is_file() {
            return dataset(path);
        }
        if path.join(CHECKPOINT_FILE).is_file() {
            return checkpoint(path);
        }
        bail!("{} holds neither {METADATA_FILE} nor {CHECKPOINT_FILE}", path.display());
    }
    blob(path)
}

fn dataset(dir: &Path) -> Result<()> {
    let ds = Dataset::load(dir).with_context(|| format!("loading {}", dir.display()))?;
    let content = match ds.content {
        Content::Csi => "csi".to_string(),
        Content::Wiometric { params } => params.kind().to_string(),
    };
    let (rows, cols) = pipeline::item_shape(&ds)?;
    println!("dataset   {}", dir.display());
    println!("content   {content}");
    println!("records   {}", ds.len());
    println!("laps      {:?}", ds.laps());
    println!("tensor    {rows}x{cols}");
    println!("grid      {} subcarriers, spacing {} Hz", ds.grid.num_subcarriers, ds.grid.subcarrier_spacing);
    println!("ports     {}", ds.geometry.num_ports());
    let checksums = Dataset::blob_checksums(dir)?;
    for (st, (file, sha)) in ds.stations.iter().zip(checksums) {
        println!("station   {} {file} sha256 {sha}", st.id);
    }
    if let (Some(first), Some(last)) = (ds.records.first(), ds.records.last()) {
        println!("first     {:?}", first.pose);
        println!("last      {:?}", last.pose);
    }
    Ok(())
}

fn checkpoint(dir: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(dir).with_context(|| format!("loading {}", dir.display()))?;
    let spec = ckpt.model.spec();
    println!("checkpoint {}", dir.display());
    println!("network    {}", ckpt.name());
    println!("parameters {}", ckpt.model.network.num_params());
    println!("input      {:?}", spec.input_shape);
    println!("layers     {}", spec.layers.len());
    println!("kind       {}", ckpt.kind);
    println!("stations   {:?}", ckpt.stations);
    println!("split      {:?}", ckpt.split);
    println!("epochs     {}", ckpt.model.history.len());
    if let Some(h) = ckpt.model.history.last() {
        println!("train loss {:.6}", h.train_loss);
        if let Some(v) = h.val_loss {
            println!("val loss   {v:.6}");
        }
    }
    Ok(())
}

fn blob(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let blob = read_blob(path, None)?;
    let values: Vec<f64> = match &blob.data {
        BlobData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        BlobData::F64(v) => v.clone(),
        BlobData::Complex64(v) => v.iter().map(|c| (c.re as f64).hypot(c.im as f64)).collect(),
    };
    println!("file    {}", path.display());
    println!("dtype   {:?}", blob.data.dtype());
    println!("dims    {:?}", blob.dims);
    println!("sha256  {}", sha256_hex(&bytes));
    if !values.is_empty() {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let what = if matches!(blob.data, BlobData::Complex64(_)) { "|value|" } else { "value" };
        println!("{what:7} min {min:.6e} max {max:.6e} mean {mean:.6e}");
    }
    Ok(())
}
