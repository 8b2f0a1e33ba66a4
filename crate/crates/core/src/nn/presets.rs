//! Named architectures.
//!
//! Names follow `XXX-YYYY-B-NNM`: network family (CNN or FCNN), wiometric,
//! `S`/`D` for one or two base stations, and the weight count in millions
//! rounded to one decimal. The full-size table uses same-padded convolutions;
//! `-desk` presets are small counterparts for laptop-scale runs.

use super::{LayerSpec, NetworkSpec, Padding, DEFAULT_KERNEL, HEAD_SIZE};
use crate::error::{Error, Result};
use crate::wiometrics::WiometricKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cnn,
    Fcnn,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Cnn => "CNN",
            Family::Fcnn => "FCNN",
        }
    }
}

/// Conv(+ReLU+2x2 pool) stages, then dense(+ReLU) layers, then the 4-value head.
pub fn cnn(name: &str, input_shape: [usize; 3], filters: &[usize], dense: &[usize], padding: Padding) -> NetworkSpec {
    let mut layers = Vec::new();
    for &f in filters {
        layers.push(LayerSpec::Conv2d {
            filters: f,
            kernel: DEFAULT_KERNEL,
            padding,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool);
    }
    layers.push(LayerSpec::Flatten);
    for &n in dense {
        layers.push(LayerSpec::Dense { nodes: n });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense { nodes: HEAD_SIZE });
    NetworkSpec {
        name: name.to_string(),
        input_shape,
        layers,
    }
}

pub fn fcnn(name: &str, input_shape: [usize; 3], dense: &[usize]) -> NetworkSpec {
    cnn(name, input_shape, &[], dense, Padding::Valid)
}

/// `XXX-YYYY-B-NNM` for a spec, e.g. `CNN-MFAD-S-3.8M`.
pub fn conventional_name(family: Family, kind: WiometricKind, stations: usize, params: usize) -> String {
    format!(
        "{}-{}-{}-{:.1}M",
        family.label(),
        kind.name().to_uppercase(),
        if stations > 1 { "D" } else { "S" },
        params as f64 / 1e6
    )
}

struct TableRow {
    name: &'static str,
    kind: WiometricKind,
    stations: usize,
    filters: &'static [usize],
    dense: &'static [usize],
}

use WiometricKind::{Acsi, Bdir, Ccsi, Mfad};

#[rustfmt::skip]
const PRESET_TABLE: &[TableRow] = &[
    TableRow { name: "FCNN-ACSI-S-7.6M", kind: Acsi, stations: 1, filters: &[], dense: &[256, 1024, 512, 256, 256, 128, 64] },
    TableRow { name: "FCNN-CCSI-S-7.6M", kind: Ccsi, stations: 1, filters: &[], dense: &[128, 256, 1024, 512, 256, 256, 128] },
    TableRow { name: "FCNN-BDIR-S-7.6M", kind: Bdir, stations: 1, filters: &[], dense: &[1024, 2048, 512, 256, 256, 128, 64] },
    TableRow { name: "FCNN-MFAD-S-7.4M", kind: Mfad, stations: 1, filters: &[], dense: &[512, 512, 256, 256, 128, 128, 64] },
    TableRow { name: "CNN-ACSI-S-3.9M", kind: Acsi, stations: 1, filters: &[16, 32, 64, 128], dense: &[256, 1024, 256, 128] },
    TableRow { name: "CNN-CCSI-S-3.8M", kind: Ccsi, stations: 1, filters: &[16, 32, 64, 128], dense: &[128, 1024, 256, 128] },
    TableRow { name: "CNN-BDIR-S-3.3M", kind: Bdir, stations: 1, filters: &[16, 32, 64], dense: &[512, 1024, 512, 128] },
    TableRow { name: "CNN-MFAD-S-3.8M", kind: Mfad, stations: 1, filters: &[16, 32, 64], dense: &[256, 1024, 256, 128] },
    TableRow { name: "CNN-ACSI-S-30.6M", kind: Acsi, stations: 1, filters: &[32, 64, 128, 256], dense: &[1024, 2056, 1024, 512] },
    TableRow { name: "CNN-CCSI-S-27.0M", kind: Ccsi, stations: 1, filters: &[32, 64, 128, 256], dense: &[512, 1024, 512, 256] },
    TableRow { name: "CNN-BDIR-S-39.9M", kind: Bdir, stations: 1, filters: &[32, 64, 128], dense: &[2048, 5096, 2048, 1024] },
    TableRow { name: "CNN-MFAD-S-30.8M", kind: Mfad, stations: 1, filters: &[32, 64, 128], dense: &[1024, 2048, 1024, 512] },
    TableRow { name: "CNN-ACSI-D-4.5M", kind: Acsi, stations: 2, filters: &[16, 32, 64, 128], dense: &[1024, 1024, 256, 128] },
    TableRow { name: "CNN-CCSI-D-4.0M", kind: Ccsi, stations: 2, filters: &[16, 32, 64, 128], dense: &[512, 1024, 256, 128] },
    TableRow { name: "CNN-BDIR-D-3.8M", kind: Bdir, stations: 2, filters: &[16, 32, 64], dense: &[1024, 1024, 512, 128] },
    TableRow { name: "CNN-MFAD-D-3.8M", kind: Mfad, stations: 2, filters: &[16, 32, 64], dense: &[512, 1024, 256, 128] },
    TableRow { name: "CNN-ACSI-D-33.0M", kind: Acsi, stations: 2, filters: &[32, 64, 128], dense: &[2048, 2048, 1024, 512] },
    TableRow { name: "CNN-CCSI-D-31.0M", kind: Ccsi, stations: 2, filters: &[32, 64, 128], dense: &[1024, 2048, 1024, 512] },
    TableRow { name: "CNN-BDIR-D-35.7M", kind: Bdir, stations: 2, filters: &[32, 64, 128], dense: &[4096, 4096, 2048, 1024] },
    TableRow { name: "CNN-MFAD-D-31.9M", kind: Mfad, stations: 2, filters: &[32, 64, 128], dense: &[2048, 4096, 2048, 1024] },
];

/// Input shape of the full-size table for one station.
pub fn reference_input_shape(kind: WiometricKind) -> (usize, usize) {
    match kind {
        Acsi => (200, 128),
        Ccsi => (200, 256),
        Bdir => (32, 128),
        Mfad => (150, 90),
    }
}

/// Names of every table entry, for help output.
pub fn table_names() -> Vec<&'static str> {
    PRESET_TABLE.iter().map(|r| r.name).collect()
}

/// First table entry for a family, wiometric and station count.
pub fn table_name(family: Family, kind: WiometricKind, stations: usize) -> Option<&'static str> {
    PRESET_TABLE
        .iter()
        .find(|r| r.kind == kind && r.stations == stations && r.filters.is_empty() == (family == Family::Fcnn))
        .map(|r| r.name)
}

/// Desk-scale layer sizes.
pub const DESK_CNN_FILTERS: &[usize] = &[8, 16, 32];
pub const DESK_CNN_DENSE: &[usize] = &[128, 64];
pub const DESK_FCNN_DENSE: &[usize] = &[64, 64, 32];

fn parse_desk(name: &str) -> Option<(Family, WiometricKind, usize)> {
    let lower = name.to_ascii_lowercase();
    let parts: Vec<&str> = lower.split('-').collect();
    let [family, kind, stations, "desk"] = parts[..] else {
        return None;
    };
    let family = match family {
        "cnn" => Family::Cnn,
        "fcnn" => Family::Fcnn,
        _ => return None,
    };
    let kind = kind.parse().ok()?;
    let stations = match stations {
        "s" => 1,
        "d" => 2,
        _ => return None,
    };
    Some((family, kind, stations))
}

/// Looks up a preset by name (case-insensitive). Table entries keep their
/// listed input shape; desk presets take `input_hw` from the dataset.
/// Either way the channel count is the number of stacked stations.
pub fn preset(name: &str, input_hw: (usize, usize)) -> Result<NetworkSpec> {
    if let Some(row) = PRESET_TABLE.iter().find(|r| r.name.eq_ignore_ascii_case(name)) {
        let (h, w) = reference_input_shape(row.kind);
        let shape = [row.stations, h, w];
        return Ok(if row.filters.is_empty() {
            fcnn(row.name, shape, row.dense)
        } else {
            cnn(row.name, shape, row.filters, row.dense, Padding::Same)
        });
    }
    if let Some((family, kind, stations)) = parse_desk(name) {
        let shape = [stations, input_hw.0, input_hw.1];
        let mut spec = match family {
            Family::Cnn => cnn("", shape, DESK_CNN_FILTERS, DESK_CNN_DENSE, Padding::Same),
            Family::Fcnn => fcnn("", shape, DESK_FCNN_DENSE),
        };
        let params = spec.parameter_count()?;
        spec.name = format!("{}-desk", conventional_name(family, kind, stations, params));
        return Ok(spec);
    }
    Err(Error::Config(format!(
        "unknown network preset {name:?}; use <cnn|fcnn>-<kind>-<s|d>-desk or one of {:?}",
        table_names()
    )))
}

/// Family, wiometric and station count encoded in a preset name.
pub fn describe(name: &str) -> Option<(Family, WiometricKind, usize)> {
    if let Some(row) = PRESET_TABLE.iter().find(|r| r.name.eq_ignore_ascii_case(name)) {
        let family = if row.filters.is_empty() { Family::Fcnn } else { Family::Cnn };
        return Some((family, row.kind, row.stations));
    }
    parse_desk(name)
}
