//! Run configuration: a named preset overlaid with a TOML file and `--set`
//! overrides, validated before any command touches the disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use wiom_core::array::ArrayGeometry;
use wiom_core::dataset::SplitKind;
use wiom_core::nn::presets::{self, Family};
use wiom_core::nn::TrainConfig;
use wiom_core::ofdm::OfdmGrid;
use wiom_core::scenario::Scenario;
use wiom_core::sim::{RouteConfig, SceneConfig};
use wiom_core::wiometrics::{BdirConfig, MfadConfig, TransformParams, WiometricKind};

pub const PRESETS: [&str; 2] = ["desk", "full"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Leu,
    Heu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitName,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify_by_lap: bool,
    /// Zero-based lap index held out by the `heu` split.
    pub held_out_lap: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            kind: SplitName::Leu,
            test_fraction: 0.25,
            seed: 0,
            stratify_by_lap: false,
            held_out_lap: 3,
        }
    }
}

impl SplitSpec {
    pub fn to_kind(&self) -> SplitKind {
        match self.kind {
            SplitName::Leu => SplitKind::Leu {
                test_fraction: self.test_fraction,
                seed: self.seed,
                stratify_by_lap: self.stratify_by_lap,
            },
            SplitName::Heu => SplitKind::Heu {
                held_out_lap: self.held_out_lap,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    /// Overrides the output root (otherwise `$WIOM_OUT` or `./wiom-out`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub route: RouteConfig,
    pub scene: SceneConfig,
    pub grid: OfdmGrid,
    pub array: ArrayGeometry,
    pub bdir: BdirConfig,
    pub mfad: MfadConfig,
    /// A preset name, or just `cnn` / `fcnn` to pick one matching the dataset.
    pub network: String,
    /// Zero-based base-station indices stacked as input channels.
    pub stations: Vec<usize>,
    pub train: TrainConfig,
    pub split: SplitSpec,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let scenario = match name {
            "desk" => Scenario::desk(),
            "full" => Scenario::full(),
            other => return Err(invalid(format!("unknown preset {other:?}; expected one of {PRESETS:?}"))),
        };
        Ok(Self {
            preset: name.to_string(),
            output_dir: None,
            route: scenario.route,
            scene: scenario.scene,
            grid: scenario.grid,
            array: scenario.geometry,
            bdir: scenario.bdir,
            mfad: scenario.mfad,
            network: "cnn".into(),
            stations: vec![1],
            train: scenario.train,
            split: SplitSpec::default(),
        })
    }

    /// Builds the configuration from an optional TOML file, a preset name
    /// that beats the file's `preset` key, and `key.path=value` overrides.
    pub fn load(path: Option<&Path>, preset: Option<&str>, sets: &[String]) -> Result<Self, ConfigError> {
        let mut user = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                text.parse::<Table>()
                    .map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for s in sets {
            apply_set(&mut user, s)?;
        }
        if let Some(p) = preset {
            user.insert("preset".into(), Value::String(p.into()));
        }
        let name = match user.get("preset") {
            None => "desk".to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(invalid(format!("preset must be a string, got {other}"))),
        };
        let mut base = Self::preset(&name)?;
        let mut cfg = base.overlay(&user)?;
        // The scene layout follows the route, so rebuild it before applying scene overrides.
        if user.contains_key("route") {
            base.route = cfg.route;
            base.scene = SceneConfig::urban_canyon(&cfg.route);
            cfg = base.overlay(&user)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn overlay(&self, user: &Table) -> Result<Self, ConfigError> {
        let mut tree = Table::try_from(self).map_err(|e| invalid(format!("serializing preset: {e}")))?;
        merge(&mut tree, user);
        Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {}", e.message())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |e: wiom_core::Error| invalid(e.to_string());
        self.route.validate().map_err(core)?;
        self.scene.validate().map_err(core)?;
        self.train.validate().map_err(core)?;
        if self.route.ccw_laps > self.route.laps {
            return Err(invalid("route.ccw_laps exceeds route.laps"));
        }
        if self.stations.is_empty() {
            return Err(invalid("stations must list at least one base station"));
        }
        if let Some(&s) = self.stations.iter().find(|&&s| s >= self.scene.base_stations.len()) {
            return Err(invalid(format!(
                "station {s} out of range; the scene has {} base stations",
                self.scene.base_stations.len()
            )));
        }
        if self.split.kind == SplitName::Leu && !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(invalid("split.test_fraction must be in (0, 1)"));
        }
        if self.split.kind == SplitName::Heu && self.split.held_out_lap >= self.route.laps {
            return Err(invalid(format!(
                "split.held_out_lap {} but the route has {} laps",
                self.split.held_out_lap, self.route.laps
            )));
        }
        if parse_family(&self.network).is_none() && presets::describe(&self.network).is_none() {
            return Err(invalid(format!(
                "unknown network {:?}; use cnn, fcnn, <cnn|fcnn>-<kind>-<s|d>-desk or one of {:?}",
                self.network,
                presets::table_names()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, kind: WiometricKind) -> TransformParams {
        TransformParams::with_defaults(kind, self.bdir, self.mfad)
    }

    /// Resolves the `network` field to a concrete preset name for a dataset kind.
    pub fn network_name(&self, kind: WiometricKind) -> Result<String, ConfigError> {
        let stations = self.stations.len();
        let Some(family) = parse_family(&self.network) else {
            return Ok(self.network.clone());
        };
        if self.preset == "full" {
            if let Some(name) = presets::table_name(family, kind, stations) {
                return Ok(name.to_string());
            }
        }
        let code = if stations > 1 { "d" } else { "s" };
        Ok(format!("{}-{}-{code}-desk", family.label().to_lowercase(), kind.name()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_family(s: &str) -> Option<Family> {
    match s.to_ascii_lowercase().as_str() {
        "cnn" => Some(Family::Cnn),
        "fcnn" => Some(Family::Fcnn),
        _ => None,
    }
}

/// Recursively overlays `over` onto `base`; arrays and scalars replace.
fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Applies one `a.b.c=value` override. The value is read as TOML and falls
/// back to a bare string.
fn apply_set(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("--set expects key=value, got {assignment:?}")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("bad key {key:?} in --set")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Output root: config, then `$WIOM_OUT`, then `./wiom-out`.
pub fn output_root(cfg: Option<&RunConfig>) -> PathBuf {
    cfg.and_then(|c| c.output_dir.clone())
        .or_else(|| std::env::var_os("WIOM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wiom-out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_config_is_the_desk_preset() {
        assert_eq!(RunConfig::load(None, None, &[]).unwrap(), RunConfig::preset("desk").unwrap());
    }

    #[test]
    fn preset_round_trips_through_toml() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            let f = write(&cfg.to_toml());
            assert_eq!(RunConfig::load(Some(f.path()), None, &[]).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_tables_overlay_the_preset() {
        let f = write("[train]\nepochs = 3\n[split]\nkind = \"heu\"\nheld_out_lap = 2\n");
        let cfg = RunConfig::load(Some(f.path()), None, &[]).unwrap();
        let desk = RunConfig::preset("desk").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, desk.train.learning_rate);
        assert_eq!(cfg.split.kind, SplitName::Heu);
        assert_eq!(cfg.split.held_out_lap, 2);
        assert_eq!(cfg.route, desk.route);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1\n", "[route]\nlapz = 2\n", "[scene]\nnoise = 1\n", "[split]\nfraction = 0.1\n"] {
            let f = write(text);
            let err = RunConfig::load(Some(f.path()), None, &[]).unwrap_err();
            assert!(matches!(err, ConfigError::Invalid(_)), "{text}: {err}");
        }
        assert!(RunConfig::load(None, None, &["train.epoch=3".into()]).is_err());
    }

    #[test]
    fn set_overrides_parse_values() {
        let cfg = RunConfig::load(
            None,
            Some("full"),
            &["route.laps=2".into(), "route.ccw_laps=1".into(), "network=fcnn".into(), "stations=[0, 1]".into()],
        )
        .unwrap();
        assert_eq!(cfg.preset, "full");
        assert_eq!(cfg.route.laps, 2);
        assert_eq!(cfg.network, "fcnn");
        assert_eq!(cfg.stations, vec![0, 1]);
        assert!(RunConfig::load(None, None, &["route.laps".into()]).is_err());
    }

    #[test]
    fn route_overrides_rebuild_the_scene() {
        let cfg = RunConfig::load(None, None, &["route.perimeter_width=80".into()]).unwrap();
        assert_eq!(cfg.scene, SceneConfig::urban_canyon(&cfg.route));
        let cfg = RunConfig::load(
            None,
            None,
            &["route.perimeter_width=80".into(), "scene.timing_jitter=0.0".into()],
        )
        .unwrap();
        assert_eq!(cfg.scene.timing_jitter, 0.0);
        assert_eq!(cfg.scene.walls, SceneConfig::urban_canyon(&cfg.route).walls);
    }

    #[test]
    fn validation_catches_semantic_errors() {
        for set in ["stations=[5]", "stations=[]", "network=\"rnn\"", "train.learning_rate=0", "split.test_fraction=1.5"] {
            assert!(RunConfig::load(None, None, &[set.into()]).is_err(), "{set}");
        }
        assert!(RunConfig::load(None, Some("huge"), &[]).is_err());
    }

    #[test]
    fn network_shorthand_resolves() {
        let mut cfg = RunConfig::preset("desk").unwrap();
        assert_eq!(cfg.network_name(WiometricKind::Mfad).unwrap(), "cnn-mfad-s-desk");
        cfg.stations = vec![0, 1];
        cfg.network = "FCNN".into();
        assert_eq!(cfg.network_name(WiometricKind::Bdir).unwrap(), "fcnn-bdir-d-desk");
        let mut full = RunConfig::preset("full").unwrap();
        assert_eq!(full.network_name(WiometricKind::Mfad).unwrap(), "CNN-MFAD-S-3.8M");
        full.network = "cnn-acsi-s-desk".into();
        assert_eq!(full.network_name(WiometricKind::Mfad).unwrap(), "cnn-acsi-s-desk");
    }
}
