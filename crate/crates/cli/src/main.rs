//! `wiom`: simulate drives, transform CSI into wiometrics, train pose
//! regressors and evaluate them.

mod config;
mod inspect;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use wiom_core::dataset::{self, Dataset};
use wiom_core::eval::{write_summary_csv, ErrorReport, SUMMARY_HEADER};
use wiom_core::nn::presets;
use wiom_core::pipeline::{self, Checkpoint, EvalOn};
use wiom_core::sim;
use wiom_core::wiometrics::WiometricKind;

use config::{output_root, ConfigError, RunConfig, SplitName};

#[derive(Parser)]
#[command(name = "wiom", version, about = "Wiometric navigation toolkit")]
struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a drive and write the CSI dataset.
    Simulate(SimulateArgs),
    /// Turn a CSI dataset into one wiometric representation.
    Transform(TransformArgs),
    /// Train a network on a wiometric dataset and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint, or the k-NN baseline, and write error reports.
    Evaluate(EvaluateArgs),
    /// Summarize a dataset, checkpoint or container file.
    Inspect(InspectArgs),
    /// Merge summary CSVs into one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration overlaid on the preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base preset: desk or full [default: config value, else desk].
    #[arg(long)]
    preset: Option<String>,
    /// Override any config field, e.g. --set scene.timing_jitter=0 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        RunConfig::load(self.config.as_deref(), self.preset.as_deref(), &self.sets)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of laps [default: route.laps from the config, 4].
    #[arg(long)]
    laps: Option<usize>,
    /// Vehicle speed in m/s [default: route.speed from the config].
    #[arg(long)]
    speed: Option<f64>,
    /// Seed for both route and scene [default: route.seed and scene.seed from the config].
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory [default: <output root>/csi].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    /// CSI dataset directory.
    #[arg(long)]
    input: PathBuf,
    /// Wiometric to compute.
    #[arg(long, value_parser = parse_kind)]
    kind: WiometricKind,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output dataset directory [default: <output root>/<kind>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Split strategy [default: split.kind from the config, leu].
    #[arg(long, value_enum)]
    split: Option<SplitName>,
    /// Fraction of records held out by leu [default: split.test_fraction, 0.25].
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Zero-based lap held out by heu [default: split.held_out_lap, 3].
    #[arg(long)]
    holdout_lap: Option<usize>,
    /// Shuffle seed for leu [default: split.seed, 0].
    #[arg(long)]
    split_seed: Option<u64>,
    /// Hold out the same fraction of every lap under leu [default: split.stratify_by_lap, false].
    #[arg(long)]
    stratify_by_lap: bool,
}

impl SplitArgs {
    fn given(&self) -> bool {
        self.split.is_some()
            || self.test_fraction.is_some()
            || self.holdout_lap.is_some()
            || self.split_seed.is_some()
            || self.stratify_by_lap
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.split {
            cfg.split.kind = s;
        }
        if let Some(f) = self.test_fraction {
            cfg.split.test_fraction = f;
        }
        if let Some(l) = self.holdout_lap {
            cfg.split.held_out_lap = l;
        }
        if let Some(s) = self.split_seed {
            cfg.split.seed = s;
        }
        if self.stratify_by_lap {
            cfg.split.stratify_by_lap = true;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Wiometric dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Network preset, or cnn / fcnn to match the dataset [default: network from the config, cnn].
    #[arg(long)]
    network: Option<String>,
    /// Comma-separated base-station indices [default: stations from the config, 1].
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<usize>>,
    /// Training epochs [default: train.epochs, 25 desk / 60 full].
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: train.batch_size, 64].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: train.learning_rate, 0.003 desk / 0.001 full].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Initialization and shuffling seed [default: train.seed, 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Meters per unit of the position outputs [default: train.position_scale, 25 desk / 100 full].
    #[arg(long)]
    position_scale: Option<f64>,
    /// Checkpoint directory [default: <output root>/models/<network>-<split>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnArg {
    Test,
    Train,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Wiometric dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint directory written by `train`.
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Run a baseline instead of a checkpoint.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Neighbours for the k-NN baseline.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    config: ConfigArgs,
    /// Split to evaluate [default: the checkpoint's own split, else the config's].
    #[command(flatten)]
    split: SplitArgs,
    /// Base stations for the baseline [default: stations from the config, 1].
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<usize>>,
    /// Which side of the split to score.
    #[arg(long, value_enum, default_value = "test")]
    on: OnArg,
    /// Report directory [default: <output root>/reports/<network>-<split>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Dataset directory, checkpoint directory or .wiom file.
    path: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Summary CSVs, or report directories containing summary.csv.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Merged CSV [default: <output root>/reports/table.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<WiometricKind, String> {
    s.parse::<WiometricKind>().map_err(|e| e.to_string())
}

/// Exit status 2 for bad input from the user, 1 for everything else.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<wiom_core::Error> for Failure {
    fn from(e: wiom_core::Error) -> Self {
        match e {
            wiom_core::Error::Config(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if matches!(e.downcast_ref::<wiom_core::Error>(), Some(wiom_core::Error::Config(_))) {
            Failure::Usage(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Transform(a) => transform(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Inspect(a) => inspect::run(&a.path).map_err(Failure::from),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn refuse_same_dir(input: &Path, out: &Path) -> Outcome {
    let same = match (input.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(Failure::Usage(anyhow::anyhow!(
            "output {} would overwrite the input; choose another --out",
            out.display()
        )));
    }
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset, Failure> {
    Ok(Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?)
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut cfg = a.config.load()?;
    if let Some(l) = a.laps {
        cfg.route.laps = l;
        cfg.route.ccw_laps = cfg.route.ccw_laps.min(l);
    }
    if let Some(v) = a.speed {
        cfg.route.speed = v;
    }
    if let Some(s) = a.seed {
        cfg.route.seed = s;
        cfg.scene.seed = s;
    }
    cfg.validate()?;
    let out = a.out.unwrap_or_else(|| output_root(Some(&cfg)).join("csi"));
    let ds = sim::simulate(&cfg.route, &cfg.scene, &cfg.grid, &cfg.array)?;
    ds.save(&out)?;
    println!(
        "simulated {} snapshots x {} base stations into {}",
        ds.len(),
        ds.stations.len(),
        out.display()
    );
    for (file, sha) in Dataset::blob_checksums(&out)? {
        println!("  {file}  sha256 {sha}");
    }
    Ok(())
}

fn transform(a: TransformArgs) -> Outcome {
    let cfg = a.config.load()?;
    let out = a.out.unwrap_or_else(|| output_root(Some(&cfg)).join(a.kind.name()));
    refuse_same_dir(&a.input, &out)?;
    let ds = load_dataset(&a.input)?;
    let params = cfg.transform(a.kind);
    let result = pipeline::transform_dataset(&ds, &params)?;
    result.save(&out)?;
    let (rows, cols) = pipeline::item_shape(&result)?;
    println!(
        "{}: {} snapshots x {} base stations, {rows}x{cols} each, into {}",
        a.kind,
        result.len(),
        result.stations.len(),
        out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let mut cfg = a.config.load()?;
    a.split.apply(&mut cfg);
    if let Some(n) = a.network {
        cfg.network = n;
    }
    if let Some(s) = a.stations {
        cfg.stations = s;
    }
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.position_scale {
        t.position_scale = v;
    }
    cfg.validate()?;

    let ds = load_dataset(&a.dataset)?;
    let Some(kind) = ds.kind() else {
        return Err(Failure::Usage(anyhow::anyhow!(
            "{} holds raw CSI; run `wiom transform` first",
            a.dataset.display()
        )));
    };
    let name = cfg.network_name(kind)?;
    if let Some((_, preset_kind, stations)) = presets::describe(&name) {
        if preset_kind != kind {
            return Err(Failure::Usage(anyhow::anyhow!("network {name} expects {preset_kind}, dataset holds {kind}")));
        }
        if stations != cfg.stations.len() {
            return Err(Failure::Usage(anyhow::anyhow!(
                "network {name} takes {stations} base station(s), {} selected",
                cfg.stations.len()
            )));
        }
    }
    let spec = presets::preset(&name, pipeline::item_shape(&ds)?)?;
    let split = dataset::split(&ds, cfg.split.to_kind())?;
    let out = a
        .out
        .unwrap_or_else(|| output_root(Some(&cfg)).join("models").join(format!("{}-{}", spec.name, split.kind.label())));
    refuse_same_dir(&a.dataset, &out)?;
    let params = spec.parameter_count()?;
    log::info!("{} ({params} parameters), {} train / {} test", spec.name, split.train_indices.len(), split.test_indices.len());
    let ckpt = pipeline::train_on_split(&ds, &split, spec, &cfg.stations, &cfg.train)?;
    ckpt.save(&out)?;
    fs::write(out.join("run_config.toml"), cfg.to_toml()).with_context(|| format!("writing {}", out.display()))?;
    let last = ckpt.model.history.last();
    println!(
        "trained {} on {} split: {} epochs, final train loss {}, held-out loss {} -> {}",
        ckpt.name(),
        split.kind.label(),
        ckpt.model.history.len(),
        last.map_or("-".into(), |h| format!("{:.5}", h.train_loss)),
        last.and_then(|h| h.val_loss).map_or("-".into(), |v| format!("{v:.5}")),
        out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let mut cfg = a.config.load()?;
    a.split.apply(&mut cfg);
    if let Some(s) = a.stations.clone() {
        cfg.stations = s;
    }
    cfg.validate()?;
    let ds = load_dataset(&a.dataset)?;
    let on = match a.on {
        OnArg::Test => EvalOn::Test,
        OnArg::Train => EvalOn::Train,
    };
    let report = match &a.checkpoint {
        Some(dir) => {
            let ckpt = Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
            let kind = if a.split.given() { cfg.split.to_kind() } else { ckpt.split };
            let split = dataset::split(&ds, kind)?;
            pipeline::evaluate_checkpoint(&ckpt, &ds, &split, on)?
        }
        None => {
            let split = dataset::split(&ds, cfg.split.to_kind())?;
            pipeline::evaluate_knn(&ds, &split, &cfg.stations, a.k, on)?
        }
    };
    let out = a.out.unwrap_or_else(|| {
        output_root(Some(&cfg))
            .join("reports")
            .join(format!("{}-{}", report.meta.network, report.meta.split))
    });
    write_report(&report, &out)?;
    println!(
        "{} on {} ({} samples): position p68/p95/p99 {:.2}/{:.2}/{:.2} m, heading {:.1}/{:.1}/{:.1} deg -> {}",
        report.meta.network,
        report.meta.split,
        report.len(),
        report.position(68),
        report.position(95),
        report.position(99),
        report.heading(68),
        report.heading(95),
        report.heading(99),
        out.display()
    );
    Ok(())
}

fn write_report(report: &ErrorReport, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_samples_csv(&dir.join("samples.csv"))?;
    report.write_cdf_csv(&dir.join("cdf.csv"))?;
    write_summary_csv(&dir.join("summary.csv"), &[report])?;
    let meta = serde_json::to_string_pretty(&report.meta)?;
    fs::write(dir.join("report.json"), meta + "\n").with_context(|| format!("writing {}", dir.display()))?;
    Ok(())
}

fn report(a: ReportArgs) -> Outcome {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for input in &a.inputs {
        let path = if input.is_dir() { input.join("summary.csv") } else { input.clone() };
        let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        let header: Vec<String> = r.headers().context("summary header")?.iter().map(String::from).collect();
        if header != SUMMARY_HEADER {
            return Err(Failure::Usage(anyhow::anyhow!("{} is not a summary CSV", path.display())));
        }
        for rec in r.records() {
            rows.push(rec.with_context(|| format!("reading {}", path.display()))?.iter().map(String::from).collect());
        }
    }
    let out = a.out.unwrap_or_else(|| output_root(None).join("reports").join("table.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(SUMMARY_HEADER).context("writing table")?;
    for row in &rows {
        w.write_record(row).context("writing table")?;
    }
    w.flush().context("writing table")?;

    let width = rows.iter().map(|r| r[0].len()).max().unwrap_or(7).max(7);
    println!("{:width$}  {:5}  {:>24}  {:>24}", "network", "split", "position m (68/95/99)", "heading deg (68/95/99)");
    for row in &rows {
        let num = |i: usize| row[i].parse::<f64>().unwrap_or(f64::NAN);
        println!(
            "{:width$}  {:5}  {:>7.2} {:>7.2} {:>8.2}  {:>7.1} {:>7.1} {:>8.1}",
            row[0],
            row[1],
            num(2),
            num(3),
            num(4),
            num(5),
            num(6),
            num(7)
        );
    }
    println!("-> {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn core_config_errors_are_usage_errors() {
        assert!(matches!(Failure::from(wiom_core::Error::Config("x".into())), Failure::Usage(_)));
        assert!(matches!(Failure::from(wiom_core::Error::Shape("x".into())), Failure::Runtime(_)));
        let wrapped = anyhow::Error::from(wiom_core::Error::Config("x".into())).context("outer");
        assert!(matches!(Failure::from(wrapped), Failure::Usage(_)));
    }

    #[test]
    fn unknown_kind_lists_all_four() {
        let msg = parse_kind("xyz").unwrap_err();
        for k in ["acsi", "ccsi", "bdir", "mfad"] {
            assert!(msg.to_lowercase().contains(k), "{msg}");
        }
    }

    #[test]
    fn bail_is_runtime() {
        fn f() -> anyhow::Result<()> {
            anyhow::bail!("boom")
        }
        assert!(matches!(Failure::from(f().unwrap_err()), Failure::Runtime(_)));
    }
}
