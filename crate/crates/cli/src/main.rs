//! `pdm`: segmentation-aware predictive maintenance from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pdm_core::changefinder::{score_multichannel, ChangeFinderConfig, ThresholdMode};
use pdm_core::config::PipelineConfig;
use pdm_core::data_io::{
    format_change_points, generate_synthetic, label_from_noc, load_csv, load_noc, save_csv, save_noc, SynthConfig,
    TimeSeriesFrame, DEFAULT_TIMESTAMP_COLUMN,
};
use pdm_core::detectors::{fit_detector, DetectorKind, DetectorModel, TrainConfig};
use pdm_core::ensemble::{
    classification_report, compare_runs, read_predictions, write_predictions, EnsembleModel, EvalReport, Prediction,
};
use pdm_core::health::{HealthConfig, HealthSeries};
use pdm_core::kvtext::Document;
use pdm_core::pipeline::{provenance, run_pipeline, segment_csv, Mode, ARTIFACT_SCHEMA_VERSION};
use pdm_core::prep::{apply_prep, fit_prep, PrepConfig, PrepPlan};
use pdm_core::seed;
use pdm_core::tuner::{grid_search, Objective, ParamGrid, SearchOptions};
use pdm_core::windowing::{augment_with_segmentation, make_windows, ExceedanceThresholds, WindowDataset, WindowSpec};

#[derive(Parser)]
#[command(name = "pdm", version, about = "Segmentation-aware anomaly detection and health indexing for sensor series")]
struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset (data.csv, noc.csv, change_points.txt).
    Synth(SynthArgs),
    /// Fit a preparation plan on the training prefix and apply it, or replay a saved plan.
    Prep(PrepArgs),
    /// Grid-search ChangeFinder parameters against label transitions.
    Tune(TuneArgs),
    /// Score a series with ChangeFinder and extract change points.
    Segment(SegmentArgs),
    /// Build the window dataset CSV.
    Featurize(FeaturizeArgs),
    /// Train detectors on the training side of a window dataset.
    Train(TrainArgs),
    /// Score the test side of a window dataset and write the evaluation report.
    Evaluate(EvaluateArgs),
    /// Per-metric deltas between two evaluation reports.
    Compare(CompareArgs),
    /// Health Index and alarms from a predictions file.
    Health(HealthArgs),
    /// Run the whole chain from a configuration file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Sensor CSV.
    #[arg(long)]
    data: PathBuf,
    /// NoC interval CSV; without it the data must carry a `normal` column.
    #[arg(long)]
    noc: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_TIMESTAMP_COLUMN)]
    timestamp_column: String,
}

impl InputArgs {
    fn load(&self) -> Result<TimeSeriesFrame> {
        let frame = load_csv(&self.data, &self.timestamp_column)?;
        Ok(match &self.noc {
            Some(p) => label_from_noc(frame, &load_noc(p)?),
            None => frame,
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// kvtext file of generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_channels: Option<usize>,
    #[arg(long)]
    n_regime_shifts: Option<usize>,
    #[arg(long)]
    anomaly_fraction: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    shift_magnitude_sigma: Option<f64>,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Replay this plan instead of fitting one.
    #[arg(long, conflicts_with = "plan_out")]
    plan: Option<PathBuf>,
    /// Where to save the fitted plan.
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Prepared frame CSV.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of samples (from the start) the plan is fitted on.
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Pipeline config whose `prep.` section supplies the prep settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    F1,
    Cs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdModeArg {
    Relative,
    Absolute,
}

impl From<ThresholdModeArg> for ThresholdMode {
    fn from(m: ThresholdModeArg) -> Self {
        match m {
            ThresholdModeArg::Relative => ThresholdMode::Relative,
            ThresholdModeArg::Absolute => ThresholdMode::Absolute,
        }
    }
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Grid file (`r = ...`, `order = ...`, `smooth = ...`, `threshold = ...`).
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f1")]
    objective: ObjectiveArg,
    /// Matching tolerance in samples (default 2·smooth).
    #[arg(long)]
    tolerance: Option<usize>,
    /// Refractory period in samples (default smooth).
    #[arg(long)]
    min_gap: Option<usize>,
    #[arg(long, value_enum, default_value = "relative")]
    mode: ThresholdModeArg,
    /// Leaderboard CSV.
    #[arg(long)]
    out: PathBuf,
    /// Save the best row as a ChangeFinder parameter file.
    #[arg(long)]
    best_out: Option<PathBuf>,
}

#[derive(Args)]
struct CfArgs {
    /// ChangeFinder parameter file (as written by `tune --best-out`).
    #[arg(long, conflicts_with = "preset")]
    params: Option<PathBuf>,
    /// Named parameter preset: `f1` or `cs`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    smooth: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_gap: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ThresholdModeArg>,
}

impl CfArgs {
    fn resolve(&self) -> Result<ChangeFinderConfig> {
        let mut d = match &self.params {
            Some(p) => {
                let doc = Document::parse(&read(p)?)?;
                let mut out = Document::new();
                for (k, v) in doc.entries().filter(|(k, _)| !matches!(*k, "schema_version" | "kind")) {
                    out.push(k, v);
                }
                if doc.contains("schema_version") {
                    doc.expect_schema(ARTIFACT_SCHEMA_VERSION)?;
                }
                out
            }
            None => {
                let mut out = Document::new();
                out.push("preset", self.preset.as_deref().unwrap_or("f1"));
                out
            }
        };
        if let Some(v) = self.r {
            d.push_f64("r", v);
        }
        if let Some(v) = self.order {
            d.push("order", v.to_string());
        }
        if let Some(v) = self.smooth {
            d.push("smooth", v.to_string());
        }
        if let Some(v) = self.threshold {
            d.push_f64("threshold", v);
        }
        if let Some(v) = self.min_gap {
            d.push("min_gap", v.to_string());
        }
        if let Some(m) = self.mode {
            d.push("mode", ThresholdMode::from(m).as_str());
        }
        let c = ChangeFinderConfig::from_document(&d)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Sensor CSV (typically the output of `prep`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = DEFAULT_TIMESTAMP_COLUMN)]
    timestamp_column: String,
    #[command(flatten)]
    cf: CfArgs,
    /// Per-sample segmentation CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the change points, one index per line.
    #[arg(long)]
    change_points_out: Option<PathBuf>,
}

#[derive(Args)]
struct WindowArgs {
    /// Window span in minutes at the data's median cadence.
    #[arg(long, default_value_t = 30.0)]
    minutes: f64,
    /// Explicit window length in samples (overrides --minutes).
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long, requires = "window_len")]
    stride: Option<usize>,
    #[arg(long, requires = "window_len")]
    horizon: Option<usize>,
}

impl WindowArgs {
    fn spec(&self, frame: &TimeSeriesFrame) -> Result<WindowSpec> {
        Ok(match self.window_len {
            Some(len) => WindowSpec::new(len, self.stride.unwrap_or((len / 3).max(1)), self.horizon.unwrap_or(len))?,
            None => {
                let cadence = frame.median_cadence().ok_or_else(|| anyhow!("cannot infer the sample cadence"))?;
                WindowSpec::from_duration(self.minutes, cadence)?
            }
        })
    }
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Training prefix used to fit exceedance thresholds.
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.95)]
    exceed_quantile: f64,
    /// Append segmentation features.
    #[arg(long)]
    segmented: bool,
    #[command(flatten)]
    cf: CfArgs,
    /// Drop windows straddling a change point (with --segmented).
    #[arg(long)]
    drop_straddling: bool,
    /// Window dataset CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Sample index separating train from test.
    #[arg(long)]
    split_index: Option<usize>,
    /// Split at this fraction of the series when --split-index is absent.
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
}

impl SplitArgs {
    fn index(&self, ds: &WindowDataset) -> Result<usize> {
        match self.split_index {
            Some(s) => Ok(s),
            None => {
                if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
                    bail!("--train-fraction must lie in (0, 1)");
                }
                Ok((self.train_fraction * ds.n_samples as f64).round() as usize)
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Window dataset CSV from `featurize`.
    #[arg(long)]
    windows: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Detectors to train.
    #[arg(long, value_delimiter = ',', default_value = "rf,gbt")]
    detectors: Vec<String>,
    /// Pipeline config whose `train.` section supplies the detector settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving `model_<kind>.txt`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    windows: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Model files; two or more are combined by soft voting.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Sensor CSV used to attach timestamps to predictions.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_TIMESTAMP_COLUMN)]
    timestamp_column: String,
    /// Directory receiving eval_report.{txt,csv} and predictions.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Evaluation report CSV (the minuend).
    #[arg(long)]
    a: PathBuf,
    /// Evaluation report CSV (the subtrahend).
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    /// Delta CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HealthArgs {
    /// Predictions CSV from `evaluate`.
    #[arg(long)]
    predictions: PathBuf,
    /// Moving-average window, in windows.
    #[arg(long, default_value_t = 60)]
    window: usize,
    #[arg(long, default_value_t = 0.5)]
    warning_threshold: f64,
    #[arg(long, default_value_t = 0.25)]
    alert_threshold: f64,
    /// Health CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Segmented,
    Unsegmented,
    Both,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "segmented")]
    mode: ModeArg,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.data`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides `paths.noc`.
    #[arg(long)]
    noc: Option<PathBuf>,
    /// Overrides `paths.output_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

/// Provenance comments for subcommand outputs: the invocation minus the
/// thread count, which never affects results.
fn command_provenance() -> Vec<String> {
    let mut args = Vec::new();
    let mut skip = false;
    for a in std::env::args().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        args.push(a);
    }
    vec![
        format!("pdm {} artifact", env!("CARGO_PKG_VERSION")),
        format!("artifact_schema_version = {ARTIFACT_SCHEMA_VERSION}"),
        format!("command = pdm {}", args.join(" ")),
    ]
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().flat_map(|c| c.lines()).map(|l| format!("# {l}\n")).collect()
}

fn load_pipeline_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::from_text(&read(p)?).with_context(|| format!("in {}", p.display()))?),
        None => Ok(PipelineConfig::default()),
    }
}

fn split_at(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        bail!("--train-fraction must lie in (0, 1)");
    }
    let s = (fraction * n as f64).round() as usize;
    if s == 0 || s >= n {
        bail!("--train-fraction {fraction} leaves an empty side of a {n}-sample series");
    }
    Ok(s)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let doc = match &a.config {
        Some(p) => Document::parse(&read(p)?)?,
        None => Document::new(),
    };
    let mut c = SynthConfig::from_document(&doc)?;
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.n_samples {
        c.n_samples = v;
    }
    if let Some(v) = a.n_channels {
        c.n_channels = v;
    }
    if let Some(v) = a.n_regime_shifts {
        c.n_regime_shifts = v;
    }
    if let Some(v) = a.anomaly_fraction {
        c.anomaly_fraction = v;
    }
    if let Some(v) = a.noise_sigma {
        c.noise_sigma = v;
    }
    if let Some(v) = a.shift_magnitude_sigma {
        c.shift_magnitude_sigma = v;
    }
    let data = generate_synthetic(&c)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let mut prov = command_provenance();
    prov.extend(c.to_document().to_text().lines().map(|l| format!("synth.{l}")));
    save_csv(a.out_dir.join("data.csv"), &data.frame.clone().without_labels(), &prov)?;
    save_noc(a.out_dir.join("noc.csv"), &data.noc, &prov)?;
    write(&a.out_dir.join("change_points.txt"), &format_change_points(&data.change_points, &prov))?;
    let anomalies: String = data.anomalies.iter().map(|(s, e)| format!("{s},{e}\n")).collect();
    write(
        &a.out_dir.join("anomalies.csv"),
        &(comment_block(&prov) + "start_index,end_index\n" + &anomalies),
    )?;
    println!(
        "wrote {} samples x {} channels, {} regime shifts, {} anomaly intervals to {}",
        c.n_samples,
        c.n_channels,
        data.change_points.len(),
        data.anomalies.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn prep(a: &PrepArgs) -> Result<()> {
    let frame = a.input.load()?;
    let plan = match &a.plan {
        Some(p) => PrepPlan::from_text(&read(p)?)?,
        None => {
            let labels = frame
                .labels()
                .ok_or_else(|| anyhow!("fitting a plan needs labels: pass --noc or a `normal` column"))?;
            let split = split_at(frame.n_samples(), a.train_fraction)?;
            let cfg: PrepConfig = load_pipeline_config(a.config.as_ref())?.prep;
            let plan = fit_prep(&frame.slice(0..split), &labels[..split], &cfg)?;
            if let Some(out) = &a.plan_out {
                write(out, &(comment_block(&command_provenance()) + &plan.to_text()))?;
            }
            plan
        }
    };
    let prepped = apply_prep(&plan, &frame)?;
    save_csv(&a.out, &prepped, &command_provenance())?;
    println!(
        "kept {} of {} channels: {}",
        plan.selected_channels.len(),
        frame.n_channels(),
        plan.selected_channels.join(", ")
    );
    Ok(())
}

fn default_grid() -> ParamGrid {
    pdm_core::config::TuneConfig::default().grid
}

fn tune(a: &TuneArgs) -> Result<()> {
    let frame = a.input.load()?;
    let grid = match &a.grid {
        Some(p) => ParamGrid::from_text(&read(p)?)?,
        None => default_grid(),
    };
    let options = SearchOptions {
        objective: match a.objective {
            ObjectiveArg::F1 => Objective::F1,
            ObjectiveArg::Cs => Objective::Cs,
        },
        tolerance: a.tolerance,
        min_gap: a.min_gap,
        mode: a.mode.into(),
    };
    let board = grid_search(&frame, &grid, &options)?;
    let mut buf = Vec::new();
    board.write_csv(&mut buf, &command_provenance())?;
    write(&a.out, &String::from_utf8(buf)?)?;
    let best = board.best().filter(|r| r.error.is_none()).ok_or_else(|| anyhow!("every grid cell failed"))?;
    println!(
        "best of {} cells: r={} order={} smooth={} threshold={} f1={:.4} cs={:.4}",
        board.rows.len(),
        best.config.r,
        best.config.order,
        best.config.smooth,
        best.config.threshold,
        best.f1,
        best.cs
    );
    if let Some(out) = &a.best_out {
        let mut d = Document::new();
        d.push("schema_version", ARTIFACT_SCHEMA_VERSION.to_string());
        d.push("kind", "changefinder_params");
        for (k, v) in best.config.to_document().entries() {
            d.push(k, v);
        }
        write(out, &(comment_block(&command_provenance()) + &d.to_text()))?;
    }
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let frame = load_csv(&a.data, &a.timestamp_column)?;
    let cf = a.cf.resolve()?;
    let scores = score_multichannel(&frame, &cf)?;
    let seg = cf.detect(&scores);
    let prov = command_provenance();
    write(&a.out, &segment_csv(&frame, &scores, &seg, &prov))?;
    if let Some(p) = &a.change_points_out {
        write(p, &format_change_points(&seg.change_points, &prov))?;
    }
    println!("{} change points, {} segments", seg.change_points.len(), seg.segments.len());
    Ok(())
}

fn featurize(a: &FeaturizeArgs) -> Result<()> {
    let frame = a.input.load()?;
    if frame.labels().is_none() {
        bail!("featurize needs labels: pass --noc or a `normal` column");
    }
    let split = split_at(frame.n_samples(), a.train_fraction)?;
    let thresholds = ExceedanceThresholds::fit(&frame, Some(0..split), a.exceed_quantile)?;
    let spec = a.window.spec(&frame)?;
    let mut ds = make_windows(&frame, &spec, &thresholds)?;
    if a.segmented {
        let cf = a.cf.resolve()?;
        let scores = score_multichannel(&frame, &cf)?;
        let seg = cf.detect(&scores);
        ds = augment_with_segmentation(&ds, &scores, &seg, a.drop_straddling)?;
    }
    let mut buf = Vec::new();
    ds.write_csv(&mut buf, &command_provenance())?;
    write(&a.out, &String::from_utf8(buf)?)?;
    println!(
        "{} windows x {} features (window {}, stride {}, horizon {}), {} positive",
        ds.len(),
        ds.n_features(),
        spec.window_len,
        spec.stride,
        spec.horizon,
        ds.labels.iter().filter(|&&l| l).count()
    );
    Ok(())
}

fn load_windows(path: &Path) -> Result<WindowDataset> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    WindowDataset::read_csv(file).with_context(|| format!("in {}", path.display()))
}

fn parse_kinds(names: &[String]) -> Result<Vec<DetectorKind>> {
    names
        .iter()
        .map(|s| DetectorKind::parse(s.trim()).ok_or_else(|| anyhow!("unknown detector `{s}` (rf, gbt, iforest, pca, kmeans)")))
        .collect()
}

fn train(a: &TrainArgs) -> Result<()> {
    let ds = load_windows(&a.windows)?;
    let split = a.split.index(&ds)?;
    let train = ds.train_side(split);
    if train.is_empty() {
        bail!("no training windows end before sample {split}");
    }
    let mut cfg: TrainConfig = load_pipeline_config(a.config.as_ref())?.train;
    cfg.seed = seed::derive(a.seed, "train");
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let head = comment_block(&command_provenance());
    for kind in parse_kinds(&a.detectors)? {
        let m = fit_detector(kind, &train.features, &train.labels, &train.feature_names, &cfg)
            .with_context(|| format!("training {}", kind.as_str()))?;
        let path = a.out_dir.join(format!("model_{}.txt", kind.as_str()));
        write(&path, &(head.clone() + &m.to_text()))?;
        println!("trained {} on {} windows -> {}", kind.as_str(), train.len(), path.display());
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds = load_windows(&a.windows)?;
    let split = a.split.index(&ds)?;
    let test = ds.test_side(split);
    if test.is_empty() {
        bail!("no test windows start at or after sample {split}");
    }
    let models = a
        .models
        .iter()
        .map(|p| DetectorModel::from_text(&read(p)?).with_context(|| format!("in {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for m in &models {
        if m.feature_names != test.feature_names {
            bail!("model `{}` was trained on a different feature set", m.kind().as_str());
        }
    }
    let probs = if models.len() == 1 {
        models[0].predict_proba_batch(&test.features)?
    } else {
        EnsembleModel::new(models)?.predict_proba(&test.features)?
    };
    let report = classification_report(&probs, &test.labels, a.threshold)?;
    let timestamps: Vec<i64> = match &a.data {
        Some(p) => {
            let frame = load_csv(p, &a.timestamp_column)?;
            test.meta
                .iter()
                .map(|m| frame.timestamps().get(m.end - 1).copied().ok_or_else(|| anyhow!("window end beyond data")))
                .collect::<Result<_>>()?
        }
        None => test.meta.iter().map(|m| (m.end - 1) as i64).collect(),
    };
    let rows: Vec<Prediction> = test
        .meta
        .iter()
        .enumerate()
        .map(|(i, m)| Prediction {
            window_index: i,
            start: m.start,
            end: m.end,
            timestamp: timestamps[i],
            probability: probs[i],
            label: test.labels[i],
        })
        .collect();
    let prov = command_provenance();
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    report.write(&a.out_dir, "eval_report", "evaluation", &prov)?;
    write(&a.out_dir.join("predictions.csv"), &write_predictions(&rows, &prov))?;
    print!("{}", report.to_text("evaluation"));
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let ra = EvalReport::from_csv(&read(&a.a)?)?;
    let rb = EvalReport::from_csv(&read(&a.b)?)?;
    let cmp = compare_runs(&ra, &rb)?;
    write(&a.out, &cmp.to_csv(&a.label_a, &a.label_b, &command_provenance()))?;
    print!("{}", cmp.to_text(&a.label_a, &a.label_b));
    Ok(())
}

fn health(a: &HealthArgs) -> Result<()> {
    let rows = read_predictions(&read(&a.predictions)?)?;
    let probs: Vec<f64> = rows.iter().map(|r| r.probability).collect();
    let ts: Vec<i64> = rows.iter().map(|r| r.timestamp).collect();
    let cfg = HealthConfig {
        window: a.window,
        warning_threshold: a.warning_threshold,
        alert_threshold: a.alert_threshold,
    };
    if cfg.window < 1 {
        bail!("--window must be >= 1");
    }
    let series = HealthSeries::compute(&probs, &ts, cfg)?;
    write(&a.out, &series.to_csv(&command_provenance()))?;
    println!(
        "{} windows, {} warnings, {} alerts",
        series.len(),
        series.warnings.len(),
        series.alerts.len()
    );
    Ok(())
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::from_text(&read(&a.config)?).with_context(|| format!("in {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(p) = &a.data {
        cfg.paths.data = Some(p.clone());
    }
    if let Some(p) = &a.noc {
        cfg.paths.noc = Some(p.clone());
    }
    if let Some(p) = &a.out_dir {
        cfg.paths.output_dir = p.clone();
    }
    let modes = match a.mode {
        ModeArg::Segmented => vec![Mode::Segmented],
        ModeArg::Unsegmented => vec![Mode::Unsegmented],
        ModeArg::Both => vec![Mode::Segmented, Mode::Unsegmented],
    };
    let mut reports = Vec::new();
    for mode in modes {
        let (run, written) = run_pipeline(&cfg, mode)?;
        print!("{}", run.report.to_text(&format!("{} ensemble", mode.as_str())));
        println!("{} artifacts written under {}", written.len(), cfg.paths.output_dir.join(mode.as_str()).display());
        reports.push(run.report);
    }
    if let [seg, unseg] = reports.as_slice() {
        let cmp = compare_runs(seg, unseg)?;
        let path = cfg.paths.output_dir.join("compare.csv");
        write(&path, &cmp.to_csv("segmented", "unsegmented", &provenance(&cfg, None)))?;
        print!("{}", cmp.to_text("segmented", "unsegmented"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Prep(a) => prep(a),
        Command::Tune(a) => tune(a),
        Command::Segment(a) => segment(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Health(a) => health(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

/// Error chain with causes dropped when the message above already quotes them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out = format!("{out}: {c}");
        }
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.chain().find_map(|c| c.downcast_ref::<pdm_core::Error>().and_then(|c| c.stage()));
            match stage {
                Some(stage) => eprintln!("error in stage `{stage}`: {}", describe(&e)),
                None => eprintln!("error: {}", describe(&e)),
            }
            ExitCode::FAILURE
        }
    }
}
