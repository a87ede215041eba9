//! End-to-end orchestration: ingest, prep, optional segmentation, windows,
//! ensemble training, evaluation and the Health Index.

use std::fs;
use std::path::{Path, PathBuf};

use crate::changefinder::{score_multichannel, ChangeFinderConfig, ScoreSeries, Segmentation};
use crate::config::PipelineConfig;
use crate::data_io::{label_from_noc, load_csv, load_noc, TimeSeriesFrame};
use crate::detectors::{fit_detector, DetectorModel};
use crate::ensemble::{classification_report, EnsembleModel, EvalReport};
use crate::error::{Error, Result, StageExt};
use crate::health::HealthSeries;
use crate::kvtext::fmt_f64;
use crate::prep::{apply_prep, fit_prep, PrepPlan};
use crate::tuner::{grid_search, Leaderboard, SearchOptions};
use crate::windowing::{augment_with_segmentation, make_windows, temporal_split, ExceedanceThresholds, WindowDataset, WindowSpec};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Segmented,
    Unsegmented,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Segmented => "segmented",
            Mode::Unsegmented => "unsegmented",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "segmented" => Some(Mode::Segmented),
            "unsegmented" => Some(Mode::Unsegmented),
            _ => None,
        }
    }
}

/// Everything a run produces, kept in memory.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub mode: Mode,
    pub split_index: usize,
    pub plan: PrepPlan,
    pub leaderboard: Option<Leaderboard>,
    /// ChangeFinder parameters used for segmentation.
    pub changefinder: Option<ChangeFinderConfig>,
    pub scores: Option<ScoreSeries>,
    pub segmentation: Option<Segmentation>,
    pub train: WindowDataset,
    pub test: WindowDataset,
    pub ensemble: EnsembleModel,
    pub test_probs: Vec<f64>,
    pub report: EvalReport,
    pub health: HealthSeries,
}

/// Loads the sensor CSV and labels it from the NoC file, or from the
/// frame's own label column when no NoC path is configured.
pub fn ingest(config: &PipelineConfig) -> Result<TimeSeriesFrame> {
    let run = || -> Result<TimeSeriesFrame> {
        let data = config
            .paths
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("paths.data is not set".into()))?;
        let frame = load_csv(data, &config.paths.timestamp_column)?;
        match &config.paths.noc {
            Some(p) => Ok(label_from_noc(frame, &load_noc(p)?)),
            None => {
                frame.require_labels()?;
                Ok(frame)
            }
        }
    };
    run().stage("ingest")
}

/// The configured window, or `window_minutes` at the frame's median cadence.
pub fn window_spec(config: &PipelineConfig, frame: &TimeSeriesFrame) -> Result<WindowSpec> {
    match config.window {
        Some(w) => Ok(w),
        None => {
            let cadence = frame
                .median_cadence()
                .ok_or_else(|| Error::Invalid("cannot infer the sample cadence".into()))?;
            WindowSpec::from_duration(config.window_minutes, cadence)
        }
    }
}

/// Runs every stage after ingestion on a labeled frame (`true` = normal).
pub fn run_frame(frame: &TimeSeriesFrame, config: &PipelineConfig, mode: Mode) -> Result<PipelineRun> {
    config.validate().stage("config")?;
    let n = frame.n_samples();
    let normal = frame.require_labels().stage("ingest")?.to_vec();
    let split_index = (config.train_fraction * n as f64).round() as usize;
    if split_index == 0 || split_index >= n {
        return Err(Error::Invalid(format!("train fraction leaves an empty side of a {n}-sample frame"))).stage("prep");
    }

    let plan = fit_prep(&frame.slice(0..split_index), &normal[..split_index], &config.prep).stage("prep")?;
    let prepped = apply_prep(&plan, frame).stage("prep")?;

    let mut leaderboard = None;
    let mut cf_used = None;
    let mut scores = None;
    let mut segmentation = None;
    if mode == Mode::Segmented {
        let cf = if config.tune.enabled {
            let options = SearchOptions {
                objective: config.tune.objective,
                ..SearchOptions::default()
            };
            let board = grid_search(&prepped.slice(0..split_index), &config.tune.grid, &options).stage("tune")?;
            let best = board
                .best()
                .filter(|r| r.error.is_none())
                .map(|r| r.config)
                .ok_or_else(|| Error::Degenerate("every grid cell failed".into()))
                .stage("tune")?;
            leaderboard = Some(board);
            best
        } else {
            config.changefinder
        };
        let s = score_multichannel(&prepped, &cf).stage("segment")?;
        segmentation = Some(cf.detect(&s));
        scores = Some(s);
        cf_used = Some(cf);
    }

    let thresholds =
        ExceedanceThresholds::fit(&prepped, Some(0..split_index), config.exceed_quantile).stage("featurize")?;
    let spec = window_spec(config, frame).stage("featurize")?;
    let mut dataset = make_windows(&prepped, &spec, &thresholds).stage("featurize")?;
    if let (Some(s), Some(seg)) = (&scores, &segmentation) {
        dataset = augment_with_segmentation(&dataset, s, seg, config.drop_straddling).stage("featurize")?;
    }
    let (train, test) = temporal_split(&dataset, split_index).stage("featurize")?;

    let members = config
        .members
        .iter()
        .map(|&kind| fit_detector(kind, &train.features, &train.labels, &train.feature_names, &config.train))
        .collect::<Result<Vec<DetectorModel>>>()
        .stage("train")?;
    let ensemble = EnsembleModel::new(members).stage("train")?;

    let test_probs = ensemble.predict_proba(&test.features).stage("evaluate")?;
    let report = classification_report(&test_probs, &test.labels, config.decision_threshold).stage("evaluate")?;

    let timestamps: Vec<i64> = test.meta.iter().map(|m| frame.timestamps()[m.end - 1]).collect();
    let health = HealthSeries::compute(&test_probs, &timestamps, config.health).stage("health")?;

    Ok(PipelineRun {
        mode,
        split_index,
        plan,
        leaderboard,
        changefinder: cf_used,
        scores,
        segmentation,
        train,
        test,
        ensemble,
        test_probs,
        report,
        health,
    })
}

/// Comment lines heading every artifact: schema version, mode and the full
/// effective configuration.
pub fn provenance(config: &PipelineConfig, mode: Option<Mode>) -> Vec<String> {
    let mut out = vec![
        format!("pdm {} artifact", env!("CARGO_PKG_VERSION")),
        format!("artifact_schema_version = {ARTIFACT_SCHEMA_VERSION}"),
    ];
    if let Some(m) = mode {
        out.push(format!("mode = {}", m.as_str()));
    }
    out.extend(config.to_text().lines().map(|l| format!("config.{l}")));
    out
}

fn comment_block(comments: &[String]) -> String {
    comments.iter().flat_map(|c| c.lines()).map(|l| format!("# {l}\n")).collect()
}

/// Per-sample segmentation table: index, timestamp, channel mean,
/// aggregate outlier score, change score and a change-point flag.
pub fn segment_csv(frame: &TimeSeriesFrame, scores: &ScoreSeries, seg: &Segmentation, comments: &[String]) -> String {
    let mut s = comment_block(comments);
    s.push_str("index,timestamp,value_or_aggregate,outlier_score,change_score,is_change_point\n");
    let mut cps = seg.change_points.iter().peekable();
    let k = frame.n_channels().max(1) as f64;
    for i in 0..frame.n_samples() {
        let value = frame.columns().iter().map(|c| c[i]).sum::<f64>() / k;
        let is_cp = cps.next_if(|&&c| c == i).is_some();
        s.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            frame.timestamps()[i],
            fmt_f64(value),
            fmt_f64(scores.outlier_score[i]),
            fmt_f64(scores.change_score[i]),
            u8::from(is_cp)
        ));
    }
    s
}

fn write(path: PathBuf, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes every artifact of `run` into `dir` and returns the paths written.
pub fn write_artifacts(run: &PipelineRun, frame: &TimeSeriesFrame, config: &PipelineConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let go = || -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prov = provenance(config, Some(run.mode));
        let head = comment_block(&prov);
        let mut written = Vec::new();
        write(dir.join("config.txt"), &config.to_text(), &mut written)?;
        write(dir.join("prep_plan.txt"), &(head.clone() + &run.plan.to_text()), &mut written)?;
        if let Some(cf) = &run.changefinder {
            let mut d = crate::kvtext::Document::new();
            d.push("schema_version", ARTIFACT_SCHEMA_VERSION.to_string());
            d.push("kind", "changefinder_params");
            for (k, v) in cf.to_document().entries() {
                d.push(k, v);
            }
            write(dir.join("changefinder.txt"), &(head.clone() + &d.to_text()), &mut written)?;
        }
        if let Some(board) = &run.leaderboard {
            let mut buf = Vec::new();
            board.write_csv(&mut buf, &prov).map_err(|e| Error::io(dir.join("leaderboard.csv"), e))?;
            write(dir.join("leaderboard.csv"), &String::from_utf8_lossy(&buf), &mut written)?;
        }
        if let (Some(s), Some(seg)) = (&run.scores, &run.segmentation) {
            write(dir.join("segments.csv"), &segment_csv(frame, s, seg, &prov), &mut written)?;
        }
        for m in &run.ensemble.members {
            let name = format!("model_{}.txt", m.kind().as_str());
            write(dir.join(name), &(head.clone() + &m.to_text()), &mut written)?;
        }
        run.report.write(dir, "eval_report", &format!("{} ensemble", run.mode.as_str()), &prov)?;
        written.push(dir.join("eval_report.txt"));
        written.push(dir.join("eval_report.csv"));
        write(dir.join("health.csv"), &run.health.to_csv(&prov), &mut written)?;
        Ok(written)
    };
    go().stage("write")
}

/// Ingests the configured files, runs `mode` and writes artifacts under
/// `output_dir/<mode>/`.
pub fn run_pipeline(config: &PipelineConfig, mode: Mode) -> Result<(PipelineRun, Vec<PathBuf>)> {
    let frame = ingest(config)?;
    let run = run_frame(&frame, config, mode)?;
    let dir = config.paths.output_dir.join(mode.as_str());
    let written = write_artifacts(&run, &frame, config, &dir)?;
    Ok((run, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{generate_synthetic, SynthConfig};

    fn small() -> (TimeSeriesFrame, PipelineConfig) {
        let data = generate_synthetic(&SynthConfig {
            n_samples: 6000,
            n_channels: 4,
            n_regime_shifts: 10,
            n_anomaly_intervals: 4,
            anomaly_fraction: 0.04,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut cfg = PipelineConfig::default().with_seed(3);
        cfg.window = Some(WindowSpec::new(30, 10, 30).unwrap());
        cfg.train.n_trees = 10;
        cfg.train.gbt_rounds = 10;
        (data.frame, cfg)
    }

    #[test]
    fn both_modes_run_and_are_deterministic() {
        let (frame, cfg) = small();
        for mode in [Mode::Segmented, Mode::Unsegmented] {
            let a = run_frame(&frame, &cfg, mode).unwrap();
            let b = run_frame(&frame, &cfg, mode).unwrap();
            assert_eq!(a.test_probs, b.test_probs);
            assert_eq!(a.report, b.report);
            assert_eq!(a.segmentation.is_some(), mode == Mode::Segmented);
            assert_eq!(a.health.len(), a.test.len());
            assert!(a.train.meta.iter().all(|m| m.horizon_end <= a.split_index));
            assert!(a.test.meta.iter().all(|m| m.start >= a.split_index));
        }
    }

    #[test]
    fn artifacts_carry_provenance() {
        let (frame, cfg) = small();
        let run = run_frame(&frame, &cfg, Mode::Segmented).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = write_artifacts(&run, &frame, &cfg, dir.path()).unwrap();
        for p in &written {
            let text = fs::read_to_string(p).unwrap();
            if p.ends_with("config.txt") {
                assert!(text.starts_with("schema_version = 1"));
            } else {
                assert!(text.contains("# artifact_schema_version = 1"), "{p:?}");
                assert!(text.contains("# config.seed = 3"), "{p:?}");
            }
        }
        let model = fs::read_to_string(dir.path().join("model_rf.txt")).unwrap();
        assert_eq!(DetectorModel::from_text(&model).unwrap(), run.ensemble.members[0]);
        let plan = fs::read_to_string(dir.path().join("prep_plan.txt")).unwrap();
        assert_eq!(PrepPlan::from_text(&plan).unwrap(), run.plan);
        let report = fs::read_to_string(dir.path().join("eval_report.csv")).unwrap();
        assert_eq!(EvalReport::from_csv(&report).unwrap(), run.report);
    }

    #[test]
    fn missing_inputs_name_the_ingest_stage() {
        let mut cfg = PipelineConfig::default();
        cfg.paths.data = Some("/nonexistent/data.csv".into());
        assert_eq!(ingest(&cfg).unwrap_err().stage(), Some("ingest"));
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        fs::write(&data, "timestamp,a\n1,2.0\n2,3.0\n").unwrap();
        cfg.paths.data = Some(data);
        cfg.paths.noc = Some(dir.path().join("missing_noc.csv"));
        let err = ingest(&cfg).unwrap_err();
        assert_eq!(err.stage(), Some("ingest"));
        assert!(err.to_string().contains("missing_noc.csv"));
    }
}
