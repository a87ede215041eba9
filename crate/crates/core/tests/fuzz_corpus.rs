//! Replays the checked-in fuzz corpus through every parser. Seeds named
//! `bad_*` must be rejected; all others must parse.

use std::fs;
use std::path::PathBuf;

use pdm_core::config::PipelineConfig;
use pdm_core::data_io::{parse_change_points, parse_frame_str, parse_noc_str};
use pdm_core::detectors::DetectorModel;
use pdm_core::ensemble::{read_predictions, EvalReport};
use pdm_core::kvtext::Document;
use pdm_core::prep::PrepPlan;
use pdm_core::tuner::ParamGrid;
use pdm_core::windowing::WindowDataset;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check<T, E: std::fmt::Debug>(target: &str, parse: impl Fn(&str) -> Result<T, E>) {
    for (name, text) in seeds(target) {
        let result = parse(&text);
        if name.starts_with("bad_") {
            assert!(result.is_err(), "{target}/{name} should be rejected");
        } else if let Err(e) = result {
            panic!("{target}/{name}: {e:?}");
        }
    }
}

#[test]
fn csv_frame_seeds() {
    check("csv_frame", |t| parse_frame_str(t, "timestamp"));
}

#[test]
fn noc_seeds() {
    check("noc", parse_noc_str);
}

#[test]
fn change_point_seeds() {
    check("change_points", parse_change_points);
}

#[test]
fn kvtext_seeds() {
    check("kvtext", Document::parse);
}

#[test]
fn prep_plan_seeds() {
    check("prep_plan", |t| {
        let plan = PrepPlan::from_text(t)?;
        assert_eq!(PrepPlan::from_text(&plan.to_text()).unwrap(), plan);
        Ok::<_, pdm_core::Error>(plan)
    });
}

#[test]
fn detector_model_seeds() {
    check("detector_model", |t| {
        let m = DetectorModel::from_text(t)?;
        let p = m.predict_proba(&vec![0.5; m.n_features()]);
        assert!((0.0..=1.0).contains(&p));
        Ok::<_, pdm_core::Error>(m)
    });
}

#[test]
fn pipeline_config_seeds() {
    check("pipeline_config", |t| {
        let c = PipelineConfig::from_text(t)?;
        assert_eq!(PipelineConfig::from_text(&c.to_text()).unwrap(), c);
        Ok::<_, pdm_core::Error>(c)
    });
}

#[test]
fn param_grid_seeds() {
    check("param_grid", ParamGrid::from_text);
}

#[test]
fn window_dataset_seeds() {
    check("window_dataset", |t| WindowDataset::read_csv(t.as_bytes()));
}

#[test]
fn eval_report_seeds() {
    check("eval_report", EvalReport::from_csv);
}

#[test]
fn prediction_seeds() {
    check("predictions", read_predictions);
}

#[test]
fn truncated_seeds_never_panic() {
    let targets = [
        "csv_frame",
        "noc",
        "change_points",
        "kvtext",
        "prep_plan",
        "detector_model",
        "pipeline_config",
        "param_grid",
        "window_dataset",
        "eval_report",
        "predictions",
    ];
    for target in targets {
        for (_, text) in seeds(target) {
            for cut in (0..text.len()).step_by(37).filter(|&c| text.is_char_boundary(c)) {
                let t = &text[..cut];
                let _ = parse_frame_str(t, "timestamp");
                let _ = parse_noc_str(t);
                let _ = parse_change_points(t);
                let _ = Document::parse(t);
                let _ = PrepPlan::from_text(t);
                let _ = DetectorModel::from_text(t);
                let _ = PipelineConfig::from_text(t);
                let _ = ParamGrid::from_text(t);
                let _ = WindowDataset::read_csv(t.as_bytes());
                let _ = EvalReport::from_csv(t);
                let _ = read_predictions(t);
            }
        }
    }
}
