use std::collections::BTreeMap;
use std::io::Write;

use vkchain::metrics::{read_metrics, MetricsRecord, MetricsWriter};
use vkchain::report::{aggregate, load_report, Summary};
use vkchain::HarnessError;

fn eval_record(model: &str, seed: u64, rate: f64) -> MetricsRecord {
    MetricsRecord {
        step: 100,
        phase: "eval".into(),
        model: Some(model.into()),
        setting: Some("planar3+planar4".into()),
        env: Some("planar3".into()),
        success_rate: BTreeMap::from([("planar3".to_string(), rate)]),
        wall_clock: 1.5,
        seed,
        ..Default::default()
    }
}

fn loss_record(phase: &str, model: &str, env: Option<&str>, seed: u64, loss: f64) -> MetricsRecord {
    MetricsRecord {
        step: 10,
        phase: phase.into(),
        model: Some(model.into()),
        setting: Some("planar3+planar4".into()),
        env: env.map(Into::into),
        loss: Some(loss),
        seed,
        ..Default::default()
    }
}

#[test]
fn metrics_file_is_append_only_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    MetricsWriter::append(&path).unwrap().write(&eval_record("vkt", 7, 0.5)).unwrap();
    MetricsWriter::append(&path).unwrap().write(&eval_record("bct", 7, 0.25)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        assert!(serde_json::from_str::<serde_json::Value>(line).unwrap().is_object());
    }
    let back = read_metrics(&path).unwrap();
    assert_eq!(back, vec![eval_record("vkt", 7, 0.5), eval_record("bct", 7, 0.25)]);
}

#[test]
fn out_of_range_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = MetricsWriter::append(&dir.path().join("m.jsonl")).unwrap();
    assert!(w.write(&eval_record("vkt", 1, 1.2)).is_err());
    let chained = MetricsRecord { success_length: Some(3.5), ..eval_record("vkt", 1, 0.5) };
    assert!(w.write(&chained).is_err());
    assert!(w.write(&MetricsRecord { success_length: Some(3.0), ..chained }).is_ok());
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    MetricsWriter::append(&path).unwrap().write(&eval_record("vkt", 7, 0.5)).unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    writeln!(f, "{{\"step\": 3, \"phase\": ").unwrap();
    let err = load_report(&[path.clone()]).unwrap_err();
    assert!(matches!(err, HarnessError::Validation(_)));
    assert!(err.to_string().contains("m.jsonl:2"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_report(&["/nonexistent/metrics.jsonl".into()]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(load_report(&[]).is_err());
}

#[test]
fn single_file_table_equals_its_values() {
    let r = aggregate(&[vec![eval_record("vkt", 7, 0.62), eval_record("bct", 7, 0.18)]]);
    assert_eq!(r.get("planar3+planar4", "planar3", "success_rate", "vkt"), Some(Summary { mean: 0.62, std: None, n: 1 }));
    assert_eq!(r.get("planar3+planar4", "planar3", "success_rate", "bct").unwrap().mean, 0.18);
    let text = r.text();
    assert!(text.contains("0.620") && text.contains("0.180"), "{text}");
}

#[test]
fn equal_seeds_have_zero_spread() {
    let files: Vec<Vec<MetricsRecord>> = [7, 11, 13].iter().map(|&s| vec![eval_record("vkt", s, 0.4)]).collect();
    let s = aggregate(&files).get("planar3+planar4", "planar3", "success_rate", "vkt").unwrap();
    assert_eq!((s.mean, s.std, s.n), (0.4, Some(0.0), 3));
}

#[test]
fn known_triple_has_sample_std_one_tenth() {
    let files: Vec<Vec<MetricsRecord>> = [(7, 0.6), (11, 0.7), (13, 0.8)].iter().map(|&(s, v)| vec![eval_record("vkt", s, v)]).collect();
    let s = aggregate(&files).get("planar3+planar4", "planar3", "success_rate", "vkt").unwrap();
    assert!((s.mean - 0.7).abs() < 1e-12);
    assert!((s.std.unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn relative_precision_pairs_final_action_losses_by_seed() {
    // the last loss of each run counts; heads are averaged over robots
    let vkt = vec![
        loss_record("head_only", "vkt", Some("planar3"), 7, 0.9),
        loss_record("head_only", "vkt", Some("planar3"), 7, 0.2),
        loss_record("head_only", "vkt", Some("planar4"), 7, 0.4),
    ];
    let bct = vec![loss_record("bct_end_to_end", "bct", None, 7, 0.5), loss_record("bct_end_to_end", "bct", None, 7, 0.45)];
    let r = aggregate(&[vkt, bct]);
    let p = r.get("planar3+planar4", "all", "relative_precision", "vkt vs bct").unwrap();
    assert!((p.mean - 0.5).abs() < 1e-12, "{p:?}");
    let csv = r.csv();
    assert!(csv.starts_with("setting,robot,metric,model,mean,std,n\n"));
    let row = csv.lines().find(|l| l.starts_with("planar3+planar4,all,relative_precision,vkt vs bct,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert!((fields[4].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(&fields[5..], ["", "1"]);
}

#[test]
fn chained_records_report_success_length() {
    let rec = MetricsRecord { success_length: Some(1.5), ..eval_record("vkt", 7, 0.2) };
    let r = aggregate(&[vec![rec]]);
    assert_eq!(r.get("planar3+planar4", "planar3", "success_length", "vkt").unwrap().mean, 1.5);
    assert_eq!(r.get("planar3+planar4", "planar3", "chained_success_rate", "vkt").unwrap().mean, 0.2);
}
