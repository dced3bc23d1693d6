use std::fs;
use std::path::Path;

use gradinv_harness::config::{ExperimentConfig, OutputFormat};
use gradinv_harness::sweep::{run_sweep, ExperimentRecord, SweepOptions};

const GRID: &str = r#"
[experiment]
d = [6, 8]
m = [800, 1600]
batch_size = 2
activation = "poly23"
seeds = { start = 10, count = 3 }

[data]
kind = "random_unit"
min_sv = 0.2
"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text, Path::new(".")).unwrap()
}

fn options(out: &Path, format: OutputFormat, jobs: usize, resume: bool) -> SweepOptions {
    SweepOptions {
        jobs,
        resume,
        out: Some(out.to_path_buf()),
        format,
    }
}

/// Drops the wall-time column.
fn strip_wall(csv_text: &str) -> Vec<String> {
    csv_text
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(7);
            cells.join(",")
        })
        .collect()
}

#[test]
fn csv_bytes_are_deterministic_modulo_wall_time() {
    let cfg = config(GRID);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_sweep(&cfg, &options(&a, OutputFormat::Csv, 1, false), |_| {}).unwrap();
    run_sweep(&cfg, &options(&b, OutputFormat::Csv, 3, false), |_| {}).unwrap();
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta.lines().count(), 1 + 4 * 3);
    assert_eq!(strip_wall(&ta), strip_wall(&tb));
}

#[test]
fn resume_after_crash_gives_the_same_record_set() {
    let cfg = config(GRID);
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let torn = dir.path().join("torn.csv");
    run_sweep(&cfg, &options(&full, OutputFormat::Csv, 1, false), |_| {}).unwrap();

    // simulate a kill mid-write: five complete rows and half of the sixth
    let text = fs::read_to_string(&full).unwrap();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut cut: String = lines[..6].concat();
    cut.push_str(&lines[6][..lines[6].len() / 2]);
    fs::write(&torn, cut).unwrap();

    let mut fresh = 0;
    let all = run_sweep(&cfg, &options(&torn, OutputFormat::Csv, 2, true), |_| fresh += 1).unwrap();
    assert_eq!(fresh, 12 - 5);
    assert_eq!(all.len(), 12);
    assert_eq!(
        strip_wall(&fs::read_to_string(&full).unwrap()),
        strip_wall(&fs::read_to_string(&torn).unwrap())
    );

    // nothing left to do
    let mut again = 0;
    run_sweep(&cfg, &options(&torn, OutputFormat::Csv, 1, true), |_| again += 1).unwrap();
    assert_eq!(again, 0);
}

#[test]
fn json_lines_round_trip_and_resume() {
    let cfg = config(GRID);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let records = run_sweep(&cfg, &options(&path, OutputFormat::Json, 2, false), |_| {}).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let parsed: Vec<ExperimentRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, records);
    for r in &parsed {
        assert!(r.diagnostics.is_some() || r.status == "failed");
        assert!(r.pi_min.unwrap() >= 0.2);
    }

    let keep: String = text.split_inclusive('\n').take(4).collect::<String>() + "{\"d\": 6, \"m\"";
    fs::write(&path, keep).unwrap();
    let all = run_sweep(&cfg, &options(&path, OutputFormat::Json, 1, true), |_| {}).unwrap();
    let strip = |rs: &[ExperimentRecord]| {
        rs.iter()
            .map(|r| ExperimentRecord { wall_ms: None, ..r.clone() })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&all), strip(&records));
}

#[test]
fn csv_round_trip_through_a_reader() {
    let cfg = config(GRID);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let records = run_sweep(&cfg, &options(&path, OutputFormat::Csv, 1, false), |_| {}).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    for (line, rec) in text.lines().skip(1).zip(&records) {
        let back = ExperimentRecord::from_csv_line(line).unwrap();
        assert_eq!(back.recon_error, rec.recon_error);
        assert_eq!(back.status, rec.status);
        assert_eq!((back.d, back.m, back.seed), (rec.d, rec.m, rec.seed));
    }
}

#[test]
fn failures_are_recorded_and_the_sweep_continues() {
    // a width below 2d cannot host the deep design
    let text = GRID.replace("m = [800, 1600]", "m = [10, 800]").replace("batch_size = 2", "batch_size = 2\ndepth = 3");
    let cfg = config(&text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let records = run_sweep(&cfg, &options(&path, OutputFormat::Csv, 1, false), |_| {}).unwrap();
    assert_eq!(records.len(), 12);
    for r in &records {
        if r.m == 10 {
            assert_eq!(r.status, "failed");
            assert_eq!(r.stage.as_deref(), Some("model"));
            assert!(r.recon_error.is_none());
        } else {
            assert_ne!(r.status, "failed");
            assert!(r.recon_error.unwrap().is_finite());
        }
    }
}

#[test]
fn mnist_fixture_sweep_identifies_images() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-01");
    let text = format!(
        r#"
[experiment]
m = 4000
batch_size = 2
activation = "poly23"
variant = "first_layer_alt"
seeds = [0, 1]

[data]
kind = "idx"
images = "{}"
labels = "{}"
pool = 100
"#,
        root.join("images.idx3-ubyte").display(),
        root.join("labels.idx1-ubyte").display()
    );
    let cfg = config(&text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let records = run_sweep(&cfg, &options(&path, OutputFormat::Json, 1, false), |_| {}).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert_eq!(r.d, 784);
        assert!(r.pair_identified.is_some());
        assert!(r.recon_error.unwrap() < 2f64.sqrt());
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.points.is_empty());
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
