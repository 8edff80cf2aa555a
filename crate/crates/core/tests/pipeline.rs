use std::fs;
use std::path::Path;

use qnn_importance::orchestrator::{
    self, cmd_analyze, cmd_report, cmd_sample_runs, cmd_verify, read_runs, run_record,
    runs_header, ExperimentManifest, RunRow, RunStatus,
};
use qnn_importance::seed::run_seed;
use qnn_importance::space;
use qnn_importance::verification::SearchSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// Two noisy gaussian blobs in 4 dimensions, written as csv plus a manifest.
fn fixture(dir: &Path, rows: usize) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut csv = String::from("a,b,c,d,label\n");
    for i in 0..rows {
        let pos = i % 2 == 0;
        let shift = if pos { 0.8 } else { -0.8 };
        let v: Vec<String> = (0..4)
            .map(|_| format!("{:.5}", shift + rng.random_range(-1.0..1.0)))
            .collect();
        csv += &format!("{},{}\n", v.join(","), if pos { "pos" } else { "neg" });
    }
    fs::write(dir.join("toy.csv"), csv).unwrap();
    let m = dir.join("manifest.json");
    fs::write(
        &m,
        r#"[{"name":"toy","path":"toy.csv","label_column":"label","positive_label":"pos"}]"#,
    )
    .unwrap();
    m
}

fn small(manifest: &Path, out: &Path, configs: usize) -> ExperimentManifest {
    let mut exp = ExperimentManifest::new(manifest, out);
    exp.configs = configs;
    exp.epochs = 2;
    exp.folds = 2;
    exp.seed = 9;
    exp
}

fn runs(out: &Path) -> String {
    fs::read_to_string(out.join("toy").join(orchestrator::RUNS_FILE)).unwrap()
}

#[test]
fn runs_file_schema() {
    let tmp = TempDir::new().unwrap();
    let m = fixture(tmp.path(), 24);
    let out = tmp.path().join("out");
    cmd_sample_runs(&small(&m, &out, 3)).unwrap();
    let text = runs(&out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 14);
    assert_eq!(&header[10..], ["y", "status", "run_id", "seed"]);
    assert_eq!(header, runs_header());
    let rows = read_runs(&out.join("toy").join(orchestrator::RUNS_FILE)).unwrap();
    assert_eq!(rows.iter().map(|r| r.run_id).collect::<Vec<_>>(), [0, 1, 2]);
    for (line, row) in lines.zip(&rows) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(row.seed, run_seed(9, "toy", row.run_id));
        assert_eq!(f[13], row.seed.to_string());
        if row.status == RunStatus::Ok {
            let y = row.y.unwrap();
            assert!((0.0..=1.0).contains(&y));
            // 17 significant digits
            let mantissa = f[10].split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17, "{}", f[10]);
            assert_eq!(f[10].parse::<f64>().unwrap(), y);
        }
        let record = out.join("toy/records").join(format!("run_{:06}.json", row.run_id));
        assert!(record.is_file());
    }
}

#[test]
fn interrupted_campaign_resumes_to_the_same_file() {
    let tmp = TempDir::new().unwrap();
    let m = fixture(tmp.path(), 24);
    let full = tmp.path().join("full");
    let cut = tmp.path().join("cut");
    cmd_sample_runs(&small(&m, &full, 5)).unwrap();

    cmd_sample_runs(&small(&m, &cut, 3)).unwrap();
    let path = cut.join("toy").join(orchestrator::RUNS_FILE);
    let before = fs::read_to_string(&path).unwrap();
    let first_record = cut.join("toy/records/run_000000.json");
    let stamp = fs::metadata(&first_record).unwrap().modified().unwrap();
    // a write cut off mid-line
    fs::write(&path, before.clone() + "0.001,16,3,").unwrap();

    let report = cmd_sample_runs(&small(&m, &cut, 5)).unwrap();
    let d = &report.datasets[0];
    assert_eq!((d.already_done, d.completed), (3, 2));
    assert_eq!(fs::metadata(&first_record).unwrap().modified().unwrap(), stamp);
    let after = runs(&cut);
    assert!(after.starts_with(&before));
    assert_eq!(after, runs(&full));
}

#[test]
fn campaign_is_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let m = fixture(tmp.path(), 24);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_sample_runs(&small(&m, &a, 4)).unwrap();
    let mut exp = small(&m, &b, 4);
    exp.jobs = 3;
    cmd_sample_runs(&exp).unwrap();
    assert_eq!(runs(&a), runs(&b));
}

/// Writes a runs.csv whose scores follow a known function of the configuration.
fn synthetic_runs(out: &Path, name: &str, n: u64, score: impl Fn(&[f64]) -> f64) {
    let dir = out.join(name);
    fs::create_dir_all(&dir).unwrap();
    let mut w = csv::Writer::from_path(dir.join(orchestrator::RUNS_FILE)).unwrap();
    w.write_record(runs_header()).unwrap();
    for run_id in 0..n {
        let seed = run_seed(0, name, run_id);
        let config = space::sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let x = space::to_feature_vector(&config);
        let row = RunRow { run_id, seed, config, y: Some(score(&x)), status: RunStatus::Ok };
        w.write_record(run_record(&row)).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn analysis_on_synthetic_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_path_buf();
    synthetic_runs(&out, "learnable", 300, |x| 1.0 / (1.0 + (-x[0]).exp()));
    let mut noise = ChaCha8Rng::seed_from_u64(3);
    let noisy: Vec<f64> = (0..300).map(|_| noise.random::<f64>()).collect();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    synthetic_runs(&out, "noise", 300, |_| {
        noisy[counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed)]
    });

    let mut exp = ExperimentManifest::new("", &out);
    exp.forest.n_trees = 16;
    exp.search = SearchSettings { iterations: 40, repeats: 2 };
    let outcome = cmd_analyze(&exp).unwrap();
    let q = |n: &str| outcome.quality.iter().find(|q| q.dataset == n).unwrap();
    assert!(q("learnable").passed);
    assert!(!q("noise").passed);
    let imp = outcome.importance.unwrap();
    assert_eq!(imp.datasets.len(), 1);
    assert_eq!(imp.ranking[0].name, "learning_rate");
    assert_eq!(imp.ranking[0].rank, 1);

    let csv = fs::read_to_string(out.join(orchestrator::IMPORTANCE_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 55);

    let v = cmd_verify(&exp).unwrap();
    assert_eq!(v.datasets.len(), 1);
    let verification = fs::read_to_string(out.join(orchestrator::VERIFICATION_CSV)).unwrap();
    // per-dataset and cross-dataset rows for every (hyperparameter, iteration)
    assert_eq!(verification.lines().count(), 1 + 2 * 10 * 40);

    let summary = cmd_report(&out).unwrap();
    assert!(summary.contains("learning_rate"));
    assert!(out.join(orchestrator::SUMMARY_FILE).is_file());
}

#[test]
fn report_names_missing_inputs() {
    let tmp = TempDir::new().unwrap();
    let err = cmd_report(tmp.path()).unwrap_err().to_string();
    assert!(err.contains("runs.csv"), "{err}");
    assert!(err.contains(orchestrator::QUALITY_FILE), "{err}");
}
