use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use psrcast::commands::{AnalysisFile, SeedsFile};
use psrcast::weights_io;
use psrcast_core::evaluation::EvalReport;
use psrcast_core::interpret::parse_csv;
use psrcast_core::nnet::Model;

const TINY: &str = r#"
[synth]
length = 1500

[model]
d_model = 8
d_ff = 16
e_layers = 1
n_heads = 2
lookback = 48
horizon = 8
stride = 4

[psr]
mode = "fixed"
tau = 4
m = 3

[train]
seeds = [1, 2]
max_epochs = 2
batch_size = 16
learning_rate = 1e-3

[eval]
season = 24

[eval.grid]
lookbacks = [48]
horizons = [8]
seeds = [1]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    let mut all = vec!["psrcast"];
    all.extend_from_slice(args);
    psrcast::cli::run(all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// results.jsonl with the wall-clock field removed from every record.
fn comparable_results(dir: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(dir.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_clock_seconds");
            v
        })
        .collect()
}

#[test]
fn missing_data_file_is_a_config_error_without_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{TINY}\n[data]\npath = \"nope.csv\"\n"));
    let out = tmp.path().join("run");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 2);
    assert!(!out.exists());

    let status = Command::new(env!("CARGO_BIN_EXE_psrcast"))
        .args(["train", "--data", "/definitely/missing.csv", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn invalid_config_reports_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nn_heads = 3\n");
    let out = tmp.path().join("x");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 2);
    let cfg = write_config(tmp.path(), "[modle]\n");
    assert_eq!(run(&["analyze", "--config", s(&cfg), "--out", s(&out)]), 2);
    assert!(!out.exists());
}

#[test]
fn unparseable_csv_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bad.csv");
    fs::write(&data, "1.0\nabc\n3.0\n").unwrap();
    let out = tmp.path().join("x");
    assert_eq!(run(&["analyze", "--data", s(&data), "--out", s(&out)]), 3);
}

#[test]
fn locked_output_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lock"), "1").unwrap();
    assert_eq!(run(&["synth", "--length", "100", "--out", s(&out)]), 2);
}

#[test]
fn synth_csv_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    assert_eq!(run(&["synth", "--length", "500", "--seed", "9", "--out", s(&out)]), 0);
    let ts = psrcast::csv_io::load_csv(&out.join("synth.csv"), &Default::default()).unwrap();
    let direct = psrcast_core::synth::generate(&psrcast_core::synth::SynthSpec {
        length: 500,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(ts.values(), direct.values());
    assert!(out.join("config.json").is_file());
}

#[test]
fn pipeline_is_reproducible_and_artifacts_are_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let synth_dir = tmp.path().join("data");
    assert_eq!(run(&["synth", "--length", "1500", "--out", s(&synth_dir)]), 0);
    let cfg = write_config(tmp.path(), &format!("{TINY}\n[data]\npath = \"data/synth.csv\"\n"));

    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 0);
        assert_eq!(run(&["evaluate", "--run", s(&out)]), 0);
        dirs.push(out);
    }
    assert_eq!(comparable_results(&dirs[0]), comparable_results(&dirs[1]));
    let a = &dirs[0];
    for f in [
        "config.json",
        "analysis.json",
        "norm_stats.json",
        "seeds.json",
        "weights.bin",
        "history.csv",
        "results.csv",
        "splits/train.csv",
        "splits/val.csv",
        "splits/test.csv",
        "seeds/1/weights.bin",
        "seeds/2/history.csv",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert!(!a.join(".lock").exists());
    assert_eq!(fs::read(a.join("weights.bin")).unwrap(), fs::read(dirs[1].join("weights.bin")).unwrap());

    // the top-level checkpoint is the seed with the lowest validation loss
    let seeds: SeedsFile = serde_json::from_str(&fs::read_to_string(a.join("seeds.json")).unwrap()).unwrap();
    let best = seeds
        .runs
        .iter()
        .min_by(|x, y| x.best_val_loss.total_cmp(&y.best_val_loss))
        .unwrap();
    assert_eq!(seeds.best_seed, best.seed);
    let top = weights_io::load(&a.join("weights.bin")).unwrap();
    let seeded = weights_io::load(&a.join(format!("seeds/{}/weights.bin", best.seed))).unwrap();
    assert_eq!(top, seeded);

    // one report per seed, exactly one flagged best, baselines present
    let reports: Vec<EvalReport> = fs::read_to_string(a.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports.iter().filter(|r| r.best_of_seeds).count(), 1);
    assert_eq!(reports[0].baselines.len(), 3);
    assert_eq!((reports[0].tau, reports[0].m), (4, 3));

    // the snapshot re-validates and the fixed embedding is recorded
    let snap = psrcast::config::RunConfig::from_json(&fs::read_to_string(a.join("config.json")).unwrap()).unwrap();
    snap.validate().unwrap();
    let analysis: AnalysisFile = serde_json::from_str(&fs::read_to_string(a.join("analysis.json")).unwrap()).unwrap();
    assert_eq!((analysis.params.tau, analysis.params.m), (4, 3));
    assert!(analysis.report.is_none());

    // explain exports
    let dest = tmp.path().join("explain");
    assert_eq!(
        run(&["explain", "--run", s(a), "--window", "3", "--dest", s(&dest)]),
        0
    );
    let model = Model::new(top).unwrap();
    let (m, n) = (model.config().m, model.config().n);
    let pgm = fs::read(dest.join("ram.pgm")).unwrap();
    assert!(pgm.starts_with(format!("P5\n{n} {m}\n255\n").as_bytes()));
    let ram = parse_csv(&fs::read_to_string(dest.join("ram.csv")).unwrap()).unwrap();
    assert_eq!((ram.rows(), ram.cols()), (m, n));
    assert!(ram.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    for head in 0..2 {
        let att = parse_csv(&fs::read_to_string(dest.join(format!("attention_l0_h{head}.csv"))).unwrap()).unwrap();
        assert_eq!((att.rows(), att.cols()), (n, n));
        for q in 0..n {
            assert!((att.col(q).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let image = parse_csv(&fs::read_to_string(dest.join("image.csv")).unwrap()).unwrap();
    assert_eq!((image.rows(), image.cols()), (m, n));
    assert!(dest.join("meta.json").is_file());
    assert_eq!(run(&["explain", "--run", s(a), "--window", "100000", "--dest", s(&dest)]), 2);
}

#[test]
fn auto_psr_is_frozen_into_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("mode = \"fixed\"\ntau = 4\nm = 3", "mode = \"auto\"");
    let cfg = write_config(tmp.path(), &text.replace("seeds = [1, 2]", "seeds = [1]"));
    let out = tmp.path().join("auto");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 0);
    let analysis: AnalysisFile = serde_json::from_str(&fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    let report = analysis.report.expect("auto mode stores the analysis");
    assert_eq!((report.tau, report.m), (analysis.params.tau, analysis.params.m));
    assert!(report.tau <= 48 / 4);
    assert!(report.m <= 10);
    assert_eq!(report.options.tau_max, 12);
}

#[test]
fn analyze_and_embed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("an");
    assert_eq!(run(&["analyze", "--config", s(&cfg), "--out", s(&out)]), 0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    for key in ["tau", "m", "lle", "mi_profile", "fnn_profile", "params", "lle_per_hour"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let lle = json["lle"].as_f64().unwrap();
    assert!((json["lle_per_hour"].as_f64().unwrap() - 4.0 * lle).abs() <= 1e-12 * lle.abs().max(1.0));
    let mi = fs::read_to_string(out.join("mi_profile.csv")).unwrap();
    assert!(mi.starts_with("tau,mi\n"));
    assert!(out.join("fnn_profile.csv").is_file());

    let emb = tmp.path().join("emb");
    assert_eq!(
        run(&["embed", "--config", s(&cfg), "--out", s(&emb), "--start", "10"]),
        0
    );
    // tau 4, m 3 on a 48-sample window: 40 phase points
    let pgm = fs::read(emb.join("trajectory.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n40 3\n255\n"));
    assert_eq!(pgm.len(), b"P5\n40 3\n255\n".len() + 120);
    let traj = parse_csv(&fs::read_to_string(emb.join("trajectory.csv")).unwrap()).unwrap();
    let series = psrcast_core::synth::generate(&psrcast_core::synth::SynthSpec {
        length: 1500,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(traj.get(2, 0), series.values()[10 + 8]);
    assert_eq!(
        run(&["embed", "--config", s(&cfg), "--out", s(&emb), "--start", "1490"]),
        2
    );
}

#[test]
fn ablate_and_grid_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("seeds = [1, 2]\nmax_epochs = 2", "seeds = [1]\nmax_epochs = 1"));
    let out = tmp.path().join("abl");
    assert_eq!(run(&["ablate", "--config", s(&cfg), "--out", s(&out)]), 0);
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "lookback,horizon,metric,full,no_local,improvement_pct");
    assert_eq!(lines.len(), 4);
    let reports = comparable_results(&out);
    let models: Vec<&str> = reports.iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["full", "no_local"]);

    let grid = tmp.path().join("grid");
    assert_eq!(run(&["evaluate", "--grid", "--config", s(&cfg), "--out", s(&grid)]), 0);
    let csv = fs::read_to_string(grid.join("results.csv")).unwrap();
    assert!(csv.starts_with("lookback,horizon,full_mae,full_mape"), "{csv}");
    assert_eq!(csv.lines().count(), 2);
}
