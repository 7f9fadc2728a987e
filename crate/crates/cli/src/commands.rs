//! One function per subcommand. Each validates its inputs before creating
//! or locking an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use psrcast_core::chaos::{analyze, ChaosReport, PsrParams};
use psrcast_core::embedding::{build_windows, trajectory_matrix, WindowPair};
use psrcast_core::evaluation::{
    baseline_metrics, evaluate_model, render_results_table, run_experiment, EvalReport, EvalWindows, ExperimentGrid,
    ExperimentSetup,
};
use psrcast_core::interpret::{attention_maps, ram, to_csv, to_pgm, RAM_FORMULA};
use psrcast_core::nnet::{Model, ModelWeights, Variant};
use psrcast_core::series::{split, NormStats, TimeSeries};
use psrcast_core::synth;
use psrcast_core::training::{train_from, SystemClock};
use serde::{Deserialize, Serialize};

use crate::config::{PsrMode, RunConfig};
use crate::csv_io::{load_csv, read_series, write_series, CsvError};
use crate::error::{CliError, CliResult, Context};
use crate::run::{history_csv, read_json, write_bytes, write_json, write_text, DirLock};
use crate::weights_io;

pub const CONFIG_FILE: &str = "config.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const NORM_FILE: &str = "norm_stats.json";
pub const SEEDS_FILE: &str = "seeds.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const RESULTS_CSV: &str = "results.csv";

/// Delay embedding used by a run, with the analysis behind it in auto mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFile {
    pub mode: PsrMode,
    /// Which part of the series was analysed.
    pub segment: String,
    pub samples: usize,
    pub step_minutes: f64,
    pub params: PsrParams,
    /// LLE converted from per-sample to per-hour.
    pub lle_per_hour: Option<f64>,
    #[serde(flatten)]
    pub report: Option<ChaosReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsFile {
    pub dataset: String,
    /// Seed whose weights are copied to the top level (lowest validation loss).
    pub best_seed: u64,
    pub runs: Vec<SeedRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    #[default]
    All,
    Train,
    Val,
    Test,
}

fn csv_error(e: CsvError) -> CliError {
    match e {
        CsvError::FileNotFound(p) => CliError::Config(format!("data.path: file not found: {}", p.display())),
        CsvError::ColumnMissing(c) => CliError::Config(format!("data.column: column {c} not present")),
        CsvError::Io { path, source } => CliError::io(path, source),
        other => CliError::Data(format!("series_io: {other}")),
    }
}

/// The configured CSV, or the synthetic series when no path is set.
pub fn load_series(cfg: &RunConfig) -> CliResult<TimeSeries> {
    match &cfg.data.path {
        Some(path) => load_csv(path, &cfg.data.csv_options()).map_err(csv_error),
        None => synth::generate(&cfg.synth).stage("synth"),
    }
}

struct Segments {
    train: TimeSeries,
    val: TimeSeries,
    test: TimeSeries,
}

fn segments(cfg: &RunConfig, series: &TimeSeries) -> CliResult<Segments> {
    let (train, val, test) = split(series, &cfg.data.split).stage("series_io")?;
    Ok(Segments { train, val, test })
}

fn lle_per_hour(lle: f64, step_minutes: f64) -> f64 {
    lle * 60.0 / step_minutes
}

/// Fixed parameters, or the chaos analysis of the training segment.
fn resolve_psr(cfg: &RunConfig, train: &TimeSeries, lookback: usize) -> CliResult<AnalysisFile> {
    let base = |params, report: Option<ChaosReport>| AnalysisFile {
        mode: cfg.psr.mode,
        segment: "train".into(),
        samples: train.len(),
        step_minutes: train.step_minutes(),
        params,
        lle_per_hour: report.as_ref().map(|r| lle_per_hour(r.lle, train.step_minutes())),
        report,
    };
    if let Some(params) = cfg.psr.fixed() {
        return Ok(base(params, None));
    }
    let opts = cfg.psr.auto_options(lookback);
    let report = analyze(train.values(), &opts).stage("chaos")?;
    log::info!(
        "auto PSR on {} training samples: tau {}, m {} (converged {}), lle {:.5}/sample",
        train.len(),
        report.tau,
        report.m,
        report.m_converged,
        report.lle
    );
    Ok(base(report.params(), Some(report)))
}

fn segment_values<'a>(series: &'a TimeSeries, seg: &'a Segments, which: Segment) -> &'a TimeSeries {
    match which {
        Segment::All => series,
        Segment::Train => &seg.train,
        Segment::Val => &seg.val,
        Segment::Test => &seg.test,
    }
}

pub fn cmd_analyze(cfg: &RunConfig, segment: Segment, profiles: bool) -> CliResult<AnalysisFile> {
    let series = load_series(cfg)?;
    let seg = segments(cfg, &series)?;
    let target = segment_values(&series, &seg, segment);
    let report = analyze(target.values(), &cfg.psr.analysis).stage("chaos")?;
    let file = AnalysisFile {
        mode: PsrMode::Auto,
        segment: format!("{segment:?}").to_lowercase(),
        samples: target.len(),
        step_minutes: target.step_minutes(),
        params: report.params(),
        lle_per_hour: Some(lle_per_hour(report.lle, target.step_minutes())),
        report: Some(report),
    };
    let _lock = DirLock::acquire(&cfg.out)?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    write_json(&cfg.out.join(ANALYSIS_FILE), &file)?;
    if profiles {
        let r = file.report.as_ref().expect("auto analysis has a report");
        let mut mi = String::from("tau,mi\n");
        for (t, v) in r.mi_profile.taus.iter().zip(&r.mi_profile.mi) {
            mi.push_str(&format!("{t},{v:?}\n"));
        }
        write_text(&cfg.out.join("mi_profile.csv"), &mi)?;
        let mut fnn = String::from("m,fnn_fraction\n");
        for (d, v) in r.fnn_profile.dims.iter().zip(&r.fnn_profile.fraction) {
            fnn.push_str(&format!("{d},{v:?}\n"));
        }
        write_text(&cfg.out.join("fnn_profile.csv"), &fnn)?;
    }
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedInfo {
    pub segment: Segment,
    pub start: usize,
    pub lookback: usize,
    pub params: PsrParams,
    pub rows: usize,
    pub cols: usize,
}

/// Trajectory image of `lookback` samples starting at `start` within `segment`.
pub fn cmd_embed(cfg: &RunConfig, segment: Segment, start: usize) -> CliResult<EmbedInfo> {
    let series = load_series(cfg)?;
    let seg = segments(cfg, &series)?;
    let lookback = cfg.model.lookback;
    let values = segment_values(&series, &seg, segment).values();
    let end = start
        .checked_add(lookback)
        .filter(|e| *e <= values.len())
        .ok_or_else(|| {
            CliError::Config(format!(
                "start: window {start}..{} exceeds the {} samples of the segment",
                start.saturating_add(lookback),
                values.len()
            ))
        })?;
    let psr = resolve_psr(cfg, &seg.train, lookback)?;
    let image = trajectory_matrix(&values[start..end], psr.params).stage("embedding")?;
    let info = EmbedInfo {
        segment,
        start,
        lookback,
        params: psr.params,
        rows: image.m(),
        cols: image.n(),
    };
    let _lock = DirLock::acquire(&cfg.out)?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    write_json(&cfg.out.join("embed.json"), &info)?;
    write_text(&cfg.out.join("trajectory.csv"), &to_csv(image.data()))?;
    write_bytes(&cfg.out.join("trajectory.pgm"), &to_pgm(image.data()))?;
    Ok(info)
}

/// Writes the synthetic series, one value per line, readable with the default CSV options.
pub fn cmd_synth(cfg: &RunConfig, output: Option<PathBuf>) -> CliResult<PathBuf> {
    cfg.synth.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
    let ts = synth::generate(&cfg.synth).stage("synth")?;
    let path = output.unwrap_or_else(|| cfg.out.join("synth.csv"));
    let _lock = DirLock::acquire(&cfg.out)?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    let mut text = String::with_capacity(ts.len() * 20);
    for v in ts.values() {
        text.push_str(&format!("{v:?}\n"));
    }
    write_text(&path, &text)?;
    Ok(path)
}

fn windows(values: &[f64], cfg: &RunConfig, params: PsrParams, stride: usize, what: &str) -> CliResult<Vec<WindowPair>> {
    build_windows(values, cfg.model.lookback, cfg.model.horizon, params, stride)
        .map_err(|e| CliError::stage(&format!("embedding ({what} segment)"), e))
}

/// Trains every configured seed into a run directory.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<SeedsFile> {
    let series = load_series(cfg)?;
    let seg = segments(cfg, &series)?;
    let stats = NormStats::fit(seg.train.values()).stage("series_io")?;
    let psr = resolve_psr(cfg, &seg.train, cfg.model.lookback)?;
    let model_cfg = cfg.model.model_config(psr.params)?;
    let train_pairs = windows(&stats.apply(seg.train.values()), cfg, psr.params, cfg.model.stride, "train")?;
    let val_pairs = windows(&stats.apply(seg.val.values()), cfg, psr.params, 1, "val")?;
    windows(&stats.apply(seg.test.values()), cfg, psr.params, 1, "test")?;
    log::info!(
        "{} training / {} validation windows, image {}x{}, {} parameters",
        train_pairs.len(),
        val_pairs.len(),
        model_cfg.m,
        model_cfg.n,
        psrcast_core::nnet::count_params(&model_cfg)
    );

    let out = &cfg.out;
    let _lock = DirLock::acquire(out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    write_json(&out.join(ANALYSIS_FILE), &psr)?;
    write_json(&out.join(NORM_FILE), &stats)?;
    for (name, ts) in [("train", &seg.train), ("val", &seg.val), ("test", &seg.test)] {
        let path = out.join("splits").join(format!("{name}.csv"));
        write_text(&path, "")?;
        write_series(&path, ts.values()).map_err(|e| CliError::io(&path, e))?;
    }

    let mut runs = Vec::new();
    let mut best: Option<(f64, u64)> = None;
    for &seed in &cfg.train.seeds {
        log::info!("training seed {seed}");
        let init = ModelWeights::init(&model_cfg, seed).stage("nnet")?;
        let clock = SystemClock::default();
        let (weights, history) = train_from(init, &train_pairs, &val_pairs, &cfg.train.train_config(seed), &clock)
            .map_err(|e| CliError::stage(&format!("training (seed {seed})"), e))?;
        let dir = out.join("seeds").join(seed.to_string());
        write_bytes(&dir.join(WEIGHTS_FILE), &weights_io::encode(&weights))?;
        write_text(&dir.join(HISTORY_FILE), &history_csv(&history))?;
        let rec = SeedRecord {
            seed,
            epochs: history.epochs(),
            best_epoch: history.best_epoch,
            best_val_loss: history.best_val_loss(),
            stopped_early: history.stopped_early,
            seconds: history.seconds.iter().sum(),
        };
        if best.is_none_or(|(v, _)| rec.best_val_loss < v) {
            best = Some((rec.best_val_loss, seed));
            write_bytes(&out.join(WEIGHTS_FILE), &weights_io::encode(&weights))?;
            write_text(&out.join(HISTORY_FILE), &history_csv(&history))?;
        }
        runs.push(rec);
    }
    let seeds = SeedsFile {
        dataset: series.name().to_string(),
        best_seed: best.expect("at least one seed").1,
        runs,
    };
    write_json(&out.join(SEEDS_FILE), &seeds)?;
    Ok(seeds)
}

/// Artifacts of a finished `train` run.
pub struct RunDir {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub analysis: AnalysisFile,
    pub stats: NormStats,
    pub seeds: SeedsFile,
    pub train: TimeSeries,
    pub test: TimeSeries,
}

impl RunDir {
    pub fn open(dir: &Path) -> CliResult<Self> {
        if !dir.join(SEEDS_FILE).is_file() {
            return Err(CliError::Config(format!(
                "run: {} is not a finished training run (no {SEEDS_FILE})",
                dir.display()
            )));
        }
        let text = std::fs::read_to_string(dir.join(CONFIG_FILE)).map_err(|e| CliError::io(dir.join(CONFIG_FILE), e))?;
        let config = RunConfig::from_json(&text)?;
        config.validate()?;
        let analysis: AnalysisFile = read_json(&dir.join(ANALYSIS_FILE))?;
        let stats: NormStats = read_json(&dir.join(NORM_FILE))?;
        let seeds: SeedsFile = read_json(&dir.join(SEEDS_FILE))?;
        let step = config.data.step_minutes;
        let read = |name: &str| {
            read_series(&dir.join("splits").join(format!("{name}.csv")), name, step)
                .map_err(|e| CliError::Data(format!("run split {name}: {e}")))
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            analysis,
            stats,
            seeds,
            train: read("train")?,
            test: read("test")?,
            config,
        })
    }

    pub fn weights(&self, seed: Option<u64>) -> CliResult<ModelWeights> {
        let path = match seed {
            Some(s) => self.dir.join("seeds").join(s.to_string()).join(WEIGHTS_FILE),
            None => self.dir.join(WEIGHTS_FILE),
        };
        weights_io::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn test_pairs(&self) -> CliResult<Vec<WindowPair>> {
        windows(
            &self.stats.apply(self.test.values()),
            &self.config,
            self.analysis.params,
            1,
            "test",
        )
    }
}

fn write_results(dir: &Path, reports: &[EvalReport]) -> CliResult<()> {
    let mut jsonl = String::new();
    for r in reports {
        jsonl.push_str(&serde_json::to_string(r).expect("report serializes"));
        jsonl.push('\n');
    }
    write_text(&dir.join(RESULTS_JSONL), &jsonl)?;
    write_text(&dir.join(RESULTS_CSV), &render_results_table(reports))
}

/// Scores every seed of a run directory on its test segment.
pub fn cmd_evaluate_run(dir: &Path) -> CliResult<Vec<EvalReport>> {
    let run = RunDir::open(dir)?;
    let cfg = &run.config;
    let (lookback, horizon) = (cfg.model.lookback, cfg.model.horizon);
    let pairs = run.test_pairs()?;
    let test_windows = EvalWindows::sliding(run.test.values(), lookback, horizon).stage("evaluation")?;
    let baselines = baseline_metrics(
        run.train.values(),
        &test_windows,
        lookback,
        horizon,
        cfg.eval.season,
        cfg.eval.ridge_lambda,
    )
    .stage("evaluation")?;
    let mut reports = Vec::new();
    for rec in &run.seeds.runs {
        let model = Model::new(run.weights(Some(rec.seed))?).stage("nnet")?;
        let m = evaluate_model(&model, &pairs, &run.stats).stage("evaluation")?;
        reports.push(EvalReport {
            dataset: run.seeds.dataset.clone(),
            model: model.config().variant.as_str().to_string(),
            lookback,
            horizon,
            tau: run.analysis.params.tau,
            m: run.analysis.params.m,
            seed: rec.seed,
            mae: m.mae,
            mape: m.mape,
            per_step_mae: m.per_step_mae,
            baselines: baselines.clone(),
            best_of_seeds: false,
            epochs: rec.epochs,
            fingerprint: cfg.fingerprint(),
            wall_clock_seconds: rec.seconds,
        });
    }
    if let Some(best) = (0..reports.len()).min_by(|&a, &b| reports[a].mae.total_cmp(&reports[b].mae)) {
        reports[best].best_of_seeds = true;
    }
    let _lock = DirLock::acquire(dir)?;
    write_results(dir, &reports)?;
    Ok(reports)
}

/// Trains and scores a grid; auto PSR is rerun per look-back.
fn run_grid(cfg: &RunConfig, grid: &ExperimentGrid) -> CliResult<(Vec<EvalReport>, BTreeMap<usize, AnalysisFile>)> {
    let series = load_series(cfg)?;
    let seg = segments(cfg, &series)?;
    let template = cfg.model.model_config(PsrParams { tau: 1, m: 1 })?;
    let setup = ExperimentSetup {
        series: &series,
        split: cfg.data.split,
        model: template,
        train: cfg.train.train_config(grid.seeds[0]),
        stride: cfg.model.stride,
        season: cfg.eval.season,
        ridge_lambda: cfg.eval.ridge_lambda,
        fingerprint: cfg.fingerprint(),
    };
    let mut analyses = BTreeMap::new();
    let mut failure = None;
    let result = run_experiment(
        &setup,
        grid,
        |lookback| match resolve_psr(cfg, &seg.train, lookback) {
            Ok(a) => {
                let p = a.params;
                analyses.insert(lookback, a);
                Ok(p)
            }
            Err(e) => {
                let msg = e.to_string();
                failure = Some(e);
                Err(psrcast_core::Error::InvalidParameter(msg))
            }
        },
        &SystemClock::default(),
    );
    match (result, failure) {
        (_, Some(e)) => Err(e),
        (Ok(r), None) => Ok((r, analyses)),
        (Err(e), None) => Err(CliError::stage("evaluation", e)),
    }
}

/// Runs the configured experiment grid into the output directory.
pub fn cmd_evaluate_grid(cfg: &RunConfig) -> CliResult<Vec<EvalReport>> {
    if let Some(p) = &cfg.data.path {
        if !p.is_file() {
            return Err(CliError::Config(format!("data.path: file not found: {}", p.display())));
        }
    }
    let _lock = DirLock::acquire(&cfg.out)?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    let (reports, analyses) = run_grid(cfg, &cfg.eval.grid)?;
    write_json(&cfg.out.join(ANALYSIS_FILE), &analyses)?;
    write_results(&cfg.out, &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub lookback: usize,
    pub horizon: usize,
    pub metric: String,
    pub full: f64,
    pub no_local: f64,
    /// `(no_local - full) / no_local`, percent.
    pub improvement_pct: f64,
}

pub fn ablation_rows(reports: &[EvalReport]) -> Vec<AblationRow> {
    let mut keys: Vec<(usize, usize)> = reports.iter().map(|r| (r.lookback, r.horizon)).collect();
    keys.dedup();
    let mut rows = Vec::new();
    for (lookback, horizon) in keys {
        let of = |variant: Variant| -> Vec<&EvalReport> {
            reports
                .iter()
                .filter(|r| r.lookback == lookback && r.horizon == horizon && r.model == variant.as_str())
                .collect()
        };
        let (full, local) = (of(Variant::Full), of(Variant::NoLocal));
        if full.is_empty() || local.is_empty() {
            continue;
        }
        fn best<'a>(rs: &[&'a EvalReport]) -> &'a EvalReport {
            rs.iter().find(|r| r.best_of_seeds).copied().unwrap_or(rs[0])
        }
        let mean = |rs: &[&EvalReport]| rs.iter().map(|r| r.mae).sum::<f64>() / rs.len() as f64;
        let pairs = [
            ("mae_best", best(&full).mae, best(&local).mae),
            ("mape_best", best(&full).mape, best(&local).mape),
            ("mae_mean", mean(&full), mean(&local)),
        ];
        for (metric, f, n) in pairs {
            rows.push(AblationRow {
                lookback,
                horizon,
                metric: metric.into(),
                full: f,
                no_local: n,
                improvement_pct: 100.0 * (n - f) / n,
            });
        }
    }
    rows
}

/// Full vs. no-local on the configured look-back and horizon.
pub fn cmd_ablate(cfg: &RunConfig) -> CliResult<Vec<AblationRow>> {
    if let Some(p) = &cfg.data.path {
        if !p.is_file() {
            return Err(CliError::Config(format!("data.path: file not found: {}", p.display())));
        }
    }
    let grid = ExperimentGrid {
        lookbacks: vec![cfg.model.lookback],
        horizons: vec![cfg.model.horizon],
        seeds: cfg.train.seeds.clone(),
        variants: vec![Variant::Full, Variant::NoLocal],
    };
    let _lock = DirLock::acquire(&cfg.out)?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    let (reports, analyses) = run_grid(cfg, &grid)?;
    write_json(&cfg.out.join(ANALYSIS_FILE), &analyses)?;
    write_results(&cfg.out, &reports)?;
    let rows = ablation_rows(&reports);
    let mut text = String::from("lookback,horizon,metric,full,no_local,improvement_pct\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.2}\n",
            r.lookback, r.horizon, r.metric, r.full, r.no_local, r.improvement_pct
        ));
    }
    write_text(&cfg.out.join("ablation.csv"), &text)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainMeta {
    pub window: usize,
    pub window_start: usize,
    pub params: PsrParams,
    pub target_step: Option<usize>,
    pub ram_formula: Option<String>,
    pub ram_min_before_scaling: Option<f64>,
    pub ram_max_before_scaling: Option<f64>,
    pub attention_files: Vec<String>,
    /// Original units.
    pub prediction: Vec<f64>,
    pub truth: Vec<f64>,
}

/// Attention maps and RAM of one test window of a run.
pub fn cmd_explain(run_dir: &Path, window: usize, target_step: Option<usize>, dest: Option<PathBuf>) -> CliResult<ExplainMeta> {
    let run = RunDir::open(run_dir)?;
    let pairs = run.test_pairs()?;
    let pair = pairs.get(window).ok_or_else(|| {
        CliError::Config(format!("window: index {window} out of range ({} test windows)", pairs.len()))
    })?;
    let model = Model::new(run.weights(None)?).stage("nnet")?;
    if let Some(k) = target_step {
        if k >= model.config().d_pred {
            return Err(CliError::Config(format!(
                "step: {k} outside the horizon {}",
                model.config().d_pred
            )));
        }
    }
    let dest = dest.unwrap_or_else(|| run.dir.join("explain").join(format!("window_{window}")));
    let _lock = DirLock::acquire(&dest)?;
    write_json(&dest.join(CONFIG_FILE), &run.config)?;

    let lookback = run.config.model.lookback;
    let raw = &run.test.values()[pair.window_start..pair.window_start + lookback];
    let image = trajectory_matrix(raw, run.analysis.params).stage("embedding")?;
    write_text(&dest.join("image.csv"), &to_csv(image.data()))?;
    write_bytes(&dest.join("image.pgm"), &to_pgm(image.data()))?;

    let mut attention_files = Vec::new();
    for rec in attention_maps(&model, &pair.image).stage("interpret")? {
        let stem = format!("attention_l{}_h{}", rec.layer, rec.head);
        write_text(&dest.join(format!("{stem}.csv")), &to_csv(&rec.matrix))?;
        write_bytes(&dest.join(format!("{stem}.pgm")), &to_pgm(&rec.matrix))?;
        attention_files.push(stem);
    }

    let ram_map = if model.config().has_local() {
        let r = ram(&model, &pair.image, target_step).stage("interpret")?;
        write_text(&dest.join("ram.csv"), &to_csv(&r.map))?;
        write_bytes(&dest.join("ram.pgm"), &to_pgm(&r.map))?;
        Some(r)
    } else {
        log::warn!("model has no local branch; skipping RAM");
        None
    };

    let pred = model.forward(&pair.image).stage("nnet")?;
    let meta = ExplainMeta {
        window,
        window_start: pair.window_start,
        params: run.analysis.params,
        target_step,
        ram_formula: ram_map.as_ref().map(|_| RAM_FORMULA.to_string()),
        ram_min_before_scaling: ram_map.as_ref().map(|r| r.min_before_scaling),
        ram_max_before_scaling: ram_map.as_ref().map(|r| r.max_before_scaling),
        attention_files,
        prediction: run.stats.invert(&pred),
        truth: run.stats.invert(&pair.target),
    };
    write_json(&dest.join("meta.json"), &meta)?;
    Ok(meta)
}
