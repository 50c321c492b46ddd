//! End-to-end commands: synthesize or ingest data, train both models, run the
//! fault-injection experiment and render its report.
//!
//! Artifacts in the output directory:
//!
//! | file | written by |
//! |------|------------|
//! | `scada.csv` | synth |
//! | `normalization.json`, `single_target.nbm`, `multi_target.nbm`, `metrics.json` | train |
//! | `report.json`, `outcomes.csv`, `slope_summary.csv`, `ttests.csv`, `grid_manifest.csv`, `traces/*.csv` | evaluate |
//! | `run_config.toml` | train, evaluate |

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarm::{alarm_criterion_1, alarm_criterion_2, write_alarm_trace, ResidualSeries};
use crate::config::{RunConfig, SourceKind};
use crate::error::{Error, Result};
use crate::eval::{
    write_outcomes_csv, write_slope_summary_csv, write_ttests_csv, ComparisonReport, Experiment, ModelPair,
};
use crate::fault::{build_grid, write_grid_manifest, ExperimentCase};
use crate::mlp::{
    evaluate_error, load_model, preset_architecture, save_model, train, MlpModel, ModelKind, RegressionDataset, TrainReport,
};
use crate::scada::{
    apply_normalization, fit_normalization, load_scada_csv, split_series, synthesize_scada, write_scada_csv,
    Channel, NormalizationParams, ScadaSeries, StepRange,
};

/// File locations inside an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn scada_csv(&self) -> PathBuf {
        self.dir.join("scada.csv")
    }
    pub fn normalization(&self) -> PathBuf {
        self.dir.join("normalization.json")
    }
    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.dir.join(format!("{}.nbm", kind.name()))
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.json")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn outcomes(&self) -> PathBuf {
        self.dir.join("outcomes.csv")
    }
    pub fn slope_summary(&self) -> PathBuf {
        self.dir.join("slope_summary.csv")
    }
    pub fn ttests(&self) -> PathBuf {
        self.dir.join("ttests.csv")
    }
    pub fn grid_manifest(&self) -> PathBuf {
        self.dir.join("grid_manifest.csv")
    }
    pub fn traces(&self) -> PathBuf {
        self.dir.join("traces")
    }
    pub fn run_config(&self) -> PathBuf {
        self.dir.join("run_config.toml")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(ctx(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    write_file(path, |w| writeln!(w, "{text}"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// The raw (physical-unit) series the configuration points at.
pub fn load_series(cfg: &RunConfig) -> Result<ScadaSeries> {
    match cfg.data.source {
        SourceKind::Synthetic => synthesize_scada(&cfg.synthetic_config()),
        SourceKind::Csv => load_scada_csv(cfg.data.csv_path.as_ref().expect("validated")),
    }
}

/// Inputs and the targets of `kind` for every record of a normalized series.
pub fn regression_dataset(series: &ScadaSeries, kind: ModelKind) -> Result<RegressionDataset> {
    let targets = series
        .records()
        .iter()
        .map(|r| r.targets()[..kind.output_dim()].to_vec())
        .collect();
    RegressionDataset::new(series.features(), targets)
}

/// Writes the configured series as CSV.
pub fn cmd_synth(cfg: &RunConfig, out: &Artifacts) -> Result<PathBuf> {
    let series = load_series(cfg)?;
    create_dir(&out.dir)?;
    let path = out.scada_csv();
    write_file(&path, |w| write_scada_csv(&series, w))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub channel: Channel,
    pub rmse: f64,
    pub mae: f64,
    /// The same errors in the channel's physical unit.
    pub rmse_physical: f64,
    pub mae_physical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model_kind: ModelKind,
    pub training_seed: u64,
    pub epochs_run: usize,
    pub final_training_loss: f64,
    pub stopped_early: bool,
    pub targets: Vec<TargetMetrics>,
}

/// Held-out error of both trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    /// Steps the errors were measured on: the calibration period, which is
    /// fault-free and not used for fitting.
    pub held_out: StepRange,
    pub n_train: usize,
    pub models: Vec<ModelMetrics>,
}

impl TrainingMetrics {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model_kind == kind)
    }
}

/// Loads the configured series and normalizes it with parameters fitted on
/// the training period.
pub fn normalized_series(cfg: &RunConfig) -> Result<(NormalizationParams, ScadaSeries)> {
    let raw = load_series(cfg)?;
    let (raw_train, _, _) = split_series(&raw, &cfg.split)?;
    let params = fit_normalization(&raw_train, &Channel::ALL)?;
    let series = apply_normalization(&raw, &params)?;
    Ok((params, series))
}

/// Trains the `kind` preset on the training period of a normalized series.
pub fn train_model(cfg: &RunConfig, series: &ScadaSeries, kind: ModelKind) -> Result<(MlpModel, TrainReport)> {
    let (train_part, _, _) = split_series(series, &cfg.split)?;
    let data = regression_dataset(&train_part, kind)?;
    train(&data, &preset_architecture(kind), &cfg.train_config(kind))
}

/// Fits normalization on the training period, trains both presets and
/// writes the models, the normalization parameters and held-out metrics.
pub fn cmd_train(cfg: &RunConfig, out: &Artifacts) -> Result<TrainingMetrics> {
    let (params, series) = normalized_series(cfg)?;
    let (train_part, held_out, _) = split_series(&series, &cfg.split)?;

    create_dir(&out.dir)?;
    let mut models = Vec::new();
    for kind in ModelKind::BOTH {
        let (model, report) = train_model(cfg, &series, kind)?;
        let errors = evaluate_error(&model, &regression_dataset(&held_out, kind)?)?;
        let targets = Channel::TARGETS[..kind.output_dim()]
            .iter()
            .enumerate()
            .map(|(j, &channel)| {
                let r = params.range(channel).expect("all channels fitted");
                let span = r.max - r.min;
                TargetMetrics {
                    channel,
                    rmse: errors.rmse[j],
                    mae: errors.mae[j],
                    rmse_physical: errors.rmse[j] * span,
                    mae_physical: errors.mae[j] * span,
                }
            })
            .collect();
        save_model(&model, out.model(kind))?;
        models.push(ModelMetrics {
            model_kind: kind,
            training_seed: model.training_seed(),
            epochs_run: report.epoch_losses.len(),
            final_training_loss: report.final_loss,
            stopped_early: report.stopped_early,
            targets,
        });
    }
    let metrics = TrainingMetrics {
        held_out: cfg.split.calibration,
        n_train: train_part.len(),
        models,
    };
    write_json(&out.normalization(), &params)?;
    write_json(&out.metrics(), &metrics)?;
    write_run_config(cfg, out)?;
    Ok(metrics)
}

fn write_run_config(cfg: &RunConfig, out: &Artifacts) -> Result<()> {
    let text = cfg.to_toml_string()?;
    write_file(&out.run_config(), |w| w.write_all(text.as_bytes()))
}

/// Normalization parameters and both models from a previous `cmd_train`.
pub struct TrainedArtifacts {
    pub normalization: NormalizationParams,
    pub single_target: MlpModel,
    pub multi_target: MlpModel,
}

impl TrainedArtifacts {
    pub fn load(out: &Artifacts) -> Result<Self> {
        let stored: NormalizationParams = read_json(&out.normalization())?;
        Ok(Self {
            normalization: NormalizationParams::new(stored.ranges().to_vec())?,
            single_target: load_model(out.model(ModelKind::SingleTarget))?,
            multi_target: load_model(out.model(ModelKind::MultiTarget))?,
        })
    }

    pub fn pair(&self) -> ModelPair<'_> {
        ModelPair {
            single_target: &self.single_target,
            multi_target: &self.multi_target,
        }
    }
}

fn trace_name(kind: ModelKind, case: Option<&ExperimentCase>) -> String {
    match case {
        Some(c) => format!("{}_slope{:02}_onset{:02}.csv", kind.name(), c.slope_index, c.onset_ordinal),
        None => format!("{}_fault_free.csv", kind.name()),
    }
}

fn write_trace(path: &Path, res: &ResidualSeries, exp: &Experiment, kind: ModelKind) -> Result<()> {
    let thr = exp.threshold(kind);
    let c1 = alarm_criterion_1(res, thr)?;
    let c2 = alarm_criterion_2(res, thr)?;
    write_file(path, |w| write_alarm_trace(res, thr, &c1, &c2, w))
}

/// Runs the experiment grid with the trained models and writes the report,
/// flat CSVs, the grid manifest and alarm traces.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Artifacts) -> Result<ComparisonReport> {
    let trained = TrainedArtifacts::load(out)?;
    let series = apply_normalization(&load_series(cfg)?, &trained.normalization)?;
    let grid = build_grid(
        &cfg.fault.onset_window,
        &cfg.fault.slopes,
        cfg.fault.n_onsets,
        cfg.grid_seed(),
    )?;
    let exp = Experiment::new(&series, trained.pair(), &cfg.experiment_settings())?;
    let report = exp.run(&grid)?;

    write_json(&out.report(), &report)?;
    write_file(&out.outcomes(), |w| write_outcomes_csv(&report, w))?;
    write_file(&out.slope_summary(), |w| write_slope_summary_csv(&report, w))?;
    write_file(&out.ttests(), |w| write_ttests_csv(&report, w))?;
    write_file(&out.grid_manifest(), |w| write_grid_manifest(&grid, w))?;

    let traces = out.traces();
    create_dir(&traces)?;
    for kind in ModelKind::BOTH {
        let res = exp.residuals(kind, None)?;
        write_trace(&traces.join(trace_name(kind, None)), &res, &exp, kind)?;
        for case in grid
            .cases
            .iter()
            .filter(|c| c.onset_ordinal < cfg.evaluate.traces_per_slope)
        {
            let res = exp.residuals(kind, Some(case))?;
            write_trace(&traces.join(trace_name(kind, Some(case))), &res, &exp, kind)?;
        }
    }
    write_run_config(cfg, out)?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

/// Plain-text summary tables of a report.
pub fn render_report(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let c = &report.config;
    let _ = writeln!(
        s,
        "cases: {}   grid seed: {}   unit scale: {}   observation end: step {}",
        c.n_cases, c.grid_seed, c.unit_scale, c.end_step
    );
    for t in &c.thresholds {
        let _ = writeln!(
            s,
            "threshold {:<13} q999 = {:.6} from {} residuals{}",
            t.model_kind.name(),
            t.threshold.q999,
            t.threshold.n_calibration,
            if t.thin_calibration { " (thin)" } else { "" }
        );
    }
    for g in &report.groups {
        let _ = writeln!(
            s,
            "\n{} / {}: detected {}/{}, cases with false positives {}, mean delay {} h, mean stability {}, spearman(slope, delay) {}",
            g.model_kind.name(),
            g.criterion.name(),
            g.n_detected,
            g.n_outcomes,
            g.cases_with_false_positives,
            fmt_opt(g.mean_delay_hours, 2),
            fmt_opt(g.mean_stability, 4),
            fmt_opt(g.slope_delay_spearman, 3)
        );
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>10} {:>10} {:>10} {:>10}",
            "slope", "detected", "delay_h", "sd", "stability", "sd"
        );
        for sl in &g.slopes {
            let _ = writeln!(
                s,
                "{:>5} {:>9} {:>10} {:>10} {:>10} {:>10}",
                sl.slope_index,
                format!("{}/{}", sl.n_detected, sl.n_cases),
                fmt_opt(sl.mean_delay_hours, 2),
                fmt_opt(sl.std_delay_hours, 2),
                fmt_opt(sl.mean_stability, 4),
                fmt_opt(sl.std_stability, 4)
            );
        }
    }
    let _ = writeln!(s, "\npaired t-tests (a - b)");
    for cmp in &report.comparisons {
        let head = format!("{} {}", cmp.pairing.describe(), cmp.metric.name());
        match &cmp.test {
            Some(t) => {
                let _ = writeln!(
                    s,
                    "{head:<52} n={:<4} excluded={:<4} diff={:+.4} t={:.3} p(a>b)={} p(two-sided)={}",
                    t.n_pairs,
                    cmp.n_excluded,
                    t.mean_difference,
                    t.t_statistic,
                    fmt_p(t.p_one_sided),
                    fmt_p(t.p_two_sided)
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    "{head:<52} n={:<4} excluded={:<4} undefined: {}",
                    cmp.n_pairs,
                    cmp.n_excluded,
                    cmp.undefined_reason.as_deref().unwrap_or("unknown")
                );
            }
        }
    }
    s
}

/// Renders the summary of an existing `report.json`.
pub fn cmd_report(report_path: &Path) -> Result<String> {
    let report: ComparisonReport = read_json(report_path)?;
    Ok(render_report(&report))
}

/// Runs `f` on a rayon pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
