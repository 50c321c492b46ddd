//! Run configuration, read from a TOML file.
//!
//! ```toml
//! master_seed = 7                 # required
//! output_dir = "runs/seed7"       # optional; relative to the working directory
//! criteria = ["criterion_1", "criterion_2"]
//!
//! [data]
//! source = "synthetic"            # or "csv"
//! csv_path = "scada.csv"          # csv only; relative to this file
//! [data.synthetic]                # any SyntheticConfig field except `seed`
//! n_months = 14
//!
//! [split]                         # half-open step ranges
//! train = { start = 0, end = 43200 }
//! calibration = { start = 43200, end = 47520 }
//! monitoring = { start = 47520, end = 60480 }
//!
//! [train.single_target]           # any TrainConfig field except `seed`
//! epochs = 200
//! [train.multi_target]
//! epochs = 200
//!
//! [fault]
//! unit_scale = 0.05
//! n_onsets = 50
//! slopes = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
//! onset_window = { start_step = 50832, end_step = 52847 }
//!
//! [evaluate]
//! end_step = 60479                # optional; defaults to the last monitoring step
//! traces_per_slope = 1
//! ```
//!
//! Every omitted key takes its default. Seeds are not configurable per
//! section: they are all derived from `master_seed` (see [`RunConfig::synthetic_seed`]
//! and siblings), so one number pins the whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarm::Criterion;
use crate::error::{Error, Result};
use crate::eval::ExperimentSettings;
use crate::fault::{OnsetWindow, DEFAULT_UNIT_SCALE, MAX_SLOPE, MIN_SLOPE};
use crate::mlp::{ModelKind, TrainConfig};
use crate::scada::{SplitRanges, StepRange, SyntheticConfig};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: SourceKind,
    pub csv_path: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            csv_path: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub single_target: TrainConfig,
    pub multi_target: TrainConfig,
}

impl TrainSettings {
    pub fn for_kind(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::SingleTarget => &self.single_target,
            ModelKind::MultiTarget => &self.multi_target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSettings {
    pub unit_scale: f64,
    pub onset_window: OnsetWindow,
    pub n_onsets: usize,
    pub slopes: Vec<u32>,
}

impl Default for FaultSettings {
    fn default() -> Self {
        Self {
            unit_scale: DEFAULT_UNIT_SCALE,
            onset_window: OnsetWindow::default(),
            n_onsets: 50,
            slopes: (MIN_SLOPE..=MAX_SLOPE).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub end_step: Option<usize>,
    /// Alarm traces are written for the first this-many onsets of every slope.
    pub traces_per_slope: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            end_step: None,
            traces_per_slope: 1,
        }
    }
}

fn default_criteria() -> Vec<Criterion> {
    Criterion::BOTH.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitRanges,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub fault: FaultSettings,
    #[serde(default)]
    pub evaluate: EvaluateSettings,
}

impl RunConfig {
    /// All defaults, with the given master seed.
    pub fn with_seed(master_seed: u64) -> Self {
        Self {
            master_seed,
            output_dir: None,
            criteria: default_criteria(),
            data: DataConfig::default(),
            split: SplitRanges::default(),
            train: TrainSettings::default(),
            fault: FaultSettings::default(),
            evaluate: EvaluateSettings::default(),
        }
    }

    /// Parses and validates a TOML document. `origin` names the source in
    /// errors; relative CSV paths are resolved against its directory.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| syntax_error(origin, e))?;
        for (section, path) in [
            ("data.synthetic.seed", ["data", "synthetic", "seed"]),
            ("train.single_target.seed", ["train", "single_target", "seed"]),
            ("train.multi_target.seed", ["train", "multi_target", "seed"]),
        ] {
            if has_key(&value, &path) {
                return Err(Error::config(
                    section,
                    "seeds are derived from master_seed and cannot be set per section",
                ));
            }
        }
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| syntax_error(origin, e))?;
        if let Some(p) = cfg.data.csv_path.take() {
            let base = origin.parent().unwrap_or(Path::new(""));
            cfg.data.csv_path = Some(if p.is_relative() { base.join(p) } else { p });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text, path)
    }

    /// Serializes without the per-section seeds, which are derived on load.
    pub fn to_toml_string(&self) -> Result<String> {
        let ser = |e: toml::ser::Error| Error::Serialization(e.to_string());
        let mut table = toml::Table::try_from(self).map_err(ser)?;
        for (section, sub) in [("data", "synthetic"), ("train", "single_target"), ("train", "multi_target")] {
            if let Some(t) = table
                .get_mut(section)
                .and_then(|v| v.as_table_mut())
                .and_then(|t| t.get_mut(sub))
                .and_then(|v| v.as_table_mut())
            {
                t.remove("seed");
            }
        }
        toml::to_string(&table).map_err(ser)
    }

    pub fn validate(&self) -> Result<()> {
        within("data.synthetic", self.data.synthetic.validate())?;
        if self.data.source == SourceKind::Csv && self.data.csv_path.is_none() {
            return Err(Error::config("data.csv_path", "required when data.source = \"csv\""));
        }
        let span = match self.data.source {
            SourceKind::Synthetic => Some(StepRange::new(0, self.data.synthetic.n_steps())),
            SourceKind::Csv => None,
        };
        self.split
            .validate(span)
            .map_err(|e| Error::config("split", e.to_string()))?;
        for kind in ModelKind::BOTH {
            within(&format!("train.{}", kind.name()), self.train.for_kind(kind).validate())?;
        }

        let f = &self.fault;
        if !(f.unit_scale >= 0.0 && f.unit_scale.is_finite()) {
            return Err(Error::config("fault.unit_scale", "must be finite and non-negative"));
        }
        if f.n_onsets < 1 {
            return Err(Error::config("fault.n_onsets", "must be at least 1"));
        }
        if f.slopes.is_empty() {
            return Err(Error::config("fault.slopes", "must list at least one slope index"));
        }
        for (i, s) in f.slopes.iter().enumerate() {
            if !(MIN_SLOPE..=MAX_SLOPE).contains(s) {
                return Err(Error::config(
                    format!("fault.slopes[{i}]"),
                    format!("slope index {s} outside {MIN_SLOPE}..={MAX_SLOPE}"),
                ));
            }
            if f.slopes[..i].contains(s) {
                return Err(Error::config(format!("fault.slopes[{i}]"), format!("duplicate slope index {s}")));
            }
        }
        let w = f.onset_window;
        if w.end_step < w.start_step {
            return Err(Error::config("fault.onset_window", "end_step precedes start_step"));
        }
        let mon = self.split.monitoring;
        let end = self.evaluate.end_step.unwrap_or(mon.end.saturating_sub(1));
        if !mon.contains(end) {
            return Err(Error::config(
                "evaluate.end_step",
                format!("{end} outside the monitoring range [{}, {})", mon.start, mon.end),
            ));
        }
        if !mon.contains(w.start_step) || w.end_step > end {
            return Err(Error::config(
                "fault.onset_window",
                format!(
                    "[{}, {}] must lie inside the monitoring range [{}, {end}]",
                    w.start_step, w.end_step, mon.start
                ),
            ));
        }

        if self.criteria.is_empty() {
            return Err(Error::config("criteria", "select at least one alarm criterion"));
        }
        for (i, c) in self.criteria.iter().enumerate() {
            if self.criteria[..i].contains(c) {
                return Err(Error::config(format!("criteria[{i}]"), format!("duplicate {}", c.name())));
            }
        }
        Ok(())
    }

    /// Seed of the synthetic generator.
    pub fn synthetic_seed(&self) -> u64 {
        seeds::derive(self.master_seed, "run/synth", 0)
    }

    /// Seed for training the given model kind.
    pub fn train_seed(&self, kind: ModelKind) -> u64 {
        let ordinal = match kind {
            ModelKind::SingleTarget => 0,
            ModelKind::MultiTarget => 1,
        };
        seeds::derive(self.master_seed, "run/train", ordinal)
    }

    /// Master seed of the experiment grid.
    pub fn grid_seed(&self) -> u64 {
        seeds::derive(self.master_seed, "run/grid", 0)
    }

    /// Generator settings with the derived seed filled in.
    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.synthetic_seed(),
            ..self.data.synthetic.clone()
        }
    }

    /// Training settings for `kind` with the derived seed filled in.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        TrainConfig {
            seed: self.train_seed(kind),
            ..self.train.for_kind(kind).clone()
        }
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            split: self.split,
            unit_scale: self.fault.unit_scale,
            criteria: self.criteria.clone(),
            end_step: self.evaluate.end_step,
        }
    }
}

fn has_key(table: &toml::Table, path: &[&str]) -> bool {
    match path {
        [] => false,
        [last] => table.contains_key(*last),
        [head, rest @ ..] => table
            .get(*head)
            .and_then(|v| v.as_table())
            .is_some_and(|t| has_key(t, rest)),
    }
}

fn syntax_error(origin: &Path, e: toml::de::Error) -> Error {
    Error::config(origin.display().to_string(), e.to_string().trim_end().to_string())
}

/// Prefixes the path of a nested configuration error with its section.
fn within(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { path, message } => Error::config(format!("{section}.{path}"), message),
        other => Error::config(section, other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, Path::new("/cfg/run.toml"))
    }

    fn config_path(e: Error) -> String {
        match e {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse("master_seed = 3").unwrap();
        assert_eq!(c, RunConfig::with_seed(3));
        assert_eq!(c.fault.slopes.len(), 10);
        assert_eq!(c.fault.onset_window, OnsetWindow { start_step: 50832, end_step: 52847 });
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::with_seed(11);
        c.train.multi_target.epochs = 7;
        c.fault.slopes = vec![2, 9];
        c.evaluate.end_step = Some(60000);
        let text = c.to_toml_string().unwrap();
        assert_eq!(parse(&text).unwrap(), c);
    }

    #[test]
    fn master_seed_is_required() {
        assert!(parse("").is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let c = RunConfig::with_seed(5);
        let seeds = [
            c.synthetic_seed(),
            c.train_seed(ModelKind::SingleTarget),
            c.train_seed(ModelKind::MultiTarget),
            c.grid_seed(),
        ];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(c.synthetic_config().seed, c.synthetic_seed());
        assert_eq!(c.train_config(ModelKind::MultiTarget).seed, c.train_seed(ModelKind::MultiTarget));
    }

    #[test]
    fn error_paths_name_the_key() {
        let cases = [
            ("master_seed = 1\n[data.synthetic]\nn_months = 0", "data.synthetic.n_months"),
            ("master_seed = 1\n[data.synthetic]\nseed = 4", "data.synthetic.seed"),
            ("master_seed = 1\n[train.multi_target]\nseed = 4", "train.multi_target.seed"),
            ("master_seed = 1\n[train.single_target]\nbatch_size = 0", "train.single_target.batch_size"),
            ("master_seed = 1\n[fault]\nslopes = [1, 11]", "fault.slopes[1]"),
            ("master_seed = 1\n[fault]\nslopes = [3, 3]", "fault.slopes[1]"),
            ("master_seed = 1\n[fault]\nunit_scale = -1.0", "fault.unit_scale"),
            ("master_seed = 1\n[fault]\nn_onsets = 0", "fault.n_onsets"),
            ("master_seed = 1\n[fault]\nonset_window = { start_step = 100, end_step = 200 }", "fault.onset_window"),
            ("master_seed = 1\n[evaluate]\nend_step = 70000", "evaluate.end_step"),
            ("master_seed = 1\n[data]\nsource = \"csv\"", "data.csv_path"),
            ("master_seed = 1\ncriteria = []", "criteria"),
            ("master_seed = 1\ncriteria = [\"criterion_2\", \"criterion_2\"]", "criteria[1]"),
            ("master_seed = 1\n[data.synthetic]\nn_months = 10", "split"),
        ];
        for (text, path) in cases {
            assert_eq!(config_path(parse(text).unwrap_err()), path, "{text}");
        }
    }

    #[test]
    fn syntax_and_unknown_keys_are_reported_with_location() {
        let e = parse("master_seed = 1\n[fault]\nunit_scael = 0.1").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("/cfg/run.toml"), "{msg}");
        assert!(msg.contains("unit_scael"), "{msg}");
        let msg = parse("master_seed = ").unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn csv_path_is_relative_to_the_config_file() {
        let c = parse("master_seed = 1\n[data]\nsource = \"csv\"\ncsv_path = \"data/scada.csv\"").unwrap();
        assert_eq!(c.data.csv_path.unwrap(), PathBuf::from("/cfg/data/scada.csv"));
        let c = parse("master_seed = 1\n[data]\nsource = \"csv\"\ncsv_path = \"/abs.csv\"").unwrap();
        assert_eq!(c.data.csv_path.unwrap(), PathBuf::from("/abs.csv"));
    }
}
