//! Detection metrics and the fault-injection experiment over a grid of cases.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alarm::{calibrate_threshold, first_alarm, residuals, AlarmSeries, Criterion, ResidualSeries, Threshold};
use crate::error::{Error, Result};
use crate::fault::{inject, ExperimentCase, ExperimentGrid, DEFAULT_UNIT_SCALE};
use crate::mlp::{MlpModel, ModelKind};
use crate::scada::{split_series, Channel, ScadaSeries, SplitRanges, StepRange, STEP_MINUTES};
use crate::stats::{mean, paired_t_test, sample_std, spearman, Alternative, TTestResult};

/// Hours covered by `steps` ten-minute steps.
pub fn steps_to_hours(steps: usize) -> f64 {
    steps as f64 * STEP_MINUTES as f64 / 60.0
}

/// Hours from onset to the first raised flag at or after the onset, if any.
pub fn detection_delay(alarms: &AlarmSeries, onset_step: usize) -> Option<f64> {
    first_alarm(alarms, onset_step).map(|t| steps_to_hours(t - onset_step))
}

/// Fraction of raised flags in `[first_alarm_step, end_step]`, both inclusive.
pub fn detection_stability(alarms: &AlarmSeries, first_alarm_step: usize, end_step: usize) -> Result<f64> {
    if first_alarm_step > end_step || end_step >= alarms.end_step() {
        return Err(Error::InvalidArgument(format!(
            "stability window [{first_alarm_step}, {end_step}] outside alarms [{}, {})",
            alarms.start_step,
            alarms.end_step()
        )));
    }
    if alarms.flag_at(first_alarm_step) != Some(true) {
        return Err(Error::InvalidArgument(format!("no alarm raised at step {first_alarm_step}")));
    }
    let lo = first_alarm_step - alarms.start_step;
    let hi = end_step - alarms.start_step;
    let raised = alarms.flags[lo..=hi].iter().filter(|&&f| f).count();
    Ok(raised as f64 / (hi - lo + 1) as f64)
}

/// Raised flags from the end of warmup up to, not including, the onset.
pub fn false_positives_before_onset(alarms: &AlarmSeries, onset_step: usize) -> usize {
    let lo = alarms.first_defined_step().max(alarms.start_step);
    let hi = onset_step.min(alarms.end_step());
    if hi <= lo {
        return 0;
    }
    alarms.flags[lo - alarms.start_step..hi - alarms.start_step]
        .iter()
        .filter(|&&f| f)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub case: ExperimentCase,
    pub criterion: Criterion,
    pub model_kind: ModelKind,
    pub first_alarm_step: Option<usize>,
    pub delay_hours: Option<f64>,
    pub stability: Option<f64>,
    pub false_positives_before_onset: usize,
}

impl DetectionOutcome {
    pub fn detected(&self) -> bool {
        self.first_alarm_step.is_some()
    }
}

/// Outcome of one case given its alarms and the last observed step.
pub fn assess(
    alarms: &AlarmSeries,
    case: &ExperimentCase,
    model_kind: ModelKind,
    end_step: usize,
) -> Result<DetectionOutcome> {
    let first = first_alarm(alarms, case.onset_step).filter(|&t| t <= end_step);
    let stability = first
        .map(|t| detection_stability(alarms, t, end_step))
        .transpose()?;
    Ok(DetectionOutcome {
        case: *case,
        criterion: alarms.criterion,
        model_kind,
        first_alarm_step: first,
        delay_hours: first.map(|t| steps_to_hours(t - case.onset_step)),
        stability,
        false_positives_before_onset: false_positives_before_onset(alarms, case.onset_step),
    })
}

/// Delay and stability statistics over the detected cases of one slope.
/// Statistics that need more cases than were detected are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub slope_index: u32,
    pub n_cases: usize,
    pub n_detected: usize,
    pub mean_delay_hours: Option<f64>,
    pub std_delay_hours: Option<f64>,
    pub mean_stability: Option<f64>,
    pub std_stability: Option<f64>,
}

pub fn summarize_slope(outcomes: &[DetectionOutcome]) -> Result<SlopeSummary> {
    let first = outcomes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no outcomes to summarize".into()))?;
    let slope = first.case.slope_index;
    if outcomes.iter().any(|o| o.case.slope_index != slope) {
        return Err(Error::InvalidArgument("outcomes mix slope indices".into()));
    }
    let delays: Vec<f64> = outcomes.iter().filter_map(|o| o.delay_hours).collect();
    let stabilities: Vec<f64> = outcomes.iter().filter_map(|o| o.stability).collect();
    Ok(SlopeSummary {
        slope_index: slope,
        n_cases: outcomes.len(),
        n_detected: delays.len(),
        mean_delay_hours: mean(&delays),
        std_delay_hours: sample_std(&delays),
        mean_stability: mean(&stabilities),
        std_stability: sample_std(&stabilities),
    })
}

/// All outcomes of one (model, criterion) pair, summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model_kind: ModelKind,
    pub criterion: Criterion,
    pub n_outcomes: usize,
    pub n_detected: usize,
    pub n_undetected: usize,
    pub mean_delay_hours: Option<f64>,
    pub mean_stability: Option<f64>,
    /// Cases with at least one alarm before their onset.
    pub cases_with_false_positives: usize,
    pub total_false_positive_steps: usize,
    /// Rank correlation of slope index with per-slope mean delay.
    pub slope_delay_spearman: Option<f64>,
    pub slopes: Vec<SlopeSummary>,
}

fn summarize_group(model_kind: ModelKind, criterion: Criterion, outcomes: &[&DetectionOutcome]) -> Result<GroupSummary> {
    let mut slope_ids: Vec<u32> = outcomes.iter().map(|o| o.case.slope_index).collect();
    slope_ids.sort_unstable();
    slope_ids.dedup();
    let slopes = slope_ids
        .iter()
        .map(|&s| {
            let sel: Vec<DetectionOutcome> = outcomes
                .iter()
                .filter(|o| o.case.slope_index == s)
                .map(|o| (*o).clone())
                .collect();
            summarize_slope(&sel)
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = slopes
        .iter()
        .filter_map(|s| s.mean_delay_hours.map(|d| (s.slope_index as f64, d)))
        .unzip();
    let delays: Vec<f64> = outcomes.iter().filter_map(|o| o.delay_hours).collect();
    let stabilities: Vec<f64> = outcomes.iter().filter_map(|o| o.stability).collect();
    Ok(GroupSummary {
        model_kind,
        criterion,
        n_outcomes: outcomes.len(),
        n_detected: delays.len(),
        n_undetected: outcomes.len() - delays.len(),
        mean_delay_hours: mean(&delays),
        mean_stability: mean(&stabilities),
        cases_with_false_positives: outcomes.iter().filter(|o| o.false_positives_before_onset > 0).count(),
        total_false_positive_steps: outcomes.iter().map(|o| o.false_positives_before_onset).sum(),
        slope_delay_spearman: spearman(&xs, &ys),
        slopes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    DelayHours,
    Stability,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::DelayHours => "delay_hours",
            Metric::Stability => "stability",
        }
    }

    fn of(self, o: &DetectionOutcome) -> Option<f64> {
        match self {
            Metric::DelayHours => o.delay_hours,
            Metric::Stability => o.stability,
        }
    }
}

/// Which two outcome groups a paired comparison sets against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pairing {
    /// a = single-target, b = multi-target, under one criterion.
    Models { criterion: Criterion },
    /// a = criterion 1, b = criterion 2, for one model.
    Criteria { model_kind: ModelKind },
}

impl Pairing {
    pub fn describe(&self) -> String {
        match self {
            Pairing::Models { criterion } => format!("single_target-vs-multi_target/{}", criterion.name()),
            Pairing::Criteria { model_kind } => format!("criterion_1-vs-criterion_2/{}", model_kind.name()),
        }
    }
}

/// Paired t-test on a metric over cases where both sides detected the fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub pairing: Pairing,
    pub metric: Metric,
    pub alternative: Alternative,
    pub n_pairs: usize,
    /// Cases dropped because at least one side never alarmed.
    pub n_excluded: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub test: Option<TTestResult>,
    /// Why `test` is missing, when it is.
    pub undefined_reason: Option<String>,
}

fn compare(
    pairing: Pairing,
    metric: Metric,
    alternative: Alternative,
    a: &[&DetectionOutcome],
    b: &[&DetectionOutcome],
) -> PairedComparison {
    debug_assert_eq!(a.len(), b.len());
    let (xa, xb): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(oa, ob)| Some((metric.of(oa)?, metric.of(ob)?)))
        .unzip();
    let (test, undefined_reason) = match paired_t_test(&xa, &xb, alternative) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    PairedComparison {
        pairing,
        metric,
        alternative,
        n_pairs: xa.len(),
        n_excluded: a.len() - xa.len(),
        mean_a: mean(&xa),
        mean_b: mean(&xb),
        test,
        undefined_reason,
    }
}

/// Threshold of one model, fitted on its fault-free calibration residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelThreshold {
    pub model_kind: ModelKind,
    pub training_seed: u64,
    pub threshold: Threshold,
    pub thin_calibration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub split: SplitRanges,
    pub unit_scale: f64,
    pub criteria: Vec<Criterion>,
    /// Last observed step, inclusive. Defaults to the last monitoring step.
    pub end_step: Option<usize>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            split: SplitRanges::default(),
            unit_scale: DEFAULT_UNIT_SCALE,
            criteria: Criterion::BOTH.to_vec(),
            end_step: None,
        }
    }
}

/// Settings and seeds the report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Seed the grid's onsets were drawn from.
    pub grid_seed: u64,
    pub unit_scale: f64,
    pub split: SplitRanges,
    pub end_step: usize,
    pub criteria: Vec<Criterion>,
    pub n_cases: usize,
    pub thresholds: Vec<ModelThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ReportConfig,
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<PairedComparison>,
    pub outcomes: Vec<DetectionOutcome>,
}

impl ComparisonReport {
    pub fn group(&self, model_kind: ModelKind, criterion: Criterion) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.model_kind == model_kind && g.criterion == criterion)
    }

    pub fn comparison(&self, pairing: Pairing, metric: Metric) -> Option<&PairedComparison> {
        self.comparisons
            .iter()
            .find(|c| c.pairing == pairing && c.metric == metric)
    }
}

/// The two trained normal-behaviour models under comparison.
#[derive(Debug, Clone, Copy)]
pub struct ModelPair<'a> {
    pub single_target: &'a MlpModel,
    pub multi_target: &'a MlpModel,
}

impl<'a> ModelPair<'a> {
    fn iter(&self) -> [(ModelKind, &'a MlpModel); 2] {
        [
            (ModelKind::SingleTarget, self.single_target),
            (ModelKind::MultiTarget, self.multi_target),
        ]
    }
}

struct PreparedModel {
    kind: ModelKind,
    threshold: ModelThreshold,
    /// Fault-free gear temperature prediction over the monitoring range.
    prediction: Vec<f64>,
}

/// A normalized series with both models calibrated, ready to evaluate cases.
///
/// Model inputs are wind and air channels, which fault injection never
/// touches, so each model's prediction is computed once and reused by every
/// case; only the observed gear temperature changes from case to case.
pub struct Experiment {
    monitoring: ScadaSeries,
    models: Vec<PreparedModel>,
    criteria: Vec<Criterion>,
    unit_scale: f64,
    end_step: usize,
    split: SplitRanges,
}

/// Gear temperature is output 0 of every model, so any model with the SCADA
/// inputs can fill either slot; passing one model twice is allowed.
fn gear_prediction(model: &MlpModel, kind: ModelKind, part: &ScadaSeries) -> Result<Vec<f64>> {
    if model.input_dim() != Channel::INPUTS.len() {
        return Err(Error::Shape(format!(
            "{} model takes {} inputs, expected {}",
            kind.name(),
            model.input_dim(),
            Channel::INPUTS.len()
        )));
    }
    let gear = Channel::TARGETS
        .iter()
        .position(|&c| c == Channel::GearTemp)
        .expect("gear temperature is a target");
    model.predict_target(&part.features(), gear)
}

impl Experiment {
    pub fn new(series: &ScadaSeries, models: ModelPair<'_>, settings: &ExperimentSettings) -> Result<Self> {
        if !series.is_normalized() {
            return Err(Error::InvalidArgument("experiments run on a normalized series".into()));
        }
        if !(settings.unit_scale >= 0.0 && settings.unit_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("unit scale {} must be >= 0", settings.unit_scale)));
        }
        if settings.criteria.is_empty() {
            return Err(Error::InvalidArgument("no alarm criteria selected".into()));
        }
        let (_, calibration, monitoring) = split_series(series, &settings.split)?;
        let end_step = settings.end_step.unwrap_or(monitoring.end_step() - 1);
        if !(monitoring.first_step()..monitoring.end_step()).contains(&end_step) {
            return Err(Error::InvalidArgument(format!(
                "end step {end_step} outside monitoring range [{}, {})",
                monitoring.first_step(),
                monitoring.end_step()
            )));
        }
        let longest = settings.criteria.iter().map(|c| c.window()).max().unwrap_or(0);
        if monitoring.len() < longest {
            return Err(Error::InvalidArgument(format!(
                "monitoring range of {} steps is shorter than the {longest}-step window",
                monitoring.len()
            )));
        }
        let mut prepared = Vec::new();
        for (kind, model) in models.iter() {
            let cal_pred = gear_prediction(model, kind, &calibration)?;
            let cal_res = residuals(&calibration.channel(Channel::GearTemp), &cal_pred, calibration.first_step())?;
            let threshold = calibrate_threshold(&cal_res)?;
            prepared.push(PreparedModel {
                kind,
                threshold: ModelThreshold {
                    model_kind: kind,
                    training_seed: model.training_seed(),
                    thin_calibration: threshold.is_thin(),
                    threshold,
                },
                prediction: gear_prediction(model, kind, &monitoring)?,
            });
        }
        let mut criteria = settings.criteria.clone();
        criteria.sort_unstable();
        criteria.dedup();
        Ok(Self {
            monitoring,
            models: prepared,
            criteria,
            unit_scale: settings.unit_scale,
            end_step,
            split: settings.split,
        })
    }

    pub fn monitoring_range(&self) -> StepRange {
        StepRange::new(self.monitoring.first_step(), self.monitoring.end_step())
    }

    pub fn end_step(&self) -> usize {
        self.end_step
    }

    pub fn thresholds(&self) -> Vec<ModelThreshold> {
        self.models.iter().map(|m| m.threshold.clone()).collect()
    }

    fn model(&self, kind: ModelKind) -> &PreparedModel {
        self.models.iter().find(|m| m.kind == kind).expect("both kinds are prepared")
    }

    fn check_case(&self, case: &ExperimentCase) -> Result<()> {
        if !self.monitoring_range().contains(case.onset_step) || case.onset_step > self.end_step {
            return Err(Error::InvalidArgument(format!(
                "onset {} outside monitoring range [{}, {}]",
                case.onset_step,
                self.monitoring.first_step(),
                self.end_step
            )));
        }
        Ok(())
    }

    /// Monitoring residuals of one model with the case's fault injected;
    /// `None` gives the fault-free residuals.
    pub fn residuals(&self, kind: ModelKind, case: Option<&ExperimentCase>) -> Result<ResidualSeries> {
        let observed = match case {
            Some(c) => {
                self.check_case(c)?;
                inject(&self.monitoring, Channel::GearTemp, &c.fault(self.unit_scale)?)?
                    .channel(Channel::GearTemp)
            }
            None => self.monitoring.channel(Channel::GearTemp),
        };
        residuals(&observed, &self.model(kind).prediction, self.monitoring.first_step())
    }

    pub fn threshold(&self, kind: ModelKind) -> &Threshold {
        &self.model(kind).threshold.threshold
    }

    /// Outcomes of one case for every model and criterion, models outermost.
    pub fn evaluate_case(&self, case: &ExperimentCase) -> Result<Vec<DetectionOutcome>> {
        let mut out = Vec::with_capacity(self.models.len() * self.criteria.len());
        for m in &self.models {
            let res = self.residuals(m.kind, Some(case))?;
            for &criterion in &self.criteria {
                let alarms = criterion.evaluate(&res, &m.threshold.threshold)?;
                out.push(assess(&alarms, case, m.kind, self.end_step)?);
            }
        }
        Ok(out)
    }

    /// Evaluates every case (in parallel on the current rayon pool) and folds
    /// the results in grid order, so the report does not depend on scheduling.
    pub fn run(&self, grid: &ExperimentGrid) -> Result<ComparisonReport> {
        if grid.cases.is_empty() {
            return Err(Error::InvalidArgument("empty experiment grid".into()));
        }
        for c in &grid.cases {
            self.check_case(c)?;
        }
        let per_case = grid
            .cases
            .par_iter()
            .map(|c| self.evaluate_case(c))
            .collect::<Result<Vec<_>>>()?;

        let mut outcomes = Vec::with_capacity(per_case.len() * self.models.len() * self.criteria.len());
        for m in &self.models {
            for &criterion in &self.criteria {
                outcomes.extend(
                    per_case
                        .iter()
                        .flatten()
                        .filter(|o| o.model_kind == m.kind && o.criterion == criterion)
                        .cloned(),
                );
            }
        }
        let select = |kind: ModelKind, criterion: Criterion| -> Vec<&DetectionOutcome> {
            outcomes
                .iter()
                .filter(|o| o.model_kind == kind && o.criterion == criterion)
                .collect()
        };

        let mut groups = Vec::new();
        for m in &self.models {
            for &criterion in &self.criteria {
                groups.push(summarize_group(m.kind, criterion, &select(m.kind, criterion))?);
            }
        }

        let mut comparisons = Vec::new();
        for &criterion in &self.criteria {
            let a = select(ModelKind::SingleTarget, criterion);
            let b = select(ModelKind::MultiTarget, criterion);
            let pairing = Pairing::Models { criterion };
            comparisons.push(compare(pairing, Metric::DelayHours, Alternative::AGreater, &a, &b));
            comparisons.push(compare(pairing, Metric::Stability, Alternative::TwoSided, &a, &b));
        }
        if self.criteria.len() == 2 {
            for m in &self.models {
                let a = select(m.kind, Criterion::Criterion1);
                let b = select(m.kind, Criterion::Criterion2);
                let pairing = Pairing::Criteria { model_kind: m.kind };
                comparisons.push(compare(pairing, Metric::DelayHours, Alternative::AGreater, &a, &b));
                comparisons.push(compare(pairing, Metric::Stability, Alternative::AGreater, &a, &b));
            }
        }

        Ok(ComparisonReport {
            config: ReportConfig {
                grid_seed: grid.master_seed,
                unit_scale: self.unit_scale,
                split: self.split,
                end_step: self.end_step,
                criteria: self.criteria.clone(),
                n_cases: grid.cases.len(),
                thresholds: self.thresholds(),
            },
            groups,
            comparisons,
            outcomes,
        })
    }
}

/// Calibrates both models on `series` and evaluates every case of `grid`.
pub fn run_experiment(
    series: &ScadaSeries,
    models: ModelPair<'_>,
    grid: &ExperimentGrid,
    settings: &ExperimentSettings,
) -> Result<ComparisonReport> {
    Experiment::new(series, models, settings)?.run(grid)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const OUTCOMES_HEADER: &str = "model_kind,criterion,slope_index,onset_ordinal,onset_step,first_alarm_step,delay_hours,stability,false_positives_before_onset";

/// One row per case × model × criterion; undefined values are empty fields.
pub fn write_outcomes_csv(report: &ComparisonReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{OUTCOMES_HEADER}")?;
    for o in &report.outcomes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            o.model_kind.name(),
            o.criterion.name(),
            o.case.slope_index,
            o.case.onset_ordinal,
            o.case.onset_step,
            opt(o.first_alarm_step),
            opt(o.delay_hours),
            opt(o.stability),
            o.false_positives_before_onset
        )?;
    }
    Ok(())
}

pub const SLOPE_SUMMARY_HEADER: &str = "model_kind,criterion,slope_index,n_cases,n_detected,mean_delay_hours,std_delay_hours,mean_stability,std_stability";

pub fn write_slope_summary_csv(report: &ComparisonReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{SLOPE_SUMMARY_HEADER}")?;
    for g in &report.groups {
        for s in &g.slopes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                g.model_kind.name(),
                g.criterion.name(),
                s.slope_index,
                s.n_cases,
                s.n_detected,
                opt(s.mean_delay_hours),
                opt(s.std_delay_hours),
                opt(s.mean_stability),
                opt(s.std_stability)
            )?;
        }
    }
    Ok(())
}

pub const TTESTS_HEADER: &str = "comparison,metric,alternative,n_pairs,n_excluded,mean_a,mean_b,mean_difference,t_statistic,degrees_of_freedom,p_one_sided,p_two_sided,undefined_reason";

pub fn write_ttests_csv(report: &ComparisonReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{TTESTS_HEADER}")?;
    for c in &report.comparisons {
        let t = c.test.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.pairing.describe(),
            c.metric.name(),
            match c.alternative {
                Alternative::AGreater => "a_greater",
                Alternative::TwoSided => "two_sided",
            },
            c.n_pairs,
            c.n_excluded,
            opt(c.mean_a),
            opt(c.mean_b),
            opt(t.map(|t| t.mean_difference)),
            opt(t.map(|t| t.t_statistic)),
            opt(t.map(|t| t.degrees_of_freedom)),
            opt(t.map(|t| t.p_one_sided)),
            opt(t.map(|t| t.p_two_sided)),
            c.undefined_reason.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}
