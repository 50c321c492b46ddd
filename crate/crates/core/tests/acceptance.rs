//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false` so the summary
//! is printed even when cargo captures test output.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nbm_core::alarm::{alarm_criterion_1, alarm_criterion_2, percentile, ResidualSeries, Threshold};
use nbm_core::config::RunConfig;
use nbm_core::eval::{Experiment, Metric, ModelPair, Pairing};
use nbm_core::fault::{build_grid, inject, FaultTrend};
use nbm_core::mlp::{gradient_check, init_model, preset_architecture, BatchNormState, Dense, MlpModel, ModelKind};
use nbm_core::pipeline::{self, Artifacts};
use nbm_core::scada::Channel;
use nbm_core::stats::{paired_t_test, student_t_cdf, Alternative};
use nbm_core::{alarm::Criterion, seeds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seeds::derive(2024, label, 0))
}

// ---------------------------------------------------------------- oracles

/// Criterion 1 recomputed window by window.
fn brute_c1(r: &[f64], thr: f64) -> Vec<bool> {
    (0..r.len())
        .map(|t| t >= 143 && r[t - 143..=t].iter().filter(|&&v| v > thr).count() > 48)
        .collect()
}

/// Criterion 2 recomputed window by window.
fn brute_c2(r: &[f64], thr: f64) -> Vec<bool> {
    (0..r.len())
        .map(|t| t >= 47 && r[t - 47..=t].iter().sum::<f64>() / 48.0 > thr)
        .collect()
}

/// Sort, then interpolate between the order statistics around h = q(n-1).
fn sorted_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() || h == lo as f64 {
        return v[lo];
    }
    v[lo] + (h - lo as f64) * (v[lo + 1] - v[lo])
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// t distribution function by quadrature of the unnormalized density
/// (1 + s²/ν)^(-(ν+1)/2), with s = tan θ mapping the real line to (-π/2, π/2).
/// The normalizing constant is itself integrated, so no gamma function is used.
fn t_cdf_by_quadrature(t: f64, df: f64) -> f64 {
    let g = |theta: f64| {
        let s = theta.tan();
        let c = theta.cos();
        (1.0 + s * s / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let half = std::f64::consts::FRAC_PI_2;
    let edge = 1e-9;
    let n = 400_000;
    let total = simpson(g, -half + edge, half - edge, n);
    simpson(g, -half + edge, t.atan(), n) / total
}

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

// --------------------------------------------------------------- criteria

fn c1_alarm_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng("acceptance/alarms");
    let mut mismatches = 0usize;
    let mut flags_checked = 0usize;
    for _ in 0..1000 {
        let n = r.random_range(144..=2000);
        // bursts of elevated residuals so both criteria actually fire
        let level: f64 = r.random_range(0.0..1.5);
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let burst = if (i / 97) % 3 == 1 { level } else { 0.0 };
                r.random_range(-1.0..1.0) + burst
            })
            .collect();
        let thr: f64 = r.random_range(-0.5..1.5);
        let res = ResidualSeries::new(values.clone(), r.random_range(0..100_000)).unwrap();
        let a1 = alarm_criterion_1(&res, &Threshold::fixed(thr)).unwrap();
        let a2 = alarm_criterion_2(&res, &Threshold::fixed(thr)).unwrap();
        mismatches += a1.flags.iter().zip(brute_c1(&values, thr)).filter(|(a, b)| **a != *b).count();
        mismatches += a2.flags.iter().zip(brute_c2(&values, thr)).filter(|(a, b)| **a != *b).count();
        flags_checked += 2 * n;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && secs < 30.0,
        format!("1000 series, {flags_checked} flags, {mismatches} mismatches, {secs:.2} s"),
    )
}

fn c2_percentile_and_t() -> Verdict {
    let mut r = rng("acceptance/percentile");
    let mut pct_mismatch = 0;
    for i in 0..10_000 {
        let n = r.random_range(1..=300);
        let ties = i % 4 == 0;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if ties {
                    r.random_range(0..5) as f64
                } else {
                    r.random_range(-100.0..100.0)
                }
            })
            .collect();
        let q = match i % 5 {
            0 => 0.999,
            1 => 0.5,
            _ => r.random_range(0.001..0.999),
        };
        if percentile(&values, q).unwrap().to_bits() != sorted_percentile(&values, q).to_bits() {
            pct_mismatch += 1;
        }
    }

    let ts = [-30.0, -6.0, -2.5, -1.0, -0.3, 0.0, 0.2, 0.9, 1.7, 3.4641, 8.0, 50.0];
    let mut worst_closed: f64 = 0.0;
    for &t in &ts {
        let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
        let df2 = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
        worst_closed = worst_closed.max((student_t_cdf(t, 1).unwrap() - cauchy).abs());
        worst_closed = worst_closed.max((student_t_cdf(t, 2).unwrap() - df2).abs());
    }
    let mut worst_quad: f64 = 0.0;
    for df in [5u64, 49, 499] {
        for &t in &[-4.0, -1.5, -0.4, 0.1, 0.8, 2.0, 3.3, 6.0] {
            let oracle = t_cdf_by_quadrature(t, df as f64);
            worst_quad = worst_quad.max((student_t_cdf(t, df).unwrap() - oracle).abs());
        }
    }
    verdict(
        pct_mismatch == 0 && worst_closed < 1e-8 && worst_quad < 1e-8,
        format!(
            "percentile mismatches {pct_mismatch}/10000; t cdf max error: closed forms {worst_closed:.1e}, quadrature {worst_quad:.1e}"
        ),
    )
}

fn c3_gradients() -> Verdict {
    let mut r = rng("acceptance/gradients");
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in ModelKind::BOTH {
        for k in 0..25u64 {
            // move every parameter away from its initial value, including batch norm
            let model = perturbed(&init_model(&preset_architecture(kind), k).unwrap(), &mut r, 0.3);
            let x: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..kind.output_dim()).map(|_| r.random_range(0.0..1.0)).collect();
            worst = worst.max(gradient_check(&model, &x, &y, 1e-5).unwrap());
            checked += 1;
        }
    }
    verdict(
        worst < 1e-4,
        format!("{checked} checks over both presets, max relative deviation {worst:.2e}"),
    )
}

/// Copy of `model` with every trainable parameter shifted by a uniform draw.
fn perturbed(model: &MlpModel, r: &mut ChaCha8Rng, amount: f64) -> MlpModel {
    let mut jitter = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x += r.random_range(-amount..amount));
    let mut layers: Vec<Dense> = model.layers().to_vec();
    for l in &mut layers {
        jitter(&mut l.weights);
        jitter(&mut l.bias);
    }
    let mut norms: Vec<Option<BatchNormState>> = model.norms().to_vec();
    for n in norms.iter_mut().flatten() {
        jitter(&mut n.scale);
        jitter(&mut n.shift);
    }
    MlpModel::from_parts(model.architecture().clone(), layers, norms, model.training_seed()).unwrap()
}

fn files_equal(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            n += files_equal(&pa, &pb)?;
        } else {
            if std::fs::read(&pa).unwrap() != std::fs::read(&pb).map_err(|e| e.to_string())? {
                return Err(format!("{} differs", name.to_string_lossy()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn c4_determinism(first: &Path) -> Verdict {
    let second = tempfile::tempdir().unwrap();
    let cfg = RunConfig::with_seed(0);
    let out = Artifacts::new(second.path());
    pipeline::cmd_synth(&cfg, &out).unwrap();
    pipeline::cmd_train(&cfg, &out).unwrap();
    // a different worker count must not change anything either
    pipeline::with_jobs(Some(3), || pipeline::cmd_evaluate(&cfg, &out))
        .unwrap()
        .unwrap();
    match files_equal(first, second.path()) {
        Ok(n) => verdict(true, format!("{n} artifacts byte-identical across two runs (1 vs 3 workers)")),
        Err(e) => verdict(false, e),
    }
}

fn c5_false_positives() -> Verdict {
    let clean: Vec<bool> = (0..20u64)
        .into_par_iter()
        .map(|rep| {
            let cfg = RunConfig::with_seed(1000 + rep);
            let (_, series) = pipeline::normalized_series(&cfg).unwrap();
            let (single, _) = pipeline::train_model(&cfg, &series, ModelKind::SingleTarget).unwrap();
            let (multi, _) = pipeline::train_model(&cfg, &series, ModelKind::MultiTarget).unwrap();
            let pair = ModelPair {
                single_target: &single,
                multi_target: &multi,
            };
            let exp = Experiment::new(&series, pair, &cfg.experiment_settings()).unwrap();
            ModelKind::BOTH.iter().all(|&k| {
                let res = exp.residuals(k, None).unwrap();
                Criterion::BOTH.iter().all(|c| {
                    !c.evaluate(&res, exp.threshold(k)).unwrap().flags.iter().any(|&f| f)
                })
            })
        })
        .collect();
    let n_clean = clean.iter().filter(|&&c| c).count();
    verdict(
        n_clean >= 19,
        format!("{n_clean}/20 fault-free replicates without any alarm (both models, both criteria)"),
    )
}

fn c6_slope_structure(report: &nbm_core::eval::ComparisonReport, eval_secs: f64) -> Verdict {
    let mut ok = eval_secs < 600.0;
    let mut parts = Vec::new();
    for g in &report.groups {
        let rho = g.slope_delay_spearman.unwrap_or(f64::NAN);
        let first = g.slopes.iter().find(|s| s.slope_index == 1).and_then(|s| s.mean_delay_hours);
        let last = g.slopes.iter().find(|s| s.slope_index == 10).and_then(|s| s.mean_delay_hours);
        let ordered = matches!((first, last), (Some(a), Some(b)) if b < a);
        ok &= rho <= -0.8 && ordered && g.n_outcomes == 500;
        parts.push(format!(
            "{}/{} rho {rho:.3} slope1 {:.1} h slope10 {:.1} h",
            g.model_kind.name(),
            g.criterion.name(),
            first.unwrap_or(f64::NAN),
            last.unwrap_or(f64::NAN)
        ));
    }
    verdict(ok, format!("{}; grid evaluated in {eval_secs:.2} s", parts.join("; ")))
}

fn c7_criterion_ordering(report: &nbm_core::eval::ComparisonReport) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in ModelKind::BOTH {
        let g1 = report.group(kind, Criterion::Criterion1).unwrap();
        let g2 = report.group(kind, Criterion::Criterion2).unwrap();
        let pairing = Pairing::Criteria { model_kind: kind };
        // a = criterion 1, b = criterion 2; "a greater" is the expected direction for both
        let p_delay = report
            .comparison(pairing, Metric::DelayHours)
            .and_then(|c| c.test.as_ref())
            .map_or(1.0, |t| t.p_one_sided);
        let p_stab = report
            .comparison(pairing, Metric::Stability)
            .and_then(|c| c.test.as_ref())
            .map_or(1.0, |t| t.p_one_sided);
        let (d1, d2) = (g1.mean_delay_hours.unwrap(), g2.mean_delay_hours.unwrap());
        let (s1, s2) = (g1.mean_stability.unwrap(), g2.mean_stability.unwrap());
        ok &= d2 < d1 && s2 < s1 && p_delay < 0.05 && p_stab < 0.05;
        parts.push(format!(
            "{}: delay {d1:.2} vs {d2:.2} h (p {p_delay:.1e}), stability {s1:.5} vs {s2:.5} (p {p_stab:.1e})",
            kind.name()
        ));
    }
    verdict(ok, parts.join("; "))
}

fn c8_t_test_sanity() -> Verdict {
    let mut r = rng("acceptance/ttest");
    let base = Normal::new(40.0, 12.0).unwrap();
    let sd = 6.0;
    let shifted_pairs = |r: &mut ChaCha8Rng, shift: f64| {
        let noise = Normal::new(shift, sd).unwrap();
        let b: Vec<f64> = (0..500).map(|_| base.sample(r)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + noise.sample(r)).collect();
        (a, b)
    };
    let (a, b) = shifted_pairs(&mut r, 0.5 * sd);
    let p_shift = paired_t_test(&a, &b, Alternative::AGreater).unwrap().p_one_sided;
    let null_p: Vec<f64> = (0..200)
        .map(|_| {
            let (a, b) = shifted_pairs(&mut r, 0.0);
            paired_t_test(&a, &b, Alternative::AGreater).unwrap().p_one_sided
        })
        .collect();
    let d = ks_uniform(null_p);
    // asymptotic 1% critical value of the one-sample Kolmogorov–Smirnov statistic
    let critical = 1.628 / (200f64).sqrt();
    verdict(
        p_shift < 0.05 && d < critical,
        format!("shift 0.5 sd: p = {p_shift:.2e}; null: KS D = {d:.4} < {critical:.4}"),
    )
}

fn c9_injection_identity(cfg: &RunConfig) -> Verdict {
    let (_, series) = pipeline::normalized_series(cfg).unwrap();
    let f = &cfg.fault;
    let grid = build_grid(&f.onset_window, &f.slopes, f.n_onsets, cfg.grid_seed()).unwrap();
    let same = |a: &nbm_core::scada::ScadaRecord, b: &nbm_core::scada::ScadaRecord| {
        a.step == b.step && Channel::ALL.iter().all(|&c| a.get(c).to_bits() == b.get(c).to_bits())
    };
    let mut identity_ok = true;
    let mut pre_onset_ok = true;
    let mut other_channels_ok = true;
    let mut r = rng("acceptance/injection");
    for _ in 0..10 {
        let case = grid.cases[r.random_range(0..grid.cases.len())];
        let zero = inject(&series, Channel::GearTemp, &case.fault(0.0).unwrap()).unwrap();
        identity_ok &= zero.records().iter().zip(series.records()).all(|(a, b)| same(a, b));
        let injected = inject(&series, Channel::GearTemp, &case.fault(f.unit_scale).unwrap()).unwrap();
        for (a, b) in injected.records().iter().zip(series.records()) {
            if a.step <= case.onset_step {
                pre_onset_ok &= same(a, b);
            } else {
                other_channels_ok &= Channel::ALL
                    .iter()
                    .filter(|&&c| c != Channel::GearTemp)
                    .all(|&c| a.get(c).to_bits() == b.get(c).to_bits());
            }
        }
    }
    // a zero trend for every slope, at every onset of the grid
    for case in &grid.cases {
        let trend = FaultTrend::new(case.slope_index, case.onset_step, 0.0).unwrap();
        let zero = inject(&series, Channel::GearTemp, &trend).unwrap();
        identity_ok &= zero.channel(Channel::GearTemp).iter().zip(series.channel(Channel::GearTemp))
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    verdict(
        identity_ok && pre_onset_ok && other_channels_ok,
        format!(
            "unit_scale 0 identity: {identity_ok}; pre-onset unchanged (10 cases, all channels): {pre_onset_ok}; other channels untouched: {other_channels_ok}"
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        println!("{} criterion {n} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };

    record(1, "alarm oracle equivalence", c1_alarm_oracle());
    record(2, "percentile and t distribution", c2_percentile_and_t());
    record(3, "gradient correctness", c3_gradients());

    // default pipeline run shared by criteria 4, 6, 7 and 9
    let cfg = RunConfig::with_seed(0);
    let first = tempfile::tempdir().unwrap();
    let out = Artifacts::new(first.path());
    pipeline::cmd_synth(&cfg, &out).unwrap();
    pipeline::cmd_train(&cfg, &out).unwrap();
    let t = Instant::now();
    let report = pipeline::with_jobs(Some(1), || pipeline::cmd_evaluate(&cfg, &out))
        .unwrap()
        .unwrap();
    let eval_secs = t.elapsed().as_secs_f64();

    record(4, "determinism", c4_determinism(first.path()));
    record(5, "false positives on fault-free data", c5_false_positives());
    record(6, "slope-delay structure", c6_slope_structure(&report, eval_secs));
    record(7, "criterion ordering", c7_criterion_ordering(&report));
    record(8, "t-test sanity", c8_t_test_sanity());
    record(9, "injection identity", c9_injection_identity(&cfg));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
