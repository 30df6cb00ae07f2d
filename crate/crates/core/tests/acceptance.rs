//! Exit criteria. Each test prints one `criterion N [PASS|FAIL]` line.
//!
//! Run with `cargo test -p grwp --test acceptance -- --nocapture --test-threads=1`
//! to see the report in order.

mod common;

use std::path::Path;
use std::process::Command;

use grwp::collapse::{
    aggregate_profiles, evolve, run_pair_to_collapse, Branch, Measure, ProfilePair,
    StreamBindings, TwoBranchState,
};
use grwp::ensemble::{run_ensemble, run_ensemble_with_workers, EnsembleConfig, ExperimentKind};
use grwp::experiment::{
    active_profiles, build_scenario, persistence_trial, DetectorKeys, ScenarioOverrides,
};
use grwp::noise::{CounterNoise, StreamKey};
use grwp::relativity::{activation_gap, boost, detection_events, min_separation, Event, Frame, C};
use grwp::stats::ks_two_sample;

const RUNS: u64 = 10_000;
const SEED: u64 = 42;

/// Median collapse time at rate 2e4 1/s, q0 = 0.5, dt = 2.5e-7 s, epsilon = 1e-6,
/// from `common::brute_force_collapses` with 2e5 runs (seed 20261015).
const GOLDEN_MEDIAN_S: f64 = 3.25e-4;

fn report(id: &str, pass: bool, detail: String) {
    println!("criterion {id} [{}]: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

/// Rounds to `digits` significant digits.
fn round_sig(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

#[test]
fn criterion_1_born_rule() {
    let mut lines = Vec::new();
    let mut pass = true;
    for q0 in [0.1, 0.3, 0.5] {
        let c = EnsembleConfig::new(ExperimentKind::BornRule, RUNS, SEED, q0);
        let (stats, _) = run_ensemble(&c).unwrap();
        let f = stats.proportion("winner_1").unwrap().estimate;
        let band = 3.0 * (q0 * (1.0 - q0) / RUNS as f64).sqrt();
        pass &= (f - q0).abs() <= band;
        lines.push(format!("q0={q0}: f={f:.4} (band ±{band:.4})"));
    }
    report("1", pass, lines.join("; "));
}

#[test]
fn criterion_2_martingale() {
    let scenario = build_scenario(1000.0, 0.5, &ScenarioOverrides::default()).unwrap();
    let frame = Frame::a(0.99 * C).unwrap();
    let active = active_profiles(&scenario, &frame).unwrap();
    let pair = ProfilePair::new(&active.profile1, &active.profile2);
    let params = scenario.params;
    let rate = pair.rate(params.lambda);
    let steps = (0.3 / (rate * params.dt)).round() as u64;
    let n = 100_000u64;
    let mut lines = Vec::new();
    let mut pass = true;
    for q0 in [0.1, 0.3, 0.5] {
        let s0 = TwoBranchState::from_q(q0).unwrap();
        let (mut sum, mut sum2) = (0.0, 0.0);
        for run in 0..n {
            let bind = DetectorKeys::derive(SEED, run).bindings(&active.detectors);
            let q = evolve(s0, &pair, &params, &CounterNoise, &bind, Measure::Cooked, 0, steps)
                .unwrap()
                .q();
            sum += q;
            sum2 += q * q;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        let z = (mean - q0) / se;
        pass &= z.abs() <= 4.0;
        lines.push(format!("q0={q0}: mean={mean:.5} se={se:.2e} z={z:+.2}"));
    }
    report("2", pass, format!("t=0.3/rate ({steps} steps), {}", lines.join("; ")));
}

#[test]
fn criterion_3_cross_frame_disagreement() {
    let mut c = EnsembleConfig::new(ExperimentKind::CrossFrame, RUNS, SEED, 0.5);
    c.d = 2500.0;
    c.v = Some(0.99 * C);
    let (s5, _) = run_ensemble(&c).unwrap();
    let r5 = s5.proportion("disagree").unwrap().estimate;
    c.q0 = 0.3;
    let (s3, _) = run_ensemble(&c).unwrap();
    let r3 = s3.proportion("disagree").unwrap().estimate;
    let pass = (0.485..=0.515).contains(&r5) && (r3 - 0.42).abs() <= 0.015;
    report(
        "3",
        pass,
        format!(
            "q0=0.5: {r5:.4} in [0.485, 0.515]; q0=0.3: {r3:.4} vs 0.42±0.015; \
             over activation gap {:.3}",
            s5.budget_violation_fraction.unwrap()
        ),
    );
}

#[test]
fn criterion_4_frame0_coordination() {
    let q0 = 0.3;
    let c = EnsembleConfig::new(ExperimentKind::Frame0Consistency, RUNS, SEED, q0);
    let (stats, records) = run_ensemble(&c).unwrap();
    let contradictory = records.iter().filter(|r| r.is_contradictory()).count();
    let p = stats.proportion("winner_1").unwrap();
    let se = (q0 * (1.0 - q0) / RUNS as f64).sqrt();
    let pass = contradictory == 0
        && stats.contradictions == 0
        && stats.counts["failed"] == 0
        && (p.estimate - q0).abs() <= 4.0 * se;
    report(
        "4",
        pass,
        format!(
            "{contradictory} contradictory pairs in {} runs; winner-1 {:.4} vs {q0} (4se {:.4})",
            records.len(),
            p.estimate,
            4.0 * se
        ),
    );
}

#[test]
fn criterion_5_winner_immutability() {
    let scenario = build_scenario(1000.0, 0.5, &ScenarioOverrides::default()).unwrap();
    let rate0 = scenario.rate(&Frame::rest()).unwrap();
    let horizon = (10.0 / (rate0 * scenario.params.dt)).ceil() as u64;
    let mut reversed = 0;
    for run in 0..RUNS {
        let o = persistence_trial(&scenario, 0.99 * C, SEED, run, horizon).unwrap();
        reversed += u64::from(o.reversed);
    }
    let frac = reversed as f64 / RUNS as f64;
    report(
        "5",
        frac <= 1e-3,
        format!("{reversed} reversals in {RUNS} continuations of {horizon} steps ({frac:.1e} <= 1e-3)"),
    );
}

#[test]
fn criterion_6_collapse_timescale() {
    let mut c = EnsembleConfig::new(ExperimentKind::CollapseTime, RUNS, SEED, 0.5);
    c.v = Some(0.99 * C);
    let scenario = c.scenario().unwrap();
    let rate = scenario.rate(&Frame::a(0.99 * C).unwrap()).unwrap();
    assert!((rate - 2e4).abs() < 1e-8);
    let (stats, _) = run_ensemble(&c).unwrap();
    let median = stats.duration_quantiles_s.unwrap().p50;

    let mut oracle: Vec<f64> = common::brute_force_collapses(rate, 2.5e-7, 0.5, 1e-6, 20_000, 7)
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let oracle_median = common::median(&mut oracle);

    let in_band = (1e-5..=1e-3).contains(&median);
    let vs_golden = (median / GOLDEN_MEDIAN_S - 1.0).abs();
    let oracle_vs_golden = (oracle_median / GOLDEN_MEDIAN_S - 1.0).abs();
    report(
        "6",
        in_band && vs_golden <= 0.05 && oracle_vs_golden <= 0.05,
        format!(
            "median {median:.4e} s in [1e-5, 1e-3]; golden {GOLDEN_MEDIAN_S:.3e} (off {:.2}%); \
             fresh oracle {oracle_median:.4e}",
            100.0 * vs_golden
        ),
    );
}

#[test]
fn criterion_7a_boost_round_trip() {
    let mut worst: f64 = 0.0;
    for &beta in &[-0.999, -0.99, -0.6, -0.1, 0.0, 0.3, 0.75, 0.99, 0.999] {
        for &(t, x) in &[(3.3e-6, 1000.0), (1.0, -2.0e8), (-4e-3, 5.0e5), (2.5e-9, 0.3)] {
            let e = Event::new(t, x).unwrap();
            let back = boost(boost(e, beta * C).unwrap(), -beta * C).unwrap();
            worst = worst.max(((back.t - t) / t).abs()).max(((back.x - x) / x).abs());
        }
    }
    report("7a", worst <= 1e-12, format!("boost round trip worst relative error {worst:.2e}"));
}

#[test]
fn criterion_7b_interval_invariance() {
    let mut worst: f64 = 0.0;
    for &beta in &[-0.999, -0.9, -0.5, 0.2, 0.8, 0.99, 0.999] {
        for &(t, x) in &[(1e-5, 1000.0), (2.0, 1e8), (1e-6, 1e3), (-3e-4, 7e4)] {
            let e = Event::new(t, x).unwrap();
            let s0 = e.interval();
            let s1 = boost(e, beta * C).unwrap().interval();
            worst = worst.max(((s1 - s0) / s0).abs());
        }
    }
    let (e1, _) = detection_events(1000.0).unwrap();
    let null = boost(e1, 0.99 * C).unwrap().interval().abs();
    report(
        "7b",
        worst <= 1e-9 && null <= 1e-6,
        format!("interval worst relative drift {worst:.2e}; light-like event |s2| = {null:.2e} m^2"),
    );
}

#[test]
fn criterion_7c_activation_gap() {
    let gap = activation_gap(1000.0, 0.99 * C).unwrap();
    let (e1, e2) = detection_events(1000.0).unwrap();
    let boosted = boost(e2, 0.99 * C).unwrap().t - boost(e1, 0.99 * C).unwrap().t;
    let pass = round_sig(gap, 5) == 4.6819e-5 && ((gap - boosted) / gap).abs() <= 1e-12;
    report("7c", pass, format!("delta_t(1000 m, 0.99c) = {gap:.6e} s (expected 4.6819e-5)"));
}

#[test]
fn criterion_7d_min_separation() {
    let d = min_separation(1e-4, 0.99 * C).unwrap();
    let round_trip = (activation_gap(d, 0.99 * C).unwrap() / 1e-4 - 1.0).abs();
    // same order of magnitude as "about 1 km"
    let order_ok = (d / 1000.0).log10().abs() < 1.0;
    let value_ok = round_sig(d, 5) == 2135.8;
    report(
        "7d",
        value_ok && order_ok && round_trip <= 1e-12,
        format!(
            "min_separation(1e-4 s, 0.99c) = {d:.4} m, to 5 digits {}, expected 2135.8",
            round_sig(d, 5)
        ),
    );
}

#[test]
fn criterion_8_aggregation_oracle() {
    let q0 = 0.3;
    let scenario = build_scenario(1000.0, q0, &ScenarioOverrides::default()).unwrap();
    let active = active_profiles(&scenario, &Frame::rest()).unwrap();
    let full = ProfilePair::new(&active.profile1, &active.profile2);
    let (a1, a2) = aggregate_profiles(&active.profile1, &active.profile2).unwrap();
    let agg = ProfilePair::new(&a1, &a2);
    let params = scenario.params;

    let arm = |pair: &ProfilePair, salt: u64| {
        let mut wins = 0u64;
        let mut durations = Vec::with_capacity(RUNS as usize);
        for run in 0..RUNS {
            let bind = if pair.len() == 1 {
                StreamBindings::single(StreamKey(run ^ salt))
            } else {
                DetectorKeys::derive(SEED, run).bindings(&active.detectors)
            };
            let c = run_pair_to_collapse(q0, pair, &params, &CounterNoise, &bind).unwrap();
            wins += u64::from(c.winner == Branch::One);
            durations.push(c.duration);
        }
        (wins, durations)
    };
    let (w_full, d_full) = arm(&full, 0);
    let (w_agg, d_agg) = arm(&agg, 0xA66_0000_0000);
    let ks = ks_two_sample(&d_full, &d_agg).unwrap();

    let (p1, p2) = (w_full as f64 / RUNS as f64, w_agg as f64 / RUNS as f64);
    let pooled = (w_full + w_agg) as f64 / (2 * RUNS) as f64;
    let z = (p1 - p2) / (pooled * (1.0 - pooled) * 2.0 / RUNS as f64).sqrt();
    // two-sided p > 0.01
    let winners_ok = z.abs() < 2.575_829;
    report(
        "8",
        ks.p_value > 0.01 && winners_ok,
        format!(
            "durations KS D={:.4} p={:.3}; winner-1 {p1:.4} vs {p2:.4} (z={z:+.2})",
            ks.statistic, ks.p_value
        ),
    );
}

fn cli(args: &[&str], out: &Path) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_grwp"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn criterion_9_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["disagree", "--runs", "2000", "--seed", "7", "--q0", "0.4"];
    let mut bytes = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(tag);
        let mut a = args.to_vec();
        a.extend(["--workers", workers]);
        let _ = cli(&a, &out);
        let manifest = std::fs::read(out.join("manifest.json")).unwrap();
        let records = std::fs::read(out.join("records.csv")).unwrap();
        bytes.push((manifest, records));
    }
    let repeat_identical = bytes[0] == bytes[1];
    let workers_identical = bytes[0] == bytes[2];

    let c = EnsembleConfig::new(ExperimentKind::BornRule, 2000, 11, 0.3);
    let one = run_ensemble_with_workers(&c, 1).unwrap();
    let four = run_ensemble_with_workers(&c, 4).unwrap();
    let stats_identical = one == four;

    report(
        "9",
        repeat_identical && workers_identical && stats_identical,
        format!(
            "repeat bytes identical: {repeat_identical}; --workers 1 vs 4 bytes identical: \
             {workers_identical}; in-process stats identical: {stats_identical}"
        ),
    );
}
