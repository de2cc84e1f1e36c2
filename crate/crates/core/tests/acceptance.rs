//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without a test harness so the lines stay readable.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use asa_core::controller::{AssetBundle, Mode, Precision, SteerDecision};
use asa_core::eval::{compute_metrics, Direction, EvalReport, SampleRow};
use asa_core::parser::{parse_bytes, parse_calls, score_sample, SampleFlags, ToolSchema};
use asa_core::pipeline::{
    interference_check, probe_readout, run_pipeline, train_bundle, PipelineConfig, PipelineReport, DEFAULT_PROPORTIONS,
};
use asa_core::probe::TrainConfig;
use asa_core::scalar::lift;
use asa_core::synth::{build_world, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let o = Outcome { name, pass, detail: format!("{detail} [{:.1}s]", start.elapsed().as_secs_f64()) };
    println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    o
}

fn h1() -> (bool, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let readout = pool.install(|| {
        let world = build_world(&WorldConfig::default()).unwrap();
        let data = world.sample_records(500, DEFAULT_PROPORTIONS).unwrap();
        let cfg = TrainConfig::default();
        let trained = train_bundle::<f32>(&data, 1.0, &cfg).unwrap();
        probe_readout(&data, &trained.bundle, 20, 42, &cfg).unwrap()
    });
    let elapsed = start.elapsed();
    let min_auc = readout.domain_auc.values().copied().fold(f64::INFINITY, f64::min);
    let shuffle = readout.shuffle.mean;
    let pass = min_auc >= 0.999 && (0.45..=0.55).contains(&shuffle) && elapsed < Duration::from_secs(60);
    (
        pass,
        format!(
            "min per-domain val AUC {min_auc:.5} (>= 0.999), shuffle AUC {shuffle:.4} over {} rounds (in [0.45, 0.55]), single-threaded {:.1}s (< 60s)",
            readout.shuffle.rounds.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn h2(r: &PipelineReport) -> (bool, String) {
    let t = &r.delta_logit;
    let mut ok = t.n == 200;
    let mut notes = Vec::new();
    let alphas: Vec<f64> = t.rows.iter().filter(|x| x.direction == Direction::Plus).map(|x| x.alpha).collect();
    for &a in &alphas {
        let p = t.get(a, Direction::Plus).unwrap().mean_delta_logit;
        let m = t.get(a, Direction::Minus).unwrap().mean_delta_logit;
        let rnd = t.get(a, Direction::Random).unwrap().mean_delta_logit;
        ok &= p > 0.0 && m < 0.0 && (p + m).abs() <= 1e-6 && rnd.abs() < 0.1 * p.abs();
        notes.push(format!("a={a}: +v {p:.4}, -v {m:.4}, rand {rnd:.4}"));
    }
    // linearity: every alpha is a multiple of the first
    let a0 = alphas[0];
    let base: Vec<f64> = [Direction::Plus, Direction::Minus, Direction::Random]
        .iter()
        .map(|&d| t.get(a0, d).unwrap().mean_delta_logit)
        .collect();
    let mut worst = 0.0_f64;
    for &a in &alphas[1..] {
        for (i, d) in [Direction::Plus, Direction::Minus, Direction::Random].into_iter().enumerate() {
            let got = t.get(a, d).unwrap().mean_delta_logit;
            let want = base[i] * a / a0;
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    ok &= worst <= 1e-9 && alphas.len() >= 2;
    (ok, format!("n={}, {}; max relative deviation from linearity {worst:.2e} (<= 1e-9)", t.n, notes.join("; ")))
}

fn h3() -> (bool, String) {
    let noisy = interference_check(&build_world(&WorldConfig::default()).unwrap(), 1000, DEFAULT_PROPORTIONS).unwrap();
    let clean = interference_check(
        &build_world(&WorldConfig { noise: 0.0, ..WorldConfig::default() }).unwrap(),
        1000,
        DEFAULT_PROPORTIONS,
    )
    .unwrap();
    (
        noisy.max_abs_error <= 0.05 && clean.max_abs_error <= 1e-6,
        format!(
            "max |cos - target| {:.4} at 1000/class (<= 0.05), {:.2e} at noise 0 (<= 1e-6)",
            noisy.max_abs_error, clean.max_abs_error
        ),
    )
}

fn ablation(r: &PipelineReport, elapsed: Duration) -> (bool, String) {
    let a = &r.ablation;
    let get = |m: Mode| a.get(m).unwrap();
    let f1 = |x: &EvalReport| x.f1.unwrap_or(f64::NAN);
    let fpr = |x: &EvalReport| x.fpr.unwrap_or(f64::NAN);
    let (full, ng, rnd, orc) = (get(Mode::Full), get(Mode::NoGate), get(Mode::Random), get(Mode::OracleRouter));
    let base = &a.baseline;
    let gate_ok = fpr(ng) > 0.0 && fpr(ng) >= 3.0 * fpr(full);
    let rnd_ok = (f1(rnd) - f1(base)).abs() <= 0.05;
    let orc_ok = f1(orc) >= f1(full);
    let gain_ok = f1(full) > f1(base);
    let time_ok = elapsed < Duration::from_secs(120);
    (
        gate_ok && rnd_ok && orc_ok && gain_ok && time_ok,
        format!(
            "alpha={} tau={}: FPR no_gate {:.4} vs full {:.4} (>= 3x); F1 random {:.4} vs baseline {:.4} (+-0.05); F1 oracle_router {:.4} >= full {:.4}; full > baseline; pipeline {:.1}s (< 120s)",
            a.alpha,
            a.tau,
            fpr(ng),
            fpr(full),
            f1(rnd),
            f1(base),
            f1(orc),
            f1(full),
            elapsed.as_secs_f64()
        ),
    )
}

fn lazy_gap(r: &PipelineReport) -> (bool, String) {
    let g = &r.lazy_gap;
    let recall = g.baseline_recall.unwrap_or(f64::NAN);
    let gain = g.relative_f1_gain.unwrap_or(f64::NAN);
    (
        recall < 0.4 && g.min_probe_auc > 0.99 && gain >= 0.5,
        format!(
            "baseline recall {recall:.4} (< 0.4), probe AUC {:.4} (> 0.99), full F1 {:.4} vs baseline {:.4} at alpha={}: {:+.1}% (>= +50%)",
            g.min_probe_auc,
            g.steered_f1.unwrap_or(f64::NAN),
            g.baseline_f1.unwrap_or(f64::NAN),
            r.sweep.selected.alpha,
            gain * 100.0
        ),
    )
}

/// Independent counting oracle: one pass per field, no shared state.
fn brute_force(rows: &[SampleRow], mode: &str, alpha: Option<f64>, tau: Option<f64>) -> serde_json::Value {
    let count = |p: &dyn Fn(&SampleRow) -> bool| rows.iter().filter(|r| p(r)).count();
    let div = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
    let tp = count(&|r| r.label == 1 && r.flags.triggered);
    let fp = count(&|r| r.label == 0 && r.flags.triggered);
    let fn_ = count(&|r| r.label == 1 && !r.flags.triggered);
    let tn = count(&|r| r.label == 0 && !r.flags.triggered);
    let pos = count(&|r| r.label == 1);
    let neg = count(&|r| r.label == 0);
    let calls = count(&|r| r.flags.triggered);
    serde_json::json!({
        "mode": mode,
        "alpha": alpha,
        "tau": tau,
        "n": rows.len(),
        "counts": {"tp": tp, "fp": fp, "fn": fn_, "tn": tn},
        "precision": div(tp, tp + fp),
        "recall": div(tp, pos),
        "f1": div(2 * tp, 2 * tp + fp + fn_),
        "accuracy": if pos > 0 && neg > 0 { div(tp + tn, rows.len()) } else { None },
        "fpr": div(fp, neg),
        "call_count": calls,
        "format_acc": div(count(&|r| r.flags.triggered && r.flags.format_ok), calls),
        "tool_name_acc": div(
            count(&|r| r.flags.triggered && r.flags.tool_ok == Some(true)),
            count(&|r| r.flags.triggered && r.flags.tool_ok.is_some())
        ),
        "args_acc": div(count(&|r| r.flags.triggered && r.flags.args_ok), calls),
        "exec_precision": div(count(&|r| r.flags.triggered && r.flags.format_ok && r.flags.tool_ok == Some(true)), calls),
        "success_recall": div(count(&|r| r.label == 1 && r.flags.success), pos),
        "deltas": null,
        "samples": rows,
    })
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, p_pos: f64, p_trig: f64) -> Vec<SampleRow> {
    (0..n)
        .map(|i| {
            let label = u8::from(rng.gen_bool(p_pos));
            let triggered = rng.gen_bool(p_trig);
            let has_ref = label == 1 || rng.gen_bool(0.1);
            let (format_ok, tool_ok, args_ok) = if triggered {
                (rng.gen_bool(0.8), has_ref.then(|| rng.gen_bool(0.7)), rng.gen_bool(0.75))
            } else {
                (false, has_ref.then_some(false), false)
            };
            SampleRow {
                id: format!("r{i}"),
                domain: ["code", "math", "search", "translation"][i % 4].into(),
                label,
                reference_tool: has_ref.then(|| "calculator".into()),
                routed_domain: None,
                intent_p: None,
                gate: None,
                text: String::new(),
                flags: SampleFlags { triggered, format_ok, tool_ok, args_ok, success: format_ok && tool_ok == Some(true) },
            }
        })
        .collect()
}

fn metrics_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut mismatches = 0;
    let mut datasets = 0;
    let settings = [(0.5, 0.5), (0.3, 0.1), (0.9, 0.9), (0.0, 0.4), (1.0, 0.2), (0.5, 0.0), (0.5, 1.0)];
    for &(p_pos, p_trig) in &settings {
        for _ in 0..5 {
            let rows = random_rows(&mut rng, 1000, p_pos, p_trig);
            let want = brute_force(&rows, "full", Some(2.0), Some(0.6));
            let got = serde_json::to_value(compute_metrics(rows, "full", Some(2.0), Some(0.6)).unwrap()).unwrap();
            datasets += 1;
            if got != want {
                mismatches += 1;
            }
        }
    }
    (mismatches == 0, format!("{datasets} randomized sets of 1000 samples, {mismatches} reports differing from the counting oracle in any field"))
}

fn parser_corpus() -> (bool, String) {
    let schema = ToolSchema::default();
    let mut scored = Vec::new();
    for (domain, tool, text) in common::INJECTED {
        let outcome = parse_calls(text, &schema, domain);
        let flags = score_sample(&outcome, Some(tool));
        let one = |b: bool| if b { 1.0 } else { 0.0 };
        let all_calls = outcome.calls.iter().all(|c| c.format_valid && c.schema_valid && c.args_valid);
        scored.push((one(flags.format_ok && all_calls), one(flags.tool_ok == Some(true)), one(flags.args_ok && all_calls)));
    }
    let injected_ok = scored.iter().all(|&s| s == (1.0, 1.0, 1.0));
    let baselines_ok = common::BASELINES.iter().all(|t| !parse_calls(t, &schema, "math").triggered);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pieces: [&[u8]; 16] = [
        b"<functioncall>", b"</functioncall>", b"{", b"}", b"\"name\"", b":", b"\"calculator\"", b",",
        b"\"arguments\"", b"'", b"\\", b"\\u00e9", b"<|im_end|>", b"[", b"\xff\xfe", "\u{1F600}".as_bytes(),
    ];
    let mut aborts = 0;
    for case in 0..10_000 {
        let mut bytes = Vec::new();
        if case % 2 == 0 {
            let (_, _, base) = common::INJECTED[case % 5];
            bytes.extend_from_slice(base.as_bytes());
            for _ in 0..rng.gen_range(1..6) {
                let at = rng.gen_range(0..=bytes.len());
                match rng.gen_range(0..3) {
                    0 => bytes.truncate(at),
                    1 => bytes.splice(at..at, pieces[rng.gen_range(0..pieces.len())].iter().copied()).for_each(drop),
                    _ => {
                        if at < bytes.len() {
                            bytes[at] = rng.gen();
                        }
                    }
                }
            }
        } else {
            for _ in 0..rng.gen_range(0..40) {
                if rng.gen_bool(0.7) {
                    bytes.extend_from_slice(pieces[rng.gen_range(0..pieces.len())]);
                } else {
                    bytes.push(rng.gen());
                }
            }
        }
        let r = catch_unwind(|| {
            let outcome = parse_bytes(&bytes, &schema, "math");
            score_sample(&outcome, Some("calculator"))
        });
        if r.is_err() {
            aborts += 1;
        }
    }
    (
        injected_ok && baselines_ok && aborts == 0,
        format!(
            "injected (format, tool, args) = {scored:?}; {} untagged baselines untriggered: {baselines_ok}; fuzz 10000 cases, {aborts} aborts",
            common::BASELINES.len()
        ),
    )
}

fn bits(d: &SteerDecision<f32>) -> (String, i8, u32, Vec<u32>, Vec<u32>) {
    (
        d.routed_domain.clone(),
        d.gate,
        d.intent_p.to_bits(),
        d.mov.iter().map(|x| x.to_bits()).collect(),
        d.delta.iter().map(|x| x.to_bits()).collect(),
    )
}

fn asset_round_trip() -> (bool, String) {
    let cfg = WorldConfig { dim: 1536, ..WorldConfig::default() };
    let world = build_world(&cfg).unwrap();
    let data = world.sample_records(125, DEFAULT_PROPORTIONS).unwrap();
    let mut bundle: AssetBundle<f32> = train_bundle(&data, 1.0, &TrainConfig::default()).unwrap().bundle;
    bundle.alpha = 4.0;
    bundle.tau = 0.65;
    let inputs: Vec<(Vec<f32>, String)> = data.records().iter().map(|r| (lift(&r.hidden), r.domain.clone())).collect();
    assert_eq!(inputs.len(), 1000);
    let dir = tempfile::tempdir().unwrap();

    let f32_path = dir.path().join("bundle_f32.json");
    bundle.clone().with_precision(Precision::F32).save(&f32_path).unwrap();
    let loaded = AssetBundle::<f32>::load(&f32_path).unwrap();
    let mut identical = 0;
    for (i, (h, d)) in inputs.iter().enumerate() {
        let mode = Mode::ALL[i % Mode::ALL.len()];
        let a = bundle.decide(h, mode, Some(d), i as u64).unwrap();
        let b = loaded.decide(h, mode, Some(d), i as u64).unwrap();
        identical += usize::from(bits(&a) == bits(&b));
    }

    let f16_path = dir.path().join("bundle_f16.json");
    bundle.clone().with_precision(Precision::F16).save(&f16_path).unwrap();
    let size = std::fs::metadata(&f16_path).unwrap().len();
    let packed = AssetBundle::<f32>::load(&f16_path).unwrap();
    let mut agree = 0;
    let mut gates = BTreeMap::new();
    for (h, _) in &inputs {
        let a = bundle.decide(h, Mode::Full, None, 0).unwrap();
        let b = packed.decide(h, Mode::Full, None, 0).unwrap();
        *gates.entry(a.gate).or_insert(0) += 1;
        agree += usize::from(a.routed_domain == b.routed_domain && a.gate == b.gate);
    }
    let agreement = agree as f64 / inputs.len() as f64;
    (
        identical == inputs.len() && size <= 64 * 1024 && agreement >= 0.99,
        format!(
            "f32: {identical}/{} decisions bit-identical; f16 D=1536 x4 domains: {size} bytes (<= 65536), routing+gate agreement {agreement:.4} (>= 0.99), gates {gates:?}",
            inputs.len()
        ),
    )
}

fn determinism(first: &str) -> (bool, String) {
    let second = run_pipeline::<f32>(&PipelineConfig::default()).unwrap().to_json().unwrap();
    (first == second, format!("two seed-42 runs, {} report bytes, identical: {}", first.len(), first == second))
}

fn main() {
    let start = Instant::now();
    let report = run_pipeline::<f32>(&PipelineConfig::default());
    let elapsed = start.elapsed();
    let report = match report {
        Ok(r) => Some(r),
        Err(e) => {
            println!("pipeline failed: {e}");
            None
        }
    };
    let json = report.as_ref().map(|r| r.to_json().unwrap());
    let report = report.as_ref();
    let from_report = |f: fn(&PipelineReport) -> (bool, String)| move || report.map_or((false, "pipeline failed".into()), f);

    let outcomes = vec![
        check("H1 mirror (probe AUC, shuffle control)", h1),
        check("H2 mirror (delta-logit sign, symmetry, linearity)", from_report(h2)),
        check("H3 mirror (interference matrix)", h3),
        check("Ablation pattern", || report.map_or((false, "pipeline failed".into()), |r| ablation(r, elapsed))),
        check("Lazy-agent gap", from_report(lazy_gap)),
        check("Metrics oracle", metrics_oracle),
        check("Parser corpus and fuzz", parser_corpus),
        check("Asset round trip", asset_round_trip),
        check("Determinism", || json.as_deref().map_or((false, "pipeline failed".into()), determinism)),
    ];
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
