//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero when any criterion fails.
//!
//! Run with `cargo test -p beac --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use beac::pipeline::{self, Preset, Splits};
use beac_core::data::{EmotionLabel, FeatureSequence};
use beac_core::metrics::THRESHOLDS;
use beac_core::model::{Model, Variant};
use beac_core::optim::{Adam, AdamConfig};
use beac_core::span::{alpha_from_span, sample_segment, span_from_alpha};
use beac_core::summarize::{dp_summarize, uniform_baseline, SummarizationConfig};
use beac_core::train::{self, Branch, TrainConfig};
use beac_core::Tensor;
use rand::Rng as _;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { name, passed, detail }
}

fn preset(name: &str) -> Preset {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
    serde_json::from_slice(&std::fs::read(&p).expect("preset readable")).expect("preset parses")
}

fn gradient_integrity() -> Outcome {
    let t = Instant::now();
    let (mut checks, mut failed, mut worst) = (0, 0, 0.0f64);
    for seed in 0..20 {
        match beac_core::gradsuite::run(seed) {
            Ok(ops) => {
                for op in ops {
                    checks += 1;
                    failed += usize::from(!op.passed());
                    worst = worst.max(op.report.max_rel_error);
                }
            }
            Err(e) => return outcome("gradient integrity", false, format!("seed {seed}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        "gradient integrity",
        failed == 0 && worst < 1e-4 && secs < 60.0,
        format!("{checks} checks over 20 seeds, {failed} failed, max rel error {worst:.2e}, {secs:.1}s"),
    )
}

fn transform_round_trip() -> Outcome {
    let mut rng = beac_core::rng_from_seed(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(2..500usize);
        let mf = m as f64;
        let t_s = rng.random_range(0.0..mf - 1e-3);
        let t_e = rng.random_range(t_s + 1e-6..=mf);
        let (s2, e2) = match alpha_from_span(t_s, t_e, m) {
            Ok(a) => span_from_alpha(a, m),
            Err(e) => return outcome("transform round trip", false, format!("({t_s}, {t_e}, {m}): {e}")),
        };
        worst = worst.max((s2 - t_s).abs()).max((e2 - t_e).abs());
    }
    let mut mismatches = 0;
    for trial in 0..200u64 {
        let m = rng.random_range(3..60usize);
        let l = rng.random_range(3..=m.min(20));
        let t_s = rng.random_range(1..=m - l + 1);
        let frames = Tensor::<f64>::randn(&[m, 7], 1.0, &mut beac_core::rng_from_seed(trial));
        let a = alpha_from_span(t_s as f64, (t_s + l - 1) as f64, m).expect("valid span");
        let seg = sample_segment(&frames, a, l).expect("sampling");
        let want = &frames.data()[(t_s - 1) * 7..(t_s + l - 1) * 7];
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        mismatches += usize::from(bits(seg.data()) != bits(want));
    }
    outcome(
        "transform round trip",
        worst <= 1e-9 && mismatches == 0,
        format!("1000 triples, max error {worst:.1e}; 200 aligned samplings, {mismatches} not bit-exact"),
    )
}

fn dp_oracle() -> Outcome {
    let t = Instant::now();
    let trials = beac_core::summarize::oracle_trials(200, 1);
    let secs = t.elapsed().as_secs_f64();
    let agree = trials.iter().filter(|t| t.agree).count();
    let feasible = trials.iter().filter(|t| t.cost.is_some()).count();
    outcome(
        "dp oracle equivalence",
        agree == trials.len() && secs < 30.0,
        format!("{agree}/200 agree ({feasible} feasible), {secs:.2}s"),
    )
}

struct Trained {
    splits: Splits,
    runs: Vec<pipeline::Run>,
    secs: f64,
}

fn train_standard(workers: usize) -> Result<Trained, String> {
    let p = preset("standard.json");
    let splits = pipeline::preset_splits(&p).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let runs = pipeline::train_runs(&splits.train, &splits.val, &p.train, workers).map_err(|e| e.to_string())?;
    Ok(Trained {
        splits,
        runs,
        secs: t.elapsed().as_secs_f64(),
    })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn accuracy_and_attribution(t: &Trained, workers: usize) -> [Outcome; 2] {
    let mut accs = Vec::new();
    let mut maps = Vec::new();
    let mut monotone = true;
    for run in &t.runs {
        let (report, _) = pipeline::evaluate(&run.model, &t.splits.test, &THRESHOLDS, workers).expect("evaluation");
        accs.push(report.accuracy);
        let curve = report.map_curve.as_ref().expect("full model reports mAP");
        monotone &= curve.map.windows(2).all(|w| w[1] <= w[0]);
        maps.push(report.map_at(0.5).unwrap_or(0.0));
    }
    let acc = train::mean(&accs);
    let map = train::mean(&maps);
    [
        outcome(
            "recognition accuracy",
            acc >= 0.95 && t.secs < 600.0,
            format!(
                "mean test accuracy {acc:.3} over {} seeds [{}], training {:.0}s",
                accs.len(),
                fmt_list(&accs),
                t.secs
            ),
        ),
        outcome(
            "attribution quality",
            map >= 0.80 && monotone,
            format!("mean mAP@0.5 {map:.3} [{}], curves non-increasing: {monotone}", fmt_list(&maps)),
        ),
    ]
}

fn gate_routing() -> Outcome {
    let name = "gate routing";
    let (classes, dim, m) = (6, 16, 30);
    let cfg = TrainConfig {
        anet_hidden: 32,
        ..TrainConfig::default()
    };
    let mut rng = beac_core::rng_from_seed(5);
    let base = Model::<f32>::init(cfg.model_config(classes, dim, m), &mut rng).expect("model");
    let batch = |span: (usize, usize), rng: &mut beac_core::Rng| -> Vec<FeatureSequence<f32>> {
        (0..4)
            .map(|i| {
                let frames = Tensor::<f32>::randn(&[m, dim], 1.0, rng);
                FeatureSequence::new(format!("v{i}"), frames, EmotionLabel(i % classes), Some(span)).expect("sequence")
            })
            .collect()
    };
    let bits = |model: &Model<f32>, ids: &[beac_core::params::ParamId]| -> Vec<Vec<u32>> {
        ids.iter()
            .map(|&id| model.params().get(id).data().iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, span, want) in [("open", (8, 22), Branch::Classification), ("closed", (1, 4), Branch::Attribution)] {
        let seqs = batch(span, &mut rng);
        let refs: Vec<&FeatureSequence<f32>> = seqs.iter().collect();
        let mut model = base.clone();
        let mut adam = Adam::new(model.params(), AdamConfig::default());
        let (a_ids, c_ids) = (model.anet_param_ids(), model.cnet_param_ids());
        let (a0, c0) = (bits(&model, &a_ids), bits(&model, &c_ids));
        let out = match train::train_step(&mut model, &mut adam, &refs, cfg.beta, &mut rng) {
            Ok(o) => o,
            Err(e) => return outcome(name, false, format!("{label} batch: {e}")),
        };
        let routed = out.examples.iter().filter(|e| e.branch == want).count();
        let (a1, c1) = (bits(&model, &a_ids), bits(&model, &c_ids));
        let (a_same, c_same) = (a0 == a1, c0 == c1);
        let (active_changed, inactive_same) = match want {
            Branch::Classification => (!c_same, a_same),
            Branch::Attribution => (!a_same, c_same),
        };
        ok &= routed == refs.len() && active_changed && inactive_same;
        notes.push(format!(
            "{label}: {routed}/{} gated as expected, active net changed {active_changed}, inactive net bit-identical {inactive_same}",
            refs.len()
        ));
    }
    outcome(name, ok, notes.join("; "))
}

fn ablation_ordering(workers: usize) -> Outcome {
    let p = preset("sparse.json");
    let splits = match pipeline::preset_splits(&p) {
        Ok(s) => s,
        Err(e) => return outcome("ablation ordering", false, e.to_string()),
    };
    let mut means = BTreeMap::new();
    let mut lists = Vec::new();
    for variant in [Variant::Full, Variant::CStream] {
        let cfg = TrainConfig {
            variant,
            ..p.train.clone()
        };
        let runs = match pipeline::train_runs(&splits.train, &splits.val, &cfg, workers) {
            Ok(r) => r,
            Err(e) => return outcome("ablation ordering", false, format!("{}: {e}", variant.as_str())),
        };
        let accs: Vec<f64> = runs
            .iter()
            .map(|r| pipeline::evaluate(&r.model, &splits.test, &THRESHOLDS, workers).expect("evaluation").0.accuracy)
            .collect();
        lists.push(format!("{} [{}]", variant.as_str(), fmt_list(&accs)));
        means.insert(variant.as_str(), train::mean(&accs));
    }
    let (full, cs) = (means["full"], means["c_stream"]);
    outcome(
        "ablation ordering",
        full >= cs,
        format!("full {full:.3} vs c_stream {cs:.3}; {}", lists.join(", ")),
    )
}

fn inside(frames: &[usize], span: (usize, usize)) -> f64 {
    frames.iter().filter(|&&f| span.0 <= f && f <= span.1).count() as f64 / frames.len() as f64
}

fn summarization_coverage(t: &Trained) -> Outcome {
    let name = "summarization coverage";
    let model = &t.runs[0].model;
    let mut notes = Vec::new();
    let mut ok = true;
    for t_max in [3usize, 6] {
        let (mut dp, mut uni) = (Vec::new(), Vec::new());
        for seq in &t.splits.test {
            let m = seq.len();
            let Some(gt) = seq.span else { continue };
            let span = match model.predict(&seq.frames) {
                Ok(o) => o.span,
                Err(e) => return outcome(name, false, format!("{}: {e}", seq.id)),
            };
            let diameter = beac_core::summarize::segment_diameter(&seq.frames, 1, m);
            // loosest gap that still forces exactly `t_max` frames; the
            // uniform plan stays feasible
            let cfg = SummarizationConfig {
                k_max: (m - 1).div_ceil(t_max - 2) - 1,
                d_max: diameter + 1.0,
                t_max,
                span,
            };
            match dp_summarize(&seq.frames, &cfg) {
                Ok(plan) => dp.push(inside(&plan.frames, gt)),
                Err(e) => return outcome(name, false, format!("{} T={t_max}: {e}", seq.id)),
            }
            uni.push(inside(&uniform_baseline(m, t_max), gt));
        }
        let (d, u) = (train::mean(&dp), train::mean(&uni));
        ok &= dp.len() >= 50 && d >= u;
        notes.push(format!("T={t_max}: dp {d:.3} vs uniform {u:.3} over {} videos", dp.len()));
    }
    outcome(name, ok, notes.join("; "))
}

fn chance_level(splits: &Splits) -> Outcome {
    let p = preset("standard.json");
    let classes = splits.classes();
    let (m, d) = (splits.test[0].len(), splits.test[0].dim());
    let mut accs = Vec::new();
    for seed in 0..5 {
        let cfg = p.train.model_config(classes, d, m);
        let model = Model::<f32>::init(cfg, &mut beac_core::rng_from_seed(seed)).expect("model");
        let (report, _) = pipeline::evaluate(&model, &splits.test, &THRESHOLDS, 1).expect("evaluation");
        accs.push(report.accuracy);
    }
    let chance = 1.0 / classes as f64;
    let within = accs.iter().all(|a| (a - chance).abs() <= 0.05);
    let mean = train::mean(&accs);
    outcome(
        "chance level",
        within && (mean - chance).abs() <= 0.05,
        format!("untrained accuracy [{}], mean {mean:.3}, chance {chance:.3}", fmt_list(&accs)),
    )
}

fn beac(dir: &Path, workers: &str, args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_beac"))
        .args(args)
        .current_dir(dir)
        .env("BEAC_WORKERS", workers)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("under root").display().to_string();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

const SESSION: &[&[&str]] = &[
    &["gen-synth", "--per-class", "8", "--dim", "8", "--seed", "3", "--out", "data"],
    &["train", "--data", "data", "--epochs", "3", "--repeats", "2", "--seed", "4", "--out", "m.ckpt", "--log", "m.csv"],
    &["finetune", "--from", "m.ckpt", "--data", "data", "--fraction", "0.5", "--epochs", "2", "--seed", "1", "--out", "f.ckpt", "--log", "f.csv"],
    &["eval", "--model", "m.ckpt", "--data", "data/test.jsonl", "--out", "r.json", "--csv", "r.csv", "--preds", "p.csv"],
    &["classify", "--model", "m.ckpt", "--input", "data/test.jsonl", "--out", "cls.csv"],
    &["attribute", "--model", "m.ckpt", "--input", "data/test.jsonl", "--out", "spans.jsonl"],
    &["summarize", "--input", "data/features/syn-c1-0003.fseq", "--model", "m.ckpt", "--kmax", "8", "--dmax", "1000", "--tmax", "6", "--out", "dp.json"],
    &["summarize", "--input", "data/features/syn-c1-0003.fseq", "--span", "4,15", "--kmax", "8", "--dmax", "1000", "--tmax", "6", "--baseline", "uniform", "--out", "uniform.json"],
    &["summarize", "--input", "data/features/syn-c1-0003.fseq", "--span", "4,15", "--kmax", "8", "--dmax", "1000", "--tmax", "6", "--baseline", "score", "--out", "score.json"],
    &["baseline", "ite", "--data", "data", "--cfg", "b.json", "--seed", "2", "--out", "ite.json", "--csv", "ite.csv"],
    &["baseline", "framevote", "--data", "data", "--cfg", "b.json", "--out", "fv.json"],
    &["baseline", "attention", "--data", "data", "--cfg", "b.json", "--seed", "2", "--out", "att.json"],
    &["grad-check", "--seed", "3"],
    &["dp-oracle", "--trials", "50", "--seed", "9"],
];

fn session(workers: &str) -> Result<(tempfile::TempDir, BTreeMap<String, Vec<u8>>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("b.json"),
        r#"{"ite":{"clusters":8,"max_pool":200},"train":{"epochs":2}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut stdout = BTreeMap::new();
    for (i, args) in SESSION.iter().enumerate() {
        stdout.insert(format!("stdout {i:02} {}", args[0]), beac(dir.path(), workers, args)?);
    }
    let mut all = files(dir.path());
    all.extend(stdout);
    Ok((dir, all))
}

fn determinism() -> Outcome {
    let name = "determinism";
    let (a, b) = match (session("1"), session("3")) {
        (Ok((_da, a)), Ok((_db, b))) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(name, false, e),
    };
    let mut differing: Vec<&str> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.as_str())
        .collect();
    differing.extend(b.keys().filter(|k| !a.contains_key(*k)).map(String::as_str));
    outcome(
        name,
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts and outputs byte-identical across 1 and 3 workers", a.len())
        } else {
            format!("differing: {differing:?}")
        },
    )
}

fn main() {
    let workers = pipeline::default_workers();
    let mut results = vec![gradient_integrity(), transform_round_trip(), dp_oracle(), gate_routing()];
    match train_standard(workers) {
        Ok(t) => {
            results.extend(accuracy_and_attribution(&t, workers));
            results.push(summarization_coverage(&t));
            results.push(chance_level(&t.splits));
        }
        Err(e) => {
            for n in ["recognition accuracy", "attribution quality", "summarization coverage", "chance level"] {
                results.push(outcome(n, false, e.clone()));
            }
        }
    }
    results.push(ablation_ordering(workers));
    results.push(determinism());

    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
