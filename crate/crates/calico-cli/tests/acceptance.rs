//! Release acceptance suite: every gate the project must clear, run
//! sequentially, printing exactly one PASS/FAIL line per gate.
//!
//! Run it alone with:
//!
//! ```text
//! cargo test -p calico-cli --test acceptance -- --nocapture
//! ```
//!
//! Gates 4-6 share one pipeline (corpus generation plus four training runs)
//! sized for a single desktop core; the whole suite stays within the budgets
//! asserted inside each gate.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use calico::autodiff::{ParamStore, Session};
use calico::concepts::{magnitude_frequency_rows, SimMode};
use calico::diagnostics::{fidelity_sweep, FidelitySettings};
use calico::executor::identity::{identity_exec_options, identity_store, override_showcase};
use calico::executor::{register_model, ExecOptions, Executor, ModelConfig};
use calico::opcal::{predict_weights, register_opcal, OpcalConfig};
use calico::perturb::{curve, PerturbReport, RemovalMode};
use calico::program::{Program, OP_TYPES};
use calico::stats::spearman;
use calico::synth::{concept_occurrences, generate, identity_replay, random_program, CorpusConfig};
use calico::train::{train, Dataset, TrainConfig};
use calico::vocab::{RelType, Vocabulary, NO, YES};

// Shared settings for the trained-trend gates (4-6). One seed fixes the
// corpus, the parameter init, and the batch order of every configuration.
const TREND_SEED: u64 = 42;
const TREND_QUESTIONS: usize = 20_000;
const TREND_SCENES: usize = 2_560;
const TREND_RHO: f64 = 0.8;
const TREND_NOISE: f64 = 0.2;
const TREND_LR: f64 = 0.03;
const TREND_EPOCHS: usize = 12;
const TREND_BATCH: usize = 64;

struct Outcome {
    line: String,
    passed: bool,
}

fn gate(results: &mut Vec<Outcome>, name: &str, f: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let detail = f();
    let secs = start.elapsed().as_secs_f64();
    let (passed, line) = match detail {
        Ok(d) => (true, format!("PASS {name} [{secs:.1}s] {d}")),
        Err(e) => (false, format!("FAIL {name} [{secs:.1}s] {e}")),
    };
    println!("{line}");
    results.push(Outcome { line, passed });
}

fn fmt_pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

// ---------------------------------------------------------------------------
// Gate 1: reverse-mode gradients vs central differences.
// ---------------------------------------------------------------------------

fn gate_gradient_fidelity() -> Result<String, String> {
    let start = Instant::now();
    let report = fidelity_sweep(&FidelitySettings::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if report.cases.len() != OP_TYPES.len() + 1 {
        return Err(format!(
            "expected one case per operation plus a combined case, got {}",
            report.cases.len()
        ));
    }
    if report.max_rel_err >= 1e-4 {
        let worst = report
            .cases
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
            .unwrap();
        return Err(format!(
            "max rel err {:.3e} in case `{}` (limit 1e-4)",
            report.max_rel_err, worst.label
        ));
    }
    if secs >= 60.0 {
        return Err(format!("sweep took {secs:.1}s (limit 60s)"));
    }
    Ok(format!(
        "19 cases (18 ops + combined), max rel err {:.2e}",
        report.max_rel_err
    ))
}

// ---------------------------------------------------------------------------
// Gate 2: executor matches the symbolic oracle under the identity setup.
// ---------------------------------------------------------------------------

fn gate_oracle_equivalence() -> Result<String, String> {
    let start = Instant::now();
    let cfg = CorpusConfig {
        n_questions: 2_000,
        n_scenes: 256,
        feature_noise_std: 0.0,
        seed: 2_024,
        ..CorpusConfig::default()
    };
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;

    let mut missing: Vec<&str> = Vec::new();
    for op in OP_TYPES {
        if corpus.stats.op_counts.get(op.name()).copied().unwrap_or(0) == 0 {
            missing.push(op.name());
        }
    }
    if !missing.is_empty() {
        return Err(format!("generated questions never use: {}", missing.join(", ")));
    }

    let store = identity_store(&corpus.vocab).map_err(|e| e.to_string())?;
    let data =
        Dataset::from_parts(corpus.scenes, corpus.questions).map_err(|e| e.to_string())?;
    let mut matches = 0usize;
    for ex in &data.examples {
        let answer = identity_replay(&store, &corpus.vocab, &data.scenes[ex.scene], &ex.program)
            .map_err(|e| format!("{}: {e}", ex.qid))?;
        if answer == ex.answer {
            matches += 1;
        }
    }
    let frac = matches as f64 / data.examples.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    if frac < 0.99 {
        return Err(format!(
            "executor matched the oracle on {} of {} questions ({})",
            matches,
            data.examples.len(),
            fmt_pct(frac)
        ));
    }
    if secs >= 120.0 {
        return Err(format!("equivalence run took {secs:.1}s (limit 120s)"));
    }
    Ok(format!(
        "{} of {} answers match ({}), all 18 operations covered",
        matches,
        data.examples.len(),
        fmt_pct(frac)
    ))
}

// ---------------------------------------------------------------------------
// Gate 3: over-confident select overrides a negated filter under equal-weight
// merging; doubling the filter branch restores the set-semantics answer.
// ---------------------------------------------------------------------------

fn gate_override_flip() -> Result<String, String> {
    let sc = override_showcase().map_err(|e| e.to_string())?;
    let session = Session::new(&sc.store);
    let executor =
        Executor::new(&session, &sc.vocab, &sc.scene, sc.options.clone()).map_err(|e| e.to_string())?;

    let merged = executor
        .execute(&sc.program, None, None)
        .map_err(|e| e.to_string())?;
    let merged_score = merged.trace[0].output[0];
    if merged.answer != YES || merged_score != 0.0625 {
        return Err(format!(
            "equal-weight merge gave `{}` with score {merged_score} (expected `yes` at exactly 0.0625)",
            merged.answer
        ));
    }

    let scales = BTreeMap::from([(sc.filter_node, 2.0)]);
    let boosted = executor
        .execute(&sc.program, None, Some(&scales))
        .map_err(|e| e.to_string())?;
    let boosted_score = boosted.trace[0].output[0];
    if boosted.answer != NO || boosted_score != -0.0625 {
        return Err(format!(
            "doubled filter branch gave `{}` with score {boosted_score} (expected `no` at exactly -0.0625)",
            boosted.answer
        ));
    }
    Ok("merge says yes at +0.0625; filter x2 says no at -0.0625 (both exact)".to_string())
}

// ---------------------------------------------------------------------------
// Gates 4-6 share one pipeline: a Zipf-skewed, over-specified, noisy corpus
// and four training runs differing only in similarity mode and merge rule.
// ---------------------------------------------------------------------------

struct TrendRun {
    label: &'static str,
    accuracy: f64,
}

struct TrendPipeline {
    vocab: Vocabulary,
    eval_data: Dataset,
    train_counts: BTreeMap<usize, usize>,
    runs: Vec<TrendRun>,
    calibrated_store: ParamStore,
    total_secs: f64,
}

fn split_tenth(data: Dataset) -> (Dataset, Dataset) {
    let (mut train_ex, mut eval_ex) = (Vec::new(), Vec::new());
    for (i, ex) in data.examples.into_iter().enumerate() {
        if i % 10 == 0 {
            eval_ex.push(ex);
        } else {
            train_ex.push(ex);
        }
    }
    (
        Dataset {
            scenes: data.scenes.clone(),
            examples: train_ex,
        },
        Dataset {
            scenes: data.scenes,
            examples: eval_ex,
        },
    )
}

fn build_trend_pipeline() -> Result<TrendPipeline, String> {
    let start = Instant::now();
    let cfg = CorpusConfig {
        zipf_s: 1.0,
        n_questions: TREND_QUESTIONS,
        n_scenes: TREND_SCENES,
        rho: TREND_RHO,
        feature_noise_std: TREND_NOISE,
        seed: TREND_SEED,
        ..CorpusConfig::default()
    };
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;
    let vocab = corpus.vocab;
    let data = Dataset::from_parts(corpus.scenes, corpus.questions).map_err(|e| e.to_string())?;
    let (train_data, eval_data) = split_tenth(data);
    let train_counts = concept_occurrences(
        &train_data
            .examples
            .iter()
            .map(|ex| calico::program::Question {
                qid: ex.qid.clone(),
                program: ex.program.clone(),
                answer: ex.answer.clone(),
            })
            .collect::<Vec<_>>(),
    );

    let configs: [(&'static str, SimMode, bool); 4] = [
        ("calibrated+opcal", SimMode::Calibrated, true),
        ("unnormalized+opcal", SimMode::Unnormalized, true),
        ("normalized+opcal", SimMode::Normalized, true),
        ("normalized+mean", SimMode::Normalized, false),
    ];
    let mut runs = Vec::new();
    let mut calibrated_store = None;
    for (label, mode, opcal) in configs {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(TREND_SEED ^ 0x5eed_c0de);
        register_model(&mut store, &vocab, &ModelConfig::default(), &mut rng)
            .map_err(|e| e.to_string())?;
        register_opcal(&mut store, &vocab, &OpcalConfig::default(), &mut rng)
            .map_err(|e| e.to_string())?;
        let opts = ExecOptions {
            mode,
            temperature: Some(1.0),
            binary_threshold: 0.0,
        };
        let train_cfg = TrainConfig {
            lr: TREND_LR,
            epochs: TREND_EPOCHS,
            batch_size: TREND_BATCH,
            seed: TREND_SEED,
            ..TrainConfig::default()
        };
        let report = train(&mut store, &vocab, &train_data, &eval_data, &opts, opcal, &train_cfg)
            .map_err(|e| format!("{label}: {e}"))?;
        runs.push(TrendRun {
            label,
            accuracy: report.best_eval_accuracy,
        });
        if label == "calibrated+opcal" {
            calibrated_store = Some(store);
        }
    }

    Ok(TrendPipeline {
        vocab,
        eval_data,
        train_counts,
        runs,
        calibrated_store: calibrated_store.expect("calibrated config always runs"),
        total_secs: start.elapsed().as_secs_f64(),
    })
}

fn gate_mode_ordering(pipeline: &TrendPipeline) -> Result<String, String> {
    let acc: BTreeMap<&str, f64> = pipeline
        .runs
        .iter()
        .map(|r| (r.label, r.accuracy))
        .collect();
    let summary = pipeline
        .runs
        .iter()
        .map(|r| format!("{} {}", r.label, fmt_pct(r.accuracy)))
        .collect::<Vec<_>>()
        .join(", ");
    let order = [
        "calibrated+opcal",
        "unnormalized+opcal",
        "normalized+opcal",
        "normalized+mean",
    ];
    for pair in order.windows(2) {
        if acc[pair[0]] <= acc[pair[1]] {
            return Err(format!("{} !> {} ({summary})", pair[0], pair[1]));
        }
    }
    let margin = acc["calibrated+opcal"] - acc["normalized+mean"];
    if margin < 0.03 {
        return Err(format!(
            "calibrated+opcal leads the baseline by only {:.2} points ({summary})",
            100.0 * margin
        ));
    }
    if pipeline.total_secs >= 1_800.0 {
        return Err(format!(
            "pipeline took {:.0}s (limit 1800s)",
            pipeline.total_secs
        ));
    }
    Ok(format!(
        "{summary}; margin {:.2} points, pipeline {:.0}s",
        100.0 * margin,
        pipeline.total_secs
    ))
}

fn gate_frequency_magnitude_correlation(pipeline: &TrendPipeline) -> Result<String, String> {
    let rows = magnitude_frequency_rows(
        &pipeline.calibrated_store,
        &pipeline.vocab,
        &pipeline.train_counts,
    )
    .map_err(|e| e.to_string())?;
    let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let r = spearman(&xs, &ys).ok_or("correlation undefined (constant column)")?;
    if r <= 0.5 {
        return Err(format!(
            "spearman(log frequency, magnitude) = {r:.3} over {} concepts (need > 0.5)",
            rows.len()
        ));
    }
    Ok(format!(
        "spearman(log frequency, magnitude) = {r:.3} over {} concepts",
        rows.len()
    ))
}

/// Thresholds for the pruning curve: -inf (prune nothing), +inf (prune every
/// removable operation), and five quantiles of the predicted logits over the
/// removable nodes of the evaluation set.
fn logit_quantile_thresholds(pipeline: &TrendPipeline) -> Result<Vec<f64>, String> {
    let mut logits = Vec::new();
    for ex in &pipeline.eval_data.examples {
        let session = Session::new(&pipeline.calibrated_store);
        let predicted = predict_weights(&session, &pipeline.vocab, &ex.program)
            .map_err(|e| e.to_string())?;
        let values = predicted.logit_values();
        for i in ex.program.removable_set() {
            logits.push(values[i]);
        }
    }
    if logits.is_empty() {
        return Err("evaluation set has no removable operations".to_string());
    }
    logits.sort_by(f64::total_cmp);
    let q = |f: f64| logits[((logits.len() - 1) as f64 * f).round() as usize];
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend([q(0.1), q(0.3), q(0.5), q(0.7), q(0.9)]);
    thresholds.push(f64::INFINITY);
    Ok(thresholds)
}

fn gate_perturbation_curve(pipeline: &TrendPipeline) -> Result<String, String> {
    let thresholds = logit_quantile_thresholds(pipeline)?;
    let opts = ExecOptions {
        mode: SimMode::Calibrated,
        temperature: Some(1.0),
        binary_threshold: 0.0,
    };
    let report: PerturbReport = curve(
        &pipeline.calibrated_store,
        &pipeline.vocab,
        &pipeline.eval_data,
        &thresholds,
        RemovalMode::SinglePass,
        &opts,
        true,
    )
    .map_err(|e| e.to_string())?;

    let acc: Vec<f64> = report.rows.iter().map(|r| r.accuracy).collect();
    let curve_str = acc.iter().map(|a| fmt_pct(*a)).collect::<Vec<_>>().join(" -> ");

    for i in 0..acc.len() {
        for j in i + 1..acc.len() {
            if acc[j] > acc[i] + 0.005 {
                return Err(format!(
                    "accuracy rises from {} to {} between thresholds {i} and {j} ({curve_str})",
                    fmt_pct(acc[i]),
                    fmt_pct(acc[j])
                ));
            }
        }
    }
    let n = acc.len();
    let top_drop = acc[n - 2] - acc[n - 1];
    let bottom_drop = acc[0] - acc[1];
    if top_drop <= bottom_drop {
        return Err(format!(
            "final-step drop {:.2}pts is not larger than first-step drop {:.2}pts ({curve_str})",
            100.0 * top_drop,
            100.0 * bottom_drop
        ));
    }
    let first_drop = report.baseline_accuracy - acc[1];
    if first_drop > 0.03 {
        return Err(format!(
            "lowest nontrivial threshold already loses {:.2}pts (limit 3) ({curve_str})",
            100.0 * first_drop
        ));
    }
    Ok(format!(
        "{curve_str}; first-step loss {:.2}pts, final step {:.2}pts vs first {:.2}pts",
        100.0 * first_drop,
        100.0 * top_drop,
        100.0 * bottom_drop
    ))
}

// ---------------------------------------------------------------------------
// Gate 7: exact aggregation identities and the parser roundtrip.
// ---------------------------------------------------------------------------

fn gate_exact_identities() -> Result<String, String> {
    let cfg = CorpusConfig {
        n_questions: 10,
        n_scenes: 8,
        feature_noise_std: 0.0,
        seed: 7,
        ..CorpusConfig::default()
    };
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;
    let vocab = &corpus.vocab;
    let scene = &corpus.scenes[0];
    let store = identity_store(vocab).map_err(|e| e.to_string())?;
    let session = Session::new(&store);
    let executor = Executor::new(&session, vocab, scene, identity_exec_options())
        .map_err(|e| e.to_string())?;
    let run = |text: &str| {
        let program = Program::parse(text, vocab).map_err(|e| e.to_string())?;
        executor.execute(&program, None, None).map_err(|e| e.to_string())
    };
    let names = vocab.candidates(vocab.attr_id("name").map_err(|e| e.to_string())?);
    let name = |i: usize| vocab.concept_name(names[i % names.len()]).to_string();
    let rels = vocab.relation_candidates(RelType::Spatial);
    let rel = vocab.concept_name(rels[0]).to_string();

    // exist is exactly the max of its dependency's distribution.
    let exist = run(&format!("exist(select[name]({}))", name(0)))?;
    let max_dep = exist.trace[1]
        .output
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if exist.trace[0].output[0].to_bits() != max_dep.to_bits() {
        return Err(format!(
            "exist score {} != max of dependency {max_dep}",
            exist.trace[0].output[0]
        ));
    }

    // intersect is exactly min, union exactly max, of the branch scores.
    let two = format!(
        "(exist(select[name]({})), exist(select[name]({})))",
        name(0),
        name(1)
    );
    let inter = run(&format!("intersect{two}"))?;
    let (b1, b2) = (inter.trace[1].output[0], inter.trace[3].output[0]);
    if inter.trace[0].output[0].to_bits() != b1.min(b2).to_bits() {
        return Err(format!(
            "intersect score {} != min({b1}, {b2})",
            inter.trace[0].output[0]
        ));
    }
    let uni = run(&format!("union{two}"))?;
    let (b1, b2) = (uni.trace[1].output[0], uni.trace[3].output[0]);
    if uni.trace[0].output[0].to_bits() != b1.max(b2).to_bits() {
        return Err(format!("union score {} != max({b1}, {b2})", uni.trace[0].output[0]));
    }

    // The object-side relationship readouts are the subject-side readouts
    // with swapped dependencies: identical candidate scores, bitwise.
    let q_o = run(&format!(
        "query_rel_o[spatial](select[name]({}), select[name]({}))",
        name(0),
        name(1)
    ))?;
    let q_s = run(&format!(
        "query_rel_s[spatial](select[name]({}), select[name]({}))",
        name(1),
        name(0)
    ))?;
    if q_o.trace[0].output != q_s.trace[0].output || q_o.answer != q_s.answer {
        return Err("query_rel_o != query_rel_s with swapped dependencies".to_string());
    }
    let v_o = run(&format!(
        "verify_rel_o[spatial]({rel}; select[name]({}), select[name]({}))",
        name(0),
        name(1)
    ))?;
    let v_s = run(&format!(
        "verify_rel_s[spatial]({rel}; select[name]({}), select[name]({}))",
        name(1),
        name(0)
    ))?;
    if v_o.trace[0].output != v_s.trace[0].output || v_o.answer != v_s.answer {
        return Err("verify_rel_o != verify_rel_s with swapped dependencies".to_string());
    }

    // Serialization roundtrip on 1,000 random programs.
    let mut rng = ChaCha8Rng::seed_from_u64(2_718);
    for i in 0..1_000 {
        let program = random_program(vocab, &mut rng);
        let text = program.serialize(vocab);
        let back = Program::parse(&text, vocab)
            .map_err(|e| format!("roundtrip {i} failed to parse `{text}`: {e}"))?;
        if back != program {
            return Err(format!("roundtrip {i} changed the program `{text}`"));
        }
        if back.serialize(vocab) != text {
            return Err(format!("roundtrip {i} changed the text `{text}`"));
        }
    }
    Ok("exist=max, intersect=min, union=max, swapped-side readouts identical, 1000 roundtrips exact"
        .to_string())
}

// ---------------------------------------------------------------------------
// Gate 8: the command-line interface is bit-deterministic under a fixed seed.
// ---------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_calico"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`calico {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

/// Byte-compare `name` under two run directories.
fn same_bytes(dir: &Path, a: &str, b: &str, name: &str) -> Result<(), String> {
    let read = |run: &str| {
        std::fs::read(dir.join(run).join(name))
            .map_err(|e| format!("missing {run}/{name}: {e}"))
    };
    if read(a)? != read(b)? {
        return Err(format!("{a}/{name} and {b}/{name} differ"));
    }
    Ok(())
}

fn gate_cli_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let mut compared = 0usize;

    let gen_args = [
        "gen-data", "--questions", "160", "--scenes", "48", "--zipf-s", "1.0", "--rho", "0.6",
        "--noise", "0.1", "--seed", "5",
    ];
    for run in ["g1", "g2"] {
        run_cli(dir, &[&gen_args[..], &["--out", run]].concat())?;
    }
    for name in ["vocab.json", "gold.jsonl", "scenes.jsonl", "questions.jsonl", "stats.json"] {
        same_bytes(dir, "g1", "g2", name)?;
        compared += 1;
    }

    let train_args = [
        "train", "--data", "g1", "--epochs", "2", "--seed", "9", "--embed-dim", "16",
        "--map-hidden", "24", "--pair-hidden", "24", "--opcal-hidden", "12",
    ];
    for run in ["tr1", "tr2"] {
        run_cli(dir, &[&train_args[..], &["--out", run]].concat())?;
    }
    for name in ["checkpoint.json", "report.json", "metrics.jsonl"] {
        same_bytes(dir, "tr1", "tr2", name)?;
        compared += 1;
    }

    let eval_args = ["eval", "--data", "g1", "--checkpoint", "tr1/checkpoint.json", "--seed", "3"];
    for run in ["ev1", "ev2"] {
        run_cli(dir, &[&eval_args[..], &["--out", run]].concat())?;
    }
    same_bytes(dir, "ev1", "ev2", "eval.json")?;
    compared += 1;

    let vocab = Vocabulary::load(&dir.join("g1/vocab.json")).map_err(|e| e.to_string())?;
    let names = vocab.candidates(vocab.attr_id("name").map_err(|e| e.to_string())?);
    let program = format!("exist(select[name]({}))", vocab.concept_name(names[0]));
    let exec_args = [
        "exec", "--program", program.as_str(), "--scene", "g1/scenes.jsonl", "--vocab",
        "g1/vocab.json", "--trace", "--seed", "1",
    ];
    for run in ["ex1", "ex2"] {
        run_cli(dir, &[&exec_args[..], &["--out", run]].concat())?;
    }
    same_bytes(dir, "ex1", "ex2", "exec.json")?;
    compared += 1;

    let perturb_args = [
        "perturb", "--data", "g1", "--checkpoint", "tr1/checkpoint.json", "--thresholds",
        "-inf,0,inf", "--limit", "80", "--seed", "2",
    ];
    for run in ["p1", "p2"] {
        run_cli(dir, &[&perturb_args[..], &["--out", run]].concat())?;
    }
    for name in ["curve.csv", "curve.json"] {
        same_bytes(dir, "p1", "p2", name)?;
        compared += 1;
    }

    let mag_args = ["analyze-magnitudes", "--checkpoint", "tr1/checkpoint.json", "--data", "g1"];
    for run in ["m1", "m2"] {
        run_cli(dir, &[&mag_args[..], &["--out", run]].concat())?;
    }
    same_bytes(dir, "m1", "m2", "magnitudes.csv")?;
    compared += 1;

    let weight_args = [
        "analyze-weights", "--checkpoint", "tr1/checkpoint.json", "--data", "g1", "--limit", "40",
    ];
    for run in ["w1", "w2"] {
        run_cli(dir, &[&weight_args[..], &["--out", run]].concat())?;
    }
    same_bytes(dir, "w1", "w2", "weights.csv")?;
    compared += 1;

    let grad_args = ["grad-check", "--max-components", "2", "--seed", "0"];
    for run in ["gc1", "gc2"] {
        run_cli(dir, &[&grad_args[..], &["--out", run]].concat())?;
    }
    same_bytes(dir, "gc1", "gc2", "gradcheck.json")?;
    compared += 1;

    Ok(format!(
        "8 commands run twice each; {compared} metric files bit-identical"
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut results = Vec::new();

    gate(&mut results, "gradient-fidelity", gate_gradient_fidelity);
    gate(&mut results, "oracle-equivalence", gate_oracle_equivalence);
    gate(&mut results, "override-flip", gate_override_flip);

    match build_trend_pipeline() {
        Ok(pipeline) => {
            gate(&mut results, "mode-ordering", || gate_mode_ordering(&pipeline));
            gate(&mut results, "frequency-magnitude-correlation", || {
                gate_frequency_magnitude_correlation(&pipeline)
            });
            gate(&mut results, "perturbation-curve-shape", || {
                gate_perturbation_curve(&pipeline)
            });
        }
        Err(e) => {
            let e = &e;
            gate(&mut results, "mode-ordering", || Err(format!("pipeline failed: {e}")));
            gate(&mut results, "frequency-magnitude-correlation", || {
                Err(format!("pipeline failed: {e}"))
            });
            gate(&mut results, "perturbation-curve-shape", || {
                Err(format!("pipeline failed: {e}"))
            });
        }
    }

    gate(&mut results, "exact-identities-and-roundtrip", gate_exact_identities);
    gate(&mut results, "cli-determinism", gate_cli_determinism);

    let failures: Vec<&str> = results
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.line.as_str())
        .collect();
    assert!(
        failures.is_empty(),
        "{} of {} acceptance gates failed:\n{}",
        failures.len(),
        results.len(),
        failures.join("\n")
    );
}
