//! Deletes removable operations (filters and relates) whose predicted weight
//! falls below a threshold, and measures how answer accuracy degrades as the
//! threshold rises. A program that survives heavy pruning with its answers
//! intact was over-specified; one that breaks early was load-bearing
//! throughout.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::autodiff::{ParamStore, Session};
use crate::error::{Error, Result};
use crate::executor::ExecOptions;
use crate::opcal::predict_weights;
use crate::program::Program;
use crate::train::{self, Dataset, Example};
use crate::vocab::Vocabulary;

/// How a threshold is applied to a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemovalMode {
    /// One pass: mark every removable node whose logit (predicted on the
    /// original program) lies below the threshold, then splice them all out.
    #[default]
    SinglePass,
    /// Re-predict logits after each removal pass and repeat until no node
    /// falls below the threshold (a fixpoint).
    Iterative,
}

/// One perturbed copy of an example set at a fixed threshold.
#[derive(Debug, Clone)]
pub struct PerturbedSet {
    pub threshold: f64,
    pub examples: Vec<Example>,
    /// Per example: original node indices no longer present (marked nodes
    /// plus anything inside a dropped relate subtree).
    pub removed: Vec<BTreeSet<usize>>,
    /// Removed removable nodes over all removable nodes in the input.
    pub frac_removed: f64,
    pub frac_questions_modified: f64,
}

/// Perturb one program: logits below `threshold` are spliced out. Returns the
/// rebuilt program and the set of original node indices that disappeared.
pub fn perturb_program(
    store: &ParamStore,
    vocab: &Vocabulary,
    program: &Program,
    threshold: f64,
    mode: RemovalMode,
) -> Result<(Program, BTreeSet<usize>)> {
    let mut current = program.clone();
    // Maps each current node index to its index in the original program.
    let mut to_original: Vec<usize> = (0..program.len()).collect();
    loop {
        let removable = current.removable_set();
        if removable.is_empty() {
            break;
        }
        let logits = {
            let session = Session::new(store);
            predict_weights(&session, vocab, &current)?.logit_values()
        };
        let marks: BTreeSet<usize> = removable
            .into_iter()
            .filter(|&i| logits[i] < threshold)
            .collect();
        if marks.is_empty() {
            break;
        }
        let (next, origin) = current.splice_out(&marks)?;
        to_original = origin.iter().map(|&o| to_original[o]).collect();
        current = next;
        if mode == RemovalMode::SinglePass {
            break;
        }
    }
    let surviving: BTreeSet<usize> = to_original.iter().copied().collect();
    let removed = (0..program.len())
        .filter(|i| !surviving.contains(i))
        .collect();
    Ok((current, removed))
}

/// Build one perturbed copy of `examples` per threshold. `-inf` leaves every
/// program unchanged; `+inf` removes every removable operation.
pub fn perturb_set(
    store: &ParamStore,
    vocab: &Vocabulary,
    examples: &[Example],
    thresholds: &[f64],
    mode: RemovalMode,
) -> Result<Vec<PerturbedSet>> {
    let removable_sets: Vec<BTreeSet<usize>> = examples
        .iter()
        .map(|e| e.program.removable_set().into_iter().collect())
        .collect();
    let total_removable: usize = removable_sets.iter().map(|s| s.len()).sum();

    thresholds
        .iter()
        .map(|&threshold| {
            let mut out = Vec::with_capacity(examples.len());
            let mut removed_sets = Vec::with_capacity(examples.len());
            let mut removed_removable = 0usize;
            let mut modified = 0usize;
            for (ex, removable) in examples.iter().zip(&removable_sets) {
                let (program, removed) =
                    perturb_program(store, vocab, &ex.program, threshold, mode)?;
                removed_removable += removed.intersection(removable).count();
                if !removed.is_empty() {
                    modified += 1;
                }
                out.push(Example {
                    qid: ex.qid.clone(),
                    program,
                    answer: ex.answer.clone(),
                    scene: ex.scene,
                });
                removed_sets.push(removed);
            }
            Ok(PerturbedSet {
                threshold,
                examples: out,
                removed: removed_sets,
                frac_removed: if total_removable == 0 {
                    0.0
                } else {
                    removed_removable as f64 / total_removable as f64
                },
                frac_questions_modified: if examples.is_empty() {
                    0.0
                } else {
                    modified as f64 / examples.len() as f64
                },
            })
        })
        .collect()
}

/// One report row per threshold.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbRow {
    pub threshold: f64,
    pub frac_removed: f64,
    pub frac_questions_modified: f64,
    pub accuracy: f64,
    /// Accuracy minus the unperturbed accuracy.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbReport {
    pub baseline_accuracy: f64,
    pub rows: Vec<PerturbRow>,
}

impl PerturbReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,frac_removed,frac_questions_modified,accuracy,delta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.threshold, r.frac_removed, r.frac_questions_modified, r.accuracy, r.delta
            ));
        }
        out
    }

    /// Plot-ready JSON; thresholds rendered as strings so `inf`/`-inf`
    /// survive the trip.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct JsonRow {
            threshold: String,
            frac_removed: f64,
            frac_questions_modified: f64,
            accuracy: f64,
            delta: f64,
        }
        #[derive(Serialize)]
        struct JsonReport {
            baseline_accuracy: f64,
            rows: Vec<JsonRow>,
        }
        let report = JsonReport {
            baseline_accuracy: self.baseline_accuracy,
            rows: self
                .rows
                .iter()
                .map(|r| JsonRow {
                    threshold: r.threshold.to_string(),
                    frac_removed: r.frac_removed,
                    frac_questions_modified: r.frac_questions_modified,
                    accuracy: r.accuracy,
                    delta: r.delta,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Config(format!("report serialization failed: {e}")))
    }
}

/// Accuracy at each threshold, evaluated with the same executor options as
/// the unperturbed baseline.
pub fn curve(
    store: &ParamStore,
    vocab: &Vocabulary,
    data: &Dataset,
    thresholds: &[f64],
    mode: RemovalMode,
    opts: &ExecOptions,
    opcal: bool,
) -> Result<PerturbReport> {
    let baseline = train::evaluate(store, vocab, data, opts, opcal)?.accuracy;
    let sets = perturb_set(store, vocab, &data.examples, thresholds, mode)?;
    let rows = sets
        .into_iter()
        .map(|set| {
            let eval_data = Dataset {
                scenes: data.scenes.clone(),
                examples: set.examples,
            };
            let eval = train::evaluate(store, vocab, &eval_data, opts, opcal)?;
            Ok(PerturbRow {
                threshold: set.threshold,
                frac_removed: set.frac_removed,
                frac_questions_modified: set.frac_questions_modified,
                accuracy: eval.accuracy,
                delta: eval.accuracy - baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbReport {
        baseline_accuracy: baseline,
        rows,
    })
}

/// Split a dataset into (easy, hard) by a per-example criterion; both halves
/// keep the full scene table so indices stay valid.
pub fn split_easy_hard<F>(data: &Dataset, mut is_easy: F) -> Result<(Dataset, Dataset)>
where
    F: FnMut(&Example) -> Result<bool>,
{
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    for ex in &data.examples {
        if is_easy(ex)? {
            easy.push(ex.clone());
        } else {
            hard.push(ex.clone());
        }
    }
    Ok((
        Dataset {
            scenes: data.scenes.clone(),
            examples: easy,
        },
        Dataset {
            scenes: data.scenes.clone(),
            examples: hard,
        },
    ))
}

/// The default easy/hard criterion: whether the plain-similarity baseline
/// (uncalibrated magnitudes, equal-weight merges) already answers correctly.
pub fn baseline_correct<'a>(
    store: &'a ParamStore,
    vocab: &'a Vocabulary,
    data: &'a Dataset,
    opts: &'a ExecOptions,
) -> impl FnMut(&Example) -> Result<bool> + 'a {
    move |ex: &Example| {
        let session = Session::new(store);
        let answer_vars =
            train::run_example(&session, vocab, ex, &data.scenes[ex.scene], opts, false)?;
        Ok(answer_vars.decode(opts.binary_threshold) == ex.answer)
    }
}
