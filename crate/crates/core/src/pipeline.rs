//! End-to-end evaluation run producing the named report files that the
//! `evaluate` command writes to its output directory.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::backend::Backend;
use crate::chain::ReasoningChain;
use crate::engine::{self, ScoringOptions, Variant};
use crate::evaluation::{
    self, fmt_f64, parse_classifier_table, parse_mul_table, EvalError, FullAccuracyTable, KirReport, PerStepAccuracy,
    StepScoreTable, Subset,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateConfig {
    pub variants: Vec<Variant>,
    pub scoring: ScoringOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub n_chains: usize,
    pub step_scores: Vec<StepScoreTable>,
    pub classification: BTreeMap<Subset, f64>,
    pub per_step_accuracy: PerStepAccuracy,
    pub kir: Option<KirReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutput {
    pub report: EvaluationReport,
    /// File name to contents. Every file is a pure function of the corpus
    /// and the backends' answers.
    pub files: BTreeMap<String, String>,
    /// Sections skipped for lack of data.
    pub notes: Vec<String>,
}

pub fn evaluate_corpus(
    chains: &[ReasoningChain],
    entailment: &dyn Backend,
    otd: &dyn Backend,
    cfg: &EvaluateConfig,
) -> Result<EvaluationOutput, EvalError> {
    if chains.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let parallelism = cfg.scoring.parallelism;
    let mut files = BTreeMap::new();
    let mut notes = Vec::new();

    let reports = engine::score_corpus(chains, entailment, &cfg.variants, cfg.scoring)?;
    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&serde_json::to_string(r).expect("reports serialize"));
        jsonl.push('\n');
    }
    files.insert("chain_scores.jsonl".to_string(), jsonl);

    let mut step_scores = Vec::new();
    for v in &cfg.variants {
        let table = StepScoreTable::from_reports(*v, &reports)?;
        files.insert(format!("step_scores_{v}.csv"), table.to_csv());
        step_scores.push(table);
    }

    let mut classification = BTreeMap::new();
    let mut cls = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    cls.write_record(["otd_model", "subset", "accuracy", "percent"])
        .expect("in-memory csv");
    for subset in Subset::ALL {
        match evaluation::classification_accuracy(chains, otd, subset, parallelism) {
            Ok(acc) => {
                cls.write_record([otd.name(), subset.as_str(), &fmt_f64(acc), &evaluation::percent(acc)])
                    .expect("in-memory csv");
                classification.insert(subset, acc);
            }
            Err(EvalError::EmptySubset(_)) => notes.push(format!("no {subset} statements; skipped")),
            Err(e) => return Err(e),
        }
    }
    files.insert(
        "classification.csv".to_string(),
        String::from_utf8(cls.into_inner().expect("in-memory csv")).expect("utf-8"),
    );

    let per_step_accuracy = evaluation::per_step_accuracy(chains, otd, parallelism)?;
    files.insert("per_step_accuracy.csv".to_string(), per_step_accuracy.to_csv());
    files.insert("per_step_trend.csv".to_string(), per_step_accuracy.trend_csv());

    let kir = match evaluation::kir_analysis(chains, otd, entailment, parallelism) {
        Ok(k) => {
            files.insert("kir_accuracy.csv".to_string(), k.accuracy_csv());
            files.insert("kir_entailment.csv".to_string(), k.entailment_csv());
            Some(k)
        }
        Err(EvalError::NoKirSites) => {
            notes.push("no KIR sites in corpus; KIR analysis skipped".to_string());
            None
        }
        Err(e) => return Err(e),
    };

    let report = EvaluationReport {
        n_chains: chains.len(),
        step_scores,
        classification,
        per_step_accuracy,
        kir,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    files.insert("report.json".to_string(), json);
    Ok(EvaluationOutput { report, files, notes })
}

/// Parse both input tables and combine them.
pub fn combine_tables(mul_csv: &str, classifier_csv: &str) -> Result<FullAccuracyTable, EvalError> {
    let mul = parse_mul_table(mul_csv)?;
    let classifiers = parse_classifier_table(classifier_csv)?;
    let explicit: Vec<(String, f64)> = classifiers.iter().map(|r| (r.otd_model.clone(), r.explicit)).collect();
    let implicit: Vec<(String, f64)> = classifiers.iter().map(|r| (r.otd_model.clone(), r.implicit)).collect();
    evaluation::combine_full_accuracy(&mul, &explicit, &implicit)
}
