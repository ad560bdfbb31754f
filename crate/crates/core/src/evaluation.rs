//! Corpus-level aggregation: subset and per-step classification accuracy,
//! KIR before/after analysis, per-length entailment tables, and the
//! combination of chain probabilities with explicit-text accuracy.
//!
//! Means are taken over values sorted by `f64::total_cmp`, so every
//! aggregate is independent of corpus order and of scheduling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{score_entailment, score_otd, Backend, BackendError};
use crate::chain::{kir_sites, ReasoningChain};
use crate::engine::{self, ChainScoreReport, EngineError, ScoringOptions, Variant};
use crate::exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no {0} statements in corpus")]
    EmptySubset(Subset),
    #[error("no KIR sites in corpus")]
    NoKirSites,
    #[error("{stage}: backend failed after {completed} of {total} items: {source}")]
    Backend {
        stage: &'static str,
        completed: usize,
        total: usize,
        source: BackendError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("missing {kind} {key:?}")]
    MissingKey { kind: &'static str, key: String },
    #[error("duplicate {kind} {key:?}")]
    DuplicateKey { kind: &'static str, key: String },
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: String, value: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

impl EvalError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            EvalError::Backend { source, .. } => Some(source),
            EvalError::Engine(e) => e.backend_error(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Implicit,
    Explicit,
    NonOffensive,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Implicit, Subset::Explicit, Subset::NonOffensive];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Implicit => "implicit",
            Subset::Explicit => "explicit",
            Subset::NonOffensive => "non_offensive",
        }
    }

    /// Ground-truth label of statements in this subset.
    pub fn is_offensive(self) -> bool {
        !matches!(self, Subset::NonOffensive)
    }

    fn text(self, chain: &ReasoningChain) -> &str {
        match self {
            Subset::Implicit => &chain.implicit,
            Subset::Explicit => &chain.explicit,
            Subset::NonOffensive => &chain.non_offensive,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Order-independent mean. `None` for no values.
pub fn stable_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

fn fraction(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

/// One-decimal percent, the form used in rendered tables.
pub fn percent(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

/// OTD decision for each text, in order.
fn classify(
    backend: &dyn Backend,
    texts: &[&str],
    parallelism: usize,
    stage: &'static str,
) -> Result<Vec<bool>, EvalError> {
    let indexed: Vec<(usize, &str)> = texts.iter().copied().enumerate().collect();
    exec::run_indexed(parallelism, &indexed, |&(i, text)| {
        score_otd(backend, text).map(|s| s.is_offensive()).map_err(|e| (i, e))
    })
    .map_err(|(i, source)| EvalError::Backend {
        stage,
        completed: i,
        total: texts.len(),
        source,
    })
}

fn entail(
    backend: &dyn Backend,
    pairs: &[(&str, &str)],
    parallelism: usize,
    stage: &'static str,
) -> Result<Vec<f64>, EvalError> {
    let indexed: Vec<(usize, (&str, &str))> = pairs.iter().copied().enumerate().collect();
    exec::run_indexed(parallelism, &indexed, |&(i, (p, h))| {
        score_entailment(backend, p, h)
            .map(|s| s.entailment)
            .map_err(|e| (i, e))
    })
    .map_err(|(i, source)| EvalError::Backend {
        stage,
        completed: i,
        total: pairs.len(),
        source,
    })
}

/// Fraction of the subset's statements whose OTD decision matches the
/// subset's label. Chains with an empty statement for the subset are skipped.
pub fn classification_accuracy(
    chains: &[ReasoningChain],
    backend: &dyn Backend,
    subset: Subset,
    parallelism: usize,
) -> Result<f64, EvalError> {
    if chains.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let texts: Vec<&str> = chains
        .iter()
        .map(|c| subset.text(c))
        .filter(|t| !t.trim().is_empty())
        .collect();
    if texts.is_empty() {
        return Err(EvalError::EmptySubset(subset));
    }
    let decisions = classify(backend, &texts, parallelism, "classification")?;
    let correct = decisions.iter().filter(|&&d| d == subset.is_offensive()).count();
    Ok(fraction(correct, texts.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthAccuracy {
    pub n_chains: usize,
    /// Accuracy at step positions `0..=L`.
    pub accuracy: Vec<f64>,
    /// Spearman correlation between step index and accuracy; `None` when
    /// accuracy is constant across steps.
    pub trend: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerStepAccuracy {
    pub groups: BTreeMap<usize, LengthAccuracy>,
}

/// Per length group and step position, the fraction of chains whose step is
/// classified offensive. Every step of a chain counts as offensive.
pub fn per_step_accuracy(
    chains: &[ReasoningChain],
    backend: &dyn Backend,
    parallelism: usize,
) -> Result<PerStepAccuracy, EvalError> {
    if chains.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let texts: Vec<&str> = chains.iter().flat_map(|c| c.statements()).collect();
    let decisions = classify(backend, &texts, parallelism, "per-step accuracy")?;

    let mut hits: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    let mut cursor = 0;
    for chain in chains {
        let n = chain.len() + 1;
        let entry = hits.entry(chain.len()).or_insert_with(|| (0, vec![0; n]));
        entry.0 += 1;
        for (slot, &d) in entry.1.iter_mut().zip(&decisions[cursor..cursor + n]) {
            *slot += usize::from(d);
        }
        cursor += n;
    }
    let groups = hits
        .into_iter()
        .map(|(len, (n_chains, counts))| {
            let accuracy: Vec<f64> = counts.iter().map(|&c| fraction(c, n_chains)).collect();
            let steps: Vec<f64> = (0..accuracy.len()).map(|i| i as f64).collect();
            let trend = spearman(&steps, &accuracy);
            (
                len,
                LengthAccuracy {
                    n_chains,
                    accuracy,
                    trend,
                },
            )
        })
        .collect();
    Ok(PerStepAccuracy { groups })
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` when either
/// side has no variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KirEntailmentRow {
    /// Sites contributing to `into_kir`.
    pub n_into: usize,
    /// Mean `E(s_{k-1} -> s_k)`.
    pub into_kir: f64,
    /// Sites with a following step (`k < L`).
    pub n_out: usize,
    /// Mean `E(s_k -> s_{k+1})`; `None` when every site is the final step.
    pub out_of_kir: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KirReport {
    pub otd_model: String,
    pub entailment_model: String,
    pub n_sites: usize,
    /// Accuracy over the `s_{k-1}` texts of every site.
    pub accuracy_before: f64,
    /// Accuracy over the `s_k` texts of every site.
    pub accuracy_after: f64,
    /// Keyed by chain length; lengths without sites are absent.
    pub entailment: BTreeMap<usize, KirEntailmentRow>,
}

pub fn kir_analysis(
    chains: &[ReasoningChain],
    otd: &dyn Backend,
    entailment: &dyn Backend,
    parallelism: usize,
) -> Result<KirReport, EvalError> {
    struct Site<'a> {
        len: usize,
        before: &'a str,
        at: &'a str,
        after: Option<&'a str>,
    }
    let mut sites = Vec::new();
    for chain in chains {
        for site in kir_sites(chain) {
            let stmt = |i| chain.statement(i).expect("KIR site index within chain");
            sites.push(Site {
                len: chain.len(),
                before: stmt(site.k - 1),
                at: stmt(site.k),
                after: chain.statement(site.k + 1),
            });
        }
    }
    if sites.is_empty() {
        return Err(EvalError::NoKirSites);
    }

    let before: Vec<&str> = sites.iter().map(|s| s.before).collect();
    let at: Vec<&str> = sites.iter().map(|s| s.at).collect();
    let before_hits = classify(otd, &before, parallelism, "KIR accuracy before")?
        .into_iter()
        .filter(|&d| d)
        .count();
    let after_hits = classify(otd, &at, parallelism, "KIR accuracy after")?
        .into_iter()
        .filter(|&d| d)
        .count();

    let into_pairs: Vec<(&str, &str)> = sites.iter().map(|s| (s.before, s.at)).collect();
    let into = entail(entailment, &into_pairs, parallelism, "KIR entailment into site")?;
    let out_sites: Vec<&Site> = sites.iter().filter(|s| s.after.is_some()).collect();
    let out_pairs: Vec<(&str, &str)> = out_sites.iter().map(|s| (s.at, s.after.unwrap_or_default())).collect();
    let out = entail(entailment, &out_pairs, parallelism, "KIR entailment out of site")?;

    let mut into_by_len: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (s, v) in sites.iter().zip(into) {
        into_by_len.entry(s.len).or_default().push(v);
    }
    let mut out_by_len: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (s, v) in out_sites.iter().zip(out) {
        out_by_len.entry(s.len).or_default().push(v);
    }
    let entailment_rows = into_by_len
        .into_iter()
        .map(|(len, vals)| {
            let outs = out_by_len.remove(&len).unwrap_or_default();
            let row = KirEntailmentRow {
                n_into: vals.len(),
                into_kir: stable_mean(&vals).unwrap_or_default(),
                n_out: outs.len(),
                out_of_kir: stable_mean(&outs),
            };
            (len, row)
        })
        .collect();

    Ok(KirReport {
        otd_model: otd.name().to_string(),
        entailment_model: entailment.name().to_string(),
        n_sites: sites.len(),
        accuracy_before: fraction(before_hits, sites.len()),
        accuracy_after: fraction(after_hits, sites.len()),
        entailment: entailment_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthScores {
    pub n_chains: usize,
    /// Mean `E(s_i -> s_{i+1})` for `i = 0..L`.
    pub transitions: Vec<f64>,
    pub mul: f64,
    pub direct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScoreTable {
    pub variant: Variant,
    pub groups: BTreeMap<usize, LengthScores>,
    pub n_chains: usize,
    /// Example-weighted mean over every chain.
    pub all_mul: f64,
    pub all_direct: f64,
}

impl StepScoreTable {
    /// Aggregate already-computed chain reports. Reports of other variants
    /// are ignored.
    pub fn from_reports(variant: Variant, reports: &[ChainScoreReport]) -> Result<Self, EvalError> {
        let reports: Vec<&ChainScoreReport> = reports.iter().filter(|r| r.variant == variant).collect();
        if reports.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let mut by_len: BTreeMap<usize, Vec<&ChainScoreReport>> = BTreeMap::new();
        for r in &reports {
            by_len.entry(r.transition_scores.len()).or_default().push(r);
        }
        let mean_of = |rs: &[&ChainScoreReport], f: &dyn Fn(&ChainScoreReport) -> f64| {
            stable_mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or_default()
        };
        let groups = by_len
            .into_iter()
            .map(|(len, rs)| {
                let transitions = (0..len).map(|i| mean_of(&rs, &|r| r.transition_scores[i])).collect();
                let row = LengthScores {
                    n_chains: rs.len(),
                    transitions,
                    mul: mean_of(&rs, &|r| r.mul),
                    direct: mean_of(&rs, &|r| r.direct),
                };
                (len, row)
            })
            .collect();
        Ok(StepScoreTable {
            variant,
            groups,
            n_chains: reports.len(),
            all_mul: mean_of(&reports, &|r| r.mul),
            all_direct: mean_of(&reports, &|r| r.direct),
        })
    }

    /// Long-format CSV: `variant,length,row,n_chains,score,percent`.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["variant", "length", "row", "n_chains", "score", "percent"])
            .expect("in-memory csv");
        let v = self.variant.as_str();
        for (len, g) in &self.groups {
            let (len, n) = (len.to_string(), g.n_chains.to_string());
            for (i, s) in g.transitions.iter().enumerate() {
                let row = format!("s{i}->s{}", i + 1);
                w.write_record([v, &len, &row, &n, &fmt_f64(*s), &percent(*s)])
                    .expect("in-memory csv");
            }
            w.write_record([v, &len, "mul", &n, &fmt_f64(g.mul), &percent(g.mul)])
                .expect("in-memory csv");
            w.write_record([v, &len, "direct", &n, &fmt_f64(g.direct), &percent(g.direct)])
                .expect("in-memory csv");
        }
        let n = self.n_chains.to_string();
        w.write_record([v, "ALL", "mul", &n, &fmt_f64(self.all_mul), &percent(self.all_mul)])
            .expect("in-memory csv");
        w.write_record([
            v,
            "ALL",
            "direct",
            &n,
            &fmt_f64(self.all_direct),
            &percent(self.all_direct),
        ])
        .expect("in-memory csv");
        finish(w)
    }
}

pub fn step_score_table(
    chains: &[ReasoningChain],
    backend: &dyn Backend,
    variant: Variant,
    opts: ScoringOptions,
) -> Result<StepScoreTable, EvalError> {
    if chains.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let reports = engine::score_corpus(chains, backend, &[variant], opts)?;
    StepScoreTable::from_reports(variant, &reports)
}

/// A reasoning column of the full-accuracy table: one entailment model
/// under one variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MulColumn {
    pub entailment_model: String,
    pub variant: Variant,
}

impl MulColumn {
    pub fn new(entailment_model: impl Into<String>, variant: Variant) -> Self {
        Self {
            entailment_model: entailment_model.into(),
            variant,
        }
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.variant, self.entailment_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullAccuracyRow {
    pub otd_model: String,
    pub implicit: f64,
    /// One cell per column, `mul * explicit`.
    pub cells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullAccuracyTable {
    pub columns: Vec<MulColumn>,
    pub rows: Vec<FullAccuracyRow>,
}

impl FullAccuracyTable {
    pub fn cell(&self, otd_model: &str, column: &MulColumn) -> Option<f64> {
        let c = self.columns.iter().position(|c| c == column)?;
        let row = self.rows.iter().find(|r| r.otd_model == otd_model)?;
        Some(row.cells[c])
    }

    /// Wide CSV: `otd_model,implicit,implicit_pct` then a value and percent
    /// column per reasoning column.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        let mut header = vec!["otd_model".to_string(), "implicit".into(), "implicit_pct".into()];
        for c in &self.columns {
            header.push(c.label());
            header.push(format!("{}_pct", c.label()));
        }
        w.write_record(&header).expect("in-memory csv");
        for r in &self.rows {
            let mut rec = vec![r.otd_model.clone(), fmt_f64(r.implicit), percent(r.implicit)];
            for &v in &r.cells {
                rec.push(fmt_f64(v));
                rec.push(percent(v));
            }
            w.write_record(&rec).expect("in-memory csv");
        }
        finish(w)
    }
}

fn check_unit(name: impl Into<String>, value: f64) -> Result<f64, EvalError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(EvalError::OutOfRange {
            name: name.into(),
            value,
        })
    }
}

/// Multiply every chain-probability column by every detector's explicit
/// accuracy. Rows follow the order of `explicit_acc`, columns the order of
/// `mul_means`. Every detector needs an entry in both accuracy lists.
pub fn combine_full_accuracy(
    mul_means: &[(MulColumn, f64)],
    explicit_acc: &[(String, f64)],
    implicit_acc: &[(String, f64)],
) -> Result<FullAccuracyTable, EvalError> {
    let mut seen = HashSet::new();
    for (c, v) in mul_means {
        if !seen.insert(c.clone()) {
            return Err(EvalError::DuplicateKey {
                kind: "column",
                key: c.label(),
            });
        }
        check_unit(format!("mul[{}]", c.label()), *v)?;
    }
    let index = |list: &[(String, f64)], kind: &'static str| -> Result<BTreeMap<String, f64>, EvalError> {
        let mut m = BTreeMap::new();
        for (k, v) in list {
            check_unit(format!("{kind}[{k}]"), *v)?;
            if m.insert(k.clone(), *v).is_some() {
                return Err(EvalError::DuplicateKey { kind, key: k.clone() });
            }
        }
        Ok(m)
    };
    let explicit = index(explicit_acc, "explicit accuracy")?;
    let implicit = index(implicit_acc, "implicit accuracy")?;
    if let Some(k) = implicit.keys().find(|k| !explicit.contains_key(*k)) {
        return Err(EvalError::MissingKey {
            kind: "explicit accuracy for model",
            key: k.clone(),
        });
    }
    let rows = explicit_acc
        .iter()
        .map(|(model, e)| {
            let implicit = *implicit.get(model).ok_or_else(|| EvalError::MissingKey {
                kind: "implicit accuracy for model",
                key: model.clone(),
            })?;
            Ok(FullAccuracyRow {
                otd_model: model.clone(),
                implicit,
                cells: mul_means.iter().map(|(_, m)| m * e).collect(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(FullAccuracyTable {
        columns: mul_means.iter().map(|(c, _)| c.clone()).collect(),
        rows,
    })
}

/// `entailment_model,variant,mul` rows.
pub fn parse_mul_table(csv_text: &str) -> Result<Vec<(MulColumn, f64)>, EvalError> {
    #[derive(Deserialize)]
    struct Row {
        entailment_model: String,
        variant: String,
        mul: f64,
    }
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(csv_text.as_bytes())
        .deserialize::<Row>()
        .enumerate()
    {
        let row = row.map_err(|e| EvalError::Csv(format!("mul table: {e}")))?;
        let variant = row
            .variant
            .parse()
            .map_err(|e| EvalError::Csv(format!("mul table row {}: {e}", i + 1)))?;
        out.push((MulColumn::new(row.entailment_model, variant), row.mul));
    }
    Ok(out)
}

/// Per detector: explicit and implicit accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRow {
    pub otd_model: String,
    pub implicit: f64,
    pub explicit: f64,
}

/// `otd_model,implicit,explicit` rows.
pub fn parse_classifier_table(csv_text: &str) -> Result<Vec<ClassifierRow>, EvalError> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<ClassifierRow>, _>>()
        .map_err(|e| EvalError::Csv(format!("classifier table: {e}")))
}

impl PerStepAccuracy {
    /// `length,step,n_chains,accuracy,percent`.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["length", "step", "n_chains", "accuracy", "percent"])
            .expect("in-memory csv");
        for (len, g) in &self.groups {
            for (step, a) in g.accuracy.iter().enumerate() {
                w.write_record([
                    len.to_string(),
                    step.to_string(),
                    g.n_chains.to_string(),
                    fmt_f64(*a),
                    percent(*a),
                ])
                .expect("in-memory csv");
            }
        }
        finish(w)
    }

    /// `length,n_chains,spearman` with an empty cell for undefined trends.
    pub fn trend_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["length", "n_chains", "spearman"])
            .expect("in-memory csv");
        for (len, g) in &self.groups {
            let t = g.trend.map(fmt_f64).unwrap_or_default();
            w.write_record([len.to_string(), g.n_chains.to_string(), t])
                .expect("in-memory csv");
        }
        finish(w)
    }
}

impl KirReport {
    /// `otd_model,position,n_sites,accuracy,percent`.
    pub fn accuracy_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["otd_model", "position", "n_sites", "accuracy", "percent"])
            .expect("in-memory csv");
        let n = self.n_sites.to_string();
        for (pos, a) in [("s_k-1", self.accuracy_before), ("s_k", self.accuracy_after)] {
            w.write_record([self.otd_model.as_str(), pos, &n, &fmt_f64(a), &percent(a)])
                .expect("in-memory csv");
        }
        finish(w)
    }

    /// `entailment_model,length,transition,n_sites,score,percent`; transitions
    /// without sites are omitted.
    pub fn entailment_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record([
            "entailment_model",
            "length",
            "transition",
            "n_sites",
            "score",
            "percent",
        ])
        .expect("in-memory csv");
        for (len, row) in &self.entailment {
            let len = len.to_string();
            let m = self.entailment_model.as_str();
            w.write_record([
                m,
                &len,
                "s_k-1->s_k",
                &row.n_into.to_string(),
                &fmt_f64(row.into_kir),
                &percent(row.into_kir),
            ])
            .expect("in-memory csv");
            if let Some(o) = row.out_of_kir {
                w.write_record([m, &len, "s_k->s_k+1", &row.n_out.to_string(), &fmt_f64(o), &percent(o)])
                    .expect("in-memory csv");
            }
        }
        finish(w)
    }
}

/// Shortest representation that round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}
