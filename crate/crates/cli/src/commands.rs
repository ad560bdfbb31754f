use std::fmt;
use std::fs;
use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use chain_reasoner::attributes::{self, Histogram};
use chain_reasoner::backend::{self, conformance, Backend, BackendError, BackendSpec, MockBackend};
use chain_reasoner::chain::Blocklist;
use chain_reasoner::dataset::{self, LoadOptions, LoadedCorpus};
use chain_reasoner::engine::{self, AugmentOptions, EngineError, ScoringOptions};
use chain_reasoner::evaluation::{percent, EvalError, MulColumn};
use chain_reasoner::manifest::RunManifest;
use chain_reasoner::pipeline::{self, EvaluateConfig};
use chain_reasoner::probe::{self, CoverageRule, ProbeError};
use chain_reasoner::{ReasoningChain, ValidationMode};

use crate::{
    CategorizeArgs, CombineArgs, Command, ConformanceArgs, EvaluateArgs, MockBackendArgs, MockModeArg, ProbeArgs,
    ScoreArgs, ValidateArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad input data or files.
    Input(String),
    /// A backend could not be reached or failed mid-run.
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Backend(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Backend(m) => f.write_str(m),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e.backend_error() {
            Some(_) => CliError::Backend(e.to_string()),
            None => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e.backend_error() {
            Some(_) => CliError::Backend(e.to_string()),
            None => CliError::Input(e.to_string()),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Backend { .. } => CliError::Backend(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_manifest(m: &RunManifest, path: &Path) -> Result<()> {
    m.write(path)
        .map_err(|e| CliError::Input(format!("cannot write manifest {}: {e}", path.display())))
}

fn manifest_for(command: &str, args: &[String], inputs: &[&Path]) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, args.to_vec());
    for p in inputs {
        m.add_input(p)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
    }
    Ok(m)
}

fn load_blocklist(path: Option<&PathBuf>) -> Result<Option<Blocklist>> {
    path.map(|p| read(p).map(|s| Blocklist::parse(&s))).transpose()
}

fn print_diagnostics(corpus: &LoadedCorpus) {
    for m in &corpus.malformed {
        eprintln!("line {}: malformed record: {}", m.line, m.message);
    }
    for r in &corpus.records {
        for v in &r.result.violations {
            let sev = match v.severity {
                chain_reasoner::chain::Severity::Error => "error",
                chain_reasoner::chain::Severity::Warning => "warning",
            };
            eprintln!("line {} [{}]: {sev} {}: {}", r.line, r.id, v.code.as_str(), v.message);
        }
    }
}

/// Load a corpus for scoring; any hard violation stops the run.
fn load_for_scoring(path: &Path, mode: ValidationMode) -> Result<Vec<ReasoningChain>> {
    let corpus = dataset::load_corpus(path, mode).map_err(|e| CliError::Input(e.to_string()))?;
    print_diagnostics(&corpus);
    if corpus.error_count() > 0 {
        return Err(CliError::Input(format!(
            "{}: {} error(s); run `validate` for details",
            path.display(),
            corpus.error_count()
        )));
    }
    if corpus.chains.is_empty() {
        return Err(CliError::Input(format!("{}: no chains", path.display())));
    }
    Ok(corpus.chains)
}

fn connect(spec: &BackendSpec, timeout: Duration) -> Result<Arc<dyn Backend>> {
    backend::connect(spec, timeout).map_err(|e| CliError::Backend(format!("{spec}: {e}")))
}

pub fn run(command: Command, args: Vec<String>) -> Result<ExitCode> {
    match command {
        Command::Validate(a) => validate(a, args),
        Command::Score(a) => score(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Combine(a) => combine(a, args),
        Command::Probe(a) => probe_cmd(a, args),
        Command::Categorize(a) => categorize(a, args),
        Command::MockBackend(a) => mock_backend(a),
        Command::Conformance(a) => conformance_cmd(a),
    }
}

fn validate(a: ValidateArgs, args: Vec<String>) -> Result<ExitCode> {
    let blocklist = load_blocklist(a.blocklist.as_ref())?;
    let mut inputs = vec![a.corpus.as_path()];
    if let Some(b) = &a.blocklist {
        inputs.push(b);
    }
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| a.report.as_ref().map(|r| sibling(r, ".manifest.json")));
    if let Some(p) = &manifest_path {
        write_manifest(&manifest_for("validate", &args, &inputs)?, p)?;
    }

    let opts = LoadOptions {
        mode: a.mode.into(),
        blocklist: blocklist.as_ref(),
    };
    let corpus = dataset::load_corpus_with(&a.corpus, &opts).map_err(|e| CliError::Input(e.to_string()))?;
    print_diagnostics(&corpus);
    let stats = dataset::corpus_stats(&corpus.chains).ok();

    println!(
        "{} record(s), {} loaded, {} error(s), {} warning(s)",
        corpus.records.len() + corpus.malformed.len(),
        corpus.chains.len(),
        corpus.error_count(),
        corpus.warning_count()
    );
    if let Some(s) = &stats {
        let lengths: Vec<String> = s.per_length_counts.iter().map(|(l, n)| format!("L{l}={n}")).collect();
        println!("mean chain length {:.2} ({})", s.mean_chain_length, lengths.join(" "));
        let counts = chain_reasoner::chain::tag_counts(&corpus.chains);
        let tags: Vec<String> = counts.iter().map(|(t, n)| format!("{} {n}", t.as_str())).collect();
        println!("tags: {}", tags.join(", "));
    }

    if let Some(p) = &a.report {
        let report = serde_json::json!({
            "records": corpus.records,
            "malformed": corpus.malformed,
            "errors": corpus.error_count(),
            "warnings": corpus.warning_count(),
            "stats": stats,
        });
        write(p, to_json(&report))?;
    }
    Ok(if corpus.error_count() > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn score(a: ScoreArgs, args: Vec<String>) -> Result<ExitCode> {
    let mut manifest = manifest_for("score", &args, &[&a.corpus])?;
    manifest.add_backend("entailment", &a.backend.to_string());
    manifest.variant = Some(a.variant.as_str().into());
    manifest.parallelism = a.backend_opts.parallel.into();
    write_manifest(
        &manifest,
        &a.manifest.clone().unwrap_or_else(|| sibling(&a.out, ".manifest.json")),
    )?;

    let chains = load_for_scoring(&a.corpus, a.mode.into())?;
    let backend = connect(&a.backend, a.backend_opts.timeout())?;
    let opts = ScoringOptions {
        parallelism: a.backend_opts.parallel.into(),
        augment: AugmentOptions {
            include_kir_step: a.include_kir_step,
        },
    };
    let reports = engine::score_corpus(&chains, backend.as_ref(), &a.variant.variants(), opts)?;
    let mut out = String::new();
    for r in &reports {
        out.push_str(&serde_json::to_string(r).expect("reports serialize"));
        out.push('\n');
    }
    write(&a.out, out)?;
    eprintln!(
        "scored {} chain(s), {} report(s) -> {}",
        chains.len(),
        reports.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<ExitCode> {
    fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", a.out.display())))?;
    let parallelism: usize = a.backend_opts.parallel.into();
    let mut manifest = manifest_for("evaluate", &args, &[&a.corpus])?;
    manifest.add_backend("entailment", &a.entailment_backend.to_string());
    manifest.add_backend("otd", &a.otd_backend.to_string());
    manifest.variant = Some(a.variant.as_str().into());
    manifest.parallelism = parallelism;
    write_manifest(&manifest, &a.out.join("manifest.json"))?;

    let chains = load_for_scoring(&a.corpus, a.mode.into())?;
    let entail = connect(&a.entailment_backend, a.backend_opts.timeout())?;
    let otd = connect(&a.otd_backend, a.backend_opts.timeout())?;
    let opts = ScoringOptions {
        parallelism,
        augment: AugmentOptions {
            include_kir_step: a.include_kir_step,
        },
    };

    let cfg = EvaluateConfig {
        variants: a.variant.variants(),
        scoring: opts,
    };
    let out = pipeline::evaluate_corpus(&chains, entail.as_ref(), otd.as_ref(), &cfg)?;
    for (name, contents) in &out.files {
        write(&a.out.join(name), contents)?;
    }
    for n in &out.notes {
        eprintln!("note: {n}");
    }

    let report = &out.report;
    for t in &report.step_scores {
        println!(
            "{}: MUL {}%  direct {}%  ({} chains)",
            t.variant,
            percent(t.all_mul),
            percent(t.all_direct),
            t.n_chains
        );
    }
    for (s, acc) in &report.classification {
        println!("accuracy on {s}: {}%", percent(*acc));
    }
    if let Some(k) = &report.kir {
        println!(
            "KIR: accuracy s_k-1 {}%  s_k {}%  ({} sites)",
            percent(k.accuracy_before),
            percent(k.accuracy_after),
            k.n_sites
        );
    }
    eprintln!("wrote results to {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn combine(a: CombineArgs, args: Vec<String>) -> Result<ExitCode> {
    let manifest = manifest_for("combine", &args, &[&a.mul_table, &a.classifier_table])?;
    write_manifest(
        &manifest,
        &a.manifest.clone().unwrap_or_else(|| sibling(&a.out, ".manifest.json")),
    )?;

    let table = pipeline::combine_tables(&read(&a.mul_table)?, &read(&a.classifier_table)?)?;
    write(&a.out, table.to_csv())?;
    if let Some(j) = &a.json {
        write(j, to_json(&table))?;
    }

    let labels: Vec<String> = table.columns.iter().map(MulColumn::label).collect();
    println!("otd_model\timplicit\t{}", labels.join("\t"));
    for r in &table.rows {
        let cells: Vec<String> = r.cells.iter().map(|c| percent(*c)).collect();
        println!("{}\t{}\t{}", r.otd_model, percent(r.implicit), cells.join("\t"));
    }
    Ok(ExitCode::SUCCESS)
}

fn probe_cmd(a: ProbeArgs, args: Vec<String>) -> Result<ExitCode> {
    let mut inputs = vec![a.knowledge.as_path()];
    if let Some(v) = &a.votes {
        inputs.push(v);
    }
    let mut manifest = manifest_for("probe", &args, &inputs)?;
    manifest.add_backend("completion", &a.backend.to_string());
    manifest.parallelism = a.backend_opts.parallel.into();
    write_manifest(
        &manifest,
        &a.manifest.clone().unwrap_or_else(|| sibling(&a.out, ".manifest.json")),
    )?;

    let knowledge: Vec<String> = read(&a.knowledge)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().to_string())
        .collect();
    if knowledge.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no knowledge sentences",
            a.knowledge.display()
        )));
    }
    let votes = match &a.votes {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            Some(probe::parse_votes(BufReader::new(f))?)
        }
        None => None,
    };

    let backend = connect(&a.backend, a.backend_opts.timeout())?;
    let mut records = probe::run_probe(&knowledge, backend.as_ref(), a.backend_opts.parallel.into())?;
    if let Some(v) = &votes {
        probe::attach_votes(&mut records, v, a.annotators)?;
    }
    let mut out = Vec::new();
    probe::write_records(&mut out, &records)?;
    write(&a.out, out)?;

    if votes.is_some() {
        let report = probe::coverage(&records, CoverageRule::Majority, backend.name())?;
        println!(
            "covered {}/{} ({}%)",
            report.n_covered,
            report.n_items,
            percent(report.covered)
        );
        match report.alpha {
            Some(al) if al.degenerate => println!("krippendorff alpha 1 (degenerate: a single label)"),
            Some(al) => println!("krippendorff alpha {:.3}", al.alpha),
            None => println!("krippendorff alpha undefined (too few pairable items)"),
        }
        if let Some(p) = &a.report {
            write(p, to_json(&report))?;
        }
    }
    eprintln!("wrote {} probe record(s) to {}", records.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn categorize(a: CategorizeArgs, args: Vec<String>) -> Result<ExitCode> {
    let mut manifest = manifest_for("categorize", &args, &[&a.attributes])?;
    manifest.seed = a.seed;
    write_manifest(
        &manifest,
        &a.manifest.clone().unwrap_or_else(|| sibling(&a.out, ".manifest.json")),
    )?;

    let raw = attributes::parse_attribute_input(&read(&a.attributes)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.attributes.display())))?;
    let (mut attrs, mut hist) = attributes::categorize_corpus(&raw);
    if let (Some(n), Some(seed)) = (a.sample_per_category, a.seed) {
        attrs = dataset::sample_attributes(&attrs, n, seed).map_err(|e| CliError::Input(e.to_string()))?;
        hist = Histogram::of(&attrs);
    }
    let mut out = String::new();
    for at in &attrs {
        out.push_str(&serde_json::to_string(at).expect("attributes serialize"));
        out.push('\n');
    }
    write(&a.out, out)?;
    if let Some(h) = &a.histogram {
        write(h, hist.to_csv())?;
    }
    for (c, n) in &hist.categories {
        println!("{c}\t{n}");
    }
    for (s, n) in &hist.subcategories {
        println!("  {s}\t{n}");
    }
    println!("total\t{}", hist.total);
    Ok(ExitCode::SUCCESS)
}

fn mock_backend(a: MockBackendArgs) -> Result<ExitCode> {
    let mock = match a.mode {
        MockModeArg::Hash => MockBackend::hash(),
        MockModeArg::Lexicon => MockBackend::lexicon(load_blocklist(a.blocklist.as_ref())?.unwrap_or_default()),
    };
    let io_err = |e: io::Error| CliError::Input(e.to_string());
    match a.listen {
        Some(addr) => {
            let listener =
                TcpListener::bind(&addr).map_err(|e| CliError::Input(format!("cannot listen on {addr}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr().map_err(io_err)?);
            backend::serve_tcp(Arc::new(mock), listener).map_err(io_err)?;
        }
        None => {
            let stdin = io::stdin();
            backend::serve(&mock, stdin.lock(), io::stdout().lock()).map_err(io_err)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn conformance_cmd(a: ConformanceArgs) -> Result<ExitCode> {
    let report = conformance::run_spec(&a.backend, Duration::from_secs(a.timeout_secs))?;
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
