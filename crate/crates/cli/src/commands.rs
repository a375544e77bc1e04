use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paraspan_core::analysis::{self, NegativeRegistry, TrivialResources};
use paraspan_core::augment::{self, BackTranslationRecord, Strategy};
use paraspan_core::baselines::{self, EmbeddingFile, SentenceRetriever, TfIdfConfig, TfIdfModel};
use paraspan_core::corpus::{self, CorpusSource, Document, SpanExample, Split};
use paraspan_core::decoder::{self, DecodeConfig, LogitSheet, MockScorerConfig, SpanPrediction};
use paraspan_core::metrics::Normalization;
use paraspan_core::report::{self, Report, ReportInputs, ReportMeta, RunConfig};
use paraspan_core::windowing::{self, UnitsRecord};
use paraspan_core::{jsonl, textproc};
use serde::Serialize;

use crate::{
    AnalyzeArgs, AugmentCommand, Cli, Command, ConvertArgs, DecodeArgs, EvalArgs, ExampleInputs,
    Method, ReportArgs, RetrieveArgs, SliceArgs, StrategyArg,
};

pub enum Status {
    Clean,
    /// Outputs were written but some records failed.
    Partial,
}

pub fn run(cli: Cli) -> Result<Status> {
    let seed = cli.seed;
    match cli.command {
        Command::Convert(a) => convert(a),
        Command::Slice(a) => slice(a),
        Command::Decode(a) => decode(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Eval(a) => eval(a, seed),
        Command::Analyze(a) => analyze(a, seed),
        Command::Augment(a) => augment_cmd(a.command, seed),
        Command::Report(a) => report_cmd(a),
    }
}

struct Inputs {
    /// Every example in the file.
    all: Vec<SpanExample>,
    /// Examples of the requested split.
    selected: Vec<SpanExample>,
    documents: Vec<Document>,
}

impl Inputs {
    /// Drops predictions for examples outside the selected split.
    fn restrict(&self, predictions: Vec<SpanPrediction>) -> Vec<SpanPrediction> {
        let selected: HashSet<&str> = self
            .selected
            .iter()
            .map(|e| e.example_id.as_str())
            .collect();
        let all: HashSet<&str> = self.all.iter().map(|e| e.example_id.as_str()).collect();
        predictions
            .into_iter()
            .filter(|p| {
                selected.contains(p.example_id.as_str()) || !all.contains(p.example_id.as_str())
            })
            .collect()
    }
}

fn load_inputs(i: &ExampleInputs) -> Result<Inputs> {
    let all: Vec<SpanExample> = jsonl::read(&i.examples)
        .with_context(|| format!("reading examples {}", i.examples.display()))?;
    let documents: Vec<Document> = jsonl::read(&i.documents)
        .with_context(|| format!("reading documents {}", i.documents.display()))?;
    let split: Option<Split> = i.split.map(Into::into);
    let selected = all
        .iter()
        .filter(|e| split.is_none_or(|s| e.meta.split == s))
        .cloned()
        .collect();
    Ok(Inputs {
        all,
        selected,
        documents,
    })
}

fn report_failures(what: &str, failures: &[(String, String)]) -> Status {
    for (id, reason) in failures {
        eprintln!("{what} `{id}`: {reason}");
    }
    if failures.is_empty() {
        Status::Clean
    } else {
        eprintln!("{} {what} failure(s)", failures.len());
        Status::Partial
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    jsonl::write_text(path, &text)?;
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<Status> {
    let source = match (&a.pairs, &a.documents) {
        (Some(pairs), Some(documents)) => CorpusSource::Jsonl {
            pairs: pairs.clone(),
            documents: documents.clone(),
        },
        _ => {
            if a.documents_out.is_none() {
                bail!("--documents-out is required when converting release files");
            }
            CorpusSource::Release {
                files: a.release.clone(),
            }
        }
    };
    let outcome = corpus::load_corpus(&source)?;
    for e in &outcome.errors {
        eprintln!("record error: {e}");
    }
    for (reason, n) in &outcome.skipped {
        eprintln!("skipped {n} record(s): {reason}");
    }
    let examples = corpus::convert_to_examples(&outcome.corpus, a.setup.into());
    jsonl::write(&a.out, &examples)?;
    if let Some(path) = &a.documents_out {
        jsonl::write(path, &outcome.corpus.documents)?;
    }
    let counts = corpus::split_counts(&examples);
    println!(
        "pairs {} positive / {} negative; examples train {} devel {} test {} total {}",
        outcome.corpus.positives(),
        outcome.corpus.negatives(),
        counts.train,
        counts.devel,
        counts.test,
        counts.total()
    );
    if outcome.errors.is_empty() {
        Ok(Status::Clean)
    } else {
        eprintln!("{} record error(s)", outcome.errors.len());
        Ok(Status::Partial)
    }
}

fn load_units(path: Option<&PathBuf>) -> Result<Vec<UnitsRecord>> {
    match path {
        Some(p) => Ok(jsonl::read(p).with_context(|| format!("reading units {}", p.display()))?),
        None => Ok(Vec::new()),
    }
}

fn units_index(records: &[UnitsRecord]) -> Result<HashMap<&str, &UnitsRecord>> {
    let mut map = HashMap::new();
    for r in records {
        if map.insert(r.example_id.as_str(), r).is_some() {
            bail!("duplicate units record for `{}`", r.example_id);
        }
    }
    Ok(map)
}

fn slice(a: SliceArgs) -> Result<Status> {
    let inputs = load_inputs(&a.inputs)?;
    let docs = corpus::index_documents(&inputs.documents)?;
    let units = load_units(a.units.as_ref())?;
    let plans = windowing::plan_slices(
        &inputs.selected,
        &docs,
        a.max_seq,
        a.overlap,
        &units_index(&units)?,
    );
    let mut records = Vec::new();
    for plan in &plans.plans {
        let ex = &inputs.selected[plan.example_index];
        let doc = docs[ex.context_doc_id.as_str()];
        records.extend(windowing::export_slices(
            ex,
            doc,
            &plan.units,
            &plan.slices,
        )?);
    }
    jsonl::write(&a.out, &records)?;
    println!(
        "{} slices for {} examples",
        records.len(),
        plans.plans.len()
    );
    Ok(report_failures("slicing", &plans.failed))
}

fn decode(a: DecodeArgs) -> Result<Status> {
    let inputs = load_inputs(&a.inputs)?;
    let docs = corpus::index_documents(&inputs.documents)?;
    let mut failures = Vec::new();
    let sheets: Vec<LogitSheet> = if a.mock {
        let units = load_units(a.units.as_ref())?;
        let plans = windowing::plan_slices(
            &inputs.selected,
            &docs,
            a.max_seq,
            a.overlap,
            &units_index(&units)?,
        );
        failures.extend(plans.failed.iter().cloned());
        let sheets = decoder::mock_sheets(
            &inputs.selected,
            &docs,
            &plans.plans,
            &MockScorerConfig::default(),
        )?;
        if let Some(path) = &a.sheets_out {
            jsonl::write(path, &sheets)?;
        }
        sheets
    } else {
        let path = a.logits.as_ref().expect("clap requires --logits or --mock");
        jsonl::read(path).with_context(|| format!("reading logit sheets {}", path.display()))?
    };
    let config = DecodeConfig {
        setup: a.setup.into(),
        max_span_units: a.max_span_units,
    };
    let outcome = decoder::decode_all(&inputs.selected, sheets, &docs, &config);
    jsonl::write(&a.out, &outcome.predictions)?;
    let nulls = outcome.predictions.iter().filter(|p| p.is_null()).count();
    println!("{} predictions ({nulls} null)", outcome.predictions.len());
    if outcome.orphan_sheets > 0 {
        eprintln!("{} sheet(s) name no known example", outcome.orphan_sheets);
    }
    let already: HashSet<String> = failures.iter().map(|(id, _)| id.clone()).collect();
    failures.extend(
        outcome
            .skipped
            .into_iter()
            .filter(|s| !already.contains(&s.example_id))
            .map(|s| (s.example_id, s.reason)),
    );
    match report_failures("decoding", &failures) {
        Status::Clean if outcome.orphan_sheets > 0 => Ok(Status::Partial),
        s => Ok(s),
    }
}

/// Sentences of the documents behind the training examples.
fn fit_model(examples: &[SpanExample], docs: &HashMap<&str, &Document>) -> Result<TfIdfModel> {
    let mut ids: Vec<&str> = examples
        .iter()
        .filter(|e| e.meta.split == Split::Train)
        .map(|e| e.context_doc_id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        bail!("no training examples to fit the tf-idf model on; pass --model or --fit-examples");
    }
    fit_on_documents(&ids, docs)
}

fn fit_on_documents(ids: &[&str], docs: &HashMap<&str, &Document>) -> Result<TfIdfModel> {
    let mut sentences = Vec::new();
    for id in ids {
        let doc = docs
            .get(id)
            .with_context(|| format!("unknown document `{id}`"))?;
        for span in textproc::split_sentences(&doc.text).sentences {
            sentences.push(doc.slice(&span).unwrap_or_default());
        }
    }
    Ok(baselines::fit_tfidf(sentences, TfIdfConfig::default())?)
}

fn check_dominance(
    examples: &[SpanExample],
    predictions: &[SpanPrediction],
    docs: &HashMap<&str, &Document>,
    mode: Normalization,
) -> Result<()> {
    let d = report::oracle_dominance(examples, predictions, docs, mode)?;
    println!(
        "oracle F {:.2} vs method F {:.2} on {} retrievable examples",
        d.oracle_f1, d.method_f1, d.n
    );
    if !d.holds() {
        bail!(
            "oracle dominance violated: method F {:.4} exceeds oracle F {:.4}",
            d.method_f1,
            d.oracle_f1
        );
    }
    Ok(())
}

fn retrieve(a: RetrieveArgs) -> Result<Status> {
    let inputs = load_inputs(&a.inputs)?;
    let docs = corpus::index_documents(&inputs.documents)?;
    if let Some(path) = &a.export_sentences {
        let requests = baselines::embedding_requests(&inputs.selected, &docs)?;
        jsonl::write(path, &requests)?;
        println!("{} texts to embed", requests.len());
        return Ok(Status::Clean);
    }
    let out = a.out.as_ref().expect("clap requires --out");
    let predictions = match a.method {
        Method::Tfidf => {
            let model = match (&a.model, &a.fit_examples) {
                (Some(path), _) => TfIdfModel::load(path)?,
                (None, Some(path)) => {
                    let fit: Vec<SpanExample> = jsonl::read(path)?;
                    fit_model(&fit, &docs)?
                }
                (None, None) => fit_model(&inputs.all, &docs)?,
            };
            if let Some(path) = &a.model_out {
                model.save(path)?;
            }
            baselines::retrieve_all(&inputs.selected, &docs, SentenceRetriever::TfIdf(&model))?
        }
        Method::Embedding => {
            let path = a
                .embeddings
                .as_ref()
                .context("--embeddings is required for the embedding method")?;
            let source = EmbeddingFile::load(path)?;
            baselines::retrieve_all(
                &inputs.selected,
                &docs,
                SentenceRetriever::Embedding(&source),
            )?
        }
        Method::Oracle => {
            baselines::retrieve_all(&inputs.selected, &docs, SentenceRetriever::Oracle)?
        }
    };
    jsonl::write(out, &predictions)?;
    println!("{} predictions", predictions.len());
    if a.method != Method::Oracle {
        check_dominance(
            &inputs.selected,
            &predictions,
            &docs,
            a.metric_normalization.into(),
        )?;
    }
    Ok(Status::Clean)
}

fn eval(a: EvalArgs, seed: u64) -> Result<Status> {
    let inputs = load_inputs(&a.inputs)?;
    let docs = corpus::index_documents(&inputs.documents)?;
    let predictions = inputs.restrict(
        jsonl::read(&a.predictions)
            .with_context(|| format!("reading predictions {}", a.predictions.display()))?,
    );
    let mode: Normalization = a.metric_normalization.into();
    let mut extra = BTreeMap::new();
    extra.insert(
        "examples_sha256".to_string(),
        report::file_sha256(&a.inputs.examples)?,
    );
    extra.insert(
        "documents_sha256".to_string(),
        report::file_sha256(&a.inputs.documents)?,
    );
    extra.insert(
        "predictions_sha256".to_string(),
        report::file_sha256(&a.predictions)?,
    );
    if let Some(split) = a.inputs.split {
        extra.insert("split".to_string(), Split::from(split).to_string());
    }
    let resources = a
        .resources
        .as_deref()
        .map(TrivialResources::load)
        .transpose()
        .context("loading lexical resources")?;
    if resources.is_some() {
        extra.insert("lexical_resources".to_string(), "on".to_string());
    }
    let config = RunConfig {
        method: a.method.clone(),
        setup: a.setup.into(),
        normalization: mode,
        max_sequence_units: a.max_seq,
        overlap: a.overlap,
        max_span_units: None,
        seed,
        extra,
    };
    let negatives = NegativeRegistry::from_examples(&inputs.all);
    let report = report::build_report(
        config,
        &ReportInputs {
            examples: &inputs.selected,
            predictions: &predictions,
            docs: &docs,
            negatives: &negatives,
            trivial: resources.as_ref(),
        },
    )?;
    write_json(&a.out, &report)?;
    let table = report::render_table(&report);
    print!("{table}");
    if let Some(path) = &a.table_out {
        jsonl::write_text(path, &table)?;
    }
    if let Some(path) = &a.meta_out {
        write_json(path, &ReportMeta::now(&report.config_hash))?;
    }
    if matches!(a.method.as_str(), "tfidf" | "embedding") {
        check_dominance(&inputs.selected, &predictions, &docs, mode)?;
    }
    let mut failures: Vec<(String, String)> = report
        .missing_predictions
        .iter()
        .map(|id| (id.clone(), "no prediction".to_string()))
        .collect();
    failures.extend(
        report
            .unknown_predictions
            .iter()
            .map(|id| (id.clone(), "prediction for unknown example".to_string())),
    );
    Ok(report_failures("evaluation", &failures))
}

#[derive(Serialize)]
struct CategoryRecord<'a> {
    example_id: &'a str,
    category: analysis::ErrorCategory,
}

fn analyze(a: AnalyzeArgs, seed: u64) -> Result<Status> {
    let inputs = load_inputs(&a.inputs)?;
    let docs = corpus::index_documents(&inputs.documents)?;
    let predictions = inputs.restrict(jsonl::read(&a.predictions)?);
    let mode: Normalization = a.metric_normalization.into();
    let negatives = match &a.negatives {
        Some(path) => NegativeRegistry::from_examples(&jsonl::read::<SpanExample>(path)?),
        None => NegativeRegistry::from_examples(&inputs.all),
    };
    let scoring = report::score_predictions(&inputs.selected, &predictions, &docs, mode)?;
    let items = report::evaluated_items(&inputs.selected, &predictions, &docs, &scoring.scored)?;
    let errors: Vec<_> = items.iter().filter(|e| e.scored.em == 0).collect();
    let mut categories = Vec::with_capacity(errors.len());
    for e in &errors {
        let category =
            analysis::categorize_error(e.prediction, e.example, e.doc, &negatives, mode)?;
        categories.push(CategoryRecord {
            example_id: &e.example.example_id,
            category,
        });
    }
    jsonl::write(&a.categories_out, &categories)?;
    let dist = analysis::ErrorDistribution::from_categories(categories.iter().map(|c| c.category));
    println!("{} errors among {} predictions", dist.errors, items.len());
    for (cat, pct) in &dist.percent {
        println!(
            "  {:<26} {:>6.2}%  {:>6}",
            cat.as_str(),
            pct,
            dist.counts[cat]
        );
    }
    println!(
        "  {:<26} {:>6.2}%",
        "partially correct",
        dist.partial_percent()
    );
    if let Some(path) = &a.review_out {
        let population = errors
            .iter()
            .map(|e| analysis::review_item(e, a.excerpt_radius))
            .collect();
        let sample = analysis::sample_for_review(population, a.review_k, seed);
        if sample.exhausted {
            eprintln!(
                "only {} errors available; the review sheet holds all of them",
                sample.items.len()
            );
        }
        jsonl::write(path, &sample.items)?;
    }
    let missing: Vec<(String, String)> = scoring
        .missing
        .into_iter()
        .map(|id| (id, "no prediction".to_string()))
        .collect();
    Ok(report_failures("analysis", &missing))
}

fn augment_cmd(cmd: AugmentCommand, seed: u64) -> Result<Status> {
    match cmd {
        AugmentCommand::Irretrievables {
            inputs,
            out_examples,
            out_documents,
        } => {
            let loaded = load_inputs(&inputs)?;
            let docs = corpus::index_documents(&loaded.documents)?;
            let doubled = augment::double_with_irretrievables(&loaded.selected, &docs)?;
            jsonl::write(&out_examples, &doubled.examples)?;
            let mut all_docs = loaded.documents.clone();
            all_docs.extend(doubled.documents.iter().cloned());
            jsonl::write(&out_documents, &all_docs)?;
            println!(
                "{} examples in, {} out ({} new documents)",
                loaded.selected.len(),
                doubled.examples.len(),
                doubled.documents.len()
            );
            Ok(Status::Clean)
        }
        AugmentCommand::Targets {
            documents,
            examples,
            split,
            out,
        } => {
            let mut docs: Vec<Document> = jsonl::read(&documents)?;
            if let Some(path) = examples {
                let split: Option<Split> = split.map(Into::into);
                let exs: Vec<SpanExample> = jsonl::read(&path)?;
                let used: HashSet<&str> = exs
                    .iter()
                    .filter(|e| split.is_none_or(|s| e.meta.split == s))
                    .map(|e| e.context_doc_id.as_str())
                    .collect();
                docs.retain(|d| used.contains(d.doc_id.as_str()));
            }
            let sample = augment::sample_targets(&docs, seed)?;
            jsonl::write(&out, &sample.targets)?;
            println!(
                "{} target sentences; {} documents dropped for sentences over {} words",
                sample.targets.len(),
                sample.dropped_long.len(),
                augment::MAX_TARGET_WORDS
            );
            Ok(Status::Clean)
        }
        AugmentCommand::Bt {
            records,
            documents,
            strategy,
            n,
            band_low,
            band_high,
            model,
            metric_normalization,
            out,
        } => {
            let recs: Vec<BackTranslationRecord> = jsonl::read(&records)?;
            let all_docs: Vec<Document> = jsonl::read(&documents)?;
            let docs = corpus::index_documents(&all_docs)?;
            let total = recs.len();
            let filtered = augment::filter_bt(recs, metric_normalization.into());
            println!("{} of {total} back-translations kept", filtered.kept.len());
            for (why, count) in &filtered.dropped {
                println!(
                    "  dropped {count}: {}",
                    serde_json::to_string(why)?.trim_matches('"')
                );
            }
            let strategy = match strategy {
                StrategyArg::Random => Strategy::Random,
                StrategyArg::TfidfBand => Strategy::TfidfBand {
                    low: band_low,
                    high: band_high,
                },
                StrategyArg::TfidfMostDissimilar => Strategy::TfidfMostDissimilar,
            };
            let model = match (&strategy, model) {
                (Strategy::Random, _) => None,
                (_, Some(path)) => Some(TfIdfModel::load(&path)?),
                (_, None) => {
                    let mut ids: Vec<&str> = filtered
                        .kept
                        .iter()
                        .map(|r| r.source_doc_id.as_str())
                        .collect();
                    ids.sort_unstable();
                    ids.dedup();
                    Some(fit_on_documents(&ids, &docs)?)
                }
            };
            let sample =
                augment::sample_strategy(&filtered.kept, strategy, n, model.as_ref(), &docs, seed)?;
            jsonl::write(&out, &sample.examples)?;
            println!("{} examples drawn with {strategy}", sample.examples.len());
            if sample.short {
                eprintln!(
                    "only {} records qualified for {n} requested",
                    sample.qualified
                );
            }
            Ok(Status::Clean)
        }
    }
}

fn report_cmd(a: ReportArgs) -> Result<Status> {
    let mut reports = Vec::new();
    for path in &a.reports {
        let raw =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: Report =
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        reports.push(r);
    }
    let rows: Vec<(String, _)> = reports
        .iter()
        .map(|r| {
            (
                format!("{} (setup {})", r.config.method, r.config.setup),
                r.overall,
            )
        })
        .collect();
    let table = report::render_comparison(&rows);
    print!("{table}");
    if let Some(path) = &a.out {
        jsonl::write_text(path, &table)?;
    }
    for oracle in reports.iter().filter(|r| r.config.method == "oracle") {
        for other in reports.iter().filter(|r| {
            matches!(r.config.method.as_str(), "tfidf" | "embedding")
                && r.config.normalization == oracle.config.normalization
                && r.config.extra.get("examples_sha256")
                    == oracle.config.extra.get("examples_sha256")
                && r.config.extra.get("split") == oracle.config.extra.get("split")
        }) {
            if other.overall.f1 > oracle.overall.f1 {
                bail!(
                    "oracle dominance violated: {} F {:.2} exceeds oracle F {:.2}",
                    other.config.method,
                    other.overall.f1,
                    oracle.overall.f1
                );
            }
        }
    }
    Ok(Status::Clean)
}
