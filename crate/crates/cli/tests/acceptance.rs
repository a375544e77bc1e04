//! One line per acceptance criterion. Criteria that need the public corpus
//! run only when `PARASPAN_CORPUS_DIR` points at the release files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use paraspan_core::analysis::{self, ErrorCategory, ErrorDistribution, NegativeRegistry};
use paraspan_core::augment::{self, BackTranslationRecord, OriginalSentence};
use paraspan_core::baselines::{self, SentenceRetriever, TfIdfConfig};
use paraspan_core::corpus::{
    self, CorpusSource, Direction, ExampleMeta, PairSide, ParaphraseLabel, ParaphrasePair,
};
use paraspan_core::decoder::{decode_slice, merge_slices, LogitSheet, SpanPrediction};
use paraspan_core::metrics::{self, Normalization};
use paraspan_core::report;
use paraspan_core::textproc;
use paraspan_core::windowing::{slice_document, SlicingBudget, UnitMap, UnitSpan};
use paraspan_core::{CharSpan, Document, Setup, SpanExample, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Ignored(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn corpus_dir() -> Option<PathBuf> {
    std::env::var_os("PARASPAN_CORPUS_DIR").map(PathBuf::from)
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("decoder-oracle equivalence", decoder_oracle),
        ("metric oracle", metric_oracle),
        ("slicing laws", slicing_laws),
        ("conversion arithmetic (synthetic)", conversion_synthetic),
        (
            "conversion arithmetic (real corpus split counts)",
            conversion_real,
        ),
        ("real-corpus baselines (tf-idf, oracle)", real_baselines),
        ("oracle dominance", oracle_dominance),
        ("error-category partition", error_partition),
        ("augmentation filters and doubling", augmentation),
        ("end-to-end mock pipeline", end_to_end),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Verdict::Fail(format!("panicked: {:?}", e.downcast_ref::<String>()))
        });
        match verdict {
            Verdict::Pass(d) => println!("PASS    {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL    {name}: {d}");
            }
            Verdict::Ignored(d) => println!("IGNORED {name}: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_sheets(rng: &mut ChaCha8Rng) -> (Vec<LogitSheet>, usize) {
    loop {
        let n = rng.gen_range(1..=40);
        let w = rng.gen_range(1..=n);
        let o = rng.gen_range(0..w);
        let ranges = paraspan_core::windowing::slice_ranges(n, w, o);
        if ranges.len() > 4 {
            continue;
        }
        let sheets = ranges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let len = b - a;
                LogitSheet {
                    example_id: "x".into(),
                    slice_index: i,
                    null_index: if rng.gen_bool(0.7) {
                        0
                    } else {
                        rng.gen_range(0..=len)
                    },
                    start_logits: (0..=len).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                    end_logits: (0..=len).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                    unit_char_spans: (a..b).map(|u| CharSpan::new(2 * u, 2 * u + 1)).collect(),
                }
            })
            .collect();
        return (sheets, n);
    }
}

fn enumerate_best(
    sheets: &[LogitSheet],
    cap: Option<usize>,
    setup: Setup,
) -> (Option<CharSpan>, f64) {
    let at = |s: &LogitSheet, k: usize| if k < s.null_index { k } else { k + 1 };
    let mut best: Option<(f64, usize, usize, usize)> = None;
    let mut null = f64::INFINITY;
    for (i, sh) in sheets.iter().enumerate() {
        null = null.min(sh.start_logits[sh.null_index] + sh.end_logits[sh.null_index]);
        let n = sh.unit_char_spans.len();
        for s in 0..n {
            for e in s..n {
                if cap.is_some_and(|c| e - s + 1 > c) {
                    continue;
                }
                let score = sh.start_logits[at(sh, s)] + sh.end_logits[at(sh, e)];
                let span = CharSpan::new(sh.unit_char_spans[s].start, sh.unit_char_spans[e].end);
                let key = (span.start, span.len(), i);
                if best
                    .is_none_or(|(b, bs, bl, bi)| score > b || (score == b && key < (bs, bl, bi)))
                {
                    best = Some((score, span.start, span.len(), i));
                }
            }
        }
    }
    let (score, start, len, _) = best.unwrap();
    if setup == Setup::Two && null > score {
        (None, null)
    } else {
        (Some(CharSpan::new(start, start + len)), score)
    }
}

fn decoder_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (sheets, _) = random_sheets(&mut rng);
        let setup = if rng.gen_bool(0.5) {
            Setup::One
        } else {
            Setup::Two
        };
        let cap = rng.gen_bool(0.3).then(|| rng.gen_range(1..6));
        let decodes: Vec<_> = sheets
            .iter()
            .map(|s| decode_slice(s, cap, Some(1)).unwrap())
            .collect();
        let pred = merge_slices("x", &decodes, setup).unwrap();
        let got_score = if pred.span.is_some() {
            pred.score
        } else {
            pred.null_score.unwrap()
        };
        let (span, score) = enumerate_best(&sheets, cap, setup);
        if pred.span != span || got_score != score {
            mismatches += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 10.0,
        format!("1000 instances, {mismatches} mismatches, {secs:.2}s"),
    )
}

fn metric_oracle() -> Verdict {
    let vocab = ["a", "b", "c", "kissa", "Kissa", "ö", "."];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut broken = 0;
    for _ in 0..1000 {
        let mut draw = || -> Vec<&str> {
            let k = rng.gen_range(0..=8);
            (0..k).map(|_| *vocab.choose(&mut rng).unwrap()).collect()
        };
        let (p, g) = (draw(), draw());
        let (ps, gs) = (p.join(" "), g.join(" "));
        let norm = |v: &[&str]| -> Vec<String> {
            v.iter()
                .filter(|t| **t != ".")
                .map(|t| t.to_lowercase())
                .collect()
        };
        let (pn, gn) = (norm(&p), norm(&g));
        let brute = if pn.is_empty() && gn.is_empty() {
            1.0
        } else {
            let mut left = gn.clone();
            let shared = pn
                .iter()
                .filter(|t| match left.iter().position(|x| x == *t) {
                    Some(i) => {
                        left.remove(i);
                        true
                    }
                    None => false,
                })
                .count();
            if shared == 0 {
                0.0
            } else {
                let (pr, rc) = (
                    shared as f64 / pn.len() as f64,
                    shared as f64 / gn.len() as f64,
                );
                2.0 * pr * rc / (pr + rc)
            }
        };
        let f = metrics::token_f1(Some(&ps), Some(&gs), Normalization::Normalized);
        let em = metrics::exact_match(Some(&ps), Some(&gs), Normalization::Normalized);
        worst = worst.max((f - brute).abs());
        let sym = f == metrics::token_f1(Some(&gs), Some(&ps), Normalization::Normalized)
            && em == metrics::exact_match(Some(&gs), Some(&ps), Normalization::Normalized);
        if f64::from(em) > f.ceil() || !sym {
            broken += 1;
        }
    }
    check(
        worst <= 1e-12 && broken == 0,
        format!("1000 pairs, max |F - brute| = {worst:e}, {broken} invariant violations"),
    )
}

fn slicing_laws() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let overlap = 128;
    let mut bad = Vec::new();
    for case in 0..1000 {
        let n = rng.gen_range(1..=2000);
        let q = rng.gen_range(1..=380);
        let spans = (0..n).map(|i| CharSpan::new(2 * i, 2 * i + 1)).collect();
        let units = UnitMap::from_scorer(spans, 2 * n).unwrap();
        let first = rng.gen_range(0..n);
        let last = rng.gen_range(first..n.min(first + 200));
        let gold = units.char_span(UnitSpan { first, last });
        let ex = SpanExample {
            example_id: "e".into(),
            query: "q".into(),
            context_doc_id: "d".into(),
            gold_span: Some(gold),
            gold_text: None,
            counterpart_span: None,
            direction: Direction::OneToTwo,
            meta: ExampleMeta {
                label: None,
                genre: "news".into(),
                split: Split::Test,
            },
        };
        let budget = SlicingBudget::new(512, q);
        let window = 512 - q - 3;
        let set = slice_document(&ex, &units, &budget, overlap).unwrap();
        let s = &set.slices;
        let mut covered = vec![0u32; n];
        let mut rebuilt = Vec::new();
        for (i, sl) in s.iter().enumerate() {
            covered[sl.unit_start..sl.unit_end]
                .iter_mut()
                .for_each(|c| *c += 1);
            let skip = if i == 0 { 0 } else { overlap };
            rebuilt.extend(sl.unit_start + skip..sl.unit_end);
        }
        let contains = |a: usize, b: usize| first >= a && last < b;
        let ok = set.window == window
            && s.iter().all(|sl| sl.units() <= window && sl.units() > 0)
            && covered.iter().all(|&c| c >= 1)
            && s.last().unwrap().unit_end == n
            && s.windows(2)
                .all(|w| w[0].unit_end - w[1].unit_start == overlap)
            && rebuilt == (0..n).collect::<Vec<_>>()
            && s.iter()
                .all(|sl| sl.gold_in_slice.is_some() == contains(sl.unit_start, sl.unit_end));
        if !ok {
            bad.push(case);
        }
    }
    check(
        bad.is_empty(),
        format!("1000 cases, overlap {overlap}, failing cases {bad:?}"),
    )
}

fn synthetic_corpus(rng: &mut ChaCha8Rng, p: usize, n: usize) -> corpus::Corpus {
    let mut documents = Vec::new();
    let mut pairs = Vec::new();
    let splits = [Split::Train, Split::Devel, Split::Test];
    for i in 0..p + n {
        let mut side = |tag: &str| {
            let text = format!("Alku {i}{tag}. Lause numero {i} {tag}. Loppu.");
            let needle = format!("Lause numero {i} {tag}.");
            let start = text[..text.find(&needle).unwrap()].chars().count();
            let doc_id = format!("d{i}{tag}");
            documents.push(Document {
                doc_id: doc_id.clone(),
                genre: "news".into(),
                text,
            });
            PairSide {
                doc_id,
                start,
                end: start + needle.chars().count(),
                text: needle,
            }
        };
        let side1 = side("a");
        let side2 = side("b");
        let negative = i >= p;
        pairs.push(ParaphrasePair {
            pair_id: format!("p{i}"),
            label: (!negative).then(ParaphraseLabel::context_dependent),
            is_negative: negative,
            split: *splits.choose(rng).unwrap(),
            side1,
            side2,
        });
    }
    corpus::Corpus::new(documents, pairs).unwrap()
}

fn conversion_synthetic() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    for _ in 0..50 {
        let (p, n) = (rng.gen_range(0..60), rng.gen_range(0..20));
        let c = synthetic_corpus(&mut rng, p, n);
        let one = corpus::convert_to_examples(&c, Setup::One);
        let two = corpus::convert_to_examples(&c, Setup::Two);
        let irr = two.iter().filter(|e| !e.is_retrievable()).count();
        if one.len() != 2 * p || two.len() != 2 * p + 2 * n || irr != 2 * n {
            bad.push((p, n));
        }
    }
    check(
        bad.is_empty(),
        format!("50 random corpora, |S1| = 2P and |S2| = 2P+2N, failures {bad:?}"),
    )
}

fn release_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    files.retain(|p| {
        matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("json" | "jsonl")
        )
    });
    files.sort();
    files
}

fn load_real() -> Result<corpus::Corpus, String> {
    let dir = corpus_dir().ok_or("PARASPAN_CORPUS_DIR not set")?;
    let files = release_files(&dir);
    if files.is_empty() {
        return Err(format!("no release files in {}", dir.display()));
    }
    corpus::load_corpus(&CorpusSource::Release { files })
        .map(|o| o.corpus)
        .map_err(|e| e.to_string())
}

fn conversion_real() -> Verdict {
    if corpus_dir().is_none() {
        return Verdict::Ignored("needs the public corpus in PARASPAN_CORPUS_DIR".into());
    }
    let c = match load_real() {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(e),
    };
    let one = corpus::split_counts(&corpus::convert_to_examples(&c, Setup::One));
    let two = corpus::split_counts(&corpus::convert_to_examples(&c, Setup::Two));
    let want_one = (138_706, 17_702, 17_564);
    let want_two = (140_848, 17_930, 17_810);
    check(
        (one.train, one.devel, one.test) == want_one && (two.train, two.devel, two.test) == want_two,
        format!(
            "setup 1 {}/{}/{} (total {}), setup 2 {}/{}/{} (total {}); want {want_one:?} and {want_two:?}",
            one.train,
            one.devel,
            one.test,
            one.total(),
            two.train,
            two.devel,
            two.test,
            two.total()
        ),
    )
}

fn real_baselines() -> Verdict {
    if corpus_dir().is_none() {
        return Verdict::Ignored("needs the public corpus in PARASPAN_CORPUS_DIR".into());
    }
    let c = match load_real() {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(e),
    };
    let all = corpus::convert_to_examples(&c, Setup::One);
    let docs = corpus::index_documents(&c.documents).unwrap();
    let mut train_docs: Vec<&str> = all
        .iter()
        .filter(|e| e.meta.split == Split::Train)
        .map(|e| e.context_doc_id.as_str())
        .collect();
    train_docs.sort_unstable();
    train_docs.dedup();
    let sentences: Vec<&str> = train_docs
        .iter()
        .flat_map(|id| {
            let d = docs[id];
            textproc::split_sentences(&d.text)
                .sentences
                .into_iter()
                .map(move |s| d.slice(&s).unwrap_or_default())
        })
        .collect();
    let model = baselines::fit_tfidf(sentences, TfIdfConfig::default()).unwrap();
    let test: Vec<SpanExample> = all
        .into_iter()
        .filter(|e| e.meta.split == Split::Test)
        .collect();
    let score = |preds: &[SpanPrediction]| {
        let s = report::score_predictions(&test, preds, &docs, Normalization::Normalized).unwrap();
        metrics::aggregate(&s.scored).unwrap()
    };
    let tfidf =
        score(&baselines::retrieve_all(&test, &docs, SentenceRetriever::TfIdf(&model)).unwrap());
    let oracle = score(&baselines::retrieve_all(&test, &docs, SentenceRetriever::Oracle).unwrap());
    let ok = (tfidf.em - 56.84).abs() <= 1.5
        && (tfidf.f1 - 72.02).abs() <= 1.5
        && (oracle.em - 76.74).abs() <= 1.0
        && (oracle.f1 - 93.85).abs() <= 1.0;
    check(
        ok,
        format!(
            "tf-idf EM {:.2} F {:.2} (want 56.84/72.02 ±1.5), oracle EM {:.2} F {:.2} (want 76.74/93.85 ±1.0)",
            tfidf.em, tfidf.f1, oracle.em, oracle.f1
        ),
    )
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "su", "te", "ra", "vi", "no", "pä", "hy", "ku", "sa", "jo", "el", "ti",
        "ön",
    ];
    (0..rng.gen_range(1..4))
        .map(|_| *SYLLABLES.choose(rng).unwrap())
        .collect()
}

/// Random documents over a few hundred pseudo-words. Most golds are whole
/// sentences; the rest are cut inside a sentence or run into the next one.
/// Queries reuse most gold words in shuffled order.
fn synthetic_retrieval(
    rng: &mut ChaCha8Rng,
    docs_n: usize,
) -> (Vec<Document>, Vec<SpanExample>, Vec<String>) {
    let mut vocab: Vec<String> = (0..400).map(|_| pseudo_word(rng)).collect();
    vocab.sort();
    vocab.dedup();
    let mut documents = Vec::new();
    let mut examples = Vec::new();
    for d in 0..docs_n {
        let text = (0..rng.gen_range(2..8))
            .map(|_| {
                let words: Vec<&str> = (0..rng.gen_range(4..14))
                    .map(|_| vocab.choose(rng).unwrap().as_str())
                    .collect();
                let t = words.join(" ");
                let mut cs = t.chars();
                let first = cs.next().unwrap();
                first.to_uppercase().chain(cs).collect::<String>() + "."
            })
            .collect::<Vec<_>>()
            .join(" ");
        let doc = Document {
            doc_id: format!("s{d}"),
            genre: if d % 2 == 0 { "subtitle" } else { "news" }.into(),
            text,
        };
        let tokens = textproc::tokenize(&doc.text);
        let words: Vec<_> = tokens.words().collect();
        let sentences = textproc::split_sentences(&doc.text).sentences;
        let in_sentence = |s: &CharSpan| -> Vec<usize> {
            (0..words.len())
                .filter(|&i| s.contains(&words[i].char_span))
                .collect()
        };
        for q in 0..3 {
            let k = rng.gen_range(0..sentences.len());
            let idx = in_sentence(&sentences[k]);
            let (mut a, mut b) = (idx[0], *idx.last().unwrap());
            match rng.gen_range(0..8) {
                0 => a = rng.gen_range(a..=b),
                1 => b = rng.gen_range(a..=b),
                2 if k + 1 < sentences.len() => b = (b + rng.gen_range(1..4)).min(words.len() - 1),
                _ => {}
            }
            let gold = CharSpan::new(words[a].char_span.start, words[b].char_span.end);
            let mut query: Vec<String> = words[a..=b]
                .iter()
                .map(|t| {
                    if rng.gen_bool(0.8) {
                        t.surface.to_lowercase()
                    } else {
                        vocab.choose(rng).unwrap().clone()
                    }
                })
                .collect();
            query.shuffle(rng);
            examples.push(SpanExample {
                example_id: format!("s{d}#{q}"),
                query: query.join(" "),
                context_doc_id: doc.doc_id.clone(),
                gold_span: Some(gold),
                gold_text: doc.slice(&gold).map(str::to_string),
                counterpart_span: None,
                direction: Direction::OneToTwo,
                meta: ExampleMeta {
                    label: Some(ParaphraseLabel::context_dependent()),
                    genre: doc.genre.clone(),
                    split: Split::Test,
                },
            });
        }
        documents.push(doc);
    }
    (documents, examples, vocab)
}

fn fixture_dominance() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let f = |name: &str| fixtures.join(name).to_string_lossy().into_owned();
    let o = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let docs = f("documents.jsonl");
    run_bin(&[
        "convert",
        "--pairs",
        &f("pairs.jsonl"),
        "--documents",
        &docs,
        "--out",
        &o("examples.jsonl"),
    ])?;
    // retrieve fails on a dominance violation
    run_bin(&[
        "retrieve",
        "--examples",
        &o("examples.jsonl"),
        "--documents",
        &docs,
        "--split",
        "test",
        "--method",
        "tfidf",
        "--out",
        &o("tfidf.jsonl"),
    ])
}

fn oracle_dominance() -> Verdict {
    if let Err(e) = fixture_dominance() {
        return Verdict::Fail(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    let runs = 20;
    for _ in 0..runs {
        let (documents, examples, vocab) = synthetic_retrieval(&mut rng, 40);
        let docs = corpus::index_documents(&documents).unwrap();
        let texts: Vec<&str> = documents.iter().map(|d| d.text.as_str()).collect();
        let model = baselines::fit_tfidf(texts, TfIdfConfig::default()).unwrap();
        // embeddings: bag-of-words counts, a stand-in for an external encoder
        let embed = |t: &str| -> Vec<f64> {
            let toks = textproc::normalized(t, true);
            vocab
                .iter()
                .map(|v| toks.iter().filter(|x| *x == v).count() as f64 + 0.01)
                .collect()
        };
        let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
        for r in baselines::embedding_requests(&examples, &docs).unwrap() {
            vectors.insert(r.key, embed(&r.text));
        }
        for retriever in [
            SentenceRetriever::TfIdf(&model),
            SentenceRetriever::Embedding(&vectors),
        ] {
            let preds = baselines::retrieve_all(&examples, &docs, retriever).unwrap();
            let d = report::oracle_dominance(&examples, &preds, &docs, Normalization::Normalized)
                .unwrap();
            worst_margin = worst_margin.min(d.oracle_f1 - d.method_f1);
            if !d.holds() {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!(
            "fixture tf-idf run via CLI holds; {runs} synthetic runs x 2 baselines, {violations} violations, smallest oracle margin {worst_margin:.2} F points"
        ),
    )
}

type Words = Option<(usize, usize)>;

fn error_partition() -> Verdict {
    let words: Vec<String> = (0..60).map(|i| format!("w{i:02}")).collect();
    let doc = Document {
        doc_id: "d".into(),
        genre: "subtitle".into(),
        text: words.join(" "),
    };
    let span = |a: usize, b: usize| CharSpan::new(4 * a, 4 * b - 1);
    let mut negatives = NegativeRegistry::default();
    negatives.add("d", span(50, 53));
    negatives.add("d", span(55, 57));
    // (gold word range, predicted word range, expected category)
    let cases: Vec<(Words, Words, ErrorCategory)> = vec![
        (Some((0, 3)), None, ErrorCategory::NullPrediction),
        (Some((5, 9)), None, ErrorCategory::NullPrediction),
        (Some((10, 12)), None, ErrorCategory::NullPrediction),
        (
            Some((0, 3)),
            Some((50, 53)),
            ErrorCategory::PredictedNegativeSpan,
        ),
        (None, Some((55, 57)), ErrorCategory::PredictedNegativeSpan),
        (None, Some((50, 53)), ErrorCategory::PredictedNegativeSpan),
        (
            Some((0, 6)),
            Some((1, 3)),
            ErrorCategory::PartialPredSubstrGold,
        ),
        (
            Some((10, 20)),
            Some((10, 12)),
            ErrorCategory::PartialPredSubstrGold,
        ),
        (
            Some((20, 25)),
            Some((22, 25)),
            ErrorCategory::PartialPredSubstrGold,
        ),
        (
            Some((30, 33)),
            Some((31, 32)),
            ErrorCategory::PartialPredSubstrGold,
        ),
        (
            Some((2, 3)),
            Some((0, 6)),
            ErrorCategory::PartialGoldSubstrPred,
        ),
        (
            Some((10, 12)),
            Some((10, 20)),
            ErrorCategory::PartialGoldSubstrPred,
        ),
        (
            Some((24, 25)),
            Some((20, 25)),
            ErrorCategory::PartialGoldSubstrPred,
        ),
        (
            Some((31, 32)),
            Some((30, 40)),
            ErrorCategory::PartialGoldSubstrPred,
        ),
        (
            Some((0, 5)),
            Some((3, 8)),
            ErrorCategory::PartialOtherOverlap,
        ),
        (
            Some((10, 14)),
            Some((8, 12)),
            ErrorCategory::PartialOtherOverlap,
        ),
        (
            Some((20, 30)),
            Some((25, 35)),
            ErrorCategory::PartialOtherOverlap,
        ),
        (Some((0, 5)), Some((30, 35)), ErrorCategory::Other),
        (Some((10, 12)), Some((40, 45)), ErrorCategory::Other),
        (None, Some((40, 45)), ErrorCategory::Other),
    ];
    let mut wrong = Vec::new();
    let mut got = Vec::new();
    for (i, (gold, pred, want)) in cases.iter().enumerate() {
        let gold = gold.map(|(a, b)| span(a, b));
        let example = SpanExample {
            example_id: format!("e{i}"),
            query: "q".into(),
            context_doc_id: "d".into(),
            gold_span: gold,
            gold_text: gold.and_then(|g| doc.slice(&g)).map(str::to_string),
            counterpart_span: None,
            direction: Direction::OneToTwo,
            meta: ExampleMeta {
                label: None,
                genre: "subtitle".into(),
                split: Split::Test,
            },
        };
        let p = pred.map(|(a, b)| span(a, b));
        let prediction = SpanPrediction {
            example_id: example.example_id.clone(),
            span: p,
            text: p.and_then(|s| doc.slice(&s)).map(str::to_string),
            score: 0.0,
            null_score: None,
            best_slice: None,
        };
        match analysis::categorize_error(
            &prediction,
            &example,
            &doc,
            &negatives,
            Normalization::Normalized,
        ) {
            Ok(c) if c == *want => got.push(c),
            other => wrong.push((i, format!("{other:?}"))),
        }
    }
    let dist = ErrorDistribution::from_categories(got.iter().copied());
    let total: f64 = dist.percent.values().sum();
    let all_present = ErrorCategory::ALL
        .iter()
        .all(|c| dist.counts.contains_key(c));
    check(
        wrong.is_empty() && all_present && (total - 100.0).abs() < 1e-9,
        format!("20 mispredictions, misassigned {wrong:?}, percentages sum to {total}"),
    )
}

fn augmentation() -> Verdict {
    let words = |n: usize| vec!["sana"; n].join(" ");
    let docs = vec![
        Document {
            doc_id: "w100".into(),
            genre: "news".into(),
            text: words(100),
        },
        Document {
            doc_id: "w101".into(),
            genre: "news".into(),
            text: words(101),
        },
    ];
    let targets = augment::sample_targets(&docs, 0).unwrap();
    let words_ok = targets.targets.len() == 1
        && targets.targets[0].source_doc_id == "w100"
        && targets.dropped_long == ["w101"];

    let record = |sub: usize| BackTranslationRecord {
        source_doc_id: "d".into(),
        original: OriginalSentence {
            start: 0,
            end: 5,
            text: "kissa".into(),
        },
        back_translation: "katti".into(),
        subword_count: Some(sub),
        word_count: 1,
    };
    let filtered = augment::filter_bt(vec![record(380), record(381)], Normalization::Normalized);
    let subwords_ok = filtered.kept.len() == 1 && filtered.kept[0].subword_count == Some(380);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = synthetic_corpus(&mut rng, 37, 0);
    let examples = corpus::convert_to_examples(&c, Setup::One);
    let docs = corpus::index_documents(&c.documents).unwrap();
    let doubled = augment::double_with_irretrievables(&examples, &docs).unwrap();
    let p = examples.len();
    let gold_gone = doubled
        .examples
        .iter()
        .zip(doubled.examples.iter().skip(1))
        .all(|(a, b)| {
            if !a.is_retrievable() || b.is_retrievable() {
                return true;
            }
            let d = doubled
                .documents
                .iter()
                .find(|d| d.doc_id == b.context_doc_id)
                .unwrap();
            !d.text.contains(a.gold_text.as_deref().unwrap())
        });
    let double_ok = doubled.examples.len() == 2 * p && gold_gone;
    check(
        words_ok && subwords_ok && double_ok,
        format!(
            "100 words kept / 101 dropped: {words_ok}; 380 subwords kept / 381 dropped: {subwords_ok}; {p} examples doubled to {}",
            doubled.examples.len()
        ),
    )
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_paraspan"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline(dir: &Path) -> Result<Vec<u8>, String> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let f = |name: &str| fixtures.join(name).to_string_lossy().into_owned();
    let o = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let docs = f("documents.jsonl");
    run_bin(&[
        "convert",
        "--pairs",
        &f("pairs.jsonl"),
        "--documents",
        &docs,
        "--setup",
        "2",
        "--out",
        &o("examples.jsonl"),
    ])?;
    run_bin(&[
        "slice",
        "--examples",
        &o("examples.jsonl"),
        "--documents",
        &docs,
        "--max-seq",
        "24",
        "--overlap",
        "4",
        "--out",
        &o("slices.jsonl"),
    ])?;
    run_bin(&[
        "decode",
        "--examples",
        &o("examples.jsonl"),
        "--documents",
        &docs,
        "--mock",
        "--setup",
        "2",
        "--max-seq",
        "24",
        "--overlap",
        "4",
        "--sheets-out",
        &o("sheets.jsonl"),
        "--out",
        &o("mock.jsonl"),
    ])?;
    run_bin(&[
        "decode",
        "--examples",
        &o("examples.jsonl"),
        "--documents",
        &docs,
        "--logits",
        &o("sheets.jsonl"),
        "--setup",
        "2",
        "--out",
        &o("predictions.jsonl"),
    ])?;
    run_bin(&[
        "eval",
        "--examples",
        &o("examples.jsonl"),
        "--documents",
        &docs,
        "--predictions",
        &o("predictions.jsonl"),
        "--method",
        "mock",
        "--setup",
        "2",
        "--resources",
        &f("resources"),
        "--out",
        &o("report.json"),
        "--meta-out",
        &o("meta.json"),
    ])?;
    let mock = std::fs::read(dir.join("mock.jsonl")).map_err(|e| e.to_string())?;
    let decoded = std::fs::read(dir.join("predictions.jsonl")).map_err(|e| e.to_string())?;
    if mock != decoded {
        return Err("decoding the written sheets changed the predictions".into());
    }
    std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())
}

fn end_to_end() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (pipeline(a.path()), pipeline(b.path())) {
        (Ok(x), Ok(y)) => check(
            x == y && !x.is_empty(),
            format!(
                "convert, slice, mock-score, decode, eval twice; reports {} bytes, identical: {}",
                x.len(),
                x == y
            ),
        ),
        (Err(e), _) | (_, Err(e)) => Verdict::Fail(e),
    }
}
