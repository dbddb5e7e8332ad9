use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use drnews::corpus::{read_documents, tokenize, Featurizer, Lexicon, TfidfTable, TokenizedDoc};
use drnews::eval::{onset_metrics, ConfusionMatrix, MetricsReport};
use drnews::graph::{build_network, AttributedGraph};
use drnews::pipeline::{featurize, TfidfTables};
use drnews::predictor::{
    argmax, build_samples, export_attention, load_checkpoint, predict, save_checkpoint, train, write_attention_csv,
    Checkpoint, Labeler, NewsItem, SampleSet, Split,
};
use drnews::subnode::{decompose, embed_news, infer_unseen, read_vectors, write_vectors, EmbeddingTable};
use drnews::swarch::{fit_swarch, hamilton_filter, label_crises, read_regimes, read_returns, write_regimes, FitResult};
use drnews::synth::{gen_corpus, gen_market, write_synth};
use drnews::walk::{read_walks, sample_walks, write_walks};
use drnews::Error;
use serde::{Deserialize, Serialize};

use crate::config::LabelerKind;
use crate::error::CliError;
use crate::manifest::{sha256_file, Run};

pub const TFIDF_TITLE: &str = "tfidf_title.tsv";
pub const TFIDF_BODY: &str = "tfidf_body.tsv";
pub const TFIDF_COMBINED: &str = "tfidf_combined.tsv";
pub const EDGES: &str = "edges.tsv";
pub const NODES: &str = "nodes.jsonl";
pub const FEATURIZER: &str = "featurizer.json";
pub const WALKS: &str = "walks.txt";
pub const FEATURE_VECTORS: &str = "features.vec";
pub const CONTEXT_VECTORS: &str = "contexts.vec";
pub const NEWS_VECTORS: &str = "news_vectors.txt";
pub const INFERRED_VECTORS: &str = "inferred_vectors.txt";
pub const SWARCH_PARAMS: &str = "swarch_params.json";
pub const REGIMES: &str = "regimes.csv";
pub const SAMPLES: &str = "samples.bin";
pub const MODEL: &str = "model.bin";
pub const HISTORY: &str = "history.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const METRICS: &str = "metrics.json";
pub const CONFUSION: &str = "confusion.csv";
pub const ATTENTION: &str = "attention.csv";

type Res<T> = Result<T, CliError>;

fn create(path: &Path) -> Res<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Res<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|_| CliError::missing(path))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Res<()> {
    let mut out = create(path)?;
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Res<()> {
    let text = serde_json::to_string_pretty(value).expect("value serialises");
    std::fs::write(path, text + "\n").map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Res<T> {
    let text = std::fs::read_to_string(path).map_err(|_| CliError::missing(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn tokens(run: &mut Run) -> Res<(Vec<drnews::corpus::Document>, Vec<TokenizedDoc>)> {
    let path = run.input(run.config.corpus())?;
    let docs = run.time("read_corpus", || read_documents(&path))?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let toks = docs.iter().map(|d| tokenize(d, &run.config.tokenizer)).collect();
    Ok((docs, toks))
}

fn lexicon(run: &mut Run) -> Res<Option<Lexicon>> {
    if !run.config.features.sentiment {
        return Ok(None);
    }
    let (pos, neg) = run.config.lexicon_paths();
    let pos = run.input(pos)?;
    let neg = run.input(neg)?;
    Ok(Some(Lexicon::load(&pos, &neg, run.config.tokenizer.lowercase)?))
}

pub fn tfidf(run: &mut Run) -> Res<()> {
    let (_, toks) = tokens(run)?;
    let tables = run.time("tfidf", || TfidfTables::compute(&toks))?;
    for (name, table) in [
        (TFIDF_TITLE, &tables.title),
        (TFIDF_BODY, &tables.body),
        (TFIDF_COMBINED, &tables.combined),
    ] {
        let path = run.output(name);
        write_with(&path, |out| table.write_tsv(out))?;
    }
    run.detail("documents", toks.len());
    Ok(())
}

fn read_table(run: &mut Run, name: &str) -> Res<TfidfTable> {
    let path = run.artifact(name)?;
    Ok(TfidfTable::read_tsv(open(&path)?, &path.display().to_string())?)
}

pub fn graph(run: &mut Run) -> Res<()> {
    let path = run.input(run.config.corpus())?;
    let docs = read_documents(&path)?;
    let lexicon = lexicon(run)?;
    let tables = TfidfTables {
        title: read_table(run, TFIDF_TITLE)?,
        body: read_table(run, TFIDF_BODY)?,
        combined: read_table(run, TFIDF_COMBINED)?,
    };
    let cfg = run.config.clone();
    let feats = run.time("featurize", || {
        featurize(&docs, &tables, lexicon, &cfg.tokenizer, &cfg.elements, &cfg.features)
    })?;
    let full = run.time("build", || build_network(&feats.entries, &tables.title, &tables.body))?;
    let pruned = run.time("prune", || full.prune())?;
    let edges = run.output(EDGES);
    write_with(&edges, |out| pruned.write_edges(out))?;
    let nodes = run.output(NODES);
    write_with(&nodes, |out| pruned.write_nodes(out))?;
    write_json(&run.output(FEATURIZER), &feats.featurizer)?;
    run.detail("nodes_before_pruning", full.n_nodes());
    run.detail("nodes", pruned.n_nodes());
    run.detail("edges", pruned.n_edges());
    run.detail("pruned_news", pruned.removed_news().len());
    run.detail("documents_without_features", &feats.dropped);
    run.detail("element_vocabulary", feats.featurizer.vocabulary.len());
    Ok(())
}

fn read_graph(run: &mut Run) -> Res<AttributedGraph> {
    let edges = run.artifact(EDGES)?;
    let nodes = run.artifact(NODES)?;
    Ok(AttributedGraph::read(open(&edges)?, open(&nodes)?)?)
}

pub fn walk(run: &mut Run) -> Res<()> {
    let graph = read_graph(run)?;
    let cfg = run.config.walk.clone();
    let walks = run.time("walk", || sample_walks(&graph, &cfg))?;
    let path = run.output(WALKS);
    write_with(&path, |out| write_walks(&graph, &walks, out))?;
    run.detail("walks", walks.len());
    Ok(())
}

pub fn train_embed(run: &mut Run) -> Res<()> {
    let graph = read_graph(run)?;
    let walks_path = run.artifact(WALKS)?;
    let walks = read_walks(&graph, open(&walks_path)?)?;
    let dec = decompose(&walks, &graph)?;
    let cfg = run.config.train.clone();
    let model = run.time("train", || drnews::subnode::train(&dec, &cfg))?;
    let features = run.output(FEATURE_VECTORS);
    write_with(&features, |out| model.features.write_text(out))?;
    let contexts = run.output(CONTEXT_VECTORS);
    write_with(&contexts, |out| model.contexts.write_text(out))?;
    run.detail("features", model.features.len());
    run.detail("epoch_loss", &model.epoch_loss);
    Ok(())
}

fn read_table_vec(run: &mut Run) -> Res<EmbeddingTable> {
    let path = run.artifact(FEATURE_VECTORS)?;
    Ok(EmbeddingTable::read_text(open(&path)?)?)
}

pub fn embed(run: &mut Run) -> Res<()> {
    let graph = read_graph(run)?;
    let table = read_table_vec(run)?;
    let mut bags: BTreeMap<&str, &drnews::corpus::FeatureBag> = graph
        .nodes()
        .iter()
        .filter(|n| n.kind == drnews::graph::NodeKind::News)
        .map(|n| (n.id.as_str(), &n.features))
        .collect();
    bags.extend(graph.removed_news().iter().map(|(id, bag)| (id.as_str(), bag)));
    let mut rows = Vec::with_capacity(bags.len());
    let mut skipped = 0;
    for (id, bag) in bags {
        let (v, s) = embed_news(bag, &table)?;
        skipped += s;
        rows.push((id.to_string(), v));
    }
    let path = run.output(NEWS_VECTORS);
    write_with(&path, |out| write_vectors(&rows, out))?;
    run.detail("documents", rows.len());
    run.detail("skipped_features", skipped);
    Ok(())
}

pub fn infer(run: &mut Run, input: &Path, output: Option<PathBuf>) -> Res<()> {
    let input = run.input(input.to_path_buf())?;
    let docs = read_documents(&input)?;
    let featurizer: Featurizer = read_json(&run.artifact(FEATURIZER)?)?;
    let table = read_table_vec(run)?;
    let mut rows = Vec::new();
    let mut unembedded = Vec::new();
    for doc in &docs {
        match infer_unseen(doc, &table, &featurizer) {
            Ok((v, _)) => rows.push((doc.id.clone(), v)),
            Err(Error::AllOutOfVocabulary(_) | Error::EmptyFeatureBag(_)) => unembedded.push(doc.id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    let path = match output {
        Some(p) => run.output_path(p),
        None => run.output(INFERRED_VECTORS),
    };
    write_with(&path, |out| write_vectors(&rows, out))?;
    run.detail("embedded", rows.len());
    run.detail("unembedded", unembedded);
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SwarchArtifact {
    config_hash: String,
    fit: FitResult,
}

fn returns(run: &mut Run) -> Res<Vec<(NaiveDate, f64)>> {
    let path = run.input(run.config.returns())?;
    Ok(read_returns(&path)?)
}

pub fn fit(run: &mut Run) -> Res<()> {
    let series = returns(run)?;
    let y: Vec<f64> = series.iter().map(|r| r.1).collect();
    let cfg = run.config.swarch.fit.clone();
    let fit = run.time("fit", || fit_swarch(&y, None, &cfg))?;
    run.detail("log_likelihood", fit.log_likelihood);
    run.detail("params", fit.params);
    write_json(
        &run.output(SWARCH_PARAMS),
        &SwarchArtifact {
            config_hash: run.hash.clone(),
            fit,
        },
    )
}

pub fn label(run: &mut Run, threshold: Option<f64>) -> Res<()> {
    let series = returns(run)?;
    let artifact: SwarchArtifact = read_json(&run.artifact(SWARCH_PARAMS)?)?;
    let y: Vec<f64> = series.iter().map(|r| r.1).collect();
    let mut out = hamilton_filter(&y, &artifact.fit.params)?;
    let threshold = threshold.unwrap_or(run.config.swarch.threshold);
    out.regimes.labels = label_crises(&out.regimes.prob_high, threshold);
    let dates: Vec<NaiveDate> = series.iter().map(|r| r.0).collect();
    let path = run.output(REGIMES);
    write_regimes(&path, &dates, &out.regimes)?;
    run.detail("threshold", threshold);
    run.detail("crisis_days", out.regimes.labels.iter().filter(|&&l| l == 1).count());
    Ok(())
}

pub fn samples(run: &mut Run) -> Res<()> {
    let corpus = run.input(run.config.corpus())?;
    let docs = read_documents(&corpus)?;
    let series = returns(run)?;
    let vec_path = run.artifact(NEWS_VECTORS)?;
    let vectors = read_vectors(open(&vec_path)?)?;
    let dates: HashMap<&str, NaiveDate> = docs.iter().map(|d| (d.id.as_str(), d.date)).collect();
    let mut news: BTreeMap<NaiveDate, Vec<NewsItem>> = BTreeMap::new();
    for (id, v) in vectors {
        let date = *dates
            .get(id.as_str())
            .ok_or_else(|| CliError::input(format!("vector for unknown document `{id}`")))?;
        news.entry(date).or_default().push((id, v));
    }
    let s = &run.config.samples;
    let labeler = match s.labeler {
        LabelerKind::Movement => Labeler::Movement {
            up: s.up_threshold,
            down: s.down_threshold,
        },
        LabelerKind::Direction => Labeler::Direction,
        LabelerKind::Crisis => {
            let path = run.artifact(REGIMES)?;
            Labeler::Crisis(
                read_regimes(&path)?
                    .into_iter()
                    .map(|r| (r.date, r.crisis_label))
                    .collect(),
            )
        }
    };
    let cfg = run.config.samples.samples.clone();
    let mut set = run.time("build", || build_samples(&news, &series, &cfg, &labeler))?;
    set.metadata.insert("config_hash".into(), run.hash.clone());
    set.metadata.insert("seed".into(), run.config.seed.to_string());
    let path = run.output(SAMPLES);
    set.write(&path)?;
    run.detail("samples", set.samples.len());
    run.detail("days", set.days.len());
    run.detail("labeler", &set.labeler);
    Ok(())
}

pub fn train_predict(run: &mut Run) -> Res<()> {
    let samples_path = run.artifact(SAMPLES)?;
    let set = SampleSet::read(&samples_path)?;
    let cfg = run.config.predictor.clone();
    let split = Split::chronological(&set, &cfg);
    let (model, history) = run.time("train", || train(&set, &split, &cfg))?;
    let mut meta = Checkpoint::new(&model, &cfg, &history);
    meta.metadata.insert("config_hash".into(), run.hash.clone());
    meta.metadata
        .insert("samples_sha256".into(), sha256_file(&samples_path)?);
    let path = run.output(MODEL);
    save_checkpoint(&path, &model, &meta)?;
    write_json(&run.output(HISTORY), &history)?;
    run.detail("split", &split);
    run.detail("best_epoch", history.best_epoch);
    run.detail("epochs_run", history.epochs.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

fn indices(split: &Split, which: SplitArg, n: usize) -> Vec<usize> {
    match which {
        SplitArg::Train => split.train.clone().collect(),
        SplitArg::Validation => split.validation.clone().collect(),
        SplitArg::Test => split.test.clone().collect(),
        SplitArg::All => (0..n).collect(),
    }
}

fn load_trained(run: &mut Run, force: bool) -> Res<(SampleSet, drnews::predictor::Model, Checkpoint)> {
    let samples_path = run.artifact(SAMPLES)?;
    let model_path = run.artifact(MODEL)?;
    let set = SampleSet::read(&samples_path)?;
    let (model, meta) = load_checkpoint(&model_path)?;
    let produced = meta.metadata.get("config_hash").map(String::as_str).unwrap_or("");
    if produced != run.hash && !force {
        return Err(CliError::hash_mismatch(format!(
            "model was trained under config {produced} but the current config is {}; pass --force to override",
            run.hash
        )));
    }
    let samples_hash = sha256_file(&samples_path)?;
    if meta.metadata.get("samples_sha256") != Some(&samples_hash) && !force {
        return Err(CliError::hash_mismatch(
            "samples changed since the model was trained; pass --force to override",
        ));
    }
    Ok((set, model, meta))
}

pub fn evaluate(run: &mut Run, force: bool, which: SplitArg) -> Res<()> {
    let (set, model, meta) = load_trained(run, force)?;
    let split = Split::chronological(&set, &meta.config);
    let idx = indices(&split, which, set.samples.len());
    let probs = run.time("predict", || predict(&model, &set, &idx))?;
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let actual = set.labels(&idx);
    let cm = ConfusionMatrix::from_labels(&predicted, &actual, set.classes)?;
    let onsets = if set.labeler == "crisis" {
        let truth: Vec<u8> = actual.iter().map(|&l| l as u8).collect();
        let pred: Vec<u8> = predicted.iter().map(|&l| l as u8).collect();
        let dates: Vec<NaiveDate> = idx.iter().map(|&i| set.days[set.samples[i].target].date).collect();
        Some(onset_metrics(&truth, &pred, Some(&dates), run.config.eval.lookahead)?)
    } else {
        None
    };
    let report = MetricsReport::new(&cm, onsets);
    let path = run.output(PREDICTIONS);
    write_with(&path, |out| {
        let cols: Vec<String> = (0..set.classes).map(|k| format!("prob_{k}")).collect();
        writeln!(out, "date,label,predicted,{}", cols.join(","))?;
        for ((&i, p), &pred) in idx.iter().zip(&probs).zip(&predicted) {
            let s = &set.samples[i];
            let ps: Vec<String> = p.iter().map(f64::to_string).collect();
            writeln!(out, "{},{},{pred},{}", set.days[s.target].date, s.label, ps.join(","))?;
        }
        Ok(())
    })?;
    let metrics = run.output(METRICS);
    #[derive(Serialize)]
    struct Metrics<'a> {
        config_hash: &'a str,
        split: String,
        #[serde(flatten)]
        report: &'a MetricsReport,
    }
    write_json(
        &metrics,
        &Metrics {
            config_hash: &run.hash,
            split: format!("{which:?}").to_lowercase(),
            report: &report,
        },
    )?;
    let confusion = run.output(CONFUSION);
    write_with(&confusion, |out| cm.write_csv(out))?;
    run.detail("accuracy", report.accuracy);
    run.detail("mcc", report.mcc);
    run.detail("samples", report.samples);
    Ok(())
}

pub fn attention(run: &mut Run, force: bool, which: SplitArg) -> Res<()> {
    let (set, model, meta) = load_trained(run, force)?;
    let split = Split::chronological(&set, &meta.config);
    let idx = indices(&split, which, set.samples.len());
    let rows = run.time("attention", || export_attention(&model, &set, &idx))?;
    let path = run.output(ATTENTION);
    write_with(&path, |out| write_attention_csv(&rows, out))?;
    run.detail("rows", rows.len());
    Ok(())
}

pub fn synth(run: &mut Run) -> Res<()> {
    let cfg = run.config.synth.clone();
    let corpus = run.time("corpus", || gen_corpus(&cfg))?;
    let market = run.time("market", || gen_market(&cfg, &corpus))?;
    write_synth(&run.dir, &corpus, &market)?;
    for name in [
        drnews::synth::CORPUS_FILE,
        drnews::synth::TOPICS_FILE,
        drnews::synth::POSITIVE_FILE,
        drnews::synth::NEGATIVE_FILE,
        drnews::synth::RETURNS_FILE,
        drnews::synth::REGIMES_FILE,
    ] {
        run.output(name);
    }
    run.detail("documents", corpus.documents.len());
    run.detail("days", corpus.days.len());
    Ok(())
}
