use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::aggregate::{parse_predictions, write_predictions, AggregateError, PredictionRecord};
use crate::baselines::{
    random_predictions, BaselineKind, DocTfidfSvm, MajorityVote, SpanTfidfCosine, SpanTfidfSvm, SquadModel, SvmConfig,
    DEFAULT_STRIDE,
};
use crate::context::{align_teacher, hypothesis_ids, segment_for_sequence};
use crate::corpus::{import_contractnli, load_corpus, save_corpus, stratified_split, Corpus, SplitRatios};
use crate::metrics::{evaluate, EvalOptions, EvalReport, UndefinedF1};
use crate::model::{
    build_examples, load_checkpoint, save_checkpoint, train, train_oracle, LossTrace, Model,
};
use crate::pipeline::{
    fit_vocabulary, oracle_examples, predict_corpus, predict_oracle, predict_squad, squad_examples, tokenize_corpus,
    PredictOptions,
};
use crate::segmentation::{TokenizedDocument, Vocabulary};
use crate::synthetic;

use super::{CliError, Command, ExperimentConfig, GridSpec, Preset, UndefinedF1Arg};

pub(super) fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Import { input, output } => import(&input, &output),
        Command::Split { corpus, out_dir, seed } => split(&corpus, &out_dir, seed),
        Command::Synth {
            output,
            documents,
            seed,
        } => {
            let corpus = synthetic::generate(documents, seed);
            save_corpus(&corpus, &output)?;
            println!("{} documents written to {}", corpus.len(), output.display());
            Ok(())
        }
        Command::InitConfig { preset, grid, output } => init_config(preset, grid, output.as_deref()),
        Command::BuildVocab { config } => {
            let config = load_config(&config)?;
            let corpus = load_corpus(&config.paths.train_corpus)?;
            let vocab = fit_vocabulary(&corpus, &config.vocab.builder());
            write_vocab(&vocab, &config.paths.vocab)?;
            println!("{} subwords written to {}", vocab.len(), config.paths.vocab.display());
            Ok(())
        }
        Command::Train { config, grid } => {
            let config = load_config(&config)?;
            match grid {
                None => train_single(&config).map(|_| ()),
                Some(path) => train_grid(&config, &path),
            }
        }
        Command::Predict {
            config,
            corpus,
            output,
        } => {
            let config = load_config(&config)?;
            let corpus_path = corpus.unwrap_or_else(|| config.paths.train_corpus.clone());
            let output = output.unwrap_or_else(|| config.paths.output_dir.join("predictions.jsonl"));
            let corpus = load_corpus(&corpus_path)?;
            let vocab = read_vocab(&config.paths.vocab)?;
            let model = load_checkpoint(&config.paths.checkpoint)?;
            let records = predict_with(&config, &model, &corpus, &vocab)?;
            write_text(&output, &write_predictions(&records))?;
            println!("{} predictions written to {}", records.len(), output.display());
            Ok(())
        }
        Command::Baseline {
            kind,
            train,
            corpus,
            output,
            config,
            seed,
        } => {
            let train = load_corpus(&train)?;
            let target = load_corpus(&corpus)?;
            let config = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig::default(),
            };
            let records = baseline(kind, &train, &target, &config, seed)?;
            write_text(&output, &write_predictions(&records))?;
            println!("{} predictions written to {}", records.len(), output.display());
            Ok(())
        }
        Command::Eval {
            gold,
            predictions,
            system,
            undefined_f1,
            output,
        } => {
            let gold = load_corpus(&gold)?;
            let text = read_text(&predictions)?;
            let records = parse_predictions(&text).map_err(|e| match e {
                AggregateError::Dump { .. } => CliError::input(format!("{}: {e}", predictions.display())),
                other => CliError::runtime(other.to_string()),
            })?;
            let opts = EvalOptions {
                undefined_f1: match undefined_f1 {
                    UndefinedF1Arg::Exclude => UndefinedF1::Exclude,
                    UndefinedF1Arg::Zero => UndefinedF1::Zero,
                },
                ..EvalOptions::default()
            };
            let report = evaluate(&gold, &records, &opts).map_err(|e| CliError::input(e.to_string()))?;
            print!("{}", report.table(&system));
            if let Some(path) = output {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::InspectContexts {
            config,
            doc_id,
            hypothesis,
            corpus,
        } => inspect_contexts(&load_config(&config)?, &doc_id, hypothesis, corpus),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn read_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    Vocabulary::parse(&read_text(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_vocab(vocab: &Vocabulary, path: &Path) -> Result<(), CliError> {
    write_text(path, &vocab.to_file_string())
}

/// Load, resolve relative paths against the config's directory, validate.
fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    config.resolve_paths(base);
    Ok(config)
}

fn import(input: &Path, output: &Path) -> Result<(), CliError> {
    let corpus = import_contractnli(input)?;
    save_corpus(&corpus, output)?;
    let counts = corpus.format_counts();
    let formats: Vec<String> = counts.iter().map(|(f, n)| format!("{} {n}", f.as_str())).collect();
    println!("{} documents ({})", corpus.len(), formats.join(", "));
    Ok(())
}

fn split(path: &Path, out_dir: &Path, seed: u64) -> Result<(), CliError> {
    let corpus = load_corpus(path)?;
    let (train, dev, test) = stratified_split(&corpus, SplitRatios::default(), seed)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        save_corpus(part, out_dir.join(format!("{name}.json")))?;
        println!("{name}: {} documents", part.len());
    }
    Ok(())
}

fn init_config(preset: Preset, grid: bool, output: Option<&Path>) -> Result<(), CliError> {
    let text = if grid {
        let mut text = serde_json::to_string_pretty(&GridSpec::base_search_space()).expect("grid serializes");
        text.push('\n');
        text
    } else {
        match preset {
            Preset::Default => ExperimentConfig::default(),
            Preset::Synthetic => ExperimentConfig::synthetic(),
        }
        .to_json()
    };
    match output {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Vocabulary from `paths.vocab`, built from the training corpus and saved
/// when the file does not exist yet.
fn vocab_for(config: &ExperimentConfig, corpus: &Corpus) -> Result<Vocabulary, CliError> {
    let path = &config.paths.vocab;
    if path.exists() {
        return read_vocab(path);
    }
    let vocab = fit_vocabulary(corpus, &config.vocab.builder());
    write_vocab(&vocab, path)?;
    info!("built vocabulary of {} subwords at {}", vocab.len(), path.display());
    Ok(vocab)
}

fn tokenize(corpus: &Corpus, vocab: &Vocabulary) -> Result<Vec<TokenizedDocument>, CliError> {
    tokenize_corpus(corpus, vocab).map_err(|e| CliError::input(e.to_string()))
}

struct TrainedRun {
    model: Model,
    vocab: Vocabulary,
    trace: LossTrace,
}

fn fit_model(config: &ExperimentConfig, corpus: &Corpus, vocab: Vocabulary) -> Result<TrainedRun, CliError> {
    let docs = tokenize(corpus, &vocab)?;
    let mut model = Model::new(config.model_config(vocab.len()), config.train.seed)?;
    let max_seq = config.segmentation.max_sequence_length;
    let trace = if config.oracle_nli {
        let examples = oracle_examples(corpus, &docs, &vocab, config.hypothesis_mode, max_seq)?;
        info!("training on {} oracle-evidence examples", examples.len());
        train_oracle(&mut model, &examples, &config.train)?
    } else {
        let examples = build_examples(
            corpus,
            &docs,
            &vocab,
            config.hypothesis_mode,
            max_seq,
            config.segmentation.min_surrounding_tokens,
        )?;
        info!("training on {} contexts", examples.len());
        train(&mut model, &examples, &config.train)?
    };
    Ok(TrainedRun { model, vocab, trace })
}

fn save_run(run: &TrainedRun, checkpoint: &Path, loss_csv: &Path) -> Result<(), CliError> {
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    save_checkpoint(&run.model, checkpoint)?;
    write_text(loss_csv, &run.trace.to_csv())
}

fn train_single(config: &ExperimentConfig) -> Result<TrainedRun, CliError> {
    let corpus = load_corpus(&config.paths.train_corpus)?;
    let vocab = vocab_for(config, &corpus)?;
    let run = fit_model(config, &corpus, vocab)?;
    save_run(&run, &config.paths.checkpoint, &config.paths.output_dir.join("loss.csv"))?;
    println!(
        "final loss {:.6}; checkpoint written to {}",
        run.trace.final_loss().unwrap_or(f64::NAN),
        config.paths.checkpoint.display()
    );
    Ok(run)
}

fn predict_with(
    config: &ExperimentConfig,
    model: &Model,
    corpus: &Corpus,
    vocab: &Vocabulary,
) -> Result<Vec<PredictionRecord>, CliError> {
    if model.config.encoder.vocab_size != vocab.len() {
        return Err(CliError::input(format!(
            "checkpoint expects {} subwords but the vocabulary has {}",
            model.config.encoder.vocab_size,
            vocab.len()
        )));
    }
    let docs = tokenize(corpus, vocab)?;
    let records = if config.oracle_nli {
        predict_oracle(model, corpus, &docs, vocab, config.hypothesis_mode)?
    } else {
        let opts = PredictOptions {
            hypothesis_mode: config.hypothesis_mode,
            min_surrounding_tokens: config.segmentation.min_surrounding_tokens,
            aggregation: config.aggregation(),
        };
        predict_corpus(model, corpus, &docs, vocab, &opts)?
    };
    Ok(records)
}

#[derive(Debug, Serialize)]
struct GridRun {
    run: usize,
    dev_nli_accuracy: f64,
    dev_map: f64,
    directory: PathBuf,
    config: ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct GridSummary {
    runs: Vec<GridRun>,
    /// Run numbers of the best three by dev NLI accuracy.
    top: Vec<usize>,
    top_nli_accuracy_mean: f64,
    top_nli_accuracy_std: f64,
    top_map_mean: f64,
    top_map_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn train_grid(base: &ExperimentConfig, grid_path: &Path) -> Result<(), CliError> {
    let grid: GridSpec = serde_json::from_str(&read_text(grid_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", grid_path.display())))?;
    let dev_path = base
        .paths
        .dev_corpus
        .as_ref()
        .ok_or_else(|| CliError::input("grid search needs paths.dev_corpus"))?;
    let corpus = load_corpus(&base.paths.train_corpus)?;
    let dev = load_corpus(dev_path)?;
    let vocab = vocab_for(base, &corpus)?;
    let configs = grid.expand(base);
    for config in &configs {
        config.validate()?;
    }

    let mut runs = Vec::with_capacity(configs.len());
    for (i, config) in configs.into_iter().enumerate() {
        let dir = base.paths.output_dir.join(format!("run-{i:03}"));
        info!("grid run {} of {}", i + 1, runs.capacity());
        let run = fit_model(&config, &corpus, vocab.clone())?;
        save_run(&run, &dir.join("model.json"), &dir.join("loss.csv"))?;
        write_text(&dir.join("config.json"), &config.to_json())?;
        let records = predict_with(&config, &run.model, &dev, &run.vocab)?;
        let report: EvalReport =
            evaluate(&dev, &records, &EvalOptions::default()).map_err(|e| CliError::runtime(e.to_string()))?;
        println!("run {i:03}: dev NLI accuracy {:.3}, mAP {:.3}", report.nli_accuracy, report.map);
        runs.push(GridRun {
            run: i,
            dev_nli_accuracy: report.nli_accuracy,
            dev_map: report.map,
            directory: dir,
            config,
        });
    }

    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| runs[b].dev_nli_accuracy.total_cmp(&runs[a].dev_nli_accuracy).then(a.cmp(&b)));
    order.truncate(3);
    let acc: Vec<f64> = order.iter().map(|&i| runs[i].dev_nli_accuracy).collect();
    let map: Vec<f64> = order.iter().map(|&i| runs[i].dev_map).collect();
    let (acc_mean, acc_std) = mean_std(&acc);
    let (map_mean, map_std) = mean_std(&map);
    println!(
        "best {} runs {:?}: dev NLI accuracy {acc_mean:.3} ± {acc_std:.3}, mAP {map_mean:.3} ± {map_std:.3}",
        order.len(),
        order
    );
    let summary = GridSummary {
        runs,
        top: order,
        top_nli_accuracy_mean: acc_mean,
        top_nli_accuracy_std: acc_std,
        top_map_mean: map_mean,
        top_map_std: map_std,
    };
    write_json(&base.paths.output_dir.join("grid_summary.json"), &summary)
}

fn baseline(
    kind: BaselineKind,
    train_corpus: &Corpus,
    target: &Corpus,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<PredictionRecord>, CliError> {
    let svm = SvmConfig {
        seed,
        ..SvmConfig::default()
    };
    Ok(match kind {
        BaselineKind::Majority => MajorityVote::fit(train_corpus).predict(target),
        BaselineKind::DocTfidfSvm => DocTfidfSvm::fit(train_corpus, &svm).predict(target),
        BaselineKind::SpanTfidfCosine => SpanTfidfCosine::fit(train_corpus).predict(target),
        BaselineKind::SpanTfidfSvm => SpanTfidfSvm::fit(train_corpus, &svm).predict(target),
        BaselineKind::Random => random_predictions(target, seed),
        BaselineKind::Squad => {
            let vocab = fit_vocabulary(train_corpus, &config.vocab.builder());
            let mut model = SquadModel::new(config.encoder(vocab.len()), DEFAULT_STRIDE, seed)?;
            let docs = tokenize(train_corpus, &vocab)?;
            let examples = squad_examples(&model, train_corpus, &docs, &vocab, config.hypothesis_mode)?;
            info!("training the extractive baseline on {} windows", examples.len());
            model.train(&examples, &config.train)?;
            let target_docs = tokenize(target, &vocab)?;
            predict_squad(&model, target, &target_docs, &vocab, config.hypothesis_mode)?
        }
    })
}

fn inspect_contexts(
    config: &ExperimentConfig,
    doc_id: &str,
    hypothesis: Option<u32>,
    corpus: Option<PathBuf>,
) -> Result<(), CliError> {
    let corpus = load_corpus(corpus.as_ref().unwrap_or(&config.paths.train_corpus))?;
    let doc = corpus
        .document(doc_id)
        .ok_or_else(|| CliError::input(format!("no document `{doc_id}`")))?;
    let vocab = read_vocab(&config.paths.vocab)?;
    let tokenized = TokenizedDocument::from_document(doc, &vocab).map_err(|e| CliError::input(e.to_string()))?;
    let lengths = corpus
        .hypotheses
        .iter()
        .filter(|h| hypothesis.is_none_or(|id| id == h.id))
        .map(|h| hypothesis_ids(h, &vocab, config.hypothesis_mode).map(|ids| ids.len()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(e.to_string()))?;
    // Without a hypothesis, windows are sized for the longest one.
    let hyp_len = lengths
        .into_iter()
        .max()
        .ok_or_else(|| CliError::input(format!("unknown hypothesis {}", hypothesis.unwrap_or(0))))?;
    let contexts = segment_for_sequence(
        &tokenized,
        hyp_len,
        config.segmentation.max_sequence_length,
        config.segmentation.min_surrounding_tokens,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    let annotation = hypothesis.and_then(|h| doc.annotation(h));
    for ctx in contexts {
        let ctx = match annotation {
            Some(ann) => align_teacher(ctx, ann),
            None => ctx,
        };
        println!("{}", serde_json::to_string(&ctx).expect("context serializes"));
    }
    Ok(())
}
