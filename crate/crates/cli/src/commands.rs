use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use meder::corpus::{
    class_stats, import_delimited, load_corpus, save_corpus, sniff_delimiter, toy_corpus, Corpus, LabelSet,
};
use meder::metrics::{pct, render_confusion_csv, render_json, render_table};
use meder::model::{
    ensemble_gradcheck, gradcheck_config, load_checkpoint, save_checkpoint, AnyModel, Classifier, EnsembleModel,
    SingleModel, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};
use meder::pairseq::Order;
use meder::pipeline::{prepare as prepare_data, Prepared};
use meder::tokenizer::Vocab;
use meder::trainer::{compare as compare_arms, evaluate, predict as predict_one, train as train_model};
use meder::Error;

use crate::config::{OrderChoice, RunConfig};
use crate::{Failure, SplitChoice};

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf, Error> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    Ok(cfg.out_dir.join(name))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn labels_of(cfg: &RunConfig) -> Result<LabelSet, Error> {
    match &cfg.labels {
        Some(p) => LabelSet::from_file(p),
        None => Ok(LabelSet::default()),
    }
}

/// The configured corpus, or the bundled toy corpus.
fn corpus_of(cfg: &RunConfig) -> Result<(Corpus, LabelSet, String), Error> {
    match &cfg.corpus {
        Some(p) => {
            let labels = labels_of(cfg)?;
            Ok((load_corpus(p, &labels)?, labels, p.display().to_string()))
        }
        None => {
            let (c, l) = toy_corpus()?;
            Ok((c, l, "bundled toy corpus".into()))
        }
    }
}

fn prepared(cfg: &RunConfig) -> Result<Prepared, Error> {
    let (corpus, labels, source) = corpus_of(cfg)?;
    let vocab = cfg.vocab.as_ref().map(Vocab::load).transpose()?;
    let data = prepare_data(&corpus, &labels, &cfg.pipeline()?, vocab)?;
    info!(
        "{source}: {} train / {} val / {} test pairs, vocabulary {}, {} dropped",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.vocab.len(),
        data.dropped.len()
    );
    Ok(data)
}

pub fn prepare(cfg: &RunConfig) -> CmdResult {
    let input = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| Failure::Usage("prepare needs --corpus <export.csv|export.tsv>".into()))?;
    let labels = labels_of(cfg)?;
    let text = fs::read_to_string(input).map_err(|e| io_err(input, e))?;
    let delimiter = match input.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        Some("csv") => b',',
        _ => sniff_delimiter(&text),
    };
    let imp = import_delimited(&text, delimiter, &labels)?;
    if imp.corpus.records.is_empty() {
        return Err(Error::Config(format!("{}: no valid rows ({} rejected)", input.display(), imp.rejected.len())).into());
    }
    let out = out_file(cfg, "corpus.jsonl")?;
    save_corpus(&imp.corpus.records, &out)?;
    println!("imported {} records into {}", imp.corpus.records.len(), out.display());
    println!("entity not in text: {}", imp.corpus.entity_not_in_text);
    println!("rejected rows: {}", imp.rejected.len());
    for r in &imp.rejected {
        println!("  line {}: {}", r.line, r.reason);
    }
    if !imp.rejected.is_empty() {
        let lines: String = imp
            .rejected
            .iter()
            .map(|r| serde_json::to_string(r).expect("rejected row serializes") + "\n")
            .collect();
        write(&out_file(cfg, "rejected.jsonl")?, lines)?;
    }
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> CmdResult {
    let (corpus, labels, source) = corpus_of(cfg)?;
    let st = class_stats(&corpus.records, &labels);
    println!("corpus: {source}");
    let width = labels.names().iter().map(|n| n.chars().count()).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:>6}  {:>7}", "label", "count", "share");
    for (i, name) in st.labels.iter().enumerate() {
        println!("{name:<width$}  {:>6}  {:>6}%", st.counts[i], pct(st.fraction(i)));
    }
    println!("{:<width$}  {:>6}", "total", st.total);
    println!("entity not in text: {}", corpus.entity_not_in_text);
    let spec = cfg.split_spec()?;
    let sp = meder::corpus::split(&corpus.records, &spec)?;
    println!(
        "split {} {} {} (seed {}, {}): train {}, val {}, test {}",
        spec.train,
        spec.val,
        spec.test,
        spec.seed,
        if spec.stratified { "stratified" } else { "random" },
        sp.train.len(),
        sp.val.len(),
        sp.test.len()
    );
    let fp = sp.fingerprints();
    println!("fingerprint train: {}", fp.train);
    println!("fingerprint val: {}", fp.val);
    println!("fingerprint test: {}", fp.test);
    for w in st.published_warnings() {
        println!("warning: {w}");
    }
    Ok(())
}

pub fn vocab(cfg: &RunConfig) -> CmdResult {
    let mut cfg = cfg.clone();
    cfg.vocab = None;
    let data = prepared(&cfg)?;
    let out = out_file(&cfg, "vocab.txt")?;
    data.vocab.save(&out)?;
    println!(
        "vocabulary of {} tokens from {} training records written to {}",
        data.vocab.len(),
        data.split.train.len(),
        out.display()
    );
    Ok(())
}

fn build_model(cfg: &RunConfig, data: &Prepared) -> Result<AnyModel<f32>, Error> {
    let mc = cfg.model(data.vocab.len(), data.labels.len());
    Ok(match cfg.order {
        OrderChoice::Both => EnsembleModel::new(mc)?.into(),
        OrderChoice::TextFirst => SingleModel::new(mc, Order::TextFirst)?.into(),
        OrderChoice::EntityFirst => SingleModel::new(mc, Order::EntityFirst)?.into(),
    })
}

pub fn train(cfg: &RunConfig) -> CmdResult {
    let data = prepared(cfg)?;
    let mut model = build_model(cfg, &data)?;
    let history = train_model(&mut model, &data.train, &data.val, &cfg.train())?;
    let ckpt = out_file(cfg, "model.ckpt")?;
    save_checkpoint(&model, &ckpt)?;
    data.vocab.save(out_file(cfg, "vocab.txt")?)?;
    write(&out_file(cfg, "labels.txt")?, data.labels.to_file_string())?;
    write(
        &out_file(cfg, "history.json")?,
        serde_json::to_string_pretty(&history).map_err(Error::from)? + "\n",
    )?;
    write(&out_file(cfg, "run.conf")?, cfg.to_text())?;
    println!("checkpoint written to {}", ckpt.display());
    if let Some(last) = history.epochs.last() {
        println!(
            "epochs {}, steps {}, final train loss {:.4}, best epoch {}",
            history.epochs.len(),
            history.steps,
            last.train_loss,
            history.best_epoch.map_or("-".into(), |e| e.to_string())
        );
    }
    if !data.test.is_empty() {
        let report = evaluate(&model, &data.test, data.labels.names())?;
        write(&out_file(cfg, "metrics.json")?, render_json(&report))?;
        write(
            &out_file(cfg, "confusion.csv")?,
            render_confusion_csv(&report.confusion, data.labels.names()),
        )?;
        println!("test split:");
        print!("{}", render_table(&report));
    }
    Ok(())
}

/// Directory holding the checkpoint, for locating its companion files.
fn beside(ckpt: &Path, name: &str) -> PathBuf {
    ckpt.parent().unwrap_or(Path::new(".")).join(name)
}

fn checkpoint_of(cfg: &RunConfig) -> Result<&PathBuf, Failure> {
    cfg.checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Usage("a checkpoint is required (--checkpoint)".into()))
}

fn companions(cfg: &RunConfig, ckpt: &Path) -> Result<(Vocab, LabelSet), Error> {
    let vocab_path = cfg.vocab.clone().unwrap_or_else(|| beside(ckpt, "vocab.txt"));
    let vocab = Vocab::load(&vocab_path)?;
    let labels = match &cfg.labels {
        Some(p) => LabelSet::from_file(p)?,
        None if beside(ckpt, "labels.txt").exists() => LabelSet::from_file(beside(ckpt, "labels.txt"))?,
        None => LabelSet::default(),
    };
    Ok((vocab, labels))
}

fn check_fit(model: &AnyModel<f32>, vocab: &Vocab, labels: &LabelSet) -> Result<(), Error> {
    let mc = model.config();
    if mc.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint expects {} vocabulary entries, vocabulary file has {}",
            mc.vocab_size,
            vocab.len()
        )));
    }
    if mc.n_classes != labels.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, label set has {}",
            mc.n_classes,
            labels.len()
        )));
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, which: SplitChoice) -> CmdResult {
    let ckpt = checkpoint_of(cfg)?.clone();
    let model = load_checkpoint(&ckpt)?;
    let (vocab, labels) = companions(cfg, &ckpt)?;
    check_fit(&model, &vocab, &labels)?;
    let mut cfg = cfg.clone();
    cfg.max_len = model.config().max_len;
    cfg.vocab = None;
    let (corpus, _, source) = corpus_of(&RunConfig {
        labels: cfg.labels.clone().or_else(|| Some(beside(&ckpt, "labels.txt")).filter(|p| p.exists())),
        ..cfg.clone()
    })?;
    let data = prepare_data(&corpus, &labels, &cfg.pipeline()?, Some(vocab))?;
    let (name, pairs) = match which {
        SplitChoice::Train => ("train", &data.train),
        SplitChoice::Val => ("val", &data.val),
        SplitChoice::Test => ("test", &data.test),
    };
    let report = evaluate(&model, pairs, labels.names())?;
    println!("{source}, {name} split ({} pairs):", pairs.len());
    print!("{}", render_table(&report));
    write(&out_file(&cfg, &format!("eval_{name}_metrics.json"))?, render_json(&report))?;
    write(
        &out_file(&cfg, &format!("eval_{name}_confusion.csv"))?,
        render_confusion_csv(&report.confusion, labels.names()),
    )?;
    Ok(())
}

pub fn predict(cfg: &RunConfig, text: &str, entity: &str) -> CmdResult {
    let ckpt = checkpoint_of(cfg)?;
    let model = load_checkpoint(ckpt)?;
    let (vocab, labels) = companions(cfg, ckpt)?;
    check_fit(&model, &vocab, &labels)?;
    let p = predict_one(&model, &vocab, &cfg.prep()?, &labels, text, entity)?;
    println!("{}", serde_json::to_string_pretty(&p).map_err(Error::from)?);
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> CmdResult {
    let data = prepared(cfg)?;
    let mc = cfg.model(data.vocab.len(), data.labels.len());
    let report = compare_arms(&data, &mc, &cfg.train())?;
    let out = out_file(cfg, "comparison.json")?;
    write(&out, report.to_json())?;
    let (s, e, d) = (&report.single.test, &report.ensemble.test, &report.deltas);
    println!("{:<12} {:>9} {:>9} {:>9}", "", "single", "ensemble", "delta");
    for (name, a, b, delta) in [
        ("accuracy", s.accuracy, e.accuracy, d.accuracy),
        ("micro F1", s.micro_f1, e.micro_f1, d.micro_f1),
        ("macro F1", s.macro_f1, e.macro_f1, d.macro_f1),
        ("weighted F1", s.weighted_f1, e.weighted_f1, d.weighted_f1),
    ] {
        println!("{name:<12} {:>8}% {:>8}% {:>+9.2}", pct(a), pct(b), delta * 100.0);
    }
    println!("report written to {}", out.display());
    Ok(())
}

pub fn gradcheck(seed: u64, sample: Option<usize>) -> CmdResult {
    let mc = gradcheck_config(seed);
    println!(
        "ensemble: vocab {}, max_len {}, d_model {}, {} heads, {} layer(s), d_ff {}, {} classes; h = {GRADCHECK_STEP:e}",
        mc.vocab_size, mc.max_len, mc.d_model, mc.n_heads, mc.n_layers, mc.d_ff, mc.n_classes
    );
    let r = ensemble_gradcheck(&mc, seed, sample)?;
    println!("checked {} parameter scalars", r.checked);
    println!(
        "max_rel_err = {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
        r.max_rel_err, r.worst_param, r.worst_index, r.analytic, r.numeric
    );
    if r.passes(GRADCHECK_TOLERANCE) {
        println!("max_rel_err < {GRADCHECK_TOLERANCE:e}");
    } else {
        println!("max_rel_err >= {GRADCHECK_TOLERANCE:e}");
    }
    Ok(r.require(GRADCHECK_TOLERANCE)?)
}
