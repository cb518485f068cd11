//! The four batch commands behind the `covrec` binary. Each writes its
//! artifacts under `RunConfig::out`, next to a `config.toml` echo of the
//! resolved configuration.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::synth::{gen_synthetic_corpus, SyntheticFiles};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::{ablation_variants, evaluate_model, train_and_evaluate, EvalReport};
use crate::model::CoverageRecommender;
use crate::numerics::checkpoint::manifest_path;
use crate::training::{EpochStats, TrainSet, Trainer};
use crate::Rng;

pub const CONFIG_ECHO: &str = "config.toml";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const EVAL_TSV: &str = "eval.tsv";
pub const EVAL_JSONL: &str = "eval.jsonl";
pub const ABLATION_TSV: &str = "ablation.tsv";
pub const ABLATION_JSONL: &str = "ablation.jsonl";
/// Per-variant results, kept so an interrupted ablation can resume.
pub const ABLATION_DIR: &str = "ablation";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_out(cfg: &RunConfig, outputs: &[&str], force: bool) -> Result<()> {
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if !force {
        if let Some(p) = outputs.iter().map(|o| out.join(o)).find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    write(&out.join(CONFIG_ECHO), cfg.to_toml())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    for p in [&cfg.data.news, &cfg.data.behaviors] {
        if !p.exists() {
            return Err(Error::Data(format!("data file {} not found", p.display())));
        }
    }
    let corpus = Corpus::load(&cfg.data.news, &cfg.data.behaviors, cfg.data.max_title_len)?;
    info!(
        "loaded {} news, {} users ({} parse warnings)",
        corpus.num_news(),
        corpus.users.len(),
        corpus.report.warnings()
    );
    Ok(corpus)
}

/// Paths and sizes of a generated corpus.
#[derive(Clone, Debug)]
pub struct SynthSummary {
    pub files: SyntheticFiles,
    pub users: usize,
    pub news: usize,
    pub clicks: usize,
}

pub fn cmd_synth(cfg: &RunConfig, force: bool) -> Result<SynthSummary> {
    prepare_out(cfg, &["news.tsv", "behaviors.tsv"], force)?;
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let (corpus, files) = gen_synthetic_corpus(&cfg.synth, &cfg.out, &mut rng)?;
    Ok(SynthSummary {
        files,
        users: corpus.user_ids.len(),
        news: corpus.news_ids.len(),
        clicks: corpus.streams.iter().map(Vec::len).sum(),
    })
}

/// Trained model plus where it was written.
pub struct TrainSummary {
    pub model: CoverageRecommender<f32>,
    pub epochs: Vec<EpochStats>,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<TrainSummary> {
    let corpus = load_corpus(cfg)?;
    prepare_out(cfg, &[CHECKPOINT, TRAIN_LOG], force)?;
    let model = CoverageRecommender::new(&cfg.model, corpus.vocab.len(), corpus.num_news(), cfg.seed)?;
    let data = TrainSet::from_corpus(&corpus)?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.seed)?;

    let log_path = cfg.out.join(TRAIN_LOG);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut io_err = None;
    let epochs = trainer.fit(&data, |s| {
        let line = s.log_line();
        info!("epoch {line}");
        if let Err(e) = writeln!(log, "{line}") {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(Error::io(&log_path, e));
    }
    let model = trainer.into_model();
    let checkpoint = cfg.out.join(CHECKPOINT);
    model.save(&checkpoint, &cfg.to_toml())?;
    Ok(TrainSummary {
        model,
        epochs,
        checkpoint,
    })
}

/// Rebuilds a model from a checkpoint and its manifest. The corpus supplies
/// vocabulary and catalog sizes.
pub fn load_model(checkpoint: &Path, corpus: &Corpus) -> Result<CoverageRecommender<f32>> {
    let mpath = manifest_path(checkpoint);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let trained = RunConfig::from_toml_str(&text, &[])?;
    let mut model = CoverageRecommender::new(&trained.model, corpus.vocab.len(), corpus.num_news(), trained.seed)?;
    model.load_params(checkpoint)?;
    Ok(model)
}

/// Evaluates the checkpoint at `checkpoint` (default: `out/model.ckpt`).
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, force: bool) -> Result<EvalReport> {
    let corpus = load_corpus(cfg)?;
    let ckpt = checkpoint.map_or_else(|| cfg.out.join(CHECKPOINT), Path::to_path_buf);
    if !ckpt.exists() {
        return Err(Error::Data(format!("checkpoint {} not found", ckpt.display())));
    }
    let model = load_model(&ckpt, &corpus)?;
    prepare_out(cfg, &[EVAL_TSV, EVAL_JSONL], force)?;
    let report = evaluate_model(&model, &corpus, &cfg.eval)?;
    write(
        &cfg.out.join(EVAL_TSV),
        format!("{}\n{}\n", report.tsv_header(), report.tsv_row("model")),
    )?;
    write(&cfg.out.join(EVAL_JSONL), report.jsonl("model"))?;
    Ok(report)
}

/// Runs every ablation variant and writes the combined table. Variants with
/// a stored result are skipped unless `force` is set.
pub fn cmd_ablate(cfg: &RunConfig, force: bool) -> Result<Vec<(String, EvalReport)>> {
    let corpus = load_corpus(cfg)?;
    prepare_out(cfg, &[], true)?;
    let dir = cfg.out.join(ABLATION_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let variants = ablation_variants(&cfg.model, &cfg.train, &cfg.ablation.head_sweep)?;

    let run = |v: &crate::evaluation::Variant| -> Result<(String, EvalReport)> {
        let path = dir.join(format!("{}.json", v.name));
        if !force && path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let report = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            info!("{}: reusing stored result", v.name);
            return Ok((v.name.clone(), report));
        }
        info!("{}: training", v.name);
        let outcome = train_and_evaluate(&v.model, &v.train, &cfg.eval, &corpus, cfg.seed, |s| {
            info!("{} epoch {}", v.name, s.log_line());
        })?;
        let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
        write(&path, json)?;
        Ok((v.name.clone(), outcome.report))
    };
    let results: Vec<(String, EvalReport)> = if cfg.ablation.parallel {
        variants.par_iter().map(run).collect::<Result<_>>()?
    } else {
        variants.iter().map(run).collect::<Result<_>>()?
    };

    let mut tsv = String::new();
    let mut jsonl = String::new();
    for (i, (name, r)) in results.iter().enumerate() {
        if i == 0 {
            tsv.push_str(&r.tsv_header());
            tsv.push('\n');
        }
        tsv.push_str(&r.tsv_row(name));
        tsv.push('\n');
        jsonl.push_str(&r.jsonl(name));
    }
    write(&cfg.out.join(ABLATION_TSV), tsv)?;
    write(&cfg.out.join(ABLATION_JSONL), jsonl)?;
    Ok(results)
}
