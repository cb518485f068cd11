//! Leave-one-out ranking metrics (AUC, NDCG@k, DIV@k), model evaluation over
//! several negative-sampling seeds, and the ablation study.

use std::collections::HashSet;
use std::fmt::Write as _;

use log::warn;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{format_head_map, Augmentation, EvalConfig, ModelConfig, Ranking, Similarity, TrainConfig};
use crate::data::{sample_negatives, truncate_pad, Corpus, PadMode};
use crate::error::{Error, Result};
use crate::model::CoverageRecommender;
use crate::numerics::Tensor;
use crate::training::{EpochStats, TrainSet, Trainer};
use crate::Rng;

/// Candidates ordered by descending score; ties go to the lower news index.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    pub positive: usize,
}

impl RankedList {
    pub fn new(candidates: &[usize], scores: &[f64], positive: usize) -> Result<Self> {
        if candidates.len() != scores.len() {
            return Err(Error::Shape(format!(
                "{} candidates but {} scores",
                candidates.len(),
                scores.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(d) = candidates.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::Contract(format!("candidate {d} listed twice")));
        }
        if !seen.contains(&positive) {
            return Err(Error::Contract(format!("positive {positive} is not a candidate")));
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(candidates[a].cmp(&candidates[b]))
        });
        Ok(Self {
            items: order.iter().map(|&i| candidates[i]).collect(),
            scores: order.iter().map(|&i| scores[i]).collect(),
            positive,
        })
    }

    /// 1-based position of the positive.
    pub fn rank(&self) -> usize {
        self.items.iter().position(|&c| c == self.positive).expect("positive present") + 1
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.items[..k.min(self.items.len())]
    }

    fn positive_score(&self) -> f64 {
        self.scores[self.rank() - 1]
    }
}

/// Share of negatives scored below the positive, ties counting one half.
pub fn auc(list: &RankedList) -> f64 {
    let p = list.positive_score();
    let negs = list.items.len() - 1;
    if negs == 0 {
        return 1.0;
    }
    let mut wins = 0.0;
    for (&item, &s) in list.items.iter().zip(&list.scores) {
        if item == list.positive {
            continue;
        }
        if s < p {
            wins += 1.0;
        } else if s == p {
            wins += 0.5;
        }
    }
    wins / negs as f64
}

/// `1/log2(rank + 1)` when the positive is in the top `k`, else 0.
pub fn ndcg_at_k(list: &RankedList, k: usize) -> f64 {
    let r = list.rank();
    if r <= k {
        1.0 / ((r + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// `1 − ILS@k`, ILS being the mean pairwise similarity among the first `k`
/// of `items`. Lists shorter than `k` are used whole.
pub fn div_at_k_by(items: &[usize], k: usize, sim: impl Fn(usize, usize) -> f64) -> f64 {
    if k > items.len() {
        warn!("DIV@{k} over a list of {} items; using the full list", items.len());
    }
    let top = &items[..k.min(items.len())];
    let n = top.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += sim(top[i], top[j]);
        }
    }
    1.0 - 2.0 * total / (n * (n - 1)) as f64
}

/// DIV@k with cosine similarity between rows of `embeddings`.
pub fn div_at_k(items: &[usize], k: usize, embeddings: &Tensor<f32>) -> f64 {
    div_at_k_by(items, k, |a, b| cosine(embeddings.row(a), embeddings.row(b)))
}

/// Metric means per seed, with mean and sample standard deviation across
/// seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<String>,
    pub seeds: Vec<u64>,
    /// `per_seed[s][m]`: metric `m` averaged over users for seed `s`.
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub users: usize,
    pub popularity_alpha: f64,
}

impl EvalReport {
    fn from_seeds(metrics: Vec<String>, seeds: Vec<u64>, per_seed: Vec<Vec<f64>>, users: usize, alpha: f64) -> Self {
        let m = metrics.len();
        let n = per_seed.len() as f64;
        let mean: Vec<f64> = (0..m).map(|j| per_seed.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..m)
            .map(|j| {
                if per_seed.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = per_seed.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect();
        Self {
            metrics,
            seeds,
            per_seed,
            mean,
            std,
            users,
            popularity_alpha: alpha,
        }
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == name)
    }

    /// Mean over seeds of metric `name` (e.g. `"NDCG@10"`).
    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.mean[i])
    }

    pub fn std_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std[i])
    }

    /// Header line for [`EvalReport::tsv_row`].
    pub fn tsv_header(&self) -> String {
        let mut s = String::from("variant");
        for m in &self.metrics {
            let _ = write!(s, "\t{m}\t{m}_std");
        }
        s
    }

    pub fn tsv_row(&self, variant: &str) -> String {
        let mut s = variant.to_string();
        for (m, sd) in self.mean.iter().zip(&self.std) {
            let _ = write!(s, "\t{m:.6}\t{sd:.6}");
        }
        s
    }

    /// One JSON object per seed.
    pub fn jsonl(&self, variant: &str) -> String {
        let mut out = String::new();
        for (seed, vals) in self.seeds.iter().zip(&self.per_seed) {
            let mut obj = serde_json::Map::new();
            obj.insert("variant".into(), variant.into());
            obj.insert("seed".into(), (*seed).into());
            obj.insert("users".into(), self.users.into());
            obj.insert("popularity_alpha".into(), self.popularity_alpha.into());
            for (m, v) in self.metrics.iter().zip(vals) {
                obj.insert(m.clone(), (*v).into());
            }
            out.push_str(&serde_json::Value::Object(obj).to_string());
            out.push('\n');
        }
        out
    }
}

fn metric_names(cfg: &EvalConfig) -> Vec<String> {
    let mut names = vec!["AUC".to_string()];
    names.extend(cfg.ndcg_at.iter().map(|k| format!("NDCG@{k}")));
    names.extend(cfg.div_at.iter().map(|k| format!("DIV@{k}")));
    names
}

/// Users scored by an evaluation: inference input and held-out item.
struct EvalCase {
    user: usize,
    history_len: usize,
    positive: usize,
}

/// Scores every evaluation user's held-out click against sampled negatives,
/// once per seed in `cfg.seeds`.
pub fn evaluate_model(model: &CoverageRecommender<f32>, corpus: &Corpus, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let titles = model.titles(&corpus.titles())?;
    let catalog = model.encode_catalog(&titles);
    let n = model.config.seq_len;

    let cases: Vec<EvalCase> = corpus
        .eval_users()
        .filter_map(|(u, seq)| {
            seq.holdout(cfg.use_validation).map(|(hist, pos)| EvalCase {
                user: u,
                history_len: hist.len(),
                positive: pos,
            })
        })
        .collect();
    if cases.is_empty() {
        return Err(Error::Data("no users with enough clicks to evaluate".into()));
    }

    // Encoder outputs at the trailing [mask], in user order.
    const CHUNK: usize = 64;
    let outputs: Vec<Tensor<f32>> = cases
        .par_chunks(CHUNK)
        .map(|chunk| {
            let seqs = chunk
                .iter()
                .map(|c| {
                    let hist = &corpus.users[c.user].clicks[..c.history_len];
                    debug_assert!(c.history_len < corpus.users[c.user].clicks.len());
                    truncate_pad(hist, n, PadMode::Inference)
                })
                .collect::<Result<Vec<_>>>()?;
            let o = model.mask_outputs(&catalog, &seqs)?;
            Ok(model.head.query(&model.params, &o))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = model.config.dim;
    let mut queries = Vec::with_capacity(cases.len() * dim);
    for o in outputs {
        queries.extend(o.into_data());
    }
    let queries = Tensor::new(vec![cases.len(), dim], queries)?;

    let counts = corpus.click_counts();
    let categories = corpus.categories();
    let names = metric_names(cfg);
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let rows = cases
            .par_iter()
            .enumerate()
            .map(|(i, c)| -> Result<Vec<f64>> {
                let mut rng = Rng::seed_from_u64(seed);
                rng.set_stream(c.user as u64);
                let clicks = &corpus.users[c.user].clicks;
                let sample = sample_negatives(c.user, c.positive, clicks, &counts, cfg.negatives, cfg.popularity_alpha, &mut rng)?;
                let mut candidates = vec![c.positive];
                let mut seen: HashSet<usize> = HashSet::from([c.positive]);
                candidates.extend(sample.negatives.iter().copied().filter(|x| seen.insert(*x)));
                let q = queries.row(i);
                let logits = model.head.candidate_logits(&model.params, q, &catalog, &candidates)?;
                let scores: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
                let list = RankedList::new(&candidates, &scores, c.positive)?;

                let mut vals = vec![auc(&list)];
                vals.extend(cfg.ndcg_at.iter().map(|&k| ndcg_at_k(&list, k)));
                let div_list: Vec<usize> = match cfg.ranking {
                    Ranking::Candidates => list.items.clone(),
                    Ranking::Catalog => {
                        let hist: HashSet<usize> = clicks[..c.history_len].iter().copied().collect();
                        let pool: Vec<usize> = (0..model.num_news).filter(|x| !hist.contains(x)).collect();
                        let l = model.head.candidate_logits(&model.params, q, &catalog, &pool)?;
                        let s: Vec<f64> = l.iter().map(|&v| v as f64).collect();
                        let top = RankedList::new(&pool, &s, pool[0])?;
                        top.items
                    }
                };
                for &k in &cfg.div_at {
                    vals.push(match cfg.similarity {
                        Similarity::Cosine => div_at_k(&div_list, k, &catalog),
                        Similarity::Category => {
                            div_at_k_by(&div_list, k, |a, b| f64::from(u8::from(categories[a] == categories[b])))
                        }
                    });
                }
                Ok(vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = names.len();
        let mean: Vec<f64> = (0..m)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect();
        per_seed.push(mean);
    }
    Ok(EvalReport::from_seeds(
        names,
        cfg.seeds.clone(),
        per_seed,
        cases.len(),
        cfg.popularity_alpha,
    ))
}

/// One configuration of the ablation study.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Name of the variant that drops view `a` and its regularizer term.
pub fn removal_name(a: Augmentation) -> String {
    format!("-C^{0}-DOR^{0}", a.label())
}

/// The full model, each single-view removal, the plain baseline (no views,
/// no regularizer) and the head-count sweep.
pub fn ablation_variants(base: &ModelConfig, train: &TrainConfig, head_sweep: &[usize]) -> Result<Vec<Variant>> {
    base.validate()?;
    let map = base.head_assignment()?;
    let mut out = vec![Variant {
        name: "full".into(),
        model: base.clone(),
        train: train.clone(),
    }];
    for a in Augmentation::ALL {
        let mut m = base.clone();
        let mut phi = m.phi();
        phi.set(a, false);
        m.set_phi(phi);
        let stripped: Vec<_> = map.iter().map(|h| h.filter(|x| *x != a)).collect();
        m.head_map = format_head_map(&stripped);
        out.push(Variant {
            name: removal_name(a),
            model: m,
            train: train.clone(),
        });
    }
    let mut plain = base.clone();
    plain.set_phi(crate::config::Phi::ALL_OFF);
    plain.head_map = format_head_map(&vec![None; base.heads]);
    out.push(Variant {
        name: "plain".into(),
        model: plain,
        train: TrainConfig {
            gamma: 0.0,
            ..train.clone()
        },
    });
    for &h in head_sweep {
        out.push(Variant {
            name: format!("heads={h}"),
            model: with_heads(base, h)?,
            train: train.clone(),
        });
    }
    Ok(out)
}

/// `base` with `heads` attention heads. The width is rounded up to the next
/// multiple of `heads`, and views are reassigned to the leading heads.
pub fn with_heads(base: &ModelConfig, heads: usize) -> Result<ModelConfig> {
    if heads == 0 {
        return Err(Error::Config("head count must be positive".into()));
    }
    let mut m = base.clone();
    m.heads = heads;
    m.dim = base.dim.div_ceil(heads) * heads;
    if m.dim % m.news_heads != 0 {
        m.news_heads = heads;
    }
    let phi = base.phi();
    let enabled: Vec<Option<Augmentation>> = Augmentation::ALL
        .iter()
        .copied()
        .filter(|a| phi.get(*a))
        .map(Some)
        .collect();
    let mut map = enabled;
    map.resize(heads, None);
    map.truncate(heads);
    m.head_map = format_head_map(&map);
    m.validate()?;
    Ok(m)
}

/// Result of training and evaluating one configuration.
pub struct RunOutcome {
    pub model: CoverageRecommender<f32>,
    pub epochs: Vec<EpochStats>,
    pub report: EvalReport,
}

/// Builds a model from `seed`, trains it on `corpus` and evaluates it.
pub fn train_and_evaluate(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    corpus: &Corpus,
    seed: u64,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<RunOutcome> {
    let model = CoverageRecommender::new(model_cfg, corpus.vocab.len(), corpus.num_news(), seed)?;
    let data = TrainSet::from_corpus(corpus)?;
    let mut trainer = Trainer::new(model, train_cfg.clone(), seed)?;
    let epochs = trainer.fit(&data, on_epoch)?;
    let model = trainer.into_model();
    let report = evaluate_model(&model, corpus, eval_cfg)?;
    Ok(RunOutcome { model, epochs, report })
}
