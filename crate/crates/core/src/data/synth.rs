//! Synthetic MIND-format corpus with topic-structured titles and sticky
//! topic-switching users.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::config::SynthConfig;
use crate::data::{build_user_sequences, parse_behaviors_str, parse_news_str, Corpus, MIND_TIME_FORMAT};
use crate::error::{Error, Result};

/// Share of title words drawn from the article's own topic.
const TOPIC_WORD_SHARE: f64 = 0.7;

/// Generated catalog and click streams, before serialization.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub news_ids: Vec<String>,
    /// Topic of each article.
    pub topics: Vec<usize>,
    pub titles: Vec<Vec<String>>,
    pub user_ids: Vec<String>,
    /// Ground-truth click stream per user, as catalog positions.
    pub streams: Vec<Vec<usize>>,
    /// Non-clicked items shown next to each click after the history prefix.
    pub impression_negatives: Vec<Vec<Vec<usize>>>,
}

/// Paths of a written corpus.
#[derive(Clone, Debug)]
pub struct SyntheticFiles {
    pub news: PathBuf,
    pub behaviors: PathBuf,
}

fn start_time() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2019, 11, 9)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date")
}

/// Number of leading clicks written to the history column.
pub fn history_len(stream_len: usize) -> usize {
    stream_len / 2
}

impl SyntheticCorpus {
    pub fn generate<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.num_topics;
        let per_topic = cfg.vocab_size / (k + 1);
        let shared = cfg.vocab_size - per_topic * k;
        let topic_words: Vec<Vec<String>> = (0..k)
            .map(|t| (0..per_topic).map(|j| format!("t{t}w{j}")).collect())
            .collect();
        let shared_words: Vec<String> = (0..shared).map(|j| format!("s{j}")).collect();

        let topics: Vec<usize> = (0..cfg.num_news).map(|i| i % k).collect();
        let titles: Vec<Vec<String>> = topics
            .iter()
            .map(|&t| {
                let len = rng.random_range(cfg.title_min..=cfg.title_max);
                (0..len)
                    .map(|_| {
                        let pool = if rng.random::<f64>() < TOPIC_WORD_SHARE {
                            &topic_words[t]
                        } else {
                            &shared_words
                        };
                        pool.choose(rng).expect("non-empty word pool").clone()
                    })
                    .collect()
            })
            .collect();

        // Items of each topic with Zipf weights by position within the topic.
        let by_topic: Vec<Vec<(usize, f64)>> = (0..k)
            .map(|t| {
                (0..cfg.num_news)
                    .filter(|&i| topics[i] == t)
                    .enumerate()
                    .map(|(rank, i)| (i, 1.0 / (rank + 1) as f64))
                    .collect()
            })
            .collect();

        let mut streams = Vec::with_capacity(cfg.num_users);
        let mut negatives = Vec::with_capacity(cfg.num_users);
        for _ in 0..cfg.num_users {
            let len = rng.random_range(cfg.min_clicks..=cfg.max_clicks);
            let mut clicked = vec![false; cfg.num_news];
            let mut stream = Vec::with_capacity(len);
            let mut topic = rng.random_range(0..k);
            for step in 0..len {
                if step > 0 && rng.random::<f64>() >= cfg.stickiness {
                    topic = rng.random_range(0..k);
                }
                let open = |t: usize| by_topic[t].iter().any(|&(i, _)| !clicked[i]);
                if !open(topic) {
                    let rest: Vec<usize> = (0..k).filter(|&t| open(t)).collect();
                    topic = *rest.choose(rng).expect("stream length bounded by catalog size");
                }
                let avail: Vec<&(usize, f64)> = by_topic[topic].iter().filter(|&&(i, _)| !clicked[i]).collect();
                let total: f64 = avail.iter().map(|p| p.1).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = avail[avail.len() - 1].0;
                for &&(i, w) in &avail {
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                clicked[pick] = true;
                stream.push(pick);
            }
            let unseen: Vec<usize> = (0..cfg.num_news).filter(|&i| !clicked[i]).collect();
            let rows = len - history_len(len);
            let negs: Vec<Vec<usize>> = (0..rows)
                .map(|_| {
                    unseen
                        .choose_multiple(rng, cfg.impression_negatives.min(unseen.len()))
                        .copied()
                        .collect()
                })
                .collect();
            streams.push(stream);
            negatives.push(negs);
        }

        Ok(Self {
            news_ids: (1..=cfg.num_news).map(|i| format!("N{i}")).collect(),
            topics,
            titles,
            user_ids: (1..=cfg.num_users).map(|u| format!("U{u}")).collect(),
            streams,
            impression_negatives: negatives,
        })
    }

    pub fn news_tsv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.news_ids.iter().enumerate() {
            let t = self.topics[i];
            let _ = writeln!(
                out,
                "{id}\ttopic{t}\ttopic{t}sub\t{}\t\thttps://example.invalid/{id}\t[]",
                self.titles[i].join(" ")
            );
        }
        out
    }

    /// One row per click after the history prefix; every row of a user carries
    /// the same history column.
    pub fn behaviors_tsv(&self) -> String {
        let mut out = String::new();
        let mut row = 0i64;
        let t0 = start_time();
        for (u, stream) in self.streams.iter().enumerate() {
            let h = history_len(stream.len());
            let history: Vec<&str> = stream[..h].iter().map(|&i| self.news_ids[i].as_str()).collect();
            let history = history.join(" ");
            for (j, &item) in stream[h..].iter().enumerate() {
                row += 1;
                let ts = (t0 + Duration::seconds(row * 37)).format(MIND_TIME_FORMAT);
                let mut imps = vec![format!("{}-1", self.news_ids[item])];
                imps.extend(self.impression_negatives[u][j].iter().map(|&n| format!("{}-0", self.news_ids[n])));
                let _ = writeln!(out, "{row}\t{}\t{ts}\t{history}\t{}", self.user_ids[u], imps.join(" "));
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<SyntheticFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SyntheticFiles {
            news: dir.join("news.tsv"),
            behaviors: dir.join("behaviors.tsv"),
        };
        std::fs::write(&files.news, self.news_tsv()).map_err(|e| Error::io(&files.news, e))?;
        std::fs::write(&files.behaviors, self.behaviors_tsv()).map_err(|e| Error::io(&files.behaviors, e))?;
        Ok(files)
    }

    /// Parses the generated files in memory, exactly as `Corpus::load` would.
    pub fn to_corpus(&self, max_title_len: usize) -> Result<Corpus> {
        let catalog = parse_news_str(&self.news_tsv(), max_title_len)?;
        let (records, breport) = parse_behaviors_str(&self.behaviors_tsv(), &catalog.index())?;
        let users = build_user_sequences(&records);
        let mut report = catalog.report.clone();
        report.merge(&breport);
        Ok(Corpus::new(catalog.articles, catalog.vocab, users, report))
    }

    /// Topic histogram of one user's stream.
    pub fn topic_histogram(&self, user: usize) -> Vec<usize> {
        let k = self.topics.iter().max().map_or(0, |m| m + 1);
        let mut h = vec![0; k];
        for &i in &self.streams[user] {
            h[self.topics[i]] += 1;
        }
        h
    }
}

/// Generates a corpus and writes `news.tsv` and `behaviors.tsv` into `dir`.
pub fn gen_synthetic_corpus<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    dir: &Path,
    rng: &mut R,
) -> Result<(SyntheticCorpus, SyntheticFiles)> {
    let corpus = SyntheticCorpus::generate(cfg, rng)?;
    let files = corpus.write(dir)?;
    Ok((corpus, files))
}
