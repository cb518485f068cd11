use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDateTime;
use log::warn;

use crate::data::{NewsArticle, UserSequence, Vocab};
use crate::error::{Error, Result};

/// Timestamp layout of `behaviors.tsv`, e.g. `11/11/2019 9:05:58 AM`.
pub const MIND_TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";

/// Counts of rows and tokens dropped or rewritten during ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub skipped_rows: usize,
    pub duplicate_ids: usize,
    pub unknown_ids: usize,
    pub malformed_tokens: usize,
}

impl ParseReport {
    pub fn warnings(&self) -> usize {
        self.skipped_rows + self.duplicate_ids + self.unknown_ids + self.malformed_tokens
    }

    pub fn merge(&mut self, other: &ParseReport) {
        self.skipped_rows += other.skipped_rows;
        self.duplicate_ids += other.duplicate_ids;
        self.unknown_ids += other.unknown_ids;
        self.malformed_tokens += other.malformed_tokens;
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug)]
pub struct NewsCatalog {
    pub articles: Vec<NewsArticle>,
    pub vocab: Vocab,
    pub report: ParseReport,
}

impl NewsCatalog {
    /// News id → catalog index.
    pub fn index(&self) -> HashMap<String, usize> {
        self.articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.news_id.clone(), i))
            .collect()
    }
}

pub fn parse_news_tsv(path: &Path, max_title_len: usize) -> Result<NewsCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_news_str(&text, max_title_len)
}

/// Parses `news.tsv` content: id, category, subcategory, title, abstract, url,
/// entities (further columns are ignored).
pub fn parse_news_str(text: &str, max_title_len: usize) -> Result<NewsCatalog> {
    if text.trim().is_empty() {
        return Err(Error::Data("news file is empty".into()));
    }
    let mut report = ParseReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (String, Vec<String>)> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 || cols[0].trim().is_empty() {
            warn!("news line {}: expected at least 7 columns, skipping", lineno + 1);
            report.skipped_rows += 1;
            continue;
        }
        let mut tokens = tokenize(cols[3]);
        if tokens.is_empty() {
            warn!("news line {}: empty title, skipping {}", lineno + 1, cols[0]);
            report.skipped_rows += 1;
            continue;
        }
        tokens.truncate(max_title_len);
        let id = cols[0].trim().to_string();
        if rows.contains_key(&id) {
            warn!("news line {}: duplicate id {id}, keeping the later row", lineno + 1);
            report.duplicate_ids += 1;
        } else {
            order.push(id.clone());
        }
        rows.insert(id, (cols[1].trim().to_string(), tokens));
    }
    if order.is_empty() {
        return Err(Error::Data("no usable news rows".into()));
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    for id in &order {
        for t in &rows[id].1 {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    let vocab = Vocab::from_counts(&counts);
    let articles = order
        .into_iter()
        .map(|id| {
            let (category, tokens) = rows.remove(&id).expect("row present");
            NewsArticle {
                title_tokens: tokens.iter().map(|t| vocab.lookup(t)).collect(),
                news_id: id,
                category,
                click_count: 0,
            }
        })
        .collect();
    Ok(NewsCatalog {
        articles,
        vocab,
        report,
    })
}

/// One parsed impression-log row, with news ids resolved to catalog indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpressionRecord {
    pub impression_id: String,
    pub user_id: String,
    pub timestamp: NaiveDateTime,
    pub history: Vec<usize>,
    pub clicked: Vec<usize>,
    pub non_clicked: Vec<usize>,
}

pub fn parse_behaviors_tsv(path: &Path, news_index: &HashMap<String, usize>) -> Result<(Vec<ImpressionRecord>, ParseReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_behaviors_str(&text, news_index)
}

/// Parses `behaviors.tsv` content: impression id, user id, timestamp,
/// space-separated history, space-separated `id-1`/`id-0` impressions.
pub fn parse_behaviors_str(
    text: &str,
    news_index: &HashMap<String, usize>,
) -> Result<(Vec<ImpressionRecord>, ParseReport)> {
    let mut report = ParseReport::default();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            warn!("behaviors line {}: expected 5 columns, skipping", lineno + 1);
            report.skipped_rows += 1;
            continue;
        }
        let Ok(timestamp) = NaiveDateTime::parse_from_str(cols[2].trim(), MIND_TIME_FORMAT) else {
            warn!("behaviors line {}: bad timestamp {:?}, skipping", lineno + 1, cols[2]);
            report.skipped_rows += 1;
            continue;
        };
        let resolve = |id: &str, report: &mut ParseReport| match news_index.get(id) {
            Some(&i) => Some(i),
            None => {
                warn!("behaviors line {}: unknown news id {id}", lineno + 1);
                report.unknown_ids += 1;
                None
            }
        };
        let history = cols[3]
            .split_whitespace()
            .filter_map(|id| resolve(id, &mut report))
            .collect();
        let mut clicked = Vec::new();
        let mut non_clicked = Vec::new();
        for tok in cols[4].split_whitespace() {
            let (id, flag) = match tok.rsplit_once('-') {
                Some((id, f @ ("0" | "1"))) if !id.is_empty() => (id, f),
                _ => {
                    warn!("behaviors line {}: malformed impression {tok:?}", lineno + 1);
                    report.malformed_tokens += 1;
                    continue;
                }
            };
            if let Some(i) = resolve(id, &mut report) {
                if flag == "1" {
                    clicked.push(i);
                } else {
                    non_clicked.push(i);
                }
            }
        }
        out.push(ImpressionRecord {
            impression_id: cols[0].trim().to_string(),
            user_id: cols[1].trim().to_string(),
            timestamp,
            history,
            clicked,
            non_clicked,
        });
    }
    Ok((out, report))
}

/// Groups records by user (in order of first appearance) and orders each
/// user's clicks in time: the history of the user's earliest impression, then
/// clicked impressions by timestamp. A clicked item already listed in the same
/// row's history is not added twice; repeat clicks across rows are kept.
pub fn build_user_sequences(records: &[ImpressionRecord]) -> Vec<UserSequence> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<&ImpressionRecord>> = HashMap::new();
    for r in records {
        by_user
            .entry(r.user_id.as_str())
            .or_insert_with(|| {
                order.push(r.user_id.as_str());
                Vec::new()
            })
            .push(r);
    }
    let mut users = Vec::new();
    for uid in order {
        let mut rows = by_user.remove(uid).unwrap_or_default();
        rows.sort_by_key(|r| r.timestamp);
        let mut clicks: Vec<usize> = rows[0].history.clone();
        for r in &rows {
            let hist: HashSet<usize> = r.history.iter().copied().collect();
            clicks.extend(r.clicked.iter().copied().filter(|c| !hist.contains(c)));
        }
        if !clicks.is_empty() {
            users.push(UserSequence::new(uid, clicks));
        }
    }
    users
}
