//! Corpus ingestion (MIND tab-separated format), per-user click sequences,
//! masking, negative sampling and a synthetic corpus generator.

mod mind;
mod sampling;
mod sequence;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

pub use mind::{
    build_user_sequences, parse_behaviors_str, parse_behaviors_tsv, parse_news_str, parse_news_tsv, tokenize,
    ImpressionRecord, NewsCatalog, ParseReport, MIND_TIME_FORMAT,
};
pub use sampling::{popularity_weight, sample_negatives, NegativeSample};
pub use sequence::{sample_masks, truncate_pad, PadMode, PaddedSequence, Slot};

use crate::error::Result;

pub const PAD_TOKEN: usize = 0;
pub const UNK_TOKEN: usize = 1;

/// Word vocabulary; index 0 is `[PAD]`, index 1 is `[UNK]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary ordered by descending frequency, ties broken
    /// alphabetically.
    pub fn from_counts(counts: &HashMap<String, usize>) -> Self {
        let mut words: Vec<(&String, &usize)> = counts.iter().collect();
        words.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut v = Self {
            words: vec!["[PAD]".to_string(), "[UNK]".to_string()],
            index: HashMap::new(),
        };
        for (w, _) in words {
            v.index.insert(w.clone(), v.words.len());
            v.words.push(w.clone());
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK_TOKEN)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewsArticle {
    pub news_id: String,
    pub title_tokens: Vec<usize>,
    pub category: String,
    pub click_count: u64,
}

/// Time-ordered clicks of one user with the leave-one-out split points.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSequence {
    pub user_id: String,
    pub clicks: Vec<usize>,
    /// Last click; `None` for users with fewer than three clicks.
    pub test_item: Option<usize>,
    /// Second-to-last click; `None` for users with fewer than three clicks.
    pub val_item: Option<usize>,
}

/// Users need this many clicks to get validation and test items.
pub const MIN_EVAL_CLICKS: usize = 3;

impl UserSequence {
    pub fn new(user_id: impl Into<String>, clicks: Vec<usize>) -> Self {
        let n = clicks.len();
        let (test_item, val_item) = if n >= MIN_EVAL_CLICKS {
            (Some(clicks[n - 1]), Some(clicks[n - 2]))
        } else {
            (None, None)
        };
        Self {
            user_id: user_id.into(),
            clicks,
            test_item,
            val_item,
        }
    }

    pub fn is_eval(&self) -> bool {
        self.test_item.is_some()
    }

    /// Clicks available for training: everything before the validation item
    /// for evaluation users, all clicks for train-only users.
    pub fn train_clicks(&self) -> &[usize] {
        if self.is_eval() {
            &self.clicks[..self.clicks.len() - 2]
        } else {
            &self.clicks
        }
    }

    /// History preceding the held-out item, and that item.
    pub fn holdout(&self, validation: bool) -> Option<(&[usize], usize)> {
        let n = self.clicks.len();
        if !self.is_eval() {
            return None;
        }
        let pos = if validation { n - 2 } else { n - 1 };
        Some((&self.clicks[..pos], self.clicks[pos]))
    }
}

/// News catalog plus user sequences, with popularity filled in.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub articles: Vec<NewsArticle>,
    pub vocab: Vocab,
    pub users: Vec<UserSequence>,
    pub report: ParseReport,
}

impl Corpus {
    pub fn new(mut articles: Vec<NewsArticle>, vocab: Vocab, users: Vec<UserSequence>, report: ParseReport) -> Self {
        for a in &mut articles {
            a.click_count = 0;
        }
        for u in &users {
            for &c in &u.clicks {
                articles[c].click_count += 1;
            }
        }
        Self {
            articles,
            vocab,
            users,
            report,
        }
    }

    /// Reads a MIND-format `news.tsv` and `behaviors.tsv` pair.
    pub fn load(news: &Path, behaviors: &Path, max_title_len: usize) -> Result<Self> {
        let catalog = parse_news_tsv(news, max_title_len)?;
        let index = catalog.index();
        let (records, breport) = parse_behaviors_tsv(behaviors, &index)?;
        let users = build_user_sequences(&records);
        let mut report = catalog.report.clone();
        report.merge(&breport);
        Ok(Self::new(catalog.articles, catalog.vocab, users, report))
    }

    pub fn num_news(&self) -> usize {
        self.articles.len()
    }

    pub fn titles(&self) -> Vec<Vec<usize>> {
        self.articles.iter().map(|a| a.title_tokens.clone()).collect()
    }

    pub fn click_counts(&self) -> Vec<u64> {
        self.articles.iter().map(|a| a.click_count).collect()
    }

    pub fn categories(&self) -> Vec<&str> {
        self.articles.iter().map(|a| a.category.as_str()).collect()
    }

    pub fn eval_users(&self) -> impl Iterator<Item = (usize, &UserSequence)> {
        self.users.iter().enumerate().filter(|(_, u)| u.is_eval())
    }

    /// Users with at least one training click.
    pub fn train_users(&self) -> Vec<usize> {
        self.users
            .iter()
            .enumerate()
            .filter(|(_, u)| !u.train_clicks().is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_users_are_train_only() {
        let u = UserSequence::new("u", vec![4, 5]);
        assert!(!u.is_eval());
        assert_eq!(u.train_clicks(), &[4, 5]);
        assert!(u.holdout(false).is_none());
    }

    #[test]
    fn leave_one_out_split() {
        let u = UserSequence::new("u", vec![1, 2, 3, 4]);
        assert_eq!(u.test_item, Some(4));
        assert_eq!(u.val_item, Some(3));
        assert_eq!(u.train_clicks(), &[1, 2]);
        assert_eq!(u.holdout(false), Some((&[1, 2, 3][..], 4)));
        assert_eq!(u.holdout(true), Some((&[1, 2][..], 3)));
    }
}
