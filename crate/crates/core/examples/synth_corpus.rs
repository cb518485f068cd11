//! Generates a topic-sticky synthetic corpus and prints a few summaries.
//!
//! cargo run --release --example synth_corpus [out_dir]

use covrec::config::SynthConfig;
use covrec::data::synth::gen_synthetic_corpus;
use rand::SeedableRng;

fn main() -> covrec::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "runs/synth".into());
    let dir = std::path::Path::new(&dir);
    std::fs::create_dir_all(dir).map_err(|e| covrec::Error::io(dir, e))?;

    let cfg = SynthConfig::default();
    let (synth, files) = gen_synthetic_corpus(&cfg, dir, &mut covrec::Rng::seed_from_u64(7))?;
    println!("wrote {} and {}", files.news.display(), files.behaviors.display());

    let corpus = synth.to_corpus(30)?;
    println!("{} news, {} users, vocab {}", corpus.num_news(), corpus.users.len(), corpus.vocab.len());
    for user in 0..3 {
        println!("user {user} topic histogram {:?}", synth.topic_histogram(user));
    }
    Ok(())
}
