use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_covrec");

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    let text = format!(
        r#"
seed = 3
out = "{out}"

[data]
news = "{data}/news.tsv"
behaviors = "{data}/behaviors.tsv"

[synth]
num_users = 60
num_news = 40
num_topics = 4
vocab_size = 60
min_clicks = 5
max_clicks = 10

[model]
dim = 16
heads = 4
seq_len = 10
layers = 1
word_dim = 16
news_heads = 2
head_map = "decay,circle,log,gamma"

[train]
epochs = 1
batch_size = 32

[eval]
negatives = 20
ndcg_at = [5]
div_at = [5]
"#,
        out = dir.join("run").display(),
        data = data.display(),
    );
    let path = dir.join("tiny.toml");
    fs::write(&path, text).unwrap();
    path
}

fn covrec(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_and_bad_usage() {
    assert_eq!(code(&covrec(&["--help"])), 0);
    assert_eq!(code(&covrec(&["frobnicate"])), 1);
    assert_eq!(code(&covrec(&["train", "--seed", "abc"])), 1);
}

#[test]
fn invalid_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = covrec(&["synth", "--config", cfg.to_str().unwrap(), "train.mask_prob=2.0"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mask_prob"));
}

#[test]
fn missing_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = covrec(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let data = dir.path().join("data");
    let data_out = format!("--out={}", data.display());

    let o = covrec(&["synth", "--config", cfg, &data_out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("news.tsv").exists() && data.join("behaviors.tsv").exists());

    // Refuses to clobber without --force.
    assert_eq!(code(&covrec(&["synth", "--config", cfg, &data_out])), 1);
    assert_eq!(code(&covrec(&["synth", "--config", cfg, &data_out, "--force"])), 0);

    let o = covrec(&["train", "--config", cfg, "train.lr=0.002"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    assert!(run.join("model.ckpt").exists());
    let echo = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echo.contains("lr = 0.002"), "{echo}");
    assert_eq!(fs::read_to_string(run.join("train_log.tsv")).unwrap().lines().count(), 1);

    let o = covrec(&["eval", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let jsonl = fs::read_to_string(run.join("eval.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        for key in ["AUC", "NDCG@5", "DIV@5"] {
            let v = r[key].as_f64().unwrap();
            assert!((0.0..=2.0).contains(&v), "{key}={v}");
        }
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("variant\tAUC\tAUC_std"));

    // Second eval into the same directory needs --force.
    assert_eq!(code(&covrec(&["eval", "--config", cfg])), 1);
    let missing = format!("--checkpoint={}", dir.path().join("nope.ckpt").display());
    assert_eq!(code(&covrec(&["eval", "--config", cfg, "--force", &missing])), 2);
}
