mod common;

use common::{drnews, exit_code, scratch, stage, PIPELINE};

const SMALL: &str = r#"seed = 2
[paths]
artifacts = "art"
[elements]
quantile = 0.2
[walk]
length = 10
walks_per_node = 2
[train]
dim = 8
window = 3
epochs = 1
[synth]
docs_per_topic = 60
[samples]
window = 4
labeler = "direction"
[predictor]
attention_dim = 4
news_hidden = 4
market_hidden = 4
epochs = 2
"#;

fn stderr_json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error")
}

#[test]
fn evaluate_without_a_model_is_a_missing_artifact() {
    let dir = scratch("cli-missing");
    std::fs::write(dir.join("c.toml"), SMALL).unwrap();
    let out = drnews(&dir, &["evaluate", "--config", "c.toml"]);
    assert_eq!(exit_code(&out), 4);
    let err = stderr_json(&out);
    assert_eq!(err["exit_code"], 4);
    assert_eq!(err["error"], "missing_artifact");
}

#[test]
fn usage_and_config_errors_have_their_own_codes() {
    let dir = scratch("cli-usage");
    assert_eq!(exit_code(&drnews(&dir, &["no-such-stage"])), 2);
    assert_eq!(exit_code(&drnews(&dir, &["synth", "--threads", "many"])), 2);
    assert_eq!(exit_code(&drnews(&dir, &["synth", "--config", "absent.toml"])), 3);
    std::fs::write(dir.join("bad.toml"), "[walk]\nlenght = 5\n").unwrap();
    let out = drnews(&dir, &["synth", "--config", "bad.toml"]);
    assert_eq!(exit_code(&out), 3);
    assert_eq!(stderr_json(&out)["error"], "config");
    std::fs::write(dir.join("neg.toml"), "[elements]\nquantile = 0.0\n").unwrap();
    assert_eq!(exit_code(&drnews(&dir, &["synth", "--config", "neg.toml"])), 3);
}

#[test]
fn changed_config_is_refused_unless_forced() {
    let dir = scratch("cli-hash");
    std::fs::write(dir.join("c.toml"), SMALL).unwrap();
    for name in PIPELINE {
        stage(&dir, "c.toml", name, &[]);
    }
    std::fs::write(dir.join("other.toml"), SMALL.replace("epochs = 2", "epochs = 3")).unwrap();
    let out = drnews(&dir, &["evaluate", "--config", "other.toml"]);
    assert_eq!(exit_code(&out), 7);
    assert_eq!(stderr_json(&out)["error"], "hash_mismatch");
    let out = drnews(&dir, &["evaluate", "--config", "other.toml", "--force"]);
    assert_eq!(exit_code(&out), 0);

    // moving the artifacts elsewhere does not change the hash
    let moved = SMALL.replace("artifacts = \"art\"", "artifacts = \"./art\"");
    std::fs::write(dir.join("moved.toml"), moved).unwrap();
    assert_eq!(exit_code(&drnews(&dir, &["evaluate", "--config", "moved.toml"])), 0);
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = scratch("cli-seed");
    std::fs::write(dir.join("c.toml"), SMALL).unwrap();
    stage(&dir, "c.toml", "synth", &["--seed", "9"]);
    let manifest = std::fs::read_to_string(dir.join("art/manifests/synth.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["synth"]["seed"], 9);
    let first = std::fs::read(dir.join("art/corpus.jsonl")).unwrap();
    stage(&dir, "c.toml", "synth", &[]);
    assert_ne!(first, std::fs::read(dir.join("art/corpus.jsonl")).unwrap());
}
