//! Command-line contract tests: exit codes, config layering, artifact
//! sidecars, batch modes, and eval/training agreement. Every test drives the
//! installed binary in its own scratch directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use sifter_core::augment::write_triples;
use sifter_core::classify::LabeledExample;
use sifter_core::eval::STSPair;
use sifter_core::synth;

// ---------------------------------------------------------------------------
// Shared plumbing.

/// Runs the binary in `dir` with a scrubbed environment plus `env` extras.
fn sifter_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_sifter"));
    cmd.args(args).current_dir(dir).env_remove("SIFTER_CONFIG");
    for (key, value) in env {
        cmd.env(key, value);
    }
    cmd.output().expect("the sifter binary spawns")
}

fn sifter(dir: &Path, args: &[&str]) -> Output {
    sifter_env(dir, args, &[])
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code_of(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

fn assert_ok(out: &Output) {
    assert_eq!(
        code_of(out),
        0,
        "command failed\nstdout:\n{}\nstderr:\n{}",
        stdout_of(out),
        stderr_of(out)
    );
}

fn write_sts_pairs(path: &Path, pairs: &[STSPair]) {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&format!(
            "{{\"s1\":{:?},\"s2\":{:?},\"score\":{:?}}}\n",
            p.s1, p.s2, p.score
        ));
    }
    fs::write(path, text).unwrap();
}

fn write_labeled(path: &Path, examples: &[LabeledExample]) {
    let mut text = String::new();
    for ex in examples {
        text.push_str(&format!(
            "{{\"text\":{:?},\"label\":{}}}\n",
            ex.tokens.join(" "),
            ex.label
        ));
    }
    fs::write(path, text).unwrap();
}

/// Small clustered-triples task; returns (triples path, dev-pairs path).
fn contrastive_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = synth::clustered_triples(24, 8, 7).unwrap();
    let triples = dir.join("triples.jsonl");
    let dev = dir.join("dev_pairs.jsonl");
    write_triples(&triples, &corpus.triples).unwrap();
    write_sts_pairs(&dev, &corpus.dev);
    (triples, dev)
}

/// Small sentiment task; returns (train path, dev path, lexicon path).
fn classify_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let task = synth::sentiment_task(40, 16, 16, 5).unwrap();
    let train = dir.join("train.jsonl");
    let dev = dir.join("dev.jsonl");
    let lexicon = dir.join("lexicon.txt");
    write_labeled(&train, &task.train);
    write_labeled(&dev, &task.dev);
    fs::write(&lexicon, task.lexicon.to_sorted_lines()).unwrap();
    (train, dev, lexicon)
}

/// Overrides that keep a contrastive run under a second.
const FAST_CONTRASTIVE: &[&str] = &[
    "--set",
    "embed_dim=8",
    "--set",
    "batch_size_contrastive=8",
    "--set",
    "validation_interval_contrastive=4",
    "--set",
    "max_epochs_contrastive=1",
    "--set",
    "temperature=0.5",
    "--set",
    "learning_rate_contrastive=5e-3",
];

/// Overrides that keep a classifier run under a second.
const FAST_CLASSIFY: &[&str] = &[
    "--set",
    "embed_dim=8",
    "--set",
    "hidden_dim=5",
    "--set",
    "validation_interval_classifier=8",
    "--set",
    "max_epochs_classifier=1",
    "--set",
    "learning_rate_classifier=2e-3",
];

fn concat<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

/// Largest value in the named column of a training metrics CSV, with empty
/// cells (rows logged for the other phase) skipped.
fn csv_column_max(path: &Path, column: usize) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .filter_map(|line| line.split(',').nth(column))
        .filter(|cell| !cell.is_empty())
        .map(|cell| cell.parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The `value` cell of a one-row eval report CSV.
fn eval_csv_value(path: &Path) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let row = text.lines().nth(1).expect("report has a data row");
    row.split(',').nth(1).unwrap().parse().unwrap()
}

// ---------------------------------------------------------------------------
// Exit codes and input validation.

#[test]
fn help_exits_zero_and_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = sifter(dir.path(), &["--help"]);
    assert_eq!(code_of(&out), 0);
    let text = stdout_of(&out);
    for sub in [
        "augment",
        "train-contrastive",
        "train-classify",
        "eval",
        "gradcheck",
        "seed-study",
    ] {
        assert!(text.contains(sub), "--help should list {sub}");
    }
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sifter(
        dir.path(),
        &["augment", "--input", "no_such_corpus.txt", "--output", "out.jsonl"],
    );
    assert_eq!(code_of(&out), 2, "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("no_such_corpus.txt"));
}

#[test]
fn sifter_variant_without_lexicon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = classify_fixture(dir.path());
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-classify",
                "--train",
                train.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "cls.ckpt",
                "--variant",
                "sifter",
            ],
            FAST_CLASSIFY,
        ),
    );
    assert_eq!(code_of(&out), 1);
    assert!(stderr_of(&out).contains("needs a gate lexicon"));
}

#[test]
fn seed_list_shorter_than_two_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = classify_fixture(dir.path());
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-classify",
                "--train",
                train.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "cls.ckpt",
                "--seeds",
                "3",
            ],
            FAST_CLASSIFY,
        ),
    );
    assert_eq!(code_of(&out), 1);
    assert!(stderr_of(&out).contains("at least two seeds"));
}

#[test]
fn unknown_set_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = sifter(dir.path(), &["--set", "no_such_key=1", "gradcheck"]);
    assert_eq!(code_of(&out), 1);
    assert!(stderr_of(&out).contains("unknown config key"));
}

#[test]
fn out_of_range_label_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("bad.jsonl");
    fs::write(
        &train,
        "{\"text\":\"fine first line\",\"label\":1}\n{\"text\":\"bad line\",\"label\":7}\n",
    )
    .unwrap();
    let (_, dev, _) = classify_fixture(dir.path());
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-classify",
                "--train",
                train.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "cls.ckpt",
            ],
            FAST_CLASSIFY,
        ),
    );
    assert_eq!(code_of(&out), 1);
    let err = stderr_of(&out);
    assert!(
        err.contains("bad.jsonl:2") && err.contains("label 7 outside 0..2"),
        "stderr: {err}"
    );
}

#[test]
fn dev_pairs_are_validated_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let (triples, _) = contrastive_fixture(dir.path());
    // Labeled classification records are not similarity pairs.
    let wrong = dir.path().join("wrong_dev.jsonl");
    fs::write(&wrong, "{\"text\":\"not a pair\",\"label\":0}\n").unwrap();
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-contrastive",
                "--triples",
                triples.to_str().unwrap(),
                "--dev",
                wrong.to_str().unwrap(),
                "--output",
                "enc.ckpt",
            ],
            FAST_CONTRASTIVE,
        ),
    );
    assert_eq!(code_of(&out), 1);
    assert!(stderr_of(&out).contains("wrong_dev.jsonl:1"));
    assert!(
        !dir.path().join("enc.ckpt").exists(),
        "no checkpoint may be written when inputs fail validation"
    );

    let missing = sifter(
        dir.path(),
        &concat(
            &[
                "train-contrastive",
                "--triples",
                triples.to_str().unwrap(),
                "--dev",
                "no_such_dev.jsonl",
                "--output",
                "enc.ckpt",
            ],
            FAST_CONTRASTIVE,
        ),
    );
    assert_eq!(code_of(&missing), 2);
    assert!(!dir.path().join("enc.ckpt").exists());
}

#[test]
fn gradcheck_requires_f64() {
    let dir = tempfile::tempdir().unwrap();
    let out = sifter(dir.path(), &["--set", "precision=f32", "gradcheck"]);
    assert_eq!(code_of(&out), 1);
    assert!(stderr_of(&out).contains("64-bit precision only"));
}

#[test]
fn gradcheck_passes_honestly_and_fails_when_corrupted() {
    let dir = tempfile::tempdir().unwrap();
    let honest = sifter(
        dir.path(),
        &["gradcheck", "--scenario", "standard-classifier"],
    );
    assert_ok(&honest);
    assert!(stdout_of(&honest).contains("pass"));

    let corrupted = sifter(
        dir.path(),
        &[
            "gradcheck",
            "--scenario",
            "standard-classifier",
            "--corrupt-backward",
        ],
    );
    assert_eq!(code_of(&corrupted), 3, "a corrupted backward is a numeric error");
    assert!(stdout_of(&corrupted).contains("FAIL"));
    assert!(stderr_of(&corrupted).contains("gradient check failed"));
}

// ---------------------------------------------------------------------------
// Config layering: file < env var < --config flag, all beaten by --set.

const CORPUS: &str = "I like this apple because it is fresh.\n\
                      She loves green tea.\n\
                      They want quiet mornings.\n";

/// Runs `augment` with the given config plumbing and returns the resolved
/// seed recorded in the output's config sidecar.
fn augmented_seed(dir: &Path, args: &[&str], env: &[(&str, &str)], tag: &str) -> u64 {
    let output = format!("{tag}.jsonl");
    let mut full = vec![
        "augment",
        "--input",
        "corpus.txt",
        "--output",
        output.as_str(),
    ];
    full.extend_from_slice(args);
    let out = sifter_env(dir, &full, env);
    assert_ok(&out);
    let sidecar = fs::read_to_string(dir.join(format!("{output}.config.toml"))).unwrap();
    sidecar
        .lines()
        .find_map(|line| line.strip_prefix("seed = "))
        .expect("config sidecar records the seed")
        .parse()
        .unwrap()
}

#[test]
fn config_sources_layer_in_documented_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), CORPUS).unwrap();
    fs::write(dir.path().join("env.toml"), "seed = 5\n").unwrap();
    fs::write(dir.path().join("flag.toml"), "seed = 6\n").unwrap();
    let env_config = [("SIFTER_CONFIG", "env.toml")];

    assert_eq!(augmented_seed(dir.path(), &[], &[], "defaults"), 0);
    assert_eq!(augmented_seed(dir.path(), &[], &env_config, "env"), 5);
    assert_eq!(
        augmented_seed(dir.path(), &["--config", "flag.toml"], &env_config, "flag"),
        6,
        "--config beats the environment variable"
    );
    assert_eq!(
        augmented_seed(
            dir.path(),
            &["--config", "flag.toml", "--set", "seed=9"],
            &env_config,
            "set"
        ),
        9,
        "--set beats every file"
    );
}

// ---------------------------------------------------------------------------
// Flag shorthands agree with their long-form spellings.

#[test]
fn standard_variant_matches_sifter_with_empty_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = classify_fixture(dir.path());
    fs::write(dir.path().join("empty_lexicon.txt"), "").unwrap();
    let base = [
        "train-classify",
        "--train",
        train.to_str().unwrap(),
        "--dev",
        dev.to_str().unwrap(),
    ];
    let standard = concat(&base, &["--output", "std.ckpt", "--variant", "standard"]);
    let gated = concat(
        &base,
        &[
            "--output",
            "gated.ckpt",
            "--variant",
            "sifter",
            "--lexicon",
            "empty_lexicon.txt",
        ],
    );
    assert_ok(&sifter(dir.path(), &concat(&standard, FAST_CLASSIFY)));
    assert_ok(&sifter(dir.path(), &concat(&gated, FAST_CLASSIFY)));

    let ckpt_std = fs::read(dir.path().join("std.ckpt")).unwrap();
    let ckpt_gated = fs::read(dir.path().join("gated.ckpt")).unwrap();
    assert_eq!(ckpt_std, ckpt_gated, "an empty gate lexicon must change nothing");
    let metrics_std = fs::read(dir.path().join("std.ckpt.metrics.csv")).unwrap();
    let metrics_gated = fs::read(dir.path().join("gated.ckpt.metrics.csv")).unwrap();
    assert_eq!(metrics_std, metrics_gated);
}

#[test]
fn lambdas_shorthand_matches_individual_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (triples, dev) = contrastive_fixture(dir.path());
    let base = [
        "train-contrastive",
        "--triples",
        triples.to_str().unwrap(),
        "--dev",
        dev.to_str().unwrap(),
    ];
    let shorthand = concat(&base, &["--output", "a.ckpt", "--lambdas", "1,0.5,0.25"]);
    let longhand = concat(
        &base,
        &[
            "--output",
            "b.ckpt",
            "--set",
            "lambda_xy=1",
            "--set",
            "lambda_xz=0.5",
            "--set",
            "lambda_yz=0.25",
        ],
    );
    assert_ok(&sifter(dir.path(), &concat(&shorthand, FAST_CONTRASTIVE)));
    assert_ok(&sifter(dir.path(), &concat(&longhand, FAST_CONTRASTIVE)));
    assert_eq!(
        fs::read(dir.path().join("a.ckpt")).unwrap(),
        fs::read(dir.path().join("b.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("a.ckpt.metrics.csv")).unwrap(),
        fs::read(dir.path().join("b.ckpt.metrics.csv")).unwrap()
    );
}

// ---------------------------------------------------------------------------
// Batch modes fan out into suffixed artifacts.

#[test]
fn sweep_dropout_writes_one_artifact_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let (triples, dev) = contrastive_fixture(dir.path());
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-contrastive",
                "--triples",
                triples.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "enc.ckpt",
                "--sweep-dropout",
                "0.0,0.2",
            ],
            FAST_CONTRASTIVE,
        ),
    );
    assert_ok(&out);
    assert!(
        !dir.path().join("enc.ckpt").exists(),
        "a sweep replaces the single artifact with per-value ones"
    );
    assert!(dir.path().join("enc.ckpt.p0.0").exists());
    assert!(dir.path().join("enc.ckpt.p0.2").exists());
    let low = fs::read(dir.path().join("enc.ckpt.p0.0.metrics.csv")).unwrap();
    let high = fs::read(dir.path().join("enc.ckpt.p0.2.metrics.csv")).unwrap();
    assert_ne!(low, high, "different dropout must train along different losses");
    for (tag, value) in [("p0.0", "0.0"), ("p0.2", "0.2")] {
        let sidecar =
            fs::read_to_string(dir.path().join(format!("enc.ckpt.{tag}.config.toml"))).unwrap();
        assert!(
            sidecar.contains(&format!("dropout_contrastive = {value}")),
            "sidecar for {tag} records its own dropout"
        );
    }
}

#[test]
fn seed_batch_writes_artifacts_and_a_mean_std_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = classify_fixture(dir.path());
    let out = sifter(
        dir.path(),
        &concat(
            &[
                "train-classify",
                "--train",
                train.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "cls.ckpt",
                "--seeds",
                "1,2,3",
            ],
            FAST_CLASSIFY,
        ),
    );
    assert_ok(&out);
    let mut per_seed = Vec::new();
    for seed in [1, 2, 3] {
        let artifact = dir.path().join(format!("cls.ckpt.s{seed}"));
        assert!(artifact.exists(), "missing {}", artifact.display());
        assert!(dir.path().join(format!("cls.ckpt.s{seed}.metrics.csv")).exists());
        per_seed.push(csv_column_max(
            &dir.path().join(format!("cls.ckpt.s{seed}.metrics.csv")),
            2,
        ));
    }
    let summary = fs::read_to_string(dir.path().join("cls.ckpt.seeds.txt")).unwrap();
    for (i, seed) in [1, 2, 3].iter().enumerate() {
        assert!(
            summary.contains(&format!("seed {seed}: best dev accuracy {:.6}", per_seed[i])),
            "summary should list seed {seed}: {summary}"
        );
    }
    let mean = per_seed.iter().sum::<f64>() / 3.0;
    let std = (per_seed.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!(
        summary.contains(&format!("mean {mean:.6}  std {std:.6}")),
        "summary should end with the aggregate line: {summary}"
    );
}

// ---------------------------------------------------------------------------
// Eval reproduces the metric training reported for the saved checkpoint.

#[test]
fn eval_matches_training_best_spearman_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (triples, dev) = contrastive_fixture(dir.path());
    let train = sifter(
        dir.path(),
        &concat(
            &[
                "train-contrastive",
                "--triples",
                triples.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "enc.ckpt",
            ],
            FAST_CONTRASTIVE,
        ),
    );
    assert_ok(&train);
    let best_in_training = csv_column_max(&dir.path().join("enc.ckpt.metrics.csv"), 2);

    let eval = sifter(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "enc.ckpt",
            "--task",
            "sts",
            "--data",
            dev.to_str().unwrap(),
            "--output",
            "report.csv",
        ],
    );
    assert_ok(&eval);
    let evaluated = eval_csv_value(&dir.path().join("report.csv"));
    assert_eq!(
        evaluated.to_bits(),
        best_in_training.to_bits(),
        "eval of the saved checkpoint must reproduce training's best dev \
         spearman bit-for-bit (training {best_in_training}, eval {evaluated})"
    );

    // The same checkpoint refuses classification data on the sts task.
    let (_, labeled, _) = classify_fixture(dir.path());
    let wrong = sifter(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "enc.ckpt",
            "--task",
            "sts",
            "--data",
            labeled.to_str().unwrap(),
        ],
    );
    assert_eq!(code_of(&wrong), 1);
}

#[test]
fn eval_matches_training_best_accuracy_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, lexicon) = classify_fixture(dir.path());
    let trained = sifter(
        dir.path(),
        &concat(
            &[
                "train-classify",
                "--train",
                train.to_str().unwrap(),
                "--dev",
                dev.to_str().unwrap(),
                "--output",
                "cls.ckpt",
                "--variant",
                "sifter",
                "--lexicon",
                lexicon.to_str().unwrap(),
            ],
            FAST_CLASSIFY,
        ),
    );
    assert_ok(&trained);
    let best_in_training = csv_column_max(&dir.path().join("cls.ckpt.metrics.csv"), 2);

    // No --lexicon here: eval must pick up the checkpoint's lexicon sidecar.
    let eval = sifter(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "cls.ckpt",
            "--task",
            "cls",
            "--data",
            dev.to_str().unwrap(),
            "--output",
            "report.csv",
        ],
    );
    assert_ok(&eval);
    let evaluated = eval_csv_value(&dir.path().join("report.csv"));
    assert_eq!(
        evaluated.to_bits(),
        best_in_training.to_bits(),
        "eval of the saved checkpoint must reproduce training's best dev \
         accuracy bit-for-bit (training {best_in_training}, eval {evaluated})"
    );
}
