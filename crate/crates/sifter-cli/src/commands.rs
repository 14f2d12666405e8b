//! The `sifter` command line: one subcommand per pipeline stage, so
//! augmentation, training, evaluation, and verification can be scripted
//! independently. Every command resolves one flat configuration
//! (defaults < file < `--set`), writes the resolved document next to each
//! output artifact, and produces byte-identical outputs when rerun with
//! identical inputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sifter_core::augment::{
    build_triples, filter_corpus, load_annotations, load_triples, write_triples,
    AugmentLexicons, Corpus,
};
use sifter_core::checkpoint::{load_params, peek_dtype, save_params};
use sifter_core::classify::{dev_accuracy, history_csv, load_labeled, LabeledExample};
use sifter_core::contrastive::contrastive_history_csv;
use sifter_core::eval::{load_sts_pairs, seed_stability, sts_eval, EvalReport};
use sifter_core::optim::GradcheckSettings;
use sifter_core::recurrent::Lexicon;
use sifter_core::verify::{run_scenario, Scenario, ScenarioDims};
use sifter_core::{Dtype, Error, Result, Scalar, Vocab};

use crate::config::{opt_path, Config};
use crate::pipelines::{
    classifier_from_params, encoder_from_params, run_classify, run_contrastive,
    vocab_from_labeled, vocab_from_triples,
};

#[derive(Debug, Parser)]
#[command(
    name = "sifter",
    version,
    about = "Sentence-representation laboratory: augmentation, contrastive \
             training, gated-memory classification, and evaluation"
)]
pub struct Cli {
    /// TOML config file; defaults to $SIFTER_CONFIG, then built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set seed=7 (repeatable; beats the file).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build augmented training triples (x, y+, z+) from a sentence corpus.
    Augment(AugmentArgs),
    /// Train a sentence encoder on augmented triples.
    TrainContrastive(TrainContrastiveArgs),
    /// Train a sentiment classifier (standard or sifter variant).
    TrainClassify(TrainClassifyArgs),
    /// Evaluate a saved checkpoint on similarity pairs or labeled text.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences (64-bit only).
    Gradcheck(GradcheckArgs),
    /// Rerun the contrastive pipeline across seeds and report stability.
    SeedStudy(SeedStudyArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Sentence corpus: plain text (one sentence per line) or JSON-lines
    /// records with a "text" field. Falls back to corpus_file.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Optional backbone annotations (JSON-lines: index, triples).
    /// Indices refer to the corpus after filtering. Falls back to
    /// annotations_file.
    #[arg(long, value_name = "PATH")]
    pub annotations: Option<PathBuf>,
    /// Output triple file (JSON-lines: x, y_plus, z_plus). Falls back to
    /// triples_file.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Run seed (overrides the config key).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainContrastiveArgs {
    /// Triple file from `augment`. Falls back to triples_file.
    #[arg(long, value_name = "PATH")]
    pub triples: Option<PathBuf>,
    /// Dev similarity pairs (JSON-lines: s1, s2, score). Falls back to
    /// dev_pairs_file.
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write (best dev Spearman).
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    /// Shorthand for the three loss weights, e.g. --lambdas 1,0,0.
    #[arg(long, value_name = "XY,XZ,YZ")]
    pub lambdas: Option<String>,
    /// Train once per dropout value, e.g. --sweep-dropout 0.1,0.15,0.2;
    /// artifacts get a .p<value> suffix.
    #[arg(long, value_name = "LIST")]
    pub sweep_dropout: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Ungated recurrent classifier.
    Standard,
    /// Lexicon-gated recurrent classifier; requires a lexicon.
    Sifter,
}

#[derive(Debug, Args)]
pub struct TrainClassifyArgs {
    /// Labeled training data (JSON-lines: text, label). Falls back to
    /// train_file.
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Labeled dev data. Falls back to dev_file.
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write (best dev accuracy).
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "standard")]
    pub variant: Variant,
    /// Gate lexicon for the sifter variant (one token per line).
    /// Falls back to classifier_lexicon.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Train once per seed, e.g. --seeds 0,1,2,3,4; artifacts get a
    /// .s<seed> suffix and a summary reports mean and standard deviation.
    #[arg(long, value_name = "LIST")]
    pub seeds: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    /// Spearman of encoding cosines against gold similarity scores.
    Sts,
    /// Accuracy of predicted labels.
    Cls,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; its .vocab.txt sidecar must sit next to it.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub task: Task,
    /// Data file: similarity pairs for sts, labeled text for cls.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Gate lexicon for cls; defaults to the checkpoint's .lexicon.txt
    /// sidecar when present.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Also write the report as CSV here.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    All,
    StandardClassifier,
    GatedClassifier,
    ContrastiveEncoder,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub scenario: ScenarioArg,
    /// How many consecutive seeds to check, starting at the config seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Embedding width fed to the recurrent cell.
    #[arg(long, value_name = "N")]
    pub d_in: Option<usize>,
    /// Recurrent width.
    #[arg(long, value_name = "N")]
    pub d_h: Option<usize>,
    /// Sequence length.
    #[arg(long, value_name = "N")]
    pub seq_len: Option<usize>,
    /// Class count for the classifier scenarios.
    #[arg(long, value_name = "N")]
    pub classes: Option<usize>,
    /// Triple count for the contrastive scenario.
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,
    /// Print the full per-tensor error table for every run.
    #[arg(long)]
    pub verbose: bool,
    /// Deliberately falsify the analytic gradients first; the check must
    /// then fail. Exists to prove the harness catches a broken backward.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Args)]
pub struct SeedStudyArgs {
    /// Triple file from `augment`. Falls back to triples_file.
    #[arg(long, value_name = "PATH")]
    pub triples: Option<PathBuf>,
    /// Dev similarity pairs. Falls back to dev_pairs_file.
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Seeds to run, e.g. --seeds 0,1,2,3,4.
    #[arg(long, value_name = "LIST", default_value = "0,1,2,3,4")]
    pub seeds: String,
    /// Also write per-seed results as CSV here.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let config = Config::resolve(cli.config.as_deref(), &cli.sets)?;
    match cli.command {
        Command::Augment(args) => cmd_augment(config, args),
        Command::TrainContrastive(args) => cmd_train_contrastive(config, args),
        Command::TrainClassify(args) => cmd_train_classify(config, args),
        Command::Eval(args) => cmd_eval(config, args),
        Command::Gradcheck(args) => cmd_gradcheck(config, args),
        Command::SeedStudy(args) => cmd_seed_study(config, args),
    }
}

/// `artifact.suffix`, next to the artifact: `model.ckpt` + `vocab.txt`
/// gives `model.ckpt.vocab.txt`.
pub fn sidecar_path(artifact: &Path, suffix: &str) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(suffix);
    artifact.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_config_sidecar(artifact: &Path, config: &Config) -> Result<()> {
    write_text(&sidecar_path(artifact, "config.toml"), &config.to_toml_string())
}

fn resolve_path(
    flag: Option<PathBuf>,
    fallback: &str,
    flag_name: &str,
    key: &str,
) -> Result<PathBuf> {
    flag.or_else(|| opt_path(fallback)).ok_or_else(|| {
        Error::invalid(format!("missing path: pass {flag_name} or set {key} in the config"))
    })
}

fn lossy(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn parse_seed_list(spec: &str) -> Result<Vec<u64>> {
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad seed {:?} in seed list", tok.trim())))
        })
        .collect()
}

fn cmd_augment(mut config: Config, args: AugmentArgs) -> Result<()> {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let input = resolve_path(args.input, &config.corpus_file, "--input", "corpus_file")?;
    let output = resolve_path(args.output, &config.triples_file, "--output", "triples_file")?;
    let annotations_path = args.annotations.or_else(|| opt_path(&config.annotations_file));
    config.corpus_file = lossy(&input);
    config.triples_file = lossy(&output);
    config.annotations_file = annotations_path.as_deref().map(lossy).unwrap_or_default();

    let corpus = Corpus::load(&input)?;
    if corpus.is_empty() {
        return Err(Error::invalid(format!("{}: empty corpus", input.display())));
    }
    let kept = filter_corpus(&corpus);
    let removed = corpus.len() - kept.len();

    let mut lexicons = AugmentLexicons::builtin();
    if let Some(p) = opt_path(&config.deletion_lexicon) {
        lexicons.deletion = Lexicon::from_file(&p, true)?;
    }
    if let Some(p) = opt_path(&config.pronoun_lexicon) {
        lexicons.pronouns = Lexicon::from_file(&p, true)?;
    }
    if let Some(p) = opt_path(&config.verb_lexicon) {
        lexicons.verbs = Lexicon::from_file(&p, true)?;
    }
    if let Some(p) = opt_path(&config.determiner_lexicon) {
        lexicons.determiners = Lexicon::from_file(&p, true)?;
    }

    let annotations = match &annotations_path {
        Some(p) => Some(load_annotations(p, &kept)?),
        None => None,
    };
    let (triples, report) = build_triples(&kept, annotations.as_ref(), &lexicons, config.seed)?;
    write_triples(&output, &triples)?;
    let report_text = format!(
        "{} sentences read, {removed} removed by corpus filter\n{report}\n",
        corpus.len()
    );
    write_text(&sidecar_path(&output, "report.txt"), &report_text)?;
    write_config_sidecar(&output, &config)?;
    print!("{report_text}");
    println!("triples written to {}", output.display());
    Ok(())
}

fn parse_lambdas(spec: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad loss weight {:?}", tok.trim())))
        })
        .collect::<Result<_>>()?;
    match parts[..] {
        [xy, xz, yz] => Ok((xy, xz, yz)),
        _ => Err(Error::invalid("--lambdas needs exactly three values: XY,XZ,YZ")),
    }
}

fn cmd_train_contrastive(mut config: Config, args: TrainContrastiveArgs) -> Result<()> {
    if let Some(spec) = &args.lambdas {
        let (xy, xz, yz) = parse_lambdas(spec)?;
        config.lambda_xy = xy;
        config.lambda_xz = xz;
        config.lambda_yz = yz;
    }
    let triples_path =
        resolve_path(args.triples, &config.triples_file, "--triples", "triples_file")?;
    let dev_path = resolve_path(args.dev, &config.dev_pairs_file, "--dev", "dev_pairs_file")?;
    config.triples_file = lossy(&triples_path);
    config.dev_pairs_file = lossy(&dev_path);

    // Both inputs load (and fail) before any training starts.
    let triples = load_triples(&triples_path)?;
    let dev = load_sts_pairs(&dev_path)?;

    let mut jobs = vec![(config.clone(), args.output.clone())];
    if let Some(sweep) = &args.sweep_dropout {
        jobs.clear();
        for tok in sweep.split(',') {
            let tok = tok.trim();
            let p: f64 = tok
                .parse()
                .map_err(|_| Error::invalid(format!("bad dropout value {tok:?}")))?;
            let mut job_config = config.clone();
            job_config.dropout_contrastive = p;
            jobs.push((job_config, sidecar_path(&args.output, &format!("p{tok}"))));
        }
    }
    for (job_config, output) in &jobs {
        match job_config.precision.as_str() {
            "f32" => contrastive_job::<f32>(job_config, &triples, &dev, output)?,
            _ => contrastive_job::<f64>(job_config, &triples, &dev, output)?,
        }
    }
    Ok(())
}

fn contrastive_job<S: Scalar>(
    config: &Config,
    triples: &[sifter_core::augment::AugmentedTriple],
    dev: &[sifter_core::eval::STSPair],
    output: &Path,
) -> Result<()> {
    let vocab = vocab_from_triples(triples);
    let run = run_contrastive::<S>(config, &vocab, triples, dev)?;
    save_params(output, &run.outcome.best)?;
    vocab.save(&sidecar_path(output, "vocab.txt"))?;
    write_text(
        &sidecar_path(output, "metrics.csv"),
        &contrastive_history_csv(&run.outcome.history),
    )?;
    write_config_sidecar(output, config)?;
    println!(
        "dev spearman {:.6} at init, best {:.6} at step {}; alignment {:.6} -> {:.6}",
        run.outcome.init_spearman,
        run.outcome.best_spearman,
        run.outcome.best_step,
        run.init_alignment,
        run.best_alignment,
    );
    println!("checkpoint written to {}", output.display());
    Ok(())
}

fn cmd_train_classify(mut config: Config, args: TrainClassifyArgs) -> Result<()> {
    let train_path = resolve_path(args.train, &config.train_file, "--train", "train_file")?;
    let dev_path = resolve_path(args.dev, &config.dev_file, "--dev", "dev_file")?;
    config.train_file = lossy(&train_path);
    config.dev_file = lossy(&dev_path);

    let lexicon = match args.variant {
        Variant::Sifter => {
            let path = args
                .lexicon
                .or_else(|| opt_path(&config.classifier_lexicon))
                .ok_or_else(|| {
                    Error::invalid(
                        "the sifter variant needs a gate lexicon: \
                         pass --lexicon or set classifier_lexicon",
                    )
                })?;
            config.classifier_lexicon = lossy(&path);
            Some(Lexicon::from_file(&path, true)?)
        }
        Variant::Standard => None,
    };

    let train = load_labeled(&train_path, config.num_classes)?;
    let dev = load_labeled(&dev_path, config.num_classes)?;
    let vocab = vocab_from_labeled(&train);

    let seeds = match &args.seeds {
        Some(spec) => {
            let seeds = parse_seed_list(spec)?;
            if seeds.len() < 2 {
                return Err(Error::invalid("--seeds needs at least two seeds"));
            }
            Some(seeds)
        }
        None => None,
    };

    match config.precision.as_str() {
        "f32" => classify_jobs::<f32>(&config, &args.output, &vocab, &train, &dev, lexicon, seeds),
        _ => classify_jobs::<f64>(&config, &args.output, &vocab, &train, &dev, lexicon, seeds),
    }
}

fn classify_jobs<S: Scalar>(
    config: &Config,
    output: &Path,
    vocab: &Vocab,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    lexicon: Option<Lexicon>,
    seeds: Option<Vec<u64>>,
) -> Result<()> {
    let Some(seeds) = seeds else {
        let best = classify_job::<S>(config, output, vocab, train, dev, lexicon.as_ref())?;
        println!("best dev accuracy {best:.6}");
        println!("checkpoint written to {}", output.display());
        return Ok(());
    };

    let mut summary = String::new();
    let mut accuracies = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let mut job_config = config.clone();
        job_config.seed = seed;
        let artifact = sidecar_path(output, &format!("s{seed}"));
        let best = classify_job::<S>(&job_config, &artifact, vocab, train, dev, lexicon.as_ref())?;
        summary.push_str(&format!("seed {seed}: best dev accuracy {best:.6}\n"));
        accuracies.push(best);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    summary.push_str(&format!("mean {mean:.6}  std {std:.6}\n"));
    write_text(&sidecar_path(output, "seeds.txt"), &summary)?;
    write_config_sidecar(output, config)?;
    print!("{summary}");
    Ok(())
}

fn classify_job<S: Scalar>(
    config: &Config,
    output: &Path,
    vocab: &Vocab,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    lexicon: Option<&Lexicon>,
) -> Result<f64> {
    let run = run_classify::<S>(config, vocab, train, dev, lexicon)?;
    save_params(output, &run.outcome.best)?;
    vocab.save(&sidecar_path(output, "vocab.txt"))?;
    if let Some(lex) = lexicon {
        write_text(&sidecar_path(output, "lexicon.txt"), &lex.to_sorted_lines())?;
    }
    write_text(
        &sidecar_path(output, "metrics.csv"),
        &history_csv(&run.outcome.history),
    )?;
    write_config_sidecar(output, config)?;
    Ok(run.outcome.best_accuracy)
}

fn cmd_eval(config: Config, args: EvalArgs) -> Result<()> {
    match peek_dtype(&args.checkpoint)? {
        Dtype::F32 => eval_job::<f32>(config, args),
        Dtype::F64 => eval_job::<f64>(config, args),
    }
}

fn eval_job<S: Scalar>(config: Config, args: EvalArgs) -> Result<()> {
    let params = load_params::<S>(&args.checkpoint)?;
    let vocab = Vocab::load(&sidecar_path(&args.checkpoint, "vocab.txt"))?;
    let label = lossy(&args.checkpoint);

    let report = match args.task {
        Task::Sts => {
            let pairs = load_sts_pairs(&args.data)?;
            let encoder = encoder_from_params::<S>(&params)?;
            let encode = |s: &str| -> Result<Vec<f64>> {
                let tokens = sifter_core::augment::tokenize(s);
                let h = encoder.encode_eval(&vocab, &tokens)?;
                Ok(h.data().iter().map(|v| v.as_f64()).collect())
            };
            sts_eval(encode, &label, &pairs)?
        }
        Task::Cls => {
            let model = classifier_from_params::<S>(&params)?;
            let lexicon_path = args.lexicon.clone().or_else(|| {
                let sidecar = sidecar_path(&args.checkpoint, "lexicon.txt");
                sidecar.exists().then_some(sidecar)
            });
            let lexicon = match &lexicon_path {
                Some(p) => Some(Lexicon::from_file(p, true)?),
                None => None,
            };
            let data = load_labeled(&args.data, model.head.k())?;
            let value = dev_accuracy(&model, &vocab, &data, lexicon.as_ref())?;
            EvalReport {
                metric: "accuracy".into(),
                value,
                samples: data.len(),
                checkpoint: label,
            }
        }
    };
    println!("{}", report.text());
    if let Some(out) = &args.output {
        write_text(out, &report.csv())?;
        write_config_sidecar(out, &config)?;
    }
    Ok(())
}

fn cmd_gradcheck(config: Config, args: GradcheckArgs) -> Result<()> {
    if config.precision != "f64" {
        return Err(Error::invalid(
            "gradcheck runs in 64-bit precision only; set precision=\"f64\"",
        ));
    }
    let scenarios: &[Scenario] = match args.scenario {
        ScenarioArg::All => &Scenario::ALL,
        ScenarioArg::StandardClassifier => &[Scenario::StandardClassifier],
        ScenarioArg::GatedClassifier => &[Scenario::GatedClassifier],
        ScenarioArg::ContrastiveEncoder => &[Scenario::ContrastiveEncoder],
    };
    if args.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    let defaults = ScenarioDims::default();
    let dims = ScenarioDims {
        d_in: args.d_in.unwrap_or(defaults.d_in),
        d_h: args.d_h.unwrap_or(defaults.d_h),
        t: args.seq_len.unwrap_or(defaults.t),
        k: args.classes.unwrap_or(defaults.k),
        n: args.batch.unwrap_or(defaults.n),
    };
    let settings = GradcheckSettings::default();
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for &scenario in scenarios {
        for offset in 0..args.seeds {
            let seed = config.seed + offset;
            let report = run_scenario(scenario, dims, seed, &settings, args.corrupt_backward)?;
            let ok = report.passed();
            println!(
                "{} seed {seed}: max relative error {:.3e} {}",
                scenario.name(),
                report.max_rel_err,
                if ok { "pass" } else { "FAIL" },
            );
            if args.verbose {
                print!("{}", report.text_table());
            }
            worst = worst.max(report.max_rel_err);
            all_pass &= ok;
        }
    }
    if !all_pass {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} at threshold {:.1e}",
            settings.threshold
        )));
    }
    Ok(())
}

fn cmd_seed_study(mut config: Config, args: SeedStudyArgs) -> Result<()> {
    let triples_path =
        resolve_path(args.triples, &config.triples_file, "--triples", "triples_file")?;
    let dev_path = resolve_path(args.dev, &config.dev_pairs_file, "--dev", "dev_pairs_file")?;
    config.triples_file = lossy(&triples_path);
    config.dev_pairs_file = lossy(&dev_path);
    let seeds = parse_seed_list(&args.seeds)?;

    let triples = load_triples(&triples_path)?;
    let dev = load_sts_pairs(&dev_path)?;
    let vocab = vocab_from_triples(&triples);

    let study = match config.precision.as_str() {
        "f32" => seed_stability(
            |seed| {
                let mut job_config = config.clone();
                job_config.seed = seed;
                run_contrastive::<f32>(&job_config, &vocab, &triples, &dev)
                    .map(|run| run.outcome.best_spearman)
            },
            &seeds,
        )?,
        _ => seed_stability(
            |seed| {
                let mut job_config = config.clone();
                job_config.seed = seed;
                run_contrastive::<f64>(&job_config, &vocab, &triples, &dev)
                    .map(|run| run.outcome.best_spearman)
            },
            &seeds,
        )?,
    };
    print!("{}", study.text());
    if let Some(out) = &args.output {
        write_text(out, &study.csv())?;
        write_config_sidecar(out, &config)?;
    }
    Ok(())
}
