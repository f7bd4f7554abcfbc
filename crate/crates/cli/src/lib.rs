//! Argument parsing and subcommand dispatch for the `gankyoku` binary.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use gankyoku::augment::{build_augmented_dataset, read_samples, write_samples, ClassLabel};
use gankyoku::config::{load_config, RunConfig};
use gankyoku::corpus::{
    load_corpus_dir, load_piece_lenient, make_fixture_corpus, read_csv_dir, Corpus, Piece,
    MAX_SEQ_LEN,
};
use gankyoku::synth::{lint, lint_report, sample, stats, stats_report, SampleRequest};
use gankyoku::train::{checkpoint_load, checkpoint_save, metrics_csv, Checkpoint, Trainer};
use gankyoku::vocab::Vocabulary;

/// Worker thread cap for data-parallel stages; 0 or unset means automatic.
pub const THREADS_ENV: &str = "GANKYOKU_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "gankyoku",
    version,
    about = "Conditional WGAN for shakuhachi token scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect the token vocabulary.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Validate or synthesise piece directories.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build the noise-augmented, class-labelled training set.
    Augment(AugmentArgs),
    /// Train a generator/critic pair.
    Train(TrainArgs),
    /// Sample pieces from a checkpoint.
    Sample(SampleArgs),
    /// Report breath repeats, token runs and framing problems.
    Lint(LintArgs),
    /// Report piece lengths and breath-delimited phrase lengths.
    Stats(StatsArgs),
}

#[derive(Subcommand, Debug)]
enum VocabCmd {
    /// Print `label,name` for every token.
    Show(VocabArg),
}

#[derive(Args, Debug)]
struct VocabArg {
    /// Vocabulary manifest (`label,name` lines) [default: built-in]
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CorpusCmd {
    /// Check every *.csv piece in DIR and summarise lengths.
    Validate {
        /// Directory of *.csv pieces.
        dir: PathBuf,
        #[command(flatten)]
        vocab: VocabArg,
    },
    /// Write synthetic fixture pieces to --out.
    Fixtures {
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Seed for every random stream [default: seed from config, 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Pieces to write.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Shortest piece, framing included.
        #[arg(long, default_value_t = 67)]
        min_len: usize,
        /// Longest piece, framing included.
        #[arg(long, default_value_t = MAX_SEQ_LEN)]
        max_len: usize,
        #[command(flatten)]
        common: ConfigArg,
        #[command(flatten)]
        vocab: VocabArg,
    },
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// `key = value` run configuration [default: built-in defaults]
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Corpus directory of *.csv pieces.
    corpus: PathBuf,
    /// Output directory; receives samples.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed for every random stream [default: seed from config, 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Augmented copies per noise class [default: per_class_count from config, 10]
    #[arg(long, value_name = "K")]
    per_class: Option<usize>,
    #[command(flatten)]
    common: ConfigArg,
    #[command(flatten)]
    vocab: VocabArg,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// samples.csv written by `augment`.
    samples: PathBuf,
    /// Output directory for metrics.csv and checkpoints.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed for every random stream [default: seed from config, 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Generator steps to reach [default: total_generator_steps from config, 17701]
    #[arg(long)]
    steps: Option<u64>,
    /// Resume from this checkpoint; its embedded config is used.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArg,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Output directory for piece files.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Pieces to sample [default: sample_count from config, 10]
    #[arg(long)]
    count: Option<usize>,
    /// Conditioning class 0-3 [default: sample_class from config, 0]
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..4))]
    class: Option<u8>,
    /// Noise standard deviation [default: temperature from config, 1]
    #[arg(long)]
    temperature: Option<f64>,
    /// Seed for every random stream [default: seed from config, 0]
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: ConfigArg,
    #[command(flatten)]
    vocab: VocabArg,
}

#[derive(Args, Debug)]
struct LintArgs {
    /// Directory of *.csv pieces.
    dir: PathBuf,
    /// Minimum run length reported [default: lint_run_threshold from config, 4]
    #[arg(long)]
    threshold: Option<usize>,
    /// Also write the report to DIR/lint.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArg,
    #[command(flatten)]
    vocab: VocabArg,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Directory of *.csv pieces.
    dir: PathBuf,
    /// Also write DIR/stats.csv and DIR/phrase_histogram.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArg,
    #[command(flatten)]
    vocab: VocabArg,
}

/// One-line diagnostic for a failed command.
#[derive(Debug)]
pub struct CliError(String);

impl<E: Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn at(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |msg| CliError(format!("{}: {msg}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| at(path)(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| at(path)(e.to_string()))
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| at(dir)(e.to_string()))
}

fn config(arg: &ConfigArg) -> Result<RunConfig, CliError> {
    match &arg.config {
        None => Ok(RunConfig::default()),
        Some(p) => load_config(&read(p)?).map_err(|e| at(p)(e.to_string())),
    }
}

fn vocabulary(arg: &VocabArg) -> Result<Vocabulary, CliError> {
    match &arg.vocab {
        None => Ok(Vocabulary::default()),
        Some(p) => Vocabulary::from_manifest(&read(p)?).map_err(|e| at(p)(e.to_string())),
    }
}

/// Report files open with the resolved configuration as `#` comments.
fn with_config_header(cfg: &RunConfig, body: &str) -> String {
    let mut out: String = cfg.to_text().lines().map(|l| format!("# {l}\n")).collect();
    out.push_str(body);
    out
}

fn lenient_pieces(dir: &Path, vocab: &Vocabulary) -> Result<Vec<Piece>, CliError> {
    let mut files = read_csv_dir(dir)?;
    files.sort();
    if files.is_empty() {
        return Err(at(dir)("no *.csv pieces".into()));
    }
    files
        .iter()
        .map(|(file, text)| {
            let name = file.strip_suffix(".csv").unwrap_or(file);
            load_piece_lenient(name, text, vocab).map_err(|e| CliError(format!("{file}: {e}")))
        })
        .collect()
}

fn summary(corpus: &Corpus) -> String {
    let (lo, hi) = corpus.length_range();
    format!("{} pieces, lengths {lo}\u{2013}{hi}", corpus.len())
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Vocab(VocabCmd::Show(v)) => {
            let vocab = vocabulary(&v)?;
            for (label, name) in vocab.entries() {
                writeln!(out, "{label},{name}")?;
            }
        }
        Command::Corpus(CorpusCmd::Validate { dir, vocab }) => {
            let vocab = vocabulary(&vocab)?;
            let corpus = load_corpus_dir(&dir, &vocab).map_err(|e| at(&dir)(e.to_string()))?;
            writeln!(out, "{}", summary(&corpus))?;
        }
        Command::Corpus(CorpusCmd::Fixtures {
            out: dir,
            seed,
            count,
            min_len,
            max_len,
            common,
            vocab,
        }) => {
            let cfg = config(&common)?;
            let vocab = vocabulary(&vocab)?;
            let seed = seed.unwrap_or(cfg.train.seed);
            let corpus = make_fixture_corpus(seed, count, (min_len, max_len))?;
            corpus.write_dir(&dir, &vocab)?;
            writeln!(out, "wrote {} to {}", summary(&corpus), dir.display())?;
        }
        Command::Augment(a) => {
            let mut cfg = config(&a.common)?;
            let vocab = vocabulary(&a.vocab)?;
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
            if let Some(k) = a.per_class {
                cfg.per_class_count = k;
            }
            let corpus =
                load_corpus_dir(&a.corpus, &vocab).map_err(|e| at(&a.corpus)(e.to_string()))?;
            let seq_len = cfg.train.generator.seq_len;
            let samples =
                build_augmented_dataset(&corpus, seq_len, cfg.per_class_count, cfg.train.seed)?;
            make_dir(&a.out)?;
            let path = a.out.join("samples.csv");
            let mut buf = Vec::new();
            write_samples(&mut buf, &samples)?;
            fs::write(&path, buf).map_err(|e| at(&path)(e.to_string()))?;
            writeln!(
                out,
                "wrote {} samples of length {seq_len} to {}",
                samples.len(),
                path.display()
            )?;
        }
        Command::Train(a) => train(a, out, err)?,
        Command::Sample(a) => {
            let cfg = config(&a.common)?;
            let vocab = vocabulary(&a.vocab)?;
            let bytes = fs::read(&a.checkpoint).map_err(|e| at(&a.checkpoint)(e.to_string()))?;
            let ck =
                Checkpoint::from_bytes(&bytes).map_err(|e| at(&a.checkpoint)(e.to_string()))?;
            let class = match a.class {
                Some(c) => ClassLabel::new(c as i64)?,
                None => cfg.sample.class,
            };
            let req = SampleRequest {
                count: a.count.unwrap_or(cfg.sample.count),
                class,
                temperature: a.temperature.unwrap_or(cfg.sample.temperature),
                seed: a.seed.unwrap_or(cfg.train.seed),
            };
            let pieces = sample(&ck.generator(), &req)?;
            make_dir(&a.out)?;
            for p in &pieces {
                write(&a.out.join(format!("{}.csv", p.name())), &p.to_csv(&vocab))?;
            }
            writeln!(out, "wrote {} pieces to {}", pieces.len(), a.out.display())?;
        }
        Command::Lint(a) => {
            let cfg = config(&a.common)?;
            let vocab = vocabulary(&a.vocab)?;
            let threshold = a.threshold.unwrap_or(cfg.sample.lint_run_threshold);
            let pieces = lenient_pieces(&a.dir, &vocab)?;
            let findings = pieces
                .iter()
                .map(|p| Ok((p, lint(p, threshold)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let report = with_config_header(&cfg, &lint_report(&findings));
            out.write_all(report.as_bytes())?;
            if let Some(dir) = a.out {
                make_dir(&dir)?;
                write(&dir.join("lint.csv"), &report)?;
            }
            let total: usize = findings.iter().map(|(_, f)| f.len()).sum();
            writeln!(err, "{} pieces, {total} findings", pieces.len())?;
        }
        Command::Stats(a) => {
            let cfg = config(&a.common)?;
            let vocab = vocabulary(&a.vocab)?;
            let pieces = lenient_pieces(&a.dir, &vocab)?;
            let (per, agg) = stats(&pieces)?;
            let report = with_config_header(&cfg, &stats_report(&per));
            out.write_all(report.as_bytes())?;
            if let Some(dir) = a.out {
                make_dir(&dir)?;
                write(&dir.join("stats.csv"), &report)?;
                let mut hist = String::from("phrase_length,count\n");
                for (len, n) in &agg.phrase_histogram {
                    hist.push_str(&format!("{len},{n}\n"));
                }
                write(
                    &dir.join("phrase_histogram.csv"),
                    &with_config_header(&cfg, &hist),
                )?;
            }
            writeln!(
                err,
                "{} pieces, lengths {}\u{2013}{}, mean {:.1}",
                per.len(),
                agg.min_length,
                agg.max_length,
                agg.mean_length
            )?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let resumed = match &a.checkpoint {
        Some(p) => {
            let mut f = fs::File::open(p).map_err(|e| at(p)(e.to_string()))?;
            Some(checkpoint_load(&mut f).map_err(|e| at(p)(e.to_string()))?)
        }
        None => None,
    };
    let mut cfg = match &resumed {
        Some(ck) if a.common.config.is_none() => ck.config.clone(),
        Some(_) => {
            return Err(CliError(
                "--config cannot be combined with --checkpoint".into(),
            ))
        }
        None => config(&a.common)?,
    };
    if let Some(s) = a.seed {
        if resumed.is_some() {
            return Err(CliError(
                "--seed cannot be combined with --checkpoint".into(),
            ));
        }
        cfg.train.seed = s;
    }
    let total = a.steps.unwrap_or(cfg.train.total_generator_steps);
    let samples = read_samples(&read(&a.samples)?, cfg.train.generator.seq_len)
        .map_err(|e| at(&a.samples)(e.to_string()))?;
    let mut trainer = match resumed {
        Some(ck) => Trainer::resume(ck, &samples)?,
        None => Trainer::new(cfg.clone(), &samples)?,
    };
    make_dir(&a.out)?;
    let save = |ck: &Checkpoint, path: PathBuf| -> Result<(), CliError> {
        let mut f = fs::File::create(&path).map_err(|e| at(&path)(e.to_string()))?;
        checkpoint_save(ck, &mut f).map_err(|e| at(&path)(e.to_string()))?;
        Ok(())
    };
    let dir = a.out.clone();
    let log = trainer.run_to(total, |ck| {
        save(ck, dir.join(format!("checkpoint_{:06}.gank", ck.step)))
            .map_err(|e| gankyoku::train::TrainError::Io(std::io::Error::other(e.0)))
    })?;
    write(
        &a.out.join("metrics.csv"),
        &with_config_header(&cfg, &metrics_csv(&log)),
    )?;
    let final_path = a.out.join("final.gank");
    save(&trainer.checkpoint(), final_path.clone())?;
    if let Some(m) = log.last() {
        writeln!(
            err,
            "step {}: critic {:.6}, generator {:.6}, wasserstein {:.6}",
            m.step, m.critic_loss, m.generator_loss, m.wasserstein_estimate
        )?;
    }
    writeln!(
        out,
        "trained to step {}; wrote {}",
        trainer.step(),
        final_path.display()
    )?;
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError(format!("{THREADS_ENV}={raw:?} is not a thread count")))?;
    if n > 0 {
        // Fails only if a pool already exists, e.g. when called twice in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Runs one command line. Returns the process exit code: 0 on success, 1 on
/// a domain error, 2 on a usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                    if e.exit_code() == 0 =>
                {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    match init_threads().and_then(|_| execute(cli.command, out, err)) {
        Ok(()) => 0,
        Err(CliError(msg)) => {
            let _ = writeln!(err, "error: {}", msg.replace('\n', " "));
            1
        }
    }
}
