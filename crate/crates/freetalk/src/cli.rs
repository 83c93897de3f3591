//! The `freetalk` command line.
//!
//! Exit status is 0 on success, 1 on any validation or runtime failure (with
//! a JSON error record on stderr) and 2 when `gradcheck` finds a mismatch.
//! All randomness derives from `--seed` (falling back to `FREETALK_SEED`,
//! then the config file, then 0).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use freetalk_core::embedder::SurrogateEmbedder;
use freetalk_core::identity::{add_freq_noise, train_patch, IdentityTrainConfig};
use freetalk_core::metrics::{evaluate_pair, stcmr, stcs, DEFAULT_THRESHOLD};
use freetalk_core::rng::{stream_rng, Stream};
use freetalk_core::sample::{protect, SampleConfig};

use crate::audio::{read_wav, write_wav, Encoding};
use crate::config::RunConfig;
use crate::gradcheck;
use crate::patch_file::{load_patch, save_patch};
use crate::report::{
    protect_summary, write_protect_report, write_record, ErrorRecord, EvalSummary, PairRecord,
    StepRecord,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SELF_TEST: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "freetalk",
    version,
    about = "Protect recorded speech against voice cloning"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a per-utterance perturbation and write the protected audio.
    Protect(ProtectArgs),
    /// Train a universal noise patch for one speaker.
    TrainPatch(TrainArgs),
    /// Apply a trained patch to audio of any length.
    ApplyPatch(ApplyArgs),
    /// Compare original and protected audio with the surrogate verifier.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Global seed for every random stream.
    #[arg(long, env = "FREETALK_SEED")]
    pub seed: Option<u64>,
    /// Seed of the surrogate embedder's projection.
    #[arg(long)]
    pub embedder_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProtectArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Centered fraction of the spectrum to perturb, in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise_level: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Odd time-smoothing width.
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub no_smooth: bool,
    /// Line-delimited JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Output sample encoding: pcm16 or float32.
    #[arg(long)]
    pub encoding: Option<Encoding>,
    #[command(flatten)]
    pub seeds: SeedArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// WAV files or directories of WAV files.
    #[arg(long, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Patch width in STFT frames. 30 is the strong regime; 120 with
    /// noise level 0.1 protects far less.
    #[arg(long)]
    pub frame_len: Option<usize>,
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Probability that a block is left clean, in [0, 1).
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Neighborhood draws per utterance and step.
    #[arg(long)]
    pub k: Option<usize>,
    /// Standard deviation of the neighborhood draws.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Weight of the second gradient stage, in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Augment inputs before embedding during training.
    #[arg(long)]
    pub augment: bool,
    #[command(flatten)]
    pub seeds: SeedArgs,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub patch: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub encoding: Option<Encoding>,
    #[command(flatten)]
    pub seeds: SeedArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Original WAV, or a directory paired by file name with --protected.
    #[arg(long)]
    pub original: Option<PathBuf>,
    #[arg(long)]
    pub protected: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Emit line-delimited JSON instead of text.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub seeds: SeedArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, env = "FREETALK_SEED")]
    pub seed: Option<u64>,
}

/// Parses `args` and runs the command, writing normal output to `stdout`
/// and error records to `stderr`. Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let message = e.render().to_string();
            report_error(stderr, "usage", message.trim_end().to_string());
            return EXIT_FAILURE;
        }
    };
    match dispatch(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            report_error(stderr, e.kind(), e.to_string());
            EXIT_FAILURE
        }
    }
}

fn report_error(stderr: &mut dyn Write, kind: &str, message: String) {
    let _ = write_record(
        stderr,
        &ErrorRecord {
            error: kind,
            message,
        },
    );
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Protect(args) => cmd_protect(args, &config, stdout),
        Command::TrainPatch(args) => cmd_train_patch(args, &config, stdout),
        Command::ApplyPatch(args) => cmd_apply_patch(args, &config),
        Command::Eval(args) => cmd_eval(args, &config, stdout),
        Command::Gradcheck(args) => cmd_gradcheck(args, &config, stdout),
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
}

fn parse_encoding(flag: Option<Encoding>, file: Option<&str>) -> Result<Encoding> {
    match (flag, file) {
        (Some(e), _) => Ok(e),
        (None, Some(name)) => name.parse().map_err(Error::Usage),
        (None, None) => Ok(Encoding::default()),
    }
}

impl SeedArgs {
    fn seed(&self, config: &RunConfig) -> u64 {
        self.seed.or(config.seed).unwrap_or(0)
    }

    fn embedder(&self, config: &RunConfig) -> Result<SurrogateEmbedder> {
        let seed = self.embedder_seed.or(config.embedder_seed).unwrap_or(0);
        Ok(SurrogateEmbedder::with_seed(seed)?)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_stdout<T: serde::Serialize>(stdout: &mut dyn Write, record: &T) -> Result<()> {
    write_record(stdout, record).map_err(io_err(Path::new("<stdout>")))
}

fn cmd_protect(args: ProtectArgs, config: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let file = &config.protect;
    let defaults = SampleConfig::default();
    let cfg = SampleConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
        lambda: args
            .noise_level
            .or(file.noise_level)
            .unwrap_or(defaults.lambda),
        steps: args.steps.or(file.steps).unwrap_or(defaults.steps),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        kernel: args.kernel.or(file.kernel).unwrap_or(defaults.kernel),
        augment: !args.no_augment && file.augment.unwrap_or(defaults.augment),
        smooth: !args.no_smooth && file.smooth.unwrap_or(defaults.smooth),
        seed: args.seeds.seed(config),
        stft: defaults.stft,
    };
    cfg.validate()?;
    let input = required(args.input.or(file.input.clone()), "input")?;
    let output = required(args.output.or(file.output.clone()), "output")?;
    let report_path = args.report.or(file.report.clone());
    let encoding = parse_encoding(args.encoding, file.encoding.as_deref())?;
    let embedder = args.seeds.embedder(config)?;

    let waveform = read_wav(&input)?;
    let (protected, report) = protect(&waveform, &cfg, &embedder)?;
    write_wav(&protected, &output, encoding)?;
    if let Some(path) = report_path {
        let mut buf = Vec::new();
        write_protect_report(&mut buf, &report).expect("writing to memory");
        fs::write(&path, buf).map_err(io_err(&path))?;
    }
    write_stdout(stdout, &protect_summary(&report))?;
    Ok(EXIT_OK)
}

/// Expands directories to their `.wav` files in name order.
fn collect_wavs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .map_err(io_err(path))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .is_some_and(|ext| ext.eq_ignore_ascii_case("wav"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

fn cmd_train_patch(args: TrainArgs, config: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let file = &config.train;
    let defaults = IdentityTrainConfig::default();
    let cfg = IdentityTrainConfig {
        frame_len: args
            .frame_len
            .or(file.frame_len)
            .unwrap_or(defaults.frame_len),
        lambda: args
            .noise_level
            .or(file.noise_level)
            .unwrap_or(defaults.lambda),
        mask_ratio: args
            .mask_ratio
            .or(file.mask_ratio)
            .unwrap_or(defaults.mask_ratio),
        steps: args.steps.or(file.steps).unwrap_or(defaults.steps),
        neighborhood_samples: args.k.or(file.k).unwrap_or(defaults.neighborhood_samples),
        neighborhood_sd: args
            .epsilon
            .or(file.epsilon)
            .unwrap_or(defaults.neighborhood_sd),
        interp_weight: args.gamma.or(file.gamma).unwrap_or(defaults.interp_weight),
        inner_lr: args.inner_lr.or(file.inner_lr).unwrap_or(defaults.inner_lr),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        augment: args.augment || file.augment.unwrap_or(defaults.augment),
        seed: args.seeds.seed(config),
        stft: defaults.stft,
    };
    cfg.validate()?;
    let inputs = if args.inputs.is_empty() {
        file.inputs.clone().unwrap_or_default()
    } else {
        args.inputs
    };
    let output = required(args.output.or(file.output.clone()), "output")?;
    let embedder = args.seeds.embedder(config)?;

    let files = collect_wavs(&inputs)?;
    let train_set = files.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
    let mut io_result = Ok(());
    let patch = train_patch(&train_set, &cfg, &embedder, |step, loss| {
        if io_result.is_ok() {
            io_result = write_stdout(stdout, &StepRecord { step, loss });
        }
    })?;
    io_result?;
    save_patch(&patch, &output)?;
    Ok(EXIT_OK)
}

fn cmd_apply_patch(args: ApplyArgs, config: &RunConfig) -> Result<i32> {
    let file = &config.apply;
    let input = required(args.input.or(file.input.clone()), "input")?;
    let patch_path = required(args.patch.or(file.patch.clone()), "patch")?;
    let output = required(args.output.or(file.output.clone()), "output")?;
    let encoding = parse_encoding(args.encoding, file.encoding.as_deref())?;
    let seed = args.seeds.seed(config);

    let patch = load_patch(&patch_path)?;
    let waveform = read_wav(&input)?;
    let mut rng = stream_rng(seed, Stream::ApplyMask);
    let protected = add_freq_noise(&waveform, &patch, &mut rng)?;
    write_wav(&protected, &output, encoding)?;
    Ok(EXIT_OK)
}

/// `(original, protected)` pairs: two files, or two directories matched by
/// file name.
fn eval_pairs(original: &Path, protected: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !original.is_dir() {
        return Ok(vec![(original.to_path_buf(), protected.to_path_buf())]);
    }
    if !protected.is_dir() {
        return Err(Error::Usage(
            "--original is a directory, so --protected must be one too".into(),
        ));
    }
    let pairs: Vec<_> = collect_wavs(&[original.to_path_buf()])?
        .into_iter()
        .map(|orig| {
            let prot = protected.join(orig.file_name().expect("listed files have names"));
            (orig, prot)
        })
        .collect();
    Ok(pairs)
}

fn cmd_eval(args: EvalArgs, config: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let file = &config.eval;
    let threshold = args
        .threshold
        .or(file.threshold)
        .unwrap_or(DEFAULT_THRESHOLD);
    if !threshold.is_finite() {
        return Err(freetalk_core::Error::Config(format!("invalid threshold {threshold}")).into());
    }
    let original = required(args.original.or(file.original.clone()), "original")?;
    let protected = required(args.protected.or(file.protected.clone()), "protected")?;
    let embedder = args.seeds.embedder(config)?;

    let mut results = Vec::new();
    for (orig, prot) in eval_pairs(&original, &protected)? {
        let r = evaluate_pair(&read_wav(&orig)?, &read_wav(&prot)?, &embedder, threshold)?;
        if args.json {
            write_stdout(stdout, &PairRecord::from(&r))?;
        } else {
            let snr = match r.snr.db() {
                Some(db) => format!("{db:.2} dB"),
                None => "no perturbation".into(),
            };
            writeln!(
                stdout,
                "{}: similarity {:.4}, match {}, snr {snr}",
                prot.display(),
                r.similarity,
                r.is_match
            )
            .map_err(io_err(Path::new("<stdout>")))?;
        }
        results.push(r);
    }
    let summary = EvalSummary {
        stcmr: stcmr(&results)?,
        stcs: stcs(&results)?,
    };
    if args.json {
        write_stdout(stdout, &summary)?;
    } else {
        writeln!(
            stdout,
            "STCMR {:.4}  STCS {:.4}",
            summary.stcmr, summary.stcs
        )
        .map_err(io_err(Path::new("<stdout>")))?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: GradcheckArgs, config: &RunConfig, stdout: &mut dyn Write) -> Result<i32> {
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let suites = [
        gradcheck::embedder_suite(seed, 10, 200)?,
        gradcheck::chain_suite(seed, 20)?,
    ];
    for s in &suites {
        write_stdout(stdout, s)?;
    }
    Ok(if suites.iter().all(|s| s.passed) {
        EXIT_OK
    } else {
        EXIT_SELF_TEST
    })
}
