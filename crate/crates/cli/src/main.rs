use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use pseudopan::config::PipelineConfig;
use pseudopan::io::DatasetManifest;
use pseudopan::pipeline;
use pseudopan::synth::{self, Scenario};

/// Panoptic pseudo-labels from stereo video, plus evaluation tooling.
///
/// Any config key can be overridden as `--section.key=value`, e.g.
/// `--fusion.psi_ts=0.1` or `--semantic.crf.max_side=64`.
#[derive(Debug, Parser)]
#[command(name = "pseudopan", version)]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stage-1 pseudo labels for every frame in a manifest.
    PseudoLabel {
        manifest: PathBuf,
        /// Overrides the manifest's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Self labels from a bundle of augmented-view predictions.
    SelfLabel {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores predicted labels against ground truth.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        /// Thing/stuff split of the predictions (default: <pred_dir>/thing_stuff.json).
        #[arg(long)]
        pred_split: Option<PathBuf>,
        /// Thing/stuff split of the ground truth (default: <gt_dir>/thing_stuff.json).
        #[arg(long)]
        gt_split: Option<PathBuf>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Colour rasters for label files (`<stem>_sem.png`, instance map alongside).
    Visualize {
        #[arg(required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Renders a synthetic dataset with ground truth and a ready manifest.
    Synth {
        out_dir: PathBuf,
        /// static, one_mover, two_movers, or noisy.
        #[arg(long, default_value = "two_movers")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        frames: usize,
    },
}

/// Separates `--section.key=value` overrides from the arguments clap parses.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for (i, a) in args.into_iter().enumerate() {
        let is_override = i > 0
            && a.strip_prefix("--")
                .and_then(|s| s.split_once('='))
                .is_some_and(|(k, _)| k.contains('.'));
        if is_override {
            overrides.push(a);
        } else {
            rest.push(a);
        }
    }
    (rest, overrides)
}

fn init_workers() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("CUPS_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("CUPS_WORKERS={raw:?} is not a worker count"))?;
    if n == 0 {
        bail!("CUPS_WORKERS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn write_report(path: &Path, value: &pipeline::EvalReport) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Failure classified by exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let internal = error
            .chain()
            .find_map(|e| e.downcast_ref::<pseudopan::Error>())
            .is_some_and(|e| !e.is_input_error());
        Failure {
            code: if internal { 2 } else { 1 },
            error,
        }
    }
}

impl From<pseudopan::Error> for Failure {
    fn from(error: pseudopan::Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

fn run(cli: Cli, overrides: &[String]) -> Result<(), Failure> {
    init_workers()?;
    let config = PipelineConfig::load(cli.config.as_deref(), overrides).context("loading config")?;
    match cli.command {
        Command::PseudoLabel { manifest, out } => {
            let mut m = DatasetManifest::load(&manifest).context("loading manifest")?;
            if let Some(out) = out {
                m.output_dir = out;
            }
            let summary = pipeline::pseudo_label(&m, &config)?;
            eprintln!(
                "{} frame(s) labelled, {} failed, {:.2}s",
                summary.frames.len(),
                summary.failed.len(),
                summary.seconds
            );
            if !summary.is_complete() {
                for f in &summary.failed {
                    eprintln!("  {}: {}", f.name, f.error);
                }
                let code = if summary.failed.iter().all(|f| f.input_error) { 1 } else { 2 };
                return Err(Failure {
                    code,
                    error: anyhow::anyhow!(
                        "{} frame(s) failed; partial outputs kept in {}",
                        summary.failed.len(),
                        m.output_dir.display()
                    ),
                });
            }
        }
        Command::SelfLabel { bundle, out } => {
            let summary = pipeline::self_label(&bundle, &out, &config)?;
            eprintln!("{} frame(s) self-labelled", summary.frames.len());
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            pred_split,
            gt_split,
            report,
        } => {
            let r = pipeline::evaluate_dirs(&pred_dir, &gt_dir, pred_split.as_deref(), gt_split.as_deref(), &config)?;
            match report {
                Some(path) => {
                    write_report(&path, &r)?;
                    eprintln!("PQ {:.4}  SQ {:.4}  RQ {:.4}  mIoU {:.4}", r.pq, r.sq, r.rq, r.miou);
                }
                None => {
                    let text = serde_json::to_string_pretty(&r).map_err(anyhow::Error::from)?;
                    let mut stdout = std::io::stdout().lock();
                    if let Err(e) = writeln!(stdout, "{text}") {
                        if e.kind() != std::io::ErrorKind::BrokenPipe {
                            return Err(anyhow::Error::from(e).into());
                        }
                    }
                }
            }
        }
        Command::Visualize { labels, out, seed } => {
            let written = pipeline::visualize(&labels, &out, seed)?;
            eprintln!("{} raster(s) written to {}", written.len(), out.display());
        }
        Command::Synth {
            out_dir,
            scenario,
            seed,
            frames,
        } => {
            let scenario: Scenario = scenario.parse()?;
            let manifest = synth::write_dataset(&out_dir, scenario, seed, frames)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn render(error: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if !prev.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        prev = text;
    }
    out
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", render(&f.error));
            ExitCode::from(f.code)
        }
    }
}
