use std::path::PathBuf;
use std::process::ExitCode;

use brpsnn::data::{write_event_stream, SynthKind, SynthSpec};
use brpsnn::encode::{EncoderConfig, Polarity};
use brpsnn::metrics::Split;
use brpsnn_cli::bench::{run_bench, BenchSpec};
use brpsnn_cli::config::RunConfig;
use brpsnn_cli::preview::{encode_raw, read_gray, render, RasterFormat};
use brpsnn_cli::run::{load_data, run_eval, run_train, RunOptions};
use brpsnn_cli::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "brpsnn", version, about = "Spiking networks trained by reward propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Exec {
    /// Worker threads for batch processing.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Single-threaded, with wall times written as 0 so output bytes repeat.
    #[arg(long)]
    deterministic: bool,
}

impl Exec {
    fn options(self, quiet: bool) -> RunOptions {
        RunOptions {
            threads: self.threads,
            deterministic: self.deterministic,
            quiet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Intensity,
    Literal,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes metrics.csv and model.ckpt.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, as section.key=value. Repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        exec: Exec,
    },
    /// Evaluate a checkpoint on the configured data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Keep each input spike with this probability.
        #[arg(long, default_value_t = 1.0)]
        input_keep: f32,
        /// Where to write the one-row metrics CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        exec: Exec,
    },
    /// Measure update cost over a depth sweep of fc stacks.
    Bench {
        /// Comma-separated depths (learnable layers).
        #[arg(long, default_value = "2,4,8", value_delimiter = ',')]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic temporal task as an event-stream file.
    GenSynth {
        #[arg(long)]
        kind: String,
        /// Samples per class.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 20)]
        t_window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the spike raster of an encoded image or dataset sample.
    EncodePreview {
        /// PNG or PNM image, read as grayscale.
        #[arg(long, conflicts_with_all = ["config", "index"])]
        image: Option<PathBuf>,
        /// Config whose test split supplies the sample.
        #[arg(long, requires = "index")]
        config: Option<PathBuf>,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, default_value_t = 20)]
        t_window: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f32,
        #[arg(long, value_enum, default_value = "intensity")]
        polarity: PolarityArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "ascii")]
        format: FormatArg,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            overrides,
            quiet,
            exec,
        } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let out = run_train(&cfg, &exec.options(quiet))?;
            if let Some(r) = out.metrics.last_test() {
                println!("test accuracy {:.4} after {} epochs", r.accuracy, out.checkpoint.epochs);
            }
            println!("metrics: {}", out.csv_path.display());
            println!("checkpoint: {}", out.checkpoint_path.display());
        }
        Command::Eval {
            checkpoint,
            config,
            overrides,
            split,
            input_keep,
            csv,
            exec,
        } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let out = run_eval(&cfg, &checkpoint, split, input_keep, csv.as_deref(), &exec.options(true))?;
            println!("accuracy {:.4}", out.record.accuracy);
            let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            println!(
                "silent conv {} fc {}",
                fmt(out.record.silent_conv),
                fmt(out.record.silent_fc)
            );
        }
        Command::Bench {
            depths,
            width,
            samples,
            seed,
            out,
        } => {
            let spec = BenchSpec {
                depths,
                width,
                samples,
                seed,
                ..BenchSpec::default()
            };
            let r = run_bench(&spec).map_err(|e| CliError::Config(e.to_string()))?;
            let csv = r.to_csv();
            match out {
                Some(p) => std::fs::write(&p, &csv)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
            eprintln!(
                "brp update_ops = {:.3}*K + {:.3} (R^2 = {:.6})",
                r.brp_fit.a, r.brp_fit.b, r.brp_fit.r2
            );
        }
        Command::GenSynth {
            kind,
            n,
            seed,
            channels,
            t_window,
            out,
        } => {
            let kind: SynthKind = kind.parse().map_err(|e: brpsnn::Error| CliError::Config(e.to_string()))?;
            let ds = SynthSpec {
                kind,
                per_class: n,
                channels,
                t_window,
                seed,
            }
            .generate()
            .map_err(|e| CliError::Config(e.to_string()))?;
            write_event_stream(&ds, &out).map_err(|e| CliError::Data(e.to_string()))?;
            println!("{} samples written to {}", ds.len(), out.display());
        }
        Command::EncodePreview {
            image,
            config,
            index,
            t_window,
            alpha,
            polarity,
            seed,
            format,
        } => {
            let enc = EncoderConfig {
                alpha,
                t_window,
                polarity: match polarity {
                    PolarityArg::Intensity => Polarity::Intensity,
                    PolarityArg::Literal => Polarity::Literal,
                },
            };
            let format = match format {
                FormatArg::Ascii => RasterFormat::Ascii,
                FormatArg::Csv => RasterFormat::Csv,
            };
            let train = match (image, config, index) {
                (Some(path), _, _) => encode_raw(&read_gray(&path)?, &enc, seed, 0)?,
                (None, Some(cfg), Some(i)) => {
                    let cfg = RunConfig::load(&cfg, &[])?;
                    let data = load_data(&cfg)?;
                    if i >= data.test.len() {
                        return Err(CliError::Data(format!(
                            "index {i} out of range for {} test samples",
                            data.test.len()
                        )));
                    }
                    data.test
                        .spikes(i, &enc, seed, brpsnn::rng::Purpose::EvalEncoding, 0)
                        .map_err(|e| CliError::Data(e.to_string()))?
                }
                _ => return Err(CliError::Config("give --image, or --config with --index".into())),
            };
            print!("{}", render(&train, format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
