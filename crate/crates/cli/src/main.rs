use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maskstream::data::{build_corpus, DatasetManifest, Split};
use maskstream::dsp::wav::{read_wav, write_wav, WavFormat};
use maskstream::dsp::{istft, stft, StftParams};
use maskstream::eval::{aggregate, format_report, write_sdr_csv, DEFAULT_FILTER_LEN};
use maskstream::harness::{
    evaluate, load_utterances, look_ahead_frames_for_ms, lookahead_sweep, random_search, save_scatter_csv,
    train, utterances, SearchSpace, SweepOptions, TrainOptions, Utterance,
};
use maskstream::model::{apply_mask, EnhancementModel, MaskTensor, ModelConfig};
use maskstream::nn::{conv_stack_receptive_field, load_checkpoint, ops_per_audio_second, param_count, ParameterSet};
use maskstream::stream::{algorithmic_latency, enhance_streaming};
use maskstream::Error;

const SAMPLE_RATE: u32 = 16_000;

#[derive(Parser)]
#[command(name = "maskstream", version, about = "Spectrogram-mask speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset manifest.
    GenManifest {
        split: Split,
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        count: usize,
        #[arg(long, default_value_t = 3.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthesize the WAV pairs of a manifest into a directory.
    GenData { manifest: PathBuf, dir: PathBuf },
    /// Train a model and keep the best dev checkpoint.
    Train {
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        opts: TrainArgs,
        /// Receives best.ckpt, config.txt and metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance a WAV file.
    Enhance {
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
        /// Defaults to config.txt beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Must match the model's look-ahead.
        #[arg(long, allow_hyphen_values = true)]
        look_ahead_ms: Option<i32>,
        /// Frame-by-frame streaming inference.
        #[arg(long)]
        stream: bool,
        /// Samples per pushed chunk when streaming.
        #[arg(long, default_value_t = 160)]
        chunk: usize,
        /// Force the mask to 1: the output is the channel sum.
        #[arg(long)]
        bypass_mask: bool,
        #[arg(long)]
        report_latency: bool,
    },
    /// Score a checkpoint on a manifest; CSV to stdout or --out.
    Evaluate {
        checkpoint: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Read pairs written by gen-data instead of synthesizing.
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
        filter_len: usize,
    },
    /// Train causal models across look-aheads.
    Sweep {
        base_config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        eval_manifest: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-100,0,100,200")]
        look_ahead_ms: Vec<i32>,
        #[arg(long, default_value_t = 2)]
        trials: usize,
        #[command(flatten)]
        opts: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyperparameter search.
    Search {
        space: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        budget: usize,
        #[command(flatten)]
        opts: TrainArgs,
        /// Scatter CSV of (param_count, ops_per_second, best_dev_sdr).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print sizes, costs, receptive field and latency of a config.
    Info {
        config: PathBuf,
        /// Check a checkpoint against the config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    train_manifest: PathBuf,
    #[arg(long)]
    dev_manifest: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2_000)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    eval_every: usize,
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    filter_len: usize,
}

impl TrainArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            seed: self.seed,
            max_steps: self.steps,
            batch_size: self.batch_size,
            eval_every: self.eval_every,
            filter_len: self.filter_len,
            ..TrainOptions::default()
        }
    }
}

/// A failure and the exit code it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn usage(msg: String) -> Failure {
    Failure(2, msg)
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file", path.display())))
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    require(path)?;
    Ok(DatasetManifest::load(path)?)
}

fn load_set(path: &Path) -> Result<Vec<Utterance>, Failure> {
    Ok(utterances(&load_manifest(path)?)?)
}

fn load_config(path: &Path) -> Result<ModelConfig, Failure> {
    require(path)?;
    Ok(ModelConfig::load(path)?)
}

/// Config given explicitly or stored beside the checkpoint.
fn load_trained(checkpoint: &Path, config: Option<&Path>) -> Result<(EnhancementModel, ParameterSet<f32>), Failure> {
    require(checkpoint)?;
    let cfg_path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join("config.txt"),
    };
    let model = EnhancementModel::new(load_config(&cfg_path)?)?;
    let params = load_checkpoint(checkpoint, model.network())?;
    Ok((model, params))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenManifest {
            split,
            out,
            count,
            duration_s,
            seed,
        } => {
            DatasetManifest::generate(split, count, duration_s, seed)?.save(&out)?;
        }
        Command::GenData { manifest, dir } => {
            let written = build_corpus(&load_manifest(&manifest)?, &dir)?;
            println!("wrote {} files to {}", written.len(), dir.display());
        }
        Command::Train { config, data, opts, out } => {
            let cfg = load_config(&config)?;
            let (tr, dev) = (load_set(&data.train_manifest)?, load_set(&data.dev_manifest)?);
            let run = train(&cfg, &tr, &dev, &opts.options())?;
            run.save(&out)?;
            match run.best {
                Some(b) => println!(
                    "best dev SDR {:.3} dB at step {} (input {:.3} dB)",
                    b.dev_sdr, b.step, run.input_dev_sdr
                ),
                None => println!("no checkpoint scored"),
            }
            if let Some(f) = &run.failure {
                return Err(Failure(1, format!("training failed: {f}")));
            }
        }
        Command::Enhance {
            checkpoint,
            input,
            output,
            config,
            look_ahead_ms,
            stream,
            chunk,
            bypass_mask,
            report_latency,
        } => {
            let (model, params) = load_trained(&checkpoint, config.as_deref())?;
            let stft_params = StftParams::default();
            if let Some(ms) = look_ahead_ms {
                let k = look_ahead_frames_for_ms(ms, &stft_params, SAMPLE_RATE).map_err(|e| usage(e.to_string()))?;
                if k != model.config().look_ahead_frames {
                    return Err(usage(format!(
                        "--look-ahead-ms {ms} does not match the model's {} ms",
                        model.config().look_ahead_frames as i64 * stft_params.hop() as i64 * 1000 / SAMPLE_RATE as i64
                    )));
                }
            }
            if report_latency {
                let l = algorithmic_latency(model.config(), &stft_params, SAMPLE_RATE);
                println!(
                    "latency: framing {} + look-ahead {} + finalization {} = {} samples ({:.1} ms)",
                    l.framing_samples,
                    l.look_ahead_samples,
                    l.finalization_samples,
                    l.total_samples(),
                    l.total_ms()
                );
            }
            require(&input)?;
            let noisy = read_wav(&input)?;
            let out = if bypass_mask {
                let spec = stft(&noisy, &stft_params)?;
                let ones = MaskTensor::filled(spec.frames(), spec.bins(), 1.0);
                istft(&apply_mask(&ones, &spec)?)?
            } else if stream {
                if chunk == 0 {
                    return Err(usage("--chunk must be at least 1".into()));
                }
                enhance_streaming(&model, &params, &noisy, chunk)?
            } else {
                model.enhance(&params, &noisy)?
            };
            write_wav(&output, &out, WavFormat::Float32)?;
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            config,
            corpus_dir,
            out,
            filter_len,
        } => {
            let (model, params) = load_trained(&checkpoint, config.as_deref())?;
            let m = load_manifest(&manifest)?;
            let set = match corpus_dir {
                Some(d) => load_utterances(&m, &d)?,
                None => utterances(&m)?,
            };
            let results = evaluate(&model, &params, &set, filter_len)?;
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| Failure(1, format!("{}: {e}", p.display())))?;
                    write_sdr_csv(std::io::BufWriter::new(f), &results)?;
                    eprint!("{}", format_report(&aggregate(&results)?));
                }
                None => write_sdr_csv(std::io::stdout().lock(), &results)?,
            }
        }
        Command::Sweep {
            base_config,
            data,
            eval_manifest,
            look_ahead_ms,
            trials,
            opts,
            out,
        } => {
            let base = load_config(&base_config)?;
            let stft_params = StftParams::default();
            for &ms in &look_ahead_ms {
                look_ahead_frames_for_ms(ms, &stft_params, SAMPLE_RATE).map_err(|e| usage(e.to_string()))?;
            }
            let (tr, dev, ev) = (
                load_set(&data.train_manifest)?,
                load_set(&data.dev_manifest)?,
                load_set(&eval_manifest)?,
            );
            let sweep = SweepOptions::new(look_ahead_ms, trials, opts.seed, opts.options());
            let report = lookahead_sweep(&base, &sweep, &tr, &dev, &ev)?;
            report.save_csv(&out)?;
            print!("{}", report.summary());
        }
        Command::Search {
            space,
            data,
            budget,
            opts,
            out,
        } => {
            require(&space)?;
            let space = SearchSpace::load(&space)?;
            let (tr, dev) = (load_set(&data.train_manifest)?, load_set(&data.dev_manifest)?);
            let trials = random_search(&space, budget, &tr, &dev, &opts.options(), opts.seed)?;
            save_scatter_csv(&out, &trials)?;
            for t in &trials {
                let sdr = t.best_dev_sdr().map_or("failed".to_string(), |s| format!("{s:.3} dB"));
                println!("trial {:>3}  params {:>10}  ops/s {:.3e}  {sdr}", t.trial, t.param_count, t.ops_per_second);
            }
        }
        Command::Info { config, checkpoint } => {
            let cfg = load_config(&config)?;
            let stft_params = StftParams::default();
            let spec = EnhancementModel::network_spec(&cfg, stft_params.num_bins())?;
            let pc = param_count(&spec)?;
            let ops = ops_per_audio_second(&spec, &stft_params, SAMPLE_RATE)?;
            let (past, future) = conv_stack_receptive_field(&spec.conv_layers());
            let lat = algorithmic_latency(&cfg, &stft_params, SAMPLE_RATE);
            let yn = |b: bool| if b { "yes" } else { "no" };
            let mut o = std::io::stdout().lock();
            let w = |o: &mut std::io::StdoutLock, k: &str, v: String| writeln!(o, "{k:<22}{v}");
            let mut lines = vec![
                ("conv_config", cfg.conv_config.name().to_string()),
                ("conv_layers", spec.conv_layers().len().to_string()),
                ("blstm_depth", cfg.blstm_depth.to_string()),
                ("blstm_width", cfg.blstm_width.to_string()),
                ("fc_depth", cfg.fc_depth.to_string()),
                ("fc_width", cfg.fc_width.to_string()),
                ("input_channels", cfg.input_channels.to_string()),
                ("delta_phase", yn(cfg.delta_phase).to_string()),
                ("causal", yn(cfg.causal).to_string()),
                ("look_ahead_frames", cfg.look_ahead_frames.to_string()),
                ("param_count", pc.to_string()),
                ("ops_per_audio_second", format!("{ops:.0}")),
                ("receptive_field", format!("{past} past, {future} future frames (conv)")),
                (
                    "latency",
                    format!("{} samples ({:.1} ms)", lat.total_samples(), lat.total_ms()),
                ),
            ];
            if let Some(ck) = checkpoint {
                require(&ck)?;
                let model = EnhancementModel::new(cfg.clone())?;
                let params = load_checkpoint(&ck, model.network())?;
                let n = params.scalar_count();
                if n != pc {
                    return Err(Failure(1, format!("checkpoint holds {n} parameters, config implies {pc}")));
                }
                lines.push(("checkpoint_params", n.to_string()));
            }
            for (k, v) in lines {
                w(&mut o, k, v).map_err(|e| Failure(1, e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("maskstream: {msg}");
            ExitCode::from(code)
        }
    }
}
