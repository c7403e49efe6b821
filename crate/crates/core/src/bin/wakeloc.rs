use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wakeloc::audio::{apply_gain_db, load_wav, mfcc, mix_noise, AudioBuffer, FRAME_HOP, FRAME_LEN, SAMPLE_RATE};
use wakeloc::corpus::{wav_files, Corpus};
use wakeloc::eval::{decode_events, evaluate, score_features, EvalOptions, DEFAULT_MERGE_GAP, DEFAULT_SWEEP_FLOOR};
use wakeloc::mining::{load_alignments, mine_utterance, save_manifest, KeywordSpec};
use wakeloc::model::{parameter_count, sidecar_path, Model, ModelConfig};
use wakeloc::synth::{generate, SynthSpec};
use wakeloc::train::{save_epoch_log, train, TrainConfig, TrainData};
use wakeloc::Error;

#[derive(Parser)]
#[command(name = "wakeloc", version, about = "Streaming wake-word detection and localization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic keyword corpus.
    Synth(SynthArgs),
    /// Compute MFCC feature files for a directory of WAVs.
    Featurize(FeaturizeArgs),
    /// Mine training segments from an alignment file.
    Mine(MineArgs),
    /// Print receptive field, layer shapes and parameter count.
    Inspect(InspectArgs),
    /// Train a model on an aligned corpus directory.
    Train(TrainArgs),
    /// DET curve, FRR at an operating point, IOU-vs-TPR curve.
    Eval(EvalArgs),
    /// Stream one WAV and print trigger events.
    Stream(StreamArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec; defaults are used for missing fields or when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    gain_db: Option<f64>,
    /// Noise WAV file, or a directory whose WAVs are concatenated.
    #[arg(long, requires = "snr_db")]
    noise: Option<PathBuf>,
    #[arg(long, requires = "noise", allow_hyphen_values = true)]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    align: PathBuf,
    #[arg(long)]
    keyword: String,
    #[arg(long, default_value_t = 131)]
    rf: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    /// Preset name or JSON file.
    #[arg(long, default_value = "kws-13k")]
    config: String,
    #[arg(long, default_value_t = 131)]
    frames: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Preset name or JSON file.
    #[arg(long, default_value = "kws-13k")]
    config: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// JSON file with training hyper-parameters.
    #[arg(long)]
    hyper: Option<PathBuf>,
    #[arg(long)]
    batch_utterances: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Background noise WAV for augmentation.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    no_augment: bool,
    /// Epoch log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Preset or JSON file; defaults to the sidecar `<weights>.json`.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    pos: PathBuf,
    #[arg(long)]
    neg: PathBuf,
    #[arg(long, default_value_t = 12.0)]
    op_fa_per_hr: f64,
    /// Output directory for CSV, SVG and summary files.
    #[arg(long, default_value = "eval_out")]
    out: PathBuf,
    /// Keyword phones; defaults to `<pos>/keyword.txt`.
    #[arg(long)]
    keyword: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    merge_gap: usize,
    #[arg(long, default_value_t = DEFAULT_SWEEP_FLOOR)]
    sweep_floor: f32,
    /// Match against the extended keyword window.
    #[arg(long)]
    extended_truth: bool,
    /// Score only full receptive-field windows (no silence pre-roll).
    #[arg(long)]
    no_left_pad: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Echoed into output headers; evaluation itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    wav: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    merge_gap: usize,
    /// Prepend silence so the first frames are scored too.
    #[arg(long)]
    left_pad: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn seed_header(seed: Option<u64>) -> String {
    seed.map(|s| format!("# seed={s}\n")).unwrap_or_default()
}

fn load_model(args: &ModelArgs) -> anyhow::Result<Arc<Model>> {
    Ok(Arc::new(Model::load_resolved(&args.weights, args.config.as_deref())?))
}

fn run_synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_json(&std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let m = generate(&spec, &a.out)?;
    println!("# seed={}", spec.seed);
    println!("utterances: {}", m.rows.len());
    println!("negative_hours: {:.4}", m.negative_hours);
    Ok(())
}

fn load_noise(path: &Path) -> anyhow::Result<AudioBuffer> {
    if path.is_dir() {
        let mut samples = Vec::new();
        for f in wav_files(path)? {
            samples.extend(load_wav(&f)?.samples);
        }
        if samples.is_empty() {
            return Err(Error::Precondition(format!("{}: no noise audio", path.display())).into());
        }
        Ok(AudioBuffer::new(samples, SAMPLE_RATE)?)
    } else {
        Ok(load_wav(path)?)
    }
}

fn run_featurize(a: FeaturizeArgs) -> anyhow::Result<()> {
    let noise = a.noise.as_deref().map(load_noise).transpose()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let files = wav_files(&a.wav)?;
    for f in &files {
        let mut audio = load_wav(f)?;
        if let Some(g) = a.gain_db {
            audio = apply_gain_db(&audio, g)?;
        }
        if let (Some(n), Some(snr)) = (&noise, a.snr_db) {
            audio = mix_noise(&audio, n, snr)?;
        }
        let stem = f.file_stem().unwrap_or_default().to_string_lossy();
        mfcc(&audio)?.save(&a.out.join(format!("{stem}.hmft")))?;
    }
    println!("featurized: {}", files.len());
    Ok(())
}

fn run_mine(a: MineArgs) -> anyhow::Result<()> {
    if a.rf == 0 {
        return Err(Error::Usage("--rf must be positive".into()).into());
    }
    let kw = KeywordSpec::parse(&a.keyword)?;
    let aligns = load_alignments(&a.align)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let segs: Vec<_> = aligns.iter().flat_map(|al| mine_utterance(al, &kw, a.rf, &mut rng)).collect();
    save_manifest(&a.out, &segs, a.seed)?;
    println!("# seed={}", a.seed);
    println!("segments: {}", segs.len());
    Ok(())
}

fn run_inspect(a: InspectArgs) -> anyhow::Result<()> {
    let cfg = ModelConfig::load(&a.config)?;
    println!("config: {}", cfg.name);
    println!("receptive_field: {}", cfg.receptive_field()?);
    println!("parameters: {}", parameter_count(&cfg)?);
    println!("layer\tchannels\tfreq\ttime");
    for (name, [c, f, t]) in cfg.shape_ledger(a.frames)? {
        println!("{name}\t{c}\t{f}\t{t}");
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> anyhow::Result<()> {
    let model_cfg = ModelConfig::load(&a.config)?;
    let mut cfg = match &a.hyper {
        Some(p) => TrainConfig::from_json(
            &std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?,
        )?,
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_utterances {
        cfg.utterances_per_batch = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if a.no_augment {
        cfg.augment.enabled = false;
    }
    let corpus = Corpus::load(&a.data)?;
    let noise = a.noise.as_deref().map(load_noise).transpose()?;
    let data = TrainData::from_corpus(&corpus, None, noise)?;
    log::info!(
        "training {} on {} utterances, R = {}, {} parameters",
        model_cfg.name,
        data.items.len(),
        model_cfg.receptive_field()?,
        parameter_count(&model_cfg)?
    );
    let report = train(&model_cfg, &data, &cfg, |_, _| Ok(()))?;
    report.weights.save(&a.out)?;
    let side = sidecar_path(&a.out);
    std::fs::write(&side, model_cfg.to_json()).map_err(|e| Error::Io { path: side, source: e })?;
    let log_path = a.log.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    save_epoch_log(&log_path, &report.log, cfg.seed)?;
    println!("# seed={}", cfg.seed);
    if let Some(last) = report.log.last() {
        println!("final_loss: {:.6}", last.mean_loss);
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> anyhow::Result<()> {
    if !(a.op_fa_per_hr >= 0.0) {
        return Err(Error::Usage("--op-fa-per-hr must be non-negative".into()).into());
    }
    let model = load_model(&a.model)?;
    let pos = Corpus::load(&a.pos)?;
    let neg = Corpus::load(&a.neg)?;
    let keyword = match &a.keyword {
        Some(k) => KeywordSpec::parse(k)?,
        None => match &pos.keyword {
            Some(k) => k.clone(),
            None => bail!(Error::Usage(format!(
                "no --keyword given and {} has no keyword.txt",
                a.pos.display()
            ))),
        },
    };
    let opts = EvalOptions {
        op_fa_per_hour: a.op_fa_per_hr,
        merge_gap: a.merge_gap,
        sweep_floor: a.sweep_floor,
        extended_truth: a.extended_truth,
        left_pad: !a.no_left_pad,
        jobs: a.jobs.max(1),
    };
    let report = evaluate(&model, &pos, &neg, &keyword, &opts)?;
    report.write_dir(&a.out, a.seed)?;
    print!("{}{}", seed_header(a.seed), report.summary());
    Ok(())
}

fn run_stream(a: StreamArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let audio = load_wav(&a.wav)?;
    let features = mfcc(&audio)?;
    let scores = score_features(&model, &features, a.left_pad)?;
    let events = decode_events(&scores, a.threshold, a.merge_gap, model.receptive_field(), 0);
    // Frame j covers samples [j*hop, j*hop + len); report its centre.
    let secs = |f: i64| (f as f64 * FRAME_HOP as f64 + FRAME_LEN as f64 / 2.0) / SAMPLE_RATE as f64;
    let mut out = std::io::stdout().lock();
    write!(out, "{}", seed_header(a.seed))?;
    writeln!(out, "time_s\tscore\tpredicted_start_s")?;
    for e in events {
        writeln!(out, "{:.3}\t{:.6}\t{:.3}", secs(e.peak_frame), e.peak_score, secs(e.predicted_start))?;
    }
    Ok(())
}

/// 1 for usage problems, 2 for anything wrong with the data.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Usage(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Synth(a) => run_synth(a),
        Cmd::Featurize(a) => run_featurize(a),
        Cmd::Mine(a) => run_mine(a),
        Cmd::Inspect(a) => run_inspect(a),
        Cmd::Train(a) => run_train(a),
        Cmd::Eval(a) => run_eval(a),
        Cmd::Stream(a) => run_stream(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
