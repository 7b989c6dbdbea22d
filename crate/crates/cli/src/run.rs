//! Dataset loading, model construction, and the train/eval drivers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use brpsnn::data::{read_cifar10_bin, read_event_stream, read_idx, Dataset, SynthSpec};
use brpsnn::learn::{evaluate, train_epoch, EvalConfig, EvalStats, Model};
use brpsnn::metrics::{emit_csv, silent_by_kind, EpochRecord, RunMetrics, Split};
use brpsnn::rng::{stream, Purpose};
use brpsnn::{Network, Shape};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{DataSource, RunConfig};
use crate::CliError;

pub struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seed offset separating synthetic test sets from training sets.
const SYNTH_TEST_SALT: u64 = 0x5eed_7e57;

fn data_err(e: brpsnn::Error) -> CliError {
    CliError::Data(e.to_string())
}

pub fn load_data(cfg: &RunConfig) -> Result<Datasets, CliError> {
    for p in cfg.input_files() {
        if !p.exists() {
            return Err(CliError::Data(format!("dataset file not found: {}", p.display())));
        }
    }
    let (train, test) = match &cfg.data {
        DataSource::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (
            read_idx(train_images, train_labels).map_err(data_err)?,
            read_idx(test_images, test_labels).map_err(data_err)?,
        ),
        DataSource::Cifar10 { train_files, test_files } => (
            read_cifar10_bin(train_files).map_err(data_err)?,
            read_cifar10_bin(test_files).map_err(data_err)?,
        ),
        DataSource::Events { train, test } => (
            read_event_stream(train).map_err(data_err)?,
            read_event_stream(test).map_err(data_err)?,
        ),
        DataSource::Synth {
            kind,
            train_per_class,
            test_per_class,
            channels,
        } => {
            let spec = |per_class, seed| SynthSpec {
                kind: *kind,
                per_class,
                channels: *channels,
                t_window: cfg.train.encoder.t_window,
                seed,
            };
            let seed = cfg.train.seed;
            (
                spec(*train_per_class, seed).generate().map_err(data_err)?,
                spec(*test_per_class, seed ^ SYNTH_TEST_SALT).generate().map_err(data_err)?,
            )
        }
    };
    let limit = |ds: Dataset, n: Option<usize>| match n {
        Some(n) => ds.head(n),
        None => ds,
    };
    let train = limit(train, cfg.train_limit);
    let test = limit(test, cfg.test_limit);
    if train.is_empty() {
        return Err(CliError::Data("training set is empty".into()));
    }
    Ok(Datasets { train, test })
}

/// Input shape: the one declared by the topology, else the data's.
pub fn input_shape(cfg: &RunConfig, data: &Dataset) -> Result<Shape, CliError> {
    let shape = cfg.topology.input.or(cfg.default_input()).unwrap_or(data.shape);
    if shape.len() != data.shape.len() {
        return Err(CliError::Config(format!(
            "network input {shape} does not fit data samples of shape {}",
            data.shape
        )));
    }
    Ok(shape)
}

pub fn build_model(cfg: &RunConfig, input: Shape) -> Result<Model, CliError> {
    let mut rng = stream(cfg.train.seed, Purpose::Init, 0, 0);
    let net = Network::new(&cfg.topology, input, cfg.lif, cfg.init_gain, &mut rng)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Model::new(net, cfg.train.seed, cfg.feedback_scale))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub threads: usize,
    /// Single-threaded, and wall times written as 0.
    pub deterministic: bool,
    pub quiet: bool,
}

impl RunOptions {
    fn threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.max(1)
        }
    }
}

pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub checkpoint: Checkpoint,
    pub csv_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

fn eval_record(net: &Network, epoch: usize, split: Split, s: &EvalStats, wall_ms: u64) -> EpochRecord {
    let (silent_conv, silent_fc) = silent_by_kind(net, &s.silent);
    EpochRecord {
        epoch,
        split,
        accuracy: s.accuracy,
        loss: s.loss,
        silent_conv,
        silent_fc,
        fwd_ops: s.forward_ops.iter().sum(),
        upd_ops: 0,
        wall_ms,
    }
}

fn elapsed_ms(start: Instant, opts: &RunOptions) -> u64 {
    if opts.deterministic {
        0
    } else {
        start.elapsed().as_millis() as u64
    }
}

/// Trains for the configured epochs, evaluating on the test split before
/// training (epoch 0) and after every epoch. Writes `metrics.csv` and
/// `model.ckpt` into the output directory.
pub fn run_train(cfg: &RunConfig, opts: &RunOptions) -> Result<TrainOutcome, CliError> {
    let data = load_data(cfg)?;
    let input = input_shape(cfg, &data.train)?;
    let mut model = build_model(cfg, input)?;
    let mut tc = cfg.train.clone();
    tc.threads = opts.threads();
    let mut ec = EvalConfig::from_train(&tc);
    ec.threads = tc.threads;
    let mut metrics = RunMetrics::default();

    let start = Instant::now();
    let s = evaluate(&model.net, &data.test, &ec).map_err(data_err)?;
    metrics.push(eval_record(&model.net, 0, Split::Test, &s, elapsed_ms(start, opts)));
    let mut epochs_done = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let st = train_epoch(&mut model, &data.train, &tc, (epoch - 1) as u64).map_err(data_err)?;
        let (silent_conv, silent_fc) = silent_by_kind(&model.net, &st.silent);
        metrics.push(EpochRecord {
            epoch,
            split: Split::Train,
            accuracy: st.accuracy,
            loss: st.loss,
            silent_conv,
            silent_fc,
            fwd_ops: st.ops.forward_total(),
            upd_ops: st.ops.update_total(),
            wall_ms: elapsed_ms(start, opts),
        });
        let start = Instant::now();
        let s = evaluate(&model.net, &data.test, &ec).map_err(data_err)?;
        metrics.push(eval_record(&model.net, epoch, Split::Test, &s, elapsed_ms(start, opts)));
        epochs_done = epoch;
        if !opts.quiet {
            eprintln!(
                "epoch {epoch}: train acc {:.4} loss {:.4} | test acc {:.4}",
                st.accuracy, st.loss, s.accuracy
            );
        }
        if cfg.target_accuracy.is_some_and(|t| s.accuracy >= t) {
            break;
        }
    }

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let csv_path = cfg.out_dir.join("metrics.csv");
    emit_csv(&metrics, &csv_path).map_err(data_err)?;
    let checkpoint_path = cfg.out_dir.join("model.ckpt");
    let ck = Checkpoint {
        model,
        epochs: epochs_done as u32,
    };
    checkpoint::save(&ck, &checkpoint_path)?;
    Ok(TrainOutcome {
        metrics,
        checkpoint: ck,
        csv_path,
        checkpoint_path,
    })
}

pub struct EvalOutcome {
    pub record: EpochRecord,
    pub stats: EvalStats,
}

/// Evaluates a checkpoint on one split of the configured data and writes a
/// one-row metrics CSV to `csv`.
pub fn run_eval(
    cfg: &RunConfig,
    ck_path: &Path,
    split: Split,
    input_keep: f32,
    csv: Option<&Path>,
    opts: &RunOptions,
) -> Result<EvalOutcome, CliError> {
    let ck = checkpoint::load(ck_path, cfg.lif)?;
    let data = load_data(cfg)?;
    let ds = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    let mut ec = EvalConfig::from_train(&cfg.train);
    ec.threads = opts.threads();
    ec.input_keep = input_keep;
    let start = Instant::now();
    let stats = evaluate(&ck.model.net, ds, &ec).map_err(data_err)?;
    let record = eval_record(&ck.model.net, ck.epochs as usize, split, &stats, elapsed_ms(start, opts));
    if let Some(p) = csv {
        let mut m = RunMetrics::default();
        m.push(record.clone());
        emit_csv(&m, p).map_err(data_err)?;
    }
    Ok(EvalOutcome { record, stats })
}
