use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lll_core::dataio::{load_cifar10, load_idx, synth_linear, BatchPlan, Dataset, Targets};
use lll_core::learners::Trainer;
use lll_core::netgraph::{build_mlp, build_small_cnn, save_network, Network};
use lll_core::numkit::{streams, DType, FlopLedger, Rng, Scalar, Tensor};
use lll_core::{Error, Result};

use crate::config::{idx_path, DatasetKind, ExperimentConfig, Model};

pub const METRICS_HEADER: &str = "epoch,train_loss,free_energy,test_acc,wall_seconds,flops";

/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Debug)]
pub struct Data<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

fn split<T: Scalar>(ds: &Dataset<T>, range: std::ops::Range<usize>) -> Result<Dataset<T>> {
    let idx: Vec<usize> = range.collect();
    let (x, y) = ds.batch(&idx)?;
    let targets = match ds.targets() {
        Targets::Classes { labels, n_classes } => Targets::Classes { labels: idx.iter().map(|&i| labels[i]).collect(), n_classes: *n_classes },
        Targets::Regression(_) => Targets::Regression(y),
    };
    Dataset::new(x, targets)
}

pub fn load_data<T: Scalar>(cfg: &ExperimentConfig) -> Result<Data<T>> {
    let dir = cfg.data_dir();
    let (mut train, mut test) = match cfg.dataset {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let dir = dir.ok_or_else(|| Error::Config("data-dir is required".into()))?;
            let train = load_idx::<T>(idx_path(&dir, "train-images-idx3-ubyte"), idx_path(&dir, "train-labels-idx1-ubyte"))?;
            let test = load_idx::<T>(idx_path(&dir, "t10k-images-idx3-ubyte"), idx_path(&dir, "t10k-labels-idx1-ubyte"))?;
            (train, test)
        }
        DatasetKind::Cifar10Smoke => {
            let dir = dir.ok_or_else(|| Error::Config("data-dir is required".into()))?;
            (load_cifar10::<T>(&[dir.join("data_batch_1.bin")])?, load_cifar10::<T>(&[dir.join("test_batch.bin")])?)
        }
        DatasetKind::SynthLinear => {
            // one hidden map for both splits; a fifth as many test samples
            let n_test = (cfg.synth_n / 5).max(1);
            let (all, _) = synth_linear::<T>(cfg.seed, cfg.synth_in, cfg.synth_out, cfg.synth_n + n_test)?;
            (split(&all, 0..cfg.synth_n)?, split(&all, cfg.synth_n..cfg.synth_n + n_test)?)
        }
    };
    if let (Some(a), Some(b)) = (train.n_classes(), test.n_classes()) {
        let n = a.max(b);
        train = train.with_classes(n)?;
        test = test.with_classes(n)?;
    }
    if let Some(n) = cfg.train_limit {
        train = train.head(n)?;
    }
    if let Some(n) = cfg.test_limit {
        test = test.head(n)?;
    }
    if let (Some(m), Some(s)) = (cfg.normalize_mean, cfg.normalize_std) {
        train.standardize(m, s)?;
        test.standardize(m, s)?;
    }
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    Ok(Data { train, test })
}

/// Network for the configured model, with feedback matrices when the
/// algorithm uses them. Forward and feedback weights draw from separate
/// streams of the run seed.
pub fn build_network<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>) -> Result<Network<T>> {
    let root = Rng::seed(cfg.seed);
    let mut fw_rng = root.fork(streams::FORWARD_INIT);
    let outputs = data.train.target_size();
    let act = cfg.activation()?;
    let mut net = match cfg.model {
        Model::Mlp => build_mlp(data.train.feature_size(), &cfg.hidden, outputs.max(2), act, cfg.fw_init()?, &mut fw_rng)?,
        Model::SmallCnn => {
            let shape = match data.train.feature_shape() {
                [h, w] => vec![1, *h, *w],
                [c, h, w] => vec![*c, *h, *w],
                other => return Err(Error::Config(format!("small-cnn needs image inputs, got shape {other:?}"))),
            };
            build_small_cnn(&shape, outputs.max(2), act, cfg.fw_init()?, &mut fw_rng)?
        }
    };
    if net.output_size() != outputs {
        return Err(Error::Config(format!("targets have width {outputs}; regression needs at least 2 outputs")));
    }
    if cfg.algorithm()?.needs_feedback() {
        net.attach_feedback(cfg.fb_init()?, &mut root.fork(streams::FEEDBACK_INIT))?;
    }
    Ok(net)
}

/// Fraction of samples whose argmax output matches the label; `None` for
/// regression targets.
pub fn accuracy<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Option<f64>> {
    let Some(labels) = ds.labels() else { return Ok(None) };
    if labels.is_empty() {
        return Ok(None);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, _) = ds.batch(chunk)?;
        let out = net.predict(&x)?;
        let d = out.len() / chunk.len();
        for (k, &i) in chunk.iter().enumerate() {
            let row = &out.data()[k * d..(k + 1) * d];
            let best = (0..d).fold(0, |m, j| if row[j] > row[m] { j } else { m });
            correct += usize::from(best == labels[i]);
        }
    }
    Ok(Some(correct as f64 / labels.len() as f64))
}

/// Batch-mean ½‖x_L − y‖² over a whole dataset.
pub fn dataset_loss<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<f64> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = ds.batch(chunk)?;
        total += lll_core::learners::squared_error(&net.predict(&x)?, &y)? * chunk.len() as f64;
    }
    Ok(total / ds.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub free_energy: f64,
    pub test_acc: Option<f64>,
    pub wall_seconds: f64,
    /// Cumulative since the start of training.
    pub flops: u64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let acc = self.test_acc.map(|a| format!("{a}")).unwrap_or_default();
        format!("{},{},{},{acc},{},{}", self.epoch, self.train_loss, self.free_energy, self.wall_seconds, self.flops)
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub out_dir: PathBuf,
}

impl RunSummary {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.test_acc)
    }
}

/// `--out` if given, then `out-dir`, then `runs/<unix seconds>`.
pub fn resolve_out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    if let Some(o) = &cfg.out_dir {
        return if o.is_absolute() { o.clone() } else { cfg.base_dir.join(o) };
    }
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    PathBuf::from("runs").join(secs.to_string())
}

/// Runs the configured training loop in the configured precision, writing
/// `metrics.csv` after every epoch and `model.lll` at the end.
pub fn train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    match cfg.dtype()? {
        DType::F32 => train_typed::<f32>(cfg, out_dir),
        DType::F64 => train_typed::<f64>(cfg, out_dir),
    }
}

pub fn train_typed<T: Scalar>(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let data = load_data::<T>(cfg)?;
    let net = build_network(cfg, &data)?;
    train_with(cfg, &data, net, out_dir)
}

/// Training loop on already loaded data and an initial network.
pub fn train_with<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>, net: Network<T>, out_dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out_dir)?;
    let plan = BatchPlan::new(cfg.seed, cfg.batch_size, data.train.len())?;
    let mut trainer = Trainer::new(net, cfg.trainer_config(plan.batches_per_epoch())?)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    let ledger = FlopLedger::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (mut loss, mut energy, mut n) = (0.0, 0.0, 0usize);
        for idx in plan.batches(epoch as u64) {
            let (x, y): (Tensor<T>, Tensor<T>) = data.train.batch(&idx)?;
            let report = trainer.train_batch(&x, &y, Some(&ledger))?;
            loss += report.loss;
            energy += report.energy;
            n += 1;
        }
        let test_acc = accuracy(trainer.net(), &data.test)?;
        let wall = if cfg.deterministic_metrics { 0.0 } else { start.elapsed().as_secs_f64() };
        let rec = MetricsRecord {
            epoch: epoch + 1,
            train_loss: loss / n as f64,
            free_energy: energy / n as f64,
            test_acc,
            wall_seconds: wall,
            flops: ledger.total_flops(),
        };
        eprintln!(
            "epoch {:>3}  loss {:.5}  energy {:.5}  acc {}  {:.1}s",
            rec.epoch,
            rec.train_loss,
            rec.free_energy,
            test_acc.map_or("-".into(), |a| format!("{:.4}", a)),
            start.elapsed().as_secs_f64()
        );
        writeln!(metrics, "{}", rec.csv_row())?;
        metrics.flush()?;
        records.push(rec);
    }
    save_network(trainer.net(), out_dir.join("model.lll"))?;
    Ok(RunSummary { records, out_dir: out_dir.to_path_buf() })
}
