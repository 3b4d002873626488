//! Experiment driver: single training runs, learning-rate sweeps with
//! repeat-and-take-best aggregation, and CSV output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::basis::BasisId;
use crate::error::{Result, SkanError};
use crate::layer::Exec;
use crate::metrics::{accuracy, macro_f1, predictions, softmax_xent, EpochMetrics, Split};
use crate::mnist::{eval_batches, make_batches, Dataset, IMAGE_PIXELS, NUM_CLASSES};
use crate::network::{format_dims, SkanNetwork};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::SkanRng;
use crate::tensor::Real;

/// Exact CSV header.
pub const CSV_HEADER: [&str; 11] = [
    "basis",
    "dims",
    "lr",
    "seed",
    "epoch",
    "split",
    "loss",
    "accuracy",
    "f1",
    "epoch_time_s",
    "status",
];

/// Runs whose train accuracy is below this after [`ACCURACY_FLOOR_EPOCH`]
/// epochs are treated as diverged.
pub const ACCURACY_FLOOR: f64 = 0.2;
pub const ACCURACY_FLOOR_EPOCH: usize = 2;

/// Samples per forward pass when evaluating a split.
const EVAL_BATCH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub basis: BasisId,
    pub dims: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub precision: Precision,
    pub exec: Exec,
}

impl TrainConfig {
    /// LSS on `[784, 100, 10]`, lr 0.004, batch 64, 10 epochs.
    pub fn reference() -> Self {
        Self {
            basis: BasisId::LShiftedSoftplus,
            dims: vec![IMAGE_PIXELS, 100, NUM_CLASSES],
            lr: 0.004,
            epochs: 10,
            batch: 64,
            seed: 0,
            precision: Precision::F64,
            exec: Exec::Deterministic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(SkanError::Config("dims need at least two entries".into()));
        }
        if self.dims[0] != IMAGE_PIXELS || *self.dims.last().unwrap() != NUM_CLASSES {
            return Err(SkanError::Config(format!(
                "MNIST networks map {IMAGE_PIXELS} inputs to {NUM_CLASSES} classes, got {}",
                format_dims(&self.dims)
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(SkanError::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch == 0 {
            return Err(SkanError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One CSV row. Diverged rows carry no metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub basis: BasisId,
    pub dims: Vec<usize>,
    pub lr: f64,
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    pub split: Split,
    pub metrics: Option<EpochMetrics>,
    pub status: RunStatus,
}

impl RunRecord {
    fn csv_fields(&self) -> [String; 11] {
        let metric = |f: fn(&EpochMetrics) -> f64| {
            self.metrics
                .as_ref()
                .map_or(String::new(), |m| f(m).to_string())
        };
        [
            self.basis.cli_name().to_string(),
            format_dims(&self.dims),
            self.lr.to_string(),
            self.seed.to_string(),
            self.epoch.to_string(),
            self.split.as_str().to_string(),
            metric(|m| m.loss),
            metric(|m| m.accuracy),
            metric(|m| m.f1),
            metric(|m| m.epoch_time_s),
            self.status.as_str().to_string(),
        ]
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    /// Final parameters, widened to f64.
    pub network: SkanNetwork<f64>,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.records.iter().any(|r| r.status == RunStatus::Diverged)
    }

    /// Test accuracy after the last completed epoch, for convergent runs.
    pub fn final_test_accuracy(&self) -> Option<f64> {
        if self.diverged() {
            return None;
        }
        self.records
            .iter()
            .rev()
            .find(|r| r.split == Split::Test)
            .and_then(|r| r.metrics.map(|m| m.accuracy))
    }

    pub fn test_accuracy_at(&self, epoch: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.split == Split::Test && r.epoch == epoch)
            .and_then(|r| r.metrics.map(|m| m.accuracy))
    }
}

/// Loss, accuracy, and macro-F1 of `net` over a whole split.
pub fn evaluate<T: Real>(
    net: &SkanNetwork<T>,
    ds: &Dataset,
    split: Split,
    exec: Exec,
) -> Result<EpochMetrics> {
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(ds.len());
    for batch in eval_batches::<T>(ds, EVAL_BATCH)? {
        let logits = net.forward_exec(&batch.images, exec)?;
        let (loss, _) = softmax_xent(&logits, &batch.labels)?;
        loss_sum += loss * batch.labels.len() as f64;
        preds.extend(predictions(&logits));
    }
    Ok(EpochMetrics {
        split,
        loss: loss_sum / ds.len() as f64,
        accuracy: accuracy(&preds, ds.labels())?,
        f1: macro_f1(&preds, ds.labels(), NUM_CLASSES)?,
        epoch_time_s: 0.0,
    })
}

/// Trains one network and reports train and test metrics after every epoch.
///
/// Training stops early, with both rows of the failing epoch marked
/// diverged, when a loss, gradient, or parameter becomes non-finite, or when
/// train accuracy is below [`ACCURACY_FLOOR`] from epoch
/// [`ACCURACY_FLOOR_EPOCH`] on.
pub fn train_once(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<RunOutcome> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(SkanError::Config(
            "training and test sets must be non-empty".into(),
        ));
    }
    match cfg.precision {
        Precision::F64 => train_typed::<f64>(cfg, train, test),
        Precision::F32 => train_typed::<f32>(cfg, train, test),
    }
}

fn widen<T: Real>(net: &SkanNetwork<T>) -> SkanNetwork<f64> {
    let layers = net
        .layers()
        .iter()
        .map(|l| crate::layer::SkanLayer::new(l.basis(), l.params().cast()).expect("finite"))
        .collect();
    SkanNetwork::from_layers(layers).expect("dims chain")
}

fn train_typed<T: Real>(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<RunOutcome> {
    let mut net = SkanNetwork::<T>::init(&cfg.dims, cfg.basis, cfg.seed);
    let mut adam = AdamState::for_network(&net, AdamConfig::with_lr(cfg.lr));
    let mut shuffle = SkanRng::for_shuffle(cfg.seed);
    let mut records = Vec::with_capacity(cfg.epochs * 2);
    let last_good = |net: &SkanNetwork<T>| {
        if net.params_finite() {
            widen(net)
        } else {
            SkanNetwork::zeros(&cfg.dims, cfg.basis)
        }
    };

    let row = |epoch, split, metrics, status| RunRecord {
        basis: cfg.basis,
        dims: cfg.dims.clone(),
        lr: cfg.lr,
        seed: cfg.seed,
        epoch,
        split,
        metrics,
        status,
    };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut ok = true;
        for batch in make_batches::<T>(train, cfg.batch, &mut shuffle)? {
            let cache = net.forward_cached(&batch.images, cfg.exec)?;
            let (loss, d_logits) = softmax_xent(&cache.output, &batch.labels)?;
            if !loss.is_finite() {
                ok = false;
                break;
            }
            let grads = net.backward(&cache, &d_logits, false, cfg.exec)?;
            match adam.step_network(&mut net, &grads.dk) {
                Ok(()) => {}
                Err(SkanError::Domain { .. }) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
            if !net.params_finite() {
                ok = false;
                break;
            }
        }
        let elapsed = start.elapsed().as_secs_f64();

        let metrics = if ok {
            let tr = evaluate(&net, train, Split::Train, cfg.exec)?;
            let te = evaluate(&net, test, Split::Test, cfg.exec)?;
            let finite = tr.loss.is_finite() && te.loss.is_finite();
            let floor_hit = epoch >= ACCURACY_FLOOR_EPOCH && tr.accuracy < ACCURACY_FLOOR;
            (finite && !floor_hit).then_some((tr, te))
        } else {
            None
        };

        match metrics {
            Some((mut tr, mut te)) => {
                // Guard against a zero reading on coarse clocks.
                let t = elapsed.max(f64::MIN_POSITIVE);
                tr.epoch_time_s = t;
                te.epoch_time_s = t;
                log::info!(
                    "{} {} lr={} seed={} epoch {}/{}: train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4} f1 {:.4} | {:.1}s",
                    cfg.basis,
                    format_dims(&cfg.dims),
                    cfg.lr,
                    cfg.seed,
                    epoch,
                    cfg.epochs,
                    tr.loss,
                    tr.accuracy,
                    te.loss,
                    te.accuracy,
                    te.f1,
                    t
                );
                records.push(row(epoch, Split::Train, Some(tr), RunStatus::Ok));
                records.push(row(epoch, Split::Test, Some(te), RunStatus::Ok));
            }
            None => {
                log::warn!(
                    "{} lr={} seed={} diverged in epoch {}",
                    cfg.basis,
                    cfg.lr,
                    cfg.seed,
                    epoch
                );
                records.push(row(epoch, Split::Train, None, RunStatus::Diverged));
                records.push(row(epoch, Split::Test, None, RunStatus::Diverged));
                return Ok(RunOutcome {
                    records,
                    network: last_good(&net),
                });
            }
        }
    }
    Ok(RunOutcome {
        records,
        network: widen(&net),
    })
}

/// Learning-rate grid selector.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `{1..9}×1e-4 ∪ {1..9}×1e-3 ∪ {1..9}×1e-2`, 27 values.
    Paper,
    /// `{1..9}×1e-4 ∪ {1..10}×1e-3`, 19 values.
    Paper30,
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    Linear { lo: f64, hi: f64, n: usize },
}

impl FromStr for GridSpec {
    type Err = SkanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(GridSpec::Paper),
            "paper30" => Ok(GridSpec::Paper30),
            _ => {
                let bad =
                    || SkanError::Config(format!("grid `{s}` is not paper, paper30, or LO:HI:N"));
                let parts: Vec<&str> = s.split(':').collect();
                let [lo, hi, n] = parts.as_slice() else {
                    return Err(bad());
                };
                Ok(GridSpec::Linear {
                    lo: lo.parse().map_err(|_| bad())?,
                    hi: hi.parse().map_err(|_| bad())?,
                    n: n.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Paper => f.write_str("paper"),
            GridSpec::Paper30 => f.write_str("paper30"),
            GridSpec::Linear { lo, hi, n } => write!(f, "{lo}:{hi}:{n}"),
        }
    }
}

/// `i / scale` for `i` in `range`; dividing keeps decimal values such as
/// 0.004 exact to the nearest double.
fn decade(range: std::ops::RangeInclusive<u32>, scale: f64) -> impl Iterator<Item = f64> {
    range.map(move |i| f64::from(i) / scale)
}

/// Expands a grid selector into a strictly increasing list of positive rates.
pub fn lr_grid(spec: &GridSpec) -> Result<Vec<f64>> {
    let grid: Vec<f64> = match *spec {
        GridSpec::Paper => decade(1..=9, 1e4)
            .chain(decade(1..=9, 1e3))
            .chain(decade(1..=9, 1e2))
            .collect(),
        GridSpec::Paper30 => decade(1..=9, 1e4).chain(decade(1..=10, 1e3)).collect(),
        GridSpec::Linear { lo, hi, n } => match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        },
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SkanError::Config("learning-rate grid is empty".into()));
    }
    if grid.iter().any(|&lr| !(lr.is_finite() && lr > 0.0)) {
        return Err(SkanError::Config("learning rates must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SkanError::Config(
            "learning-rate grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub lr_grid: Vec<f64>,
    pub repeats: usize,
    pub epochs: usize,
    pub basis: BasisId,
    pub dims: Vec<usize>,
    pub seed_base: u64,
    pub batch: usize,
    pub precision: Precision,
    pub exec: Exec,
    /// Concurrent runs; 1 runs them in order on the calling thread.
    pub jobs: usize,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.lr_grid)?;
        if self.repeats == 0 {
            return Err(SkanError::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// `(lr, seed)` for every run, lr-major.
    pub fn runs(&self) -> Vec<(f64, u64)> {
        self.lr_grid
            .iter()
            .flat_map(|&lr| (0..self.repeats as u64).map(move |r| (lr, self.seed_base + r)))
            .collect()
    }

    fn config(&self, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            basis: self.basis,
            dims: self.dims.clone(),
            lr,
            epochs: self.epochs,
            batch: self.batch,
            seed,
            precision: self.precision,
            exec: self.exec,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Every row of every run, in run order.
    pub records: Vec<RunRecord>,
    /// Final-epoch rows of the best repeat per learning rate.
    pub summary: Vec<RunRecord>,
}

/// Picks, per learning rate, the convergent run with the highest final test
/// accuracy (lower seed on ties) and returns its final-epoch rows. A learning
/// rate whose runs all diverged yields a pair of diverged rows carrying the
/// lowest seed.
pub fn best_per_lr(plan: &SweepPlan, runs: &[Vec<RunRecord>]) -> Vec<RunRecord> {
    let mut summary = Vec::new();
    for &lr in &plan.lr_grid {
        let candidates = runs
            .iter()
            .filter(|r| r.first().is_some_and(|x| x.lr == lr));
        let mut best: Option<(&Vec<RunRecord>, f64, u64)> = None;
        for run in candidates {
            if run.iter().any(|r| r.status == RunStatus::Diverged) {
                continue;
            }
            let Some(last) = run.iter().rev().find(|r| r.split == Split::Test) else {
                continue;
            };
            let Some(acc) = last.metrics.map(|m| m.accuracy) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((_, b_acc, b_seed)) => acc > b_acc || (acc == b_acc && last.seed < b_seed),
            };
            if better {
                best = Some((run, acc, last.seed));
            }
        }
        match best {
            Some((run, _, _)) => {
                let last_epoch = run.iter().map(|r| r.epoch).max().unwrap_or(0);
                summary.extend(run.iter().filter(|r| r.epoch == last_epoch).cloned());
            }
            None => {
                let seed = runs
                    .iter()
                    .filter(|r| r.first().is_some_and(|x| x.lr == lr))
                    .filter_map(|r| r.first().map(|x| x.seed))
                    .min()
                    .unwrap_or(plan.seed_base);
                let epoch = runs
                    .iter()
                    .filter(|r| r.first().is_some_and(|x| x.lr == lr))
                    .flat_map(|r| r.iter().map(|x| x.epoch))
                    .max()
                    .unwrap_or(0);
                for split in [Split::Train, Split::Test] {
                    summary.push(RunRecord {
                        basis: plan.basis,
                        dims: plan.dims.clone(),
                        lr,
                        seed,
                        epoch,
                        split,
                        metrics: None,
                        status: RunStatus::Diverged,
                    });
                }
            }
        }
    }
    summary
}

/// Runs every `(lr, repeat)` pair of the plan. Rows are handed to `sink` in
/// run order as runs complete.
pub fn sweep<F>(
    plan: &SweepPlan,
    train: &Dataset,
    test: &Dataset,
    mut sink: F,
) -> Result<SweepResult>
where
    F: FnMut(&[RunRecord]) -> Result<()>,
{
    plan.validate()?;
    let runs = plan.runs();
    let mut per_run: Vec<Vec<RunRecord>> = Vec::with_capacity(runs.len());
    if plan.jobs <= 1 {
        for &(lr, seed) in &runs {
            let out = train_once(&plan.config(lr, seed), train, test)?;
            sink(&out.records)?;
            per_run.push(out.records);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| SkanError::Config(format!("cannot start {} workers: {e}", plan.jobs)))?;
        let results: Vec<Result<Vec<RunRecord>>> = pool.install(|| {
            runs.par_iter()
                .map(|&(lr, seed)| {
                    train_once(&plan.config(lr, seed), train, test).map(|o| o.records)
                })
                .collect()
        });
        for r in results {
            let records = r?;
            sink(&records)?;
            per_run.push(records);
        }
    }
    let summary = best_per_lr(plan, &per_run);
    Ok(SweepResult {
        records: per_run.into_iter().flatten().collect(),
        summary,
    })
}

/// CSV writer for [`RunRecord`]s; the header goes out on construction.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(CSV_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, records: &[RunRecord]) -> Result<()> {
        for r in records {
            self.inner.write_record(r.csv_fields())?;
        }
        self.inner
            .flush()
            .map_err(|e| SkanError::io("csv output", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| SkanError::io("csv output", e.into_error()))
    }
}

/// Renders records as a CSV document with header.
pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = RecordWriter::new(Vec::new())?;
    w.write(records)?;
    Ok(String::from_utf8(w.into_inner()?).expect("csv output is utf-8"))
}
