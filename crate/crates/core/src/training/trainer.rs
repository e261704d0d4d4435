use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{ConfusionMatrix, MetricsReport};
use super::optim::{Optimizer, OptimizerKind};
use crate::autodiff::{checkpoint, ParamGrads, Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::nn::{argmax_rows, KeyValues, Network, NetworkConfig, ScenePlan};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Scenes whose gradients are averaged into one update.
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub shuffle_seed: u64,
    /// Worker threads for per-scene forward/backward. Results are merged in
    /// scene order, so the outcome does not depend on this value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 1,
            shuffle_seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let opt: String = kv.get("optimizer", d.optimizer.as_str().to_string())?;
        let cfg = TrainConfig {
            epochs: kv.get("epochs", d.epochs)?,
            optimizer: opt.parse().map_err(|e: Error| Error::Config {
                line: kv.line_of("optimizer"),
                message: e.to_string(),
            })?,
            learning_rate: kv.get("learning_rate", d.learning_rate)?,
            batch_size: kv.get("batch_size", d.batch_size)?,
            shuffle_seed: kv.get("shuffle_seed", d.shuffle_seed)?,
            threads: d.threads,
        };
        if cfg.batch_size == 0 {
            return Err(Error::Config {
                line: kv.line_of("batch_size"),
                message: "batch_size must be positive".into(),
            });
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "epochs = {}\noptimizer = {}\nlearning_rate = {}\nbatch_size = {}\nshuffle_seed = {}\n",
            self.epochs,
            self.optimizer.as_str(),
            self.learning_rate,
            self.batch_size,
            self.shuffle_seed
        )
    }
}

/// Reads network and training settings from one `key = value` file and
/// rejects keys neither consumer knows.
pub fn parse_config(text: &str) -> Result<(NetworkConfig, TrainConfig)> {
    let kv = KeyValues::parse(text)?;
    let net = NetworkConfig::from_key_values(&kv)?;
    let train = TrainConfig::from_key_values(&kv)?;
    kv.ensure_all_used()?;
    Ok((net, train))
}

/// A scene with its geometric plan and input features precomputed.
#[derive(Debug, Clone)]
pub struct Example {
    pub plan: ScenePlan,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

pub fn prepare(net: &Network, cloud: &PointCloud) -> Result<Example> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::invalid("training scenes need labels"))?;
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= net.config.num_classes) {
        return Err(Error::invalid(format!(
            "label {l} out of range for {} classes",
            net.config.num_classes
        )));
    }
    Ok(Example {
        plan: net.plan(cloud.positions())?,
        features: net.input_features(cloud)?,
        labels: labels.iter().map(|&l| l as usize).collect(),
    })
}

pub fn prepare_all(net: &Network, clouds: &[PointCloud], threads: usize) -> Result<Vec<Example>> {
    parallel_map(clouds, threads, |c| prepare(net, c))
}

/// Applies `f` to every item on up to `threads` workers, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean cross-entropy, parameter gradients and predictions for one scene.
pub fn scene_gradients(net: &Network, ex: &Example) -> Result<(f64, ParamGrads, Vec<u32>)> {
    let mut tape = Tape::new(&net.store);
    let input = tape.leaf(ex.features.clone());
    let trace = net.forward_with(&mut tape, &ex.plan, input)?;
    let predictions = argmax_rows(tape.value(trace.logits));
    let loss = tape.softmax_cross_entropy(trace.logits, &ex.labels)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?.param_grads(net.store.len());
    Ok((value, grads, predictions))
}

pub fn scene_loss(net: &Network, ex: &Example) -> Result<f64> {
    let mut tape = Tape::new(&net.store);
    let input = tape.leaf(ex.features.clone());
    let trace = net.forward_with(&mut tape, &ex.plan, input)?;
    let loss = tape.softmax_cross_entropy(trace.logits, &ex.labels)?;
    Ok(tape.value(loss).item())
}

pub fn predict(net: &Network, ex: &Example) -> Result<Vec<u32>> {
    let mut tape = Tape::new(&net.store);
    let input = tape.leaf(ex.features.clone());
    let trace = net.forward_with(&mut tape, &ex.plan, input)?;
    Ok(argmax_rows(tape.value(trace.logits)))
}

pub fn evaluate(net: &Network, data: &[Example], threads: usize) -> Result<MetricsReport> {
    let parts = parallel_map(data, threads, |ex| {
        let mut m = ConfusionMatrix::new(net.config.num_classes);
        let labels: Vec<u32> = ex.labels.iter().map(|&l| l as u32).collect();
        m.add(&labels, &predict(net, ex)?)?;
        Ok(m)
    })?;
    let mut total = ConfusionMatrix::new(net.config.num_classes);
    for p in &parts {
        total.merge(p);
    }
    Ok(total.report())
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    /// Optimizer updates completed so far.
    pub step: u64,
    /// Mean per-scene loss over the epoch.
    pub loss: f64,
    pub accuracy: f64,
    pub miou: f64,
}

pub const LOG_HEADER: &str = "epoch,step,loss,accuracy,miou";

pub fn format_log(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.step, r.loss, r.accuracy, r.miou);
    }
    s
}

/// Trains `net` in place.
///
/// Each epoch shuffles the scenes with a generator seeded from
/// `(shuffle_seed, epoch)`, then takes one optimizer step per batch on the
/// mean of the per-scene gradients. Accuracy and mIoU in the log come from
/// `eval` after the epoch when given, otherwise from the training
/// predictions made during the epoch.
pub fn train(
    net: &mut Network,
    data: &[Example],
    cfg: &TrainConfig,
    eval: Option<&[Example]>,
    mut on_epoch: impl FnMut(&LogRow),
) -> Result<Vec<LogRow>> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net.store)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut confusion = ConfusionMatrix::new(net.config.num_classes);
        for batch in order.chunks(cfg.batch_size) {
            let scenes: Vec<&Example> = batch.iter().map(|&i| &data[i]).collect();
            let results = parallel_map(&scenes, cfg.threads, |ex| scene_gradients(net, ex))?;
            let mut merged = ParamGrads::empty(net.store.len());
            for (i, (loss, grads, pred)) in results.iter().enumerate() {
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step: opt.step as usize + 1,
                        loss: *loss,
                    });
                }
                loss_sum += loss;
                merged.merge(grads);
                let labels: Vec<u32> = scenes[i].labels.iter().map(|&l| l as u32).collect();
                confusion.add(&labels, pred)?;
            }
            net.store.zero_grads();
            net.store.accumulate(&merged);
            opt.update(&mut net.store, 1.0 / batch.len() as f64);
        }
        let report = match eval {
            Some(e) => evaluate(net, e, cfg.threads)?,
            None => confusion.report(),
        };
        let row = LogRow {
            epoch,
            step: opt.step,
            loss: loss_sum / data.len() as f64,
            accuracy: report.overall_accuracy,
            miou: report.mean_iou,
        };
        on_epoch(&row);
        log.push(row);
    }
    Ok(log)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    checkpoint::save(&net.store, path)
}

/// Builds a network for `config` and fills it from `path`, checking every
/// parameter's name and shape against the configuration.
pub fn load_checkpoint(config: NetworkConfig, path: &Path) -> Result<Network> {
    let mut net = Network::new(config)?;
    let entries = checkpoint::read(path)?;
    checkpoint::restore_into(&mut net.store, entries)?;
    Ok(net)
}
