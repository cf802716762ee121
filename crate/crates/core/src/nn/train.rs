use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::Trainable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitoredMetric {
    /// The model's own loss on dev: NLL for mixture heads, squared error
    /// for regression, cross-entropy for the dialect model.
    #[default]
    #[serde(alias = "dev_nll")]
    DevLoss,
    DevMedianKm,
}

impl std::str::FromStr for MonitoredMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dev_loss" | "dev_nll" => Ok(MonitoredMetric::DevLoss),
            "dev_median_km" => Ok(MonitoredMetric::DevMedianKm),
            other => Err(Error::Config(format!("unknown monitored metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub monitored_metric: MonitoredMetric,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig { patience: 5, monitored_metric: MonitoredMetric::DevLoss }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub early_stop: EarlyStopConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Drives shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            adam: AdamConfig::default(),
            early_stop: EarlyStopConfig::default(),
            batch_size: 32,
            max_epochs: 100,
            seed: 0,
        }
    }
}

/// Displayed without `elapsed_secs` so that log files are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub elapsed_secs: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={}\ttrain_loss={:.6}\tdev_metric={:.6}",
            self.epoch, self.train_loss, self.dev_metric
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub initial_dev_metric: f64,
    pub records: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_dev_metric: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    /// Line-oriented log: one header line, then one record per epoch.
    pub fn to_lines(&self) -> String {
        let mut s = format!("# initial_dev_metric={:.6}\n", self.initial_dev_metric);
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s.push_str(&format!(
            "# best_epoch={}\tbest_dev_metric={:.6}\tstopped_early={}\n",
            self.best_epoch, self.best_dev_metric, self.stopped_early
        ));
        s
    }
}

/// Mini-batch Adam with per-epoch shuffling and early stopping; returns the
/// parameters from the best dev epoch.
pub fn train_loop<M: Trainable>(
    model: M,
    train: &[M::Example],
    dev: &[M::Example],
    opts: &TrainOptions,
) -> Result<(M, TrainLog)> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Training("train and dev sets must be non-empty".into()));
    }
    if opts.batch_size == 0 || opts.early_stop.patience == 0 {
        return Err(Error::Config("batch size and patience must be at least 1".into()));
    }
    opts.adam.validate()?;
    let metric = opts.early_stop.monitored_metric;
    let initial = model.dev_metric(dev, metric)?;
    let mut log = TrainLog {
        initial_dev_metric: initial,
        records: Vec::new(),
        best_epoch: 0,
        best_dev_metric: initial,
        stopped_early: false,
    };
    if opts.max_epochs == 0 {
        return Ok((model, log));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    dropout_rng.set_stream(2);

    let start = Instant::now();
    let mut model = model;
    let mut adam = AdamState::new(&model);
    let mut best: Option<M> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<&M::Example> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = model.loss_and_grad(&batch, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut model, &grads, &mut adam, &opts.adam)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += loss;
            batches += 1;
        }
        let dev_metric = model.dev_metric(dev, metric)?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_metric,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        let rec = log.records.last().expect("just pushed");
        log::info!("{rec}\telapsed_secs={:.3}", rec.elapsed_secs);
        if best.is_none() || dev_metric < log.best_dev_metric {
            log.best_dev_metric = dev_metric;
            log.best_epoch = epoch;
            best = Some(model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.early_stop.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok((best.expect("at least one epoch ran"), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Parameters;
    use std::cell::Cell;

    /// Scalar model whose dev metric follows a script indexed by epoch.
    #[derive(Clone, Debug)]
    struct Scripted {
        w: Vec<f64>,
        script: Vec<f64>,
        calls: std::rc::Rc<Cell<usize>>,
    }

    impl Parameters for Scripted {
        fn param_blocks(&self) -> Vec<(String, &[f64])> {
            vec![("w".into(), &self.w)]
        }
        fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.w]
        }
    }

    impl Trainable for Scripted {
        type Example = f64;
        fn loss_and_grad(&self, batch: &[&f64], _: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Vec<f64>>)> {
            let g: f64 = batch.iter().map(|&&t| 2.0 * (self.w[0] - t)).sum::<f64>() / batch.len() as f64;
            let l: f64 = batch.iter().map(|&&t| (self.w[0] - t).powi(2)).sum::<f64>() / batch.len() as f64;
            Ok((l, vec![vec![g]]))
        }
        fn dev_metric(&self, _: &[f64], _: MonitoredMetric) -> Result<f64> {
            let i = self.calls.get();
            self.calls.set(i + 1);
            Ok(self.script[i.min(self.script.len() - 1)])
        }
    }

    #[test]
    fn patience_one_with_worsening_metric_stops_after_epoch_two() {
        let model = Scripted { w: vec![0.0], script: vec![10.0, 1.0, 2.0, 3.0, 4.0], calls: Default::default() };
        let opts = TrainOptions {
            early_stop: EarlyStopConfig { patience: 1, monitored_metric: MonitoredMetric::DevLoss },
            max_epochs: 10,
            batch_size: 2,
            ..Default::default()
        };
        let train = vec![1.0, 1.0, 1.0, 1.0];
        let (best, log) = train_loop(model, &train, &[0.0], &opts).unwrap();
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.best_epoch, 1);
        assert!(log.stopped_early);
        // Epoch-1 parameters: two Adam steps of lr from 0 toward 1.
        assert!((best.w[0] - 2e-3).abs() < 1e-7, "{}", best.w[0]);
    }

    #[test]
    fn zero_epochs_returns_initial_state() {
        let model = Scripted { w: vec![0.25], script: vec![1.0], calls: Default::default() };
        let opts = TrainOptions { max_epochs: 0, ..Default::default() };
        let (best, log) = train_loop(model, &[1.0], &[1.0], &opts).unwrap();
        assert_eq!(best.w, vec![0.25]);
        assert!(log.records.is_empty());
    }

    #[test]
    fn nan_loss_aborts_with_location() {
        let model = Scripted { w: vec![0.0], script: vec![1.0], calls: Default::default() };
        let opts = TrainOptions { batch_size: 1, ..Default::default() };
        let err = train_loop(model, &[1.0, f64::NAN], &[0.0], &opts).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn empty_sets_are_rejected() {
        let model = Scripted { w: vec![0.0], script: vec![1.0], calls: Default::default() };
        assert!(train_loop(model, &[], &[0.0], &TrainOptions::default()).is_err());
    }
}
