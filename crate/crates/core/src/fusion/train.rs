//! Mini-batch SGD over labelled sequences.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{argmax, backward, forward, loss, FusionModel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::glcm::GlcmSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            epochs: 60,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<EpochRow>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,train_accuracy,elapsed_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.epoch, r.mean_loss, r.train_accuracy, r.elapsed_ms
            );
        }
        out
    }
}

/// Mean loss and accuracy of `model` over `data`.
pub(crate) fn score(model: &FusionModel, data: &[(GlcmSequence, usize)]) -> Result<(f64, f64)> {
    let results: Vec<(f64, bool)> = data
        .par_iter()
        .map(|(s, label)| {
            let p = forward(model, s)?;
            Ok((loss(&p, *label)?, argmax(&p) == *label))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let total_loss: f64 = results.iter().map(|r| r.0).sum();
    let correct = results.iter().filter(|r| r.1).count() as f64;
    Ok((total_loss / n, correct / n))
}

/// Trains `model` in place. Each epoch visits the data in a seeded shuffle;
/// per-item gradients are computed in parallel and summed in item order, so
/// the result does not depend on the thread count. Trace rows report loss
/// and accuracy of the model after each epoch.
pub fn train(
    model: &mut FusionModel,
    data: &[(GlcmSequence, usize)],
    config: &TrainConfig,
) -> Result<TrainTrace> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some((_, bad)) = data.iter().find(|(_, l)| *l >= NUM_CLASSES) {
        return Err(Error::Label(*bad));
    }
    let f = model.input_size();
    if let Some((s, _)) = data.iter().find(|(s, _)| s.feature_len != f) {
        return Err(Error::Dim(format!(
            "model expects {f} features, dataset has {}",
            s.feature_len
        )));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = TrainTrace::default();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let grads: Vec<FusionModel> = batch
                .par_iter()
                .map(|&i| backward(model, &data[i].0, data[i].1).map(|(_, g)| g))
                .collect::<Result<_>>()?;
            let step = config.learning_rate / batch.len() as f64;
            let mut params = model.param_slices_mut();
            for g in &grads {
                for (p, gp) in params.iter_mut().zip(g.param_slices()) {
                    for (a, b) in p.iter_mut().zip(gp) {
                        *a -= step * b;
                    }
                }
            }
        }
        let (mean_loss, train_accuracy) = score(model, data)?;
        trace.rows.push(EpochRow {
            epoch,
            mean_loss,
            train_accuracy,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{predict, Architecture, ModelMode};
    use crate::glcm::SequenceMode;
    use rand::Rng;

    fn toy_dataset(seed: u64) -> Vec<(GlcmSequence, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        (0..60)
            .map(|k| {
                let label = k % 3;
                let timesteps = (0..2)
                    .map(|_| {
                        means[label]
                            .iter()
                            .map(|m| m + rng.gen_range(-0.2..0.2))
                            .collect()
                    })
                    .collect();
                let s = GlcmSequence {
                    mode: SequenceMode::Vs3d,
                    levels: 2,
                    feature_len: 4,
                    timesteps,
                    padding: 0,
                };
                (s, label)
            })
            .collect()
    }

    fn small_model(seed: u64) -> FusionModel {
        FusionModel::new(
            ModelMode::Glcm3d,
            4,
            &Architecture {
                hidden: 8,
                dense_hidden: 8,
                seed,
                ..Architecture::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let data = toy_dataset(1);
        let mut m = small_model(1);
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        train(&mut m, &data, &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = toy_dataset(2);
        let mut m = small_model(2);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 200,
            batch_size: 6,
            seed: 2,
        };
        let trace = train(&mut m, &data, &cfg).unwrap();
        let first_perfect = trace.rows.iter().find(|r| r.train_accuracy == 1.0);
        assert!(first_perfect.is_some(), "last row {:?}", trace.rows.last());

        let last = trace.rows.last().unwrap();
        let correct = data
            .iter()
            .filter(|(s, l)| predict(&m, s).unwrap().0 == *l)
            .count();
        assert_eq!(correct as f64 / data.len() as f64, last.train_accuracy);
    }

    #[test]
    fn deterministic_trace() {
        let data = toy_dataset(3);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let mut m = small_model(3);
                    let t = train(&mut m, &data, &cfg).unwrap();
                    (
                        m,
                        t.rows
                            .iter()
                            .map(|r| (r.mean_loss, r.train_accuracy))
                            .collect::<Vec<_>>(),
                    )
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut m = small_model(4);
        assert!(matches!(
            train(&mut m, &[], &TrainConfig::default()),
            Err(Error::Config(_))
        ));
        let mut data = toy_dataset(4);
        assert!(matches!(
            train(
                &mut m,
                &data,
                &TrainConfig {
                    epochs: 0,
                    ..TrainConfig::default()
                }
            ),
            Err(Error::Config(_))
        ));
        data[0].0.feature_len = 5;
        assert!(matches!(
            train(&mut m, &data, &TrainConfig::default()),
            Err(Error::Dim(_))
        ));
    }
}
