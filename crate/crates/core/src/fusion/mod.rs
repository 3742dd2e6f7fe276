//! LSTM fusion classifier for GLCM sequences.
//!
//! Three layer stacks, one per sequence mode:
//!
//! * `glcm2d`: LSTM (seq-to-seq) -> LSTM (seq-to-one) -> Dense(3, softmax)
//! * `glcm2_5d`, `glcm3d`: LSTM (seq-to-seq) -> LSTM (seq-to-one) -> Dense(32, relu) -> Dense(3, softmax)
//!
//! Gates are sigmoids; the cell candidate and output squashing use the
//! configured activation (relu by default, tanh available). Class labels are
//! `0 = benign`, `1 = malignant`, `2 = ambiguous`.

mod checkpoint;
mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glcm::GlcmSequence;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use layers::{
    lstm_cell, softmax, CellActivation, DenseActivation, DenseLayer, LstmLayer, LstmParams,
};
pub use train::{train, EpochRow, TrainConfig, TrainTrace};

pub const NUM_CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["benign", "malignant", "ambiguous"];

const LOSS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    Glcm2d,
    Glcm2_5d,
    Glcm3d,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Glcm2d => "glcm2d",
            ModelMode::Glcm2_5d => "glcm2_5d",
            ModelMode::Glcm3d => "glcm3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "glcm2d" | "2d" => Ok(ModelMode::Glcm2d),
            "glcm2_5d" | "2_5d" | "2.5d" => Ok(ModelMode::Glcm2_5d),
            "glcm3d" | "3d" => Ok(ModelMode::Glcm3d),
            other => Err(Error::Config(format!("unknown model mode {other:?}"))),
        }
    }
}

/// Layer sizes and initialization for [`FusionModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden: usize,
    pub dense_hidden: usize,
    pub activation: CellActivation,
    /// `None` shares the first LSTM layer's weights across timesteps;
    /// `Some(t)` gives each of `t` timesteps its own weights.
    pub unshared_timesteps: Option<usize>,
    /// Half-width of the uniform weight init. `None` scales each layer by
    /// `sqrt(6 / (fan_in + fan_out))`.
    pub init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: 128,
            dense_hidden: 32,
            activation: CellActivation::Relu,
            unshared_timesteps: None,
            init_scale: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Lstm(LstmLayer),
    Dense(DenseLayer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub mode: ModelMode,
    pub layers: Vec<Layer>,
}

impl FusionModel {
    pub fn new(mode: ModelMode, input_size: usize, arch: &Architecture) -> Result<Self> {
        if input_size == 0 || arch.hidden == 0 || arch.dense_hidden == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(arch.seed);
        let scale = |fan_in: usize, fan_out: usize| {
            arch.init_scale
                .unwrap_or_else(|| (6.0 / (fan_in + fan_out) as f64).sqrt())
        };
        let (h, dh) = (arch.hidden, arch.dense_hidden);
        let first_cells = arch.unshared_timesteps.unwrap_or(1).max(1);
        let mut layers = vec![
            Layer::Lstm(LstmLayer {
                cells: (0..first_cells)
                    .map(|_| LstmParams::random(input_size, h, scale(input_size + h, h), &mut rng))
                    .collect(),
                activation: arch.activation,
                return_sequences: true,
            }),
            Layer::Lstm(LstmLayer {
                cells: vec![LstmParams::random(h, h, scale(2 * h, h), &mut rng)],
                activation: arch.activation,
                return_sequences: false,
            }),
        ];
        let mut last = arch.hidden;
        if mode != ModelMode::Glcm2d {
            layers.push(Layer::Dense(DenseLayer::random(
                last,
                arch.dense_hidden,
                DenseActivation::Relu,
                scale(h, dh),
                &mut rng,
            )));
            last = arch.dense_hidden;
        }
        layers.push(Layer::Dense(DenseLayer::random(
            last,
            NUM_CLASSES,
            DenseActivation::Softmax,
            scale(last, NUM_CLASSES),
            &mut rng,
        )));
        Ok(FusionModel { mode, layers })
    }

    pub fn input_size(&self) -> usize {
        match &self.layers[0] {
            Layer::Lstm(l) => l.input(),
            Layer::Dense(d) => d.input,
        }
    }

    /// Every parameter block in a fixed order (layer by layer, `w, u, b` per cell).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Lstm(l) => {
                    for c in &l.cells {
                        out.extend([c.w.as_slice(), c.u.as_slice(), c.b.as_slice()]);
                    }
                }
                Layer::Dense(d) => out.extend([d.w.as_slice(), d.b.as_slice()]),
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Lstm(l) => {
                    for c in &mut l.cells {
                        out.push(&mut c.w);
                        out.push(&mut c.u);
                        out.push(&mut c.b);
                    }
                }
                Layer::Dense(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.param_slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn check_input(&self, seq: &GlcmSequence) -> Result<()> {
        if seq.timesteps.is_empty() {
            return Err(Error::Dim("sequence has no timesteps".into()));
        }
        let f = self.input_size();
        if let Some(bad) = seq.timesteps.iter().find(|t| t.len() != f) {
            return Err(Error::Dim(format!(
                "model expects {f} features per timestep, got {}",
                bad.len()
            )));
        }
        if let Layer::Lstm(l) = &self.layers[0] {
            l.check_len(seq.timesteps.len())?;
        }
        Ok(())
    }
}

enum LayerCache {
    Lstm(Vec<layers::StepCache>),
    Dense {
        x: Vec<f64>,
        z: Vec<f64>,
        y: Vec<f64>,
    },
}

struct ForwardPass {
    caches: Vec<LayerCache>,
    probs: Vec<f64>,
}

fn run_forward(model: &FusionModel, seq: &GlcmSequence) -> Result<ForwardPass> {
    model.check_input(seq)?;
    let mut seq_act: Vec<Vec<f64>> = seq.timesteps.clone();
    let mut caches = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        match layer {
            Layer::Lstm(l) => {
                let (out, cache) = l.forward(&seq_act);
                caches.push(LayerCache::Lstm(cache));
                seq_act = out;
            }
            Layer::Dense(d) => {
                if seq_act.len() != 1 {
                    return Err(Error::Dim("dense layer needs a single vector".into()));
                }
                let x = seq_act.pop().expect("one vector");
                let (z, y) = d.forward(&x);
                caches.push(LayerCache::Dense { x, z, y: y.clone() });
                seq_act = vec![y];
            }
        }
    }
    let probs = seq_act.pop().expect("final output");
    Ok(ForwardPass { caches, probs })
}

/// Class probabilities for one sequence.
pub fn forward(model: &FusionModel, seq: &GlcmSequence) -> Result<Vec<f64>> {
    Ok(run_forward(model, seq)?.probs)
}

/// Cross-entropy `-ln(max(p[label], 1e-12))`.
pub fn loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::Label(label))?;
    Ok(-p.max(LOSS_EPSILON).ln())
}

/// Loss and exact parameter gradients for one labelled sequence.
///
/// The last layer is treated as softmax fused with cross-entropy, so its
/// pre-activation gradient is `probs - onehot(label)`.
pub fn backward(
    model: &FusionModel,
    seq: &GlcmSequence,
    label: usize,
) -> Result<(f64, FusionModel)> {
    if label >= NUM_CLASSES {
        return Err(Error::Label(label));
    }
    let pass = run_forward(model, seq)?;
    let value = loss(&pass.probs, label)?;
    let mut grads = model.zeros_like();

    let mut upstream: Vec<Vec<f64>> = {
        let mut d = pass.probs.clone();
        d[label] -= 1.0;
        vec![d]
    };
    let mut fused = true;
    for ((layer, cache), grad) in model
        .layers
        .iter()
        .zip(&pass.caches)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        match (layer, cache, grad) {
            (Layer::Dense(d), LayerCache::Dense { x, z, y }, Layer::Dense(g)) => {
                upstream = vec![d.backward(x, z, y, &upstream[0], fused, g)];
            }
            (Layer::Lstm(l), LayerCache::Lstm(c), Layer::Lstm(g)) => {
                upstream = l.backward(c, &upstream, g);
            }
            _ => unreachable!("cache matches layer"),
        }
        fused = false;
    }
    Ok((value, grads))
}

/// Most probable class; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn predict(model: &FusionModel, seq: &GlcmSequence) -> Result<(usize, Vec<f64>)> {
    let probs = forward(model, seq)?;
    Ok((argmax(&probs), probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glcm::SequenceMode;
    use proptest::prelude::*;
    use rand::Rng;

    fn seq(rows: Vec<Vec<f64>>) -> GlcmSequence {
        GlcmSequence {
            mode: SequenceMode::Vs3d,
            levels: 2,
            feature_len: rows[0].len(),
            timesteps: rows,
            padding: 0,
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, f: usize) -> GlcmSequence {
        seq((0..t)
            .map(|_| (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect())
    }

    fn toy(mode: ModelMode, f: usize, seed: u64) -> FusionModel {
        FusionModel::new(
            mode,
            f,
            &Architecture {
                hidden: 4,
                dense_hidden: 5,
                init_scale: Some(0.5),
                seed,
                ..Architecture::default()
            },
        )
        .unwrap()
    }

    fn numeric_grad(
        model: &FusionModel,
        s: &GlcmSequence,
        label: usize,
        block: usize,
        k: usize,
    ) -> f64 {
        let h = 1e-5;
        let eval = |delta: f64| {
            let mut m = model.clone();
            m.param_slices_mut()[block][k] += delta;
            loss(&forward(&m, s).unwrap(), label).unwrap()
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    #[test]
    fn table_layouts_and_param_counts() {
        let arch = Architecture::default();
        let m2 = FusionModel::new(ModelMode::Glcm2d, 1024, &arch).unwrap();
        assert_eq!(m2.layers.len(), 3);
        let m3 = FusionModel::new(ModelMode::Glcm3d, 13 * 1024, &arch).unwrap();
        assert_eq!(m3.layers.len(), 4);
        let lstm = |i: usize, h: usize| 4 * (h * i + h * h + h);
        assert_eq!(
            m2.param_count(),
            lstm(1024, 128) + lstm(128, 128) + 3 * 128 + 3
        );
        assert_eq!(
            m3.param_count(),
            lstm(13 * 1024, 128) + lstm(128, 128) + 32 * 128 + 32 + 3 * 32 + 3
        );
        let m25 = FusionModel::new(ModelMode::Glcm2_5d, 8 * 64, &arch).unwrap();
        assert_eq!(
            m25.param_count(),
            lstm(8 * 64, 128) + lstm(128, 128) + 32 * 128 + 32 + 3 * 32 + 3
        );
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert!((loss(&[1.0 / 3.0; 3], 2).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!((loss(&[0.5, 0.25, 0.25], 1).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((loss(&[1.0, 0.0, 0.0], 1).unwrap() - 1e12f64.ln()).abs() < 1e-9);
        assert!(matches!(loss(&[1.0, 0.0, 0.0], 3), Err(Error::Label(3))));
    }

    #[test]
    fn zero_logits_give_uniform_output() {
        let mut m = toy(ModelMode::Glcm2d, 3, 1);
        if let Some(Layer::Dense(d)) = m.layers.last_mut() {
            d.w.fill(0.0);
            d.b.fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = forward(&m, &random_seq(&mut rng, 3, 3)).unwrap();
        assert_eq!(p, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn final_state_depends_on_history() {
        let m = toy(ModelMode::Glcm3d, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_seq(&mut rng, 3, 4);
        let mut longer = s.clone();
        longer.timesteps.push(s.timesteps[2].clone());
        assert_ne!(forward(&m, &s).unwrap(), forward(&m, &longer).unwrap());
    }

    #[test]
    fn zero_recurrence_sees_only_last_step() {
        let mut m = toy(ModelMode::Glcm2_5d, 4, 3);
        for layer in &mut m.layers {
            if let Layer::Lstm(l) = layer {
                l.cells.iter_mut().for_each(|c| c.u.fill(0.0));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_seq(&mut rng, 4, 4);
        let mut b = random_seq(&mut rng, 4, 4);
        b.timesteps[3] = a.timesteps[3].clone();
        // the second layer only reads its last input, which still depends on
        // the first layer's cell state; removing the forget path isolates it
        for layer in &mut m.layers {
            if let Layer::Lstm(l) = layer {
                let hd = l.hidden();
                for c in &mut l.cells {
                    let input = c.input;
                    c.w[hd * input..2 * hd * input].fill(0.0);
                    c.b[hd..2 * hd].fill(-1e3);
                }
            }
        }
        let (pa, pb) = (forward(&m, &a).unwrap(), forward(&m, &b).unwrap());
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (mode, seed) in [
            (ModelMode::Glcm2d, 5),
            (ModelMode::Glcm2_5d, 6),
            (ModelMode::Glcm3d, 7),
        ] {
            let m = toy(mode, 6, seed);
            let s = random_seq(&mut rng, 3, 6);
            let label = seed as usize % 3;
            let (_, g) = backward(&m, &s, label).unwrap();
            for (b, block) in g.param_slices().iter().enumerate() {
                for (k, &analytic) in block.iter().enumerate() {
                    let numeric = numeric_grad(&m, &s, label, b, k);
                    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
                    assert!(
                        (analytic - numeric).abs() / denom < 1e-5,
                        "{mode:?} block {b} idx {k}: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn output_layer_gradient_is_probs_minus_onehot() {
        let m = toy(ModelMode::Glcm2d, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_seq(&mut rng, 2, 3);
        let probs = forward(&m, &s).unwrap();
        let (_, g) = backward(&m, &s, 1).unwrap();
        let Some(Layer::Dense(d)) = g.layers.last() else {
            panic!("dense output");
        };
        for (k, &bias_grad) in d.b.iter().enumerate() {
            let want = probs[k] - if k == 1 { 1.0 } else { 0.0 };
            assert!((bias_grad - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_at_certain_prediction() {
        let mut m = toy(ModelMode::Glcm2d, 2, 9);
        if let Some(Layer::Dense(d)) = m.layers.last_mut() {
            d.w.fill(0.0);
            d.b.copy_from_slice(&[0.0, 800.0, 0.0]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_seq(&mut rng, 2, 2);
        let probs = forward(&m, &s).unwrap();
        assert_eq!(probs[1], 1.0);
        let (l, g) = backward(&m, &s, 1).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.param_slices().iter().all(|b| b.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn unshared_first_layer() {
        let arch = Architecture {
            hidden: 3,
            dense_hidden: 4,
            unshared_timesteps: Some(3),
            init_scale: Some(0.5),
            ..Architecture::default()
        };
        let m = FusionModel::new(ModelMode::Glcm2d, 2, &arch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = random_seq(&mut rng, 3, 2);
        let (_, g) = backward(&m, &s, 0).unwrap();
        for b in 0..9 {
            let block = &g.param_slices()[b];
            for k in 0..block.len() {
                let numeric = numeric_grad(&m, &s, 0, b, k);
                assert!((block[k] - numeric).abs() <= 1e-5 * block[k].abs().max(1e-4));
            }
        }
        assert!(matches!(
            forward(&m, &random_seq(&mut rng, 2, 2)),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn dim_errors() {
        let m = toy(ModelMode::Glcm3d, 4, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(matches!(
            forward(&m, &random_seq(&mut rng, 2, 5)),
            Err(Error::Dim(_))
        ));
        let empty = GlcmSequence {
            timesteps: vec![],
            ..random_seq(&mut rng, 1, 4)
        };
        assert!(matches!(forward(&m, &empty), Err(Error::Dim(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    proptest! {
        #[test]
        fn softmax_is_a_simplex_point(logits in proptest::collection::vec(-700.0f64..700.0, 1..8)) {
            let s = softmax(&logits);
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn argmax_shift_invariant(logits in proptest::collection::vec(-50.0f64..50.0, 3), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            prop_assert_eq!(argmax(&softmax(&logits)), argmax(&softmax(&shifted)));
        }
    }
}
