//! LSTM and dense layers with hand-written forward and backward passes.
//!
//! Gate weights are stored stacked in `i, f, o, g` order: `w` is
//! `4H x I`, `u` is `4H x H`, `b` has `4H` entries.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellActivation {
    Relu,
    Tanh,
}

impl CellActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            CellActivation::Relu => x.max(0.0),
            CellActivation::Tanh => x.tanh(),
        }
    }

    /// Derivative at `x`; the relu subgradient at 0 is 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            CellActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CellActivation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellActivation::Relu => "relu",
            CellActivation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(CellActivation::Relu),
            "tanh" => Ok(CellActivation::Tanh),
            other => Err(Error::Config(format!("unknown cell activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseActivation {
    Relu,
    Softmax,
    Identity,
}

impl DenseActivation {
    pub fn as_str(self) -> &'static str {
        match self {
            DenseActivation::Relu => "relu",
            DenseActivation::Softmax => "softmax",
            DenseActivation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(DenseActivation::Relu),
            "softmax" => Ok(DenseActivation::Softmax),
            "identity" => Ok(DenseActivation::Identity),
            other => Err(Error::Config(format!("unknown dense activation {other:?}"))),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// `out += m x` for a row-major `rows x x.len()` matrix.
fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T y` for a row-major `y.len() x out.len()` matrix.
fn matvec_t_acc(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&yi, row) in y.iter().zip(m.chunks_exact(cols)) {
        if yi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

/// `m += y x^T`.
fn outer_acc(m: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(m.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            for (a, b) in row.iter_mut().zip(x) {
                *a += yi * b;
            }
        }
    }
}

fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if scale > 0.0 {
                rng.gen_range(-scale..=scale)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn random(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        LstmParams {
            input,
            hidden,
            w: uniform(rng, 4 * hidden * input, scale),
            u: uniform(rng, 4 * hidden * hidden, scale),
            b: uniform(rng, 4 * hidden, scale),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

/// Everything one timestep needs for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates `i, f, o, g`.
    gates: Vec<f64>,
    /// Pre-activation of the candidate gate.
    g_pre: Vec<f64>,
    c: Vec<f64>,
}

fn cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
    act: CellActivation,
) -> (Vec<f64>, StepCache) {
    let hd = p.hidden;
    let mut z = p.b.clone();
    matvec_acc(&p.w, x, &mut z);
    matvec_acc(&p.u, h_prev, &mut z);
    let g_pre = z[3 * hd..].to_vec();
    for v in &mut z[..3 * hd] {
        *v = sigmoid(*v);
    }
    for v in &mut z[3 * hd..] {
        *v = act.apply(*v);
    }
    let (i, f, o, g) = (&z[..hd], &z[hd..2 * hd], &z[2 * hd..3 * hd], &z[3 * hd..]);
    let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let h: Vec<f64> = (0..hd).map(|k| o[k] * act.apply(c[k])).collect();
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        g_pre,
        c,
    };
    (h, cache)
}

/// One LSTM step; returns the new `(h, c)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmParams,
    act: CellActivation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != params.input || h_prev.len() != params.hidden || c_prev.len() != params.hidden {
        return Err(Error::Dim(format!(
            "cell expects input {} and state {}, got {} / {} / {}",
            params.input,
            params.hidden,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let (h, cache) = cell_forward(x, h_prev, c_prev, params, act);
    Ok((h, cache.c))
}

/// A recurrent layer. With `return_sequences` it emits every hidden state,
/// otherwise only the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// One parameter set when weights are shared across timesteps, else one per timestep.
    pub cells: Vec<LstmParams>,
    pub activation: CellActivation,
    pub return_sequences: bool,
}

impl LstmLayer {
    pub fn input(&self) -> usize {
        self.cells[0].input
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    fn params_at(&self, t: usize) -> &LstmParams {
        if self.cells.len() == 1 {
            &self.cells[0]
        } else {
            &self.cells[t]
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if self.cells.len() > 1 && self.cells.len() != len {
            return Err(Error::Dim(format!(
                "unshared layer has {} timestep cells, sequence has {len}",
                self.cells.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<StepCache>) {
        let hd = self.hidden();
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut outputs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for (t, x) in xs.iter().enumerate() {
            let (h_next, cache) = cell_forward(x, &h, &c, self.params_at(t), self.activation);
            c.clone_from(&cache.c);
            h = h_next;
            caches.push(cache);
            if self.return_sequences {
                outputs.push(h.clone());
            }
        }
        if !self.return_sequences {
            outputs.push(h);
        }
        (outputs, caches)
    }

    /// Backpropagation through time. `d_out` holds one gradient per emitted
    /// output. Parameter gradients accumulate into `grad`; input gradients are returned.
    pub(crate) fn backward(
        &self,
        caches: &[StepCache],
        d_out: &[Vec<f64>],
        grad: &mut LstmLayer,
    ) -> Vec<Vec<f64>> {
        let hd = self.hidden();
        let steps = caches.len();
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dxs = vec![Vec::new(); steps];
        let act = self.activation;
        for t in (0..steps).rev() {
            let cache = &caches[t];
            let mut dh = dh_next.clone();
            let upstream = if self.return_sequences {
                Some(&d_out[t])
            } else if t == steps - 1 {
                Some(&d_out[0])
            } else {
                None
            };
            if let Some(up) = upstream {
                for (a, b) in dh.iter_mut().zip(up) {
                    *a += b;
                }
            }
            let g = &cache.gates;
            let mut dz = vec![0.0; 4 * hd];
            let mut dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let (i, f, o, gg) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let c = cache.c[k];
                let dc = dc_next[k] + dh[k] * o * act.derivative(c);
                let d_o = dh[k] * act.apply(c);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[hd + k] = dc * cache.c_prev[k] * f * (1.0 - f);
                dz[2 * hd + k] = d_o * o * (1.0 - o);
                dz[3 * hd + k] = dc * i * act.derivative(cache.g_pre[k]);
                dc_prev[k] = dc * f;
            }
            let idx = if self.cells.len() == 1 { 0 } else { t };
            let p = &self.cells[idx];
            let gp = &mut grad.cells[idx];
            outer_acc(&mut gp.w, &dz, &cache.x);
            outer_acc(&mut gp.u, &dz, &cache.h_prev);
            for (a, b) in gp.b.iter_mut().zip(&dz) {
                *a += b;
            }
            let mut dx = vec![0.0; p.input];
            matvec_t_acc(&p.w, &dz, &mut dx);
            let mut dh_prev = vec![0.0; hd];
            matvec_t_acc(&p.u, &dz, &mut dh_prev);
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub input: usize,
    pub output: usize,
    /// Row-major `output x input`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: DenseActivation,
}

impl DenseLayer {
    pub fn random(
        input: usize,
        output: usize,
        activation: DenseActivation,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        DenseLayer {
            input,
            output,
            w: uniform(rng, output * input, scale),
            b: uniform(rng, output, scale),
            activation,
        }
    }

    /// Returns `(pre-activation, activation)`.
    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = self.b.clone();
        matvec_acc(&self.w, x, &mut z);
        let y = match self.activation {
            DenseActivation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            DenseActivation::Softmax => softmax(&z),
            DenseActivation::Identity => z.clone(),
        };
        (z, y)
    }

    /// Gradient through the activation given `dy`, or `dz` directly when
    /// `dz_given` (the fused softmax/cross-entropy case).
    pub(crate) fn backward(
        &self,
        x: &[f64],
        z: &[f64],
        y: &[f64],
        dy: &[f64],
        dz_given: bool,
        grad: &mut DenseLayer,
    ) -> Vec<f64> {
        let dz: Vec<f64> = if dz_given {
            dy.to_vec()
        } else {
            match self.activation {
                DenseActivation::Relu => z
                    .iter()
                    .zip(dy)
                    .map(|(&zi, &d)| if zi > 0.0 { d } else { 0.0 })
                    .collect(),
                DenseActivation::Identity => dy.to_vec(),
                DenseActivation::Softmax => {
                    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    y.iter().zip(dy).map(|(s, d)| s * (d - dot)).collect()
                }
            }
        };
        outer_acc(&mut grad.w, &dz, x);
        for (a, b) in grad.b.iter_mut().zip(&dz) {
            *a += b;
        }
        let mut dx = vec![0.0; self.input];
        matvec_t_acc(&self.w, &dz, &mut dx);
        dx
    }
}
