//! Small fully connected networks with hand-written backpropagation, Adam
//! and Polyak averaging.
//!
//! Parameters live in one flat `f64` vector, layer by layer: the weight
//! matrix (`fan_in × fan_out`, row-major) followed by the bias.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("architectures differ: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Identity,
}

/// Multi-layer perceptron with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Intermediates of a batched forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself first).
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

const CHECKPOINT_FORMAT: &str = "talrace-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        Self {
            sizes: sizes.to_vec(),
            output,
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Weights and biases uniform in ±1/sqrt(fan_in).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, output);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let count = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + count] {
                *p = rng.gen_range(-bound..bound);
            }
            off += count;
        }
        net
    }

    pub fn from_params(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self, NeuralError> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NeuralError::SizeMismatch {
                expected,
                got: params.len(),
            });
        }
        let mut net = Self::zeros(sizes, output);
        net.params = params;
        Ok(net)
    }

    /// Checks that the parameter count matches the layer sizes (useful after
    /// deserializing).
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(NeuralError::Checkpoint(format!("invalid layer sizes {:?}", self.sizes)));
        }
        let expected = param_count(&self.sizes);
        if self.params.len() != expected {
            return Err(NeuralError::SizeMismatch {
                expected,
                got: self.params.len(),
            });
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Weight matrix and bias of `layer`.
    pub fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).expect("layout");
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn activate(&self, layer: usize, z: &mut Array2<f64>) {
        if layer + 1 < self.layers() {
            z.mapv_inplace(|v| v.max(0.0));
        } else if self.output == OutputActivation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    fn check_batch(&self, x: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.input_size() {
            return Err(NeuralError::SizeMismatch {
                expected: self.input_size(),
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_batch(&x)?;
        let mut h = x.to_owned();
        for l in 0..self.layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w) + &b;
            self.activate(l, &mut z);
            h = z;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, NeuralError> {
        self.check_batch(&x)?;
        let mut inputs = Vec::with_capacity(self.layers());
        let mut h = x.to_owned();
        for l in 0..self.layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w) + &b;
            self.activate(l, &mut z);
            inputs.push(h);
            h = z;
        }
        Ok(ForwardCache { inputs, output: h })
    }

    /// Gradients of `Σ output ⊙ grad_output` with respect to the flat
    /// parameters and to the input batch.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
        assert_eq!(grad_output.dim(), cache.output.dim(), "output gradient shape");
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_output.to_owned();
        if self.output == OutputActivation::Tanh {
            delta.zip_mut_with(&cache.output, |d, &y| *d *= 1.0 - y * y);
        }
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let input = &cache.inputs[l];
            let (gw, gb) = grads[off..off + i * o + o].split_at_mut(i * o);
            let mut gw = ArrayViewMut2::from_shape((i, o), gw).expect("layout");
            gw.assign(&input.t().dot(&delta));
            ArrayViewMut1::from(gb).assign(&delta.sum_axis(Axis(0)));
            let (w, _) = self.layer(l);
            let mut prev = delta.dot(&w.t());
            if l > 0 {
                // the layer input is a ReLU output: zero exactly where inactive
                prev.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            delta = prev;
        }
        (grads, delta)
    }

    /// `self ← (1 − τ)·self + τ·model`.
    pub fn soft_update(&mut self, model: &Mlp, tau: f64) -> Result<(), NeuralError> {
        if self.sizes != model.sizes {
            return Err(NeuralError::ArchitectureMismatch(self.sizes.clone(), model.sizes.clone()));
        }
        for (t, m) in self.params.iter_mut().zip(&model.params) {
            *t = (1.0 - tau) * *t + tau * m;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            sizes: self.sizes.clone(),
            output: self.output,
            params: self.params.clone(),
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        if ck.sizes.len() < 2 || ck.sizes.contains(&0) {
            return Err(NeuralError::Checkpoint(format!("invalid layer sizes {:?}", ck.sizes)));
        }
        Self::from_params(&ck.sizes, ck.output, ck.params)
    }

    /// Loads a checkpoint and insists on the given architecture.
    pub fn from_json_expecting(text: &str, sizes: &[usize]) -> Result<Self, NeuralError> {
        let net = Self::from_json(text)?;
        if net.sizes != sizes {
            return Err(NeuralError::ArchitectureMismatch(net.sizes, sizes.to_vec()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Adam optimiser state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates skipped because of non-finite gradients.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            skipped: 0,
        }
    }

    /// One bias-corrected Adam step. Returns `false` (and changes nothing
    /// but the skip counter) if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<bool, NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::SizeMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return Ok(false);
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(true)
    }
}

/// Row vector view helper for single samples.
pub fn row(values: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, values.len()), values).expect("row vector")
}

/// Stacks equally sized rows into a matrix.
pub fn stack_rows(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&Array1::from(r.to_vec()));
    }
    out
}
