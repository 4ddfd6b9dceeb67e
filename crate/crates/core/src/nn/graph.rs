use rand::Rng as _;

use super::layer::{Cache, Layer, LayerKind, LayerSpec, RunningStats};
use super::tensor::Tensor4;
use super::Mode;
use crate::rng::{rng_for, Rng};
use crate::{Error, Result};

/// A named trainable (or frozen) array.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
    /// Excluded from weight decay (biases, batch-norm scale and shift).
    pub decay_exempt: bool,
}

impl Parameter {
    fn new(name: String, shape: Vec<usize>, value: Vec<f64>, decay_exempt: bool) -> Self {
        let grad = vec![0.0; value.len()];
        Parameter { name, shape, value, grad, trainable: true, decay_exempt }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// An ordered layer pipeline with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub layers: Vec<Layer>,
    pub params: Vec<Parameter>,
    /// `(maps, height, width)` of one input sample.
    pub input_shape: [usize; 3],
    pub mode: Mode,
    /// Test hook: corrupts the backward pass of every layer of this kind.
    pub fault: Option<LayerKind>,
}

/// Everything a recorded forward pass leaves behind for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Tensor4>,
    caches: Vec<Cache>,
    output: Tensor4,
    mode: Mode,
}

impl Tape {
    pub fn output(&self) -> &Tensor4 {
        &self.output
    }

    /// The input fed to layer `i`.
    pub fn layer_input(&self, i: usize) -> &Tensor4 {
        &self.inputs[i]
    }
}

impl ModelGraph {
    pub fn output_shape(&self) -> [usize; 3] {
        self.layers.last().map_or(self.input_shape, |l| l.out_shape)
    }

    pub fn n_outputs(&self) -> usize {
        let [c, h, w] = self.output_shape();
        c * h * w
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of parameter entries (trainable or not).
    pub fn n_weights(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn n_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(Parameter::len).sum()
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let p = self.param_mut(name).ok_or_else(|| Error::param(format!("no parameter named {name:?}")))?;
        p.trainable = trainable;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let [_, c, h, w] = x.shape();
        if [c, h, w] != self.input_shape {
            return Err(Error::shape(format!(
                "input sample shape {:?} does not match model input {:?}",
                [c, h, w],
                self.input_shape
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numerical("non-finite value in model input".into()));
        }
        Ok(())
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward(&self, x: &Tensor4, mode: Mode, dropout_seed: u64) -> Result<Tape> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(&self.params, &cur, mode, dropout_seed, i);
            inputs.push(cur);
            caches.push(cache);
            cur = out;
        }
        if !cur.is_finite() {
            return Err(Error::Numerical("non-finite model output".into()));
        }
        Ok(Tape { inputs, caches, output: cur, mode })
    }

    /// Forward pass in the graph's current mode with dropout seed 0.
    pub fn run(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward(x, self.mode, 0)?.output)
    }

    /// Eval-mode forward without keeping intermediates.
    pub fn predict(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&self.params, &cur, Mode::Eval, 0, i).0;
        }
        if !cur.is_finite() {
            return Err(Error::Numerical("non-finite model output".into()));
        }
        Ok(cur)
    }

    /// Back-propagates `grad_output` through the recorded pass, overwriting
    /// the gradients of trainable parameters. Frozen gradients stay zero.
    pub fn backward(&mut self, tape: &Tape, grad_output: &Tensor4) {
        self.zero_grads();
        let mut g = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gx = layer.backward(&mut self.params, &tape.caches[i], &tape.inputs[i], &g, i > 0);
            match gx {
                Some(mut gx) => {
                    if self.fault == Some(layer.spec.kind()) {
                        gx.data_mut().iter_mut().for_each(|v| *v *= 1.5);
                    }
                    g = gx;
                }
                None => break,
            }
        }
    }

    /// Applies the batch statistics of a train-mode pass to running averages.
    pub fn commit_running_stats(&mut self, tape: &Tape) {
        if tape.mode != Mode::Train {
            return;
        }
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            layer.update_running(cache);
        }
    }
}

/// Builds a [`ModelGraph`] layer by layer, propagating shapes symbolically and
/// initializing parameters (Glorot-uniform weights, zero biases, unit
/// batch-norm scale).
pub struct GraphBuilder {
    layers: Vec<Layer>,
    params: Vec<Parameter>,
    input_shape: [usize; 3],
    shape: [usize; 3],
    rng: Rng,
}

pub(crate) fn glorot(rng: &mut Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl GraphBuilder {
    pub fn new(input_shape: [usize; 3], init_seed: u64) -> Self {
        GraphBuilder {
            layers: Vec::new(),
            params: Vec::new(),
            input_shape,
            shape: input_shape,
            rng: rng_for(init_seed, "init", 0),
        }
    }

    pub fn current_shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Appends a layer. A layer's main weight is named after the layer; other
    /// parameters are `<layer>.<bias|gamma|beta>`.
    pub fn push(&mut self, name: &str, spec: LayerSpec) -> Result<&mut Self> {
        if self.input_shape.contains(&0) {
            return Err(Error::shape("input dimensions must be >= 1"));
        }
        let out = spec.output_shape(self.shape).map_err(|e| Error::shape(format!("layer {name:?}: {e}")))?;
        if out.contains(&0) {
            return Err(Error::shape(format!("layer {name:?} produces an empty output {out:?}")));
        }
        let mut indices = Vec::new();
        for (suffix, shape) in spec.param_shapes(self.shape) {
            let n: usize = shape.iter().product();
            let (value, exempt) = match (suffix, &spec) {
                ("weight", LayerSpec::Conv2d { .. }) => {
                    let receptive = shape[2] * shape[3];
                    (glorot(&mut self.rng, n, shape[1] * receptive, shape[0] * receptive), false)
                }
                ("weight", _) => (glorot(&mut self.rng, n, shape[1], shape[0]), false),
                ("gamma", _) => (vec![1.0; n], true),
                _ => (vec![0.0; n], true),
            };
            let pname = if suffix == "weight" { name.to_string() } else { format!("{name}.{suffix}") };
            if self.params.iter().any(|p| p.name == pname) {
                return Err(Error::shape(format!("duplicate parameter name {pname:?}")));
            }
            indices.push(self.params.len());
            self.params.push(Parameter::new(pname, shape, value, exempt));
        }
        let running = matches!(spec, LayerSpec::BatchNorm)
            .then(|| RunningStats { mean: vec![0.0; self.shape[0]], var: vec![1.0; self.shape[0]] });
        self.layers.push(Layer {
            name: name.to_string(),
            spec,
            in_shape: self.shape,
            out_shape: out,
            params: indices,
            running,
        });
        self.shape = out;
        Ok(self)
    }

    pub fn build(self) -> ModelGraph {
        ModelGraph {
            layers: self.layers,
            params: self.params,
            input_shape: self.input_shape,
            mode: Mode::Train,
            fault: None,
        }
    }
}
