//! A small neural-network engine for pose regression: 2-D convolution, 2x2
//! max pooling, ReLU, flatten, and dense layers over f64 buffers, trained
//! with Adam. The output head is `(x_e, x_n, sin gamma, cos gamma)` with
//! positions in scaled scene units.

mod layers;
pub mod presets;
pub mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use layers::ConvDims;

pub use train::{adam_step, pose_loss, train, AdamState, EpochStats, Model, TrainConfig, TrainingSet};

/// Outputs of the regression head.
pub const HEAD_SIZE: usize = 4;

pub const DEFAULT_KERNEL: usize = 4;

fn default_kernel() -> usize {
    DEFAULT_KERNEL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; each spatial axis shrinks by `kernel - 1`.
    #[default]
    Valid,
    /// Zero padding that preserves spatial size; the extra row and column
    /// of an even kernel go at the bottom and right.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default)]
        padding: Padding,
    },
    MaxPool,
    Relu,
    Flatten,
    Dense {
        nodes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Image { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image { channels, height, width } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Network architecture: an input shape `[channels, height, width]` and an
/// ordered layer list ending in a 4-node dense head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerPlan {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub param_offset: usize,
    pub param_len: usize,
    /// Fan-in for initialization; 0 for parameter-free layers.
    pub fan_in: usize,
    conv: Option<ConvDims>,
}

impl NetworkSpec {
    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Resolves every layer's shapes and parameter slice, rejecting specs
    /// whose layers do not chain or whose output is not the 4-value head.
    pub(crate) fn plan(&self) -> Result<Vec<LayerPlan>> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("{}: empty input shape {:?}", self.name, self.input_shape)));
        }
        let mut shape = Shape::Image { channels: c, height: h, width: w };
        let mut offset = 0;
        let mut plans = Vec::with_capacity(self.layers.len());
        for (i, &spec) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Shape(format!("{} layer {i} ({spec:?}): {msg}", self.name));
            let (output, param_len, fan_in, conv) = match (spec, shape) {
                (LayerSpec::Conv2d { filters, kernel, padding }, Shape::Image { channels, height, width }) => {
                    if filters == 0 || kernel == 0 {
                        return Err(err("filters and kernel must be non-zero".into()));
                    }
                    let (pad_top, pad_left, oh, ow) = match padding {
                        Padding::Valid => {
                            if height < kernel || width < kernel {
                                return Err(err(format!("input {height}x{width} smaller than kernel")));
                            }
                            (0, 0, height - kernel + 1, width - kernel + 1)
                        }
                        Padding::Same => ((kernel - 1) / 2, (kernel - 1) / 2, height, width),
                    };
                    let dims = ConvDims {
                        channels,
                        height,
                        width,
                        filters,
                        kernel,
                        pad_top,
                        pad_left,
                        out_height: oh,
                        out_width: ow,
                    };
                    let out = Shape::Image { channels: filters, height: oh, width: ow };
                    (out, dims.weight_len() + filters, channels * kernel * kernel, Some(dims))
                }
                (LayerSpec::MaxPool, Shape::Image { channels, height, width }) => {
                    if height < 2 || width < 2 {
                        return Err(err(format!("input {height}x{width} too small to pool")));
                    }
                    (Shape::Image { channels, height: height / 2, width: width / 2 }, 0, 0, None)
                }
                (LayerSpec::Relu, s) => (s, 0, 0, None),
                (LayerSpec::Flatten, s) => (Shape::Flat(s.len()), 0, 0, None),
                (LayerSpec::Dense { nodes }, Shape::Flat(n)) => {
                    if nodes == 0 {
                        return Err(err("dense layer needs nodes".into()));
                    }
                    (Shape::Flat(nodes), n * nodes + nodes, n, None)
                }
                (_, s) => return Err(err(format!("cannot follow shape {s:?}"))),
            };
            plans.push(LayerPlan {
                spec,
                input: shape,
                output,
                param_offset: offset,
                param_len,
                fan_in,
                conv,
            });
            offset += param_len;
            shape = output;
        }
        if shape != Shape::Flat(HEAD_SIZE) {
            return Err(Error::Shape(format!(
                "{}: network ends in {shape:?}, expected a {HEAD_SIZE}-value head",
                self.name
            )));
        }
        Ok(plans)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.plan()?.iter().map(|p| p.param_len).sum())
    }

    /// Same architecture with a different input channel count.
    pub fn with_channels(&self, channels: usize) -> Self {
        let mut spec = self.clone();
        spec.input_shape[0] = channels;
        spec
    }
}

/// Architecture plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
    plan: Vec<LayerPlan>,
}

impl Network {
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let plan = spec.plan()?;
        let n = plan.iter().map(|p| p.param_len).sum();
        Ok(Self {
            spec,
            params: vec![0.0; n],
            plan,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} expects {} parameters, got {}",
                net.spec.name,
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    /// He-uniform weights, zero biases.
    pub fn init_he_uniform<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) {
        for p in &self.plan {
            if p.param_len == 0 {
                continue;
            }
            let bias_len = match p.output {
                Shape::Image { channels, .. } => channels,
                Shape::Flat(n) => n,
            };
            let limit = (6.0 / p.fan_in as f64).sqrt();
            let slice = &mut self.params[p.param_offset..p.param_offset + p.param_len];
            let (w, b) = slice.split_at_mut(p.param_len - bias_len);
            w.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
            b.fill(0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "{} expects input {:?} ({} values), got {}",
                self.spec.name,
                self.spec.input_shape,
                self.spec.input_len(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<[f64; HEAD_SIZE]> {
        let trace = self.forward_batch(&[input])?;
        let out = trace.last().expect("at least the input");
        Ok([out[(0, 0)], out[(0, 1)], out[(0, 2)], out[(0, 3)]])
    }

    /// Activations of one sample after every layer; element 0 is the input itself.
    pub fn forward_trace(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward_batch(&[input])?
            .into_iter()
            .map(|a| a.into_raw_vec_and_offset().0)
            .collect())
    }

    /// Batched activations after every layer, each `(batch, features)`;
    /// element 0 holds the inputs.
    pub fn forward_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Array2<f64>>> {
        let mut x = Array2::zeros((inputs.len(), self.spec.input_len()));
        for (mut row, input) in x.outer_iter_mut().zip(inputs) {
            self.check_input(input)?;
            row.as_slice_mut().expect("contiguous").copy_from_slice(input);
        }
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.plan.len() + 1);
        acts.push(x);
        for p in &self.plan {
            let x = acts.last().expect("non-empty").view();
            let params = &self.params[p.param_offset..p.param_offset + p.param_len];
            let out = match (p.spec, p.input) {
                (LayerSpec::Conv2d { .. }, _) => layers::conv_forward(p.conv.as_ref().expect("planned"), params, x),
                (LayerSpec::MaxPool, Shape::Image { channels, height, width }) => {
                    layers::maxpool_forward(channels, height, width, x)
                }
                (LayerSpec::Relu, _) => x.mapv(|v| v.max(0.0)),
                (LayerSpec::Flatten, _) => x.to_owned(),
                (LayerSpec::Dense { nodes }, Shape::Flat(n)) => layers::dense_forward(n, nodes, params, x),
                _ => unreachable!("plan validated"),
            };
            acts.push(out);
        }
        Ok(acts)
    }

    /// Backpropagates `grad_output` (gradient of the loss w.r.t. the head)
    /// through a single-sample trace from [`Network::forward_trace`], adding
    /// parameter gradients into `grads`. Returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &[Vec<f64>], grad_output: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let trace: Vec<Array2<f64>> = trace
            .iter()
            .map(|a| Array2::from_shape_vec((1, a.len()), a.clone()).expect("row"))
            .collect();
        let g = Array2::from_shape_vec((1, grad_output.len()), grad_output.to_vec()).expect("row");
        let gi = self.backward_batch(&trace, g, grads, true).expect("requested");
        gi.into_raw_vec_and_offset().0
    }

    /// Batched backward pass; `grad_output` is `(batch, 4)`. Parameter
    /// gradients are summed over the batch into `grads`.
    pub fn backward_batch(
        &self,
        trace: &[Array2<f64>],
        grad_output: Array2<f64>,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        assert_eq!(trace.len(), self.plan.len() + 1, "trace does not match network");
        assert_eq!(grads.len(), self.params.len());
        let mut g = grad_output;
        for (li, p) in self.plan.iter().enumerate().rev() {
            let x = trace[li].view();
            let y = &trace[li + 1];
            let need_in = want_input_grad || li > 0;
            let params = &self.params[p.param_offset..p.param_offset + p.param_len];
            let pg = &mut grads[p.param_offset..p.param_offset + p.param_len];
            let gi = match (p.spec, p.input) {
                (LayerSpec::Conv2d { .. }, _) => {
                    layers::conv_backward(p.conv.as_ref().expect("planned"), params, x, g.view(), pg, need_in)
                }
                (LayerSpec::MaxPool, Shape::Image { channels, height, width }) => {
                    need_in.then(|| layers::maxpool_backward(channels, height, width, x, g.view()))
                }
                (LayerSpec::Relu, _) => need_in.then(|| {
                    let mut gi = g.clone();
                    gi.zip_mut_with(y, |t, &out| {
                        if out <= 0.0 {
                            *t = 0.0
                        }
                    });
                    gi
                }),
                (LayerSpec::Flatten, _) => need_in.then(|| g.clone()),
                (LayerSpec::Dense { nodes }, Shape::Flat(n)) => {
                    layers::dense_backward(n, nodes, params, x, g.view(), pg, need_in)
                }
                _ => unreachable!("plan validated"),
            };
            match gi {
                Some(gi) => g = gi,
                None => return None,
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests;
