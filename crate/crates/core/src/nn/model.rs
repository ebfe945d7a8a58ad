use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{ConvGeom, Gradients, ParamId, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;

/// Shape of a single input sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputShape {
    Vector { dim: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl InputShape {
    /// Number of scalars in one flattened sample.
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Vector { dim } => dim,
            InputShape::Image { channels, height, width } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer widths of a backbone + linear-head classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: InputShape,
    /// Output channels of each 3×3 conv + ReLU + 2×2 max-pool block; image
    /// inputs only.
    #[serde(default)]
    pub conv_channels: Vec<usize>,
    /// Widths of the affine + ReLU layers; the last one is the feature width.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    /// Two hidden layers of width 64 for vector data.
    pub fn mlp(input_dim: usize, num_classes: usize) -> Self {
        Architecture {
            input: InputShape::Vector { dim: input_dim },
            conv_channels: vec![],
            hidden: vec![64, 64],
            num_classes,
        }
    }

    /// Two conv blocks (4 and 8 channels) followed by the default MLP.
    pub fn small_cnn(channels: usize, height: usize, width: usize, num_classes: usize) -> Self {
        Architecture {
            input: InputShape::Image { channels, height, width },
            conv_channels: vec![4, 8],
            hidden: vec![64, 64],
            num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv { weight: ParamId, bias: ParamId, geom: ConvGeom },
    Dense { weight: ParamId, bias: ParamId },
}

/// Classifier `head ∘ backbone` with an owned parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: Vec<Tensor>,
    backbone: Vec<Layer>,
    head: Layer,
    feature_dim: usize,
}

// rows per inference chunk
const INFER_CHUNK: usize = 256;

impl Model {
    /// Builds a model with uniform fan-in initialisation `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.num_classes < 2 {
            return Err(Error::param("a classifier needs at least two classes"));
        }
        if arch.input.is_empty() {
            return Err(Error::param("empty input shape"));
        }
        if !arch.conv_channels.is_empty() && matches!(arch.input, InputShape::Vector { .. }) {
            return Err(Error::param("conv blocks need image input"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let push = |t: Tensor, params: &mut Vec<Tensor>| {
            params.push(t);
            ParamId(params.len() - 1)
        };
        let mut uniform = |shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(shape, data).expect("sized")
        };

        let mut backbone = Vec::new();
        let mut width = arch.input.len();
        if let InputShape::Image { channels, mut height, width: mut w } = arch.input {
            let mut c = channels;
            for &o in &arch.conv_channels {
                if o == 0 || height < 2 || w < 2 {
                    return Err(Error::param("conv stack does not fit the image"));
                }
                let geom = ConvGeom { in_channels: c, out_channels: o, height, width: w };
                let weight = push(uniform(vec![o, c * 9], c * 9), &mut params);
                let bias = push(uniform(vec![o], c * 9), &mut params);
                backbone.push(Layer::Conv { weight, bias, geom });
                c = o;
                height /= 2;
                w /= 2;
            }
            width = c * height * w;
        }
        for &h in &arch.hidden {
            if h == 0 {
                return Err(Error::param("zero-width hidden layer"));
            }
            let weight = push(uniform(vec![width, h], width), &mut params);
            let bias = push(uniform(vec![h], width), &mut params);
            backbone.push(Layer::Dense { weight, bias });
            width = h;
        }
        let feature_dim = width;
        let weight = push(uniform(vec![width, arch.num_classes], width), &mut params);
        let bias = push(uniform(vec![arch.num_classes], width), &mut params);
        Ok(Model { arch, params, backbone, head: Layer::Dense { weight, bias }, feature_dim })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Replaces the parameter store; shapes must match the architecture.
    pub fn load_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::dim("parameter shapes do not match the architecture"));
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, tape: &Tape, x: Var) -> Result<()> {
        let got = tape.value(x).cols();
        if got != self.input_dim() {
            return Err(Error::dim(format!("batch width {got}, model expects {}", self.input_dim())));
        }
        Ok(())
    }

    fn apply(&self, tape: &mut Tape, layer: &Layer, x: Var, relu: bool) -> Result<Var> {
        match layer {
            Layer::Conv { weight, bias, geom } => {
                let w = tape.param(*weight, &self.params[weight.0]);
                let b = tape.param(*bias, &self.params[bias.0]);
                let y = tape.conv2d(x, w, *geom)?;
                let y = tape.add_channel_bias(y, b, geom.height * geom.width)?;
                let y = tape.relu(y);
                tape.max_pool2(y, geom.out_channels, geom.height, geom.width)
            }
            Layer::Dense { weight, bias } => {
                let w = tape.param(*weight, &self.params[weight.0]);
                let b = tape.param(*bias, &self.params[bias.0]);
                let y = tape.matmul(x, w)?;
                let y = tape.add_bias(y, b)?;
                Ok(if relu { tape.relu(y) } else { y })
            }
        }
    }

    /// Backbone output (`N × feature_dim`), recorded on `tape`.
    pub fn features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.check_input(tape, x)?;
        let mut h = x;
        for layer in &self.backbone {
            h = self.apply(tape, layer, h, true)?;
        }
        Ok(h)
    }

    /// Linear head applied to backbone features.
    pub fn head(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        if tape.value(features).cols() != self.feature_dim {
            return Err(Error::dim("feature width does not match the head"));
        }
        self.apply(tape, &self.head, features, false)
    }

    /// Logits (`N × K`), recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let f = self.features(tape, x)?;
        self.head(tape, f)
    }

    /// Inference-only logits, evaluated in row chunks across the worker pool.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.infer(x, |m, tape, v| m.forward(tape, v))
    }

    /// Inference-only backbone features.
    pub fn feature_matrix(&self, x: &Tensor) -> Result<Tensor> {
        self.infer(x, |m, tape, v| m.features(tape, v))
    }

    fn infer<F>(&self, x: &Tensor, f: F) -> Result<Tensor>
    where
        F: Fn(&Model, &mut Tape, Var) -> Result<Var> + Sync + Send,
    {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(format!("batch width {}, model expects {}", x.cols(), self.input_dim())));
        }
        let n = x.rows();
        let chunks = n.div_ceil(INFER_CHUNK).max(1);
        let parts: Vec<Result<Tensor>> = par::map_range(chunks, |c| {
            let idx: Vec<usize> = (c * INFER_CHUNK..((c + 1) * INFER_CHUNK).min(n)).collect();
            let mut tape = Tape::new();
            let v = tape.constant(x.gather_rows(&idx));
            let out = f(self, &mut tape, v)?;
            Ok(tape.value(out).clone())
        });
        let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())
    }

    /// Arg-max class per row; ties resolve to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = self.logits(x)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    /// Runs the backward pass and stores each parameter's gradient.
    /// Parameters absent from the tape receive zero gradients.
    pub fn backward(&mut self, tape: &mut Tape, loss: Var) -> Result<()> {
        let grads = tape.backward(loss)?;
        self.set_grads(&grads)
    }

    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        for (i, p) in self.params.iter_mut().enumerate() {
            let g = grads.get(ParamId(i)).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
            p.set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::clear_grad);
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
