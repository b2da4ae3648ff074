use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Architecture variant of the forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variation {
    /// Linear encoder and linear decoder; contrastive terms act on `z`.
    Standard,
    /// Adds a linear head `z → y` and applies contrastive terms to `y`.
    ExtraContrastiveDecoder { y_dim: usize },
    /// Identity decoder: the representation is the prediction, so `H = O`.
    NoPredictionDecoder,
    /// Encoder and decoder are each two affine layers with a ReLU between.
    TwoLayerMlp { hidden_dim: usize },
}

/// `(in, out)` width of one affine layer.
type Shape = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub rep_dim: usize,
    pub variation: Variation,
}

impl ModelConfig {
    /// Standard linear model with `H = O / 2`.
    pub fn standard(input_len: usize, horizon: usize) -> Self {
        Self {
            input_len,
            horizon,
            rep_dim: (horizon / 2).max(1),
            variation: Variation::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon == 0 || self.rep_dim == 0 {
            return Err(Error::Config(format!(
                "input_len, horizon and rep_dim must be at least 1, got {self:?}"
            )));
        }
        match self.variation {
            Variation::NoPredictionDecoder if self.rep_dim != self.horizon => {
                Err(Error::Config(format!(
                    "no-prediction-decoder requires rep_dim = horizon, got {} vs {}",
                    self.rep_dim, self.horizon
                )))
            }
            Variation::ExtraContrastiveDecoder { y_dim: 0 } => {
                Err(Error::Config("contrastive decoder needs y_dim >= 1".into()))
            }
            Variation::TwoLayerMlp { hidden_dim: 0 } => {
                Err(Error::Config("two-layer MLP needs hidden_dim >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Layer widths `(in, out)` of the two stacks, plus the contrastive head if any.
    fn layout(&self) -> (Vec<Shape>, Vec<Shape>, Option<Shape>) {
        let (i, h, o) = (self.input_len, self.rep_dim, self.horizon);
        match self.variation {
            Variation::Standard => (vec![(i, h)], vec![(h, o)], None),
            Variation::ExtraContrastiveDecoder { y_dim } => {
                (vec![(i, h)], vec![(h, o)], Some((h, y_dim)))
            }
            Variation::NoPredictionDecoder => (vec![(i, h)], vec![], None),
            Variation::TwoLayerMlp { hidden_dim } => (
                vec![(i, hidden_dim), (hidden_dim, h)],
                vec![(h, hidden_dim), (hidden_dim, o)],
                None,
            ),
        }
    }

    /// Width of the space the contrastive losses act on.
    pub fn contrastive_dim(&self) -> usize {
        match self.variation {
            Variation::ExtraContrastiveDecoder { y_dim } => y_dim,
            _ => self.rep_dim,
        }
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (i, h, o) = (self.input_len, self.rep_dim, self.horizon);
        let affine = |n_in: usize, n_out: usize| n_in * n_out + n_out;
        match self.variation {
            Variation::Standard => affine(i, h) + affine(h, o),
            Variation::ExtraContrastiveDecoder { y_dim } => {
                affine(i, h) + affine(h, o) + affine(h, y_dim)
            }
            Variation::NoPredictionDecoder => affine(i, h),
            Variation::TwoLayerMlp { hidden_dim: w } => {
                affine(i, w) + affine(w, h) + affine(h, w) + affine(w, o)
            }
        }
    }
}

pub fn parameter_count(config: &ModelConfig) -> usize {
    config.parameter_count()
}

/// `y = x·Wᵀ + b` with `W: out × in` and `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Affine {
    fn init(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let data = (0..n_in * n_out).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            weight: Matrix::from_vec(n_out, n_in, data).expect("sized above"),
            bias: Matrix::zeros(1, n_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_transposed(&self.weight)?;
        out.add_row_broadcast(self.bias.as_slice())?;
        Ok(out)
    }
}

/// Intermediate values of one stack of affine layers, kept for backprop.
#[derive(Debug, Clone)]
struct StackTrace {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

/// Applies `layers` with ReLU between consecutive layers (not after the last).
fn stack_forward(layers: &[Affine], x: &Matrix) -> Result<(Matrix, StackTrace)> {
    let mut trace = StackTrace {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut h = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        let pre = layer.forward(&h)?;
        trace.inputs.push(h);
        h = if l + 1 < layers.len() {
            pre.map(|v| v.max(0.0))
        } else {
            pre.clone()
        };
        trace.pre.push(pre);
    }
    Ok((h, trace))
}

/// Returns `∂L/∂input` and pushes `(dW, db)` per layer in forward order.
fn stack_backward(
    layers: &[Affine],
    trace: &StackTrace,
    upstream: Matrix,
    grads: &mut Vec<(Matrix, Matrix)>,
) -> Result<Matrix> {
    let mut delta = upstream;
    let mut reversed = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        if l + 1 < layers.len() {
            let pre = &trace.pre[l];
            for (d, p) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if *p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let dw = delta.transposed_matmul(&trace.inputs[l])?;
        let db = Matrix::row_vector(&delta.column_sums());
        reversed.push((dw, db));
        delta = delta.matmul(&layers[l].weight)?;
    }
    grads.extend(reversed.into_iter().rev());
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub encoder: Vec<Affine>,
    pub decoder: Vec<Affine>,
    pub head: Option<Affine>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub representations: Matrix,
    pub contrastive: Matrix,
    pub predictions: Matrix,
    encoder_trace: StackTrace,
    decoder_trace: StackTrace,
}

impl ForwardPass {
    /// Smallest `|pre-activation|` feeding a ReLU, or infinity when the
    /// model has none. Finite differences with steps well below this value
    /// never cross a kink.
    pub fn relu_margin(&self) -> f64 {
        [&self.encoder_trace, &self.decoder_trace]
            .iter()
            .flat_map(|t| t.pre.iter().take(t.pre.len().saturating_sub(1)))
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Parameter gradients in the same order as `ForecastModel::parameters`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients(pub Vec<Matrix>);

impl ModelGradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0))
    }
}

impl ForecastModel {
    /// Uniform(±1/√fan_in) weights and zero biases, drawn in parameter order.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (enc, dec, head) = config.layout();
        Ok(Self {
            config,
            encoder: enc.iter().map(|&(a, b)| Affine::init(a, b, rng)).collect(),
            decoder: dec.iter().map(|&(a, b)| Affine::init(a, b, rng)).collect(),
            head: head.map(|(a, b)| Affine::init(a, b, rng)),
        })
    }

    /// Parameter names and shapes in the canonical order used by gradients,
    /// the optimizer and checkpoints.
    pub fn manifest(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
        let (enc, dec, head) = config.layout();
        let mut out = Vec::new();
        let mut push = |prefix: String, (n_in, n_out): (usize, usize)| {
            out.push((format!("{prefix}.weight"), (n_out, n_in)));
            out.push((format!("{prefix}.bias"), (1, n_out)));
        };
        for (l, &shape) in enc.iter().enumerate() {
            push(format!("encoder.{l}"), shape);
        }
        for (l, &shape) in dec.iter().enumerate() {
            push(format!("decoder.{l}"), shape);
        }
        if let Some(shape) = head {
            push("head".into(), shape);
        }
        out
    }

    fn layers(&self) -> impl Iterator<Item = &Affine> {
        self.encoder.iter().chain(&self.decoder).chain(self.head.as_ref())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Affine> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(self.head.as_mut())
    }

    pub fn parameters(&self) -> Vec<(String, &Matrix)> {
        let names = Self::manifest(&self.config);
        let mats = self.layers().flat_map(|l| [&l.weight, &l.bias]);
        names.into_iter().map(|(n, _)| n).zip(mats).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let names = Self::manifest(&self.config);
        let mats = self.layers_mut().flat_map(|l| [&mut l.weight, &mut l.bias]);
        names.into_iter().map(|(n, _)| n).zip(mats).collect()
    }

    pub fn parameter_shapes(&self) -> Vec<(usize, usize)> {
        self.parameters().iter().map(|(_, m)| m.shape()).collect()
    }

    /// Stored element count.
    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.num_parameters();
        if flat.len() != total {
            return Err(Error::Dimension {
                op: "set_flat_parameters",
                left: (total, 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for (_, m) in self.parameters_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_width(&self, x: &Matrix, expected: usize, op: &'static str) -> Result<()> {
        if x.cols() != expected {
            return Err(Error::Dimension {
                op,
                left: x.shape(),
                right: (x.rows(), expected),
            });
        }
        Ok(())
    }

    /// `B × I` inputs to `B × H` representations.
    pub fn encode(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_width(inputs, self.config.input_len, "encode")?;
        Ok(stack_forward(&self.encoder, inputs)?.0)
    }

    /// `B × H` representations to `B × O` predictions.
    pub fn decode(&self, reps: &Matrix) -> Result<Matrix> {
        self.check_width(reps, self.config.rep_dim, "decode")?;
        Ok(stack_forward(&self.decoder, reps)?.0)
    }

    /// The vectors the contrastive losses compare.
    pub fn contrastive_view(&self, reps: &Matrix) -> Result<Matrix> {
        self.check_width(reps, self.config.rep_dim, "contrastive_view")?;
        match &self.head {
            Some(head) => head.forward(reps),
            None => Ok(reps.clone()),
        }
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        self.decode(&self.encode(inputs)?)
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<ForwardPass> {
        self.check_width(inputs, self.config.input_len, "forward")?;
        let (reps, encoder_trace) = stack_forward(&self.encoder, inputs)?;
        let (predictions, decoder_trace) = stack_forward(&self.decoder, &reps)?;
        let contrastive = self.contrastive_view(&reps)?;
        Ok(ForwardPass {
            representations: reps,
            contrastive,
            predictions,
            encoder_trace,
            decoder_trace,
        })
    }

    /// Exact parameter gradients and `∂L/∂inputs` given upstream gradients
    /// with respect to the predictions and the contrastive view.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_predictions: Option<&Matrix>,
        d_contrastive: Option<&Matrix>,
    ) -> Result<(ModelGradients, Matrix)> {
        let b = pass.representations.rows();
        let h = self.config.rep_dim;
        for (d, expected, op) in [
            (d_predictions, pass.predictions.shape(), "backward predictions"),
            (d_contrastive, pass.contrastive.shape(), "backward contrastive"),
        ] {
            if let Some(d) = d {
                if d.shape() != expected {
                    return Err(Error::Dimension { op, left: d.shape(), right: expected });
                }
            }
        }

        let mut decoder_grads = Vec::new();
        let mut d_reps = match d_predictions {
            Some(dp) => stack_backward(&self.decoder, &pass.decoder_trace, dp.clone(), &mut decoder_grads)?,
            None => {
                decoder_grads.extend(self.decoder.iter().map(|l| {
                    (Matrix::zeros(l.weight.rows(), l.weight.cols()), Matrix::zeros(1, l.bias.cols()))
                }));
                Matrix::zeros(b, h)
            }
        };

        let mut head_grads = None;
        match (&self.head, d_contrastive) {
            (Some(head), Some(dy)) => {
                let dw = dy.transposed_matmul(&pass.representations)?;
                let db = Matrix::row_vector(&dy.column_sums());
                d_reps.add_assign(&dy.matmul(&head.weight)?)?;
                head_grads = Some((dw, db));
            }
            (Some(head), None) => {
                head_grads = Some((
                    Matrix::zeros(head.weight.rows(), head.weight.cols()),
                    Matrix::zeros(1, head.bias.cols()),
                ));
            }
            (None, Some(dy)) => d_reps.add_assign(dy)?,
            (None, None) => {}
        }

        let mut encoder_grads = Vec::new();
        let d_inputs = stack_backward(&self.encoder, &pass.encoder_trace, d_reps, &mut encoder_grads)?;

        let grads = encoder_grads
            .into_iter()
            .chain(decoder_grads)
            .chain(head_grads)
            .flat_map(|(w, b)| [w, b])
            .collect();
        Ok((ModelGradients(grads), d_inputs))
    }

    /// Applies the shared univariate model to every column of an `I × D`
    /// window, returning `O × D` predictions.
    pub fn forecast_channels(&self, window: &Matrix) -> Result<Matrix> {
        if window.rows() != self.config.input_len {
            return Err(Error::Dimension {
                op: "forecast_channels",
                left: window.shape(),
                right: (self.config.input_len, window.cols()),
            });
        }
        Ok(self.predict(&window.transpose())?.transpose())
    }
}
