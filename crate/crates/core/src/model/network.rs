use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::layer::{Activation, LayerParams, LayerShape, LoraAdapter};

/// Dimensions of a residual LoRA stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub rank: usize,
    pub alpha: f64,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn layer_shape(&self) -> LayerShape {
        LayerShape {
            d_in: self.width,
            d_out: self.width,
            rank: self.rank,
            alpha: self.alpha,
            activation: self.activation,
        }
    }
}

/// Fixed input map, a stack of same-width residual layers
/// (`h ← h + act(W_eff·h + b)`) and a fixed linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredModel {
    input_map: Matrix,
    layers: Vec<LayerParams>,
    head: Matrix,
}

/// Intermediate values kept by [`LayeredModel::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `hidden[i]` is the input to layer `i`; the last entry feeds the head.
    pub hidden: Vec<Matrix>,
    pub pre_activations: Vec<Matrix>,
    pub effective_weights: Vec<Matrix>,
}

/// Gradient of the loss w.r.t. one layer's adapter factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad {
    pub a: Matrix,
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads(pub Vec<AdapterGrad>);

impl AdapterGrads {
    pub fn squared_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.a.as_slice().iter().chain(g.b.as_slice()))
            .map(|v| v * v)
            .sum()
    }
}

/// A batch of inputs with their regression targets (one row per sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::DimensionMismatch {
                context: "batch rows",
                expected: inputs.rows(),
                found: targets.rows(),
            });
        }
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(indices.len() * m.cols());
            for &i in indices {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(indices.len(), m.cols(), data).expect("row selection keeps shape")
        };
        Batch {
            inputs: pick(&self.inputs),
            targets: pick(&self.targets),
        }
    }
}

impl LayeredModel {
    pub fn new(input_map: Matrix, layers: Vec<LayerParams>, head: Matrix) -> Result<Self> {
        let width = input_map.rows();
        for layer in &layers {
            let s = layer.shape();
            if s.d_in != width || s.d_out != width {
                return Err(Error::DimensionMismatch {
                    context: "hidden layer width",
                    expected: width,
                    found: s.d_in.max(s.d_out),
                });
            }
        }
        if head.cols() != width {
            return Err(Error::DimensionMismatch {
                context: "head width",
                expected: width,
                found: head.cols(),
            });
        }
        Ok(LayeredModel {
            input_map,
            layers,
            head,
        })
    }

    /// I.i.d. initialisation: base entries `N(0, (gain/√width)²)`-like uniform,
    /// small biases, standard LoRA adapters.
    pub fn random(spec: &ModelSpec, gain: f64, rng: &mut impl Rng) -> Result<Self> {
        let w = spec.width;
        let bound_in = (3.0 / spec.input_dim as f64).sqrt();
        let input_map = Matrix::from_fn(w, spec.input_dim, |_, _| rng.random_range(-bound_in..bound_in));
        let bound = gain * (3.0 / w as f64).sqrt();
        let mut layers = Vec::with_capacity(spec.layers);
        for _ in 0..spec.layers {
            let weight = Matrix::from_fn(w, w, |_, _| rng.random_range(-bound..bound));
            let bias = (0..w).map(|_| rng.random_range(-0.1..0.1)).collect();
            let adapter = LoraAdapter::init(w, w, spec.rank, spec.alpha, rng)?;
            layers.push(LayerParams::new(weight, bias, adapter, spec.activation)?);
        }
        let bound_out = (3.0 / w as f64).sqrt();
        let head = Matrix::from_fn(spec.output_dim, w, |_, _| rng.random_range(-bound_out..bound_out));
        LayeredModel::new(input_map, layers, head)
    }

    pub fn input_map(&self) -> &Matrix {
        &self.input_map
    }

    pub fn head(&self) -> &Matrix {
        &self.head
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut LayerParams {
        &mut self.layers[i]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.input_map.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_map.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.head.rows()
    }

    /// Same input map and head, different layer stack.
    pub fn with_layers(&self, layers: Vec<LayerParams>) -> Result<Self> {
        LayeredModel::new(self.input_map.clone(), layers, self.head.clone())
    }

    pub fn adapters(&self) -> Vec<LoraAdapter> {
        self.layers.iter().map(|l| l.adapter().clone()).collect()
    }

    pub fn set_adapters(&mut self, adapters: &[LoraAdapter]) -> Result<()> {
        if adapters.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "set_adapters",
                expected: self.layers.len(),
                found: adapters.len(),
            });
        }
        for (layer, adapter) in self.layers.iter_mut().zip(adapters) {
            layer.set_adapter(adapter.clone())?;
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim(),
                found: inputs.cols(),
            });
        }
        let mut h = inputs.matmul_nt(&self.input_map)?;
        let mut hidden = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut effective_weights = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let w_eff = layer.effective_weight();
            let mut z = h.matmul_nt(&w_eff)?;
            let act = layer.activation();
            let mut next = h.clone();
            for r in 0..z.rows() {
                for ((zv, bv), hv) in z.row_mut(r).iter_mut().zip(layer.bias()).zip(next.row_mut(r)) {
                    *zv += bv;
                    *hv += act.apply(*zv);
                }
            }
            hidden.push(h);
            pre_activations.push(z);
            effective_weights.push(w_eff);
            h = next;
        }
        let predictions = h.matmul_nt(&self.head)?;
        hidden.push(h);
        Ok((
            predictions,
            ForwardCache {
                hidden,
                pre_activations,
                effective_weights,
            },
        ))
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        self.forward(inputs).map(|(p, _)| p)
    }

    /// Mean squared error over every output of every sample.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let pred = self.predict(&batch.inputs)?;
        mse(&pred, &batch.targets)
    }

    /// Loss and gradients for the adapters only; base tensors get none.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, AdapterGrads)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let (pred, cache) = self.forward(&batch.inputs)?;
        let loss = mse(&pred, &batch.targets)?;

        let n_out = (pred.rows() * pred.cols()) as f64;
        let mut d_pred = pred.sub(&batch.targets)?;
        d_pred.scale_in_place(2.0 / n_out);
        let mut d_h = d_pred.matmul(&self.head)?;

        let mut grads = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation();
            let z = &cache.pre_activations[i];
            let mut d_z = d_h.clone();
            for (dv, zv) in d_z.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *dv *= act.derivative(*zv);
            }
            // dL/dW_eff = dZᵀ · H_i
            let g = d_z.matmul_tn(&cache.hidden[i])?;
            let adapter = layer.adapter();
            let s = adapter.scale();
            let mut ga = adapter.b.matmul_tn(&g)?;
            ga.scale_in_place(s);
            let mut gb = g.matmul_nt(&adapter.a)?;
            gb.scale_in_place(s);
            grads[i] = Some(AdapterGrad { a: ga, b: gb });

            let back = d_z.matmul(&cache.effective_weights[i])?;
            for (dv, bv) in d_h.as_mut_slice().iter_mut().zip(back.as_slice()) {
                *dv += bv;
            }
        }
        Ok((
            loss,
            AdapterGrads(grads.into_iter().map(|g| g.expect("every layer visited")).collect()),
        ))
    }
}

fn mse(pred: &Matrix, targets: &Matrix) -> Result<f64> {
    if pred.shape() != targets.shape() {
        return Err(Error::DimensionMismatch {
            context: "targets",
            expected: pred.cols(),
            found: targets.cols(),
        });
    }
    let n = pred.as_slice().len() as f64;
    Ok(pred
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}
