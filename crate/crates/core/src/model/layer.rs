use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseVector, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Trainable low-rank factors: the effective delta is `(alpha / r) · B · A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    /// `r × d_in`
    pub a: Matrix,
    /// `d_out × r`
    pub b: Matrix,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn new(a: Matrix, b: Matrix, alpha: f64) -> Result<Self> {
        let r = a.rows();
        if b.cols() != r {
            return Err(Error::DimensionMismatch {
                context: "LoraAdapter rank",
                expected: r,
                found: b.cols(),
            });
        }
        if r == 0 || r > a.cols().min(b.rows()) {
            return Err(Error::DimensionMismatch {
                context: "LoraAdapter rank bound",
                expected: a.cols().min(b.rows()),
                found: r,
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonFinite("adapter alpha"));
        }
        Ok(LoraAdapter { a, b, alpha })
    }

    /// Standard LoRA start: `A ~ U(-1/√d_in, 1/√d_in)`, `B = 0`.
    pub fn init(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let a = Matrix::from_fn(rank, d_in, |_, _| rng.random_range(-bound..bound));
        LoraAdapter::new(a, Matrix::zeros(d_out, rank), alpha)
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn param_count(&self) -> usize {
        self.a.as_slice().len() + self.b.as_slice().len()
    }

    pub fn same_shape(&self, other: &LoraAdapter) -> bool {
        self.a.shape() == other.a.shape() && self.b.shape() == other.b.shape()
    }
}

/// Everything needed to rebuild a layer from its flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub d_in: usize,
    pub d_out: usize,
    pub rank: usize,
    pub alpha: f64,
    pub activation: Activation,
}

impl LayerShape {
    pub fn flat_len(&self) -> usize {
        self.d_out * self.d_in + self.d_out + self.rank * self.d_in + self.d_out * self.rank
    }

    pub fn adapter_params(&self) -> usize {
        self.rank * self.d_in + self.d_out * self.rank
    }

    /// Offset of the adapter segment inside a flattened layer vector.
    pub fn adapter_offset(&self) -> usize {
        self.d_out * self.d_in + self.d_out
    }
}

/// Frozen base weight and bias plus a trainable adapter.
///
/// The base is only reachable through shared references, so training code
/// cannot modify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    weight: Matrix,
    bias: Vec<f64>,
    adapter: LoraAdapter,
    activation: Activation,
}

impl LayerParams {
    pub fn new(weight: Matrix, bias: Vec<f64>, adapter: LoraAdapter, activation: Activation) -> Result<Self> {
        let (d_out, d_in) = weight.shape();
        if bias.len() != d_out {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: d_out,
                found: bias.len(),
            });
        }
        if adapter.a.cols() != d_in || adapter.b.rows() != d_out {
            return Err(Error::DimensionMismatch {
                context: "layer adapter",
                expected: d_in * d_out,
                found: adapter.a.cols() * adapter.b.rows(),
            });
        }
        Ok(LayerParams {
            weight,
            bias,
            adapter,
            activation,
        })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn adapter(&self) -> &LoraAdapter {
        &self.adapter
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_adapter(&mut self, adapter: LoraAdapter) -> Result<()> {
        if !self.adapter.same_shape(&adapter) {
            return Err(Error::DimensionMismatch {
                context: "set_adapter",
                expected: self.adapter.param_count(),
                found: adapter.param_count(),
            });
        }
        self.adapter = adapter;
        Ok(())
    }

    pub(crate) fn adapter_mut(&mut self) -> &mut LoraAdapter {
        &mut self.adapter
    }

    pub fn shape(&self) -> LayerShape {
        LayerShape {
            d_in: self.weight.cols(),
            d_out: self.weight.rows(),
            rank: self.adapter.rank(),
            alpha: self.adapter.alpha,
            activation: self.activation,
        }
    }

    /// `W + (α/r)·B·A`.
    pub fn effective_weight(&self) -> Matrix {
        let mut w = self.weight.clone();
        let s = self.adapter.scale();
        let (a, b) = (&self.adapter.a, &self.adapter.b);
        for i in 0..w.rows() {
            for k in 0..a.rows() {
                let bik = b[(i, k)];
                if bik == 0.0 {
                    continue;
                }
                let coeff = s * bik;
                for (wij, akj) in w.row_mut(i).iter_mut().zip(a.row(k)) {
                    *wij += coeff * akj;
                }
            }
        }
        w
    }

    /// Concatenates `vec(W)`, `b`, `vec(A)`, `vec(B)`, all row-major.
    pub fn flatten(&self) -> Result<DenseVector> {
        let mut v = Vec::with_capacity(self.shape().flat_len());
        v.extend_from_slice(self.weight.as_slice());
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(self.adapter.a.as_slice());
        v.extend_from_slice(self.adapter.b.as_slice());
        DenseVector::new(v)
    }

    /// Inverse of [`LayerParams::flatten`].
    pub fn unflatten(v: &DenseVector, shape: &LayerShape) -> Result<Self> {
        if v.len() != shape.flat_len() {
            return Err(Error::DimensionMismatch {
                context: "unflatten_layer",
                expected: shape.flat_len(),
                found: v.len(),
            });
        }
        let s = v.as_slice();
        let LayerShape { d_in, d_out, rank, .. } = *shape;
        let (w, rest) = s.split_at(d_out * d_in);
        let (b, rest) = rest.split_at(d_out);
        let (a, lb) = rest.split_at(rank * d_in);
        let adapter = LoraAdapter::new(
            Matrix::from_vec(rank, d_in, a.to_vec())?,
            Matrix::from_vec(d_out, rank, lb.to_vec())?,
            shape.alpha,
        )?;
        LayerParams::new(
            Matrix::from_vec(d_out, d_in, w.to_vec())?,
            b.to_vec(),
            adapter,
            shape.activation,
        )
    }
}

/// Free-function form of [`LayerParams::flatten`].
pub fn flatten_layer(layer: &LayerParams) -> Result<DenseVector> {
    layer.flatten()
}

/// Free-function form of [`LayerParams::unflatten`].
pub fn unflatten_layer(v: &DenseVector, shape: &LayerShape) -> Result<LayerParams> {
    LayerParams::unflatten(v, shape)
}
