use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::network::{AdapterGrads, LayeredModel};

/// AdamW hyperparameters. The learning rate is supplied per step so that
/// schedules live outside the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m_a: Matrix,
    v_a: Matrix,
    m_b: Matrix,
    v_b: Matrix,
}

/// First/second moment accumulators mirroring every adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: AdamW,
    step: u64,
    moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamW, model: &LayeredModel) -> Self {
        let moments = model
            .layers()
            .iter()
            .map(|l| {
                let (a, b) = (&l.adapter().a, &l.adapter().b);
                Moments {
                    m_a: Matrix::zeros(a.rows(), a.cols()),
                    v_a: Matrix::zeros(a.rows(), a.cols()),
                    m_b: Matrix::zeros(b.rows(), b.cols()),
                    v_b: Matrix::zeros(b.rows(), b.cols()),
                }
            })
            .collect();
        OptimizerState {
            config,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One decoupled-weight-decay Adam update of every adapter in `model`.
    pub fn step(&mut self, model: &mut LayeredModel, grads: &AdapterGrads, lr: f64) -> Result<()> {
        if grads.0.len() != self.moments.len() || model.depth() != self.moments.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer layers",
                expected: self.moments.len(),
                found: grads.0.len(),
            });
        }
        for (g, m) in grads.0.iter().zip(&self.moments) {
            if g.a.shape() != m.m_a.shape() || g.b.shape() != m.m_b.shape() {
                return Err(Error::DimensionMismatch {
                    context: "optimizer gradient shape",
                    expected: m.m_a.as_slice().len() + m.m_b.as_slice().len(),
                    found: g.a.as_slice().len() + g.b.as_slice().len(),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * c.weight_decay * p[i];
                p[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        };
        for (i, (g, mom)) in grads.0.iter().zip(self.moments.iter_mut()).enumerate() {
            let adapter = model.layer_mut(i).adapter_mut();
            update(
                adapter.a.as_mut_slice(),
                g.a.as_slice(),
                mom.m_a.as_mut_slice(),
                mom.v_a.as_mut_slice(),
            );
            update(
                adapter.b.as_mut_slice(),
                g.b.as_slice(),
                mom.m_b.as_mut_slice(),
                mom.v_b.as_mut_slice(),
            );
        }
        Ok(())
    }
}
