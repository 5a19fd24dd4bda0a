use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::federation::Client;
use crate::model::{Batch, LayerParams, LayeredModel, ModelSpec};
use crate::numerics::Matrix;
use crate::seeds::{rng_for, stream};

/// Base weights are uniform in `±BASE_GAIN·sqrt(3/width)`. Small values keep
/// every residual update small, as in a trained deep residual stack, so a
/// shallow fused submodel stays close to the full model.
const BASE_GAIN: f64 = 0.02;
const BIAS_SCALE: f64 = 0.1;
/// Depth profiles shared by neighbouring layers of the base model.
const PROTOTYPES: usize = 3;
const PROTOTYPE_SPREAD: f64 = 0.25;
const LAYER_NOISE: f64 = 0.3;
/// Spread of the mixture component means.
const MEAN_SCALE: f64 = 1.5;

/// Hidden regression teacher plus the pretrained student it departs from.
///
/// The base ("pretrained") weights vary smoothly with depth, so adjacent
/// layers resemble each other. The teacher equals the base plus a planted
/// low-rank change in every hidden weight, which the adapters can represent.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTask {
    pub base: LayeredModel,
    pub teacher: LayeredModel,
    pub means: Vec<Vec<f64>>,
    pub noise: f64,
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

fn with_weight(layer: &LayerParams, weight: Matrix) -> Result<LayerParams> {
    LayerParams::new(
        weight,
        layer.bias().to_vec(),
        layer.adapter().clone(),
        layer.activation(),
    )
}

impl TeacherTask {
    pub fn new(spec: &ModelSpec, teacher_shift: f64, components: usize, noise: f64, seed: u64) -> Result<Self> {
        if components == 0 {
            return Err(Error::config("data.components", "must be positive"));
        }
        let w = spec.width;
        let l = spec.layers;
        let bound = BASE_GAIN * (3.0 / w as f64).sqrt();

        let mut rng = rng_for(seed, &[stream::MODEL]);
        let scaffold = LayeredModel::random(spec, BASE_GAIN, &mut rng)?;
        let protos: Vec<Matrix> = (0..PROTOTYPES).map(|_| uniform_matrix(w, w, bound, &mut rng)).collect();
        let mut base_layers = Vec::with_capacity(l);
        for (i, layer) in scaffold.layers().iter().enumerate() {
            let t = if l > 1 { i as f64 / (l - 1) as f64 } else { 0.0 };
            let mix: Vec<f64> = (0..PROTOTYPES)
                .map(|k| {
                    let c = k as f64 / (PROTOTYPES - 1) as f64;
                    (-(t - c).powi(2) / (2.0 * PROTOTYPE_SPREAD * PROTOTYPE_SPREAD)).exp()
                })
                .collect();
            let norm = mix.iter().map(|c| c * c).sum::<f64>().sqrt();
            let own = uniform_matrix(w, w, bound, &mut rng);
            let weight = Matrix::from_fn(w, w, |r, c| {
                mix.iter().zip(&protos).map(|(m, p)| m / norm * p[(r, c)]).sum::<f64>() + LAYER_NOISE * own[(r, c)]
            });
            let bias: Vec<f64> = layer.bias().iter().map(|b| b * BIAS_SCALE).collect();
            base_layers.push(LayerParams::new(
                weight,
                bias,
                layer.adapter().clone(),
                layer.activation(),
            )?);
        }
        let base = scaffold.with_layers(base_layers)?;

        let mut rng = rng_for(seed, &[stream::TEACHER]);
        let rank = spec.rank.min(w).max(1);
        let shared_rank = rank.div_ceil(2);
        let u = uniform_matrix(w, shared_rank, 1.0, &mut rng);
        let v = uniform_matrix(shared_rank, w, 1.0, &mut rng);
        let shared = u.matmul(&v)?;
        let scale = teacher_shift * (3.0 / w as f64).sqrt() / (shared_rank as f64).sqrt();
        let mut teacher_layers = Vec::with_capacity(l);
        for (i, layer) in base.layers().iter().enumerate() {
            let t = if l > 1 { i as f64 / (l - 1) as f64 } else { 0.0 };
            let profile = 1.0 + 0.5 * (std::f64::consts::PI * t).cos();
            let ui = uniform_matrix(w, 1, 1.0, &mut rng);
            let vi = uniform_matrix(1, w, 1.0, &mut rng);
            let own = ui.matmul(&vi)?;
            let weight = Matrix::from_fn(w, w, |r, c| {
                layer.weight()[(r, c)] + scale * (profile * shared[(r, c)] + 0.5 * own[(r, c)])
            });
            teacher_layers.push(with_weight(layer, weight)?);
        }
        let teacher = base.with_layers(teacher_layers)?;

        let means = (0..components)
            .map(|_| {
                (0..spec.input_dim)
                    .map(|_| MEAN_SCALE * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Ok(TeacherTask {
            base,
            teacher,
            means,
            noise,
        })
    }
}

/// Symmetric Dirichlet draw through normalised Gamma variates. For very
/// small concentrations every Gamma sample can underflow to zero; the mass
/// then goes to one uniformly chosen component, the distribution's limit.
fn dirichlet(k: usize, concentration: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::config("data.skew", e.to_string()))?;
    let mut g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = g.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        g.iter_mut().for_each(|x| *x /= sum);
    } else {
        g = vec![0.0; k];
        g[rng.random_range(0..k)] = 1.0;
    }
    Ok(g)
}

/// Non-IID clients: each draws mixture weights from `Dirichlet(skew)`, then
/// samples inputs from the task's Gaussian mixture and labels them with the
/// teacher plus Gaussian noise.
pub fn generate_clients(task: &TeacherTask, n: usize, samples: usize, skew: f64, seed: u64) -> Result<Vec<Client>> {
    if n == 0 {
        return Err(Error::NoClients);
    }
    if samples == 0 {
        return Err(Error::config("data.samples_per_client", "must be positive"));
    }
    if !(skew.is_finite() && skew > 0.0) {
        return Err(Error::config(
            "data.skew",
            format!("must be finite and positive, got {skew}"),
        ));
    }
    let d = task.teacher.input_dim();
    let mut clients = Vec::with_capacity(n);
    for id in 0..n {
        let mut rng = rng_for(seed, &[stream::DATA, id as u64]);
        let weights = dirichlet(task.means.len(), skew, &mut rng)?;
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::config("data.skew", e.to_string()))?;
        let mut data = Vec::with_capacity(samples * d);
        for _ in 0..samples {
            let mean = &task.means[pick.sample(&mut rng)];
            data.extend(mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
        }
        let inputs = Matrix::from_vec(samples, d, data)?;
        let clean = task.teacher.predict(&inputs)?;
        let targets = Matrix::from_fn(clean.rows(), clean.cols(), |r, c| {
            clean[(r, c)] + task.noise * rng.sample::<f64, _>(StandardNormal)
        });
        clients.push(Client::new(id, Batch::new(inputs, targets)?)?);
    }
    Ok(clients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::default_model_spec;

    fn task(seed: u64) -> TeacherTask {
        TeacherTask::new(&default_model_spec(), 1.0, 4, 0.05, seed).unwrap()
    }

    fn client_mean(c: &Client) -> Vec<f64> {
        let x = &c.data.inputs;
        (0..x.cols())
            .map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>() / x.rows() as f64)
            .collect()
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_clients(&task(3), 5, 32, 0.5, 3).unwrap();
        let b = generate_clients(&task(3), 5, 32, 0.5, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_clients(&task(4), 5, 32, 0.5, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn iid_limit_agrees_and_small_skew_differs() {
        let t = task(1);
        let spread = |skew: f64| {
            let clients = generate_clients(&t, 6, 2000, skew, 1).unwrap();
            let means: Vec<Vec<f64>> = clients.iter().map(client_mean).collect();
            let mut worst: f64 = 0.0;
            for a in &means {
                for b in &means {
                    worst = worst.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
                }
            }
            worst
        };
        // Each coordinate mean has std about sqrt(1 + 1.5²·p(1−p)…)/√2000 < 0.05.
        assert!(spread(1e6) < 0.3, "iid spread {}", spread(1e6));
        assert!(spread(0.05) > 0.5);
    }

    #[test]
    fn tiny_skew_is_one_hot() {
        let mut rng = rng_for(0, &[]);
        let w = dirichlet(4, 1e-300, &mut rng).unwrap();
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        assert!(generate_clients(&task(0), 2, 4, 0.0, 0).is_err());
        assert!(generate_clients(&task(0), 0, 4, 1.0, 0).is_err());
    }

    #[test]
    fn teacher_differs_from_base_only_in_weights() {
        let t = task(2);
        assert_eq!(t.base.input_map(), t.teacher.input_map());
        assert_eq!(t.base.head(), t.teacher.head());
        for (b, s) in t.base.layers().iter().zip(t.teacher.layers()) {
            assert_eq!(b.bias(), s.bias());
            assert_ne!(b.weight(), s.weight());
        }
    }
}
