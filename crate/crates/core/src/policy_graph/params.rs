use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::PolicyConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::Rng;

/// Weights of one message-passing layer. Matrices map row vectors as
/// `x -> W x`, i.e. shape `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub w_labeled: Array2<T>,
    pub w_unlabeled: Array2<T>,
    /// Shared by both bipartite directions.
    pub w_inter: Array2<T>,
    /// `(D, 2D)` map over `[intra; inter]`.
    pub fusion: Array2<T>,
}

/// `s = w2 . leaky(w1 x + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorParams<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array1<T>,
    pub b2: Array1<T>,
}

/// All learnable weights plus the architecture they were built for. The
/// same type doubles as the gradient and optimizer-moment container.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<T> {
    pub config: PolicyConfig,
    pub layers: Vec<LayerParams<T>>,
    pub regressor: RegressorParams<T>,
}

#[derive(Serialize, Deserialize)]
struct WeightArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: PolicyConfig,
    weights: BTreeMap<String, WeightArray>,
}

fn glorot<T: Real>(rows: usize, cols: usize, rng: &mut Rng) -> Array2<T> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-a..=a)))
}

impl<T: Real> PolicyParams<T> {
    /// Every block zero, with the shapes `config` implies.
    pub fn zeros(config: &PolicyConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let layers = (0..config.layers)
            .map(|m| {
                let din = config.layer_input_dim(m);
                LayerParams {
                    w_labeled: Array2::zeros((d, din)),
                    w_unlabeled: Array2::zeros((d, din)),
                    w_inter: Array2::zeros((d, din)),
                    fusion: Array2::zeros((d, 2 * d)),
                }
            })
            .collect();
        let rh = config.regressor_hidden;
        let regressor = RegressorParams {
            w1: Array2::zeros((rh, config.layers * d)),
            b1: Array1::zeros(rh),
            w2: Array1::zeros(rh),
            b2: Array1::zeros(1),
        };
        Ok(Self { config: config.clone(), layers, regressor })
    }

    /// Matrices uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; biases zero.
    pub fn init(config: &PolicyConfig, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for layer in &mut p.layers {
            for w in [&mut layer.w_labeled, &mut layer.w_unlabeled, &mut layer.w_inter, &mut layer.fusion] {
                let (r, c) = w.dim();
                *w = glorot(r, c, rng);
            }
        }
        let (r, c) = p.regressor.w1.dim();
        p.regressor.w1 = glorot(r, c, rng);
        let rh = p.regressor.w2.len();
        p.regressor.w2 = glorot::<T>(1, rh, rng).into_shape_with_order(rh).expect("row vector");
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Named parameter blocks in canonical order, with shapes.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (m, l) in self.layers.iter().enumerate() {
            let n = m + 1;
            for (name, w) in [("w_labeled", &l.w_labeled), ("w_unlabeled", &l.w_unlabeled), ("w_inter", &l.w_inter), ("fusion", &l.fusion)] {
                out.push((format!("layer{n}.{name}"), w.shape().to_vec(), w.as_slice().expect("standard layout")));
            }
        }
        let r = &self.regressor;
        out.push(("regressor.w1".into(), r.w1.shape().to_vec(), r.w1.as_slice().expect("standard layout")));
        out.push(("regressor.b1".into(), r.b1.shape().to_vec(), r.b1.as_slice().expect("standard layout")));
        out.push(("regressor.w2".into(), r.w2.shape().to_vec(), r.w2.as_slice().expect("standard layout")));
        out.push(("regressor.b2".into(), r.b2.shape().to_vec(), r.b2.as_slice().expect("standard layout")));
        out
    }

    /// Mutable blocks, same order as [`Self::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (m, l) in self.layers.iter_mut().enumerate() {
            let n = m + 1;
            out.push((format!("layer{n}.w_labeled"), l.w_labeled.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{n}.w_unlabeled"), l.w_unlabeled.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{n}.w_inter"), l.w_inter.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{n}.fusion"), l.fusion.as_slice_mut().expect("standard layout")));
        }
        let r = &mut self.regressor;
        out.push(("regressor.w1".into(), r.w1.as_slice_mut().expect("standard layout")));
        out.push(("regressor.b1".into(), r.b1.as_slice_mut().expect("standard layout")));
        out.push(("regressor.w2".into(), r.w2.as_slice_mut().expect("standard layout")));
        out.push(("regressor.b2".into(), r.b2.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.2.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let src = other.blocks();
        for ((_, dst), (_, _, s)) in self.blocks_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, &x)| *d += scale * x);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn to_json(&self) -> String {
        let weights = self
            .blocks()
            .into_iter()
            .map(|(name, shape, data)| (name, WeightArray { shape, data: data.iter().map(|x| x.to_f64_lossy()).collect() }))
            .collect();
        serde_json::to_string(&Checkpoint { config: self.config.clone(), weights }).expect("checkpoint serializes")
    }

    /// Parses a checkpoint, validating every block's shape against the config.
    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = Self::zeros(&ck.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let expected: Vec<(String, Vec<usize>)> = params.blocks().into_iter().map(|(n, s, _)| (n, s)).collect();
        if ck.weights.len() != expected.len() {
            let unknown: Vec<&String> =
                ck.weights.keys().filter(|k| !expected.iter().any(|(n, _)| n == *k)).collect();
            return Err(Error::Checkpoint(format!("unexpected weight blocks {unknown:?}")));
        }
        for ((name, shape), (_, dst)) in expected.into_iter().zip(params.blocks_mut()) {
            let w = ck.weights.get(&name).ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))?;
            if w.shape != shape || w.data.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "block `{name}` has shape {:?} with {} values, config implies {shape:?}",
                    w.shape,
                    w.data.len()
                )));
            }
            for (d, &x) in dst.iter_mut().zip(&w.data) {
                if !x.is_finite() {
                    return Err(Error::Checkpoint(format!("non-finite value in block `{name}`")));
                }
                *d = T::lit(x);
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Setting;
    use rand::SeedableRng;

    fn cfg() -> PolicyConfig {
        PolicyConfig { hidden: 6, regressor_hidden: 4, ..PolicyConfig::new(2, Setting::Warm, 4) }
    }

    #[test]
    fn shapes_follow_config() {
        let p = PolicyParams::<f64>::zeros(&cfg()).unwrap();
        let shapes: Vec<_> = p.blocks().into_iter().map(|(n, s, _)| (n, s)).collect();
        assert_eq!(shapes[0], ("layer1.w_labeled".to_string(), vec![6, 8]));
        assert_eq!(shapes[3], ("layer1.fusion".to_string(), vec![6, 12]));
        assert_eq!(shapes[4], ("layer2.w_labeled".to_string(), vec![6, 6]));
        assert_eq!(shapes[8], ("regressor.w1".to_string(), vec![4, 12]));
        assert_eq!(shapes.len(), 12);
    }

    #[test]
    fn init_within_glorot_bound() {
        let p = PolicyParams::<f64>::init(&cfg(), &mut Rng::seed_from_u64(1)).unwrap();
        let a = (6.0f64 / 14.0).sqrt();
        assert!(p.layers[0].w_labeled.iter().all(|x| x.abs() <= a));
        assert!(p.layers[0].w_labeled.iter().any(|&x| x != 0.0));
        assert!(p.regressor.b1.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = PolicyParams::<f64>::init(&cfg(), &mut Rng::seed_from_u64(3)).unwrap();
        let q = PolicyParams::<f64>::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn json_shape_mismatch_rejected() {
        let p = PolicyParams::<f64>::zeros(&cfg()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["config"]["D"] = serde_json::json!(7);
        let err = PolicyParams::<f64>::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["weights"].as_object_mut().unwrap().remove("regressor.b2");
        assert!(PolicyParams::<f64>::from_json(&v.to_string()).is_err());
    }
}
