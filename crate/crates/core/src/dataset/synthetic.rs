use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pool::{FeaturePool, Split};
use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

/// Unit-sphere Gaussian clusters standing in for a frozen embedding backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Intra-class standard deviation before re-normalization.
    pub spread: f64,
    pub seed: u64,
    /// First class id; lets independently generated pools use disjoint ids.
    pub class_offset: u32,
    pub split: Split,
}

impl SyntheticSpec {
    pub fn new(n_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Self {
        Self { n_classes, per_class, dim, spread, seed, class_offset: 0, split: Split::MetaTrain }
    }

    pub fn class_offset(mut self, offset: u32) -> Self {
        self.class_offset = offset;
        self
    }

    pub fn split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidSpec(format!("dim must be at least 2, got {}", self.dim)));
        }
        if self.per_class < 1 {
            return Err(Error::InvalidSpec("per_class must be at least 1".into()));
        }
        if self.n_classes < 1 {
            return Err(Error::InvalidSpec("n_classes must be at least 1".into()));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::InvalidSpec(format!("spread must be finite and nonnegative, got {}", self.spread)));
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Class means are uniform on the unit sphere; instances are mean plus
/// isotropic noise, projected back onto the sphere. Rows are grouped by
/// class, ids run `0..n_classes * per_class`.
pub fn generate_synthetic<T: Real>(spec: &SyntheticSpec) -> Result<FeaturePool<T>> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, 0, Stream::Synthetic);
    let n = spec.n_classes * spec.per_class;
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut mean = vec![0.0f64; spec.dim];
    let mut x = vec![0.0f64; spec.dim];
    for k in 0..spec.n_classes {
        loop {
            mean.iter_mut().for_each(|m| *m = rng.sample(StandardNormal));
            if mean.iter().any(|&m| m != 0.0) {
                break;
            }
        }
        normalize(&mut mean);
        let class = ClassId(spec.class_offset + k as u32);
        for _ in 0..spec.per_class {
            for (xi, &mi) in x.iter_mut().zip(&mean) {
                let noise: f64 = rng.sample(StandardNormal);
                *xi = mi + spec.spread * noise;
            }
            normalize(&mut x);
            ids.push(InstanceId(ids.len() as u32));
            labels.push(class);
            features.extend(x.iter().map(|&v| T::lit(v)));
        }
    }
    let classes = (0..spec.n_classes).map(|k| ClassId(spec.class_offset + k as u32)).collect();
    FeaturePool::from_parts(spec.dim, spec.split, classes, ids, labels, features)
}
