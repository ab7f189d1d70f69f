//! Prototype classifier head: class means of the labeled support and a
//! softmax over negative distances to them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::ClassId;
use crate::scalar::{squared_distance, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl DistanceKind {
    pub fn eval<T: Real>(self, a: &[T], b: &[T]) -> T {
        let d2 = squared_distance(a, b);
        match self {
            DistanceKind::SquaredEuclidean => d2,
            DistanceKind::Euclidean => d2.sqrt(),
        }
    }
}

/// Class centers for every class that has at least one labeled example,
/// ordered by class id.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet<T> {
    classes: Vec<ClassId>,
    centers: Vec<Vec<T>>,
    counts: Vec<usize>,
    distance: DistanceKind,
}

/// Probabilities aligned with [`PrototypeSet::classes`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbabilities<T> {
    pub classes: Vec<ClassId>,
    pub probs: Vec<T>,
}

impl<T: Real> ClassProbabilities<T> {
    pub fn get(&self, class: ClassId) -> Option<T> {
        self.classes.iter().position(|&c| c == class).map(|i| self.probs[i])
    }
}

pub fn compute_prototypes<'a, T: Real>(labeled: impl IntoIterator<Item = (&'a [T], ClassId)>) -> PrototypeSet<T> {
    compute_prototypes_with(labeled, DistanceKind::default())
}

pub fn compute_prototypes_with<'a, T: Real>(
    labeled: impl IntoIterator<Item = (&'a [T], ClassId)>,
    distance: DistanceKind,
) -> PrototypeSet<T> {
    let mut sums: BTreeMap<ClassId, (Vec<T>, usize)> = BTreeMap::new();
    for (z, class) in labeled {
        let entry = sums.entry(class).or_insert_with(|| (vec![T::zero(); z.len()], 0));
        entry.0.iter_mut().zip(z).for_each(|(s, &x)| *s += x);
        entry.1 += 1;
    }
    let mut classes = Vec::with_capacity(sums.len());
    let mut centers = Vec::with_capacity(sums.len());
    let mut counts = Vec::with_capacity(sums.len());
    for (class, (sum, n)) in sums {
        let inv = T::from_usize(n).expect("count fits scalar");
        classes.push(class);
        centers.push(sum.into_iter().map(|s| s / inv).collect());
        counts.push(n);
    }
    PrototypeSet { classes, centers, counts, distance }
}

impl<T: Real> PrototypeSet<T> {
    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn centers(&self) -> &[Vec<T>] {
        &self.centers
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
    }

    pub fn center(&self, class: ClassId) -> Option<&[T]> {
        self.classes.iter().position(|&c| c == class).map(|i| self.centers[i].as_slice())
    }

    pub fn distances(&self, z: &[T]) -> Vec<T> {
        self.centers.iter().map(|c| self.distance.eval(z, c)).collect()
    }

    pub fn predict_proba(&self, z: &[T]) -> Result<ClassProbabilities<T>> {
        if self.is_empty() {
            return Err(Error::UndefinedClassifier);
        }
        Ok(ClassProbabilities { classes: self.classes.clone(), probs: softmax_neg(&self.distances(z)) })
    }

    /// Nearest center; ties go to the lowest class id.
    pub fn predict(&self, z: &[T]) -> Result<ClassId> {
        if self.is_empty() {
            return Err(Error::UndefinedClassifier);
        }
        Ok(self.classes[argmin_first(&self.distances(z))])
    }

    /// Fraction of `eval` whose predicted class matches.
    pub fn evaluate_accuracy<'a>(&self, eval: impl IntoIterator<Item = (&'a [T], ClassId)>) -> Result<T> {
        if self.is_empty() {
            return Err(Error::UndefinedClassifier);
        }
        let (mut hits, mut total) = (0usize, 0usize);
        for (z, class) in eval {
            total += 1;
            if self.predict(z)? == class {
                hits += 1;
            }
        }
        if total == 0 {
            return Err(Error::InvalidEpisode("empty evaluation set".into()));
        }
        Ok(T::from_usize(hits).unwrap() / T::from_usize(total).unwrap())
    }
}

/// `softmax(-d)` with the max logit subtracted.
pub(crate) fn softmax_neg<T: Real>(dist: &[T]) -> Vec<T> {
    let min = dist.iter().copied().fold(T::infinity(), T::min);
    let exps: Vec<T> = dist.iter().map(|&d| (min - d).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn argmin_first<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}
