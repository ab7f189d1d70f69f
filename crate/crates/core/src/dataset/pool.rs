use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "meta-train")]
    MetaTrain,
    #[serde(rename = "meta-test")]
    MetaTest,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::MetaTrain => "meta-train",
            Split::MetaTest => "meta-test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meta-train" => Ok(Split::MetaTrain),
            "meta-test" => Ok(Split::MetaTest),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Immutable store of feature vectors with class labels.
///
/// Rows are stored contiguously (row-major, `dim` entries each). Every
/// vector is finite and every instance id is unique.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePool<T> {
    dim: usize,
    split: Split,
    classes: Vec<ClassId>,
    ids: Vec<InstanceId>,
    labels: Vec<ClassId>,
    features: Vec<T>,
    by_class: BTreeMap<ClassId, Vec<usize>>,
    row_of: HashMap<InstanceId, usize>,
}

impl<T: Real> FeaturePool<T> {
    /// Builds a pool from flat row-major features. `classes` may list
    /// classes that have no instances; every label must appear in it.
    pub fn from_parts(
        dim: usize,
        split: Split,
        classes: Vec<ClassId>,
        ids: Vec<InstanceId>,
        labels: Vec<ClassId>,
        features: Vec<T>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if ids.len() != labels.len() || features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} ids, {} labels and {} feature values for dim {dim}",
                ids.len(),
                labels.len(),
                features.len()
            )));
        }
        let class_set: BTreeSet<ClassId> = classes.iter().copied().collect();
        if class_set.len() != classes.len() {
            return Err(Error::Config("duplicate class id in class list".into()));
        }
        let mut by_class: BTreeMap<ClassId, Vec<usize>> =
            class_set.iter().map(|&c| (c, Vec::new())).collect();
        let mut row_of = HashMap::with_capacity(ids.len());
        for (row, (&id, &label)) in ids.iter().zip(&labels).enumerate() {
            if row_of.insert(id, row).is_some() {
                return Err(Error::Data { row, msg: format!("duplicate instance id {id}") });
            }
            match by_class.get_mut(&label) {
                Some(rows) => rows.push(row),
                None => {
                    return Err(Error::Data {
                        row,
                        msg: format!("class {label} is not listed in the pool's classes"),
                    })
                }
            }
            let v = &features[row * dim..(row + 1) * dim];
            if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Data { row, msg: format!("non-finite value in column {pos}") });
            }
        }
        Ok(Self {
            dim,
            split,
            classes: class_set.into_iter().collect(),
            ids,
            labels,
            features,
            by_class,
            row_of,
        })
    }

    /// Builds a pool from `(id, class, vector)` rows; the class list is the set of labels.
    pub fn from_rows(dim: usize, split: Split, rows: Vec<(InstanceId, ClassId, Vec<T>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (row, (id, class, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Data { row, msg: format!("vector has {} entries, expected {dim}", v.len()) });
            }
            ids.push(id);
            labels.push(class);
            features.extend(v);
        }
        let classes: BTreeSet<ClassId> = labels.iter().copied().collect();
        Self::from_parts(dim, split, classes.into_iter().collect(), ids, labels, features)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Sorted class ids.
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    /// Flat row-major feature storage.
    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn vector(&self, row: usize) -> &[T] {
        &self.features[row * self.dim..(row + 1) * self.dim]
    }

    pub fn label(&self, row: usize) -> ClassId {
        self.labels[row]
    }

    pub fn id(&self, row: usize) -> InstanceId {
        self.ids[row]
    }

    pub fn row_of(&self, id: InstanceId) -> Option<usize> {
        self.row_of.get(&id).copied()
    }

    pub fn class_of(&self, id: InstanceId) -> Option<ClassId> {
        self.row_of(id).map(|r| self.labels[r])
    }

    /// Rows of one class, in pool order.
    pub fn rows_of(&self, class: ClassId) -> &[usize] {
        self.by_class.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Splits by class: the listed classes form the meta-test pool, the
    /// rest the meta-train pool. Instance ids are preserved.
    pub fn split_classes(&self, meta_test: &[ClassId]) -> Result<(Self, Self)> {
        let test: BTreeSet<ClassId> = meta_test.iter().copied().collect();
        let mut parts = [(Vec::new(), Vec::new(), Vec::new(), Vec::new()), (Vec::new(), Vec::new(), Vec::new(), Vec::new())];
        for &c in &self.classes {
            parts[usize::from(test.contains(&c))].0.push(c);
        }
        for row in 0..self.len() {
            let p = &mut parts[usize::from(test.contains(&self.labels[row]))];
            p.1.push(self.ids[row]);
            p.2.push(self.labels[row]);
            p.3.extend_from_slice(self.vector(row));
        }
        let [train, test] = parts;
        Ok((
            Self::from_parts(self.dim, Split::MetaTrain, train.0, train.1, train.2, train.3)?,
            Self::from_parts(self.dim, Split::MetaTest, test.0, test.1, test.2, test.3)?,
        ))
    }
}

/// Fails if two pools share a class id.
pub fn check_disjoint<T: Real>(a: &FeaturePool<T>, b: &FeaturePool<T>) -> Result<()> {
    let bs: BTreeSet<ClassId> = b.classes().iter().copied().collect();
    match a.classes().iter().find(|c| bs.contains(c)) {
        Some(c) => Err(Error::Config(format!("class {c} appears in both pools"))),
        None => Ok(()),
    }
}
