use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::pool::FeaturePool;
use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::scalar::Real;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Labeled support starts empty.
    Cold,
    /// Labeled support starts with one instance per class.
    Warm,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Cold => "cold",
            Setting::Warm => "warm",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(Setting::Cold),
            "warm" => Ok(Setting::Warm),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

/// N-way K-shot task protocol with a per-class episode pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProtocol {
    pub ways: usize,
    pub shots: usize,
    pub setting: Setting,
    pub unlabeled_per_class: usize,
    pub eval_per_class: usize,
}

impl TaskProtocol {
    pub fn new(ways: usize, shots: usize, setting: Setting) -> Self {
        Self { ways, shots, setting, unlabeled_per_class: 10, eval_per_class: 10 }
    }

    pub fn per_class(mut self, unlabeled: usize, eval: usize) -> Self {
        self.unlabeled_per_class = unlabeled;
        self.eval_per_class = eval;
        self
    }

    pub fn budget(&self) -> usize {
        self.ways * self.shots
    }

    /// Instances each sampled class must provide.
    pub fn needed_per_class(&self) -> usize {
        self.unlabeled_per_class + self.eval_per_class + usize::from(self.setting == Setting::Warm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ways == 0 {
            return Err(Error::Config("ways must be positive".into()));
        }
        if self.eval_per_class == 0 {
            return Err(Error::Config("evaluation set must be nonempty".into()));
        }
        if self.budget() > self.ways * self.unlabeled_per_class {
            return Err(Error::Config(format!(
                "budget {} exceeds the unlabeled pool of {}",
                self.budget(),
                self.ways * self.unlabeled_per_class
            )));
        }
        Ok(())
    }
}

/// One sampled task: label set, labeled and unlabeled support, evaluation
/// set and query budget. The true classes of unlabeled instances are only
/// released through [`Episode::reveal_label`] (and the crate's expert oracle).
#[derive(Clone, Debug)]
pub struct Episode<'p, T> {
    pool: &'p FeaturePool<T>,
    setting: Setting,
    label_set: Vec<ClassId>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    eval: Vec<usize>,
    budget: usize,
    queries: usize,
}

impl<'p, T: Real> Episode<'p, T> {
    /// Assembles an episode from explicit id lists. Every instance must be
    /// in the pool, belong to `label_set`, and appear in at most one list.
    pub fn from_parts(
        pool: &'p FeaturePool<T>,
        setting: Setting,
        label_set: Vec<ClassId>,
        labeled: &[InstanceId],
        unlabeled: &[InstanceId],
        eval: &[InstanceId],
        budget: usize,
    ) -> Result<Self> {
        let classes: BTreeSet<ClassId> = label_set.iter().copied().collect();
        if classes.len() != label_set.len() || label_set.is_empty() {
            return Err(Error::InvalidEpisode("label set must be nonempty and distinct".into()));
        }
        let mut seen = BTreeSet::new();
        let mut rows = |ids: &[InstanceId]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|&id| {
                    let row = pool
                        .row_of(id)
                        .ok_or_else(|| Error::InvalidEpisode(format!("instance {id} is not in the pool")))?;
                    if !seen.insert(id) {
                        return Err(Error::InvalidEpisode(format!("instance {id} listed twice")));
                    }
                    if !classes.contains(&pool.label(row)) {
                        return Err(Error::InvalidEpisode(format!("instance {id} is outside the label set")));
                    }
                    Ok(row)
                })
                .collect()
        };
        let labeled = rows(labeled)?;
        let unlabeled = rows(unlabeled)?;
        let eval = rows(eval)?;
        Ok(Self { pool, setting, label_set, labeled, unlabeled, eval, budget, queries: 0 })
    }

    pub fn ways(&self) -> usize {
        self.label_set.len()
    }

    pub fn dim(&self) -> usize {
        self.pool.dim()
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    /// Episode class order; one-hot encodings index into it.
    pub fn label_set(&self) -> &[ClassId] {
        &self.label_set
    }

    pub fn class_index(&self, class: ClassId) -> Option<usize> {
        self.label_set.iter().position(|&c| c == class)
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn remaining_budget(&self) -> usize {
        self.budget - self.queries
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn eval_len(&self) -> usize {
        self.eval.len()
    }

    pub fn labeled_ids(&self) -> Vec<InstanceId> {
        self.labeled.iter().map(|&r| self.pool.id(r)).collect()
    }

    pub fn unlabeled_ids(&self) -> Vec<InstanceId> {
        self.unlabeled.iter().map(|&r| self.pool.id(r)).collect()
    }

    pub fn eval_ids(&self) -> Vec<InstanceId> {
        self.eval.iter().map(|&r| self.pool.id(r)).collect()
    }

    /// Labeled support as `(vector, class)`.
    pub fn labeled(&self) -> impl Iterator<Item = (&'p [T], ClassId)> + '_ {
        let pool = self.pool;
        self.labeled.iter().map(move |&r| (pool.vector(r), pool.label(r)))
    }

    /// Unlabeled support as `(id, vector)`; classes stay hidden.
    pub fn unlabeled(&self) -> impl Iterator<Item = (InstanceId, &'p [T])> + '_ {
        let pool = self.pool;
        self.unlabeled.iter().map(move |&r| (pool.id(r), pool.vector(r)))
    }

    pub fn eval(&self) -> impl Iterator<Item = (&'p [T], ClassId)> + '_ {
        let pool = self.pool;
        self.eval.iter().map(move |&r| (pool.vector(r), pool.label(r)))
    }

    pub fn unlabeled_id(&self, index: usize) -> InstanceId {
        self.pool.id(self.unlabeled[index])
    }

    /// True class of the `index`-th unlabeled instance, for the expert oracle only.
    pub(crate) fn oracle_class(&self, index: usize) -> ClassId {
        self.pool.label(self.unlabeled[index])
    }

    pub fn distinct_labeled_classes(&self) -> usize {
        self.labeled.iter().map(|&r| self.pool.label(r)).collect::<BTreeSet<_>>().len()
    }

    /// Moves `id` from the unlabeled to the labeled support and returns its class.
    pub fn reveal_label(&mut self, id: InstanceId) -> Result<ClassId> {
        if self.queries >= self.budget {
            return Err(Error::BudgetExhausted(self.budget));
        }
        let pos = self
            .unlabeled
            .iter()
            .position(|&r| self.pool.id(r) == id)
            .ok_or(Error::InvalidSelection(id))?;
        let row = self.unlabeled.remove(pos);
        self.labeled.push(row);
        self.queries += 1;
        Ok(self.pool.label(row))
    }
}

/// Samples N classes without replacement, then per class draws (warm only)
/// one initial labeled instance, `unlabeled_per_class` unlabeled and
/// `eval_per_class` evaluation instances, all disjoint.
pub fn sample_episode<'p, T: Real>(
    pool: &'p FeaturePool<T>,
    protocol: &TaskProtocol,
    rng: &mut Rng,
) -> Result<Episode<'p, T>> {
    protocol.validate()?;
    let classes = pool.classes();
    if classes.len() < protocol.ways {
        return Err(Error::NotEnoughClasses { have: classes.len(), need: protocol.ways });
    }
    let need = protocol.needed_per_class();
    let label_set: Vec<ClassId> =
        index::sample(rng, classes.len(), protocol.ways).into_iter().map(|i| classes[i]).collect();
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::with_capacity(protocol.ways * protocol.unlabeled_per_class);
    let mut eval = Vec::with_capacity(protocol.ways * protocol.eval_per_class);
    for &class in &label_set {
        let rows = pool.rows_of(class);
        if rows.len() < need {
            return Err(Error::Sampling { class, have: rows.len(), need });
        }
        let mut picked = index::sample(rng, rows.len(), need).into_iter().map(|i| rows[i]);
        if protocol.setting == Setting::Warm {
            labeled.extend(picked.next());
        }
        unlabeled.extend(picked.by_ref().take(protocol.unlabeled_per_class));
        eval.extend(picked);
    }
    Ok(Episode {
        pool,
        setting: protocol.setting,
        label_set,
        labeled,
        unlabeled,
        eval,
        budget: protocol.budget(),
        queries: 0,
    })
}
