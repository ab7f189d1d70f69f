//! Selection policies: the learned graph policy, the classical heuristics
//! and the one-step-lookahead expert. Every tie resolves to the lowest
//! instance id.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;

use crate::dataset::{Episode, Setting};
use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::policy_graph::{forward_scores, PolicyParams};
use crate::protonet::{compute_prototypes, DistanceKind, PrototypeSet};
use crate::scalar::{cosine, squared_distance, Real};
use crate::seed::Rng;

/// One pick plus the per-candidate scores behind it (unlabeled order), if any.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection<T> {
    pub id: InstanceId,
    pub scores: Option<Vec<T>>,
}

pub trait SelectionPolicy<T: Real>: Send {
    fn name(&self) -> &'static str;

    /// Returns an id currently in the episode's unlabeled set.
    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>>;
}

/// Index of the largest score; ties go to the lowest id.
pub(crate) fn argmax_by_id<T: Real>(ids: &[InstanceId], scores: &[T]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && ids[i] < ids[best]) {
            best = i;
        }
    }
    best
}

fn argmin_by_id<T: Real>(ids: &[InstanceId], scores: &[T]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] || (scores[i] == scores[best] && ids[i] < ids[best]) {
            best = i;
        }
    }
    best
}

fn require_candidates<T: Real>(episode: &Episode<'_, T>) -> Result<()> {
    if episode.unlabeled_len() == 0 {
        Err(Error::NoCandidates)
    } else {
        Ok(())
    }
}

pub fn select_random<T: Real>(episode: &Episode<'_, T>, rng: &mut Rng) -> Result<InstanceId> {
    require_candidates(episode)?;
    Ok(episode.unlabeled_id(rng.random_range(0..episode.unlabeled_len())))
}

/// Natural-log entropy, with `0 ln 0 = 0`.
pub fn entropy<T: Real>(probs: &[T]) -> T {
    probs.iter().filter(|&&p| p > T::zero()).fold(T::zero(), |acc, &p| acc - p * p.ln())
}

pub fn entropy_scores<T: Real>(episode: &Episode<'_, T>, protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    if episode.labeled_len() == 0 || protos.is_empty() {
        return Err(Error::UnsupportedColdStart("entropy".into()));
    }
    episode.unlabeled().map(|(_, z)| Ok(entropy(&protos.predict_proba(z)?.probs))).collect()
}

pub fn select_entropy<T: Real>(episode: &Episode<'_, T>, protos: &PrototypeSet<T>) -> Result<InstanceId> {
    require_candidates(episode)?;
    let scores = entropy_scores(episode, protos)?;
    Ok(episode.unlabeled_id(argmax_by_id(&episode.unlabeled_ids(), &scores)))
}

/// Largest cosine similarity of each candidate to the labeled set.
pub fn max_cosine_scores<T: Real>(episode: &Episode<'_, T>) -> Vec<T> {
    let labeled: Vec<&[T]> = episode.labeled().map(|(z, _)| z).collect();
    episode
        .unlabeled()
        .map(|(_, z)| labeled.iter().map(|l| cosine(z, l)).fold(T::neg_infinity(), T::max))
        .collect()
}

pub fn select_minmaxcos<T: Real>(episode: &Episode<'_, T>, rng: &mut Rng) -> Result<InstanceId> {
    require_candidates(episode)?;
    if episode.labeled_len() == 0 {
        return select_random(episode, rng);
    }
    let scores = max_cosine_scores(episode);
    Ok(episode.unlabeled_id(argmin_by_id(&episode.unlabeled_ids(), &scores)))
}

/// Euclidean distance of each candidate to its nearest labeled point.
pub fn nearest_center_distances<T: Real>(episode: &Episode<'_, T>) -> Vec<T> {
    let centers: Vec<&[T]> = episode.labeled().map(|(z, _)| z).collect();
    episode
        .unlabeled()
        .map(|(_, z)| centers.iter().map(|c| squared_distance(z, c)).fold(T::infinity(), T::min).sqrt())
        .collect()
}

pub fn select_kcenter<T: Real>(episode: &Episode<'_, T>, rng: &mut Rng) -> Result<InstanceId> {
    require_candidates(episode)?;
    if episode.labeled_len() == 0 {
        return select_random(episode, rng);
    }
    let scores = nearest_center_distances(episode);
    Ok(episode.unlabeled_id(argmax_by_id(&episode.unlabeled_ids(), &scores)))
}

/// Evaluation accuracy after adding each candidate with its true label,
/// aligned with the episode's unlabeled order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertScores<T> {
    pub ids: Vec<InstanceId>,
    pub accuracies: Vec<T>,
}

/// One-step lookahead over every candidate. Each augmented classifier
/// reuses the labeled per-class sums, so a candidate only moves the center
/// of its own class; the result matches rebuilding the prototypes from
/// scratch with the candidate appended last.
pub fn expert_scores<T: Real>(episode: &Episode<'_, T>) -> Result<ExpertScores<T>> {
    require_candidates(episode)?;
    if episode.eval_len() == 0 {
        return Err(Error::InvalidEpisode("empty evaluation set".into()));
    }
    let kind = DistanceKind::default();
    let dim = episode.dim();
    let mut sums: BTreeMap<ClassId, (Vec<T>, usize)> = BTreeMap::new();
    for (z, class) in episode.labeled() {
        let e = sums.entry(class).or_insert_with(|| (vec![T::zero(); dim], 0));
        e.0.iter_mut().zip(z).for_each(|(s, &x)| *s += x);
        e.1 += 1;
    }
    let classes: Vec<ClassId> = sums.keys().copied().collect();
    let centers: Vec<Vec<T>> = sums
        .values()
        .map(|(s, n)| {
            let n = T::from_usize(*n).unwrap();
            s.iter().map(|&x| x / n).collect()
        })
        .collect();
    let eval: Vec<(&[T], ClassId)> = episode.eval().collect();
    let base: Vec<Vec<T>> = eval.iter().map(|(z, _)| centers.iter().map(|c| kind.eval(z, c)).collect()).collect();
    let n_eval = T::from_usize(eval.len()).unwrap();

    let ids = episode.unlabeled_ids();
    let mut accuracies = Vec::with_capacity(ids.len());
    let mut moved = vec![T::zero(); dim];
    for (i, (_, z)) in episode.unlabeled().enumerate() {
        let class = episode.oracle_class(i);
        let slot = classes.binary_search(&class);
        match sums.get(&class) {
            Some((s, n)) => {
                let n1 = T::from_usize(n + 1).unwrap();
                for ((m, &a), &b) in moved.iter_mut().zip(s).zip(z) {
                    *m = (a + b) / n1;
                }
            }
            None => moved.copy_from_slice(z),
        }
        let mut hits = 0usize;
        for ((ze, truth), dists) in eval.iter().zip(&base) {
            let dz = kind.eval(ze, &moved);
            // walk classes in id order, substituting or inserting the moved center
            let mut best: Option<(ClassId, T)> = None;
            let mut consider = |c: ClassId, d: T| {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            };
            match slot {
                Ok(k) => {
                    for (j, &c) in classes.iter().enumerate() {
                        consider(c, if j == k { dz } else { dists[j] });
                    }
                }
                Err(k) => {
                    for (j, &c) in classes.iter().enumerate() {
                        if j == k {
                            consider(class, dz);
                        }
                        consider(c, dists[j]);
                    }
                    if k == classes.len() {
                        consider(class, dz);
                    }
                }
            }
            if best.map(|(c, _)| c) == Some(*truth) {
                hits += 1;
            }
        }
        accuracies.push(T::from_usize(hits).unwrap() / n_eval);
    }
    Ok(ExpertScores { ids, accuracies })
}

pub fn select_expert<T: Real>(episode: &Episode<'_, T>) -> Result<InstanceId> {
    let s = expert_scores(episode)?;
    Ok(s.ids[argmax_by_id(&s.ids, &s.accuracies)])
}

/// Argmax of the graph policy's scores.
pub fn select_graph<T: Real>(episode: &Episode<'_, T>, params: &PolicyParams<T>) -> Result<Selection<T>> {
    let trace = forward_scores(episode, params)?;
    let scores = trace.scores.to_vec();
    let ids = &trace.state.unlabeled_ids;
    Ok(Selection { id: ids[argmax_by_id(ids, &scores)], scores: Some(scores) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Random,
    Entropy,
    MinMaxCos,
    KCenter,
    Expert,
    FlGcn,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] =
        [PolicyKind::Random, PolicyKind::Entropy, PolicyKind::MinMaxCos, PolicyKind::KCenter, PolicyKind::Expert, PolicyKind::FlGcn];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Entropy => "entropy",
            PolicyKind::MinMaxCos => "minmaxcos",
            PolicyKind::KCenter => "kcenter",
            PolicyKind::Expert => "expert",
            PolicyKind::FlGcn => "flgcn",
        }
    }

    pub fn supports(self, setting: Setting) -> bool {
        !(self == PolicyKind::Entropy && setting == Setting::Cold)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

pub struct RandomPolicy(pub Rng);
pub struct EntropyPolicy;
pub struct MinMaxCosPolicy(pub Rng);
pub struct KCenterPolicy(pub Rng);
pub struct ExpertPolicy;
pub struct GraphPolicy<T>(pub Arc<PolicyParams<T>>);

impl<T: Real> SelectionPolicy<T> for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        Ok(Selection { id: select_random(episode, &mut self.0)?, scores: None })
    }
}

impl<T: Real> SelectionPolicy<T> for EntropyPolicy {
    fn name(&self) -> &'static str {
        "entropy"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        require_candidates(episode)?;
        let protos = compute_prototypes(episode.labeled());
        let scores = entropy_scores(episode, &protos)?;
        let id = episode.unlabeled_id(argmax_by_id(&episode.unlabeled_ids(), &scores));
        Ok(Selection { id, scores: Some(scores) })
    }
}

impl<T: Real> SelectionPolicy<T> for MinMaxCosPolicy {
    fn name(&self) -> &'static str {
        "minmaxcos"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        let id = select_minmaxcos(episode, &mut self.0)?;
        let scores = (episode.labeled_len() > 0).then(|| max_cosine_scores(episode));
        Ok(Selection { id, scores })
    }
}

impl<T: Real> SelectionPolicy<T> for KCenterPolicy {
    fn name(&self) -> &'static str {
        "kcenter"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        let id = select_kcenter(episode, &mut self.0)?;
        let scores = (episode.labeled_len() > 0).then(|| nearest_center_distances(episode));
        Ok(Selection { id, scores })
    }
}

impl<T: Real> SelectionPolicy<T> for ExpertPolicy {
    fn name(&self) -> &'static str {
        "expert"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        let s = expert_scores(episode)?;
        let id = s.ids[argmax_by_id(&s.ids, &s.accuracies)];
        Ok(Selection { id, scores: Some(s.accuracies) })
    }
}

impl<T: Real> SelectionPolicy<T> for GraphPolicy<T> {
    fn name(&self) -> &'static str {
        "flgcn"
    }

    fn select(&mut self, episode: &Episode<'_, T>) -> Result<Selection<T>> {
        select_graph(episode, &self.0)
    }
}

/// A named policy ready to be instantiated per episode.
#[derive(Clone, Debug)]
pub struct PolicySpec<T> {
    pub kind: PolicyKind,
    pub params: Option<Arc<PolicyParams<T>>>,
}

impl<T: Real> PolicySpec<T> {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, params: None }
    }

    pub fn graph(params: Arc<PolicyParams<T>>) -> Self {
        Self { kind: PolicyKind::FlGcn, params: Some(params) }
    }

    pub fn parse(name: &str, params: Option<Arc<PolicyParams<T>>>) -> Result<Self> {
        let kind: PolicyKind = name.parse()?;
        if kind == PolicyKind::FlGcn && params.is_none() {
            return Err(Error::Config("policy `flgcn` needs a checkpoint".into()));
        }
        Ok(Self { kind, params: if kind == PolicyKind::FlGcn { params } else { None } })
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Instantiates the policy; `rng` drives the stochastic ones.
    pub fn build(&self, rng: Rng) -> Result<Box<dyn SelectionPolicy<T>>> {
        Ok(match self.kind {
            PolicyKind::Random => Box::new(RandomPolicy(rng)),
            PolicyKind::Entropy => Box::new(EntropyPolicy),
            PolicyKind::MinMaxCos => Box::new(MinMaxCosPolicy(rng)),
            PolicyKind::KCenter => Box::new(KCenterPolicy(rng)),
            PolicyKind::Expert => Box::new(ExpertPolicy),
            PolicyKind::FlGcn => Box::new(GraphPolicy(
                self.params.clone().ok_or_else(|| Error::Config("policy `flgcn` needs a checkpoint".into()))?,
            )),
        })
    }
}
