//! Meta-test driver and reporting.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{sample_episode, Episode, FeaturePool, TaskProtocol};
use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::policies::{PolicySpec, SelectionPolicy};
use crate::protonet::compute_prototypes;
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

/// Initial id lists of an episode, for checking that policies were paired.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EpisodeSets {
    pub labeled: Vec<InstanceId>,
    pub unlabeled: Vec<InstanceId>,
    pub eval: Vec<InstanceId>,
}

impl EpisodeSets {
    pub fn of<T: Real>(episode: &Episode<'_, T>) -> Self {
        Self { labeled: episode.labeled_ids(), unlabeled: episode.unlabeled_ids(), eval: episode.eval_ids() }
    }
}

/// One select-and-reveal step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep<T> {
    pub chosen: InstanceId,
    pub class: ClassId,
    /// Candidate scores in unlabeled order, for policies that produce them.
    pub scores: Option<Vec<T>>,
    /// Accuracy after the reveal, when anytime accuracies are recorded.
    pub accuracy: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult<T> {
    pub final_accuracy: T,
    pub distinct_classes: usize,
    pub final_labeled: usize,
    /// Accuracy before the first and after every reveal (`B + 1` entries);
    /// empty unless requested.
    pub anytime: Vec<T>,
    pub trace: Vec<TraceStep<T>>,
    pub sets: EpisodeSets,
}

impl<T> EpisodeResult<T> {
    pub fn selections(&self) -> Vec<InstanceId> {
        self.trace.iter().map(|s| s.chosen).collect()
    }
}

/// Prototype accuracy on E, or chance `1/N` while no label is known.
pub fn episode_accuracy<T: Real>(episode: &Episode<'_, T>) -> Result<T> {
    if episode.labeled_len() == 0 {
        return Ok(T::one() / T::from_usize(episode.ways()).unwrap());
    }
    compute_prototypes(episode.labeled()).evaluate_accuracy(episode.eval())
}

pub fn run_episode<T: Real>(
    mut episode: Episode<'_, T>,
    policy: &mut dyn SelectionPolicy<T>,
    record_anytime: bool,
) -> Result<EpisodeResult<T>> {
    let sets = EpisodeSets::of(&episode);
    let mut anytime = Vec::new();
    if record_anytime {
        anytime.reserve(episode.budget() + 1);
        anytime.push(episode_accuracy(&episode)?);
    }
    let mut trace = Vec::with_capacity(episode.budget());
    while episode.remaining_budget() > 0 {
        let step = trace.len();
        let attach = |e: Error| Error::AtStep { step, source: Box::new(e) };
        let pick = policy.select(&episode).map_err(attach)?;
        let class = episode.reveal_label(pick.id).map_err(attach)?;
        let accuracy = if record_anytime {
            let a = episode_accuracy(&episode)?;
            anytime.push(a);
            Some(a)
        } else {
            None
        };
        trace.push(TraceStep { chosen: pick.id, class, scores: pick.scores, accuracy });
    }
    let final_accuracy = match anytime.last() {
        Some(&a) => a,
        None => episode_accuracy(&episode)?,
    };
    Ok(EpisodeResult {
        final_accuracy,
        distinct_classes: episode.distinct_labeled_classes(),
        final_labeled: episode.labeled_len(),
        anytime,
        trace,
        sets,
    })
}

fn check_supported<T: Real>(spec: &PolicySpec<T>, protocol: &TaskProtocol) -> Result<()> {
    if !spec.kind.supports(protocol.setting) {
        return Err(Error::UnsupportedColdStart(spec.name().to_string()));
    }
    Ok(())
}

/// Runs `episodes` seeded episodes. Episode `i` is drawn from the
/// episode stream at index `i` and the policy's own randomness from the
/// policy stream at `i`, so every policy sees the same tasks.
pub fn benchmark_episodes<T: Real>(
    pool: &FeaturePool<T>,
    spec: &PolicySpec<T>,
    protocol: &TaskProtocol,
    episodes: usize,
    seed: u64,
    record_anytime: bool,
) -> Result<Vec<EpisodeResult<T>>> {
    check_supported(spec, protocol)?;
    protocol.validate()?;
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let episode = sample_episode(pool, protocol, &mut rng_for(seed, i as u64, Stream::Episode))?;
            let mut policy = spec.build(rng_for(seed, i as u64, Stream::Policy))?;
            run_episode(episode, policy.as_mut(), record_anytime)
        })
        .collect()
}

pub fn run_benchmark<T: Real>(
    pool: &FeaturePool<T>,
    spec: &PolicySpec<T>,
    protocol: &TaskProtocol,
    episodes: usize,
    seed: u64,
    record_anytime: bool,
) -> Result<Report> {
    let results = benchmark_episodes(pool, spec, protocol, episodes, seed, record_anytime)?;
    Ok(Report::from_results(spec.name(), &results))
}

/// Mean and normal-approximation 95% half-width `1.96 s / sqrt(n)`; a
/// single sample has half-width 0.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    if n == 1 {
        return (mean, 0.0);
    }
    let var = m2 / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub policy: String,
    pub episodes: usize,
    pub mean_acc: f64,
    pub ci95: f64,
    pub mean_classes: f64,
    pub classes_ci95: f64,
    /// `(mean, ci95)` per step; empty when anytime accuracies were not recorded.
    pub anytime: Vec<(f64, f64)>,
}

impl Report {
    pub fn from_results<T: Real>(policy: &str, results: &[EpisodeResult<T>]) -> Self {
        let acc: Vec<f64> = results.iter().map(|r| r.final_accuracy.to_f64_lossy()).collect();
        let classes: Vec<f64> = results.iter().map(|r| r.distinct_classes as f64).collect();
        let (mean_acc, ci95) = mean_ci95(&acc);
        let (mean_classes, classes_ci95) = mean_ci95(&classes);
        let steps = results.first().map_or(0, |r| r.anytime.len());
        let anytime = if steps > 0 && results.iter().all(|r| r.anytime.len() == steps) {
            (0..steps)
                .map(|t| mean_ci95(&results.iter().map(|r| r.anytime[t].to_f64_lossy()).collect::<Vec<_>>()))
                .collect()
        } else {
            Vec::new()
        };
        Self { policy: policy.to_string(), episodes: results.len(), mean_acc, ci95, mean_classes, classes_ci95, anytime }
    }
}

/// One row per requested policy; `None` marks a policy the setting does
/// not support.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<(String, Option<Report>)>,
}

impl Comparison {
    pub fn get(&self, policy: &str) -> Option<&Report> {
        self.rows.iter().find(|(name, _)| name == policy).and_then(|(_, r)| r.as_ref())
    }
}

/// Benchmarks every policy on the same episode stream.
pub fn compare_policies<T: Real>(
    pool: &FeaturePool<T>,
    specs: &[PolicySpec<T>],
    protocol: &TaskProtocol,
    episodes: usize,
    seed: u64,
    record_anytime: bool,
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let report = if spec.kind.supports(protocol.setting) {
            Some(run_benchmark(pool, spec, protocol, episodes, seed, record_anytime)?)
        } else {
            None
        };
        rows.push((spec.name().to_string(), report));
    }
    Ok(Comparison { rows })
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const SUMMARY_HEADER: &str = "policy,episodes,mean_acc,ci95,mean_classes,classes_ci95";
pub const ANYTIME_HEADER: &str = "policy,step,mean_acc,ci95";

pub fn write_summary<W: Write>(mut w: W, rows: &[(String, Option<Report>)]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for (name, report) in rows {
        match report {
            Some(r) => writeln!(
                w,
                "{},{},{},{},{},{}",
                name,
                r.episodes,
                fmt_sig6(r.mean_acc),
                fmt_sig6(r.ci95),
                fmt_sig6(r.mean_classes),
                fmt_sig6(r.classes_ci95)
            )?,
            None => writeln!(w, "{name},-,-,-,-,-")?,
        }
    }
    Ok(())
}

pub fn write_anytime<W: Write>(mut w: W, reports: &[&Report]) -> std::io::Result<()> {
    writeln!(w, "{ANYTIME_HEADER}")?;
    for r in reports {
        for (t, (m, ci)) in r.anytime.iter().enumerate() {
            writeln!(w, "{},{},{},{}", r.policy, t, fmt_sig6(*m), fmt_sig6(*ci))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(0.5), "0.5");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(3.4472), "3.4472");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(0.0001234), "0.0001234");
        assert_eq!(fmt_sig6(0.00001234), "1.234e-05");
        assert_eq!(fmt_sig6(-2.0), "-2");
        assert_eq!(fmt_sig6(999999.5), "1e+06");
        assert_eq!(fmt_sig6(0.0), "0");
    }

    #[test]
    fn ci_conventions() {
        assert_eq!(mean_ci95(&[0.7]), (0.7, 0.0));
        assert_eq!(mean_ci95(&[0.4; 9]).1, 0.0);
        let n = 6;
        let xs: Vec<f64> = (0..2 * n).map(|i| (i % 2) as f64).collect();
        // squared deviations sum to n/2
        let want = 1.96 * (n as f64 / (2.0 * (2 * n - 1) as f64)).sqrt() / ((2 * n) as f64).sqrt();
        let (m, ci) = mean_ci95(&xs);
        assert_eq!(m, 0.5);
        assert!((ci - want).abs() < 1e-14);
    }

    #[test]
    fn unsupported_rows_render_dashes() {
        let mut out = Vec::new();
        write_summary(&mut out, &[("entropy".into(), None)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{SUMMARY_HEADER}\nentropy,-,-,-,-,-\n"));
    }
}
