//! Finite-difference check of the policy backward pass on tiny episodes.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::dataset::{Episode, FeaturePool, Setting, Split};
use crate::error::Result;
use crate::ids::{ClassId, InstanceId};
use crate::policy_graph::{forward_scores, PolicyConfig, PolicyParams};
use crate::seed::{rng_for, Rng, Stream};
use crate::trainer::{backward, margin_rank_loss, StepSupervision};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Lower bound on the relative-error denominator, so entries whose true
/// gradient is ~0 are compared against finite-difference rounding noise
/// on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckCase {
    pub label: String,
    pub max_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub entries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub cases: Vec<GradcheckCase>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < GRADCHECK_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

const WAYS: usize = 2;
const DIM: usize = 4;

/// Two classes, 6 instances each, Gaussian features.
fn tiny_pool(rng: &mut Rng) -> FeaturePool<f64> {
    let rows = (0..2 * 6)
        .map(|i| {
            let f: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
            (InstanceId(i as u32), ClassId((i % 2) as u32), f)
        })
        .collect();
    FeaturePool::from_rows(DIM, Split::MetaTrain, rows).expect("valid tiny pool")
}

fn ids(xs: &[u32]) -> Vec<InstanceId> {
    xs.iter().copied().map(InstanceId).collect()
}

fn loss(episode: &Episode<'_, f64>, params: &PolicyParams<f64>, expert: &[f64]) -> Result<(f64, Vec<f64>)> {
    let trace = forward_scores(episode, params)?;
    let sup = StepSupervision {
        ids: trace.state.unlabeled_ids.clone(),
        expert: expert.to_vec(),
        scores: trace.scores.to_vec(),
        current_accuracy: 0.0,
    };
    margin_rank_loss(&sup)
}

fn check_case(label: &str, episode: &Episode<'_, f64>, setting: Setting, rng: &mut Rng) -> Result<GradcheckCase> {
    let config = PolicyConfig { layers: 2, hidden: 6, regressor_hidden: 5, ..PolicyConfig::new(WAYS, setting, DIM) };
    let mut params = PolicyParams::init(&config, rng)?;
    // nonzero biases exercise the bias paths
    params.regressor.b1.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    params.regressor.b2[0] = rng.random_range(-0.3..0.3);
    let n = episode.unlabeled_len();
    // distinct accuracies, so every pair takes part in the loss
    let mut expert: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) / (n as f64 + 1.0)).collect();
    for i in (1..n).rev() {
        expert.swap(i, rng.random_range(0..=i));
    }

    let trace = forward_scores(episode, &params)?;
    let (_, dscores) = loss(episode, &params, &expert)?;
    let grads = backward(&trace, &params, &dscores)?;

    let names: Vec<(String, usize)> = params.blocks().iter().map(|(n, _, b)| (n.clone(), b.len())).collect();
    let mut worst = (0.0f64, String::new(), 0usize);
    let mut entries = 0;
    for (block, (name, len)) in names.into_iter().enumerate() {
        for k in 0..len {
            let orig = params.blocks()[block].2[k];
            params.blocks_mut()[block].1[k] = orig + GRADCHECK_STEP;
            let plus = loss(episode, &params, &expert)?.0;
            params.blocks_mut()[block].1[k] = orig - GRADCHECK_STEP;
            let minus = loss(episode, &params, &expert)?.0;
            params.blocks_mut()[block].1[k] = orig;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let analytic = grads.blocks()[block].2[k];
            let err = relative_error(analytic, numeric);
            entries += 1;
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, name.clone(), k);
            }
        }
    }
    Ok(GradcheckCase { label: label.to_string(), max_rel_error: worst.0, worst_block: worst.1, worst_index: worst.2, entries })
}

/// Runs the warm, cold and empty-labeled cold cases for one seed.
pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut rng = rng_for(seed, 0, Stream::Synthetic);
    let pool = tiny_pool(&mut rng);
    let labels = vec![ClassId(0), ClassId(1)];
    let eval = ids(&[5, 6, 7, 8, 9, 10, 11]);
    let mut cases = Vec::new();
    for (label, setting, labeled) in [
        ("warm", Setting::Warm, ids(&[0, 1])),
        ("cold", Setting::Cold, ids(&[0, 1])),
        ("cold-empty", Setting::Cold, Vec::new()),
    ] {
        let episode = Episode::from_parts(&pool, setting, labels.clone(), &labeled, &ids(&[2, 3, 4]), &eval, 1)?;
        cases.push(check_case(label, &episode, setting, &mut rng)?);
    }
    Ok(GradcheckReport { seed, cases })
}
