mod common;

use approx::assert_relative_eq;
use budget_fsl::dataset::{sample_episode, Episode, FeaturePool, Setting, Split, TaskProtocol};
use budget_fsl::policies::{
    entropy, entropy_scores, expert_scores, select_entropy, select_expert, select_kcenter, select_minmaxcos,
    select_random,
};
use budget_fsl::protonet::compute_prototypes;
use budget_fsl::seed::{rng_for, Stream};
use budget_fsl::{ClassId, InstanceId, PolicyKind, PolicySpec};
use common::{brute_accuracy, meta_test_pool, rng};
use rand::Rng as _;
use std::sync::Arc;

fn ids(v: &[u32]) -> Vec<InstanceId> {
    v.iter().map(|&i| InstanceId(i)).collect()
}

fn pool_of(dim: usize, rows: &[(u32, u32, &[f64])]) -> FeaturePool<f64> {
    FeaturePool::from_rows(dim, Split::MetaTest, rows.iter().map(|&(i, c, v)| (InstanceId(i), ClassId(c), v.to_vec())).collect())
        .unwrap()
}

#[test]
fn expert_matches_rebuild_and_evaluate() {
    let pool = meta_test_pool(10, 21, 6, 0.6, 3);
    for (i, setting) in (0..60).zip([Setting::Cold, Setting::Warm].into_iter().cycle()) {
        let mut ep = sample_episode(&pool, &TaskProtocol::new(5, 2, setting), &mut rng_for(8, i, Stream::Episode)).unwrap();
        let steps = i as usize % 4;
        for _ in 0..steps {
            let id = ep.unlabeled_id(0);
            ep.reveal_label(id).unwrap();
        }
        let s = expert_scores(&ep).unwrap();
        assert_eq!(s.ids, ep.unlabeled_ids());
        for (k, &cand) in s.ids.iter().enumerate() {
            let mut labeled = ep.labeled_ids();
            labeled.push(cand);
            let rebuilt = compute_prototypes(labeled.iter().map(|&id| {
                let row = pool.row_of(id).unwrap();
                (pool.vector(row), pool.label(row))
            }))
            .evaluate_accuracy(ep.eval())
            .unwrap();
            assert!((s.accuracies[k] - rebuilt).abs() <= 1e-9);
            assert!((s.accuracies[k] - brute_accuracy(&pool, &labeled, &ep.eval_ids())).abs() <= 1e-9);
        }
    }
}

#[test]
fn cold_single_candidate_scores_one_fifth() {
    let pool = meta_test_pool(5, 20, 4, 0.3, 1);
    let ep = sample_episode(&pool, &TaskProtocol::new(5, 1, Setting::Cold), &mut rng(4)).unwrap();
    let s = expert_scores(&ep).unwrap();
    assert!(s.accuracies.iter().all(|&a| (a - 0.2).abs() < 1e-15));
    // all tied: lowest id wins
    assert_eq!(select_expert(&ep).unwrap(), *ep.unlabeled_ids().iter().min().unwrap());
}

#[test]
fn duplicate_of_labeled_point_keeps_accuracy() {
    let pool = pool_of(
        2,
        &[
            (0, 0, &[0.0, 0.0]),
            (1, 1, &[1.0, 0.0]),
            (2, 0, &[0.0, 0.0]),
            (3, 1, &[0.7, 0.1]),
            (4, 0, &[0.4, 0.0]),
            (5, 1, &[0.6, 0.0]),
            (6, 0, &[0.45, 0.3]),
        ],
    );
    let ep = Episode::from_parts(&pool, Setting::Warm, vec![ClassId(0), ClassId(1)], &ids(&[0, 1]), &ids(&[2, 3]), &ids(&[4, 5, 6]), 1)
        .unwrap();
    let current = compute_prototypes(ep.labeled()).evaluate_accuracy(ep.eval()).unwrap();
    assert_eq!(expert_scores(&ep).unwrap().accuracies[0], current);
}

#[test]
fn expert_pick_dominates_every_alternative() {
    let pool = meta_test_pool(8, 21, 5, 0.8, 6);
    for i in 0..40 {
        let ep = sample_episode(&pool, &TaskProtocol::new(4, 1, Setting::Warm), &mut rng_for(2, i, Stream::Episode)).unwrap();
        let best = select_expert(&ep).unwrap();
        let acc_after = |id: InstanceId| {
            let mut l = ep.labeled_ids();
            l.push(id);
            brute_accuracy(&pool, &l, &ep.eval_ids())
        };
        let a = acc_after(best);
        assert!(ep.unlabeled_ids().into_iter().all(|id| acc_after(id) <= a + 1e-12));
    }
}

#[test]
fn random_is_uniform() {
    let pool = meta_test_pool(5, 20, 3, 0.3, 1);
    let ep = sample_episode(&pool, &TaskProtocol::new(5, 1, Setting::Cold), &mut rng(1)).unwrap();
    let mut r = rng(99);
    let n = 100_000usize;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..n {
        *counts.entry(select_random(&ep, &mut r).unwrap()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 50);
    let p = 1.0 / 50.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for (_, c) in counts {
        assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma);
    }
    let (mut a, mut b) = (rng(5), rng(5));
    assert_eq!(select_random(&ep, &mut a).unwrap(), select_random(&ep, &mut b).unwrap());
}

#[test]
fn random_with_one_candidate() {
    let pool = pool_of(1, &[(0, 0, &[0.0]), (1, 0, &[1.0])]);
    let ep = Episode::from_parts(&pool, Setting::Cold, vec![ClassId(0)], &[], &ids(&[1]), &ids(&[0]), 1).unwrap();
    assert_eq!(select_random(&ep, &mut rng(0)).unwrap(), InstanceId(1));
}

#[test]
fn entropy_hand_episode() {
    let pool = pool_of(
        1,
        &[(0, 0, &[0.0]), (1, 1, &[1.0]), (2, 0, &[0.1]), (3, 1, &[0.5]), (4, 0, &[0.8]), (5, 0, &[0.0])],
    );
    let ep = Episode::from_parts(&pool, Setting::Warm, vec![ClassId(0), ClassId(1)], &ids(&[0, 1]), &ids(&[2, 3, 4]), &ids(&[5]), 1)
        .unwrap();
    let protos = compute_prototypes(ep.labeled());
    let hand = |x: f64| {
        // logits -x^2 and -(x-1)^2
        let p0 = 1.0 / (1.0 + (-(x - 1.0).powi(2) + x * x).exp());
        let p1 = 1.0 - p0;
        -(p0 * p0.ln() + p1 * p1.ln())
    };
    let s = entropy_scores(&ep, &protos).unwrap();
    for (got, x) in s.iter().zip([0.1, 0.5, 0.8]) {
        assert_relative_eq!(*got, hand(x), epsilon = 1e-12);
    }
    assert_eq!(select_entropy(&ep, &protos).unwrap(), InstanceId(3));
    assert_relative_eq!(entropy(&[0.2; 5]), 5f64.ln(), epsilon = 1e-15);
}

#[test]
fn minmaxcos_matches_exhaustive_search() {
    let mut r = rng(12);
    for _ in 0..200 {
        let rows: Vec<(u32, u32, Vec<f64>)> =
            (0..7).map(|i| (i, i % 2, (0..3).map(|_| r.random_range(-1.0..1.0)).collect())).collect();
        let pool = FeaturePool::from_rows(3, Split::MetaTest, rows.iter().map(|(i, c, v)| (InstanceId(*i), ClassId(*c), v.clone())).collect())
            .unwrap();
        let ep = Episode::from_parts(&pool, Setting::Warm, vec![ClassId(0), ClassId(1)], &ids(&[0, 1]), &ids(&[2, 3, 4, 5]), &ids(&[6]), 1)
            .unwrap();
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        let best = (2..6)
            .min_by(|&i, &j| {
                let m = |k: usize| cos(&rows[k].2, &rows[0].2).max(cos(&rows[k].2, &rows[1].2));
                m(i).partial_cmp(&m(j)).unwrap()
            })
            .unwrap();
        assert_eq!(select_minmaxcos(&ep, &mut r).unwrap(), InstanceId(best as u32));
    }
}

#[test]
fn kcenter_matches_exhaustive_farthest_point() {
    let mut r = rng(13);
    for _ in 0..100 {
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..2).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let pool = FeaturePool::from_rows(
            2,
            Split::MetaTest,
            rows.iter().enumerate().map(|(i, v)| (InstanceId(i as u32), ClassId(0), v.clone())).collect(),
        )
        .unwrap();
        let ep = Episode::from_parts(&pool, Setting::Warm, vec![ClassId(0)], &ids(&[0, 1, 2]), &ids(&(3..20).collect::<Vec<_>>()), &[], 1)
            .unwrap();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let best = (3..20)
            .max_by(|&i, &j| {
                let m = |k: usize| (0..3).map(|c| dist(&rows[k], &rows[c])).fold(f64::INFINITY, f64::min);
                m(i).partial_cmp(&m(j)).unwrap()
            })
            .unwrap();
        assert_eq!(select_kcenter(&ep, &mut r).unwrap(), InstanceId(best as u32));
    }
}

#[test]
fn kcenter_skips_coincident_candidate() {
    let pool = pool_of(1, &[(0, 0, &[0.0]), (1, 0, &[0.0]), (2, 0, &[0.01])]);
    let ep = Episode::from_parts(&pool, Setting::Warm, vec![ClassId(0)], &ids(&[0]), &ids(&[1, 2]), &[], 1).unwrap();
    assert_eq!(select_kcenter(&ep, &mut rng(0)).unwrap(), InstanceId(2));
}

#[test]
fn bootstrap_picks_are_spread_out() {
    let pool = meta_test_pool(5, 20, 3, 0.3, 1);
    let ep = sample_episode(&pool, &TaskProtocol::new(5, 1, Setting::Cold), &mut rng(1)).unwrap();
    let picks: std::collections::BTreeSet<InstanceId> =
        (0..200).map(|s| select_minmaxcos(&ep, &mut rng(s)).unwrap()).collect();
    assert!(picks.len() > 30);
    let picks: std::collections::BTreeSet<InstanceId> =
        (0..200).map(|s| select_kcenter(&ep, &mut rng(s)).unwrap()).collect();
    assert!(picks.len() > 30);
}

#[test]
fn deterministic_policies_repeat_their_picks() {
    let pool = meta_test_pool(8, 21, 4, 0.4, 2);
    let protocol = TaskProtocol::new(4, 1, Setting::Warm);
    let cfg = budget_fsl::PolicyConfig { hidden: 8, regressor_hidden: 4, ..budget_fsl::PolicyConfig::new(4, Setting::Warm, 4) };
    let params = Arc::new(budget_fsl::PolicyParams::init(&cfg, &mut rng(3)).unwrap());
    for kind in PolicyKind::ALL {
        let spec = if kind == PolicyKind::FlGcn { PolicySpec::graph(params.clone()) } else { PolicySpec::new(kind) };
        for i in 0..10 {
            let ep = sample_episode(&pool, &protocol, &mut rng_for(1, i, Stream::Episode)).unwrap();
            let a = spec.build(rng(i)).unwrap().select(&ep).unwrap();
            let b = spec.build(rng(i + 1000)).unwrap().select(&ep).unwrap();
            if kind != PolicyKind::Random {
                assert_eq!(a, b, "{kind}");
            }
        }
    }
}

#[test]
fn entropy_is_unsupported_in_cold_start() {
    let pool = meta_test_pool(5, 20, 3, 0.3, 1);
    let ep = sample_episode(&pool, &TaskProtocol::new(5, 1, Setting::Cold), &mut rng(1)).unwrap();
    let mut p = PolicySpec::<f64>::new(PolicyKind::Entropy).build(rng(0)).unwrap();
    assert!(matches!(p.select(&ep), Err(budget_fsl::Error::UnsupportedColdStart(_))));
    assert!(!PolicyKind::Entropy.supports(Setting::Cold));
    assert!(PolicyKind::Entropy.supports(Setting::Warm));
}
