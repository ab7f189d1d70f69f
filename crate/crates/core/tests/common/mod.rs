#![allow(dead_code)]

use budget_fsl::dataset::{generate_synthetic, Episode, FeaturePool, Setting, Split, SyntheticSpec};
use budget_fsl::policy_graph::{InterNorm, PhiMode, PolicyConfig, PolicyParams};
use budget_fsl::seed::Rng;
use budget_fsl::{ClassId, InstanceId};
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Owned ingredients of an episode, so tests can rebuild it at will.
pub struct Case {
    pub pool: FeaturePool<f64>,
    pub setting: Setting,
    pub label_set: Vec<ClassId>,
    pub labeled: Vec<InstanceId>,
    pub unlabeled: Vec<InstanceId>,
    pub eval: Vec<InstanceId>,
    pub budget: usize,
}

impl Case {
    pub fn episode(&self) -> Episode<'_, f64> {
        Episode::from_parts(&self.pool, self.setting, self.label_set.clone(), &self.labeled, &self.unlabeled, &self.eval, self.budget)
            .unwrap()
    }
}

/// A small episode with random sizes. Cold cases have an empty labeled set
/// half of the time; warm cases label one instance per class plus extras.
pub fn random_case(r: &mut Rng) -> Case {
    let ways = r.random_range(2..=4);
    let dim = r.random_range(2..=6);
    let per_class = 8;
    let spread = r.random_range(0.05..0.8);
    let pool: FeaturePool<f64> =
        generate_synthetic(&SyntheticSpec::new(ways + 1, per_class, dim, spread, r.random())).unwrap();
    let label_set: Vec<ClassId> = pool.classes()[..ways].to_vec();
    let setting = if r.random_bool(0.5) { Setting::Cold } else { Setting::Warm };
    let mut by_class: Vec<Vec<InstanceId>> = label_set
        .iter()
        .map(|&c| {
            let mut ids: Vec<InstanceId> = pool.rows_of(c).iter().map(|&row| pool.id(row)).collect();
            ids.shuffle(r);
            ids
        })
        .collect();
    let mut labeled = Vec::new();
    match setting {
        Setting::Warm => {
            for ids in &mut by_class {
                labeled.push(ids.pop().unwrap());
            }
        }
        Setting::Cold => {
            if r.random_bool(0.5) {
                for _ in 0..r.random_range(1..=3) {
                    let k = r.random_range(0..ways);
                    labeled.push(by_class[k].pop().unwrap());
                }
            }
        }
    }
    let mut rest: Vec<InstanceId> = by_class.into_iter().flatten().collect();
    rest.shuffle(r);
    let n_unlabeled = r.random_range(1..=7);
    let unlabeled = rest[..n_unlabeled].to_vec();
    let eval = rest[n_unlabeled..n_unlabeled + 6].to_vec();
    labeled.shuffle(r);
    Case { pool, setting, label_set, labeled, unlabeled, eval, budget: 1 }
}

pub fn random_config(r: &mut Rng, case: &Case) -> PolicyConfig {
    PolicyConfig {
        layers: r.random_range(1..=3),
        hidden: r.random_range(2..=7),
        regressor_hidden: r.random_range(1..=5),
        phi_mode: if r.random_bool(0.8) { PhiMode::ShiftedCosine } else { PhiMode::Cosine },
        inter_norm: if r.random_bool(0.7) { InterNorm::Normalized } else { InterNorm::Unnormalized },
        ..PolicyConfig::new(case.label_set.len(), case.setting, case.pool.dim())
    }
}

pub fn random_params(r: &mut Rng, config: &PolicyConfig) -> PolicyParams<f64> {
    let mut p = PolicyParams::init(config, r).unwrap();
    p.regressor.b1.mapv_inplace(|_| r.random_range(-0.5..0.5));
    p.regressor.b2[0] = r.random_range(-0.5..0.5);
    p
}

pub fn meta_test_pool(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> FeaturePool<f64> {
    generate_synthetic(&SyntheticSpec::new(classes, per_class, dim, spread, seed).split(Split::MetaTest)).unwrap()
}

// ---- dense reference evaluation of the graph policy -------------------------

type Mat = Vec<Vec<f64>>;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    c.clamp(-1.0, 1.0)
}

fn phi(a: &[f64], b: &[f64], mode: PhiMode) -> f64 {
    match mode {
        PhiMode::ShiftedCosine => 0.5 * (1.0 + cos(a, b)),
        PhiMode::Cosine => cos(a, b),
    }
}

fn matvec(w: &ndarray::Array2<f64>, x: &[f64]) -> Vec<f64> {
    (0..w.nrows()).map(|i| (0..w.ncols()).map(|j| w[[i, j]] * x[j]).sum()).collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn message(dst: &Mat, src: &Mat, w: &ndarray::Array2<f64>, mode: PhiMode, normalize: bool) -> Mat {
    let out_dim = w.nrows();
    dst.iter()
        .map(|hi| {
            let mut acc = vec![0.0; out_dim];
            let mut z = 0.0;
            for hj in src {
                let a = phi(hi, hj, mode);
                z += a;
                for (o, v) in acc.iter_mut().zip(matvec(w, hj)) {
                    *o += a * v;
                }
            }
            let z = if normalize { z } else { 1.0 };
            if z == 0.0 {
                vec![0.0; out_dim]
            } else {
                relu(acc.into_iter().map(|x| x / z).collect())
            }
        })
        .collect()
}

/// Scores computed straight from the layer equations with plain loops.
pub fn dense_scores(episode: &Episode<'_, f64>, params: &PolicyParams<f64>) -> Vec<f64> {
    let cfg = &params.config;
    let labels = episode.label_set();
    let ways = labels.len();
    let labeled: Vec<(Vec<f64>, ClassId)> = episode.labeled().map(|(z, c)| (z.to_vec(), c)).collect();
    let unlabeled: Vec<Vec<f64>> = episode.unlabeled().map(|(_, z)| z.to_vec()).collect();

    // class centers, increasing class id
    let mut present: Vec<ClassId> = labeled.iter().map(|(_, c)| *c).collect();
    present.sort();
    present.dedup();
    let centers: Vec<Vec<f64>> = present
        .iter()
        .map(|&c| {
            let members: Vec<&Vec<f64>> = labeled.iter().filter(|(_, k)| *k == c).map(|(z, _)| z).collect();
            (0..episode.dim()).map(|j| members.iter().map(|z| z[j]).sum::<f64>() / members.len() as f64).collect()
        })
        .collect();
    let probs = |z: &[f64]| -> Vec<f64> {
        let logits: Vec<f64> =
            centers.iter().map(|m| -m.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    };
    let node = |z: &[f64], class: Option<ClassId>| -> Vec<f64> {
        let mut h = z.to_vec();
        let p = if centers.is_empty() { Vec::new() } else { probs(z) };
        match cfg.setting {
            Setting::Warm => {
                let mut field = vec![0.0; ways];
                for (c, pc) in present.iter().zip(&p) {
                    field[labels.iter().position(|l| l == c).unwrap()] = *pc;
                }
                h.extend(field);
            }
            Setting::Cold => {
                if p.is_empty() {
                    h.extend([0.0, 0.0, 0.0]);
                } else {
                    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
                    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mean = p.iter().sum::<f64>() / p.len() as f64;
                    h.extend([min, mean, max]);
                }
            }
        }
        let mut onehot = vec![0.0; ways];
        if let Some(c) = class {
            onehot[labels.iter().position(|l| *l == c).unwrap()] = 1.0;
        }
        h.extend(onehot);
        h
    };
    let mut hl: Mat = labeled.iter().map(|(z, c)| node(z, Some(*c))).collect();
    let mut hu: Mat = unlabeled.iter().map(|z| node(z, None)).collect();
    let normalize_inter = cfg.inter_norm == InterNorm::Normalized;
    let mut outs: Vec<Mat> = Vec::new();
    for lp in &params.layers {
        let intra_l = message(&hl, &hl, &lp.w_labeled, cfg.phi_mode, true);
        let intra_u = message(&hu, &hu, &lp.w_unlabeled, cfg.phi_mode, true);
        let inter_l = message(&hl, &hu, &lp.w_inter, cfg.phi_mode, normalize_inter);
        let inter_u = message(&hu, &hl, &lp.w_inter, cfg.phi_mode, normalize_inter);
        let fuse = |a: &Mat, b: &Mat| -> Mat {
            a.iter().zip(b).map(|(x, y)| relu(matvec(&lp.fusion, &[x.clone(), y.clone()].concat()))).collect()
        };
        hl = fuse(&intra_l, &inter_l);
        hu = fuse(&intra_u, &inter_u);
        outs.push(hu.clone());
    }
    let r = &params.regressor;
    (0..unlabeled.len())
        .map(|i| {
            let x: Vec<f64> = outs.iter().flat_map(|o| o[i].clone()).collect();
            let pre = matvec(&r.w1, &x);
            let hidden: Vec<f64> = pre
                .iter()
                .zip(r.b1.iter())
                .map(|(a, b)| {
                    let v = a + b;
                    if v > 0.0 {
                        v
                    } else {
                        cfg.leaky_slope * v
                    }
                })
                .collect();
            hidden.iter().zip(r.w2.iter()).map(|(h, w)| h * w).sum::<f64>() + r.b2[0]
        })
        .collect()
}

/// Accuracy of the prototype classifier built from `labeled`, by a direct
/// nearest-center count.
pub fn brute_accuracy(pool: &FeaturePool<f64>, labeled: &[InstanceId], eval: &[InstanceId]) -> f64 {
    let mut classes: Vec<ClassId> = labeled.iter().map(|&id| pool.class_of(id).unwrap()).collect();
    classes.sort();
    classes.dedup();
    let vec_of = |id: InstanceId| pool.vector(pool.row_of(id).unwrap());
    let centers: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let members: Vec<InstanceId> = labeled.iter().copied().filter(|&id| pool.class_of(id) == Some(c)).collect();
            (0..pool.dim()).map(|j| members.iter().map(|&id| vec_of(id)[j]).sum::<f64>() / members.len() as f64).collect()
        })
        .collect();
    let mut correct = 0;
    for &id in eval {
        let z = vec_of(id);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in centers.iter().enumerate() {
            let d: f64 = m.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if classes[best] == pool.class_of(id).unwrap() {
            correct += 1;
        }
    }
    correct as f64 / eval.len() as f64
}
