use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use super::config::{InterNorm, PolicyConfig};
use super::ops::{message_forward, normalize_rows, relu, MessageTrace, NormalizedRows};
use super::params::{LayerParams, PolicyParams};
use crate::dataset::{Episode, Setting};
use crate::error::{Error, Result};
use crate::ids::InstanceId;
use crate::protonet::{compute_prototypes, PrototypeSet};
use crate::scalar::Real;

/// Layer-0 node representations `[z; p; o]` for both component graphs,
/// aligned with the episode's current labeled and unlabeled order.
#[derive(Clone, Debug)]
pub struct GraphState<T> {
    pub labeled_ids: Vec<InstanceId>,
    pub unlabeled_ids: Vec<InstanceId>,
    pub labeled: Array2<T>,
    pub unlabeled: Array2<T>,
}

fn p_field<T: Real>(
    z: &[T],
    protos: &PrototypeSet<T>,
    episode: &Episode<'_, T>,
    setting: Setting,
    out: &mut [T],
) -> Result<()> {
    out.fill(T::zero());
    if protos.is_empty() {
        return Ok(());
    }
    let probs = protos.predict_proba(z)?;
    match setting {
        Setting::Warm => {
            for (&class, &p) in probs.classes.iter().zip(&probs.probs) {
                if let Some(k) = episode.class_index(class) {
                    out[k] = p;
                }
            }
        }
        Setting::Cold => {
            let ps = &probs.probs;
            let min = ps.iter().copied().fold(T::infinity(), T::min);
            let max = ps.iter().copied().fold(T::neg_infinity(), T::max);
            let mean = ps.iter().copied().sum::<T>() / T::from_usize(ps.len()).unwrap();
            out.copy_from_slice(&[min, mean, max]);
        }
    }
    Ok(())
}

pub fn build_node_inputs<T: Real>(
    episode: &Episode<'_, T>,
    protos: &PrototypeSet<T>,
    config: &PolicyConfig,
) -> Result<GraphState<T>> {
    if episode.dim() != config.feature_dim {
        return Err(Error::Config(format!(
            "episode features have dim {}, policy expects {}",
            episode.dim(),
            config.feature_dim
        )));
    }
    if episode.ways() != config.ways {
        return Err(Error::Config(format!("episode is {}-way, policy expects {}", episode.ways(), config.ways)));
    }
    if episode.setting() != config.setting {
        return Err(Error::Config(format!(
            "episode uses {} start, policy was built for {} start",
            episode.setting(),
            config.setting
        )));
    }
    let d = config.feature_dim;
    let pd = config.p_field_dim();
    let width = config.input_dim();

    let mut labeled = Array2::zeros((episode.labeled_len(), width));
    for (mut row, (z, class)) in labeled.rows_mut().into_iter().zip(episode.labeled()) {
        let row = row.as_slice_mut().expect("standard layout");
        row[..d].copy_from_slice(z);
        p_field(z, protos, episode, config.setting, &mut row[d..d + pd])?;
        let k = episode.class_index(class).expect("labeled class is in the label set");
        row[d + pd + k] = T::one();
    }
    let mut unlabeled = Array2::zeros((episode.unlabeled_len(), width));
    for (mut row, (_, z)) in unlabeled.rows_mut().into_iter().zip(episode.unlabeled()) {
        let row = row.as_slice_mut().expect("standard layout");
        row[..d].copy_from_slice(z);
        p_field(z, protos, episode, config.setting, &mut row[d..d + pd])?;
    }
    Ok(GraphState { labeled_ids: episode.labeled_ids(), unlabeled_ids: episode.unlabeled_ids(), labeled, unlabeled })
}

/// Everything one layer computed, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    pub input_l: Array2<T>,
    pub input_u: Array2<T>,
    pub norm_l: NormalizedRows<T>,
    pub norm_u: NormalizedRows<T>,
    pub intra_l: MessageTrace<T>,
    pub intra_u: MessageTrace<T>,
    /// Labeled nodes receiving from unlabeled nodes.
    pub inter_l: MessageTrace<T>,
    /// Unlabeled nodes receiving from labeled nodes.
    pub inter_u: MessageTrace<T>,
    pub fuse_in_l: Array2<T>,
    pub fuse_pre_l: Array2<T>,
    pub out_l: Array2<T>,
    pub fuse_in_u: Array2<T>,
    pub fuse_pre_u: Array2<T>,
    pub out_u: Array2<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub state: GraphState<T>,
    pub layers: Vec<LayerTrace<T>>,
    pub reg_in: Array2<T>,
    pub reg_pre: Array2<T>,
    pub reg_hidden: Array2<T>,
    pub scores: Array1<T>,
}

fn layer_forward<T: Real>(
    hl: Array2<T>,
    hu: Array2<T>,
    p: &LayerParams<T>,
    config: &PolicyConfig,
) -> LayerTrace<T> {
    let mode = config.phi_mode;
    let inter_norm = config.inter_norm == InterNorm::Normalized;
    let norm_l = normalize_rows(hl.view());
    let norm_u = normalize_rows(hu.view());
    let intra_l = message_forward(&norm_l, hl.view(), &norm_l, p.w_labeled.view(), mode, true);
    let intra_u = message_forward(&norm_u, hu.view(), &norm_u, p.w_unlabeled.view(), mode, true);
    let inter_l = message_forward(&norm_l, hu.view(), &norm_u, p.w_inter.view(), mode, inter_norm);
    let inter_u = message_forward(&norm_u, hl.view(), &norm_l, p.w_inter.view(), mode, inter_norm);
    let fuse = |a: &Array2<T>, b: &Array2<T>| {
        let x = concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match");
        let pre = x.dot(&p.fusion.t());
        let out = relu(&pre);
        (x, pre, out)
    };
    let (fuse_in_l, fuse_pre_l, out_l) = fuse(&intra_l.out, &inter_l.out);
    let (fuse_in_u, fuse_pre_u, out_u) = fuse(&intra_u.out, &inter_u.out);
    LayerTrace {
        input_l: hl,
        input_u: hu,
        norm_l,
        norm_u,
        intra_l,
        intra_u,
        inter_l,
        inter_u,
        fuse_in_l,
        fuse_pre_l,
        out_l,
        fuse_in_u,
        fuse_pre_u,
        out_u,
    }
}

fn check_shapes<T: Real>(state: &GraphState<T>, params: &PolicyParams<T>) -> Result<()> {
    let cfg = &params.config;
    if params.layers.len() != cfg.layers {
        return Err(Error::Shape(format!("{} layer blocks for a {}-layer config", params.layers.len(), cfg.layers)));
    }
    for (m, l) in params.layers.iter().enumerate() {
        let want = (cfg.hidden, cfg.layer_input_dim(m));
        for w in [&l.w_labeled, &l.w_unlabeled, &l.w_inter] {
            if w.dim() != want {
                return Err(Error::Shape(format!("layer {} weight {:?}, expected {want:?}", m + 1, w.dim())));
            }
        }
        if l.fusion.dim() != (cfg.hidden, 2 * cfg.hidden) {
            return Err(Error::Shape(format!("layer {} fusion {:?}", m + 1, l.fusion.dim())));
        }
    }
    let r = &params.regressor;
    if r.w1.dim() != (cfg.regressor_hidden, cfg.layers * cfg.hidden)
        || r.b1.len() != cfg.regressor_hidden
        || r.w2.len() != cfg.regressor_hidden
        || r.b2.len() != 1
    {
        return Err(Error::Shape("regressor blocks do not match config".into()));
    }
    if state.labeled.ncols() != cfg.input_dim() || state.unlabeled.ncols() != cfg.input_dim() {
        return Err(Error::Shape(format!("node inputs have width {}, expected {}", state.unlabeled.ncols(), cfg.input_dim())));
    }
    Ok(())
}

/// Runs the graph network on prepared node inputs.
pub fn forward_from_state<T: Real>(state: GraphState<T>, params: &PolicyParams<T>) -> Result<ForwardTrace<T>> {
    if state.unlabeled.nrows() == 0 {
        return Err(Error::NoCandidates);
    }
    check_shapes(&state, params)?;
    let cfg = &params.config;
    let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(cfg.layers);
    let mut hl = state.labeled.clone();
    let mut hu = state.unlabeled.clone();
    for p in &params.layers {
        let t = layer_forward(hl, hu, p, cfg);
        hl = t.out_l.clone();
        hu = t.out_u.clone();
        layers.push(t);
    }
    let outs: Vec<ArrayView2<T>> = layers.iter().map(|t| t.out_u.view()).collect();
    let reg_in = concatenate(Axis(1), &outs).expect("row counts match");
    let r = &params.regressor;
    let reg_pre = reg_in.dot(&r.w1.t()) + &r.b1;
    let slope = T::lit(cfg.leaky_slope);
    let reg_hidden = reg_pre.mapv(|v| if v > T::zero() { v } else { slope * v });
    let scores = reg_hidden.dot(&r.w2) + r.b2[0];
    Ok(ForwardTrace { state, layers, reg_in, reg_pre, reg_hidden, scores })
}

/// Informativeness score for every unlabeled instance, in the episode's
/// unlabeled order, plus the full activation trace.
pub fn forward_scores<T: Real>(episode: &Episode<'_, T>, params: &PolicyParams<T>) -> Result<ForwardTrace<T>> {
    if episode.unlabeled_len() == 0 {
        return Err(Error::NoCandidates);
    }
    let protos = compute_prototypes(episode.labeled());
    let state = build_node_inputs(episode, &protos, &params.config)?;
    forward_from_state(state, params)
}
