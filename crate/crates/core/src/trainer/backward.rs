//! Reverse-mode gradients of the policy scores.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::policy_graph::{ForwardTrace, LayerTrace, MessageTrace, NormalizedRows, PhiMode, PolicyParams};
use crate::policy_graph::InterNorm;
use crate::scalar::Real;

struct MessageGrads<T> {
    dw: Array2<T>,
    /// Present only when input gradients were requested.
    inputs: Option<InputGrads<T>>,
}

struct InputGrads<T> {
    d_src_h: Array2<T>,
    d_dst_n: Array2<T>,
    d_src_n: Array2<T>,
}

fn relu_mask<T: Real>(dout: ArrayView2<T>, pre: &Array2<T>) -> Array2<T> {
    let mut d = dout.to_owned();
    Zip::from(&mut d).and(pre).for_each(|g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    d
}

#[allow(clippy::too_many_arguments)]
fn message_backward<T: Real>(
    t: &MessageTrace<T>,
    dst: &NormalizedRows<T>,
    src_h: &Array2<T>,
    src: &NormalizedRows<T>,
    w: &Array2<T>,
    mode: PhiMode,
    normalize: bool,
    dout: ArrayView2<T>,
    need_inputs: bool,
) -> MessageGrads<T> {
    let dpre = relu_mask(dout, &t.pre);
    let mut ds = Array2::zeros(dpre.raw_dim());
    let mut dz = Array1::zeros(dpre.nrows());
    for i in 0..dpre.nrows() {
        let zi = t.z[i];
        if zi == T::zero() {
            continue;
        }
        let row = dpre.row(i);
        ds.row_mut(i).assign(&row.mapv(|x| x / zi));
        if normalize {
            dz[i] = -row.dot(&t.pre.row(i)) / zi;
        }
    }
    let dproj = t.aff.t().dot(&ds);
    let dw = dproj.t().dot(src_h);
    if !need_inputs {
        return MessageGrads { dw, inputs: None };
    }
    let d_src_h = dproj.dot(w);
    let mut daff = ds.dot(&t.proj.t());
    if normalize {
        for (mut r, &g) in daff.rows_mut().into_iter().zip(&dz) {
            r.mapv_inplace(|x| x + g);
        }
    }
    let factor = match mode {
        PhiMode::ShiftedCosine => T::lit(0.5),
        PhiMode::Cosine => T::one(),
    };
    daff.mapv_inplace(|x| x * factor);
    let d_dst_n = daff.dot(&src.rows);
    let d_src_n = daff.t().dot(&dst.rows);
    MessageGrads { dw, inputs: Some(InputGrads { d_src_h, d_dst_n, d_src_n }) }
}

/// Pulls a gradient on unit rows back to the raw rows.
fn normalize_backward<T: Real>(dn: &Array2<T>, n: &NormalizedRows<T>) -> Array2<T> {
    let mut out = Array2::zeros(dn.raw_dim());
    for i in 0..dn.nrows() {
        let norm = n.norms[i];
        if norm == T::zero() {
            continue;
        }
        let u = n.rows.row(i);
        let g = dn.row(i);
        let proj = u.dot(&g);
        Zip::from(out.row_mut(i)).and(&g).and(&u).for_each(|o, &gi, &ui| *o = (gi - ui * proj) / norm);
    }
    out
}

fn fuse_backward<T: Real>(
    dout: &Array2<T>,
    pre: &Array2<T>,
    input: &Array2<T>,
    g: &Array2<T>,
    dg: &mut Array2<T>,
) -> Array2<T> {
    let dpre = relu_mask(dout.view(), pre);
    *dg += &dpre.t().dot(input);
    dpre.dot(g)
}

/// Returns gradients for the layer weights (accumulated into `grads`) and,
/// when `need_inputs`, for the layer inputs.
#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Real>(
    t: &LayerTrace<T>,
    p: &crate::policy_graph::LayerParams<T>,
    grads: &mut crate::policy_graph::LayerParams<T>,
    mode: PhiMode,
    inter_norm: bool,
    dl: &Array2<T>,
    du: &Array2<T>,
    need_inputs: bool,
) -> Option<(Array2<T>, Array2<T>)> {
    let d = p.fusion.nrows();
    let dx_l = fuse_backward(dl, &t.fuse_pre_l, &t.fuse_in_l, &p.fusion, &mut grads.fusion);
    let dx_u = fuse_backward(du, &t.fuse_pre_u, &t.fuse_in_u, &p.fusion, &mut grads.fusion);
    let (l, u) = (&t.norm_l, &t.norm_u);
    let (hl, hu) = (&t.input_l, &t.input_u);
    let g_intra_l =
        message_backward(&t.intra_l, l, hl, l, &p.w_labeled, mode, true, dx_l.slice(s![.., ..d]), need_inputs);
    let g_inter_l =
        message_backward(&t.inter_l, l, hu, u, &p.w_inter, mode, inter_norm, dx_l.slice(s![.., d..]), need_inputs);
    let g_intra_u =
        message_backward(&t.intra_u, u, hu, u, &p.w_unlabeled, mode, true, dx_u.slice(s![.., ..d]), need_inputs);
    let g_inter_u =
        message_backward(&t.inter_u, u, hl, l, &p.w_inter, mode, inter_norm, dx_u.slice(s![.., d..]), need_inputs);
    grads.w_labeled += &g_intra_l.dw;
    grads.w_unlabeled += &g_intra_u.dw;
    grads.w_inter += &g_inter_l.dw;
    grads.w_inter += &g_inter_u.dw;
    if !need_inputs {
        return None;
    }
    let il = g_intra_l.inputs.expect("requested");
    let el = g_inter_l.inputs.expect("requested");
    let iu = g_intra_u.inputs.expect("requested");
    let eu = g_inter_u.inputs.expect("requested");
    let dn_l = &il.d_dst_n + &il.d_src_n + &el.d_dst_n + &eu.d_src_n;
    let dn_u = &iu.d_dst_n + &iu.d_src_n + &eu.d_dst_n + &el.d_src_n;
    let dh_l = il.d_src_h + &eu.d_src_h + normalize_backward(&dn_l, l);
    let dh_u = iu.d_src_h + &el.d_src_h + normalize_backward(&dn_u, u);
    Some((dh_l, dh_u))
}

/// Gradient of `sum_i dscores[i] * score_i` with respect to every weight.
pub fn backward<T: Real>(trace: &ForwardTrace<T>, params: &PolicyParams<T>, dscores: &[T]) -> Result<PolicyParams<T>> {
    let n = trace.scores.len();
    if dscores.len() != n {
        return Err(Error::Shape(format!("{} score gradients for {n} scores", dscores.len())));
    }
    if trace.layers.len() != params.layers.len() {
        return Err(Error::Shape(format!("trace has {} layers, params {}", trace.layers.len(), params.layers.len())));
    }
    let cfg = &params.config;
    let mut grads = params.zeros_like();
    let ds = Array1::from(dscores.to_vec());
    let r = &params.regressor;
    let gr = &mut grads.regressor;
    gr.b2[0] = ds.sum();
    gr.w2 = trace.reg_hidden.t().dot(&ds);
    let slope = T::lit(cfg.leaky_slope);
    let mut dpre = ds.view().insert_axis(Axis(1)).dot(&r.w2.view().insert_axis(Axis(0)));
    Zip::from(&mut dpre).and(&trace.reg_pre).for_each(|g, &p| {
        if p <= T::zero() {
            *g *= slope;
        }
    });
    gr.w1 = dpre.t().dot(&trace.reg_in);
    gr.b1 = dpre.sum_axis(Axis(0));
    let dreg_in = dpre.dot(&r.w1);

    let d = cfg.hidden;
    let mode = cfg.phi_mode;
    let inter_norm = cfg.inter_norm == InterNorm::Normalized;
    let last = trace.layers.len() - 1;
    let mut dl = Array2::zeros(trace.layers[last].out_l.raw_dim());
    let mut du = Array2::zeros(trace.layers[last].out_u.raw_dim());
    for m in (0..trace.layers.len()).rev() {
        du += &dreg_in.slice(s![.., m * d..(m + 1) * d]);
        let next = layer_backward(
            &trace.layers[m],
            &params.layers[m],
            &mut grads.layers[m],
            mode,
            inter_norm,
            &dl,
            &du,
            m > 0,
        );
        if let Some((a, b)) = next {
            dl = a;
            du = b;
        }
    }
    Ok(grads)
}
