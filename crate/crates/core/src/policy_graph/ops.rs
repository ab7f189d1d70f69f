//! Message-passing building blocks. Node representations are rows.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis, Zip};

use super::config::{InterNorm, PhiMode};
use crate::error::{Error, Result};
use crate::scalar::{cosine, Real};

/// Pairwise node affinity `phi(a, b)`.
pub fn affinity<T: Real>(a: &[T], b: &[T], mode: PhiMode) -> T {
    let c = cosine(a, b);
    match mode {
        PhiMode::ShiftedCosine => (T::one() + c) * T::lit(0.5),
        PhiMode::Cosine => c,
    }
}

/// Rows scaled to unit length; zero rows stay zero.
#[derive(Clone, Debug)]
pub struct NormalizedRows<T> {
    pub rows: Array2<T>,
    pub norms: Array1<T>,
}

pub(crate) fn normalize_rows<T: Real>(h: ArrayView2<T>) -> NormalizedRows<T> {
    let norms: Array1<T> = h.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut rows = h.to_owned();
    for (mut r, &n) in rows.rows_mut().into_iter().zip(&norms) {
        if n > T::zero() {
            r.mapv_inplace(|x| x / n);
        }
    }
    NormalizedRows { rows, norms }
}

/// Intermediates of one affinity-weighted message `dst <- src`.
#[derive(Clone, Debug)]
pub struct MessageTrace<T> {
    /// `phi(dst_i, src_j)`, shape `(n_dst, n_src)`.
    pub aff: Array2<T>,
    /// Per-destination divisor; zero means the message was zeroed.
    pub z: Array1<T>,
    /// `src W^T`, shape `(n_src, out)`.
    pub proj: Array2<T>,
    pub pre: Array2<T>,
    pub out: Array2<T>,
}

pub(crate) fn relu<T: Real>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// `out_i = relu( sum_j phi(dst_i, src_j) W src_j / Z_i )`, with
/// `Z_i = sum_j phi(dst_i, src_j)` when `normalize`, else 1. A zero
/// divisor (e.g. no source nodes) yields a zero message.
pub(crate) fn message_forward<T: Real>(
    dst: &NormalizedRows<T>,
    src_h: ArrayView2<T>,
    src: &NormalizedRows<T>,
    w: ArrayView2<T>,
    mode: PhiMode,
    normalize: bool,
) -> MessageTrace<T> {
    let half = T::lit(0.5);
    let mut aff = dst.rows.dot(&src.rows.t());
    aff.mapv_inplace(|c| {
        let c = c.max(-T::one()).min(T::one());
        match mode {
            PhiMode::ShiftedCosine => (T::one() + c) * half,
            PhiMode::Cosine => c,
        }
    });
    let proj = src_h.dot(&w.t());
    let mut pre = aff.dot(&proj);
    let z = if normalize { aff.sum_axis(Axis(1)) } else { Array1::ones(aff.nrows()) };
    Zip::from(pre.rows_mut()).and(&z).for_each(|mut row, &zi| {
        if zi == T::zero() {
            row.fill(T::zero());
        } else {
            row.mapv_inplace(|x| x / zi);
        }
    });
    let out = relu(&pre);
    MessageTrace { aff, z, proj, pre, out }
}

fn check_cols<T>(what: &str, h: ArrayView2<T>, w: ArrayView2<T>) -> Result<()> {
    if h.ncols() != w.ncols() {
        return Err(Error::Shape(format!("{what}: node dim {} but weight expects {}", h.ncols(), w.ncols())));
    }
    Ok(())
}

/// Intra-graph message over a fully connected graph with self-loops.
pub fn intra_message<T: Real>(h: ArrayView2<T>, w: ArrayView2<T>, mode: PhiMode) -> Result<Array2<T>> {
    check_cols("intra message", h, w)?;
    let n = normalize_rows(h);
    Ok(message_forward(&n, h, &n, w, mode, true).out)
}

/// Bipartite message into `dst` from `src`; an empty source gives zeros.
pub fn inter_message<T: Real>(
    src: ArrayView2<T>,
    dst: ArrayView2<T>,
    w: ArrayView2<T>,
    mode: PhiMode,
    norm: InterNorm,
) -> Result<Array2<T>> {
    check_cols("inter message (source)", src, w)?;
    check_cols("inter message (destination)", dst, w)?;
    let ns = normalize_rows(src);
    let nd = normalize_rows(dst);
    Ok(message_forward(&nd, src, &ns, w, mode, norm == InterNorm::Normalized).out)
}

/// `relu(G [intra; inter])` row-wise.
pub fn fuse<T: Real>(intra: ArrayView2<T>, inter: ArrayView2<T>, g: ArrayView2<T>) -> Result<Array2<T>> {
    if intra.dim() != inter.dim() {
        return Err(Error::Shape(format!("fuse: intra {:?} vs inter {:?}", intra.dim(), inter.dim())));
    }
    if g.ncols() != 2 * intra.ncols() {
        return Err(Error::Shape(format!("fuse: weight has {} columns, need {}", g.ncols(), 2 * intra.ncols())));
    }
    let x = concatenate(Axis(1), &[intra, inter]).expect("row counts match");
    Ok(relu(&x.dot(&g.t())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn affinity_extremes() {
        let a = [1.0, 2.0, -1.0];
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_relative_eq!(affinity(&a, &a, PhiMode::ShiftedCosine), 1.0, epsilon = 1e-15);
        assert_relative_eq!(affinity(&a, &neg, PhiMode::ShiftedCosine), 0.0, epsilon = 1e-15);
        assert_relative_eq!(affinity(&[1.0, 0.0], &[0.0, 3.0], PhiMode::ShiftedCosine), 0.5);
        assert_eq!(affinity(&[0.0, 0.0], &[0.0, 3.0], PhiMode::ShiftedCosine), 0.5);
        assert_eq!(affinity(&[0.0, 0.0], &[0.0, 3.0], PhiMode::Cosine), 0.0);
    }

    #[test]
    fn single_node_is_self_loop_only() {
        let h = array![[0.5, 1.0, 0.0]];
        let w = array![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let out = intra_message(h.view(), w.view(), PhiMode::ShiftedCosine).unwrap();
        assert_eq!(out, array![[0.5, 2.0, 0.0, 1.5]]);
    }

    #[test]
    fn identical_nodes_identical_outputs() {
        let h = array![[0.3, -0.2], [0.3, -0.2]];
        let w = array![[1.0, -1.0], [0.5, 2.0]];
        let out = intra_message(h.view(), w.view(), PhiMode::ShiftedCosine).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn empty_graph_gives_empty_output() {
        let h = Array2::<f64>::zeros((0, 3));
        let w = Array2::<f64>::ones((2, 3));
        assert_eq!(intra_message(h.view(), w.view(), PhiMode::ShiftedCosine).unwrap().dim(), (0, 2));
    }

    #[test]
    fn empty_source_gives_zero_messages() {
        let src = Array2::<f64>::zeros((0, 2));
        let dst = array![[1.0, 0.0], [0.0, 1.0]];
        let w = array![[1.0, 1.0], [2.0, -1.0]];
        for norm in [InterNorm::Normalized, InterNorm::Unnormalized] {
            let out = inter_message(src.view(), dst.view(), w.view(), PhiMode::ShiftedCosine, norm).unwrap();
            assert_eq!(out, Array2::<f64>::zeros((2, 2)));
        }
    }

    #[test]
    fn single_source_cancels_normalization() {
        let src = array![[0.2, 0.9]];
        let dst = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5]];
        let w = array![[1.0, 1.0], [2.0, -1.0]];
        let out = inter_message(src.view(), dst.view(), w.view(), PhiMode::ShiftedCosine, InterNorm::Normalized).unwrap();
        for r in out.rows() {
            assert_relative_eq!(r[0], 1.1, epsilon = 1e-12);
            assert_relative_eq!(r[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_zero_map_and_zero_block() {
        let a = array![[1.0, 2.0]];
        let z = array![[0.0, 0.0]];
        let g0 = Array2::<f64>::zeros((2, 4));
        assert_eq!(fuse(a.view(), a.view(), g0.view()).unwrap(), Array2::<f64>::zeros((1, 2)));
        let g = array![[1.0, 0.0, 5.0, 5.0], [0.0, -1.0, 5.0, 5.0]];
        assert_eq!(fuse(a.view(), z.view(), g.view()).unwrap(), array![[1.0, 0.0]]);
    }

    #[test]
    fn shape_errors() {
        let h = Array2::<f64>::zeros((2, 3));
        let w = Array2::<f64>::zeros((2, 4));
        assert!(matches!(intra_message(h.view(), w.view(), PhiMode::ShiftedCosine), Err(Error::Shape(_))));
        let g = Array2::<f64>::zeros((3, 5));
        assert!(matches!(fuse(h.view(), h.view(), g.view()), Err(Error::Shape(_))));
    }
}
