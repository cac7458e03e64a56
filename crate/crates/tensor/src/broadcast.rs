//! Strided iteration for broadcasting element-wise ops and reductions.

use crate::error::{Result, TensorError};
use crate::tensor::numel;

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Numpy-style right-aligned broadcast of two shapes.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::shape(op, a, b)),
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside the broadcast `out` shape (zero on
/// broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                own[i - off]
            }
        })
        .collect()
}

/// Calls `f(out_index, a_index, b_index)` for every element of `shape` in
/// row-major order. Adjacent axes are coalesced so the inner loop runs over
/// the longest contiguous stretch.
pub(crate) fn zip2(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    if numel(shape) == 0 {
        return;
    }
    let so = contiguous_strides(shape);
    let mut dims: Vec<[usize; 4]> = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        if shape[i] == 1 {
            continue;
        }
        let d = [shape[i], so[i], sa[i], sb[i]];
        if let Some(last) = dims.last_mut() {
            if last[1] == d[1] * d[0] && last[2] == d[2] * d[0] && last[3] == d[3] * d[0] {
                *last = [last[0] * d[0], d[1], d[2], d[3]];
                continue;
            }
        }
        dims.push(d);
    }
    let Some((inner, outer)) = dims.split_last() else {
        f(0, 0, 0);
        return;
    };
    let mut idx = vec![0usize; outer.len()];
    let (mut po, mut pa, mut pb) = (0usize, 0usize, 0usize);
    loop {
        let (mut o, mut a, mut b) = (po, pa, pb);
        for _ in 0..inner[0] {
            f(o, a, b);
            o += inner[1];
            a += inner[2];
            b += inner[3];
        }
        let mut k = outer.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            po += outer[k][1];
            pa += outer[k][2];
            pb += outer[k][3];
            if idx[k] < outer[k][0] {
                break;
            }
            po -= outer[k][1] * outer[k][0];
            pa -= outer[k][2] * outer[k][0];
            pb -= outer[k][3] * outer[k][0];
            idx[k] = 0;
        }
    }
}
