//! Layer primitives on `(length × channels)` row-major activations.

use super::{NnError, Real, Tensor};

pub const LN_EPS: f64 = 1e-5;

/// Row-major `c = op(a)·op(b) + beta·c` with `op(a)` of size `m×k` and
/// `op(b)` of size `k×n`. A transposed operand is stored in the other
/// orientation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    beta: T,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index reachable through the
    // strides, and `c` is a distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Row `t` holds input rows `t−k+1 ..= t` back to back, zero before 0.
pub(crate) fn im2col<T: Real>(input: &[T], l: usize, c: usize, k: usize) -> Vec<T> {
    let w = k * c;
    let mut cols = vec![T::zero(); l * w];
    for t in 0..l {
        let first = t as isize - (k as isize - 1);
        let skip = (-first).max(0) as usize;
        let src_start = (first + skip as isize) as usize * c;
        let src = &input[src_start..(t + 1) * c];
        cols[t * w + skip * c..(t + 1) * w].copy_from_slice(src);
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im<T: Real>(cols: &[T], l: usize, c: usize, k: usize) -> Vec<T> {
    let w = k * c;
    let mut out = vec![T::zero(); l * c];
    for t in 0..l {
        let first = t as isize - (k as isize - 1);
        let skip = (-first).max(0) as usize;
        let dst_start = (first + skip as isize) as usize * c;
        let dst = &mut out[dst_start..(t + 1) * c];
        for (d, &s) in dst.iter_mut().zip(&cols[t * w + skip * c..(t + 1) * w]) {
            *d = *d + s;
        }
    }
    out
}

pub(crate) fn check_conv<T: Real>(
    input_len: usize,
    l: usize,
    c_in: usize,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize), NnError> {
    let [k, kc, c_out] = kernel.shape[..] else {
        return Err(NnError::ShapeMismatch(format!(
            "conv kernel must be rank 3, got {:?}",
            kernel.shape
        )));
    };
    if kc != c_in || input_len != l * c_in {
        return Err(NnError::ShapeMismatch(format!(
            "kernel {:?} does not fit a {l}×{c_in} input of {input_len} values",
            kernel.shape
        )));
    }
    if bias.shape != [c_out] {
        return Err(NnError::ShapeMismatch(format!(
            "conv bias {:?} does not match {c_out} filters",
            bias.shape
        )));
    }
    if k == 0 || k > l {
        return Err(NnError::ShapeMismatch(format!(
            "kernel width {k} exceeds input length {l}"
        )));
    }
    Ok((k, c_out))
}

/// Returns the im2col matrix alongside the output so backward can reuse it.
pub(crate) fn conv_forward<T: Real>(
    input: &[T],
    l: usize,
    c_in: usize,
    k: usize,
    kernel: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let c_out = bias.len();
    let cols = im2col(input, l, c_in, k);
    let mut out = Vec::with_capacity(l * c_out);
    for _ in 0..l {
        out.extend_from_slice(bias);
    }
    gemm(l, k * c_in, c_out, &cols, false, kernel, false, &mut out, T::one());
    (cols, out)
}

/// Causal 1-D convolution: `out[t,o] = b[o] + Σ_j Σ_c in[t−k+1+j, c]·K[j,c,o]`
/// with zeros before the start of the signal.
pub fn conv1d_causal<T: Real>(
    input: &[T],
    l: usize,
    c_in: usize,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Vec<T>, NnError> {
    let (k, _) = check_conv(input.len(), l, c_in, kernel, bias)?;
    Ok(conv_forward(input, l, c_in, k, &kernel.data, &bias.data).1)
}

#[derive(Debug, Clone)]
pub(crate) struct LnOut<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn ln_forward<T: Real>(x: &[T], c: usize, gain: &[T], bias: &[T]) -> LnOut<T> {
    let rows = x.len() / c;
    let inv_c = T::of(1.0 / c as f64);
    let eps = T::of(LN_EPS);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * c..(r + 1) * c];
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) * inv_c;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_c;
        let is = T::one() / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..c {
            let h = (row[j] - mean) * is;
            xhat[r * c + j] = h;
            y[r * c + j] = gain[j] * h + bias[j];
        }
    }
    LnOut { y, xhat, inv_std }
}

/// Gradient of layer normalization with respect to its input; accumulates
/// the gain and bias gradients.
pub(crate) fn ln_backward<T: Real>(
    dy: &[T],
    out: &LnOut<T>,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let c = gain.len();
    let inv_c = T::of(1.0 / c as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); c];
    for (r, &is) in out.inv_std.iter().enumerate() {
        let dyr = &dy[r * c..(r + 1) * c];
        let xh = &out.xhat[r * c..(r + 1) * c];
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for j in 0..c {
            dgain[j] = dgain[j] + dyr[j] * xh[j];
            dbias[j] = dbias[j] + dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_d = mean_d + dxhat[j];
            mean_dx = mean_dx + dxhat[j] * xh[j];
        }
        mean_d = mean_d * inv_c;
        mean_dx = mean_dx * inv_c;
        for j in 0..c {
            dx[r * c + j] = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

/// Normalizes every time step across its channels, then applies the
/// per-channel gain and bias.
pub fn layer_norm<T: Real>(
    input: &[T],
    c: usize,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Vec<T>, NnError> {
    if c == 0 || !input.len().is_multiple_of(c) || gain.shape != [c] || bias.shape != [c] {
        return Err(NnError::ShapeMismatch(format!(
            "layer norm over {c} channels with gain {:?}, bias {:?}, {} values",
            gain.shape,
            bias.shape,
            input.len()
        )));
    }
    Ok(ln_forward(input, c, &gain.data, &bias.data).y)
}

pub fn relu<T: Real>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn global_avg_pool<T: Real>(input: &[T], l: usize, c: usize) -> Result<Vec<T>, NnError> {
    if l == 0 || input.len() != l * c {
        return Err(NnError::ShapeMismatch(format!(
            "cannot pool {} values as {l}×{c}",
            input.len()
        )));
    }
    let mut sum = vec![T::zero(); c];
    for row in input.chunks_exact(c) {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    let inv = T::of(1.0 / l as f64);
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn dense_logits<T: Real>(features: &[T], w: &[T], b: &[T]) -> Vec<f64> {
    let n_out = b.len();
    let mut z: Vec<f64> = b.iter().map(|v| v.f64()).collect();
    for (c, f) in features.iter().enumerate() {
        let f = f.f64();
        for (o, zo) in z.iter_mut().enumerate() {
            *zo += f * w[c * n_out + o].f64();
        }
    }
    z
}

/// Class probabilities from `logits = Wᵀf + b`; evaluated in `f64`.
pub fn dense_softmax<T: Real>(
    features: &[T],
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Vec<f64>, NnError> {
    if weights.shape != [features.len(), bias.len()] || bias.shape.len() != 1 {
        return Err(NnError::ShapeMismatch(format!(
            "dense weights {:?} do not map {} features to {} outputs",
            weights.shape,
            features.len(),
            bias.len()
        )));
    }
    Ok(softmax(&dense_logits(features, &weights.data, &bias.data)))
}
