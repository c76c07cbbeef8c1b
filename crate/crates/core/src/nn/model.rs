use rand::Rng;

use super::layers::{
    check_conv, col2im, conv_forward, dense_logits, gemm, ln_backward, ln_forward, softmax, LnOut,
};
use super::{NnError, Real, Tensor};
use crate::datagen::ClassLabel;

pub const N_CLASSES: usize = 3;

pub const TENSOR_NAMES: [&str; 10] = [
    "conv1.k", "conv1.b", "ln1.g", "ln1.b", "conv2.k", "conv2.b", "ln2.g", "ln2.b", "dense.w",
    "dense.b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub kernel: usize,
    pub filters1: usize,
    pub filters2: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            kernel: 20,
            filters1: 32,
            filters2: 64,
        }
    }
}

impl NetShape {
    fn tensor_shapes(&self) -> [Vec<usize>; 10] {
        let (k, f1, f2) = (self.kernel, self.filters1, self.filters2);
        [
            vec![k, 1, f1],
            vec![f1],
            vec![f1],
            vec![f1],
            vec![k, f1, f2],
            vec![f2],
            vec![f2],
            vec![f2],
            vec![f2, N_CLASSES],
            vec![N_CLASSES],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub conv1_k: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub ln1_g: Tensor<T>,
    pub ln1_b: Tensor<T>,
    pub conv2_k: Tensor<T>,
    pub conv2_b: Tensor<T>,
    pub ln2_g: Tensor<T>,
    pub ln2_b: Tensor<T>,
    pub dense_w: Tensor<T>,
    pub dense_b: Tensor<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn from_tensors(t: [Tensor<T>; 10]) -> Result<Self, NnError> {
        let [conv1_k, conv1_b, ln1_g, ln1_b, conv2_k, conv2_b, ln2_g, ln2_b, dense_w, dense_b] = t;
        let p = Self {
            conv1_k,
            conv1_b,
            ln1_g,
            ln1_b,
            conv2_k,
            conv2_b,
            ln2_g,
            ln2_b,
            dense_w,
            dense_b,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero parameters, gains included.
    pub fn zeros(shape: NetShape) -> Self {
        let t = shape.tensor_shapes().map(Tensor::zeros);
        Self::from_tensors(t).expect("consistent shapes")
    }

    /// He-uniform kernels, zero biases, unit layer-norm gains.
    pub fn init<R: Rng>(shape: NetShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for (i, t) in p.tensors_mut().into_iter().enumerate() {
            match i {
                0 | 4 | 8 => {
                    let fan_in: usize = t.shape[..t.shape.len() - 1].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for v in &mut t.data {
                        *v = T::of(rng.gen_range(-bound..bound));
                    }
                }
                2 | 6 => t.data.fill(T::one()),
                _ => {}
            }
        }
        p
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            kernel: self.conv1_k.shape[0],
            filters1: self.conv1_k.shape[2],
            filters2: self.conv2_k.shape[2],
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.conv1_k.shape.len() != 3 || self.conv2_k.shape.len() != 3 {
            return Err(NnError::ShapeMismatch("conv kernels must be rank 3".into()));
        }
        let want = self.shape().tensor_shapes();
        for ((name, t), w) in TENSOR_NAMES.iter().zip(self.tensors()).zip(want) {
            if t.shape != w {
                return Err(NnError::ShapeMismatch(format!(
                    "{name} has shape {:?}, expected {w:?}",
                    t.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::ShapeMismatch(format!("{name} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.conv1_k,
            &self.conv1_b,
            &self.ln1_g,
            &self.ln1_b,
            &self.conv2_k,
            &self.conv2_b,
            &self.ln2_g,
            &self.ln2_b,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.conv1_k,
            &mut self.conv1_b,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.conv2_k,
            &mut self.conv2_b,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            conv1_k: self.conv1_k.cast(),
            conv1_b: self.conv1_b.cast(),
            ln1_g: self.ln1_g.cast(),
            ln1_b: self.ln1_b.cast(),
            conv2_k: self.conv2_k.cast(),
            conv2_b: self.conv2_b.cast(),
            ln2_g: self.ln2_g.cast(),
            ln2_b: self.ln2_b.cast(),
            dense_w: self.dense_w.cast(),
            dense_b: self.dense_b.cast(),
        }
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    len: usize,
    cols1: Vec<T>,
    ln1: LnOut<T>,
    cols2: Vec<T>,
    ln2: LnOut<T>,
    pooled: Vec<T>,
    probs: Vec<f64>,
}

impl<T: Real> ForwardCache<T> {
    /// Pre-activation inputs of the two ReLUs.
    pub fn relu_inputs(&self) -> (&[T], &[T]) {
        (&self.ln1.y, &self.ln2.y)
    }

    pub fn features(&self) -> &[T] {
        &self.pooled
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// Class probabilities of a single-channel input of any length at least
/// the kernel width.
pub fn forward<T: Real>(
    params: &NetworkParams<T>,
    channel: &[T],
) -> Result<(Vec<f64>, ForwardCache<T>), NnError> {
    let l = channel.len();
    let (k, f1) = check_conv(l, l, 1, &params.conv1_k, &params.conv1_b)?;
    check_conv(l * f1, l, f1, &params.conv2_k, &params.conv2_b)?;
    let f2 = params.conv2_b.len();

    let (cols1, z1) = conv_forward(channel, l, 1, k, &params.conv1_k.data, &params.conv1_b.data);
    let ln1 = ln_forward(&z1, f1, &params.ln1_g.data, &params.ln1_b.data);
    let a1: Vec<T> = ln1.y.iter().map(|&v| v.max(T::zero())).collect();
    let (cols2, z2) = conv_forward(&a1, l, f1, k, &params.conv2_k.data, &params.conv2_b.data);
    drop(a1);
    let ln2 = ln_forward(&z2, f2, &params.ln2_g.data, &params.ln2_b.data);

    let mut pooled = vec![T::zero(); f2];
    for row in ln2.y.chunks_exact(f2) {
        for (s, &v) in pooled.iter_mut().zip(row) {
            *s = *s + v.max(T::zero());
        }
    }
    let inv_l = T::of(1.0 / l as f64);
    pooled.iter_mut().for_each(|s| *s = *s * inv_l);

    let probs = softmax(&dense_logits(&pooled, &params.dense_w.data, &params.dense_b.data));
    let cache = ForwardCache {
        len: l,
        cols1,
        ln1,
        cols2,
        ln2,
        pooled,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Backpropagates `scale · (−ln p[label])` and adds the result to `grads`.
fn backward<T: Real>(
    params: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    label: usize,
    scale: f64,
    grads: &mut NetworkParams<T>,
) {
    let l = cache.len;
    let NetShape {
        kernel: k,
        filters1: f1,
        filters2: f2,
    } = params.shape();

    let dlogit: Vec<f64> = cache
        .probs
        .iter()
        .enumerate()
        .map(|(o, &p)| scale * (p - if o == label { 1.0 } else { 0.0 }))
        .collect();
    let mut dpool = vec![T::zero(); f2];
    for (c, dp) in dpool.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (o, &d) in dlogit.iter().enumerate() {
            let idx = c * N_CLASSES + o;
            grads.dense_w.data[idx] = grads.dense_w.data[idx] + T::of(cache.pooled[c].f64() * d);
            acc += params.dense_w.data[idx].f64() * d;
        }
        *dp = T::of(acc / l as f64);
    }
    for (g, &d) in grads.dense_b.data.iter_mut().zip(&dlogit) {
        *g = *g + T::of(d);
    }

    let mut dy2 = vec![T::zero(); l * f2];
    for (t, row) in cache.ln2.y.chunks_exact(f2).enumerate() {
        for c in 0..f2 {
            if row[c] > T::zero() {
                dy2[t * f2 + c] = dpool[c];
            }
        }
    }
    let dz2 = ln_backward(
        &dy2,
        &cache.ln2,
        &params.ln2_g.data,
        &mut grads.ln2_g.data,
        &mut grads.ln2_b.data,
    );
    drop(dy2);
    gemm(k * f1, l, f2, &cache.cols2, true, &dz2, false, &mut grads.conv2_k.data, T::one());
    for row in dz2.chunks_exact(f2) {
        for (g, &d) in grads.conv2_b.data.iter_mut().zip(row) {
            *g = *g + d;
        }
    }
    let mut dcols2 = vec![T::zero(); l * k * f1];
    gemm(l, f2, k * f1, &dz2, false, &params.conv2_k.data, true, &mut dcols2, T::zero());
    let mut dy1 = col2im(&dcols2, l, f1, k);
    drop(dcols2);
    for (d, &y) in dy1.iter_mut().zip(&cache.ln1.y) {
        if y <= T::zero() {
            *d = T::zero();
        }
    }
    let dz1 = ln_backward(
        &dy1,
        &cache.ln1,
        &params.ln1_g.data,
        &mut grads.ln1_g.data,
        &mut grads.ln1_b.data,
    );
    gemm(k, l, f1, &cache.cols1, true, &dz1, false, &mut grads.conv1_k.data, T::one());
    for row in dz1.chunks_exact(f1) {
        for (g, &d) in grads.conv1_b.data.iter_mut().zip(row) {
            *g = *g + d;
        }
    }
}

/// `−ln p[label]` from the probabilities, floored to stay finite.
fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

/// Runs forward and backward for one sample, accumulating `scale`-weighted
/// gradients. Returns the unscaled loss.
pub(crate) fn accumulate<T: Real>(
    params: &NetworkParams<T>,
    channel: &[T],
    label: usize,
    scale: f64,
    grads: &mut NetworkParams<T>,
) -> Result<f64, NnError> {
    let (probs, cache) = forward(params, channel)?;
    backward(params, &cache, label, scale, grads);
    Ok(cross_entropy(&probs, label))
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_grads<T: Real>(
    params: &NetworkParams<T>,
    batch: &[(&[T], ClassLabel)],
) -> Result<(f64, NetworkParams<T>), NnError> {
    if batch.is_empty() {
        return Err(NnError::Empty);
    }
    let mut grads = NetworkParams::zeros(params.shape());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, label) in batch {
        loss += accumulate(params, x, label.index(), scale, &mut grads)?;
    }
    Ok((loss * scale, grads))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Real>(
    params: &NetworkParams<T>,
    channel: &[T],
) -> Result<(ClassLabel, Vec<f64>), NnError> {
    let (probs, _) = forward(params, channel)?;
    let label = ClassLabel::from_index(argmax(&probs)).expect("three classes");
    Ok((label, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64) -> NetworkParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = NetworkParams::init(NetShape::default(), &mut rng);
        // non-trivial gains and biases
        for i in [1, 2, 3, 5, 6, 7, 9] {
            for v in &mut p.tensors_mut()[i].data {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        p
    }

    fn signal(l: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn probabilities_sum_to_one_for_any_length() {
        let p = random_params(1);
        for l in [20, 40, 512, 1024] {
            let (probs, _) = forward(&p, &signal(l, l as u64)).unwrap();
            assert_eq!(probs.len(), 3);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let p32 = p.cast::<f32>();
        let x: Vec<f32> = signal(300, 3).iter().map(|&v| v as f32).collect();
        let (probs, _) = forward(&p32, &x).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(forward(&p, &signal(19, 0)).is_err());
    }

    #[test]
    fn constant_inputs_pool_to_an_affine_total() {
        // past the causal ramp-up of 2k−2 steps every map row is constant,
        // so L·features(L) grows linearly in L
        let p = random_params(2);
        let total = |l: usize| -> Vec<f64> {
            let (_, c) = forward(&p, &vec![0.4; l]).unwrap();
            c.features().iter().map(|f| f * l as f64).collect()
        };
        let (a, b, c) = (total(100), total(200), total(300));
        for i in 0..a.len() {
            assert!(((c[i] - b[i]) - (b[i] - a[i])).abs() < 1e-9);
        }
        let params = NetworkParams::<f64>::zeros(NetShape::default());
        for l in [20, 100, 1024] {
            let (probs, cache) = forward(&params, &vec![0.7; l]).unwrap();
            assert!(cache.features().iter().all(|&f| f == 0.0));
            assert!(probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_params_predict_far() {
        let params = NetworkParams::<f64>::zeros(NetShape::default());
        for seed in 0..5 {
            let (label, probs) = predict(&params, &signal(64, seed)).unwrap();
            assert_eq!(label, ClassLabel::Far);
            assert!(probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn loss_examples() {
        let params = NetworkParams::<f64>::zeros(NetShape::default());
        let x = signal(40, 0);
        let (loss, _) = loss_and_grads(&params, &[(&x[..], ClassLabel::Close)]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        // a dominant bias on the labelled class drives the loss to zero
        let mut p = params.clone();
        p.dense_b.data = vec![0.0, 0.0, 800.0];
        let (loss, _) = loss_and_grads(&p, &[(&x[..], ClassLabel::After)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(matches!(loss_and_grads(&p, &[]), Err(NnError::Empty)));
    }

    #[test]
    fn he_init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = NetworkParams::<f32>::init(NetShape::default(), &mut rng);
        let b2 = (6.0f32 / 640.0).sqrt();
        assert!(p.conv2_k.data.iter().all(|v| v.abs() <= b2));
        assert!(p.conv2_k.data.iter().any(|v| v.abs() > 0.9 * b2));
        assert!(p.ln1_g.data.iter().all(|&v| v == 1.0));
        assert!(p.conv1_b.data.iter().all(|&v| v == 0.0));
        assert_eq!(p.n_params(), 640 + 32 * 3 + 20 * 32 * 64 + 64 * 3 + 64 * 3 + 3);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shape = NetShape {
            kernel: 5,
            filters1: 4,
            filters2: 6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = NetworkParams::<f64>::init(shape, &mut rng);
        for i in [1, 2, 3, 5, 6, 7, 9] {
            for v in &mut p.tensors_mut()[i].data {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let xs: Vec<Vec<f64>> = (0..3).map(|s| signal(40, 100 + s)).collect();
        let batch: Vec<(&[f64], ClassLabel)> = xs
            .iter()
            .zip(ClassLabel::ALL)
            .map(|(x, l)| (&x[..], l))
            .collect();
        let (_, g) = loss_and_grads(&p, &batch).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for ti in 0..10 {
            for j in 0..p.tensors()[ti].len() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti].data[j] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].data[j] -= h;
                let fd = (loss_and_grads(&plus, &batch).unwrap().0
                    - loss_and_grads(&minus, &batch).unwrap().0)
                    / (2.0 * h);
                let an = g.tensors()[ti].data[j];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
