//! Single-head scaled dot-product self-attention over time:
//! `map = softmax(Q K^T / sqrt(d_k))`, output `map . V`.

use ndarray::Array2;
use rand::Rng;

/// Q/K/V projection matrices, each `input_dim x d_k`. Doubles as the
/// gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

pub struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    pub map: Array2<f64>,
    pub output: Array2<f64>,
}

impl AttentionLayer {
    pub fn init(rng: &mut impl Rng, input_dim: usize, d_k: usize) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut w = || Array2::from_shape_fn((input_dim, d_k), |_| rng.gen_range(-bound..bound));
        AttentionLayer { w_q: w(), w_k: w(), w_v: w() }
    }

    pub fn zeros(input_dim: usize, d_k: usize) -> Self {
        AttentionLayer {
            w_q: Array2::zeros((input_dim, d_k)),
            w_k: Array2::zeros((input_dim, d_k)),
            w_v: Array2::zeros((input_dim, d_k)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_k(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> AttentionCache {
        let q = x.dot(&self.w_q);
        let k = x.dot(&self.w_k);
        let v = x.dot(&self.w_v);
        let scale = 1.0 / (self.d_k() as f64).sqrt();
        let scores = q.dot(&k.t()) * scale;
        let map = row_softmax(&scores);
        let output = map.dot(&v);
        AttentionCache { q, k, v, map, output }
    }

    /// Returns the input gradient, accumulating parameter gradients into
    /// `grads`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &AttentionCache,
        d_out: &Array2<f64>,
        grads: &mut AttentionLayer,
    ) -> Array2<f64> {
        let scale = 1.0 / (self.d_k() as f64).sqrt();
        let d_v = cache.map.t().dot(d_out);
        let d_map = d_out.dot(&cache.v.t());

        // Row-softmax backward: ds_ij = m_ij (dm_ij - sum_k dm_ik m_ik).
        let mut d_scores = Array2::zeros(cache.map.raw_dim());
        for i in 0..cache.map.nrows() {
            let m = cache.map.row(i);
            let dm = d_map.row(i);
            let dot: f64 = m.iter().zip(dm.iter()).map(|(a, b)| a * b).sum();
            for j in 0..cache.map.ncols() {
                d_scores[[i, j]] = m[j] * (dm[j] - dot);
            }
        }

        let d_q = d_scores.dot(&cache.k) * scale;
        let d_k = d_scores.t().dot(&cache.q) * scale;

        grads.w_q = &grads.w_q + &x.t().dot(&d_q);
        grads.w_k = &grads.w_k + &x.t().dot(&d_k);
        grads.w_v = &grads.w_v + &x.t().dot(&d_v);

        d_q.dot(&self.w_q.t()) + d_k.dot(&self.w_k.t()) + d_v.dot(&self.w_v.t())
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        out.extend(self.w_q.iter());
        out.extend(self.w_k.iter());
        out.extend(self.w_v.iter());
    }

    pub fn read_flat(&mut self, it: &mut impl Iterator<Item = f64>) {
        for v in self
            .w_q
            .iter_mut()
            .chain(self.w_k.iter_mut())
            .chain(self.w_v.iter_mut())
        {
            *v = it.next().expect("flat parameter vector too short");
        }
    }
}

pub fn row_softmax(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_frame_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = AttentionLayer::init(&mut rng, 3, 2);
        let x = Array2::from_shape_fn((1, 3), |_| rng.gen_range(-1.0..1.0));
        let cache = layer.forward(&x);
        assert_eq!(cache.map.shape(), &[1, 1]);
        assert_eq!(cache.map[[0, 0]], 1.0);
        let v = x.dot(&layer.w_v);
        for j in 0..2 {
            assert!((cache.output[[0, j]] - v[[0, j]]).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_frames_give_uniform_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = AttentionLayer::init(&mut rng, 3, 2);
        let row: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Array2::from_shape_fn((5, 3), |(_, j)| row[j]);
        let cache = layer.forward(&x);
        for v in cache.map.iter() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = AttentionLayer::init(&mut rng, 3, 2);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let cache = layer.forward(&x);

        // Naive triple-loop oracle.
        let proj = |w: &Array2<f64>| -> Vec<Vec<f64>> {
            (0..4)
                .map(|t| {
                    (0..2)
                        .map(|d| (0..3).map(|j| x[[t, j]] * w[[j, d]]).sum())
                        .collect()
                })
                .collect()
        };
        let (q, k, v) = (proj(&layer.w_q), proj(&layer.w_k), proj(&layer.w_v));
        let scale = 1.0 / 2.0f64.sqrt();
        for i in 0..4 {
            let scores: Vec<f64> = (0..4)
                .map(|j| (0..2).map(|d| q[i][d] * k[j][d]).sum::<f64>() * scale)
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..4 {
                assert!((cache.map[[i, j]] - exps[j] / total).abs() < 1e-10);
            }
            for d in 0..2 {
                let out: f64 = (0..4).map(|j| exps[j] / total * v[j][d]).sum();
                assert!((cache.output[[i, d]] - out).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn map_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer = AttentionLayer::init(&mut rng, 5, 3);
        let x = Array2::from_shape_fn((7, 5), |_| rng.gen_range(-2.0..2.0));
        let cache = layer.forward(&x);
        for row in cache.map.outer_iter() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layer = AttentionLayer::init(&mut rng, 3, 2);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let loss =
            |l: &AttentionLayer, x: &Array2<f64>| -> f64 { (&l.forward(x).output * &weights).sum() };

        let cache = layer.forward(&x);
        let mut grads = AttentionLayer::zeros(3, 2);
        let dx = layer.backward(&x, &cache, &weights, &mut grads);

        let eps = 1e-6;
        let mut flat = Vec::new();
        layer.push_flat(&mut flat);
        let mut grad_flat = Vec::new();
        grads.push_flat(&mut grad_flat);
        for idx in 0..flat.len() {
            let mut plus = flat.clone();
            plus[idx] += eps;
            let mut lp = layer.clone();
            lp.read_flat(&mut plus.into_iter());
            let mut minus = flat.clone();
            minus[idx] -= eps;
            let mut lm = layer.clone();
            lm.read_flat(&mut minus.into_iter());
            let numeric = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert!((grad_flat[idx] - numeric).abs() < 1e-7);
        }
        for t in 0..4 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[t, j]] += eps;
                let mut xm = x.clone();
                xm[[t, j]] -= eps;
                let numeric = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
                assert!((dx[[t, j]] - numeric).abs() < 1e-7);
            }
        }
    }
}
