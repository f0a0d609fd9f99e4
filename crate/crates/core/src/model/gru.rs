//! Bidirectional GRU layers with explicit forward caches and hand-derived
//! backward passes.
//!
//! Cell recurrence (update gate z, reset gate r, candidate c):
//!   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
//!   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
//!   c_t = tanh(Wc x_t + Uc (r_t * h_{t-1}) + bc)
//!   h_t = (1 - z_t) * h_{t-1} + z_t * c_t

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of one GRU direction. The same struct doubles as a gradient
/// container with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GruDirection {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_c: Array2<f64>,
    pub u_c: Array2<f64>,
    pub b_c: Array1<f64>,
}

impl GruDirection {
    pub fn init(rng: &mut impl Rng, input_dim: usize, hidden: usize) -> Self {
        let w = |rng: &mut dyn rand::RngCore, rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        GruDirection {
            w_z: w(rng, hidden, input_dim, input_dim),
            u_z: w(rng, hidden, hidden, hidden),
            b_z: Array1::zeros(hidden),
            w_r: w(rng, hidden, input_dim, input_dim),
            u_r: w(rng, hidden, hidden, hidden),
            b_r: Array1::zeros(hidden),
            w_c: w(rng, hidden, input_dim, input_dim),
            u_c: w(rng, hidden, hidden, hidden),
            b_c: Array1::zeros(hidden),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        GruDirection {
            w_z: Array2::zeros((hidden, input_dim)),
            u_z: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            w_r: Array2::zeros((hidden, input_dim)),
            u_r: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            w_c: Array2::zeros((hidden, input_dim)),
            u_c: Array2::zeros((hidden, hidden)),
            b_c: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for m in [&self.w_z, &self.u_z] {
            out.extend(m.iter());
        }
        out.extend(self.b_z.iter());
        for m in [&self.w_r, &self.u_r] {
            out.extend(m.iter());
        }
        out.extend(self.b_r.iter());
        for m in [&self.w_c, &self.u_c] {
            out.extend(m.iter());
        }
        out.extend(self.b_c.iter());
    }

    pub fn read_flat(&mut self, it: &mut impl Iterator<Item = f64>) {
        for v in self
            .w_z
            .iter_mut()
            .chain(self.u_z.iter_mut())
            .chain(self.b_z.iter_mut())
            .chain(self.w_r.iter_mut())
            .chain(self.u_r.iter_mut())
            .chain(self.b_r.iter_mut())
            .chain(self.w_c.iter_mut())
            .chain(self.u_c.iter_mut())
            .chain(self.b_c.iter_mut())
        {
            *v = it.next().expect("flat parameter vector too short");
        }
    }

    /// One-direction forward over `x` rows in their given order.
    fn forward(&self, x: &Array2<f64>) -> DirectionCache {
        let t_len = x.nrows();
        let h = self.hidden();
        // Input projections for the whole sequence in one pass each.
        let pz = x.dot(&self.w_z.t());
        let pr = x.dot(&self.w_r.t());
        let pc = x.dot(&self.w_c.t());

        let mut cache = DirectionCache {
            z: Array2::zeros((t_len, h)),
            r: Array2::zeros((t_len, h)),
            c: Array2::zeros((t_len, h)),
            h: Array2::zeros((t_len, h)),
        };
        let mut h_prev = Array1::zeros(h);
        for t in 0..t_len {
            let az = &pz.row(t) + &self.u_z.dot(&h_prev) + &self.b_z;
            let ar = &pr.row(t) + &self.u_r.dot(&h_prev) + &self.b_r;
            let z = az.mapv(sigmoid);
            let r = ar.mapv(sigmoid);
            let ac = &pc.row(t) + &self.u_c.dot(&(&r * &h_prev)) + &self.b_c;
            let c = ac.mapv(f64::tanh);
            let h_t = (1.0 - &z) * &h_prev + &z * &c;
            cache.z.row_mut(t).assign(&z);
            cache.r.row_mut(t).assign(&r);
            cache.c.row_mut(t).assign(&c);
            cache.h.row_mut(t).assign(&h_t);
            h_prev = h_t;
        }
        cache
    }

    /// Backpropagates `d_h` (gradients on each output row, same time order as
    /// the forward) and returns the input gradient, accumulating parameter
    /// gradients into `grads`.
    fn backward(
        &self,
        x: &Array2<f64>,
        cache: &DirectionCache,
        d_h: &Array2<f64>,
        grads: &mut GruDirection,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let h = self.hidden();
        let mut da_z = Array2::zeros((t_len, h));
        let mut da_r = Array2::zeros((t_len, h));
        let mut da_c = Array2::zeros((t_len, h));
        let mut h_prev_rows = Array2::zeros((t_len, h));
        let mut carry: Array1<f64> = Array1::zeros(h);

        for t in (0..t_len).rev() {
            let h_prev = if t == 0 {
                Array1::zeros(h)
            } else {
                cache.h.row(t - 1).to_owned()
            };
            h_prev_rows.row_mut(t).assign(&h_prev);

            let z = cache.z.row(t);
            let r = cache.r.row(t);
            let c = cache.c.row(t);
            let dh = &d_h.row(t) + &carry;

            let dc = &dh * &z;
            let dz = &dh * &(&c.to_owned() - &h_prev);
            let mut dh_prev = &dh * &(1.0 - &z.to_owned());

            let dac = &dc * &c.mapv(|v| 1.0 - v * v);
            let d_rh = self.u_c.t().dot(&dac);
            let dr = &d_rh * &h_prev;
            dh_prev = dh_prev + &d_rh * &r;

            let daz = &dz * &z.mapv(|v| v * (1.0 - v));
            dh_prev = dh_prev + self.u_z.t().dot(&daz);

            let dar = &dr * &r.mapv(|v| v * (1.0 - v));
            dh_prev = dh_prev + self.u_r.t().dot(&dar);

            da_z.row_mut(t).assign(&daz);
            da_r.row_mut(t).assign(&dar);
            da_c.row_mut(t).assign(&dac);
            carry = dh_prev;
        }

        // Batched weight gradients.
        grads.w_z = &grads.w_z + &da_z.t().dot(x);
        grads.u_z = &grads.u_z + &da_z.t().dot(&h_prev_rows);
        grads.b_z = &grads.b_z + &da_z.sum_axis(Axis(0));
        grads.w_r = &grads.w_r + &da_r.t().dot(x);
        grads.u_r = &grads.u_r + &da_r.t().dot(&h_prev_rows);
        grads.b_r = &grads.b_r + &da_r.sum_axis(Axis(0));
        grads.w_c = &grads.w_c + &da_c.t().dot(x);
        let rh = &cache.r * &h_prev_rows;
        grads.u_c = &grads.u_c + &da_c.t().dot(&rh);
        grads.b_c = &grads.b_c + &da_c.sum_axis(Axis(0));

        da_z.dot(&self.w_z) + da_r.dot(&self.w_r) + da_c.dot(&self.w_c)
    }
}

struct DirectionCache {
    z: Array2<f64>,
    r: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

/// A bidirectional GRU; output row t is `[forward_t, backward_t]` where the
/// backward half processes the reversed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruLayer {
    pub fwd: GruDirection,
    pub bwd: GruDirection,
}

pub struct BiGruCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
    x_rev: Array2<f64>,
    pub output: Array2<f64>,
}

fn reverse_rows(x: &Array2<f64>) -> Array2<f64> {
    let t_len = x.nrows();
    let mut out = Array2::zeros(x.raw_dim());
    for t in 0..t_len {
        out.row_mut(t).assign(&x.row(t_len - 1 - t));
    }
    out
}

impl BiGruLayer {
    pub fn init(rng: &mut impl Rng, input_dim: usize, hidden: usize) -> Self {
        BiGruLayer {
            fwd: GruDirection::init(rng, input_dim, hidden),
            bwd: GruDirection::init(rng, input_dim, hidden),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        BiGruLayer {
            fwd: GruDirection::zeros(input_dim, hidden),
            bwd: GruDirection::zeros(input_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn forward(&self, x: &Array2<f64>) -> BiGruCache {
        let t_len = x.nrows();
        let h = self.hidden();
        let fwd = self.fwd.forward(x);
        let x_rev = reverse_rows(x);
        let bwd = self.bwd.forward(&x_rev);
        let mut output = Array2::zeros((t_len, 2 * h));
        for t in 0..t_len {
            output
                .row_mut(t)
                .slice_mut(ndarray::s![..h])
                .assign(&fwd.h.row(t));
            output
                .row_mut(t)
                .slice_mut(ndarray::s![h..])
                .assign(&bwd.h.row(t_len - 1 - t));
        }
        BiGruCache { fwd, bwd, x_rev, output }
    }

    /// Returns the gradient w.r.t. the layer input, accumulating parameter
    /// gradients into `grads`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &BiGruCache,
        d_out: &Array2<f64>,
        grads: &mut BiGruLayer,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let h = self.hidden();
        let d_fwd = d_out.slice(ndarray::s![.., ..h]).to_owned();
        let mut d_bwd = Array2::zeros((t_len, h));
        for t in 0..t_len {
            d_bwd
                .row_mut(t)
                .assign(&d_out.slice(ndarray::s![t_len - 1 - t, h..]));
        }
        let dx_fwd = self.fwd.backward(x, &cache.fwd, &d_fwd, &mut grads.fwd);
        let dx_bwd_rev = self.bwd.backward(&cache.x_rev, &cache.bwd, &d_bwd, &mut grads.bwd);
        dx_fwd + reverse_rows(&dx_bwd_rev)
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        self.fwd.push_flat(out);
        self.bwd.push_flat(out);
    }

    pub fn read_flat(&mut self, it: &mut impl Iterator<Item = f64>) {
        self.fwd.read_flat(it);
        self.bwd.read_flat(it);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_output() {
        let layer = BiGruLayer::zeros(3, 4);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i + j) as f64);
        let out = layer.forward(&x).output;
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_halves_agree_with_tied_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir = GruDirection::init(&mut rng, 3, 4);
        let layer = BiGruLayer { fwd: dir.clone(), bwd: dir };
        let x = Array2::from_shape_fn((1, 3), |(_, j)| 0.3 * (j as f64 + 1.0));
        let out = layer.forward(&x).output;
        for j in 0..4 {
            assert!((out[[0, j]] - out[[0, 4 + j]]).abs() < 1e-15);
        }
    }

    /// Scalar reference implementation: explicit loops, no ndarray algebra.
    fn scalar_gru(dir: &GruDirection, x: &Array2<f64>) -> Vec<Vec<f64>> {
        let (t_len, input) = (x.nrows(), x.ncols());
        let h = dir.hidden();
        let mut states = Vec::new();
        let mut h_prev = vec![0.0; h];
        for t in 0..t_len {
            let mut z = vec![0.0; h];
            let mut r = vec![0.0; h];
            let mut c = vec![0.0; h];
            for i in 0..h {
                let mut az = dir.b_z[i];
                let mut ar = dir.b_r[i];
                for j in 0..input {
                    az += dir.w_z[[i, j]] * x[[t, j]];
                    ar += dir.w_r[[i, j]] * x[[t, j]];
                }
                for j in 0..h {
                    az += dir.u_z[[i, j]] * h_prev[j];
                    ar += dir.u_r[[i, j]] * h_prev[j];
                }
                z[i] = 1.0 / (1.0 + (-az).exp());
                r[i] = 1.0 / (1.0 + (-ar).exp());
            }
            for i in 0..h {
                let mut ac = dir.b_c[i];
                for j in 0..input {
                    ac += dir.w_c[[i, j]] * x[[t, j]];
                }
                for j in 0..h {
                    ac += dir.u_c[[i, j]] * (r[j] * h_prev[j]);
                }
                c[i] = ac.tanh();
            }
            let mut h_t = vec![0.0; h];
            for i in 0..h {
                h_t[i] = (1.0 - z[i]) * h_prev[i] + z[i] * c[i];
            }
            states.push(h_t.clone());
            h_prev = h_t;
        }
        states
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = BiGruLayer::init(&mut rng, 3, 2);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));

        let expect_fwd = scalar_gru(&layer.fwd, &x);
        let x_rev = reverse_rows(&x);
        let expect_bwd = scalar_gru(&layer.bwd, &x_rev);

        let out = layer.forward(&x).output;
        for t in 0..4 {
            for i in 0..2 {
                assert!((out[[t, i]] - expect_fwd[t][i]).abs() < 1e-10);
                assert!((out[[t, 2 + i]] - expect_bwd[3 - t][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reversal_swaps_halves_of_direction_swapped_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = BiGruLayer::init(&mut rng, 3, 4);
        let swapped = BiGruLayer { fwd: layer.bwd.clone(), bwd: layer.fwd.clone() };
        let x = Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0));
        let x_rev = reverse_rows(&x);

        let out = layer.forward(&x).output;
        let out_rev = swapped.forward(&x_rev).output;
        let t_len = 6;
        let h = 4;
        for t in 0..t_len {
            for i in 0..h {
                assert!((out_rev[[t, i]] - out[[t_len - 1 - t, h + i]]).abs() < 1e-12);
                assert!((out_rev[[t, h + i]] - out[[t_len - 1 - t, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let layer = BiGruLayer::init(&mut rng, 3, 2);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        // Loss: weighted sum of outputs, fixed weights.
        let weights = Array2::from_shape_fn((4, 4), |_| rng.gen_range(-1.0..1.0));
        let loss = |layer: &BiGruLayer, x: &Array2<f64>| -> f64 {
            (&layer.forward(x).output * &weights).sum()
        };

        let cache = layer.forward(&x);
        let mut grads = BiGruLayer::zeros(3, 2);
        let dx = layer.backward(&x, &cache, &weights, &mut grads);

        let eps = 1e-6;
        // Parameter gradients.
        let mut flat = Vec::new();
        layer.push_flat(&mut flat);
        let mut grad_flat = Vec::new();
        grads.push_flat(&mut grad_flat);
        for idx in (0..flat.len()).step_by(7) {
            let mut plus = flat.clone();
            plus[idx] += eps;
            let mut lp = layer.clone();
            lp.read_flat(&mut plus.into_iter());
            let mut minus = flat.clone();
            minus[idx] -= eps;
            let mut lm = layer.clone();
            lm.read_flat(&mut minus.into_iter());
            let numeric = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert!(
                (grad_flat[idx] - numeric).abs() < 1e-7,
                "param {idx}: analytic {} vs numeric {numeric}",
                grad_flat[idx]
            );
        }
        // Input gradients.
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

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = BiGruLayer::init(&mut rng, 5, 3);
        let mut flat = Vec::new();
        layer.push_flat(&mut flat);
        let mut copy = BiGruLayer::zeros(5, 3);
        copy.read_flat(&mut flat.clone().into_iter());
        assert_eq!(copy, layer);
    }
}
