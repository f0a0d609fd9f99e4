//! Principal component analysis via eigendecomposition of the sample
//! covariance (divisor N-1), with a deterministic sign convention.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix};
use crate::ser;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(with = "ser::array1")]
    pub mean: Array1<f64>,
    /// One principal direction per row, `n_comp x D`, rows orthonormal.
    #[serde(with = "ser::array2")]
    pub components: Array2<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Maps projected rows back to the input space.
    pub fn reconstruct(&self, projected: &Array2<f64>) -> Array2<f64> {
        let mut out = projected.dot(&self.components);
        for mut row in out.outer_iter_mut() {
            row += &self.mean;
        }
        out
    }

    /// Max deviation of the component rows from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.components.dot(&self.components.t());
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[[i, j]] - expect).abs());
            }
        }
        worst
    }
}

/// Fits a PCA model on row-wise samples, keeping `n_comp` directions ordered
/// by decreasing variance. Rank deficiency beyond `n_comp` is fine (trailing
/// ratios are 0); asking for more components than the data supports is not.
pub fn fit_pca(data: &FeatureMatrix, n_comp: usize) -> Result<PcaModel, FeatureError> {
    let n = data.data.nrows();
    let d = data.data.ncols();
    if n < 2 {
        return Err(FeatureError::InsufficientData(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if n_comp == 0 || n_comp > (n - 1).min(d) {
        return Err(FeatureError::InvalidConfig(format!(
            "n_comp {n_comp} outside 1..={}",
            (n - 1).min(d)
        )));
    }

    let mean = data.data.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let mut centered = data.data.clone();
    for mut row in centered.outer_iter_mut() {
        row -= &mean;
    }
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (mut eigvals, eigvecs) = jacobi_eigen(&cov);
    // Sort descending, clamping tiny negative eigenvalues from roundoff.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite"));
    for v in eigvals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = eigvals.iter().sum();

    let mut components = Array2::zeros((n_comp, d));
    let mut ratios = Vec::with_capacity(n_comp);
    for (row, &idx) in order.iter().take(n_comp).enumerate() {
        let mut comp: Vec<f64> = (0..d).map(|i| eigvecs[[i, idx]]).collect();
        // Sign convention: the entry of largest magnitude is positive.
        let mut lead = 0usize;
        for (i, v) in comp.iter().enumerate() {
            if v.abs() > comp[lead].abs() {
                lead = i;
            }
        }
        if comp[lead] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
        for (i, v) in comp.into_iter().enumerate() {
            components[[row, i]] = v;
        }
        ratios.push(if total > 1e-300 { eigvals[idx] / total } else { 0.0 });
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio: ratios,
    })
}

/// Projects `data` onto the fitted components: `(X - mean) C^T`.
pub fn transform_pca(model: &PcaModel, data: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if data.data.ncols() != model.input_dim() {
        return Err(FeatureError::MalformedInput(format!(
            "data has {} columns, model expects {}",
            data.data.ncols(),
            model.input_dim()
        )));
    }
    let mut centered = data.data.clone();
    for mut row in centered.outer_iter_mut() {
        row -= &model.mean;
    }
    FeatureMatrix::new(centered.dot(&model.components.t()), data.rate)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and an orthogonal matrix with eigenvectors in columns.
fn jacobi_eigen(matrix: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    let mut v = Array2::eye(n);

    let off_norm = |a: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[[i, j]] * a[[i, j]];
            }
        }
        s.sqrt()
    };
    let scale = off_norm(&a).max(1.0);

    for _sweep in 0..100 {
        if off_norm(&a) <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = c * apj - s * aqj;
                    a[[q, j]] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let eigvals: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    (eigvals, v)
}
