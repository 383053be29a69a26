//! Closed-form and brute-force references for the smoothness machinery.
//!
//! None of this runs during training. The linear-Gaussian and logistic
//! models have analytic LDS values, the finite-difference Hessian is
//! assembled from `Δ_KL` values alone (no gradients), and the Jacobi
//! eigensolver gives its exact dominant eigenvector. Cost is `O(I²)`
//! model evaluations plus `O(I³)` for the eigensolver, so inputs are
//! limited to [`MAX_ORACLE_DIM`] dimensions.

use crate::divergence::SensitivityModel;
use crate::error::{Error, Result};
use crate::numerics::{dot, Tensor};

pub const MAX_ORACLE_DIM: usize = 32;

/// `p(y|x, θ) = N(θᵀx, σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    theta: Vec<f64>,
    sigma2: f64,
}

impl LinearGaussianModel {
    pub fn new(theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::config(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if theta.is_empty() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("theta must be a non-empty finite vector"));
        }
        Ok(LinearGaussianModel { theta, sigma2 })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Exact LDS of the linear-Gaussian model, `−ε²‖θ‖²/(2σ²)`, for every `x`.
pub fn gaussian_lds_exact(model: &LinearGaussianModel, epsilon: f64) -> f64 {
    -epsilon * epsilon * dot(&model.theta, &model.theta) / (2.0 * model.sigma2)
}

impl SensitivityModel for LinearGaussianModel {
    /// The output variance is fixed, so the KL never depends on the clean mean.
    type Base = ();

    fn input_dim(&self) -> usize {
        self.theta.len()
    }

    fn snapshot(&self, _x: &Tensor) -> Result<()> {
        Ok(())
    }

    fn delta_kl(&self, _x: &Tensor, r: &Tensor, _base: &()) -> Result<Vec<f64>> {
        self.check(r)?;
        Ok(r.row_iter()
            .map(|ri| dot(&self.theta, ri).powi(2) / (2.0 * self.sigma2))
            .collect())
    }

    fn grad_r_delta_kl(&self, _x: &Tensor, r: &Tensor, _base: &()) -> Result<Tensor> {
        self.check(r)?;
        let mut g = Tensor::zeros(r.shape());
        for i in 0..r.rows() {
            let s = dot(&self.theta, r.row(i)) / self.sigma2;
            for (o, &t) in g.row_mut(i).iter_mut().zip(&self.theta) {
                *o = s * t;
            }
        }
        Ok(g)
    }
}

impl LinearGaussianModel {
    fn check(&self, r: &Tensor) -> Result<()> {
        if r.cols() != self.theta.len() {
            return Err(Error::dim(format!(
                "perturbation has {} columns, model has {} inputs",
                r.cols(),
                self.theta.len()
            )));
        }
        Ok(())
    }
}

/// `p(y = 1|x, θ) = σ(θᵀx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    theta: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

impl LogisticModel {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("theta must be finite"));
        }
        Ok(LogisticModel { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.theta, x))
    }

    /// Exact `KL[p(y|x) ‖ p(y|x + r)]`.
    pub fn delta_kl(&self, x: &[f64], r: &[f64]) -> f64 {
        let s = dot(&self.theta, x);
        bernoulli_kl(sigmoid(s), sigmoid(s + dot(&self.theta, r)))
    }
}

/// Second-order approximation `−½·σ(θᵀx)(1 − σ(θᵀx))·ε²‖θ‖²`.
pub fn logistic_lds_taylor(model: &LogisticModel, x: &[f64], epsilon: f64) -> f64 {
    let p = model.prob(x);
    -0.5 * p * (1.0 - p) * epsilon * epsilon * dot(&model.theta, &model.theta)
}

/// `−max Δ_KL` over `n_angles` equally spaced points of the radius-`ε`
/// circle. Only defined for two-dimensional inputs.
pub fn logistic_lds_grid(
    model: &LogisticModel,
    x: &[f64],
    epsilon: f64,
    n_angles: usize,
) -> Result<f64> {
    if model.theta.len() != 2 || x.len() != 2 {
        return Err(Error::dim("circle grid search needs a 2-D logistic model"));
    }
    let best = (0..n_angles)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n_angles as f64;
            model.delta_kl(x, &[epsilon * a.cos(), epsilon * a.sin()])
        })
        .fold(0.0, f64::max);
    Ok(-best)
}

/// Finite-difference Hessian of `Δ_KL` at `r = 0` for a single input row,
/// from the four-point stencil
/// `[f(h(eᵢ+eⱼ)) − f(h(eᵢ−eⱼ)) − f(h(eⱼ−eᵢ)) + f(−h(eᵢ+eⱼ))] / 4h²`,
/// symmetrized.
pub fn brute_force_hessian<M: SensitivityModel>(
    model: &M,
    x: &Tensor,
    h_step: f64,
) -> Result<Tensor> {
    let dim = model.input_dim();
    if dim > MAX_ORACLE_DIM {
        return Err(Error::config(format!(
            "brute-force Hessian refused for {dim} inputs (limit {MAX_ORACLE_DIM})"
        )));
    }
    if x.shape() != [1, dim] {
        return Err(Error::dim(format!(
            "brute-force Hessian takes a single [1 x {dim}] row, got {:?}",
            x.shape()
        )));
    }
    if !(h_step > 0.0) {
        return Err(Error::config("h_step must be > 0"));
    }
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let n = dim * dim * 4;
    let mut r = Tensor::zeros(&[n, dim]);
    let mut row = 0;
    for i in 0..dim {
        for j in 0..dim {
            for (si, sj) in signs {
                let rr = r.row_mut(row);
                rr[i] += si * h_step;
                rr[j] += sj * h_step;
                row += 1;
            }
        }
    }
    let xs = x.select_rows(&vec![0; n]);
    let base = model.snapshot(&xs)?;
    let f = model.delta_kl(&xs, &r, &base)?;
    let mut hess = Tensor::zeros(&[dim, dim]);
    for i in 0..dim {
        for j in 0..dim {
            let k = (i * dim + j) * 4;
            let v = (f[k] - f[k + 1] - f[k + 2] + f[k + 3]) / (4.0 * h_step * h_step);
            hess.set(i, j, v);
        }
    }
    hess.add(&hess.transpose()?).map(|t| t.scale(0.5))
}

/// Eigenvalues (descending) and matching unit eigenvectors (as columns) of
/// a symmetric matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = match a.shape() {
        [r, c] if r == c => *r,
        s => return Err(Error::dim(format!("eigensolver needs a square matrix, got {s:?}"))),
    };
    let scale = 1.0 + a.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-9 * scale {
                return Err(Error::data(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let total: f64 = m.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[p][k], m[q][k]);
                    m[p][k] = c * pk - s * qk;
                    m[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = Tensor::zeros(&[n, n]);
    for (col, &src) in order.iter().enumerate() {
        for (r, vrow) in v.iter().enumerate() {
            vectors.set(r, col, vrow[src]);
        }
    }
    Ok((values, vectors))
}

/// Largest-magnitude eigenpair of a symmetric matrix (at most
/// [`MAX_ORACLE_DIM`] square).
pub fn dominant_eigenvector(h: &Tensor) -> Result<(f64, Vec<f64>)> {
    if h.rows() > MAX_ORACLE_DIM {
        return Err(Error::config(format!(
            "dense eigensolver limited to {MAX_ORACLE_DIM} dimensions"
        )));
    }
    let (values, vectors) = symmetric_eigen(h)?;
    let k = (0..values.len())
        .max_by(|&i, &j| values[i].abs().total_cmp(&values[j].abs()))
        .ok_or_else(|| Error::dim("empty matrix"))?;
    let u = (0..values.len()).map(|r| vectors.get(r, k)).collect();
    Ok((values[k], u))
}

/// `|λ₂| / |λ₁|` for eigenvalues ordered by magnitude.
pub fn eigengap_ratio(values: &[f64]) -> f64 {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    match mags.as_slice() {
        [l1, l2, ..] if *l1 > 0.0 => l2 / l1,
        _ => 0.0,
    }
}
