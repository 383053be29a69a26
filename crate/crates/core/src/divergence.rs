//! Categorical KL divergence and the perturbation sensitivity
//! `Δ_KL(r, x, θ) = KL[p(y|x, θ̂) ‖ p(y|x + r, θ)]`.
//!
//! The first KL argument is always a [`BaseDistribution`]: a detached
//! snapshot of the model output at the clean input. Gradients therefore
//! only flow through the perturbed branch, which is what both the
//! power-iteration step (gradient w.r.t. `r`) and the VAT parameter
//! gradient (gradient w.r.t. `θ`) need.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numerics::{floored_ln, log_softmax, Tensor};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Detached `p(y|x, θ̂)`, kept both as probabilities and log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseDistribution {
    probs: Tensor,
    log_probs: Tensor,
}

impl BaseDistribution {
    /// One forward pass through `net` at the clean input.
    pub fn snapshot(net: &Mlp, x: &Tensor) -> Result<Self> {
        Self::from_log_probs(log_softmax(&net.logits(x)?)?)
    }

    pub fn from_log_probs(log_probs: Tensor) -> Result<Self> {
        let probs = log_probs.map(f64::exp);
        check_rows_normalized(&probs, "base distribution")?;
        Ok(BaseDistribution { probs, log_probs })
    }

    /// Probabilities with the usual floor inside the logarithm.
    pub fn from_probs(probs: Tensor) -> Result<Self> {
        check_rows_normalized(&probs, "base distribution")?;
        let log_probs = probs.map(floored_ln);
        Ok(BaseDistribution { probs, log_probs })
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }

    pub fn rows(&self) -> usize {
        self.probs.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        BaseDistribution {
            probs: self.probs.select_rows(idx),
            log_probs: self.log_probs.select_rows(idx),
        }
    }
}

fn check_rows_normalized(p: &Tensor, what: &str) -> Result<()> {
    if p.shape().len() != 2 {
        return Err(Error::dim(format!("{what}: expected [batch x C], got {:?}", p.shape())));
    }
    for (i, row) in p.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|&v| v < 0.0) {
            return Err(Error::data(format!("{what}: row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Per-row `Σ_c p_c (log p_c − log q_c)` with `0·log 0 = 0`.
pub fn kl_categorical(p: &Tensor, log_q: &Tensor) -> Result<Vec<f64>> {
    if p.shape() != log_q.shape() {
        return Err(Error::dim(format!(
            "kl: p {:?} vs log_q {:?}",
            p.shape(),
            log_q.shape()
        )));
    }
    check_rows_normalized(p, "kl p")?;
    check_rows_normalized(&log_q.map(f64::exp), "kl q")?;
    Ok(p.row_iter()
        .zip(log_q.row_iter())
        .map(|(pr, lq)| {
            pr.iter()
                .zip(lq)
                .filter(|(&pc, _)| pc > 0.0)
                .map(|(&pc, &lqc)| pc * (floored_ln(pc) - lqc))
                .sum::<f64>()
                .max(0.0)
        })
        .collect())
}

/// KL rows against the exact base log-probabilities (no floor needed).
pub(crate) fn kl_rows(base: &BaseDistribution, log_q: &Tensor) -> Vec<f64> {
    base.probs
        .row_iter()
        .zip(base.log_probs.row_iter())
        .zip(log_q.row_iter())
        .map(|((p, lp), lq)| {
            p.iter()
                .zip(lp)
                .zip(lq)
                .filter(|((&pc, _), _)| pc > 0.0)
                .map(|((&pc, &lpc), &lqc)| pc * (lpc - lqc))
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}

/// Per-row gradient of `KL[p ‖ softmax(z)]` w.r.t. the logits `z`, i.e.
/// `q − p`. Evaluated as `p·expm1(log q − log p)` so that tiny differences
/// between nearly identical saturated distributions keep their precision.
pub(crate) fn kl_logit_grad(base: &BaseDistribution, log_q: &Tensor) -> Tensor {
    let mut g = log_q.clone();
    for (i, row) in g.data_mut().chunks_mut(log_q.cols()).enumerate() {
        let p = base.probs.row(i);
        let lp = base.log_probs.row(i);
        for c in 0..row.len() {
            let lq = row[c];
            row[c] = if p[c] > 0.0 {
                p[c] * (lq - lp[c]).exp_m1()
            } else {
                lq.exp()
            };
        }
    }
    g
}

fn perturbed(x: &Tensor, r: &Tensor, base: &BaseDistribution) -> Result<Tensor> {
    if base.rows() != x.rows() {
        return Err(Error::dim(format!(
            "base distribution has {} rows, input has {}",
            base.rows(),
            x.rows()
        )));
    }
    x.add(r)
}

/// `Δ_KL(r)` per row: `kl(base, log_softmax(forward(x + r)))`.
pub fn delta_kl(net: &Mlp, x: &Tensor, r: &Tensor, base: &BaseDistribution) -> Result<Vec<f64>> {
    let log_q = log_softmax(&net.logits(&perturbed(x, r, base)?)?)?;
    Ok(kl_rows(base, &log_q))
}

/// `∇_r Δ_KL` per row, via one forward and one backward pass through the
/// perturbed input with the base held constant.
pub fn grad_r_delta_kl(
    net: &Mlp,
    x: &Tensor,
    r: &Tensor,
    base: &BaseDistribution,
) -> Result<Tensor> {
    let (logits, cache) = net.forward(&perturbed(x, r, base)?)?;
    let d_logits = kl_logit_grad(base, &log_softmax(&logits)?);
    Ok(net.backward(&cache, &d_logits)?.d_input)
}

/// A base distribution paired with a candidate perturbation of bounded norm.
#[derive(Clone, Debug)]
pub struct PerturbationProbe {
    base: BaseDistribution,
    r: Tensor,
}

impl PerturbationProbe {
    pub fn new(base: BaseDistribution, r: Tensor, radius: f64) -> Result<Self> {
        if r.rows() != base.rows() {
            return Err(Error::dim("probe perturbation and base row counts differ"));
        }
        if let Some((i, n)) = r
            .row_norms()
            .into_iter()
            .enumerate()
            .find(|&(_, n)| n > radius * (1.0 + 1e-12))
        {
            return Err(Error::data(format!(
                "perturbation row {i} has norm {n} > radius {radius}"
            )));
        }
        Ok(PerturbationProbe { base, r })
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn r(&self) -> &Tensor {
        &self.r
    }

    pub fn delta_kl(&self, net: &Mlp, x: &Tensor) -> Result<Vec<f64>> {
        delta_kl(net, x, &self.r, &self.base)
    }

    pub fn grad_r(&self, net: &Mlp, x: &Tensor) -> Result<Tensor> {
        grad_r_delta_kl(net, x, &self.r, &self.base)
    }
}

/// A model whose output sensitivity to input perturbations can be probed.
/// Implemented by [`Mlp`] and by the closed-form reference models.
pub trait SensitivityModel {
    type Base;

    fn input_dim(&self) -> usize;

    /// Detached output distribution at the clean input.
    fn snapshot(&self, x: &Tensor) -> Result<Self::Base>;

    fn delta_kl(&self, x: &Tensor, r: &Tensor, base: &Self::Base) -> Result<Vec<f64>>;

    fn grad_r_delta_kl(&self, x: &Tensor, r: &Tensor, base: &Self::Base) -> Result<Tensor>;
}

impl SensitivityModel for Mlp {
    type Base = BaseDistribution;

    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn snapshot(&self, x: &Tensor) -> Result<BaseDistribution> {
        BaseDistribution::snapshot(self, x)
    }

    fn delta_kl(&self, x: &Tensor, r: &Tensor, base: &BaseDistribution) -> Result<Vec<f64>> {
        delta_kl(self, x, r, base)
    }

    fn grad_r_delta_kl(&self, x: &Tensor, r: &Tensor, base: &BaseDistribution) -> Result<Tensor> {
        grad_r_delta_kl(self, x, r, base)
    }
}
