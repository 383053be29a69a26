//! Virtual adversarial perturbations and the local distributional
//! smoothness (LDS) penalty.
//!
//! The virtual adversarial direction is the dominant eigenvector of the
//! Hessian `H` of `Δ_KL` at `r = 0`. It is approximated by power iteration
//! in which each product `H·d` is replaced by the finite difference
//! `∇_r Δ_KL(ξd) / ξ`; the gradient at `r = 0` vanishes, so a single
//! backward pass per iteration suffices and `H` is never formed.

use crate::divergence::{kl_logit_grad, kl_rows, BaseDistribution, SensitivityModel};
use crate::error::{Error, Result};
use crate::nn::{count_propagations, nll_loss, GradientBundle, Mlp, PropagationCounts};
use crate::numerics::{l2_norm, log_softmax, sample_unit_rows, Rng, Tensor};

/// Gradients with a smaller norm than this are treated as a flat model.
pub const FLAT_GRADIENT_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VatConfig {
    /// Radius of the L2 ball the perturbation lives on.
    pub epsilon: f64,
    /// Finite-difference scale for the Hessian-vector product.
    pub xi: f64,
    /// Power-iteration count `I_p`.
    pub power_iterations: usize,
    /// Weight of the smoothness term in the training objective.
    pub lambda: f64,
}

impl VatConfig {
    pub const DEFAULT_XI: f64 = 1e-6;

    /// `ξ = 1e-6`, one power iteration and `λ = 1`.
    pub fn new(epsilon: f64) -> Self {
        VatConfig {
            epsilon,
            xi: Self::DEFAULT_XI,
            power_iterations: 1,
            lambda: 1.0,
        }
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_power_iterations(mut self, n: usize) -> Self {
        self.power_iterations = n;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::config(format!("xi must be > 0, got {}", self.xi)));
        }
        if self.power_iterations == 0 {
            return Err(Error::config("power_iterations must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VapResult {
    pub r_vadv: Tensor,
    /// `−Δ_KL(r_vadv)` per row; never positive.
    pub lds_estimate: Vec<f64>,
    pub iterations_used: usize,
}

impl VapResult {
    pub fn mean_lds(&self) -> f64 {
        mean(&self.lds_estimate)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Virtual adversarial perturbation `ε·d` for every row of `x`.
pub fn gen_vap<M: SensitivityModel>(
    model: &M,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<Tensor> {
    let base = model.snapshot(x)?;
    gen_vap_from_base(model, x, &base, cfg, rng)
}

/// As [`gen_vap`], reusing an existing snapshot of the clean output.
pub fn gen_vap_from_base<M: SensitivityModel>(
    model: &M,
    x: &Tensor,
    base: &M::Base,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<Tensor> {
    cfg.validate()?;
    let dim = model.input_dim();
    if x.shape().len() != 2 || x.cols() != dim {
        return Err(Error::dim(format!(
            "gen_vap expects [batch x {dim}] input, got {:?}",
            x.shape()
        )));
    }
    let mut d = sample_unit_rows(rng, x.rows(), dim)?;
    for _ in 0..cfg.power_iterations {
        let grad = model.grad_r_delta_kl(x, &d.scale(cfg.xi), base)?;
        // H·d ≈ grad / ξ; normalization ignores the positive scale, but the
        // flatness test is on the Hessian-vector estimate itself.
        for (i, g) in grad.row_iter().enumerate() {
            let hd_norm = l2_norm(g) / cfg.xi;
            if hd_norm < FLAT_GRADIENT_NORM || !hd_norm.is_finite() {
                log::debug!("gen_vap: flat model at row {i} (|Hd| = {hd_norm:e}), keeping d");
                continue;
            }
            let n = l2_norm(g);
            for (dst, &v) in d.row_mut(i).iter_mut().zip(g) {
                *dst = v / n;
            }
        }
    }
    Ok(d.scale(cfg.epsilon))
}

/// Perturbation together with its LDS estimate (one extra forward pass).
pub fn virtual_adversarial<M: SensitivityModel>(
    model: &M,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<VapResult> {
    let base = model.snapshot(x)?;
    let r_vadv = gen_vap_from_base(model, x, &base, cfg, rng)?;
    let lds_estimate = model
        .delta_kl(x, &r_vadv, &base)?
        .into_iter()
        .map(|v| -v)
        .collect();
    Ok(VapResult {
        r_vadv,
        lds_estimate,
        iterations_used: cfg.power_iterations,
    })
}

/// `−Δ_KL(r)` per row against a fresh snapshot of the clean output.
pub fn lds_estimate<M: SensitivityModel>(model: &M, x: &Tensor, r: &Tensor) -> Result<Vec<f64>> {
    let base = model.snapshot(x)?;
    Ok(model
        .delta_kl(x, r, &base)?
        .into_iter()
        .map(|v| -v)
        .collect())
}

/// Mean over rows of `KL[p(y|x, θ̂) ‖ p(y|x + r, θ)]` and its gradient at
/// `θ = θ̂`. Both `r` and the base distribution are constants, so this is a
/// single forward and backward pass through the perturbed input.
pub fn vat_backward(
    net: &Mlp,
    x: &Tensor,
    r_vadv: &Tensor,
    base: &BaseDistribution,
) -> Result<(f64, GradientBundle)> {
    if base.rows() != x.rows() {
        return Err(Error::dim("base distribution and input row counts differ"));
    }
    let (logits, cache) = net.forward(&x.add(r_vadv)?)?;
    let log_q = log_softmax(&logits)?;
    let value = mean(&kl_rows(base, &log_q));
    let d_logits = kl_logit_grad(base, &log_q).scale(1.0 / x.rows() as f64);
    Ok((value, net.backward(&cache, &d_logits)?))
}

/// Full smoothness penalty for one regularizer minibatch: snapshot,
/// perturbation search and parameter gradient. Returns the mean `Δ_KL` at
/// the perturbation (i.e. `−mean LDS~`) and the gradient of that mean.
pub fn vat_penalty(
    net: &Mlp,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<(f64, GradientBundle)> {
    let base = BaseDistribution::snapshot(net, x)?;
    let r = gen_vap_from_base(net, x, &base, cfg, rng)?;
    vat_backward(net, x, &r, &base)
}

/// Propagations spent in one VAT training step, split by term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostAudit {
    pub likelihood: PropagationCounts,
    pub regularizer: PropagationCounts,
}

/// Instrumented replay of one VAT gradient evaluation: the likelihood term
/// on `x_labeled` and the smoothness term on `x_reg`.
pub fn vat_step_cost_audit(
    net: &Mlp,
    x_labeled: &Tensor,
    labels: &[usize],
    x_reg: &Tensor,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<CostAudit> {
    cfg.validate()?;
    let (res, likelihood) = count_propagations(|| -> Result<()> {
        let (logits, cache) = net.forward(x_labeled)?;
        let (_, d_logits) = nll_loss(&logits, labels)?;
        net.backward(&cache, &d_logits)?;
        Ok(())
    });
    res?;
    let (res, regularizer) = count_propagations(|| -> Result<()> {
        if cfg.lambda > 0.0 {
            vat_penalty(net, x_reg, cfg, rng)?;
        }
        Ok(())
    });
    res?;
    Ok(CostAudit {
        likelihood,
        regularizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(VatConfig::new(0.5).validate().is_ok());
        assert!(VatConfig::new(0.0).validate().is_err());
        assert!(VatConfig::new(1.0).with_xi(0.0).validate().is_err());
        assert!(VatConfig::new(1.0).with_power_iterations(0).validate().is_err());
        assert!(VatConfig::new(1.0).with_lambda(-1.0).validate().is_err());
        let d = VatConfig::new(1.0);
        assert_eq!((d.xi, d.power_iterations, d.lambda), (1e-6, 1, 1.0));
    }

    #[test]
    fn perturbation_has_radius_epsilon() {
        let mut rng = Rng::new(21);
        let net = Mlp::new(7, &[9], 3, &mut rng).unwrap();
        let x = rng.normal_tensor(&[6, 7], 1.0);
        for (eps, ip) in [(0.1, 1), (0.5, 3), (2.0, 2)] {
            let cfg = VatConfig::new(eps).with_power_iterations(ip);
            let r = gen_vap(&net, &x, &cfg, &mut rng).unwrap();
            for n in r.row_norms() {
                assert!((n - eps).abs() < 1e-9 * eps.max(1.0));
            }
        }
    }

    #[test]
    fn flat_model_keeps_random_direction() {
        let net = Mlp::zeros(5, &[4], 2).unwrap();
        let mut rng = Rng::new(3);
        let x = rng.normal_tensor(&[3, 5], 1.0);
        let cfg = VatConfig::new(0.7).with_power_iterations(3);
        let res = virtual_adversarial(&net, &x, &cfg, &mut rng).unwrap();
        assert!(res.lds_estimate.iter().all(|&v| v == 0.0));
        for n in res.r_vadv.row_norms() {
            assert!((n - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn lds_is_never_positive() {
        let mut rng = Rng::new(8);
        let net = Mlp::new(4, &[6], 3, &mut rng).unwrap();
        let x = rng.normal_tensor(&[10, 4], 1.0);
        let res = virtual_adversarial(&net, &x, &VatConfig::new(1.0), &mut rng).unwrap();
        assert!(res.lds_estimate.iter().all(|&v| v <= 0.0));
        assert!(res.mean_lds() < 0.0);
    }

    #[test]
    fn zero_perturbation_gives_zero_logit_gradient() {
        let mut rng = Rng::new(13);
        let net = Mlp::new(4, &[6], 3, &mut rng).unwrap();
        let x = rng.normal_tensor(&[3, 4], 1.0);
        let base = BaseDistribution::snapshot(&net, &x).unwrap();
        let (value, g) = vat_backward(&net, &x, &Tensor::zeros(&[3, 4]), &base).unwrap();
        assert_eq!(value, 0.0);
        assert!(g.d_theta.max_abs() < 1e-15);
    }

    #[test]
    fn cost_audit_counts() {
        let mut rng = Rng::new(1);
        let net = Mlp::new(4, &[5], 2, &mut rng).unwrap();
        let xl = rng.normal_tensor(&[3, 4], 1.0);
        let xr = rng.normal_tensor(&[7, 4], 1.0);
        let labels = [0, 1, 1];

        let a = vat_step_cost_audit(&net, &xl, &labels, &xr, &VatConfig::new(1.0), &mut rng)
            .unwrap();
        assert_eq!(a.regularizer, PropagationCounts { forward: 3, backward: 2 });
        assert_eq!(a.likelihood, PropagationCounts { forward: 1, backward: 1 });

        let cfg = VatConfig::new(1.0).with_power_iterations(2);
        let a = vat_step_cost_audit(&net, &xl, &labels, &xr, &cfg, &mut rng).unwrap();
        assert_eq!(a.regularizer, PropagationCounts { forward: 4, backward: 3 });

        let cfg = VatConfig::new(1.0).with_lambda(0.0);
        let a = vat_step_cost_audit(&net, &xl, &labels, &xr, &cfg, &mut rng).unwrap();
        assert_eq!(a.regularizer, PropagationCounts::default());
    }
}
