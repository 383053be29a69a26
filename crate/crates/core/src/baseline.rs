//! Comparison regularizers: fast-gradient adversarial training under L∞ and
//! L2 constraints, random-direction perturbation training and L2 weight
//! decay.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{nll_loss, GradientBundle, Mlp, ParamGrads};
use crate::numerics::{l2_norm, sample_unit_rows, Rng, Tensor};
use crate::vat::VatConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvNorm {
    Linf,
    L2,
}

/// How the adversarial likelihood enters the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdvMode {
    /// Only the likelihood at the perturbed input.
    Replace,
    /// Clean likelihood plus `λ` times the perturbed likelihood.
    #[default]
    Augment,
}

impl AdvMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "replace" => Some(AdvMode::Replace),
            "augment" => Some(AdvMode::Augment),
            _ => None,
        }
    }
}

/// The single regularization method active in a training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegularizerKind {
    None,
    L2Decay { lambda: f64 },
    /// Input-layer dropout with the given keep probability.
    Dropout { keep_probability: f64 },
    RandomPerturbation { epsilon: f64, lambda: f64 },
    AdversarialLinf { epsilon: f64, lambda: f64, mode: AdvMode },
    AdversarialL2 { epsilon: f64, lambda: f64, mode: AdvMode },
    Vat(VatConfig),
}

impl RegularizerKind {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be > 0, got {v}")))
            }
        };
        let non_negative = |v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("lambda must be >= 0, got {v}")))
            }
        };
        match *self {
            RegularizerKind::None => Ok(()),
            RegularizerKind::L2Decay { lambda } => non_negative(lambda),
            RegularizerKind::Dropout { keep_probability } => {
                if keep_probability > 0.0 && keep_probability <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "dropout keep probability {keep_probability} outside (0, 1]"
                    )))
                }
            }
            RegularizerKind::RandomPerturbation { epsilon, lambda }
            | RegularizerKind::AdversarialLinf { epsilon, lambda, .. }
            | RegularizerKind::AdversarialL2 { epsilon, lambda, .. } => {
                positive("epsilon", epsilon)?;
                non_negative(lambda)
            }
            RegularizerKind::Vat(cfg) => cfg.validate(),
        }
    }

    /// Whether the regularizer needs labels for the rows it acts on.
    pub fn needs_labels(&self) -> bool {
        matches!(
            self,
            RegularizerKind::AdversarialLinf { .. }
                | RegularizerKind::AdversarialL2 { .. }
                | RegularizerKind::Dropout { .. }
        )
    }

    /// Short method name used in tables and file names.
    pub fn method(&self) -> &'static str {
        match self {
            RegularizerKind::None => "mle",
            RegularizerKind::L2Decay { .. } => "l2",
            RegularizerKind::Dropout { .. } => "dropout",
            RegularizerKind::RandomPerturbation { .. } => "random",
            RegularizerKind::AdversarialLinf { .. } => "adv-linf",
            RegularizerKind::AdversarialL2 { .. } => "adv-l2",
            RegularizerKind::Vat(_) => "vat",
        }
    }

    /// The method's tuned hyperparameter, if any.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            RegularizerKind::None => None,
            RegularizerKind::L2Decay { lambda } => Some(lambda),
            RegularizerKind::Dropout { keep_probability } => Some(keep_probability),
            RegularizerKind::RandomPerturbation { epsilon, .. }
            | RegularizerKind::AdversarialLinf { epsilon, .. }
            | RegularizerKind::AdversarialL2 { epsilon, .. } => Some(epsilon),
            RegularizerKind::Vat(cfg) => Some(cfg.epsilon),
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RegularizerKind::None => write!(f, "mle"),
            RegularizerKind::L2Decay { lambda } => write!(f, "l2(lambda={lambda})"),
            RegularizerKind::Dropout { keep_probability } => {
                write!(f, "dropout(keep={keep_probability})")
            }
            RegularizerKind::RandomPerturbation { epsilon, .. } => {
                write!(f, "random(eps={epsilon})")
            }
            RegularizerKind::AdversarialLinf { epsilon, .. } => {
                write!(f, "adv-linf(eps={epsilon})")
            }
            RegularizerKind::AdversarialL2 { epsilon, .. } => write!(f, "adv-l2(eps={epsilon})"),
            RegularizerKind::Vat(cfg) => write!(
                f,
                "vat(eps={}, ip={}, xi={})",
                cfg.epsilon, cfg.power_iterations, cfg.xi
            ),
        }
    }
}

/// One-step linearized adversarial perturbation of the labeled batch:
/// `ε·sign(g)` (L∞) or `ε·g/‖g‖₂` (L2) per row, `g = ∇_x NLL`.
pub fn adv_perturbation(
    net: &Mlp,
    x: &Tensor,
    labels: &[usize],
    epsilon: f64,
    norm: AdvNorm,
) -> Result<Tensor> {
    let (logits, cache) = net.forward(x)?;
    let (_, d_logits) = nll_loss(&logits, labels)?;
    // Undo the 1/batch factor so the flatness threshold is per example.
    let d_logits = d_logits.scale(x.rows() as f64);
    let g = net.backward(&cache, &d_logits)?.d_input;
    let mut r = Tensor::zeros(g.shape());
    for (i, gi) in g.row_iter().enumerate() {
        let n = l2_norm(gi);
        if n < 1e-12 {
            continue;
        }
        let out = r.row_mut(i);
        match norm {
            AdvNorm::Linf => {
                for (o, &v) in out.iter_mut().zip(gi) {
                    *o = if v > 0.0 {
                        epsilon
                    } else if v < 0.0 {
                        -epsilon
                    } else {
                        0.0
                    };
                }
            }
            AdvNorm::L2 => {
                for (o, &v) in out.iter_mut().zip(gi) {
                    *o = epsilon * v / n;
                }
            }
        }
    }
    Ok(r)
}

/// `ε` times an independent uniform unit direction per row of `x`.
pub fn random_perturbation(x: &Tensor, epsilon: f64, rng: &mut Rng) -> Result<Tensor> {
    Ok(sample_unit_rows(rng, x.rows(), x.cols())?.scale(epsilon))
}

/// `(λ/2)·Σ‖W‖²` over weight matrices (biases excluded) and its gradient.
pub fn l2_penalty(net: &Mlp, lambda: f64) -> (f64, ParamGrads) {
    let mut grads = ParamGrads::zeros_like(net);
    let mut value = 0.0;
    for (layer, g) in net.layers().iter().zip(grads.layers.iter_mut()) {
        let w = layer.weights();
        value += 0.5 * lambda * w.data().iter().map(|v| v * v).sum::<f64>();
        g.weights = w.scale(lambda);
    }
    (value, grads)
}

/// Mean NLL at `x + r_adv` with `r_adv` held constant.
pub fn adv_loss_term(
    net: &Mlp,
    x: &Tensor,
    labels: &[usize],
    r_adv: &Tensor,
) -> Result<(f64, GradientBundle)> {
    let (logits, cache) = net.forward(&x.add(r_adv)?)?;
    let (loss, d_logits) = nll_loss(&logits, labels)?;
    Ok((loss, net.backward(&cache, &d_logits)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};

    #[test]
    fn flat_model_gives_zero_perturbation() {
        let net = Mlp::zeros(4, &[3], 2).unwrap();
        let x = Rng::new(1).normal_tensor(&[2, 4], 1.0);
        for norm in [AdvNorm::Linf, AdvNorm::L2] {
            let r = adv_perturbation(&net, &x, &[0, 1], 0.3, norm).unwrap();
            assert_eq!(r.max_abs(), 0.0);
        }
    }

    #[test]
    fn linf_is_sign_structured_and_l2_has_radius() {
        let mut rng = Rng::new(2);
        let net = Mlp::new(6, &[8], 3, &mut rng).unwrap();
        let x = rng.normal_tensor(&[5, 6], 1.0);
        let labels = [0, 1, 2, 1, 0];
        let r = adv_perturbation(&net, &x, &labels, 0.1, AdvNorm::Linf).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.1 || v == -0.1 || v == 0.0));
        let r = adv_perturbation(&net, &x, &labels, 0.4, AdvNorm::L2).unwrap();
        assert!(r.row_norms().iter().all(|n| (n - 0.4).abs() < 1e-12));
    }

    #[test]
    fn logistic_model_perturbation_opposes_true_class() {
        // Two-class linear net with logits (0, θᵀx): p(y=1|x) = σ(θᵀx).
        // ∂NLL/∂x = (σ − y)·θ, so for y = 1 the perturbation points along −θ
        // and for y = 0 along +θ.
        let theta = [0.6, -0.8, 0.0];
        let mut w = Tensor::zeros(&[3, 2]);
        for (j, &t) in theta.iter().enumerate() {
            w.set(j, 1, t);
        }
        let layer = Layer::new(w, Tensor::zeros(&[2]), Activation::Identity).unwrap();
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let x = Tensor::from_rows(&[[0.3, 0.1, -0.2], [0.3, 0.1, -0.2]]).unwrap();
        let r = adv_perturbation(&net, &x, &[1, 0], 0.5, AdvNorm::L2).unwrap();
        for j in 0..3 {
            assert!((r.get(0, j) + 0.5 * theta[j]).abs() < 1e-12);
            assert!((r.get(1, j) - 0.5 * theta[j]).abs() < 1e-12);
        }
        let r = adv_perturbation(&net, &x, &[1, 0], 0.1, AdvNorm::Linf).unwrap();
        assert_eq!(r.row(0), &[-0.1, 0.1, 0.0]);
    }

    #[test]
    fn random_perturbation_norms() {
        let mut rng = Rng::new(4);
        let x = Tensor::zeros(&[50, 10]);
        let r = random_perturbation(&x, 0.7, &mut rng).unwrap();
        assert!(r.row_norms().iter().all(|n| (n - 0.7).abs() < 1e-12));
        let r1 = random_perturbation(&Tensor::zeros(&[20, 1]), 0.3, &mut rng).unwrap();
        assert!(r1.data().iter().all(|&v| (v.abs() - 0.3).abs() < 1e-15));
    }

    #[test]
    fn random_perturbation_rows_are_uncorrelated() {
        let mut rng = Rng::new(5);
        let r = random_perturbation(&Tensor::zeros(&[20_000, 3]), 1.0, &mut rng).unwrap();
        // correlation of first coordinates across 10^4 disjoint row pairs
        let (a, b): (Vec<f64>, Vec<f64>) = (0..10_000)
            .map(|k| (r.get(2 * k, 0), r.get(2 * k + 1, 0)))
            .unzip();
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        assert!((cov / (va * vb).sqrt()).abs() < 0.03);
    }

    #[test]
    fn l2_penalty_examples() {
        let layer = Layer::new(
            Tensor::from_rows(&[[3.0, 0.0]]).unwrap(),
            Tensor::vector(vec![5.0, -7.0]).unwrap(),
            Activation::Identity,
        )
        .unwrap();
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let (v, g) = l2_penalty(&net, 2.0);
        assert_eq!(v, 9.0);
        assert_eq!(g.layers[0].weights.data(), &[6.0, 0.0]);
        assert_eq!(g.layers[0].biases.max_abs(), 0.0);
        let (v, g) = l2_penalty(&net, 0.0);
        assert_eq!((v, g.max_abs()), (0.0, 0.0));
    }

    #[test]
    fn adv_loss_at_zero_perturbation_is_nll() {
        let mut rng = Rng::new(6);
        let net = Mlp::new(4, &[5], 3, &mut rng).unwrap();
        let x = rng.normal_tensor(&[4, 4], 1.0);
        let labels = [0, 2, 1, 1];
        let (adv, _) = adv_loss_term(&net, &x, &labels, &Tensor::zeros(&[4, 4])).unwrap();
        let (clean, _) = nll_loss(&net.logits(&x).unwrap(), &labels).unwrap();
        assert_eq!(adv, clean);
    }

    #[test]
    fn regularizer_validation() {
        assert!(RegularizerKind::Dropout { keep_probability: 0.0 }.validate().is_err());
        assert!(RegularizerKind::L2Decay { lambda: -1.0 }.validate().is_err());
        assert!(RegularizerKind::AdversarialL2 {
            epsilon: 0.0,
            lambda: 1.0,
            mode: AdvMode::Augment
        }
        .validate()
        .is_err());
        assert!(RegularizerKind::Vat(VatConfig::new(0.5)).validate().is_ok());
    }
}
