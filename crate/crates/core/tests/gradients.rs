//! Analytic gradients against central finite differences.

mod common;

use common::{central_diff, min_relu_preactivation, random_net, rel_err};
use vatlab::baseline::{adv_loss_term, adv_perturbation};
use vatlab::divergence::{delta_kl, grad_r_delta_kl};
use vatlab::nn::nll_loss;
use vatlab::vat::vat_backward;
use vatlab::{AdvNorm, BaseDistribution, Mlp, Rng, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Below this magnitude a relative error is meaningless; compare absolutely.
const FLOOR: f64 = 1e-5;
const NETS: usize = 24;
const KINK_CLEARANCE: f64 = 1e-3;

struct Case {
    net: Mlp,
    x: Tensor,
    labels: Vec<usize>,
}

fn cases(seed: u64) -> Vec<Case> {
    let mut rng = Rng::new(seed);
    (0..NETS)
        .map(|_| {
            let input = 2 + rng.index(5);
            let classes = 2 + rng.index(3);
            let net = random_net(&mut rng, input, classes);
            let batch = 1 + rng.index(4);
            // differences straddling a ReLU kink are not derivatives
            let x = loop {
                let x = rng.normal_tensor(&[batch, input], 1.0);
                if min_relu_preactivation(&net, &x) > KINK_CLEARANCE {
                    break x;
                }
            };
            let labels = (0..batch).map(|_| rng.index(classes)).collect();
            Case { net, x, labels }
        })
        .collect()
}

/// Gaussian perturbation whose sum with `x` also clears every kink.
fn clear_perturbation(rng: &mut Rng, net: &Mlp, x: &Tensor, std: f64) -> Tensor {
    loop {
        let r = rng.normal_tensor(x.shape(), std);
        if min_relu_preactivation(net, &x.add(&r).unwrap()) > KINK_CLEARANCE {
            return r;
        }
    }
}

fn with_params(net: &Mlp, theta: &[f64]) -> Mlp {
    let mut n = net.clone();
    n.set_flat_params(theta).unwrap();
    n
}

fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n, FLOOR);
        assert!(e < TOL, "{what}[{i}]: analytic {a:e} numeric {n:e} rel {e:e}");
    }
}

#[test]
fn nll_gradients_wrt_parameters_and_input() {
    for c in cases(1) {
        let (logits, cache) = c.net.forward(&c.x).unwrap();
        let (_, d_logits) = nll_loss(&logits, &c.labels).unwrap();
        let g = c.net.backward(&cache, &d_logits).unwrap();

        let theta = c.net.flat_params();
        let fd = central_diff(&theta, H, |t| {
            nll_loss(&with_params(&c.net, t).logits(&c.x).unwrap(), &c.labels).unwrap().0
        });
        assert_close(&g.d_theta.flatten(), &fd, "nll dθ");

        let fd = central_diff(c.x.data(), H, |v| {
            let x = Tensor::new(c.x.shape().to_vec(), v.to_vec()).unwrap();
            nll_loss(&c.net.logits(&x).unwrap(), &c.labels).unwrap().0
        });
        assert_close(g.d_input.data(), &fd, "nll dx");
    }
}

#[test]
fn nll_backward_tight_on_significant_coordinates() {
    // ≥ 1e-3 in magnitude, where step-1e-5 differences carry ~1e-7 relative error
    for c in cases(2) {
        let (logits, cache) = c.net.forward(&c.x).unwrap();
        let (_, d_logits) = nll_loss(&logits, &c.labels).unwrap();
        let g = c.net.backward(&cache, &d_logits).unwrap();
        let theta = c.net.flat_params();
        let fd = central_diff(&theta, H, |t| {
            nll_loss(&with_params(&c.net, t).logits(&c.x).unwrap(), &c.labels).unwrap().0
        });
        for (a, n) in g.d_theta.flatten().iter().zip(&fd) {
            assert!(rel_err(*a, *n, 1e-3) < 1e-6, "{a:e} vs {n:e}");
        }
    }
}

#[test]
fn delta_kl_gradient_wrt_perturbation() {
    let mut rng = Rng::new(3);
    for c in cases(3) {
        let base = BaseDistribution::snapshot(&c.net, &c.x).unwrap();
        let r = clear_perturbation(&mut rng, &c.net, &c.x, 0.3);
        let g = grad_r_delta_kl(&c.net, &c.x, &r, &base).unwrap();
        let fd = central_diff(r.data(), H, |v| {
            let r = Tensor::new(c.x.shape().to_vec(), v.to_vec()).unwrap();
            delta_kl(&c.net, &c.x, &r, &base).unwrap().iter().sum()
        });
        assert_close(g.data(), &fd, "Δ_KL dr");
    }
}

#[test]
fn vat_backward_wrt_parameters_with_detached_base() {
    let mut rng = Rng::new(4);
    for c in cases(4) {
        let base = BaseDistribution::snapshot(&c.net, &c.x).unwrap();
        let r = clear_perturbation(&mut rng, &c.net, &c.x, 0.4);
        let (_, g) = vat_backward(&c.net, &c.x, &r, &base).unwrap();
        let theta = c.net.flat_params();
        let rows = c.x.rows() as f64;
        // base stays fixed while θ moves
        let fd = central_diff(&theta, H, |t| {
            delta_kl(&with_params(&c.net, t), &c.x, &r, &base).unwrap().iter().sum::<f64>() / rows
        });
        assert_close(&g.d_theta.flatten(), &fd, "vat dθ");
    }
}

#[test]
fn adversarial_term_wrt_parameters() {
    let mut checked = 0;
    for (k, c) in cases(5).into_iter().enumerate() {
        let norm = if k % 2 == 0 { AdvNorm::L2 } else { AdvNorm::Linf };
        let r = adv_perturbation(&c.net, &c.x, &c.labels, 0.2, norm).unwrap();
        let (_, g) = adv_loss_term(&c.net, &c.x, &c.labels, &r).unwrap();
        let xr = c.x.add(&r).unwrap();
        if min_relu_preactivation(&c.net, &xr) < KINK_CLEARANCE {
            continue;
        }
        checked += 1;
        let theta = c.net.flat_params();
        let fd = central_diff(&theta, H, |t| {
            nll_loss(&with_params(&c.net, t).logits(&xr).unwrap(), &c.labels).unwrap().0
        });
        assert_close(&g.d_theta.flatten(), &fd, "adv dθ");
    }
    assert!(checked >= 20, "only {checked} kink-free cases");
}

#[test]
fn delta_kl_matches_straight_line_reference() {
    // 2-2 net: identity output, W = [[1, -2], [0.5, 1]], b = [0.1, -0.3]
    let layer = vatlab::Layer::new(
        Tensor::from_rows(&[[1.0, -2.0], [0.5, 1.0]]).unwrap(),
        Tensor::vector(vec![0.1, -0.3]).unwrap(),
        vatlab::Activation::Identity,
    )
    .unwrap();
    let net = Mlp::from_layers(vec![layer]).unwrap();
    let (x, r) = ([0.4, -0.7], [0.05, 0.12]);
    let logits = |v: [f64; 2]| [v[0] * 1.0 + v[1] * 0.5 + 0.1, v[0] * -2.0 + v[1] * 1.0 - 0.3];
    let softmax = |z: [f64; 2]| {
        let m = z[0].max(z[1]);
        let e = [(z[0] - m).exp(), (z[1] - m).exp()];
        [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
    };
    let p = softmax(logits(x));
    let q = softmax(logits([x[0] + r[0], x[1] + r[1]]));
    let expected = p[0] * (p[0] / q[0]).ln() + p[1] * (p[1] / q[1]).ln();

    let xt = Tensor::from_rows(&[x]).unwrap();
    let base = BaseDistribution::snapshot(&net, &xt).unwrap();
    let got = delta_kl(&net, &xt, &Tensor::from_rows(&[r]).unwrap(), &base).unwrap();
    assert!((got[0] - expected).abs() < 1e-14, "{} vs {expected}", got[0]);
}
