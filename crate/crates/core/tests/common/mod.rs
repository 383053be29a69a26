#![allow(dead_code)]

use vatlab::{Mlp, Rng, Tensor};

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` at every coordinate of `v`.
pub fn central_diff(v: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut w = v.to_vec();
    (0..v.len())
        .map(|i| {
            w[i] = v[i] + h;
            let up = f(&w);
            w[i] = v[i] - h;
            let down = f(&w);
            w[i] = v[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Random net with 1–2 hidden layers of at most 16 units.
pub fn random_net(rng: &mut Rng, input_dim: usize, classes: usize) -> Mlp {
    let depth = 1 + rng.index(2);
    let hidden: Vec<usize> = (0..depth).map(|_| 2 + rng.index(15)).collect();
    Mlp::new(input_dim, &hidden, classes, rng).unwrap()
}

/// Distance from `x` (one row) to the nearest ReLU kink in any layer,
/// measured as the smallest |pre-activation| over the L1 row reach of the
/// layer's weights. Linear pieces are exact when this exceeds the probe size.
pub fn kink_margin(net: &Mlp, x: &Tensor) -> f64 {
    let mut h = x.row(0).to_vec();
    let mut reach = 1.0;
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
        let w = layer.weights();
        let mut next = vec![0.0; n_out];
        let mut col_reach = 0.0f64;
        for j in 0..n_out {
            let mut pre = layer.biases().data()[j];
            let mut c = 0.0;
            for i in 0..n_in {
                pre += h[i] * w.get(i, j);
                c += w.get(i, j).abs();
            }
            col_reach = col_reach.max(c);
            if layer.activation() == vatlab::Activation::Relu {
                margin = margin.min(pre.abs() / (reach * c).max(1e-300));
                next[j] = pre.max(0.0);
            } else {
                next[j] = pre;
            }
        }
        reach *= col_reach.max(1e-300);
        h = next;
    }
    margin
}

/// Fresh input row whose kink margin exceeds `min_margin`.
pub fn smooth_point(net: &Mlp, rng: &mut Rng, min_margin: f64) -> Tensor {
    loop {
        let x = rng.normal_tensor(&[1, net.input_dim()], 1.0);
        if kink_margin(net, &x) > min_margin {
            return x;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Smallest |pre-activation| of any ReLU unit over all rows of `x`.
pub fn min_relu_preactivation(net: &Mlp, x: &Tensor) -> f64 {
    let mut h = x.clone();
    let mut smallest = f64::INFINITY;
    for layer in net.layers() {
        let mut pre = h.matmul(layer.weights()).unwrap();
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(layer.biases().data()) {
                *v += b;
            }
        }
        if layer.activation() == vatlab::Activation::Relu {
            smallest = pre.data().iter().fold(smallest, |m, v| m.min(v.abs()));
            pre = pre.map(|v| v.max(0.0));
        }
        h = pre;
    }
    smallest
}
