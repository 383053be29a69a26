mod common;

use common::random_net;
use vatlab::baseline::{adv_perturbation, random_perturbation};
use vatlab::data::SyntheticSizes;
use vatlab::divergence::delta_kl;
use vatlab::nn::nll_loss;
use vatlab::numerics::sample_unit_rows;
use vatlab::train::{predict, train_semisup, train_supervised, EvalSets};
use vatlab::vat::gen_vap;
use vatlab::{
    AdvNorm, BaseDistribution, RegularizerKind, Rng, SyntheticProblem, SyntheticTask, Tensor, TrainConfig,
    VatConfig,
};

#[test]
fn l2_adversary_beats_random_directions_to_first_order() {
    let mut rng = Rng::new(61);
    let eps = 1e-3;
    for _ in 0..40 {
        let input = 2 + rng.index(6);
        let classes = 2 + rng.index(3);
        let net = random_net(&mut rng, input, classes);
        let x = rng.normal_tensor(&[1, input], 1.0);
        let y = vec![rng.index(classes)];
        let loss = |r: &Tensor| nll_loss(&net.logits(&x.add(r).unwrap()).unwrap(), &y).unwrap().0;
        let clean = loss(&Tensor::zeros(&[1, input]));
        let r_adv = adv_perturbation(&net, &x, &y, eps, AdvNorm::L2).unwrap();
        let gain = loss(&r_adv) - clean;
        assert!(gain >= -1e-12, "adversarial loss below clean loss by {gain}");
        for _ in 0..50 {
            let r = sample_unit_rows(&mut rng, 1, input).unwrap().scale(eps);
            assert!(gain >= loss(&r) - clean - 1e-6);
        }
    }
}

#[test]
fn random_perturbation_rows_have_length_epsilon() {
    let mut rng = Rng::new(62);
    let x = Tensor::zeros(&[30, 7]);
    let r = random_perturbation(&x, 0.37, &mut rng).unwrap();
    for row in r.row_iter() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 0.37).abs() < 1e-12);
    }
}

#[test]
fn linf_adversary_saturates_every_coordinate() {
    let mut rng = Rng::new(63);
    let net = random_net(&mut rng, 5, 3);
    let x = rng.normal_tensor(&[4, 5], 1.0);
    let r = adv_perturbation(&net, &x, &[0, 1, 2, 0], 0.05, AdvNorm::Linf).unwrap();
    for v in r.data() {
        assert!(*v == 0.05 || *v == -0.05 || *v == 0.0);
    }
}

fn moons(seed: u64) -> SyntheticProblem {
    SyntheticProblem::generate(SyntheticTask::Moons, seed, SyntheticSizes::default()).unwrap()
}

#[test]
fn trained_model_is_more_sensitive_to_virtual_adversarial_directions() {
    let p = moons(64);
    let train = p.train_set().unwrap();
    let test = p.test_set().unwrap();
    let cfg = TrainConfig::synthetic(RegularizerKind::Vat(VatConfig::new(0.5)), 64);
    let net = train_supervised(&cfg, &train, EvalSets { train: None, test: None }).unwrap().net;
    let mut rng = Rng::new(65);
    let x = &test.inputs;
    let base = BaseDistribution::snapshot(&net, x).unwrap();
    let vap = gen_vap(&net, x, &VatConfig::new(0.5), &mut rng).unwrap();
    let rand = random_perturbation(x, 0.5, &mut rng).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let adv = mean(delta_kl(&net, x, &vap, &base).unwrap());
    let rnd = mean(delta_kl(&net, x, &rand, &base).unwrap());
    assert!(rnd < adv, "random {rnd} vs virtual adversarial {adv}");
}

const EPSILONS: [f64; 4] = [0.1, 0.2, 0.3, 0.5];

fn error_rate(net: &vatlab::Mlp, data: &vatlab::data::Subset) -> f64 {
    let pred = predict(net, &data.inputs).unwrap();
    let labels = data.labels().unwrap();
    pred.iter().zip(labels).filter(|(p, y)| p != y).count() as f64 / labels.len() as f64
}

#[test]
#[ignore = "does not hold: with ε picked on held-out labels, semi 5.33% vs supervised 5.06% over seeds 900..910"]
fn unlabeled_points_help_vat_on_moons() {
    // Paired runs on the same 16 labels. Each arm picks its own ε on a
    // labeled selection set disjoint from the 1000 unlabeled points.
    let sizes = SyntheticSizes {
        validation_per_class: 1000,
        ..SyntheticSizes::default()
    };
    let seeds = 10;
    let (mut sup, mut semi) = (0.0, 0.0);
    for s in 0..seeds {
        let p = SyntheticProblem::generate(SyntheticTask::Moons, 900 + s, sizes).unwrap();
        let train = p.train_set().unwrap();
        let held = p.validation_set().unwrap();
        let even: Vec<usize> = (0..held.len()).step_by(2).collect();
        let odd: Vec<usize> = (1..held.len()).step_by(2).collect();
        let unlabeled = held.select(&even).inputs;
        let selection = held.select(&odd);
        let pool = train.inputs.concat_rows(&unlabeled).unwrap();
        assert_eq!(pool.rows(), 16 + 1000);
        let test = p.test_set().unwrap();
        let sets = EvalSets { train: None, test: None };

        let best = |run: &dyn Fn(&TrainConfig) -> vatlab::Mlp| {
            EPSILONS
                .iter()
                .map(|&eps| {
                    let mut cfg = TrainConfig::synthetic(RegularizerKind::Vat(VatConfig::new(eps)), s);
                    cfg.eval_every = None;
                    let net = run(&cfg);
                    (error_rate(&net, &selection), error_rate(&net, &test))
                })
                .fold((f64::INFINITY, 0.0), |b, c| if c.0 < b.0 { c } else { b })
                .1
        };
        sup += best(&|cfg| train_supervised(cfg, &train, sets).unwrap().net);
        semi += best(&|cfg| train_semisup(cfg, &train, &pool, 2, sets).unwrap().net);
    }
    let (sup, semi) = (sup / seeds as f64, semi / seeds as f64);
    assert!(semi < sup, "semi-supervised {semi} vs supervised {sup}");
}
