//! Training loops for the regularized likelihood objective
//! `mean NLL + λ · mean penalty`, supervised and semi-supervised, with
//! periodic evaluation and a hyperparameter grid search.

use std::fmt::Write as _;
use std::sync::Mutex;

use crate::baseline::{adv_loss_term, adv_perturbation, l2_penalty, random_perturbation, AdvMode, AdvNorm, RegularizerKind};
use crate::divergence::BaseDistribution;
use crate::error::{Error, Result};
use crate::nn::{apply_dropout, nll_loss, Mlp, ParamGrads};
use crate::numerics::{Rng, Tensor};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::vat::{gen_vap_from_base, vat_backward, virtual_adversarial, VatConfig};
use crate::data::Subset;

/// Evaluation rows are processed in chunks of this many.
const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub regularizer: RegularizerKind,
    pub optimizer: OptimizerConfig,
    /// Likelihood minibatch size; `None` uses the whole labeled set.
    pub batch_size: Option<usize>,
    /// Regularizer minibatch size in semi-supervised mode.
    pub reg_batch_size: usize,
    pub updates: usize,
    /// Evaluation cadence in updates; `None` evaluates only at the end.
    pub eval_every: Option<usize>,
    /// Perturbation settings used to measure LDS~ during evaluation.
    pub eval_vat: VatConfig,
    /// Whether evaluations also estimate the mean LDS~.
    pub track_lds: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// One hidden layer of 100 units, full batch, momentum SGD, 1000 updates.
    pub fn synthetic(regularizer: RegularizerKind, seed: u64) -> Self {
        TrainConfig {
            hidden: vec![100],
            regularizer,
            optimizer: OptimizerConfig::synthetic_default(),
            batch_size: None,
            reg_batch_size: 16,
            updates: 1000,
            eval_every: Some(50),
            eval_vat: VatConfig::new(0.5).with_power_iterations(5),
            track_lds: true,
            seed,
        }
    }

    /// (1200, 600) network, ADAM, minibatch 100, 50k updates.
    pub fn mnist_supervised(regularizer: RegularizerKind, seed: u64) -> Self {
        TrainConfig {
            hidden: vec![1200, 600],
            regularizer,
            optimizer: OptimizerConfig::adam_default(500),
            batch_size: Some(100),
            reg_batch_size: 100,
            updates: 50_000,
            eval_every: Some(500),
            eval_vat: VatConfig::new(2.0),
            track_lds: false,
            seed,
        }
    }

    /// (1200, 1200) network, labeled batch 100, regularizer batch 250.
    pub fn mnist_semisup(regularizer: RegularizerKind, seed: u64) -> Self {
        TrainConfig {
            hidden: vec![1200, 1200],
            reg_batch_size: 250,
            ..Self::mnist_supervised(regularizer, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.updates == 0 {
            return Err(Error::config("updates must be >= 1"));
        }
        if self.batch_size == Some(0) || self.reg_batch_size == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        if self.eval_every == Some(0) {
            return Err(Error::config("eval_every must be >= 1"));
        }
        self.regularizer.validate()?;
        self.eval_vat.validate()?;
        self.optimizer.build().map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    /// Mean negative log-likelihood on the labeled batch.
    pub nll: f64,
    /// Unweighted regularizer value (mean Δ_KL for VAT and random
    /// perturbation, adversarial NLL, or the weight-decay penalty).
    pub reg: f64,
}

/// Likelihood and regularizer gradients of one step, kept apart.
#[derive(Clone, Debug)]
pub struct StepGradients {
    pub likelihood: ParamGrads,
    pub regularizer: ParamGrads,
    pub lambda: f64,
    pub losses: StepLosses,
}

impl StepGradients {
    /// `∇ NLL + λ · ∇ penalty`.
    pub fn total(&self) -> Result<ParamGrads> {
        let mut t = self.likelihood.clone();
        t.add_scaled(self.lambda, &self.regularizer)?;
        Ok(t)
    }
}

fn nll_gradients(net: &Mlp, x: &Tensor, labels: &[usize]) -> Result<(f64, ParamGrads)> {
    let (logits, cache) = net.forward(x)?;
    let (loss, d_logits) = nll_loss(&logits, labels)?;
    Ok((loss, net.backward(&cache, &d_logits)?.d_theta))
}

/// Mean `KL[p(y|x, θ̂) ‖ p(y|x + r, θ)]` with `r` an `ε`-sized random direction.
fn random_smoothing(net: &Mlp, x: &Tensor, epsilon: f64, rng: &mut Rng) -> Result<(f64, ParamGrads)> {
    let base = BaseDistribution::snapshot(net, x)?;
    let r = random_perturbation(x, epsilon, rng)?;
    let (v, g) = vat_backward(net, x, &r, &base)?;
    Ok((v, g.d_theta))
}

fn vat_smoothing(net: &Mlp, x: &Tensor, cfg: &VatConfig, rng: &mut Rng) -> Result<(f64, ParamGrads)> {
    let base = BaseDistribution::snapshot(net, x)?;
    let r = gen_vap_from_base(net, x, &base, cfg, rng)?;
    let (v, g) = vat_backward(net, x, &r, &base)?;
    Ok((v, g.d_theta))
}

/// Gradients for one step. `x_reg` is the regularizer batch; `None` means
/// the labeled batch itself (supervised training).
pub fn step_gradients(
    net: &Mlp,
    x: &Tensor,
    labels: &[usize],
    x_reg: Option<&Tensor>,
    regularizer: &RegularizerKind,
    rng: &mut Rng,
) -> Result<StepGradients> {
    let zeros = || ParamGrads::zeros_like(net);
    let x_reg = x_reg.unwrap_or(x);
    if x_reg.cols() != x.cols() {
        return Err(Error::dim("labeled and regularizer batches differ in width"));
    }
    let adversarial = |epsilon: f64, lambda: f64, mode: AdvMode, norm: AdvNorm, rng: &mut Rng| {
        let _ = rng;
        let r = adv_perturbation(net, x, labels, epsilon, norm)?;
        let (adv, g) = adv_loss_term(net, x, labels, &r)?;
        match mode {
            AdvMode::Augment => {
                let (nll, lg) = nll_gradients(net, x, labels)?;
                Ok(StepGradients {
                    likelihood: lg,
                    regularizer: g.d_theta,
                    lambda,
                    losses: StepLosses { nll, reg: adv },
                })
            }
            AdvMode::Replace => Ok(StepGradients {
                likelihood: g.d_theta,
                regularizer: zeros(),
                lambda: 0.0,
                losses: StepLosses { nll: adv, reg: adv },
            }),
        }
    };
    match *regularizer {
        RegularizerKind::None => {
            let (nll, g) = nll_gradients(net, x, labels)?;
            Ok(StepGradients {
                likelihood: g,
                regularizer: zeros(),
                lambda: 0.0,
                losses: StepLosses { nll, reg: 0.0 },
            })
        }
        RegularizerKind::L2Decay { lambda } => {
            let (nll, g) = nll_gradients(net, x, labels)?;
            let (reg, rg) = l2_penalty(net, lambda);
            Ok(StepGradients {
                likelihood: g,
                regularizer: rg,
                lambda: 1.0,
                losses: StepLosses { nll, reg },
            })
        }
        RegularizerKind::Dropout { keep_probability } => {
            let dropped = apply_dropout(x, keep_probability, rng)?;
            let (nll, g) = nll_gradients(net, &dropped, labels)?;
            Ok(StepGradients {
                likelihood: g,
                regularizer: zeros(),
                lambda: 0.0,
                losses: StepLosses { nll, reg: 0.0 },
            })
        }
        RegularizerKind::RandomPerturbation { epsilon, lambda } => {
            let (nll, g) = nll_gradients(net, x, labels)?;
            let (reg, rg) = if lambda > 0.0 {
                random_smoothing(net, x_reg, epsilon, rng)?
            } else {
                (0.0, zeros())
            };
            Ok(StepGradients {
                likelihood: g,
                regularizer: rg,
                lambda,
                losses: StepLosses { nll, reg },
            })
        }
        RegularizerKind::AdversarialLinf { epsilon, lambda, mode } => {
            adversarial(epsilon, lambda, mode, AdvNorm::Linf, rng)
        }
        RegularizerKind::AdversarialL2 { epsilon, lambda, mode } => {
            adversarial(epsilon, lambda, mode, AdvNorm::L2, rng)
        }
        RegularizerKind::Vat(cfg) => {
            let (nll, g) = nll_gradients(net, x, labels)?;
            let (reg, rg) = if cfg.lambda > 0.0 {
                vat_smoothing(net, x_reg, &cfg, rng)?
            } else {
                (0.0, zeros())
            };
            Ok(StepGradients {
                likelihood: g,
                regularizer: rg,
                lambda: cfg.lambda,
                losses: StepLosses { nll, reg },
            })
        }
    }
}

/// One optimizer update on a fully labeled batch.
pub fn supervised_step(
    net: &mut Mlp,
    batch: &Subset,
    regularizer: &RegularizerKind,
    optimizer: &mut dyn Optimizer,
    rng: &mut Rng,
) -> Result<StepLosses> {
    let grads = step_gradients(net, &batch.inputs, batch.labels()?, None, regularizer, rng)?;
    optimizer.descend(net, &grads.total()?)?;
    Ok(grads.losses)
}

/// One optimizer update with separate likelihood and regularizer batches.
/// Only label-free regularizers may act on `reg_batch`.
pub fn semisup_step(
    net: &mut Mlp,
    labeled: &Subset,
    reg_batch: &Tensor,
    regularizer: &RegularizerKind,
    optimizer: &mut dyn Optimizer,
    rng: &mut Rng,
) -> Result<StepLosses> {
    if regularizer.needs_labels() {
        return Err(Error::config(format!(
            "{} needs labels and cannot regularize unlabeled data",
            regularizer.method()
        )));
    }
    let grads = step_gradients(
        net,
        &labeled.inputs,
        labeled.labels()?,
        Some(reg_batch),
        regularizer,
        rng,
    )?;
    optimizer.descend(net, &grads.total()?)?;
    Ok(grads.losses)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Evaluation {
    /// Fraction of argmax misclassifications, when labels are known.
    pub error: Option<f64>,
    /// Mean LDS~ over the rows, when requested.
    pub mean_lds: Option<f64>,
    /// Mean NLL, when labels are known.
    pub nll: Option<f64>,
}

pub fn predict(net: &Mlp, x: &Tensor) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.rows());
    for start in (0..x.rows()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(x.rows())).collect();
        let logits = net.logits(&x.select_rows(&idx))?;
        out.extend(logits.row_iter().map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        }));
    }
    Ok(out)
}

/// Error rate, mean NLL and (optionally) mean LDS~ under `lds_cfg`.
pub fn evaluate(net: &Mlp, data: &Subset, lds_cfg: Option<&VatConfig>, rng: &mut Rng) -> Result<Evaluation> {
    let n = data.len();
    if n == 0 {
        return Ok(Evaluation::default());
    }
    let mut wrong = 0usize;
    let mut nll_sum = 0.0;
    let mut lds_sum = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let chunk = data.select(&idx);
        if let Some(labels) = &chunk.labels {
            let logits = net.logits(&chunk.inputs)?;
            let (nll, _) = nll_loss(&logits, labels)?;
            nll_sum += nll * idx.len() as f64;
            for (row, &y) in logits.row_iter().zip(labels) {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                    .0;
                wrong += usize::from(best != y);
            }
        }
        if let Some(cfg) = lds_cfg {
            let res = virtual_adversarial(net, &chunk.inputs, cfg, rng)?;
            lds_sum += res.lds_estimate.iter().sum::<f64>();
        }
    }
    let labeled = data.labels.is_some();
    Ok(Evaluation {
        error: labeled.then(|| wrong as f64 / n as f64),
        nll: labeled.then(|| nll_sum / n as f64),
        mean_lds: lds_cfg.map(|_| lds_sum / n as f64),
    })
}

/// Metrics at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub update: usize,
    pub train_err: Option<f64>,
    pub test_err: Option<f64>,
    pub train_lds: Option<f64>,
    pub test_lds: Option<f64>,
    /// Mean NLL over the full training set.
    pub nll: Option<f64>,
    /// Regularizer value of the most recent step.
    pub reg: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainRecord {
    pub points: Vec<EvalPoint>,
}

impl TrainRecord {
    pub const CSV_HEADER: &'static str = "update,train_err,test_err,train_lds,test_lds,nll,reg";

    pub fn last(&self) -> Option<&EvalPoint> {
        self.points.last()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.update,
                opt(p.train_err),
                opt(p.test_err),
                opt(p.train_lds),
                opt(p.test_lds),
                opt(p.nll),
                p.reg
            );
        }
        s
    }
}

/// Cycles through shuffled permutations of `0..n`.
#[derive(Clone, Debug)]
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    fn new(n: usize) -> Self {
        EpochSampler {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize, rng: &mut Rng) -> Vec<usize> {
        let n = self.order.len();
        if size >= n {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == n {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            let take = (size - out.len()).min(n - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Data a run is evaluated on while it trains.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalSets<'a> {
    pub train: Option<&'a Subset>,
    pub test: Option<&'a Subset>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub record: TrainRecord,
}

struct RunState {
    net: Mlp,
    optimizer: Box<dyn Optimizer>,
    rng: Rng,
    eval_rng: Rng,
    record: TrainRecord,
}

impl RunState {
    fn new(cfg: &TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = Rng::new(Rng::derive_seed(cfg.seed, 0));
        Ok(RunState {
            net: Mlp::new(input_dim, &cfg.hidden, classes, &mut init_rng)?,
            optimizer: cfg.optimizer.build()?,
            rng: Rng::new(Rng::derive_seed(cfg.seed, 1)),
            eval_rng: Rng::new(Rng::derive_seed(cfg.seed, 2)),
            record: TrainRecord::default(),
        })
    }

    fn should_eval(cfg: &TrainConfig, update: usize) -> bool {
        update == cfg.updates || cfg.eval_every.is_some_and(|k| update.is_multiple_of(k))
    }

    fn eval(&mut self, cfg: &TrainConfig, update: usize, sets: EvalSets<'_>, reg: f64) -> Result<()> {
        let lds = cfg.track_lds.then_some(&cfg.eval_vat);
        let tr = sets
            .train
            .map(|s| evaluate(&self.net, s, lds, &mut self.eval_rng))
            .transpose()?
            .unwrap_or_default();
        let te = sets
            .test
            .map(|s| evaluate(&self.net, s, lds, &mut self.eval_rng))
            .transpose()?
            .unwrap_or_default();
        self.record.points.push(EvalPoint {
            update,
            train_err: tr.error,
            test_err: te.error,
            train_lds: tr.mean_lds,
            test_lds: te.mean_lds,
            nll: tr.nll,
            reg,
        });
        Ok(())
    }
}

/// Trains a fresh network on a fully labeled set.
pub fn train_supervised(cfg: &TrainConfig, train: &Subset, sets: EvalSets<'_>) -> Result<TrainOutcome> {
    let labels = train.labels()?;
    let classes = labels.iter().max().map_or(2, |m| m + 1).max(2);
    train_supervised_with_classes(cfg, train, classes, sets)
}

pub fn train_supervised_with_classes(
    cfg: &TrainConfig,
    train: &Subset,
    classes: usize,
    sets: EvalSets<'_>,
) -> Result<TrainOutcome> {
    let mut st = RunState::new(cfg, train.inputs.cols(), classes)?;
    let mut sampler = EpochSampler::new(train.len());
    let batch_size = cfg.batch_size.unwrap_or(train.len());
    st.eval(cfg, 0, sets, 0.0)?;
    for update in 1..=cfg.updates {
        let losses = if batch_size >= train.len() {
            supervised_step(&mut st.net, train, &cfg.regularizer, st.optimizer.as_mut(), &mut st.rng)?
        } else {
            let idx = sampler.next_batch(batch_size, &mut st.rng);
            let batch = train.select(&idx);
            supervised_step(&mut st.net, &batch, &cfg.regularizer, st.optimizer.as_mut(), &mut st.rng)?
        };
        if RunState::should_eval(cfg, update) {
            st.eval(cfg, update, sets, losses.reg)?;
        }
    }
    Ok(TrainOutcome {
        net: st.net,
        record: st.record,
    })
}

/// Trains with a labeled likelihood batch and a regularizer batch drawn
/// uniformly from `reg_pool` (labeled and unlabeled inputs together).
pub fn train_semisup(
    cfg: &TrainConfig,
    labeled: &Subset,
    reg_pool: &Tensor,
    classes: usize,
    sets: EvalSets<'_>,
) -> Result<TrainOutcome> {
    if cfg.regularizer.needs_labels() {
        return Err(Error::config(format!(
            "{} is not applicable to unlabeled data",
            cfg.regularizer.method()
        )));
    }
    let mut st = RunState::new(cfg, labeled.inputs.cols(), classes)?;
    let mut lab_sampler = EpochSampler::new(labeled.len());
    let mut reg_sampler = EpochSampler::new(reg_pool.rows());
    let batch_size = cfg.batch_size.unwrap_or(labeled.len());
    st.eval(cfg, 0, sets, 0.0)?;
    for update in 1..=cfg.updates {
        let lab_idx = lab_sampler.next_batch(batch_size, &mut st.rng);
        let reg_idx = reg_sampler.next_batch(cfg.reg_batch_size, &mut st.rng);
        let batch = labeled.select(&lab_idx);
        let reg_batch = reg_pool.select_rows(&reg_idx);
        let losses = semisup_step(
            &mut st.net,
            &batch,
            &reg_batch,
            &cfg.regularizer,
            st.optimizer.as_mut(),
            &mut st.rng,
        )?;
        if RunState::should_eval(cfg, update) {
            st.eval(cfg, update, sets, losses.reg)?;
        }
    }
    Ok(TrainOutcome {
        net: st.net,
        record: st.record,
    })
}

/// Which stage of a grid search a run belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Scored on validation data to pick a configuration.
    Selection,
    /// The chosen configuration, scored on test data.
    Final,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub validation_error: Option<f64>,
    pub test_error: Option<f64>,
    pub train_lds: Option<f64>,
    pub test_lds: Option<f64>,
    pub record: TrainRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridProtocol {
    pub selection_reps: usize,
    pub final_reps: usize,
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct GridReport {
    pub best_index: usize,
    /// Mean validation error per configuration.
    pub selection_scores: Vec<f64>,
    pub final_runs: Vec<RunOutcome>,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl GridReport {
    pub fn test_errors(&self) -> Vec<f64> {
        self.final_runs.iter().filter_map(|r| r.test_error).collect()
    }

    /// Mean and sample standard deviation of the final test errors.
    pub fn test_error_stats(&self) -> (f64, f64) {
        mean_sd(&self.test_errors())
    }
}

/// Runs `jobs` on up to `threads` workers; results keep job order.
pub fn run_parallel<T, J, F>(jobs: &[J], threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    J: Sync,
    F: Fn(&J) -> Result<T> + Sync,
{
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job runs"))
        .collect()
}

/// Picks the configuration with the lowest mean validation error over
/// `selection_reps` runs, then reruns it `final_reps` times. `run` receives
/// the configuration, the phase and the repetition index; it owns data
/// generation, so fresh samples per repetition are its responsibility.
pub fn grid_search<F>(configs: &[TrainConfig], protocol: &GridProtocol, run: F) -> Result<GridReport>
where
    F: Fn(&TrainConfig, Phase, usize) -> Result<RunOutcome> + Sync,
{
    if configs.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    if protocol.final_reps == 0 {
        return Err(Error::config("final_reps must be >= 1"));
    }
    let best_index = if configs.len() == 1 || protocol.selection_reps == 0 {
        0
    } else {
        let jobs: Vec<(usize, usize)> = (0..configs.len())
            .flat_map(|c| (0..protocol.selection_reps).map(move |r| (c, r)))
            .collect();
        // a diverged selection run scores as infinitely bad instead of
        // aborting the search
        let outcomes = run_parallel(&jobs, protocol.threads, |&(c, r)| {
            match run(&configs[c], Phase::Selection, r) {
                Ok(o) => o
                    .validation_error
                    .ok_or_else(|| Error::config("selection run reported no validation error")),
                Err(Error::Numeric(msg)) => {
                    log::warn!("config {c} rep {r} diverged: {msg}");
                    Ok(f64::INFINITY)
                }
                Err(e) => Err(e),
            }
        })?;
        let mut scores = vec![0.0; configs.len()];
        for (&(c, _), e) in jobs.iter().zip(&outcomes) {
            scores[c] += e / protocol.selection_reps as f64;
        }
        let best = (0..configs.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        return finish(configs, protocol, &run, best, scores);
    };
    finish(configs, protocol, &run, best_index, vec![f64::NAN; configs.len()])
}

fn finish<F>(
    configs: &[TrainConfig],
    protocol: &GridProtocol,
    run: &F,
    best: usize,
    scores: Vec<f64>,
) -> Result<GridReport>
where
    F: Fn(&TrainConfig, Phase, usize) -> Result<RunOutcome> + Sync,
{
    let reps: Vec<usize> = (0..protocol.final_reps).collect();
    let final_runs = run_parallel(&reps, protocol.threads, |&r| run(&configs[best], Phase::Final, r))?;
    Ok(GridReport {
        best_index: best,
        selection_scores: scores,
        final_runs,
    })
}
