//! Experiment protocols: default hyperparameter grids and the per-run
//! closures that [`grid_search`](crate::train::grid_search) drives.

use crate::baseline::{AdvMode, RegularizerKind};
use crate::data::{make_semisup_split, Dataset, Split, Subset, SyntheticProblem, SyntheticSizes, SyntheticTask};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::optim::OptimizerConfig;
use crate::train::{
    evaluate, train_semisup, train_supervised_with_classes, EvalSets, Phase, RunOutcome, TrainConfig,
};
use crate::vat::VatConfig;

/// Method names accepted by [`synthetic_grid`], in reporting order.
pub const METHODS: [&str; 7] = ["mle", "l2", "dropout", "random", "adv-linf", "adv-l2", "vat"];

/// Builds a regularizer from a method name and its single hyperparameter
/// (λ for l2, keep probability for dropout, ε otherwise; ignored for mle).
pub fn regularizer_for(method: &str, value: f64, adv_mode: AdvMode) -> Result<RegularizerKind> {
    let reg = match method {
        "mle" | "none" => RegularizerKind::None,
        "l2" => RegularizerKind::L2Decay { lambda: value },
        "dropout" => RegularizerKind::Dropout {
            keep_probability: value,
        },
        "random" => RegularizerKind::RandomPerturbation {
            epsilon: value,
            lambda: 1.0,
        },
        "adv-linf" => RegularizerKind::AdversarialLinf {
            epsilon: value,
            lambda: 1.0,
            mode: adv_mode,
        },
        "adv-l2" => RegularizerKind::AdversarialL2 {
            epsilon: value,
            lambda: 1.0,
            mode: adv_mode,
        },
        "vat" => RegularizerKind::Vat(VatConfig::new(value)),
        other => return Err(Error::config(format!("unknown method `{other}`"))),
    };
    reg.validate()?;
    Ok(reg)
}

/// Hyperparameter values searched for each method on the synthetic tasks.
pub fn synthetic_values(method: &str) -> Result<Vec<f64>> {
    Ok(match method {
        "mle" | "none" => vec![0.0],
        "l2" => vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 200.0],
        "dropout" => vec![0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95],
        "random" => vec![0.2, 0.5, 1.0, 2.0, 3.0, 4.0],
        "adv-linf" => vec![0.01, 0.02, 0.05, 0.1, 0.15, 0.2],
        "adv-l2" | "vat" => vec![0.1, 0.2, 0.3, 0.5, 1.0, 2.0],
        other => return Err(Error::config(format!("unknown method `{other}`"))),
    })
}

pub fn synthetic_grid(method: &str, adv_mode: AdvMode) -> Result<Vec<RegularizerKind>> {
    synthetic_values(method)?
        .into_iter()
        .map(|v| regularizer_for(method, v, adv_mode))
        .collect()
}

/// Seed for one repetition; selection and final phases never share data.
pub fn rep_seed(base: u64, phase: Phase, rep: usize) -> u64 {
    let tag = match phase {
        Phase::Selection => 0x5e1e_c700_0000_0000,
        Phase::Final => 0xf1a1_0000_0000_0000,
    };
    Rng::derive_seed(base, tag ^ rep as u64)
}

/// Fresh synthetic data per repetition; scores on the validation and
/// test samples of that repetition.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticRunner {
    pub task: SyntheticTask,
    pub sizes: SyntheticSizes,
    pub base_seed: u64,
    /// Also measure train/test LDS~ with the config's evaluation settings.
    pub measure_lds: bool,
}

impl SyntheticRunner {
    pub fn new(task: SyntheticTask, base_seed: u64) -> Self {
        SyntheticRunner {
            task,
            sizes: SyntheticSizes::default(),
            base_seed,
            measure_lds: false,
        }
    }

    pub fn problem(&self, phase: Phase, rep: usize) -> Result<SyntheticProblem> {
        SyntheticProblem::generate(self.task, rep_seed(self.base_seed, phase, rep), self.sizes)
    }

    pub fn run(&self, cfg: &TrainConfig, phase: Phase, rep: usize) -> Result<RunOutcome> {
        let problem = self.problem(phase, rep)?;
        let train = problem.train_set()?;
        let test = problem.test_set()?;
        let mut cfg = cfg.clone();
        cfg.seed = problem.seed;
        cfg.track_lds = cfg.track_lds && self.measure_lds;
        let sets = EvalSets {
            train: Some(&train),
            test: Some(&test),
        };
        let out = train_supervised_with_classes(&cfg, &train, 2, sets)?;
        let last = out.record.last().copied();
        let validation = match phase {
            Phase::Selection => {
                let v = problem.validation_set()?;
                evaluate(&out.net, &v, None, &mut Rng::new(0))?.error
            }
            Phase::Final => None,
        };
        Ok(RunOutcome {
            validation_error: validation,
            test_error: last.and_then(|p| p.test_err),
            train_lds: last.and_then(|p| p.train_lds),
            test_lds: last.and_then(|p| p.test_lds),
            record: out.record,
        })
    }
}

/// Replaces the ADAM decay period, leaving other optimizers alone.
fn with_period(opt: OptimizerConfig, period: usize) -> OptimizerConfig {
    match opt {
        OptimizerConfig::Adam { mut schedule } => {
            schedule.period = period;
            OptimizerConfig::Adam { schedule }
        }
        other => other,
    }
}

/// Supervised MNIST: selection trains on a random 50k/10k split of the
/// training set for `cfg.updates`; the final run trains on all training
/// data for `final_updates` with the slower decay period.
#[derive(Clone, Debug)]
pub struct MnistSupervisedRunner<'a> {
    pub train: &'a Subset,
    pub test: &'a Subset,
    pub validation_size: usize,
    pub final_updates: usize,
    pub final_period: usize,
    pub base_seed: u64,
}

impl<'a> MnistSupervisedRunner<'a> {
    pub fn new(train: &'a Subset, test: &'a Subset, base_seed: u64) -> Self {
        MnistSupervisedRunner {
            train,
            test,
            validation_size: 10_000,
            final_updates: 60_000,
            final_period: 600,
            base_seed,
        }
    }

    pub fn run(&self, cfg: &TrainConfig, phase: Phase, rep: usize) -> Result<RunOutcome> {
        let seed = rep_seed(self.base_seed, phase, rep);
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        match phase {
            Phase::Selection => {
                let n = self.train.len();
                if self.validation_size >= n {
                    return Err(Error::config("validation split leaves no training data"));
                }
                let mut order: Vec<usize> = (0..n).collect();
                Rng::new(seed).shuffle(&mut order);
                let (fit_idx, val_idx) = order.split_at(n - self.validation_size);
                let fit = self.train.select(fit_idx);
                let val = self.train.select(val_idx);
                let out = train_supervised_with_classes(&cfg, &fit, 10, EvalSets::default())?;
                let v = evaluate(&out.net, &val, None, &mut Rng::new(0))?;
                Ok(RunOutcome {
                    validation_error: v.error,
                    test_error: None,
                    train_lds: None,
                    test_lds: None,
                    record: out.record,
                })
            }
            Phase::Final => {
                cfg.updates = self.final_updates;
                cfg.optimizer = with_period(cfg.optimizer, self.final_period);
                let sets = EvalSets {
                    train: None,
                    test: Some(self.test),
                };
                let out = train_supervised_with_classes(&cfg, self.train, 10, sets)?;
                let last = out.record.last().copied();
                Ok(RunOutcome {
                    validation_error: None,
                    test_error: last.and_then(|p| p.test_err),
                    train_lds: None,
                    test_lds: None,
                    record: out.record,
                })
            }
        }
    }
}

/// Semi-supervised MNIST: a stratified labeled subset, a labeled validation
/// subset, and everything else unlabeled. In the final phase the validation
/// rows join the unlabeled pool with their labels withheld.
#[derive(Clone, Debug)]
pub struct MnistSemisupRunner<'a> {
    pub train: &'a Dataset,
    pub test: &'a Subset,
    pub n_labeled: usize,
    pub n_validation: usize,
    pub base_seed: u64,
}

impl MnistSemisupRunner<'_> {
    pub fn run(&self, cfg: &TrainConfig, phase: Phase, rep: usize) -> Result<RunOutcome> {
        // the labeled subset depends on the repetition, not the phase
        let split_seed = rep_seed(self.base_seed, Phase::Final, rep);
        let split = make_semisup_split(self.train, self.n_labeled, self.n_validation, &mut Rng::new(split_seed))?;
        let labeled = split.view(Split::Labeled);
        let mut pool_idx = split.indices(Split::Labeled);
        pool_idx.extend(split.indices(Split::Unlabeled));
        if phase == Phase::Final {
            pool_idx.extend(split.indices(Split::Validation));
        }
        pool_idx.sort_unstable();
        let pool = split.inputs().select_rows(&pool_idx);
        let mut cfg = cfg.clone();
        cfg.seed = rep_seed(self.base_seed, phase, rep);
        let classes = split.classes();
        match phase {
            Phase::Selection => {
                let out = train_semisup(&cfg, &labeled, &pool, classes, EvalSets::default())?;
                let val = split.view(Split::Validation);
                let v = evaluate(&out.net, &val, None, &mut Rng::new(0))?;
                Ok(RunOutcome {
                    validation_error: v.error,
                    test_error: None,
                    train_lds: None,
                    test_lds: None,
                    record: out.record,
                })
            }
            Phase::Final => {
                let sets = EvalSets {
                    train: None,
                    test: Some(self.test),
                };
                let out = train_semisup(&cfg, &labeled, &pool, classes, sets)?;
                let last = out.record.last().copied();
                Ok(RunOutcome {
                    validation_error: None,
                    test_error: last.and_then(|p| p.test_err),
                    train_lds: None,
                    test_lds: None,
                    record: out.record,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{grid_search, GridProtocol};

    #[test]
    fn grids_cover_every_method() {
        for m in METHODS {
            let g = synthetic_grid(m, AdvMode::Augment).unwrap();
            assert!(!g.is_empty());
            assert!(g.iter().all(|r| r.method() == m));
        }
        assert!(synthetic_grid("svhn", AdvMode::Augment).is_err());
    }

    #[test]
    fn phases_use_disjoint_seeds() {
        let a: Vec<u64> = (0..50).map(|r| rep_seed(7, Phase::Selection, r)).collect();
        let b: Vec<u64> = (0..50).map(|r| rep_seed(7, Phase::Final, r)).collect();
        assert!(a.iter().all(|s| !b.contains(s)));
    }

    #[test]
    fn singleton_synthetic_grid_runs() {
        let runner = SyntheticRunner::new(SyntheticTask::Moons, 1);
        let mut cfg = TrainConfig::synthetic(RegularizerKind::None, 0);
        cfg.updates = 20;
        cfg.eval_every = None;
        let protocol = GridProtocol {
            selection_reps: 1,
            final_reps: 2,
            threads: 1,
        };
        let report = grid_search(&[cfg], &protocol, |c, p, r| runner.run(c, p, r)).unwrap();
        assert_eq!(report.best_index, 0);
        assert_eq!(report.final_runs.len(), 2);
        assert!(report.test_errors().iter().all(|e| (0.0..=1.0).contains(e)));
    }
}
