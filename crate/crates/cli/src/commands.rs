use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::{json, Value};
use vatlab::data::{load_mnist_idx, make_semisup_split, mnist_paths, write_csv, SyntheticSizes};
use vatlab::protocol::{
    regularizer_for, synthetic_values, MnistSemisupRunner, MnistSupervisedRunner, SyntheticRunner, METHODS,
};
use vatlab::train::{
    evaluate, grid_search, train_semisup, train_supervised_with_classes, EvalSets, GridProtocol, Phase,
    RunOutcome, TrainOutcome,
};
use vatlab::vat::vat_step_cost_audit;
use vatlab::{
    AdvMode, Dataset, Error, Mlp, RegularizerKind, Rng, Split, Subset, SyntheticProblem, SyntheticTask,
    TrainConfig, VatConfig,
};

use crate::boundary::{padded_bounds, BoundaryGrid, Plot};
use crate::checkpoint::Checkpoint;
use crate::output::write_atomic;
use crate::settings::Settings;

type Result<T> = std::result::Result<T, Error>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Synthetic(SyntheticTask),
    Mnist,
    MnistSemisup,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(t) = SyntheticTask::parse(s) {
            return Ok(Task::Synthetic(t));
        }
        match s {
            "mnist" => Ok(Task::Mnist),
            "mnist-semisup" => Ok(Task::MnistSemisup),
            "svhn" | "norb" => Err(Error::Config(format!("task `{s}` is not supported"))),
            _ => Err(Error::Config(format!(
                "unknown task `{s}` (expected moons, circles, mnist or mnist-semisup)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Synthetic(t) => t.name(),
            Task::Mnist => "mnist",
            Task::MnistSemisup => "mnist-semisup",
        }
    }
}

fn task(s: &Settings) -> Result<Task> {
    Task::parse(s.require("task")?)
}

fn seeds(s: &Settings) -> Result<(u64, u64)> {
    let seed = s.get_or("seed", 1u64)?;
    Ok((seed, s.get_or("data_seed", seed)?))
}

fn synthetic_problem(task: SyntheticTask, data_seed: u64) -> Result<SyntheticProblem> {
    SyntheticProblem::generate(task, data_seed, SyntheticSizes::default())
}

fn adv_mode(s: &Settings) -> Result<AdvMode> {
    match s.str("adv_mode") {
        None => Ok(AdvMode::Augment),
        Some(m) => AdvMode::parse(m).ok_or_else(|| Error::Config(format!("adv_mode `{m}`: expected augment or replace"))),
    }
}

pub fn regularizer(s: &Settings) -> Result<RegularizerKind> {
    let method = s.str("reg").unwrap_or("none");
    let need = |key: &str| -> Result<f64> {
        s.get(key)?
            .ok_or_else(|| Error::Config(format!("reg = {method} needs `{key}`")))
    };
    let lambda = s.get_or("lambda", 1.0)?;
    let mode = adv_mode(s)?;
    let reg = match method {
        "none" | "mle" => RegularizerKind::None,
        "l2" => RegularizerKind::L2Decay { lambda: need("lambda")? },
        "dropout" => RegularizerKind::Dropout {
            keep_probability: need("keep")?,
        },
        "random" => RegularizerKind::RandomPerturbation {
            epsilon: need("epsilon")?,
            lambda,
        },
        "adv-linf" => RegularizerKind::AdversarialLinf {
            epsilon: need("epsilon")?,
            lambda,
            mode,
        },
        "adv-l2" => RegularizerKind::AdversarialL2 {
            epsilon: need("epsilon")?,
            lambda,
            mode,
        },
        "vat" => RegularizerKind::Vat(
            VatConfig::new(need("epsilon")?)
                .with_xi(s.get_or("xi", 1e-6)?)
                .with_power_iterations(s.get_or("ip", 1)?)
                .with_lambda(lambda),
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown regularizer `{other}` (expected none, {})",
                METHODS[1..].join(", ")
            )))
        }
    };
    reg.validate()?;
    Ok(reg)
}

/// Task preset with `updates`, `eval_every`, `hidden`, `batch` and
/// `reg_batch` applied on top.
pub fn train_config(s: &Settings, task: Task, reg: RegularizerKind, seed: u64) -> Result<TrainConfig> {
    let mut cfg = match task {
        Task::Synthetic(_) => TrainConfig::synthetic(reg, seed),
        Task::Mnist => TrainConfig::mnist_supervised(reg, seed),
        Task::MnistSemisup => TrainConfig::mnist_semisup(reg, seed),
    };
    if let Some(u) = s.get("updates")? {
        cfg.updates = u;
    }
    match s.str("eval_every") {
        Some("none") => cfg.eval_every = None,
        Some(_) => cfg.eval_every = s.get("eval_every")?,
        None => {}
    }
    if let Some(h) = s.list("hidden")? {
        cfg.hidden = h;
    }
    if let Some(b) = s.get("batch")? {
        cfg.batch_size = Some(b);
    }
    if let Some(b) = s.get("reg_batch")? {
        cfg.reg_batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mnist_dir(s: &Settings) -> Result<PathBuf> {
    s.path("mnist_dir")
        .or_else(|| std::env::var_os("VATLAB_MNIST_DIR").map(PathBuf::from))
        .ok_or_else(|| Error::Config("MNIST tasks need `mnist_dir` (or VATLAB_MNIST_DIR)".into()))
}

fn load_mnist(dir: &Path, prefix: &str) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, prefix)?;
    info!("loading {}", images.display());
    load_mnist_idx(&images, &labels)
}

pub fn threads(s: &Settings) -> Result<usize> {
    if let Some(t) = s.get::<usize>("threads")? {
        return Ok(t.max(1));
    }
    if let Ok(v) = std::env::var("VATLAB_THREADS") {
        return v
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| Error::Config(format!("VATLAB_THREADS=`{v}` is not a number")));
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn gen_data(s: &Settings, out: &Path) -> Result<()> {
    let Task::Synthetic(t) = task(s)? else {
        return Err(Error::Usage("gen-data only generates moons or circles".into()));
    };
    let (_, data_seed) = seeds(s)?;
    let p = synthetic_problem(t, data_seed)?;
    let mut latent = String::from("split,u,v,label\n");
    for (name, pts) in [("train", &p.train), ("validation", &p.validation), ("test", &p.test)] {
        let set = p.embed(pts)?;
        let mut buf = Vec::new();
        write_csv(&mut buf, &set.inputs, set.labels()?).map_err(|e| Error::io(out, e))?;
        write_atomic(&out.join(format!("{name}.csv")), &buf)?;
        for (q, y) in pts.points.iter().zip(&pts.labels) {
            let _ = writeln!(latent, "{name},{},{},{y}", q[0], q[1]);
        }
    }
    write_atomic(&out.join("latent.csv"), latent.as_bytes())?;
    info!("wrote {} data for seed {data_seed} to {}", t.name(), out.display());
    Ok(())
}

fn finish_run(
    out: &Path,
    outcome: &TrainOutcome,
    meta: BTreeMap<String, String>,
    summary: Value,
) -> Result<()> {
    let ck = Checkpoint {
        net: outcome.net.clone(),
        meta,
    };
    write_atomic(&out.join("model.ckpt"), ck.to_text().as_bytes())?;
    write_atomic(&out.join("record.csv"), outcome.record.to_csv().as_bytes())?;
    write_atomic(&out.join("summary.json"), json_text(&summary).as_bytes())?;
    Ok(())
}

pub fn train(s: &Settings, out: &Path) -> Result<()> {
    let task = task(s)?;
    let reg = regularizer(s)?;
    let (seed, data_seed) = seeds(s)?;
    let cfg = train_config(s, task, reg, seed)?;
    let mut meta = BTreeMap::new();
    meta.insert("task".to_string(), task.name().to_string());
    meta.insert("seed".to_string(), seed.to_string());
    meta.insert("reg".to_string(), reg.method().to_string());
    if let Some(v) = reg.parameter() {
        meta.insert("param".to_string(), v.to_string());
    }
    info!("training {} with {} for {} updates", task.name(), reg.method(), cfg.updates);
    let outcome = match task {
        Task::Synthetic(t) => {
            meta.insert("data_seed".to_string(), data_seed.to_string());
            let p = synthetic_problem(t, data_seed)?;
            let (tr, te) = (p.train_set()?, p.test_set()?);
            let sets = EvalSets {
                train: Some(&tr),
                test: Some(&te),
            };
            train_supervised_with_classes(&cfg, &tr, 2, sets)?
        }
        Task::Mnist => {
            let dir = mnist_dir(s)?;
            let full = load_mnist(&dir, "train")?;
            let test = load_mnist(&dir, "t10k")?.view(Split::Labeled);
            let labeled = match s.str("labeled").unwrap_or("all") {
                "all" => full.view(Split::Labeled),
                _ => {
                    let n: usize = s.get("labeled")?.unwrap_or(0);
                    meta.insert("labeled".to_string(), n.to_string());
                    make_semisup_split(&full, n, 0, &mut Rng::new(data_seed))?.view(Split::Labeled)
                }
            };
            let sets = EvalSets {
                train: None,
                test: Some(&test),
            };
            train_supervised_with_classes(&cfg, &labeled, 10, sets)?
        }
        Task::MnistSemisup => {
            let dir = mnist_dir(s)?;
            let full = load_mnist(&dir, "train")?;
            let test = load_mnist(&dir, "t10k")?.view(Split::Labeled);
            let n_labeled = s.get_or("n_labeled", 100)?;
            let n_validation = s.get_or("n_validation", 0)?;
            meta.insert("n_labeled".to_string(), n_labeled.to_string());
            meta.insert("data_seed".to_string(), data_seed.to_string());
            let split = make_semisup_split(&full, n_labeled, n_validation, &mut Rng::new(data_seed))?;
            let labeled = split.view(Split::Labeled);
            let mut pool = split.indices(Split::Labeled);
            pool.extend(split.indices(Split::Unlabeled));
            pool.sort_unstable();
            let pool = split.inputs().select_rows(&pool);
            let sets = EvalSets {
                train: None,
                test: Some(&test),
            };
            train_semisup(&cfg, &labeled, &pool, 10, sets)?
        }
    };
    let last = outcome.record.last().copied();
    let summary = json!({
        "task": task.name(),
        "method": reg.method(),
        "parameter": reg.parameter(),
        "seed": seed,
        "data_seed": data_seed,
        "updates": cfg.updates,
        "train_err": opt(last.and_then(|p| p.train_err)),
        "test_err": opt(last.and_then(|p| p.test_err)),
        "train_lds": opt(last.and_then(|p| p.train_lds)),
        "test_lds": opt(last.and_then(|p| p.test_lds)),
        "nll": opt(last.and_then(|p| p.nll)),
    });
    finish_run(out, &outcome, meta, summary.clone())?;
    println!("{}", serde_json::to_string(&summary).expect("json values always serialize"));
    Ok(())
}

fn checkpoint_task(ck: &Checkpoint) -> Result<Task> {
    Task::parse(
        ck.meta("task")
            .ok_or_else(|| Error::Data("checkpoint has no task".into()))?,
    )
}

fn meta_u64(ck: &Checkpoint, key: &str) -> Result<u64> {
    ck.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("checkpoint meta `{key}` missing or malformed")))
}

fn lds_config(s: &Settings, default: f64) -> Result<VatConfig> {
    let cfg = VatConfig::new(s.get_or("lds_epsilon", default)?).with_power_iterations(5);
    cfg.validate()?;
    Ok(cfg)
}

fn eval_json(net: &Mlp, data: &Subset, lds: Option<&VatConfig>, seed: u64) -> Result<Value> {
    let e = evaluate(net, data, lds, &mut Rng::new(seed))?;
    Ok(json!({ "error": opt(e.error), "nll": opt(e.nll), "mean_lds": opt(e.mean_lds), "rows": data.len() }))
}

pub fn eval(s: &Settings, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let task = checkpoint_task(&ck)?;
    let seed = s.get_or("seed", 0u64)?;
    let report = match task {
        Task::Synthetic(t) => {
            let p = synthetic_problem(t, meta_u64(&ck, "data_seed")?)?;
            let lds = lds_config(s, 0.5)?;
            json!({
                "task": task.name(),
                "lds_epsilon": lds.epsilon,
                "train": eval_json(&ck.net, &p.train_set()?, Some(&lds), seed)?,
                "test": eval_json(&ck.net, &p.test_set()?, Some(&lds), seed)?,
            })
        }
        Task::Mnist | Task::MnistSemisup => {
            let test = load_mnist(&mnist_dir(s)?, "t10k")?.view(Split::Labeled);
            let lds = match s.get::<f64>("lds_epsilon")? {
                Some(_) => Some(lds_config(s, 2.0)?),
                None => None,
            };
            json!({
                "task": task.name(),
                "test": eval_json(&ck.net, &test, lds.as_ref(), seed)?,
            })
        }
    };
    let text = json_text(&report);
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

pub fn boundary(s: &Settings, checkpoint: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let Task::Synthetic(t) = checkpoint_task(&ck)? else {
        return Err(Error::Usage(format!(
            "boundary needs a moons or circles checkpoint, {} was trained on {}",
            checkpoint.display(),
            ck.meta("task").unwrap_or("?")
        )));
    };
    let p = synthetic_problem(t, meta_u64(&ck, "data_seed")?)?;
    let resolution = s.get_or("resolution", 200usize)?;
    let (u, v) = padded_bounds(&p.train.points, 0.3);
    let grid = BoundaryGrid::evaluate(&ck.net, &p.embedding, u, v, resolution)?;
    let contours = grid.contours(0.5);
    let lds = lds_config(s, 0.5)?;
    let train = p.train_set()?;
    let mean_lds = evaluate(&ck.net, &train, Some(&lds), &mut Rng::new(s.get_or("seed", 0u64)?))?
        .mean_lds
        .unwrap_or(f64::NAN);
    let title = format!(
        "{} / {}: p(y=1|x) = 0.5, mean LDS~ on training set {mean_lds:.5} (eps={}, I_p=5)",
        t.name(),
        ck.meta("reg").unwrap_or("?"),
        lds.epsilon
    );
    let plot = Plot {
        grid: &grid,
        contours: &contours,
        points: &p.train.points,
        labels: &p.train.labels,
        title,
    };
    write_atomic(&out.join("boundary.csv"), grid.to_csv().as_bytes())?;
    write_atomic(&out.join("boundary.svg"), plot.to_svg().as_bytes())?;
    info!("{} contour polylines, mean LDS~ {mean_lds:.5}", contours.len());
    Ok(())
}

pub struct GridRow {
    pub method: String,
    pub value: Option<f64>,
    pub selection_error: f64,
    pub test_mean: f64,
    pub test_sd: f64,
    pub reps: usize,
}

pub const GRID_HEADER: &str = "task,method,value,selection_error,test_error_mean,test_error_sd,final_reps";

pub fn grid(s: &Settings, out: &Path) -> Result<()> {
    let task = task(s)?;
    let methods: Vec<String> = s
        .list("methods")?
        .unwrap_or_else(|| METHODS.iter().map(|m| m.to_string()).collect());
    let values: Option<Vec<f64>> = s.list("values")?;
    if values.is_some() && methods.len() != 1 {
        return Err(Error::Config("`values` needs exactly one method".into()));
    }
    let mode = adv_mode(s)?;
    let (seed, _) = seeds(s)?;
    let synthetic = matches!(task, Task::Synthetic(_));
    let protocol = GridProtocol {
        selection_reps: s.get_or("selection_reps", if synthetic { 10 } else { 1 })?,
        final_reps: s.get_or("final_reps", if synthetic { 50 } else { 1 })?,
        threads: threads(s)?,
    };

    // MNIST data is loaded once and shared by every cell
    let mnist = match task {
        Task::Synthetic(_) => None,
        _ => {
            let dir = mnist_dir(s)?;
            Some((load_mnist(&dir, "train")?, load_mnist(&dir, "t10k")?.view(Split::Labeled)))
        }
    };
    let mnist_train = mnist.as_ref().map(|(d, _)| d.view(Split::Labeled));

    let mut rows = Vec::new();
    for method in &methods {
        let vals = match &values {
            Some(v) => v.clone(),
            None if synthetic => synthetic_values(method)?,
            None => return Err(Error::Config("MNIST grids need explicit `values`".into())),
        };
        let mut configs = Vec::with_capacity(vals.len());
        for &v in &vals {
            let reg = regularizer_for(method, v, mode)?;
            let mut cfg = train_config(s, task, reg, seed)?;
            cfg.eval_every = None;
            cfg.track_lds = false;
            configs.push(cfg);
        }
        info!("{method}: {} configurations", configs.len());
        let run = |cfg: &TrainConfig, phase: Phase, rep: usize| -> Result<RunOutcome> {
            match (task, &mnist, &mnist_train) {
                (Task::Synthetic(t), _, _) => SyntheticRunner::new(t, seed).run(cfg, phase, rep),
                (Task::Mnist, Some((_, test)), Some(train)) => {
                    MnistSupervisedRunner::new(train, test, seed).run(cfg, phase, rep)
                }
                (Task::MnistSemisup, Some((full, test)), _) => MnistSemisupRunner {
                    train: full,
                    test,
                    n_labeled: s.get_or("n_labeled", 100)?,
                    n_validation: s.get_or("n_validation", 1000)?,
                    base_seed: seed,
                }
                .run(cfg, phase, rep),
                _ => unreachable!("MNIST data is loaded for MNIST tasks"),
            }
        };
        let report = grid_search(&configs, &protocol, run)?;
        let (mean, sd) = report.test_error_stats();
        rows.push(GridRow {
            method: method.clone(),
            value: configs[report.best_index].regularizer.parameter(),
            selection_error: report.selection_scores[report.best_index],
            test_mean: mean,
            test_sd: sd,
            reps: report.final_runs.len(),
        });
    }

    let mut csv = format!("{GRID_HEADER}\n");
    for r in &rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{value},{},{},{},{}",
            task.name(),
            r.method,
            r.selection_error,
            r.test_mean,
            r.test_sd,
            r.reps
        );
    }
    write_atomic(out, csv.as_bytes())?;
    println!("{:<10} {:>8} {:>10} {:>16}", "method", "value", "selection", "test error (%)");
    for r in &rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {value:>8} {:>10.4} {:>9.2} ± {:.2}",
            r.method,
            r.selection_error,
            100.0 * r.test_mean,
            100.0 * r.test_sd
        );
    }
    Ok(())
}

pub fn audit_cost(s: &Settings) -> Result<()> {
    let ip = s.get_or("ip", 1usize)?;
    let batch = s.get_or("batch", 16usize)?;
    let reg_batch = s.get_or("reg_batch", batch)?;
    let hidden = s.list("hidden")?.unwrap_or_else(|| vec![100]);
    let mut rng = Rng::new(s.get_or("seed", 0u64)?);
    let (input, classes) = (100, 2);
    let net = Mlp::new(input, &hidden, classes, &mut rng)?;
    let x = rng.normal_tensor(&[batch, input], 1.0);
    let labels: Vec<usize> = (0..batch).map(|i| i % classes).collect();
    let x_reg = rng.normal_tensor(&[reg_batch, input], 1.0);
    let cfg = VatConfig::new(s.get_or("epsilon", 1.0)?)
        .with_xi(s.get_or("xi", 1e-6)?)
        .with_power_iterations(ip)
        .with_lambda(s.get_or("lambda", 1.0)?);
    let audit = vat_step_cost_audit(&net, &x, &labels, &x_reg, &cfg, &mut rng)?;
    println!("term        forward backward");
    println!("likelihood  {:>7} {:>8}", audit.likelihood.forward, audit.likelihood.backward);
    println!("regularizer {:>7} {:>8}", audit.regularizer.forward, audit.regularizer.backward);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tasks_parse_and_reject_out_of_scope_sets() {
        assert_eq!(Task::parse("moons").unwrap(), Task::Synthetic(SyntheticTask::Moons));
        assert_eq!(Task::parse("mnist-semisup").unwrap(), Task::MnistSemisup);
        assert!(matches!(Task::parse("svhn"), Err(Error::Config(_))));
        assert!(matches!(Task::parse("norb"), Err(Error::Config(_))));
    }

    #[test]
    fn regularizer_settings() {
        let s = Settings::parse("reg = vat\nepsilon = 0.3\nip = 2", "t").unwrap();
        match regularizer(&s).unwrap() {
            RegularizerKind::Vat(c) => assert_eq!((c.epsilon, c.power_iterations, c.xi), (0.3, 2, 1e-6)),
            r => panic!("{r:?}"),
        }
        let s = Settings::parse("reg = l2", "t").unwrap();
        assert!(regularizer(&s).is_err());
        let s = Settings::parse("reg = dropout\nkeep = 1.5", "t").unwrap();
        assert!(regularizer(&s).is_err());
    }

    #[test]
    fn presets_take_overrides() {
        let s = Settings::parse("updates = 7\neval_every = none\nhidden = 3,4", "t").unwrap();
        let cfg = train_config(&s, Task::Mnist, RegularizerKind::None, 1).unwrap();
        assert_eq!((cfg.updates, cfg.eval_every, cfg.hidden), (7, None, vec![3, 4]));
        assert_eq!(cfg.batch_size, Some(100));
    }
}
