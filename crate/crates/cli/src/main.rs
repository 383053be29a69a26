//! `vatlab`: generate synthetic data, train and evaluate regularized MLPs,
//! run hyperparameter grids and plot decision boundaries.
//!
//! Every command takes an optional `--config FILE` of `key = value` lines;
//! flags override the file. Exit codes: 0 success, 2 configuration or
//! usage error, 3 numeric failure, 4 data or format error.

mod boundary;
mod checkpoint;
mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vatlab::Error;

use settings::Settings;

#[derive(Parser)]
#[command(name = "vatlab", version, about = "Virtual adversarial training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (embedded CSVs plus the 2-D latent points).
    GenData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes model.ckpt, record.csv and summary.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        reg: RegArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Error, NLL and mean LDS~ of a checkpoint on its task's data.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mnist_dir: Option<String>,
        /// Perturbation size for the LDS~ estimate.
        #[arg(long)]
        lds_epsilon: Option<String>,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lattice of p(y=1|x) over the latent plane, its 0.5 contour and an SVG.
    Boundary {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lattice points per axis.
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        lds_epsilon: Option<String>,
        /// Output directory for boundary.csv and boundary.svg.
        #[arg(long)]
        out: PathBuf,
    },
    /// Hyperparameter grid search per method; writes a CSV summary.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Comma-separated methods (default: all).
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated values replacing the default grid of a single method.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        adv_mode: Option<String>,
        #[arg(long)]
        selection_reps: Option<String>,
        #[arg(long)]
        final_reps: Option<String>,
        /// Worker threads (default: VATLAB_THREADS, then all cores).
        #[arg(long)]
        threads: Option<String>,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Count forward/backward propagations of one VAT gradient evaluation.
    AuditCost {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ip: Option<String>,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        reg_batch: Option<String>,
        #[arg(long)]
        hidden: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct DataArgs {
    /// moons, circles, mnist or mnist-semisup.
    #[arg(long)]
    task: Option<String>,
    /// Seed of the synthetic sample or the labeled subset (default: --seed).
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    mnist_dir: Option<String>,
    /// Labeled training rows for supervised MNIST: `all` or a count.
    #[arg(long)]
    labeled: Option<String>,
    #[arg(long)]
    n_labeled: Option<String>,
    #[arg(long)]
    n_validation: Option<String>,
}

#[derive(Args)]
struct RegArgs {
    /// none, l2, dropout, random, adv-linf, adv-l2 or vat.
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    /// Power iterations.
    #[arg(long)]
    ip: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Dropout keep probability.
    #[arg(long)]
    keep: Option<String>,
    /// augment or replace.
    #[arg(long)]
    adv_mode: Option<String>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    updates: Option<String>,
    /// Evaluation cadence in updates, or `none`.
    #[arg(long)]
    eval_every: Option<String>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    reg_batch: Option<String>,
}

type Flags = Vec<(&'static str, Option<String>)>;

impl DataArgs {
    fn flags(self) -> Flags {
        vec![
            ("task", self.task),
            ("data_seed", self.data_seed),
            ("mnist_dir", self.mnist_dir),
            ("labeled", self.labeled),
            ("n_labeled", self.n_labeled),
            ("n_validation", self.n_validation),
        ]
    }
}

impl RegArgs {
    fn flags(self) -> Flags {
        vec![
            ("reg", self.reg),
            ("epsilon", self.epsilon),
            ("xi", self.xi),
            ("ip", self.ip),
            ("lambda", self.lambda),
            ("keep", self.keep),
            ("adv_mode", self.adv_mode),
        ]
    }
}

impl ScheduleArgs {
    fn flags(self) -> Flags {
        vec![
            ("updates", self.updates),
            ("eval_every", self.eval_every),
            ("hidden", self.hidden),
            ("batch", self.batch),
            ("reg_batch", self.reg_batch),
        ]
    }
}

fn settings(common: Common, flags: Flags) -> Result<Settings, Error> {
    let mut s = match &common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    s.override_with(&[("seed", common.seed)])?;
    s.override_with(&flags)?;
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { common, data, out } => commands::gen_data(&settings(common, data.flags())?, &out),
        Command::Train {
            common,
            data,
            reg,
            schedule,
            out,
        } => {
            let mut flags = data.flags();
            flags.extend(reg.flags());
            flags.extend(schedule.flags());
            commands::train(&settings(common, flags)?, &out)
        }
        Command::Eval {
            common,
            checkpoint,
            mnist_dir,
            lds_epsilon,
            out,
        } => {
            let s = settings(common, vec![("mnist_dir", mnist_dir), ("lds_epsilon", lds_epsilon)])?;
            commands::eval(&s, &checkpoint, out.as_deref())
        }
        Command::Boundary {
            common,
            checkpoint,
            resolution,
            lds_epsilon,
            out,
        } => {
            let s = settings(common, vec![("resolution", resolution), ("lds_epsilon", lds_epsilon)])?;
            commands::boundary(&s, &checkpoint, &out)
        }
        Command::Grid {
            common,
            data,
            schedule,
            methods,
            values,
            adv_mode,
            selection_reps,
            final_reps,
            threads,
            out,
        } => {
            let mut flags = data.flags();
            flags.extend(schedule.flags());
            flags.extend([
                ("methods", methods),
                ("values", values),
                ("adv_mode", adv_mode),
                ("selection_reps", selection_reps),
                ("final_reps", final_reps),
                ("threads", threads),
            ]);
            commands::grid(&settings(common, flags)?, &out)
        }
        Command::AuditCost {
            common,
            ip,
            epsilon,
            batch,
            reg_batch,
            hidden,
        } => {
            let flags = vec![
                ("ip", ip),
                ("epsilon", epsilon),
                ("batch", batch),
                ("reg_batch", reg_batch),
                ("hidden", hidden),
            ];
            commands::audit_cost(&settings(common, flags)?)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Numeric(_) => 3,
        Error::Dimension(_) | Error::Data(_) | Error::Format { .. } | Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
