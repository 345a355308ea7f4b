use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nef_core::config::{keys_help, PipelineConfig};
use nef_core::pipeline::{self, Layout};
use nef_core::Error;

/// Neural edge fields: synthetic multi-view edge maps to 3D curves.
#[derive(Parser, Debug)]
#[command(name = "nef", version)]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, env = "NEF_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key (repeatable); wins over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic multi-view edge-map dataset.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an edge field on a dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for checkpoint, optimizer state and loss history.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Threshold a trained field into a PLY point cloud.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit cubic Bezier curves to a PLY point cloud.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        points: PathBuf,
        /// Curve file; dense samples go next to it as .ply.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a prediction (PLY or curve file) with ground truth (PLY,
    /// curve file, scene.json or dataset directory).
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Match radius; shorthand for `--set eval.tau=X`.
        #[arg(long)]
        tau: Option<f64>,
        /// Also write metrics.txt and metrics.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run synth, train, extract, fit and eval into one directory.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the field's edge and depth maps for one dataset view.
    DebugRender {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        view: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_validation() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 1, message }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path).map_err(|e| match e {
            Error::Io { .. } => Failure::from(e),
            other => usage(other.to_string()),
        })?,
        None => PipelineConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| usage(format!("cannot configure {k} workers: {e}")))?;
    }
    match cli.command {
        Command::Synth { cfg, out } => {
            let c = load_config(&cfg)?;
            pipeline::cmd_synth(&c, &out, cfg.force)?;
        }
        Command::Train {
            cfg,
            dataset,
            out,
            resume,
        } => {
            let c = load_config(&cfg)?;
            pipeline::cmd_train(&dataset, &c, &out, resume, cfg.force, |_| {})?;
        }
        Command::Extract { cfg, checkpoint, out } => {
            let c = load_config(&cfg)?;
            let cloud = pipeline::cmd_extract(&checkpoint, &c, &out, cfg.force)?;
            println!("points={}", cloud.len());
        }
        Command::Fit { cfg, points, out } => {
            let c = load_config(&cfg)?;
            let curves = pipeline::cmd_fit(&points, &c, &out, cfg.force)?;
            println!("curves={}", curves.len());
        }
        Command::Eval {
            cfg,
            pred,
            gt,
            tau,
            out,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(t) = tau {
                c.set("eval.tau", &t.to_string())?;
                c.validate()?;
            }
            let m = pipeline::cmd_eval(&pred, &gt, &c)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::from(Error::Io { path: dir.clone(), source: e }))?;
                nef_core::evalmetrics::write_metrics(&dir, "metrics", &m)?;
            }
            print!("{}", m.report());
        }
        Command::Pipeline { cfg, out } => {
            let c = load_config(&cfg)?;
            let report = pipeline::cmd_pipeline(&c, &Layout::new(out), cfg.force, |_| {})?;
            println!("[cloud]");
            print!("{}", report.cloud.report());
            if let Some(m) = report.curves {
                println!("[curves]");
                print!("{}", m.report());
            }
        }
        Command::DebugRender {
            cfg,
            checkpoint,
            dataset,
            view,
            out,
        } => {
            let c = load_config(&cfg)?;
            for f in pipeline::cmd_debug_render(&checkpoint, &dataset, view, &c, &out, cfg.force)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn command() -> clap::Command {
    let help = keys_help();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let h = help.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(h));
    }
    cmd
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
