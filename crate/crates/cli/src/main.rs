use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ictree::data::{load_csv, load_schema, save_csv, split, synth_robot_grab, synth_three_gaussians, synth_two_uniforms, write_csv, Dataset};
use ictree::inference::{conditional_moments, marginal_probability, mpe, DEFAULT_MAX_RETRIES};
use ictree::persist::{load_model, save_model};
use ictree::{Hyperparams, Result};
use ictree_cli::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ictree", version, about = "Train and query IC-Tree density models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON column schema; fixes kinds and category order.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    max_depth: Option<usize>,
    /// Quantile intervals per leaf component.
    #[arg(long, default_value_t = 16)]
    resolution: usize,
    #[arg(long, default_value_t = 1000)]
    ica_iters: usize,
    /// Axis-aligned splits and identity leaf transforms.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Share of rows held out for scoring.
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
}

impl LearnArgs {
    fn hyperparams(&self, min_leaf: f64) -> Hyperparams {
        Hyperparams {
            min_samples_leaf_fraction: min_leaf,
            max_depth: self.max_depth,
            qpd_resolution: self.resolution,
            ica_max_iter: self.ica_iters,
            baseline_mode: self.baseline,
            ..Hyperparams::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Synth {
    RobotGrab,
    TwoUniforms,
    ThreeGaussians,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the training split and write it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value_t = 0.1)]
        min_leaf: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model per min-leaf fraction and report likelihoods.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        learn: LearnArgs,
        /// Min-leaf fractions; defaults to 0.9,0.4,0.2,0.1,0.05,0.01.
        #[arg(long, value_delimiter = ',')]
        min_leaf: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Also write the reports as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw rows from a model as CSV.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// JSON object or a file holding it.
        #[arg(long)]
        evidence: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
        max_retries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal probability or conditional moments given evidence.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evidence: String,
        /// Estimate P(evidence) instead of conditional moments.
        #[arg(long)]
        marginal: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<u32>,
        #[arg(short, long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Most probable region, optionally given evidence.
    Mpe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evidence: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(value_enum)]
        kind: Synth,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Object coordinate range for robot-grab.
        #[arg(long, default_value_t = 10.0)]
        range: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Density of two columns on a lattice, as x,y,density CSV.
    Grid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Cells per axis.
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        #[arg(long)]
        evidence: Option<String>,
        /// Monte Carlo draws for the remaining columns.
        #[arg(short, long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_data(args: &DataArgs) -> Result<(String, Dataset)> {
    let spec = args.schema.as_ref().map(load_schema).transpose()?;
    let data = load_csv(&args.data, spec.as_deref())?;
    let name = args
        .data
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, data))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_text<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output") + "\n"
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            data,
            learn,
            min_leaf,
            out,
        } => {
            let (name, d) = load_data(&data)?;
            let (train, test) = split(&d, learn.test_fraction, learn.seed)?;
            let (report, model) = evaluate(&name, &train, &test, &learn.hyperparams(min_leaf), learn.seed)?;
            save_model(&model, &out)?;
            print!("{}", format_table(&[report]));
        }
        Command::Eval {
            data,
            learn,
            min_leaf,
            format,
            out,
        } => {
            let (name, d) = load_data(&data)?;
            let fractions = if min_leaf.is_empty() { DEFAULT_SWEEP.to_vec() } else { min_leaf };
            let reports = sweep(&name, &d, &learn.hyperparams(0.1), &fractions, learn.test_fraction, learn.seed)?;
            match format {
                Format::Table => print!("{}", format_table(&reports)),
                Format::Json => print!("{}", json_text(&reports)),
            }
            if let Some(p) = out {
                std::fs::write(p, json_text(&reports))?;
            }
        }
        Command::Sample {
            model,
            n,
            seed,
            evidence,
            max_retries,
            out,
        } => {
            let model = load_model(&model)?;
            let ev = evidence.map(|e| read_evidence(&e, model.columns())).transpose()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, lost) = sample_rows(&model, n, ev.as_ref(), max_retries, &mut rng)?;
            let mut buf = Vec::new();
            write_csv(model.columns(), &rows, &mut buf)?;
            emit(out.as_ref(), &String::from_utf8(buf).expect("CSV is UTF-8"))?;
            if lost > 0 {
                eprintln!("{lost} draws discarded");
            }
        }
        Command::Infer {
            model,
            evidence,
            marginal,
            orders,
            n,
            seed,
            out,
        } => {
            let model = load_model(&model)?;
            let ev = read_evidence(&evidence, model.columns())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let text = if marginal {
                json_text(&marginal_probability(&model, &ev, n, &mut rng)?)
            } else {
                json_text(&conditional_moments(&model, &ev, &orders, n, &mut rng)?)
            };
            emit(out.as_ref(), &text)?;
        }
        Command::Mpe { model, evidence, out } => {
            let model = load_model(&model)?;
            let ev = evidence.map(|e| read_evidence(&e, model.columns())).transpose()?;
            let r = mpe(&model, ev.as_ref())?;
            emit(out.as_ref(), &json_text(&mpe_json(&model, &r)))?;
        }
        Command::Synth {
            kind,
            n,
            seed,
            range,
            out,
        } => {
            let d = match kind {
                Synth::RobotGrab => synth_robot_grab(n, range, seed)?,
                Synth::TwoUniforms => synth_two_uniforms(n, seed)?,
                Synth::ThreeGaussians => synth_three_gaussians(n, seed)?,
            };
            match out {
                Some(p) => save_csv(&d, p)?,
                None => write_csv(d.columns(), d.rows(), std::io::stdout().lock())?,
            }
        }
        Command::Grid {
            model,
            x,
            y,
            resolution,
            evidence,
            n,
            seed,
            out,
        } => {
            let model = load_model(&model)?;
            let cx = column_by_name(model.columns(), &x)?;
            let cy = column_by_name(model.columns(), &y)?;
            let ev = evidence.map(|e| read_evidence(&e, model.columns())).transpose()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cells = density_grid(&model, cx, cy, resolution, ev.as_ref(), n, &mut rng)?;
            emit(out.as_ref(), &grid_csv(&cells))?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(main_with(std::env::args_os()) as u8)
}
